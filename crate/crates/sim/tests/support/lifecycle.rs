//! Provider departure seen from the store and from the reasoner.

use std::path::Path;

use homectx_core::kernel::Kernel;
use homectx_core::store::{ProviderId, TriplePattern};
use homectx_sim::scenario::{build_kernel, parse_stamp, Action, RunOptions, Scenario};

/// Kernel with every asserted fact of `scn` in place, providers in
/// `skip` never contributing.
fn kernel_with_facts(scn: &Scenario, skip: Option<&str>) -> Result<Kernel, String> {
    let mut kernel = build_kernel(scn, &RunOptions::default()).map_err(|e| e.to_string())?;
    for step in &scn.timeline {
        let Action::Assert { subject, predicate, object, provider } = &step.action else { continue };
        if Some(provider.as_str()) == skip {
            continue;
        }
        let at = parse_stamp(&step.at).map_err(|e| e.to_string())?;
        kernel.advance_to(at).map_err(|e| e.to_string())?;
        let id = owner(&kernel, provider)?;
        kernel.assert_fact(subject, predicate, object.clone(), &id).map_err(|e| e.to_string())?;
    }
    Ok(kernel)
}

fn owner(kernel: &Kernel, provider: &str) -> Result<ProviderId, String> {
    kernel
        .store()
        .providers()
        .into_iter()
        .find(|p| p.id == provider)
        .ok_or_else(|| format!("provider `{provider}` never joined"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Outcome {
    pub providers: usize,
    /// Departures after which some case scored differently.
    pub changed: usize,
}

/// Similarity per case, sorted by case id.
fn scores(kernel: &mut Kernel) -> Vec<(u64, String)> {
    let mut v: Vec<_> =
        kernel.infer().ranked.iter().map(|r| (r.case_id, format!("{}:{:.9}", r.task, r.similarity))).collect();
    v.sort();
    v
}

/// For every provider that asserts facts in the scenario: after it leaves,
/// no triple of it survives and inference matches a run in which it never
/// contributed.
pub fn check(scenario: &Path) -> Result<Outcome, String> {
    let scn = Scenario::load(scenario).map_err(|e| e.to_string())?;
    let mut contributors: Vec<&str> = scn
        .timeline
        .iter()
        .filter_map(|s| match &s.action {
            Action::Assert { provider, .. } => Some(provider.as_str()),
            _ => None,
        })
        .collect();
    contributors.sort_unstable();
    contributors.dedup();

    let mut changed = 0;
    for &gone in &contributors {
        let mut kernel = kernel_with_facts(&scn, None)?;
        let before = kernel.store().snapshot_all();
        let full = scores(&mut kernel);

        let removed = kernel.leave_provider(gone).map_err(|e| e.to_string())?;
        if removed == 0 {
            return Err(format!("{gone}: leave removed nothing"));
        }
        if let Some(t) = kernel.store().all_triples().iter().find(|t| t.provider.id == gone) {
            return Err(format!("{gone}: stale triple {} {} {}", t.subject.as_str(), t.predicate, t.object));
        }
        for t in kernel_with_facts(&scn, None)?.store().all_triples() {
            let q =
                TriplePattern::new(Some(t.subject.as_str()), Some(&t.predicate), None).map_err(|e| e.to_string())?;
            if kernel.store().query_pattern(&q).iter().any(|h| h.provider.id == gone) {
                return Err(format!("{gone}: query still answers from it"));
            }
        }

        let mut oracle = kernel_with_facts(&scn, Some(gone))?;
        let reduced = kernel.store().snapshot_all();
        if reduced != oracle.store().snapshot_all() {
            return Err(format!("{gone}: snapshot differs from one built without it"));
        }
        if reduced == before {
            return Err(format!("{gone}: snapshot unchanged by leave"));
        }
        let after = scores(&mut kernel);
        let expected = scores(&mut oracle);
        if after != expected {
            return Err(format!("{gone}: inference {after:?}, expected {expected:?}"));
        }
        changed += usize::from(after != full);
    }
    Ok(Outcome { providers: contributors.len(), changed })
}
