//! Argument parsing and subcommand handlers.

use std::fs;
use std::io::Write;
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use homectx_core::bus::Bus;
use homectx_core::cbr::{load_case_base, CaseBase, CaseBaseLayout, SimilarityConfig};
use homectx_core::clock::{Stamp, VirtualClock};
use homectx_core::eca::parse_file;
use homectx_core::services::ServiceManager;
use homectx_core::store::{ContextStore, ProviderId, ProviderKind, Triple, TriplePattern};
use homectx_core::task::TaskLibrary;
use homectx_core::value::Value;
use homectx_core::zone::ZoneMap;
use homectx_sim::bench::{bench_reasoner, BenchSpec};
use homectx_sim::devices::{install, Registry};
use homectx_sim::scenario::{load_snapshot, run_file, RunOptions, Scenario};

#[derive(Debug, Parser)]
#[command(
    name = "homectx",
    version,
    about = "Task-oriented smart-home middleware simulator",
    arg_required_else_help = true
)]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// Seed for device fault injection and benchmark case bases.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Acceptance threshold for inference.
    #[arg(long, global = true)]
    pub theta: Option<f64>,
    /// Write every bus message to this file.
    #[arg(long, global = true)]
    pub bus_log: Option<PathBuf>,
    /// Write the execution trace to this file instead of stdout.
    #[arg(long, global = true)]
    pub trace: Option<PathBuf>,
    /// JSON array of zone names.
    #[arg(long, global = true)]
    pub zones: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Replay a scenario; exits 0 iff its assertions pass.
    Run { scenario: PathBuf },
    /// Time retrieval over random case bases and print CSV.
    Bench {
        /// Case-base sizes, inclusive.
        #[arg(long, default_value = "1..20", value_parser = parse_range)]
        cases: RangeInclusive<usize>,
        /// Attributes per case, inclusive.
        #[arg(long, default_value = "3..10", value_parser = parse_range)]
        attrs: RangeInclusive<usize>,
        /// Timed batches per cell.
        #[arg(long, default_value_t = 15)]
        reps: usize,
        /// Retrievals per timed batch.
        #[arg(long, default_value_t = 100)]
        batch: usize,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Infer the task for a context snapshot; exits 0 iff accepted.
    Infer {
        /// JSON array of {subject, predicate, object}.
        #[arg(long)]
        snapshot: PathBuf,
        /// Case base CSV.
        #[arg(long)]
        cases: Option<PathBuf>,
        /// Task library supplying templates and attribute settings.
        #[arg(long)]
        tasks: Option<PathBuf>,
    },
    /// Parse a rule file and pretty-print it.
    Parse { file: PathBuf },
    /// Check rule, scenario, task, registry, snapshot and case files.
    Validate {
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
    /// Inspect a device registry.
    Services {
        #[command(subcommand)]
        action: ServicesCmd,
    },
    /// Match facts in a store dump; blank positions are wildcards.
    Query {
        /// Store dump CSV.
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        subject: Option<String>,
        #[arg(long)]
        predicate: Option<String>,
        #[arg(long)]
        object: Option<String>,
    },
}

#[derive(Debug, Subcommand)]
pub enum ServicesCmd {
    /// List every registered provider.
    List {
        /// Device registry JSON.
        #[arg(long)]
        registry: PathBuf,
    },
    /// Select a provider of a type for a user location.
    Query {
        /// Device registry JSON.
        #[arg(long)]
        registry: PathBuf,
        /// Abstract service type.
        #[arg(long = "type")]
        service_type: String,
        /// Location entity or zone of the user.
        #[arg(long)]
        location: Option<String>,
    },
}

/// `a..b` or `a..=b` (both inclusive) or a single number.
fn parse_range(s: &str) -> Result<RangeInclusive<usize>, String> {
    let num = |p: &str| p.trim().parse::<usize>().map_err(|e| format!("`{p}`: {e}"));
    match s.split_once("..") {
        Some((a, b)) => Ok(num(a)?..=num(b.trim_start_matches('='))?),
        None => {
            let n = num(s)?;
            Ok(n..=n)
        }
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn zones(global: &Global) -> Result<Option<Vec<String>>> {
    global
        .zones
        .as_ref()
        .map(|p| serde_json::from_str(&read(p)?).with_context(|| format!("parsing zones {}", p.display())))
        .transpose()
}

fn layout(global: &Global) -> Result<CaseBaseLayout> {
    let mut l = CaseBaseLayout::default();
    if let Some(z) = zones(global)? {
        l.zones = ZoneMap::new(z);
    }
    Ok(l)
}

fn emit(lines: &[String], path: Option<&Path>) -> Result<()> {
    let mut text = lines.join("\n");
    if !text.is_empty() {
        text.push('\n');
    }
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

pub fn dispatch(cli: Cli) -> Result<ExitCode> {
    let g = &cli.global;
    match &cli.command {
        Command::Run { scenario } => {
            let opts = RunOptions { seed: g.seed, theta: g.theta, zones: zones(g)?, bus_log: g.bus_log.is_some() };
            let report = run_file(scenario, &opts)?;
            emit(&report.trace, g.trace.as_deref())?;
            if let Some(p) = &g.bus_log {
                emit(&report.bus_log, Some(p))?;
            }
            println!("--- actuator log ---");
            emit(&report.actuator_lines(), None)?;
            for e in &report.errors {
                println!("kernel error: {e}");
            }
            match report.failures.first() {
                None => {
                    println!("PASS {} ({} assertions)", report.name, Scenario::load(scenario)?.assertions.len());
                    Ok(ExitCode::SUCCESS)
                }
                Some(first) => {
                    for f in &report.failures {
                        println!("FAIL {}: {f}", report.name);
                    }
                    eprintln!("{}: {first}", report.name);
                    Ok(ExitCode::from(1))
                }
            }
        }
        Command::Bench { cases, attrs, reps, batch, out } => {
            let spec = BenchSpec {
                cases: cases.clone(),
                attrs: attrs.clone(),
                reps: *reps,
                batch: *batch,
                seed: g.seed.unwrap_or(0),
            };
            let report = bench_reasoner(&spec)?;
            match out {
                Some(p) => fs::write(p, report.csv()).with_context(|| format!("writing {}", p.display()))?,
                None => print!("{}", report.csv()),
            }
            if let Some(fit) = report.fit {
                eprintln!(
                    "fit: mean_ms = {:.3e} + {:.3e} * cases*attrs, R^2 = {:.4}",
                    fit.intercept, fit.slope, fit.r2
                );
            }
            eprintln!(
                "monotone: {}, elapsed {:.0} ms",
                if report.monotone() { "yes" } else { "no" },
                report.elapsed_ms
            );
            for v in &report.violations {
                eprintln!("  drop {v}");
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Infer { snapshot, cases, tasks } => infer(g, snapshot, cases.as_deref(), tasks.as_deref()),
        Command::Parse { file } => {
            let parsed = parse_file(&read(file)?).map_err(|e| anyhow::anyhow!("{}: {e}", file.display()))?;
            std::io::stdout().write_all(parsed.to_string().as_bytes())?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate { files } => {
            let mut bad = 0;
            for f in files {
                match validate(f, g) {
                    Ok(what) => println!("ok {} ({what})", f.display()),
                    Err(e) => {
                        bad += 1;
                        println!("invalid {}: {e:#}", f.display());
                    }
                }
            }
            Ok(if bad == 0 { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::Services { action } => services(g, action),
        Command::Query { store, subject, predicate, object } => {
            let bus = Bus::new(VirtualClock::new(Stamp::ZERO));
            let st = ContextStore::new(bus);
            st.load_csv(fs::File::open(store).with_context(|| format!("opening {}", store.display()))?)?;
            let object = object.as_deref().map(Value::parse_literal).transpose()?;
            let pattern = TriplePattern::new(subject.as_deref(), predicate.as_deref(), object)?;
            let lines: Vec<String> = st
                .query_pattern(&pattern)
                .iter()
                .map(|t| format!("{} {} {} ({}, {})", t.subject, t.predicate, t.object, t.provider, t.stamp))
                .collect();
            emit(&lines, None)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn infer(g: &Global, snapshot: &Path, cases: Option<&Path>, tasks: Option<&Path>) -> Result<ExitCode> {
    let layout = layout(g)?;
    let snap = load_snapshot(snapshot, &layout.multi_valued)?;
    let (templates, mut cfg) = match tasks {
        Some(t) => {
            let lib = TaskLibrary::load_definitions(t)?;
            CaseBase::from_library(&lib, layout.clone())
        }
        None => (CaseBase::new(layout.clone()), SimilarityConfig::default()),
    };
    let mut base = match cases {
        Some(c) => load_case_base(c, layout)?,
        None if tasks.is_some() => templates,
        None => bail!("infer needs --cases or --tasks"),
    };
    if let Some(theta) = g.theta {
        cfg = cfg.with_theta(theta);
    }
    let result = base.retrieve_best(&snap, &cfg);
    println!("zone: {}", result.zone.as_deref().unwrap_or("*"));
    for r in &result.ranked {
        println!("case {} -> {} S={:.4} usedtime={}", r.case_id, r.task, r.similarity, r.usedtime);
    }
    match result.best() {
        Some(b) if result.accepted => {
            println!("accepted {} (S={:.4} >= {})", b.task, b.similarity, cfg.theta);
            Ok(ExitCode::SUCCESS)
        }
        Some(b) => {
            println!("rejected {} (S={:.4} < {})", b.task, b.similarity, cfg.theta);
            Ok(ExitCode::from(1))
        }
        None => {
            println!("no candidate");
            Ok(ExitCode::from(1))
        }
    }
}

fn validate(path: &Path, g: &Global) -> Result<&'static str> {
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or_default();
    match ext {
        "eca" => {
            parse_file(&read(path)?)?;
            Ok("rules")
        }
        "scn" => {
            Scenario::load(path)?;
            Ok("scenario")
        }
        "csv" => {
            load_case_base(path, layout(g)?)?;
            Ok("case base")
        }
        "json" => {
            let v: serde_json::Value = serde_json::from_str(&read(path)?)?;
            if v.get("tasks").is_some() {
                TaskLibrary::load_definitions(path)?;
                Ok("task library")
            } else if v.get("devices").is_some() {
                Registry::load(path)?;
                Ok("service registry")
            } else if v.is_array() {
                load_snapshot(path, &layout(g)?.multi_valued)?;
                Ok("snapshot")
            } else {
                bail!("unrecognised JSON document")
            }
        }
        other => bail!("unknown file kind `.{other}`"),
    }
}

fn services(g: &Global, action: &ServicesCmd) -> Result<ExitCode> {
    let registry_path = match action {
        ServicesCmd::List { registry } | ServicesCmd::Query { registry, .. } => registry,
    };
    let layout = layout(g)?;
    let bus = Bus::new(VirtualClock::new(Stamp::ZERO));
    let manager = ServiceManager::new(bus.clone()).with_zones(layout.zones.clone(), layout.location_predicates.clone());
    install(&Registry::load(registry_path)?, &manager, &bus, g.seed.unwrap_or(0))?;
    match action {
        ServicesCmd::List { .. } => {
            let lines: Vec<String> = manager
                .list()
                .into_iter()
                .map(|d| {
                    format!(
                        "{} type={} entity={} zone={} state={} methods={}",
                        d.id,
                        d.service_type,
                        d.entity,
                        d.zone.as_deref().unwrap_or("-"),
                        d.state,
                        d.capabilities.join(",")
                    )
                })
                .collect();
            emit(&lines, None)?;
            Ok(ExitCode::SUCCESS)
        }
        ServicesCmd::Query { service_type, location, .. } => {
            let store = Arc::new(ContextStore::new(bus));
            let provider = ProviderId::new("cli", ProviderKind::SoftwareSim);
            store.provider_join(provider.clone())?;
            if let Some(loc) = location {
                store.assert_triple(Triple::new(
                    "User",
                    &layout.location_predicates[0],
                    Value::parse_literal(loc)?,
                    &provider,
                    Stamp::ZERO,
                ))?;
            }
            let b = manager.discover_and_select(service_type, &store.snapshot_all())?;
            println!("{} ({})", b.descriptor.id, b.rationale);
            Ok(ExitCode::SUCCESS)
        }
    }
}
