//! Reasoner latency benchmark over random numeric case bases.

use std::hint::black_box;
use std::ops::RangeInclusive;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use homectx_core::cbr::{AttrSim, Case, CaseBase, CaseBaseLayout, ProblemPair, SimilarityConfig};
use homectx_core::snapshot::{AttrKey, ContextSnapshot, SnapshotEntry};
use homectx_core::task::{AttrKind, TaskId};
use homectx_core::value::Value;

use crate::SimError;

pub const CSV_HEADER: &str = "cases,attrs,mean_ms,stdev_ms";

#[derive(Debug, Clone, PartialEq)]
pub struct BenchSpec {
    pub cases: RangeInclusive<usize>,
    pub attrs: RangeInclusive<usize>,
    /// Timed samples per cell.
    pub reps: usize,
    /// Retrievals per sample.
    pub batch: usize,
    pub seed: u64,
}

impl Default for BenchSpec {
    fn default() -> Self {
        BenchSpec { cases: 1..=20, attrs: 3..=10, reps: 15, batch: 100, seed: 0 }
    }
}

impl BenchSpec {
    pub fn validate(&self) -> Result<(), SimError> {
        let positive = |r: &RangeInclusive<usize>| *r.start() >= 1 && r.start() <= r.end();
        if !positive(&self.cases) || !positive(&self.attrs) {
            return Err(SimError::Bench("case and attribute ranges must be non-empty and start at 1 or more".into()));
        }
        if self.reps < 2 || self.batch == 0 {
            return Err(SimError::Bench("need at least 2 repetitions and a positive batch".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchRow {
    pub cases: usize,
    pub attrs: usize,
    /// Mean latency of one retrieval.
    pub mean_ms: f64,
    pub stdev_ms: f64,
    pub reps: usize,
}

impl BenchRow {
    pub fn stderr_ms(&self) -> f64 {
        self.stdev_ms / (self.reps as f64).sqrt()
    }

    pub fn csv(&self) -> String {
        format!("{},{},{:.6},{:.6}", self.cases, self.attrs, self.mean_ms, self.stdev_ms)
    }
}

/// Least-squares line `y = intercept + slope·x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Option<LinearFit> {
    let n = xs.len();
    if n < 2 || n != ys.len() {
        return None;
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs.iter().zip(ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let r2 = if syy == 0.0 { 1.0 } else { 1.0 - sse / syy };
    Some(LinearFit { slope, intercept, r2 })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    /// Mean latency against cases × attributes.
    pub fit: Option<LinearFit>,
    /// Adjacent cells whose latency drops by more than two standard errors
    /// when cases or attributes grow.
    pub violations: Vec<String>,
    pub elapsed_ms: f64,
}

impl BenchReport {
    pub fn monotone(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.csv());
            out.push('\n');
        }
        out
    }
}

const SUBJECT: &str = "Sensor";
const DOM: f64 = 100.0;

fn attr_key(j: usize) -> AttrKey {
    AttrKey::new(SUBJECT, &format!("a{j}"))
}

/// A random case base of `cases` cases over `attrs` numeric attributes, its
/// similarity settings, and a random query snapshot.
pub fn random_instance(
    rng: &mut impl Rng,
    cases: usize,
    attrs: usize,
) -> (CaseBase, SimilarityConfig, ContextSnapshot) {
    let mut base = CaseBase::new(CaseBaseLayout::default());
    let mut cfg = SimilarityConfig::default();
    for j in 0..attrs {
        let sim = AttrSim { kind: AttrKind::Numeric, dom: DOM, weight: rng.gen_range(0.1..1.0) };
        cfg.set(&attr_key(j).to_string(), sim);
    }
    for i in 0..cases {
        let problem =
            (0..attrs).map(|j| ProblemPair::new(attr_key(j), Value::number(rng.gen_range(0.0..DOM).round()))).collect();
        let solution = TaskId::parse(&format!("1.{}", i + 1)).expect("valid id");
        base.insert(Case { case_id: i as u64 + 1, problem, solution, usedtime: rng.gen_range(0..5) });
    }
    let entries = (0..attrs)
        .map(|j| {
            let key = attr_key(j);
            SnapshotEntry { name: key.to_string(), key, value: Some(Value::number(rng.gen_range(0.0..DOM).round())) }
        })
        .collect();
    (base, cfg, ContextSnapshot::new(entries))
}

fn mean_stdev(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, var.sqrt())
}

/// Mean time of one retrieval over `batch` calls.
fn time_batch(base: &mut CaseBase, cfg: &SimilarityConfig, snapshot: &ContextSnapshot, batch: usize) -> f64 {
    let start = Instant::now();
    for _ in 0..batch {
        black_box(base.retrieve_best(black_box(snapshot), cfg));
    }
    start.elapsed().as_secs_f64() * 1e3 / batch as f64
}

fn drop_beyond_noise(a: &BenchRow, b: &BenchRow) -> bool {
    let tol = 2.0 * (a.stderr_ms().powi(2) + b.stderr_ms().powi(2)).sqrt();
    b.mean_ms < a.mean_ms - tol
}

/// Times `retrieve_best` on every (cases, attrs) cell of the grid.
pub fn bench_reasoner(spec: &BenchSpec) -> Result<BenchReport, SimError> {
    spec.validate()?;
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut cells = Vec::new();
    for attrs in spec.attrs.clone() {
        for cases in spec.cases.clone() {
            let (base, cfg, snapshot) = random_instance(&mut rng, cases, attrs);
            cells.push((cases, attrs, base, cfg, snapshot, Vec::with_capacity(spec.reps)));
        }
    }
    // Each repetition sweeps every cell in a fresh order, so slow drift of
    // the host spreads over all cells instead of biasing a few.
    let mut order: Vec<usize> = (0..cells.len()).collect();
    for (_, _, base, cfg, snapshot, _) in cells.iter_mut() {
        black_box(base.retrieve_best(snapshot, cfg));
    }
    for _ in 0..spec.reps {
        order.shuffle(&mut rng);
        for &i in &order {
            let (_, _, base, cfg, snapshot, samples) = &mut cells[i];
            let t = time_batch(base, cfg, snapshot, spec.batch);
            samples.push(t);
        }
    }
    let rows: Vec<BenchRow> = cells
        .iter()
        .map(|(cases, attrs, _, _, _, samples)| {
            let (mean_ms, stdev_ms) = mean_stdev(samples);
            BenchRow { cases: *cases, attrs: *attrs, mean_ms, stdev_ms, reps: spec.reps }
        })
        .collect();
    let cell = |c: usize, a: usize| rows.iter().find(|r| r.cases == c && r.attrs == a);
    let mut violations = Vec::new();
    for r in &rows {
        for next in [cell(r.cases + 1, r.attrs), cell(r.cases, r.attrs + 1)].into_iter().flatten() {
            if drop_beyond_noise(r, next) {
                violations.push(format!(
                    "({},{}) {:.6} ms -> ({},{}) {:.6} ms",
                    r.cases, r.attrs, r.mean_ms, next.cases, next.attrs, next.mean_ms
                ));
            }
        }
    }
    let xs: Vec<f64> = rows.iter().map(|r| (r.cases * r.attrs) as f64).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.mean_ms).collect();
    let fit = linear_fit(&xs, &ys);
    Ok(BenchReport { rows, fit, violations, elapsed_ms: started.elapsed().as_secs_f64() * 1e3 })
}
