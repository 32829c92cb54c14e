use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::run::{Policy, TrajectoryRecord};
use crate::error::ReportError;
use crate::filters::FilterKind;
use crate::planner::{AdaptiveRule, AlphaSpec, RolloutPolicy};
use crate::stats;

/// One row of the results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub strategy: String,
    pub filter: String,
    pub rollout: String,
    pub n_search: Option<usize>,
    pub particles: Option<usize>,
    pub alpha: String,
    /// Mean trajectory cost.
    pub value: f64,
    /// `1.96 σ̂ / √n`; 0 when `n = 1`.
    pub half_width: f64,
    pub duration_mean_s: f64,
    pub duration_sd_s: f64,
    pub n: usize,
    pub death_rate: f64,
    pub mean_pfs_days: f64,
    pub mean_treatment_days: f64,
    pub mean_visits: f64,
    /// Set when `n = 1` and the half-width carries no information.
    pub degenerate: bool,
}

fn describe(policy: &Policy) -> (String, String, Option<usize>, Option<usize>, String) {
    match policy {
        Policy::Pomcp { filter, planner } => {
            let filter = match filter {
                FilterKind::Particle => "particle",
                FilterKind::Conditional => "conditional",
            };
            let rollout = match planner.rollout {
                RolloutPolicy::Mode => "mode",
                RolloutPolicy::Uniform => "uniform",
            };
            let alpha = match planner.alpha {
                AlphaSpec::Fixed(a) => a.to_string(),
                AlphaSpec::Adaptive(AdaptiveRule::Entropy) => "entropy".into(),
                AlphaSpec::Adaptive(AdaptiveRule::RevEntropy) => "rev-entropy".into(),
                AlphaSpec::Adaptive(AdaptiveRule::RevEntropy2) => "rev-entropy-2".into(),
            };
            (
                filter.into(),
                rollout.into(),
                Some(planner.n_search),
                Some(planner.particles),
                alpha,
            )
        }
        Policy::ModeOracle => (
            "none".into(),
            "mode-oracle".into(),
            None,
            None,
            String::new(),
        ),
        Policy::UniformRandom => (
            "none".into(),
            "uniform-random".into(),
            None,
            None,
            String::new(),
        ),
    }
}

/// Aggregates a batch of records.
///
/// # Panics
/// If `records` is empty.
pub fn summarize(strategy: &str, policy: &Policy, records: &[TrajectoryRecord]) -> EvalSummary {
    assert!(!records.is_empty(), "cannot summarize an empty batch");
    let costs: Vec<f64> = records.iter().map(|r| r.total_cost).collect();
    let runtimes: Vec<f64> = records.iter().map(|r| r.runtime_s).collect();
    let pick =
        |f: fn(&TrajectoryRecord) -> f64| stats::mean(&records.iter().map(f).collect::<Vec<_>>());
    let (filter, rollout, n_search, particles, alpha) = describe(policy);
    EvalSummary {
        strategy: strategy.to_string(),
        filter,
        rollout,
        n_search,
        particles,
        alpha,
        value: stats::mean(&costs),
        half_width: stats::half_width(&costs),
        duration_mean_s: stats::mean(&runtimes),
        duration_sd_s: stats::std_dev(&runtimes),
        n: records.len(),
        death_rate: pick(|r| if r.died() { 1.0 } else { 0.0 }),
        mean_pfs_days: pick(|r| r.pfs_days),
        mean_treatment_days: pick(|r| r.treatment_days),
        mean_visits: pick(|r| r.n_visits() as f64),
        degenerate: records.len() == 1,
    }
}

/// Reference values of the radar normalization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Baselines {
    pub horizon: f64,
    pub random_death_rate: f64,
    pub random_cost: f64,
    pub v0: f64,
}

/// Five radar axes; smaller is better on every axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizedMetrics {
    pub death: f64,
    pub pfs: f64,
    pub treatment: f64,
    pub visits: f64,
    pub cost: f64,
}

pub const RADAR_AXES: [&str; 5] = ["death", "pfs", "treatment", "visits", "cost"];

const MIN_VISITS: f64 = 40.0;
const MAX_VISITS: f64 = 160.0;

/// Death rate over the random-strategy rate, `1 − PFS/H`, treatment time
/// over `H`, `(N − 40)/120` and `(C − v0)/(C_random − v0)`, each averaged
/// over `records`.
pub fn normalize(
    records: &[TrajectoryRecord],
    baselines: &Baselines,
) -> Result<NormalizedMetrics, ReportError> {
    if records.is_empty() {
        return Err(ReportError::Normalization("no trajectories".into()));
    }
    let cost_span = baselines.random_cost - baselines.v0;
    if cost_span == 0.0 || !cost_span.is_finite() {
        return Err(ReportError::Normalization(
            "random-strategy cost equals v0".into(),
        ));
    }
    if baselines.random_death_rate.is_nan() || baselines.random_death_rate <= 0.0 {
        return Err(ReportError::Normalization(
            "random-strategy death rate must be positive".into(),
        ));
    }
    if baselines.horizon.is_nan() || baselines.horizon <= 0.0 {
        return Err(ReportError::Normalization(
            "horizon must be positive".into(),
        ));
    }
    let n = records.len() as f64;
    let avg = |f: &dyn Fn(&TrajectoryRecord) -> f64| records.iter().map(f).sum::<f64>() / n;
    let h = baselines.horizon;
    Ok(NormalizedMetrics {
        death: avg(&|r| if r.died() { 1.0 } else { 0.0 }) / baselines.random_death_rate,
        pfs: avg(&|r| 1.0 - r.pfs_days / h),
        treatment: avg(&|r| r.treatment_days / h),
        visits: avg(&|r| (r.n_visits() as f64 - MIN_VISITS) / (MAX_VISITS - MIN_VISITS)),
        cost: avg(&|r| (r.total_cost - baselines.v0) / cost_span),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadarEntry {
    pub strategy: String,
    pub metrics: NormalizedMetrics,
}

/// Radar-chart input: one five-axis point per strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadarReport {
    pub axes: Vec<String>,
    pub baselines: Baselines,
    /// `"config"` when `v0` was supplied, `"unset"` when it defaulted to 0.
    pub v0_source: String,
    pub strategies: Vec<RadarEntry>,
}

impl RadarReport {
    pub fn new(baselines: Baselines, v0_supplied: bool, strategies: Vec<RadarEntry>) -> Self {
        Self {
            axes: RADAR_AXES.iter().map(|s| s.to_string()).collect(),
            baselines,
            v0_source: if v0_supplied { "config" } else { "unset" }.into(),
            strategies,
        }
    }
}

/// Writes `summary.csv` and, when given, `radar.json` under `dir`.
pub fn emit_report(
    dir: &Path,
    summaries: &[EvalSummary],
    radar: Option<&RadarReport>,
) -> Result<Vec<PathBuf>, ReportError> {
    if summaries.is_empty() || radar.is_some_and(|r| r.strategies.is_empty()) {
        return Err(ReportError::NoStrategies);
    }
    fs::create_dir_all(dir)?;
    let csv_path = dir.join("summary.csv");
    let mut writer = csv::Writer::from_path(&csv_path)?;
    for s in summaries {
        writer.serialize(s)?;
    }
    writer.flush()?;
    let mut written = vec![csv_path];
    if let Some(radar) = radar {
        let path = dir.join("radar.json");
        fs::write(&path, serde_json::to_vec_pretty(radar)?)?;
        written.push(path);
    }
    Ok(written)
}

pub fn read_summaries_csv(path: &Path) -> Result<Vec<EvalSummary>, ReportError> {
    let mut reader = csv::Reader::from_path(path)?;
    reader
        .deserialize()
        .map(|r| r.map_err(ReportError::from))
        .collect()
}
