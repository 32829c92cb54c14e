//! Closed-loop evaluation: a hidden patient evolves under the PDMP, a policy
//! sees only the observations, and per-trajectory metrics are aggregated
//! into summaries, normalized radar metrics and report files.

mod agent;
mod report;
mod run;

pub use agent::{Agent, UpdateOutcome};
pub use report::{
    emit_report, normalize, read_summaries_csv, summarize, Baselines, EvalSummary,
    NormalizedMetrics, RadarEntry, RadarReport, RADAR_AXES,
};
pub use run::{
    evaluate, Harness, Policy, TerminalStatus, TrajectoryRecord, VisitRecord, PATIENT_STREAM,
    POLICY_STREAM,
};
