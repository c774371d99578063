//! Quantitative studies built on the simulator and the mean-field solvers:
//! stability probes, Lyapunov drift enumeration, Kurtz-limit deviation,
//! throughput comparisons and the distributional and monotonicity checks.

mod checks;
mod kurtz;
mod lyapunov;
mod stability;
mod throughput;

use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;

pub use checks::{coupling_check, monotonicity_check, CouplingReport, MonotonicityReport, MonotonicitySetup};
pub use kurtz::{kurtz_deviation, realize_measure, KurtzOptions};
pub use lyapunov::{drift_table, drift_threshold, lyapunov_drift, DriftRow, DriftSummary};
pub use stability::{stability_probe, StabilityReport, Verdict};
pub use throughput::{
    predicted_throughput, throughput_comparison, throughput_estimate, throughput_estimate_with_warmup, ArrivalLayout, ThroughputEstimate, MIN_REPS, PREDICTION_B, WARMUP_FRACTION,
    ThroughputGrid, ThroughputRow,
};

use crate::error::Result;
use crate::stats::Summary;

/// Seeds of replications within one sweep cell are `base + cell × stride +
/// rep`, independent of execution order.
pub const SEED_STRIDE: u64 = 1_000_000;

pub fn cell_seeds(base: u64, cell: u64, reps: usize) -> Vec<u64> {
    (0..reps as u64).map(|r| base.wrapping_add(cell * SEED_STRIDE).wrapping_add(r)).collect()
}

/// One summarised metric together with the parameters that produced it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentResult {
    pub params: BTreeMap<String, String>,
    pub metric: String,
    pub estimate: f64,
    pub sd: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub reps: usize,
    pub seed_lo: u64,
    pub seed_hi: u64,
    /// Excluded from CSV output so that tables are reproducible.
    #[serde(skip)]
    pub wall_time_s: f64,
}

impl ExperimentResult {
    pub fn from_summary(metric: &str, params: BTreeMap<String, String>, s: &Summary, seeds: &[u64]) -> Self {
        ExperimentResult {
            params,
            metric: metric.to_string(),
            estimate: s.mean,
            sd: s.sd,
            ci_lo: s.ci_lo,
            ci_hi: s.ci_hi,
            reps: s.n,
            seed_lo: seeds.iter().copied().min().unwrap_or(0),
            seed_hi: seeds.iter().copied().max().unwrap_or(0),
            wall_time_s: 0.0,
        }
    }
}

/// Writes `params` flattened as `key=value;...` followed by the metric
/// columns.
pub fn write_results_csv<W: Write>(results: &[ExperimentResult], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["params", "metric", "estimate", "sd", "ci_lo", "ci_hi", "reps", "seed_lo", "seed_hi"])?;
    for r in results {
        let params: Vec<String> = r.params.iter().map(|(k, v)| format!("{k}={v}")).collect();
        out.write_record([
            params.join(";"),
            r.metric.clone(),
            r.estimate.to_string(),
            r.sd.to_string(),
            r.ci_lo.to_string(),
            r.ci_hi.to_string(),
            r.reps.to_string(),
            r.seed_lo.to_string(),
            r.seed_hi.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Serialises rows with a header derived from their field names.
pub fn write_rows_csv<W: Write, R: Serialize>(rows: &[R], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}
