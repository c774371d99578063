//! Empirical stability verdicts from the growth of the total population.

use serde::Serialize;

use crate::ctmc::{simulate_open_with, OpenOptions};
use crate::error::{Error, Result};
use crate::model::{SystemConfig, SystemState};
use crate::stats::{ols_slope, replicate, summarize, Summary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Stable,
    Unstable,
    Inconclusive,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Stable => "stable",
            Verdict::Unstable => "unstable",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    pub verdict: Verdict,
    /// Least-squares slope of the total population over the last half of
    /// the horizon, summarised across seeds.
    pub growth_slope: Summary,
    /// Mean total population over the third and fourth quarters of the
    /// horizon, averaged across seeds.
    pub tail_means: (f64, f64),
    /// Relative difference of the two quarter means.
    pub tail_gap: f64,
    pub slopes: Vec<f64>,
}

/// Relative tolerance on the quarter-window means for a stable verdict.
pub const TAIL_AGREEMENT: f64 = 0.10;

/// Simulates an open system from empty for each seed and classifies it:
/// unstable when the slope CI lies above zero, stable when it contains zero
/// and the last two quarter means agree within 10%, inconclusive otherwise.
pub fn stability_probe(
    config: &SystemConfig,
    horizon: f64,
    seeds: &[u64],
    jobs: Option<usize>,
) -> Result<StabilityReport> {
    if config.is_closed() {
        return Err(Error::invalid("stability probe needs positive arrival rates"));
    }
    if seeds.len() < 2 {
        return Err(Error::invalid("stability probe needs at least two seeds"));
    }
    let initial = SystemState::empty(config.m());
    let opts = OpenOptions { horizon, warmup: 0.0, record_sojourns: false, record_samples: true };
    let per_seed = replicate(seeds, jobs, |seed| {
        let run = simulate_open_with(config, &initial, &opts, seed)?;
        let (mut ts, mut ys) = (Vec::new(), Vec::new());
        let (mut q3, mut n3, mut q4, mut n4) = (0.0, 0usize, 0.0, 0usize);
        for (t, total) in run.trajectory.totals() {
            let y = total as f64;
            if t >= horizon / 2.0 {
                ts.push(t);
                ys.push(y);
            }
            if t >= 0.75 * horizon {
                q4 += y;
                n4 += 1;
            } else if t >= 0.5 * horizon {
                q3 += y;
                n3 += 1;
            }
        }
        let slope = ols_slope(&ts, &ys).ok_or_else(|| Error::invalid("too few snapshots for a slope fit"))?;
        Ok((slope, q3 / n3.max(1) as f64, q4 / n4.max(1) as f64))
    })?;
    let slopes: Vec<f64> = per_seed.iter().map(|r| r.0).collect();
    let growth_slope = summarize(&slopes)?;
    let k = per_seed.len() as f64;
    let q3 = per_seed.iter().map(|r| r.1).sum::<f64>() / k;
    let q4 = per_seed.iter().map(|r| r.2).sum::<f64>() / k;
    let scale = (q3 + q4) / 2.0;
    let tail_gap = if scale > 0.0 { (q3 - q4).abs() / scale } else { 0.0 };
    let verdict = if growth_slope.ci_lo > 0.0 {
        Verdict::Unstable
    } else if growth_slope.ci_lo <= 0.0 && growth_slope.ci_hi >= 0.0 && tail_gap <= TAIL_AGREEMENT {
        Verdict::Stable
    } else {
        Verdict::Inconclusive
    };
    Ok(StabilityReport { verdict, growth_slope, tail_means: (q3, q4), tail_gap, slopes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Policy;

    #[test]
    fn overloaded_single_server_grows() {
        let cfg = SystemConfig::homogeneous(1, 2.0, 0.5, Policy::Rlo).unwrap().with_sample_interval(1.0).unwrap();
        let r = stability_probe(&cfg, 400.0, &[1, 2, 3, 4], Some(1)).unwrap();
        assert_eq!(r.verdict, Verdict::Unstable);
        assert!((r.growth_slope.mean - 1.0).abs() < 0.2);
    }

    #[test]
    fn light_load_is_stable() {
        let cfg = SystemConfig::homogeneous(3, 0.3, 0.5, Policy::Rls).unwrap().with_sample_interval(0.5).unwrap();
        let seeds: Vec<u64> = (0..10).collect();
        let r = stability_probe(&cfg, 2000.0, &seeds, Some(1)).unwrap();
        assert_eq!(r.verdict, Verdict::Stable, "{r:?}");
    }

    #[test]
    fn closed_config_is_rejected() {
        let cfg = SystemConfig::closed(2, 1.0, Policy::Rls).unwrap();
        assert!(stability_probe(&cfg, 10.0, &[1, 2], None).is_err());
    }
}
