//! Mean-field limit of the occupancy fractions as the number of servers
//! grows: the RLO and RLS ODE systems, their integration, the RLO fixed
//! point and Little's-law performance estimates.

mod fixed_point;
mod integrate;
mod rhs;

use std::io::Write;

use serde::Serialize;

pub use fixed_point::{
    equilibrium_rls, g_of_z, sign_changes, solve_fixed_point_rlo, FixedPoint, RelaxOptions, RlsEquilibrium,
};
pub use integrate::{integrate, step_plan, Integrator, OdeState};
pub use rhs::{l1_distance, mean_occupancy, rhs_rlo, rhs_rlo_tail, rhs_rls, sup_norm, Field};

use crate::error::{Error, Result};
use crate::output::{csv_writer, write_comments};
use crate::scalar::Real;

/// Default RK4 step.
pub const DEFAULT_DT: f64 = 1e-3;
/// Default equilibrium threshold on `‖rhs‖_∞`.
pub const DEFAULT_TOL: f64 = 1e-10;

/// Mean sojourn by Little's law, `y / λ`.
pub fn sojourn<T: Real>(y: T, lambda: T) -> Result<T> {
    if lambda <= T::zero() || y <= T::zero() {
        return Err(Error::UndefinedThroughput);
    }
    Ok(y / lambda)
}

/// Mean throughput `λ / y`, the inverse of the mean sojourn.
pub fn throughput<T: Real>(y: T, lambda: T) -> Result<T> {
    sojourn(y, lambda).map(|s| T::one() / s)
}

/// `x ≤_st x'`: every prefix sum of `x` dominates that of `x'`.
pub fn st_leq<T: Real>(x: &[T], x_prime: &[T]) -> bool {
    let slack = T::negativity_tolerance();
    let (mut a, mut b) = (T::zero(), T::zero());
    let len = x.len().max(x_prime.len());
    for k in 0..len {
        a = a + x.get(k).copied().unwrap_or(T::zero());
        b = b + x_prime.get(k).copied().unwrap_or(T::zero());
        if a + slack < b {
            return false;
        }
    }
    true
}

/// `k,xi_k` table with the solver outputs echoed as comments.
pub fn write_fixed_point_csv<T: Real, W: Write>(fp: &FixedPoint<T>, lambda: T, beta: T, mut w: W) -> Result<()> {
    write_comments(
        &mut w,
        &[
            ("lambda", lambda.to_string()),
            ("beta", beta.to_string()),
            ("B", (fp.xi.len() - 1).to_string()),
            ("y", fp.y.to_string()),
            ("z", fp.z.to_string()),
            ("residual", format!("{:e}", fp.residual.to_f64_lossy())),
        ],
    )?;
    write_distribution(&fp.xi, "xi_k", w)
}

/// `k,<column>` table of a distribution over levels.
pub fn write_distribution<T: Real, W: Write>(x: &[T], column: &str, w: W) -> Result<()> {
    let mut out = csv_writer(w);
    out.write_record(["k", column])?;
    for (k, v) in x.iter().enumerate() {
        out.write_record([k.to_string(), v.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

/// `t,x_0..x_B` table.
pub fn write_trajectory_csv<T: Real, W: Write>(traj: &[(T, OdeState<T>)], w: W) -> Result<()> {
    let mut out = csv_writer(w);
    let b = traj.first().map_or(0, |(_, s)| s.b_cap());
    let mut header = vec!["t".to_string()];
    header.extend((0..=b).map(|k| format!("x_{k}")));
    out.write_record(&header)?;
    for (t, s) in traj {
        let mut row = vec![t.to_string()];
        row.extend(s.x().iter().map(|v| v.to_string()));
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

/// Sweep summary row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeanFieldRow {
    pub lambda: f64,
    pub beta: f64,
    #[serde(rename = "B")]
    pub b: usize,
    pub policy: String,
    pub y: f64,
    pub sojourn: f64,
    pub throughput: f64,
    pub residual: f64,
}

pub fn write_summary_csv<W: Write>(rows: &[MeanFieldRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}
