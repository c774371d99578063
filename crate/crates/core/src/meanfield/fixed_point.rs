//! Stationary points: the RLO closed form via root finding and the RLS
//! equilibrium via relaxation from two extreme starts.

use crate::error::{Error, Result};
use crate::scalar::Real;

use super::integrate::{Integrator, OdeState};
use super::rhs::{l1_distance, mean_occupancy, rhs_rlo, rhs_rls, sup_norm, Field};

/// RLO stationary solution `ξ_i ∝ z^i / Π_{j<=i}(1 + βj)` with
/// `z = λ + β y` and `y = Σ j ξ_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedPoint<T> {
    pub xi: Vec<T>,
    pub y: T,
    pub z: T,
    /// `‖rhs_rlo(ξ)‖_∞`.
    pub residual: T,
}

impl<T: Real> FixedPoint<T> {
    pub fn state(&self) -> OdeState<T> {
        OdeState::new(self.xi.clone()).expect("fixed point is a probability vector")
    }
}

/// Terms `t_i = Π_{j<=i} z/(1+βj)` for `i = 0..=B`, rescaled when they grow
/// large so that only ratios are meaningful.
fn weights<T: Real>(z: T, beta: T, b_cap: usize) -> Vec<T> {
    let big = T::max_value().sqrt();
    let mut t = vec![T::one(); b_cap + 1];
    for i in 1..=b_cap {
        t[i] = t[i - 1] * z / (T::one() + beta * T::of_count(i as u64));
        if t[i] > big {
            for v in &mut t[..=i] {
                *v = *v / big;
            }
        }
    }
    t
}

/// `g(z) = (z - λ) S_0(z) - β S_1(z)` with
/// `S_0 = 1 + Σ_{i=1}^B t_i`, `S_1 = Σ_{i=1}^B i t_i`,
/// `t_i = z^i / Π_{j=1}^i (1 + βj)`.
///
/// `z = λ + β y` solves the fixed-point equation exactly when `g(z) = 0`.
/// Products are accumulated iteratively; for very large `z` the sums may
/// overflow to infinity, which preserves the sign.
pub fn g_of_z<T: Real>(z: T, lambda: T, beta: T, b_cap: usize) -> T {
    let mut t = T::one();
    let mut s0 = T::one();
    let mut s1 = T::zero();
    for i in 1..=b_cap {
        let k = T::of_count(i as u64);
        t = t * z / (T::one() + beta * k);
        s0 = s0 + t;
        s1 = s1 + k * t;
    }
    (z - lambda) * s0 - beta * s1
}

/// `g(z) / S_0(z)`, the same sign as `g` without overflow.
fn normalized_g<T: Real>(z: T, lambda: T, beta: T, b_cap: usize) -> T {
    let t = weights(z, beta, b_cap);
    let s0: T = t.iter().copied().sum();
    (z - lambda) - beta * mean_occupancy(&t) / s0
}

fn normalize<T: Real>(mut v: Vec<T>) -> Vec<T> {
    let s: T = v.iter().copied().sum();
    for x in &mut v {
        *x = *x / s;
    }
    v
}

/// Solves for the RLO fixed point on `0..=B` by bisection on
/// `[λ, z_hi]`, growing `z_hi` geometrically until `g(z_hi) > 0`.
pub fn solve_fixed_point_rlo<T: Real>(lambda: T, beta: T, b_cap: usize, tol: T) -> Result<FixedPoint<T>> {
    if !(lambda >= T::zero() && beta >= T::zero() && tol > T::zero()) {
        return Err(Error::invalid(format!("need lambda >= 0, beta >= 0, tol > 0 (got {lambda}, {beta}, {tol})")));
    }
    if lambda >= T::one() {
        return Err(Error::Infeasible(format!(
            "lambda = {lambda} >= 1 violates the stability condition lambda < mu = 1"
        )));
    }
    let (xi, z) = if lambda == T::zero() {
        (OdeState::<T>::empty(b_cap).into_inner(), T::zero())
    } else if beta == T::zero() {
        (normalize(weights(lambda, T::zero(), b_cap)), lambda)
    } else {
        let z = bisect(lambda, beta, b_cap)?;
        (normalize(weights(z, beta, b_cap)), z)
    };
    let y = if beta == T::zero() { mean_occupancy(&xi) } else { (z - lambda) / beta };
    let residual = sup_norm(&rhs_rlo(&xi, lambda, beta));
    if !(residual < tol) {
        return Err(Error::NonConvergence { horizon: 0.0, residual: residual.to_f64_lossy() });
    }
    Ok(FixedPoint { xi, y, z, residual })
}

fn bisect<T: Real>(lambda: T, beta: T, b_cap: usize) -> Result<T> {
    let g = |z: T| normalized_g(z, lambda, beta, b_cap);
    let mut lo = lambda;
    let mut hi = lambda.max(T::one());
    let mut grow = 0;
    while !(g(hi) > T::zero()) {
        lo = hi;
        hi = hi * T::of(2.0);
        grow += 1;
        if grow > 200 || !hi.is_finite() {
            return Err(Error::NonConvergence { horizon: hi.to_f64_lossy(), residual: g(lo).to_f64_lossy() });
        }
    }
    for _ in 0..300 {
        let mid = lo + (hi - lo) / T::of(2.0);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) > T::zero() {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(lo + (hi - lo) / T::of(2.0))
}

/// Number of sign changes of `g` on `n + 1` evenly spaced points of
/// `[z_lo, z_hi]` (zeros are skipped).
pub fn sign_changes<T: Real>(lambda: T, beta: T, b_cap: usize, z_lo: T, z_hi: T, n: usize) -> usize {
    let mut last: Option<bool> = None;
    let mut changes = 0;
    for i in 0..=n {
        let z = z_lo + (z_hi - z_lo) * T::of_count(i as u64) / T::of_count(n as u64);
        let v = normalized_g(z, lambda, beta, b_cap);
        if v == T::zero() {
            continue;
        }
        let pos = v > T::zero();
        if last.is_some_and(|p| p != pos) {
            changes += 1;
        }
        last = Some(pos);
    }
    changes
}

/// Tuning for [`equilibrium_rls`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelaxOptions {
    /// Step size; defaults to `0.5 / (1 + λ + 2βB)`.
    pub dt: Option<f64>,
    pub max_time: f64,
}

impl Default for RelaxOptions {
    fn default() -> Self {
        RelaxOptions { dt: None, max_time: 1e5 }
    }
}

/// Relaxation result: the empty-start limit plus the agreement with the
/// full-start limit.
#[derive(Debug, Clone, PartialEq)]
pub struct RlsEquilibrium<T> {
    pub state: OdeState<T>,
    pub y: T,
    /// `‖rhs_rls‖_∞` at the returned state.
    pub residual: T,
    /// L1 distance between the empty-start and full-start limits.
    pub agreement: T,
    /// `agreement < 10 × tol`.
    pub agreed: bool,
    pub time_empty: T,
    pub time_full: T,
}

fn relax<T: Real>(field: Field<T>, x0: OdeState<T>, dt: T, tol: T, max_time: T) -> Result<(OdeState<T>, T, T)> {
    let mut integ = Integrator::new(field, &x0, dt)?;
    loop {
        let r = sup_norm(&field.eval(integ.x()));
        if r < tol {
            return Ok((integ.state(), r, integ.time()));
        }
        if integ.time() >= max_time {
            return Err(Error::NonConvergence { horizon: max_time.to_f64_lossy(), residual: r.to_f64_lossy() });
        }
        integ.step()?;
    }
}

/// Integrates the RLS field from the empty and the full state until
/// `‖rhs‖_∞ < tol`.
pub fn equilibrium_rls<T: Real>(
    lambda: T,
    beta: T,
    b_cap: usize,
    tol: T,
    opts: &RelaxOptions,
) -> Result<RlsEquilibrium<T>> {
    if !(lambda >= T::zero() && beta >= T::zero() && tol > T::zero()) {
        return Err(Error::invalid(format!("need lambda >= 0, beta >= 0, tol > 0 (got {lambda}, {beta}, {tol})")));
    }
    if lambda >= T::one() {
        return Err(Error::Infeasible(format!(
            "lambda = {lambda} >= 1 violates the stability condition lambda < mu = 1"
        )));
    }
    let bf = T::of_count(b_cap as u64);
    let dt = match opts.dt {
        Some(d) => T::of(d),
        None => T::of(0.5) / (T::one() + lambda + T::of(2.0) * beta * bf),
    };
    let field = Field::Rls { lambda, beta };
    let max_time = T::of(opts.max_time);
    let (empty, residual, time_empty) = relax(field, OdeState::empty(b_cap), dt, tol, max_time)?;
    let (full, _, time_full) = relax(field, OdeState::full(b_cap), dt, tol, max_time)?;
    let agreement = l1_distance(empty.x(), full.x());
    debug_assert!(sup_norm(&rhs_rls(empty.x(), lambda, beta)) < tol);
    Ok(RlsEquilibrium {
        y: empty.mean_occupancy(),
        state: empty,
        residual,
        agreed: agreement < T::of(10.0) * tol,
        agreement,
        time_empty,
        time_full,
    })
}
