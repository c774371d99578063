//! Fixed-step classical Runge-Kutta integration with mass control.

use crate::error::{Error, Result};
use crate::model::{tail_sums_of, EmpiricalMeasure};
use crate::scalar::Real;

use super::rhs::{mean_occupancy, Field};

/// Occupancy fractions `x_0..x_B` summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct OdeState<T> {
    x: Vec<T>,
}

impl<T: Real> OdeState<T> {
    /// Validates non-negativity (up to rounding) and unit mass.
    pub fn new(x: Vec<T>) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::invalid("state needs at least the level k = 0"));
        }
        if let Some((k, v)) = x.iter().enumerate().find(|(_, v)| !(**v >= -T::negativity_tolerance())) {
            return Err(Error::invalid(format!("x_{k} = {v} is negative")));
        }
        let mass: T = x.iter().copied().sum();
        if (mass - T::one()).abs() > T::mass_tolerance() {
            return Err(Error::invalid(format!("total mass {mass} differs from 1")));
        }
        Ok(OdeState { x })
    }

    pub fn point_mass(k: usize, b_cap: usize) -> Result<Self> {
        if k > b_cap {
            return Err(Error::invalid(format!("level {k} exceeds B = {b_cap}")));
        }
        let mut x = vec![T::zero(); b_cap + 1];
        x[k] = T::one();
        Ok(OdeState { x })
    }

    /// Every server idle.
    pub fn empty(b_cap: usize) -> Self {
        Self::point_mass(0, b_cap).expect("level 0 always exists")
    }

    /// Every server at `B`.
    pub fn full(b_cap: usize) -> Self {
        Self::point_mass(b_cap, b_cap).expect("level B always exists")
    }

    pub fn x(&self) -> &[T] {
        &self.x
    }

    pub fn into_inner(self) -> Vec<T> {
        self.x
    }

    pub fn b_cap(&self) -> usize {
        self.x.len() - 1
    }

    pub fn mean_occupancy(&self) -> T {
        mean_occupancy(&self.x)
    }

    pub fn tail_sums(&self) -> Vec<T> {
        tail_sums_of(&self.x)
    }
}

impl<T: Real> From<EmpiricalMeasure<T>> for OdeState<T> {
    fn from(m: EmpiricalMeasure<T>) -> Self {
        OdeState { x: m.into_inner() }
    }
}

impl<T> AsRef<[T]> for OdeState<T> {
    fn as_ref(&self) -> &[T] {
        &self.x
    }
}

/// Steps a field forward with RK4; after each step the mass drift is
/// checked, small negative components are clipped and the state is
/// renormalised.
#[derive(Debug, Clone)]
pub struct Integrator<T> {
    field: Field<T>,
    x: Vec<T>,
    dt: T,
    steps: u64,
    last_residual: T,
}

impl<T: Real> Integrator<T> {
    pub fn new(field: Field<T>, x0: &OdeState<T>, dt: T) -> Result<Self> {
        if !(dt > T::zero() && dt.is_finite()) {
            return Err(Error::invalid(format!("dt = {dt} must be positive")));
        }
        let residual = super::rhs::sup_norm(&field.eval(x0.x()));
        Ok(Integrator { field, x: x0.x.clone(), dt, steps: 0, last_residual: residual })
    }

    /// Elapsed time `steps × dt`.
    pub fn time(&self) -> T {
        T::of_count(self.steps) * self.dt
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn x(&self) -> &[T] {
        &self.x
    }

    pub fn state(&self) -> OdeState<T> {
        OdeState { x: self.x.clone() }
    }

    /// `‖ẋ‖_∞` at the start of the most recent step.
    pub fn residual(&self) -> T {
        self.last_residual
    }

    pub fn step(&mut self) -> Result<()> {
        let h = self.dt;
        let two = T::of(2.0);
        let six = T::of(6.0);
        let axpy = |a: T, v: &[T]| -> Vec<T> { self.x.iter().zip(v).map(|(&x, &d)| x + a * d).collect() };
        let k1 = self.field.eval(&self.x);
        let k2 = self.field.eval(&axpy(h / two, &k1));
        let k3 = self.field.eval(&axpy(h / two, &k2));
        let k4 = self.field.eval(&axpy(h, &k3));
        self.last_residual = super::rhs::sup_norm(&k1);
        let t_next = T::of_count(self.steps + 1) * h;
        let mut next: Vec<T> = (0..self.x.len())
            .map(|k| self.x[k] + h / six * (k1[k] + two * k2[k] + two * k3[k] + k4[k]))
            .collect();
        let mass: T = next.iter().copied().sum();
        let drift = (mass - T::one()).abs();
        if !(drift < T::mass_tolerance()) {
            return Err(Error::StepSize { t: t_next.to_f64_lossy(), dt: h.to_f64_lossy(), drift: drift.to_f64_lossy() });
        }
        for (k, v) in next.iter_mut().enumerate() {
            if *v < T::zero() {
                if *v < -T::negativity_tolerance() {
                    return Err(Error::Negativity { t: t_next.to_f64_lossy(), index: k, value: v.to_f64_lossy() });
                }
                *v = T::zero();
            }
        }
        let mass: T = next.iter().copied().sum();
        for v in &mut next {
            *v = *v / mass;
        }
        self.x = next;
        self.steps += 1;
        Ok(())
    }
}

/// Number of fixed steps covering `[0, t_end]` with nominal step `dt`; the
/// effective step is `t_end / steps`.
pub fn step_plan<T: Real>(t_end: T, dt: T) -> Result<(u64, T)> {
    if !(t_end >= T::zero() && t_end.is_finite()) {
        return Err(Error::invalid(format!("t_end = {t_end} must be finite and non-negative")));
    }
    if !(dt > T::zero() && dt.is_finite()) {
        return Err(Error::invalid(format!("dt = {dt} must be positive")));
    }
    let ratio = (t_end / dt).to_f64_lossy();
    let n = (ratio - 1e-9).ceil().max(0.0) as u64;
    Ok(if n == 0 { (0, dt) } else { (n, t_end / T::of_count(n)) })
}

/// Integrates `field` from `x0` to `t_end`, recording the state at the start
/// and after every `record_every` steps (and at `t_end`).
pub fn integrate<T: Real>(
    field: Field<T>,
    x0: &OdeState<T>,
    t_end: T,
    dt: T,
    record_every: u64,
) -> Result<Vec<(T, OdeState<T>)>> {
    let (n, h) = step_plan(t_end, dt)?;
    let every = record_every.max(1);
    let mut integ = Integrator::new(field, x0, h)?;
    let mut out = vec![(T::zero(), x0.clone())];
    for s in 1..=n {
        integ.step()?;
        if s % every == 0 || s == n {
            out.push((integ.time(), integ.state()));
        }
    }
    Ok(out)
}
