//! Right-hand sides of the mean-field dynamics on occupancy fractions
//! `x_0..x_B`.
//!
//! Both systems share the birth-death part: arrivals at rate `λ` move a
//! server from `k` to `k+1` (blocked at `B`) and unit-rate PS service moves it
//! from `k` to `k-1` (idle at `0`). Under RLO every client jumps at rate `β`
//! to a server drawn from the population, so a server at `k < B` gains
//! clients at total rate `β y` with `y = Σ j x_j`. Under RLS a client at a
//! server with `i` clients moves to a server with `j <= i - 2` clients.

use crate::scalar::Real;

fn count<T: Real>(k: usize) -> T {
    T::of_count(k as u64)
}

/// `Σ_k k x_k`.
pub fn mean_occupancy<T: Real>(x: &[T]) -> T {
    x.iter().enumerate().map(|(k, &v)| count::<T>(k) * v).sum()
}

/// Birth-death part with blocked arrivals at `B` and no service at `0`.
fn birth_death<T: Real>(x: &[T], lambda: T, out: &mut [T]) {
    let b = x.len() - 1;
    for k in 0..=b {
        let up_in = if k > 0 { x[k - 1] } else { T::zero() };
        let up_out = if k < b { x[k] } else { T::zero() };
        let down_out = if k > 0 { x[k] } else { T::zero() };
        let down_in = if k < b { x[k + 1] } else { T::zero() };
        out[k] = lambda * (up_in - up_out) - (down_out - down_in);
    }
}

/// RLO mean-field field `ẋ`.
pub fn rhs_rlo<T: Real>(x: &[T], lambda: T, beta: T) -> Vec<T> {
    let b = x.len() - 1;
    let mut out = vec![T::zero(); x.len()];
    birth_death(x, lambda, &mut out);
    if beta == T::zero() {
        return out;
    }
    let y = mean_occupancy(x);
    for k in 0..=b {
        let up_in = if k > 0 { x[k - 1] } else { T::zero() };
        let up_out = if k < b { x[k] } else { T::zero() };
        let down_in = if k < b { count::<T>(k + 1) * x[k + 1] } else { T::zero() };
        out[k] = out[k] + beta * ((up_in - up_out) * y - count::<T>(k) * x[k] + down_in);
    }
    out
}

/// RLO field on tail sums `s_k = Σ_{j>=k} x_j` (`s_0 = 1` is constant):
/// `ṡ_k = (λ + β Σ_{j>=1} s_j)(s_{k-1} - s_k) - (1 + βk)(s_k - s_{k+1})`.
pub fn rhs_rlo_tail<T: Real>(s: &[T], lambda: T, beta: T) -> Vec<T> {
    let b = s.len() - 1;
    let z = lambda + beta * s[1..].iter().copied().sum::<T>();
    let mut out = vec![T::zero(); s.len()];
    for k in 1..=b {
        let next = if k < b { s[k + 1] } else { T::zero() };
        out[k] = z * (s[k - 1] - s[k]) - (T::one() + beta * count::<T>(k)) * (s[k] - next);
    }
    out
}

/// RLS mean-field field `ẋ`, in `O(B)` via prefix sums `P_k = Σ_{j<=k} x_j`
/// and weighted suffix sums `W_k = Σ_{j>=k} j x_j`:
///
/// `β[x_{k-1} W_{k+1} - x_k W_{k+2} - k x_k P_{k-2} + (k+1) x_{k+1} P_{k-1}]`.
pub fn rhs_rls<T: Real>(x: &[T], lambda: T, beta: T) -> Vec<T> {
    let b = x.len() - 1;
    let mut out = vec![T::zero(); x.len()];
    birth_death(x, lambda, &mut out);
    if beta == T::zero() {
        return out;
    }
    let mut prefix = vec![T::zero(); b + 1];
    let mut acc = T::zero();
    for k in 0..=b {
        acc = acc + x[k];
        prefix[k] = acc;
    }
    let mut wsuffix = vec![T::zero(); b + 3];
    for k in (0..=b).rev() {
        wsuffix[k] = wsuffix[k + 1] + count::<T>(k) * x[k];
    }
    let p = |k: isize| if k < 0 { T::zero() } else { prefix[(k as usize).min(b)] };
    for k in 0..=b {
        let ki = k as isize;
        let xm1 = if k > 0 { x[k - 1] } else { T::zero() };
        let xp1 = if k < b { x[k + 1] } else { T::zero() };
        let gain_receive = xm1 * wsuffix[k + 1];
        let lose_receive = x[k] * wsuffix[k + 2];
        let lose_send = count::<T>(k) * x[k] * p(ki - 2);
        let gain_send = count::<T>(k + 1) * xp1 * p(ki - 1);
        out[k] = out[k] + beta * (gain_receive - lose_receive - lose_send + gain_send);
    }
    out
}

/// Which mean-field system to integrate, with its parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Field<T> {
    Rlo { lambda: T, beta: T },
    Rls { lambda: T, beta: T },
}

impl<T: Real> Field<T> {
    pub fn eval(&self, x: &[T]) -> Vec<T> {
        match *self {
            Field::Rlo { lambda, beta } => rhs_rlo(x, lambda, beta),
            Field::Rls { lambda, beta } => rhs_rls(x, lambda, beta),
        }
    }
}

/// `max_k |v_k|`.
pub fn sup_norm<T: Real>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |m, &a| m.max(a.abs()))
}

/// `Σ_k |a_k - b_k|`.
pub fn l1_distance<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&p, &q)| (p - q).abs()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Flux-by-flux transcription: every transition moves mass between two
    /// adjacent occupancy levels.
    fn rlo_by_flux(x: &[f64], lambda: f64, beta: f64) -> Vec<f64> {
        let b = x.len() - 1;
        let y: f64 = x.iter().enumerate().map(|(k, v)| k as f64 * v).sum();
        let mut d = vec![0.0; x.len()];
        for k in 0..b {
            let up = (lambda + beta * y) * x[k];
            d[k] -= up;
            d[k + 1] += up;
        }
        for k in 1..=b {
            let down = (1.0 + beta * k as f64) * x[k];
            d[k] -= down;
            d[k - 1] += down;
        }
        d
    }

    /// Pairwise transcription of RLS migrations: clients at level `i` move
    /// to servers at level `j <= i - 2`.
    fn rls_by_pairs(x: &[f64], lambda: f64, beta: f64) -> Vec<f64> {
        let b = x.len() - 1;
        let mut d = rlo_by_flux(x, lambda, 0.0);
        for i in 0..=b {
            for j in 0..=b {
                if j + 2 <= i {
                    let f = beta * i as f64 * x[i] * x[j];
                    d[i] -= f;
                    d[i - 1] += f;
                    d[j] -= f;
                    d[j + 1] += f;
                }
            }
        }
        d
    }

    #[test]
    fn empty_closed_state_is_fixed() {
        let x = [1.0, 0.0, 0.0, 0.0];
        assert!(rhs_rlo(&x, 0.0, 3.0).iter().all(|&v| v == 0.0));
        assert!(rhs_rls(&x, 0.0, 3.0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_beta_is_birth_death() {
        let x = [0.4, 0.3, 0.2, 0.1];
        let d = rhs_rlo(&x, 0.8, 0.0);
        assert_relative_eq!(d[0], -0.8 * 0.4 + 0.3);
        assert_relative_eq!(d[1], 0.8 * (0.4 - 0.3) - (0.3 - 0.2));
        assert_relative_eq!(d[3], 0.8 * 0.2 - 0.1);
        assert_eq!(rhs_rls(&x, 0.8, 0.0), d);
    }

    #[test]
    fn rlo_matches_flux_transcription() {
        let x = [0.5, 0.3, 0.2];
        let got = rhs_rlo(&x, 0.8, 0.5);
        let want = rlo_by_flux(&x, 0.8, 0.5);
        for (a, b) in got.iter().zip(&want) {
            assert_relative_eq!(a, b, epsilon = 1e-15);
        }
    }

    #[test]
    fn rls_matches_pair_transcription() {
        let x = [0.1, 0.25, 0.05, 0.3, 0.2, 0.1];
        let got = rhs_rls(&x, 0.7, 1.3);
        let want = rls_by_pairs(&x, 0.7, 1.3);
        for (a, b) in got.iter().zip(&want) {
            assert_relative_eq!(a, b, epsilon = 1e-14);
        }
    }

    #[test]
    fn concentrated_rls_has_no_migration() {
        let x = [0.0, 0.0, 1.0, 0.0, 0.0];
        assert_eq!(rhs_rls(&x, 0.6, 2.0), rhs_rls(&x, 0.6, 0.0));
    }

    #[test]
    fn tail_examples() {
        assert!(rhs_rlo_tail(&[1.0, 0.0, 0.0], 0.0, 1.0).iter().all(|&v| v == 0.0));
        let full = [1.0, 1.0, 1.0, 1.0];
        let d = rhs_rlo_tail(&full, 0.5, 0.5);
        assert_relative_eq!(d[3], -(1.0 + 0.5 * 3.0));
        assert_eq!(&d[..3], &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn single_precision_agrees() {
        let x64 = [0.3, 0.3, 0.2, 0.2];
        let x32: Vec<f32> = x64.iter().map(|&v| v as f32).collect();
        let a = rhs_rls(&x64, 0.8, 0.5);
        let b = rhs_rls(&x32, 0.8, 0.5);
        for (p, q) in a.iter().zip(&b) {
            assert!((p - *q as f64).abs() < 1e-6);
        }
    }
}
