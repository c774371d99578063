use migrate_sim_core::meanfield::{
    integrate, l1_distance, rhs_rlo, rhs_rlo_tail, rhs_rls, sign_changes, solve_fixed_point_rlo, st_leq, Field,
    OdeState,
};
use proptest::prelude::*;

fn distribution(b_min: usize, b_max: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![Just(0.0f64), 0.0f64..1.0], b_min + 1..b_max + 2).prop_filter_map(
        "needs positive mass",
        |w| {
            let s: f64 = w.iter().sum();
            (s > 1e-3).then(|| w.iter().map(|v| v / s).collect())
        },
    )
}

fn tails(x: &[f64]) -> Vec<f64> {
    let mut s = vec![0.0; x.len()];
    let mut acc = 0.0;
    for k in (0..x.len()).rev() {
        acc += x[k];
        s[k] = acc;
    }
    s
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn both_fields_conserve_mass(x in distribution(1, 60), lambda in 0.0f64..2.0, beta in 0.0f64..5.0) {
        let rlo: f64 = rhs_rlo(&x, lambda, beta).iter().sum();
        let rls: f64 = rhs_rls(&x, lambda, beta).iter().sum();
        prop_assert!(rlo.abs() < 1e-12, "rlo mass drift {}", rlo);
        prop_assert!(rls.abs() < 1e-12, "rls mass drift {}", rls);
    }

    #[test]
    fn occupancy_and_tail_forms_agree(x in distribution(1, 60), lambda in 0.0f64..2.0, beta in 0.0f64..5.0) {
        let h = 1e-6;
        let dx = rhs_rlo(&x, lambda, beta);
        let stepped: Vec<f64> = x.iter().zip(&dx).map(|(a, d)| a + h * d).collect();
        let (s0, s1) = (tails(&x), tails(&stepped));
        let ds = rhs_rlo_tail(&s0, lambda, beta);
        for k in 0..x.len() {
            let fd = (s1[k] - s0[k]) / h;
            prop_assert!((fd - ds[k]).abs() < 1e-6, "k={} fd={} tail={}", k, fd, ds[k]);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn fixed_point_is_a_zero_with_consistent_mean(
        lambda in 0.05f64..0.97, beta in 0.0f64..3.0, b_cap in 20usize..120,
    ) {
        let fp = solve_fixed_point_rlo(lambda, beta, b_cap, 1e-9).unwrap();
        let r = rhs_rlo(&fp.xi, lambda, beta);
        prop_assert!(r.iter().all(|v| v.abs() < 1e-9));
        let mean: f64 = fp.xi.iter().enumerate().map(|(k, v)| k as f64 * v).sum();
        prop_assert!((mean - fp.y).abs() < 1e-10);
        prop_assert!((fp.xi.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn g_has_one_sign_change_on_a_fine_grid(lambda in 0.05f64..0.97, beta in 0.01f64..3.0) {
        let fp = solve_fixed_point_rlo(lambda, beta, 100, 1e-9).unwrap();
        let z_hi = (2.0 * fp.z).max(lambda + 1.0);
        prop_assert_eq!(sign_changes(lambda, beta, 100, lambda, z_hi, 10_000), 1);
    }
}

/// Moves a random share of each level's mass one level up, which can only
/// make the distribution stochastically larger.
fn push_up(x: &[f64], shares: &[f64]) -> Vec<f64> {
    let mut y = x.to_vec();
    for k in (0..x.len() - 1).rev() {
        let moved = shares[k % shares.len()] * y[k];
        y[k] -= moved;
        y[k + 1] += moved;
    }
    y
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn rlo_flow_preserves_stochastic_order(
        x in distribution(30, 30),
        shares in prop::collection::vec(0.0f64..1.0, 1..31),
        lambda in 0.1f64..0.95,
        beta in 0.0f64..2.0,
    ) {
        let y = push_up(&x, &shares);
        prop_assert!(st_leq(&x, &y));
        let field = Field::Rlo { lambda, beta };
        let tx = integrate(field, &OdeState::new(x).unwrap(), 5.0, 0.01, 10).unwrap();
        let ty = integrate(field, &OdeState::new(y).unwrap(), 5.0, 0.01, 10).unwrap();
        for ((t, a), (_, b)) in tx.iter().zip(&ty) {
            prop_assert!(st_leq(a.x(), b.x()), "order lost at t={}", t);
        }
    }
}

#[test]
fn extreme_starts_converge_monotonically_to_the_fixed_point() {
    let (lambda, beta, b_cap) = (0.8, 0.5, 30);
    let field = Field::Rlo { lambda, beta };
    let xi = solve_fixed_point_rlo(lambda, beta, b_cap, 1e-12).unwrap().xi;
    let empty = integrate(field, &OdeState::empty(b_cap), 400.0, 0.01, 500).unwrap();
    let full = integrate(field, &OdeState::full(b_cap), 400.0, 0.01, 500).unwrap();
    for w in empty.windows(2) {
        assert!(st_leq(w[0].1.x(), w[1].1.x()), "empty start not increasing at t={}", w[1].0);
    }
    for w in full.windows(2) {
        assert!(st_leq(w[1].1.x(), w[0].1.x()), "full start not decreasing at t={}", w[1].0);
    }
    for (e, f) in empty.iter().zip(&full) {
        assert!(st_leq(e.1.x(), f.1.x()));
    }
    let (le, lf) = (l1_distance(empty.last().unwrap().1.x(), &xi), l1_distance(full.last().unwrap().1.x(), &xi));
    assert!(le < 1e-6 && lf < 1e-6, "L1 distances {le:e} {lf:e}");
}

#[test]
fn single_precision_tracks_double_precision() {
    let x64 = integrate(Field::Rlo { lambda: 0.7f64, beta: 0.5 }, &OdeState::empty(20), 10.0, 0.01, 1000).unwrap();
    let x32 = integrate(Field::Rlo { lambda: 0.7f32, beta: 0.5 }, &OdeState::empty(20), 10.0, 0.01, 1000).unwrap();
    let (a, b) = (x64.last().unwrap().1.x(), x32.last().unwrap().1.x());
    let d: f64 = a.iter().zip(b).map(|(p, q)| (p - *q as f64).abs()).sum();
    assert!(d < 1e-4, "f32/f64 L1 gap {d}");
}
