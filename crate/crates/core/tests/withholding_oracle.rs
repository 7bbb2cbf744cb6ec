use incentive_core::withholding::{find_nash, max_deviation_gain, revenue, PoolSetup};
use nalgebra::{Matrix2, Vector2};
use proptest::prelude::*;

/// Revenue densities from the defining fixed point: each pool's density is its direct mining
/// share plus what its infiltrators earn inside the other pool, split over loyal and infiltrating members.
fn oracle(m1: f64, m2: f64, x1: f64, x2: f64) -> (f64, f64) {
    let work = 1.0 - x1 - x2;
    let (d1, d2) = ((m1 - x1) / work, (m2 - x2) / work);
    // (m1 + x2) r1 - x1 r2 = d1 ; -x2 r1 + (m2 + x1) r2 = d2
    let a = Matrix2::new(m1 + x2, -x1, -x2, m2 + x1);
    let r = a.lu().solve(&Vector2::new(d1, d2)).unwrap();
    (r[0], r[1])
}

#[test]
fn closed_form_matches_fixed_point() {
    let (r1, r2) = revenue(PoolSetup::new(0.1, 0.3).unwrap(), 0.02, 0.05).unwrap();
    let (o1, o2) = oracle(0.1, 0.3, 0.02, 0.05);
    assert!((r1 - o1).abs() < 1e-12 && (r2 - o2).abs() < 1e-12);
    // frozen from the oracle
    assert!((o1 - 0.70006863).abs() < 1e-8 && (o2 - 0.94943949).abs() < 1e-8);
}

proptest! {
    #[test]
    fn revenue_agrees_with_oracle(m1 in 0.01f64..0.6, share in 0.0f64..1.0, f1 in 0.0f64..1.0, f2 in 0.0f64..1.0) {
        let m2 = (1.0 - m1) * share.max(0.01);
        let (x1, x2) = (f1 * m1 * 0.99, f2 * m2 * 0.99);
        let (r1, r2) = revenue(PoolSetup::new(m1, m2).unwrap(), x1, x2).unwrap();
        let (o1, o2) = oracle(m1, m2, x1, x2);
        prop_assert!((r1 - o1).abs() < 1e-9 && (r2 - o2).abs() < 1e-9);
    }

    #[test]
    fn no_attack_is_fair(m1 in 0.01f64..0.99, share in 0.01f64..1.0) {
        let m2 = (1.0 - m1) * share;
        let (r1, r2) = revenue(PoolSetup::new(m1, m2).unwrap(), 0.0, 0.0).unwrap();
        prop_assert!((r1 - 1.0).abs() < 1e-12 && (r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn swapping_pools_swaps_revenue(m1 in 0.01f64..0.6, share in 0.01f64..1.0, f1 in 0.0f64..0.95, f2 in 0.0f64..0.95) {
        let m2 = (1.0 - m1) * share;
        let s = PoolSetup::new(m1, m2).unwrap();
        let (r1, r2) = revenue(s, f1 * m1, f2 * m2).unwrap();
        let (q1, q2) = revenue(s.swapped(), f2 * m2, f1 * m1).unwrap();
        prop_assert!((r1 - q2).abs() < 1e-12 && (r2 - q1).abs() < 1e-12);
    }
}

/// Symmetric equilibrium from the first-order condition, by bisection on a central-difference
/// derivative of the oracle revenue.
fn symmetric_equilibrium(m: f64) -> f64 {
    let slope = |x: f64| {
        let h = 1e-7;
        (oracle(m, m, x + h, x).0 - oracle(m, m, x - h, x).0) / (2.0 * h)
    };
    let (mut lo, mut hi) = (1e-6, m * 0.999);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if slope(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn equilibria_are_mutual_best_responses() {
    for m in [0.1, 0.2, 0.5] {
        let s = PoolSetup::new(m, m).unwrap();
        let ne = find_nash(s, 1e-6).unwrap();
        let x = symmetric_equilibrium(m);
        assert!((ne.x1 - x).abs() < 1e-4 && (ne.x2 - x).abs() < 1e-4, "m={m}: {} vs {x}", ne.x1);
        assert!(max_deviation_gain(s, ne.x1, ne.x2, 1e-3).unwrap() <= 1e-6);
    }
    // frozen from the first-order oracle
    assert!((symmetric_equilibrium(0.1) - 0.0052926).abs() < 1e-6);
    assert!((symmetric_equilibrium(0.2) - 0.0227998).abs() < 1e-6);
    assert!((symmetric_equilibrium(0.5) - 0.25).abs() < 1e-6);
}
