use proptest::prelude::*;
use sgan_duality::family::{closure_h, delta_exact, delta_grid, q_star, w_star};
use sgan_duality::grid::uniform_grid;
use sgan_duality::{exact_minimax, DualityError, QuadraticFamily};

/// `max_theta min_gamma phi` for `t = 1`: pieces differ by affine functions,
/// so each piece is active on an interval; clamp its peak into that interval.
fn q_star_intervals(pairs: &[(f64, f64)]) -> f64 {
    let phi = |(a, b): (f64, f64), th: f64| a * th - 0.5 * th * th + b;
    let mut best = f64::NEG_INFINITY;
    for (g, &(ag, bg)) in pairs.iter().enumerate() {
        let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
        let mut empty = false;
        for (k, &(ak, bk)) in pairs.iter().enumerate() {
            if k == g {
                continue;
            }
            // phi_g <= phi_k  <=>  (ag - ak) th <= bk - bg
            let (s, r) = (ag - ak, bk - bg);
            if s > 0.0 {
                hi = hi.min(r / s);
            } else if s < 0.0 {
                lo = lo.max(r / s);
            } else if r < 0.0 {
                empty = true;
            }
        }
        if empty || lo > hi {
            continue;
        }
        best = best.max(phi((ag, bg), ag.clamp(lo, hi)));
    }
    best
}

/// `w*` by brute force over ordered `I`-tuples.
fn w_star_tuples(pairs: &[(f64, f64)], i: usize) -> f64 {
    let n = pairs.len();
    let mut best = f64::INFINITY;
    let mut idx = vec![0usize; i];
    loop {
        let a: f64 = idx.iter().map(|&k| pairs[k].0).sum::<f64>() / i as f64;
        let b: f64 = idx.iter().map(|&k| pairs[k].1).sum::<f64>() / i as f64;
        best = best.min(0.5 * a * a + b);
        let mut p = 0;
        loop {
            if p == i {
                return best;
            }
            idx[p] += 1;
            if idx[p] < n {
                break;
            }
            idx[p] = 0;
            p += 1;
        }
    }
}

fn family() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-2.0f64..2.0, -2.0f64..2.0), 1..=6)
}

#[test]
fn pm1_closed_form() {
    let fam = QuadraticFamily::pm1();
    for i in 1..=64usize {
        let r = exact_minimax(&fam, i).unwrap();
        let w = if i % 2 == 1 { 0.5 / (i * i) as f64 } else { 0.0 };
        assert!((r.w_star - w).abs() < 1e-10, "I={i}");
        assert!(r.q_star.abs() < 1e-10);
        assert!((r.delta_worst - 0.5).abs() < 1e-10);
        assert!(r.holds);
    }
}

#[test]
fn pm1_envelope_matches_exact_delta() {
    let fam = QuadraticFamily::pm1();
    let grid = uniform_grid(-3.0, 3.0, 601).unwrap();
    assert!((delta_grid(&fam, &grid).unwrap() - 0.5).abs() < 1e-12);
    // h(u) = (|u| - 1)^2 / 2 has closure 0 on [-1, 1].
    for u in [-1.0, -0.3, 0.0, 0.8, 1.0] {
        assert!(closure_h(&fam, u).unwrap().abs() < 1e-15);
    }
    assert!((closure_h(&fam, 2.0).unwrap() - 0.5).abs() < 1e-15);
}

#[test]
fn t2_is_rejected_by_exact_minimax() {
    let fam = QuadraticFamily::new(vec![(vec![1.0, 0.0], 0.0), (vec![0.0, 1.0], 0.0)]).unwrap();
    assert!(matches!(exact_minimax(&fam, 2), Err(DualityError::Unsupported(_))));
}

#[test]
fn enumeration_cap_is_enforced() {
    let pairs: Vec<(f64, f64)> = (0..6).map(|k| (k as f64 * 0.1, 0.0)).collect();
    let fam = QuadraticFamily::scalar(&pairs).unwrap();
    assert!(matches!(w_star(&fam, 200), Err(DualityError::EnumerationCap { .. })));
}

#[test]
fn t2_q_star_against_nested_grid() {
    let fam = QuadraticFamily::new(vec![
        (vec![1.0, 0.0], 0.0),
        (vec![-0.5, 0.8], 0.1),
        (vec![-0.5, -0.8], -0.2),
    ])
    .unwrap();
    // Coarse grid, then a fine grid around the best coarse point. The
    // objective is 3-Lipschitz on the box, so the fine error is below 3e-4.
    let scan = |c: [f64; 2], half: f64, n: usize| {
        let mut best = (f64::NEG_INFINITY, c);
        for i in 0..=n {
            for j in 0..=n {
                let th = [
                    c[0] - half + 2.0 * half * i as f64 / n as f64,
                    c[1] - half + 2.0 * half * j as f64 / n as f64,
                ];
                let v = fam.inner_min(&th);
                if v > best.0 {
                    best = (v, th);
                }
            }
        }
        best
    };
    let (_, c) = scan([0.0, 0.0], 2.0, 400);
    let (best, _) = scan(c, 0.02, 400);
    let q = q_star(&fam);
    assert!(q >= best - 1e-12);
    assert!(q - best < 3e-4);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn q_star_matches_interval_oracle(pairs in family()) {
        let fam = QuadraticFamily::scalar(&pairs).unwrap();
        prop_assert!((q_star(&fam) - q_star_intervals(&pairs)).abs() < 1e-10);
    }

    #[test]
    fn w_star_matches_tuple_enumeration(pairs in family(), i in 1usize..=4) {
        let fam = QuadraticFamily::scalar(&pairs).unwrap();
        prop_assert!((w_star(&fam, i).unwrap() - w_star_tuples(&pairs, i)).abs() < 1e-12);
    }

    #[test]
    fn replicated_ensembles_do_no_worse(pairs in family(), i in 1usize..=4, k in 2usize..=3) {
        let fam = QuadraticFamily::scalar(&pairs).unwrap();
        prop_assert!(w_star(&fam, i * k).unwrap() <= w_star(&fam, i).unwrap() + 1e-12);
    }

    #[test]
    fn gap_is_nonnegative_and_bounded(pairs in family(), i in 1usize..=12) {
        let fam = QuadraticFamily::scalar(&pairs).unwrap();
        let r = exact_minimax(&fam, i).unwrap();
        prop_assert!(r.gap >= -1e-12);
        prop_assert!(r.gap <= r.bound + 1e-9);
        prop_assert!(r.holds);
    }

    #[test]
    fn exact_delta_agrees_with_grid_envelope(pairs in family()) {
        let fam = QuadraticFamily::scalar(&pairs).unwrap();
        let grid = uniform_grid(-8.0, 8.0, 3201).unwrap();
        let h = 16.0 / 3200.0;
        let exact = delta_exact(&fam).unwrap();
        let g = delta_grid(&fam, &grid).unwrap();
        // Both are sups of h - cl h; the grid version sees a coarser envelope
        // and may miss the exact kink.
        prop_assert!((exact - g).abs() < 10.0 * h, "{exact} vs {g}");
    }

    #[test]
    fn closure_is_below_h_and_convex(pairs in family(), u in -4.0f64..4.0) {
        let fam = QuadraticFamily::scalar(&pairs).unwrap();
        let c = |x: f64| closure_h(&fam, x).unwrap();
        prop_assert!(c(u) <= fam.h(&[u]) + 1e-12);
        prop_assert!(c(u) <= 0.5 * (c(u - 0.37) + c(u + 0.37)) + 1e-12);
    }
}
