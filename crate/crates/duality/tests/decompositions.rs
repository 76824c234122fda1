use proptest::prelude::*;
use sgan_duality::caratheodory::combine;
use sgan_duality::{
    caratheodory_reduce, discrete_gan_value, shapley_folkman_decompose, DualityError, Part,
    SfInstance,
};

fn point(m: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0f64..5.0, m)
}

fn weights(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, n).prop_map(|w| {
        let s: f64 = w.iter().sum::<f64>() + 1e-3;
        w.iter().map(|x| (x + 1e-3 / w.len() as f64) / s).collect()
    })
}

/// Sets, one convex combination per set, and their summed target.
fn sf_instance(m: usize) -> impl Strategy<Value = SfInstance> {
    prop::collection::vec(
        (1usize..=4).prop_flat_map(move |k| {
            (prop::collection::vec(point(m), k), weights(k))
        }),
        1..=6,
    )
    .prop_map(move |sets| {
        let mut target = vec![0.0; m];
        for (pts, w) in &sets {
            target.iter_mut().zip(combine(pts, w)).for_each(|(t, x)| *t += x);
        }
        SfInstance {
            sets: sets.into_iter().map(|(p, _)| p).collect(),
            target,
        }
    })
}

fn kl(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(pi, _)| **pi > 0.0)
        .map(|(pi, qi)| pi * (pi / qi).ln())
        .sum()
}

fn distribution(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, n).prop_map(|w| {
        let s: f64 = w.iter().sum::<f64>().max(1e-300);
        w.iter().map(|x| x / s).collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn shapley_folkman_in_the_plane(inst in (1usize..=2).prop_flat_map(sf_instance)) {
        let m = inst.target.len();
        let d = shapley_folkman_decompose(&inst).unwrap();
        prop_assert!(d.convexified().len() <= m);
        for (part, set) in d.parts.iter().zip(&inst.sets) {
            match part {
                Part::Pick(j) => prop_assert!(*j < set.len()),
                Part::Convex(r) => {
                    prop_assert!(r.indices.len() <= m + 1);
                    prop_assert!((r.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                }
            }
        }
        let y = d.reconstruct(&inst);
        for (a, b) in y.iter().zip(&inst.target) {
            prop_assert!((a - b).abs() <= 1e-9);
        }
    }

    #[test]
    fn shapley_folkman_on_the_line_matches_interval(
        sets in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 1..=4), 1..=6),
        s in -1.2f64..1.2,
    ) {
        // In one dimension conv(sum Y_i) is [sum min, sum max].
        let lo: f64 = sets.iter().map(|y| y.iter().cloned().fold(f64::INFINITY, f64::min)).sum();
        let hi: f64 = sets.iter().map(|y| y.iter().cloned().fold(f64::NEG_INFINITY, f64::max)).sum();
        let t = 0.5 * (lo + hi) + s * 0.5 * (hi - lo);
        let inst = SfInstance {
            sets: sets.iter().map(|y| y.iter().map(|&x| vec![x]).collect()).collect(),
            target: vec![t],
        };
        let res = shapley_folkman_decompose(&inst);
        let margin = 1e-9 * (1.0 + lo.abs().max(hi.abs()));
        if t < lo - margin || t > hi + margin {
            let outside = matches!(res, Err(DualityError::NotInHull { .. }));
            prop_assert!(outside);
        } else if t > lo + margin && t < hi - margin {
            let d = res.unwrap();
            prop_assert!(d.convexified().len() <= 1);
            prop_assert!((d.reconstruct(&inst)[0] - t).abs() <= 1e-9);
        }
    }

    #[test]
    fn caratheodory_in_the_plane(
        (pts, w) in (1usize..=12).prop_flat_map(|n| (prop::collection::vec(point(2), n), weights(n)))
    ) {
        let r = caratheodory_reduce(&pts, &w).unwrap();
        prop_assert!(r.indices.len() <= 3);
        prop_assert!(r.weights.iter().all(|&x| x > 0.0));
        prop_assert!((r.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let target = combine(&pts, &w);
        for (a, b) in r.combine(&pts).iter().zip(&target) {
            prop_assert!((a - b).abs() <= 1e-9);
        }
    }

    #[test]
    fn caratheodory_in_three_dimensions(
        (pts, w) in (5usize..=10).prop_flat_map(|n| (prop::collection::vec(point(3), n), weights(n)))
    ) {
        let r = caratheodory_reduce(&pts, &w).unwrap();
        prop_assert!(r.indices.len() <= 4);
        let target = combine(&pts, &w);
        for (a, b) in r.combine(&pts).iter().zip(&target) {
            prop_assert!((a - b).abs() <= 1e-9);
        }
    }

    #[test]
    fn discrete_value_is_two_js_above_equilibrium(
        (p, q) in (1usize..=8).prop_flat_map(|n| (distribution(n), distribution(n)))
    ) {
        let r = discrete_gan_value(&p, &q).unwrap();
        let mid: Vec<f64> = p.iter().zip(&q).map(|(a, b)| 0.5 * (a + b)).collect();
        let js = 0.5 * kl(&p, &mid) + 0.5 * kl(&q, &mid);
        prop_assert!((r.value - (-(4.0f64).ln() + 2.0 * js)).abs() < 1e-12);
        prop_assert!((r.excess - 2.0 * js).abs() < 1e-12);
        let tv = 0.5 * p.iter().zip(&q).map(|(a, b)| (a - b).abs()).sum::<f64>();
        prop_assert_eq!(r.matched, tv <= 1e-9);
        if tv > 1e-3 {
            prop_assert!(r.value > -(4.0f64).ln() + 1e-9);
        }
    }

    #[test]
    fn discrete_value_of_identical_pair(p in (1usize..=8).prop_flat_map(distribution)) {
        let r = discrete_gan_value(&p, &p).unwrap();
        prop_assert!(r.matched);
        prop_assert!((r.value + (4.0f64).ln()).abs() < 1e-12);
    }
}
