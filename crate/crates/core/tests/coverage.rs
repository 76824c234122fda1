use proptest::prelude::*;
use sgan_core::gan::{Samples, TrainConfig};
use sgan_core::metrics::{
    assign_and_score, coverage_csv, coverage_experiment, every_mode_dominant, generator_balance,
    summarize, ExperimentCell, MetricsError, SUMMARY_HEADER,
};
use sgan_core::rng::Rng;
use sgan_core::synthdata::{make_ring_mixture, MixtureSpec};
use sgan_core::Tensor;

fn spec() -> MixtureSpec {
    make_ring_mixture(8, 0.8, 0.01).unwrap()
}

fn samples(points: Vec<[f64; 2]>, labels: Vec<usize>) -> Samples {
    let n = points.len();
    Samples {
        points: Tensor::from_vec(n, 2, points.into_iter().flatten().collect()),
        labels,
    }
}

/// `n` points around `center` with standard deviation `std`, all from generator `g`.
fn blob(center: [f64; 2], std: f64, n: usize, g: usize, rng: &mut Rng) -> (Vec<[f64; 2]>, Vec<usize>) {
    let pts = (0..n)
        .map(|_| [center[0] + std * rng.normal(), center[1] + std * rng.normal()])
        .collect();
    (pts, vec![g; n])
}

#[test]
fn gaussian_hq_fraction_matches_rayleigh_tail() {
    // P(|x - c| <= 4 sigma) for an isotropic 2-D Gaussian is 1 - exp(-16 / 2).
    let s = spec();
    let (p, l) = blob(s.centers[0], s.std, 2000, 0, &mut Rng::new(1));
    let r = assign_and_score(&samples(p, l), 1, &s, 4.0).unwrap();
    let want = 1.0 - (-8.0f64).exp();
    // Binomial sd at n = 2000 is about 4e-4.
    assert!((r.hq_fraction - want).abs() < 2e-3, "{}", r.hq_fraction);
    assert_eq!(r.modes_covered, 1);
}

#[test]
fn one_generator_per_mode_is_a_perfect_matching() {
    let s = spec();
    let mut rng = Rng::new(2);
    let (mut pts, mut labels) = (Vec::new(), Vec::new());
    for (g, &c) in s.centers.iter().enumerate() {
        let (p, l) = blob(c, 0.5 * s.std, 500, (g + 3) % 8, &mut rng);
        pts.extend(p);
        labels.extend(l);
    }
    let r = assign_and_score(&samples(pts, labels), 8, &s, 4.0).unwrap();
    assert_eq!(r.modes_covered, 8);
    let b = generator_balance(&r);
    assert!((b.entropy - 8f64.ln()).abs() < 1e-12);
    let mut owned: Vec<usize> = b.dominant_modes.iter().map(|d| {
        assert_eq!(d.len(), 1);
        d[0]
    }).collect();
    assert_eq!(owned[0], 5);
    owned.sort_unstable();
    assert_eq!(owned, (0..8).collect::<Vec<_>>());
    assert!(every_mode_dominant(&b, 8));
}

#[test]
fn single_generator_has_zero_entropy() {
    let s = spec();
    let (p, l) = blob(s.centers[2], s.std, 300, 0, &mut Rng::new(3));
    let r = assign_and_score(&samples(p, l), 4, &s, 4.0).unwrap();
    let b = generator_balance(&r);
    assert_eq!(b.entropy, 0.0);
    assert!(!every_mode_dominant(&b, 8));
}

#[test]
fn experiment_requires_seeds() {
    let cell = ExperimentCell {
        name: "x".into(),
        config: TrainConfig::mixture(1, &[2, 4, 2]),
    };
    assert!(matches!(
        coverage_experiment(&[cell], &[], &spec(), 100, 4.0),
        Err(MetricsError::NoSeeds)
    ));
}

#[test]
fn tiny_experiment_is_deterministic() {
    let mut config = TrainConfig::mixture(2, &[2, 4, 2]);
    config.steps = 3;
    let cells = [ExperimentCell { name: "tiny, two".into(), config }];
    let a = coverage_experiment(&cells, &[1, 2], &spec(), 200, 4.0).unwrap();
    let b = coverage_experiment(&cells, &[1, 2], &spec(), 200, 4.0).unwrap();
    assert_eq!(a, b);
    let csv = coverage_csv(&a);
    assert_eq!(csv, coverage_csv(&b));
    assert!(csv.starts_with(SUMMARY_HEADER));
    assert!(csv.lines().skip(1).all(|l| l.starts_with("\"tiny, two\",")));
    assert!(summarize(&a, "tiny, two", 8).is_some());
    assert!(summarize(&a, "other", 8).is_none());
}

fn cloud() -> impl Strategy<Value = Vec<([f64; 2], usize)>> {
    prop::collection::vec(((-1.0f64..1.0, -1.0f64..1.0), 0usize..3), 1..200)
        .prop_map(|v| v.into_iter().map(|((x, y), g)| ([x, y], g)).collect())
}

proptest! {
    #[test]
    fn counts_partition_the_samples(pts in cloud()) {
        let s = spec();
        let (p, l): (Vec<_>, Vec<_>) = pts.into_iter().unzip();
        let n = p.len();
        let r = assign_and_score(&samples(p, l), 3, &s, 4.0).unwrap();
        prop_assert_eq!(r.mode_counts.iter().sum::<usize>(), n);
        prop_assert_eq!(r.gen_mode.iter().flatten().sum::<usize>(), n);
        prop_assert!(r.hq_counts.iter().zip(&r.mode_counts).all(|(h, m)| h <= m));
        let b = generator_balance(&r);
        prop_assert!(b.entropy >= 0.0 && b.entropy <= 3f64.ln() + 1e-12);
    }

    #[test]
    fn score_ignores_sample_order(pts in cloud(), seed in any::<u64>()) {
        let s = spec();
        let mut shuffled = pts.clone();
        let mut rng = Rng::new(seed);
        for i in (1..shuffled.len()).rev() {
            shuffled.swap(i, rng.below(i + 1));
        }
        let (p, l): (Vec<_>, Vec<_>) = pts.into_iter().unzip();
        let (q, m): (Vec<_>, Vec<_>) = shuffled.into_iter().unzip();
        prop_assert_eq!(
            assign_and_score(&samples(p, l), 3, &s, 4.0).unwrap(),
            assign_and_score(&samples(q, m), 3, &s, 4.0).unwrap()
        );
    }

    #[test]
    fn coverage_grows_with_extension(seed in any::<u64>(), rounds in 1usize..50) {
        // Extend by one point at every center per round. A covered mode keeps
        // hq >= 0.01 n + c >= 0.01 (n + 8 c), so nothing is uncovered.
        let s = spec();
        let mut rng = Rng::new(seed);
        let base: Vec<[f64; 2]> = (0..100)
            .map(|k| {
                let c = s.centers[k % 3];
                [c[0] + 0.02 * rng.normal(), c[1] + 0.02 * rng.normal()]
            })
            .collect();
        let mut ext = base.clone();
        for _ in 0..rounds {
            ext.extend(s.centers.iter().copied());
        }
        let a = assign_and_score(&samples(base.clone(), vec![0; base.len()]), 1, &s, 4.0).unwrap();
        let b = assign_and_score(&samples(ext.clone(), vec![0; ext.len()]), 1, &s, 4.0).unwrap();
        prop_assert!(b.modes_covered >= a.modes_covered);
        for m in 0..8 {
            prop_assert!(!a.covered[m] || b.covered[m]);
        }
    }
}
