use sgan_core::gan::{
    alternating_step, probe_gap, sample, train, Checkpoint, EnsembleKind, EnsembleState, GanError,
    GanModel, Game, Result, TrainConfig,
};
use sgan_core::nets::{Activation, LayerSpec};
use sgan_core::rng::Rng;
use sgan_core::synthdata::make_ring_mixture;

/// `f(theta, gamma) = theta * gamma` with one scalar generator.
struct Bilinear;

impl Game for Bilinear {
    fn value(&self, theta: &[f64], gammas: &[&[f64]]) -> Result<f64> {
        Ok(theta[0] * gammas[0][0])
    }
    fn theta_grad(&self, theta: &[f64], gammas: &[&[f64]]) -> Result<(f64, Vec<f64>)> {
        Ok((self.value(theta, gammas)?, vec![gammas[0][0]]))
    }
    fn gamma_grads(&self, theta: &[f64], gammas: &[&[f64]]) -> Result<(f64, Vec<Vec<f64>>)> {
        Ok((self.value(theta, gammas)?, vec![vec![theta[0]]]))
    }
}

/// `f = -(theta - 1)^2 / 2 + theta * gamma + (gamma - 2)^2 / 2`, returning NaN
/// when `poison` is set.
struct Quadratic {
    poison: bool,
}

impl Game for Quadratic {
    fn value(&self, th: &[f64], g: &[&[f64]]) -> Result<f64> {
        if self.poison {
            return Ok(f64::NAN);
        }
        let (t, y) = (th[0], g[0][0]);
        Ok(-0.5 * (t - 1.0).powi(2) + t * y + 0.5 * (y - 2.0).powi(2))
    }
    fn theta_grad(&self, th: &[f64], g: &[&[f64]]) -> Result<(f64, Vec<f64>)> {
        Ok((self.value(th, g)?, vec![-(th[0] - 1.0) + g[0][0]]))
    }
    fn gamma_grads(&self, th: &[f64], g: &[&[f64]]) -> Result<(f64, Vec<Vec<f64>>)> {
        Ok((self.value(th, g)?, vec![vec![th[0] + g[0][0] - 2.0]]))
    }
}

fn scalar_state(theta: f64, gamma: f64, lr: f64) -> EnsembleState {
    use sgan_core::nets::{AdamConfig, AdamState, ParamLayout, ParamVector};
    let cfg = AdamConfig { lr, ..AdamConfig::default() };
    let mut t = ParamVector::zeros(ParamLayout::flat(1));
    t.values[0] = theta;
    let mut g = ParamVector::zeros(ParamLayout::flat(1));
    g.values[0] = gamma;
    EnsembleState {
        d_opt: AdamState::new(1, cfg),
        g_opts: vec![AdamState::new(1, cfg)],
        theta: t,
        gammas: vec![g],
        step: 0,
    }
}

fn tiny_config(generators: usize, steps: u64) -> TrainConfig {
    let mut cfg = TrainConfig::mixture(generators, &[2, 4, 2]);
    let lrelu = Activation::LeakyRelu { slope: 0.2 };
    cfg.disc_specs = vec![
        LayerSpec::new(2, 8, false, lrelu),
        LayerSpec::new(8, 8, false, lrelu),
        LayerSpec::new(8, 1, false, Activation::Sigmoid),
    ];
    cfg.real_batch = 16;
    cfg.gen_batch = 4;
    cfg.steps = steps;
    cfg.log_every = 1;
    cfg.seed = 21;
    cfg
}

#[test]
fn bilinear_gap_closed_form() {
    // theta_K = theta_0 + K lr gamma_0 and gamma_K = gamma_0 - K lr theta_0, so
    // w - q = K lr (gamma_0^2 + theta_0^2).
    for (t0, g0, k, lr) in [(0.3, -0.7, 10, 0.01), (1.0, 2.0, 50, 1e-3), (0.0, 0.0, 20, 0.1)] {
        let r = probe_gap(&Bilinear, &[t0], &[&[g0]], k, lr).unwrap();
        let want = k as f64 * lr * (g0 * g0 + t0 * t0);
        assert!((r.gap_proxy - want).abs() < 1e-12, "{r:?}");
        assert!((r.w_hat - (t0 + k as f64 * lr * g0) * g0).abs() < 1e-12);
        assert!(r.valid);
    }
}

#[test]
fn bilinear_gap_vanishes_with_step_size_at_saddle() {
    let gaps: Vec<f64> = [1e-1, 1e-2, 1e-3]
        .iter()
        .map(|&lr| probe_gap(&Bilinear, &[0.01], &[&[0.01]], 100, lr).unwrap().gap_proxy)
        .collect();
    assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2]);
    // Linear in the step size: K lr (theta_0^2 + gamma_0^2).
    assert!((gaps[2] - 2e-5).abs() < 1e-15);
}

#[test]
fn alternating_step_orders_the_players() {
    // First Adam step moves each coordinate by lr * |g| / (|g| + eps). The generator
    // gradient is taken after the discriminator moved.
    let lr = 0.1;
    let mut st = scalar_state(0.5, 0.25, lr);
    let game = Quadratic { poison: false };
    let row = alternating_step(&mut st, &game, &game).unwrap();
    // d/dtheta at (0.5, 0.25) = 0.75 > 0, ascent: theta -> 0.6.
    assert!((st.theta.values[0] - 0.6).abs() < 1e-8);
    // d/dgamma at (0.6, 0.25) = -1.15 < 0, descent: gamma -> 0.35.
    assert!((st.gammas[0].values[0] - 0.35).abs() < 1e-8);
    assert_eq!(st.step, 1);
    assert!((row.objective - (-0.125 + 0.125 + 0.5 * 1.75f64.powi(2))).abs() < 1e-12);
}

#[test]
fn non_finite_step_leaves_state_untouched() {
    let mut st = scalar_state(0.5, 0.25, 0.1);
    let before = st.clone();
    let err = alternating_step(&mut st, &Quadratic { poison: true }, &Quadratic { poison: true }).unwrap_err();
    assert!(matches!(err, GanError::NonFinite { step: 0, .. }));
    assert_eq!(st, before);

    // The discriminator phase succeeds and the generator phase fails: roll back.
    let err = alternating_step(&mut st, &Quadratic { poison: false }, &Quadratic { poison: true }).unwrap_err();
    match err {
        GanError::NonFinite { phase, last_good, .. } => {
            assert_eq!(phase, "generator");
            assert_eq!(*last_good.unwrap(), before);
        }
        e => panic!("{e}"),
    }
    assert_eq!(st, before);
}

#[test]
fn zero_learning_rates_only_advance_the_counter() {
    let mut cfg = tiny_config(2, 5);
    cfg.d_adam.lr = 0.0;
    cfg.g_adam.lr = 0.0;
    let data = make_ring_mixture(8, 0.8, 0.01).unwrap();
    let run = train(&cfg, &data).unwrap();
    let init = EnsembleState::init(&cfg);
    assert_eq!(run.state.theta, init.theta);
    assert_eq!(run.state.gammas, init.gammas);
    assert_eq!(run.state.step, 5);
}

#[test]
fn zero_steps_returns_initial_state() {
    let cfg = tiny_config(3, 0);
    let data = make_ring_mixture(8, 0.8, 0.01).unwrap();
    let run = train(&cfg, &data).unwrap();
    assert_eq!(run.state, EnsembleState::init(&cfg));
    assert!(run.log.is_empty());
}

#[test]
fn training_is_deterministic_and_seed_sensitive() {
    let data = make_ring_mixture(8, 0.8, 0.01).unwrap();
    for kind in [EnsembleKind::Stackelberg, EnsembleKind::MultiBranch] {
        let mut cfg = tiny_config(2, 20);
        cfg.ensemble = kind;
        let a = train(&cfg, &data).unwrap();
        let b = train(&cfg, &data).unwrap();
        assert_eq!(a.state, b.state);
        assert_eq!(a.log, b.log);
        assert!(a.log.iter().all(|r| r.objective.is_finite()));
        cfg.seed += 1;
        assert_ne!(train(&cfg, &data).unwrap().state, a.state);
    }
}

#[test]
fn resumed_training_matches_uninterrupted() {
    let data = make_ring_mixture(8, 0.8, 0.01).unwrap();
    let cfg = tiny_config(2, 12);
    let full = train(&cfg, &data).unwrap();
    let mut half = cfg.clone();
    half.steps = 6;
    let first = train(&half, &data).unwrap();
    let model = GanModel::new(&cfg).unwrap();
    let rest = sgan_core::gan::train_from(&cfg, &model, first.state, &data, |_| {}).unwrap();
    assert_eq!(rest.state, full.state);
}

#[test]
fn sample_labels_are_uniform() {
    let cfg = tiny_config(10, 0);
    let model = GanModel::new(&cfg).unwrap();
    let st = EnsembleState::init(&cfg);
    let n = 100_000;
    let s = sample(&st, &model, n, &mut Rng::new(77)).unwrap();
    assert_eq!(s.points.shape(), (n, 2));
    let mut counts = [0usize; 10];
    s.labels.iter().for_each(|&l| counts[l] += 1);
    for c in counts {
        // Binomial sd is about 0.00095; 0.004 is over four of them.
        assert!((c as f64 / n as f64 - 0.1).abs() < 0.004, "{counts:?}");
    }
}

#[test]
fn samples_stay_in_tanh_range() {
    let mut cfg = tiny_config(3, 0);
    cfg.seed = 2;
    let model = GanModel::new(&cfg).unwrap();
    let mut st = EnsembleState::init(&cfg);
    st.gammas.iter_mut().for_each(|g| g.values.iter_mut().for_each(|v| *v *= 500.0));
    let s = sample(&st, &model, 500, &mut Rng::new(1)).unwrap();
    assert!(s.points.data.iter().all(|v| (-1.0..=1.0).contains(v)));
}

#[test]
fn checkpoint_round_trip() {
    let data = make_ring_mixture(8, 0.8, 0.01).unwrap();
    let cfg = tiny_config(2, 3);
    let run = train(&cfg, &data).unwrap();
    let ck = Checkpoint { config: cfg.clone(), state: run.state };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ck.json");
    ck.save(&path).unwrap();
    assert_eq!(Checkpoint::load(&path).unwrap(), ck);

    let mut bad = ck.clone();
    bad.state.gammas.pop();
    bad.save(&path).unwrap();
    assert!(matches!(Checkpoint::load(&path), Err(GanError::Checkpoint { .. })));
    std::fs::write(&path, "{not json").unwrap();
    assert!(Checkpoint::load(&path).is_err());
}
