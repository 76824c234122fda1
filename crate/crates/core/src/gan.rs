//! The ensemble GAN objective, alternating training, sampling and the
//! empirical duality-gap probe.
//!
//! The shared objective is `(1/I) * sum_i phi(gamma_i; theta)` with
//! `phi = E f(D(x)) + E f(1 - D(G(z)))`. The discriminator ascends it, every
//! generator descends it.

use std::fs;
use std::path::Path;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::AutodiffError;
use crate::nets::{
    adam_step, build_mlp, discriminator_specs, generator_specs, init_params, validate_specs,
    AdamConfig, AdamState, LayerSpec, Mlp, NetsError, ParamVector,
};
use crate::rng::Rng;
use crate::synthdata::{DataSource, IMAGE_DIM};
use crate::tensor::Tensor;

/// Discriminator outputs are clamped to `[D_CLAMP, 1 - D_CLAMP]` before `log`.
pub const D_CLAMP: f64 = 1e-7;

const STREAM_INIT: u64 = 1;
const STREAM_D_PHASE: u64 = 2;
const STREAM_G_PHASE: u64 = 3;

#[derive(Debug, Error)]
pub enum GanError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("batch has {found} columns, expected {expected}")]
    BatchShape { expected: usize, found: usize },
    #[error("expected {expected} generator parameter vectors, got {found}")]
    GeneratorCount { expected: usize, found: usize },
    #[error("non-finite {phase} loss {value} at step {step}")]
    NonFinite {
        step: u64,
        phase: &'static str,
        value: f64,
        /// State before the failing step.
        last_good: Option<Box<EnsembleState>>,
    },
    #[error(transparent)]
    Nets(#[from] NetsError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: String, message: String },
}

pub type Result<T> = std::result::Result<T, GanError>;

/// The concave increasing `f` inside the payoff.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PayoffKind {
    /// `log`, the classic GAN.
    #[default]
    Log,
    /// Identity, the Wasserstein form.
    Identity,
}

impl PayoffKind {
    pub fn f(self, x: f64) -> f64 {
        match self {
            PayoffKind::Log => x.clamp(D_CLAMP, 1.0 - D_CLAMP).ln(),
            PayoffKind::Identity => x,
        }
    }

    /// Derivative of [`PayoffKind::f`]; zero where the clamp is active.
    pub fn df(self, x: f64) -> f64 {
        match self {
            PayoffKind::Log if (D_CLAMP..=1.0 - D_CLAMP).contains(&x) => 1.0 / x,
            PayoffKind::Log => 0.0,
            PayoffKind::Identity => 1.0,
        }
    }
}

/// How the `I` generator parameter vectors are combined.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleKind {
    /// `I` separate generators, equal-weight ensemble of payoffs.
    #[default]
    Stackelberg,
    /// One composite generator whose output is the average of `I` branch outputs.
    MultiBranch,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub generators: usize,
    #[serde(default)]
    pub ensemble: EnsembleKind,
    pub gen_specs: Vec<LayerSpec>,
    pub disc_specs: Vec<LayerSpec>,
    #[serde(default)]
    pub payoff: PayoffKind,
    #[serde(default)]
    pub non_saturating: bool,
    pub steps: u64,
    pub log_every: u64,
    pub real_batch: usize,
    /// Noise batch per generator (per branch-composite for multi-branch).
    pub gen_batch: usize,
    pub d_adam: AdamConfig,
    pub g_adam: AdamConfig,
    pub seed: u64,
}

impl TrainConfig {
    /// Mixture-of-Gaussians defaults: `D = 2-512-256-1`, real batch 64,
    /// Adam(2e-4, 0.5, 0.999), 25k steps. `gen_dims = [noise, hidden..., 2]`.
    pub fn mixture(generators: usize, gen_dims: &[usize]) -> Self {
        let real_batch = 64;
        Self {
            generators,
            ensemble: EnsembleKind::Stackelberg,
            gen_specs: generator_specs(gen_dims),
            disc_specs: discriminator_specs(2),
            payoff: PayoffKind::Log,
            non_saturating: false,
            steps: 25_000,
            log_every: 100,
            real_batch,
            gen_batch: default_gen_batch(real_batch, generators),
            d_adam: AdamConfig::default(),
            g_adam: AdamConfig::default(),
            seed: 0,
        }
    }

    /// MNIST defaults: `G = 100-512(BN)-784(tanh)`, `D = 784-512-256-1`,
    /// real batch 100.
    pub fn mnist(generators: usize) -> Self {
        Self::image(generators, &[100, 512, IMAGE_DIM])
    }

    /// Fashion-MNIST defaults: `G = 2-128-256-512-1024-784`, otherwise as MNIST.
    pub fn fashion(generators: usize) -> Self {
        Self::image(generators, &[2, 128, 256, 512, 1024, IMAGE_DIM])
    }

    fn image(generators: usize, gen_dims: &[usize]) -> Self {
        let real_batch = 100;
        Self {
            disc_specs: discriminator_specs(IMAGE_DIM),
            real_batch,
            gen_batch: default_gen_batch(real_batch, generators),
            ..Self::mixture(generators, gen_dims)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(GanError::Config(m));
        if self.generators == 0 {
            return bad("generators must be at least 1".into());
        }
        if self.real_batch == 0 || self.gen_batch == 0 {
            return bad("batch sizes must be at least 1".into());
        }
        validate_specs(&self.gen_specs)
            .map_err(|e| GanError::Config(format!("generator: {e}")))?;
        validate_specs(&self.disc_specs)
            .map_err(|e| GanError::Config(format!("discriminator: {e}")))?;
        let g_out = self.gen_specs[self.gen_specs.len() - 1].output;
        let d_in = self.disc_specs[0].input;
        if g_out != d_in {
            return bad(format!(
                "generator outputs {g_out} dims but the discriminator expects {d_in}"
            ));
        }
        let d_out = self.disc_specs[self.disc_specs.len() - 1].output;
        if d_out != 1 {
            return bad(format!("discriminator must output 1 value, not {d_out}"));
        }
        for (name, a) in [("d_adam", &self.d_adam), ("g_adam", &self.g_adam)] {
            let ok = a.lr >= 0.0
                && a.lr.is_finite()
                && (0.0..1.0).contains(&a.beta1)
                && (0.0..1.0).contains(&a.beta2)
                && a.eps >= 0.0;
            if !ok {
                return bad(format!("{name} hyperparameters out of range: {a:?}"));
            }
        }
        Ok(())
    }

    pub fn noise_dim(&self) -> usize {
        self.gen_specs[0].input
    }

    pub fn data_dim(&self) -> usize {
        self.disc_specs[0].input
    }
}

/// `ceil(real_batch / generators)`: the generators together produce about
/// as many fake samples per phase as there are real ones.
pub fn default_gen_batch(real_batch: usize, generators: usize) -> usize {
    real_batch.div_ceil(generators.max(1)).max(1)
}

/// Discriminator, generators, their optimizers and the step counter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleState {
    pub theta: ParamVector,
    pub gammas: Vec<ParamVector>,
    pub d_opt: AdamState,
    pub g_opts: Vec<AdamState>,
    pub step: u64,
}

impl EnsembleState {
    /// Fresh parameters; each player draws from its own stream of `config.seed`.
    pub fn init(config: &TrainConfig) -> Self {
        let theta = init_params(&config.disc_specs, &mut Rng::stream(&[config.seed, STREAM_INIT, 0]));
        let gammas: Vec<ParamVector> = (0..config.generators)
            .map(|i| {
                init_params(
                    &config.gen_specs,
                    &mut Rng::stream(&[config.seed, STREAM_INIT, 1 + i as u64]),
                )
            })
            .collect();
        Self {
            d_opt: AdamState::new(theta.len(), config.d_adam),
            g_opts: gammas
                .iter()
                .map(|g| AdamState::new(g.len(), config.g_adam))
                .collect(),
            theta,
            gammas,
            step: 0,
        }
    }

    pub fn generators(&self) -> usize {
        self.gammas.len()
    }

    pub fn gamma_slices(&self) -> Vec<&[f64]> {
        self.gammas.iter().map(|g| g.values.as_slice()).collect()
    }
}

/// A two-sided game on flat parameter vectors: `theta` maximizes the value,
/// the `gammas` minimize their loss (equal to the value unless a
/// non-saturating generator loss is in use).
pub trait Game {
    fn value(&self, theta: &[f64], gammas: &[&[f64]]) -> Result<f64>;
    /// Value and its gradient with respect to `theta`.
    fn theta_grad(&self, theta: &[f64], gammas: &[&[f64]]) -> Result<(f64, Vec<f64>)>;
    /// Generator loss and its gradient with respect to every `gamma_i`.
    fn gamma_grads(&self, theta: &[f64], gammas: &[&[f64]]) -> Result<(f64, Vec<Vec<f64>>)>;
}

/// Graph caches and architecture for one training setup.
#[derive(Debug)]
pub struct GanModel {
    pub gen_specs: Vec<LayerSpec>,
    pub disc_specs: Vec<LayerSpec>,
    pub generators: usize,
    pub ensemble: EnsembleKind,
    pub payoff: PayoffKind,
    pub non_saturating: bool,
    gen_nets: Mutex<Vec<Arc<Mlp>>>,
    disc_nets: Mutex<Vec<Arc<Mlp>>>,
}

fn cached(cache: &Mutex<Vec<Arc<Mlp>>>, specs: &[LayerSpec], batch: usize) -> Result<Arc<Mlp>> {
    let mut nets = cache.lock().unwrap_or_else(|e| e.into_inner());
    if let Some(n) = nets.iter().find(|n| n.batch == batch) {
        return Ok(Arc::clone(n));
    }
    let net = Arc::new(build_mlp(specs, batch)?);
    nets.push(Arc::clone(&net));
    Ok(net)
}

struct Pass {
    value: f64,
    g_loss: f64,
    theta_grad: Option<Vec<f64>>,
    gamma_grads: Option<Vec<Vec<f64>>>,
}

impl GanModel {
    pub fn new(config: &TrainConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            gen_specs: config.gen_specs.clone(),
            disc_specs: config.disc_specs.clone(),
            generators: config.generators,
            ensemble: config.ensemble,
            payoff: config.payoff,
            non_saturating: config.non_saturating,
            gen_nets: Mutex::new(Vec::new()),
            disc_nets: Mutex::new(Vec::new()),
        })
    }

    pub fn noise_dim(&self) -> usize {
        self.gen_specs[0].input
    }

    pub fn data_dim(&self) -> usize {
        self.disc_specs[0].input
    }

    fn gen_net(&self, batch: usize) -> Result<Arc<Mlp>> {
        cached(&self.gen_nets, &self.gen_specs, batch)
    }

    fn disc_net(&self, batch: usize) -> Result<Arc<Mlp>> {
        cached(&self.disc_nets, &self.disc_specs, batch)
    }

    /// `G_gamma(z)` for a `[n, noise_dim]` batch; batch-norm uses this batch's statistics.
    pub fn generate(&self, gamma: &[f64], z: &Tensor) -> Result<Tensor> {
        check_cols(z, self.noise_dim())?;
        if z.rows == 0 {
            return Ok(Tensor::zeros(0, self.data_dim()));
        }
        Ok(self.gen_net(z.rows)?.forward(z, gamma)?)
    }

    /// `D_theta(x)` per row.
    pub fn discriminate(&self, theta: &[f64], x: &Tensor) -> Result<Vec<f64>> {
        check_cols(x, self.data_dim())?;
        Ok(self.disc_net(x.rows)?.forward(x, theta)?.data)
    }

    /// `phi(gamma; theta)` with batch means in place of expectations.
    pub fn payoff(&self, gamma: &[f64], theta: &[f64], real: &Tensor, noise: &Tensor) -> Result<f64> {
        Ok(self
            .pass(EnsembleKind::Stackelberg, theta, &[gamma], real, std::slice::from_ref(noise), false, false)?
            .value)
    }

    /// Shared-noise composite or per-generator noise, depending on `kind`.
    #[allow(clippy::too_many_arguments)]
    fn pass(
        &self,
        kind: EnsembleKind,
        theta: &[f64],
        gammas: &[&[f64]],
        real: &Tensor,
        noises: &[Tensor],
        want_theta: bool,
        want_gammas: bool,
    ) -> Result<Pass> {
        let n_gen = gammas.len();
        if n_gen == 0 {
            return Err(GanError::GeneratorCount {
                expected: 1,
                found: 0,
            });
        }
        let expected_noises = match kind {
            EnsembleKind::Stackelberg => n_gen,
            EnsembleKind::MultiBranch => 1,
        };
        if noises.len() != expected_noises {
            return Err(GanError::GeneratorCount {
                expected: expected_noises,
                found: noises.len(),
            });
        }
        check_cols(real, self.data_dim())?;
        for z in noises {
            check_cols(z, self.noise_dim())?;
        }
        if real.rows == 0 || noises.iter().any(|z| z.rows == 0) {
            return Err(GanError::Config("batches must be non-empty".into()));
        }

        // Generator forward passes.
        let mut gen_evals = Vec::with_capacity(n_gen);
        let mut blocks: Vec<Vec<f64>> = Vec::new();
        match kind {
            EnsembleKind::Stackelberg => {
                for (g, z) in gammas.iter().zip(noises) {
                    let net = self.gen_net(z.rows)?;
                    let e = net.graph.evaluate(&[("x", &z.data)], g)?;
                    blocks.push(e.value(net.output).to_vec());
                    gen_evals.push((net, e));
                }
            }
            EnsembleKind::MultiBranch => {
                let z = &noises[0];
                let net = self.gen_net(z.rows)?;
                let mut composite = vec![0.0; z.rows * self.data_dim()];
                for g in gammas {
                    let e = net.graph.evaluate(&[("x", &z.data)], g)?;
                    for (c, v) in composite.iter_mut().zip(e.value(net.output)) {
                        *c += v / n_gen as f64;
                    }
                    gen_evals.push((Arc::clone(&net), e));
                }
                blocks.push(composite);
            }
        }
        let block_weight = 1.0 / blocks.len() as f64;
        let d = self.data_dim();

        let mut x = Vec::with_capacity(real.data.len() + blocks.iter().map(Vec::len).sum::<usize>());
        x.extend_from_slice(&real.data);
        for b in &blocks {
            x.extend_from_slice(b);
        }
        let rows = x.len() / d;
        let dnet = self.disc_net(rows)?;
        let de = dnet.graph.evaluate(&[("x", &x)], theta)?;
        let dout = de.value(dnet.output);
        let f = self.payoff;

        let n_real = real.rows;
        let mut value = dout[..n_real].iter().map(|&p| f.f(p)).sum::<f64>() / n_real as f64;
        let mut fake_score = 0.0;
        let mut seed = vec![0.0; rows];
        for (j, s) in seed[..n_real].iter_mut().enumerate() {
            *s = f.df(dout[j]) / n_real as f64;
        }
        let mut row = n_real;
        for b in &blocks {
            let m = b.len() / d;
            let mut term = 0.0;
            let mut score = 0.0;
            for k in row..row + m {
                term += f.f(1.0 - dout[k]);
                score += f.f(dout[k]);
                seed[k] = -block_weight * f.df(1.0 - dout[k]) / m as f64;
            }
            value += block_weight * term / m as f64;
            fake_score += block_weight * score / m as f64;
            row += m;
        }
        let g_loss = if self.non_saturating { -fake_score } else { value };

        let mut out = Pass {
            value,
            g_loss,
            theta_grad: None,
            gamma_grads: None,
        };
        let shared_backward = want_gammas && !self.non_saturating;
        let mut input_grad = None;
        if want_theta {
            let g = dnet.graph.backward_with(&de, dnet.output, &seed, shared_backward)?;
            if shared_backward {
                input_grad = g.input("x").map(<[f64]>::to_vec);
            }
            out.theta_grad = Some(g.params);
        }
        if want_gammas {
            let dx = match input_grad {
                Some(dx) => dx,
                None => {
                    let gseed: Vec<f64> = if self.non_saturating {
                        let mut s = vec![0.0; rows];
                        let mut row = n_real;
                        for b in &blocks {
                            let m = b.len() / d;
                            for k in row..row + m {
                                s[k] = -block_weight * f.df(dout[k]) / m as f64;
                            }
                            row += m;
                        }
                        s
                    } else {
                        seed
                    };
                    let g = dnet.graph.backward_with(&de, dnet.output, &gseed, true)?;
                    g.input("x").map(<[f64]>::to_vec).unwrap_or_default()
                }
            };
            let fake_grads = &dx[n_real * d..];
            let mut grads = Vec::with_capacity(n_gen);
            match kind {
                EnsembleKind::Stackelberg => {
                    let mut at = 0;
                    for (net, e) in &gen_evals {
                        let len = e.value(net.output).len();
                        let g = net
                            .graph
                            .backward_with(e, net.output, &fake_grads[at..at + len], false)?;
                        grads.push(g.params);
                        at += len;
                    }
                }
                EnsembleKind::MultiBranch => {
                    let scaled: Vec<f64> = fake_grads.iter().map(|g| g / n_gen as f64).collect();
                    for (net, e) in &gen_evals {
                        grads.push(net.graph.backward_with(e, net.output, &scaled, false)?.params);
                    }
                }
            }
            out.gamma_grads = Some(grads);
        }
        Ok(out)
    }
}

fn check_cols(t: &Tensor, expected: usize) -> Result<()> {
    if t.cols != expected {
        return Err(GanError::BatchShape {
            expected,
            found: t.cols,
        });
    }
    Ok(())
}

/// `(1/I) sum_i phi(gamma_i; theta)` with one noise batch per generator and a shared real batch.
pub fn ensemble_objective(
    model: &GanModel,
    theta: &[f64],
    gammas: &[&[f64]],
    real: &Tensor,
    noises: &[Tensor],
) -> Result<f64> {
    Ok(model
        .pass(EnsembleKind::Stackelberg, theta, gammas, real, noises, false, false)?
        .value)
}

/// Payoff of the composite generator `z -> (1/I) sum_i G_{gamma_i}(z)`.
pub fn multibranch_objective(
    model: &GanModel,
    theta: &[f64],
    branches: &[&[f64]],
    real: &Tensor,
    noise: &Tensor,
) -> Result<f64> {
    Ok(model
        .pass(
            EnsembleKind::MultiBranch,
            theta,
            branches,
            real,
            std::slice::from_ref(noise),
            false,
            false,
        )?
        .value)
}

/// The GAN game on fixed batches.
pub struct GanGame<'a> {
    pub model: &'a GanModel,
    pub real: Tensor,
    pub noises: Vec<Tensor>,
}

impl<'a> GanGame<'a> {
    /// Draws a real batch and the noise batches the model's ensemble kind needs.
    /// Each batch comes from its own stream under `key`.
    pub fn draw(
        model: &'a GanModel,
        data: &dyn DataSource,
        real_batch: usize,
        gen_batch: usize,
        key: &[u64],
    ) -> Self {
        let sub = |i: u64| {
            let mut k = key.to_vec();
            k.push(i);
            Rng::stream(&k)
        };
        let real = data.sample_batch(real_batch, &mut sub(0));
        let nz = model.noise_dim();
        let noises = match model.ensemble {
            EnsembleKind::Stackelberg => (0..model.generators)
                .map(|i| Tensor::from_vec(gen_batch, nz, sub(1 + i as u64).normals(gen_batch * nz)))
                .collect(),
            EnsembleKind::MultiBranch => {
                let n = gen_batch * model.generators;
                vec![Tensor::from_vec(n, nz, sub(1).normals(n * nz))]
            }
        };
        Self {
            model,
            real,
            noises,
        }
    }
}

impl Game for GanGame<'_> {
    fn value(&self, theta: &[f64], gammas: &[&[f64]]) -> Result<f64> {
        Ok(self
            .model
            .pass(self.model.ensemble, theta, gammas, &self.real, &self.noises, false, false)?
            .value)
    }

    fn theta_grad(&self, theta: &[f64], gammas: &[&[f64]]) -> Result<(f64, Vec<f64>)> {
        let p = self
            .model
            .pass(self.model.ensemble, theta, gammas, &self.real, &self.noises, true, false)?;
        Ok((p.value, p.theta_grad.unwrap_or_default()))
    }

    fn gamma_grads(&self, theta: &[f64], gammas: &[&[f64]]) -> Result<(f64, Vec<Vec<f64>>)> {
        let p = self
            .model
            .pass(self.model.ensemble, theta, gammas, &self.real, &self.noises, false, true)?;
        Ok((p.g_loss, p.gamma_grads.unwrap_or_default()))
    }
}

/// Losses of one alternating step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub step: u64,
    /// `(1/I) Phi` on the discriminator-phase batches, before the update.
    pub objective: f64,
    pub d_loss: f64,
    pub g_loss_mean: f64,
}

fn diverged(state: &EnsembleState, phase: &'static str, value: f64) -> GanError {
    GanError::NonFinite {
        step: state.step,
        phase,
        value,
        last_good: Some(Box::new(state.clone())),
    }
}

/// One Adam ascent step on `theta` against `d_game`, then one Adam descent
/// step on every generator against `g_game`. On a non-finite loss or
/// gradient the state is left as it was before the call.
pub fn alternating_step<G: Game + ?Sized>(
    state: &mut EnsembleState,
    d_game: &G,
    g_game: &G,
) -> Result<MetricsRow> {
    let (objective, grad) = d_game.theta_grad(&state.theta.values, &state.gamma_slices())?;
    if !objective.is_finite() {
        return Err(diverged(state, "discriminator", objective));
    }
    if let Some(bad) = grad.iter().find(|g| !g.is_finite()) {
        return Err(diverged(state, "discriminator", *bad));
    }
    let saved = (state.theta.clone(), state.d_opt.clone());
    let ascent: Vec<f64> = grad.iter().map(|g| -g).collect();
    adam_step(&mut state.theta, &ascent, &mut state.d_opt)?;

    let (g_loss, grads) = match g_game.gamma_grads(&state.theta.values, &state.gamma_slices()) {
        Ok(r) => r,
        Err(e) => {
            (state.theta, state.d_opt) = saved;
            return Err(e);
        }
    };
    let bad = if g_loss.is_finite() {
        grads.iter().flatten().copied().find(|g| !g.is_finite())
    } else {
        Some(g_loss)
    };
    if let Some(v) = bad {
        (state.theta, state.d_opt) = saved;
        return Err(diverged(state, "generator", v));
    }
    if grads.len() != state.gammas.len() {
        (state.theta, state.d_opt) = saved;
        return Err(GanError::GeneratorCount {
            expected: state.gammas.len(),
            found: grads.len(),
        });
    }
    for ((g, opt), gr) in state.gammas.iter_mut().zip(&mut state.g_opts).zip(&grads) {
        adam_step(g, gr, opt)?;
    }
    state.step += 1;
    Ok(MetricsRow {
        step: state.step,
        objective,
        d_loss: -objective,
        g_loss_mean: g_loss,
    })
}

/// One training step with fresh batches for each phase. Batches come from
/// streams keyed by `(config.seed, state.step, phase)`, so a resumed run
/// reproduces an uninterrupted one.
pub fn train_step(
    state: &mut EnsembleState,
    model: &GanModel,
    data: &dyn DataSource,
    config: &TrainConfig,
) -> Result<MetricsRow> {
    let d_game = GanGame::draw(
        model,
        data,
        config.real_batch,
        config.gen_batch,
        &[config.seed, state.step, STREAM_D_PHASE],
    );
    let g_game = GanGame::draw(
        model,
        data,
        config.real_batch,
        config.gen_batch,
        &[config.seed, state.step, STREAM_G_PHASE],
    );
    alternating_step(state, &d_game, &g_game)
}

/// Result of [`train`].
#[derive(Clone, Debug)]
pub struct TrainRun {
    pub state: EnsembleState,
    pub log: Vec<MetricsRow>,
}

/// Runs `config.steps` steps from a fresh state.
pub fn train(config: &TrainConfig, data: &dyn DataSource) -> Result<TrainRun> {
    let model = GanModel::new(config)?;
    let state = EnsembleState::init(config);
    train_from(config, &model, state, data, |_| {})
}

/// Continues training `state` until it reaches `config.steps`. Every
/// `config.log_every` steps (and at the last one) a row is logged and
/// passed to `on_log`.
pub fn train_from(
    config: &TrainConfig,
    model: &GanModel,
    mut state: EnsembleState,
    data: &dyn DataSource,
    mut on_log: impl FnMut(&MetricsRow),
) -> Result<TrainRun> {
    if data.dim() != model.data_dim() {
        return Err(GanError::BatchShape {
            expected: model.data_dim(),
            found: data.dim(),
        });
    }
    if state.generators() != config.generators {
        return Err(GanError::GeneratorCount {
            expected: config.generators,
            found: state.generators(),
        });
    }
    let mut log = Vec::new();
    while state.step < config.steps {
        let row = train_step(&mut state, model, data, config)?;
        let every = config.log_every.max(1);
        if row.step % every == 0 || row.step == config.steps {
            on_log(&row);
            log.push(row);
        }
    }
    Ok(TrainRun { state, log })
}

pub const METRICS_HEADER: &str = "step,objective,d_loss,g_loss_mean";

/// CSV text (LF line endings) of a metrics log.
pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!("{},{},{},{}\n", r.step, r.objective, r.d_loss, r.g_loss_mean));
    }
    out
}

/// Generated points and the index of the generator that produced each.
#[derive(Clone, Debug, PartialEq)]
pub struct Samples {
    pub points: Tensor,
    pub labels: Vec<usize>,
}

/// Draws `n` samples: for each, `i ~ Uniform{0..I-1}` and `z ~ N(0, I)`.
/// Draws are grouped by generator for the forward pass, so batch-norm sees
/// each generator's own batch. A multi-branch model labels everything 0.
pub fn sample(state: &EnsembleState, model: &GanModel, n: usize, rng: &mut Rng) -> Result<Samples> {
    let nz = model.noise_dim();
    let d = model.data_dim();
    let count = state.generators();
    let mut labels = Vec::with_capacity(n);
    let mut z = Vec::with_capacity(n * nz);
    for _ in 0..n {
        let i = match model.ensemble {
            EnsembleKind::Stackelberg => rng.below(count),
            EnsembleKind::MultiBranch => 0,
        };
        labels.push(i);
        z.extend(rng.normals(nz));
    }
    let mut points = Tensor::zeros(n, d);
    match model.ensemble {
        EnsembleKind::Stackelberg => {
            for g in 0..count {
                let idx: Vec<usize> = (0..n).filter(|&j| labels[j] == g).collect();
                if idx.is_empty() {
                    continue;
                }
                let mut zg = Vec::with_capacity(idx.len() * nz);
                for &j in &idx {
                    zg.extend_from_slice(&z[j * nz..(j + 1) * nz]);
                }
                let out = model.generate(&state.gammas[g].values, &Tensor::from_vec(idx.len(), nz, zg))?;
                for (r, &j) in idx.iter().enumerate() {
                    points.row_mut(j).copy_from_slice(out.row(r));
                }
            }
        }
        EnsembleKind::MultiBranch => {
            if n > 0 {
                let zt = Tensor::from_vec(n, nz, z);
                for g in &state.gammas {
                    let out = model.generate(&g.values, &zt)?;
                    for (p, v) in points.data.iter_mut().zip(&out.data) {
                        *p += v / count as f64;
                    }
                }
            }
        }
    }
    Ok(Samples { points, labels })
}

/// Local estimate of the minimax gap around a state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    /// Objective at the start state.
    pub start: f64,
    /// Objective after `k` ascent steps on a copy of `theta`.
    pub w_hat: f64,
    /// Objective after `k` descent steps on copies of the generators.
    pub q_hat: f64,
    pub gap_proxy: f64,
    pub k: usize,
    pub probe_lr: f64,
    /// False if any probe loss or gradient was non-finite.
    pub valid: bool,
}

/// Runs `k` plain gradient steps of size `probe_lr` for each side of `game`
/// from the same start, the other side frozen.
pub fn probe_gap<G: Game + ?Sized>(
    game: &G,
    theta: &[f64],
    gammas: &[&[f64]],
    k: usize,
    probe_lr: f64,
) -> Result<GapReport> {
    let start = game.value(theta, gammas)?;
    let mut valid = start.is_finite();

    let mut th = theta.to_vec();
    for _ in 0..k {
        let (v, g) = game.theta_grad(&th, gammas)?;
        if !v.is_finite() || g.iter().any(|x| !x.is_finite()) {
            valid = false;
            break;
        }
        th.iter_mut().zip(&g).for_each(|(p, gi)| *p += probe_lr * gi);
    }
    let w_hat = game.value(&th, gammas)?;

    let mut gs: Vec<Vec<f64>> = gammas.iter().map(|g| g.to_vec()).collect();
    for _ in 0..k {
        let views: Vec<&[f64]> = gs.iter().map(Vec::as_slice).collect();
        let (v, grads) = game.gamma_grads(theta, &views)?;
        if !v.is_finite() || grads.iter().flatten().any(|x| !x.is_finite()) {
            valid = false;
            break;
        }
        for (p, g) in gs.iter_mut().zip(&grads) {
            p.iter_mut().zip(g).for_each(|(p, gi)| *p -= probe_lr * gi);
        }
    }
    let views: Vec<&[f64]> = gs.iter().map(Vec::as_slice).collect();
    let q_hat = game.value(theta, &views)?;
    valid &= w_hat.is_finite() && q_hat.is_finite();
    Ok(GapReport {
        start,
        w_hat,
        q_hat,
        gap_proxy: w_hat - q_hat,
        k,
        probe_lr,
        valid,
    })
}

/// [`probe_gap`] for a trained state on one fixed set of evaluation batches
/// (sizes taken from `config`, drawn from `rng`).
pub fn empirical_gap(
    state: &EnsembleState,
    model: &GanModel,
    data: &dyn DataSource,
    config: &TrainConfig,
    k: usize,
    probe_lr: f64,
    rng: &mut Rng,
) -> Result<GapReport> {
    let key = rng.next_u64();
    let game = GanGame::draw(model, data, config.real_batch, config.gen_batch, &[key]);
    probe_gap(&game, &state.theta.values, &state.gamma_slices(), k, probe_lr)
}

/// Everything needed to resume or evaluate a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub state: EnsembleState,
}

impl Checkpoint {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()).map_err(|e| GanError::Checkpoint {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let err = |message: String| GanError::Checkpoint {
            path: path.display().to_string(),
            message,
        };
        let text = fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        let ck = Self::from_json(&text).map_err(|e| err(e.to_string()))?;
        ck.config.validate().map_err(|e| err(e.to_string()))?;
        let expect_g = crate::nets::param_count(&ck.config.gen_specs);
        let expect_d = crate::nets::param_count(&ck.config.disc_specs);
        let s = &ck.state;
        if s.theta.len() != expect_d
            || s.d_opt.m.len() != expect_d
            || s.gammas.len() != ck.config.generators
            || s.g_opts.len() != ck.config.generators
            || s.gammas.iter().any(|g| g.len() != expect_g)
            || s.g_opts.iter().any(|o| o.m.len() != expect_g)
        {
            return Err(err("parameter shapes do not match the stored config".into()));
        }
        Ok(ck)
    }
}
