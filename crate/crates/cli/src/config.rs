//! Run configuration files.

use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};
use sgan_core::gan::{default_gen_batch, EnsembleKind, PayoffKind, TrainConfig};
use sgan_core::metrics::DEFAULT_EVAL_SAMPLES;
use sgan_core::nets::{generator_specs, AdamConfig, LayerSpec};
use sgan_core::synthdata::{make_ring_mixture, MixtureSpec, IMAGE_DIM};

/// Environment variable that overrides the seed of every command.
pub const SEED_ENV: &str = "SGAN_SEED";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Mixture,
    Mnist,
    Fashion,
}

/// Ring of Gaussian modes for the `mixture` task.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureParams {
    pub modes: usize,
    pub radius: f64,
    pub std: f64,
}

impl Default for MixtureParams {
    fn default() -> Self {
        Self {
            modes: 8,
            radius: 0.8,
            std: 0.01,
        }
    }
}

/// Everything `train` needs. Optional fields fall back to the defaults of
/// the task; [`RunConfig::resolve`] fills them in so the echoed
/// `config.json` is complete.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub task: Task,
    pub generators: usize,
    #[serde(default)]
    pub ensemble: EnsembleKind,
    /// Shorthand for a generator of the default shape: `[noise, hidden..., out]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator_dims: Option<Vec<usize>>,
    #[serde(default)]
    pub generator: Option<Vec<LayerSpec>>,
    #[serde(default)]
    pub discriminator: Option<Vec<LayerSpec>>,
    #[serde(default)]
    pub payoff: PayoffKind,
    #[serde(default)]
    pub non_saturating: bool,
    #[serde(default)]
    pub steps: Option<u64>,
    #[serde(default)]
    pub log_every: Option<u64>,
    #[serde(default)]
    pub real_batch: Option<usize>,
    #[serde(default)]
    pub gen_batch: Option<usize>,
    #[serde(default)]
    pub d_adam: Option<AdamConfig>,
    #[serde(default)]
    pub g_adam: Option<AdamConfig>,
    pub seed: u64,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub eval_samples: Option<usize>,
    #[serde(default)]
    pub mixture: Option<MixtureParams>,
    /// Directory holding `train-images-idx3-ubyte[.gz]` (and optionally the labels).
    #[serde(default)]
    pub data_dir: Option<PathBuf>,
    /// Use only the first `subset` images.
    #[serde(default)]
    pub subset: Option<usize>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        serde_json::from_str(&text)
            .with_context(|| format!("malformed config {}", path.display()))
    }

    fn defaults(&self) -> TrainConfig {
        match self.task {
            Task::Mixture => TrainConfig::mixture(self.generators, &[2, 16, 2]),
            Task::Mnist => TrainConfig::mnist(self.generators),
            Task::Fashion => TrainConfig::fashion(self.generators),
        }
    }

    /// Fills every optional field from the task defaults and validates the result.
    pub fn resolve(mut self) -> Result<Self> {
        ensure!(self.generators >= 1, "generators must be at least 1");
        let d = self.defaults();
        if let Some(dims) = self.generator_dims.take() {
            ensure!(self.generator.is_none(), "set either generator or generator_dims, not both");
            ensure!(dims.len() >= 2, "generator_dims needs at least an input and an output size");
            self.generator = Some(generator_specs(&dims));
        }
        self.generator.get_or_insert(d.gen_specs);
        self.discriminator.get_or_insert(d.disc_specs);
        self.steps.get_or_insert(d.steps);
        self.log_every.get_or_insert(d.log_every);
        let real = *self.real_batch.get_or_insert(d.real_batch);
        self.gen_batch.get_or_insert(default_gen_batch(real, self.generators));
        self.d_adam.get_or_insert(d.d_adam);
        self.g_adam.get_or_insert(d.g_adam);
        self.eval_samples.get_or_insert(DEFAULT_EVAL_SAMPLES);
        match self.task {
            Task::Mixture => {
                ensure!(self.data_dir.is_none(), "data_dir only applies to the mnist and fashion tasks");
                self.mixture.get_or_insert_with(MixtureParams::default);
            }
            Task::Mnist | Task::Fashion => {
                ensure!(self.mixture.is_none(), "mixture only applies to the mixture task");
                if self.data_dir.is_none() {
                    bail!("the {:?} task needs data_dir pointing at IDX files", self.task);
                }
            }
        }
        let train = self.train_config()?;
        train.validate()?;
        let want = match self.task {
            Task::Mixture => 2,
            Task::Mnist | Task::Fashion => IMAGE_DIM,
        };
        ensure!(
            train.data_dim() == want,
            "discriminator input is {} but {:?} data has {want} dims",
            train.data_dim(),
            self.task
        );
        if let Some(m) = self.mixture {
            mixture_spec(&m)?;
        }
        Ok(self)
    }

    /// The core training configuration. Requires a resolved config.
    pub fn train_config(&self) -> Result<TrainConfig> {
        let missing = || anyhow::anyhow!("config is not resolved");
        Ok(TrainConfig {
            generators: self.generators,
            ensemble: self.ensemble,
            gen_specs: self.generator.clone().ok_or_else(missing)?,
            disc_specs: self.discriminator.clone().ok_or_else(missing)?,
            payoff: self.payoff,
            non_saturating: self.non_saturating,
            steps: self.steps.ok_or_else(missing)?,
            log_every: self.log_every.ok_or_else(missing)?,
            real_batch: self.real_batch.ok_or_else(missing)?,
            gen_batch: self.gen_batch.ok_or_else(missing)?,
            d_adam: self.d_adam.ok_or_else(missing)?,
            g_adam: self.g_adam.ok_or_else(missing)?,
            seed: self.seed,
        })
    }
}

pub fn mixture_spec(m: &MixtureParams) -> Result<MixtureSpec> {
    Ok(make_ring_mixture(m.modes, m.radius, m.std)?)
}

/// `--seed`, then `SGAN_SEED`, then `fallback`.
pub fn effective_seed(flag: Option<u64>, fallback: u64) -> Result<u64> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .with_context(|| format!("{SEED_ENV}={v:?} is not an unsigned integer")),
        Err(std::env::VarError::NotPresent) => Ok(fallback),
        Err(e) => bail!("{SEED_ENV}: {e}"),
    }
}

/// Parses `N` or `A:B` (inclusive) with `1 <= A <= B`.
pub fn parse_range(s: &str) -> Result<(usize, usize)> {
    let parse = |p: &str| {
        p.trim()
            .parse::<usize>()
            .with_context(|| format!("--I {s:?}: {p:?} is not a positive integer"))
    };
    let (a, b) = match s.split_once(':') {
        Some((a, b)) => (parse(a)?, parse(b)?),
        None => {
            let a = parse(s)?;
            (a, a)
        }
    };
    ensure!(a >= 1 && a <= b, "--I {s:?}: need 1 <= start <= end");
    Ok((a, b))
}
