//! Subcommand implementations. Each returns the paths it wrote.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use sgan_core::gan::{
    empirical_gap, metrics_csv, sample, train_from, Checkpoint, EnsembleState, GanError, GanModel,
    Samples, TrainConfig,
};
use sgan_core::metrics::{assign_and_score, csv_field, generator_balance, DEFAULT_HQ_SIGMAS};
use sgan_core::rng::Rng;
use sgan_core::synthdata::{load_idx, DataSource, ImageDataset};
use sgan_duality::{exact_minimax, QuadraticFamily};

use crate::config::{effective_seed, mixture_spec, RunConfig, Task};
use crate::svg::emit_scatter_svg;
use crate::verify;
use crate::NumericFailure;

pub const CONFIG_FILE: &str = "config.json";
pub const METRICS_FILE: &str = "metrics.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";

/// Stream tags for evaluation-time randomness, disjoint from training streams.
const EVAL_STREAM: u64 = 0x5e_u64 << 32;
const GAP_STREAM: u64 = EVAL_STREAM + 1;
const PLOT_STREAM: u64 = EVAL_STREAM + 2;
const FAMILY_STREAM: u64 = EVAL_STREAM + 3;

fn write(path: &Path, text: &str) -> Result<PathBuf> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(path.to_path_buf())
}

/// Training data for a resolved config.
pub fn load_data(cfg: &RunConfig) -> Result<Box<dyn DataSource>> {
    match cfg.task {
        Task::Mixture => Ok(Box::new(mixture_spec(&cfg.mixture.unwrap_or_default())?)),
        Task::Mnist | Task::Fashion => {
            let dir = cfg.data_dir.as_deref().context("image tasks need data_dir")?;
            let data = load_images(dir)?;
            Ok(Box::new(match cfg.subset {
                Some(n) => data.take(n),
                None => data,
            }))
        }
    }
}

fn find(dir: &Path, stem: &str) -> Option<PathBuf> {
    [stem.to_string(), format!("{stem}.gz")]
        .into_iter()
        .map(|n| dir.join(n))
        .find(|p| p.is_file())
}

/// Reads `train-images-idx3-ubyte[.gz]` (and labels if present) from `dir`.
pub fn load_images(dir: &Path) -> Result<ImageDataset> {
    let images = find(dir, "train-images-idx3-ubyte").with_context(|| {
        format!("no train-images-idx3-ubyte[.gz] in {}", dir.display())
    })?;
    let labels = find(dir, "train-labels-idx1-ubyte");
    Ok(load_idx(&images, labels.as_deref())?)
}

/// Runs training and writes `config.json`, `metrics.csv` and `checkpoint.json`
/// under `out` (default: the config's `out_dir`).
pub fn train(config: &Path, out: Option<&Path>, seed: Option<u64>) -> Result<Vec<PathBuf>> {
    let mut cfg = RunConfig::load(config)?;
    cfg.seed = effective_seed(seed, cfg.seed)?;
    let cfg = cfg
        .resolve()
        .with_context(|| format!("invalid config {}", config.display()))?;
    let out = match out {
        Some(o) => o.to_path_buf(),
        None => cfg
            .out_dir
            .clone()
            .context("no output directory: pass --out or set out_dir in the config")?,
    };
    let data = load_data(&cfg)?;
    let tc = cfg.train_config()?;
    let model = GanModel::new(&tc)?;

    let mut written = vec![write(
        &out.join(CONFIG_FILE),
        &(serde_json::to_string_pretty(&cfg)? + "\n"),
    )?];
    let mut rows = Vec::new();
    let result = train_from(&tc, &model, EnsembleState::init(&tc), data.as_ref(), |r| {
        rows.push(r.clone())
    });
    written.push(write(&out.join(METRICS_FILE), &metrics_csv(&rows))?);
    let ck_path = out.join(CHECKPOINT_FILE);
    match result {
        Ok(run) => {
            let ck = Checkpoint { config: tc, state: run.state };
            write(&ck_path, &ck.to_json())?;
            written.push(ck_path);
            Ok(written)
        }
        Err(GanError::NonFinite { step, phase, value, last_good }) => {
            if let Some(state) = last_good {
                let ck = Checkpoint { config: tc, state: *state };
                write(&ck_path, &ck.to_json())?;
            }
            Err(NumericFailure(format!(
                "non-finite {phase} loss {value} at step {step}; last good state saved to {}",
                ck_path.display()
            ))
            .into())
        }
        Err(e) => Err(e.into()),
    }
}

/// Loads a checkpoint and the run config next to it (or at `config`).
pub fn load_run(checkpoint: &Path, config: Option<&Path>) -> Result<(Checkpoint, RunConfig)> {
    let ck = Checkpoint::load(checkpoint)?;
    let cfg_path = match config {
        Some(p) => p.to_path_buf(),
        None => checkpoint
            .parent()
            .unwrap_or(Path::new("."))
            .join(CONFIG_FILE),
    };
    let cfg = RunConfig::load(&cfg_path)?
        .resolve()
        .with_context(|| format!("invalid config {}", cfg_path.display()))?;
    let tc: TrainConfig = cfg.train_config()?;
    ensure!(
        tc.gen_specs == ck.config.gen_specs && tc.disc_specs == ck.config.disc_specs,
        "checkpoint {} does not match the architecture in {}",
        checkpoint.display(),
        cfg_path.display()
    );
    Ok((ck, cfg))
}

fn draw_samples(ck: &Checkpoint, n: usize, seed: u64, tag: u64) -> Result<Samples> {
    let model = GanModel::new(&ck.config)?;
    let s = sample(&ck.state, &model, n, &mut Rng::stream(&[seed, tag]))?;
    if !s.points.is_finite() {
        return Err(NumericFailure("generated samples are not finite".into()).into());
    }
    Ok(s)
}

fn output_path(out: Option<&Path>, name: &str) -> Option<PathBuf> {
    out.map(|d| d.join(name))
}

/// Writes `text` to `out/name`, or prints it when no output directory is given.
fn emit(out: Option<&Path>, name: &str, text: &str) -> Result<Vec<PathBuf>> {
    match output_path(out, name) {
        Some(p) => Ok(vec![write(&p, text)?]),
        None => {
            print!("{text}");
            Ok(vec![])
        }
    }
}

/// Mode coverage (mixture) or pixel statistics (images) of a checkpoint.
pub fn eval(
    checkpoint: &Path,
    config: Option<&Path>,
    out: Option<&Path>,
    seed: Option<u64>,
) -> Result<Vec<PathBuf>> {
    let (ck, cfg) = load_run(checkpoint, config)?;
    let seed = effective_seed(seed, cfg.seed)?;
    let n = cfg.eval_samples.unwrap_or_default();
    let s = draw_samples(&ck, n, seed, EVAL_STREAM)?;
    let gens = ck.config.generators;
    match cfg.task {
        Task::Mixture => {
            let spec = mixture_spec(&cfg.mixture.unwrap_or_default())?;
            let r = assign_and_score(&s, gens, &spec, DEFAULT_HQ_SIGMAS)?;
            let b = generator_balance(&r);
            let mut modes = String::from("mode,center_x,center_y,samples,hq_samples,covered\n");
            for (m, c) in spec.centers.iter().enumerate() {
                modes.push_str(&format!(
                    "{m},{},{},{},{},{}\n",
                    c[0], c[1], r.mode_counts[m], r.hq_counts[m], r.covered[m]
                ));
            }
            let mut g = String::from("generator,samples,dominant_modes\n");
            for (i, d) in b.dominant_modes.iter().enumerate() {
                let dm: Vec<String> = d.iter().map(usize::to_string).collect();
                g.push_str(&format!("{i},{},{}\n", b.generator_totals[i], csv_field(&dm.join(";"))));
            }
            let summary = format!(
                "modes_covered,hq_fraction,entropy\n{},{},{}\n",
                r.modes_covered, r.hq_fraction, b.entropy
            );
            let mut written = emit(out, "modes.csv", &modes)?;
            written.extend(emit(out, "generators.csv", &g)?);
            written.extend(emit(out, "summary.csv", &summary)?);
            Ok(written)
        }
        Task::Mnist | Task::Fashion => {
            let mut text = String::from("generator,samples,mean,std,min,max\n");
            for i in 0..gens {
                let vals: Vec<f64> = s
                    .labels
                    .iter()
                    .enumerate()
                    .filter(|(_, &l)| l == i)
                    .flat_map(|(k, _)| s.points.row(k).iter().copied())
                    .collect();
                let m = vals.len().max(1) as f64;
                let mean = vals.iter().sum::<f64>() / m;
                let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / m).sqrt();
                let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let count = s.labels.iter().filter(|&&l| l == i).count();
                if count == 0 {
                    text.push_str(&format!("{i},0,,,,\n"));
                } else {
                    text.push_str(&format!("{i},{count},{mean},{sd},{lo},{hi}\n"));
                }
            }
            emit(out, "pixels.csv", &text)
        }
    }
}

pub const GAP_HEADER: &str = "step,k,probe_lr,start,w_hat,q_hat,gap_proxy,valid";

/// Local minimax-gap probe around a checkpoint.
pub fn gap(
    checkpoint: &Path,
    config: Option<&Path>,
    out: Option<&Path>,
    seed: Option<u64>,
    k: usize,
    probe_lr: f64,
) -> Result<Vec<PathBuf>> {
    ensure!(probe_lr.is_finite() && probe_lr > 0.0, "--probe-lr must be positive");
    let (ck, cfg) = load_run(checkpoint, config)?;
    let seed = effective_seed(seed, cfg.seed)?;
    let data = load_data(&cfg)?;
    let model = GanModel::new(&ck.config)?;
    let mut rng = Rng::stream(&[seed, GAP_STREAM]);
    let r = empirical_gap(&ck.state, &model, data.as_ref(), &ck.config, k, probe_lr, &mut rng)?;
    if !r.valid {
        return Err(NumericFailure(format!("gap probe hit a non-finite value: {r:?}")).into());
    }
    let text = format!(
        "{GAP_HEADER}\n{},{},{},{},{},{},{},{}\n",
        ck.state.step, r.k, r.probe_lr, r.start, r.w_hat, r.q_hat, r.gap_proxy, r.valid
    );
    emit(out, "gap.csv", &text)
}

pub const DUALITY_HEADER: &str = "I,w_star,q_star,gap,delta_worst,bound,holds";

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Family {
    /// `a in {-1, +1}`, `b = 0`.
    Pm1,
    /// Six members with `a, b` uniform on `[-2, 2]`, drawn from the seed.
    Random,
}

pub fn family(kind: Family, seed: u64) -> Result<QuadraticFamily> {
    Ok(match kind {
        Family::Pm1 => QuadraticFamily::pm1(),
        Family::Random => {
            let mut rng = Rng::stream(&[seed, FAMILY_STREAM]);
            let pairs: Vec<(f64, f64)> = (0..6)
                .map(|_| (rng.uniform_in(-2.0, 2.0), rng.uniform_in(-2.0, 2.0)))
                .collect();
            QuadraticFamily::scalar(&pairs)?
        }
    })
}

/// Exact `w*`, `q*` and gap bound for each `I` in `range`.
pub fn duality_csv(fam: &QuadraticFamily, range: (usize, usize)) -> Result<String> {
    let mut text = format!("{DUALITY_HEADER}\n");
    for i in range.0..=range.1 {
        let r = exact_minimax(fam, i)?;
        text.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.generators, r.w_star, r.q_star, r.gap, r.delta_worst, r.bound, r.holds
        ));
    }
    Ok(text)
}

pub fn duality(
    kind: Family,
    range: (usize, usize),
    out: Option<&Path>,
    seed: Option<u64>,
) -> Result<Vec<PathBuf>> {
    let seed = effective_seed(seed, 0)?;
    let fam = family(kind, seed)?;
    let text = duality_csv(&fam, range)?;
    emit(out, "duality.csv", &text)
}

/// Runs the selected suites; fails with a numeric failure if any case fails.
pub fn verify(suite: &str, out: Option<&Path>, seed: Option<u64>) -> Result<Vec<PathBuf>> {
    let seed = effective_seed(seed, 0)?;
    let reports = verify::select(suite)?
        .into_iter()
        .map(|s| verify::run_suite(s, seed))
        .collect::<Result<Vec<_>>>()?;
    let written = emit(out, "verify.csv", &verify::report_csv(&reports))?;
    let failed: Vec<&str> = reports.iter().filter(|r| !r.pass()).map(|r| r.suite).collect();
    if !failed.is_empty() {
        return Err(NumericFailure(format!("failing suites: {}", failed.join(", "))).into());
    }
    Ok(written)
}

/// Scatter plot of `n` samples from a 2-D checkpoint, written to `out/samples.svg`.
pub fn plot(
    checkpoint: &Path,
    config: Option<&Path>,
    out: &Path,
    seed: Option<u64>,
    n: usize,
) -> Result<Vec<PathBuf>> {
    let (ck, cfg) = load_run(checkpoint, config)?;
    if cfg.task != Task::Mixture {
        bail!("plot needs 2-D samples; {:?} samples are {}-dimensional", cfg.task, ck.config.data_dim());
    }
    let seed = effective_seed(seed, cfg.seed)?;
    let s = draw_samples(&ck, n, seed, PLOT_STREAM)?;
    let spec = mixture_spec(&cfg.mixture.unwrap_or_default())?;
    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    let path = out.join("samples.svg");
    emit_scatter_svg(&s, &spec.centers, &path)?;
    Ok(vec![path])
}
