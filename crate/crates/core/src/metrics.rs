//! Mode coverage and generator balance on 2-D mixtures.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gan::{sample, train, GanModel, Samples, TrainConfig};
use crate::rng::Rng;
use crate::synthdata::MixtureSpec;

pub const DEFAULT_HQ_SIGMAS: f64 = 4.0;
/// A mode counts as covered when at least this fraction of all samples are
/// high quality at it.
pub const COVERAGE_FRACTION: f64 = 0.01;
/// Dominant modes hold at least this share of a generator's HQ samples.
pub const DOMINANT_SHARE: f64 = 0.6;
pub const DEFAULT_EVAL_SAMPLES: usize = 8000;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("no samples to score")]
    Empty,
    #[error("samples must be 2-D, got {0} columns")]
    NotPlanar(usize),
    #[error("sample {index} has generator label {label} but only {generators} generators exist")]
    Label {
        index: usize,
        label: usize,
        generators: usize,
    },
    #[error("at least one seed is required")]
    NoSeeds,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeReport {
    pub n: usize,
    /// Samples whose nearest center is mode `j`.
    pub mode_counts: Vec<usize>,
    /// Of those, the ones within `hq_sigmas * std` of the center.
    pub hq_counts: Vec<usize>,
    pub hq_fraction: f64,
    pub covered: Vec<bool>,
    pub modes_covered: usize,
    /// `[generator][mode]` counts over all samples.
    pub gen_mode: Vec<Vec<usize>>,
    /// `[generator][mode]` counts over high-quality samples.
    pub gen_mode_hq: Vec<Vec<usize>>,
}

/// Assigns every sample to its nearest center and scores it.
pub fn assign_and_score(
    samples: &Samples,
    generators: usize,
    spec: &MixtureSpec,
    hq_sigmas: f64,
) -> Result<ModeReport, MetricsError> {
    let n = samples.labels.len();
    if n == 0 {
        return Err(MetricsError::Empty);
    }
    if samples.points.cols != 2 {
        return Err(MetricsError::NotPlanar(samples.points.cols));
    }
    let k = spec.k();
    let radius = hq_sigmas * spec.std;
    let mut mode_counts = vec![0; k];
    let mut hq_counts = vec![0; k];
    let mut gen_mode = vec![vec![0; k]; generators];
    let mut gen_mode_hq = vec![vec![0; k]; generators];
    for (i, &label) in samples.labels.iter().enumerate() {
        if label >= generators {
            return Err(MetricsError::Label {
                index: i,
                label,
                generators,
            });
        }
        let p = samples.points.row(i);
        let (mode, dist) = spec.nearest([p[0], p[1]]);
        mode_counts[mode] += 1;
        gen_mode[label][mode] += 1;
        if dist <= radius {
            hq_counts[mode] += 1;
            gen_mode_hq[label][mode] += 1;
        }
    }
    let threshold = COVERAGE_FRACTION * n as f64;
    let covered: Vec<bool> = hq_counts.iter().map(|&c| c > 0 && c as f64 >= threshold).collect();
    Ok(ModeReport {
        n,
        hq_fraction: hq_counts.iter().sum::<usize>() as f64 / n as f64,
        modes_covered: covered.iter().filter(|&&c| c).count(),
        covered,
        mode_counts,
        hq_counts,
        gen_mode,
        gen_mode_hq,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Balance {
    pub generator_totals: Vec<usize>,
    /// Natural-log entropy of the per-generator sample shares, in `[0, ln I]`.
    pub entropy: f64,
    /// Per generator: modes by decreasing HQ count until they hold 60% of
    /// its HQ samples. Empty for a generator with no HQ samples.
    pub dominant_modes: Vec<Vec<usize>>,
}

pub fn generator_balance(report: &ModeReport) -> Balance {
    let totals: Vec<usize> = report.gen_mode.iter().map(|r| r.iter().sum()).collect();
    let n: usize = totals.iter().sum();
    let entropy = totals
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n as f64;
            -p * p.ln()
        })
        .sum::<f64>()
        .max(0.0);
    let dominant_modes = report
        .gen_mode_hq
        .iter()
        .map(|row| {
            let total: usize = row.iter().sum();
            let mut order: Vec<usize> = (0..row.len()).collect();
            order.sort_by(|&a, &b| row[b].cmp(&row[a]).then(a.cmp(&b)));
            let mut picked = Vec::new();
            let mut acc = 0;
            for m in order {
                if total == 0 || acc as f64 >= DOMINANT_SHARE * total as f64 {
                    break;
                }
                acc += row[m];
                picked.push(m);
            }
            picked
        })
        .collect();
    Balance {
        generator_totals: totals,
        entropy,
        dominant_modes,
    }
}

/// True if every mode appears in some generator's dominant list.
pub fn every_mode_dominant(balance: &Balance, k_modes: usize) -> bool {
    (0..k_modes).all(|m| balance.dominant_modes.iter().any(|d| d.contains(&m)))
}

/// One configuration of a coverage experiment.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentCell {
    pub name: String,
    pub config: TrainConfig,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoverageRow {
    pub config: String,
    pub seed: u64,
    /// The error text if training or scoring failed.
    pub report: Result<(ModeReport, Balance), String>,
}

impl CoverageRow {
    pub fn modes_covered(&self) -> Option<usize> {
        self.report.as_ref().ok().map(|(r, _)| r.modes_covered)
    }
}

/// Trains every cell once per seed (the cell's seed is overridden) and
/// scores `eval_n` samples. A failed run is recorded in its row.
pub fn coverage_experiment(
    cells: &[ExperimentCell],
    seeds: &[u64],
    spec: &MixtureSpec,
    eval_n: usize,
    hq_sigmas: f64,
) -> Result<Vec<CoverageRow>, MetricsError> {
    if seeds.is_empty() {
        return Err(MetricsError::NoSeeds);
    }
    let mut rows = Vec::new();
    for cell in cells {
        for &seed in seeds {
            let mut cfg = cell.config.clone();
            cfg.seed = seed;
            rows.push(CoverageRow {
                config: cell.name.clone(),
                seed,
                report: score_run(&cfg, spec, eval_n, hq_sigmas),
            });
        }
    }
    Ok(rows)
}

/// Trains one configuration and scores its samples.
pub fn score_run(
    cfg: &TrainConfig,
    spec: &MixtureSpec,
    eval_n: usize,
    hq_sigmas: f64,
) -> Result<(ModeReport, Balance), String> {
    let run = train(cfg, spec).map_err(|e| e.to_string())?;
    let model = GanModel::new(cfg).map_err(|e| e.to_string())?;
    let mut rng = Rng::stream(&[cfg.seed, u64::MAX]);
    let s = sample(&run.state, &model, eval_n, &mut rng).map_err(|e| e.to_string())?;
    let report = assign_and_score(&s, cfg.generators, spec, hq_sigmas).map_err(|e| e.to_string())?;
    let balance = generator_balance(&report);
    Ok((report, balance))
}

/// Median of the modes covered over the successful runs of `config`, and
/// the fraction of its runs covering all `k` modes.
pub fn summarize(rows: &[CoverageRow], config: &str, k: usize) -> Option<(f64, f64)> {
    let cell: Vec<&CoverageRow> = rows.iter().filter(|r| r.config == config).collect();
    let mut covered: Vec<usize> = cell.iter().filter_map(|r| r.modes_covered()).collect();
    if covered.is_empty() {
        return None;
    }
    covered.sort_unstable();
    let m = covered.len();
    let median = if m % 2 == 1 {
        covered[m / 2] as f64
    } else {
        (covered[m / 2 - 1] + covered[m / 2]) as f64 / 2.0
    };
    let full = covered.iter().filter(|&&c| c == k).count() as f64 / cell.len() as f64;
    Some((median, full))
}

pub const SUMMARY_HEADER: &str = "config,seed,modes_covered,hq_fraction,entropy";

/// One CSV line per row; failed runs leave the metric fields empty.
pub fn coverage_csv(rows: &[CoverageRow]) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for r in rows {
        match &r.report {
            Ok((rep, bal)) => out.push_str(&format!(
                "{},{},{},{},{}\n",
                csv_field(&r.config),
                r.seed,
                rep.modes_covered,
                rep.hq_fraction,
                bal.entropy
            )),
            Err(_) => out.push_str(&format!("{},{},,,\n", csv_field(&r.config), r.seed)),
        }
    }
    out
}

/// Quotes a field when RFC 4180 requires it.
pub fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
