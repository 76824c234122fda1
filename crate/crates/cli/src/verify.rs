//! Seeded property suites behind `sgan verify`.

use anyhow::{bail, Result};
use sgan_core::nets::{mlp_grad_check, random_specs};
use sgan_core::rng::Rng;
use sgan_duality::caratheodory::combine;
use sgan_duality::checks::{default_grid, GRID_TOL_SPACINGS};
use sgan_duality::grid::uniform_grid;
use sgan_duality::{
    caratheodory_reduce, discrete_gan_value, infconv_check, shapley_folkman_decompose,
    strong_duality_check, GridFunction, QuadraticFamily, SfInstance,
};

pub const SUITES: [&str; 6] = [
    "grad-check",
    "infconv",
    "strong-duality",
    "shapley-folkman",
    "caratheodory",
    "theorem4",
];

pub const REPORT_HEADER: &str = "suite,cases,failures,worst,tolerance,pass";

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteReport {
    pub suite: &'static str,
    pub cases: usize,
    pub failures: usize,
    /// Largest error statistic seen (infinite if a case errored).
    pub worst: f64,
    pub tolerance: f64,
}

impl SuiteReport {
    fn new(suite: &'static str, tolerance: f64) -> Self {
        Self {
            suite,
            cases: 0,
            failures: 0,
            worst: 0.0,
            tolerance,
        }
    }

    fn record(&mut self, ok: bool, err: f64) {
        self.cases += 1;
        self.failures += usize::from(!ok);
        self.worst = self.worst.max(if err.is_nan() { f64::INFINITY } else { err });
    }

    pub fn pass(&self) -> bool {
        self.failures == 0
    }
}

/// Suite names for `--suite`: one name or `all`.
pub fn select(name: &str) -> Result<Vec<&'static str>> {
    if name == "all" {
        return Ok(SUITES.to_vec());
    }
    match SUITES.iter().find(|s| **s == name) {
        Some(s) => Ok(vec![*s]),
        None => bail!("unknown suite {name:?}; expected all or one of {}", SUITES.join(", ")),
    }
}

pub fn run_suite(name: &str, seed: u64) -> Result<SuiteReport> {
    let idx = SUITES
        .iter()
        .position(|s| *s == name)
        .ok_or_else(|| anyhow::anyhow!("unknown suite {name:?}"))?;
    let mut rng = Rng::stream(&[seed, idx as u64]);
    Ok(match idx {
        0 => grad_check(&mut rng),
        1 => infconv(&mut rng),
        2 => strong_duality(&mut rng),
        3 => shapley_folkman(&mut rng),
        4 => caratheodory(&mut rng),
        _ => theorem4(&mut rng),
    })
}

pub fn report_csv(reports: &[SuiteReport]) -> String {
    let mut out = format!("{REPORT_HEADER}\n");
    for r in reports {
        out.push_str(&format!(
            "{},{},{},{:e},{:e},{}\n",
            r.suite,
            r.cases,
            r.failures,
            r.worst,
            r.tolerance,
            r.pass()
        ));
    }
    out
}

fn grad_check(rng: &mut Rng) -> SuiteReport {
    let mut rep = SuiteReport::new("grad-check", 1e-5);
    for _ in 0..100 {
        let specs = random_specs(rng);
        match mlp_grad_check(&specs, 5, rng, 1e-6, rep.tolerance) {
            Ok(r) => rep.record(r.pass, r.max_rel_error),
            Err(_) => rep.record(false, f64::INFINITY),
        }
    }
    rep
}

/// `u^2 / 2` plus the max of up to five random affine pieces: convex.
fn random_convex(grid: &[f64], rng: &mut Rng) -> GridFunction {
    let pieces: Vec<(f64, f64)> = (0..1 + rng.below(5))
        .map(|_| (rng.uniform_in(-2.0, 2.0), rng.uniform_in(-1.0, 1.0)))
        .collect();
    let values = grid
        .iter()
        .map(|&u| {
            let m = pieces.iter().map(|(c, d)| c * u + d).fold(f64::NEG_INFINITY, f64::max);
            0.5 * u * u + m
        })
        .collect();
    GridFunction::new(grid.to_vec(), values).expect("finite values on a valid grid")
}

fn infconv(rng: &mut Rng) -> SuiteReport {
    let grid = uniform_grid(-2.0, 2.0, 81).expect("valid grid");
    let dual = uniform_grid(-3.0, 3.0, 241).expect("valid grid");
    let mut rep = SuiteReport::new("infconv", GRID_TOL_SPACINGS * 0.025);
    for _ in 0..50 {
        let fs = [random_convex(&grid, rng), random_convex(&grid, rng)];
        match infconv_check(&fs, &dual) {
            Ok(r) => rep.record(r.pass, r.max_deviation),
            Err(_) => rep.record(false, f64::INFINITY),
        }
    }
    rep
}

fn random_family(rng: &mut Rng) -> QuadraticFamily {
    let pairs: Vec<(f64, f64)> = (0..1 + rng.below(6))
        .map(|_| (rng.uniform_in(-2.0, 2.0), rng.uniform_in(-2.0, 2.0)))
        .collect();
    QuadraticFamily::scalar(&pairs).expect("finite pairs")
}

fn strong_duality(rng: &mut Rng) -> SuiteReport {
    let grid = default_grid();
    let spacing = grid[1] - grid[0];
    let mut rep = SuiteReport::new("strong-duality", GRID_TOL_SPACINGS * spacing);
    for _ in 0..20 {
        let fam = random_family(rng);
        let i = 1 + rng.below(3);
        match strong_duality_check(&fam, i, &grid) {
            Ok(r) => rep.record(r.duality_ok && r.gap_ok, (r.cl_p0 - r.sup_q).abs()),
            Err(_) => rep.record(false, f64::INFINITY),
        }
    }
    rep
}

fn simplex(n: usize, rng: &mut Rng) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| rng.uniform() + 1e-3).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

fn points(n: usize, d: usize, rng: &mut Rng) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..d).map(|_| rng.uniform_in(-1.0, 1.0)).collect()).collect()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn shapley_folkman(rng: &mut Rng) -> SuiteReport {
    let mut rep = SuiteReport::new("shapley-folkman", 1e-9);
    for _ in 0..200 {
        let m = 1 + rng.below(2);
        let i = 1 + rng.below(6);
        let sets: Vec<Vec<Vec<f64>>> = (0..i).map(|_| points(1 + rng.below(4), m, rng)).collect();
        let mut target = vec![0.0; m];
        for set in &sets {
            let y = combine(set, &simplex(set.len(), rng));
            target.iter_mut().zip(&y).for_each(|(t, v)| *t += v);
        }
        let inst = SfInstance { sets, target };
        match shapley_folkman_decompose(&inst) {
            Ok(d) => {
                let err = max_abs_diff(&d.reconstruct(&inst), &inst.target);
                rep.record(d.convexified().len() <= m && err <= rep.tolerance, err);
            }
            Err(_) => rep.record(false, f64::INFINITY),
        }
    }
    rep
}

fn caratheodory(rng: &mut Rng) -> SuiteReport {
    let mut rep = SuiteReport::new("caratheodory", 1e-9);
    for _ in 0..200 {
        let n = 1 + rng.below(12);
        let pts = points(n, 2, rng);
        let w = simplex(n, rng);
        let target = combine(&pts, &w);
        match caratheodory_reduce(&pts, &w) {
            Ok(r) => {
                let err = max_abs_diff(&r.combine(&pts), &target);
                rep.record(r.indices.len() <= 3 && err <= rep.tolerance, err);
            }
            Err(_) => rep.record(false, f64::INFINITY),
        }
    }
    rep
}

fn distribution(n: usize, rng: &mut Rng) -> Vec<f64> {
    let mut w: Vec<f64> = (0..n)
        .map(|_| if rng.below(4) == 0 { 0.0 } else { rng.uniform() })
        .collect();
    if w.iter().all(|&x| x == 0.0) {
        w[0] = 1.0;
    }
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= s);
    w
}

/// `KL(p || m)` with `0 log 0 = 0`.
fn kl(p: &[f64], m: &[f64]) -> f64 {
    p.iter().zip(m).filter(|(a, _)| **a > 0.0).map(|(a, b)| a * (a / b).ln()).sum()
}

fn theorem4(rng: &mut Rng) -> SuiteReport {
    let mut rep = SuiteReport::new("theorem4", 1e-12);
    let floor = -(4f64.ln());
    for case in 0..100 {
        let n = 2 + rng.below(9);
        let p = distribution(n, rng);
        let q = if case % 4 == 0 { p.clone() } else { distribution(n, rng) };
        let m: Vec<f64> = p.iter().zip(&q).map(|(a, b)| 0.5 * (a + b)).collect();
        let js = 0.5 * kl(&p, &m) + 0.5 * kl(&q, &m);
        let tv = 0.5 * p.iter().zip(&q).map(|(a, b)| (a - b).abs()).sum::<f64>();
        match discrete_gan_value(&p, &q) {
            Ok(v) => {
                let err = (v.value - (floor + 2.0 * js)).abs();
                let ok = err <= rep.tolerance
                    && v.matched == (tv <= 1e-9)
                    && (tv <= 1e-3 || v.value > floor + 1e-9);
                rep.record(ok, err);
            }
            Err(_) => rep.record(false, f64::INFINITY),
        }
    }
    rep
}
