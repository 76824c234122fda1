//! Grid checks of the conjugate-of-a-sum identity and of strong duality for
//! the perturbation function of a quadratic family.

use serde::Serialize;

use crate::family::{delta_grid, family_h, QuadraticFamily};
use crate::grid::{
    conjugate_grid, eval_hull, golden_max, infimal_convolution, lower_hull, uniform_grid,
    GridFunction,
};
use crate::{DualityError, Result};

/// Default primal grid: `[-8, 8]` with 1601 points.
pub const GRID_LO: f64 = -8.0;
pub const GRID_HI: f64 = 8.0;
pub const GRID_POINTS: usize = 1601;
/// Grid identities are accepted within this many grid spacings.
pub const GRID_TOL_SPACINGS: f64 = 10.0;

pub fn default_grid() -> Vec<f64> {
    uniform_grid(GRID_LO, GRID_HI, GRID_POINTS).expect("valid default grid")
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InfConvReport {
    pub max_deviation: f64,
    pub spacing: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Compares `(f_1 + ... + f_I)*` with `cl(f_1* ⊕ ... ⊕ f_I*)` at every
/// point of `dual` (which must be uniform). The functions share one grid.
pub fn infconv_check(fs: &[GridFunction], dual: &[f64]) -> Result<InfConvReport> {
    let sum = GridFunction::sum(fs)?;
    let lhs = conjugate_grid(&sum, dual)?;

    if !lhs.is_uniform() {
        return Err(DualityError::GridMismatch("dual grid must be uniform".into()));
    }
    let mut conv = conjugate_grid(&fs[0], &slope_cover(&fs[0], dual)?)?;
    for f in &fs[1..] {
        conv = infimal_convolution(&conv, &conjugate_grid(f, &slope_cover(f, dual)?)?)?;
    }
    let hull = lower_hull(&conv);

    let mut max_dev = 0.0f64;
    for (&v, &l) in dual.iter().zip(lhs.values()) {
        let r = eval_hull(&hull, v).ok_or_else(|| {
            DualityError::GridMismatch(format!("dual point {v} outside the convolution grid"))
        })?;
        max_dev = max_dev.max((l - r).abs());
    }
    let spacing = lhs.spacing();
    let tolerance = GRID_TOL_SPACINGS * spacing;
    Ok(InfConvReport {
        max_deviation: max_dev,
        spacing,
        tolerance,
        pass: max_dev < tolerance,
    })
}

/// `dual` extended by whole spacings until it also covers the slopes of
/// `f`, where the minimizing split of an infimal convolution can lie.
fn slope_cover(f: &GridFunction, dual: &[f64]) -> Result<Vec<f64>> {
    let (u, v) = (f.grid(), f.values());
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for k in 1..u.len() {
        let s = (v[k] - v[k - 1]) / (u[k] - u[k - 1]);
        lo = lo.min(s);
        hi = hi.max(s);
    }
    if dual.len() < 2 || !lo.is_finite() {
        return Ok(dual.to_vec());
    }
    let (first, last) = (dual[0], dual[dual.len() - 1]);
    let h = (last - first) / (dual.len() - 1) as f64;
    let below = ((first - lo) / h).ceil().max(0.0) as usize + 1;
    let above = ((hi - last) / h).ceil().max(0.0) as usize + 1;
    Ok((0..below)
        .rev()
        .map(|k| first - (k + 1) as f64 * h)
        .chain(dual.iter().copied())
        .chain((1..=above).map(|k| last + k as f64 * h))
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StrongDualityReport {
    pub generators: usize,
    /// `p(0)`, the `I`-fold infimal convolution of `h` at 0.
    pub p0: f64,
    /// Convex closure of `p` at 0.
    pub cl_p0: f64,
    /// `sup_mu q(mu)` with `q(mu) = inf_u p(u) + mu u`.
    pub sup_q: f64,
    pub delta_worst: f64,
    pub spacing: f64,
    /// `|cl p(0) - sup q| < 10 * spacing`.
    pub duality_ok: bool,
    /// `0 <= p(0) - cl p(0) <= (t + 1) * delta_worst + 1e-9`.
    pub gap_ok: bool,
}

/// Builds `p(u) = inf { sum_i h(u_i) : sum_i u_i = -u }` on the grid as the
/// `I`-fold infimal convolution of `h`, then checks strong duality for its
/// closure and the relaxation gap at `u = 0` (`t = 1`).
pub fn strong_duality_check(
    fam: &QuadraticFamily,
    generators: usize,
    grid: &[f64],
) -> Result<StrongDualityReport> {
    if generators == 0 {
        return Err(DualityError::Unsupported("I must be at least 1".into()));
    }
    let h = family_h(fam, grid)?;
    let mut p = h.clone();
    for _ in 1..generators {
        p = infimal_convolution(&p, &h)?;
    }
    // p(u) = P(-u); both checks look at u = 0, where the mirror is immaterial.
    let p0 = p
        .at(0.0)
        .ok_or_else(|| DualityError::GridMismatch("grid does not contain 0".into()))?;
    let hull = lower_hull(&p);
    let cl_p0 = eval_hull(&hull, 0.0).expect("0 lies inside the grid").min(p0);

    // q is concave and piecewise linear; its slopes are bounded by the grid span.
    let (us, ps) = (p.grid(), p.values());
    let q = |mu: f64| {
        us.iter()
            .zip(ps)
            .map(|(&u, &pu)| pu - mu * u)
            .fold(f64::INFINITY, f64::min)
    };
    let slope_bound = ps
        .windows(2)
        .zip(us.windows(2))
        .map(|(v, u)| ((v[1] - v[0]) / (u[1] - u[0])).abs())
        .fold(0.0, f64::max)
        + 1.0;
    let (_, golden) = golden_max(q, -slope_bound, slope_bound, 1e-10);
    // The maximizer is one of the hull slopes; evaluate those exactly as well.
    let sup_q = hull
        .windows(2)
        .map(|w| q((w[1].1 - w[0].1) / (w[1].0 - w[0].0)))
        .fold(golden, f64::max);

    let delta = delta_grid(fam, grid)?;
    let spacing = h.spacing();
    let rel = p0 - cl_p0;
    Ok(StrongDualityReport {
        generators,
        p0,
        cl_p0,
        sup_q,
        delta_worst: delta,
        spacing,
        duality_ok: (cl_p0 - sup_q).abs() < GRID_TOL_SPACINGS * spacing,
        gap_ok: rel >= 0.0 && rel <= (fam.t() as f64 + 1.0) * delta + 1e-9,
    })
}
