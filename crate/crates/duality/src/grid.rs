//! Functions sampled on 1-D grids: conjugates, lower convex envelopes and
//! infimal convolutions.

use crate::{DualityError, Result};

/// Values `h(u_j)` on a strictly increasing grid `u_1 < ... < u_m`.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    grid: Vec<f64>,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if grid.is_empty() {
            return Err(DualityError::InvalidGrid("grid is empty".into()));
        }
        if grid.len() != values.len() {
            return Err(DualityError::InvalidGrid(format!(
                "{} grid points but {} values",
                grid.len(),
                values.len()
            )));
        }
        if let Some(i) = grid.windows(2).position(|w| !(w[0] < w[1])) {
            return Err(DualityError::InvalidGrid(format!(
                "grid not strictly increasing at index {}",
                i + 1
            )));
        }
        if grid.iter().chain(&values).any(|x| !x.is_finite()) {
            return Err(DualityError::InvalidGrid("non-finite entry".into()));
        }
        Ok(Self { grid, values })
    }

    /// Samples `f` on `m` evenly spaced points of `[lo, hi]`.
    pub fn sample(lo: f64, hi: f64, m: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        let grid = uniform_grid(lo, hi, m)?;
        let values = grid.iter().map(|&u| f(u)).collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    /// Largest gap between neighbouring grid points (0 for a single point).
    pub fn spacing(&self) -> f64 {
        self.grid
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max)
    }

    /// Value at a grid point equal to `u` (within `1e-9 * spacing`), if any.
    pub fn at(&self, u: f64) -> Option<f64> {
        let tol = 1e-9 * self.spacing().max(1e-300);
        let i = self.grid.partition_point(|&g| g < u - tol);
        (i < self.len() && (self.grid[i] - u).abs() <= tol).then(|| self.values[i])
    }

    /// Pointwise sum of functions on one shared grid.
    pub fn sum(fs: &[GridFunction]) -> Result<GridFunction> {
        let first = fs
            .first()
            .ok_or_else(|| DualityError::InvalidGrid("nothing to sum".into()))?;
        let mut values = first.values.clone();
        for f in &fs[1..] {
            if f.grid != first.grid {
                return Err(DualityError::GridMismatch("summands use different grids".into()));
            }
            values.iter_mut().zip(&f.values).for_each(|(a, b)| *a += b);
        }
        GridFunction::new(first.grid.clone(), values)
    }

    /// `(m-1)`-interval uniform grid test: spacing equal within `1e-9` relative.
    pub fn is_uniform(&self) -> bool {
        if self.len() < 3 {
            return true;
        }
        let h = (self.grid[self.len() - 1] - self.grid[0]) / (self.len() - 1) as f64;
        self.grid
            .windows(2)
            .all(|w| ((w[1] - w[0]) - h).abs() <= 1e-9 * h)
    }
}

/// `m` points `lo + (hi - lo) * j / (m - 1)`; the formula keeps `lo`, `hi`
/// and any exactly representable interior point exact.
pub fn uniform_grid(lo: f64, hi: f64, m: usize) -> Result<Vec<f64>> {
    if m == 0 || !(lo.is_finite() && hi.is_finite()) || (m > 1 && !(lo < hi)) {
        return Err(DualityError::InvalidGrid(format!(
            "cannot place {m} points on [{lo}, {hi}]"
        )));
    }
    if m == 1 {
        return Ok(vec![lo]);
    }
    let span = hi - lo;
    let last = (m - 1) as f64;
    Ok((0..m).map(|j| lo + span * j as f64 / last).collect())
}

/// `f*(v) = max_j { u_j v - f(u_j) }` at every dual point.
pub fn conjugate_grid(f: &GridFunction, dual: &[f64]) -> Result<GridFunction> {
    let values = dual
        .iter()
        .map(|&v| {
            f.grid
                .iter()
                .zip(&f.values)
                .map(|(&u, &fu)| u * v - fu)
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    GridFunction::new(dual.to_vec(), values)
}

/// Vertices of the lower convex hull of the graph points, left to right.
pub fn lower_hull(f: &GridFunction) -> Vec<(f64, f64)> {
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(f.len());
    for (&x, &y) in f.grid.iter().zip(&f.values) {
        while hull.len() >= 2 {
            let (ax, ay) = hull[hull.len() - 2];
            let (bx, by) = hull[hull.len() - 1];
            // Keep b only if a -> b -> c turns counter-clockwise.
            let cross = (bx - ax) * (y - ay) - (by - ay) * (x - ax);
            if cross <= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push((x, y));
    }
    hull
}

/// Piecewise-linear interpolation of hull vertices; `None` outside their span.
pub fn eval_hull(hull: &[(f64, f64)], x: f64) -> Option<f64> {
    let first = hull.first()?;
    let last = hull.last()?;
    if x < first.0 || x > last.0 {
        return None;
    }
    let i = hull.partition_point(|p| p.0 < x);
    if i < hull.len() && hull[i].0 == x {
        return Some(hull[i].1);
    }
    let (ax, ay) = hull[i - 1];
    let (bx, by) = hull[i];
    let t = (x - ax) / (bx - ax);
    Some(ay + t * (by - ay))
}

/// Greatest convex function below `f` on its grid.
pub fn lower_convex_envelope(f: &GridFunction) -> GridFunction {
    let hull = lower_hull(f);
    let values = f
        .grid
        .iter()
        .zip(&f.values)
        .map(|(&u, &fu)| eval_hull(&hull, u).map_or(fu, |e| e.min(fu)))
        .collect();
    GridFunction {
        grid: f.grid.clone(),
        values,
    }
}

/// `sup_u (f - env f)(u)` over the grid.
pub fn envelope_gap(f: &GridFunction) -> f64 {
    let env = lower_convex_envelope(f);
    f.values
        .iter()
        .zip(&env.values)
        .map(|(a, b)| a - b)
        .fold(0.0, f64::max)
}

/// `(f ⊕ g)(w) = min_{u + v = w} f(u) + g(v)` on the sum grid. Both grids
/// must be uniform with the same spacing; the result has
/// `len(f) + len(g) - 1` points.
pub fn infimal_convolution(f: &GridFunction, g: &GridFunction) -> Result<GridFunction> {
    if !f.is_uniform() || !g.is_uniform() {
        return Err(DualityError::GridMismatch("infimal convolution needs uniform grids".into()));
    }
    let (hf, hg) = (f.spacing(), g.spacing());
    if f.len() > 1 && g.len() > 1 && (hf - hg).abs() > 1e-9 * hf.max(hg) {
        return Err(DualityError::GridMismatch(format!(
            "grid spacings differ: {hf} vs {hg}"
        )));
    }
    let m = f.len() + g.len() - 1;
    let mut values = vec![f64::INFINITY; m];
    for (i, &fv) in f.values.iter().enumerate() {
        for (j, &gv) in g.values.iter().enumerate() {
            let s = fv + gv;
            if s < values[i + j] {
                values[i + j] = s;
            }
        }
    }
    let lo = f.grid[0] + g.grid[0];
    let hi = f.grid[f.len() - 1] + g.grid[g.len() - 1];
    GridFunction::new(uniform_grid(lo, hi, m)?, values)
}

/// Maximizes a unimodal function on `[lo, hi]` by golden-section search
/// until the bracket is shorter than `tol`. Returns `(argmax, max)`.
pub fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - r * (hi - lo);
    let mut x2 = lo + r * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > tol {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + r * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - r * (hi - lo);
            f1 = f(x1);
        }
    }
    let mid = 0.5 * (lo + hi);
    let fm = f(mid);
    [(x1, f1), (x2, f2), (mid, fm)]
        .into_iter()
        .fold((mid, f64::NEG_INFINITY), |best, c| if c.1 > best.1 { c } else { best })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_grids() {
        assert!(GridFunction::new(vec![], vec![]).is_err());
        assert!(GridFunction::new(vec![0.0, 0.0], vec![1.0, 1.0]).is_err());
        assert!(GridFunction::new(vec![0.0, 1.0], vec![1.0]).is_err());
        assert!(GridFunction::new(vec![0.0], vec![f64::NAN]).is_err());
        assert!(uniform_grid(1.0, 0.0, 3).is_err());
    }

    #[test]
    fn uniform_grid_hits_integers_exactly() {
        let g = uniform_grid(-8.0, 8.0, 1601).unwrap();
        assert_eq!(g[800], 0.0);
        assert_eq!(g[700], -1.0);
        assert_eq!(g[900], 1.0);
        assert_eq!(g[1600], 8.0);
    }

    #[test]
    fn half_square_is_self_conjugate() {
        let f = GridFunction::sample(-8.0, 8.0, 1601, |u| 0.5 * u * u).unwrap();
        let dual = uniform_grid(-4.0, 4.0, 801).unwrap();
        let c = conjugate_grid(&f, &dual).unwrap();
        let h = f.spacing();
        for (&v, &cv) in dual.iter().zip(c.values()) {
            assert!((cv - 0.5 * v * v).abs() <= h * h, "v={v}");
        }
    }

    #[test]
    fn linear_function_conjugate() {
        let c = 1.5;
        let f = GridFunction::sample(-2.0, 2.0, 41, |u| c * u).unwrap();
        let dual = [0.5, 1.5, 2.5];
        let fc = conjugate_grid(&f, &dual).unwrap();
        assert_eq!(fc.values()[1], 0.0);
        // max over u in [-2, 2] of (v - c) u is attained at an endpoint.
        assert!((fc.values()[0] - 2.0).abs() < 1e-12);
        assert!((fc.values()[2] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn envelope_of_convex_is_identity() {
        let f = GridFunction::sample(-3.0, 3.0, 61, |u| u * u + u.abs()).unwrap();
        assert_eq!(lower_convex_envelope(&f), f);
    }

    #[test]
    fn envelope_of_double_well() {
        let f = GridFunction::sample(-3.0, 3.0, 601, |u| 0.5 * (u.abs() - 1.0).powi(2)).unwrap();
        let env = lower_convex_envelope(&f);
        assert_eq!(env.at(0.0).unwrap(), 0.0);
        assert!((envelope_gap(&f) - 0.5).abs() < 1e-15);
        // outside [-1, 1] the function is already convex
        assert_eq!(env.at(2.0), f.at(2.0));
    }

    #[test]
    fn two_point_envelope_is_a_line() {
        let f = GridFunction::new(vec![0.0, 2.0], vec![1.0, 5.0]).unwrap();
        let hull = lower_hull(&f);
        assert_eq!(eval_hull(&hull, 0.5), Some(2.0));
        assert_eq!(eval_hull(&hull, 3.0), None);
    }

    #[test]
    fn infimal_convolution_of_squares() {
        // (u^2/2) ⊕ (u^2/2) = w^2/4, up to h^2/4 when w/2 falls between grid points
        let f = GridFunction::sample(-4.0, 4.0, 401, |u| 0.5 * u * u).unwrap();
        let g = infimal_convolution(&f, &f).unwrap();
        let h = f.spacing();
        assert_eq!(g.len(), 801);
        assert_eq!(g.grid()[0], -8.0);
        for (&w, &v) in g.grid().iter().zip(g.values()) {
            let err = v - 0.25 * w * w;
            assert!((-1e-12..=0.25 * h * h + 1e-12).contains(&err), "w={w} {v}");
        }
    }

    #[test]
    fn infimal_convolution_rejects_mismatched_spacing() {
        let f = GridFunction::sample(0.0, 1.0, 11, |u| u).unwrap();
        let g = GridFunction::sample(0.0, 1.0, 21, |u| u).unwrap();
        assert!(matches!(infimal_convolution(&f, &g), Err(DualityError::GridMismatch(_))));
    }

    #[test]
    fn golden_finds_parabola_peak() {
        let (x, v) = golden_max(|x| -(x - 0.3).powi(2) + 2.0, -5.0, 5.0, 1e-10);
        assert!((x - 0.3).abs() < 1e-7);
        assert!((v - 2.0).abs() < 1e-14);
    }
}
