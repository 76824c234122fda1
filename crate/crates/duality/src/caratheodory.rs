//! Reducing a convex combination in `R^d` to at most `d + 1` points.

use crate::{DualityError, Result};

/// Weights below this are treated as zero after an elimination step.
const ZERO_WEIGHT: f64 = 1e-15;

/// A convex combination over a subset of the input points.
#[derive(Clone, Debug, PartialEq)]
pub struct Reduced {
    /// Indices into the original point list.
    pub indices: Vec<usize>,
    pub weights: Vec<f64>,
}

impl Reduced {
    pub fn combine(&self, points: &[Vec<f64>]) -> Vec<f64> {
        let d = points.first().map_or(0, Vec::len);
        let mut out = vec![0.0; d];
        for (&i, &w) in self.indices.iter().zip(&self.weights) {
            out.iter_mut().zip(&points[i]).for_each(|(o, p)| *o += w * p);
        }
        out
    }
}

/// `sum_j w_j p_j` for a full weight vector.
pub fn combine(points: &[Vec<f64>], weights: &[f64]) -> Vec<f64> {
    let d = points.first().map_or(0, Vec::len);
    let mut out = vec![0.0; d];
    for (p, &w) in points.iter().zip(weights) {
        out.iter_mut().zip(p).for_each(|(o, x)| *o += w * x);
    }
    out
}

pub(crate) fn check_convex_weights(weights: &[f64], len: usize) -> Result<()> {
    if weights.len() != len {
        return Err(DualityError::NotConvexCombination(format!(
            "{} weights for {len} points",
            weights.len()
        )));
    }
    if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < -1e-12) {
        return Err(DualityError::NotConvexCombination(format!("weight {w}")));
    }
    let s: f64 = weights.iter().sum();
    if (s - 1.0).abs() > 1e-9 {
        return Err(DualityError::NotConvexCombination(format!("weights sum to {s}")));
    }
    Ok(())
}

/// A non-zero `c` with `sum_j c_j p_j = 0` and `sum_j c_j = 0`, found by
/// Gauss-Jordan elimination on the `(d + 1) x n` system. Needs `n > d + 1`
/// or an affinely dependent set.
pub fn affine_dependence(points: &[&[f64]]) -> Option<Vec<f64>> {
    let n = points.len();
    let d = points.first()?.len();
    let rows = d + 1;
    let mut a: Vec<Vec<f64>> = (0..rows)
        .map(|r| {
            (0..n)
                .map(|j| if r < d { points[j][r] } else { 1.0 })
                .collect()
        })
        .collect();
    let scale = a
        .iter()
        .flatten()
        .map(|x| x.abs())
        .fold(1.0, f64::max);
    let mut pivots: Vec<usize> = Vec::new();
    let mut r = 0;
    for col in 0..n {
        if r == rows {
            break;
        }
        let (best, val) = (r..rows)
            .map(|i| (i, a[i][col].abs()))
            .fold((r, -1.0), |b, c| if c.1 > b.1 { c } else { b });
        if val <= 1e-12 * scale {
            continue;
        }
        a.swap(r, best);
        let p = a[r][col];
        a[r].iter_mut().for_each(|x| *x /= p);
        for i in 0..rows {
            if i != r && a[i][col] != 0.0 {
                let f = a[i][col];
                let pivot_row = a[r].clone();
                a[i].iter_mut().zip(&pivot_row).for_each(|(x, y)| *x -= f * y);
            }
        }
        pivots.push(col);
        r += 1;
    }
    let free = (0..n).find(|c| !pivots.contains(c))?;
    let mut c = vec![0.0; n];
    c[free] = 1.0;
    for (row, &pc) in pivots.iter().enumerate() {
        c[pc] = -a[row][free];
    }
    Some(c)
}

/// Drops points from the convex combination until at most `d + 1` remain,
/// keeping `sum_j w_j p_j` unchanged.
pub fn caratheodory_reduce(points: &[Vec<f64>], weights: &[f64]) -> Result<Reduced> {
    if points.is_empty() {
        return Err(DualityError::NotConvexCombination("no points".into()));
    }
    let d = points[0].len();
    if let Some(p) = points.iter().find(|p| p.len() != d) {
        return Err(DualityError::Dimension {
            expected: d,
            found: p.len(),
        });
    }
    check_convex_weights(weights, points.len())?;

    let mut idx: Vec<usize> = (0..points.len()).filter(|&i| weights[i] > 0.0).collect();
    let mut w: Vec<f64> = idx.iter().map(|&i| weights[i]).collect();
    while idx.len() > d + 1 {
        let take = d + 2;
        let pts: Vec<&[f64]> = idx[..take].iter().map(|&i| points[i].as_slice()).collect();
        let mut c = affine_dependence(&pts).expect("d + 2 points in R^d are affinely dependent");
        if !c.iter().any(|&x| x > 0.0) {
            c.iter_mut().for_each(|x| *x = -*x);
        }
        let (k, alpha) = c
            .iter()
            .enumerate()
            .filter(|(_, &cj)| cj > 0.0)
            .map(|(j, &cj)| (j, w[j] / cj))
            .fold((usize::MAX, f64::INFINITY), |b, x| if x.1 < b.1 { x } else { b });
        for j in 0..take {
            w[j] -= alpha * c[j];
        }
        w[k] = 0.0;
        let keep: Vec<bool> = w.iter().map(|&x| x > ZERO_WEIGHT).collect();
        idx = idx.iter().zip(&keep).filter(|(_, &k)| k).map(|(&i, _)| i).collect();
        w = w.iter().zip(&keep).filter(|(_, &k)| k).map(|(&x, _)| x).collect();
    }
    Ok(Reduced {
        indices: idx,
        weights: w,
    })
}
