//! Quadratic payoff families `phi(gamma; theta) = a_gamma . theta - |theta|^2 / 2 + b_gamma`,
//! where every minimax quantity has a closed form or a short exact search.

use serde::Serialize;

use crate::grid::{envelope_gap, golden_max, GridFunction};
use crate::{DualityError, Result};

/// Multiset enumeration is refused beyond this many multisets.
pub const ENUMERATION_CAP: u128 = 1_000_000;
/// Bracket length at which golden-section searches stop.
pub const GOLDEN_TOL: f64 = 1e-10;

/// One payoff per generator choice `gamma`, all sharing the discriminator
/// dimension `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticFamily {
    members: Vec<(Vec<f64>, f64)>,
    t: usize,
}

impl QuadraticFamily {
    pub fn new(members: Vec<(Vec<f64>, f64)>) -> Result<Self> {
        let t = members.first().ok_or(DualityError::EmptyFamily)?.0.len();
        if !(1..=2).contains(&t) {
            return Err(DualityError::Unsupported(format!(
                "discriminator dimension {t}; only 1 and 2 are supported"
            )));
        }
        for (a, b) in &members {
            if a.len() != t {
                return Err(DualityError::Dimension {
                    expected: t,
                    found: a.len(),
                });
            }
            if !b.is_finite() || a.iter().any(|x| !x.is_finite()) {
                return Err(DualityError::NonFinite);
            }
        }
        Ok(Self { members, t })
    }

    /// Scalar family from `(a, b)` pairs.
    pub fn scalar(pairs: &[(f64, f64)]) -> Result<Self> {
        Self::new(pairs.iter().map(|&(a, b)| (vec![a], b)).collect())
    }

    /// `a in {-1, +1}`, `b = 0`.
    pub fn pm1() -> Self {
        Self::scalar(&[(-1.0, 0.0), (1.0, 0.0)]).expect("valid family")
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn members(&self) -> &[(Vec<f64>, f64)] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn payoff(&self, gamma: usize, theta: &[f64]) -> f64 {
        let (a, b) = &self.members[gamma];
        dot(a, theta) - 0.5 * dot(theta, theta) + b
    }

    /// `min_gamma phi(gamma; theta)`.
    pub fn inner_min(&self, theta: &[f64]) -> f64 {
        (0..self.len())
            .map(|g| self.payoff(g, theta))
            .fold(f64::INFINITY, f64::min)
    }

    /// `h(u) = min_gamma |u + a_gamma|^2 / 2 + b_gamma`.
    pub fn h(&self, u: &[f64]) -> f64 {
        self.members
            .iter()
            .map(|(a, b)| 0.5 * u.iter().zip(a).map(|(x, y)| (x + y).powi(2)).sum::<f64>() + b)
            .fold(f64::INFINITY, f64::min)
    }

    fn max_abs_a(&self) -> f64 {
        self.members
            .iter()
            .flat_map(|(a, _)| a.iter().map(|x| x.abs()))
            .fold(0.0, f64::max)
    }

    fn scalar_members(&self) -> Result<Vec<(f64, f64)>> {
        if self.t != 1 {
            return Err(DualityError::Unsupported(format!(
                "this operation needs t = 1, family has t = {}",
                self.t
            )));
        }
        Ok(self.members.iter().map(|(a, b)| (a[0], *b)).collect())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `h` sampled on a grid (`t = 1`).
pub fn family_h(fam: &QuadraticFamily, grid: &[f64]) -> Result<GridFunction> {
    fam.scalar_members()?;
    GridFunction::new(grid.to_vec(), grid.iter().map(|&u| fam.h(&[u])).collect())
}

/// Number of size-`i` multisets over `n` items, `C(n + i - 1, i)`, saturating.
pub fn multiset_count(n: usize, i: usize) -> u128 {
    let mut c: u128 = 1;
    for k in 1..=i as u128 {
        c = c.saturating_mul(n as u128 - 1 + k) / k;
        if c > u64::MAX as u128 {
            return u128::MAX;
        }
    }
    c
}

/// Calls `visit` with every count vector of length `n` summing to `total`.
fn for_each_composition(n: usize, total: usize, visit: &mut impl FnMut(&[usize])) {
    fn rec(counts: &mut Vec<usize>, pos: usize, left: usize, visit: &mut impl FnMut(&[usize])) {
        if pos + 1 == counts.len() {
            counts[pos] = left;
            visit(counts);
            return;
        }
        for c in (0..=left).rev() {
            counts[pos] = c;
            rec(counts, pos + 1, left - c, visit);
        }
    }
    let mut counts = vec![0; n];
    rec(&mut counts, 0, total, visit);
}

/// `w* = min over multisets {gamma_1..gamma_I} of sup_theta (1/I) sum_i phi(gamma_i; theta)`.
///
/// The inner sup is attained at `theta = a_bar`, giving `|a_bar|^2 / 2 + b_bar`.
pub fn w_star(fam: &QuadraticFamily, generators: usize) -> Result<f64> {
    if generators == 0 {
        return Err(DualityError::Unsupported("I must be at least 1".into()));
    }
    let count = multiset_count(fam.len(), generators);
    if count > ENUMERATION_CAP {
        return Err(DualityError::EnumerationCap {
            count,
            cap: ENUMERATION_CAP,
        });
    }
    let inv = 1.0 / generators as f64;
    let mut best = f64::INFINITY;
    let mut abar = vec![0.0; fam.t];
    for_each_composition(fam.len(), generators, &mut |counts| {
        abar.iter_mut().for_each(|x| *x = 0.0);
        let mut bbar = 0.0;
        for ((a, b), &c) in fam.members.iter().zip(counts) {
            if c > 0 {
                let c = c as f64;
                abar.iter_mut().zip(a).for_each(|(x, ai)| *x += c * ai);
                bbar += c * b;
            }
        }
        let v = 0.5 * abar.iter().map(|x| (x * inv).powi(2)).sum::<f64>() + bbar * inv;
        if v < best {
            best = v;
        }
    });
    Ok(best)
}

/// Points where the maximizer of `min_gamma phi(gamma; .)` can sit: piece
/// peaks `theta = a_gamma`, and (for `t = 1`) kinks where two pieces tie;
/// for `t = 2` the best point on each tie line and triple ties.
pub fn q_star_candidates(fam: &QuadraticFamily) -> Vec<Vec<f64>> {
    let m = &fam.members;
    let mut out: Vec<Vec<f64>> = m.iter().map(|(a, _)| a.clone()).collect();
    for i in 0..m.len() {
        for j in i + 1..m.len() {
            let da: Vec<f64> = m[i].0.iter().zip(&m[j].0).map(|(x, y)| x - y).collect();
            let db = m[i].1 - m[j].1;
            let nn = dot(&da, &da);
            if nn == 0.0 {
                continue;
            }
            // Tie set: da . theta + db = 0. Peak of piece i on it is the
            // projection of a_i.
            let s = (dot(&da, &m[i].0) + db) / nn;
            out.push(m[i].0.iter().zip(&da).map(|(a, d)| a - s * d).collect());
            if fam.t == 2 {
                for k in j + 1..m.len() {
                    let ea: Vec<f64> = m[i].0.iter().zip(&m[k].0).map(|(x, y)| x - y).collect();
                    let eb = m[i].1 - m[k].1;
                    let det = da[0] * ea[1] - da[1] * ea[0];
                    if det.abs() > 1e-14 {
                        out.push(vec![
                            (-db * ea[1] + eb * da[1]) / det,
                            (-eb * da[0] + db * ea[0]) / det,
                        ]);
                    }
                }
            }
        }
    }
    out
}

/// `q* = sup_theta min_gamma phi(gamma; theta)` by golden-section search
/// (nested for `t = 2`) over `[-max|a| - 1, max|a| + 1]^t`.
pub fn q_star_golden(fam: &QuadraticFamily) -> f64 {
    let r = fam.max_abs_a() + 1.0;
    match fam.t {
        1 => golden_max(|x| fam.inner_min(&[x]), -r, r, GOLDEN_TOL).1,
        _ => {
            golden_max(
                |x| golden_max(|y| fam.inner_min(&[x, y]), -r, r, GOLDEN_TOL).1,
                -r,
                r,
                GOLDEN_TOL,
            )
            .1
        }
    }
}

/// `q*` as the larger of the golden-section value and the best candidate
/// point; the candidates contain the exact maximizer.
pub fn q_star(fam: &QuadraticFamily) -> f64 {
    q_star_candidates(fam)
        .iter()
        .map(|th| fam.inner_min(th))
        .fold(q_star_golden(fam), f64::max)
}

/// Convex closure of `h` at `u` (`t = 1`):
/// `cl h(u) = sup_v min_gamma { u v - v^2/2 + a_gamma v + b_gamma }`,
/// maximized exactly over piece peaks and pairwise ties.
pub fn closure_h(fam: &QuadraticFamily, u: f64) -> Result<f64> {
    let m = fam.scalar_members()?;
    let piece = |v: f64| {
        m.iter()
            .map(|&(a, b)| u * v - 0.5 * v * v + a * v + b)
            .fold(f64::INFINITY, f64::min)
    };
    let mut cands: Vec<f64> = m.iter().map(|&(a, _)| u + a).collect();
    for i in 0..m.len() {
        for j in i + 1..m.len() {
            if m[i].0 != m[j].0 {
                cands.push(-(m[i].1 - m[j].1) / (m[i].0 - m[j].0));
            }
        }
    }
    Ok(cands.into_iter().map(piece).fold(f64::NEG_INFINITY, f64::max))
}

/// `Delta = sup_u (h - cl h)(u)` for `t = 1`. On each linear stretch of the
/// envelope `h` minus the line is a minimum of convex pieces, so the
/// supremum sits at a kink of `h`; only those are examined.
pub fn delta_exact(fam: &QuadraticFamily) -> Result<f64> {
    let m = fam.scalar_members()?;
    let mut best = 0.0f64;
    for i in 0..m.len() {
        for j in i + 1..m.len() {
            let (a1, b1) = m[i];
            let (a2, b2) = m[j];
            if a1 == a2 {
                continue;
            }
            let u = -(a1 + a2) / 2.0 - (b1 - b2) / (a1 - a2);
            best = best.max(fam.h(&[u]) - closure_h(fam, u)?);
        }
    }
    Ok(best)
}

/// `Delta` from the lower convex envelope of `h` on a grid.
pub fn delta_grid(fam: &QuadraticFamily, grid: &[f64]) -> Result<f64> {
    Ok(envelope_gap(&family_h(fam, grid)?))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DualityReport {
    pub generators: usize,
    pub w_star: f64,
    pub q_star: f64,
    pub gap: f64,
    pub delta_worst: f64,
    /// `(t + 1) * delta_worst / I`.
    pub bound: f64,
    pub holds: bool,
}

/// Exact `w*`, `q*` and the gap bound for `I` generators (`t = 1`).
pub fn exact_minimax(fam: &QuadraticFamily, generators: usize) -> Result<DualityReport> {
    let delta = delta_exact(fam)?;
    let w = w_star(fam, generators)?;
    let q = q_star(fam);
    Ok(report(fam.t, generators, w, q, delta))
}

pub(crate) fn report(t: usize, generators: usize, w: f64, q: f64, delta: f64) -> DualityReport {
    let gap = w - q;
    let bound = (t as f64 + 1.0) * delta / generators as f64;
    DualityReport {
        generators,
        w_star: w,
        q_star: q,
        gap,
        delta_worst: delta,
        bound,
        holds: gap <= bound + 1e-9,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn multiset_counts() {
        assert_eq!(multiset_count(2, 3), 4);
        assert_eq!(multiset_count(6, 16), 20_349);
        assert_eq!(multiset_count(1, 50), 1);
        assert!(multiset_count(40, 40) > ENUMERATION_CAP);
    }

    #[test]
    fn compositions_are_complete() {
        let mut seen = vec![];
        for_each_composition(3, 2, &mut |c| seen.push(c.to_vec()));
        assert_eq!(seen.len(), 6);
        assert!(seen.iter().all(|c| c.iter().sum::<usize>() == 2));
    }

    #[test]
    fn pm1_closed_forms() {
        let f = QuadraticFamily::pm1();
        assert_eq!(f.h(&[0.0]), 0.5);
        assert_eq!(w_star(&f, 1).unwrap(), 0.5);
        assert_eq!(w_star(&f, 4).unwrap(), 0.0);
        assert!((w_star(&f, 3).unwrap() - 1.0 / 18.0).abs() < 1e-16);
        assert!(q_star(&f).abs() < 1e-15);
        assert_eq!(delta_exact(&f).unwrap(), 0.5);
        assert_eq!(closure_h(&f, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn single_member_is_convex() {
        let f = QuadraticFamily::scalar(&[(0.7, -0.2)]).unwrap();
        assert_eq!(delta_exact(&f).unwrap(), 0.0);
        let r = exact_minimax(&f, 3).unwrap();
        assert!(r.gap.abs() < 1e-15);
        assert!(r.holds);
    }

    #[test]
    fn enumeration_cap_is_enforced() {
        let pairs: Vec<(f64, f64)> = (0..40).map(|i| (i as f64 * 0.01, 0.0)).collect();
        let f = QuadraticFamily::scalar(&pairs).unwrap();
        assert!(matches!(w_star(&f, 40), Err(DualityError::EnumerationCap { .. })));
    }

    #[test]
    fn family_validation() {
        assert!(matches!(QuadraticFamily::new(vec![]), Err(DualityError::EmptyFamily)));
        assert!(QuadraticFamily::new(vec![(vec![1.0], 0.0), (vec![1.0, 2.0], 0.0)]).is_err());
        assert!(QuadraticFamily::new(vec![(vec![1.0, 2.0, 3.0], 0.0)]).is_err());
        assert!(QuadraticFamily::scalar(&[(f64::NAN, 0.0)]).is_err());
        let two_d = QuadraticFamily::new(vec![(vec![1.0, 0.0], 0.0)]).unwrap();
        assert!(exact_minimax(&two_d, 1).is_err());
    }
}
