//! Decomposing a point of `conv(Y_1 + ... + Y_I)` so that at most `m`
//! summands need convexifying.

use crate::caratheodory::{caratheodory_reduce, Reduced};
use crate::lp::basic_feasible_solution;
use crate::{DualityError, Result};

/// Multipliers below this after the LP are treated as zero.
const LAMBDA_ZERO: f64 = 1e-13;

/// Finite point sets `Y_i` in `R^m` and a target `y`.
#[derive(Clone, Debug, PartialEq)]
pub struct SfInstance {
    pub sets: Vec<Vec<Vec<f64>>>,
    pub target: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Part {
    /// A single point of the set, by index.
    Pick(usize),
    /// A convex combination of at most `m + 1` points of the set.
    Convex(Reduced),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SfDecomposition {
    pub parts: Vec<Part>,
}

impl SfDecomposition {
    /// Indices of the sets that were convexified.
    pub fn convexified(&self) -> Vec<usize> {
        self.parts
            .iter()
            .enumerate()
            .filter(|(_, p)| matches!(p, Part::Convex(_)))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn reconstruct(&self, inst: &SfInstance) -> Vec<f64> {
        let mut y = vec![0.0; inst.target.len()];
        for (part, set) in self.parts.iter().zip(&inst.sets) {
            let p = match part {
                Part::Pick(j) => set[*j].clone(),
                Part::Convex(r) => r.combine(set),
            };
            y.iter_mut().zip(&p).for_each(|(a, b)| *a += b);
        }
        y
    }
}

impl SfInstance {
    fn validate(&self) -> Result<usize> {
        let m = self.target.len();
        if m == 0 {
            return Err(DualityError::Dimension {
                expected: 1,
                found: 0,
            });
        }
        if self.sets.is_empty() || self.sets.iter().any(Vec::is_empty) {
            return Err(DualityError::InvalidInstance("every set needs at least one point".into()));
        }
        for p in self.sets.iter().flatten() {
            if p.len() != m {
                return Err(DualityError::Dimension {
                    expected: m,
                    found: p.len(),
                });
            }
            if p.iter().any(|x| !x.is_finite()) {
                return Err(DualityError::NonFinite);
            }
        }
        Ok(m)
    }
}

/// Finds weights `lambda_ij >= 0` with `sum_j lambda_ij = 1` per set and
/// `sum_ij lambda_ij y_ij = y` at a vertex of that polytope. A vertex has at
/// most `m + I` non-zeros and every set needs one, so at most `m` sets have
/// more than one; those are the convexified ones.
pub fn shapley_folkman_decompose(inst: &SfInstance) -> Result<SfDecomposition> {
    let m = inst.validate()?;
    let n_sets = inst.sets.len();
    let offsets: Vec<usize> = inst
        .sets
        .iter()
        .scan(0, |acc, s| {
            let o = *acc;
            *acc += s.len();
            Some(o)
        })
        .collect();
    let n: usize = inst.sets.iter().map(Vec::len).sum();

    let mut a = vec![vec![0.0; n]; m + n_sets];
    let mut b = inst.target.clone();
    b.extend(std::iter::repeat(1.0).take(n_sets));
    for (i, set) in inst.sets.iter().enumerate() {
        for (j, p) in set.iter().enumerate() {
            let col = offsets[i] + j;
            for k in 0..m {
                a[k][col] = p[k];
            }
            a[m + i][col] = 1.0;
        }
    }
    let lambda = basic_feasible_solution(&a, &b).ok_or_else(|| DualityError::NotInHull {
        target: inst.target.clone(),
    })?;

    let mut parts = Vec::with_capacity(n_sets);
    for (i, set) in inst.sets.iter().enumerate() {
        let mut w: Vec<f64> = lambda[offsets[i]..offsets[i] + set.len()]
            .iter()
            .map(|&x| if x < LAMBDA_ZERO { 0.0 } else { x })
            .collect();
        let s: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x /= s);
        let support: Vec<usize> = (0..w.len()).filter(|&j| w[j] > 0.0).collect();
        if support.len() == 1 {
            parts.push(Part::Pick(support[0]));
        } else {
            parts.push(Part::Convex(caratheodory_reduce(set, &w)?));
        }
    }
    Ok(SfDecomposition { parts })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_dimensional_half() {
        let inst = SfInstance {
            sets: vec![vec![vec![0.0], vec![1.0]]; 3],
            target: vec![1.5],
        };
        let d = shapley_folkman_decompose(&inst).unwrap();
        assert_eq!(d.convexified().len(), 1);
        assert!((d.reconstruct(&inst)[0] - 1.5).abs() < 1e-12);
    }

    #[test]
    fn singletons_need_no_convexification() {
        let inst = SfInstance {
            sets: vec![vec![vec![1.0, 2.0]], vec![vec![-0.5, 0.5]]],
            target: vec![0.5, 2.5],
        };
        let d = shapley_folkman_decompose(&inst).unwrap();
        assert!(d.convexified().is_empty());
        assert_eq!(d.parts, vec![Part::Pick(0), Part::Pick(0)]);
    }

    #[test]
    fn outside_hull_is_an_error() {
        let inst = SfInstance {
            sets: vec![vec![vec![0.0], vec![1.0]]; 2],
            target: vec![2.5],
        };
        assert!(matches!(
            shapley_folkman_decompose(&inst),
            Err(DualityError::NotInHull { .. })
        ));
    }

    #[test]
    fn malformed_instances() {
        let empty_set = SfInstance {
            sets: vec![vec![]],
            target: vec![0.0],
        };
        assert!(shapley_folkman_decompose(&empty_set).is_err());
        let wrong_dim = SfInstance {
            sets: vec![vec![vec![0.0, 1.0]]],
            target: vec![0.0],
        };
        assert!(shapley_folkman_decompose(&wrong_dim).is_err());
    }
}
