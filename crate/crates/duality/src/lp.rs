//! Dense phase-one simplex for small feasibility problems `A x = b, x >= 0`.

const EPS: f64 = 1e-11;

/// A basic feasible solution of `A x = b, x >= 0`, or `None` if the system
/// is infeasible. `a` is row-major `rows x n`. Bland's rule prevents cycling.
pub fn basic_feasible_solution(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let rows = a.len();
    let n = a.first().map_or(0, Vec::len);
    let width = n + rows + 1;
    let mut t: Vec<Vec<f64>> = a
        .iter()
        .zip(b)
        .enumerate()
        .map(|(i, (row, &bi))| {
            let sign = if bi < 0.0 { -1.0 } else { 1.0 };
            let mut r: Vec<f64> = row.iter().map(|x| sign * x).collect();
            r.extend((0..rows).map(|k| if k == i { 1.0 } else { 0.0 }));
            r.push(sign * bi);
            r
        })
        .collect();
    let mut basis: Vec<usize> = (n..n + rows).collect();
    // Reduced costs of the phase-one objective (sum of artificials).
    let mut cost = vec![0.0; width];
    for r in &t {
        for j in 0..n {
            cost[j] -= r[j];
        }
        cost[width - 1] -= r[width - 1];
    }

    loop {
        let Some(enter) = (0..n + rows).find(|&j| cost[j] < -EPS) else {
            break;
        };
        let mut leave: Option<usize> = None;
        let mut best = f64::INFINITY;
        for i in 0..rows {
            let aij = t[i][enter];
            if aij > EPS {
                let ratio = t[i][width - 1] / aij;
                let better = ratio < best - 1e-15
                    || (ratio <= best + 1e-15 && leave.is_some_and(|l| basis[i] < basis[l]));
                if better {
                    best = ratio;
                    leave = Some(i);
                }
            }
        }
        // Phase one is bounded below by zero, so a pivot row always exists.
        let leave = leave?;
        pivot(&mut t, &mut cost, leave, enter);
        basis[leave] = enter;
    }

    let scale = b.iter().map(|x| x.abs()).fold(1.0, f64::max);
    if -cost[width - 1] > 1e-9 * scale {
        return None;
    }
    // Drive zero-level artificials out of the basis where possible.
    for i in 0..rows {
        if basis[i] >= n {
            if let Some(j) = (0..n).find(|&j| t[i][j].abs() > 1e-9) {
                pivot(&mut t, &mut cost, i, j);
                basis[i] = j;
            }
        }
    }
    let mut x = vec![0.0; n];
    for (i, &bv) in basis.iter().enumerate() {
        if bv < n {
            x[bv] = t[i][width - 1].max(0.0);
        }
    }
    Some(x)
}

fn pivot(t: &mut [Vec<f64>], cost: &mut [f64], row: usize, col: usize) {
    let p = t[row][col];
    t[row].iter_mut().for_each(|x| *x /= p);
    let pr = t[row].clone();
    for (i, r) in t.iter_mut().enumerate() {
        if i != row && r[col] != 0.0 {
            let f = r[col];
            r.iter_mut().zip(&pr).for_each(|(x, y)| *x -= f * y);
        }
    }
    let f = cost[col];
    cost.iter_mut().zip(&pr).for_each(|(x, y)| *x -= f * y);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simple_feasible_system() {
        // x + y = 1, x - y = 0.5
        let x = basic_feasible_solution(&[vec![1.0, 1.0], vec![1.0, -1.0]], &[1.0, 0.5]).unwrap();
        assert!((x[0] - 0.75).abs() < 1e-12 && (x[1] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn infeasible_system() {
        // x + y = -1 with x, y >= 0
        assert!(basic_feasible_solution(&[vec![1.0, 1.0]], &[-1.0]).is_none());
    }

    #[test]
    fn solution_is_basic() {
        // One equation, three unknowns: a vertex has at most one non-zero.
        let x = basic_feasible_solution(&[vec![1.0, 2.0, 3.0]], &[6.0]).unwrap();
        assert_eq!(x.iter().filter(|&&v| v > 0.0).count(), 1);
        assert!((x[0] + 2.0 * x[1] + 3.0 * x[2] - 6.0).abs() < 1e-12);
    }

    #[test]
    fn redundant_rows() {
        let a = vec![vec![1.0, 1.0], vec![2.0, 2.0]];
        let x = basic_feasible_solution(&a, &[1.0, 2.0]).unwrap();
        assert!((x[0] + x[1] - 1.0).abs() < 1e-12);
    }
}
