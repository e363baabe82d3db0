//! Dense phase-one simplex for `A λ = b, λ ≥ 0` feasibility.
//!
//! Systems here are tiny (at most a few dozen rows and columns), so a dense
//! tableau with Bland's rule is both the simplest and the most robust
//! choice: no cycling on the heavily degenerate vertices that stacked
//! rectangles produce.

const PIVOT_TOL: f64 = 1e-12;
const MAX_ITERATIONS: usize = 20_000;

#[derive(Clone, Debug)]
pub struct Feasibility {
    /// Sum of artificial variables at the phase-one optimum.
    pub infeasibility: f64,
    pub iterations: usize,
    /// A point with `λ ≥ 0`; exact solution when `infeasibility` is ~0.
    pub solution: Vec<f64>,
}

impl Feasibility {
    /// Feasible within `tol`, scaled by the magnitude of the right-hand side.
    pub fn is_feasible(&self, tol: f64, rhs_scale: f64) -> bool {
        self.infeasibility <= tol * rhs_scale.max(1.0)
    }
}

/// Row-major `rows × cols` constraint matrix.
#[derive(Clone, Debug)]
pub struct LinearSystem {
    pub rows: usize,
    pub cols: usize,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl LinearSystem {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        LinearSystem {
            rows,
            cols,
            a: vec![0.0; rows * cols],
            b: vec![0.0; rows],
        }
    }

    #[inline]
    pub fn add(&mut self, row: usize, col: usize, value: f64) {
        self.a[row * self.cols + col] += value;
    }

    pub fn rhs_scale(&self) -> f64 {
        self.b.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Max-norm residual `|A λ - b|` of a candidate solution.
    pub fn residual(&self, lambda: &[f64]) -> f64 {
        (0..self.rows)
            .map(|r| {
                let row = &self.a[r * self.cols..(r + 1) * self.cols];
                let lhs: f64 = row.iter().zip(lambda).map(|(a, l)| a * l).sum();
                (lhs - self.b[r]).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Phase-one simplex: minimizes the sum of one artificial per row.
    pub fn phase_one(&self) -> Feasibility {
        let (m, n) = (self.rows, self.cols);
        let width = n + m + 1;
        let rhs = width - 1;
        let mut t = vec![0.0; m * width];
        for r in 0..m {
            let sign = if self.b[r] < 0.0 { -1.0 } else { 1.0 };
            for c in 0..n {
                t[r * width + c] = sign * self.a[r * self.cols + c];
            }
            t[r * width + n + r] = 1.0;
            t[r * width + rhs] = sign * self.b[r];
        }
        let mut basis: Vec<usize> = (n..n + m).collect();

        // Reduced costs of min Σ artificials; artificial columns start at 0.
        let mut cost = vec![0.0; width];
        for r in 0..m {
            for c in 0..n {
                cost[c] -= t[r * width + c];
            }
            cost[rhs] -= t[r * width + rhs];
        }

        let mut iterations = 0;
        while iterations < MAX_ITERATIONS {
            // Bland: lowest-index improving column.
            let Some(enter) = (0..n + m).find(|&c| cost[c] < -PIVOT_TOL) else {
                break;
            };
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..m {
                let coef = t[r * width + enter];
                if coef > PIVOT_TOL {
                    let ratio = t[r * width + rhs] / coef;
                    let better = match leave {
                        None => true,
                        Some((lr, best)) => {
                            ratio < best - PIVOT_TOL
                                || (ratio <= best + PIVOT_TOL && basis[r] < basis[lr])
                        }
                    };
                    if better {
                        leave = Some((r, ratio));
                    }
                }
            }
            // Unbounded direction cannot occur for a sum bounded below by 0.
            let Some((pr, _)) = leave else { break };
            pivot(&mut t, &mut cost, width, m, pr, enter);
            basis[pr] = enter;
            iterations += 1;
        }

        let mut solution = vec![0.0; n];
        for (r, &var) in basis.iter().enumerate() {
            if var < n {
                solution[var] = t[r * width + rhs].max(0.0);
            }
        }
        Feasibility {
            infeasibility: (-cost[rhs]).max(0.0),
            iterations,
            solution,
        }
    }
}

fn pivot(t: &mut [f64], cost: &mut [f64], width: usize, m: usize, pr: usize, pc: usize) {
    let p = t[pr * width + pc];
    for c in 0..width {
        t[pr * width + c] /= p;
    }
    for r in 0..m {
        if r == pr {
            continue;
        }
        let f = t[r * width + pc];
        if f != 0.0 {
            for c in 0..width {
                t[r * width + c] -= f * t[pr * width + c];
            }
        }
    }
    let f = cost[pc];
    if f != 0.0 {
        for c in 0..width {
            cost[c] -= f * t[pr * width + c];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn system(rows: &[&[f64]], b: &[f64]) -> LinearSystem {
        let cols = rows[0].len();
        LinearSystem {
            rows: rows.len(),
            cols,
            a: rows.iter().flat_map(|r| r.iter().copied()).collect(),
            b: b.to_vec(),
        }
    }

    #[test]
    fn finds_nonnegative_solution() {
        // x + y = 1, x - y = 0.5  -> x = 0.75, y = 0.25
        let s = system(&[&[1.0, 1.0], &[1.0, -1.0]], &[1.0, 0.5]);
        let f = s.phase_one();
        assert!(f.is_feasible(1e-9, s.rhs_scale()));
        assert!(s.residual(&f.solution) < 1e-12);
        assert!((f.solution[0] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn detects_sign_infeasibility() {
        // x + y = -1 has no nonnegative solution
        let s = system(&[&[1.0, 1.0]], &[-1.0]);
        let f = s.phase_one();
        assert!(!f.is_feasible(1e-9, s.rhs_scale()));
        assert!((f.infeasibility - 1.0).abs() < 1e-12);
    }

    #[test]
    fn handles_redundant_and_zero_rows() {
        let s = system(
            &[&[1.0, 2.0, 0.0], &[2.0, 4.0, 0.0], &[0.0, 0.0, 0.0]],
            &[2.0, 4.0, 0.0],
        );
        let f = s.phase_one();
        assert!(f.is_feasible(1e-9, s.rhs_scale()));
        assert!(s.residual(&f.solution) < 1e-12);
    }

    #[test]
    fn inconsistent_rows_are_infeasible() {
        let s = system(&[&[1.0, 1.0], &[1.0, 1.0]], &[1.0, 2.0]);
        assert!(!s.phase_one().is_feasible(1e-9, s.rhs_scale()));
    }
}
