//! Dense primal simplex for `max c·x  s.t.  A x <= b, x >= 0` with `b >= 0`.
//!
//! With a non-negative right-hand side the slack basis is feasible, so no
//! first phase is needed. Pricing is Dantzig's rule; after a run of
//! degenerate pivots the solver switches to Bland's rule, which cannot
//! cycle.

use crate::error::{Error, Result};

const PIVOT_TOL: f64 = 1e-11;
const COST_TOL: f64 = 1e-10;
const DEGENERATE_RUN: usize = 32;

#[derive(Debug, Clone)]
pub struct LinearProgram {
    objective: Vec<f64>,
    rows: Vec<Vec<(usize, f64)>>,
    rhs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub pivots: usize,
}

impl LinearProgram {
    pub fn new(objective: Vec<f64>) -> Self {
        LinearProgram {
            objective,
            rows: Vec::new(),
            rhs: Vec::new(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    /// Adds `sum coeff * x[var] <= bound` from sparse terms.
    pub fn add_le(&mut self, terms: Vec<(usize, f64)>, bound: f64) -> Result<()> {
        if !(bound >= 0.0 && bound.is_finite()) {
            return Err(Error::Lp(format!(
                "right-hand side must be finite and non-negative, got {bound}"
            )));
        }
        if let Some((var, _)) = terms.iter().find(|(v, _)| *v >= self.objective.len()) {
            return Err(Error::Lp(format!("row references missing variable {var}")));
        }
        if terms.iter().any(|(_, c)| !c.is_finite()) {
            return Err(Error::Lp("non-finite coefficient".into()));
        }
        self.rows.push(terms);
        self.rhs.push(bound);
        Ok(())
    }

    pub fn solve(&self) -> Result<LpSolution> {
        let n = self.objective.len();
        let m = self.rows.len();
        if self.objective.iter().any(|c| !c.is_finite()) {
            return Err(Error::Lp("non-finite objective coefficient".into()));
        }
        if n == 0 {
            return Ok(LpSolution {
                x: Vec::new(),
                objective: 0.0,
                pivots: 0,
            });
        }
        let width = n + m + 1;
        let rhs_col = n + m;
        let mut tab = vec![0.0; (m + 1) * width];
        for (r, terms) in self.rows.iter().enumerate() {
            let row = &mut tab[r * width..(r + 1) * width];
            for &(var, coeff) in terms {
                row[var] += coeff;
            }
            row[n + r] = 1.0;
            row[rhs_col] = self.rhs[r];
        }
        // Reduced-cost row holds c_j - z_j; the objective value sits negated
        // in its rhs slot.
        tab[m * width..m * width + n].copy_from_slice(&self.objective);
        let mut basis: Vec<usize> = (n..n + m).collect();

        let max_iters = 50 * (n + m) + 1_000;
        let mut pivots = 0;
        let mut degenerate = 0;
        loop {
            let costs = &tab[m * width..m * width + n + m];
            let entering = if degenerate >= DEGENERATE_RUN {
                costs.iter().position(|&c| c > COST_TOL)
            } else {
                let mut best = None;
                let mut best_cost = COST_TOL;
                for (j, &c) in costs.iter().enumerate() {
                    if c > best_cost {
                        best_cost = c;
                        best = Some(j);
                    }
                }
                best
            };
            let Some(col) = entering else { break };

            let mut leave: Option<(usize, f64)> = None;
            for r in 0..m {
                let a = tab[r * width + col];
                if a > PIVOT_TOL {
                    let ratio = tab[r * width + rhs_col] / a;
                    match leave {
                        None => leave = Some((r, ratio)),
                        Some((lr, lratio)) => {
                            if ratio < lratio - 1e-12
                                || (ratio <= lratio + 1e-12 && basis[r] < basis[lr])
                            {
                                leave = Some((r, ratio));
                            }
                        }
                    }
                }
            }
            let Some((prow, ratio)) = leave else {
                return Err(Error::Lp("objective is unbounded".into()));
            };
            if ratio <= 1e-12 {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            pivot(&mut tab, width, prow, col);
            basis[prow] = col;
            pivots += 1;
            if pivots > max_iters {
                return Err(Error::Lp(format!("no convergence after {pivots} pivots")));
            }
        }

        let mut x = vec![0.0; n];
        for (r, &var) in basis.iter().enumerate() {
            if var < n {
                x[var] = tab[r * width + rhs_col].max(0.0);
            }
        }
        let objective = self.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
        Ok(LpSolution {
            x,
            objective,
            pivots,
        })
    }
}

fn pivot(tab: &mut [f64], width: usize, prow: usize, col: usize) {
    let inv = 1.0 / tab[prow * width + col];
    {
        let row = &mut tab[prow * width..(prow + 1) * width];
        for v in row.iter_mut() {
            *v *= inv;
        }
        row[col] = 1.0;
    }
    let (before, rest) = tab.split_at_mut(prow * width);
    let (pivot_row, after) = rest.split_at_mut(width);
    let eliminate = |row: &mut [f64]| {
        let factor = row[col];
        if factor != 0.0 {
            for (v, p) in row.iter_mut().zip(pivot_row.iter()) {
                *v -= factor * p;
            }
            row[col] = 0.0;
        }
    };
    for row in before.chunks_exact_mut(width) {
        eliminate(row);
    }
    // `after` also holds the reduced-cost row, which is eliminated alike.
    for row in after.chunks_exact_mut(width) {
        eliminate(row);
    }
}
