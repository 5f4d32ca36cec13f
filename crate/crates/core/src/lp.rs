//! A small dense two-phase simplex solver.
//!
//! Solves `min c^T x` subject to linear constraints and `x >= 0`. Pivoting
//! uses Bland's rule, which cannot cycle, so it is slow on large problems but
//! dependable on the tiny programs built per line here.

use crate::error::{Error, Result};

const PIVOT_TOL: f64 = 1e-11;
const FEASIBILITY_TOL: f64 = 1e-9;
const MAX_PIVOTS: usize = 50_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub coefficients: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

/// `min objective^T x` s.t. `constraints`, `x >= 0`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, value: f64 },
    Infeasible,
    Unbounded,
}

impl LinearProgram {
    pub fn new(objective: Vec<f64>) -> Self {
        LinearProgram {
            objective,
            constraints: Vec::new(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add(&mut self, coefficients: Vec<f64>, relation: Relation, rhs: f64) -> &mut Self {
        self.constraints.push(Constraint {
            coefficients,
            relation,
            rhs,
        });
        self
    }

    pub fn solve(&self) -> Result<LpOutcome> {
        let n = self.num_vars();
        for (k, c) in self.constraints.iter().enumerate() {
            if c.coefficients.len() != n {
                return Err(Error::Dimension {
                    expected: n,
                    actual: c.coefficients.len(),
                    context: "LP constraint width",
                });
            }
            if !c.rhs.is_finite() || c.coefficients.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!("LP constraint {k} is not finite")));
            }
        }
        Tableau::build(self).run(&self.objective)
    }
}

/// Tableau rows hold `[coefficients | rhs]`; the cost row is kept apart.
struct Tableau {
    rows: Vec<Vec<f64>>,
    basis: Vec<usize>,
    num_original: usize,
    num_cols: usize,
    artificial_start: usize,
}

impl Tableau {
    fn build(lp: &LinearProgram) -> Self {
        let n = lp.num_vars();
        let m = lp.constraints.len();

        // Normalize to rhs >= 0.
        let normalized: Vec<(Vec<f64>, Relation, f64)> = lp
            .constraints
            .iter()
            .map(|c| {
                if c.rhs < 0.0 {
                    let flipped = match c.relation {
                        Relation::Le => Relation::Ge,
                        Relation::Ge => Relation::Le,
                        Relation::Eq => Relation::Eq,
                    };
                    (c.coefficients.iter().map(|v| -v).collect(), flipped, -c.rhs)
                } else {
                    (c.coefficients.clone(), c.relation, c.rhs)
                }
            })
            .collect();

        let num_slack = normalized
            .iter()
            .filter(|(_, r, _)| *r != Relation::Eq)
            .count();
        let num_artificial = normalized
            .iter()
            .filter(|(_, r, _)| *r != Relation::Le)
            .count();
        let artificial_start = n + num_slack;
        let num_cols = artificial_start + num_artificial;

        let mut rows = Vec::with_capacity(m);
        let mut basis = Vec::with_capacity(m);
        let (mut slack, mut artificial) = (n, artificial_start);
        for (coefficients, relation, rhs) in normalized {
            let mut row = vec![0.0; num_cols + 1];
            row[..n].copy_from_slice(&coefficients);
            row[num_cols] = rhs;
            match relation {
                Relation::Le => {
                    row[slack] = 1.0;
                    basis.push(slack);
                    slack += 1;
                }
                Relation::Ge => {
                    row[slack] = -1.0;
                    slack += 1;
                    row[artificial] = 1.0;
                    basis.push(artificial);
                    artificial += 1;
                }
                Relation::Eq => {
                    row[artificial] = 1.0;
                    basis.push(artificial);
                    artificial += 1;
                }
            }
            rows.push(row);
        }

        Tableau {
            rows,
            basis,
            num_original: n,
            num_cols,
            artificial_start,
        }
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let width = self.num_cols + 1;
        let p = self.rows[row][col];
        for k in 0..width {
            self.rows[row][k] /= p;
        }
        self.rows[row][col] = 1.0;
        let pivot_row = self.rows[row].clone();
        for (r, other) in self.rows.iter_mut().enumerate() {
            if r == row {
                continue;
            }
            let factor = other[col];
            if factor != 0.0 {
                for k in 0..width {
                    other[k] -= factor * pivot_row[k];
                }
                other[col] = 0.0;
            }
        }
        self.basis[row] = col;
    }

    /// Reduced costs `c_j - c_B^T B^{-1} A_j` over the allowed columns.
    fn reduced_costs(&self, costs: &[f64], allowed: usize) -> Vec<f64> {
        let mut reduced = costs[..allowed].to_vec();
        for (r, row) in self.rows.iter().enumerate() {
            let cb = costs[self.basis[r]];
            if cb != 0.0 {
                for j in 0..allowed {
                    reduced[j] -= cb * row[j];
                }
            }
        }
        reduced
    }

    fn objective_value(&self, costs: &[f64]) -> f64 {
        self.rows
            .iter()
            .enumerate()
            .map(|(r, row)| costs[self.basis[r]] * row[self.num_cols])
            .sum()
    }

    /// Minimize `costs` using columns `< allowed`. Returns false if unbounded.
    fn optimize(&mut self, costs: &[f64], allowed: usize) -> Result<bool> {
        for _ in 0..MAX_PIVOTS {
            let reduced = self.reduced_costs(costs, allowed);
            let Some(col) = (0..allowed).find(|&j| reduced[j] < -PIVOT_TOL) else {
                return Ok(true);
            };
            let mut best: Option<(usize, f64)> = None;
            for (r, row) in self.rows.iter().enumerate() {
                let a = row[col];
                if a > PIVOT_TOL {
                    let ratio = row[self.num_cols] / a;
                    best = match best {
                        None => Some((r, ratio)),
                        Some((br, bratio)) => {
                            if ratio < bratio - 1e-15
                                || (ratio <= bratio + 1e-15 && self.basis[r] < self.basis[br])
                            {
                                Some((r, ratio))
                            } else {
                                Some((br, bratio))
                            }
                        }
                    };
                }
            }
            match best {
                Some((row, _)) => self.pivot(row, col),
                None => return Ok(false),
            }
        }
        Err(Error::Numeric("simplex pivot limit reached".into()))
    }

    fn run(mut self, objective: &[f64]) -> Result<LpOutcome> {
        let mut phase_one = vec![0.0; self.num_cols];
        for c in phase_one.iter_mut().skip(self.artificial_start) {
            *c = 1.0;
        }
        if self.artificial_start < self.num_cols {
            self.optimize(&phase_one, self.num_cols)?;
            let scale = self
                .rows
                .iter()
                .map(|r| r[self.num_cols].abs())
                .fold(1.0_f64, f64::max);
            if self.objective_value(&phase_one) > FEASIBILITY_TOL * scale {
                return Ok(LpOutcome::Infeasible);
            }
            // Drive zero-level artificials out of the basis; drop redundant rows.
            let mut r = 0;
            while r < self.rows.len() {
                if self.basis[r] >= self.artificial_start {
                    let col = (0..self.artificial_start).find(|&j| self.rows[r][j].abs() > PIVOT_TOL);
                    match col {
                        Some(col) => {
                            self.pivot(r, col);
                            r += 1;
                        }
                        None => {
                            self.rows.remove(r);
                            self.basis.remove(r);
                        }
                    }
                } else {
                    r += 1;
                }
            }
        }

        let mut costs = vec![0.0; self.num_cols];
        costs[..self.num_original].copy_from_slice(objective);
        if !self.optimize(&costs, self.artificial_start)? {
            return Ok(LpOutcome::Unbounded);
        }
        let mut x = vec![0.0; self.num_original];
        for (r, &b) in self.basis.iter().enumerate() {
            if b < self.num_original {
                x[b] = self.rows[r][self.num_cols];
            }
        }
        let value = objective.iter().zip(&x).map(|(c, v)| c * v).sum();
        Ok(LpOutcome::Optimal { x, value })
    }
}
