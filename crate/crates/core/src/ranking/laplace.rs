//! Laplace benchmark: large-deviations rate of the overload halfspace.
//!
//! Under independent Laplace injections with scales `alpha`, the rate
//! function is `H(p) = sum_i |p_i - mu_i| / alpha_i`, and the rate of line
//! `l` overloading is the value of
//!
//! ```text
//! min_{p, z}  sum_i z_i / alpha_i
//! s.t.        s * (V_s[l] p + (V_d a)_l) >= gamma_l,   s = sign(nu_l)
//!             z_i >= p_i - mu_i,  z_i >= mu_i - p_i
//! ```
//!
//! Substituting `delta = p - mu` gives a weighted-L1 projection onto one
//! halfspace, `min sum |delta_i| / alpha_i` s.t. `s V_s[l] delta >= gamma_l - |nu_l|`,
//! whose optimum moves only the coordinate with the largest
//! `alpha_i |V_s[l, i]|`:
//!
//! ```text
//! H_l = max(0, gamma_l - |nu_l|) / max_i alpha_i |V_s[l, i]|
//! ```
//!
//! The closed form is the primary path; the LP above, solved with the dense
//! simplex in [`crate::lp`], is an optional cross-check. The score is
//! `exp(-H_l / epsilon)`.

use nalgebra::{DMatrix, DVector};

use super::{Algorithm, ScoreTable, Thresholds};
use crate::dc_model::DcModel;
use crate::error::{Error, Result};
use crate::lp::{LinearProgram, LpOutcome, Relation};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaplaceOptions {
    /// Re-solve every line with the simplex and compare.
    pub verify_with_lp: bool,
    /// Largest tolerated `|H_closed - H_lp| / max(1, |H_closed|)`.
    pub tolerance: f64,
}

impl Default for LaplaceOptions {
    fn default() -> Self {
        LaplaceOptions {
            verify_with_lp: true,
            tolerance: 1e-7,
        }
    }
}

/// Closed-form rate `max(0, gamma - |nu|) / max_i alpha_i |v_i|`.
pub fn laplace_rate_closed_form(v_row: &[f64], alpha: &[f64], nu: f64, gamma: f64) -> f64 {
    if gamma == f64::INFINITY {
        return f64::INFINITY;
    }
    let gap = gamma - nu.abs();
    if gap <= 0.0 {
        return 0.0;
    }
    let reach = v_row
        .iter()
        .zip(alpha)
        .map(|(v, a)| (v * a).abs())
        .fold(0.0_f64, f64::max);
    if reach == 0.0 {
        f64::INFINITY
    } else {
        gap / reach
    }
}

/// Rate of one line from the LP over `(p, z)`.
///
/// `det_flow` is `(V_d a)_l`. Coordinates with `alpha_i = 0` are pinned at
/// `mu_i`. Returns `+inf` when the overload set cannot be reached.
pub fn laplace_rate_lp(
    v_row: &[f64],
    alpha: &[f64],
    mu: &[f64],
    det_flow: f64,
    gamma: f64,
) -> Result<f64> {
    let d = v_row.len();
    if alpha.len() != d || mu.len() != d {
        return Err(Error::Dimension {
            expected: d,
            actual: alpha.len().min(mu.len()),
            context: "LP row, scales and means",
        });
    }
    if gamma == f64::INFINITY {
        return Ok(f64::INFINITY);
    }
    let nu: f64 = v_row.iter().zip(mu).map(|(v, m)| v * m).sum::<f64>() + det_flow;
    let signs: &[f64] = if nu > 0.0 {
        &[1.0]
    } else if nu < 0.0 {
        &[-1.0]
    } else {
        &[1.0, -1.0]
    };

    let mut best = f64::INFINITY;
    for &s in signs {
        best = best.min(solve_halfspace_lp(v_row, alpha, mu, det_flow, gamma, s)?);
    }
    Ok(best)
}

fn solve_halfspace_lp(
    v_row: &[f64],
    alpha: &[f64],
    mu: &[f64],
    det_flow: f64,
    gamma: f64,
    sign: f64,
) -> Result<f64> {
    let active: Vec<usize> = (0..v_row.len()).filter(|&i| alpha[i] > 0.0).collect();
    let k = active.len();
    let pinned: f64 = (0..v_row.len())
        .filter(|i| !(alpha[*i] > 0.0))
        .map(|i| v_row[i] * mu[i])
        .sum();

    // Variables: p+ (k), p- (k), z (k).
    let width = 3 * k;
    let mut objective = vec![0.0; width];
    for (j, &i) in active.iter().enumerate() {
        objective[2 * k + j] = 1.0 / alpha[i];
    }
    let mut lp = LinearProgram::new(objective);

    let mut overload = vec![0.0; width];
    for (j, &i) in active.iter().enumerate() {
        overload[j] = sign * v_row[i];
        overload[k + j] = -sign * v_row[i];
    }
    lp.add(overload, Relation::Ge, gamma - sign * (det_flow + pinned));

    for (j, &i) in active.iter().enumerate() {
        // p_i - z_i <= mu_i
        let mut upper = vec![0.0; width];
        upper[j] = 1.0;
        upper[k + j] = -1.0;
        upper[2 * k + j] = -1.0;
        lp.add(upper, Relation::Le, mu[i]);
        // -p_i - z_i <= -mu_i
        let mut lower = vec![0.0; width];
        lower[j] = -1.0;
        lower[k + j] = 1.0;
        lower[2 * k + j] = -1.0;
        lp.add(lower, Relation::Le, -mu[i]);
    }

    match lp.solve()? {
        LpOutcome::Optimal { value, .. } => Ok(value.max(0.0)),
        LpOutcome::Infeasible => Ok(f64::INFINITY),
        LpOutcome::Unbounded => Err(Error::Numeric(
            "Laplace rate LP is unbounded below".into(),
        )),
    }
}

/// Rates `H_l` for every line with the given scales.
pub fn laplace_rates(
    model: &DcModel,
    mu: &DVector<f64>,
    alpha: &DVector<f64>,
    gamma: &Thresholds,
    options: &LaplaceOptions,
) -> Result<Vec<f64>> {
    let d = model.num_stochastic();
    if mu.len() != d || alpha.len() != d {
        return Err(Error::Dimension {
            expected: d,
            actual: mu.len().min(alpha.len()),
            context: "Laplace means/scales vs stochastic buses",
        });
    }
    gamma.check_lines(model.num_lines())?;
    let nu = model.flows(mu)?;
    let det = model.deterministic_flows();
    let v_s = model.v_s();

    (0..model.num_lines())
        .map(|l| {
            let row: Vec<f64> = v_s.row(l).iter().copied().collect();
            let closed = laplace_rate_closed_form(&row, alpha.as_slice(), nu[l], gamma.get(l));
            if options.verify_with_lp {
                let lp = laplace_rate_lp(&row, alpha.as_slice(), mu.as_slice(), det[l], gamma.get(l))?;
                let agree = if closed.is_infinite() || lp.is_infinite() {
                    closed == lp
                } else {
                    (closed - lp).abs() <= options.tolerance * closed.abs().max(1.0)
                };
                if !agree {
                    return Err(Error::Numeric(format!(
                        "line {}: closed-form rate {closed} disagrees with LP rate {lp}",
                        l + 1
                    )));
                }
            }
            Ok(closed)
        })
        .collect()
}

/// Score table from rates `H` with small-noise parameter `epsilon`.
pub fn laplace_score_table(rates: Vec<f64>, epsilon: f64, n: usize) -> Result<ScoreTable> {
    if !(epsilon > 0.0) {
        return Err(Error::Argument(format!("epsilon must be positive, got {epsilon}")));
    }
    let m = rates.len();
    let scores = rates.iter().map(|h| (-h / epsilon).exp()).collect();
    ScoreTable::new(
        Algorithm::Laplace,
        n,
        scores,
        rates.into_iter().map(Some).collect(),
        vec![false; m],
    )
}

/// Laplace benchmark scores from an `n x d` injection sample.
pub fn alg4_laplace(
    injection_samples: &DMatrix<f64>,
    model: &DcModel,
    mu: &DVector<f64>,
    gamma: &Thresholds,
    epsilon: f64,
    options: &LaplaceOptions,
) -> Result<ScoreTable> {
    let mut estimator = LaplaceEstimator::new(mu.clone());
    estimator.extend(injection_samples)?;
    estimator.estimate(model, gamma, epsilon, options)
}

/// Running sums of absolute deviations from the known mean.
#[derive(Debug, Clone)]
pub struct LaplaceEstimator {
    mu: DVector<f64>,
    abs_dev: DVector<f64>,
    n: usize,
}

impl LaplaceEstimator {
    pub fn new(mu: DVector<f64>) -> Self {
        let d = mu.len();
        LaplaceEstimator {
            mu,
            abs_dev: DVector::zeros(d),
            n: 0,
        }
    }

    pub fn extend(&mut self, injections: &DMatrix<f64>) -> Result<()> {
        let d = self.mu.len();
        if injections.ncols() != d {
            return Err(Error::Dimension {
                expected: d,
                actual: injections.ncols(),
                context: "injection sample columns",
            });
        }
        for row in injections.row_iter() {
            for i in 0..d {
                self.abs_dev[i] += (row[i] - self.mu[i]).abs();
            }
        }
        self.n += injections.nrows();
        Ok(())
    }

    /// MLE of the scales, `mean |P_i - mu_i|`.
    pub fn scales(&self) -> Result<DVector<f64>> {
        if self.n == 0 {
            return Err(Error::Argument("Laplace estimator needs at least one sample".into()));
        }
        Ok(&self.abs_dev / self.n as f64)
    }

    pub fn estimate(
        &self,
        model: &DcModel,
        gamma: &Thresholds,
        epsilon: f64,
        options: &LaplaceOptions,
    ) -> Result<ScoreTable> {
        let alpha = self.scales()?;
        let rates = laplace_rates(model, &self.mu, &alpha, gamma, options)?;
        laplace_score_table(rates, epsilon, self.n)
    }
}
