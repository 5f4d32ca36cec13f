//! Empirical rate function estimator.
//!
//! For a line with absolute flow observations `x_1..x_n` and threshold
//! `gamma`,
//!
//! ```text
//! J = max_{lambda >= 0} { lambda * gamma - log( (1/n) sum_t exp(lambda * x_t) ) }
//! ```
//!
//! and the overload score is `exp(-J)`. The objective `g` is concave with
//! `g'(lambda) = gamma - m(lambda)`, where `m(lambda)` is the mean of the
//! exponentially tilted sample, so the maximizer is the root of `g'`.
//!
//! Special cases are resolved before optimizing:
//!
//! * `gamma <= mean(x)`: `g' <= 0` everywhere, so `lambda* = 0`, `J = 0`.
//! * `gamma > max(x)`: `g` grows without bound, `J = +inf`, score 0 and the
//!   line is flagged as saturated.
//!
//! Otherwise `lambda` is restricted to `[0, 745 / max(x)]` and the root of
//! `g'` is found by Newton's method safeguarded with bisection.

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::{Algorithm, RateDiagnostics, ScoreTable, Thresholds};
use crate::error::{Error, Result};

const LAMBDA_RTOL: f64 = 1e-10;
const MAX_ITERATIONS: usize = 200;

/// Largest `lambda * max|F|` considered.
pub const EXPONENT_CAP: f64 = 745.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateSolution {
    pub lambda_star: f64,
    pub j_hat: f64,
    pub saturated: bool,
}

impl RateSolution {
    pub fn score(&self) -> f64 {
        (-self.j_hat).exp()
    }
}

/// `(g, g', g'')` at `lambda`, with the exponentials shifted by `max` so no
/// term exceeds 1.
fn objective(x: &[f64], max: f64, gamma: f64, lambda: f64) -> (f64, f64, f64) {
    let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
    for &v in x {
        let w = (lambda * (v - max)).exp();
        s0 += w;
        s1 += w * v;
        s2 += w * v * v;
    }
    let n = x.len() as f64;
    let log_mean = lambda * max + (s0 / n).ln();
    let m1 = s1 / s0;
    let var = (s2 / s0 - m1 * m1).max(0.0);
    (lambda * gamma - log_mean, gamma - m1, -var)
}

/// Solve the inner maximization for one line.
///
/// `abs_flows` are the observed `|F_t|`. `warm_start` seeds Newton's method
/// with a previous `lambda*`, e.g. from a smaller prefix of the same data.
pub fn empirical_rate(abs_flows: &[f64], gamma: f64, warm_start: Option<f64>) -> Result<RateSolution> {
    if abs_flows.is_empty() {
        return Err(Error::Argument("empirical rate needs at least one sample".into()));
    }
    if !(gamma > 0.0) {
        return Err(Error::Argument(format!("threshold must be positive, got {gamma}")));
    }
    let n = abs_flows.len() as f64;
    let max = abs_flows.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let mean = abs_flows.iter().sum::<f64>() / n;
    rate_with_moments(abs_flows, gamma, max, mean, warm_start)
}

fn rate_with_moments(
    x: &[f64],
    gamma: f64,
    max: f64,
    mean: f64,
    warm_start: Option<f64>,
) -> Result<RateSolution> {
    if gamma > max {
        return Ok(RateSolution {
            lambda_star: f64::INFINITY,
            j_hat: f64::INFINITY,
            saturated: true,
        });
    }
    if gamma <= mean {
        return Ok(RateSolution {
            lambda_star: 0.0,
            j_hat: 0.0,
            saturated: false,
        });
    }

    // Here mean < gamma <= max, so max > 0.
    let cap = EXPONENT_CAP / max;
    let (g_cap, dg_cap, _) = objective(x, max, gamma, cap);
    if dg_cap >= 0.0 {
        return Ok(RateSolution {
            lambda_star: cap,
            j_hat: g_cap.max(0.0),
            saturated: false,
        });
    }

    let (mut lo, mut hi) = (0.0_f64, cap);
    let mut lambda = match warm_start {
        Some(l) if l > 0.0 && l < cap => l,
        _ => {
            let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / x.len() as f64;
            if var > 0.0 {
                ((gamma - mean) / var).min(0.5 * cap)
            } else {
                0.5 * cap
            }
        }
    };

    for _ in 0..MAX_ITERATIONS {
        let (_, dg, d2g) = objective(x, max, gamma, lambda);
        if dg > 0.0 {
            lo = lambda;
        } else {
            hi = lambda;
        }
        if dg == 0.0 {
            break;
        }
        let newton = if d2g < 0.0 { lambda - dg / d2g } else { f64::NAN };
        let next = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        let step = (next - lambda).abs();
        lambda = next;
        if step <= LAMBDA_RTOL * lambda || hi - lo <= LAMBDA_RTOL * hi {
            break;
        }
    }

    let (g, _, _) = objective(x, max, gamma, lambda);
    if !g.is_finite() {
        return Err(Error::Numeric(format!(
            "rate objective is not finite at lambda = {lambda}"
        )));
    }
    Ok(RateSolution {
        lambda_star: lambda,
        j_hat: g.max(0.0),
        saturated: false,
    })
}

/// Empirical rate function scores for every line.
///
/// `flow_samples` is `n x m` (one row per observation).
pub fn alg1_rate_function(
    flow_samples: &DMatrix<f64>,
    gamma: &Thresholds,
) -> Result<(ScoreTable, RateDiagnostics)> {
    let mut estimator = RateEstimator::new(gamma.clone());
    estimator.extend(flow_samples)?;
    estimator.estimate()
}

/// Incremental form of [`alg1_rate_function`].
///
/// Observations can be appended over time; each estimate warm-starts every
/// line from its previous `lambda*`.
#[derive(Debug, Clone)]
pub struct RateEstimator {
    gamma: Thresholds,
    abs_flows: Vec<Vec<f64>>,
    sums: Vec<f64>,
    maxima: Vec<f64>,
    last_lambda: Vec<Option<f64>>,
}

impl RateEstimator {
    pub fn new(gamma: Thresholds) -> Self {
        let m = gamma.len();
        RateEstimator {
            gamma,
            abs_flows: vec![Vec::new(); m],
            sums: vec![0.0; m],
            maxima: vec![f64::NEG_INFINITY; m],
            last_lambda: vec![None; m],
        }
    }

    pub fn len(&self) -> usize {
        self.abs_flows.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Append the rows of an `n x m` flow matrix.
    pub fn extend(&mut self, flows: &DMatrix<f64>) -> Result<()> {
        self.gamma.check_lines(flows.ncols())?;
        for (l, column) in flows.column_iter().enumerate() {
            for &f in column.iter() {
                let v = f.abs();
                self.abs_flows[l].push(v);
                self.sums[l] += v;
                self.maxima[l] = self.maxima[l].max(v);
            }
        }
        Ok(())
    }

    pub fn estimate(&mut self) -> Result<(ScoreTable, RateDiagnostics)> {
        let n = self.len();
        if n == 0 {
            return Err(Error::Argument("empirical rate needs at least one sample".into()));
        }
        let solutions: Vec<RateSolution> = (0..self.abs_flows.len())
            .into_par_iter()
            .map(|l| {
                rate_with_moments(
                    &self.abs_flows[l],
                    self.gamma.get(l),
                    self.maxima[l],
                    self.sums[l] / n as f64,
                    self.last_lambda[l],
                )
            })
            .collect::<Result<_>>()?;

        for (slot, sol) in self.last_lambda.iter_mut().zip(&solutions) {
            if sol.lambda_star.is_finite() && sol.lambda_star > 0.0 {
                *slot = Some(sol.lambda_star);
            }
        }

        let diagnostics = RateDiagnostics {
            lambda_star: solutions.iter().map(|s| s.lambda_star).collect(),
            j_hat: solutions.iter().map(|s| s.j_hat).collect(),
            saturated: solutions.iter().map(|s| s.saturated).collect(),
        };
        let table = ScoreTable::new(
            Algorithm::RateFunction,
            n,
            solutions.iter().map(RateSolution::score).collect(),
            solutions.iter().map(|s| Some(s.j_hat)).collect(),
            diagnostics.saturated.clone(),
        )?;
        Ok((table, diagnostics))
    }
}
