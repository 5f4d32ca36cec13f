//! Gaussian benchmark: fit the injection covariance by maximum likelihood
//! (with the mean known) and evaluate exact two-sided normal tails of each
//! line flow.

use std::f64::consts::SQRT_2;

use nalgebra::{DMatrix, DVector};
use libm::erfc;

use super::{Algorithm, ScoreTable, Thresholds};
use crate::dc_model::DcModel;
use crate::error::{Error, Result};

/// Standard normal upper tail `Q(x) = P(Z > x)`.
pub fn normal_upper_tail(x: f64) -> f64 {
    0.5 * erfc(x / SQRT_2)
}

/// `P(|F| >= gamma)` for `F ~ N(nu, sigma^2)`.
pub fn two_sided_tail(nu: f64, sigma: f64, gamma: f64) -> f64 {
    if gamma == f64::INFINITY {
        return 0.0;
    }
    if sigma == 0.0 {
        return if gamma <= nu.abs() { 1.0 } else { 0.0 };
    }
    let p = normal_upper_tail((gamma - nu) / sigma) + normal_upper_tail((gamma + nu) / sigma);
    p.min(1.0)
}

/// Flow standard deviations `sqrt((V_s Sigma V_s^T)_{ll})`.
pub fn flow_std_devs(v_s: &DMatrix<f64>, sigma: &DMatrix<f64>) -> DVector<f64> {
    let weighted = v_s * sigma;
    DVector::from_iterator(
        v_s.nrows(),
        (0..v_s.nrows()).map(|l| weighted.row(l).dot(&v_s.row(l)).max(0.0).sqrt()),
    )
}

/// Exact overload probabilities when `P ~ N(mu, sigma)`.
pub fn gaussian_overload_probabilities(
    model: &DcModel,
    mu: &DVector<f64>,
    sigma: &DMatrix<f64>,
    gamma: &Thresholds,
) -> Result<Vec<f64>> {
    let d = model.num_stochastic();
    if mu.len() != d || sigma.nrows() != d || sigma.ncols() != d {
        return Err(Error::Dimension {
            expected: d,
            actual: mu.len(),
            context: "Gaussian mean/covariance vs stochastic buses",
        });
    }
    gamma.check_lines(model.num_lines())?;
    let nu = model.flows(mu)?;
    let sd = flow_std_devs(model.v_s(), sigma);
    Ok((0..model.num_lines())
        .map(|l| two_sided_tail(nu[l], sd[l], gamma.get(l)))
        .collect())
}

/// Gaussian benchmark scores from an `n x d` injection sample.
pub fn alg3_gaussian(
    injection_samples: &DMatrix<f64>,
    model: &DcModel,
    mu: &DVector<f64>,
    gamma: &Thresholds,
) -> Result<ScoreTable> {
    let mut estimator = GaussianEstimator::new(mu.clone());
    estimator.extend(injection_samples)?;
    estimator.estimate(model, gamma)
}

/// Running scatter matrix `sum_t (P_t - mu)(P_t - mu)^T`.
#[derive(Debug, Clone)]
pub struct GaussianEstimator {
    mu: DVector<f64>,
    scatter: DMatrix<f64>,
    n: usize,
}

impl GaussianEstimator {
    pub fn new(mu: DVector<f64>) -> Self {
        let d = mu.len();
        GaussianEstimator {
            mu,
            scatter: DMatrix::zeros(d, d),
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
        let mut centred = injections.clone();
        for mut row in centred.row_iter_mut() {
            row -= self.mu.transpose();
        }
        self.scatter += centred.transpose() * &centred;
        self.n += injections.nrows();
        Ok(())
    }

    /// MLE `Sigma_hat = scatter / n`.
    pub fn covariance(&self) -> Result<DMatrix<f64>> {
        if self.n == 0 {
            return Err(Error::Argument("Gaussian estimator needs at least one sample".into()));
        }
        Ok(&self.scatter / self.n as f64)
    }

    pub fn estimate(&self, model: &DcModel, gamma: &Thresholds) -> Result<ScoreTable> {
        let sigma = self.covariance()?;
        let scores = gaussian_overload_probabilities(model, &self.mu, &sigma, gamma)?;
        let m = scores.len();
        ScoreTable::new(Algorithm::Gaussian, self.n, scores, vec![None; m], vec![false; m])
    }
}
