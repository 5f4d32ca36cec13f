//! Monte Carlo experiments over replicated data sets.
//!
//! * [`ground_truth`] computes the reference overload probabilities `theta`.
//! * [`run_false_selection`] estimates `f_{k,j}(n)`, the probability that
//!   the true top-`k` lines are not all among the estimated top-`j`, on
//!   nested data sets.
//! * [`run_rank_intervals`] collects the distribution of each line's
//!   estimated rank at a fixed sample size.
//!
//! Replication `r` draws from the keyed stream `(seed, "injections", r)`, so
//! results do not depend on thread scheduling.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::dc_model::DcModel;
use crate::error::{Error, Result};
use crate::ranking::{
    Algorithm, CountingEstimator, GaussianEstimator, LaplaceEstimator, LaplaceOptions,
    RateEstimator, ScoreTable, Thresholds,
};

mod false_selection;
mod intervals;
mod truth;

pub use false_selection::{run_false_selection, FalseSelectionCurve, FalseSelectionRun};
pub use intervals::{run_rank_intervals, RankIntervalReport, RankIntervalRow};
pub use truth::{ground_truth, GroundTruth, GroundTruthSource, MC_CHUNK};

/// Sample sizes used when none are given.
pub const DEFAULT_N_GRID: [usize; 10] = [10, 20, 50, 100, 200, 500, 1_000, 5_000, 10_000, 100_000];

/// Settings shared by both experiments.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSettings {
    pub algorithms: Vec<Algorithm>,
    pub replications: usize,
    pub seed: u64,
    /// Small-noise parameter handed to the Laplace estimator.
    pub epsilon: f64,
    pub laplace: LaplaceOptions,
}

impl ExperimentSettings {
    pub fn new(algorithms: Vec<Algorithm>, replications: usize, seed: u64) -> Self {
        ExperimentSettings {
            algorithms,
            replications,
            seed,
            epsilon: 1.0,
            laplace: LaplaceOptions::default(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.algorithms.is_empty() {
            return Err(Error::Argument("no algorithms selected".into()));
        }
        if self.replications == 0 {
            return Err(Error::Argument("replications must be at least 1".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Argument(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// Incremental estimators for several algorithms fed from one data stream.
pub(crate) struct EstimatorBank<'a> {
    model: &'a DcModel,
    gamma: &'a Thresholds,
    settings: &'a ExperimentSettings,
    rate: Option<RateEstimator>,
    counting: Option<CountingEstimator>,
    gaussian: Option<GaussianEstimator>,
    laplace: Option<LaplaceEstimator>,
}

impl<'a> EstimatorBank<'a> {
    pub(crate) fn new(
        model: &'a DcModel,
        mu: &DVector<f64>,
        gamma: &'a Thresholds,
        settings: &'a ExperimentSettings,
    ) -> Self {
        let has = |a| settings.algorithms.contains(&a);
        EstimatorBank {
            model,
            gamma,
            settings,
            rate: has(Algorithm::RateFunction).then(|| RateEstimator::new(gamma.clone())),
            counting: has(Algorithm::Counting).then(|| CountingEstimator::new(gamma.clone())),
            gaussian: has(Algorithm::Gaussian).then(|| GaussianEstimator::new(mu.clone())),
            laplace: has(Algorithm::Laplace).then(|| LaplaceEstimator::new(mu.clone())),
        }
    }

    /// Append matching rows of injections (`n x d`) and flows (`n x m`).
    pub(crate) fn extend(&mut self, injections: &DMatrix<f64>, flows: &DMatrix<f64>) -> Result<()> {
        if let Some(e) = self.rate.as_mut() {
            e.extend(flows)?;
        }
        if let Some(e) = self.counting.as_mut() {
            e.extend(flows)?;
        }
        if let Some(e) = self.gaussian.as_mut() {
            e.extend(injections)?;
        }
        if let Some(e) = self.laplace.as_mut() {
            e.extend(injections)?;
        }
        Ok(())
    }

    /// One table per selected algorithm, in the order of `settings.algorithms`.
    pub(crate) fn estimate(&mut self) -> Result<Vec<ScoreTable>> {
        let mut out = Vec::with_capacity(self.settings.algorithms.len());
        for &alg in &self.settings.algorithms {
            let table = match alg {
                Algorithm::RateFunction => self.rate.as_mut().expect("selected").estimate()?.0,
                Algorithm::Counting => self.counting.as_ref().expect("selected").estimate()?,
                Algorithm::Gaussian => self
                    .gaussian
                    .as_ref()
                    .expect("selected")
                    .estimate(self.model, self.gamma)?,
                Algorithm::Laplace => self.laplace.as_ref().expect("selected").estimate(
                    self.model,
                    self.gamma,
                    self.settings.epsilon,
                    &self.settings.laplace,
                )?,
            };
            out.push(table);
        }
        Ok(out)
    }
}

pub(crate) fn create_file(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(std::io::BufWriter::new(file))
}

pub(crate) fn finish(path: &Path, out: &mut impl Write, result: std::io::Result<()>) -> Result<()> {
    result.and_then(|_| out.flush()).map_err(|e| Error::io(path, e))
}
