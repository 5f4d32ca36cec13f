use std::fmt;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use super::{create_file, finish};
use crate::dc_model::DcModel;
use crate::error::{Error, Result};
use crate::ranking::gaussian::gaussian_overload_probabilities;
use crate::ranking::laplace::laplace_rates;
use crate::ranking::{ranks_from_scores, top_k, wilson_interval, LaplaceOptions, Thresholds};
use crate::rng::{StreamKey, TAG_GROUND_TRUTH};
use crate::stochastic::InjectionSpec;

/// Observations per Monte Carlo chunk; chunk `c` uses stream index `c`.
pub const MC_CHUNK: u64 = 50_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroundTruthSource {
    /// Exact two-sided normal tails from the true covariance.
    AnalyticGaussian,
    /// Laplace large-deviations score with the true scales. Only the ranks
    /// are meaningful.
    LaplaceLdpPerfect,
    /// Relative frequency over `n_mc` fresh observations.
    MonteCarlo { n_mc: u64, seed: u64 },
}

impl GroundTruthSource {
    pub fn name(&self) -> &'static str {
        match self {
            GroundTruthSource::AnalyticGaussian => "analytic_gaussian",
            GroundTruthSource::LaplaceLdpPerfect => "laplace_ldp_perfect",
            GroundTruthSource::MonteCarlo { .. } => "monte_carlo",
        }
    }

    /// The exact source for the given model family.
    pub fn exact_for(spec: &InjectionSpec) -> Self {
        match spec {
            InjectionSpec::Gaussian(_) => GroundTruthSource::AnalyticGaussian,
            InjectionSpec::Laplace(_) => GroundTruthSource::LaplaceLdpPerfect,
        }
    }
}

impl fmt::Display for GroundTruthSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroundTruthSource::MonteCarlo { n_mc, seed } => {
                write!(f, "monte_carlo(n_mc={n_mc};seed={seed})")
            }
            other => f.write_str(other.name()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub theta: Vec<f64>,
    /// `true_ranks[l]` is the rank of line `l + 1`.
    pub true_ranks: Vec<usize>,
    pub source: GroundTruthSource,
    /// 99% Wilson intervals, for Monte Carlo truth only.
    pub intervals: Option<Vec<(f64, f64)>>,
}

impl GroundTruth {
    pub fn from_theta(theta: Vec<f64>, source: GroundTruthSource) -> Result<Self> {
        if let Some(l) = theta.iter().position(|t| !(0.0..=1.0).contains(t)) {
            return Err(Error::Numeric(format!(
                "overload probability of line {} is {}",
                l + 1,
                theta[l]
            )));
        }
        let true_ranks = ranks_from_scores(&theta)?;
        Ok(GroundTruth {
            theta,
            true_ranks,
            source,
            intervals: None,
        })
    }

    pub fn num_lines(&self) -> usize {
        self.theta.len()
    }

    /// The true top-`k` set (1-based lines).
    pub fn top(&self, k: usize) -> Result<std::collections::BTreeSet<usize>> {
        top_k(&self.true_ranks, k)
    }

    /// Lines in true rank order (1-based).
    pub fn order(&self) -> Vec<usize> {
        let mut order = vec![0; self.true_ranks.len()];
        for (l, &r) in self.true_ranks.iter().enumerate() {
            order[r - 1] = l + 1;
        }
        order
    }

    /// Line pairs `(a, b)` ranked `a` above `b` here although the Monte
    /// Carlo truth `mc` puts `b` above `a` with disjoint Wilson intervals.
    pub fn conflicts_with(&self, mc: &GroundTruth) -> Result<Vec<(usize, usize)>> {
        let intervals = mc.intervals.as_ref().ok_or_else(|| {
            Error::Argument("comparison truth carries no confidence intervals".into())
        })?;
        if mc.num_lines() != self.num_lines() {
            return Err(Error::Dimension {
                expected: self.num_lines(),
                actual: mc.num_lines(),
                context: "ground truth lines",
            });
        }
        let mut out = Vec::new();
        for a in 0..self.num_lines() {
            for b in 0..self.num_lines() {
                if self.true_ranks[a] < self.true_ranks[b] && intervals[b].0 > intervals[a].1 {
                    out.push((a + 1, b + 1));
                }
            }
        }
        Ok(out)
    }

    pub const CSV_HEADER: &'static str = "line,theta,rank,source";

    pub fn write_csv_to(&self, out: &mut impl Write) -> std::io::Result<()> {
        writeln!(out, "{}", Self::CSV_HEADER)?;
        for l in 0..self.num_lines() {
            writeln!(
                out,
                "{},{},{},{}",
                l + 1,
                self.theta[l],
                self.true_ranks[l],
                self.source
            )?;
        }
        Ok(())
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = create_file(path)?;
        let result = self.write_csv_to(&mut out);
        finish(path, &mut out, result)
    }
}

/// Reference overload probabilities for `spec` on `model`.
pub fn ground_truth(
    model: &DcModel,
    spec: &InjectionSpec,
    gamma: &Thresholds,
    source: GroundTruthSource,
) -> Result<GroundTruth> {
    if spec.dim() != model.num_stochastic() {
        return Err(Error::Dimension {
            expected: model.num_stochastic(),
            actual: spec.dim(),
            context: "injection model vs stochastic buses",
        });
    }
    match (source, spec) {
        (GroundTruthSource::AnalyticGaussian, InjectionSpec::Gaussian(g)) => {
            let theta =
                gaussian_overload_probabilities(model, g.mean(), g.covariance(), gamma)?;
            GroundTruth::from_theta(theta, source)
        }
        (GroundTruthSource::LaplaceLdpPerfect, InjectionSpec::Laplace(l)) => {
            // Sample scale is eps * alpha, which is what the estimator sees.
            let scale = l.scale() * l.epsilon();
            let options = LaplaceOptions {
                verify_with_lp: false,
                ..LaplaceOptions::default()
            };
            let rates = laplace_rates(model, l.mean(), &scale, gamma, &options)?;
            let theta = rates.iter().map(|h| (-h / l.epsilon()).exp()).collect();
            GroundTruth::from_theta(theta, source)
        }
        (GroundTruthSource::MonteCarlo { n_mc, seed }, _) => monte_carlo(model, spec, gamma, n_mc, seed),
        (s, _) => Err(Error::Argument(format!(
            "{} ground truth is not available for a {} injection model",
            s.name(),
            spec.kind().name()
        ))),
    }
}

fn monte_carlo(
    model: &DcModel,
    spec: &InjectionSpec,
    gamma: &Thresholds,
    n_mc: u64,
    seed: u64,
) -> Result<GroundTruth> {
    if n_mc == 0 {
        return Err(Error::Argument("Monte Carlo ground truth needs n_mc >= 1".into()));
    }
    gamma.check_lines(model.num_lines())?;
    let chunks = n_mc.div_ceil(MC_CHUNK);
    let counts = (0..chunks)
        .into_par_iter()
        .map(|c| -> Result<Vec<u64>> {
            let len = MC_CHUNK.min(n_mc - c * MC_CHUNK) as usize;
            let sample = spec.sample(len, StreamKey::new(seed, TAG_GROUND_TRUTH, c))?;
            let flows = model.flows_batch(&sample.observations)?;
            Ok(flows
                .column_iter()
                .enumerate()
                .map(|(l, col)| {
                    let g = gamma.get(l);
                    col.iter().filter(|f| f.abs() >= g).count() as u64
                })
                .collect())
        })
        .try_reduce(
            || vec![0; model.num_lines()],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                Ok(a)
            },
        )?;
    let theta = counts.iter().map(|&c| c as f64 / n_mc as f64).collect();
    let intervals = counts
        .iter()
        .map(|&c| wilson_interval(c, n_mc, 0.99))
        .collect::<Result<_>>()?;
    let mut truth = GroundTruth::from_theta(theta, GroundTruthSource::MonteCarlo { n_mc, seed })?;
    truth.intervals = Some(intervals);
    Ok(truth)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn theta_outside_unit_interval_is_rejected() {
        assert!(GroundTruth::from_theta(vec![0.5, 1.5], GroundTruthSource::AnalyticGaussian).is_err());
    }

    #[test]
    fn csv_layout() {
        let truth = GroundTruth::from_theta(
            vec![0.25, 0.5],
            GroundTruthSource::MonteCarlo { n_mc: 4, seed: 9 },
        )
        .unwrap();
        let mut buf = Vec::new();
        truth.write_csv_to(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "line,theta,rank,source\n\
             1,0.25,2,monte_carlo(n_mc=4;seed=9)\n\
             2,0.5,1,monte_carlo(n_mc=4;seed=9)\n"
        );
        assert_eq!(truth.order(), vec![2, 1]);
    }
}
