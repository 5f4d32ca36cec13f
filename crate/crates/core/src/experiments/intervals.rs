use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use super::{create_file, finish, EstimatorBank, ExperimentSettings, GroundTruth};
use crate::dc_model::DcModel;
use crate::error::{Error, Result};
use crate::ranking::{Algorithm, Thresholds};
use crate::rng::{StreamKey, TAG_INJECTIONS};
use crate::stochastic::InjectionSpec;

#[derive(Debug, Clone, PartialEq)]
pub struct RankIntervalRow {
    /// 1-based line index.
    pub line: usize,
    pub true_rank: usize,
    pub mean_rank: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Distribution of estimated ranks for one algorithm at one sample size.
/// Rows are ordered by true rank.
#[derive(Debug, Clone, PartialEq)]
pub struct RankIntervalReport {
    pub algorithm: Algorithm,
    pub n: usize,
    pub replications: usize,
    /// Central coverage of `[lo, hi]`, e.g. 0.95.
    pub level: f64,
    pub rows: Vec<RankIntervalRow>,
}

impl RankIntervalReport {
    pub const CSV_HEADER: &'static str = "algorithm,n,line,true_rank,mean_rank,lo,hi";

    pub fn write_rows(&self, out: &mut impl Write) -> std::io::Result<()> {
        for row in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                self.algorithm, self.n, row.line, row.true_rank, row.mean_rank, row.lo, row.hi
            )?;
        }
        Ok(())
    }

    pub fn write_csv(reports: &[RankIntervalReport], path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = create_file(path)?;
        let result = (|| {
            writeln!(out, "{}", Self::CSV_HEADER)?;
            for report in reports {
                report.write_rows(&mut out)?;
            }
            Ok(())
        })();
        finish(path, &mut out, result)
    }
}

/// Smallest observed value whose empirical CDF reaches `p`.
fn lower_quantile(sorted: &[usize], p: f64) -> f64 {
    let idx = ((p * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[idx - 1] as f64
}

/// Rank prediction intervals at sample size `n` with coverage `level`.
///
/// The bounds are empirical quantiles of the rank distribution. When the
/// distribution is so skewed that the mean falls outside them, the interval
/// is widened to contain the mean.
pub fn run_rank_intervals(
    model: &DcModel,
    spec: &InjectionSpec,
    gamma: &Thresholds,
    truth: &GroundTruth,
    settings: &ExperimentSettings,
    n: usize,
    level: f64,
) -> Result<Vec<RankIntervalReport>> {
    settings.validate()?;
    if n == 0 {
        return Err(Error::Argument("sample size must be at least 1".into()));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Argument(format!("interval level must lie in (0, 1), got {level}")));
    }
    let m = model.num_lines();
    if truth.num_lines() != m {
        return Err(Error::Dimension {
            expected: m,
            actual: truth.num_lines(),
            context: "ground truth lines",
        });
    }

    // ranks[r][a] is the rank vector of algorithm a in replication r.
    let ranks: Vec<Vec<Vec<usize>>> = (0..settings.replications as u64)
        .into_par_iter()
        .map(|r| {
            let sample = spec.sample(n, StreamKey::new(settings.seed, TAG_INJECTIONS, r))?;
            let flows = model.flows_batch(&sample.observations)?;
            let mut bank = EstimatorBank::new(model, spec.mean(), gamma, settings);
            bank.extend(&sample.observations, &flows)?;
            Ok(bank.estimate()?.into_iter().map(|t| t.ranks).collect())
        })
        .collect::<Result<_>>()?;

    let tail = (1.0 - level) / 2.0;
    let reports = settings
        .algorithms
        .iter()
        .enumerate()
        .map(|(a, &algorithm)| {
            let rows = truth
                .order()
                .into_iter()
                .map(|line| {
                    let mut values: Vec<usize> = ranks.iter().map(|rep| rep[a][line - 1]).collect();
                    values.sort_unstable();
                    let mean = values.iter().sum::<usize>() as f64 / values.len() as f64;
                    RankIntervalRow {
                        line,
                        true_rank: truth.true_ranks[line - 1],
                        mean_rank: mean,
                        lo: lower_quantile(&values, tail).min(mean),
                        hi: lower_quantile(&values, 1.0 - tail).max(mean),
                    }
                })
                .collect();
            RankIntervalReport {
                algorithm,
                n,
                replications: settings.replications,
                level,
                rows,
            }
        })
        .collect();
    Ok(reports)
}
