use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use super::{create_file, finish, EstimatorBank, ExperimentSettings, GroundTruth};
use crate::dc_model::DcModel;
use crate::error::{Error, Result};
use crate::ranking::{Algorithm, Thresholds};
use crate::rng::{StreamKey, TAG_INJECTIONS};
use crate::stochastic::InjectionSpec;

/// Estimated `f_{k,j}(n)` over a grid of sample sizes for one algorithm.
#[derive(Debug, Clone, PartialEq)]
pub struct FalseSelectionCurve {
    pub k: usize,
    pub j: usize,
    pub n_grid: Vec<usize>,
    /// Fraction of replications in which the true top-`k` set was not inside
    /// the estimated top-`j` set, per entry of `n_grid`.
    pub estimates: Vec<f64>,
    pub replications: usize,
    pub algorithm: Algorithm,
}

impl FalseSelectionCurve {
    pub const CSV_HEADER: &'static str = "algorithm,k,j,n,replications,f_hat";

    pub fn write_rows(&self, out: &mut impl Write) -> std::io::Result<()> {
        for (n, f) in self.n_grid.iter().zip(&self.estimates) {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                self.algorithm, self.k, self.j, n, self.replications, f
            )?;
        }
        Ok(())
    }
}

/// Curves for every algorithm plus the checksum of each replication's data.
#[derive(Debug, Clone, PartialEq)]
pub struct FalseSelectionRun {
    pub curves: Vec<FalseSelectionCurve>,
    /// Checksum of the full sample drawn in each replication. Every
    /// algorithm in a replication reads from that one sample.
    pub sample_checksums: Vec<u64>,
}

impl FalseSelectionRun {
    pub fn write_csv_to(&self, out: &mut impl Write) -> std::io::Result<()> {
        writeln!(out, "{}", FalseSelectionCurve::CSV_HEADER)?;
        for curve in &self.curves {
            curve.write_rows(out)?;
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

/// Estimate the probability of false selection on nested data sets.
///
/// Each replication draws `max(n_grid)` observations once; the data set of
/// size `n` is its first `n` rows.
pub fn run_false_selection(
    model: &DcModel,
    spec: &InjectionSpec,
    gamma: &Thresholds,
    truth: &GroundTruth,
    settings: &ExperimentSettings,
    k: usize,
    j: usize,
    n_grid: &[usize],
) -> Result<FalseSelectionRun> {
    settings.validate()?;
    let m = model.num_lines();
    if k == 0 || j < k || j > m {
        return Err(Error::Argument(format!(
            "need 1 <= k <= j <= {m}, got k = {k}, j = {j}"
        )));
    }
    if n_grid.is_empty() || n_grid[0] == 0 || n_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Argument(format!(
            "sample-size grid must be strictly increasing and positive, got {n_grid:?}"
        )));
    }
    if truth.num_lines() != m {
        return Err(Error::Dimension {
            expected: m,
            actual: truth.num_lines(),
            context: "ground truth lines",
        });
    }
    gamma.check_lines(m)?;
    let true_top = truth.top(k)?;
    let n_max = *n_grid.last().expect("non-empty");
    let algs = settings.algorithms.len();

    // misses[a][g] for one replication.
    let per_rep: Vec<(u64, Vec<Vec<bool>>)> = (0..settings.replications as u64)
        .into_par_iter()
        .map(|r| {
            let sample = spec.sample(n_max, StreamKey::new(settings.seed, TAG_INJECTIONS, r))?;
            let checksum = sample.checksum(n_max);
            let flows = model.flows_batch(&sample.observations)?;
            let mut bank = EstimatorBank::new(model, spec.mean(), gamma, settings);
            let mut misses = vec![vec![false; n_grid.len()]; algs];
            let mut done = 0;
            for (g, &n) in n_grid.iter().enumerate() {
                let rows = n - done;
                bank.extend(
                    &sample.observations.rows(done, rows).into_owned(),
                    &flows.rows(done, rows).into_owned(),
                )?;
                done = n;
                for (a, table) in bank.estimate()?.iter().enumerate() {
                    misses[a][g] = !true_top.is_subset(&table.top(j)?);
                }
            }
            Ok((checksum, misses))
        })
        .collect::<Result<_>>()?;

    let reps = settings.replications as f64;
    let curves = settings
        .algorithms
        .iter()
        .enumerate()
        .map(|(a, &algorithm)| FalseSelectionCurve {
            k,
            j,
            n_grid: n_grid.to_vec(),
            estimates: (0..n_grid.len())
                .map(|g| per_rep.iter().filter(|(_, m)| m[a][g]).count() as f64 / reps)
                .collect(),
            replications: settings.replications,
            algorithm,
        })
        .collect();
    Ok(FalseSelectionRun {
        curves,
        sample_checksums: per_rep.iter().map(|(c, _)| *c).collect(),
    })
}
