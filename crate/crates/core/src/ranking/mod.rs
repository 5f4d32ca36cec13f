//! Line ranking by estimated overload probability.
//!
//! Four estimators of `theta_l = P(|F_l| >= gamma_l)` are provided:
//!
//! | [`Algorithm`] | estimator | module |
//! |---|---|---|
//! | `RateFunction` | `exp(-J)` with `J` the empirical Legendre transform of the flow CGF | [`rate`] |
//! | `Counting` | fraction of samples with `|F| >= gamma` | [`counting`] |
//! | `Gaussian` | two-sided normal tail with MLE covariance | [`gaussian`] |
//! | `Laplace` | `exp(-H/eps)` with `H` the Laplace LDP rate of the overload halfspace | [`laplace`] |
//!
//! Every estimator yields a [`ScoreTable`]; ranks are assigned by descending
//! score with ties broken by ascending line index. When every line carries a
//! rate value the ranks come from ascending rate instead, which is the same
//! order but survives `exp(-rate)` underflowing to zero.

use std::collections::BTreeSet;
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use nalgebra::DVector;

use crate::dc_model::DcModel;
use crate::error::{Error, Result};

pub mod counting;
pub mod gaussian;
pub mod laplace;
pub mod rate;

pub use counting::{alg2_counting, alg2_with_intervals, wilson_interval, CountingEstimator};
pub use gaussian::{alg3_gaussian, gaussian_overload_probabilities, GaussianEstimator};
pub use laplace::{alg4_laplace, laplace_rate_closed_form, laplace_rate_lp, LaplaceEstimator, LaplaceOptions};
pub use rate::{alg1_rate_function, empirical_rate, RateEstimator, RateSolution};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Algorithm {
    /// Empirical rate function (non-parametric).
    RateFunction,
    /// Relative frequency of overloads.
    Counting,
    /// Gaussian MLE tails.
    Gaussian,
    /// Laplace large-deviations linear program.
    Laplace,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [
        Algorithm::RateFunction,
        Algorithm::Counting,
        Algorithm::Gaussian,
        Algorithm::Laplace,
    ];

    /// Short name used in CSV files: `alg1` .. `alg4`.
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::RateFunction => "alg1",
            Algorithm::Counting => "alg2",
            Algorithm::Gaussian => "alg3",
            Algorithm::Laplace => "alg4",
        }
    }

    pub fn number(self) -> u8 {
        match self {
            Algorithm::RateFunction => 1,
            Algorithm::Counting => 2,
            Algorithm::Gaussian => 3,
            Algorithm::Laplace => 4,
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "1" | "alg1" | "rate" => Ok(Algorithm::RateFunction),
            "2" | "alg2" | "counting" => Ok(Algorithm::Counting),
            "3" | "alg3" | "gaussian" => Ok(Algorithm::Gaussian),
            "4" | "alg4" | "laplace" => Ok(Algorithm::Laplace),
            other => Err(Error::Argument(format!("unknown algorithm {other:?}"))),
        }
    }
}

/// Per-line overload thresholds `gamma` in p.u.; `+inf` disables a line.
#[derive(Debug, Clone, PartialEq)]
pub struct Thresholds {
    gamma: DVector<f64>,
}

impl Thresholds {
    pub fn new(gamma: DVector<f64>) -> Result<Self> {
        if let Some((l, g)) = gamma.iter().enumerate().find(|(_, g)| !(**g > 0.0)) {
            return Err(Error::Argument(format!(
                "threshold of line {} must be positive, got {g}",
                l + 1
            )));
        }
        Ok(Thresholds { gamma })
    }

    /// Thresholds from `RATE_A`; unrated lines get `+inf`.
    pub fn from_ratings(model: &DcModel) -> Self {
        let gamma = model
            .ratings()
            .map(|r| if r > 0.0 { r } else { f64::INFINITY });
        Thresholds { gamma }
    }

    /// `gamma_l = multiplier * |nu_l|`.
    pub fn from_nominal_multiple(model: &DcModel, multiplier: f64) -> Result<Self> {
        if !(multiplier > 0.0) {
            return Err(Error::Argument(format!(
                "threshold multiplier must be positive, got {multiplier}"
            )));
        }
        Thresholds::new(model.nominal_flows().map(|nu| multiplier * nu.abs()))
    }

    /// Thresholds given in MW.
    pub fn from_mw(values: &[f64], base_mva: f64) -> Result<Self> {
        Thresholds::new(DVector::from_iterator(
            values.len(),
            values.iter().map(|v| v / base_mva),
        ))
    }

    /// Read `line,gamma_mw` rows; every line of the model must appear once.
    pub fn read_csv(path: impl AsRef<Path>, model: &DcModel) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = csv::Reader::from_reader(file);
        let m = model.num_lines();
        let mut values = vec![None; m];
        for record in reader.records() {
            let record = record?;
            let parse = |k: usize| -> Result<f64> {
                record
                    .get(k)
                    .and_then(|s| s.trim().parse::<f64>().ok())
                    .ok_or_else(|| Error::Argument(format!("{}: bad row {record:?}", path.display())))
            };
            let line = parse(0)? as usize;
            if line == 0 || line > m {
                return Err(Error::Argument(format!(
                    "{}: line {line} out of range 1..={m}",
                    path.display()
                )));
            }
            values[line - 1] = Some(parse(1)?);
        }
        let values: Vec<f64> = values
            .into_iter()
            .enumerate()
            .map(|(l, v)| {
                v.ok_or_else(|| {
                    Error::Argument(format!("{}: no threshold for line {}", path.display(), l + 1))
                })
            })
            .collect::<Result<_>>()?;
        Thresholds::from_mw(&values, model.base_mva())
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.gamma
    }

    pub fn len(&self) -> usize {
        self.gamma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gamma.is_empty()
    }

    pub fn get(&self, line: usize) -> f64 {
        self.gamma[line]
    }

    pub(crate) fn check_lines(&self, m: usize) -> Result<()> {
        if self.len() != m {
            return Err(Error::Dimension {
                expected: m,
                actual: self.len(),
                context: "one threshold per line",
            });
        }
        Ok(())
    }
}

/// Output of one estimator on one data set.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    pub algorithm: Algorithm,
    /// Number of observations used.
    pub n: usize,
    /// Estimated overload probabilities `Theta_l`, in [0, 1].
    pub scores: Vec<f64>,
    /// Rate values (`J` or `H`) where the estimator has one.
    pub rate_values: Vec<Option<f64>>,
    /// Lines whose rate is infinite because the threshold lies beyond the data.
    pub saturated: Vec<bool>,
    /// `ranks[l]` is the 1-based rank of line `l + 1`.
    pub ranks: Vec<usize>,
}

impl ScoreTable {
    pub fn new(
        algorithm: Algorithm,
        n: usize,
        scores: Vec<f64>,
        rate_values: Vec<Option<f64>>,
        saturated: Vec<bool>,
    ) -> Result<Self> {
        let by_rate: Option<Vec<f64>> = rate_values.iter().map(|r| r.map(|v| -v)).collect();
        let ranks = match by_rate {
            Some(neg) if !neg.is_empty() => ranks_from_scores(&neg)?,
            _ => ranks_from_scores(&scores)?,
        };
        Ok(ScoreTable {
            algorithm,
            n,
            scores,
            rate_values,
            saturated,
            ranks,
        })
    }

    pub fn num_lines(&self) -> usize {
        self.scores.len()
    }

    /// The `j` highest-ranked lines (1-based indices).
    pub fn top(&self, j: usize) -> Result<BTreeSet<usize>> {
        top_k(&self.ranks, j)
    }

    /// Lines in rank order (1-based indices).
    pub fn order(&self) -> Vec<usize> {
        let mut order = vec![0; self.ranks.len()];
        for (l, &r) in self.ranks.iter().enumerate() {
            order[r - 1] = l + 1;
        }
        order
    }

    pub const CSV_HEADER: &'static str = "line,score,rate_value,rank,saturated,algorithm,n";

    pub fn write_csv_to(&self, out: &mut impl Write) -> std::io::Result<()> {
        writeln!(out, "{}", Self::CSV_HEADER)?;
        for l in 0..self.num_lines() {
            let rate = match self.rate_values[l] {
                Some(v) => v.to_string(),
                None => String::new(),
            };
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                l + 1,
                self.scores[l],
                rate,
                self.ranks[l],
                self.saturated[l],
                self.algorithm,
                self.n
            )?;
        }
        Ok(())
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        self.write_csv_to(&mut out)
            .and_then(|_| out.flush())
            .map_err(|e| Error::io(path, e))
    }
}

/// Per-line details of the empirical rate function fit.
#[derive(Debug, Clone, PartialEq)]
pub struct RateDiagnostics {
    pub lambda_star: Vec<f64>,
    pub j_hat: Vec<f64>,
    pub saturated: Vec<bool>,
}

/// 1-based ranks by descending score, ties broken by ascending line index.
pub fn ranks_from_scores(scores: &[f64]) -> Result<Vec<usize>> {
    if scores.is_empty() {
        return Err(Error::Argument("cannot rank zero lines".into()));
    }
    if let Some(l) = scores.iter().position(|s| s.is_nan()) {
        return Err(Error::Numeric(format!("score of line {} is NaN", l + 1)));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    // Stable sort keeps index order among equal scores.
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut ranks = vec![0; scores.len()];
    for (r, &l) in order.iter().enumerate() {
        ranks[l] = r + 1;
    }
    Ok(ranks)
}

/// The lines (1-based) whose rank is at most `j`.
pub fn top_k(ranks: &[usize], j: usize) -> Result<BTreeSet<usize>> {
    if j == 0 || j > ranks.len() {
        return Err(Error::Argument(format!(
            "top-j size {j} outside 1..={}",
            ranks.len()
        )));
    }
    Ok(ranks
        .iter()
        .enumerate()
        .filter(|(_, &r)| r <= j)
        .map(|(l, _)| l + 1)
        .collect())
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn ties_broken_by_index() {
        assert_eq!(ranks_from_scores(&[0.1, 0.5, 0.5]).unwrap(), vec![3, 1, 2]);
        assert_eq!(ranks_from_scores(&[0.2; 4]).unwrap(), vec![1, 2, 3, 4]);
        assert_eq!(ranks_from_scores(&[0.0, 1.0]).unwrap(), vec![2, 1]);
    }

    #[test]
    fn nan_scores_are_rejected() {
        assert!(matches!(
            ranks_from_scores(&[0.1, f64::NAN]),
            Err(Error::Numeric(_))
        ));
    }

    #[test]
    fn top_sets() {
        assert_eq!(top_k(&[3, 1, 2], 2).unwrap(), BTreeSet::from([2, 3]));
        assert_eq!(top_k(&[3, 1, 2], 3).unwrap(), BTreeSet::from([1, 2, 3]));
        let ranks = ranks_from_scores(&[0.0, 1.0]).unwrap();
        assert_eq!(top_k(&ranks, 1).unwrap(), BTreeSet::from([2]));
        assert!(top_k(&[1, 2], 0).is_err());
        assert!(top_k(&[1, 2], 3).is_err());
    }

    #[test]
    fn thresholds_must_be_positive() {
        assert!(Thresholds::new(DVector::from_vec(vec![1.0, 0.0])).is_err());
        assert!(Thresholds::new(DVector::from_vec(vec![1.0, f64::INFINITY])).is_ok());
    }

    #[test]
    fn algorithm_names_parse() {
        for alg in Algorithm::ALL {
            assert_eq!(alg.name().parse::<Algorithm>().unwrap(), alg);
            assert_eq!(alg.number().to_string().parse::<Algorithm>().unwrap(), alg);
        }
        assert!("alg5".parse::<Algorithm>().is_err());
    }

    #[test]
    fn rates_rank_past_underflow() {
        let table = ScoreTable::new(
            Algorithm::Laplace,
            1,
            vec![0.0, 0.0, 0.0],
            vec![Some(900.0), Some(800.0), Some(f64::INFINITY)],
            vec![false; 3],
        )
        .unwrap();
        assert_eq!(table.ranks, vec![2, 1, 3]);
    }

    #[test]
    fn csv_layout() {
        let table = ScoreTable::new(
            Algorithm::RateFunction,
            10,
            vec![0.5, 0.0],
            vec![Some(0.25), None],
            vec![false, true],
        )
        .unwrap();
        let mut buf = Vec::new();
        table.write_csv_to(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "line,score,rate_value,rank,saturated,algorithm,n\n\
             1,0.5,0.25,1,false,alg1,10\n\
             2,0,,2,true,alg1,10\n"
        );
        assert_eq!(table.order(), vec![1, 2]);
    }

    proptest! {
        #[test]
        fn ranks_are_a_sorted_permutation(scores in prop::collection::vec(0.0f64..1.0, 1..40)) {
            let ranks = ranks_from_scores(&scores).unwrap();
            let mut seen = ranks.clone();
            seen.sort_unstable();
            prop_assert_eq!(seen, (1..=scores.len()).collect::<Vec<_>>());
            let mut by_rank = vec![0; scores.len()];
            for (l, &r) in ranks.iter().enumerate() {
                by_rank[r - 1] = l;
            }
            for w in by_rank.windows(2) {
                prop_assert!(scores[w[0]] > scores[w[1]] || (scores[w[0]] == scores[w[1]] && w[0] < w[1]));
            }
        }
    }
}
