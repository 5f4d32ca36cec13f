//! Relative frequency of overload events.

use nalgebra::DMatrix;
use statrs::distribution::{ContinuousCDF, Normal};

use super::{Algorithm, ScoreTable, Thresholds};
use crate::error::{Error, Result};

/// Fraction of observations with `|F_l| >= gamma_l`, per line.
pub fn alg2_counting(flow_samples: &DMatrix<f64>, gamma: &Thresholds) -> Result<ScoreTable> {
    let mut estimator = CountingEstimator::new(gamma.clone());
    estimator.extend(flow_samples)?;
    estimator.estimate()
}

/// [`alg2_counting`] plus a Wilson score interval per line.
pub fn alg2_with_intervals(
    flow_samples: &DMatrix<f64>,
    gamma: &Thresholds,
    confidence: f64,
) -> Result<(ScoreTable, Vec<(f64, f64)>)> {
    let mut estimator = CountingEstimator::new(gamma.clone());
    estimator.extend(flow_samples)?;
    let table = estimator.estimate()?;
    let intervals = estimator.intervals(confidence)?;
    Ok((table, intervals))
}

/// Wilson score interval for `successes` out of `n` Bernoulli trials.
pub fn wilson_interval(successes: u64, n: u64, confidence: f64) -> Result<(f64, f64)> {
    if n == 0 {
        return Err(Error::Argument("Wilson interval needs n >= 1".into()));
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::Argument(format!(
            "confidence must lie in (0, 1), got {confidence}"
        )));
    }
    let z = Normal::standard().inverse_cdf(1.0 - (1.0 - confidence) / 2.0);
    let n = n as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    Ok(((centre - half).max(0.0), (centre + half).min(1.0)))
}

/// Running overload counts.
#[derive(Debug, Clone)]
pub struct CountingEstimator {
    gamma: Thresholds,
    counts: Vec<u64>,
    n: u64,
}

impl CountingEstimator {
    pub fn new(gamma: Thresholds) -> Self {
        let m = gamma.len();
        CountingEstimator {
            gamma,
            counts: vec![0; m],
            n: 0,
        }
    }

    pub fn extend(&mut self, flows: &DMatrix<f64>) -> Result<()> {
        self.gamma.check_lines(flows.ncols())?;
        for (l, column) in flows.column_iter().enumerate() {
            let g = self.gamma.get(l);
            self.counts[l] += column.iter().filter(|f| f.abs() >= g).count() as u64;
        }
        self.n += flows.nrows() as u64;
        Ok(())
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn estimate(&self) -> Result<ScoreTable> {
        if self.n == 0 {
            return Err(Error::Argument("counting estimator needs at least one sample".into()));
        }
        let m = self.counts.len();
        ScoreTable::new(
            Algorithm::Counting,
            self.n as usize,
            self.counts.iter().map(|&c| c as f64 / self.n as f64).collect(),
            vec![None; m],
            vec![false; m],
        )
    }

    pub fn intervals(&self, confidence: f64) -> Result<Vec<(f64, f64)>> {
        self.counts
            .iter()
            .map(|&c| wilson_interval(c, self.n, confidence))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use nalgebra::DVector;
    use proptest::prelude::*;

    use super::*;

    fn single(values: &[f64], gamma: f64) -> f64 {
        let flows = DMatrix::from_column_slice(values.len(), 1, values);
        let gamma = Thresholds::new(DVector::from_element(1, gamma)).unwrap();
        alg2_counting(&flows, &gamma).unwrap().scores[0]
    }

    #[test]
    fn direct_count() {
        assert!((single(&[1.0, -3.0, 5.0], 4.0) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(single(&[1.0, 3.0, 5.0], f64::INFINITY), 0.0);
        assert_eq!(single(&[1.0, -3.0, 5.0], 0.5), 1.0);
        // Equality counts as an overload.
        assert_eq!(single(&[4.0], 4.0), 1.0);
    }

    #[test]
    fn wilson_reference_values() {
        // 5 of 10 at 95%: centre 0.5, half-width 1.96/(1+0.38416) * sqrt(0.025 + 0.0096040).
        let (lo, hi) = wilson_interval(5, 10, 0.95).unwrap();
        assert!((lo - 0.236593).abs() < 1e-5, "{lo}");
        assert!((hi - 0.763407).abs() < 1e-5, "{hi}");
        let (lo, hi) = wilson_interval(0, 100, 0.95).unwrap();
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 0.05);
        assert!(wilson_interval(1, 0, 0.95).is_err());
    }

    proptest! {
        #[test]
        fn scale_invariance(
            values in prop::collection::vec(-5.0f64..5.0, 1..50),
            gamma in 0.1f64..5.0,
            k in -10i32..10,
        ) {
            // Powers of two scale exactly, so no comparison can flip by rounding.
            let c = 2f64.powi(k);
            let scaled: Vec<f64> = values.iter().map(|v| v * c).collect();
            prop_assert_eq!(single(&values, gamma), single(&scaled, gamma * c));
        }

        #[test]
        fn monotone_in_threshold(values in prop::collection::vec(-5.0f64..5.0, 1..50), g1 in 0.1f64..5.0, g2 in 0.1f64..5.0) {
            let (lo, hi) = if g1 <= g2 { (g1, g2) } else { (g2, g1) };
            prop_assert!(single(&values, lo) >= single(&values, hi));
        }
    }
}
