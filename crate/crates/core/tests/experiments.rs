mod common;

use linerank::experiments::{
    ground_truth, run_false_selection, run_rank_intervals, ExperimentSettings,
};
use linerank::rng::{StreamKey, TAG_INJECTIONS};
use linerank::stochastic::{case_study_gaussian, CaseStudyParams};
use linerank::{
    cases, Algorithm, DcModel, GaussianSpec, GroundTruthSource, InjectionSpec, Thresholds,
};
use nalgebra::{DMatrix, DVector};

use common::two_bus;

fn ieee39_gaussian() -> (DcModel, InjectionSpec, Thresholds) {
    let model = DcModel::build(&cases::ieee39()).unwrap();
    let (spec, _) = case_study_gaussian(&model, &CaseStudyParams::default()).unwrap();
    let gamma = Thresholds::from_ratings(&model);
    (model, InjectionSpec::Gaussian(spec), gamma)
}

/// Average ranks (1-based), ties sharing the mean of their positions.
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            ranks[order[k]] = r;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    sxy / (sxx * syy).sqrt()
}

/// Exact one-sided permutation p-value of Spearman's rho being this negative.
fn spearman_p_value(x: &[f64], y: &[f64]) -> (f64, f64) {
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    let rho = pearson(&rx, &ry);
    let mut perm: Vec<usize> = (0..ry.len()).collect();
    let (mut at_most, mut total) = (0u64, 0u64);
    loop {
        let shuffled: Vec<f64> = perm.iter().map(|&i| ry[i]).collect();
        total += 1;
        if pearson(&rx, &shuffled) <= rho + 1e-12 {
            at_most += 1;
        }
        // Next lexicographic permutation.
        let Some(i) = (0..perm.len() - 1).rev().find(|&i| perm[i] < perm[i + 1]) else {
            break;
        };
        let j = (i + 1..perm.len()).rev().find(|&j| perm[j] > perm[i]).unwrap();
        perm.swap(i, j);
        perm[i + 1..].reverse();
    }
    (rho, at_most as f64 / total as f64)
}

#[test]
fn false_selection_is_deterministic_across_thread_counts() {
    let (model, spec, gamma) = ieee39_gaussian();
    let truth = ground_truth(&model, &spec, &gamma, GroundTruthSource::AnalyticGaussian).unwrap();
    let settings = ExperimentSettings::new(Algorithm::ALL.to_vec(), 12, 99);
    let grid = [10, 50, 200];
    let run_with = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| run_false_selection(&model, &spec, &gamma, &truth, &settings, 1, 2, &grid).unwrap())
    };
    let a = run_with(1);
    let b = run_with(4);
    assert_eq!(a, b);
    let (mut ca, mut cb) = (Vec::new(), Vec::new());
    a.write_csv_to(&mut ca).unwrap();
    b.write_csv_to(&mut cb).unwrap();
    assert_eq!(ca, cb);

    // Replication r reads stream r of the seed, shared by all algorithms.
    for (r, &checksum) in a.sample_checksums.iter().enumerate() {
        let sample = spec.sample(200, StreamKey::new(99, TAG_INJECTIONS, r as u64)).unwrap();
        assert_eq!(sample.checksum(200), checksum);
    }
    assert_eq!(a.curves.len(), 4);
    for curve in &a.curves {
        assert!(curve.estimates.iter().all(|f| (0.0..=1.0).contains(f)));
    }
}

#[test]
fn selecting_every_line_never_fails() {
    let (model, spec, gamma) = ieee39_gaussian();
    let truth = ground_truth(&model, &spec, &gamma, GroundTruthSource::AnalyticGaussian).unwrap();
    let settings = ExperimentSettings::new(Algorithm::ALL.to_vec(), 5, 1);
    let m = model.num_lines();
    let run = run_false_selection(&model, &spec, &gamma, &truth, &settings, 3, m, &[10, 30]).unwrap();
    for curve in &run.curves {
        assert_eq!(curve.estimates, vec![0.0, 0.0]);
    }
}

#[test]
fn single_line_network_never_fails() {
    let model = DcModel::build(&two_bus(1.0, 1.0)).unwrap();
    let spec = InjectionSpec::Gaussian(
        GaussianSpec::new(DVector::from_vec(vec![0.0]), DMatrix::from_element(1, 1, 1.0)).unwrap(),
    );
    let gamma = Thresholds::new(DVector::from_vec(vec![1.0])).unwrap();
    let truth = ground_truth(&model, &spec, &gamma, GroundTruthSource::AnalyticGaussian).unwrap();
    let settings = ExperimentSettings::new(Algorithm::ALL.to_vec(), 10, 4);
    let run = run_false_selection(&model, &spec, &gamma, &truth, &settings, 1, 1, &[1, 5, 20]).unwrap();
    assert!(run.curves.iter().all(|c| c.estimates.iter().all(|&f| f == 0.0)));
}

#[test]
fn invalid_selection_sizes_are_rejected() {
    let (model, spec, gamma) = ieee39_gaussian();
    let truth = ground_truth(&model, &spec, &gamma, GroundTruthSource::AnalyticGaussian).unwrap();
    let settings = ExperimentSettings::new(vec![Algorithm::Counting], 2, 0);
    assert!(run_false_selection(&model, &spec, &gamma, &truth, &settings, 1, 47, &[10]).is_err());
    assert!(run_false_selection(&model, &spec, &gamma, &truth, &settings, 3, 2, &[10]).is_err());
    assert!(run_false_selection(&model, &spec, &gamma, &truth, &settings, 1, 1, &[20, 10]).is_err());
}

#[test]
fn gaussian_false_selection_trends_down() {
    let (model, spec, gamma) = ieee39_gaussian();
    let truth = ground_truth(&model, &spec, &gamma, GroundTruthSource::AnalyticGaussian).unwrap();
    let settings = ExperimentSettings::new(vec![Algorithm::Gaussian], 100, 7);
    let grid = [10, 20, 50, 100, 200, 500, 1000, 2000];
    let run = run_false_selection(&model, &spec, &gamma, &truth, &settings, 2, 2, &grid).unwrap();
    let f = &run.curves[0].estimates;
    let n: Vec<f64> = grid.iter().map(|&v| v as f64).collect();
    let (rho, p) = spearman_p_value(&n, f);
    assert!(rho < 0.0 && p < 0.05, "rho = {rho}, p = {p}, f = {f:?}");
}

#[test]
fn single_replication_intervals_collapse() {
    let (model, spec, gamma) = ieee39_gaussian();
    let truth = ground_truth(&model, &spec, &gamma, GroundTruthSource::AnalyticGaussian).unwrap();
    let settings = ExperimentSettings::new(Algorithm::ALL.to_vec(), 1, 3);
    let reports = run_rank_intervals(&model, &spec, &gamma, &truth, &settings, 100, 0.95).unwrap();
    assert_eq!(reports.len(), 4);
    for report in &reports {
        assert_eq!(report.rows.len(), 46);
        for (k, row) in report.rows.iter().enumerate() {
            assert_eq!(row.true_rank, k + 1);
            assert_eq!(row.lo, row.mean_rank);
            assert_eq!(row.hi, row.mean_rank);
        }
    }
}

#[test]
fn near_deterministic_injections_give_zero_width_intervals() {
    let model = DcModel::build(&cases::ieee39()).unwrap();
    let d = model.num_stochastic();
    let spec = InjectionSpec::Gaussian(
        GaussianSpec::new(model.nominal_stochastic().clone(), DMatrix::identity(d, d) * 1e-12).unwrap(),
    );
    let gamma = Thresholds::from_nominal_multiple(&model, 1.5).unwrap();
    let truth = ground_truth(&model, &spec, &gamma, GroundTruthSource::AnalyticGaussian).unwrap();
    let settings = ExperimentSettings::new(
        vec![Algorithm::RateFunction, Algorithm::Counting, Algorithm::Gaussian],
        20,
        5,
    );
    let reports = run_rank_intervals(&model, &spec, &gamma, &truth, &settings, 50, 0.95).unwrap();
    for report in &reports {
        for row in &report.rows {
            assert_eq!(row.lo, row.hi, "{} line {}", report.algorithm, row.line);
            assert!(row.lo <= row.mean_rank && row.mean_rank <= row.hi);
        }
    }
}

#[test]
fn interval_bounds_are_ordered() {
    let (model, spec, gamma) = ieee39_gaussian();
    let truth = ground_truth(&model, &spec, &gamma, GroundTruthSource::AnalyticGaussian).unwrap();
    let settings = ExperimentSettings::new(Algorithm::ALL.to_vec(), 40, 6);
    let reports = run_rank_intervals(&model, &spec, &gamma, &truth, &settings, 200, 0.9).unwrap();
    for report in &reports {
        for row in &report.rows {
            assert!(1.0 <= row.lo && row.lo <= row.mean_rank && row.mean_rank <= row.hi && row.hi <= 46.0);
        }
    }
}

#[test]
fn monte_carlo_truth_brackets_the_exact_tail() {
    let model = DcModel::build(&two_bus(0.0, 0.0)).unwrap();
    let spec = InjectionSpec::Gaussian(
        GaussianSpec::new(DVector::from_vec(vec![0.3]), DMatrix::from_element(1, 1, 0.64)).unwrap(),
    );
    let gamma = Thresholds::new(DVector::from_vec(vec![1.4])).unwrap();
    let exact = ground_truth(&model, &spec, &gamma, GroundTruthSource::AnalyticGaussian).unwrap();
    let mc = ground_truth(
        &model,
        &spec,
        &gamma,
        GroundTruthSource::MonteCarlo {
            n_mc: 10_000_000,
            seed: 17,
        },
    )
    .unwrap();
    let (lo, hi) = mc.intervals.as_ref().unwrap()[0];
    assert!(lo <= exact.theta[0] && exact.theta[0] <= hi, "{} not in [{lo}, {hi}]", exact.theta[0]);
}

#[test]
fn analytic_and_monte_carlo_ranks_agree_where_resolved() {
    let (model, spec, gamma) = ieee39_gaussian();
    let exact = ground_truth(&model, &spec, &gamma, GroundTruthSource::AnalyticGaussian).unwrap();
    let mc = ground_truth(
        &model,
        &spec,
        &gamma,
        GroundTruthSource::MonteCarlo {
            n_mc: 10_000_000,
            seed: 1,
        },
    )
    .unwrap();
    assert_eq!(exact.conflicts_with(&mc).unwrap(), vec![]);
    assert_eq!(exact.order()[0], mc.order()[0]);
}

#[test]
fn analytic_truth_needs_a_gaussian_model() {
    let model = DcModel::build(&two_bus(0.0, 0.0)).unwrap();
    let spec = InjectionSpec::Laplace(
        linerank::LaplaceSpec::new(DVector::from_vec(vec![0.0]), DVector::from_vec(vec![1.0]), 1.0).unwrap(),
    );
    let gamma = Thresholds::new(DVector::from_vec(vec![1.0])).unwrap();
    assert!(ground_truth(&model, &spec, &gamma, GroundTruthSource::AnalyticGaussian).is_err());
    assert!(ground_truth(&model, &spec, &gamma, GroundTruthSource::LaplaceLdpPerfect).is_ok());
}
