mod common;

use linerank::ranking::gaussian::gaussian_overload_probabilities;
use linerank::ranking::{
    alg1_rate_function, alg2_counting, alg3_gaussian, alg4_laplace, laplace_rate_lp, LaplaceOptions,
};
use linerank::stochastic::{sample_gaussian, sample_laplace};
use linerank::{cases, DcModel, GaussianSpec, LaplaceSpec, Thresholds};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{triangle, two_bus};

/// `P(|X| >= gamma)` for `X ~ N(nu, sigma^2)` by composite Simpson
/// quadrature of the density over `[-gamma, gamma]`.
fn tail_by_quadrature(nu: f64, sigma: f64, gamma: f64) -> f64 {
    let pdf = |x: f64| {
        let z = (x - nu) / sigma;
        (-0.5 * z * z).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
    };
    let steps = 200_000;
    let h = 2.0 * gamma / steps as f64;
    let mut acc = pdf(-gamma) + pdf(gamma);
    for k in 1..steps {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * pdf(-gamma + k as f64 * h);
    }
    1.0 - acc * h / 3.0
}

#[test]
fn gaussian_tail_matches_quadrature() {
    // With the slack spread over both buses, the line carries half of the
    // generator-bus injection.
    let model = DcModel::build(&two_bus(0.0, 0.0)).unwrap();
    let v = model.v_s()[(0, 0)];
    assert!((v - 0.5).abs() < 1e-12);
    for &(nu, sigma, gamma) in &[(0.5, 1.0, 1.5), (0.0, 1.0, 1.959964), (-1.2, 0.4, 2.0), (0.1, 2.5, 0.3)] {
        let mu = DVector::from_vec(vec![nu]);
        let cov = DMatrix::from_element(1, 1, sigma * sigma);
        let gamma_t = Thresholds::new(DVector::from_vec(vec![gamma])).unwrap();
        let theta = gaussian_overload_probabilities(&model, &mu, &cov, &gamma_t).unwrap()[0];
        let oracle = tail_by_quadrature(v * nu, v * sigma, gamma);
        assert!((theta - oracle).abs() <= 1e-10, "({nu}, {sigma}, {gamma}): {theta} vs {oracle}");
    }
}

#[test]
fn counting_is_unbiased() {
    let model = DcModel::build(&two_bus(0.0, 0.0)).unwrap();
    let (nu, sigma, gamma) = (0.2, 2.0, 1.0);
    let spec = GaussianSpec::new(DVector::from_vec(vec![nu]), DMatrix::from_element(1, 1, sigma * sigma)).unwrap();
    let gamma_t = Thresholds::new(DVector::from_vec(vec![gamma])).unwrap();
    let v = model.v_s()[(0, 0)];
    let theta = tail_by_quadrature(v * nu, v * sigma, gamma);
    let (reps, n) = (400, 50);
    let mut total = 0.0;
    for r in 0..reps {
        let sample = sample_gaussian(&spec, n, 1000 + r).unwrap();
        let flows = model.flows_batch(&sample.observations).unwrap();
        total += alg2_counting(&flows, &gamma_t).unwrap().scores[0];
    }
    let mean = total / reps as f64;
    let se = (theta * (1.0 - theta) / (n as f64 * reps as f64)).sqrt();
    assert!((mean - theta).abs() <= 4.0 * se, "mean {mean}, theta {theta}, se {se}");
}

/// Minimum of `sum |d_i| / alpha_i` subject to `s * v . d >= r`, searched on
/// a grid over the first `d - 1` coordinates with the last one solved
/// exactly.
fn brute_force_rate(v: &[f64], alpha: &[f64], s: f64, r: f64) -> f64 {
    let d = v.len();
    let last = d - 1;
    let steps = if d == 3 { 1000 } else { 100_000 };
    let span = 1.2 * v.iter().map(|x| r.max(0.0) / x.abs()).fold(0.0, f64::max) + 1e-3;
    let mut best = f64::INFINITY;
    let grid: Vec<f64> = (0..=2 * steps).map(|k| span * (k as f64 / steps as f64 - 1.0)).collect();
    let mut idx = vec![0usize; last];
    loop {
        let head: Vec<f64> = idx.iter().map(|&k| grid[k]).collect();
        let covered: f64 = head.iter().zip(v).map(|(x, vi)| s * vi * x).sum();
        let cost: f64 = head.iter().zip(alpha).map(|(x, a)| x.abs() / a).sum();
        let need = r - covered;
        let tail = if need <= 0.0 {
            0.0
        } else if v[last].abs() > 0.0 {
            need / v[last].abs() / alpha[last]
        } else {
            f64::INFINITY
        };
        best = best.min(cost + tail);
        let mut k = 0;
        loop {
            if k == last {
                return best;
            }
            idx[k] += 1;
            if idx[k] < grid.len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

#[test]
fn laplace_lp_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..30 {
        let d = rng.random_range(2..=3);
        let v: Vec<f64> = (0..d)
            .map(|_| rng.random_range(0.05..1.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 })
            .collect();
        let alpha: Vec<f64> = (0..d).map(|_| rng.random_range(0.2..2.0)).collect();
        let mu: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let det = rng.random_range(-0.5..0.5);
        let gamma = rng.random_range(0.1..3.0);
        let nu: f64 = v.iter().zip(&mu).map(|(a, b)| a * b).sum::<f64>() + det;
        let s = if nu >= 0.0 { 1.0 } else { -1.0 };
        let oracle = brute_force_rate(&v, &alpha, s, gamma - nu.abs());
        let lp = laplace_rate_lp(&v, &alpha, &mu, det, gamma).unwrap();
        assert!(lp <= oracle + 1e-9, "LP {lp} above brute force {oracle}");
        assert!(oracle - lp <= 3e-3 * oracle.max(1.0), "LP {lp}, brute force {oracle}");
    }
}

#[test]
fn single_node_laplace_example() {
    // mu = 1, alpha = 2, gamma = 3 on a unit line: H = (3 - 1) / 2 = 1.
    let lp = laplace_rate_lp(&[1.0], &[2.0], &[1.0], 0.0, 3.0).unwrap();
    assert!((lp - 1.0).abs() < 1e-12);
}

#[test]
fn laplace_ranks_do_not_depend_on_epsilon() {
    let model = DcModel::build(&cases::ieee39()).unwrap();
    let gamma = Thresholds::from_ratings(&model);
    let spec = LaplaceSpec::new(
        model.nominal_stochastic().clone(),
        model.stochastic_generation().map(|g| (5.0 * g / 100.0 / 2.0).sqrt()),
        1.0,
    )
    .unwrap();
    let sample = sample_laplace(&spec, 500, 8).unwrap();
    let mu = spec.mean();
    let options = LaplaceOptions::default();
    let base = alg4_laplace(&sample.observations, &model, mu, &gamma, 1.0, &options).unwrap();
    for eps in [0.05, 0.3, 4.0] {
        let t = alg4_laplace(&sample.observations, &model, mu, &gamma, eps, &options).unwrap();
        assert_eq!(t.ranks, base.ranks);
    }
}

#[test]
fn reversing_lines_keeps_rankings() {
    let case = cases::ieee39();
    let a = DcModel::build(&case).unwrap();
    let b = DcModel::build(&case.with_flipped_branches(&[3, 27, 40]).unwrap()).unwrap();
    let spec = GaussianSpec::new(
        a.nominal_stochastic().clone(),
        DMatrix::from_diagonal(&a.stochastic_generation().map(|g| 5.0 * g / 100.0 + 1e-6)),
    )
    .unwrap();
    let sample = sample_gaussian(&spec, 300, 2).unwrap();
    let gamma = Thresholds::from_ratings(&a);
    let fa = a.flows_batch(&sample.observations).unwrap();
    let fb = b.flows_batch(&sample.observations).unwrap();
    assert_eq!(alg2_counting(&fa, &gamma).unwrap().ranks, alg2_counting(&fb, &gamma).unwrap().ranks);
    let ja = alg1_rate_function(&fa, &gamma).unwrap().0;
    let jb = alg1_rate_function(&fb, &gamma).unwrap().0;
    assert_eq!(ja.ranks, jb.ranks);
    let mu = spec.mean();
    assert_eq!(
        alg3_gaussian(&sample.observations, &a, mu, &gamma).unwrap().ranks,
        alg3_gaussian(&sample.observations, &b, mu, &gamma).unwrap().ranks
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn scores_fall_as_thresholds_rise(seed in 0u64..1000, g0 in 0.2f64..2.0, bump in 0.0f64..1.0) {
        let model = DcModel::build(&triangle()).unwrap();
        let spec = GaussianSpec::new(
            DVector::from_vec(vec![0.3, -0.2]),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.5]),
        ).unwrap();
        let sample = sample_gaussian(&spec, 200, seed).unwrap();
        let flows = model.flows_batch(&sample.observations).unwrap();
        let low = Thresholds::new(DVector::from_element(3, g0)).unwrap();
        let high = Thresholds::new(DVector::from_element(3, g0 + bump)).unwrap();
        let mu = spec.mean();
        let options = LaplaceOptions::default();
        let pairs = [
            (alg1_rate_function(&flows, &low).unwrap().0, alg1_rate_function(&flows, &high).unwrap().0),
            (alg2_counting(&flows, &low).unwrap(), alg2_counting(&flows, &high).unwrap()),
            (alg3_gaussian(&sample.observations, &model, mu, &low).unwrap(),
             alg3_gaussian(&sample.observations, &model, mu, &high).unwrap()),
            (alg4_laplace(&sample.observations, &model, mu, &low, 1.0, &options).unwrap(),
             alg4_laplace(&sample.observations, &model, mu, &high, 1.0, &options).unwrap()),
        ];
        for (lo, hi) in &pairs {
            for l in 0..3 {
                prop_assert!(hi.scores[l] <= lo.scores[l] * (1.0 + 1e-9) + 1e-300,
                    "{}: line {} {} -> {}", lo.algorithm, l + 1, lo.scores[l], hi.scores[l]);
            }
        }
    }
}
