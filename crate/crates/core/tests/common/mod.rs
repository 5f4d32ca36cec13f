#![allow(dead_code)]

use linerank::{Branch, Generator, GridCase};

pub fn line(index: usize, from: usize, to: usize, x: f64) -> Branch {
    Branch {
        index,
        from_bus: from,
        to_bus: to,
        reactance: x,
        tap_ratio: 0.0,
        rating: 0.0,
    }
}

/// Two buses, one line of reactance 1; the generator bus injects `gen_mw`
/// and bus 2 draws `load_mw`. Base 1 MVA, so MW equal p.u.
pub fn two_bus(gen_mw: f64, load_mw: f64) -> GridCase {
    GridCase::from_tables(
        1.0,
        &[(1, 0.0), (2, load_mw)],
        vec![line(1, 1, 2, 1.0)],
        vec![Generator {
            bus: 1,
            nominal_output: gen_mw,
        }],
    )
    .unwrap()
}

/// Triangle of unit reactances: lines (1,2), (2,3), (1,3).
pub fn triangle() -> GridCase {
    GridCase::from_tables(
        1.0,
        &[(1, 0.0), (2, 0.0), (3, 0.0)],
        vec![line(1, 1, 2, 1.0), line(2, 2, 3, 1.0), line(3, 1, 3, 1.0)],
        vec![
            Generator {
                bus: 1,
                nominal_output: 0.0,
            },
            Generator {
                bus: 2,
                nominal_output: 0.0,
            },
        ],
    )
    .unwrap()
}

/// Kolmogorov-Smirnov statistic of `sample` against the continuous `cdf`.
pub fn ks_statistic(sample: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    sample.sort_by(f64::total_cmp);
    let n = sample.len() as f64;
    sample
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Asymptotic KS critical value at significance `alpha`.
pub fn ks_critical(n: usize, alpha: f64) -> f64 {
    (-(alpha / 2.0).ln() / 2.0).sqrt() / (n as f64).sqrt()
}
