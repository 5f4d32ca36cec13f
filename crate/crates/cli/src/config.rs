//! Run configuration: command-line flags layered over an optional TOML file.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use linerank::experiments::DEFAULT_N_GRID;
use linerank::Algorithm;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Name that selects the bundled IEEE 39-bus case instead of a file.
pub const BUILTIN_CASE: &str = "ieee39";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Distribution {
    Gaussian,
    Laplace,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    FalseSelection,
    RankIntervals,
    Both,
}

/// Which ground truth to compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TruthKind {
    /// Analytic tails (Gaussian) or the perfect-information Laplace rate.
    Exact,
    /// Relative frequency over `--n-mc` fresh observations.
    Mc,
    /// Both; the exact one is used as reference.
    Both,
}

/// Flags shared by every subcommand that samples data. Each overrides the
/// matching key of `--config`.
#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// TOML file with any of the keys below (snake_case); flags win.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// MATPOWER case file, or `ieee39` for the bundled 39-bus case.
    #[arg(long, value_name = "FILE")]
    pub case: Option<String>,
    /// Injection distribution [default: gaussian].
    #[arg(long, value_enum)]
    pub dist: Option<Distribution>,
    /// Observations per data set [default: 1000].
    #[arg(long)]
    pub n: Option<usize>,
    /// Comma-separated algorithms, e.g. `1,2,3,4` or `alg1,alg3` [default: 1,2,3,4].
    #[arg(long)]
    pub algs: Option<String>,
    /// Master seed for covariance and injection streams [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Injection variance per MW of nominal generation (MW^2/MW) [default: 5].
    #[arg(long)]
    pub variance_factor: Option<f64>,
    /// Variance of the random factor behind off-diagonal covariances (MW^2) [default: 25].
    #[arg(long)]
    pub offdiag_variance: Option<f64>,
    /// Laplace small-noise parameter [default: 1].
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Use thresholds `c * |nominal flow|` instead of RATE_A.
    #[arg(long, value_name = "C")]
    pub gamma_mult: Option<f64>,
    /// CSV `line,gamma_mw` with one threshold per line, instead of RATE_A.
    #[arg(long, value_name = "FILE")]
    pub gamma_file: Option<PathBuf>,
    /// True top-k set size [default: 1].
    #[arg(long)]
    pub k: Option<usize>,
    /// Estimated top-j set size, j >= k [default: k].
    #[arg(long)]
    pub j: Option<usize>,
    /// Comma-separated increasing sample sizes for the false-selection curve.
    #[arg(long)]
    pub n_grid: Option<String>,
    /// Monte Carlo replications [default: 1000].
    #[arg(long)]
    pub replications: Option<usize>,
    /// Coverage of the rank prediction intervals [default: 0.95].
    #[arg(long)]
    pub level: Option<f64>,
    /// Ground truth used as reference [default: exact].
    #[arg(long, value_enum)]
    pub truth: Option<TruthKind>,
    /// Observations for Monte Carlo ground truth [default: 1000000].
    #[arg(long)]
    pub n_mc: Option<u64>,
    /// Worker threads [default: all cores].
    #[arg(long)]
    pub threads: Option<usize>,
    /// Output directory [default: out].
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

/// Keys accepted in the config file.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    case: Option<String>,
    dist: Option<Distribution>,
    n: Option<usize>,
    algs: Option<String>,
    seed: Option<u64>,
    variance_factor: Option<f64>,
    offdiag_variance: Option<f64>,
    epsilon: Option<f64>,
    gamma_mult: Option<f64>,
    gamma_file: Option<PathBuf>,
    k: Option<usize>,
    j: Option<usize>,
    n_grid: Option<Vec<usize>>,
    replications: Option<usize>,
    level: Option<f64>,
    truth: Option<TruthKind>,
    n_mc: Option<u64>,
    threads: Option<usize>,
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum GammaSource {
    RateA,
    File(PathBuf),
    NominalMultiple(f64),
}

/// Fully resolved configuration; serialized into the manifest.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub case: String,
    pub dist: Distribution,
    pub n: usize,
    pub algorithms: Vec<String>,
    pub seed: u64,
    pub variance_factor: f64,
    pub offdiag_variance: f64,
    pub epsilon: f64,
    pub gamma: GammaSource,
    pub k: usize,
    pub j: usize,
    pub n_grid: Vec<usize>,
    pub replications: usize,
    pub level: f64,
    pub truth: TruthKind,
    pub n_mc: u64,
    #[serde(skip)]
    pub threads: Option<usize>,
    #[serde(skip)]
    pub out: PathBuf,
}

impl RunConfig {
    pub fn resolve(args: &RunArgs) -> Result<Self, CliError> {
        let file = match &args.config {
            Some(path) => read_config_file(path)?,
            None => FileConfig::default(),
        };
        let n_grid = match &args.n_grid {
            Some(text) => parse_list(text, "--n-grid")?,
            None => file.n_grid.unwrap_or_else(|| DEFAULT_N_GRID.to_vec()),
        };
        let algs = args
            .algs
            .clone()
            .or(file.algs)
            .unwrap_or_else(|| "1,2,3,4".into());
        let algorithms = parse_algorithms(&algs)?;

        let gamma_mult = args.gamma_mult.or(file.gamma_mult);
        let gamma_file = args.gamma_file.clone().or(file.gamma_file);
        let gamma = match (gamma_mult, gamma_file) {
            (Some(_), Some(_)) => {
                return Err(CliError::Usage(
                    "--gamma-mult and --gamma-file are mutually exclusive".into(),
                ))
            }
            (Some(c), None) => GammaSource::NominalMultiple(c),
            (None, Some(path)) => GammaSource::File(path),
            (None, None) => GammaSource::RateA,
        };

        let k = args.k.or(file.k).unwrap_or(1);
        let config = RunConfig {
            case: args
                .case
                .clone()
                .or(file.case)
                .ok_or_else(|| CliError::Usage("no case given; pass --case FILE or --case ieee39".into()))?,
            dist: args.dist.or(file.dist).unwrap_or(Distribution::Gaussian),
            n: args.n.or(file.n).unwrap_or(1000),
            algorithms: algorithms.iter().map(|a| a.name().to_string()).collect(),
            seed: args.seed.or(file.seed).unwrap_or(0),
            variance_factor: args.variance_factor.or(file.variance_factor).unwrap_or(5.0),
            offdiag_variance: args.offdiag_variance.or(file.offdiag_variance).unwrap_or(25.0),
            epsilon: args.epsilon.or(file.epsilon).unwrap_or(1.0),
            gamma,
            k,
            j: args.j.or(file.j).unwrap_or(k),
            n_grid,
            replications: args.replications.or(file.replications).unwrap_or(1000),
            level: args.level.or(file.level).unwrap_or(0.95),
            truth: args.truth.or(file.truth).unwrap_or(TruthKind::Exact),
            n_mc: args.n_mc.or(file.n_mc).unwrap_or(1_000_000),
            threads: args.threads.or(file.threads),
            out: args.out.clone().or(file.out).unwrap_or_else(|| PathBuf::from("out")),
        };
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<(), CliError> {
        let usage = |m: String| Err(CliError::Usage(m));
        if self.case != BUILTIN_CASE && !Path::new(&self.case).is_file() {
            return usage(format!("case file not found: {}", self.case));
        }
        if let GammaSource::File(path) = &self.gamma {
            if !path.is_file() {
                return usage(format!("threshold file not found: {}", path.display()));
            }
        }
        if self.n == 0 {
            return usage("--n must be at least 1".into());
        }
        if self.replications == 0 {
            return usage("--replications must be at least 1".into());
        }
        if self.k == 0 || self.j < self.k {
            return usage(format!("need 1 <= k <= j, got k = {}, j = {}", self.k, self.j));
        }
        if self.n_grid.is_empty() || self.n_grid[0] == 0 || self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return usage(format!("--n-grid must be strictly increasing and positive, got {:?}", self.n_grid));
        }
        if self.threads == Some(0) {
            return usage("--threads must be at least 1".into());
        }
        Ok(())
    }

    pub fn algorithm_list(&self) -> Vec<Algorithm> {
        self.algorithms
            .iter()
            .map(|a| a.parse().expect("validated on resolve"))
            .collect()
    }
}

fn read_config_file(path: &Path) -> Result<FileConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn parse_list(text: &str, flag: &str) -> Result<Vec<usize>, CliError> {
    text.split(',')
        .map(|s| {
            let s = s.trim();
            s.parse::<f64>()
                .ok()
                .filter(|v| v.fract() == 0.0 && *v >= 0.0)
                .map(|v| v as usize)
                .ok_or_else(|| CliError::Usage(format!("{flag}: not a count: {s:?}")))
        })
        .collect()
}

pub fn parse_algorithms(text: &str) -> Result<Vec<Algorithm>, CliError> {
    let mut algorithms = Vec::new();
    for part in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let alg: Algorithm = part.parse().map_err(|e| CliError::Usage(format!("--algs: {e}")))?;
        if !algorithms.contains(&alg) {
            algorithms.push(alg);
        }
    }
    if algorithms.is_empty() {
        return Err(CliError::Usage("--algs selects no algorithm".into()));
    }
    Ok(algorithms)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn algorithm_lists() {
        assert_eq!(
            parse_algorithms("1, alg3,3").unwrap(),
            vec![Algorithm::RateFunction, Algorithm::Gaussian]
        );
        assert!(parse_algorithms("").is_err());
        assert!(parse_algorithms(" , ").is_err());
        assert!(parse_algorithms("5").is_err());
    }

    #[test]
    fn grids_accept_scientific_notation() {
        assert_eq!(parse_list("10,1e3, 1e5", "--n-grid").unwrap(), vec![10, 1000, 100_000]);
        assert!(parse_list("10,1.5", "--n-grid").is_err());
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "case = \"ieee39\"\nseed = 3\nn = 50\nn_grid = [10, 20]\n").unwrap();
        let args = RunArgs {
            config: Some(path),
            n: Some(70),
            ..RunArgs::default()
        };
        let config = RunConfig::resolve(&args).unwrap();
        assert_eq!(config.seed, 3);
        assert_eq!(config.n, 70);
        assert_eq!(config.n_grid, vec![10, 20]);
    }

    #[test]
    fn unknown_file_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "case = \"ieee39\"\nsed = 3\n").unwrap();
        let args = RunArgs {
            config: Some(path),
            ..RunArgs::default()
        };
        assert!(matches!(RunConfig::resolve(&args), Err(CliError::Usage(_))));
    }

    #[test]
    fn missing_case_names_the_path() {
        let args = RunArgs {
            case: Some("/no/such/case.m".into()),
            ..RunArgs::default()
        };
        match RunConfig::resolve(&args) {
            Err(CliError::Usage(m)) => assert!(m.contains("/no/such/case.m")),
            other => panic!("unexpected {other:?}"),
        }
    }
}
