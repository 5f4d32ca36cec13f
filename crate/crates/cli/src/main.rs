//! `linerank` command-line tool.

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use linerank::experiments::{
    ground_truth, run_false_selection, run_rank_intervals, ExperimentSettings,
};
use linerank::ranking::{alg1_rate_function, alg2_counting, alg3_gaussian, alg4_laplace, LaplaceOptions};
use linerank::rng::{StreamKey, TAG_COVARIANCE, TAG_GROUND_TRUTH, TAG_INJECTIONS};
use linerank::stochastic::{case_study_gaussian, case_study_laplace, CaseStudyParams};
use linerank::{
    Algorithm, DcModel, GridCase, GroundTruth, GroundTruthSource, InjectionSpec, RankIntervalReport,
    ScoreTable, Thresholds,
};
use serde::Serialize;

use crate::config::{Distribution, ExperimentKind, GammaSource, RunArgs, RunConfig, TruthKind, BUILTIN_CASE};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(linerank::Error),
}

impl From<linerank::Error> for CliError {
    fn from(e: linerank::Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Core(linerank::Error::Argument(_)) => 2,
            CliError::Core(e) if e.is_numeric() => 4,
            CliError::Core(_) => 3,
        }
    }

    fn category(&self) -> &'static str {
        match self.exit_code() {
            2 => "usage",
            4 => "numeric",
            _ => "data",
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => f.write_str(m),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

/// Rank transmission lines by overload probability under random injections.
///
/// Exit codes: 0 success, 2 usage error, 3 bad input data, 4 numerical failure.
#[derive(Debug, Parser)]
#[command(name = "linerank", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse and validate a case file and print a summary.
    Parse {
        /// MATPOWER case file, or `ieee39` for the bundled 39-bus case.
        #[arg(long, value_name = "FILE")]
        case: String,
        /// Also write the incidence, Laplacian, pseudoinverse, PTDF and nominal flows as CSV.
        #[arg(long, value_name = "DIR")]
        dump_model: Option<PathBuf>,
    },
    /// Sample one data set and write a score table per algorithm.
    Rank(RunArgs),
    /// Run the false-selection and/or rank-interval experiments.
    Experiment {
        /// Which experiment to run.
        #[arg(long, value_enum, default_value = "both")]
        kind: ExperimentKind,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Compute reference overload probabilities.
    GroundTruth(RunArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Parse { case, dump_model } => cmd_parse(&case, dump_model.as_deref()),
        Command::Rank(args) => {
            let config = RunConfig::resolve(&args)?;
            with_threads(&config, || cmd_rank(&config))
        }
        Command::Experiment { kind, run } => {
            let config = RunConfig::resolve(&run)?;
            with_threads(&config, || cmd_experiment(&config, kind))
        }
        Command::GroundTruth(args) => {
            let config = RunConfig::resolve(&args)?;
            with_threads(&config, || cmd_ground_truth(&config))
        }
    }
}

fn with_threads(
    config: &RunConfig,
    f: impl FnOnce() -> Result<(), CliError> + Send,
) -> Result<(), CliError> {
    match config.threads {
        None => f(),
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| CliError::Usage(format!("cannot start {t} threads: {e}")))?
            .install(f),
    }
}

fn load_case(name: &str) -> Result<GridCase, CliError> {
    if name == BUILTIN_CASE {
        return Ok(linerank::cases::ieee39());
    }
    let path = Path::new(name);
    if !path.is_file() {
        return Err(CliError::Usage(format!("case file not found: {name}")));
    }
    Ok(linerank::case_io::read_case(path)?)
}

fn cmd_parse(case: &str, dump: Option<&Path>) -> Result<(), CliError> {
    let grid = load_case(case)?;
    let model = DcModel::build(&grid)?;
    println!("case        {case}");
    println!("base MVA    {}", grid.base_mva());
    println!("buses       {}", grid.num_buses());
    println!("branches    {}", grid.num_branches());
    println!("generators  {}", grid.generators().len());
    println!("stochastic  {}", model.num_stochastic());
    if let Some(dir) = dump {
        create_dir(dir)?;
        model.write_debug_csv(dir)?;
        println!("model dumped to {}", dir.display());
    }
    Ok(())
}

struct Setup {
    model: DcModel,
    spec: InjectionSpec,
    gamma: Thresholds,
    ridge: Option<f64>,
}

fn setup(config: &RunConfig) -> Result<Setup, CliError> {
    let grid = load_case(&config.case)?;
    let model = DcModel::build(&grid)?;
    let m = model.num_lines();
    if config.j > m {
        return Err(CliError::Usage(format!(
            "k = {} and j = {} must not exceed the {m} lines of the case",
            config.k, config.j
        )));
    }
    let params = CaseStudyParams {
        variance_factor: config.variance_factor,
        offdiag_variance: config.offdiag_variance,
        epsilon: config.epsilon,
        seed: config.seed,
    };
    let (spec, ridge) = match config.dist {
        Distribution::Gaussian => {
            let (g, ridge) = case_study_gaussian(&model, &params)?;
            (InjectionSpec::Gaussian(g), ridge)
        }
        Distribution::Laplace => (InjectionSpec::Laplace(case_study_laplace(&model, &params)?), None),
    };
    let gamma = match &config.gamma {
        GammaSource::RateA => Thresholds::from_ratings(&model),
        GammaSource::File(path) => Thresholds::read_csv(path, &model)?,
        GammaSource::NominalMultiple(c) => Thresholds::from_nominal_multiple(&model, *c)?,
    };
    Ok(Setup {
        model,
        spec,
        gamma,
        ridge,
    })
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::Usage(format!("cannot create output directory {}: {e}", dir.display())))
}

#[derive(Serialize)]
struct StreamRecord {
    seed: u64,
    tag: &'static str,
    indices: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    config: &'a RunConfig,
    streams: Vec<StreamRecord>,
    covariance_ridge: Option<f64>,
    outputs: Vec<String>,
}

fn write_manifest(
    config: &RunConfig,
    command: &'static str,
    streams: Vec<StreamRecord>,
    ridge: Option<f64>,
    outputs: &[&str],
) -> Result<(), CliError> {
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command,
        config,
        streams,
        covariance_ridge: ridge,
        outputs: outputs.iter().map(|s| s.to_string()).collect(),
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    let path = config.out.join("manifest.json");
    fs::write(&path, text + "\n").map_err(|e| CliError::Core(io_error(&path, e)))
}

fn io_error(path: &Path, e: std::io::Error) -> linerank::Error {
    linerank::Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn covariance_stream(config: &RunConfig) -> Option<StreamRecord> {
    (config.dist == Distribution::Gaussian).then(|| StreamRecord {
        seed: config.seed,
        tag: TAG_COVARIANCE,
        indices: "0".into(),
    })
}

fn cmd_rank(config: &RunConfig) -> Result<(), CliError> {
    let Setup {
        model,
        spec,
        gamma,
        ridge,
    } = setup(config)?;
    create_dir(&config.out)?;
    let sample = spec.sample(config.n, StreamKey::new(config.seed, TAG_INJECTIONS, 0))?;
    let flows = model.flows_batch(&sample.observations)?;
    let mu = spec.mean();

    let mut outputs = Vec::new();
    for alg in config.algorithm_list() {
        let table: ScoreTable = match alg {
            Algorithm::RateFunction => alg1_rate_function(&flows, &gamma)?.0,
            Algorithm::Counting => alg2_counting(&flows, &gamma)?,
            Algorithm::Gaussian => alg3_gaussian(&sample.observations, &model, mu, &gamma)?,
            Algorithm::Laplace => alg4_laplace(
                &sample.observations,
                &model,
                mu,
                &gamma,
                config.epsilon,
                &LaplaceOptions::default(),
            )?,
        };
        let name = format!("scores_{}.csv", alg.name());
        table.write_csv(config.out.join(&name))?;
        let top: Vec<String> = table.order().iter().take(5).map(usize::to_string).collect();
        println!("{}: top lines {}", alg.name(), top.join(", "));
        outputs.push(name);
    }

    let mut streams: Vec<StreamRecord> = covariance_stream(config).into_iter().collect();
    streams.push(StreamRecord {
        seed: config.seed,
        tag: TAG_INJECTIONS,
        indices: "0".into(),
    });
    let outputs: Vec<&str> = outputs.iter().map(String::as_str).collect();
    write_manifest(config, "rank", streams, ridge, &outputs)
}

/// Ground truths requested by `config.truth`; the first is the reference.
fn truths(model: &DcModel, spec: &InjectionSpec, gamma: &Thresholds, config: &RunConfig) -> Result<Vec<GroundTruth>, CliError> {
    let mc = GroundTruthSource::MonteCarlo {
        n_mc: config.n_mc,
        seed: config.seed,
    };
    let sources = match config.truth {
        TruthKind::Exact => vec![GroundTruthSource::exact_for(spec)],
        TruthKind::Mc => vec![mc],
        TruthKind::Both => vec![GroundTruthSource::exact_for(spec), mc],
    };
    let mut out = Vec::new();
    for source in sources {
        out.push(ground_truth(model, spec, gamma, source)?);
    }
    if let [exact, mc] = out.as_slice() {
        let conflicts = exact.conflicts_with(mc)?;
        if !conflicts.is_empty() {
            let pairs: Vec<String> = conflicts.iter().map(|(a, b)| format!("{a}>{b}")).collect();
            eprintln!(
                "note: Monte Carlo intervals contradict the exact order for {}",
                pairs.join(", ")
            );
        }
    }
    Ok(out)
}

fn write_truths(truths: &[GroundTruth], path: &Path) -> Result<(), CliError> {
    let mut buf = Vec::new();
    for (i, t) in truths.iter().enumerate() {
        let mut part = Vec::new();
        t.write_csv_to(&mut part).expect("in-memory write");
        let text = String::from_utf8(part).expect("utf-8");
        let body = if i == 0 { text.as_str() } else { text.split_once('\n').map_or("", |x| x.1) };
        buf.extend_from_slice(body.as_bytes());
    }
    fs::write(path, buf).map_err(|e| CliError::Core(io_error(path, e)))
}

fn truth_streams(config: &RunConfig) -> Option<StreamRecord> {
    (config.truth != TruthKind::Exact).then(|| StreamRecord {
        seed: config.seed,
        tag: TAG_GROUND_TRUTH,
        indices: format!("0..{}", config.n_mc.div_ceil(linerank::experiments::MC_CHUNK)),
    })
}

fn cmd_ground_truth(config: &RunConfig) -> Result<(), CliError> {
    let Setup {
        model,
        spec,
        gamma,
        ridge,
    } = setup(config)?;
    create_dir(&config.out)?;
    let truths = truths(&model, &spec, &gamma, config)?;
    write_truths(&truths, &config.out.join("ground_truth.csv"))?;
    let top: Vec<String> = truths[0].order().iter().take(5).map(usize::to_string).collect();
    println!("{}: top lines {}", truths[0].source.name(), top.join(", "));
    let streams = covariance_stream(config).into_iter().chain(truth_streams(config)).collect();
    write_manifest(config, "ground-truth", streams, ridge, &["ground_truth.csv"])
}

fn cmd_experiment(config: &RunConfig, kind: ExperimentKind) -> Result<(), CliError> {
    let Setup {
        model,
        spec,
        gamma,
        ridge,
    } = setup(config)?;
    create_dir(&config.out)?;
    let truths = truths(&model, &spec, &gamma, config)?;
    let truth = &truths[0];
    let mut settings = ExperimentSettings::new(config.algorithm_list(), config.replications, config.seed);
    settings.epsilon = config.epsilon;

    let mut outputs = vec!["ground_truth.csv"];
    write_truths(&truths, &config.out.join("ground_truth.csv"))?;
    let mut max_n = 0;
    if matches!(kind, ExperimentKind::FalseSelection | ExperimentKind::Both) {
        let run = run_false_selection(&model, &spec, &gamma, truth, &settings, config.k, config.j, &config.n_grid)?;
        run.write_csv(config.out.join("false_selection.csv"))?;
        outputs.push("false_selection.csv");
        max_n = *config.n_grid.last().expect("validated");
        for curve in &run.curves {
            let last = curve.estimates.last().copied().unwrap_or(f64::NAN);
            println!("{}: f_hat at n = {max_n}: {last}", curve.algorithm);
        }
    }
    if matches!(kind, ExperimentKind::RankIntervals | ExperimentKind::Both) {
        let reports = run_rank_intervals(&model, &spec, &gamma, truth, &settings, config.n, config.level)?;
        RankIntervalReport::write_csv(&reports, config.out.join("rank_intervals.csv"))?;
        outputs.push("rank_intervals.csv");
        max_n = max_n.max(config.n);
        for report in &reports {
            let first = &report.rows[0];
            println!(
                "{}: true rank 1 (line {}) estimated rank in [{}, {}]",
                report.algorithm, first.line, first.lo, first.hi
            );
        }
    }

    let mut streams: Vec<StreamRecord> = covariance_stream(config).into_iter().collect();
    streams.extend(truth_streams(config));
    streams.push(StreamRecord {
        seed: config.seed,
        tag: TAG_INJECTIONS,
        indices: format!("0..{} (n up to {max_n})", config.replications),
    });
    write_manifest(config, "experiment", streams, ridge, &outputs)
}
