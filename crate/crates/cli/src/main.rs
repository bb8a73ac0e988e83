//! Command-line front end: dispatch experiments from config files and emit
//! tables, CSV dumps and JSON reports.
//!
//! Exit codes: 0 on success, 1 on runtime failure, 2 on configuration
//! errors (including missing or invalid config files).

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fracsde::expr;
use fracsde::fbm::{derive_seed, sample_path};
use fracsde::mc::{
    aggregate_records, ks_two_sample, median, read_records_csv, run_rate_experiment_with_records,
    write_records_csv, ExperimentConfig, ExperimentReport,
};
use fracsde::newton_cotes;
use fracsde::parallel;
use fracsde::powervar::{
    scaled_variation, variation_half_sample, variation_limit, VariationRegime, WeightPoints,
};
use fracsde::schemes::run_scheme;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(String),
}

impl CliError {
    fn runtime(e: impl std::fmt::Display) -> CliError {
        CliError::Runtime(e.to_string())
    }
}

#[derive(Parser)]
#[command(
    name = "fracsde",
    version,
    about = "Scheme laboratory for scalar SDEs driven by fractional Brownian motion"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config file (TOML; see the repository README for the schema)
    #[arg(long)]
    config: PathBuf,
    /// Output directory (created if missing)
    #[arg(long)]
    out: PathBuf,
    /// Override the config seed
    #[arg(long)]
    seed: Option<u64>,
    /// Cap worker threads (default: all cores)
    #[arg(long)]
    threads: Option<usize>,
    /// Override the sampling method: circulant, cholesky or auto
    #[arg(long)]
    method: Option<String>,
    /// Print progress details
    #[arg(short, long)]
    verbose: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run one trajectory and write t,approx,exact,abs_error rows
    Simulate(RunArgs),
    /// Run the rate experiment; write report.json and paths.csv
    Rates(RunArgs),
    /// Weighted power-variation experiment (needs a [powervar] section)
    Powervar(RunArgs),
    /// Print the exact rational weight table of the order-N measure
    Ncweights {
        /// Measure order N >= 0
        #[arg(long)]
        order: usize,
    },
    /// Rebuild a report from a per-path CSV dump
    Report {
        #[arg(long)]
        config: PathBuf,
        /// Per-path CSV produced by `rates`
        #[arg(long)]
        paths: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Runtime(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(1)
        }
        Err(CliError::Config(message)) => {
            eprintln!("configuration error: {message}");
            ExitCode::from(2)
        }
    }
}

fn run() -> Result<(), CliError> {
    match Cli::parse().command {
        Command::Simulate(args) => simulate(args),
        Command::Rates(args) => rates(args),
        Command::Powervar(args) => powervar(args),
        Command::Ncweights { order } => {
            println!("{}", newton_cotes::weights(order));
            Ok(())
        }
        Command::Report { config, paths, out } => report(&config, &paths, &out),
    }
}

/// Apply command-line overrides and the thread cap shared by run commands.
fn prepare(args: &RunArgs) -> Result<(config::FileConfig, ExperimentConfig), CliError> {
    let (file, mut experiment) = config::load(&args.config)?;
    if let Some(seed) = args.seed {
        experiment.base_seed = seed;
    }
    if let Some(name) = &args.method {
        experiment.method = config::parse_method(name)?;
    }
    if let Some(threads) = args.threads {
        if threads == 0 {
            return Err(CliError::Config("--threads must be at least 1".to_string()));
        }
        // ignore "already initialized": only the first cap can take effect
        let _ = parallel::configure_threads(threads);
    }
    fs::create_dir_all(&args.out).map_err(|e| {
        CliError::Runtime(format!("cannot create output directory `{}`: {e}", args.out.display()))
    })?;
    Ok((file, experiment))
}

fn simulate(args: RunArgs) -> Result<(), CliError> {
    let (_, experiment) = prepare(&args)?;
    let coefficient = experiment.validate().map_err(CliError::runtime)?;
    let n = experiment.n_list[0];
    let seed = derive_seed(experiment.base_seed, 2 * n as u64, 0);
    let path =
        sample_path(experiment.hurst, n, seed, experiment.method).map_err(CliError::runtime)?;
    let run = run_scheme(&coefficient, &experiment.scheme, experiment.x0, &path)
        .map_err(CliError::runtime)?;

    let target = args.out.join("trajectory.csv");
    let mut file = fs::File::create(&target)
        .map_err(|e| CliError::Runtime(format!("cannot write `{}`: {e}", target.display())))?;
    run.write_csv(&mut file).map_err(CliError::runtime)?;

    if args.verbose {
        println!("n = {n}, seed = {seed}");
    }
    println!(
        "wrote {} ({} rows); endpoint error {:+.3e}, sup error {:.3e}",
        target.display(),
        n + 1,
        run.endpoint_error,
        run.sup_error
    );
    if !coefficient.bounded_hint() {
        eprintln!("warning: sigma marked unbounded; asymptotic guarantees may not apply");
    }
    Ok(())
}

fn rates(args: RunArgs) -> Result<(), CliError> {
    let (_, experiment) = prepare(&args)?;
    if args.verbose {
        println!(
            "running {} grid sizes x {} paths (seed {})",
            experiment.n_list.len(),
            experiment.paths,
            experiment.base_seed
        );
    }
    let (report, records) =
        run_rate_experiment_with_records(&experiment).map_err(CliError::runtime)?;
    write_report_files(&report, &records, &args.out)?;
    print_report_table(&report);
    Ok(())
}

fn write_report_files(
    report: &ExperimentReport,
    records: &[fracsde::mc::PathRecord],
    out: &Path,
) -> Result<(), CliError> {
    let json_path = out.join("report.json");
    fs::write(&json_path, report.to_json_pretty())
        .map_err(|e| CliError::Runtime(format!("cannot write `{}`: {e}", json_path.display())))?;
    let csv_path = out.join("paths.csv");
    let mut csv = fs::File::create(&csv_path)
        .map_err(|e| CliError::Runtime(format!("cannot write `{}`: {e}", csv_path.display())))?;
    write_records_csv(records, &mut csv).map_err(CliError::runtime)?;
    println!("wrote {} and {}", json_path.display(), csv_path.display());
    Ok(())
}

fn print_report_table(report: &ExperimentReport) {
    println!("{:>8} {:>8} {:>12} {:>12} {:>12}", "n", "paths", "med|err|", "med|dev|", "med|L|");
    for s in &report.summaries {
        println!(
            "{:>8} {:>8} {:>12} {:>12} {:>12}",
            s.n,
            s.path_count,
            s.median_abs_endpoint_error.map_or_else(String::new, |v| format!("{v:.4e}")),
            s.median_abs_deviation.map_or_else(String::new, |v| format!("{v:.4e}")),
            s.median_abs_limit.map_or_else(String::new, |v| format!("{v:.4e}")),
        );
    }
    if let Some(fit) = &report.rate_fit {
        println!("fitted rate: slope {:+.4} (se {:.4})", fit.slope, fit.slope_se);
    }
    if let Some(flag) = &report.degenerate {
        println!("{flag}");
    }
    for ks in &report.ks {
        println!(
            "KS at n = {}: statistic {:.4}, threshold {:.4}, reject: {}",
            ks.n, ks.outcome.statistic, ks.outcome.threshold, ks.outcome.reject
        );
    }
    if !report.failures.is_empty() {
        println!("{} failed paths (seeds recorded in the report)", report.failures.len());
    }
}

fn powervar(args: RunArgs) -> Result<(), CliError> {
    let (file, experiment) = prepare(&args)?;
    let section = file.powervar.as_ref().ok_or_else(|| {
        CliError::Config("the powervar command needs a [powervar] section".to_string())
    })?;
    let weight = expr::parse(&section.weight)
        .map_err(|e| CliError::Config(format!("weight expression: {e}")))?;
    let kappa = section.kappa;
    let regime = VariationRegime::classify(kappa, experiment.hurst);

    let csv_path = args.out.join("powervar.csv");
    let mut rows = String::from("seed,n,raw_variation,scaled_variation,limit\n");
    let mut summary = Vec::new();
    for &n in &experiment.n_list {
        let per_path = parallel::map_indexed(experiment.paths, |i| {
            let seed = derive_seed(experiment.base_seed, 2 * n as u64, i as u64);
            let path = sample_path(experiment.hurst, n, seed, experiment.method)
                .map_err(|e| e.to_string())?;
            let raw = fracsde::powervar::weighted_power_variation(
                &weight,
                WeightPoints::Driving,
                &path,
                kappa,
            )
            .map_err(|e| e.to_string())?;
            let scaled = scaled_variation(&weight, WeightPoints::Driving, &path, kappa)
                .map_err(|e| e.to_string())?;
            let limit = match regime {
                VariationRegime::OddHalf => {
                    let wseed = derive_seed(experiment.base_seed, 2 * n as u64 + 1, i as u64);
                    Some(
                        variation_half_sample(&weight, &path, kappa, wseed)
                            .map_err(|e| e.to_string())?,
                    )
                }
                _ => variation_limit(&weight, &path, kappa).map_err(|e| e.to_string())?,
            };
            Ok::<(u64, f64, f64, Option<f64>), String>((seed, raw, scaled, limit))
        });
        let mut scaled_all = Vec::new();
        let mut limits_all = Vec::new();
        let mut deviations = Vec::new();
        for item in per_path {
            let (seed, raw, scaled, limit) = item.map_err(CliError::Runtime)?;
            rows.push_str(&format!(
                "{seed},{n},{raw:.16e},{scaled:.16e},{}\n",
                limit.map(|l| format!("{l:.16e}")).unwrap_or_default()
            ));
            scaled_all.push(scaled);
            if let Some(l) = limit {
                limits_all.push(l);
                deviations.push((scaled - l).abs());
            }
        }
        let entry = match regime {
            VariationRegime::OddHalf => {
                let ks = ks_two_sample(&scaled_all, &limits_all, experiment.alpha)
                    .map_err(CliError::runtime)?;
                serde_json::json!({
                    "n": n,
                    "ks_statistic": ks.statistic,
                    "ks_threshold": ks.threshold,
                    "reject": ks.reject,
                })
            }
            _ => serde_json::json!({
                "n": n,
                "median_abs_deviation": median(&deviations),
            }),
        };
        summary.push(entry);
    }
    fs::write(&csv_path, rows)
        .map_err(|e| CliError::Runtime(format!("cannot write `{}`: {e}", csv_path.display())))?;

    let json_path = args.out.join("powervar.json");
    let doc = serde_json::json!({
        "weight": section.weight,
        "kappa": kappa,
        "hurst": experiment.hurst,
        "scaling_exponent": regime.scaling_exponent(kappa, experiment.hurst),
        "per_n": summary,
    });
    fs::write(&json_path, serde_json::to_string_pretty(&doc).expect("summary serializes"))
        .map_err(|e| CliError::Runtime(format!("cannot write `{}`: {e}", json_path.display())))?;
    println!("wrote {} and {}", csv_path.display(), json_path.display());
    Ok(())
}

fn report(config_path: &Path, paths: &Path, out: &Path) -> Result<(), CliError> {
    let (_, experiment) = config::load(config_path)?;
    let file = fs::File::open(paths).map_err(|e| {
        CliError::Config(format!("cannot read records `{}`: {e}", paths.display()))
    })?;
    let records = read_records_csv(std::io::BufReader::new(file)).map_err(CliError::runtime)?;
    let report = aggregate_records(&experiment, &records, Vec::new()).map_err(CliError::runtime)?;
    fs::create_dir_all(out).map_err(|e| {
        CliError::Runtime(format!("cannot create output directory `{}`: {e}", out.display()))
    })?;
    let json_path = out.join("report.json");
    fs::write(&json_path, report.to_json_pretty())
        .map_err(|e| CliError::Runtime(format!("cannot write `{}`: {e}", json_path.display())))?;
    print_report_table(&report);
    println!("wrote {}", json_path.display());
    Ok(())
}
