//! Monte Carlo experiment harness.
//!
//! An experiment runs one scheme over many independently sampled driving
//! paths at several grid sizes, pairs every scaled endpoint error with the
//! limit functional evaluated on the same path (or with an in-law draw at
//! H = 1/2), and aggregates medians, a log-log rate fit and distributional
//! tests into a report. Every per-path quantity is dumped as a record, and
//! every reported statistic is recomputable from those records alone.
//!
//! Reproducibility: the path for index `i` at grid size `n` is seeded by
//! `derive_seed(base_seed, 2 n, i)` (and its in-law companion by
//! `derive_seed(base_seed, 2 n + 1, i)`), so reports are bit-identical
//! across runs, thread counts and the parallel/sequential feature switch.

mod stats;

pub use stats::{
    has_positive_trend, ks_two_sample, mean, median, regress_loglog, spearman_rho,
    standard_error, KsOutcome, RateFit,
};

use std::io::{BufRead, Write};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{Coefficient, ExprError, ProbeInterval};
use crate::fbm::{derive_seed, sample_path, FbmError, SamplerMethod};
use crate::flow::FlowError;
use crate::limits::{self, LimitError, LimitRegime};
use crate::parallel;
use crate::schemes::{run_scheme, SchemeError, SchemeKind, SchemeSpec};

/// Endpoint errors below this are indistinguishable from flow-solver noise;
/// a config whose medians all sit under it is flagged as degenerate.
pub const DEGENERATE_ERROR_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum McError {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Fbm(#[from] FbmError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Scheme(#[from] SchemeError),
    #[error(transparent)]
    Limit(#[from] LimitError),
    #[error("n list must be nonempty and strictly increasing")]
    BadGridList,
    #[error("path count must be at least 1")]
    NoPaths,
    #[error("log-log regression needs at least 3 points, got {count}")]
    TooFewPoints { count: usize },
    #[error("log-log regression requires positive statistics, got ({x}, {y})")]
    NonPositiveStatistic { x: f64, y: f64 },
    #[error("empty sample")]
    EmptySample,
    #[error("pathwise limit check is undefined in the in-law regime (H = 1/2)")]
    NotPathwise,
    #[error("record parse error at line {line}: {message}")]
    Records { line: usize, message: String },
}

/// Full description of one experiment; a config plus a seed reproduces a
/// report bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Diffusion coefficient as an expression in `x`.
    pub sigma: String,
    pub x0: f64,
    pub hurst: f64,
    pub scheme: SchemeSpec,
    /// Strictly increasing grid sizes.
    pub n_list: Vec<usize>,
    /// Paths per grid size.
    pub paths: usize,
    pub base_seed: u64,
    #[serde(default)]
    pub method: SamplerMethod,
    /// User assertion that sigma is bounded with bounded derivatives;
    /// informational only.
    #[serde(default = "default_true")]
    pub bounded: bool,
    /// Level of the distributional test in the in-law regime.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

fn default_true() -> bool {
    true
}

fn default_alpha() -> f64 {
    0.01
}

impl ExperimentConfig {
    /// Parse the coefficient and check every config invariant. Called by
    /// [`run_rate_experiment`] before any sampling starts.
    pub fn validate(&self) -> Result<Coefficient, McError> {
        let coefficient = Coefficient::with_probe(
            crate::expr::parse(&self.sigma)?,
            ProbeInterval::default(),
            self.bounded,
        );
        coefficient.require_elliptic()?;
        if self.n_list.is_empty() || self.n_list.windows(2).any(|w| w[0] >= w[1]) {
            return Err(McError::BadGridList);
        }
        if self.paths == 0 {
            return Err(McError::NoPaths);
        }
        if self.scheme.kind == SchemeKind::MilsteinType {
            // admissibility of (m, H); the error text carries the bound
            LimitRegime::classify(self.scheme.size, self.hurst)?;
        }
        Ok(coefficient)
    }

    /// Limit regime and scaling exponent; `None` for Crank-Nicholson runs,
    /// which carry no limit functional.
    pub fn regime(&self) -> Result<Option<(LimitRegime, f64)>, McError> {
        match self.scheme.kind {
            SchemeKind::MilsteinType => {
                let regime = LimitRegime::classify(self.scheme.size, self.hurst)?;
                let r = regime.rate_exponent(self.scheme.size, self.hurst);
                Ok(Some((regime, r)))
            }
            SchemeKind::CrankNicholson => Ok(None),
        }
    }
}

/// One path's worth of experiment output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathRecord {
    pub seed: u64,
    pub n: usize,
    /// Signed endpoint error of the scheme.
    pub endpoint_error: f64,
    /// `n^r * endpoint_error` with the regime exponent (0 for CN).
    pub scaled_error: f64,
    /// Pathwise limit functional, or an in-law draw at H = 1/2; absent for
    /// Crank-Nicholson.
    pub limit_value: Option<f64>,
    /// `|scaled_error - limit_value|` in the pathwise regimes.
    pub deviation: Option<f64>,
}

/// A path that failed and was excluded, with its seed and the reason.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathFailure {
    pub n: usize,
    pub seed: u64,
    pub error: String,
}

/// Aggregates for one grid size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSummary {
    pub n: usize,
    pub path_count: usize,
    pub median_abs_endpoint_error: Option<f64>,
    pub median_abs_scaled_error: Option<f64>,
    pub median_abs_deviation: Option<f64>,
    pub mean_deviation: Option<f64>,
    pub deviation_se: Option<f64>,
    pub median_abs_limit: Option<f64>,
    pub failed_seeds: Vec<u64>,
}

/// Distributional test outcome at one grid size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsPerGrid {
    pub n: usize,
    pub outcome: KsOutcome,
}

/// Aggregated Monte Carlo output for one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub regime: Option<LimitRegime>,
    pub rate_exponent: Option<f64>,
    pub summaries: Vec<GridSummary>,
    /// Log-log fit of the median absolute endpoint error against n.
    pub rate_fit: Option<RateFit>,
    /// Set when every median endpoint error sits at the flow-solver floor.
    pub degenerate: Option<String>,
    /// Distributional comparisons (in-law regime only).
    pub ks: Vec<KsPerGrid>,
    pub failures: Vec<PathFailure>,
    pub crate_version: String,
    /// Timing metadata; excluded from reproducibility comparisons.
    pub wall_time_secs: f64,
}

impl ExperimentReport {
    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Copy with timing metadata zeroed, for byte-exact comparisons.
    pub fn without_timing(&self) -> ExperimentReport {
        ExperimentReport { wall_time_secs: 0.0, ..self.clone() }
    }
}

fn run_one_path(
    cfg: &ExperimentConfig,
    coefficient: &Coefficient,
    regime: Option<(LimitRegime, f64)>,
    n: usize,
    index: usize,
) -> Result<PathRecord, (u64, McError)> {
    let seed = derive_seed(cfg.base_seed, 2 * n as u64, index as u64);
    let fail = |e: McError| (seed, e);
    let path =
        sample_path(cfg.hurst, n, seed, cfg.method).map_err(|e| fail(e.into()))?;
    let run =
        run_scheme(coefficient, &cfg.scheme, cfg.x0, &path).map_err(|e| fail(e.into()))?;
    match regime {
        None => Ok(PathRecord {
            seed,
            n,
            endpoint_error: run.endpoint_error,
            scaled_error: run.endpoint_error,
            limit_value: None,
            deviation: None,
        }),
        Some((regime, r)) => {
            let scaled = run.scaled_endpoint_error(r);
            let wseed = derive_seed(cfg.base_seed, 2 * n as u64 + 1, index as u64);
            let limit = limits::evaluate(coefficient, cfg.scheme.size, cfg.x0, &path, wseed)
                .map_err(|e| fail(e.into()))?;
            let deviation =
                if regime.is_in_law() { None } else { Some((scaled - limit.value).abs()) };
            Ok(PathRecord {
                seed,
                n,
                endpoint_error: run.endpoint_error,
                scaled_error: scaled,
                limit_value: Some(limit.value),
                deviation,
            })
        }
    }
}

/// Run the full experiment: sample, run the scheme, evaluate the paired
/// limit functional path by path, and aggregate.
pub fn run_rate_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport, McError> {
    run_rate_experiment_with_records(cfg).map(|(report, _)| report)
}

/// As [`run_rate_experiment`], also returning the per-path records the
/// report was aggregated from.
pub fn run_rate_experiment_with_records(
    cfg: &ExperimentConfig,
) -> Result<(ExperimentReport, Vec<PathRecord>), McError> {
    let started = Instant::now();
    let coefficient = cfg.validate()?;
    let regime = cfg.regime()?;

    let mut records = Vec::with_capacity(cfg.n_list.len() * cfg.paths);
    let mut failures = Vec::new();
    for &n in &cfg.n_list {
        let outcomes =
            parallel::map_indexed(cfg.paths, |i| run_one_path(cfg, &coefficient, regime, n, i));
        for outcome in outcomes {
            match outcome {
                Ok(record) => records.push(record),
                Err((seed, error)) => {
                    failures.push(PathFailure { n, seed, error: error.to_string() })
                }
            }
        }
    }

    let mut report = aggregate_records(cfg, &records, failures)?;
    report.wall_time_secs = started.elapsed().as_secs_f64();
    Ok((report, records))
}

/// Rebuild a report from dumped per-path records. This is the same
/// aggregation path the experiment itself uses, so a report is always
/// recomputable from its record dump.
pub fn aggregate_records(
    cfg: &ExperimentConfig,
    records: &[PathRecord],
    failures: Vec<PathFailure>,
) -> Result<ExperimentReport, McError> {
    let regime = cfg.regime()?;
    let mut summaries = Vec::with_capacity(cfg.n_list.len());
    let mut ks = Vec::new();
    for &n in &cfg.n_list {
        let here: Vec<&PathRecord> = records.iter().filter(|r| r.n == n).collect();
        let abs_endpoint: Vec<f64> = here.iter().map(|r| r.endpoint_error.abs()).collect();
        let abs_scaled: Vec<f64> = here.iter().map(|r| r.scaled_error.abs()).collect();
        let deviations: Vec<f64> = here.iter().filter_map(|r| r.deviation).collect();
        let abs_deviations: Vec<f64> = deviations.iter().map(|d| d.abs()).collect();
        let abs_limits: Vec<f64> =
            here.iter().filter_map(|r| r.limit_value.map(f64::abs)).collect();
        summaries.push(GridSummary {
            n,
            path_count: here.len(),
            median_abs_endpoint_error: median(&abs_endpoint),
            median_abs_scaled_error: median(&abs_scaled),
            median_abs_deviation: median(&abs_deviations),
            mean_deviation: mean(&deviations),
            deviation_se: standard_error(&deviations),
            median_abs_limit: median(&abs_limits),
            failed_seeds: failures.iter().filter(|f| f.n == n).map(|f| f.seed).collect(),
        });
        if matches!(regime, Some((LimitRegime::OddHalf, _))) && !here.is_empty() {
            let scaled: Vec<f64> = here.iter().map(|r| r.scaled_error).collect();
            let draws: Vec<f64> = here.iter().filter_map(|r| r.limit_value).collect();
            ks.push(KsPerGrid { n, outcome: ks_two_sample(&scaled, &draws, cfg.alpha)? });
        }
    }

    let medians: Vec<(f64, f64)> = summaries
        .iter()
        .filter_map(|s| s.median_abs_endpoint_error.map(|m| (s.n as f64, m)))
        .collect();
    let degenerate = if !medians.is_empty()
        && medians.iter().all(|&(_, m)| m <= DEGENERATE_ERROR_FLOOR)
    {
        Some("degenerate: exact scheme".to_string())
    } else {
        None
    };
    let rate_fit = if degenerate.is_some() { None } else { regress_loglog(&medians).ok() };

    Ok(ExperimentReport {
        config: cfg.clone(),
        regime: regime.map(|(r, _)| r),
        rate_exponent: regime.map(|(_, r)| r),
        summaries,
        rate_fit,
        degenerate,
        ks,
        failures,
        crate_version: env!("CARGO_PKG_VERSION").to_string(),
        wall_time_secs: 0.0,
    })
}

/// Per-path deviation sample at one grid size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationSample {
    pub n: usize,
    pub deviations: Vec<f64>,
    pub median: f64,
}

/// Deviations `|n^r (X_hat_1 - X_1) - L(path)|` over the configured number
/// of paths at a single grid size. Only defined in the pathwise regimes.
pub fn pathwise_limit_check(cfg: &ExperimentConfig, n: usize) -> Result<DeviationSample, McError> {
    let coefficient = cfg.validate()?;
    let regime = cfg.regime()?;
    match regime {
        Some((r, _)) if !r.is_in_law() => {}
        _ => return Err(McError::NotPathwise),
    }
    let outcomes =
        parallel::map_indexed(cfg.paths, |i| run_one_path(cfg, &coefficient, regime, n, i));
    let mut deviations = Vec::with_capacity(cfg.paths);
    for outcome in outcomes {
        let record = outcome.map_err(|(_, e)| e)?;
        deviations.push(record.deviation.expect("pathwise regime fills deviations"));
    }
    let median = median(&deviations).ok_or(McError::EmptySample)?;
    Ok(DeviationSample { n, deviations, median })
}

fn fmt_opt(value: Option<f64>) -> String {
    value.map(|v| format!("{v:.16e}")).unwrap_or_default()
}

/// Dump records as CSV (`seed,n,endpoint_error,scaled_error,limit_value,deviation`).
pub fn write_records_csv<W: Write>(records: &[PathRecord], mut w: W) -> std::io::Result<()> {
    writeln!(w, "seed,n,endpoint_error,scaled_error,limit_value,deviation")?;
    for r in records {
        writeln!(
            w,
            "{},{},{:.16e},{:.16e},{},{}",
            r.seed,
            r.n,
            r.endpoint_error,
            r.scaled_error,
            fmt_opt(r.limit_value),
            fmt_opt(r.deviation)
        )?;
    }
    Ok(())
}

/// Read records back from a CSV dump.
pub fn read_records_csv<R: BufRead>(reader: R) -> Result<Vec<PathRecord>, McError> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| McError::Records { line: idx + 1, message: e.to_string() })?;
        if idx == 0 {
            continue; // header
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(McError::Records {
                line: idx + 1,
                message: format!("expected 6 fields, got {}", fields.len()),
            });
        }
        let bad = |message: String| McError::Records { line: idx + 1, message };
        let parse_f64 =
            |s: &str| s.parse::<f64>().map_err(|e| bad(format!("bad float `{s}`: {e}")));
        let parse_opt = |s: &str| -> Result<Option<f64>, McError> {
            if s.is_empty() {
                Ok(None)
            } else {
                parse_f64(s).map(Some)
            }
        };
        out.push(PathRecord {
            seed: fields[0].parse().map_err(|e| bad(format!("bad seed: {e}")))?,
            n: fields[1].parse().map_err(|e| bad(format!("bad n: {e}")))?,
            endpoint_error: parse_f64(fields[2])?,
            scaled_error: parse_f64(fields[3])?,
            limit_value: parse_opt(fields[4])?,
            deviation: parse_opt(fields[5])?,
        });
    }
    Ok(out)
}
