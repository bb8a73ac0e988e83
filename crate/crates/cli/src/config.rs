//! Config file schema.
//!
//! One TOML document fully describes an experiment:
//!
//! ```toml
//! sigma = "2 + sin(x)"        # diffusion coefficient, expression in x
//! x0 = 0.0                    # initial state
//! hurst = 0.45                # Hurst index in (0, 1)
//! scheme = "milstein"         # "milstein" | "crank-nicholson"
//! m = 1                       # scheme size (milstein only; 0 = Euler)
//! n = [256, 512, 1024]        # strictly increasing grid sizes
//! paths = 100                 # paths per grid size
//! seed = 42                   # base seed; --seed overrides
//! method = "circulant"        # optional: "circulant" | "cholesky" | "auto"
//! bounded = true              # optional: assert sigma is bounded
//! alpha = 0.01                # optional: level of distributional tests
//!
//! [powervar]                  # only read by the `powervar` command
//! weight = "2 + cos(x)"       # weight function, expression in x
//! kappa = 3                   # power of the increments
//! ```

use std::path::Path;

use serde::Deserialize;

use fracsde::fbm::SamplerMethod;
use fracsde::mc::ExperimentConfig;
use fracsde::schemes::SchemeSpec;

use crate::CliError;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub sigma: String,
    pub x0: f64,
    pub hurst: f64,
    pub scheme: String,
    #[serde(default)]
    pub m: usize,
    pub n: Vec<usize>,
    pub paths: usize,
    pub seed: u64,
    #[serde(default)]
    pub method: Option<String>,
    #[serde(default = "default_true")]
    pub bounded: bool,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub powervar: Option<PowerVarSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerVarSection {
    pub weight: String,
    pub kappa: u32,
}

fn default_true() -> bool {
    true
}

fn default_alpha() -> f64 {
    0.01
}

pub fn parse_method(name: &str) -> Result<SamplerMethod, CliError> {
    match name {
        "circulant" => Ok(SamplerMethod::Circulant),
        "cholesky" => Ok(SamplerMethod::Cholesky),
        "auto" => Ok(SamplerMethod::Auto),
        other => Err(CliError::Config(format!(
            "unknown sampling method `{other}` (expected circulant, cholesky or auto)"
        ))),
    }
}

/// Load and validate a config file; every schema violation is reported
/// before any computation starts.
pub fn load(path: &Path) -> Result<(FileConfig, ExperimentConfig), CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        CliError::Config(format!("cannot read config file `{}`: {e}", path.display()))
    })?;
    let file: FileConfig = toml::from_str(&text)
        .map_err(|e| CliError::Config(format!("config `{}`: {e}", path.display())))?;

    let scheme = match file.scheme.as_str() {
        "milstein" => SchemeSpec::milstein(file.m)
            .map_err(|e| CliError::Config(format!("config `{}`: {e}", path.display())))?,
        "crank-nicholson" => SchemeSpec::crank_nicholson(),
        other => {
            return Err(CliError::Config(format!(
                "config `{}`: unknown scheme `{other}` (expected milstein or crank-nicholson)",
                path.display()
            )))
        }
    };
    let method = match &file.method {
        Some(name) => parse_method(name)?,
        None => SamplerMethod::Circulant,
    };

    let experiment = ExperimentConfig {
        sigma: file.sigma.clone(),
        x0: file.x0,
        hurst: file.hurst,
        scheme,
        n_list: file.n.clone(),
        paths: file.paths,
        base_seed: file.seed,
        method,
        bounded: file.bounded,
        alpha: file.alpha,
    };
    experiment
        .validate()
        .map_err(|e| CliError::Config(format!("config `{}`: {e}", path.display())))?;
    Ok((file, experiment))
}
