//! Parameter intake: built-in defaults, then an optional `key = value`
//! file, then command-line flags.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, ValueEnum};
use g3m_fee_lab::value::target_weight;
use g3m_fee_lab::{Error, MarketParams, PenaltyParams, PoolParams};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        <Self as ValueEnum>::from_str(s, false)
    }
}

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Configuration file with `key = value` lines; `#` starts a comment.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Drift of the risky asset.
    #[arg(long)]
    pub mu: Option<f64>,
    /// Discount rate.
    #[arg(long)]
    pub r: Option<f64>,
    /// Volatility of the risky asset.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Tracking-penalty weight.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Target weight; defaults to (mu - r) / sigma^2.
    #[arg(long)]
    pub w_star: Option<f64>,
    /// Pool weight parameter; defaults to the target weight.
    #[arg(long)]
    pub theta: Option<f64>,
    /// Fee factor for both directions.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Fee factor when the risky coin is sold to the pool.
    #[arg(long)]
    pub gamma1: Option<f64>,
    /// Fee factor when the numeraire is sold to the pool.
    #[arg(long)]
    pub gamma2: Option<f64>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Write the result here instead of standard output.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

/// Keys accepted in configuration files. Hyphens and underscores are
/// interchangeable.
const FILE_KEYS: &[&str] = &[
    "mu",
    "r",
    "sigma",
    "lambda",
    "w_star",
    "theta",
    "gamma",
    "gamma1",
    "gamma2",
    "format",
    "output",
    "w",
    "price",
    "wealth",
    "gamma_min",
    "gamma_max",
    "points",
    "gammas",
    "w0",
    "h",
    "paths",
    "seed",
    "tol",
    "dynamics",
    "noise",
    "method",
    "xi",
];

#[derive(Debug, Default)]
pub struct FileConfig {
    values: HashMap<String, String>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut values = HashMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Usage(format!("config line {}: expected key = value", n + 1))
            })?;
            let key = key.trim().replace('-', "_");
            if !FILE_KEYS.contains(&key.as_str()) {
                return Err(CliError::Usage(format!(
                    "config line {}: unknown key '{key}'",
                    n + 1
                )));
            }
            values.insert(key, value.trim().to_string());
        }
        Ok(Self { values })
    }

    /// Flag value if given, else file value, else `None`.
    pub fn layer<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.values.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|e| CliError::Usage(format!("config key '{key}' = '{v}': {e}"))),
        }
    }

    pub fn pick<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> Result<T, CliError>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.layer(flag, key)?.unwrap_or(default))
    }

    /// Comma-separated list.
    pub fn list(&self, flag: Option<Vec<f64>>, key: &str) -> Result<Option<Vec<f64>>, CliError> {
        if flag.is_some() {
            return Ok(flag);
        }
        self.values
            .get(key)
            .map(|v| {
                v.split(',')
                    .map(|x| {
                        x.trim().parse::<f64>().map_err(|e| {
                            CliError::Usage(format!("config key '{key}' entry '{x}': {e}"))
                        })
                    })
                    .collect()
            })
            .transpose()
    }
}

/// Market, penalty and pool after defaults and validation.
#[derive(Debug, Clone, Copy)]
pub struct Model {
    pub market: MarketParams,
    pub penalty: PenaltyParams,
    pub pool: PoolParams,
}

pub struct Resolved {
    pub file: FileConfig,
    pub model: Model,
    pub format: Option<Format>,
    pub output: Option<PathBuf>,
}

pub const DEFAULT_MU: f64 = 0.04;
pub const DEFAULT_R: f64 = 0.02;
pub const DEFAULT_SIGMA: f64 = 0.2;
pub const DEFAULT_LAMBDA: f64 = 1.0;
pub const DEFAULT_GAMMA: f64 = 0.99;

fn usage(e: Error) -> CliError {
    CliError::Usage(e.to_string())
}

pub fn resolve(common: &CommonArgs) -> Result<Resolved, CliError> {
    let file = match &common.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let market = MarketParams::new(
        file.pick(common.mu, "mu", DEFAULT_MU)?,
        file.pick(common.r, "r", DEFAULT_R)?,
        file.pick(common.sigma, "sigma", DEFAULT_SIGMA)?,
    )
    .map_err(usage)?;
    let w_star = match file.layer(common.w_star, "w_star")? {
        Some(w) => w,
        None => target_weight(&market).map_err(usage)?,
    };
    let penalty = PenaltyParams::new(file.pick(common.lambda, "lambda", DEFAULT_LAMBDA)?, w_star)
        .map_err(usage)?;
    let gamma = file.pick(common.gamma, "gamma", DEFAULT_GAMMA)?;
    let pool = PoolParams::new(
        file.pick(common.theta, "theta", w_star)?,
        file.pick(common.gamma1, "gamma1", gamma)?,
        file.pick(common.gamma2, "gamma2", gamma)?,
    )
    .map_err(usage)?;
    let format = file.layer(common.format, "format")?;
    let output = file.layer(common.output.clone(), "output")?;
    Ok(Resolved {
        file,
        model: Model {
            market,
            penalty,
            pool,
        },
        format,
        output,
    })
}
