use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Parser, Debug, Serialize)]
#[command(name = "ebinfer", version, about = "Empirical Bayes large-scale inference")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "kebab-case", tag = "subcommand")]
pub enum Command {
    /// Two-sample t-statistics converted to z-values
    Zvals(ZvalsArgs),
    /// James–Stein shrinkage of a column of observations
    Js(JsArgs),
    /// Tail-area Fdr and the step-up discovery set
    Fdr(FdrArgs),
    /// Fit an empirical null to the centre of the z-values
    Null(NullArgs),
    /// Tweedie effect-size estimates from a fitted marginal density
    Effects(EffectsArgs),
    /// Stratified, pooled and optionally detrended Fdr side by side
    Strata(StrataArgs),
    /// Monte Carlo certification runs
    Simulate(SimulateArgs),
}

#[derive(Args, Debug, Serialize)]
pub struct OutArgs {
    /// Output directory, created if missing
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum SideArg {
    Right,
    Left,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum NullArg {
    Theoretical,
    Empirical,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    Dominance,
    FdrControl,
    Tweedie,
}

/// Accepts plain decimals and fractions such as `1/6`.
pub fn parse_number(s: &str) -> Result<f64, String> {
    let bad = || format!("'{s}' is not a number or fraction");
    match s.split_once('/') {
        Some((a, b)) => {
            let a: f64 = a.trim().parse().map_err(|_| bad())?;
            let b: f64 = b.trim().parse().map_err(|_| bad())?;
            Ok(a / b)
        }
        None => s.trim().parse().map_err(|_| bad()),
    }
}

#[derive(Args, Debug, Serialize)]
pub struct NullFitArgs {
    /// Lower quantile of the initial central interval
    #[arg(long, default_value_t = 0.25)]
    pub lower_q: f64,
    /// Upper quantile of the initial central interval
    #[arg(long, default_value_t = 0.75)]
    pub upper_q: f64,
    /// Fit on the quantile interval only, without re-centring it
    #[arg(long)]
    pub no_recenter: bool,
}

#[derive(Args, Debug, Serialize)]
pub struct FdrOptions {
    #[arg(long, default_value = "0.1", value_parser = parse_number)]
    pub q: f64,
    #[arg(long, value_enum, default_value_t = SideArg::Right)]
    pub side: SideArg,
    #[arg(long, value_enum, default_value_t = NullArg::Theoretical)]
    pub null: NullArg,
    /// Null proportion; defaults to 1 under the theoretical null and to the
    /// fitted value under the empirical null
    #[arg(long, value_parser = parse_number)]
    pub p0: Option<f64>,
    #[command(flatten)]
    #[serde(flatten)]
    pub fit: NullFitArgs,
}

#[derive(Args, Debug, Serialize)]
pub struct ZvalsArgs {
    /// Expression matrix: header of subject IDs, then label and values per row
    #[arg(long)]
    pub matrix: PathBuf,
    /// Subject-to-group assignments
    #[arg(long)]
    pub groups: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    pub out: OutArgs,
}

#[derive(Args, Debug, Serialize)]
pub struct JsArgs {
    /// One observation per line
    #[arg(long)]
    pub input: PathBuf,
    /// Known sampling variance of each observation
    #[arg(long, value_parser = parse_number)]
    pub sigma0_sq: f64,
    #[command(flatten)]
    #[serde(flatten)]
    pub out: OutArgs,
}

#[derive(Args, Debug, Serialize)]
pub struct FdrArgs {
    /// z-value file: label, z and an optional covariate per line
    #[arg(long)]
    pub input: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    pub fdr: FdrOptions,
    #[command(flatten)]
    #[serde(flatten)]
    pub out: OutArgs,
}

#[derive(Args, Debug, Serialize)]
pub struct NullArgs {
    /// z-value file
    #[arg(long)]
    pub input: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    pub fit: NullFitArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub out: OutArgs,
}

#[derive(Args, Debug, Serialize)]
pub struct EffectsArgs {
    /// z-value file
    #[arg(long)]
    pub input: PathBuf,
    /// Degrees of freedom of the log-density spline
    #[arg(long, default_value_t = ebinfer::effect_size::DEFAULT_DF)]
    pub df: usize,
    /// Histogram bins
    #[arg(long, default_value_t = ebinfer::effect_size::DEFAULT_BINS)]
    pub bins: usize,
    /// Rows in the ranked table, by |z|
    #[arg(long, default_value_t = 10)]
    pub top_k: usize,
    #[command(flatten)]
    #[serde(flatten)]
    pub out: OutArgs,
}

#[derive(Args, Debug, Serialize)]
#[group(id = "stratify", required = true, multiple = false, args = ["split_at", "labels"])]
pub struct StrataArgs {
    /// z-value file with a covariate column
    #[arg(long)]
    pub input: PathBuf,
    /// Split into covariate below / at-or-above this value
    #[arg(long, value_parser = parse_number)]
    pub split_at: Option<f64>,
    /// Case label to stratum name, one pair per line
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Also run on z minus its running median along the covariate
    #[arg(long)]
    pub window: Option<usize>,
    #[command(flatten)]
    #[serde(flatten)]
    pub fdr: FdrOptions,
    #[command(flatten)]
    #[serde(flatten)]
    pub out: OutArgs,
}

#[derive(Args, Debug, Serialize)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub scenario: Scenario,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Replications; each scenario has its own default
    #[arg(long)]
    pub reps: Option<usize>,
    /// Cases per replication; each scenario has its own default
    #[arg(long)]
    pub n: Option<usize>,
    /// Level for the fdr-control scenario
    #[arg(long, default_value = "0.1", value_parser = parse_number)]
    pub q: f64,
    /// Keep per-replication metric values in the output
    #[arg(long)]
    pub traces: bool,
    #[command(flatten)]
    #[serde(flatten)]
    pub out: OutArgs,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Zvals(_) => "zvals",
            Command::Js(_) => "js",
            Command::Fdr(_) => "fdr",
            Command::Null(_) => "null",
            Command::Effects(_) => "effects",
            Command::Strata(_) => "strata",
            Command::Simulate(_) => "simulate",
        }
    }

    pub fn out_dir(&self) -> &std::path::Path {
        match self {
            Command::Zvals(a) => &a.out.out,
            Command::Js(a) => &a.out.out,
            Command::Fdr(a) => &a.out.out,
            Command::Null(a) => &a.out.out,
            Command::Effects(a) => &a.out.out,
            Command::Strata(a) => &a.out.out,
            Command::Simulate(a) => &a.out.out,
        }
    }
}
