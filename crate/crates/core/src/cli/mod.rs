//! Command-line surface: `simulate-study`, `fit`, `vpc`, `plot`.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or parse failure.

pub mod io;
pub mod svg;

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::coxph::ConvergenceOptions;
use crate::error::{Error, Result};
use crate::kv::KeyValues;
use crate::studygen::{generate_study, StudySpec, DEFAULT_SPEC};
use crate::vpc::{fit_models, run_vpc_with_models, Algorithm, VpcConfig, WeightForm};

pub const SEED_ENV: &str = "VPC_IPOC_SEED";

#[derive(Debug, Parser)]
#[command(name = "ipoc-vpc", version, about = "Visual predictive checks for time-to-event models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic study dataset
    SimulateStudy {
        /// Study spec (key = value); the bundled default when omitted
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the Cox event model and the censoring model
    Fit {
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated covariate columns; all columns when omitted
        #[arg(long, value_delimiter = ',')]
        covariates: Option<Vec<String>>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a visual predictive check and write the band CSV
    Vpc(VpcArgs),
    /// Render a band CSV as SVG
    Plot {
        #[arg(long)]
        bands: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "Visual predictive check")]
        title: String,
    },
}

#[derive(Debug, Clone, Default, Args)]
pub struct VpcArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Fitted models from `fit`; fitted on the fly when omitted
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// key = value run configuration; flags take precedence
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub svg: Option<PathBuf>,
    #[arg(long, value_parser = parse_algorithm)]
    pub algorithm: Option<Algorithm>,
    #[arg(long)]
    pub replicates: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of grid points
    #[arg(long)]
    pub grid: Option<usize>,
    /// Lower and upper quantile, e.g. 0.05,0.95
    #[arg(long)]
    pub quantiles: Option<String>,
    #[arg(long)]
    pub stratify_by: Option<String>,
    #[arg(long, value_parser = parse_weight_form)]
    pub weight_form: Option<WeightForm>,
    #[arg(long)]
    pub max_weight: Option<f64>,
    #[arg(long)]
    pub workers: Option<usize>,
}

fn parse_algorithm(s: &str) -> std::result::Result<Algorithm, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_weight_form(s: &str) -> std::result::Result<WeightForm, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_quantiles(key: &str, s: &str) -> Result<(f64, f64)> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    match parts.as_slice() {
        [lo, hi] => {
            let lo = lo.parse::<f64>().map_err(|_| Error::parse(key, format!("'{s}' is not lower,upper")))?;
            let hi = hi.parse::<f64>().map_err(|_| Error::parse(key, format!("'{s}' is not lower,upper")))?;
            if !(lo > 0.0 && hi < 1.0 && lo < hi) {
                return Err(Error::parse(key, "quantiles must satisfy 0 < lower < upper < 1"));
            }
            Ok((lo, hi))
        }
        _ => Err(Error::parse(key, format!("'{s}' is not lower,upper"))),
    }
}

/// Fully resolved settings for one `vpc` invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub algorithm: Algorithm,
    pub vpc: VpcConfig,
}

const CONFIG_KEYS: [&str; 9] = [
    "algorithm",
    "replicates",
    "seed",
    "grid",
    "quantiles",
    "stratify-by",
    "weight-form",
    "max-weight",
    "workers",
];

impl RunConfig {
    /// Resolution order: flag, then config file, then `VPC_IPOC_SEED` (seed
    /// only), then defaults.
    pub fn resolve(config_text: Option<&str>, flags: &VpcArgs, env_seed: Option<&str>) -> Result<Self> {
        let kv = match config_text {
            Some(text) => KeyValues::parse(text)?,
            None => KeyValues::default(),
        };
        if let Some(key) = kv.keys().find(|k| !CONFIG_KEYS.contains(k)) {
            return Err(Error::parse(key, "unknown configuration key"));
        }
        let defaults = VpcConfig::default();
        let algorithm = match (flags.algorithm, kv.raw("algorithm")) {
            (Some(a), _) => a,
            (None, Some(s)) => s.parse()?,
            (None, None) => Algorithm::Standard,
        };
        let env_seed = env_seed
            .map(|s| s.trim().parse::<u64>().map_err(|_| Error::parse(SEED_ENV, format!("'{s}' is not an unsigned integer"))))
            .transpose()?;
        let seed = flags.seed.or(kv.get("seed")?).or(env_seed).unwrap_or(defaults.seed);
        let quantiles = match (&flags.quantiles, kv.raw("quantiles")) {
            (Some(q), _) => parse_quantiles("quantiles", q)?,
            (None, Some(q)) => parse_quantiles("quantiles", q)?,
            (None, None) => defaults.quantiles,
        };
        let weight_form = match (flags.weight_form, kv.raw("weight-form")) {
            (Some(w), _) => w,
            (None, Some(s)) => s.parse()?,
            (None, None) => defaults.weight_form,
        };
        let vpc = VpcConfig {
            replicates: flags.replicates.or(kv.get("replicates")?).unwrap_or(defaults.replicates),
            seed,
            grid_size: flags.grid.or(kv.get("grid")?).unwrap_or(defaults.grid_size),
            grid: None,
            quantiles,
            stratify_by: flags.stratify_by.clone().or_else(|| kv.raw("stratify-by").map(String::from)),
            weight_form,
            max_weight: flags.max_weight.or(kv.get("max-weight")?),
            workers: flags.workers.or(kv.get("workers")?),
        };
        vpc.validate().map_err(|e| Error::parse("config", e.to_string()))?;
        Ok(Self { algorithm, vpc })
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

pub fn cmd_simulate_study(spec: Option<&Path>, out: &Path) -> Result<usize> {
    let text = match spec {
        Some(p) => fs::read_to_string(p)?,
        None => DEFAULT_SPEC.to_string(),
    };
    let data = generate_study(&StudySpec::parse(&text)?)?;
    let mut w = create(out)?;
    io::write_dataset(&data, &mut w)?;
    w.flush()?;
    Ok(data.len())
}

pub fn cmd_fit(data: &Path, covariates: Option<&[String]>, out: &Path) -> Result<()> {
    let dataset = io::read_dataset(open(data)?)?;
    let models = fit_models(&dataset, covariates, &ConvergenceOptions::default())?;
    let mut w = create(out)?;
    io::write_models(&models, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn cmd_vpc(args: &VpcArgs, env_seed: Option<&str>) -> Result<()> {
    let config_text = args.config.as_deref().map(fs::read_to_string).transpose()?;
    let config = RunConfig::resolve(config_text.as_deref(), args, env_seed)?;
    let dataset = io::read_dataset(open(&args.data)?)?;
    let models = match &args.model {
        Some(p) => io::read_models(open(p)?)?,
        None => fit_models(&dataset, None, &ConvergenceOptions::default())?,
    };
    let result = run_vpc_with_models(&dataset, &models, config.algorithm, &config.vpc)?;
    let mut csv = Vec::new();
    io::write_bands(&result, &mut csv)?;
    fs::write(&args.out, &csv)?;
    if let Some(svg_path) = &args.svg {
        let series = io::read_bands(csv.as_slice())?;
        fs::write(svg_path, svg::render(&series, &format!("VPC ({})", config.algorithm)))?;
    }
    Ok(())
}

pub fn cmd_plot(bands: &Path, out: &Path, title: &str) -> Result<()> {
    let series = io::read_bands(open(bands)?)?;
    fs::write(out, svg::render(&series, title))?;
    Ok(())
}

pub fn exit_code(err: &Error) -> i32 {
    if err.is_usage() {
        2
    } else {
        1
    }
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let result = match &cli.command {
        Command::SimulateStudy { spec, out } => cmd_simulate_study(spec.as_deref(), out).map(|_| ()),
        Command::Fit { data, covariates, out } => cmd_fit(data, covariates.as_deref(), out),
        Command::Vpc(args) => cmd_vpc(args, std::env::var(SEED_ENV).ok().as_deref()),
        Command::Plot { bands, out, title } => cmd_plot(bands, out, title),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
