//! Visual predictive checks for time-to-event models.
//!
//! Four replicate algorithms are available:
//!
//! * [`Algorithm::Standard`]: simulate event and censoring times for every
//!   subject with no follow-up limit, estimate with the standard KM.
//! * [`Algorithm::StandardCensored`]: as above but every simulation is
//!   censored at the subject's observed end of follow-up. This is
//!   deliberately biased and exists as a diagnostic of that bias.
//! * [`Algorithm::Ipoc`]: the follow-up-censored simulations estimated with
//!   the IPoC-weighted KM.
//! * [`Algorithm::Marginal`]: simulate all subjects from the marginal model
//!   obtained by averaging IPoC curves, estimate with the standard KM.
//!
//! Models are fitted once on the full dataset. Simulation and band
//! aggregation run per stratum.

mod bands;
mod marginal;
mod simulate;
mod weights;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

pub use bands::{aggregate_bands, band_from_values, nearest_rank, VpcBand};
pub use marginal::{build_marginal, MarginalCurve};
pub use simulate::{
    resolve_follow_up, resolve_standard, simulate_replicate_ipoc, simulate_replicate_marginal,
    simulate_replicate_standard, ReplicateRng, SimContext, SimRecord, Stream,
};
pub use weights::{ipoc_weight, ipoc_weights, IpocWeights, WeightForm};

use crate::coxph::{cox_fit, ConvergenceOptions, CoxModel};
use crate::error::{Error, Result};
use crate::estimators::{censoring_fit, km_fit, weighted_km_fit, Dataset, KmCurve};
use crate::survmodel::StepSurvival;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    Standard,
    StandardCensored,
    Ipoc,
    Marginal,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [
        Algorithm::Standard,
        Algorithm::StandardCensored,
        Algorithm::Ipoc,
        Algorithm::Marginal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Standard => "standard",
            Algorithm::StandardCensored => "standard-censored",
            Algorithm::Ipoc => "ipoc",
            Algorithm::Marginal => "marginal",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::parse("algorithm", format!("unknown algorithm '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VpcConfig {
    pub replicates: usize,
    pub seed: u64,
    /// Number of equally spaced grid points on `[0, max observed time]`.
    pub grid_size: usize,
    /// Explicit grid; overrides `grid_size`.
    pub grid: Option<Vec<f64>>,
    pub quantiles: (f64, f64),
    pub stratify_by: Option<String>,
    pub weight_form: WeightForm,
    pub max_weight: Option<f64>,
    /// Replicate worker threads; `None` uses the global pool.
    pub workers: Option<usize>,
}

impl Default for VpcConfig {
    fn default() -> Self {
        Self {
            replicates: 500,
            seed: 1,
            grid_size: 200,
            grid: None,
            quantiles: (0.05, 0.95),
            stratify_by: None,
            weight_form: WeightForm::Simplified,
            max_weight: None,
            workers: None,
        }
    }
}

impl VpcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::Argument("replicates must be at least 1".into()));
        }
        bands::validate_quantiles(self.quantiles)?;
        if self.grid.is_none() && self.grid_size < 2 {
            return Err(Error::Argument("grid size must be at least 2".into()));
        }
        if let Some(cap) = self.max_weight {
            if !(cap > 0.0) {
                return Err(Error::Argument(format!("max weight {cap} must be positive")));
            }
        }
        if self.workers == Some(0) {
            return Err(Error::Argument("workers must be at least 1".into()));
        }
        Ok(())
    }

    pub fn grid_for(&self, data: &Dataset) -> Result<Vec<f64>> {
        let grid = match &self.grid {
            Some(g) => g.clone(),
            None => {
                let end = data.max_time();
                if !(end > 0.0) {
                    return Err(Error::Argument("cannot build a grid: no positive observed time".into()));
                }
                let last = (self.grid_size - 1) as f64;
                (0..self.grid_size).map(|k| end * k as f64 / last).collect()
            }
        };
        bands::validate_grid(&grid)?;
        Ok(grid)
    }
}

/// Event model and censoring model fitted on one dataset.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FittedModels {
    pub event_model: CoxModel,
    pub censoring_model: StepSurvival,
}

/// Fits the Cox event model on `covariates` (all columns when `None`) and
/// the null censoring model.
pub fn fit_models(data: &Dataset, covariates: Option<&[String]>, options: &ConvergenceOptions) -> Result<FittedModels> {
    let selected;
    let data_for_fit = match covariates {
        Some(names) => {
            selected = data.select(names)?;
            &selected
        }
        None => data,
    };
    Ok(FittedModels {
        event_model: cox_fit(data_for_fit, options)?,
        censoring_model: censoring_fit(&data.records)?,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct StratumResult {
    pub label: String,
    /// Indices into the dataset of the stratum's subjects.
    pub subjects: Vec<usize>,
    pub band: VpcBand,
    pub observed: KmCurve,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VpcResult {
    pub algorithm: Algorithm,
    pub grid: Vec<f64>,
    pub strata: Vec<StratumResult>,
}

/// Partitions subjects by the distinct values of `column`, in increasing order.
pub fn strata(data: &Dataset, column: Option<&str>) -> Result<Vec<(String, Vec<usize>)>> {
    let Some(name) = column else {
        return Ok(vec![("all".to_string(), (0..data.len()).collect())]);
    };
    let j = data.column(name)?;
    let mut values: Vec<f64> = data.records.iter().map(|r| r.covariates[j]).collect();
    values.sort_by(f64::total_cmp);
    values.dedup();
    Ok(values
        .into_iter()
        .map(|v| {
            let members = (0..data.len()).filter(|&i| data.records[i].covariates[j] == v).collect();
            (format!("{name}={v}"), members)
        })
        .collect())
}

/// Replicate curves of one stratum evaluated on the grid, in replicate order.
pub fn replicate_curves(
    ctx: &SimContext<'_>,
    subjects: &[usize],
    algorithm: Algorithm,
    config: &VpcConfig,
    grid: &[f64],
) -> Result<Vec<Vec<f64>>> {
    let weights = IpocWeights::new(ctx, config.weight_form, config.max_weight);
    let marginal = match algorithm {
        Algorithm::Marginal => Some(build_marginal(ctx, subjects, &weights, config.replicates, grid, config.seed)?),
        _ => None,
    };
    (0..config.replicates)
        .into_par_iter()
        .map(|j| {
            let mut rng = ReplicateRng::new(config.seed, Stream::Simulation, j);
            let curve = match algorithm {
                Algorithm::Standard => km_fit(&simulate_replicate_standard(ctx, subjects, &mut rng)?),
                Algorithm::StandardCensored => km_fit(&simulate_replicate_ipoc(ctx, subjects, &mut rng)?),
                Algorithm::Ipoc => weighted_km_fit(&simulate_replicate_ipoc(ctx, subjects, &mut rng)?, &weights),
                Algorithm::Marginal => {
                    let m = marginal.as_ref().expect("marginal built above");
                    km_fit(&simulate_replicate_marginal(ctx, subjects, m, &mut rng)?)
                }
            };
            curve
                .map(|km| km.survival.eval_grid(grid))
                .map_err(|e| Error::Replicate { index: j, source: Box::new(e) })
        })
        .collect()
}

/// Runs a VPC with already fitted models.
pub fn run_vpc_with_models(data: &Dataset, models: &FittedModels, algorithm: Algorithm, config: &VpcConfig) -> Result<VpcResult> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::Argument("VPC on an empty dataset".into()));
    }
    let grid = config.grid_for(data)?;
    let ctx = SimContext::new(data, &models.event_model, &models.censoring_model)?;
    let run = || -> Result<Vec<StratumResult>> {
        strata(data, config.stratify_by.as_deref())?
            .into_iter()
            .map(|(label, subjects)| {
                let rows = replicate_curves(&ctx, &subjects, algorithm, config, &grid)?;
                let band = band_from_values(&grid, &rows, config.quantiles)?;
                let members: Vec<_> = subjects.iter().map(|&i| data.records[i].clone()).collect();
                let observed = km_fit(&members)?;
                Ok(StratumResult {
                    label,
                    subjects,
                    band,
                    observed,
                })
            })
            .collect()
    };
    let strata = match config.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Argument(format!("cannot start worker pool: {e}")))?
            .install(run)?,
        None => run()?,
    };
    Ok(VpcResult { algorithm, grid, strata })
}

/// Fits the event and censoring models on the full dataset, then runs the VPC.
pub fn run_vpc(data: &Dataset, algorithm: Algorithm, config: &VpcConfig) -> Result<VpcResult> {
    let models = fit_models(data, None, &ConvergenceOptions::default())?;
    run_vpc_with_models(data, &models, algorithm, config)
}
