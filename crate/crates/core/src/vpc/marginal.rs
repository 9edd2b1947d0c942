use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimators::{weighted_km_fit, WeightFn};
use crate::survmodel::StepSurvival;

use super::bands::validate_grid;
use super::simulate::{simulate_replicate_ipoc, ReplicateRng, SimContext, Stream};

/// Covariate-averaged survival approximated by the mean of IPoC-weighted
/// replicate curves, as a step curve with knots on `grid`.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalCurve {
    pub survival: StepSurvival,
    pub grid: Vec<f64>,
}

impl MarginalCurve {
    /// Step curve through `means` at `grid`. Beyond the last grid point the
    /// curve holds its final value.
    pub fn from_means(grid: &[f64], means: Vec<f64>) -> Result<Self> {
        validate_grid(grid)?;
        let mut running = 1.0f64;
        let values: Vec<f64> = means
            .into_iter()
            .map(|m| {
                debug_assert!(m <= running + 1e-12, "mean of non-increasing curves increased");
                running = running.min(m.clamp(0.0, 1.0));
                running
            })
            .collect();
        Ok(Self {
            survival: StepSurvival::new(grid.to_vec(), values)?,
            grid: grid.to_vec(),
        })
    }
}

/// Runs `replicates` follow-up-censored simulations of `subjects`, fits the
/// weighted KM to each and averages the curves on `grid`.
pub fn build_marginal<W: WeightFn + ?Sized>(
    ctx: &SimContext<'_>,
    subjects: &[usize],
    weights: &W,
    replicates: usize,
    grid: &[f64],
    seed: u64,
) -> Result<MarginalCurve> {
    if replicates == 0 {
        return Err(Error::Argument("marginal model needs at least one replicate".into()));
    }
    if subjects.is_empty() {
        return Err(Error::Argument("marginal model over zero subjects".into()));
    }
    validate_grid(grid)?;
    let rows = (0..replicates)
        .into_par_iter()
        .map(|j| {
            let mut rng = ReplicateRng::new(seed, Stream::Marginal, j);
            simulate_replicate_ipoc(ctx, subjects, &mut rng)
                .and_then(|sims| weighted_km_fit(&sims, weights))
                .map(|km| km.survival.eval_grid(grid))
                .map_err(|e| Error::Replicate { index: j, source: Box::new(e) })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut means = vec![0.0; grid.len()];
    for row in &rows {
        for (m, v) in means.iter_mut().zip(row) {
            *m += v;
        }
    }
    let j = replicates as f64;
    MarginalCurve::from_means(grid, means.into_iter().map(|m| m / j).collect())
}
