use crate::error::{Error, Result};
use crate::survmodel::StepSurvival;

/// Pointwise mean and quantile envelope of replicate survival curves.
#[derive(Debug, Clone, PartialEq)]
pub struct VpcBand {
    pub grid: Vec<f64>,
    pub mean: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub replicate_count: usize,
}

impl VpcBand {
    /// Average of `upper - lower` over the grid.
    pub fn mean_width(&self) -> f64 {
        self.mean_width_where(|_| true)
    }

    pub fn mean_width_where(&self, keep: impl Fn(f64) -> bool) -> f64 {
        let widths: Vec<f64> = self
            .grid
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .filter(|(t, _)| keep(**t))
            .map(|(_, (lo, hi))| hi - lo)
            .collect();
        widths.iter().sum::<f64>() / widths.len().max(1) as f64
    }
}

/// Nearest-rank empirical quantile of sorted values: the `ceil(p·n)`-th
/// order statistic.
pub fn nearest_rank(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    // guard against p·n landing a rounding error above an integer
    let rank = ((p * n as f64) - 1e-9).ceil().clamp(1.0, n as f64) as usize;
    sorted[rank - 1]
}

pub(crate) fn validate_quantiles((lo, hi): (f64, f64)) -> Result<()> {
    if !(lo > 0.0 && hi < 1.0 && lo < hi) {
        return Err(Error::Argument(format!("quantiles ({lo}, {hi}) must satisfy 0 < lower < upper < 1")));
    }
    Ok(())
}

pub(crate) fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Argument("empty evaluation grid".into()));
    }
    if grid.iter().any(|t| !(*t >= 0.0 && t.is_finite())) || grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Argument("grid must be strictly increasing finite times >= 0".into()));
    }
    Ok(())
}

/// Band from replicate curves already evaluated on `grid`, one row per
/// replicate in index order.
///
/// The envelope is widened to contain the mean where a skewed replicate
/// distribution would put the mean outside the nearest-rank quantiles.
pub fn band_from_values(grid: &[f64], rows: &[Vec<f64>], quantiles: (f64, f64)) -> Result<VpcBand> {
    if rows.is_empty() {
        return Err(Error::Argument("no replicate curves to aggregate".into()));
    }
    validate_grid(grid)?;
    validate_quantiles(quantiles)?;
    if let Some(r) = rows.iter().position(|r| r.len() != grid.len()) {
        return Err(Error::Argument(format!("replicate {r} has {} values for {} grid points", rows[r].len(), grid.len())));
    }
    let j = rows.len();
    let mut mean = Vec::with_capacity(grid.len());
    let mut lower = Vec::with_capacity(grid.len());
    let mut upper = Vec::with_capacity(grid.len());
    let mut column = vec![0.0; j];
    for g in 0..grid.len() {
        for (dst, row) in column.iter_mut().zip(rows) {
            *dst = row[g];
        }
        let m = column.iter().sum::<f64>() / j as f64;
        column.sort_by(f64::total_cmp);
        mean.push(m);
        lower.push(nearest_rank(&column, quantiles.0).min(m));
        upper.push(nearest_rank(&column, quantiles.1).max(m));
    }
    Ok(VpcBand {
        grid: grid.to_vec(),
        mean,
        lower,
        upper,
        replicate_count: j,
    })
}

/// Evaluates every curve on the grid (right-continuous) and aggregates.
pub fn aggregate_bands(curves: &[StepSurvival], grid: &[f64], quantiles: (f64, f64)) -> Result<VpcBand> {
    let rows: Vec<Vec<f64>> = curves.iter().map(|c| c.eval_grid(grid)).collect();
    band_from_values(grid, &rows, quantiles)
}
