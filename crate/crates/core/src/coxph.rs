//! Cox proportional-hazards model with Breslow ties.
//!
//! The fit maximizes the Breslow partial likelihood
//! `Σ_r [ Σ_{i ∈ D_r} βᵀy_i − d_r · log Σ_{k ∈ R_r} exp(βᵀy_k) ]`
//! by damped Newton iterations from `β = 0`. The baseline cumulative hazard
//! is the Breslow estimator `ΔΛ₀(t_r) = d_r / Σ_{k ∈ R_r} exp(βᵀy_k)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::Dataset;
use crate::survmodel::{EventTime, SurvivalFn};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceOptions {
    /// Converged once `max |score| < tol`.
    pub tol: f64,
    pub max_iter: usize,
    /// Any `|β_j|` beyond this is reported as separation.
    pub beta_bound: f64,
}

impl Default for ConvergenceOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 50,
            beta_bound: 50.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub beta: Vec<f64>,
    pub log_likelihood: f64,
    pub max_abs_score: f64,
    pub step_halvings: usize,
}

/// Breslow cumulative baseline hazard `Λ₀`: 0 before the first knot,
/// `values[r]` on `[knots[r], knots[r+1])`, held constant after the last knot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineHazard {
    pub knots: Vec<f64>,
    pub values: Vec<f64>,
}

impl BaselineHazard {
    fn validate(&self) -> Result<()> {
        if self.knots.len() != self.values.len() {
            return Err(Error::Argument("baseline knots and values differ in length".into()));
        }
        if self.knots.windows(2).any(|w| !(w[0] < w[1])) || self.knots.iter().any(|k| !(*k >= 0.0)) {
            return Err(Error::Argument("baseline knots must be increasing times >= 0".into()));
        }
        if self.values.iter().any(|v| !(*v >= 0.0 && v.is_finite()))
            || self.values.windows(2).any(|w| w[1] < w[0])
        {
            return Err(Error::Argument("baseline cumulative hazard must be finite and non-decreasing".into()));
        }
        Ok(())
    }

    pub fn at(&self, t: f64) -> f64 {
        match self.knots.partition_point(|&k| k <= t) {
            0 => 0.0,
            r => self.values[r - 1],
        }
    }
}

#[derive(Serialize, Deserialize)]
struct CoxModelParts {
    covariate_names: Vec<String>,
    beta: Vec<f64>,
    baseline: BaselineHazard,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CoxModelParts", into = "CoxModelParts")]
pub struct CoxModel {
    covariate_names: Vec<String>,
    beta: Vec<f64>,
    baseline: BaselineHazard,
}

impl TryFrom<CoxModelParts> for CoxModel {
    type Error = Error;
    fn try_from(p: CoxModelParts) -> Result<Self> {
        CoxModel::new(p.covariate_names, p.beta, p.baseline)
    }
}

impl From<CoxModel> for CoxModelParts {
    fn from(m: CoxModel) -> Self {
        CoxModelParts {
            covariate_names: m.covariate_names,
            beta: m.beta,
            baseline: m.baseline,
        }
    }
}

impl CoxModel {
    pub fn new(covariate_names: Vec<String>, beta: Vec<f64>, baseline: BaselineHazard) -> Result<Self> {
        if covariate_names.len() != beta.len() {
            return Err(Error::Argument(format!(
                "{} covariate names for {} coefficients",
                covariate_names.len(),
                beta.len()
            )));
        }
        if beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::Argument("coefficients must be finite".into()));
        }
        baseline.validate()?;
        Ok(Self {
            covariate_names,
            beta,
            baseline,
        })
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn baseline(&self) -> &BaselineHazard {
        &self.baseline
    }

    pub fn hazard_ratios(&self) -> Vec<f64> {
        self.beta.iter().map(|b| b.exp()).collect()
    }

    /// `exp(βᵀy)`.
    pub fn risk_score(&self, y: &[f64]) -> Result<f64> {
        if y.len() != self.beta.len() {
            return Err(Error::Argument(format!(
                "covariate vector has length {}, model has {} coefficients",
                y.len(),
                self.beta.len()
            )));
        }
        Ok(self.beta.iter().zip(y).map(|(b, x)| b * x).sum::<f64>().exp())
    }

    /// `S₀(t, y) = exp(−Λ₀(t) · exp(βᵀy))`.
    pub fn cond_survival(&self, y: &[f64], t: f64) -> Result<f64> {
        self.conditional(y)?.survival_at(t)
    }

    pub fn conditional(&self, y: &[f64]) -> Result<ConditionalSurvival<'_>> {
        Ok(ConditionalSurvival {
            baseline: &self.baseline,
            risk: self.risk_score(y)?,
        })
    }

    /// Conditional survival for a precomputed risk score.
    pub fn with_risk(&self, risk: f64) -> ConditionalSurvival<'_> {
        ConditionalSurvival {
            baseline: &self.baseline,
            risk,
        }
    }
}

/// `S₀(·, y)` for one covariate vector.
#[derive(Debug, Clone, Copy)]
pub struct ConditionalSurvival<'a> {
    baseline: &'a BaselineHazard,
    risk: f64,
}

impl SurvivalFn for ConditionalSurvival<'_> {
    fn survival(&self, t: f64) -> f64 {
        (-self.baseline.at(t) * self.risk).exp()
    }

    fn quantile(&self, u: f64) -> EventTime {
        let r = self
            .baseline
            .values
            .partition_point(|&cum| (-cum * self.risk).exp() > u);
        match self.baseline.knots.get(r) {
            Some(&k) => EventTime::At(k),
            None => EventTime::Never,
        }
    }
}

/// Covariate-averaged survival `Σ_i S₀(t, y_i) / N`.
pub fn marginal_survival(model: &CoxModel, rows: &[Vec<f64>], t: f64) -> Result<f64> {
    if rows.is_empty() {
        return Err(Error::Argument("marginal survival over zero covariate rows".into()));
    }
    let mut sum = 0.0;
    for y in rows {
        sum += model.cond_survival(y, t)?;
    }
    Ok(sum / rows.len() as f64)
}

/// The Breslow log partial likelihood of a dataset, with its score and
/// observed information.
pub struct PartialLikelihood {
    /// Subject indices sorted by decreasing time.
    order: Vec<usize>,
    times: Vec<f64>,
    events: Vec<bool>,
    /// Column-centered covariates, row-major.
    x: Vec<Vec<f64>>,
    means: Vec<f64>,
    names: Vec<String>,
}

pub struct Evaluation {
    pub log_likelihood: f64,
    pub score: DVector<f64>,
    pub information: DMatrix<f64>,
}

impl PartialLikelihood {
    pub fn new(data: &Dataset) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::Argument("Cox fit on an empty dataset".into()));
        }
        if !data.records.iter().any(|r| r.event) {
            return Err(Error::Argument("Cox fit requires at least one event: no events".into()));
        }
        let p = data.covariate_names.len();
        let n = data.len() as f64;
        let means: Vec<f64> = (0..p)
            .map(|j| data.records.iter().map(|r| r.covariates[j]).sum::<f64>() / n)
            .collect();
        let x = data
            .records
            .iter()
            .map(|r| r.covariates.iter().zip(&means).map(|(v, m)| v - m).collect())
            .collect();
        let times: Vec<f64> = data.records.iter().map(|r| r.time).collect();
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.sort_by(|&a, &b| times[b].total_cmp(&times[a]));
        Ok(Self {
            order,
            times,
            events: data.records.iter().map(|r| r.event).collect(),
            x,
            means,
            names: data.covariate_names.clone(),
        })
    }

    pub fn dim(&self) -> usize {
        self.means.len()
    }

    fn linear_predictors(&self, beta: &[f64]) -> Vec<f64> {
        self.x
            .iter()
            .map(|row| row.iter().zip(beta).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Runs of tied times in decreasing-time order.
    fn runs(&self) -> Vec<(usize, usize)> {
        let mut runs = Vec::new();
        let mut start = 0;
        while start < self.order.len() {
            let t = self.times[self.order[start]];
            let mut end = start + 1;
            while end < self.order.len() && self.times[self.order[end]] == t {
                end += 1;
            }
            runs.push((start, end));
            start = end;
        }
        runs
    }

    pub fn evaluate(&self, beta: &[f64]) -> Evaluation {
        let p = self.dim();
        let eta = self.linear_predictors(beta);
        let shift = eta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut s0 = 0.0;
        let mut s1 = DVector::<f64>::zeros(p);
        let mut s2 = DMatrix::<f64>::zeros(p, p);
        let mut ll = 0.0;
        let mut score = DVector::<f64>::zeros(p);
        let mut info = DMatrix::<f64>::zeros(p, p);

        for (start, end) in self.runs() {
            for &i in &self.order[start..end] {
                let w = (eta[i] - shift).exp();
                let xi = DVector::from_column_slice(&self.x[i]);
                s0 += w;
                s1.axpy(w, &xi, 1.0);
                s2.ger(w, &xi, &xi, 1.0);
            }
            let mut d = 0.0;
            for &i in &self.order[start..end] {
                if self.events[i] {
                    d += 1.0;
                    ll += eta[i] - shift;
                    score += DVector::from_column_slice(&self.x[i]);
                }
            }
            if d > 0.0 {
                let mean = &s1 / s0;
                ll -= d * s0.ln();
                score.axpy(-d, &mean, 1.0);
                info += (&s2 / s0 - &mean * mean.transpose()) * d;
            }
        }
        Evaluation {
            log_likelihood: ll,
            score,
            information: info,
        }
    }

    pub fn log_likelihood(&self, beta: &[f64]) -> f64 {
        self.evaluate(beta).log_likelihood
    }

    /// Breslow baseline cumulative hazard for uncentered covariates.
    pub fn breslow(&self, beta: &[f64]) -> BaselineHazard {
        let eta = self.linear_predictors(beta);
        let offset: f64 = self.means.iter().zip(beta).map(|(m, b)| m * b).sum::<f64>().exp();
        let mut s0 = 0.0;
        let mut steps: Vec<(f64, f64)> = Vec::new();
        for (start, end) in self.runs() {
            let mut d = 0usize;
            for &i in &self.order[start..end] {
                s0 += eta[i].exp();
                d += usize::from(self.events[i]);
            }
            if d > 0 {
                steps.push((self.times[self.order[start]], d as f64 / (s0 * offset)));
            }
        }
        steps.reverse();
        let mut cum = 0.0;
        let (knots, values) = steps
            .into_iter()
            .map(|(t, inc)| {
                cum += inc;
                (t, cum)
            })
            .unzip();
        BaselineHazard { knots, values }
    }
}

/// Fits a Cox model using every covariate column of `data`.
pub fn cox_fit(data: &Dataset, options: &ConvergenceOptions) -> Result<CoxModel> {
    let pl = PartialLikelihood::new(data)?;
    let p = pl.dim();
    let mut beta = vec![0.0; p];
    let mut current = pl.evaluate(&beta);
    let base_info: Vec<f64> = (0..p).map(|j| current.information[(j, j)]).collect();
    if let Some(j) = base_info.iter().position(|v| !(*v > 1e-12)) {
        return Err(Error::Argument(format!(
            "covariate '{}' has no variation within the risk sets",
            pl.names[j]
        )));
    }
    let mut trace = Vec::new();

    for iteration in 0..=options.max_iter {
        let max_score = current.score.amax();
        if !max_score.is_finite() {
            break;
        }
        if max_score < options.tol {
            // A vanishing score with vanishing information means the likelihood
            // flattened out towards infinity rather than peaked.
            for j in 0..p {
                if current.information[(j, j)] < 1e-6 * base_info[j] {
                    return Err(Error::Separation {
                        name: pl.names[j].clone(),
                        value: beta[j].abs(),
                        bound: options.beta_bound,
                    });
                }
            }
            let baseline = pl.breslow(&beta);
            return CoxModel::new(pl.names.clone(), beta, baseline);
        }
        if iteration == options.max_iter {
            break;
        }
        let step = current
            .information
            .clone()
            .cholesky()
            .ok_or_else(|| {
                Error::Argument("information matrix is singular: covariates are constant or collinear".into())
            })?
            .solve(&current.score);

        let mut scale = 1.0;
        let mut halvings = 0;
        let (candidate, eval) = loop {
            let candidate: Vec<f64> = beta.iter().zip(step.iter()).map(|(b, s)| b + scale * s).collect();
            let eval = pl.evaluate(&candidate);
            // decreases at rounding level are not a reason to halve
            let slack = 1e-12 * (1.0 + current.log_likelihood.abs());
            if eval.log_likelihood >= current.log_likelihood - slack || halvings >= 30 {
                break (candidate, eval);
            }
            scale *= 0.5;
            halvings += 1;
        };
        trace.push(IterationRecord {
            iteration,
            beta: candidate.clone(),
            log_likelihood: eval.log_likelihood,
            max_abs_score: eval.score.amax(),
            step_halvings: halvings,
        });
        if let Some(j) = candidate.iter().position(|b| b.abs() > options.beta_bound) {
            return Err(Error::Separation {
                name: pl.names[j].clone(),
                value: candidate[j].abs(),
                bound: options.beta_bound,
            });
        }
        beta = candidate;
        current = eval;
    }
    Err(Error::NonConvergence {
        max_score: current.score.amax(),
        trace,
    })
}
