//! Per-replicate simulation of event and censoring times.

use rand::distributions::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::coxph::CoxModel;
use crate::error::{Error, Result};
use crate::estimators::{Dataset, Observation, StudyRecord};
use crate::survmodel::{EventTime, StepSurvival, SurvivalFn};

use super::MarginalCurve;

/// One subject in one simulated study.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimRecord {
    /// Index of the subject in the original dataset.
    pub subject: usize,
    pub c_sim: EventTime,
    pub t_sim: EventTime,
    pub x: f64,
    pub delta: bool,
}

impl Observation for SimRecord {
    fn time(&self) -> f64 {
        self.x
    }
    fn is_event(&self) -> bool {
        self.delta
    }
    fn subject(&self) -> Option<usize> {
        Some(self.subject)
    }
    fn label(&self, _position: usize) -> String {
        format!("#{}", self.subject)
    }
}

/// Independent random streams drawn from one master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    /// Replicates whose curves form the band.
    Simulation = 0,
    /// Replicates averaged into the marginal model.
    Marginal = 1,
}

/// Counter-based uniforms: the draws for `(seed, stream, replicate, subject)`
/// are fixed regardless of evaluation order or thread.
pub struct ReplicateRng {
    rng: ChaCha8Rng,
}

impl ReplicateRng {
    pub fn new(master_seed: u64, stream: Stream, replicate: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(((stream as u64) << 56) | replicate as u64);
        Self { rng }
    }

    /// `(u_censoring, u_event)` for one subject.
    pub fn uniforms(&mut self, subject: usize) -> (f64, f64) {
        // Open01 for f64 consumes one u64, i.e. two 32-bit words
        self.rng.set_word_pos(subject as u128 * 4);
        (self.rng.sample(Open01), self.rng.sample(Open01))
    }
}

/// Standard resolution: the earlier of the two draws wins, ties go to the
/// event. An event draw beyond the model's support censors at
/// `min(c, horizon)`.
pub fn resolve_standard(c: EventTime, t: EventTime, horizon: f64) -> (f64, bool) {
    match (c, t) {
        (_, EventTime::Never) => (c.finite().map_or(horizon, |c| c.min(horizon)), false),
        (EventTime::At(c), EventTime::At(t)) if c < t => (c, false),
        (_, EventTime::At(t)) => (t, true),
    }
}

/// Resolution when simulations cannot run past the observed end of
/// follow-up `x_obs`:
///
/// * `(x_obs, 0)` if `c > x_obs` and `t > x_obs`
/// * `(c, 0)` if `c < t` and `c <= x_obs`
/// * `(t, 1)` if `c >= t` and `t <= x_obs`
pub fn resolve_follow_up(c: EventTime, t: EventTime, x_obs: f64) -> (f64, bool) {
    let obs = EventTime::At(x_obs);
    if c > obs && t > obs {
        (x_obs, false)
    } else if c < t {
        (c.finite().expect("c <= x_obs is finite"), false)
    } else {
        (t.finite().expect("t <= x_obs is finite"), true)
    }
}

/// Dataset and fitted models shared read-only by every replicate.
pub struct SimContext<'a> {
    records: &'a [StudyRecord],
    event_model: &'a CoxModel,
    cens_model: &'a StepSurvival,
    risk: Vec<f64>,
    horizon: f64,
}

impl<'a> SimContext<'a> {
    /// The model's covariates are looked up by name in `data`.
    pub fn new(data: &'a Dataset, event_model: &'a CoxModel, cens_model: &'a StepSurvival) -> Result<Self> {
        let columns = event_model
            .covariate_names()
            .iter()
            .map(|n| data.column(n))
            .collect::<Result<Vec<_>>>()?;
        let risk = data
            .records
            .iter()
            .map(|r| {
                let y: Vec<f64> = columns.iter().map(|&j| r.covariates[j]).collect();
                event_model.risk_score(&y)
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(i) = risk.iter().position(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(Error::Argument(format!(
                "subject {}: risk score {} is not finite",
                data.records[i].subject_id, risk[i]
            )));
        }
        Ok(Self {
            records: &data.records,
            event_model,
            cens_model,
            risk,
            horizon: data.max_time(),
        })
    }

    pub fn records(&self) -> &[StudyRecord] {
        self.records
    }

    pub fn event_model(&self) -> &CoxModel {
        self.event_model
    }

    pub fn cens_model(&self) -> &StepSurvival {
        self.cens_model
    }

    /// `exp(βᵀy_i)` per subject.
    pub fn risk(&self) -> &[f64] {
        &self.risk
    }

    /// Largest observed time in the study.
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    fn draw(&self, subject: usize, rng: &mut ReplicateRng) -> Result<(EventTime, EventTime)> {
        let (uc, ut) = rng.uniforms(subject);
        let c = self.cens_model.sample_event_time(uc)?;
        let t = self.event_model.with_risk(self.risk[subject]).sample_event_time(ut)?;
        Ok((c, t))
    }
}

/// Event times from the conditional model, censoring from the censoring
/// model, no follow-up limit.
pub fn simulate_replicate_standard(ctx: &SimContext<'_>, subjects: &[usize], rng: &mut ReplicateRng) -> Result<Vec<SimRecord>> {
    subjects
        .iter()
        .map(|&i| {
            let (c, t) = ctx.draw(i, rng)?;
            let (x, delta) = resolve_standard(c, t, ctx.horizon);
            Ok(SimRecord { subject: i, c_sim: c, t_sim: t, x, delta })
        })
        .collect()
}

/// As [`simulate_replicate_standard`] but censored at each subject's
/// observed end of follow-up. Every resolved `x` is at most `x_obs`.
pub fn simulate_replicate_ipoc(ctx: &SimContext<'_>, subjects: &[usize], rng: &mut ReplicateRng) -> Result<Vec<SimRecord>> {
    subjects
        .iter()
        .map(|&i| {
            let (c, t) = ctx.draw(i, rng)?;
            let (x, delta) = resolve_follow_up(c, t, ctx.records[i].time);
            Ok(SimRecord { subject: i, c_sim: c, t_sim: t, x, delta })
        })
        .collect()
}

/// Event times from the marginal curve for every subject, regardless of
/// covariates; standard resolution.
pub fn simulate_replicate_marginal(
    ctx: &SimContext<'_>,
    subjects: &[usize],
    marginal: &MarginalCurve,
    rng: &mut ReplicateRng,
) -> Result<Vec<SimRecord>> {
    subjects
        .iter()
        .map(|&i| {
            let (uc, ut) = rng.uniforms(i);
            let c = ctx.cens_model.sample_event_time(uc)?;
            let t = marginal.survival.sample_event_time(ut)?;
            let (x, delta) = resolve_standard(c, t, ctx.horizon);
            Ok(SimRecord { subject: i, c_sim: c, t_sim: t, x, delta })
        })
        .collect()
}
