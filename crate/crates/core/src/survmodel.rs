//! Survival-distribution primitives.
//!
//! Every distribution exposes its survival function `S(t) = P(T > t)` and an
//! inverse-transform sampler `T = inf { t : S(t) <= u }`. Step functions are
//! right-continuous with `S(t) = 1` before the first knot.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A sampled time that may lie beyond the support of a step curve.
///
/// `Never` orders after every finite time, so `min`/comparison logic in the
/// replicate simulators is exact.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub enum EventTime {
    At(f64),
    Never,
}

impl EventTime {
    pub fn finite(self) -> Option<f64> {
        match self {
            EventTime::At(t) => Some(t),
            EventTime::Never => None,
        }
    }

    pub fn is_never(self) -> bool {
        matches!(self, EventTime::Never)
    }
}

pub trait SurvivalFn {
    /// `S(t)` without argument checks; callers guarantee `t >= 0`.
    fn survival(&self, t: f64) -> f64;

    /// Inverse transform without argument checks; callers guarantee `0 < u < 1`.
    fn quantile(&self, u: f64) -> EventTime;

    fn survival_at(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(Error::Domain(format!("survival evaluated at t = {t}")));
        }
        Ok(self.survival(t))
    }

    fn sample_event_time(&self, u: f64) -> Result<EventTime> {
        if !(u > 0.0 && u < 1.0) {
            return Err(Error::Domain(format!("uniform draw u = {u} outside (0, 1)")));
        }
        Ok(self.quantile(u))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExponentialDist {
    rate: f64,
}

impl ExponentialDist {
    pub fn new(rate: f64) -> Result<Self> {
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(Error::Argument(format!("exponential rate must be positive, got {rate}")));
        }
        Ok(Self { rate })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }
}

impl SurvivalFn for ExponentialDist {
    fn survival(&self, t: f64) -> f64 {
        (-self.rate * t).exp()
    }

    fn quantile(&self, u: f64) -> EventTime {
        EventTime::At(-u.ln() / self.rate)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeibullDist {
    scale: f64,
    shape: f64,
}

impl WeibullDist {
    pub fn new(scale: f64, shape: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite() && shape > 0.0 && shape.is_finite()) {
            return Err(Error::Argument(format!(
                "Weibull scale and shape must be positive, got scale={scale}, shape={shape}"
            )));
        }
        Ok(Self { scale, shape })
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn shape(&self) -> f64 {
        self.shape
    }
}

impl SurvivalFn for WeibullDist {
    fn survival(&self, t: f64) -> f64 {
        (-(t / self.scale).powf(self.shape)).exp()
    }

    fn quantile(&self, u: f64) -> EventTime {
        EventTime::At(self.scale * (-u.ln()).powf(1.0 / self.shape))
    }
}

/// Right-continuous non-increasing step survival curve.
///
/// `S(t) = 1` for `t < knots[0]` and `S(t) = values[r]` for `knots[r] <= t < knots[r+1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "StepParts", into = "StepParts")]
pub struct StepSurvival {
    knots: Vec<f64>,
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct StepParts {
    knots: Vec<f64>,
    values: Vec<f64>,
}

impl TryFrom<StepParts> for StepSurvival {
    type Error = Error;
    fn try_from(p: StepParts) -> Result<Self> {
        StepSurvival::new(p.knots, p.values)
    }
}

impl From<StepSurvival> for StepParts {
    fn from(s: StepSurvival) -> Self {
        StepParts {
            knots: s.knots,
            values: s.values,
        }
    }
}

impl StepSurvival {
    pub fn new(knots: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if knots.len() != values.len() {
            return Err(Error::Argument(format!(
                "step curve has {} knots but {} values",
                knots.len(),
                values.len()
            )));
        }
        if let Some(k) = knots.iter().find(|k| !(**k >= 0.0 && k.is_finite())) {
            return Err(Error::Argument(format!("step knot {k} is not a finite time >= 0")));
        }
        if knots.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Argument("step knots must be strictly increasing".into()));
        }
        if let Some(v) = values.iter().find(|v| !(**v >= 0.0 && **v <= 1.0)) {
            return Err(Error::Argument(format!("step value {v} outside [0, 1]")));
        }
        if values.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::Argument("step values must be non-increasing".into()));
        }
        Ok(Self { knots, values })
    }

    /// `S(t) = 1` everywhere.
    pub fn one() -> Self {
        Self {
            knots: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Value held after the final knot (1 for an empty curve).
    pub fn final_value(&self) -> f64 {
        self.values.last().copied().unwrap_or(1.0)
    }

    pub fn eval_grid(&self, grid: &[f64]) -> Vec<f64> {
        grid.iter().map(|&t| self.survival(t)).collect()
    }
}

impl SurvivalFn for StepSurvival {
    fn survival(&self, t: f64) -> f64 {
        match self.knots.partition_point(|&k| k <= t) {
            0 => 1.0,
            r => self.values[r - 1],
        }
    }

    fn quantile(&self, u: f64) -> EventTime {
        let r = self.values.partition_point(|&v| v > u);
        match self.knots.get(r) {
            Some(&k) => EventTime::At(k),
            None => EventTime::Never,
        }
    }
}
