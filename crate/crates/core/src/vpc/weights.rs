use std::str::FromStr;

use crate::error::Error;
use crate::estimators::{classes_by_bits, WeightFn};
use crate::survmodel::{StepSurvival, SurvivalFn};

use super::SimContext;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WeightForm {
    /// `W_i(t) = 1 / (S₀(t, y_i) · S₀C(t)²)`.
    Full,
    /// `W_i(t) = 1 / S₀(t, y_i)`. The censoring factor is common to every
    /// subject at a given time and cancels in each KM increment.
    #[default]
    Simplified,
}

impl FromStr for WeightForm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "full" => Ok(WeightForm::Full),
            "simplified" => Ok(WeightForm::Simplified),
            _ => Err(Error::parse("weight-form", format!("expected full or simplified, got '{s}'"))),
        }
    }
}

impl std::fmt::Display for WeightForm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            WeightForm::Full => "full",
            WeightForm::Simplified => "simplified",
        })
    }
}

/// Inverse-probability-of-censoring weights for simulated subjects.
///
/// Subjects with identical risk scores share a weight class.
pub struct IpocWeights<'a> {
    event_model: &'a crate::coxph::CoxModel,
    cens_model: &'a StepSurvival,
    risk: &'a [f64],
    classes: Vec<usize>,
    form: WeightForm,
    max_weight: Option<f64>,
}

impl<'a> IpocWeights<'a> {
    pub fn new(ctx: &'a SimContext<'_>, form: WeightForm, max_weight: Option<f64>) -> Self {
        Self {
            event_model: ctx.event_model(),
            cens_model: ctx.cens_model(),
            risk: ctx.risk(),
            classes: classes_by_bits(ctx.risk()),
            form,
            max_weight,
        }
    }
}

/// `W = 1 / (S₀ · S₀C²)` for [`WeightForm::Full`], `W = 1 / S₀` otherwise.
pub fn ipoc_weight(s0: f64, s0c: f64, form: WeightForm) -> f64 {
    match form {
        WeightForm::Simplified => 1.0 / s0,
        WeightForm::Full => 1.0 / (s0 * s0c * s0c),
    }
}

/// Builds the weight function for a fitted event and censoring model.
pub fn ipoc_weights<'a>(ctx: &'a SimContext<'_>, form: WeightForm) -> IpocWeights<'a> {
    IpocWeights::new(ctx, form, None)
}

impl WeightFn for IpocWeights<'_> {
    fn weight(&self, subject: usize, t: f64) -> f64 {
        let s0 = self.event_model.with_risk(self.risk[subject]).survival(t);
        let s0c = match self.form {
            WeightForm::Simplified => 1.0,
            WeightForm::Full => self.cens_model.survival(t),
        };
        let w = ipoc_weight(s0, s0c, self.form);
        match self.max_weight {
            Some(cap) if !(w <= cap) => cap,
            _ => w,
        }
    }

    fn weight_class(&self, subject: usize) -> Option<usize> {
        Some(self.classes[subject])
    }
}
