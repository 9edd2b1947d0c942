//! Kaplan-Meier estimators: standard, IPoC-weighted and reverse (censoring) KM.
//!
//! All three share one tie convention: at a time `t`, every event at `t` is
//! pooled into `d_r`, and subjects censored at `t` are still in the risk set
//! of `t`. The risk set at `t` is therefore `{ i : time_i >= t }`.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::survmodel::StepSurvival;

/// One subject of the original study.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyRecord {
    pub subject_id: String,
    /// End of follow-up, `min(event time, censoring time)`.
    pub time: f64,
    pub event: bool,
    pub covariates: Vec<f64>,
}

/// A study: records plus the names of their covariate columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub covariate_names: Vec<String>,
    pub records: Vec<StudyRecord>,
}

impl Dataset {
    pub fn new(covariate_names: Vec<String>, records: Vec<StudyRecord>) -> Result<Self> {
        for r in &records {
            if !(r.time >= 0.0 && r.time.is_finite()) {
                return Err(Error::Argument(format!(
                    "subject {}: time {} is not a finite value >= 0",
                    r.subject_id, r.time
                )));
            }
            if r.covariates.len() != covariate_names.len() {
                return Err(Error::Argument(format!(
                    "subject {}: {} covariates, expected {}",
                    r.subject_id,
                    r.covariates.len(),
                    covariate_names.len()
                )));
            }
        }
        Ok(Self {
            covariate_names,
            records,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn column(&self, name: &str) -> Result<usize> {
        self.covariate_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::Argument(format!("no covariate column named '{name}'")))
    }

    /// Keep only the named covariate columns, in the given order.
    pub fn select(&self, names: &[String]) -> Result<Dataset> {
        let idx = names
            .iter()
            .map(|n| self.column(n))
            .collect::<Result<Vec<_>>>()?;
        let records = self
            .records
            .iter()
            .map(|r| StudyRecord {
                covariates: idx.iter().map(|&j| r.covariates[j]).collect(),
                ..r.clone()
            })
            .collect();
        Ok(Dataset {
            covariate_names: names.to_vec(),
            records,
        })
    }

    pub fn max_time(&self) -> f64 {
        self.records.iter().map(|r| r.time).fold(0.0, f64::max)
    }
}

/// A right-censored observation as seen by the estimators.
pub trait Observation {
    fn time(&self) -> f64;
    fn is_event(&self) -> bool;

    /// Key passed to a [`WeightFn`]. Defaults to the position in the input slice.
    fn subject(&self) -> Option<usize> {
        None
    }

    fn label(&self, position: usize) -> String {
        position.to_string()
    }
}

impl Observation for StudyRecord {
    fn time(&self) -> f64 {
        self.time
    }
    fn is_event(&self) -> bool {
        self.event
    }
    fn label(&self, _position: usize) -> String {
        self.subject_id.clone()
    }
}

impl Observation for (f64, bool) {
    fn time(&self) -> f64 {
        self.0
    }
    fn is_event(&self) -> bool {
        self.1
    }
}

/// Event and censoring roles swapped.
struct Reversed<'a, O>(&'a O);

impl<O: Observation> Observation for Reversed<'_, O> {
    fn time(&self) -> f64 {
        self.0.time()
    }
    fn is_event(&self) -> bool {
        !self.0.is_event()
    }
}

/// Per-subject weight `W_i(t)` for the weighted KM.
pub trait WeightFn: Sync {
    fn weight(&self, subject: usize, t: f64) -> f64;

    /// Subjects sharing a class have identical weights at every time. When
    /// every subject has a class, risk-set sums are computed per class.
    fn weight_class(&self, _subject: usize) -> Option<usize> {
        None
    }
}

impl<F> WeightFn for F
where
    F: Fn(usize, f64) -> f64 + Sync,
{
    fn weight(&self, subject: usize, t: f64) -> f64 {
        self(subject, t)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KmCurve {
    pub event_times: Vec<f64>,
    pub increments: Vec<f64>,
    /// `Y_r`, or the summed risk-set weight for a weighted fit.
    pub at_risk: Vec<f64>,
    /// `d_r`, or the summed event weight for a weighted fit.
    pub events: Vec<f64>,
    pub survival: StepSurvival,
}

impl KmCurve {
    fn assemble(event_times: Vec<f64>, increments: Vec<f64>, at_risk: Vec<f64>, events: Vec<f64>) -> Self {
        let mut s = 1.0;
        let values: Vec<f64> = increments
            .iter()
            .map(|inc| {
                s *= inc;
                s
            })
            .collect();
        let survival = StepSurvival::new(event_times.clone(), values)
            .expect("KM increments lie in [0, 1] at strictly increasing event times");
        Self {
            event_times,
            increments,
            at_risk,
            events,
            survival,
        }
    }
}

fn sorted_order<O: Observation>(records: &[O]) -> Result<Vec<usize>> {
    if records.is_empty() {
        return Err(Error::Argument("KM fit on an empty record set".into()));
    }
    if let Some((i, r)) = records
        .iter()
        .enumerate()
        .find(|(_, r)| !(r.time() >= 0.0 && r.time().is_finite()))
    {
        return Err(Error::Argument(format!(
            "subject {}: time {} is not a finite value >= 0",
            r.label(i),
            r.time()
        )));
    }
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by(|&a, &b| records[a].time().total_cmp(&records[b].time()));
    Ok(order)
}

/// Iterate over runs of tied times in `order`, yielding `(start, end)` positions.
fn tie_runs<'a, O: Observation>(records: &'a [O], order: &'a [usize]) -> impl Iterator<Item = (usize, usize)> + 'a {
    let mut start = 0;
    std::iter::from_fn(move || {
        if start >= order.len() {
            return None;
        }
        let t = records[order[start]].time();
        let mut end = start + 1;
        while end < order.len() && records[order[end]].time() == t {
            end += 1;
        }
        let run = (start, end);
        start = end;
        Some(run)
    })
}

/// Standard product-limit estimator, `ΔS_r = 1 - d_r / Y_r`.
pub fn km_fit<O: Observation>(records: &[O]) -> Result<KmCurve> {
    let order = sorted_order(records)?;
    let (mut times, mut incs, mut ys, mut ds) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut at_risk = records.len();
    for (start, end) in tie_runs(records, &order) {
        let d = order[start..end].iter().filter(|&&i| records[i].is_event()).count();
        if d > 0 {
            let (d, y) = (d as f64, at_risk as f64);
            times.push(records[order[start]].time());
            incs.push((y - d) / y);
            ys.push(y);
            ds.push(d);
        }
        at_risk -= end - start;
    }
    Ok(KmCurve::assemble(times, incs, ys, ds))
}

fn checked_weight<O: Observation, W: WeightFn + ?Sized>(
    records: &[O],
    position: usize,
    w: &W,
    t: f64,
) -> Result<f64> {
    let key = records[position].subject().unwrap_or(position);
    let weight = w.weight(key, t);
    if weight > 0.0 && weight.is_finite() {
        Ok(weight)
    } else {
        Err(Error::Weight {
            subject: records[position].label(position),
            time: t,
            weight,
        })
    }
}

/// IPoC-weighted KM:
/// `ΔS_r = 1 - Σ_{events at t_r} W_i(t_r) / Σ_{k : time_k >= t_r} W_k(t_r)`.
///
/// Weights are validated, never truncated here; a truncating [`WeightFn`] is
/// the caller's choice.
pub fn weighted_km_fit<O, W>(records: &[O], w: &W) -> Result<KmCurve>
where
    O: Observation,
    W: WeightFn + ?Sized,
{
    let order = sorted_order(records)?;
    let key = |p: usize| records[p].subject().unwrap_or(p);
    let classes: Option<Vec<usize>> = records
        .iter()
        .enumerate()
        .map(|(p, _)| w.weight_class(key(p)))
        .collect();
    let (mut times, mut incs, mut ys, mut ds) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());

    match classes {
        Some(classes) => {
            // At-risk counts per class, plus one at-risk representative per class
            // for evaluating the shared weight and reporting errors.
            let n_classes = classes.iter().max().map_or(0, |m| m + 1);
            let mut count = vec![0usize; n_classes];
            for &c in &classes {
                count[c] += 1;
            }
            let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
            for &p in order.iter().rev() {
                members[classes[p]].push(p);
            }
            let mut class_w = vec![0.0; n_classes];
            for (start, end) in tie_runs(records, &order) {
                let t = records[order[start]].time();
                let has_event = order[start..end].iter().any(|&p| records[p].is_event());
                if has_event {
                    let mut y = 0.0;
                    for c in 0..n_classes {
                        if count[c] > 0 {
                            let rep = *members[c].last().expect("class has at-risk members");
                            class_w[c] = checked_weight(records, rep, w, t)?;
                            y += count[c] as f64 * class_w[c];
                        }
                    }
                    let d: f64 = order[start..end]
                        .iter()
                        .filter(|&&p| records[p].is_event())
                        .map(|&p| class_w[classes[p]])
                        .sum();
                    times.push(t);
                    incs.push(((y - d) / y).max(0.0));
                    ys.push(y);
                    ds.push(d);
                }
                for &p in &order[start..end] {
                    count[classes[p]] -= 1;
                    members[classes[p]].pop();
                }
            }
        }
        None => {
            for (start, end) in tie_runs(records, &order) {
                let t = records[order[start]].time();
                if !order[start..end].iter().any(|&p| records[p].is_event()) {
                    continue;
                }
                let mut y = 0.0;
                let mut d = 0.0;
                for (pos, &p) in order.iter().enumerate().skip(start) {
                    let wt = checked_weight(records, p, w, t)?;
                    y += wt;
                    if pos < end && records[p].is_event() {
                        d += wt;
                    }
                }
                times.push(t);
                incs.push(((y - d) / y).max(0.0));
                ys.push(y);
                ds.push(d);
            }
        }
    }
    Ok(KmCurve::assemble(times, incs, ys, ds))
}

/// Censoring survival `S_0C(t)`: the KM of censoring times with the event
/// flag reversed. Subjects with an event at `t` stay in the censoring risk
/// set at `t`.
pub fn censoring_fit<O: Observation>(records: &[O]) -> Result<StepSurvival> {
    let reversed: Vec<Reversed<'_, O>> = records.iter().map(Reversed).collect();
    Ok(km_fit(&reversed)?.survival)
}

/// Maps subject keys to weight classes by exact equality of a per-subject score.
pub(crate) fn classes_by_bits(scores: &[f64]) -> Vec<usize> {
    let mut seen: HashMap<u64, usize> = HashMap::new();
    scores
        .iter()
        .map(|s| {
            let next = seen.len();
            *seen.entry(s.to_bits()).or_insert(next)
        })
        .collect()
}
