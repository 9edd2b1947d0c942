//! Synthetic two-arm study with risk-group heterogeneity, and its analytic truth.
//!
//! Event times are exponential with a hazard per (risk group, arm) cell;
//! censoring is an independent Weibull. Covariates are emitted as treatment
//! contrasts against the first group and first arm: one indicator per other
//! group, one per other arm, and one per (group, arm) interaction.

use rand::distributions::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::estimators::{Dataset, StudyRecord};
use crate::kv::KeyValues;
use crate::survmodel::{ExponentialDist, SurvivalFn, WeibullDist};

/// The bundled study definition: 1000 high- and 1000 low-risk subjects, half on
/// each arm, Weibull(scale 2, shape 5) censoring.
pub const DEFAULT_SPEC: &str = include_str!("../specs/default_study.conf");

#[derive(Debug, Clone, PartialEq)]
pub struct GroupSpec {
    pub label: String,
    /// Subjects per arm, aligned with [`StudySpec::arms`].
    pub sizes: Vec<usize>,
    /// Exponential event hazard per arm.
    pub hazards: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudySpec {
    /// First arm is the reference level.
    pub arms: Vec<String>,
    /// First group is the reference level.
    pub groups: Vec<GroupSpec>,
    pub censoring: WeibullDist,
    pub seed: u64,
}

impl Default for StudySpec {
    fn default() -> Self {
        Self::parse(DEFAULT_SPEC).expect("bundled study spec parses")
    }
}

impl StudySpec {
    /// Parses the `key = value` study format:
    ///
    /// ```text
    /// seed = 2020
    /// censoring.scale = 2
    /// censoring.shape = 5
    /// arms = active, placebo
    /// groups = highrisk, lowrisk
    /// size.highrisk.active = 500
    /// hazard.highrisk.active = 2.0
    /// ```
    ///
    /// An empty document describes a study with no subjects.
    pub fn parse(text: &str) -> Result<Self> {
        let kv = KeyValues::parse(text)?;
        let arms = kv.list("arms").unwrap_or_default();
        let group_labels = kv.list("groups").unwrap_or_default();
        let scale = kv.get::<f64>("censoring.scale")?.unwrap_or(2.0);
        let shape = kv.get::<f64>("censoring.shape")?.unwrap_or(5.0);
        let censoring = WeibullDist::new(scale, shape).map_err(|e| Error::parse("censoring.scale", e.to_string()))?;
        let seed = kv.get::<u64>("seed")?.unwrap_or(0);

        let mut groups = Vec::new();
        for g in &group_labels {
            let mut sizes = Vec::new();
            let mut hazards = Vec::new();
            for a in &arms {
                let size_key = format!("size.{g}.{a}");
                let hazard_key = format!("hazard.{g}.{a}");
                sizes.push(kv.get::<usize>(&size_key)?.ok_or_else(|| Error::parse(&size_key, "missing"))?);
                let h = kv.get::<f64>(&hazard_key)?.ok_or_else(|| Error::parse(&hazard_key, "missing"))?;
                if !(h > 0.0 && h.is_finite()) {
                    return Err(Error::parse(hazard_key, "hazard must be positive"));
                }
                hazards.push(h);
            }
            groups.push(GroupSpec {
                label: g.clone(),
                sizes,
                hazards,
            });
        }

        for key in kv.keys() {
            let known = matches!(key, "seed" | "censoring.scale" | "censoring.shape" | "arms" | "groups")
                || ["size.", "hazard."].iter().any(|prefix| {
                    key.strip_prefix(prefix)
                        .and_then(|rest| rest.split_once('.'))
                        .is_some_and(|(g, a)| group_labels.iter().any(|x| x == g) && arms.iter().any(|x| x == a))
                });
            if !known {
                return Err(Error::parse(key, "unknown key"));
            }
        }

        let spec = Self {
            arms,
            groups,
            censoring,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<()> {
        let mut labels: Vec<&str> = self.arms.iter().map(String::as_str).collect();
        labels.extend(self.groups.iter().map(|g| g.label.as_str()));
        let mut sorted = labels.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != labels.len() {
            return Err(Error::Argument("arm and group labels must be distinct".into()));
        }
        if !self.groups.is_empty() && self.arms.is_empty() {
            return Err(Error::Argument("groups declared without any arm".into()));
        }
        for g in &self.groups {
            if g.sizes.len() != self.arms.len() || g.hazards.len() != self.arms.len() {
                return Err(Error::Argument(format!("group '{}' must give one size and hazard per arm", g.label)));
            }
            if let Some(h) = g.hazards.iter().find(|h| !(**h > 0.0 && h.is_finite())) {
                return Err(Error::Argument(format!("group '{}' has non-positive hazard {h}", g.label)));
            }
        }
        Ok(())
    }

    pub fn covariate_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self.groups.iter().skip(1).map(|g| g.label.clone()).collect();
        names.extend(self.arms.iter().skip(1).cloned());
        for g in self.groups.iter().skip(1) {
            for a in self.arms.iter().skip(1) {
                names.push(format!("{}_x_{}", g.label, a));
            }
        }
        names
    }

    fn covariates(&self, group: usize, arm: usize) -> Vec<f64> {
        let (ng, na) = (self.groups.len().saturating_sub(1), self.arms.len().saturating_sub(1));
        let ind = |k: usize, level: usize| f64::from(u8::from(level == k + 1));
        let mut y: Vec<f64> = (0..ng).map(|k| ind(k, group)).collect();
        y.extend((0..na).map(|k| ind(k, arm)));
        for kg in 0..ng {
            for ka in 0..na {
                y.push(ind(kg, group) * ind(ka, arm));
            }
        }
        y
    }

    fn arm_index(&self, arm: &str) -> Result<usize> {
        self.arms
            .iter()
            .position(|a| a == arm)
            .ok_or_else(|| Error::Argument(format!("unknown arm '{arm}'")))
    }

    /// Name of the indicator column for `arm`, or `None` for the reference arm.
    pub fn arm_column(&self, arm: &str) -> Result<Option<String>> {
        Ok(match self.arm_index(arm)? {
            0 => None,
            _ => Some(arm.to_string()),
        })
    }
}

/// Simulates the study: per subject one exponential event draw and one
/// Weibull censoring draw, recording their minimum. Subjects are numbered
/// 1..N in group-major, arm-minor order.
pub fn generate_study(spec: &StudySpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut records = Vec::new();
    for (gi, group) in spec.groups.iter().enumerate() {
        for (ai, (&size, &hazard)) in group.sizes.iter().zip(&group.hazards).enumerate() {
            let event_dist = ExponentialDist::new(hazard)?;
            let covariates = spec.covariates(gi, ai);
            for _ in 0..size {
                let t = event_dist.quantile(rng.sample(Open01)).finite().expect("exponential draws are finite");
                let c = spec.censoring.quantile(rng.sample(Open01)).finite().expect("Weibull draws are finite");
                records.push(StudyRecord {
                    subject_id: (records.len() + 1).to_string(),
                    time: t.min(c),
                    event: t <= c,
                    covariates: covariates.clone(),
                });
            }
        }
    }
    Dataset::new(spec.covariate_names(), records)
}

/// Group-size-weighted mixture `Σ_g w_g · exp(−λ_{arm,g} t)` of the true
/// event-time survival within one arm.
pub fn true_marginal_survival(spec: &StudySpec, arm: &str, t: f64) -> Result<f64> {
    let a = spec.arm_index(arm)?;
    if !(t >= 0.0) {
        return Err(Error::Domain(format!("survival evaluated at t = {t}")));
    }
    let total: usize = spec.groups.iter().map(|g| g.sizes[a]).sum();
    if total == 0 {
        return Err(Error::Argument(format!("arm '{arm}' has no subjects")));
    }
    Ok(spec
        .groups
        .iter()
        .map(|g| g.sizes[a] as f64 / total as f64 * (-g.hazards[a] * t).exp())
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::km_fit;

    #[test]
    fn default_spec_layout() {
        let spec = StudySpec::default();
        assert_eq!(spec.covariate_names(), vec!["lowrisk", "placebo", "lowrisk_x_placebo"]);
        let data = generate_study(&spec).unwrap();
        assert_eq!(data.len(), 2000);
        for (cell, y) in [[0.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [1.0, 1.0, 1.0]].iter().enumerate() {
            let n = data.records.iter().filter(|r| r.covariates == y).count();
            assert_eq!(n, 500, "cell {cell}");
        }
        assert_eq!(data.records[0].subject_id, "1");
        assert_eq!(data.records[1999].subject_id, "2000");
    }

    #[test]
    fn zero_sizes_and_empty_spec() {
        let spec = StudySpec::parse("").unwrap();
        assert!(generate_study(&spec).unwrap().is_empty());
        let mut zero = StudySpec::default();
        for g in &mut zero.groups {
            g.sizes.iter_mut().for_each(|s| *s = 0);
        }
        let data = generate_study(&zero).unwrap();
        assert!(data.is_empty());
        assert_eq!(data.covariate_names.len(), 3);
    }

    #[test]
    fn malformed_spec_names_key() {
        for (text, key) in [
            ("arms = a\ngroups = g\nsize.g.a = 1\nhazard.g.a = x", "hazard.g.a"),
            ("arms = a\ngroups = g\nhazard.g.a = 1", "size.g.a"),
            ("seed = 1\ncolour = blue", "colour"),
            ("censoring.scale = -1", "censoring.scale"),
        ] {
            match StudySpec::parse(text) {
                Err(Error::Parse { key: k, .. }) => assert_eq!(k, key),
                other => panic!("{text:?}: {other:?}"),
            }
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let spec = StudySpec::default();
        assert_eq!(generate_study(&spec).unwrap(), generate_study(&spec).unwrap());
        let other = StudySpec { seed: spec.seed + 1, ..spec.clone() };
        assert_ne!(generate_study(&spec).unwrap(), generate_study(&other).unwrap());
    }

    #[test]
    fn truth_values() {
        let spec = StudySpec::default();
        assert_eq!(true_marginal_survival(&spec, "active", 0.0).unwrap(), 1.0);
        let active = 0.5 * (-0.05f64).exp() + 0.5 * (-2.0f64).exp();
        let placebo = 0.5 * (-0.2f64).exp() + 0.5 * (-2.0f64).exp();
        assert!((true_marginal_survival(&spec, "active", 1.0).unwrap() - active).abs() < 1e-15);
        assert!((active - 0.5433).abs() < 1e-4);
        assert!((true_marginal_survival(&spec, "placebo", 1.0).unwrap() - placebo).abs() < 1e-15);
        assert!((placebo - 0.4771).abs() < 1e-4);
        assert!(matches!(true_marginal_survival(&spec, "nope", 1.0), Err(Error::Argument(_))));
        let mut prev = 1.0;
        for k in 0..100 {
            let s = true_marginal_survival(&spec, "placebo", k as f64 * 0.05).unwrap();
            assert!(s <= prev);
            prev = s;
        }
    }

    #[test]
    fn high_risk_active_event_fraction() {
        let spec = StudySpec::default();
        let data = generate_study(&spec).unwrap();
        let cell: Vec<_> = data.records.iter().filter(|r| r.covariates == [0.0, 0.0, 0.0]).collect();
        let observed = cell.iter().filter(|r| r.event && r.time < 1.0).count() as f64 / cell.len() as f64;
        // P(T < 1, T <= C) = ∫_0^1 2 e^{-2t} S_C(t) dt, by Simpson's rule
        let n = 2000;
        let h = 1.0 / n as f64;
        let f = |t: f64| 2.0 * (-2.0 * t).exp() * spec.censoring.survival(t);
        let integral = (0..=n)
            .map(|k| {
                let w = if k == 0 || k == n { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
                w * f(k as f64 * h)
            })
            .sum::<f64>()
            * h
            / 3.0;
        assert!((observed - integral).abs() < 0.03, "{observed} vs {integral}");
    }

    #[test]
    fn uncensored_km_converges_to_mixture() {
        let spec = StudySpec {
            censoring: WeibullDist::new(1e6, 5.0).unwrap(),
            ..StudySpec::default()
        };
        let data = generate_study(&spec).unwrap();
        assert!(data.records.iter().all(|r| r.event));
        for (arm, col) in [("active", 0.0), ("placebo", 1.0)] {
            let recs: Vec<_> = data.records.iter().filter(|r| r.covariates[1] == col).cloned().collect();
            let km = km_fit(&recs).unwrap();
            let sup = (0..=600)
                .map(|k| k as f64 * 0.01)
                .map(|t| (km.survival.survival(t) - true_marginal_survival(&spec, arm, t).unwrap()).abs())
                .fold(0.0, f64::max);
            assert!(sup < 0.04, "{arm}: {sup}");
        }
    }
}
