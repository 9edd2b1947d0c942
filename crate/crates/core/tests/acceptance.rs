//! Acceptance suite. Each test prints one PASS/FAIL line and then asserts.

use std::io::Write;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use ipoc_vpc::coxph::{ConvergenceOptions, PartialLikelihood};
use ipoc_vpc::estimators::{km_fit, weighted_km_fit, Dataset, StudyRecord};
use ipoc_vpc::survmodel::{ExponentialDist, SurvivalFn};
use ipoc_vpc::studygen::{generate_study, true_marginal_survival, StudySpec};
use ipoc_vpc::vpc::{
    fit_models, run_vpc_with_models, simulate_replicate_ipoc, Algorithm, FittedModels, IpocWeights, ReplicateRng,
    SimContext, Stream, VpcConfig, VpcResult, WeightForm,
};
use ipoc_vpc::cli::io::write_bands;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 2020;
const ARMS: [(&str, &str); 2] = [("active", "placebo=0"), ("placebo", "placebo=1")];

/// Large-sample limit of the follow-up-censored standard KM at t = 1 in the
/// active arm: `exp(−∫₀¹ h̃)` with `h̃(t) = Σ λ_g e^{−2λ_g t} / Σ e^{−2λ_g t}`,
/// λ ∈ {0.05, 2}, integrated by adaptive quadrature outside this crate.
const CENSORED_LIMIT_AT_1: f64 = 0.679394;
const TRUTH_ACTIVE_AT_1: f64 = 0.5433;

/// Written to the process stdout directly so the line shows even when the
/// test harness captures output of passing tests.
fn report(id: u32, name: &str, ok: bool, detail: &str) {
    let line = format!("[{}] criterion {id}: {name}: {detail}\n", if ok { "PASS" } else { "FAIL" });
    let _ = std::io::stdout().lock().write_all(line.as_bytes());
}

fn spec() -> &'static StudySpec {
    static SPEC: OnceLock<StudySpec> = OnceLock::new();
    SPEC.get_or_init(StudySpec::default)
}

fn study() -> &'static (Dataset, FittedModels) {
    static STUDY: OnceLock<(Dataset, FittedModels)> = OnceLock::new();
    STUDY.get_or_init(|| {
        let data = generate_study(spec()).unwrap();
        let models = fit_models(&data, None, &ConvergenceOptions::default()).unwrap();
        (data, models)
    })
}

fn config() -> VpcConfig {
    VpcConfig {
        replicates: 500,
        seed: SEED,
        stratify_by: Some("placebo".into()),
        ..VpcConfig::default()
    }
}

fn vpc(algorithm: Algorithm) -> &'static (VpcResult, Duration) {
    static CELLS: [OnceLock<(VpcResult, Duration)>; 4] = [OnceLock::new(), OnceLock::new(), OnceLock::new(), OnceLock::new()];
    let k = Algorithm::ALL.iter().position(|a| *a == algorithm).unwrap();
    CELLS[k].get_or_init(|| {
        let (data, models) = study();
        let start = Instant::now();
        let result = run_vpc_with_models(data, models, algorithm, &config()).unwrap();
        (result, start.elapsed())
    })
}

fn arm_records<'a>(data: &'a Dataset, arm: &str) -> Vec<&'a StudyRecord> {
    let j = data.column("placebo").unwrap();
    let want = if arm == "placebo" { 1.0 } else { 0.0 };
    data.records.iter().filter(|r| r.covariates[j] == want).collect()
}

fn truth(arm: &str, t: f64) -> f64 {
    true_marginal_survival(spec(), arm, t).unwrap()
}

/// Grid points where at least 5% of the arm's subjects are still at risk.
fn at_risk_range(data: &Dataset, arm: &str, grid: &[f64]) -> Vec<usize> {
    let recs = arm_records(data, arm);
    let n = recs.len() as f64;
    (0..grid.len())
        .filter(|&g| recs.iter().filter(|r| r.time >= grid[g]).count() as f64 >= 0.05 * n)
        .collect()
}

fn stratum<'a>(result: &'a VpcResult, label: &str) -> &'a ipoc_vpc::vpc::StratumResult {
    result.strata.iter().find(|s| s.label == label).unwrap()
}

fn random_records(rng: &mut ChaCha8Rng, n: usize) -> Vec<StudyRecord> {
    (0..n)
        .map(|i| StudyRecord {
            subject_id: i.to_string(),
            // coarse times so ties are common
            time: f64::from(rng.gen_range(0..12u32)) * 0.25,
            event: rng.gen_bool(0.6),
            covariates: vec![],
        })
        .collect()
}

#[test]
fn criterion_1_estimator_correctness() {
    let start = Instant::now();
    let hand = vec![(1.0, true), (2.0, false), (3.0, true)];
    let km = km_fit(&hand).unwrap();
    let steps: Vec<f64> = [0.5, 1.0, 2.0, 3.0].iter().map(|&t| km.survival.eval_grid(&[t])[0]).collect();
    let hand_ok = steps == vec![1.0, 2.0 / 3.0, 2.0 / 3.0, 0.0];

    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut identical = 0;
    for _ in 0..100 {
        let n = rng.gen_range(1..=50);
        let recs = random_records(&mut rng, n);
        let a = km_fit(&recs).unwrap();
        let b = weighted_km_fit(&recs, &|_: usize, _: f64| 1.0).unwrap();
        let same = a.event_times == b.event_times
            && a.increments.iter().zip(&b.increments).all(|(x, y)| x.to_bits() == y.to_bits())
            && a.survival == b.survival;
        identical += usize::from(same);
    }
    let elapsed = start.elapsed();
    let ok = hand_ok && identical == 100 && elapsed < Duration::from_secs(1);
    report(
        1,
        "estimator correctness",
        ok,
        &format!("hand example {steps:?}, unit-weight identical {identical}/100, {elapsed:.2?}"),
    );
    assert!(ok);
}

#[test]
fn criterion_2_weight_form_equivalence() {
    let start = Instant::now();
    let (data, models) = study();
    let ctx = SimContext::new(data, &models.event_model, &models.censoring_model).unwrap();
    let full = IpocWeights::new(&ctx, WeightForm::Full, None);
    let simple = IpocWeights::new(&ctx, WeightForm::Simplified, None);
    let subjects: Vec<usize> = (0..data.len()).collect();
    let mut worst = 0.0f64;
    let mut shapes_agree = true;
    for j in 0..50 {
        let mut rng = ReplicateRng::new(SEED, Stream::Simulation, j);
        let sims = simulate_replicate_ipoc(&ctx, &subjects, &mut rng).unwrap();
        let a = weighted_km_fit(&sims, &full).unwrap();
        let b = weighted_km_fit(&sims, &simple).unwrap();
        shapes_agree &= a.event_times == b.event_times;
        for (x, y) in a.increments.iter().zip(&b.increments) {
            worst = worst.max((x - y).abs());
        }
    }
    let elapsed = start.elapsed();
    let ok = shapes_agree && worst <= 1e-12 && elapsed < Duration::from_secs(10);
    report(
        2,
        "weight-form equivalence",
        ok,
        &format!("max increment difference {worst:.3e} over 50 replicates, {elapsed:.2?}"),
    );
    assert!(ok);
}

#[test]
fn criterion_3_cox_recovery() {
    let start = Instant::now();
    let (_, models) = study();
    let m = &models.event_model;
    let idx = |n: &str| m.covariate_names().iter().position(|c| c == n).unwrap();
    let b = m.beta();
    let (lr, pl, ix) = (b[idx("lowrisk")], b[idx("placebo")], b[idx("lowrisk_x_placebo")]);
    let hr_low_vs_high = lr.exp();
    let hr_placebo_low = (pl + ix).exp();
    let hr_placebo_high = pl.exp();

    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let records: Vec<StudyRecord> = (0..40)
        .map(|i| StudyRecord {
            subject_id: i.to_string(),
            time: f64::from(rng.gen_range(1..20u32)) * 0.1,
            event: rng.gen_bool(0.7),
            covariates: vec![rng.gen_range(-1.0..1.0), f64::from(u8::from(rng.gen_bool(0.5))), rng.gen_range(0.0..2.0)],
        })
        .collect();
    let small = Dataset::new(vec!["a".into(), "b".into(), "c".into()], records).unwrap();
    let pl_fn = PartialLikelihood::new(&small).unwrap();
    let h = 1e-5;
    let mut worst_rel = 0.0f64;
    for _ in 0..10 {
        let beta: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.5..1.5)).collect();
        let eval = pl_fn.evaluate(&beta);
        for k in 0..3 {
            let mut up = beta.clone();
            let mut dn = beta.clone();
            up[k] += h;
            dn[k] -= h;
            let fd = (pl_fn.log_likelihood(&up) - pl_fn.log_likelihood(&dn)) / (2.0 * h);
            let rel = (fd - eval.score[k]).abs() / eval.score[k].abs().max(1.0);
            worst_rel = worst_rel.max(rel);
        }
    }
    let elapsed = start.elapsed();
    let ok = (0.015..=0.040).contains(&hr_low_vs_high)
        && (3.0..=5.3).contains(&hr_placebo_low)
        && (0.85..=1.20).contains(&hr_placebo_high)
        && worst_rel < 1e-5
        && elapsed < Duration::from_secs(30);
    report(
        3,
        "Cox fit recovery",
        ok,
        &format!(
            "HR low/high {hr_low_vs_high:.4}, placebo/active low {hr_placebo_low:.3}, placebo/active high {hr_placebo_high:.3}, gradient rel err {worst_rel:.2e}, {elapsed:.2?}"
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_4_reference_vpc() {
    let (data, _) = study();
    let (result, elapsed) = vpc(Algorithm::Standard);
    let mut ok = *elapsed < Duration::from_secs(120);
    let mut detail = Vec::new();
    for (arm, label) in ARMS {
        let s = stratum(result, label);
        let end = arm_records(data, arm).iter().map(|r| r.time).fold(0.0, f64::max);
        let inside: Vec<bool> = (0..result.grid.len())
            .filter(|&g| result.grid[g] <= end)
            .map(|g| {
                let obs = s.observed.survival.eval_grid(&[result.grid[g]])[0];
                s.band.lower[g] <= obs && obs <= s.band.upper[g]
            })
            .collect();
        let frac = inside.iter().filter(|b| **b).count() as f64 / inside.len() as f64;
        ok &= frac >= 0.85;
        detail.push(format!("{arm} {:.1}% inside", 100.0 * frac));
    }
    report(4, "reference VPC coverage", ok, &format!("{}, {elapsed:.2?}", detail.join(", ")));
    assert!(ok);
}

#[test]
fn criterion_5_bias_demonstration() {
    let (data, models) = study();
    // t = 1 is evaluated on its own grid; the [0.5, 1.5] check uses the default grid
    let mut at_one = config();
    at_one.grid = Some(vec![0.0, 1.0]);
    let one = run_vpc_with_models(data, models, Algorithm::StandardCensored, &at_one).unwrap();
    let mean_at_1 = stratum(&one, "placebo=0").band.mean[1];

    let (result, _) = vpc(Algorithm::StandardCensored);
    let s = stratum(result, "placebo=0");
    let window: Vec<usize> = (0..result.grid.len())
        .filter(|&g| (0.5..=1.5).contains(&result.grid[g]))
        .collect();
    let above = window
        .iter()
        .filter(|&&g| s.band.mean[g] > s.observed.survival.eval_grid(&[result.grid[g]])[0])
        .count();
    let frac = above as f64 / window.len() as f64;
    let ok = mean_at_1 - TRUTH_ACTIVE_AT_1 > 0.05 && frac >= 0.90;
    report(
        5,
        "follow-up censoring bias",
        ok,
        &format!(
            "mean at t=1 {mean_at_1:.4} vs truth {TRUTH_ACTIVE_AT_1} (limit {CENSORED_LIMIT_AT_1}), mean above observed at {:.1}% of [0.5,1.5]",
            100.0 * frac
        ),
    );
    assert!(ok);
}

fn max_bias(result: &VpcResult, data: &Dataset, arm: &str, label: &str) -> f64 {
    let s = stratum(result, label);
    at_risk_range(data, arm, &result.grid)
        .into_iter()
        .map(|g| (s.band.mean[g] - truth(arm, result.grid[g])).abs())
        .fold(0.0, f64::max)
}

#[test]
fn criterion_6_ipoc_correction() {
    let (data, _) = study();
    let (result, elapsed) = vpc(Algorithm::Ipoc);
    let mut ok = true;
    let mut detail = Vec::new();
    for (arm, label) in ARMS {
        let bias = max_bias(result, data, arm, label);
        ok &= bias < 0.03;
        detail.push(format!("{arm} max |mean - truth| {bias:.4}"));
    }
    report(6, "IPoC bias correction", ok, &format!("{}, {elapsed:.2?}", detail.join(", ")));
    assert!(ok);
}

#[test]
fn criterion_7_variability_restoration() {
    let (data, _) = study();
    let (reference, _) = vpc(Algorithm::Standard);
    let (ipoc, _) = vpc(Algorithm::Ipoc);
    let (marginal, elapsed) = vpc(Algorithm::Marginal);
    let mut ok = true;
    let mut detail = Vec::new();
    for (arm, label) in ARMS {
        let w_ref = stratum(reference, label).band.mean_width();
        let w_ipoc = stratum(ipoc, label).band.mean_width();
        let w_marg = stratum(marginal, label).band.mean_width();
        let ratio = w_marg / w_ref;
        let bias = max_bias(marginal, data, arm, label);
        ok &= (0.75..=1.25).contains(&ratio) && bias < 0.03 && w_ipoc > w_marg;
        detail.push(format!(
            "{arm} width ratio {ratio:.3}, bias {bias:.4}, ipoc width {w_ipoc:.4} > marginal {w_marg:.4}"
        ));
    }
    report(7, "marginal variability", ok, &format!("{}, {elapsed:.2?}", detail.join("; ")));
    assert!(ok);
}

#[test]
fn criterion_8_determinism() {
    let (data, models) = study();
    let csv_for = |algorithm, workers| {
        let cfg = VpcConfig {
            replicates: 40,
            workers: Some(workers),
            ..config()
        };
        let result = run_vpc_with_models(data, models, algorithm, &cfg).unwrap();
        let mut buf = Vec::new();
        write_bands(&result, &mut buf).unwrap();
        buf
    };
    let mut ok = true;
    for algorithm in Algorithm::ALL {
        let one = csv_for(algorithm, 1);
        ok &= one == csv_for(algorithm, 1) && one == csv_for(algorithm, 4);
    }
    report(8, "determinism", ok, "band CSVs byte-identical across repeats and 1 vs 4 workers, all algorithms");
    assert!(ok);
}

#[test]
fn criterion_9_property_suite() {
    // Every invariant also runs as a unit or proptest inside the library;
    // here they are rechecked end to end on the generated study.
    let (data, models) = study();
    let mut failed = Vec::new();

    let observed = km_fit(&data.records).unwrap();
    let v = observed.survival.values();
    if !(v.windows(2).all(|w| w[1] <= w[0]) && v.iter().all(|x| (0.0..=1.0).contains(x))) {
        failed.push("KM monotone in [0,1]");
    }
    let cens = models.censoring_model.values();
    if !(cens.windows(2).all(|w| w[1] <= w[0]) && cens.iter().all(|x| (0.0..=1.0).contains(x))) {
        failed.push("censoring survival monotone in [0,1]");
    }

    // ties: coarse times pool every simultaneous event into one increment
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let recs = random_records(&mut rng, 50);
    let km = km_fit(&recs).unwrap();
    let pooled = km.event_times.iter().zip(&km.events).all(|(&t, &d)| {
        d == recs.iter().filter(|r| r.event && r.time == t).count() as f64
    });
    if !pooled {
        failed.push("tie pooling");
    }

    // rescaling weights at one event time leaves that increment unchanged
    let base = |i: usize, t: f64| 1.0 + (i % 5) as f64 + t;
    let scaled = |i: usize, t: f64| base(i, t) * (1.0 + 10.0 * t);
    let a = weighted_km_fit(&recs, &base).unwrap();
    let b = weighted_km_fit(&recs, &scaled).unwrap();
    if a.increments.iter().zip(&b.increments).any(|(x, y)| (x - y).abs() > 1e-12) {
        failed.push("weight rescaling invariance");
    }

    // empirical CDF of inverse-transform draws
    let dist = ExponentialDist::new(2.0).unwrap();
    let draws: Vec<f64> = (0..10_000)
        .map(|_| dist.sample_event_time(rng.sample(rand::distributions::Open01)).unwrap().finite().unwrap())
        .collect();
    for t in [0.1, 0.35, 0.7, 1.5] {
        let ecdf = draws.iter().filter(|&&x| x <= t).count() as f64 / draws.len() as f64;
        if (ecdf - (1.0 - dist.survival_at(t).unwrap())).abs() > 0.02 {
            failed.push("empirical CDF sampling");
            break;
        }
    }

    // Breslow at beta = 0 is Nelson-Aalen
    let lik = PartialLikelihood::new(data).unwrap();
    let na = lik.breslow(&[0.0; 3]);
    let mut cum = 0.0;
    let exact = observed.event_times.iter().enumerate().all(|(r, &t)| {
        cum += observed.events[r] / observed.at_risk[r];
        na.at(t) == cum
    });
    if !exact || !na.values.windows(2).all(|w| w[1] >= w[0]) {
        failed.push("Nelson-Aalen at beta = 0");
    }

    let ok = failed.is_empty();
    let detail = if ok { "monotonicity, range, ties, rescaling, sampling CDF, Nelson-Aalen".to_string() } else { format!("failed: {}", failed.join(", ")) };
    report(9, "property suite", ok, &detail);
    assert!(ok);
}
