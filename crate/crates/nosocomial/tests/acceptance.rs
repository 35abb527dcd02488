//! Acceptance suite: one line per criterion, non-zero exit if any fails.
//!
//! Numeric arguments select criteria (`cargo test --test acceptance -- 1 8`).

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use nosocomial_core::assess::{dic6, hidden_carriage, posterior_predictive_pvalue, DicConfig, PosteriorSummary, PredictiveConfig};
use nosocomial_core::mcmc::{run_chain, Chain, SamplerConfig};
use nosocomial_core::simulate::{
    generate_synthetic_ward, simulate_colonization, PrecautionPolicy, SimPolicy, SyntheticWardConfig, TestSchedule,
};
use nosocomial_core::timeline::build_timeline;
use nosocomial_core::types::{Interval, ScreeningTest};
use nosocomial_core::{
    log_augmented_likelihood, AdmissionClass, Augmentation, Colonization, ModelKind, PatientEpisode, PriorConfig, TestResult,
    Theta, WardData,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{Beta, ContinuousCDF};

type Outcome = Result<String, String>;

// ---------------------------------------------------------------- helpers

/// Two-sided Kolmogorov-Smirnov statistic of a sample against `cdf`.
fn ks_statistic(values: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic p-value of the KS statistic `d` for sample size `n`.
fn ks_pvalue(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=200 {
        let k = k as f64;
        let term = 2.0 * (-1f64).powf(k - 1.0) * (-2.0 * k * k * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-16 {
            break;
        }
    }
    sum.clamp(0.0, 1.0)
}

fn ks_test(values: &[f64], cdf: impl Fn(f64) -> f64) -> (f64, f64) {
    let d = ks_statistic(values, cdf);
    (d, ks_pvalue(d, values.len()))
}

fn beta_cdf(a: f64, b: f64) -> impl Fn(f64) -> f64 {
    let dist = Beta::new(a, b).unwrap();
    move |x| dist.cdf(x)
}

fn exp_cdf(rate: f64) -> impl Fn(f64) -> f64 {
    move |x| if x <= 0.0 { 0.0 } else { 1.0 - (-rate * x).exp() }
}

fn ward(length: f64, episodes: Vec<PatientEpisode>) -> WardData {
    WardData::new("W", length, episodes, 180.0).unwrap()
}

/// Augmentation given per episode id, in the ward's episode order.
fn aug_by_id(w: &WardData, states: &[(&str, Colonization)]) -> Augmentation {
    let status = w
        .episodes()
        .iter()
        .map(|e| states.iter().find(|(id, _)| *id == e.id).map_or(Colonization::Uncolonized, |s| s.1))
        .collect();
    let aug = Augmentation { status };
    aug.validate(w).unwrap();
    aug
}

const M1: (f64, f64, f64, f64, f64) = (0.78, 0.12, 0.0084, 0.0023, 0.0025);

fn theta_of(t: (f64, f64, f64, f64, f64), model: ModelKind) -> Theta {
    Theta::new(t.0, t.1, t.2, t.3, t.4, model)
}

fn sampler(model: ModelKind, seed: u64, iterations: u64) -> SamplerConfig {
    let mut c = SamplerConfig::new(model, seed);
    c.iterations = iterations;
    c.burn_in = 10_000;
    c.thin = 10;
    c
}

// ---------------------------------------------------------------- criteria

/// Likelihood against hand evaluation on small wards.
fn likelihood_oracle() -> Outcome {
    let (p, phi, b0, b1, b2) = (0.7, 0.2, 0.013, 0.041, 0.007);
    let full = Theta::new(p, phi, b0, b1, b2, ModelKind::Full);
    let nonlinear = Theta::new(p, phi, b0, b1, b2, ModelKind::NonLinear);
    let (lp, lq, lphi, lnphi) = (p.ln(), (1.0 - p).ln(), phi.ln(), (1.0 - phi).ln());
    let pos = ScreeningTest::positive;
    let neg = ScreeningTest::negative;
    use Colonization::{OnAdmission as Adm, OnWard};

    let mut cases: Vec<(&str, f64, f64)> = Vec::new();

    let w = ward(10.0, vec![PatientEpisode::new("a", "a", 0.0, 10.0)]);
    cases.push(("single uncolonized patient", log_augmented_likelihood(&w, &aug_by_id(&w, &[]), &full), lnphi - b0 * 10.0));

    let w = ward(10.0, vec![]);
    cases.push(("empty ward", log_augmented_likelihood(&w, &Augmentation { status: vec![] }, &full), 0.0));

    let w = ward(5.0, vec![PatientEpisode::new("a", "a", 0.0, 5.0).with_tests([pos(2.0)])]);
    cases.push(("imported and detected", log_augmented_likelihood(&w, &aug_by_id(&w, &[("a", Adm)]), &full), lphi + lp));

    let w = ward(10.0, vec![PatientEpisode::new("a", "a", 0.0, 10.0).with_tests([neg(1.0), pos(7.0)])]);
    cases.push((
        "on-ward colonization, true negative before",
        log_augmented_likelihood(&w, &aug_by_id(&w, &[("a", OnWard(4.0))]), &full),
        lnphi + lp + b0.ln() - 4.0 * b0,
    ));

    let w = ward(10.0, vec![PatientEpisode::new("a", "a", 0.0, 10.0).with_tests([neg(1.0), neg(6.0), pos(8.0)])]);
    cases.push((
        "false negative after colonization",
        log_augmented_likelihood(&w, &aug_by_id(&w, &[("a", OnWard(4.0))]), &full),
        lnphi + lp + lq + b0.ln() - 4.0 * b0,
    ));

    let a = PatientEpisode::new("a", "a", 0.0, 10.0).with_tests([pos(1.0)]);
    let b = PatientEpisode::new("b", "b", 2.0, 8.0);
    let w = ward(10.0, vec![a.clone(), b.clone()]);
    cases.push((
        "transmission from an unisolated carrier",
        log_augmented_likelihood(&w, &aug_by_id(&w, &[("a", Adm), ("b", OnWard(5.0))]), &full),
        lphi + lnphi + lp + (b0 + b1).ln() - 3.0 * (b0 + b1),
    ));

    let w = ward(10.0, vec![a.clone().with_precautions([Interval::new(3.0, 10.0)]), b]);
    cases.push((
        "transmission from an isolated carrier",
        log_augmented_likelihood(&w, &aug_by_id(&w, &[("a", Adm), ("b", OnWard(5.0))]), &full),
        lphi + lnphi + lp + (b0 + b2).ln() - (b0 + b1) * 1.0 - (b0 + b2) * 2.0,
    ));

    let eps = vec![
        PatientEpisode::new("a", "a", 0.0, 10.0).with_tests([pos(0.0)]),
        PatientEpisode::new("b", "b", 0.0, 10.0).with_tests([neg(5.0)]),
        PatientEpisode::new("c", "c", 1.0, 9.0),
    ];
    let w = ward(10.0, eps);
    let aug = aug_by_id(&w, &[("a", Adm), ("b", Adm)]);
    let base = 2.0 * lphi + lnphi + lp + lq;
    cases.push(("two carriers, full rate", log_augmented_likelihood(&w, &aug, &full), base - 8.0 * (b0 + 2.0 * b1)));
    cases.push(("two carriers, presence rate", log_augmented_likelihood(&w, &aug, &nonlinear), base - 8.0 * (b0 + b1)));

    let eps = vec![
        PatientEpisode::new("p#1", "p", 0.0, 3.0).with_tests([pos(1.0)]),
        PatientEpisode::new("p#2", "p", 5.0, 9.0).with_tests([neg(6.0)]).with_class(AdmissionClass::ColonizedOnReadmission),
        PatientEpisode::new("q", "q", 4.0, 10.0),
    ];
    let w = ward(10.0, eps);
    let aug = aug_by_id(&w, &[("p#1", Adm), ("p#2", Adm)]);
    cases.push((
        "re-admitted carrier",
        log_augmented_likelihood(&w, &aug, &full),
        lphi + lnphi + lp + lq - (b0 * 1.0 + (b0 + b1) * 4.0 + b0 * 1.0),
    ));

    let w = ward(10.0, vec![PatientEpisode::new("a", "a", 0.0, 4.0), PatientEpisode::new("b", "b", 4.0, 10.0)]);
    cases.push((
        "discharge and admission at one instant",
        log_augmented_likelihood(&w, &aug_by_id(&w, &[("a", Adm), ("b", OnWard(6.0))]), &full),
        lphi + lnphi + b0.ln() - 2.0 * b0,
    ));

    let w = ward(
        10.0,
        vec![
            PatientEpisode::new("a", "a", 0.0, 10.0).with_precautions([Interval::new(5.0, 10.0)]),
            PatientEpisode::new("b", "b", 0.0, 10.0),
        ],
    );
    cases.push((
        "colonization at the instant precautions start",
        log_augmented_likelihood(&w, &aug_by_id(&w, &[("a", Adm), ("b", OnWard(5.0))]), &full),
        lphi + lnphi + (b0 + b1).ln() - 5.0 * (b0 + b1),
    ));

    let w = ward(
        10.0,
        vec![
            PatientEpisode::new("a", "a", 0.0, 10.0).with_precautions([Interval::new(0.0, 5.0)]),
            PatientEpisode::new("b", "b", 0.0, 10.0),
        ],
    );
    cases.push((
        "colonization at the instant precautions end",
        log_augmented_likelihood(&w, &aug_by_id(&w, &[("a", Adm), ("b", OnWard(5.0))]), &full),
        lphi + lnphi + (b0 + b1).ln() - 5.0 * (b0 + b2),
    ));

    let no_bg = Theta::new(p, phi, 0.0, b1, b2, ModelKind::NoBackground);
    let w = ward(10.0, vec![PatientEpisode::new("a", "a", 0.0, 10.0)]);
    cases.push((
        "zero rate at an acquisition",
        log_augmented_likelihood(&w, &aug_by_id(&w, &[("a", OnWard(3.0))]), &no_bg),
        f64::NEG_INFINITY,
    ));

    let mut worst: f64 = 0.0;
    for (name, got, want) in &cases {
        let err = if got == want { 0.0 } else { (got - want).abs() };
        if !(err <= 1e-12) {
            return Err(format!("{name}: got {got}, hand value {want}"));
        }
        worst = worst.max(err);
    }
    Ok(format!("{} instances, max abs error {worst:.1e}", cases.len()))
}

/// Simulated colonization times of a lone patient follow the truncated exponential law.
fn poisson_consistency() -> Outcome {
    let (rate, stay) = (0.15, 10.0);
    let w = ward(stay, vec![PatientEpisode::new("a", "a", 0.0, stay)]);
    let theta = Theta::new(0.5, 0.0, rate, 0.0, 0.0, ModelKind::Full);
    let policy = SimPolicy { tests: TestSchedule::ReplayObserved, precautions: PrecautionPolicy::ReplayObserved };
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let n = 100_000;
    let mut times = Vec::new();
    for _ in 0..n {
        let sim = simulate_colonization(&w, &theta, &policy, &mut rng).map_err(|e| e.to_string())?;
        match sim.truth.status[0] {
            Colonization::OnWard(c) => times.push(c),
            Colonization::Uncolonized => {}
            Colonization::OnAdmission => return Err("colonized on admission with phi = 0".into()),
        }
    }
    let mass = 1.0 - (-rate * stay).exp();
    let (d, pv) = ks_test(&times, |t| (1.0 - (-rate * t).exp()) / mass);
    let k = times.len() as f64;
    let z = (k - n as f64 * mass) / (n as f64 * mass * (1.0 - mass)).sqrt();
    let detail = format!("{} colonized of {n}, KS D={d:.4} p={pv:.3}, colonized-fraction z={z:.2}", times.len());
    if pv > 0.01 && z.abs() < 3.0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// With no patients the sampler draws from the prior.
fn prior_reproduction() -> Outcome {
    let w = WardData::new("empty", 30.0, vec![], 180.0).unwrap();
    let prior = PriorConfig { p_alpha: 2.0, p_beta: 5.0, phi_alpha: 3.0, phi_beta: 2.0, beta_rates: [1e-2; 3] };
    let mut cfg = SamplerConfig::new(ModelKind::Full, 3);
    cfg.iterations = 200_000;
    cfg.burn_in = 10_000;
    cfg.thin = 100;
    cfg.rw_sd = [150.0; 3];
    cfg.prior = prior;
    let samples = run_chain(&w, &cfg).map_err(|e| e.to_string())?;
    let mut report = Vec::new();
    let mut ok = true;
    let cdfs: [Box<dyn Fn(f64) -> f64>; 5] = [
        Box::new(beta_cdf(2.0, 5.0)),
        Box::new(beta_cdf(3.0, 2.0)),
        Box::new(exp_cdf(1e-2)),
        Box::new(exp_cdf(1e-2)),
        Box::new(exp_cdf(1e-2)),
    ];
    for (k, cdf) in cdfs.iter().enumerate() {
        let (_, pv) = ks_test(&samples.component(k), cdf);
        ok &= pv > 0.01;
        report.push(format!("{}={pv:.3}", ["p", "phi", "b0", "b1", "b2"][k]));
    }
    let detail = format!("{} draws, KS p-values {}", samples.draws.len(), report.join(" "));
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Redraws test results given the current colonization state.
fn resimulate_tests(frame: &WardData, aug: &Augmentation, p: f64, rng: &mut ChaCha8Rng) -> WardData {
    let episodes = frame
        .episodes()
        .iter()
        .zip(&aug.status)
        .map(|(e, s)| {
            let onset = match s {
                Colonization::Uncolonized => f64::INFINITY,
                Colonization::OnAdmission => e.admission,
                Colonization::OnWard(c) => *c,
            };
            let mut e = e.clone();
            for t in &mut e.tests {
                t.result = if t.time >= onset && rng.random::<f64>() < p { TestResult::Positive } else { TestResult::Negative };
            }
            e
        })
        .collect();
    frame.with_episodes(episodes).unwrap()
}

/// Alternating posterior updates and data redraws leave the prior invariant.
fn geweke() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for (model, seed) in [(ModelKind::Full, 11), (ModelKind::NonLinear, 13)] {
        let (pass, detail) = geweke_for(model, seed)?;
        ok &= pass;
        lines.push(format!("{}: {detail}", model.name()));
    }
    if ok {
        Ok(lines.join("; "))
    } else {
        Err(lines.join("; "))
    }
}

fn geweke_for(model: ModelKind, seed: u64) -> Result<(bool, String), String> {
    let weekly = |a: f64, d: f64| -> Vec<ScreeningTest> {
        let mut t = a;
        let mut out = Vec::new();
        while t <= d {
            out.push(ScreeningTest::negative(t));
            t += 7.0;
        }
        out
    };
    let spec = [(0.0, 12.0), (3.0, 20.0), (8.0, 30.0), (15.0, 27.0), (0.0, 30.0)];
    let episodes = spec
        .iter()
        .enumerate()
        .map(|(k, &(a, d))| {
            let e = PatientEpisode::new(format!("e{k}"), format!("p{k}"), a, d).with_tests(weekly(a, d));
            match k {
                1 => e.with_precautions([Interval::new(12.0, 20.0)]),
                4 => e.with_precautions([Interval::new(10.0, 22.0)]),
                _ => e,
            }
        })
        .collect();
    let frame = ward(30.0, episodes);
    let prior = PriorConfig { p_alpha: 2.0, p_beta: 2.0, phi_alpha: 2.0, phi_beta: 3.0, beta_rates: [20.0, 10.0, 10.0] };
    let mut cfg = SamplerConfig::new(model, seed);
    cfg.prior = prior;
    cfg.rw_sd = [0.05, 0.1, 0.1];
    cfg.recompute_every = 0;
    cfg.moves_per_iteration = 3;
    let policy = SimPolicy { tests: TestSchedule::ReplayObserved, precautions: PrecautionPolicy::ReplayObserved };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sample_prior = |rng: &mut ChaCha8Rng| {
        use rand_distr::{Distribution, Exp};
        let b = |r: f64, rng: &mut ChaCha8Rng| Exp::new(r).unwrap().sample(rng);
        let beta = |a: f64, bb: f64, rng: &mut ChaCha8Rng| rand_distr::Beta::new(a, bb).unwrap().sample(rng);
        Theta::new(beta(2.0, 2.0, rng), beta(2.0, 3.0, rng), b(20.0, rng), b(10.0, rng), b(10.0, rng), model)
    };
    let mut theta = sample_prior(&mut rng);
    let sim = simulate_colonization(&frame, &theta, &policy, &mut rng).map_err(|e| e.to_string())?;
    let mut data = sim.ward;
    let mut aug = sim.truth;
    let mut chain_rng = ChaCha8Rng::seed_from_u64(seed + 1);

    let rounds = 2_000_000;
    let thin = 200;
    let mut draws: [Vec<f64>; 5] = Default::default();
    for r in 0..rounds {
        let mut chain = Chain::from_state(&data, cfg.clone(), theta, aug, chain_rng).map_err(|e| e.to_string())?;
        chain.step();
        let (t, a, g) = chain.into_parts();
        theta = t;
        aug = a;
        chain_rng = g;
        data = resimulate_tests(&data, &aug, theta.p, &mut rng);
        if r % thin == 0 {
            for (k, v) in [theta.p, theta.phi, theta.beta0, theta.beta1, theta.beta2].into_iter().enumerate() {
                draws[k].push(v);
            }
        }
    }
    let cdfs: [Box<dyn Fn(f64) -> f64>; 5] = [
        Box::new(beta_cdf(2.0, 2.0)),
        Box::new(beta_cdf(2.0, 3.0)),
        Box::new(exp_cdf(20.0)),
        Box::new(exp_cdf(10.0)),
        Box::new(exp_cdf(10.0)),
    ];
    let mut ok = true;
    let mut report = Vec::new();
    for (k, cdf) in cdfs.iter().enumerate() {
        let (_, pv) = ks_test(&draws[k], cdf);
        ok &= pv > 0.01;
        report.push(format!("{}={pv:.3}", ["p", "phi", "b0", "b1", "b2"][k]));
    }
    Ok((ok, format!("{} draws, KS p-values {}", draws[0].len(), report.join(" "))))
}

/// Credible intervals from 2e5-iteration fits cover the generating values.
fn recovery() -> Outcome {
    let truth = theta_of(M1, ModelKind::Full);
    let t = [truth.p, truth.phi, truth.beta0, truth.beta1, truth.beta2];
    let mut covered = [0usize; 5];
    let mut episodes = 0;
    let wards = 10;
    for i in 0..wards {
        let mut cfg = SyntheticWardConfig::new(truth, 500 + i);
        cfg.ward_id = format!("R{i}");
        let syn = generate_synthetic_ward(&cfg).map_err(|e| e.to_string())?;
        episodes += syn.ward.len();
        let samples = run_chain(&syn.ward, &sampler(ModelKind::Full, 900 + i, 200_000)).map_err(|e| e.to_string())?;
        for k in 0..5 {
            let s = PosteriorSummary::from_values(&samples.component(k)).map_err(|e| e.to_string())?;
            covered[k] += usize::from(s.covers(t[k]));
        }
    }
    let detail = format!(
        "mean {} episodes/ward; covered p {}/10 phi {}/10 b0 {}/10 b1 {}/10 b2 {}/10",
        episodes / wards as usize,
        covered[0],
        covered[1],
        covered[2],
        covered[3],
        covered[4]
    );
    if covered[0] >= 9 && covered[1] >= 9 && covered[2..].iter().all(|&c| c >= 8) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn dic_for(ward: &WardData, model: ModelKind, seed: u64, iterations: u64) -> Result<f64, String> {
    let s = sampler(model, seed, iterations);
    let samples = run_chain(ward, &s).map_err(|e| e.to_string())?;
    dic6(ward, &samples, &s, &DicConfig::default()).map(|d| d.dic6).map_err(|e| e.to_string())
}

/// Share of study time with at least three unisolated carriers.
fn share_c_at_least(ward: &WardData, aug: &Augmentation, k: u32) -> f64 {
    let tl = build_timeline(ward, aug);
    let b = tl.breaks();
    let mut t = 0.0;
    for (i, c) in tl.counts().iter().enumerate() {
        if c.colonized >= k {
            t += b[i + 1] - b[i];
        }
    }
    t / ward.study_length
}

/// DIC₆ picks the generating rate shape.
fn dic_discrimination() -> Outcome {
    let reps = 20;
    let full_truth = Theta::new(0.78, 0.12, 0.0084, 0.02, 0.002, ModelKind::Full);
    let mut full_wins = 0;
    for i in 0..reps {
        let syn = generate_synthetic_ward(&SyntheticWardConfig::new(full_truth, 1000 + i)).map_err(|e| e.to_string())?;
        let d: Vec<f64> =
            ModelKind::ALL.iter().map(|&m| dic_for(&syn.ward, m, 2000 + i, 100_000)).collect::<Result<_, _>>()?;
        full_wins += usize::from(d[0].min(d[1]) < d[2]);
    }
    // Longer stays with full weekly screening, so on-ward acquisitions are observed.
    let nl_truth = Theta::new(0.78, 0.1, 0.002, 0.1, 0.03, ModelKind::NonLinear);
    let mut nl_wins = 0;
    let mut share = 0.0;
    for i in 0..reps {
        let mut cfg = SyntheticWardConfig::new(nl_truth, 3000 + i);
        cfg.policy.precautions = PrecautionPolicy::OnDetection { delay: 1.0 };
        cfg.policy.tests = TestSchedule::AdmissionPlusWeekly { compliance: 1.0 };
        cfg.arrival_rate = 1.2;
        cfg.los_median = 6.0;
        cfg.los_sd = 7.2;
        let syn = generate_synthetic_ward(&cfg).map_err(|e| e.to_string())?;
        share += share_c_at_least(&syn.ward, &syn.truth, 3) / reps as f64;
        let d: Vec<f64> =
            ModelKind::ALL.iter().map(|&m| dic_for(&syn.ward, m, 4000 + i, 500_000)).collect::<Result<_, _>>()?;
        nl_wins += usize::from(d[2] < d[0].min(d[1]));
    }
    let detail = format!(
        "full data: full/no-background preferred {full_wins}/{reps}; presence data (C>=3 for {:.0}% of time): presence model preferred {nl_wins}/{reps}",
        100.0 * share
    );
    if full_wins * 10 >= 7 * reps as usize && nl_wins * 10 >= 7 * reps as usize {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Self-simulated wards are not flagged by the predictive check.
fn ppp_calibration() -> Outcome {
    let truth = theta_of(M1, ModelKind::Full);
    let reps = 20;
    let mut inside = 0;
    let mut values = Vec::new();
    for i in 0..reps {
        let syn = generate_synthetic_ward(&SyntheticWardConfig::new(truth, 5000 + i)).map_err(|e| e.to_string())?;
        let samples = run_chain(&syn.ward, &sampler(ModelKind::Full, 6000 + i, 100_000)).map_err(|e| e.to_string())?;
        let check = posterior_predictive_pvalue(&syn.ward, &samples, &PredictiveConfig::new(7000 + i)).map_err(|e| e.to_string())?;
        inside += usize::from((0.05..=0.95).contains(&check.p_value));
        values.push(format!("{:.2}", check.p_value));
    }
    let detail = format!("{inside}/{reps} in [0.05, 0.95]: {}", values.join(" "));
    if inside >= 18 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Hand case and bounds of the hidden-carriage shares.
fn hidden_carriage_check() -> Outcome {
    let e = PatientEpisode::new("a", "a", 0.0, 10.0)
        .with_tests([ScreeningTest::positive(4.0)])
        .with_precautions([Interval::new(6.0, 10.0)]);
    let w = ward(10.0, vec![e]);
    let h = hidden_carriage(&w, &Augmentation { status: vec![Colonization::OnWard(2.0)] }).ok_or("no carriage")?;
    if (h.p_hidden, h.p_wait) != (0.5, 0.25) {
        return Err(format!("hand case gave ({}, {})", h.p_hidden, h.p_wait));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut checked = 0;
    let mut max_wait: f64 = 0.0;
    let mut seed = 0;
    while checked < 10_000 {
        let theta = Theta::new(0.7, 0.2, 0.01, 0.03, 0.01, ModelKind::Full);
        let mut cfg = SyntheticWardConfig::new(theta, seed);
        cfg.study_days = 60;
        cfg.readmission_probability = 0.3;
        seed += 1;
        let w = generate_synthetic_ward(&cfg).map_err(|e| e.to_string())?.ward;
        for _ in 0..100 {
            let status = w
                .episodes()
                .iter()
                .map(|e| {
                    if e.class == AdmissionClass::ColonizedOnReadmission {
                        return Colonization::OnAdmission;
                    }
                    let latest = e.first_positive().unwrap_or(e.discharge);
                    let u: f64 = rng.random();
                    if e.first_positive().is_none() && u < 0.4 {
                        Colonization::Uncolonized
                    } else if u < 0.6 || latest <= e.admission {
                        Colonization::OnAdmission
                    } else {
                        let c = e.admission + (latest - e.admission) * rng.random::<f64>();
                        if c > e.admission && c < e.discharge {
                            Colonization::OnWard(c)
                        } else {
                            Colonization::OnAdmission
                        }
                    }
                })
                .collect();
            let aug = Augmentation { status };
            aug.validate(&w).map_err(|e| e.to_string())?;
            if let Some(h) = hidden_carriage(&w, &aug) {
                if !(0.0..=1.0).contains(&h.p_wait) || !(0.0..=1.0).contains(&h.p_hidden) {
                    return Err(format!("out of range: {h:?}"));
                }
                max_wait = max_wait.max(h.p_wait);
            }
            checked += 1;
        }
    }
    Ok(format!("hand case (0.5, 0.25); {checked} random augmentations, max P_wait {max_wait:.3}"))
}

const BIN: &str = env!("CARGO_BIN_EXE_nosocomial");

fn cli(args: &[&str], out_dir: Option<&Path>) -> Result<(), String> {
    let mut cmd = Command::new(BIN);
    cmd.args(args).env("NOSOCOMIAL_LOG", "warn");
    match out_dir {
        Some(d) => cmd.env("NOSOCOMIAL_OUTPUT_DIR", d),
        None => cmd.env_remove("NOSOCOMIAL_OUTPUT_DIR"),
    };
    let o = cmd.output().map_err(|e| e.to_string())?;
    if o.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?} failed: {}", String::from_utf8_lossy(&o.stderr)))
    }
}

fn tree(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(root).unwrap().display().to_string(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

/// Repeated runs of one configuration write identical bytes.
fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let sim = dir.path().join("sim.toml");
    std::fs::write(
        &sim,
        "seed = 17\n[synthetic]\np = 0.78\nphi = 0.12\nbeta0 = 0.0084\nbeta1 = 0.0023\nbeta2 = 0.0025\nstudy_days = 150\n",
    )
    .unwrap();
    cli(&["simulate", "--config", sim.to_str().unwrap(), "--out", dir.path().join("data").to_str().unwrap()], None)?;
    let fit = dir.path().join("fit.toml");
    std::fs::write(
        &fit,
        r#"seed = 23
[data]
dir = "data/S01"
start = "2000-01-01"
end = "2000-05-30"
[sampler]
iterations = 20000
burn_in = 2000
thin = 10
snapshot_stride = 5
progress_every = 0
[assess]
replicates = 200
trajectory_sims = 200
dic_iterations = 5000
dic_burn_in = 500
"#,
    )
    .unwrap();
    let fit = fit.to_str().unwrap();
    let runs = [dir.path().join("run1"), dir.path().join("run2")];
    for (run, jobs) in runs.iter().zip(["1", "3"]) {
        cli(&["fit", "--config", fit, "--jobs", jobs], Some(run))?;
        cli(&["assess", "--config", fit, "--runs", run.to_str().unwrap(), "--jobs", jobs], Some(run))?;
    }
    let (a, b) = (tree(&runs[0]), tree(&runs[1]));
    if a.is_empty() {
        return Err("no outputs written".into());
    }
    for ((na, ba), (nb, bb)) in a.iter().zip(&b) {
        if na != nb || ba != bb {
            return Err(format!("{na} differs from {nb}"));
        }
    }
    if a.len() != b.len() {
        return Err(format!("{} files vs {}", a.len(), b.len()));
    }
    let samples = a.iter().filter(|(n, _)| n.ends_with("samples.csv")).count();
    let reports = a.iter().filter(|(n, _)| n.ends_with("report.json")).count();
    Ok(format!("{} files identical across runs with 1 and 3 workers ({samples} sample files, {reports} reports)", a.len()))
}

/// Incrementally maintained likelihood against full recomputation.
fn incremental_vs_full() -> Outcome {
    let truth = theta_of(M1, ModelKind::Full);
    let syn = generate_synthetic_ward(&SyntheticWardConfig::new(truth, 77)).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    let moves = 100_000;
    for (k, model) in ModelKind::ALL.into_iter().enumerate() {
        let mut cfg = SamplerConfig::new(model, 78 + k as u64);
        cfg.recompute_every = 0;
        let mut chain = Chain::new(&syn.ward, cfg).map_err(|e| e.to_string())?;
        for _ in 0..moves / 3 + 1 {
            chain.step();
            let (inc, full) = (chain.log_likelihood(), chain.full_log_likelihood());
            let rel = if inc == full { 0.0 } else { (inc - full).abs() / full.abs() };
            if !(rel <= 1e-7) {
                return Err(format!("{}: incremental {inc} vs full {full}", model.name()));
            }
            worst = worst.max(rel);
        }
    }
    Ok(format!("{} episodes, {moves} moves across three models, max relative discrepancy {worst:.1e}", syn.ward.len()))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("likelihood micro-oracle", likelihood_oracle),
        ("Poisson-process consistency", poisson_consistency),
        ("no-data prior reproduction", prior_reproduction),
        ("Geweke joint-distribution test", geweke),
        ("parameter recovery", recovery),
        ("DIC6 discrimination", dic_discrimination),
        ("PPP calibration", ppp_calibration),
        ("P_hidden / P_wait", hidden_carriage_check),
        ("determinism", determinism),
        ("incremental vs full likelihood", incremental_vs_full),
    ];
    let args: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let selected: Vec<usize> = args.iter().filter_map(|a| a.parse().ok()).collect();
    if !args.is_empty() && selected.is_empty() && !args.iter().any(|a| "acceptance".contains(a.as_str())) {
        return ExitCode::SUCCESS;
    }
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let n = i + 1;
        if !selected.is_empty() && !selected.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {n:>2} PASS  {name} ({secs:.1}s): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {n:>2} FAIL  {name} ({secs:.1}s): {detail}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
