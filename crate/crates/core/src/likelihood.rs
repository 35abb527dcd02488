//! Augmented likelihood π(y, c | θ), priors and the sufficient statistics the
//! sampler keeps up to date.
//!
//! ```text
//! log π(y, c | θ) = n_CA log φ + (n_A − n_CA) log(1 − φ)
//!                 + n_TP log p + n_FN log(1 − p)
//!                 + Σ_{j ∈ K} log λ(c_j−) − ∫ S(t) λ(t) dt
//! ```
//!
//! K holds the episodes colonized on the ward. Importations and re-admissions
//! contribute no rate factor. Combinatorial constants are dropped, so values are
//! comparable only between models sharing this convention.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::{beta_log_density, exp_log_density, ln, xlogy};
use crate::timeline::{build_timeline, HazardIntegrals, WardTimeline};
use crate::types::{AdmissionClass, Augmentation, Colonization, CountsSummary, ModelKind, TestResult, Theta, WardData};

/// Independent priors: Beta on `p` and `phi`, exponential (by rate) on each β.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PriorConfig {
    pub p_alpha: f64,
    pub p_beta: f64,
    pub phi_alpha: f64,
    pub phi_beta: f64,
    /// Exponential rates for β₀, β₁, β₂ (prior mean is `1 / rate`).
    pub beta_rates: [f64; 3],
}

impl PriorConfig {
    /// Uniform priors on `p`, `phi`; Exp(1e-6) on the rates, except Exp(1e6) on
    /// β₀ for the no-background model.
    pub fn default_for(model: ModelKind) -> Self {
        let beta0_rate = match model {
            ModelKind::NoBackground => 1e6,
            ModelKind::Full | ModelKind::NonLinear => 1e-6,
        };
        Self { p_alpha: 1.0, p_beta: 1.0, phi_alpha: 1.0, phi_beta: 1.0, beta_rates: [beta0_rate, 1e-6, 1e-6] }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.p_alpha, self.p_beta, self.phi_alpha, self.phi_beta, self.beta_rates[0], self.beta_rates[1], self.beta_rates[2]];
        if all.iter().all(|v| *v > 0.0 && v.is_finite()) {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("prior hyperparameters must be positive and finite: {self:?}")))
        }
    }
}

/// Per-susceptible colonization rate given C and Q.
pub fn colonization_rate(theta: &Theta, colonized: u32, isolated: u32) -> f64 {
    match theta.model {
        ModelKind::Full | ModelKind::NoBackground => {
            theta.beta0 + theta.beta1 * colonized as f64 + theta.beta2 * isolated as f64
        }
        ModelKind::NonLinear => {
            let ind = |n: u32| if n > 0 { 1.0 } else { 0.0 };
            theta.beta0 + theta.beta1 * ind(colonized) + theta.beta2 * ind(isolated)
        }
    }
}

/// Negative tests at or after `c` on an episode (false negatives if colonized at `c`).
pub(crate) fn negatives_from(tests: &[crate::types::ScreeningTest], c: f64) -> u64 {
    tests.iter().filter(|t| t.result == TestResult::Negative && t.time >= c).count() as u64
}

/// Contribution of one episode to `(n_CA, n_FN)`.
pub(crate) fn episode_counts(ward: &WardData, j: usize, status: Colonization) -> (u64, u64) {
    let e = &ward.episodes()[j];
    let n_ca = u64::from(e.class == AdmissionClass::NewAdmission && status == Colonization::OnAdmission);
    let n_fn = match status {
        Colonization::Uncolonized => 0,
        Colonization::OnAdmission => negatives_from(&e.tests, e.admission),
        Colonization::OnWard(c) => negatives_from(&e.tests, c),
    };
    (n_ca, n_fn)
}

pub fn counts_summary(ward: &WardData, aug: &Augmentation) -> CountsSummary {
    let mut out = CountsSummary { n_a: ward.n_new_admissions() as u64, ..CountsSummary::default() };
    for (j, e) in ward.episodes().iter().enumerate() {
        out.n_tp += e.positive_count() as u64;
        let (ca, fnn) = episode_counts(ward, j, aug.get(j));
        out.n_ca += ca;
        out.n_fn += fnn;
    }
    out
}

fn importation_and_testing(counts: &CountsSummary, theta: &Theta) -> f64 {
    xlogy(counts.n_ca as f64, theta.phi)
        + xlogy((counts.n_a - counts.n_ca) as f64, 1.0 - theta.phi)
        + xlogy(counts.n_tp as f64, theta.p)
        + xlogy(counts.n_fn as f64, 1.0 - theta.p)
}

/// Log augmented likelihood evaluated from a freshly built timeline.
pub fn log_augmented_likelihood(ward: &WardData, aug: &Augmentation, theta: &Theta) -> f64 {
    let timeline = build_timeline(ward, aug);
    log_likelihood_on_timeline(ward, aug, &timeline, theta)
}

pub fn log_likelihood_on_timeline(ward: &WardData, aug: &Augmentation, timeline: &WardTimeline, theta: &Theta) -> f64 {
    let counts = counts_summary(ward, aug);
    let mut ll = importation_and_testing(&counts, theta);
    for acq in timeline.acquisitions() {
        let rate = colonization_rate(theta, acq.before.colonized, acq.before.isolated);
        if rate <= 0.0 {
            return f64::NEG_INFINITY;
        }
        ll += ln(rate);
    }
    ll - timeline.integrate_hazard(theta)
}

pub fn log_prior(theta: &Theta, prior: &PriorConfig) -> f64 {
    if !theta.in_support() {
        return f64::NEG_INFINITY;
    }
    beta_log_density(theta.p, prior.p_alpha, prior.p_beta)
        + beta_log_density(theta.phi, prior.phi_alpha, prior.phi_beta)
        + theta
            .betas()
            .iter()
            .zip(prior.beta_rates)
            .map(|(&b, rate)| exp_log_density(b, rate))
            .sum::<f64>()
}

/// Key of an acquisition's rate factor: (C, Q) just before it.
pub type PressureKey = (u32, u32);

/// Everything the likelihood depends on, for any θ and any model kind.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SufficientStats {
    pub counts: CountsSummary,
    pub integrals: HazardIntegrals,
    /// Multiplicity of each (C, Q) pair seen just before an on-ward colonization.
    pub pressure: BTreeMap<PressureKey, u32>,
}

/// Change in [`SufficientStats`] caused by altering one colonization time.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StatsDelta {
    /// Counts after the change.
    pub counts: CountsSummary,
    pub integrals: HazardIntegrals,
    pub removed: Vec<PressureKey>,
    pub added: Vec<PressureKey>,
}

fn log_rate_key(theta: &Theta, key: PressureKey) -> f64 {
    let rate = colonization_rate(theta, key.0, key.1);
    if rate > 0.0 {
        ln(rate)
    } else {
        f64::NEG_INFINITY
    }
}

impl SufficientStats {
    pub fn from_timeline(ward: &WardData, aug: &Augmentation, timeline: &WardTimeline) -> Self {
        let mut pressure = BTreeMap::new();
        for acq in timeline.acquisitions() {
            *pressure.entry((acq.before.colonized, acq.before.isolated)).or_insert(0) += 1;
        }
        Self { counts: counts_summary(ward, aug), integrals: timeline.hazard_integrals(), pressure }
    }

    pub fn compute(ward: &WardData, aug: &Augmentation) -> Self {
        Self::from_timeline(ward, aug, &build_timeline(ward, aug))
    }

    pub fn log_likelihood(&self, theta: &Theta) -> f64 {
        let mut ll = importation_and_testing(&self.counts, theta);
        for (&key, &mult) in &self.pressure {
            let l = log_rate_key(theta, key);
            if l == f64::NEG_INFINITY {
                return l;
            }
            ll += mult as f64 * l;
        }
        ll - self.integrals.total_hazard(theta)
    }

    /// Log likelihood after applying `delta`, without mutating `self`.
    pub fn log_likelihood_with(&self, theta: &Theta, delta: &StatsDelta) -> f64 {
        let net = |key: &PressureKey| {
            delta.added.iter().filter(|k| *k == key).count() as i64 - delta.removed.iter().filter(|k| *k == key).count() as i64
        };
        let mut ll = importation_and_testing(&delta.counts, theta);
        for (key, &mult) in &self.pressure {
            let m = mult as i64 + net(key);
            debug_assert!(m >= 0);
            if m > 0 {
                let l = log_rate_key(theta, *key);
                if l == f64::NEG_INFINITY {
                    return l;
                }
                ll += m as f64 * l;
            }
        }
        for (i, key) in delta.added.iter().enumerate() {
            // New keys, each counted once.
            if self.pressure.contains_key(key) || delta.added[..i].contains(key) {
                continue;
            }
            let m = net(key);
            if m > 0 {
                let l = log_rate_key(theta, *key);
                if l == f64::NEG_INFINITY {
                    return l;
                }
                ll += m as f64 * l;
            }
        }
        ll - self.integrals.plus(&delta.integrals).total_hazard(theta)
    }

    pub fn apply(&mut self, delta: &StatsDelta) {
        self.counts = delta.counts;
        self.integrals = self.integrals.plus(&delta.integrals);
        for key in &delta.removed {
            let entry = self.pressure.get_mut(key).expect("removed pressure key must exist");
            *entry -= 1;
            if *entry == 0 {
                self.pressure.remove(key);
            }
        }
        for key in &delta.added {
            *self.pressure.entry(*key).or_insert(0) += 1;
        }
    }

    /// Number of on-ward colonizations.
    pub fn acquisitions(&self) -> u32 {
        self.pressure.values().sum()
    }
}
