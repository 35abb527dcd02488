//! Model comparison and goodness of fit.
//!
//! Predictive simulations are exposed per replicate ([`predictive_series`]) so
//! callers can spread them over threads; every replicate draws from its own
//! generator stream derived from `(seed, replicate)`, so results do not depend
//! on evaluation order.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::math::{floor, ln, mean, quantile_sorted, sqrt, variance};
use crate::mcmc::{Chain, PosteriorSamples, SamplerConfig, Snapshot};
use crate::simulate::{detected_colonizations, detected_colonizations_by_interval, simulate_colonization, SimPolicy};
use crate::types::{Augmentation, ModelKind, Theta, WardData};

/// Normal 97.5% quantile.
const Z975: f64 = 1.959_963_984_540_054;

const PREDICTIVE_STREAM: u64 = 1 << 40;
const DIC_STREAM: u64 = 2 << 40;

/// Generator for stream `stream` of `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Mean, median, 95% equal-tailed interval and variance of a sample.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PosteriorSummary {
    pub mean: f64,
    pub median: f64,
    pub lower: f64,
    pub upper: f64,
    pub variance: f64,
}

impl PosteriorSummary {
    pub fn from_values(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Insufficient { what: "values to summarise", needed: 1, found: 0 });
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(Self {
            mean: mean(values),
            median: quantile_sorted(&sorted, 0.5),
            lower: quantile_sorted(&sorted, 0.025),
            upper: quantile_sorted(&sorted, 0.975),
            variance: if values.len() > 1 { variance(values) } else { 0.0 },
        })
    }

    pub fn covers(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }
}

/// Componentwise posterior mean of θ.
pub fn posterior_mean_theta(samples: &PosteriorSamples, model: ModelKind) -> Result<Theta> {
    if samples.draws.is_empty() {
        return Err(Error::Insufficient { what: "posterior draws", needed: 1, found: 0 });
    }
    let m: Vec<f64> = (0..5).map(|k| mean(&samples.component(k))).collect();
    Ok(Theta::new(m[0], m[1], m[2], m[3], m[4], model))
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DicConfig {
    /// Least number of joint draws accepted.
    pub min_draws: usize,
    /// Length of the augmentation-only chain at θ̂, burn-in included.
    pub iterations: u64,
    pub burn_in: u64,
}

impl Default for DicConfig {
    fn default() -> Self {
        Self { min_draws: 500, iterations: 50_000, burn_in: 1_000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Dic6 {
    pub dic6: f64,
    /// Mean of log π(y, c | θ) over joint draws.
    pub mean_joint_loglik: f64,
    /// Mean of log π(y, c | θ̂) over augmentations drawn with θ fixed at θ̂.
    pub mean_conditional_loglik: f64,
    pub theta_hat: Theta,
}

/// DIC₆ = −4·E[log π(y,c|θ)] + 2·E_c[log π(y,c|θ̂) | y, θ̂].
///
/// The conditional expectation comes from a chain that only moves colonization
/// times, started from the joint chain's final augmentation.
pub fn dic6(ward: &WardData, samples: &PosteriorSamples, sampler: &SamplerConfig, config: &DicConfig) -> Result<Dic6> {
    let n = samples.draws.len();
    if n < config.min_draws.max(1) {
        return Err(Error::Insufficient { what: "posterior draws for DIC", needed: config.min_draws.max(1), found: n });
    }
    if config.burn_in >= config.iterations {
        return Err(Error::InvalidConfig("DIC chain burn-in must be shorter than the chain".into()));
    }
    let joint: Vec<f64> = samples.draws.iter().map(|d| d.loglik).collect();
    let mean_joint = mean(&joint);
    let theta_hat = posterior_mean_theta(samples, sampler.model)?;

    let mut cfg = sampler.clone();
    cfg.iterations = config.iterations;
    cfg.burn_in = config.burn_in;
    let rng = stream_rng(sampler.seed, DIC_STREAM);
    let mut chain = Chain::from_state(ward, cfg, theta_hat, samples.final_augmentation.clone(), rng)?;
    let mut total = 0.0;
    for i in 1..=config.iterations {
        chain.step_augmentation();
        if i > config.burn_in {
            total += chain.log_likelihood();
        }
    }
    let mean_conditional = total / (config.iterations - config.burn_in) as f64;
    Ok(Dic6 {
        dic6: -4.0 * mean_joint + 2.0 * mean_conditional,
        mean_joint_loglik: mean_joint,
        mean_conditional_loglik: mean_conditional,
        theta_hat,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PredictiveConfig {
    /// Chain iterations between parameter values used for simulation.
    pub iteration_stride: u64,
    /// Replicates for the p-value.
    pub replicates: usize,
    /// Simulations for the trajectory bands.
    pub trajectory_sims: usize,
    /// Width of the trajectory bins in days.
    pub interval: f64,
    pub policy: SimPolicy,
    pub seed: u64,
}

impl PredictiveConfig {
    pub fn new(seed: u64) -> Self {
        Self { iteration_stride: 100, replicates: 1000, trajectory_sims: 2000, interval: 14.0, policy: SimPolicy::default(), seed }
    }
}

/// Parameter values used for predictive simulation: every `iteration_stride`-th
/// chain iteration, as far as thinning allows.
pub fn predictive_thetas(samples: &PosteriorSamples, iteration_stride: u64) -> Result<Vec<Theta>> {
    let draws = &samples.draws;
    if draws.is_empty() {
        return Err(Error::Insufficient { what: "posterior draws", needed: 1, found: 0 });
    }
    let thin = if draws.len() > 1 { (draws[1].iteration - draws[0].iteration).max(1) } else { 1 };
    let stride = (iteration_stride / thin).max(1) as usize;
    Ok(draws.iter().step_by(stride).map(|d| d.theta).collect())
}

/// Detected colonizations per interval for predictive replicate `replicate`,
/// with θ cycling through `thetas`.
pub fn predictive_series(
    ward: &WardData,
    thetas: &[Theta],
    config: &PredictiveConfig,
    replicate: usize,
) -> Result<Vec<u32>> {
    let theta = &thetas[replicate % thetas.len()];
    let mut rng = stream_rng(config.seed, PREDICTIVE_STREAM + replicate as u64);
    let sim = simulate_colonization(ward, theta, &config.policy, &mut rng)?;
    detected_colonizations_by_interval(&sim.ward, config.interval)
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PredictiveCheck {
    pub observed: u32,
    pub simulated: Vec<u32>,
    /// Fraction of simulations with at least as many detected colonizations as observed.
    pub p_value: f64,
}

/// Posterior predictive p-value from per-replicate totals.
pub fn ppp_from_totals(observed: u32, simulated: Vec<u32>) -> Result<PredictiveCheck> {
    if simulated.is_empty() {
        return Err(Error::Insufficient { what: "predictive replicates", needed: 1, found: 0 });
    }
    let hits = simulated.iter().filter(|&&s| s >= observed).count();
    let p_value = hits as f64 / simulated.len() as f64;
    Ok(PredictiveCheck { observed, simulated, p_value })
}

/// Posterior predictive p-value with the number of detected colonizations as discrepancy.
pub fn posterior_predictive_pvalue(ward: &WardData, samples: &PosteriorSamples, config: &PredictiveConfig) -> Result<PredictiveCheck> {
    if config.replicates < 100 {
        return Err(Error::Insufficient { what: "predictive replicates", needed: 100, found: config.replicates });
    }
    let thetas = predictive_thetas(samples, config.iteration_stride)?;
    let totals = (0..config.replicates)
        .map(|r| predictive_series(ward, &thetas, config, r).map(|s| s.iter().sum()))
        .collect::<Result<Vec<u32>>>()?;
    ppp_from_totals(detected_colonizations(ward), totals)
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrajectoryBands {
    pub interval: f64,
    pub observed: Vec<u32>,
    pub mean: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl TrajectoryBands {
    /// Mean and 2.5% / 97.5% quantiles across simulated series.
    pub fn from_series(ward: &WardData, interval: f64, series: &[Vec<u32>]) -> Result<Self> {
        if series.is_empty() {
            return Err(Error::Insufficient { what: "trajectory simulations", needed: 1, found: 0 });
        }
        let observed = detected_colonizations_by_interval(ward, interval)?;
        let bins = observed.len();
        let (mut m, mut lo, mut hi) = (Vec::with_capacity(bins), Vec::with_capacity(bins), Vec::with_capacity(bins));
        let mut column = Vec::with_capacity(series.len());
        for b in 0..bins {
            column.clear();
            column.extend(series.iter().map(|s| s[b] as f64));
            m.push(mean(&column));
            column.sort_by(f64::total_cmp);
            lo.push(quantile_sorted(&column, 0.025));
            hi.push(quantile_sorted(&column, 0.975));
        }
        Ok(Self { interval, observed, mean: m, lower: lo, upper: hi })
    }

    /// Fraction of intervals whose observed count lies inside the band.
    pub fn coverage(&self) -> f64 {
        let inside = (0..self.observed.len())
            .filter(|&b| {
                let o = self.observed[b] as f64;
                self.lower[b] <= o && o <= self.upper[b]
            })
            .count();
        inside as f64 / self.observed.len() as f64
    }
}

pub fn predictive_trajectories(ward: &WardData, samples: &PosteriorSamples, config: &PredictiveConfig) -> Result<TrajectoryBands> {
    let thetas = predictive_thetas(samples, config.iteration_stride)?;
    let series = (0..config.trajectory_sims)
        .map(|r| predictive_series(ward, &thetas, config, r))
        .collect::<Result<Vec<_>>>()?;
    TrajectoryBands::from_series(ward, config.interval, &series)
}

/// Shares of colonized patient-days spent undetected and waiting for isolation.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HiddenCarriage {
    pub p_hidden: f64,
    pub p_wait: f64,
}

/// `P_hidden` and `P_wait` for one augmentation; `None` if nobody is colonized.
///
/// With `p_j` the start of isolation (∞ if never isolated) and `t_j` the first
/// positive test, `P_hidden` sums `max(min(p_j, d_j) − c_j, 0)` and `P_wait`
/// sums `p_j − t_j` over episodes with `t_j ≤ p_j ≤ d_j`, both divided by the
/// colonized patient-days `Σ (d_j − c_j)`.
pub fn hidden_carriage(ward: &WardData, aug: &Augmentation) -> Option<HiddenCarriage> {
    let (mut hidden, mut wait, mut days) = (0.0, 0.0, 0.0);
    for (j, e) in ward.episodes().iter().enumerate() {
        let Some(c) = aug.time(ward, j) else { continue };
        let d = e.discharge;
        let p = e.first_precaution().unwrap_or(f64::INFINITY);
        days += d - c;
        hidden += (p.min(d) - c).max(0.0);
        if let Some(t) = e.first_positive() {
            if t <= p && p <= d {
                wait += p - t;
            }
        }
    }
    (days > 0.0).then(|| HiddenCarriage { p_hidden: hidden / days, p_wait: wait / days })
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HiddenCarriageSummary {
    pub p_hidden: PosteriorSummary,
    pub p_wait: PosteriorSummary,
    /// Snapshots with at least one colonized patient.
    pub snapshots: usize,
}

/// Posterior of `P_hidden` and `P_wait` over augmentation snapshots.
pub fn hidden_carriage_posterior(ward: &WardData, snapshots: &[Snapshot]) -> Result<Option<HiddenCarriageSummary>> {
    if snapshots.is_empty() {
        return Err(Error::Insufficient { what: "augmentation snapshots", needed: 1, found: 0 });
    }
    let values: Vec<HiddenCarriage> = snapshots.iter().filter_map(|s| hidden_carriage(ward, &s.augmentation)).collect();
    if values.is_empty() {
        return Ok(None);
    }
    for v in &values {
        debug_assert!((0.0..=1.0).contains(&v.p_hidden) && v.p_wait <= 1.0);
    }
    let h: Vec<f64> = values.iter().map(|v| v.p_hidden).collect();
    let w: Vec<f64> = values.iter().map(|v| v.p_wait).collect();
    Ok(Some(HiddenCarriageSummary {
        p_hidden: PosteriorSummary::from_values(&h)?,
        p_wait: PosteriorSummary::from_values(&w)?,
        snapshots: values.len(),
    }))
}

/// Evidence that isolation reduces transmission: β₁ (unisolated) against β₂ (isolated).
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Efficacy {
    /// Posterior probability that β₁ > β₂.
    pub prob_beta1_greater: f64,
    pub log_ratio: PosteriorSummary,
    pub ratio: PosteriorSummary,
}

pub fn efficacy_summary(samples: &PosteriorSamples) -> Result<Efficacy> {
    let n = samples.draws.len();
    if n == 0 {
        return Err(Error::Insufficient { what: "posterior draws", needed: 1, found: 0 });
    }
    let greater = samples.thetas().filter(|t| t.beta1 > t.beta2).count();
    let ratio: Vec<f64> = samples.thetas().map(|t| t.beta1 / t.beta2).collect();
    let log_ratio: Vec<f64> = samples.thetas().map(|t| ln(t.beta1) - ln(t.beta2)).collect();
    Ok(Efficacy {
        prob_beta1_greater: greater as f64 / n as f64,
        log_ratio: PosteriorSummary::from_values(&log_ratio)?,
        ratio: PosteriorSummary::from_values(&ratio)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PooledEstimate {
    pub estimate: f64,
    pub variance: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Fixed-effect inverse-variance pooling of `(estimate, variance)` pairs.
pub fn pool_efficacy(estimates: &[(f64, f64)]) -> Result<PooledEstimate> {
    if estimates.is_empty() {
        return Err(Error::Insufficient { what: "ward estimates", needed: 1, found: 0 });
    }
    let (mut weights, mut weighted) = (0.0, 0.0);
    for (index, &(est, var)) in estimates.iter().enumerate() {
        if !(var > 0.0 && var.is_finite() && est.is_finite()) {
            return Err(Error::InvalidVariance { index, variance: var });
        }
        weights += 1.0 / var;
        weighted += est / var;
    }
    let (estimate, variance) = match estimates {
        [single] => *single,
        _ => (weighted / weights, 1.0 / weights),
    };
    let half = Z975 * sqrt(variance);
    Ok(PooledEstimate { estimate, variance, lower: estimate - half, upper: estimate + half })
}

/// Observed and predicted colonization prevalence over one block of days.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PrevalenceBlock {
    pub start: f64,
    pub end: f64,
    /// Mean daily share of present patients already detected positive.
    pub observed: f64,
    /// Mean daily share of present patients colonized, over snapshots.
    pub predicted: PosteriorSummary,
}

/// Daily prevalence (evaluated at mid-day) averaged over consecutive `block`-day periods.
pub fn monthly_prevalence(ward: &WardData, snapshots: &[Snapshot], block: f64) -> Result<Vec<PrevalenceBlock>> {
    if snapshots.is_empty() {
        return Err(Error::Insufficient { what: "augmentation snapshots", needed: 1, found: 0 });
    }
    if !(block >= 1.0 && block.is_finite()) {
        return Err(Error::InvalidArgument(format!("prevalence block must be at least one day, got {block}")));
    }
    let days = libm::ceil(ward.study_length) as usize;
    let mut present: Vec<Vec<u32>> = alloc::vec![Vec::new(); days];
    for (j, e) in ward.episodes().iter().enumerate() {
        let first = libm::ceil(e.admission - 0.5).max(0.0) as usize;
        for (day, list) in present.iter_mut().enumerate().skip(first) {
            let t = day as f64 + 0.5;
            if t >= e.discharge {
                break;
            }
            if t >= e.admission {
                list.push(j as u32);
            }
        }
    }
    let share = |day: usize, colonized: &dyn Fn(usize, f64) -> bool| -> Option<f64> {
        let list = &present[day];
        let t = day as f64 + 0.5;
        (!list.is_empty()).then(|| list.iter().filter(|&&j| colonized(j as usize, t)).count() as f64 / list.len() as f64)
    };
    let per_day = block as usize;
    let mut out = Vec::new();
    let mut start = 0;
    while start < days {
        let end = (start + per_day).min(days);
        let block_mean = |colonized: &dyn Fn(usize, f64) -> bool| -> f64 {
            let shares: Vec<f64> = (start..end).filter_map(|d| share(d, colonized)).collect();
            if shares.is_empty() {
                0.0
            } else {
                mean(&shares)
            }
        };
        let observed = block_mean(&|j, t| {
            let e = &ward.episodes()[j];
            e.class == crate::types::AdmissionClass::ColonizedOnReadmission || e.first_positive().is_some_and(|p| p <= t)
        });
        let predicted: Vec<f64> = snapshots
            .iter()
            .map(|s| block_mean(&|j, t| s.augmentation.time(ward, j).is_some_and(|c| c <= t)))
            .collect();
        out.push(PrevalenceBlock {
            start: start as f64,
            end: floor(end as f64).min(ward.study_length),
            observed,
            predicted: PosteriorSummary::from_values(&predicted)?,
        });
        start = end;
    }
    Ok(out)
}

/// Everything reported for one (ward, model) fit.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AssessmentReport {
    pub ward_id: String,
    pub model: ModelKind,
    pub dic: Dic6,
    pub ppp: PredictiveCheck,
    pub trajectories: TrajectoryBands,
    pub hidden_carriage: Option<HiddenCarriageSummary>,
    pub efficacy: Efficacy,
    pub prevalence: Vec<PrevalenceBlock>,
}

/// Runs every check on one fit. `prevalence_block` is the prevalence block length in days.
pub fn assess_fit(
    ward: &WardData,
    samples: &PosteriorSamples,
    sampler: &SamplerConfig,
    dic_config: &DicConfig,
    predictive: &PredictiveConfig,
    prevalence_block: f64,
) -> Result<AssessmentReport> {
    if samples.snapshots.is_empty() {
        return Err(Error::Insufficient { what: "augmentation snapshots", needed: 1, found: 0 });
    }
    Ok(AssessmentReport {
        ward_id: ward.ward_id.clone(),
        model: sampler.model,
        dic: dic6(ward, samples, sampler, dic_config)?,
        ppp: posterior_predictive_pvalue(ward, samples, predictive)?,
        trajectories: predictive_trajectories(ward, samples, predictive)?,
        hidden_carriage: hidden_carriage_posterior(ward, &samples.snapshots)?,
        efficacy: efficacy_summary(samples)?,
        prevalence: monthly_prevalence(ward, &samples.snapshots, prevalence_block)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mcmc::Draw;
    use crate::types::{Colonization, Interval, PatientEpisode, ScreeningTest};

    fn samples_from(thetas: &[(f64, f64)]) -> PosteriorSamples {
        let draws = thetas
            .iter()
            .enumerate()
            .map(|(i, &(b1, b2))| Draw {
                iteration: i as u64 + 1,
                theta: Theta::new(0.5, 0.1, 0.01, b1, b2, ModelKind::Full),
                loglik: -1.0,
                n1: 0,
                n_ca: 0,
                n_fn: 0,
                colonized_days: 0.0,
            })
            .collect();
        PosteriorSamples {
            draws,
            snapshots: Vec::new(),
            acceptance: Default::default(),
            final_theta: Theta::new(0.5, 0.1, 0.01, 0.0, 0.0, ModelKind::Full),
            final_augmentation: Augmentation { status: Vec::new() },
            max_recompute_discrepancy: 0.0,
        }
    }

    #[test]
    fn hidden_carriage_hand_case() {
        let e = PatientEpisode::new("a", "a", 0.0, 10.0)
            .with_tests([ScreeningTest::negative(1.0), ScreeningTest::positive(4.0)])
            .with_precautions([Interval::new(6.0, 10.0)]);
        let w = WardData::new("W", 10.0, alloc::vec![e], 0.0).unwrap();
        let aug = Augmentation { status: alloc::vec![Colonization::OnWard(2.0)] };
        assert_eq!(hidden_carriage(&w, &aug), Some(HiddenCarriage { p_hidden: 0.5, p_wait: 0.25 }));
    }

    #[test]
    fn hidden_carriage_edge_cases() {
        let never = PatientEpisode::new("a", "a", 0.0, 10.0);
        let w = WardData::new("W", 10.0, alloc::vec![never], 0.0).unwrap();
        let aug = Augmentation { status: alloc::vec![Colonization::OnWard(3.0)] };
        assert_eq!(hidden_carriage(&w, &aug).unwrap().p_hidden, 1.0);
        assert_eq!(hidden_carriage(&w, &Augmentation { status: alloc::vec![Colonization::Uncolonized] }), None);

        let instant = PatientEpisode::new("a", "a", 0.0, 10.0)
            .with_tests([ScreeningTest::positive(3.0)])
            .with_precautions([Interval::new(3.0, 10.0)]);
        let w = WardData::new("W", 10.0, alloc::vec![instant], 0.0).unwrap();
        let aug = Augmentation { status: alloc::vec![Colonization::OnWard(3.0)] };
        assert_eq!(hidden_carriage(&w, &aug), Some(HiddenCarriage { p_hidden: 0.0, p_wait: 0.0 }));
    }

    #[test]
    fn efficacy_counting() {
        let e = efficacy_summary(&samples_from(&[(2.0, 1.0), (3.0, 1.0), (1.0, 2.0)])).unwrap();
        assert!((e.prob_beta1_greater - 2.0 / 3.0).abs() < 1e-15);
        let e = efficacy_summary(&samples_from(&[(0.01, 0.01); 5])).unwrap();
        assert_eq!(e.prob_beta1_greater, 0.0);
        assert_eq!(e.log_ratio.median, 0.0);
        assert_eq!(e.log_ratio.variance, 0.0);
    }

    #[test]
    fn pooling() {
        let p = pool_efficacy(&[(1.0, 0.4), (3.0, 0.4)]).unwrap();
        assert!((p.estimate - 2.0).abs() < 1e-15 && (p.variance - 0.2).abs() < 1e-15);
        let p = pool_efficacy(&[(0.7, 0.3)]).unwrap();
        assert_eq!((p.estimate, p.variance), (0.7, 0.3));
        assert_eq!(pool_efficacy(&[(0.0, 1.0), (0.0, 2.0), (0.0, 3.0)]).unwrap().estimate, 0.0);
        assert_eq!(pool_efficacy(&[(1.0, 1.0), (2.0, 0.0)]), Err(Error::InvalidVariance { index: 1, variance: 0.0 }));
        assert!(pool_efficacy(&[]).is_err());
    }

    #[test]
    fn ppp_extremes() {
        assert_eq!(ppp_from_totals(0, alloc::vec![0, 3, 1]).unwrap().p_value, 1.0);
        assert_eq!(ppp_from_totals(50, alloc::vec![0, 3, 1]).unwrap().p_value, 0.0);
        let a = ppp_from_totals(2, alloc::vec![0, 3, 1, 2]).unwrap().p_value;
        let b = ppp_from_totals(2, alloc::vec![2, 1, 3, 0]).unwrap().p_value;
        assert_eq!((a, b), (0.5, 0.5));
    }

    #[test]
    fn predictive_theta_stride_follows_thinning() {
        let mut s = samples_from(&[(1.0, 1.0); 50]);
        for (i, d) in s.draws.iter_mut().enumerate() {
            d.iteration = 10 * (i as u64 + 1);
        }
        assert_eq!(predictive_thetas(&s, 100).unwrap().len(), 5);
        assert_eq!(predictive_thetas(&s, 1).unwrap().len(), 50);
    }

    #[test]
    fn degenerate_parameters_give_zero_bands() {
        let eps = (0..5)
            .map(|k| PatientEpisode::new(alloc::format!("e{k}"), "p", 7.0 * k as f64, 7.0 * k as f64 + 5.0).with_tests([ScreeningTest::negative(7.0 * k as f64)]))
            .collect();
        let w = WardData::new("W", 40.0, eps, 0.0).unwrap();
        let mut s = samples_from(&[(0.0, 0.0); 3]);
        for d in &mut s.draws {
            d.theta = Theta::new(0.5, 0.0, 0.0, 0.0, 0.0, ModelKind::Full);
        }
        let mut cfg = PredictiveConfig::new(3);
        cfg.trajectory_sims = 20;
        let bands = predictive_trajectories(&w, &s, &cfg).unwrap();
        assert!(bands.mean.iter().chain(&bands.lower).chain(&bands.upper).all(|v| *v == 0.0));
        assert_eq!(bands.mean.len(), 3);

        cfg.trajectory_sims = 1;
        let one = predictive_trajectories(&w, &s, &cfg).unwrap();
        let series = predictive_series(&w, &predictive_thetas(&s, cfg.iteration_stride).unwrap(), &cfg, 0).unwrap();
        assert_eq!(one.mean, series.iter().map(|&v| v as f64).collect::<Vec<_>>());
    }

    #[test]
    fn prevalence_blocks() {
        let e = PatientEpisode::new("a", "a", 0.0, 60.0).with_tests([ScreeningTest::positive(45.0)]);
        let w = WardData::new("W", 60.0, alloc::vec![e], 0.0).unwrap();
        let snaps = alloc::vec![Snapshot {
            iteration: 1,
            theta: Theta::new(0.5, 0.5, 0.0, 0.0, 0.0, ModelKind::Full),
            augmentation: Augmentation { status: alloc::vec![Colonization::OnWard(30.0)] },
        }];
        let blocks = monthly_prevalence(&w, &snaps, 30.0).unwrap();
        assert_eq!(blocks.len(), 2);
        assert_eq!(blocks[0].predicted.mean, 0.0);
        assert_eq!(blocks[1].predicted.mean, 1.0);
        assert!((blocks[1].observed - 15.0 / 30.0).abs() < 1e-12);
    }
}
