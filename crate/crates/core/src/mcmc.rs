//! Metropolis-within-Gibbs sampler over parameters and colonization times.
//!
//! Each iteration draws `p` and `phi` from their Beta full conditionals,
//! updates each β by a Gaussian random walk, then performs one colonization-time
//! move chosen uniformly among add, delete and shift. The likelihood is kept as
//! [`SufficientStats`], updated locally after every accepted move and checked
//! against a full rebuild at a fixed stride.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Exp, StandardNormal};

use crate::error::{Error, Result};
use crate::incremental::{colonization_delta, WardIndex};
use crate::likelihood::{log_augmented_likelihood, log_prior, PriorConfig, SufficientStats};
use crate::math::ln;
use crate::types::{Augmentation, Colonization, EpisodeSet, ModelKind, Theta, WardData};

/// Rate of the exponential from which initial β values are drawn.
const INITIAL_BETA_RATE: f64 = 100.0;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SamplerConfig {
    /// Total iterations, burn-in included.
    pub iterations: u64,
    pub burn_in: u64,
    pub thin: u64,
    /// Random-walk standard deviation for β₀, β₁, β₂ (per day).
    pub rw_sd: [f64; 3],
    /// Proposal mass on colonization at admission.
    pub phi0: f64,
    pub seed: u64,
    pub prior: PriorConfig,
    pub model: ModelKind,
    /// Colonization-time moves per iteration.
    pub moves_per_iteration: u32,
    /// Keep the full augmentation every this many recorded draws (0: never).
    pub snapshot_stride: u64,
    /// Rebuild the likelihood from scratch every this many iterations (0: never).
    pub recompute_every: u64,
}

impl SamplerConfig {
    pub fn new(model: ModelKind, seed: u64) -> Self {
        Self {
            iterations: 200_000,
            burn_in: 10_000,
            thin: 10,
            rw_sd: [0.002; 3],
            phi0: 0.3,
            seed,
            prior: PriorConfig::default_for(model),
            model,
            moves_per_iteration: 1,
            snapshot_stride: 0,
            recompute_every: 1000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.into()));
        if !(self.phi0 > 0.0 && self.phi0 < 1.0) {
            return bad("phi0 must lie in (0, 1)");
        }
        if !self.rw_sd.iter().all(|s| *s > 0.0 && s.is_finite()) {
            return bad("random-walk standard deviations must be positive");
        }
        if self.burn_in >= self.iterations {
            return bad("burn-in must be shorter than the run");
        }
        if self.thin == 0 {
            return bad("thin must be at least 1");
        }
        if self.moves_per_iteration == 0 {
            return bad("at least one colonization move per iteration is required");
        }
        self.prior.validate()
    }

    /// Number of draws a run records.
    pub fn draw_count(&self) -> u64 {
        (self.iterations - self.burn_in) / self.thin
    }
}

/// Proposal and acceptance tallies for one move type.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MoveCounter {
    pub proposed: u64,
    pub accepted: u64,
}

impl MoveCounter {
    fn record(&mut self, accepted: bool) {
        self.proposed += 1;
        self.accepted += u64::from(accepted);
    }

    pub fn rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AcceptanceStats {
    pub beta: [MoveCounter; 3],
    pub add: MoveCounter,
    pub delete: MoveCounter,
    pub shift: MoveCounter,
}

/// One recorded (thinned) state.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Draw {
    pub iteration: u64,
    pub theta: Theta,
    /// log π(y, c | θ) at this state.
    pub loglik: f64,
    /// |𝒩₁|.
    pub n1: u64,
    pub n_ca: u64,
    pub n_fn: u64,
    pub colonized_days: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Snapshot {
    pub iteration: u64,
    pub theta: Theta,
    pub augmentation: Augmentation,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PosteriorSamples {
    pub draws: Vec<Draw>,
    pub snapshots: Vec<Snapshot>,
    pub acceptance: AcceptanceStats,
    pub final_theta: Theta,
    pub final_augmentation: Augmentation,
    /// Largest relative gap between the maintained and rebuilt log likelihood.
    pub max_recompute_discrepancy: f64,
}

impl PosteriorSamples {
    pub fn thetas(&self) -> impl Iterator<Item = Theta> + '_ {
        self.draws.iter().map(|d| d.theta)
    }

    /// Values of one parameter across draws: 0 = p, 1 = phi, 2..=4 = β₀..β₂.
    pub fn component(&self, index: usize) -> Vec<f64> {
        self.draws
            .iter()
            .map(|d| match index {
                0 => d.theta.p,
                1 => d.theta.phi,
                k => d.theta.betas()[k - 2],
            })
            .collect()
    }
}

/// Progress notification passed to the run callback.
#[derive(Debug, Clone, Copy)]
pub struct Progress {
    pub iteration: u64,
    pub total: u64,
}

/// Hastings factor of an add move (everything but the posterior ratio).
pub fn add_proposal_ratio(n0: usize, n1: usize, stay: f64, phi0: f64, at_admission: bool) -> f64 {
    if at_admission {
        n0 as f64 / (phi0 * (n1 + 1) as f64)
    } else {
        n0 as f64 * stay / ((1.0 - phi0) * (n1 + 1) as f64)
    }
}

/// Hastings factor of a delete move; `n0`, `n1` are the pre-move set sizes.
pub fn delete_proposal_ratio(n0: usize, n1: usize, stay: f64, phi0: f64, at_admission: bool) -> f64 {
    if at_admission {
        phi0 * n1 as f64 / (n0 + 1) as f64
    } else {
        (1.0 - phi0) * n1 as f64 / ((n0 + 1) as f64 * stay)
    }
}

/// Proposal density of a shift target: `phi0` at admission, uniform on `(a, t)` otherwise.
/// The common `1/(n₁ + n_p)` selection factor is left out.
pub fn shift_density(at_admission: bool, span: f64, phi0: f64) -> f64 {
    if at_admission {
        phi0
    } else {
        (1.0 - phi0) / span
    }
}

/// Hastings factor `q(c | c̃) / q(c̃ | c)` of a shift move.
pub fn shift_proposal_ratio(current_at_admission: bool, proposed_at_admission: bool, span: f64, phi0: f64) -> f64 {
    shift_density(current_at_admission, span, phi0) / shift_density(proposed_at_admission, span, phi0)
}

/// Index lists of 𝒩₀ and 𝒩₁ supporting O(1) uniform picks and moves between them.
#[derive(Debug, Clone)]
struct EpisodeSets {
    n0: Vec<u32>,
    n1: Vec<u32>,
    positives: Vec<u32>,
    slot: Vec<u32>,
}

impl EpisodeSets {
    fn new(ward: &WardData, aug: &Augmentation) -> Self {
        let mut sets = Self { n0: Vec::new(), n1: Vec::new(), positives: Vec::new(), slot: alloc::vec![0; ward.len()] };
        for j in 0..ward.len() {
            let list = match aug.set_of(ward, j) {
                EpisodeSet::Uncolonized => &mut sets.n0,
                EpisodeSet::Colonized => &mut sets.n1,
                EpisodeSet::Positive => &mut sets.positives,
                EpisodeSet::Readmission => continue,
            };
            sets.slot[j] = list.len() as u32;
            list.push(j as u32);
        }
        sets
    }

    fn transfer(&mut self, j: usize, to_colonized: bool) {
        let (from, to) = if to_colonized { (&mut self.n0, &mut self.n1) } else { (&mut self.n1, &mut self.n0) };
        let s = self.slot[j] as usize;
        from.swap_remove(s);
        if let Some(&moved) = from.get(s) {
            self.slot[moved as usize] = s as u32;
        }
        self.slot[j] = to.len() as u32;
        to.push(j as u32);
    }
}

/// Sampler state for one ward.
#[derive(Debug, Clone)]
pub struct Chain<'a> {
    ward: &'a WardData,
    index: WardIndex,
    config: SamplerConfig,
    theta: Theta,
    aug: Augmentation,
    stats: SufficientStats,
    loglik: f64,
    sets: EpisodeSets,
    rng: ChaCha8Rng,
    acceptance: AcceptanceStats,
    max_discrepancy: f64,
    iteration: u64,
}

fn draw_beta<R: Rng>(rng: &mut R, a: f64, b: f64) -> f64 {
    Beta::new(a, b).expect("validated Beta parameters").sample(rng)
}

/// Uniform on the open interval `(lo, hi)`.
fn open_uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    loop {
        let x = lo + (hi - lo) * rng.random::<f64>();
        if x > lo && x < hi {
            return x;
        }
    }
}

fn accept<R: Rng>(rng: &mut R, log_ratio: f64) -> bool {
    if log_ratio.is_nan() {
        return false;
    }
    log_ratio >= 0.0 || ln(rng.random::<f64>()) < log_ratio
}

impl<'a> Chain<'a> {
    /// Starts a chain from the default initial state drawn with `config.seed`.
    pub fn new(ward: &'a WardData, config: SamplerConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let prior = config.prior;
        let mut betas = [0.0; 3];
        for (b, rate) in betas.iter_mut().zip(prior.beta_rates) {
            let r = rate.max(INITIAL_BETA_RATE);
            *b = Exp::new(r).expect("positive rate").sample(&mut rng);
        }
        let theta = Theta::new(
            draw_beta(&mut rng, prior.p_alpha, prior.p_beta),
            draw_beta(&mut rng, prior.phi_alpha, prior.phi_beta),
            betas[0],
            betas[1],
            betas[2],
            config.model,
        );
        Self::from_state(ward, config, theta, Augmentation::initial(ward), rng)
    }

    /// Starts a chain from an explicit state and generator.
    pub fn from_state(
        ward: &'a WardData,
        config: SamplerConfig,
        theta: Theta,
        aug: Augmentation,
        rng: ChaCha8Rng,
    ) -> Result<Self> {
        config.validate()?;
        if theta.model != config.model {
            return Err(Error::InvalidConfig("parameter model kind differs from sampler model kind".into()));
        }
        aug.validate(ward)?;
        let stats = SufficientStats::compute(ward, &aug);
        let loglik = stats.log_likelihood(&theta);
        let sets = EpisodeSets::new(ward, &aug);
        Ok(Self {
            ward,
            index: WardIndex::new(ward),
            config,
            theta,
            aug,
            stats,
            loglik,
            sets,
            rng,
            acceptance: AcceptanceStats::default(),
            max_discrepancy: 0.0,
            iteration: 0,
        })
    }

    pub fn theta(&self) -> &Theta {
        &self.theta
    }

    pub fn augmentation(&self) -> &Augmentation {
        &self.aug
    }

    pub fn acceptance(&self) -> &AcceptanceStats {
        &self.acceptance
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    /// Maintained log likelihood at the current state.
    pub fn log_likelihood(&self) -> f64 {
        self.loglik
    }

    /// Log likelihood rebuilt from the ward timeline.
    pub fn full_log_likelihood(&self) -> f64 {
        log_augmented_likelihood(self.ward, &self.aug, &self.theta)
    }

    pub fn max_recompute_discrepancy(&self) -> f64 {
        self.max_discrepancy
    }

    pub fn into_parts(self) -> (Theta, Augmentation, ChaCha8Rng) {
        (self.theta, self.aug, self.rng)
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    /// Replaces θ, e.g. to run the augmentation-only chain at a fixed value.
    pub fn set_theta(&mut self, theta: Theta) {
        self.theta = theta;
        self.loglik = self.stats.log_likelihood(&self.theta);
    }

    pub fn gibbs_update_p(&mut self) {
        let c = self.stats.counts;
        let prior = &self.config.prior;
        self.theta.p = draw_beta(&mut self.rng, prior.p_alpha + c.n_tp as f64, prior.p_beta + c.n_fn as f64);
        self.loglik = self.stats.log_likelihood(&self.theta);
    }

    pub fn gibbs_update_phi(&mut self) {
        let c = self.stats.counts;
        let prior = &self.config.prior;
        self.theta.phi =
            draw_beta(&mut self.rng, prior.phi_alpha + c.n_ca as f64, prior.phi_beta + (c.n_a - c.n_ca) as f64);
        self.loglik = self.stats.log_likelihood(&self.theta);
    }

    pub fn rw_update_betas(&mut self) {
        for k in 0..3 {
            let step: f64 = self.rng.sample(StandardNormal);
            let proposal = self.theta.betas()[k] + self.config.rw_sd[k] * step;
            if proposal < 0.0 {
                self.acceptance.beta[k].record(false);
                continue;
            }
            let mut candidate = self.theta;
            candidate.set_beta(k, proposal);
            let ll = self.stats.log_likelihood(&candidate);
            let prior = &self.config.prior;
            let log_ratio = ll + log_prior(&candidate, prior) - self.loglik - log_prior(&self.theta, prior);
            let ok = ll > f64::NEG_INFINITY && accept(&mut self.rng, log_ratio);
            if ok {
                self.theta = candidate;
                self.loglik = ll;
            }
            self.acceptance.beta[k].record(ok);
        }
    }

    /// Proposes `proposed` for episode `j` and accepts with Hastings factor `hastings`.
    fn try_colonization(&mut self, j: usize, proposed: Colonization, hastings: f64) -> bool {
        let delta = colonization_delta(&self.index, self.ward, &self.aug, &self.stats, j, proposed);
        let ll = self.stats.log_likelihood_with(&self.theta, &delta);
        let ok = ll > f64::NEG_INFINITY && accept(&mut self.rng, ll - self.loglik + ln(hastings));
        if ok {
            let was_colonized = self.aug.get(j).is_colonized();
            self.stats.apply(&delta);
            self.aug.status[j] = proposed;
            self.loglik = ll;
            if was_colonized != proposed.is_colonized() {
                self.sets.transfer(j, proposed.is_colonized());
            }
            debug_assert!(self.aug.validate_episode(self.ward, j).is_ok());
        }
        ok
    }

    pub fn move_add_colonization(&mut self) {
        let (n0, n1) = (self.sets.n0.len(), self.sets.n1.len());
        if n0 == 0 {
            self.acceptance.add.record(false);
            return;
        }
        let j = self.sets.n0[self.rng.random_range(0..n0)] as usize;
        let e = &self.ward.episodes()[j];
        let (a, d) = (e.admission, e.discharge);
        let phi0 = self.config.phi0;
        let at_admission = self.rng.random::<f64>() < phi0;
        let proposed = if at_admission { Colonization::OnAdmission } else { Colonization::OnWard(open_uniform(&mut self.rng, a, d)) };
        let ok = self.try_colonization(j, proposed, add_proposal_ratio(n0, n1, d - a, phi0, at_admission));
        self.acceptance.add.record(ok);
    }

    pub fn move_delete_colonization(&mut self) {
        let (n0, n1) = (self.sets.n0.len(), self.sets.n1.len());
        if n1 == 0 {
            self.acceptance.delete.record(false);
            return;
        }
        let j = self.sets.n1[self.rng.random_range(0..n1)] as usize;
        let e = &self.ward.episodes()[j];
        let at_admission = self.aug.get(j) == Colonization::OnAdmission;
        let hastings = delete_proposal_ratio(n0, n1, e.discharge - e.admission, self.config.phi0, at_admission);
        let ok = self.try_colonization(j, Colonization::Uncolonized, hastings);
        self.acceptance.delete.record(ok);
    }

    pub fn move_shift_colonization(&mut self) {
        let (n1, np) = (self.sets.n1.len(), self.sets.positives.len());
        if n1 + np == 0 {
            self.acceptance.shift.record(false);
            return;
        }
        let pick = self.rng.random_range(0..n1 + np);
        let j = if pick < n1 { self.sets.n1[pick] } else { self.sets.positives[pick - n1] } as usize;
        let e = &self.ward.episodes()[j];
        let a = e.admission;
        let t = if pick < n1 { e.discharge } else { e.first_positive().expect("positive episode") };
        if t <= a {
            self.acceptance.shift.record(false);
            return;
        }
        let phi0 = self.config.phi0;
        let to_admission = self.rng.random::<f64>() < phi0;
        let proposed = if to_admission { Colonization::OnAdmission } else { Colonization::OnWard(open_uniform(&mut self.rng, a, t)) };
        let from_admission = self.aug.get(j) == Colonization::OnAdmission;
        let hastings = shift_proposal_ratio(from_admission, to_admission, t - a, phi0);
        let ok = self.try_colonization(j, proposed, hastings);
        self.acceptance.shift.record(ok);
    }

    /// One randomly chosen colonization-time move.
    pub fn colonization_move(&mut self) {
        match self.rng.random_range(0..3u8) {
            0 => self.move_add_colonization(),
            1 => self.move_delete_colonization(),
            _ => self.move_shift_colonization(),
        }
    }

    /// Rebuilds the statistics from scratch, recording the gap to the maintained value.
    pub fn recompute(&mut self) {
        let fresh = SufficientStats::compute(self.ward, &self.aug);
        let ll = fresh.log_likelihood(&self.theta);
        let gap = if ll == self.loglik { 0.0 } else { (ll - self.loglik).abs() / ll.abs().max(1e-300) };
        if gap > self.max_discrepancy || gap.is_nan() {
            self.max_discrepancy = gap;
        }
        self.stats = fresh;
        self.loglik = ll;
        debug_assert!(self.aug.validate(self.ward).is_ok());
    }

    /// One full iteration.
    pub fn step(&mut self) {
        self.gibbs_update_p();
        self.gibbs_update_phi();
        self.rw_update_betas();
        for _ in 0..self.config.moves_per_iteration {
            self.colonization_move();
        }
        self.finish_iteration();
    }

    /// One iteration of colonization moves only, θ held fixed.
    pub fn step_augmentation(&mut self) {
        for _ in 0..self.config.moves_per_iteration {
            self.colonization_move();
        }
        self.finish_iteration();
    }

    fn finish_iteration(&mut self) {
        self.iteration += 1;
        let every = self.config.recompute_every;
        if every > 0 && self.iteration % every == 0 {
            self.recompute();
        }
    }

    fn draw(&self) -> Draw {
        Draw {
            iteration: self.iteration,
            theta: self.theta,
            loglik: self.loglik,
            n1: self.sets.n1.len() as u64,
            n_ca: self.stats.counts.n_ca,
            n_fn: self.stats.counts.n_fn,
            colonized_days: self.aug.colonized_days(self.ward),
        }
    }

    /// Runs the configured number of iterations, recording thinned draws after burn-in.
    pub fn run(mut self, progress: &mut dyn FnMut(Progress)) -> PosteriorSamples {
        let cfg = self.config.clone();
        let mut draws = Vec::with_capacity(cfg.draw_count() as usize);
        let mut snapshots = Vec::new();
        for i in 1..=cfg.iterations {
            self.step();
            if i > cfg.burn_in && (i - cfg.burn_in) % cfg.thin == 0 {
                draws.push(self.draw());
                if cfg.snapshot_stride > 0 && (draws.len() as u64) % cfg.snapshot_stride == 0 {
                    snapshots.push(Snapshot { iteration: i, theta: self.theta, augmentation: self.aug.clone() });
                }
            }
            if i % 1000 == 0 || i == cfg.iterations {
                progress(Progress { iteration: i, total: cfg.iterations });
            }
        }
        PosteriorSamples {
            draws,
            snapshots,
            acceptance: self.acceptance,
            final_theta: self.theta,
            final_augmentation: self.aug,
            max_recompute_discrepancy: self.max_discrepancy,
        }
    }
}

/// Runs one chain on `ward`. Deterministic given `config.seed`.
pub fn run_chain(ward: &WardData, config: &SamplerConfig) -> Result<PosteriorSamples> {
    run_chain_with_progress(ward, config, &mut |_| {})
}

pub fn run_chain_with_progress(
    ward: &WardData,
    config: &SamplerConfig,
    progress: &mut dyn FnMut(Progress),
) -> Result<PosteriorSamples> {
    Ok(Chain::new(ward, config.clone())?.run(progress))
}
