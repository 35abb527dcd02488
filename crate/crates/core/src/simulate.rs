//! Forward simulation of colonization, screening and isolation.
//!
//! [`simulate_colonization`] keeps the admission and discharge frame of a ward
//! and redraws everything else: importation at admission, on-ward acquisition
//! as competing exponentials under the piecewise-constant rate, test results
//! and (depending on the policy) precautions. [`generate_synthetic_ward`] also
//! draws the frame from a bed-limited arrival process.

use alloc::collections::BinaryHeap;
use alloc::format;
use alloc::vec::Vec;
use core::cmp::{Ordering, Reverse};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, LogNormal};

use crate::error::{Error, Result};
use crate::likelihood::colonization_rate;
use crate::math::{floor, ln, sqrt};
use crate::timeline::{EventKind, PatientState, WardCounts};
use crate::types::{
    AdmissionClass, Augmentation, Colonization, Interval, PatientEpisode, ScreeningTest, TestResult, Theta, WardData,
};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "mode", rename_all = "snake_case"))]
pub enum TestSchedule {
    /// Keep the observed test times; only results are redrawn.
    ReplayObserved,
    /// A test at admission and every 7 days after, each done with probability `compliance`.
    AdmissionPlusWeekly { compliance: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "mode", rename_all = "snake_case"))]
pub enum PrecautionPolicy {
    ReplayObserved,
    /// Isolate from `delay` days after the first positive test until discharge.
    OnDetection { delay: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SimPolicy {
    pub tests: TestSchedule,
    pub precautions: PrecautionPolicy,
}

impl Default for SimPolicy {
    fn default() -> Self {
        Self { tests: TestSchedule::ReplayObserved, precautions: PrecautionPolicy::OnDetection { delay: 1.0 } }
    }
}

impl SimPolicy {
    pub fn validate(&self) -> Result<()> {
        if let TestSchedule::AdmissionPlusWeekly { compliance } = self.tests {
            if !(0.0..=1.0).contains(&compliance) {
                return Err(Error::InvalidConfig(format!("compliance must lie in [0, 1], got {compliance}")));
            }
        }
        if let PrecautionPolicy::OnDetection { delay } = self.precautions {
            if !(delay >= 0.0 && delay.is_finite()) {
                return Err(Error::InvalidConfig(format!("precaution delay must be non-negative, got {delay}")));
            }
        }
        Ok(())
    }
}

/// Observable data of a simulated ward plus the latent truth behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedWard {
    pub ward: WardData,
    pub truth: Augmentation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum SimKind {
    Discharge,
    PrecautionEnd,
    PrecautionStart,
    Admission,
    Test,
}

#[derive(Debug, Clone, Copy)]
struct SimEvent {
    time: f64,
    kind: SimKind,
    episode: u32,
    /// Index into the episode's test list for `Test` events.
    test: u32,
}

impl PartialEq for SimEvent {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for SimEvent {}

impl PartialOrd for SimEvent {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for SimEvent {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time
            .total_cmp(&other.time)
            .then(self.kind.cmp(&other.kind))
            .then(self.episode.cmp(&other.episode))
            .then(self.test.cmp(&other.test))
    }
}

/// Present susceptibles, for uniform picks.
struct SusceptiblePool {
    members: Vec<u32>,
    slot: Vec<u32>,
}

impl SusceptiblePool {
    fn insert(&mut self, j: usize) {
        self.slot[j] = self.members.len() as u32;
        self.members.push(j as u32);
    }

    fn remove(&mut self, j: usize) {
        let s = self.slot[j] as usize;
        self.members.swap_remove(s);
        if let Some(&moved) = self.members.get(s) {
            self.slot[moved as usize] = s as u32;
        }
    }
}

fn weekly_tests<R: Rng>(e: &PatientEpisode, compliance: f64, rng: &mut R) -> Vec<f64> {
    let mut times = Vec::new();
    let mut t = e.admission;
    while t < e.discharge {
        if rng.random::<f64>() < compliance {
            times.push(t);
        }
        t += 7.0;
    }
    times
}

/// Whether an earlier episode of the same person tested positive within the window.
fn readmitted(episodes: &[PatientEpisode], earlier: &[usize], admission: f64, window: f64) -> bool {
    earlier.iter().any(|&k| {
        episodes[k].tests.iter().any(|t| {
            let gap = admission - t.time;
            t.result == TestResult::Positive && gap >= 0.0 && gap < window
        })
    })
}

fn simulate_inner<R: Rng>(
    frame: &WardData,
    theta: &Theta,
    policy: &SimPolicy,
    dynamic_classes: bool,
    rng: &mut R,
) -> Result<SimulatedWard> {
    policy.validate()?;
    theta.validate()?;
    let n = frame.len();
    let mut episodes: Vec<PatientEpisode> = frame.episodes().to_vec();
    let mut test_times: Vec<Vec<f64>> = Vec::with_capacity(n);
    for e in &mut episodes {
        let times = match policy.tests {
            TestSchedule::ReplayObserved => e.tests.iter().map(|t| t.time).collect(),
            TestSchedule::AdmissionPlusWeekly { compliance } => weekly_tests(e, compliance, rng),
        };
        test_times.push(times);
        e.tests.clear();
        if let PrecautionPolicy::OnDetection { .. } = policy.precautions {
            e.precautions.clear();
        }
    }

    // Earlier episodes of the same person, for re-admission classification.
    let mut earlier: Vec<Vec<usize>> = alloc::vec![Vec::new(); n];
    if dynamic_classes {
        let mut by_person: alloc::collections::BTreeMap<&str, Vec<usize>> = Default::default();
        for (j, e) in frame.episodes().iter().enumerate() {
            let list = by_person.entry(e.person.as_str()).or_default();
            earlier[j] = list.clone();
            list.push(j);
        }
    }

    let mut heap = BinaryHeap::new();
    let push = |heap: &mut BinaryHeap<Reverse<SimEvent>>, time, kind, j: usize, test: usize| {
        heap.push(Reverse(SimEvent { time, kind, episode: j as u32, test: test as u32 }));
    };
    for (j, e) in episodes.iter().enumerate() {
        push(&mut heap, e.admission, SimKind::Admission, j, 0);
        push(&mut heap, e.discharge, SimKind::Discharge, j, 0);
        for (k, &t) in test_times[j].iter().enumerate() {
            push(&mut heap, t, SimKind::Test, j, k);
        }
        for i in &e.precautions {
            push(&mut heap, i.start, SimKind::PrecautionStart, j, 0);
            push(&mut heap, i.end, SimKind::PrecautionEnd, j, 0);
        }
    }

    let mut status = alloc::vec![Colonization::Uncolonized; n];
    let mut states = alloc::vec![PatientState::default(); n];
    let mut detected = alloc::vec![false; n];
    let mut counts = WardCounts::default();
    let mut pool = SusceptiblePool { members: Vec::new(), slot: alloc::vec![0; n] };
    let mut now = 0.0;

    while let Some(&Reverse(next)) = heap.peek() {
        let rate = colonization_rate(theta, counts.colonized, counts.isolated) * pool.members.len() as f64;
        if rate > 0.0 {
            let t = now + Exp::new(rate).expect("positive rate").sample(rng);
            if t < next.time {
                let j = pool.members[rng.random_range(0..pool.members.len())] as usize;
                pool.remove(j);
                counts.apply(&mut states[j], EventKind::Colonization);
                status[j] = Colonization::OnWard(t);
                now = t;
                continue;
            }
        }
        heap.pop();
        now = next.time;
        let j = next.episode as usize;
        match next.kind {
            SimKind::Admission => {
                if dynamic_classes {
                    let back = readmitted(&episodes, &earlier[j], episodes[j].admission, frame.readmission_window);
                    episodes[j].class = if back {
                        AdmissionClass::ColonizedOnReadmission
                    } else {
                        AdmissionClass::NewAdmission
                    };
                }
                let colonized = match episodes[j].class {
                    AdmissionClass::ColonizedOnReadmission => true,
                    AdmissionClass::NewAdmission => rng.random::<f64>() < theta.phi,
                };
                if colonized {
                    status[j] = Colonization::OnAdmission;
                    states[j].colonized = true;
                }
                counts.apply(&mut states[j], EventKind::Admission);
                if !colonized {
                    pool.insert(j);
                }
            }
            SimKind::Discharge => {
                if !states[j].colonized {
                    pool.remove(j);
                }
                counts.apply(&mut states[j], EventKind::Discharge);
            }
            SimKind::PrecautionStart => {
                counts.apply(&mut states[j], EventKind::PrecautionStart);
            }
            SimKind::PrecautionEnd => {
                counts.apply(&mut states[j], EventKind::PrecautionEnd);
            }
            SimKind::Test => {
                let positive = states[j].colonized && rng.random::<f64>() < theta.p;
                let time = next.time;
                episodes[j].tests.push(if positive { ScreeningTest::positive(time) } else { ScreeningTest::negative(time) });
                if positive && !detected[j] {
                    detected[j] = true;
                    if let PrecautionPolicy::OnDetection { delay } = policy.precautions {
                        let start = time + delay;
                        let end = episodes[j].discharge;
                        if start < end {
                            episodes[j].precautions.push(Interval::new(start, end));
                            push(&mut heap, start, SimKind::PrecautionStart, j, 0);
                            push(&mut heap, end, SimKind::PrecautionEnd, j, 0);
                        }
                    }
                }
            }
        }
    }

    let ward = frame.with_episodes(episodes)?;
    Ok(SimulatedWard { ward, truth: Augmentation { status } })
}

/// Redraws colonization, test results and (per policy) precautions on the
/// admission frame of `frame`. Admission classes are kept from the frame.
pub fn simulate_colonization<R: Rng>(frame: &WardData, theta: &Theta, policy: &SimPolicy, rng: &mut R) -> Result<SimulatedWard> {
    simulate_inner(frame, theta, policy, false, rng)
}

/// Parameters of a synthetic ward.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SyntheticWardConfig {
    pub ward_id: alloc::string::String,
    pub beds: u32,
    /// Whole days.
    pub study_days: u32,
    /// Poisson arrival rate (patients per day); arrivals to a full ward are lost.
    pub arrival_rate: f64,
    /// Median and standard deviation of the log-normal length of stay, in days.
    pub los_median: f64,
    pub los_sd: f64,
    pub theta: Theta,
    pub policy: SimPolicy,
    /// Probability that an arrival is a returning patient.
    pub readmission_probability: f64,
    pub readmission_window: f64,
    pub seed: u64,
}

impl SyntheticWardConfig {
    pub fn new(theta: Theta, seed: u64) -> Self {
        Self {
            ward_id: "synthetic".into(),
            beds: 10,
            study_days: 510,
            arrival_rate: 2.5,
            los_median: 2.5,
            los_sd: 3.0,
            theta,
            policy: SimPolicy {
                tests: TestSchedule::AdmissionPlusWeekly { compliance: 0.9 },
                precautions: PrecautionPolicy::OnDetection { delay: 1.0 },
            },
            readmission_probability: 0.0,
            readmission_window: 180.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: alloc::string::String| Err(Error::InvalidConfig(msg));
        if self.beds == 0 {
            return bad("a ward needs at least one bed".into());
        }
        if self.study_days == 0 {
            return bad("study length must be at least one day".into());
        }
        if !(self.arrival_rate > 0.0 && self.arrival_rate.is_finite()) {
            return bad(format!("arrival rate must be positive, got {}", self.arrival_rate));
        }
        if !(self.los_median > 0.0 && self.los_sd > 0.0 && self.los_median.is_finite() && self.los_sd.is_finite()) {
            return bad("length-of-stay median and SD must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.readmission_probability) {
            return bad(format!("readmission probability must lie in [0, 1], got {}", self.readmission_probability));
        }
        if !(self.readmission_window >= 0.0) {
            return bad("readmission window must be non-negative".into());
        }
        self.policy.validate()?;
        self.theta.validate()
    }

    /// Log-normal (μ, σ) with the configured median and standard deviation.
    pub fn los_params(&self) -> (f64, f64) {
        let r = self.los_sd / self.los_median;
        let x = (1.0 + sqrt(1.0 + 4.0 * r * r)) / 2.0;
        (ln(self.los_median), sqrt(ln(x)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticWard {
    pub ward: WardData,
    pub theta: Theta,
    pub truth: Augmentation,
}

/// Draws the admission frame: integer-day arrivals, lost when all beds are taken.
/// Episodes are named `<person>#<n>` for the person's n-th stay.
fn synthetic_frame<R: Rng>(config: &SyntheticWardConfig, rng: &mut R) -> Result<WardData> {
    let end = config.study_days as f64;
    let (mu, sigma) = config.los_params();
    let los = LogNormal::new(mu, sigma).map_err(|e| Error::InvalidConfig(format!("length of stay: {e}")))?;
    let gaps = Exp::new(config.arrival_rate).expect("validated rate");
    let mut occupied: BinaryHeap<Reverse<u64>> = BinaryHeap::new();
    let mut last_discharge: Vec<f64> = Vec::new();
    let mut stays: Vec<u32> = Vec::new();
    let mut episodes = Vec::new();
    let mut clock = 0.0;
    loop {
        clock += gaps.sample(rng);
        let day = floor(clock);
        if day >= end {
            break;
        }
        while occupied.peek().is_some_and(|Reverse(d)| *d as f64 <= day) {
            occupied.pop();
        }
        if occupied.len() >= config.beds as usize {
            continue;
        }
        let stay = libm::round(los.sample(rng)).max(1.0);
        let discharge = (day + stay).min(end);
        occupied.push(Reverse(discharge as u64));

        let returning: Vec<usize> = if config.readmission_probability > 0.0 {
            (0..last_discharge.len()).filter(|&p| last_discharge[p] <= day).collect()
        } else {
            Vec::new()
        };
        let person = if !returning.is_empty() && rng.random::<f64>() < config.readmission_probability {
            let p = returning[rng.random_range(0..returning.len())];
            last_discharge[p] = discharge;
            stays[p] += 1;
            p
        } else {
            last_discharge.push(discharge);
            stays.push(1);
            last_discharge.len() - 1
        };
        let name = format!("P{:05}", person + 1);
        episodes.push(PatientEpisode::new(format!("{name}#{}", stays[person]), name, day, discharge));
    }
    WardData::new(config.ward_id.clone(), end, episodes, config.readmission_window)
}

/// Generates a synthetic ward with known parameters and colonization times.
pub fn generate_synthetic_ward(config: &SyntheticWardConfig) -> Result<SyntheticWard> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let frame = synthetic_frame(config, &mut rng)?;
    let sim = simulate_inner(&frame, &config.theta, &config.policy, config.readmission_probability > 0.0, &mut rng)?;
    Ok(SyntheticWard { ward: sim.ward, theta: config.theta, truth: sim.truth })
}

/// Episodes whose first positive test falls in each `interval`-day block of the study.
pub fn detected_colonizations_by_interval(ward: &WardData, interval: f64) -> Result<Vec<u32>> {
    if !(interval > 0.0 && interval.is_finite()) {
        return Err(Error::InvalidArgument(format!("interval must be positive, got {interval}")));
    }
    let bins = libm::ceil(ward.study_length / interval).max(1.0) as usize;
    let mut out = alloc::vec![0u32; bins];
    for e in ward.episodes() {
        if let Some(t) = e.first_positive() {
            let b = (floor(t / interval) as usize).min(bins - 1);
            out[b] += 1;
        }
    }
    Ok(out)
}

/// Episodes with at least one positive test.
pub fn detected_colonizations(ward: &WardData) -> u32 {
    ward.episodes().iter().filter(|e| e.first_positive().is_some()).count() as u32
}
