//! Domain vocabulary: episodes, ward data, parameters and the latent augmentation.
//!
//! Time is measured in days from the start of the study window, so every stored
//! event lies in `[0, study_length]`.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};

/// Days since the start of the study window.
pub type TimePoint = f64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum TestResult {
    Positive,
    Negative,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ScreeningTest {
    pub time: TimePoint,
    pub result: TestResult,
}

impl ScreeningTest {
    pub fn positive(time: TimePoint) -> Self {
        Self { time, result: TestResult::Positive }
    }

    pub fn negative(time: TimePoint) -> Self {
        Self { time, result: TestResult::Negative }
    }
}

/// Half-open interval `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Interval {
    pub start: TimePoint,
    pub end: TimePoint,
}

impl Interval {
    pub fn new(start: TimePoint, end: TimePoint) -> Self {
        Self { start, end }
    }

    pub fn contains(&self, t: TimePoint) -> bool {
        self.start <= t && t < self.end
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum AdmissionClass {
    /// No positive test within the carriage window before this admission. Each
    /// new admission is a formally distinct patient.
    NewAdmission,
    /// Re-admitted within the carriage window of a positive test: colonized for
    /// the whole stay by assumption and never updated by the sampler.
    ColonizedOnReadmission,
}

/// One admission-to-discharge stay of one person on one ward.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PatientEpisode {
    pub id: String,
    pub person: String,
    pub admission: TimePoint,
    pub discharge: TimePoint,
    /// Sorted by time.
    pub tests: Vec<ScreeningTest>,
    /// Sorted, non-overlapping, within `[admission, discharge]`.
    pub precautions: Vec<Interval>,
    pub class: AdmissionClass,
}

impl PatientEpisode {
    pub fn new(id: impl Into<String>, person: impl Into<String>, admission: TimePoint, discharge: TimePoint) -> Self {
        Self {
            id: id.into(),
            person: person.into(),
            admission,
            discharge,
            tests: Vec::new(),
            precautions: Vec::new(),
            class: AdmissionClass::NewAdmission,
        }
    }

    pub fn with_tests(mut self, tests: impl IntoIterator<Item = ScreeningTest>) -> Self {
        self.tests = tests.into_iter().collect();
        self
    }

    pub fn with_precautions(mut self, precautions: impl IntoIterator<Item = Interval>) -> Self {
        self.precautions = precautions.into_iter().collect();
        self
    }

    pub fn with_class(mut self, class: AdmissionClass) -> Self {
        self.class = class;
        self
    }

    pub fn stay(&self) -> f64 {
        self.discharge - self.admission
    }

    /// Time of the first positive test (`t_j`), if any.
    pub fn first_positive(&self) -> Option<TimePoint> {
        self.tests.iter().find(|t| t.result == TestResult::Positive).map(|t| t.time)
    }

    /// Start of the first precaution interval (`p_j`), if ever isolated.
    pub fn first_precaution(&self) -> Option<TimePoint> {
        self.precautions.first().map(|i| i.start)
    }

    pub fn is_isolated_at(&self, t: TimePoint) -> bool {
        self.precautions.iter().any(|i| i.contains(t))
    }

    pub fn positive_count(&self) -> usize {
        self.tests.iter().filter(|t| t.result == TestResult::Positive).count()
    }

    fn invalid(&self, reason: impl Into<String>) -> Error {
        Error::InvalidEpisode { episode: self.id.clone(), reason: reason.into() }
    }

    /// Checks the structural invariants against a study window `[0, study_length]`.
    pub fn validate(&self, study_length: f64) -> Result<()> {
        let (a, d) = (self.admission, self.discharge);
        if !(a.is_finite() && d.is_finite()) {
            return Err(self.invalid("non-finite admission or discharge"));
        }
        if a >= d {
            return Err(self.invalid(format!("admission {a} is not before discharge {d}")));
        }
        if a < 0.0 || d > study_length {
            return Err(self.invalid(format!("stay [{a}, {d}] leaves the study window [0, {study_length}]")));
        }
        for w in self.tests.windows(2) {
            if w[1].time < w[0].time {
                return Err(self.invalid("tests are not sorted by time"));
            }
        }
        if let Some(t) = self.tests.iter().find(|t| t.time < a || t.time > d) {
            return Err(self.invalid(format!("test at {} outside the stay", t.time)));
        }
        for i in &self.precautions {
            if !(i.start < i.end) || i.start < a || i.end > d {
                return Err(self.invalid(format!("precaution interval [{}, {}) invalid for the stay", i.start, i.end)));
            }
        }
        for w in self.precautions.windows(2) {
            if w[1].start < w[0].end {
                return Err(self.invalid("precaution intervals overlap or are unsorted"));
            }
        }
        Ok(())
    }
}

/// Validated episodes of a single ward over the study window `[0, study_length]`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct WardData {
    pub ward_id: String,
    pub study_length: f64,
    episodes: Vec<PatientEpisode>,
    pub readmission_window: f64,
}

impl WardData {
    /// Validates every episode and orders them by admission time (ties by
    /// discharge, then id).
    pub fn new(
        ward_id: impl Into<String>,
        study_length: f64,
        mut episodes: Vec<PatientEpisode>,
        readmission_window: f64,
    ) -> Result<Self> {
        if !(study_length > 0.0 && study_length.is_finite()) {
            return Err(Error::InvalidConfig(format!("study length must be positive, got {study_length}")));
        }
        for e in &episodes {
            e.validate(study_length)?;
        }
        episodes.sort_by(|x, y| {
            x.admission
                .total_cmp(&y.admission)
                .then(x.discharge.total_cmp(&y.discharge))
                .then_with(|| x.id.cmp(&y.id))
        });
        for w in episodes.windows(2) {
            if w[0].id == w[1].id {
                return Err(Error::InvalidEpisode { episode: w[0].id.clone(), reason: "duplicate episode id".to_string() });
            }
        }
        Ok(Self { ward_id: ward_id.into(), study_length, episodes, readmission_window })
    }

    pub fn episodes(&self) -> &[PatientEpisode] {
        &self.episodes
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    /// Number of patients present at `t` (an episode occupies `[admission, discharge)`).
    pub fn occupancy_at(&self, t: TimePoint) -> usize {
        self.episodes.iter().filter(|e| e.admission <= t && t < e.discharge).count()
    }

    /// Largest occupancy over the study window.
    pub fn peak_occupancy(&self) -> usize {
        // Discharges sort before admissions at equal times.
        let mut events: Vec<(f64, i32)> = Vec::with_capacity(2 * self.episodes.len());
        for e in &self.episodes {
            events.push((e.admission, 1));
            events.push((e.discharge, -1));
        }
        events.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
        let (mut cur, mut peak) = (0i32, 0i32);
        for (_, delta) in events {
            cur += delta;
            peak = peak.max(cur);
        }
        peak as usize
    }

    pub fn n_new_admissions(&self) -> usize {
        self.episodes.iter().filter(|e| e.class == AdmissionClass::NewAdmission).count()
    }

    /// Episodes whose admission class is [`AdmissionClass::NewAdmission`] and which
    /// have at least one positive test (the set 𝒫).
    pub fn positive_episodes(&self) -> impl Iterator<Item = usize> + '_ {
        self.episodes
            .iter()
            .enumerate()
            .filter(|(_, e)| e.class == AdmissionClass::NewAdmission && e.first_positive().is_some())
            .map(|(i, _)| i)
    }

    /// Copy with different episodes; the study window and window length are kept.
    pub fn with_episodes(&self, episodes: Vec<PatientEpisode>) -> Result<Self> {
        Self::new(self.ward_id.clone(), self.study_length, episodes, self.readmission_window)
    }
}

/// Assigns admission classes. An episode is colonized on re-admission iff the
/// same person had a positive test in an earlier episode at time `τ` with
/// `0 <= admission - τ < window`.
///
/// Returns one class per input episode, in input order. The `class` field of
/// the inputs is ignored.
pub fn classify_admissions(episodes: &[PatientEpisode], window: f64) -> Result<Vec<AdmissionClass>> {
    let mut by_person: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, e) in episodes.iter().enumerate() {
        by_person.entry(e.person.as_str()).or_default().push(i);
    }
    let mut classes = alloc::vec![AdmissionClass::NewAdmission; episodes.len()];
    for (person, mut idx) in by_person {
        idx.sort_by(|&x, &y| episodes[x].admission.total_cmp(&episodes[y].admission));
        for w in idx.windows(2) {
            let (prev, next) = (&episodes[w[0]], &episodes[w[1]]);
            if next.admission < prev.discharge {
                return Err(Error::OverlappingEpisodes {
                    person: person.to_string(),
                    first: prev.id.clone(),
                    second: next.id.clone(),
                });
            }
        }
        for (k, &i) in idx.iter().enumerate() {
            let a = episodes[i].admission;
            let readmitted = idx[..k].iter().any(|&prev| {
                episodes[prev]
                    .tests
                    .iter()
                    .filter(|t| t.result == TestResult::Positive)
                    .any(|t| {
                        let gap = a - t.time;
                        gap >= 0.0 && gap < window
                    })
            });
            if readmitted {
                classes[i] = AdmissionClass::ColonizedOnReadmission;
            }
        }
    }
    Ok(classes)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ModelKind {
    /// λ = β₀ + β₁C + β₂Q.
    Full,
    /// The full rate with a prior that pins β₀ near zero.
    NoBackground,
    /// λ = β₀ + β₁·1{C>0} + β₂·1{Q>0}.
    NonLinear,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Full, ModelKind::NoBackground, ModelKind::NonLinear];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Full => "full",
            ModelKind::NoBackground => "no_background",
            ModelKind::NonLinear => "non_linear",
        }
    }

    /// Whether the rate depends on colonized counts only through their presence.
    pub fn is_presence_based(self) -> bool {
        matches!(self, ModelKind::NonLinear)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(ModelKind::Full),
            "no_background" | "no-background" => Ok(ModelKind::NoBackground),
            "non_linear" | "non-linear" | "nonlinear" => Ok(ModelKind::NonLinear),
            other => Err(Error::InvalidArgument(format!("unknown model kind `{other}`"))),
        }
    }
}

/// Model parameters: test sensitivity, importation probability and the three
/// colonization rates (per day).
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Theta {
    pub p: f64,
    pub phi: f64,
    pub beta0: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub model: ModelKind,
}

impl Theta {
    pub fn new(p: f64, phi: f64, beta0: f64, beta1: f64, beta2: f64, model: ModelKind) -> Self {
        Self { p, phi, beta0, beta1, beta2, model }
    }

    pub fn betas(&self) -> [f64; 3] {
        [self.beta0, self.beta1, self.beta2]
    }

    pub fn set_beta(&mut self, index: usize, value: f64) {
        match index {
            0 => self.beta0 = value,
            1 => self.beta1 = value,
            2 => self.beta2 = value,
            _ => panic!("beta index {index} out of range"),
        }
    }

    pub fn in_support(&self) -> bool {
        (0.0..=1.0).contains(&self.p)
            && (0.0..=1.0).contains(&self.phi)
            && self.betas().iter().all(|&b| b >= 0.0 && b.is_finite())
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_support() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("parameters outside their support: {self:?}")))
        }
    }
}

/// Latent colonization state of one episode.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Colonization {
    Uncolonized,
    /// Colonized at the admission instant (imported, or colonized on re-admission).
    OnAdmission,
    /// Colonized on the ward at the given time, strictly after admission.
    OnWard(TimePoint),
}

impl Colonization {
    pub fn is_colonized(self) -> bool {
        !matches!(self, Colonization::Uncolonized)
    }
}

/// Which of the sampler's sets an episode belongs to under an augmentation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpisodeSet {
    /// Has a positive test (𝒫): always colonized.
    Positive,
    /// No positive test, currently colonized (𝒩₁).
    Colonized,
    /// No positive test, currently uncolonized (𝒩₀).
    Uncolonized,
    /// Colonized on re-admission; fixed by the data.
    Readmission,
}

/// The latent colonization assignment `c`, one entry per episode of a ward.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Augmentation {
    pub status: Vec<Colonization>,
}

impl Augmentation {
    /// Nobody colonized except re-admissions (at admission) and positive
    /// episodes, which are colonized at their first positive test.
    pub fn initial(ward: &WardData) -> Self {
        let status = ward
            .episodes()
            .iter()
            .map(|e| match (e.class, e.first_positive()) {
                (AdmissionClass::ColonizedOnReadmission, _) => Colonization::OnAdmission,
                (AdmissionClass::NewAdmission, Some(t)) if t > e.admission => Colonization::OnWard(t),
                (AdmissionClass::NewAdmission, Some(_)) => Colonization::OnAdmission,
                (AdmissionClass::NewAdmission, None) => Colonization::Uncolonized,
            })
            .collect();
        Self { status }
    }

    pub fn get(&self, episode: usize) -> Colonization {
        self.status[episode]
    }

    /// Colonization time of an episode, if colonized.
    pub fn time(&self, ward: &WardData, episode: usize) -> Option<TimePoint> {
        match self.status[episode] {
            Colonization::Uncolonized => None,
            Colonization::OnAdmission => Some(ward.episodes()[episode].admission),
            Colonization::OnWard(c) => Some(c),
        }
    }

    pub fn set_of(&self, ward: &WardData, episode: usize) -> EpisodeSet {
        let e = &ward.episodes()[episode];
        if e.class == AdmissionClass::ColonizedOnReadmission {
            EpisodeSet::Readmission
        } else if e.first_positive().is_some() {
            EpisodeSet::Positive
        } else if self.status[episode].is_colonized() {
            EpisodeSet::Colonized
        } else {
            EpisodeSet::Uncolonized
        }
    }

    /// Size of 𝒩₁: colonized episodes without a positive test.
    pub fn n_unobserved_colonized(&self, ward: &WardData) -> usize {
        (0..self.status.len()).filter(|&j| self.set_of(ward, j) == EpisodeSet::Colonized).count()
    }

    /// Total colonized patient-days, `Σ (d_j - c_j)` over colonized episodes.
    pub fn colonized_days(&self, ward: &WardData) -> f64 {
        (0..self.status.len())
            .filter_map(|j| self.time(ward, j).map(|c| ward.episodes()[j].discharge - c))
            .sum()
    }

    fn invalid(ward: &WardData, j: usize, reason: impl Into<String>) -> Error {
        Error::InvalidAugmentation { episode: ward.episodes()[j].id.clone(), reason: reason.into() }
    }

    /// Checks the augmentation invariants against the ward data.
    pub fn validate(&self, ward: &WardData) -> Result<()> {
        if self.status.len() != ward.len() {
            return Err(Error::InvalidArgument(format!(
                "augmentation has {} entries for {} episodes",
                self.status.len(),
                ward.len()
            )));
        }
        (0..ward.len()).try_for_each(|j| self.validate_episode(ward, j))
    }

    /// Checks the invariants of a single episode.
    pub fn validate_episode(&self, ward: &WardData, j: usize) -> Result<()> {
        let e = &ward.episodes()[j];
        let s = self.status[j];
        if let Colonization::OnWard(c) = s {
            if !(c > e.admission && c <= e.discharge) {
                return Err(Self::invalid(ward, j, format!("colonization time {c} outside ({}, {}]", e.admission, e.discharge)));
            }
        }
        match self.set_of(ward, j) {
            EpisodeSet::Readmission => {
                if s != Colonization::OnAdmission {
                    return Err(Self::invalid(ward, j, "re-admission must be colonized at admission"));
                }
            }
            EpisodeSet::Positive => {
                let t = e.first_positive().unwrap_or(f64::INFINITY);
                match s {
                    Colonization::Uncolonized => {
                        return Err(Self::invalid(ward, j, "episode with a positive test must be colonized"))
                    }
                    Colonization::OnWard(c) if c > t => {
                        return Err(Self::invalid(ward, j, format!("colonized at {c}, after first positive test {t}")))
                    }
                    _ => {}
                }
            }
            EpisodeSet::Colonized | EpisodeSet::Uncolonized => {}
        }
        Ok(())
    }
}

/// Counts entering the importation and testing factors of the likelihood.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CountsSummary {
    /// New admissions.
    pub n_a: u64,
    /// New admissions colonized on admission.
    pub n_ca: u64,
    /// Positive tests (all true positives under perfect specificity).
    pub n_tp: u64,
    /// Negative tests taken at or after the colonization time of a colonized episode.
    pub n_fn: u64,
}

/// Descriptive statistics of a ward, per episode.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct WardSummary {
    pub patients: usize,
    pub persons: usize,
    pub los_mean: f64,
    pub los_sd: f64,
    /// Percentage of episodes with any time under contact precautions.
    pub percent_in_precautions: f64,
    pub tests_mean: f64,
    pub tests_sd: f64,
    pub positives_mean: f64,
    pub positives_sd: f64,
    /// Episodes with at least one positive test.
    pub detected: usize,
    pub readmissions: usize,
}

impl WardData {
    pub fn summary(&self) -> WardSummary {
        let n = self.episodes.len();
        let stat = |f: &dyn Fn(&PatientEpisode) -> f64| -> (f64, f64) {
            let v: Vec<f64> = self.episodes.iter().map(f).collect();
            if v.is_empty() {
                (0.0, 0.0)
            } else if v.len() == 1 {
                (v[0], 0.0)
            } else {
                (crate::math::mean(&v), crate::math::sqrt(crate::math::variance(&v)))
            }
        };
        let (los_mean, los_sd) = stat(&|e| e.stay());
        let (tests_mean, tests_sd) = stat(&|e| e.tests.len() as f64);
        let (positives_mean, positives_sd) = stat(&|e| e.positive_count() as f64);
        let isolated = self.episodes.iter().filter(|e| !e.precautions.is_empty()).count();
        let persons = self.episodes.iter().map(|e| e.person.as_str()).collect::<alloc::collections::BTreeSet<_>>().len();
        WardSummary {
            patients: n,
            persons,
            los_mean,
            los_sd,
            percent_in_precautions: if n == 0 { 0.0 } else { 100.0 * isolated as f64 / n as f64 },
            tests_mean,
            tests_sd,
            positives_mean,
            positives_sd,
            detected: self.episodes.iter().filter(|e| e.first_positive().is_some()).count(),
            readmissions: n - persons,
        }
    }
}
