//! Piecewise-constant ward state under a given augmentation.
//!
//! Events at equal times are totally ordered by kind: discharges, precaution
//! ends, colonizations, precaution starts, admissions; then by episode index.
//! "Counts just before" a colonization are taken immediately before that event
//! in this order, so a patient colonized on admission exerts pressure from its
//! admission onward but never counts towards its own rate.

use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::error::{Error, Result};
use crate::likelihood::colonization_rate;
use crate::types::{Augmentation, Colonization, ModelKind, Theta, WardData};

/// Patients present on the ward, split by state. Isolation of susceptible
/// patients does not enter any rate and is not tracked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash, PartialOrd, Ord)]
pub struct WardCounts {
    /// S: uncolonized patients.
    pub susceptible: u32,
    /// C: colonized patients out of isolation.
    pub colonized: u32,
    /// Q: colonized patients in isolation.
    pub isolated: u32,
}

impl WardCounts {
    pub fn new(susceptible: u32, colonized: u32, isolated: u32) -> Self {
        Self { susceptible, colonized, isolated }
    }

    pub fn total(&self) -> u32 {
        self.susceptible + self.colonized + self.isolated
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub(crate) enum EventKind {
    Discharge = 0,
    PrecautionEnd = 1,
    Colonization = 2,
    PrecautionStart = 3,
    Admission = 4,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Event {
    pub time: f64,
    pub kind: EventKind,
    pub episode: u32,
}

impl Event {
    pub fn new(time: f64, kind: EventKind, episode: usize) -> Self {
        Self { time, kind, episode: episode as u32 }
    }

    pub fn order(&self, other: &Self) -> Ordering {
        self.time
            .total_cmp(&other.time)
            .then(self.kind.cmp(&other.kind))
            .then(self.episode.cmp(&other.episode))
    }
}

/// Replay state of one patient.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub(crate) struct PatientState {
    pub present: bool,
    pub colonized: bool,
    pub isolated: bool,
}

#[derive(Clone, Copy)]
enum Category {
    Susceptible,
    Colonized,
    Isolated,
}

impl PatientState {
    fn category(self) -> Option<Category> {
        match (self.present, self.colonized, self.isolated) {
            (false, _, _) => None,
            (true, false, _) => Some(Category::Susceptible),
            (true, true, false) => Some(Category::Colonized),
            (true, true, true) => Some(Category::Isolated),
        }
    }
}

impl WardCounts {
    fn shift(&mut self, cat: Option<Category>, up: bool) {
        let slot = match cat {
            None => return,
            Some(Category::Susceptible) => &mut self.susceptible,
            Some(Category::Colonized) => &mut self.colonized,
            Some(Category::Isolated) => &mut self.isolated,
        };
        if up {
            *slot += 1;
        } else {
            *slot -= 1;
        }
    }

    /// Applies `event` to `state`, keeping the counts in step. Returns the counts
    /// just before the event.
    pub(crate) fn apply(&mut self, state: &mut PatientState, kind: EventKind) -> WardCounts {
        let before = *self;
        let old = state.category();
        match kind {
            EventKind::Admission => state.present = true,
            EventKind::Discharge => state.present = false,
            EventKind::PrecautionStart => state.isolated = true,
            EventKind::PrecautionEnd => state.isolated = false,
            EventKind::Colonization => state.colonized = true,
        }
        self.shift(old, false);
        self.shift(state.category(), true);
        before
    }
}

/// Running integrals of S(t)·f(C(t), Q(t)) for the five functions the rate
/// can depend on. Together with the acquisition pressures they determine the
/// colonization part of the likelihood for every model.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HazardIntegrals {
    /// ∫ S dt
    pub s: f64,
    /// ∫ S·C dt
    pub sc: f64,
    /// ∫ S·Q dt
    pub sq: f64,
    /// ∫ S·1{C>0} dt
    pub s_any_c: f64,
    /// ∫ S·1{Q>0} dt
    pub s_any_q: f64,
}

impl HazardIntegrals {
    pub fn add_segment(&mut self, len: f64, counts: WardCounts) {
        let s = counts.susceptible as f64 * len;
        if s == 0.0 {
            return;
        }
        self.s += s;
        self.sc += s * counts.colonized as f64;
        self.sq += s * counts.isolated as f64;
        if counts.colonized > 0 {
            self.s_any_c += s;
        }
        if counts.isolated > 0 {
            self.s_any_q += s;
        }
    }

    /// ∫ S(t) λ(t) dt for the given parameters.
    pub fn total_hazard(&self, theta: &Theta) -> f64 {
        let (c_term, q_term) = match theta.model {
            ModelKind::Full | ModelKind::NoBackground => (self.sc, self.sq),
            ModelKind::NonLinear => (self.s_any_c, self.s_any_q),
        };
        theta.beta0 * self.s + theta.beta1 * c_term + theta.beta2 * q_term
    }

    pub fn plus(&self, other: &Self) -> Self {
        Self {
            s: self.s + other.s,
            sc: self.sc + other.sc,
            sq: self.sq + other.sq,
            s_any_c: self.s_any_c + other.s_any_c,
            s_any_q: self.s_any_q + other.s_any_q,
        }
    }

    pub fn minus(&self, other: &Self) -> Self {
        Self {
            s: self.s - other.s,
            sc: self.sc - other.sc,
            sq: self.sq - other.sq,
            s_any_c: self.s_any_c - other.s_any_c,
            s_any_q: self.s_any_q - other.s_any_q,
        }
    }
}

/// An on-ward colonization together with the ward counts just before it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Acquisition {
    pub episode: usize,
    pub time: f64,
    pub before: WardCounts,
}

/// S, C, Q as piecewise constants on `[u_k, u_{k+1})`, `0 = u_0 < … < u_K = T_E`.
#[derive(Debug, Clone, PartialEq)]
pub struct WardTimeline {
    breaks: Vec<f64>,
    counts: Vec<WardCounts>,
    acquisitions: Vec<Acquisition>,
}

/// Static events of every episode plus the colonization events implied by `aug`.
pub(crate) fn ward_events(ward: &WardData, aug: Option<&Augmentation>) -> Vec<Event> {
    let mut events = Vec::with_capacity(ward.len() * 3);
    for (j, e) in ward.episodes().iter().enumerate() {
        events.push(Event::new(e.admission, EventKind::Admission, j));
        events.push(Event::new(e.discharge, EventKind::Discharge, j));
        for i in &e.precautions {
            events.push(Event::new(i.start, EventKind::PrecautionStart, j));
            events.push(Event::new(i.end, EventKind::PrecautionEnd, j));
        }
        if let Some(Colonization::OnWard(c)) = aug.map(|a| a.get(j)) {
            events.push(Event::new(c, EventKind::Colonization, j));
        }
    }
    events.sort_by(Event::order);
    events
}

/// Builds the ward timeline for `aug`, which must satisfy its invariants against `ward`.
pub fn build_timeline(ward: &WardData, aug: &Augmentation) -> WardTimeline {
    let events = ward_events(ward, Some(aug));
    let mut states: Vec<PatientState> = aug
        .status
        .iter()
        .map(|s| PatientState { colonized: *s == Colonization::OnAdmission, ..PatientState::default() })
        .collect();

    let mut breaks = Vec::with_capacity(events.len() + 1);
    let mut counts = Vec::with_capacity(events.len());
    let mut acquisitions = Vec::new();
    let mut current = WardCounts::default();
    let mut t_prev = 0.0;
    breaks.push(0.0);

    for ev in &events {
        if ev.time > t_prev {
            counts.push(current);
            breaks.push(ev.time);
            t_prev = ev.time;
        }
        let before = current.apply(&mut states[ev.episode as usize], ev.kind);
        if ev.kind == EventKind::Colonization {
            acquisitions.push(Acquisition { episode: ev.episode as usize, time: ev.time, before });
        }
    }
    if ward.study_length > t_prev {
        counts.push(current);
        breaks.push(ward.study_length);
    }
    WardTimeline { breaks, counts, acquisitions }
}

impl WardTimeline {
    /// Interval boundaries `u_0 … u_K`.
    pub fn breaks(&self) -> &[f64] {
        &self.breaks
    }

    /// Counts on each interval `[u_k, u_{k+1})`.
    pub fn counts(&self) -> &[WardCounts] {
        &self.counts
    }

    /// On-ward colonizations in event order.
    pub fn acquisitions(&self) -> &[Acquisition] {
        &self.acquisitions
    }

    pub fn end(&self) -> f64 {
        *self.breaks.last().unwrap_or(&0.0)
    }

    /// Left limit of (S, C, Q) at `t`, for `0 < t <= T_E`.
    pub fn counts_just_before(&self, t: f64) -> Result<WardCounts> {
        let end = self.end();
        if !(t > 0.0 && t <= end) {
            return Err(Error::TimeOutOfRange { time: t, end });
        }
        let idx = self.breaks.partition_point(|&u| u < t);
        Ok(self.counts[idx - 1])
    }

    /// Counts on the interval containing `t` (right-continuous value).
    pub fn counts_at(&self, t: f64) -> WardCounts {
        let idx = self.breaks.partition_point(|&u| u <= t);
        if idx == 0 || idx > self.counts.len() {
            return WardCounts::default();
        }
        self.counts[idx - 1]
    }

    /// Exact ∫ S(t) λ(t) dt over the study window.
    pub fn integrate_hazard(&self, theta: &Theta) -> f64 {
        self.counts
            .iter()
            .zip(self.breaks.windows(2))
            .map(|(c, w)| {
                let len = w[1] - w[0];
                len * c.susceptible as f64 * colonization_rate(theta, c.colonized, c.isolated)
            })
            .sum()
    }

    /// The five S-weighted integrals over the study window.
    pub fn hazard_integrals(&self) -> HazardIntegrals {
        let mut acc = HazardIntegrals::default();
        for (c, w) in self.counts.iter().zip(self.breaks.windows(2)) {
            acc.add_segment(w[1] - w[0], *c);
        }
        acc
    }
}
