//! Local likelihood updates for single colonization-time changes.
//!
//! Changing `c_j` only alters the ward state on `[min(c_old, c_new), d_j)`. The
//! [`WardIndex`] lets us recover the state just before that window and replay
//! the few events inside it under both configurations.

use alloc::vec::Vec;

use crate::likelihood::{episode_counts, PressureKey, StatsDelta, SufficientStats};
use crate::timeline::{ward_events, Event, EventKind, HazardIntegrals, PatientState, WardCounts};
use crate::types::{Augmentation, Colonization, WardData};

/// Static (augmentation-independent) events of a ward plus, for every prefix of
/// them, the set of patients present.
#[derive(Debug, Clone)]
pub struct WardIndex {
    events: Vec<Event>,
    present_offsets: Vec<u32>,
    present_ids: Vec<u32>,
}

impl WardIndex {
    pub fn new(ward: &WardData) -> Self {
        let events = ward_events(ward, None);
        let mut present: Vec<u32> = Vec::new();
        let mut present_offsets = Vec::with_capacity(events.len() + 2);
        let mut present_ids = Vec::new();
        present_offsets.extend([0, 0]);
        for ev in &events {
            match ev.kind {
                EventKind::Admission => present.push(ev.episode),
                EventKind::Discharge => {
                    if let Some(pos) = present.iter().position(|&k| k == ev.episode) {
                        present.swap_remove(pos);
                    }
                }
                _ => {}
            }
            present_ids.extend_from_slice(&present);
            present_offsets.push(present_ids.len() as u32);
        }
        Self { events, present_offsets, present_ids }
    }

    /// Patients present after the first `n` static events.
    fn present_after(&self, n: usize) -> &[u32] {
        &self.present_ids[self.present_offsets[n] as usize..self.present_offsets[n + 1] as usize]
    }
}

fn onset(ward: &WardData, j: usize, status: Colonization) -> f64 {
    match status {
        Colonization::Uncolonized => f64::INFINITY,
        Colonization::OnAdmission => ward.episodes()[j].admission,
        Colonization::OnWard(c) => c,
    }
}

struct WindowReplay {
    integrals: HazardIntegrals,
    pressure: Vec<PressureKey>,
}

/// Replays `events` (sorted) from the state at `t0−`, integrating up to `t_end`.
fn replay(
    events: &[Event],
    involved: &[u32],
    initial: &[PatientState],
    counts: WardCounts,
    t0: f64,
    t_end: f64,
) -> WindowReplay {
    let mut states = initial.to_vec();
    let mut counts = counts;
    let mut integrals = HazardIntegrals::default();
    let mut pressure = Vec::new();
    let mut t_prev = t0;
    for ev in events {
        if ev.time > t_prev {
            integrals.add_segment(ev.time - t_prev, counts);
            t_prev = ev.time;
        }
        let slot = involved.binary_search(&ev.episode).expect("event of an uninvolved patient");
        let before = counts.apply(&mut states[slot], ev.kind);
        if ev.kind == EventKind::Colonization {
            pressure.push((before.colonized, before.isolated));
        }
    }
    if t_end > t_prev {
        integrals.add_segment(t_end - t_prev, counts);
    }
    WindowReplay { integrals, pressure }
}

/// Change in sufficient statistics when episode `j` moves from `aug.status[j]` to `proposed`.
pub fn colonization_delta(
    index: &WardIndex,
    ward: &WardData,
    aug: &Augmentation,
    stats: &SufficientStats,
    j: usize,
    proposed: Colonization,
) -> StatsDelta {
    let current = aug.get(j);
    let (old_ca, old_fn) = episode_counts(ward, j, current);
    let (new_ca, new_fn) = episode_counts(ward, j, proposed);
    let mut counts = stats.counts;
    counts.n_ca = counts.n_ca + new_ca - old_ca;
    counts.n_fn = counts.n_fn + new_fn - old_fn;

    let t0 = onset(ward, j, current).min(onset(ward, j, proposed));
    if current == proposed || t0 == f64::INFINITY {
        return StatsDelta { counts, ..StatsDelta::default() };
    }
    let e = &ward.episodes()[j];
    let end_key = Event::new(e.discharge, EventKind::Colonization, j);

    let first = index.events.partition_point(|ev| ev.time < t0);
    let last = first + index.events[first..].partition_point(|ev| ev.order(&end_key).is_le());
    let static_window = &index.events[first..last];

    let mut involved: Vec<u32> = index.present_after(first).to_vec();
    involved.extend(static_window.iter().map(|ev| ev.episode));
    involved.push(j as u32);
    involved.sort_unstable();
    involved.dedup();

    let in_window = |ev: &Event| ev.time >= t0 && ev.order(&end_key).is_le();
    let mut events: Vec<Event> = static_window.to_vec();
    for &k in &involved {
        if k as usize == j {
            continue;
        }
        if let Colonization::OnWard(c) = aug.get(k as usize) {
            let ev = Event::new(c, EventKind::Colonization, k as usize);
            if in_window(&ev) {
                events.push(ev);
            }
        }
    }

    let mut initial: Vec<PatientState> = Vec::with_capacity(involved.len());
    let mut counts_t0 = WardCounts::default();
    for &k in &involved {
        let ep = &ward.episodes()[k as usize];
        let present = ep.admission < t0 && ep.discharge >= t0;
        let colonized = if k as usize == j {
            false
        } else {
            match aug.get(k as usize) {
                Colonization::Uncolonized => false,
                Colonization::OnAdmission => true,
                Colonization::OnWard(c) => c < t0,
            }
        };
        let isolated = ep.precautions.iter().any(|i| i.start < t0 && t0 <= i.end);
        let state = PatientState { present: false, colonized, isolated };
        let mut entered = state;
        if present {
            counts_t0.apply(&mut entered, EventKind::Admission);
        }
        initial.push(entered);
    }
    let j_slot = involved.binary_search(&(j as u32)).unwrap();

    let run = |status: Colonization| {
        let mut evs = events.clone();
        let mut init = initial.clone();
        init[j_slot].colonized = status == Colonization::OnAdmission;
        if let Colonization::OnWard(c) = status {
            evs.push(Event::new(c, EventKind::Colonization, j));
        }
        evs.sort_by(Event::order);
        replay(&evs, &involved, &init, counts_t0, t0, e.discharge)
    };
    let before = run(current);
    let after = run(proposed);

    StatsDelta {
        counts,
        integrals: after.integrals.minus(&before.integrals),
        removed: before.pressure,
        added: after.pressure,
    }
}
