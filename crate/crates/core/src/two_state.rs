//! ABL probabilities for measurements between a pre-selected and a
//! post-selected state.
//!
//! The single-measurement rule is
//! `p_i = |⟨Ψ2|P_i|Ψ1⟩|² / Σ_j |⟨Ψ2|P_j|Ψ1⟩|²`. For a time-ordered sequence
//! of measurements the projectors are chained in slot order:
//! `Prob(b1..bn) ∝ |⟨Ψ2| P_bn ⋯ P_b1 |Ψ1⟩|²`.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::config::TOLERANCES;
use crate::hilbert::{
    dot, inner, Amplitude, HilbertError, LinearOperator, ObservableDecomposition, SpaceLayout,
    StateVector,
};

/// Outcome sequences above this count are refused.
pub const MAX_SEQUENCES: usize = 1_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TsvfError {
    #[error("ABL denominator {denominator:e} vanishes: pre- and post-selection are incompatible with these measurements")]
    ZeroDenominator { denominator: f64 },
    #[error("events {first} and {second} share slot {slot} but act on overlapping subsystems")]
    SlotConflict { slot: u32, first: String, second: String },
    #[error("event {label} sits at slot 0, which is reserved for the pre-selection")]
    ReservedSlot { label: String },
    #[error("{count} outcome sequences exceed the limit of {MAX_SEQUENCES}")]
    TooManySequences { count: usize },
    #[error("evolution operator at slot {slot} is not unitary")]
    NonUnitary { slot: u32 },
    #[error(transparent)]
    Hilbert(#[from] HilbertError),
}

/// The pair `(|Ψ1⟩, |Ψ2⟩)` fixed by complete measurements at `t1` and `t2`.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoStateVector {
    pre: StateVector,
    post: StateVector,
    overlap: Amplitude,
}

impl TwoStateVector {
    pub fn new(pre: StateVector, post: StateVector) -> Result<Self, TsvfError> {
        let overlap = inner(&post, &pre)?;
        Ok(Self { pre, post, overlap })
    }

    pub fn pre(&self) -> &StateVector {
        &self.pre
    }

    pub fn post(&self) -> &StateVector {
        &self.post
    }

    /// `⟨Ψ2|Ψ1⟩`.
    pub fn overlap(&self) -> Amplitude {
        self.overlap
    }

    pub fn layout(&self) -> &SpaceLayout {
        self.pre.layout()
    }

    /// Swaps the roles of pre- and post-selection.
    pub fn reversed(&self) -> Self {
        Self {
            pre: self.post.clone(),
            post: self.pre.clone(),
            overlap: self.overlap.conj(),
        }
    }
}

/// A measurement of `observable` at an ordered time slot. Slot 0 is the
/// pre-selection; intermediate measurements use slots ≥ 1.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementEvent {
    pub slot: u32,
    pub subsystems: Vec<usize>,
    pub observable: ObservableDecomposition,
    pub label: String,
}

impl MeasurementEvent {
    pub fn new(slot: u32, observable: ObservableDecomposition) -> Self {
        Self {
            slot,
            subsystems: observable.support().to_vec(),
            label: observable.label().to_string(),
            observable,
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn key(&self) -> EventKey {
        EventKey {
            slot: self.slot,
            label: self.label.clone(),
        }
    }

    fn overlaps(&self, other: &MeasurementEvent) -> bool {
        self.subsystems.iter().any(|k| other.subsystems.contains(k))
    }
}

/// Identifies an event inside a probability table.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct EventKey {
    pub slot: u32,
    pub label: String,
}

impl fmt::Display for EventKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.label, self.slot)
    }
}

/// Unitaries applied between slots: the operator stored at slot `s`
/// carries the state from slot `s` to slot `s + 1`. Missing slots mean identity.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Evolution {
    steps: BTreeMap<u32, LinearOperator>,
}

impl Evolution {
    pub fn identity() -> Self {
        Self::default()
    }

    pub fn with_step(mut self, slot: u32, unitary: LinearOperator) -> Result<Self, TsvfError> {
        if !unitary.is_unitary(TOLERANCES.structural) {
            return Err(TsvfError::NonUnitary { slot });
        }
        self.steps.insert(slot, unitary);
        Ok(self)
    }

    pub fn is_identity(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn step(&self, slot: u32) -> Option<&LinearOperator> {
        self.steps.get(&slot)
    }

    /// First slot at which no further step applies.
    pub fn horizon(&self) -> u32 {
        self.steps.keys().next_back().map_or(0, |&s| s + 1)
    }

    /// Evolves `v` from slot `from` to slot `to` (`from ≤ to`).
    pub fn propagate(&self, mut v: Vec<Amplitude>, from: u32, to: u32) -> Result<Vec<Amplitude>, HilbertError> {
        for (_, u) in self.steps.range(from..to) {
            v = u.apply(&v)?;
        }
        Ok(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableEntry {
    /// One eigenvalue per event, in table event order.
    pub outcomes: Vec<f64>,
    /// Unnormalized weight (squared amplitude or joint Born probability).
    pub weight: f64,
    pub probability: f64,
}

/// Distribution over outcome sequences, with the normalizing denominator.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbabilityTable {
    pub events: Vec<EventKey>,
    pub entries: Vec<TableEntry>,
    pub denominator: f64,
}

impl ProbabilityTable {
    /// Normalizes raw weights. Probabilities stay zero when the denominator vanishes.
    pub fn from_weights(events: Vec<EventKey>, weighted: Vec<(Vec<f64>, f64)>) -> Self {
        let denominator: f64 = weighted.iter().map(|(_, w)| w).sum();
        let entries = weighted
            .into_iter()
            .map(|(outcomes, weight)| TableEntry {
                probability: if denominator >= TOLERANCES.zero_denominator {
                    (weight / denominator).clamp(0.0, 1.0)
                } else {
                    0.0
                },
                outcomes,
                weight,
            })
            .collect();
        Self {
            events,
            entries,
            denominator,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.denominator < TOLERANCES.zero_denominator
    }

    pub fn probability_of(&self, outcomes: &[f64]) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| {
                e.outcomes.len() == outcomes.len()
                    && e.outcomes.iter().zip(outcomes).all(|(a, b)| (a - b).abs() <= TOLERANCES.certainty)
            })
            .map(|e| e.probability)
    }

    pub fn max_entry(&self) -> Option<&TableEntry> {
        self.entries
            .iter()
            .max_by(|a, b| a.probability.total_cmp(&b.probability))
    }

    pub fn total_probability(&self) -> f64 {
        self.entries.iter().map(|e| e.probability).sum()
    }

    /// Probabilities keyed by event-to-outcome assignments, independent of
    /// the order in which events are listed.
    pub fn by_assignment(&self) -> BTreeMap<Vec<(EventKey, u64)>, f64> {
        self.entries
            .iter()
            .map(|e| {
                let mut key: Vec<(EventKey, u64)> = self
                    .events
                    .iter()
                    .cloned()
                    .zip(e.outcomes.iter().map(|o| (o + 0.0).to_bits()))
                    .collect();
                key.sort();
                (key, e.probability)
            })
            .collect()
    }
}

/// Checks slot rules and returns the events in canonical application order:
/// ascending slot, then ascending lowest subsystem index within a slot.
pub fn canonical_order<'a>(
    events: &'a [MeasurementEvent],
    layout: &SpaceLayout,
) -> Result<Vec<&'a MeasurementEvent>, TsvfError> {
    for e in events {
        if e.observable.layout() != layout {
            return Err(HilbertError::LayoutMismatch {
                left: layout.dims().to_vec(),
                right: e.observable.layout().dims().to_vec(),
            }
            .into());
        }
        if e.slot == 0 {
            return Err(TsvfError::ReservedSlot { label: e.label.clone() });
        }
    }
    for (i, a) in events.iter().enumerate() {
        for b in &events[i + 1..] {
            if a.slot == b.slot && a.overlaps(b) {
                return Err(TsvfError::SlotConflict {
                    slot: a.slot,
                    first: a.label.clone(),
                    second: b.label.clone(),
                });
            }
        }
    }
    let mut ordered: Vec<&MeasurementEvent> = events.iter().collect();
    ordered.sort_by_key(|e| (e.slot, e.subsystems.first().copied().unwrap_or(usize::MAX)));
    let count = ordered
        .iter()
        .try_fold(1usize, |acc, e| acc.checked_mul(e.observable.branches().len()))
        .unwrap_or(usize::MAX);
    if count > MAX_SEQUENCES {
        return Err(TsvfError::TooManySequences { count });
    }
    Ok(ordered)
}

fn ensure_layout(tsv: &TwoStateVector, obs: &ObservableDecomposition) -> Result<(), TsvfError> {
    if obs.layout() != tsv.layout() {
        return Err(HilbertError::LayoutMismatch {
            left: tsv.layout().dims().to_vec(),
            right: obs.layout().dims().to_vec(),
        }
        .into());
    }
    Ok(())
}

/// Raw single-measurement weights `|⟨Ψ2|P_i|Ψ1⟩|²`, without normalization.
pub fn single_weights(tsv: &TwoStateVector, obs: &ObservableDecomposition) -> Result<ProbabilityTable, TsvfError> {
    ensure_layout(tsv, obs)?;
    let key = EventKey {
        slot: 1,
        label: obs.label().to_string(),
    };
    let weighted = obs
        .branches()
        .iter()
        .map(|b| {
            let projected = b.projector.apply(tsv.pre().amplitudes())?;
            Ok((vec![b.eigenvalue], dot(tsv.post().amplitudes(), &projected).norm_sqr()))
        })
        .collect::<Result<Vec<_>, HilbertError>>()?;
    Ok(ProbabilityTable::from_weights(vec![key], weighted))
}

/// ABL distribution of a single intermediate measurement of `obs`.
pub fn abl_single(tsv: &TwoStateVector, obs: &ObservableDecomposition) -> Result<ProbabilityTable, TsvfError> {
    nonzero(single_weights(tsv, obs)?)
}

fn nonzero(table: ProbabilityTable) -> Result<ProbabilityTable, TsvfError> {
    if table.is_zero() {
        Err(TsvfError::ZeroDenominator {
            denominator: table.denominator,
        })
    } else {
        Ok(table)
    }
}

/// Raw chain weights `|⟨Ψ2|U P_bn U ⋯ P_b1 U|Ψ1⟩|²` for every outcome
/// sequence, in canonical event order. Never fails on a vanishing denominator.
pub fn joint_weights(
    tsv: &TwoStateVector,
    events: &[MeasurementEvent],
    evolution: &Evolution,
) -> Result<ProbabilityTable, TsvfError> {
    let ordered = canonical_order(events, tsv.layout())?;
    let horizon = ordered
        .last()
        .map_or(0, |e| e.slot)
        .max(evolution.horizon());
    let mut weighted = Vec::new();
    let mut outcomes = Vec::with_capacity(ordered.len());
    let start = evolution.propagate(tsv.pre().amplitudes().to_vec(), 0, ordered.first().map_or(horizon, |e| e.slot))?;
    chain(tsv, &ordered, evolution, horizon, 0, start, &mut outcomes, &mut weighted)?;
    Ok(ProbabilityTable::from_weights(
        ordered.iter().map(|e| e.key()).collect(),
        weighted,
    ))
}

#[allow(clippy::too_many_arguments)]
fn chain(
    tsv: &TwoStateVector,
    ordered: &[&MeasurementEvent],
    evolution: &Evolution,
    horizon: u32,
    depth: usize,
    ket: Vec<Amplitude>,
    outcomes: &mut Vec<f64>,
    out: &mut Vec<(Vec<f64>, f64)>,
) -> Result<(), TsvfError> {
    let Some(event) = ordered.get(depth) else {
        out.push((outcomes.clone(), dot(tsv.post().amplitudes(), &ket).norm_sqr()));
        return Ok(());
    };
    let next_slot = ordered.get(depth + 1).map_or(horizon, |e| e.slot);
    for branch in event.observable.branches() {
        let projected = branch.projector.apply(&ket)?;
        let evolved = evolution.propagate(projected, event.slot, next_slot)?;
        outcomes.push(branch.eigenvalue);
        chain(tsv, ordered, evolution, horizon, depth + 1, evolved, outcomes, out)?;
        outcomes.pop();
    }
    Ok(())
}

/// ABL distribution over outcome sequences of time-ordered measurements.
pub fn abl_sequence(tsv: &TwoStateVector, events: &[MeasurementEvent]) -> Result<ProbabilityTable, TsvfError> {
    abl_sequence_with(tsv, events, &Evolution::identity())
}

pub fn abl_sequence_with(
    tsv: &TwoStateVector,
    events: &[MeasurementEvent],
    evolution: &Evolution,
) -> Result<ProbabilityTable, TsvfError> {
    nonzero(joint_weights(tsv, events, evolution)?)
}
