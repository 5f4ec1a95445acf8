//! Forward Born-rule reference for the ABL machinery.
//!
//! Nothing here evaluates the ABL formula. The state is pushed forward in
//! time through each measurement (Born weight, collapse, renormalize), a
//! final complete measurement is made, and runs whose final outcome differs
//! from the post-selection are discarded.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::hilbert::{norm_sqr, Amplitude, Branch, HilbertError, LinearOperator, ObservableDecomposition, StateVector};
use crate::two_state::{
    abl_sequence, EventKey, Evolution, MeasurementEvent, ProbabilityTable, TsvfError, TwoStateVector,
    MAX_SEQUENCES,
};

pub mod random;

/// Hilbert-space dimension limit for enumeration.
pub const MAX_DIM: usize = 64;

/// Independent substreams used by [`monte_carlo`]; fixed so that counts do
/// not depend on the machine's thread count.
pub const MC_WORKERS: u64 = 8;

const POST_ACCEPT: f64 = 1.0;
const POST_REJECT: f64 = 0.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("post-selection probability {probability:e} vanishes")]
    ZeroDenominator { probability: f64 },
    #[error("no sample out of {total} passed post-selection (seed {seed})")]
    AllRejected { total: u64, seed: u64 },
    #[error("dimension {0} exceeds the enumeration limit of {MAX_DIM}")]
    TooLarge(usize),
    #[error("post outcome {0} is not an eigenvalue of the final observable")]
    UnknownPostOutcome(f64),
    #[error("sample count must be positive")]
    NoSamples,
    #[error(transparent)]
    Tsvf(#[from] TsvfError),
    #[error(transparent)]
    Hilbert(#[from] HilbertError),
}

/// A preparation, a list of intermediate measurements and a final complete
/// measurement whose designated outcome is the post-selection.
#[derive(Debug, Clone)]
pub struct ForwardRun {
    pub pre: StateVector,
    pub events: Vec<MeasurementEvent>,
    pub evolution: Evolution,
    pub post_observable: ObservableDecomposition,
    pub post_outcome: f64,
}

impl ForwardRun {
    /// Final measurement `{|Ψ2⟩⟨Ψ2|, 1 − |Ψ2⟩⟨Ψ2|}` with the first outcome
    /// (eigenvalue 1) as the post-selection.
    pub fn post_selected(pre: StateVector, events: Vec<MeasurementEvent>, post: &StateVector) -> Result<Self, OracleError> {
        let layout = post.layout().clone();
        let onto = LinearOperator::projector_onto(layout.clone(), post.amplitudes())?;
        let rest = LinearOperator::identity(layout.clone()).sub(&onto)?;
        let post_observable = ObservableDecomposition::new(
            layout.clone(),
            "post",
            (0..layout.num_subsystems()).collect(),
            vec![
                Branch {
                    eigenvalue: POST_ACCEPT,
                    projector: onto,
                },
                Branch {
                    eigenvalue: POST_REJECT,
                    projector: rest,
                },
            ],
        )?;
        Ok(Self {
            pre,
            events,
            evolution: Evolution::identity(),
            post_observable,
            post_outcome: POST_ACCEPT,
        })
    }

    pub fn from_two_state(tsv: &TwoStateVector, events: &[MeasurementEvent]) -> Result<Self, OracleError> {
        Self::post_selected(tsv.pre().clone(), events.to_vec(), tsv.post())
    }

    pub fn with_evolution(mut self, evolution: Evolution) -> Self {
        self.evolution = evolution;
        self
    }

    fn post_projector(&self) -> Result<&LinearOperator, OracleError> {
        self.post_observable
            .branch_index(self.post_outcome)
            .map(|i| &self.post_observable.branches()[i].projector)
            .ok_or(OracleError::UnknownPostOutcome(self.post_outcome))
    }

    fn plan(&self) -> Result<Plan<'_>, OracleError> {
        let dim = self.pre.layout().total_dim();
        if dim > MAX_DIM {
            return Err(OracleError::TooLarge(dim));
        }
        let layout = self.pre.layout();
        for (i, e) in self.events.iter().enumerate() {
            if e.slot == 0 {
                return Err(TsvfError::ReservedSlot { label: e.label.clone() }.into());
            }
            if e.observable.layout() != layout {
                return Err(HilbertError::LayoutMismatch {
                    left: layout.dims().to_vec(),
                    right: e.observable.layout().dims().to_vec(),
                }
                .into());
            }
            for other in &self.events[..i] {
                if other.slot == e.slot && other.subsystems.iter().any(|k| e.subsystems.contains(k)) {
                    return Err(TsvfError::SlotConflict {
                        slot: e.slot,
                        first: other.label.clone(),
                        second: e.label.clone(),
                    }
                    .into());
                }
            }
        }
        // Same-slot events commute; they are applied here from the highest
        // subsystem down, the reverse of the ABL code's order.
        let mut physical: Vec<&MeasurementEvent> = self.events.iter().collect();
        physical.sort_by(|a, b| {
            a.slot
                .cmp(&b.slot)
                .then(b.subsystems.first().cmp(&a.subsystems.first()))
        });
        let mut reported: Vec<usize> = (0..physical.len()).collect();
        reported.sort_by_key(|&i| (physical[i].slot, physical[i].subsystems.first().copied()));
        let count = physical
            .iter()
            .try_fold(1usize, |acc, e| acc.checked_mul(e.observable.branches().len()))
            .unwrap_or(usize::MAX);
        if count > MAX_SEQUENCES {
            return Err(TsvfError::TooManySequences { count }.into());
        }
        let horizon = physical.iter().map(|e| e.slot).max().unwrap_or(0).max(self.evolution.horizon());
        Ok(Plan {
            physical,
            reported,
            horizon,
            post: self.post_projector()?,
            evolution: &self.evolution,
        })
    }
}

struct Plan<'a> {
    /// Events in the order they are physically applied.
    physical: Vec<&'a MeasurementEvent>,
    /// `reported[k]` is the position in `physical` of the k-th table column.
    reported: Vec<usize>,
    horizon: u32,
    post: &'a LinearOperator,
    evolution: &'a Evolution,
}

impl Plan<'_> {
    fn next_slot(&self, depth: usize) -> u32 {
        self.physical.get(depth + 1).map_or(self.horizon, |e| e.slot)
    }

    fn keys(&self) -> Vec<EventKey> {
        self.reported.iter().map(|&i| self.physical[i].key()).collect()
    }

    fn reorder(&self, physical_outcomes: &[f64]) -> Vec<f64> {
        self.reported.iter().map(|&i| physical_outcomes[i]).collect()
    }

    /// Born weights and renormalized post-measurement states for every branch.
    fn measure(&self, depth: usize, state: &[Amplitude]) -> Result<Vec<(f64, Vec<Amplitude>)>, HilbertError> {
        let event = self.physical[depth];
        let to = self.next_slot(depth);
        event
            .observable
            .branches()
            .iter()
            .map(|b| {
                let projected = b.projector.apply(state)?;
                let p = norm_sqr(&projected);
                let collapsed = if p > 0.0 {
                    let scale = 1.0 / p.sqrt();
                    projected.into_iter().map(|a| a * scale).collect()
                } else {
                    projected
                };
                Ok((p, self.evolution.propagate(collapsed, event.slot, to)?))
            })
            .collect()
    }

    fn post_probability(&self, state: &[Amplitude]) -> Result<f64, HilbertError> {
        Ok(norm_sqr(&self.post.apply(state)?))
    }

    fn initial(&self, pre: &StateVector) -> Result<Vec<Amplitude>, HilbertError> {
        let first = self.physical.first().map_or(self.horizon, |e| e.slot);
        self.evolution.propagate(pre.amplitudes().to_vec(), 0, first)
    }
}

/// Walks the whole outcome tree and returns the distribution of
/// intermediate outcomes conditioned on the post-selection. The denominator
/// is the total post-selection probability.
pub fn enumerate_exact(run: &ForwardRun) -> Result<ProbabilityTable, OracleError> {
    let table = enumerate_joint(run)?;
    if table.is_zero() {
        return Err(OracleError::ZeroDenominator {
            probability: table.denominator,
        });
    }
    Ok(table)
}

/// Like [`enumerate_exact`] but returns the (all-zero) table instead of an
/// error when post-selection is impossible.
pub fn enumerate_joint(run: &ForwardRun) -> Result<ProbabilityTable, OracleError> {
    let plan = run.plan()?;
    let mut weighted = Vec::new();
    let mut outcomes = Vec::new();
    walk(&plan, 0, plan.initial(&run.pre)?, 1.0, &mut outcomes, &mut weighted)?;
    Ok(ProbabilityTable::from_weights(plan.keys(), weighted))
}

fn walk(
    plan: &Plan<'_>,
    depth: usize,
    state: Vec<Amplitude>,
    weight: f64,
    outcomes: &mut Vec<f64>,
    out: &mut Vec<(Vec<f64>, f64)>,
) -> Result<(), OracleError> {
    if depth == plan.physical.len() {
        let joint = weight * plan.post_probability(&state)?;
        out.push((plan.reorder(outcomes), joint));
        return Ok(());
    }
    let branches = plan.physical[depth].observable.branches();
    for (branch, (p, next)) in branches.iter().zip(plan.measure(depth, &state)?) {
        outcomes.push(branch.eigenvalue);
        walk(plan, depth + 1, next, weight * p, outcomes, out)?;
        outcomes.pop();
    }
    Ok(())
}

/// Forward Born distribution of the intermediate outcomes with no
/// post-selection at all.
pub fn unconditioned(run: &ForwardRun) -> Result<ProbabilityTable, OracleError> {
    let plan = run.plan()?;
    let mut out = Vec::new();
    let mut outcomes = Vec::new();
    fn go(
        plan: &Plan<'_>,
        depth: usize,
        state: Vec<Amplitude>,
        weight: f64,
        outcomes: &mut Vec<f64>,
        out: &mut Vec<(Vec<f64>, f64)>,
    ) -> Result<(), OracleError> {
        if depth == plan.physical.len() {
            out.push((plan.reorder(outcomes), weight));
            return Ok(());
        }
        let branches = plan.physical[depth].observable.branches();
        for (branch, (p, next)) in branches.iter().zip(plan.measure(depth, &state)?) {
            outcomes.push(branch.eigenvalue);
            go(plan, depth + 1, next, weight * p, outcomes, out)?;
            outcomes.pop();
        }
        Ok(())
    }
    go(&plan, 0, plan.initial(&run.pre)?, 1.0, &mut outcomes, &mut out)?;
    Ok(ProbabilityTable::from_weights(plan.keys(), out))
}

/// Counts of sampled outcome sequences that survived post-selection.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EmpiricalTable {
    pub events: Vec<EventKey>,
    /// Every outcome sequence in enumeration order, including zero counts.
    pub counts: Vec<(Vec<OutcomeBits>, u64)>,
    pub accepted: u64,
    pub total: u64,
    pub seed: u64,
}

/// An eigenvalue stored by bit pattern so the table can be `Eq`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct OutcomeBits(u64);

impl OutcomeBits {
    pub fn new(value: f64) -> Self {
        Self((value + 0.0).to_bits())
    }

    pub fn value(self) -> f64 {
        f64::from_bits(self.0)
    }
}

impl Serialize for OutcomeBits {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.value())
    }
}

impl EmpiricalTable {
    pub fn acceptance_rate(&self) -> f64 {
        self.accepted as f64 / self.total as f64
    }

    pub fn frequency(&self, outcomes: &[f64]) -> Option<f64> {
        if self.accepted == 0 {
            return None;
        }
        self.counts
            .iter()
            .find(|(seq, _)| seq.len() == outcomes.len() && seq.iter().zip(outcomes).all(|(a, b)| a.value() == *b))
            .map(|(_, c)| *c as f64 / self.accepted as f64)
    }

    /// Accepted counts of one event's outcomes, summed over the others.
    pub fn marginal(&self, event: usize) -> Vec<(f64, u64)> {
        let mut out: Vec<(f64, u64)> = Vec::new();
        for (seq, c) in &self.counts {
            let v = seq[event].value();
            match out.iter_mut().find(|(x, _)| *x == v) {
                Some((_, n)) => *n += c,
                None => out.push((v, *c)),
            }
        }
        out
    }
}

/// The generator behind [`monte_carlo`]: ChaCha8 seeded with
/// `seed_from_u64(seed)` and switched to stream `worker`.
pub fn substream(seed: u64, worker: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(worker);
    rng
}

/// Samples `samples` forward runs and keeps those that pass post-selection.
/// Identical `(run, samples, seed)` always yields identical counts.
pub fn monte_carlo(run: &ForwardRun, samples: u64, seed: u64) -> Result<EmpiricalTable, OracleError> {
    if samples == 0 {
        return Err(OracleError::NoSamples);
    }
    let plan = run.plan()?;
    let radices: Vec<usize> = plan
        .physical
        .iter()
        .map(|e| e.observable.branches().len())
        .collect();
    let sequences: usize = radices.iter().product();
    let initial = plan.initial(&run.pre)?;

    let per_worker = samples / MC_WORKERS;
    let extra = samples % MC_WORKERS;
    let partial: Vec<Vec<u64>> = (0..MC_WORKERS)
        .into_par_iter()
        .map(|worker| {
            let n = per_worker + u64::from(worker < extra);
            let mut rng = substream(seed, worker);
            let mut counts = vec![0u64; sequences];
            for _ in 0..n {
                if let Some(index) = sample_once(&plan, &initial, &mut rng)? {
                    counts[index] += 1;
                }
            }
            Ok(counts)
        })
        .collect::<Result<_, HilbertError>>()?;

    let mut merged = vec![0u64; sequences];
    for counts in &partial {
        for (m, c) in merged.iter_mut().zip(counts) {
            *m += c;
        }
    }
    let accepted: u64 = merged.iter().sum();
    if accepted == 0 {
        return Err(OracleError::AllRejected { total: samples, seed });
    }
    let counts = merged
        .into_iter()
        .enumerate()
        .map(|(index, c)| {
            let physical = decode(index, &radices)
                .iter()
                .zip(&plan.physical)
                .map(|(&b, e)| e.observable.branches()[b].eigenvalue)
                .collect::<Vec<_>>();
            (plan.reorder(&physical).into_iter().map(OutcomeBits::new).collect(), c)
        })
        .collect();
    Ok(EmpiricalTable {
        events: plan.keys(),
        counts,
        accepted,
        total: samples,
        seed,
    })
}

/// Mixed-radix index (first event most significant) to branch indices.
fn decode(mut index: usize, radices: &[usize]) -> Vec<usize> {
    let mut digits = vec![0; radices.len()];
    for (d, &r) in digits.iter_mut().zip(radices).rev() {
        *d = index % r;
        index /= r;
    }
    digits
}

fn sample_once(plan: &Plan<'_>, initial: &[Amplitude], rng: &mut ChaCha8Rng) -> Result<Option<usize>, HilbertError> {
    let mut state = initial.to_vec();
    let mut index = 0usize;
    for depth in 0..plan.physical.len() {
        let branches = plan.measure(depth, &state)?;
        let u: f64 = rng.gen();
        let mut cumulative = 0.0;
        let mut chosen = None;
        for (b, (p, _)) in branches.iter().enumerate() {
            if *p <= 0.0 {
                continue;
            }
            cumulative += p;
            chosen = Some(b);
            if u < cumulative {
                break;
            }
        }
        let Some(b) = chosen else {
            return Ok(None);
        };
        index = index * branches.len() + b;
        state = branches.into_iter().nth(b).map(|(_, s)| s).expect("branch exists");
    }
    let accept: f64 = rng.gen();
    if accept < plan.post_probability(&state)? {
        Ok(Some(index))
    } else {
        Ok(None)
    }
}

/// Agreement between the ABL sequence distribution and forward enumeration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub max_discrepancy: f64,
    pub abl_denominator: f64,
    pub exact_denominator: f64,
    /// `abl_denominator / exact_denominator`; 1 when both routes agree.
    pub denominator_ratio: f64,
    /// Exactly one route found a vanishing denominator.
    pub one_sided_zero: bool,
    pub sequences: usize,
}

/// Runs `abl_sequence` and `enumerate_exact` on the same data and compares them.
pub fn cross_check(tsv: &TwoStateVector, events: &[MeasurementEvent]) -> Result<ComparisonReport, OracleError> {
    let abl = match abl_sequence(tsv, events) {
        Ok(t) => Some(t),
        Err(TsvfError::ZeroDenominator { .. }) => None,
        Err(e) => return Err(e.into()),
    };
    let run = ForwardRun::from_two_state(tsv, events)?;
    let exact = enumerate_joint(&run)?;
    let exact_zero = exact.is_zero();
    match (abl, exact_zero) {
        (None, true) => Err(OracleError::ZeroDenominator {
            probability: exact.denominator,
        }),
        (None, false) => Ok(ComparisonReport {
            max_discrepancy: 1.0,
            abl_denominator: 0.0,
            exact_denominator: exact.denominator,
            denominator_ratio: 0.0,
            one_sided_zero: true,
            sequences: exact.entries.len(),
        }),
        (Some(abl), true) => Ok(ComparisonReport {
            max_discrepancy: 1.0,
            abl_denominator: abl.denominator,
            exact_denominator: exact.denominator,
            denominator_ratio: f64::INFINITY,
            one_sided_zero: true,
            sequences: abl.entries.len(),
        }),
        (Some(abl), false) => Ok(ComparisonReport {
            max_discrepancy: max_discrepancy(&abl, &exact),
            abl_denominator: abl.denominator,
            exact_denominator: exact.denominator,
            denominator_ratio: abl.denominator / exact.denominator,
            one_sided_zero: false,
            sequences: abl.entries.len(),
        }),
    }
}

/// Largest probability difference over the union of outcome assignments;
/// an assignment missing from one table counts as probability 0 there.
pub fn max_discrepancy(a: &ProbabilityTable, b: &ProbabilityTable) -> f64 {
    let (ma, mb) = (a.by_assignment(), b.by_assignment());
    ma.iter()
        .map(|(k, p)| (p - mb.get(k).copied().unwrap_or(0.0)).abs())
        .chain(mb.iter().filter(|(k, _)| !ma.contains_key(*k)).map(|(_, p)| p.abs()))
        .fold(0.0, f64::max)
}
