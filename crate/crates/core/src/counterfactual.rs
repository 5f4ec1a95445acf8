//! Counterfactual statements about pre- and post-selected systems.
//!
//! A counterfactual replaces the measurement actually performed at some
//! time with another one while the results of every other measurement
//! (including the pre- and post-selection) stay fixed. Its truth value is
//! read off the ABL distribution conditioned on those fixed results:
//! true or false when the asserted property is certain either way,
//! probabilistic otherwise, and meaningless when the fixed results are
//! impossible once the replacement is in place.

use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::config::TOLERANCES;
use crate::hilbert::{HilbertError, ObservableDecomposition, SpaceLayout, StateVector};
use crate::numfmt::canonical;
use crate::two_state::{
    abl_single, joint_weights, Evolution, MeasurementEvent, ProbabilityTable, TableEntry, TsvfError, TwoStateVector,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CounterfactualError {
    #[error("property refers to unknown event {0}")]
    UnresolvedLabel(String),
    #[error("event reference {0} matches several events; qualify it as LABEL@SLOT")]
    AmbiguousLabel(String),
    #[error("meaningless: the fixed results have zero weight (denominator {denominator:e})")]
    Meaningless { denominator: f64 },
    #[error("recorded outcome {value} is not an eigenvalue of {label}")]
    NotAnEigenvalue { label: String, value: f64 },
    #[error("event {label} at slot {slot} collides with a fixed event")]
    SlotCollision { label: String, slot: u32 },
    #[error("actual measurement {label} has no recorded outcome")]
    MissingOutcome { label: String },
    #[error("{left} and {right} act on overlapping subsystems")]
    OverlappingSupports { left: String, right: String },
    #[error("{product} is not the product of {left} and {right} (max deviation {deviation:e})")]
    NotAProduct {
        product: String,
        left: String,
        right: String,
        deviation: f64,
    },
    #[error(transparent)]
    Tsvf(TsvfError),
    #[error(transparent)]
    Hilbert(#[from] HilbertError),
}

impl From<TsvfError> for CounterfactualError {
    fn from(e: TsvfError) -> Self {
        match e {
            TsvfError::ZeroDenominator { denominator } => CounterfactualError::Meaningless { denominator },
            other => CounterfactualError::Tsvf(other),
        }
    }
}

/// A measurement in the actual world, optionally with its recorded result.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordedEvent {
    pub event: MeasurementEvent,
    pub outcome: Option<f64>,
}

/// The measurements performed in the actual world.
///
/// `fixed` holds every measurement whose result stays fixed under the
/// counterfactual; an entry without an outcome was performed but its result
/// is not conditioned on. `actual` is the measurement being replaced.
#[derive(Debug, Clone, PartialEq)]
pub struct ActualWorld {
    pub pre: StateVector,
    pub post: StateVector,
    pub fixed: Vec<RecordedEvent>,
    pub actual: Vec<RecordedEvent>,
    pub evolution: Evolution,
}

impl ActualWorld {
    pub fn new(pre: StateVector, post: StateVector) -> Self {
        Self {
            pre,
            post,
            fixed: Vec::new(),
            actual: Vec::new(),
            evolution: Evolution::identity(),
        }
    }

    pub fn with_fixed(mut self, event: MeasurementEvent, outcome: f64) -> Self {
        self.fixed.push(RecordedEvent {
            event,
            outcome: Some(outcome),
        });
        self
    }

    pub fn with_unrecorded(mut self, event: MeasurementEvent) -> Self {
        self.fixed.push(RecordedEvent { event, outcome: None });
        self
    }

    pub fn with_actual(mut self, event: MeasurementEvent, outcome: f64) -> Self {
        self.actual.push(RecordedEvent {
            event,
            outcome: Some(outcome),
        });
        self
    }

    pub fn layout(&self) -> &SpaceLayout {
        self.pre.layout()
    }

    pub fn two_state(&self) -> Result<TwoStateVector, CounterfactualError> {
        Ok(TwoStateVector::new(self.pre.clone(), self.post.clone())?)
    }

    pub fn validate(&self) -> Result<(), CounterfactualError> {
        self.two_state()?;
        for r in self.fixed.iter().chain(&self.actual) {
            if let Some(value) = r.outcome {
                if r.event.observable.branch_index(value).is_none() {
                    return Err(CounterfactualError::NotAnEigenvalue {
                        label: r.event.label.clone(),
                        value,
                    });
                }
            }
        }
        if let Some(r) = self.actual.iter().find(|r| r.outcome.is_none()) {
            return Err(CounterfactualError::MissingOutcome {
                label: r.event.label.clone(),
            });
        }
        for a in &self.actual {
            if self.fixed.iter().any(|f| f.event.slot == a.event.slot) {
                return Err(CounterfactualError::SlotCollision {
                    label: a.event.label.clone(),
                    slot: a.event.slot,
                });
            }
        }
        let fixed: Vec<MeasurementEvent> = self.fixed.iter().map(|r| r.event.clone()).collect();
        crate::two_state::canonical_order(&fixed, self.layout())?;
        Ok(())
    }
}

/// Replace the actual measurement with `replacement` and ask whether `property` holds.
#[derive(Debug, Clone, PartialEq)]
pub struct CounterfactualQuery {
    pub label: String,
    pub replacement: Vec<MeasurementEvent>,
    pub property: PropertyExpr,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Term {
    /// Outcome of the event with this label (`LABEL` or `LABEL@SLOT`).
    Outcome(String),
    Constant(f64),
    Product(Vec<Term>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Comparison {
    Ge,
    Le,
    Gt,
    Lt,
}

impl Comparison {
    pub fn symbol(self) -> &'static str {
        match self {
            Comparison::Ge => ">=",
            Comparison::Le => "<=",
            Comparison::Gt => ">",
            Comparison::Lt => "<",
        }
    }

    fn holds(self, lhs: f64, rhs: f64, tol: f64) -> bool {
        match self {
            Comparison::Ge => lhs >= rhs - tol,
            Comparison::Le => lhs <= rhs + tol,
            Comparison::Gt => lhs > rhs + tol,
            Comparison::Lt => lhs < rhs - tol,
        }
    }
}

/// The asserted property: equalities between outcome expressions, their
/// conjunction, or a threshold on the probability of such a relation.
#[derive(Debug, Clone, PartialEq)]
pub enum PropertyExpr {
    Equal(Term, Term),
    Threshold {
        relation: Box<PropertyExpr>,
        comparison: Comparison,
        value: f64,
    },
    And(Vec<PropertyExpr>),
}

impl Term {
    fn labels<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Term::Outcome(l) => out.push(l),
            Term::Constant(_) => {}
            Term::Product(ts) => ts.iter().for_each(|t| t.labels(out)),
        }
    }

    fn value(&self, lookup: &dyn Fn(&str) -> f64) -> f64 {
        match self {
            Term::Outcome(l) => lookup(l),
            Term::Constant(c) => *c,
            Term::Product(ts) => ts.iter().map(|t| t.value(lookup)).product(),
        }
    }
}

impl PropertyExpr {
    pub fn labels(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_labels(&mut out);
        out.sort_unstable();
        out.dedup();
        out
    }

    fn collect_labels<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            PropertyExpr::Equal(a, b) => {
                a.labels(out);
                b.labels(out);
            }
            PropertyExpr::Threshold { relation, .. } => relation.collect_labels(out),
            PropertyExpr::And(parts) => parts.iter().for_each(|p| p.collect_labels(out)),
        }
    }

    /// Probability of the property under `dist`, a list of (outcome
    /// sequence, probability) pairs; `resolve` maps a label to the outcome
    /// it denotes within one sequence.
    fn probability(&self, dist: &[(&[f64], f64)], resolve: &dyn Fn(&str, &[f64]) -> f64) -> f64 {
        dist.iter()
            .filter(|(seq, _)| self.holds(seq, dist, resolve))
            .map(|(_, p)| p)
            .sum()
    }

    fn holds(&self, seq: &[f64], dist: &[(&[f64], f64)], resolve: &dyn Fn(&str, &[f64]) -> f64) -> bool {
        match self {
            PropertyExpr::Equal(a, b) => {
                let lookup = |l: &str| resolve(l, seq);
                (a.value(&lookup) - b.value(&lookup)).abs() <= TOLERANCES.certainty
            }
            PropertyExpr::Threshold {
                relation,
                comparison,
                value,
            } => comparison.holds(relation.probability(dist, resolve), *value, TOLERANCES.certainty),
            PropertyExpr::And(parts) => parts.iter().all(|p| p.holds(seq, dist, resolve)),
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Outcome(l) => write!(f, "outcome({l})"),
            Term::Constant(c) => f.write_str(&canonical(*c)),
            Term::Product(ts) => {
                for (i, t) in ts.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" * ")?;
                    }
                    write!(f, "{t}")?;
                }
                Ok(())
            }
        }
    }
}

impl fmt::Display for PropertyExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PropertyExpr::Equal(a, b) => write!(f, "{a} == {b}"),
            PropertyExpr::Threshold {
                relation,
                comparison,
                value,
            } => write!(f, "prob({relation}) {} {}", comparison.symbol(), canonical(*value)),
            PropertyExpr::And(parts) => {
                for (i, p) in parts.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" and ")?;
                    }
                    write!(f, "{p}")?;
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", content = "probability", rename_all = "lowercase")]
pub enum VerdictKind {
    True,
    False,
    Probabilistic(f64),
    Meaningless,
}

impl VerdictKind {
    pub fn from_probability(p: f64, tol: f64) -> Self {
        if p >= 1.0 - tol {
            VerdictKind::True
        } else if p <= tol {
            VerdictKind::False
        } else {
            VerdictKind::Probabilistic(p)
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            VerdictKind::True => "true",
            VerdictKind::False => "false",
            VerdictKind::Probabilistic(_) => "probabilistic",
            VerdictKind::Meaningless => "meaningless",
        }
    }
}

/// Truth value of a counterfactual with the conditional distribution it
/// was read from. `table.denominator` is the raw weight of the fixed results.
#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub kind: VerdictKind,
    /// Probability that the property holds; absent when meaningless.
    pub probability: Option<f64>,
    pub table: ProbabilityTable,
    pub certainty_tolerance: f64,
}

enum Resolved {
    Column(usize),
    Constant(f64),
}

fn matches_label(event_label: &str, slot: u32, reference: &str) -> bool {
    event_label == reference || format!("{event_label}@{slot}") == reference
}

/// Evaluates `query` against `world`: the fixed events and the replacement
/// measurements form one ABL sequence, which is conditioned on the fixed
/// recorded outcomes. The actual measurement's result enters only when the
/// property names it, and then as a literal constant.
pub fn evaluate(world: &ActualWorld, query: &CounterfactualQuery) -> Result<Verdict, CounterfactualError> {
    world.validate()?;
    for r in &query.replacement {
        if r.slot == 0 {
            return Err(TsvfError::ReservedSlot { label: r.label.clone() }.into());
        }
        if world.fixed.iter().any(|f| f.event.slot == r.slot) {
            return Err(CounterfactualError::SlotCollision {
                label: r.label.clone(),
                slot: r.slot,
            });
        }
    }
    let tsv = world.two_state()?;
    let events: Vec<MeasurementEvent> = world
        .fixed
        .iter()
        .map(|r| r.event.clone())
        .chain(query.replacement.iter().cloned())
        .collect();
    let joint = joint_weights(&tsv, &events, &world.evolution)?;

    let resolve_ref = |reference: &str| -> Result<Resolved, CounterfactualError> {
        let hits: Vec<usize> = joint
            .events
            .iter()
            .enumerate()
            .filter(|(_, k)| matches_label(&k.label, k.slot, reference))
            .map(|(i, _)| i)
            .collect();
        match hits.as_slice() {
            [i] => return Ok(Resolved::Column(*i)),
            [] => {}
            _ => return Err(CounterfactualError::AmbiguousLabel(reference.to_string())),
        }
        let actual: Vec<f64> = world
            .actual
            .iter()
            .filter(|r| matches_label(&r.event.label, r.event.slot, reference))
            .filter_map(|r| r.outcome)
            .collect();
        match actual.as_slice() {
            [v] => Ok(Resolved::Constant(*v)),
            [] => Err(CounterfactualError::UnresolvedLabel(reference.to_string())),
            _ => Err(CounterfactualError::AmbiguousLabel(reference.to_string())),
        }
    };
    let mut resolved: Vec<(String, Resolved)> = Vec::new();
    for label in query.property.labels() {
        resolved.push((label.to_string(), resolve_ref(label)?));
    }

    // Columns of fixed events with recorded outcomes, and the outcome they must show.
    let conditions: Vec<(usize, f64)> = world
        .fixed
        .iter()
        .filter_map(|r| {
            let value = r.outcome?;
            let col = joint.events.iter().position(|k| *k == r.event.key())?;
            Some((col, value))
        })
        .collect();
    let consistent = |e: &TableEntry| {
        conditions
            .iter()
            .all(|&(col, value)| (e.outcomes[col] - value).abs() <= TOLERANCES.certainty)
    };
    let weight: f64 = joint.entries.iter().filter(|e| consistent(e)).map(|e| e.weight).sum();
    let meaningless = weight < TOLERANCES.zero_denominator;
    let table = ProbabilityTable {
        events: joint.events.clone(),
        entries: joint
            .entries
            .iter()
            .map(|e| TableEntry {
                outcomes: e.outcomes.clone(),
                weight: e.weight,
                probability: if !meaningless && consistent(e) {
                    (e.weight / weight).clamp(0.0, 1.0)
                } else {
                    0.0
                },
            })
            .collect(),
        denominator: weight,
    };
    if meaningless {
        return Ok(Verdict {
            kind: VerdictKind::Meaningless,
            probability: None,
            table,
            certainty_tolerance: TOLERANCES.certainty,
        });
    }

    let resolve = |label: &str, seq: &[f64]| -> f64 {
        match resolved.iter().find(|(l, _)| l == label).map(|(_, r)| r) {
            Some(Resolved::Column(i)) => seq[*i],
            Some(Resolved::Constant(v)) => *v,
            None => f64::NAN,
        }
    };
    let dist: Vec<(&[f64], f64)> = table
        .entries
        .iter()
        .filter(|e| e.probability > 0.0)
        .map(|e| (e.outcomes.as_slice(), e.probability))
        .collect();
    // `+ 0.0` turns a negative zero into zero.
    let p = query.property.probability(&dist, &resolve).clamp(0.0, 1.0) + 0.0;
    Ok(Verdict {
        kind: VerdictKind::from_probability(p, TOLERANCES.certainty),
        probability: Some(p),
        table,
        certainty_tolerance: TOLERANCES.certainty,
    })
}

/// A value of an observable that can be inferred with certainty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ElementOfReality {
    pub eigenvalue: f64,
    pub probability: f64,
}

/// `Some` when the ABL rule makes one outcome certain (probability ≥ 1 − 1e-9).
pub fn element_of_reality(
    tsv: &TwoStateVector,
    obs: &ObservableDecomposition,
) -> Result<Option<ElementOfReality>, CounterfactualError> {
    let table = abl_single(tsv, obs)?;
    Ok(table
        .max_entry()
        .filter(|e| e.probability >= 1.0 - TOLERANCES.certainty)
        .map(|e| ElementOfReality {
            eigenvalue: e.outcomes[0],
            probability: e.probability,
        }))
}

/// ABL distribution of a single measurement between two complete ones.
pub fn definition_iii_eval(
    tsv: &TwoStateVector,
    obs: &ObservableDecomposition,
) -> Result<ProbabilityTable, CounterfactualError> {
    Ok(abl_single(tsv, obs)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ProductRuleStatus {
    Holds,
    Fails,
    Inapplicable,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProductRuleReport {
    pub a: Option<ElementOfReality>,
    pub b: Option<ElementOfReality>,
    pub ab: Option<ElementOfReality>,
    pub status: ProductRuleStatus,
    /// Element of reality of the product observable.
    pub lhs: Option<f64>,
    /// Product of the two individual elements of reality.
    pub rhs: Option<f64>,
}

/// Compares the element of reality of `ab` with the product of those of
/// `a` and `b`. `a` and `b` must act on disjoint subsystems and `ab` must be
/// the spectral form of their product.
pub fn product_rule_check(
    tsv: &TwoStateVector,
    a: &ObservableDecomposition,
    b: &ObservableDecomposition,
    ab: &ObservableDecomposition,
) -> Result<ProductRuleReport, CounterfactualError> {
    if a.support().iter().any(|k| b.support().contains(k)) {
        return Err(CounterfactualError::OverlappingSupports {
            left: a.label().to_string(),
            right: b.label().to_string(),
        });
    }
    let expected = a.matrix().matmul(&b.matrix())?;
    let deviation = ab.matrix().max_abs_diff(&expected);
    if deviation > TOLERANCES.structural {
        return Err(CounterfactualError::NotAProduct {
            product: ab.label().to_string(),
            left: a.label().to_string(),
            right: b.label().to_string(),
            deviation,
        });
    }
    let ea = element_of_reality(tsv, a)?;
    let eb = element_of_reality(tsv, b)?;
    let eab = element_of_reality(tsv, ab)?;
    let (status, lhs, rhs) = match (ea, eb, eab) {
        (Some(x), Some(y), Some(z)) => {
            let rhs = x.eigenvalue * y.eigenvalue;
            let status = if (z.eigenvalue - rhs).abs() <= TOLERANCES.certainty {
                ProductRuleStatus::Holds
            } else {
                ProductRuleStatus::Fails
            };
            (status, Some(z.eigenvalue), Some(rhs))
        }
        _ => (ProductRuleStatus::Inapplicable, eab.map(|z| z.eigenvalue), None),
    };
    Ok(ProductRuleReport {
        a: ea,
        b: eb,
        ab: eab,
        status,
        lhs,
        rhs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{spinor, tensor, Amplitude, PauliAxis};

    fn qubit(v: [Amplitude; 2]) -> StateVector {
        StateVector::new(SpaceLayout::qubits(1), v.to_vec()).unwrap()
    }

    fn singlet() -> StateVector {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let z = Amplitude::new(0.0, 0.0);
        StateVector::new(SpaceLayout::qubits(2), vec![z, Amplitude::new(s, 0.0), Amplitude::new(-s, 0.0), z]).unwrap()
    }

    fn pauli(axis: PauliAxis, k: usize, n: usize, label: &str) -> ObservableDecomposition {
        ObservableDecomposition::pauli(axis, k, &SpaceLayout::qubits(n)).unwrap().with_label(label)
    }

    fn eq(label: &str, value: f64) -> PropertyExpr {
        PropertyExpr::Equal(Term::Outcome(label.into()), Term::Constant(value))
    }

    fn singlet_xy() -> TwoStateVector {
        TwoStateVector::new(singlet(), tensor(&qubit(spinor::plus_x()), &qubit(spinor::plus_y()))).unwrap()
    }

    #[test]
    fn meaningless_z_replacement() {
        let world = ActualWorld::new(qubit(spinor::up()), qubit(spinor::down()))
            .with_actual(MeasurementEvent::new(1, pauli(PauliAxis::X, 0, 1, "sx")), 1.0);
        let query = CounterfactualQuery {
            label: "q1".into(),
            replacement: vec![MeasurementEvent::new(1, pauli(PauliAxis::Z, 0, 1, "sz"))],
            property: eq("sz", 1.0),
        };
        let verdict = evaluate(&world, &query).unwrap();
        assert_eq!(verdict.kind, VerdictKind::Meaningless);
        assert!(verdict.table.denominator < 1e-24);
        assert_eq!(verdict.probability, None);
    }

    fn stapp_world(fixed_axis: PauliAxis, fixed_value: f64, post: StateVector) -> ActualWorld {
        ActualWorld::new(singlet(), post)
            .with_fixed(MeasurementEvent::new(1, pauli(fixed_axis, 0, 2, "s1")), fixed_value)
            .with_actual(MeasurementEvent::new(2, pauli(PauliAxis::Z, 1, 2, "s2z")), 1.0)
    }

    fn stapp_query() -> CounterfactualQuery {
        CounterfactualQuery {
            label: "cf".into(),
            replacement: vec![MeasurementEvent::new(2, pauli(PauliAxis::Z, 1, 2, "s2z_rev"))],
            property: PropertyExpr::Equal(Term::Outcome("s2z_rev".into()), Term::Outcome("s2z".into())),
        }
    }

    #[test]
    fn stapp_cf_true_when_sigma1z_fixed() {
        let post = tensor(&qubit(spinor::down()), &qubit(spinor::up()));
        let verdict = evaluate(&stapp_world(PauliAxis::Z, -1.0, post), &stapp_query()).unwrap();
        assert_eq!(verdict.kind, VerdictKind::True);
        assert!((verdict.probability.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn stapp_cf_half_when_sigma1x_fixed() {
        let post = tensor(&qubit(spinor::plus_x()), &qubit(spinor::minus_x()));
        let verdict = evaluate(&stapp_world(PauliAxis::X, 1.0, post), &stapp_query()).unwrap();
        match verdict.kind {
            VerdictKind::Probabilistic(p) => assert!((p - 0.5).abs() < 1e-12),
            other => panic!("expected probabilistic, got {other:?}"),
        }
    }

    #[test]
    fn actual_outcome_only_matters_when_referenced() {
        let post = tensor(&qubit(spinor::down()), &qubit(spinor::up()));
        let mut query = stapp_query();
        query.property = eq("s2z_rev", 1.0);
        let mut world = stapp_world(PauliAxis::Z, -1.0, post);
        let before = evaluate(&world, &query).unwrap();
        world.actual[0].outcome = Some(-1.0);
        let after = evaluate(&world, &query).unwrap();
        assert_eq!(before, after);
        // Referencing the actual result makes it matter.
        let referenced = evaluate(&world, &stapp_query()).unwrap();
        assert_eq!(referenced.kind, VerdictKind::False);
    }

    #[test]
    fn unresolved_and_ambiguous_labels() {
        let post = tensor(&qubit(spinor::down()), &qubit(spinor::up()));
        let world = stapp_world(PauliAxis::Z, -1.0, post);
        let mut query = stapp_query();
        query.property = eq("nope", 1.0);
        assert_eq!(
            evaluate(&world, &query),
            Err(CounterfactualError::UnresolvedLabel("nope".into()))
        );
        query.replacement.push(MeasurementEvent::new(3, pauli(PauliAxis::Z, 1, 2, "s2z_rev")));
        query.property = eq("s2z_rev", 1.0);
        assert_eq!(
            evaluate(&world, &query),
            Err(CounterfactualError::AmbiguousLabel("s2z_rev".into()))
        );
        query.property = eq("s2z_rev@3", 1.0);
        assert_eq!(evaluate(&world, &query).unwrap().kind, VerdictKind::True);
    }

    #[test]
    fn replacement_cannot_share_a_fixed_slot() {
        let post = tensor(&qubit(spinor::down()), &qubit(spinor::up()));
        let world = stapp_world(PauliAxis::Z, -1.0, post);
        let mut query = stapp_query();
        query.replacement[0].slot = 1;
        assert!(matches!(evaluate(&world, &query), Err(CounterfactualError::SlotCollision { slot: 1, .. })));
    }

    #[test]
    fn recorded_outcome_must_be_an_eigenvalue() {
        let post = tensor(&qubit(spinor::down()), &qubit(spinor::up()));
        let world = stapp_world(PauliAxis::Z, 0.5, post);
        assert!(matches!(
            evaluate(&world, &stapp_query()),
            Err(CounterfactualError::NotAnEigenvalue { .. })
        ));
    }

    #[test]
    fn conditioning_on_impossible_fixed_result_is_meaningless() {
        // σ1z = +1 forces particle 2 down, orthogonal to the post-selected |↓↑⟩.
        let post = tensor(&qubit(spinor::down()), &qubit(spinor::up()));
        let verdict = evaluate(&stapp_world(PauliAxis::Z, 1.0, post), &stapp_query()).unwrap();
        assert_eq!(verdict.kind, VerdictKind::Meaningless);
    }

    #[test]
    fn elements_of_reality_on_singlet_xy() {
        let tsv = singlet_xy();
        let s1y = pauli(PauliAxis::Y, 0, 2, "s1y");
        let s2x = pauli(PauliAxis::X, 1, 2, "s2x");
        let prod = ObservableDecomposition::product(&s1y, &s2x, "s1ys2x").unwrap();
        for obs in [&s1y, &s2x, &prod] {
            let e = element_of_reality(&tsv, obs).unwrap().unwrap();
            assert_eq!(e.eigenvalue, -1.0);
            assert!((e.probability - 1.0).abs() < 1e-12);
        }
        let report = product_rule_check(&tsv, &s1y, &s2x, &prod).unwrap();
        assert_eq!(report.status, ProductRuleStatus::Fails);
        assert_eq!(report.lhs, Some(-1.0));
        assert_eq!(report.rhs, Some(1.0));
    }

    #[test]
    fn no_element_of_reality_for_sigma1z() {
        let s1z = pauli(PauliAxis::Z, 0, 2, "s1z");
        assert_eq!(element_of_reality(&singlet_xy(), &s1z).unwrap(), None);
    }

    #[test]
    fn product_rule_holds_on_product_eigenstate() {
        let upup = tensor(&qubit(spinor::up()), &qubit(spinor::up()));
        let tsv = TwoStateVector::new(upup.clone(), upup).unwrap();
        let a = pauli(PauliAxis::Z, 0, 2, "a");
        let b = pauli(PauliAxis::Z, 1, 2, "b");
        let ab = ObservableDecomposition::product(&a, &b, "ab").unwrap();
        let report = product_rule_check(&tsv, &a, &b, &ab).unwrap();
        assert_eq!(report.status, ProductRuleStatus::Holds);
        assert_eq!((report.lhs, report.rhs), (Some(1.0), Some(1.0)));
    }

    #[test]
    fn product_rule_preconditions() {
        let tsv = singlet_xy();
        let a = pauli(PauliAxis::Z, 0, 2, "a");
        let b = pauli(PauliAxis::X, 0, 2, "b");
        assert!(matches!(
            product_rule_check(&tsv, &a, &b, &a),
            Err(CounterfactualError::OverlappingSupports { .. })
        ));
        let b = pauli(PauliAxis::X, 1, 2, "b");
        assert!(matches!(
            product_rule_check(&tsv, &a, &b, &a),
            Err(CounterfactualError::NotAProduct { .. })
        ));
        let ab = ObservableDecomposition::product(&a, &b, "ab").unwrap();
        let report = product_rule_check(&tsv, &a, &b, &ab).unwrap();
        assert_eq!(report.status, ProductRuleStatus::Inapplicable);
    }

    #[test]
    fn definition_iii_propagates_meaningless() {
        let tsv = TwoStateVector::new(qubit(spinor::up()), qubit(spinor::down())).unwrap();
        let sz = pauli(PauliAxis::Z, 0, 1, "sz");
        assert!(matches!(definition_iii_eval(&tsv, &sz), Err(CounterfactualError::Meaningless { .. })));
        assert!(matches!(element_of_reality(&tsv, &sz), Err(CounterfactualError::Meaningless { .. })));
        let sx = pauli(PauliAxis::X, 0, 1, "sx");
        let table = definition_iii_eval(&tsv, &sx).unwrap();
        assert!((table.probability_of(&[1.0]).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn threshold_and_conjunction() {
        let tsv = singlet_xy();
        let world = ActualWorld::new(tsv.pre().clone(), tsv.post().clone());
        let query = CounterfactualQuery {
            label: "joint".into(),
            replacement: vec![
                MeasurementEvent::new(1, pauli(PauliAxis::Y, 0, 2, "s1y")),
                MeasurementEvent::new(1, pauli(PauliAxis::X, 1, 2, "s2x")),
            ],
            property: PropertyExpr::And(vec![eq("s1y", -1.0), eq("s2x", -1.0)]),
        };
        // Jointly measured, the two local outcomes are uniform.
        let v = evaluate(&world, &query).unwrap();
        assert!((v.probability.unwrap() - 0.25).abs() < 1e-12);
        let threshold = CounterfactualQuery {
            property: PropertyExpr::Threshold {
                relation: Box::new(PropertyExpr::Equal(
                    Term::Product(vec![Term::Outcome("s1y".into()), Term::Outcome("s2x".into())]),
                    Term::Constant(1.0),
                )),
                comparison: Comparison::Ge,
                value: 0.5,
            },
            ..query
        };
        assert_eq!(evaluate(&world, &threshold).unwrap().kind, VerdictKind::True);
    }

    #[test]
    fn property_display() {
        let p = PropertyExpr::And(vec![
            PropertyExpr::Equal(
                Term::Product(vec![Term::Outcome("a".into()), Term::Outcome("b@2".into())]),
                Term::Constant(-1.0),
            ),
            PropertyExpr::Threshold {
                relation: Box::new(eq("a", 0.5)),
                comparison: Comparison::Lt,
                value: 0.25,
            },
        ]);
        assert_eq!(
            p.to_string(),
            "outcome(a) * outcome(b@2) == -1 and prob(outcome(a) == 0.5) < 0.25"
        );
        assert_eq!(p.labels(), vec!["a", "b@2"]);
    }
}
