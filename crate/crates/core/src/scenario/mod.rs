//! Scenario files: a small line-oriented language describing a pre- and
//! post-selected system, the measurements of the actual world and the
//! counterfactual queries to ask about it.
//!
//! ```text
//! # comments run to end of line
//! scenario singlet-xy
//! space 2 x 2
//! state singlet = 1/sqrt(2) (|up,down> - |down,up>)
//! state xy = |+x,+y>
//! obs s1y = pauli Y @ 1
//! obs s2x = pauli X @ 2
//! obs s1ys2x = product(s1y, s2x)
//! obs a = { 1: [1,0 0,0] -1: [0,0 1,0] } @ 2
//! pre singlet
//! post xy
//! event 1 s1y = -1          # fixed result; omit "= v" for an unrecorded one
//! actual 2 s2x = 1          # the measurement being replaced
//! query replace 2 a assert outcome(a) == 1
//! config samples 100000 seed 7
//! ```
//!
//! Subsystems are numbered from 1 in the file and from 0 in the API. For
//! spin-½ subsystems basis index 0 is `|up>` (σz = +1), `|+x> = (1,1)/√2`
//! and `|+y> = (1,i)/√2`.

mod builtin;
mod lexer;
mod parse;
mod serialize;

use thiserror::Error;

use crate::counterfactual::{ActualWorld, CounterfactualQuery, PropertyExpr};
use crate::hilbert::{Amplitude, ObservableDecomposition, PauliAxis, SpaceLayout, StateVector};
use crate::two_state::{MeasurementEvent, TsvfError, TwoStateVector};

pub use builtin::{builtin, builtin_source, BUILTIN_NAMES};
pub use parse::parse;
pub use serialize::serialize;

/// Syntax error with a 1-based position into the source text.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}, column {column}: {message} (at `{token}`)")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
    pub token: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("line {line}: {message}")]
    Semantic { line: usize, message: String },
    #[error("unknown builtin scenario `{0}` (known: singlet-xy, three-z-x-z, stapp-cf-z, stapp-cf-x)")]
    UnknownBuiltin(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ObservableDef {
    Pauli {
        axis: PauliAxis,
        subsystem: usize,
    },
    /// Eigenvectors per eigenvalue, over the whole space or over `support`.
    Explicit {
        eigenspaces: Vec<(f64, Vec<Vec<Amplitude>>)>,
        support: Option<Vec<usize>>,
    },
    Product {
        left: String,
        right: String,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedState {
    pub name: String,
    pub state: StateVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedObservable {
    pub name: String,
    pub definition: ObservableDef,
    pub decomposition: ObservableDecomposition,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventDecl {
    pub slot: u32,
    pub observable: String,
    pub outcome: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryDecl {
    pub replacement: Vec<(u32, String)>,
    pub property: PropertyExpr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunConfig {
    pub samples: u64,
    pub seed: u64,
}

/// A validated scenario. Names in `pre`, `post`, events and queries all
/// resolve, every state is normalized and every observable is a valid
/// spectral decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub layout: SpaceLayout,
    pub states: Vec<NamedState>,
    pub observables: Vec<NamedObservable>,
    pub pre: String,
    pub post: String,
    /// Measurements of the actual world that stay fixed.
    pub events: Vec<EventDecl>,
    /// The measurement replaced by each query.
    pub actual: Vec<EventDecl>,
    pub queries: Vec<QueryDecl>,
    pub config: Option<RunConfig>,
}

impl Scenario {
    pub fn state(&self, name: &str) -> Option<&StateVector> {
        self.states.iter().find(|s| s.name == name).map(|s| &s.state)
    }

    pub fn observable(&self, name: &str) -> Option<&NamedObservable> {
        self.observables.iter().find(|o| o.name == name)
    }

    fn event(&self, slot: u32, name: &str) -> MeasurementEvent {
        let obs = self.observable(name).expect("validated scenario");
        MeasurementEvent::new(slot, obs.decomposition.clone()).with_label(name)
    }

    pub fn two_state(&self) -> Result<TwoStateVector, TsvfError> {
        TwoStateVector::new(
            self.state(&self.pre).expect("validated scenario").clone(),
            self.state(&self.post).expect("validated scenario").clone(),
        )
    }

    pub fn world(&self) -> ActualWorld {
        let mut world = ActualWorld::new(
            self.state(&self.pre).expect("validated scenario").clone(),
            self.state(&self.post).expect("validated scenario").clone(),
        );
        for e in &self.events {
            let event = self.event(e.slot, &e.observable);
            world = match e.outcome {
                Some(v) => world.with_fixed(event, v),
                None => world.with_unrecorded(event),
            };
        }
        for e in &self.actual {
            world = world.with_actual(self.event(e.slot, &e.observable), e.outcome.expect("actual outcome"));
        }
        world
    }

    /// Queries labelled `q1`, `q2`, … in file order.
    pub fn queries(&self) -> Vec<CounterfactualQuery> {
        self.queries
            .iter()
            .enumerate()
            .map(|(i, q)| CounterfactualQuery {
                label: format!("q{}", i + 1),
                replacement: q.replacement.iter().map(|(slot, name)| self.event(*slot, name)).collect(),
                property: q.property.clone(),
            })
            .collect()
    }

    /// Every `product(a, b)` observable with its two factors.
    pub fn products(&self) -> Vec<(&NamedObservable, &NamedObservable, &NamedObservable)> {
        self.observables
            .iter()
            .filter_map(|ab| match &ab.definition {
                ObservableDef::Product { left, right } => {
                    Some((self.observable(left)?, self.observable(right)?, ab))
                }
                _ => None,
            })
            .collect()
    }

    /// Fixed events plus the replacement of one query, as measurement events.
    pub fn query_events(&self, query: &CounterfactualQuery) -> Vec<MeasurementEvent> {
        self.world()
            .fixed
            .into_iter()
            .map(|r| r.event)
            .chain(query.replacement.iter().cloned())
            .collect()
    }
}
