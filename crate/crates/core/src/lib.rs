//! Counterfactual reasoning for pre- and post-selected quantum systems.
//!
//! The crate computes ABL probabilities for intermediate measurements,
//! evaluates counterfactual statements with the results of all other
//! measurements held fixed, identifies elements of reality and checks the
//! product rule. Every ABL computation can be cross-checked against a
//! forward Born-rule simulation with post-selection.

pub mod config;
pub mod hilbert;
pub mod two_state;
pub mod oracle;
pub mod counterfactual;
pub mod numfmt;
pub mod scenario;
pub mod cli;
