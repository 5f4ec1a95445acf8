//! Numerical tolerances shared by every module.

/// Thresholds used to decide structural properties, arithmetic equality,
/// certainty of a probability and vanishing ABL denominators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Projector identities: hermiticity, idempotence, orthogonality, completeness.
    pub structural: f64,
    /// Normalization and probability sums.
    pub arithmetic: f64,
    /// A probability within this distance of 0 or 1 is treated as certain.
    pub certainty: f64,
    /// Raw squared-amplitude sums below this are exact zeros.
    pub zero_denominator: f64,
}

pub const TOLERANCES: Tolerances = Tolerances {
    structural: 1e-10,
    arithmetic: 1e-12,
    certainty: 1e-9,
    zero_denominator: 1e-24,
};

impl Default for Tolerances {
    fn default() -> Self {
        TOLERANCES
    }
}
