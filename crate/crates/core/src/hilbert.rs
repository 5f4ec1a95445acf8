//! Dense finite-dimensional linear algebra over tensor-product spaces.
//!
//! Basis indices are row-major over the subsystems: subsystem 0 is the most
//! significant digit, so `|a⟩⊗|b⟩` lives at index `a * d1 + b`. For spin-½
//! subsystems basis index 0 is `|↑⟩` (σz = +1) and index 1 is `|↓⟩`.

use num_complex::Complex64;
use thiserror::Error;

use crate::config::TOLERANCES;

pub type Amplitude = Complex64;

const ZERO: Amplitude = Complex64::new(0.0, 0.0);
const ONE: Amplitude = Complex64::new(1.0, 0.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HilbertError {
    #[error("layout must have at least one subsystem")]
    EmptyLayout,
    #[error("subsystem {index} has dimension {dim}; every subsystem needs dimension >= 2")]
    SubsystemTooSmall { index: usize, dim: usize },
    #[error("layout dimension overflows")]
    DimensionOverflow,
    #[error("expected {expected} amplitudes, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("non-finite amplitude at index {0}")]
    NonFinite(usize),
    #[error("state is not normalized: squared norm {norm_sqr}")]
    NotNormalized { norm_sqr: f64 },
    #[error("cannot normalize the zero vector")]
    ZeroVector,
    #[error("layout mismatch: {left:?} vs {right:?}")]
    LayoutMismatch { left: Vec<usize>, right: Vec<usize> },
    #[error("subsystem index {index} out of range for {count} subsystems")]
    SubsystemOutOfRange { index: usize, count: usize },
    #[error("operator dimension {actual} does not match selected subsystems (expected {expected})")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("eigenvectors for eigenvalue {eigenvalue} are linearly dependent")]
    DependentEigenvectors { eigenvalue: f64 },
    #[error("observables {left} and {right} do not commute")]
    NonCommuting { left: String, right: String },
    #[error("observable {label} is not a valid spectral decomposition: {reason}")]
    InvalidObservable { label: String, reason: String },
}

/// Subsystem dimensions of a composite system.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SpaceLayout {
    dims: Vec<usize>,
    total_dim: usize,
}

impl SpaceLayout {
    pub fn new(dims: Vec<usize>) -> Result<Self, HilbertError> {
        if dims.is_empty() {
            return Err(HilbertError::EmptyLayout);
        }
        let mut total_dim = 1usize;
        for (index, &dim) in dims.iter().enumerate() {
            if dim < 2 {
                return Err(HilbertError::SubsystemTooSmall { index, dim });
            }
            total_dim = total_dim
                .checked_mul(dim)
                .ok_or(HilbertError::DimensionOverflow)?;
        }
        Ok(Self { dims, total_dim })
    }

    /// `n` spin-½ subsystems.
    pub fn qubits(n: usize) -> Self {
        Self::new(vec![2; n]).expect("qubit layout")
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn total_dim(&self) -> usize {
        self.total_dim
    }

    pub fn num_subsystems(&self) -> usize {
        self.dims.len()
    }

    pub fn concat(&self, other: &SpaceLayout) -> SpaceLayout {
        let mut dims = self.dims.clone();
        dims.extend_from_slice(&other.dims);
        SpaceLayout::new(dims).expect("concatenation of valid layouts")
    }

    /// Layout made of the selected subsystems, in ascending index order.
    pub fn select(&self, subsystems: &[usize]) -> Result<SpaceLayout, HilbertError> {
        let sorted = self.normalize_subsystems(subsystems)?;
        SpaceLayout::new(sorted.iter().map(|&k| self.dims[k]).collect())
    }

    /// Sorted, deduplicated, range-checked subsystem set.
    pub fn normalize_subsystems(&self, subsystems: &[usize]) -> Result<Vec<usize>, HilbertError> {
        let mut sorted = subsystems.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        if let Some(&bad) = sorted.iter().find(|&&k| k >= self.dims.len()) {
            return Err(HilbertError::SubsystemOutOfRange {
                index: bad,
                count: self.dims.len(),
            });
        }
        Ok(sorted)
    }

    pub fn digits(&self, mut index: usize) -> Vec<usize> {
        let mut digits = vec![0; self.dims.len()];
        for (slot, &dim) in digits.iter_mut().zip(&self.dims).rev() {
            *slot = index % dim;
            index /= dim;
        }
        digits
    }

    pub fn index(&self, digits: &[usize]) -> usize {
        digits
            .iter()
            .zip(&self.dims)
            .fold(0, |acc, (&digit, &dim)| acc * dim + digit)
    }

    fn ensure_same(&self, other: &SpaceLayout) -> Result<(), HilbertError> {
        if self == other {
            Ok(())
        } else {
            Err(HilbertError::LayoutMismatch {
                left: self.dims.clone(),
                right: other.dims.clone(),
            })
        }
    }
}

fn check_finite(amplitudes: &[Amplitude]) -> Result<(), HilbertError> {
    match amplitudes.iter().position(|a| !a.re.is_finite() || !a.im.is_finite()) {
        Some(i) => Err(HilbertError::NonFinite(i)),
        None => Ok(()),
    }
}

pub fn norm_sqr(v: &[Amplitude]) -> f64 {
    v.iter().map(|a| a.norm_sqr()).sum()
}

/// `⟨a|b⟩` for raw amplitude slices of equal length.
pub fn dot(a: &[Amplitude], b: &[Amplitude]) -> Amplitude {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// A normalized pure state.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    layout: SpaceLayout,
    amplitudes: Vec<Amplitude>,
}

impl StateVector {
    /// Accepts amplitudes whose squared norm is already 1 within the arithmetic tolerance.
    pub fn new(layout: SpaceLayout, amplitudes: Vec<Amplitude>) -> Result<Self, HilbertError> {
        if amplitudes.len() != layout.total_dim() {
            return Err(HilbertError::LengthMismatch {
                expected: layout.total_dim(),
                actual: amplitudes.len(),
            });
        }
        check_finite(&amplitudes)?;
        let n = norm_sqr(&amplitudes);
        if (n - 1.0).abs() > TOLERANCES.arithmetic {
            return Err(HilbertError::NotNormalized { norm_sqr: n });
        }
        Ok(Self { layout, amplitudes })
    }

    /// Rescales arbitrary nonzero amplitudes to unit norm.
    pub fn normalized(layout: SpaceLayout, amplitudes: Vec<Amplitude>) -> Result<Self, HilbertError> {
        if amplitudes.len() != layout.total_dim() {
            return Err(HilbertError::LengthMismatch {
                expected: layout.total_dim(),
                actual: amplitudes.len(),
            });
        }
        check_finite(&amplitudes)?;
        let n = norm_sqr(&amplitudes);
        if n < TOLERANCES.zero_denominator {
            return Err(HilbertError::ZeroVector);
        }
        let scale = 1.0 / n.sqrt();
        Ok(Self {
            layout,
            amplitudes: amplitudes.into_iter().map(|a| a * scale).collect(),
        })
    }

    pub fn basis(layout: SpaceLayout, index: usize) -> Result<Self, HilbertError> {
        let dim = layout.total_dim();
        if index >= dim {
            return Err(HilbertError::LengthMismatch {
                expected: dim,
                actual: index + 1,
            });
        }
        let mut amplitudes = vec![ZERO; dim];
        amplitudes[index] = ONE;
        Ok(Self { layout, amplitudes })
    }

    pub fn layout(&self) -> &SpaceLayout {
        &self.layout
    }

    pub fn amplitudes(&self) -> &[Amplitude] {
        &self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        norm_sqr(&self.amplitudes)
    }
}

/// Single spin-½ states in the `|↑⟩, |↓⟩` basis.
pub mod spinor {
    use super::Amplitude;
    use std::f64::consts::FRAC_1_SQRT_2;

    pub fn up() -> [Amplitude; 2] {
        [Amplitude::new(1.0, 0.0), Amplitude::new(0.0, 0.0)]
    }

    pub fn down() -> [Amplitude; 2] {
        [Amplitude::new(0.0, 0.0), Amplitude::new(1.0, 0.0)]
    }

    pub fn plus_x() -> [Amplitude; 2] {
        [Amplitude::new(FRAC_1_SQRT_2, 0.0), Amplitude::new(FRAC_1_SQRT_2, 0.0)]
    }

    pub fn minus_x() -> [Amplitude; 2] {
        [Amplitude::new(FRAC_1_SQRT_2, 0.0), Amplitude::new(-FRAC_1_SQRT_2, 0.0)]
    }

    pub fn plus_y() -> [Amplitude; 2] {
        [Amplitude::new(FRAC_1_SQRT_2, 0.0), Amplitude::new(0.0, FRAC_1_SQRT_2)]
    }

    pub fn minus_y() -> [Amplitude; 2] {
        [Amplitude::new(FRAC_1_SQRT_2, 0.0), Amplitude::new(0.0, -FRAC_1_SQRT_2)]
    }
}

/// Kronecker product of raw amplitude slices.
pub fn kron_vec(a: &[Amplitude], b: &[Amplitude]) -> Vec<Amplitude> {
    let mut out = Vec::with_capacity(a.len() * b.len());
    for x in a {
        for y in b {
            out.push(x * y);
        }
    }
    out
}

pub fn tensor(a: &StateVector, b: &StateVector) -> StateVector {
    let layout = a.layout.concat(&b.layout);
    let amplitudes = kron_vec(&a.amplitudes, &b.amplitudes);
    // Renormalize to absorb the rounding of two unit norms multiplied together.
    StateVector::normalized(layout, amplitudes).expect("product of unit vectors is nonzero")
}

/// `⟨a|b⟩`, conjugate-linear in `a`.
pub fn inner(a: &StateVector, b: &StateVector) -> Result<Amplitude, HilbertError> {
    a.layout.ensure_same(&b.layout)?;
    Ok(dot(&a.amplitudes, &b.amplitudes))
}

/// Dense square operator on a layout, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearOperator {
    layout: SpaceLayout,
    entries: Vec<Amplitude>,
}

impl LinearOperator {
    pub fn from_entries(layout: SpaceLayout, entries: Vec<Amplitude>) -> Result<Self, HilbertError> {
        let dim = layout.total_dim();
        if entries.len() != dim * dim {
            return Err(HilbertError::LengthMismatch {
                expected: dim * dim,
                actual: entries.len(),
            });
        }
        check_finite(&entries)?;
        Ok(Self { layout, entries })
    }

    pub fn zeros(layout: SpaceLayout) -> Self {
        let dim = layout.total_dim();
        Self {
            layout,
            entries: vec![ZERO; dim * dim],
        }
    }

    pub fn identity(layout: SpaceLayout) -> Self {
        let mut op = Self::zeros(layout);
        let dim = op.dim();
        for i in 0..dim {
            op.entries[i * dim + i] = ONE;
        }
        op
    }

    /// `|ket⟩⟨bra|`.
    pub fn outer(layout: SpaceLayout, ket: &[Amplitude], bra: &[Amplitude]) -> Result<Self, HilbertError> {
        let dim = layout.total_dim();
        for v in [ket, bra] {
            if v.len() != dim {
                return Err(HilbertError::LengthMismatch {
                    expected: dim,
                    actual: v.len(),
                });
            }
        }
        let mut entries = Vec::with_capacity(dim * dim);
        for k in ket {
            for b in bra {
                entries.push(k * b.conj());
            }
        }
        Ok(Self { layout, entries })
    }

    /// Rank-one projector onto a (not necessarily normalized) nonzero vector.
    pub fn projector_onto(layout: SpaceLayout, v: &[Amplitude]) -> Result<Self, HilbertError> {
        let n = norm_sqr(v);
        if n < TOLERANCES.zero_denominator {
            return Err(HilbertError::ZeroVector);
        }
        let mut op = Self::outer(layout, v, v)?;
        for e in &mut op.entries {
            *e /= n;
        }
        Ok(op)
    }

    pub fn layout(&self) -> &SpaceLayout {
        &self.layout
    }

    pub fn dim(&self) -> usize {
        self.layout.total_dim()
    }

    pub fn entries(&self) -> &[Amplitude] {
        &self.entries
    }

    pub fn get(&self, row: usize, col: usize) -> Amplitude {
        self.entries[row * self.dim() + col]
    }

    pub fn apply(&self, v: &[Amplitude]) -> Result<Vec<Amplitude>, HilbertError> {
        let dim = self.dim();
        if v.len() != dim {
            return Err(HilbertError::LengthMismatch {
                expected: dim,
                actual: v.len(),
            });
        }
        Ok(self
            .entries
            .chunks_exact(dim)
            .map(|row| row.iter().zip(v).map(|(m, x)| m * x).sum())
            .collect())
    }

    pub fn matmul(&self, other: &LinearOperator) -> Result<LinearOperator, HilbertError> {
        self.layout.ensure_same(&other.layout)?;
        let dim = self.dim();
        let mut entries = vec![ZERO; dim * dim];
        for i in 0..dim {
            for k in 0..dim {
                let a = self.entries[i * dim + k];
                if a == ZERO {
                    continue;
                }
                for j in 0..dim {
                    entries[i * dim + j] += a * other.entries[k * dim + j];
                }
            }
        }
        Ok(Self {
            layout: self.layout.clone(),
            entries,
        })
    }

    pub fn add(&self, other: &LinearOperator) -> Result<LinearOperator, HilbertError> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &LinearOperator) -> Result<LinearOperator, HilbertError> {
        self.zip_with(other, |a, b| a - b)
    }

    fn zip_with(
        &self,
        other: &LinearOperator,
        f: impl Fn(Amplitude, Amplitude) -> Amplitude,
    ) -> Result<LinearOperator, HilbertError> {
        self.layout.ensure_same(&other.layout)?;
        Ok(Self {
            layout: self.layout.clone(),
            entries: self
                .entries
                .iter()
                .zip(&other.entries)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn scale(&self, factor: Amplitude) -> LinearOperator {
        Self {
            layout: self.layout.clone(),
            entries: self.entries.iter().map(|&a| a * factor).collect(),
        }
    }

    pub fn adjoint(&self) -> LinearOperator {
        let dim = self.dim();
        let mut entries = vec![ZERO; dim * dim];
        for i in 0..dim {
            for j in 0..dim {
                entries[j * dim + i] = self.entries[i * dim + j].conj();
            }
        }
        Self {
            layout: self.layout.clone(),
            entries,
        }
    }

    /// Kronecker product; the layout is the concatenation of both layouts.
    pub fn kron(&self, other: &LinearOperator) -> LinearOperator {
        let (da, db) = (self.dim(), other.dim());
        let dim = da * db;
        let mut entries = vec![ZERO; dim * dim];
        for i in 0..da {
            for j in 0..da {
                let a = self.entries[i * da + j];
                for k in 0..db {
                    for l in 0..db {
                        entries[(i * db + k) * dim + (j * db + l)] = a * other.entries[k * db + l];
                    }
                }
            }
        }
        Self {
            layout: self.layout.concat(&other.layout),
            entries,
        }
    }

    /// Largest entrywise modulus of `self - other`; infinite on layout mismatch.
    pub fn max_abs_diff(&self, other: &LinearOperator) -> f64 {
        if self.layout != other.layout {
            return f64::INFINITY;
        }
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        let product = self.adjoint().matmul(self).expect("same layout");
        product.max_abs_diff(&LinearOperator::identity(self.layout.clone())) <= tol
    }

    pub fn trace(&self) -> Amplitude {
        (0..self.dim()).map(|i| self.get(i, i)).sum()
    }
}

pub fn apply(op: &LinearOperator, v: &[Amplitude]) -> Result<Vec<Amplitude>, HilbertError> {
    op.apply(v)
}

/// Lifts `local`, acting on `subsystems` (taken in ascending order), to the
/// whole of `layout`; identity elsewhere.
pub fn embed(
    local: &LinearOperator,
    subsystems: &[usize],
    layout: &SpaceLayout,
) -> Result<LinearOperator, HilbertError> {
    let selected = layout.normalize_subsystems(subsystems)?;
    let local_dims: Vec<usize> = selected.iter().map(|&k| layout.dims()[k]).collect();
    let expected: usize = local_dims.iter().product();
    if local.dim() != expected {
        return Err(HilbertError::DimensionMismatch {
            expected,
            actual: local.dim(),
        });
    }
    let local_index = |digits: &[usize]| {
        selected
            .iter()
            .zip(&local_dims)
            .fold(0, |acc, (&k, &d)| acc * d + digits[k])
    };
    let dim = layout.total_dim();
    let mut entries = vec![ZERO; dim * dim];
    let all_digits: Vec<Vec<usize>> = (0..dim).map(|i| layout.digits(i)).collect();
    for (row, rd) in all_digits.iter().enumerate() {
        for (col, cd) in all_digits.iter().enumerate() {
            let spectators_agree = (0..layout.num_subsystems())
                .filter(|k| selected.binary_search(k).is_err())
                .all(|k| rd[k] == cd[k]);
            if spectators_agree {
                entries[row * dim + col] = local.get(local_index(rd), local_index(cd));
            }
        }
    }
    Ok(LinearOperator {
        layout: layout.clone(),
        entries,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PauliAxis {
    X,
    Y,
    Z,
}

impl PauliAxis {
    pub fn symbol(self) -> char {
        match self {
            PauliAxis::X => 'X',
            PauliAxis::Y => 'Y',
            PauliAxis::Z => 'Z',
        }
    }

    pub fn from_symbol(c: char) -> Option<Self> {
        match c.to_ascii_uppercase() {
            'X' => Some(PauliAxis::X),
            'Y' => Some(PauliAxis::Y),
            'Z' => Some(PauliAxis::Z),
            _ => None,
        }
    }

    /// (+1 eigenvector, −1 eigenvector).
    pub fn eigenvectors(self) -> ([Amplitude; 2], [Amplitude; 2]) {
        match self {
            PauliAxis::X => (spinor::plus_x(), spinor::minus_x()),
            PauliAxis::Y => (spinor::plus_y(), spinor::minus_y()),
            PauliAxis::Z => (spinor::up(), spinor::down()),
        }
    }

    pub fn matrix(self) -> LinearOperator {
        let i = Amplitude::new(0.0, 1.0);
        let entries = match self {
            PauliAxis::X => vec![ZERO, ONE, ONE, ZERO],
            PauliAxis::Y => vec![ZERO, -i, i, ZERO],
            PauliAxis::Z => vec![ONE, ZERO, ZERO, -ONE],
        };
        LinearOperator::from_entries(SpaceLayout::qubits(1), entries).expect("2x2")
    }
}

/// One outcome of an observable and the projector onto its eigenspace.
#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub eigenvalue: f64,
    pub projector: LinearOperator,
}

/// An observable in spectral form, `A = Σ a_i P_{A=a_i}`.
///
/// `support` lists the subsystems the observable acts on; it decides which
/// measurements may share a time slot.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservableDecomposition {
    layout: SpaceLayout,
    branches: Vec<Branch>,
    label: String,
    support: Vec<usize>,
}

impl ObservableDecomposition {
    /// Unchecked assembly; run [`validate`] before trusting the result.
    pub fn new(
        layout: SpaceLayout,
        label: impl Into<String>,
        support: Vec<usize>,
        branches: Vec<Branch>,
    ) -> Result<Self, HilbertError> {
        let support = layout.normalize_subsystems(&support)?;
        for b in &branches {
            layout.ensure_same(b.projector.layout())?;
        }
        Ok(Self {
            layout,
            branches,
            label: label.into(),
            support,
        })
    }

    /// σ_axis on one spin-½ subsystem.
    pub fn pauli(axis: PauliAxis, subsystem: usize, layout: &SpaceLayout) -> Result<Self, HilbertError> {
        if subsystem >= layout.num_subsystems() {
            return Err(HilbertError::SubsystemOutOfRange {
                index: subsystem,
                count: layout.num_subsystems(),
            });
        }
        if layout.dims()[subsystem] != 2 {
            return Err(HilbertError::DimensionMismatch {
                expected: 2,
                actual: layout.dims()[subsystem],
            });
        }
        let local_layout = SpaceLayout::qubits(1);
        let (plus, minus) = axis.eigenvectors();
        let branches = [(1.0, plus), (-1.0, minus)]
            .into_iter()
            .map(|(eigenvalue, v)| {
                let local = LinearOperator::projector_onto(local_layout.clone(), &v)?;
                Ok(Branch {
                    eigenvalue,
                    projector: embed(&local, &[subsystem], layout)?,
                })
            })
            .collect::<Result<Vec<_>, HilbertError>>()?;
        let label = format!("sigma{}{}", axis.symbol().to_ascii_lowercase(), subsystem + 1);
        Self::new(layout.clone(), label, vec![subsystem], branches)
    }

    /// Builds projectors from eigenvectors, orthonormalizing within each eigenspace.
    /// Vectors are given in the space of `layout`.
    pub fn from_eigenvectors(
        layout: &SpaceLayout,
        label: impl Into<String>,
        support: Vec<usize>,
        eigenspaces: &[(f64, Vec<Vec<Amplitude>>)],
    ) -> Result<Self, HilbertError> {
        let dim = layout.total_dim();
        let mut branches = Vec::with_capacity(eigenspaces.len());
        for (eigenvalue, vectors) in eigenspaces {
            let mut basis: Vec<Vec<Amplitude>> = Vec::new();
            let mut projector = LinearOperator::zeros(layout.clone());
            for v in vectors {
                if v.len() != dim {
                    return Err(HilbertError::LengthMismatch {
                        expected: dim,
                        actual: v.len(),
                    });
                }
                check_finite(v)?;
                let mut w = v.clone();
                let original = norm_sqr(&w).sqrt();
                for e in &basis {
                    let c = dot(e, &w);
                    for (wi, ei) in w.iter_mut().zip(e) {
                        *wi -= c * ei;
                    }
                }
                let n = norm_sqr(&w).sqrt();
                if original == 0.0 || n <= TOLERANCES.structural * original.max(1.0) {
                    return Err(HilbertError::DependentEigenvectors {
                        eigenvalue: *eigenvalue,
                    });
                }
                w.iter_mut().for_each(|x| *x /= n);
                projector = projector.add(&LinearOperator::outer(layout.clone(), &w, &w)?)?;
                basis.push(w);
            }
            branches.push(Branch {
                eigenvalue: *eigenvalue,
                projector,
            });
        }
        Self::new(layout.clone(), label, support, branches)
    }

    /// Lifts an observable defined on the selected subsystems to `layout`.
    pub fn embedded(
        local: &ObservableDecomposition,
        subsystems: &[usize],
        layout: &SpaceLayout,
    ) -> Result<Self, HilbertError> {
        let branches = local
            .branches
            .iter()
            .map(|b| {
                Ok(Branch {
                    eigenvalue: b.eigenvalue,
                    projector: embed(&b.projector, subsystems, layout)?,
                })
            })
            .collect::<Result<Vec<_>, HilbertError>>()?;
        Self::new(layout.clone(), local.label.clone(), subsystems.to_vec(), branches)
    }

    /// Spectral form of the product of two commuting observables. Products
    /// with equal eigenvalues are merged into one (degenerate) branch;
    /// branches come out in descending eigenvalue order.
    pub fn product(a: &Self, b: &Self, label: impl Into<String>) -> Result<Self, HilbertError> {
        a.layout.ensure_same(&b.layout)?;
        let mut merged: Vec<Branch> = Vec::new();
        for pa in &a.branches {
            for pb in &b.branches {
                let ab = pa.projector.matmul(&pb.projector)?;
                let ba = pb.projector.matmul(&pa.projector)?;
                if ab.max_abs_diff(&ba) > TOLERANCES.structural {
                    return Err(HilbertError::NonCommuting {
                        left: a.label.clone(),
                        right: b.label.clone(),
                    });
                }
                if ab.trace().re.abs() < TOLERANCES.structural {
                    continue;
                }
                let value = pa.eigenvalue * pb.eigenvalue;
                match merged
                    .iter_mut()
                    .find(|m| (m.eigenvalue - value).abs() <= TOLERANCES.structural)
                {
                    Some(m) => m.projector = m.projector.add(&ab)?,
                    None => merged.push(Branch {
                        eigenvalue: value,
                        projector: ab,
                    }),
                }
            }
        }
        merged.sort_by(|x, y| y.eigenvalue.total_cmp(&x.eigenvalue));
        let mut support = a.support.clone();
        support.extend_from_slice(&b.support);
        Self::new(a.layout.clone(), label, support, merged)
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn layout(&self) -> &SpaceLayout {
        &self.layout
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        self.branches.iter().map(|b| b.eigenvalue).collect()
    }

    /// Index of the branch whose eigenvalue matches `value` within the certainty tolerance.
    pub fn branch_index(&self, value: f64) -> Option<usize> {
        self.branches
            .iter()
            .position(|b| (b.eigenvalue - value).abs() <= TOLERANCES.certainty)
    }

    /// `Σ a_i P_i`.
    pub fn matrix(&self) -> LinearOperator {
        self.branches.iter().fold(LinearOperator::zeros(self.layout.clone()), |acc, b| {
            acc.add(&b.projector.scale(Amplitude::new(b.eigenvalue, 0.0)))
                .expect("same layout")
        })
    }

    /// Errors with a readable reason unless [`validate`] passes.
    pub fn checked(self) -> Result<Self, HilbertError> {
        let report = validate(&self);
        if report.is_valid() {
            Ok(self)
        } else {
            Err(HilbertError::InvalidObservable {
                label: self.label.clone(),
                reason: report.failures().join("; "),
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Check {
    pub passed: bool,
    pub max_deviation: f64,
}

impl Check {
    fn within(max_deviation: f64, tol: f64) -> Self {
        Self {
            passed: max_deviation <= tol,
            max_deviation,
        }
    }
}

/// Outcome of checking that a spectral decomposition is a complete orthogonal family.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub nonempty: bool,
    pub hermitian: Check,
    pub idempotent: Check,
    pub orthogonal: Check,
    pub complete: Check,
    pub distinct_eigenvalues: bool,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.nonempty
            && self.hermitian.passed
            && self.idempotent.passed
            && self.orthogonal.passed
            && self.complete.passed
            && self.distinct_eigenvalues
    }

    pub fn failures(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !self.nonempty {
            out.push("no branches".to_string());
        }
        for (name, check) in [
            ("hermitian", self.hermitian),
            ("idempotent", self.idempotent),
            ("orthogonal", self.orthogonal),
            ("complete", self.complete),
        ] {
            if !check.passed {
                out.push(format!("{name} (max deviation {:e})", check.max_deviation));
            }
        }
        if !self.distinct_eigenvalues {
            out.push("repeated eigenvalue".to_string());
        }
        out
    }
}

pub fn validate(obs: &ObservableDecomposition) -> ValidationReport {
    let tol = TOLERANCES.structural;
    let mut hermitian: f64 = 0.0;
    let mut idempotent: f64 = 0.0;
    let mut orthogonal: f64 = 0.0;
    let mut sum = LinearOperator::zeros(obs.layout.clone());
    for (i, bi) in obs.branches.iter().enumerate() {
        let p = &bi.projector;
        hermitian = hermitian.max(p.max_abs_diff(&p.adjoint()));
        let square = p.matmul(p).expect("same layout");
        idempotent = idempotent.max(square.max_abs_diff(p));
        for bj in &obs.branches[i + 1..] {
            let cross = p.matmul(&bj.projector).expect("same layout");
            orthogonal = orthogonal.max(cross.max_abs_diff(&LinearOperator::zeros(obs.layout.clone())));
        }
        sum = sum.add(p).expect("same layout");
    }
    let complete = sum.max_abs_diff(&LinearOperator::identity(obs.layout.clone()));
    let distinct_eigenvalues = obs.branches.iter().enumerate().all(|(i, a)| {
        obs.branches[i + 1..]
            .iter()
            .all(|b| (a.eigenvalue - b.eigenvalue).abs() > tol && a.eigenvalue.is_finite())
    });
    ValidationReport {
        nonempty: !obs.branches.is_empty(),
        hermitian: Check::within(hermitian, tol),
        idempotent: Check::within(idempotent, tol),
        orthogonal: Check::within(orthogonal, tol),
        complete: Check::within(complete, tol),
        distinct_eigenvalues,
    }
}
