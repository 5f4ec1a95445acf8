//! Seeded random scenarios for oracle-equivalence runs.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::hilbert::{Amplitude, HilbertError, LinearOperator, ObservableDecomposition, SpaceLayout, StateVector};
use crate::two_state::{MeasurementEvent, TsvfError, TwoStateVector};

/// Bounds for [`RandomCase::generate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RandomBounds {
    /// Largest dimension of a single subsystem (at least 2).
    pub max_subsystem_dim: usize,
    pub max_subsystems: usize,
    pub max_events: usize,
}

impl Default for RandomBounds {
    fn default() -> Self {
        Self {
            max_subsystem_dim: 4,
            max_subsystems: 2,
            max_events: 3,
        }
    }
}

/// Random pre/post states and a list of measurements with random spectral
/// decompositions, including degenerate ones and shared slots.
#[derive(Debug, Clone)]
pub struct RandomCase {
    pub tsv: TwoStateVector,
    pub events: Vec<MeasurementEvent>,
}

const EIGENVALUE_POOL: [f64; 8] = [-3.0, -2.0, -1.0, -0.5, 0.0, 1.0, 2.0, 2.5];

impl RandomCase {
    pub fn generate<R: Rng + ?Sized>(rng: &mut R, bounds: RandomBounds) -> Result<Self, TsvfError> {
        let n_sub = rng.gen_range(1..=bounds.max_subsystems.max(1));
        let dims = (0..n_sub)
            .map(|_| rng.gen_range(2..=bounds.max_subsystem_dim.max(2)))
            .collect();
        let layout = SpaceLayout::new(dims)?;
        let pre = random_state(rng, &layout)?;
        let post = random_state(rng, &layout)?;
        let n_events = rng.gen_range(1..=bounds.max_events.max(1));

        let mut events: Vec<MeasurementEvent> = Vec::with_capacity(n_events);
        let mut slot = 1u32;
        for i in 0..n_events {
            let support = random_support(rng, n_sub);
            let obs = random_observable(rng, &layout, &support, format!("e{i}"))?;
            if let Some(prev) = events.last() {
                let share = rng.gen_bool(0.3)
                    && events
                        .iter()
                        .filter(|e| e.slot == prev.slot)
                        .all(|e| e.subsystems.iter().all(|k| !support.contains(k)));
                slot = if share { prev.slot } else { prev.slot + rng.gen_range(1..=2) };
            }
            events.push(MeasurementEvent::new(slot, obs));
        }
        Ok(Self {
            tsv: TwoStateVector::new(pre, post)?,
            events,
        })
    }

    pub fn layout(&self) -> &SpaceLayout {
        self.tsv.layout()
    }
}

fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> Amplitude {
    Amplitude::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

pub fn random_state<R: Rng + ?Sized>(rng: &mut R, layout: &SpaceLayout) -> Result<StateVector, HilbertError> {
    let amplitudes = (0..layout.total_dim()).map(|_| gaussian(rng)).collect();
    StateVector::normalized(layout.clone(), amplitudes)
}

/// Orthonormal vectors from Gram–Schmidt on complex Gaussian samples.
pub fn random_orthonormal_basis<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Vec<Vec<Amplitude>> {
    let mut basis: Vec<Vec<Amplitude>> = Vec::with_capacity(dim);
    while basis.len() < dim {
        let mut v: Vec<Amplitude> = (0..dim).map(|_| gaussian(rng)).collect();
        for e in &basis {
            let c: Amplitude = e.iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
            for (vi, ei) in v.iter_mut().zip(e) {
                *vi -= c * ei;
            }
        }
        let n: f64 = v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if n > 1e-6 {
            basis.push(v.into_iter().map(|a| a / n).collect());
        }
    }
    basis
}

pub fn random_unitary<R: Rng + ?Sized>(rng: &mut R, layout: &SpaceLayout) -> LinearOperator {
    let dim = layout.total_dim();
    let columns = random_orthonormal_basis(rng, dim);
    let mut entries = vec![Amplitude::new(0.0, 0.0); dim * dim];
    for (j, col) in columns.iter().enumerate() {
        for (i, &a) in col.iter().enumerate() {
            entries[i * dim + j] = a;
        }
    }
    LinearOperator::from_entries(layout.clone(), entries).expect("square")
}

fn random_support<R: Rng + ?Sized>(rng: &mut R, n_sub: usize) -> Vec<usize> {
    loop {
        let support: Vec<usize> = (0..n_sub).filter(|_| rng.gen_bool(0.5)).collect();
        if !support.is_empty() {
            return support;
        }
    }
}

/// Random observable acting on `support`, with between 2 and `local_dim`
/// distinct eigenvalues.
pub fn random_observable<R: Rng + ?Sized>(
    rng: &mut R,
    layout: &SpaceLayout,
    support: &[usize],
    label: String,
) -> Result<ObservableDecomposition, HilbertError> {
    let local_layout = layout.select(support)?;
    let local_dim = local_layout.total_dim();
    let basis = random_orthonormal_basis(rng, local_dim);
    let n_values = rng.gen_range(2..=local_dim.min(EIGENVALUE_POOL.len()));
    let mut values = EIGENVALUE_POOL.to_vec();
    values.shuffle(rng);
    values.truncate(n_values);
    // Every eigenvalue gets at least one basis vector; the rest are spread at random.
    let mut groups: Vec<Vec<Vec<Amplitude>>> = vec![Vec::new(); n_values];
    for (i, v) in basis.into_iter().enumerate() {
        let g = if i < n_values { i } else { rng.gen_range(0..n_values) };
        groups[g].push(v);
    }
    let eigenspaces: Vec<(f64, Vec<Vec<Amplitude>>)> = values.into_iter().zip(groups).collect();
    let local =
        ObservableDecomposition::from_eigenvectors(&local_layout, label, (0..support.len()).collect(), &eigenspaces)?;
    ObservableDecomposition::embedded(&local, support, layout)
}
