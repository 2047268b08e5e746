//! Spin-1 ground-state Hamiltonian of the NV center with strain and a
//! transverse DC field, its diagonalization, and the second-order effective
//! parameters obtained by eliminating the Zeeman coupling.
//!
//! Matrices are written in the basis {|+1⟩, |0⟩, |−1⟩}.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::NVParams;

pub type ComplexMatrix3 = Matrix3<Complex64>;
pub type ComplexVector3 = Vector3<Complex64>;

/// Energy gap below which two eigenvalues are treated as degenerate (Hz).
pub const DEGENERACY_THRESHOLD: f64 = 1.0;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// Spin-1 operators (S_x, S_y, S_z).
pub fn spin1_operators() -> (ComplexMatrix3, ComplexMatrix3, ComplexMatrix3) {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let i = Complex64::new(0.0, s);
    let sx = Matrix3::new(ZERO, c(s), ZERO, c(s), ZERO, c(s), ZERO, c(s), ZERO);
    let sy = Matrix3::new(ZERO, -i, ZERO, i, ZERO, -i, ZERO, i, ZERO);
    let sz = Matrix3::new(c(1.0), ZERO, ZERO, ZERO, ZERO, ZERO, ZERO, ZERO, c(-1.0));
    (sx, sy, sz)
}

/// D·S_z² + E_x·(S_x² − S_y²) + E_y·(S_xS_y + S_yS_x) + γ_e·B_x·S_x
pub fn build_full_hamiltonian(p: &NVParams) -> Result<ComplexMatrix3> {
    p.check()?;
    let (sx, sy, sz) = spin1_operators();
    let h = (sz * sz) * c(p.d)
        + (sx * sx - sy * sy) * c(p.ex)
        + (sx * sy + sy * sx) * c(p.ey)
        + sx * c(p.zeeman());
    Ok(h)
}

/// ‖H − H†‖ / ‖H‖ (Frobenius). Zero matrix counts as Hermitian.
pub fn hermiticity_defect(h: &ComplexMatrix3) -> f64 {
    let norm = h.norm();
    if norm == 0.0 {
        return 0.0;
    }
    (h - h.adjoint()).norm() / norm
}

/// Effective (D′, E_x′) after second-order elimination of γ_e·B_x.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectiveParams {
    pub d: f64,
    pub ex: f64,
}

/// D′ = D + (3/2)(γ_e B_x)²/(D + E_x), E_x′ = E_x + (1/2)(γ_e B_x)²/(D + E_x).
///
/// E_y does not enter; it is only handled by the full Hamiltonian.
pub fn effective_params(p: &NVParams) -> Result<EffectiveParams> {
    p.check()?;
    let denom = p.d + p.ex;
    if denom == 0.0 {
        return Err(Error::invalid("d + ex", "singular denominator"));
    }
    let shift = p.zeeman() * p.zeeman() / denom;
    Ok(EffectiveParams {
        d: p.d + 1.5 * shift,
        ex: p.ex + 0.5 * shift,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StateLabel {
    Zero,
    Bright,
    Dark,
}

impl StateLabel {
    pub const ALL: [StateLabel; 3] = [StateLabel::Zero, StateLabel::Bright, StateLabel::Dark];

    /// Reference vector: |0⟩, |B⟩ = (|1⟩+|−1⟩)/√2 or |D⟩ = (|1⟩−|−1⟩)/√2.
    pub fn reference(self) -> ComplexVector3 {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        match self {
            StateLabel::Zero => Vector3::new(ZERO, c(1.0), ZERO),
            StateLabel::Bright => Vector3::new(c(s), ZERO, c(s)),
            StateLabel::Dark => Vector3::new(c(s), ZERO, c(-s)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenBasis {
    /// Ascending eigen-energies (Hz).
    pub energies: [f64; 3],
    /// Unit eigenvectors, same order as `energies`.
    pub states: [ComplexVector3; 3],
    pub labels: [StateLabel; 3],
    /// Set when two energies lie within [`DEGENERACY_THRESHOLD`]; labels then
    /// rely on the overlap tie-break.
    pub degenerate: bool,
}

impl EigenBasis {
    pub fn index_of(&self, label: StateLabel) -> usize {
        self.labels
            .iter()
            .position(|l| *l == label)
            .expect("every label is assigned once")
    }

    pub fn energy(&self, label: StateLabel) -> f64 {
        self.energies[self.index_of(label)]
    }

    pub fn state(&self, label: StateLabel) -> &ComplexVector3 {
        &self.states[self.index_of(label)]
    }

    /// |⟨reference(label)|state(label)⟩|²
    pub fn overlap(&self, label: StateLabel) -> f64 {
        label.reference().dotc(self.state(label)).norm_sqr()
    }

    /// E_B − E_D for the labeled states (Hz).
    pub fn bright_dark_splitting(&self) -> f64 {
        self.energy(StateLabel::Bright) - self.energy(StateLabel::Dark)
    }
}

/// Rotate so the largest-magnitude component is real and positive.
fn fix_phase(v: &mut ComplexVector3) {
    let mut best = 0;
    for k in 1..3 {
        // strict comparison keeps the first index on ties
        if v[k].norm() > v[best].norm() * (1.0 + 1e-12) {
            best = k;
        }
    }
    let pivot = v[best];
    if pivot.norm() > 0.0 {
        let phase = pivot.conj() / pivot.norm();
        *v *= phase;
    }
    v[best] = c(v[best].re);
}

const PERMUTATIONS: [[usize; 3]; 6] = [
    [0, 1, 2],
    [0, 2, 1],
    [1, 0, 2],
    [1, 2, 0],
    [2, 0, 1],
    [2, 1, 0],
];

/// Hermitian eigendecomposition with |0⟩/|B⟩/|D⟩ labels chosen to maximize
/// the summed overlap with the reference vectors.
pub fn eigen_basis(h: &ComplexMatrix3) -> Result<EigenBasis> {
    if h.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NonFinite { name: "hamiltonian" });
    }
    if hermiticity_defect(h) > 1e-12 {
        return Err(Error::invalid("hamiltonian", "matrix is not Hermitian"));
    }

    let eig = SymmetricEigen::new(*h);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

    let energies = order.map(|k| eig.eigenvalues[k]);
    let states = order.map(|k| {
        let mut v: ComplexVector3 = eig.eigenvectors.column(k).into_owned();
        v /= c(v.norm());
        fix_phase(&mut v);
        v
    });

    let degenerate = energies.windows(2).any(|w| w[1] - w[0] < DEGENERACY_THRESHOLD);

    // overlaps[state][label]
    let overlaps: [[f64; 3]; 3] = states.map(|s| StateLabel::ALL.map(|l| l.reference().dotc(&s).norm_sqr()));

    // Permutations are enumerated with the energy-ordered assignment first,
    // so exact ties resolve toward energy order.
    let mut best = PERMUTATIONS[0];
    let mut best_score = f64::NEG_INFINITY;
    for perm in PERMUTATIONS {
        let score: f64 = (0..3).map(|s| overlaps[s][perm[s]]).sum();
        if score > best_score + 1e-12 {
            best_score = score;
            best = perm;
        }
    }
    let labels = best.map(|k| StateLabel::ALL[k]);

    Ok(EigenBasis {
        energies,
        states,
        labels,
        degenerate,
    })
}
