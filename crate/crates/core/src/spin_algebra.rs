//! Spin-1/2 operators, tensor embeddings and density matrices on the
//! electron–nuclear product space.
//!
//! Subsystems are always ordered (electron 1, electron 2, nucleus 1, …,
//! nucleus N); a layout lists their dimensions in that order.

use std::ops::Deref;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::numerics::NumericalPolicy;
use crate::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);
const HALF: C64 = C64::new(0.5, 0.0);
const I_HALF: C64 = C64::new(0.0, 0.5);

/// A dense complex square operator.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorMatrix(CMatrix);

impl OperatorMatrix {
    pub fn new(matrix: CMatrix) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::config(format!(
                "operator must be square, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        Ok(Self(matrix))
    }

    pub fn identity(dim: usize) -> Self {
        Self(CMatrix::identity(dim, dim))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(CMatrix::zeros(dim, dim))
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        Self(CMatrix::from_fn(n, n, |i, j| if i == j { C64::new(diag[i], 0.0) } else { ZERO }))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }

    pub fn adjoint(&self) -> Self {
        Self(self.0.adjoint())
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self(&self.0 * C64::new(factor, 0.0))
    }

    pub fn add(&self, other: &Self) -> Self {
        Self(&self.0 + &other.0)
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self(&self.0 - &other.0)
    }

    pub fn mul(&self, other: &Self) -> Self {
        Self(&self.0 * &other.0)
    }

    /// `[self, other] = self·other − other·self`.
    pub fn commutator(&self, other: &Self) -> Self {
        Self(&self.0 * &other.0 - &other.0 * &self.0)
    }

    pub fn trace(&self) -> C64 {
        self.0.trace()
    }

    /// Largest entrywise modulus.
    pub fn max_abs(&self) -> f64 {
        max_abs(&self.0)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        max_abs(&(&self.0 - &other.0))
    }

    /// Max-abs of `self − self^†`.
    pub fn hermiticity_error(&self) -> f64 {
        max_abs(&(&self.0 - self.0.adjoint()))
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_error() <= tol
    }

    /// Eigenvalues in ascending order, assuming the operator is Hermitian.
    pub fn hermitian_eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = SymmetricEigen::new(self.0.clone()).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }
}

impl Deref for OperatorMatrix {
    type Target = CMatrix;

    fn deref(&self) -> &CMatrix {
        &self.0
    }
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0_f64, |acc, z| acc.max(z.norm()))
}

/// Averages a matrix with its adjoint in place.
pub fn hermitize(m: &mut CMatrix) {
    let n = m.nrows();
    for i in 0..n {
        m[(i, i)].im = 0.0;
        for j in (i + 1)..n {
            let avg = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
            m[(i, j)] = avg;
            m[(j, i)] = avg.conj();
        }
    }
}

/// `Tr(a·b)` without forming the product.
pub fn trace_of_product(a: &CMatrix, b: &CMatrix) -> C64 {
    let n = a.nrows();
    let mut acc = ZERO;
    for i in 0..n {
        for k in 0..n {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

/// Spin density matrix: Hermitian, positive semidefinite, trace in (0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix(CMatrix);

impl DensityMatrix {
    /// Validates Hermiticity and trace; positivity is checked separately
    /// because it needs an eigendecomposition.
    pub fn new(matrix: CMatrix) -> Result<Self> {
        let policy = NumericalPolicy::DEFAULT;
        if !matrix.is_square() {
            return Err(Error::config("density matrix must be square"));
        }
        let herm = max_abs(&(&matrix - matrix.adjoint()));
        if herm > policy.hermiticity {
            return Err(Error::NumericalIntegrity(format!(
                "density matrix is not Hermitian (deviation {herm:e})"
            )));
        }
        let tr = matrix.trace().re;
        if !(tr > 0.0 && tr <= 1.0 + policy.trace_excess) {
            return Err(Error::NumericalIntegrity(format!("density matrix trace {tr} outside (0, 1]")));
        }
        Ok(Self(matrix))
    }

    /// Wraps a matrix the caller already knows to be a valid state.
    pub(crate) fn from_matrix_unchecked(matrix: CMatrix) -> Self {
        Self(matrix)
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self(CMatrix::identity(dim, dim) * C64::new(1.0 / dim as f64, 0.0))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace().re
    }

    /// The same state rescaled to unit trace.
    pub fn normalized(&self) -> Result<Self> {
        let tr = self.trace();
        if tr <= 0.0 {
            return Err(Error::usage("cannot normalize a density matrix with zero trace"));
        }
        Ok(Self(&self.0 * C64::new(1.0 / tr, 0.0)))
    }

    pub fn min_eigenvalue(&self) -> f64 {
        SymmetricEigen::new(self.0.clone())
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn hermiticity_error(&self) -> f64 {
        max_abs(&(&self.0 - self.0.adjoint()))
    }
}

/// Spin-1/2 components (x, y, z) with ħ = 1.
pub fn spin_half_operators() -> (OperatorMatrix, OperatorMatrix, OperatorMatrix) {
    let sx = CMatrix::from_row_slice(2, 2, &[ZERO, HALF, HALF, ZERO]);
    let sy = CMatrix::from_row_slice(2, 2, &[ZERO, -I_HALF, I_HALF, ZERO]);
    let sz = CMatrix::from_row_slice(2, 2, &[HALF, ZERO, ZERO, -HALF]);
    (OperatorMatrix(sx), OperatorMatrix(sy), OperatorMatrix(sz))
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

/// Places `op` on subsystem `slot` of a product space, identity elsewhere.
pub fn embed(op: &OperatorMatrix, slot: usize, layout: &[usize]) -> Result<OperatorMatrix> {
    let Some(&slot_dim) = layout.get(slot) else {
        return Err(Error::config(format!("slot {slot} outside layout of {} subsystems", layout.len())));
    };
    if op.dim() != slot_dim {
        return Err(Error::config(format!(
            "operator of dim {} cannot act on slot {slot} of dim {slot_dim}",
            op.dim()
        )));
    }
    let mut out = CMatrix::from_element(1, 1, ONE);
    for (i, &d) in layout.iter().enumerate() {
        if d == 0 {
            return Err(Error::config("layout contains a zero-dimensional subsystem"));
        }
        out = if i == slot {
            kron(&out, op.matrix())
        } else {
            kron(&out, &CMatrix::identity(d, d))
        };
    }
    Ok(OperatorMatrix(out))
}

/// Spin vector (x, y, z) of the spin-1/2 subsystem at `slot`.
pub fn spin_vector(slot: usize, layout: &[usize]) -> Result<[OperatorMatrix; 3]> {
    let (sx, sy, sz) = spin_half_operators();
    Ok([embed(&sx, slot, layout)?, embed(&sy, slot, layout)?, embed(&sz, slot, layout)?])
}

/// `a · b` for two spin vectors.
pub fn dot(a: &[OperatorMatrix; 3], b: &[OperatorMatrix; 3]) -> OperatorMatrix {
    OperatorMatrix(a[0].matrix() * b[0].matrix() + a[1].matrix() * b[1].matrix() + a[2].matrix() * b[2].matrix())
}

/// Singlet projector `Q_S = 1/4 − s₁·s₂` of the two electrons in slots 0 and 1.
pub fn singlet_projector(layout: &[usize]) -> Result<OperatorMatrix> {
    if layout.len() < 2 || layout[0] != 2 || layout[1] != 2 {
        return Err(Error::config("layout must start with two spin-1/2 electrons"));
    }
    let dim: usize = layout.iter().product();
    let s1 = spin_vector(0, layout)?;
    let s2 = spin_vector(1, layout)?;
    Ok(OperatorMatrix::identity(dim).scaled(0.25).sub(&dot(&s1, &s2)))
}

/// Triplet projector `Q_T = 1 − Q_S`.
pub fn triplet_projector(singlet: &OperatorMatrix) -> OperatorMatrix {
    OperatorMatrix::identity(singlet.dim()).sub(singlet)
}

/// `Tr(ρ·op)`; the imaginary residue must stay below the policy threshold.
pub fn expectation(rho: &DensityMatrix, op: &OperatorMatrix) -> Result<f64> {
    expectation_raw(rho.matrix(), op.matrix())
}

pub(crate) fn expectation_raw(rho: &CMatrix, op: &CMatrix) -> Result<f64> {
    if rho.nrows() != op.nrows() {
        return Err(Error::config(format!(
            "state of dim {} and operator of dim {} do not match",
            rho.nrows(),
            op.nrows()
        )));
    }
    let tr = trace_of_product(rho, op);
    if tr.im.abs() > NumericalPolicy::DEFAULT.expectation_imag {
        return Err(Error::NumericalIntegrity(format!(
            "expectation value has imaginary residue {:e}",
            tr.im
        )));
    }
    Ok(tr.re)
}
