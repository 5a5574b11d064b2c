//! Truncated bosonic operators on a qubit ⊗ resonator tensor-product space.
//!
//! Matrices are stored densely; every space used here is at most a few tens
//! of levels. Subsystem order is fixed: qubit first, resonator second.

use std::ops::{Add, Mul, Sub};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Relative tolerance used for Hermiticity checks of Hamiltonians.
pub const HERMITIAN_RTOL: f64 = 1e-12;
/// Allowed deviation of a density-matrix trace from one.
pub const TRACE_TOL: f64 = 1e-9;
/// Smallest eigenvalue accepted when checking positivity.
pub const EIGEN_FLOOR: f64 = -1e-9;
/// Largest imaginary residue tolerated in the expectation of a Hermitian observable.
pub const IMAG_RESIDUE_TOL: f64 = 1e-10;

/// Ordered subsystem truncation levels.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HilbertSpec {
    dims: Vec<usize>,
}

impl HilbertSpec {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::InvalidDimension("empty subsystem list".into()));
        }
        if let Some(d) = dims.iter().find(|&&d| d < 2) {
            return Err(Error::InvalidDimension(format!(
                "subsystem dimension {d} < 2"
            )));
        }
        Ok(Self { dims })
    }

    pub fn single(dim: usize) -> Result<Self> {
        Self::new(vec![dim])
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn total(&self) -> usize {
        self.dims.iter().product()
    }

    fn concat(&self, other: &HilbertSpec) -> HilbertSpec {
        let mut dims = self.dims.clone();
        dims.extend_from_slice(&other.dims);
        HilbertSpec { dims }
    }
}

/// A square complex matrix tagged with the space it acts on.
#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    space: HilbertSpec,
    matrix: DMatrix<C64>,
}

impl Operator {
    pub fn from_matrix(space: HilbertSpec, matrix: DMatrix<C64>) -> Result<Self> {
        let n = space.total();
        if matrix.nrows() != n || matrix.ncols() != n {
            return Err(Error::InvalidDimension(format!(
                "matrix is {}x{}, space has total dimension {n}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        Ok(Self { space, matrix })
    }

    pub fn zeros(space: &HilbertSpec) -> Self {
        let n = space.total();
        Self {
            space: space.clone(),
            matrix: DMatrix::zeros(n, n),
        }
    }

    pub fn identity(space: &HilbertSpec) -> Self {
        let n = space.total();
        Self {
            space: space.clone(),
            matrix: DMatrix::identity(n, n),
        }
    }

    /// Diagonal real operator on a single subsystem.
    pub fn diagonal(values: &[f64]) -> Result<Self> {
        let space = HilbertSpec::single(values.len())?;
        let matrix = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            values.len(),
            values.iter().map(|&v| C64::new(v, 0.0)),
        ));
        Ok(Self { space, matrix })
    }

    /// Projector |psi><psi| for a (not necessarily normalized) state vector.
    pub fn projector(space: &HilbertSpec, psi: &[C64]) -> Result<Self> {
        let n = space.total();
        if psi.len() != n {
            return Err(Error::InvalidDimension(format!(
                "state has {} amplitudes, space has {n}",
                psi.len()
            )));
        }
        let norm: f64 = psi.iter().map(|a| a.norm_sqr()).sum();
        if norm == 0.0 {
            return Err(Error::InvalidState("zero state vector".into()));
        }
        let matrix = DMatrix::from_fn(n, n, |i, j| psi[i] * psi[j].conj() / norm);
        Ok(Self {
            space: space.clone(),
            matrix,
        })
    }

    /// |k><k| in the computational basis of `space`.
    pub fn basis_projector(space: &HilbertSpec, k: usize) -> Result<Self> {
        let n = space.total();
        if k >= n {
            return Err(Error::InvalidDimension(format!(
                "basis index {k} outside dimension {n}"
            )));
        }
        let mut op = Self::zeros(space);
        op.matrix[(k, k)] = C64::new(1.0, 0.0);
        Ok(op)
    }

    pub fn space(&self) -> &HilbertSpec {
        &self.space
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn dagger(&self) -> Self {
        Self {
            space: self.space.clone(),
            matrix: self.matrix.adjoint(),
        }
    }

    pub fn scale(&self, factor: C64) -> Self {
        Self {
            space: self.space.clone(),
            matrix: &self.matrix * factor,
        }
    }

    pub fn scale_real(&self, factor: f64) -> Self {
        self.scale(C64::new(factor, 0.0))
    }

    pub fn trace(&self) -> C64 {
        self.matrix.trace()
    }

    fn check_space(&self, other: &Operator) -> Result<()> {
        if self.space != other.space {
            return Err(Error::SpaceMismatch {
                left: self.space.dims.clone(),
                right: other.space.dims.clone(),
            });
        }
        Ok(())
    }

    pub fn try_add(&self, other: &Operator) -> Result<Operator> {
        self.check_space(other)?;
        Ok(Self {
            space: self.space.clone(),
            matrix: &self.matrix + &other.matrix,
        })
    }

    pub fn try_sub(&self, other: &Operator) -> Result<Operator> {
        self.check_space(other)?;
        Ok(Self {
            space: self.space.clone(),
            matrix: &self.matrix - &other.matrix,
        })
    }

    pub fn try_mul(&self, other: &Operator) -> Result<Operator> {
        self.check_space(other)?;
        Ok(Self {
            space: self.space.clone(),
            matrix: &self.matrix * &other.matrix,
        })
    }

    pub fn commutator(&self, other: &Operator) -> Result<Operator> {
        self.try_mul(other)?.try_sub(&other.try_mul(self)?)
    }

    /// Largest entrywise deviation from Hermiticity.
    pub fn hermiticity_error(&self) -> f64 {
        let n = self.dim();
        let mut worst = 0.0_f64;
        for i in 0..n {
            for j in i..n {
                let d = (self.matrix[(i, j)] - self.matrix[(j, i)].conj()).norm();
                worst = worst.max(d);
            }
        }
        worst
    }

    pub fn max_abs(&self) -> f64 {
        self.matrix.iter().fold(0.0_f64, |m, z| m.max(z.norm()))
    }

    /// Hermitian to within `HERMITIAN_RTOL` relative to the largest entry.
    pub fn is_hermitian(&self) -> bool {
        let scale = self.max_abs().max(f64::MIN_POSITIVE);
        self.hermiticity_error() <= HERMITIAN_RTOL * scale
    }

    /// Real eigenvalues of a Hermitian operator, ascending.
    pub fn eigenvalues_hermitian(&self) -> Result<Vec<f64>> {
        Ok(self.eigen_hermitian()?.0)
    }

    /// Ascending eigenvalues with eigenvectors stored as columns.
    pub fn eigen_hermitian(&self) -> Result<(Vec<f64>, DMatrix<C64>)> {
        let scale = self.max_abs().max(f64::MIN_POSITIVE);
        if self.hermiticity_error() > 1e-9 * scale {
            return Err(Error::Domain("operator is not Hermitian".into()));
        }
        // Symmetrize to drop roundoff before the Hermitian eigensolver.
        let sym = (&self.matrix + self.matrix.adjoint()) * C64::new(0.5, 0.0);
        let eig = sym.symmetric_eigen();
        let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
        let n = self.dim();
        let vectors = DMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
        Ok((values, vectors))
    }

    /// Checks Hermiticity, unit trace and the eigenvalue floor.
    pub fn validate_density(&self) -> Result<()> {
        let herm = self.hermiticity_error();
        if herm > 1e-10 {
            return Err(Error::InvalidState(format!(
                "not Hermitian (deviation {herm:.3e})"
            )));
        }
        let tr = self.trace();
        if (tr.re - 1.0).abs() >= TRACE_TOL || tr.im.abs() >= TRACE_TOL {
            return Err(Error::InvalidState(format!("trace {tr} differs from 1")));
        }
        let lowest = self
            .eigenvalues_hermitian()?
            .first()
            .copied()
            .unwrap_or(0.0);
        if lowest < EIGEN_FLOOR {
            return Err(Error::InvalidState(format!(
                "negative eigenvalue {lowest:.3e}"
            )));
        }
        Ok(())
    }
}

impl Add for &Operator {
    type Output = Operator;

    /// Panics on mismatched spaces; use [`Operator::try_add`] to handle that case.
    fn add(self, rhs: &Operator) -> Operator {
        self.try_add(rhs).expect("operator spaces differ")
    }
}

impl Sub for &Operator {
    type Output = Operator;

    fn sub(self, rhs: &Operator) -> Operator {
        self.try_sub(rhs).expect("operator spaces differ")
    }
}

impl Mul for &Operator {
    type Output = Operator;

    fn mul(self, rhs: &Operator) -> Operator {
        self.try_mul(rhs).expect("operator spaces differ")
    }
}

/// Truncated annihilation operator with `M[n-1, n] = sqrt(n)`.
pub fn annihilation_op(dim: usize) -> Result<Operator> {
    let space = HilbertSpec::single(dim)?;
    let mut matrix = DMatrix::zeros(dim, dim);
    for n in 1..dim {
        matrix[(n - 1, n)] = C64::new((n as f64).sqrt(), 0.0);
    }
    Ok(Operator { space, matrix })
}

pub fn creation_op(dim: usize) -> Result<Operator> {
    Ok(annihilation_op(dim)?.dagger())
}

pub fn number_op(dim: usize) -> Result<Operator> {
    let values: Vec<f64> = (0..dim).map(|n| n as f64).collect();
    if dim < 2 {
        return Err(Error::InvalidDimension(format!("dimension {dim} < 2")));
    }
    Operator::diagonal(&values)
}

pub fn identity_op(dim: usize) -> Result<Operator> {
    Ok(Operator::identity(&HilbertSpec::single(dim)?))
}

/// Kronecker product; the result lives on the concatenated space.
pub fn tensor_product(a: &Operator, b: &Operator) -> Operator {
    Operator {
        space: a.space.concat(&b.space),
        matrix: a.matrix.kronecker(&b.matrix),
    }
}

/// tr(rho * obs).
pub fn expectation(rho: &Operator, obs: &Operator) -> Result<C64> {
    rho.check_space(obs)?;
    let n = rho.dim();
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..n {
        for k in 0..n {
            acc += rho.matrix[(i, k)] * obs.matrix[(k, i)];
        }
    }
    Ok(acc)
}

/// Real expectation of a Hermitian observable; rejects a large imaginary residue.
pub fn expectation_real(rho: &Operator, obs: &Operator) -> Result<f64> {
    let value = expectation(rho, obs)?;
    if value.im.abs() >= IMAG_RESIDUE_TOL {
        return Err(Error::Domain(format!(
            "imaginary residue {:.3e} for a Hermitian observable",
            value.im
        )));
    }
    Ok(value.re)
}
