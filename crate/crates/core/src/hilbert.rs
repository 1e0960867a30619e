//! Finite-dimensional state vectors and Hermitian operators.
//!
//! Tensor products use a row-major convention: the leftmost factor is the
//! most significant index, so `|a⟩⊗|b⟩` has amplitude `a[i]·b[j]` at
//! position `i·dim(b) + j`.

use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Normalization tolerance for state vectors.
pub const NORM_TOL: f64 = 1e-12;
/// Maximum entrywise deviation from Hermiticity accepted on construction.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Eigen-reconstruction and degeneracy-grouping tolerance.
pub const EIGEN_TOL: f64 = 1e-10;
/// Imaginary residues of expectation values at or above this are failures.
pub const RESIDUE_TOL: f64 = 1e-10;
/// Total Hilbert-space dimension cap (system ⊗ pointer included).
pub const MAX_DIM: usize = 4096;

const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

pub(crate) fn check_dim(dim: usize) -> Result<()> {
    if dim == 0 {
        return Err(Error::Empty);
    }
    if dim > MAX_DIM {
        return Err(Error::DimensionCap { dim, cap: MAX_DIM });
    }
    Ok(())
}

fn same_dim(left: usize, right: usize) -> Result<()> {
    if left == right {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { left, right })
    }
}

/// A normalized pure state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "ArrayJson", try_from = "ArrayJson")]
pub struct StateVector {
    amplitudes: Vec<C64>,
}

impl StateVector {
    /// Wraps amplitudes that are already normalized within [`NORM_TOL`].
    pub fn new(amplitudes: Vec<C64>) -> Result<Self> {
        check_dim(amplitudes.len())?;
        let norm_sqr: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum();
        if !norm_sqr.is_finite() || (norm_sqr - 1.0).abs() > NORM_TOL {
            return Err(Error::NotNormalized { norm_sqr });
        }
        Ok(Self { amplitudes })
    }

    /// Normalizes arbitrary non-zero amplitudes.
    pub fn normalized(mut amplitudes: Vec<C64>) -> Result<Self> {
        check_dim(amplitudes.len())?;
        let norm_sqr: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum();
        if !norm_sqr.is_finite() || norm_sqr < 1e-300 {
            return Err(Error::NotNormalized { norm_sqr });
        }
        let inv = 1.0 / norm_sqr.sqrt();
        for a in &mut amplitudes {
            *a *= inv;
        }
        Ok(Self { amplitudes })
    }

    pub fn from_real(amplitudes: &[f64]) -> Result<Self> {
        Self::normalized(amplitudes.iter().map(|&x| C64::new(x, 0.0)).collect())
    }

    /// Computational basis state `|index⟩`.
    pub fn basis(dim: usize, index: usize) -> Result<Self> {
        check_dim(dim)?;
        if index >= dim {
            return Err(Error::InvalidParameter(format!(
                "basis index {index} out of range for dim {dim}"
            )));
        }
        let mut amplitudes = vec![C64::new(0.0, 0.0); dim];
        amplitudes[index] = C64::new(1.0, 0.0);
        Ok(Self { amplitudes })
    }

    pub fn zero() -> Self {
        Self::qubit(1.0, 0.0)
    }

    pub fn one() -> Self {
        Self::qubit(0.0, 1.0)
    }

    pub fn plus() -> Self {
        Self::qubit(FRAC_1_SQRT_2, FRAC_1_SQRT_2)
    }

    pub fn minus() -> Self {
        Self::qubit(FRAC_1_SQRT_2, -FRAC_1_SQRT_2)
    }

    /// `cos θ |0⟩ + sin θ |1⟩`.
    pub fn real_qubit(theta: f64) -> Self {
        Self::qubit(theta.cos(), theta.sin())
    }

    fn qubit(a: f64, b: f64) -> Self {
        Self {
            amplitudes: vec![C64::new(a, 0.0), C64::new(b, 0.0)],
        }
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<C64> {
        self.amplitudes
    }

    /// Multiplies by a global phase `e^{iφ}`.
    pub fn with_phase(&self, phase: f64) -> Self {
        let z = C64::from_polar(1.0, phase);
        Self {
            amplitudes: self.amplitudes.iter().map(|a| a * z).collect(),
        }
    }

    /// `|⟨self|other⟩| = 1` within [`EIGEN_TOL`]; never compares componentwise.
    pub fn equal_up_to_phase(&self, other: &StateVector) -> bool {
        match inner_product(self, other) {
            Ok(z) => (z.norm() - 1.0).abs() < EIGEN_TOL,
            Err(_) => false,
        }
    }

    /// `|⟨self|other⟩|²`.
    pub fn fidelity(&self, other: &StateVector) -> Result<f64> {
        Ok(inner_product(self, other)?.norm_sqr())
    }
}

impl fmt::Display for StateVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, a) in self.amplitudes.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{:.6}{:+.6}i", a.re, a.im)?;
        }
        write!(f, "]")
    }
}

/// `⟨a|b⟩`, conjugate-linear in `a`.
pub fn inner_product(a: &StateVector, b: &StateVector) -> Result<C64> {
    same_dim(a.dim(), b.dim())?;
    Ok(dot(&a.amplitudes, &b.amplitudes))
}

pub(crate) fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// `|a⟩⊗|b⟩` with the leftmost factor most significant.
pub fn tensor(a: &StateVector, b: &StateVector) -> Result<StateVector> {
    let dim = a.dim() * b.dim();
    check_dim(dim)?;
    let mut amplitudes = Vec::with_capacity(dim);
    for x in &a.amplitudes {
        for y in &b.amplitudes {
            amplitudes.push(x * y);
        }
    }
    Ok(StateVector { amplitudes })
}

/// A Hermitian matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "ArrayJson", try_from = "ArrayJson")]
pub struct HermitianOperator {
    matrix: DMatrix<C64>,
}

impl HermitianOperator {
    /// Accepts a matrix within [`HERMITIAN_TOL`] of Hermitian and stores its
    /// exact Hermitian part.
    pub fn new(matrix: DMatrix<C64>) -> Result<Self> {
        let (rows, cols) = matrix.shape();
        same_dim(rows, cols)?;
        check_dim(rows)?;
        let deviation = hermitian_deviation(&matrix);
        if !deviation.is_finite() || deviation > HERMITIAN_TOL {
            return Err(Error::NotHermitian { deviation });
        }
        let matrix = (&matrix + matrix.adjoint()).scale(0.5);
        Ok(Self { matrix })
    }

    pub fn from_rows(rows: &[Vec<C64>]) -> Result<Self> {
        let n = rows.len();
        for r in rows {
            same_dim(r.len(), n)?;
        }
        Self::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn from_real_diagonal(values: &[f64]) -> Result<Self> {
        let n = values.len();
        Self::new(DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                C64::new(values[i], 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        }))
    }

    pub fn identity(dim: usize) -> Result<Self> {
        check_dim(dim)?;
        Ok(Self {
            matrix: DMatrix::identity(dim, dim),
        })
    }

    pub fn pauli_x() -> Self {
        Self::qubit([[0.0, 0.0], [1.0, 0.0], [1.0, 0.0], [0.0, 0.0]])
    }

    pub fn pauli_y() -> Self {
        Self::qubit([[0.0, 0.0], [0.0, -1.0], [0.0, 1.0], [0.0, 0.0]])
    }

    /// `|0⟩⟨0| − |1⟩⟨1|`.
    pub fn pauli_z() -> Self {
        Self::qubit([[1.0, 0.0], [0.0, 0.0], [0.0, 0.0], [-1.0, 0.0]])
    }

    fn qubit(entries: [[f64; 2]; 4]) -> Self {
        let m = DMatrix::from_row_slice(
            2,
            2,
            &entries.map(|[re, im]| C64::new(re, im)),
        );
        Self { matrix: m }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    /// `A|ψ⟩` as raw amplitudes (not renormalized).
    pub fn apply(&self, psi: &StateVector) -> Result<Vec<C64>> {
        same_dim(self.dim(), psi.dim())?;
        Ok(apply_matrix(&self.matrix, psi.amplitudes()))
    }

    /// Real linear combination `α·self + β·other`.
    pub fn combine(&self, alpha: f64, other: &HermitianOperator, beta: f64) -> Result<Self> {
        same_dim(self.dim(), other.dim())?;
        Ok(Self {
            matrix: self.matrix.scale(alpha) + other.matrix.scale(beta),
        })
    }

    /// `self ⊗ other` in the row-major tensor convention.
    pub fn kron(&self, other: &HermitianOperator) -> Result<Self> {
        check_dim(self.dim() * other.dim())?;
        Ok(Self {
            matrix: self.matrix.kronecker(&other.matrix),
        })
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }
}

pub(crate) fn apply_matrix(m: &DMatrix<C64>, v: &[C64]) -> Vec<C64> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)] * v[j]).sum())
        .collect()
}

pub(crate) fn hermitian_deviation(m: &DMatrix<C64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            let d = (m[(i, j)] - m[(j, i)].conj()).norm();
            if d.is_nan() {
                return f64::NAN;
            }
            worst = worst.max(d);
        }
    }
    worst
}

/// `⟨ψ|A|ψ⟩`. The imaginary part is checked and discarded.
pub fn expectation(op: &HermitianOperator, psi: &StateVector) -> Result<f64> {
    let a_psi = op.apply(psi)?;
    let z = dot(psi.amplitudes(), &a_psi);
    if z.im.abs() >= RESIDUE_TOL {
        return Err(Error::ImaginaryResidue { residue: z.im.abs() });
    }
    Ok(z.re)
}

/// `|ψ⟩⟨ψ|`.
pub fn projector(psi: &StateVector) -> HermitianOperator {
    let v = psi.amplitudes();
    let n = v.len();
    HermitianOperator {
        matrix: DMatrix::from_fn(n, n, |i, j| v[i] * v[j].conj()),
    }
}

/// Spectral decomposition with ascending real eigenvalues.
#[derive(Clone, Debug)]
pub struct EigenDecomposition {
    eigenvalues: Vec<f64>,
    eigenvectors: Vec<StateVector>,
}

/// Indices of eigenvectors sharing one eigenvalue (within [`EIGEN_TOL`]).
#[derive(Clone, Debug, PartialEq)]
pub struct Eigenspace {
    pub eigenvalue: f64,
    pub indices: Vec<usize>,
}

impl EigenDecomposition {
    /// Builds a measurement basis from explicit orthonormal vectors and
    /// their outcome values. Values are sorted ascending together with
    /// their vectors.
    pub fn from_basis(eigenvalues: Vec<f64>, eigenvectors: Vec<StateVector>) -> Result<Self> {
        same_dim(eigenvalues.len(), eigenvectors.len())?;
        let dim = eigenvectors.first().ok_or(Error::Empty)?.dim();
        same_dim(eigenvectors.len(), dim)?;
        for v in &eigenvectors {
            same_dim(v.dim(), dim)?;
        }
        let deviation = orthonormality_deviation(&eigenvectors);
        if deviation >= EIGEN_TOL {
            return Err(Error::NotOrthonormal { deviation });
        }
        let mut pairs: Vec<_> = eigenvalues.into_iter().zip(eigenvectors).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (eigenvalues, eigenvectors) = pairs.into_iter().unzip();
        Ok(Self {
            eigenvalues,
            eigenvectors,
        })
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &[StateVector] {
        &self.eigenvectors
    }

    /// Groups consecutive eigenvalues closer than [`EIGEN_TOL`] to the
    /// first value of their group.
    pub fn eigenspaces(&self) -> Vec<Eigenspace> {
        let mut spaces: Vec<Eigenspace> = Vec::new();
        for (i, &value) in self.eigenvalues.iter().enumerate() {
            match spaces.last_mut() {
                Some(space) if (value - space.eigenvalue).abs() < EIGEN_TOL => {
                    space.indices.push(i)
                }
                _ => spaces.push(Eigenspace {
                    eigenvalue: value,
                    indices: vec![i],
                }),
            }
        }
        spaces
    }

    /// `Σ a·|a⟩⟨a|`.
    pub fn reconstruct(&self) -> DMatrix<C64> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        for (value, v) in self.eigenvalues.iter().zip(&self.eigenvectors) {
            let p = projector(v);
            m += p.matrix.scale(*value);
        }
        m
    }

    pub fn max_abs_eigenvalue(&self) -> f64 {
        self.eigenvalues.iter().fold(0.0, |m, a| m.max(a.abs()))
    }
}

pub(crate) fn orthonormality_deviation(vectors: &[StateVector]) -> f64 {
    let mut worst = 0.0f64;
    for (i, a) in vectors.iter().enumerate() {
        for (j, b) in vectors.iter().enumerate().skip(i) {
            let target = if i == j { 1.0 } else { 0.0 };
            let z = dot(a.amplitudes(), b.amplitudes());
            worst = worst.max((z - C64::new(target, 0.0)).norm());
        }
    }
    worst
}

pub fn eigendecompose(op: &HermitianOperator) -> Result<EigenDecomposition> {
    let n = op.dim();
    let eig = op
        .matrix
        .clone()
        .try_symmetric_eigen(f64::EPSILON, 10_000)
        .ok_or_else(|| Error::EigenNonConvergence {
            matrix: format!("{}", op.matrix),
        })?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let mut eigenvalues = Vec::with_capacity(n);
    let mut eigenvectors = Vec::with_capacity(n);
    for k in order {
        eigenvalues.push(eig.eigenvalues[k]);
        let column: Vec<C64> = eig.eigenvectors.column(k).iter().copied().collect();
        eigenvectors.push(StateVector::normalized(column)?);
    }
    let decomposition = EigenDecomposition {
        eigenvalues,
        eigenvectors,
    };
    let residual = (decomposition.reconstruct() - &op.matrix)
        .iter()
        .fold(0.0f64, |m, z| m.max(z.norm()));
    let scale = op.matrix.iter().fold(1.0f64, |m, z| m.max(z.norm()));
    if !(residual <= EIGEN_TOL * scale)
        || orthonormality_deviation(&decomposition.eigenvectors) >= EIGEN_TOL
    {
        return Err(Error::EigenNonConvergence {
            matrix: format!("{}", op.matrix),
        });
    }
    Ok(decomposition)
}

/// JSON form shared by states and operators: `{"dim": n, "re": [...], "im": [...]}`.
/// Operators are stored row-major with `n²` entries.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ArrayJson {
    pub dim: usize,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl From<StateVector> for ArrayJson {
    fn from(s: StateVector) -> Self {
        Self {
            dim: s.dim(),
            re: s.amplitudes.iter().map(|a| a.re).collect(),
            im: s.amplitudes.iter().map(|a| a.im).collect(),
        }
    }
}

impl TryFrom<ArrayJson> for StateVector {
    type Error = Error;

    fn try_from(j: ArrayJson) -> Result<Self> {
        same_dim(j.re.len(), j.dim)?;
        same_dim(j.im.len(), j.dim)?;
        StateVector::new(j.re.iter().zip(&j.im).map(|(&r, &i)| C64::new(r, i)).collect())
    }
}

impl From<HermitianOperator> for ArrayJson {
    fn from(op: HermitianOperator) -> Self {
        let n = op.dim();
        let mut re = Vec::with_capacity(n * n);
        let mut im = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                re.push(op.matrix[(i, j)].re);
                im.push(op.matrix[(i, j)].im);
            }
        }
        Self { dim: n, re, im }
    }
}

impl TryFrom<ArrayJson> for HermitianOperator {
    type Error = Error;

    fn try_from(j: ArrayJson) -> Result<Self> {
        let n = j.dim;
        same_dim(j.re.len(), n * n)?;
        same_dim(j.im.len(), n * n)?;
        HermitianOperator::new(DMatrix::from_fn(n, n, |r, c| {
            C64::new(j.re[r * n + c], j.im[r * n + c])
        }))
    }
}

/// Random states, observables and unitaries for sweeps and tests.
pub mod random {
    use nalgebra::DMatrix;
    use rand::Rng;
    use rand_distr::StandardNormal;

    use super::{HermitianOperator, StateVector, C64};

    fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> C64 {
        C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    }

    /// Haar-distributed pure state.
    pub fn haar_state<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> StateVector {
        loop {
            let v: Vec<C64> = (0..dim).map(|_| gaussian(rng)).collect();
            if let Ok(s) = StateVector::normalized(v) {
                return s;
            }
        }
    }

    /// Gaussian unitary ensemble sample, entries of order one.
    pub fn gue<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> HermitianOperator {
        let g = DMatrix::from_fn(dim, dim, |_, _| gaussian(rng));
        let h = (&g + g.adjoint()).scale(0.5);
        HermitianOperator::new(h).expect("symmetrized matrix is Hermitian")
    }

    /// Observable `U diag(values) U†` with Haar-random `U`.
    pub fn observable_with_spectrum<R: Rng + ?Sized>(
        values: &[f64],
        rng: &mut R,
    ) -> HermitianOperator {
        let n = values.len();
        let u = haar_unitary(n, rng);
        let d = DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                C64::new(values[i], 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        });
        let m = &u * d * u.adjoint();
        let m = (&m + m.adjoint()).scale(0.5);
        HermitianOperator::new(m).expect("symmetrized matrix is Hermitian")
    }

    /// Haar-distributed unitary via QR of a Ginibre matrix with the
    /// diagonal phases of `R` divided out.
    pub fn haar_unitary<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DMatrix<C64> {
        let z = DMatrix::from_fn(dim, dim, |_, _| gaussian(rng));
        let qr = z.qr();
        let mut q = qr.q();
        let r = qr.r();
        for j in 0..dim {
            let d = r[(j, j)];
            let phase = if d.norm() > 0.0 { d / d.norm() } else { C64::new(1.0, 0.0) };
            for i in 0..dim {
                q[(i, j)] *= phase;
            }
        }
        q
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() < tol
    }

    #[test]
    fn inner_product_examples() {
        let z = inner_product(&StateVector::zero(), &StateVector::plus()).unwrap();
        assert!(close(z.re, FRAC_1_SQRT_2, 1e-15) && z.im == 0.0);
        let z = inner_product(&StateVector::zero(), &StateVector::zero()).unwrap();
        assert!(close(z.re, 1.0, 1e-15));
        let z = inner_product(&StateVector::zero(), &StateVector::one()).unwrap();
        assert_eq!(z.norm(), 0.0);
    }

    #[test]
    fn inner_product_rejects_mismatch() {
        let a = StateVector::zero();
        let b = StateVector::basis(3, 0).unwrap();
        assert!(matches!(
            inner_product(&a, &b),
            Err(Error::DimensionMismatch { left: 2, right: 3 })
        ));
    }

    #[test]
    fn tensor_examples() {
        let zz = tensor(&StateVector::zero(), &StateVector::zero()).unwrap();
        assert_eq!(zz.dim(), 4);
        let expected = [1.0, 0.0, 0.0, 0.0];
        for (a, e) in zz.amplitudes().iter().zip(expected) {
            assert_eq!(*a, C64::new(e, 0.0));
        }
        let a = tensor(&StateVector::zero(), &StateVector::plus()).unwrap();
        let b = tensor(&StateVector::plus(), &StateVector::zero()).unwrap();
        assert!(close(inner_product(&a, &b).unwrap().re, 0.5, 1e-15));
        let pp = tensor(&StateVector::plus(), &StateVector::plus()).unwrap();
        let n: f64 = pp.amplitudes().iter().map(|a| a.norm_sqr()).sum();
        assert!(close(n, 1.0, 1e-15));
    }

    #[test]
    fn tensor_respects_dimension_cap() {
        let big = StateVector::basis(128, 0).unwrap();
        assert!(matches!(tensor(&big, &big), Err(Error::DimensionCap { .. })));
    }

    #[test]
    fn expectation_examples() {
        let z = HermitianOperator::pauli_z();
        assert_eq!(expectation(&z, &StateVector::zero()).unwrap(), 1.0);
        assert!(close(expectation(&z, &StateVector::plus()).unwrap(), 0.0, 1e-15));
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let psi = random::haar_state(5, &mut rng);
        assert!(close(expectation(&projector(&psi), &psi).unwrap(), 1.0, 1e-12));
    }

    #[test]
    fn projector_examples() {
        let p0 = projector(&StateVector::zero());
        assert_eq!(p0.matrix()[(0, 0)], C64::new(1.0, 0.0));
        assert_eq!(p0.matrix()[(1, 1)], C64::new(0.0, 0.0));
        let killed = projector(&StateVector::plus()).apply(&StateVector::minus()).unwrap();
        assert!(killed.iter().all(|a| a.norm() < 1e-15));
    }

    #[test]
    fn projector_is_idempotent_with_unit_trace() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        for dim in 2..=8 {
            let p = projector(&random::haar_state(dim, &mut rng));
            let sq = p.matrix() * p.matrix();
            let dev = (sq - p.matrix()).iter().fold(0.0f64, |m, z| m.max(z.norm()));
            assert!(dev < 1e-12);
            assert!(close(p.trace(), 1.0, 1e-12));
        }
    }

    #[test]
    fn non_hermitian_rejected() {
        let m = DMatrix::from_row_slice(
            2,
            2,
            &[C64::new(0.0, 0.0), C64::new(1.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0)],
        );
        assert!(matches!(HermitianOperator::new(m), Err(Error::NotHermitian { .. })));
    }

    #[test]
    fn eigendecompose_examples() {
        let z = eigendecompose(&HermitianOperator::from_real_diagonal(&[1.0, -1.0]).unwrap())
            .unwrap();
        assert_eq!(z.eigenvalues().len(), 2);
        assert!(close(z.eigenvalues()[0], -1.0, 1e-12) && close(z.eigenvalues()[1], 1.0, 1e-12));

        // σx: eigenvalue −1 ↔ |−⟩, +1 ↔ |+⟩ (hand algebra).
        let x = eigendecompose(&HermitianOperator::pauli_x()).unwrap();
        assert!(close(x.eigenvalues()[0], -1.0, 1e-12) && close(x.eigenvalues()[1], 1.0, 1e-12));
        assert!(x.eigenvectors()[0].equal_up_to_phase(&StateVector::minus()));
        assert!(x.eigenvectors()[1].equal_up_to_phase(&StateVector::plus()));

        let p = eigendecompose(&projector(&StateVector::plus())).unwrap();
        assert!(close(p.eigenvalues()[0], 0.0, 1e-12) && close(p.eigenvalues()[1], 1.0, 1e-12));
    }

    #[test]
    fn degenerate_eigenvalues_grouped() {
        let op = HermitianOperator::pauli_z()
            .kron(&HermitianOperator::identity(2).unwrap())
            .unwrap();
        let eig = eigendecompose(&op).unwrap();
        let spaces = eig.eigenspaces();
        assert_eq!(spaces.len(), 2);
        assert_eq!(spaces[0].indices.len(), 2);
        assert!(close(spaces[0].eigenvalue, -1.0, 1e-12));
    }

    #[test]
    fn from_basis_rejects_non_orthonormal() {
        let r = EigenDecomposition::from_basis(
            vec![0.0, 1.0],
            vec![StateVector::zero(), StateVector::plus()],
        );
        assert!(matches!(r, Err(Error::NotOrthonormal { .. })));
    }

    #[test]
    fn json_shape() {
        let s = serde_json::to_value(StateVector::plus()).unwrap();
        assert_eq!(s["dim"], 2);
        assert_eq!(s["re"].as_array().unwrap().len(), 2);
        let op = serde_json::to_value(HermitianOperator::pauli_y()).unwrap();
        assert_eq!(op["im"][1], -1.0);
        assert_eq!(op["im"][2], 1.0);
        let bad = r#"{"dim":2,"re":[1.0,1.0],"im":[0.0,0.0]}"#;
        assert!(serde_json::from_str::<StateVector>(bad).is_err());
    }
}
