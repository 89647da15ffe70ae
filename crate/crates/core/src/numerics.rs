//! Dense complex linear algebra shared by every other module.
//!
//! Matrices are `nalgebra::DMatrix<Complex64>`. Eigen and singular value
//! decompositions are delegated to nalgebra; this module adds the ordering,
//! validation and tolerance conventions the rest of the crate relies on.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type ComplexMatrix = DMatrix<Complex64>;
pub type ComplexVector = DVector<Complex64>;

/// Hermiticity tolerance accepted by [`hermitian_eig`].
pub const HERMITIAN_TOL: f64 = 1e-8;

/// Default relative cutoff for the pseudoinverse rank.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

#[inline]
pub fn c64(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn frobenius_norm(m: &ComplexMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Largest entry of |M - M^dag|.
pub fn hermitian_deviation(m: &ComplexMatrix) -> f64 {
    if !m.is_square() {
        return f64::INFINITY;
    }
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// (M + M^dag) / 2.
pub fn hermitian_part(m: &ComplexMatrix) -> ComplexMatrix {
    (m + m.adjoint()) * c64(0.5, 0.0)
}

pub fn trace(m: &ComplexMatrix) -> Complex64 {
    m.diagonal().iter().sum()
}

pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a.kronecker(b)
}

pub fn ensure_square(m: &ComplexMatrix) -> Result<usize> {
    if m.is_square() {
        Ok(m.nrows())
    } else {
        Err(Error::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        })
    }
}

pub fn ensure_finite(m: &ComplexMatrix) -> Result<()> {
    if m.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite)
    }
}

/// Eigendecomposition of a Hermitian matrix with eigenvalues in ascending
/// order. Column `k` of `vectors` belongs to `values[k]`.
#[derive(Clone, Debug)]
pub struct HermitianEig {
    pub values: Vec<f64>,
    pub vectors: ComplexMatrix,
}

impl HermitianEig {
    pub fn min(&self) -> f64 {
        self.values.first().copied().unwrap_or(0.0)
    }

    pub fn max(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }

    /// Sum of f(lambda_k) v_k v_k^dag.
    pub fn reassemble_with(&self, f: impl Fn(f64) -> f64) -> ComplexMatrix {
        let n = self.vectors.nrows();
        let mut out = ComplexMatrix::zeros(n, n);
        for (k, &lam) in self.values.iter().enumerate() {
            let w = f(lam);
            if w == 0.0 {
                continue;
            }
            let v = self.vectors.column(k);
            out += (v * v.adjoint()) * c64(w, 0.0);
        }
        out
    }

    pub fn reassemble(&self) -> ComplexMatrix {
        self.reassemble_with(|x| x)
    }
}

pub fn hermitian_eig(m: &ComplexMatrix) -> Result<HermitianEig> {
    ensure_square(m)?;
    ensure_finite(m)?;
    let dev = hermitian_deviation(m);
    if dev > HERMITIAN_TOL {
        return Err(Error::NotHermitian(dev));
    }
    let n = m.nrows();
    let eig = SymmetricEigen::new(hermitian_part(m));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = ComplexMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    Ok(HermitianEig { values, vectors })
}

/// Moore-Penrose inverse together with the numerical rank it was built from.
#[derive(Clone, Debug)]
pub struct Pseudoinverse {
    pub pinv: ComplexMatrix,
    pub rank: usize,
    /// Descending.
    pub singular_values: Vec<f64>,
}

/// Pseudoinverse from the SVD, discarding singular values at or below
/// `tol * sigma_max`.
pub fn svd_pseudoinverse(m: &ComplexMatrix, tol: f64) -> Result<Pseudoinverse> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter {
            name: "tol".into(),
            value: tol,
            range: "(0, inf)",
        });
    }
    ensure_finite(m)?;
    let (rows, cols) = m.shape();
    if m.iter().all(|z| *z == Complex64::default()) {
        return Ok(Pseudoinverse {
            pinv: ComplexMatrix::zeros(cols, rows),
            rank: 0,
            singular_values: vec![0.0; rows.min(cols)],
        });
    }
    let svd = m.clone().svd(true, true);
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let sigma = &svd.singular_values;
    let sigma_max = sigma.iter().cloned().fold(0.0, f64::max);
    let cutoff = tol * sigma_max;

    let mut pinv = ComplexMatrix::zeros(cols, rows);
    let mut rank = 0;
    for k in 0..sigma.len() {
        if sigma[k] > cutoff {
            rank += 1;
            // V[:,k] sigma^-1 U[:,k]^dag
            let vk = v_t.row(k).adjoint();
            let uk = u.column(k);
            pinv += (vk * uk.adjoint()) * c64(1.0 / sigma[k], 0.0);
        }
    }
    let mut singular_values: Vec<f64> = sigma.iter().copied().collect();
    singular_values.sort_by(|a, b| b.total_cmp(a));
    Ok(Pseudoinverse {
        pinv,
        rank,
        singular_values,
    })
}

/// Trace distance between two Hermitian matrices, 1/2 sum |eig(a - b)|.
pub fn trace_distance_hermitian(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            found: b.nrows(),
        });
    }
    let diff = hermitian_part(&(a - b));
    let eig = hermitian_eig(&diff)?;
    Ok(0.5 * eig.values.iter().map(|x| x.abs()).sum::<f64>())
}

pub fn trace_distance(a: &DensityMatrix, b: &DensityMatrix) -> Result<f64> {
    trace_distance_hermitian(a.matrix(), b.matrix())
}

/// A validated density operator: Hermitian, unit trace, positive semidefinite.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix(ComplexMatrix);

impl DensityMatrix {
    pub const TOL: f64 = 1e-10;

    pub fn new(m: ComplexMatrix) -> Result<Self> {
        Self::with_tolerance(m, Self::TOL)
    }

    pub fn with_tolerance(m: ComplexMatrix, tol: f64) -> Result<Self> {
        ensure_square(&m)?;
        ensure_finite(&m)?;
        let dev = hermitian_deviation(&m);
        if dev > tol {
            return Err(Error::InvalidDensityMatrix(format!(
                "not Hermitian (deviation {dev:.3e})"
            )));
        }
        let tr = trace(&m);
        if (tr.re - 1.0).abs() > tol || tr.im.abs() > tol {
            return Err(Error::InvalidDensityMatrix(format!(
                "trace is {tr} instead of 1"
            )));
        }
        let min = hermitian_eig(&m)?.min();
        if min < -tol {
            return Err(Error::InvalidDensityMatrix(format!(
                "min eigenvalue {min:.3e} is negative"
            )));
        }
        Ok(Self(m))
    }

    pub fn from_pure(psi: &ComplexVector) -> Result<Self> {
        let norm = psi.norm();
        if !(norm > 0.0) {
            return Err(Error::InvalidDensityMatrix("zero state vector".into()));
        }
        let psi = psi / c64(norm, 0.0);
        Ok(Self(&psi * psi.adjoint()))
    }

    pub fn basis_state(dim: usize, k: usize) -> Self {
        let mut m = ComplexMatrix::zeros(dim, dim);
        m[(k, k)] = c64(1.0, 0.0);
        Self(m)
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self(ComplexMatrix::identity(dim, dim) * c64(1.0 / dim as f64, 0.0))
    }

    /// Random mixed state G G^dag / Tr(G G^dag) with G a complex Ginibre matrix.
    pub fn random<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Self {
        let g = ComplexMatrix::from_fn(dim, dim, |_, _| {
            c64(rng.sample(StandardNormal), rng.sample(StandardNormal))
        });
        let m = &g * g.adjoint();
        let tr = trace(&m).re;
        Self(hermitian_part(&(m / c64(tr, 0.0))))
    }

    pub fn random_pure<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Self {
        let psi = ComplexVector::from_fn(dim, |_, _| {
            c64(rng.sample(StandardNormal), rng.sample(StandardNormal))
        });
        Self::from_pure(&psi).expect("gaussian vector is nonzero")
    }

    /// Nearest density matrix by Hermitizing, clipping negative eigenvalues
    /// and renormalizing the trace.
    pub fn nearest(m: &ComplexMatrix) -> Result<Self> {
        ensure_square(m)?;
        ensure_finite(m)?;
        let eig = hermitian_eig(&hermitian_part(m))?;
        let clipped = eig.reassemble_with(|x| x.max(0.0));
        let tr = trace(&clipped).re;
        if !(tr > 0.0) {
            return Err(Error::InvalidDensityMatrix(
                "no positive spectrum left after clipping".into(),
            ));
        }
        Ok(Self(hermitian_part(&(clipped / c64(tr, 0.0)))))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.0
    }

    pub fn purity(&self) -> f64 {
        trace(&(&self.0 * &self.0)).re
    }
}

/// Wire form `{"rows": R, "cols": C, "data": [[re, im], ...]}`, row-major.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct MatrixJson {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<[f64; 2]>,
}

impl From<&ComplexMatrix> for MatrixJson {
    fn from(m: &ComplexMatrix) -> Self {
        let (rows, cols) = m.shape();
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                let z = m[(i, j)];
                data.push([z.re, z.im]);
            }
        }
        Self { rows, cols, data }
    }
}

impl TryFrom<MatrixJson> for ComplexMatrix {
    type Error = Error;

    fn try_from(j: MatrixJson) -> Result<Self> {
        if j.rows == 0 || j.cols == 0 {
            return Err(Error::InvalidInput("matrix has a zero dimension".into()));
        }
        if j.data.len() != j.rows * j.cols {
            return Err(Error::InvalidInput(format!(
                "matrix declares {}x{} but carries {} entries",
                j.rows,
                j.cols,
                j.data.len()
            )));
        }
        let m = ComplexMatrix::from_fn(j.rows, j.cols, |r, c| {
            let [re, im] = j.data[r * j.cols + c];
            c64(re, im)
        });
        ensure_finite(&m)?;
        Ok(m)
    }
}

/// `#[serde(with = ...)]` adapter for matrix-valued fields.
pub mod matrix_json {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(
        m: &ComplexMatrix,
        s: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        MatrixJson::from(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> std::result::Result<ComplexMatrix, D::Error> {
        let j = MatrixJson::deserialize(d)?;
        ComplexMatrix::try_from(j).map_err(serde::de::Error::custom)
    }
}

pub fn matrix_to_json(m: &ComplexMatrix) -> String {
    serde_json::to_string(&MatrixJson::from(m)).expect("matrix serializes")
}

pub fn matrix_from_json(s: &str) -> Result<ComplexMatrix> {
    let j: MatrixJson = serde_json::from_str(s).map_err(|e| Error::json("matrix", e))?;
    ComplexMatrix::try_from(j)
}
