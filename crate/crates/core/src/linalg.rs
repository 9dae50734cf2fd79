//! Dense Hermitian matrices and small vector helpers shared by every module.

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::io::fmt_f64;

pub type C64 = nalgebra::Complex<f64>;

/// Tolerance of the Hermiticity check, relative to the largest entry.
pub const HERMITIAN_TOL: f64 = 1e-12;

/// Role a matrix plays in the construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixTag {
    Adjacency,
    Coupling,
    Resource,
    Generator,
    UnitaryImage,
}

#[derive(Debug, Clone, PartialEq)]
enum Storage {
    Real(DMatrix<f64>),
    Complex(DMatrix<C64>),
}

/// Square Hermitian matrix. Real symmetric matrices are stored as `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix {
    storage: Storage,
    tag: MatrixTag,
}

fn max_abs_real(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

impl HermitianMatrix {
    /// Wraps a real matrix after checking that it is symmetric.
    pub fn from_real(m: DMatrix<f64>, tag: MatrixTag) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::Validation(format!(
                "matrix is {}x{}, expected square",
                m.nrows(),
                m.ncols()
            )));
        }
        let tol = HERMITIAN_TOL * max_abs_real(&m).max(1.0);
        let n = m.nrows();
        for i in 0..n {
            for j in (i + 1)..n {
                let d = (m[(i, j)] - m[(j, i)]).abs();
                if d > tol || !m[(i, j)].is_finite() {
                    return Err(Error::Validation(format!(
                        "matrix is not symmetric at ({i}, {j}): deviation {d:e}"
                    )));
                }
            }
        }
        let h = HermitianMatrix {
            storage: Storage::Real(m),
            tag,
        };
        h.check_tag()?;
        Ok(h)
    }

    /// Wraps a complex matrix after checking that it is Hermitian. Matrices
    /// with vanishing imaginary parts are stored as real.
    pub fn from_complex(m: DMatrix<C64>, tag: MatrixTag) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::Validation(format!(
                "matrix is {}x{}, expected square",
                m.nrows(),
                m.ncols()
            )));
        }
        let scale = m.iter().fold(0.0_f64, |acc, v| acc.max(v.norm())).max(1.0);
        let tol = HERMITIAN_TOL * scale;
        let n = m.nrows();
        for i in 0..n {
            for j in i..n {
                let d = (m[(i, j)] - m[(j, i)].conj()).norm();
                if d > tol || !m[(i, j)].re.is_finite() || !m[(i, j)].im.is_finite() {
                    return Err(Error::Validation(format!(
                        "matrix is not Hermitian at ({i}, {j}): deviation {d:e}"
                    )));
                }
            }
        }
        let h = if m.iter().all(|v| v.im == 0.0) {
            HermitianMatrix {
                storage: Storage::Real(m.map(|v| v.re)),
                tag,
            }
        } else {
            HermitianMatrix {
                storage: Storage::Complex(m),
                tag,
            }
        };
        h.check_tag()?;
        Ok(h)
    }

    /// Symmetrizes `(m + m^T)/2` before wrapping; used for products that are
    /// Hermitian up to rounding.
    pub(crate) fn symmetrized_real(m: DMatrix<f64>, tag: MatrixTag) -> Self {
        let sym = (&m + m.transpose()) * 0.5;
        HermitianMatrix {
            storage: Storage::Real(sym),
            tag,
        }
    }

    pub(crate) fn symmetrized_complex(m: DMatrix<C64>, tag: MatrixTag) -> Self {
        let sym = (&m + m.adjoint()) * C64::new(0.5, 0.0);
        if sym.iter().all(|v| v.im == 0.0) {
            HermitianMatrix {
                storage: Storage::Real(sym.map(|v| v.re)),
                tag,
            }
        } else {
            HermitianMatrix {
                storage: Storage::Complex(sym),
                tag,
            }
        }
    }

    /// Zero matrix of the given dimension.
    pub fn zeros(dim: usize, tag: MatrixTag) -> Self {
        HermitianMatrix {
            storage: Storage::Real(DMatrix::zeros(dim, dim)),
            tag,
        }
    }

    fn check_tag(&self) -> Result<()> {
        if self.tag != MatrixTag::Adjacency {
            return Ok(());
        }
        let m = self.real().ok_or_else(|| {
            Error::Validation("adjacency matrices must be real".to_string())
        })?;
        let n = m.nrows();
        let mut sign = 0.0;
        for i in 0..n {
            if m[(i, i)] != 0.0 {
                return Err(Error::Validation(format!(
                    "adjacency matrix has nonzero diagonal at {i}"
                )));
            }
            for j in 0..n {
                let v = m[(i, j)];
                if v == 0.0 {
                    continue;
                }
                if v.abs() != 1.0 || (sign != 0.0 && v != sign) {
                    return Err(Error::Validation(format!(
                        "adjacency entry ({i}, {j}) = {v} is outside {{0, 1}} or {{0, -1}}"
                    )));
                }
                sign = v;
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        match &self.storage {
            Storage::Real(m) => m.nrows(),
            Storage::Complex(m) => m.nrows(),
        }
    }

    pub fn tag(&self) -> MatrixTag {
        self.tag
    }

    pub fn with_tag(mut self, tag: MatrixTag) -> Self {
        self.tag = tag;
        self
    }

    pub fn is_real(&self) -> bool {
        matches!(self.storage, Storage::Real(_))
    }

    /// The real entries, when the matrix is real symmetric.
    pub fn real(&self) -> Option<&DMatrix<f64>> {
        match &self.storage {
            Storage::Real(m) => Some(m),
            Storage::Complex(_) => None,
        }
    }

    pub fn to_complex(&self) -> DMatrix<C64> {
        match &self.storage {
            Storage::Real(m) => m.map(|v| C64::new(v, 0.0)),
            Storage::Complex(m) => m.clone(),
        }
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        match &self.storage {
            Storage::Real(m) => C64::new(m[(i, j)], 0.0),
            Storage::Complex(m) => m[(i, j)],
        }
    }

    /// `H v`.
    pub fn mul_vec(&self, v: &DVector<C64>) -> DVector<C64> {
        match &self.storage {
            Storage::Real(m) => {
                let re = m * v.map(|z| z.re);
                let im = m * v.map(|z| z.im);
                DVector::from_fn(v.len(), |i, _| C64::new(re[i], im[i]))
            }
            Storage::Complex(m) => m * v,
        }
    }

    /// `H V` for a block of column vectors.
    pub fn mul_mat(&self, v: &DMatrix<C64>) -> DMatrix<C64> {
        match &self.storage {
            Storage::Real(m) => {
                let re = m * v.map(|z| z.re);
                let im = m * v.map(|z| z.im);
                DMatrix::from_fn(v.nrows(), v.ncols(), |i, j| C64::new(re[(i, j)], im[(i, j)]))
            }
            Storage::Complex(m) => m * v,
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        match &self.storage {
            Storage::Real(m) => m.norm(),
            Storage::Complex(m) => m.norm(),
        }
    }

    /// Largest entrywise deviation from `other`.
    pub fn max_abs_diff(&self, other: &HermitianMatrix) -> f64 {
        assert_eq!(self.dim(), other.dim(), "dimension mismatch");
        match (&self.storage, &other.storage) {
            (Storage::Real(a), Storage::Real(b)) => max_abs_real(&(a - b)),
            _ => (self.to_complex() - other.to_complex())
                .iter()
                .fold(0.0_f64, |acc, v| acc.max(v.norm())),
        }
    }

    /// Writes nonzero entries as `row,col,value` (real) or `row,col,re,im`
    /// (complex) lines.
    pub fn write_triplets_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        match &self.storage {
            Storage::Real(m) => {
                w.write_record(["row", "col", "value"])?;
                for i in 0..m.nrows() {
                    for j in 0..m.ncols() {
                        let v = m[(i, j)];
                        if v != 0.0 {
                            w.write_record([i.to_string(), j.to_string(), fmt_f64(v)])?;
                        }
                    }
                }
            }
            Storage::Complex(m) => {
                w.write_record(["row", "col", "re", "im"])?;
                for i in 0..m.nrows() {
                    for j in 0..m.ncols() {
                        let v = m[(i, j)];
                        if v.re != 0.0 || v.im != 0.0 {
                            w.write_record([
                                i.to_string(),
                                j.to_string(),
                                fmt_f64(v.re),
                                fmt_f64(v.im),
                            ])?;
                        }
                    }
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Conjugate-linear inner product `<a, b> = a^† b`.
pub fn inner(a: &DVector<C64>, b: &DVector<C64>) -> C64 {
    a.dotc(b)
}

pub fn to_complex_vec(v: &DVector<f64>) -> DVector<C64> {
    v.map(|x| C64::new(x, 0.0))
}

/// Normalized all-ones vector of length `n`.
pub fn uniform_vector(n: usize) -> DVector<f64> {
    DVector::from_element(n, 1.0 / (n as f64).sqrt())
}

/// Kronecker product of vectors, first factor most significant.
pub fn kron_vectors<T>(factors: &[DVector<T>]) -> DVector<T>
where
    T: nalgebra::Scalar + Copy + std::ops::Mul<Output = T> + num_traits::One,
{
    let mut out = DVector::from_element(1, T::one());
    for f in factors {
        let mut next = Vec::with_capacity(out.len() * f.len());
        for a in out.iter() {
            for b in f.iter() {
                next.push(*a * *b);
            }
        }
        out = DVector::from_vec(next);
    }
    out
}

/// Multiplies the column by a unit phase so that its largest-magnitude entry
/// is real and positive. Entries within `1e-10` of the maximum count as ties
/// and the lowest index wins.
pub fn fix_phase(mut v: nalgebra::DVectorViewMut<'_, C64>) {
    let max = v.iter().fold(0.0_f64, |acc, z| acc.max(z.norm()));
    if max == 0.0 {
        return;
    }
    let pivot = v
        .iter()
        .position(|z| z.norm() >= max - 1e-10 * max)
        .expect("maximum exists");
    let z = v[pivot];
    let phase = z.conj() / z.norm();
    for e in v.iter_mut() {
        *e *= phase;
    }
}

/// Modified Gram-Schmidt applied in place to columns `start..end`.
pub fn orthonormalize_columns(m: &mut DMatrix<C64>, start: usize, end: usize) {
    for j in start..end {
        for i in start..j {
            let proj = m.column(i).dotc(&m.column(j));
            let ci = m.column(i).clone_owned();
            m.column_mut(j).axpy(-proj, &ci, C64::new(1.0, 0.0));
        }
        let n = m.column(j).norm();
        if n > 0.0 {
            m.column_mut(j).scale_mut(1.0 / n);
        }
    }
}

/// Largest deviation of `V^† V` from the identity.
pub fn gram_error(v: &DMatrix<C64>) -> f64 {
    let g = v.adjoint() * v;
    let mut err = 0.0_f64;
    for i in 0..g.nrows() {
        for j in 0..g.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            err = err.max((g[(i, j)] - C64::new(target, 0.0)).norm());
        }
    }
    err
}

/// Largest principal angle between `span(b)` and its projection onto
/// `span(a)`. Both sets of columns must be orthonormal; `a` may be wider.
pub fn largest_principal_angle(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
    let residual = b - a * a.ad_mul(b);
    let s = residual
        .singular_values()
        .iter()
        .cloned()
        .fold(0.0_f64, f64::max);
    s.min(1.0).asin()
}
