//! Hermitian eigendecompositions, partial (Krylov) eigensolves, empirical
//! spectral densities and emergent-eigenvalue bookkeeping.

mod density;
mod krylov;

use std::io::Write;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

pub use density::{convolve_densities, density_histogram, Binning, DensityHistogram};
pub use krylov::{top_k_eigs, KrylovOptions};

use crate::error::{Error, Result};
use crate::io::fmt_f64;
use crate::linalg::{fix_phase, gram_error, orthonormalize_columns, HermitianMatrix, C64};
use crate::netgraph::{check_capacity, ResourceSpec, SampledResource};

/// Eigenvalues closer than this (relative to `max(1, |λ|)`) are treated as one
/// degenerate cluster.
pub const DEGENERACY_TOL: f64 = 1e-9;

/// Absolute tolerance for matching a predicted emergent eigenvalue.
pub const EMERGENT_TOL: f64 = 1e-9;

/// Eigenpairs in descending eigenvalue order with orthonormal eigenvectors
/// stored column-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    eigenvalues: Vec<f64>,
    eigenvectors: DMatrix<C64>,
    complete: bool,
    source_dim: usize,
}

impl Spectrum {
    /// Builds a spectrum from pairs that are already sorted and orthonormal.
    pub fn new(
        eigenvalues: Vec<f64>,
        eigenvectors: DMatrix<C64>,
        complete: bool,
    ) -> Result<Self> {
        if eigenvectors.ncols() != eigenvalues.len() {
            return Err(Error::param(format!(
                "{} eigenvalues but {} eigenvectors",
                eigenvalues.len(),
                eigenvectors.ncols()
            )));
        }
        if eigenvalues.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::param("eigenvalues must be sorted descending"));
        }
        let source_dim = eigenvectors.nrows();
        if complete && eigenvalues.len() != source_dim {
            return Err(Error::param("a complete spectrum needs one pair per dimension"));
        }
        Ok(Spectrum {
            eigenvalues,
            eigenvectors,
            complete,
            source_dim,
        })
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &DMatrix<C64> {
        &self.eigenvectors
    }

    pub fn eigenvector(&self, i: usize) -> DVector<C64> {
        self.eigenvectors.column(i).clone_owned()
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn is_complete(&self) -> bool {
        self.complete
    }

    pub fn source_dim(&self) -> usize {
        self.source_dim
    }

    /// Largest eigenvalue and its eigenvector.
    pub fn top(&self) -> (f64, DVector<C64>) {
        (self.eigenvalues[0], self.eigenvector(0))
    }

    /// Gap between the two largest eigenvalues.
    pub fn gap(&self) -> Option<f64> {
        (self.len() >= 2).then(|| self.eigenvalues[0] - self.eigenvalues[1])
    }

    /// Expansion coefficients `<Φ_l, x>`.
    pub fn coefficients(&self, x: &DVector<C64>) -> DVector<C64> {
        self.eigenvectors.ad_mul(x)
    }

    /// The leading `k` pairs as a partial spectrum.
    pub fn truncated(&self, k: usize) -> Spectrum {
        let k = k.min(self.len());
        Spectrum {
            eigenvalues: self.eigenvalues[..k].to_vec(),
            eigenvectors: self.eigenvectors.columns(0, k).clone_owned(),
            complete: self.complete && k == self.source_dim,
            source_dim: self.source_dim,
        }
    }

    /// Replaces every eigenvector `Φ` by `f(Φ)`, which must be an isometry.
    pub fn map_eigenvectors(&self, f: impl Fn(&DMatrix<C64>) -> DMatrix<C64>) -> Spectrum {
        Spectrum {
            eigenvalues: self.eigenvalues.clone(),
            eigenvectors: f(&self.eigenvectors),
            complete: self.complete,
            source_dim: self.source_dim,
        }
    }

    /// Largest deviation of the eigenvector Gram matrix from the identity.
    pub fn orthonormality_error(&self) -> f64 {
        gram_error(&self.eigenvectors)
    }

    /// `||H - Φ Λ Φ^†||_F / ||H||_F`.
    pub fn reconstruction_error(&self, h: &HermitianMatrix) -> f64 {
        let lambda = DMatrix::from_diagonal(&DVector::from_iterator(
            self.len(),
            self.eigenvalues.iter().map(|&v| C64::new(v, 0.0)),
        ));
        let rec = &self.eigenvectors * lambda * self.eigenvectors.adjoint();
        let diff = h.to_complex() - rec;
        diff.norm() / h.frobenius_norm().max(f64::MIN_POSITIVE)
    }

    /// Writes `index,eigenvalue` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["index", "eigenvalue"])?;
        for (i, v) in self.eigenvalues.iter().enumerate() {
            w.write_record([i.to_string(), fmt_f64(*v)])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Whether some eigenvalue lies within `tol` of `value`.
    pub fn contains(&self, value: f64, tol: f64) -> bool {
        self.eigenvalues.iter().any(|v| (v - value).abs() <= tol)
    }
}

/// Sorts pairs descending, re-orthonormalizes inside degenerate clusters and
/// applies the phase convention.
pub(crate) fn finalize_pairs(
    values: Vec<f64>,
    vectors: DMatrix<C64>,
    complete: bool,
) -> Spectrum {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    let sorted: Vec<f64> = order.iter().map(|&i| values[i]).collect();
    let mut vecs = DMatrix::from_fn(vectors.nrows(), order.len(), |r, c| vectors[(r, order[c])]);
    let mut start = 0;
    while start < sorted.len() {
        let mut end = start + 1;
        while end < sorted.len()
            && (sorted[end - 1] - sorted[end]).abs()
                <= DEGENERACY_TOL * sorted[start].abs().max(1.0)
        {
            end += 1;
        }
        if end - start > 1 {
            orthonormalize_columns(&mut vecs, start, end);
        }
        start = end;
    }
    for j in 0..vecs.ncols() {
        fix_phase(vecs.column_mut(j));
    }
    let source_dim = vecs.nrows();
    Spectrum {
        eigenvalues: sorted,
        eigenvectors: vecs,
        complete,
        source_dim,
    }
}

/// Complete eigendecomposition of a Hermitian matrix.
///
/// Eigenvalues are returned in descending order. Within each degenerate
/// cluster the eigenvectors are re-orthonormalized, and every eigenvector is
/// scaled by a phase that makes its largest-magnitude entry real positive.
pub fn full_eigh(h: &HermitianMatrix) -> Result<Spectrum> {
    let n = h.dim();
    if n == 0 {
        return Err(Error::param("cannot diagonalize an empty matrix"));
    }
    let (values, vectors) = match h.real() {
        Some(m) => {
            let eig = SymmetricEigen::new(m.clone());
            (
                eig.eigenvalues.iter().copied().collect::<Vec<_>>(),
                eig.eigenvectors.map(|v| C64::new(v, 0.0)),
            )
        }
        None => {
            let eig = SymmetricEigen::new(h.to_complex());
            (eig.eigenvalues.iter().copied().collect(), eig.eigenvectors)
        }
    };
    Ok(finalize_pairs(values, vectors, true))
}

/// Eigenvalues only, in descending order.
pub fn eigenvalues_only(h: &HermitianMatrix) -> Result<Vec<f64>> {
    if h.dim() == 0 {
        return Err(Error::param("cannot diagonalize an empty matrix"));
    }
    let mut v: Vec<f64> = match h.real() {
        Some(m) => m.clone().symmetric_eigenvalues().iter().copied().collect(),
        None => h.to_complex().symmetric_eigenvalues().iter().copied().collect(),
    };
    v.sort_by(|a, b| b.total_cmp(a));
    Ok(v)
}

/// Validates an arbitrary complex matrix and diagonalizes it.
pub fn eigh_dense(m: &DMatrix<C64>) -> Result<Spectrum> {
    let h = HermitianMatrix::from_complex(m.clone(), crate::linalg::MatrixTag::Resource)?;
    full_eigh(&h)
}

/// Spectrum of the Kronecker sum of matrices with the given complete spectra:
/// eigenvalues are all sums of one eigenvalue per factor and eigenvectors the
/// Kronecker products of the factor eigenvectors.
pub fn product_spectrum(factors: &[Spectrum], memory_cap: u64) -> Result<Spectrum> {
    if factors.is_empty() {
        return Err(Error::param("product spectrum needs at least one factor"));
    }
    if factors.iter().any(|f| !f.is_complete()) {
        return Err(Error::param("product spectrum needs complete factor spectra"));
    }
    let total = factors
        .iter()
        .try_fold(1usize, |acc, f| acc.checked_mul(f.len()))
        .ok_or_else(|| Error::param("product dimension overflows"))?;
    check_capacity("product eigenvectors", total, 16, memory_cap)?;

    let mut values = vec![0.0; 1];
    let mut vectors = DMatrix::from_element(1, 1, C64::new(1.0, 0.0));
    for f in factors {
        let d = f.len();
        let mut next_values = Vec::with_capacity(values.len() * d);
        for &a in &values {
            for &b in f.eigenvalues() {
                next_values.push(a + b);
            }
        }
        vectors = vectors.kronecker(f.eigenvectors());
        values = next_values;
    }
    Ok(finalize_pairs(values, vectors, true))
}

/// Spectrum of a sampled multi-bit ground resource, assembled from the
/// factor spectra.
pub fn resource_spectrum(sampled: &SampledResource, memory_cap: u64) -> Result<Spectrum> {
    let factors = sampled
        .bits
        .iter()
        .map(|b| full_eigh(&b.resource))
        .collect::<Result<Vec<_>>>()?;
    if factors.len() == 1 {
        return Ok(factors.into_iter().next().expect("one factor"));
    }
    product_spectrum(&factors, memory_cap)
}

/// The emergent eigenvalues `sum_q λ_{σ_q}` over all `σ ∈ {↓, ↑}^n_ql`, with
/// `λ_↓ = k_q + l_q` and `λ_↑ = k_q - l_q`, in descending order with
/// multiplicity.
pub fn emergent_eigenvalues(spec: &ResourceSpec) -> Vec<f64> {
    let mut sums = vec![0.0];
    for q in 0..spec.n_ql {
        let (k, l) = (spec.k[q] as f64, spec.l[q] as f64);
        sums = sums
            .iter()
            .flat_map(|&s| [s + k + l, s + k - l])
            .collect();
    }
    sums.sort_by(|a, b| b.total_cmp(a));
    sums
}

/// Predicted emergent eigenvalues missing from `spectrum` (absolute test with
/// tolerance [`EMERGENT_TOL`]). Multiplicities are honoured.
pub fn missing_emergent(spectrum: &Spectrum, spec: &ResourceSpec) -> Vec<f64> {
    let mut used = vec![false; spectrum.len()];
    let mut missing = Vec::new();
    for target in emergent_eigenvalues(spec) {
        let hit = spectrum
            .eigenvalues()
            .iter()
            .enumerate()
            .position(|(i, v)| !used[i] && (v - target).abs() <= EMERGENT_TOL);
        match hit {
            Some(i) => used[i] = true,
            None => missing.push(target),
        }
    }
    missing
}
