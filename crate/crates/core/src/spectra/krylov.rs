//! Thick-restart block Krylov eigensolver for the largest eigenpairs.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{finalize_pairs, Spectrum};
use crate::error::{Error, Result};
use crate::linalg::{HermitianMatrix, C64};
use crate::rng::{sample_stream, Purpose};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KrylovOptions {
    /// Residual tolerance relative to `max(1, max |θ|)`.
    pub tol: f64,
    pub max_restarts: usize,
    /// Block width; `None` picks `k + 2`.
    pub block_size: Option<usize>,
    /// Basis size before a restart; `None` picks `max(3p, k + 2p + 10)`.
    pub max_basis: Option<usize>,
    pub seed: u64,
}

impl Default for KrylovOptions {
    fn default() -> Self {
        KrylovOptions {
            tol: 1e-10,
            max_restarts: 500,
            block_size: None,
            max_basis: None,
            seed: 0,
        }
    }
}

const DROP_TOL: f64 = 1e-10;

/// Orthogonalizes the columns of `w` against `basis` (two classical passes)
/// and then among themselves. Columns that collapse are replaced by random
/// directions. Returns `None` when the basis already spans the space.
fn orthogonalize_block<R: Rng>(
    basis: &DMatrix<C64>,
    mut w: DMatrix<C64>,
    rng: &mut R,
) -> Option<DMatrix<C64>> {
    let n = w.nrows();
    let mut out: Vec<nalgebra::DVector<C64>> = Vec::with_capacity(w.ncols());
    for j in 0..w.ncols() {
        let mut attempts = 0;
        let mut v = w.column(j).clone_owned();
        loop {
            let norm0 = v.norm().max(f64::MIN_POSITIVE);
            for _ in 0..2 {
                if basis.ncols() > 0 {
                    let c = basis.ad_mul(&v);
                    v -= basis * c;
                }
                for q in &out {
                    let c = q.dotc(&v);
                    v.axpy(-c, q, C64::new(1.0, 0.0));
                }
            }
            let norm = v.norm();
            if norm > DROP_TOL * norm0 && norm > 0.0 {
                out.push(v / C64::new(norm, 0.0));
                break;
            }
            attempts += 1;
            if basis.ncols() + out.len() >= n || attempts > 8 {
                break;
            }
            v = nalgebra::DVector::from_fn(n, |_, _| C64::new(rng.gen::<f64>() - 0.5, 0.0));
        }
    }
    w = DMatrix::from_columns(&out);
    (!out.is_empty()).then_some(w)
}

fn hstack(a: &DMatrix<C64>, b: &DMatrix<C64>) -> DMatrix<C64> {
    let mut m = DMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
    m.columns_mut(0, a.ncols()).copy_from(a);
    m.columns_mut(a.ncols(), b.ncols()).copy_from(b);
    m
}

/// The `k` largest eigenpairs of `h`.
///
/// Ritz pairs come from a Rayleigh-Ritz projection onto a block Krylov basis
/// that is thick-restarted around the best current Ritz vectors. A pair is
/// converged when `||H y - θ y|| <= tol * max(1, max |θ|)`.
pub fn top_k_eigs(h: &HermitianMatrix, k: usize, opts: &KrylovOptions) -> Result<Spectrum> {
    let n = h.dim();
    if k == 0 || k > n {
        return Err(Error::param(format!("cannot compute {k} eigenpairs of a {n}-dim matrix")));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::param("Krylov tolerance must be positive"));
    }
    let p = opts.block_size.unwrap_or(k + 2).max(1);
    let m = opts.max_basis.unwrap_or((3 * p).max(k + 2 * p + 10));
    if m < k + 2 * p {
        return Err(Error::param("Krylov basis must hold at least k + 2p vectors"));
    }
    if m >= n {
        // The Krylov space would span everything; a dense solve is exact.
        let full = super::full_eigh(h)?;
        let mut s = full.truncated(k);
        s.complete = k == n;
        return Ok(s);
    }

    let mut rng = sample_stream(opts.seed, 0, Purpose::Solver);
    let start = DMatrix::from_fn(n, p, |_, _| C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5));
    let empty = DMatrix::<C64>::zeros(n, 0);
    let mut block = orthogonalize_block(&empty, start, &mut rng).expect("random block has rank");
    let mut v = empty.clone();
    let mut hv = empty;
    let mut last_residuals = Vec::new();

    for restart in 0..=opts.max_restarts {
        // Expand.
        loop {
            let hb = h.mul_mat(&block);
            v = hstack(&v, &block);
            hv = hstack(&hv, &hb);
            if v.ncols() + p > m {
                break;
            }
            match orthogonalize_block(&v, hb, &mut rng) {
                Some(b) => block = b,
                None => break,
            }
        }

        // Rayleigh-Ritz.
        let t = v.ad_mul(&hv);
        let t = (&t + t.adjoint()) * C64::new(0.5, 0.0);
        let eig = SymmetricEigen::new(t);
        let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let theta: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let s = DMatrix::from_fn(eig.eigenvectors.nrows(), order.len(), |r, c| {
            eig.eigenvectors[(r, order[c])]
        });
        let y = &v * &s;
        let hy = &hv * &s;

        let scale = theta.iter().fold(1.0_f64, |a, x| a.max(x.abs()));
        let n_res = p.max(k).min(theta.len());
        let mut resid_vecs = DMatrix::zeros(n, n_res);
        let mut residuals = Vec::with_capacity(k);
        for j in 0..n_res {
            let r = hy.column(j) - y.column(j) * C64::new(theta[j], 0.0);
            if j < k {
                residuals.push(r.norm());
            }
            resid_vecs.set_column(j, &r);
        }
        let max_residual = residuals.iter().cloned().fold(0.0, f64::max);
        log::debug!("krylov restart {restart}: basis {} max residual {max_residual:e}", v.ncols());
        if max_residual <= opts.tol * scale {
            let vals = theta[..k].to_vec();
            let vecs = y.columns(0, k).clone_owned();
            return Ok(finalize_pairs(vals, vecs, k == n));
        }
        last_residuals = residuals;

        // Thick restart.
        let keep = (k + p).min(theta.len());
        v = y.columns(0, keep).clone_owned();
        hv = hy.columns(0, keep).clone_owned();
        let r = resid_vecs.columns(0, p.min(n_res)).clone_owned();
        match orthogonalize_block(&v, r, &mut rng) {
            Some(b) => {
                // The expansion loop appends `block` first; avoid duplicating
                // the kept vectors by multiplying only the new block.
                let hb = h.mul_mat(&b);
                v = hstack(&v, &b);
                hv = hstack(&hv, &hb);
                match orthogonalize_block(&v, hb, &mut rng) {
                    Some(next) => block = next,
                    None => {
                        block = DMatrix::zeros(n, 0);
                    }
                }
            }
            None => block = DMatrix::zeros(n, 0),
        }
    }
    let max_residual = last_residuals.iter().cloned().fold(0.0, f64::max);
    Err(Error::Convergence {
        restarts: opts.max_restarts,
        residuals: last_residuals,
        max_residual,
    })
}
