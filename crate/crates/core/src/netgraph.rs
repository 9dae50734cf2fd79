//! Random regular graphs, biregular coupling blocks and the quantum-like (QL)
//! network resources assembled from them.
//!
//! A single-bit resource has the block form
//!
//! ```text
//!     R = [  A   -C ]
//!         [ -C^T  B ]
//! ```
//!
//! with `A`, `B` simple `k`-regular graphs on `n_g` nodes and `C` an
//! `l`-biregular bipartite coupling. Its two emergent eigenpairs are
//! `k + l` with `(u, -u)/sqrt(2)` and `k - l` with `(u, u)/sqrt(2)`, where `u`
//! is the normalized all-ones vector. Multi-bit resources are Kronecker sums
//! (graph Cartesian products) of single-bit ones.

use std::io::Read;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{HermitianMatrix, MatrixTag};
use crate::rng::{sample_stream, Purpose};

/// Restarts allowed before a sampler gives up.
pub const MAX_RESTARTS: usize = 10_000;

/// Attempts at drawing one compatible permutation before a coupling restart.
const PERMUTATION_ATTEMPTS: usize = 1_000;

/// Default memory ceiling for dense assembled matrices: 8 GiB.
pub const DEFAULT_MEMORY_CAP: u64 = 8 << 30;

/// How the cross-subgraph coupling block is drawn.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingKind {
    /// General `l`-biregular bipartite block (`C != C^T` in general).
    #[default]
    Biregular,
    /// Symmetric block: the adjacency of a simple `l`-regular graph.
    Symmetric,
}

fn is_default_coupling(c: &CouplingKind) -> bool {
    *c == CouplingKind::Biregular
}

/// Dimensions and valencies of a QL network resource.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceSpec {
    /// Nodes per subgraph.
    pub n_g: usize,
    /// Number of QL bits.
    pub n_ql: usize,
    /// Diagonal-block valency per bit.
    pub k: Vec<usize>,
    /// Coupling-block valency per bit.
    pub l: Vec<usize>,
    /// Master seed of the graph streams.
    pub seed: u64,
    #[serde(default, skip_serializing_if = "is_default_coupling")]
    pub coupling: CouplingKind,
}

impl ResourceSpec {
    /// Spec with the same valencies on every bit.
    pub fn uniform(n_g: usize, n_ql: usize, k: usize, l: usize, seed: u64) -> Self {
        ResourceSpec {
            n_g,
            n_ql,
            k: vec![k; n_ql],
            l: vec![l; n_ql],
            seed,
            coupling: CouplingKind::Biregular,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_g == 0 || self.n_ql == 0 {
            return Err(Error::param("n_g and n_ql must be positive"));
        }
        if self.k.len() != self.n_ql || self.l.len() != self.n_ql {
            return Err(Error::param(format!(
                "expected {} valencies in k and l, got {} and {}",
                self.n_ql,
                self.k.len(),
                self.l.len()
            )));
        }
        for q in 0..self.n_ql {
            check_regular(self.n_g, self.k[q])
                .map_err(|e| Error::param(format!("bit {}: {e}", q + 1)))?;
            match self.coupling {
                CouplingKind::Biregular => {
                    if self.l[q] > self.n_g {
                        return Err(Error::param(format!(
                            "bit {}: coupling valency {} exceeds n_g = {}",
                            q + 1,
                            self.l[q],
                            self.n_g
                        )));
                    }
                }
                CouplingKind::Symmetric => {
                    if self.l[q] > 0 {
                        check_regular(self.n_g, self.l[q]).map_err(|e| {
                            Error::param(format!("bit {}: symmetric coupling: {e}", q + 1))
                        })?;
                    }
                }
            }
        }
        self.n_tot()?;
        Ok(())
    }

    /// Nodes of one single-bit resource, `2 n_g`.
    pub fn bit_dim(&self) -> usize {
        2 * self.n_g
    }

    /// Total dimension `(2 n_g)^n_ql`.
    pub fn n_tot(&self) -> Result<usize> {
        u32::try_from(self.n_ql)
            .ok()
            .and_then(|e| self.bit_dim().checked_pow(e))
            .ok_or_else(|| Error::param("total dimension overflows"))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: ResourceSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_reader<R: Read>(r: R) -> Result<Self> {
        let spec: ResourceSpec = serde_json::from_reader(r)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn check_regular(n: usize, k: usize) -> Result<()> {
    if k == 0 || k >= n {
        return Err(Error::param(format!(
            "valency {k} outside 1..={} for {n} nodes",
            n.saturating_sub(1)
        )));
    }
    if !(n * k).is_multiple_of(2) {
        return Err(Error::param(format!(
            "no {k}-regular graph on {n} nodes: n*k is odd"
        )));
    }
    Ok(())
}

/// Edge set of a simple `d`-regular graph on `n` nodes, by sequential pairing
/// of half-edges: each step joins a uniformly chosen pair among the pairs that
/// keep the graph simple, and the whole pairing restarts on a dead end.
fn pairing_edges<R: Rng + ?Sized>(n: usize, d: usize, rng: &mut R) -> Result<Vec<bool>> {
    let mut adj = vec![false; n * n];
    if d == 0 {
        return Ok(adj);
    }
    'restart: for _ in 0..MAX_RESTARTS {
        adj.iter_mut().for_each(|a| *a = false);
        let mut points: Vec<usize> = (0..n).flat_map(|v| std::iter::repeat_n(v, d)).collect();
        while !points.is_empty() {
            let p = points.len();
            let suitable = |i: usize, j: usize, adj: &[bool]| {
                let (a, b) = (points[i], points[j]);
                a != b && !adj[a * n + b]
            };
            let mut chosen = None;
            for _ in 0..(64 + p) {
                let i = rng.gen_range(0..p);
                let mut j = rng.gen_range(0..p - 1);
                if j >= i {
                    j += 1;
                }
                if suitable(i, j, &adj) {
                    chosen = Some((i, j));
                    break;
                }
            }
            if chosen.is_none() {
                let all: Vec<(usize, usize)> = (0..p)
                    .flat_map(|i| ((i + 1)..p).map(move |j| (i, j)))
                    .filter(|&(i, j)| suitable(i, j, &adj))
                    .collect();
                if all.is_empty() {
                    continue 'restart;
                }
                chosen = Some(all[rng.gen_range(0..all.len())]);
            }
            let (i, j) = chosen.expect("pair chosen");
            let (a, b) = (points[i], points[j]);
            adj[a * n + b] = true;
            adj[b * n + a] = true;
            let (hi, lo) = if i > j { (i, j) } else { (j, i) };
            points.swap_remove(hi);
            points.swap_remove(lo);
        }
        return Ok(adj);
    }
    Err(Error::Sampling(format!(
        "no simple {d}-regular graph on {n} nodes after {MAX_RESTARTS} restarts"
    )))
}

/// Samples a simple `k`-regular graph on `n` nodes.
///
/// Graphs with `k > (n - 1)/2` are drawn as complements of
/// `(n - 1 - k)`-regular graphs; complementation maps the uniform measure to
/// the uniform measure.
pub fn sample_regular_graph<R: Rng + ?Sized>(
    n: usize,
    k: usize,
    rng: &mut R,
) -> Result<HermitianMatrix> {
    check_regular(n, k)?;
    let complement = 2 * k > n - 1;
    let d = if complement { n - 1 - k } else { k };
    let adj = pairing_edges(n, d, rng)?;
    let m = DMatrix::from_fn(n, n, |i, j| {
        let e = adj[i * n + j];
        let on = if complement { i != j && !e } else { e };
        if on {
            1.0
        } else {
            0.0
        }
    });
    HermitianMatrix::from_real(m, MatrixTag::Adjacency)
}

/// `n x n` 0/1 block with constant row and column sums, coupling the two
/// subgraphs of a single-bit resource.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingBlock(DMatrix<f64>);

impl CouplingBlock {
    pub fn from_matrix(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::param("coupling block must be square"));
        }
        if m.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::param("coupling block entries must be 0 or 1"));
        }
        Ok(CouplingBlock(m))
    }

    pub fn zeros(n: usize) -> Self {
        CouplingBlock(DMatrix::zeros(n, n))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.0.row_iter().map(|r| r.sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        self.0.column_iter().map(|c| c.sum()).collect()
    }
}

/// Adds one permutation avoiding the occupied entries of `c`, picking each
/// row's column uniformly among the free ones in a random row order.
fn add_permutation<R: Rng + ?Sized>(c: &mut DMatrix<f64>, rng: &mut R) -> bool {
    let n = c.nrows();
    let mut rows: Vec<usize> = (0..n).collect();
    let mut free = Vec::with_capacity(n);
    'attempt: for _ in 0..PERMUTATION_ATTEMPTS {
        rows.shuffle(rng);
        let mut used = vec![false; n];
        let mut picks = vec![0usize; n];
        for &r in &rows {
            free.clear();
            free.extend((0..n).filter(|&col| !used[col] && c[(r, col)] == 0.0));
            if free.is_empty() {
                continue 'attempt;
            }
            let col = free[rng.gen_range(0..free.len())];
            used[col] = true;
            picks[r] = col;
        }
        for (r, &col) in picks.iter().enumerate() {
            c[(r, col)] = 1.0;
        }
        return true;
    }
    false
}

/// Samples an `l`-biregular bipartite coupling between two `n`-node subgraphs
/// as a superposition of `l` non-overlapping permutation matrices.
///
/// `l = 0` gives the zero block; blocks with `l > n/2` are complements of
/// `(n - l)`-biregular ones.
pub fn sample_biregular_coupling<R: Rng + ?Sized>(
    n: usize,
    l: usize,
    rng: &mut R,
) -> Result<CouplingBlock> {
    if n == 0 {
        return Err(Error::param("coupling block needs at least one node"));
    }
    if l > n {
        return Err(Error::param(format!(
            "coupling valency {l} exceeds the {n} nodes of the opposite subgraph"
        )));
    }
    if 2 * l > n {
        let inner = sample_biregular_coupling(n, n - l, rng)?;
        return Ok(CouplingBlock(inner.0.map(|v| 1.0 - v)));
    }
    'restart: for _ in 0..MAX_RESTARTS {
        let mut c = DMatrix::zeros(n, n);
        for _ in 0..l {
            if !add_permutation(&mut c, rng) {
                continue 'restart;
            }
        }
        return Ok(CouplingBlock(c));
    }
    Err(Error::Sampling(format!(
        "no {l}-biregular coupling on {n}+{n} nodes after {MAX_RESTARTS} restarts"
    )))
}

/// Samples a symmetric coupling block (simple `l`-regular adjacency).
pub fn sample_symmetric_coupling<R: Rng + ?Sized>(
    n: usize,
    l: usize,
    rng: &mut R,
) -> Result<CouplingBlock> {
    if l == 0 {
        return Ok(CouplingBlock::zeros(n));
    }
    let g = sample_regular_graph(n, l, rng)?;
    Ok(CouplingBlock(g.real().expect("adjacency is real").clone()))
}

/// Assembles `[[A1, -C], [-C^T, A2]]`.
pub fn build_single_resource(
    a1: &HermitianMatrix,
    a2: &HermitianMatrix,
    c: &CouplingBlock,
) -> Result<HermitianMatrix> {
    let n = a1.dim();
    if a2.dim() != n || c.dim() != n {
        return Err(Error::param(format!(
            "block dimensions differ: A1 {}, A2 {}, C {}",
            n,
            a2.dim(),
            c.dim()
        )));
    }
    let (r1, r2) = match (a1.real(), a2.real()) {
        (Some(r1), Some(r2)) => (r1, r2),
        _ => return Err(Error::param("diagonal blocks must be real symmetric")),
    };
    let cm = c.matrix();
    let m = DMatrix::from_fn(2 * n, 2 * n, |i, j| match (i < n, j < n) {
        (true, true) => r1[(i, j)],
        (true, false) => -cm[(i, j - n)],
        (false, true) => -cm[(j, i - n)],
        (false, false) => r2[(i - n, j - n)],
    });
    HermitianMatrix::from_real(m, MatrixTag::Resource)
}

/// Bytes needed to hold a dense `dim x dim` matrix of `elem_bytes`-sized
/// entries.
pub fn dense_bytes(dim: usize, elem_bytes: u64) -> u64 {
    (dim as u64).saturating_mul(dim as u64).saturating_mul(elem_bytes)
}

/// Errors when a dense `dim x dim` allocation would exceed `cap`.
pub fn check_capacity(what: &str, dim: usize, elem_bytes: u64, cap: u64) -> Result<()> {
    let required = dense_bytes(dim, elem_bytes);
    if required > cap {
        return Err(Error::Capacity {
            what: what.to_string(),
            required_bytes: required,
            cap_bytes: cap,
        });
    }
    Ok(())
}

/// Kronecker sum `sum_q 1 x ... x R_q x ... x 1` of square Hermitian factors,
/// first factor most significant. Refuses allocations above `memory_cap`
/// bytes.
pub fn cartesian_product(
    factors: &[HermitianMatrix],
    memory_cap: u64,
) -> Result<HermitianMatrix> {
    if factors.is_empty() {
        return Err(Error::param("cartesian product needs at least one factor"));
    }
    if factors.len() == 1 {
        return Ok(factors[0].clone().with_tag(MatrixTag::Resource));
    }
    let dims: Vec<usize> = factors.iter().map(HermitianMatrix::dim).collect();
    let total = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::param("product dimension overflows"))?;
    let all_real = factors.iter().all(HermitianMatrix::is_real);
    let elem = if all_real { 8 } else { 16 };
    check_capacity("cartesian product", total, elem, memory_cap)?;

    // Entry (a, r, b), (a, s, b) of 1_left x R x 1_right is R[r, s].
    let strides = |q: usize| -> (usize, usize) {
        let left: usize = dims[..q].iter().product();
        let right: usize = dims[q + 1..].iter().product();
        (left, right)
    };
    if all_real {
        let mut m = DMatrix::<f64>::zeros(total, total);
        for (q, f) in factors.iter().enumerate() {
            let r = f.real().expect("checked real");
            let d = dims[q];
            let (left, right) = strides(q);
            for a in 0..left {
                for i in 0..d {
                    for j in 0..d {
                        let v = r[(i, j)];
                        if v == 0.0 {
                            continue;
                        }
                        let row0 = (a * d + i) * right;
                        let col0 = (a * d + j) * right;
                        for b in 0..right {
                            m[(row0 + b, col0 + b)] += v;
                        }
                    }
                }
            }
        }
        Ok(HermitianMatrix::symmetrized_real(m, MatrixTag::Resource))
    } else {
        let mut m = DMatrix::<crate::C64>::zeros(total, total);
        for (q, f) in factors.iter().enumerate() {
            let d = dims[q];
            let (left, right) = strides(q);
            for a in 0..left {
                for i in 0..d {
                    for j in 0..d {
                        let v = f.get(i, j);
                        let row0 = (a * d + i) * right;
                        let col0 = (a * d + j) * right;
                        for b in 0..right {
                            m[(row0 + b, col0 + b)] += v;
                        }
                    }
                }
            }
        }
        Ok(HermitianMatrix::symmetrized_complex(m, MatrixTag::Resource))
    }
}

/// Sampled blocks of one QL bit.
#[derive(Debug, Clone)]
pub struct BitResource {
    pub a1: HermitianMatrix,
    pub a2: HermitianMatrix,
    pub coupling: CouplingBlock,
    pub resource: HermitianMatrix,
    pub k: usize,
    pub l: usize,
}

/// All single-bit resources of one sample of a [`ResourceSpec`].
#[derive(Debug, Clone)]
pub struct SampledResource {
    pub spec: ResourceSpec,
    pub sample: u64,
    pub bits: Vec<BitResource>,
}

impl SampledResource {
    pub fn factors(&self) -> Vec<HermitianMatrix> {
        self.bits.iter().map(|b| b.resource.clone()).collect()
    }

    /// Ground-state resource: the Cartesian product of all bits.
    pub fn ground_resource(&self, memory_cap: u64) -> Result<HermitianMatrix> {
        cartesian_product(&self.factors(), memory_cap)
    }
}

/// Samples the single-bit resources of `spec` for sample index `sample`.
/// Each sample index owns an independent stream, so samples can be drawn in
/// any order or concurrently.
pub fn sample_resource(spec: &ResourceSpec, sample: u64) -> Result<SampledResource> {
    spec.validate()?;
    let mut rng = sample_stream(spec.seed, sample, Purpose::Graphs);
    let n = spec.n_g;
    let mut bits = Vec::with_capacity(spec.n_ql);
    for q in 0..spec.n_ql {
        let (k, l) = (spec.k[q], spec.l[q]);
        let a1 = sample_regular_graph(n, k, &mut rng)?;
        let a2 = sample_regular_graph(n, k, &mut rng)?;
        let coupling = match spec.coupling {
            CouplingKind::Biregular => sample_biregular_coupling(n, l, &mut rng)?,
            CouplingKind::Symmetric => sample_symmetric_coupling(n, l, &mut rng)?,
        };
        let resource = build_single_resource(&a1, &a2, &coupling)?;
        bits.push(BitResource {
            a1,
            a2,
            coupling,
            resource,
            k,
            l,
        });
    }
    Ok(SampledResource {
        spec: spec.clone(),
        sample,
        bits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use nalgebra::DVector;
    use std::collections::BTreeMap;

    fn row_sums(h: &HermitianMatrix) -> Vec<f64> {
        h.real().unwrap().row_iter().map(|r| r.sum()).collect()
    }

    fn assert_regular(h: &HermitianMatrix, k: usize) {
        let m = h.real().unwrap();
        assert_eq!(m, &m.transpose());
        for i in 0..m.nrows() {
            assert_eq!(m[(i, i)], 0.0);
        }
        assert!(row_sums(h).iter().all(|&s| s == k as f64));
    }

    #[test]
    fn four_nodes_two_regular_is_a_four_cycle() {
        for seed in 0..20 {
            let g = sample_regular_graph(4, 2, &mut stream(seed, 0)).unwrap();
            assert_regular(&g, 2);
            // C4 has exactly one non-neighbour per node, and it is mutual.
            let m = g.real().unwrap();
            for i in 0..4 {
                let others: Vec<usize> = (0..4).filter(|&j| j != i && m[(i, j)] == 0.0).collect();
                assert_eq!(others.len(), 1);
                assert_eq!(m[(others[0], i)], 0.0);
            }
        }
    }

    #[test]
    fn triangle_is_complete_graph() {
        let g = sample_regular_graph(3, 2, &mut stream(1, 0)).unwrap();
        let expected = DMatrix::from_row_slice(3, 3, &[0., 1., 1., 1., 0., 1., 1., 1., 0.]);
        assert_eq!(g.real().unwrap(), &expected);
    }

    #[test]
    fn twelve_nodes_three_regular() {
        let g = sample_regular_graph(12, 3, &mut stream(7, 0)).unwrap();
        assert_regular(&g, 3);
    }

    #[test]
    fn dense_valencies_sample_quickly() {
        for (n, k) in [(16, 8), (16, 15), (32, 20), (12, 11)] {
            let g = sample_regular_graph(n, k, &mut stream(3, 1)).unwrap();
            assert_regular(&g, k);
        }
    }

    #[test]
    fn infeasible_parity_is_rejected() {
        assert!(matches!(
            sample_regular_graph(5, 3, &mut stream(0, 0)),
            Err(Error::Parameter(_))
        ));
        assert!(sample_regular_graph(4, 4, &mut stream(0, 0)).is_err());
        assert!(sample_regular_graph(4, 0, &mut stream(0, 0)).is_err());
    }

    #[test]
    fn degree_sequences_cover_all_cubic_graphs_on_six_nodes() {
        // The two cubic graphs on 6 labelled nodes, K_{3,3} (10 labellings)
        // and the prism (60 labellings), are told apart by triangle count.
        let mut counts = BTreeMap::new();
        let mut rng = stream(11, 0);
        for _ in 0..1000 {
            let g = sample_regular_graph(6, 3, &mut rng).unwrap();
            assert_regular(&g, 3);
            let m = g.real().unwrap();
            let triangles = (m * m * m).trace() / 6.0;
            *counts.entry(triangles as i64).or_insert(0) += 1;
        }
        assert_eq!(counts.keys().copied().collect::<Vec<_>>(), vec![0, 2]);
        let bipartite = counts[&0] as f64 / 1000.0;
        // Uniform sampling gives 10/70; allow sampling noise and pairing bias.
        assert!(bipartite > 0.07 && bipartite < 0.25, "K33 fraction {bipartite}");
    }

    #[test]
    fn coupling_extremes() {
        let all = sample_biregular_coupling(4, 4, &mut stream(0, 0)).unwrap();
        assert_eq!(all.matrix(), &DMatrix::from_element(4, 4, 1.0));
        let perm = sample_biregular_coupling(4, 1, &mut stream(0, 0)).unwrap();
        assert!(perm.row_sums().iter().all(|&s| s == 1.0));
        assert!(perm.col_sums().iter().all(|&s| s == 1.0));
        let zero = sample_biregular_coupling(4, 0, &mut stream(0, 0)).unwrap();
        assert_eq!(zero, CouplingBlock::zeros(4));
        assert!(sample_biregular_coupling(4, 5, &mut stream(0, 0)).is_err());
    }

    #[test]
    fn coupling_marginals() {
        for (n, l) in [(12, 4), (16, 8), (16, 12), (16, 2), (7, 3)] {
            let c = sample_biregular_coupling(n, l, &mut stream(7, 0)).unwrap();
            assert!(c.row_sums().iter().all(|&s| s == l as f64), "{n} {l}");
            assert!(c.col_sums().iter().all(|&s| s == l as f64), "{n} {l}");
        }
    }

    #[test]
    fn single_resource_emergent_eigenvectors() {
        let mut rng = stream(5, 0);
        let a1 = sample_regular_graph(4, 2, &mut rng).unwrap();
        let a2 = sample_regular_graph(4, 2, &mut rng).unwrap();
        let c = sample_biregular_coupling(4, 1, &mut rng).unwrap();
        let r = build_single_resource(&a1, &a2, &c).unwrap();
        let down = DVector::from_fn(8, |i, _| if i < 4 { 1.0 } else { -1.0 } / 8f64.sqrt());
        let up = DVector::from_element(8, 1.0 / 8f64.sqrt());
        let m = r.real().unwrap();
        assert!((m * &down - &down * 3.0).norm() <= 1e-12);
        assert!((m * &up - &up * 1.0).norm() <= 1e-12);
    }

    #[test]
    fn single_resource_rejects_mismatched_blocks() {
        let mut rng = stream(5, 0);
        let a1 = sample_regular_graph(4, 2, &mut rng).unwrap();
        let a2 = sample_regular_graph(6, 2, &mut rng).unwrap();
        let c = CouplingBlock::zeros(4);
        assert!(matches!(
            build_single_resource(&a1, &a2, &c),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn product_of_one_factor_is_identity_map() {
        let spec = ResourceSpec::uniform(4, 1, 2, 1, 3);
        let s = sample_resource(&spec, 0).unwrap();
        let p = s.ground_resource(DEFAULT_MEMORY_CAP).unwrap();
        assert_eq!(p.real(), s.bits[0].resource.real());
    }

    #[test]
    fn product_matches_explicit_kronecker_sum() {
        let spec = ResourceSpec::uniform(3, 2, 2, 1, 9);
        let s = sample_resource(&spec, 0).unwrap();
        let r1 = s.bits[0].resource.real().unwrap().clone();
        let r2 = s.bits[1].resource.real().unwrap().clone();
        let id = DMatrix::<f64>::identity(6, 6);
        let expected = r1.kronecker(&id) + id.kronecker(&r2);
        let p = s.ground_resource(DEFAULT_MEMORY_CAP).unwrap();
        assert_eq!(p.real().unwrap(), &expected);
    }

    #[test]
    fn product_refuses_oversized_allocation() {
        let spec = ResourceSpec::uniform(4, 2, 2, 1, 0);
        let s = sample_resource(&spec, 0).unwrap();
        match s.ground_resource(1024) {
            Err(Error::Capacity {
                required_bytes, ..
            }) => assert_eq!(required_bytes, 64 * 64 * 8),
            other => panic!("expected capacity error, got {other:?}"),
        }
    }

    #[test]
    fn replay_is_bit_identical() {
        let spec = ResourceSpec::uniform(12, 2, 3, 2, 42);
        let a = sample_resource(&spec, 4).unwrap();
        let b = sample_resource(&spec, 4).unwrap();
        let c = sample_resource(&spec, 5).unwrap();
        assert_eq!(a.factors(), b.factors());
        assert_ne!(a.factors(), c.factors());
    }

    #[test]
    fn spec_json_round_trip_and_validation() {
        let text = r#"{"n_g": 16, "n_ql": 2, "k": [8, 8], "l": [4, 4], "seed": 7}"#;
        let spec = ResourceSpec::from_json(text).unwrap();
        assert_eq!(spec, ResourceSpec::uniform(16, 2, 8, 4, 7));
        assert_eq!(spec.n_tot().unwrap(), 1024);
        let back = ResourceSpec::from_json(&spec.to_json().unwrap()).unwrap();
        assert_eq!(back, spec);
        assert!(!spec.to_json().unwrap().contains("coupling"));

        let bad = r#"{"n_g": 5, "n_ql": 1, "k": [3], "l": [1], "seed": 0}"#;
        assert!(ResourceSpec::from_json(bad).is_err());
        let short = r#"{"n_g": 6, "n_ql": 2, "k": [3], "l": [1], "seed": 0}"#;
        assert!(ResourceSpec::from_json(short).is_err());
    }

    #[test]
    fn symmetric_coupling_option() {
        let mut spec = ResourceSpec::uniform(8, 1, 3, 2, 1);
        spec.coupling = CouplingKind::Symmetric;
        let s = sample_resource(&spec, 0).unwrap();
        let c = s.bits[0].coupling.matrix();
        assert_eq!(c, &c.transpose());
        assert!(s.bits[0].coupling.row_sums().iter().all(|&v| v == 2.0));
    }
}
