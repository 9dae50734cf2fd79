//! Computational-basis map, QL gates, projectors and circuits.
//!
//! Index layout: the global index is a row-major Kronecker index over bits
//! with bit 1 most significant, and within bit `q` the local index is
//! `s * n_g + j` where `s` selects the block. Every operator here acts only on
//! the block indices `s`, so it is applied matrix-free in `O(N_tot)` per gate.
//!
//! The per-bit computational-basis factor is `W ⊗ 1` with
//! `W = [[1, -1], [1, 1]] / √2`, which sends `Ψ_↓` to the first-block uniform
//! vector and `Ψ_↑` to the second. A gate with computational-basis matrix `V`
//! acts on block indices as `Wᵀ V W`.

use std::ops::{Add, Mul};
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use num_traits::Zero;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{HermitianMatrix, MatrixTag, C64};
use crate::netgraph::{check_capacity, ResourceSpec};
use crate::spectra::Spectrum;

const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Per-bit computational-basis factor on block indices, row-major.
pub const W: [f64; 4] = [FRAC_1_SQRT_2, -FRAC_1_SQRT_2, FRAC_1_SQRT_2, FRAC_1_SQRT_2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GateKind {
    H,
    X,
    Z,
    #[allow(clippy::upper_case_acronyms)]
    CNOT,
}

impl GateKind {
    pub fn arity(self) -> usize {
        match self {
            GateKind::CNOT => 2,
            _ => 1,
        }
    }

    /// Standard computational-basis matrix, row-major.
    pub fn computational_matrix(self) -> Vec<f64> {
        let h = FRAC_1_SQRT_2;
        match self {
            GateKind::H => vec![h, h, h, -h],
            GateKind::X => vec![0., 1., 1., 0.],
            GateKind::Z => vec![1., 0., 0., -1.],
            GateKind::CNOT => vec![
                1., 0., 0., 0., //
                0., 1., 0., 0., //
                0., 0., 0., 1., //
                0., 0., 1., 0.,
            ],
        }
    }

    fn parse(name: &str) -> Result<Self> {
        match name {
            "H" => Ok(GateKind::H),
            "X" => Ok(GateKind::X),
            "Z" => Ok(GateKind::Z),
            "CNOT" => Ok(GateKind::CNOT),
            other => Err(Error::param(format!("unsupported gate kind {other:?}"))),
        }
    }
}

/// A gate and its 1-based target bits; `(control, target)` for CNOT.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateOp {
    pub gate: GateKind,
    pub targets: Vec<usize>,
}

impl GateOp {
    pub fn new(gate: GateKind, targets: Vec<usize>) -> Self {
        GateOp { gate, targets }
    }

    pub fn validate(&self, n_ql: usize) -> Result<()> {
        if self.targets.len() != self.gate.arity() {
            return Err(Error::param(format!(
                "{:?} takes {} target(s), got {}",
                self.gate,
                self.gate.arity(),
                self.targets.len()
            )));
        }
        if let Some(&t) = self.targets.iter().find(|&&t| t == 0 || t > n_ql) {
            return Err(Error::param(format!("target bit {t} outside 1..={n_ql}")));
        }
        if self.gate == GateKind::CNOT && self.targets[0] == self.targets[1] {
            return Err(Error::param("CNOT control and target must differ"));
        }
        Ok(())
    }

    /// The gate in the block-index basis: `Wᵀ V W` per bit.
    fn local(&self) -> LocalOp {
        let v = self.gate.computational_matrix();
        let bits: Vec<usize> = self.targets.iter().map(|t| t - 1).collect();
        let w = w_power(bits.len());
        let wt = w.transpose();
        let dim = w.nrows();
        let m = wt * DMatrix::from_row_slice(dim, dim, &v) * w;
        LocalOp::new(bits, &m)
    }
}

fn w_power(bits: usize) -> DMatrix<f64> {
    let w = DMatrix::from_row_slice(2, 2, &W);
    (1..bits).fold(w.clone(), |acc, _| acc.kronecker(&w))
}

/// Sizes needed to address block indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub n_g: usize,
    pub n_ql: usize,
}

impl Layout {
    pub fn new(n_g: usize, n_ql: usize) -> Result<Self> {
        if n_g == 0 || n_ql == 0 {
            return Err(Error::param("layout needs n_g >= 1 and n_ql >= 1"));
        }
        (2 * n_g)
            .checked_pow(n_ql as u32)
            .ok_or_else(|| Error::param("N_tot overflows"))?;
        Ok(Layout { n_g, n_ql })
    }

    pub fn of(spec: &ResourceSpec) -> Result<Self> {
        spec.validate()?;
        Layout::new(spec.n_g, spec.n_ql)
    }

    pub fn n_tot(&self) -> usize {
        (2 * self.n_g).pow(self.n_ql as u32)
    }

    /// Index distance between `s = 0` and `s = 1` of bit `q` (0-based).
    pub fn stride(&self, q: usize) -> usize {
        self.n_g * (2 * self.n_g).pow((self.n_ql - 1 - q) as u32)
    }

    /// Block index `s` of bit `q` (0-based) at global index `i`.
    pub fn block_of(&self, i: usize, q: usize) -> usize {
        (i / self.stride(q)) % 2
    }
}

/// A real operator on the block indices of one or two bits.
#[derive(Debug, Clone, PartialEq)]
struct LocalOp {
    bits: Vec<usize>,
    m: Vec<f64>,
}

impl LocalOp {
    fn new(bits: Vec<usize>, m: &DMatrix<f64>) -> Self {
        let d = m.nrows();
        LocalOp {
            m: (0..d * d).map(|k| m[(k / d, k % d)]).collect(),
            bits,
        }
    }

    fn transposed(&self) -> LocalOp {
        let d = 1 << self.bits.len();
        LocalOp {
            bits: self.bits.clone(),
            m: (0..d * d).map(|k| self.m[(k % d) * d + k / d]).collect(),
        }
    }

    fn apply<T>(&self, layout: &Layout, data: &mut [T])
    where
        T: Copy + Zero + Add<Output = T> + Mul<f64, Output = T>,
    {
        let strides: Vec<usize> = self.bits.iter().map(|&q| layout.stride(q)).collect();
        let d = 1usize << self.bits.len();
        let offsets: Vec<usize> = (0..d)
            .map(|local| {
                strides
                    .iter()
                    .enumerate()
                    .map(|(b, s)| ((local >> (strides.len() - 1 - b)) & 1) * s)
                    .sum()
            })
            .collect();
        let mut buf = [T::zero(); 4];
        for i in 0..data.len() {
            if self.bits.iter().any(|&q| layout.block_of(i, q) != 0) {
                continue;
            }
            for (slot, off) in buf.iter_mut().zip(&offsets) {
                *slot = data[i + off];
            }
            for (r, off) in offsets.iter().enumerate() {
                let mut acc = T::zero();
                for c in 0..d {
                    let coef = self.m[r * d + c];
                    if coef != 0.0 {
                        acc = acc + buf[c] * coef;
                    }
                }
                data[i + off] = acc;
            }
        }
    }

    fn dense(&self, layout: &Layout, memory_cap: u64) -> Result<DMatrix<f64>> {
        let n = layout.n_tot();
        check_capacity("dense operator", n, 8, memory_cap)?;
        let mut m = DMatrix::<f64>::identity(n, n);
        apply_columns(&mut m, |col| self.apply(layout, col));
        Ok(m)
    }
}

fn apply_columns<T: nalgebra::Scalar + Send>(m: &mut DMatrix<T>, f: impl Fn(&mut [T]) + Sync) {
    let rows = m.nrows();
    if rows == 0 {
        return;
    }
    m.as_mut_slice().par_chunks_mut(rows).for_each(&f);
}

/// Applies `U_cb` in place.
pub fn apply_u_cb<T>(layout: &Layout, data: &mut [T])
where
    T: Copy + Zero + Add<Output = T> + Mul<f64, Output = T>,
{
    let w = DMatrix::from_row_slice(2, 2, &W);
    for q in 0..layout.n_ql {
        LocalOp::new(vec![q], &w).apply(layout, data);
    }
}

/// Applies `U_cb⁻¹ = U_cbᵀ` in place.
pub fn apply_u_cb_inverse<T>(layout: &Layout, data: &mut [T])
where
    T: Copy + Zero + Add<Output = T> + Mul<f64, Output = T>,
{
    let wt = DMatrix::from_row_slice(2, 2, &W).transpose();
    for q in 0..layout.n_ql {
        LocalOp::new(vec![q], &wt).apply(layout, data);
    }
}

/// Dense computational-basis map.
pub fn u_cb(spec: &ResourceSpec, memory_cap: u64) -> Result<DMatrix<f64>> {
    let layout = Layout::of(spec)?;
    let n = layout.n_tot();
    check_capacity("U_cb", n, 8, memory_cap)?;
    let mut m = DMatrix::<f64>::identity(n, n);
    apply_columns(&mut m, |col| apply_u_cb(&layout, col));
    Ok(m)
}

/// Dense unitary of a single gate.
pub fn gate_unitary(op: &GateOp, spec: &ResourceSpec, memory_cap: u64) -> Result<DMatrix<f64>> {
    let layout = Layout::of(spec)?;
    op.validate(layout.n_ql)?;
    op.local().dense(&layout, memory_cap)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spin {
    Down,
    Up,
}

impl Spin {
    fn sign(self) -> f64 {
        match self {
            Spin::Down => 1.0,
            Spin::Up => -1.0,
        }
    }
}

fn projector_local(sigma: Spin, q: usize) -> LocalOp {
    // (1 ± U_Z)/2 on block indices, with + selecting Ψ_↓.
    let z = GateOp::new(GateKind::Z, vec![q + 1]).local();
    let s = sigma.sign();
    let m = DMatrix::from_fn(2, 2, |r, c| {
        0.5 * (if r == c { 1.0 } else { 0.0 } + s * z.m[r * 2 + c])
    });
    LocalOp::new(vec![q], &m)
}

/// Projector onto the states whose bit `q` (1-based) is `Ψ_σ`.
pub fn projector(sigma: Spin, spec: &ResourceSpec, q: usize, memory_cap: u64) -> Result<HermitianMatrix> {
    let layout = Layout::of(spec)?;
    if q == 0 || q > layout.n_ql {
        return Err(Error::param(format!("bit {q} outside 1..={}", layout.n_ql)));
    }
    let m = projector_local(sigma, q - 1).dense(&layout, memory_cap)?;
    Ok(HermitianMatrix::symmetrized_real(m, MatrixTag::Generator))
}

/// Applies the projector matrix-free.
pub fn apply_projector<T>(sigma: Spin, layout: &Layout, q: usize, data: &mut [T])
where
    T: Copy + Zero + Add<Output = T> + Mul<f64, Output = T>,
{
    projector_local(sigma, q - 1).apply(layout, data);
}

/// Single-bit emergent eigenvector `Ψ_σ` of length `2 n_g`.
pub fn single_bit_state(n_g: usize, sigma: Spin) -> DVector<f64> {
    let a = 1.0 / ((2 * n_g) as f64).sqrt();
    DVector::from_fn(2 * n_g, |i, _| if i < n_g { a } else { -sigma.sign() * a })
}

/// Product emergent state `Ψ_{σ_1} ⊗ … ⊗ Ψ_{σ_N}`.
pub fn emergent_basis_state(spec: &ResourceSpec, spins: &[Spin]) -> Result<DVector<f64>> {
    let layout = Layout::of(spec)?;
    if spins.len() != layout.n_ql {
        return Err(Error::param(format!(
            "expected {} spins, got {}",
            layout.n_ql,
            spins.len()
        )));
    }
    let factors: Vec<DVector<f64>> = spins.iter().map(|&s| single_bit_state(spec.n_g, s)).collect();
    Ok(crate::linalg::kron_vectors(&factors))
}

/// Ordered gate sequence acting on a fixed layout; the first op acts first.
#[derive(Debug)]
pub struct Circuit {
    ops: Vec<GateOp>,
    layout: Layout,
    locals: Vec<LocalOp>,
    unitary: OnceLock<DMatrix<f64>>,
}

impl Clone for Circuit {
    fn clone(&self) -> Self {
        Circuit {
            ops: self.ops.clone(),
            layout: self.layout,
            locals: self.locals.clone(),
            unitary: self.unitary.clone(),
        }
    }
}

impl PartialEq for Circuit {
    fn eq(&self, other: &Self) -> bool {
        self.ops == other.ops && self.layout == other.layout
    }
}

#[derive(Deserialize)]
struct RawOp {
    gate: String,
    targets: Vec<usize>,
}

impl Circuit {
    pub fn new(spec: &ResourceSpec, ops: Vec<GateOp>) -> Result<Self> {
        Circuit::with_layout(Layout::of(spec)?, ops)
    }

    pub fn with_layout(layout: Layout, ops: Vec<GateOp>) -> Result<Self> {
        for op in &ops {
            op.validate(layout.n_ql)?;
        }
        let locals = ops.iter().map(GateOp::local).collect();
        Ok(Circuit {
            ops,
            layout,
            locals,
            unitary: OnceLock::new(),
        })
    }

    pub fn identity(spec: &ResourceSpec) -> Result<Self> {
        Circuit::new(spec, Vec::new())
    }

    /// Parses a JSON gate list such as
    /// `[{"gate":"H","targets":[1]},{"gate":"CNOT","targets":[1,2]}]`.
    pub fn parse_ops(text: &str) -> Result<Vec<GateOp>> {
        let raw: Vec<RawOp> = serde_json::from_str(text)?;
        ops_from_raw(raw)
    }

    pub fn ops_from_value(value: &serde_json::Value) -> Result<Vec<GateOp>> {
        let raw: Vec<RawOp> = serde_json::from_value(value.clone())?;
        ops_from_raw(raw)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.ops)?)
    }

    pub fn ops(&self) -> &[GateOp] {
        &self.ops
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn is_identity(&self) -> bool {
        self.ops.is_empty()
    }

    /// `x ← U_𝒈 x`.
    pub fn apply<T>(&self, data: &mut [T])
    where
        T: Copy + Zero + Add<Output = T> + Mul<f64, Output = T>,
    {
        debug_assert_eq!(data.len(), self.layout.n_tot());
        for op in &self.locals {
            op.apply(&self.layout, data);
        }
    }

    /// `x ← U_𝒈† x`.
    pub fn apply_adjoint<T>(&self, data: &mut [T])
    where
        T: Copy + Zero + Add<Output = T> + Mul<f64, Output = T>,
    {
        for op in self.locals.iter().rev() {
            op.transposed().apply(&self.layout, data);
        }
    }

    pub fn apply_vec(&self, x: &DVector<C64>) -> DVector<C64> {
        let mut y = x.clone();
        self.apply(y.as_mut_slice());
        y
    }

    /// Applies `U_𝒈` to every column.
    pub fn apply_to_columns<T>(&self, m: &DMatrix<T>) -> DMatrix<T>
    where
        T: nalgebra::Scalar + Copy + Send + Sync + Zero + Add<Output = T> + Mul<f64, Output = T>,
    {
        let mut out = m.clone();
        apply_columns(&mut out, |col| self.apply(col));
        out
    }

    /// Cached dense unitary `U_{g_M} … U_{g_1}`.
    pub fn unitary(&self, memory_cap: u64) -> Result<&DMatrix<f64>> {
        if let Some(u) = self.unitary.get() {
            return Ok(u);
        }
        let n = self.layout.n_tot();
        check_capacity("circuit unitary", n, 8, memory_cap)?;
        let mut m = DMatrix::<f64>::identity(n, n);
        apply_columns(&mut m, |col| self.apply(col));
        Ok(self.unitary.get_or_init(|| m))
    }
}

fn ops_from_raw(raw: Vec<RawOp>) -> Result<Vec<GateOp>> {
    raw.into_iter()
        .map(|r| Ok(GateOp::new(GateKind::parse(&r.gate)?, r.targets)))
        .collect()
}

/// The Bell circuit: `H` on bit 1, then `CNOT(1, 2)`.
pub fn bell_circuit(spec: &ResourceSpec) -> Result<Circuit> {
    if spec.n_ql != 2 {
        return Err(Error::param(format!("the Bell circuit needs N_QL = 2, got {}", spec.n_ql)));
    }
    Circuit::new(
        spec,
        vec![
            GateOp::new(GateKind::H, vec![1]),
            GateOp::new(GateKind::CNOT, vec![1, 2]),
        ],
    )
}

/// Uniformly random circuit of `len` gates over `{H, X, Z, CNOT}`.
pub fn random_circuit<R: Rng + ?Sized>(layout: Layout, len: usize, rng: &mut R) -> Result<Circuit> {
    let kinds: &[GateKind] = if layout.n_ql >= 2 {
        &[GateKind::H, GateKind::X, GateKind::Z, GateKind::CNOT]
    } else {
        &[GateKind::H, GateKind::X, GateKind::Z]
    };
    let ops = (0..len)
        .map(|_| {
            let kind = kinds[rng.gen_range(0..kinds.len())];
            let a = rng.gen_range(1..=layout.n_ql);
            let targets = if kind == GateKind::CNOT {
                let mut b = rng.gen_range(1..layout.n_ql);
                if b >= a {
                    b += 1;
                }
                vec![a, b]
            } else {
                vec![a]
            };
            GateOp::new(kind, targets)
        })
        .collect();
    Circuit::with_layout(layout, ops)
}

/// `ℛ_𝒈 = U_𝒈 ℛ U_𝒈†`.
pub fn conjugate_resource(r: &HermitianMatrix, circuit: &Circuit) -> Result<HermitianMatrix> {
    if r.dim() != circuit.layout().n_tot() {
        return Err(Error::param(format!(
            "resource dimension {} does not match circuit dimension {}",
            r.dim(),
            circuit.layout().n_tot()
        )));
    }
    // U R Uᵀ = (U (U R)ᵀ)ᵀ for real U.
    let out = match r.real() {
        Some(m) => {
            let left = circuit.apply_to_columns(m).transpose();
            let both = circuit.apply_to_columns(&left).transpose();
            HermitianMatrix::symmetrized_real(both, MatrixTag::Resource)
        }
        None => {
            let left = circuit.apply_to_columns(&r.to_complex()).transpose();
            let both = circuit.apply_to_columns(&left).transpose();
            HermitianMatrix::symmetrized_complex(both, MatrixTag::Resource)
        }
    };
    Ok(out)
}

/// Spectrum of `ℛ_𝒈` from that of `ℛ`: eigenvalues unchanged, eigenvectors
/// `U_𝒈 Φ`.
pub fn transform_spectrum(spectrum: &Spectrum, circuit: &Circuit) -> Result<Spectrum> {
    if spectrum.source_dim() != circuit.layout().n_tot() {
        return Err(Error::param("spectrum dimension does not match circuit"));
    }
    if circuit.is_identity() {
        return Ok(spectrum.clone());
    }
    Ok(spectrum.map_eigenvectors(|v| circuit.apply_to_columns(v)))
}
