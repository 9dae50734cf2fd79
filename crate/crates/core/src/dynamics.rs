//! Complex-embedded Kuramoto dynamics `ẋ = 𝒟x` with
//! `𝒟 = iω̄ + (K/N_tot) ℛ`.
//!
//! States are stored with a real log-magnitude factored out: the physical
//! state at time `t` is `exp(log_scale(t)) * state(t)`. Spectral propagation
//! divides out `exp(max_l (K/N_tot) λ_l t)`; direct integration renormalizes
//! after every step.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{fmt_f64, write_f64_records, BinarySidecar};
use crate::linalg::{kron_vectors, HermitianMatrix, C64};
use crate::netgraph::ResourceSpec;
use crate::spectra::{full_eigh, Spectrum};

/// Default step of the RK4 integrator.
pub const DEFAULT_DT: f64 = 1e-3;

/// Largest relative weight of `x0` outside a partial spectrum.
pub const DEFAULT_TRUNCATION_BOUND: f64 = 1e-6;

/// Entries smaller than this fraction of the largest modulus have no angle.
pub const ZERO_MODULUS_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelParams {
    /// Common oscillator frequency `ω̄`.
    pub omega_bar: f64,
    /// Global coupling `K`.
    pub coupling: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            omega_bar: 0.5,
            coupling: 10.0,
        }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.omega_bar > 0.0 && self.omega_bar.is_finite()) {
            return Err(Error::param(format!("omega_bar must be positive, got {}", self.omega_bar)));
        }
        if !(self.coupling.is_finite() && self.coupling != 0.0) {
            return Err(Error::param(format!(
                "coupling must be finite and nonzero, got {}",
                self.coupling
            )));
        }
        Ok(())
    }

    /// `K / N_tot`.
    pub fn rate(&self, n_tot: usize) -> f64 {
        self.coupling / n_tot as f64
    }
}

/// `𝒟 = iω̄ + rate·ℛ` held through the spectrum of `ℛ`.
#[derive(Debug, Clone)]
pub struct Generator {
    pub omega_bar: f64,
    pub rate: f64,
    pub spectrum: Arc<Spectrum>,
}

impl Generator {
    pub fn from_spectrum(spectrum: Arc<Spectrum>, p: &ModelParams) -> Result<Self> {
        p.validate()?;
        Ok(Generator {
            omega_bar: p.omega_bar,
            rate: p.rate(spectrum.source_dim()),
            spectrum,
        })
    }

    pub fn dim(&self) -> usize {
        self.spectrum.source_dim()
    }

    /// Eigenvalues `iω̄ + rate·λ_l`.
    pub fn eigenvalues(&self) -> Vec<C64> {
        self.spectrum
            .eigenvalues()
            .iter()
            .map(|&l| C64::new(self.rate * l, self.omega_bar))
            .collect()
    }

    /// Largest growth rate `max_l rate·λ_l`.
    pub fn max_growth(&self) -> f64 {
        let e = self.spectrum.eigenvalues();
        (self.rate * e[0]).max(self.rate * e[e.len() - 1])
    }
}

/// Diagonalizes `r` and wraps it as a generator.
pub fn build_generator(r: &HermitianMatrix, p: &ModelParams) -> Result<Generator> {
    Generator::from_spectrum(Arc::new(full_eigh(r)?), p)
}

/// Per-bit initial angles; the state is `⊗_q exp(iθ^(q))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductState {
    pub angles: Vec<Vec<f64>>,
}

impl ProductState {
    pub fn from_angles(angles: Vec<Vec<f64>>) -> Result<Self> {
        if angles.is_empty() || angles.iter().any(|a| a.is_empty() || a.len() != angles[0].len()) {
            return Err(Error::param("angles must be nonempty and of equal length per bit"));
        }
        Ok(ProductState { angles })
    }

    /// All angles zero: the all-ones vector.
    pub fn zeros(spec: &ResourceSpec) -> Self {
        ProductState {
            angles: vec![vec![0.0; 2 * spec.n_g]; spec.n_ql],
        }
    }

    pub fn factors(&self) -> Vec<DVector<C64>> {
        self.angles
            .iter()
            .map(|a| DVector::from_iterator(a.len(), a.iter().map(|&t| C64::from_polar(1.0, t))))
            .collect()
    }

    pub fn to_vector(&self) -> DVector<C64> {
        kron_vectors(&self.factors())
    }
}

/// Draws every angle uniformly from `[0, 2π)`.
pub fn sample_initial_state<R: Rng + ?Sized>(spec: &ResourceSpec, rng: &mut R) -> ProductState {
    ProductState {
        angles: (0..spec.n_ql)
            .map(|_| (0..2 * spec.n_g).map(|_| rng.gen_range(0.0..2.0 * PI)).collect())
            .collect(),
    }
}

/// States on a time grid with log-magnitudes factored out.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// Column `i` is the scaled state at `times[i]`.
    pub states: DMatrix<C64>,
    pub log_scales: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.states.nrows()
    }

    pub fn state(&self, i: usize) -> DVector<C64> {
        self.states.column(i).clone_owned()
    }

    /// Unit-norm state at index `i`.
    pub fn normalized(&self, i: usize) -> Result<DVector<C64>> {
        let x = self.state(i);
        let n = x.norm();
        if n == 0.0 {
            return Err(Error::ZeroVector("normalization"));
        }
        Ok(x / C64::new(n, 0.0))
    }

    /// `ln ||x(t_i)||`.
    pub fn log_norms(&self) -> Vec<f64> {
        (0..self.len())
            .map(|i| self.log_scales[i] + self.states.column(i).norm().ln())
            .collect()
    }

    /// Physical state `exp(log_scale - offset) * state`.
    pub fn rescaled(&self, i: usize, offset: f64) -> DVector<C64> {
        self.state(i) * C64::new((self.log_scales[i] - offset).exp(), 0.0)
    }
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.is_empty() {
        return Err(Error::param("time grid is empty"));
    }
    if times.iter().any(|t| !t.is_finite() || *t < 0.0) {
        return Err(Error::param("times must be finite and nonnegative"));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::param("times must be strictly increasing"));
    }
    Ok(())
}

/// `n` uniform samples on `[t0, t1]` inclusive.
pub fn uniform_grid(t0: f64, t1: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![t0],
        _ => (0..n).map(|i| t0 + (t1 - t0) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Exact propagation through the spectral decomposition:
/// `x(t) = e^{iω̄t} Σ_l e^{rate λ_l t} Φ_l ⟨Φ_l, x0⟩`.
///
/// With a partial spectrum the part of `x0` outside the kept eigenvectors is
/// dropped; if its relative norm exceeds `truncation_bound` this fails.
pub fn propagate_spectral(
    gen: &Generator,
    x0: &DVector<C64>,
    times: &[f64],
    truncation_bound: f64,
) -> Result<Trajectory> {
    check_times(times)?;
    if x0.len() != gen.dim() {
        return Err(Error::param(format!(
            "initial state has length {}, generator dimension {}",
            x0.len(),
            gen.dim()
        )));
    }
    let norm0 = x0.norm();
    if norm0 == 0.0 {
        return Err(Error::ZeroVector("propagation"));
    }
    let sp = &gen.spectrum;
    let c = sp.coefficients(x0);
    if !sp.is_complete() {
        let kept = sp.eigenvectors() * &c;
        let weight = (x0 - kept).norm() / norm0;
        if weight > truncation_bound {
            return Err(Error::Truncation {
                weight,
                bound: truncation_bound,
            });
        }
    }
    let growth = gen.max_growth();
    let lambdas = sp.eigenvalues();
    let coef = DMatrix::from_fn(sp.len(), times.len(), |l, j| {
        let t = times[j];
        let mag = ((gen.rate * lambdas[l] - growth) * t).exp();
        c[l] * C64::from_polar(mag, gen.omega_bar * t)
    });
    let states = sp.eigenvectors() * coef;
    Ok(Trajectory {
        times: times.to_vec(),
        states,
        log_scales: times.iter().map(|t| growth * t).collect(),
    })
}

/// Classical RK4 integration of `ẋ = (iω̄ + rate·ℛ)x` with step at most `dt`.
///
/// Each interval between requested times is split into equal steps no longer
/// than `dt`. The state is renormalized after every step and its log-norm
/// accumulated.
pub fn integrate_direct(
    r: &HermitianMatrix,
    p: &ModelParams,
    x0: &DVector<C64>,
    times: &[f64],
    dt: f64,
) -> Result<Trajectory> {
    p.validate()?;
    check_times(times)?;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::param(format!("dt must be positive, got {dt}")));
    }
    if x0.len() != r.dim() {
        return Err(Error::param("initial state and resource dimensions differ"));
    }
    let norm0 = x0.norm();
    if norm0 == 0.0 {
        return Err(Error::ZeroVector("integration"));
    }
    let rate = p.rate(r.dim());
    let iw = C64::new(0.0, p.omega_bar);
    let rc = C64::new(rate, 0.0);
    let f = |x: &DVector<C64>| -> DVector<C64> { r.mul_vec(x) * rc + x * iw };

    let mut x = x0 / C64::new(norm0, 0.0);
    let mut log_scale = norm0.ln();
    let mut t = 0.0;
    let mut states = DMatrix::zeros(x0.len(), times.len());
    let mut log_scales = Vec::with_capacity(times.len());
    let half = C64::new(0.5, 0.0);
    for (j, &target) in times.iter().enumerate() {
        let span = target - t;
        if span > 0.0 {
            let steps = ((span / dt) - 1e-9).ceil().max(1.0) as usize;
            let h = span / steps as f64;
            let hc = C64::new(h, 0.0);
            for step in 0..steps {
                let k1 = f(&x);
                let k2 = f(&(&x + &k1 * (hc * half)));
                let k3 = f(&(&x + &k2 * (hc * half)));
                let k4 = f(&(&x + &k3 * hc));
                x += (k1 + k2 * C64::new(2.0, 0.0) + k3 * C64::new(2.0, 0.0) + k4)
                    * (hc / C64::new(6.0, 0.0));
                let n = x.norm();
                if !n.is_finite() || n == 0.0 {
                    return Err(Error::Integration {
                        time: t + h * (step + 1) as f64,
                    });
                }
                x /= C64::new(n, 0.0);
                log_scale += n.ln();
            }
            t = target;
        }
        states.set_column(j, &x);
        log_scales.push(log_scale);
    }
    Ok(Trajectory {
        times: times.to_vec(),
        states,
        log_scales,
    })
}

/// Largest L2 distance between the normalized states of two trajectories on
/// the same grid, with the time where it occurs. No phase alignment is done.
pub fn max_normalized_deviation(a: &Trajectory, b: &Trajectory) -> Result<(f64, f64)> {
    if a.times != b.times || a.dim() != b.dim() {
        return Err(Error::param("trajectories must share grid and dimension"));
    }
    let mut worst = (0.0, a.times[0]);
    for i in 0..a.len() {
        let d = (a.normalized(i)? - b.normalized(i)?).norm();
        if d > worst.0 {
            worst = (d, a.times[i]);
        }
    }
    Ok(worst)
}

/// Wraps an angle into `[-π, π)`.
pub fn wrap_angle(x: f64) -> f64 {
    let y = (x + PI).rem_euclid(2.0 * PI) - PI;
    if y >= PI {
        -PI
    } else {
        y
    }
}

/// Angles `θ = arg x` and phases `φ = θ - ω̄t` for every stored time.
#[derive(Debug, Clone, PartialEq)]
pub struct AnglesAndPhases {
    pub times: Vec<f64>,
    /// `angles[i][j]` is oscillator `j` at `times[i]`; NaN where undefined.
    pub angles: Vec<Vec<f64>>,
    pub phases: Vec<Vec<f64>>,
}

fn angles_impl(traj: &Trajectory, omega_bar: f64, strict: bool) -> Result<AnglesAndPhases> {
    if traj.is_empty() {
        return Err(Error::param("trajectory is empty"));
    }
    let mut angles = Vec::with_capacity(traj.len());
    let mut phases = Vec::with_capacity(traj.len());
    for (i, &t) in traj.times.iter().enumerate() {
        let col = traj.states.column(i);
        let max = col.iter().fold(0.0_f64, |a, z| a.max(z.norm()));
        let mut th = Vec::with_capacity(col.len());
        let mut ph = Vec::with_capacity(col.len());
        for (j, z) in col.iter().enumerate() {
            if z.norm() <= ZERO_MODULUS_TOL * max || max == 0.0 {
                if strict {
                    return Err(Error::UndefinedAngle { index: j, time: t });
                }
                th.push(f64::NAN);
                ph.push(f64::NAN);
                continue;
            }
            let a = wrap_angle(z.arg());
            th.push(a);
            ph.push(wrap_angle(a - omega_bar * t));
        }
        angles.push(th);
        phases.push(ph);
    }
    Ok(AnglesAndPhases {
        times: traj.times.clone(),
        angles,
        phases,
    })
}

/// Angles and phases; fails on a zero-modulus entry.
pub fn angles_and_phases(traj: &Trajectory, p: &ModelParams) -> Result<AnglesAndPhases> {
    angles_impl(traj, p.omega_bar, true)
}

/// Angles and phases with NaN where the modulus vanishes.
pub fn angles_and_phases_masked(traj: &Trajectory, p: &ModelParams) -> Result<AnglesAndPhases> {
    angles_impl(traj, p.omega_bar, false)
}

/// Writes `time,oscillator_index,angle,phase,log_norm` rows; undefined angles
/// are written as NaN.
pub fn write_trajectory_csv<W: Write>(traj: &Trajectory, p: &ModelParams, out: W) -> Result<()> {
    let ap = angles_and_phases_masked(traj, p)?;
    let log_norms = traj.log_norms();
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["time", "oscillator_index", "angle", "phase", "log_norm"])?;
    for (i, &t) in traj.times.iter().enumerate() {
        let ln = fmt_f64(log_norms[i]);
        let ts = fmt_f64(t);
        for j in 0..traj.dim() {
            w.write_record([
                ts.as_str(),
                &j.to_string(),
                &fmt_f64(ap.angles[i][j]),
                &fmt_f64(ap.phases[i][j]),
                ln.as_str(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes `(time, oscillator_index, re, im, log_scale)` records as
/// little-endian `f64` plus a JSON sidecar.
pub fn write_trajectory_binary(traj: &Trajectory, path: &Path) -> Result<BinarySidecar> {
    let mut records = Vec::with_capacity(traj.len() * traj.dim());
    for (i, &t) in traj.times.iter().enumerate() {
        for (j, z) in traj.states.column(i).iter().enumerate() {
            records.push(vec![t, j as f64, z.re, z.im, traj.log_scales[i]]);
        }
    }
    write_f64_records(
        path,
        traj.dim(),
        ["time", "oscillator_index", "re", "im", "log_scale"]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        &records,
    )
}
