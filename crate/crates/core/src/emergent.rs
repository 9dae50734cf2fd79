//! Rank-1 emergent-state approximation, the relative error `Δ_t`, steady
//! state alignment and the error sweep over coupling valencies.

use std::io::Write;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    propagate_spectral, sample_initial_state, Generator, ModelParams, Trajectory,
    DEFAULT_TRUNCATION_BOUND,
};
use crate::error::{Error, Result};
use crate::io::fmt_f64;
use crate::linalg::C64;
use crate::netgraph::{sample_resource, CouplingKind, ResourceSpec};
use crate::qlgates::{bell_circuit, transform_spectrum, Circuit};
use crate::rng::{sample_stream, Purpose};
use crate::spectra::{resource_spectrum, Spectrum};

/// Overlaps below this magnitude are treated as a degenerate projection.
pub const DEGENERATE_OVERLAP: f64 = 1e-14;

/// `x̃(t) = e^{(iω̄ + rate λ_1) t} v ⟨v, x0⟩` with `(λ_1, v)` the top
/// eigenpair of `spectrum` (eigenvectors already mapped by the circuit).
///
/// The result uses the same log scales as [`propagate_spectral`] on the full
/// spectrum, so it can be compared with the full trajectory directly.
pub fn emergent_approx(
    spectrum: &Spectrum,
    p: &ModelParams,
    x0: &DVector<C64>,
    times: &[f64],
) -> Result<Trajectory> {
    p.validate()?;
    if x0.len() != spectrum.source_dim() {
        return Err(Error::param("initial state and spectrum dimensions differ"));
    }
    let (lambda1, v) = spectrum.top();
    let overlap = v.dotc(x0);
    if overlap.norm() < DEGENERATE_OVERLAP {
        log::warn!("initial state has no overlap with the leading emergent state");
    }
    let rate = p.rate(spectrum.source_dim());
    // Scale offsets follow the full spectrum so both trajectories match.
    let e = spectrum.eigenvalues();
    let growth = (rate * e[0]).max(rate * e[e.len() - 1]);
    let mut states = DMatrix::zeros(x0.len(), times.len());
    for (j, &t) in times.iter().enumerate() {
        let mag = ((rate * lambda1 - growth) * t).exp();
        let c = overlap * C64::from_polar(mag, p.omega_bar * t);
        states.set_column(j, &(&v * c));
    }
    Ok(Trajectory {
        times: times.to_vec(),
        states,
        log_scales: times.iter().map(|t| growth * t).collect(),
    })
}

/// `Δ = ||x - x̃|| / ||x||`.
pub fn relative_error(x: &DVector<C64>, approx: &DVector<C64>) -> Result<f64> {
    if x.len() != approx.len() {
        return Err(Error::param("states differ in dimension"));
    }
    let n = x.norm();
    if n == 0.0 {
        return Err(Error::ZeroVector("relative error"));
    }
    Ok((x - approx).norm() / n)
}

/// `Δ_t` at every time of two trajectories on the same grid, compared at the
/// full trajectory's scale.
pub fn trajectory_errors(full: &Trajectory, approx: &Trajectory) -> Result<Vec<f64>> {
    if full.times != approx.times || full.dim() != approx.dim() {
        return Err(Error::param("trajectories must share grid and dimension"));
    }
    (0..full.len())
        .map(|i| {
            let off = full.log_scales[i];
            relative_error(&full.state(i), &approx.rescaled(i, off))
        })
        .collect()
}

/// `|⟨target, x⟩| / (||target|| ||x||)`.
pub fn steady_state_alignment(x: &DVector<C64>, target: &DVector<C64>) -> Result<f64> {
    if x.len() != target.len() {
        return Err(Error::param("states differ in dimension"));
    }
    let (nx, nt) = (x.norm(), target.norm());
    if nx == 0.0 || nt == 0.0 {
        return Err(Error::ZeroVector("alignment"));
    }
    Ok((target.dotc(x).norm() / (nx * nt)).min(1.0))
}

/// Least-squares slope of `ln y` against `t` over points with
/// `t_min <= t <= t_max` and `y > 0`.
pub fn fit_log_slope(times: &[f64], values: &[f64], t_min: f64, t_max: f64) -> Result<f64> {
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(values)
        .filter(|(t, y)| **t >= t_min && **t <= t_max && **y > 0.0)
        .map(|(t, y)| (*t, y.ln()))
        .collect();
    if pts.len() < 2 {
        return Err(Error::param("slope fit needs at least two positive points"));
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::param("slope fit needs distinct times"));
    }
    Ok(sxy / sxx)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CircuitChoice {
    Ground,
    Bell,
}

impl CircuitChoice {
    pub fn name(self) -> &'static str {
        match self {
            CircuitChoice::Ground => "ground",
            CircuitChoice::Bell => "bell",
        }
    }

    pub fn build(self, spec: &ResourceSpec) -> Result<Circuit> {
        match self {
            CircuitChoice::Ground => Circuit::identity(spec),
            CircuitChoice::Bell => bell_circuit(spec),
        }
    }
}

/// Whether each sample draws its own graphs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphMode {
    #[default]
    PerSample,
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub n_g: usize,
    pub n_ql: usize,
    pub k: usize,
    pub l_values: Vec<usize>,
    pub t_values: Vec<f64>,
    pub n_samp: usize,
    /// Seed for initial states.
    pub seed: u64,
    /// Seed for graphs.
    pub graph_seed: u64,
    #[serde(default)]
    pub graph_mode: GraphMode,
    #[serde(default)]
    pub coupling: CouplingKind,
    pub circuits: Vec<CircuitChoice>,
    pub params: ModelParams,
    #[serde(default = "default_true")]
    pub parallel: bool,
    pub memory_cap: u64,
}

fn default_true() -> bool {
    true
}

impl SweepConfig {
    fn spec_for(&self, l: usize) -> ResourceSpec {
        let mut s = ResourceSpec::uniform(self.n_g, self.n_ql, self.k, l, self.graph_seed);
        s.coupling = self.coupling;
        s
    }
}

/// Mean and spread of `Δ_t` at one sweep point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub circuit: CircuitChoice,
    pub l_value: usize,
    pub t_value: f64,
    pub mean_delta: f64,
    pub std_delta: f64,
    pub n_samples: usize,
    pub seed: u64,
}

/// `Δ_t` of one sample on the sweep time grid, with the two leading
/// eigenvalues of its resource.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleTrace {
    pub circuit: CircuitChoice,
    pub l_value: usize,
    pub sample: usize,
    pub lambda1: f64,
    pub lambda2: f64,
    pub deltas: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub records: Vec<ErrorRecord>,
    pub traces: Vec<SampleTrace>,
    /// Valencies skipped as infeasible.
    pub skipped: Vec<usize>,
}

fn sample_traces(cfg: &SweepConfig, spec: &ResourceSpec, sample: usize) -> Result<Vec<SampleTrace>> {
    let graph_index = match cfg.graph_mode {
        GraphMode::PerSample => sample as u64,
        GraphMode::Fixed => 0,
    };
    let sampled = sample_resource(spec, graph_index)?;
    let ground = resource_spectrum(&sampled, cfg.memory_cap)?;
    let x0 = sample_initial_state(
        spec,
        &mut sample_stream(cfg.seed, sample as u64, Purpose::InitialState),
    )
    .to_vector();
    let e = ground.eigenvalues();
    let (lambda1, lambda2) = (e[0], e[1]);
    cfg.circuits
        .iter()
        .map(|&choice| {
            let circuit = choice.build(spec)?;
            let sp = Arc::new(transform_spectrum(&ground, &circuit)?);
            let gen = Generator::from_spectrum(sp.clone(), &cfg.params)?;
            let full = propagate_spectral(&gen, &x0, &cfg.t_values, DEFAULT_TRUNCATION_BOUND)?;
            let approx = emergent_approx(&sp, &cfg.params, &x0, &cfg.t_values)?;
            Ok(SampleTrace {
                circuit: choice,
                l_value: spec.l[0],
                sample,
                lambda1,
                lambda2,
                deltas: trajectory_errors(&full, &approx)?,
            })
        })
        .collect()
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Mean and standard deviation of `Δ_t` over `n_samp` samples for every
/// valency, time and circuit.
///
/// Valencies that cannot be realized are skipped with a warning. Results do
/// not depend on `parallel`: samples are reduced in index order.
pub fn error_sweep(cfg: &SweepConfig) -> Result<SweepResult> {
    cfg.params.validate()?;
    if cfg.n_samp == 0 {
        return Err(Error::param("n_samp must be at least 1"));
    }
    if cfg.t_values.is_empty() {
        return Err(Error::param("sweep needs at least one time"));
    }
    if cfg.circuits.is_empty() {
        return Err(Error::param("sweep needs at least one circuit"));
    }
    let mut result = SweepResult::default();
    for &l in &cfg.l_values {
        let spec = cfg.spec_for(l);
        if let Err(e) = spec.validate() {
            log::warn!("skipping l = {l}: {e}");
            result.skipped.push(l);
            continue;
        }
        let run = |s: usize| sample_traces(cfg, &spec, s);
        let per_sample: Vec<Result<Vec<SampleTrace>>> = if cfg.parallel {
            (0..cfg.n_samp).into_par_iter().map(run).collect()
        } else {
            (0..cfg.n_samp).map(run).collect()
        };
        let per_sample = match per_sample.into_iter().collect::<Result<Vec<_>>>() {
            Ok(v) => v,
            Err(e @ Error::Sampling(_)) => {
                log::warn!("skipping l = {l}: {e}");
                result.skipped.push(l);
                continue;
            }
            Err(e) => return Err(e),
        };
        for (ci, &choice) in cfg.circuits.iter().enumerate() {
            for (ti, &t) in cfg.t_values.iter().enumerate() {
                let deltas: Vec<f64> = per_sample.iter().map(|s| s[ci].deltas[ti]).collect();
                let (mean_delta, std_delta) = mean_std(&deltas);
                result.records.push(ErrorRecord {
                    circuit: choice,
                    l_value: l,
                    t_value: t,
                    mean_delta,
                    std_delta,
                    n_samples: cfg.n_samp,
                    seed: cfg.seed,
                });
            }
        }
        result.traces.extend(per_sample.into_iter().flatten());
    }
    Ok(result)
}

/// Writes `circuit,l,t,mean_delta,std_delta,n_samp,seed` rows.
pub fn write_sweep_csv<W: Write>(records: &[ErrorRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["circuit", "l", "t", "mean_delta", "std_delta", "n_samp", "seed"])?;
    for r in records {
        w.write_record([
            r.circuit.name().to_string(),
            r.l_value.to_string(),
            fmt_f64(r.t_value),
            fmt_f64(r.mean_delta),
            fmt_f64(r.std_delta),
            r.n_samples.to_string(),
            r.seed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
