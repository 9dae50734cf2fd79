//! Acceptance suite: runs every criterion in sequence, prints one line per
//! criterion and exits nonzero if any fails.

use std::f64::consts::FRAC_1_SQRT_2;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use qlsync_core::dynamics::{
    integrate_direct, max_normalized_deviation, propagate_spectral, sample_initial_state,
    uniform_grid, Generator, ModelParams, DEFAULT_DT, DEFAULT_TRUNCATION_BOUND,
};
use qlsync_core::emergent::{
    emergent_approx, error_sweep, fit_log_slope, steady_state_alignment, trajectory_errors,
    CircuitChoice, GraphMode, SweepConfig,
};
use qlsync_core::netgraph::{cartesian_product, sample_resource, CouplingKind, DEFAULT_MEMORY_CAP};
use qlsync_core::qlgates::{
    bell_circuit, conjugate_resource, emergent_basis_state, gate_unitary, random_circuit,
    transform_spectrum, Layout, Spin,
};
use qlsync_core::rng::{sample_stream, stream, Purpose};
use qlsync_core::spectra::{
    convolve_densities, density_histogram, eigenvalues_only, full_eigh, resource_spectrum,
    top_k_eigs, Binning, DensityHistogram, KrylovOptions,
};
use qlsync_core::{ResourceSpec, Result, Spectrum, C64};

const CAP: u64 = DEFAULT_MEMORY_CAP;

/// Input resolution of the single-bit densities before convolution.
const FINE_BINS: usize = 2000;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Result<Outcome> {
    Ok(Outcome { pass, detail })
}

fn trajectory_params() -> ModelParams {
    ModelParams {
        omega_bar: 0.5,
        coupling: 10.0,
    }
}

fn complex(v: &DVector<f64>) -> DVector<C64> {
    v.map(|x| C64::new(x, 0.0))
}

fn sorted_desc(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

fn c1_emergent_exactness() -> Result<Outcome> {
    let spec = ResourceSpec::uniform(16, 1, 8, 4, 1);
    let target = 1.0 / 32f64.sqrt();
    let mut worst_val: f64 = 0.0;
    let mut worst_vec: f64 = 0.0;
    for sample in 0..100 {
        let r = &sample_resource(&spec, sample)?.bits[0].resource;
        let s = full_eigh(r)?;
        for lambda in [12.0, 4.0] {
            let d = s
                .eigenvalues()
                .iter()
                .map(|v| (v - lambda).abs())
                .fold(f64::INFINITY, f64::min);
            worst_val = worst_val.max(d);
        }
        let (_, v) = s.top();
        for z in v.iter() {
            worst_vec = worst_vec.max((z.norm() - target).abs());
        }
    }
    outcome(
        worst_val <= 1e-9 && worst_vec <= 1e-9,
        format!("max eigenvalue miss {worst_val:.2e}, max |Ψ| entry miss {worst_vec:.2e}"),
    )
}

fn c2_product_sum_rule() -> Result<Outcome> {
    let spec = ResourceSpec::uniform(6, 2, 3, 2, 2);
    let sampled = sample_resource(&spec, 0)?;
    let prod = cartesian_product(&sampled.factors(), CAP)?;
    let direct = eigenvalues_only(&prod)?;
    let f1 = eigenvalues_only(&sampled.bits[0].resource)?;
    let f2 = eigenvalues_only(&sampled.bits[1].resource)?;
    let sums = sorted_desc(f1.iter().flat_map(|a| f2.iter().map(move |b| a + b)).collect());
    let worst = direct
        .iter()
        .zip(&sums)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    outcome(
        direct.len() == 144 && sums.len() == 144 && worst <= 1e-9,
        format!("{} eigenvalues, max deviation {worst:.2e}", direct.len()),
    )
}

struct DensityPanel {
    direct: DensityHistogram,
    convolved: DensityHistogram,
}

fn density_panel(k: usize, l: usize, n_samp: u64) -> Result<DensityPanel> {
    let spec = ResourceSpec::uniform(12, 2, k, l, 3);
    let mut direct_vals = Vec::new();
    let mut single_vals = Vec::new();
    for sample in 0..n_samp {
        let sampled = sample_resource(&spec, sample)?;
        direct_vals.extend(eigenvalues_only(&cartesian_product(&sampled.factors(), CAP)?)?);
        for b in &sampled.bits {
            single_vals.extend(eigenvalues_only(&b.resource)?);
        }
    }
    let single = density_histogram(&single_vals, &Binning::Count(FINE_BINS))?;
    let conv = convolve_densities(&[single.clone(), single])?;
    // Common 60-bin grid over the union of both supports.
    let lo = direct_vals.iter().cloned().fold(f64::INFINITY, f64::min).min(conv.edges[0]);
    let hi = direct_vals
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max)
        .max(*conv.edges.last().unwrap());
    let edges: Vec<f64> = (0..=60).map(|i| lo + (hi - lo) * i as f64 / 60.0).collect();
    Ok(DensityPanel {
        direct: density_histogram(&direct_vals, &Binning::Edges(edges.clone()))?,
        convolved: conv.rebin(&edges)?,
    })
}

fn is_peak(h: &DensityHistogram, x: f64) -> bool {
    let Some(i) = h.bin_of(x) else { return false };
    let left = if i > 0 { h.mass[i - 1] } else { 0.0 };
    let right = h.mass.get(i + 1).copied().unwrap_or(0.0);
    h.mass[i] > 0.0 && h.mass[i] >= left && h.mass[i] >= right
}

fn c3_density_convolution() -> Result<Outcome> {
    let mut pass = true;
    let mut parts = Vec::new();
    for (k, l) in [(10, 1), (8, 2), (6, 3)] {
        let panel = density_panel(k, l, 100)?;
        let dist = panel.direct.l1_distance(&panel.convolved)?;
        let markers = [2 * (k + l), 2 * k, 2 * (k - l)];
        let peaks = markers.iter().all(|&m| is_peak(&panel.direct, m as f64));
        // Emergent peaks are only resolvable where they sit outside the bulk.
        let isolated = (k, l) == (10, 1);
        pass &= dist <= 0.08 && (!isolated || peaks);
        parts.push(format!(
            "(k={k},l={l}) L1 {dist:.4}{}",
            if isolated { format!(", peaks at {markers:?}: {peaks}") } else { String::new() }
        ));
    }
    outcome(pass, parts.join("; "))
}

fn c4_oracle_equivalence() -> Result<Outcome> {
    let spec = ResourceSpec::uniform(6, 2, 3, 2, 4);
    let r = sample_resource(&spec, 0)?.ground_resource(CAP)?;
    let p = trajectory_params();
    let gen = Generator::from_spectrum(Arc::new(full_eigh(&r)?), &p)?;
    let x0 = sample_initial_state(&spec, &mut sample_stream(4, 0, Purpose::InitialState)).to_vector();
    let times = uniform_grid(0.0, 5.0, 51);
    let a = propagate_spectral(&gen, &x0, &times, DEFAULT_TRUNCATION_BOUND)?;
    let b = integrate_direct(&r, &p, &x0, &times, DEFAULT_DT)?;
    let (dev, at) = max_normalized_deviation(&a, &b)?;
    outcome(dev <= 1e-6, format!("max deviation {dev:.2e} at t = {at}"))
}

fn trajectory_spectrum() -> Result<(ResourceSpec, Spectrum)> {
    let spec = ResourceSpec::uniform(16, 2, 8, 4, 5);
    let sp = resource_spectrum(&sample_resource(&spec, 0)?, CAP)?;
    Ok((spec, sp))
}

fn alignments(spec: &ResourceSpec, sp: Spectrum, target: &DVector<C64>) -> Result<Vec<f64>> {
    let gen = Generator::from_spectrum(Arc::new(sp), &trajectory_params())?;
    (0..20)
        .map(|run| {
            let x0 = sample_initial_state(spec, &mut sample_stream(5, run, Purpose::InitialState))
                .to_vector();
            let tr = propagate_spectral(&gen, &x0, &[20.0], DEFAULT_TRUNCATION_BOUND)?;
            steady_state_alignment(&tr.state(0), target)
        })
        .collect()
}

fn summary(v: &[f64]) -> String {
    let min = v.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    format!("alignment min {min:.4} max {max:.4}")
}

fn c5_ground_steady_state() -> Result<Outcome> {
    let (spec, sp) = trajectory_spectrum()?;
    let target = complex(&emergent_basis_state(&spec, &[Spin::Down, Spin::Down])?);
    let al = alignments(&spec, sp, &target)?;
    outcome(al.iter().all(|&a| a >= 0.99), summary(&al))
}

fn c6_bell_steady_state() -> Result<Outcome> {
    let (spec, sp) = trajectory_spectrum()?;
    let bell = bell_circuit(&spec)?;
    let dd = emergent_basis_state(&spec, &[Spin::Down, Spin::Down])?;
    let uu = emergent_basis_state(&spec, &[Spin::Up, Spin::Up])?;
    let mut target = dd.clone();
    bell.apply(target.as_mut_slice());
    let bell_err = (&target - (&dd + &uu) * FRAC_1_SQRT_2).amax();
    let al = alignments(&spec, transform_spectrum(&sp, &bell)?, &complex(&target))?;
    outcome(
        bell_err <= 1e-10 && al.iter().all(|&a| a >= 0.99),
        format!("{}, Bell image error {bell_err:.2e}", summary(&al)),
    )
}

fn c7_error_sweep() -> Result<Outcome> {
    let p = ModelParams {
        omega_bar: 0.5,
        coupling: 10.0,
    };
    let l_values = vec![2, 4, 8, 12];
    let t_values: Vec<f64> = (1..=20).map(f64::from).collect();
    let cfg = SweepConfig {
        n_g: 16,
        n_ql: 2,
        k: 4,
        l_values: l_values.clone(),
        t_values: t_values.clone(),
        n_samp: 20,
        seed: 7,
        graph_seed: 7,
        graph_mode: GraphMode::PerSample,
        coupling: CouplingKind::Biregular,
        circuits: vec![CircuitChoice::Ground, CircuitChoice::Bell],
        params: p,
        parallel: true,
        memory_cap: CAP,
    };
    let res = error_sweep(&cfg)?;
    let mean = |c: CircuitChoice, l: usize, t: f64| {
        res.records
            .iter()
            .find(|r| r.circuit == c && r.l_value == l && r.t_value == t)
            .map(|r| r.mean_delta)
            .expect("sweep point")
    };
    let mut notes = Vec::new();

    let mut l_mono = true;
    for c in [CircuitChoice::Ground, CircuitChoice::Bell] {
        let at20: Vec<f64> = l_values.iter().map(|&l| mean(c, l, 20.0)).collect();
        l_mono &= at20.windows(2).all(|w| w[1] < w[0]);
        notes.push(format!("{} Δ20 by l {:?}", c.name(), at20.iter().map(|d| format!("{d:.3}")).collect::<Vec<_>>()));
    }

    let mut t_mono = true;
    for c in [CircuitChoice::Ground, CircuitChoice::Bell] {
        for &l in &l_values {
            let seq: Vec<f64> = [5.0, 10.0, 15.0, 20.0].iter().map(|&t| mean(c, l, t)).collect();
            t_mono &= seq.windows(2).all(|w| w[1] < w[0]);
        }
    }

    let rate = p.coupling / 1024.0;
    let mut worst_slope: f64 = 0.0;
    let mut slope_notes = Vec::new();
    for &l in &l_values {
        let mut rel = Vec::new();
        for tr in res.traces.iter().filter(|t| t.l_value == l && t.circuit == CircuitChoice::Ground) {
            let fit = fit_log_slope(&t_values, &tr.deltas, 10.0, 20.0)?;
            let pred = -rate * (tr.lambda1 - tr.lambda2);
            rel.push((fit - pred).abs() / pred.abs());
        }
        let max = rel.iter().cloned().fold(0.0, f64::max);
        worst_slope = worst_slope.max(max);
        slope_notes.push(format!("l={l}: {max:.2}"));
    }
    let slope_ok = worst_slope <= 0.15;
    notes.push(format!("max slope rel. error [{}]", slope_notes.join(", ")));

    // Ground vs Bell with U_g-related initial states, per sample.
    let mut worst_pair: f64 = 0.0;
    for &l in &l_values {
        let spec = ResourceSpec::uniform(16, 2, 4, l, 7);
        let bell = bell_circuit(&spec)?;
        for sample in 0..20u64 {
            let sp = resource_spectrum(&sample_resource(&spec, sample)?, CAP)?;
            let sp_b = transform_spectrum(&sp, &bell)?;
            let x0 = sample_initial_state(&spec, &mut sample_stream(7, sample, Purpose::InitialState))
                .to_vector();
            let x0b = bell.apply_vec(&x0);
            let d = |s: &Spectrum, x: &DVector<C64>| -> Result<Vec<f64>> {
                let gen = Generator::from_spectrum(Arc::new(s.clone()), &p)?;
                let full = propagate_spectral(&gen, x, &t_values, DEFAULT_TRUNCATION_BOUND)?;
                trajectory_errors(&full, &emergent_approx(s, &p, x, &t_values)?)
            };
            for (a, b) in d(&sp, &x0)?.iter().zip(d(&sp_b, &x0b)?) {
                worst_pair = worst_pair.max((a - b).abs());
            }
        }
    }
    let pair_ok = worst_pair <= 1e-10;
    notes.push(format!("ground/Bell max |ΔΔ| {worst_pair:.1e}"));

    let pass = l_mono && t_mono && slope_ok && pair_ok;
    notes.insert(
        0,
        format!("l-monotone {l_mono}, t-monotone {t_mono}, slopes {slope_ok}, ground=Bell {pair_ok}"),
    );
    outcome(pass, notes.join("; "))
}

fn c8_partial_eigensolver() -> Result<Outcome> {
    let spec = ResourceSpec::uniform(256, 1, 8, 4, 8);
    let r = &sample_resource(&spec, 0)?.bits[0].resource;
    let full = full_eigh(r)?;
    let part = top_k_eigs(r, 4, &KrylovOptions::default())?;
    let val_err = (0..4)
        .map(|i| (full.eigenvalues()[i] - part.eigenvalues()[i]).abs())
        .fold(0.0, f64::max);
    let a: DMatrix<C64> = full.eigenvectors().columns(0, 4).clone_owned();
    let sv = a.ad_mul(part.eigenvectors()).singular_values();
    let cos_min = sv.iter().cloned().fold(f64::INFINITY, f64::min).min(1.0);
    let angle = (1.0 - cos_min * cos_min).max(0.0).sqrt().asin();
    outcome(
        val_err <= 1e-8 && angle <= 1e-6,
        format!("dim {}, eigenvalue error {val_err:.2e}, largest principal angle {angle:.2e}", r.dim()),
    )
}

fn c9_unitary_invariance() -> Result<Outcome> {
    let spec = ResourceSpec::uniform(3, 3, 2, 1, 9);
    let r = sample_resource(&spec, 0)?.ground_resource(CAP)?;
    let base = eigenvalues_only(&r)?;
    let layout = Layout::of(&spec)?;
    let mut rng = stream(9, 0);
    let mut worst_spec: f64 = 0.0;
    let mut worst_unit: f64 = 0.0;
    let id = DMatrix::<f64>::identity(layout.n_tot(), layout.n_tot());
    for _ in 0..20 {
        let c = random_circuit(layout, 6, &mut rng)?;
        let rg = conjugate_resource(&r, &c)?;
        for (a, b) in eigenvalues_only(&rg)?.iter().zip(&base) {
            worst_spec = worst_spec.max((a - b).abs());
        }
        let u = c.unitary(CAP)?;
        worst_unit = worst_unit.max((u * u.transpose() - &id).amax());
        for op in c.ops() {
            let g = gate_unitary(op, &spec, CAP)?;
            worst_unit = worst_unit.max((&g * g.transpose() - &id).amax());
        }
    }
    outcome(
        worst_spec <= 1e-9 && worst_unit <= 1e-10,
        format!("max spectrum shift {worst_spec:.2e}, max |UU†-I| {worst_unit:.2e}"),
    )
}

type Criterion = (u32, &'static str, Duration, fn() -> Result<Outcome>);

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        (1, "emergent eigenvalue exactness", Duration::from_secs(10), c1_emergent_exactness),
        (2, "product-spectrum sum rule", Duration::from_secs(5), c2_product_sum_rule),
        (3, "spectral density convolution", Duration::from_secs(120), c3_density_convolution),
        (4, "oracle equivalence", Duration::from_secs(60), c4_oracle_equivalence),
        (5, "ground steady state", Duration::from_secs(60), c5_ground_steady_state),
        (6, "Bell steady state", Duration::from_secs(60), c6_bell_steady_state),
        (7, "error sweep behavior", Duration::from_secs(300), c7_error_sweep),
        (8, "partial eigensolver", Duration::from_secs(30), c8_partial_eigensolver),
        (9, "unitary invariance", Duration::from_secs(60), c9_unitary_invariance),
    ];
    let filter: Vec<u32> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut failed = 0;
    for (id, name, limit, run) in criteria {
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let res = run();
        let elapsed = start.elapsed();
        let (pass, detail) = match res {
            Ok(o) => (o.pass && elapsed <= limit, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failed += 1;
        }
        println!(
            "criterion {id} [{name}]: {} ({detail}; {:.2}s of {}s)",
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            limit.as_secs()
        );
    }
    if failed > 0 {
        println!("{failed} criterion/criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
