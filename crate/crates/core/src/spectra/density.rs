//! Normalized spectral-density histograms.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::fmt_f64;

/// How histogram bins are chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Binning {
    /// Equal-width bins spanning the sample range.
    Count(usize),
    /// Explicit increasing bin edges.
    Edges(Vec<f64>),
}

impl Default for Binning {
    fn default() -> Self {
        Binning::Count(60)
    }
}

/// Probability mass per bin; masses sum to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityHistogram {
    pub edges: Vec<f64>,
    pub mass: Vec<f64>,
    /// Number of values the histogram was built from.
    pub n_samples: usize,
}

fn uniform_edges(lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    let w = (hi - lo) / bins as f64;
    (0..=bins)
        .map(|i| if i == bins { hi } else { lo + w * i as f64 })
        .collect()
}

impl DensityHistogram {
    pub fn n_bins(&self) -> usize {
        self.mass.len()
    }

    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    pub fn widths(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Bin containing `x`; the last bin is closed on the right.
    pub fn bin_of(&self, x: f64) -> Option<usize> {
        let (lo, hi) = (self.edges[0], *self.edges.last().unwrap());
        if !(x >= lo && x <= hi) {
            return None;
        }
        let i = self.edges.partition_point(|&e| e <= x);
        Some(i.saturating_sub(1).min(self.n_bins() - 1))
    }

    pub fn mean(&self) -> f64 {
        self.centers().iter().zip(&self.mass).map(|(c, m)| c * m).sum()
    }

    /// Redistributes mass onto new edges assuming it is uniform within each
    /// bin. Mass outside the new range is an error.
    pub fn rebin(&self, edges: &[f64]) -> Result<DensityHistogram> {
        check_edges(edges)?;
        let (lo, hi) = (edges[0], *edges.last().unwrap());
        let tol = 1e-9 * (hi - lo).abs().max(1.0);
        let mut mass = vec![0.0; edges.len() - 1];
        for (i, &m) in self.mass.iter().enumerate() {
            if m == 0.0 {
                continue;
            }
            let (a, b) = (self.edges[i], self.edges[i + 1]);
            if a < lo - tol || b > hi + tol {
                return Err(Error::param("histogram mass lies outside the target edges"));
            }
            let w = b - a;
            if w <= 0.0 {
                continue;
            }
            for (j, slot) in mass.iter_mut().enumerate() {
                let overlap = b.min(edges[j + 1]) - a.max(edges[j]);
                if overlap > 0.0 {
                    *slot += m * overlap / w;
                }
            }
        }
        let total: f64 = mass.iter().sum();
        if total > 0.0 {
            mass.iter_mut().for_each(|x| *x /= total);
        }
        Ok(DensityHistogram {
            edges: edges.to_vec(),
            mass,
            n_samples: self.n_samples,
        })
    }

    /// Total-variation style distance `sum |p_i - q_i|` on identical edges.
    pub fn l1_distance(&self, other: &DensityHistogram) -> Result<f64> {
        if self.edges.len() != other.edges.len()
            || self
                .edges
                .iter()
                .zip(&other.edges)
                .any(|(a, b)| (a - b).abs() > 1e-9 * a.abs().max(1.0))
        {
            return Err(Error::param("histograms must share bin edges"));
        }
        Ok(self.mass.iter().zip(&other.mass).map(|(a, b)| (a - b).abs()).sum())
    }

    /// Writes `bin_center,mass` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["bin_center", "mass"])?;
        for (c, m) in self.centers().iter().zip(&self.mass) {
            w.write_record([fmt_f64(*c), fmt_f64(*m)])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_edges(edges: &[f64]) -> Result<()> {
    if edges.len() < 2 {
        return Err(Error::param("a histogram needs at least two edges"));
    }
    if edges.iter().any(|e| !e.is_finite()) || edges.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::param("bin edges must be finite and strictly increasing"));
    }
    Ok(())
}

/// Histogram of `values` with mass normalized to one.
pub fn density_histogram(values: &[f64], binning: &Binning) -> Result<DensityHistogram> {
    if values.is_empty() {
        return Err(Error::param("cannot histogram an empty sample"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::param("histogram samples must be finite"));
    }
    let edges = match binning {
        Binning::Count(0) => return Err(Error::param("bin count must be positive")),
        Binning::Count(bins) => {
            let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if hi - lo <= 1e-12 * lo.abs().max(1.0) {
                uniform_edges(lo - 0.5, hi + 0.5, *bins)
            } else {
                uniform_edges(lo, hi, *bins)
            }
        }
        Binning::Edges(e) => {
            check_edges(e)?;
            e.clone()
        }
    };
    let mut hist = DensityHistogram {
        mass: vec![0.0; edges.len() - 1],
        edges,
        n_samples: values.len(),
    };
    let unit = 1.0 / values.len() as f64;
    for &v in values {
        let i = hist
            .bin_of(v)
            .ok_or_else(|| Error::param(format!("sample {v} lies outside the bin edges")))?;
        hist.mass[i] += unit;
    }
    Ok(hist)
}

/// Density of `X_1 + … + X_m` for independent `X_i ~ densities[i]`.
///
/// Inputs are rebinned to a common width `h` (the smallest input bin width).
/// For two densities, a pair of bins `(i, j)` with left edges `a_i`, `b_j`
/// contributes to the sum range `[a_i + b_j, a_i + b_j + 2h]`, split equally
/// between the two output bins it covers.
pub fn convolve_densities(densities: &[DensityHistogram]) -> Result<DensityHistogram> {
    if densities.len() < 2 {
        return Err(Error::param("convolution needs at least two densities"));
    }
    let mut acc = densities[0].clone();
    for d in &densities[1..] {
        acc = convolve_pair(&acc, d)?;
    }
    Ok(acc)
}

fn convolve_pair(p: &DensityHistogram, q: &DensityHistogram) -> Result<DensityHistogram> {
    let h = p
        .widths()
        .into_iter()
        .chain(q.widths())
        .fold(f64::INFINITY, f64::min);
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::param("cannot resample a density with degenerate support"));
    }
    let regrid = |d: &DensityHistogram| -> Result<DensityHistogram> {
        let lo = d.edges[0];
        let span = d.edges.last().unwrap() - lo;
        let bins = ((span / h) - 1e-9).ceil().max(1.0) as usize;
        let edges: Vec<f64> = (0..=bins).map(|i| lo + h * i as f64).collect();
        d.rebin(&edges)
    };
    let (p, q) = (regrid(p)?, regrid(q)?);
    let n_out = p.n_bins() + q.n_bins();
    let lo = p.edges[0] + q.edges[0];
    let mut mass = vec![0.0; n_out];
    for (i, &a) in p.mass.iter().enumerate() {
        if a == 0.0 {
            continue;
        }
        for (j, &b) in q.mass.iter().enumerate() {
            let m = 0.5 * a * b;
            mass[i + j] += m;
            mass[i + j + 1] += m;
        }
    }
    let total: f64 = mass.iter().sum();
    mass.iter_mut().for_each(|m| *m /= total);
    let edges = (0..=n_out).map(|i| lo + h * i as f64).collect();
    Ok(DensityHistogram {
        edges,
        mass,
        n_samples: p.n_samples.saturating_mul(q.n_samples),
    })
}
