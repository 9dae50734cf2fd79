//! Experiment configuration.
//!
//! A config is one JSON document. Command-line overrides name a dotted field
//! path with dashes for underscores (`--resource.n-g 16`, `--seed=3`); the
//! value is parsed as JSON when possible and taken as a string otherwise.
//! Scalar `resource.k` / `resource.l` values are repeated for every bit.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use qlsync_core::dynamics::{uniform_grid, ModelParams, DEFAULT_DT};
use qlsync_core::emergent::GraphMode;
use qlsync_core::netgraph::DEFAULT_MEMORY_CAP;
use qlsync_core::qlgates::{bell_circuit, Circuit};
use qlsync_core::spectra::KrylovOptions;
use qlsync_core::{Error, ResourceSpec, Result};

/// Largest `N_QL` accepted at the default memory cap.
pub const MAX_DEFAULT_N_QL: usize = 3;

/// Largest `n_g` accepted by the oracle check.
pub const ORACLE_MAX_N_G: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    SpectraFig2,
    GroundFig3,
    BellFig3,
    ErrorFig4,
    ProtocolRun,
    OracleCheck,
    PartialEigsCheck,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::SpectraFig2 => "spectra_fig2",
            ExperimentKind::GroundFig3 => "ground_fig3",
            ExperimentKind::BellFig3 => "bell_fig3",
            ExperimentKind::ErrorFig4 => "error_fig4",
            ExperimentKind::ProtocolRun => "protocol_run",
            ExperimentKind::OracleCheck => "oracle_check",
            ExperimentKind::PartialEigsCheck => "partial_eigs_check",
        }
    }
}

/// A circuit given by name (`"ground"`, `"bell"`) or as a gate list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CircuitDesc {
    Named(String),
    Ops(Vec<Value>),
}

impl Default for CircuitDesc {
    fn default() -> Self {
        CircuitDesc::Named("ground".to_string())
    }
}

impl CircuitDesc {
    pub fn build(&self, spec: &ResourceSpec) -> Result<Circuit> {
        match self {
            CircuitDesc::Named(name) => match name.as_str() {
                "ground" | "identity" => Circuit::identity(spec),
                "bell" => bell_circuit(spec),
                other => Err(Error::param(format!(
                    "unknown circuit {other:?}; use \"ground\", \"bell\" or a gate list"
                ))),
            },
            CircuitDesc::Ops(ops) => {
                Circuit::new(spec, Circuit::ops_from_value(&Value::Array(ops.clone()))?)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeGrid {
    pub t_end: f64,
    /// Points on `[0, t_end]`, both ends included.
    pub n_points: usize,
}

impl Default for TimeGrid {
    fn default() -> Self {
        TimeGrid {
            t_end: 20.0,
            n_points: 201,
        }
    }
}

impl TimeGrid {
    pub fn times(&self) -> Vec<f64> {
        uniform_grid(0.0, self.t_end, self.n_points)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub l_values: Vec<usize>,
    pub t_values: Vec<f64>,
    /// Falls back to the top-level `n_samp`, then 100.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_samp: Option<usize>,
    pub graph_mode: GraphMode,
    pub parallel: bool,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            l_values: vec![2, 4, 8, 12],
            t_values: (1..=20).map(f64::from).collect(),
            n_samp: None,
            graph_mode: GraphMode::PerSample,
            parallel: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleOptions {
    pub dt: f64,
    pub tolerance: f64,
    /// Replace the sampled resource with the zero matrix.
    pub zero_resource: bool,
}

impl Default for OracleOptions {
    fn default() -> Self {
        OracleOptions {
            dt: DEFAULT_DT,
            tolerance: 1e-6,
            zero_resource: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PartialEigsOptions {
    pub k: usize,
    pub eigenvalue_tol: f64,
    pub angle_tol: f64,
    pub solver: KrylovOptions,
}

impl Default for PartialEigsOptions {
    fn default() -> Self {
        PartialEigsOptions {
            k: 4,
            eigenvalue_tol: 1e-8,
            angle_tol: 1e-6,
            solver: KrylovOptions::default(),
        }
    }
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("qlsync-out")
}

fn default_bins() -> usize {
    60
}

fn default_gap_threshold() -> f64 {
    1.0
}

fn default_memory_cap() -> u64 {
    DEFAULT_MEMORY_CAP
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub resource: ResourceSpec,
    #[serde(default)]
    pub params: ModelParams,
    #[serde(default)]
    pub circuit: CircuitDesc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
    #[serde(default)]
    pub time: TimeGrid,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Seed of the initial-state streams; graphs use `resource.seed`.
    pub seed: u64,
    /// Graph samples (spectra) or initial conditions (trajectories).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_samp: Option<usize>,
    #[serde(default = "default_bins")]
    pub bins: usize,
    /// Minimum `λ₁ - λ₂` for a well-isolated leading state.
    #[serde(default = "default_gap_threshold")]
    pub gap_threshold: f64,
    #[serde(default)]
    pub oracle: OracleOptions,
    #[serde(default)]
    pub partial_eigs: PartialEigsOptions,
    #[serde(default = "default_memory_cap")]
    pub memory_cap: u64,
}

impl ExperimentConfig {
    /// Reads a config file and applies `overrides`.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| {
            Error::param(format!("cannot read config {}: {e}", path.display()))
        })?;
        let value: Value = serde_json::from_str(&text)?;
        Self::from_value(value, overrides)
    }

    pub fn from_value(mut value: Value, overrides: &[String]) -> Result<Self> {
        for (path, v) in parse_overrides(overrides)? {
            set_path(&mut value, &path, v)?;
        }
        broadcast_valencies(&mut value);
        let cfg: ExperimentConfig = serde_json::from_value(value)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.resource.validate()?;
        self.params.validate()?;
        if self.resource.n_ql > MAX_DEFAULT_N_QL && self.memory_cap == DEFAULT_MEMORY_CAP {
            return Err(Error::param(format!(
                "N_QL = {} is refused at the default memory cap: dense cost grows as (2 n_g)^(3 N_QL); \
                 set memory_cap explicitly to proceed",
                self.resource.n_ql
            )));
        }
        if self.bins == 0 {
            return Err(Error::param("bins must be positive"));
        }
        if self.n_samp == Some(0) {
            return Err(Error::param("n_samp must be at least 1"));
        }
        let t = &self.time;
        if !(t.t_end.is_finite() && t.t_end >= 0.0) || t.n_points == 0 {
            return Err(Error::param("time grid needs t_end >= 0 and n_points >= 1"));
        }
        if t.n_points > 1 && t.t_end == 0.0 {
            return Err(Error::param("time grid with several points needs t_end > 0"));
        }
        match self.experiment {
            ExperimentKind::OracleCheck if self.resource.n_g > ORACLE_MAX_N_G => {
                Err(Error::param(format!(
                    "oracle_check is limited to n_g <= {ORACLE_MAX_N_G}, got {}",
                    self.resource.n_g
                )))
            }
            ExperimentKind::OracleCheck if !(self.oracle.dt > 0.0 && self.oracle.tolerance >= 0.0) => {
                Err(Error::param("oracle needs dt > 0 and tolerance >= 0"))
            }
            ExperimentKind::ErrorFig4 => {
                let k = &self.resource.k;
                if k.iter().any(|&v| v != k[0]) {
                    return Err(Error::param("error_fig4 needs the same k on every bit"));
                }
                let sweep = self.sweep.clone().unwrap_or_default();
                if sweep.l_values.is_empty() || sweep.t_values.is_empty() {
                    return Err(Error::param("sweep needs l_values and t_values"));
                }
                Ok(())
            }
            ExperimentKind::PartialEigsCheck if self.partial_eigs.k == 0 => {
                Err(Error::param("partial_eigs.k must be at least 1"))
            }
            _ => Ok(()),
        }
    }

    /// Creates the output directory and checks that it accepts files.
    pub fn prepare_output_dir(&self) -> Result<()> {
        fs::create_dir_all(&self.output_dir)?;
        let probe = self.output_dir.join(".qlsync-write-probe");
        fs::write(&probe, b"")?;
        fs::remove_file(probe)?;
        Ok(())
    }

    /// The config as a JSON value with sorted keys.
    pub fn to_value(&self) -> Result<Value> {
        Ok(serde_json::to_value(self)?)
    }
}

/// Splits `--a.b-c value` / `--a.b-c=value` pairs into field paths and
/// values.
pub fn parse_overrides(args: &[String]) -> Result<Vec<(Vec<String>, Value)>> {
    let mut out = Vec::new();
    let mut it = args.iter();
    while let Some(arg) = it.next() {
        let name = arg
            .strip_prefix("--")
            .filter(|n| !n.is_empty())
            .ok_or_else(|| Error::param(format!("expected an override flag, got {arg:?}")))?;
        let (name, raw) = match name.split_once('=') {
            Some((n, v)) => (n, v.to_string()),
            None => {
                let v = it
                    .next()
                    .ok_or_else(|| Error::param(format!("override --{name} needs a value")))?;
                (name, v.clone())
            }
        };
        let path = name.split('.').map(|s| s.replace('-', "_")).collect();
        let value = serde_json::from_str(&raw).unwrap_or(Value::String(raw));
        out.push((path, value));
    }
    Ok(out)
}

fn set_path(root: &mut Value, path: &[String], value: Value) -> Result<()> {
    let (last, parents) = path.split_last().expect("override paths are nonempty");
    let mut node = root;
    for key in parents {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| Error::param(format!("override path {} crosses a non-object", path.join("."))))?;
        node = obj.entry(key.clone()).or_insert_with(|| Value::Object(Map::new()));
    }
    node.as_object_mut()
        .ok_or_else(|| Error::param(format!("override path {} crosses a non-object", path.join("."))))?
        .insert(last.clone(), value);
    Ok(())
}

fn broadcast_valencies(root: &mut Value) {
    let Some(res) = root.get_mut("resource").and_then(Value::as_object_mut) else {
        return;
    };
    let n_ql = res.get("n_ql").and_then(Value::as_u64).unwrap_or(1) as usize;
    for key in ["k", "l"] {
        if let Some(v) = res.get_mut(key) {
            if v.is_number() {
                *v = Value::Array(vec![v.clone(); n_ql]);
            }
        }
    }
}
