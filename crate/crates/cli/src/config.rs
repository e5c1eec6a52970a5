//! Experiment configuration files.
//!
//! A config is a TOML document with top-level `experiment`, `seed` and
//! `output_path` keys plus one table named after the experiment:
//!
//! ```toml
//! experiment = "ber_sweep"
//! seed = 7
//! output_path = "results/ber"
//!
//! [ber_sweep]
//! num_cells = [2]
//! xi = [0.0]
//! trials = 20000
//!
//! [ber_sweep.fading]
//! family = "nakagami"
//! m = 0.8
//! ```
//!
//! Every table rejects unknown keys.

use std::path::{Path, PathBuf};

use osatcom_core::channel_models::{FadingFamily, FadingSpec, DEFAULT_LOG_MU, DEFAULT_LOG_SIGMA};
use osatcom_core::link_sim::{default_spreading_length, NetworkConfig};
use osatcom_core::pulse::{default_kappa_min, DispersionTrend, PulseConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Pulse,
    Dispersion,
    Beamform,
    BerSweep,
    Convergence,
}

impl Experiment {
    pub fn csv_name(self) -> &'static str {
        match self {
            Self::Pulse => "pulse.csv",
            Self::Dispersion => "dispersion.csv",
            Self::Beamform => "beamform.csv",
            Self::BerSweep => "ber.csv",
            Self::Convergence => "convergence.csv",
        }
    }

    fn key(self) -> &'static str {
        match self {
            Self::Pulse => "pulse",
            Self::Dispersion => "dispersion",
            Self::Beamform => "beamform",
            Self::BerSweep => "ber_sweep",
            Self::Convergence => "convergence",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    #[serde(default)]
    pub seed: u64,
    pub output_path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pulse: Option<PulseParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dispersion: Option<DispersionParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beamform: Option<BeamformParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ber_sweep: Option<BerSweepParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub convergence: Option<ConvergenceParams>,
}

/// Fading family and its parameters. `var` is derived from the others.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FadingParams {
    #[serde(default = "default_family")]
    pub family: FadingFamily,
    #[serde(default = "default_m")]
    pub m: f64,
    #[serde(default = "one")]
    pub omega: f64,
    #[serde(default)]
    pub mean_sq: f64,
    #[serde(default = "default_log_mu")]
    pub log_mu: f64,
    #[serde(default = "default_log_sigma")]
    pub log_sigma: f64,
}

impl Default for FadingParams {
    fn default() -> Self {
        Self {
            family: default_family(),
            m: default_m(),
            omega: 1.0,
            mean_sq: 0.0,
            log_mu: DEFAULT_LOG_MU,
            log_sigma: DEFAULT_LOG_SIGMA,
        }
    }
}

impl FadingParams {
    pub fn spec(&self) -> FadingSpec {
        let mut spec = FadingSpec {
            family: self.family,
            m: self.m,
            omega: self.omega,
            log_mu: self.log_mu,
            log_sigma: self.log_sigma,
            mean_sq: self.mean_sq,
            var: 0.0,
        };
        spec.var = spec.derived_var();
        spec
    }
}

fn default_family() -> FadingFamily {
    FadingFamily::Nakagami
}
fn default_m() -> f64 {
    0.8
}
fn one() -> f64 {
    1.0
}
fn default_log_mu() -> f64 {
    DEFAULT_LOG_MU
}
fn default_log_sigma() -> f64 {
    DEFAULT_LOG_SIGMA
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseParams {
    pub bit_period: f64,
    pub amplitude: f64,
    /// One output row per threshold.
    pub papr_th_db: Vec<f64>,
    pub osnr_tar: f64,
    pub fiber_norm_sq: f64,
    pub noise_var: f64,
    #[serde(default = "default_kappa_min")]
    pub kappa_min: f64,
}

impl PulseParams {
    pub fn configs(&self) -> Vec<PulseConfig> {
        self.papr_th_db
            .iter()
            .map(|&papr_th_db| PulseConfig {
                bit_period: self.bit_period,
                amplitude: self.amplitude,
                papr_th_db,
                osnr_tar: self.osnr_tar,
                fiber_norm_sq: self.fiber_norm_sq,
                noise_var: self.noise_var,
                kappa_min: self.kappa_min,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DispersionParams {
    /// Width-independent dispersion coefficients (ps/km).
    pub static_coefficients: Vec<f64>,
    /// Pulse-broadening coefficient at full duty cycle (ps/km).
    pub broadening_full_width: f64,
    pub lengths_km: Vec<f64>,
    pub papr_th_db: Vec<f64>,
}

impl DispersionParams {
    pub fn trend(&self) -> DispersionTrend {
        DispersionTrend {
            static_coefficients: self.static_coefficients.clone(),
            broadening_full_width: self.broadening_full_width,
        }
    }
}

/// Cell layout shared by the network experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkParams {
    #[serde(default = "default_cells")]
    pub num_cells: usize,
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default)]
    pub fading: FadingParams,
    #[serde(default)]
    pub xi: f64,
    #[serde(default)]
    pub a_r_db: f64,
    #[serde(default = "one")]
    pub p_th: f64,
    #[serde(default = "default_i_th")]
    pub i_th: f64,
    #[serde(default)]
    pub solver: SolverParams,
}

fn default_cells() -> usize {
    2
}
fn default_dim() -> usize {
    2
}
fn default_i_th() -> f64 {
    0.1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverParams {
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
}

fn default_tol() -> f64 {
    1e-6
}
fn default_max_iterations() -> usize {
    500
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            tol: default_tol(),
            max_iterations: default_max_iterations(),
        }
    }
}

impl SolverParams {
    pub fn options(&self) -> osatcom_core::beamform::SolverOptions {
        osatcom_core::beamform::SolverOptions {
            tol: self.tol,
            max_iterations: self.max_iterations,
            ..Default::default()
        }
    }

    fn violations(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        if !(self.tol > 0.0) {
            out.push(("solver.tol".into(), format!("tol > 0 (got {})", self.tol)));
        }
        if self.max_iterations < 1 {
            out.push(("solver.max_iterations".into(), "max_iterations >= 1".into()));
        }
        out
    }
}

pub type BeamformParams = NetworkParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BerSweepParams {
    /// One sweep per (cell count, radius) pair.
    #[serde(default = "default_cell_list")]
    pub num_cells: Vec<usize>,
    #[serde(default = "default_xi_list")]
    pub xi: Vec<f64>,
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default)]
    pub fading: FadingParams,
    #[serde(default)]
    pub a_r_db: f64,
    #[serde(default = "one")]
    pub p_th: f64,
    #[serde(default = "default_i_th")]
    pub i_th: f64,
    #[serde(default = "default_snr_sweep")]
    pub snr_sweep_db: Vec<f64>,
    pub trials: usize,
    #[serde(default = "default_spreading_length")]
    pub spreading_length: usize,
    #[serde(default)]
    pub solver: SolverParams,
}

fn default_cell_list() -> Vec<usize> {
    vec![2]
}
fn default_xi_list() -> Vec<f64> {
    vec![0.0]
}
fn default_snr_sweep() -> Vec<f64> {
    (0..=15).map(f64::from).collect()
}

impl BerSweepParams {
    /// Network configs in output order: cell count outer, radius inner.
    pub fn networks(&self, seed: u64) -> Vec<NetworkConfig> {
        self.num_cells
            .iter()
            .flat_map(|&num_cells| {
                self.xi.iter().map(move |&xi| NetworkConfig {
                    num_cells,
                    dim: self.dim,
                    fading: self.fading.spec(),
                    xi,
                    a_r_db: self.a_r_db,
                    p_th: self.p_th,
                    i_th: self.i_th,
                    snr_sweep_db: self.snr_sweep_db.clone(),
                    trials: self.trials,
                    seed,
                    spreading_length: self.spreading_length,
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceParams {
    pub network: NetworkParams,
    pub budgets: Vec<usize>,
    pub runs: usize,
}

impl NetworkParams {
    pub fn network(&self, seed: u64) -> NetworkConfig {
        NetworkConfig {
            num_cells: self.num_cells,
            dim: self.dim,
            fading: self.fading.spec(),
            xi: self.xi,
            a_r_db: self.a_r_db,
            p_th: self.p_th,
            i_th: self.i_th,
            snr_sweep_db: vec![0.0],
            trials: 1,
            seed,
            spreading_length: default_spreading_length(),
        }
    }
}

fn prefixed<N: std::fmt::Display>(prefix: &str, items: Vec<(N, String)>) -> Vec<(String, String)> {
    items
        .into_iter()
        .map(|(name, reason)| (format!("{prefix}.{name}"), reason))
        .collect()
}

impl ExperimentConfig {
    pub fn parse(text: &str, path: &Path) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, path)
    }

    /// Canonical TOML of the effective configuration.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Every violated invariant as `(field path, constraint)` pairs.
    pub fn violations(&self) -> Vec<(String, String)> {
        let key = self.experiment.key();
        let mut out: Vec<(String, String)> = Vec::new();
        let present = [
            ("pulse", self.pulse.is_some()),
            ("dispersion", self.dispersion.is_some()),
            ("beamform", self.beamform.is_some()),
            ("ber_sweep", self.ber_sweep.is_some()),
            ("convergence", self.convergence.is_some()),
        ];
        for (name, is_set) in present {
            if name == key && !is_set {
                out.push((name.into(), format!("missing [{name}] table for experiment {key}")));
            }
            if name != key && is_set {
                out.push((
                    name.into(),
                    format!("[{name}] table does not belong to experiment {key}"),
                ));
            }
        }
        if let Some(p) = &self.pulse {
            if p.papr_th_db.is_empty() {
                out.push(("pulse.papr_th_db".into(), "at least one threshold".into()));
            }
            for (i, cfg) in p.configs().iter().enumerate() {
                for (name, reason) in cfg.violations() {
                    let entry = (format!("pulse.{name}"), reason);
                    // Shared fields would repeat once per threshold.
                    if name == "papr_th_db" {
                        out.push((format!("pulse.papr_th_db[{i}]"), entry.1));
                    } else if !out.contains(&entry) {
                        out.push(entry);
                    }
                }
            }
        }
        if let Some(d) = &self.dispersion {
            if d.lengths_km.is_empty() || d.lengths_km.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
                out.push((
                    "dispersion.lengths_km".into(),
                    "non-empty list of finite lengths > 0".into(),
                ));
            }
            if d.papr_th_db.is_empty() || d.papr_th_db.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
                out.push((
                    "dispersion.papr_th_db".into(),
                    "non-empty list of finite thresholds >= 0".into(),
                ));
            }
            if d.static_coefficients.iter().any(|c| !c.is_finite()) || !d.broadening_full_width.is_finite() {
                out.push((
                    "dispersion.static_coefficients".into(),
                    "coefficients must be finite".into(),
                ));
            }
        }
        if let Some(b) = &self.beamform {
            out.extend(prefixed("beamform", b.network(self.seed).violations()));
            out.extend(prefixed("beamform", b.solver.violations()));
        }
        if let Some(s) = &self.ber_sweep {
            if s.num_cells.is_empty() {
                out.push(("ber_sweep.num_cells".into(), "at least one cell count".into()));
            }
            if s.xi.is_empty() {
                out.push(("ber_sweep.xi".into(), "at least one radius".into()));
            }
            for net in s.networks(self.seed) {
                for entry in prefixed("ber_sweep", net.violations()) {
                    if !out.contains(&entry) {
                        out.push(entry);
                    }
                }
            }
            out.extend(prefixed("ber_sweep", s.solver.violations()));
        }
        if let Some(c) = &self.convergence {
            out.extend(prefixed(
                "convergence.network",
                c.network.network(self.seed).violations(),
            ));
            out.extend(prefixed("convergence.network", c.network.solver.violations()));
            if c.runs < 2 {
                out.push(("convergence.runs".into(), format!("runs >= 2 (got {})", c.runs)));
            }
            if c.budgets.is_empty() || c.budgets.contains(&0) {
                out.push((
                    "convergence.budgets".into(),
                    "non-empty list of positive budgets".into(),
                ));
            }
        }
        out
    }

    /// Applies command-line overrides.
    pub fn override_with(&mut self, seed: Option<u64>, out: Option<PathBuf>, trials: Option<usize>) {
        if let Some(seed) = seed {
            self.seed = seed;
        }
        if let Some(out) = out {
            self.output_path = out;
        }
        if let (Some(trials), Some(s)) = (trials, self.ber_sweep.as_mut()) {
            s.trials = trials;
        }
    }
}
