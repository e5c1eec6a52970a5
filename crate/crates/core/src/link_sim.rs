//! Multi-cell BPSK link simulation with CDMA spreading.
//!
//! Every cell `a` transmits one BPSK stream through its principal beam `b_a`
//! (from the optimized `Q_a`). Receiver `a` sees
//!
//! ```text
//! Y_a = √ρ·H₁,a·b_a·(s_a·c) + Σ_{b≠a} H₂,b→a·b_b·(s_b·c) + N_a
//! ```
//!
//! over the `L` chips of the spreading code `c`, where `ρ` is the rain power
//! factor, `H₁,a` a fresh fading draw per trial and `H₂,b→a = H̃₂,b→a + Δ` the
//! true interference channel: the cell's fixed estimate plus an error drawn
//! uniformly from the Frobenius ball of radius ξ. All cells reuse the same
//! code, so inter-cell interference survives despreading. The receiver
//! despreads and applies maximum-ratio combining with perfect knowledge of
//! its own effective channel.
//!
//! The sweep SNR `γ` sets the per-symbol noise variance to
//! `σ² = ρ·P_Th·Tr{D}/M / γ`, the rain-attenuated SNR of isotropic
//! full-power transmission. Chip noise has variance `L·σ²`, so despreading
//! leaves the symbol-level SNR unchanged.

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::beamform::{solve_cell, BeamSolution, CellProblem, SolverOptions};
use crate::channel_models::{complex_gaussian, rain_factor, sample_channel_matrix, FadingSpec, MomentMatrix};
use crate::error::{Error, Result};
use crate::linalg::{self, ComplexMatrix, ComplexVector};
use crate::rng::stream;

const ESTIMATE_TAG: u64 = 1;
const CHANNEL_TAG: u64 = 2;
const SYMBOL_TAG: u64 = 3;
const ERROR_TAG: u64 = 4;
const NOISE_TAG: u64 = 5;

/// Walsh code shared by every cell: row 1, or the all-ones row when the
/// code has a single chip.
fn shared_code(length: usize) -> Result<SpreadingCode> {
    SpreadingCode::walsh(length, usize::from(length > 1))
}

/// Fewer errors than this at a sweep point triggers a warning.
pub const MIN_ERRORS: u64 = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub num_cells: usize,
    pub dim: usize,
    pub fading: FadingSpec,
    pub xi: f64,
    pub a_r_db: f64,
    pub p_th: f64,
    pub i_th: f64,
    pub snr_sweep_db: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    #[serde(default = "default_spreading_length")]
    pub spreading_length: usize,
}

pub fn default_spreading_length() -> usize {
    8
}

impl NetworkConfig {
    pub fn violations(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        if self.num_cells < 1 {
            out.push(("num_cells", "num_cells >= 1".to_string()));
        }
        if self.dim < 1 {
            out.push(("dim", "dim >= 1".to_string()));
        }
        if self.trials < 1 {
            out.push(("trials", "trials >= 1".to_string()));
        }
        if self.snr_sweep_db.is_empty() {
            out.push(("snr_sweep_db", "sweep must be non-empty".to_string()));
        }
        if self.snr_sweep_db.iter().any(|x| !x.is_finite()) {
            out.push(("snr_sweep_db", "sweep points must be finite".to_string()));
        }
        if !(self.xi >= 0.0) || !self.xi.is_finite() {
            out.push(("xi", format!("xi >= 0 (got {})", self.xi)));
        }
        if !self.a_r_db.is_finite() {
            out.push(("a_r_db", "a_r_db must be finite".to_string()));
        }
        if !(self.p_th > 0.0) || !self.p_th.is_finite() {
            out.push(("p_th", format!("p_th > 0 (got {})", self.p_th)));
        }
        if !(self.i_th > 0.0) {
            out.push(("i_th", format!("i_th > 0 (got {})", self.i_th)));
        }
        if !self.spreading_length.is_power_of_two() {
            out.push((
                "spreading_length",
                format!(
                    "spreading_length must be a power of two (got {})",
                    self.spreading_length
                ),
            ));
        }
        for (name, reason) in self.fading.violations() {
            out.push((name, reason));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        match self.violations().into_iter().next() {
            None => Ok(()),
            Some((name, reason)) => Err(Error::invalid(name, reason)),
        }
    }

    /// Per-symbol noise variance at sweep SNR `snr_db`.
    pub fn noise_var(&self, moment: &MomentMatrix, snr_db: f64) -> f64 {
        let reference = rain_factor(self.a_r_db) * self.p_th * linalg::trace_re(&moment.d) / self.dim as f64;
        reference / 10f64.powf(snr_db / 10.0)
    }
}

/// ±1 spreading sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpreadingCode {
    pub chips: Vec<i8>,
    pub length: usize,
}

impl SpreadingCode {
    /// Row `index` of the Sylvester Hadamard matrix of order `length`.
    pub fn walsh(length: usize, index: usize) -> Result<Self> {
        if !length.is_power_of_two() {
            return Err(Error::invalid("length", format!("power of two (got {length})")));
        }
        if index >= length {
            return Err(Error::invalid("index", format!("index < {length} (got {index})")));
        }
        let chips = (0..length)
            .map(|k| {
                if (index & k).count_ones().is_multiple_of(2) {
                    1
                } else {
                    -1
                }
            })
            .collect();
        Ok(Self { chips, length })
    }

    pub fn dot(&self, other: &Self) -> Result<i64> {
        if self.length != other.length {
            return Err(Error::LengthMismatch {
                expected: self.length,
                found: other.length,
            });
        }
        Ok(self
            .chips
            .iter()
            .zip(&other.chips)
            .map(|(&a, &b)| i64::from(a) * i64::from(b))
            .sum())
    }
}

pub fn spread(symbols: &[Complex64], code: &SpreadingCode) -> Vec<Complex64> {
    symbols
        .iter()
        .flat_map(|&s| code.chips.iter().map(move |&c| s * f64::from(c)))
        .collect()
}

/// Correlates each block of `L` chips with the code and divides by `L`.
pub fn despread(chips: &[Complex64], code: &SpreadingCode) -> Result<Vec<Complex64>> {
    if !chips.len().is_multiple_of(code.length) {
        return Err(Error::LengthMismatch {
            expected: code.length,
            found: chips.len(),
        });
    }
    Ok(chips
        .chunks(code.length)
        .map(|block| {
            let sum: Complex64 = block.iter().zip(&code.chips).map(|(&y, &c)| y * f64::from(c)).sum();
            sum / code.length as f64
        })
        .collect())
}

/// Interfering transmitter as seen by one receiver.
#[derive(Debug, Clone, Copy)]
pub struct Interferer<'a> {
    pub weights: &'a ComplexMatrix,
    pub channel: &'a ComplexMatrix,
    pub symbols: &'a ComplexMatrix,
}

/// `H₁·B·S + Σ H₂,b·B_b·S_b + N` with `N` i.i.d. `CN(0, noise_var)`.
///
/// No noise is drawn when `noise_var` is zero.
pub fn assemble_received<R: Rng + ?Sized>(
    weights: &ComplexMatrix,
    h1: &ComplexMatrix,
    interferers: &[Interferer<'_>],
    noise_var: f64,
    symbols: &ComplexMatrix,
    rng: &mut R,
) -> Result<ComplexMatrix> {
    let product = |h: &ComplexMatrix, b: &ComplexMatrix, s: &ComplexMatrix| -> Result<ComplexMatrix> {
        if h.ncols() != b.nrows() {
            return Err(Error::dims(format!("{} transmit antennas", h.ncols()), b.nrows()));
        }
        if b.ncols() != s.nrows() {
            return Err(Error::dims(format!("{} streams", b.ncols()), s.nrows()));
        }
        Ok(h * b * s)
    };
    let mut y = product(h1, weights, symbols)?;
    for (k, i) in interferers.iter().enumerate() {
        let term = product(i.channel, i.weights, i.symbols)?;
        if term.shape() != y.shape() {
            return Err(Error::dims(
                format!("{:?} received block", y.shape()),
                format!("{:?} from interferer {k}", term.shape()),
            ));
        }
        y += term;
    }
    if !(noise_var >= 0.0) {
        return Err(Error::invalid("noise_var", format!("noise_var >= 0 (got {noise_var})")));
    }
    if noise_var > 0.0 {
        for j in 0..y.ncols() {
            for i in 0..y.nrows() {
                y[(i, j)] += complex_gaussian(rng, noise_var);
            }
        }
    }
    Ok(y)
}

/// `1 − ∏(1 − pₐ)`, accumulated as `P ← P + (1 − P)·pₐ`.
pub fn network_error_probability(per_cell: &[f64]) -> Result<f64> {
    if let Some((index, &value)) = per_cell.iter().enumerate().find(|(_, p)| !(0.0..=1.0).contains(*p)) {
        return Err(Error::OutOfRange { index, value });
    }
    Ok(per_cell.iter().fold(0.0, |acc, &p| acc + (1.0 - acc) * p))
}

/// Textbook BPSK bit error rate over Rayleigh fading at average SNR `γ`.
pub fn rayleigh_bpsk_ber(snr_linear: f64) -> f64 {
    0.5 * (1.0 - (snr_linear / (1.0 + snr_linear)).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Formulation {
    /// Worst-case interference bound over the uncertainty ball.
    Robust,
    /// Pessimistic reverse-triangle signal matrix with nominal interference.
    ReverseTriangle,
}

impl std::fmt::Display for Formulation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Robust => "robust",
            Self::ReverseTriangle => "reverse_triangle",
        })
    }
}

/// Per-cell solutions, with best iterates standing in for cells that hit
/// the iteration cap.
#[derive(Debug, Clone)]
pub struct NetworkSolution {
    pub solutions: Vec<BeamSolution>,
    pub warnings: Vec<String>,
}

/// Network geometry: the moment matrix shared by all main channels and one
/// fixed estimated channel per ordered pair of cells.
#[derive(Debug, Clone)]
pub struct Network {
    pub config: NetworkConfig,
    pub moment: MomentMatrix,
    /// `estimates[a][b]`: estimated channel from cell `a`'s transmitter to
    /// cell `b`'s receiver (`None` on the diagonal).
    pub estimates: Vec<Vec<Option<ComplexMatrix>>>,
}

impl Network {
    /// Draws the estimated interference channels. The draw for a pair
    /// depends only on the seed and the pair, so networks of different size
    /// share the channels of their common cells.
    pub fn build(config: &NetworkConfig) -> Result<Self> {
        config.validate()?;
        let moment = MomentMatrix::for_spec(&config.fading, config.dim)?;
        let a = config.num_cells;
        let estimates = (0..a)
            .map(|from| {
                (0..a)
                    .map(|to| {
                        if from == to {
                            return Ok(None);
                        }
                        let mut rng = stream(config.seed, &[ESTIMATE_TAG, from as u64, to as u64]);
                        sample_channel_matrix(&config.fading, config.dim, &mut rng).map(Some)
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            config: config.clone(),
            moment,
            estimates,
        })
    }

    fn estimates_from(&self, cell: usize) -> Vec<ComplexMatrix> {
        self.estimates[cell].iter().flatten().cloned().collect()
    }

    /// One problem per cell, built from that cell's own estimates only.
    pub fn problems(&self, formulation: Formulation) -> Result<Vec<CellProblem>> {
        let c = &self.config;
        (0..c.num_cells)
            .map(|cell| {
                let h2 = self.estimates_from(cell);
                let caps = vec![c.i_th; h2.len()];
                match formulation {
                    Formulation::Robust => CellProblem::robust(&self.moment, &h2, c.xi, c.a_r_db, c.p_th, caps),
                    Formulation::ReverseTriangle => {
                        CellProblem::reverse_triangle_baseline(&self.moment, &h2, c.xi, c.a_r_db, c.p_th, caps)
                    }
                }
            })
            .collect()
    }

    /// Solves every cell independently.
    pub fn solve(&self, formulation: Formulation, options: &SolverOptions) -> Result<NetworkSolution> {
        let problems = self.problems(formulation)?;
        let outcomes: Vec<Result<(BeamSolution, Option<String>)>> = problems
            .par_iter()
            .enumerate()
            .map(|(index, p)| match solve_cell(p, options) {
                Ok(s) => Ok((s, None)),
                Err(Error::MaxIterations {
                    iterations,
                    kkt_residual,
                    best,
                }) => Ok((
                    *best,
                    Some(format!(
                        "cell {index}: solver stopped after {iterations} iterations (kkt residual {kkt_residual:e}); using best iterate"
                    )),
                )),
                Err(e) => Err(Error::Cell {
                    index,
                    source: Box::new(e),
                }),
            })
            .collect();
        let mut solutions = Vec::with_capacity(outcomes.len());
        let mut warnings = Vec::new();
        for outcome in outcomes {
            let (s, w) = outcome?;
            solutions.push(s);
            warnings.extend(w);
        }
        Ok(NetworkSolution { solutions, warnings })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub snr_db: f64,
    pub per_cell_errors: Vec<u64>,
    pub per_cell_ber: Vec<f64>,
    pub network_error: f64,
    pub mean_capacity: f64,
    pub solver_opt_values: Vec<f64>,
    pub trials: usize,
    pub warnings: Vec<String>,
}

impl TrialResult {
    /// Standard error of each per-cell BER estimate.
    pub fn standard_errors(&self) -> Vec<f64> {
        self.per_cell_ber
            .iter()
            .map(|&p| (p * (1.0 - p) / self.trials as f64).sqrt())
            .collect()
    }
}

/// Uniform draw from the Frobenius ball of radius `xi` in `C^{dim×dim}`.
fn ball_error<R: Rng + ?Sized>(xi: f64, dim: usize, rng: &mut R) -> ComplexMatrix {
    if xi == 0.0 {
        return ComplexMatrix::zeros(dim, dim);
    }
    let g = ComplexMatrix::from_fn(dim, dim, |_, _| complex_gaussian(rng, 1.0));
    let real_dim = (2 * dim * dim) as f64;
    let radius = xi * rng.random::<f64>().powf(1.0 / real_dim);
    g.scale(radius / linalg::frobenius_norm(&g))
}

fn bpsk<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    if rng.random::<bool>() {
        1.0
    } else {
        -1.0
    }
}

/// Decision statistic of one trial for every cell: the despread,
/// noise-free received vector, the despread unit-variance noise, and the
/// receiver's effective channel.
struct CellObservation {
    clean: ComplexVector,
    noise: ComplexVector,
    channel: ComplexVector,
    symbol: f64,
}

fn observe_trial(
    network: &Network,
    beams: &[ComplexMatrix],
    code: &SpreadingCode,
    trial: u64,
) -> Result<Vec<CellObservation>> {
    let c = &network.config;
    let seed = c.seed;
    let dim = c.dim;
    let gain = rain_factor(c.a_r_db).sqrt();
    let symbols: Vec<f64> = (0..c.num_cells)
        .map(|cell| bpsk(&mut stream(seed, &[SYMBOL_TAG, trial, cell as u64])))
        .collect();
    let chip_rows: Vec<ComplexMatrix> = symbols
        .iter()
        .map(|&s| {
            let chips = spread(&[Complex64::new(s, 0.0)], code);
            ComplexMatrix::from_row_slice(1, chips.len(), &chips)
        })
        .collect();

    (0..c.num_cells)
        .map(|cell| {
            let mut rng = stream(seed, &[CHANNEL_TAG, trial, cell as u64]);
            let h1 = sample_channel_matrix(&c.fading, dim, &mut rng)?.scale(gain);
            let true_channels: Vec<(usize, ComplexMatrix)> = (0..c.num_cells)
                .filter(|&from| from != cell)
                .map(|from| {
                    let mut rng = stream(seed, &[ERROR_TAG, trial, from as u64, cell as u64]);
                    let estimate = network.estimates[from][cell].as_ref().expect("off-diagonal estimate");
                    (from, estimate + ball_error(c.xi, dim, &mut rng))
                })
                .collect();
            let interferers: Vec<Interferer<'_>> = true_channels
                .iter()
                .map(|(from, h)| Interferer {
                    weights: &beams[*from],
                    channel: h,
                    symbols: &chip_rows[*from],
                })
                .collect();
            let received = assemble_received(&beams[cell], &h1, &interferers, 0.0, &chip_rows[cell], &mut rng)?;

            let mut noise_rng = stream(seed, &[NOISE_TAG, trial, cell as u64]);
            let chip_var = code.length as f64;
            let mut clean = ComplexVector::zeros(dim);
            let mut noise = ComplexVector::zeros(dim);
            for r in 0..dim {
                let row: Vec<Complex64> = received.row(r).iter().copied().collect();
                clean[r] = despread(&row, code)?[0];
                let chips: Vec<Complex64> = (0..code.length)
                    .map(|_| complex_gaussian(&mut noise_rng, chip_var))
                    .collect();
                noise[r] = despread(&chips, code)?[0];
            }
            let channel = &h1 * &beams[cell];
            Ok(CellObservation {
                clean,
                noise,
                channel: channel.column(0).into_owned(),
                symbol: symbols[cell],
            })
        })
        .collect()
}

/// Monte Carlo BER of every cell at every sweep SNR.
///
/// Each trial draws fresh main channels, channel errors, symbols and noise
/// from streams keyed by the trial index; the same draws serve every sweep
/// point. Error counts are integers, so the parallel reduction is exact and
/// the result depends only on the seed.
pub fn ber_bpsk_montecarlo(network: &Network, solutions: &[BeamSolution]) -> Result<Vec<TrialResult>> {
    let c = &network.config;
    if solutions.len() != c.num_cells {
        return Err(Error::dims(format!("{} solutions", c.num_cells), solutions.len()));
    }
    let code = shared_code(c.spreading_length)?;
    let beams: Vec<ComplexMatrix> = solutions
        .iter()
        .map(|s| {
            let b = s.principal_beam();
            ComplexMatrix::from_column_slice(b.len(), 1, b.as_slice())
        })
        .collect();
    for b in &beams {
        if b.nrows() != c.dim {
            return Err(Error::dims(format!("{}-antenna beam", c.dim), b.nrows()));
        }
    }
    let sigmas: Vec<f64> = c
        .snr_sweep_db
        .iter()
        .map(|&snr| c.noise_var(&network.moment, snr).sqrt())
        .collect();
    let points = sigmas.len();
    let cells = c.num_cells;

    let counts = (0..c.trials as u64)
        .into_par_iter()
        .map(|trial| -> Result<Vec<u64>> {
            let obs = observe_trial(network, &beams, &code, trial)?;
            let mut errors = vec![0u64; points * cells];
            for (cell, o) in obs.iter().enumerate() {
                let signal = o.channel.dotc(&o.clean).re;
                let noise = o.channel.dotc(&o.noise).re;
                for (p, sigma) in sigmas.iter().enumerate() {
                    if (signal + sigma * noise) * o.symbol <= 0.0 {
                        errors[p * cells + cell] += 1;
                    }
                }
            }
            Ok(errors)
        })
        .try_reduce(
            || vec![0u64; points * cells],
            |mut acc, x| {
                for (a, b) in acc.iter_mut().zip(x) {
                    *a += b;
                }
                Ok(acc)
            },
        )?;

    let capacities: Vec<f64> = solutions.iter().map(|s| s.capacity).collect();
    let mean_capacity = capacities.iter().sum::<f64>() / cells as f64;
    c.snr_sweep_db
        .iter()
        .enumerate()
        .map(|(p, &snr_db)| {
            let per_cell_errors = counts[p * cells..(p + 1) * cells].to_vec();
            let per_cell_ber: Vec<f64> = per_cell_errors.iter().map(|&e| e as f64 / c.trials as f64).collect();
            let warnings = per_cell_errors
                .iter()
                .enumerate()
                .filter(|(_, &e)| e < MIN_ERRORS)
                .map(|(cell, e)| {
                    format!(
                        "cell {cell} at {snr_db} dB: only {e} errors in {} trials; BER estimate is unreliable",
                        c.trials
                    )
                })
                .collect();
            Ok(TrialResult {
                snr_db,
                network_error: network_error_probability(&per_cell_ber)?,
                per_cell_errors,
                per_cell_ber,
                mean_capacity,
                solver_opt_values: capacities.clone(),
                trials: c.trials,
                warnings,
            })
        })
        .collect()
}

/// Builds the network, solves the robust problems and runs the BER sweep.
pub fn run_ber_sweep(config: &NetworkConfig, options: &SolverOptions) -> Result<(NetworkSolution, Vec<TrialResult>)> {
    let network = Network::build(config)?;
    let solved = network.solve(Formulation::Robust, options)?;
    let results = ber_bpsk_montecarlo(&network, &solved.solutions)?;
    Ok((solved, results))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceSeries {
    pub formulation: Formulation,
    pub budgets: Vec<usize>,
    /// Sample standard deviation across runs of the ensemble-mean capacity.
    pub std_dev: Vec<f64>,
    pub mean: Vec<f64>,
}

/// Starting multipliers for one run: the defaults scaled by factors drawn
/// log-uniformly from `[0.1, 10]`.
fn perturbed_start(problem: &CellProblem, options: &SolverOptions, run_seed: u64, index: usize) -> (Vec<f64>, f64) {
    let mut rng = stream(run_seed, &[index as u64]);
    let mut factor = || 10f64.powf(2.0 * rng.random::<f64>() - 1.0);
    let mu1 = problem.g_list.iter().map(|_| options.initial_mu1 * factor()).collect();
    let mu2 = options.initial_mu2 * factor();
    (mu1, mu2)
}

/// Spread of the optimal values reached within each iteration budget.
///
/// For every formulation and budget, each run solves the whole ensemble from
/// its own perturbed dual start (seeded by `run_seeds`) with the iteration
/// cap set to the budget; cells that hit the cap contribute their best
/// feasible iterate.
pub fn convergence_stats(
    ensembles: &[(Formulation, Vec<CellProblem>)],
    options: &SolverOptions,
    run_seeds: &[u64],
    budgets: &[usize],
) -> Result<Vec<ConvergenceSeries>> {
    if run_seeds.len() < 2 {
        return Err(Error::invalid(
            "runs",
            format!("at least 2 runs (got {})", run_seeds.len()),
        ));
    }
    if budgets.is_empty() || budgets.contains(&0) {
        return Err(Error::invalid("budgets", "budgets must be non-empty and positive"));
    }
    ensembles
        .iter()
        .map(|(formulation, problems)| {
            let mut std_dev = Vec::with_capacity(budgets.len());
            let mut mean = Vec::with_capacity(budgets.len());
            for &budget in budgets {
                let values = run_seeds
                    .par_iter()
                    .map(|&run_seed| -> Result<f64> {
                        let mut total = 0.0;
                        for (index, p) in problems.iter().enumerate() {
                            let opts = SolverOptions {
                                max_iterations: budget,
                                initial_multipliers: Some(perturbed_start(p, options, run_seed, index)),
                                ..options.clone()
                            };
                            total += match solve_cell(p, &opts) {
                                Ok(s) => s.capacity,
                                Err(Error::MaxIterations { best, .. }) => best.capacity,
                                Err(e) => return Err(e),
                            };
                        }
                        Ok(total / problems.len().max(1) as f64)
                    })
                    .collect::<Result<Vec<f64>>>()?;
                let n = values.len() as f64;
                let m = values.iter().sum::<f64>() / n;
                let var = values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
                mean.push(m);
                std_dev.push(var.sqrt());
            }
            Ok(ConvergenceSeries {
                formulation: *formulation,
                budgets: budgets.to_vec(),
                std_dev,
                mean,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel_models::FadingSpec;

    fn config(num_cells: usize, dim: usize, trials: usize) -> NetworkConfig {
        NetworkConfig {
            num_cells,
            dim,
            fading: FadingSpec::nakagami(0.8, 1.0, 0.5),
            xi: 0.0,
            a_r_db: 0.0,
            p_th: 1.0,
            i_th: 0.1,
            snr_sweep_db: vec![0.0, 5.0, 10.0],
            trials,
            seed: 7,
            spreading_length: 8,
        }
    }

    #[test]
    fn walsh_codes_are_orthogonal() {
        for length in [1, 2, 4, 8, 16] {
            for i in 0..length {
                let a = SpreadingCode::walsh(length, i).unwrap();
                assert!(a.chips.iter().all(|&c| c == 1 || c == -1));
                for j in 0..length {
                    let b = SpreadingCode::walsh(length, j).unwrap();
                    assert_eq!(a.dot(&b).unwrap(), if i == j { length as i64 } else { 0 });
                }
            }
        }
        assert!(SpreadingCode::walsh(6, 0).is_err());
        assert!(SpreadingCode::walsh(4, 4).is_err());
    }

    #[test]
    fn spreading_round_trip_and_cross_code() {
        let c1 = SpreadingCode::walsh(4, 1).unwrap();
        let c2 = SpreadingCode::walsh(4, 2).unwrap();
        let s = [Complex64::new(1.0, 0.0)];
        assert_eq!(despread(&spread(&s, &c1), &c1).unwrap(), s.to_vec());
        let many = [
            Complex64::new(-1.0, 0.0),
            Complex64::new(1.0, 0.0),
            Complex64::new(0.5, -2.0),
        ];
        assert_eq!(despread(&spread(&many, &c1), &c1).unwrap(), many.to_vec());
        assert_eq!(despread(&spread(&s, &c2), &c1).unwrap(), vec![Complex64::new(0.0, 0.0)]);
        assert!(matches!(
            despread(&s, &c1),
            Err(Error::LengthMismatch { expected: 4, found: 1 })
        ));
    }

    #[test]
    fn assemble_noiseless_single_cell() {
        let mut rng = stream(1, &[]);
        let h1 = ComplexMatrix::from_fn(2, 2, |_, _| complex_gaussian(&mut rng, 1.0));
        let s = ComplexMatrix::from_fn(2, 3, |_, _| complex_gaussian(&mut rng, 1.0));
        let y = assemble_received(&linalg::identity(2), &h1, &[], 0.0, &s, &mut rng).unwrap();
        assert_eq!(y, &h1 * &s);

        let zero = ComplexMatrix::zeros(2, 2);
        let h2 = ComplexMatrix::from_fn(2, 2, |_, _| complex_gaussian(&mut rng, 1.0));
        let idle = Interferer {
            weights: &zero,
            channel: &h2,
            symbols: &s,
        };
        let with_idle = assemble_received(&linalg::identity(2), &h1, &[idle], 0.0, &s, &mut rng).unwrap();
        assert_eq!(with_idle, y);

        let bad = ComplexMatrix::zeros(3, 1);
        assert!(assemble_received(&bad, &h1, &[], 0.0, &s, &mut rng).is_err());
    }

    #[test]
    fn noise_only_variance() {
        let mut rng = stream(2, &[]);
        let s = ComplexMatrix::zeros(1, 500_000);
        let w = ComplexMatrix::zeros(2, 1);
        let y = assemble_received(&w, &linalg::identity(2), &[], 0.3, &s, &mut rng).unwrap();
        let power = y.iter().map(|z| z.norm_sqr()).sum::<f64>() / y.len() as f64;
        assert!((power / 0.3 - 1.0).abs() < 0.02, "{power}");
    }

    #[test]
    fn network_error_examples() {
        assert_eq!(network_error_probability(&[0.3]).unwrap(), 0.3);
        assert_eq!(network_error_probability(&[0.1, 0.1]).unwrap(), 0.19);
        assert_eq!(network_error_probability(&[0.5, 0.5, 0.5]).unwrap(), 0.875);
        assert_eq!(network_error_probability(&[0.2, 1.0, 0.4]).unwrap(), 1.0);
        assert_eq!(network_error_probability(&[]).unwrap(), 0.0);
        assert!(matches!(
            network_error_probability(&[0.1, 1.5]),
            Err(Error::OutOfRange { index: 1, .. })
        ));
        assert!(network_error_probability(&[f64::NAN]).is_err());
    }

    #[test]
    fn config_violations_are_reported() {
        let mut c = config(0, 2, 0);
        c.snr_sweep_db.clear();
        c.spreading_length = 6;
        c.fading.m = -1.0;
        let names: Vec<_> = c.violations().into_iter().map(|(n, _)| n).collect();
        for expected in ["num_cells", "trials", "snr_sweep_db", "spreading_length", "m"] {
            assert!(names.contains(&expected), "{expected} missing from {names:?}");
        }
        assert!(config(2, 2, 10).violations().is_empty());
    }

    #[test]
    fn noiseless_interference_free_link_is_error_free() {
        let mut c = config(1, 2, 2000);
        c.snr_sweep_db = vec![300.0];
        let (_, results) = run_ber_sweep(&c, &SolverOptions::default()).unwrap();
        assert_eq!(results[0].per_cell_errors, vec![0]);
        assert_eq!(results[0].network_error, 0.0);
        assert_eq!(results[0].warnings.len(), 1);
    }

    #[test]
    fn sweep_is_seed_deterministic_and_thread_independent() {
        let c = config(2, 2, 3000);
        let (_, a) = run_ber_sweep(&c, &SolverOptions::default()).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let (_, b) = pool.install(|| run_ber_sweep(&c, &SolverOptions::default())).unwrap();
        assert_eq!(a, b);
        for r in &a {
            assert!(r.per_cell_ber.iter().all(|p| (0.0..=1.0).contains(p)));
            let max = r.per_cell_ber.iter().cloned().fold(0.0, f64::max);
            assert!(r.network_error >= max);
        }
    }

    #[test]
    fn estimates_shared_across_network_sizes() {
        let small = Network::build(&config(2, 2, 1)).unwrap();
        let large = Network::build(&config(4, 2, 1)).unwrap();
        assert_eq!(small.estimates[0][1], large.estimates[0][1]);
        assert_eq!(small.estimates[1][0], large.estimates[1][0]);
        assert!(large.estimates[2][2].is_none());
    }

    #[test]
    fn ball_errors_stay_in_ball() {
        let mut rng = stream(3, &[]);
        for _ in 0..1000 {
            let d = ball_error(0.4, 2, &mut rng);
            assert!(linalg::frobenius_norm(&d) <= 0.4 + 1e-12);
        }
        assert_eq!(ball_error(0.0, 3, &mut rng), ComplexMatrix::zeros(3, 3));
    }

    #[test]
    fn convergence_identical_seeds_have_zero_spread() {
        let network = Network::build(&config(2, 2, 1)).unwrap();
        let ensembles = vec![
            (Formulation::Robust, network.problems(Formulation::Robust).unwrap()),
            (
                Formulation::ReverseTriangle,
                network.problems(Formulation::ReverseTriangle).unwrap(),
            ),
        ];
        let series = convergence_stats(&ensembles, &SolverOptions::default(), &[5, 5, 5], &[1, 4, 50]).unwrap();
        assert_eq!(series.len(), 2);
        for s in &series {
            assert!(s.std_dev.iter().all(|&x| x == 0.0));
        }
        let spread = convergence_stats(&ensembles, &SolverOptions::default(), &[1, 2, 3, 4], &[1, 500]).unwrap();
        for s in &spread {
            assert!(s.std_dev[1] < 1e-6, "{:?}", s);
        }
        assert!(convergence_stats(&ensembles, &SolverOptions::default(), &[1], &[1]).is_err());
    }

    #[test]
    fn rayleigh_formula_limits() {
        assert_eq!(rayleigh_bpsk_ber(0.0), 0.5);
        assert!((rayleigh_bpsk_ber(1.0) - 0.5 * (1.0 - 0.5f64.sqrt())).abs() < 1e-15);
        assert!(rayleigh_bpsk_ber(1e6) < 1e-6);
    }
}
