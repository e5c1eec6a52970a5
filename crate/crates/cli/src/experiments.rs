use std::collections::BTreeMap;

use log::{info, warn};
use osatcom_core::link_sim::{self, convergence_stats, Formulation, Network};
use osatcom_core::pulse::solve_pulse;
use osatcom_core::rng::derive_seed;

use crate::config::{
    BerSweepParams, ConvergenceParams, DispersionParams, ExperimentConfig, NetworkParams, PulseParams,
};
use crate::output::{number, Table};
use crate::CliError;

/// Result table plus scalar summaries for the manifest.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub table: Table,
    pub summary: BTreeMap<String, f64>,
    pub warnings: Vec<String>,
}

impl Outcome {
    fn new(table: Table) -> Self {
        Self {
            table,
            summary: BTreeMap::new(),
            warnings: Vec::new(),
        }
    }

    fn warn(&mut self, message: String) {
        warn!("{message}");
        self.warnings.push(message);
    }
}

pub fn execute(config: &ExperimentConfig) -> Result<Outcome, CliError> {
    let missing = || CliError::Invalid(config.violations());
    match config.experiment {
        crate::config::Experiment::Pulse => pulse(config.pulse.as_ref().ok_or_else(missing)?),
        crate::config::Experiment::Dispersion => dispersion(config.dispersion.as_ref().ok_or_else(missing)?),
        crate::config::Experiment::Beamform => beamform(config.beamform.as_ref().ok_or_else(missing)?, config.seed),
        crate::config::Experiment::BerSweep => ber_sweep(config.ber_sweep.as_ref().ok_or_else(missing)?, config.seed),
        crate::config::Experiment::Convergence => {
            convergence(config.convergence.as_ref().ok_or_else(missing)?, config.seed)
        }
    }
}

fn pulse(params: &PulseParams) -> Result<Outcome, CliError> {
    let mut out = Outcome::new(Table::new(["papr_th_db", "t1", "kappa", "overlap_prob", "binding"]));
    let mut best = f64::INFINITY;
    for cfg in params.configs() {
        let s = solve_pulse(&cfg)?;
        best = best.min(s.overlap_prob);
        out.table.push(vec![
            number(cfg.papr_th_db),
            number(s.t1),
            number(s.kappa),
            number(s.overlap_prob),
            s.binding.to_string(),
        ]);
    }
    out.summary.insert("min_overlap_prob".into(), best);
    Ok(out)
}

fn dispersion(params: &DispersionParams) -> Result<Outcome, CliError> {
    let mut out = Outcome::new(Table::new(["length_km", "papr_th_db", "total_dispersion_ps"]));
    let trend = params.trend();
    let mut max = 0.0f64;
    for &length in &params.lengths_km {
        for &papr in &params.papr_th_db {
            let total = trend.total_for_papr(papr, length)?;
            max = max.max(total);
            out.table.push(vec![number(length), number(papr), number(total)]);
        }
    }
    out.summary.insert("max_total_dispersion_ps".into(), max);
    Ok(out)
}

fn beamform(params: &NetworkParams, seed: u64) -> Result<Outcome, CliError> {
    let mut out = Outcome::new(Table::new([
        "cell",
        "capacity_bits",
        "tr_q",
        "max_interference",
        "mu1_max",
        "mu2",
        "kkt_residual",
        "iterations",
    ]));
    let network = Network::build(&params.network(seed))?;
    let problems = network.problems(Formulation::Robust)?;
    let solved = network.solve(Formulation::Robust, &params.solver.options())?;
    for w in solved.warnings {
        out.warn(w);
    }
    let mut total = 0.0;
    let mut worst_kkt = 0.0f64;
    for (cell, (s, p)) in solved.solutions.iter().zip(&problems).enumerate() {
        let tr_q: f64 = (0..s.q.nrows()).map(|i| s.q[(i, i)].re).sum();
        let mu1_max = s.mu1.iter().copied().fold(0.0, f64::max);
        total += s.capacity;
        worst_kkt = worst_kkt.max(s.kkt_residual);
        out.table.push(vec![
            cell.to_string(),
            number(s.capacity),
            number(tr_q),
            number(s.max_interference(p)),
            number(mu1_max),
            number(s.mu2),
            number(s.kkt_residual),
            s.iterations.to_string(),
        ]);
    }
    out.summary
        .insert("mean_capacity_bits".into(), total / problems.len() as f64);
    out.summary.insert("max_kkt_residual".into(), worst_kkt);
    Ok(out)
}

fn ber_sweep(params: &BerSweepParams, seed: u64) -> Result<Outcome, CliError> {
    let widest = params.num_cells.iter().copied().max().unwrap_or(0);
    let mut header = vec!["snr_db".to_string(), "num_cells".into(), "xi".into()];
    header.extend((0..widest).map(|a| format!("per_cell_ber_{a}")));
    header.push("network_error".into());
    let mut out = Outcome::new(Table::new(header));
    let options = params.solver.options();
    let mut worst = 0.0f64;
    for net in params.networks(seed) {
        info!("ber sweep: {} cells, xi {}", net.num_cells, net.xi);
        let (solved, results) = link_sim::run_ber_sweep(&net, &options)?;
        for w in solved.warnings {
            out.warn(w);
        }
        for r in results {
            for w in r.warnings {
                out.warn(format!("{} cells, xi {}: {w}", net.num_cells, net.xi));
            }
            worst = worst.max(r.network_error);
            let mut row = vec![number(r.snr_db), net.num_cells.to_string(), number(net.xi)];
            row.extend(r.per_cell_ber.iter().map(|&p| number(p)));
            row.extend((net.num_cells..widest).map(|_| String::new()));
            row.push(number(r.network_error));
            out.table.push(row);
        }
    }
    out.summary.insert("max_network_error".into(), worst);
    Ok(out)
}

fn convergence(params: &ConvergenceParams, seed: u64) -> Result<Outcome, CliError> {
    let mut out = Outcome::new(Table::new(["budget", "formulation", "std_dev"]));
    let network = Network::build(&params.network.network(seed))?;
    let ensembles = [Formulation::Robust, Formulation::ReverseTriangle]
        .into_iter()
        .map(|f| Ok((f, network.problems(f)?)))
        .collect::<Result<Vec<_>, CliError>>()?;
    let run_seeds: Vec<u64> = (0..params.runs as u64).map(|r| derive_seed(seed, &[r])).collect();
    let series = convergence_stats(
        &ensembles,
        &params.network.solver.options(),
        &run_seeds,
        &params.budgets,
    )?;
    for (k, &budget) in params.budgets.iter().enumerate() {
        for s in &series {
            out.table.push(vec![
                budget.to_string(),
                s.formulation.to_string(),
                number(s.std_dev[k]),
            ]);
        }
    }
    for s in &series {
        let last = s.std_dev.last().copied().unwrap_or(0.0);
        out.summary.insert(format!("final_std_dev_{}", s.formulation), last);
    }
    Ok(out)
}
