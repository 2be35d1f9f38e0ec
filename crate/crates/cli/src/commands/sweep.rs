use qgan::circuit::{CircuitSpec, NoiseVector, ParameterSet};
use qgan::mps;
use qgan::rng::{self, label};
use qgan::statevector;
use rayon::prelude::*;
use serde::Serialize;

use crate::artifacts;
use crate::config::LoadedConfig;
use crate::error::CliError;

pub const CSV: &str = "fidelity.csv";
pub const SUMMARY: &str = "fidelity_summary.json";

/// Allowed drop in fidelity when the bond dimension grows.
pub const MONOTONE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub depth: usize,
    pub bond: usize,
    pub seed: usize,
    pub fidelity: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BondMean {
    pub depth: usize,
    pub bond: usize,
    pub mean_fidelity: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepSummary {
    pub provenance: Vec<String>,
    pub n_qubits: usize,
    pub rows: usize,
    /// Smallest bond that represents every state on this many qubits exactly.
    pub exact_bond: usize,
    pub monotonicity_violations: usize,
    pub exact_regime_failures: usize,
    pub min_fidelity_at_max_bond: f64,
    pub means: Vec<BondMean>,
}

/// Fidelity of the truncated MPS against the dense state for every
/// `(depth, bond, seed)`, ordered by depth, seed, then ascending bond.
pub fn sweep(base: &CircuitSpec, run_seed: u64, depths: &[usize], bonds: &[usize], seeds: usize) -> Result<Vec<SweepRow>, CliError> {
    let mut bonds = bonds.to_vec();
    bonds.sort_unstable();
    bonds.dedup();
    let cases: Vec<(usize, usize)> = depths.iter().flat_map(|&d| (0..seeds).map(move |j| (d, j))).collect();
    let per_case: Vec<Result<Vec<SweepRow>, CliError>> = cases
        .par_iter()
        .map(|&(depth, j)| {
            let spec = CircuitSpec::new(base.n_qubits, depth, base.topology).map_err(CliError::validation)?;
            let counters = [depth as u64, j as u64];
            let params = ParameterSet::random(&spec, &mut rng::stream(run_seed, label::INIT, &counters));
            let noise = NoiseVector::sample(&spec, &mut rng::stream(run_seed, label::NOISE, &counters));
            let exact = statevector::run(&spec, &params, &noise).map_err(CliError::validation)?;
            bonds
                .iter()
                .map(|&bond| {
                    let state = mps::mps_run(&spec, &params, &noise, bond)?;
                    Ok(SweepRow { depth, bond, seed: j, fidelity: mps::fidelity_dense(&state, &exact)? })
                })
                .collect()
        })
        .collect();
    let mut rows = Vec::new();
    for r in per_case {
        rows.extend(r?);
    }
    Ok(rows)
}

/// Adjacent-bond comparisons at fixed `(depth, seed)` whose fidelity drops
/// by more than [`MONOTONE_TOLERANCE`].
pub fn monotonicity_violations(rows: &[SweepRow]) -> usize {
    rows.windows(2)
        .filter(|w| w[0].depth == w[1].depth && w[0].seed == w[1].seed && w[0].bond < w[1].bond)
        .filter(|w| w[1].fidelity < w[0].fidelity - MONOTONE_TOLERANCE)
        .count()
}

pub fn summarize(rows: &[SweepRow], n_qubits: usize, provenance: Vec<String>) -> SweepSummary {
    let exact_bond = 1usize << (n_qubits / 2);
    let max_bond = rows.iter().map(|r| r.bond).max().unwrap_or(0);
    let at_max = rows.iter().filter(|r| r.bond == max_bond);
    let min_fidelity_at_max_bond = at_max.clone().map(|r| r.fidelity).fold(f64::INFINITY, f64::min);
    let exact_regime_failures = rows
        .iter()
        .filter(|r| r.bond >= exact_bond && r.fidelity < 1.0 - MONOTONE_TOLERANCE)
        .count();

    let mut keys: Vec<(usize, usize)> = rows.iter().map(|r| (r.depth, r.bond)).collect();
    keys.sort_unstable();
    keys.dedup();
    let means = keys
        .into_iter()
        .map(|(depth, bond)| {
            let f: Vec<f64> = rows.iter().filter(|r| r.depth == depth && r.bond == bond).map(|r| r.fidelity).collect();
            BondMean { depth, bond, mean_fidelity: f.iter().sum::<f64>() / f.len() as f64 }
        })
        .collect();
    SweepSummary {
        provenance,
        n_qubits,
        rows: rows.len(),
        exact_bond,
        monotonicity_violations: monotonicity_violations(rows),
        exact_regime_failures,
        min_fidelity_at_max_bond,
        means,
    }
}

pub fn run(cfg: &LoadedConfig) -> Result<(), CliError> {
    let c = &cfg.config;
    let s = &c.fidelity_sweep;
    let rows = sweep(&c.circuit, c.seed, &s.depths, &s.bonds, s.seeds)?;
    let prov = cfg.provenance("fidelity-sweep");
    let dir = cfg.run_dir();

    let mut csv = artifacts::header(&prov);
    csv.push_str("depth,bond,seed,fidelity\n");
    for r in &rows {
        csv.push_str(&format!("{},{},{},{}\n", r.depth, r.bond, r.seed, r.fidelity));
    }
    artifacts::write_file(&dir.join(CSV), csv.as_bytes())?;
    let summary = summarize(&rows, c.circuit.n_qubits, prov);
    artifacts::write_file(&dir.join(SUMMARY), &artifacts::to_json(&summary))?;

    println!("rows: {}", summary.rows);
    println!("min fidelity at largest bond: {}", summary.min_fidelity_at_max_bond);
    println!("monotonicity violations: {}", summary.monotonicity_violations);
    println!("wrote {}", dir.join(CSV).display());
    if summary.monotonicity_violations > 0 || summary.exact_regime_failures > 0 {
        return Err(CliError::Numerical(format!(
            "{} monotonicity violations, {} exact-regime failures",
            summary.monotonicity_violations, summary.exact_regime_failures
        )));
    }
    Ok(())
}
