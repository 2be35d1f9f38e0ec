use std::path::Path;

use qgan::circuit::NoiseVector;
use qgan::pipeline::{self, io};
use qgan::rng::{self, label};
use qgan::trainer::generate_batch;

use crate::artifacts::{self, GENERATOR};
use crate::config::VERSION;
use crate::error::{pipeline_error, CliError};

pub fn run(checkpoint: &Path, count: usize, seed: u64, out: &Path, raw: bool) -> Result<(), CliError> {
    let manifest = artifacts::read_manifest(checkpoint)?;
    manifest.config.validate()?;
    let c = &manifest.config;
    if !c.window_matches() {
        return Err(CliError::validation("checkpoint window does not match its circuit"));
    }
    let params = artifacts::read_generator_csv(&checkpoint.join(GENERATOR), &c.circuit)?;
    let hash = artifacts::checkpoint_hash(checkpoint)?;
    let prov = vec![
        format!("qgan {VERSION} generate"),
        format!("config {}", manifest.config_hash),
        format!("checkpoint sha256:{hash}"),
        format!("epoch {}", manifest.epoch),
        format!("seed {seed}"),
    ];

    let noise: Vec<NoiseVector> = (0..count)
        .map(|b| NoiseVector::sample(&c.circuit, &mut rng::stream(seed, label::GENERATE, &[b as u64])))
        .collect();
    let expectations = generate_batch(&c.train.backend, &c.circuit, &params, &noise)?;
    if let Some((row, v)) = expectations
        .iter()
        .enumerate()
        .find_map(|(r, w)| w.iter().find(|v| !(-1.0..=1.0).contains(*v)).map(|v| (r, *v)))
    {
        return Err(CliError::Numerical(format!("expectation {v} in row {row} lies outside [-1, 1]")));
    }
    let returns = pipeline::postprocess(&expectations, &manifest.norm_stats, &c.pipeline)
        .map_err(|e| pipeline_error(out, e))?;

    let m = c.pipeline.window;
    let mut buf = Vec::new();
    io::write_windows_csv(&mut buf, &returns, m, &prov).map_err(|e| pipeline_error(out, e))?;
    artifacts::write_file(out, &buf)?;
    if raw {
        let raw_path = artifacts::with_suffix(out, ".raw");
        let mut buf = Vec::new();
        io::write_windows_csv(&mut buf, &expectations, m, &prov).map_err(|e| pipeline_error(&raw_path, e))?;
        artifacts::write_file(&raw_path, &buf)?;
    }
    println!("wrote {count} windows to {}", out.display());
    Ok(())
}
