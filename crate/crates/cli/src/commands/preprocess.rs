use qgan::pipeline::{self, io};

use crate::config::LoadedConfig;
use crate::error::{pipeline_error, CliError};

pub fn run(cfg: &LoadedConfig) -> Result<(), CliError> {
    let c = &cfg.config;
    let input = c
        .paths
        .input
        .as_ref()
        .map(|p| cfg.resolve(p))
        .ok_or_else(|| CliError::validation("paths.input is required for preprocess"))?;
    if !c.window_matches() {
        eprintln!(
            "warning: window {} differs from 2 x {} qubits; train will refuse this config",
            c.pipeline.window, c.circuit.n_qubits
        );
    }
    let prices = io::load_price_csv(&input).map_err(|e| pipeline_error(&input, e))?;
    let batch = pipeline::preprocess(&prices, &c.pipeline).map_err(|e| pipeline_error(&input, e))?;

    let (csv_path, meta_path) = (cfg.resolve(&c.paths.batch), cfg.resolve(&c.paths.batch_meta));
    for p in [&csv_path, &meta_path] {
        if let Some(parent) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(CliError::io(parent))?;
        }
    }
    io::write_batch(&batch, &csv_path, &meta_path, &cfg.provenance("preprocess"))
        .map_err(|e| pipeline_error(&csv_path, e))?;

    let (lo, hi) = batch
        .samples
        .iter()
        .flatten()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let in_range = batch.samples.iter().flatten().all(|v| (-1.0..=1.0).contains(v));
    println!("windows: {}", batch.num_windows());
    println!("window: {} stride: {}", batch.config.window, batch.config.stride);
    println!("range: [{lo}, {hi}] within [-1, 1]: {in_range}");
    println!("mean: {} std: {}", batch.norm_stats.mean, batch.norm_stats.std);
    println!("wrote {}", csv_path.display());
    Ok(())
}
