use std::io::Write;
use std::path::Path;

use qgan::circuit::NoiseVector;
use qgan::critic;
use qgan::pipeline::{io, NormStats};
use qgan::rng::{self, label};
use qgan::trainer::{TrainState, Trainer};
use serde::Serialize;

use crate::artifacts::{self, ConfigEcho, Manifest, CRITIC, GENERATOR, MANIFEST, STATE};
use crate::config::LoadedConfig;
use crate::error::{pipeline_error, CliError};

pub const CHECKPOINT_DIR: &str = "checkpoint";
pub const LOG: &str = "train_log.csv";
pub const TIMING: &str = "timing.csv";
pub const REPORT: &str = "metrics.json";

#[derive(Debug, Clone, Copy, Default)]
pub struct Options {
    pub fresh: bool,
    /// Absolute epoch at which to stop early.
    pub halt_after: Option<usize>,
}

#[derive(Serialize)]
struct ReportFile<'a> {
    provenance: &'a [String],
    report: &'a qgan::MetricsReport,
    critic_architecture: &'static str,
}

/// Whether the critic uses the built-in layer stack rather than one set in the config.
fn critic_label(c: &qgan::CriticConfig) -> &'static str {
    let d = qgan::CriticConfig::new(c.input_length, c.seed);
    if c.conv_layers == d.conv_layers && c.dense_layers == d.dense_layers {
        "default stand-in"
    } else {
        "configured"
    }
}

pub fn run(cfg: &LoadedConfig, opts: Options) -> Result<(), CliError> {
    let c = &cfg.config;
    if !c.window_matches() {
        return Err(CliError::Validation(format!(
            "window {} must equal 2 x {} qubits for training",
            c.pipeline.window, c.circuit.n_qubits
        )));
    }
    let (csv_path, meta_path) = (cfg.resolve(&c.paths.batch), cfg.resolve(&c.paths.batch_meta));
    let batch = io::read_batch(&csv_path, &meta_path).map_err(|e| pipeline_error(&csv_path, e))?;
    if batch.config != c.pipeline {
        return Err(CliError::Validation(format!(
            "{} was built with different pipeline settings; rerun preprocess",
            csv_path.display()
        )));
    }
    let norm_stats = batch.norm_stats;

    let dir = cfg.run_dir();
    if opts.fresh && dir.exists() {
        std::fs::remove_dir_all(&dir).map_err(CliError::io(&dir))?;
    }
    let prov = cfg.provenance("train");
    artifacts::write_file(&dir.join("config.json"), &artifacts::to_json(&ConfigEcho { provenance: prov.clone(), config: c.clone() }))?;

    let ckpt = dir.join(CHECKPOINT_DIR);
    let mut trainer = if ckpt.join(STATE).exists() {
        let manifest = artifacts::read_manifest(&ckpt)?;
        if manifest.config != *c {
            return Err(CliError::Validation(format!("{} belongs to a different config", ckpt.display())));
        }
        let path = ckpt.join(STATE);
        let state: TrainState = serde_json::from_slice(&artifacts::read_file(&path)?)
            .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        eprintln!("resuming from epoch {}", state.epoch);
        Trainer::from_state(batch, c.circuit, c.critic.clone(), c.train.clone(), state)?
    } else {
        Trainer::new(batch, c.circuit, c.critic.clone(), c.train.clone())?
    };

    let timing_path = dir.join(TIMING);
    let new_timing = !timing_path.exists();
    let mut timing = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&timing_path)
        .map_err(CliError::io(&timing_path))?;
    if new_timing {
        write!(timing, "{}epoch,seconds\n", artifacts::header(&prov)).map_err(CliError::io(&timing_path))?;
    }

    let halt = opts.halt_after.unwrap_or(usize::MAX);
    let every = c.train.checkpoint_every;
    let report_every = (c.train.epochs / 20).max(1);
    let mut saved = trainer.state().epoch;
    while !trainer.is_done() && trainer.state().epoch < halt {
        let row = match trainer.step_epoch() {
            Ok(row) => row.clone(),
            Err(e) => {
                eprintln!("training stopped; last good checkpoint is epoch {saved}");
                return Err(e.into());
            }
        };
        let seconds = trainer.timings().last().copied().unwrap_or_default();
        writeln!(timing, "{},{seconds}", row.epoch).map_err(CliError::io(&timing_path))?;
        if row.epoch % report_every == 0 {
            println!(
                "epoch {} critic {:.5} generator {:.5} W {:.5} EMD {:.3e} E_ACF_id {:.3e}",
                row.epoch, row.critic_loss, row.generator_loss, row.wasserstein_estimate, row.emd, row.e_acf_id
            );
        }
        if row.epoch % every == 0 {
            save(cfg, &dir, trainer.state(), norm_stats, &prov)?;
            saved = row.epoch;
        }
    }
    if saved != trainer.state().epoch || !ckpt.join(STATE).exists() {
        save(cfg, &dir, trainer.state(), norm_stats, &prov)?;
    }

    if trainer.is_done() {
        let n = c.metrics.final_samples;
        let noise: Vec<NoiseVector> = (0..n)
            .map(|b| NoiseVector::sample(&c.circuit, &mut rng::stream(c.seed, label::METRICS, &[u64::MAX, b as u64])))
            .collect();
        let report = trainer.evaluate(&noise)?;
        artifacts::write_file(&dir.join(REPORT), &artifacts::to_json(&ReportFile { provenance: &prov, report: &report, critic_architecture: critic_label(&c.critic) }))?;
        for (name, generated) in [("acf_generated.csv", true), ("acf_reference.csv", false)] {
            let mut buf = Vec::new();
            report.write_acf_csv(&mut buf, generated, &prov).expect("write to memory");
            artifacts::write_file(&dir.join(name), &buf)?;
        }
        println!(
            "final EMD {:.4e} E_ACF_id {:.4e} E_ACF_abs {:.4e} E_Lev {:.4e} (band {:.4e})",
            report.emd, report.e_acf_id, report.e_acf_abs, report.e_lev, report.ci_halfwidth
        );
    }
    println!("run directory: {}", dir.display());
    Ok(())
}

/// Replaces the checkpoint and the log together so both always describe
/// the same epoch.
fn save(cfg: &LoadedConfig, dir: &Path, state: &TrainState, norm_stats: NormStats, prov: &[String]) -> Result<(), CliError> {
    let c = &cfg.config;
    let tmp = dir.join("checkpoint.tmp");
    if tmp.exists() {
        std::fs::remove_dir_all(&tmp).map_err(CliError::io(&tmp))?;
    }
    let manifest = Manifest {
        provenance: prov.to_vec(),
        config_hash: c.hash12(),
        seed: c.seed,
        epoch: state.epoch,
        norm_stats,
        config: c.clone(),
    };
    artifacts::write_file(&tmp.join(MANIFEST), &artifacts::to_json(&manifest))?;
    artifacts::write_file(&tmp.join(GENERATOR), &artifacts::write_generator_csv(prov, &state.generator))?;
    let mut buf = Vec::new();
    critic::write_checkpoint(&mut buf, &c.critic, &state.critic, prov)
        .map_err(|e| CliError::Numerical(format!("critic checkpoint: {e}")))?;
    artifacts::write_file(&tmp.join(CRITIC), &buf)?;
    artifacts::write_file(&tmp.join(STATE), &artifacts::to_json(state))?;

    let ckpt = dir.join(CHECKPOINT_DIR);
    if ckpt.exists() {
        std::fs::remove_dir_all(&ckpt).map_err(CliError::io(&ckpt))?;
    }
    std::fs::rename(&tmp, &ckpt).map_err(CliError::io(&ckpt))?;

    let mut log = Vec::new();
    state.log.write_csv(&mut log, prov).expect("write to memory");
    artifacts::write_file(&dir.join(LOG), &log)
}
