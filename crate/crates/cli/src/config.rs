//! The run configuration: one JSON document per experiment.

use std::path::{Path, PathBuf};

use qgan::circuit::CircuitSpec;
use qgan::critic::CriticConfig;
use qgan::pipeline::PipelineConfig;
use qgan::statevector::MAX_QUBITS;
use qgan::trainer::{Backend, TrainConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    /// `date,close` price CSV read by `preprocess`.
    #[serde(default)]
    pub input: Option<PathBuf>,
    #[serde(default = "d_batch")]
    pub batch: PathBuf,
    #[serde(default = "d_batch_meta")]
    pub batch_meta: PathBuf,
    /// Parent of the per-run directories.
    #[serde(default = "d_runs")]
    pub runs: PathBuf,
}

fn d_batch() -> PathBuf {
    "batch.csv".into()
}
fn d_batch_meta() -> PathBuf {
    "batch.meta".into()
}
fn d_runs() -> PathBuf {
    "runs".into()
}

impl Default for Paths {
    fn default() -> Self {
        Self { input: None, batch: d_batch(), batch_meta: d_batch_meta(), runs: d_runs() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsSettings {
    /// `None` means half the window.
    #[serde(default)]
    pub tau_max: Option<usize>,
    #[serde(default = "d_qq_points")]
    pub qq_points: usize,
    #[serde(default = "d_pdf_bins")]
    pub pdf_bins: usize,
    /// Windows generated for the final report of a training run.
    #[serde(default = "d_final_samples")]
    pub final_samples: usize,
}

fn d_qq_points() -> usize {
    99
}
fn d_pdf_bins() -> usize {
    50
}
fn d_final_samples() -> usize {
    1024
}

impl Default for MetricsSettings {
    fn default() -> Self {
        Self { tau_max: None, qq_points: d_qq_points(), pdf_bins: d_pdf_bins(), final_samples: d_final_samples() }
    }
}

impl MetricsSettings {
    pub fn tau_max_for(&self, window: usize) -> usize {
        self.tau_max.unwrap_or(window / 2)
    }
}

/// Depth and bond grid of `fidelity-sweep`. Qubit count and topology come
/// from the `circuit` section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSettings {
    #[serde(default = "d_depths")]
    pub depths: Vec<usize>,
    #[serde(default = "d_bonds")]
    pub bonds: Vec<usize>,
    #[serde(default = "d_sweep_seeds")]
    pub seeds: usize,
}

fn d_depths() -> Vec<usize> {
    (1..=18).collect()
}
fn d_bonds() -> Vec<usize> {
    vec![1, 8, 16, 24, 32]
}
fn d_sweep_seeds() -> usize {
    5
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self { depths: d_depths(), bonds: d_bonds(), seeds: d_sweep_seeds() }
    }
}

fn d_critic() -> CriticConfig {
    CriticConfig::new(0, 0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub paths: Paths,
    #[serde(default)]
    pub pipeline: PipelineConfig,
    pub circuit: CircuitSpec,
    #[serde(default = "d_critic")]
    pub critic: CriticConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub metrics: MetricsSettings,
    #[serde(default)]
    pub fidelity_sweep: SweepSettings,
}

/// Command-line values that replace config entries.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub epochs: Option<usize>,
    pub backend: Option<BackendKind>,
    pub bond: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum BackendKind {
    Statevector,
    Mps,
}

/// A validated config plus the directory its relative paths resolve against.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub base: PathBuf,
}

impl LoadedConfig {
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
        let mut config: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        config.apply(overrides)?;
        config.validate()?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self { config, base })
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    pub fn run_dir(&self) -> PathBuf {
        self.resolve(&self.config.paths.runs).join(format!("run-{}-s{}", self.config.hash12(), self.config.seed))
    }

    pub fn provenance(&self, command: &str) -> Vec<String> {
        provenance(command, &self.config.hash12(), self.config.seed)
    }
}

pub fn provenance(command: &str, config_hash: &str, seed: u64) -> Vec<String> {
    vec![format!("qgan {VERSION} {command}"), format!("config {config_hash}"), format!("seed {seed}")]
}

impl RunConfig {
    /// Sub-seeds and the critic input length are derived from the top level.
    fn apply(&mut self, o: &Overrides) -> Result<(), CliError> {
        for (what, s) in [("train.seed", self.train.seed), ("critic.seed", self.critic.seed)] {
            if s != 0 && s != self.seed {
                return Err(CliError::Validation(format!(
                    "{what} = {s} conflicts with seed = {}; sub-seeds follow the top-level seed",
                    self.seed
                )));
            }
        }
        if self.critic.input_length != 0 && self.critic.input_length != self.pipeline.window {
            return Err(CliError::Validation(format!(
                "critic.input_length {} differs from pipeline.window {}",
                self.critic.input_length, self.pipeline.window
            )));
        }
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(e) = o.epochs {
            self.train.epochs = e;
        }
        self.train.seed = self.seed;
        self.critic.seed = self.seed;
        self.critic.input_length = self.pipeline.window;

        let current_bond = match self.train.backend {
            Backend::Mps { max_bond } => Some(max_bond),
            Backend::Statevector => None,
        };
        self.train.backend = match (o.backend, o.bond) {
            (Some(BackendKind::Statevector), Some(_)) => {
                return Err(CliError::validation("--bond applies only to the mps backend"))
            }
            (Some(BackendKind::Statevector), None) => Backend::Statevector,
            (Some(BackendKind::Mps), bond) => match bond.or(current_bond) {
                Some(max_bond) => Backend::Mps { max_bond },
                None => return Err(CliError::validation("--backend mps needs --bond or a configured max_bond")),
            },
            (None, Some(max_bond)) => Backend::Mps { max_bond },
            (None, None) => self.train.backend,
        };
        if let Some(b) = o.bond {
            self.fidelity_sweep.bonds = vec![b];
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.pipeline.validate().map_err(CliError::validation)?;
        self.circuit.validate().map_err(CliError::validation)?;
        self.critic.validate().map_err(CliError::validation)?;
        self.train.validate().map_err(CliError::validation)?;
        let m = self.pipeline.window;
        for (what, tau) in [("train.tau_max", self.train.tau_max_for(m)), ("metrics.tau_max", self.metrics.tau_max_for(m))] {
            if tau == 0 || tau >= m {
                return Err(CliError::Validation(format!("{what} = {tau} must lie in [1, window = {m})")));
            }
        }
        if self.metrics.qq_points < 2 || self.metrics.pdf_bins < 2 || self.metrics.final_samples < 2 {
            return Err(CliError::validation("metrics.qq_points, pdf_bins and final_samples must be >= 2"));
        }
        let s = &self.fidelity_sweep;
        if s.depths.is_empty() || s.depths.contains(&0) {
            return Err(CliError::validation("fidelity_sweep.depths must be non-empty and >= 1"));
        }
        if s.bonds.is_empty() || s.bonds.contains(&0) {
            return Err(CliError::validation("bond dimension must be >= 1"));
        }
        if s.seeds == 0 {
            return Err(CliError::validation("fidelity_sweep.seeds must be >= 1"));
        }
        if self.circuit.n_qubits > MAX_QUBITS {
            return Err(CliError::Validation(format!(
                "{} qubits exceed the dense-simulation limit of {MAX_QUBITS}",
                self.circuit.n_qubits
            )));
        }
        Ok(())
    }

    /// Whether the window matches the generator output length `2n`.
    pub fn window_matches(&self) -> bool {
        2 * self.circuit.n_qubits == self.pipeline.window
    }

    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// First 12 hex digits of the SHA-256 of the config with seeds zeroed,
    /// so runs differing only in seed share a prefix.
    pub fn hash12(&self) -> String {
        let mut c = self.clone();
        c.seed = 0;
        c.train.seed = 0;
        c.critic.seed = 0;
        hex(&Sha256::digest(c.canonical_json().as_bytes()))[..12].to_string()
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
