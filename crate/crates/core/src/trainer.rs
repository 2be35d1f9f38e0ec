//! Wasserstein GAN training with gradient penalty.
//!
//! The critic maximizes `mean D(real) - mean D(fake) - lambda * GP` and the
//! generator maximizes `mean D(fake)`; both updates are Adam steps on the
//! negated objective. All randomness comes from labeled counter streams
//! keyed by `(epoch, step, sample)`, and per-sample work that runs in
//! parallel is reduced in sample order, so a run is bit-reproducible
//! regardless of thread count.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adam::{AdamConfig, AdamState};
use crate::circuit::{CircuitError, CircuitSpec, NoiseVector, ParameterSet};
use crate::critic::{self, CriticConfig, CriticError, CriticObjective, CriticParameters};
use crate::gradient::Gradients;
use crate::metrics::{self, MetricsError, MetricsReport};
use crate::mps::{self, MpsError};
use crate::pipeline::{self, PipelineError, WindowBatch};
use crate::rng::{self, label};
use crate::statevector::{self, StatevectorError};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("window length {window} does not match 2 x {n_qubits} qubits")]
    WindowMismatch { n_qubits: usize, window: usize },
    #[error("non-finite {what} at epoch {epoch}")]
    NonFiniteLoss { epoch: usize, what: &'static str },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error(transparent)]
    Statevector(#[from] StatevectorError),
    #[error(transparent)]
    Mps(#[from] MpsError),
    #[error(transparent)]
    Critic(#[from] CriticError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Backend {
    Statevector,
    Mps { max_bond: usize },
}

impl Backend {
    pub fn expectations(&self, spec: &CircuitSpec, params: &ParameterSet, noise: &NoiseVector) -> Result<Vec<f64>, TrainError> {
        Ok(match *self {
            Backend::Statevector => statevector::expectations(&statevector::run(spec, params, noise)?).into_values(),
            Backend::Mps { max_bond } => mps::mps_expectations(&mps::mps_run(spec, params, noise, max_bond)?).into_values(),
        })
    }

    /// Gradient of `upstream . expectations`: adjoint sweep on the dense
    /// backend, parameter shift on the MPS backend.
    pub fn gradient(
        &self,
        spec: &CircuitSpec,
        params: &ParameterSet,
        noise: &NoiseVector,
        upstream: &[f64],
    ) -> Result<Gradients, TrainError> {
        Ok(match *self {
            Backend::Statevector => statevector::adjoint_gradient(spec, params, noise, upstream)?,
            Backend::Mps { max_bond } => mps::mps_gradient(spec, params, noise, max_bond, upstream)?,
        })
    }
}

fn d_epochs() -> usize {
    100
}
fn d_batch() -> usize {
    64
}
fn d_n_critic() -> usize {
    5
}
fn d_lambda_gp() -> f64 {
    10.0
}
fn d_lr() -> f64 {
    1e-3
}
fn d_backend() -> Backend {
    Backend::Statevector
}
fn d_checkpoint_every() -> usize {
    100
}
fn d_metrics_samples() -> usize {
    256
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "d_epochs")]
    pub epochs: usize,
    #[serde(default = "d_batch")]
    pub batch_size: usize,
    #[serde(default = "d_n_critic")]
    pub critic_steps_per_gen_step: usize,
    #[serde(default = "d_lambda_gp")]
    pub lambda_gp: f64,
    #[serde(default = "d_lr")]
    pub learning_rate: f64,
    #[serde(default = "d_backend")]
    pub backend: Backend,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub adam: AdamConfig,
    #[serde(default = "d_checkpoint_every")]
    pub checkpoint_every: usize,
    /// Generated windows scored for each log row.
    #[serde(default = "d_metrics_samples")]
    pub metrics_samples: usize,
    /// Largest lag of the metric rows; `None` means half the window.
    #[serde(default)]
    pub tau_max: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: d_epochs(),
            batch_size: d_batch(),
            critic_steps_per_gen_step: d_n_critic(),
            lambda_gp: d_lambda_gp(),
            learning_rate: d_lr(),
            backend: d_backend(),
            seed: 0,
            adam: AdamConfig::default(),
            checkpoint_every: d_checkpoint_every(),
            metrics_samples: d_metrics_samples(),
            tau_max: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.into()));
        if self.epochs < 1 {
            return bad("epochs must be >= 1");
        }
        if self.batch_size < 2 {
            return bad("batch_size must be >= 2");
        }
        if self.critic_steps_per_gen_step < 1 {
            return bad("critic_steps_per_gen_step must be >= 1");
        }
        if !(self.lambda_gp >= 0.0 && self.lambda_gp.is_finite()) {
            return bad("lambda_gp must be finite and >= 0");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if let Backend::Mps { max_bond: 0 } = self.backend {
            return Err(TrainError::Mps(MpsError::InvalidBond(0)));
        }
        if self.metrics_samples < 2 {
            return bad("metrics_samples must be >= 2");
        }
        if self.checkpoint_every < 1 {
            return bad("checkpoint_every must be >= 1");
        }
        Ok(())
    }

    pub fn tau_max_for(&self, window: usize) -> usize {
        self.tau_max.unwrap_or(window / 2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLogRow {
    pub epoch: usize,
    pub critic_loss: f64,
    pub generator_loss: f64,
    pub wasserstein_estimate: f64,
    pub e_acf_id: f64,
    pub e_acf_abs: f64,
    pub e_lev: f64,
    pub emd: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub rows: Vec<TrainLogRow>,
}

pub const TRAIN_LOG_HEADER: &str =
    "epoch,critic_loss,generator_loss,wasserstein_estimate,E_ACF_id,E_ACF_abs,E_Lev,EMD,wall_time";

impl TrainLog {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// The `wall_time` column is left empty so logs stay byte-reproducible;
    /// timings go to a separate file.
    pub fn write_csv(&self, out: &mut impl Write, provenance: &[String]) -> std::io::Result<()> {
        for line in provenance {
            writeln!(out, "# {line}")?;
        }
        writeln!(out, "{TRAIN_LOG_HEADER}")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},",
                r.epoch, r.critic_loss, r.generator_loss, r.wasserstein_estimate, r.e_acf_id, r.e_acf_abs, r.e_lev, r.emd
            )?;
        }
        Ok(())
    }
}

/// Everything needed to continue a run bit-exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub generator: ParameterSet,
    pub critic: CriticParameters,
    pub generator_adam: AdamState,
    pub critic_adam: AdamState,
    pub epoch: usize,
    pub log: TrainLog,
}

fn check_finite(v: f64, epoch: usize, what: &'static str) -> Result<f64, TrainError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(TrainError::NonFiniteLoss { epoch, what })
    }
}

/// Generator outputs for each noise vector, in order.
pub fn generate_batch(
    backend: &Backend,
    spec: &CircuitSpec,
    params: &ParameterSet,
    noise: &[NoiseVector],
) -> Result<Vec<Vec<f64>>, TrainError> {
    noise.par_iter().map(|z| backend.expectations(spec, params, z)).collect()
}

/// `mean D(G(z_b))` and its gradient with respect to the generator parameters.
pub fn generator_objective(
    backend: &Backend,
    spec: &CircuitSpec,
    critic_cfg: &CriticConfig,
    critic: &CriticParameters,
    params: &ParameterSet,
    noise: &[NoiseVector],
) -> Result<(f64, Gradients), TrainError> {
    let fake = generate_batch(backend, spec, params, noise)?;
    let (scores, gx) = critic::input_gradients(critic_cfg, critic, &fake)?;
    let b = noise.len() as f64;
    let per_sample: Vec<Gradients> = noise
        .par_iter()
        .zip(gx.par_iter())
        .map(|(z, g)| {
            let upstream: Vec<f64> = g.iter().map(|v| v / b).collect();
            backend.gradient(spec, params, z, &upstream)
        })
        .collect::<Result<_, _>>()?;
    let mut total = Gradients::zeros(params.thetas.len(), params.lambdas.len());
    for g in &per_sample {
        total.add_assign(g);
    }
    Ok((scores.iter().sum::<f64>() / b, total))
}

/// One Adam ascent step of the critic objective; returns the objective before the step.
pub fn critic_step(
    critic_cfg: &CriticConfig,
    critic: &mut CriticParameters,
    adam: &mut AdamState,
    fake: &[Vec<f64>],
    real: &[Vec<f64>],
    eps: &[f64],
    cfg: &TrainConfig,
) -> Result<CriticObjective, TrainError> {
    let obj = critic::critic_objective(critic_cfg, critic, real, fake, eps, cfg.lambda_gp)?;
    let mut flat = critic.to_flat();
    let neg: Vec<f64> = obj.grads.to_flat().iter().map(|g| -g).collect();
    adam.update(&mut flat, &neg, cfg.learning_rate, &cfg.adam);
    critic.set_flat(&flat);
    Ok(obj)
}

/// One Adam ascent step of `mean D(G(z))`; returns the objective before the step.
#[allow(clippy::too_many_arguments)]
pub fn generator_step(
    spec: &CircuitSpec,
    critic_cfg: &CriticConfig,
    critic: &CriticParameters,
    params: &mut ParameterSet,
    adam: &mut AdamState,
    noise: &[NoiseVector],
    cfg: &TrainConfig,
) -> Result<f64, TrainError> {
    let (loss, grads) = generator_objective(&cfg.backend, spec, critic_cfg, critic, params, noise)?;
    let mut flat = params.to_flat();
    let neg: Vec<f64> = grads.to_flat().iter().map(|g| -g).collect();
    adam.update(&mut flat, &neg, cfg.learning_rate, &cfg.adam);
    params.set_flat(&flat);
    Ok(loss)
}

fn noise_batch(seed: u64, stream_label: u64, prefix: &[u64], count: usize, spec: &CircuitSpec) -> Vec<NoiseVector> {
    (0..count)
        .map(|b| {
            let mut counters = prefix.to_vec();
            counters.push(b as u64);
            NoiseVector::sample(spec, &mut rng::stream(seed, stream_label, &counters))
        })
        .collect()
}

pub struct Trainer {
    batch: WindowBatch,
    reference: Vec<Vec<f64>>,
    spec: CircuitSpec,
    critic_cfg: CriticConfig,
    cfg: TrainConfig,
    state: TrainState,
    timings: Vec<f64>,
}

impl Trainer {
    pub fn new(batch: WindowBatch, spec: CircuitSpec, critic_cfg: CriticConfig, cfg: TrainConfig) -> Result<Self, TrainError> {
        let generator = ParameterSet::random(&spec, &mut rng::stream(cfg.seed, label::INIT, &[0]));
        let critic = CriticParameters::init(&critic_cfg)?;
        let state = TrainState {
            generator_adam: AdamState::new(generator.len()),
            critic_adam: AdamState::new(critic.len()),
            generator,
            critic,
            epoch: 0,
            log: TrainLog::default(),
        };
        Self::from_state(batch, spec, critic_cfg, cfg, state)
    }

    pub fn from_state(
        batch: WindowBatch,
        spec: CircuitSpec,
        critic_cfg: CriticConfig,
        cfg: TrainConfig,
        state: TrainState,
    ) -> Result<Self, TrainError> {
        cfg.validate()?;
        spec.validate()?;
        critic_cfg.validate()?;
        let window = batch.window();
        if 2 * spec.n_qubits != window {
            return Err(TrainError::WindowMismatch { n_qubits: spec.n_qubits, window });
        }
        if critic_cfg.input_length != window {
            return Err(TrainError::InvalidConfig(format!(
                "critic input length {} differs from window {window}",
                critic_cfg.input_length
            )));
        }
        if batch.samples.is_empty() {
            return Err(TrainError::InvalidConfig("empty window batch".into()));
        }
        let tau_max = cfg.tau_max_for(window);
        if tau_max == 0 || tau_max >= window {
            return Err(TrainError::Metrics(MetricsError::InvalidTauMax { tau_max, window }));
        }
        state.generator.validate(&spec)?;
        let expected = CriticParameters::zeros(&critic_cfg)?;
        if state.critic.len() != expected.len()
            || state.critic_adam.m.len() != expected.len()
            || state.generator_adam.m.len() != state.generator.len()
        {
            return Err(TrainError::InvalidConfig("train state does not match configuration".into()));
        }
        let reference = pipeline::postprocess(&batch.samples, &batch.norm_stats, &batch.config)?;
        Ok(Self { batch, reference, spec, critic_cfg, cfg, state, timings: Vec::new() })
    }

    pub fn state(&self) -> &TrainState {
        &self.state
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn is_done(&self) -> bool {
        self.state.epoch >= self.cfg.epochs
    }

    /// Seconds spent in each epoch run by this instance.
    pub fn timings(&self) -> &[f64] {
        &self.timings
    }

    fn real_minibatch(&self, epoch: u64, step: u64) -> Vec<Vec<f64>> {
        let mut r = rng::stream(self.cfg.seed, label::MINIBATCH, &[epoch, step]);
        let n = self.batch.samples.len();
        (0..self.cfg.batch_size).map(|_| self.batch.samples[r.random_range(0..n)].clone()).collect()
    }

    /// `count` post-processed windows from the current generator.
    pub fn sample_returns(&self, noise: &[NoiseVector]) -> Result<Vec<Vec<f64>>, TrainError> {
        let raw = generate_batch(&self.cfg.backend, &self.spec, &self.state.generator, noise)?;
        Ok(pipeline::postprocess(&raw, &self.batch.norm_stats, &self.batch.config)?)
    }

    /// Metrics of the current generator against the post-processed training windows.
    pub fn evaluate(&self, noise: &[NoiseVector]) -> Result<MetricsReport, TrainError> {
        let generated = self.sample_returns(noise)?;
        let tau_max = self.cfg.tau_max_for(self.batch.window());
        Ok(metrics::stylized_fact_errors(&self.reference, &generated, tau_max)?)
    }

    pub fn step_epoch(&mut self) -> Result<&TrainLogRow, TrainError> {
        let start = std::time::Instant::now();
        let e = self.state.epoch as u64;
        let epoch = self.state.epoch + 1;
        let (seed, b, n_critic) = (self.cfg.seed, self.cfg.batch_size, self.cfg.critic_steps_per_gen_step);

        let mut last = None;
        for s in 0..n_critic as u64 {
            let real = self.real_minibatch(e, s);
            let noise = noise_batch(seed, label::NOISE, &[e, s], b, &self.spec);
            let fake = generate_batch(&self.cfg.backend, &self.spec, &self.state.generator, &noise)?;
            let mut er = rng::stream(seed, label::EPSILON, &[e, s]);
            let eps: Vec<f64> = (0..b).map(|_| er.random_range(0.0..=1.0)).collect();
            let obj = critic_step(
                &self.critic_cfg,
                &mut self.state.critic,
                &mut self.state.critic_adam,
                &fake,
                &real,
                &eps,
                &self.cfg,
            )?;
            check_finite(obj.loss, epoch, "critic loss")?;
            last = Some(obj);
        }
        let obj = last.expect("at least one critic step");

        let noise = noise_batch(seed, label::NOISE, &[e, n_critic as u64], b, &self.spec);
        let g_loss = generator_step(
            &self.spec,
            &self.critic_cfg,
            &self.state.critic,
            &mut self.state.generator,
            &mut self.state.generator_adam,
            &noise,
            &self.cfg,
        )?;
        check_finite(g_loss, epoch, "generator loss")?;
        if self.state.generator.to_flat().iter().any(|v| !v.is_finite()) {
            return Err(TrainError::NonFiniteLoss { epoch, what: "generator parameters" });
        }

        let metric_noise = noise_batch(seed, label::METRICS, &[e], self.cfg.metrics_samples, &self.spec);
        let report = self.evaluate(&metric_noise)?;
        let row = TrainLogRow {
            epoch,
            critic_loss: obj.loss,
            generator_loss: g_loss,
            wasserstein_estimate: obj.mean_real - obj.mean_fake,
            e_acf_id: report.e_acf_id,
            e_acf_abs: report.e_acf_abs,
            e_lev: report.e_lev,
            emd: report.emd,
        };
        for (v, what) in [(row.emd, "EMD"), (row.e_acf_id, "E_ACF_id"), (row.e_acf_abs, "E_ACF_abs"), (row.e_lev, "E_Lev")] {
            check_finite(v, epoch, what)?;
        }
        self.state.log.rows.push(row);
        self.state.epoch = epoch;
        self.timings.push(start.elapsed().as_secs_f64());
        Ok(self.state.log.rows.last().unwrap())
    }

    pub fn into_state(self) -> TrainState {
        self.state
    }
}

/// Runs all epochs and returns the final generator, critic and log.
pub fn train(
    batch: WindowBatch,
    circuit: CircuitSpec,
    critic_cfg: CriticConfig,
    cfg: TrainConfig,
) -> Result<(ParameterSet, CriticParameters, TrainLog), TrainError> {
    let mut t = Trainer::new(batch, circuit, critic_cfg, cfg)?;
    while !t.is_done() {
        t.step_epoch()?;
    }
    let s = t.into_state();
    Ok((s.generator, s.critic, s.log))
}
