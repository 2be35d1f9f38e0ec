//! Price ingestion and the four-step transform into generator space.
//!
//! Forward: log returns, then (i) standardize, (ii) Lambert-W Gaussianize,
//! (iii) clip to `[-c, c]` and divide by `c`, (iv) cut into rolling windows.
//! [`postprocess`] undoes (iii)..(i) entry by entry.

pub mod io;
mod lambert;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use io::{load_price_csv, read_batch, read_windows_csv, write_batch, write_windows_csv};
pub use lambert::{lambert_degaussianize, lambert_gaussianize, lambert_w};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("input file not found: {0}")]
    MissingFile(std::path::PathBuf),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error in row {row}: {msg}")]
    ParseError { row: usize, msg: String },
    #[error("non-positive price in row {0}")]
    NonPositivePrice(usize),
    #[error("date in row {0} does not strictly increase")]
    NonMonotoneDate(usize),
    #[error("series too short: need at least {need} values, got {got}")]
    TooShort { need: usize, got: usize },
    #[error("series has zero variance")]
    ZeroVariance,
    #[error("Lambert W is only defined here for x >= 0, got {0}")]
    NegativeArgument(f64),
    #[error("series of length {len} is shorter than the window {window}")]
    SeriesTooShort { len: usize, window: usize },
    #[error("entry ({row}, {col}) = {value} lies outside [-1, 1]")]
    OutOfRange { row: usize, col: usize, value: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// Daily closing prices in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    timestamps: Vec<NaiveDate>,
    prices: Vec<f64>,
}

impl PriceSeries {
    pub fn new(timestamps: Vec<NaiveDate>, prices: Vec<f64>) -> Result<Self, PipelineError> {
        if timestamps.len() != prices.len() {
            return Err(PipelineError::InvalidConfig(format!(
                "{} timestamps for {} prices",
                timestamps.len(),
                prices.len()
            )));
        }
        if prices.len() < 2 {
            return Err(PipelineError::TooShort { need: 2, got: prices.len() });
        }
        for (i, &p) in prices.iter().enumerate() {
            if !(p > 0.0 && p.is_finite()) {
                return Err(PipelineError::NonPositivePrice(i + 1));
            }
        }
        for i in 1..timestamps.len() {
            if timestamps[i] <= timestamps[i - 1] {
                return Err(PipelineError::NonMonotoneDate(i + 1));
            }
        }
        Ok(Self { timestamps, prices })
    }

    pub fn timestamps(&self) -> &[NaiveDate] {
        &self.timestamps
    }

    pub fn prices(&self) -> &[f64] {
        &self.prices
    }

    pub fn len(&self) -> usize {
        self.prices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prices.is_empty()
    }
}

/// Log returns (or any per-step transform of them).
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnSeries(Vec<f64>);

impl ReturnSeries {
    pub fn new(values: Vec<f64>) -> Result<Self, PipelineError> {
        if let Some(row) = values.iter().position(|v| !v.is_finite()) {
            return Err(PipelineError::ParseError { row: row + 1, msg: "non-finite value".into() });
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Mean and sample standard deviation removed in step (i).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Lambert-W shape parameter.
    #[serde(default = "PipelineConfig::default_delta")]
    pub delta: f64,
    #[serde(default = "PipelineConfig::default_clip_bound")]
    pub clip_bound: f64,
    #[serde(default = "PipelineConfig::default_window")]
    pub window: usize,
    #[serde(default = "PipelineConfig::default_stride")]
    pub stride: usize,
}

impl PipelineConfig {
    fn default_delta() -> f64 {
        0.5
    }
    fn default_clip_bound() -> f64 {
        4.0
    }
    fn default_window() -> usize {
        20
    }
    fn default_stride() -> usize {
        5
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |msg: String| Err(PipelineError::InvalidConfig(msg));
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return bad(format!("delta must be finite and >= 0, got {}", self.delta));
        }
        if !(self.clip_bound > 0.0 && self.clip_bound.is_finite()) {
            return bad(format!("clip_bound must be > 0, got {}", self.clip_bound));
        }
        if self.window < 2 {
            return bad(format!("window must be >= 2, got {}", self.window));
        }
        if self.stride < 1 || self.stride > self.window {
            return bad(format!("stride must lie in [1, window], got {}", self.stride));
        }
        Ok(())
    }
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            delta: Self::default_delta(),
            clip_bound: Self::default_clip_bound(),
            window: Self::default_window(),
            stride: Self::default_stride(),
        }
    }
}

/// The training corpus: overlapping windows with every entry in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowBatch {
    pub samples: Vec<Vec<f64>>,
    pub norm_stats: NormStats,
    pub config: PipelineConfig,
}

impl WindowBatch {
    pub fn num_windows(&self) -> usize {
        self.samples.len()
    }

    pub fn window(&self) -> usize {
        self.config.window
    }
}

/// `r_t = ln(S_{t+1} / S_t)`.
pub fn log_returns(prices: &PriceSeries) -> Result<ReturnSeries, PipelineError> {
    let p = prices.prices();
    if p.len() < 2 {
        return Err(PipelineError::TooShort { need: 2, got: p.len() });
    }
    ReturnSeries::new(p.windows(2).map(|w| (w[1] / w[0]).ln()).collect())
}

/// Step (i): shift to zero mean and scale to unit sample standard deviation.
pub fn normalize(series: &ReturnSeries) -> Result<(ReturnSeries, NormStats), PipelineError> {
    let v = series.values();
    if v.len() < 2 {
        return Err(PipelineError::TooShort { need: 2, got: v.len() });
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    let std = var.sqrt();
    if !(std > 0.0) || std <= f64::EPSILON * mean.abs() {
        return Err(PipelineError::ZeroVariance);
    }
    let out = v.iter().map(|x| (x - mean) / std).collect();
    Ok((ReturnSeries(out), NormStats { mean, std }))
}

/// Step (iii): saturate at `±clip_bound`, then divide by `clip_bound`.
pub fn clip_and_scale(series: &ReturnSeries, clip_bound: f64) -> Result<ReturnSeries, PipelineError> {
    if !(clip_bound > 0.0) {
        return Err(PipelineError::InvalidConfig(format!("clip_bound must be > 0, got {clip_bound}")));
    }
    let out = series
        .values()
        .iter()
        .map(|&v| v.clamp(-clip_bound, clip_bound) / clip_bound)
        .collect();
    Ok(ReturnSeries(out))
}

/// Number of windows of length `window` at stride `stride` in a series of length `len`.
pub fn window_count(len: usize, window: usize, stride: usize) -> usize {
    if len < window || stride == 0 {
        0
    } else {
        (len - window) / stride + 1
    }
}

/// Step (iv): `samples[k] = series[k*stride .. k*stride + window]`.
pub fn rolling_window(
    series: &ReturnSeries,
    window: usize,
    stride: usize,
) -> Result<Vec<Vec<f64>>, PipelineError> {
    let v = series.values();
    if window == 0 || stride == 0 {
        return Err(PipelineError::InvalidConfig("window and stride must be positive".into()));
    }
    if v.len() < window {
        return Err(PipelineError::SeriesTooShort { len: v.len(), window });
    }
    Ok((0..window_count(v.len(), window, stride))
        .map(|k| v[k * stride..k * stride + window].to_vec())
        .collect())
}

/// Lambert-Gaussianized and scaled series before windowing, plus the removed moments.
pub fn transform_returns(
    returns: &ReturnSeries,
    cfg: &PipelineConfig,
) -> Result<(ReturnSeries, NormStats), PipelineError> {
    cfg.validate()?;
    let (normalized, stats) = normalize(returns)?;
    let gaussianized = normalized
        .values()
        .iter()
        .map(|&v| lambert_gaussianize(v, cfg.delta))
        .collect::<Result<Vec<_>, _>>()?;
    let scaled = clip_and_scale(&ReturnSeries(gaussianized), cfg.clip_bound)?;
    Ok((scaled, stats))
}

/// Steps (i) through (iv) applied to the log returns of `prices`.
pub fn preprocess(prices: &PriceSeries, cfg: &PipelineConfig) -> Result<WindowBatch, PipelineError> {
    preprocess_returns(&log_returns(prices)?, cfg)
}

/// [`preprocess`] starting from returns instead of prices.
pub fn preprocess_returns(
    returns: &ReturnSeries,
    cfg: &PipelineConfig,
) -> Result<WindowBatch, PipelineError> {
    let (scaled, norm_stats) = transform_returns(returns, cfg)?;
    let samples = rolling_window(&scaled, cfg.window, cfg.stride)?;
    Ok(WindowBatch { samples, norm_stats, config: *cfg })
}

/// Maps one generator-space value back to a log return.
pub fn postprocess_value(u: f64, stats: &NormStats, cfg: &PipelineConfig) -> f64 {
    let v = lambert_degaussianize(u * cfg.clip_bound, cfg.delta);
    v * stats.std + stats.mean
}

/// Inverse of steps (iii)..(i) applied entry-wise to generated windows.
pub fn postprocess(
    generated: &[Vec<f64>],
    stats: &NormStats,
    cfg: &PipelineConfig,
) -> Result<Vec<Vec<f64>>, PipelineError> {
    generated
        .iter()
        .enumerate()
        .map(|(row, w)| {
            w.iter()
                .enumerate()
                .map(|(col, &u)| {
                    if !(-1.0..=1.0).contains(&u) {
                        return Err(PipelineError::OutOfRange { row, col, value: u });
                    }
                    Ok(postprocess_value(u, stats, cfg))
                })
                .collect()
        })
        .collect()
}
