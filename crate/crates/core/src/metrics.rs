//! Stylized-fact metrics for return series.
//!
//! Autocorrelations over a set of windows are pooled: for lag `tau` every
//! in-window pair `(x[t], x[t + tau])` of every row enters one Pearson
//! correlation. [`row_averaged_autocorrelation`] gives the alternative
//! estimator that averages per-row correlations, which for short windows is
//! biased by roughly `-1 / (m - tau)` even on white noise.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("zero variance")]
    ZeroVariance,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("series of length {len} too short for lag {lag}")]
    TooShort { len: usize, lag: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("tau_max {tau_max} must be below the window length {window}")]
    InvalidTauMax { tau_max: usize, window: usize },
    #[error("row {row} has width {got}, expected {expected}")]
    RaggedRows { row: usize, expected: usize, got: usize },
    #[error("need at least {need}, got {got}")]
    InvalidCount { need: usize, got: usize },
}

/// Sample Pearson correlation, two-pass.
pub fn corr(x: &[f64], y: &[f64]) -> Result<f64, MetricsError> {
    if x.len() != y.len() {
        return Err(MetricsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(MetricsError::TooShort { len: x.len(), lag: 0 });
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(MetricsError::ZeroVariance);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transform {
    /// `corr(r_t, r_{t+tau})`
    Identity,
    /// `corr(|r_t|, |r_{t+tau}|)`
    Absolute,
    /// `corr(r_t^2, r_{t+tau})`, the leverage pairing.
    Square,
}

impl Transform {
    fn pair(self, lead: f64, lagged: f64) -> (f64, f64) {
        match self {
            Transform::Identity => (lead, lagged),
            Transform::Absolute => (lead.abs(), lagged.abs()),
            Transform::Square => (lead * lead, lagged),
        }
    }
}

fn lag_pairs<'a>(rows: impl IntoIterator<Item = &'a [f64]>, lag: usize, transform: Transform) -> (Vec<f64>, Vec<f64>) {
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for row in rows {
        for t in 0..row.len().saturating_sub(lag) {
            let (a, b) = transform.pair(row[t], row[t + lag]);
            x.push(a);
            y.push(b);
        }
    }
    (x, y)
}

pub fn autocorrelation(series: &[f64], lag: usize, transform: Transform) -> Result<f64, MetricsError> {
    if series.len() <= lag + 1 {
        return Err(MetricsError::TooShort { len: series.len(), lag });
    }
    let (x, y) = lag_pairs([series], lag, transform);
    corr(&x, &y)
}

fn check_rows(rows: &[Vec<f64>]) -> Result<usize, MetricsError> {
    let width = rows.first().ok_or(MetricsError::EmptyInput)?.len();
    for (row, r) in rows.iter().enumerate() {
        if r.len() != width {
            return Err(MetricsError::RaggedRows { row, expected: width, got: r.len() });
        }
    }
    Ok(width)
}

/// Pooled lag-`lag` correlation over all rows.
pub fn pooled_autocorrelation(rows: &[Vec<f64>], lag: usize, transform: Transform) -> Result<f64, MetricsError> {
    let width = check_rows(rows)?;
    if width <= lag {
        return Err(MetricsError::TooShort { len: width, lag });
    }
    let (x, y) = lag_pairs(rows.iter().map(Vec::as_slice), lag, transform);
    corr(&x, &y)
}

/// Mean of per-row lag correlations.
pub fn row_averaged_autocorrelation(rows: &[Vec<f64>], lag: usize, transform: Transform) -> Result<f64, MetricsError> {
    check_rows(rows)?;
    let mut total = 0.0;
    for r in rows {
        total += autocorrelation(r, lag, transform)?;
    }
    Ok(total / rows.len() as f64)
}

/// Large-sample white-noise band `1.96 / sqrt(n)`.
pub fn ci_halfwidth(n_effective: usize) -> f64 {
    1.96 / (n_effective as f64).sqrt()
}

/// Exact 1-D Wasserstein-1 distance between two empirical distributions,
/// `int_0^1 |F_a^{-1}(u) - F_b^{-1}(u)| du`.
pub fn emd_1d(a: &[f64], b: &[f64]) -> Result<f64, MetricsError> {
    if a.is_empty() || b.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    if a.len() == b.len() {
        return Ok(a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64);
    }
    let (na, nb) = (a.len(), b.len());
    let (mut i, mut j) = (0, 0);
    let mut u = 0.0;
    let mut total = 0.0;
    // Breakpoints i/na and j/nb compared exactly as i*nb vs j*na.
    while i < na && j < nb {
        let (ea, eb) = ((i + 1) * nb, (j + 1) * na);
        let next = ea.min(eb) as f64 / (na * nb) as f64;
        total += (next - u) * (a[i] - b[j]).abs();
        u = next;
        if ea <= eb {
            i += 1;
        }
        if eb <= ea {
            j += 1;
        }
    }
    Ok(total)
}

/// The time-aligned form `1/(tau_max+1) sum_{tau=0}^{tau_max} |a[tau] - b[tau]|`.
pub fn aligned_mad(a: &[f64], b: &[f64], tau_max: usize) -> Result<f64, MetricsError> {
    let need = tau_max + 1;
    if a.len() < need || b.len() < need {
        return Err(MetricsError::TooShort { len: a.len().min(b.len()), lag: tau_max });
    }
    Ok(a[..need].iter().zip(&b[..need]).map(|(x, y)| (x - y).abs()).sum::<f64>() / need as f64)
}

/// Linear-interpolated empirical quantile of sorted data.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = p * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// `(q_a(p), q_b(p))` at `p = k / (count + 1)`, `k = 1..=count`.
pub fn qq_points(a: &[f64], b: &[f64], count: usize) -> Result<Vec<(f64, f64)>, MetricsError> {
    if a.is_empty() || b.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    if count < 2 {
        return Err(MetricsError::InvalidCount { need: 2, got: count });
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    Ok((1..=count)
        .map(|k| {
            let p = k as f64 / (count + 1) as f64;
            (quantile(&a, p), quantile(&b, p))
        })
        .collect())
}

/// Density-normalized histogram over `[min, max]` (last bin closed). A
/// degenerate range is widened to `[v - 0.5, v + 0.5]`.
pub fn pdf_histogram(samples: &[f64], bins: usize) -> Result<(Vec<f64>, Vec<f64>), MetricsError> {
    if samples.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    if bins < 2 {
        return Err(MetricsError::InvalidCount { need: 2, got: bins });
    }
    let lo = samples.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, hi + 0.5) };
    let width = (hi - lo) / bins as f64;
    let edges: Vec<f64> = (0..=bins).map(|k| if k == bins { hi } else { lo + k as f64 * width }).collect();
    let mut counts = vec![0usize; bins];
    for &s in samples {
        let k = (((s - lo) / width).floor() as usize).min(bins - 1);
        counts[k] += 1;
    }
    let n = samples.len() as f64;
    let densities = counts.iter().enumerate().map(|(k, &c)| c as f64 / (n * (edges[k + 1] - edges[k]))).collect();
    Ok((edges, densities))
}

/// Per-lag correlations for lags `1..=tau_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcfCurves {
    pub linear: Vec<f64>,
    pub absolute: Vec<f64>,
    pub leverage: Vec<f64>,
}

pub fn acf_curves(rows: &[Vec<f64>], tau_max: usize) -> Result<AcfCurves, MetricsError> {
    let mut c = AcfCurves { linear: vec![], absolute: vec![], leverage: vec![] };
    for lag in 1..=tau_max {
        c.linear.push(pooled_autocorrelation(rows, lag, Transform::Identity)?);
        c.absolute.push(pooled_autocorrelation(rows, lag, Transform::Absolute)?);
        c.leverage.push(pooled_autocorrelation(rows, lag, Transform::Square)?);
    }
    Ok(c)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub emd: f64,
    pub e_acf_id: f64,
    pub e_acf_abs: f64,
    pub e_lev: f64,
    pub tau_max: usize,
    /// Band for the generated side at the largest lag, `1.96 / sqrt(rows (m - tau_max))`.
    pub ci_halfwidth: f64,
    pub reference: AcfCurves,
    pub generated: AcfCurves,
    pub reference_rows: usize,
    pub generated_rows: usize,
    pub window: usize,
}

fn rms(v: impl Iterator<Item = f64>, n: usize) -> f64 {
    (v.map(|x| x * x).sum::<f64>() / n as f64).sqrt()
}

/// Metrics of `generated` against `reference`, both sets of equal-length
/// windows of (post-processed) returns.
pub fn stylized_fact_errors(
    reference: &[Vec<f64>],
    generated: &[Vec<f64>],
    tau_max: usize,
) -> Result<MetricsReport, MetricsError> {
    let mr = check_rows(reference)?;
    let mg = check_rows(generated)?;
    if mr != mg {
        return Err(MetricsError::LengthMismatch(mr, mg));
    }
    if tau_max == 0 || tau_max >= mg {
        return Err(MetricsError::InvalidTauMax { tau_max, window: mg });
    }
    let rc = acf_curves(reference, tau_max)?;
    let gc = acf_curves(generated, tau_max)?;
    let e_acf_id = rms(gc.linear.iter().copied(), tau_max);
    let e_acf_abs = rms(rc.absolute.iter().zip(&gc.absolute).map(|(a, b)| a - b), tau_max);
    let e_lev = rms(rc.leverage.iter().zip(&gc.leverage).map(|(a, b)| a - b), tau_max);
    let emd = emd_1d(&reference.concat(), &generated.concat())?;
    Ok(MetricsReport {
        emd,
        e_acf_id,
        e_acf_abs,
        e_lev,
        tau_max,
        ci_halfwidth: ci_halfwidth(generated.len() * (mg - tau_max)),
        reference: rc,
        generated: gc,
        reference_rows: reference.len(),
        generated_rows: generated.len(),
        window: mg,
    })
}

impl MetricsReport {
    /// `lag,linear,absolute,leverage,ci` for one side; `ci` uses that side's pair count at each lag.
    pub fn write_acf_csv(&self, out: &mut impl Write, generated: bool, provenance: &[String]) -> std::io::Result<()> {
        let (curves, rows) = if generated { (&self.generated, self.generated_rows) } else { (&self.reference, self.reference_rows) };
        for line in provenance {
            writeln!(out, "# {line}")?;
        }
        writeln!(out, "lag,linear,absolute,leverage,ci")?;
        for k in 0..self.tau_max {
            let lag = k + 1;
            let ci = ci_halfwidth(rows * (self.window - lag));
            writeln!(out, "{lag},{},{},{},{ci}", curves.linear[k], curves.absolute[k], curves.leverage[k])?;
        }
        Ok(())
    }
}
