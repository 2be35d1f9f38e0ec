use std::io::BufRead;
use std::path::Path;

use qgan::metrics::{self, MetricsReport};
use qgan::pipeline::{self, io};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::artifacts;
use crate::config::{hex, LoadedConfig, VERSION};
use crate::error::{pipeline_error, CliError};

/// Outer-quantile gap, in reference interquartile ranges, that counts as a
/// tail mismatch.
pub const TAIL_TOLERANCE: f64 = 0.1;

#[derive(Debug, Clone, Serialize)]
pub struct TailCheck {
    pub lower_reference: f64,
    pub lower_generated: f64,
    pub upper_reference: f64,
    pub upper_generated: f64,
    pub reference_iqr: f64,
    pub deviation: f64,
    pub flagged: bool,
}

#[derive(Serialize)]
struct EvaluationFile<'a> {
    provenance: &'a [String],
    report: &'a MetricsReport,
    qq_tail: &'a TailCheck,
}

fn first_header(path: &Path) -> Result<String, CliError> {
    let file = std::fs::File::open(path).map_err(CliError::io(path))?;
    for line in std::io::BufReader::new(file).lines() {
        let line = line.map_err(CliError::io(path))?;
        if !line.starts_with('#') {
            return Ok(line.split(',').map(str::trim).collect::<Vec<_>>().join(","));
        }
    }
    Ok(String::new())
}

/// Reference windows from a windows CSV, or rolling windows of log
/// returns from a `date,close` file.
fn load_reference(path: &Path, window: usize, cfg: Option<&LoadedConfig>) -> Result<Vec<Vec<f64>>, CliError> {
    if first_header(path)? == "date,close" {
        let prices = io::load_price_csv(path).map_err(|e| pipeline_error(path, e))?;
        let returns = pipeline::log_returns(&prices).map_err(|e| pipeline_error(path, e))?;
        let stride = cfg
            .map(|c| &c.config.pipeline)
            .filter(|p| p.window == window)
            .map_or(1, |p| p.stride);
        return pipeline::rolling_window(&returns, window, stride).map_err(|e| pipeline_error(path, e));
    }
    let rows = io::read_windows_csv(path).map_err(|e| pipeline_error(path, e))?;
    if let Some(r) = rows.first() {
        if r.len() != window {
            return Err(CliError::Validation(format!(
                "{} has windows of length {}, generated windows have length {window}",
                path.display(),
                r.len()
            )));
        }
    }
    Ok(rows)
}

fn file_hash(path: &Path) -> Result<String, CliError> {
    Ok(hex(&Sha256::digest(artifacts::read_file(path)?)))
}

pub fn tail_check(reference: &[f64], generated: &[f64], points: usize) -> Result<TailCheck, CliError> {
    let qq = metrics::qq_points(reference, generated, points)?;
    let quartiles = metrics::qq_points(reference, reference, 3)?;
    let iqr = quartiles[2].0 - quartiles[0].0;
    let ((lr, lg), (ur, ug)) = (qq[0], qq[qq.len() - 1]);
    let gap = (lg - lr).abs().max((ug - ur).abs());
    let deviation = if iqr > 0.0 { gap / iqr } else { gap };
    Ok(TailCheck {
        lower_reference: lr,
        lower_generated: lg,
        upper_reference: ur,
        upper_generated: ug,
        reference_iqr: iqr,
        deviation,
        flagged: deviation > TAIL_TOLERANCE,
    })
}

pub fn run(
    reference: &Path,
    generated: &Path,
    tau_max: Option<usize>,
    cfg: Option<&LoadedConfig>,
    out: &Path,
) -> Result<(), CliError> {
    let gen_rows = io::read_windows_csv(generated).map_err(|e| pipeline_error(generated, e))?;
    let m = gen_rows
        .first()
        .map(Vec::len)
        .ok_or_else(|| CliError::Validation(format!("{} has no windows", generated.display())))?;
    let ref_rows = load_reference(reference, m, cfg)?;
    if ref_rows.is_empty() {
        return Err(CliError::Validation(format!("{} has no windows", reference.display())));
    }
    let settings = cfg.map(|c| c.config.metrics.clone()).unwrap_or_default();
    let tau = tau_max.or(settings.tau_max).unwrap_or(m / 2);
    if tau == 0 || tau >= m {
        return Err(CliError::Validation(format!("tau_max = {tau} must lie in [1, window = {m})")));
    }

    let report = metrics::stylized_fact_errors(&ref_rows, &gen_rows, tau)?;
    let ref_flat: Vec<f64> = ref_rows.iter().flatten().copied().collect();
    let gen_flat: Vec<f64> = gen_rows.iter().flatten().copied().collect();
    let tails = tail_check(&ref_flat, &gen_flat, settings.qq_points)?;

    let prov = vec![
        format!("qgan {VERSION} evaluate"),
        format!("config {}", cfg.map_or("none".into(), |c| c.config.hash12())),
        format!("seed {}", cfg.map_or("none".into(), |c| c.config.seed.to_string())),
        format!("reference sha256:{}", file_hash(reference)?),
        format!("generated sha256:{}", file_hash(generated)?),
    ];
    artifacts::write_file(
        &out.join("metrics.json"),
        &artifacts::to_json(&EvaluationFile { provenance: &prov, report: &report, qq_tail: &tails }),
    )?;
    for (name, side) in [("acf_generated.csv", true), ("acf_reference.csv", false)] {
        let mut buf = Vec::new();
        report.write_acf_csv(&mut buf, side, &prov).expect("write to memory");
        artifacts::write_file(&out.join(name), &buf)?;
    }

    let mut qq = artifacts::header(&prov);
    qq.push_str("p,reference,generated\n");
    let n = settings.qq_points;
    for (k, (a, b)) in metrics::qq_points(&ref_flat, &gen_flat, n)?.into_iter().enumerate() {
        qq.push_str(&format!("{},{a},{b}\n", (k + 1) as f64 / (n + 1) as f64));
    }
    artifacts::write_file(&out.join("qq.csv"), qq.as_bytes())?;

    let mut pdf = artifacts::header(&prov);
    pdf.push_str("side,left,right,density\n");
    for (side, data) in [("reference", &ref_flat), ("generated", &gen_flat)] {
        let (edges, density) = metrics::pdf_histogram(data, settings.pdf_bins)?;
        for (k, d) in density.iter().enumerate() {
            pdf.push_str(&format!("{side},{},{},{d}\n", edges[k], edges[k + 1]));
        }
    }
    artifacts::write_file(&out.join("pdf.csv"), pdf.as_bytes())?;

    println!("EMD       {:.6e}", report.emd);
    println!("E_ACF_id  {:.6e}", report.e_acf_id);
    println!("E_ACF_abs {:.6e}", report.e_acf_abs);
    println!("E_Lev     {:.6e}", report.e_lev);
    println!("band      {:.6e} (tau_max {tau})", report.ci_halfwidth);
    if tails.flagged {
        println!("QQ tail deviation {:.3} reference IQR: tails differ", tails.deviation);
    }
    Ok(())
}
