//! On-disk formats shared by the commands.

use std::path::{Path, PathBuf};

use qgan::circuit::{CircuitSpec, ParameterSet};
use qgan::pipeline::NormStats;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{hex, RunConfig};
use crate::error::CliError;

pub const MANIFEST: &str = "manifest.json";
pub const GENERATOR: &str = "generator.csv";
pub const CRITIC: &str = "critic.ckpt";
pub const STATE: &str = "state.json";

/// Writes `bytes` to `path`, creating parent directories.
pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(CliError::io(parent))?;
        }
    }
    std::fs::write(path, bytes).map_err(CliError::io(path))
}

pub fn read_file(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(CliError::io(path))
}

pub fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(value).expect("artifact serializes");
    v.push(b'\n');
    v
}

pub fn header(provenance: &[String]) -> String {
    provenance.iter().map(|l| format!("# {l}\n")).collect()
}

/// Echo of the effective config at the top of a run directory.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigEcho {
    pub provenance: Vec<String>,
    pub config: RunConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub provenance: Vec<String>,
    pub config_hash: String,
    pub seed: u64,
    pub epoch: usize,
    pub norm_stats: NormStats,
    pub config: RunConfig,
}

pub fn write_generator_csv(provenance: &[String], params: &ParameterSet) -> Vec<u8> {
    let mut s = header(provenance);
    s.push_str("kind,index,value\n");
    for (i, v) in params.thetas.iter().enumerate() {
        s.push_str(&format!("theta,{i},{v}\n"));
    }
    for (i, v) in params.lambdas.iter().enumerate() {
        s.push_str(&format!("lambda,{i},{v}\n"));
    }
    s.into_bytes()
}

pub fn read_generator_csv(path: &Path, spec: &CircuitSpec) -> Result<ParameterSet, CliError> {
    let bad = |msg: String| CliError::Validation(format!("{}: {msg}", path.display()));
    let bytes = read_file(path)?;
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(bytes.as_slice());
    let headers = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["kind", "index", "value"] {
        return Err(bad("expected header `kind,index,value`".into()));
    }
    let mut params = ParameterSet { thetas: vec![], lambdas: vec![] };
    for record in reader.records() {
        let record = record.map_err(|e| bad(e.to_string()))?;
        let target = match &record[0] {
            "theta" => &mut params.thetas,
            "lambda" => &mut params.lambdas,
            other => return Err(bad(format!("unknown parameter kind `{other}`"))),
        };
        let index: usize = record[1].parse().map_err(|_| bad(format!("bad index `{}`", &record[1])))?;
        if index != target.len() {
            return Err(bad(format!("parameter index {index} out of order")));
        }
        target.push(record[2].parse().map_err(|_| bad(format!("bad value `{}`", &record[2])))?);
    }
    params.validate(spec).map_err(|e| bad(e.to_string()))?;
    Ok(params)
}

/// SHA-256 over the checkpoint files, in a fixed order.
pub fn checkpoint_hash(dir: &Path) -> Result<String, CliError> {
    let mut h = Sha256::new();
    for name in [MANIFEST, GENERATOR, CRITIC] {
        h.update(read_file(&dir.join(name))?);
    }
    Ok(hex(&h.finalize()))
}

pub fn read_manifest(dir: &Path) -> Result<Manifest, CliError> {
    let path = dir.join(MANIFEST);
    serde_json::from_slice(&read_file(&path)?)
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

/// Sibling path with `suffix` inserted before the extension.
pub fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}{suffix}.{}", ext.to_string_lossy()),
        None => format!("{stem}{suffix}"),
    };
    path.with_file_name(name)
}
