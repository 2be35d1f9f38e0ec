//! The layered hardware-efficient ansatz as a backend-independent gate program.
//!
//! Layer `l` applies `RX RY RZ` on every qubit, a top-down CNOT staircase
//! (plus `CNOT(0, n-1)` for the ring topology), then the noise uploads
//! `RX(lambda * z)`. A final `RX RY RZ` layer precedes measurement of every
//! qubit in the X and Z bases.

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;

#[derive(Debug, Error, PartialEq)]
pub enum CircuitError {
    #[error("invalid circuit: {0}")]
    InvalidSpec(String),
    #[error("{what}: expected length {expected}, got {got}")]
    LengthMismatch { what: &'static str, expected: usize, got: usize },
    #[error("{what}[{index}] = {value} is not allowed")]
    BadValue { what: &'static str, index: usize, value: f64 },
    #[error("gate program line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Topology {
    #[default]
    Chain,
    Ring,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircuitSpec {
    pub n_qubits: usize,
    pub n_layers: usize,
    #[serde(default)]
    pub topology: Topology,
}

impl CircuitSpec {
    pub fn new(n_qubits: usize, n_layers: usize, topology: Topology) -> Result<Self, CircuitError> {
        let spec = Self { n_qubits, n_layers, topology };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), CircuitError> {
        if self.n_qubits < 2 {
            return Err(CircuitError::InvalidSpec(format!("need at least 2 qubits, got {}", self.n_qubits)));
        }
        if self.n_layers < 1 {
            return Err(CircuitError::InvalidSpec("need at least 1 layer".into()));
        }
        Ok(())
    }

    /// `(3nL + 3n, nL)`.
    pub fn parameter_count(&self) -> (usize, usize) {
        let (n, l) = (self.n_qubits, self.n_layers);
        (3 * n * l + 3 * n, n * l)
    }

    /// Length of the generated window: one `<X>` and one `<Z>` per qubit.
    pub fn output_len(&self) -> usize {
        2 * self.n_qubits
    }

    /// Number of gates in the program, measurement markers excluded.
    pub fn gate_count(&self) -> usize {
        let n = self.n_qubits;
        let ring = usize::from(self.topology == Topology::Ring);
        self.n_layers * (3 * n + (n - 1) + ring + n) + 3 * n
    }
}

/// Trainable angles `theta` and noise scales `lambda`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSet {
    pub thetas: Vec<f64>,
    pub lambdas: Vec<f64>,
}

impl ParameterSet {
    pub fn zeros(spec: &CircuitSpec) -> Self {
        let (t, l) = spec.parameter_count();
        Self { thetas: vec![0.0; t], lambdas: vec![0.0; l] }
    }

    /// `theta ~ U[0, 2pi)`, `lambda = 1`.
    pub fn random(spec: &CircuitSpec, rng: &mut impl Rng) -> Self {
        let (t, l) = spec.parameter_count();
        Self {
            thetas: (0..t).map(|_| rng.random_range(0.0..TAU)).collect(),
            lambdas: vec![1.0; l],
        }
    }

    pub fn validate(&self, spec: &CircuitSpec) -> Result<(), CircuitError> {
        let (t, l) = spec.parameter_count();
        if self.thetas.len() != t {
            return Err(CircuitError::LengthMismatch { what: "thetas", expected: t, got: self.thetas.len() });
        }
        if self.lambdas.len() != l {
            return Err(CircuitError::LengthMismatch { what: "lambdas", expected: l, got: self.lambdas.len() });
        }
        if let Some(i) = self.thetas.iter().position(|v| !v.is_finite()) {
            return Err(CircuitError::BadValue { what: "thetas", index: i, value: self.thetas[i] });
        }
        if let Some(i) = self.lambdas.iter().position(|v| !v.is_finite()) {
            return Err(CircuitError::BadValue { what: "lambdas", index: i, value: self.lambdas[i] });
        }
        Ok(())
    }

    /// Thetas followed by lambdas.
    pub fn to_flat(&self) -> Vec<f64> {
        self.thetas.iter().chain(&self.lambdas).copied().collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        let t = self.thetas.len();
        self.thetas.copy_from_slice(&flat[..t]);
        self.lambdas.copy_from_slice(&flat[t..]);
    }

    pub fn len(&self) -> usize {
        self.thetas.len() + self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Uploaded noise, one value per (layer, qubit), each in `[0, 2pi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseVector(Vec<f64>);

impl NoiseVector {
    pub fn new(z: Vec<f64>) -> Result<Self, CircuitError> {
        if let Some(i) = z.iter().position(|v| !(0.0..=TAU).contains(v)) {
            return Err(CircuitError::BadValue { what: "noise", index: i, value: z[i] });
        }
        Ok(Self(z))
    }

    pub fn zeros(spec: &CircuitSpec) -> Self {
        Self(vec![0.0; spec.n_qubits * spec.n_layers])
    }

    /// I.i.d. uniform draws on `[0, 2pi]`.
    pub fn sample(spec: &CircuitSpec, rng: &mut impl Rng) -> Self {
        Self((0..spec.n_qubits * spec.n_layers).map(|_| rng.random_range(0.0..=TAU)).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Deterministic noise for `seed`.
pub fn sample_noise(seed: u64, spec: &CircuitSpec) -> NoiseVector {
    NoiseVector::sample(spec, &mut rng::stream(seed, rng::label::NOISE, &[]))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gate {
    Rx { qubit: usize, angle: f64 },
    Ry { qubit: usize, angle: f64 },
    Rz { qubit: usize, angle: f64 },
    Cnot { control: usize, target: usize },
}

impl Gate {
    pub fn angle(&self) -> Option<f64> {
        match *self {
            Gate::Rx { angle, .. } | Gate::Ry { angle, .. } | Gate::Rz { angle, .. } => Some(angle),
            Gate::Cnot { .. } => None,
        }
    }

    /// The same rotation with a different angle; CNOTs are returned unchanged.
    pub fn with_angle(&self, angle: f64) -> Gate {
        match *self {
            Gate::Rx { qubit, .. } => Gate::Rx { qubit, angle },
            Gate::Ry { qubit, .. } => Gate::Ry { qubit, angle },
            Gate::Rz { qubit, .. } => Gate::Rz { qubit, angle },
            g @ Gate::Cnot { .. } => g,
        }
    }
}

/// Which trainable parameter drives a rotation angle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ParamRef {
    /// `angle = thetas[k]`.
    Theta(usize),
    /// `angle = lambdas[index] * noise`.
    Lambda { index: usize, noise: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GateProgram {
    n_qubits: usize,
    gates: Vec<Gate>,
    sources: Vec<Option<ParamRef>>,
}

impl GateProgram {
    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    /// Parameter driving each gate, aligned with [`gates`](Self::gates).
    pub fn sources(&self) -> &[Option<ParamRef>] {
        &self.sources
    }

    pub fn len(&self) -> usize {
        self.gates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gates.is_empty()
    }

    /// Qubits measured at the end (all of them, in X and Z).
    pub fn measured(&self) -> impl Iterator<Item = usize> {
        0..self.n_qubits
    }

    /// A program from raw gates, with no parameter bookkeeping.
    pub fn from_gates(n_qubits: usize, gates: Vec<Gate>) -> Result<Self, CircuitError> {
        for (i, g) in gates.iter().enumerate() {
            let ok = match *g {
                Gate::Rx { qubit, angle } | Gate::Ry { qubit, angle } | Gate::Rz { qubit, angle } => {
                    qubit < n_qubits && angle.is_finite()
                }
                Gate::Cnot { control, target } => control < n_qubits && target < n_qubits && control != target,
            };
            if !ok {
                return Err(CircuitError::InvalidSpec(format!("gate {i} ({g:?}) invalid for {n_qubits} qubits")));
            }
        }
        let sources = vec![None; gates.len()];
        Ok(Self { n_qubits, gates, sources })
    }
}

/// Expands `(spec, params, noise)` into the ordered gate list.
pub fn build_program(
    spec: &CircuitSpec,
    params: &ParameterSet,
    noise: &NoiseVector,
) -> Result<GateProgram, CircuitError> {
    spec.validate()?;
    params.validate(spec)?;
    let (_, lambda_count) = spec.parameter_count();
    if noise.len() != lambda_count {
        return Err(CircuitError::LengthMismatch { what: "noise", expected: lambda_count, got: noise.len() });
    }

    let n = spec.n_qubits;
    let mut gates = Vec::with_capacity(spec.gate_count());
    let mut sources = Vec::with_capacity(spec.gate_count());
    let mut theta = 0;
    let mut rotations = |gates: &mut Vec<Gate>, sources: &mut Vec<Option<ParamRef>>| {
        for qubit in 0..n {
            for make in [
                (|qubit, angle| Gate::Rx { qubit, angle }) as fn(usize, f64) -> Gate,
                |qubit, angle| Gate::Ry { qubit, angle },
                |qubit, angle| Gate::Rz { qubit, angle },
            ] {
                gates.push(make(qubit, params.thetas[theta]));
                sources.push(Some(ParamRef::Theta(theta)));
                theta += 1;
            }
        }
    };

    for layer in 0..spec.n_layers {
        rotations(&mut gates, &mut sources);
        for q in 0..n - 1 {
            gates.push(Gate::Cnot { control: q, target: q + 1 });
            sources.push(None);
        }
        if spec.topology == Topology::Ring {
            gates.push(Gate::Cnot { control: 0, target: n - 1 });
            sources.push(None);
        }
        for qubit in 0..n {
            let index = layer * n + qubit;
            let z = noise.values()[index];
            gates.push(Gate::Rx { qubit, angle: params.lambdas[index] * z });
            sources.push(Some(ParamRef::Lambda { index, noise: z }));
        }
    }
    rotations(&mut gates, &mut sources);

    debug_assert_eq!(theta, params.thetas.len());
    debug_assert_eq!(gates.len(), spec.gate_count());
    Ok(GateProgram { n_qubits: n, gates, sources })
}

impl fmt::Display for GateProgram {
    /// `QUBITS n`, one `GATE q [q2] [angle]` line per gate, then `MEASURE q`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "QUBITS {}", self.n_qubits)?;
        for g in &self.gates {
            match *g {
                Gate::Rx { qubit, angle } => writeln!(f, "RX {qubit} {angle:?}")?,
                Gate::Ry { qubit, angle } => writeln!(f, "RY {qubit} {angle:?}")?,
                Gate::Rz { qubit, angle } => writeln!(f, "RZ {qubit} {angle:?}")?,
                Gate::Cnot { control, target } => writeln!(f, "CNOT {control} {target}")?,
            }
        }
        for q in self.measured() {
            writeln!(f, "MEASURE {q}")?;
        }
        Ok(())
    }
}

impl FromStr for GateProgram {
    type Err = CircuitError;

    /// Parses the [`Display`](fmt::Display) format. Parameter bookkeeping is not recovered.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut n_qubits = None;
        let mut gates = Vec::new();
        for (i, raw) in s.lines().enumerate() {
            let line = i + 1;
            let err = |msg: &str| CircuitError::Parse { line, msg: msg.to_string() };
            let tok: Vec<&str> = raw.split_whitespace().collect();
            let Some(&head) = tok.first() else { continue };
            let num = |k: usize| -> Result<usize, CircuitError> {
                tok.get(k).and_then(|t| t.parse().ok()).ok_or_else(|| err("bad qubit index"))
            };
            let ang = |k: usize| -> Result<f64, CircuitError> {
                tok.get(k).and_then(|t| t.parse().ok()).ok_or_else(|| err("bad angle"))
            };
            match head {
                "QUBITS" => n_qubits = Some(num(1)?),
                "RX" => gates.push(Gate::Rx { qubit: num(1)?, angle: ang(2)? }),
                "RY" => gates.push(Gate::Ry { qubit: num(1)?, angle: ang(2)? }),
                "RZ" => gates.push(Gate::Rz { qubit: num(1)?, angle: ang(2)? }),
                "CNOT" => gates.push(Gate::Cnot { control: num(1)?, target: num(2)? }),
                "MEASURE" => {}
                other => return Err(err(&format!("unknown gate `{other}`"))),
            }
        }
        let n = n_qubits.ok_or(CircuitError::Parse { line: 0, msg: "missing QUBITS line".into() })?;
        GateProgram::from_gates(n, gates)
    }
}
