//! Exact dense simulation.
//!
//! Qubit `q` is bit `q` of the basis-state index. Gates update amplitude
//! pairs in place; no full operator is ever built.

use std::io::Write;

use thiserror::Error;

use crate::circuit::{build_program, CircuitError, CircuitSpec, Gate, GateProgram, NoiseVector, ParameterSet, ParamRef};
use crate::gradient::{parameter_shift, Gradients, Simulator};
use crate::C64;

/// Largest register the dense backend will allocate.
pub const MAX_QUBITS: usize = 24;

#[derive(Debug, Error, PartialEq)]
pub enum StatevectorError {
    #[error("{0} qubits exceed the dense simulation limit of {MAX_QUBITS}")]
    TooManyQubits(usize),
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error("upstream has length {got}, expected {expected}")]
    UpstreamLength { expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Statevector {
    n_qubits: usize,
    amps: Vec<C64>,
}

impl Statevector {
    /// `|0...0>`.
    pub fn zero_state(n_qubits: usize) -> Result<Self, StatevectorError> {
        if n_qubits > MAX_QUBITS {
            return Err(StatevectorError::TooManyQubits(n_qubits));
        }
        let mut amps = vec![C64::new(0.0, 0.0); 1 << n_qubits];
        amps[0] = C64::new(1.0, 0.0);
        Ok(Self { n_qubits, amps })
    }

    /// Wraps raw amplitudes; the length must be a power of two.
    pub fn from_amplitudes(amps: Vec<C64>) -> Result<Self, StatevectorError> {
        let n_qubits = amps.len().trailing_zeros() as usize;
        if amps.len() != 1 << n_qubits {
            return Err(StatevectorError::UpstreamLength { expected: 1 << n_qubits, got: amps.len() });
        }
        if n_qubits > MAX_QUBITS {
            return Err(StatevectorError::TooManyQubits(n_qubits));
        }
        Ok(Self { n_qubits, amps })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &Statevector) -> C64 {
        self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn apply(&mut self, gate: &Gate) {
        match *gate {
            Gate::Rx { qubit, angle } => {
                let (s, c) = (0.5 * angle).sin_cos();
                let m = C64::new(0.0, -s);
                self.apply_2x2(qubit, [C64::new(c, 0.0), m, m, C64::new(c, 0.0)]);
            }
            Gate::Ry { qubit, angle } => {
                let (s, c) = (0.5 * angle).sin_cos();
                self.apply_2x2(qubit, [C64::new(c, 0.0), C64::new(-s, 0.0), C64::new(s, 0.0), C64::new(c, 0.0)]);
            }
            Gate::Rz { qubit, angle } => {
                let (s, c) = (0.5 * angle).sin_cos();
                let (lo, hi) = (C64::new(c, -s), C64::new(c, s));
                let stride = 1usize << qubit;
                for (i, a) in self.amps.iter_mut().enumerate() {
                    *a *= if i & stride == 0 { lo } else { hi };
                }
            }
            Gate::Cnot { control, target } => {
                let (cbit, tbit) = (1usize << control, 1usize << target);
                for i in 0..self.amps.len() {
                    if i & cbit != 0 && i & tbit == 0 {
                        self.amps.swap(i, i | tbit);
                    }
                }
            }
        }
    }

    /// Row-major `[m00, m01, m10, m11]` on `qubit`.
    fn apply_2x2(&mut self, qubit: usize, m: [C64; 4]) {
        let stride = 1usize << qubit;
        for base in (0..self.amps.len()).step_by(2 * stride) {
            for i in base..base + stride {
                let (x, y) = (self.amps[i], self.amps[i + stride]);
                self.amps[i] = m[0] * x + m[1] * y;
                self.amps[i + stride] = m[2] * x + m[3] * y;
            }
        }
    }

    /// Debug dump `index,re,im`.
    pub fn write_csv(&self, out: &mut impl Write) -> std::io::Result<()> {
        writeln!(out, "index,re,im")?;
        for (i, a) in self.amps.iter().enumerate() {
            writeln!(out, "{i},{},{}", a.re, a.im)?;
        }
        Ok(())
    }
}

impl Simulator for Statevector {
    fn apply(&mut self, gate: &Gate) {
        Statevector::apply(self, gate);
    }

    fn expectation_values(&self) -> Vec<f64> {
        expectations(self).0
    }
}

/// `<X>_1, <Z>_1, <X>_2, <Z>_2, ...`, each clamped to `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpectationVector(pub Vec<f64>);

impl ExpectationVector {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }
}

pub fn expectations(state: &Statevector) -> ExpectationVector {
    let mut out = Vec::with_capacity(2 * state.n_qubits);
    let amps = &state.amps;
    for q in 0..state.n_qubits {
        let stride = 1usize << q;
        let (mut x, mut z) = (0.0, 0.0);
        for base in (0..amps.len()).step_by(2 * stride) {
            for i in base..base + stride {
                let (a0, a1) = (amps[i], amps[i + stride]);
                x += (a0.conj() * a1).re;
                z += a0.norm_sqr() - a1.norm_sqr();
            }
        }
        out.push((2.0 * x).clamp(-1.0, 1.0));
        out.push(z.clamp(-1.0, 1.0));
    }
    ExpectationVector(out)
}

/// Applies `program` to `|0...0>`.
pub fn run_program(program: &GateProgram) -> Result<Statevector, StatevectorError> {
    let mut state = Statevector::zero_state(program.n_qubits())?;
    for g in program.gates() {
        state.apply(g);
    }
    Ok(state)
}

pub fn run(spec: &CircuitSpec, params: &ParameterSet, noise: &NoiseVector) -> Result<Statevector, StatevectorError> {
    if spec.n_qubits > MAX_QUBITS {
        return Err(StatevectorError::TooManyQubits(spec.n_qubits));
    }
    run_program(&build_program(spec, params, noise)?)
}

fn check_upstream(spec: &CircuitSpec, upstream: &[f64]) -> Result<(), StatevectorError> {
    if upstream.len() != spec.output_len() {
        return Err(StatevectorError::UpstreamLength { expected: spec.output_len(), got: upstream.len() });
    }
    Ok(())
}

/// Parameter-shift gradient of `upstream . expectations`.
pub fn gradient(
    spec: &CircuitSpec,
    params: &ParameterSet,
    noise: &NoiseVector,
    upstream: &[f64],
) -> Result<Gradients, StatevectorError> {
    check_upstream(spec, upstream)?;
    let program = build_program(spec, params, noise)?;
    let init = Statevector::zero_state(spec.n_qubits)?;
    Ok(parameter_shift(init, &program, params.thetas.len(), params.lambdas.len(), upstream))
}

/// Same contract as [`gradient`], by one forward and one backward sweep.
///
/// For `U = exp(-i phi P / 2)` with bra `<lambda|` propagated back from
/// `O = sum_q u_{2q} X_q + u_{2q+1} Z_q`, `dE/dphi = Im <lambda|P|psi>`.
pub fn adjoint_gradient(
    spec: &CircuitSpec,
    params: &ParameterSet,
    noise: &NoiseVector,
    upstream: &[f64],
) -> Result<Gradients, StatevectorError> {
    check_upstream(spec, upstream)?;
    let program = build_program(spec, params, noise)?;
    let mut grads = Gradients::zeros(params.thetas.len(), params.lambdas.len());
    if upstream.iter().all(|&u| u == 0.0) {
        return Ok(grads);
    }
    let mut psi = run_program(&program)?;
    let mut lam = apply_observable(&psi, upstream);

    for (gate, source) in program.gates().iter().zip(program.sources()).rev() {
        if let Some(source) = source {
            let d = match *gate {
                Gate::Rx { qubit, .. } => pauli_overlap(&lam, &psi, qubit, Pauli::X),
                Gate::Ry { qubit, .. } => pauli_overlap(&lam, &psi, qubit, Pauli::Y),
                Gate::Rz { qubit, .. } => pauli_overlap(&lam, &psi, qubit, Pauli::Z),
                Gate::Cnot { .. } => unreachable!("CNOTs carry no parameter"),
            }
            .im;
            match *source {
                ParamRef::Theta(i) => grads.dtheta[i] += d,
                ParamRef::Lambda { index, noise } => {
                    if noise != 0.0 {
                        grads.dlambda[index] += noise * d;
                    }
                }
            }
        }
        let inverse = match gate.angle() {
            Some(a) => gate.with_angle(-a),
            None => *gate,
        };
        psi.apply(&inverse);
        lam.apply(&inverse);
    }
    Ok(grads)
}

#[derive(Clone, Copy)]
enum Pauli {
    X,
    Y,
    Z,
}

/// `<bra| P_q |ket>`.
fn pauli_overlap(bra: &Statevector, ket: &Statevector, qubit: usize, p: Pauli) -> C64 {
    let stride = 1usize << qubit;
    let (b, k) = (&bra.amps, &ket.amps);
    let mut acc = C64::new(0.0, 0.0);
    for base in (0..k.len()).step_by(2 * stride) {
        for i in base..base + stride {
            let j = i + stride;
            acc += match p {
                Pauli::X => b[i].conj() * k[j] + b[j].conj() * k[i],
                // Y|0> = i|1>, Y|1> = -i|0>
                Pauli::Y => C64::new(0.0, -1.0) * b[i].conj() * k[j] + C64::new(0.0, 1.0) * b[j].conj() * k[i],
                Pauli::Z => b[i].conj() * k[i] - b[j].conj() * k[j],
            };
        }
    }
    acc
}

/// `O |psi>` for the weighted sum of per-qubit X and Z.
fn apply_observable(psi: &Statevector, upstream: &[f64]) -> Statevector {
    let mut out = vec![C64::new(0.0, 0.0); psi.amps.len()];
    for q in 0..psi.n_qubits {
        let (wx, wz) = (upstream[2 * q], upstream[2 * q + 1]);
        let stride = 1usize << q;
        for (i, o) in out.iter_mut().enumerate() {
            let sign = if i & stride == 0 { 1.0 } else { -1.0 };
            *o += psi.amps[i ^ stride] * wx + psi.amps[i] * (wz * sign);
        }
    }
    Statevector { n_qubits: psi.n_qubits, amps: out }
}
