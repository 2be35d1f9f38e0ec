//! Backend-agnostic parameter-shift differentiation of the generator.

use std::f64::consts::FRAC_PI_2;

use crate::circuit::{Gate, GateProgram, ParamRef};

/// A simulator state that gates can be applied to and measured.
pub trait Simulator: Clone {
    fn apply(&mut self, gate: &Gate);

    /// `<X>_1, <Z>_1, <X>_2, <Z>_2, ...`
    fn expectation_values(&self) -> Vec<f64>;
}

/// Gradients of a scalar `upstream . expectations` with respect to the
/// generator parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub dtheta: Vec<f64>,
    pub dlambda: Vec<f64>,
}

impl Gradients {
    pub fn zeros(theta_len: usize, lambda_len: usize) -> Self {
        Self { dtheta: vec![0.0; theta_len], dlambda: vec![0.0; lambda_len] }
    }

    /// Thetas followed by lambdas, the layout of `ParameterSet::to_flat`.
    pub fn to_flat(&self) -> Vec<f64> {
        self.dtheta.iter().chain(&self.dlambda).copied().collect()
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.dtheta.iter_mut().zip(&other.dtheta) {
            *a += b;
        }
        for (a, b) in self.dlambda.iter_mut().zip(&other.dlambda) {
            *a += b;
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Two-term shift rule, per parameterized gate.
///
/// `dE/dphi = (E(phi + pi/2) - E(phi - pi/2)) / 2` for each rotation; an
/// upload gate `RX(lambda * z)` contributes `z * dE/dphi` to its lambda.
/// The state before each gate is carried forward so every shifted
/// evaluation only replays the suffix of the program.
pub fn parameter_shift<S: Simulator>(
    initial: S,
    program: &GateProgram,
    theta_len: usize,
    lambda_len: usize,
    upstream: &[f64],
) -> Gradients {
    let mut grads = Gradients::zeros(theta_len, lambda_len);
    if upstream.iter().all(|&u| u == 0.0) {
        return grads;
    }
    let gates = program.gates();
    let mut prefix = initial;
    for (k, (gate, source)) in gates.iter().zip(program.sources()).enumerate() {
        if let (Some(source), Some(angle)) = (source, gate.angle()) {
            let skip = matches!(source, ParamRef::Lambda { noise, .. } if *noise == 0.0);
            if !skip {
                let shifted = |delta: f64| {
                    let mut s = prefix.clone();
                    s.apply(&gate.with_angle(angle + delta));
                    for g in &gates[k + 1..] {
                        s.apply(g);
                    }
                    dot(upstream, &s.expectation_values())
                };
                let d = 0.5 * (shifted(FRAC_PI_2) - shifted(-FRAC_PI_2));
                match *source {
                    ParamRef::Theta(i) => grads.dtheta[i] += d,
                    ParamRef::Lambda { index, noise } => grads.dlambda[index] += noise * d,
                }
            }
        }
        prefix.apply(gate);
    }
    grads
}
