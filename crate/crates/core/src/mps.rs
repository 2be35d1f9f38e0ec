//! Matrix product state simulation with bounded bond dimension.
//!
//! Site `k` holds qubit `k` as two matrices `A[k][p]` (`chi_{k-1} x chi_k`),
//! one per physical value `p`. The state is kept in mixed canonical form
//! around an orthogonality center, so the SVD of a two-site block after a
//! CNOT is the optimal truncation of the whole state. Retained singular
//! values are renormalized to unit norm after each truncation; the
//! discarded weight is accumulated in [`MpsState::discarded_weight`].
//!
//! CNOTs between non-adjacent qubits are routed through SWAP gates, each of
//! which is an ordinary truncated two-site update.

use std::io::Write;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::circuit::{build_program, CircuitError, CircuitSpec, Gate, GateProgram, NoiseVector, ParameterSet};
use crate::gradient::{parameter_shift, Gradients, Simulator};
use crate::statevector::{ExpectationVector, Statevector};
use crate::C64;

type Mat = DMatrix<C64>;

/// Singular values below this fraction of the largest are dropped as numerical zeros.
const ZERO_CUTOFF: f64 = 1e-14;

#[derive(Debug, Error, PartialEq)]
pub enum MpsError {
    #[error("bond dimension must be at least 1, got {0}")]
    InvalidBond(usize),
    #[error("dimension mismatch: {0} vs {1} qubits")]
    DimensionMismatch(usize, usize),
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error("upstream has length {got}, expected {expected}")]
    UpstreamLength { expected: usize, got: usize },
}

fn zero() -> C64 {
    C64::new(0.0, 0.0)
}

fn one() -> C64 {
    C64::new(1.0, 0.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpsState {
    sites: Vec<[Mat; 2]>,
    max_bond: usize,
    center: usize,
    discarded_weight: f64,
    retained_fidelity: f64,
    truncations: usize,
}

/// `(U, s, V^H)` of `m`.
fn thin_svd(m: &Mat) -> (Mat, Vec<f64>, Mat) {
    let svd = faer::Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
        .thin_svd()
        .expect("SVD of a finite matrix converges");
    let (u, v) = (svd.U(), svd.V());
    let s = svd.S().column_vector();
    let k = s.nrows();
    (
        Mat::from_fn(m.nrows(), k, |i, j| u[(i, j)]),
        (0..k).map(|i| s[i].re).collect(),
        Mat::from_fn(k, m.ncols(), |i, j| v[(j, i)].conj()),
    )
}

impl MpsState {
    /// The product state `|0...0>`.
    pub fn zero_state(n_qubits: usize, max_bond: usize) -> Result<Self, MpsError> {
        if max_bond < 1 {
            return Err(MpsError::InvalidBond(max_bond));
        }
        let site = [Mat::from_element(1, 1, one()), Mat::from_element(1, 1, zero())];
        Ok(Self {
            sites: vec![site; n_qubits],
            max_bond,
            center: 0,
            discarded_weight: 0.0,
            retained_fidelity: 1.0,
            truncations: 0,
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.sites.len()
    }

    pub fn max_bond(&self) -> usize {
        self.max_bond
    }

    /// `chi_0 .. chi_n`, including the trivial outer bonds.
    pub fn bond_dims(&self) -> Vec<usize> {
        let mut dims = vec![1];
        dims.extend(self.sites.iter().map(|s| s[0].ncols()));
        dims
    }

    /// Sum over truncations of the discarded squared singular values, each
    /// relative to the (unit) norm before truncation.
    pub fn discarded_weight(&self) -> f64 {
        self.discarded_weight
    }

    /// Product of the retained weights; the norm the state would have
    /// without renormalization.
    pub fn retained_fidelity(&self) -> f64 {
        self.retained_fidelity
    }

    /// Number of SVDs that discarded a non-negligible singular value.
    pub fn truncations(&self) -> usize {
        self.truncations
    }

    /// Number of stored complex coefficients.
    pub fn coefficient_count(&self) -> usize {
        self.sites.iter().map(|s| 2 * s[0].nrows() * s[0].ncols()).sum()
    }

    pub fn apply(&mut self, gate: &Gate) {
        match *gate {
            Gate::Rx { qubit, angle } => {
                let (s, c) = (0.5 * angle).sin_cos();
                self.apply_single(qubit, [C64::new(c, 0.0), C64::new(0.0, -s), C64::new(0.0, -s), C64::new(c, 0.0)]);
            }
            Gate::Ry { qubit, angle } => {
                let (s, c) = (0.5 * angle).sin_cos();
                self.apply_single(qubit, [C64::new(c, 0.0), C64::new(-s, 0.0), C64::new(s, 0.0), C64::new(c, 0.0)]);
            }
            Gate::Rz { qubit, angle } => {
                let (s, c) = (0.5 * angle).sin_cos();
                self.apply_single(qubit, [C64::new(c, -s), zero(), zero(), C64::new(c, s)]);
            }
            Gate::Cnot { control, target } => self.apply_cnot(control, target),
        }
    }

    fn apply_single(&mut self, k: usize, u: [C64; 4]) {
        let [a0, a1] = &self.sites[k];
        let b0 = a0 * u[0] + a1 * u[1];
        let b1 = a0 * u[2] + a1 * u[3];
        self.sites[k] = [b0, b1];
    }

    fn apply_cnot(&mut self, control: usize, target: usize) {
        let (lo, hi) = (control.min(target), control.max(target));
        // Bring `lo` next to `hi`, act, and route it back.
        for k in lo..hi - 1 {
            self.apply_two_site(k, &swap_matrix());
        }
        let control_is_left = control < target;
        self.apply_two_site(hi - 1, &cnot_matrix(control_is_left));
        for k in (lo..hi - 1).rev() {
            self.apply_two_site(k, &swap_matrix());
        }
    }

    /// `g` acts on `(p_k, p_{k+1})` with row/column index `2 p_k + p_{k+1}`.
    fn apply_two_site(&mut self, k: usize, g: &[[C64; 4]; 4]) {
        self.move_center(k);
        let (l, r) = (self.sites[k][0].nrows(), self.sites[k + 1][0].ncols());
        let mut theta: [Mat; 4] = std::array::from_fn(|_| Mat::zeros(l, r));
        for pl in 0..2 {
            for pr in 0..2 {
                theta[2 * pl + pr] = &self.sites[k][pl] * &self.sites[k + 1][pr];
            }
        }
        let mut block = Mat::zeros(2 * l, 2 * r);
        for pl in 0..2 {
            for pr in 0..2 {
                let mut acc = Mat::zeros(l, r);
                for (q, t) in theta.iter().enumerate() {
                    let c = g[2 * pl + pr][q];
                    if c != zero() {
                        acc += t * c;
                    }
                }
                block.view_mut((pl * l, pr * r), (l, r)).copy_from(&acc);
            }
        }

        let (u, s, v_t) = thin_svd(&block);
        let mut order: Vec<usize> = (0..s.len()).collect();
        order.sort_by(|&i, &j| s[j].total_cmp(&s[i]).then(i.cmp(&j)));

        let total: f64 = s.iter().map(|x| x * x).sum();
        let s_max = s[order[0]];
        let nonzero = order.iter().take_while(|&&i| s[i] > ZERO_CUTOFF * s_max).count().max(1);
        let keep = nonzero.min(self.max_bond);
        let kept: f64 = order[..keep].iter().map(|&i| s[i] * s[i]).sum();
        let discarded = ((total - kept) / total).max(0.0);
        if keep < nonzero {
            self.truncations += 1;
        }
        self.discarded_weight += discarded;
        self.retained_fidelity *= 1.0 - discarded;
        let scale = 1.0 / kept.sqrt();

        let mut left = [Mat::zeros(l, keep), Mat::zeros(l, keep)];
        let mut right = [Mat::zeros(keep, r), Mat::zeros(keep, r)];
        for (col, &i) in order[..keep].iter().enumerate() {
            for p in 0..2 {
                left[p].column_mut(col).copy_from(&u.view((p * l, i), (l, 1)));
                let row = v_t.view((i, p * r), (1, r)) * C64::new(s[i] * scale, 0.0);
                right[p].row_mut(col).copy_from(&row);
            }
        }
        self.sites[k] = left;
        self.sites[k + 1] = right;
        self.center = k + 1;
    }

    fn move_center(&mut self, k: usize) {
        while self.center < k {
            let c = self.center;
            let l = self.sites[c][0].nrows();
            let r = self.sites[c][0].ncols();
            let mut stacked = Mat::zeros(2 * l, r);
            stacked.view_mut((0, 0), (l, r)).copy_from(&self.sites[c][0]);
            stacked.view_mut((l, 0), (l, r)).copy_from(&self.sites[c][1]);
            let qr = stacked.qr();
            let (q, rr) = (qr.q(), qr.r());
            let chi = q.ncols();
            self.sites[c] = [q.rows(0, l).into_owned(), q.rows(l, l).into_owned()];
            let next = &self.sites[c + 1];
            self.sites[c + 1] = [&rr * &next[0], &rr * &next[1]];
            debug_assert_eq!(self.sites[c][0].ncols(), chi);
            self.center += 1;
        }
        while self.center > k {
            let c = self.center;
            let l = self.sites[c][0].nrows();
            let r = self.sites[c][0].ncols();
            let mut wide = Mat::zeros(l, 2 * r);
            wide.view_mut((0, 0), (l, r)).copy_from(&self.sites[c][0]);
            wide.view_mut((0, r), (l, r)).copy_from(&self.sites[c][1]);
            // wide = R^H Q^H from QR of wide^H.
            let qr = wide.adjoint().qr();
            let (q, rr) = (qr.q().adjoint(), qr.r().adjoint());
            self.sites[c] = [q.columns(0, r).into_owned(), q.columns(r, r).into_owned()];
            let prev = &self.sites[c - 1];
            self.sites[c - 1] = [&prev[0] * &rr, &prev[1] * &rr];
            self.center -= 1;
        }
    }

    /// Left transfer environments `E_0 .. E_n` of `<bra|ket>`.
    fn left_envs(bra: &MpsState, ket: &MpsState) -> Vec<Mat> {
        let mut envs = vec![Mat::from_element(1, 1, one())];
        for (a, b) in bra.sites.iter().zip(&ket.sites) {
            let e = envs.last().unwrap();
            let next = a[0].adjoint() * e * &b[0] + a[1].adjoint() * e * &b[1];
            envs.push(next);
        }
        envs
    }

    fn right_envs(&self) -> Vec<Mat> {
        let n = self.sites.len();
        let mut envs = vec![Mat::zeros(0, 0); n + 1];
        envs[n] = Mat::from_element(1, 1, one());
        for k in (0..n).rev() {
            let a = &self.sites[k];
            let r = &envs[k + 1];
            envs[k] = a[0].conjugate() * r * a[0].transpose() + a[1].conjugate() * r * a[1].transpose();
        }
        envs
    }

    /// `<self|other>` by transfer-matrix contraction.
    pub fn overlap(&self, other: &MpsState) -> Result<C64, MpsError> {
        if self.n_qubits() != other.n_qubits() {
            return Err(MpsError::DimensionMismatch(self.n_qubits(), other.n_qubits()));
        }
        Ok(Self::left_envs(self, other).last().unwrap()[(0, 0)])
    }

    pub fn norm_sqr(&self) -> f64 {
        Self::left_envs(self, self).last().unwrap()[(0, 0)].re
    }

    /// Dense amplitudes, with qubit `k` as bit `k` of the index.
    pub fn to_statevector(&self) -> Statevector {
        let mut t = Mat::from_element(1, 1, one());
        for site in &self.sites {
            let rows = t.nrows();
            let p0 = &t * &site[0];
            let p1 = &t * &site[1];
            let mut next = Mat::zeros(2 * rows, site[0].ncols());
            next.view_mut((0, 0), (rows, p0.ncols())).copy_from(&p0);
            next.view_mut((rows, 0), (rows, p1.ncols())).copy_from(&p1);
            t = next;
        }
        Statevector::from_amplitudes(t.column(0).iter().copied().collect())
            .expect("MPS register within dense limit")
    }

    /// Schmidt spectra of every internal bond, left to right.
    pub fn bond_spectra(&self) -> Vec<Vec<f64>> {
        let mut s = self.clone();
        s.move_center(0);
        let n = s.sites.len();
        let mut out = Vec::with_capacity(n.saturating_sub(1));
        for k in 0..n.saturating_sub(1) {
            let l = s.sites[k][0].nrows();
            let r = s.sites[k][0].ncols();
            let mut stacked = Mat::zeros(2 * l, r);
            stacked.view_mut((0, 0), (l, r)).copy_from(&s.sites[k][0]);
            stacked.view_mut((l, 0), (l, r)).copy_from(&s.sites[k][1]);
            let mut sv: Vec<f64> = stacked.singular_values().iter().copied().collect();
            sv.sort_by(|a, b| b.total_cmp(a));
            out.push(sv);
            s.move_center(k + 1);
        }
        out
    }

    /// Per-site shapes (`site,left,phys,right`) followed by bond spectra (`bond,index,value`).
    pub fn write_dump(&self, out: &mut impl Write) -> std::io::Result<()> {
        writeln!(out, "site,left,phys,right")?;
        for (k, s) in self.sites.iter().enumerate() {
            writeln!(out, "{k},{},2,{}", s[0].nrows(), s[0].ncols())?;
        }
        writeln!(out)?;
        writeln!(out, "bond,index,value")?;
        for (b, spectrum) in self.bond_spectra().iter().enumerate() {
            for (i, v) in spectrum.iter().enumerate() {
                writeln!(out, "{},{i},{v}", b + 1)?;
            }
        }
        Ok(())
    }
}

fn swap_matrix() -> [[C64; 4]; 4] {
    let mut g = [[zero(); 4]; 4];
    g[0][0] = one();
    g[1][2] = one();
    g[2][1] = one();
    g[3][3] = one();
    g
}

fn cnot_matrix(control_is_left: bool) -> [[C64; 4]; 4] {
    let mut g = [[zero(); 4]; 4];
    for pl in 0..2 {
        for pr in 0..2 {
            let (ol, or) = if control_is_left { (pl, pr ^ pl) } else { (pl ^ pr, pr) };
            g[2 * ol + or][2 * pl + pr] = one();
        }
    }
    g
}

impl Simulator for MpsState {
    fn apply(&mut self, gate: &Gate) {
        MpsState::apply(self, gate);
    }

    fn expectation_values(&self) -> Vec<f64> {
        mps_expectations(self).into_values()
    }
}

/// Simulates `program` from `|0...0>` with bond dimension capped at `max_bond`.
pub fn run_program(program: &GateProgram, max_bond: usize) -> Result<MpsState, MpsError> {
    let mut state = MpsState::zero_state(program.n_qubits(), max_bond)?;
    for g in program.gates() {
        state.apply(g);
    }
    Ok(state)
}

pub fn mps_run(
    spec: &CircuitSpec,
    params: &ParameterSet,
    noise: &NoiseVector,
    max_bond: usize,
) -> Result<MpsState, MpsError> {
    if max_bond < 1 {
        return Err(MpsError::InvalidBond(max_bond));
    }
    run_program(&build_program(spec, params, noise)?, max_bond)
}

/// Same ordering and semantics as [`crate::statevector::expectations`].
pub fn mps_expectations(state: &MpsState) -> ExpectationVector {
    let left = MpsState::left_envs(state, state);
    let right = state.right_envs();
    let norm = left.last().unwrap()[(0, 0)].re;
    let mut out = Vec::with_capacity(2 * state.n_qubits());
    for (k, a) in state.sites.iter().enumerate() {
        let (e, r) = (&left[k], &right[k + 1]);
        // Local reduced blocks rho[p][p'] = sum (A_p^H E A_p') o R.
        let rho = |p: usize, q: usize| -> C64 { (a[p].adjoint() * e * &a[q]).component_mul(r).sum() };
        let x = (rho(0, 1) + rho(1, 0)).re / norm;
        let z = (rho(0, 0) - rho(1, 1)).re / norm;
        out.push(x.clamp(-1.0, 1.0));
        out.push(z.clamp(-1.0, 1.0));
    }
    ExpectationVector(out)
}

/// `|<reference|state>|^2` with both sides normalized.
pub fn fidelity_dense(state: &MpsState, reference: &Statevector) -> Result<f64, MpsError> {
    if state.n_qubits() != reference.n_qubits() {
        return Err(MpsError::DimensionMismatch(state.n_qubits(), reference.n_qubits()));
    }
    let dense = state.to_statevector();
    let ov = reference.inner(&dense);
    Ok(ov.norm_sqr() / (reference.norm_sqr() * dense.norm_sqr()))
}

/// `|<a|b>|^2` with both sides normalized, in `O(n chi^3)`.
pub fn fidelity_mps(a: &MpsState, b: &MpsState) -> Result<f64, MpsError> {
    let ov = a.overlap(b)?;
    Ok(ov.norm_sqr() / (a.norm_sqr() * b.norm_sqr()))
}

/// Parameter-shift gradient over the truncated simulator at `max_bond`.
pub fn mps_gradient(
    spec: &CircuitSpec,
    params: &ParameterSet,
    noise: &NoiseVector,
    max_bond: usize,
    upstream: &[f64],
) -> Result<Gradients, MpsError> {
    if max_bond < 1 {
        return Err(MpsError::InvalidBond(max_bond));
    }
    if upstream.len() != spec.output_len() {
        return Err(MpsError::UpstreamLength { expected: spec.output_len(), got: upstream.len() });
    }
    let program = build_program(spec, params, noise)?;
    let init = MpsState::zero_state(spec.n_qubits, max_bond)?;
    Ok(parameter_shift(init, &program, params.thetas.len(), params.lambdas.len(), upstream))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::Topology;
    use crate::rng;
    use crate::statevector::{self, expectations};
    use crate::statevector::tests::{finite_difference, rel_err};
    use rand::Rng;

    fn random_case(seed: u64, n: usize, l: usize, topology: Topology) -> (CircuitSpec, ParameterSet, NoiseVector) {
        let spec = CircuitSpec::new(n, l, topology).unwrap();
        let mut r = rng::stream(seed, 77, &[]);
        let params = ParameterSet::random(&spec, &mut r);
        let noise = NoiseVector::sample(&spec, &mut r);
        (spec, params, noise)
    }

    fn check_bond_caps(s: &MpsState) {
        let n = s.n_qubits();
        for (k, &chi) in s.bond_dims().iter().enumerate() {
            let cap = (1usize << k.min(n - k).min(20)).min(s.max_bond());
            assert!(chi <= cap, "bond {k}: {chi} > {cap}");
        }
        assert!(s.coefficient_count() <= 2 * n * 2 * s.max_bond() * s.max_bond());
    }

    #[test]
    fn invalid_bond() {
        assert_eq!(MpsState::zero_state(3, 0).unwrap_err(), MpsError::InvalidBond(0));
        let spec = CircuitSpec::new(2, 1, Topology::Chain).unwrap();
        let p = ParameterSet::zeros(&spec);
        let z = NoiseVector::zeros(&spec);
        assert_eq!(mps_run(&spec, &p, &z, 0).unwrap_err(), MpsError::InvalidBond(0));
        assert_eq!(mps_gradient(&spec, &p, &z, 0, &[0.0; 4]).unwrap_err(), MpsError::InvalidBond(0));
    }

    #[test]
    fn exact_regime_matches_dense() {
        for (seed, n, l, topology) in [(0, 4, 3, Topology::Chain), (1, 6, 4, Topology::Ring), (2, 10, 6, Topology::Chain), (3, 7, 5, Topology::Ring)] {
            let (spec, params, noise) = random_case(seed, n, l, topology);
            let chi = 1 << (n / 2);
            let m = mps_run(&spec, &params, &noise, chi).unwrap();
            let d = statevector::run(&spec, &params, &noise).unwrap();
            let dense = m.to_statevector();
            // Global phase is fixed: both start from |0...0> with identical gates.
            for (a, b) in dense.amplitudes().iter().zip(d.amplitudes()) {
                assert!((a - b).norm() < 1e-10);
            }
            assert_eq!(m.truncations(), 0);
            let (em, ed) = (mps_expectations(&m), expectations(&d));
            for (a, b) in em.values().iter().zip(ed.values()) {
                assert!((a - b).abs() < 1e-10);
            }
            assert!((fidelity_dense(&m, &d).unwrap() - 1.0).abs() < 1e-12);
            check_bond_caps(&m);
        }
    }

    #[test]
    fn product_state_at_bond_one() {
        let spec = CircuitSpec::new(5, 2, Topology::Chain).unwrap();
        let (p, z) = (ParameterSet::zeros(&spec), NoiseVector::zeros(&spec));
        let m = mps_run(&spec, &p, &z, 1).unwrap();
        let d = statevector::run(&spec, &p, &z).unwrap();
        assert!((fidelity_dense(&m, &d).unwrap() - 1.0).abs() < 1e-12);
        let e = mps_expectations(&m);
        for q in 0..5 {
            assert_eq!(e.values()[2 * q], 0.0);
            assert_eq!(e.values()[2 * q + 1], 1.0);
        }
    }

    #[test]
    fn truncation_loses_fidelity() {
        let (spec, params, noise) = random_case(5, 6, 4, Topology::Chain);
        let m = mps_run(&spec, &params, &noise, 2).unwrap();
        let d = statevector::run(&spec, &params, &noise).unwrap();
        assert!(m.discarded_weight() > 0.0);
        let f = fidelity_dense(&m, &d).unwrap();
        assert!(f < 1.0 && f > 0.0);
        assert!((m.norm_sqr() - 1.0).abs() < 1e-10);
        assert!(mps_expectations(&m).values().iter().all(|v| (-1.0..=1.0).contains(v)));
        check_bond_caps(&m);
    }

    #[test]
    fn norm_and_caps_after_every_gate() {
        let (spec, params, noise) = random_case(8, 6, 3, Topology::Ring);
        let program = build_program(&spec, &params, &noise).unwrap();
        let mut m = MpsState::zero_state(6, 3).unwrap();
        for g in program.gates() {
            m.apply(g);
            assert!((m.norm_sqr() - 1.0).abs() < 1e-10);
            check_bond_caps(&m);
        }
    }

    #[test]
    fn fidelity_edge_cases() {
        let (spec, params, noise) = random_case(9, 5, 2, Topology::Chain);
        let m = mps_run(&spec, &params, &noise, 8).unwrap();
        assert!((fidelity_dense(&m, &m.to_statevector()).unwrap() - 1.0).abs() < 1e-12);
        assert!((fidelity_mps(&m, &m).unwrap() - 1.0).abs() < 1e-12);

        // |0...0> against |1 0...0>.
        let zero = MpsState::zero_state(3, 2).unwrap();
        let mut flipped = zero.clone();
        flipped.apply(&Gate::Rx { qubit: 0, angle: std::f64::consts::PI });
        assert!(fidelity_mps(&zero, &flipped).unwrap() < 1e-12);
        assert!(fidelity_dense(&zero, &flipped.to_statevector()).unwrap() < 1e-12);

        let other = MpsState::zero_state(4, 2).unwrap();
        assert_eq!(fidelity_mps(&zero, &other).unwrap_err(), MpsError::DimensionMismatch(3, 4));
        let sv = Statevector::zero_state(4).unwrap();
        assert_eq!(fidelity_dense(&zero, &sv).unwrap_err(), MpsError::DimensionMismatch(3, 4));
    }

    #[test]
    fn fidelity_mps_matches_dense_contraction() {
        for seed in 0..6 {
            let n = 4 + seed as usize % 5;
            let (spec, params, noise) = random_case(seed, n, 3, Topology::Chain);
            let a = mps_run(&spec, &params, &noise, 2).unwrap();
            let b = mps_run(&spec, &params, &noise, 3).unwrap();
            let oracle = {
                let (da, db) = (a.to_statevector(), b.to_statevector());
                da.inner(&db).norm_sqr() / (da.norm_sqr() * db.norm_sqr())
            };
            assert!((fidelity_mps(&a, &b).unwrap() - oracle).abs() < 1e-10);
        }
    }

    #[test]
    fn fidelity_to_exact_rises_with_bond() {
        let (spec, params, noise) = random_case(12, 8, 4, Topology::Chain);
        let exact = mps_run(&spec, &params, &noise, 16).unwrap();
        let mut prev = 0.0;
        for chi in 1..=16 {
            let f = fidelity_mps(&exact, &mps_run(&spec, &params, &noise, chi).unwrap()).unwrap();
            assert!(f >= prev - 1e-9, "chi {chi}: {f} < {prev}");
            prev = f;
        }
        assert!((prev - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_dense_in_exact_regime() {
        let (spec, params, noise) = random_case(13, 4, 2, Topology::Ring);
        let mut r = rng::stream(13, 5, &[]);
        let upstream: Vec<f64> = (0..8).map(|_| r.random_range(-1.0..1.0)).collect();
        let g = mps_gradient(&spec, &params, &noise, 4, &upstream).unwrap().to_flat();
        let d = statevector::adjoint_gradient(&spec, &params, &noise, &upstream).unwrap().to_flat();
        for (a, b) in g.iter().zip(&d) {
            assert!((a - b).abs() < 1e-9);
        }
        let zero = mps_gradient(&spec, &params, &noise, 4, &[0.0; 8]).unwrap();
        assert!(zero.to_flat().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn truncated_gradient_tracks_finite_differences() {
        // One and two below the exact bond of 8, so truncation is mild.
        for (seed, chi) in [(0, 6), (1, 6), (0, 7), (1, 7)] {
            let (spec, params, noise) = random_case(seed, 6, 3, Topology::Chain);
            let mut r = rng::stream(seed, 5, &[]);
            let upstream: Vec<f64> = (0..12).map(|_| r.random_range(-1.0..1.0)).collect();
            let m = mps_run(&spec, &params, &noise, chi).unwrap();
            assert!(m.truncations() > 0 && m.discarded_weight() > 0.0);
            let g = mps_gradient(&spec, &params, &noise, chi, &upstream).unwrap().to_flat();
            let eval = |p: &ParameterSet| mps_expectations(&mps_run(&spec, p, &noise, chi).unwrap()).into_values();
            let fd = finite_difference(&spec, &params, &noise, &upstream, &eval);
            let err = rel_err(&g, &fd);
            assert!(err < 1e-3, "seed {seed} chi {chi}: relative error {err}");
        }
    }

    #[test]
    fn dump_lists_shapes_and_spectra() {
        let (spec, params, noise) = random_case(2, 4, 2, Topology::Chain);
        let m = mps_run(&spec, &params, &noise, 4).unwrap();
        let spectra = m.bond_spectra();
        assert_eq!(spectra.len(), 3);
        for s in &spectra {
            assert!((s.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-10);
        }
        let mut buf = Vec::new();
        m.write_dump(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("site,left,phys,right\n0,1,2,"));
        assert!(text.contains("bond,index,value\n1,0,"));
    }
}
