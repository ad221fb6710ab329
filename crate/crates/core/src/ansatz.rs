//! The two circuit families: the random scrambling step of the forward
//! process and the hardware-efficient ansatz (HEA) used by denoising steps.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64 as C64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RandomStream;
use crate::statevector::{inner, kernels, Axis, Pauli, PauliString, StateVector};

/// Angles of one scrambling step on `n` qubits.
///
/// `phi[3k..3k+3]` are the Z, Y, Z angles applied to qubit `k` (in that
/// order); `g` sets the all-to-all ZZ layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScramblingStepParams {
    pub phi: Vec<f64>,
    pub g: f64,
}

impl ScramblingStepParams {
    pub fn zeros(n: usize) -> Self {
        Self { phi: vec![0.0; 3 * n], g: 0.0 }
    }

    pub fn n_qubits(&self) -> usize {
        self.phi.len() / 3
    }
}

/// Applies one scrambling step: single-qubit ZYZ rotations on every qubit,
/// then `exp(-i g/(2 sqrt n) Z_a Z_b)` on every pair `a < b`.
pub fn apply_scrambling_step(state: &mut StateVector, p: &ScramblingStepParams) -> Result<()> {
    let n = state.n_qubits();
    if p.phi.len() != 3 * n {
        return Err(Error::DimensionMismatch(format!("scrambling step has {} angles for {n} qubits", p.phi.len())));
    }
    for k in 0..n {
        state.apply_1q(k, Axis::Z, p.phi[3 * k])?;
        state.apply_1q(k, Axis::Y, p.phi[3 * k + 1])?;
        state.apply_1q(k, Axis::Z, p.phi[3 * k + 2])?;
    }
    if n > 1 {
        let angle = p.g / (n as f64).sqrt();
        for a in 0..n {
            for b in a + 1..n {
                state.apply_zz(a, b, angle)?;
            }
        }
    }
    Ok(())
}

/// How a half-width evolves over the `T` diffusion steps.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "snake_case")]
pub enum RangeProfile {
    /// Same half-width at every step.
    Constant { value: f64 },
    /// `(t / T) * max`.
    Ramp { max: f64 },
}

impl RangeProfile {
    fn at(&self, t: usize, steps: usize) -> f64 {
        match *self {
            RangeProfile::Constant { value } => value,
            RangeProfile::Ramp { max } => max * t as f64 / steps as f64,
        }
    }

    fn validate(&self) -> Result<()> {
        let v = match *self {
            RangeProfile::Constant { value } => value,
            RangeProfile::Ramp { max } => max,
        };
        if !(v.is_finite() && v >= 0.0) {
            return Err(Error::InvalidParameter(format!("range {v} must be finite and >= 0")));
        }
        Ok(())
    }
}

/// Half-widths of the uniform distributions the scrambling angles are drawn
/// from, per step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiffusionSchedule {
    pub steps: usize,
    pub angle: RangeProfile,
    pub g: RangeProfile,
}

impl DiffusionSchedule {
    /// Linear ramp of both ranges up to `pi` at the last step.
    pub fn ramp(steps: usize) -> Self {
        Self { steps, angle: RangeProfile::Ramp { max: PI }, g: RangeProfile::Ramp { max: PI } }
    }

    /// Fixed half-width for both ranges.
    pub fn constant(steps: usize, value: f64) -> Self {
        Self { steps, angle: RangeProfile::Constant { value }, g: RangeProfile::Constant { value } }
    }

    pub fn validate(&self) -> Result<()> {
        self.angle.validate()?;
        self.g.validate()
    }

    pub fn angle_range(&self, t: usize) -> f64 {
        self.angle.at(t, self.steps.max(1))
    }

    pub fn g_range(&self, t: usize) -> f64 {
        self.g.at(t, self.steps.max(1))
    }
}

fn symmetric_uniform<R: Rng + ?Sized>(rng: &mut R, half_width: f64) -> f64 {
    (2.0 * rng.random::<f64>() - 1.0) * half_width
}

/// Draws the parameters of step `t` (1-based) from `stream`.
pub fn sample_step_params(
    n: usize,
    t: usize,
    sched: &DiffusionSchedule,
    stream: &RandomStream,
) -> Result<ScramblingStepParams> {
    if t == 0 || t > sched.steps {
        return Err(Error::InvalidParameter(format!("step {t} outside 1..={}", sched.steps)));
    }
    let mut rng = stream.rng();
    let a = sched.angle_range(t);
    let phi = (0..3 * n).map(|_| symmetric_uniform(&mut rng, a)).collect();
    let g = symmetric_uniform(&mut rng, sched.g_range(t));
    Ok(ScramblingStepParams { phi, g })
}

/// Parameters of an `L`-layer HEA on `n_qubits` qubits.
///
/// Layout: `theta[l * 2n + 2q]` is the X angle and `theta[l * 2n + 2q + 1]`
/// the Y angle of qubit `q` in layer `l`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeaParams {
    pub n_qubits: usize,
    pub layers: usize,
    pub theta: Vec<f64>,
}

impl HeaParams {
    pub fn param_count(n_qubits: usize, layers: usize) -> usize {
        2 * n_qubits * layers
    }

    pub fn zeros(n_qubits: usize, layers: usize) -> Self {
        Self { n_qubits, layers, theta: vec![0.0; Self::param_count(n_qubits, layers)] }
    }

    pub fn new(n_qubits: usize, layers: usize, theta: Vec<f64>) -> Result<Self> {
        if theta.len() != Self::param_count(n_qubits, layers) {
            return Err(Error::DimensionMismatch(format!(
                "HEA with {n_qubits} qubits and {layers} layers needs {} angles, got {}",
                Self::param_count(n_qubits, layers),
                theta.len()
            )));
        }
        Ok(Self { n_qubits, layers, theta })
    }

    /// Angles drawn i.i.d. from `U[-half_width, half_width]`.
    pub fn random(n_qubits: usize, layers: usize, half_width: f64, stream: &RandomStream) -> Self {
        let mut rng = stream.rng();
        let theta = (0..Self::param_count(n_qubits, layers)).map(|_| symmetric_uniform(&mut rng, half_width)).collect();
        Self { n_qubits, layers, theta }
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    pub fn with_theta(&self, theta: Vec<f64>) -> Self {
        Self { n_qubits: self.n_qubits, layers: self.layers, theta }
    }

    /// Copy with `theta[index] += shift`.
    pub fn shifted(&self, index: usize, shift: f64) -> Self {
        let mut p = self.clone();
        p.theta[index] += shift;
        p
    }
}

/// One gate of the HEA gate list.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Gate {
    /// `exp(-i theta[param] P / 2)` on `qubit`.
    Rot {
        qubit: usize,
        axis: Axis,
        param: usize,
    },
    Cz(usize, usize),
}

/// Flattened gate sequence of an HEA, in application order.
pub fn hea_gates(n: usize, layers: usize) -> Vec<Gate> {
    let mut gates = Vec::with_capacity(layers * (3 * n));
    for l in 0..layers {
        for q in 0..n {
            let base = l * 2 * n + 2 * q;
            gates.push(Gate::Rot { qubit: q, axis: Axis::X, param: base });
            gates.push(Gate::Rot { qubit: q, axis: Axis::Y, param: base + 1 });
        }
        for start in [0, 1] {
            let mut q = start;
            while q + 1 < n {
                gates.push(Gate::Cz(q, q + 1));
                q += 2;
            }
        }
    }
    gates
}

/// Runs the HEA on a raw amplitude slice.
pub(crate) fn apply_hea_amps(amps: &mut [C64], n: usize, gates: &[Gate], theta: &[f64]) {
    for g in gates {
        match *g {
            Gate::Rot { qubit, axis, param } => kernels::rotate(amps, n, qubit, axis, theta[param]),
            Gate::Cz(a, b) => kernels::cz(amps, n, a, b),
        }
    }
}

/// Applies the HEA described by `p`.
pub fn apply_hea(state: &mut StateVector, p: &HeaParams) -> Result<()> {
    if state.n_qubits() != p.n_qubits {
        return Err(Error::DimensionMismatch(format!(
            "HEA on {} qubits applied to a {}-qubit state",
            p.n_qubits,
            state.n_qubits()
        )));
    }
    if p.theta.len() != HeaParams::param_count(p.n_qubits, p.layers) {
        return Err(Error::DimensionMismatch("HEA angle count does not match its shape".into()));
    }
    if let Some(bad) = p.theta.iter().find(|x| !x.is_finite()) {
        return Err(Error::InvalidParameter(format!("HEA angle {bad} is not finite")));
    }
    let gates = hea_gates(p.n_qubits, p.layers);
    let mut amps = std::mem::replace(state, StateVector::zero(1)).into_amplitudes();
    apply_hea_amps(&mut amps, p.n_qubits, &gates, &p.theta);
    *state = StateVector::from_normalized(p.n_qubits, amps);
    Ok(())
}

/// Two-point shift rule `[f(theta + pi/2 e_i) - f(theta - pi/2 e_i)] / 2`.
///
/// Exact for any loss that is a linear combination of expectation values of
/// the circuit output, since every HEA generator is a halved Pauli.
pub fn parameter_shift_gradient(loss_at: impl Fn(&HeaParams) -> f64, p: &HeaParams, index: usize) -> Result<f64> {
    let (plus, minus) = parameter_shift_pair(p, index)?;
    Ok((loss_at(&plus) - loss_at(&minus)) / 2.0)
}

/// The two shifted parameter vectors used by the shift rule.
pub fn parameter_shift_pair(p: &HeaParams, index: usize) -> Result<(HeaParams, HeaParams)> {
    if index >= p.theta.len() {
        return Err(Error::InvalidParameter(format!(
            "parameter index {index} out of range for {} angles",
            p.theta.len()
        )));
    }
    Ok((p.shifted(index, FRAC_PI_2), p.shifted(index, -FRAC_PI_2)))
}

/// Value and gradient of `sum_e w_e <psi_e| U^dag O U |psi_e>` over the HEA
/// angles, by one forward and one reverse sweep per input (adjoint method).
///
/// `inputs` are full-register vectors; `observable` returns `O phi`.
/// Weights may be negative.
pub fn hea_expectation_gradient(
    p: &HeaParams,
    inputs: &[(f64, Vec<C64>)],
    observable: impl Fn(&[C64]) -> Vec<C64>,
) -> (f64, Vec<f64>) {
    let gates = hea_gates(p.n_qubits, p.layers);
    let n = p.n_qubits;
    let mut grad = vec![0.0; p.theta.len()];
    let mut value = 0.0;
    for (w, psi) in inputs {
        let mut phi = psi.clone();
        apply_hea_amps(&mut phi, n, &gates, &p.theta);
        let mut lam = observable(&phi);
        value += w * inner(&phi, &lam).re;
        for g in gates.iter().rev() {
            match *g {
                Gate::Rot { qubit, axis, param } => {
                    let pauli = match axis {
                        Axis::X => Pauli::X,
                        Axis::Y => Pauli::Y,
                        Axis::Z => Pauli::Z,
                    };
                    let pphi = single_pauli(&phi, n, qubit, pauli);
                    grad[param] += w * inner(&lam, &pphi).im;
                    kernels::rotate(&mut phi, n, qubit, axis, -p.theta[param]);
                    kernels::rotate(&mut lam, n, qubit, axis, -p.theta[param]);
                }
                Gate::Cz(a, b) => {
                    kernels::cz(&mut phi, n, a, b);
                    kernels::cz(&mut lam, n, a, b);
                }
            }
        }
    }
    (value, grad)
}

fn single_pauli(v: &[C64], n: usize, qubit: usize, p: Pauli) -> Vec<C64> {
    kernels::apply_pauli(v, n, &PauliString::single(n, qubit, p))
}

/// Structural description of a layered circuit, recorded in manifests.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum CircuitSpec {
    Scrambling { n_qubits: usize, schedule: DiffusionSchedule },
    Hea { n_qubits: usize, layers: usize, n_params: usize },
}

impl CircuitSpec {
    pub fn hea(n_qubits: usize, layers: usize) -> Self {
        CircuitSpec::Hea { n_qubits, layers, n_params: HeaParams::param_count(n_qubits, layers) }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;

    type M = DMatrix<C64>;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn rot(axis: Axis, t: f64) -> M {
        let (s, co) = (t / 2.0).sin_cos();
        match axis {
            Axis::X => M::from_row_slice(2, 2, &[c(co, 0.0), c(0.0, -s), c(0.0, -s), c(co, 0.0)]),
            Axis::Y => M::from_row_slice(2, 2, &[c(co, 0.0), c(-s, 0.0), c(s, 0.0), c(co, 0.0)]),
            Axis::Z => M::from_row_slice(2, 2, &[c(co, -s), c(0.0, 0.0), c(0.0, 0.0), c(co, s)]),
        }
    }

    /// Embeds a single-qubit matrix at `q` via Kronecker products.
    fn embed(n: usize, q: usize, u: &M) -> M {
        let mut out = M::identity(1, 1);
        for k in 0..n {
            let f = if k == q { u.clone() } else { M::identity(2, 2) };
            out = out.kronecker(&f);
        }
        out
    }

    fn diag(n: usize, f: impl Fn(usize) -> C64) -> M {
        M::from_diagonal(&nalgebra::DVector::from_fn(1 << n, |i, _| f(i)))
    }

    fn bit(i: usize, n: usize, q: usize) -> usize {
        (i >> (n - 1 - q)) & 1
    }

    fn dense_scrambling(n: usize, p: &ScramblingStepParams) -> M {
        let mut u = M::identity(1 << n, 1 << n);
        for k in 0..n {
            u = embed(n, k, &rot(Axis::Z, p.phi[3 * k])) * u;
            u = embed(n, k, &rot(Axis::Y, p.phi[3 * k + 1])) * u;
            u = embed(n, k, &rot(Axis::Z, p.phi[3 * k + 2])) * u;
        }
        let a = p.g / (n as f64).sqrt();
        for q1 in 0..n {
            for q2 in q1 + 1..n {
                let zz = diag(n, |i| {
                    let par = bit(i, n, q1) ^ bit(i, n, q2);
                    C64::from_polar(1.0, if par == 0 { -a / 2.0 } else { a / 2.0 })
                });
                u = zz * u;
            }
        }
        u
    }

    fn dense_hea(p: &HeaParams) -> M {
        let n = p.n_qubits;
        let mut u = M::identity(1 << n, 1 << n);
        for g in hea_gates(n, p.layers) {
            let m = match g {
                Gate::Rot { qubit, axis, param } => embed(n, qubit, &rot(axis, p.theta[param])),
                Gate::Cz(a, b) => diag(n, |i| c(if bit(i, n, a) & bit(i, n, b) == 1 { -1.0 } else { 1.0 }, 0.0)),
            };
            u = m * u;
        }
        u
    }

    fn random_state(n: usize, seed: u64) -> StateVector {
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = RandomStream::new(seed).rng();
        let amps = (0..1 << n).map(|_| c(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng))).collect();
        StateVector::from_amplitudes(amps).unwrap()
    }

    fn max_diff(a: &StateVector, v: &nalgebra::DVector<C64>) -> f64 {
        a.amplitudes().iter().zip(v.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
    }

    #[test]
    fn scrambling_identity_and_flip() {
        let mut s = StateVector::zero(2);
        apply_scrambling_step(&mut s, &ScramblingStepParams::zeros(2)).unwrap();
        assert_eq!(s, StateVector::zero(2));
        let mut s = StateVector::zero(1);
        apply_scrambling_step(&mut s, &ScramblingStepParams { phi: vec![0.0, PI, 0.0], g: 1.3 }).unwrap();
        assert_abs_diff_eq!(s.amplitudes()[1].re, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.amplitudes()[0].norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn scrambling_matches_dense_oracle() {
        let sched = DiffusionSchedule::constant(1, PI);
        for n in 1..=3 {
            for seed in 0..5 {
                let p = sample_step_params(n, 1, &sched, &RandomStream::new(seed).child("p")).unwrap();
                let psi = random_state(n, 100 + seed);
                let mut s = psi.clone();
                apply_scrambling_step(&mut s, &p).unwrap();
                let v = dense_scrambling(n, &p) * nalgebra::DVector::from_column_slice(psi.amplitudes());
                assert!(max_diff(&s, &v) < 1e-10);
            }
        }
    }

    #[test]
    fn hea_examples() {
        let psi = random_state(1, 7);
        let mut s = psi.clone();
        apply_hea(&mut s, &HeaParams::zeros(1, 1)).unwrap();
        assert_eq!(s, psi);
        let mut s = StateVector::zero(2);
        apply_hea(&mut s, &HeaParams::zeros(2, 1)).unwrap();
        assert_eq!(s, StateVector::zero(2));
        assert!(apply_hea(&mut s, &HeaParams::zeros(3, 1)).is_err());
    }

    #[test]
    fn hea_matches_dense_oracle() {
        for (n, layers) in [(2, 1), (3, 2), (3, 3)] {
            let p = HeaParams::random(n, layers, PI, &RandomStream::new(n as u64 * 31 + layers as u64));
            let psi = random_state(n, 11);
            let mut s = psi.clone();
            apply_hea(&mut s, &p).unwrap();
            let v = dense_hea(&p) * nalgebra::DVector::from_column_slice(psi.amplitudes());
            assert!(max_diff(&s, &v) < 1e-10);
        }
    }

    #[test]
    fn cz_pattern_even_pairs_then_odd() {
        let g = hea_gates(4, 1);
        let czs: Vec<_> = g.iter().filter(|x| matches!(x, Gate::Cz(..))).copied().collect();
        assert_eq!(czs, vec![Gate::Cz(0, 1), Gate::Cz(2, 3), Gate::Cz(1, 2)]);
        assert_eq!(HeaParams::param_count(3, 6), 36);
    }

    #[test]
    fn step_sampling_support_and_determinism() {
        let zero = DiffusionSchedule::constant(3, 0.0);
        let p = sample_step_params(2, 1, &zero, &RandomStream::new(1)).unwrap();
        assert!(p.phi.iter().all(|x| *x == 0.0) && p.g == 0.0);
        let sched = DiffusionSchedule::constant(5, PI / 8.0);
        let root = RandomStream::new(9);
        let mut max = 0.0f64;
        for i in 0..10_000 {
            let p = sample_step_params(1, 2, &sched, &root.index(i)).unwrap();
            max = p.phi.iter().fold(max, |m, x| m.max(x.abs()));
        }
        assert!(max <= PI / 8.0);
        assert!(max > 0.99 * PI / 8.0);
        let a = sample_step_params(3, 4, &sched, &root).unwrap();
        assert_eq!(a, sample_step_params(3, 4, &sched, &root).unwrap());
        assert!(sample_step_params(1, 0, &sched, &root).is_err());
        assert!(sample_step_params(1, 6, &sched, &root).is_err());
        let ramp = DiffusionSchedule::ramp(20);
        assert_abs_diff_eq!(ramp.angle_range(10), PI / 2.0, epsilon = 1e-15);
    }

    fn fidelity_loss(p: &HeaParams) -> f64 {
        let mut s = StateVector::zero(1);
        apply_hea(&mut s, p).unwrap();
        s.fidelity(&StateVector::zero(1)).unwrap()
    }

    #[test]
    fn shift_rule_closed_form() {
        let theta = PI / 3.0;
        let p = HeaParams::new(1, 1, vec![theta, 0.0]).unwrap();
        let g = parameter_shift_gradient(fidelity_loss, &p, 0).unwrap();
        assert_abs_diff_eq!(g, -theta.sin() / 2.0, epsilon = 1e-14);
        let g = parameter_shift_gradient(|_| 3.0, &p, 1).unwrap();
        assert_eq!(g, 0.0);
        assert!(parameter_shift_gradient(|_| 0.0, &p, 2).is_err());
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn adjoint_matches_shift_rule_and_finite_difference() {
        let n = 3;
        let p = HeaParams::random(n, 2, PI, &RandomStream::new(5));
        let target = random_state(n, 6);
        let obs = |v: &[C64]| {
            let o = inner(target.amplitudes(), v);
            target.amplitudes().iter().map(|t| t * o).collect::<Vec<_>>()
        };
        let inputs = vec![(0.7, random_state(n, 1).into_amplitudes()), (0.3, random_state(n, 2).into_amplitudes())];
        let loss = |q: &HeaParams| {
            inputs
                .iter()
                .map(|(w, psi)| {
                    let mut s = StateVector::from_normalized(n, psi.clone());
                    apply_hea(&mut s, q).unwrap();
                    w * s.fidelity(&target).unwrap()
                })
                .sum::<f64>()
        };
        let (value, grad) = hea_expectation_gradient(&p, &inputs, obs);
        assert_abs_diff_eq!(value, loss(&p), epsilon = 1e-12);
        for i in 0..p.len() {
            let shift = parameter_shift_gradient(loss, &p, i).unwrap();
            let h = 1e-5;
            let fd = (loss(&p.shifted(i, h)) - loss(&p.shifted(i, -h))) / (2.0 * h);
            assert_abs_diff_eq!(grad[i], shift, epsilon = 1e-12);
            assert!((grad[i] - fd).abs() <= 1e-6 * grad[i].abs().max(1.0));
        }
    }
}
