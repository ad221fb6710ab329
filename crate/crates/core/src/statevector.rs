//! Dense pure-state simulation.
//!
//! Basis convention: qubit 0 is the most significant bit of the amplitude
//! index, so for `n` qubits qubit `q` has stride `1 << (n - 1 - q)`. Every
//! module in the crate relies on this ordering.
//!
//! Gates act through strided in-place kernels; no `2^n x 2^n` matrix is
//! ever built.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64 as C64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Measurement branches with probability at or below this are dropped.
pub const BRANCH_EPSILON: f64 = 1e-12;

/// Tolerance on the norm invariant.
pub const NORM_TOLERANCE: f64 = 1e-10;

const ZERO: C64 = C64::new(0.0, 0.0);

/// Rotation axis for single-qubit gates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
    Z,
}

/// Single-qubit Pauli label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

/// Tensor product of Pauli labels, one per qubit (qubit 0 first).
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PauliString(pub Vec<Pauli>);

impl PauliString {
    pub fn identity(n: usize) -> Self {
        Self(vec![Pauli::I; n])
    }

    /// A string with `p` on `qubit` and identity elsewhere.
    pub fn single(n: usize, qubit: usize, p: Pauli) -> Self {
        let mut labels = vec![Pauli::I; n];
        labels[qubit] = p;
        Self(labels)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl FromStr for PauliString {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.chars()
            .map(|c| match c.to_ascii_uppercase() {
                'I' => Ok(Pauli::I),
                'X' => Ok(Pauli::X),
                'Y' => Ok(Pauli::Y),
                'Z' => Ok(Pauli::Z),
                other => Err(Error::InvalidParameter(format!("unknown Pauli label '{other}'"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(PauliString)
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in &self.0 {
            let c = match p {
                Pauli::I => 'I',
                Pauli::X => 'X',
                Pauli::Y => 'Y',
                Pauli::Z => 'Z',
            };
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

/// Normalized complex amplitude vector over `n_qubits` qubits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateVector {
    n_qubits: usize,
    amps: Vec<C64>,
}

/// Result of a sampled projective measurement.
#[derive(Clone, Debug)]
pub struct Measurement {
    /// One bit per measured qubit, in the order the qubits were requested.
    pub outcome: Vec<u8>,
    /// Renormalized state of the unmeasured qubits.
    pub post_state: StateVector,
    /// Born probability of `outcome`.
    pub probability: f64,
}

/// One outcome of an exhaustively enumerated measurement.
#[derive(Clone, Debug)]
pub struct Branch {
    pub outcome: Vec<u8>,
    pub post_state: StateVector,
    pub probability: f64,
}

impl StateVector {
    /// `|0...0>` on `n_qubits` qubits.
    pub fn zero(n_qubits: usize) -> Self {
        Self::basis(n_qubits, 0)
    }

    /// Computational basis state `|index>`.
    pub fn basis(n_qubits: usize, index: usize) -> Self {
        assert!(n_qubits >= 1, "a register needs at least one qubit");
        let dim = 1usize << n_qubits;
        assert!(index < dim, "basis index {index} out of range for dimension {dim}");
        let mut amps = vec![ZERO; dim];
        amps[index] = C64::new(1.0, 0.0);
        Self { n_qubits, amps }
    }

    /// Builds a state from raw amplitudes, normalizing them.
    pub fn from_amplitudes(amps: Vec<C64>) -> Result<Self> {
        let dim = amps.len();
        if dim < 2 || !dim.is_power_of_two() {
            return Err(Error::DimensionMismatch(format!("amplitude vector length {dim} is not a power of two >= 2")));
        }
        let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if !norm.is_finite() || norm <= 0.0 {
            return Err(Error::InvalidParameter("amplitude vector has zero or non-finite norm".into()));
        }
        let inv = 1.0 / norm;
        Ok(Self { n_qubits: dim.trailing_zeros() as usize, amps: amps.into_iter().map(|a| a * inv).collect() })
    }

    /// Accepts amplitudes that are already normalized within
    /// [`NORM_TOLERANCE`], keeping them bit-for-bit.
    pub fn try_from_normalized(amps: Vec<C64>) -> Result<Self> {
        let dim = amps.len();
        if dim < 2 || !dim.is_power_of_two() {
            return Err(Error::DimensionMismatch(format!("amplitude vector length {dim} is not a power of two >= 2")));
        }
        let norm_sqr: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
        if !((norm_sqr - 1.0).abs() < NORM_TOLERANCE) {
            return Err(Error::InvalidParameter(format!("state has squared norm {norm_sqr}")));
        }
        Ok(Self { n_qubits: dim.trailing_zeros() as usize, amps })
    }

    /// Wraps amplitudes that the caller guarantees are already normalized.
    pub(crate) fn from_normalized(n_qubits: usize, amps: Vec<C64>) -> Self {
        debug_assert_eq!(amps.len(), 1usize << n_qubits);
        debug_assert!((amps.iter().map(|a| a.norm_sqr()).sum::<f64>() - 1.0).abs() < 1e-8);
        Self { n_qubits, amps }
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn into_amplitudes(self) -> Vec<C64> {
        self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Rescales to unit norm, absorbing accumulated rounding.
    pub fn renormalize(&mut self) {
        let inv = 1.0 / self.norm_sqr().sqrt();
        self.amps.iter_mut().for_each(|a| *a *= inv);
    }

    fn check_qubit(&self, q: usize) -> Result<()> {
        if q >= self.n_qubits {
            Err(Error::QubitOutOfRange { index: q, n_qubits: self.n_qubits })
        } else {
            Ok(())
        }
    }

    fn check_pair(&self, q1: usize, q2: usize) -> Result<()> {
        self.check_qubit(q1)?;
        self.check_qubit(q2)?;
        if q1 == q2 {
            return Err(Error::DuplicateQubit(q1));
        }
        Ok(())
    }

    /// Applies `exp(-i angle P / 2)` for `P` in {X, Y, Z} on `qubit`.
    pub fn apply_1q(&mut self, qubit: usize, axis: Axis, angle: f64) -> Result<()> {
        self.check_qubit(qubit)?;
        if !angle.is_finite() {
            return Err(Error::InvalidParameter(format!("rotation angle {angle} is not finite")));
        }
        kernels::rotate(&mut self.amps, self.n_qubits, qubit, axis, angle);
        Ok(())
    }

    /// Applies `exp(-i angle Z_q1 Z_q2 / 2)`.
    pub fn apply_zz(&mut self, q1: usize, q2: usize, angle: f64) -> Result<()> {
        self.check_pair(q1, q2)?;
        if !angle.is_finite() {
            return Err(Error::InvalidParameter(format!("rotation angle {angle} is not finite")));
        }
        kernels::zz(&mut self.amps, self.n_qubits, q1, q2, angle);
        Ok(())
    }

    /// Controlled-Z on `q1`, `q2` (symmetric in its arguments).
    pub fn apply_cz(&mut self, q1: usize, q2: usize) -> Result<()> {
        self.check_pair(q1, q2)?;
        kernels::cz(&mut self.amps, self.n_qubits, q1, q2);
        Ok(())
    }

    /// Applies `exp(-i angle P / 2)` for an arbitrary Pauli string `P`.
    pub fn apply_pauli_rotation(&mut self, p: &PauliString, angle: f64) -> Result<()> {
        self.check_pauli_len(p)?;
        let rotated = kernels::apply_pauli(&self.amps, self.n_qubits, p);
        let (s, c) = (angle / 2.0).sin_cos();
        let minus_i_s = C64::new(0.0, -s);
        for (a, pa) in self.amps.iter_mut().zip(rotated) {
            *a = *a * c + pa * minus_i_s;
        }
        Ok(())
    }

    fn check_pauli_len(&self, p: &PauliString) -> Result<()> {
        if p.len() != self.n_qubits {
            return Err(Error::DimensionMismatch(format!(
                "Pauli string of length {} applied to {} qubits",
                p.len(),
                self.n_qubits
            )));
        }
        Ok(())
    }

    /// `<self|other>`.
    pub fn overlap(&self, other: &StateVector) -> Result<C64> {
        if self.n_qubits != other.n_qubits {
            return Err(Error::DimensionMismatch(format!(
                "overlap between {}- and {}-qubit states",
                self.n_qubits, other.n_qubits
            )));
        }
        Ok(inner(&self.amps, &other.amps))
    }

    /// `|<self|other>|^2`.
    pub fn fidelity(&self, other: &StateVector) -> Result<f64> {
        self.overlap(other).map(|z| z.norm_sqr())
    }

    /// `<psi|P|psi>`, real for Hermitian `P`.
    pub fn pauli_expectation(&self, p: &PauliString) -> Result<f64> {
        self.check_pauli_len(p)?;
        let pp = kernels::apply_pauli(&self.amps, self.n_qubits, p);
        Ok(inner(&self.amps, &pp).re)
    }

    /// Tensors `n_anc` ancillas in `|0>` onto the trailing qubit indices.
    pub fn append_ancillas(&self, n_anc: usize) -> StateVector {
        if n_anc == 0 {
            return self.clone();
        }
        let stride = 1usize << n_anc;
        let mut amps = vec![ZERO; self.amps.len() * stride];
        for (i, a) in self.amps.iter().enumerate() {
            amps[i * stride] = *a;
        }
        Self { n_qubits: self.n_qubits + n_anc, amps }
    }

    fn check_measured(&self, qubits: &[usize]) -> Result<()> {
        let mut seen = vec![false; self.n_qubits];
        for &q in qubits {
            self.check_qubit(q)?;
            if seen[q] {
                return Err(Error::DuplicateQubit(q));
            }
            seen[q] = true;
        }
        if qubits.len() == self.n_qubits {
            return Err(Error::MeasureAll);
        }
        Ok(())
    }

    /// Splits the amplitudes into one unnormalized block per outcome of the
    /// measured qubits; block `o` holds the remaining qubits' amplitudes.
    fn split_by_outcome(&self, qubits: &[usize]) -> Vec<Vec<C64>> {
        let n = self.n_qubits;
        let k = qubits.len();
        let rest: Vec<usize> = (0..n).filter(|q| !qubits.contains(q)).collect();
        let mut blocks = vec![vec![ZERO; 1usize << rest.len()]; 1usize << k];
        for (idx, &a) in self.amps.iter().enumerate() {
            let bit = |q: usize| (idx >> (n - 1 - q)) & 1;
            let outcome = qubits.iter().fold(0usize, |acc, &q| (acc << 1) | bit(q));
            let rest_idx = rest.iter().fold(0usize, |acc, &q| (acc << 1) | bit(q));
            blocks[outcome][rest_idx] = a;
        }
        blocks
    }

    /// All measurement outcomes with probability above [`BRANCH_EPSILON`],
    /// each with its renormalized post-measurement state on the remaining
    /// qubits.
    pub fn enumerate_branches(&self, qubits: &[usize]) -> Result<Vec<Branch>> {
        self.check_measured(qubits)?;
        let k = qubits.len();
        let n_rest = self.n_qubits - k;
        Ok(self
            .split_by_outcome(qubits)
            .into_iter()
            .enumerate()
            .filter_map(|(o, block)| {
                let p: f64 = block.iter().map(|a| a.norm_sqr()).sum();
                (p > BRANCH_EPSILON).then(|| {
                    let inv = 1.0 / p.sqrt();
                    Branch {
                        outcome: outcome_bits(o, k),
                        post_state: StateVector {
                            n_qubits: n_rest,
                            amps: block.into_iter().map(|a| a * inv).collect(),
                        },
                        probability: p,
                    }
                })
            })
            .collect())
    }

    /// Samples a computational-basis measurement of `qubits` and removes
    /// them from the register. Consumes exactly one uniform draw from `rng`.
    pub fn measure_qubits<R: Rng + ?Sized>(&self, qubits: &[usize], rng: &mut R) -> Result<Measurement> {
        let branches = self.enumerate_branches(qubits)?;
        let u: f64 = rng.random();
        let total: f64 = branches.iter().map(|b| b.probability).sum();
        let target = u * total;
        let mut acc = 0.0;
        let last = branches.len() - 1;
        for (i, b) in branches.into_iter().enumerate() {
            acc += b.probability;
            if target < acc || i == last {
                return Ok(Measurement { outcome: b.outcome, post_state: b.post_state, probability: b.probability });
            }
        }
        unreachable!("a normalized state has at least one branch above BRANCH_EPSILON")
    }
}

fn outcome_bits(o: usize, k: usize) -> Vec<u8> {
    (0..k).map(|i| ((o >> (k - 1 - i)) & 1) as u8).collect()
}

/// `<a|b>` on raw amplitude slices.
pub(crate) fn inner(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).fold(ZERO, |acc, (x, y)| acc + x.conj() * y)
}

/// In-place gate kernels on raw amplitude slices.
pub(crate) mod kernels {
    use super::*;

    #[inline]
    fn stride(n: usize, q: usize) -> usize {
        1usize << (n - 1 - q)
    }

    pub fn rotate(amps: &mut [C64], n: usize, q: usize, axis: Axis, angle: f64) {
        let (sn, c) = (angle / 2.0).sin_cos();
        let s = stride(n, q);
        match axis {
            Axis::X => {
                let mis = C64::new(0.0, -sn);
                let mut base = 0;
                while base < amps.len() {
                    for j in base..base + s {
                        let a0 = amps[j];
                        let a1 = amps[j + s];
                        amps[j] = a0 * c + a1 * mis;
                        amps[j + s] = a0 * mis + a1 * c;
                    }
                    base += 2 * s;
                }
            }
            Axis::Y => {
                let mut base = 0;
                while base < amps.len() {
                    for j in base..base + s {
                        let a0 = amps[j];
                        let a1 = amps[j + s];
                        amps[j] = a0 * c - a1 * sn;
                        amps[j + s] = a0 * sn + a1 * c;
                    }
                    base += 2 * s;
                }
            }
            Axis::Z => {
                let p0 = C64::new(c, -sn);
                let p1 = C64::new(c, sn);
                let mut base = 0;
                while base < amps.len() {
                    for j in base..base + s {
                        amps[j] *= p0;
                        amps[j + s] *= p1;
                    }
                    base += 2 * s;
                }
            }
        }
    }

    pub fn zz(amps: &mut [C64], n: usize, q1: usize, q2: usize, angle: f64) {
        let (sn, c) = (angle / 2.0).sin_cos();
        let even = C64::new(c, -sn);
        let odd = C64::new(c, sn);
        let (b1, b2) = (n - 1 - q1, n - 1 - q2);
        for (idx, a) in amps.iter_mut().enumerate() {
            let parity = ((idx >> b1) ^ (idx >> b2)) & 1;
            *a *= if parity == 0 { even } else { odd };
        }
    }

    pub fn cz(amps: &mut [C64], n: usize, q1: usize, q2: usize) {
        let mask = (1usize << (n - 1 - q1)) | (1usize << (n - 1 - q2));
        for (idx, a) in amps.iter_mut().enumerate() {
            if idx & mask == mask {
                *a = -*a;
            }
        }
    }

    /// Returns `P|psi>`.
    pub fn apply_pauli(amps: &[C64], n: usize, p: &PauliString) -> Vec<C64> {
        let mut flip = 0usize;
        let mut zmask = 0usize;
        let mut n_y = 0u32;
        for (q, l) in p.0.iter().enumerate() {
            let bit = 1usize << (n - 1 - q);
            match l {
                Pauli::I => {}
                Pauli::X => flip |= bit,
                Pauli::Y => {
                    flip |= bit;
                    zmask |= bit;
                    n_y += 1;
                }
                Pauli::Z => zmask |= bit,
            }
        }
        // Y = i X Z, so P = i^{n_y} X^flip Z^zmask.
        let global = C64::i().powu(n_y);
        let mut out = vec![ZERO; amps.len()];
        for (idx, &a) in amps.iter().enumerate() {
            let sign = if (idx & zmask).count_ones() % 2 == 1 { -1.0 } else { 1.0 };
            out[idx ^ flip] = a * global * sign;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RandomStream;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{FRAC_1_SQRT_2, PI};

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn plus() -> StateVector {
        StateVector::from_amplitudes(vec![c(1.0, 0.0), c(1.0, 0.0)]).unwrap()
    }

    #[test]
    fn ry_pi_flips_zero_without_phase() {
        let mut s = StateVector::zero(1);
        s.apply_1q(0, Axis::Y, PI).unwrap();
        assert_abs_diff_eq!(s.amps[0].norm(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.amps[1].re, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.amps[1].im, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn rz_on_zero_is_a_phase() {
        let theta = 0.73;
        let mut s = StateVector::zero(1);
        s.apply_1q(0, Axis::Z, theta).unwrap();
        let expected = C64::from_polar(1.0, -theta / 2.0);
        assert_abs_diff_eq!((s.amps[0] - expected).norm(), 0.0, epsilon = 1e-15);
        assert_eq!(s.amps[1], ZERO);
    }

    #[test]
    fn rz_quarter_turn_on_plus_halves_fidelity() {
        let mut s = plus();
        s.apply_1q(0, Axis::Z, PI / 2.0).unwrap();
        assert_abs_diff_eq!(plus().fidelity(&s).unwrap(), 0.5, epsilon = 1e-14);
    }

    #[test]
    fn zz_phases_follow_parity() {
        let g = 0.41;
        let mut s = StateVector::basis(2, 0b00);
        s.apply_zz(0, 1, g).unwrap();
        assert_abs_diff_eq!((s.amps[0] - C64::from_polar(1.0, -g / 2.0)).norm(), 0.0, epsilon = 1e-15);
        let mut s = StateVector::basis(2, 0b01);
        s.apply_zz(0, 1, g).unwrap();
        assert_abs_diff_eq!((s.amps[1] - C64::from_polar(1.0, g / 2.0)).norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn zz_pi_on_bell_is_global_phase() {
        let bell = StateVector::from_amplitudes(vec![c(1.0, 0.0), ZERO, ZERO, c(1.0, 0.0)]).unwrap();
        let mut s = bell.clone();
        s.apply_zz(0, 1, PI).unwrap();
        assert_abs_diff_eq!(bell.fidelity(&s).unwrap(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn cz_examples() {
        let mut s = StateVector::basis(2, 0b11);
        s.apply_cz(0, 1).unwrap();
        assert_eq!(s.amps[3], c(-1.0, 0.0));
        let mut s = StateVector::basis(2, 0b10);
        s.apply_cz(0, 1).unwrap();
        assert_eq!(s.amps[2], c(1.0, 0.0));
        let mut s = StateVector::from_amplitudes(vec![ZERO, c(1.0, 0.0), ZERO, c(1.0, 0.0)]).unwrap();
        s.apply_cz(1, 0).unwrap();
        assert_abs_diff_eq!(s.amps[1].re, FRAC_1_SQRT_2, epsilon = 1e-15);
        assert_abs_diff_eq!(s.amps[3].re, -FRAC_1_SQRT_2, epsilon = 1e-15);
    }

    #[test]
    fn gate_index_errors() {
        let mut s = StateVector::zero(2);
        assert!(matches!(s.apply_1q(2, Axis::X, 0.1), Err(Error::QubitOutOfRange { .. })));
        assert!(matches!(s.apply_zz(1, 1, 0.1), Err(Error::DuplicateQubit(1))));
        assert!(matches!(s.apply_cz(0, 5), Err(Error::QubitOutOfRange { .. })));
        assert!(s.apply_1q(0, Axis::X, f64::NAN).is_err());
    }

    #[test]
    fn overlap_examples() {
        let z = StateVector::zero(1);
        let o = StateVector::basis(1, 1);
        assert_eq!(z.overlap(&z).unwrap(), c(1.0, 0.0));
        assert_eq!(z.overlap(&o).unwrap(), ZERO);
        let theta = 1.1;
        let mut r = StateVector::zero(1);
        r.apply_1q(0, Axis::Y, theta).unwrap();
        assert_abs_diff_eq!(z.overlap(&r).unwrap().re, (theta / 2.0).cos(), epsilon = 1e-15);
        assert!(z.overlap(&StateVector::zero(2)).is_err());
    }

    #[test]
    fn pauli_expectations() {
        let z = StateVector::zero(1);
        assert_eq!(z.pauli_expectation(&"Z".parse().unwrap()).unwrap(), 1.0);
        assert_eq!(z.pauli_expectation(&"Y".parse().unwrap()).unwrap(), 0.0);
        let y_plus = StateVector::from_amplitudes(vec![c(1.0, 0.0), c(0.0, 1.0)]).unwrap();
        assert_abs_diff_eq!(y_plus.pauli_expectation(&"Y".parse().unwrap()).unwrap(), 1.0, epsilon = 1e-15);
        assert!(z.pauli_expectation(&"ZZ".parse().unwrap()).is_err());
    }

    #[test]
    fn ancilla_embedding() {
        let one = StateVector::basis(1, 1);
        let e = one.append_ancillas(1);
        assert_eq!(e.n_qubits(), 2);
        assert_eq!(e.amps[0b10], c(1.0, 0.0));
        assert_eq!(plus().append_ancillas(0), plus());
        let e = plus().append_ancillas(2);
        assert_eq!(e.dim(), 8);
        for (i, a) in e.amps.iter().enumerate() {
            if i == 0b000 || i == 0b100 {
                assert_abs_diff_eq!(a.re, FRAC_1_SQRT_2, epsilon = 1e-15);
            } else {
                assert_eq!(*a, ZERO);
            }
        }
    }

    #[test]
    fn deterministic_measurements() {
        let mut rng = RandomStream::new(1).rng();
        let m = StateVector::basis(2, 0b10).measure_qubits(&[1], &mut rng).unwrap();
        assert_eq!(m.outcome, vec![0]);
        assert_eq!(m.probability, 1.0);
        assert_eq!(m.post_state, StateVector::basis(1, 1));
    }

    #[test]
    fn bell_measurement_collapses_partner() {
        let bell = StateVector::from_amplitudes(vec![c(1.0, 0.0), ZERO, ZERO, c(1.0, 0.0)]).unwrap();
        let mut rng = RandomStream::new(3).rng();
        let mut counts = [0usize; 2];
        for _ in 0..2000 {
            let m = bell.measure_qubits(&[1], &mut rng).unwrap();
            assert_abs_diff_eq!(m.probability, 0.5, epsilon = 1e-14);
            let o = m.outcome[0] as usize;
            counts[o] += 1;
            assert_eq!(m.post_state, StateVector::basis(1, o));
        }
        assert!(counts[0] > 800 && counts[1] > 800);
    }

    #[test]
    fn measurement_errors() {
        let s = StateVector::zero(2);
        let mut rng = RandomStream::new(0).rng();
        assert!(matches!(s.measure_qubits(&[0, 1], &mut rng), Err(Error::MeasureAll)));
        assert!(matches!(s.measure_qubits(&[1, 1], &mut rng), Err(Error::DuplicateQubit(1))));
        assert!(matches!(s.enumerate_branches(&[4]), Err(Error::QubitOutOfRange { .. })));
    }

    #[test]
    fn branch_enumeration() {
        let s = plus().append_ancillas(1);
        let b = s.enumerate_branches(&[0]).unwrap();
        assert_eq!(b.len(), 2);
        assert!(b.iter().all(|x| (x.probability - 0.5).abs() < 1e-15));
        let b = StateVector::basis(2, 0b10).enumerate_branches(&[1]).unwrap();
        assert_eq!(b.len(), 1);
        assert_eq!(b[0].probability, 1.0);
    }

    #[test]
    fn pauli_rotation_matches_single_qubit_gate() {
        let mut a = plus();
        let mut b = plus();
        a.apply_pauli_rotation(&"Y".parse().unwrap(), 0.37).unwrap();
        b.apply_1q(0, Axis::Y, 0.37).unwrap();
        assert_abs_diff_eq!(a.fidelity(&b).unwrap(), 1.0, epsilon = 1e-14);
        let mut a = StateVector::basis(2, 0b01);
        let mut b = a.clone();
        a.apply_pauli_rotation(&"ZZ".parse().unwrap(), 0.9).unwrap();
        b.apply_zz(0, 1, 0.9).unwrap();
        for (x, y) in a.amps.iter().zip(&b.amps) {
            assert_abs_diff_eq!((x - y).norm(), 0.0, epsilon = 1e-15);
        }
    }
}
