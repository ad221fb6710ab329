//! Target ensembles and noise ensembles.
//!
//! Each generator takes a [`RandomStream`] and draws sample `i` from the
//! substream `sample/i`, so generation is order independent.

use std::f64::consts::{PI, TAU};

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64 as C64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::Ensemble;
use crate::error::{Error, Result};
use crate::rng::RandomStream;
use crate::statevector::{Axis, PauliString, StateVector};

/// Eigenvalues closer than this to the lowest one count as degenerate.
pub const DEGENERACY_GAP: f64 = 1e-10;

/// Largest chain handled by the dense TFIM solver.
pub const TFIM_MAX_QUBITS: usize = 12;

fn per_sample<T: Send>(
    n_samples: usize,
    stream: &RandomStream,
    f: impl Fn(&RandomStream) -> Result<T> + Sync,
) -> Result<Vec<T>> {
    let base = stream.child("sample");
    (0..n_samples).into_par_iter().map(|i| f(&base.index(i as u64))).collect()
}

fn check_count(n_samples: usize) -> Result<()> {
    if n_samples == 0 {
        return Err(Error::InvalidParameter("sample count must be at least 1".into()));
    }
    Ok(())
}

fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    C64::new(StandardNormal.sample(rng), StandardNormal.sample(rng))
}

/// States `|0...0> + eps sum_{z != 0} c_z |z>` (normalized) with i.i.d.
/// standard complex normal `c_z`.
pub fn gen_cluster(n: usize, epsilon: f64, n_samples: usize, stream: &RandomStream) -> Result<Ensemble> {
    check_count(n_samples)?;
    if !(epsilon.is_finite() && epsilon >= 0.0) {
        return Err(Error::InvalidParameter(format!("epsilon {epsilon} must be >= 0")));
    }
    let states = per_sample(n_samples, stream, |s| {
        let mut rng = s.rng();
        let mut amps = vec![C64::new(0.0, 0.0); 1 << n];
        amps[0] = C64::new(1.0, 0.0);
        for a in amps.iter_mut().skip(1) {
            *a = complex_normal(&mut rng) * epsilon;
        }
        StateVector::from_amplitudes(amps)
    })?;
    Ensemble::uniform(states)
}

/// Expected `sin^2(delta)` for `delta ~ U[-delta0, delta0]`.
pub fn mean_sin_sqr(delta0: f64) -> f64 {
    if delta0 == 0.0 {
        return 0.0;
    }
    0.5 * (1.0 - (2.0 * delta0).sin() / (2.0 * delta0))
}

/// Two-qubit states `c0|00> + c1|01> + c3|11>` hit by `exp(-i delta XX)`
/// with probability `p`, otherwise by `exp(-i delta ZZ)`, with
/// `delta ~ U[-delta0, delta0]`.
pub fn gen_correlated_noise(
    coeffs: [C64; 3],
    p: f64,
    delta0: f64,
    n_samples: usize,
    stream: &RandomStream,
) -> Result<Ensemble> {
    check_count(n_samples)?;
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidParameter(format!("probability {p} outside [0, 1]")));
    }
    if !(delta0.is_finite() && delta0 >= 0.0) {
        return Err(Error::InvalidParameter(format!("delta0 {delta0} must be >= 0")));
    }
    let zero = C64::new(0.0, 0.0);
    let base = StateVector::from_amplitudes(vec![coeffs[0], coeffs[1], zero, coeffs[2]])?;
    let xx: PauliString = "XX".parse()?;
    let states = per_sample(n_samples, stream, |s| {
        let mut rng = s.rng();
        let use_xx = rng.random::<f64>() < p;
        let delta = (2.0 * rng.random::<f64>() - 1.0) * delta0;
        let mut st = base.clone();
        if use_xx {
            st.apply_pauli_rotation(&xx, 2.0 * delta)?;
        } else {
            st.apply_zz(0, 1, 2.0 * delta)?;
        }
        Ok(st)
    })?;
    Ensemble::uniform(states)
}

/// Open-chain `H = -sum Z_i Z_{i+1} - g sum X_i` as a dense real matrix.
pub fn tfim_hamiltonian(n: usize, g: f64) -> DMatrix<f64> {
    let d = 1usize << n;
    let mut h = DMatrix::zeros(d, d);
    for z in 0..d {
        let bit = |q: usize| (z >> (n - 1 - q)) & 1;
        let mut diag = 0.0;
        for q in 0..n.saturating_sub(1) {
            diag -= if bit(q) == bit(q + 1) { 1.0 } else { -1.0 };
        }
        h[(z, z)] = diag;
        for q in 0..n {
            h[(z ^ (1 << (n - 1 - q)), z)] -= g;
        }
    }
    h
}

/// Magnetization `M(z) = (sum_i z_i) / n` with `z_i = +1` for bit 0.
pub fn magnetization(z: usize, n: usize) -> f64 {
    let ones = (z & ((1 << n) - 1)).count_ones() as f64;
    (n as f64 - 2.0 * ones) / n as f64
}

/// Ground state of the TFIM chain at field `g`. Within a degenerate ground
/// space the state with the largest `|<M>|` is chosen, its sign picked by
/// `coin`.
pub fn tfim_ground_state(n: usize, g: f64, coin: bool) -> Result<(f64, StateVector)> {
    if n == 0 || n > TFIM_MAX_QUBITS {
        return Err(Error::InvalidParameter(format!("TFIM chain length {n} outside 1..={TFIM_MAX_QUBITS}")));
    }
    let h = tfim_hamiltonian(n, g);
    let eig = SymmetricEigen::try_new(h, 1e-14, 100_000)
        .ok_or_else(|| Error::Eigensolver(format!("TFIM eigensolver failed at n={n}, g={g}")))?;
    let e0 = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let ground: Vec<usize> = (0..eig.eigenvalues.len()).filter(|&k| eig.eigenvalues[k] - e0 < DEGENERACY_GAP).collect();
    let vec_of = |k: usize| -> Vec<f64> { eig.eigenvectors.column(k).iter().copied().collect() };
    let amps: Vec<f64> = if ground.len() == 1 {
        vec_of(ground[0])
    } else {
        let basis: Vec<Vec<f64>> = ground.iter().map(|&k| vec_of(k)).collect();
        let k = basis.len();
        let m_sub = DMatrix::from_fn(k, k, |a, b| {
            (0..1usize << n).map(|z| basis[a][z] * magnetization(z, n) * basis[b][z]).sum::<f64>()
        });
        let sub = SymmetricEigen::new(m_sub);
        let (imax, imin) = sub.eigenvalues.iter().enumerate().fold((0, 0), |(hi, lo), (i, &v)| {
            (if v > sub.eigenvalues[hi] { i } else { hi }, if v < sub.eigenvalues[lo] { i } else { lo })
        });
        let positive = sub.eigenvalues[imax].abs() >= sub.eigenvalues[imin].abs();
        let balanced = (sub.eigenvalues[imax] + sub.eigenvalues[imin]).abs() < 1e-9;
        let pick = if balanced {
            if coin {
                imax
            } else {
                imin
            }
        } else if positive {
            imax
        } else {
            imin
        };
        let coeffs = sub.eigenvectors.column(pick);
        (0..1usize << n).map(|z| (0..k).map(|a| coeffs[a] * basis[a][z]).sum()).collect()
    };
    let state = StateVector::from_amplitudes(amps.into_iter().map(|x| C64::new(x, 0.0)).collect())?;
    Ok((e0, state))
}

/// TFIM ground states at fields `g ~ U[g_min, g_max)`.
pub fn gen_tfim_ground(n: usize, g_min: f64, g_max: f64, n_samples: usize, stream: &RandomStream) -> Result<Ensemble> {
    check_count(n_samples)?;
    if !(g_min >= 0.0 && g_max >= g_min && g_max.is_finite()) {
        return Err(Error::InvalidParameter(format!("field range [{g_min}, {g_max}) is invalid")));
    }
    let states = per_sample(n_samples, stream, |s| {
        let mut rng = s.rng();
        let g = g_min + (g_max - g_min) * rng.random::<f64>();
        let coin = rng.random::<bool>();
        tfim_ground_state(n, g, coin).map(|(_, st)| st)
    })?;
    Ensemble::uniform(states)
}

/// Single-qubit states `exp(-i x Y)|0> = cos x |0> + sin x |1>` with
/// `x ~ U[0, 2 pi)`.
pub fn gen_circle(n_samples: usize, stream: &RandomStream) -> Result<Ensemble> {
    check_count(n_samples)?;
    let states = per_sample(n_samples, stream, |s| {
        let x = TAU * s.rng().random::<f64>();
        let mut st = StateVector::zero(1);
        st.apply_1q(0, Axis::Y, 2.0 * x)?;
        Ok(st)
    })?;
    Ensemble::uniform(states)
}

/// Haar-random pure states (normalized complex Gaussian vectors).
pub fn gen_haar(n: usize, n_samples: usize, stream: &RandomStream) -> Result<Ensemble> {
    check_count(n_samples)?;
    let states = per_sample(n_samples, stream, |s| Ok(haar_state(n, &mut s.rng())))?;
    Ensemble::uniform(states)
}

pub fn haar_state<R: Rng + ?Sized>(n: usize, rng: &mut R) -> StateVector {
    loop {
        let amps: Vec<C64> = (0..1usize << n).map(|_| complex_normal(rng)).collect();
        if let Ok(s) = StateVector::from_amplitudes(amps) {
            return s;
        }
    }
}

/// Declarative description of a target or noise ensemble.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnsembleSpec {
    Cluster { n: usize, epsilon: f64 },
    CorrelatedNoise { c0: [f64; 2], c1: [f64; 2], c3: [f64; 2], p: f64, delta0: f64 },
    Tfim { n: usize, g_min: f64, g_max: f64 },
    Circle,
    Haar { n: usize },
}

impl EnsembleSpec {
    /// Default correlated-noise target: equal real amplitudes, `p = 0.3`,
    /// `delta0 = pi/3`.
    pub fn correlated_noise_default() -> Self {
        let a = [1.0 / 3f64.sqrt(), 0.0];
        EnsembleSpec::CorrelatedNoise { c0: a, c1: a, c3: a, p: 0.3, delta0: PI / 3.0 }
    }

    pub fn n_qubits(&self) -> usize {
        match *self {
            EnsembleSpec::Cluster { n, .. } | EnsembleSpec::Tfim { n, .. } | EnsembleSpec::Haar { n } => n,
            EnsembleSpec::CorrelatedNoise { .. } => 2,
            EnsembleSpec::Circle => 1,
        }
    }

    /// Normalized `(c0, c1, c3)` for the correlated-noise kind.
    pub fn noise_coefficients(&self) -> Option<[C64; 3]> {
        match self {
            EnsembleSpec::CorrelatedNoise { c0, c1, c3, .. } => {
                let cs = [C64::new(c0[0], c0[1]), C64::new(c1[0], c1[1]), C64::new(c3[0], c3[1])];
                let norm = cs.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
                Some(cs.map(|c| c / norm))
            }
            _ => None,
        }
    }

    pub fn generate(&self, n_samples: usize, stream: &RandomStream) -> Result<Ensemble> {
        match *self {
            EnsembleSpec::Cluster { n, epsilon } => gen_cluster(n, epsilon, n_samples, stream),
            EnsembleSpec::CorrelatedNoise { p, delta0, .. } => {
                let cs = self.noise_coefficients().expect("correlated-noise task");
                gen_correlated_noise(cs, p, delta0, n_samples, stream)
            }
            EnsembleSpec::Tfim { n, g_min, g_max } => gen_tfim_ground(n, g_min, g_max, n_samples, stream),
            EnsembleSpec::Circle => gen_circle(n_samples, stream),
            EnsembleSpec::Haar { n } => gen_haar(n, n_samples, stream),
        }
    }
}
