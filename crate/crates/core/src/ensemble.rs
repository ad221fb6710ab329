//! Weighted collections of pure states and their on-disk dump formats.
//!
//! Binary layout (little endian): magic `QENS`, `u32` format version,
//! `u32` qubit count, `u64` sample count, the weights as `f64`, then every
//! state's amplitudes as interleaved `re, im` doubles in sample order.

use std::io::{Read, Write};

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::statevector::StateVector;

const MAGIC: &[u8; 4] = b"QENS";
const BINARY_VERSION: u32 = 1;
const WEIGHT_TOLERANCE: f64 = 1e-10;

/// Pure states with nonnegative weights summing to one.
#[derive(Clone, Debug, PartialEq)]
pub struct Ensemble {
    states: Vec<StateVector>,
    weights: Vec<f64>,
}

impl Ensemble {
    pub fn new(states: Vec<StateVector>, weights: Vec<f64>) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::InvalidEnsemble("ensemble is empty".into()));
        }
        if states.len() != weights.len() {
            return Err(Error::InvalidEnsemble(format!("{} states but {} weights", states.len(), weights.len())));
        }
        let n = states[0].n_qubits();
        if states.iter().any(|s| s.n_qubits() != n) {
            return Err(Error::InvalidEnsemble("states have different qubit counts".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidEnsemble("weights must be finite and nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_TOLERANCE {
            return Err(Error::InvalidEnsemble(format!("weights sum to {total}, not 1")));
        }
        Ok(Self { states, weights })
    }

    /// Equal weights `1/N`.
    pub fn uniform(states: Vec<StateVector>) -> Result<Self> {
        let w = 1.0 / states.len().max(1) as f64;
        let weights = vec![w; states.len()];
        Self::new(states, weights)
    }

    /// Like [`Ensemble::new`] but rescales the weights to sum to one.
    pub fn normalized(states: Vec<StateVector>, mut weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::InvalidEnsemble(format!("weights sum to {total}")));
        }
        weights.iter_mut().for_each(|w| *w /= total);
        Self::new(states, weights)
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn n_qubits(&self) -> usize {
        self.states[0].n_qubits()
    }

    pub fn dim(&self) -> usize {
        self.states[0].dim()
    }

    pub fn states(&self) -> &[StateVector] {
        &self.states
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn iter(&self) -> impl Iterator<Item = (&StateVector, f64)> {
        self.states.iter().zip(self.weights.iter().copied())
    }

    pub fn into_parts(self) -> (Vec<StateVector>, Vec<f64>) {
        (self.states, self.weights)
    }

    /// `sum_i w_i |psi_i><psi_i|`.
    pub fn density_matrix(&self) -> DMatrix<C64> {
        let d = self.dim();
        let mut rho = DMatrix::zeros(d, d);
        for (s, w) in self.iter() {
            crate::density::accumulate_outer(&mut rho, s.amplitudes(), w);
        }
        rho
    }

    /// Weighted mean of a per-state statistic.
    pub fn weighted_mean(&self, f: impl Fn(&StateVector) -> f64) -> f64 {
        self.iter().map(|(s, w)| w * f(s)).sum()
    }

    pub fn to_dump(&self) -> EnsembleDump {
        EnsembleDump {
            n_qubits: self.n_qubits(),
            weights: self.weights.clone(),
            amplitudes: self
                .states
                .iter()
                .map(|s| s.amplitudes().iter().flat_map(|a| [a.re, a.im]).collect())
                .collect(),
        }
    }

    pub fn from_dump(dump: EnsembleDump) -> Result<Self> {
        let dim = 1usize << dump.n_qubits;
        let states = dump
            .amplitudes
            .into_iter()
            .map(|v| {
                if v.len() != 2 * dim {
                    return Err(Error::Format(format!("state has {} doubles, expected {}", v.len(), 2 * dim)));
                }
                StateVector::try_from_normalized(v.chunks(2).map(|c| C64::new(c[0], c[1])).collect())
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(states, dump.weights)
    }

    pub fn write_json<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer(w, &self.to_dump())?;
        Ok(())
    }

    pub fn read_json<R: Read>(r: R) -> Result<Self> {
        Self::from_dump(serde_json::from_reader(r)?)
    }

    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&BINARY_VERSION.to_le_bytes())?;
        w.write_all(&(self.n_qubits() as u32).to_le_bytes())?;
        w.write_all(&(self.len() as u64).to_le_bytes())?;
        for x in &self.weights {
            w.write_all(&x.to_le_bytes())?;
        }
        for s in &self.states {
            for a in s.amplitudes() {
                w.write_all(&a.re.to_le_bytes())?;
                w.write_all(&a.im.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("not an ensemble dump".into()));
        }
        let version = read_u32(&mut r)?;
        if version != BINARY_VERSION {
            return Err(Error::Format(format!("unsupported dump version {version}")));
        }
        let n = read_u32(&mut r)? as usize;
        if n == 0 || n > 30 {
            return Err(Error::Format(format!("implausible qubit count {n}")));
        }
        let count = read_u64(&mut r)? as usize;
        let weights = (0..count).map(|_| read_f64(&mut r)).collect::<Result<Vec<_>>>()?;
        let dim = 1usize << n;
        let mut states = Vec::with_capacity(count);
        for _ in 0..count {
            let amps =
                (0..dim).map(|_| Ok(C64::new(read_f64(&mut r)?, read_f64(&mut r)?))).collect::<Result<Vec<_>>>()?;
            states.push(StateVector::try_from_normalized(amps)?);
        }
        Self::new(states, weights)
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

/// JSON form of an ensemble: header fields plus interleaved `re, im` rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleDump {
    pub n_qubits: usize,
    pub weights: Vec<f64>,
    pub amplitudes: Vec<Vec<f64>>,
}
