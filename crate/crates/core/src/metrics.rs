//! Task-specific figures of merit for generated ensembles.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::datasets::{magnetization, mean_sin_sqr, EnsembleSpec};
use crate::ensemble::Ensemble;
use crate::statevector::{Pauli, PauliString, StateVector};
use crate::stats::weighted_mean_std;

/// States with `<|M|>` above this count as ferromagnetic.
pub const FERRO_THRESHOLD: f64 = 0.5;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<f64>,
}

impl Histogram {
    /// Weighted histogram with `bins` equal bins on `[lo, hi]`; values at
    /// `hi` land in the last bin.
    pub fn new(values: &[f64], weights: &[f64], lo: f64, hi: f64, bins: usize) -> Self {
        let width = (hi - lo) / bins as f64;
        let edges = (0..=bins).map(|k| lo + k as f64 * width).collect();
        let mut counts = vec![0.0; bins];
        for (v, w) in values.iter().zip(weights) {
            let k = (((v - lo) / width).floor().max(0.0) as usize).min(bins - 1);
            counts[k] += w;
        }
        Self { edges, counts }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricMap {
    pub values: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub histograms: BTreeMap<String, Histogram>,
}

impl MetricMap {
    pub fn get(&self, key: &str) -> Option<f64> {
        self.values.get(key).copied()
    }

    fn put(&mut self, key: &str, v: f64) {
        self.values.insert(key.to_string(), v);
    }
}

/// `Sum_z p(z) |M(z)|` and `Sum_z p(z) M(z)` in the computational basis.
pub fn magnetization_moments(s: &StateVector) -> (f64, f64) {
    let n = s.n_qubits();
    s.amplitudes().iter().enumerate().fold((0.0, 0.0), |(abs, signed), (z, a)| {
        let m = magnetization(z, n);
        let p = a.norm_sqr();
        (abs + p * m.abs(), signed + p * m)
    })
}

fn basis_fidelity(e: &Ensemble, index: usize) -> (Vec<f64>, (f64, f64)) {
    let f: Vec<f64> = e.states().iter().map(|s| s.amplitudes()[index].norm_sqr()).collect();
    let ms = weighted_mean_std(&f, e.weights());
    (f, ms)
}

/// Metrics of `generated` for the task that produced `task`'s target.
pub fn compute_metrics(generated: &Ensemble, task: &EnsembleSpec) -> MetricMap {
    let mut out = MetricMap::default();
    let w = generated.weights();
    out.put("n_samples", generated.len() as f64);
    match task {
        EnsembleSpec::Cluster { .. } => {
            let (_, (m, s)) = basis_fidelity(generated, 0);
            out.put("fidelity0", m);
            out.put("fidelity0_std", s);
        }
        EnsembleSpec::CorrelatedNoise { delta0, .. } => {
            // |10> sits at index 2 with qubit 0 most significant
            let (_, (m, s)) = basis_fidelity(generated, 2);
            out.put("fidelity10", m);
            out.put("fidelity10_std", s);
            let c1 = task.noise_coefficients().expect("correlated-noise task")[1].norm_sqr();
            let denom = c1 * mean_sin_sqr(*delta0);
            out.put("p_tilde", if denom > 0.0 { m / denom } else { f64::NAN });
        }
        EnsembleSpec::Tfim { .. } => {
            let (abs, signed): (Vec<f64>, Vec<f64>) = generated.states().iter().map(magnetization_moments).unzip();
            let (ma, sa) = weighted_mean_std(&abs, w);
            let (ms, ss) = weighted_mean_std(&signed, w);
            let ferro: f64 = abs.iter().zip(w).filter(|(a, _)| **a > FERRO_THRESHOLD).map(|(_, w)| w).sum();
            out.put("abs_magnetization", ma);
            out.put("abs_magnetization_std", sa);
            out.put("magnetization", ms);
            out.put("magnetization_std", ss);
            out.put("ferro_fraction", ferro);
            out.histograms.insert("abs_magnetization".into(), Histogram::new(&abs, w, 0.0, 1.0, 10));
            out.histograms.insert("magnetization".into(), Histogram::new(&signed, w, -1.0, 1.0, 20));
        }
        EnsembleSpec::Circle | EnsembleSpec::Haar { .. } => {
            if generated.n_qubits() == 1 {
                let y = PauliString(vec![Pauli::Y]);
                let ysq: Vec<f64> =
                    generated.states().iter().map(|s| s.pauli_expectation(&y).expect("one qubit").powi(2)).collect();
                let (m, s) = weighted_mean_std(&ysq, w);
                out.put("y_sqr", m);
                out.put("y_sqr_std", s);
            }
            let (_, (m, s)) = basis_fidelity(generated, 0);
            out.put("fidelity0", m);
            out.put("fidelity0_std", s);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{gen_haar, EnsembleSpec};
    use crate::rng::RandomStream;

    #[test]
    fn cluster_center_has_unit_fidelity() {
        let e = Ensemble::uniform(vec![StateVector::zero(2); 5]).unwrap();
        let m = compute_metrics(&e, &EnsembleSpec::Cluster { n: 2, epsilon: 0.06 });
        assert_eq!(m.get("fidelity0"), Some(1.0));
        assert_eq!(m.get("fidelity0_std"), Some(0.0));
    }

    #[test]
    fn haar_y_squared_is_one_third() {
        let e = gen_haar(1, 2000, &RandomStream::new(3)).unwrap();
        let m = compute_metrics(&e, &EnsembleSpec::Circle);
        // Var(<Y>^2) = 1/5 - 1/9 for uniform points on the sphere
        let sigma = ((1.0 / 5.0 - 1.0 / 9.0) / 2000f64).sqrt();
        assert!((m.get("y_sqr").unwrap() - 1.0 / 3.0).abs() < 3.0 * sigma);
    }

    #[test]
    fn alternating_spins_have_zero_magnetization() {
        let e = Ensemble::uniform(vec![StateVector::basis(4, 0b0101)]).unwrap();
        let m = compute_metrics(&e, &EnsembleSpec::Tfim { n: 4, g_min: 0.2, g_max: 0.4 });
        assert_eq!(m.get("magnetization"), Some(0.0));
        assert_eq!(m.get("abs_magnetization"), Some(0.0));
        assert_eq!(m.get("ferro_fraction"), Some(0.0));
        let up = Ensemble::uniform(vec![StateVector::basis(4, 0b1111)]).unwrap();
        let m = compute_metrics(&up, &EnsembleSpec::Tfim { n: 4, g_min: 0.2, g_max: 0.4 });
        assert_eq!(m.get("magnetization"), Some(-1.0));
        assert_eq!(m.get("ferro_fraction"), Some(1.0));
        assert_eq!(m.histograms["abs_magnetization"].counts[9], 1.0);
    }

    #[test]
    fn correlated_noise_estimator_recovers_p() {
        let spec = EnsembleSpec::correlated_noise_default();
        let e = spec.generate(4000, &RandomStream::new(5)).unwrap();
        let m = compute_metrics(&e, &spec);
        assert!((m.get("p_tilde").unwrap() - 0.3).abs() < 0.05);
    }
}
