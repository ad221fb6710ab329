//! Measurement-based denoising steps: ancillas in `|0>` are appended, an HEA
//! acts on data and ancillas, and the ancillas are measured and dropped.

use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ansatz::{apply_hea, HeaParams};
use crate::density;
use crate::ensemble::Ensemble;
use crate::error::{Error, Result};
use crate::rng::RandomStream;
use crate::statevector::{Branch, StateVector};

/// Version written into model artifacts.
pub const MODEL_FORMAT_VERSION: u32 = 1;

/// How measurement outcomes are handled when a step is applied to an
/// ensemble.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalMode {
    /// Every outcome kept, weighted by its Born probability.
    #[default]
    Branched,
    /// One Born-sampled outcome per state.
    Sampled,
}

impl std::str::FromStr for EvalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "branched" => Ok(EvalMode::Branched),
            "sampled" => Ok(EvalMode::Sampled),
            _ => Err(Error::InvalidParameter(format!("unknown mode '{s}'"))),
        }
    }
}

/// One denoising channel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenoiseStep {
    pub n_data: usize,
    pub n_anc: usize,
    pub params: HeaParams,
}

impl DenoiseStep {
    pub fn new(n_data: usize, n_anc: usize, params: HeaParams) -> Result<Self> {
        if params.n_qubits != n_data + n_anc {
            return Err(Error::DimensionMismatch(format!(
                "HEA over {} qubits for {n_data} data and {n_anc} ancilla qubits",
                params.n_qubits
            )));
        }
        if params.theta.len() != HeaParams::param_count(params.n_qubits, params.layers) {
            return Err(Error::DimensionMismatch("HEA angle count does not match its shape".into()));
        }
        Ok(Self { n_data, n_anc, params })
    }

    pub fn n_total(&self) -> usize {
        self.n_data + self.n_anc
    }

    fn ancillas(&self) -> Vec<usize> {
        (self.n_data..self.n_total()).collect()
    }

    fn check_input(&self, state: &StateVector) -> Result<()> {
        if state.n_qubits() != self.n_data {
            return Err(Error::DimensionMismatch(format!(
                "denoising step on {} data qubits given a {}-qubit state",
                self.n_data,
                state.n_qubits()
            )));
        }
        Ok(())
    }

    /// `U (|psi> (x) |0...0>)` before measurement.
    pub fn unitary_output(&self, state: &StateVector) -> Result<StateVector> {
        self.check_input(state)?;
        let mut full = state.append_ancillas(self.n_anc);
        apply_hea(&mut full, &self.params)?;
        Ok(full)
    }

    /// Samples one ancilla outcome and returns the renormalized data state.
    pub fn apply_sampled<R: Rng + ?Sized>(&self, state: &StateVector, rng: &mut R) -> Result<StateVector> {
        let full = self.unitary_output(state)?;
        if self.n_anc == 0 {
            return Ok(full);
        }
        let mut out = full.measure_qubits(&self.ancillas(), rng)?.post_state;
        out.renormalize();
        Ok(out)
    }

    /// Every ancilla outcome with its probability and data state.
    pub fn branches(&self, state: &StateVector) -> Result<Vec<Branch>> {
        let full = self.unitary_output(state)?;
        if self.n_anc == 0 {
            return Ok(vec![Branch { outcome: vec![], post_state: full, probability: 1.0 }]);
        }
        full.enumerate_branches(&self.ancillas())
    }

    /// The step as a channel on data density matrices,
    /// `rho -> Tr_A[U (rho (x) |0><0|) U^dag]`.
    pub fn channel(&self, rho: &DMatrix<C64>) -> Result<DMatrix<C64>> {
        let d = 1usize << self.n_data;
        if rho.nrows() != d || rho.ncols() != d {
            return Err(Error::DimensionMismatch(format!(
                "density matrix of size {} for {} data qubits",
                rho.nrows(),
                self.n_data
            )));
        }
        let mut out = DMatrix::zeros(d, d);
        for (w, v) in density::hermitian_factor(rho)? {
            let full = self.unitary_output(&StateVector::from_normalized(self.n_data, normalize(v)))?;
            density::accumulate_reduced(&mut out, full.amplitudes(), self.n_anc, w);
        }
        Ok(out)
    }
}

fn normalize(mut v: Vec<C64>) -> Vec<C64> {
    let inv = 1.0 / v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    v.iter_mut().for_each(|a| *a *= inv);
    v
}

/// Draws one outcome of `step` on `state`.
pub fn apply_step_sampled<R: Rng + ?Sized>(
    step: &DenoiseStep,
    state: &StateVector,
    rng: &mut R,
) -> Result<StateVector> {
    step.apply_sampled(state, rng)
}

/// Expands every state into its measurement branches, weight `w p_branch`.
pub fn apply_step_branched(step: &DenoiseStep, ens: &Ensemble) -> Result<Ensemble> {
    let expanded: Vec<Vec<(StateVector, f64)>> = ens
        .states()
        .par_iter()
        .zip(ens.weights().par_iter())
        .map(|(s, &w)| Ok(step.branches(s)?.into_iter().map(|b| (b.post_state, w * b.probability)).collect()))
        .collect::<Result<_>>()?;
    let (states, weights): (Vec<_>, Vec<_>) = expanded.into_iter().flatten().unzip();
    Ensemble::normalized(states, weights)
}

/// The backward pipeline. `steps[t - 1]` is the step applied at time `t`,
/// so generation runs `steps[T-1]` first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenoiseModel {
    pub n_data: usize,
    pub n_anc: usize,
    pub layers: usize,
    pub steps: Vec<DenoiseStep>,
}

impl DenoiseModel {
    /// All-zero angles (every step the identity channel).
    pub fn identity(n_data: usize, n_anc: usize, layers: usize, n_steps: usize) -> Self {
        let step = DenoiseStep { n_data, n_anc, params: HeaParams::zeros(n_data + n_anc, layers) };
        Self { n_data, n_anc, layers, steps: vec![step; n_steps] }
    }

    /// Angles i.i.d. uniform in `[-half_width, half_width]`, step `t` drawn
    /// from `stream.index(t)`.
    pub fn random(
        n_data: usize,
        n_anc: usize,
        layers: usize,
        n_steps: usize,
        half_width: f64,
        stream: &RandomStream,
    ) -> Self {
        let steps = (1..=n_steps)
            .map(|t| DenoiseStep {
                n_data,
                n_anc,
                params: HeaParams::random(n_data + n_anc, layers, half_width, &stream.index(t as u64)),
            })
            .collect();
        Self { n_data, n_anc, layers, steps }
    }

    pub fn n_steps(&self) -> usize {
        self.steps.len()
    }

    /// Step applied at time `t` (1-based).
    pub fn step(&self, t: usize) -> &DenoiseStep {
        &self.steps[t - 1]
    }

    pub fn set_step_params(&mut self, t: usize, params: HeaParams) -> Result<()> {
        self.steps[t - 1] = DenoiseStep::new(self.n_data, self.n_anc, params)?;
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.steps.iter().map(|s| s.params.len()).sum()
    }

    pub fn validate(&self) -> Result<()> {
        for s in &self.steps {
            if s.n_data != self.n_data || s.n_anc != self.n_anc || s.params.layers != self.layers {
                return Err(Error::InvalidParameter("denoising steps differ in shape".into()));
            }
            DenoiseStep::new(s.n_data, s.n_anc, s.params.clone())?;
        }
        Ok(())
    }

    pub fn to_artifact(&self, metadata: serde_json::Value) -> ModelArtifact {
        ModelArtifact {
            format_version: MODEL_FORMAT_VERSION,
            n_data: self.n_data,
            n_anc: self.n_anc,
            layers: self.layers,
            n_steps: self.n_steps(),
            theta: self.steps.iter().map(|s| s.params.theta.clone()).collect(),
            metadata,
        }
    }

    pub fn from_artifact(a: &ModelArtifact) -> Result<Self> {
        if a.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported model format version {}", a.format_version)));
        }
        if a.theta.len() != a.n_steps {
            return Err(Error::Format(format!("{} angle vectors for {} steps", a.theta.len(), a.n_steps)));
        }
        let steps = a
            .theta
            .iter()
            .map(|th| DenoiseStep::new(a.n_data, a.n_anc, HeaParams::new(a.n_data + a.n_anc, a.layers, th.clone())?))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { n_data: a.n_data, n_anc: a.n_anc, layers: a.layers, steps })
    }
}

/// Versioned JSON form of a trained model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub format_version: u32,
    pub n_data: usize,
    pub n_anc: usize,
    pub layers: usize,
    pub n_steps: usize,
    /// `theta[t - 1]` holds the angles of step `t`.
    pub theta: Vec<Vec<f64>>,
    #[serde(default)]
    pub metadata: serde_json::Value,
}

impl ModelArtifact {
    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(f), self)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Ok(serde_json::from_reader(std::io::BufReader::new(f))?)
    }
}

/// Applies steps `T, T-1, ..., down_to + 1` to `noise`.
///
/// In sampled mode, state `i` at step `t` draws from
/// `stream/step/t/sample/i`, so splitting a run at an intermediate step
/// with the same stream reproduces it. Branched mode is restricted to a
/// single step to bound the ensemble growth.
pub fn run_backward(
    model: &DenoiseModel,
    noise: &Ensemble,
    down_to: usize,
    mode: EvalMode,
    stream: &RandomStream,
) -> Result<Ensemble> {
    run_backward_from(model, noise, model.n_steps(), down_to, mode, stream)
}

/// Like [`run_backward`] but starting from an ensemble at step `from`.
pub fn run_backward_from(
    model: &DenoiseModel,
    input: &Ensemble,
    from: usize,
    down_to: usize,
    mode: EvalMode,
    stream: &RandomStream,
) -> Result<Ensemble> {
    if from > model.n_steps() || down_to > from {
        return Err(Error::InvalidParameter(format!(
            "backward range {from} -> {down_to} invalid for {} steps",
            model.n_steps()
        )));
    }
    if input.n_qubits() != model.n_data {
        return Err(Error::DimensionMismatch(format!(
            "model on {} qubits given a {}-qubit ensemble",
            model.n_data,
            input.n_qubits()
        )));
    }
    if from == down_to {
        return Ok(input.clone());
    }
    match mode {
        EvalMode::Branched => {
            if from - down_to != 1 {
                return Err(Error::Unsupported("branched evaluation covers a single step only".into()));
            }
            apply_step_branched(model.step(from), input)
        }
        EvalMode::Sampled => {
            let mut states = input.states().to_vec();
            let base = stream.child("step");
            for t in (down_to + 1..=from).rev() {
                let step = model.step(t);
                let st = base.index(t as u64).child("sample");
                states = states
                    .par_iter()
                    .enumerate()
                    .map(|(i, s)| step.apply_sampled(s, &mut st.index(i as u64).rng()))
                    .collect::<Result<_>>()?;
            }
            Ensemble::new(states, input.weights().to_vec())
        }
    }
}

/// Exact mean output density matrix of steps `from, ..., down_to + 1`
/// applied to `rho`.
pub fn channel_backward(model: &DenoiseModel, rho: &DMatrix<C64>, from: usize, down_to: usize) -> Result<DMatrix<C64>> {
    if from > model.n_steps() || down_to > from {
        return Err(Error::InvalidParameter(format!("backward range {from} -> {down_to} invalid")));
    }
    let mut r = rho.clone();
    for t in (down_to + 1..=from).rev() {
        r = model.step(t).channel(&r)?;
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::gen_haar;
    use crate::distance::{mmd, ShotBudget};
    use approx::assert_abs_diff_eq;

    fn random_step(n: usize, n_anc: usize, layers: usize, seed: u64) -> DenoiseStep {
        DenoiseStep::new(n, n_anc, HeaParams::random(n + n_anc, layers, std::f64::consts::PI, &RandomStream::new(seed)))
            .unwrap()
    }

    #[test]
    fn zero_angles_are_identity() {
        let s = RandomStream::new(1);
        let step = DenoiseStep::new(1, 1, HeaParams::zeros(2, 3)).unwrap();
        let e = gen_haar(1, 5, &s).unwrap();
        for st in e.states() {
            let out = step.apply_sampled(st, &mut s.rng()).unwrap();
            assert_abs_diff_eq!(out.fidelity(st).unwrap(), 1.0, epsilon = 1e-14);
            let b = step.branches(st).unwrap();
            assert_eq!(b.len(), 1);
            assert_eq!(b[0].outcome, vec![0]);
        }
        let out = apply_step_branched(&step, &e).unwrap();
        assert_eq!(out.len(), e.len());
        assert!(mmd(&out, &e, ShotBudget::Exact, &s).unwrap().abs() < 1e-14);
    }

    #[test]
    fn outputs_are_normalized_and_weights_sum_to_one() {
        let s = RandomStream::new(2);
        let step = random_step(2, 2, 3, 3);
        let e = gen_haar(2, 20, &s).unwrap();
        for st in e.states() {
            let out = step.apply_sampled(st, &mut s.rng()).unwrap();
            assert!((out.norm_sqr() - 1.0).abs() < 1e-10);
        }
        let br = apply_step_branched(&step, &e).unwrap();
        assert!((br.weights().iter().sum::<f64>() - 1.0).abs() < 1e-10);
        assert!(br.len() <= 4 * e.len());
    }

    #[test]
    fn sampled_frequencies_match_branch_probabilities() {
        let step = random_step(1, 1, 2, 9);
        let st = gen_haar(1, 1, &RandomStream::new(4)).unwrap().states()[0].clone();
        let branches = step.branches(&st).unwrap();
        let trials = 10_000;
        let mut rng = RandomStream::new(5).rng();
        let mut hits = vec![0usize; branches.len()];
        for _ in 0..trials {
            let out = step.apply_sampled(&st, &mut rng).unwrap();
            let k = branches.iter().position(|b| b.post_state.fidelity(&out).unwrap() > 1.0 - 1e-12).unwrap();
            hits[k] += 1;
        }
        for (b, h) in branches.iter().zip(hits) {
            let sd = (b.probability * (1.0 - b.probability) / trials as f64).sqrt();
            assert!((h as f64 / trials as f64 - b.probability).abs() < 3.0 * sd + 1e-12);
        }
    }

    #[test]
    fn branched_mmd_equals_outcome_average_and_channel() {
        // Enumerate every joint outcome of N=4 single-qubit states and
        // average the fidelity terms of the MMD against a fixed target.
        let s = RandomStream::new(6);
        let step = random_step(1, 1, 3, 10);
        let input = gen_haar(1, 4, &s.child("in")).unwrap();
        let target = gen_haar(1, 3, &s.child("target")).unwrap();
        let branched = apply_step_branched(&step, &input).unwrap();
        let per_state: Vec<Vec<Branch>> = input.states().iter().map(|x| step.branches(x).unwrap()).collect();
        let w = 0.25;
        // cross term and target self term are linear in the generated states
        let fid = |a: &StateVector, b: &StateVector| a.fidelity(b).unwrap();
        let mut cross = 0.0;
        for brs in &per_state {
            for b in brs {
                for t in target.states() {
                    cross += w * b.probability * fid(&b.post_state, t) / target.len() as f64;
                }
            }
        }
        // generated self term: different states average independently,
        // the diagonal i = j uses the same branch twice
        let mut self_term = 0.0;
        for (i, bi) in per_state.iter().enumerate() {
            for (j, bj) in per_state.iter().enumerate() {
                for x in bi {
                    if i == j {
                        self_term += w * w * x.probability * 1.0;
                        continue;
                    }
                    for y in bj {
                        self_term += w * w * x.probability * y.probability * fid(&x.post_state, &y.post_state);
                    }
                }
            }
        }
        let t_self = crate::distance::mean_fidelity(&target, &target, ShotBudget::Exact, &s).unwrap();
        let expected_sampled = self_term + t_self - 2.0 * cross;
        let branched_mmd = mmd(&branched, &target, ShotBudget::Exact, &s).unwrap();
        // the cross term is the exact outcome average
        let branched_cross = crate::distance::mean_fidelity(&branched, &target, ShotBudget::Exact, &s).unwrap();
        assert_abs_diff_eq!(branched_cross, cross, epsilon = 1e-13);
        // branched self term replaces the diagonal purity 1 by Tr[rho_i^2]
        assert!(branched_mmd <= expected_sampled + 1e-12);
        let rho = step.channel(&input.density_matrix()).unwrap();
        let via_channel = density::hs_distance_sqr(&rho, &target.density_matrix());
        assert_abs_diff_eq!(branched_mmd, via_channel, epsilon = 1e-13);
    }

    #[test]
    fn backward_range_rules_and_composition() {
        let s = RandomStream::new(7);
        let model = DenoiseModel::random(1, 1, 2, 5, 1.0, &s.child("m"));
        let noise = gen_haar(1, 16, &s.child("noise")).unwrap();
        assert_eq!(run_backward(&model, &noise, 5, EvalMode::Sampled, &s).unwrap(), noise);
        assert!(run_backward(&model, &noise, 6, EvalMode::Sampled, &s).is_err());
        assert!(run_backward(&model, &noise, 3, EvalMode::Branched, &s).is_err());
        assert!(run_backward(&model, &noise, 4, EvalMode::Branched, &s).is_ok());
        let full = run_backward(&model, &noise, 0, EvalMode::Sampled, &s).unwrap();
        let mid = run_backward(&model, &noise, 2, EvalMode::Sampled, &s).unwrap();
        let rest = run_backward_from(&model, &mid, 2, 0, EvalMode::Sampled, &s).unwrap();
        assert_eq!(full, rest);
    }

    #[test]
    fn artifact_round_trip() {
        let model = DenoiseModel::random(2, 1, 3, 4, 0.1, &RandomStream::new(8));
        let art = model.to_artifact(serde_json::json!({"note": "x"}));
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("model.json");
        art.save(&p).unwrap();
        let back = DenoiseModel::from_artifact(&ModelArtifact::load(&p).unwrap()).unwrap();
        assert_eq!(back, model);
        let mut bad = art.clone();
        bad.format_version = 99;
        assert!(DenoiseModel::from_artifact(&bad).is_err());
    }
}
