//! The cycle-by-cycle training loop and its error diagnostics.
//!
//! Cycle `c` trains step `k + 1 = T - c + 1` so that pushing the frozen
//! generated ensemble `S~_{k+1}` through it matches the diffusion snapshot
//! `S_k`. After each cycle `S~_k` is regenerated in sampled mode.
//!
//! Gradients:
//! - MMD, branched, exact overlaps: the loss is `Tr[(rho_G - rho_S)^2]`
//!   with `rho_G` the step's channel applied to the input density matrix,
//!   differentiated by the adjoint method with observable
//!   `2 (rho_G - rho_S) (x) I_A`.
//! - W1, sampled, exact overlaps: gradient of the semi-dual
//!   `sum_j b_j v_j + sum_i a_i E_z[min_j (c(g_i^z, s_j) - v_j)]` at the
//!   duals `v` of the transport problem solved on one sampled outcome per
//!   state. The expectation over outcomes is taken exactly.
//! - anything else: SPSA with shared randomness between the two sides.

use std::f64::consts::PI;
use std::time::Instant;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ansatz::{apply_hea_amps, hea_expectation_gradient, hea_gates, DiffusionSchedule, HeaParams, RangeProfile};
use crate::datasets::gen_haar;
use crate::denoise::{
    apply_step_branched, channel_backward, run_backward, run_backward_from, DenoiseModel, DenoiseStep, EvalMode,
};
use crate::density;
use crate::diffusion::{diffusion_distance_curve, noise_sampler, run_forward, DiffusionTrajectory};
use crate::distance::{
    distance, fidelity_matrix, network_simplex, FidelityMatrix, Metric, ShotBudget, INFIDELITY_FLOOR,
};
use crate::ensemble::Ensemble;
use crate::error::{Error, Result};
use crate::optim::{spsa_gradient, Adam, AdamConfig, Plateau, SpsaConfig};
use crate::rng::RandomStream;
use crate::statevector::{StateVector, BRANCH_EPSILON};

/// Where the training noise `S~_T` comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseSource {
    #[default]
    Haar,
    /// `|0...0>` pushed through freshly sampled scrambling steps.
    Scrambled,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GradientMethod {
    /// Analytic gradient where one exists, SPSA otherwise.
    #[default]
    Auto,
    Spsa,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub n: usize,
    pub n_anc: usize,
    pub layers: usize,
    pub steps: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub metric: Metric,
    /// Order of the Wasserstein distance when `metric` is W1-style.
    pub wasserstein_p: u32,
    pub adam: AdamConfig,
    pub iters_per_cycle: usize,
    pub plateau_window: usize,
    pub plateau_tol: f64,
    /// New steps start from angles uniform in `[-w, w]`.
    pub init_half_width: f64,
    pub shots: ShotBudget,
    pub mode: EvalMode,
    pub gradient: GradientMethod,
    pub spsa: SpsaConfig,
    pub angle_range: RangeProfile,
    pub g_range: RangeProfile,
    pub noise: NoiseSource,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let ramp = DiffusionSchedule::ramp(20);
        Self {
            n: 1,
            n_anc: 1,
            layers: 4,
            steps: 20,
            n_train: 100,
            n_test: 100,
            metric: Metric::Mmd,
            wasserstein_p: 1,
            adam: AdamConfig::default(),
            iters_per_cycle: 200,
            plateau_window: 20,
            plateau_tol: 1e-5,
            init_half_width: PI,
            shots: ShotBudget::Exact,
            mode: EvalMode::Branched,
            gradient: GradientMethod::Auto,
            spsa: SpsaConfig::default(),
            angle_range: ramp.angle,
            g_range: ramp.g,
            noise: NoiseSource::Haar,
        }
    }
}

impl TrainConfig {
    pub fn schedule(&self) -> DiffusionSchedule {
        DiffusionSchedule { steps: self.steps, angle: self.angle_range, g: self.g_range }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if self.n == 0 || self.layers == 0 || self.steps == 0 || self.n_train == 0 || self.n_test == 0 {
            return bad("n, layers, steps, n_train and n_test must be positive");
        }
        if self.n + self.n_anc > 16 {
            return bad("more than 16 simulated qubits");
        }
        if !(self.wasserstein_p == 1 || self.wasserstein_p == 2) {
            return bad("wasserstein_p must be 1 or 2");
        }
        if !(self.adam.lr > 0.0 && self.adam.lr.is_finite()) {
            return bad("learning rate must be positive");
        }
        if !(self.init_half_width.is_finite() && self.init_half_width >= 0.0) {
            return bad("init_half_width must be >= 0");
        }
        if !(self.spsa.perturbation > 0.0) {
            return bad("SPSA perturbation must be positive");
        }
        self.schedule().validate()
    }
}

/// One optimizer iteration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub cycle: usize,
    pub iter: usize,
    pub loss: f64,
    pub seconds: f64,
}

/// Summary of one training cycle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CycleRecord {
    pub cycle: usize,
    /// The trained step, `k + 1`.
    pub step: usize,
    pub iterations: usize,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub plateau_stop: bool,
    /// `D(S~_k, S_k)` after regeneration.
    pub distance_to_snapshot: f64,
    /// `D(S~_k, S_0)` after regeneration.
    pub distance_to_data: f64,
    pub init_seed: u64,
    pub seconds: f64,
}

pub struct TrainOutput {
    pub model: DenoiseModel,
    pub cycles: Vec<CycleRecord>,
    pub records: Vec<TrainRecord>,
    pub trajectory: DiffusionTrajectory,
    pub noise: Ensemble,
    /// `generated[k]` is `S~_k`; `generated[T]` is the training noise.
    pub generated: Vec<Ensemble>,
    /// `D(S_t, S_0)` for `t = 0..=T`.
    pub diffusion_curve: Vec<f64>,
}

/// Loss of a single denoising step mapping `input` toward `target`.
pub struct CycleObjective<'a> {
    pub n_data: usize,
    pub n_anc: usize,
    pub layers: usize,
    pub input: &'a Ensemble,
    pub target: &'a Ensemble,
    pub metric: Metric,
    pub wasserstein_p: u32,
    pub shots: ShotBudget,
    pub mode: EvalMode,
    pub gradient: GradientMethod,
    pub spsa: SpsaConfig,
    exact: Option<DensityObjective>,
}

struct DensityObjective {
    inputs: Vec<(f64, Vec<C64>)>,
    rho_target: DMatrix<C64>,
}

fn embed(v: &[C64], n_anc: usize) -> Vec<C64> {
    let da = 1usize << n_anc;
    let mut out = vec![C64::new(0.0, 0.0); v.len() * da];
    for (i, a) in v.iter().enumerate() {
        out[i * da] = *a;
    }
    out
}

impl<'a> CycleObjective<'a> {
    pub fn new(
        n_data: usize,
        n_anc: usize,
        layers: usize,
        input: &'a Ensemble,
        target: &'a Ensemble,
        cfg: &TrainConfig,
    ) -> Result<Self> {
        if input.n_qubits() != n_data || target.n_qubits() != n_data {
            return Err(Error::DimensionMismatch(format!(
                "step on {n_data} qubits with {}-qubit input and {}-qubit target",
                input.n_qubits(),
                target.n_qubits()
            )));
        }
        let mut obj = Self {
            n_data,
            n_anc,
            layers,
            input,
            target,
            metric: cfg.metric,
            wasserstein_p: cfg.wasserstein_p,
            shots: cfg.shots,
            mode: cfg.mode,
            gradient: cfg.gradient,
            spsa: cfg.spsa,
            exact: None,
        };
        if obj.uses_density() {
            let inputs = density::hermitian_factor(&input.density_matrix())?
                .into_iter()
                .map(|(w, v)| (w, embed(&v, n_anc)))
                .collect();
            obj.exact = Some(DensityObjective { inputs, rho_target: target.density_matrix() });
        }
        Ok(obj)
    }

    fn uses_density(&self) -> bool {
        self.metric == Metric::Mmd && self.mode == EvalMode::Branched && self.shots == ShotBudget::Exact
    }

    fn uses_semi_dual(&self) -> bool {
        self.metric == Metric::W1
            && self.mode == EvalMode::Sampled
            && self.shots == ShotBudget::Exact
            && self.gradient == GradientMethod::Auto
    }

    pub fn param_count(&self) -> usize {
        HeaParams::param_count(self.n_data + self.n_anc, self.layers)
    }

    fn params(&self, theta: &[f64]) -> Result<HeaParams> {
        HeaParams::new(self.n_data + self.n_anc, self.layers, theta.to_vec())
    }

    fn generated_density(&self, theta: &[f64]) -> DMatrix<C64> {
        let ex = self.exact.as_ref().expect("density objective");
        let n_tot = self.n_data + self.n_anc;
        let gates = hea_gates(n_tot, self.layers);
        let d = 1usize << self.n_data;
        let mut rho = DMatrix::zeros(d, d);
        for (w, v) in &ex.inputs {
            let mut phi = v.clone();
            apply_hea_amps(&mut phi, n_tot, &gates, theta);
            density::accumulate_reduced(&mut rho, &phi, self.n_anc, *w);
        }
        rho
    }

    /// Loss at `theta`. Deterministic in branched mode with exact
    /// overlaps; otherwise randomness comes from `stream`.
    pub fn loss(&self, theta: &[f64], stream: &RandomStream) -> Result<f64> {
        let params = self.params(theta)?;
        if let Some(ex) = &self.exact {
            return Ok(density::hs_distance_sqr(&self.generated_density(theta), &ex.rho_target));
        }
        let step = DenoiseStep::new(self.n_data, self.n_anc, params)?;
        let generated = match self.mode {
            EvalMode::Branched => apply_step_branched(&step, self.input)?,
            EvalMode::Sampled => {
                let st = stream.child("sample");
                let states = self
                    .input
                    .states()
                    .par_iter()
                    .enumerate()
                    .map(|(i, s)| step.apply_sampled(s, &mut st.index(i as u64).rng()))
                    .collect::<Result<Vec<_>>>()?;
                Ensemble::new(states, self.input.weights().to_vec())?
            }
        };
        match self.metric {
            Metric::Mmd => distance(&generated, self.target, Metric::Mmd, self.shots, &stream.child("distance")),
            Metric::W1 => crate::distance::wasserstein(
                &generated,
                self.target,
                self.wasserstein_p,
                self.shots,
                &stream.child("distance"),
            ),
        }
    }

    /// Loss and gradient estimate at `theta`.
    pub fn value_and_grad(&self, theta: &[f64], stream: &RandomStream) -> Result<(f64, Vec<f64>)> {
        if self.exact.is_some() && self.gradient == GradientMethod::Auto {
            return self.density_gradient(theta);
        }
        if self.uses_semi_dual() {
            return self.semi_dual_gradient(theta, stream);
        }
        let probe = stream.child("probe");
        let grad =
            spsa_gradient(|th, k| self.loss(th, &probe.index(k as u64)), theta, self.spsa, &stream.child("spsa"))?;
        let value = self.loss(theta, &stream.child("value"))?;
        Ok((value, grad))
    }

    fn density_gradient(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        let ex = self.exact.as_ref().expect("density objective");
        let rho_g = self.generated_density(theta);
        let loss = density::hs_distance_sqr(&rho_g, &ex.rho_target);
        let m = (&rho_g - &ex.rho_target) * C64::new(2.0, 0.0);
        let params = self.params(theta)?;
        let n_anc = self.n_anc;
        let (_, grad) =
            hea_expectation_gradient(&params, &ex.inputs, |phi| density::apply_system_operator(&m, n_anc, phi));
        Ok((loss, grad))
    }

    fn semi_dual_gradient(&self, theta: &[f64], stream: &RandomStream) -> Result<(f64, Vec<f64>)> {
        let params = self.params(theta)?;
        let n_tot = self.n_data + self.n_anc;
        let gates = hea_gates(n_tot, self.layers);
        let da = 1usize << self.n_anc;
        let d = 1usize << self.n_data;
        let p = self.wasserstein_p;
        let targets = self.target.states();
        let outcomes = stream.child("outcome");

        // forward pass, outcome blocks and one sampled outcome per state
        struct Forward {
            input: Vec<C64>,
            blocks: Vec<(usize, f64, Vec<C64>)>,
            chosen: usize,
        }
        let forwards: Vec<Forward> = self
            .input
            .states()
            .par_iter()
            .enumerate()
            .map(|(i, s)| {
                let input = embed(s.amplitudes(), self.n_anc);
                let mut phi = input.clone();
                apply_hea_amps(&mut phi, n_tot, &gates, theta);
                let blocks: Vec<(usize, f64, Vec<C64>)> = (0..da)
                    .filter_map(|z| {
                        let g: Vec<C64> = (0..d).map(|x| phi[x * da + z]).collect();
                        let pz: f64 = g.iter().map(|a| a.norm_sqr()).sum();
                        (pz > BRANCH_EPSILON).then_some((z, pz, g))
                    })
                    .collect();
                let total: f64 = blocks.iter().map(|b| b.1).sum();
                let u = outcomes.index(i as u64).rng().random::<f64>() * total;
                let mut acc = 0.0;
                let mut chosen = blocks.len() - 1;
                for (k, b) in blocks.iter().enumerate() {
                    acc += b.1;
                    if u < acc {
                        chosen = k;
                        break;
                    }
                }
                Forward { input, blocks, chosen }
            })
            .collect();

        let sampled: Vec<StateVector> = forwards
            .iter()
            .map(|f| {
                let (_, pz, g) = &f.blocks[f.chosen];
                let inv = 1.0 / pz.sqrt();
                StateVector::from_normalized(self.n_data, g.iter().map(|a| a * inv).collect())
            })
            .collect();
        let sampled = Ensemble::new(sampled, self.input.weights().to_vec())?;
        let fm = fidelity_matrix(&sampled, self.target, ShotBudget::Exact, stream)?;
        let costs = crate::distance::transport_costs(&fm, p);
        let sol = network_simplex(sampled.weights(), self.target.weights(), &costs)?;
        let opt = sol.cost.max(0.0);
        let value = if p == 1 { opt } else { opt.sqrt() };
        let v = &sol.v;

        let cost_and_slope = |f: f64| -> (f64, f64) {
            let d2 = if f >= 1.0 - INFIDELITY_FLOOR { 0.0 } else { 1.0 - f };
            if p == 1 {
                if d2 == 0.0 {
                    (0.0, 0.0)
                } else {
                    (d2.sqrt(), -0.5 / d2.sqrt())
                }
            } else {
                (d2, -1.0)
            }
        };

        let weights = self.input.weights();
        let grads: Vec<Vec<f64>> = forwards
            .par_iter()
            .enumerate()
            .map(|(i, f)| {
                let a_i = weights[i];
                // per outcome: Q = alpha I + beta |s><s|
                let mut terms: Vec<(usize, f64, f64, usize)> = Vec::with_capacity(f.blocks.len());
                for (z, pz, g) in &f.blocks {
                    let mut best = (f64::INFINITY, 0usize, 0.0, 0.0);
                    for (j, s) in targets.iter().enumerate() {
                        let a = crate::statevector::inner(s.amplitudes(), g).norm_sqr();
                        let fid = (a / pz).min(1.0);
                        let (c, slope) = cost_and_slope(fid);
                        let h = c - v[j];
                        if h < best.0 {
                            best = (h, j, slope, fid);
                        }
                    }
                    let (h, j, slope, fid) = best;
                    terms.push((*z, a_i * (h - slope * fid), a_i * slope, j));
                }
                let observable = |phi: &[C64]| {
                    let mut out = vec![C64::new(0.0, 0.0); phi.len()];
                    for &(z, alpha, beta, j) in &terms {
                        let s = targets[j].amplitudes();
                        let mut ov = C64::new(0.0, 0.0);
                        for x in 0..d {
                            ov += s[x].conj() * phi[x * da + z];
                        }
                        for x in 0..d {
                            out[x * da + z] = phi[x * da + z] * alpha + s[x] * ov * beta;
                        }
                    }
                    out
                };
                hea_expectation_gradient(&params, &[(1.0, f.input.clone())], observable).1
            })
            .collect();
        let mut grad = vec![0.0; theta.len()];
        for g in &grads {
            for (a, b) in grad.iter_mut().zip(g) {
                *a += b;
            }
        }
        if p == 2 {
            let scale = if value > 0.0 { 0.5 / value } else { 0.0 };
            grad.iter_mut().for_each(|g| *g *= scale);
        }
        Ok((value, grad))
    }
}

/// Optimizes one step from `init`; returns the best angles, the records
/// and whether the plateau rule stopped the run.
pub(crate) fn optimize(
    obj: &CycleObjective<'_>,
    init: Vec<f64>,
    adam: AdamConfig,
    iters: usize,
    plateau: (usize, f64),
    cycle: usize,
    stream: &RandomStream,
) -> Result<(Vec<f64>, Vec<TrainRecord>, bool)> {
    let start = Instant::now();
    let mut theta = init;
    let mut opt = Adam::new(adam, theta.len());
    let mut stop = Plateau::new(plateau.0, plateau.1);
    let mut best = (f64::INFINITY, theta.clone());
    let mut records = Vec::with_capacity(iters + 1);
    let mut stopped = false;
    for it in 0..iters {
        let (loss, grad) = obj.value_and_grad(&theta, &stream.index(it as u64))?;
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteLoss { cycle, iter: it });
        }
        records.push(TrainRecord { cycle, iter: it, loss, seconds: start.elapsed().as_secs_f64() });
        if loss < best.0 {
            best = (loss, theta.clone());
        }
        if stop.push(loss) {
            stopped = true;
            break;
        }
        opt.step(&mut theta, &grad);
    }
    if !stopped && iters > 0 {
        // score the last update as well
        let loss = obj.loss(&theta, &stream.index(iters as u64))?;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { cycle, iter: iters });
        }
        records.push(TrainRecord { cycle, iter: iters, loss, seconds: start.elapsed().as_secs_f64() });
        if loss < best.0 {
            best = (loss, theta);
        }
    }
    if iters == 0 {
        return Ok((best.1, records, false));
    }
    Ok((best.1, records, stopped))
}

/// Training noise `S~_T` of `cfg.n_train` states from `stream/noise/train`.
pub fn training_noise(cfg: &TrainConfig, stream: &RandomStream) -> Result<Ensemble> {
    let s = stream.child("noise/train");
    match cfg.noise {
        NoiseSource::Haar => gen_haar(cfg.n, cfg.n_train, &s),
        NoiseSource::Scrambled => noise_sampler(cfg.n, &cfg.schedule(), cfg.n_train, &s),
    }
}

/// Loss of step `k + 1` of `model` mapping `input` (`S~_{k+1}`) toward
/// `s_k`.
pub fn cycle_loss(
    model: &DenoiseModel,
    k: usize,
    s_k: &Ensemble,
    input: &Ensemble,
    cfg: &TrainConfig,
    stream: &RandomStream,
) -> Result<f64> {
    let obj = CycleObjective::new(model.n_data, model.n_anc, model.layers, input, s_k, cfg)?;
    obj.loss(&model.step(k + 1).params.theta, stream)
}

/// Full training run against the target ensemble `target` (`S_0`).
pub fn train(cfg: &TrainConfig, target: &Ensemble, stream: &RandomStream) -> Result<TrainOutput> {
    cfg.validate()?;
    if target.n_qubits() != cfg.n {
        return Err(Error::DimensionMismatch(format!(
            "config for {} qubits, target over {}",
            cfg.n,
            target.n_qubits()
        )));
    }
    let sched = cfg.schedule();
    let trajectory = run_forward(target, &sched, &stream.child("diffusion"))?;
    let diffusion_curve =
        diffusion_distance_curve(&trajectory, target, cfg.metric, cfg.shots, &stream.child("curve/diffusion"))?;
    let noise = training_noise(cfg, stream)?;
    let t_max = cfg.steps;
    let mut model = DenoiseModel::identity(cfg.n, cfg.n_anc, cfg.layers, t_max);
    let mut generated: Vec<Option<Ensemble>> = vec![None; t_max + 1];
    generated[t_max] = Some(noise.clone());
    let backward = stream.child("backward");
    let mut cycles = Vec::with_capacity(t_max);
    let mut records = Vec::new();

    for cycle in 1..=t_max {
        let started = Instant::now();
        let k = t_max - cycle;
        let input = generated[k + 1].clone().expect("previous cycle output");
        let target_k = trajectory.snapshot(k);
        let obj = CycleObjective::new(cfg.n, cfg.n_anc, cfg.layers, &input, target_k, cfg)?;
        let init_stream = stream.child("init/cycle").index(cycle as u64);
        let init = HeaParams::random(cfg.n + cfg.n_anc, cfg.layers, cfg.init_half_width, &init_stream).theta;
        let (best, recs, plateau_stop) = optimize(
            &obj,
            init,
            cfg.adam,
            cfg.iters_per_cycle,
            (cfg.plateau_window, cfg.plateau_tol),
            cycle,
            &stream.child("train").index(cycle as u64),
        )?;
        model.set_step_params(k + 1, HeaParams::new(cfg.n + cfg.n_anc, cfg.layers, best)?)?;
        let s_k = run_backward_from(&model, &input, k + 1, k, EvalMode::Sampled, &backward)?;
        let eval = stream.child("curve/training").index(cycle as u64);
        let distance_to_snapshot = distance(&s_k, target_k, cfg.metric, cfg.shots, &eval.child("snapshot"))?;
        let distance_to_data = distance(&s_k, target, cfg.metric, cfg.shots, &eval.child("data"))?;
        cycles.push(CycleRecord {
            cycle,
            step: k + 1,
            iterations: recs.iter().filter(|r| r.iter < cfg.iters_per_cycle).count(),
            initial_loss: recs.first().map_or(f64::NAN, |r| r.loss),
            final_loss: recs.iter().map(|r| r.loss).fold(f64::INFINITY, f64::min),
            plateau_stop,
            distance_to_snapshot,
            distance_to_data,
            init_seed: init_stream.key(),
            seconds: started.elapsed().as_secs_f64(),
        });
        records.extend(recs);
        generated[k] = Some(s_k);
    }
    let generated = generated.into_iter().map(|g| g.expect("every step generated")).collect();
    Ok(TrainOutput { model, cycles, records, trajectory, noise, generated, diffusion_curve })
}

/// Fresh Haar noise from `stream/noise/test` through the trained model in
/// sampled mode.
pub fn test_generate(model: &DenoiseModel, n_samples: usize, stream: &RandomStream) -> Result<Ensemble> {
    let noise = gen_haar(model.n_data, n_samples, &stream.child("noise/test"))?;
    run_backward(model, &noise, 0, EvalMode::Sampled, &stream.child("backward/test"))
}

/// Standard-error diagnostics for a shot-estimated mean fidelity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasurementError {
    /// With `SE(F) = sqrt((1 - F) / m)`.
    pub reference: f64,
    /// With the Bernoulli variance of the SWAP-test estimator,
    /// `SE(F) = sqrt((1 - F^2) / m)`.
    pub bernoulli: f64,
}

/// `E_M = (1 / (rows cols)) sqrt(sum_ij SE(F_ij)^2)`.
pub fn measurement_error_estimate(f: &FidelityMatrix, m: u32) -> MeasurementError {
    let scale = 1.0 / (f.rows * f.cols) as f64;
    let m = f64::from(m);
    let (r, b) = f.values.iter().fold((0.0, 0.0), |(r, b), &x| {
        let x = x.clamp(0.0, 1.0);
        (r + (1.0 - x) / m, b + (1.0 - x * x) / m)
    });
    MeasurementError { reference: scale * r.sqrt(), bernoulli: scale * b.sqrt() }
}

/// Loss of the whole backward pipeline with outcomes averaged exactly:
/// `Tr[(Phi(rho_noise) - rho_target)^2]`.
pub fn pipeline_loss(model: &DenoiseModel, target: &DMatrix<C64>, noise: &DMatrix<C64>) -> Result<f64> {
    let out = channel_backward(model, noise, model.n_steps(), 0)?;
    Ok(density::hs_distance_sqr(&out, target))
}

/// `L(E_0, E~_T) - L(S_0, S~_T)`: pipeline loss on held-out target and
/// noise minus the same loss on the training sets.
pub fn generalization_error(
    model: &DenoiseModel,
    train_target: &Ensemble,
    test_target: &Ensemble,
    train_noise: &Ensemble,
    test_noise: &Ensemble,
) -> Result<f64> {
    generalization_error_dense(
        model,
        &train_target.density_matrix(),
        &test_target.density_matrix(),
        &train_noise.density_matrix(),
        &test_noise.density_matrix(),
    )
}

/// [`generalization_error`] on density matrices, so population terms such
/// as `I/d` can be passed directly.
pub fn generalization_error_dense(
    model: &DenoiseModel,
    train_target: &DMatrix<C64>,
    test_target: &DMatrix<C64>,
    train_noise: &DMatrix<C64>,
    test_noise: &DMatrix<C64>,
) -> Result<f64> {
    Ok(pipeline_loss(model, test_target, test_noise)? - pipeline_loss(model, train_target, train_noise)?)
}
