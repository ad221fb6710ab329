//! Direct-transport and adversarial baselines with generators matched to a
//! diffusion model's parameter count.
//!
//! Both generators are a single measurement step (HEA of depth `L T` on
//! data plus ancillas) applied to Haar noise. The discriminator is an HEA
//! on the data qubits whose readout `P(real)` is the probability of
//! measuring qubit 0 in `|0>`.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::ansatz::{apply_hea_amps, hea_expectation_gradient, hea_gates, HeaParams};
use crate::datasets::EnsembleSpec;
use crate::denoise::{channel_backward, run_backward, DenoiseModel, DenoiseStep, EvalMode};
use crate::density;
use crate::distance::{mmd, ShotBudget};
use crate::ensemble::Ensemble;
use crate::error::{Error, Result};
use crate::metrics::compute_metrics;
use crate::optim::{Adam, Plateau};
use crate::rng::RandomStream;
use crate::training::{optimize, test_generate, train, training_noise, CycleObjective, TrainConfig, TrainRecord};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    /// Depth of the discriminator HEA on the data qubits.
    pub discriminator_layers: usize,
    pub gan_cycles: usize,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self { discriminator_layers: 24, gan_cycles: 5 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Quddpm,
    Qudt,
    Qugan,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::Quddpm => "quddpm",
            ModelKind::Qudt => "qudt",
            ModelKind::Qugan => "qugan",
        })
    }
}

/// One optimizer iteration of a baseline. `phase` is `"g"` or `"d"` for
/// the adversarial model and `"g"` for direct transport.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineRecord {
    pub cycle: usize,
    pub phase: String,
    pub iter: usize,
    pub loss: f64,
    /// MMD of the generator's exact output density to the target.
    pub distance: f64,
}

pub struct BaselineOutput {
    /// The generator as a one-step backward model.
    pub generator: DenoiseModel,
    pub discriminator: Option<HeaParams>,
    pub records: Vec<BaselineRecord>,
    pub noise: Ensemble,
    /// Training noise through the generator in sampled mode.
    pub generated: Ensemble,
}

fn generator_layers(cfg: &TrainConfig) -> usize {
    cfg.layers * cfg.steps
}

fn iteration_budget(cfg: &TrainConfig) -> usize {
    cfg.steps * cfg.iters_per_cycle
}

fn exact_distance(gen: &DenoiseModel, rho_noise: &DMatrix<C64>, rho_target: &DMatrix<C64>) -> Result<f64> {
    let out = channel_backward(gen, rho_noise, 1, 0)?;
    Ok(density::hs_distance_sqr(&out, rho_target))
}

fn one_step(cfg: &TrainConfig, theta: Vec<f64>) -> Result<DenoiseModel> {
    let layers = generator_layers(cfg);
    let params = HeaParams::new(cfg.n + cfg.n_anc, layers, theta)?;
    Ok(DenoiseModel {
        n_data: cfg.n,
        n_anc: cfg.n_anc,
        layers,
        steps: vec![DenoiseStep::new(cfg.n, cfg.n_anc, params)?],
    })
}

/// Direct transport: one deep step trained from noise straight to the
/// target with the same loss and total iteration budget as the diffusion
/// model.
pub fn train_qudt(cfg: &TrainConfig, target: &Ensemble, stream: &RandomStream) -> Result<BaselineOutput> {
    cfg.validate()?;
    let noise = training_noise(cfg, stream)?;
    let layers = generator_layers(cfg);
    let obj = CycleObjective::new(cfg.n, cfg.n_anc, layers, &noise, target, cfg)?;
    let init = HeaParams::random(cfg.n + cfg.n_anc, layers, cfg.init_half_width, &stream.child("init/qudt")).theta;
    let (best, recs, _) = optimize(
        &obj,
        init,
        cfg.adam,
        iteration_budget(cfg),
        (cfg.plateau_window, cfg.plateau_tol),
        1,
        &stream.child("train/qudt"),
    )?;
    let generator = one_step(cfg, best)?;
    let records = recs
        .into_iter()
        .map(|r: TrainRecord| BaselineRecord {
            cycle: 1,
            phase: "g".into(),
            iter: r.iter,
            loss: r.loss,
            distance: r.loss,
        })
        .collect();
    let generated = run_backward(&generator, &noise, 0, EvalMode::Sampled, &stream.child("backward"))?;
    Ok(BaselineOutput { generator, discriminator: None, records, noise, generated })
}

/// `|0><0|` on qubit 0 of an `n`-qubit register, applied to a vector.
fn project_qubit0(phi: &[C64]) -> Vec<C64> {
    let half = phi.len() / 2;
    let mut out = vec![C64::new(0.0, 0.0); phi.len()];
    out[..half].copy_from_slice(&phi[..half]);
    out
}

/// `P(real | rho) = Tr[U_D rho U_D^dag (|0><0| (x) I)]`.
pub fn p_real(disc: &HeaParams, rho: &DMatrix<C64>) -> Result<f64> {
    let gates = hea_gates(disc.n_qubits, disc.layers);
    let mut p = 0.0;
    for (w, mut v) in density::hermitian_factor(rho)? {
        apply_hea_amps(&mut v, disc.n_qubits, &gates, &disc.theta);
        p += w * v[..v.len() / 2].iter().map(|a| a.norm_sqr()).sum::<f64>();
    }
    Ok(p)
}

/// `U_D^dag (|0><0| (x) I) U_D` as a dense matrix.
fn discriminator_observable(disc: &HeaParams) -> DMatrix<C64> {
    let d = 1usize << disc.n_qubits;
    let gates = hea_gates(disc.n_qubits, disc.layers);
    let mut u = DMatrix::zeros(d, d);
    for k in 0..d {
        let mut col = vec![C64::new(0.0, 0.0); d];
        col[k] = C64::new(1.0, 0.0);
        apply_hea_amps(&mut col, disc.n_qubits, &gates, &disc.theta);
        for (r, a) in col.into_iter().enumerate() {
            u[(r, k)] = a;
        }
    }
    let mut proj = DMatrix::zeros(d, d);
    for k in 0..d / 2 {
        proj[(k, k)] = C64::new(1.0, 0.0);
    }
    u.adjoint() * proj * u
}

/// Adversarial training: `gan_cycles` rounds of a discriminator phase
/// minimizing `P(real|fake) - P(real|real)` followed by a generator phase
/// minimizing `-P(real|fake)`, each `T * iters_per_cycle / (2 gan_cycles)`
/// iterations long. Losses use exact output densities.
pub fn train_qugan(
    cfg: &TrainConfig,
    bcfg: &BaselineConfig,
    target: &Ensemble,
    stream: &RandomStream,
) -> Result<BaselineOutput> {
    cfg.validate()?;
    if bcfg.gan_cycles == 0 || bcfg.discriminator_layers == 0 {
        return Err(Error::InvalidParameter("adversarial cycles and discriminator depth must be positive".into()));
    }
    let noise = training_noise(cfg, stream)?;
    let n_tot = cfg.n + cfg.n_anc;
    let g_layers = generator_layers(cfg);
    let g_gates = hea_gates(n_tot, g_layers);
    let phase_iters = iteration_budget(cfg) / (2 * bcfg.gan_cycles);
    let rho_noise = noise.density_matrix();
    let rho_real = target.density_matrix();
    let noise_inputs: Vec<(f64, Vec<C64>)> = density::hermitian_factor(&rho_noise)?
        .into_iter()
        .map(|(w, v)| {
            let mut full = vec![C64::new(0.0, 0.0); v.len() << cfg.n_anc];
            for (i, a) in v.iter().enumerate() {
                full[i << cfg.n_anc] = *a;
            }
            (w, full)
        })
        .collect();

    let mut gen = HeaParams::random(n_tot, g_layers, cfg.init_half_width, &stream.child("init/qugan/g"));
    let mut disc =
        HeaParams::random(cfg.n, bcfg.discriminator_layers, cfg.init_half_width, &stream.child("init/qugan/d"));
    let mut adam_g = Adam::new(cfg.adam, gen.len());
    let mut adam_d = Adam::new(cfg.adam, disc.len());
    let fake_density = |g: &HeaParams| -> DMatrix<C64> {
        let d = 1usize << cfg.n;
        let mut rho = DMatrix::zeros(d, d);
        for (w, v) in &noise_inputs {
            let mut phi = v.clone();
            apply_hea_amps(&mut phi, n_tot, &g_gates, &g.theta);
            density::accumulate_reduced(&mut rho, &phi, cfg.n_anc, *w);
        }
        rho
    };
    let mut records = Vec::new();
    let mut iter = 0usize;
    for cycle in 1..=bcfg.gan_cycles {
        let rho_fake = fake_density(&gen);
        let dist = density::hs_distance_sqr(&rho_fake, &rho_real);
        let diff: Vec<(f64, Vec<C64>)> = density::hermitian_factor(&(&rho_fake - &rho_real))?;
        let mut plateau = Plateau::new(cfg.plateau_window, cfg.plateau_tol);
        for _ in 0..phase_iters {
            let (loss, grad) = hea_expectation_gradient(&disc, &diff, project_qubit0);
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { cycle, iter });
            }
            records.push(BaselineRecord { cycle, phase: "d".into(), iter, loss, distance: dist });
            iter += 1;
            if plateau.push(loss) {
                break;
            }
            adam_d.step(&mut disc.theta, &grad);
        }

        let obs = -discriminator_observable(&disc);
        let n_anc = cfg.n_anc;
        let mut plateau = Plateau::new(cfg.plateau_window, cfg.plateau_tol);
        for _ in 0..phase_iters {
            let (loss, grad) =
                hea_expectation_gradient(&gen, &noise_inputs, |phi| density::apply_system_operator(&obs, n_anc, phi));
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { cycle, iter });
            }
            let dist = density::hs_distance_sqr(&fake_density(&gen), &rho_real);
            records.push(BaselineRecord { cycle, phase: "g".into(), iter, loss, distance: dist });
            iter += 1;
            if plateau.push(loss) {
                break;
            }
            adam_g.step(&mut gen.theta, &grad);
        }
    }
    let generator = one_step(cfg, gen.theta)?;
    let generated = run_backward(&generator, &noise, 0, EvalMode::Sampled, &stream.child("backward"))?;
    Ok(BaselineOutput { generator, discriminator: Some(disc), records, noise, generated })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub model: ModelKind,
    pub generator_params: usize,
    /// MMD between the exact output density on the training noise and the
    /// target.
    pub distance: f64,
    /// MMD between the sampled generated training ensemble and the target.
    pub distance_sampled: f64,
    pub fidelity0_train: f64,
    pub fidelity0_test: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub rows: Vec<BenchmarkRow>,
}

impl BenchmarkReport {
    pub fn row(&self, model: ModelKind) -> Option<&BenchmarkRow> {
        self.rows.iter().find(|r| r.model == model)
    }
}

/// Iteration logs of a benchmark run, per model.
pub struct BenchmarkOutput {
    pub report: BenchmarkReport,
    pub quddpm: crate::training::TrainOutput,
    pub qudt: BaselineOutput,
    pub qugan: BaselineOutput,
}

/// Trains the diffusion model and both baselines on the same target and
/// training noise and reports their final distances and fidelities.
pub fn benchmark_compare(
    spec: &EnsembleSpec,
    cfg: &TrainConfig,
    bcfg: &BaselineConfig,
    target: &Ensemble,
    stream: &RandomStream,
) -> Result<BenchmarkOutput> {
    let rho_target = target.density_matrix();
    let f0 = |e: &Ensemble| compute_metrics(e, spec).get("fidelity0").unwrap_or(f64::NAN);
    let test_stream = stream.child("test");

    let quddpm = train(cfg, target, stream)?;
    let rho_noise = quddpm.noise.density_matrix();
    let diffusion_exact =
        density::hs_distance_sqr(&channel_backward(&quddpm.model, &rho_noise, cfg.steps, 0)?, &rho_target);
    let mut rows = vec![BenchmarkRow {
        model: ModelKind::Quddpm,
        generator_params: quddpm.model.param_count(),
        distance: diffusion_exact,
        distance_sampled: mmd(&quddpm.generated[0], target, ShotBudget::Exact, stream)?,
        fidelity0_train: f0(&quddpm.generated[0]),
        fidelity0_test: f0(&test_generate(&quddpm.model, cfg.n_test, &test_stream)?),
    }];

    let qudt = train_qudt(cfg, target, stream)?;
    let qugan = train_qugan(cfg, bcfg, target, stream)?;
    for (kind, out) in [(ModelKind::Qudt, &qudt), (ModelKind::Qugan, &qugan)] {
        rows.push(BenchmarkRow {
            model: kind,
            generator_params: out.generator.param_count(),
            distance: exact_distance(&out.generator, &out.noise.density_matrix(), &rho_target)?,
            distance_sampled: mmd(&out.generated, target, ShotBudget::Exact, stream)?,
            fidelity0_train: f0(&out.generated),
            fidelity0_test: f0(&test_generate(&out.generator, cfg.n_test, &test_stream)?),
        });
    }
    Ok(BenchmarkOutput { report: BenchmarkReport { rows }, quddpm, qudt, qugan })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{gen_cluster, gen_haar};
    use crate::statevector::StateVector;

    fn small_cfg() -> TrainConfig {
        TrainConfig {
            n: 2,
            n_anc: 1,
            layers: 2,
            steps: 3,
            n_train: 20,
            n_test: 20,
            iters_per_cycle: 10,
            ..Default::default()
        }
    }

    #[test]
    fn parameter_counts_match_the_diffusion_model() {
        let cfg = TrainConfig { n: 2, n_anc: 1, layers: 6, steps: 20, ..Default::default() };
        assert_eq!(HeaParams::param_count(3, generator_layers(&cfg)), 720);
        assert_eq!(HeaParams::param_count(3, 6) * 20, 720);
        assert_eq!(HeaParams::param_count(2, BaselineConfig::default().discriminator_layers), 96);
    }

    #[test]
    fn p_real_is_a_probability_and_matches_observable() {
        let s = RandomStream::new(1);
        let disc = HeaParams::random(2, 3, 3.0, &s);
        let e = gen_haar(2, 10, &s.child("e")).unwrap();
        let rho = e.density_matrix();
        let p = p_real(&disc, &rho).unwrap();
        assert!((0.0..=1.0).contains(&p));
        let o = discriminator_observable(&disc);
        assert!((density::hs_inner(&o, &rho) - p).abs() < 1e-12);
        // identical inputs give identical readouts
        assert!((p_real(&disc, &rho).unwrap() - p).abs() == 0.0);
    }

    #[test]
    fn perfect_discriminator_bound() {
        // real |00>, fake |10>: identity discriminator reads 1 and 0
        let disc = HeaParams::zeros(2, 1);
        let real = Ensemble::uniform(vec![StateVector::basis(2, 0)]).unwrap().density_matrix();
        let fake = Ensemble::uniform(vec![StateVector::basis(2, 2)]).unwrap().density_matrix();
        let loss = p_real(&disc, &fake).unwrap() - p_real(&disc, &real).unwrap();
        assert!((loss + 1.0).abs() < 1e-12);
    }

    #[test]
    fn baselines_run_and_record() {
        let s = RandomStream::new(2);
        let cfg = small_cfg();
        let target = gen_cluster(2, 0.06, 20, &s.child("data")).unwrap();
        let dt = train_qudt(&cfg, &target, &s).unwrap();
        assert!(!dt.records.is_empty());
        assert_eq!(dt.generated.len(), 20);
        let gan = train_qugan(&cfg, &BaselineConfig { discriminator_layers: 2, gan_cycles: 2 }, &target, &s).unwrap();
        assert!(gan.records.iter().any(|r| r.phase == "d"));
        assert!(gan.records.iter().any(|r| r.phase == "g"));
        assert!(gan.records.iter().all(|r| r.loss.is_finite() && r.loss.abs() <= 1.0 + 1e-12));
    }

    #[test]
    fn zero_iteration_direct_transport_is_its_initialization() {
        let s = RandomStream::new(3);
        let cfg = TrainConfig { iters_per_cycle: 0, ..small_cfg() };
        let target = gen_cluster(2, 0.06, 20, &s.child("data")).unwrap();
        let dt = train_qudt(&cfg, &target, &s).unwrap();
        let init = HeaParams::random(3, 6, cfg.init_half_width, &s.child("init/qudt"));
        assert_eq!(dt.generator.steps[0].params, init);
    }
}
