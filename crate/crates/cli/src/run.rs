//! Executes a resolved configuration and writes the run directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use quddpm::baselines::{benchmark_compare, BaselineRecord};
use quddpm::datasets::gen_haar;
use quddpm::denoise::{run_backward_from, DenoiseModel, EvalMode};
use quddpm::density::maximally_mixed;
use quddpm::diffusion::{diffusion_distance_curve, run_forward};
use quddpm::distance::distance;
use quddpm::metrics::{compute_metrics, MetricMap};
use quddpm::stats::linear_fit;
use quddpm::training::{generalization_error_dense, pipeline_loss, train, TrainConfig, TrainOutput, TrainRecord};
use quddpm::{Ensemble, RandomStream};

use crate::config::{Experiment, RunConfig};
use crate::CliError;

/// Everything needed to reproduce a run, plus what it produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub name: String,
    pub version: String,
    pub seed: u64,
    pub config: RunConfig,
    /// Seconds per phase; the only non-reproducible field.
    pub durations: BTreeMap<String, f64>,
    /// Files written, relative to the run directory.
    pub files: Vec<String>,
    pub metrics: BTreeMap<String, MetricMap>,
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Parent of the `<name>-<seed>` run directory.
    pub out_dir: PathBuf,
    /// Worker threads; `None` uses every core.
    pub threads: Option<usize>,
}

pub fn run_dir(cfg: &RunConfig, opts: &RunOptions) -> PathBuf {
    opts.out_dir.join(format!("{}-{}", cfg.name, cfg.seed))
}

#[derive(Serialize)]
struct CurveRow<'a> {
    t: usize,
    metric: String,
    value: f64,
    phase: &'a str,
}

#[derive(Serialize)]
struct TrainingRow<'a> {
    cycle: usize,
    iter: usize,
    loss: f64,
    metric: &'a str,
    seconds: Option<f64>,
    seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    model: Option<&'a str>,
}

#[derive(Serialize)]
struct GenerrorRow<'a> {
    sweep: &'a str,
    steps: usize,
    n_train: usize,
    repeat: usize,
    egen: f64,
    train_loss: f64,
}

struct Writer {
    dir: PathBuf,
    files: Vec<String>,
}

impl Writer {
    fn path(&mut self, name: &str) -> PathBuf {
        self.files.push(name.to_string());
        self.dir.join(name)
    }

    fn csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<(), CliError> {
        let mut w = csv::Writer::from_path(self.path(name))?;
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(value)?;
        fs::write(self.path(name), text + "\n")?;
        Ok(())
    }

    fn ensemble(&mut self, name: &str, e: &Ensemble) -> Result<(), CliError> {
        let f = fs::File::create(self.path(&format!("ensembles/{name}.bin")))?;
        e.write_binary(std::io::BufWriter::new(f))?;
        Ok(())
    }
}

struct Timer(BTreeMap<String, f64>, Instant);

impl Timer {
    fn lap(&mut self, phase: &str) {
        self.0.insert(phase.to_string(), self.1.elapsed().as_secs_f64());
        self.1 = Instant::now();
    }
}

fn curve_rows(values: &[f64], metric: &str, phase: &'static str) -> Vec<CurveRow<'static>> {
    values.iter().enumerate().map(|(t, &value)| CurveRow { t, metric: metric.to_string(), value, phase }).collect()
}

fn training_rows<'a>(
    records: &[TrainRecord],
    metric: &'a str,
    seed: u64,
    model: Option<&'a str>,
) -> Vec<TrainingRow<'a>> {
    records
        .iter()
        .map(|r| TrainingRow {
            cycle: r.cycle,
            iter: r.iter,
            loss: r.loss,
            metric,
            seconds: Some(r.seconds),
            seed,
            model,
        })
        .collect()
}

fn baseline_rows<'a>(records: &[BaselineRecord], metric: &'a str, seed: u64, model: &'a str) -> Vec<TrainingRow<'a>> {
    records
        .iter()
        .map(|r| TrainingRow {
            cycle: r.cycle,
            iter: r.iter,
            loss: r.loss,
            metric: if r.phase == "d" { "discriminator" } else { metric },
            seconds: None,
            seed,
            model: Some(model),
        })
        .collect()
}

fn single(pairs: &[(&str, f64)]) -> MetricMap {
    let mut m = MetricMap::default();
    for (k, v) in pairs {
        m.values.insert(k.to_string(), *v);
    }
    m
}

/// Fresh test noise from `stream/noise/test` pushed through the model one
/// step at a time; entry `t` is the generated ensemble at step `t`.
pub fn test_trajectory(
    model: &DenoiseModel,
    n_samples: usize,
    stream: &RandomStream,
) -> Result<Vec<Ensemble>, CliError> {
    let t_max = model.n_steps();
    let backward = stream.child("backward/test");
    let mut out = vec![gen_haar(model.n_data, n_samples, &stream.child("noise/test"))?];
    for t in (1..=t_max).rev() {
        let next = run_backward_from(model, out.last().expect("non-empty"), t, t - 1, EvalMode::Sampled, &backward)?;
        out.push(next);
    }
    out.reverse();
    Ok(out)
}

/// Curves, metrics and artifacts shared by training and benchmark runs.
fn report_training(
    cfg: &RunConfig,
    out: &TrainOutput,
    target: &Ensemble,
    stream: &RandomStream,
    w: &mut Writer,
    metrics: &mut BTreeMap<String, MetricMap>,
    timer: &mut Timer,
) -> Result<(), CliError> {
    let tc = &cfg.train;
    let metric = tc.metric.to_string();
    let test_stream = stream.child("test");
    let test = test_trajectory(&out.model, tc.n_test, &test_stream)?;
    timer.lap("test");

    let mut training = vec![f64::NAN; tc.steps + 1];
    for c in &out.cycles {
        training[c.step - 1] = c.distance_to_data;
    }
    training[tc.steps] = distance(&out.noise, target, tc.metric, tc.shots, &stream.child("curve/training").index(0))?;
    let curve = test_stream.child("curve");
    let testing: Vec<f64> = test
        .iter()
        .enumerate()
        .map(|(t, e)| distance(e, target, tc.metric, tc.shots, &curve.index(t as u64)))
        .collect::<quddpm::Result<_>>()?;
    let mut rows = curve_rows(&out.diffusion_curve, &metric, "diffusion");
    rows.extend(curve_rows(&training, &metric, "training"));
    rows.extend(curve_rows(&testing, &metric, "testing"));
    w.csv("curves.csv", &rows)?;
    timer.lap("curves");

    metrics.insert("data".into(), compute_metrics(target, &cfg.task));
    metrics.insert("train".into(), compute_metrics(&out.generated[0], &cfg.task));
    metrics.insert("test".into(), compute_metrics(&test[0], &cfg.task));
    metrics.insert("noise".into(), compute_metrics(&out.noise, &cfg.task));
    metrics.insert("diffusion_final".into(), compute_metrics(out.trajectory.snapshot(tc.steps), &cfg.task));
    let exact = pipeline_loss(&out.model, &target.density_matrix(), &out.noise.density_matrix())?;
    metrics.insert(
        "distance".into(),
        single(&[
            ("train", training[0]),
            ("test", testing[0]),
            ("diffusion_final", out.diffusion_curve[tc.steps]),
            ("exact_mmd_train", exact),
        ]),
    );

    let meta = serde_json::json!({ "name": cfg.name, "seed": cfg.seed, "task": cfg.task });
    w.json("model.json", &out.model.to_artifact(meta))?;
    if cfg.dump_ensemble {
        fs::create_dir_all(w.dir.join("ensembles"))?;
        w.ensemble("data", target)?;
        w.ensemble("noise", &out.noise)?;
        w.ensemble("generated_train", &out.generated[0])?;
        w.ensemble("generated_test", &test[0])?;
    }
    Ok(())
}

/// `(E_gen, training loss)` of one model trained on a fresh dataset.
fn generror_point(
    tc: &TrainConfig,
    cfg: &RunConfig,
    population: &quddpm::density::Matrix,
    stream: &RandomStream,
) -> Result<(f64, f64), CliError> {
    let target = cfg.task.generate(tc.n_train, &stream.child("data/train"))?;
    let out = train(tc, &target, stream)?;
    let (rho_s, rho_noise) = (target.density_matrix(), out.noise.density_matrix());
    let mixed = maximally_mixed(1 << tc.n);
    let egen = generalization_error_dense(&out.model, &rho_s, population, &rho_noise, &mixed)?;
    Ok((egen, pipeline_loss(&out.model, &rho_s, &rho_noise)?))
}

fn run_generror(
    cfg: &RunConfig,
    stream: &RandomStream,
    w: &mut Writer,
    metrics: &mut BTreeMap<String, MetricMap>,
) -> Result<(), CliError> {
    let g = &cfg.generror;
    let population = cfg.task.generate(g.population, &stream.child("data/population"))?.density_matrix();
    let mut rows = Vec::new();
    let mut summary = MetricMap::default();
    let sweeps: [(&str, Vec<(usize, usize)>); 2] = [
        ("steps", g.steps.iter().map(|&t| (t, g.fixed_size)).collect()),
        ("size", g.sizes.iter().map(|&n| (g.fixed_steps, n)).collect()),
    ];
    for (sweep, points) in sweeps {
        let (mut xs, mut ys) = (Vec::new(), Vec::new());
        for (steps, n_train) in points {
            let tc = TrainConfig { steps, n_train, n_test: n_train, ..cfg.train.clone() };
            let mut sum = 0.0;
            for repeat in 0..g.repeats {
                // the same repeat stream at every point keeps datasets nested
                let (egen, train_loss) =
                    generror_point(&tc, cfg, &population, &stream.child("generror").index(repeat as u64))?;
                rows.push(GenerrorRow { sweep, steps, n_train, repeat, egen, train_loss });
                sum += egen;
            }
            let mean = sum / g.repeats as f64;
            summary.values.insert(format!("egen_T{steps}_N{n_train}"), mean);
            xs.push(if sweep == "steps" { steps } else { n_train } as f64);
            ys.push(mean);
        }
        let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
        let ly: Vec<f64> = ys.iter().map(|y| y.abs().max(f64::MIN_POSITIVE).ln()).collect();
        let (slope, _, se) = linear_fit(&lx, &ly);
        summary.values.insert(format!("slope_{sweep}"), slope);
        summary.values.insert(format!("slope_{sweep}_se"), se);
        summary.values.insert(format!("all_positive_{sweep}"), f64::from(u8::from(ys.iter().all(|&y| y > 0.0))));
    }
    w.csv("generror.csv", &rows)?;
    metrics.insert("generror".into(), summary);
    Ok(())
}

fn execute(cfg: &RunConfig, dir: &Path) -> Result<RunManifest, CliError> {
    let stream = RandomStream::new(cfg.seed);
    let mut w = Writer { dir: dir.to_path_buf(), files: Vec::new() };
    let mut metrics = BTreeMap::new();
    let mut timer = Timer(BTreeMap::new(), Instant::now());
    let total = Instant::now();
    let tc = &cfg.train;
    let seed = cfg.seed;
    let metric = tc.metric.to_string();

    match cfg.experiment {
        Experiment::Diffusion => {
            let target = cfg.task.generate(tc.n_train, &stream.child("data/train"))?;
            let traj = run_forward(&target, &tc.schedule(), &stream.child("diffusion"))?;
            let curve =
                diffusion_distance_curve(&traj, &target, tc.metric, tc.shots, &stream.child("curve/diffusion"))?;
            timer.lap("diffusion");
            w.csv("curves.csv", &curve_rows(&curve, &metric, "diffusion"))?;
            metrics.insert("data".into(), compute_metrics(&target, &cfg.task));
            metrics.insert("diffusion_final".into(), compute_metrics(traj.snapshot(tc.steps), &cfg.task));
            metrics.insert("distance".into(), single(&[("diffusion_final", curve[tc.steps])]));
            if cfg.dump_ensemble {
                fs::create_dir_all(dir.join("ensembles"))?;
                w.ensemble("data", &target)?;
                w.ensemble("diffusion_final", traj.snapshot(tc.steps))?;
            }
        }
        Experiment::Train => {
            let target = cfg.task.generate(tc.n_train, &stream.child("data/train"))?;
            let out = train(tc, &target, &stream)?;
            timer.lap("train");
            w.csv("training.csv", &training_rows(&out.records, &metric, seed, None))?;
            report_training(cfg, &out, &target, &stream, &mut w, &mut metrics, &mut timer)?;
        }
        Experiment::Benchmark => {
            let target = cfg.task.generate(tc.n_train, &stream.child("data/train"))?;
            let bench = benchmark_compare(&cfg.task, tc, &cfg.baseline, &target, &stream)?;
            timer.lap("train");
            let mut rows = training_rows(&bench.quddpm.records, &metric, seed, Some("quddpm"));
            rows.extend(baseline_rows(&bench.qudt.records, &metric, seed, "qudt"));
            rows.extend(baseline_rows(&bench.qugan.records, &metric, seed, "qugan"));
            w.csv("training.csv", &rows)?;
            for r in &bench.report.rows {
                metrics.insert(
                    r.model.to_string(),
                    single(&[
                        ("generator_params", r.generator_params as f64),
                        ("distance", r.distance),
                        ("distance_sampled", r.distance_sampled),
                        ("fidelity0_train", r.fidelity0_train),
                        ("fidelity0_test", r.fidelity0_test),
                    ]),
                );
            }
            let mut diffusion = BTreeMap::new();
            report_training(cfg, &bench.quddpm, &target, &stream, &mut w, &mut diffusion, &mut timer)?;
            metrics.extend(diffusion.into_iter().map(|(k, v)| (format!("quddpm_{k}"), v)));
        }
        Experiment::Generror => {
            run_generror(cfg, &stream, &mut w, &mut metrics)?;
            timer.lap("generror");
        }
    }
    w.json("metrics.json", &metrics)?;
    timer.0.insert("total".into(), total.elapsed().as_secs_f64());
    let mut files = w.files.clone();
    files.push("manifest.json".into());
    let manifest = RunManifest {
        name: cfg.name.clone(),
        version: quddpm::VERSION.to_string(),
        seed,
        config: cfg.clone(),
        durations: timer.0,
        files,
        metrics,
    };
    w.json("manifest.json", &manifest)?;
    Ok(manifest)
}

/// Runs `cfg` into `<out_dir>/<name>-<seed>/`.
pub fn run(cfg: &RunConfig, opts: &RunOptions) -> Result<RunManifest, CliError> {
    cfg.validate()?;
    let dir = run_dir(cfg, opts);
    fs::create_dir_all(&dir)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = opts.threads {
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| CliError::Config(e.to_string()))?;
    pool.install(|| execute(cfg, &dir))
}

/// A preset with `key=value` overrides and a seed.
pub fn run_preset(name: &str, overrides: &[String], seed: u64, opts: &RunOptions) -> Result<RunManifest, CliError> {
    let src = crate::config::ConfigSources {
        preset: Some(name.to_string()),
        overrides: overrides.to_vec(),
        seed: Some(seed),
        ..Default::default()
    };
    run(&crate::config::resolve(&src)?, opts)
}

pub fn load_manifest(path: &Path) -> Result<RunManifest, CliError> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

/// Re-runs the configuration recorded in a manifest and checks that every
/// metric comes out bit-identical.
pub fn replay(manifest: &RunManifest, opts: &RunOptions) -> Result<RunManifest, CliError> {
    let again = run(&manifest.config, opts)?;
    let (a, b) = (serde_json::to_string(&manifest.metrics)?, serde_json::to_string(&again.metrics)?);
    if a != b {
        return Err(CliError::ReplayMismatch(run_dir(&manifest.config, opts)));
    }
    Ok(again)
}
