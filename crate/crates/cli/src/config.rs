//! Run configuration, the built-in presets and `key=value` overrides.

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use quddpm::baselines::BaselineConfig;
use quddpm::datasets::EnsembleSpec;
use quddpm::denoise::EvalMode;
use quddpm::distance::{Metric, ShotBudget};
use quddpm::training::TrainConfig;

use crate::CliError;

pub const PRESETS: [&str; 7] =
    ["cluster1q", "cluster2q", "cluster4q-generror", "corrnoise", "tfim", "circle", "benchmark2q"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    /// Forward scrambling only.
    Diffusion,
    Train,
    /// Diffusion model against the direct-transport and adversarial baselines.
    Benchmark,
    /// Generalization error over a sweep of step counts and training sizes.
    Generror,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerrorSweep {
    /// Step counts swept at `fixed_size` training states.
    pub steps: Vec<usize>,
    /// Training sizes swept at `fixed_steps` steps.
    pub sizes: Vec<usize>,
    pub fixed_steps: usize,
    pub fixed_size: usize,
    /// Independent datasets per sweep point; losses are averaged.
    pub repeats: usize,
    /// Samples in the held-out estimate of the target density matrix.
    pub population: usize,
}

impl Default for GenerrorSweep {
    fn default() -> Self {
        Self {
            steps: vec![5, 10, 20, 40],
            sizes: vec![25, 50, 100, 200],
            fixed_steps: 20,
            fixed_size: 100,
            repeats: 4,
            population: 100_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub name: String,
    pub experiment: Experiment,
    /// Master seed; every random draw derives from it.
    pub seed: u64,
    pub dump_ensemble: bool,
    pub task: EnsembleSpec,
    pub train: TrainConfig,
    #[serde(default)]
    pub baseline: BaselineConfig,
    #[serde(default)]
    pub generror: GenerrorSweep,
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return bad(format!("run name '{}' must be a non-empty file name", self.name));
        }
        if self.seed > i64::MAX as u64 {
            return bad("seed must be below 2^63".into());
        }
        if self.task.n_qubits() != self.train.n {
            return bad(format!("task has {} qubits but train.n = {}", self.task.n_qubits(), self.train.n));
        }
        let g = &self.generror;
        if self.experiment == Experiment::Generror
            && (g.steps.len() < 2 || g.sizes.len() < 2 || g.repeats == 0 || g.population == 0)
        {
            return bad("generror sweep needs two or more points per axis and positive repeats".into());
        }
        self.train.validate().map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    pub fn from_toml(s: &str) -> Result<Self, CliError> {
        toml::from_str(s).map_err(|e| CliError::Config(e.to_string()))
    }
}

fn train_config(n: usize, n_anc: usize, layers: usize, steps: usize, size: usize) -> TrainConfig {
    TrainConfig { n, n_anc, layers, steps, n_train: size, n_test: size, ..TrainConfig::default() }
}

/// The built-in configuration called `name`.
pub fn preset(name: &str) -> Result<RunConfig, CliError> {
    let run = |experiment, task, train| RunConfig {
        name: name.to_string(),
        experiment,
        seed: 1,
        dump_ensemble: false,
        task,
        train,
        baseline: BaselineConfig::default(),
        generror: GenerrorSweep::default(),
    };
    let cfg = match name {
        "cluster1q" => {
            run(Experiment::Train, EnsembleSpec::Cluster { n: 1, epsilon: 0.08 }, train_config(1, 1, 4, 20, 100))
        }
        "cluster2q" => {
            run(Experiment::Train, EnsembleSpec::Cluster { n: 2, epsilon: 0.06 }, train_config(2, 1, 6, 20, 100))
        }
        "benchmark2q" => {
            run(Experiment::Benchmark, EnsembleSpec::Cluster { n: 2, epsilon: 0.06 }, train_config(2, 1, 6, 20, 100))
        }
        "cluster4q-generror" => {
            let train = TrainConfig { iters_per_cycle: 400, ..train_config(4, 2, 12, 20, 100) };
            run(Experiment::Generror, EnsembleSpec::Cluster { n: 4, epsilon: 0.06 }, train)
        }
        "corrnoise" => run(Experiment::Train, EnsembleSpec::correlated_noise_default(), train_config(2, 2, 6, 20, 500)),
        "tfim" => run(
            Experiment::Train,
            EnsembleSpec::Tfim { n: 4, g_min: 0.2, g_max: 0.4 },
            TrainConfig { iters_per_cycle: 500, ..train_config(4, 2, 12, 30, 100) },
        ),
        "circle" => run(
            Experiment::Train,
            EnsembleSpec::Circle,
            TrainConfig {
                metric: Metric::W1,
                mode: EvalMode::Sampled,
                // the loss is stochastic, so a flat window says little
                plateau_window: 0,
                ..train_config(1, 2, 6, 40, 500)
            },
        ),
        _ => return Err(CliError::UnknownPreset(name.to_string())),
    };
    Ok(cfg)
}

/// Parses the right-hand side of an override: a TOML literal if it is one,
/// a bare string otherwise.
fn parse_value(raw: &str) -> Value {
    match format!("v = {raw}").parse::<Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => Value::String(raw.to_string()),
    }
}

/// Sets the dotted `path` in `tree`; the key must already exist.
pub fn set_path(tree: &mut Table, path: &str, value: Value) -> Result<(), CliError> {
    let keys: Vec<&str> = path.split('.').collect();
    let (last, parents) = keys.split_last().expect("split yields one item");
    let mut node = tree;
    for k in parents {
        node = match node.get_mut(*k) {
            Some(Value::Table(t)) => t,
            _ => return Err(CliError::InvalidOverride(format!("unknown key '{path}'"))),
        };
    }
    match node.get_mut(*last) {
        Some(slot) => {
            *slot = value;
            Ok(())
        }
        None => Err(CliError::InvalidOverride(format!("unknown key '{path}'"))),
    }
}

fn merge(base: &mut Table, overlay: Table, prefix: &str) -> Result<(), CliError> {
    for (k, v) in overlay {
        let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(o)) => merge(b, o, &path)?,
            (Some(slot), v) => *slot = v,
            (None, _) => return Err(CliError::InvalidOverride(format!("unknown key '{path}'"))),
        }
    }
    Ok(())
}

/// Where a run's settings come from, applied in field order.
#[derive(Clone, Debug, Default)]
pub struct ConfigSources {
    pub preset: Option<String>,
    /// Contents of a TOML config file.
    pub file: Option<String>,
    /// `key=value` pairs with dotted keys.
    pub overrides: Vec<String>,
    pub seed: Option<u64>,
    pub mode: Option<EvalMode>,
    pub shots: Option<ShotBudget>,
    pub dump_ensemble: bool,
}

/// Builds the run configuration: preset, then file, then the explicit
/// flags, then `--set` overrides.
pub fn resolve(src: &ConfigSources) -> Result<RunConfig, CliError> {
    let mut tree = match &src.preset {
        Some(p) => Table::try_from(preset(p)?).expect("config serializes to TOML"),
        None => Table::new(),
    };
    if let Some(text) = &src.file {
        let file: Table = text.parse().map_err(|e| CliError::Config(format!("config file: {e}")))?;
        if src.preset.is_some() {
            merge(&mut tree, file, "")?;
        } else {
            tree = file;
        }
    } else if src.preset.is_none() {
        return Err(CliError::Config("give a preset, a config file or both".into()));
    }
    let mut flags = Vec::new();
    if let Some(seed) = src.seed {
        flags.push((
            "seed".to_string(),
            Value::Integer(i64::try_from(seed).map_err(|_| CliError::Config("seed must be below 2^63".into()))?),
        ));
    }
    if let Some(mode) = src.mode {
        flags.push(("train.mode".into(), Value::try_from(mode).expect("mode serializes")));
    }
    if let Some(shots) = src.shots {
        flags.push(("train.shots".into(), Value::try_from(shots).expect("shot budget serializes")));
    }
    if src.dump_ensemble {
        flags.push(("dump_ensemble".into(), Value::Boolean(true)));
    }
    for (k, v) in flags {
        set_path(&mut tree, &k, v)?;
    }
    for o in &src.overrides {
        let (k, v) = o.split_once('=').ok_or_else(|| CliError::InvalidOverride(format!("'{o}' is not key=value")))?;
        set_path(&mut tree, k.trim(), parse_value(v.trim()))?;
    }
    let cfg: RunConfig = Value::Table(tree)
        .try_into()
        .map_err(|e: toml::de::Error| CliError::InvalidOverride(e.message().to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn with(preset: &str, overrides: &[&str]) -> Result<RunConfig, CliError> {
        resolve(&ConfigSources {
            preset: Some(preset.into()),
            overrides: overrides.iter().map(|s| s.to_string()).collect(),
            ..Default::default()
        })
    }

    #[test]
    fn presets_resolve_and_round_trip() {
        for p in PRESETS {
            let cfg = preset(p).unwrap();
            cfg.validate().unwrap();
            assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg, "{p}");
        }
    }

    #[test]
    fn table_rows() {
        let c = preset("circle").unwrap();
        assert_eq!((c.train.metric, c.train.steps, c.train.n_train), (Metric::W1, 40, 500));
        let t = preset("tfim").unwrap().train;
        assert_eq!((t.n, t.n_anc, t.layers, t.steps, t.n_train), (4, 2, 12, 30, 100));
        let c = preset("corrnoise").unwrap().train;
        assert_eq!((c.n, c.n_anc, c.layers, c.steps, c.n_train), (2, 2, 6, 20, 500));
    }

    #[test]
    fn overrides_apply_with_types() {
        let cfg =
            with("cluster1q", &["train.steps=7", "train.adam.lr=0.1", "train.metric=w1", "train.shots=100"]).unwrap();
        assert_eq!(cfg.train.steps, 7);
        assert_eq!(cfg.train.adam.lr, 0.1);
        assert_eq!(cfg.train.metric, Metric::W1);
        assert_eq!(cfg.train.shots, ShotBudget::Shots(100));
    }

    #[test]
    fn bad_overrides_are_rejected() {
        for o in [&["train.nonsense=1"][..], &["train.steps=abc"], &["noequals"], &["train.steps=0"]] {
            let err = with("cluster1q", o).unwrap_err();
            assert_eq!(err.exit_code(), 2, "{o:?}: {err}");
        }
        assert_eq!(preset("nope").unwrap_err().exit_code(), 2);
    }

    #[test]
    fn file_overlays_preset() {
        let src = ConfigSources {
            preset: Some("cluster2q".into()),
            file: Some("seed = 9\n[train]\nlayers = 3\n".into()),
            seed: Some(11),
            mode: Some(EvalMode::Sampled),
            ..Default::default()
        };
        let cfg = resolve(&src).unwrap();
        assert_eq!((cfg.seed, cfg.train.layers, cfg.train.mode), (11, 3, EvalMode::Sampled));
        let full = preset("corrnoise").unwrap().to_toml();
        let cfg = resolve(&ConfigSources { file: Some(full), ..Default::default() }).unwrap();
        assert_eq!(cfg, preset("corrnoise").unwrap());
    }
}
