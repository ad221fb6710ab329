use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use quddpm::denoise::EvalMode;
use quddpm::distance::ShotBudget;
use quddpm_cli::{load_manifest, replay, resolve, run, CliError, ConfigSources, RunManifest, RunOptions, PRESETS};

#[derive(Parser, Debug)]
#[command(name = "quddpm", version, about = "Train and evaluate quantum denoising diffusion models")]
struct Args {
    /// Built-in experiment: cluster1q, cluster2q, cluster4q-generror, corrnoise, tfim, circle, benchmark2q.
    #[arg(long)]
    preset: Option<String>,
    /// TOML config; overlays the preset when both are given.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dotted-key override, e.g. `train.adam.lr=0.02`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; defaults to all cores. Results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    mode: Option<EvalMode>,
    /// `exact` or a SWAP-test shot count.
    #[arg(long)]
    shots: Option<ShotBudget>,
    /// Also write the data, noise and generated ensembles.
    #[arg(long)]
    dump_ensemble: bool,
    #[arg(long, default_value = "runs")]
    out_dir: PathBuf,
    /// Re-run the config recorded in a manifest and verify its metrics.
    #[arg(long, conflicts_with_all = ["preset", "config"])]
    replay: Option<PathBuf>,
    /// Print the resolved config as TOML and exit.
    #[arg(long)]
    print_config: bool,
    #[arg(long)]
    list_presets: bool,
}

fn summarize(m: &RunManifest, opts: &RunOptions) {
    println!("run {} seed {} -> {}", m.name, m.seed, quddpm_cli::run::run_dir(&m.config, opts).display());
    for (group, values) in &m.metrics {
        let line: Vec<String> = values.values.iter().map(|(k, v)| format!("{k}={v:.6}")).collect();
        println!("  {group}: {}", line.join(" "));
    }
}

fn main_inner(args: Args) -> Result<(), CliError> {
    if args.list_presets {
        println!("{}", PRESETS.join("\n"));
        return Ok(());
    }
    let opts = RunOptions { out_dir: args.out_dir, threads: args.threads };
    if let Some(path) = args.replay {
        let m = replay(&load_manifest(&path)?, &opts)?;
        println!("replay matched");
        summarize(&m, &opts);
        return Ok(());
    }
    let file = args.config.map(std::fs::read_to_string).transpose()?;
    let src = ConfigSources {
        preset: args.preset,
        file,
        overrides: args.overrides,
        seed: args.seed,
        mode: args.mode,
        shots: args.shots,
        dump_ensemble: args.dump_ensemble,
    };
    let cfg = resolve(&src)?;
    if args.print_config {
        print!("{}", cfg.to_toml());
        return Ok(());
    }
    let m = run(&cfg, &opts)?;
    summarize(&m, &opts);
    Ok(())
}

fn main() -> ExitCode {
    match main_inner(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
