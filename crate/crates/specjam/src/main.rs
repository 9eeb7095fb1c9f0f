//! Command-line front end: scenario subcommands, config resolution, and
//! file emission. Progress goes to standard error; data goes to files.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand, ValueEnum};

use specjam::ensemble::{select_intervals, selection_scores, TransitionMatrix};
use specjam::experiment::{empirical_pdf_cdf, ScenarioKind, World};
use specjam::report;
use specjam::snapshot::{load_snapshot, save_snapshot, SnapshotMeta};
use specjam::{AttackerType, Error, ScenarioConfig};

#[derive(Parser)]
#[command(
    name = "specjam",
    version,
    about = "Adversarial deep-Q-learning testbed for dynamic channel access",
    after_help = "Exit codes: 0 success, 1 usage, 2 configuration, 3 runtime."
)]
struct Cli {
    /// Config file in `key = value` form; missing keys keep preset values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Parameter preset the config starts from.
    #[arg(long, global = true, value_enum, default_value_t = Preset::Full)]
    preset: Preset,

    /// Override one key, e.g. --set f_d=0 (repeatable; applied after the
    /// config file).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    /// Master seed (shorthand for --set seed=N).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory (default: out/<scenario>-seed<seed>).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Preset {
    /// Full-scale experiment durations.
    Full,
    /// All durations divided by ten.
    Desk,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AttackerArg {
    None,
    Random,
    Ideal,
    Dqn,
}

impl From<AttackerArg> for AttackerType {
    fn from(a: AttackerArg) -> Self {
        match a {
            AttackerArg::None => AttackerType::None,
            AttackerArg::Random => AttackerType::Random,
            AttackerArg::Ideal => AttackerType::Ideal,
            AttackerArg::Dqn => AttackerType::Dqn,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train the victims, then test with frozen parameters (no attacker).
    Baseline,
    /// Expose a trained victim to the configured attacker.
    Attack {
        /// Attacker type (shorthand for --set attacker_type=...).
        #[arg(long, value_enum)]
        attacker: Option<AttackerArg>,
        /// Load victim parameters from a snapshot instead of training them
        /// in-run (the training phase then runs frozen).
        #[arg(long, value_name = "FILE")]
        victim_model: Option<PathBuf>,
    },
    /// Attack plus centralized retraining with snapshot collection; stops at
    /// the retraining horizon or on collapse detection.
    Retrain {
        #[arg(long, value_enum)]
        attacker: Option<AttackerArg>,
        #[arg(long, value_name = "FILE")]
        victim_model: Option<PathBuf>,
    },
    /// Full defense run: retraining, minimum-correlation selection, and the
    /// ensemble reload phase.
    Ensemble {
        #[arg(long, value_enum)]
        attacker: Option<AttackerArg>,
        #[arg(long, value_name = "FILE")]
        victim_model: Option<PathBuf>,
    },
    /// Offline minimum-correlation selection over saved transition matrices.
    AnalyzeEnsemble {
        /// Matrices CSV produced by a retrain or ensemble run.
        #[arg(long, value_name = "FILE")]
        matrices: PathBuf,
        /// Last interval index eligible for selection (default: all).
        #[arg(long, value_name = "INTERVAL")]
        exclude_after: Option<usize>,
    },
    /// Run the self-check battery.
    Verify,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    ExitCode::SUCCESS
                }
                _ => {
                    eprint!("{e}");
                    ExitCode::from(1)
                }
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            match err.downcast_ref::<Error>() {
                Some(Error::Config(_)) => ExitCode::from(2),
                _ => ExitCode::from(3),
            }
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::Baseline => {
            let cfg = resolve_config(&cli, None)?;
            run_scenario(&cli, cfg, ScenarioKind::Baseline, None)
        }
        Command::Attack {
            attacker,
            victim_model,
        } => {
            let cfg = resolve_config(&cli, *attacker)?;
            run_scenario(&cli, cfg, ScenarioKind::Attack, victim_model.clone())
        }
        Command::Retrain {
            attacker,
            victim_model,
        } => {
            let cfg = resolve_config(&cli, *attacker)?;
            run_scenario(&cli, cfg, ScenarioKind::Retrain, victim_model.clone())
        }
        Command::Ensemble {
            attacker,
            victim_model,
        } => {
            let cfg = resolve_config(&cli, *attacker)?;
            run_scenario(&cli, cfg, ScenarioKind::Ensemble, victim_model.clone())
        }
        Command::AnalyzeEnsemble {
            matrices,
            exclude_after,
        } => {
            let cfg = resolve_config(&cli, None)?;
            analyze_ensemble(&cli, cfg, matrices, *exclude_after)
        }
        Command::Verify => verify(),
    }
}

/// Precedence: preset defaults, then the config file, then --set overrides,
/// then the --seed / --attacker shorthands.
fn resolve_config(cli: &Cli, attacker: Option<AttackerArg>) -> anyhow::Result<ScenarioConfig> {
    let mut cfg = match cli.preset {
        Preset::Full => ScenarioConfig::default(),
        Preset::Desk => ScenarioConfig::desk(),
    };
    if let Some(path) = &cli.config {
        cfg.apply_file(path)?;
    }
    for pair in &cli.overrides {
        let Some((key, value)) = pair.split_once('=') else {
            return Err(Error::config(format!("--set expects KEY=VALUE, got `{pair}`")).into());
        };
        cfg.set(key.trim(), value)?;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(a) = attacker {
        cfg.attacker_type = a.into();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(cli: &Cli, kind: &str, seed: u64) -> PathBuf {
    cli.out
        .clone()
        .unwrap_or_else(|| PathBuf::from("out").join(format!("{kind}-seed{seed}")))
}

fn run_scenario(
    cli: &Cli,
    cfg: ScenarioConfig,
    kind: ScenarioKind,
    victim_model: Option<PathBuf>,
) -> anyhow::Result<()> {
    let dir = out_dir(cli, kind.name(), cfg.seed);
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;

    let mut world = World::new(cfg.clone(), kind)?;
    if let Some(path) = victim_model {
        let (params, meta) = load_snapshot(&path)?;
        eprintln!(
            "loaded victim model from {} (saved at slot {})",
            path.display(),
            meta.slot
        );
        world.preload_victim(params);
    }
    let plan = world.plan();
    eprintln!(
        "{}: seed {}, {} slots planned, attacker {}",
        kind.name(),
        cfg.seed,
        plan.run_end,
        cfg.attacker_type
    );
    let progress_every = (plan.run_end / 20).max(1);
    while world.slot() < plan.run_end {
        if kind == ScenarioKind::Retrain
            && cfg.collapse_detection
            && world.collapse_fired().is_some()
        {
            eprintln!(
                "collapse detected in interval {}; stopping retraining at slot {}",
                world.collapse_fired().unwrap(),
                world.slot()
            );
            break;
        }
        world.step()?;
        if world.slot() % progress_every == 0 {
            eprintln!("  slot {} / {}", world.slot(), plan.run_end);
        }
    }
    let outcome = world.into_outcome();

    report::write_manifest(&dir.join("manifest.txt"), &cfg, &plan, outcome.stopped_at)?;
    report::emit_trace(&dir.join("trace.csv"), &outcome.trace, cfg.moving_avg_window)?;
    if outcome.stopped_at > plan.metrics_from {
        let window = &outcome.trace.sum_rate[plan.metrics_from as usize..];
        let hist = empirical_pdf_cdf(window, cfg.histogram_bin_width)?;
        report::emit_histogram(&dir.join("histogram.csv"), &hist)?;
        let mean = window.iter().sum::<f64>() / window.len() as f64;
        eprintln!(
            "mean sum rate over [{}, {}): {:.3}",
            plan.metrics_from, outcome.stopped_at, mean
        );
    }
    save_snapshot(
        &dir.join("victim_model.snap"),
        &outcome.final_victim_params,
        SnapshotMeta {
            interval: 0,
            slot: outcome.stopped_at,
        },
    )?;

    if let Some(library) = &outcome.library {
        let matrices = library.matrices();
        report::emit_matrices(&dir.join("transition_matrices.csv"), &matrices)?;
        report::emit_scores(&dir.join("correlation_scores.csv"), &matrices)?;
        let snap_dir = dir.join("snapshots");
        std::fs::create_dir_all(&snap_dir).map_err(|e| Error::io(&snap_dir, e))?;
        for entry in library.entries() {
            save_snapshot(
                &snap_dir.join(format!("interval_{:03}.snap", entry.interval)),
                &entry.params,
                SnapshotMeta {
                    interval: entry.interval as u64,
                    slot: entry.slot,
                },
            )?;
        }
        if let Some(selected) = &outcome.selected_intervals {
            let scores: Vec<(usize, u64)> = matrices
                .iter()
                .map(|m| m.interval)
                .zip(selection_scores(&matrices))
                .collect();
            report::emit_selection(&dir.join("selection.csv"), &scores, selected)?;
            eprintln!("ensemble intervals: {selected:?}");
        }
        if let Some(first) = outcome.first_collapse_interval {
            eprintln!("collapse first flagged in interval {first}");
        }
    }
    eprintln!("outputs in {}", dir.display());
    Ok(())
}

fn analyze_ensemble(
    cli: &Cli,
    cfg: ScenarioConfig,
    matrices_path: &Path,
    exclude_after: Option<usize>,
) -> anyhow::Result<()> {
    let dir = out_dir(cli, "analyze-ensemble", cfg.seed);
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let matrices = report::load_matrices(matrices_path, cfg.num_channels, cfg.reward_bins)?;
    if matrices.is_empty() {
        return Err(Error::config("no matrices to analyze").into());
    }
    let refs: Vec<&TransitionMatrix> = matrices.iter().collect();
    let last = exclude_after.unwrap_or_else(|| refs.iter().map(|m| m.interval).max().unwrap());
    let selected = select_intervals(&refs, cfg.ensemble_size, last)?;
    let scores: Vec<(usize, u64)> = refs
        .iter()
        .map(|m| m.interval)
        .zip(selection_scores(&refs))
        .collect();
    report::emit_scores(&dir.join("correlation_scores.csv"), &refs)?;
    report::emit_selection(&dir.join("selection.csv"), &scores, &selected)?;
    eprintln!(
        "selected {} of {} intervals (candidates up to {last}): {selected:?}",
        selected.len(),
        refs.len()
    );
    eprintln!("outputs in {}", dir.display());
    Ok(())
}

fn verify() -> anyhow::Result<()> {
    let results = specjam::verify::run_all();
    let mut failures = 0;
    for r in &results {
        if r.passed {
            eprintln!("ok   {:<28} {}", r.name, r.detail);
        } else {
            failures += 1;
            eprintln!("FAIL {:<28} {}", r.name, r.detail);
        }
    }
    if failures > 0 {
        anyhow::bail!("{failures} of {} checks failed", results.len());
    }
    eprintln!("all {} checks passed", results.len());
    Ok(())
}
