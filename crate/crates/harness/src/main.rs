use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fpg_core::envs::{success_rate, GridworldRoom, MazeVariant, PointMaze};
use fpg_core::policy::{load_checkpoint, Architecture};
use fpg_core::seeding::{self, stream};
use fpg_core::Generator;
use fpg_harness::checks::{chi2_bound, gradcheck, optimality_suite};
use fpg_harness::records::{aggregate, parse_aggregate_csv, read_jsonl};
use fpg_harness::svg::{line_chart, Series};
use fpg_harness::{run_experiment, EnvKind, ExperimentConfig, LearnerKind};

/// Goal-conditioned policy optimization by f-divergence minimization.
#[derive(Parser)]
#[command(name = "fpg", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every seed of an experiment config.
    Train {
        #[arg(long, value_parser = existing_file)]
        config: PathBuf,
        /// Replace the configured seeds (repeatable).
        #[arg(long)]
        seed: Vec<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        learner: Option<LearnerKind>,
        #[arg(long)]
        divergence: Option<Generator>,
        #[arg(long)]
        env: Option<EnvKind>,
    },
    /// Success rate of a saved policy.
    Eval {
        #[arg(long, value_parser = existing_file)]
        checkpoint: PathBuf,
        /// Defaults to gridworld-room for tabular policies and point-maze otherwise.
        #[arg(long)]
        env: Option<EnvKind>,
        #[arg(long, default_value_t = 100)]
        horizon: usize,
        #[arg(long, default_value_t = 100)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Exact gradients against finite differences on random tiny MDPs.
    Gradcheck {
        #[arg(long, default_value_t = 12)]
        problems: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Check one divergence instead of all five.
        #[arg(long)]
        divergence: Option<Generator>,
        #[arg(long, default_value_t = 1e-3)]
        tolerance: f64,
    },
    /// Optimality of exact training against exhaustive policy search, plus the chi-squared bound.
    Oracle {
        #[arg(long)]
        divergence: Option<Generator>,
        #[arg(long, default_value_t = 0.02)]
        resolution: f64,
        #[arg(long, default_value_t = 3000)]
        steps: usize,
        #[arg(long, default_value_t = 0.05)]
        lr: f64,
        #[arg(long, default_value_t = 1e-2)]
        tolerance: f64,
    },
    /// Learning-curve SVG from a run directory, an aggregate CSV or a metrics JSONL.
    Plot {
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn existing_file(s: &str) -> Result<PathBuf, String> {
    let path = PathBuf::from(s);
    if path.is_file() {
        Ok(path)
    } else {
        Err(format!("no such file: {s}"))
    }
}

/// Errors that are the caller's fault exit with 2, like argument errors.
enum Failure {
    Usage(String),
    Run(String),
}

impl From<fpg_core::Error> for Failure {
    fn from(e: fpg_core::Error) -> Self {
        Failure::Run(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Ok(n) = std::env::var("FPG_THREADS") {
        match n.parse::<usize>() {
            Ok(n) if n > 0 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => {
                eprintln!("error: FPG_THREADS must be a positive integer, got `{n}`");
                return ExitCode::from(2);
            }
        }
    }
    match run(cli.command) {
        Ok(code) => code,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> Result<ExitCode, Failure> {
    match command {
        Command::Train {
            config,
            seed,
            out,
            learner,
            divergence,
            env,
        } => {
            let mut cfg = ExperimentConfig::load(&config).map_err(|e| Failure::Usage(e.to_string()))?;
            if !seed.is_empty() {
                cfg.seeds = seed;
            }
            if let Some(out) = out {
                cfg.out_dir = out;
            }
            if let Some(l) = learner {
                cfg.learner = l;
            }
            if let Some(g) = divergence {
                cfg.fpg.generator = g;
            }
            if let Some(e) = env {
                cfg.env = e;
            }
            cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
            let summary = run_experiment(&cfg)?;
            for s in &summary.seeds {
                match &s.error {
                    Some(e) => println!("seed {}: failed: {e}", s.seed),
                    None => println!(
                        "seed {}: {} iterations, {} updates, final eval {}, best eval {}",
                        s.seed,
                        s.iterations,
                        s.policy_updates,
                        fmt_opt(s.final_eval_success),
                        fmt_opt(s.best_eval_success)
                    ),
                }
            }
            println!("outputs in {}", summary.out_dir.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Eval {
            checkpoint,
            env,
            horizon,
            episodes,
            seed,
        } => {
            let ckpt = load_checkpoint::<f64>(&checkpoint)?;
            let tabular = matches!(ckpt.architecture, Architecture::Tabular { .. });
            let env = env.unwrap_or(if tabular {
                EnvKind::GridworldRoom
            } else {
                EnvKind::PointMaze
            });
            if env.is_gridworld() != tabular {
                return Err(Failure::Usage(format!("checkpoint does not fit environment {env}")));
            }
            let eval_seed = seeding::derive(seed, stream::EVAL, 0);
            let rate = match env {
                EnvKind::GridworldRoom | EnvKind::GridworldOpen => {
                    let room = if env == EnvKind::GridworldRoom {
                        GridworldRoom::room(horizon)
                    } else {
                        GridworldRoom::open(horizon)
                    };
                    success_rate(&room, &ckpt.into_tabular()?, episodes, eval_seed)?
                }
                EnvKind::PointMaze | EnvKind::PointMazeUniform => {
                    let variant = if env == EnvKind::PointMaze {
                        MazeVariant::Hard
                    } else {
                        MazeVariant::Uniform
                    };
                    let maze = PointMaze::<f64>::u_maze(variant, horizon);
                    success_rate(&maze, &ckpt.into_mlp()?, episodes, eval_seed)?
                }
            };
            println!("success rate {rate:.3} over {episodes} episodes on {env}");
            Ok(ExitCode::SUCCESS)
        }
        Command::Gradcheck {
            problems,
            seed,
            divergence,
            tolerance,
        } => {
            let generators = divergence.map_or(Generator::ALL.to_vec(), |g| vec![g]);
            let rows = gradcheck(problems, seed, &generators)?;
            for g in &generators {
                let worst = rows
                    .iter()
                    .filter(|r| r.generator == *g)
                    .map(|r| r.error)
                    .fold(0.0, f64::max);
                println!("{:<5} max rel. error {worst:.3e}", g.name());
            }
            let worst = rows.iter().map(|r| r.error).fold(0.0, f64::max);
            println!(
                "max rel. error {worst:.3e} over {} cases (tolerance {tolerance:e})",
                rows.len()
            );
            Ok(if worst <= tolerance {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
        Command::Oracle {
            divergence,
            resolution,
            steps,
            lr,
            tolerance,
        } => {
            let generators = divergence.map_or(vec![Generator::Rkl, Generator::Js, Generator::Fkl], |g| vec![g]);
            let rows = optimality_suite(&generators, resolution, lr, steps)?;
            let mut ok = true;
            for r in &rows {
                let pass = r.passes(tolerance);
                ok &= pass;
                println!(
                    "{:<5} {:<8} reached {:.4} grid best {:.4} {}",
                    r.generator.name(),
                    r.objective,
                    r.reached,
                    r.grid_best,
                    if pass { "ok" } else { "FAIL" }
                );
            }
            let (violations, slack) = chi2_bound(1000, 0, 1e-9)?;
            println!("chi2 bound: {violations} violations in 1000 pairs, min slack {slack:.3e}");
            ok &= violations == 0;
            Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::Plot { input, out } => {
            let (series, default_out) = plot_series(&input)?;
            let out = out.unwrap_or(default_out);
            let title = input
                .file_name()
                .map_or("run".into(), |n| n.to_string_lossy().into_owned());
            let svg = line_chart(&title, "iteration", "success rate", &series)?;
            std::fs::write(&out, svg).map_err(|e| Failure::Run(format!("{}: {e}", out.display())))?;
            println!("wrote {}", out.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or("n/a".into(), |v| format!("{v:.2}"))
}

/// Mean/std series from a directory's `aggregate.csv`, a CSV file, or one series per seed from a JSONL file.
fn plot_series(input: &Path) -> Result<(Vec<Series>, PathBuf), Failure> {
    let (file, default_out) = if input.is_dir() {
        (input.join("aggregate.csv"), input.join("learning_curve.svg"))
    } else if input.is_file() {
        (input.to_path_buf(), input.with_extension("svg"))
    } else {
        return Err(Failure::Usage(format!(
            "no such file or directory: {}",
            input.display()
        )));
    };
    let label = input
        .file_stem()
        .map_or("run".into(), |s| s.to_string_lossy().into_owned());
    if file.extension().is_some_and(|e| e == "jsonl") {
        let records = read_jsonl(&file)?;
        let mut seeds: Vec<u64> = records.iter().map(|r| r.seed).collect();
        seeds.sort_unstable();
        seeds.dedup();
        let series = seeds
            .into_iter()
            .map(|seed| Series {
                label: format!("seed {seed}"),
                points: aggregate(records.iter().filter(|r| r.seed == seed))
                    .iter()
                    .map(|r| (r.iteration as f64, r.mean_success, 0.0))
                    .collect(),
            })
            .collect();
        Ok((series, default_out))
    } else {
        let text = std::fs::read_to_string(&file).map_err(|e| Failure::Run(format!("{}: {e}", file.display())))?;
        let rows = parse_aggregate_csv(&text)?;
        let points = rows
            .iter()
            .map(|r| (r.iteration as f64, r.mean_success, r.std_success))
            .collect();
        Ok((vec![Series { label, points }], default_out))
    }
}
