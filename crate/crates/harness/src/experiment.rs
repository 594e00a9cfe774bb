//! Runs every seed of a config and writes the per-seed and aggregate outputs.
//!
//! Layout of `out_dir`:
//!
//! ```text
//! config.toml          resolved configuration
//! summary.json         per-seed status and final numbers
//! aggregate.csv        iteration,mean_success,std_success,mean_entropy,std_entropy
//! learning_curve.svg
//! seed-<n>/metrics.jsonl
//! seed-<n>/summary.json
//! seed-<n>/final.ckpt, seed-<n>/checkpoints/policy-<updates>.ckpt
//! seed-<n>/heatmaps/*.svg, *.csv
//! ```

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use fpg_core::baselines::{ppo_baseline_train, soft_q_train, PpoConfig, RewardSpec};
use fpg_core::envs::{collect_rollouts, success_rate, GridworldRoom, MazeVariant, PointMaze, Positions};
use fpg_core::fpg::{train, Control, HistogramEstimator, IterationMetrics, KdeEstimator, VisitationEstimator};
use fpg_core::policy::{save_checkpoint, GaussianMlp, Policy, TabularSoftmax};
use fpg_core::seeding::{self, stream};
use fpg_core::visitation::{fit_histogram, BandwidthRule, GoalDensity, StatePoint};
use fpg_core::{f_divergence, Error, FiniteDistribution, Generator, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{EnvKind, ExperimentConfig, LearnerKind, RewardKind};
use crate::maps::{exact_grid_visitation, maze_position_heatmap, signal_heatmap, visitation_heatmap};
use crate::records::{aggregate, aggregate_csv, finite, write_record, MetricsRecord};
use crate::svg::{line_chart, Heatmap, Series};

/// Multiplies the MLP inputs `[x, y, vx, vy, gx, gy]` so U-maze coordinates land near unit scale.
pub const MAZE_INPUT_SCALE: [f64; 6] = [0.4, 0.4, 1.0, 1.0, 0.4, 0.4];

/// Sub-cells per maze cell in the position heatmap.
const MAZE_HEATMAP_RESOLUTION: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeedStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    pub iteration: usize,
    pub policy_updates: usize,
    pub success: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub status: SeedStatus,
    pub error: Option<String>,
    pub iterations: usize,
    pub policy_updates: usize,
    pub evals: Vec<EvalPoint>,
    pub final_eval_success: Option<f64>,
    pub best_eval_success: Option<f64>,
    /// Exact on gridworlds, otherwise the last batch estimate.
    pub final_visitation_entropy: Option<f64>,
    pub wall_clock_s: f64,
}

impl SeedSummary {
    fn failed(seed: u64, error: String) -> Self {
        Self {
            seed,
            status: SeedStatus::Failed,
            error: Some(error),
            iterations: 0,
            policy_updates: 0,
            evals: Vec::new(),
            final_eval_success: None,
            best_eval_success: None,
            final_visitation_entropy: None,
            wall_clock_s: 0.0,
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == SeedStatus::Ok
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub name: String,
    pub learner: LearnerKind,
    pub env: EnvKind,
    pub generator: Option<Generator>,
    pub out_dir: PathBuf,
    pub seeds: Vec<SeedSummary>,
}

impl ExperimentSummary {
    pub fn seed_dir(&self, seed: u64) -> PathBuf {
        seed_dir(&self.out_dir, seed)
    }

    pub fn succeeded(&self) -> impl Iterator<Item = &SeedSummary> {
        self.seeds.iter().filter(|s| s.is_ok())
    }
}

pub fn seed_dir(out_dir: &Path, seed: u64) -> PathBuf {
    out_dir.join(format!("seed-{seed}"))
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io(format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| io_err(path, e))
}

fn write_heatmap(dir: &Path, stem: &str, map: &Heatmap) -> Result<()> {
    write_file(&dir.join(format!("{stem}.svg")), &map.to_svg()?)?;
    write_file(&dir.join(format!("{stem}.csv")), &map.to_csv()?)
}

/// Runs all seeds in parallel. A failing seed is recorded in the summary and the
/// others continue; the call fails only when every seed fails.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentSummary> {
    config.validate()?;
    let out = &config.out_dir;
    fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    write_file(&out.join("config.toml"), &config.to_toml_string()?)?;

    let runs: Vec<(SeedSummary, Vec<MetricsRecord>)> = config
        .seeds
        .par_iter()
        .map(|&seed| {
            let attempt = catch_unwind(AssertUnwindSafe(|| run_seed(config, seed)));
            let outcome = match attempt {
                Ok(result) => result,
                Err(panic) => {
                    let msg = panic
                        .downcast_ref::<String>()
                        .cloned()
                        .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                        .unwrap_or_else(|| "panic".into());
                    Err(Error::Numeric(format!("seed {seed} panicked: {msg}")))
                }
            };
            let (summary, records) = outcome.unwrap_or_else(|e| (SeedSummary::failed(seed, e.to_string()), Vec::new()));
            let path = seed_dir(out, seed).join("summary.json");
            // best effort: the directory may not exist if the seed failed early
            if fs::create_dir_all(seed_dir(out, seed)).is_ok() {
                if let Ok(text) = serde_json::to_string_pretty(&summary) {
                    let _ = fs::write(path, text + "\n");
                }
            }
            (summary, records)
        })
        .collect();

    let summary = ExperimentSummary {
        name: config.name.clone(),
        learner: config.learner,
        env: config.env,
        generator: (config.learner == LearnerKind::Fpg).then_some(config.fpg.generator),
        out_dir: out.clone(),
        seeds: runs.iter().map(|(s, _)| s.clone()).collect(),
    };
    write_file(
        &out.join("summary.json"),
        &(serde_json::to_string_pretty(&summary)? + "\n"),
    )?;

    let rows = aggregate(runs.iter().flat_map(|(_, r)| r));
    write_file(&out.join("aggregate.csv"), &aggregate_csv(&rows))?;
    if !rows.is_empty() {
        let series = Series {
            label: config.name.clone(),
            points: rows
                .iter()
                .map(|r| (r.iteration as f64, r.mean_success, r.std_success))
                .collect(),
        };
        let title = format!("{} on {}", config.name, config.env);
        write_file(
            &out.join("learning_curve.svg"),
            &line_chart(&title, "iteration", "success rate", &[series])?,
        )?;
    }

    if summary.succeeded().next().is_none() {
        let errors: Vec<String> = summary
            .seeds
            .iter()
            .map(|s| format!("seed {}: {}", s.seed, s.error.as_deref().unwrap_or("unknown")))
            .collect();
        return Err(Error::Numeric(format!("every seed failed ({})", errors.join("; "))));
    }
    Ok(summary)
}

/// Evaluation and heatmap hooks for one environment family.
trait Probe<P>: Sync {
    fn evaluate(&self, policy: &P, index: u64) -> Result<f64>;
    /// Writes heatmaps named after `tag`; returns the visitation entropy when it is exact.
    fn snapshot(&self, policy: &P, tag: &str, dir: &Path, index: u64) -> Result<Option<f64>>;
}

struct GridProbe<'a> {
    room: &'a GridworldRoom,
    generator: Option<Generator>,
    episodes: usize,
    /// Episodes behind the fitted visitation of the signal heatmap.
    batch: usize,
    smoothing: f64,
    seed: u64,
}

impl Probe<TabularSoftmax<f64>> for GridProbe<'_> {
    fn evaluate(&self, policy: &TabularSoftmax<f64>, index: u64) -> Result<f64> {
        success_rate(
            self.room,
            policy,
            self.episodes,
            seeding::derive(self.seed, stream::EVAL, index),
        )
    }

    fn snapshot(&self, policy: &TabularSoftmax<f64>, tag: &str, dir: &Path, index: u64) -> Result<Option<f64>> {
        let exact = exact_grid_visitation(self.room, policy)?;
        let title = format!("visitation ({tag})");
        write_heatmap(
            dir,
            &format!("visitation-{tag}"),
            &visitation_heatmap(self.room, &exact, title)?,
        )?;
        if let Some(generator) = self.generator {
            // the signal the learner sees comes from a fitted histogram, not the exact visitation
            let seed = seeding::derive(self.seed, stream::EVAL, index);
            let trajs = collect_rollouts::<_, _, f64>(self.room, policy, self.batch, seed, stream::ROLLOUT)?;
            let fitted = fit_histogram(&trajs, self.room.n_states(), self.smoothing, false)?;
            let probs = fitted.probs().expect("histogram");
            let title = format!("-f' signal, {generator} ({tag})");
            write_heatmap(
                dir,
                &format!("signal-{tag}"),
                &signal_heatmap(self.room, probs, generator, title)?,
            )?;
        }
        Ok(Some(FiniteDistribution::new(exact)?.entropy()))
    }
}

struct MazeProbe<'a> {
    maze: &'a PointMaze<f64>,
    episodes: usize,
    seed: u64,
}

impl Probe<GaussianMlp<f64>> for MazeProbe<'_> {
    fn evaluate(&self, policy: &GaussianMlp<f64>, index: u64) -> Result<f64> {
        success_rate(
            self.maze,
            policy,
            self.episodes,
            seeding::derive(self.seed, stream::EVAL, index),
        )
    }

    fn snapshot(&self, policy: &GaussianMlp<f64>, tag: &str, dir: &Path, index: u64) -> Result<Option<f64>> {
        let seed = seeding::derive(self.seed, stream::EVAL, index);
        let trajs = collect_rollouts::<_, _, f64>(self.maze, policy, self.episodes, seed, stream::EVAL)?;
        let title = format!("positions ({tag})");
        let map = maze_position_heatmap(self.maze, &trajs, MAZE_HEATMAP_RESOLUTION, title)?;
        write_heatmap(dir, &format!("positions-{tag}"), &map)?;
        Ok(None)
    }
}

/// Per-seed bookkeeping driven by the training callback.
struct SeedRun<'a> {
    config: &'a ExperimentConfig,
    seed: u64,
    dir: PathBuf,
    jsonl: BufWriter<File>,
    /// Held back one iteration so a final evaluation can be attached to it.
    pending: Option<MetricsRecord>,
    records: Vec<MetricsRecord>,
    evals: Vec<EvalPoint>,
    next_eval: usize,
    next_checkpoint: usize,
    next_heatmap: usize,
    probes: u64,
    start: Instant,
}

impl<'a> SeedRun<'a> {
    fn new(config: &'a ExperimentConfig, seed: u64) -> Result<Self> {
        let dir = seed_dir(&config.out_dir, seed);
        for sub in ["checkpoints", "heatmaps"] {
            fs::create_dir_all(dir.join(sub)).map_err(|e| io_err(&dir, e))?;
        }
        let path = dir.join("metrics.jsonl");
        let jsonl = BufWriter::new(File::create(&path).map_err(|e| io_err(&path, e))?);
        Ok(Self {
            config,
            seed,
            dir,
            jsonl,
            pending: None,
            records: Vec::new(),
            evals: Vec::new(),
            next_eval: config.eval_every,
            next_checkpoint: config.checkpoint_every,
            next_heatmap: config.heatmap_every,
            probes: 0,
            start: Instant::now(),
        })
    }

    fn generator(&self) -> Option<Generator> {
        (self.config.learner == LearnerKind::Fpg).then_some(self.config.fpg.generator)
    }

    fn probe_index(&mut self) -> u64 {
        self.probes += 1;
        self.probes
    }

    fn push(&mut self, mut record: MetricsRecord) -> Result<()> {
        if !self.config.record_wall_clock {
            record.wall_clock_s = 0.0;
        }
        if let Some(prev) = self.pending.replace(record) {
            write_record(&mut self.jsonl, &prev)?;
            self.records.push(prev);
        }
        Ok(())
    }

    fn evaluate<P>(&mut self, policy: &P, probe: &dyn Probe<P>, iteration: usize, updates: usize) -> Result<f64> {
        let index = self.probe_index();
        let success = probe.evaluate(policy, index)?;
        self.evals.push(EvalPoint {
            iteration,
            policy_updates: updates,
            success,
        });
        Ok(success)
    }

    fn observe<P: Policy<f64>>(&mut self, m: &IterationMetrics, policy: &P, probe: &dyn Probe<P>) -> Result<Control> {
        let cfg = self.config;
        let mut record = MetricsRecord::from_iteration(cfg.learner, cfg.env, self.generator(), self.seed, m);
        let updates = m.policy_updates;
        let mut control = Control::Continue;
        if updates >= self.next_eval {
            let success = self.evaluate(policy, probe, m.iteration, updates)?;
            record.eval_success = Some(success);
            if cfg.target_success.is_some_and(|t| success >= t) {
                control = Control::Stop;
            }
            while self.next_eval <= updates {
                self.next_eval += cfg.eval_every;
            }
        }
        if updates >= self.next_checkpoint {
            save_checkpoint(
                policy,
                self.dir.join("checkpoints").join(format!("policy-{updates:06}.ckpt")),
            )?;
            while self.next_checkpoint <= updates {
                self.next_checkpoint += cfg.checkpoint_every;
            }
        }
        if cfg.heatmap_every > 0 && updates >= self.next_heatmap {
            let index = self.probe_index();
            probe.snapshot(policy, &format!("{updates:06}"), &self.dir.join("heatmaps"), index)?;
            while self.next_heatmap <= updates {
                self.next_heatmap += cfg.heatmap_every;
            }
        }
        self.push(record)?;
        Ok(control)
    }

    /// Final evaluation, checkpoint and heatmaps, then the seed summary.
    fn finish<P: Policy<f64>>(mut self, policy: &P, probe: &dyn Probe<P>) -> Result<(SeedSummary, Vec<MetricsRecord>)> {
        let (iteration, updates) = self
            .pending
            .as_ref()
            .map_or((0, 0), |r| (r.iteration, r.policy_updates));
        let evaluated = self.pending.as_ref().is_some_and(|r| r.eval_success.is_some());
        if !evaluated {
            let success = self.evaluate(policy, probe, iteration, updates)?;
            if let Some(r) = self.pending.as_mut() {
                r.eval_success = Some(success);
            }
        }
        save_checkpoint(policy, self.dir.join("final.ckpt"))?;
        let index = self.probe_index();
        let exact_entropy = probe.snapshot(policy, "final", &self.dir.join("heatmaps"), index)?;
        if let Some(last) = self.pending.take() {
            write_record(&mut self.jsonl, &last)?;
            self.records.push(last);
        }
        self.jsonl.flush()?;
        let wall = if self.config.record_wall_clock {
            self.start.elapsed().as_secs_f64()
        } else {
            0.0
        };
        let summary = SeedSummary {
            seed: self.seed,
            status: SeedStatus::Ok,
            error: None,
            iterations: self.records.len(),
            policy_updates: updates,
            final_eval_success: self.evals.last().map(|e| e.success),
            best_eval_success: self.evals.iter().map(|e| e.success).reduce(f64::max),
            final_visitation_entropy: exact_entropy.or_else(|| self.records.last().and_then(|r| r.visitation_entropy)),
            evals: self.evals,
            wall_clock_s: wall,
        };
        Ok((summary, self.records))
    }
}

fn run_seed(config: &ExperimentConfig, seed: u64) -> Result<(SeedSummary, Vec<MetricsRecord>)> {
    let run = SeedRun::new(config, seed)?;
    let h = config.horizon;
    match config.env {
        EnvKind::GridworldRoom | EnvKind::GridworldOpen => {
            let room = if config.env == EnvKind::GridworldRoom {
                GridworldRoom::room(h)
            } else {
                GridworldRoom::open(h)
            };
            let n = room.n_states();
            let probe = GridProbe {
                room: &room,
                generator: run.generator(),
                episodes: config.eval_episodes,
                batch: config.fpg.optim.trajectories_per_iter,
                smoothing: config.smoothing,
                seed,
            };
            if config.learner == LearnerKind::SoftQ {
                return run_soft_q(run, &room, &probe);
            }
            let mut policy = TabularSoftmax::new(1, n, 4)?;
            let estimator = HistogramEstimator {
                smoothing: config.smoothing,
                ..HistogramEstimator::new(n)
            };
            let q = GoalDensity::clipped_dirac(n);
            run_learner(run, &room, &mut policy, &estimator, &q, &probe)
        }
        EnvKind::PointMaze | EnvKind::PointMazeUniform => {
            let variant = if config.env == EnvKind::PointMaze {
                MazeVariant::Hard
            } else {
                MazeVariant::Uniform
            };
            let maze = PointMaze::u_maze(variant, h);
            let mut rng = seeding::rng(seed, stream::INIT, 0);
            let mut policy = GaussianMlp::new(
                4,
                2,
                2,
                config.hidden.clone(),
                Some(MAZE_INPUT_SCALE.to_vec()),
                &mut rng,
            )?;
            let estimator = KdeEstimator {
                dims: 2,
                rule: BandwidthRule::Scott,
                include_initial: false,
                per_trajectory: false,
            };
            let q = GoalDensity::Gaussian {
                sigma: config.goal_sigma,
            };
            let probe = MazeProbe {
                maze: &maze,
                episodes: config.eval_episodes,
                seed,
            };
            run_learner(run, &maze, &mut policy, &estimator, &q, &probe)
        }
    }
}

fn run_learner<E, P, V>(
    mut run: SeedRun<'_>,
    env: &E,
    policy: &mut P,
    estimator: &V,
    goal_density: &GoalDensity<f64>,
    probe: &dyn Probe<P>,
) -> Result<(SeedSummary, Vec<MetricsRecord>)>
where
    E: Positions<f64>,
    E::State: StatePoint<f64>,
    E::Goal: StatePoint<f64>,
    P: Policy<f64, State = E::State, Goal = E::Goal, Action = E::Action>,
    V: VisitationEstimator<E::State, E::Goal, E::Action, f64>,
{
    let config = run.config;
    let seed = run.seed;
    let callback = |m: &IterationMetrics, p: &P| run.observe(m, p, probe);
    match config.learner {
        LearnerKind::Fpg => train(env, policy, &config.fpg, estimator, goal_density, seed, callback)?,
        LearnerKind::PpoBaseline => {
            let reward = match config.reward {
                RewardKind::Sparse => RewardSpec::Sparse,
                RewardKind::L2 => RewardSpec::L2,
                RewardKind::LogGoalDensity => RewardSpec::LogGoalDensity(goal_density.clone()),
                RewardKind::FklSignal => RewardSpec::FklSignal,
            };
            let ppo = PpoConfig {
                gamma: config.fpg.gamma,
                shaping_weight: config.shaping_weight,
                optim: config.fpg.optim.clone(),
            };
            ppo_baseline_train(env, policy, &reward, &ppo, estimator, goal_density, seed, callback)?
        }
        LearnerKind::SoftQ => return Err(Error::Unsupported("soft-q runs through its own loop".into())),
    };
    run.finish(policy, probe)
}

/// Soft-Q reports one record per snapshot; its Boltzmann policy is evaluated at the end.
fn run_soft_q(
    mut run: SeedRun<'_>,
    room: &GridworldRoom,
    probe: &GridProbe<'_>,
) -> Result<(SeedSummary, Vec<MetricsRecord>)> {
    let config = run.config;
    let mdp = room.to_tabular::<f64>();
    let result = soft_q_train(&mdp, &config.soft_q, run.seed)?;
    let goal = room.goal_state();
    let q = GoalDensity::<f64>::clipped_dirac(room.n_states()).distribution(goal)?;
    let start = Instant::now();
    for (i, (rec, (_, probs))) in result.records.iter().zip(&result.snapshots).enumerate() {
        let fdiv = FiniteDistribution::new(probs.clone()).and_then(|p| f_divergence(Generator::Fkl, &p, &q));
        run.push(MetricsRecord {
            learner: config.learner,
            env: config.env,
            generator: None,
            seed: run.seed,
            iteration: i,
            policy_updates: rec.updates,
            success_rate: rec.success_rate,
            eval_success: None,
            fdiv_estimate: fdiv.ok().and_then(finite),
            visitation_entropy: finite(rec.visitation_entropy),
            mean_signal: None,
            mean_kl: None,
            clip_fraction: None,
            early_stop: false,
            wall_clock_s: start.elapsed().as_secs_f64(),
        })?;
    }
    // softmax over Q / temperature is the Boltzmann policy
    let temperature = config.soft_q.temperature;
    let logits: Vec<f64> = result.q.iter().flatten().map(|q| q / temperature).collect();
    let policy = TabularSoftmax::from_logits(1, mdp.n_states(), mdp.n_actions(), logits)?;
    run.finish(&policy, probe)
}
