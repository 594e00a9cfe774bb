//! Experiment configuration, read from a flat TOML file.
//!
//! Every key is optional; unknown keys are rejected so typos do not silently
//! fall back to defaults. Training keys (`generator`, `lr`, `epochs`, ...) sit at
//! the top level next to the experiment keys. Soft-Q settings live in `[soft_q]`.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use fpg_core::baselines::SoftQConfig;
use fpg_core::fpg::FpgConfig;
use fpg_core::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnvKind {
    GridworldRoom,
    GridworldOpen,
    /// U-maze, start and goal regions disjoint.
    PointMaze,
    /// U-maze, start and goal anywhere.
    PointMazeUniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LearnerKind {
    Fpg,
    PpoBaseline,
    SoftQ,
}

/// Reward for the `ppo-baseline` learner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RewardKind {
    Sparse,
    L2,
    LogGoalDensity,
    FklSignal,
}

macro_rules! kebab_names {
    ($ty:ty, $what:literal, [$($variant:ident => $name:literal),+ $(,)?]) => {
        impl $ty {
            pub const NAMES: &'static [&'static str] = &[$($name),+];

            pub fn name(self) -> &'static str {
                match self {
                    $(Self::$variant => $name),+
                }
            }
        }

        impl FromStr for $ty {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($name => Ok(Self::$variant),)+
                    other => Err(Error::Config(format!(
                        concat!("unknown ", $what, " `{}` (expected one of: {})"),
                        other,
                        Self::NAMES.join(", ")
                    ))),
                }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }
    };
}

kebab_names!(EnvKind, "environment", [
    GridworldRoom => "gridworld-room",
    GridworldOpen => "gridworld-open",
    PointMaze => "point-maze",
    PointMazeUniform => "point-maze-uniform",
]);

kebab_names!(LearnerKind, "learner", [
    Fpg => "fpg",
    PpoBaseline => "ppo-baseline",
    SoftQ => "soft-q",
]);

kebab_names!(RewardKind, "reward", [
    Sparse => "sparse",
    L2 => "l2",
    LogGoalDensity => "log-goal-density",
    FklSignal => "fkl-signal",
]);

impl EnvKind {
    pub fn is_gridworld(self) -> bool {
        matches!(self, EnvKind::GridworldRoom | EnvKind::GridworldOpen)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Label written into summaries; defaults to the config file stem.
    pub name: String,
    pub env: EnvKind,
    pub horizon: usize,
    pub learner: LearnerKind,
    pub reward: RewardKind,
    /// Weight of the shaping term added to the sparse reward.
    pub shaping_weight: f64,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    pub eval_episodes: usize,
    /// Evaluate every this many policy updates (and once at the end).
    pub eval_every: usize,
    pub checkpoint_every: usize,
    /// Heatmap cadence in policy updates; 0 keeps only the final heatmaps.
    pub heatmap_every: usize,
    /// When false, wall-clock fields are written as 0 so reruns are byte-identical.
    pub record_wall_clock: bool,
    /// Stop a seed once an evaluation reaches this success rate.
    pub target_success: Option<f64>,
    /// Standard deviation of the Gaussian goal density on continuous environments.
    pub goal_sigma: f64,
    /// Additive count smoothing of the tabular visitation histogram.
    pub smoothing: f64,
    pub hidden: Vec<usize>,
    #[serde(flatten)]
    pub fpg: FpgConfig,
    pub soft_q: SoftQConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "experiment".into(),
            env: EnvKind::GridworldRoom,
            horizon: 100,
            learner: LearnerKind::Fpg,
            reward: RewardKind::Sparse,
            shaping_weight: 1.0,
            seeds: vec![0, 1, 2],
            out_dir: PathBuf::from("runs"),
            eval_episodes: 100,
            eval_every: 50,
            checkpoint_every: 50,
            heatmap_every: 0,
            record_wall_clock: true,
            target_success: None,
            goal_sigma: 0.5,
            smoothing: 0.0,
            hidden: vec![64, 64],
            fpg: FpgConfig::default(),
            soft_q: SoftQConfig::default(),
        }
    }
}

/// Keys that have no default value and so never appear in a serialized default config.
const OPTIONAL_KEYS: &[&str] = &["target_success", "max_updates", "kl_limit"];

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: toml::Table = text.parse().map_err(|e| Error::Config(format!("invalid TOML: {e}")))?;
        check_keys(&table)?;
        let config: Self = table
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let mut config = Self::from_toml_str(&text)?;
        let table: toml::Table = text.parse().expect("parsed above");
        if !table.contains_key("name") {
            if let Some(stem) = path.file_stem() {
                config.name = stem.to_string_lossy().into_owned();
            }
        }
        Ok(config)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot serialize config: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        let mut seen = BTreeSet::new();
        if let Some(s) = self.seeds.iter().find(|s| !seen.insert(**s)) {
            return Err(Error::Config(format!("seed {s} listed twice")));
        }
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be positive".into()));
        }
        if self.eval_episodes == 0 || self.eval_every == 0 || self.checkpoint_every == 0 {
            return Err(Error::Config(
                "eval_episodes, eval_every and checkpoint_every must be positive".into(),
            ));
        }
        if !(self.goal_sigma > 0.0) {
            return Err(Error::Config("goal_sigma must be positive".into()));
        }
        if !(self.smoothing >= 0.0) {
            return Err(Error::Config("smoothing must be non-negative".into()));
        }
        if self.target_success.is_some_and(|t| !(0.0..=1.0).contains(&t)) {
            return Err(Error::Config("target_success must lie in [0, 1]".into()));
        }
        if self.hidden.contains(&0) {
            return Err(Error::Config("hidden layer widths must be positive".into()));
        }
        if self.learner == LearnerKind::SoftQ && !self.env.is_gridworld() {
            return Err(Error::Config("soft-q needs a tabular (gridworld) environment".into()));
        }
        match self.learner {
            LearnerKind::Fpg => self.fpg.validate(),
            LearnerKind::PpoBaseline => self.fpg.optim.validate(),
            LearnerKind::SoftQ => Ok(()),
        }
    }
}

fn check_keys(table: &toml::Table) -> Result<()> {
    let defaults = toml::Table::try_from(ExperimentConfig::default()).expect("defaults serialize");
    let known = |key: &str| defaults.contains_key(key) || OPTIONAL_KEYS.contains(&key);
    if let Some(key) = table.keys().find(|k| !known(k)) {
        return Err(Error::Config(format!("unknown key `{key}`")));
    }
    if let (Some(toml::Value::Table(given)), Some(toml::Value::Table(allowed))) =
        (table.get("soft_q"), defaults.get("soft_q"))
    {
        if let Some(key) = given.keys().find(|k| !allowed.contains_key(*k)) {
            return Err(Error::Config(format!("unknown key `soft_q.{key}`")));
        }
    }
    Ok(())
}
