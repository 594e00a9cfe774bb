use std::str::FromStr;

use rand::Rng;

use super::{Cell, GoalEnv, Layout, Positions};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Radius of the closed goal ball, in cell units.
pub const POINT_MAZE_GOAL_RADIUS: f64 = 0.5;

const U_MAZE: &str = "\
#####
#G..#
###.#
#S..#
#####
";

/// How start and goal positions are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MazeVariant {
    /// Start from `S` cells, goals from `G` cells (disjoint, far apart).
    Hard,
    /// Start and goal uniformly over every free cell.
    Uniform,
}

impl FromStr for MazeVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hard" => Ok(MazeVariant::Hard),
            "uniform" => Ok(MazeVariant::Uniform),
            other => Err(Error::Config(format!("unknown maze variant `{other}`"))),
        }
    }
}

/// Point mass in a cell maze. State `[x, y, vx, vy]`, action is a force in `[-1, 1]^2`,
/// goal is a position. Each layout cell is a unit square; wall cells are solid.
#[derive(Debug, Clone)]
pub struct PointMaze<T> {
    layout: Layout,
    variant: MazeVariant,
    horizon: usize,
    dt: T,
    force_gain: T,
    max_speed: T,
    goal_radius: T,
}

impl<T: Scalar> PointMaze<T> {
    pub fn new(layout: Layout, variant: MazeVariant, horizon: usize) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::Domain("horizon must be >= 1".into()));
        }
        Ok(Self {
            layout,
            variant,
            horizon,
            dt: T::c(0.1),
            force_gain: T::c(5.0),
            max_speed: T::one(),
            goal_radius: T::c(POINT_MAZE_GOAL_RADIUS),
        })
    }

    /// The classic U-shaped maze: start bottom-left, goal top-left, wall in between.
    pub fn u_maze(variant: MazeVariant, horizon: usize) -> Self {
        Self::new(U_MAZE.parse().expect("built-in layout"), variant, horizon).expect("valid maze")
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn goal_radius(&self) -> T {
        self.goal_radius
    }

    pub fn with_goal_radius(mut self, r: T) -> Self {
        self.goal_radius = r;
        self
    }

    pub fn variant(&self) -> MazeVariant {
        self.variant
    }

    /// Whether a position lies inside a wall cell (or off the map).
    pub fn in_wall(&self, x: T, y: T) -> bool {
        self.layout.is_wall(cell_of(x), cell_of(y))
    }

    fn sample_in<R: Rng + ?Sized>(&self, cells: &[(usize, usize)], rng: &mut R) -> [T; 2] {
        let (cx, cy) = cells[rng.random_range(0..cells.len())];
        let margin = 0.05;
        let span = 1.0 - 2.0 * margin;
        [
            T::c(cx as f64 + margin + span * rng.random::<f64>()),
            T::c(cy as f64 + margin + span * rng.random::<f64>()),
        ]
    }

    fn region(&self, kind: Cell) -> Vec<(usize, usize)> {
        match self.variant {
            MazeVariant::Hard => self.layout.cells_of(kind),
            MazeVariant::Uniform => (0..self.layout.height())
                .flat_map(|y| (0..self.layout.width()).map(move |x| (x, y)))
                .filter(|&(x, y)| !self.layout.cell(x, y).is_wall())
                .collect(),
        }
    }

    /// Moves along one axis, stopping flush against a wall cell.
    fn advance(&self, pos: T, other: T, vel: T, along_x: bool) -> (T, bool) {
        let target = pos + self.dt * vel;
        let (from, to) = (cell_of(pos), cell_of(target));
        if from == to {
            return (target, false);
        }
        let blocked = if along_x {
            self.layout.is_wall(to, cell_of(other))
        } else {
            self.layout.is_wall(cell_of(other), to)
        };
        if !blocked {
            return (target, false);
        }
        let edge = if to > from {
            T::c(to as f64) - T::c(1e-4)
        } else {
            T::c(from as f64)
        };
        (edge, true)
    }
}

fn cell_of<T: Scalar>(v: T) -> i64 {
    v.floor().to_i64().unwrap_or(i64::MIN)
}

impl<T: Scalar> Positions<T> for PointMaze<T> {
    fn state_position(&self, state: &Vec<T>) -> Vec<T> {
        state[..2].to_vec()
    }

    fn goal_position(&self, goal: &Vec<T>) -> Vec<T> {
        goal.clone()
    }
}

impl<T: Scalar> GoalEnv for PointMaze<T> {
    type State = Vec<T>;
    type Goal = Vec<T>;
    type Action = Vec<T>;

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<T> {
        let [x, y] = self.sample_in(&self.region(Cell::Start), rng);
        vec![x, y, T::zero(), T::zero()]
    }

    fn sample_goal<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<T> {
        self.sample_in(&self.region(Cell::Goal), rng).to_vec()
    }

    fn step<R: Rng + ?Sized>(&self, state: &Vec<T>, action: &Vec<T>, _rng: &mut R) -> Result<Vec<T>> {
        if state.len() != 4 {
            return Err(Error::Shape(format!("maze state has {} dims, expected 4", state.len())));
        }
        if action.len() != 2 || action.iter().any(|a| !a.is_finite()) {
            return Err(Error::Domain(format!("invalid maze action {action:?}")));
        }
        let clip = |v: T, lim: T| v.max(-lim).min(lim);
        let mut vx = clip(
            state[2] + self.dt * self.force_gain * clip(action[0], T::one()),
            self.max_speed,
        );
        let mut vy = clip(
            state[3] + self.dt * self.force_gain * clip(action[1], T::one()),
            self.max_speed,
        );
        let (x, hit_x) = self.advance(state[0], state[1], vx, true);
        if hit_x {
            vx = T::zero();
        }
        let (y, hit_y) = self.advance(state[1], x, vy, false);
        if hit_y {
            vy = T::zero();
        }
        Ok(vec![x, y, vx, vy])
    }

    fn goal_reached(&self, state: &Vec<T>, goal: &Vec<T>) -> bool {
        let dx = state[0] - goal[0];
        let dy = state[1] - goal[1];
        (dx * dx + dy * dy).sqrt() <= self.goal_radius
    }
}
