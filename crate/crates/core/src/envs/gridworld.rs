use std::collections::{BTreeSet, VecDeque};

use rand::Rng;

use super::{Cell, GoalEnv, Layout, Positions, TabularMdp};
use crate::divergence::FiniteDistribution;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// The four moves. `Up` decreases the row index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridAction {
    Left = 0,
    Up = 1,
    Right = 2,
    Down = 3,
}

impl GridAction {
    pub const ALL: [GridAction; 4] = [GridAction::Left, GridAction::Up, GridAction::Right, GridAction::Down];

    pub fn from_index(a: usize) -> Result<Self> {
        Self::ALL
            .get(a)
            .copied()
            .ok_or_else(|| Error::Domain(format!("grid action {a} out of range 0..4")))
    }

    fn delta(self) -> (i64, i64) {
        match self {
            GridAction::Left => (-1, 0),
            GridAction::Up => (0, -1),
            GridAction::Right => (1, 0),
            GridAction::Down => (0, 1),
        }
    }
}

/// Deterministic 4-neighbour gridworld with a walled room around the goal.
///
/// States are cell indices `y * width + x`. Moves into walls or off the grid
/// leave the agent in place.
#[derive(Debug, Clone, PartialEq)]
pub struct GridworldRoom {
    width: usize,
    height: usize,
    walls: BTreeSet<(usize, usize)>,
    start: (usize, usize),
    goal: (usize, usize),
    horizon: usize,
}

impl GridworldRoom {
    pub fn new(
        width: usize,
        height: usize,
        walls: impl IntoIterator<Item = (usize, usize)>,
        start: (usize, usize),
        goal: (usize, usize),
        horizon: usize,
    ) -> Result<Self> {
        let walls: BTreeSet<_> = walls.into_iter().collect();
        let inside = |(x, y): (usize, usize)| x < width && y < height;
        if width == 0 || height == 0 || horizon == 0 {
            return Err(Error::Domain("grid dimensions and horizon must be positive".into()));
        }
        if let Some(w) = walls.iter().find(|&&c| !inside(c)) {
            return Err(Error::Domain(format!("wall {w:?} outside the grid")));
        }
        for (name, cell) in [("start", start), ("goal", goal)] {
            if !inside(cell) || walls.contains(&cell) {
                return Err(Error::Domain(format!(
                    "{name} cell {cell:?} must be a free in-grid cell"
                )));
            }
        }
        Ok(Self {
            width,
            height,
            walls,
            start,
            goal,
            horizon,
        })
    }

    /// 20x20 grid; the goal sits in a 3x3 room in the top-right quadrant whose
    /// only opening faces away from the start cell below it. The goal takes the
    /// room corner nearest the start, so walls let the agent stay on it.
    pub fn room(horizon: usize) -> Self {
        let (x0, x1, y0, y1) = (12, 16, 3, 7);
        let opening = (14, y0);
        let mut walls = Vec::new();
        for x in x0..=x1 {
            for y in y0..=y1 {
                let ring = x == x0 || x == x1 || y == y0 || y == y1;
                if ring && (x, y) != opening {
                    walls.push((x, y));
                }
            }
        }
        Self::new(20, 20, walls, (14, 12), (13, 6), horizon).expect("valid built-in room")
    }

    /// Same grid, start and goal without the room walls.
    pub fn open(horizon: usize) -> Self {
        let room = Self::room(horizon);
        Self::new(20, 20, [], room.start, room.goal, horizon).expect("valid open grid")
    }

    /// Gridworld from a text layout; exactly one `S` and one `G` cell are allowed.
    pub fn from_layout(layout: &Layout, horizon: usize) -> Result<Self> {
        let starts = layout.cells_of(Cell::Start);
        let goals = layout.cells_of(Cell::Goal);
        if starts.len() != 1 || goals.len() != 1 {
            return Err(Error::Domain("gridworld layouts need exactly one S and one G".into()));
        }
        Self::new(
            layout.width(),
            layout.height(),
            layout.walls(),
            starts[0],
            goals[0],
            horizon,
        )
    }

    pub fn to_layout(&self) -> Layout {
        let mut cells = vec![Cell::Free; self.width * self.height];
        for &(x, y) in &self.walls {
            cells[y * self.width + x] = Cell::Wall;
        }
        cells[self.start.1 * self.width + self.start.0] = Cell::Start;
        cells[self.goal.1 * self.width + self.goal.0] = Cell::Goal;
        Layout::new(self.width, self.height, cells).expect("consistent layout")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn n_states(&self) -> usize {
        self.width * self.height
    }

    pub fn index(&self, (x, y): (usize, usize)) -> usize {
        y * self.width + x
    }

    pub fn coords(&self, s: usize) -> (usize, usize) {
        (s % self.width, s / self.width)
    }

    pub fn start_state(&self) -> usize {
        self.index(self.start)
    }

    pub fn goal_state(&self) -> usize {
        self.index(self.goal)
    }

    pub fn is_wall(&self, cell: (usize, usize)) -> bool {
        self.walls.contains(&cell)
    }

    pub fn walls(&self) -> impl Iterator<Item = &(usize, usize)> {
        self.walls.iter()
    }

    pub fn with_horizon(mut self, horizon: usize) -> Self {
        self.horizon = horizon.max(1);
        self
    }

    pub fn move_cell(&self, s: usize, action: GridAction) -> usize {
        let (x, y) = self.coords(s);
        let (dx, dy) = action.delta();
        let (nx, ny) = (x as i64 + dx, y as i64 + dy);
        if nx < 0 || ny < 0 || nx >= self.width as i64 || ny >= self.height as i64 {
            return s;
        }
        let next = (nx as usize, ny as usize);
        if self.walls.contains(&next) {
            s
        } else {
            self.index(next)
        }
    }

    /// Breadth-first distances (in moves) from `from` to every cell; `None` when unreachable.
    pub fn distances_from(&self, from: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.n_states()];
        let mut queue = VecDeque::from([from]);
        dist[from] = Some(0);
        while let Some(s) = queue.pop_front() {
            let d = dist[s].unwrap_or(0);
            for a in GridAction::ALL {
                let n = self.move_cell(s, a);
                if dist[n].is_none() {
                    dist[n] = Some(d + 1);
                    queue.push_back(n);
                }
            }
        }
        dist
    }

    /// One shortest start-to-goal path, as state indices.
    pub fn shortest_path(&self) -> Option<Vec<usize>> {
        let goal = self.goal_state();
        let dist = self.distances_from(goal);
        let mut s = self.start_state();
        dist[s]?;
        let mut path = vec![s];
        while s != goal {
            let d = dist[s]?;
            s = GridAction::ALL
                .iter()
                .map(|&a| self.move_cell(s, a))
                .find(|&n| dist[n] == Some(d - 1))?;
            path.push(s);
        }
        Some(path)
    }

    pub fn to_tabular<T: Scalar>(&self) -> TabularMdp<T> {
        let next: Vec<Vec<usize>> = (0..self.n_states())
            .map(|s| GridAction::ALL.iter().map(|&a| self.move_cell(s, a)).collect())
            .collect();
        let n = self.n_states();
        let dirac = |i: usize| {
            let mut v = vec![T::zero(); n];
            v[i] = T::one();
            FiniteDistribution::new(v).expect("dirac")
        };
        TabularMdp::deterministic(&next, dirac(self.start_state()), dirac(self.goal_state()), self.horizon)
            .expect("grid dynamics are valid")
    }
}

impl<T: Scalar> Positions<T> for GridworldRoom {
    fn state_position(&self, state: &usize) -> Vec<T> {
        let (x, y) = self.coords(*state);
        vec![T::from_usize_lossy(x), T::from_usize_lossy(y)]
    }

    fn goal_position(&self, goal: &usize) -> Vec<T> {
        self.state_position(goal)
    }
}

impl GoalEnv for GridworldRoom {
    type State = usize;
    type Goal = usize;
    type Action = usize;

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn sample_initial<R: Rng + ?Sized>(&self, _rng: &mut R) -> usize {
        self.start_state()
    }

    fn sample_goal<R: Rng + ?Sized>(&self, _rng: &mut R) -> usize {
        self.goal_state()
    }

    fn step<R: Rng + ?Sized>(&self, state: &usize, action: &usize, _rng: &mut R) -> Result<usize> {
        if *state >= self.n_states() {
            return Err(Error::Domain(format!("state {state} out of range")));
        }
        Ok(self.move_cell(*state, GridAction::from_index(*action)?))
    }

    fn goal_reached(&self, state: &usize, goal: &usize) -> bool {
        state == goal
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn moves_and_blocking() {
        let g = GridworldRoom::room(50);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = g.index((1, 1));
        assert_eq!(g.step(&s, &2, &mut rng).unwrap(), g.index((2, 1)));
        // (14, 8) sits directly under the bottom wall of the room
        let below = g.index((14, 8));
        assert_eq!(g.step(&below, &(GridAction::Up as usize), &mut rng).unwrap(), below);
        // grid boundary
        let corner = g.index((0, 0));
        assert_eq!(g.step(&corner, &0, &mut rng).unwrap(), corner);
        assert!(g.step(&corner, &4, &mut rng).is_err());
    }

    #[test]
    fn goal_is_enclosed_except_one_opening() {
        let g = GridworldRoom::room(50);
        let (gx, gy) = g.goal;
        // every interior cell of the room is free, the ring has exactly one gap
        let ring: Vec<_> = (12..=16)
            .flat_map(|x| (3..=7).map(move |y| (x, y)))
            .filter(|&(x, y)| x == 12 || x == 16 || y == 3 || y == 7)
            .collect();
        let gaps: Vec<_> = ring.iter().filter(|c| !g.is_wall(**c)).collect();
        assert_eq!(gaps, vec![&(14, 3)]);
        assert!(!g.is_wall((gx, gy)));
        // the opening faces away from the start
        assert!(g.start.1 > gy);
    }

    #[test]
    fn reachable_only_through_the_opening() {
        let g = GridworldRoom::room(50);
        let path = g.shortest_path().expect("goal reachable");
        assert!(path.contains(&g.index((14, 3))));
        // no step of the path crosses a wall
        for w in path.windows(2) {
            let (a, b) = (g.coords(w[0]), g.coords(w[1]));
            let manhattan = a.0.abs_diff(b.0) + a.1.abs_diff(b.1);
            assert_eq!(manhattan, 1);
            assert!(!g.is_wall(b));
        }
        let open = GridworldRoom::open(50);
        assert!(open.shortest_path().unwrap().len() < path.len());
    }

    #[test]
    fn layout_round_trip() {
        let g = GridworldRoom::room(30);
        let again = GridworldRoom::from_layout(&g.to_layout(), 30).unwrap();
        assert_eq!(again, g);
    }

    #[test]
    fn tabular_view_agrees() {
        let g = GridworldRoom::room(10);
        let mdp = g.to_tabular::<f64>();
        for s in [0, 57, 399, g.start_state()] {
            for a in 0..4 {
                let s2 = g.move_cell(s, GridAction::from_index(a).unwrap());
                assert_eq!(mdp.transition(s, a, s2), 1.0);
            }
        }
    }
}
