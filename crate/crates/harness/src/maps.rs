//! Fields drawn as heatmaps: gridworld visitation and learning signal, and
//! binned maze positions.

use fpg_core::divergence::Generator;
use fpg_core::envs::{GoalEnv, GridworldRoom, PointMaze, Positions, Trajectory};
use fpg_core::fpg::signal_from_log_ratio;
use fpg_core::policy::TabularSoftmax;
use fpg_core::visitation::{exact_visitation, GoalDensity};
use fpg_core::{Error, Result};

use crate::svg::{Heatmap, Marker};

/// Exact visitation over `s_1..s_T` of a gridworld policy.
pub fn exact_grid_visitation(room: &GridworldRoom, policy: &TabularSoftmax<f64>) -> Result<Vec<f64>> {
    let mdp = room.to_tabular::<f64>();
    let model = exact_visitation(
        &mdp,
        &policy.state_probs(room.goal_state())?,
        room.horizon(),
        None,
        false,
    )?;
    Ok(model.probs().expect("exact model").to_vec())
}

/// `f'(p(s) / p_g(s))` against the clipped-dirac goal density; `None` where `p(s) = 0`.
pub fn grid_fprimes(room: &GridworldRoom, visitation: &[f64], generator: Generator) -> Result<Vec<Option<f64>>> {
    if visitation.len() != room.n_states() {
        return Err(Error::Shape(format!(
            "{} visitation entries for {} states",
            visitation.len(),
            room.n_states()
        )));
    }
    let q = GoalDensity::<f64>::clipped_dirac(room.n_states()).distribution(room.goal_state())?;
    Ok(visitation
        .iter()
        .zip(q.probs())
        .map(|(&p, &qs)| (p > 0.0).then(|| signal_from_log_ratio(generator, p.ln() - qs.ln())))
        .collect())
}

fn grid_heatmap(room: &GridworldRoom, title: String, values: Vec<Option<f64>>) -> Heatmap {
    let cell = |s: usize| room.coords(s);
    Heatmap {
        title,
        width: room.width(),
        height: room.height(),
        values,
        walls: room.walls().copied().collect(),
        markers: vec![
            Marker {
                cell: cell(room.start_state()),
                label: "S".into(),
            },
            Marker {
                cell: cell(room.goal_state()),
                label: "G".into(),
            },
        ],
    }
}

pub fn visitation_heatmap(room: &GridworldRoom, visitation: &[f64], title: String) -> Result<Heatmap> {
    if visitation.len() != room.n_states() {
        return Err(Error::Shape("visitation does not match the grid".into()));
    }
    let values = visitation
        .iter()
        .enumerate()
        .map(|(s, &p)| (!room.is_wall(room.coords(s))).then_some(p))
        .collect();
    Ok(grid_heatmap(room, title, values))
}

/// The signal drawn as a reward, `-f'`, so high values mark where the agent is pushed to go.
/// Cells the visitation never reaches are left blank.
pub fn signal_heatmap(
    room: &GridworldRoom,
    visitation: &[f64],
    generator: Generator,
    title: String,
) -> Result<Heatmap> {
    let values = grid_fprimes(room, visitation, generator)?
        .into_iter()
        .enumerate()
        .map(|(s, f)| f.filter(|_| !room.is_wall(room.coords(s))).map(|v| -v))
        .collect();
    Ok(grid_heatmap(room, title, values))
}

/// Fraction of visited positions per sub-cell, `per_cell x per_cell` sub-cells per maze cell.
pub fn maze_position_heatmap<G, A>(
    maze: &PointMaze<f64>,
    trajectories: &[Trajectory<Vec<f64>, G, A, f64>],
    per_cell: usize,
    title: String,
) -> Result<Heatmap> {
    if per_cell == 0 {
        return Err(Error::Domain("per_cell must be positive".into()));
    }
    let layout = maze.layout();
    let (w, h) = (layout.width() * per_cell, layout.height() * per_cell);
    let mut counts = vec![0usize; w * h];
    let mut total = 0usize;
    for traj in trajectories {
        for s in traj.visited() {
            let pos = maze.state_position(s);
            let (x, y) = ((pos[0] * per_cell as f64).floor(), (pos[1] * per_cell as f64).floor());
            if x >= 0.0 && y >= 0.0 && (x as usize) < w && (y as usize) < h {
                counts[y as usize * w + x as usize] += 1;
                total += 1;
            }
        }
    }
    let mut walls = Vec::new();
    for (cx, cy) in layout.walls() {
        for dy in 0..per_cell {
            for dx in 0..per_cell {
                walls.push((cx * per_cell + dx, cy * per_cell + dy));
            }
        }
    }
    let values = counts
        .into_iter()
        .map(|c| Some(if total == 0 { 0.0 } else { c as f64 / total as f64 }))
        .collect();
    Ok(Heatmap {
        title,
        width: w,
        height: h,
        values,
        walls,
        markers: Vec::new(),
    })
}
