//! Generators for homomorphous families: slip gridworlds, a discretized
//! pendulum and a corridor whose members disagree at one state.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{self, HipMdpFamily, MdpExtras, TabularMdp};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    Gridworld,
    Pendulum,
    /// Corridor whose members swap the forward action at the state before the goal.
    OppositeAction,
}

/// Which physical constant the pendulum's dynamics parameters set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PendulumParam {
    #[default]
    Gravity,
    Friction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvSpec {
    pub kind: EnvKind,
    /// Grid width, or corridor length.
    pub width: usize,
    pub height: usize,
    /// Cells turned into walls, placed by `seed`.
    pub n_obstacles: usize,
    pub n_angle: usize,
    pub n_velocity: usize,
    pub n_torque: usize,
    pub max_velocity: f64,
    pub dt: f64,
    pub pendulum_param: PendulumParam,
    /// Gravity when friction varies.
    pub gravity: f64,
    /// Friction when gravity varies.
    pub friction: f64,
    /// One member per value: slip probability, gravity, friction or corridor pass probability.
    pub dynamics_params: Vec<f64>,
    pub gamma: f64,
    /// Weight of the action cost in the reward; the source of the declared λ1.
    pub action_cost_coeff: f64,
    pub seed: u64,
}

impl Default for EnvSpec {
    fn default() -> Self {
        Self {
            kind: EnvKind::Gridworld,
            width: 5,
            height: 5,
            n_obstacles: 0,
            n_angle: 15,
            n_velocity: 15,
            n_torque: 5,
            max_velocity: 4.0,
            dt: 0.1,
            pendulum_param: PendulumParam::Gravity,
            gravity: 10.0,
            friction: 0.0,
            dynamics_params: vec![0.0, 0.05, 0.1, 0.15, 0.2],
            gamma: 0.9,
            action_cost_coeff: 0.0,
            seed: 0,
        }
    }
}

impl EnvSpec {
    pub fn gridworld(slips: Vec<f64>) -> Self {
        Self { kind: EnvKind::Gridworld, dynamics_params: slips, ..Self::default() }
    }

    pub fn pendulum(gravities: Vec<f64>) -> Self {
        Self { kind: EnvKind::Pendulum, dynamics_params: gravities, gamma: 0.95, dt: 0.2, ..Self::default() }
    }

    pub fn opposite_action() -> Self {
        Self { kind: EnvKind::OppositeAction, width: 6, dynamics_params: vec![0.98, 0.02], ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dynamics_params.is_empty() {
            return Err(Error::InvalidArgument("dynamics_params must not be empty".into()));
        }
        if self.dynamics_params.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidArgument("dynamics_params must be finite".into()));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::InvalidArgument(format!("gamma must lie in (0,1), got {}", self.gamma)));
        }
        if !(self.action_cost_coeff.is_finite() && self.action_cost_coeff >= 0.0) {
            return Err(Error::InvalidArgument("action_cost_coeff must be finite and >= 0".into()));
        }
        Ok(())
    }

    pub fn build(&self) -> Result<HipMdpFamily> {
        match self.kind {
            EnvKind::Gridworld => make_gridworld_family(self),
            EnvKind::Pendulum => make_pendulum_family(self),
            EnvKind::OppositeAction => make_opposite_action_family(self),
        }
    }
}

/// Reject families whose members differ in reachability.
fn checked_family(members: Vec<TabularMdp>) -> Result<HipMdpFamily> {
    for m in &members[1..] {
        if !mdp::is_homomorphous(&members[0], m)? {
            return Err(Error::Generation("generated members are not homomorphous".into()));
        }
    }
    HipMdpFamily::new(members)
}

fn check_slips(spec: &EnvSpec) -> Result<()> {
    if spec.dynamics_params.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::InvalidArgument("slip probabilities must lie in [0,1]".into()));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Gridworld

/// Action displacements: up, down, left, right, stay.
pub const GRID_ACTIONS: [(i64, i64); 5] = [(0, 1), (0, -1), (-1, 0), (1, 0), (0, 0)];

/// `width × height` grid starting at `(0,0)` with an absorbing goal in the far corner.
///
/// A move goes where intended with probability `1 − slip` and to either
/// perpendicular neighbour with `slip/2`; moves into walls or obstacles stay put.
/// The reward is minus the Manhattan distance from the next cell to
/// the goal, minus `action_cost_coeff · ‖a‖₁`.
pub fn make_gridworld_family(spec: &EnvSpec) -> Result<HipMdpFamily> {
    spec.validate()?;
    check_slips(spec)?;
    let (w, h) = (spec.width, spec.height);
    if w * h < 2 {
        return Err(Error::InvalidArgument("gridworld needs at least two cells".into()));
    }
    let ns = w * h;
    let na = GRID_ACTIONS.len();
    let start = 0;
    let goal = ns - 1;

    let mut blocked = vec![false; ns];
    if spec.n_obstacles > 0 {
        let mut cells: Vec<usize> = (1..goal).collect();
        if spec.n_obstacles > cells.len() {
            return Err(Error::InvalidArgument("too many obstacles".into()));
        }
        let mut rng = rng::stream(spec.seed, "gridworld/obstacles");
        cells.shuffle(&mut rng);
        for &c in &cells[..spec.n_obstacles] {
            blocked[c] = true;
        }
    }

    let step = |s: usize, (dx, dy): (i64, i64)| -> usize {
        let (x, y) = ((s % w) as i64 + dx, (s / w) as i64 + dy);
        if x < 0 || y < 0 || x >= w as i64 || y >= h as i64 {
            return s;
        }
        let n = y as usize * w + x as usize;
        if blocked[n] {
            s
        } else {
            n
        }
    };

    // Goal must stay reachable from the start.
    let mut seen = vec![false; ns];
    let mut stack = vec![start];
    seen[start] = true;
    while let Some(s) = stack.pop() {
        for &d in &GRID_ACTIONS {
            let n = step(s, d);
            if !seen[n] {
                seen[n] = true;
                stack.push(n);
            }
        }
    }
    if !seen[goal] {
        return Err(Error::Generation("obstacles cut the goal off from the start".into()));
    }

    let c = spec.action_cost_coeff;
    let distance = |s: usize| ((w - 1 - s % w) + (h - 1 - s / w)) as f64;
    let mut reward = vec![0.0; ns * na * ns];
    for s in 0..ns {
        for (a, &(dx, dy)) in GRID_ACTIONS.iter().enumerate() {
            let cost = c * (dx.abs() + dy.abs()) as f64;
            for sn in 0..ns {
                reward[(s * na + a) * ns + sn] = -distance(sn) - cost;
            }
        }
    }
    let coords: Vec<Vec<f64>> = (0..ns).map(|s| vec![(s % w) as f64, (s / w) as f64]).collect();
    let action_coords: Vec<Vec<f64>> = GRID_ACTIONS.iter().map(|&(dx, dy)| vec![dx as f64, dy as f64]).collect();
    let mut rho0 = vec![0.0; ns];
    rho0[start] = 1.0;

    let members = spec
        .dynamics_params
        .iter()
        .map(|&slip| {
            let mut t = vec![0.0; ns * na * ns];
            for s in 0..ns {
                for (a, &(dx, dy)) in GRID_ACTIONS.iter().enumerate() {
                    let row = &mut t[(s * na + a) * ns..(s * na + a + 1) * ns];
                    if s == goal || blocked[s] {
                        row[s] = 1.0;
                        continue;
                    }
                    if (dx, dy) == (0, 0) {
                        row[s] = 1.0;
                        continue;
                    }
                    row[step(s, (dx, dy))] += 1.0 - slip;
                    row[step(s, (dy, dx))] += 0.5 * slip;
                    row[step(s, (-dy, -dx))] += 0.5 * slip;
                }
            }
            TabularMdp::new(
                ns,
                na,
                spec.gamma,
                t,
                reward.clone(),
                rho0.clone(),
                MdpExtras {
                    state_coords: Some(coords.clone()),
                    action_coords: Some(action_coords.clone()),
                    theta: Some(slip),
                    lambda1: Some(c),
                },
            )
        })
        .collect::<Result<Vec<_>>>()?;
    checked_family(members)
}

// ---------------------------------------------------------------------------
// Pendulum

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Nearest node of a symmetric grid around zero; exact ties go toward zero.
fn snap(x: f64, lo: f64, step: f64, n: usize) -> usize {
    let pos = ((x - lo) / step).clamp(0.0, (n - 1) as f64);
    let below = pos.floor();
    let frac = pos - below;
    let center = (n - 1) as f64 / 2.0;
    let idx = if (frac - 0.5).abs() < 1e-12 {
        if below < center {
            below + 1.0
        } else {
            below
        }
    } else {
        pos.round()
    };
    idx as usize
}

/// Angle index and action-free velocity offset (in bins) of one pendulum step.
pub struct PendulumGrid {
    pub angles: Vec<f64>,
    pub velocities: Vec<f64>,
    pub torques: Vec<f64>,
}

impl PendulumGrid {
    pub fn new(spec: &EnvSpec) -> Result<Self> {
        if spec.n_angle < 3 || spec.n_velocity < 3 || spec.n_torque < 2 {
            return Err(Error::InvalidArgument("pendulum needs at least 3 angle/velocity bins and 2 torques".into()));
        }
        if spec.n_angle % 2 == 0 || spec.n_velocity % 2 == 0 {
            return Err(Error::InvalidArgument("angle and velocity bin counts must be odd so zero is a node".into()));
        }
        if spec.n_velocity < spec.n_torque {
            return Err(Error::Generation("fewer velocity bins than torque levels leaves actions indistinguishable".into()));
        }
        if !(spec.max_velocity > 0.0 && spec.dt > 0.0) {
            return Err(Error::InvalidArgument("max_velocity and dt must be positive".into()));
        }
        Ok(Self {
            angles: linspace(-std::f64::consts::PI, std::f64::consts::PI, spec.n_angle),
            velocities: linspace(-spec.max_velocity, spec.max_velocity, spec.n_velocity),
            torques: linspace(-1.0, 1.0, spec.n_torque),
        })
    }

    pub fn n_states(&self) -> usize {
        self.angles.len() * self.velocities.len()
    }

    pub fn state(&self, i: usize, j: usize) -> usize {
        i * self.velocities.len() + j
    }
}

/// Discretized pendulum, angle measured from upright.
///
/// Each step snaps `θ + dt·ω` to the angle grid. The velocity moves by the
/// rounded gravity/friction offset plus one bin per torque level, and the
/// result is wrapped into the window of `n_torque` bins around the current
/// velocity, so every member reaches the same successors through a different
/// assignment of torques.
pub fn make_pendulum_family(spec: &EnvSpec) -> Result<HipMdpFamily> {
    spec.validate()?;
    let grid = PendulumGrid::new(spec)?;
    let (n_th, n_om, na) = (grid.angles.len(), grid.velocities.len(), grid.torques.len());
    let ns = grid.n_states();
    let d_th = grid.angles[1] - grid.angles[0];
    let d_om = grid.velocities[1] - grid.velocities[0];
    let half = (na / 2) as i64;
    let width = na as i64;

    let c = spec.action_cost_coeff;
    let mut coords = Vec::with_capacity(ns);
    let mut reward = vec![0.0; ns * na * ns];
    let mut rho0 = vec![1.0 / ns as f64; ns];
    rho0[0] = 1.0 - rho0[1..].iter().sum::<f64>();
    for (i, th) in grid.angles.iter().enumerate() {
        for (j, om) in grid.velocities.iter().enumerate() {
            let s = grid.state(i, j);
            coords.push(vec![*th, *om]);
            for (a, u) in grid.torques.iter().enumerate() {
                let r = -(th * th + 0.1 * om * om + c * u * u);
                reward[(s * na + a) * ns..(s * na + a + 1) * ns].fill(r);
            }
        }
    }
    let action_coords: Vec<Vec<f64>> = grid.torques.iter().map(|u| vec![*u]).collect();
    // Exact Lipschitz constant of `c·u²` on [−1, 1].
    let lambda1 = 2.0 * c;

    let members = spec
        .dynamics_params
        .iter()
        .map(|&param| {
            let (g, b) = match spec.pendulum_param {
                PendulumParam::Gravity => (param, spec.friction),
                PendulumParam::Friction => (spec.gravity, param),
            };
            let mut t = vec![0.0; ns * na * ns];
            for (i, th) in grid.angles.iter().enumerate() {
                for (j, om) in grid.velocities.iter().enumerate() {
                    let s = grid.state(i, j);
                    let i_next = snap(th + spec.dt * om, grid.angles[0], d_th, n_th);
                    let offset = (spec.dt * (g * th.sin() - b * om) / d_om).round() as i64;
                    let lo = (j as i64).clamp(half, n_om as i64 - 1 - half) - half;
                    for a in 0..na {
                        let ideal = j as i64 + offset + a as i64 - half;
                        let j_next = lo + (ideal - lo).rem_euclid(width);
                        t[(s * na + a) * ns + grid.state(i_next, j_next as usize)] = 1.0;
                    }
                }
            }
            TabularMdp::new(
                ns,
                na,
                spec.gamma,
                t,
                reward.clone(),
                rho0.clone(),
                MdpExtras {
                    state_coords: Some(coords.clone()),
                    action_coords: Some(action_coords.clone()),
                    theta: Some(param),
                    lambda1: Some(lambda1),
                },
            )
        })
        .collect::<Result<Vec<_>>>()?;
    checked_family(members)
}

// ---------------------------------------------------------------------------
// Opposite-action corridor

/// Per-step penalty per cell of distance to the goal in the corridor.
pub const CORRIDOR_DISTANCE_COST: f64 = 0.01;
/// Probability that the wrong action at the bottleneck leads to the member's less likely outcome.
const BOTTLENECK_LEAK: f64 = 0.01;

/// Corridor of `width` cells from `0` to an absorbing goal at `width − 1`,
/// with actions left and right. Each step pays minus
/// `CORRIDOR_DISTANCE_COST` times the next cell's distance to the goal, minus
/// `action_cost_coeff`.
///
/// A member's parameter is the probability that the cell two steps before
/// the goal lets the agent through (any action); otherwise it falls back one
/// cell. At the bottleneck (the cell next to the goal) even-indexed members
/// advance with right and drop back to the start with left. Odd-indexed
/// members advance with left, and right leaves them in place. The two
/// wrong-action outcomes are each mixed with `BOTTLENECK_LEAK` of the other,
/// so every member reaches the same cells.
pub fn make_opposite_action_family(spec: &EnvSpec) -> Result<HipMdpFamily> {
    spec.validate()?;
    if spec.dynamics_params.iter().any(|p| !(*p > 0.0 && *p <= 1.0)) {
        return Err(Error::InvalidArgument("pass probabilities must lie in (0,1]".into()));
    }
    let n = spec.width;
    if n < 4 {
        return Err(Error::InvalidArgument("corridor needs at least four cells".into()));
    }
    let (goal, bottleneck, gate) = (n - 1, n - 2, n - 3);
    let na = 2;
    let c = spec.action_cost_coeff;
    let mut reward = vec![0.0; n * na * n];
    for s in 0..goal {
        for a in 0..na {
            for sn in 0..n {
                reward[(s * na + a) * n + sn] = -CORRIDOR_DISTANCE_COST * (goal - sn) as f64 - c;
            }
        }
    }
    let coords: Vec<Vec<f64>> = (0..n).map(|x| vec![x as f64]).collect();
    let mut rho0 = vec![0.0; n];
    rho0[0] = 1.0;

    let members = spec
        .dynamics_params
        .iter()
        .enumerate()
        .map(|(idx, &pass)| {
            let swapped = idx % 2 == 1;
            let mut t = vec![0.0; n * na * n];
            for s in 0..n {
                for a in 0..na {
                    let row = &mut t[(s * na + a) * n..(s * na + a + 1) * n];
                    if s == goal {
                        row[s] = 1.0;
                    } else if s == gate {
                        row[s + 1] += pass;
                        row[s.saturating_sub(1)] += 1.0 - pass;
                    } else if s == bottleneck {
                        let forward = (a == 1) != swapped;
                        if forward {
                            row[goal] = 1.0;
                        } else {
                            let (likely, unlikely) = if swapped { (s, 0) } else { (0, s) };
                            row[likely] += 1.0 - BOTTLENECK_LEAK;
                            row[unlikely] += BOTTLENECK_LEAK;
                        }
                    } else if a == 1 {
                        row[s + 1] = 1.0;
                    } else {
                        row[s.saturating_sub(1)] = 1.0;
                    }
                }
            }
            TabularMdp::new(
                n,
                na,
                spec.gamma,
                t,
                reward.clone(),
                rho0.clone(),
                MdpExtras {
                    state_coords: Some(coords.clone()),
                    action_coords: Some(vec![vec![-1.0], vec![1.0]]),
                    theta: Some(pass),
                    lambda1: Some(0.0),
                },
            )
        })
        .collect::<Result<Vec<_>>>()?;
    checked_family(members)
}
