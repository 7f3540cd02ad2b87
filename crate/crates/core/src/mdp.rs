//! Finite MDPs, hidden-parameter families and their structural predicates.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::solvers;

/// Tolerance for "row sums to one".
pub const STOCHASTIC_TOL: f64 = 1e-12;
/// A transition probability counts as an edge when strictly above this.
pub const EDGE_TOL: f64 = 1e-12;

/// One nonzero entry of a transition row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub next: usize,
    pub prob: f64,
    pub reward: f64,
}

/// A finite MDP with dense transition and reward tensors indexed `[s][a][s']`.
#[derive(Debug, Clone)]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    gamma: f64,
    transition: Vec<f64>,
    reward: Vec<f64>,
    rho0: Vec<f64>,
    state_coords: Option<Vec<Vec<f64>>>,
    action_coords: Option<Vec<Vec<f64>>>,
    theta: Option<f64>,
    lambda1: Option<f64>,
    edges: Vec<Vec<Edge>>,
}

impl PartialEq for TabularMdp {
    fn eq(&self, other: &Self) -> bool {
        self.n_states == other.n_states
            && self.n_actions == other.n_actions
            && self.gamma == other.gamma
            && self.transition == other.transition
            && self.reward == other.reward
            && self.rho0 == other.rho0
            && self.state_coords == other.state_coords
            && self.action_coords == other.action_coords
            && self.theta == other.theta
            && self.lambda1 == other.lambda1
    }
}

/// Builder-style optional parts of a [`TabularMdp`].
#[derive(Debug, Clone, Default)]
pub struct MdpExtras {
    pub state_coords: Option<Vec<Vec<f64>>>,
    pub action_coords: Option<Vec<Vec<f64>>>,
    pub theta: Option<f64>,
    /// Declared Lipschitz constant of the reward with respect to the action.
    pub lambda1: Option<f64>,
}

impl TabularMdp {
    /// Build and validate an MDP. `transition` and `reward` are flat `[s][a][s']` tensors.
    pub fn new(
        n_states: usize,
        n_actions: usize,
        gamma: f64,
        transition: Vec<f64>,
        reward: Vec<f64>,
        rho0: Vec<f64>,
        extras: MdpExtras,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::Structure("MDP needs at least one state and one action".into()));
        }
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::InvalidArgument(format!("gamma must lie in (0,1), got {gamma}")));
        }
        let len = n_states * n_actions * n_states;
        if transition.len() != len || reward.len() != len {
            return Err(Error::Structure(format!(
                "expected {len} transition/reward entries, got {}/{}",
                transition.len(),
                reward.len()
            )));
        }
        if rho0.len() != n_states {
            return Err(Error::Structure("rho0 length differs from n_states".into()));
        }
        for (i, row) in transition.chunks(n_states).enumerate() {
            if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(Error::Structure(format!(
                    "transition row (s={}, a={}) has a negative or non-finite entry",
                    i / n_actions,
                    i % n_actions
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::Structure(format!(
                    "transition row (s={}, a={}) sums to {sum}",
                    i / n_actions,
                    i % n_actions
                )));
            }
        }
        if reward.iter().any(|r| !r.is_finite()) {
            return Err(Error::Structure("reward tensor has a non-finite entry".into()));
        }
        if rho0.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::Structure("rho0 has a negative or non-finite entry".into()));
        }
        let rho_sum: f64 = rho0.iter().sum();
        if (rho_sum - 1.0).abs() > STOCHASTIC_TOL {
            return Err(Error::Structure(format!("rho0 sums to {rho_sum}")));
        }
        if let Some(coords) = &extras.state_coords {
            if coords.len() != n_states {
                return Err(Error::Structure("state_coords length differs from n_states".into()));
            }
            let dim = coords[0].len();
            if coords.iter().any(|c| c.len() != dim || c.iter().any(|x| !x.is_finite())) {
                return Err(Error::Structure("state_coords must be finite with a common dimension".into()));
            }
        }
        if let Some(coords) = &extras.action_coords {
            if coords.len() != n_actions {
                return Err(Error::Structure("action_coords length differs from n_actions".into()));
            }
            let dim = coords[0].len();
            if coords.iter().any(|c| c.len() != dim) {
                return Err(Error::Structure("action_coords must share a dimension".into()));
            }
            if coords.iter().flatten().any(|x| !(-1.0..=1.0).contains(x)) {
                return Err(Error::Structure("action_coords must lie in [-1, 1]".into()));
            }
        }
        if let Some(l1) = extras.lambda1 {
            if !(l1.is_finite() && l1 >= 0.0) {
                return Err(Error::InvalidArgument("lambda1 must be finite and nonnegative".into()));
            }
        }

        let edges = (0..n_states * n_actions)
            .map(|sa| {
                let base = sa * n_states;
                (0..n_states)
                    .filter(|&sn| transition[base + sn] > 0.0)
                    .map(|sn| Edge { next: sn, prob: transition[base + sn], reward: reward[base + sn] })
                    .collect()
            })
            .collect();

        Ok(Self {
            n_states,
            n_actions,
            gamma,
            transition,
            reward,
            rho0,
            state_coords: extras.state_coords,
            action_coords: extras.action_coords,
            theta: extras.theta,
            lambda1: extras.lambda1,
            edges,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn rho0(&self) -> &[f64] {
        &self.rho0
    }

    pub fn theta(&self) -> Option<f64> {
        self.theta
    }

    pub fn declared_lambda1(&self) -> Option<f64> {
        self.lambda1
    }

    pub fn state_coords(&self) -> Option<&[Vec<f64>]> {
        self.state_coords.as_deref()
    }

    pub fn action_coords(&self) -> Option<&[Vec<f64>]> {
        self.action_coords.as_deref()
    }

    #[inline]
    fn idx(&self, s: usize, a: usize, sn: usize) -> usize {
        (s * self.n_actions + a) * self.n_states + sn
    }

    pub fn p(&self, s: usize, a: usize, sn: usize) -> f64 {
        self.transition[self.idx(s, a, sn)]
    }

    pub fn r(&self, s: usize, a: usize, sn: usize) -> f64 {
        self.reward[self.idx(s, a, sn)]
    }

    pub fn transition(&self) -> &[f64] {
        &self.transition
    }

    pub fn reward(&self) -> &[f64] {
        &self.reward
    }

    /// Nonzero entries of `P[s][a][·]` with their rewards.
    #[inline]
    pub fn edges(&self, s: usize, a: usize) -> &[Edge] {
        &self.edges[s * self.n_actions + a]
    }

    /// Expected immediate reward `Σ_s' P r`.
    pub fn expected_reward(&self, s: usize, a: usize) -> f64 {
        self.edges(s, a).iter().map(|e| e.prob * e.reward).sum()
    }

    /// Largest absolute reward entry.
    pub fn r_max(&self) -> f64 {
        self.reward.iter().fold(0.0, |m, r| m.max(r.abs()))
    }

    pub fn is_deterministic(&self) -> bool {
        self.edges.iter().all(|row| row.len() == 1)
    }

    /// Next state of a deterministic `(s, a)`; `None` when the row is stochastic.
    pub fn successor(&self, s: usize, a: usize) -> Option<usize> {
        match self.edges(s, a) {
            [e] => Some(e.next),
            _ => None,
        }
    }

    /// Same MDP with the reward tensor replaced.
    pub fn with_reward(&self, reward: Vec<f64>) -> Result<Self> {
        Self::new(
            self.n_states,
            self.n_actions,
            self.gamma,
            self.transition.clone(),
            reward,
            self.rho0.clone(),
            self.extras(),
        )
    }

    /// Same MDP with a different initial distribution.
    pub fn with_rho0(&self, rho0: Vec<f64>) -> Result<Self> {
        Self::new(
            self.n_states,
            self.n_actions,
            self.gamma,
            self.transition.clone(),
            self.reward.clone(),
            rho0,
            self.extras(),
        )
    }

    pub fn extras(&self) -> MdpExtras {
        MdpExtras {
            state_coords: self.state_coords.clone(),
            action_coords: self.action_coords.clone(),
            theta: self.theta,
            lambda1: self.lambda1,
        }
    }

    fn check_same_spaces(&self, other: &Self) -> Result<()> {
        if self.n_states != other.n_states || self.n_actions != other.n_actions {
            return Err(Error::Structure(format!(
                "dimension mismatch: ({}, {}) vs ({}, {})",
                self.n_states, self.n_actions, other.n_states, other.n_actions
            )));
        }
        Ok(())
    }

    /// Reachability indicator `Σ_a P[s][a][s'] > EDGE_TOL`, flattened `[s][s']`.
    pub fn reachability(&self) -> Vec<bool> {
        let n = self.n_states;
        let mut reach = vec![false; n * n];
        for s in 0..n {
            for sn in 0..n {
                let mass: f64 = (0..self.n_actions).map(|a| self.p(s, a, sn)).sum();
                reach[s * n + sn] = mass > EDGE_TOL;
            }
        }
        reach
    }
}

// ---------------------------------------------------------------------------
// JSON documents

/// Serialized form of a [`TabularMdp`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MdpDoc {
    pub n_states: usize,
    pub n_actions: usize,
    pub gamma: f64,
    pub rho0: Vec<f64>,
    pub transition: Vec<Vec<Vec<f64>>>,
    pub reward: Vec<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state_coords: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action_coords: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda1: Option<f64>,
}

fn nest(flat: &[f64], ns: usize, na: usize) -> Vec<Vec<Vec<f64>>> {
    flat.chunks(na * ns)
        .map(|per_s| per_s.chunks(ns).map(<[f64]>::to_vec).collect())
        .collect()
}

fn flatten(nested: &[Vec<Vec<f64>>], ns: usize, na: usize, what: &str) -> Result<Vec<f64>> {
    if nested.len() != ns || nested.iter().any(|r| r.len() != na || r.iter().any(|x| x.len() != ns)) {
        return Err(Error::Structure(format!("{what} must have shape [{ns}][{na}][{ns}]")));
    }
    Ok(nested.iter().flatten().flatten().copied().collect())
}

impl From<&TabularMdp> for MdpDoc {
    fn from(m: &TabularMdp) -> Self {
        MdpDoc {
            n_states: m.n_states,
            n_actions: m.n_actions,
            gamma: m.gamma,
            rho0: m.rho0.clone(),
            transition: nest(&m.transition, m.n_states, m.n_actions),
            reward: nest(&m.reward, m.n_states, m.n_actions),
            state_coords: m.state_coords.clone(),
            action_coords: m.action_coords.clone(),
            theta: m.theta,
            lambda1: m.lambda1,
        }
    }
}

impl TryFrom<MdpDoc> for TabularMdp {
    type Error = Error;

    fn try_from(doc: MdpDoc) -> Result<Self> {
        let transition = flatten(&doc.transition, doc.n_states, doc.n_actions, "transition")?;
        let reward = flatten(&doc.reward, doc.n_states, doc.n_actions, "reward")?;
        TabularMdp::new(
            doc.n_states,
            doc.n_actions,
            doc.gamma,
            transition,
            reward,
            doc.rho0,
            MdpExtras {
                state_coords: doc.state_coords,
                action_coords: doc.action_coords,
                theta: doc.theta,
                lambda1: doc.lambda1,
            },
        )
    }
}

impl TabularMdp {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&MdpDoc::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: MdpDoc = serde_json::from_str(text)?;
        doc.try_into()
    }
}

// ---------------------------------------------------------------------------
// Families

/// A hidden-parameter family: members share everything except the dynamics.
#[derive(Debug, Clone, PartialEq)]
pub struct HipMdpFamily {
    members: Vec<TabularMdp>,
    theta_labels: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct FamilyDoc {
    #[serde(default = "default_true")]
    shared_check: bool,
    members: Vec<MdpDoc>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum FamilyInput {
    Object(FamilyDoc),
    Array(Vec<MdpDoc>),
}

fn default_true() -> bool {
    true
}

impl HipMdpFamily {
    /// Build a family and check that members share spaces, reward, gamma and rho0.
    pub fn new(members: Vec<TabularMdp>) -> Result<Self> {
        let family = Self::new_unchecked(members)?;
        family.check_shared()?;
        Ok(family)
    }

    /// Build without the shared-structure check (used when loading with `shared_check: false`).
    pub fn new_unchecked(members: Vec<TabularMdp>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::Structure("family must have at least one member".into()));
        }
        let theta_labels = members
            .iter()
            .enumerate()
            .map(|(i, m)| m.theta.unwrap_or(i as f64))
            .collect();
        Ok(Self { members, theta_labels })
    }

    pub fn check_shared(&self) -> Result<()> {
        let first = &self.members[0];
        for (i, m) in self.members.iter().enumerate().skip(1) {
            first.check_same_spaces(m)?;
            if m.gamma != first.gamma {
                return Err(Error::Structure(format!("member {i} has a different gamma")));
            }
            if m.rho0 != first.rho0 {
                return Err(Error::Structure(format!("member {i} has a different rho0")));
            }
            if m.reward != first.reward {
                return Err(Error::Structure(format!("member {i} has a different reward tensor")));
            }
        }
        Ok(())
    }

    pub fn members(&self) -> &[TabularMdp] {
        &self.members
    }

    pub fn member(&self, i: usize) -> &TabularMdp {
        &self.members[i]
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn theta_labels(&self) -> &[f64] {
        &self.theta_labels
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = FamilyDoc {
            shared_check: true,
            members: self.members.iter().map(MdpDoc::from).collect(),
        };
        Ok(serde_json::to_string(&doc)?)
    }

    /// Accepts either `{"shared_check": bool, "members": [...]}` or a bare array of members.
    pub fn from_json(text: &str) -> Result<Self> {
        let (shared_check, docs) = match serde_json::from_str::<FamilyInput>(text)? {
            FamilyInput::Object(doc) => (doc.shared_check, doc.members),
            FamilyInput::Array(docs) => (true, docs),
        };
        let members = docs.into_iter().map(TabularMdp::try_from).collect::<Result<Vec<_>>>()?;
        if shared_check {
            Self::new(members)
        } else {
            Self::new_unchecked(members)
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

// ---------------------------------------------------------------------------
// Structural predicates

/// Same state-to-state reachability support.
pub fn is_homomorphous(m1: &TabularMdp, m2: &TabularMdp) -> Result<bool> {
    m1.check_same_spaces(m2)?;
    Ok(m1.reachability() == m2.reachability())
}

/// Which distance [`dynamics_distance`] uses for a pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftNorm {
    /// Euclidean distance between deterministic next-state coordinates.
    EuclideanCoords,
    /// Total-variation distance between next-state distributions.
    TotalVariation,
}

pub fn shift_norm(m1: &TabularMdp, m2: &TabularMdp) -> ShiftNorm {
    if m1.is_deterministic() && m2.is_deterministic() {
        ShiftNorm::EuclideanCoords
    } else {
        ShiftNorm::TotalVariation
    }
}

pub fn euclidean(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

pub fn l1(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b).abs()).sum()
}

/// Per-`(s, a)` shift between two members, flattened `[s][a]`.
pub fn pointwise_shift(m1: &TabularMdp, m2: &TabularMdp) -> Result<Vec<f64>> {
    m1.check_same_spaces(m2)?;
    let (ns, na) = (m1.n_states, m1.n_actions);
    let mut out = Vec::with_capacity(ns * na);
    match shift_norm(m1, m2) {
        ShiftNorm::EuclideanCoords => {
            let coords = m1.state_coords().ok_or(Error::MissingCoords)?;
            for s in 0..ns {
                for a in 0..na {
                    let n1 = m1.successor(s, a).expect("deterministic");
                    let n2 = m2.successor(s, a).expect("deterministic");
                    out.push(euclidean(&coords[n1], &coords[n2]));
                }
            }
        }
        ShiftNorm::TotalVariation => {
            for s in 0..ns {
                for a in 0..na {
                    let tv: f64 = (0..ns).map(|sn| (m1.p(s, a, sn) - m2.p(s, a, sn)).abs()).sum();
                    out.push(0.5 * tv);
                }
            }
        }
    }
    Ok(out)
}

/// Smallest `ε_m` with `m2` in the closed ε-neighbourhood of `m1`.
pub fn dynamics_distance(m1: &TabularMdp, m2: &TabularMdp) -> Result<f64> {
    Ok(pointwise_shift(m1, m2)?.into_iter().fold(0.0, f64::max))
}

// ---------------------------------------------------------------------------
// Lipschitz constants

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LipschitzConstants {
    /// Reward Lipschitz constant with respect to the action.
    pub lambda1: f64,
    /// Inverse Lipschitz constant of the dynamics with respect to the action.
    pub lambda2: f64,
    pub r_max: f64,
}

impl LipschitzConstants {
    pub fn new(lambda1: f64, lambda2: f64, r_max: f64) -> Result<Self> {
        for (name, v) in [("lambda1", lambda1), ("lambda2", lambda2), ("r_max", r_max)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidArgument(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(Self { lambda1, lambda2, r_max })
    }

    /// Element-wise maximum, valid for both members of a pair.
    pub fn max(self, other: Self) -> Self {
        Self {
            lambda1: self.lambda1.max(other.lambda1),
            lambda2: self.lambda2.max(other.lambda2),
            r_max: self.r_max.max(other.r_max),
        }
    }
}

/// Exact Lipschitz constant of a tabular reward in the action:
/// `max |r(s,a1,s') - r(s,a2,s')| / ‖a1 - a2‖₁` over all entries.
pub fn reward_lipschitz_scan(m: &TabularMdp) -> Result<f64> {
    let acoords = m.action_coords().ok_or_else(|| Error::InvalidArgument("action_coords required".into()))?;
    let mut best: f64 = 0.0;
    for s in 0..m.n_states {
        for a1 in 0..m.n_actions {
            for a2 in (a1 + 1)..m.n_actions {
                let da = l1(&acoords[a1], &acoords[a2]);
                for sn in 0..m.n_states {
                    let dr = (m.r(s, a1, sn) - m.r(s, a2, sn)).abs();
                    if dr > 0.0 {
                        if da == 0.0 {
                            return Err(Error::Domain("coincident actions with different rewards".into()));
                        }
                        best = best.max(dr / da);
                    }
                }
            }
        }
    }
    Ok(best)
}

/// λ1 as declared by the environment, falling back to the exact tabular scan.
pub fn lambda1_of(m: &TabularMdp) -> Result<f64> {
    match m.lambda1 {
        Some(l) => Ok(l),
        None => reward_lipschitz_scan(m),
    }
}

fn lipschitz_inputs(m: &TabularMdp) -> Result<(&[Vec<f64>], &[Vec<f64>])> {
    let scoords = m.state_coords().ok_or(Error::MissingCoords)?;
    let acoords = m.action_coords().ok_or_else(|| Error::InvalidArgument("action_coords required".into()))?;
    if !m.is_deterministic() {
        return Err(Error::Domain("Lipschitz estimation needs deterministic dynamics".into()));
    }
    Ok((scoords, acoords))
}

/// Sampled estimate of the Lipschitz constants.
///
/// Each sample draws `(s, a)` uniformly and compares `a` against every other
/// action within L1 distance `perturbation`; λ2 is the largest
/// `‖Δa‖₁ / ‖Δs'‖₂` over pairs whose next states differ.
pub fn estimate_lipschitz(
    m: &TabularMdp,
    n_samples: usize,
    perturbation: f64,
    rng_seed: u64,
) -> Result<LipschitzConstants> {
    if n_samples == 0 || !(perturbation > 0.0) {
        return Err(Error::InvalidArgument("n_samples and perturbation must be positive".into()));
    }
    let (scoords, acoords) = lipschitz_inputs(m)?;
    let mut rng = rng::stream(rng_seed, "estimate_lipschitz");
    let mut lambda2: Option<f64> = None;
    for _ in 0..n_samples {
        let s = rng.gen_range(0..m.n_states);
        let a = rng.gen_range(0..m.n_actions);
        let next = scoords[m.successor(s, a).expect("deterministic")].as_slice();
        for b in 0..m.n_actions {
            let da = l1(&acoords[a], &acoords[b]);
            if b == a || da > perturbation || da == 0.0 {
                continue;
            }
            let ds = euclidean(next, &scoords[m.successor(s, b).expect("deterministic")]);
            if ds > EDGE_TOL {
                let ratio = da / ds;
                lambda2 = Some(lambda2.map_or(ratio, |l: f64| l.max(ratio)));
            }
        }
    }
    let lambda2 = lambda2.ok_or(Error::DegenerateDynamics)?;
    LipschitzConstants::new(lambda1_of(m)?, lambda2, m.r_max())
}

/// Exhaustive scan over every `(s, a1 ≠ a2)`; the exact constants of a deterministic tabular MDP.
///
/// Distinct actions sharing a next state make the dynamics non-invertible
/// and are reported as a domain error.
pub fn lipschitz_scan(m: &TabularMdp) -> Result<LipschitzConstants> {
    let (scoords, acoords) = lipschitz_inputs(m)?;
    let mut lambda2: f64 = 0.0;
    for s in 0..m.n_states {
        for a1 in 0..m.n_actions {
            for a2 in (a1 + 1)..m.n_actions {
                let da = l1(&acoords[a1], &acoords[a2]);
                let n1 = m.successor(s, a1).expect("deterministic");
                let n2 = m.successor(s, a2).expect("deterministic");
                let ds = euclidean(&scoords[n1], &scoords[n2]);
                if ds <= EDGE_TOL {
                    if da > 0.0 {
                        return Err(Error::Domain(format!(
                            "actions {a1} and {a2} reach the same next state from state {s}"
                        )));
                    }
                    continue;
                }
                lambda2 = lambda2.max(da / ds);
            }
        }
    }
    LipschitzConstants::new(lambda1_of(m)?, lambda2, m.r_max())
}

// ---------------------------------------------------------------------------
// Action gap

/// Action gap of one MDP: `min_s min_{a ≠ a*} V*(s) − Q*(s,a)`; `+∞` with one action.
pub fn member_action_gap(m: &TabularMdp) -> Result<f64> {
    if m.n_actions == 1 {
        return Ok(f64::INFINITY);
    }
    let vt = solvers::solve_optimal(m)?;
    Ok(solvers::action_gap_of(&vt))
}

/// Action gap of a family: the minimum over members.
pub fn action_gap(family: &HipMdpFamily) -> Result<f64> {
    family
        .members()
        .iter()
        .map(member_action_gap)
        .try_fold(f64::INFINITY, |acc, g| Ok(acc.min(g?)))
}
