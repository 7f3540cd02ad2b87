//! Exact and iterative solvers: optimal values, soft values, policy
//! evaluation, discounted state occupancy and rollouts.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::TabularMdp;
use crate::rng;
use crate::srpo::Transition;

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITERS: usize = 100_000;
/// Residual above which a direct linear solve is rejected.
pub const SOLVE_RESIDUAL_TOL: f64 = 1e-8;

/// A stochastic policy `π[s][a]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyTable {
    pub probs: Vec<Vec<f64>>,
}

impl PolicyTable {
    pub fn new(probs: Vec<Vec<f64>>) -> Result<Self> {
        if probs.is_empty() || probs[0].is_empty() {
            return Err(Error::Structure("policy needs states and actions".into()));
        }
        let na = probs[0].len();
        for (s, row) in probs.iter().enumerate() {
            if row.len() != na {
                return Err(Error::Structure(format!("policy row {s} has {} actions, expected {na}", row.len())));
            }
            if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::Structure(format!("policy row {s} has an entry outside [0,1]")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-12 {
                return Err(Error::Structure(format!("policy row {s} sums to {sum}")));
            }
        }
        Ok(Self { probs })
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Self { probs: vec![vec![1.0 / n_actions as f64; n_actions]; n_states] }
    }

    /// Unit mass on `actions[s]`.
    pub fn deterministic(actions: &[usize], n_actions: usize) -> Self {
        let probs = actions
            .iter()
            .map(|&a| {
                let mut row = vec![0.0; n_actions];
                row[a] = 1.0;
                row
            })
            .collect();
        Self { probs }
    }

    /// Random policy with rows drawn uniformly from the simplex.
    pub fn random<R: Rng>(n_states: usize, n_actions: usize, rng: &mut R) -> Self {
        let probs = (0..n_states)
            .map(|_| {
                let raw: Vec<f64> = (0..n_actions).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
                let total: f64 = raw.iter().sum();
                let mut row: Vec<f64> = raw.iter().map(|x| x / total).collect();
                fix_row_sum(&mut row);
                row
            })
            .collect();
        Self { probs }
    }

    pub fn n_states(&self) -> usize {
        self.probs.len()
    }

    pub fn n_actions(&self) -> usize {
        self.probs[0].len()
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s][a]
    }

    /// The action with the largest probability (lowest index on ties).
    pub fn mode(&self, s: usize) -> usize {
        argmax(&self.probs[s])
    }

    pub fn sample<R: Rng>(&self, s: usize, rng: &mut R) -> usize {
        sample_categorical(&self.probs[s], rng)
    }

    fn check_against(&self, m: &TabularMdp) -> Result<()> {
        if self.n_states() != m.n_states() || self.n_actions() != m.n_actions() {
            return Err(Error::Structure("policy shape does not match the MDP".into()));
        }
        Ok(())
    }
}

/// Push rounding error into the largest entry so the row sums to one.
pub(crate) fn fix_row_sum(row: &mut [f64]) {
    let sum: f64 = row.iter().sum();
    let i = argmax(row);
    row[i] = (row[i] + 1.0 - sum).clamp(0.0, 1.0);
}

/// Index of the maximum; lowest index wins ties.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn sample_categorical<R: Rng>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // rounding: fall back to the last positive entry
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueKind {
    Hard,
    Soft,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueTable {
    pub v: Vec<f64>,
    pub q: Vec<Vec<f64>>,
    pub kind: ValueKind,
    pub tol_used: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyVector {
    pub d: Vec<f64>,
    pub gamma: f64,
    pub tol_used: f64,
    pub iterations: usize,
}

impl OccupancyVector {
    /// Wrap an arbitrary distribution (e.g. a reference ζ).
    pub fn from_probs(d: Vec<f64>, gamma: f64) -> Result<Self> {
        if d.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::Domain("occupancy entries must be finite and nonnegative".into()));
        }
        let sum: f64 = d.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Domain(format!("occupancy sums to {sum}")));
        }
        Ok(Self { d, gamma, tol_used: 0.0, iterations: 0 })
    }
}

fn q_from_v(m: &TabularMdp, v: &[f64]) -> Vec<Vec<f64>> {
    let g = m.gamma();
    (0..m.n_states())
        .map(|s| {
            (0..m.n_actions())
                .map(|a| m.edges(s, a).iter().map(|e| e.prob * (e.reward + g * v[e.next])).sum())
                .collect()
        })
        .collect()
}

fn max_rows(q: &[Vec<f64>]) -> Vec<f64> {
    q.iter().map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max)).collect()
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// Sup-norm residual of the optimal Bellman operator at `v`.
pub fn bellman_residual(m: &TabularMdp, v: &[f64]) -> f64 {
    sup_diff(&max_rows(&q_from_v(m, v)), v)
}

fn check_iteration_args(tol: f64, max_iters: usize) -> Result<()> {
    if !(tol > 0.0) || max_iters == 0 {
        return Err(Error::InvalidArgument("tol and max_iters must be positive".into()));
    }
    Ok(())
}

/// Optimal values by value iteration; the returned `v` has Bellman residual ≤ `tol`.
pub fn value_iteration(m: &TabularMdp, tol: f64, max_iters: usize) -> Result<ValueTable> {
    check_iteration_args(tol, max_iters)?;
    let mut v = vec![0.0; m.n_states()];
    let mut residual = f64::INFINITY;
    for it in 1..=max_iters {
        let next = max_rows(&q_from_v(m, &v));
        residual = sup_diff(&next, &v);
        v = next;
        if residual <= tol {
            let q = q_from_v(m, &v);
            let v = max_rows(&q);
            return Ok(ValueTable { v, q, kind: ValueKind::Hard, tol_used: tol, iterations: it });
        }
    }
    Err(Error::Convergence { iterations: max_iters, residual })
}

/// Deterministic greedy policy from `q`; ties go to the lowest action index.
pub fn greedy_policy(vt: &ValueTable) -> Result<PolicyTable> {
    if vt.kind != ValueKind::Hard {
        return Err(Error::InvalidArgument("greedy extraction expects a hard value table".into()));
    }
    let n_actions = vt.q.first().map_or(0, Vec::len);
    let actions: Vec<usize> = vt.q.iter().map(|row| argmax(row)).collect();
    Ok(PolicyTable::deterministic(&actions, n_actions))
}

/// Optimal values polished to the exact fixed point: value iteration followed
/// by policy iteration with direct linear solves until the greedy policy is stable.
pub fn solve_optimal(m: &TabularMdp) -> Result<ValueTable> {
    let mut vt = value_iteration(m, DEFAULT_TOL, DEFAULT_MAX_ITERS)?;
    let mut actions: Vec<usize> = vt.q.iter().map(|row| argmax(row)).collect();
    for round in 1..=100 {
        let pi = PolicyTable::deterministic(&actions, m.n_actions());
        let v = policy_evaluation(m, &pi)?.v;
        let q = q_from_v(m, &v);
        // keep the incumbent action unless another is better by more than round-off
        let next: Vec<usize> = q
            .iter()
            .zip(&actions)
            .map(|(row, &cur)| {
                let best = argmax(row);
                if row[best] > row[cur] + 1e-12 * (1.0 + row[cur].abs()) {
                    best
                } else {
                    cur
                }
            })
            .collect();
        if next == actions {
            vt.v = max_rows(&q);
            vt.q = q;
            vt.iterations += round;
            return Ok(vt);
        }
        actions = next;
    }
    Err(Error::Convergence { iterations: 100, residual: bellman_residual(m, &vt.v) })
}

/// `min_s min_{a ≠ argmax} V(s) − Q(s,a)` of a hard table; `+∞` with a single action.
pub fn action_gap_of(vt: &ValueTable) -> f64 {
    let mut gap = f64::INFINITY;
    for (row, &v) in vt.q.iter().zip(&vt.v) {
        let best = argmax(row);
        for (a, &q) in row.iter().enumerate() {
            if a != best {
                gap = gap.min(v - q);
            }
        }
    }
    gap
}

fn log_sum_exp_weighted(terms: impl Iterator<Item = (f64, f64)>) -> f64 {
    let terms: Vec<(f64, f64)> = terms.collect();
    let hi = terms.iter().map(|t| t.1).fold(f64::NEG_INFINITY, f64::max);
    let acc: f64 = terms.iter().map(|(w, x)| w * (x - hi).exp()).sum();
    hi + acc.ln()
}

/// One application of the soft backup
/// `W(s) = max_a log Σ_s' P(s'|s,a) exp(r(s,a,s') + γ W(s'))`.
pub fn soft_backup(m: &TabularMdp, w: &[f64]) -> Vec<Vec<f64>> {
    let g = m.gamma();
    (0..m.n_states())
        .map(|s| {
            (0..m.n_actions())
                .map(|a| log_sum_exp_weighted(m.edges(s, a).iter().map(|e| (e.prob, e.reward + g * w[e.next]))))
                .collect()
        })
        .collect()
}

/// Fixed point of the stationary soft operator [`soft_backup`].
pub fn soft_value_iteration(m: &TabularMdp, tol: f64, max_iters: usize) -> Result<ValueTable> {
    check_iteration_args(tol, max_iters)?;
    let mut w = vec![0.0; m.n_states()];
    let mut residual = f64::INFINITY;
    for it in 1..=max_iters {
        let next = max_rows(&soft_backup(m, &w));
        if next.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numerical("soft value overflow".into()));
        }
        residual = sup_diff(&next, &w);
        w = next;
        if residual <= tol {
            let q = soft_backup(m, &w);
            let v = max_rows(&q);
            return Ok(ValueTable { v, q, kind: ValueKind::Soft, tol_used: tol, iterations: it });
        }
    }
    Err(Error::Convergence { iterations: max_iters, residual })
}

/// `P_π[s][s']` as a dense matrix.
fn policy_matrix(m: &TabularMdp, pi: &PolicyTable) -> DMatrix<f64> {
    let n = m.n_states();
    let mut p = DMatrix::zeros(n, n);
    for s in 0..n {
        for a in 0..m.n_actions() {
            let w = pi.prob(s, a);
            if w == 0.0 {
                continue;
            }
            for e in m.edges(s, a) {
                p[(s, e.next)] += w * e.prob;
            }
        }
    }
    p
}

fn policy_reward(m: &TabularMdp, pi: &PolicyTable) -> DVector<f64> {
    DVector::from_iterator(
        m.n_states(),
        (0..m.n_states()).map(|s| (0..m.n_actions()).map(|a| pi.prob(s, a) * m.expected_reward(s, a)).sum()),
    )
}

fn solve_checked(a: DMatrix<f64>, b: DVector<f64>) -> Result<DVector<f64>> {
    let x = a
        .clone()
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::Numerical("singular linear system".into()))?;
    let residual = (&a * &x - &b).amax();
    if !(residual <= SOLVE_RESIDUAL_TOL) {
        return Err(Error::Numerical(format!("linear solve residual {residual:e}")));
    }
    Ok(x)
}

/// Exact evaluation: solves `(I − γ P_π) v = r_π`.
pub fn policy_evaluation(m: &TabularMdp, pi: &PolicyTable) -> Result<ValueTable> {
    pi.check_against(m)?;
    let n = m.n_states();
    let a = DMatrix::identity(n, n) - policy_matrix(m, pi) * m.gamma();
    let v: Vec<f64> = solve_checked(a, policy_reward(m, pi))?.iter().copied().collect();
    let q = q_from_v(m, &v);
    Ok(ValueTable { v, q, kind: ValueKind::Hard, tol_used: SOLVE_RESIDUAL_TOL, iterations: 0 })
}

/// Discounted state occupancy: solves `dᵀ = (1−γ) ρ0ᵀ + γ dᵀ P_π`.
pub fn occupancy(m: &TabularMdp, pi: &PolicyTable) -> Result<OccupancyVector> {
    pi.check_against(m)?;
    let n = m.n_states();
    let g = m.gamma();
    let a = DMatrix::identity(n, n) - policy_matrix(m, pi).transpose() * g;
    let b = DVector::from_iterator(n, m.rho0().iter().map(|p| (1.0 - g) * p));
    let x = solve_checked(a, b)?;
    let d: Vec<f64> = x.iter().map(|v| v.max(0.0)).collect();
    Ok(OccupancyVector { d, gamma: g, tol_used: SOLVE_RESIDUAL_TOL, iterations: 0 })
}

/// Occupancy by the truncated series `(1−γ) Σ_{t<T} γ^t ρ0ᵀ P_π^t`, with
/// `T` the first horizon where `γ^T < tail`.
pub fn occupancy_power_series(m: &TabularMdp, pi: &PolicyTable, tail: f64) -> Result<OccupancyVector> {
    pi.check_against(m)?;
    if !(tail > 0.0 && tail < 1.0) {
        return Err(Error::InvalidArgument("tail must lie in (0,1)".into()));
    }
    let g = m.gamma();
    let n = m.n_states();
    let mut dist = m.rho0().to_vec();
    let mut d = vec![0.0; n];
    let mut weight = 1.0 - g;
    let mut t = 0;
    while g.powi(t as i32) >= tail {
        for s in 0..n {
            d[s] += weight * dist[s];
        }
        let mut next = vec![0.0; n];
        for s in 0..n {
            if dist[s] == 0.0 {
                continue;
            }
            for a in 0..m.n_actions() {
                let w = dist[s] * pi.prob(s, a);
                if w == 0.0 {
                    continue;
                }
                for e in m.edges(s, a) {
                    next[e.next] += w * e.prob;
                }
            }
        }
        dist = next;
        weight *= g;
        t += 1;
    }
    Ok(OccupancyVector { d, gamma: g, tol_used: tail, iterations: t })
}

/// `η(π) = E_{ρ0}[V^π]`.
pub fn expected_return(m: &TabularMdp, pi: &PolicyTable) -> Result<f64> {
    let v = policy_evaluation(m, pi)?.v;
    let eta: f64 = m.rho0().iter().zip(&v).map(|(p, v)| p * v).sum();
    debug_assert!({
        let alt = expected_return_occupancy_form(m, pi)?;
        (alt - eta).abs() <= 1e-8 * (1.0 + eta.abs())
    });
    Ok(eta)
}

/// `η(π) = (1/(1−γ)) E_{(s,a,s') ~ d_π π P}[r]`.
pub fn expected_return_occupancy_form(m: &TabularMdp, pi: &PolicyTable) -> Result<f64> {
    let d = occupancy(m, pi)?;
    Ok(return_from_occupancy(m, pi, &d))
}

/// The occupancy form of `η(π)` for an already computed `d_π`.
pub fn return_from_occupancy(m: &TabularMdp, pi: &PolicyTable, d: &OccupancyVector) -> f64 {
    let mean_r: f64 = (0..m.n_states())
        .map(|s| d.d[s] * (0..m.n_actions()).map(|a| pi.prob(s, a) * m.expected_reward(s, a)).sum::<f64>())
        .sum();
    mean_r / (1.0 - m.gamma())
}

pub(crate) fn sample_next<R: Rng>(m: &TabularMdp, s: usize, a: usize, rng: &mut R) -> (usize, f64) {
    let edges = m.edges(s, a);
    if let [e] = edges {
        return (e.next, e.reward);
    }
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for e in edges {
        acc += e.prob;
        if u < acc {
            return (e.next, e.reward);
        }
    }
    let e = edges.last().expect("row has support");
    (e.next, e.reward)
}

/// One rollout of `horizon` steps from `ρ0`; `done` marks the final step.
pub fn rollout<R: Rng>(
    m: &TabularMdp,
    pi: &PolicyTable,
    horizon: usize,
    theta_idx: usize,
    rng: &mut R,
) -> Vec<Transition> {
    let mut s = sample_categorical(m.rho0(), rng);
    let mut out = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let a = pi.sample(s, rng);
        let (sn, r) = sample_next(m, s, a, rng);
        out.push(Transition { s, a, r, s_next: sn, theta_idx, done: t + 1 == horizon, value_score: None });
        s = sn;
    }
    out
}

/// `n` independent rollouts, reproducible under `rng_seed`.
pub fn sample_trajectories(
    m: &TabularMdp,
    pi: &PolicyTable,
    n: usize,
    horizon: usize,
    rng_seed: u64,
) -> Result<Vec<Vec<Transition>>> {
    pi.check_against(m)?;
    if n == 0 || horizon == 0 {
        return Err(Error::InvalidArgument("n and horizon must be positive".into()));
    }
    let mut rng = rng::stream(rng_seed, "sample_trajectories");
    Ok((0..n).map(|_| rollout(m, pi, horizon, 0, &mut rng)).collect())
}
