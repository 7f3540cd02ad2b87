//! Exact checks of the dynamics-shift bounds on enumerable MDP pairs.
//!
//! For a pair `(T, T')` every check solves both members exactly; nothing here
//! is estimated by sampling. A check whose premise fails is still recorded but
//! does not count toward the pass rate.

use std::collections::BTreeMap;
use std::io::Write;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{self, HipMdpFamily, LipschitzConstants, ShiftNorm, TabularMdp};
use crate::rng;
use crate::solvers::{self, OccupancyVector, PolicyTable, ValueTable};
use crate::transport;

/// `Err` carries the reason a premise fails.
pub type Premise = std::result::Result<(), String>;

/// Slack on bound-type checks.
pub const BOUND_TOL: f64 = 1e-9;
/// Slack on equality-type checks (L∞).
pub const EQUALITY_TOL: f64 = 1e-8;
/// Margin added to the action-gap premise.
pub const PREMISE_MARGIN: f64 = 1e-9;
/// Additive smoothing applied before taking logs of distributions.
pub const SMOOTHING: f64 = 1e-8;

/// Add [`SMOOTHING`] to every entry and renormalize.
pub fn smooth(d: &[f64]) -> Vec<f64> {
    let total: f64 = d.iter().map(|x| x + SMOOTHING).sum();
    d.iter().map(|x| (x + SMOOTHING) / total).collect()
}

/// `Σ p log(p / q)` with `0 log 0 = 0`; both sides are smoothed only when
/// `q` vanishes somewhere `p` does not.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Domain(format!("length mismatch {} vs {}", p.len(), q.len())));
    }
    let mismatch = p.iter().zip(q).any(|(a, b)| *a > 0.0 && *b <= 0.0);
    let (p, q) = if mismatch { (smooth(p), smooth(q)) } else { (p.to_vec(), q.to_vec()) };
    let kl: f64 = p.iter().zip(&q).filter(|(a, _)| **a > 0.0).map(|(a, b)| a * (a / b).ln()).sum();
    Ok(kl.max(0.0))
}

/// `D_KL(d1 ‖ d2)` between two state distributions.
pub fn occupancy_kl(d1: &OccupancyVector, d2: &OccupancyVector) -> Result<f64> {
    kl_divergence(&d1.d, &d2.d)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Theorem {
    /// `max_s |V*_T(s) − V*_T'(s)| ≤ λ1 λ2 ε_m / (1−γ)`.
    ValueGap,
    /// `d*_T = d*_T'` when `Δ > (2−γ) λ1 λ2 ε_m / (1−γ)`.
    OccupancyEquality,
    /// `η_T(π*_T) − η_T(π̂) ≤ (λ1 λ2 ε_m + 2 λ1 + √2 R_max √ε_s) / (1−γ)`.
    PerformanceBound,
    /// `|η_T(π*_T) − η_T(π̂)| ≤ (λ1 λ2 ε_m + λ1 ε_π) / (1−γ)` for the matched policy π̂.
    Wasserstein,
}

impl Theorem {
    pub const ALL: [Theorem; 4] =
        [Theorem::ValueGap, Theorem::OccupancyEquality, Theorem::PerformanceBound, Theorem::Wasserstein];

    pub fn name(self) -> &'static str {
        match self {
            Theorem::ValueGap => "value_gap",
            Theorem::OccupancyEquality => "occupancy_equality",
            Theorem::PerformanceBound => "performance_bound",
            Theorem::Wasserstein => "wasserstein",
        }
    }

    pub fn is_equality(self) -> bool {
        self == Theorem::OccupancyEquality
    }
}

/// One measured inequality (or equality) for one pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremCheck {
    pub theorem: Theorem,
    pub premise_holds: bool,
    pub lhs: f64,
    pub rhs: f64,
    pub satisfied: bool,
    /// Which policy was plugged in, for policy-dependent checks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<String>,
    /// Why the premise failed, when it did.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl TheoremCheck {
    fn bound(theorem: Theorem, premise: Premise, lhs: f64, rhs: f64) -> Self {
        Self {
            theorem,
            premise_holds: premise.is_ok(),
            lhs,
            rhs,
            satisfied: lhs <= rhs + BOUND_TOL,
            policy: None,
            note: premise.err(),
        }
    }

    /// Counts toward the pass rate and failed.
    pub fn is_counterexample(&self) -> bool {
        self.premise_holds && !self.satisfied
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    /// Norm behind `ε_m`.
    pub shift_norm: ShiftNorm,
    /// Ground cost between actions in the transport problems.
    pub action_cost: String,
    pub seed: u64,
    /// Pointwise shift `‖T(s,â) − T'(s,â)‖` along the `T'`-optimal actions, maximized over states.
    pub pointwise_shift_on_path: f64,
}

/// Everything measured on one ordered pair `(T, T')`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryReport {
    pub pair_id: String,
    pub members: (usize, usize),
    pub eps_m: f64,
    /// `D_KL(d^{π̂}_T ‖ d*_T')` for the transplanted optimal policy of `T'`.
    pub eps_s: f64,
    /// Max per-state W1 between the matched policy and `π*_T'`; NaN if no matched policy exists.
    pub eps_pi: f64,
    pub delta: f64,
    pub lipschitz: LipschitzConstants,
    pub checks: Vec<TheoremCheck>,
    pub metadata: ReportMetadata,
}

/// The flat CSV row of one check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub pair_id: String,
    pub theorem: String,
    pub premise_holds: bool,
    pub lhs: f64,
    pub rhs: f64,
    pub satisfied: bool,
}

pub fn summary_rows(reports: &[TheoryReport]) -> Vec<SummaryRow> {
    reports
        .iter()
        .flat_map(|r| {
            r.checks.iter().map(move |c| SummaryRow {
                pair_id: match &c.policy {
                    Some(p) => format!("{}/{}", r.pair_id, p),
                    None => r.pair_id.clone(),
                },
                theorem: c.theorem.name().to_string(),
                premise_holds: c.premise_holds,
                lhs: c.lhs,
                rhs: c.rhs,
                satisfied: c.satisfied,
            })
        })
        .collect()
}

/// One JSON document per line.
pub fn write_jsonl<W: Write>(reports: &[TheoryReport], mut out: W) -> Result<()> {
    for r in reports {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Pass counts per theorem.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PassCount {
    pub passed: usize,
    pub failed: usize,
    pub premise_unmet: usize,
}

impl PassCount {
    /// Fraction passed among premise-holding checks; 1 when there are none.
    pub fn pass_rate(&self) -> f64 {
        let n = self.passed + self.failed;
        if n == 0 {
            1.0
        } else {
            self.passed as f64 / n as f64
        }
    }
}

pub fn pass_counts(reports: &[TheoryReport]) -> BTreeMap<Theorem, PassCount> {
    let mut out: BTreeMap<Theorem, PassCount> = Theorem::ALL.iter().map(|&t| (t, PassCount::default())).collect();
    for c in reports.iter().flat_map(|r| &r.checks) {
        let e = out.entry(c.theorem).or_default();
        match (c.premise_holds, c.satisfied) {
            (false, _) => e.premise_unmet += 1,
            (true, true) => e.passed += 1,
            (true, false) => e.failed += 1,
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Per-member and per-pair analysis

/// Exact solutions of one member, reused across all pairs it appears in.
#[derive(Debug, Clone)]
pub struct MemberSolution {
    pub values: ValueTable,
    pub policy: PolicyTable,
    pub occupancy: OccupancyVector,
    pub eta: f64,
    pub gap: f64,
    /// Exact scan; `None` when the dynamics are not deterministic or not invertible in the action.
    pub lipschitz: std::result::Result<LipschitzConstants, String>,
}

impl MemberSolution {
    pub fn new(m: &TabularMdp) -> Result<Self> {
        let values = solvers::solve_optimal(m)?;
        let policy = solvers::greedy_policy(&values)?;
        let occupancy = solvers::occupancy(m, &policy)?;
        let eta = solvers::expected_return(m, &policy)?;
        let gap = if m.n_actions() == 1 { f64::INFINITY } else { solvers::action_gap_of(&values) };
        let lipschitz = mdp::lipschitz_scan(m).map_err(|e| e.to_string());
        Ok(Self { values, policy, occupancy, eta, gap, lipschitz })
    }
}

/// Constants valid for both members of a pair.
pub fn pair_lipschitz(s1: &MemberSolution, s2: &MemberSolution) -> std::result::Result<LipschitzConstants, String> {
    Ok(s1.lipschitz.clone()?.max(s2.lipschitz.clone()?))
}

/// A solved ordered pair `(T, T')`.
pub struct PairAnalysis<'a> {
    pub t: &'a TabularMdp,
    pub t_prime: &'a TabularMdp,
    pub sol: MemberSolution,
    pub sol_prime: MemberSolution,
    pub lips: LipschitzConstants,
    pub eps_m: f64,
    /// Shared premise of every check (homomorphous, deterministic, embedded); `Err` carries the reason.
    pub premise: Premise,
}

fn base_premise(t: &TabularMdp, tp: &TabularMdp) -> Result<Premise> {
    if !mdp::is_homomorphous(t, tp)? {
        return Ok(Err("members are not homomorphous".into()));
    }
    if !(t.is_deterministic() && tp.is_deterministic()) {
        return Ok(Err("dynamics are not deterministic".into()));
    }
    if t.state_coords().is_none() {
        return Ok(Err("state_coords missing".into()));
    }
    let Some(ac) = t.action_coords() else {
        return Ok(Err("action_coords missing".into()));
    };
    let diameter = transport::l1_cost_matrix(ac).into_iter().flatten().fold(0.0, f64::max);
    if diameter > 2.0 + 1e-12 {
        return Ok(Err(format!("action L1 diameter {diameter} exceeds 2")));
    }
    Ok(Ok(()))
}

impl<'a> PairAnalysis<'a> {
    pub fn new(t: &'a TabularMdp, t_prime: &'a TabularMdp, lips: LipschitzConstants) -> Result<Self> {
        let sol = MemberSolution::new(t)?;
        let sol_prime = MemberSolution::new(t_prime)?;
        Self::from_solutions(t, t_prime, sol, sol_prime, lips)
    }

    pub fn from_solutions(
        t: &'a TabularMdp,
        t_prime: &'a TabularMdp,
        sol: MemberSolution,
        sol_prime: MemberSolution,
        lips: LipschitzConstants,
    ) -> Result<Self> {
        let premise = base_premise(t, t_prime)?;
        let eps_m = match &premise {
            Ok(()) => mdp::dynamics_distance(t, t_prime)?,
            Err(_) => mdp::dynamics_distance(t, t_prime).unwrap_or(f64::NAN),
        };
        Ok(Self { t, t_prime, sol, sol_prime, lips, eps_m, premise })
    }

    fn gamma(&self) -> f64 {
        self.t.gamma()
    }

    fn shift_term(&self) -> f64 {
        self.lips.lambda1 * self.lips.lambda2 * self.eps_m
    }

    pub fn delta(&self) -> f64 {
        self.sol.gap.min(self.sol_prime.gap)
    }

    pub fn value_gap(&self) -> TheoremCheck {
        let lhs = self.sol.values.v.iter().zip(&self.sol_prime.values.v).fold(0.0, |m, (a, b)| f64::max(m, (a - b).abs()));
        let rhs = self.shift_term() / (1.0 - self.gamma());
        TheoremCheck::bound(Theorem::ValueGap, self.premise.clone(), lhs, rhs)
    }

    pub fn occupancy_equality(&self) -> TheoremCheck {
        let g = self.gamma();
        let threshold = (2.0 - g) * self.shift_term() / (1.0 - g);
        let delta = self.delta();
        let premise = self.premise.clone().and_then(|()| {
            if delta > threshold + PREMISE_MARGIN {
                Ok(())
            } else {
                Err(format!("action gap {delta} does not exceed {threshold}"))
            }
        });
        let lhs = self
            .sol
            .occupancy
            .d
            .iter()
            .zip(&self.sol_prime.occupancy.d)
            .fold(0.0, |m, (a, b)| f64::max(m, (a - b).abs()));
        TheoremCheck {
            theorem: Theorem::OccupancyEquality,
            premise_holds: premise.is_ok(),
            lhs,
            rhs: EQUALITY_TOL,
            satisfied: lhs <= EQUALITY_TOL,
            policy: None,
            note: premise.err(),
        }
    }

    /// `ε_s = D_KL(d^{π̂}_T ‖ d*_T')`.
    pub fn eps_s(&self, pi_hat: &PolicyTable) -> Result<f64> {
        let d_hat = solvers::occupancy(self.t, pi_hat)?;
        occupancy_kl(&d_hat, &self.sol_prime.occupancy)
    }

    pub fn performance_bound(&self, pi_hat: &PolicyTable, label: &str) -> Result<TheoremCheck> {
        let d_hat = solvers::occupancy(self.t, pi_hat)?;
        let eps_s = occupancy_kl(&d_hat, &self.sol_prime.occupancy)?;
        let lhs = self.sol.eta - solvers::return_from_occupancy(self.t, pi_hat, &d_hat);
        let l = &self.lips;
        let rhs = (self.shift_term() + 2.0 * l.lambda1 + std::f64::consts::SQRT_2 * l.r_max * eps_s.sqrt())
            / (1.0 - self.gamma());
        let mut check = TheoremCheck::bound(Theorem::PerformanceBound, self.premise.clone(), lhs, rhs);
        check.policy = Some(label.to_string());
        Ok(check)
    }

    /// The policy in `T` that follows the state path of `π*_T'`, if one exists.
    pub fn matched_policy(&self) -> Option<Vec<usize>> {
        let ns = self.t.n_states();
        (0..ns)
            .map(|s| {
                let target = self.t_prime.successor(s, self.sol_prime.policy.mode(s))?;
                (0..self.t.n_actions()).find(|&a| self.t.successor(s, a) == Some(target))
            })
            .collect()
    }

    /// `(ε_π, check)`; `ε_π` is NaN when no matched policy exists.
    pub fn wasserstein(&self) -> Result<(f64, TheoremCheck)> {
        let matched = self.premise.clone().and_then(|()| self.matched_policy().ok_or("no action reproduces the target next state".to_string()));
        let actions = match matched {
            Ok(a) => a,
            Err(note) => {
                let check = TheoremCheck {
                    theorem: Theorem::Wasserstein,
                    premise_holds: false,
                    lhs: f64::NAN,
                    rhs: f64::NAN,
                    satisfied: false,
                    policy: None,
                    note: Some(note),
                };
                return Ok((f64::NAN, check));
            }
        };
        let na = self.t.n_actions();
        let cost = transport::l1_cost_matrix(self.t.action_coords().expect("checked by premise"));
        let pi_hat = PolicyTable::deterministic(&actions, na);
        let mut eps_pi: f64 = 0.0;
        for s in 0..self.t.n_states() {
            let w = transport::wasserstein1_discrete(&pi_hat.probs[s], &self.sol_prime.policy.probs[s], &cost)?;
            eps_pi = eps_pi.max(w);
        }
        let lhs = (self.sol.eta - solvers::expected_return(self.t, &pi_hat)?).abs();
        let rhs = (self.shift_term() + self.lips.lambda1 * eps_pi) / (1.0 - self.gamma());
        Ok((eps_pi, TheoremCheck::bound(Theorem::Wasserstein, Ok(()), lhs, rhs)))
    }

    /// `max_s ‖T(s,a*) − T'(s,a*)‖` along `a* = π*_T'(s)`.
    pub fn pointwise_shift_on_path(&self) -> Result<f64> {
        let shift = mdp::pointwise_shift(self.t, self.t_prime)?;
        let na = self.t.n_actions();
        Ok((0..self.t.n_states()).map(|s| shift[s * na + self.sol_prime.policy.mode(s)]).fold(0.0, f64::max))
    }
}

/// Value-gap lemma on `(m1, m2)`.
pub fn verify_value_gap_lemma(m1: &TabularMdp, m2: &TabularMdp, lips: LipschitzConstants) -> Result<TheoremCheck> {
    Ok(PairAnalysis::new(m1, m2, lips)?.value_gap())
}

/// Occupancy equality under the action-gap premise.
pub fn verify_occupancy_equality(m1: &TabularMdp, m2: &TabularMdp, lips: LipschitzConstants) -> Result<TheoremCheck> {
    Ok(PairAnalysis::new(m1, m2, lips)?.occupancy_equality())
}

/// Performance lower bound for `pi_hat` deployed in `m1`, with `ζ = d*_{m2}`.
pub fn verify_performance_bound(
    m1: &TabularMdp,
    m2: &TabularMdp,
    pi_hat: &PolicyTable,
    lips: LipschitzConstants,
) -> Result<TheoremCheck> {
    PairAnalysis::new(m1, m2, lips)?.performance_bound(pi_hat, "given")
}

/// Wasserstein reference-policy lemma with the constructed matched policy.
pub fn verify_wasserstein_lemma(m1: &TabularMdp, m2: &TabularMdp, lips: LipschitzConstants) -> Result<TheoremCheck> {
    Ok(PairAnalysis::new(m1, m2, lips)?.wasserstein()?.1)
}

/// Exact Lipschitz constants valid for both members.
pub fn pair_constants(m1: &TabularMdp, m2: &TabularMdp) -> Result<LipschitzConstants> {
    Ok(mdp::lipschitz_scan(m1)?.max(mdp::lipschitz_scan(m2)?))
}

// ---------------------------------------------------------------------------
// Suites

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteConfig {
    /// Random policies plugged into the performance bound per pair.
    pub n_random_policies: usize,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self { n_random_policies: 20 }
    }
}

/// Ordered member pairs `(i, j)`, `i ≠ j` (or `(0, 0)` for a single member),
/// shuffled under `rng_seed` and truncated to `n_pairs`.
pub fn sample_pairs(n_members: usize, n_pairs: usize, rng_seed: u64) -> Vec<(usize, usize)> {
    let mut all: Vec<(usize, usize)> = if n_members == 1 {
        vec![(0, 0)]
    } else {
        (0..n_members).flat_map(|i| (0..n_members).filter(move |&j| j != i).map(move |j| (i, j))).collect()
    };
    let mut rng = rng::stream(rng_seed, "theory/pairs");
    all.shuffle(&mut rng);
    all.truncate(n_pairs);
    all
}

/// Run all four checks on `n_pairs` ordered member pairs.
pub fn generate_report_suite(family: &HipMdpFamily, n_pairs: usize, rng_seed: u64) -> Result<Vec<TheoryReport>> {
    generate_report_suite_with(family, n_pairs, rng_seed, &SuiteConfig::default())
}

pub fn generate_report_suite_with(
    family: &HipMdpFamily,
    n_pairs: usize,
    rng_seed: u64,
    cfg: &SuiteConfig,
) -> Result<Vec<TheoryReport>> {
    if family.is_empty() {
        return Err(Error::InvalidArgument("empty family".into()));
    }
    let pairs = sample_pairs(family.len(), n_pairs, rng_seed);
    let mut cache: BTreeMap<usize, MemberSolution> = BTreeMap::new();
    for &(i, j) in &pairs {
        for k in [i, j] {
            if let std::collections::btree_map::Entry::Vacant(e) = cache.entry(k) {
                e.insert(MemberSolution::new(family.member(k))?);
            }
        }
    }
    let mut reports = Vec::with_capacity(pairs.len());
    for (idx, &(i, j)) in pairs.iter().enumerate() {
        let (t, tp) = (family.member(i), family.member(j));
        let (s1, s2) = (cache[&i].clone(), cache[&j].clone());
        let lips_result = pair_lipschitz(&s1, &s2);
        let lips = match &lips_result {
            Ok(l) => *l,
            Err(_) => LipschitzConstants { lambda1: f64::NAN, lambda2: f64::NAN, r_max: t.r_max().max(tp.r_max()) },
        };
        let mut pa = PairAnalysis::from_solutions(t, tp, s1, s2, lips)?;
        if let Err(reason) = lips_result {
            pa.premise = pa.premise.and(Err(format!("Lipschitz constants unavailable: {reason}")));
        }
        let mut checks = vec![pa.value_gap(), pa.occupancy_equality()];

        let transplanted = pa.sol_prime.policy.clone();
        let eps_s = pa.eps_s(&transplanted)?;
        checks.push(pa.performance_bound(&transplanted, "transplanted")?);
        checks.push(pa.performance_bound(&PolicyTable::uniform(t.n_states(), t.n_actions()), "uniform")?);
        let mut prng = rng::stream(rng::child_seed(rng_seed, "theory/policies", idx as u64), "theory/policies");
        for k in 0..cfg.n_random_policies {
            let pi = PolicyTable::random(t.n_states(), t.n_actions(), &mut prng);
            checks.push(pa.performance_bound(&pi, &format!("random{k}"))?);
        }
        let (eps_pi, wcheck) = pa.wasserstein()?;
        checks.push(wcheck);

        let pointwise = if pa.premise.is_ok() { pa.pointwise_shift_on_path()? } else { f64::NAN };
        reports.push(TheoryReport {
            pair_id: format!("{i}-{j}"),
            members: (i, j),
            eps_m: pa.eps_m,
            eps_s,
            eps_pi,
            delta: pa.delta(),
            lipschitz: pa.lips,
            checks,
            metadata: ReportMetadata {
                shift_norm: mdp::shift_norm(t, tp),
                action_cost: "l1".into(),
                seed: rng_seed,
                pointwise_shift_on_path: pointwise,
            },
        });
    }
    Ok(reports)
}
