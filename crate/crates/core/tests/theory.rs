mod common;

use common::rng;
use proptest::prelude::*;
use rand::Rng;
use srpo_core::envs::EnvSpec;
use srpo_core::mdp::{self, HipMdpFamily};
use srpo_core::theory::{self, PairAnalysis, Theorem};
use srpo_core::transport::{l1_cost_matrix, wasserstein1_discrete};
use srpo_core::{solvers, OccupancyVector, PolicyTable};

/// Solve a square system, `None` when it is singular.
fn solve_square(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in 0..n {
            if row != col {
                let f = a[row][col] / a[col][col];
                for k in col..n {
                    a[row][k] -= f * a[col][k];
                }
                b[row] -= f * b[col];
            }
        }
    }
    Some((0..n).map(|i| b[i] / a[i][i]).collect())
}

/// Minimum cost over every basic feasible solution of the transportation polytope.
fn vertex_enumeration_w1(p: &[f64], q: &[f64], cost: &[Vec<f64>]) -> f64 {
    let (n, m) = (p.len(), q.len());
    let cells: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..m).map(move |j| (i, j))).collect();
    let k = n + m - 1;
    let mut best = f64::INFINITY;
    let mut pick: Vec<usize> = (0..k).collect();
    loop {
        // row and column sums, the last column constraint is implied
        let mut a = vec![vec![0.0; k]; k];
        let mut b = vec![0.0; k];
        for (c, &idx) in pick.iter().enumerate() {
            let (i, j) = cells[idx];
            a[i][c] = 1.0;
            if j < m - 1 {
                a[n + j][c] = 1.0;
            }
        }
        b[..n].copy_from_slice(p);
        b[n..].copy_from_slice(&q[..m - 1]);
        if let Some(x) = solve_square(a, b) {
            if x.iter().all(|v| *v >= -1e-12) {
                let c: f64 = pick.iter().zip(&x).map(|(&idx, v)| cost[cells[idx].0][cells[idx].1] * v).sum();
                best = best.min(c);
            }
        }
        // next combination
        let mut i = k;
        while i > 0 && pick[i - 1] == cells.len() - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return best;
        }
        pick[i - 1] += 1;
        for j in i..k {
            pick[j] = pick[j - 1] + 1;
        }
    }
}

fn random_simplex<R: Rng>(n: usize, r: &mut R) -> Vec<f64> {
    let x: Vec<f64> = (0..n).map(|_| r.gen::<f64>()).collect();
    let s: f64 = x.iter().sum();
    x.into_iter().map(|v| v / s).collect()
}

#[test]
fn w1_matches_vertex_enumeration() {
    let mut r = rng(50);
    for _ in 0..30 {
        let coords: Vec<Vec<f64>> = (0..4).map(|_| vec![r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0)]).collect();
        let cost = l1_cost_matrix(&coords);
        let (p, q) = (random_simplex(4, &mut r), random_simplex(4, &mut r));
        let w = wasserstein1_discrete(&p, &q, &cost).unwrap();
        let oracle = vertex_enumeration_w1(&p, &q, &cost);
        assert!((w - oracle).abs() < 1e-9, "{w} vs {oracle}");
    }
}

#[test]
fn w1_of_point_masses() {
    let cost = l1_cost_matrix(&[vec![-1.0], vec![1.0]]);
    assert!((wasserstein1_discrete(&[1.0, 0.0], &[0.0, 1.0], &cost).unwrap() - 2.0).abs() < 1e-15);
    assert_eq!(wasserstein1_discrete(&[0.3, 0.7], &[0.3, 0.7], &cost).unwrap(), 0.0);
}

/// Neumaier-compensated `Σ p ln(p/q)` with the ratio taken in one step.
fn kl_oracle(p: &[f64], q: &[f64]) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for (a, b) in p.iter().zip(q) {
        if *a == 0.0 {
            continue;
        }
        let term = a * (a / b).ln();
        let t = sum + term;
        comp += if sum.abs() >= term.abs() { (sum - t) + term } else { (term - t) + sum };
        sum = t;
    }
    sum + comp
}

#[test]
fn kl_closed_form_and_oracle() {
    let kl = theory::kl_divergence(&[0.75, 0.25], &[0.25, 0.75]).unwrap();
    assert!((kl - 0.5 * 3f64.ln()).abs() < 1e-15);
    let mut r = rng(51);
    let mut asymmetric = 0;
    for _ in 0..200 {
        let n = r.gen_range(2..12);
        let (p, q) = (random_simplex(n, &mut r), random_simplex(n, &mut r));
        let kl = theory::kl_divergence(&p, &q).unwrap();
        assert!((kl - kl_oracle(&p, &q)).abs() < 1e-12);
        assert!(kl >= 0.0);
        let pq = theory::occupancy_kl(
            &OccupancyVector::from_probs(p.clone(), 0.9).unwrap(),
            &OccupancyVector::from_probs(q.clone(), 0.9).unwrap(),
        )
        .unwrap();
        assert_eq!(pq, kl);
        if (kl - theory::kl_divergence(&q, &p).unwrap()).abs() > 1e-6 {
            asymmetric += 1;
        }
    }
    assert!(asymmetric > 0);
}

fn pendulum(cost: f64, gravities: Vec<f64>) -> HipMdpFamily {
    EnvSpec { action_cost_coeff: cost, ..EnvSpec::pendulum(gravities) }.build().unwrap()
}

#[test]
fn identical_members_pass_everything_with_zero_gaps() {
    let base = pendulum(0.3, vec![8.0]);
    let fam = HipMdpFamily::new(vec![base.member(0).clone(); 3]).unwrap();
    let reports = theory::generate_report_suite(&fam, 6, 1).unwrap();
    assert_eq!(reports.len(), 6);
    for rep in &reports {
        assert_eq!(rep.eps_m, 0.0);
        assert!(rep.eps_s.abs() < 1e-12);
        assert_eq!(rep.eps_pi, 0.0);
        for c in &rep.checks {
            assert!(c.premise_holds || c.theorem == Theorem::OccupancyEquality, "{c:?}");
            assert!(c.satisfied, "{c:?}");
            if c.theorem != Theorem::PerformanceBound || c.policy.as_deref() == Some("transplanted") {
                assert!(c.lhs.abs() < 1e-9, "{c:?}");
            }
        }
    }
}

#[test]
fn zero_reward_lipschitz_forces_equal_values() {
    let fam = pendulum(0.0, vec![3.0, 6.0, 9.0, 12.0]);
    for i in 0..fam.len() {
        for j in 0..fam.len() {
            let (a, b) = (fam.member(i), fam.member(j));
            let lips = theory::pair_constants(a, b).unwrap();
            assert_eq!(lips.lambda1, 0.0);
            let vg = theory::verify_value_gap_lemma(a, b, lips).unwrap();
            assert_eq!(vg.rhs, 0.0);
            assert!(vg.lhs < 1e-9 && vg.satisfied);
            let w = theory::verify_wasserstein_lemma(a, b, lips).unwrap();
            assert!(w.premise_holds && w.lhs < 1e-9);
        }
    }
}

#[test]
fn bounds_hold_on_generated_pendulum_pairs() {
    let fam = pendulum(0.2, (0..6).map(|k| 4.0 + 1.5 * k as f64).collect());
    let reports = theory::generate_report_suite(&fam, 30, 2).unwrap();
    let counts = theory::pass_counts(&reports);
    for th in [Theorem::ValueGap, Theorem::PerformanceBound, Theorem::Wasserstein] {
        let c = counts[&th];
        assert_eq!(c.failed, 0, "{th:?}");
        assert!(c.passed > 0);
    }
    assert_eq!(counts[&Theorem::OccupancyEquality].failed, 0);
    for rep in &reports {
        for c in &rep.checks {
            assert!(!c.is_counterexample(), "{c:?}");
        }
    }
}

/// Independent recomputation of the performance bound for one pair and policy.
#[test]
fn performance_bound_recomputed_from_solvers() {
    let fam = pendulum(0.2, vec![5.0, 9.0]);
    let (t, tp) = (fam.member(0), fam.member(1));
    let lips = theory::pair_constants(t, tp).unwrap();
    let mut r = rng(52);
    let pi = PolicyTable::random(t.n_states(), t.n_actions(), &mut r);
    let check = theory::verify_performance_bound(t, tp, &pi, lips).unwrap();

    let opt = solvers::greedy_policy(&solvers::solve_optimal(t).unwrap()).unwrap();
    let opt_p = solvers::greedy_policy(&solvers::solve_optimal(tp).unwrap()).unwrap();
    let lhs = solvers::expected_return(t, &opt).unwrap() - solvers::expected_return(t, &pi).unwrap();
    let d_hat = solvers::occupancy(t, &pi).unwrap();
    let d_star = solvers::occupancy(tp, &opt_p).unwrap();
    let eps_s = kl_oracle(&d_hat.d, &d_star.d);
    let eps_m = mdp::dynamics_distance(t, tp).unwrap();
    let g = t.gamma();
    let rhs = (lips.lambda1 * lips.lambda2 * eps_m + 2.0 * lips.lambda1 + 2f64.sqrt() * lips.r_max * eps_s.sqrt()) / (1.0 - g);
    assert!((check.lhs - lhs).abs() < 1e-8);
    assert!((check.rhs - rhs).abs() < 1e-8 * rhs.max(1.0));
    assert!(check.satisfied);
}

#[test]
fn premise_violations_are_informational() {
    // A large action cost makes the gap premise fail while occupancies move.
    let fam = pendulum(0.5, vec![4.0, 12.0]);
    let pa = PairAnalysis::new(fam.member(0), fam.member(1), theory::pair_constants(fam.member(0), fam.member(1)).unwrap()).unwrap();
    let c = pa.occupancy_equality();
    assert!(!c.premise_holds);
    assert!(c.lhs > 1e-8);
    assert!(!c.is_counterexample());
}

#[test]
fn suite_is_deterministic() {
    let fam = pendulum(0.2, vec![5.0, 7.0, 9.0]);
    let a = theory::generate_report_suite(&fam, 4, 9).unwrap();
    let b = theory::generate_report_suite(&fam, 4, 9).unwrap();
    let (mut ja, mut jb) = (Vec::new(), Vec::new());
    theory::write_jsonl(&a, &mut ja).unwrap();
    theory::write_jsonl(&b, &mut jb).unwrap();
    assert_eq!(ja, jb);
}

#[test]
fn stochastic_pairs_report_unmet_premise() {
    let fam = EnvSpec::gridworld(vec![0.0, 0.2]).build().unwrap();
    let reports = theory::generate_report_suite(&fam, 2, 0).unwrap();
    for rep in &reports {
        assert!(rep.checks.iter().all(|c| !c.premise_holds));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn w1_triangle_and_identity(seed in any::<u64>()) {
        let mut r = rng(seed);
        let coords: Vec<Vec<f64>> = (0..5).map(|_| vec![r.gen_range(-1.0..1.0)]).collect();
        let cost = l1_cost_matrix(&coords);
        let (p, q, u) = (random_simplex(5, &mut r), random_simplex(5, &mut r), random_simplex(5, &mut r));
        let w = |a: &[f64], b: &[f64]| wasserstein1_discrete(a, b, &cost).unwrap();
        prop_assert!(w(&p, &p).abs() < 1e-12);
        prop_assert!(w(&p, &u) <= w(&p, &q) + w(&q, &u) + 1e-9);
        prop_assert!((w(&p, &q) - w(&q, &p)).abs() < 1e-9);
    }

    #[test]
    fn w1_on_a_line_is_the_cdf_gap(seed in any::<u64>()) {
        let mut r = rng(seed);
        let xs = [-1.0, -0.5, 0.0, 0.5, 1.0];
        let cost = l1_cost_matrix(&xs.iter().map(|x| vec![*x]).collect::<Vec<_>>());
        let (p, q) = (random_simplex(5, &mut r), random_simplex(5, &mut r));
        let (mut cp, mut cq, mut oracle) = (0.0, 0.0, 0.0);
        for k in 0..4 {
            cp += p[k];
            cq += q[k];
            oracle += (cp - cq).abs() * (xs[k + 1] - xs[k]);
        }
        prop_assert!((wasserstein1_discrete(&p, &q, &cost).unwrap() - oracle).abs() < 1e-9);
    }
}
