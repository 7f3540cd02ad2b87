//! Shared fixtures and brute-force oracles for the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use srpo_core::mdp::MdpExtras;
use srpo_core::TabularMdp;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_simplex<R: Rng>(n: usize, rng: &mut R, sparsity: f64) -> Vec<f64> {
    loop {
        let mut p: Vec<f64> = (0..n).map(|_| if rng.gen::<f64>() < sparsity { 0.0 } else { rng.gen::<f64>() }).collect();
        let total: f64 = p.iter().sum();
        if total > 0.0 {
            p.iter_mut().for_each(|x| *x /= total);
            return p;
        }
    }
}

/// Dense random MDP with rewards in [-1, 1].
pub fn random_mdp<R: Rng>(ns: usize, na: usize, gamma: f64, rng: &mut R) -> TabularMdp {
    random_mdp_sparse(ns, na, gamma, 0.0, rng)
}

/// Random MDP where each transition entry is dropped with probability `sparsity`.
pub fn random_mdp_sparse<R: Rng>(ns: usize, na: usize, gamma: f64, sparsity: f64, rng: &mut R) -> TabularMdp {
    let mut t = Vec::with_capacity(ns * na * ns);
    for _ in 0..ns * na {
        t.extend(random_simplex(ns, rng, sparsity));
    }
    let r: Vec<f64> = (0..ns * na * ns).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let rho0 = random_simplex(ns, rng, 0.0);
    TabularMdp::new(ns, na, gamma, t, r, rho0, MdpExtras::default()).unwrap()
}

/// Solve `A x = b` by Gaussian elimination with partial pivoting.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f != 0.0 {
                for k in col..n {
                    a[row][k] -= f * a[col][k];
                }
                b[row] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let tail: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - tail) / a[row][row];
    }
    x
}

/// `P_π[s][s']` and expected one-step reward under a stochastic policy.
pub fn policy_kernel(m: &TabularMdp, probs: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let ns = m.n_states();
    let mut p = vec![vec![0.0; ns]; ns];
    let mut r = vec![0.0; ns];
    for s in 0..ns {
        for a in 0..m.n_actions() {
            let w = probs[s][a];
            for sn in 0..ns {
                p[s][sn] += w * m.p(s, a, sn);
                r[s] += w * m.p(s, a, sn) * m.r(s, a, sn);
            }
        }
    }
    (p, r)
}

/// `v_π = (I − γ P_π)^{-1} r_π`.
pub fn evaluate(m: &TabularMdp, probs: &[Vec<f64>]) -> Vec<f64> {
    let ns = m.n_states();
    let (p, r) = policy_kernel(m, probs);
    let a = (0..ns)
        .map(|i| (0..ns).map(|j| if i == j { 1.0 } else { 0.0 } - m.gamma() * p[i][j]).collect())
        .collect();
    gauss_solve(a, r)
}

pub fn one_hot_policy(actions: &[usize], na: usize) -> Vec<Vec<f64>> {
    actions.iter().map(|&a| (0..na).map(|b| if a == b { 1.0 } else { 0.0 }).collect()).collect()
}

/// V* as the state-wise maximum over every deterministic policy.
pub fn brute_force_optimal(m: &TabularMdp) -> Vec<f64> {
    let (ns, na) = (m.n_states(), m.n_actions());
    let mut best = vec![f64::NEG_INFINITY; ns];
    let mut actions = vec![0usize; ns];
    loop {
        let v = evaluate(m, &one_hot_policy(&actions, na));
        for s in 0..ns {
            best[s] = best[s].max(v[s]);
        }
        // odometer increment
        let mut k = 0;
        loop {
            if k == ns {
                return best;
            }
            actions[k] += 1;
            if actions[k] < na {
                break;
            }
            actions[k] = 0;
            k += 1;
        }
    }
}

pub fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}
