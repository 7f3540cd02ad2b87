//! Exact optimal transport between small discrete distributions.

use crate::error::{Error, Result};

const MASS_TOL: f64 = 1e-12;
const RESIDUAL_EPS: f64 = 1e-15;

struct Arc {
    to: usize,
    cap: f64,
    cost: f64,
}

struct Network {
    arcs: Vec<Arc>,
    out: Vec<Vec<usize>>,
}

impl Network {
    fn new(n: usize) -> Self {
        Self { arcs: Vec::new(), out: vec![Vec::new(); n] }
    }

    fn add(&mut self, from: usize, to: usize, cap: f64, cost: f64) {
        self.out[from].push(self.arcs.len());
        self.arcs.push(Arc { to, cap, cost });
        self.out[to].push(self.arcs.len());
        self.arcs.push(Arc { to: from, cap: 0.0, cost: -cost });
    }

    /// Bellman-Ford over the residual graph; returns the predecessor arc of each node.
    fn shortest_path(&self, source: usize) -> Vec<Option<usize>> {
        let n = self.out.len();
        let mut dist = vec![f64::INFINITY; n];
        let mut pred = vec![None; n];
        dist[source] = 0.0;
        for _ in 0..n {
            let mut changed = false;
            for u in 0..n {
                if dist[u].is_infinite() {
                    continue;
                }
                for &id in &self.out[u] {
                    let arc = &self.arcs[id];
                    if arc.cap > RESIDUAL_EPS && dist[u] + arc.cost < dist[arc.to] - 1e-14 {
                        dist[arc.to] = dist[u] + arc.cost;
                        pred[arc.to] = Some(id);
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        pred
    }
}

fn check_distribution(name: &str, p: &[f64]) -> Result<()> {
    if p.is_empty() {
        return Err(Error::InvalidArgument(format!("{name} is empty")));
    }
    if p.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::InvalidArgument(format!("{name} has negative or non-finite mass")));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!("{name} sums to {sum}")));
    }
    Ok(())
}

/// Exact W1 between `p` and `q` under ground cost `cost[i][j]`, by successive
/// shortest augmenting paths on the transportation network.
pub fn wasserstein1_discrete(p: &[f64], q: &[f64], cost: &[Vec<f64>]) -> Result<f64> {
    check_distribution("p", p)?;
    check_distribution("q", q)?;
    let (n, m) = (p.len(), q.len());
    if cost.len() != n || cost.iter().any(|row| row.len() != m) {
        return Err(Error::InvalidArgument(format!("cost matrix must be {n}x{m}")));
    }
    if cost.iter().flatten().any(|c| !c.is_finite() || *c < 0.0) {
        return Err(Error::InvalidArgument("cost entries must be finite and nonnegative".into()));
    }

    let (source, sink) = (n + m, n + m + 1);
    let mut net = Network::new(n + m + 2);
    for (i, &pi) in p.iter().enumerate() {
        net.add(source, i, pi, 0.0);
    }
    for (j, &qj) in q.iter().enumerate() {
        net.add(n + j, sink, qj, 0.0);
    }
    for (i, row) in cost.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            net.add(i, n + j, f64::INFINITY, c);
        }
    }

    let target = p.iter().sum::<f64>().min(q.iter().sum());
    let mut shipped = 0.0;
    let mut total = 0.0;
    while target - shipped > MASS_TOL {
        let pred = net.shortest_path(source);
        if pred[sink].is_none() {
            break;
        }
        let mut path = Vec::new();
        let mut v = sink;
        while let Some(id) = pred[v] {
            path.push(id);
            v = net.arcs[id ^ 1].to;
        }
        let push = path.iter().map(|&id| net.arcs[id].cap).fold(target - shipped, f64::min);
        for &id in &path {
            net.arcs[id].cap -= push;
            net.arcs[id ^ 1].cap += push;
            total += push * net.arcs[id].cost;
        }
        shipped += push;
    }
    if target - shipped > 1e-9 {
        return Err(Error::Numerical(format!("transport left {} mass unshipped", target - shipped)));
    }
    Ok(total.max(0.0))
}

/// Pairwise L1 distances between coordinate vectors.
pub fn l1_cost_matrix(coords: &[Vec<f64>]) -> Vec<Vec<f64>> {
    coords.iter().map(|x| coords.iter().map(|y| crate::mdp::l1(x, y)).collect()).collect()
}
