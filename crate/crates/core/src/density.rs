//! Gaussian kernel density estimates on regular grids.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::HipMdpFamily;
use crate::rng;
use crate::solvers;

pub const DEFAULT_BINS: usize = 64;
pub const MAX_AXES: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub name: String,
    pub min: f64,
    pub max: f64,
    pub n_bins: usize,
}

impl Axis {
    pub fn new(name: impl Into<String>, min: f64, max: f64, n_bins: usize) -> Self {
        Self { name: name.into(), min, max, n_bins }
    }

    /// Grid nodes, `min` and `max` included.
    pub fn nodes(&self) -> Vec<f64> {
        if self.n_bins == 1 {
            return vec![0.5 * (self.min + self.max)];
        }
        let step = (self.max - self.min) / (self.n_bins - 1) as f64;
        (0..self.n_bins).map(|i| self.min + step * i as f64).collect()
    }

    fn step(&self) -> f64 {
        if self.n_bins > 1 {
            (self.max - self.min) / (self.n_bins - 1) as f64
        } else {
            self.max - self.min
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bandwidth {
    /// `σ_d · n^(−1/(d+4))` per axis.
    Scott,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityGrid {
    pub axes: Vec<Axis>,
    /// Row-major over the axes (last axis fastest).
    pub values: Vec<f64>,
    /// Trapezoidal integral of `values` over the grid.
    pub normalization: f64,
    /// Per-axis bandwidth actually used.
    pub bandwidths: Vec<f64>,
}

fn check_axes(axes: &[Axis]) -> Result<()> {
    if axes.is_empty() || axes.len() > MAX_AXES {
        return Err(Error::InvalidArgument(format!("grids have 1 to {MAX_AXES} axes")));
    }
    for a in axes {
        if a.n_bins < 2 || !(a.min < a.max) || !a.min.is_finite() || !a.max.is_finite() {
            return Err(Error::InvalidArgument(format!("axis {} needs min < max and at least 2 bins", a.name)));
        }
    }
    Ok(())
}

fn trapezoid_weights(axis: &Axis) -> Vec<f64> {
    let h = axis.step();
    let mut w = vec![h; axis.n_bins];
    w[0] *= 0.5;
    w[axis.n_bins - 1] *= 0.5;
    w
}

/// Trapezoidal integral of a row-major tensor over `axes`.
pub fn trapezoid_integral(axes: &[Axis], values: &[f64]) -> f64 {
    let weights: Vec<Vec<f64>> = axes.iter().map(trapezoid_weights).collect();
    let mut total = 0.0;
    for (idx, v) in values.iter().enumerate() {
        let mut rem = idx;
        let mut w = 1.0;
        for (ax, wts) in axes.iter().zip(&weights).rev() {
            w *= wts[rem % ax.n_bins];
            rem /= ax.n_bins;
        }
        total += w * v;
    }
    total
}

fn std_dev(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = xs.clone().count() as f64;
    let mean = xs.clone().sum::<f64>() / n;
    (xs.map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Gaussian product-kernel density of `points` evaluated on the grid nodes.
///
/// Under Scott's rule an axis with zero spread falls back to one grid step.
pub fn kde(points: &[Vec<f64>], axes: &[Axis], bandwidth: Bandwidth) -> Result<DensityGrid> {
    check_axes(axes)?;
    if points.len() < 2 {
        return Err(Error::InsufficientData("kde needs at least two points".into()));
    }
    let d = axes.len();
    if points.iter().any(|p| p.len() != d || p.iter().any(|x| !x.is_finite())) {
        return Err(Error::InvalidArgument(format!("points must be finite {d}-vectors")));
    }
    let n = points.len() as f64;
    let bandwidths: Vec<f64> = match bandwidth {
        Bandwidth::Fixed(h) if h > 0.0 && h.is_finite() => vec![h; d],
        Bandwidth::Fixed(h) => return Err(Error::InvalidArgument(format!("bandwidth must be positive, got {h}"))),
        Bandwidth::Scott => (0..d)
            .map(|k| {
                let sigma = std_dev(points.iter().map(|p| p[k]));
                let h = sigma * n.powf(-1.0 / (d as f64 + 4.0));
                if h > 0.0 {
                    h
                } else {
                    log::warn!("axis {} has zero spread; using a fixed bandwidth of one grid step", axes[k].name);
                    axes[k].step()
                }
            })
            .collect(),
    };

    // Separable kernel: per-axis weights of each point at each node.
    let nodes: Vec<Vec<f64>> = axes.iter().map(Axis::nodes).collect();
    let kernels: Vec<Vec<Vec<f64>>> = (0..d)
        .map(|k| {
            let h = bandwidths[k];
            let c = 1.0 / (h * (2.0 * std::f64::consts::PI).sqrt());
            points
                .iter()
                .map(|p| nodes[k].iter().map(|x| c * (-0.5 * ((x - p[k]) / h).powi(2)).exp()).collect())
                .collect()
        })
        .collect();

    let values: Vec<f64> = if d == 1 {
        (0..axes[0].n_bins).map(|i| kernels[0].iter().map(|row| row[i]).sum::<f64>() / n).collect()
    } else {
        let (n0, n1) = (axes[0].n_bins, axes[1].n_bins);
        let mut v = vec![0.0; n0 * n1];
        for (k0, k1) in kernels[0].iter().zip(&kernels[1]) {
            for i in 0..n0 {
                if k0[i] == 0.0 {
                    continue;
                }
                let row = &mut v[i * n1..(i + 1) * n1];
                for (cell, w) in row.iter_mut().zip(k1) {
                    *cell += k0[i] * w;
                }
            }
        }
        v.iter().map(|x| x / n).collect()
    };
    let normalization = trapezoid_integral(axes, &values);
    Ok(DensityGrid { axes: axes.to_vec(), values, normalization, bandwidths })
}

impl DensityGrid {
    /// Grid values scaled to sum to one.
    pub fn histogram(&self) -> Vec<f64> {
        let total: f64 = self.values.iter().sum();
        if total > 0.0 {
            self.values.iter().map(|v| v / total).collect()
        } else {
            vec![1.0 / self.values.len() as f64; self.values.len()]
        }
    }

    /// Node coordinates of flat index `idx`.
    pub fn node(&self, idx: usize) -> Vec<f64> {
        let mut rem = idx;
        let mut out = vec![0.0; self.axes.len()];
        for (k, ax) in self.axes.iter().enumerate().rev() {
            let step = ax.step();
            out[k] = ax.min + step * (rem % ax.n_bins) as f64;
            rem /= ax.n_bins;
        }
        out
    }

    pub fn argmax(&self) -> usize {
        solvers::argmax(&self.values)
    }

    /// Long-format CSV: one column per axis, then `density`.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let header: Vec<String> = self.axes.iter().map(|a| csv_field(&a.name)).chain(["density".to_string()]).collect();
        out.push_str(&header.join(","));
        out.push('\n');
        for (idx, v) in self.values.iter().enumerate() {
            for x in self.node(idx) {
                let _ = write!(out, "{x},");
            }
            let _ = writeln!(out, "{v}");
        }
        out
    }
}

/// Quote a CSV field when it contains a delimiter, quote or line break.
pub fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityComparison {
    pub l1_distance: f64,
    pub js_divergence: f64,
}

/// L1 distance and Jensen-Shannon divergence (nats) between the normalized histograms.
pub fn compare_densities(g1: &DensityGrid, g2: &DensityGrid) -> Result<DensityComparison> {
    if g1.axes != g2.axes {
        return Err(Error::InvalidArgument("density grids have different axes".into()));
    }
    let (p, q) = (g1.histogram(), g2.histogram());
    let l1_distance = p.iter().zip(&q).map(|(a, b)| (a - b).abs()).sum();
    let half_kl = |x: &[f64]| -> f64 {
        x.iter()
            .zip(p.iter().zip(&q))
            .filter(|(xi, _)| **xi > 0.0)
            .map(|(xi, (a, b))| xi * (2.0 * xi / (a + b)).ln())
            .sum::<f64>()
    };
    let js = 0.5 * half_kl(&p) + 0.5 * half_kl(&q);
    Ok(DensityComparison { l1_distance, js_divergence: js.clamp(0.0, std::f64::consts::LN_2) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MotivatingConfig {
    pub n_rollouts: usize,
    pub horizon: usize,
    pub n_bins: usize,
    pub bandwidth: Bandwidth,
    /// Grid padding beyond the coordinate range, in units of the largest bandwidth.
    pub padding: f64,
}

impl Default for MotivatingConfig {
    fn default() -> Self {
        Self { n_rollouts: 200, horizon: 60, n_bins: DEFAULT_BINS, bandwidth: Bandwidth::Scott, padding: 3.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairComparison {
    pub members: (usize, usize),
    pub state: DensityComparison,
    pub action: DensityComparison,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotivatingResult {
    pub state_grids: Vec<DensityGrid>,
    pub action_grids: Vec<DensityGrid>,
    pub comparisons: Vec<PairComparison>,
    pub config: MotivatingConfig,
}

fn axes_for(name_prefix: &str, points_by_member: &[Vec<Vec<f64>>], cfg: &MotivatingConfig) -> Result<Vec<Axis>> {
    let all: Vec<&Vec<f64>> = points_by_member.iter().flatten().collect();
    let d = all.first().map(|p| p.len()).ok_or_else(|| Error::InsufficientData("no samples".into()))?;
    if d == 0 || d > MAX_AXES {
        return Err(Error::InvalidArgument(format!("{name_prefix} coordinates must have 1 or 2 dimensions")));
    }
    // The widest bandwidth any member will use sets the padding.
    let mut pad = vec![0.0f64; d];
    for pts in points_by_member {
        for (k, p) in pad.iter_mut().enumerate() {
            let h = match cfg.bandwidth {
                Bandwidth::Fixed(h) => h,
                Bandwidth::Scott => std_dev(pts.iter().map(|x| x[k])) * (pts.len() as f64).powf(-1.0 / (d as f64 + 4.0)),
            };
            *p = p.max(h);
        }
    }
    Ok((0..d)
        .map(|k| {
            let lo = all.iter().map(|p| p[k]).fold(f64::INFINITY, f64::min);
            let hi = all.iter().map(|p| p[k]).fold(f64::NEG_INFINITY, f64::max);
            let margin = (cfg.padding * pad[k]).max(if hi > lo { 0.0 } else { 1.0 });
            Axis::new(format!("{name_prefix}{k}"), lo - margin, hi + margin, cfg.n_bins)
        })
        .collect())
}

/// Solve every member, roll out its optimal policy and compare state and
/// action densities between all member pairs.
pub fn motivating_example(family: &HipMdpFamily, n_rollouts: usize, rng_seed: u64) -> Result<MotivatingResult> {
    motivating_example_with(family, rng_seed, &MotivatingConfig { n_rollouts, ..MotivatingConfig::default() })
}

pub fn motivating_example_with(family: &HipMdpFamily, rng_seed: u64, cfg: &MotivatingConfig) -> Result<MotivatingResult> {
    if family.len() < 2 {
        return Err(Error::InvalidArgument("motivating example needs at least two members".into()));
    }
    let first = family.member(0);
    let scoords = first.state_coords().ok_or(Error::MissingCoords)?;
    let acoords = first
        .action_coords()
        .ok_or_else(|| Error::InvalidArgument("action_coords required".into()))?;

    let mut states = Vec::with_capacity(family.len());
    let mut actions = Vec::with_capacity(family.len());
    // Every member rolls out from the same initial-state draws.
    let seed = rng::child_seed(rng_seed, "motivating/rollouts", 0);
    for m in family.members() {
        let pi = solvers::greedy_policy(&solvers::solve_optimal(m)?)?;
        let trajs = solvers::sample_trajectories(m, &pi, cfg.n_rollouts, cfg.horizon, seed)?;
        let ts = trajs.iter().flatten();
        states.push(ts.clone().map(|t| scoords[t.s].clone()).collect::<Vec<_>>());
        actions.push(ts.map(|t| acoords[t.a].clone()).collect::<Vec<_>>());
    }

    let state_axes = axes_for("s", &states, cfg)?;
    let action_axes = axes_for("a", &actions, cfg)?;
    let state_grids = states.iter().map(|p| kde(p, &state_axes, cfg.bandwidth)).collect::<Result<Vec<_>>>()?;
    let action_grids = actions.iter().map(|p| kde(p, &action_axes, cfg.bandwidth)).collect::<Result<Vec<_>>>()?;

    let mut comparisons = Vec::new();
    for i in 0..family.len() {
        for j in (i + 1)..family.len() {
            comparisons.push(PairComparison {
                members: (i, j),
                state: compare_densities(&state_grids[i], &state_grids[j])?,
                action: compare_densities(&action_grids[i], &action_grids[j])?,
            });
        }
    }
    Ok(MotivatingResult { state_grids, action_grids, comparisons, config: cfg.clone() })
}
