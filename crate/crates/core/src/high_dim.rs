//! Private clustering in high dimension by random projection.
//!
//! Points are projected to `d_hat` dimensions, clipped and rescaled into
//! the unit ball, and clustered there by [`PrivateClustering`]. The
//! clustering's partition is then used to privately sum, per cluster, the
//! count, the squared norms and every coordinate of the original points.
//! Centers are the private sums divided by the private counts, and the
//! cost estimate follows from `cost(X, mean) = sum |x|^2 - |sum x|^2 / |X|`.
//!
//! The budget is split evenly over `d + 3` parts: the low-dimensional
//! clustering, the counts, the squared norms and each coordinate.

use crate::budget::PrivacyBudget;
use crate::common::{clip_to_ball, dist2, norm2, CostKind, Op, Point, Solution};
use crate::counting::{Horizon, KeyedHistogram, NoiseMode};
use crate::decomposition::{CellId, ClusterPartition, PartitionCache};
use std::sync::Arc;
use crate::low_dim::{LowDimConfig, LowDimError, LowDimOutput, PrivateClustering};
use crate::rng::{normal_from_uniforms, unit_open, SeedTree, StableHasher};

/// `d_hat = ceil(c_proj * ln(k / beta) / alpha^2)`.
pub fn target_dim(k: usize, alpha: f64, beta: f64, c_proj: f64) -> usize {
    (c_proj * (k as f64 / beta).ln().max(0.0) / (alpha * alpha)).ceil().max(1.0) as usize
}

/// Random linear map to `d_hat` dimensions with clipping into the unit ball.
///
/// Entries are Gaussian with variance `1/d`, so squared norms shrink by
/// `d_hat/d` in expectation; the map is followed by a `sqrt(d/d_hat)`
/// rescale, a radial clip to `log2(n)` and a division by that radius.
#[derive(Clone, Debug, PartialEq)]
pub struct Projection {
    d: usize,
    dhat: usize,
    matrix: Vec<Vec<f64>>,
    scale: f64,
    clip: f64,
    identity: bool,
}

impl Projection {
    /// `d_hat >= d` gives the identity.
    pub fn sample(d: usize, dhat: usize, n_bound: f64, seed: SeedTree) -> Self {
        assert!(d >= 1 && dhat >= 1);
        if dhat >= d {
            return Projection { d, dhat: d, matrix: Vec::new(), scale: 1.0, clip: 1.0, identity: true };
        }
        let sd = 1.0 / (d as f64).sqrt();
        let matrix = (0..dhat)
            .map(|r| {
                (0..d)
                    .map(|c| {
                        let mut h = StableHasher::new(seed.seed());
                        h.write_u64(r as u64).write_u64(c as u64);
                        let a = h.finish();
                        let b = crate::rng::mix64(a ^ 0x5bd1_e995);
                        sd * normal_from_uniforms(unit_open(a), unit_open(b))
                    })
                    .collect()
            })
            .collect();
        Projection {
            d,
            dhat,
            matrix,
            scale: (d as f64 / dhat as f64).sqrt(),
            clip: n_bound.max(2.0).log2(),
            identity: false,
        }
    }

    pub fn identity(d: usize) -> Self {
        Projection { d, dhat: d, matrix: Vec::new(), scale: 1.0, clip: 1.0, identity: true }
    }

    pub fn is_identity(&self) -> bool {
        self.identity
    }

    pub fn input_dim(&self) -> usize {
        self.d
    }

    pub fn output_dim(&self) -> usize {
        self.dhat
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Clip radius before rescaling into the unit ball.
    pub fn clip_radius(&self) -> f64 {
        self.clip
    }

    /// The bare linear map.
    pub fn linear(&self, p: &[f64]) -> Point {
        if self.identity {
            return p.to_vec();
        }
        self.matrix.iter().map(|row| row.iter().zip(p).map(|(a, x)| a * x).sum()).collect()
    }

    /// Scaled and clipped to `B(0, log2 n)`, before division by the radius.
    pub fn scaled_clipped(&self, p: &[f64]) -> Point {
        let mut y = self.linear(p);
        if !self.identity {
            y.iter_mut().for_each(|v| *v *= self.scale);
            clip_to_ball(&mut y, self.clip);
        }
        y
    }

    /// Image in the unit ball.
    pub fn apply(&self, p: &[f64]) -> Point {
        let mut y = self.scaled_clipped(p);
        if !self.identity {
            y.iter_mut().for_each(|v| *v /= self.clip);
        }
        y
    }
}

/// `sum |x|^2 - |sum x|^2 / |X|`, or 0 for an empty set.
pub fn exact_cluster_cost_identity(x: &[Point]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    let d = x[0].len();
    let mut s = vec![0.0; d];
    let mut sn = 0.0;
    for p in x {
        sn += norm2(p);
        for (a, v) in s.iter_mut().zip(p) {
            *a += v;
        }
    }
    sn - norm2(&s) / x.len() as f64
}

/// Private per-cluster statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct ClusterSummary {
    pub n: f64,
    pub sum_norm: f64,
    pub sum: Point,
}

/// `sum_j max(0, SumNorm_j - |Sum_j|^2 / max(n_j, 1))`.
pub fn estimate_cost(summaries: &[ClusterSummary]) -> f64 {
    summaries.iter().map(|s| (s.sum_norm - norm2(&s.sum) / s.n.max(1.0)).max(0.0)).sum()
}

/// `Sum_j / max(n_j, 1)` clipped into the unit ball; flags `n_j <= 0`.
pub fn lift_centers(summaries: &[ClusterSummary]) -> (Vec<Point>, bool) {
    let mut degenerate = false;
    let centers = summaries
        .iter()
        .map(|s| {
            if s.n <= 0.0 {
                degenerate = true;
            }
            let mut c: Point = s.sum.iter().map(|v| v / s.n.max(1.0)).collect();
            clip_to_ball(&mut c, 1.0);
            c
        })
        .collect();
    (centers, degenerate)
}

/// Output of one copy at one timestep.
#[derive(Clone, Debug)]
pub struct HighDimOutput {
    pub low: LowDimOutput,
    /// Partition of the projected space by the `k` low-dimensional centers.
    pub partition: Arc<ClusterPartition>,
    pub summaries: Vec<ClusterSummary>,
    /// Lifted centers in the normalized input space with the cost estimate.
    pub solution: Solution,
}

/// One private clustering instance in the input dimension.
#[derive(Clone, Debug)]
pub struct HighDimClustering {
    d: usize,
    kind: CostKind,
    alpha: f64,
    projection: Projection,
    low: PrivateClustering,
    sums: KeyedHistogram<CellId>,
    partitions: PartitionCache,
}

impl HighDimClustering {
    /// `budget` is split into `d + 3` equal shares.
    pub fn new(
        projection: Projection,
        levels: u32,
        low_cfg: LowDimConfig,
        budget: &PrivacyBudget,
        horizon: Horizon,
        noise: NoiseMode,
        seed: SeedTree,
    ) -> Result<Self, LowDimError> {
        let d = projection.input_dim();
        let share = budget.epsilon() / (d + 3) as f64;
        let lb = budget.split("lowdim", share)?;
        let kind = low_cfg.kind;
        let alpha = low_cfg.alpha;
        let low = PrivateClustering::new(
            projection.output_dim(),
            levels,
            low_cfg,
            &lb,
            horizon,
            noise,
            seed.derive("lowdim"),
        )?;
        let mut allocs = vec![budget.allocate("count", share)?, budget.allocate("sum_norm", share)?];
        for i in 0..d {
            allocs.push(budget.allocate(&format!("sum_{i}"), share)?);
        }
        let sums = KeyedHistogram::new(allocs, levels as usize, 1.0, horizon, noise, seed.derive("sums").seed());
        Ok(HighDimClustering { d, kind, alpha, projection, low, sums, partitions: PartitionCache::default() })
    }

    pub fn projection(&self) -> &Projection {
        &self.projection
    }

    pub fn low(&self) -> &PrivateClustering {
        &self.low
    }

    pub fn low_mut(&mut self) -> &mut PrivateClustering {
        &mut self.low
    }

    pub fn sums(&self) -> &KeyedHistogram<CellId> {
        &self.sums
    }

    pub fn sums_mut(&mut self) -> &mut KeyedHistogram<CellId> {
        &mut self.sums
    }

    /// Inputs to the sums histogram for one point: `[1, |p|^2, p_0, ..]`.
    pub fn sum_values(p: &[f64], sign: f64) -> Vec<f64> {
        let mut v = Vec::with_capacity(p.len() + 2);
        v.push(sign);
        v.push(sign * norm2(p).min(1.0));
        v.extend(p.iter().map(|x| sign * x));
        v
    }

    /// Advance one timestep; `p` is a normalized input point.
    pub fn step(&mut self, op: Op, p: Option<&[f64]>) -> Result<(), LowDimError> {
        match op {
            Op::Noop => {
                self.low.step(Op::Noop, None)?;
                self.sums.advance()?;
            }
            Op::Insert | Op::Delete => {
                let p = p.ok_or(LowDimError::MissingPoint(op))?;
                let q = self.projection.apply(p);
                self.low.step(op, Some(&q))?;
                let sign = if op == Op::Insert { 1.0 } else { -1.0 };
                let vals = Self::sum_values(p, sign);
                let touched: Vec<(CellId, Vec<f64>)> =
                    self.low.decomposition().cells_of(&q).into_iter().map(|c| (c, vals.clone())).collect();
                self.sums.step(&touched)?;
            }
        }
        Ok(())
    }

    pub fn solve(&self) -> HighDimOutput {
        let low = self.low.solve();
        let partition = self.partitions.get(self.low.decomposition(), &low.solution.centers, self.alpha);
        let summaries: Vec<ClusterSummary> = partition
            .cluster_sums(&self.sums)
            .into_iter()
            .map(|s| ClusterSummary { n: s[0], sum_norm: s[1], sum: s[2..].to_vec() })
            .collect();
        let (centers, empty) = lift_centers(&summaries);
        let est_cost = match self.kind {
            CostKind::KMeans => estimate_cost(&summaries),
            // no private unsquared estimator: coreset cost mapped back by the clip radius
            CostKind::KMedian => low.solution.est_cost * self.projection.clip_radius(),
        };
        let degenerate = empty || low.solution.degenerate;
        HighDimOutput {
            solution: Solution { centers, cost_kind: self.kind, est_cost, degenerate },
            low,
            partition,
            summaries,
        }
    }

    /// Cluster of each point under the current partition. Not private.
    pub fn assign(&self, out: &HighDimOutput, points: &[Point]) -> Vec<Option<usize>> {
        let dec = self.low.decomposition();
        points.iter().map(|p| out.partition.assigned_center(dec, &self.projection.apply(p))).collect()
    }

    pub fn dim(&self) -> usize {
        self.d
    }
}

/// Mean's 1-median cost over the optimal 1-median cost.
pub fn mean_median_ratio(points: &[Point]) -> f64 {
    let d = points.first().map_or(0, |p| p.len());
    let m = crate::common::mean(points, d);
    let w = vec![1.0; points.len()];
    let med = crate::baseline::weiszfeld(points, &w);
    let c_mean: f64 = points.iter().map(|p| dist2(p, &m).sqrt()).sum();
    let c_med: f64 = points.iter().map(|p| dist2(p, &med).sqrt()).sum();
    if c_med == 0.0 {
        1.0
    } else {
        c_mean / c_med
    }
}
