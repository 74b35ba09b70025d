//! Private clustering in low dimension.
//!
//! [`ValueStream`] keeps one continual counter per net point counting the
//! points in its 1-neighborhood, and turns the counts into net-point
//! values. [`PrivateClustering`] runs the greedy on those values for `k'`
//! centers, privately counts the points each center serves through the
//! cluster partition, and refines the weighted centers down to `k` with a
//! non-private solver. Everything after the counters is post-processing.

use crate::baseline::refine;
use crate::budget::{BudgetError, PrivacyBudget};
use crate::common::{weighted_cost, CostKind, Op, Point, Solution};
use crate::counting::{CountingError, Horizon, KeyedHistogram, NoiseMode};
use crate::decomposition::{CellDecomposition, CellId, ClusterPartition, PartitionCache};
use std::sync::Arc;
use crate::greedy::{recursive_greedy, GreedyResult, NoisyValueTable};
use crate::nets::{NetError, NetId, NetIndex};
use crate::rng::{SeedTree, StableHasher};
use rustc_hash::FxHashSet;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum LowDimError {
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Budget(#[from] BudgetError),
    #[error(transparent)]
    Counting(#[from] CountingError),
    #[error("{0:?} requires a point")]
    MissingPoint(Op),
}

impl crate::counting::HistKey for NetId {
    fn fingerprint(&self) -> u64 {
        let mut h = StableHasher::new(0x6e6574);
        h.write_u64(u64::from(self.level));
        for &c in &self.coords {
            h.write_i64(i64::from(c));
        }
        h.finish()
    }
}

/// Per-level weight turning a count into a value: `2^-2i` or `2^-i`.
pub fn level_weight(kind: CostKind, level: u32) -> f64 {
    match kind {
        CostKind::KMeans => 0.25f64.powi(level as i32),
        CostKind::KMedian => 0.5f64.powi(level as i32),
    }
}

/// The estimation error scale `log(n)^2 log(T) / eps * (log(1/beta) + sqrt(log T))`, logs base 2.
pub fn error_scale(eps: f64, beta: f64, n: f64, t: f64) -> f64 {
    let ln = n.max(2.0).log2();
    let lt = t.max(2.0).log2();
    ln * ln * lt / eps * ((1.0 / beta).log2() + lt.sqrt())
}

/// Default Θ: three times the per-timestep bound `d 4^d E(eps, beta, n)` at beta = 0.01.
pub fn default_theta(d: usize, eps: f64, n: f64, t: f64) -> f64 {
    (3.0 * d as f64 * 4f64.powi(d as i32) * error_scale(eps, 0.01, n, t)).max(1.0)
}

/// `k' = k * ceil(c_alpha^d * ln(n / alpha))`, capped.
pub fn kprime(k: usize, alpha: f64, d: usize, n: f64, c_alpha: f64, cap: usize) -> usize {
    let f = (c_alpha.powi(d as i32) * (n.max(2.0) / alpha).ln()).ceil().max(1.0);
    let raw = (k as f64 * f).min(usize::MAX as f64 / 2.0) as usize;
    if raw > cap {
        log::info!("k' = {raw} capped at {cap}");
    }
    raw.min(cap).max(k)
}

/// Noisy counts of net-point 1-neighborhoods over the stream.
#[derive(Clone, Debug)]
pub struct ValueStream {
    nets: NetIndex,
    kind: CostKind,
    hist: KeyedHistogram<NetId>,
}

impl ValueStream {
    /// Fan-out `b = 4^d * L`: a point lies in at most `4^d` 1-neighborhoods per level.
    pub fn new(
        nets: NetIndex,
        kind: CostKind,
        budget: &PrivacyBudget,
        horizon: Horizon,
        noise: NoiseMode,
        seed: SeedTree,
    ) -> Result<Self, LowDimError> {
        let fanout = 4usize.pow(nets.dim() as u32) * nets.levels() as usize;
        let alloc = budget.allocate("net_counts", budget.epsilon())?;
        let hist = KeyedHistogram::new(vec![alloc], fanout, 1.0, horizon, noise, seed.seed());
        Ok(ValueStream { nets, kind, hist })
    }

    pub fn nets(&self) -> &NetIndex {
        &self.nets
    }

    pub fn histogram(&self) -> &KeyedHistogram<NetId> {
        &self.hist
    }

    pub fn histogram_mut(&mut self) -> &mut KeyedHistogram<NetId> {
        &mut self.hist
    }

    /// Net points whose 1-neighborhood contains `p`, over all levels.
    pub fn keys(&self, p: &[f64]) -> Vec<NetId> {
        (1..=self.nets.levels()).flat_map(|i| self.nets.covering_nets(p, i)).collect()
    }

    pub fn step(&mut self, op: Op, p: Option<&[f64]>) -> Result<(), LowDimError> {
        let sign = match op {
            Op::Insert => 1.0,
            Op::Delete => -1.0,
            Op::Noop => return Ok(self.hist.advance()?),
        };
        let p = p.ok_or(LowDimError::MissingPoint(op))?;
        let touched: Vec<(NetId, Vec<f64>)> = self.keys(p).into_iter().map(|z| (z, vec![sign])).collect();
        Ok(self.hist.step(&touched)?)
    }

    /// Noisy count `c(z, t)`.
    pub fn count(&self, z: &NetId) -> f64 {
        self.hist.query_scalar(z)
    }

    /// Exact count. Not private.
    pub fn exact_count(&self, z: &NetId) -> f64 {
        self.hist.exact(z).map_or(0.0, |s| s[0])
    }

    /// Value `v(z, t)`, clamped at 0.
    pub fn value(&self, z: &NetId) -> f64 {
        (level_weight(self.kind, z.level as u32) * self.count(z)).max(0.0)
    }

    /// Value table for the greedy.
    ///
    /// Without noise this is every touched net point with its exact value.
    /// With noise, all level-1 points are read, and the level-`(i+1)`
    /// points within `2^-i` of every read point whose value reaches Θ are
    /// read in turn. Points never read are absent (value 0).
    pub fn table(&self, theta: f64) -> NoisyValueTable {
        if self.hist.noise() == NoiseMode::Off {
            let entries: Vec<(NetId, f64)> = self
                .hist
                .touched_keys()
                .map(|z| (z.clone(), self.value(z)))
                .filter(|(_, v)| *v != 0.0)
                .collect();
            let q = entries.len();
            let mut t = NoisyValueTable::new(&self.nets, theta, entries);
            t.set_queries(q);
            return t;
        }
        let mut stack = self.nets.build_level(1).expect("level 1 is small");
        let mut seen: FxHashSet<NetId> = stack.iter().cloned().collect();
        let mut entries = Vec::new();
        while let Some(z) = stack.pop() {
            let v = self.value(&z);
            let i = z.level as u32;
            if v >= theta && i < self.nets.levels() {
                for y in self.nets.within(i + 1, &self.nets.point(&z), 0.5f64.powi(i as i32)) {
                    if seen.insert(y.clone()) {
                        stack.push(y);
                    }
                }
            }
            entries.push((z, v));
        }
        let q = entries.len();
        let mut t = NoisyValueTable::new(&self.nets, theta, entries);
        t.set_queries(q);
        t
    }
}

/// Tuning of the low-dimensional pipeline.
#[derive(Clone, Debug, PartialEq)]
pub struct LowDimConfig {
    pub k: usize,
    pub alpha: f64,
    pub kind: CostKind,
    /// Number of greedy centers `k'`.
    pub kprime: usize,
    /// Θ; `None` uses [`default_theta`].
    pub theta: Option<f64>,
    /// Fraction of the budget given to the net values; the rest counts clusters.
    pub value_share: f64,
    pub refine_restarts: usize,
    /// Bound on the dataset size used for Θ.
    pub n_bound: f64,
}

/// Output of one timestep.
#[derive(Clone, Debug)]
pub struct LowDimOutput {
    pub greedy: GreedyResult,
    pub partition: Arc<ClusterPartition>,
    /// Noisy served counts of the `k'` greedy centers, rounded and clamped.
    pub weights: Vec<f64>,
    /// Refined `k` centers; `est_cost` is their cost on the weighted coreset.
    pub solution: Solution,
    /// Set when the coreset carried no weight and greedy centers were used.
    pub refiner_fallback: bool,
}

/// Private clustering of a low-dimensional stream.
#[derive(Clone, Debug)]
pub struct PrivateClustering {
    cfg: LowDimConfig,
    values: ValueStream,
    dec: CellDecomposition,
    counts: KeyedHistogram<CellId>,
    horizon: Horizon,
    eps_values: f64,
    seed: SeedTree,
    partitions: PartitionCache,
}

impl PrivateClustering {
    pub fn new(
        d: usize,
        levels: u32,
        cfg: LowDimConfig,
        budget: &PrivacyBudget,
        horizon: Horizon,
        noise: NoiseMode,
        seed: SeedTree,
    ) -> Result<Self, LowDimError> {
        let nets = NetIndex::new(d, levels)?;
        let eps_values = budget.epsilon() * cfg.value_share;
        let vb = budget.split("make_private", eps_values)?;
        let cb = budget.split("cluster_counts", budget.epsilon() - eps_values)?;
        let values = ValueStream::new(nets, cfg.kind, &vb, horizon, noise, seed.derive("values"))?;
        let alloc = cb.allocate("count", cb.epsilon())?;
        let counts =
            KeyedHistogram::new(vec![alloc], levels as usize, 1.0, horizon, noise, seed.derive("counts").seed());
        Ok(PrivateClustering {
            cfg,
            values,
            dec: CellDecomposition::new(d, levels),
            counts,
            horizon,
            eps_values,
            seed,
            partitions: PartitionCache::default(),
        })
    }

    pub fn config(&self) -> &LowDimConfig {
        &self.cfg
    }

    pub fn values(&self) -> &ValueStream {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut ValueStream {
        &mut self.values
    }

    pub fn counts(&self) -> &KeyedHistogram<CellId> {
        &self.counts
    }

    pub fn counts_mut(&mut self) -> &mut KeyedHistogram<CellId> {
        &mut self.counts
    }

    pub fn decomposition(&self) -> &CellDecomposition {
        &self.dec
    }

    pub fn nets(&self) -> &NetIndex {
        self.values.nets()
    }

    pub fn time(&self) -> u64 {
        self.counts.time()
    }

    /// Θ in effect at the current time.
    pub fn theta(&self) -> f64 {
        self.cfg.theta.unwrap_or_else(|| {
            let t = match self.horizon {
                Horizon::Known(t) => t as f64,
                Horizon::Unknown => self.time().max(2) as f64,
            };
            default_theta(self.dec.dim(), self.eps_values, self.cfg.n_bound, t)
        })
    }

    /// Advance one timestep.
    pub fn step(&mut self, op: Op, p: Option<&[f64]>) -> Result<(), LowDimError> {
        self.values.step(op, p)?;
        match op {
            Op::Noop => self.counts.advance()?,
            Op::Insert | Op::Delete => {
                let p = p.ok_or(LowDimError::MissingPoint(op))?;
                let v = if op == Op::Insert { 1.0 } else { -1.0 };
                let touched: Vec<(CellId, Vec<f64>)> =
                    self.dec.cells_of(p).into_iter().map(|c| (c, vec![v])).collect();
                self.counts.step(&touched)?;
            }
        }
        Ok(())
    }

    /// Greedy `k'` centers and their partition at the current time.
    pub fn greedy_and_partition(&self) -> (GreedyResult, Arc<ClusterPartition>) {
        let table = self.values.table(self.theta());
        let greedy = recursive_greedy(self.values.nets(), &table, self.cfg.kprime);
        let partition = self.partitions.get(&self.dec, &greedy.centers, self.cfg.alpha);
        (greedy, partition)
    }

    /// Solve for `k` centers at the current time.
    pub fn solve(&self) -> LowDimOutput {
        let (greedy, partition) = self.greedy_and_partition();
        let weights: Vec<f64> =
            partition.cluster_sums(&self.counts).into_iter().map(|s| s[0].round().max(0.0)).collect();
        let k = self.cfg.k;
        let total: f64 = weights.iter().sum();
        let (centers, refiner_fallback) = if total > 0.0 {
            let seed = self.seed.derive_index("refine", self.time());
            let c = refine(&greedy.centers, &weights, k, self.cfg.kind, self.cfg.refine_restarts, seed);
            (c.centers, false)
        } else {
            let mut c: Vec<Point> = greedy.centers.iter().take(k).cloned().collect();
            while c.len() < k {
                c.push(c.last().cloned().expect("greedy returns k' >= 1 centers"));
            }
            (c, true)
        };
        let est_cost = weighted_cost(&greedy.centers, &weights, &centers, self.cfg.kind);
        let degenerate = greedy.degenerate || refiner_fallback || has_duplicates(&centers);
        LowDimOutput {
            solution: Solution { centers, cost_kind: self.cfg.kind, est_cost, degenerate },
            greedy,
            partition,
            weights,
            refiner_fallback,
        }
    }
}

fn has_duplicates(c: &[Point]) -> bool {
    c.iter().enumerate().any(|(i, a)| c[..i].iter().any(|b| a == b))
}
