//! Probability boosting by independent copies.
//!
//! Copy `i` runs at `eps / (s(kappa) * i^(1+kappa))`, where `s(kappa)` is
//! the sum of `i^-(1+kappa)` over all `i >= 1`, so any number of copies
//! stays within `eps`. At each timestep the copy with the smallest private
//! cost estimate is output. When the stream length is unknown, copies are
//! added as time grows, each one first replaying the live points in their
//! arrival order.

use crate::budget::PrivacyBudget;
use crate::common::{CostKind, Op, Point, Solution};
use crate::counting::{Horizon, NoiseMode};
use crate::high_dim::{HighDimClustering, HighDimOutput, Projection};
use crate::low_dim::{LowDimConfig, LowDimError};
use crate::rng::SeedTree;
use std::collections::{HashMap, VecDeque};

/// `sum_{i>=1} i^-(1+kappa)`, accurate to about 1e-12.
pub fn series_sum(kappa: f64) -> f64 {
    assert!(kappa > 0.0, "kappa must be positive");
    let s = 1.0 + kappa;
    let n = 2000usize;
    let head: f64 = (1..n).map(|i| (i as f64).powf(-s)).sum();
    let nf = n as f64;
    // Euler-Maclaurin tail from n
    head + nf.powf(-kappa) / kappa + 0.5 * nf.powf(-s) + s * nf.powf(-s - 1.0) / 12.0
        - s * (s + 1.0) * (s + 2.0) * nf.powf(-s - 3.0) / 720.0
}

/// Budget of copy `i` (1-based).
pub fn copy_epsilon(eps: f64, kappa: f64, i: usize) -> f64 {
    eps / (series_sum(kappa) * (i as f64).powf(1.0 + kappa))
}

/// `3 / ln(5/2)`.
pub fn c1() -> f64 {
    3.0 / 2.5f64.ln()
}

/// `ln(pi^2 / (6 beta)) / ln(5/2)`.
pub fn c2(beta: f64) -> f64 {
    (std::f64::consts::PI.powi(2) / (6.0 * beta)).ln() / 2.5f64.ln()
}

/// Copies needed by time `t`: `floor(c1 * floor(log2 t) + c2)`, at least 1.
pub fn copies_at(t: u64, beta: f64) -> usize {
    let lt = f64::from(63 - t.max(1).leading_zeros());
    ((c1() * lt + c2(beta)).floor() as usize).max(1)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CopySchedule {
    /// A fixed set of copies from the start.
    Fixed(usize),
    /// Copies added as `t` grows, per [`copies_at`].
    Growing,
    /// One copy holding the whole budget (k-median).
    Single,
}

/// Live points in arrival order.
#[derive(Clone, Debug, Default)]
pub struct LiveSet {
    slots: Vec<Option<Point>>,
    index: HashMap<Vec<u64>, VecDeque<usize>>,
    len: usize,
}

fn bits(p: &[f64]) -> Vec<u64> {
    p.iter().map(|x| x.to_bits()).collect()
}

impl LiveSet {
    pub fn insert(&mut self, p: Point) {
        self.index.entry(bits(&p)).or_default().push_back(self.slots.len());
        self.slots.push(Some(p));
        self.len += 1;
    }

    /// Remove the earliest copy of `p`; false if absent.
    pub fn remove(&mut self, p: &[f64]) -> bool {
        let key = bits(p);
        let Some(q) = self.index.get_mut(&key) else {
            return false;
        };
        let Some(slot) = q.pop_front() else {
            return false;
        };
        if q.is_empty() {
            self.index.remove(&key);
        }
        self.slots[slot] = None;
        self.len -= 1;
        true
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        self.index.contains_key(&bits(p))
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Live points in arrival order.
    pub fn iter(&self) -> impl Iterator<Item = &Point> {
        self.slots.iter().flatten()
    }

    pub fn to_vec(&self) -> Vec<Point> {
        self.iter().cloned().collect()
    }
}

/// Everything needed to start a copy.
#[derive(Clone, Debug)]
pub struct CopyFactory {
    pub d: usize,
    /// Target projected dimension; `>= d` means no projection.
    pub dhat: usize,
    pub levels: u32,
    pub n_bound: f64,
    pub low: LowDimConfig,
    pub noise: NoiseMode,
    /// Horizon for copies that start at time 0.
    pub horizon: Horizon,
}

impl CopyFactory {
    fn build(
        &self,
        budget: &PrivacyBudget,
        seed: SeedTree,
        horizon: Horizon,
    ) -> Result<HighDimClustering, LowDimError> {
        let projection = if self.dhat >= self.d {
            Projection::identity(self.d)
        } else {
            Projection::sample(self.d, self.dhat, self.n_bound, seed.derive("projection"))
        };
        HighDimClustering::new(projection, self.levels, self.low.clone(), budget, horizon, self.noise, seed)
    }
}

/// Result of one boosted timestep.
#[derive(Clone, Debug)]
pub struct BoostOutput {
    /// 1-based index of the selected copy.
    pub chosen: usize,
    pub solution: Solution,
    pub estimates: Vec<f64>,
    pub outputs: Vec<HighDimOutput>,
}

/// A set of independent copies.
#[derive(Clone, Debug)]
pub struct Booster {
    factory: CopyFactory,
    budget: PrivacyBudget,
    schedule: CopySchedule,
    kappa: f64,
    beta: f64,
    seed: SeedTree,
    copies: Vec<HighDimClustering>,
    t: u64,
}

impl Booster {
    /// Start the copies and replay `live` into them.
    pub fn new(
        factory: CopyFactory,
        budget: PrivacyBudget,
        schedule: CopySchedule,
        kappa: f64,
        beta: f64,
        seed: SeedTree,
        live: &LiveSet,
    ) -> Result<Self, LowDimError> {
        let mut b = Booster { factory, budget, schedule, kappa, beta, seed, copies: Vec::new(), t: 0 };
        let initial = match schedule {
            CopySchedule::Fixed(m) => m.max(1),
            CopySchedule::Growing => copies_at(1, beta),
            CopySchedule::Single => 1,
        };
        for _ in 0..initial {
            b.spawn(live)?;
        }
        Ok(b)
    }

    pub fn copies(&self) -> &[HighDimClustering] {
        &self.copies
    }

    pub fn copies_mut(&mut self) -> &mut [HighDimClustering] {
        &mut self.copies
    }

    pub fn kind(&self) -> CostKind {
        self.factory.low.kind
    }

    fn spawn(&mut self, live: &LiveSet) -> Result<(), LowDimError> {
        let i = self.copies.len() + 1;
        let eps = match self.schedule {
            CopySchedule::Single => self.budget.epsilon(),
            _ => copy_epsilon(self.budget.epsilon(), self.kappa, i),
        };
        let cb = self.budget.split(&format!("copy{i}"), eps)?;
        // a copy replaying history cannot know its final length
        let horizon = if live.is_empty() && self.t == 0 { self.factory.horizon } else { Horizon::Unknown };
        let mut c = self.factory.build(&cb, self.seed.derive_index("copy", i as u64), horizon)?;
        for p in live.iter() {
            c.step(Op::Insert, Some(p))?;
        }
        self.copies.push(c);
        Ok(())
    }

    /// Feed one event to every copy, add copies if due, and select.
    /// `live` must already reflect the event.
    pub fn step(&mut self, op: Op, p: Option<&[f64]>, live: &LiveSet) -> Result<BoostOutput, LowDimError> {
        for c in &mut self.copies {
            c.step(op, p)?;
        }
        self.t += 1;
        if self.schedule == CopySchedule::Growing {
            while self.copies.len() < copies_at(self.t, self.beta) {
                self.spawn(live)?;
            }
        }
        let outputs: Vec<HighDimOutput> = self.copies.iter().map(|c| c.solve()).collect();
        let estimates: Vec<f64> = outputs.iter().map(|o| o.solution.est_cost).collect();
        let mut chosen = 0;
        for (i, e) in estimates.iter().enumerate() {
            if *e < estimates[chosen] {
                chosen = i;
            }
        }
        Ok(BoostOutput { chosen: chosen + 1, solution: outputs[chosen].solution.clone(), estimates, outputs })
    }
}
