//! The end-to-end streaming engine.
//!
//! [`Engine`] validates and normalizes events, keeps the live multiset,
//! drives a [`Booster`] and converts results back to raw units. When no
//! bound on the dataset size is declared, the engine starts from a guess
//! and restarts with a doubled guess once a private size counter, less
//! its `1 - beta` error bound, reaches the current one. Restart `j` runs at
//! `eps / (s(kappa) * j^(1+kappa))` of the remaining budget.

use crate::boosting::{copy_epsilon, BoostOutput, Booster, CopyFactory, CopySchedule, LiveSet};
use crate::budget::{BudgetError, Ledger, PrivacyBudget};
use crate::common::{cost, CostKind, InputError, Normalizer, Op, Point, UpdateEvent};
use crate::counting::{CountingError, Horizon, NoiseMode, NoisyCounter};
use crate::high_dim::target_dim;
use crate::low_dim::{kprime, LowDimConfig, LowDimError};
use crate::nets::MAX_DIM;
use crate::rng::SeedTree;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Input(#[from] InputError),
    #[error(transparent)]
    Budget(#[from] BudgetError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Mechanism(LowDimError),
}

impl From<LowDimError> for EngineError {
    fn from(e: LowDimError) -> Self {
        match e {
            LowDimError::Budget(b) => EngineError::Budget(b),
            other => EngineError::Mechanism(other),
        }
    }
}

impl From<CountingError> for EngineError {
    fn from(e: CountingError) -> Self {
        EngineError::Mechanism(LowDimError::Counting(e))
    }
}

/// All parameters of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub epsilon: f64,
    pub k: usize,
    /// Radius of the input domain.
    pub lambda: f64,
    pub alpha: f64,
    pub beta: f64,
    pub kappa: f64,
    pub cost: CostKind,
    pub dim_reduce: bool,
    pub seed: u64,
    /// Bound on the number of live points; unknown when absent.
    pub nmax: Option<u64>,
    /// Stream length; unknown when absent.
    pub t_max: Option<u64>,
    pub noise: NoiseMode,
    /// Number of boosting copies; the schedule decides when absent.
    pub copies: Option<usize>,
    /// Θ override.
    pub theta: Option<f64>,
    /// Constant in the projected dimension.
    pub c_proj: f64,
    /// Explicit projected dimension, overriding `c_proj`.
    pub projected_dim: Option<usize>,
    /// Base of `k' = k * ceil(c_alpha^d * ln(n/alpha))`; `4/alpha` when absent.
    pub c_alpha: Option<f64>,
    pub kprime_cap: usize,
    pub refine_restarts: usize,
    /// Fraction of the low-dimensional budget spent on net values.
    pub value_share: f64,
    /// First dataset-size guess when `nmax` is unknown.
    pub n_guess: u64,
    /// Budget fraction of the private size counter when `nmax` is unknown.
    pub size_share: f64,
    /// Marks a run whose output is meant for release.
    pub private_release: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            epsilon: 1.0,
            k: 2,
            lambda: 1.0,
            alpha: 0.25,
            beta: 0.1,
            kappa: 1.0,
            cost: CostKind::KMeans,
            dim_reduce: true,
            seed: 0,
            nmax: None,
            t_max: None,
            noise: NoiseMode::On,
            copies: None,
            theta: None,
            c_proj: 8.0,
            projected_dim: None,
            c_alpha: None,
            kprime_cap: 64,
            refine_restarts: 4,
            value_share: 0.5,
            n_guess: 100,
            size_share: 0.1,
            private_release: false,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |m: &str| Err(EngineError::Config(m.to_string()));
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return bad("epsilon must be positive");
        }
        if self.k == 0 {
            return bad("k must be at least 1");
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be positive");
        }
        if !(self.alpha > 0.0 && self.alpha <= 0.25) {
            return bad("alpha must lie in (0, 1/4]");
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return bad("beta must lie in (0, 1)");
        }
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return bad("kappa must be positive");
        }
        if !(self.value_share > 0.0 && self.value_share < 1.0) {
            return bad("value_share must lie in (0, 1)");
        }
        if !(self.size_share > 0.0 && self.size_share < 1.0) {
            return bad("size_share must lie in (0, 1)");
        }
        if self.nmax == Some(0) || self.t_max == Some(0) || self.copies == Some(0) {
            return bad("nmax, t_max and copies must be positive");
        }
        if self.kprime_cap < self.k {
            return bad("kprime_cap must be at least k");
        }
        Ok(())
    }

    /// Dimension the clustering runs in for input dimension `d`.
    pub fn clustering_dim(&self, d: usize) -> usize {
        if !self.dim_reduce {
            return d;
        }
        self.projected_dim.unwrap_or_else(|| target_dim(self.k, self.alpha, self.beta, self.c_proj)).min(d)
    }
}

/// Levels `ceil(log2 n)`, at least 1.
pub fn levels_for(n: u64) -> u32 {
    (64 - (n.max(2) - 1).leading_zeros()).max(1)
}

/// One output row.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepOutput {
    pub t: u64,
    /// Centers in raw units.
    pub centers: Vec<Point>,
    /// Private cost estimate in raw units.
    pub est_cost: f64,
    pub degenerate: bool,
    /// 1-based index of the selected copy.
    pub chosen_copy: usize,
    /// Restart epoch (1-based).
    pub epoch: usize,
}

/// The streaming engine.
#[derive(Debug)]
pub struct Engine {
    cfg: PipelineConfig,
    d: usize,
    normalizer: Normalizer,
    root: PrivacyBudget,
    epochs_budget: PrivacyBudget,
    size: Option<NoisyCounter>,
    booster: Booster,
    epoch: usize,
    n_bound: u64,
    live: LiveSet,
    last_t: Option<u64>,
    seed: SeedTree,
}

impl Engine {
    pub fn new(cfg: PipelineConfig, d: usize) -> Result<Self, EngineError> {
        cfg.validate()?;
        if d == 0 {
            return Err(EngineError::Config("dimension must be at least 1".into()));
        }
        let dc = cfg.clustering_dim(d);
        if dc > MAX_DIM {
            return Err(EngineError::Config(format!(
                "clustering dimension {dc} exceeds {MAX_DIM}; enable projection or set projected_dim"
            )));
        }
        let seed = SeedTree::new(cfg.seed);
        let root = PrivacyBudget::root(cfg.epsilon)?;
        let horizon = cfg.t_max.map_or(Horizon::Unknown, Horizon::Known);
        let (size, epochs_budget) = match cfg.nmax {
            Some(_) => (None, root.split("boost", cfg.epsilon)?),
            None => {
                let se = cfg.epsilon * cfg.size_share;
                let a = root.allocate("size_monitor", se)?;
                let c = NoisyCounter::new(a, 1.0, horizon, cfg.noise, seed.derive("size").seed());
                (Some(c), root.split("epochs", cfg.epsilon - se)?)
            }
        };
        let n_bound = cfg.nmax.unwrap_or(cfg.n_guess.max(2));
        let live = LiveSet::default();
        let booster = Self::make_booster(&cfg, d, &epochs_budget, 1, n_bound, horizon, &seed, &live)?;
        Ok(Engine {
            normalizer: Normalizer::new(cfg.lambda),
            cfg,
            d,
            root,
            epochs_budget,
            size,
            booster,
            epoch: 1,
            n_bound,
            live,
            last_t: None,
            seed,
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn make_booster(
        cfg: &PipelineConfig,
        d: usize,
        epochs_budget: &PrivacyBudget,
        epoch: usize,
        n_bound: u64,
        horizon: Horizon,
        seed: &SeedTree,
        live: &LiveSet,
    ) -> Result<Booster, EngineError> {
        let budget = if cfg.nmax.is_some() {
            epochs_budget.clone()
        } else {
            let e = copy_epsilon(epochs_budget.epsilon(), cfg.kappa, epoch);
            epochs_budget.split(&format!("epoch{epoch}"), e)?
        };
        let dc = cfg.clustering_dim(d);
        let c_alpha = cfg.c_alpha.unwrap_or(4.0 / cfg.alpha);
        let low = LowDimConfig {
            k: cfg.k,
            alpha: cfg.alpha,
            kind: cfg.cost,
            kprime: kprime(cfg.k, cfg.alpha, dc, n_bound as f64, c_alpha, cfg.kprime_cap),
            theta: cfg.theta,
            value_share: cfg.value_share,
            refine_restarts: cfg.refine_restarts,
            n_bound: n_bound as f64,
        };
        let factory = CopyFactory {
            d,
            dhat: dc,
            levels: levels_for(n_bound),
            n_bound: n_bound as f64,
            low,
            noise: cfg.noise,
            horizon,
        };
        let schedule = match (cfg.cost, cfg.copies, cfg.t_max) {
            (CostKind::KMedian, ..) => CopySchedule::Single,
            (_, Some(m), _) => CopySchedule::Fixed(m),
            (_, None, Some(t)) => CopySchedule::Fixed(crate::boosting::copies_at(t, cfg.beta)),
            (_, None, None) => CopySchedule::Growing,
        };
        if cfg.cost == CostKind::KMedian && cfg.copies.is_some_and(|m| m > 1) {
            log::warn!("k-median runs a single copy; ignoring copies = {:?}", cfg.copies);
        }
        Ok(Booster::new(
            factory,
            budget,
            schedule,
            cfg.kappa,
            cfg.beta,
            seed.derive_index("epoch", epoch as u64),
            live,
        )?)
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn ledger(&self) -> Ledger {
        self.root.ledger()
    }

    pub fn booster(&self) -> &Booster {
        &self.booster
    }

    pub fn booster_mut(&mut self) -> &mut Booster {
        &mut self.booster
    }

    /// Live points, normalized, in arrival order.
    pub fn live(&self) -> &LiveSet {
        &self.live
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    /// Cost of `centers` (raw units) on the live points. Not private.
    pub fn true_cost(&self, centers: &[Point]) -> f64 {
        let norm: Vec<Point> = centers.iter().map(|c| c.iter().map(|x| x / self.cfg.lambda).collect()).collect();
        let c = cost(&self.live.to_vec(), &norm, self.cfg.cost);
        self.normalizer.denormalize_cost(c, self.cfg.cost)
    }

    fn check(&self, ev: &UpdateEvent) -> Result<Option<Point>, EngineError> {
        if let Some(prev) = self.last_t {
            if ev.t <= prev {
                return Err(InputError::Order { t: ev.t, prev }.into());
            }
        }
        match (ev.op, &ev.point) {
            (Op::Noop, _) => Ok(None),
            (op, None) => Err(InputError::MissingPoint { t: ev.t, op }.into()),
            (_, Some(p)) => {
                if p.len() != self.d {
                    return Err(InputError::Dimension { got: p.len(), expected: self.d }.into());
                }
                if p.iter().any(|x| !x.is_finite()) {
                    return Err(InputError::NonFinite { t: ev.t }.into());
                }
                let q = self.normalizer.normalize(p)?;
                if ev.op == Op::Delete && !self.live.contains(&q) {
                    return Err(InputError::Absent { t: ev.t }.into());
                }
                Ok(Some(q))
            }
        }
    }

    /// Process one event and report the current solution.
    pub fn process(&mut self, ev: &UpdateEvent) -> Result<StepOutput, EngineError> {
        let q = self.check(ev)?;
        self.last_t = Some(ev.t);
        match ev.op {
            Op::Insert => self.live.insert(q.clone().expect("checked")),
            Op::Delete => {
                self.live.remove(q.as_deref().expect("checked"));
            }
            Op::Noop => {}
        }
        if let Some(size) = self.size.as_mut() {
            size.update(match ev.op {
                Op::Insert => 1.0,
                Op::Delete => -1.0,
                Op::Noop => 0.0,
            })?;
        }
        let out = self.booster.step(ev.op, q.as_deref(), &self.live)?;
        let row = self.to_row(ev.t, &out);
        if let Some(size) = &self.size {
            // restart once the live count exceeds the guess with probability 1 - beta
            if size.query() - size.error_bound(self.cfg.beta) >= self.n_bound as f64 {
                self.restart()?;
            }
        }
        Ok(row)
    }

    fn restart(&mut self) -> Result<(), EngineError> {
        self.epoch += 1;
        self.n_bound *= 2;
        log::info!("restart {} with n bound {}", self.epoch, self.n_bound);
        self.booster = Self::make_booster(
            &self.cfg,
            self.d,
            &self.epochs_budget,
            self.epoch,
            self.n_bound,
            Horizon::Unknown,
            &self.seed,
            &self.live,
        )?;
        Ok(())
    }

    fn to_row(&self, t: u64, out: &BoostOutput) -> StepOutput {
        StepOutput {
            t,
            centers: out.solution.centers.iter().map(|c| self.normalizer.denormalize(c)).collect(),
            est_cost: self.normalizer.denormalize_cost(out.solution.est_cost, self.cfg.cost),
            degenerate: out.solution.degenerate,
            chosen_copy: out.chosen,
            epoch: self.epoch,
        }
    }

    /// Full output of the last processed step's copies is not retained;
    /// this recomputes it for inspection. Not part of the released output.
    pub fn inspect(&self) -> Vec<crate::high_dim::HighDimOutput> {
        self.booster.copies().iter().map(|c| c.solve()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn levels() {
        assert_eq!(levels_for(1), 1);
        assert_eq!(levels_for(2), 1);
        assert_eq!(levels_for(3), 2);
        assert_eq!(levels_for(1024), 10);
        assert_eq!(levels_for(1025), 11);
    }

    #[test]
    fn rejects_outside_points_and_bad_deletes() {
        let cfg = PipelineConfig { nmax: Some(16), t_max: Some(16), copies: Some(1), ..Default::default() };
        let mut e = Engine::new(cfg, 2).unwrap();
        assert!(matches!(
            e.process(&UpdateEvent::insert(1, vec![2.0, 0.0])),
            Err(EngineError::Input(InputError::OutsideBall { .. }))
        ));
        assert!(matches!(
            e.process(&UpdateEvent::delete(2, vec![0.5, 0.0])),
            Err(EngineError::Input(InputError::Absent { .. }))
        ));
        e.process(&UpdateEvent::insert(3, vec![0.5, 0.0])).unwrap();
        assert!(matches!(e.process(&UpdateEvent::noop(3)), Err(EngineError::Input(InputError::Order { .. }))));
    }

    #[test]
    fn restarts_follow_the_live_count() {
        let cfg = PipelineConfig { n_guess: 4, copies: Some(1), noise: NoiseMode::Off, ..Default::default() };
        let mut e = Engine::new(cfg, 1).unwrap();
        for t in 1..=9 {
            e.process(&UpdateEvent::insert(t, vec![t as f64 / 20.0])).unwrap();
        }
        // restarts at 4 and 8 live points
        assert_eq!(e.epoch(), 3);
        assert!(e.ledger().verify().is_ok());

        // noise alone does not trigger restarts
        let cfg = PipelineConfig { n_guess: 4, copies: Some(1), ..Default::default() };
        let mut e = Engine::new(cfg, 1).unwrap();
        for t in 1..=40 {
            e.process(&UpdateEvent::noop(t)).unwrap();
        }
        assert_eq!(e.epoch(), 1);
    }

    #[test]
    fn empty_stream_step_is_degenerate_but_present() {
        let cfg = PipelineConfig { nmax: Some(16), t_max: Some(16), copies: Some(1), k: 3, ..Default::default() };
        let mut e = Engine::new(cfg, 1).unwrap();
        let r = e.process(&UpdateEvent::noop(1)).unwrap();
        assert_eq!(r.centers.len(), 3);
        assert!(r.est_cost >= 0.0);
    }
}
