//! Continual counting: the binary (dyadic tree) mechanism and a keyed
//! histogram of lazily materialized counters.
//!
//! The noisy prefix sum at time `t` is the exact running sum plus one
//! Laplace draw per dyadic node in the binary decomposition of `t`. Node
//! noise is a pure function of `(seed, key, node, component)`, so a key that
//! was never touched still answers queries consistently and holds no state.
//! Repeated queries without an intervening step return identical values.
//!
//! Neighboring streams differ in an insertion and possibly a later deletion
//! of the same item, i.e. at up to two timesteps, so node noise is scaled by
//! `2 * levels * L / eps'`.

use crate::budget::Allocation;
use crate::rng::{laplace_from_uniform, unit_open, StableHasher};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;
use rustc_hash::FxHashMap;
use std::fmt::Debug;
use std::hash::Hash;
use thiserror::Error;

/// Timesteps at which one item can change a counter's input.
pub const EVENTS_PER_ITEM: f64 = 2.0;

const BLOB_MAGIC: &[u8; 8] = b"CDPKHIST";
const BLOB_VERSION: u8 = 1;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseMode {
    #[default]
    On,
    Off,
}

impl std::str::FromStr for NoiseMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "on" => Ok(NoiseMode::On),
            "off" => Ok(NoiseMode::Off),
            other => Err(format!("noise must be `on` or `off`, got `{other}`")),
        }
    }
}

/// Stream length, if declared.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Horizon {
    Known(u64),
    Unknown,
}

#[derive(Debug, Error, PartialEq)]
pub enum CountingError {
    #[error("sensitivity violation: |{value}| > {bound}")]
    Sensitivity { value: f64, bound: f64 },
    #[error("fan-out exceeds b: {touched} keys > {b}")]
    FanOut { touched: usize, b: usize },
    #[error("time {t} exceeds the declared horizon {horizon}")]
    HorizonExceeded { t: u64, horizon: u64 },
    #[error("value has {got} components, expected {expected}")]
    Arity { got: usize, expected: usize },
    #[error("laplace scale must be positive, got {0}")]
    Scale(f64),
    #[error("invalid checkpoint: {0}")]
    Checkpoint(String),
}

/// One Laplace(0, scale) sample from an RNG.
pub fn laplace<R: rand::Rng + ?Sized>(scale: f64, rng: &mut R) -> Result<f64, CountingError> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(CountingError::Scale(scale));
    }
    let u: f64 = rng.gen_range(f64::EPSILON..1.0);
    Ok(laplace_from_uniform(u, scale))
}

/// A node of the dyadic structure: `epoch` is 0 for a fixed horizon.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Node {
    pub epoch: u32,
    pub level: u32,
    pub index: u64,
    /// Number of levels in the tree that owns this node.
    pub tree_levels: u32,
}

/// Dyadic decomposition of time, fixed or growing by doubling epochs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DyadicTree {
    horizon: Horizon,
}

impl DyadicTree {
    pub fn new(horizon: Horizon) -> Self {
        DyadicTree { horizon }
    }

    pub fn horizon(&self) -> Horizon {
        self.horizon
    }

    /// Levels of the fixed tree, `floor(log2 T) + 1`.
    pub fn fixed_levels(t_max: u64) -> u32 {
        64 - t_max.max(1).leading_zeros()
    }

    fn epoch_of(t: u64) -> u32 {
        63 - t.leading_zeros()
    }

    /// Nodes whose sums make up the prefix `[1, t]`.
    pub fn prefix_nodes(&self, t: u64) -> Result<SmallVec<[Node; 64]>, CountingError> {
        let mut out = SmallVec::new();
        if t == 0 {
            return Ok(out);
        }
        match self.horizon {
            Horizon::Known(tm) => {
                if t > tm {
                    return Err(CountingError::HorizonExceeded { t, horizon: tm });
                }
                let levels = Self::fixed_levels(tm);
                push_bits(&mut out, 0, t, levels);
            }
            Horizon::Unknown => {
                // epoch e spans [2^e, 2^(e+1) - 1] with its own tree of e+1 levels
                let e_t = Self::epoch_of(t);
                for e in 0..e_t {
                    out.push(Node { epoch: e, level: e, index: 0, tree_levels: e + 1 });
                }
                let local = t - (1u64 << e_t) + 1;
                push_bits(&mut out, e_t, local, e_t + 1);
            }
        }
        Ok(out)
    }

    /// Nodes whose sums include the increment at time `s`.
    pub fn nodes_containing(&self, s: u64) -> SmallVec<[Node; 64]> {
        let mut out = SmallVec::new();
        let (epoch, local, levels) = match self.horizon {
            Horizon::Known(tm) => (0, s, Self::fixed_levels(tm)),
            Horizon::Unknown => {
                let e = Self::epoch_of(s);
                (e, s - (1u64 << e) + 1, e + 1)
            }
        };
        for j in 0..levels {
            out.push(Node { epoch, level: j, index: (local - 1) >> j, tree_levels: levels });
        }
        out
    }
}

fn push_bits(out: &mut SmallVec<[Node; 64]>, epoch: u32, t: u64, levels: u32) {
    for j in (0..levels).rev() {
        if t >> j & 1 == 1 {
            out.push(Node { epoch, level: j, index: (t >> j) - 1, tree_levels: levels });
        }
    }
}

/// Keys that can index a histogram.
pub trait HistKey: Clone + Eq + Hash + Ord + Debug + Serialize + DeserializeOwned {
    /// Stable 64-bit fingerprint used to seed the key's noise.
    fn fingerprint(&self) -> u64;
}

impl HistKey for u64 {
    fn fingerprint(&self) -> u64 {
        *self
    }
}

/// Record of one histogram step, kept when logging is enabled.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord<K> {
    pub t: u64,
    pub touched: Vec<(K, Vec<f64>)>,
}

/// A family of counters indexed by key, each of which is a binary
/// mechanism with `dim` independent real-valued components.
#[derive(Clone, Debug)]
pub struct KeyedHistogram<K: HistKey> {
    fanout: usize,
    bound: f64,
    /// Per-component epsilon of one counter (the allocation divided by b).
    eps_prime: Vec<f64>,
    seed: u64,
    tree: DyadicTree,
    noise: NoiseMode,
    t: u64,
    sums: FxHashMap<K, Vec<f64>>,
    paths: Vec<String>,
    log: Option<Vec<StepRecord<K>>>,
}

impl<K: HistKey> KeyedHistogram<K> {
    /// One component per allocation; `fanout` is the declared b.
    pub fn new(
        allocations: Vec<Allocation>,
        fanout: usize,
        bound: f64,
        horizon: Horizon,
        noise: NoiseMode,
        seed: u64,
    ) -> Self {
        assert!(!allocations.is_empty(), "histogram needs at least one component");
        assert!(fanout > 0 && bound > 0.0);
        let eps_prime = allocations.iter().map(|a| a.epsilon() / fanout as f64).collect();
        let paths = allocations.iter().map(|a| a.path().to_string()).collect();
        KeyedHistogram {
            fanout,
            bound,
            eps_prime,
            seed,
            tree: DyadicTree::new(horizon),
            noise,
            t: 0,
            sums: FxHashMap::default(),
            paths,
            log: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.eps_prime.len()
    }

    pub fn fanout(&self) -> usize {
        self.fanout
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn time(&self) -> u64 {
        self.t
    }

    pub fn noise(&self) -> NoiseMode {
        self.noise
    }

    pub fn eps_prime(&self) -> &[f64] {
        &self.eps_prime
    }

    pub fn budget_paths(&self) -> &[String] {
        &self.paths
    }

    /// Keep a log of every step's inputs.
    pub fn enable_log(&mut self) {
        self.log = Some(Vec::new());
    }

    pub fn log(&self) -> Option<&[StepRecord<K>]> {
        self.log.as_deref()
    }

    /// Advance one timestep, adding `values` to the named keys and 0 to
    /// every other key. Keys may repeat; they count once toward b.
    pub fn step(&mut self, touched: &[(K, Vec<f64>)]) -> Result<(), CountingError> {
        let mut distinct: Vec<&K> = touched.iter().map(|(k, _)| k).collect();
        distinct.sort();
        distinct.dedup();
        if distinct.len() > self.fanout {
            return Err(CountingError::FanOut { touched: distinct.len(), b: self.fanout });
        }
        for (_, v) in touched {
            if v.len() != self.dim() {
                return Err(CountingError::Arity { got: v.len(), expected: self.dim() });
            }
            if let Some(x) = v.iter().find(|x| !(x.abs() <= self.bound)) {
                return Err(CountingError::Sensitivity { value: *x, bound: self.bound });
            }
        }
        if let Horizon::Known(tm) = self.tree.horizon() {
            if self.t + 1 > tm {
                return Err(CountingError::HorizonExceeded { t: self.t + 1, horizon: tm });
            }
        }
        self.t += 1;
        for (k, v) in touched {
            let s = self.sums.entry(k.clone()).or_insert_with(|| vec![0.0; v.len()]);
            for (a, x) in s.iter_mut().zip(v) {
                *a += x;
            }
        }
        if let Some(log) = self.log.as_mut() {
            log.push(StepRecord { t: self.t, touched: touched.to_vec() });
        }
        Ok(())
    }

    /// Advance one timestep with no touched keys.
    pub fn advance(&mut self) -> Result<(), CountingError> {
        self.step(&[])
    }

    /// Exact running sums of a key. Not private; for oracles and tests.
    pub fn exact(&self, key: &K) -> Option<&[f64]> {
        self.sums.get(key).map(|v| v.as_slice())
    }

    /// Keys that have ever been touched.
    pub fn touched_keys(&self) -> impl Iterator<Item = &K> {
        self.sums.keys()
    }

    /// Noisy running sums of `key`, written into `out`.
    pub fn query_into(&self, key: &K, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.dim());
        match self.sums.get(key) {
            Some(s) => out.copy_from_slice(s),
            None => out.iter_mut().for_each(|x| *x = 0.0),
        }
        if self.noise == NoiseMode::Off || self.t == 0 {
            return;
        }
        let nodes = self.tree.prefix_nodes(self.t).expect("time within horizon");
        let fp = key.fingerprint();
        for node in &nodes {
            let mut h = StableHasher::new(self.seed);
            h.write_u64(fp)
                .write_u64(u64::from(node.epoch))
                .write_u64(u64::from(node.level))
                .write_u64(node.index);
            let base = h.finish();
            let levels = f64::from(node.tree_levels);
            for (c, (o, e)) in out.iter_mut().zip(&self.eps_prime).enumerate() {
                let bits = crate::rng::mix64(base ^ (c as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
                let scale = EVENTS_PER_ITEM * levels * self.bound / e;
                *o += laplace_from_uniform(unit_open(bits), scale);
            }
        }
    }

    /// Bound on the noise in component `c` of any one query at the current
    /// time that holds with probability `1 - beta`: a union bound over the
    /// `m` Laplace draws, each within `scale * ln(m / beta)`.
    pub fn error_bound(&self, c: usize, beta: f64) -> f64 {
        if self.noise == NoiseMode::Off || self.t == 0 {
            return 0.0;
        }
        let nodes = self.tree.prefix_nodes(self.t).expect("time within horizon");
        let m = nodes.len() as f64;
        let per = (m / beta).ln();
        nodes.iter().map(|n| EVENTS_PER_ITEM * f64::from(n.tree_levels) * self.bound / self.eps_prime[c] * per).sum()
    }

    pub fn query(&self, key: &K) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.query_into(key, &mut out);
        out
    }

    /// First component of the noisy sums.
    pub fn query_scalar(&self, key: &K) -> f64 {
        if self.dim() == 1 {
            let mut out = [0.0];
            self.query_into(key, &mut out);
            out[0]
        } else {
            self.query(key)[0]
        }
    }

    /// Versioned opaque checkpoint.
    pub fn to_blob(&self) -> Vec<u8> {
        let mut out = BLOB_MAGIC.to_vec();
        out.push(BLOB_VERSION);
        let mut entries: Vec<(&K, &Vec<f64>)> = self.sums.iter().collect();
        entries.sort_by(|a, b| a.0.cmp(b.0));
        let body = serde_json::json!({
            "fanout": self.fanout,
            "bound": self.bound,
            "eps_prime": self.eps_prime,
            "seed": self.seed,
            "tree": self.tree,
            "noise": self.noise,
            "t": self.t,
            "sums": entries,
            "paths": self.paths,
        });
        out.extend(serde_json::to_vec(&body).expect("serializable"));
        out
    }

    pub fn from_blob(bytes: &[u8]) -> Result<Self, CountingError> {
        if bytes.len() < 9 || &bytes[..8] != BLOB_MAGIC {
            return Err(CountingError::Checkpoint("bad magic".into()));
        }
        if bytes[8] != BLOB_VERSION {
            return Err(CountingError::Checkpoint(format!("unsupported version {}", bytes[8])));
        }
        #[derive(Deserialize)]
        #[serde(bound = "K: HistKey")]
        struct Body<K: HistKey> {
            fanout: usize,
            bound: f64,
            eps_prime: Vec<f64>,
            seed: u64,
            tree: DyadicTree,
            noise: NoiseMode,
            t: u64,
            sums: Vec<(K, Vec<f64>)>,
            paths: Vec<String>,
        }
        let b: Body<K> =
            serde_json::from_slice(&bytes[9..]).map_err(|e| CountingError::Checkpoint(e.to_string()))?;
        Ok(KeyedHistogram {
            fanout: b.fanout,
            bound: b.bound,
            eps_prime: b.eps_prime,
            seed: b.seed,
            tree: b.tree,
            noise: b.noise,
            t: b.t,
            sums: b.sums.into_iter().collect(),
            paths: b.paths,
            log: None,
        })
    }
}

/// A single continual counter.
#[derive(Clone, Debug)]
pub struct NoisyCounter {
    inner: KeyedHistogram<u64>,
}

impl NoisyCounter {
    pub fn new(allocation: Allocation, bound: f64, horizon: Horizon, noise: NoiseMode, seed: u64) -> Self {
        NoisyCounter { inner: KeyedHistogram::new(vec![allocation], 1, bound, horizon, noise, seed) }
    }

    pub fn update(&mut self, x: f64) -> Result<(), CountingError> {
        self.inner.step(&[(0, vec![x])])
    }

    pub fn query(&self) -> f64 {
        self.inner.query_scalar(&0)
    }

    /// See [`KeyedHistogram::error_bound`].
    pub fn error_bound(&self, beta: f64) -> f64 {
        self.inner.error_bound(0, beta)
    }

    pub fn exact(&self) -> f64 {
        self.inner.exact(&0).map_or(0.0, |s| s[0])
    }

    pub fn time(&self) -> u64 {
        self.inner.time()
    }
}
