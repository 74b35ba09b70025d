//! Recursive greedy over noisy net-point values, and the Θ-threshold check.
//!
//! Each round picks the available net point of largest value, descends
//! through max-value children to the last level, and places a center
//! there. A net point `z` stops being available once a center lies within
//! `89 * 2^-level(z)` of it. Ties go to the smallest id.

use crate::common::{clip_to_ball, dist2, Point};
use crate::nets::{NetId, NetIndex};
use smallvec::SmallVec;
use rustc_hash::FxHashMap;
use std::collections::HashMap;

/// Removal radius multiplier.
pub const REMOVAL_RADIUS: f64 = 89.0;
/// Descent-locality multiplier: `dist(z_j^1, c_j) <= 8 * 2^-level(z_j^1)`.
pub const DESCENT_RADIUS: f64 = 8.0;

type BucketKey = (u8, SmallVec<[i64; 8]>);

/// Noisy values of net points. Missing ids read as 0.
#[derive(Clone, Debug)]
pub struct NoisyValueTable {
    theta: f64,
    entries: FxHashMap<NetId, f64>,
    /// Positive entries, largest value first, then smallest id.
    ranked: Vec<(NetId, f64)>,
    /// Positive entries bucketed by level on a grid of children-radius cells.
    buckets: FxHashMap<BucketKey, Vec<usize>>,
    points: Vec<Point>,
    queries: usize,
}

fn bucket_side(level: u32) -> f64 {
    NetIndex::children_radius(level.saturating_sub(1))
}

fn bucket_of(level: u32, x: &[f64]) -> SmallVec<[i64; 8]> {
    let s = bucket_side(level);
    x.iter().map(|v| (v / s).floor() as i64).collect()
}

impl NoisyValueTable {
    /// Negative or non-finite values are clamped to 0.
    pub fn new(nets: &NetIndex, theta: f64, entries: impl IntoIterator<Item = (NetId, f64)>) -> Self {
        let entries: FxHashMap<NetId, f64> =
            entries.into_iter().map(|(k, v)| (k, if v.is_finite() { v.max(0.0) } else { 0.0 })).collect();
        let mut ranked: Vec<(NetId, f64)> =
            entries.iter().filter(|(_, v)| **v > 0.0).map(|(k, v)| (k.clone(), *v)).collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let points: Vec<Point> = ranked.iter().map(|(z, _)| nets.point(z)).collect();
        let mut buckets: FxHashMap<BucketKey, Vec<usize>> = FxHashMap::default();
        for (i, ((z, _), p)) in ranked.iter().zip(&points).enumerate() {
            buckets.entry((z.level, bucket_of(z.level as u32, p))).or_default().push(i);
        }
        NoisyValueTable { theta: theta.max(1.0), entries, ranked, buckets, points, queries: 0 }
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn get(&self, z: &NetId) -> f64 {
        self.entries.get(z).copied().unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&NetId, &f64)> {
        self.entries.iter()
    }

    /// Number of counter queries spent building the table.
    pub fn queries(&self) -> usize {
        self.queries
    }

    pub fn set_queries(&mut self, q: usize) {
        self.queries = q;
    }

    /// Positive entries at `level` within `r` of `x`, as indices into the ranking.
    fn positive_near(&self, level: u32, x: &[f64], r: f64) -> Vec<usize> {
        let base = bucket_of(level, x);
        let d = x.len();
        let mut out = Vec::new();
        let r2 = r * r;
        let mut off: SmallVec<[i64; 8]> = SmallVec::from_elem(-1, d);
        loop {
            let key: SmallVec<[i64; 8]> = base.iter().zip(&off).map(|(b, o)| b + o).collect();
            if let Some(v) = self.buckets.get(&(level as u8, key)) {
                out.extend(v.iter().copied().filter(|&i| dist2(&self.points[i], x) <= r2));
            }
            let mut j = d;
            loop {
                if j == 0 {
                    out.sort_unstable();
                    return out;
                }
                j -= 1;
                if off[j] < 1 {
                    off[j] += 1;
                    break;
                }
                off[j] = -1;
            }
        }
    }
}

/// Def. of the Θ-threshold condition over every id with either value nonzero.
pub fn check_threshold(nval: &HashMap<NetId, f64>, exact: &HashMap<NetId, f64>, theta: f64) -> bool {
    let ok = |n: f64, v: f64| {
        if n >= theta {
            v / 2.0 <= n && n <= 2.0 * v
        } else {
            v <= 2.0 * theta
        }
    };
    nval.iter().all(|(z, &n)| ok(n, exact.get(z).copied().unwrap_or(0.0)))
        && exact.iter().filter(|(z, _)| !nval.contains_key(*z)).all(|(_, &v)| ok(0.0, v))
}

/// Output of one greedy run.
#[derive(Clone, Debug)]
pub struct GreedyResult {
    /// Centers clipped into the unit ball, in selection order.
    pub centers: Vec<Point>,
    /// Bottom-level net points reached, in selection order.
    pub net_centers: Vec<NetId>,
    /// Starting points `z_j^1` of each descent.
    pub starts: Vec<NetId>,
    /// Descent steps that selected an unavailable child.
    pub availability_violations: usize,
    /// Descents ending farther than `8 * 2^-level` from their start.
    pub locality_violations: usize,
    /// Set when some center had to duplicate the previous one.
    pub degenerate: bool,
}

struct Available<'a> {
    nets: &'a NetIndex,
    chosen: Vec<Point>,
    /// Squared removal radius per level.
    r2: Vec<f64>,
    /// Levels below this have no available point left.
    first_open: u32,
    /// Per level, the last id returned by `smallest`; smaller ids are unavailable.
    resume: Vec<Option<NetId>>,
}

impl<'a> Available<'a> {
    fn new(nets: &'a NetIndex, k: usize) -> Self {
        let r2 = (0..=nets.levels()).map(|i| (REMOVAL_RADIUS * 0.5f64.powi(i as i32)).powi(2)).collect();
        Available {
            nets,
            chosen: Vec::with_capacity(k),
            r2,
            first_open: 1,
            resume: vec![None; nets.levels() as usize + 1],
        }
    }

    fn at(&self, level: u32, g: &[f64]) -> bool {
        let r2 = self.r2[level as usize];
        self.chosen.iter().all(|c| dist2(g, c) > r2)
    }

    fn id(&self, z: &NetId) -> bool {
        self.at(z.level as u32, &self.nets.point(z))
    }

    /// Smallest available id over all levels. Availability only shrinks,
    /// so exhausted levels are not scanned again.
    fn smallest(&mut self) -> Option<NetId> {
        let origin = vec![0.0; self.nets.dim()];
        while self.first_open <= self.nets.levels() {
            let i = self.first_open;
            let r = REMOVAL_RADIUS * 0.5f64.powi(i as i32);
            let outer = 1.0 + self.nets.covering_radius(i);
            // a center covering the whole level
            let covered = self.chosen.iter().any(|c| crate::common::norm(c) + outer <= r);
            if !covered {
                let from = self.resume[i as usize].take();
                let found =
                    self.nets.first_within_from(i, &origin, outer, from.as_ref().map(|f| &f.coords[..]), |_, g| {
                        self.at(i, g)
                    });
                if let Some(z) = found {
                    self.resume[i as usize] = Some(z.clone());
                    return Some(z);
                }
            }
            self.first_open += 1;
        }
        None
    }
}

/// Run the recursive greedy for `k` centers.
pub fn recursive_greedy(nets: &NetIndex, table: &NoisyValueTable, k: usize) -> GreedyResult {
    assert!(k >= 1, "k must be at least 1");
    let levels = nets.levels();
    let mut avail = Available::new(nets, k);
    let mut res = GreedyResult {
        centers: Vec::with_capacity(k),
        net_centers: Vec::with_capacity(k),
        starts: Vec::with_capacity(k),
        availability_violations: 0,
        locality_violations: 0,
        degenerate: false,
    };
    // entries before the cursor are already unavailable
    let mut cursor = 0;
    for _ in 0..k {
        let hit = table.ranked[cursor..].iter().position(|(z, _)| avail.id(z));
        let start = match hit {
            Some(j) => {
                cursor += j;
                Some(table.ranked[cursor].0.clone())
            }
            None => {
                cursor = table.ranked.len();
                avail.smallest()
            }
        };
        let Some(start) = start else {
            res.degenerate = true;
            let (c, z, s) = match (res.centers.last(), res.net_centers.last(), res.starts.last()) {
                (Some(c), Some(z), Some(s)) => (c.clone(), z.clone(), s.clone()),
                _ => unreachable!("the first round always finds an available point"),
            };
            res.centers.push(c);
            res.net_centers.push(z);
            res.starts.push(s);
            continue;
        };
        let start_point = nets.point(&start);
        let mut z = start.clone();
        let mut zp = start_point.clone();
        while (z.level as u32) < levels {
            let i = z.level as u32;
            let r = NetIndex::children_radius(i);
            let best = table.positive_near(i + 1, &zp, r).first().map(|&j| table.ranked[j].0.clone());
            let child = match best {
                Some(c) => c,
                None => nets.first_within(i + 1, &zp, r, |_, _| true).expect("a net point has children"),
            };
            zp = nets.point(&child);
            if !avail.at(i + 1, &zp) {
                res.availability_violations += 1;
            }
            z = child;
        }
        let bound = DESCENT_RADIUS * 0.5f64.powi(start.level as i32);
        if dist2(&zp, &start_point) > bound * bound {
            res.locality_violations += 1;
        }
        debug_assert_eq!(res.locality_violations, 0, "descent left the 8-radius of its start");
        avail.chosen.push(zp.clone());
        let mut c = zp;
        clip_to_ball(&mut c, 1.0);
        res.centers.push(c);
        res.net_centers.push(z);
        res.starts.push(start);
    }
    res
}
