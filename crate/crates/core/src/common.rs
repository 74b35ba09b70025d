//! Stream types, cost functions, normalization and the neighboring relation.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

pub type Point = Vec<f64>;

/// Which clustering objective is being served.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CostKind {
    #[default]
    KMeans,
    KMedian,
}

impl CostKind {
    /// Per-point cost contribution at distance `dist`.
    #[inline]
    pub fn of_dist(self, dist: f64) -> f64 {
        match self {
            CostKind::KMeans => dist * dist,
            CostKind::KMedian => dist,
        }
    }

    /// Per-point cost contribution given the squared distance.
    #[inline]
    pub fn of_dist2(self, d2: f64) -> f64 {
        match self {
            CostKind::KMeans => d2,
            CostKind::KMedian => d2.sqrt(),
        }
    }

    /// How a cost scales when all distances scale by `s`.
    pub fn scale_factor(self, s: f64) -> f64 {
        self.of_dist(s)
    }

    pub fn name(self) -> &'static str {
        match self {
            CostKind::KMeans => "kmeans",
            CostKind::KMedian => "kmedian",
        }
    }
}

impl std::str::FromStr for CostKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "kmeans" => Ok(CostKind::KMeans),
            "kmedian" => Ok(CostKind::KMedian),
            other => Err(format!("unknown cost kind `{other}`")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Op {
    Insert,
    Delete,
    Noop,
}

/// One timestep of the input stream.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UpdateEvent {
    pub t: u64,
    pub op: Op,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub point: Option<Point>,
}

impl UpdateEvent {
    pub fn insert(t: u64, point: Point) -> Self {
        UpdateEvent { t, op: Op::Insert, point: Some(point) }
    }

    pub fn delete(t: u64, point: Point) -> Self {
        UpdateEvent { t, op: Op::Delete, point: Some(point) }
    }

    pub fn noop(t: u64) -> Self {
        UpdateEvent { t, op: Op::Noop, point: None }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum InputError {
    #[error("point {point:?} has norm {norm} > lambda = {lambda}")]
    OutsideBall { point: Point, norm: f64, lambda: f64 },
    #[error("point has dimension {got}, expected {expected}")]
    Dimension { got: usize, expected: usize },
    #[error("{op:?} event at t = {t} carries no point")]
    MissingPoint { t: u64, op: Op },
    #[error("non-finite coordinate in point at t = {t}")]
    NonFinite { t: u64 },
    #[error("timestep {t} does not follow {prev}")]
    Order { t: u64, prev: u64 },
    #[error("delete at t = {t} of a point that is not present")]
    Absent { t: u64 },
}

/// Rescales raw points into the unit ball and results back out.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Normalizer {
    lambda: f64,
}

impl Normalizer {
    pub fn new(lambda: f64) -> Self {
        assert!(lambda > 0.0 && lambda.is_finite(), "lambda must be positive");
        Normalizer { lambda }
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Divide by lambda. Points with norm above lambda are rejected.
    pub fn normalize(&self, p: &[f64]) -> Result<Point, InputError> {
        let n = norm(p);
        if n > self.lambda * (1.0 + 1e-12) {
            return Err(InputError::OutsideBall { point: p.to_vec(), norm: n, lambda: self.lambda });
        }
        let mut q: Point = p.iter().map(|x| x / self.lambda).collect();
        clip_to_ball(&mut q, 1.0);
        Ok(q)
    }

    pub fn denormalize(&self, p: &[f64]) -> Point {
        p.iter().map(|x| x * self.lambda).collect()
    }

    pub fn denormalize_cost(&self, cost: f64, kind: CostKind) -> f64 {
        cost * kind.scale_factor(self.lambda)
    }
}

#[inline]
pub fn dist2(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[inline]
pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    dist2(a, b).sqrt()
}

#[inline]
pub fn norm2(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    norm2(a).sqrt()
}

/// Radially project `p` onto the closed ball of radius `r`.
pub fn clip_to_ball(p: &mut [f64], r: f64) {
    let n = norm(p);
    if n > r {
        let s = r / n;
        for x in p.iter_mut() {
            *x *= s;
        }
    }
}

/// Index of the nearest center (first one on ties) and the squared distance.
pub fn nearest(p: &[f64], centers: &[Point]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centers.iter().enumerate() {
        let d = dist2(p, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

/// cost(P, C) for an unweighted point set.
pub fn cost(points: &[Point], centers: &[Point], kind: CostKind) -> f64 {
    if centers.is_empty() {
        return if points.is_empty() { 0.0 } else { f64::INFINITY };
    }
    points.iter().map(|p| kind.of_dist2(nearest(p, centers).1)).sum()
}

/// cost(P, C) with a weight per point.
pub fn weighted_cost(points: &[Point], weights: &[f64], centers: &[Point], kind: CostKind) -> f64 {
    debug_assert_eq!(points.len(), weights.len());
    if centers.is_empty() {
        return if weights.iter().all(|w| *w == 0.0) { 0.0 } else { f64::INFINITY };
    }
    points
        .iter()
        .zip(weights)
        .filter(|(_, w)| **w != 0.0)
        .map(|(p, w)| w * kind.of_dist2(nearest(p, centers).1))
        .sum()
}

/// Coordinate-wise mean, or the origin for an empty set.
pub fn mean(points: &[Point], d: usize) -> Point {
    let mut m = vec![0.0; d];
    if points.is_empty() {
        return m;
    }
    for p in points {
        for (a, x) in m.iter_mut().zip(p) {
            *a += x;
        }
    }
    let n = points.len() as f64;
    m.iter_mut().for_each(|a| *a /= n);
    m
}

/// A set of centers with a private cost estimate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub centers: Vec<Point>,
    pub cost_kind: CostKind,
    pub est_cost: f64,
    /// Set when fewer than k distinct centers could be produced.
    pub degenerate: bool,
}

/// True when the two streams differ by one inserted item, optionally
/// deleted later in the same stream, with all other timesteps identical.
/// Missing timesteps count as no-ops.
pub fn neighboring(a: &[UpdateEvent], b: &[UpdateEvent]) -> bool {
    fn by_time(s: &[UpdateEvent]) -> Option<BTreeMap<u64, &UpdateEvent>> {
        let mut m = BTreeMap::new();
        for e in s {
            if m.insert(e.t, e).is_some() {
                return None;
            }
        }
        Some(m)
    }
    fn is_noop(e: Option<&&UpdateEvent>) -> bool {
        e.is_none_or(|e| e.op == Op::Noop)
    }
    let (Some(ma), Some(mb)) = (by_time(a), by_time(b)) else {
        return false;
    };
    let times: std::collections::BTreeSet<u64> = ma.keys().chain(mb.keys()).copied().collect();
    // (t, side holding the extra event, event)
    let mut diffs: Vec<(u64, bool, &UpdateEvent)> = Vec::new();
    for t in times {
        let (ea, eb) = (ma.get(&t), mb.get(&t));
        let same = match (ea, eb) {
            (Some(x), Some(y)) => x.op == y.op && x.point == y.point,
            _ => is_noop(ea) && is_noop(eb),
        };
        if same {
            continue;
        }
        if is_noop(eb) {
            diffs.push((t, true, ea.expect("non-noop side exists")));
        } else if is_noop(ea) {
            diffs.push((t, false, eb.expect("non-noop side exists")));
        } else {
            return false;
        }
        if diffs.len() > 2 {
            return false;
        }
    }
    match diffs.as_slice() {
        [] => true,
        [(_, _, e)] => e.op == Op::Insert,
        [(_, s1, e1), (_, s2, e2)] => {
            s1 == s2 && e1.op == Op::Insert && e2.op == Op::Delete && e1.point == e2.point
        }
        _ => false,
    }
}
