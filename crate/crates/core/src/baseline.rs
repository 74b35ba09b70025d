//! Non-private reference solvers: exhaustive optimum at tiny scale,
//! Weiszfeld's 1-median, and weighted k-means++ followed by Lloyd
//! iterations. Also used as the final step of the private pipeline, where
//! it only post-processes already private data.

use crate::common::{dist2, nearest, weighted_cost, CostKind, Point};
use crate::rng::SeedTree;
use rand::Rng;
use thiserror::Error;

/// Largest candidate space the exhaustive oracle will search.
pub const SEARCH_LIMIT: f64 = 1.0e6;
/// Largest n for which k-means is solved over all partitions.
pub const PARTITION_LIMIT: usize = 12;

#[derive(Debug, Error, PartialEq)]
pub enum BaselineError {
    #[error("search space of {0:.0} candidates exceeds the limit")]
    SearchTooLarge(f64),
    #[error("k must be positive")]
    ZeroK,
}

/// How a [`Clustering`] was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OracleMethod {
    /// Exact within the exhaustive search bounds.
    Exhaustive,
    /// Best of seeded restarts followed by local refinement.
    MultiRestartRefine,
    /// Lloyd iterations with Weiszfeld medians.
    IterativeMedian,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Clustering {
    pub centers: Vec<Point>,
    pub cost: f64,
    pub method: OracleMethod,
}

fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Number of partitions of n items into at most k blocks.
fn partitions_at_most(n: usize, k: usize) -> f64 {
    // Stirling numbers of the second kind by recurrence
    let mut s = vec![vec![0.0f64; k + 1]; n + 1];
    s[0][0] = 1.0;
    for i in 1..=n {
        for j in 1..=k.min(i) {
            s[i][j] = j as f64 * s[i - 1][j] + s[i - 1][j - 1];
        }
    }
    s[n].iter().sum()
}

fn cluster_cost_to_mean(points: &[Point], members: &[usize]) -> (Point, f64) {
    let d = points[members[0]].len();
    let mut m = vec![0.0; d];
    for &i in members {
        for (a, x) in m.iter_mut().zip(&points[i]) {
            *a += x;
        }
    }
    m.iter_mut().for_each(|a| *a /= members.len() as f64);
    let c = members.iter().map(|&i| dist2(&points[i], &m)).sum();
    (m, c)
}

/// Optimal clustering at tiny scale.
///
/// k-means with `n <= 12` enumerates every partition into at most k groups
/// and places each center at its group's mean, which is exact. Otherwise
/// centers are restricted to data points; for k-median the best restricted
/// solution is then polished by Lloyd/Weiszfeld and the better one kept.
pub fn exhaustive(points: &[Point], k: usize, kind: CostKind) -> Result<Clustering, BaselineError> {
    if k == 0 {
        return Err(BaselineError::ZeroK);
    }
    let n = points.len();
    if n == 0 {
        return Ok(Clustering { centers: Vec::new(), cost: 0.0, method: OracleMethod::Exhaustive });
    }
    if kind == CostKind::KMeans && n <= PARTITION_LIMIT {
        let space = partitions_at_most(n, k);
        if space > SEARCH_LIMIT {
            return Err(BaselineError::SearchTooLarge(space));
        }
        return Ok(exhaustive_partitions(points, k));
    }
    let kk = k.min(n);
    let space = binomial(n, kk);
    if space > SEARCH_LIMIT {
        return Err(BaselineError::SearchTooLarge(space));
    }
    let mut best = Clustering { centers: Vec::new(), cost: f64::INFINITY, method: OracleMethod::Exhaustive };
    let mut idx: Vec<usize> = (0..kk).collect();
    loop {
        let centers: Vec<Point> = idx.iter().map(|&i| points[i].clone()).collect();
        let c = crate::common::cost(points, &centers, kind);
        if c < best.cost {
            best = Clustering { centers, cost: c, method: OracleMethod::Exhaustive };
        }
        // next k-subset in lex order
        let mut j = kk;
        loop {
            if j == 0 {
                if kind == CostKind::KMedian {
                    let w = vec![1.0; n];
                    let polished = lloyd(points, &w, best.centers.clone(), kind, 200);
                    if polished.cost < best.cost {
                        best = Clustering { method: OracleMethod::Exhaustive, ..polished };
                    }
                }
                return Ok(best);
            }
            j -= 1;
            if idx[j] < n - kk + j {
                idx[j] += 1;
                for l in j + 1..kk {
                    idx[l] = idx[l - 1] + 1;
                }
                break;
            }
        }
    }
}

fn exhaustive_partitions(points: &[Point], k: usize) -> Clustering {
    let n = points.len();
    // restricted growth strings: a[0] = 0, a[i] <= max(a[..i]) + 1, blocks < k
    let mut a = vec![0usize; n];
    let mut best = Clustering { centers: Vec::new(), cost: f64::INFINITY, method: OracleMethod::Exhaustive };
    loop {
        let blocks = a.iter().max().map_or(0, |m| m + 1);
        let mut centers = Vec::with_capacity(blocks);
        let mut total = 0.0;
        for b in 0..blocks {
            let members: Vec<usize> = (0..n).filter(|&i| a[i] == b).collect();
            let (m, c) = cluster_cost_to_mean(points, &members);
            centers.push(m);
            total += c;
        }
        if total < best.cost {
            best = Clustering { centers, cost: total, method: OracleMethod::Exhaustive };
        }
        // advance
        let mut i = n;
        loop {
            if i <= 1 {
                return best;
            }
            i -= 1;
            let prefix_max = a[..i].iter().max().copied().unwrap_or(0);
            if a[i] <= prefix_max && a[i] + 1 < k {
                a[i] += 1;
                a[i + 1..].iter_mut().for_each(|x| *x = 0);
                break;
            }
        }
    }
}

/// Weighted geometric median by Weiszfeld iterations with the
/// Vardi-Zhang correction at data points.
pub fn weiszfeld(points: &[Point], weights: &[f64]) -> Point {
    let d = points.first().map_or(0, |p| p.len());
    let total: f64 = weights.iter().sum();
    if points.is_empty() || total <= 0.0 {
        return vec![0.0; d];
    }
    let objective = |y: &[f64]| -> f64 {
        points.iter().zip(weights).map(|(p, w)| w * dist2(p, y).sqrt()).sum()
    };
    // start at the weighted mean
    let mut y = vec![0.0; d];
    for (p, w) in points.iter().zip(weights) {
        for (a, x) in y.iter_mut().zip(p) {
            *a += w * x / total;
        }
    }
    let mut f = objective(&y);
    for _ in 0..10_000 {
        let mut num = vec![0.0; d];
        let mut den = 0.0;
        let mut at_point = 0.0;
        let mut r = vec![0.0; d];
        for (p, w) in points.iter().zip(weights) {
            if *w == 0.0 {
                continue;
            }
            let dd = dist2(p, &y).sqrt();
            if dd < 1e-14 {
                at_point += w;
                continue;
            }
            for j in 0..d {
                num[j] += w * p[j] / dd;
                r[j] += w * (p[j] - y[j]) / dd;
            }
            den += w / dd;
        }
        if den == 0.0 {
            break;
        }
        let t: Point = num.iter().map(|x| x / den).collect();
        let next = if at_point > 0.0 {
            let rn = r.iter().map(|x| x * x).sum::<f64>().sqrt();
            if rn <= at_point {
                break;
            }
            let gamma = (at_point / rn).min(1.0);
            t.iter().zip(&y).map(|(ti, yi)| (1.0 - gamma) * ti + gamma * yi).collect()
        } else {
            t
        };
        let fn_ = objective(&next);
        if fn_ > f - 1e-15 * f.max(1.0) {
            if fn_ < f {
                y = next;
            }
            break;
        }
        y = next;
        f = fn_;
    }
    y
}

/// Weighted k-means++ (D^2, or D for k-median) seeding.
pub fn seed_plus_plus<R: Rng>(points: &[Point], weights: &[f64], k: usize, kind: CostKind, rng: &mut R) -> Vec<Point> {
    let d = points.first().map_or(0, |p| p.len());
    let total: f64 = weights.iter().sum();
    if points.is_empty() || total <= 0.0 {
        return vec![vec![0.0; d]; k];
    }
    let pick = |probs: &[f64], rng: &mut R| -> usize {
        let s: f64 = probs.iter().sum();
        let mut u = rng.gen::<f64>() * s;
        for (i, p) in probs.iter().enumerate() {
            if u < *p {
                return i;
            }
            u -= p;
        }
        probs.iter().rposition(|p| *p > 0.0).unwrap_or(0)
    };
    let mut centers = vec![points[pick(weights, rng)].clone()];
    let mut dmin: Vec<f64> = points.iter().map(|p| kind.of_dist2(dist2(p, &centers[0]))).collect();
    while centers.len() < k {
        let probs: Vec<f64> = dmin.iter().zip(weights).map(|(x, w)| x * w).collect();
        if probs.iter().sum::<f64>() <= 0.0 {
            // fewer distinct weighted points than k
            let last = centers.last().cloned().expect("nonempty");
            centers.push(last);
            continue;
        }
        let c = points[pick(&probs, rng)].clone();
        for (m, p) in dmin.iter_mut().zip(points) {
            *m = m.min(kind.of_dist2(dist2(p, &c)));
        }
        centers.push(c);
    }
    centers
}

/// Result of Lloyd iterations with the cost after each accepted step.
#[derive(Clone, Debug)]
pub struct LloydTrace {
    pub clustering: Clustering,
    pub costs: Vec<f64>,
}

/// Lloyd iterations from `init`. Cost is non-increasing.
pub fn lloyd(points: &[Point], weights: &[f64], init: Vec<Point>, kind: CostKind, max_iter: usize) -> Clustering {
    lloyd_trace(points, weights, init, kind, max_iter).clustering
}

pub fn lloyd_trace(points: &[Point], weights: &[f64], init: Vec<Point>, kind: CostKind, max_iter: usize) -> LloydTrace {
    let k = init.len();
    let mut centers = init;
    let mut cost = weighted_cost(points, weights, &centers, kind);
    let mut costs = vec![cost];
    for _ in 0..max_iter {
        let mut groups: Vec<Vec<usize>> = vec![Vec::new(); k];
        for (i, p) in points.iter().enumerate() {
            if weights[i] > 0.0 {
                groups[nearest(p, &centers).0].push(i);
            }
        }
        let mut next = centers.clone();
        for (j, g) in groups.iter().enumerate() {
            if g.is_empty() {
                continue;
            }
            let ps: Vec<Point> = g.iter().map(|&i| points[i].clone()).collect();
            let ws: Vec<f64> = g.iter().map(|&i| weights[i]).collect();
            next[j] = match kind {
                CostKind::KMeans => {
                    let tw: f64 = ws.iter().sum();
                    let mut m = vec![0.0; ps[0].len()];
                    for (p, w) in ps.iter().zip(&ws) {
                        for (a, x) in m.iter_mut().zip(p) {
                            *a += w * x;
                        }
                    }
                    m.iter_mut().for_each(|a| *a /= tw);
                    m
                }
                CostKind::KMedian => weiszfeld(&ps, &ws),
            };
        }
        let c = weighted_cost(points, weights, &next, kind);
        if c >= cost {
            break;
        }
        centers = next;
        cost = c;
        costs.push(cost);
    }
    let method = match kind {
        CostKind::KMeans => OracleMethod::MultiRestartRefine,
        CostKind::KMedian => OracleMethod::IterativeMedian,
    };
    LloydTrace { clustering: Clustering { centers, cost, method }, costs }
}

/// Best of `restarts` runs of seeding plus Lloyd.
pub fn refine(
    points: &[Point],
    weights: &[f64],
    k: usize,
    kind: CostKind,
    restarts: usize,
    seed: SeedTree,
) -> Clustering {
    let mut best: Option<Clustering> = None;
    for r in 0..restarts.max(1) {
        let mut rng = seed.derive_index("restart", r as u64).rng();
        let init = seed_plus_plus(points, weights, k, kind, &mut rng);
        let c = lloyd(points, weights, init, kind, 100);
        if best.as_ref().is_none_or(|b| c.cost < b.cost) {
            best = Some(c);
        }
    }
    let best = best.expect("at least one restart");
    Clustering { method: OracleMethod::MultiRestartRefine, ..best }
}
