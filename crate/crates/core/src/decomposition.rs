//! Dyadic cell decomposition of the unit ball and the partition it induces
//! around a set of centers.
//!
//! A level-`i` cell is an axis-aligned cube of side `2^-i / sqrt(d)`, so
//! its diameter is `2^-i`. Cells that miss the ball are never enumerated.
//! Level 0 is the whole ball.
//!
//! Given centers `C` and `ell = ceil(10 / alpha)`, a cell is *near* when
//! some center's same-level cell lies within `ell * 2^-i` of the cell's
//! representative. The partition consists of the cells that are not near
//! but whose parent is, plus the near cells of the last level. Each part
//! is assigned to the center closest to its representative.

use crate::common::{dist2, norm2, Point};
use crate::counting::{HistKey, KeyedHistogram};
use crate::rng::StableHasher;
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;
use std::cell::RefCell;
use rustc_hash::FxHashMap;
use std::sync::Arc;

pub type CellCoords = SmallVec<[i32; 8]>;

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Serialize, Deserialize)]
pub struct CellId {
    pub level: u8,
    pub coords: CellCoords,
}

impl HistKey for CellId {
    fn fingerprint(&self) -> u64 {
        let mut h = StableHasher::new(0x63656c6c);
        h.write_u64(u64::from(self.level));
        for &c in &self.coords {
            h.write_i64(i64::from(c));
        }
        h.finish()
    }
}

impl CellId {
    pub fn parent(&self) -> CellId {
        assert!(self.level > 0, "the root has no parent");
        if self.level == 1 {
            return CellId { level: 0, coords: CellCoords::new() };
        }
        CellId { level: self.level - 1, coords: self.coords.iter().map(|c| c.div_euclid(2)).collect() }
    }
}

/// Geometry of the dyadic levels `0..=levels` in dimension `d`.
#[derive(Clone, Debug)]
pub struct CellDecomposition {
    d: usize,
    levels: u32,
}

impl CellDecomposition {
    pub fn new(d: usize, levels: u32) -> Self {
        assert!(d > 0 && levels > 0 && levels <= 28);
        CellDecomposition { d, levels }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn levels(&self) -> u32 {
        self.levels
    }

    /// Side length of a level-`i` cell.
    pub fn side(&self, i: u32) -> f64 {
        0.5f64.powi(i as i32) / (self.d as f64).sqrt()
    }

    /// Level-`i` cell containing `p` (half-open on the upper side).
    pub fn cell_of(&self, p: &[f64], i: u32) -> CellId {
        if i == 0 {
            return CellId { level: 0, coords: CellCoords::new() };
        }
        let s = self.side(i);
        CellId { level: i as u8, coords: p.iter().map(|x| (x / s).floor() as i32).collect() }
    }

    /// The cells containing `p` at levels `1..=levels`.
    pub fn cells_of(&self, p: &[f64]) -> Vec<CellId> {
        (1..=self.levels).map(|i| self.cell_of(p, i)).collect()
    }

    fn bounds(&self, c: &CellId, j: usize) -> (f64, f64) {
        let s = self.side(c.level as u32);
        let lo = c.coords[j] as f64 * s;
        (lo, lo + s)
    }

    /// Squared norm of the closed cube's point nearest to the origin.
    fn min_norm2(&self, c: &CellId) -> f64 {
        (0..self.d)
            .map(|j| {
                let (lo, hi) = self.bounds(c, j);
                let v = 0f64.clamp(lo, hi);
                v * v
            })
            .sum()
    }

    pub fn intersects_ball(&self, c: &CellId) -> bool {
        c.level == 0 || self.min_norm2(c) <= 1.0
    }

    /// The representative `v_A`: the lexicographically least corner when it
    /// lies in the ball, otherwise the cell's point closest to the origin.
    pub fn representative(&self, c: &CellId) -> Point {
        let mut v = vec![0.0; self.d];
        self.representative_into(c, &mut v);
        v
    }

    fn representative_into(&self, c: &CellId, out: &mut [f64]) {
        if c.level == 0 {
            out.iter_mut().for_each(|x| *x = 0.0);
            return;
        }
        for (j, o) in out.iter_mut().enumerate() {
            *o = self.bounds(c, j).0;
        }
        if norm2(out) > 1.0 {
            for (j, o) in out.iter_mut().enumerate() {
                let (lo, hi) = self.bounds(c, j);
                *o = 0f64.clamp(lo, hi);
            }
        }
    }

    /// Squared distance from `x` to the closed cube of `c`.
    pub fn dist2_to_cell(&self, x: &[f64], c: &CellId) -> f64 {
        if c.level == 0 {
            return 0.0;
        }
        (0..self.d)
            .map(|j| {
                let (lo, hi) = self.bounds(c, j);
                let v = x[j].clamp(lo, hi) - x[j];
                v * v
            })
            .sum()
    }

    /// Children of `c` that meet the ball.
    pub fn children(&self, c: &CellId) -> Vec<CellId> {
        let mut out = Vec::with_capacity(1 << self.d);
        self.for_each_child(c, |ch| out.push(ch));
        out
    }

    fn for_each_child(&self, c: &CellId, mut f: impl FnMut(CellId)) {
        if c.level as u32 >= self.levels {
            return;
        }
        if c.level == 0 {
            self.level_one().into_iter().for_each(f);
            return;
        }
        for mask in 0..(1u32 << self.d) {
            let coords = (0..self.d).map(|j| 2 * c.coords[j] + ((mask >> (self.d - 1 - j)) & 1) as i32).collect();
            let child = CellId { level: c.level + 1, coords };
            if self.intersects_ball(&child) {
                f(child);
            }
        }
    }

    fn level_one(&self) -> Vec<CellId> {
        let s = self.side(1);
        let hi = (1.0 / s).floor() as i32;
        let lo = -hi - 1;
        let mut out = Vec::new();
        let mut c: CellCoords = SmallVec::from_elem(lo, self.d);
        loop {
            let cell = CellId { level: 1, coords: c.clone() };
            if self.intersects_ball(&cell) {
                out.push(cell);
            }
            let mut j = self.d;
            loop {
                if j == 0 {
                    return out;
                }
                j -= 1;
                if c[j] < hi {
                    c[j] += 1;
                    break;
                }
                c[j] = lo;
            }
        }
    }
}

/// `ceil(10 / alpha)`.
pub fn ell_for(alpha: f64) -> u32 {
    (10.0 / alpha).ceil() as u32
}

/// Upper bound on the number of parts for `k` centers.
pub fn part_count_ceiling(k: usize, ell: u32, d: usize, levels: u32) -> f64 {
    let per = 2.0 * (f64::from(ell) + 2.0) * (d as f64).sqrt() + 2.0;
    let near = per.powi(d as i32);
    k as f64 * (f64::from(levels) * 2f64.powi(d as i32) * near + near)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Part {
    pub cell: CellId,
    pub center: usize,
}

/// The partition of the ball induced by a set of centers.
#[derive(Clone, Debug)]
pub struct ClusterPartition {
    parts: Vec<Part>,
    index: FxHashMap<CellId, usize>,
    ell: u32,
    k: usize,
}

impl ClusterPartition {
    /// Build the partition for `centers`, which should lie in the ball.
    pub fn build(dec: &CellDecomposition, centers: &[Point], alpha: f64) -> Self {
        let ell = ell_for(alpha);
        let mut parts = Vec::new();
        // distinct centers in first-occurrence order, with their indices
        let mut uniq: Vec<(usize, &Point)> = Vec::new();
        for (i, c) in centers.iter().enumerate() {
            if !uniq.iter().any(|(_, u)| *u == c) {
                uniq.push((i, c));
            }
        }
        let nearest = |v: &[f64], cand: &[u32]| {
            let mut best = (usize::MAX, f64::INFINITY);
            for &u in cand {
                let (i, c) = uniq[u as usize];
                let d = dist2(v, c);
                if d < best.1 || (d == best.1 && i < best.0) {
                    best = (i, d);
                }
            }
            best.0
        };
        let all: Vec<u32> = (0..uniq.len() as u32).collect();
        let ellf = f64::from(ell);
        // A center that can make a child of `cell` near, or be a near
        // child's closest center, lies within this radius of the parent's
        // representative, since the child's representative is within the
        // parent's diameter.
        let reach = |parent_level: u32| {
            let h = 0.5f64.powi(parent_level as i32 + 1);
            ellf * h + h + 2.0 * h + 1e-12
        };
        if !uniq.is_empty() {
            let root = CellId { level: 0, coords: CellCoords::new() };
            let mut stack = vec![(root, all.clone())];
            let mut v = vec![0.0; dec.d];
            // per level, each distinct center's cell
            let center_cells: Vec<Vec<CellId>> =
                (0..=dec.levels).map(|i| uniq.iter().map(|(_, c)| dec.cell_of(c, i)).collect()).collect();
            while let Some((cell, cand)) = stack.pop() {
                let j = cell.level as u32 + 1;
                let r = ellf * 0.5f64.powi(j as i32);
                let r2 = r * r;
                let cells = &center_cells[j as usize];
                dec.for_each_child(&cell, |child| {
                    dec.representative_into(&child, &mut v);
                    let near = cand.iter().any(|&u| dec.dist2_to_cell(&v, &cells[u as usize]) <= r2);
                    if !near {
                        parts.push(Part { center: nearest(&v, &all), cell: child });
                    } else if j == dec.levels {
                        parts.push(Part { center: nearest(&v, &cand), cell: child });
                    } else {
                        let rr = reach(j);
                        let rr2 = rr * rr;
                        let next: Vec<u32> =
                            cand.iter().copied().filter(|&u| dist2(&v, uniq[u as usize].1) <= rr2).collect();
                        stack.push((child, next));
                    }
                });
            }
        }
        let index = parts.iter().enumerate().map(|(i, p)| (p.cell.clone(), i)).collect();
        ClusterPartition { parts, index, ell, k: centers.len() }
    }

    pub fn parts(&self) -> &[Part] {
        &self.parts
    }

    pub fn ell(&self) -> u32 {
        self.ell
    }

    pub fn num_centers(&self) -> usize {
        self.k
    }

    /// The part containing `p`, if any.
    pub fn locate(&self, dec: &CellDecomposition, p: &[f64]) -> Option<&Part> {
        (1..=dec.levels).find_map(|i| self.index.get(&dec.cell_of(p, i)).map(|&j| &self.parts[j]))
    }

    /// Number of parts containing `p`; exactly 1 for points of the ball.
    pub fn covering_count(&self, dec: &CellDecomposition, p: &[f64]) -> usize {
        (1..=dec.levels).filter(|&i| self.index.contains_key(&dec.cell_of(p, i))).count()
    }

    /// Center assigned to `p`.
    pub fn assigned_center(&self, dec: &CellDecomposition, p: &[f64]) -> Option<usize> {
        self.locate(dec, p).map(|part| part.center)
    }

    /// Per-center sums of the histogram's noisy values over assigned parts.
    pub fn cluster_sums(&self, hist: &KeyedHistogram<CellId>) -> Vec<Vec<f64>> {
        let m = hist.dim();
        let mut out = vec![vec![0.0; m]; self.k];
        let mut buf = vec![0.0; m];
        for part in &self.parts {
            hist.query_into(&part.cell, &mut buf);
            for (a, x) in out[part.center].iter_mut().zip(&buf) {
                *a += x;
            }
        }
        out
    }
}

/// Remembers the last partition built, keyed by its centers.
#[derive(Clone, Debug, Default)]
pub struct PartitionCache {
    last: RefCell<Option<(Vec<Point>, Arc<ClusterPartition>)>>,
}

impl PartitionCache {
    pub fn get(&self, dec: &CellDecomposition, centers: &[Point], alpha: f64) -> Arc<ClusterPartition> {
        let mut last = self.last.borrow_mut();
        if let Some((c, p)) = last.as_ref() {
            if c.as_slice() == centers {
                return Arc::clone(p);
            }
        }
        let p = Arc::new(ClusterPartition::build(dec, centers, alpha));
        *last = Some((centers.to_vec(), Arc::clone(&p)));
        p
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cell_diameter_is_dyadic() {
        let dec = CellDecomposition::new(3, 5);
        for i in 1..=5 {
            let s = dec.side(i);
            assert!(((3.0 * s * s).sqrt() - 0.5f64.powi(i as i32)).abs() < 1e-15);
        }
    }

    #[test]
    fn parent_of_children() {
        let dec = CellDecomposition::new(2, 4);
        for c in dec.children(&CellId { level: 0, coords: CellCoords::new() }) {
            for ch in dec.children(&c) {
                assert_eq!(ch.parent(), c);
            }
        }
    }

    #[test]
    fn representative_is_in_closed_cell_and_ball() {
        let dec = CellDecomposition::new(2, 3);
        let top = dec.children(&CellId { level: 0, coords: CellCoords::new() });
        for c in top.iter().flat_map(|c| dec.children(c)) {
            let v = dec.representative(&c);
            assert!(norm2(&v) <= 1.0 + 1e-12);
            assert!(dec.dist2_to_cell(&v, &c) == 0.0);
        }
    }

    #[test]
    fn single_center_owns_everything() {
        let dec = CellDecomposition::new(1, 4);
        let part = ClusterPartition::build(&dec, &[vec![0.3]], 0.25);
        assert!(part.parts().iter().all(|p| p.center == 0));
        for x in [-1.0, -0.5, 0.0, 0.31, 0.999] {
            assert_eq!(part.covering_count(&dec, &[x]), 1);
        }
    }
}
