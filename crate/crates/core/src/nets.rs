//! Hierarchical nets of the unit ball.
//!
//! Level `i` is a scaled lattice whose covering radius is just below
//! `2^-(i+1)` and whose points are at least that far apart. A lattice point
//! belongs to the level when it lies within `1 + R_i` of the origin, `R_i`
//! being the covering radius, so every point of the ball is covered and
//! every net point's Voronoi cell can meet the ball.
//!
//! Lattices by dimension:
//!
//! | d     | lattice                 | integer form                 |
//! |-------|-------------------------|------------------------------|
//! | 1     | `Z`                     | all integers                 |
//! | 2     | hexagonal `A2`          | `x + y` even, axes `1/2, √3/2` |
//! | 3     | body-centered cubic     | coordinates of equal parity, axes `1/2` |
//! | 4..=7 | checkerboard `D_d`      | coordinate sum even          |
//!
//! Higher dimensions are rejected; project first.
//!
//! Ids are `(level, integer coordinates)` and order lexicographically. That
//! order is the tie-break everywhere a smallest id is required.

use crate::common::{norm, norm2, Point};
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;
use std::io::Write;
use std::ops::ControlFlow;
use thiserror::Error;

pub type Coords = SmallVec<[i32; 8]>;

/// Largest supported dimension.
pub const MAX_DIM: usize = 7;
/// Largest supported level.
pub const MAX_LEVEL: u32 = 24;
/// Eager enumeration refuses levels estimated above this many points.
pub const EAGER_LIMIT: f64 = 4.0e6;

const SHRINK: f64 = 1.0 - 1e-9;

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Serialize, Deserialize)]
pub struct NetId {
    pub level: u8,
    pub coords: Coords,
}

#[derive(Debug, Error, PartialEq)]
pub enum NetError {
    #[error("nets are available for 1 <= d <= {MAX_DIM}, got d = {0}")]
    UnsupportedDimension(usize),
    #[error("level {0} is outside 1..={1}")]
    LevelOutOfRange(u32, u32),
    #[error("level {level} has about {estimate:.0} points; enumerate lazily instead")]
    TooLarge { level: u32, estimate: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum LatticeKind {
    Integer,
    Hexagonal,
    BodyCentered,
    Checkerboard,
}

/// Geometry of all net levels for one dimension.
#[derive(Clone, Debug)]
pub struct NetIndex {
    d: usize,
    levels: u32,
    kind: LatticeKind,
    axes: SmallVec<[f64; 8]>,
    cover_unit: f64,
    pack_unit: f64,
}

impl NetIndex {
    /// Nets for levels `1..=levels` in dimension `d`.
    pub fn new(d: usize, levels: u32) -> Result<Self, NetError> {
        if d == 0 || d > MAX_DIM {
            return Err(NetError::UnsupportedDimension(d));
        }
        if levels == 0 || levels > MAX_LEVEL {
            return Err(NetError::LevelOutOfRange(levels, MAX_LEVEL));
        }
        let (kind, axes, cover_unit, pack_unit): (_, SmallVec<[f64; 8]>, f64, f64) = match d {
            1 => (LatticeKind::Integer, smallvec::smallvec![1.0], 0.5, 1.0),
            2 => (
                LatticeKind::Hexagonal,
                smallvec::smallvec![0.5, 3f64.sqrt() / 2.0],
                1.0 / 3f64.sqrt(),
                1.0,
            ),
            3 => (LatticeKind::BodyCentered, smallvec::smallvec![0.5; 3], 5f64.sqrt() / 4.0, 3f64.sqrt() / 2.0),
            _ => (
                LatticeKind::Checkerboard,
                SmallVec::from_elem(1.0, d),
                (d as f64).sqrt().max(2.0) / 2.0,
                2f64.sqrt(),
            ),
        };
        Ok(NetIndex { d, levels, kind, axes, cover_unit, pack_unit })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn levels(&self) -> u32 {
        self.levels
    }

    pub fn kind(&self) -> LatticeKind {
        self.kind
    }

    /// Target covering radius `2^-(i+1)` of level `i`.
    pub fn delta(i: u32) -> f64 {
        0.5f64.powi(i as i32 + 1)
    }

    /// Actual covering radius of level `i`, strictly below `delta(i)`.
    pub fn covering_radius(&self, i: u32) -> f64 {
        Self::delta(i) * SHRINK
    }

    /// Minimum distance between distinct points of level `i`.
    pub fn min_distance(&self, i: u32) -> f64 {
        self.scale(i) * self.pack_unit
    }

    fn scale(&self, i: u32) -> f64 {
        self.covering_radius(i) / self.cover_unit
    }

    /// The per-level size bound `2^(i*d + 3)`.
    pub fn size_bound(&self, i: u32) -> f64 {
        2f64.powi((i as usize * self.d + 3) as i32)
    }

    fn in_lattice(&self, c: &[i32]) -> bool {
        match self.kind {
            LatticeKind::Integer => true,
            LatticeKind::Hexagonal | LatticeKind::Checkerboard => c.iter().map(|&x| x as i64).sum::<i64>() % 2 == 0,
            LatticeKind::BodyCentered => {
                let p = c[0].rem_euclid(2);
                c.iter().all(|x| x.rem_euclid(2) == p)
            }
        }
    }

    /// Euclidean position of a net point.
    pub fn point(&self, id: &NetId) -> Point {
        let s = self.scale(id.level as u32);
        id.coords.iter().zip(&self.axes).map(|(&c, a)| c as f64 * a * s).collect()
    }

    fn is_member(&self, i: u32, g: &[f64]) -> bool {
        norm(g) <= 1.0 + self.covering_radius(i)
    }

    /// Whether `id` is a point of its level.
    pub fn contains(&self, id: &NetId) -> bool {
        let i = id.level as u32;
        id.coords.len() == self.d
            && (1..=self.levels).contains(&i)
            && self.in_lattice(&id.coords)
            && self.is_member(i, &self.point(id))
    }

    /// Visit level-`i` points within distance `r` of `x` in id order.
    pub fn visit_within<F>(&self, i: u32, x: &[f64], r: f64, f: F) -> ControlFlow<()>
    where
        F: FnMut(NetId, &[f64]) -> ControlFlow<()>,
    {
        self.visit_within_from(i, x, r, None, f)
    }

    /// Like [`visit_within`](Self::visit_within), skipping coordinates
    /// lexicographically below `from`.
    pub fn visit_within_from<F>(&self, i: u32, x: &[f64], r: f64, from: Option<&[i32]>, mut f: F) -> ControlFlow<()>
    where
        F: FnMut(NetId, &[f64]) -> ControlFlow<()>,
    {
        let s = self.scale(i);
        let outer = 1.0 + self.covering_radius(i);
        let mut lo: Coords = SmallVec::with_capacity(self.d);
        let mut hi: Coords = SmallVec::with_capacity(self.d);
        for j in 0..self.d {
            let step = self.axes[j] * s;
            let a = ((x[j] - r).max(-outer) / step).ceil() as i32;
            let b = ((x[j] + r).min(outer) / step).floor() as i32;
            if a > b {
                return ControlFlow::Continue(());
            }
            lo.push(a);
            hi.push(b);
        }
        let r2 = r * r;
        let outer2 = outer * outer;
        let mut c = lo.clone();
        if let Some(from) = from {
            match start_at(&lo, &hi, from) {
                Some(start) => c = start,
                None => return ControlFlow::Continue(()),
            }
        }
        let mut g: Point = vec![0.0; self.d];
        loop {
            if self.in_lattice(&c) {
                for j in 0..self.d {
                    g[j] = c[j] as f64 * self.axes[j] * s;
                }
                let dx: f64 = g.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
                if dx <= r2 && norm2(&g) <= outer2 {
                    f(NetId { level: i as u8, coords: c.clone() }, &g)?;
                }
            }
            // odometer, last coordinate fastest
            let mut j = self.d;
            loop {
                if j == 0 {
                    return ControlFlow::Continue(());
                }
                j -= 1;
                if c[j] < hi[j] {
                    c[j] += 1;
                    break;
                }
                c[j] = lo[j];
            }
        }
    }

    /// Level-`i` points within distance `r` of `x`, sorted by id.
    pub fn within(&self, i: u32, x: &[f64], r: f64) -> Vec<NetId> {
        let mut out = Vec::new();
        let _ = self.visit_within(i, x, r, |id, _| {
            out.push(id);
            ControlFlow::Continue(())
        });
        out
    }

    /// Smallest-id level-`i` point within `r` of `x` satisfying `pred`.
    pub fn first_within<P>(&self, i: u32, x: &[f64], r: f64, pred: P) -> Option<NetId>
    where
        P: FnMut(&NetId, &[f64]) -> bool,
    {
        self.first_within_from(i, x, r, None, pred)
    }

    /// Like [`first_within`](Self::first_within), over ids `>= from`.
    pub fn first_within_from<P>(&self, i: u32, x: &[f64], r: f64, from: Option<&[i32]>, mut pred: P) -> Option<NetId>
    where
        P: FnMut(&NetId, &[f64]) -> bool,
    {
        let mut found = None;
        let _ = self.visit_within_from(i, x, r, from, |id, g| {
            if pred(&id, g) {
                found = Some(id);
                ControlFlow::Break(())
            } else {
                ControlFlow::Continue(())
            }
        });
        found
    }

    /// Net points `z` of level `i` with `p` in their 1-neighborhood, i.e.
    /// within `2^-i` of `p`.
    pub fn covering_nets(&self, p: &[f64], i: u32) -> Vec<NetId> {
        self.within(i, p, 0.5f64.powi(i as i32))
    }

    /// Radius of the children search around a level-`i` point.
    pub fn children_radius(i: u32) -> f64 {
        4.0 * 0.5f64.powi(i as i32)
    }

    /// Level-`(i+1)` points within `4 * 2^-i` of `z`; empty at the last level.
    pub fn children(&self, z: &NetId) -> Vec<NetId> {
        let i = z.level as u32;
        if i >= self.levels {
            return Vec::new();
        }
        self.within(i + 1, &self.point(z), Self::children_radius(i))
    }

    /// Rough point count of level `i`.
    pub fn estimate_level_size(&self, i: u32) -> f64 {
        let s = self.scale(i);
        let outer = 1.0 + self.covering_radius(i);
        let cells: f64 = self.axes.iter().map(|a| 2.0 * outer / (a * s) + 1.0).product();
        match self.kind {
            LatticeKind::Integer => cells,
            LatticeKind::Hexagonal | LatticeKind::Checkerboard => cells / 2.0,
            LatticeKind::BodyCentered => cells / 4.0,
        }
    }

    /// Every point of level `i`, sorted by id.
    pub fn build_level(&self, i: u32) -> Result<Vec<NetId>, NetError> {
        if i == 0 || i > self.levels {
            return Err(NetError::LevelOutOfRange(i, self.levels));
        }
        let estimate = self.estimate_level_size(i);
        if estimate > EAGER_LIMIT {
            return Err(NetError::TooLarge { level: i, estimate });
        }
        let origin = vec![0.0; self.d];
        Ok(self.within(i, &origin, 1.0 + self.covering_radius(i)))
    }

    /// Dump one level as CSV: `level,c0..,x0..`.
    pub fn write_level_csv<W: Write>(&self, i: u32, mut w: W) -> std::io::Result<()> {
        let pts = self.build_level(i).map_err(std::io::Error::other)?;
        let mut header = vec!["level".to_string()];
        header.extend((0..self.d).map(|j| format!("c{j}")));
        header.extend((0..self.d).map(|j| format!("x{j}")));
        writeln!(w, "{}", header.join(","))?;
        for id in &pts {
            let mut row = vec![id.level.to_string()];
            row.extend(id.coords.iter().map(|c| c.to_string()));
            row.extend(self.point(id).iter().map(|x| x.to_string()));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Lexicographically smallest point of the box `[lo, hi]` that is `>= from`.
fn start_at(lo: &[i32], hi: &[i32], from: &[i32]) -> Option<Coords> {
    let d = lo.len();
    let mut c: Coords = SmallVec::with_capacity(d);
    for j in 0..d {
        if from[j] < lo[j] {
            c.extend_from_slice(&lo[j..]);
            return Some(c);
        }
        if from[j] > hi[j] {
            // carry into the prefix
            c.extend_from_slice(&lo[j..]);
            let mut m = j;
            loop {
                if m == 0 {
                    return None;
                }
                m -= 1;
                if c[m] < hi[m] {
                    c[m] += 1;
                    return Some(c);
                }
                c[m] = lo[m];
            }
        }
        c.push(from[j]);
    }
    Some(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::common::dist;

    #[test]
    fn packing_exceeds_covering() {
        for d in 1..=MAX_DIM {
            let n = NetIndex::new(d, 3).unwrap();
            for i in 1..=3 {
                assert!(n.min_distance(i) > NetIndex::delta(i), "d={d} i={i}");
            }
        }
    }

    #[test]
    fn rejects_high_dimension() {
        assert_eq!(NetIndex::new(8, 3).unwrap_err(), NetError::UnsupportedDimension(8));
    }

    #[test]
    fn level_one_sizes() {
        assert_eq!(NetIndex::new(1, 6).unwrap().build_level(1).unwrap().len(), 5);
        assert_eq!(NetIndex::new(2, 6).unwrap().build_level(1).unwrap().len(), 31);
        assert_eq!(NetIndex::new(3, 3).unwrap().build_level(1).unwrap().len(), 169);
    }

    #[test]
    fn ids_are_sorted_and_members() {
        let n = NetIndex::new(2, 4).unwrap();
        let lvl = n.build_level(2).unwrap();
        assert!(lvl.windows(2).all(|w| w[0] < w[1]));
        assert!(lvl.iter().all(|z| n.contains(z)));
    }

    #[test]
    fn children_are_close() {
        let n = NetIndex::new(2, 4).unwrap();
        let z = NetId { level: 2, coords: smallvec::smallvec![2, 0] };
        let zp = n.point(&z);
        for c in n.children(&z) {
            assert_eq!(c.level, 3);
            assert!(dist(&n.point(&c), &zp) <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn first_within_from_matches_filtered_scan() {
        for d in 1..=3 {
            let n = NetIndex::new(d, 3).unwrap();
            let x = vec![0.1; d];
            let all = n.within(2, &x, 0.9);
            for from in all.iter().step_by(3) {
                let want = all.iter().find(|z| *z >= from && z.coords.iter().sum::<i32>() % 3 != 0);
                let got = n.first_within_from(2, &x, 0.9, Some(&from.coords), |z, _| z.coords.iter().sum::<i32>() % 3 != 0);
                assert_eq!(got.as_ref(), want);
            }
            // starts outside the box
            let below: Coords = SmallVec::from_elem(-1000, d);
            let above: Coords = SmallVec::from_elem(1000, d);
            assert_eq!(n.first_within_from(2, &x, 0.9, Some(&below), |_, _| true).as_ref(), all.first());
            assert_eq!(n.first_within_from(2, &x, 0.9, Some(&above), |_, _| true), None);
        }
    }
}
