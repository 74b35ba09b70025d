#![allow(dead_code)]

use cdpk::common::{Op, Point, UpdateEvent};
use cdpk::rng::{normal_from_uniforms, unit_open};
use rand::Rng;

pub fn gauss<R: Rng>(rng: &mut R) -> f64 {
    normal_from_uniforms(unit_open(rng.gen()), unit_open(rng.gen()))
}

/// Uniform point in the ball of radius `r`.
pub fn in_ball<R: Rng>(rng: &mut R, d: usize, r: f64) -> Point {
    let mut v: Point = (0..d).map(|_| gauss(rng)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
    let s = r * rng.gen::<f64>().powf(1.0 / d as f64) / n;
    v.iter_mut().for_each(|x| *x *= s);
    v
}

/// Gaussian blob around `c`, pulled back inside the ball of radius `r`.
pub fn near<R: Rng>(rng: &mut R, c: &[f64], sigma: f64, r: f64) -> Point {
    let mut p: Point = c.iter().map(|x| x + sigma * gauss(rng)).collect();
    cdpk::common::clip_to_ball(&mut p, r);
    p
}

/// A stream of inserts, deletes and no-ops with at most `n_max` live
/// points, drawn by `draw`.
pub fn random_stream<R: Rng, F: FnMut(&mut R) -> Point>(
    rng: &mut R,
    t_max: u64,
    n_max: usize,
    mut draw: F,
) -> Vec<UpdateEvent> {
    let mut live: Vec<Point> = Vec::new();
    let mut out = Vec::with_capacity(t_max as usize);
    for t in 1..=t_max {
        let u: f64 = rng.gen();
        if u < 0.55 && live.len() < n_max {
            let p = draw(rng);
            live.push(p.clone());
            out.push(UpdateEvent::insert(t, p));
        } else if u < 0.85 && !live.is_empty() {
            let i = rng.gen_range(0..live.len());
            out.push(UpdateEvent::delete(t, live.swap_remove(i)));
        } else {
            out.push(UpdateEvent::noop(t));
        }
    }
    out
}

/// Apply one event to a plain multiset.
pub fn apply(live: &mut Vec<Point>, ev: &UpdateEvent) {
    match ev.op {
        Op::Insert => live.push(ev.point.clone().expect("insert carries a point")),
        Op::Delete => {
            let p = ev.point.as_ref().expect("delete carries a point");
            let i = live.iter().position(|q| q == p).expect("deleted point is live");
            live.remove(i);
        }
        Op::Noop => {}
    }
}

/// `|a - b| <= tol * max(|a|, |b|, 1)`.
pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

/// Exact optimal 1-d k-means cost by dynamic programming over sorted points.
pub fn kmeans_1d_opt(xs: &[f64], k: usize) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return 0.0;
    }
    let mut s = vec![0.0; n + 1];
    let mut s2 = vec![0.0; n + 1];
    for i in 0..n {
        s[i + 1] = s[i] + v[i];
        s2[i + 1] = s2[i] + v[i] * v[i];
    }
    // cost of v[i..j]
    let seg = |i: usize, j: usize| {
        let m = (j - i) as f64;
        let sum = s[j] - s[i];
        (s2[j] - s2[i] - sum * sum / m).max(0.0)
    };
    let mut best: Vec<f64> = (0..=n).map(|j| if j == 0 { 0.0 } else { seg(0, j) }).collect();
    for _ in 1..k {
        let mut next = best.clone();
        for j in 1..=n {
            for i in 1..j {
                let c = best[i] + seg(i, j);
                if c < next[j] {
                    next[j] = c;
                }
            }
        }
        best = next;
    }
    best[n]
}
