//! Projection to a low dimension, clustering there, and lifting the
//! centers back from private cluster sums.

use cdpk::common::{cost, Op};
use cdpk::high_dim::{target_dim, HighDimClustering, Projection};
use cdpk::low_dim::LowDimConfig;
use cdpk::rng::SeedTree;
use cdpk::{CostKind, Horizon, NoiseMode, PrivacyBudget};
use rand::Rng;

fn main() {
    let d = 12;
    println!("default target dimension for k=2: {}", target_dim(2, 0.25, 0.1, 8.0));
    let proj = Projection::sample(d, 1, 400.0, SeedTree::new(4));
    let low = LowDimConfig {
        k: 2,
        alpha: 0.25,
        kind: CostKind::KMeans,
        kprime: 8,
        theta: Some(1.0),
        value_share: 0.5,
        refine_restarts: 4,
        n_bound: 400.0,
    };
    let budget = PrivacyBudget::root(1.0).unwrap();
    let mut hd = HighDimClustering::new(proj, 14, low, &budget, Horizon::Known(400), NoiseMode::Off, SeedTree::new(4))
        .unwrap();
    let mut rng = SeedTree::new(4).rng();
    let mut pts = Vec::new();
    for i in 0..400 {
        let s = if i % 2 == 0 { 0.28 } else { -0.28 };
        let p: Vec<f64> = (0..d).map(|_| s + rng.gen_range(-0.02..0.02)).collect();
        hd.step(Op::Insert, Some(&p)).unwrap();
        pts.push(p);
    }
    let out = hd.solve();
    for (s, c) in out.summaries.iter().zip(&out.solution.centers) {
        println!("n={:5.0} center[0..3]={:.3?}", s.n, &c[..3]);
    }
    println!("estimate {:.4} true {:.4}", out.solution.est_cost, cost(&pts, &out.solution.centers, CostKind::KMeans));
}
