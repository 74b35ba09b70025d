//! Private clustering in one dimension, against the noise-free run.

use cdpk::common::{cost, Op};
use cdpk::low_dim::{LowDimConfig, PrivateClustering};
use cdpk::rng::SeedTree;
use cdpk::{CostKind, Horizon, NoiseMode, PrivacyBudget};
use rand::Rng;

fn main() {
    let cfg = LowDimConfig {
        k: 3,
        alpha: 0.25,
        kind: CostKind::KMeans,
        kprime: 12,
        theta: None,
        value_share: 0.5,
        refine_restarts: 4,
        n_bound: 1000.0,
    };
    let mut rng = SeedTree::new(3).rng();
    let pts: Vec<Vec<f64>> = (0..1000).map(|i| vec![[-0.7, 0.0, 0.6][i % 3] + rng.gen_range(-0.05..0.05)]).collect();
    for noise in [NoiseMode::Off, NoiseMode::On] {
        let budget = PrivacyBudget::root(1.0).unwrap();
        let mut pc =
            PrivateClustering::new(1, 8, cfg.clone(), &budget, Horizon::Known(1000), noise, SeedTree::new(3)).unwrap();
        for p in &pts {
            pc.step(Op::Insert, Some(p)).unwrap();
        }
        let out = pc.solve();
        let mut c: Vec<f64> = out.solution.centers.iter().map(|c| c[0]).collect();
        c.sort_by(f64::total_cmp);
        println!(
            "{noise:?}: theta={:.3e} centers={c:.3?} cost={:.3}",
            pc.theta(),
            cost(&pts, &out.solution.centers, CostKind::KMeans)
        );
    }
}
