//! k-median mode, with the Weiszfeld geometric median for comparison.

use cdpk::baseline::weiszfeld;
use cdpk::common::CostKind;
use cdpk::high_dim::mean_median_ratio;
use cdpk::pipeline::{Engine, PipelineConfig};
use cdpk::UpdateEvent;

fn main() {
    let pts: Vec<Vec<f64>> = (0..60).map(|i| vec![0.3 + 0.01 * (i % 7) as f64, -0.2 + 0.01 * (i % 5) as f64]).collect();
    let med = weiszfeld(&pts, &vec![1.0; pts.len()]);
    println!("geometric median {med:.4?}, mean/median cost ratio {:.4}", mean_median_ratio(&pts));

    let cfg = PipelineConfig {
        k: 1,
        cost: CostKind::KMedian,
        nmax: Some(64),
        t_max: Some(60),
        copies: Some(1),
        noise: cdpk::NoiseMode::Off,
        ..Default::default()
    };
    let mut e = Engine::new(cfg, 2).unwrap();
    let mut last = None;
    for (t, p) in pts.iter().enumerate() {
        last = Some(e.process(&UpdateEvent::insert(t as u64 + 1, p.clone())).unwrap());
    }
    let row = last.unwrap();
    println!("engine center {:.4?} est {:.4} true {:.4}", row.centers[0], row.est_cost, e.true_cost(&row.centers));
}
