//! The full engine on a dynamic stream with insertions and deletions, with
//! and without privacy noise. At a few dozen points and eps = 1 the noise
//! dominates.

use cdpk::pipeline::{Engine, PipelineConfig};
use cdpk::{NoiseMode, UpdateEvent};
use rand::Rng;

fn main() {
    let mut rng = cdpk::rng::SeedTree::new(5).rng();
    let mut live: Vec<Vec<f64>> = Vec::new();
    let mut events = Vec::new();
    for t in 1..=300 {
        let ev = if live.len() > 40 || (!live.is_empty() && rng.gen::<f64>() < 0.2) {
            UpdateEvent::delete(t, live.swap_remove(rng.gen_range(0..live.len())))
        } else {
            let c = if rng.gen::<bool>() { [-5.0, 2.0] } else { [4.0, -3.0] };
            let p: Vec<f64> = c.iter().map(|x| x + rng.gen_range(-0.5..0.5)).collect();
            live.push(p.clone());
            UpdateEvent::insert(t, p)
        };
        events.push(ev);
    }

    for noise in [NoiseMode::Off, NoiseMode::On] {
        let cfg = PipelineConfig {
            k: 2,
            lambda: 10.0,
            nmax: Some(64),
            t_max: Some(300),
            copies: Some(3),
            noise,
            seed: 5,
            ..Default::default()
        };
        let mut e = Engine::new(cfg, 2).unwrap();
        println!("noise {noise:?}");
        for ev in &events {
            let row = e.process(ev).unwrap();
            if ev.t % 75 == 0 {
                println!(
                    "  t={} n={} copy={} est={:.1} true={:.1} centers={:.2?}",
                    ev.t,
                    e.live().len(),
                    row.chosen_copy,
                    row.est_cost,
                    e.true_cost(&row.centers),
                    row.centers
                );
            }
        }
    }
}
