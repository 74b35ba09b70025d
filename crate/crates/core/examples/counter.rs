//! A continual-observation counter: the noisy running count stays within
//! its error bound while the stream runs.

use cdpk::counting::DyadicTree;
use cdpk::{Horizon, NoiseMode, NoisyCounter, PrivacyBudget};
use rand::Rng;

fn main() {
    let budget = PrivacyBudget::root(1.0).unwrap();
    let alloc = budget.allocate("count", 1.0).unwrap();
    let t_max = 1024;
    let mut c = NoisyCounter::new(alloc, 1.0, Horizon::Known(t_max), NoiseMode::On, 7);
    let mut rng = cdpk::rng::SeedTree::new(7).rng();
    println!("tree depth {}", DyadicTree::fixed_levels(t_max));
    for t in 1..=t_max {
        c.update(if rng.gen::<f64>() < 0.3 { 1.0 } else { 0.0 }).unwrap();
        if t.is_power_of_two() {
            println!(
                "t={t:5} exact={:4} noisy={:8.2} bound(0.05)={:7.2}",
                c.exact(),
                c.query(),
                c.error_bound(0.05)
            );
        }
    }
}
