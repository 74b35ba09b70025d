//! Recursive greedy over private net values on a two-blob stream.
//!
//! A chosen center blocks net points within `89 * 2^-level` of it, which at
//! this depth covers most of the ball, so later descents start wherever
//! room is left. The pipeline asks for `k' > k` centers for this reason.

use cdpk::common::Op;
use cdpk::greedy::recursive_greedy;
use cdpk::low_dim::ValueStream;
use cdpk::rng::SeedTree;
use cdpk::{CostKind, Horizon, NetIndex, NoiseMode, PrivacyBudget};

fn main() {
    let nets = NetIndex::new(2, 6).unwrap();
    let budget = PrivacyBudget::root(1.0).unwrap();
    let mut vs = ValueStream::new(nets, CostKind::KMeans, &budget, Horizon::Known(400), NoiseMode::Off, SeedTree::new(1))
        .unwrap();
    let mut rng = SeedTree::new(1).rng();
    for i in 0..400 {
        let c = if i % 2 == 0 { [-0.5, 0.2] } else { [0.5, -0.3] };
        let p: Vec<f64> = c.iter().map(|x| x + 0.03 * rand::Rng::gen_range(&mut rng, -1.0..1.0)).collect();
        vs.step(Op::Insert, Some(&p)).unwrap();
    }
    let table = vs.table(1.0);
    let g = recursive_greedy(vs.nets(), &table, 4);
    for (c, z) in g.centers.iter().zip(&g.net_centers) {
        println!("center {:?} at level {}", c.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>(), z.level);
    }
    println!("{} table queries, degenerate={}", table.queries(), g.degenerate);
}
