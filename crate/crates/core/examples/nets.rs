//! Lattice nets of the unit ball: level sizes, covering, and the
//! neighborhoods a point falls into.

use cdpk::common::dist;
use cdpk::NetIndex;

fn main() {
    for d in 1..=3 {
        let nets = NetIndex::new(d, 3).unwrap();
        print!("d={d} {:?}:", nets.kind());
        for i in 1..=3 {
            print!(" |Z_{i}|={} (bound {})", nets.build_level(i).unwrap().len(), nets.size_bound(i));
        }
        println!();
    }

    let nets = NetIndex::new(2, 4).unwrap();
    let x = [0.3, -0.45];
    for i in 1..=4 {
        let near = nets.covering_nets(&x, i);
        let closest = near.iter().map(|z| dist(&nets.point(z), &x)).fold(f64::INFINITY, f64::min);
        println!("level {i}: {} net points within 2^-{i}, closest at {closest:.4}", near.len());
    }
    let z = &nets.covering_nets(&x, 1)[0];
    println!("{:?} has {} children", nets.point(z), nets.children(z).len());
}
