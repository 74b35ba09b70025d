//! The cell partition induced by a set of centers: fine cells near the
//! centers, coarse cells far away.

use cdpk::decomposition::{part_count_ceiling, CellDecomposition, ClusterPartition};

fn main() {
    let dec = CellDecomposition::new(2, 5);
    let centers = vec![vec![-0.4, 0.1], vec![0.5, 0.5]];
    for alpha in [0.5, 0.25] {
        let p = ClusterPartition::build(&dec, &centers, alpha);
        let mut per_level = vec![0usize; 6];
        for part in p.parts() {
            per_level[part.cell.level as usize] += 1;
        }
        println!(
            "alpha={alpha} ell={} parts={} (ceiling {:.0}) per level {:?}",
            p.ell(),
            p.parts().len(),
            part_count_ceiling(2, p.ell(), 2, 5),
            per_level
        );
    }
    let p = ClusterPartition::build(&dec, &centers, 0.5);
    for x in [[-0.4, 0.12], [0.0, -0.9]] {
        println!("{x:?} -> center {:?}", p.assigned_center(&dec, &x));
    }
}
