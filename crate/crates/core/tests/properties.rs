mod support;

use cdpk::baseline::{lloyd_trace, seed_plus_plus};
use cdpk::boosting::LiveSet;
use cdpk::budget::PrivacyBudget;
use cdpk::common::{clip_to_ball, mean, norm, CostKind, Normalizer, Point};
use cdpk::counting::{Horizon, KeyedHistogram, NoiseMode};
use cdpk::decomposition::{CellDecomposition, ClusterPartition};
use cdpk::high_dim::exact_cluster_cost_identity;
use cdpk::nets::NetIndex;
use cdpk::rng::SeedTree;
use proptest::prelude::*;
use support::close;

fn ball_point(d: usize) -> impl Strategy<Value = Point> {
    prop::collection::vec(-1.0f64..1.0, d).prop_map(|mut p| {
        clip_to_ball(&mut p, 1.0);
        p
    })
}

fn histogram(noise: NoiseMode, seed: u64) -> KeyedHistogram<u64> {
    let b = PrivacyBudget::root(1.0).unwrap();
    let a = b.allocate("h", 1.0).unwrap();
    KeyedHistogram::new(vec![a], 2, 1.0, Horizon::Unknown, noise, seed)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn noise_free_histogram_is_exact(steps in prop::collection::vec(prop::collection::vec((0u64..6, -1.0f64..1.0), 0..3), 1..60)) {
        let mut h = histogram(NoiseMode::Off, 0);
        let mut truth = [0.0f64; 6];
        for s in &steps {
            let mut touched: Vec<(u64, Vec<f64>)> = Vec::new();
            for (k, v) in s {
                if !touched.iter().any(|(q, _)| q == k) {
                    touched.push((*k, vec![*v]));
                    truth[*k as usize] += v;
                }
            }
            h.step(&touched).unwrap();
            for k in 0..6u64 {
                prop_assert!(close(h.query_scalar(&k), truth[k as usize], 1e-12));
            }
        }
    }

    #[test]
    fn insert_then_delete_cancels(vals in prop::collection::vec((0u64..4, -1.0f64..1.0), 1..20), seed in any::<u64>()) {
        let mut h = histogram(NoiseMode::On, seed);
        for (k, v) in &vals {
            h.step(&[(*k, vec![*v])]).unwrap();
            h.step(&[(*k, vec![-*v])]).unwrap();
        }
        for k in 0..4u64 {
            prop_assert!(h.exact(&k).map_or(0.0, |v| v[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn blob_round_trip(steps in prop::collection::vec((0u64..5, -1.0f64..1.0), 1..40), seed in any::<u64>()) {
        let mut h = histogram(NoiseMode::On, seed);
        let (head, tail) = steps.split_at(steps.len() / 2);
        for (k, v) in head {
            h.step(&[(*k, vec![*v])]).unwrap();
        }
        let mut g = KeyedHistogram::<u64>::from_blob(&h.to_blob()).unwrap();
        for (k, v) in tail {
            h.step(&[(*k, vec![*v])]).unwrap();
            g.step(&[(*k, vec![*v])]).unwrap();
        }
        for k in 0..5u64 {
            prop_assert_eq!(h.query(&k), g.query(&k));
        }
    }

    #[test]
    fn ledger_never_exceeds_root(fracs in prop::collection::vec(0.0f64..1.2, 1..12), eps in 0.1f64..4.0) {
        let root = PrivacyBudget::root(eps).unwrap();
        let child = root.split("child", eps / 2.0).unwrap();
        for (i, f) in fracs.iter().enumerate() {
            let target = if i % 2 == 0 { &root } else { &child };
            let want = f * target.remaining();
            let _ = target.allocate(&format!("a{i}"), want.max(1e-12));
        }
        let l = root.ledger();
        prop_assert!(l.verify().is_ok());
        prop_assert!(l.mechanism_total() <= eps * (1.0 + 1e-9));
    }

    #[test]
    fn live_set_matches_a_list(ops in prop::collection::vec((any::<bool>(), 0u8..5), 0..80)) {
        let mut live = LiveSet::default();
        let mut model: Vec<Point> = Vec::new();
        for (ins, x) in ops {
            let p = vec![f64::from(x)];
            if ins {
                live.insert(p.clone());
                model.push(p);
            } else {
                let had = model.iter().position(|q| *q == p);
                prop_assert_eq!(live.remove(&p), had.is_some());
                if let Some(i) = had {
                    model.remove(i);
                }
            }
            prop_assert_eq!(live.to_vec(), model.clone());
            prop_assert_eq!(live.len(), model.len());
        }
    }

    #[test]
    fn normalizer_round_trip(p in prop::collection::vec(-10.0f64..10.0, 1..6), lambda in 0.5f64..50.0) {
        let n = Normalizer::new(lambda);
        let r = n.normalize(&p);
        if norm(&p) <= lambda {
            let q = r.unwrap();
            prop_assert!(norm(&q) <= 1.0 + 1e-12);
            for (a, b) in n.denormalize(&q).iter().zip(&p) {
                prop_assert!(close(*a, *b, 1e-12));
            }
        } else if norm(&p) > lambda * (1.0 + 1e-9) {
            prop_assert!(r.is_err());
        }
    }

    #[test]
    fn cost_identity(pts in prop::collection::vec(ball_point(3), 1..30)) {
        let m = mean(&pts, 3);
        let direct: f64 = pts.iter().map(|p| cdpk::common::dist2(p, &m)).sum();
        prop_assert!(close(exact_cluster_cost_identity(&pts), direct, 1e-9));
    }

    #[test]
    fn lloyd_descends(pts in prop::collection::vec(ball_point(2), 4..40), k in 1usize..4, seed in any::<u64>(), median in any::<bool>()) {
        let kind = if median { CostKind::KMedian } else { CostKind::KMeans };
        let w = vec![1.0; pts.len()];
        let init = seed_plus_plus(&pts, &w, k, kind, &mut SeedTree::new(seed).rng());
        let tr = lloyd_trace(&pts, &w, init, kind, 30);
        for c in tr.costs.windows(2) {
            prop_assert!(c[1] <= c[0] * (1.0 + 1e-12) + 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn partition_is_a_disjoint_cover(
        centers in prop::collection::vec(ball_point(2), 1..4),
        probes in prop::collection::vec(ball_point(2), 1..40),
    ) {
        let dec = CellDecomposition::new(2, 4);
        let part = ClusterPartition::build(&dec, &centers, 0.25);
        for x in &probes {
            prop_assert_eq!(part.covering_count(&dec, x), 1);
            prop_assert!(part.assigned_center(&dec, x).unwrap() < centers.len());
        }
    }

    #[test]
    fn net_points_cover_themselves(x in ball_point(2), i in 1u32..5) {
        let nets = NetIndex::new(2, 5).unwrap();
        let near = nets.covering_nets(&x, i);
        prop_assert!(!near.is_empty());
        prop_assert!(near.len() <= 16);
        for z in &near {
            prop_assert!(nets.covering_nets(&nets.point(z), i).contains(z));
            if i < 5 {
                let r = NetIndex::children_radius(i);
                for c in nets.children(z) {
                    prop_assert!(cdpk::common::dist(&nets.point(&c), &nets.point(z)) <= r);
                }
            }
        }
    }
}
