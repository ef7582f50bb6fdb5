use std::collections::HashSet;

use proptest::prelude::*;
use rand::Rng;

use rfc_core::data::{
    gen_synthetic, label_histogram, partition, Grid, PartitionConfig, PartitionScheme,
};
use rfc_core::metrics::{macro_f1, summarize, Direction};
use rfc_core::seed::{derive_seed, rng_from_seed};
use rfc_core::ParamVector;

proptest! {
    #[test]
    fn param_bytes_round_trip(values in prop::collection::vec(any::<f64>(), 0..32)) {
        let p = ParamVector::new(values);
        let bytes = p.to_le_bytes();
        prop_assert_eq!(bytes.len(), 8 + 8 * p.dim());
        let back = ParamVector::from_le_bytes(&bytes).unwrap();
        prop_assert_eq!(back.to_le_bytes(), bytes);
    }

    #[test]
    fn sub_then_add_restores(a in prop::collection::vec(-1e3f64..1e3, 1..10), shift in -1e3f64..1e3) {
        let p = ParamVector::new(a.clone());
        let q = ParamVector::new(a.iter().map(|x| x + shift).collect());
        let back = p.add(&q.sub(&p).unwrap()).unwrap();
        for (x, y) in back.as_slice().iter().zip(q.as_slice()) {
            prop_assert!((x - y).abs() <= 1e-9);
        }
        prop_assert_eq!(p.l2_dist_sq(&p).unwrap(), 0.0);
    }

    #[test]
    fn partition_is_disjoint_and_complete(
        per_class in 4usize..30,
        clients in 1usize..12,
        val in 0.0f64..0.3,
        test in 0.0f64..0.3,
        shards in 0usize..3,
        seed in any::<u64>(),
    ) {
        let grid = Grid { height: 3, width: 3 };
        let data = gen_synthetic(3, grid, per_class, 0.3, seed).unwrap();
        let scheme = if shards == 0 { PartitionScheme::Iid } else { PartitionScheme::LabelShard { shards_per_client: shards } };
        let cfg = PartitionConfig { scheme, val_fraction: val, test_fraction: test, seed };
        match partition(&data, clients, &cfg) {
            Ok(p) => {
                prop_assert_eq!(p.num_clients(), clients);
                prop_assert!(p.client_data.iter().all(|c| !c.is_empty()));
                let total: usize = p.client_data.iter().map(Vec::len).sum::<usize>() + p.validation.len() + p.test.len();
                prop_assert_eq!(total, data.len());
                let mut all: Vec<_> = p.client_data.concat();
                all.extend(p.validation.iter().cloned());
                all.extend(p.test.iter().cloned());
                prop_assert_eq!(label_histogram(&all), label_histogram(&data));
                prop_assert_eq!(&partition(&data, clients, &cfg).unwrap(), &p);
            }
            Err(_) => {
                let rest = data.len() - (data.len() as f64 * val).round() as usize - (data.len() as f64 * test).round() as usize;
                prop_assert!(rest < clients * shards.max(1));
            }
        }
    }

    #[test]
    fn summarize_ignores_non_finite_prefix(
        tail in prop::collection::vec(-5.0f64..5.0, 10..20),
        pad in prop::collection::vec(prop_oneof![Just(f64::NAN), Just(f64::INFINITY)], 0..5),
    ) {
        let mut padded = pad.clone();
        padded.extend(&tail);
        for dir in [Direction::Maximize, Direction::Minimize] {
            let (a, b) = (summarize(&tail, dir).unwrap(), summarize(&padded, dir).unwrap());
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn macro_f1_bounded(pairs in prop::collection::vec((0usize..4, 0usize..4), 1..60)) {
        let (pred, lab): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
        let f = macro_f1(&pred, &lab, 4).unwrap();
        prop_assert!((0.0..=1.0).contains(&f));
    }
}

#[test]
fn label_shard_one_shard_gives_single_label_clients() {
    let grid = Grid {
        height: 3,
        width: 3,
    };
    let data = gen_synthetic(3, grid, 20, 0.3, 2).unwrap();
    let cfg = PartitionConfig {
        scheme: PartitionScheme::LabelShard {
            shards_per_client: 1,
        },
        val_fraction: 0.0,
        test_fraction: 0.0,
        seed: 7,
    };
    let p = partition(&data, 3, &cfg).unwrap();
    for c in &p.client_data {
        assert_eq!(label_histogram(c).len(), 1, "label entropy must be zero");
    }
}

#[test]
fn macro_f1_equals_accuracy_on_perfect_diagonal() {
    let labels = vec![0, 1, 2, 2, 1, 0, 0];
    assert_eq!(macro_f1(&labels, &labels, 3).unwrap(), 1.0);
}

#[test]
fn derived_seeds_do_not_collide() {
    let mut rng = rng_from_seed(0x5eed);
    let tags = ["train", "shuffle", "sample", "poison", "init"];
    let mut tuples = HashSet::new();
    let mut outputs = HashSet::new();
    while tuples.len() < 100_000 {
        let t = (
            rng.random_range(0..1u64 << 20),
            rng.random_range(0..200u64),
            rng.random_range(0..8u64),
            rng.random_range(0..400u64),
            tags[rng.random_range(0..tags.len())],
        );
        if tuples.insert(t) {
            assert!(
                outputs.insert(derive_seed(t.0, t.1, t.2, t.3, t.4)),
                "collision at {t:?}"
            );
        }
    }
}
