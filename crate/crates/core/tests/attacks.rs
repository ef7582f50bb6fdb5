use proptest::prelude::*;
use rand::Rng;

use rfc_core::aggregation::fedavg;
use rfc_core::attacks::{
    apply_trigger, assign_adversaries, boost_update, flip_labels, poison_dataset, AdversaryConfig,
    AttackKind, Placement,
};
use rfc_core::data::{gen_synthetic, Grid};
use rfc_core::seed::rng_from_seed;
use rfc_core::ParamVector;

/// Global update `G + eta * (mean - G)` written out independently.
fn server_step(global: &ParamVector, updates: &[ParamVector], eta: f64) -> Vec<f64> {
    let mean = fedavg(updates).unwrap();
    global
        .as_slice()
        .iter()
        .zip(mean.as_slice())
        .map(|(g, m)| g + eta * (m - g))
        .collect()
}

#[test]
fn boosted_update_replaces_the_global_model() {
    let mut rng = rng_from_seed(0x626f_6f73);
    for case in 0..100 {
        let dim = rng.random_range(1..=6);
        let n = rng.random_range(1..=50);
        let eta = [0.5, 1.0, 2.0][case % 3];
        let v_g = ParamVector::new((0..dim).map(|_| rng.random_range(-2.0..2.0)).collect());
        let v_adv = ParamVector::new((0..dim).map(|_| rng.random_range(-2.0..2.0)).collect());
        let mut updates = vec![boost_update(&v_adv, &v_g, n, eta).unwrap()];
        updates.extend(std::iter::repeat_n(v_g.clone(), n - 1));
        let landed = server_step(&v_g, &updates, eta);
        let err: f64 = landed
            .iter()
            .zip(v_adv.as_slice())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let scale: f64 = v_adv
            .as_slice()
            .iter()
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
            .max(1e-300);
        assert!(
            err / scale <= 1e-9,
            "case {case}: n {n} eta {eta} relative error {}",
            err / scale
        );
    }
}

#[test]
fn single_client_boost_is_exact_at_unit_rate() {
    let g = ParamVector::new(vec![1.0, 2.0]);
    let a = ParamVector::new(vec![-3.0, 0.5]);
    assert_eq!(boost_update(&a, &g, 1, 1.0).unwrap(), a);
}

#[test]
fn poisoned_copy_keeps_clean_examples() {
    let grid = Grid {
        height: 4,
        width: 4,
    };
    let data = gen_synthetic(3, grid, 20, 0.2, 1).unwrap();
    let cfg = AdversaryConfig {
        attack: AttackKind::Backdoor,
        placement: Placement::AllPools,
        poison_fraction: 0.25,
        target_label: 2,
        ..AdversaryConfig::default()
    };
    let poisoned = poison_dataset(&data, grid, &cfg, 4).unwrap();
    let changed: Vec<usize> = (0..data.len())
        .filter(|&i| poisoned[i] != data[i])
        .collect();
    assert_eq!(changed.len(), 15);
    for i in changed {
        assert_eq!(poisoned[i], apply_trigger(&data[i], grid, 2, 2).unwrap());
    }
}

proptest! {
    #[test]
    fn flipping_twice_is_identity(labels in prop::collection::vec(0usize..5, 1..40)) {
        let data: Vec<_> = labels
            .iter()
            .map(|&label| rfc_core::data::Example { features: vec![label as f64], label })
            .collect();
        prop_assert_eq!(flip_labels(&flip_labels(&data, 5), 5), data);
    }

    #[test]
    fn placement_puts_adversaries_where_asked(pools in 1usize..6, per_pool in 1usize..8, k in 1usize..4, seed in any::<u64>()) {
        prop_assume!(k <= per_pool);
        let cfg = AdversaryConfig { attack: AttackKind::Labelflip, placement: Placement::AllPools, adversaries_per_pool: k, ..AdversaryConfig::default() };
        let map = assign_adversaries(pools, per_pool, &cfg, seed).unwrap();
        prop_assert_eq!(map.len(), pools);
        for slots in map.values() {
            prop_assert_eq!(slots.len(), k);
            prop_assert!(slots.iter().all(|&s| s < per_pool));
        }
        let one = AdversaryConfig { placement: Placement::OnePool(pools - 1), ..cfg };
        let map = assign_adversaries(pools, per_pool, &one, seed).unwrap();
        prop_assert_eq!(map.keys().copied().collect::<Vec<_>>(), vec![pools - 1]);
    }
}
