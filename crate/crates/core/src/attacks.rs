//! Adversarial client behaviour: label flipping, a fixed-pattern backdoor,
//! model-replacement boosting, and placement of adversaries over pools.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::vec::Vec;

use rand::seq::index;

use crate::data::{Example, Grid, TriggeredExample};
use crate::error::{Error, Result};
use crate::params::ParamVector;
use crate::seed::{derive_seed, rng_from_seed, NO_ID};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum AttackKind {
    #[default]
    None,
    Labelflip,
    Backdoor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Placement {
    #[default]
    None,
    OnePool(usize),
    AllPools,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Boost {
    #[default]
    Off,
    Replacement,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct AdversaryConfig {
    pub attack: AttackKind,
    pub placement: Placement,
    pub adversaries_per_pool: usize,
    pub boost: Boost,
    /// Side of the square trigger in the bottom-right corner.
    pub trigger_size: usize,
    pub target_label: usize,
    /// The server learning rate the adversary assumes when boosting.
    pub boost_eta: f64,
    /// Fraction of a backdoor adversary's local examples that carry the trigger.
    pub poison_fraction: f64,
}

impl Default for AdversaryConfig {
    fn default() -> Self {
        Self {
            attack: AttackKind::None,
            placement: Placement::None,
            adversaries_per_pool: 1,
            boost: Boost::Off,
            trigger_size: 2,
            target_label: 0,
            boost_eta: 1.0,
            poison_fraction: 0.5,
        }
    }
}

impl AdversaryConfig {
    pub fn validate(&self, grid: Grid, num_classes: usize) -> Result<()> {
        let bad = |m: alloc::string::String| Err(Error::InvalidConfig(m));
        if (self.placement == Placement::None) != (self.attack == AttackKind::None) {
            return bad("adversary placement must be none exactly when attack is none".into());
        }
        if self.adversaries_per_pool == 0 {
            return bad("adversaries_per_pool must be >= 1".into());
        }
        if self.trigger_size == 0 || self.trigger_size >= grid.height.min(grid.width) {
            return bad(format!(
                "trigger_size {} must be >= 1 and smaller than min(H, W) = {}",
                self.trigger_size,
                grid.height.min(grid.width)
            ));
        }
        if self.target_label >= num_classes {
            return bad(format!(
                "target_label {} out of range for {num_classes} classes",
                self.target_label
            ));
        }
        if !(self.boost_eta > 0.0 && self.boost_eta.is_finite()) {
            return bad("boost_eta must be finite and > 0".into());
        }
        if !(0.0..=1.0).contains(&self.poison_fraction) {
            return bad("poison_fraction must lie in [0, 1]".into());
        }
        Ok(())
    }
}

/// `y -> (C - 1) - y`, features untouched.
pub fn flip_labels(data: &[Example], num_classes: usize) -> Vec<Example> {
    data.iter()
        .map(|e| Example {
            features: e.features.clone(),
            label: num_classes - 1 - e.label,
        })
        .collect()
}

/// Sets the bottom-right `k x k` box to 1.0 and relabels to `target_label`.
pub fn apply_trigger(
    example: &Example,
    grid: Grid,
    k: usize,
    target_label: usize,
) -> Result<Example> {
    if k > grid.height || k > grid.width {
        return Err(Error::TriggerTooLarge {
            size: k,
            height: grid.height,
            width: grid.width,
        });
    }
    let mut features = example.features.clone();
    for r in grid.height - k..grid.height {
        for c in grid.width - k..grid.width {
            features[r * grid.width + c] = 1.0;
        }
    }
    Ok(Example {
        features,
        label: target_label,
    })
}

/// Triggered copies of every test example.
pub fn build_backdoor_test(
    test: &[Example],
    grid: Grid,
    k: usize,
    target_label: usize,
) -> Result<Vec<TriggeredExample>> {
    test.iter()
        .map(|e| {
            Ok(TriggeredExample {
                example: apply_trigger(e, grid, k, target_label)?,
                clean_label: e.label,
            })
        })
        .collect()
}

/// Poisons a seeded subset of `round(fraction * len)` examples.
pub fn poison_dataset(
    data: &[Example],
    grid: Grid,
    cfg: &AdversaryConfig,
    seed: u64,
) -> Result<Vec<Example>> {
    let count = libm::round(data.len() as f64 * cfg.poison_fraction) as usize;
    let mut rng = rng_from_seed(seed);
    let chosen: BTreeSet<usize> = index::sample(&mut rng, data.len(), count)
        .into_iter()
        .collect();
    data.iter()
        .enumerate()
        .map(|(i, e)| {
            if chosen.contains(&i) {
                apply_trigger(e, grid, cfg.trigger_size, cfg.target_label)
            } else {
                Ok(e.clone())
            }
        })
        .collect()
}

/// Model-replacement transmission in parameter space:
/// `v_global + (n / eta) * (v_adv - v_global)`.
///
/// Averaged through the server update together with `n - 1` updates equal
/// to `v_global`, the result lands on `v_adv`.
pub fn boost_update(
    v_adv: &ParamVector,
    v_global: &ParamVector,
    n: usize,
    eta: f64,
) -> Result<ParamVector> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::InvalidConfig(
            "boost eta must be finite and > 0".into(),
        ));
    }
    let beta = n as f64 / eta;
    v_global.add_scaled(&v_adv.sub(v_global)?, beta)
}

/// Adversarial client slots (local indices within each pool), keyed by pool.
pub type AdversaryMap = BTreeMap<usize, BTreeSet<usize>>;

pub fn assign_adversaries(
    num_pools: usize,
    clients_per_pool: usize,
    cfg: &AdversaryConfig,
    seed: u64,
) -> Result<AdversaryMap> {
    let pools: Vec<usize> = match cfg.placement {
        Placement::None => return Ok(AdversaryMap::new()),
        Placement::OnePool(p) if p >= num_pools => {
            return Err(Error::PoolOutOfRange { pool: p, num_pools });
        }
        Placement::OnePool(p) => alloc::vec![p],
        Placement::AllPools => (0..num_pools).collect(),
    };
    if cfg.adversaries_per_pool > clients_per_pool {
        return Err(Error::InvalidConfig(format!(
            "adversaries_per_pool {} exceeds clients_per_pool {clients_per_pool}",
            cfg.adversaries_per_pool
        )));
    }
    let mut map = AdversaryMap::new();
    for p in pools {
        let mut rng = rng_from_seed(derive_seed(seed, NO_ID, p as u64, NO_ID, "adversaries"));
        let slots = index::sample(&mut rng, clients_per_pool, cfg.adversaries_per_pool);
        map.insert(p, slots.into_iter().collect());
    }
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn ex(features: &[f64], label: usize) -> Example {
        Example {
            features: features.to_vec(),
            label,
        }
    }

    #[test]
    fn flip_examples() {
        let data = vec![ex(&[0.1, 0.2], 0), ex(&[0.3, 0.4], 9)];
        let flipped = flip_labels(&data, 10);
        assert_eq!(flipped[0].label, 9);
        assert_eq!(flipped[1].label, 0);
        for (a, b) in data.iter().zip(&flipped) {
            assert_eq!(a.features, b.features);
        }
        let bin = vec![ex(&[0.0], 0), ex(&[1.0], 1)];
        assert_eq!(flip_labels(&flip_labels(&bin, 2), 2), bin);
    }

    #[test]
    fn trigger_geometry() {
        let grid = Grid {
            height: 4,
            width: 4,
        };
        let e = ex(&[0.0; 16], 1);
        let t = apply_trigger(&e, grid, 2, 3).unwrap();
        assert_eq!(t.label, 3);
        for r in 0..4 {
            for c in 0..4 {
                let want = if r >= 2 && c >= 2 { 1.0 } else { 0.0 };
                assert_eq!(t.features[r * 4 + c], want, "({r},{c})");
            }
        }
        assert_eq!(apply_trigger(&t, grid, 2, 3).unwrap(), t);
        assert!(matches!(
            apply_trigger(&e, grid, 5, 0),
            Err(Error::TriggerTooLarge { .. })
        ));
    }

    #[test]
    fn trigger_on_rectangular_grid() {
        let grid = Grid {
            height: 2,
            width: 3,
        };
        let e = ex(&[0.5; 6], 0);
        let t = apply_trigger(&e, grid, 1, 1).unwrap();
        assert_eq!(t.features, vec![0.5, 0.5, 0.5, 0.5, 0.5, 1.0]);
    }

    #[test]
    fn boost_examples() {
        let out = boost_update(
            &ParamVector::new(vec![1.0]),
            &ParamVector::zeros(1),
            10,
            1.0,
        )
        .unwrap();
        assert_eq!(out, ParamVector::new(vec![10.0]));
        let g = ParamVector::new(vec![0.3, -0.7]);
        assert_eq!(boost_update(&g, &g, 7, 2.0).unwrap(), g);
        assert!(boost_update(&g, &ParamVector::zeros(3), 7, 1.0).is_err());
    }

    #[test]
    fn poison_fraction_respected() {
        let grid = Grid {
            height: 3,
            width: 3,
        };
        let data: Vec<_> = (0..10).map(|i| ex(&[0.0; 9], i % 3)).collect();
        let cfg = AdversaryConfig {
            attack: AttackKind::Backdoor,
            placement: Placement::AllPools,
            target_label: 2,
            ..Default::default()
        };
        let poisoned = poison_dataset(&data, grid, &cfg, 5).unwrap();
        let triggered = poisoned.iter().filter(|e| e.features[8] == 1.0).count();
        assert_eq!(triggered, 5);
        assert!(poisoned
            .iter()
            .filter(|e| e.features[8] == 1.0)
            .all(|e| e.label == 2));
        assert_eq!(poisoned, poison_dataset(&data, grid, &cfg, 5).unwrap());
    }

    #[test]
    fn placement_examples() {
        let one = AdversaryConfig {
            attack: AttackKind::Labelflip,
            placement: Placement::OnePool(0),
            ..Default::default()
        };
        let map = assign_adversaries(3, 10, &one, 1).unwrap();
        assert_eq!(map.len(), 1);
        assert_eq!(map[&0].len(), 1);
        assert!(!map.contains_key(&1) && !map.contains_key(&2));

        let all = AdversaryConfig {
            placement: Placement::AllPools,
            ..one
        };
        let map = assign_adversaries(3, 10, &all, 1).unwrap();
        assert_eq!(map.values().map(|s| s.len()).sum::<usize>(), 3);
        assert_eq!(map, assign_adversaries(3, 10, &all, 1).unwrap());

        assert!(assign_adversaries(3, 10, &AdversaryConfig::default(), 1)
            .unwrap()
            .is_empty());
        let out_of_range = AdversaryConfig {
            placement: Placement::OnePool(3),
            ..one
        };
        assert!(matches!(
            assign_adversaries(3, 10, &out_of_range, 1),
            Err(Error::PoolOutOfRange { .. })
        ));
    }

    #[test]
    fn config_invariants() {
        let grid = Grid {
            height: 8,
            width: 8,
        };
        assert!(AdversaryConfig::default().validate(grid, 3).is_ok());
        let mismatched = AdversaryConfig {
            attack: AttackKind::Backdoor,
            ..Default::default()
        };
        assert!(mismatched.validate(grid, 3).is_err());
        let big = AdversaryConfig {
            trigger_size: 8,
            ..Default::default()
        };
        assert!(big.validate(grid, 3).is_err());
    }
}
