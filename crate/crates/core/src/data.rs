//! Grid-shaped labeled examples, a synthetic generator and client partitioning.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::seed::{derive_seed, rng_from_seed, NO_ID};

/// One labeled example. Features are an `H x W` grid flattened row-major,
/// grayscale in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub features: Vec<f64>,
    pub label: usize,
}

/// Grid geometry shared by every example in a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Grid {
    pub height: usize,
    pub width: usize,
}

impl Grid {
    pub fn cells(&self) -> usize {
        self.height * self.width
    }
}

/// Synthetic data: class `c` lights cell `c` (row-major) at 1.0, everything
/// else is 0.0, then Gaussian noise is added and clipped to `[0, 1]`.
pub fn gen_synthetic(
    num_classes: usize,
    grid: Grid,
    per_class: usize,
    noise_sigma: f64,
    seed: u64,
) -> Result<Vec<Example>> {
    if num_classes < 2 {
        return Err(Error::InvalidConfig(format!(
            "num_classes must be >= 2, got {num_classes}"
        )));
    }
    if grid.cells() < num_classes {
        return Err(Error::InvalidConfig(format!(
            "grid {}x{} has fewer cells than {num_classes} classes",
            grid.height, grid.width
        )));
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "noise_sigma must be finite and >= 0, got {noise_sigma}"
        )));
    }
    let mut rng = rng_from_seed(derive_seed(seed, NO_ID, NO_ID, NO_ID, "synthetic"));
    let mut out = Vec::with_capacity(num_classes * per_class);
    for label in 0..num_classes {
        for _ in 0..per_class {
            let mut features = vec![0.0; grid.cells()];
            features[label] = 1.0;
            if noise_sigma > 0.0 {
                for f in &mut features {
                    let z: f64 = rng.sample(StandardNormal);
                    *f = (*f + noise_sigma * z).clamp(0.0, 1.0);
                }
            }
            out.push(Example { features, label });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum PartitionScheme {
    Iid,
    LabelShard { shards_per_client: usize },
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct PartitionConfig {
    pub scheme: PartitionScheme,
    pub val_fraction: f64,
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for PartitionConfig {
    fn default() -> Self {
        Self {
            scheme: PartitionScheme::Iid,
            val_fraction: 0.1,
            test_fraction: 0.1,
            seed: 0,
        }
    }
}

/// A test example carrying the trigger, labelled with the attacker's target.
#[derive(Debug, Clone, PartialEq)]
pub struct TriggeredExample {
    pub example: Example,
    pub clean_label: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FederatedPartition {
    /// Indexed by client id.
    pub client_data: Vec<Vec<Example>>,
    pub validation: Vec<Example>,
    pub test: Vec<Example>,
    pub backdoor_test: Vec<TriggeredExample>,
}

impl FederatedPartition {
    pub fn num_clients(&self) -> usize {
        self.client_data.len()
    }
}

fn split_count(n: usize, fraction: f64) -> usize {
    libm::round(n as f64 * fraction) as usize
}

/// Splits off validation and test sets, then distributes the remainder over
/// `num_clients` clients. `backdoor_test` is left empty; see
/// [`crate::attacks::build_backdoor_test`].
pub fn partition(
    data: &[Example],
    num_clients: usize,
    cfg: &PartitionConfig,
) -> Result<FederatedPartition> {
    if num_clients == 0 {
        return Err(Error::InvalidConfig("num_clients must be >= 1".into()));
    }
    for (name, f) in [
        ("val_fraction", cfg.val_fraction),
        ("test_fraction", cfg.test_fraction),
    ] {
        if !(0.0..1.0).contains(&f) {
            return Err(Error::InvalidConfig(format!(
                "{name} must be in [0, 1), got {f}"
            )));
        }
    }
    let n_val = split_count(data.len(), cfg.val_fraction);
    let n_test = split_count(data.len(), cfg.test_fraction);
    let remaining = data.len().saturating_sub(n_val + n_test);
    if remaining < num_clients {
        return Err(Error::InsufficientData(format!(
            "{remaining} training examples cannot cover {num_clients} clients"
        )));
    }

    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut rng = rng_from_seed(derive_seed(cfg.seed, NO_ID, NO_ID, NO_ID, "partition"));
    order.shuffle(&mut rng);

    let take = |idx: &[usize]| idx.iter().map(|&i| data[i].clone()).collect::<Vec<_>>();
    let validation = take(&order[..n_val]);
    let test = take(&order[n_val..n_val + n_test]);
    let mut pool: Vec<usize> = order[n_val + n_test..].to_vec();

    let mut client_data: Vec<Vec<Example>> = vec![Vec::new(); num_clients];
    match cfg.scheme {
        PartitionScheme::Iid => {
            for (k, &i) in pool.iter().enumerate() {
                client_data[k % num_clients].push(data[i].clone());
            }
        }
        PartitionScheme::LabelShard { shards_per_client } => {
            if shards_per_client == 0 {
                return Err(Error::InvalidConfig(
                    "shards_per_client must be >= 1".into(),
                ));
            }
            let num_shards = num_clients * shards_per_client;
            if pool.len() < num_shards {
                return Err(Error::InsufficientData(format!(
                    "{} training examples cannot form {num_shards} shards",
                    pool.len()
                )));
            }
            pool.sort_by_key(|&i| data[i].label);
            let mut shard_order: Vec<usize> = (0..num_shards).collect();
            shard_order.shuffle(&mut rng);
            let bounds = |s: usize| {
                (
                    s * pool.len() / num_shards,
                    (s + 1) * pool.len() / num_shards,
                )
            };
            for (k, &shard) in shard_order.iter().enumerate() {
                let (lo, hi) = bounds(shard);
                client_data[k / shards_per_client]
                    .extend(pool[lo..hi].iter().map(|&i| data[i].clone()));
            }
        }
    }

    Ok(FederatedPartition {
        client_data,
        validation,
        test,
        backdoor_test: Vec::new(),
    })
}

/// Number of examples per label, for diagnostics and tests.
pub fn label_histogram(data: &[Example]) -> BTreeMap<usize, usize> {
    let mut h = BTreeMap::new();
    for e in data {
        *h.entry(e.label).or_insert(0) += 1;
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(h: usize, w: usize) -> Grid {
        Grid {
            height: h,
            width: w,
        }
    }

    fn key(e: &Example) -> (usize, Vec<u64>) {
        (e.label, e.features.iter().map(|f| f.to_bits()).collect())
    }

    #[test]
    fn zero_noise_matches_template() {
        let data = gen_synthetic(3, grid(2, 2), 4, 0.0, 1).unwrap();
        for e in &data {
            let mut t = vec![0.0; 4];
            t[e.label] = 1.0;
            assert_eq!(e.features, t);
        }
    }

    #[test]
    fn counts_per_class() {
        let data = gen_synthetic(3, grid(4, 4), 10, 0.2, 9).unwrap();
        assert_eq!(data.len(), 30);
        assert!(label_histogram(&data).values().all(|&c| c == 10));
        assert!(data
            .iter()
            .flat_map(|e| &e.features)
            .all(|f| (0.0..=1.0).contains(f)));
    }

    #[test]
    fn synthetic_is_deterministic() {
        let a = gen_synthetic(3, grid(4, 4), 5, 0.3, 11).unwrap();
        let b = gen_synthetic(3, grid(4, 4), 5, 0.3, 11).unwrap();
        let c = gen_synthetic(3, grid(4, 4), 5, 0.3, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn grid_must_hold_classes() {
        assert!(gen_synthetic(5, grid(2, 2), 1, 0.0, 0).is_err());
    }

    #[test]
    fn iid_split_counts() {
        let data = gen_synthetic(2, grid(2, 2), 50, 0.1, 3).unwrap();
        let p = partition(&data, 10, &PartitionConfig::default()).unwrap();
        assert_eq!(p.validation.len(), 10);
        assert_eq!(p.test.len(), 10);
        assert!(p.client_data.iter().all(|c| c.len() == 8));
    }

    #[test]
    fn conservation_and_determinism() {
        let data = gen_synthetic(3, grid(3, 3), 17, 0.4, 5).unwrap();
        for scheme in [
            PartitionScheme::Iid,
            PartitionScheme::LabelShard {
                shards_per_client: 2,
            },
        ] {
            let cfg = PartitionConfig {
                scheme,
                val_fraction: 0.15,
                test_fraction: 0.2,
                seed: 77,
            };
            let p = partition(&data, 7, &cfg).unwrap();
            assert_eq!(p, partition(&data, 7, &cfg).unwrap());
            let mut got: Vec<_> = p
                .client_data
                .iter()
                .flatten()
                .chain(&p.validation)
                .chain(&p.test)
                .map(key)
                .collect();
            let mut want: Vec<_> = data.iter().map(key).collect();
            got.sort();
            want.sort();
            assert_eq!(got, want);
            assert!(p.client_data.iter().all(|c| !c.is_empty()));
        }
    }

    #[test]
    fn label_shard_single_label_clients() {
        let data = gen_synthetic(2, grid(2, 2), 10, 0.0, 0).unwrap();
        let cfg = PartitionConfig {
            scheme: PartitionScheme::LabelShard {
                shards_per_client: 1,
            },
            val_fraction: 0.0,
            test_fraction: 0.0,
            seed: 4,
        };
        let p = partition(&data, 2, &cfg).unwrap();
        for c in &p.client_data {
            assert_eq!(label_histogram(c).len(), 1);
        }
        assert_ne!(p.client_data[0][0].label, p.client_data[1][0].label);
    }

    #[test]
    fn insufficient_data_rejected() {
        let data = gen_synthetic(2, grid(2, 2), 2, 0.0, 0).unwrap();
        assert!(matches!(
            partition(&data, 10, &PartitionConfig::default()),
            Err(Error::InsufficientData(_))
        ));
    }
}
