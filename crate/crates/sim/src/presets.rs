//! Built-in configurations.
//!
//! [`desk`] is a small federation that runs the full scenario matrix in
//! minutes. [`preset`] overlays one of the named attack scenarios on any base
//! configuration.

use std::fmt;
use std::str::FromStr;

use rfc_core::aggregation::AggregatorConfig;
use rfc_core::attacks::{AdversaryConfig, AttackKind, Boost, Placement};
use rfc_core::consensus::{FederationConfig, Topology};
use rfc_core::data::{PartitionConfig, PartitionScheme};
use rfc_core::metrics::MetricSpec;
use rfc_core::models::{ModelSpec, OptimizerConfig};

use crate::config::{DatasetSource, OutputConfig, RunConfig};
use crate::error::SimError;

/// 3 pools of 10 clients, 6 sampled per pool, 30 rounds, linear model on
/// 3-class 8x8 synthetic data, PoFL consensus (fedavg + accuracy).
pub fn desk() -> RunConfig {
    RunConfig {
        federation: FederationConfig {
            num_pools: 3,
            clients_per_pool: 10,
            rounds: 30,
            clients_sampled_per_round: 18,
            master_seed: 0,
            topology: Topology::Rfc,
            server_lr: 1.0,
            difficulty: 0,
            model: ModelSpec::linear(64, 3),
            optimizer: OptimizerConfig {
                learning_rate: 0.01,
                batch_size: 16,
                ..OptimizerConfig::default()
            },
            aggregator: AggregatorConfig::default(),
            metric: MetricSpec::ACCURACY,
            adversary: AdversaryConfig::default(),
        },
        dataset: DatasetSource::Synthetic {
            num_classes: 3,
            height: 8,
            width: 8,
            per_class: 500,
            noise_sigma: 0.3,
            seed: 0,
        },
        partition: PartitionConfig {
            scheme: PartitionScheme::Iid,
            val_fraction: 0.2,
            test_fraction: 0.2,
            seed: 0,
        },
        output: OutputConfig::default(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    NoAttack,
    OnePoolLabelflip,
    OnePoolBackdoor,
    AllPoolsLabelflip,
    AllPoolsBackdoor,
}

impl Scenario {
    pub const ALL: [Scenario; 5] = [
        Scenario::NoAttack,
        Scenario::OnePoolLabelflip,
        Scenario::OnePoolBackdoor,
        Scenario::AllPoolsLabelflip,
        Scenario::AllPoolsBackdoor,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::NoAttack => "no_attack",
            Scenario::OnePoolLabelflip => "one_pool_labelflip",
            Scenario::OnePoolBackdoor => "one_pool_backdoor",
            Scenario::AllPoolsLabelflip => "all_pools_labelflip",
            Scenario::AllPoolsBackdoor => "all_pools_backdoor",
        }
    }

    /// The adversary settings for this scenario, keeping the trigger, target
    /// and boost parameters of `base`.
    pub fn adversary(self, base: AdversaryConfig) -> AdversaryConfig {
        let (attack, placement) = match self {
            Scenario::NoAttack => {
                return AdversaryConfig {
                    attack: AttackKind::None,
                    placement: Placement::None,
                    boost: Boost::Off,
                    ..base
                }
            }
            Scenario::OnePoolLabelflip => (AttackKind::Labelflip, Placement::OnePool(0)),
            Scenario::OnePoolBackdoor => (AttackKind::Backdoor, Placement::OnePool(0)),
            Scenario::AllPoolsLabelflip => (AttackKind::Labelflip, Placement::AllPools),
            Scenario::AllPoolsBackdoor => (AttackKind::Backdoor, Placement::AllPools),
        };
        AdversaryConfig {
            attack,
            placement,
            boost: Boost::Replacement,
            adversaries_per_pool: base.adversaries_per_pool.max(1),
            ..base
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, SimError> {
        Scenario::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Scenario::ALL.iter().map(|p| p.name()).collect();
                SimError::Config(format!(
                    "unknown preset {s:?}; expected one of {}",
                    names.join(", ")
                ))
            })
    }
}

/// Applies the named scenario to `base`.
pub fn preset(name: &str, base: RunConfig) -> Result<RunConfig, SimError> {
    let scenario: Scenario = name.parse()?;
    let mut cfg = base;
    cfg.federation.adversary = scenario.adversary(cfg.federation.adversary);
    Ok(cfg)
}
