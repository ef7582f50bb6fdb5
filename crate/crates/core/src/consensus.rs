//! The round engine.
//!
//! Each round every pool starts from the model on the chain tip, its sampled
//! clients train locally, the pool miner aggregates their updates with the
//! configured rule, and every candidate is scored on the shared validation
//! set. The best candidate under the metric's direction (ties to the lowest
//! pool id) becomes the new global model and is appended to the chain.
//!
//! `client_server` topology runs the same loop with a single pool holding
//! every client, which reduces selection to a no-op.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::vec::Vec;

use rand::seq::index;

use crate::aggregation::AggregatorConfig;
use crate::attacks::{self, AdversaryConfig, AttackKind, Boost, Placement};
use crate::chain::{Chain, ModelStore, RoundMeta};
use crate::data::{Example, FederatedPartition, Grid};
use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::metrics::{self, MetricSpec};
use crate::models::{self, ModelSpec, OptimizerConfig};
use crate::params::ParamVector;
use crate::seed::{derive_seed, rng_from_seed, NO_ID};

pub type ClientId = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Topology {
    #[default]
    Rfc,
    ClientServer,
}

#[cfg(feature = "serde")]
fn default_server_lr() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct FederationConfig {
    pub num_pools: usize,
    pub clients_per_pool: usize,
    pub rounds: u64,
    /// Federation-wide quota; each pool samples `round(quota / pools)`.
    pub clients_sampled_per_round: usize,
    pub master_seed: u64,
    #[cfg_attr(feature = "serde", serde(default))]
    pub topology: Topology,
    /// Server learning rate of the global update rule.
    #[cfg_attr(feature = "serde", serde(default = "default_server_lr"))]
    pub server_lr: f64,
    /// Leading zero bits required of each block hash.
    #[cfg_attr(feature = "serde", serde(default))]
    pub difficulty: u32,
    pub model: ModelSpec,
    #[cfg_attr(feature = "serde", serde(default))]
    pub optimizer: OptimizerConfig,
    #[cfg_attr(feature = "serde", serde(default))]
    pub aggregator: AggregatorConfig,
    #[cfg_attr(feature = "serde", serde(default))]
    pub metric: MetricSpec,
    #[cfg_attr(feature = "serde", serde(default))]
    pub adversary: AdversaryConfig,
}

impl FederationConfig {
    pub fn total_clients(&self) -> usize {
        self.num_pools * self.clients_per_pool
    }

    /// `(pools, clients per pool)` actually used by the engine.
    pub fn effective_layout(&self) -> (usize, usize) {
        match self.topology {
            Topology::Rfc => (self.num_pools, self.clients_per_pool),
            Topology::ClientServer => (1, self.total_clients()),
        }
    }

    pub fn sample_per_pool(&self) -> usize {
        let (pools, _) = self.effective_layout();
        libm::round(self.clients_sampled_per_round as f64 / pools as f64) as usize
    }

    /// The adversary settings as seen by the effective layout. A single
    /// client-server pool hosts the adversaries of any one-pool placement.
    pub fn effective_adversary(&self) -> AdversaryConfig {
        let mut adv = self.adversary;
        if self.topology == Topology::ClientServer && adv.placement != Placement::None {
            adv.placement = Placement::OnePool(0);
        }
        adv
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: alloc::string::String| Err(Error::InvalidConfig(m));
        if self.rounds == 0 {
            return bad("rounds must be >= 1".into());
        }
        if self.num_pools == 0 || self.clients_per_pool == 0 {
            return bad("num_pools and clients_per_pool must be >= 1".into());
        }
        if self.clients_sampled_per_round == 0
            || self.clients_sampled_per_round > self.total_clients()
        {
            return bad(format!(
                "clients_sampled_per_round must be in [1, {}], got {}",
                self.total_clients(),
                self.clients_sampled_per_round
            ));
        }
        if !(self.server_lr > 0.0 && self.server_lr.is_finite()) {
            return bad("server_lr must be finite and > 0".into());
        }
        self.model.validate()?;
        self.optimizer.validate()?;
        let (_, pool_size) = self.effective_layout();
        let k = self.sample_per_pool();
        let need = self.aggregator.min_updates().max(1);
        if k < need {
            return bad(format!(
                "per-pool sample of {k} clients is below the {} minimum of {need}",
                self.aggregator.rule
            ));
        }
        if k > pool_size {
            return bad(format!(
                "per-pool sample of {k} exceeds pool size {pool_size}"
            ));
        }
        if self.aggregator.bulyan_m == 0 {
            return bad("bulyan_m must be >= 1".into());
        }
        if let Placement::OnePool(p) = self.adversary.placement {
            if p >= self.num_pools {
                return bad(format!(
                    "adversary pool {p} out of range for {} pools",
                    self.num_pools
                ));
            }
        }
        if self.adversary.placement != Placement::None && self.adversary.adversaries_per_pool > k {
            return bad(format!(
                "adversaries_per_pool {} exceeds the per-pool sample of {k}",
                self.adversary.adversaries_per_pool
            ));
        }
        Ok(())
    }
}

/// A trained client model tagged with where it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientUpdate {
    pub client_id: ClientId,
    pub pool_id: usize,
    pub adversarial: bool,
    pub params: ParamVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoolCandidate {
    pub pool_id: usize,
    pub params: ParamVector,
    /// NaN when disqualified.
    pub metric_value: f64,
    pub clients_participating: Vec<ClientId>,
    pub disqualified: Option<Error>,
}

impl PoolCandidate {
    pub fn is_qualified(&self) -> bool {
        self.disqualified.is_none()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub round: u64,
    pub winning_pool: usize,
    pub val_metric: f64,
    pub test_accuracy: f64,
    pub test_loss: f64,
    pub backdoor_accuracy_target: f64,
    pub backdoor_accuracy_clean: f64,
    pub backdoor_loss: f64,
    /// Validation metric per pool, NaN for disqualified candidates.
    pub candidate_metrics: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundOutcome {
    pub record: RoundRecord,
    pub candidates: Vec<PoolCandidate>,
    /// Updates that reached a pool they are not a member of.
    pub provenance_violations: usize,
}

/// Index of the best qualified candidate; ties go to the lowest pool id.
pub fn select_winner(metric: &MetricSpec, values: &[f64]) -> Option<usize> {
    let dir = metric.direction();
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        if !v.is_finite() {
            continue;
        }
        match best {
            Some(b) if !dir.better(v, values[b]) => {}
            _ => best = Some(i),
        }
    }
    best
}

/// Clients taking part in `round` for one pool: every listed adversary
/// first, then a seeded uniform draw without replacement from the remaining
/// members. Returned in ascending id order.
pub fn sample_clients(
    members: &[ClientId],
    always: &BTreeSet<ClientId>,
    round: u64,
    pool_id: usize,
    sample_size: usize,
    master_seed: u64,
) -> Result<Vec<ClientId>> {
    if sample_size > members.len() {
        return Err(Error::SampleTooLarge {
            requested: sample_size,
            available: members.len(),
        });
    }
    let forced: Vec<ClientId> = members
        .iter()
        .copied()
        .filter(|c| always.contains(c))
        .collect();
    if forced.len() > sample_size {
        return Err(Error::SampleTooLarge {
            requested: forced.len(),
            available: sample_size,
        });
    }
    let rest: Vec<ClientId> = members
        .iter()
        .copied()
        .filter(|c| !always.contains(c))
        .collect();
    let mut rng = rng_from_seed(derive_seed(
        master_seed,
        round,
        pool_id as u64,
        NO_ID,
        "sample",
    ));
    let mut out = forced;
    out.extend(
        index::sample(&mut rng, rest.len(), sample_size - out.len())
            .into_iter()
            .map(|i| rest[i]),
    );
    out.sort_unstable();
    Ok(out)
}

/// A running federation: configuration, data, and the evolving global
/// state (model, chain, off-chain model store).
pub struct Federation<'a> {
    cfg: FederationConfig,
    data: &'a FederatedPartition,
    pools: Vec<Vec<ClientId>>,
    adversaries: BTreeSet<ClientId>,
    adversary_data: BTreeMap<ClientId, Vec<Example>>,
    global: ParamVector,
    chain: Chain,
    store: ModelStore,
    round: u64,
}

impl<'a> Federation<'a> {
    pub fn new(cfg: FederationConfig, data: &'a FederatedPartition, grid: Grid) -> Result<Self> {
        cfg.validate()?;
        let adv_cfg = cfg.effective_adversary();
        adv_cfg.validate(grid, cfg.model.num_classes)?;
        if cfg.model.input_dim != grid.cells() {
            return Err(Error::InvalidConfig(format!(
                "model input_dim {} does not match the {}x{} grid",
                cfg.model.input_dim, grid.height, grid.width
            )));
        }
        if data.num_clients() != cfg.total_clients() {
            return Err(Error::InvalidConfig(format!(
                "partition has {} clients, configuration needs {}",
                data.num_clients(),
                cfg.total_clients()
            )));
        }
        if data.validation.is_empty() || data.test.is_empty() {
            return Err(Error::InsufficientData(
                "validation and test splits must be nonempty".into(),
            ));
        }
        if let Some((i, _)) = data
            .client_data
            .iter()
            .enumerate()
            .find(|(_, d)| d.is_empty())
        {
            return Err(Error::InsufficientData(format!(
                "client {i} has no examples"
            )));
        }

        let (num_pools, pool_size) = cfg.effective_layout();
        let pools: Vec<Vec<ClientId>> = (0..num_pools)
            .map(|p| ((p * pool_size) as u64..((p + 1) * pool_size) as u64).collect())
            .collect();

        let slots = attacks::assign_adversaries(num_pools, pool_size, &adv_cfg, cfg.master_seed)?;
        let mut adversaries = BTreeSet::new();
        let mut adversary_data = BTreeMap::new();
        for (&pool, local) in &slots {
            for &slot in local {
                let client = pools[pool][slot];
                let own = &data.client_data[client as usize];
                let poisoned = match adv_cfg.attack {
                    AttackKind::None => continue,
                    AttackKind::Labelflip => attacks::flip_labels(own, cfg.model.num_classes),
                    AttackKind::Backdoor => {
                        let seed =
                            derive_seed(cfg.master_seed, NO_ID, pool as u64, client, "poison");
                        attacks::poison_dataset(own, grid, &adv_cfg, seed)?
                    }
                };
                adversaries.insert(client);
                adversary_data.insert(client, poisoned);
            }
        }

        let global = models::init_params(&cfg.model, cfg.master_seed);
        let chain = Chain::genesis(&global, cfg.difficulty)?;
        let mut store = ModelStore::default();
        store.insert(global.clone());

        Ok(Self {
            cfg,
            data,
            pools,
            adversaries,
            adversary_data,
            global,
            chain,
            store,
            round: 0,
        })
    }

    pub fn config(&self) -> &FederationConfig {
        &self.cfg
    }

    pub fn global(&self) -> &ParamVector {
        &self.global
    }

    pub fn chain(&self) -> &Chain {
        &self.chain
    }

    pub fn store(&self) -> &ModelStore {
        &self.store
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn pool_members(&self, pool: usize) -> &[ClientId] {
        &self.pools[pool]
    }

    pub fn num_pools(&self) -> usize {
        self.pools.len()
    }

    pub fn adversaries(&self) -> &BTreeSet<ClientId> {
        &self.adversaries
    }

    fn train_client(
        &self,
        round: u64,
        pool: usize,
        client: ClientId,
        sample_size: usize,
    ) -> Result<ClientUpdate> {
        let adversarial = self.adversaries.contains(&client);
        let local = match self.adversary_data.get(&client) {
            Some(d) => d.as_slice(),
            None => self.data.client_data[client as usize].as_slice(),
        };
        let seed = derive_seed(self.cfg.master_seed, round, pool as u64, client, "train");
        let mut params = models::train_local(
            &self.cfg.model,
            &self.global,
            local,
            &self.cfg.optimizer,
            seed,
        )
        .map_err(|e| match e {
            Error::NonFiniteParams => Error::Divergence { client, round },
            other => other,
        })?;
        if adversarial && self.cfg.adversary.boost == Boost::Replacement {
            params = attacks::boost_update(
                &params,
                &self.global,
                sample_size,
                self.cfg.adversary.boost_eta,
            )?;
        }
        Ok(ClientUpdate {
            client_id: client,
            pool_id: pool,
            adversarial,
            params,
        })
    }

    /// Applies the server update `G + eta * (aggregate - G)`.
    fn server_update(&self, aggregate: ParamVector) -> Result<ParamVector> {
        if self.cfg.server_lr == 1.0 {
            return Ok(aggregate);
        }
        self.global
            .add_scaled(&aggregate.sub(&self.global)?, self.cfg.server_lr)
    }

    /// Runs one round. On error the federation state is unchanged.
    pub fn run_round<E: Executor>(&mut self, exec: &E) -> Result<RoundOutcome> {
        let round = self.round + 1;
        let k = self.cfg.sample_per_pool();

        let mut tasks: Vec<(usize, ClientId)> = Vec::new();
        for (p, members) in self.pools.iter().enumerate() {
            for c in sample_clients(
                members,
                &self.adversaries,
                round,
                p,
                k,
                self.cfg.master_seed,
            )? {
                tasks.push((p, c));
            }
        }

        let this = &*self;
        let results = exec.map(tasks.len(), |i| {
            let (p, c) = tasks[i];
            this.train_client(round, p, c, k)
        });

        let mut routed: Vec<Vec<ClientUpdate>> = alloc::vec![Vec::new(); self.pools.len()];
        let mut failures: Vec<Option<Error>> = alloc::vec![None; self.pools.len()];
        for ((p, _), res) in tasks.iter().zip(results) {
            match res {
                Ok(u) => routed[u.pool_id].push(u),
                Err(e) => {
                    failures[*p].get_or_insert(e);
                }
            }
        }

        let mut provenance_violations = 0;
        let mut candidates = Vec::with_capacity(self.pools.len());
        for (p, updates) in routed.into_iter().enumerate() {
            provenance_violations += updates
                .iter()
                .filter(|u| u.pool_id != p || !self.pools[p].contains(&u.client_id))
                .count();
            let clients: Vec<ClientId> = updates.iter().map(|u| u.client_id).collect();
            let aggregated = match failures[p].take() {
                Some(e) => Err(e),
                None => {
                    let vs: Vec<ParamVector> = updates.into_iter().map(|u| u.params).collect();
                    self.cfg
                        .aggregator
                        .aggregate(&vs)
                        .and_then(|a| self.server_update(a))
                }
            };
            let (params, disqualified) = match aggregated {
                Ok(a) if a.is_finite() => (a, None),
                Ok(a) => (a, Some(Error::NonFiniteParams)),
                // Configuration errors are not a pool's fault; surface them.
                Err(
                    e @ (Error::TooFewUpdates { .. }
                    | Error::SelectionTooLarge { .. }
                    | Error::InvalidConfig(_)),
                ) => return Err(e),
                Err(e) => (self.global.clone(), Some(e)),
            };
            candidates.push(PoolCandidate {
                pool_id: p,
                params,
                metric_value: f64::NAN,
                clients_participating: clients,
                disqualified,
            });
        }

        let metric = self.cfg.metric;
        let scores = exec.map(candidates.len(), |i| {
            let c = &candidates[i];
            if !c.is_qualified() {
                return Ok(f64::NAN);
            }
            metric.score(&this.cfg.model, &c.params, &this.data.validation)
        });
        for (c, s) in candidates.iter_mut().zip(scores) {
            let s = s?;
            if s.is_finite() {
                c.metric_value = s;
            } else if c.disqualified.is_none() {
                c.disqualified = Some(Error::NonFiniteParams);
            }
        }

        let values: Vec<f64> = candidates.iter().map(|c| c.metric_value).collect();
        let winner =
            select_winner(&metric, &values).ok_or(Error::AllCandidatesDisqualified { round })?;
        let best = candidates[winner].params.clone();

        let test = models::evaluate(&self.cfg.model, &best, &self.data.test)?;
        let backdoor = if self.data.backdoor_test.is_empty() {
            None
        } else {
            Some(metrics::evaluate_backdoor(
                &self.cfg.model,
                &best,
                &self.data.backdoor_test,
                self.cfg.adversary.target_label,
            )?)
        };

        let meta = RoundMeta {
            round,
            winning_pool_id: winner as u64,
            metric_name: metric.label().into(),
            metric_value: values[winner],
            aggregator_rule: self.cfg.aggregator.rule.name().into(),
        };
        self.chain.append(&best, meta)?;
        self.store.insert(best.clone());
        self.global = best;
        self.round = round;

        Ok(RoundOutcome {
            record: RoundRecord {
                round,
                winning_pool: winner,
                val_metric: values[winner],
                test_accuracy: test.accuracy,
                test_loss: test.loss,
                backdoor_accuracy_target: backdoor.map_or(f64::NAN, |b| b.accuracy_target),
                backdoor_accuracy_clean: backdoor.map_or(f64::NAN, |b| b.accuracy_clean),
                backdoor_loss: backdoor.map_or(f64::NAN, |b| b.loss),
                candidate_metrics: values,
            },
            candidates,
            provenance_violations,
        })
    }

    pub fn into_parts(self) -> (ParamVector, Chain, ModelStore) {
        (self.global, self.chain, self.store)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FederationResult {
    pub final_params: ParamVector,
    pub records: Vec<RoundRecord>,
    pub chain: Chain,
    pub store: ModelStore,
}

/// Runs every configured round.
pub fn run_federation<E: Executor>(
    cfg: &FederationConfig,
    data: &FederatedPartition,
    grid: Grid,
    exec: &E,
) -> Result<FederationResult> {
    let mut fed = Federation::new(cfg.clone(), data, grid)?;
    let mut records = Vec::with_capacity(cfg.rounds as usize);
    for _ in 0..cfg.rounds {
        records.push(fed.run_round(exec)?.record);
    }
    let (final_params, chain, store) = fed.into_parts();
    Ok(FederationResult {
        final_params,
        records,
        chain,
        store,
    })
}
