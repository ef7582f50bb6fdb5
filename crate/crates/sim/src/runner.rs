//! Loads data, runs a federation and writes its output directory.

use std::path::{Path, PathBuf};

use rfc_core::attacks::build_backdoor_test;
use rfc_core::consensus::{Federation, FederationResult};
use rfc_core::data::{gen_synthetic, partition, Example, FederatedPartition, Grid};
use rfc_core::exec::Executor;

use crate::config::{DatasetSource, RunConfig};
use crate::csvdata;
use crate::error::{Result, SimError};
use crate::export;

pub fn load_dataset(source: &DatasetSource) -> Result<Vec<Example>> {
    match source {
        DatasetSource::Synthetic {
            num_classes,
            height,
            width,
            per_class,
            noise_sigma,
            seed,
        } => Ok(gen_synthetic(
            *num_classes,
            Grid {
                height: *height,
                width: *width,
            },
            *per_class,
            *noise_sigma,
            *seed,
        )?),
        DatasetSource::Csv {
            path,
            height,
            width,
            num_classes,
        } => csvdata::load_csv(
            path,
            Grid {
                height: *height,
                width: *width,
            },
            *num_classes,
        ),
    }
}

/// Splits the dataset across clients and builds the triggered test set.
/// The triggered set is built for every scenario so that clean runs report
/// the trigger's baseline effect.
pub fn prepare(cfg: &RunConfig) -> Result<FederatedPartition> {
    let data = load_dataset(&cfg.dataset)?;
    let mut part = partition(&data, cfg.federation.total_clients(), &cfg.partition)?;
    let adv = cfg.federation.adversary;
    part.backdoor_test = build_backdoor_test(
        &part.test,
        cfg.dataset.grid(),
        adv.trigger_size,
        adv.target_label,
    )?;
    Ok(part)
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub result: FederationResult,
    /// Client updates routed to a pool other than their own, summed over rounds.
    pub provenance_violations: usize,
}

/// Runs every round of `cfg` on prepared data.
pub fn execute<E: Executor>(
    cfg: &RunConfig,
    data: &FederatedPartition,
    exec: &E,
) -> Result<RunOutput> {
    let mut fed = Federation::new(cfg.federation.clone(), data, cfg.dataset.grid())?;
    let mut records = Vec::with_capacity(cfg.federation.rounds as usize);
    let mut provenance_violations = 0;
    for _ in 0..cfg.federation.rounds {
        let outcome = fed.run_round(exec)?;
        provenance_violations += outcome.provenance_violations;
        records.push(outcome.record);
    }
    let (final_params, chain, store) = fed.into_parts();
    Ok(RunOutput {
        result: FederationResult {
            final_params,
            records,
            chain,
            store,
        },
        provenance_violations,
    })
}

/// Writes the config snapshot, records, chain, summary and (optionally)
/// models into `dir`.
pub fn write_outputs(cfg: &RunConfig, dir: &Path, result: &FederationResult) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| SimError::io(dir, e))?;
    let config_path = dir.join(export::CONFIG_FILE);
    std::fs::write(&config_path, cfg.to_toml()).map_err(|e| SimError::io(&config_path, e))?;
    export::save_records(&dir.join(export::RECORDS_FILE), &result.records)?;
    export::save_chain(&dir.join(export::CHAIN_FILE), &result.chain)?;
    let rows = export::summary_table(&result.records, cfg.federation.metric.direction());
    export::save_summary(&dir.join(export::SUMMARY_FILE), &rows)?;
    if cfg.output.write_models {
        export::write_models(&dir.join(export::MODELS_DIR), &result.store)?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub out_dir: PathBuf,
    pub output: RunOutput,
}

/// Prepares data, runs the federation and writes `cfg.output.dir`.
pub fn run<E: Executor>(cfg: &RunConfig, exec: &E) -> Result<RunReport> {
    cfg.validate()?;
    let data = prepare(cfg)?;
    let output = execute(cfg, &data, exec)?;
    write_outputs(cfg, &cfg.output.dir, &output.result)?;
    Ok(RunReport {
        out_dir: cfg.output.dir.clone(),
        output,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;
    use rfc_core::exec::Sequential;

    fn tiny() -> RunConfig {
        let mut cfg = presets::desk();
        cfg.federation.rounds = 2;
        cfg.federation.optimizer.local_epochs = 1;
        cfg.dataset = DatasetSource::Synthetic {
            num_classes: 3,
            height: 8,
            width: 8,
            per_class: 60,
            noise_sigma: 0.3,
            seed: 1,
        };
        cfg
    }

    #[test]
    fn writes_every_output() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny();
        cfg.output.dir = dir.path().join("run");
        let report = run(&cfg, &Sequential).unwrap();
        for f in [
            export::CONFIG_FILE,
            export::RECORDS_FILE,
            export::CHAIN_FILE,
            export::SUMMARY_FILE,
        ] {
            assert!(report.out_dir.join(f).is_file(), "{f}");
        }
        let models = std::fs::read_dir(report.out_dir.join(export::MODELS_DIR))
            .unwrap()
            .count();
        assert_eq!(models, report.output.result.store.len());
        let chain = export::validate_chain_file(&report.out_dir.join(export::CHAIN_FILE)).unwrap();
        assert_eq!(chain, report.output.result.chain);
        let snapshot = RunConfig::load(&report.out_dir.join(export::CONFIG_FILE)).unwrap();
        assert_eq!(snapshot, cfg);
    }

    #[test]
    fn backdoor_test_built_for_clean_runs() {
        let part = prepare(&tiny()).unwrap();
        assert_eq!(part.backdoor_test.len(), part.test.len());
    }
}
