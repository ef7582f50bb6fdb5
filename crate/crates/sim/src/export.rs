//! Output files of a run.
//!
//! * `records.csv`: one row per round. Columns `round, winning_pool,
//!   val_metric, test_accuracy, test_loss, backdoor_accuracy_target,
//!   backdoor_accuracy_clean, backdoor_loss, pool_0_metric, ...`. Floats use
//!   the shortest representation that round-trips; non-finite values are
//!   written as `NaN`, `inf` or `-inf`.
//! * `chain.jsonl`: one JSON object per block with hex-encoded hashes and the
//!   chain difficulty repeated on every line.
//! * `summary.csv`: final, best and average-of-last-10 for every per-round
//!   metric.
//! * `models/<payload digest>.bin`: [`ParamVector::to_le_bytes`] of every
//!   model referenced by the chain.
//! * `config.toml`: the exact configuration of the run.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use rfc_core::chain::{Block, Chain, Hash, ModelStore, RoundMeta};
use rfc_core::consensus::RoundRecord;
use rfc_core::metrics::{self, Direction, Summary};

use crate::error::{Result, SimError};

pub const RECORDS_FILE: &str = "records.csv";
pub const CHAIN_FILE: &str = "chain.jsonl";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const CONFIG_FILE: &str = "config.toml";
pub const MODELS_DIR: &str = "models";

const FIXED_COLUMNS: [&str; 8] = [
    "round",
    "winning_pool",
    "val_metric",
    "test_accuracy",
    "test_loss",
    "backdoor_accuracy_target",
    "backdoor_accuracy_clean",
    "backdoor_loss",
];

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SimError + '_ {
    move |e| SimError::io(path, e)
}

fn csv_err(path: &Path, e: csv::Error) -> SimError {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => SimError::io(path, io),
        other => SimError::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("{other:?}"),
        },
    }
}

fn fmt_f64(v: f64) -> String {
    v.to_string()
}

fn parse_f64(s: &str) -> Option<f64> {
    s.trim().parse().ok()
}

pub fn write_records<W: Write>(writer: W, records: &[RoundRecord]) -> csv::Result<()> {
    let pools = records
        .iter()
        .map(|r| r.candidate_metrics.len())
        .max()
        .unwrap_or(0);
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = FIXED_COLUMNS.iter().map(|s| s.to_string()).collect();
    header.extend((0..pools).map(|p| format!("pool_{p}_metric")));
    w.write_record(&header)?;
    for r in records {
        let mut row = vec![
            r.round.to_string(),
            r.winning_pool.to_string(),
            fmt_f64(r.val_metric),
            fmt_f64(r.test_accuracy),
            fmt_f64(r.test_loss),
            fmt_f64(r.backdoor_accuracy_target),
            fmt_f64(r.backdoor_accuracy_clean),
            fmt_f64(r.backdoor_loss),
        ];
        row.extend(
            (0..pools).map(|p| fmt_f64(r.candidate_metrics.get(p).copied().unwrap_or(f64::NAN))),
        );
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records(path: &Path) -> Result<Vec<RoundRecord>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    let bad = |line: u64, message: String| SimError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    for (i, want) in FIXED_COLUMNS.iter().enumerate() {
        if header.get(i) != Some(*want) {
            return Err(bad(1, format!("column {} must be {want}", i + 1)));
        }
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let int = |i: usize| {
            rec[i].trim().parse::<u64>().map_err(|_| {
                bad(
                    line,
                    format!("{} {:?} is not an integer", FIXED_COLUMNS[i], &rec[i]),
                )
            })
        };
        let float = |i: usize| {
            parse_f64(&rec[i]).ok_or_else(|| bad(line, format!("column {} is not a number", i + 1)))
        };
        out.push(RoundRecord {
            round: int(0)?,
            winning_pool: int(1)? as usize,
            val_metric: float(2)?,
            test_accuracy: float(3)?,
            test_loss: float(4)?,
            backdoor_accuracy_target: float(5)?,
            backdoor_accuracy_clean: float(6)?,
            backdoor_loss: float(7)?,
            candidate_metrics: (FIXED_COLUMNS.len()..rec.len())
                .map(float)
                .collect::<Result<_>>()?,
        });
    }
    Ok(out)
}

/// One line of `chain.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockLine {
    pub index: u64,
    pub timestamp: u64,
    pub payload_digest: String,
    pub round: u64,
    pub winning_pool_id: u64,
    pub metric_name: String,
    pub metric_value: f64,
    pub aggregator_rule: String,
    pub nonce: u64,
    pub prev_hash: String,
    pub hash: String,
    pub difficulty: u32,
}

impl BlockLine {
    pub fn from_block(b: &Block, difficulty: u32) -> Self {
        Self {
            index: b.index,
            timestamp: b.timestamp,
            payload_digest: hex::encode(b.payload_digest),
            round: b.meta.round,
            winning_pool_id: b.meta.winning_pool_id,
            metric_name: b.meta.metric_name.clone(),
            metric_value: b.meta.metric_value,
            aggregator_rule: b.meta.aggregator_rule.clone(),
            nonce: b.nonce,
            prev_hash: hex::encode(b.prev_hash),
            hash: hex::encode(b.hash),
            difficulty,
        }
    }

    pub fn to_block(&self) -> std::result::Result<Block, String> {
        let h = |field: &str, s: &str| -> std::result::Result<Hash, String> {
            let bytes = hex::decode(s).map_err(|e| format!("{field}: {e}"))?;
            bytes
                .try_into()
                .map_err(|_| format!("{field}: expected 32 bytes"))
        };
        Ok(Block {
            index: self.index,
            timestamp: self.timestamp,
            payload_digest: h("payload_digest", &self.payload_digest)?,
            meta: RoundMeta {
                round: self.round,
                winning_pool_id: self.winning_pool_id,
                metric_name: self.metric_name.clone(),
                metric_value: self.metric_value,
                aggregator_rule: self.aggregator_rule.clone(),
            },
            nonce: self.nonce,
            prev_hash: h("prev_hash", &self.prev_hash)?,
            hash: h("hash", &self.hash)?,
        })
    }
}

pub fn write_chain<W: Write>(mut writer: W, chain: &Chain) -> std::io::Result<()> {
    for b in &chain.blocks {
        let line = serde_json::to_string(&BlockLine::from_block(b, chain.difficulty))
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
        writeln!(writer, "{line}")?;
    }
    writer.flush()
}

/// Reads an exported chain. A line that does not describe a block is
/// reported as invalid at that block index.
pub fn read_chain<R: BufRead>(reader: R, origin: &Path) -> Result<Chain> {
    let mut blocks = Vec::new();
    let mut difficulty = None;
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err(origin))?;
        let invalid = |reason: String| SimError::ChainInvalid { index: i, reason };
        let parsed: BlockLine =
            serde_json::from_str(&line).map_err(|e| invalid(format!("malformed line: {e}")))?;
        match difficulty {
            None => difficulty = Some(parsed.difficulty),
            Some(d) if d != parsed.difficulty => {
                return Err(invalid("difficulty differs from genesis".into()))
            }
            Some(_) => {}
        }
        blocks.push(parsed.to_block().map_err(invalid)?);
    }
    if blocks.is_empty() {
        return Err(SimError::ChainInvalid {
            index: 0,
            reason: "no blocks".into(),
        });
    }
    Ok(Chain {
        blocks,
        difficulty: difficulty.unwrap_or(0),
    })
}

/// Reads and validates an exported chain.
pub fn validate_chain_file(path: &Path) -> Result<Chain> {
    let file = std::fs::File::open(path).map_err(io_err(path))?;
    let chain = read_chain(std::io::BufReader::new(file), path)?;
    chain.validate().map_err(|f| SimError::ChainInvalid {
        index: f.index,
        reason: f.reason.into(),
    })?;
    Ok(chain)
}

/// Per-round series that the summary table covers, with their direction.
pub fn summary_series(
    records: &[RoundRecord],
    val_direction: Direction,
) -> Vec<(&'static str, Direction, Vec<f64>)> {
    let col = |f: fn(&RoundRecord) -> f64| records.iter().map(f).collect::<Vec<_>>();
    vec![
        ("val_metric", val_direction, col(|r| r.val_metric)),
        (
            "test_accuracy",
            Direction::Maximize,
            col(|r| r.test_accuracy),
        ),
        ("test_loss", Direction::Minimize, col(|r| r.test_loss)),
        (
            "backdoor_accuracy_target",
            Direction::Maximize,
            col(|r| r.backdoor_accuracy_target),
        ),
        (
            "backdoor_accuracy_clean",
            Direction::Maximize,
            col(|r| r.backdoor_accuracy_clean),
        ),
        (
            "backdoor_loss",
            Direction::Minimize,
            col(|r| r.backdoor_loss),
        ),
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub metric: &'static str,
    pub summary: Summary,
}

/// Summaries of every series. Empty when there are no records.
pub fn summary_table(records: &[RoundRecord], val_direction: Direction) -> Vec<SummaryRow> {
    summary_series(records, val_direction)
        .into_iter()
        .filter_map(|(metric, dir, series)| {
            let summary = metrics::summarize(&series, dir).ok()?;
            Some(SummaryRow { metric, summary })
        })
        .collect()
}

pub fn write_summary<W: Write>(writer: W, rows: &[SummaryRow]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "metric",
        "final",
        "best",
        "avg_last_10",
        "non_finite_in_window",
    ])?;
    for row in rows {
        let s = &row.summary;
        w.write_record([
            row.metric.to_string(),
            fmt_f64(s.final_value),
            fmt_f64(s.best),
            fmt_f64(s.avg_last_10),
            s.non_finite_in_window.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Human-readable form of the summary table.
pub fn render_summary(rows: &[SummaryRow]) -> String {
    let mut out = format!(
        "{:<26} {:>12} {:>12} {:>12} {:>8}\n",
        "metric", "final", "best", "avg_last_10", "nan"
    );
    for row in rows {
        let s = &row.summary;
        out.push_str(&format!(
            "{:<26} {:>12.6} {:>12.6} {:>12.6} {:>8}\n",
            row.metric, s.final_value, s.best, s.avg_last_10, s.non_finite_in_window
        ));
    }
    out
}

/// Writes every stored model as `<dir>/<hex digest>.bin`.
pub fn write_models(dir: &Path, store: &ModelStore) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    for (digest, params) in store.iter() {
        let path = dir.join(format!("{}.bin", hex::encode(digest)));
        std::fs::write(&path, params.to_le_bytes()).map_err(|e| SimError::io(&path, e))?;
    }
    Ok(())
}

pub fn save_records(path: &Path, records: &[RoundRecord]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(io_err(path))?;
    write_records(std::io::BufWriter::new(file), records).map_err(|e| csv_err(path, e))
}

pub fn save_chain(path: &Path, chain: &Chain) -> Result<()> {
    let file = std::fs::File::create(path).map_err(io_err(path))?;
    write_chain(std::io::BufWriter::new(file), chain).map_err(io_err(path))
}

pub fn save_summary(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(io_err(path))?;
    write_summary(std::io::BufWriter::new(file), rows).map_err(|e| csv_err(path, e))
}
