//! Hash-linked ledger of round winners.
//!
//! A block hash is SHA-256 over the following byte layout (all integers
//! little-endian, strings as a `u32` byte length followed by UTF-8):
//!
//! | field                    | encoding        |
//! |--------------------------|-----------------|
//! | index                    | u64             |
//! | timestamp                | u64             |
//! | payload_digest           | 32 bytes        |
//! | meta.round               | u64             |
//! | meta.winning_pool_id     | u64             |
//! | meta.metric_name         | u32 len + bytes |
//! | meta.metric_value        | f64 bits as u64 |
//! | meta.aggregator_rule     | u32 len + bytes |
//! | nonce                    | u64             |
//! | prev_hash                | 32 bytes        |
//!
//! The payload digest is SHA-256 of [`ParamVector::to_le_bytes`]. Models
//! live off-chain in a [`ModelStore`] keyed by that digest.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::params::ParamVector;

pub type Hash = [u8; 32];

pub const ZERO_HASH: Hash = [0; 32];

#[derive(Debug, Clone, PartialEq)]
pub struct RoundMeta {
    pub round: u64,
    pub winning_pool_id: u64,
    pub metric_name: String,
    pub metric_value: f64,
    pub aggregator_rule: String,
}

impl RoundMeta {
    fn genesis() -> Self {
        Self {
            round: 0,
            winning_pool_id: 0,
            metric_name: "none".into(),
            metric_value: 0.0,
            aggregator_rule: "none".into(),
        }
    }
}

/// A block before its nonce is searched.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockDraft {
    pub index: u64,
    pub timestamp: u64,
    pub payload_digest: Hash,
    pub meta: RoundMeta,
    pub prev_hash: Hash,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub index: u64,
    pub timestamp: u64,
    pub payload_digest: Hash,
    pub meta: RoundMeta,
    pub nonce: u64,
    pub prev_hash: Hash,
    pub hash: Hash,
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

fn preimage(
    index: u64,
    timestamp: u64,
    digest: &Hash,
    meta: &RoundMeta,
    nonce: u64,
    prev: &Hash,
) -> Vec<u8> {
    let mut out = Vec::with_capacity(160);
    out.extend_from_slice(&index.to_le_bytes());
    out.extend_from_slice(&timestamp.to_le_bytes());
    out.extend_from_slice(digest);
    out.extend_from_slice(&meta.round.to_le_bytes());
    out.extend_from_slice(&meta.winning_pool_id.to_le_bytes());
    put_str(&mut out, &meta.metric_name);
    out.extend_from_slice(&meta.metric_value.to_bits().to_le_bytes());
    put_str(&mut out, &meta.aggregator_rule);
    out.extend_from_slice(&nonce.to_le_bytes());
    out.extend_from_slice(prev);
    out
}

pub fn sha256(bytes: &[u8]) -> Hash {
    Sha256::digest(bytes).into()
}

pub fn payload_digest(params: &ParamVector) -> Hash {
    sha256(&params.to_le_bytes())
}

pub fn leading_zero_bits(hash: &Hash) -> u32 {
    let mut bits = 0;
    for b in hash {
        if *b == 0 {
            bits += 8;
        } else {
            return bits + b.leading_zeros();
        }
    }
    bits
}

pub fn meets_difficulty(hash: &Hash, difficulty: u32) -> bool {
    leading_zero_bits(hash) >= difficulty
}

impl Block {
    pub fn compute_hash(&self) -> Hash {
        sha256(&self.preimage())
    }

    pub fn preimage(&self) -> Vec<u8> {
        preimage(
            self.index,
            self.timestamp,
            &self.payload_digest,
            &self.meta,
            self.nonce,
            &self.prev_hash,
        )
    }

    /// Preimage followed by the stored hash.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = self.preimage();
        out.extend_from_slice(&self.hash);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let block = Block {
            index: r.u64()?,
            timestamp: r.u64()?,
            payload_digest: r.hash()?,
            meta: RoundMeta {
                round: r.u64()?,
                winning_pool_id: r.u64()?,
                metric_name: r.string()?,
                metric_value: f64::from_bits(r.u64()?),
                aggregator_rule: r.string()?,
            },
            nonce: r.u64()?,
            prev_hash: r.hash()?,
            hash: r.hash()?,
        };
        if r.pos != bytes.len() {
            return Err(Error::Decode("trailing bytes after block"));
        }
        Ok(block)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self
            .pos
            .checked_add(n)
            .ok_or(Error::Decode("length overflow"))?;
        let s = self
            .bytes
            .get(self.pos..end)
            .ok_or(Error::Decode("truncated block"))?;
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    fn hash(&mut self) -> Result<Hash> {
        Ok(self.take(32)?.try_into().expect("32 bytes"))
    }

    fn string(&mut self) -> Result<String> {
        let len = u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize;
        let raw = self.take(len)?.to_vec();
        String::from_utf8(raw).map_err(|_| Error::Decode("string field is not UTF-8"))
    }
}

/// Finds the smallest nonce whose hash has `difficulty` leading zero bits.
pub fn seal_block(draft: BlockDraft, difficulty: u32) -> Result<Block> {
    if difficulty > 256 {
        return Err(Error::NonceExhausted { difficulty });
    }
    let mut nonce = 0u64;
    loop {
        let hash = sha256(&preimage(
            draft.index,
            draft.timestamp,
            &draft.payload_digest,
            &draft.meta,
            nonce,
            &draft.prev_hash,
        ));
        if meets_difficulty(&hash, difficulty) {
            return Ok(Block {
                index: draft.index,
                timestamp: draft.timestamp,
                payload_digest: draft.payload_digest,
                meta: draft.meta,
                nonce,
                prev_hash: draft.prev_hash,
                hash,
            });
        }
        nonce = nonce
            .checked_add(1)
            .ok_or(Error::NonceExhausted { difficulty })?;
    }
}

/// First violation found by [`Chain::validate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChainFault {
    pub index: usize,
    pub reason: &'static str,
}

impl From<ChainFault> for Error {
    fn from(f: ChainFault) -> Self {
        Error::InvalidChain {
            index: f.index,
            reason: f.reason,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    pub blocks: Vec<Block>,
    pub difficulty: u32,
}

impl Chain {
    pub fn genesis(initial: &ParamVector, difficulty: u32) -> Result<Self> {
        let block = seal_block(
            BlockDraft {
                index: 0,
                timestamp: 0,
                payload_digest: payload_digest(initial),
                meta: RoundMeta::genesis(),
                prev_hash: ZERO_HASH,
            },
            difficulty,
        )?;
        Ok(Self {
            blocks: alloc::vec![block],
            difficulty,
        })
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn tip(&self) -> Option<&Block> {
        self.blocks.last()
    }

    pub fn validate(&self) -> core::result::Result<(), ChainFault> {
        if self.blocks.is_empty() {
            return Err(ChainFault {
                index: 0,
                reason: "missing genesis block",
            });
        }
        for (i, b) in self.blocks.iter().enumerate() {
            let fault = |reason| Err(ChainFault { index: i, reason });
            if b.index != i as u64 {
                return fault("index does not match position");
            }
            let expected_prev = if i == 0 {
                ZERO_HASH
            } else {
                self.blocks[i - 1].hash
            };
            if b.prev_hash != expected_prev {
                return fault("previous-hash link broken");
            }
            if b.compute_hash() != b.hash {
                return fault("stored hash does not match contents");
            }
            if !meets_difficulty(&b.hash, self.difficulty) {
                return fault("hash misses the difficulty target");
            }
        }
        Ok(())
    }

    /// Seals a block for `params` on top of the tip. The chain is validated
    /// first and left untouched on error.
    pub fn append(&mut self, params: &ParamVector, meta: RoundMeta) -> Result<&Block> {
        self.validate()?;
        let tip = self.tip().expect("validated chain is nonempty");
        let draft = BlockDraft {
            index: self.blocks.len() as u64,
            timestamp: meta.round,
            payload_digest: payload_digest(params),
            meta,
            prev_hash: tip.hash,
        };
        let block = seal_block(draft, self.difficulty)?;
        self.blocks.push(block);
        Ok(self.blocks.last().expect("just pushed"))
    }
}

/// Off-chain model storage keyed by payload digest.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ModelStore {
    models: BTreeMap<Hash, ParamVector>,
}

impl ModelStore {
    pub fn insert(&mut self, params: ParamVector) -> Hash {
        let digest = payload_digest(&params);
        self.models.insert(digest, params);
        digest
    }

    pub fn get(&self, digest: &Hash) -> Option<&ParamVector> {
        self.models.get(digest)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Hash, &ParamVector)> {
        self.models.iter()
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }
}
