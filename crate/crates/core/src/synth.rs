//! Seeded synthetic traces shaped like mainnet blob traffic.
//!
//! All randomness comes from one ChaCha8 stream seeded with the spec's
//! 64-bit seed (little-endian in the first 8 seed bytes, the rest zero).
//! Integers below `n` are drawn as `(next_u64 * n) >> 64`. Per block the
//! draws happen in this order: unlabeled count, one production draw per
//! rollup in spec order, base fee step, priority fee step (walks only). Price
//! steps are drawn after all blocks, one per price point after the first.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::BLOB_SIZE;
use crate::config::ConfigLayer;
use crate::fee::MAX_BLOBS_PER_BLOCK;
use crate::ingest::{
    self, BlobSubmission, BlockContext, BlockTable, PricePoint, PriceSeries, UNLABELED,
};
use crate::money::UsdPrice;

const BPS: u128 = 10_000;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synth spec: {0}")]
    Invalid(String),
    #[error("cannot read spec {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid spec {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl SynthError {
    pub fn is_io(&self) -> bool {
        matches!(self, SynthError::Read { .. } | SynthError::Write { .. })
    }
}

/// When a rollup posts its buffered data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Trigger {
    /// Post whole blobs once at least `min_blobs` are buffered.
    Fill { min_blobs: u32 },
    /// Post everything buffered every `blocks` blocks, the last blob partial.
    Interval { blocks: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RollupSpec {
    pub label: String,
    /// Production per block is uniform on `0..=2 * mean`.
    pub mean_bytes_per_block: u64,
    pub trigger: Trigger,
    /// Stripped size of each blob posted by the fill trigger.
    #[serde(default = "full_blob")]
    pub blob_bytes: u32,
}

/// A wei-per-gas series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FeeWalk {
    Constant {
        value: u64,
    },
    /// Multiplies by a uniform factor in `1 ± step_bps / 10000` each block.
    RandomWalk {
        start: u64,
        step_bps: u32,
        min: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PriceWalk {
    Constant {
        value: UsdPrice,
    },
    RandomWalk {
        start: UsdPrice,
        step_bps: u32,
        min: UsdPrice,
    },
}

/// A stretch of blocks with a different unlabeled blob rate, for modeling
/// demand spikes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Burst {
    /// Offset of the first affected block from `start_block`.
    pub first_offset: u64,
    pub blocks: u64,
    pub unlabeled_per_1000_blocks: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub seed: u64,
    pub start_block: u64,
    pub blocks: u64,
    #[serde(default = "default_timestamp")]
    pub start_timestamp: u64,
    #[serde(default = "default_block_time")]
    pub block_time: u64,
    pub rollups: Vec<RollupSpec>,
    /// Mean unlabeled blobs per 1000 blocks.
    #[serde(default)]
    pub unlabeled_per_1000_blocks: u32,
    #[serde(default = "full_blob")]
    pub unlabeled_size: u32,
    /// Overrides of the unlabeled rate; the first matching burst applies.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub unlabeled_bursts: Vec<Burst>,
    pub base_fee: FeeWalk,
    pub priority_fee: FeeWalk,
    pub price: PriceWalk,
    /// Seconds between price points.
    #[serde(default = "default_price_interval")]
    pub price_interval: u64,
}

fn full_blob() -> u32 {
    BLOB_SIZE as u32
}

fn default_timestamp() -> u64 {
    1_710_338_135
}

fn default_block_time() -> u64 {
    12
}

fn default_price_interval() -> u64 {
    3_600
}

impl SynthSpec {
    pub fn load(path: &Path) -> Result<Self, SynthError> {
        let text = fs::read_to_string(path).map_err(|source| SynthError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|source| SynthError::Parse {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::Invalid(m));
        if self.blocks == 0 {
            return bad("blocks must be positive".into());
        }
        if self.block_time == 0 || self.price_interval == 0 {
            return bad("block_time and price_interval must be positive".into());
        }
        let max_rate = 1000 * u32::from(MAX_BLOBS_PER_BLOCK);
        if self.unlabeled_per_1000_blocks > max_rate
            || self
                .unlabeled_bursts
                .iter()
                .any(|b| b.unlabeled_per_1000_blocks > max_rate)
        {
            return bad("unlabeled_per_1000_blocks above the per-block cap".into());
        }
        if self.unlabeled_size as usize > BLOB_SIZE {
            return bad("unlabeled_size above blob size".into());
        }
        let mut seen = std::collections::BTreeSet::new();
        for r in &self.rollups {
            if r.label.is_empty() || r.label == UNLABELED || r.label.contains([',', '"', '\n']) {
                return bad(format!("invalid rollup label {:?}", r.label));
            }
            if !seen.insert(&r.label) {
                return bad(format!("duplicate rollup label {:?}", r.label));
            }
            if r.blob_bytes == 0 || r.blob_bytes as usize > BLOB_SIZE {
                return bad(format!("{}: blob_bytes must be in 1..=131072", r.label));
            }
            match r.trigger {
                Trigger::Fill { min_blobs: 0 } => {
                    return bad(format!("{}: min_blobs must be positive", r.label))
                }
                Trigger::Interval { blocks: 0 } => {
                    return bad(format!("{}: interval must be positive", r.label))
                }
                _ => {}
            }
        }
        for walk in [self.base_fee, self.priority_fee] {
            if let FeeWalk::RandomWalk { step_bps, .. } = walk {
                if u128::from(step_bps) >= BPS {
                    return bad("step_bps must be below 10000".into());
                }
            }
        }
        match self.price {
            PriceWalk::Constant { value } if value.is_zero() => {
                bad("price must be positive".into())
            }
            PriceWalk::RandomWalk { start, min, .. } if start.is_zero() || min.is_zero() => {
                bad("price must be positive".into())
            }
            PriceWalk::RandomWalk { step_bps, .. } if u128::from(step_bps) >= BPS => {
                bad("step_bps must be below 10000".into())
            }
            _ => Ok(()),
        }
    }

    pub fn end_block(&self) -> u64 {
        self.start_block + self.blocks - 1
    }

    /// Unlabeled blobs per 1000 blocks at `offset`.
    pub fn unlabeled_rate_at(&self, offset: u64) -> u32 {
        self.unlabeled_bursts
            .iter()
            .find(|b| offset >= b.first_offset && offset - b.first_offset < b.blocks)
            .map_or(self.unlabeled_per_1000_blocks, |b| {
                b.unlabeled_per_1000_blocks
            })
    }
}

struct Draws(ChaCha8Rng);

impl Draws {
    fn new(seed: u64) -> Self {
        let mut bytes = [0u8; 32];
        bytes[..8].copy_from_slice(&seed.to_le_bytes());
        Draws(ChaCha8Rng::from_seed(bytes))
    }

    /// Uniform-ish integer in `0..n` (n > 0).
    fn below(&mut self, n: u64) -> u64 {
        ((u128::from(self.0.next_u64()) * u128::from(n)) >> 64) as u64
    }

    fn step(&mut self, value: u128, step_bps: u32, min: u128) -> u128 {
        let span = 2 * u64::from(step_bps) + 1;
        let factor = BPS + u128::from(self.below(span)) - u128::from(step_bps);
        let next = value.saturating_mul(factor) / BPS;
        next.max(min)
    }
}

struct FeeGen {
    walk: FeeWalk,
    current: u128,
}

impl FeeGen {
    fn new(walk: FeeWalk) -> Self {
        let current = match walk {
            FeeWalk::Constant { value } => u128::from(value),
            FeeWalk::RandomWalk { start, .. } => u128::from(start),
        };
        Self { walk, current }
    }

    /// Value for this block, then steps for the next one.
    fn next(&mut self, draws: &mut Draws) -> u128 {
        let out = self.current;
        if let FeeWalk::RandomWalk { step_bps, min, .. } = self.walk {
            self.current = draws.step(self.current, step_bps, u128::from(min));
        }
        out
    }
}

struct RollupState<'a> {
    spec: &'a RollupSpec,
    buffer: u64,
    due: bool,
}

impl RollupState<'_> {
    /// Blob sizes the rollup wants to post now, in posting order.
    fn wanted(&self) -> Vec<u32> {
        match self.spec.trigger {
            Trigger::Fill { min_blobs } => {
                let size = u64::from(self.spec.blob_bytes);
                if self.buffer >= u64::from(min_blobs) * size {
                    vec![self.spec.blob_bytes; (self.buffer / size) as usize]
                } else {
                    Vec::new()
                }
            }
            Trigger::Interval { .. } if self.due => {
                let full = BLOB_SIZE as u64;
                let mut sizes = vec![BLOB_SIZE as u32; (self.buffer / full) as usize];
                if !self.buffer.is_multiple_of(full) {
                    sizes.push((self.buffer % full) as u32);
                }
                sizes
            }
            Trigger::Interval { .. } => Vec::new(),
        }
    }
}

/// A generated input triplet plus a config pointing at it.
#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub submissions: Vec<BlobSubmission>,
    pub blocks: BlockTable,
    pub prices: PriceSeries,
    pub start_block: u64,
    pub end_block: u64,
}

/// Generates a trace. Per block, unlabeled blobs claim their slots first;
/// rollups then take the remaining slots, starting from a position that
/// rotates with the block number, and carry any overflow to later blocks.
pub fn generate(spec: &SynthSpec) -> Result<SynthOutput, SynthError> {
    spec.validate()?;
    let mut draws = Draws::new(spec.seed);
    let mut base = FeeGen::new(spec.base_fee);
    let mut priority = FeeGen::new(spec.priority_fee);
    let mut rollups: Vec<RollupState> = spec
        .rollups
        .iter()
        .map(|r| RollupState {
            spec: r,
            buffer: 0,
            due: false,
        })
        .collect();
    let cap = u64::from(MAX_BLOBS_PER_BLOCK);

    let mut submissions = Vec::new();
    let mut blocks = Vec::with_capacity(spec.blocks as usize);
    for offset in 0..spec.blocks {
        let block = spec.start_block + offset;
        let rate = u64::from(spec.unlabeled_rate_at(offset));
        let extra = u64::from(draws.below(1000) < rate % 1000);
        let unlabeled = (rate / 1000 + extra).min(cap);
        for r in &mut rollups {
            let mean = r.spec.mean_bytes_per_block;
            r.buffer += draws.below(2 * mean + 1);
            if let Trigger::Interval { blocks: every } = r.spec.trigger {
                if (offset + 1) % every == 0 && r.buffer > 0 {
                    r.due = true;
                }
            }
        }

        let mut tx = 0u32;
        for i in 0..unlabeled {
            submissions.push(BlobSubmission {
                block_number: block,
                tx_index: tx,
                blob_index: i as u32,
                rollup_label: UNLABELED.to_string(),
                stripped_size: spec.unlabeled_size,
            });
        }
        if unlabeled > 0 {
            tx += 1;
        }
        let mut slots = cap - unlabeled;
        let n = rollups.len();
        for k in 0..n {
            if slots == 0 {
                break;
            }
            let r = &mut rollups[(offset as usize + k) % n];
            let wanted = r.wanted();
            if wanted.is_empty() {
                continue;
            }
            let take = wanted.len().min(slots as usize);
            for (i, &size) in wanted[..take].iter().enumerate() {
                submissions.push(BlobSubmission {
                    block_number: block,
                    tx_index: tx,
                    blob_index: i as u32,
                    rollup_label: r.spec.label.clone(),
                    stripped_size: size,
                });
                r.buffer -= u64::from(size);
            }
            if take == wanted.len() {
                r.due = false;
            }
            tx += 1;
            slots -= take as u64;
        }

        blocks.push(BlockContext {
            block_number: block,
            timestamp: spec.start_timestamp + offset * spec.block_time,
            base_fee_per_gas: base.next(&mut draws),
            median_priority_fee: priority.next(&mut draws),
            real_blob_count: Some((cap - slots) as u8),
        });
    }

    let span = (spec.blocks - 1) * spec.block_time;
    let points = span / spec.price_interval + 1;
    let mut prices = Vec::with_capacity(points as usize);
    let mut price = match spec.price {
        PriceWalk::Constant { value } => value.units(),
        PriceWalk::RandomWalk { start, .. } => start.units(),
    };
    for k in 0..points {
        if k > 0 {
            if let PriceWalk::RandomWalk { step_bps, min, .. } = spec.price {
                let next = draws.step(u128::from(price), step_bps, u128::from(min.units()));
                price = u64::try_from(next).unwrap_or(u64::MAX);
            }
        }
        prices.push(PricePoint {
            timestamp: spec.start_timestamp + k * spec.price_interval,
            usd_per_eth: UsdPrice::from_units(price),
        });
    }

    let blocks = BlockTable::new(blocks).map_err(|e| SynthError::Invalid(e.to_string()))?;
    let prices = PriceSeries::new(prices).map_err(|e| SynthError::Invalid(e.to_string()))?;
    Ok(SynthOutput {
        submissions,
        blocks,
        prices,
        start_block: spec.start_block,
        end_block: spec.end_block(),
    })
}

impl SynthOutput {
    /// Config keys pointing at the files written by [`SynthOutput::write`].
    pub fn config(&self) -> ConfigLayer {
        ConfigLayer {
            start_block: Some(self.start_block),
            end_block: Some(self.end_block),
            submissions: Some("submissions.csv".into()),
            blocks: Some("blocks.csv".into()),
            prices: Some("prices.csv".into()),
            out_dir: Some("out".into()),
            ..ConfigLayer::default()
        }
    }

    /// Writes `submissions.csv`, `blocks.csv`, `prices.csv` and `config.json`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>, SynthError> {
        let wrap = |path: &Path| {
            let path = path.to_path_buf();
            move |source| SynthError::Write { path, source }
        };
        fs::create_dir_all(dir).map_err(wrap(dir))?;
        let create = |name: &str| -> Result<(PathBuf, BufWriter<fs::File>), SynthError> {
            let path = dir.join(name);
            let file = fs::File::create(&path).map_err(wrap(&path))?;
            Ok((path, BufWriter::new(file)))
        };
        let (subs_path, w) = create("submissions.csv")?;
        ingest::write_submissions(w, &self.submissions).map_err(wrap(&subs_path))?;
        let (blocks_path, w) = create("blocks.csv")?;
        ingest::write_blocks(w, &self.blocks).map_err(wrap(&blocks_path))?;
        let (prices_path, w) = create("prices.csv")?;
        ingest::write_prices(w, &self.prices).map_err(wrap(&prices_path))?;
        let config_path = dir.join("config.json");
        let mut text = serde_json::to_string_pretty(&self.config()).expect("config serializes");
        text.push('\n');
        fs::write(&config_path, text).map_err(wrap(&config_path))?;
        Ok(vec![subs_path, blocks_path, prices_path, config_path])
    }
}

/// `synth`: generates from a spec file into `out_dir`.
pub fn cmd_synth(spec_path: &Path, out_dir: &Path) -> Result<Vec<PathBuf>, SynthError> {
    let spec = SynthSpec::load(spec_path)?;
    generate(&spec)?.write(out_dir)
}
