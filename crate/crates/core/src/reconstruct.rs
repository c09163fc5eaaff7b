//! Rebuilds per-block data production from observed submissions, assuming
//! each rollup produces at a constant rate between consecutive submissions.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::ingest::BlobSubmission;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReconstructError {
    #[error("rollup {label}: submission at block {block} precedes window start {window_start}")]
    BeforeWindow {
        label: String,
        block: u64,
        window_start: u64,
    },
    #[error("rollup {label}: submission points not strictly ascending at block {block}")]
    Unsorted { label: String, block: u64 },
}

/// Bytes spread evenly over `first_block..=last_block` by the cumulative-floor rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ProductionSpan {
    pub first_block: u64,
    pub last_block: u64,
    pub total_bytes: u64,
}

impl ProductionSpan {
    pub fn len(&self) -> u64 {
        self.last_block - self.first_block + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Bytes produced in the first `k` blocks of the span: `floor(k * S / n)`.
    pub fn cumulative(&self, k: u64) -> u64 {
        let k = k.min(self.len());
        (u128::from(k) * u128::from(self.total_bytes) / u128::from(self.len())) as u64
    }

    /// Bytes produced at `block`, zero outside the span.
    pub fn bytes_at(&self, block: u64) -> u64 {
        if block < self.first_block || block > self.last_block {
            return 0;
        }
        let k = block - self.first_block + 1;
        self.cumulative(k) - self.cumulative(k - 1)
    }
}

/// Reconstructed production of one rollup.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RollupSchedule {
    pub label: String,
    spans: Vec<ProductionSpan>,
}

impl RollupSchedule {
    pub fn spans(&self) -> &[ProductionSpan] {
        &self.spans
    }

    pub fn total_bytes(&self) -> u64 {
        self.spans.iter().map(|s| s.total_bytes).sum()
    }

    pub fn bytes_at(&self, block: u64) -> u64 {
        let idx = self.spans.partition_point(|s| s.last_block < block);
        self.spans.get(idx).map_or(0, |s| s.bytes_at(block))
    }

    /// Non-zero `(block, bytes)` pairs in ascending block order.
    pub fn iter(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        self.spans
            .iter()
            .flat_map(|s| (s.first_block..=s.last_block).map(move |b| (b, s.bytes_at(b))))
            .filter(|&(_, bytes)| bytes > 0)
    }

    pub fn to_map(&self) -> BTreeMap<u64, u64> {
        self.iter().collect()
    }
}

/// Per-rollup production, keyed by label in ascending order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ProductionSchedule {
    rollups: BTreeMap<String, RollupSchedule>,
}

impl ProductionSchedule {
    /// Reconstructs every labeled rollup found in `submissions` (which must be
    /// sorted). Unlabeled blobs and blobs outside `window_start..=window_end`
    /// are ignored.
    pub fn from_submissions(
        submissions: &[BlobSubmission],
        window_start: u64,
        window_end: u64,
    ) -> Result<Self, ReconstructError> {
        let mut by_label: BTreeMap<&str, Vec<&BlobSubmission>> = BTreeMap::new();
        for s in submissions
            .iter()
            .filter(|s| !s.is_unlabeled() && (window_start..=window_end).contains(&s.block_number))
        {
            by_label.entry(&s.rollup_label).or_default().push(s);
        }
        let mut rollups = BTreeMap::new();
        for (label, subs) in by_label {
            let points = aggregate_per_block(subs);
            rollups.insert(
                label.to_string(),
                reconstruct(label, &points, window_start)?,
            );
        }
        Ok(Self { rollups })
    }

    pub fn insert(&mut self, schedule: RollupSchedule) {
        self.rollups.insert(schedule.label.clone(), schedule);
    }

    pub fn get(&self, label: &str) -> Option<&RollupSchedule> {
        self.rollups.get(label)
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.rollups.keys().map(String::as_str)
    }

    pub fn rollups(&self) -> impl Iterator<Item = &RollupSchedule> {
        self.rollups.values()
    }

    pub fn len(&self) -> usize {
        self.rollups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rollups.is_empty()
    }

    pub fn total_bytes(&self) -> u64 {
        self.rollups.values().map(RollupSchedule::total_bytes).sum()
    }
}

/// Sums one rollup's blob sizes per block, dropping blocks whose total is zero.
/// Input must be sorted by block.
pub fn aggregate_per_block<'a>(
    submissions: impl IntoIterator<Item = &'a BlobSubmission>,
) -> Vec<(u64, u64)> {
    let mut out: Vec<(u64, u64)> = Vec::new();
    for s in submissions {
        match out.last_mut() {
            Some((block, total)) if *block == s.block_number => {
                *total += u64::from(s.stripped_size)
            }
            _ => out.push((s.block_number, u64::from(s.stripped_size))),
        }
    }
    out.retain(|&(_, total)| total > 0);
    out
}

/// Spreads each submission's bytes over the blocks since the previous one.
/// The first submission is spread from `window_start + 1`, or lands entirely
/// on `window_start` if it was submitted there.
pub fn reconstruct(
    label: &str,
    points: &[(u64, u64)],
    window_start: u64,
) -> Result<RollupSchedule, ReconstructError> {
    let mut spans = Vec::with_capacity(points.len());
    let mut prev: Option<u64> = None;
    for &(block, bytes) in points {
        if block < window_start {
            return Err(ReconstructError::BeforeWindow {
                label: label.to_string(),
                block,
                window_start,
            });
        }
        let first_block = match prev {
            Some(p) if block <= p => {
                return Err(ReconstructError::Unsorted {
                    label: label.to_string(),
                    block,
                })
            }
            Some(p) => p + 1,
            None if block == window_start => window_start,
            None => window_start + 1,
        };
        spans.push(ProductionSpan {
            first_block,
            last_block: block,
            total_bytes: bytes,
        });
        prev = Some(block);
    }
    Ok(RollupSchedule {
        label: label.to_string(),
        spans,
    })
}
