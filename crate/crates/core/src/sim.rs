//! Per-block blob-sharing simulation.
//!
//! Every block, reconstructed production is added to a shared pending pool.
//! The pool is packed into exactly-full shared blobs, which wait in a FIFO
//! queue. Submission capacity is whatever the real block's unlabeled blobs
//! leave under the per-block cap; anything beyond that is deferred.

use std::collections::VecDeque;

use serde::Serialize;
use thiserror::Error;

use crate::codec::{
    self, ShareEntry, SharedBlob, BLOB_SIZE, HEADER_LEN, MAX_ENTRY_PAYLOAD, MIN_ENTRY_WIRE,
};
use crate::fee::{self, FeeError, FeeParams, FeePoint, FeeState};
use crate::reconstruct::ProductionSchedule;

/// Index into the simulation's ascending label list.
pub type RollupId = usize;

const HEADER: u64 = HEADER_LEN as u64;
const MIN_WIRE: u64 = MIN_ENTRY_WIRE as u64;
const MAX_PAYLOAD: u64 = MAX_ENTRY_PAYLOAD as u64;
const CAPACITY: u64 = BLOB_SIZE as u64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error(transparent)]
    Fee(#[from] FeeError),
    #[error("block {block} has {count} unlabeled blobs, above the cap of {max}")]
    TooManyUnlabeled { block: u64, count: u32, max: u8 },
    #[error("unlabeled counts cover {actual} blocks but the window has {expected}")]
    WindowLength { expected: usize, actual: usize },
    #[error("window start {start} is after window end {end}")]
    EmptyWindow { start: u64, end: u64 },
    #[error("production at block {block} for rollup {label} falls outside the window")]
    OutsideWindow { label: String, block: u64 },
    #[error("unknown rollup id {0}")]
    UnknownRollup(RollupId),
}

/// One framed record of a simulated blob; the payload itself is not modeled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct PackedEntry {
    pub rollup: RollupId,
    pub payload_len: u32,
}

impl PackedEntry {
    pub fn wire_len(&self) -> u64 {
        HEADER + u64::from(self.payload_len)
    }
}

/// Bytes one rollup occupies inside a blob.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RollupShare {
    pub rollup: RollupId,
    pub entries: u32,
    pub payload_bytes: u64,
    pub wire_bytes: u64,
}

/// A packed shared blob, tagged with its seal order and block.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SealedBlob {
    pub seq: u64,
    pub seal_block: u64,
    /// Partial blob sealed at window end.
    pub flush: bool,
    pub entries: Vec<PackedEntry>,
}

impl SealedBlob {
    pub fn payload_bytes(&self) -> u64 {
        self.entries.iter().map(|e| u64::from(e.payload_len)).sum()
    }

    pub fn wire_bytes(&self) -> u64 {
        self.entries.iter().map(PackedEntry::wire_len).sum()
    }

    /// Per-rollup byte attribution, in order of first appearance.
    pub fn shares(&self) -> Vec<RollupShare> {
        let mut out: Vec<RollupShare> = Vec::new();
        for e in &self.entries {
            let share = match out.iter_mut().find(|s| s.rollup == e.rollup) {
                Some(s) => s,
                None => {
                    out.push(RollupShare {
                        rollup: e.rollup,
                        entries: 0,
                        payload_bytes: 0,
                        wire_bytes: 0,
                    });
                    out.last_mut().expect("just pushed")
                }
            };
            share.entries += 1;
            share.payload_bytes += u64::from(e.payload_len);
            share.wire_bytes += e.wire_len();
        }
        out
    }

    /// Materializes the blob through the codec, with `payload` supplying the
    /// bytes of each entry.
    pub fn to_shared_blob(
        &self,
        labels: &[String],
        mut payload: impl FnMut(RollupId, usize) -> Vec<u8>,
    ) -> Result<SharedBlob, codec::CodecError> {
        let mut blob = SharedBlob::new();
        for e in &self.entries {
            let label = labels.get(e.rollup).map_or("", String::as_str);
            let sig = codec::rollup_signature(label)?;
            blob.push(ShareEntry::new(
                sig,
                payload(e.rollup, e.payload_len as usize),
            ))?;
        }
        Ok(blob)
    }
}

/// Pending bytes per rollup. Blobs are built by visiting rollups in
/// ascending label order, starting from the rollup whose data was split by
/// the previous blob and wrapping around.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PendingPool {
    labels: Vec<String>,
    pending: Vec<u64>,
    cursor: RollupId,
}

impl PendingPool {
    pub fn new<I, S>(labels: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        labels.sort();
        labels.dedup();
        let pending = vec![0; labels.len()];
        Self {
            labels,
            pending,
            cursor: 0,
        }
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn id_of(&self, label: &str) -> Option<RollupId> {
        self.labels.binary_search_by(|l| l.as_str().cmp(label)).ok()
    }

    pub fn add(&mut self, rollup: RollupId, bytes: u64) -> Result<(), SimError> {
        let slot = self
            .pending
            .get_mut(rollup)
            .ok_or(SimError::UnknownRollup(rollup))?;
        *slot += bytes;
        Ok(())
    }

    pub fn pending(&self, rollup: RollupId) -> u64 {
        self.pending.get(rollup).copied().unwrap_or(0)
    }

    pub fn total_pending(&self) -> u64 {
        self.pending.iter().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.pending.iter().all(|&p| p == 0)
    }

    /// Rollup that leads the next blob.
    pub fn cursor(&self) -> RollupId {
        self.cursor
    }

    /// Wire size of the pool if every rollup's buffer were framed on its own:
    /// `sum(pending + 34 * ceil(pending / 65535))`.
    pub fn wire_size(&self) -> u64 {
        self.pending
            .iter()
            .filter(|&&p| p > 0)
            .map(|&p| p + HEADER * p.div_ceil(MAX_PAYLOAD))
            .sum()
    }

    fn visit_order(&self) -> impl Iterator<Item = RollupId> {
        let n = self.labels.len();
        let start = self.cursor;
        (0..n).map(move |i| (start + i) % n)
    }

    /// Attempts to build one exactly-full blob without mutating the pool.
    ///
    /// Free space after each entry is kept at 0 or at least one minimal entry
    /// (35 bytes). When a whole buffer would leave 1..=34 bytes, the entry is
    /// shrunk to leave exactly 35 and the following entry closes the blob.
    fn plan_full(&self) -> Option<(Vec<PackedEntry>, RollupId)> {
        let mut cap = CAPACITY;
        let mut entries = Vec::new();
        for id in self.visit_order() {
            let mut avail = self.pending[id];
            while avail > 0 && cap > 0 {
                let most = avail.min(MAX_PAYLOAD);
                let closing = cap - HEADER;
                let take = if most >= closing {
                    closing
                } else if closing - most >= MIN_WIRE {
                    most
                } else if cap >= 2 * MIN_WIRE {
                    cap - HEADER - MIN_WIRE
                } else {
                    // too little room to split; let a later rollup close the blob
                    break;
                };
                entries.push(PackedEntry {
                    rollup: id,
                    payload_len: take as u32,
                });
                avail -= take;
                cap -= HEADER + take;
            }
            if cap == 0 {
                let next = if avail > 0 {
                    id
                } else {
                    (id + 1) % self.labels.len()
                };
                return Some((entries, next));
            }
        }
        None
    }

    /// Builds one partial blob from whatever is pending, largest entries first
    /// in visit order, without the exact-fill requirement.
    fn plan_partial(&self) -> Option<(Vec<PackedEntry>, RollupId)> {
        let mut cap = CAPACITY;
        let mut entries = Vec::new();
        let mut next = self.cursor;
        for id in self.visit_order() {
            let mut avail = self.pending[id];
            while avail > 0 && cap >= MIN_WIRE {
                let take = avail.min(MAX_PAYLOAD).min(cap - HEADER);
                entries.push(PackedEntry {
                    rollup: id,
                    payload_len: take as u32,
                });
                avail -= take;
                cap -= HEADER + take;
            }
            if avail > 0 {
                next = id;
                break;
            }
        }
        (!entries.is_empty()).then_some((entries, next))
    }

    fn commit(&mut self, entries: &[PackedEntry], next: RollupId) {
        for e in entries {
            self.pending[e.rollup] -= u64::from(e.payload_len);
        }
        self.cursor = next;
    }

    /// Removes and returns the entries of the next exactly-full blob, if the
    /// pool can fill one.
    pub fn take_full(&mut self) -> Option<Vec<PackedEntry>> {
        let (entries, next) = self.plan_full()?;
        self.commit(&entries, next);
        Some(entries)
    }

    /// Removes and returns a partial blob's worth of entries.
    pub fn take_partial(&mut self) -> Option<Vec<PackedEntry>> {
        let (entries, next) = self.plan_partial()?;
        self.commit(&entries, next);
        Some(entries)
    }
}

/// Seals every exactly-full blob the pool can currently fill.
pub fn pack_pool(mut pool: PendingPool) -> (Vec<Vec<PackedEntry>>, PendingPool) {
    let mut sealed = Vec::new();
    while let Some(entries) = pool.take_full() {
        sealed.push(entries);
    }
    (sealed, pool)
}

/// What happened in one (possibly virtual, post-window) block.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SimEvent {
    pub block_number: u64,
    /// Block beyond the window, used only to drain deferred blobs.
    pub is_virtual: bool,
    pub unlabeled: u32,
    pub shared: Vec<SealedBlob>,
    pub entering: FeeState,
    pub blob_base_fee: u128,
    pub tx_submitted: bool,
}

impl SimEvent {
    pub fn blob_count(&self) -> u32 {
        self.unlabeled + self.shared.len() as u32
    }
}

/// Mutable state threaded through the block fold.
#[derive(Debug, Clone)]
pub struct SimState {
    pub pool: PendingPool,
    pub queue: VecDeque<SealedBlob>,
    pub fee: FeeState,
    next_seq: u64,
}

impl SimState {
    pub fn new(pool: PendingPool, fee: FeeState) -> Self {
        Self {
            pool,
            queue: VecDeque::new(),
            fee,
            next_seq: 0,
        }
    }

    fn seal(&mut self, entries: Vec<PackedEntry>, block: u64, flush: bool) {
        let blob = SealedBlob {
            seq: self.next_seq,
            seal_block: block,
            flush,
            entries,
        };
        self.next_seq += 1;
        self.queue.push_back(blob);
    }

    /// Adds this block's production, seals full blobs, submits what fits
    /// after `unlabeled` real blobs and advances the fee state.
    pub fn step_block(
        &mut self,
        block: u64,
        produced: &[(RollupId, u64)],
        unlabeled: u32,
        params: &FeeParams,
    ) -> Result<SimEvent, SimError> {
        self.step(block, produced, unlabeled, params, false, false)
    }

    fn step(
        &mut self,
        block: u64,
        produced: &[(RollupId, u64)],
        unlabeled: u32,
        params: &FeeParams,
        flush: bool,
        is_virtual: bool,
    ) -> Result<SimEvent, SimError> {
        let max = params.max_blobs_per_block;
        if unlabeled > u32::from(max) {
            return Err(SimError::TooManyUnlabeled {
                block,
                count: unlabeled,
                max,
            });
        }
        for &(rollup, bytes) in produced {
            self.pool.add(rollup, bytes)?;
        }
        while let Some(entries) = self.pool.take_full() {
            self.seal(entries, block, false);
        }
        if flush {
            while let Some(entries) = self.pool.take_partial() {
                self.seal(entries, block, true);
            }
        }

        let capacity = (u32::from(max) - unlabeled) as usize;
        let take = capacity.min(self.queue.len());
        let shared: Vec<SealedBlob> = self.queue.drain(..take).collect();

        let entering = self.fee;
        let fee_now = fee::blob_base_fee(entering, params);
        self.fee = fee::advance(entering, unlabeled + shared.len() as u32, params)?;
        Ok(SimEvent {
            block_number: block,
            is_virtual,
            unlabeled,
            tx_submitted: !shared.is_empty(),
            shared,
            entering,
            blob_base_fee: fee_now,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimOptions {
    /// Seal leftover pool bytes into a final partial blob at window end.
    pub include_flush: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            include_flush: true,
        }
    }
}

/// Outcome of a full-window simulation.
#[derive(Debug, Clone)]
pub struct SimResult {
    pub labels: Vec<String>,
    pub window_start: u64,
    pub window_end: u64,
    /// One event per window block, then any virtual drain blocks.
    pub events: Vec<SimEvent>,
    pub residual_pool: PendingPool,
    pub residual_queue: Vec<SealedBlob>,
    pub final_fee: FeeState,
}

impl SimResult {
    pub fn window_len(&self) -> usize {
        (self.window_end - self.window_start + 1) as usize
    }

    pub fn window_events(&self) -> &[SimEvent] {
        &self.events[..self.window_len().min(self.events.len())]
    }

    pub fn virtual_events(&self) -> &[SimEvent] {
        &self.events[self.window_len().min(self.events.len())..]
    }

    /// Simulated blob count (unlabeled + shared) per window block.
    pub fn blob_counts(&self) -> Vec<u32> {
        self.window_events()
            .iter()
            .map(SimEvent::blob_count)
            .collect()
    }

    /// Simulated fee series over the window.
    pub fn fee_series(&self) -> Vec<FeePoint> {
        self.window_events()
            .iter()
            .map(|e| FeePoint {
                block_number: e.block_number,
                blob_count: e.blob_count(),
                entering: e.entering,
                blob_base_fee: e.blob_base_fee,
            })
            .collect()
    }

    pub fn submitted_blobs(&self) -> impl Iterator<Item = (&SimEvent, &SealedBlob)> {
        self.events
            .iter()
            .flat_map(|e| e.shared.iter().map(move |b| (e, b)))
    }

    /// Per-rollup payload bytes across every submitted shared and flush blob.
    pub fn payload_by_rollup(&self) -> Vec<u64> {
        let mut out = vec![0; self.labels.len()];
        for (_, blob) in self.submitted_blobs() {
            for e in &blob.entries {
                out[e.rollup] += u64::from(e.payload_len);
            }
        }
        out
    }

    pub fn wire_by_rollup(&self) -> Vec<u64> {
        let mut out = vec![0; self.labels.len()];
        for (_, blob) in self.submitted_blobs() {
            for e in &blob.entries {
                out[e.rollup] += e.wire_len();
            }
        }
        out
    }

    /// Blocks in which a blob carrying the rollup's data was submitted.
    pub fn submission_blocks(&self, rollup: RollupId) -> Vec<u64> {
        self.events
            .iter()
            .filter(|e| {
                e.shared
                    .iter()
                    .any(|b| b.entries.iter().any(|en| en.rollup == rollup))
            })
            .map(|e| e.block_number)
            .collect()
    }

    pub fn flush_blobs(&self) -> impl Iterator<Item = &SealedBlob> {
        self.submitted_blobs().map(|(_, b)| b).filter(|b| b.flush)
    }
}

/// Folds [`SimState::step_block`] over `window_start..=window_end` from a zero
/// fee state. `unlabeled` holds the real unlabeled blob count of each window
/// block. Blobs still queued at window end drain in virtual blocks after it.
pub fn run(
    schedule: &ProductionSchedule,
    window_start: u64,
    window_end: u64,
    unlabeled: &[u32],
    params: &FeeParams,
    options: SimOptions,
) -> Result<SimResult, SimError> {
    if window_start > window_end {
        return Err(SimError::EmptyWindow {
            start: window_start,
            end: window_end,
        });
    }
    let expected = (window_end - window_start + 1) as usize;
    if unlabeled.len() != expected {
        return Err(SimError::WindowLength {
            expected,
            actual: unlabeled.len(),
        });
    }
    let pool = PendingPool::new(schedule.labels());
    let labels = pool.labels().to_vec();

    let mut streams = Vec::with_capacity(labels.len());
    for (id, label) in labels.iter().enumerate() {
        let rollup = schedule
            .get(label)
            .expect("pool labels come from the schedule");
        if let Some(span) = rollup
            .spans()
            .iter()
            .find(|s| s.first_block < window_start || s.last_block > window_end)
        {
            return Err(SimError::OutsideWindow {
                label: label.clone(),
                block: if span.first_block < window_start {
                    span.first_block
                } else {
                    span.last_block
                },
            });
        }
        streams.push((id, rollup.iter().peekable()));
    }

    let mut state = SimState::new(pool, FeeState::default());
    let mut events = Vec::with_capacity(expected);
    let mut produced = Vec::with_capacity(labels.len());
    for (offset, &unlabeled_here) in unlabeled.iter().enumerate() {
        let block = window_start + offset as u64;
        produced.clear();
        for (id, stream) in &mut streams {
            if let Some(&(b, bytes)) = stream.peek() {
                if b == block {
                    produced.push((*id, bytes));
                    stream.next();
                }
            }
        }
        let last = block == window_end;
        events.push(state.step(
            block,
            &produced,
            unlabeled_here,
            params,
            last && options.include_flush,
            false,
        )?);
    }

    let mut block = window_end;
    while !state.queue.is_empty() {
        block += 1;
        events.push(state.step(block, &[], 0, params, false, true)?);
    }

    Ok(SimResult {
        labels,
        window_start,
        window_end,
        events,
        residual_pool: state.pool,
        residual_queue: state.queue.into_iter().collect(),
        final_fee: state.fee,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reconstruct::reconstruct;
    use proptest::prelude::*;

    fn pool_with(amounts: &[(&str, u64)]) -> PendingPool {
        let mut pool = PendingPool::new(amounts.iter().map(|(l, _)| *l));
        for (label, bytes) in amounts {
            let id = pool.id_of(label).unwrap();
            pool.add(id, *bytes).unwrap();
        }
        pool
    }

    fn lens(entries: &[PackedEntry]) -> Vec<(RollupId, u32)> {
        entries.iter().map(|e| (e.rollup, e.payload_len)).collect()
    }

    /// Independent byte accounting: wire of a layout is payload plus 34 per entry.
    fn wire_of(layout: &[(RollupId, u32)]) -> u64 {
        layout.iter().map(|&(_, len)| 34 + u64::from(len)).sum()
    }

    #[test]
    fn pack_single_rollup_max_payload() {
        let (sealed, pool) = pack_pool(pool_with(&[("a", 131_004)]));
        assert_eq!(sealed.len(), 1);
        let layout = lens(&sealed[0]);
        assert_eq!(layout, vec![(0, 65_535), (0, 65_469)]);
        assert_eq!(wire_of(&layout), 131_072);
        assert_eq!(pool.pending(0), 0);
    }

    #[test]
    fn pack_small_pool_is_noop() {
        let before = pool_with(&[("a", 100)]);
        let (sealed, after) = pack_pool(before.clone());
        assert!(sealed.is_empty());
        assert_eq!(before, after);
    }

    #[test]
    fn pack_two_rollups_split_second() {
        let (sealed, pool) = pack_pool(pool_with(&[("a", 70_000), ("b", 70_000)]));
        assert_eq!(sealed.len(), 1);
        let layout = lens(&sealed[0]);
        assert_eq!(layout, vec![(0, 65_535), (0, 4_465), (1, 60_970)]);
        assert_eq!(wire_of(&layout), 131_072);
        assert_eq!(pool.pending(0), 0);
        assert_eq!(pool.pending(1), 9_030);
        // the split rollup leads the next blob
        assert_eq!(pool.cursor(), 1);
    }

    #[test]
    fn pack_short_tail_shrinks_entry() {
        // a's whole buffer would leave 10 free bytes
        let a = 131_072 - 34 - 10;
        let (sealed, pool) = pack_pool(pool_with(&[
            ("a", 65_535),
            ("b", a - 65_535 - 34),
            ("c", 500),
        ]));
        assert_eq!(sealed.len(), 1);
        let layout = lens(&sealed[0]);
        assert_eq!(wire_of(&layout), 131_072);
        // b is shrunk by 25 to leave room for one minimal entry, which b
        // itself then fills with a single byte
        assert_eq!(layout[1], (1, (a - 65_535 - 34 - 25) as u32));
        assert_eq!(layout[2], (1, 1));
        assert_eq!(pool.pending(1), 24);
        assert_eq!(pool.pending(2), 500);
        assert_eq!(pool.cursor(), 1);
    }

    #[test]
    fn pack_yields_multiple_blobs() {
        let (sealed, pool) = pack_pool(pool_with(&[("a", 400_000)]));
        assert_eq!(sealed.len(), 3);
        for s in &sealed {
            assert_eq!(s.iter().map(PackedEntry::wire_len).sum::<u64>(), 131_072);
        }
        assert_eq!(pool.pending(0), 400_000 - 3 * 131_004);
    }

    #[test]
    fn pool_wire_size() {
        let pool = pool_with(&[("a", 65_536), ("b", 0), ("c", 10)]);
        assert_eq!(pool.wire_size(), 65_536 + 68 + 10 + 34);
    }

    fn queue_state(n_blobs: usize) -> SimState {
        let mut pool = PendingPool::new(["a"]);
        pool.add(0, 131_004 * n_blobs as u64).unwrap();
        SimState::new(pool, FeeState::default())
    }

    #[test]
    fn step_defers_beyond_capacity() {
        let p = FeeParams::default();
        let mut st = queue_state(7);
        let ev = st.step_block(1, &[], 2, &p).unwrap();
        assert_eq!(ev.shared.len(), 4);
        assert_eq!(st.queue.len(), 3);
        assert!(ev.tx_submitted);
        assert_eq!(ev.blob_count(), 6);
        assert_eq!(st.fee.excess_blob_gas, 393_216);
        let seqs: Vec<u64> = ev.shared.iter().map(|b| b.seq).collect();
        assert_eq!(seqs, vec![0, 1, 2, 3]);
    }

    #[test]
    fn step_idle_block() {
        let p = FeeParams::default();
        let mut st = SimState::new(PendingPool::new(["a"]), FeeState::new(500_000));
        let ev = st.step_block(1, &[], 0, &p).unwrap();
        assert!(ev.shared.is_empty());
        assert!(!ev.tx_submitted);
        assert_eq!(ev.entering, FeeState::new(500_000));
        assert_eq!(st.fee, FeeState::new(106_784));
    }

    #[test]
    fn step_full_unlabeled_block() {
        let p = FeeParams::default();
        let mut st = queue_state(1);
        let ev = st.step_block(1, &[], 6, &p).unwrap();
        assert!(ev.shared.is_empty());
        assert_eq!(st.queue.len(), 1);
        assert!(matches!(
            st.step_block(2, &[], 7, &p),
            Err(SimError::TooManyUnlabeled { count: 7, .. })
        ));
    }

    fn single_rollup_schedule(points: &[(u64, u64)], start: u64) -> ProductionSchedule {
        let mut s = ProductionSchedule::default();
        s.insert(reconstruct("a", points, start).unwrap());
        s
    }

    #[test]
    fn run_first_blob_when_full() {
        // 131004 bytes at block 10 after a submission at 5: 26200.8/block
        let sched = single_rollup_schedule(&[(5, 1), (10, 131_004)], 5);
        let p = FeeParams::default();
        let r = run(
            &sched,
            5,
            12,
            &[0; 8],
            &p,
            SimOptions {
                include_flush: false,
            },
        )
        .unwrap();
        let first = r.events.iter().find(|e| e.tx_submitted).unwrap();
        assert_eq!(first.block_number, 10);
        // the single byte from block 5 is still pending
        assert_eq!(r.residual_pool.total_pending(), 1);
    }

    #[test]
    fn run_empty_schedule() {
        let r = run(
            &ProductionSchedule::default(),
            1,
            10,
            &[0; 10],
            &FeeParams::default(),
            SimOptions::default(),
        )
        .unwrap();
        assert_eq!(r.events.len(), 10);
        assert!(r
            .events
            .iter()
            .all(|e| e.shared.is_empty() && e.blob_base_fee == 1));
    }

    #[test]
    fn run_flush_lands_in_last_block() {
        let sched = single_rollup_schedule(&[(3, 1000)], 1);
        let r = run(
            &sched,
            1,
            5,
            &[0; 5],
            &FeeParams::default(),
            SimOptions::default(),
        )
        .unwrap();
        let last = r.events.last().unwrap();
        assert_eq!(last.block_number, 5);
        assert_eq!(last.shared.len(), 1);
        assert!(last.shared[0].flush);
        assert_eq!(r.payload_by_rollup(), vec![1000]);
        assert!(r.residual_pool.is_empty());
    }

    #[test]
    fn run_flush_goes_virtual_when_last_block_full() {
        let sched = single_rollup_schedule(&[(3, 1000)], 1);
        let r = run(
            &sched,
            1,
            5,
            &[0, 0, 0, 0, 6],
            &FeeParams::default(),
            SimOptions::default(),
        )
        .unwrap();
        assert_eq!(r.events.len(), 6);
        let v = &r.virtual_events()[0];
        assert!(v.is_virtual);
        assert_eq!(v.block_number, 6);
        assert!(v.shared[0].flush);
    }

    #[test]
    fn run_validates_window() {
        let p = FeeParams::default();
        let sched = single_rollup_schedule(&[(30, 10)], 1);
        assert!(matches!(
            run(&sched, 1, 5, &[0; 5], &p, SimOptions::default()),
            Err(SimError::OutsideWindow { .. })
        ));
        assert!(matches!(
            run(
                &ProductionSchedule::default(),
                1,
                5,
                &[0; 4],
                &p,
                SimOptions::default()
            ),
            Err(SimError::WindowLength {
                expected: 5,
                actual: 4
            })
        ));
    }

    #[test]
    fn materialized_blob_decodes_to_layout() {
        let (sealed, pool) = pack_pool(pool_with(&[("a", 70_000), ("b", 70_000)]));
        let blob = SealedBlob {
            seq: 0,
            seal_block: 0,
            flush: false,
            entries: sealed[0].clone(),
        };
        let shared = blob
            .to_shared_blob(pool.labels(), |id, len| vec![id as u8 + 1; len])
            .unwrap();
        assert_eq!(shared.wire_bytes(), 131_072);
        let decoded = codec::decode(&shared.encode()).unwrap();
        assert_eq!(decoded.len(), 3);
        assert_eq!(decoded[2].signature, codec::rollup_signature("b").unwrap());
        assert_eq!(decoded[2].payload.len(), 60_970);
    }

    proptest! {
        #[test]
        fn packing_conserves_bytes_and_fills_exactly(
            amounts in prop::collection::vec(0u64..300_000, 1..8),
            rounds in 1usize..4,
        ) {
            let labels: Vec<String> = (0..amounts.len()).map(|i| format!("r{i}")).collect();
            let mut pool = PendingPool::new(labels.clone());
            let mut added = vec![0u64; amounts.len()];
            let mut packed = vec![0u64; amounts.len()];
            for _ in 0..rounds {
                for (i, &a) in amounts.iter().enumerate() {
                    pool.add(i, a).unwrap();
                    added[i] += a;
                }
                let (sealed, rest) = pack_pool(pool);
                pool = rest;
                for blob in &sealed {
                    prop_assert_eq!(blob.iter().map(PackedEntry::wire_len).sum::<u64>(), 131_072);
                    for e in blob {
                        prop_assert!(e.payload_len >= 1 && u64::from(e.payload_len) <= MAX_PAYLOAD);
                        packed[e.rollup] += u64::from(e.payload_len);
                    }
                }
            }
            while let Some(partial) = pool.take_partial() {
                prop_assert!(partial.iter().map(PackedEntry::wire_len).sum::<u64>() <= 131_072);
                for e in &partial {
                    packed[e.rollup] += u64::from(e.payload_len);
                }
            }
            prop_assert_eq!(packed, added);
        }
    }
}
