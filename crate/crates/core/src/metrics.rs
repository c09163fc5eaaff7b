//! DA service quality, per-rollup cost ledgers for the real and shared
//! regimes, and the report rows behind the CSV outputs.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::ToPrimitive;
use serde::Serialize;
use thiserror::Error;

use crate::codec::BLOB_SIZE;
use crate::fee::{self, FeeError, FeeParams, FeePoint, FeeState};
use crate::ingest::{
    resolve_price, BlobSubmission, BlockContext, BlockTable, IngestError, PriceSeries, UNLABELED,
};
use crate::money::{format_f64, format_ratio, UsdAmount, UsdPrice};
use crate::sim::SimResult;

/// Execution gas charged per DA transaction (a bare type-3 transfer).
pub const DA_TX_GAS: u64 = 21_000;
pub const KB: u64 = 1024;
pub const GB: u64 = 1024 * 1024 * 1024;
/// Blocks per bucket in `buckets.csv`.
pub const BUCKET_SIZE: u64 = 100_000;

pub const TABLE1_HEADER: [&str; 6] = [
    "rollup",
    "blob_count",
    "avg_size_kb",
    "utilization_pct",
    "total_size_gb",
    "da_quality",
];
pub const TABLE2_HEADER: [&str; 19] = [
    "rollup",
    "real_cost_usd",
    "real_size_gb",
    "real_da_quality",
    "sim_cost_usd",
    "sim_size_gb",
    "sim_da_quality",
    "real_blob_fee_wei",
    "real_base_fee_wei",
    "real_priority_fee_wei",
    "real_total_wei",
    "sim_blob_fee_wei",
    "sim_base_fee_wei",
    "sim_priority_fee_wei",
    "sim_total_wei",
    "real_blob_count",
    "real_bytes",
    "sim_payload_bytes",
    "sim_wire_bytes",
];

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Fee(#[from] FeeError),
    #[error("no block context for block {0}")]
    MissingBlock(u64),
    #[error("block {block} lists {listed} blobs but {observed} submissions were observed")]
    BlobCountMismatch {
        block: u64,
        listed: u8,
        observed: u32,
    },
    #[error("wei amount overflowed 128 bits")]
    Overflow,
    #[error("series cover different windows: {left} vs {right}")]
    WindowMismatch { left: String, right: String },
}

/// `1 / (ln(avg_gap) + 1)` over the gaps between submission blocks, or `None`
/// with fewer than two blocks.
pub fn da_quality(blocks: &[u64]) -> Option<f64> {
    let (first, last) = (blocks.first()?, blocks.last()?);
    if blocks.len() < 2 {
        return None;
    }
    let avg_gap = (last - first) as f64 / (blocks.len() - 1) as f64;
    Some(da_quality_from_gap(avg_gap))
}

pub fn da_quality_from_gap(avg_gap: f64) -> f64 {
    1.0 / (avg_gap.ln() + 1.0)
}

/// Three decimals, or `NA`.
pub fn format_quality(quality: Option<f64>) -> String {
    quality.map_or_else(|| "NA".to_string(), |q| format_f64(q, 3))
}

/// Splits `amount` in proportion to `weights`.
///
/// Each share is rounded half-up, then a largest-remainder pass fixes the
/// total: surplus wei go to rounded-down shares with the largest remainder,
/// deficits come out of rounded-up shares with the smallest. Ties favor the
/// lower index in both directions. All-zero weights yield all-zero shares.
pub fn allocate_pro_rata(amount: u128, weights: &[u64]) -> Vec<u128> {
    let total: u128 = weights.iter().map(|&w| u128::from(w)).sum();
    if total == 0 {
        return vec![0; weights.len()];
    }
    let amount_big = BigUint::from(amount);
    let total_big = BigUint::from(total);
    let mut shares = Vec::with_capacity(weights.len());
    // remainder of amount * w / total, as a numerator over `total`
    let mut remainders = Vec::with_capacity(weights.len());
    let mut rounded_up = Vec::with_capacity(weights.len());
    for &w in weights {
        let (q, r) = (&amount_big * w).div_rem(&total_big);
        let r = r.to_u128().expect("remainder below total");
        let up = r > 0 && 2 * r >= total;
        let q = q.to_u128().expect("share below amount");
        shares.push(if up { q + 1 } else { q });
        remainders.push(r);
        rounded_up.push(up);
    }
    let sum: u128 = shares.iter().sum();
    if sum < amount {
        let mut order: Vec<usize> = (0..weights.len()).filter(|&i| !rounded_up[i]).collect();
        order.sort_by(|&a, &b| remainders[b].cmp(&remainders[a]).then(a.cmp(&b)));
        for &i in order.iter().take((amount - sum) as usize) {
            shares[i] += 1;
        }
    } else if sum > amount {
        let mut order: Vec<usize> = (0..weights.len()).filter(|&i| rounded_up[i]).collect();
        order.sort_by(|&a, &b| remainders[a].cmp(&remainders[b]).then(b.cmp(&a)));
        for &i in order.iter().take((sum - amount) as usize) {
            shares[i] -= 1;
        }
    }
    shares
}

/// Wei and USD per fee component.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CostBreakdown {
    pub blob_fee_wei: u128,
    pub base_fee_wei: u128,
    pub priority_fee_wei: u128,
    pub blob_fee_usd: UsdAmount,
    pub base_fee_usd: UsdAmount,
    pub priority_fee_usd: UsdAmount,
}

impl CostBreakdown {
    pub fn total_wei(&self) -> u128 {
        self.blob_fee_wei + self.base_fee_wei + self.priority_fee_wei
    }

    pub fn total_usd(&self) -> UsdAmount {
        let mut t = self.blob_fee_usd.clone();
        t += &self.base_fee_usd;
        t += &self.priority_fee_usd;
        t
    }

    fn charge(
        &mut self,
        component: Component,
        wei: u128,
        price: UsdPrice,
    ) -> Result<(), MetricsError> {
        let (slot, usd) = match component {
            Component::Blob => (&mut self.blob_fee_wei, &mut self.blob_fee_usd),
            Component::Base => (&mut self.base_fee_wei, &mut self.base_fee_usd),
            Component::Priority => (&mut self.priority_fee_wei, &mut self.priority_fee_usd),
        };
        *slot = slot.checked_add(wei).ok_or(MetricsError::Overflow)?;
        *usd += &UsdAmount::from_wei(wei, price);
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
enum Component {
    Blob,
    Base,
    Priority,
}

/// Per-rollup costs plus the undivided amounts they were split from.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CostLedger {
    pub rollups: BTreeMap<String, CostBreakdown>,
    /// Sum of every charge before allocation.
    pub charged: CostBreakdown,
}

impl CostLedger {
    pub fn get(&self, label: &str) -> Option<&CostBreakdown> {
        self.rollups.get(label)
    }

    pub fn allocated(&self) -> CostBreakdown {
        let mut out = CostBreakdown::default();
        for c in self.rollups.values() {
            out.blob_fee_wei += c.blob_fee_wei;
            out.base_fee_wei += c.base_fee_wei;
            out.priority_fee_wei += c.priority_fee_wei;
            out.blob_fee_usd += &c.blob_fee_usd;
            out.base_fee_usd += &c.base_fee_usd;
            out.priority_fee_usd += &c.priority_fee_usd;
        }
        out
    }
}

fn block_price(ctx: &BlockContext, prices: &PriceSeries) -> Result<UsdPrice, MetricsError> {
    Ok(resolve_price(ctx.timestamp, prices)?)
}

fn mul(a: u128, b: u128) -> Result<u128, MetricsError> {
    a.checked_mul(b).ok_or(MetricsError::Overflow)
}

/// Total blobs per window block: the `real_blob_count` column where present,
/// else the number of observed submissions.
pub fn real_blob_counts(
    submissions: &[BlobSubmission],
    blocks: &BlockTable,
    start: u64,
    end: u64,
) -> Result<Vec<u32>, MetricsError> {
    let observed = count_per_block(submissions.iter(), start, end);
    (start..=end)
        .zip(observed)
        .map(|(b, seen)| {
            let ctx = blocks.get(b).ok_or(MetricsError::MissingBlock(b))?;
            match ctx.real_blob_count {
                Some(listed) if u32::from(listed) < seen => Err(MetricsError::BlobCountMismatch {
                    block: b,
                    listed,
                    observed: seen,
                }),
                Some(listed) => Ok(u32::from(listed)),
                None => Ok(seen),
            }
        })
        .collect()
}

/// Unlabeled blobs per window block.
pub fn unlabeled_counts(submissions: &[BlobSubmission], start: u64, end: u64) -> Vec<u32> {
    count_per_block(submissions.iter().filter(|s| s.is_unlabeled()), start, end)
}

fn count_per_block<'a>(
    subs: impl Iterator<Item = &'a BlobSubmission>,
    start: u64,
    end: u64,
) -> Vec<u32> {
    let mut out = vec![0u32; (end - start + 1) as usize];
    for s in subs.filter(|s| (start..=end).contains(&s.block_number)) {
        out[(s.block_number - start) as usize] += 1;
    }
    out
}

/// Real fee series over the window, replayed from a zero accumulator.
pub fn real_fee_series(
    submissions: &[BlobSubmission],
    blocks: &BlockTable,
    start: u64,
    end: u64,
    params: &FeeParams,
) -> Result<Vec<FeePoint>, MetricsError> {
    let counts = real_blob_counts(submissions, blocks, start, end)?;
    Ok(fee::replay_fee_series(
        start,
        &counts,
        FeeState::default(),
        params,
    )?)
}

/// Costs as observed: one `da_tx_gas` transaction per (rollup, block) group
/// at base fee plus median priority fee, and each blob's full blob-gas fee at
/// the real blob base fee. Unlabeled blobs are not charged.
pub fn real_cost(
    submissions: &[BlobSubmission],
    fee_series: &[FeePoint],
    blocks: &BlockTable,
    prices: &PriceSeries,
    params: &FeeParams,
    da_tx_gas: u64,
) -> Result<CostLedger, MetricsError> {
    let (Some(first), Some(last)) = (fee_series.first(), fee_series.last()) else {
        return Ok(CostLedger::default());
    };
    let mut groups: BTreeMap<(u64, &str), u32> = BTreeMap::new();
    for s in submissions.iter().filter(|s| {
        !s.is_unlabeled() && (first.block_number..=last.block_number).contains(&s.block_number)
    }) {
        *groups
            .entry((s.block_number, s.rollup_label.as_str()))
            .or_default() += 1;
    }
    let mut ledger = CostLedger::default();
    for ((block, label), count) in groups {
        let ctx = blocks.get(block).ok_or(MetricsError::MissingBlock(block))?;
        let price = block_price(ctx, prices)?;
        let point = &fee_series[(block - first.block_number) as usize];
        let blob = mul(
            mul(u128::from(count), u128::from(params.gas_per_blob))?,
            point.blob_base_fee,
        )?;
        let base = mul(u128::from(da_tx_gas), ctx.base_fee_per_gas)?;
        let priority = mul(u128::from(da_tx_gas), ctx.median_priority_fee)?;
        let entry = ledger.rollups.entry(label.to_string()).or_default();
        for (component, wei) in [
            (Component::Blob, blob),
            (Component::Base, base),
            (Component::Priority, priority),
        ] {
            entry.charge(component, wei, price)?;
            ledger.charged.charge(component, wei, price)?;
        }
    }
    Ok(ledger)
}

/// Costs under sharing. Each block with a shared submission pays one
/// `da_tx_gas` transaction, split by the rollups' wire bytes across that
/// block's shared blobs; each blob's fee is split by wire bytes within the
/// blob. Post-window drain blocks are priced with the last window block's
/// context.
pub fn sim_cost(
    sim: &SimResult,
    blocks: &BlockTable,
    prices: &PriceSeries,
    params: &FeeParams,
    da_tx_gas: u64,
) -> Result<CostLedger, MetricsError> {
    let mut ledger = CostLedger::default();
    for label in &sim.labels {
        ledger
            .rollups
            .insert(label.clone(), CostBreakdown::default());
    }
    let fallback = blocks
        .get(sim.window_end)
        .ok_or(MetricsError::MissingBlock(sim.window_end))?;
    let n = sim.labels.len();
    for event in sim.events.iter().filter(|e| e.tx_submitted) {
        let ctx = if event.is_virtual {
            fallback
        } else {
            blocks
                .get(event.block_number)
                .ok_or(MetricsError::MissingBlock(event.block_number))?
        };
        let price = block_price(ctx, prices)?;
        let charge = |ledger: &mut CostLedger,
                      component,
                      total: u128,
                      weights: &[u64]|
         -> Result<(), MetricsError> {
            ledger.charged.charge(component, total, price)?;
            for (id, wei) in allocate_pro_rata(total, weights).into_iter().enumerate() {
                if weights[id] > 0 {
                    let label = &sim.labels[id];
                    ledger
                        .rollups
                        .get_mut(label)
                        .expect("seeded")
                        .charge(component, wei, price)?;
                }
            }
            Ok(())
        };

        let mut block_weights = vec![0u64; n];
        for blob in &event.shared {
            let mut blob_weights = vec![0u64; n];
            for e in &blob.entries {
                blob_weights[e.rollup] += e.wire_len();
                block_weights[e.rollup] += e.wire_len();
            }
            let blob_fee = mul(u128::from(params.gas_per_blob), event.blob_base_fee)?;
            charge(&mut ledger, Component::Blob, blob_fee, &blob_weights)?;
        }
        let base = mul(u128::from(da_tx_gas), ctx.base_fee_per_gas)?;
        let priority = mul(u128::from(da_tx_gas), ctx.median_priority_fee)?;
        charge(&mut ledger, Component::Base, base, &block_weights)?;
        charge(&mut ledger, Component::Priority, priority, &block_weights)?;
    }
    Ok(ledger)
}

/// Observed blob statistics for one label.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct UsageStats {
    pub blob_count: u64,
    pub total_bytes: u64,
    /// Distinct blocks with at least one submission, ascending.
    pub submission_blocks: Vec<u64>,
}

impl UsageStats {
    pub fn da_quality(&self) -> Option<f64> {
        da_quality(&self.submission_blocks)
    }
}

/// Per-label usage over the window, including the unlabeled aggregate.
pub fn usage_by_label(
    submissions: &[BlobSubmission],
    start: u64,
    end: u64,
) -> BTreeMap<String, UsageStats> {
    let mut out: BTreeMap<String, UsageStats> = BTreeMap::new();
    for s in submissions
        .iter()
        .filter(|s| (start..=end).contains(&s.block_number))
    {
        let stats = out.entry(s.rollup_label.clone()).or_default();
        stats.blob_count += 1;
        stats.total_bytes += u64::from(s.stripped_size);
        if stats.submission_blocks.last() != Some(&s.block_number) {
            stats.submission_blocks.push(s.block_number);
        }
    }
    out
}

/// One row of `table1.csv`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Table1Row {
    pub rollup: String,
    pub blob_count: u64,
    pub avg_size_kb: String,
    pub utilization_pct: String,
    pub total_size_gb: String,
    pub da_quality: String,
}

pub fn avg_size_kb(total_bytes: u64, blobs: u64) -> String {
    if blobs == 0 {
        return "0.00".into();
    }
    format_ratio(
        u128::from(total_bytes),
        u128::from(blobs) * u128::from(KB),
        2,
    )
}

pub fn utilization_pct(total_bytes: u64, blobs: u64) -> String {
    if blobs == 0 {
        return "0.00".into();
    }
    format_ratio(
        u128::from(total_bytes) * 100,
        u128::from(blobs) * BLOB_SIZE as u128,
        2,
    )
}

pub fn size_gb(bytes: u64) -> String {
    format_ratio(u128::from(bytes), u128::from(GB), 3)
}

/// Table 1 rows sorted by blob count (descending), then label.
pub fn table1_rows(usage: &BTreeMap<String, UsageStats>) -> Vec<Table1Row> {
    let mut rows: Vec<Table1Row> = usage
        .iter()
        .map(|(label, u)| Table1Row {
            rollup: label.clone(),
            blob_count: u.blob_count,
            avg_size_kb: avg_size_kb(u.total_bytes, u.blob_count),
            utilization_pct: utilization_pct(u.total_bytes, u.blob_count),
            total_size_gb: size_gb(u.total_bytes),
            da_quality: format_quality(u.da_quality()),
        })
        .collect();
    rows.sort_by(|a, b| {
        b.blob_count
            .cmp(&a.blob_count)
            .then_with(|| a.rollup.cmp(&b.rollup))
    });
    rows
}

/// Real and shared results for one rollup.
#[derive(Debug, Clone, PartialEq)]
pub struct RollupReport {
    pub rollup: String,
    pub real: CostBreakdown,
    pub sim: CostBreakdown,
    pub real_usage: UsageStats,
    pub real_quality: Option<f64>,
    pub sim_quality: Option<f64>,
    pub sim_payload_bytes: u64,
    pub sim_wire_bytes: u64,
}

impl RollupReport {
    pub fn csv_record(&self) -> Vec<String> {
        vec![
            self.rollup.clone(),
            self.real.total_usd().to_string(),
            size_gb(self.real_usage.total_bytes),
            format_quality(self.real_quality),
            self.sim.total_usd().to_string(),
            size_gb(self.sim_wire_bytes),
            format_quality(self.sim_quality),
            self.real.blob_fee_wei.to_string(),
            self.real.base_fee_wei.to_string(),
            self.real.priority_fee_wei.to_string(),
            self.real.total_wei().to_string(),
            self.sim.blob_fee_wei.to_string(),
            self.sim.base_fee_wei.to_string(),
            self.sim.priority_fee_wei.to_string(),
            self.sim.total_wei().to_string(),
            self.real_usage.blob_count.to_string(),
            self.real_usage.total_bytes.to_string(),
            self.sim_payload_bytes.to_string(),
            self.sim_wire_bytes.to_string(),
        ]
    }
}

/// Table 2 rows for every labeled rollup, sorted by real USD cost
/// (descending), then label.
pub fn table2_rows(
    usage: &BTreeMap<String, UsageStats>,
    real: &CostLedger,
    sim: &SimResult,
    sim_ledger: &CostLedger,
) -> Vec<RollupReport> {
    let payload = sim.payload_by_rollup();
    let wire = sim.wire_by_rollup();
    let labels: BTreeSet<&str> = usage
        .keys()
        .map(String::as_str)
        .filter(|l| *l != UNLABELED)
        .chain(sim.labels.iter().map(String::as_str))
        .collect();
    let mut rows: Vec<RollupReport> = labels
        .into_iter()
        .map(|label| {
            let id = sim.labels.iter().position(|l| l == label);
            let real_usage = usage.get(label).cloned().unwrap_or_default();
            RollupReport {
                rollup: label.to_string(),
                real: real.get(label).cloned().unwrap_or_default(),
                sim: sim_ledger.get(label).cloned().unwrap_or_default(),
                real_quality: real_usage.da_quality(),
                real_usage,
                sim_quality: id.and_then(|i| da_quality(&sim.submission_blocks(i))),
                sim_payload_bytes: id.map_or(0, |i| payload[i]),
                sim_wire_bytes: id.map_or(0, |i| wire[i]),
            }
        })
        .collect();
    rows.sort_by(|a, b| {
        b.real
            .total_usd()
            .cmp(&a.real.total_usd())
            .then_with(|| a.rollup.cmp(&b.rollup))
    });
    rows
}

/// Blob totals for one bucket of consecutive blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct BucketRow {
    pub bucket: u64,
    pub first_block: u64,
    pub last_block: u64,
    pub total_blobs: u64,
    pub blocks_with_more_than_3: u64,
}

/// Groups per-block blob counts (starting at `first_block`) into buckets of
/// `bucket_size` blocks; the last bucket may be short.
pub fn bucket_counts(first_block: u64, counts: &[u32], bucket_size: u64) -> Vec<BucketRow> {
    assert!(bucket_size > 0, "bucket size must be positive");
    counts
        .chunks(bucket_size as usize)
        .enumerate()
        .map(|(i, chunk)| {
            let first = first_block + i as u64 * bucket_size;
            BucketRow {
                bucket: i as u64,
                first_block: first,
                last_block: first + chunk.len() as u64 - 1,
                total_blobs: chunk.iter().map(|&c| u64::from(c)).sum(),
                blocks_with_more_than_3: chunk.iter().filter(|&&c| c > 3).count() as u64,
            }
        })
        .collect()
}

/// Real against simulated fee at one block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FeeCompareRow {
    pub block_number: u64,
    pub real_blob_count: u32,
    pub sim_blob_count: u32,
    pub real_excess_blob_gas: u64,
    pub sim_excess_blob_gas: u64,
    pub real_blob_base_fee: u128,
    pub sim_blob_base_fee: u128,
    /// `real - sim`; negative when sharing raised the fee.
    pub real_minus_sim: i128,
}

pub fn fee_series_compare(
    real: &[FeePoint],
    sim: &[FeePoint],
) -> Result<Vec<FeeCompareRow>, MetricsError> {
    let span = |s: &[FeePoint]| match (s.first(), s.last()) {
        (Some(a), Some(b)) => format!("{}..={}", a.block_number, b.block_number),
        _ => "empty".to_string(),
    };
    if real.len() != sim.len()
        || real
            .iter()
            .zip(sim)
            .any(|(r, s)| r.block_number != s.block_number)
    {
        return Err(MetricsError::WindowMismatch {
            left: span(real),
            right: span(sim),
        });
    }
    Ok(real
        .iter()
        .zip(sim)
        .map(|(r, s)| FeeCompareRow {
            block_number: r.block_number,
            real_blob_count: r.blob_count,
            sim_blob_count: s.blob_count,
            real_excess_blob_gas: r.entering.excess_blob_gas,
            sim_excess_blob_gas: s.entering.excess_blob_gas,
            real_blob_base_fee: r.blob_base_fee,
            sim_blob_base_fee: s.blob_base_fee,
            real_minus_sim: signed_diff(r.blob_base_fee, s.blob_base_fee),
        })
        .collect())
}

fn signed_diff(a: u128, b: u128) -> i128 {
    if a >= b {
        i128::try_from(a - b).unwrap_or(i128::MAX)
    } else {
        i128::try_from(b - a).map_or(i128::MIN, |d| -d)
    }
}

pub fn write_table1<W: Write>(out: W, rows: &[Table1Row]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TABLE1_HEADER)?;
    for r in rows {
        w.write_record([
            r.rollup.as_str(),
            &r.blob_count.to_string(),
            &r.avg_size_kb,
            &r.utilization_pct,
            &r.total_size_gb,
            &r.da_quality,
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_table2<W: Write>(out: W, rows: &[RollupReport]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TABLE2_HEADER)?;
    for r in rows {
        w.write_record(r.csv_record())?;
    }
    w.flush()?;
    Ok(())
}

/// Long-format per-component USD breakdown for both regimes.
pub fn write_cost_breakdown<W: Write>(out: W, rows: &[RollupReport]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "rollup",
        "regime",
        "blob_fee_usd",
        "base_fee_usd",
        "priority_fee_usd",
        "total_usd",
    ])?;
    for r in rows {
        for (regime, c) in [("real", &r.real), ("sim", &r.sim)] {
            w.write_record([
                r.rollup.as_str(),
                regime,
                &c.blob_fee_usd.to_string(),
                &c.base_fee_usd.to_string(),
                &c.priority_fee_usd.to_string(),
                &c.total_usd().to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// One fee series: `block,blob_count,excess_blob_gas,blob_base_fee`.
pub fn write_fee_points<W: Write>(out: W, points: &[FeePoint]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["block", "blob_count", "excess_blob_gas", "blob_base_fee"])?;
    for p in points {
        w.write_record([
            p.block_number.to_string(),
            p.blob_count.to_string(),
            p.entering.excess_blob_gas.to_string(),
            p.blob_base_fee.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_fee_compare<W: Write>(out: W, rows: &[FeeCompareRow]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "block",
        "real_blob_count",
        "sim_blob_count",
        "real_excess_blob_gas",
        "sim_excess_blob_gas",
        "real_blob_base_fee",
        "sim_blob_base_fee",
        "real_minus_sim",
    ])?;
    for r in rows {
        w.write_record([
            r.block_number.to_string(),
            r.real_blob_count.to_string(),
            r.sim_blob_count.to_string(),
            r.real_excess_blob_gas.to_string(),
            r.sim_excess_blob_gas.to_string(),
            r.real_blob_base_fee.to_string(),
            r.sim_blob_base_fee.to_string(),
            r.real_minus_sim.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Real and simulated buckets side by side.
pub fn write_buckets<W: Write>(out: W, real: &[BucketRow], sim: &[BucketRow]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "bucket",
        "first_block",
        "last_block",
        "real_blobs",
        "sim_blobs",
        "real_blocks_gt3",
        "sim_blocks_gt3",
    ])?;
    for (r, s) in real.iter().zip(sim) {
        w.write_record([
            r.bucket.to_string(),
            r.first_block.to_string(),
            r.last_block.to_string(),
            r.total_blobs.to_string(),
            s.total_blobs.to_string(),
            r.blocks_with_more_than_3.to_string(),
            s.blocks_with_more_than_3.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn quality_anchors() {
        assert_eq!(da_quality(&[5, 6, 7, 8]), Some(1.0));
        assert!((da_quality_from_gap(std::f64::consts::E) - 0.5).abs() < 1e-12);
        assert_eq!(da_quality(&[9]), None);
        assert_eq!(da_quality(&[]), None);
        assert_eq!(format_quality(None), "NA");
        assert_eq!(format_quality(Some(1.0)), "1.000");
    }

    #[test]
    fn natural_log_matches_table_magnitudes() {
        // a 0.309 score implies a gap near 9.4 blocks under ln, 172 under log10
        let gap = (1.0f64 / 0.309 - 1.0).exp();
        assert!((gap - 9.4).abs() < 0.1, "{gap}");
        assert_eq!(format_quality(Some(da_quality_from_gap(gap))), "0.309");
    }

    #[test]
    fn allocation_examples() {
        assert_eq!(allocate_pro_rata(131_072, &[90, 10]), vec![117_965, 13_107]);
        assert_eq!(allocate_pro_rata(10, &[1, 1, 1]), vec![4, 3, 3]);
        assert_eq!(allocate_pro_rata(2, &[1, 1, 1]), vec![1, 1, 0]);
        assert_eq!(allocate_pro_rata(7, &[0, 5]), vec![0, 7]);
        assert_eq!(allocate_pro_rata(7, &[0, 0]), vec![0, 0]);
        assert_eq!(
            allocate_pro_rata(u128::MAX, &[u64::MAX, 1])
                .iter()
                .sum::<u128>(),
            u128::MAX
        );
    }

    #[test]
    fn sizes_and_utilization() {
        // 126.51 KB average
        let total = 12_651 * 1024;
        assert_eq!(utilization_pct(total, 100), "98.84");
        assert_eq!(avg_size_kb(total, 100), "126.51");
        assert_eq!(utilization_pct(131_072, 1), "100.00");
        assert_eq!(size_gb(GB / 2), "0.500");
        assert_eq!(utilization_pct(0, 0), "0.00");
    }

    #[test]
    fn buckets() {
        let counts = [4, 3, 6, 0, 5];
        let rows = bucket_counts(10, &counts, 2);
        assert_eq!(rows.len(), 3);
        assert_eq!(
            (rows[0].total_blobs, rows[0].blocks_with_more_than_3),
            (7, 1)
        );
        assert_eq!(
            (rows[2].first_block, rows[2].last_block, rows[2].total_blobs),
            (14, 14, 5)
        );
    }

    #[test]
    fn compare_flat_series() {
        let p = FeeParams::default();
        let a = fee::replay_fee_series(0, &[3; 20], FeeState::default(), &p).unwrap();
        let rows = fee_series_compare(&a, &a).unwrap();
        assert!(rows.iter().all(|r| r.real_minus_sim == 0));
        let b = fee::replay_fee_series(1, &[3; 20], FeeState::default(), &p).unwrap();
        assert!(fee_series_compare(&a, &b).is_err());
    }

    proptest! {
        #[test]
        fn allocation_is_exact(amount in any::<u64>(), weights in prop::collection::vec(0u64..200_000, 1..12)) {
            let shares = allocate_pro_rata(u128::from(amount), &weights);
            let total: u64 = weights.iter().sum();
            if total == 0 {
                prop_assert!(shares.iter().all(|&s| s == 0));
            } else {
                prop_assert_eq!(shares.iter().sum::<u128>(), u128::from(amount));
                for (s, &w) in shares.iter().zip(&weights) {
                    // within one wei of the exact share
                    let exact = u128::from(amount) * u128::from(w);
                    let t = u128::from(total);
                    prop_assert!(*s * t + t >= exact && *s * t <= exact + t);
                    if w == 0 {
                        prop_assert_eq!(*s, 0);
                    }
                }
            }
        }

        #[test]
        fn quality_never_drops_when_blocks_added(mut blocks in prop::collection::btree_set(0u64..10_000, 2..50), extra in 0u64..10_000) {
            let before: Vec<u64> = blocks.iter().copied().collect();
            let (lo, hi) = (before[0], *before.last().unwrap());
            blocks.insert(lo + extra % (hi - lo + 1));
            let after: Vec<u64> = blocks.into_iter().collect();
            prop_assert!(da_quality(&after).unwrap() >= da_quality(&before).unwrap());
        }
    }
}
