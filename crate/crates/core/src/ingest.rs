//! Loading and validating blob-submission traces, per-block fee context and
//! ETH/USD prices from CSV, plus raw-blob padding stripping.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::BLOB_SIZE;
use crate::money::UsdPrice;

/// Label carried by blobs not attributed to any known rollup.
pub const UNLABELED: &str = "UNLABELED";

pub const SUBMISSION_COLUMNS: [&str; 5] = [
    "block_number",
    "tx_index",
    "blob_index",
    "rollup_label",
    "stripped_size",
];
pub const BLOCK_COLUMNS: [&str; 4] = [
    "block_number",
    "timestamp",
    "base_fee_per_gas",
    "median_priority_fee",
];
/// Optional trailing column of `blocks.csv`.
pub const REAL_BLOB_COUNT_COLUMN: &str = "real_blob_count";
pub const PRICE_COLUMNS: [&str; 2] = ["timestamp", "usd_per_eth"];

const MAX_LISTED_HEIGHTS: usize = 20;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}{}: {message}", column.as_ref().map(|c| format!(", column {c}")).unwrap_or_default())]
    Malformed {
        line: u64,
        column: Option<String>,
        message: String,
    },
    #[error("unexpected header {found:?}; expected {expected:?}")]
    Header { expected: String, found: String },
    #[error(
        "line {line}: duplicate submission key (block {block}, tx {tx_index}, blob {blob_index})"
    )]
    DuplicateSubmission {
        line: u64,
        block: u64,
        tx_index: u32,
        blob_index: u32,
    },
    #[error("line {line}: stripped_size {size} outside 0..=131072")]
    SizeOutOfRange { line: u64, size: u64 },
    #[error("line {line}: rollup_label is empty")]
    EmptyLabel { line: u64 },
    #[error("line {line}: duplicate block {block}")]
    DuplicateBlock { line: u64, block: u64 },
    #[error("line {line}: real_blob_count {count} above 6")]
    BlobCountOutOfRange { line: u64, count: u64 },
    #[error("missing block context for {total} heights: {}", format_heights(heights, *total))]
    MissingBlocks { heights: Vec<u64>, total: usize },
    #[error("line {line}: price timestamp {timestamp} not after previous {previous}")]
    NonAscendingPrice {
        line: u64,
        timestamp: u64,
        previous: u64,
    },
    #[error("line {line}: usd_per_eth must be positive")]
    NonPositivePrice { line: u64 },
    #[error("price series is empty")]
    EmptyPriceSeries,
    #[error("no price at or before timestamp {timestamp}; series starts at {first}")]
    PriceBeforeSeries { timestamp: u64, first: u64 },
    #[error("raw blob must be {expected} bytes, got {actual}")]
    WrongBlobLength { expected: usize, actual: usize },
    #[error("raw blob is neither {BLOB_SIZE} binary bytes nor a 0x-prefixed hex string: {0}")]
    BadRawBlob(String),
}

impl IngestError {
    pub fn is_io(&self) -> bool {
        matches!(self, IngestError::Io { .. })
    }
}

fn format_heights(heights: &[u64], total: usize) -> String {
    let list: Vec<String> = heights.iter().map(u64::to_string).collect();
    if total > heights.len() {
        format!("{} (and {} more)", list.join(", "), total - heights.len())
    } else {
        list.join(", ")
    }
}

/// One observed blob.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BlobSubmission {
    pub block_number: u64,
    pub tx_index: u32,
    pub blob_index: u32,
    pub rollup_label: String,
    pub stripped_size: u32,
}

impl BlobSubmission {
    pub fn is_unlabeled(&self) -> bool {
        self.rollup_label == UNLABELED
    }

    fn key(&self) -> (u64, u32, u32) {
        (self.block_number, self.tx_index, self.blob_index)
    }
}

/// Execution-layer context of one block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BlockContext {
    pub block_number: u64,
    pub timestamp: u64,
    pub base_fee_per_gas: u128,
    pub median_priority_fee: u128,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub real_blob_count: Option<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PricePoint {
    pub timestamp: u64,
    pub usd_per_eth: UsdPrice,
}

/// Contiguous, ascending run of block contexts indexed by height.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BlockTable {
    blocks: Vec<BlockContext>,
}

impl BlockTable {
    /// Builds a table from contexts in any order. Rejects duplicates and gaps.
    pub fn new(mut blocks: Vec<BlockContext>) -> Result<Self, IngestError> {
        blocks.sort_by_key(|b| b.block_number);
        let mut missing = Vec::new();
        for pair in blocks.windows(2) {
            let (prev, next) = (pair[0].block_number, pair[1].block_number);
            if prev == next {
                return Err(IngestError::DuplicateBlock {
                    line: 0,
                    block: prev,
                });
            }
            missing.extend(prev + 1..next);
        }
        if !missing.is_empty() {
            return Err(missing_error(missing));
        }
        Ok(Self { blocks })
    }

    pub fn first(&self) -> Option<u64> {
        self.blocks.first().map(|b| b.block_number)
    }

    pub fn last(&self) -> Option<u64> {
        self.blocks.last().map(|b| b.block_number)
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn get(&self, block: u64) -> Option<&BlockContext> {
        let first = self.first()?;
        let idx = block.checked_sub(first)?;
        self.blocks
            .get(usize::try_from(idx).ok()?)
            .filter(|b| b.block_number == block)
    }

    pub fn iter(&self) -> impl Iterator<Item = &BlockContext> {
        self.blocks.iter()
    }

    pub fn as_slice(&self) -> &[BlockContext] {
        &self.blocks
    }

    fn missing_between(&self, start: u64, end: u64) -> Vec<u64> {
        (start..=end).filter(|&b| self.get(b).is_none()).collect()
    }

    /// Errors with the missing heights unless every block in `start..=end` is present.
    pub fn check_covers(&self, start: u64, end: u64) -> Result<(), IngestError> {
        let missing = self.missing_between(start, end);
        if missing.is_empty() {
            Ok(())
        } else {
            Err(missing_error(missing))
        }
    }

    /// Errors with the missing heights unless every submission's block is present.
    pub fn check_submissions(&self, submissions: &[BlobSubmission]) -> Result<(), IngestError> {
        let mut missing: Vec<u64> = submissions
            .iter()
            .map(|s| s.block_number)
            .filter(|&b| self.get(b).is_none())
            .collect();
        missing.dedup();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(missing_error(missing))
        }
    }
}

fn missing_error(missing: Vec<u64>) -> IngestError {
    let total = missing.len();
    let heights = missing.into_iter().take(MAX_LISTED_HEIGHTS).collect();
    IngestError::MissingBlocks { heights, total }
}

/// ETH/USD price points with strictly ascending timestamps.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PriceSeries {
    points: Vec<PricePoint>,
}

impl PriceSeries {
    pub fn new(points: Vec<PricePoint>) -> Result<Self, IngestError> {
        for (i, p) in points.iter().enumerate() {
            let line = i as u64 + 2;
            if p.usd_per_eth.is_zero() {
                return Err(IngestError::NonPositivePrice { line });
            }
            if i > 0 && points[i - 1].timestamp >= p.timestamp {
                return Err(IngestError::NonAscendingPrice {
                    line,
                    timestamp: p.timestamp,
                    previous: points[i - 1].timestamp,
                });
            }
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[PricePoint] {
        &self.points
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Index of the point [`resolve_price`] selects for `timestamp`.
    pub fn index_at(&self, timestamp: u64) -> Result<usize, IngestError> {
        let first = self.points.first().ok_or(IngestError::EmptyPriceSeries)?;
        let after = self.points.partition_point(|p| p.timestamp <= timestamp);
        if after == 0 {
            return Err(IngestError::PriceBeforeSeries {
                timestamp,
                first: first.timestamp,
            });
        }
        Ok(after - 1)
    }
}

/// USD per ETH of the latest point at or before `timestamp`.
pub fn resolve_price(timestamp: u64, series: &PriceSeries) -> Result<UsdPrice, IngestError> {
    let idx = series.index_at(timestamp)?;
    Ok(series.points[idx].usd_per_eth)
}

/// Length of a raw blob once trailing zero padding is removed. Leading and
/// interior zeros are kept.
pub fn strip_padding(raw: &[u8]) -> Result<usize, IngestError> {
    if raw.len() != BLOB_SIZE {
        return Err(IngestError::WrongBlobLength {
            expected: BLOB_SIZE,
            actual: raw.len(),
        });
    }
    Ok(raw.iter().rposition(|&b| b != 0).map_or(0, |i| i + 1))
}

/// Accepts either the 131072 raw bytes or their `0x`-prefixed hex encoding.
pub fn parse_raw_blob(contents: &[u8]) -> Result<Vec<u8>, IngestError> {
    if contents.len() == BLOB_SIZE {
        return Ok(contents.to_vec());
    }
    let text = std::str::from_utf8(contents)
        .map_err(|_| {
            IngestError::BadRawBlob(format!("{} bytes of non-UTF-8 data", contents.len()))
        })?
        .trim();
    let digits = text
        .strip_prefix("0x")
        .or_else(|| text.strip_prefix("0X"))
        .ok_or_else(|| IngestError::BadRawBlob("missing 0x prefix".into()))?;
    if digits.len() != 2 * BLOB_SIZE {
        return Err(IngestError::BadRawBlob(format!(
            "expected {} hex digits, got {}",
            2 * BLOB_SIZE,
            digits.len()
        )));
    }
    hex::decode(digits).map_err(|e| IngestError::BadRawBlob(e.to_string()))
}

pub fn load_raw_blob(path: &Path) -> Result<Vec<u8>, IngestError> {
    let contents = std::fs::read(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_raw_blob(&contents)
}

fn open(path: &Path) -> Result<File, IngestError> {
    File::open(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn csv_reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(input)
}

fn check_header(found: &csv::StringRecord, expected: &[&str]) -> Result<(), IngestError> {
    if found.iter().eq(expected.iter().copied()) {
        Ok(())
    } else {
        Err(IngestError::Header {
            expected: expected.join(","),
            found: found.iter().collect::<Vec<_>>().join(","),
        })
    }
}

fn read_headers<R: Read>(rdr: &mut csv::Reader<R>) -> Result<csv::StringRecord, IngestError> {
    rdr.headers().cloned().map_err(|e| csv_error(e, None))
}

fn csv_error(err: csv::Error, headers: Option<&csv::StringRecord>) -> IngestError {
    let line = err.position().map_or(0, |p| p.line());
    let column = match err.kind() {
        csv::ErrorKind::Deserialize { err: de, .. } => de.field().map(|f| {
            headers
                .and_then(|h| h.get(f as usize))
                .map_or_else(|| f.to_string(), str::to_string)
        }),
        _ => None,
    };
    let message = match err.kind() {
        csv::ErrorKind::Deserialize { err: de, .. } => de.kind().to_string(),
        _ => err.to_string(),
    };
    IngestError::Malformed {
        line,
        column,
        message,
    }
}

/// Iterates typed rows, tagging each with its 1-based file line.
fn rows<R: Read, T: for<'de> Deserialize<'de>>(
    rdr: &mut csv::Reader<R>,
    headers: &csv::StringRecord,
) -> Result<Vec<(u64, T)>, IngestError> {
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_error(e, Some(headers)))?;
        let line = record.position().map_or(0, |p| p.line());
        let row: T = record
            .deserialize(Some(headers))
            .map_err(|e| csv_error(e, Some(headers)))?;
        out.push((line, row));
    }
    Ok(out)
}

#[derive(Deserialize)]
struct SubmissionRow {
    block_number: u64,
    tx_index: u32,
    blob_index: u32,
    rollup_label: String,
    stripped_size: u64,
}

/// Reads `submissions.csv` content, validates it and sorts by
/// `(block_number, tx_index, blob_index)`.
pub fn read_submissions<R: Read>(input: R) -> Result<Vec<BlobSubmission>, IngestError> {
    let mut rdr = csv_reader(input);
    let headers = read_headers(&mut rdr)?;
    check_header(&headers, &SUBMISSION_COLUMNS)?;
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (line, row) in rows::<_, SubmissionRow>(&mut rdr, &headers)? {
        if row.rollup_label.is_empty() {
            return Err(IngestError::EmptyLabel { line });
        }
        if row.stripped_size > BLOB_SIZE as u64 {
            return Err(IngestError::SizeOutOfRange {
                line,
                size: row.stripped_size,
            });
        }
        let sub = BlobSubmission {
            block_number: row.block_number,
            tx_index: row.tx_index,
            blob_index: row.blob_index,
            rollup_label: row.rollup_label,
            stripped_size: row.stripped_size as u32,
        };
        if !seen.insert(sub.key()) {
            return Err(IngestError::DuplicateSubmission {
                line,
                block: sub.block_number,
                tx_index: sub.tx_index,
                blob_index: sub.blob_index,
            });
        }
        out.push(sub);
    }
    out.sort_by_key(BlobSubmission::key);
    Ok(out)
}

pub fn load_submissions(path: &Path) -> Result<Vec<BlobSubmission>, IngestError> {
    read_submissions(open(path)?)
}

#[derive(Deserialize)]
struct BlockRow {
    block_number: u64,
    timestamp: u64,
    base_fee_per_gas: u128,
    median_priority_fee: u128,
    #[serde(default)]
    real_blob_count: Option<u64>,
}

pub fn read_blocks<R: Read>(input: R) -> Result<BlockTable, IngestError> {
    let mut rdr = csv_reader(input);
    let headers = read_headers(&mut rdr)?;
    let with_count: Vec<&str> = BLOCK_COLUMNS
        .iter()
        .copied()
        .chain([REAL_BLOB_COUNT_COLUMN])
        .collect();
    if headers.len() == with_count.len() {
        check_header(&headers, &with_count)?;
    } else {
        check_header(&headers, &BLOCK_COLUMNS)?;
    }
    let mut by_height = BTreeMap::new();
    for (line, row) in rows::<_, BlockRow>(&mut rdr, &headers)? {
        let real_blob_count = match row.real_blob_count {
            Some(c) if c > 6 => return Err(IngestError::BlobCountOutOfRange { line, count: c }),
            Some(c) => Some(c as u8),
            None => None,
        };
        let ctx = BlockContext {
            block_number: row.block_number,
            timestamp: row.timestamp,
            base_fee_per_gas: row.base_fee_per_gas,
            median_priority_fee: row.median_priority_fee,
            real_blob_count,
        };
        if by_height.insert(ctx.block_number, ctx).is_some() {
            return Err(IngestError::DuplicateBlock {
                line,
                block: ctx.block_number,
            });
        }
    }
    BlockTable::new(by_height.into_values().collect())
}

pub fn load_blocks(path: &Path) -> Result<BlockTable, IngestError> {
    read_blocks(open(path)?)
}

#[derive(Deserialize)]
struct PriceRow {
    timestamp: u64,
    usd_per_eth: String,
}

pub fn read_prices<R: Read>(input: R) -> Result<PriceSeries, IngestError> {
    let mut rdr = csv_reader(input);
    let headers = read_headers(&mut rdr)?;
    check_header(&headers, &PRICE_COLUMNS)?;
    let mut points: Vec<PricePoint> = Vec::new();
    for (line, row) in rows::<_, PriceRow>(&mut rdr, &headers)? {
        let usd_per_eth: UsdPrice =
            row.usd_per_eth
                .parse()
                .map_err(|e: crate::money::ParsePriceError| IngestError::Malformed {
                    line,
                    column: Some("usd_per_eth".into()),
                    message: e.to_string(),
                })?;
        if usd_per_eth.is_zero() {
            return Err(IngestError::NonPositivePrice { line });
        }
        if let Some(prev) = points.last() {
            if prev.timestamp >= row.timestamp {
                return Err(IngestError::NonAscendingPrice {
                    line,
                    timestamp: row.timestamp,
                    previous: prev.timestamp,
                });
            }
        }
        points.push(PricePoint {
            timestamp: row.timestamp,
            usd_per_eth,
        });
    }
    PriceSeries::new(points)
}

pub fn load_prices(path: &Path) -> Result<PriceSeries, IngestError> {
    read_prices(open(path)?)
}

fn write_err(e: impl std::fmt::Display) -> std::io::Error {
    std::io::Error::other(e.to_string())
}

pub fn write_submissions<W: Write>(out: W, submissions: &[BlobSubmission]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUBMISSION_COLUMNS).map_err(write_err)?;
    for s in submissions {
        w.write_record([
            s.block_number.to_string(),
            s.tx_index.to_string(),
            s.blob_index.to_string(),
            s.rollup_label.clone(),
            s.stripped_size.to_string(),
        ])
        .map_err(write_err)?;
    }
    w.flush()
}

/// Writes `blocks.csv`; the `real_blob_count` column is emitted only when
/// every block carries one.
pub fn write_blocks<W: Write>(out: W, blocks: &BlockTable) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let with_count = !blocks.is_empty() && blocks.iter().all(|b| b.real_blob_count.is_some());
    let mut header: Vec<&str> = BLOCK_COLUMNS.to_vec();
    if with_count {
        header.push(REAL_BLOB_COUNT_COLUMN);
    }
    w.write_record(&header).map_err(write_err)?;
    for b in blocks.iter() {
        let mut rec = vec![
            b.block_number.to_string(),
            b.timestamp.to_string(),
            b.base_fee_per_gas.to_string(),
            b.median_priority_fee.to_string(),
        ];
        if with_count {
            rec.push(b.real_blob_count.unwrap_or(0).to_string());
        }
        w.write_record(&rec).map_err(write_err)?;
    }
    w.flush()
}

pub fn write_prices<W: Write>(out: W, prices: &PriceSeries) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(PRICE_COLUMNS).map_err(write_err)?;
    for p in prices.points() {
        w.write_record([p.timestamp.to_string(), p.usd_per_eth.to_string()])
            .map_err(write_err)?;
    }
    w.flush()
}
