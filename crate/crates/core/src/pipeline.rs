//! End-to-end runs: load inputs, reconstruct, simulate, account and write
//! the report files.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::config::{ConfigError, RunConfig};
use crate::fee::FeePoint;
use crate::ingest::{self, BlobSubmission, BlockTable, IngestError, PriceSeries};
use crate::metrics::{
    self, CostLedger, MetricsError, RollupReport, Table1Row, UsageStats, BUCKET_SIZE,
};
use crate::reconstruct::{ProductionSchedule, ReconstructError};
use crate::sim::{self, SimError, SimEvent, SimOptions, SimResult};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Reconstruct(#[from] ReconstructError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl PipelineError {
    /// True for file-system failures, as opposed to invalid data.
    pub fn is_io(&self) -> bool {
        match self {
            PipelineError::Config(e) => e.is_io(),
            PipelineError::Ingest(e) => e.is_io(),
            PipelineError::Write { .. } => true,
            _ => false,
        }
    }
}

/// Validated inputs for one window.
#[derive(Debug, Clone)]
pub struct Inputs {
    pub submissions: Vec<BlobSubmission>,
    pub blocks: BlockTable,
    pub prices: PriceSeries,
    pub start_block: u64,
    pub end_block: u64,
}

impl Inputs {
    /// Checks that the block table covers the window. Submissions outside the
    /// window are kept but ignored downstream.
    pub fn new(
        submissions: Vec<BlobSubmission>,
        blocks: BlockTable,
        prices: PriceSeries,
        start_block: u64,
        end_block: u64,
    ) -> Result<Self, PipelineError> {
        blocks.check_covers(start_block, end_block)?;
        Ok(Self {
            submissions,
            blocks,
            prices,
            start_block,
            end_block,
        })
    }

    pub fn load(cfg: &RunConfig) -> Result<Self, PipelineError> {
        let submissions = ingest::load_submissions(&cfg.submissions)?;
        let blocks = ingest::load_blocks(&cfg.blocks)?;
        let prices = ingest::load_prices(&cfg.prices)?;
        Self::new(submissions, blocks, prices, cfg.start_block, cfg.end_block)
    }

    /// Blocks only; enough for the fee commands.
    pub fn load_without_prices(cfg: &RunConfig) -> Result<Self, PipelineError> {
        let submissions = ingest::load_submissions(&cfg.submissions)?;
        let blocks = ingest::load_blocks(&cfg.blocks)?;
        Self::new(
            submissions,
            blocks,
            PriceSeries::default(),
            cfg.start_block,
            cfg.end_block,
        )
    }

    pub fn usage(&self) -> std::collections::BTreeMap<String, UsageStats> {
        metrics::usage_by_label(&self.submissions, self.start_block, self.end_block)
    }
}

/// Observed statistics: Table 1 and the real fee series.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub table1: Vec<Table1Row>,
    pub real_fees: Vec<FeePoint>,
}

pub fn analyze(inputs: &Inputs, cfg: &RunConfig) -> Result<Analysis, PipelineError> {
    let table1 = metrics::table1_rows(&inputs.usage());
    let real_fees = metrics::real_fee_series(
        &inputs.submissions,
        &inputs.blocks,
        inputs.start_block,
        inputs.end_block,
        &cfg.fee,
    )?;
    Ok(Analysis { table1, real_fees })
}

/// Shared-blob simulation next to the observed baseline.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub real_fees: Vec<FeePoint>,
    pub sim: SimResult,
    pub real_ledger: CostLedger,
    pub sim_ledger: CostLedger,
    pub table2: Vec<RollupReport>,
}

/// Blob slots each real block leaves to the sharing cohort: every real blob
/// not carried by a labeled rollup keeps its slot.
pub fn non_cohort_counts(
    submissions: &[BlobSubmission],
    real_counts: &[u32],
    start: u64,
    end: u64,
) -> Vec<u32> {
    let mut out = real_counts.to_vec();
    for s in submissions
        .iter()
        .filter(|s| !s.is_unlabeled() && (start..=end).contains(&s.block_number))
    {
        out[(s.block_number - start) as usize] -= 1;
    }
    out
}

/// Runs only the fee-relevant part of the pipeline (no prices needed).
pub fn simulate_schedule(
    inputs: &Inputs,
    cfg: &RunConfig,
) -> Result<(Vec<FeePoint>, SimResult), PipelineError> {
    let (start, end) = (inputs.start_block, inputs.end_block);
    let real_counts = metrics::real_blob_counts(&inputs.submissions, &inputs.blocks, start, end)?;
    let real_fees =
        crate::fee::replay_fee_series(start, &real_counts, Default::default(), &cfg.fee)
            .map_err(MetricsError::from)?;
    let schedule = ProductionSchedule::from_submissions(&inputs.submissions, start, end)?;
    let unlabeled = non_cohort_counts(&inputs.submissions, &real_counts, start, end);
    let sim = sim::run(
        &schedule,
        start,
        end,
        &unlabeled,
        &cfg.fee,
        SimOptions {
            include_flush: cfg.include_flush,
        },
    )?;
    Ok((real_fees, sim))
}

pub fn simulate(inputs: &Inputs, cfg: &RunConfig) -> Result<Simulation, PipelineError> {
    let (real_fees, sim) = simulate_schedule(inputs, cfg)?;
    let real_ledger = metrics::real_cost(
        &inputs.submissions,
        &real_fees,
        &inputs.blocks,
        &inputs.prices,
        &cfg.fee,
        cfg.da_tx_gas,
    )?;
    let sim_ledger = metrics::sim_cost(
        &sim,
        &inputs.blocks,
        &inputs.prices,
        &cfg.fee,
        cfg.da_tx_gas,
    )?;
    let table2 = metrics::table2_rows(&inputs.usage(), &real_ledger, &sim, &sim_ledger);
    Ok(Simulation {
        real_fees,
        sim,
        real_ledger,
        sim_ledger,
        table2,
    })
}

/// One line of the event log.
#[derive(Debug, Clone, Serialize)]
pub struct EventRecord<'a> {
    pub block: u64,
    #[serde(rename = "virtual")]
    pub is_virtual: bool,
    pub unlabeled: u32,
    pub shared: Vec<BlobRecord<'a>>,
    pub excess_blob_gas: u64,
    pub blob_base_fee: u128,
    pub tx_submitted: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct BlobRecord<'a> {
    pub seq: u64,
    pub seal_block: u64,
    pub flush: bool,
    pub entries: Vec<EntryRecord<'a>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EntryRecord<'a> {
    pub rollup: &'a str,
    pub payload_bytes: u32,
    pub wire_bytes: u64,
}

pub fn event_record<'a>(event: &SimEvent, labels: &'a [String]) -> EventRecord<'a> {
    EventRecord {
        block: event.block_number,
        is_virtual: event.is_virtual,
        unlabeled: event.unlabeled,
        shared: event
            .shared
            .iter()
            .map(|b| BlobRecord {
                seq: b.seq,
                seal_block: b.seal_block,
                flush: b.flush,
                entries: b
                    .entries
                    .iter()
                    .map(|e| EntryRecord {
                        rollup: &labels[e.rollup],
                        payload_bytes: e.payload_len,
                        wire_bytes: e.wire_len(),
                    })
                    .collect(),
            })
            .collect(),
        excess_blob_gas: event.entering.excess_blob_gas,
        blob_base_fee: event.blob_base_fee,
        tx_submitted: event.tx_submitted,
    }
}

/// Writes one JSON object per event.
pub fn write_event_log<W: Write>(mut out: W, sim: &SimResult) -> std::io::Result<()> {
    for event in &sim.events {
        serde_json::to_writer(&mut out, &event_record(event, &sim.labels))?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

fn write_file(
    dir: &Path,
    name: &str,
    body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
) -> Result<PathBuf, PipelineError> {
    let path = dir.join(name);
    let wrap = |source| PipelineError::Write {
        path: path.clone(),
        source,
    };
    let file = File::create(&path).map_err(wrap)?;
    let mut w = BufWriter::new(file);
    body(&mut w).and_then(|()| w.flush()).map_err(wrap)?;
    Ok(path)
}

fn csv_io(e: csv::Error) -> std::io::Error {
    std::io::Error::other(e)
}

fn ensure_dir(dir: &Path) -> Result<(), PipelineError> {
    fs::create_dir_all(dir).map_err(|source| PipelineError::Write {
        path: dir.to_path_buf(),
        source,
    })
}

/// `analyze`: writes `table1.csv` and `real_fees.csv`.
pub fn cmd_analyze(cfg: &RunConfig) -> Result<Vec<PathBuf>, PipelineError> {
    let inputs = Inputs::load_without_prices(cfg)?;
    let analysis = analyze(&inputs, cfg)?;
    ensure_dir(&cfg.out_dir)?;
    Ok(vec![
        write_file(&cfg.out_dir, "table1.csv", |w| {
            metrics::write_table1(w, &analysis.table1).map_err(csv_io)
        })?,
        write_file(&cfg.out_dir, "real_fees.csv", |w| {
            metrics::write_fee_points(w, &analysis.real_fees).map_err(csv_io)
        })?,
    ])
}

/// `simulate`: writes `table2.csv`, `cost_breakdown.csv`, `sim_fees.csv` and
/// optionally `events.jsonl`.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<Vec<PathBuf>, PipelineError> {
    let inputs = Inputs::load(cfg)?;
    let run = simulate(&inputs, cfg)?;
    ensure_dir(&cfg.out_dir)?;
    let mut written = vec![
        write_file(&cfg.out_dir, "table2.csv", |w| {
            metrics::write_table2(w, &run.table2).map_err(csv_io)
        })?,
        write_file(&cfg.out_dir, "cost_breakdown.csv", |w| {
            metrics::write_cost_breakdown(w, &run.table2).map_err(csv_io)
        })?,
        write_file(&cfg.out_dir, "sim_fees.csv", |w| {
            metrics::write_fee_points(w, &run.sim.fee_series()).map_err(csv_io)
        })?,
    ];
    if cfg.event_log {
        written.push(write_file(&cfg.out_dir, "events.jsonl", |w| {
            write_event_log(w, &run.sim)
        })?);
    }
    Ok(written)
}

/// `fees`: writes `fee_series.csv` (real against simulated, per block) and
/// `buckets.csv`.
pub fn cmd_fees(cfg: &RunConfig) -> Result<Vec<PathBuf>, PipelineError> {
    let inputs = Inputs::load_without_prices(cfg)?;
    let (real, sim) = simulate_schedule(&inputs, cfg)?;
    let sim_series = sim.fee_series();
    let compare = metrics::fee_series_compare(&real, &sim_series)?;
    let counts = |s: &[FeePoint]| s.iter().map(|p| p.blob_count).collect::<Vec<_>>();
    let real_buckets = metrics::bucket_counts(inputs.start_block, &counts(&real), BUCKET_SIZE);
    let sim_buckets = metrics::bucket_counts(inputs.start_block, &counts(&sim_series), BUCKET_SIZE);
    ensure_dir(&cfg.out_dir)?;
    Ok(vec![
        write_file(&cfg.out_dir, "fee_series.csv", |w| {
            metrics::write_fee_compare(w, &compare).map_err(csv_io)
        })?,
        write_file(&cfg.out_dir, "buckets.csv", |w| {
            metrics::write_buckets(w, &real_buckets, &sim_buckets).map_err(csv_io)
        })?,
    ])
}

/// `strip`: stripped size of a raw blob file.
pub fn cmd_strip(path: &Path) -> Result<usize, PipelineError> {
    let raw = ingest::load_raw_blob(path)?;
    Ok(ingest::strip_padding(&raw)?)
}
