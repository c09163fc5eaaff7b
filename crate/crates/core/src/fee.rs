//! EIP-4844 blob fee market: the excess-blob-gas accumulator and the
//! integer `fake_exponential` that prices blob gas.

use num_bigint::BigUint;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Gas consumed by one blob (equal to its byte size).
pub const GAS_PER_BLOB: u64 = 1 << 17;
/// Target blob gas per block: three blobs.
pub const TARGET_BLOB_GAS_PER_BLOCK: u64 = 3 * GAS_PER_BLOB;
/// Minimum blob base fee in wei.
pub const MIN_BLOB_BASE_FEE: u128 = 1;
/// Controls the maximum rate of change of the blob base fee.
pub const BLOB_BASE_FEE_UPDATE_FRACTION: u64 = 3_338_477;
/// Cancun blob cap per block.
pub const MAX_BLOBS_PER_BLOCK: u8 = 6;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FeeError {
    #[error("fake_exponential denominator must be positive")]
    ZeroDenominator,
    #[error("fake_exponential result does not fit in 128 bits")]
    Overflow,
    #[error("block carries {count} blobs, above the cap of {max}")]
    TooManyBlobs { count: u32, max: u8 },
    #[error("invalid fee parameters: {0}")]
    InvalidParams(String),
}

/// Fee-market constants. Defaults are the Cancun mainnet values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeeParams {
    pub min_blob_base_fee: u128,
    pub update_fraction: u64,
    pub gas_per_blob: u64,
    pub target_blob_gas: u64,
    pub max_blobs_per_block: u8,
}

impl Default for FeeParams {
    fn default() -> Self {
        Self {
            min_blob_base_fee: MIN_BLOB_BASE_FEE,
            update_fraction: BLOB_BASE_FEE_UPDATE_FRACTION,
            gas_per_blob: GAS_PER_BLOB,
            target_blob_gas: TARGET_BLOB_GAS_PER_BLOCK,
            max_blobs_per_block: MAX_BLOBS_PER_BLOCK,
        }
    }
}

impl FeeParams {
    pub fn validate(&self) -> Result<(), FeeError> {
        if self.min_blob_base_fee < 1 {
            return Err(FeeError::InvalidParams(
                "min_blob_base_fee must be >= 1".into(),
            ));
        }
        if self.update_fraction == 0 {
            return Err(FeeError::InvalidParams(
                "update_fraction must be > 0".into(),
            ));
        }
        if self.gas_per_blob == 0 {
            return Err(FeeError::InvalidParams("gas_per_blob must be > 0".into()));
        }
        if self.max_blobs_per_block == 0 {
            return Err(FeeError::InvalidParams(
                "max_blobs_per_block must be > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Excess blob gas carried from one block to the next.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct FeeState {
    pub excess_blob_gas: u64,
}

impl FeeState {
    pub const fn new(excess_blob_gas: u64) -> Self {
        Self { excess_blob_gas }
    }
}

/// Folds one block's blob count into the accumulator:
/// `max(0, excess + blob_count * G - T)`.
pub fn advance(state: FeeState, blob_count: u32, params: &FeeParams) -> Result<FeeState, FeeError> {
    if blob_count > u32::from(params.max_blobs_per_block) {
        return Err(FeeError::TooManyBlobs {
            count: blob_count,
            max: params.max_blobs_per_block,
        });
    }
    let used = u64::from(blob_count) * params.gas_per_blob;
    let excess = state
        .excess_blob_gas
        .saturating_add(used)
        .saturating_sub(params.target_blob_gas);
    Ok(FeeState::new(excess))
}

/// Blob base fee (wei per blob gas) for a block entering with `state`.
///
/// Saturates at `u128::MAX` if the exponential leaves the 128-bit range, which
/// only happens after thousands of consecutive over-target blocks.
pub fn blob_base_fee(state: FeeState, params: &FeeParams) -> u128 {
    fake_exponential(
        params.min_blob_base_fee,
        u128::from(state.excess_blob_gas),
        u128::from(params.update_fraction),
    )
    .unwrap_or(u128::MAX)
}

/// Approximates `factor * e^(numerator / denominator)` with the protocol's
/// truncated Taylor series.
///
/// Runs in `u128` and switches to arbitrary precision the moment an
/// intermediate product would overflow, so the result is always the exact
/// series value.
pub fn fake_exponential(
    factor: u128,
    numerator: u128,
    denominator: u128,
) -> Result<u128, FeeError> {
    if denominator == 0 {
        return Err(FeeError::ZeroDenominator);
    }
    match fake_exponential_u128(factor, numerator, denominator) {
        Some(v) => Ok(v),
        None => fake_exponential_big(factor, numerator, denominator)
            .and_then(|v| v.to_u128())
            .ok_or(FeeError::Overflow),
    }
}

fn fake_exponential_u128(factor: u128, numerator: u128, denominator: u128) -> Option<u128> {
    let mut i: u128 = 1;
    let mut output: u128 = 0;
    let mut accum = factor.checked_mul(denominator)?;
    while accum > 0 {
        output = output.checked_add(accum)?;
        accum = accum.checked_mul(numerator)? / denominator.checked_mul(i)?;
        i += 1;
    }
    Some(output / denominator)
}

/// Returns `None` once the partial sum proves the result exceeds `u128::MAX`;
/// every term is non-negative, so the sum only grows.
fn fake_exponential_big(factor: u128, numerator: u128, denominator: u128) -> Option<BigUint> {
    let numerator = BigUint::from(numerator);
    let denominator = BigUint::from(denominator);
    let limit = (BigUint::from(u128::MAX) + 1u32) * &denominator;
    let mut i = BigUint::from(1u32);
    let mut output = BigUint::zero();
    let mut accum = BigUint::from(factor) * &denominator;
    while !accum.is_zero() {
        output += &accum;
        if output >= limit {
            return None;
        }
        accum = accum * &numerator / (&denominator * &i);
        i += 1u32;
    }
    Some(output / denominator)
}

/// One block of a replayed fee series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeePoint {
    pub block_number: u64,
    pub blob_count: u32,
    /// State entering the block (built from blocks before it).
    pub entering: FeeState,
    /// Blob base fee charged inside the block.
    pub blob_base_fee: u128,
}

/// Replays per-block blob counts starting at `first_block`. The fee for each
/// block comes from the state entering it.
pub fn replay_fee_series(
    first_block: u64,
    counts: &[u32],
    initial: FeeState,
    params: &FeeParams,
) -> Result<Vec<FeePoint>, FeeError> {
    let mut state = initial;
    let mut out = Vec::with_capacity(counts.len());
    for (offset, &count) in counts.iter().enumerate() {
        let fee = blob_base_fee(state, params);
        out.push(FeePoint {
            block_number: first_block + offset as u64,
            blob_count: count,
            entering: state,
            blob_base_fee: fee,
        });
        state = advance(state, count, params)?;
    }
    Ok(out)
}
