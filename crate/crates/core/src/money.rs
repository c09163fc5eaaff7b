//! Fixed-point USD prices, exact USD accumulators and half-up decimal
//! formatting shared by the report writers.

use std::fmt;
use std::ops::{Add, AddAssign};
use std::str::FromStr;

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Fractional digits kept for ETH/USD prices.
pub const PRICE_DECIMALS: u32 = 8;
const PRICE_SCALE: u64 = 100_000_000;
const WEI_PER_ETH_DIGITS: u32 = 18;

/// USD per ETH, stored as an integer count of 1e-8 USD.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct UsdPrice(u64);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid USD price {0:?}")]
pub struct ParsePriceError(pub String);

impl UsdPrice {
    pub const fn from_units(units: u64) -> Self {
        Self(units)
    }

    pub const fn units(self) -> u64 {
        self.0
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }
}

impl FromStr for UsdPrice {
    type Err = ParsePriceError;

    /// Accepts `123`, `123.4`, `123.456789012`; digits past the eighth
    /// fractional place are rounded half-up.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParsePriceError(s.to_string());
        let t = s.trim();
        let (int_part, frac_part) = match t.split_once('.') {
            Some((i, f)) => (i, f),
            None => (t, ""),
        };
        if int_part.is_empty() && frac_part.is_empty() {
            return Err(err());
        }
        if !int_part.bytes().all(|b| b.is_ascii_digit())
            || !frac_part.bytes().all(|b| b.is_ascii_digit())
        {
            return Err(err());
        }
        let int: u64 = if int_part.is_empty() {
            0
        } else {
            int_part.parse().map_err(|_| err())?
        };
        let mut frac: u64 = 0;
        let digits = frac_part.as_bytes();
        for i in 0..PRICE_DECIMALS as usize {
            frac = frac * 10 + digits.get(i).map_or(0, |d| u64::from(d - b'0'));
        }
        if digits.len() > PRICE_DECIMALS as usize && digits[PRICE_DECIMALS as usize] >= b'5' {
            frac += 1;
        }
        int.checked_mul(PRICE_SCALE)
            .and_then(|v| v.checked_add(frac))
            .map(UsdPrice)
            .ok_or_else(err)
    }
}

impl fmt::Display for UsdPrice {
    /// Shortest form with at least two fractional digits.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let int = self.0 / PRICE_SCALE;
        let frac = format!("{:08}", self.0 % PRICE_SCALE);
        let trimmed = frac.trim_end_matches('0');
        let frac = if trimmed.len() < 2 {
            &frac[..2]
        } else {
            trimmed
        };
        write!(f, "{int}.{frac}")
    }
}

impl Serialize for UsdPrice {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for UsdPrice {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(d)?;
        raw.parse().map_err(serde::de::Error::custom)
    }
}

/// Exact USD amount in units of 1e-26 USD (wei times price units).
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct UsdAmount(BigUint);

impl UsdAmount {
    pub fn zero() -> Self {
        Self(BigUint::zero())
    }

    /// Value of `wei` at `price`.
    pub fn from_wei(wei: u128, price: UsdPrice) -> Self {
        Self(BigUint::from(wei) * BigUint::from(price.0))
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    /// Rounded half-up to whole cents.
    pub fn cents(&self) -> BigUint {
        let unit = BigUint::from(10u32).pow(WEI_PER_ETH_DIGITS + PRICE_DECIMALS - 2);
        round_half_up(&self.0, &unit)
    }

    /// Lossy conversion for charting and comparisons.
    pub fn to_f64(&self) -> f64 {
        let cents = self.cents();
        cents.to_f64().unwrap_or(f64::INFINITY) / 100.0
    }
}

impl Add for UsdAmount {
    type Output = UsdAmount;

    fn add(self, rhs: Self) -> Self::Output {
        UsdAmount(self.0 + rhs.0)
    }
}

impl AddAssign<&UsdAmount> for UsdAmount {
    fn add_assign(&mut self, rhs: &UsdAmount) {
        self.0 += &rhs.0;
    }
}

impl fmt::Display for UsdAmount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (whole, cents) = self.cents().div_rem(&BigUint::from(100u32));
        write!(f, "{whole}.{:02}", cents.to_u32().unwrap_or(0))
    }
}

fn round_half_up(num: &BigUint, den: &BigUint) -> BigUint {
    let (q, r) = num.div_rem(den);
    if r * 2u32 >= *den {
        q + 1u32
    } else {
        q
    }
}

/// Formats `num / den` with `decimals` fractional digits, rounding half-up.
pub fn format_ratio(num: u128, den: u128, decimals: u32) -> String {
    assert!(den > 0, "format_ratio with zero denominator");
    let scale = BigUint::from(10u32).pow(decimals);
    let scaled = round_half_up(&(BigUint::from(num) * &scale), &BigUint::from(den));
    if decimals == 0 {
        return scaled.to_string();
    }
    let (whole, frac) = scaled.div_rem(&scale);
    format!("{whole}.{:0width$}", frac, width = decimals as usize)
}

/// Formats a non-negative float to `decimals` places, rounding half-up.
pub fn format_f64(value: f64, decimals: i32) -> String {
    let scale = 10f64.powi(decimals);
    let rounded = (value * scale + 0.5).floor() / scale;
    format!("{rounded:.prec$}", prec = decimals as usize)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn price_parse_and_display() {
        let p: UsdPrice = "2000".parse().unwrap();
        assert_eq!(p.units(), 200_000_000_000);
        assert_eq!(p.to_string(), "2000.00");
        assert_eq!(
            "3456.123456789".parse::<UsdPrice>().unwrap().to_string(),
            "3456.12345679"
        );
        assert_eq!("0.5".parse::<UsdPrice>().unwrap().to_string(), "0.50");
        assert_eq!(
            "2500.125".parse::<UsdPrice>().unwrap().to_string(),
            "2500.125"
        );
        assert!("-1".parse::<UsdPrice>().is_err());
        assert!("1e3".parse::<UsdPrice>().is_err());
        assert!("".parse::<UsdPrice>().is_err());
        assert!("1,5".parse::<UsdPrice>().is_err());
    }

    #[test]
    fn usd_amount_rounding() {
        let price: UsdPrice = "2000".parse().unwrap();
        // 1 ETH at $2000
        assert_eq!(
            UsdAmount::from_wei(1_000_000_000_000_000_000, price).to_string(),
            "2000.00"
        );
        // 0.0000025 ETH = $0.005 rounds up to one cent
        assert_eq!(
            UsdAmount::from_wei(2_500_000_000_000, price).to_string(),
            "0.01"
        );
        assert_eq!(
            UsdAmount::from_wei(2_499_999_999_999, price).to_string(),
            "0.00"
        );
        assert_eq!(UsdAmount::zero().to_string(), "0.00");
    }

    #[test]
    fn ratio_formatting() {
        assert_eq!(format_ratio(12651, 12800, 4), "0.9884");
        assert_eq!(format_ratio(1, 8, 2), "0.13");
        assert_eq!(format_ratio(5, 1, 2), "5.00");
        assert_eq!(format_ratio(7, 2, 0), "4");
    }

    #[test]
    fn float_formatting() {
        assert_eq!(format_f64(0.5, 3), "0.500");
        assert_eq!(format_f64(0.30851, 3), "0.309");
        assert_eq!(format_f64(1.0, 3), "1.000");
    }
}
