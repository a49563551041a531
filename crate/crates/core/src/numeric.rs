//! Exact quantities.
//!
//! Amounts of money and carbon are carried as arbitrary-precision rationals
//! so that sums, netting and offsets are exact and independent of summation
//! order. Inputs arrive as decimal strings; output is rounded only when
//! formatted.

use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rust_decimal::Decimal;

use crate::error::{Error, Result};

/// Exact signed quantity (currency units or tCO2e).
pub type Quantity = BigRational;

pub fn zero() -> Quantity {
    Quantity::zero()
}

pub fn from_int(n: i64) -> Quantity {
    Quantity::from_integer(BigInt::from(n))
}

pub fn from_decimal(d: Decimal) -> Quantity {
    let numer = BigInt::from(d.mantissa());
    let denom = BigInt::from(10u8).pow(d.scale());
    Quantity::new(numer, denom)
}

/// Converts a finite float without rounding (every finite f64 is a dyadic
/// rational).
pub fn from_f64(x: f64) -> Option<Quantity> {
    Quantity::from_float(x)
}

pub fn to_f64(q: &Quantity) -> f64 {
    q.to_f64().unwrap_or(f64::NAN)
}

/// Parses a plain decimal string (no exponent).
pub fn parse_decimal(field: &str, text: &str) -> Result<Quantity> {
    let trimmed = text.trim();
    if trimmed.contains(['e', 'E']) {
        return Err(Error::InvalidValue {
            field: field.to_string(),
            message: format!("`{trimmed}`: exponent notation not accepted"),
        });
    }
    Decimal::from_str(trimmed)
        .map(from_decimal)
        .map_err(|e| Error::InvalidValue {
            field: field.to_string(),
            message: format!("`{trimmed}`: {e}"),
        })
}

/// Serde adapter for decimals written as JSON strings in plain notation.
pub mod decimal_str {
    use rust_decimal::Decimal;
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(value: &Decimal, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&value.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Decimal, D::Error> {
        let text = String::deserialize(d)?;
        let trimmed = text.trim();
        if trimmed.is_empty() || trimmed.contains(['e', 'E']) || trimmed != text {
            return Err(de::Error::custom(format!("invalid decimal `{text}`")));
        }
        trimmed
            .parse::<Decimal>()
            .map_err(|e| de::Error::custom(format!("invalid decimal `{text}`: {e}")))
    }
}

/// Formats `q` rounded half away from zero to at most `places` decimals,
/// trailing zeros trimmed, never in exponent form.
pub fn format_fixed(q: &Quantity, places: u32) -> String {
    let scale = BigInt::from(10u8).pow(places);
    let scaled = (q * Quantity::from_integer(scale.clone()))
        .round()
        .to_integer();
    let negative = scaled.is_negative();
    let digits = scaled.abs().to_string();
    let places = places as usize;
    let (int_part, frac_part) = if digits.len() > places {
        let split = digits.len() - places;
        (digits[..split].to_string(), digits[split..].to_string())
    } else {
        ("0".to_string(), format!("{digits:0>places$}"))
    };
    let frac = frac_part.trim_end_matches('0');
    let mut out = String::new();
    if negative {
        out.push('-');
    }
    out.push_str(&int_part);
    if !frac.is_empty() {
        out.push('.');
        out.push_str(frac);
    }
    out
}

/// True when `q` has a terminating decimal expansion.
pub fn is_terminating(q: &Quantity) -> bool {
    let mut d = q.denom().clone();
    for p in [2u8, 5u8] {
        let p = BigInt::from(p);
        while (&d % &p).is_zero() {
            d /= &p;
        }
    }
    d.is_one()
}
