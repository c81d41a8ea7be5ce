//! Exact rational arithmetic helpers shared across the crate.
//!
//! All solver-side quantities are `BigRational`; floats appear only in the
//! simulator and at serialization boundaries with explicit precision.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

pub type Rat = BigRational;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RatParseError {
    #[error("invalid rational literal {0:?}")]
    Invalid(String),
    #[error("zero denominator in {0:?}")]
    ZeroDenominator(String),
}

/// `n/d` as an exact rational.
pub fn rat(n: i64, d: i64) -> Rat {
    Rat::new(BigInt::from(n), BigInt::from(d))
}

/// Integer-valued rational.
pub fn rat_int(n: i64) -> Rat {
    Rat::from_integer(BigInt::from(n))
}

/// Parses `"p"` or `"p/q"` (optionally signed) into a reduced rational.
pub fn parse_rat(text: &str) -> Result<Rat, RatParseError> {
    let s = text.trim();
    let (num, den) = match s.split_once('/') {
        Some((n, d)) => (n.trim(), d.trim()),
        None => (s, "1"),
    };
    let n: BigInt = num
        .parse()
        .map_err(|_| RatParseError::Invalid(text.to_string()))?;
    let d: BigInt = den
        .parse()
        .map_err(|_| RatParseError::Invalid(text.to_string()))?;
    if d.is_zero() {
        return Err(RatParseError::ZeroDenominator(text.to_string()));
    }
    Ok(Rat::new(n, d))
}

/// Renders a rational as `"p"` when integral, otherwise `"p/q"`. Parsing
/// the result with [`parse_rat`] round-trips exactly.
pub fn format_rat(r: &Rat) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Nearest `f64`, for rendering and simulator comparisons.
pub fn rat_to_f64(r: &Rat) -> f64 {
    r.to_f64().unwrap_or_else(|| {
        // Out-of-range magnitudes only; sign still meaningful.
        if r.is_negative() {
            f64::NEG_INFINITY
        } else {
            f64::INFINITY
        }
    })
}

/// Number of significant digits carried by serialized float renderings.
pub const FLOAT_SIG_DIGITS: usize = 12;

/// `f64` rendering rounded to [`FLOAT_SIG_DIGITS`] significant digits.
pub fn rat_to_f64_rounded(r: &Rat) -> f64 {
    let x = rat_to_f64(r);
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{:.*e}", FLOAT_SIG_DIGITS - 1, x)
        .parse()
        .unwrap_or(x)
}
