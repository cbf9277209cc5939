//! Exact multivariate polynomials over the rationals.
//!
//! Every coefficient function in this crate lives here, so identity checks
//! reduce to structural zero tests on [`Polynomial`] values.

mod polynomial;

pub use polynomial::{CompiledPolynomial, Monomial, Polynomial};

use std::sync::Arc;

use num_bigint::BigInt;
use num_traits::{One, ToPrimitive, Zero};
use thiserror::Error;

/// Exact rational number, always kept in lowest terms with positive denominator.
pub type Rational = num_rational::BigRational;

/// Ordered list of coordinate symbols shared by polynomials of one chart.
pub type Vars = Arc<[String]>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SymError {
    #[error("unknown symbol `{0}`")]
    UnknownSymbol(String),
    #[error("substitution for `{symbol}` has degree {degree}; only affine images are allowed")]
    NonAffine { symbol: String, degree: u32 },
    #[error("no substitution given for `{0}`")]
    MissingSubstitution(String),
    #[error("missing coordinate `{0}`")]
    MissingCoordinate(String),
    #[error("cannot parse rational from `{0}`")]
    Parse(String),
}

/// `n / d` as a [`Rational`]. Panics if `d == 0`.
pub fn rat(n: i64, d: i64) -> Rational {
    Rational::new(BigInt::from(n), BigInt::from(d))
}

pub fn int(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

pub fn vars<S: AsRef<str>>(names: &[S]) -> Vars {
    names.iter().map(|s| s.as_ref().to_string()).collect()
}

pub fn to_f64(r: &Rational) -> f64 {
    // BigRational::to_f64 handles large numerators and denominators
    r.to_f64().unwrap_or_else(|| {
        let n = r.numer().to_f64().unwrap_or(f64::NAN);
        let d = r.denom().to_f64().unwrap_or(f64::NAN);
        n / d
    })
}

pub fn is_integer(r: &Rational) -> bool {
    r.denom().is_one()
}

/// Parses `"3"`, `"-2/5"` or a decimal literal such as `"0.25"`.
pub fn parse_rational(text: &str) -> Result<Rational, SymError> {
    let t = text.trim();
    let err = || SymError::Parse(text.to_string());
    if let Some((n, d)) = t.split_once('/') {
        let n: BigInt = n.trim().parse().map_err(|_| err())?;
        let d: BigInt = d.trim().parse().map_err(|_| err())?;
        if d.is_zero() {
            return Err(err());
        }
        return Ok(Rational::new(n, d));
    }
    if let Some((whole, frac)) = t.split_once('.') {
        let negative = whole.trim_start().starts_with('-');
        let digits = format!("{}{}", whole.trim_start_matches(['-', '+']), frac);
        let n: BigInt = digits.parse().map_err(|_| err())?;
        let d = num_traits::pow(BigInt::from(10), frac.len());
        let r = Rational::new(n, d);
        return Ok(if negative { -r } else { r });
    }
    let n: BigInt = t.parse().map_err(|_| err())?;
    Ok(Rational::from_integer(n))
}

pub(crate) fn fmt_rational(r: &Rational) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}
