//! Numeric back-ends.
//!
//! Every algorithm in the crate is generic over [`Scalar`], which is
//! implemented for `f64` (tolerance-based comparisons) and for
//! [`Rational`] (exact arbitrary-precision fractions). Put-set and
//! equilibrium decisions sit on equality boundaries, so the exact mode is the
//! one used by the oracle suites.

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::str::FromStr;

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, Signed, ToPrimitive, Zero};

/// Exact rational numbers.
pub type Rational = BigRational;

/// Absolute tolerance used by the floating-point back-end.
pub const FLOAT_TOLERANCE: f64 = 1e-9;

/// Arithmetic required by the pricing algorithms.
pub trait Scalar:
    Clone
    + Debug
    + PartialEq
    + PartialOrd
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Sum
    + Send
    + Sync
    + 'static
{
    fn zero() -> Self;
    fn one() -> Self;
    fn from_i64(value: i64) -> Self;
    fn from_ratio(numer: i64, denom: i64) -> Self;
    fn to_f64(&self) -> f64;
    /// Parses `"3/2"`, `"-0.25"`, `"7"` or `"1e-3"`.
    fn parse(text: &str) -> Option<Self>;
    /// `true` for back-ends with exact arithmetic.
    fn is_exact() -> bool;
    /// Comparison slack: zero for exact back-ends.
    fn tolerance() -> Self;
    /// Rendering used by reports: exact fractions or fixed decimals.
    fn render(&self) -> String;

    fn approx_eq(&self, other: &Self) -> bool {
        let diff = self.clone() - other.clone();
        diff.abs_value() <= Self::tolerance()
    }

    /// `self <= other` up to the back-end tolerance.
    fn approx_le(&self, other: &Self) -> bool {
        self.clone() <= other.clone() + Self::tolerance()
    }

    fn abs_value(&self) -> Self {
        if *self < Self::zero() {
            -self.clone()
        } else {
            self.clone()
        }
    }

    fn powi(&self, exp: usize) -> Self {
        let mut acc = Self::one();
        for _ in 0..exp {
            acc = acc * self.clone();
        }
        acc
    }

    fn max_of(a: Self, b: Self) -> Self {
        if b > a {
            b
        } else {
            a
        }
    }

    fn min_of(a: Self, b: Self) -> Self {
        if b < a {
            b
        } else {
            a
        }
    }
}

impl Scalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn from_i64(value: i64) -> Self {
        value as f64
    }
    fn from_ratio(numer: i64, denom: i64) -> Self {
        numer as f64 / denom as f64
    }
    fn to_f64(&self) -> f64 {
        *self
    }
    fn parse(text: &str) -> Option<Self> {
        let text = text.trim();
        if let Some((n, d)) = text.split_once('/') {
            let n: f64 = n.trim().parse().ok()?;
            let d: f64 = d.trim().parse().ok()?;
            if d == 0.0 {
                return None;
            }
            return Some(n / d);
        }
        let v: f64 = text.parse().ok()?;
        v.is_finite().then_some(v)
    }
    fn is_exact() -> bool {
        false
    }
    fn tolerance() -> Self {
        FLOAT_TOLERANCE
    }
    fn render(&self) -> String {
        let v = if self.abs() < 5e-13 { 0.0 } else { *self };
        format!("{v:.6}")
    }
}

impl Scalar for Rational {
    fn zero() -> Self {
        Zero::zero()
    }
    fn one() -> Self {
        One::one()
    }
    fn from_i64(value: i64) -> Self {
        BigRational::from_integer(BigInt::from(value))
    }
    fn from_ratio(numer: i64, denom: i64) -> Self {
        BigRational::new(BigInt::from(numer), BigInt::from(denom))
    }
    fn to_f64(&self) -> f64 {
        self.to_f64_lossy()
    }
    fn parse(text: &str) -> Option<Self> {
        parse_rational(text)
    }
    fn is_exact() -> bool {
        true
    }
    fn tolerance() -> Self {
        Zero::zero()
    }
    fn render(&self) -> String {
        if self.is_integer() {
            self.numer().to_string()
        } else {
            format!("{}/{}", self.numer(), self.denom())
        }
    }
    fn abs_value(&self) -> Self {
        self.abs()
    }
}

trait LossyFloat {
    fn to_f64_lossy(&self) -> f64;
}

impl LossyFloat for Rational {
    fn to_f64_lossy(&self) -> f64 {
        match (self.numer().to_f64(), self.denom().to_f64()) {
            (Some(n), Some(d)) if n.is_finite() && d.is_finite() => n / d,
            _ => {
                // Very large operands: scale down before dividing.
                let bits = self.numer().bits().max(self.denom().bits());
                let shift = bits.saturating_sub(1000);
                let n = (self.numer() >> shift).to_f64().unwrap_or(f64::NAN);
                let d = (self.denom() >> shift).to_f64().unwrap_or(f64::NAN);
                n / d
            }
        }
    }
}

fn parse_rational(text: &str) -> Option<Rational> {
    let text = text.trim();
    if text.is_empty() {
        return None;
    }
    if let Some((n, d)) = text.split_once('/') {
        let n = parse_rational(n)?;
        let d = parse_rational(d)?;
        if d.is_zero() {
            return None;
        }
        return Some(n / d);
    }
    let (mantissa, exponent) = match text.find(['e', 'E']) {
        Some(pos) => (&text[..pos], text[pos + 1..].parse::<i32>().ok()?),
        None => (text, 0),
    };
    let (negative, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = digits.split_once('.').unwrap_or((digits, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let all_digits = format!("{int_part}{frac_part}");
    let numer = BigInt::from_str(&all_digits).ok()?;
    let scale = exponent - frac_part.len() as i32;
    let ten = BigInt::from(10);
    let mut value = BigRational::from_integer(numer);
    if scale >= 0 {
        value *= BigRational::from_integer(num::pow(ten, scale as usize));
    } else {
        value /= BigRational::from_integer(num::pow(ten, (-scale) as usize));
    }
    Some(if negative { -value } else { value })
}

/// Shorthand for building exact constants in tests and fixtures.
pub fn ratio(numer: i64, denom: i64) -> Rational {
    Rational::from_ratio(numer, denom)
}

/// Renders a slice of scalars as `(a, b, c)`.
pub fn render_vector<S: Scalar>(values: &[S]) -> String {
    let parts: Vec<String> = values.iter().map(Scalar::render).collect();
    format!("({})", parts.join(", "))
}
