//! Numeric backends.
//!
//! Every distribution and distance formula in the crate is written once,
//! generic over [`Scalar`]. Two realizations exist: [`Rational`] (arbitrary
//! precision, exact) and [`Approx`] (an `f64` carrying a conservative bound on
//! its absolute error).

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};

/// Exact rational scalar.
pub type Rational = BigRational;

/// Unit roundoff of IEEE double precision.
const UNIT_ROUNDOFF: f64 = f64::EPSILON * 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Exact,
    Float,
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Backend::Exact => f.write_str("exact"),
            Backend::Float => f.write_str("float"),
        }
    }
}

pub trait Scalar:
    Clone
    + fmt::Debug
    + fmt::Display
    + PartialEq
    + PartialOrd
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    const BACKEND: Backend;

    fn zero() -> Self;
    fn one() -> Self;
    fn from_i64(v: i64) -> Self;
    /// `num / den`; exact on the rational backend.
    fn from_ratio(num: i64, den: i64) -> Self;
    /// A value that is at least `v` (exact conversion on the rational backend).
    fn from_f64(v: f64) -> Self;
    fn powi(&self, exp: u64) -> Self;
    fn abs(&self) -> Self;
    fn to_f64(&self) -> f64;
    /// Certified bound on `|self - true value|`; zero on the exact backend.
    fn err_bound(&self) -> f64;

    /// Parses `"p/q"`, an integer, or (float backend only) a decimal literal.
    fn parse(s: &str) -> Result<Self>;

    fn is_zero(&self) -> bool {
        *self == Self::zero()
    }

    /// `to_f64() + err_bound()`, rounded up one ulp.
    fn upper_f64(&self) -> f64 {
        next_up(self.to_f64() + self.err_bound())
    }

    /// `to_f64() - err_bound()`, rounded down one ulp.
    fn lower_f64(&self) -> f64 {
        next_down(self.to_f64() - self.err_bound())
    }

    /// True when `self < other` holds for every value consistent with the error bounds.
    fn certainly_lt(&self, other: &Self) -> bool {
        let d = other.clone() - self.clone();
        match Self::BACKEND {
            Backend::Exact => d > Self::zero(),
            Backend::Float => d.lower_f64() > 0.0,
        }
    }

    /// True when `self <= other` holds for every value consistent with the error bounds.
    fn certainly_le(&self, other: &Self) -> bool {
        let d = other.clone() - self.clone();
        match Self::BACKEND {
            Backend::Exact => d >= Self::zero(),
            Backend::Float => d.lower_f64() >= 0.0,
        }
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

fn next_up(v: f64) -> f64 {
    if v.is_finite() {
        v + v.abs() * f64::EPSILON + f64::MIN_POSITIVE
    } else {
        v
    }
}

fn next_down(v: f64) -> f64 {
    if v.is_finite() {
        v - v.abs() * f64::EPSILON - f64::MIN_POSITIVE
    } else {
        v
    }
}

fn parse_ratio(s: &str) -> Result<Option<Rational>> {
    let s = s.trim();
    let parse_int = |t: &str| {
        BigInt::from_str(t.trim()).map_err(|e| Error::Parse(format!("{t:?}: {e}")))
    };
    if let Some((p, q)) = s.split_once('/') {
        let p = parse_int(p)?;
        let q = parse_int(q)?;
        if q.is_zero() {
            return Err(Error::Parse(format!("{s:?}: zero denominator")));
        }
        return Ok(Some(BigRational::new(p, q)));
    }
    if !s.is_empty() && s.trim_start_matches(['-', '+']).chars().all(|c| c.is_ascii_digit()) {
        return Ok(Some(BigRational::from_integer(parse_int(s)?)));
    }
    Ok(None)
}

impl Scalar for Rational {
    const BACKEND: Backend = Backend::Exact;

    fn zero() -> Self {
        <BigRational as Zero>::zero()
    }

    fn one() -> Self {
        <BigRational as One>::one()
    }

    fn from_i64(v: i64) -> Self {
        BigRational::from_integer(BigInt::from(v))
    }

    fn from_ratio(num: i64, den: i64) -> Self {
        BigRational::new(BigInt::from(num), BigInt::from(den))
    }

    fn from_f64(v: f64) -> Self {
        BigRational::from_float(v).expect("finite float")
    }

    fn powi(&self, exp: u64) -> Self {
        let exp = usize::try_from(exp).expect("exponent fits in usize");
        num_traits::pow(self.clone(), exp)
    }

    fn abs(&self) -> Self {
        Signed::abs(self)
    }

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or_else(|| {
            // numerator/denominator overflow f64: scale by bit lengths
            let n = self.numer();
            let d = self.denom();
            let shift = n.bits() as i64 - d.bits() as i64;
            let (n, d) = if shift > 0 {
                (n.clone(), d.clone() << (shift as usize))
            } else {
                (n.clone() << ((-shift) as usize), d.clone())
            };
            let r = BigRational::new(n, d);
            ToPrimitive::to_f64(&r).unwrap_or(0.0) * 2f64.powi(shift as i32)
        })
    }

    fn err_bound(&self) -> f64 {
        0.0
    }

    fn parse(s: &str) -> Result<Self> {
        parse_ratio(s)?.ok_or_else(|| {
            Error::Parse(format!(
                "{s:?}: the exact backend takes \"p/q\" or integer literals"
            ))
        })
    }
}

/// A double-precision value with a conservative absolute error bound.
///
/// Each arithmetic operation adds the propagated operand errors plus one unit
/// roundoff scaled by the magnitude of the result.
#[derive(Debug, Clone, Copy)]
pub struct Approx {
    value: f64,
    err: f64,
}

impl Approx {
    pub fn new(value: f64, err: f64) -> Self {
        debug_assert!(err >= 0.0);
        Approx { value, err }
    }

    /// An exactly representable input (`err = 0`).
    pub fn exact(value: f64) -> Self {
        Approx { value, err: 0.0 }
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn err(&self) -> f64 {
        self.err
    }

    fn rounded(value: f64, err: f64) -> Self {
        Approx {
            value,
            err: err + UNIT_ROUNDOFF * value.abs(),
        }
    }
}

impl PartialEq for Approx {
    fn eq(&self, other: &Self) -> bool {
        self.value == other.value
    }
}

impl PartialOrd for Approx {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        self.value.partial_cmp(&other.value)
    }
}

impl fmt::Display for Approx {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value)
    }
}

impl Add for Approx {
    type Output = Approx;
    fn add(self, rhs: Approx) -> Approx {
        Approx::rounded(self.value + rhs.value, self.err + rhs.err)
    }
}

impl Sub for Approx {
    type Output = Approx;
    fn sub(self, rhs: Approx) -> Approx {
        Approx::rounded(self.value - rhs.value, self.err + rhs.err)
    }
}

impl Mul for Approx {
    type Output = Approx;
    fn mul(self, rhs: Approx) -> Approx {
        let v = self.value * rhs.value;
        let e = self.value.abs() * rhs.err + rhs.value.abs() * self.err + self.err * rhs.err;
        Approx::rounded(v, e)
    }
}

impl Div for Approx {
    type Output = Approx;
    fn div(self, rhs: Approx) -> Approx {
        let v = self.value / rhs.value;
        let margin = rhs.value.abs() - rhs.err;
        let e = if margin > 0.0 {
            (self.err + v.abs() * rhs.err) / margin
        } else {
            f64::INFINITY
        };
        Approx::rounded(v, e)
    }
}

impl Neg for Approx {
    type Output = Approx;
    fn neg(self) -> Approx {
        Approx {
            value: -self.value,
            err: self.err,
        }
    }
}

impl Scalar for Approx {
    const BACKEND: Backend = Backend::Float;

    fn zero() -> Self {
        Approx::exact(0.0)
    }

    fn one() -> Self {
        Approx::exact(1.0)
    }

    fn from_i64(v: i64) -> Self {
        let f = v as f64;
        if f as i64 == v {
            Approx::exact(f)
        } else {
            Approx::rounded(f, 0.0)
        }
    }

    fn from_ratio(num: i64, den: i64) -> Self {
        Self::from_i64(num) / Self::from_i64(den)
    }

    fn from_f64(v: f64) -> Self {
        Approx::exact(v)
    }

    fn powi(&self, exp: u64) -> Self {
        let mut base = *self;
        let mut acc = Approx::one();
        let mut e = exp;
        while e > 0 {
            if e & 1 == 1 {
                acc = acc * base;
            }
            e >>= 1;
            if e > 0 {
                base = base * base;
            }
        }
        acc
    }

    fn abs(&self) -> Self {
        Approx {
            value: self.value.abs(),
            err: self.err,
        }
    }

    fn to_f64(&self) -> f64 {
        self.value
    }

    fn err_bound(&self) -> f64 {
        self.err
    }

    fn parse(s: &str) -> Result<Self> {
        if let Some(r) = parse_ratio(s)? {
            return Ok(Approx::from_rational(&r));
        }
        let v: f64 = s
            .trim()
            .parse()
            .map_err(|e| Error::Parse(format!("{s:?}: {e}")))?;
        // decimal literals are rounded to the nearest double
        Ok(Approx::rounded(v, 0.0))
    }
}

impl Approx {
    pub fn from_rational(r: &Rational) -> Self {
        let v = Scalar::to_f64(r);
        if Rational::from_f64(v) == *r {
            Approx::exact(v)
        } else {
            Approx::rounded(v, 0.0)
        }
    }
}

/// Serializes a scalar as a string: `"p/q"` on the exact backend, shortest
/// round-trip decimal on the float backend.
pub fn serialize_scalar<S: Scalar, Ser: Serializer>(
    v: &S,
    ser: Ser,
) -> std::result::Result<Ser::Ok, Ser::Error> {
    ser.collect_str(v)
}

pub fn serialize_scalar_opt<S: Scalar, Ser: Serializer>(
    v: &Option<S>,
    ser: Ser,
) -> std::result::Result<Ser::Ok, Ser::Error> {
    match v {
        Some(v) => ser.collect_str(v),
        None => ser.serialize_none(),
    }
}

pub fn serialize_scalar_vec<S: Scalar, Ser: Serializer>(
    v: &[S],
    ser: Ser,
) -> std::result::Result<Ser::Ok, Ser::Error> {
    ser.collect_seq(v.iter().map(|s| s.to_string()))
}

/// Serializes any displayable value (big integers) as a string.
pub fn serialize_display<T: fmt::Display, Ser: Serializer>(
    v: &T,
    ser: Ser,
) -> std::result::Result<Ser::Ok, Ser::Error> {
    ser.collect_str(v)
}
