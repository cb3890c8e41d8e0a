//! Exact nonnegative-friendly rational numbers.
//!
//! Every valuation quantity in the crate is an [`ExactValue`]. The textual form is
//! either an integer (`"303"`) or a reduced fraction (`"607/2"`); decimals such as
//! `"1.25"` are accepted on input and converted exactly.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, Sub};
use std::str::FromStr;

use num_bigint::{BigInt, BigUint, Sign};
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{usage, Error};

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct ExactValue(BigRational);

impl ExactValue {
    pub fn zero() -> Self {
        ExactValue(BigRational::zero())
    }

    pub fn from_integer(v: i64) -> Self {
        ExactValue(BigRational::from_integer(BigInt::from(v)))
    }

    /// Panics if `den == 0`.
    pub fn from_ratio(num: i64, den: i64) -> Self {
        ExactValue(BigRational::new(BigInt::from(num), BigInt::from(den)))
    }

    pub fn from_big(num: BigInt, den: BigInt) -> Self {
        ExactValue(BigRational::new(num, den))
    }

    pub fn from_rational(r: BigRational) -> Self {
        ExactValue(r)
    }

    pub fn as_rational(&self) -> &BigRational {
        &self.0
    }

    pub fn numer(&self) -> &BigInt {
        self.0.numer()
    }

    /// Always positive; the fraction is kept in lowest terms.
    pub fn denom(&self) -> &BigInt {
        self.0.denom()
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn is_negative(&self) -> bool {
        self.0.is_negative()
    }

    pub fn is_integer(&self) -> bool {
        self.0.is_integer()
    }

    /// Best-effort floating approximation, only for ratios printed in reports.
    pub fn to_f64(&self) -> f64 {
        self.0.to_f64().unwrap_or(f64::NAN)
    }

    /// `self * factor` for a positive integer factor.
    pub fn scaled_by(&self, factor: &BigUint) -> ExactValue {
        let f = BigInt::from_biguint(Sign::Plus, factor.clone());
        ExactValue(&self.0 * BigRational::from_integer(f))
    }

    /// `(1/2)^exp`.
    pub fn half_pow(exp: u32) -> ExactValue {
        ExactValue(BigRational::new(BigInt::one(), BigInt::one() << exp as usize))
    }
}

impl fmt::Display for ExactValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_integer() {
            write!(f, "{}", self.0.numer())
        } else {
            write!(f, "{}/{}", self.0.numer(), self.0.denom())
        }
    }
}

impl fmt::Debug for ExactValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl FromStr for ExactValue {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let bad = || usage(format!("cannot parse {s:?} as an exact value"));
        if s.is_empty() {
            return Err(bad());
        }
        if let Some((n, d)) = s.split_once('/') {
            let n: BigInt = n.trim().parse().map_err(|_| bad())?;
            let d: BigInt = d.trim().parse().map_err(|_| bad())?;
            if d.is_zero() {
                return Err(usage(format!("zero denominator in {s:?}")));
            }
            return Ok(ExactValue(BigRational::new(n, d)));
        }
        if let Some((int, frac)) = s.split_once('.') {
            let negative = int.starts_with('-');
            let int_digits = int.trim_start_matches(['-', '+']);
            if !frac.chars().all(|c| c.is_ascii_digit())
                || !int_digits.chars().all(|c| c.is_ascii_digit())
                || (int_digits.is_empty() && frac.is_empty())
            {
                return Err(bad());
            }
            let digits = format!("{}{}", if int_digits.is_empty() { "0" } else { int_digits }, frac);
            let mut n: BigInt = digits.parse().map_err(|_| bad())?;
            if negative {
                n = -n;
            }
            let d = num_traits::pow(BigInt::from(10u32), frac.len());
            return Ok(ExactValue(BigRational::new(n, d)));
        }
        let n: BigInt = s.parse().map_err(|_| bad())?;
        Ok(ExactValue(BigRational::from_integer(n)))
    }
}

impl Serialize for ExactValue {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ExactValue {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl From<i64> for ExactValue {
    fn from(v: i64) -> Self {
        ExactValue::from_integer(v)
    }
}

impl Add for ExactValue {
    type Output = ExactValue;
    fn add(self, rhs: ExactValue) -> ExactValue {
        ExactValue(self.0 + rhs.0)
    }
}

impl<'a> Add<&'a ExactValue> for &'a ExactValue {
    type Output = ExactValue;
    fn add(self, rhs: &ExactValue) -> ExactValue {
        ExactValue(&self.0 + &rhs.0)
    }
}

impl AddAssign<&ExactValue> for ExactValue {
    fn add_assign(&mut self, rhs: &ExactValue) {
        self.0 += &rhs.0;
    }
}

impl Sub for ExactValue {
    type Output = ExactValue;
    fn sub(self, rhs: ExactValue) -> ExactValue {
        ExactValue(self.0 - rhs.0)
    }
}

impl<'a> Sub<&'a ExactValue> for &'a ExactValue {
    type Output = ExactValue;
    fn sub(self, rhs: &ExactValue) -> ExactValue {
        ExactValue(&self.0 - &rhs.0)
    }
}

impl<'a> Mul<&'a ExactValue> for &'a ExactValue {
    type Output = ExactValue;
    fn mul(self, rhs: &ExactValue) -> ExactValue {
        ExactValue(&self.0 * &rhs.0)
    }
}

impl std::iter::Sum for ExactValue {
    fn sum<I: Iterator<Item = ExactValue>>(iter: I) -> Self {
        iter.fold(ExactValue::zero(), |a, b| a + b)
    }
}
