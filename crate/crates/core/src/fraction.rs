//! Exact non-negative rationals with half-even decimal rendering.
//!
//! Every metric is kept as an exact ratio of integer counts and only turned
//! into a decimal string at render time, so reports are byte-identical on
//! every platform.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, Div, Mul};
use std::str::FromStr;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Places used when a fraction is serialized to JSON.
pub const JSON_PLACES: u32 = 4;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Fraction(BigRational);

impl Fraction {
    /// `num / den`. Panics when `den` is zero; use [`Fraction::checked`] for counts
    /// that may be empty.
    pub fn new(num: u64, den: u64) -> Self {
        assert!(den != 0, "zero denominator");
        Fraction(BigRational::new(num.into(), den.into()))
    }

    pub fn checked(num: u64, den: u64) -> Option<Self> {
        (den != 0).then(|| Fraction::new(num, den))
    }

    pub fn zero() -> Self {
        Fraction(BigRational::zero())
    }

    pub fn one() -> Self {
        Fraction(BigRational::one())
    }

    pub fn from_integer(n: u64) -> Self {
        Fraction(BigRational::from_integer(n.into()))
    }

    pub fn numer(&self) -> &BigInt {
        self.0.numer()
    }

    pub fn denom(&self) -> &BigInt {
        self.0.denom()
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn floor_u64(&self) -> u64 {
        self.0
            .floor()
            .to_integer()
            .to_u64()
            .expect("value fits in u64")
    }

    pub fn fract(&self) -> Fraction {
        Fraction(self.0.fract())
    }

    pub fn to_f64(&self) -> f64 {
        self.0.to_f64().unwrap_or(f64::NAN)
    }

    /// Fixed-point rendering with `places` decimals, rounding half to even.
    pub fn round_half_even(&self, places: u32) -> String {
        let negative = self.0.is_negative();
        let scale = BigInt::from(10u32).pow(places);
        let scaled = self.0.numer().abs() * &scale;
        let den = self.0.denom();
        let (mut q, r) = scaled.div_rem(den);
        let twice = &r * 2u32;
        if twice > *den || (twice == *den && q.is_odd()) {
            q += 1u32;
        }
        let (int_part, frac_part) = q.div_rem(&scale);
        let sign = if negative && !(int_part.is_zero() && frac_part.is_zero()) {
            "-"
        } else {
            ""
        };
        if places == 0 {
            format!("{sign}{int_part}")
        } else {
            format!(
                "{sign}{int_part}.{frac:0>width$}",
                frac = frac_part.to_string(),
                width = places as usize
            )
        }
    }

    /// The value times 100, rounded half-even.
    pub fn percent(&self, places: u32) -> String {
        (self.clone() * Fraction::from_integer(100)).round_half_even(places)
    }

    /// Shortest exact decimal, if the denominator has no prime factors other
    /// than 2 and 5 (e.g. `16/25` -> `0.64`).
    pub fn exact_decimal(&self) -> Option<String> {
        let mut den = self.0.denom().clone();
        let two = BigInt::from(2u32);
        let five = BigInt::from(5u32);
        let (mut twos, mut fives) = (0u32, 0u32);
        while den.is_even() {
            den /= &two;
            twos += 1;
        }
        while (&den % &five).is_zero() {
            den /= &five;
            fives += 1;
        }
        if !den.is_one() {
            return None;
        }
        Some(self.round_half_even(twos.max(fives)))
    }
}

impl fmt::Display for Fraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.denom().is_one() {
            write!(f, "{}", self.0.numer())
        } else {
            write!(f, "{}/{}", self.0.numer(), self.0.denom())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("cannot parse `{0}` as a fraction")]
pub struct ParseFractionError(pub String);

impl FromStr for Fraction {
    type Err = ParseFractionError;

    /// Accepts `a/b`, integers and plain decimals such as `0.64`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseFractionError(s.to_string());
        let t = s.trim();
        if let Some((n, d)) = t.split_once('/') {
            let n: BigInt = n.trim().parse().map_err(|_| err())?;
            let d: BigInt = d.trim().parse().map_err(|_| err())?;
            if d.is_zero() {
                return Err(err());
            }
            return Ok(Fraction(BigRational::new(n, d)));
        }
        let (negative, body) = match t.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, t),
        };
        let (int_s, frac_s) = body.split_once('.').unwrap_or((body, ""));
        if (int_s.is_empty() && frac_s.is_empty())
            || !int_s.chars().all(|c| c.is_ascii_digit())
            || !frac_s.chars().all(|c| c.is_ascii_digit())
        {
            return Err(err());
        }
        let digits = format!("{int_s}{frac_s}");
        let numer: BigInt = if digits.is_empty() {
            BigInt::zero()
        } else {
            digits.parse().map_err(|_| err())?
        };
        let denom = BigInt::from(10u32).pow(frac_s.len() as u32);
        let value = BigRational::new(numer, denom);
        Ok(Fraction(if negative { -value } else { value }))
    }
}

impl Add for Fraction {
    type Output = Fraction;
    fn add(self, rhs: Fraction) -> Fraction {
        Fraction(self.0 + rhs.0)
    }
}

impl<'a> Add<&'a Fraction> for Fraction {
    type Output = Fraction;
    fn add(self, rhs: &'a Fraction) -> Fraction {
        Fraction(self.0 + &rhs.0)
    }
}

impl Mul for Fraction {
    type Output = Fraction;
    fn mul(self, rhs: Fraction) -> Fraction {
        Fraction(self.0 * rhs.0)
    }
}

impl Div for Fraction {
    type Output = Fraction;
    fn div(self, rhs: Fraction) -> Fraction {
        Fraction(self.0 / rhs.0)
    }
}

impl Sum for Fraction {
    fn sum<I: Iterator<Item = Fraction>>(iter: I) -> Fraction {
        iter.fold(Fraction::zero(), Add::add)
    }
}

impl<'a> Sum<&'a Fraction> for Fraction {
    fn sum<I: Iterator<Item = &'a Fraction>>(iter: I) -> Fraction {
        iter.fold(Fraction::zero(), |acc, x| acc + x)
    }
}

#[derive(Serialize, Deserialize)]
struct FractionRepr {
    exact: String,
    #[serde(default)]
    value: Option<String>,
}

/// Serialized as `{"exact": "5/6", "value": "0.8333"}`; only `exact` is read back.
impl Serialize for Fraction {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        FractionRepr {
            exact: self.to_string(),
            value: Some(self.round_half_even(JSON_PLACES)),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Fraction {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let repr = FractionRepr::deserialize(deserializer)?;
        repr.exact.parse().map_err(serde::de::Error::custom)
    }
}
