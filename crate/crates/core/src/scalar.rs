//! Exact scalar arithmetic behind a `num-traits` facade.
//!
//! Everything geometric in this crate (GAP membership, properness, span
//! tests, probability masses) is equality-sensitive, so the scalar type is
//! a rational, not a float. The [`Scalar`] trait abstracts over the integer
//! backing: `Ratio<BigInt>` never overflows, `Ratio<i64>` is faster but only
//! safe for small inputs. Concrete aliases live at the crate root.

use std::fmt;

use num_integer::{Integer, Roots};
use num_rational::Ratio;
use num_traits::{FromPrimitive, Num, Signed, ToPrimitive};

/// Rational-like scalar: exact ring/field ops, total order, exact equality.
pub trait Scalar:
    Clone + fmt::Debug + fmt::Display + Num + Signed + PartialOrd + Ord + Send + Sync + 'static
{
    fn from_int(v: i64) -> Self;

    /// Exact `num/den`. Panics if `den == 0`.
    fn from_ratio(num: i64, den: i64) -> Self;

    /// `(numerator, denominator)` in lowest terms with positive denominator,
    /// or `None` if either does not fit in an `i128`.
    fn int_pair(&self) -> Option<(i128, i128)>;

    /// `Some(r)` with `r * r == self` if the square root is rational.
    fn sqrt_exact(&self) -> Option<Self>;

    /// Lossy conversion for reporting and Monte-Carlo use only.
    fn approx_f64(&self) -> f64;
}

impl<I> Scalar for Ratio<I>
where
    I: Clone
        + Integer
        + Signed
        + Roots
        + FromPrimitive
        + ToPrimitive
        + fmt::Debug
        + fmt::Display
        + Send
        + Sync
        + 'static,
{
    fn from_int(v: i64) -> Self {
        Ratio::from_integer(I::from_i64(v).expect("integer out of range for scalar backing type"))
    }

    fn from_ratio(num: i64, den: i64) -> Self {
        assert!(den != 0, "zero denominator");
        Ratio::new(
            I::from_i64(num).expect("numerator out of range"),
            I::from_i64(den).expect("denominator out of range"),
        )
    }

    fn int_pair(&self) -> Option<(i128, i128)> {
        Some((self.numer().to_i128()?, self.denom().to_i128()?))
    }

    fn sqrt_exact(&self) -> Option<Self> {
        if self.is_negative() {
            return None;
        }
        let rn = self.numer().sqrt();
        let rd = self.denom().sqrt();
        if &(rn.clone() * rn.clone()) == self.numer() && &(rd.clone() * rd.clone()) == self.denom()
        {
            Some(Ratio::new(rn, rd))
        } else {
            None
        }
    }

    fn approx_f64(&self) -> f64 {
        match (self.numer().to_f64(), self.denom().to_f64()) {
            (Some(n), Some(d)) => n / d,
            _ => f64::NAN,
        }
    }
}

/// Parses `"p/q"`, plain integers, and exact decimals (`"-2.25"`).
pub fn parse_scalar<T: Scalar>(s: &str) -> Result<T, String> {
    let s = s.trim();
    if s.is_empty() {
        return Err("empty scalar".into());
    }
    if let Some((num, den)) = s.split_once('/') {
        let n: T = parse_decimal(num)?;
        let d: T = parse_decimal(den)?;
        if d.is_zero() {
            return Err(format!("zero denominator in {s:?}"));
        }
        return Ok(n / d);
    }
    parse_decimal(s)
}

fn parse_decimal<T: Scalar>(s: &str) -> Result<T, String> {
    let s = s.trim();
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    let (int_part, frac_part) = match body.split_once('.') {
        Some((a, b)) => (a, b),
        None => (body, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(format!("malformed number {s:?}"));
    }
    let ten = T::from_int(10);
    let mut value = T::zero();
    for c in int_part.chars().chain(frac_part.chars()) {
        let digit = c.to_digit(10).ok_or_else(|| format!("bad digit in {s:?}"))?;
        value = value * ten.clone() + T::from_int(i64::from(digit));
    }
    let mut scale = T::one();
    for _ in 0..frac_part.len() {
        scale = scale * ten.clone();
    }
    let v = value / scale;
    Ok(if neg { -v } else { v })
}

/// `x^e` by repeated squaring.
pub fn powi<T: Scalar>(x: &T, e: u32) -> T {
    let mut result = T::one();
    let mut base = x.clone();
    let mut e = e;
    while e > 0 {
        if e & 1 == 1 {
            result = result * base.clone();
        }
        base = base.clone() * base;
        e >>= 1;
    }
    result
}

/// Serde adapters: scalars serialize as canonical `"p/q"` strings so JSON
/// round-trips are bit-exact.
pub mod serde_scalar {
    use super::{parse_scalar, Scalar};
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<T: Scalar, S: Serializer>(v: &T, s: S) -> Result<S::Ok, S::Error> {
        v.to_string().serialize(s)
    }

    pub fn deserialize<'de, T: Scalar, D: Deserializer<'de>>(d: D) -> Result<T, D::Error> {
        let raw = String::deserialize(d)?;
        parse_scalar(&raw).map_err(serde::de::Error::custom)
    }
}

pub mod serde_scalar_vec {
    use super::{parse_scalar, Scalar};
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<T: Scalar, S: Serializer>(v: &[T], s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(|x| x.to_string()).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, T: Scalar, D: Deserializer<'de>>(d: D) -> Result<Vec<T>, D::Error> {
        let raw = Vec::<String>::deserialize(d)?;
        raw.iter()
            .map(|x| parse_scalar(x).map_err(serde::de::Error::custom))
            .collect()
    }
}

pub mod serde_scalar_mat {
    use super::{parse_scalar, Scalar};
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<T: Scalar, S: Serializer>(v: &[Vec<T>], s: S) -> Result<S::Ok, S::Error> {
        v.iter()
            .map(|row| row.iter().map(|x| x.to_string()).collect::<Vec<_>>())
            .collect::<Vec<_>>()
            .serialize(s)
    }

    pub fn deserialize<'de, T: Scalar, D: Deserializer<'de>>(
        d: D,
    ) -> Result<Vec<Vec<T>>, D::Error> {
        let raw = Vec::<Vec<String>>::deserialize(d)?;
        raw.iter()
            .map(|row| {
                row.iter()
                    .map(|x| parse_scalar(x).map_err(serde::de::Error::custom))
                    .collect()
            })
            .collect()
    }
}

pub mod serde_scalar_cube {
    use super::{parse_scalar, Scalar};
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[allow(clippy::type_complexity)]
    pub fn serialize<T: Scalar, S: Serializer>(v: &[Vec<Vec<T>>], s: S) -> Result<S::Ok, S::Error> {
        v.iter()
            .map(|row| {
                row.iter()
                    .map(|e| e.iter().map(|x| x.to_string()).collect::<Vec<_>>())
                    .collect::<Vec<_>>()
            })
            .collect::<Vec<_>>()
            .serialize(s)
    }

    #[allow(clippy::type_complexity)]
    pub fn deserialize<'de, T: Scalar, D: Deserializer<'de>>(
        d: D,
    ) -> Result<Vec<Vec<Vec<T>>>, D::Error> {
        let raw = Vec::<Vec<Vec<String>>>::deserialize(d)?;
        raw.iter()
            .map(|row| {
                row.iter()
                    .map(|e| {
                        e.iter()
                            .map(|x| parse_scalar(x).map_err(serde::de::Error::custom))
                            .collect()
                    })
                    .collect()
            })
            .collect()
    }
}

pub mod serde_scalar_opt {
    use super::{parse_scalar, Scalar};
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<T: Scalar, S: Serializer>(v: &Option<T>, s: S) -> Result<S::Ok, S::Error> {
        v.as_ref().map(|x| x.to_string()).serialize(s)
    }

    pub fn deserialize<'de, T: Scalar, D: Deserializer<'de>>(
        d: D,
    ) -> Result<Option<T>, D::Error> {
        let raw = Option::<String>::deserialize(d)?;
        raw.map(|x| parse_scalar(&x).map_err(serde::de::Error::custom))
            .transpose()
    }
}

pub mod serde_atoms {
    use super::{parse_scalar, Scalar};
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<T: Scalar, S: Serializer>(v: &[(T, T)], s: S) -> Result<S::Ok, S::Error> {
        v.iter()
            .map(|(a, b)| [a.to_string(), b.to_string()])
            .collect::<Vec<_>>()
            .serialize(s)
    }

    pub fn deserialize<'de, T: Scalar, D: Deserializer<'de>>(
        d: D,
    ) -> Result<Vec<(T, T)>, D::Error> {
        let raw = Vec::<[String; 2]>::deserialize(d)?;
        raw.iter()
            .map(|[a, b]| {
                Ok((
                    parse_scalar(a).map_err(serde::de::Error::custom)?,
                    parse_scalar(b).map_err(serde::de::Error::custom)?,
                ))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{Q, Q64};
    use num_traits::One;

    #[test]
    fn parses_fractions_and_decimals() {
        assert_eq!(parse_scalar::<Q>("3/4").unwrap(), Q::from_ratio(3, 4));
        assert_eq!(parse_scalar::<Q>("-7").unwrap(), Q::from_int(-7));
        assert_eq!(parse_scalar::<Q>("0.25").unwrap(), Q::from_ratio(1, 4));
        assert_eq!(parse_scalar::<Q>("-2.5").unwrap(), Q::from_ratio(-5, 2));
        assert_eq!(parse_scalar::<Q>("1.05").unwrap(), Q::from_ratio(21, 20));
        assert!(parse_scalar::<Q>("1/0").is_err());
        assert!(parse_scalar::<Q>("abc").is_err());
    }

    #[test]
    fn display_parse_roundtrip_is_exact() {
        for (n, d) in [(3, 4), (-3, 4), (10, 1), (0, 5), (-22, 7)] {
            let q = Q::from_ratio(n, d);
            assert_eq!(parse_scalar::<Q>(&q.to_string()).unwrap(), q);
        }
    }

    #[test]
    fn sqrt_exact_detects_squares() {
        assert_eq!(
            Q::from_ratio(9, 4).sqrt_exact(),
            Some(Q::from_ratio(3, 2))
        );
        assert_eq!(Q::from_int(0).sqrt_exact(), Some(Q::from_int(0)));
        assert_eq!(Q::from_int(2).sqrt_exact(), None);
        assert_eq!(Q::from_int(-4).sqrt_exact(), None);
    }

    #[test]
    fn works_with_fixed_width_backing() {
        let a = Q64::from_ratio(1, 3);
        let b = Q64::from_ratio(1, 6);
        assert_eq!(a + b, Q64::from_ratio(1, 2));
        assert_eq!(Q64::from_ratio(4, 9).sqrt_exact(), Some(Q64::from_ratio(2, 3)));
        assert_eq!(Q64::from_int(5).int_pair(), Some((5, 1)));
    }

    #[test]
    fn powi_matches_naive() {
        let x = Q::from_ratio(3, 2);
        let mut naive = Q::one();
        for e in 0..8u32 {
            assert_eq!(powi(&x, e), naive);
            naive = naive * x.clone();
        }
    }
}
