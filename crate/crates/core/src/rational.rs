//! Exact rational helpers shared by every symbolic module.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use std::str::FromStr;

/// Arbitrary precision rational in canonical form (reduced, positive denominator).
pub type Rat = BigRational;

pub fn int(v: i64) -> Rat {
    Rat::from_integer(BigInt::from(v))
}

pub fn ratio(num: i64, den: i64) -> Rat {
    Rat::new(BigInt::from(num), BigInt::from(den))
}

pub fn zero() -> Rat {
    Rat::zero()
}

pub fn one() -> Rat {
    Rat::one()
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid rational literal `{0}`")]
pub struct ParseRatError(pub String);

/// Parses `7`, `-3/4` or a finite decimal such as `0.125` into an exact rational.
pub fn parse_rat(text: &str) -> Result<Rat, ParseRatError> {
    let err = || ParseRatError(text.to_string());
    let t = text.trim();
    if t.is_empty() {
        return Err(err());
    }
    if let Some((n, d)) = t.split_once('/') {
        let n = BigInt::from_str(n.trim()).map_err(|_| err())?;
        let d = BigInt::from_str(d.trim()).map_err(|_| err())?;
        if d.is_zero() {
            return Err(err());
        }
        return Ok(Rat::new(n, d));
    }
    if let Some((whole, frac)) = t.split_once('.') {
        let negative = whole.starts_with('-');
        let whole_digits = whole.trim_start_matches(['-', '+']);
        if frac.is_empty() || !frac.chars().all(|c| c.is_ascii_digit()) {
            return Err(err());
        }
        let w = if whole_digits.is_empty() {
            BigInt::zero()
        } else {
            BigInt::from_str(whole_digits).map_err(|_| err())?
        };
        let scale = BigInt::from(10u32).pow(frac.len() as u32);
        let f = BigInt::from_str(frac).map_err(|_| err())?;
        let mag = Rat::new(w * &scale + f, scale);
        return Ok(if negative { -mag } else { mag });
    }
    BigInt::from_str(t).map(Rat::from_integer).map_err(|_| err())
}

/// Canonical textual form: `n` for integers, `n/d` otherwise.
pub fn fmt_rat(r: &Rat) -> String {
    if r.is_integer() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

pub fn to_f64(r: &Rat) -> f64 {
    r.to_f64().unwrap_or_else(|| {
        if r.is_negative() {
            f64::NEG_INFINITY
        } else {
            f64::INFINITY
        }
    })
}

/// Exact conversion of a finite float (every finite f64 is a dyadic rational).
pub fn from_f64(v: f64) -> Option<Rat> {
    Rat::from_float(v)
}

/// Serde adapters storing rationals as `"num/den"` strings.
pub mod serde_rat {
    use super::{fmt_rat, parse_rat, Rat};
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(r: &Rat, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&fmt_rat(r))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Rat, D::Error> {
        let s = String::deserialize(d)?;
        parse_rat(&s).map_err(serde::de::Error::custom)
    }

    pub mod vec {
        use super::super::{fmt_rat, parse_rat, Rat};
        use serde::{Deserialize, Deserializer, Serialize, Serializer};

        pub fn serialize<S: Serializer>(v: &[Rat], s: S) -> Result<S::Ok, S::Error> {
            v.iter().map(fmt_rat).collect::<Vec<_>>().serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Rat>, D::Error> {
            let v = Vec::<String>::deserialize(d)?;
            v.iter()
                .map(|s| parse_rat(s).map_err(serde::de::Error::custom))
                .collect()
        }
    }

    pub mod nested {
        use super::super::{fmt_rat, parse_rat, Rat};
        use serde::{Deserialize, Deserializer, Serialize, Serializer};

        pub fn serialize<S: Serializer>(v: &[Vec<Rat>], s: S) -> Result<S::Ok, S::Error> {
            v.iter()
                .map(|row| row.iter().map(fmt_rat).collect::<Vec<_>>())
                .collect::<Vec<_>>()
                .serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vec<Rat>>, D::Error> {
            let v = Vec::<Vec<String>>::deserialize(d)?;
            v.iter()
                .map(|row| {
                    row.iter()
                        .map(|s| parse_rat(s).map_err(serde::de::Error::custom))
                        .collect()
                })
                .collect()
        }
    }

    pub mod pairs {
        use super::super::{fmt_rat, parse_rat, Rat};
        use serde::{Deserialize, Deserializer, Serialize, Serializer};

        pub fn serialize<S: Serializer>(v: &[(Rat, Rat)], s: S) -> Result<S::Ok, S::Error> {
            v.iter()
                .map(|(a, b)| (fmt_rat(a), fmt_rat(b)))
                .collect::<Vec<_>>()
                .serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<(Rat, Rat)>, D::Error> {
            let v = Vec::<(String, String)>::deserialize(d)?;
            v.iter()
                .map(|(a, b)| {
                    let a = parse_rat(a).map_err(serde::de::Error::custom)?;
                    let b = parse_rat(b).map_err(serde::de::Error::custom)?;
                    Ok((a, b))
                })
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_fractions_and_decimals() {
        assert_eq!(parse_rat("3/7").unwrap(), ratio(3, 7));
        assert_eq!(parse_rat("-6/8").unwrap(), ratio(-3, 4));
        assert_eq!(parse_rat("0.8").unwrap(), ratio(4, 5));
        assert_eq!(parse_rat("-1.25").unwrap(), ratio(-5, 4));
        assert_eq!(parse_rat("12").unwrap(), int(12));
        assert!(parse_rat("1/0").is_err());
        assert!(parse_rat("x").is_err());
        assert!(parse_rat("1.").is_err());
    }

    #[test]
    fn formats_canonically() {
        assert_eq!(fmt_rat(&ratio(10, 4)), "5/2");
        assert_eq!(fmt_rat(&ratio(-4, 2)), "-2");
    }
}
