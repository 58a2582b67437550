//! Exact rational probabilities.

use std::fmt;
use std::ops::{Add, Div, Mul, Sub};
use std::str::FromStr;

use num_bigint::{BigInt, Sign};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Serialize, Serializer};

/// An exact rational number, always kept in lowest terms with a positive
/// denominator. Used for flip parameters, CPT entries and path weights.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Prob(BigRational);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid probability literal `{0}`")]
pub struct ProbParseError(pub String);

impl Prob {
    pub fn zero() -> Self {
        Prob(BigRational::zero())
    }

    pub fn one() -> Self {
        Prob(BigRational::one())
    }

    pub fn new(numer: i64, denom: i64) -> Self {
        assert!(denom != 0, "zero denominator");
        Prob(BigRational::new(numer.into(), denom.into()))
    }

    pub fn from_ratio(r: BigRational) -> Self {
        Prob(r)
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

    pub fn is_one(&self) -> bool {
        self.0.is_one()
    }

    /// True when the value lies in `[0, 1]`.
    pub fn is_probability(&self) -> bool {
        !self.0.is_negative() && self.0 <= BigRational::one()
    }

    /// `1 - self`.
    pub fn complement(&self) -> Prob {
        Prob(BigRational::one() - &self.0)
    }

    pub fn to_f64(&self) -> f64 {
        self.0.to_f64().unwrap_or(f64::NAN)
    }

    /// `a/b` form, or just `a` for integers.
    pub fn to_fraction_string(&self) -> String {
        if self.0.is_integer() {
            self.0.numer().to_string()
        } else {
            format!("{}/{}", self.0.numer(), self.0.denom())
        }
    }

    /// Exact decimal expansion when the denominator has no prime factors other
    /// than 2 and 5.
    pub fn to_finite_decimal(&self) -> Option<String> {
        let mut d = self.0.denom().clone();
        let two = BigInt::from(2);
        let five = BigInt::from(5);
        let (mut twos, mut fives) = (0u32, 0u32);
        while d.is_even() {
            d /= &two;
            twos += 1;
        }
        while (&d % &five).is_zero() {
            d /= &five;
            fives += 1;
        }
        if !d.is_one() {
            return None;
        }
        let digits = twos.max(fives) as usize;
        let scale = num_traits::pow(BigInt::from(10), digits);
        let scaled = self.0.numer() * &scale / self.0.denom();
        let negative = scaled.sign() == Sign::Minus;
        let s = scaled.abs().to_string();
        let s = if s.len() <= digits {
            format!("{}{}", "0".repeat(digits - s.len() + 1), s)
        } else {
            s
        };
        let (int_part, frac_part) = s.split_at(s.len() - digits);
        let frac_part = if frac_part.is_empty() { "0" } else { frac_part };
        Some(format!(
            "{}{}.{}",
            if negative { "-" } else { "" },
            int_part,
            frac_part
        ))
    }

    /// Decimal rounded to `sig` significant digits, for human-facing output.
    pub fn to_sig_digits(&self, sig: usize) -> String {
        let v = self.to_f64();
        if v == 0.0 {
            return "0".to_string();
        }
        let s = format!("{:.*e}", sig.saturating_sub(1), v);
        let parsed: f64 = s.parse().unwrap_or(v);
        format!("{}", parsed)
    }

    /// Parse a decimal literal such as `0.25`, `1`, `.5` or `1e-04`.
    pub fn parse_decimal(s: &str) -> Result<Prob, ProbParseError> {
        let err = || ProbParseError(s.to_string());
        let (mantissa, exponent) = match s.find(['e', 'E']) {
            Some(i) => {
                let exp: i32 = s[i + 1..].parse().map_err(|_| err())?;
                (&s[..i], exp)
            }
            None => (s, 0),
        };
        let (negative, mantissa) = match mantissa.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
        };
        let (int_part, frac_part) = match mantissa.split_once('.') {
            Some((i, f)) => (i, f),
            None => (mantissa, ""),
        };
        if int_part.is_empty() && frac_part.is_empty() {
            return Err(err());
        }
        if !int_part.chars().all(|c| c.is_ascii_digit()) || !frac_part.chars().all(|c| c.is_ascii_digit()) {
            return Err(err());
        }
        let digits = format!("{}{}", int_part, frac_part);
        let numer: BigInt = digits.parse().map_err(|_| err())?;
        let numer = if negative { -numer } else { numer };
        let scale = exponent - frac_part.len() as i32;
        let ten = BigInt::from(10);
        let value = if scale >= 0 {
            BigRational::from_integer(numer * num_traits::pow(ten, scale as usize))
        } else {
            BigRational::new(numer, num_traits::pow(ten, (-scale) as usize))
        };
        Ok(Prob(value))
    }
}

impl FromStr for Prob {
    type Err = ProbParseError;

    /// Accepts a decimal literal or a quotient of two decimal literals
    /// (`0.4/0.9`).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        match s.split_once('/') {
            Some((a, b)) => {
                let a = Prob::parse_decimal(a.trim())?;
                let b = Prob::parse_decimal(b.trim())?;
                if b.is_zero() {
                    return Err(ProbParseError(s.to_string()));
                }
                Ok(a / b)
            }
            None => Prob::parse_decimal(s),
        }
    }
}

impl fmt::Display for Prob {
    /// Finite decimals print as decimals, everything else as `a/b`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.to_finite_decimal() {
            Some(d) => f.write_str(&d),
            None => f.write_str(&self.to_fraction_string()),
        }
    }
}

impl fmt::Debug for Prob {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_fraction_string())
    }
}

impl Serialize for Prob {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_fraction_string())
    }
}

macro_rules! forward_binop {
    ($trait:ident, $method:ident) => {
        impl $trait for Prob {
            type Output = Prob;
            fn $method(self, rhs: Prob) -> Prob {
                Prob($trait::$method(self.0, rhs.0))
            }
        }
        impl<'a> $trait<&'a Prob> for &'a Prob {
            type Output = Prob;
            fn $method(self, rhs: &'a Prob) -> Prob {
                Prob($trait::$method(&self.0, &rhs.0))
            }
        }
        impl<'a> $trait<&'a Prob> for Prob {
            type Output = Prob;
            fn $method(self, rhs: &'a Prob) -> Prob {
                Prob($trait::$method(self.0, &rhs.0))
            }
        }
    };
}

forward_binop!(Add, add);
forward_binop!(Sub, sub);
forward_binop!(Mul, mul);
forward_binop!(Div, div);

impl std::iter::Sum for Prob {
    fn sum<I: Iterator<Item = Prob>>(iter: I) -> Prob {
        iter.fold(Prob::zero(), |a, b| a + b)
    }
}

impl<'a> std::iter::Sum<&'a Prob> for Prob {
    fn sum<I: Iterator<Item = &'a Prob>>(iter: I) -> Prob {
        iter.fold(Prob::zero(), |a, b| a + b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_decimals_exactly() {
        assert_eq!("0.3".parse::<Prob>().unwrap(), Prob::new(3, 10));
        assert_eq!("1".parse::<Prob>().unwrap(), Prob::one());
        assert_eq!("1.0".parse::<Prob>().unwrap(), Prob::one());
        assert_eq!(".5".parse::<Prob>().unwrap(), Prob::new(1, 2));
        assert_eq!("1e-04".parse::<Prob>().unwrap(), Prob::new(1, 10_000));
        assert_eq!("2.5E1".parse::<Prob>().unwrap(), Prob::new(25, 1));
    }

    #[test]
    fn parses_quotients() {
        assert_eq!("0.4/0.9".parse::<Prob>().unwrap(), Prob::new(4, 9));
        assert_eq!("1/6".parse::<Prob>().unwrap(), Prob::new(1, 6));
        assert!("0.4/0".parse::<Prob>().is_err());
        assert!("abc".parse::<Prob>().is_err());
        assert!(".".parse::<Prob>().is_err());
    }

    #[test]
    fn display_prefers_finite_decimals() {
        assert_eq!(Prob::new(1, 2).to_string(), "0.5");
        assert_eq!(Prob::new(4, 9).to_string(), "4/9");
        assert_eq!(Prob::new(2, 125).to_string(), "0.016");
        assert_eq!(Prob::one().to_string(), "1.0");
        assert_eq!(Prob::zero().to_string(), "0.0");
        assert_eq!(Prob::new(1, 10_000).to_string(), "0.0001");
        assert_eq!(Prob::new(73, 250).to_string(), "0.292");
    }

    #[test]
    fn sig_digits() {
        assert_eq!(Prob::new(1, 3).to_sig_digits(6), "0.333333");
        assert_eq!(Prob::new(41, 50).to_sig_digits(6), "0.82");
    }

    fn arb_prob() -> impl Strategy<Value = Prob> {
        (0i64..1000, 1i64..1000).prop_map(|(n, d)| Prob::new(n, d))
    }

    proptest! {
        #[test]
        fn arithmetic_is_exact(a in arb_prob(), b in arb_prob()) {
            prop_assert_eq!(&(&a + &b) - &b, a.clone());
            if !b.is_zero() {
                prop_assert_eq!(&a * &(&b / &b), a);
            }
        }

        #[test]
        fn display_round_trips(a in arb_prob()) {
            prop_assert_eq!(a.to_string().parse::<Prob>().unwrap(), a);
        }
    }
}
