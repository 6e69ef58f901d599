//! Exact-rational helpers shared by every module.

use num_bigint::{BigInt, Sign};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

/// Exact probability value.
pub type Prob = BigRational;

pub fn rat(n: i64, d: i64) -> Prob {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

pub fn int(n: i64) -> Prob {
    BigRational::from_integer(BigInt::from(n))
}

pub fn zero() -> Prob {
    BigRational::zero()
}

pub fn one() -> Prob {
    BigRational::one()
}

/// Parses `"n/d"`, an integer, or a finite decimal such as `"0.125"` into an
/// exact rational.
pub fn parse_rational(s: &str) -> Result<Prob> {
    let s = s.trim();
    if s.is_empty() {
        return Err(Error::Parse("empty rational".into()));
    }
    if let Some((n, d)) = s.split_once('/') {
        let n: BigInt = n
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("bad numerator in `{s}`")))?;
        let d: BigInt = d
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("bad denominator in `{s}`")))?;
        if d.is_zero() {
            return Err(Error::Parse(format!("zero denominator in `{s}`")));
        }
        return Ok(BigRational::new(n, d));
    }
    if let Some((ip, fp)) = s.split_once('.') {
        let neg = ip.starts_with('-');
        let ip_digits = ip.trim_start_matches(['-', '+']);
        if !fp.chars().all(|c| c.is_ascii_digit())
            || !ip_digits.chars().all(|c| c.is_ascii_digit())
        {
            return Err(Error::Parse(format!("bad decimal `{s}`")));
        }
        let digits = format!("{}{}", if ip_digits.is_empty() { "0" } else { ip_digits }, fp);
        let mut n: BigInt = digits
            .parse()
            .map_err(|_| Error::Parse(format!("bad decimal `{s}`")))?;
        if neg {
            n = -n;
        }
        let d = num_traits::pow(BigInt::from(10), fp.len());
        return Ok(BigRational::new(n, d));
    }
    let n: BigInt = s
        .parse()
        .map_err(|_| Error::Parse(format!("bad rational `{s}`")))?;
    Ok(BigRational::from_integer(n))
}

pub fn format_rational(q: &Prob) -> String {
    if q.denom().is_one() {
        q.numer().to_string()
    } else {
        format!("{}/{}", q.numer(), q.denom())
    }
}

/// Lossy view for reporting and for float-only quantities.
pub fn to_f64(q: &Prob) -> f64 {
    if let Some(v) = q.to_f64() {
        if v.is_finite() {
            return v;
        }
    }
    let l = log2_abs(q);
    let s = if q.is_negative() { -1.0 } else { 1.0 };
    s * l.exp2()
}

fn log2_bigint(n: &BigInt) -> f64 {
    let bits = n.bits();
    if bits <= 1000 {
        return n.to_f64().unwrap_or(f64::INFINITY).abs().log2();
    }
    let shift = bits - 64;
    let top = (n.abs() >> shift).to_f64().unwrap_or(0.0);
    top.log2() + shift as f64
}

fn log2_abs(q: &Prob) -> f64 {
    log2_bigint(q.numer()) - log2_bigint(q.denom())
}

/// `log2(q)` for `q > 0`; `-inf` for `q == 0`.
pub fn log2(q: &Prob) -> f64 {
    match q.numer().sign() {
        Sign::NoSign => f64::NEG_INFINITY,
        Sign::Minus => f64::NAN,
        Sign::Plus => log2_abs(q),
    }
}

/// Exact `2^k` for an integer exponent.
pub fn pow2(k: i64) -> Prob {
    let p = num_traits::pow(BigInt::from(2), k.unsigned_abs() as usize);
    if k >= 0 {
        BigRational::from_integer(p)
    } else {
        BigRational::new(BigInt::one(), p)
    }
}

/// True when the real exponent is an integer small enough to materialize
/// exactly.
fn exact_exponent(e: f64) -> Option<i64> {
    if e.is_finite() && e.fract() == 0.0 && e.abs() < 4096.0 {
        Some(e as i64)
    } else {
        None
    }
}

/// Relative slack used when a threshold involves an irrational power of two.
pub const LOG_TOLERANCE: f64 = 1e-9;

/// Decides `lhs <= coef * 2^exp`.
///
/// Exact in rationals whenever `exp` is an integer; otherwise compares in the
/// log domain with slack [`LOG_TOLERANCE`] in favour of the inequality.
pub fn le_scaled_pow2(lhs: &Prob, coef: &Prob, exp: f64) -> bool {
    if lhs.is_zero() || lhs.is_negative() {
        return !coef.is_negative() || lhs <= coef;
    }
    if coef.is_zero() || coef.is_negative() {
        return false;
    }
    if exp == f64::INFINITY {
        return true;
    }
    if exp == f64::NEG_INFINITY {
        return false;
    }
    match exact_exponent(exp) {
        Some(k) => lhs <= &(coef * pow2(k)),
        None => log2(lhs) <= log2(coef) + exp + LOG_TOLERANCE,
    }
}

/// `floor(coef * 2^exp)` clamped to `[0, cap]`.
pub fn floor_scaled_pow2(coef: &Prob, exp: f64, cap: u64) -> u64 {
    if coef.is_zero() || coef.is_negative() || exp == f64::NEG_INFINITY {
        return 0;
    }
    if exp == f64::INFINITY {
        return cap;
    }
    match exact_exponent(exp) {
        Some(k) => {
            let v = (coef * pow2(k)).floor().to_integer();
            if v > BigInt::from(cap) {
                cap
            } else {
                v.to_u64().unwrap_or(0)
            }
        }
        None => {
            let l = log2(coef) + exp;
            if l > 64.0 {
                cap
            } else {
                let v = (l.exp2() * (1.0 + LOG_TOLERANCE)).floor();
                (v.max(0.0) as u64).min(cap)
            }
        }
    }
}

pub fn lcm_all<'a>(it: impl IntoIterator<Item = &'a BigInt>) -> BigInt {
    it.into_iter().fold(BigInt::one(), |acc, d| acc.lcm(d))
}

/// Integer square root of a rational, when it is a perfect square.
pub fn exact_sqrt(q: &Prob) -> Option<Prob> {
    if q.is_negative() {
        return None;
    }
    let n = q.numer().sqrt();
    let d = q.denom().sqrt();
    if &(&n * &n) == q.numer() && &(&d * &d) == q.denom() {
        Some(BigRational::new(n, d))
    } else {
        None
    }
}

/// Smallest integer `c >= 0` with `base^c <= target`, for `0 < base < 1`.
pub fn min_power_below(base: &Prob, target: &Prob) -> u32 {
    let mut c = 0u32;
    let mut p = one();
    while &p > target {
        p *= base;
        c += 1;
    }
    c
}

/// `ceil(x)` for a finite float, with a tiny tolerance so that values that are
/// integral up to rounding are not bumped up.
pub fn ceil_tol(x: f64) -> i64 {
    let r = x.round();
    if (x - r).abs() < 1e-9 {
        r as i64
    } else {
        x.ceil() as i64
    }
}

pub fn floor_tol(x: f64) -> i64 {
    let r = x.round();
    if (x - r).abs() < 1e-9 {
        r as i64
    } else {
        x.floor() as i64
    }
}

/// Serde adapter writing rationals as `"n/d"` strings.
pub mod serde_rational {
    use super::{format_rational, parse_rational, Prob};
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(q: &Prob, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format_rational(q))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Prob, D::Error> {
        let s = String::deserialize(d)?;
        parse_rational(&s).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_all_forms() {
        assert_eq!(parse_rational("3/4").unwrap(), rat(3, 4));
        assert_eq!(parse_rational("2").unwrap(), int(2));
        assert_eq!(parse_rational("0.125").unwrap(), rat(1, 8));
        assert_eq!(parse_rational(".5").unwrap(), rat(1, 2));
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("abc").is_err());
    }

    #[test]
    fn log2_of_huge_rationals() {
        let q = pow2(3000) * rat(3, 1);
        assert!((log2(&q) - (3000.0 + 3f64.log2())).abs() < 1e-9);
        assert!((log2(&pow2(-2000)) + 2000.0).abs() < 1e-9);
    }

    #[test]
    fn scaled_comparisons() {
        assert!(le_scaled_pow2(&int(4), &rat(1, 4), 4.0));
        assert!(!le_scaled_pow2(&rat(17, 4), &rat(1, 4), 4.0));
        assert!(le_scaled_pow2(&int(3), &one(), 3f64.log2()));
        assert_eq!(floor_scaled_pow2(&rat(1, 4), 5.0, 100), 8);
        assert_eq!(floor_scaled_pow2(&rat(1, 4), 5.0, 3), 3);
    }

    #[test]
    fn sqrt_and_powers() {
        assert_eq!(exact_sqrt(&rat(1, 64)), Some(rat(1, 8)));
        assert_eq!(exact_sqrt(&rat(1, 2)), None);
        assert_eq!(min_power_below(&rat(1, 2), &rat(1, 12)), 4);
        assert_eq!(min_power_below(&rat(1, 2), &rat(1, 8)), 3);
    }
}
