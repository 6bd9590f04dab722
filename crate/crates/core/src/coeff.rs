//! The coefficient field ℚ(λ).
//!
//! λ is a single formal symbol standing for 2πi. No polynomial relation is
//! imposed on it, so ℚ(λ) is a genuine rational-function field with
//! decidable, canonical equality. Every constant the domain produces (2πi,
//! πi, π², Bernoulli multiples of powers of 2πi) is rewritten into λ before
//! it enters the system: πi = λ/2, π² = −λ²/4.
//!
//! [`ExactScalar`] keeps a reduced fraction of dense λ-polynomials with
//! big-rational coefficients. The denominator is monic and coprime to the
//! numerator after every operation, which makes structural equality
//! semantic equality.
//!
//! The one bridge out of the exact world is [`ExactScalar::eval_lambda`],
//! which substitutes λ = 2πi in double precision for the numeric checks.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Big rational, re-exported under a short local name.
pub type Rat = BigRational;

/// Decimal digits `eval_lambda` will vouch for. Double precision carries
/// roughly 15 significant digits; polynomial evaluation and the final
/// division cost a few.
pub const EVAL_DIGITS: u32 = 12;

fn rat_int(n: i64) -> Rat {
    Rat::from_integer(BigInt::from(n))
}

/// Render a rational as `p` or `p/q` (canonical: q > 0, reduced).
pub fn rat_to_string(r: &Rat) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Parse `p` or `p/q`. Inverse of [`rat_to_string`].
pub fn rat_from_string(s: &str) -> Result<Rat> {
    let s = s.trim();
    let parse_int = |t: &str| -> Result<BigInt> {
        t.parse::<BigInt>()
            .map_err(|_| Error::ScalarParse(format!("bad integer `{t}`")))
    };
    match s.split_once('/') {
        None => Ok(Rat::from_integer(parse_int(s)?)),
        Some((p, q)) => {
            let den = parse_int(q)?;
            if den.is_zero() {
                return Err(Error::ScalarParse("zero denominator".into()));
            }
            Ok(Rat::new(parse_int(p)?, den))
        }
    }
}

/// Generalized binomial coefficient: n·(n-1)···(n-k+1)/k! for any integer
/// upper index.
pub fn binom(n: i64, k: u32) -> Rat {
    let mut acc = Rat::one();
    for i in 0..k as i64 {
        acc *= Rat::new(BigInt::from(n - i), BigInt::from(i + 1));
    }
    acc
}

/// Convert to f64, scaling down numerator and denominator together when
/// either overflows the double range.
pub fn rat_to_f64(r: &Rat) -> f64 {
    if let Some(x) = r.to_f64() {
        if x.is_finite() {
            return x;
        }
    }
    let shift = (r.numer().bits().max(r.denom().bits()) as i64 - 900).max(0) as u64;
    let n = r.numer() >> shift;
    let d = r.denom() >> shift;
    let nf = n.to_f64().unwrap_or(f64::MAX);
    let df = d.to_f64().unwrap_or(f64::MAX);
    nf / df
}

/// Dense polynomial in λ. Invariant: no trailing zero coefficients; the
/// zero polynomial is the empty vector, so degrees are well defined.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
struct Poly(Vec<Rat>);

impl Poly {
    fn zero() -> Self {
        Poly(Vec::new())
    }

    fn one() -> Self {
        Poly(vec![Rat::one()])
    }

    fn from_coeffs(mut v: Vec<Rat>) -> Self {
        while v.last().is_some_and(Zero::is_zero) {
            v.pop();
        }
        Poly(v)
    }

    fn constant(r: Rat) -> Self {
        Poly::from_coeffs(vec![r])
    }

    fn lambda_pow(k: u32) -> Self {
        let mut v = vec![Rat::zero(); k as usize + 1];
        v[k as usize] = Rat::one();
        Poly(v)
    }

    fn is_zero(&self) -> bool {
        self.0.is_empty()
    }

    fn is_one(&self) -> bool {
        self.0.len() == 1 && self.0[0].is_one()
    }

    /// Degree of the zero polynomial is None.
    fn degree(&self) -> Option<usize> {
        self.0.len().checked_sub(1)
    }

    fn leading(&self) -> Option<&Rat> {
        self.0.last()
    }

    fn add(&self, o: &Poly) -> Poly {
        let n = self.0.len().max(o.0.len());
        let mut v = Vec::with_capacity(n);
        for i in 0..n {
            let a = self.0.get(i).cloned().unwrap_or_else(Rat::zero);
            let b = o.0.get(i).cloned().unwrap_or_else(Rat::zero);
            v.push(a + b);
        }
        Poly::from_coeffs(v)
    }

    fn neg(&self) -> Poly {
        Poly(self.0.iter().map(|c| -c.clone()).collect())
    }

    fn mul(&self, o: &Poly) -> Poly {
        if self.is_zero() || o.is_zero() {
            return Poly::zero();
        }
        let mut v = vec![Rat::zero(); self.0.len() + o.0.len() - 1];
        for (i, a) in self.0.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            for (j, b) in o.0.iter().enumerate() {
                v[i + j] += a * b;
            }
        }
        Poly::from_coeffs(v)
    }

    fn scale(&self, r: &Rat) -> Poly {
        if r.is_zero() {
            return Poly::zero();
        }
        Poly(self.0.iter().map(|c| c * r).collect())
    }

    /// Euclidean division; divisor must be nonzero.
    fn div_rem(&self, d: &Poly) -> (Poly, Poly) {
        debug_assert!(!d.is_zero());
        let dd = d.degree().unwrap();
        let lead_inv = Rat::one() / d.leading().unwrap().clone();
        let mut rem = self.clone();
        let mut quo = vec![Rat::zero(); self.0.len().saturating_sub(dd)];
        while let Some(rd) = rem.degree() {
            if rd < dd {
                break;
            }
            let c = rem.leading().unwrap() * &lead_inv;
            let k = rd - dd;
            let mut v = rem.0;
            for (j, b) in d.0.iter().enumerate() {
                v[k + j] -= &c * b;
            }
            rem = Poly::from_coeffs(v);
            quo[k] = c;
        }
        (Poly::from_coeffs(quo), rem)
    }

    fn monic(&self) -> Poly {
        match self.leading() {
            None => Poly::zero(),
            Some(l) => self.scale(&(Rat::one() / l.clone())),
        }
    }

    fn gcd(a: &Poly, b: &Poly) -> Poly {
        let mut r0 = a.clone();
        let mut r1 = b.clone();
        while !r1.is_zero() {
            let (_, r2) = r0.div_rem(&r1);
            r0 = r1;
            r1 = r2;
        }
        r0.monic()
    }

    fn eval(&self, x: Complex64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for c in self.0.iter().rev() {
            acc = acc * x + Complex64::new(rat_to_f64(c), 0.0);
        }
        acc
    }
}

/// Element of ℚ(λ) in canonical form: reduced fraction, monic denominator,
/// zero represented as 0/1.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ExactScalar {
    num: Poly,
    den: Poly,
}

impl ExactScalar {
    fn make(num: Poly, den: Poly) -> Result<Self> {
        if den.is_zero() {
            return Err(Error::DivisionByZero);
        }
        if num.is_zero() {
            return Ok(ExactScalar {
                num: Poly::zero(),
                den: Poly::one(),
            });
        }
        let g = Poly::gcd(&num, &den);
        let (mut num, _) = num.div_rem(&g);
        let (mut den, _) = den.div_rem(&g);
        let lead_inv = Rat::one() / den.leading().unwrap().clone();
        num = num.scale(&lead_inv);
        den = den.scale(&lead_inv);
        Ok(ExactScalar { num, den })
    }

    pub fn zero() -> Self {
        ExactScalar {
            num: Poly::zero(),
            den: Poly::one(),
        }
    }

    pub fn one() -> Self {
        ExactScalar {
            num: Poly::one(),
            den: Poly::one(),
        }
    }

    pub fn from_int(n: i64) -> Self {
        ExactScalar {
            num: Poly::constant(rat_int(n)),
            den: Poly::one(),
        }
    }

    pub fn from_rat(r: Rat) -> Self {
        ExactScalar {
            num: Poly::constant(r),
            den: Poly::one(),
        }
    }

    /// p/q as an exact scalar; q must be nonzero.
    pub fn rational(p: i64, q: i64) -> Self {
        assert!(q != 0, "rational constant with zero denominator");
        ExactScalar::from_rat(Rat::new(BigInt::from(p), BigInt::from(q)))
    }

    /// The symbol λ itself.
    pub fn lambda() -> Self {
        ExactScalar {
            num: Poly::lambda_pow(1),
            den: Poly::one(),
        }
    }

    /// λ^k for any integer k (negative powers are fractions).
    pub fn lambda_pow(k: i64) -> Self {
        if k >= 0 {
            ExactScalar {
                num: Poly::lambda_pow(k as u32),
                den: Poly::one(),
            }
        } else {
            ExactScalar {
                num: Poly::one(),
                den: Poly::lambda_pow((-k) as u32),
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        self.num.is_zero()
    }

    pub fn is_one(&self) -> bool {
        self.num == Poly::one() && self.den == Poly::one()
    }

    /// Exact value as a rational, when the scalar is λ-free.
    pub fn as_rational(&self) -> Option<Rat> {
        if self.den.is_one() && self.num.degree().unwrap_or(0) == 0 {
            Some(self.num.0.first().cloned().unwrap_or_else(Rat::zero))
        } else {
            None
        }
    }

    pub fn add(&self, o: &ExactScalar) -> ExactScalar {
        let num = self.num.mul(&o.den).add(&o.num.mul(&self.den));
        let den = self.den.mul(&o.den);
        ExactScalar::make(num, den).expect("nonzero denominators")
    }

    pub fn sub(&self, o: &ExactScalar) -> ExactScalar {
        self.add(&o.neg())
    }

    pub fn neg(&self) -> ExactScalar {
        ExactScalar {
            num: self.num.neg(),
            den: self.den.clone(),
        }
    }

    pub fn mul(&self, o: &ExactScalar) -> ExactScalar {
        ExactScalar::make(self.num.mul(&o.num), self.den.mul(&o.den))
            .expect("nonzero denominators")
    }

    pub fn scale_rat(&self, r: &Rat) -> ExactScalar {
        ExactScalar::make(self.num.scale(r), self.den.clone()).expect("nonzero denominator")
    }

    pub fn inv(&self) -> Result<ExactScalar> {
        ExactScalar::make(self.den.clone(), self.num.clone())
    }

    pub fn div(&self, o: &ExactScalar) -> Result<ExactScalar> {
        ExactScalar::make(self.num.mul(&o.den), self.den.mul(&o.num))
    }

    pub fn pow(&self, k: i64) -> Result<ExactScalar> {
        let base = if k < 0 { self.inv()? } else { self.clone() };
        let mut acc = ExactScalar::one();
        for _ in 0..k.unsigned_abs() {
            acc = acc.mul(&base);
        }
        Ok(acc)
    }

    /// Substitute λ = 2πi. `precision` is the number of decimal digits the
    /// caller relies on; more than [`EVAL_DIGITS`] is refused.
    pub fn eval_lambda(&self, precision: u32) -> Result<Complex64> {
        if precision > EVAL_DIGITS {
            return Err(Error::PrecisionExhausted {
                requested: precision,
                available: EVAL_DIGITS,
            });
        }
        let lam = Complex64::new(0.0, 2.0 * std::f64::consts::PI);
        Ok(self.num.eval(lam) / self.den.eval(lam))
    }
}

impl Default for ExactScalar {
    fn default() -> Self {
        ExactScalar::zero()
    }
}

// ---------------------------------------------------------------------------
// Canonical text form: polynomials print as `c*λ^k` terms in descending
// degree, fractions as `(num)/(den)`. Display and FromStr are mutually
// inverse on canonical forms, which the JSON interchange relies on.

fn poly_to_string(p: &Poly) -> String {
    if p.is_zero() {
        return "0".into();
    }
    let mut out = String::new();
    for (k, c) in p.0.iter().enumerate().rev() {
        if c.is_zero() {
            continue;
        }
        let negative = c.is_negative();
        let mag = c.abs();
        if out.is_empty() {
            if negative {
                out.push('-');
            }
        } else {
            out.push_str(if negative { " - " } else { " + " });
        }
        let coeff = rat_to_string(&mag);
        if k == 0 {
            out.push_str(&coeff);
        } else {
            if !mag.is_one() {
                out.push_str(&coeff);
                out.push('*');
            }
            out.push('λ');
            if k > 1 {
                out.push_str(&format!("^{k}"));
            }
        }
    }
    out
}

fn poly_from_string(s: &str) -> Result<Poly> {
    let bad = |msg: &str| Error::ScalarParse(format!("{msg} in `{s}`"));
    let mut coeffs: Vec<Rat> = Vec::new();
    let compact: String = s.chars().filter(|c| !c.is_whitespace()).collect();
    if compact.is_empty() {
        return Err(bad("empty polynomial"));
    }
    // Split into signed terms at top level (no parentheses occur inside).
    let mut terms: Vec<(bool, String)> = Vec::new();
    let mut cur = String::new();
    let mut sign = false;
    let mut first = true;
    for ch in compact.chars() {
        if (ch == '+' || ch == '-') && !first && !cur.is_empty() {
            terms.push((sign, std::mem::take(&mut cur)));
            sign = ch == '-';
        } else if (ch == '+' || ch == '-') && cur.is_empty() {
            if ch == '-' {
                sign = !sign;
            }
        } else {
            cur.push(ch);
        }
        first = false;
    }
    if cur.is_empty() {
        return Err(bad("dangling sign"));
    }
    terms.push((sign, cur));

    for (neg, term) in terms {
        let (coeff_str, power) = match term.find('λ') {
            None => (term.as_str(), 0usize),
            Some(pos) => {
                let (head, tail) = term.split_at(pos);
                let tail = &tail['λ'.len_utf8()..];
                let power = if tail.is_empty() {
                    1
                } else if let Some(p) = tail.strip_prefix('^') {
                    p.parse::<usize>().map_err(|_| bad("bad exponent"))?
                } else {
                    return Err(bad("unexpected text after λ"));
                };
                (head.trim_end_matches('*'), power)
            }
        };
        let mut coeff = if coeff_str.is_empty() {
            Rat::one()
        } else {
            rat_from_string(coeff_str)?
        };
        if neg {
            coeff = -coeff;
        }
        if coeffs.len() <= power {
            coeffs.resize(power + 1, Rat::zero());
        }
        coeffs[power] += coeff;
    }
    Ok(Poly::from_coeffs(coeffs))
}

impl fmt::Display for ExactScalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den.is_one() {
            write!(f, "{}", poly_to_string(&self.num))
        } else {
            write!(
                f,
                "({})/({})",
                poly_to_string(&self.num),
                poly_to_string(&self.den)
            )
        }
    }
}

impl FromStr for ExactScalar {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        if let Some(rest) = t.strip_prefix('(') {
            let close = rest
                .find(')')
                .ok_or_else(|| Error::ScalarParse(format!("unbalanced parens in `{s}`")))?;
            let num = poly_from_string(&rest[..close])?;
            let tail = rest[close + 1..].trim();
            let tail = tail
                .strip_prefix('/')
                .ok_or_else(|| Error::ScalarParse(format!("expected `/` in `{s}`")))?
                .trim();
            let tail = tail
                .strip_prefix('(')
                .and_then(|t| t.strip_suffix(')'))
                .ok_or_else(|| Error::ScalarParse(format!("expected `(den)` in `{s}`")))?;
            let den = poly_from_string(tail)?;
            ExactScalar::make(num, den)
        } else {
            Ok(ExactScalar {
                num: poly_from_string(t)?,
                den: Poly::one(),
            })
        }
    }
}

impl Serialize for ExactScalar {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for ExactScalar {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

// Operator sugar over the canonical methods.
macro_rules! forward_binop {
    ($trait:ident, $method:ident, $imp:ident) => {
        impl std::ops::$trait<&ExactScalar> for &ExactScalar {
            type Output = ExactScalar;
            fn $method(self, rhs: &ExactScalar) -> ExactScalar {
                ExactScalar::$imp(self, rhs)
            }
        }
        impl std::ops::$trait for ExactScalar {
            type Output = ExactScalar;
            fn $method(self, rhs: ExactScalar) -> ExactScalar {
                ExactScalar::$imp(&self, &rhs)
            }
        }
    };
}
forward_binop!(Add, add, add);
forward_binop!(Sub, sub, sub);
forward_binop!(Mul, mul, mul);

impl std::ops::Neg for &ExactScalar {
    type Output = ExactScalar;
    fn neg(self) -> ExactScalar {
        ExactScalar::neg(self)
    }
}

impl std::ops::Neg for ExactScalar {
    type Output = ExactScalar;
    fn neg(self) -> ExactScalar {
        ExactScalar::neg(&self)
    }
}

impl std::ops::AddAssign<&ExactScalar> for ExactScalar {
    fn add_assign(&mut self, rhs: &ExactScalar) {
        *self = ExactScalar::add(self, rhs);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(text: &str) -> ExactScalar {
        text.parse().expect("parse scalar")
    }

    #[test]
    fn half_lambda_squared() {
        let half = ExactScalar::lambda().scale_rat(&Rat::new(1.into(), 2.into()));
        let sq = half.mul(&half);
        assert_eq!(sq, s("1/4*λ^2"));
    }

    #[test]
    fn multiplicative_identity() {
        let a = s("(λ^2 - 1/3)/(λ + 2)");
        assert_eq!(a.mul(&ExactScalar::one()), a);
    }

    #[test]
    fn exact_cancellation() {
        let a = ExactScalar::lambda_pow(2).scale_rat(&Rat::new((-1).into(), 12.into()));
        let q = a.div(&ExactScalar::lambda_pow(2)).unwrap();
        assert_eq!(q, ExactScalar::rational(-1, 12));
    }

    #[test]
    fn division_by_zero_is_an_error() {
        assert_eq!(
            ExactScalar::one().div(&ExactScalar::zero()),
            Err(Error::DivisionByZero)
        );
    }

    #[test]
    fn normal_form_cancels_common_factors() {
        // (λ² − 1)/(λ − 1) and (λ + 1) must be structurally identical.
        let a = s("(λ^2 - 1)/(λ - 1)");
        assert_eq!(a, s("λ + 1"));
    }

    #[test]
    fn add_then_subtract_restores() {
        let a = s("(2*λ - 1/7)/(λ^2 + 3)");
        let b = s("5/3*λ^3 - λ");
        assert_eq!(a.add(&b).sub(&b), a);
    }

    #[test]
    fn display_roundtrip() {
        for text in [
            "0",
            "1",
            "-1/12",
            "λ",
            "-λ",
            "1/4*λ^2",
            "λ^3 - 2*λ + 5/6",
            "(λ^2 + 1)/(λ^3 + 1/2)",
            "(-3/2*λ)/(λ^2 - 1/4)",
        ] {
            let v = s(text);
            let shown = v.to_string();
            let reparsed: ExactScalar = shown.parse().unwrap();
            assert_eq!(v, reparsed);
            assert_eq!(shown, reparsed.to_string());
        }
    }

    #[test]
    fn eval_lambda_basics() {
        let lam = ExactScalar::lambda().eval_lambda(12).unwrap();
        assert!((lam - Complex64::new(0.0, 2.0 * std::f64::consts::PI)).norm() < 1e-12);

        // −λ²/12 = π²/3; cross-check against the numeric series Σ 2/l².
        let val = s("-1/12*λ^2").eval_lambda(12).unwrap();
        assert!(val.im.abs() < 1e-12);
        let mut series = 0.0f64;
        let n = 100_000u64;
        for l in 1..=n {
            series += 2.0 / (l as f64 * l as f64);
        }
        series += 2.0 / n as f64; // integral tail estimate
        assert!((val.re - series).abs() < 1e-8);
        assert!((val.re - std::f64::consts::PI.powi(2) / 3.0).abs() < 1e-12);
    }

    #[test]
    fn eval_precision_cap() {
        assert!(matches!(
            ExactScalar::one().eval_lambda(14),
            Err(Error::PrecisionExhausted { .. })
        ));
    }

    #[test]
    fn binomials() {
        assert_eq!(binom(5, 2), rat_int(10));
        assert_eq!(binom(-3, 2), rat_int(6));
        // binom(-m-1, l-1) = (-1)^(l-1) binom(m+l-1, l-1)
        for m in 0..5i64 {
            for l in 1..5u32 {
                let lhs = binom(-m - 1, l - 1);
                let sign = if (l - 1) % 2 == 0 { 1 } else { -1 };
                let rhs = binom(m + l as i64 - 1, l - 1) * rat_int(sign);
                assert_eq!(lhs, rhs);
            }
        }
    }

    #[test]
    fn eval_is_multiplicative() {
        let a = s("(λ^2 - 2)/(λ + 3)");
        let b = s("1/3*λ^3 + λ");
        let lhs = a.mul(&b).eval_lambda(10).unwrap();
        let rhs = a.eval_lambda(10).unwrap() * b.eval_lambda(10).unwrap();
        assert!((lhs - rhs).norm() < 1e-9 * rhs.norm().max(1.0));
    }
}
