//! Eisenstein series, the Weierstrass kernel family, and exact reduction
//! into the polynomial ring the low-weight kernels generate.
//!
//! Everything here is normalized so that 2πi appears only through λ: the
//! weight-w Eisenstein series is λ^w times a rational q-series, and the
//! order-m kernel starts at y^(-m) with coefficient 1. The kernels satisfy
//!
//! * the derivative chain  wp_(m+1) = -(1/m) d/dy wp_m,
//! * parity  wp_m(-y) = (-1)^m wp_m(y),
//! * the cubic relation  (d/dy wp_2)² = 4 wp_2³ - 60 G_4 wp_2 - 140 G_6,
//!
//! which make the ring R = ℚ[wp_2, wp_3, G_4, G_6] (with wp_3² reduced by
//! the cubic) closed under d/dy. [`RPoly`] implements that ring; reduction
//! of higher kernels and Eisenstein series into it is verified against the
//! series expansions, never assumed.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};

use crate::coeff::{binom, rat_to_string, ExactScalar, Rat};
use crate::error::{Error, Result};
use crate::fps::MultiSeries;

fn rat(n: i64, d: i64) -> Rat {
    Rat::new(BigInt::from(n), BigInt::from(d))
}

/// Bernoulli numbers B_0..B_n in the convention with B_1 = -1/2
/// (generating function t/(e^t - 1)).
pub fn bernoulli_numbers(n: usize) -> Vec<Rat> {
    let mut b: Vec<Rat> = Vec::with_capacity(n + 1);
    b.push(Rat::one());
    for m in 1..=n {
        // Σ_{j=0}^{m} C(m+1, j) B_j = 0
        let mut acc = Rat::zero();
        for (j, bj) in b.iter().enumerate() {
            acc += binom(m as i64 + 1, j as u32) * bj;
        }
        b.push(-acc / binom(m as i64 + 1, m as u32));
    }
    b
}

fn factorial(n: u32) -> Rat {
    let mut acc = Rat::one();
    for i in 2..=n as i64 {
        acc *= Rat::from_integer(BigInt::from(i));
    }
    acc
}

/// Eisenstein series of even weight w ≥ 2 as a q-expansion:
/// constant term -λ^w B_w / w!, plus (2 λ^w/(w-1)!) Σ_{l≥1} l^(w-1) q^l/(1-q^l),
/// known through q^q_order.
pub fn eisenstein(weight: u32, q_var: &str, q_order: i64) -> Result<MultiSeries> {
    if weight < 2 || weight % 2 != 0 {
        return Err(Error::Unsupported {
            op: "eisenstein",
            detail: format!("weight must be even and at least 2, got {weight}"),
        });
    }
    if q_order < 0 {
        return Err(Error::Unsupported {
            op: "eisenstein",
            detail: "negative q order".into(),
        });
    }
    let lam_w = ExactScalar::lambda_pow(weight as i64);
    let bern = bernoulli_numbers(weight as usize);
    let mut entries: Vec<(Vec<i64>, ExactScalar)> = Vec::new();
    let constant = -&bern[weight as usize] / factorial(weight);
    entries.push((vec![0], lam_w.scale_rat(&constant)));
    let front = rat(2, 1) / factorial(weight - 1);
    for l in 1..=q_order {
        let mut lp = Rat::one();
        for _ in 0..weight - 1 {
            lp *= Rat::from_integer(BigInt::from(l));
        }
        let coeff = lam_w.scale_rat(&(&front * lp));
        let mut n = l;
        while n <= q_order {
            entries.push((vec![n], coeff.clone()));
            n += l;
        }
    }
    Ok(MultiSeries::from_exponent_map(&[q_var], entries).with_truncation(q_var, q_order))
}

/// The two-variable kernel
/// P_m(x;q) = λ^m Σ_{l>0} (l^(m-1)/(m-1)!) [ x^l/(1-q^l) - (-1)^(m-1) q^l x^(-l)/(1-q^l) ],
/// expanded with x-exponents in [-x_hi, x_hi] (both sides truncated: the
/// true support is unbounded both ways) and q-exponents through q_order.
pub fn p_series(
    m: u32,
    x_var: &str,
    q_var: &str,
    x_hi: i64,
    q_order: i64,
) -> Result<MultiSeries> {
    if m == 0 {
        return Err(Error::Unsupported {
            op: "p_series",
            detail: "order must be at least 1".into(),
        });
    }
    if x_hi < 0 || q_order < 0 {
        return Err(Error::Unsupported {
            op: "p_series",
            detail: "windows must be nonnegative".into(),
        });
    }
    let lam_m = ExactScalar::lambda_pow(m as i64);
    let fac = factorial(m - 1);
    let neg_sign = if (m - 1) % 2 == 0 { rat(-1, 1) } else { Rat::one() };
    let mut entries: Vec<(Vec<i64>, ExactScalar)> = Vec::new();
    // exponent order in `entries` follows [x_var, q_var]
    for l in 1..=x_hi.max(q_order) {
        let mut lp = Rat::one();
        for _ in 0..m - 1 {
            lp *= Rat::from_integer(BigInt::from(l));
        }
        let base = &lp / &fac;
        if l <= x_hi {
            // x^l Σ_{k≥0} q^(kl)
            let c = lam_m.scale_rat(&base);
            let mut n = 0;
            while n <= q_order {
                entries.push((vec![l, n], c.clone()));
                n += l;
            }
        }
        if l <= x_hi && l <= q_order {
            // -(-1)^(m-1) x^(-l) Σ_{k≥0} q^((k+1)l)
            let c = lam_m.scale_rat(&(&base * &neg_sign));
            let mut n = l;
            while n <= q_order {
                entries.push((vec![-l, n], c.clone()));
                n += l;
            }
        }
    }
    Ok(
        MultiSeries::from_exponent_map(&[x_var, q_var], entries)
            .with_truncation(q_var, q_order)
            .with_truncation(x_var, x_hi)
            .with_floor(x_var, -x_hi),
    )
}

/// The order-m Weierstrass kernel as a y-expansion:
/// wp_m(y;q) = y^(-m) + (-1)^m Σ_{k≥1} C(2k+1, m-1) G_(2k+2)(q) y^(2k+2-m),
/// known for y-exponents in [-m, y_hi] and q through q_order.
pub fn wp_tilde(
    m: u32,
    y_var: &str,
    q_var: &str,
    y_hi: i64,
    q_order: i64,
) -> Result<MultiSeries> {
    if m == 0 {
        return Err(Error::Unsupported {
            op: "wp_tilde",
            detail: "order must be at least 1".into(),
        });
    }
    let sign = if m % 2 == 0 { Rat::one() } else { rat(-1, 1) };
    let mut acc = MultiSeries::monomial(y_var, -(m as i64));
    let mut k = 1i64;
    while 2 * k + 2 - m as i64 <= y_hi {
        let c = binom(2 * k + 1, m - 1) * &sign;
        if !c.is_zero() {
            let g = eisenstein(2 * k as u32 + 2, q_var, q_order)?;
            acc = acc.add(&g.scale_rat(&c).shift(y_var, 2 * k + 2 - m as i64))?;
        }
        k += 1;
    }
    Ok(acc.with_truncation(y_var, y_hi))
}

/// Left side minus right side of the cubic relation
/// (d/dy wp_2)² - (4 wp_2³ - 60 G_4 wp_2 - 140 G_6); empty iff the
/// relation holds within the verified windows.
pub fn cubic_relation_residual(
    y_var: &str,
    q_var: &str,
    y_hi: i64,
    q_order: i64,
) -> Result<MultiSeries> {
    let p2 = wp_tilde(2, y_var, q_var, y_hi, q_order)?;
    let g4 = eisenstein(4, q_var, q_order)?;
    let g6 = eisenstein(6, q_var, q_order)?;
    let dp2 = p2.derive(y_var);
    let lhs = dp2.mul(&dp2);
    let rhs = p2
        .mul(&p2)
        .mul(&p2)
        .scale_rat(&rat(4, 1))
        .sub(&g4.mul(&p2).scale_rat(&rat(60, 1)))?
        .sub(&g6.scale_rat(&rat(140, 1)))?;
    lhs.sub(&rhs)
}

// ---------------------------------------------------------------------------
// The reduction ring R = ℚ[wp_2, wp_3, G_4, G_6], wp_3-degree kept below 2
// by the cubic relation wp_3² = wp_2³ - 15 G_4 wp_2 - 35 G_6.

/// Exponents (a, b, c, d) of wp_2^a wp_3^b G_4^c G_6^d with b ≤ 1.
type RKey = [u32; 4];

const GEN_NAMES: [&str; 4] = ["P2", "P3", "G4", "G6"];
const GEN_WEIGHTS: [u32; 4] = [2, 3, 4, 6];

/// Polynomial in the reduction ring, in normal form (wp_3-degree ≤ 1, no
/// zero coefficients).
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct RPoly(BTreeMap<RKey, Rat>);

impl RPoly {
    pub fn zero() -> Self {
        RPoly::default()
    }

    pub fn one() -> Self {
        RPoly::monomial([0, 0, 0, 0], Rat::one())
    }

    pub fn monomial(key: RKey, coeff: Rat) -> Self {
        let mut p = RPoly::default();
        p.insert_reduced(key, coeff);
        p
    }

    pub fn gen_p2() -> Self {
        RPoly::monomial([1, 0, 0, 0], Rat::one())
    }

    pub fn gen_p3() -> Self {
        RPoly::monomial([0, 1, 0, 0], Rat::one())
    }

    pub fn gen_g4() -> Self {
        RPoly::monomial([0, 0, 1, 0], Rat::one())
    }

    pub fn gen_g6() -> Self {
        RPoly::monomial([0, 0, 0, 1], Rat::one())
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&RKey, &Rat)> {
        self.0.iter()
    }

    /// Reduce wp_3-degree below 2 while inserting.
    fn insert_reduced(&mut self, key: RKey, coeff: Rat) {
        if coeff.is_zero() {
            return;
        }
        let [a, b, c, d] = key;
        if b >= 2 {
            // wp_3² = wp_2³ - 15 G_4 wp_2 - 35 G_6
            self.insert_reduced([a + 3, b - 2, c, d], coeff.clone());
            self.insert_reduced([a + 1, b - 2, c + 1, d], &coeff * rat(-15, 1));
            self.insert_reduced([a, b - 2, c, d + 1], &coeff * rat(-35, 1));
            return;
        }
        let entry = self.0.entry(key).or_insert_with(Rat::zero);
        *entry += coeff;
        if entry.is_zero() {
            self.0.remove(&key);
        }
    }

    pub fn add(&self, o: &RPoly) -> RPoly {
        let mut out = self.clone();
        for (k, v) in &o.0 {
            out.insert_reduced(*k, v.clone());
        }
        out
    }

    pub fn sub(&self, o: &RPoly) -> RPoly {
        self.add(&o.scale(&rat(-1, 1)))
    }

    pub fn scale(&self, r: &Rat) -> RPoly {
        if r.is_zero() {
            return RPoly::zero();
        }
        RPoly(self.0.iter().map(|(k, v)| (*k, v * r)).collect())
    }

    pub fn mul(&self, o: &RPoly) -> RPoly {
        let mut out = RPoly::zero();
        for (ka, va) in &self.0 {
            for (kb, vb) in &o.0 {
                let key = [ka[0] + kb[0], ka[1] + kb[1], ka[2] + kb[2], ka[3] + kb[3]];
                out.insert_reduced(key, va * vb);
            }
        }
        out
    }

    /// d/dy through the derivation rules d wp_2 = -2 wp_3 and
    /// d wp_3 = -3 wp_2² + 15 G_4 (the latter forced by the cubic
    /// relation); the Eisenstein generators are constants.
    pub fn derive_y(&self) -> RPoly {
        let dp3 = RPoly::monomial([2, 0, 0, 0], rat(-3, 1))
            .add(&RPoly::monomial([0, 0, 1, 0], rat(15, 1)));
        let mut out = RPoly::zero();
        for (k, v) in &self.0 {
            let [a, b, c, d] = *k;
            if a > 0 {
                let rest = RPoly::monomial([a - 1, b, c, d], v * rat(-2 * a as i64, 1));
                out = out.add(&rest.mul(&RPoly::gen_p3()));
            }
            if b > 0 {
                let rest = RPoly::monomial([a, b - 1, c, d], v * rat(b as i64, 1));
                out = out.add(&rest.mul(&dp3));
            }
        }
        out
    }

    /// Modular weight if homogeneous (wt wp_m = m, wt G_w = w).
    pub fn modular_weight(&self) -> Option<u32> {
        let mut w = None;
        for k in self.0.keys() {
            let this: u32 = k.iter().zip(GEN_WEIGHTS).map(|(e, g)| e * g).sum();
            match w {
                None => w = Some(this),
                Some(prev) if prev != this => return None,
                _ => {}
            }
        }
        w
    }

    /// Evaluate the generators as series and expand.
    pub fn to_series(
        &self,
        y_var: &str,
        q_var: &str,
        y_hi: i64,
        q_order: i64,
    ) -> Result<MultiSeries> {
        let gens = [
            wp_tilde(2, y_var, q_var, y_hi, q_order)?,
            wp_tilde(3, y_var, q_var, y_hi, q_order)?,
            eisenstein(4, q_var, q_order)?,
            eisenstein(6, q_var, q_order)?,
        ];
        let mut acc = MultiSeries::zero();
        for (k, v) in &self.0 {
            let mut term = MultiSeries::constant(ExactScalar::from_rat(v.clone()));
            for (g, e) in gens.iter().zip(k) {
                for _ in 0..*e {
                    term = term.mul(g);
                }
            }
            acc = acc.add(&term)?;
        }
        Ok(acc)
    }
}

impl fmt::Display for RPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (k, v) in self.0.iter().rev() {
            let neg = v.is_negative();
            let mag = v.abs();
            if first {
                if neg {
                    write!(f, "-")?;
                }
                first = false;
            } else {
                write!(f, "{}", if neg { " - " } else { " + " })?;
            }
            let mut parts: Vec<String> = Vec::new();
            if !mag.is_one() || k.iter().all(|&e| e == 0) {
                parts.push(rat_to_string(&mag));
            }
            for (name, &e) in GEN_NAMES.iter().zip(k) {
                match e {
                    0 => {}
                    1 => parts.push((*name).into()),
                    _ => parts.push(format!("{name}^{e}")),
                }
            }
            write!(f, "{}", parts.join("*"))?;
        }
        Ok(())
    }
}

/// Express the order-m kernel in R through the derivative chain
/// wp_(m+1) = -(1/m) d/dy wp_m, starting from the generators. Defined for
/// m ≥ 2.
pub fn reduce_to_r(m: u32) -> Result<RPoly> {
    if m < 2 {
        return Err(Error::Unsupported {
            op: "reduce_to_r",
            detail: "kernels of order below 2 are not in the ring".into(),
        });
    }
    let mut cur = RPoly::gen_p2();
    let mut order = 2u32;
    while order < m {
        cur = cur.derive_y().scale(&rat(-1, order as i64));
        order += 1;
    }
    Ok(cur)
}

/// Express an Eisenstein series of weight ≥ 4 as a polynomial in G_4 and
/// G_6, solving exactly on the first q-coefficients and verifying the rest
/// through q_order.
pub fn eisenstein_reduce(weight: u32, q_var: &str, q_order: i64) -> Result<RPoly> {
    if weight < 4 || weight % 2 != 0 {
        return Err(Error::Unsupported {
            op: "eisenstein_reduce",
            detail: format!("weight must be even and at least 4, got {weight}"),
        });
    }
    let monomials: Vec<(u32, u32)> = (0..=weight / 4)
        .filter_map(|c| {
            let rem = weight - 4 * c;
            (rem % 6 == 0).then_some((c, rem / 6))
        })
        .collect();
    let unknowns = monomials.len();
    if q_order + 1 < unknowns as i64 {
        return Err(Error::InsufficientOrder {
            have: q_order,
            need: unknowns as i64 - 1,
        });
    }

    let rationalize = |s: &MultiSeries| -> Result<Vec<Rat>> {
        (0..=q_order)
            .map(|n| {
                s.scale(&ExactScalar::lambda_pow(-(weight as i64)))
                    .coeff_at(&[(q_var, n)])?
                    .as_rational()
                    .ok_or(Error::Unsupported {
                        op: "eisenstein_reduce",
                        detail: "coefficient is not λ^weight times a rational".into(),
                    })
            })
            .collect()
    };

    let target = rationalize(&eisenstein(weight, q_var, q_order)?)?;
    let g4 = eisenstein(4, q_var, q_order)?;
    let g6 = eisenstein(6, q_var, q_order)?;
    let columns: Vec<Vec<Rat>> = monomials
        .iter()
        .map(|&(c, d)| {
            let mut s = MultiSeries::one();
            for _ in 0..c {
                s = s.mul(&g4);
            }
            for _ in 0..d {
                s = s.mul(&g6);
            }
            rationalize(&s)
        })
        .collect::<Result<_>>()?;

    let coeffs = solve_exact(&columns, &target, unknowns).ok_or(Error::ResidualNonzero)?;
    // Residual check over every computed order, not just the solved rows.
    for row in 0..=q_order as usize {
        let mut acc = Rat::zero();
        for (col, c) in columns.iter().zip(&coeffs) {
            acc += &col[row] * c;
        }
        if acc != target[row] {
            return Err(Error::ResidualNonzero);
        }
    }
    let mut out = RPoly::zero();
    for (&(c, d), v) in monomials.iter().zip(&coeffs) {
        out.insert_reduced([0, 0, c, d], v.clone());
    }
    Ok(out)
}

/// Solve the overdetermined system columns·x = target using the first
/// rows that give a unique solution. None if singular.
fn solve_exact(columns: &[Vec<Rat>], target: &[Rat], unknowns: usize) -> Option<Vec<Rat>> {
    let rows = target.len();
    let mut aug: Vec<Vec<Rat>> = (0..rows)
        .map(|r| {
            let mut row: Vec<Rat> = columns.iter().map(|c| c[r].clone()).collect();
            row.push(target[r].clone());
            row
        })
        .collect();
    let mut pivot_row = 0;
    for col in 0..unknowns {
        let found = (pivot_row..rows).find(|&r| !aug[r][col].is_zero())?;
        aug.swap(pivot_row, found);
        let inv = Rat::one() / aug[pivot_row][col].clone();
        for v in aug[pivot_row].iter_mut() {
            *v *= &inv;
        }
        for r in 0..rows {
            if r != pivot_row && !aug[r][col].is_zero() {
                let f = aug[r][col].clone();
                for c in 0..=unknowns {
                    let delta = &aug[pivot_row][c] * &f;
                    aug[r][c] -= delta;
                }
            }
        }
        pivot_row += 1;
    }
    Some((0..unknowns).map(|c| aug[c][unknowns].clone()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sc(text: &str) -> ExactScalar {
        text.parse().unwrap()
    }

    #[test]
    fn bernoulli_values() {
        let b = bernoulli_numbers(12);
        assert_eq!(b[1], rat(-1, 2));
        assert_eq!(b[2], rat(1, 6));
        assert_eq!(b[3], Rat::zero());
        assert_eq!(b[4], rat(-1, 30));
        assert_eq!(b[6], rat(1, 42));
        assert_eq!(b[8], rat(-1, 30));
        assert_eq!(b[10], rat(5, 66));
        assert_eq!(b[12], rat(-691, 2730));
    }

    #[test]
    fn eisenstein_low_coefficients() {
        let g2 = eisenstein(2, "q", 4).unwrap();
        assert_eq!(g2.coeff_at(&[("q", 0)]).unwrap(), sc("-1/12*λ^2"));
        // weight 2, q^1: 2λ²/1! · 1
        assert_eq!(g2.coeff_at(&[("q", 1)]).unwrap(), sc("2*λ^2"));
        let g4 = eisenstein(4, "q", 4).unwrap();
        assert_eq!(g4.coeff_at(&[("q", 0)]).unwrap(), sc("1/720*λ^4"));
        assert_eq!(g4.coeff_at(&[("q", 1)]).unwrap(), sc("1/3*λ^4"));
        // q^2 row: l=1 (m=2) and l=2: (1 + 2³)·λ⁴/3 = 3λ⁴
        assert_eq!(g4.coeff_at(&[("q", 2)]).unwrap(), sc("3*λ^4"));
        let g6 = eisenstein(6, "q", 2).unwrap();
        assert_eq!(g6.coeff_at(&[("q", 0)]).unwrap(), sc("-1/30240*λ^6"));
        assert!(g6.coeff_at(&[("q", 3)]).is_err());
    }

    #[test]
    fn p_series_low_coefficients() {
        let p1 = p_series(1, "x", "q", 3, 3).unwrap();
        for l in 1..=3 {
            assert_eq!(
                p1.coeff_at(&[("x", l), ("q", 0)]).unwrap(),
                ExactScalar::lambda()
            );
        }
        assert_eq!(
            p1.coeff_at(&[("x", -1), ("q", 1)]).unwrap(),
            ExactScalar::lambda().neg()
        );
        assert_eq!(
            p1.coeff_at(&[("x", -1), ("q", 0)]).unwrap(),
            ExactScalar::zero()
        );
        let p2 = p_series(2, "x", "q", 4, 2).unwrap();
        for l in 1..=4 {
            assert_eq!(
                p2.coeff_at(&[("x", l), ("q", 0)]).unwrap(),
                ExactScalar::lambda_pow(2).scale_rat(&Rat::from_integer(l.into()))
            );
        }
        // sign of the negative-power tower flips with m
        assert_eq!(
            p2.coeff_at(&[("x", -1), ("q", 1)]).unwrap(),
            ExactScalar::lambda_pow(2)
        );
        // outside the x window: refused, not zero
        assert!(p1.coeff_at(&[("x", 4), ("q", 0)]).is_err());
        assert!(p1.coeff_at(&[("x", -4), ("q", 3)]).is_err());
    }

    #[test]
    fn wp_derivative_chain() {
        for m in 1..=4u32 {
            let a = wp_tilde(m, "y", "q", 8, 5).unwrap();
            let b = wp_tilde(m + 1, "y", "q", 8, 5).unwrap();
            let lhs = a.derive("y").scale_rat(&rat(-1, m as i64));
            let diff = lhs.sub(&b).unwrap();
            assert!(diff.is_empty(), "order {m}: {diff}");
            // the comparison window must be non-vacuous
            let s = diff.spec("y").unwrap();
            assert!(s.lo <= -(m as i64 + 1) && s.hi >= 5);
        }
    }

    #[test]
    fn wp_parity() {
        for m in 1..=4u32 {
            let w = wp_tilde(m, "y", "q", 7, 4).unwrap();
            // flip y -> -y by negating odd exponents
            let flipped = MultiSeries::from_exponent_map(
                &["y", "q"],
                w.terms().map(|(e, c)| {
                    let sign = if e[1].rem_euclid(2) == 0 { 1 } else { -1 };
                    (
                        vec![e[1], e[0]],
                        c.scale_rat(&Rat::from_integer(sign.into())),
                    )
                }),
            );
            // exponent order: w.terms() keys are sorted vars [q, y]
            let want = w.scale(&ExactScalar::from_int(if m % 2 == 0 { 1 } else { -1 }));
            for (e, c) in want.terms() {
                assert_eq!(flipped.coeff_at(&[("q", e[0]), ("y", e[1])]).unwrap(), *c);
            }
        }
    }

    #[test]
    fn cubic_relation_holds() {
        let r = cubic_relation_residual("y", "q", 6, 5).unwrap();
        assert!(r.is_empty(), "residual: {r}");
        let s = r.spec("y").unwrap();
        assert!(s.lo <= -6 && s.hi >= 2, "window too narrow: {s:?}");
    }

    #[test]
    fn ring_reduction_of_higher_kernels() {
        // Derived by the chain rule from the cubic relation.
        let w4 = reduce_to_r(4).unwrap();
        let expect4 = RPoly::monomial([2, 0, 0, 0], Rat::one())
            .add(&RPoly::monomial([0, 0, 1, 0], rat(-5, 1)));
        assert_eq!(w4, expect4);
        let w5 = reduce_to_r(5).unwrap();
        assert_eq!(w5, RPoly::monomial([1, 1, 0, 0], Rat::one()));
        let w6 = reduce_to_r(6).unwrap();
        let expect6 = RPoly::monomial([3, 0, 0, 0], Rat::one())
            .add(&RPoly::monomial([1, 0, 1, 0], rat(-9, 1)))
            .add(&RPoly::monomial([0, 0, 0, 1], rat(-14, 1)));
        assert_eq!(w6, expect6);
        for m in 4..=6u32 {
            assert_eq!(reduce_to_r(m).unwrap().modular_weight(), Some(m));
            let series = reduce_to_r(m).unwrap().to_series("y", "q", 8, 5).unwrap();
            let direct = wp_tilde(m, "y", "q", 8, 5).unwrap();
            let diff = series.sub(&direct).unwrap();
            assert!(diff.is_empty(), "order {m}: {diff}");
            let s = diff.spec("y").unwrap();
            assert!(s.hi - s.lo >= 4, "vacuous window for order {m}");
        }
    }

    #[test]
    fn wp3_square_reduces() {
        let sq = RPoly::gen_p3().mul(&RPoly::gen_p3());
        let expect = RPoly::monomial([3, 0, 0, 0], Rat::one())
            .add(&RPoly::monomial([1, 0, 1, 0], rat(-15, 1)))
            .add(&RPoly::monomial([0, 0, 0, 1], rat(-35, 1)));
        assert_eq!(sq, expect);
        // and the reduction is consistent with the series
        let diff = sq
            .to_series("y", "q", 8, 4)
            .unwrap()
            .sub(
                &wp_tilde(3, "y", "q", 8, 4)
                    .unwrap()
                    .powi(2)
                    .unwrap(),
            )
            .unwrap();
        assert!(diff.is_empty(), "residual: {diff}");
    }

    #[test]
    fn eisenstein_reduction_classics() {
        let e8 = eisenstein_reduce(8, "q", 8).unwrap();
        assert_eq!(e8, RPoly::monomial([0, 0, 2, 0], rat(3, 7)));
        let e10 = eisenstein_reduce(10, "q", 8).unwrap();
        assert_eq!(e10, RPoly::monomial([0, 0, 1, 1], rat(5, 11)));
        let e12 = eisenstein_reduce(12, "q", 12).unwrap();
        let expect = RPoly::monomial([0, 0, 3, 0], rat(18, 143))
            .add(&RPoly::monomial([0, 0, 0, 2], rat(25, 143)));
        assert_eq!(e12, expect);
    }

    #[test]
    fn rpoly_display() {
        let w6 = reduce_to_r(6).unwrap();
        assert_eq!(w6.to_string(), "P2^3 - 9*P2*G4 - 14*G6");
    }
}
