//! Double-precision end of the pipeline: truncated series evaluated at
//! complex sample points, the SL(2,ℤ) covariance of the Eisenstein and
//! Weierstrass families, and span closure of the rank-one lattice
//! characters under inversion.
//!
//! Exactness stops here by design, but honesty does not: every evaluation
//! returns a conservative bound on what the dropped tail could contribute,
//! extrapolated geometrically from the two in-window terms nearest each
//! soft edge, and an estimate above the requested tolerance is an error
//! rather than a silently wrong number. Plain doubles suffice because the
//! supported sample points keep |q| well inside the unit disk.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_complex::Complex64;
use num_traits::{One, ToPrimitive};

use crate::coeff::{rat_to_f64, ExactScalar, Rat, EVAL_DIGITS};
use crate::elliptic::{eisenstein, p_series, wp_tilde};
use crate::error::{Error, Result};
use crate::fps::MultiSeries;
use crate::report::CheckReport;
use crate::trace::Q_VAR;
use crate::voa::{lattice_min_weight, lattice_sector_dims};

const TWO_PI: f64 = std::f64::consts::TAU;

/// Position variable of the Weierstrass kernels.
const Y_VAR: &str = "y";
/// Exponentiated position variable of the trace kernel P_m.
const X_VAR: &str = "x";

/// y-order carried by the Weierstrass kernels here. Their y-coefficients
/// approach 2ζ(2k+2), so at the supported |z| ≤ 0.4 the edge term is
/// already below every tolerance in use.
const WP_Y_ORDER: i64 = 20;

fn two_pi_i() -> Complex64 {
    Complex64::new(0.0, TWO_PI)
}

/// Sample point: τ on the upper half plane, positions z_i for any
/// two-variable series, and the tail tolerance evaluations at this point
/// must certify.
#[derive(Clone, Debug)]
pub struct EvalPoint {
    tau: Complex64,
    zs: Vec<Complex64>,
    tolerance: f64,
}

impl EvalPoint {
    pub fn new(tau: Complex64, zs: Vec<Complex64>, tolerance: f64) -> Result<Self> {
        if !tau.re.is_finite() || !tau.im.is_finite() || tau.im <= 0.0 {
            return Err(Error::Unsupported {
                op: "eval point",
                detail: format!("τ = {tau} is not in the upper half plane"),
            });
        }
        if !(tolerance > 0.0) {
            return Err(Error::Unsupported {
                op: "eval point",
                detail: "tail tolerance must be positive".into(),
            });
        }
        Ok(EvalPoint { tau, zs, tolerance })
    }

    pub fn tau(&self) -> Complex64 {
        self.tau
    }

    pub fn zs(&self) -> &[Complex64] {
        &self.zs
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    /// q_τ = e^(2πiτ).
    pub fn q_tau(&self) -> Complex64 {
        (two_pi_i() * self.tau).exp()
    }
}

/// Value of a truncated series at a point together with the certified
/// bound on the dropped tail.
#[derive(Clone, Copy, Debug)]
pub struct Eval {
    pub value: Complex64,
    pub tail: f64,
}

/// Evaluate a series at a point. The variable named [`Q_VAR`] is bound to
/// q_τ = e^(2πiτ); the remaining variables are bound, in name order, to
/// the point's z-values directly. Every variable is carried by its
/// logarithm (2πiτ for q, the principal log z otherwise), so fractional
/// window offsets exponentiate on a definite branch and heads like
/// q^(-1/24) are unambiguous.
pub fn eval_series(s: &MultiSeries, p: &EvalPoint) -> Result<Eval> {
    let mut logs = BTreeMap::new();
    let mut zi = 0usize;
    for name in s.var_names() {
        if name == Q_VAR {
            logs.insert(name.to_string(), two_pi_i() * p.tau);
        } else {
            let Some(z) = p.zs.get(zi) else {
                return Err(Error::Unsupported {
                    op: "series evaluation",
                    detail: format!("no z-value for variable {name}"),
                });
            };
            zi += 1;
            if z.norm() == 0.0 {
                return Err(Error::Unsupported {
                    op: "series evaluation",
                    detail: format!("variable {name} bound to 0 in a Laurent series"),
                });
            }
            logs.insert(name.to_string(), z.ln());
        }
    }
    eval_logs(s, &logs, p.tolerance)
}

/// Evaluation core. A term's value is coeff(λ=2πi) · exp(Σ log_v (e_v +
/// offset_v)); magnitudes are aggregated per exponent along every soft
/// window edge for the tail estimate.
fn eval_logs(
    s: &MultiSeries,
    logs: &BTreeMap<String, Complex64>,
    tolerance: f64,
) -> Result<Eval> {
    struct Axis {
        log: Complex64,
        offset: f64,
        lo_soft: bool,
        hi_soft: bool,
        lo_mags: BTreeMap<i64, f64>,
        hi_mags: BTreeMap<i64, f64>,
    }
    let mut axes = Vec::new();
    for name in s.var_names() {
        let Some(log) = logs.get(name) else {
            return Err(Error::Unsupported {
                op: "series evaluation",
                detail: format!("variable {name} has no binding"),
            });
        };
        let spec = s.spec(name).expect("listed variable has a spec");
        axes.push(Axis {
            log: *log,
            offset: rat_to_f64(&spec.offset),
            lo_soft: !spec.lo_hard,
            hi_soft: !spec.hi_hard,
            lo_mags: BTreeMap::new(),
            hi_mags: BTreeMap::new(),
        });
    }
    let mut value = Complex64::new(0.0, 0.0);
    for (key, coeff) in s.terms() {
        let mut term = coeff.eval_lambda(EVAL_DIGITS)?;
        for (axis, &e) in axes.iter().zip(key.iter()) {
            term *= (axis.log * (e as f64 + axis.offset)).exp();
        }
        value += term;
        let mag = term.norm();
        if mag > 0.0 {
            for (axis, &e) in axes.iter_mut().zip(key.iter()) {
                if axis.hi_soft {
                    *axis.hi_mags.entry(e).or_insert(0.0) += mag;
                }
                if axis.lo_soft {
                    *axis.lo_mags.entry(e).or_insert(0.0) += mag;
                }
            }
        }
    }
    let mut tail = 0.0;
    for axis in &axes {
        if axis.hi_soft {
            tail += edge_estimate(axis.hi_mags.iter().rev().map(|(e, m)| (*e, *m)));
        }
        if axis.lo_soft {
            tail += edge_estimate(axis.lo_mags.iter().map(|(e, m)| (-*e, *m)));
        }
    }
    if !(tail <= tolerance) {
        return Err(Error::TailTooLarge {
            estimate: tail,
            tolerance,
        });
    }
    Ok(Eval { value, tail })
}

/// Geometric estimate of everything beyond a soft window edge, from the
/// two nonzero magnitudes nearest it. Positions arrive pre-oriented so
/// the edge is upward; growth toward the edge, or fewer than two nonzero
/// samples, makes the estimate infinite and lets the tolerance refuse.
fn edge_estimate(toward_edge: impl Iterator<Item = (i64, f64)>) -> f64 {
    let mut nonzero = toward_edge.filter(|(_, m)| *m > 0.0);
    let Some((edge, at_edge)) = nonzero.next() else {
        return f64::INFINITY;
    };
    let Some((inner, at_inner)) = nonzero.next() else {
        return f64::INFINITY;
    };
    let per_order = (at_edge / at_inner).powf(1.0 / (edge - inner) as f64);
    if !(per_order < 1.0) {
        return f64::INFINITY;
    }
    at_edge * per_order / (1.0 - per_order)
}

fn q_binding(tau: Complex64) -> BTreeMap<String, Complex64> {
    BTreeMap::from([(Q_VAR.to_string(), two_pi_i() * tau)])
}

/// Element of SL(2,ℤ) acting by τ ↦ (aτ+b)/(cτ+d).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Gamma {
    pub a: i64,
    pub b: i64,
    pub c: i64,
    pub d: i64,
}

impl Gamma {
    pub fn new(a: i64, b: i64, c: i64, d: i64) -> Result<Self> {
        if a * d - b * c != 1 {
            return Err(Error::Unsupported {
                op: "modular transformation",
                detail: format!("determinant of [{a} {b}; {c} {d}] is not 1"),
            });
        }
        Ok(Gamma { a, b, c, d })
    }

    pub fn identity() -> Self {
        Gamma { a: 1, b: 0, c: 0, d: 1 }
    }

    /// τ ↦ -1/τ.
    pub fn s_map() -> Self {
        Gamma { a: 0, b: -1, c: 1, d: 0 }
    }

    /// τ ↦ τ+1.
    pub fn t_map() -> Self {
        Gamma { a: 1, b: 1, c: 0, d: 1 }
    }

    pub fn apply(&self, tau: Complex64) -> Complex64 {
        (tau * self.a as f64 + self.b as f64) / self.denom(tau)
    }

    /// The automorphy denominator cτ+d.
    pub fn denom(&self, tau: Complex64) -> Complex64 {
        tau * self.c as f64 + self.d as f64
    }
}

/// Families whose transformation law is verified numerically.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TransformObject {
    /// Eisenstein series of the given even weight. Weight 2 is only
    /// quasimodular: its law carries the anomaly -2πi c(cτ+d).
    Eisenstein { weight: u32 },
    /// Weierstrass kernel of the given order m: weight m, with the
    /// position rescaled, wp_m(z/(cτ+d); γτ) = (cτ+d)^m wp_m(z; τ).
    Wp { order: u32 },
}

/// Outcome of a pointwise check: the report plus one residual per
/// compared value, in input order (infinite where a point was refused).
#[derive(Debug)]
pub struct TransformCheck {
    pub report: CheckReport,
    pub residuals: Vec<f64>,
}

fn push_case(
    report: &mut CheckReport,
    residuals: &mut Vec<f64>,
    outcome: Result<f64>,
    tol: f64,
    label: impl FnOnce() -> String,
) {
    match outcome {
        Ok(r) => {
            report.record(r <= tol, || {
                format!("{}: residual {r:.3e} exceeds {tol:.3e}", label())
            });
            residuals.push(r);
        }
        Err(e) => {
            report.record(false, || format!("{}: {e}", label()));
            residuals.push(f64::INFINITY);
        }
    }
}

/// Verify the transformation law of `object` under `gamma` at each point:
/// G_2(γτ) = (cτ+d)² G_2(τ) - 2πi c(cτ+d), G_2k(γτ) = (cτ+d)^2k G_2k(τ)
/// for 2k ≥ 4, and wp_m(z/(cτ+d); γτ) = (cτ+d)^m wp_m(z; τ). Series are
/// truncated at q-order `n_q`; a point either yields a residual compared
/// against `tol` or is recorded as refused.
pub fn check_mod_transform(
    object: TransformObject,
    gamma: Gamma,
    points: &[EvalPoint],
    n_q: i64,
    tol: f64,
) -> Result<TransformCheck> {
    if !(tol > 0.0) {
        return Err(Error::Unsupported {
            op: "transformation check",
            detail: "tolerance must be positive".into(),
        });
    }
    let series = match object {
        TransformObject::Eisenstein { weight } => eisenstein(weight, Q_VAR, n_q)?,
        TransformObject::Wp { order } => wp_tilde(order, Y_VAR, Q_VAR, WP_Y_ORDER, n_q)?,
    };
    let mut report = CheckReport::new();
    let mut residuals = Vec::new();
    for (pi, point) in points.iter().enumerate() {
        let image = gamma.apply(point.tau());
        let j = gamma.denom(point.tau());
        match object {
            TransformObject::Eisenstein { weight } => {
                let outcome = eisenstein_residual(&series, weight, gamma, point, image, j);
                push_case(&mut report, &mut residuals, outcome, tol, || {
                    format!("point {pi}")
                });
            }
            TransformObject::Wp { order } => {
                if point.zs().is_empty() {
                    report.record(false, || format!("point {pi}: no z-value for the position"));
                    residuals.push(f64::INFINITY);
                    continue;
                }
                for (zi, &z) in point.zs().iter().enumerate() {
                    let outcome = wp_residual(&series, order, point, z, image, j);
                    push_case(&mut report, &mut residuals, outcome, tol, || {
                        format!("point {pi}, z[{zi}]")
                    });
                }
            }
        }
    }
    Ok(TransformCheck { report, residuals })
}

fn eisenstein_residual(
    series: &MultiSeries,
    weight: u32,
    gamma: Gamma,
    point: &EvalPoint,
    image: Complex64,
    j: Complex64,
) -> Result<f64> {
    let base = eval_logs(series, &q_binding(point.tau()), point.tolerance())?;
    let moved = eval_logs(series, &q_binding(image), point.tolerance())?;
    let mut expected = base.value * j.powi(weight as i32);
    if weight == 2 {
        expected -= two_pi_i() * (gamma.c as f64) * j;
    }
    Ok((moved.value - expected).norm())
}

fn wp_residual(
    series: &MultiSeries,
    order: u32,
    point: &EvalPoint,
    z: Complex64,
    image: Complex64,
    j: Complex64,
) -> Result<f64> {
    if z.norm() == 0.0 {
        return Err(Error::Unsupported {
            op: "transformation check",
            detail: "the position must be nonzero".into(),
        });
    }
    let mut base_logs = q_binding(point.tau());
    base_logs.insert(Y_VAR.to_string(), z.ln());
    let mut image_logs = q_binding(image);
    image_logs.insert(Y_VAR.to_string(), (z / j).ln());
    let base = eval_logs(series, &base_logs, point.tolerance())?;
    let moved = eval_logs(series, &image_logs, point.tolerance())?;
    Ok((moved.value - base.value * j.powi(order as i32)).norm())
}

/// Σ_{l≥1} l^n x^l in closed form: the Eulerian numerator over
/// (1-x)^(n+1). Valid for any x ≠ 1; this is the resummation that makes
/// |x| = 1 (real positions) evaluable.
fn power_sum(n: u32, x: Complex64) -> Complex64 {
    let one = Complex64::new(1.0, 0.0);
    if n == 0 {
        return x / (one - x);
    }
    let mut row = vec![1.0f64];
    for r in 2..=n {
        let prev = row;
        row = vec![0.0; r as usize];
        for k in 0..r as usize {
            let up = if k < prev.len() { (k as f64 + 1.0) * prev[k] } else { 0.0 };
            let diag = if k >= 1 { (r as f64 - k as f64) * prev[k - 1] } else { 0.0 };
            row[k] = up + diag;
        }
    }
    let mut numer = Complex64::new(0.0, 0.0);
    let mut xp = x;
    for &e in &row {
        numer += xp * e;
        xp *= x;
    }
    numer / (one - x).powi(n as i32 + 1)
}

/// Verify the analytic link between the Weierstrass kernels and the trace
/// kernel:  wp_m(z; q_τ) = (-1)^m (P_m(q_z; q_τ) - d^(m-1)/dz^(m-1)
/// (G_2(q_τ) z - πi)). The x-expansion of P_m does not decay at real
/// positions (|q_z| = 1 there), so its q⁰ layer λ^m Σ l^(m-1)/(m-1)! x^l
/// is first matched coefficient-by-coefficient against the closed form it
/// resums to, then replaced by that closed form; the q ≥ 1 layers decay
/// geometrically and are evaluated as written. Parity of the kernel in z
/// is recorded at every point as well.
pub fn check_wp_p_link(m: u32, points: &[EvalPoint], n_q: i64, tol: f64) -> Result<TransformCheck> {
    if !(tol > 0.0) {
        return Err(Error::Unsupported {
            op: "kernel link check",
            detail: "tolerance must be positive".into(),
        });
    }
    if n_q < 2 {
        return Err(Error::Unsupported {
            op: "kernel link check",
            detail: "q order must be at least 2 for a certifiable tail".into(),
        });
    }
    let x_hi = n_q;
    let wp = wp_tilde(m, Y_VAR, Q_VAR, WP_Y_ORDER, n_q)?;
    let kernel = p_series(m, X_VAR, Q_VAR, x_hi, n_q)?;
    let g2 = eisenstein(2, Q_VAR, n_q)?;
    let head = kernel.extract_coeff(Q_VAR, 0)?;

    let mut report = CheckReport::new();
    let mut residuals = Vec::new();

    // The q⁰ layer must be exactly the Taylor truncation of the closed
    // form substituted for it below, and must vanish at negative powers.
    let mut fact = Rat::one();
    for k in 2..i64::from(m) {
        fact *= Rat::from_integer(BigInt::from(k));
    }
    for a in 1..=x_hi {
        let mut lp = Rat::one();
        for _ in 0..m.saturating_sub(1) {
            lp *= Rat::from_integer(BigInt::from(a));
        }
        let expected = ExactScalar::lambda_pow(i64::from(m)).scale_rat(&(&lp / &fact));
        let got = head.coeff_at(&[(X_VAR, a)])?;
        report.record(got == expected, || {
            format!("kernel head coefficient at x^{a} deviates from the resummed layer")
        });
        let neg = head.coeff_at(&[(X_VAR, -a)])?;
        report.record(neg.is_zero(), || {
            format!("kernel head has an unexpected term at x^-{a}")
        });
    }

    // Remaining layers, with the (known, already replaced) q⁰ slice cut
    // away behind a hard floor so the tail estimator only extrapolates
    // the genuinely unknown directions.
    let names = kernel.var_names();
    let qi = names.iter().position(|n| *n == Q_VAR).expect("kernel has q");
    let xi = names.iter().position(|n| *n == X_VAR).expect("kernel has x");
    let layers = MultiSeries::from_exponent_map(
        &[X_VAR, Q_VAR],
        kernel
            .terms()
            .filter(|(key, _)| key[qi] >= 1)
            .map(|(key, c)| (vec![key[xi], key[qi]], c.clone())),
    )
    .with_truncation(Q_VAR, n_q)
    .with_truncation(X_VAR, x_hi)
    .with_floor(X_VAR, -x_hi);

    let fact_f = rat_to_f64(&fact);
    let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
    for (pi, point) in points.iter().enumerate() {
        let tau = point.tau();
        let q_mag = point.q_tau().norm();
        let g2v = match eval_logs(&g2, &q_binding(tau), point.tolerance()) {
            Ok(e) => e.value,
            Err(e) => {
                report.record(false, || format!("point {pi}: {e}"));
                residuals.push(f64::INFINITY);
                continue;
            }
        };
        for (zi, &z) in point.zs().iter().enumerate() {
            let z_mag = z.norm();
            let qz_mag = (-TWO_PI * z.im).exp();
            if !(z_mag > 0.0 && z_mag < 1.0 && qz_mag > q_mag && qz_mag < 1.0 / q_mag) {
                report.record(false, || {
                    format!("point {pi}, z[{zi}]: outside the region 0 < |z| < 1, |q| < |q_z| < 1/|q|")
                });
                residuals.push(f64::INFINITY);
                continue;
            }
            let outcome = (|| -> Result<(f64, f64)> {
                let mut wp_logs = q_binding(tau);
                wp_logs.insert(Y_VAR.to_string(), z.ln());
                let lhs = eval_logs(&wp, &wp_logs, point.tolerance())?;
                let mut mirror_logs = q_binding(tau);
                mirror_logs.insert(Y_VAR.to_string(), (-z).ln());
                let mirrored = eval_logs(&wp, &mirror_logs, point.tolerance())?;

                let mut layer_logs = q_binding(tau);
                layer_logs.insert(X_VAR.to_string(), two_pi_i() * z);
                let layers_v = eval_logs(&layers, &layer_logs, point.tolerance())?;
                let q_z = (two_pi_i() * z).exp();
                let free = two_pi_i().powi(m as i32) * power_sum(m - 1, q_z) / fact_f;
                let derivative_term = match m {
                    1 => g2v * z - Complex64::new(0.0, std::f64::consts::PI),
                    2 => g2v,
                    _ => Complex64::new(0.0, 0.0),
                };
                let rhs = (free + layers_v.value - derivative_term) * sign;
                let link = (lhs.value - rhs).norm();
                let parity = (mirrored.value - lhs.value * sign).norm();
                Ok((link, parity))
            })();
            match outcome {
                Ok((link, parity)) => {
                    report.record(link <= tol, || {
                        format!("point {pi}, z[{zi}]: link residual {link:.3e} exceeds {tol:.3e}")
                    });
                    residuals.push(link);
                    report.record(parity <= tol, || {
                        format!("point {pi}, z[{zi}]: parity residual {parity:.3e} exceeds {tol:.3e}")
                    });
                    residuals.push(parity);
                }
                Err(e) => {
                    report.record(false, || format!("point {pi}, z[{zi}]: {e}"));
                    residuals.push(f64::INFINITY);
                }
            }
        }
    }
    Ok(TransformCheck { report, residuals })
}

/// Character of sector j of the rank-one norm-2N lattice: the graded
/// dimension q^(h_j - 1/24) Σ_g dim_g q^g (central charge 1), carried
/// through `n_q` orders above the head.
pub fn lattice_character(n: u32, j: u32, q_var: &str, n_q: i64) -> Result<MultiSeries> {
    if n == 0 || j >= 2 * n {
        return Err(Error::Unsupported {
            op: "lattice character",
            detail: format!("no sector {j} in the norm-{} lattice", 2 * i64::from(n)),
        });
    }
    if n_q < 1 {
        return Err(Error::Unsupported {
            op: "lattice character",
            detail: "q order must be at least 1".into(),
        });
    }
    let head = lattice_min_weight(n, j) - Rat::new(BigInt::from(1), BigInt::from(24));
    let floor = head.floor();
    let offset = &head - &floor;
    let base = floor
        .to_integer()
        .to_i64()
        .expect("character head fits in i64");
    let dims = lattice_sector_dims(n, j, (n_q + 1) as usize);
    let entries = dims.iter().enumerate().map(|(g, &d)| {
        (
            vec![base + g as i64],
            ExactScalar::from_rat(Rat::from_integer(BigInt::from(d))),
        )
    });
    Ok(MultiSeries::from_exponent_map(&[q_var], entries)
        .with_truncation(q_var, base + n_q)
        .with_offset(q_var, offset))
}

/// Span-closure fit of the transformed rank-one lattice characters: the
/// least-squares 2×2 matrix M with χ_i(γτ) ≈ Σ_j M_ij χ_j(τ) across the
/// samples, the per-sector relative residuals, and the pass/fail report.
/// The matrix is reported, not asserted; the paper-level statement is
/// that a fitting combination exists at all.
#[derive(Debug)]
pub struct ClosureCheck {
    pub report: CheckReport,
    pub matrix: [[Complex64; 2]; 2],
    pub residuals: [f64; 2],
}

/// Default τ samples for closure fits: purely imaginary points walking up
/// from i, where q_τ and the S- and T-images all stay far inside the
/// unit disk.
pub fn closure_sample_points(count: usize) -> Vec<Complex64> {
    (0..count)
        .map(|s| Complex64::new(0.0, 1.0 + s as f64 / 10.0))
        .collect()
}

/// Fit both characters of the rank-one norm-2 lattice, transformed by
/// `gamma`, into the span of the untransformed pair. The insertion is the
/// vacuum (weight 0), so no automorphy factor appears.
pub fn check_s_closure_characters(
    gamma: Gamma,
    samples: &[Complex64],
    n_q: i64,
    tol: f64,
) -> Result<ClosureCheck> {
    if samples.len() < 2 {
        return Err(Error::Unsupported {
            op: "character span fit",
            detail: "need at least two τ samples".into(),
        });
    }
    if n_q < 40 {
        return Err(Error::Unsupported {
            op: "character span fit",
            detail: "characters are supported from q order 40 up".into(),
        });
    }
    if !(tol > 0.0) {
        return Err(Error::Unsupported {
            op: "character span fit",
            detail: "tolerance must be positive".into(),
        });
    }
    let tail_tol = (tol / 100.0).max(1e-14);
    let chi0 = lattice_character(1, 0, Q_VAR, n_q)?;
    let chi1 = lattice_character(1, 1, Q_VAR, n_q)?;
    let chi = [&chi0, &chi1];
    let zero = Complex64::new(0.0, 0.0);
    let mut at_base = vec![[zero; 2]; samples.len()];
    let mut at_image = vec![[zero; 2]; samples.len()];
    for (s, &tau) in samples.iter().enumerate() {
        if !(tau.im > 0.0) {
            return Err(Error::Unsupported {
                op: "character span fit",
                detail: format!("sample τ = {tau} is not in the upper half plane"),
            });
        }
        let image = gamma.apply(tau);
        for i in 0..2 {
            at_base[s][i] = eval_logs(chi[i], &q_binding(tau), tail_tol)?.value;
            at_image[s][i] = eval_logs(chi[i], &q_binding(image), tail_tol)?.value;
        }
    }

    // Normal equations of the two-column fit, solved by the adjugate.
    let mut g = [[zero; 2]; 2];
    for row in &at_base {
        for a in 0..2 {
            for b in 0..2 {
                g[a][b] += row[a].conj() * row[b];
            }
        }
    }
    let det = g[0][0] * g[1][1] - g[0][1] * g[1][0];
    if det.norm() <= 1e-12 * g[0][0].norm() * g[1][1].norm() {
        return Err(Error::Unsupported {
            op: "character span fit",
            detail: "normal matrix is nearly singular; spread the samples".into(),
        });
    }
    let mut report = CheckReport::new();
    let mut matrix = [[zero; 2]; 2];
    let mut residuals = [0.0f64; 2];
    for i in 0..2 {
        let mut rhs = [zero; 2];
        for (s, row) in at_base.iter().enumerate() {
            for (a, rhs_a) in rhs.iter_mut().enumerate() {
                *rhs_a += row[a].conj() * at_image[s][i];
            }
        }
        let fit = [
            (g[1][1] * rhs[0] - g[0][1] * rhs[1]) / det,
            (g[0][0] * rhs[1] - g[1][0] * rhs[0]) / det,
        ];
        matrix[i] = fit;
        let mut err2 = 0.0;
        let mut norm2 = 0.0;
        for (s, row) in at_base.iter().enumerate() {
            let predicted = fit[0] * row[0] + fit[1] * row[1];
            err2 += (at_image[s][i] - predicted).norm_sqr();
            norm2 += at_image[s][i].norm_sqr();
        }
        residuals[i] = (err2 / norm2).sqrt();
        report.record(residuals[i] <= tol, || {
            format!(
                "sector {i}: relative residual {:.3e} exceeds {tol:.3e}",
                residuals[i]
            )
        });
    }
    Ok(ClosureCheck {
        report,
        matrix,
        residuals,
    })
}
