//! Graded traces of module vertex operator chains and the recursion
//! identities they satisfy. A chain w_1, ..., w_n of vectors, each tagged
//! with a formal position variable, is traced over a module by applying
//! the geometrically modified operators right to left on every basis
//! state and reading off the diagonal. The result is a Laurent series in
//! the positions and in q, exact in every computed coefficient.
//!
//! The checks expand a product of two chain operators into elliptic
//! kernels. Three coordinate regimes appear: the zero point and
//! commutation identities live in the raw position variables, the
//! two point commutation identity collapses the positions to their
//! ratio and a separation variable, and the torus recursion rewrites
//! balanced position pairs as exponentials of coordinate differences.
//! Every comparison runs over an explicit exponent box and consults the
//! window metadata first, so a truncation that is too short to decide a
//! coefficient is an error, never a silent pass.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use num_bigint::BigInt;
use num_traits::{One, ToPrimitive, Zero};

use crate::coeff::{binom, ExactScalar, Rat};
use crate::elliptic::{eisenstein, p_series, wp_tilde};
use crate::error::{Error, Result};
use crate::fps::{MultiSeries, VarSpec};
use crate::geomod::apply_u1;
use crate::report::CheckReport;
use crate::voa::{Module, Vector, Voa};
use crate::zhu;

/// Canonical name of the nome variable in every trace series.
pub const Q_VAR: &str = "q";

const Y_VAR: &str = "y";
const D_VAR: &str = "dz";
const ZJ_VAR: &str = "zj";
const AUX_VAR: &str = "xu";

fn rint(n: i64) -> Rat {
    Rat::from_integer(BigInt::from(n))
}

/// Split a rational into its fractional part in [0,1) and its floor.
fn split_offset(r: &Rat) -> (Rat, i64) {
    let f = r.floor();
    let int = f
        .to_integer()
        .to_i64()
        .expect("weight offset fits in i64");
    (r - &f, int)
}

/// One module vertex operator in a trace: the inserted vector and the
/// formal variable carrying its position.
#[derive(Clone, Debug)]
pub struct Insertion {
    pub vector: Vector,
    pub var: String,
}

impl Insertion {
    pub fn new(vector: Vector, var: impl Into<String>) -> Self {
        Insertion {
            vector,
            var: var.into(),
        }
    }
}

/// Truncation orders for a trace run. `x_hi` caps the exponent of every
/// position variable, the q expansion runs `n_q` orders above the lowest
/// power. With `shifted` set the trace weights states by q^(L(0)-c/24)
/// instead of q^L(0).
#[derive(Clone, Debug)]
pub struct TraceParams {
    pub n_q: i64,
    pub x_hi: i64,
    pub shifted: bool,
}

// -- chain resolution --------------------------------------------------------

struct Chain {
    /// modules[i] is the source of insertion i and the target of
    /// insertion i+1; modules[n] is the trace module and modules[0]
    /// must come back to it.
    modules: Vec<Module>,
    /// Fractional part of the weight jump across each insertion.
    offsets: Vec<Rat>,
    /// Integer part of the jump, folded into the exponent index.
    shifts: Vec<i64>,
}

fn resolve_chain(voa: &Voa, insertions: &[Insertion], base: &Module) -> Result<Chain> {
    let mut seen = BTreeSet::new();
    for ins in insertions {
        if ins.var == Q_VAR {
            return Err(Error::Unsupported {
                op: "trace",
                detail: format!("position variable collides with {Q_VAR}"),
            });
        }
        if !seen.insert(ins.var.clone()) {
            return Err(Error::Unsupported {
                op: "trace",
                detail: format!("duplicate position variable {}", ins.var),
            });
        }
    }
    let mut modules = vec![base.clone()];
    for ins in insertions.iter().rev() {
        let cur = modules.last().unwrap();
        let next = voa.mode_target(ins.vector.module(), cur);
        modules.push(next);
    }
    modules.reverse();
    if modules[0] != *base {
        return Err(Error::ModuleMismatch {
            left: format!("{:?}", modules[0]),
            right: format!("{base:?}"),
        });
    }
    let mut offsets = Vec::with_capacity(insertions.len());
    let mut shifts = Vec::with_capacity(insertions.len());
    for i in 0..insertions.len() {
        let jump = modules[i].base_weight() - modules[i + 1].base_weight();
        let (frac, int) = split_offset(&jump);
        offsets.push(frac);
        shifts.push(int);
    }
    Ok(Chain {
        modules,
        offsets,
        shifts,
    })
}

// -- the engine ---------------------------------------------------------------

type StateSeries = HashMap<Vec<u32>, MultiSeries>;

/// Apply one modified insertion to every accumulated state. `cap` bounds
/// the emitted exponent index from above; the lower end is forced by the
/// requirement that the remaining insertions, which can raise the grade
/// by at most `future_cap`, still reach the diagonal at grade `m`.
#[allow(clippy::too_many_arguments)]
fn apply_insertion(
    voa: &Voa,
    comps: &[(Rat, Vector)],
    var: &str,
    cap: i64,
    shift: i64,
    offset: &Rat,
    target: &Module,
    source: &Module,
    m: i64,
    future_cap: i64,
    last: bool,
    states: StateSeries,
) -> Result<StateSeries> {
    let mut out: StateSeries = HashMap::new();
    for (parts, xs) in &states {
        let state = Vector::basis(source.clone(), parts)?;
        let g = (Vector::state_weight(source, parts) - source.base_weight())
            .to_integer()
            .to_i64()
            .expect("grade fits in i64");
        let lo = shift - g + (m - future_cap).max(0);
        // the last applied insertion must land exactly on grade m; the
        // diagonal read ignores everything else
        let hi = if last { cap.min(shift - g + m) } else { cap };
        for e in lo..=hi {
            let delta = offset + &rint(e);
            let mut piece = Vector::zero(target.clone());
            for (h, comp) in comps {
                let t = h - &delta - Rat::one();
                piece = piece.add(&voa.mode(comp, &t, &state)?)?;
            }
            if piece.is_zero() {
                continue;
            }
            let mono = xs.mul(&MultiSeries::monomial(var, e));
            for (pout, cout) in piece.terms() {
                let add = mono.scale(cout);
                match out.entry(pout.clone()) {
                    std::collections::hash_map::Entry::Occupied(mut oe) => {
                        let s = oe.get().add(&add)?;
                        *oe.get_mut() = s;
                    }
                    std::collections::hash_map::Entry::Vacant(ve) => {
                        ve.insert(add);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Core trace run with one exponent cap per insertion. With `zero_mode`
/// set, the grade preserving mode of that vector is applied after the
/// chain before reading the diagonal.
fn trace_run(
    voa: &Voa,
    insertions: &[Insertion],
    caps: &[i64],
    base: &Module,
    n_q: i64,
    shifted: bool,
    zero_mode: Option<&Vector>,
) -> Result<MultiSeries> {
    assert_eq!(caps.len(), insertions.len());
    if n_q < 0 || caps.iter().any(|&c| c < 0) {
        return Err(Error::Unsupported {
            op: "trace",
            detail: "negative truncation order".into(),
        });
    }
    let chain = resolve_chain(voa, insertions, base)?;
    let comps: Vec<Vec<(Rat, Vector)>> = insertions
        .iter()
        .map(|ins| {
            let mv = apply_u1(voa, &ins.vector)?;
            Ok(mv.graded_components().into_iter().collect())
        })
        .collect::<Result<_>>()?;
    let n = insertions.len();
    let mut shift_total = base.base_weight();
    if shifted {
        shift_total -= voa.central_charge() / rint(24);
    }
    let (offset_q, int_q) = split_offset(&shift_total);

    let mut total = MultiSeries::zero();
    for m in 0..=n_q {
        for b in voa.basis(base, m as u32)? {
            let b_parts: Vec<u32> = b
                .terms()
                .next()
                .map(|(p, _)| p.clone())
                .expect("basis vector has one term");
            let mut states: StateSeries = HashMap::new();
            states.insert(b_parts.clone(), MultiSeries::one());
            for i in (0..n).rev() {
                let future: i64 = caps[..i].iter().sum();
                states = apply_insertion(
                    voa,
                    &comps[i],
                    &insertions[i].var,
                    caps[i],
                    chain.shifts[i],
                    &chain.offsets[i],
                    &chain.modules[i],
                    &chain.modules[i + 1],
                    m,
                    future,
                    i == 0,
                    states,
                )?;
                if states.is_empty() {
                    break;
                }
            }
            let diag = match zero_mode {
                Some(v) => {
                    let mut acc = MultiSeries::zero();
                    for (parts, xs) in &states {
                        // a zero mode preserves the grade, so only grade m
                        // states can hit the diagonal
                        if Vector::state_weight(base, parts) - base.base_weight() != rint(m) {
                            continue;
                        }
                        let st = Vector::basis(base.clone(), parts)?;
                        let ov = zhu::o_mode(voa, v, &st)?;
                        let cb = ov.coeff(&b_parts);
                        if !cb.is_zero() {
                            acc = acc.add(&xs.scale(&cb))?;
                        }
                    }
                    acc
                }
                None => states
                    .remove(&b_parts)
                    .unwrap_or_else(MultiSeries::zero),
            };
            if !diag.is_empty() {
                total = total.add(&diag.mul(&MultiSeries::monomial(Q_VAR, m + int_q)))?;
            }
        }
    }
    // the enumeration is exhaustive below every cap, so the union floors
    // stay hard; above a cap nothing is known
    let mut out = total.with_truncation(Q_VAR, n_q + int_q);
    if !offset_q.is_zero() {
        out = out.with_offset(Q_VAR, offset_q);
    }
    for (i, ins) in insertions.iter().enumerate() {
        out = out.with_truncation(&ins.var, caps[i]);
        if !chain.offsets[i].is_zero() {
            out = out.with_offset(&ins.var, chain.offsets[i].clone());
        }
    }
    Ok(out)
}

/// Trace of the chain over `base`, a Laurent series in the position
/// variables and q. Insertion i contributes x_i^(wt out - wt in) per
/// transition, so the series has total position degree zero.
pub fn trace_series(
    voa: &Voa,
    insertions: &[Insertion],
    base: &Module,
    params: &TraceParams,
) -> Result<MultiSeries> {
    let caps = vec![params.x_hi; insertions.len()];
    trace_run(
        voa,
        insertions,
        &caps,
        base,
        params.n_q,
        params.shifted,
        None,
    )
}

/// Trace with the grade preserving zero mode of `v` applied in front of
/// the chain.
pub fn trace_with_zero_mode(
    voa: &Voa,
    v: &Vector,
    insertions: &[Insertion],
    base: &Module,
    params: &TraceParams,
) -> Result<MultiSeries> {
    let caps = vec![params.x_hi; insertions.len()];
    trace_run(
        voa,
        insertions,
        &caps,
        base,
        params.n_q,
        params.shifted,
        Some(v),
    )
}

// -- window aware projections -------------------------------------------------

/// Reapply the soft edges and the offset of `s` to a rebuilt series.
/// `from_exponent_map` claims a hard hull, which is truthful but
/// narrower than the original window; widening to the original soft
/// edges keeps every coefficient inside it decided.
fn soften_like(mut out: MultiSeries, var: &str, s: &VarSpec) -> MultiSeries {
    if !s.hi_hard {
        out = out.with_truncation(var, s.hi);
    }
    if !s.lo_hard {
        out = out.with_floor(var, s.lo);
    }
    if !s.offset.is_zero() {
        out = out.with_offset(var, s.offset.clone());
    }
    out
}

/// Remove a variable column whose exponent is redundant. Errors if two
/// terms would land on the same reduced key, which would mean the
/// exponent carried information after all.
fn drop_var(ms: &MultiSeries, var: &str) -> Result<MultiSeries> {
    let names = ms.var_names();
    let Some(at) = names.iter().position(|v| *v == var) else {
        return Ok(ms.clone());
    };
    let kept: Vec<&str> = names
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != at)
        .map(|(_, v)| *v)
        .collect();
    let mut entries = Vec::new();
    let mut seen = BTreeSet::new();
    for (e, c) in ms.terms() {
        let mut key = e.clone();
        key.remove(at);
        if !seen.insert(key.clone()) {
            return Err(Error::Unsupported {
                op: "drop_var",
                detail: format!("exponent of {var} is not determined by the other variables"),
            });
        }
        entries.push((key, c.clone()));
    }
    let mut out = MultiSeries::from_exponent_map(&kept, entries);
    for v in kept {
        out = soften_like(out, v, ms.spec(v).unwrap());
    }
    Ok(out)
}

/// Verify that every exponent of `var` vanishes and project the
/// variable away.
fn strip_position(ms: &MultiSeries, var: &str) -> Result<MultiSeries> {
    let names = ms.var_names();
    let Some(at) = names.iter().position(|v| *v == var) else {
        return Ok(ms.clone());
    };
    for (e, _) in ms.terms() {
        if e[at] != 0 {
            return Err(Error::Unsupported {
                op: "trace check",
                detail: format!("trace carries net degree in {var}"),
            });
        }
    }
    ms.extract_coeff(var, 0)
}

/// Collapse a charge balanced pair of position variables to their
/// ratio, carried by `keep`. Every term must satisfy e_drop = -e_keep.
fn collapse_ratio(ms: &MultiSeries, keep: &str, drop: &str) -> Result<MultiSeries> {
    let names = ms.var_names();
    let kp = names.iter().position(|v| *v == keep);
    let dp = names.iter().position(|v| *v == drop);
    for (which, p) in [(keep, kp), (drop, dp)] {
        if let Some(i) = p {
            if !ms.spec(names[i]).unwrap().offset.is_zero() {
                return Err(Error::Unsupported {
                    op: "ratio collapse",
                    detail: format!("{which} carries a fractional offset"),
                });
            }
        }
    }
    let mut out_names: Vec<&str> = names
        .iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != kp && Some(*i) != dp)
        .map(|(_, v)| *v)
        .collect();
    out_names.push(keep);
    let mut entries = Vec::new();
    for (e, c) in ms.terms() {
        let ek = kp.map(|i| e[i]).unwrap_or(0);
        let ed = dp.map(|i| e[i]).unwrap_or(0);
        if ek + ed != 0 {
            return Err(Error::Unsupported {
                op: "ratio collapse",
                detail: format!("unbalanced exponent pair ({ek}, {ed})"),
            });
        }
        let mut key = Vec::with_capacity(out_names.len());
        for (i, _) in names.iter().enumerate() {
            if Some(i) != kp && Some(i) != dp {
                key.push(e[i]);
            }
        }
        key.push(ek);
        entries.push((key, c.clone()));
    }
    let mut out = MultiSeries::from_exponent_map(&out_names, entries);
    // the ratio window is the intersection of keep with the mirror of
    // drop; each edge inherits hardness from whichever side binds
    let ks = kp.map(|_| ms.spec(keep).unwrap().clone());
    let ds = dp.map(|_| ms.spec(drop).unwrap().clone());
    let (lo, lo_hard, hi, hi_hard) = match (ks, ds) {
        (Some(k), Some(d)) => {
            let (hi, hi_hard) = match k.hi.cmp(&(-d.lo)) {
                std::cmp::Ordering::Less => (k.hi, k.hi_hard),
                std::cmp::Ordering::Greater => (-d.lo, d.lo_hard),
                std::cmp::Ordering::Equal => (k.hi, k.hi_hard || d.lo_hard),
            };
            let (lo, lo_hard) = match k.lo.cmp(&(-d.hi)) {
                std::cmp::Ordering::Greater => (k.lo, k.lo_hard),
                std::cmp::Ordering::Less => (-d.hi, d.hi_hard),
                std::cmp::Ordering::Equal => (k.lo, k.lo_hard || d.hi_hard),
            };
            (lo, lo_hard, hi, hi_hard)
        }
        (Some(k), None) => (k.lo, k.lo_hard, k.hi, k.hi_hard),
        (None, Some(d)) => (-d.hi, d.hi_hard, -d.lo, d.lo_hard),
        (None, None) => (0, true, 0, true),
    };
    if !hi_hard {
        out = out.with_truncation(keep, hi);
    }
    if !lo_hard {
        out = out.with_floor(keep, lo);
    }
    for v in names.iter().filter(|v| **v != keep && **v != drop) {
        out = soften_like(out, v, ms.spec(v).unwrap());
    }
    Ok(out)
}

/// Substitute var -> -var.
fn reflect(ms: &MultiSeries, var: &str) -> MultiSeries {
    let names = ms.var_names();
    let Some(at) = names.iter().position(|v| *v == var) else {
        return ms.clone();
    };
    let entries: Vec<(Vec<i64>, ExactScalar)> = ms
        .terms()
        .map(|(e, c)| {
            let c = if e[at] % 2 == 0 {
                c.clone()
            } else {
                c.scale_rat(&-Rat::one())
            };
            (e.clone(), c)
        })
        .collect();
    let mut out = MultiSeries::from_exponent_map(&names, entries);
    for v in &names {
        out = soften_like(out, v, ms.spec(v).unwrap());
    }
    out
}

// -- exponent box comparisons --------------------------------------------------

type Axes<'a> = [(&'a str, i64, i64)];
type CoeffMap = BTreeMap<Vec<i64>, ExactScalar>;

/// Every coefficient inside the box must be decided by the window: the
/// box end lies inside the window or the edge beyond it is hard.
fn box_known(ms: &MultiSeries, axes: &Axes) -> Result<()> {
    for (var, lo, hi) in axes {
        if let Some(s) = ms.spec(var) {
            let lo_ok = s.lo_hard || s.lo <= *lo;
            let hi_ok = s.hi_hard || s.hi >= *hi;
            if !lo_ok || !hi_ok {
                return Err(Error::WindowTooSmall {
                    var: (*var).into(),
                    exponent: format!("box [{lo}, {hi}] outside the decided window"),
                });
            }
        }
    }
    for v in ms.var_names() {
        if !axes.iter().any(|(a, _, _)| *a == v) {
            return Err(Error::Unsupported {
                op: "box comparison",
                detail: format!("variable {v} is not on a box axis"),
            });
        }
    }
    Ok(())
}

/// Collect the coefficients inside the box, checking decidability first.
fn box_terms(ms: &MultiSeries, axes: &Axes) -> Result<CoeffMap> {
    box_known(ms, axes)?;
    let names = ms.var_names();
    let pos: Vec<Option<usize>> = axes
        .iter()
        .map(|(v, _, _)| names.iter().position(|n| n == v))
        .collect();
    let mut out = CoeffMap::new();
    'terms: for (e, c) in ms.terms() {
        let mut key = Vec::with_capacity(axes.len());
        for ((_, lo, hi), p) in axes.iter().zip(&pos) {
            let val = p.map(|i| e[i]).unwrap_or(0);
            if val < *lo || val > *hi {
                continue 'terms;
            }
            key.push(val);
        }
        if !c.is_zero() {
            out.insert(key, c.clone());
        }
    }
    Ok(out)
}

fn acc_coeff(map: &mut CoeffMap, key: Vec<i64>, c: ExactScalar) {
    match map.entry(key) {
        std::collections::btree_map::Entry::Occupied(mut oe) => {
            let s = oe.get().add(&c);
            if s.is_zero() {
                oe.remove();
            } else {
                *oe.get_mut() = s;
            }
        }
        std::collections::btree_map::Entry::Vacant(ve) => {
            if !c.is_zero() {
                ve.insert(c);
            }
        }
    }
}

/// Accumulate scale * f * g into the box map by sparse convolution of
/// the materialized terms. The caller is responsible for sizing the
/// factor windows so that every product term landing inside the box is
/// reachable; pairs landing outside are dropped.
fn box_mul_into(
    acc: &mut CoeffMap,
    f: &MultiSeries,
    g: &MultiSeries,
    axes: &Axes,
    scale: &Rat,
) -> Result<()> {
    for ms in [f, g] {
        for v in ms.var_names() {
            if !axes.iter().any(|(a, _, _)| *a == v) {
                return Err(Error::Unsupported {
                    op: "box product",
                    detail: format!("variable {v} is not on a box axis"),
                });
            }
        }
    }
    let fnames = f.var_names();
    let gnames = g.var_names();
    let fpos: Vec<Option<usize>> = axes
        .iter()
        .map(|(v, _, _)| fnames.iter().position(|n| n == v))
        .collect();
    let gpos: Vec<Option<usize>> = axes
        .iter()
        .map(|(v, _, _)| gnames.iter().position(|n| n == v))
        .collect();
    for (ef, cf) in f.terms() {
        'inner: for (eg, cg) in g.terms() {
            let mut key = Vec::with_capacity(axes.len());
            for (((_, lo, hi), pf), pg) in axes.iter().zip(&fpos).zip(&gpos) {
                let val = pf.map(|i| ef[i]).unwrap_or(0) + pg.map(|i| eg[i]).unwrap_or(0);
                if val < *lo || val > *hi {
                    continue 'inner;
                }
                key.push(val);
            }
            acc_coeff(acc, key, cf.mul(cg).scale_rat(scale));
        }
    }
    Ok(())
}

/// Compare two box maps coefficient by coefficient.
fn box_compare(lhs: &CoeffMap, rhs: &CoeffMap, axes: &Axes, label: &str) -> CheckReport {
    let mut report = CheckReport::new();
    let keys: BTreeSet<&Vec<i64>> = lhs.keys().chain(rhs.keys()).collect();
    if keys.is_empty() {
        report.record(true, String::new);
        return report;
    }
    let zero = ExactScalar::zero();
    for key in keys {
        let l = lhs.get(key).unwrap_or(&zero);
        let r = rhs.get(key).unwrap_or(&zero);
        report.record(l == r, || {
            let at: Vec<String> = axes
                .iter()
                .zip(key)
                .map(|((v, _, _), e)| format!("{v}^{e}"))
                .collect();
            format!("{label}: mismatch at {} ({l} vs {r})", at.join(" "))
        });
    }
    report
}

/// Check that a series vanishes on its own decided window, requiring
/// the q window to span at least `n_q` orders so the statement is not
/// vacuous.
fn vanish_on_window(ms: &MultiSeries, n_q: i64, label: &str) -> Result<CheckReport> {
    let mut report = CheckReport::new();
    let (q_lo, q_hi) = match ms.spec(Q_VAR) {
        Some(s) => (s.lo, s.hi),
        None => (0, n_q),
    };
    report.record(q_hi - q_lo >= n_q, || {
        format!("{label}: q window spans fewer than {n_q} orders")
    });
    let names = ms.var_names();
    let owned: Vec<(&str, i64, i64)> = names
        .iter()
        .map(|v| {
            let s = ms.spec(v).unwrap();
            (*v, s.lo, s.hi)
        })
        .collect();
    let map = box_terms(ms, &owned)?;
    report.absorb(box_compare(&map, &CoeffMap::new(), &owned, label));
    Ok(report)
}

// -- elliptic kernels in check coordinates -------------------------------------

/// d^m/dy^m of (G_2(q) y + pi i).
fn g2_linear_derivative(m: i64, n_q: i64) -> Result<MultiSeries> {
    match m {
        0 => {
            let half_lambda = ExactScalar::lambda_pow(1)
                .scale_rat(&Rat::new(BigInt::from(1), BigInt::from(2)));
            eisenstein(2, Q_VAR, n_q)?
                .mul(&MultiSeries::monomial(Y_VAR, 1))
                .add(&MultiSeries::constant(half_lambda))
        }
        1 => eisenstein(2, Q_VAR, n_q),
        _ => Ok(MultiSeries::zero()),
    }
}

/// P_m(s^orient e^(-lambda y); q) as a series in the ratio variable, the
/// separation y and q: each ratio power a picks up e^(-lambda a y).
fn p_kernel_exp(
    m: u32,
    s_var: &str,
    orient: i64,
    x_hi: i64,
    y_hi: i64,
    n_q: i64,
) -> Result<MultiSeries> {
    const R: &str = "ratio";
    let p = p_series(m, R, Q_VAR, x_hi, n_q)?;
    let names = p.var_names();
    let rp = names.iter().position(|v| *v == R).unwrap();
    let qp = names.iter().position(|v| *v == Q_VAR).unwrap();
    let mut entries = Vec::new();
    for (e, c) in p.terms() {
        let a = e[rp];
        let qe = e[qp];
        let mut pw = c.clone();
        entries.push((vec![orient * a, 0, qe], pw.clone()));
        for k in 1..=y_hi {
            pw = pw
                .mul(&ExactScalar::lambda_pow(1))
                .scale_rat(&Rat::new(BigInt::from(-a), BigInt::from(k)));
            entries.push((vec![orient * a, k, qe], pw.clone()));
        }
    }
    Ok(
        MultiSeries::from_exponent_map(&[s_var, Y_VAR, Q_VAR], entries)
            .with_truncation(s_var, x_hi)
            .with_floor(s_var, -x_hi)
            .with_truncation(Y_VAR, y_hi)
            .with_truncation(Q_VAR, n_q),
    )
}

/// Rewrite a two puncture trace from position variables to torus
/// coordinates: with x_i = e^(lambda z_i) a balanced pair (k, -k)
/// becomes e^(lambda k d), d the coordinate difference toward puncture
/// j, expanded to order `d_hi`.
fn to_torus(ms: &MultiSeries, j0: usize, vars: [&str; 2], d_hi: i64) -> Result<MultiSeries> {
    let names = ms.var_names();
    for v in &names {
        if *v != vars[0] && *v != vars[1] && *v != Q_VAR {
            return Err(Error::Unsupported {
                op: "torus coordinates",
                detail: format!("unexpected variable {v}"),
            });
        }
    }
    let p0 = names.iter().position(|v| *v == vars[0]);
    let p1 = names.iter().position(|v| *v == vars[1]);
    let pq = names.iter().position(|v| *v == Q_VAR);
    let mut cache: HashMap<i64, Vec<ExactScalar>> = HashMap::new();
    let mut entries = Vec::new();
    for (e, c) in ms.terms() {
        let e0 = p0.map(|i| e[i]).unwrap_or(0);
        let e1 = p1.map(|i| e[i]).unwrap_or(0);
        let qe = pq.map(|i| e[i]).unwrap_or(0);
        if e0 + e1 != 0 {
            return Err(Error::Unsupported {
                op: "torus coordinates",
                detail: format!("unbalanced exponent pair ({e0}, {e1})"),
            });
        }
        let k = if j0 == 0 { e1 } else { e0 };
        let coeffs = cache.entry(k).or_insert_with(|| {
            let mut v = Vec::with_capacity(d_hi as usize + 1);
            let mut cur = ExactScalar::one();
            v.push(cur.clone());
            for t in 1..=d_hi {
                cur = cur
                    .mul(&ExactScalar::lambda_pow(1))
                    .scale_rat(&Rat::new(BigInt::from(k), BigInt::from(t)));
                v.push(cur.clone());
            }
            v
        });
        for (t, w) in coeffs.iter().enumerate() {
            entries.push((vec![t as i64, qe], c.mul(w)));
        }
    }
    let mut out =
        MultiSeries::from_exponent_map(&[D_VAR, Q_VAR], entries).with_truncation(D_VAR, d_hi);
    if let Some(s) = ms.spec(Q_VAR) {
        out = soften_like(out, Q_VAR, s);
    }
    Ok(out)
}

// -- identity checks ------------------------------------------------------------

fn require_vacuum_vector(voa: &Voa, u: &Vector, op: &'static str) -> Result<()> {
    if *u.module() != voa.vacuum_module() {
        return Err(Error::Unsupported {
            op,
            detail: "the expanded insertion must live in the vacuum module".into(),
        });
    }
    Ok(())
}

fn reject_reserved_vars(insertions: &[Insertion], op: &'static str) -> Result<()> {
    for ins in insertions {
        if ins.var == AUX_VAR || ins.var == Y_VAR || ins.var == D_VAR || ins.var == ZJ_VAR {
            return Err(Error::Unsupported {
                op,
                detail: format!("position variable {} is reserved", ins.var),
            });
        }
    }
    Ok(())
}

fn with_replaced(insertions: &[Insertion], at: usize, v: Vector) -> Vec<Insertion> {
    let mut out = insertions.to_vec();
    out[at] = Insertion::new(v, insertions[at].var.clone());
    out
}

/// Zero point expansion: the trace of an extra vacuum insertion equals
/// the P kernel expansion over every chain slot plus the zero mode
/// term. Compared on the box |e_i| <= x_box, q order <= n_q. The extra
/// insertion rides an auxiliary variable whose exponent is forced by
/// the degree zero grading, so it is projected away before comparing.
pub fn check_identity0(
    voa: &Voa,
    u: &Vector,
    insertions: &[Insertion],
    base: &Module,
    n_q: i64,
    x_box: i64,
) -> Result<CheckReport> {
    require_vacuum_vector(voa, u, "zero point expansion")?;
    reject_reserved_vars(insertions, "zero point expansion")?;
    let n = insertions.len();
    // traces must reach x_box plus one q window deeper, because the
    // negative kernel tail pairs each position exponent with up to n_q
    // units of grade
    let x_t = x_box + n_q;
    let caps = vec![x_t; n];
    let q_lo = split_offset(&base.base_weight()).1;

    let mut chain = Vec::with_capacity(n + 1);
    chain.push(Insertion::new(u.clone(), AUX_VAR));
    chain.extend_from_slice(insertions);
    let mut caps_l = vec![n as i64 * x_t];
    caps_l.extend_from_slice(&caps);
    let lhs = drop_var(
        &trace_run(voa, &chain, &caps_l, base, n_q, false, None)?,
        AUX_VAR,
    )?;

    let mut axes: Vec<(&str, i64, i64)> = insertions
        .iter()
        .map(|ins| (ins.var.as_str(), -x_box, x_box))
        .collect();
    axes.push((Q_VAR, q_lo, q_lo + n_q));
    let lhs_map = box_terms(&lhs, &axes)?;

    let u_mod = apply_u1(voa, u)?;
    let o_trace = trace_run(voa, insertions, &caps, base, n_q, false, Some(&u_mod))?;
    let mut rhs = box_terms(&o_trace, &axes)?;
    for i in 0..n {
        let ceil = voa.mode_ceiling(u, &insertions[i].vector);
        for m in 0..=ceil {
            let um = voa.mode_int(u, m, &insertions[i].vector)?;
            if um.is_zero() {
                continue;
            }
            let ins2 = with_replaced(insertions, i, um);
            let t = trace_run(voa, &ins2, &caps, base, n_q, false, None)?;
            let lo_t = t.spec(&insertions[i].var).map(|s| s.lo).unwrap_or(0);
            // the positive tail pairs the trace down to its hard floor,
            // the negative tail carries at least one q power per unit
            let x_p = (x_box - lo_t).max(n_q);
            let pk = p_series(m as u32 + 1, &insertions[i].var, Q_VAR, x_p, n_q)?;
            box_mul_into(&mut rhs, &pk, &t, &axes, &Rat::one())?;
        }
    }
    Ok(box_compare(&lhs_map, &rhs, &axes, "zero point expansion"))
}

/// The sum over chain slots of the zero mode insertion traces vanishes.
pub fn check_identity05(
    voa: &Voa,
    u: &Vector,
    insertions: &[Insertion],
    base: &Module,
    n_q: i64,
    x_hi: i64,
) -> Result<CheckReport> {
    require_vacuum_vector(voa, u, "zero mode sum")?;
    reject_reserved_vars(insertions, "zero mode sum")?;
    let caps = vec![x_hi; insertions.len()];
    let q_lo = split_offset(&base.base_weight()).1;
    let mut acc = MultiSeries::zero();
    for i in 0..insertions.len() {
        let u0 = voa.mode_int(u, 0, &insertions[i].vector)?;
        if u0.is_zero() {
            continue;
        }
        let ins2 = with_replaced(insertions, i, u0);
        acc = acc.add(&trace_run(voa, &ins2, &caps, base, n_q, false, None)?)?;
    }
    let mut axes: Vec<(&str, i64, i64)> = insertions
        .iter()
        .map(|ins| (ins.var.as_str(), -x_hi, x_hi))
        .collect();
    axes.push((Q_VAR, q_lo, q_lo + n_q));
    let map = box_terms(&acc, &axes)?;
    Ok(box_compare(&map, &CoeffMap::new(), &axes, "zero mode sum"))
}

/// Commutation identity for a two puncture chain: moving a vacuum
/// vector into slot j through Y(u, y) expands into reflected
/// Weierstrass kernels at slot j, exponentially shifted P kernels at
/// the other slot and the zero mode term. Both positions collapse to
/// their ratio, carried by the first insertion variable.
#[allow(clippy::too_many_arguments)]
pub fn check_identity1(
    voa: &Voa,
    u: &Vector,
    j: usize,
    insertions: &[Insertion],
    base: &Module,
    n_q: i64,
    x_box: i64,
    y_hi: i64,
) -> Result<CheckReport> {
    require_vacuum_vector(voa, u, "commutation identity")?;
    reject_reserved_vars(insertions, "commutation identity")?;
    if insertions.len() != 2 {
        return Err(Error::Unsupported {
            op: "commutation identity",
            detail: "exactly two punctures are supported".into(),
        });
    }
    if j < 1 || j > 2 {
        return Err(Error::Unsupported {
            op: "commutation identity",
            detail: format!("slot {j} out of range"),
        });
    }
    let jm = j - 1;
    let im = 1 - jm;
    let x_t = x_box + n_q;
    let caps = vec![x_t; 2];
    let q_lo = split_offset(&base.base_weight()).1;
    let s_var = insertions[0].var.as_str();
    let drop = insertions[1].var.as_str();
    let wj = &insertions[jm].vector;
    let ceil_j = voa.mode_ceiling(u, wj);
    let lo_y = -(ceil_j + 1).max(0);

    let mut lhs = MultiSeries::zero();
    for ey in -(ceil_j + 1)..=y_hi {
        let v = voa.mode_int(u, -ey - 1, wj)?;
        if v.is_zero() {
            continue;
        }
        let ins2 = with_replaced(insertions, jm, v);
        let t = collapse_ratio(
            &trace_run(voa, &ins2, &caps, base, n_q, false, None)?,
            s_var,
            drop,
        )?;
        lhs = lhs.add(&t.mul(&MultiSeries::monomial(Y_VAR, ey)))?;
    }
    lhs = lhs.with_truncation(Y_VAR, y_hi);

    let axes: Vec<(&str, i64, i64)> = vec![
        (s_var, -x_box, x_box),
        (Y_VAR, lo_y, y_hi),
        (Q_VAR, q_lo, q_lo + n_q),
    ];
    let lhs_map = box_terms(&lhs, &axes)?;

    let u_mod = apply_u1(voa, u)?;
    let o_trace = collapse_ratio(
        &trace_run(voa, insertions, &caps, base, n_q, false, Some(&u_mod))?,
        s_var,
        drop,
    )?;
    let mut rhs = box_terms(&o_trace, &axes)?;

    // slot j: (-1)^(m+1) (wp_(m+1)(-y) + d^m/dy^m (G_2 y + pi i))
    for m in 0..=ceil_j {
        let um = voa.mode_int(u, m, wj)?;
        if um.is_zero() {
            continue;
        }
        let ins2 = with_replaced(insertions, jm, um);
        let t = collapse_ratio(
            &trace_run(voa, &ins2, &caps, base, n_q, false, None)?,
            s_var,
            drop,
        )?;
        let factor = reflect(&wp_tilde(m as u32 + 1, Y_VAR, Q_VAR, y_hi, n_q)?, Y_VAR)
            .add(&g2_linear_derivative(m, n_q)?)?;
        let sign = if (m + 1) % 2 == 0 {
            Rat::one()
        } else {
            -Rat::one()
        };
        box_mul_into(&mut rhs, &factor, &t, &axes, &sign)?;
    }

    // the other slot: P kernels with the ratio shifted by e^(lambda y)
    let wi = &insertions[im].vector;
    let ceil_i = voa.mode_ceiling(u, wi);
    let orient: i64 = if im == 0 { 1 } else { -1 };
    let x_p = x_box + n_q + x_t;
    for m in 0..=ceil_i {
        let um = voa.mode_int(u, m, wi)?;
        if um.is_zero() {
            continue;
        }
        let ins2 = with_replaced(insertions, im, um);
        let t = collapse_ratio(
            &trace_run(voa, &ins2, &caps, base, n_q, false, None)?,
            s_var,
            drop,
        )?;
        let pk = p_kernel_exp(m as u32 + 1, s_var, orient, x_p, y_hi, n_q)?;
        box_mul_into(&mut rhs, &pk, &t, &axes, &Rat::one())?;
    }
    Ok(box_compare(&lhs_map, &rhs, &axes, "commutation identity"))
}

/// Torus recursion: the trace of a creation mode u_(-l) at slot j
/// expands into Eisenstein terms at slot j, Weierstrass kernels in the
/// coordinate differences at the other slot and, for l = 1, the
/// quasimodular G_2 correction and the zero mode term. Supports one or
/// two punctures; positions are rewritten in torus coordinates.
#[allow(clippy::too_many_arguments)]
pub fn check_identity2(
    voa: &Voa,
    u: &Vector,
    l: i64,
    j: usize,
    insertions: &[Insertion],
    base: &Module,
    n_q: i64,
    d_hi: i64,
) -> Result<CheckReport> {
    require_vacuum_vector(voa, u, "torus recursion")?;
    reject_reserved_vars(insertions, "torus recursion")?;
    let n = insertions.len();
    if n == 0 || n > 2 {
        return Err(Error::Unsupported {
            op: "torus recursion",
            detail: "one or two punctures are supported".into(),
        });
    }
    if l < 1 {
        return Err(Error::Unsupported {
            op: "torus recursion",
            detail: "the creation index must be positive".into(),
        });
    }
    if j < 1 || j > n {
        return Err(Error::Unsupported {
            op: "torus recursion",
            detail: format!("slot {j} out of range"),
        });
    }
    let jm = j - 1;
    let other = if n == 2 { Some(1 - jm) } else { None };
    // in torus coordinates every balanced exponent is bounded by the
    // q order, so the position caps need not exceed it
    let caps = vec![n_q; n];
    let q_lo = split_offset(&base.base_weight()).1;
    let m_max = other
        .map(|im| voa.mode_ceiling(u, &insertions[im].vector))
        .unwrap_or(-1);
    // the Weierstrass kernels reach d^(-(m+l)), so the regular factors
    // must be expanded deep enough for the product to cover d_hi
    let d_t = d_hi + (m_max + l).max(0);
    let vars = [insertions[0].var.as_str(), insertions.last().unwrap().var.as_str()];
    let conv = |t: &MultiSeries| -> Result<MultiSeries> {
        if n == 2 {
            to_torus(t, jm, vars, d_t)
        } else {
            strip_position(t, vars[0])
        }
    };

    let wj = &insertions[jm].vector;
    let lhs = conv(&trace_run(
        voa,
        &with_replaced(insertions, jm, voa.mode_int(u, -l, wj)?),
        &caps,
        base,
        n_q,
        false,
        None,
    )?)?;

    let mut rhs = MultiSeries::zero();
    // slot j: (-1)^(l+1) C(2k+1, l-1) G_(2k+2)
    let ceil_j = voa.mode_ceiling(u, wj);
    let sign_l = if (l + 1) % 2 == 0 {
        Rat::one()
    } else {
        -Rat::one()
    };
    let mut k = 1i64;
    while 2 * k + 2 - l <= ceil_j {
        let um = voa.mode_int(u, 2 * k + 2 - l, wj)?;
        if !um.is_zero() {
            let t = conv(&trace_run(
                voa,
                &with_replaced(insertions, jm, um),
                &caps,
                base,
                n_q,
                false,
                None,
            )?)?;
            let g = eisenstein((2 * k + 2) as u32, Q_VAR, n_q)?;
            let c = binom(2 * k + 1, (l - 1) as u32) * &sign_l;
            rhs = rhs.add(&g.mul(&t).scale_rat(&c))?;
        }
        k += 1;
    }
    // the other slot: (-1)^(m+l) C(-m-1, l-1) wp_(m+l)(d)
    if let Some(im) = other {
        for m in 0..=m_max {
            let um = voa.mode_int(u, m, &insertions[im].vector)?;
            if um.is_zero() {
                continue;
            }
            let t = conv(&trace_run(
                voa,
                &with_replaced(insertions, im, um),
                &caps,
                base,
                n_q,
                false,
                None,
            )?)?;
            let wp = wp_tilde((m + l) as u32, D_VAR, Q_VAR, d_hi, n_q)?;
            let sign = if (m + l) % 2 == 0 {
                Rat::one()
            } else {
                -Rat::one()
            };
            let c = binom(-m - 1, (l - 1) as u32) * sign;
            rhs = rhs.add(&wp.mul(&t).scale_rat(&c))?;
        }
    }
    // l = 1 only: the G_2 correction with its position polynomial, and
    // the zero mode term
    if l == 1 {
        let g2 = eisenstein(2, Q_VAR, n_q)?;
        let zj = MultiSeries::monomial(ZJ_VAR, 1);
        let mut t3 = MultiSeries::zero();
        for i in 0..n {
            let u1 = voa.mode_int(u, 1, &insertions[i].vector)?;
            if !u1.is_zero() {
                let t = conv(&trace_run(
                    voa,
                    &with_replaced(insertions, i, u1),
                    &caps,
                    base,
                    n_q,
                    false,
                    None,
                )?)?;
                t3 = t3.add(&t)?;
            }
            let u0 = voa.mode_int(u, 0, &insertions[i].vector)?;
            if !u0.is_zero() {
                let t = conv(&trace_run(
                    voa,
                    &with_replaced(insertions, i, u0),
                    &caps,
                    base,
                    n_q,
                    false,
                    None,
                )?)?;
                t3 = t3.add(&t.mul(&zj))?;
                if Some(i) == other {
                    t3 = t3.add(&t.shift(D_VAR, 1))?;
                }
            }
        }
        rhs = rhs.add(&g2.mul(&t3))?;
        let u_mod = apply_u1(voa, u)?;
        rhs = rhs.add(&conv(&trace_run(
            voa,
            insertions,
            &caps,
            base,
            n_q,
            false,
            Some(&u_mod),
        )?)?)?;
    }

    let diff = lhs.sub(&rhs)?;
    let lo_d = if other.is_some() { -(m_max + l).max(0) } else { 0 };
    let mut axes: Vec<(&str, i64, i64)> = Vec::new();
    if other.is_some() {
        axes.push((D_VAR, lo_d, d_hi));
    }
    axes.push((ZJ_VAR, 0, 1));
    axes.push((Q_VAR, q_lo, q_lo + n_q));
    let map = box_terms(&diff, &axes)?;
    Ok(box_compare(&map, &CoeffMap::new(), &axes, "torus recursion"))
}

/// The coordinate derivative at slot j equals the trace with L(-1)
/// applied to that insertion. The derivative acts as lambda times the
/// offset aware Euler operator in the position variable.
pub fn check_l1_derivative_trace(
    voa: &Voa,
    j: usize,
    insertions: &[Insertion],
    base: &Module,
    params: &TraceParams,
) -> Result<CheckReport> {
    if j < 1 || j > insertions.len() {
        return Err(Error::Unsupported {
            op: "translation covariance",
            detail: format!("slot {j} out of range"),
        });
    }
    let jm = j - 1;
    let t = trace_series(voa, insertions, base, params)?;
    let mut report = CheckReport::new();
    report.record(!t.is_empty(), || "trace vanishes identically".into());
    let lhs = t
        .q_d_dq(&insertions[jm].var)
        .scale(&ExactScalar::lambda_pow(1));
    let v = voa.l_apply(-1, &insertions[jm].vector)?;
    let ins2 = with_replaced(insertions, jm, v);
    let rhs = trace_series(voa, &ins2, base, params)?;
    report.absorb(vanish_on_window(
        &lhs.sub(&rhs)?,
        params.n_q,
        "translation covariance",
    )?);
    Ok(report)
}

/// One puncture heat equation in the shifted picture: the trace F of a
/// single insertion does not depend on the position, and
/// lambda^2 q dF/dq + G_2 wt(w) F = F(L(-2)w) - sum G_(2k+2) F(L(2k)w).
pub fn check_ode_n1(voa: &Voa, w1: &Vector, base: &Module, n_q: i64) -> Result<CheckReport> {
    let wt = w1.weight().ok_or_else(|| Error::Unsupported {
        op: "heat equation",
        detail: "the insertion must be homogeneous".into(),
    })?;
    let caps = [2i64];
    let mut report = CheckReport::new();
    let raw = trace_run(
        voa,
        &[Insertion::new(w1.clone(), "x1")],
        &caps,
        base,
        n_q,
        true,
        None,
    )?;
    report.record(!raw.is_empty(), || "trace vanishes identically".into());
    if let Some(px) = raw.var_names().iter().position(|v| *v == "x1") {
        for (e, _) in raw.terms() {
            report.record(e[px] == 0, || {
                format!("position dependence at exponent {}", e[px])
            });
        }
    }
    if !report.passed {
        return Ok(report);
    }
    let tr = |v: &Vector| -> Result<MultiSeries> {
        let run = trace_run(
            voa,
            &[Insertion::new(v.clone(), "x1")],
            &caps,
            base,
            n_q,
            true,
            None,
        )?;
        run.extract_coeff("x1", 0)
    };
    let t = raw.extract_coeff("x1", 0)?;
    let g2 = eisenstein(2, Q_VAR, n_q)?;
    let lhs = t
        .q_d_dq(Q_VAR)
        .scale(&ExactScalar::lambda_pow(2))
        .add(&g2.mul(&t).scale_rat(&wt))?;
    let mut rhs = tr(&voa.l_apply(-2, w1)?)?;
    let mut k = 1i64;
    while rint(2 * k) <= wt {
        let v = voa.l_apply(2 * k, w1)?;
        if !v.is_zero() {
            rhs = rhs.sub(&eisenstein((2 * k + 2) as u32, Q_VAR, n_q)?.mul(&tr(&v)?))?;
        }
        k += 1;
    }
    report.absorb(vanish_on_window(
        &lhs.sub(&rhs)?,
        n_q,
        "heat equation",
    )?);
    Ok(report)
}

/// Term by term match between the l = 1 torus recursion for the
/// conformal vector and the heat equation: the L(0) insertion carries
/// the weight, the L(-1) insertion vanishes, the zero mode term is the
/// shifted Euler operator, and the assembled equation holds. Runs in
/// the plain picture on a one puncture chain.
pub fn check_mod_inv_der(voa: &Voa, w1: &Vector, base: &Module, n_q: i64) -> Result<CheckReport> {
    let omega = voa.omega();
    let wt = w1.weight().ok_or_else(|| Error::Unsupported {
        op: "heat equation",
        detail: "the insertion must be homogeneous".into(),
    })?;
    let caps = [2i64];
    let ins = [Insertion::new(w1.clone(), "x1")];
    let tr = |v: &Vector| -> Result<MultiSeries> {
        let run = trace_run(
            voa,
            &[Insertion::new(v.clone(), "x1")],
            &caps,
            base,
            n_q,
            false,
            None,
        )?;
        strip_position(&run, "x1")
    };
    let t = tr(w1)?;
    let mut report = CheckReport::new();
    report.record(!t.is_empty(), || "trace vanishes identically".into());

    // L(0) insertion carries the conformal weight
    let l0 = tr(&voa.l_apply(0, w1)?)?;
    report.absorb(vanish_on_window(
        &l0.sub(&t.scale_rat(&wt))?,
        n_q,
        "weight term",
    )?);
    // L(-1) insertion vanishes under the trace
    report.absorb(vanish_on_window(
        &tr(&voa.l_apply(-1, w1)?)?,
        n_q,
        "translation term",
    )?);
    // the zero mode of the modified conformal vector is the shifted
    // Euler operator
    let u_mod = apply_u1(voa, &omega)?;
    let o_term = strip_position(
        &trace_run(voa, &ins, &caps, base, n_q, false, Some(&u_mod))?,
        "x1",
    )?;
    let c24 = voa.central_charge() / rint(24);
    let euler = t
        .q_d_dq(Q_VAR)
        .sub(&t.scale_rat(&c24))?
        .scale(&ExactScalar::lambda_pow(2));
    report.absorb(vanish_on_window(
        &o_term.sub(&euler)?,
        n_q,
        "zero mode term",
    )?);
    // the assembled equation
    let g2 = eisenstein(2, Q_VAR, n_q)?;
    let lhs = euler.add(&g2.mul(&t).scale_rat(&wt))?;
    let mut rhs = tr(&voa.l_apply(-2, w1)?)?;
    let mut k = 1i64;
    while rint(2 * k) <= wt {
        let v = voa.l_apply(2 * k, w1)?;
        if !v.is_zero() {
            rhs = rhs.sub(&eisenstein((2 * k + 2) as u32, Q_VAR, n_q)?.mul(&tr(&v)?))?;
        }
        k += 1;
    }
    report.absorb(vanish_on_window(
        &lhs.sub(&rhs)?,
        n_q,
        "assembled heat equation",
    )?);
    // and the recursion it regroups
    report.absorb(check_identity2(voa, &omega, 1, 1, &ins, base, n_q, 1)?);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::voa::partition_counts;

    fn rat(n: i64, d: i64) -> Rat {
        Rat::new(BigInt::from(n), BigInt::from(d))
    }

    fn heisenberg() -> (Voa, Module) {
        let voa = Voa::free_boson(Rat::one());
        let base = voa.fock(Rat::zero()).unwrap();
        (voa, base)
    }

    #[test]
    fn fock_character_counts_partitions() {
        let (voa, base) = heisenberg();
        let one = voa.vacuum_state(&[]).unwrap();
        let params = TraceParams {
            n_q: 6,
            x_hi: 0,
            shifted: true,
        };
        let t = trace_series(&voa, &[Insertion::new(one, "x1")], &base, &params).unwrap();
        assert_eq!(t.spec(Q_VAR).unwrap().offset, rat(23, 24));
        let p = partition_counts(6, 1);
        for m in 0..=6i64 {
            let c = t.coeff_at(&[(Q_VAR, m - 1), ("x1", 0)]).unwrap();
            assert_eq!(c, ExactScalar::from_rat(rint(p[m as usize] as i64)));
        }
    }

    #[test]
    fn virasoro_character_counts_partitions_from_two() {
        let voa = Voa::virasoro(rat(1, 2));
        let base = voa.vacuum_module();
        let one = voa.vacuum_state(&[]).unwrap();
        let params = TraceParams {
            n_q: 6,
            x_hi: 0,
            shifted: false,
        };
        let t = trace_series(&voa, &[Insertion::new(one, "x1")], &base, &params).unwrap();
        let p = partition_counts(6, 2);
        for m in 0..=6i64 {
            let c = t.coeff_at(&[(Q_VAR, m)]).unwrap();
            assert_eq!(c, ExactScalar::from_rat(rint(p[m as usize] as i64)));
        }
    }

    #[test]
    fn charged_trace_leads_with_the_zero_mode_eigenvalue() {
        let (voa, _) = heisenberg();
        let base = voa.fock(rint(2)).unwrap();
        let a = voa.vacuum_state(&[1]).unwrap();
        let params = TraceParams {
            n_q: 4,
            x_hi: 1,
            shifted: false,
        };
        let t = trace_series(&voa, &[Insertion::new(a, "x1")], &base, &params).unwrap();
        let p = partition_counts(4, 1);
        for m in 0..=4i64 {
            let c = t.coeff_at(&[(Q_VAR, m + 2), ("x1", 0)]).unwrap();
            let want = ExactScalar::lambda_pow(1).scale_rat(&rint(2 * p[m as usize] as i64));
            assert_eq!(c, want);
        }
        for (e, _) in t.terms() {
            let px = t.var_names().iter().position(|v| *v == "x1");
            if let Some(px) = px {
                assert_eq!(e[px], 0);
            }
        }
    }

    #[test]
    fn two_point_trace_is_degree_zero_and_q_cyclic() {
        let (voa, base) = heisenberg();
        let a = voa.vacuum_state(&[1]).unwrap();
        let params = TraceParams {
            n_q: 3,
            x_hi: 3,
            shifted: false,
        };
        let fwd = [
            Insertion::new(a.clone(), "x1"),
            Insertion::new(a.clone(), "x2"),
        ];
        let rot = [
            Insertion::new(a.clone(), "x2"),
            Insertion::new(a.clone(), "x1"),
        ];
        let t1 = trace_series(&voa, &fwd, &base, &params).unwrap();
        let t2 = trace_series(&voa, &rot, &base, &params).unwrap();
        let names = t1.var_names();
        let p1 = names.iter().position(|v| *v == "x1").unwrap();
        let p2 = names.iter().position(|v| *v == "x2").unwrap();
        assert!(t1.num_terms() > 0);
        for (e, _) in t1.terms() {
            assert_eq!(e[p1] + e[p2], 0);
        }
        // rotating the chain shifts the rotated position by one power of
        // q: the rotated coefficient at (e1, e2, m) is the forward one at
        // (e1, e2, m - e2)
        let mut compared = 0;
        for e2 in -3i64..=3 {
            for m in 0..=3i64 {
                if !(0..=3).contains(&(m - e2)) {
                    continue;
                }
                let r = t2.coeff_at(&[("x1", -e2), ("x2", e2), (Q_VAR, m)]).unwrap();
                let f = t1
                    .coeff_at(&[("x1", -e2), ("x2", e2), (Q_VAR, m - e2)])
                    .unwrap();
                assert_eq!(r, f, "rotation mismatch at e2={e2} m={m}");
                compared += 1;
            }
        }
        assert!(compared > 8);
    }

    #[test]
    fn zero_point_expansion_trivial_insertion() {
        // a charged trace module keeps the single current trace nonzero
        let (voa, _) = heisenberg();
        let base = voa.fock(Rat::one()).unwrap();
        let one = voa.vacuum_state(&[]).unwrap();
        let a = voa.vacuum_state(&[1]).unwrap();
        let ins = [Insertion::new(a, "x1")];
        let report = check_identity0(&voa, &one, &ins, &base, 3, 2).unwrap();
        assert!(report.passed, "{report}");
        assert!(report.cases >= 4);
    }

    #[test]
    fn zero_point_expansion_current() {
        let (voa, base) = heisenberg();
        let a = voa.vacuum_state(&[1]).unwrap();
        let ins = [Insertion::new(a.clone(), "x1")];
        let report = check_identity0(&voa, &a, &ins, &base, 3, 2).unwrap();
        assert!(report.passed, "{report}");
    }

    #[test]
    fn zero_point_expansion_conformal_vector() {
        let voa = Voa::virasoro(rat(1, 2));
        let base = voa.vacuum_module();
        let w = voa.omega();
        let ins = [Insertion::new(w.clone(), "x1")];
        let report = check_identity0(&voa, &w, &ins, &base, 3, 2).unwrap();
        assert!(report.passed, "{report}");
    }

    #[test]
    fn zero_mode_sum_two_punctures() {
        let (voa, base) = heisenberg();
        let a = voa.vacuum_state(&[1]).unwrap();
        let ins = [
            Insertion::new(a.clone(), "x1"),
            Insertion::new(a.clone(), "x2"),
        ];
        let report = check_identity05(&voa, &voa.omega(), &ins, &base, 2, 2).unwrap();
        assert!(report.passed, "{report}");
    }

    #[test]
    fn commutation_identity_both_slots() {
        let (voa, base) = heisenberg();
        let a = voa.vacuum_state(&[1]).unwrap();
        let ins = [
            Insertion::new(a.clone(), "x1"),
            Insertion::new(a.clone(), "x2"),
        ];
        for j in [1, 2] {
            let report = check_identity1(&voa, &a, j, &ins, &base, 2, 1, 2).unwrap();
            assert!(report.passed, "slot {j}: {report}");
        }
    }

    #[test]
    fn torus_recursion_higher_creation_mode() {
        let (voa, base) = heisenberg();
        let a = voa.vacuum_state(&[1]).unwrap();
        let ins = [
            Insertion::new(a.clone(), "x1"),
            Insertion::new(a.clone(), "x2"),
        ];
        let report = check_identity2(&voa, &a, 2, 1, &ins, &base, 2, 2).unwrap();
        assert!(report.passed, "{report}");
    }

    #[test]
    fn torus_recursion_with_quasimodular_correction() {
        let (voa, base) = heisenberg();
        let a = voa.vacuum_state(&[1]).unwrap();
        let ins = [
            Insertion::new(a.clone(), "x1"),
            Insertion::new(a.clone(), "x2"),
        ];
        let report = check_identity2(&voa, &a, 1, 2, &ins, &base, 2, 2).unwrap();
        assert!(report.passed, "{report}");
    }

    #[test]
    fn translation_covariance_on_a_lattice_chain() {
        // gram 2 with charges +-2 realizes the norm 2 lattice points at
        // integer conformal weight 1
        let voa = Voa::free_boson(rint(2));
        let base = voa.fock(Rat::zero()).unwrap();
        let up = voa.fock_state(rint(2), &[]).unwrap();
        let down = voa.fock_state(rint(-2), &[]).unwrap();
        let ins = [Insertion::new(up, "x1"), Insertion::new(down, "x2")];
        let params = TraceParams {
            n_q: 3,
            x_hi: 3,
            shifted: false,
        };
        for j in [1, 2] {
            let report = check_l1_derivative_trace(&voa, j, &ins, &base, &params).unwrap();
            assert!(report.passed, "slot {j}: {report}");
        }
    }

    #[test]
    fn heat_equation_fock_insertions() {
        let (voa, base) = heisenberg();
        let one = voa.vacuum_state(&[]).unwrap();
        let report = check_ode_n1(&voa, &one, &base, 5).unwrap();
        assert!(report.passed, "{report}");
        // the current needs a charged module or its trace vanishes
        let charged = voa.fock(Rat::one()).unwrap();
        let a = voa.vacuum_state(&[1]).unwrap();
        let report = check_ode_n1(&voa, &a, &charged, 5).unwrap();
        assert!(report.passed, "{report}");
    }

    #[test]
    fn heat_equation_virasoro_insertions() {
        let voa = Voa::virasoro(rat(1, 2));
        let base = voa.vacuum_module();
        for w in [voa.vacuum_state(&[]).unwrap(), voa.omega()] {
            let report = check_ode_n1(&voa, &w, &base, 4).unwrap();
            assert!(report.passed, "{report}");
        }
    }

    #[test]
    fn recursion_regroups_into_the_heat_equation() {
        let voa = Voa::virasoro(rat(1, 2));
        let base = voa.vacuum_module();
        let report = check_mod_inv_der(&voa, &voa.omega(), &base, 3).unwrap();
        assert!(report.passed, "{report}");
    }
}
