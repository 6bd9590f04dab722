//! The associative quotient living on the cylinder: the bullet product
//! u•v = Res_x [λe^(λx)/(e^(λx)-1)] Y(u,x)v, the span Õ(V) of the higher
//! kernels λe^(λx)/(e^(λx)-1)^n with n ≥ 2, the quotient Ã(V) = V/Õ(V),
//! and its sphere-picture counterpart, Zhu's algebra A(V) with
//! u*v = Res_x x^(-1)(1+x)^(wt u) Y(u,x)v. U(1) carries one picture to
//! the other. Module-side structure follows: top levels T(W) with the
//! representation ρ_W, the Ã(V)-bimodule actions on a module, and the
//! map ρ(𝒴) induced on an intertwining operator. On a module the
//! relation subspace is taken two-sided, with kernel elements attached
//! to both Y(v,x)w and e^(xL(-1))Y(v,-x)w; see [`o_span`].
//!
//! Everything is computed inside the grade window 0..=cutoff. Spanning
//! elements are enumerated only while their top term stays inside the
//! window, so a reported quotient is exact as a statement about the
//! enumerated relations; dimensions are reported together with their
//! recent history, since instances built on free generators (universal
//! Virasoro, Heisenberg) never stabilize.

use std::collections::HashMap;

use num_traits::{One, ToPrimitive};

use crate::coeff::{binom, rat_to_string, ExactScalar, Rat};
use crate::elliptic::bernoulli_numbers;
use crate::error::{Error, Result};
use crate::fps::MultiSeries;
use crate::geomod::apply_u1;
use crate::report::CheckReport;
use crate::voa::{Module, Vector, Voa};

fn rint(n: i64) -> Rat {
    Rat::from_integer(n.into())
}

fn factorial(n: i64) -> Rat {
    let mut acc = Rat::one();
    for k in 2..=n {
        acc *= rint(k);
    }
    acc
}

/// Bernoulli numbers for the generating function t e^t/(e^t - 1): the
/// plus convention, differing from [`bernoulli_numbers`] only at B₁.
fn bernoulli_plus(n: usize) -> Vec<Rat> {
    let mut b = bernoulli_numbers(n);
    if n >= 1 {
        b[1] = -b[1].clone();
    }
    b
}

/// Coefficients κ_j of x^(j-n) in λe^(λx)/(e^(λx)-1)^n for j = 0..=j_top,
/// by honest series division.
pub fn kernel_coeffs(n: i64, j_top: i64) -> Result<Vec<ExactScalar>> {
    let hi = j_top + 2;
    let lam_x = MultiSeries::term(ExactScalar::lambda(), &[("x", 1)]).with_truncation("x", hi);
    let exp = lam_x.exp_series()?;
    let kernel = exp
        .sub(&MultiSeries::one())?
        .powi(-n)?
        .mul(&exp)
        .scale(&ExactScalar::lambda());
    (0..=j_top).map(|j| kernel.coeff_at(&[("x", j - n)])).collect()
}

/// u•v = Σ_{n≥0} (B_n⁺ λⁿ/n!) u_{n-1}v; exact, the grading makes the sum
/// finite. The right factor may live in any module, giving the left
/// bimodule action.
pub fn bullet(voa: &Voa, u: &Vector, v: &Vector) -> Result<Vector> {
    let mut acc = Vector::zero(voa.mode_target(u.module(), v.module()));
    let n_top = voa.mode_ceiling(u, v).saturating_add(1);
    if n_top < 0 {
        return Ok(acc);
    }
    let bern = bernoulli_plus(n_top as usize);
    for n in 0..=n_top {
        let m = voa.mode_int(u, n - 1, v)?;
        if m.is_zero() {
            continue;
        }
        let c = ExactScalar::lambda_pow(n).scale_rat(&(&bern[n as usize] / factorial(n)));
        acc = acc.add(&m.scale(&c))?;
    }
    Ok(acc)
}

/// The same residue with the kernel read from [`kernel_coeffs`] instead
/// of the Bernoulli table; oracle for [`bullet`].
pub fn bullet_residue(voa: &Voa, u: &Vector, v: &Vector) -> Result<Vector> {
    let mut acc = Vector::zero(voa.mode_target(u.module(), v.module()));
    let t_top = voa.mode_ceiling(u, v);
    if t_top < -1 {
        return Ok(acc);
    }
    let ks = kernel_coeffs(1, t_top + 1)?;
    for t in -1..=t_top {
        let c = &ks[(t + 1) as usize];
        if c.is_zero() {
            continue;
        }
        let m = voa.mode_int(u, t, v)?;
        if !m.is_zero() {
            acc = acc.add(&m.scale(c))?;
        }
    }
    Ok(acc)
}

/// Sphere-picture product u*v = Σ_i C(wt u, i) u_{i-1}v, per homogeneous
/// component of u; weights must be nonnegative integers.
pub fn star(voa: &Voa, u: &Vector, v: &Vector) -> Result<Vector> {
    let mut acc = Vector::zero(voa.mode_target(u.module(), v.module()));
    for (wt, comp) in u.graded_components() {
        let w = wt_as_index(&wt)?;
        for i in 0..=w {
            let c = binom(w, i as u32);
            let m = voa.mode_int(&comp, i - 1, v)?;
            if !m.is_zero() {
                acc = acc.add(&m.scale_rat(&c))?;
            }
        }
    }
    Ok(acc)
}

fn wt_as_index(wt: &Rat) -> Result<i64> {
    if !wt.is_integer() {
        return Err(Error::FractionalWeight(format!(
            "sphere-picture weight exponent needs an integer, found {}",
            rat_to_string(wt)
        )));
    }
    wt.to_integer().to_i64().ok_or(Error::Unsupported {
        op: "star",
        detail: "weight does not fit i64".into(),
    })
}

/// Right bimodule action
/// w•u = Res_x [λe^(λx)/(e^(λx)-1)] e^(xL(-1)) Y(u,-x)w.
pub fn bullet_right(voa: &Voa, w: &Vector, u: &Vector) -> Result<Vector> {
    let mut acc = Vector::zero(voa.mode_target(u.module(), w.module()));
    let t_top = voa.mode_ceiling(u, w);
    if t_top < -1 {
        return Ok(acc);
    }
    let ks = kernel_coeffs(1, t_top + 1)?;
    for t in -1..=t_top {
        let ut = voa.mode_int(u, t, w)?;
        if ut.is_zero() {
            continue;
        }
        let sign = if (t + 1).rem_euclid(2) == 0 { 1 } else { -1 };
        // lpow = L(-1)^m u_t w / m!
        let mut lpow = ut;
        for m in 0..=(t + 1) {
            let kappa = &ks[(t - m + 1) as usize];
            if !kappa.is_zero() {
                acc = acc.add(&lpow.scale(&kappa.scale_rat(&rint(sign))))?;
            }
            if m < t + 1 {
                lpow = voa
                    .l_apply(-1, &lpow)?
                    .scale_rat(&Rat::new(1.into(), (m + 1).into()));
            }
        }
    }
    Ok(acc)
}

/// Grade-preserving zero mode o(v)w = v_{wt v - 1} w, summed over the
/// homogeneous components of v.
pub fn o_mode(voa: &Voa, v: &Vector, w: &Vector) -> Result<Vector> {
    let mut acc = Vector::zero(voa.mode_target(v.module(), w.module()));
    for (wt, comp) in v.graded_components() {
        let t = wt - Rat::one();
        let m = voa.mode(&comp, &t, w)?;
        if !m.is_zero() {
            acc = acc.add(&m)?;
        }
    }
    Ok(acc)
}

/// Flat basis of a module through grade `cutoff`, ordered by descending
/// grade so that echelon pivots eliminate the highest weight first.
#[derive(Clone, Debug)]
pub struct GradedBasis {
    module: Module,
    cutoff: u32,
    states: Vec<(u32, Vec<u32>)>,
    index: HashMap<Vec<u32>, usize>,
}

impl GradedBasis {
    pub fn new(voa: &Voa, module: &Module, cutoff: u32) -> Result<Self> {
        let mut states = Vec::new();
        let mut index = HashMap::new();
        for lvl in (0..=cutoff).rev() {
            for b in voa.basis(module, lvl)? {
                let parts = single_state_parts(&b)?;
                index.insert(parts.clone(), states.len());
                states.push((lvl, parts));
            }
        }
        Ok(GradedBasis {
            module: module.clone(),
            cutoff,
            states,
            index,
        })
    }

    pub fn module(&self) -> &Module {
        &self.module
    }

    pub fn cutoff(&self) -> u32 {
        self.cutoff
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn level(&self, i: usize) -> u32 {
        self.states[i].0
    }

    pub fn state(&self, i: usize) -> Vector {
        Vector::basis(self.module.clone(), &self.states[i].1).unwrap()
    }

    pub fn to_row(&self, v: &Vector) -> Result<Vec<ExactScalar>> {
        if v.module() != &self.module {
            return Err(Error::ModuleMismatch {
                left: format!("{:?}", self.module),
                right: format!("{:?}", v.module()),
            });
        }
        let mut row = vec![ExactScalar::zero(); self.states.len()];
        for (parts, c) in v.terms() {
            match self.index.get(parts) {
                Some(&i) => row[i] = c.clone(),
                None => {
                    return Err(Error::CutoffExceeded {
                        grade: parts.iter().map(|&p| p as i64).sum(),
                        cutoff: self.cutoff as i64,
                    })
                }
            }
        }
        Ok(row)
    }

    pub fn from_row(&self, row: &[ExactScalar]) -> Result<Vector> {
        let mut acc = Vector::zero(self.module.clone());
        for (i, c) in row.iter().enumerate() {
            if !c.is_zero() {
                acc = acc.add(&self.state(i).scale(c))?;
            }
        }
        Ok(acc)
    }
}

fn single_state_parts(v: &Vector) -> Result<Vec<u32>> {
    let mut it = v.terms();
    match (it.next(), it.next()) {
        (Some((parts, c)), None) if c.is_one() => Ok(parts.clone()),
        _ => Err(Error::Unsupported {
            op: "single_state_parts",
            detail: "expected a coefficient-one basis state".into(),
        }),
    }
}

/// Reduced row echelon form over ℚ(λ); the workhorse behind every span,
/// quotient, and kernel computation in this module.
#[derive(Clone, Debug, Default)]
pub struct Echelon {
    width: usize,
    rows: Vec<Vec<ExactScalar>>,
    pivots: Vec<usize>,
}

impl Echelon {
    pub fn new(width: usize) -> Self {
        Echelon {
            width,
            rows: Vec::new(),
            pivots: Vec::new(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn rank(&self) -> usize {
        self.rows.len()
    }

    pub fn pivots(&self) -> &[usize] {
        &self.pivots
    }

    pub fn reduce_in_place(&self, row: &mut [ExactScalar]) {
        for (r, &p) in self.rows.iter().zip(&self.pivots) {
            if row[p].is_zero() {
                continue;
            }
            let f = row[p].clone();
            for k in 0..self.width {
                if !r[k].is_zero() {
                    row[k] = row[k].sub(&f.mul(&r[k]));
                }
            }
        }
    }

    /// Returns whether the rank grew.
    pub fn insert(&mut self, mut row: Vec<ExactScalar>) -> Result<bool> {
        debug_assert_eq!(row.len(), self.width);
        self.reduce_in_place(&mut row);
        let Some(p) = (0..self.width).find(|&j| !row[j].is_zero()) else {
            return Ok(false);
        };
        let inv = row[p].inv()?;
        for c in row.iter_mut() {
            if !c.is_zero() {
                *c = c.mul(&inv);
            }
        }
        for r in self.rows.iter_mut() {
            if r[p].is_zero() {
                continue;
            }
            let f = r[p].clone();
            for k in 0..self.width {
                if !row[k].is_zero() {
                    r[k] = r[k].sub(&f.mul(&row[k]));
                }
            }
        }
        self.rows.push(row);
        self.pivots.push(p);
        Ok(true)
    }

    pub fn contains(&self, row: &[ExactScalar]) -> bool {
        let mut r = row.to_vec();
        self.reduce_in_place(&mut r);
        r.iter().all(|c| c.is_zero())
    }
}

/// Basis of the joint kernel of the given rows.
pub fn null_space(rows: Vec<Vec<ExactScalar>>, width: usize) -> Result<Vec<Vec<ExactScalar>>> {
    let mut ech = Echelon::new(width);
    for r in rows {
        ech.insert(r)?;
    }
    let mut out = Vec::new();
    for f in 0..width {
        if ech.pivots().contains(&f) {
            continue;
        }
        let mut v = vec![ExactScalar::zero(); width];
        v[f] = ExactScalar::one();
        for (r, &p) in ech.rows.iter().zip(&ech.pivots) {
            if !r[f].is_zero() {
                v[p] = r[f].neg();
            }
        }
        out.push(v);
    }
    Ok(out)
}

/// Which coordinate the quotient is written in: the cylinder picture
/// carries the bullet product and the exponential kernels, the sphere
/// picture Zhu's star product and the binomial kernels.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Picture {
    Cylinder,
    Sphere,
}

fn left_kernel_element(
    voa: &Voa,
    ks: &[ExactScalar],
    n: i64,
    v: &Vector,
    w: &Vector,
) -> Result<Vector> {
    let mut acc = Vector::zero(voa.mode_target(v.module(), w.module()));
    for (j, c) in ks.iter().enumerate() {
        if c.is_zero() {
            continue;
        }
        let t = voa.mode_int(v, j as i64 - n, w)?;
        if !t.is_zero() {
            acc = acc.add(&t.scale(c))?;
        }
    }
    Ok(acc)
}

fn right_kernel_element(
    voa: &Voa,
    ks: &[ExactScalar],
    n: i64,
    v: &Vector,
    w: &Vector,
) -> Result<Vector> {
    let mut acc = Vector::zero(voa.mode_target(v.module(), w.module()));
    let t_top = voa.mode_ceiling(v, w);
    for t in -n..=t_top {
        let vt = voa.mode_int(v, t, w)?;
        if vt.is_zero() {
            continue;
        }
        let sign = if (t + 1).rem_euclid(2) == 0 { 1 } else { -1 };
        // lpow = L(-1)^m v_t w / m!
        let mut lpow = vt;
        for m in 0..=(t + n) {
            let kappa = &ks[(t + n - m) as usize];
            if !kappa.is_zero() {
                acc = acc.add(&lpow.scale(&kappa.scale_rat(&rint(sign))))?;
            }
            if m < t + n {
                lpow = voa
                    .l_apply(-1, &lpow)?
                    .scale_rat(&Rat::new(1.into(), (m + 1).into()));
            }
        }
    }
    Ok(acc)
}

/// Spanning elements of the relation subspace inside the basis window,
/// over vacuum basis v, window basis w, and every kernel order n ≥ 2
/// whose top term v_{-n}w still has grade ≤ cutoff.
///
/// Cylinder: Res_x κ_n(x)Y(v,x)w together with, on a module, the
/// right-sided family Res_x κ_n(x)e^(xL(-1))Y(v,-x)w. On the algebra
/// itself skew symmetry folds the second family into the first, but on
/// a module nothing plays the role of Y(w,x)v, the two families span
/// different subspaces, and both are needed for the span to be stable
/// under the two bullet actions.
///
/// Sphere: Res_x (1+x)^(wt v) x^(-n) Y(v,x)w. Here n ≥ 2 spans the same
/// subspace as n = 2 alone by the integration-by-parts descent, and the
/// classical one-sided span is already two-sided stable.
///
/// The vacuum vector contributes nothing to either picture: the kernels
/// are total derivatives, so their residues vanish.
pub fn o_span(voa: &Voa, gb: &GradedBasis, picture: Picture) -> Result<Vec<Vector>> {
    let m = gb.cutoff() as i64;
    let two_sided =
        picture == Picture::Cylinder && *gb.module() != voa.vacuum_module();
    let mut out = Vec::new();
    let mut kernels: HashMap<(i64, i64), Vec<ExactScalar>> = HashMap::new();
    let mut push = |el: Vector| {
        if !el.is_zero() {
            out.push(el);
        }
    };
    for a in 1..=gb.cutoff() {
        for v in voa.basis(&voa.vacuum_module(), a)? {
            for wi in 0..gb.dim() {
                let b = gb.level(wi) as i64;
                let w = gb.state(wi);
                for n in 2..=(m - a as i64 - b + 1) {
                    match picture {
                        Picture::Cylinder => {
                            let j_top = voa.mode_ceiling(&v, &w) + n;
                            if j_top < 0 {
                                continue;
                            }
                            let ks = match kernels.entry((n, j_top)) {
                                std::collections::hash_map::Entry::Occupied(e) => {
                                    e.into_mut()
                                }
                                std::collections::hash_map::Entry::Vacant(e) => {
                                    e.insert(kernel_coeffs(n, j_top)?)
                                }
                            };
                            push(left_kernel_element(voa, ks, n, &v, &w)?);
                            if two_sided {
                                push(right_kernel_element(voa, ks, n, &v, &w)?);
                            }
                        }
                        Picture::Sphere => {
                            let mut acc =
                                Vector::zero(voa.mode_target(v.module(), w.module()));
                            for i in 0..=(a as i64) {
                                let c = binom(a as i64, i as u32);
                                let t = voa.mode_int(&v, i - n, &w)?;
                                if !t.is_zero() {
                                    acc = acc.add(&t.scale_rat(&c))?;
                                }
                            }
                            push(acc);
                        }
                    };
                }
            }
        }
    }
    Ok(out)
}

/// A quotient of the span of basis states through the cutoff by the
/// enumerated relation span, with coset representatives on the non-pivot
/// states (lowest grades first).
#[derive(Clone, Debug)]
pub struct Quotient {
    picture: Picture,
    ambient: GradedBasis,
    relations: Echelon,
    reps: Vec<usize>,
    dim_history: Vec<(u32, usize)>,
}

pub fn quotient(voa: &Voa, module: &Module, cutoff: u32, picture: Picture) -> Result<Quotient> {
    let mut dim_history = Vec::new();
    let mut last = None;
    for c in cutoff.saturating_sub(2)..=cutoff {
        let gb = GradedBasis::new(voa, module, c)?;
        let mut ech = Echelon::new(gb.dim());
        for el in o_span(voa, &gb, picture)? {
            ech.insert(gb.to_row(&el)?)?;
        }
        dim_history.push((c, gb.dim() - ech.rank()));
        last = Some((gb, ech));
    }
    let (ambient, relations) = last.expect("cutoff range is never empty");
    let mut reps: Vec<usize> = (0..ambient.dim())
        .filter(|i| !relations.pivots().contains(i))
        .collect();
    reps.sort_by_key(|&i| (ambient.level(i), ambient.states[i].1.clone()));
    Ok(Quotient {
        picture,
        ambient,
        relations,
        reps,
        dim_history,
    })
}

/// Ã(V): the cylinder quotient of the vacuum module.
pub fn a_tilde(voa: &Voa, cutoff: u32) -> Result<Quotient> {
    quotient(voa, &voa.vacuum_module(), cutoff, Picture::Cylinder)
}

/// A(V): the sphere quotient of the vacuum module.
pub fn a_zhu(voa: &Voa, cutoff: u32) -> Result<Quotient> {
    quotient(voa, &voa.vacuum_module(), cutoff, Picture::Sphere)
}

impl Quotient {
    pub fn picture(&self) -> Picture {
        self.picture
    }

    pub fn ambient(&self) -> &GradedBasis {
        &self.ambient
    }

    pub fn relations(&self) -> &Echelon {
        &self.relations
    }

    pub fn dim(&self) -> usize {
        self.reps.len()
    }

    /// (cutoff, dimension) over the last three cutoffs.
    pub fn dim_history(&self) -> &[(u32, usize)] {
        &self.dim_history
    }

    /// Whether the dimension held steady over the recorded history; free
    /// instances keep growing and honestly report false.
    pub fn is_stable(&self) -> bool {
        self.dim_history.len() == 3 && self.dim_history.iter().all(|d| d.1 == self.dim())
    }

    pub fn reps(&self) -> Vec<Vector> {
        self.reps.iter().map(|&i| self.ambient.state(i)).collect()
    }

    pub fn rep_levels(&self) -> Vec<u32> {
        self.reps.iter().map(|&i| self.ambient.level(i)).collect()
    }

    /// Coordinates of the class of v over the representatives.
    pub fn reduce(&self, v: &Vector) -> Result<Vec<ExactScalar>> {
        let mut row = self.ambient.to_row(v)?;
        self.relations.reduce_in_place(&mut row);
        Ok(self.reps.iter().map(|&i| row[i].clone()).collect())
    }

    pub fn class_vector(&self, v: &Vector) -> Result<Vector> {
        let coords = self.reduce(v)?;
        let mut acc = Vector::zero(self.ambient.module().clone());
        for (c, &i) in coords.iter().zip(&self.reps) {
            if !c.is_zero() {
                acc = acc.add(&self.ambient.state(i).scale(c))?;
            }
        }
        Ok(acc)
    }

    pub fn is_relation(&self, v: &Vector) -> Result<bool> {
        Ok(self.relations.contains(&self.ambient.to_row(v)?))
    }

    /// Product of two classes in this picture's multiplication, reduced.
    pub fn product(&self, voa: &Voa, u: &Vector, v: &Vector) -> Result<Vec<ExactScalar>> {
        let p = match self.picture {
            Picture::Cylinder => bullet(voa, u, v)?,
            Picture::Sphere => star(voa, u, v)?,
        };
        self.reduce(&p)
    }
}

fn product_in(picture: Picture, voa: &Voa, u: &Vector, v: &Vector) -> Result<Vector> {
    match picture {
        Picture::Cylinder => bullet(voa, u, v),
        Picture::Sphere => star(voa, u, v),
    }
}

/// Associativity of the induced product on all representative triples
/// whose nested products stay inside the window. Both nestings are
/// computed at the vector level and compared after reduction, so the
/// check does not presuppose that the product descends.
pub fn check_associativity(voa: &Voa, q: &Quotient) -> Result<CheckReport> {
    let reps = q.reps();
    let levels = q.rep_levels();
    let cutoff = q.ambient().cutoff();
    let mut report = CheckReport::new();
    for (i, u) in reps.iter().enumerate() {
        for (j, v) in reps.iter().enumerate() {
            for (k, w) in reps.iter().enumerate() {
                if levels[i] + levels[j] + levels[k] > cutoff {
                    continue;
                }
                let left = product_in(q.picture(), voa, &product_in(q.picture(), voa, u, v)?, w)?;
                let right = product_in(q.picture(), voa, u, &product_in(q.picture(), voa, v, w)?)?;
                let equal = q.reduce(&left.sub(&right)?)?.iter().all(|c| c.is_zero());
                report.record(equal, || {
                    format!("associativity defect survives reduction on ({u}, {v}, {w})")
                });
            }
        }
    }
    Ok(report)
}

/// u•v ≡ v•u - λ u₀v against the relation span, over basis pairs inside
/// the window.
pub fn check_commutator(voa: &Voa, q: &Quotient) -> Result<CheckReport> {
    let cutoff = q.ambient().cutoff();
    let module = voa.vacuum_module();
    let mut report = CheckReport::new();
    for a in 0..=cutoff {
        for u in voa.basis(&module, a)? {
            for b in 0..=(cutoff - a) {
                for v in voa.basis(&module, b)? {
                    let d = bullet(voa, &u, &v)?
                        .sub(&bullet(voa, &v, &u)?)?
                        .add(&voa.mode_int(&u, 0, &v)?.scale(&ExactScalar::lambda()))?;
                    report.record(q.is_relation(&d)?, || {
                        format!("commutator law fails on ({u}, {v})")
                    });
                }
            }
        }
    }
    Ok(report)
}

/// [ω] commutes with every basis class inside the window.
pub fn check_centrality(voa: &Voa, q: &Quotient) -> Result<CheckReport> {
    let cutoff = q.ambient().cutoff();
    let omega = voa.omega();
    let mut report = CheckReport::new();
    for a in 0..=cutoff.saturating_sub(2) {
        for u in voa.basis(&voa.vacuum_module(), a)? {
            let d = bullet(voa, &omega, &u)?.sub(&bullet(voa, &u, &omega)?)?;
            report.record(q.is_relation(&d)?, || format!("[ω] fails to commute with {u}"));
        }
    }
    Ok(report)
}

/// (L(-1)u)•v lands in the relation span for all basis pairs inside the
/// window.
pub fn check_translation_ideal(voa: &Voa, q: &Quotient) -> Result<CheckReport> {
    let cutoff = q.ambient().cutoff();
    let module = voa.vacuum_module();
    let mut report = CheckReport::new();
    for a in 0..cutoff {
        for u in voa.basis(&module, a)? {
            let du = voa.l_apply(-1, &u)?;
            for b in 0..=(cutoff - a - 1) {
                for v in voa.basis(&module, b)? {
                    let d = bullet(voa, &du, &v)?;
                    report.record(q.is_relation(&d)?, || {
                        format!("(L(-1){u})•{v} escapes the relation span")
                    });
                }
            }
        }
    }
    Ok(report)
}

/// U(1) as an isomorphism of the two quotients: equal dimensions, equal
/// relation spans (U(1)Õ = O within the window), and multiplicativity
/// U(1)(u•v) ≡ U(1)u * U(1)v modulo the sphere relations.
pub fn check_iso(voa: &Voa, cutoff: u32) -> Result<CheckReport> {
    let module = voa.vacuum_module();
    let qc = quotient(voa, &module, cutoff, Picture::Cylinder)?;
    let qs = quotient(voa, &module, cutoff, Picture::Sphere)?;
    let mut report = CheckReport::new();
    report.record(qc.dim() == qs.dim(), || {
        format!("dim Ã = {} but dim A = {}", qc.dim(), qs.dim())
    });
    report.record(
        qc.relations().rank() == qs.relations().rank(),
        || {
            format!(
                "relation ranks differ: {} vs {}",
                qc.relations().rank(),
                qs.relations().rank()
            )
        },
    );
    for el in o_span(voa, qc.ambient(), Picture::Cylinder)? {
        let mapped = apply_u1(voa, &el)?;
        report.record(qs.is_relation(&mapped)?, || {
            format!("U(1) image of a cylinder relation escapes the sphere span: {el}")
        });
    }
    for a in 0..=cutoff {
        for u in voa.basis(&module, a)? {
            let u1 = apply_u1(voa, &u)?;
            for b in 0..=(cutoff - a) {
                for v in voa.basis(&module, b)? {
                    let d = apply_u1(voa, &bullet(voa, &u, &v)?)?
                        .sub(&star(voa, &u1, &apply_u1(voa, &v)?)?)?;
                    report.record(qs.is_relation(&d)?, || {
                        format!("U(1)({u}•{v}) is not U(1){u} * U(1){v} mod O")
                    });
                }
            }
        }
    }
    Ok(report)
}

/// Linear independence of [1], [ω], ..., [ω]^k_max in the cylinder
/// quotient; the powers are nested vector-level products.
pub fn check_omega_powers(voa: &Voa, cutoff: u32, k_max: u32) -> Result<CheckReport> {
    let q = a_tilde(voa, cutoff)?;
    let mut ech = Echelon::new(q.dim());
    let mut power = voa.vacuum();
    let mut report = CheckReport::new();
    for k in 0..=k_max {
        if k > 0 {
            power = bullet(voa, &power, &voa.omega())?;
        }
        let grew = ech.insert(q.reduce(&power)?)?;
        report.record(grew, || format!("[ω]^{k} is dependent on lower powers"));
    }
    Ok(report)
}

fn lowering(voa: &Voa, k: i64, w: &Vector) -> Result<Vector> {
    match voa.vacuum_module() {
        Module::VirasoroVacuum { .. } => voa.l_apply(k, w),
        Module::Fock { .. } => voa.j_apply(k, w),
    }
}

/// T(W): the joint kernel, grade by grade, of every weight-lowering
/// generator mode. In the PBW normal order every lowering composite ends
/// in a positive generator mode, so the generators detect the full
/// condition.
pub fn top_space(voa: &Voa, module: &Module, cutoff: u32) -> Result<Vec<Vector>> {
    let mut out = voa.basis(module, 0)?;
    for lvl in 1..=cutoff {
        let states = voa.basis(module, lvl)?;
        if states.is_empty() {
            continue;
        }
        let mut rows = Vec::new();
        for k in 1..=(lvl as i64) {
            let targets = voa.basis(module, lvl - k as u32)?;
            if targets.is_empty() {
                continue;
            }
            let mut index = HashMap::new();
            for (ti, t) in targets.iter().enumerate() {
                index.insert(single_state_parts(t)?, ti);
            }
            let mut block = vec![vec![ExactScalar::zero(); states.len()]; targets.len()];
            for (s, st) in states.iter().enumerate() {
                for (parts, c) in lowering(voa, k, st)?.terms() {
                    block[index[parts]][s] = c.clone();
                }
            }
            rows.extend(block);
        }
        for kv in null_space(rows, states.len())? {
            let mut acc = Vector::zero(module.clone());
            for (c, st) in kv.iter().zip(&states) {
                if !c.is_zero() {
                    acc = acc.add(&st.scale(c))?;
                }
            }
            out.push(acc);
        }
    }
    Ok(out)
}

/// Matrix of ρ_W(u)w = P_T(o(U(1)u)w) on the given top-level basis. The
/// top vectors must be single bottom-grade basis states; the projection
/// is then coefficient extraction on those states.
pub fn rho_matrix(voa: &Voa, u: &Vector, top: &[Vector]) -> Result<Vec<Vec<ExactScalar>>> {
    let keys: Vec<Vec<u32>> = top
        .iter()
        .map(single_state_parts)
        .collect::<Result<Vec<_>>>()?;
    let u1 = apply_u1(voa, u)?;
    let mut mat = vec![vec![ExactScalar::zero(); top.len()]; top.len()];
    for (c, w) in top.iter().enumerate() {
        let img = o_mode(voa, &u1, w)?;
        for (r, key) in keys.iter().enumerate() {
            mat[r][c] = img.coeff(key);
        }
    }
    Ok(mat)
}

fn mat_mul(a: &[Vec<ExactScalar>], b: &[Vec<ExactScalar>]) -> Vec<Vec<ExactScalar>> {
    let n = a.len();
    let mut out = vec![vec![ExactScalar::zero(); n]; n];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            for k in 0..n {
                *cell = cell.add(&a[i][k].mul(&b[k][j]));
            }
        }
    }
    out
}

/// ρ_W as a representation of the cylinder quotient: identity on the
/// vacuum class, kills every enumerated relation, and is multiplicative
/// over basis pairs inside the window.
pub fn check_rho_representation(
    voa: &Voa,
    module: &Module,
    cutoff: u32,
) -> Result<CheckReport> {
    let top = top_space(voa, module, cutoff)?;
    let mut report = CheckReport::new();
    let id = rho_matrix(voa, &voa.vacuum(), &top)?;
    let expect_id = (0..top.len())
        .map(|i| {
            (0..top.len())
                .map(|j| {
                    if i == j {
                        ExactScalar::one()
                    } else {
                        ExactScalar::zero()
                    }
                })
                .collect()
        })
        .collect::<Vec<Vec<_>>>();
    report.record(id == expect_id, || "ρ(1) is not the identity".into());

    let vac = voa.vacuum_module();
    let gb = GradedBasis::new(voa, &vac, cutoff)?;
    for el in o_span(voa, &gb, Picture::Cylinder)? {
        let m = rho_matrix(voa, &el, &top)?;
        let zero = m.iter().all(|r| r.iter().all(|c| c.is_zero()));
        report.record(zero, || format!("ρ does not kill the relation {el}"));
    }

    for a in 0..=cutoff {
        for u in voa.basis(&vac, a)? {
            let mu = rho_matrix(voa, &u, &top)?;
            for b in 0..=(cutoff - a) {
                for v in voa.basis(&vac, b)? {
                    let lhs = rho_matrix(voa, &bullet(voa, &u, &v)?, &top)?;
                    let rhs = mat_mul(&mu, &rho_matrix(voa, &v, &top)?);
                    report.record(lhs == rhs, || {
                        format!("ρ({u}•{v}) differs from ρ({u})ρ({v})")
                    });
                }
            }
        }
    }
    Ok(report)
}

/// Bimodule laws on a module window: both unit actions are the identity
/// on the nose, the relation span is stable under both actions, and the
/// mixed associativity (u•w)•v ≡ u•(w•v) holds after reduction.
pub fn check_bimodule(voa: &Voa, module: &Module, cutoff: u32) -> Result<CheckReport> {
    let q = quotient(voa, module, cutoff, Picture::Cylinder)?;
    let one = voa.vacuum();
    let mut report = CheckReport::new();
    for lvl in 0..=cutoff {
        for w in voa.basis(module, lvl)? {
            report.record(bullet(voa, &one, &w)? == w, || format!("1•{w} moved"));
            report.record(bullet_right(voa, &w, &one)? == w, || format!("{w}•1 moved"));
        }
    }

    let relations = o_span(voa, q.ambient(), Picture::Cylinder)?;
    for rel in &relations {
        let top = vector_top_level(rel);
        for a in 1..=cutoff.saturating_sub(top) {
            for u in voa.basis(&voa.vacuum_module(), a)? {
                report.record(q.is_relation(&bullet(voa, &u, rel)?)?, || {
                    format!("left action of {u} escapes the relation span")
                });
                report.record(q.is_relation(&bullet_right(voa, rel, &u)?)?, || {
                    format!("right action of {u} escapes the relation span")
                });
            }
        }
    }

    let vac = voa.vacuum_module();
    for a in 0..=cutoff {
        for u in voa.basis(&vac, a)? {
            for lw in 0..=(cutoff - a) {
                for w in voa.basis(module, lw)? {
                    for b in 0..=(cutoff - a - lw) {
                        for v in voa.basis(&vac, b)? {
                            let left = bullet_right(voa, &bullet(voa, &u, &w)?, &v)?;
                            let right = bullet(voa, &u, &bullet_right(voa, &w, &v)?)?;
                            report.record(q.is_relation(&left.sub(&right)?)?, || {
                                format!("({u}•{w})•{v} differs from {u}•({w}•{v}) mod Õ")
                            });
                        }
                    }
                }
            }
        }
    }
    Ok(report)
}

fn vector_top_level(v: &Vector) -> u32 {
    v.terms()
        .map(|(parts, _)| parts.iter().sum::<u32>())
        .max()
        .unwrap_or(0)
}

/// ρ(𝒴) for the charged exponential intertwiner Fock(μ) ⊗ Fock(ν) →
/// Fock(μ+ν), on the window quotient Ã(Fock(μ)) ⊗ T(Fock(ν)).
#[derive(Clone, Debug)]
pub struct IntertwinerRho {
    /// Rows over T(W₃), columns over the Ã(W₁) representatives.
    pub matrix: Vec<Vec<ExactScalar>>,
    /// The same map on the quotient by the tensor relations
    /// w•u ⊗ t = w ⊗ ρ(u)t; columns over the surviving representatives,
    /// lowest grades preferred.
    pub induced_matrix: Vec<Vec<ExactScalar>>,
    /// Dimension of Ã(W₁) ⊗ over the algebra with T(W₂), after imposing
    /// every relation available inside the window.
    pub induced_dim: usize,
    pub top_dim: usize,
    /// Whether the induced map is a linear isomorphism onto T(W₃).
    pub is_isomorphism: bool,
    pub report: CheckReport,
}

/// Builds ρ(𝒴)(w₁ ⊗ w₂) = o_𝒴(U(1)w₁)w₂ and verifies the structure the
/// construction promises: vanishing on Õ(W₁), image inside T(W₃), and
/// compatibility with both algebra actions.
pub fn rho_intertwiner(voa: &Voa, mu: &Rat, nu: &Rat, cutoff: u32) -> Result<IntertwinerRho> {
    let w1 = voa.fock(mu.clone())?;
    let w2 = voa.fock(nu.clone())?;
    let w3 = voa.fock(mu + nu)?;
    let q1 = quotient(voa, &w1, cutoff, Picture::Cylinder)?;
    let top2 = top_space(voa, &w2, cutoff)?;
    let top3 = top_space(voa, &w3, cutoff)?;
    if top2.len() != 1 {
        return Err(Error::Unsupported {
            op: "rho_intertwiner",
            detail: "the middle top level must be one-dimensional here".into(),
        });
    }
    let t2 = &top2[0];
    let keys3: Vec<Vec<u32>> = top3
        .iter()
        .map(single_state_parts)
        .collect::<Result<Vec<_>>>()?;
    let map = |w: &Vector| -> Result<Vector> { o_mode(voa, &apply_u1(voa, w)?, t2) };

    let mut report = CheckReport::new();
    for rel in o_span(voa, q1.ambient(), Picture::Cylinder)? {
        report.record(map(&rel)?.is_zero(), || {
            format!("o_𝒴(U(1)·) fails to kill the relation {rel}")
        });
    }

    let reps = q1.reps();
    let levels = q1.rep_levels();
    let mut matrix = vec![vec![ExactScalar::zero(); reps.len()]; top3.len()];
    for (c, w) in reps.iter().enumerate() {
        let img = map(w)?;
        let mut seen = img.clone();
        for (r, key) in keys3.iter().enumerate() {
            let coeff = img.coeff(key);
            if !coeff.is_zero() {
                seen = seen.sub(&top3[r].scale(&coeff))?;
            }
            matrix[r][c] = coeff;
        }
        report.record(seen.is_zero(), || {
            format!("image of {w} has a component outside T(W₃)")
        });
    }

    // tensor relations over the algebra: (w•u) ⊗ t₂ = ρ_{W₂}(u) w ⊗ t₂,
    // plus compatibility of the map with both actions; the rows go in
    // with reversed coordinates so the pivots eat the highest grades and
    // the surviving representatives sit at the lowest
    let vac = voa.vacuum_module();
    let dim = q1.dim();
    let mut tensor = Echelon::new(dim);
    for (wi, w) in reps.iter().enumerate() {
        for a in 1..=cutoff.saturating_sub(levels[wi]) {
            for u in voa.basis(&vac, a)? {
                let scalar2 = rho_matrix(voa, &u, &top2)?[0][0].clone();
                let right = bullet_right(voa, w, &u)?;
                let mut row = q1.reduce(&right)?;
                row[wi] = row[wi].sub(&scalar2);
                let consistent = map(&right)? == map(w)?.scale(&scalar2);
                report.record(consistent, || {
                    format!("ρ(𝒴) is not balanced over the right action of {u}")
                });
                let left = bullet(voa, &u, w)?;
                let rho3 = rho_matrix(voa, &u, &top3)?;
                let mut want = Vector::zero(w3.clone());
                let img = map(w)?;
                for (r, key) in keys3.iter().enumerate() {
                    let coeff = img.coeff(key);
                    for (rr, t) in top3.iter().enumerate() {
                        let c = rho3[rr][r].mul(&coeff);
                        if !c.is_zero() {
                            want = want.add(&t.scale(&c))?;
                        }
                    }
                }
                report.record(map(&left)? == want, || {
                    format!("ρ(𝒴) does not intertwine the left action of {u}")
                });
                row.reverse();
                tensor.insert(row)?;
            }
        }
    }

    for row in &tensor.rows {
        for (r, mrow) in matrix.iter().enumerate() {
            let mut acc = ExactScalar::zero();
            for (j, c) in row.iter().enumerate() {
                if !c.is_zero() {
                    acc = acc.add(&c.mul(&mrow[dim - 1 - j]));
                }
            }
            report.record(acc.is_zero(), || {
                format!("ρ(𝒴) does not factor through the tensor relations (row {r})")
            });
        }
    }

    let remaining: Vec<usize> = (0..dim)
        .filter(|i| !tensor.pivots().contains(&(dim - 1 - i)))
        .collect();
    let induced_dim = remaining.len();
    let induced_matrix: Vec<Vec<ExactScalar>> = matrix
        .iter()
        .map(|row| remaining.iter().map(|&i| row[i].clone()).collect())
        .collect();
    let mut image = Echelon::new(induced_dim);
    if induced_dim > 0 {
        for row in &induced_matrix {
            image.insert(row.clone())?;
        }
    }
    let top_dim = top3.len();
    let is_isomorphism = induced_dim == top_dim && image.rank() == top_dim;

    Ok(IntertwinerRho {
        matrix,
        induced_matrix,
        induced_dim,
        top_dim,
        is_isomorphism,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigInt;

    fn r(n: i64, d: i64) -> Rat {
        Rat::new(BigInt::from(n), BigInt::from(d))
    }

    fn sc(text: &str) -> ExactScalar {
        text.parse().unwrap()
    }

    #[test]
    fn first_kernel_is_the_bernoulli_series() {
        let ks = kernel_coeffs(1, 6).unwrap();
        let b = bernoulli_plus(7);
        for (j, k) in ks.iter().enumerate() {
            let want =
                ExactScalar::lambda_pow(j as i64).scale_rat(&(&b[j] / factorial(j as i64)));
            assert_eq!(*k, want, "j = {j}");
        }
    }

    #[test]
    fn higher_kernels_have_no_residue() {
        // each is a total derivative
        for n in 2..=5 {
            let ks = kernel_coeffs(n, n + 2).unwrap();
            assert!(ks[(n - 1) as usize].is_zero(), "n = {n}");
        }
    }

    #[test]
    fn bullet_examples() {
        let vir = Voa::virasoro(r(1, 2));
        for v in [vir.omega(), vir.vacuum_state(&[3, 2]).unwrap()] {
            assert_eq!(bullet(&vir, &vir.vacuum(), &v).unwrap(), v);
        }
        assert_eq!(bullet(&vir, &vir.omega(), &vir.vacuum()).unwrap(), vir.omega());

        let bos = Voa::free_boson(r(1, 1));
        let a = bos.vacuum_state(&[1]).unwrap();
        let want = bos
            .vacuum_state(&[1, 1])
            .unwrap()
            .add(&bos.vacuum().scale(&sc("1/12*λ^2")))
            .unwrap();
        assert_eq!(bullet(&bos, &a, &a).unwrap(), want);
    }

    #[test]
    fn bullet_matches_residue_oracle() {
        let vir = Voa::virasoro(r(1, 2));
        for a in 0..=4 {
            for u in vir.basis(&vir.vacuum_module(), a).unwrap() {
                for b in 0..=4 {
                    for v in vir.basis(&vir.vacuum_module(), b).unwrap() {
                        assert_eq!(
                            bullet(&vir, &u, &v).unwrap(),
                            bullet_residue(&vir, &u, &v).unwrap()
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn star_examples() {
        let bos = Voa::free_boson(r(1, 1));
        let a = bos.vacuum_state(&[1]).unwrap();
        assert_eq!(star(&bos, &bos.vacuum(), &a).unwrap(), a);
        assert_eq!(
            star(&bos, &a, &a).unwrap(),
            bos.vacuum_state(&[1, 1]).unwrap()
        );
    }

    #[test]
    fn bullet_right_matches_bullet_on_the_algebra() {
        // skew symmetry folds e^(xL(-1))Y(u,-x)w into Y(w,x)u, so on the
        // vacuum module the right action is the product on the nose
        for voa in [Voa::virasoro(r(1, 2)), Voa::free_boson(r(1, 1))] {
            let module = voa.vacuum_module();
            for a in 0..=4 {
                for u in voa.basis(&module, a).unwrap() {
                    for b in 0..=(4 - a) {
                        for w in voa.basis(&module, b).unwrap() {
                            assert_eq!(
                                bullet_right(&voa, &w, &u).unwrap(),
                                bullet(&voa, &w, &u).unwrap(),
                                "w = {w}, u = {u}"
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn translate_of_anything_is_a_relation() {
        // L(-1)u = (L(-1)u)•1 lands in Õ(V) exactly
        let vir = Voa::virasoro(r(1, 2));
        let q = a_tilde(&vir, 5).unwrap();
        for a in 0..=4 {
            for u in vir.basis(&vir.vacuum_module(), a).unwrap() {
                let du = vir.l_apply(-1, &u).unwrap();
                assert!(q.is_relation(&du).unwrap(), "L(-1){u}");
            }
        }
    }

    #[test]
    fn echelon_and_null_space() {
        let one = ExactScalar::one;
        let zero = ExactScalar::zero;
        let mut e = Echelon::new(3);
        assert!(e.insert(vec![one(), one(), zero()]).unwrap());
        assert!(e.insert(vec![zero(), one(), one()]).unwrap());
        assert!(!e.insert(vec![one(), sc("2"), one()]).unwrap());
        assert_eq!(e.rank(), 2);
        assert!(e.contains(&[sc("3"), sc("4"), one()]));
        assert!(!e.contains(&[one(), zero(), zero()]));
        let ns = null_space(
            vec![vec![one(), one(), zero()], vec![zero(), one(), one()]],
            3,
        )
        .unwrap();
        assert_eq!(ns.len(), 1);
        assert_eq!(ns[0], vec![one(), sc("-1"), one()]);
    }

    #[test]
    fn virasoro_quotient_shape() {
        let vir = Voa::virasoro(r(1, 2));
        let q = a_tilde(&vir, 6).unwrap();
        // the class ladder of [ω]^k keeps the quotient growing
        assert!(q.dim() >= 4);
        assert!(!q.is_stable());
        assert_eq!(q.rep_levels()[0], 0);
        let omega_sq = bullet(&vir, &vir.omega(), &vir.omega()).unwrap();
        let coords = q.reduce(&omega_sq).unwrap();
        assert!(coords.iter().any(|c| !c.is_zero()));
    }

    #[test]
    fn omega_powers_independent() {
        let vir = Voa::virasoro(r(1, 2));
        let report = check_omega_powers(&vir, 8, 3).unwrap();
        assert!(report.passed, "{report}");
    }

    #[test]
    fn quotient_laws_smoke() {
        let bos = Voa::free_boson(r(1, 1));
        let q = a_tilde(&bos, 3).unwrap();
        for rep in [
            check_associativity(&bos, &q).unwrap(),
            check_commutator(&bos, &q).unwrap(),
            check_centrality(&bos, &q).unwrap(),
            check_translation_ideal(&bos, &q).unwrap(),
        ] {
            assert!(rep.passed, "{rep}");
        }
    }

    #[test]
    fn iso_smoke() {
        let bos = Voa::free_boson(r(1, 1));
        let report = check_iso(&bos, 3).unwrap();
        assert!(report.passed, "{report}");
    }

    #[test]
    fn top_spaces_are_one_dimensional() {
        let bos = Voa::free_boson(r(1, 1));
        let top = top_space(&bos, &bos.fock(r(5, 2)).unwrap(), 3).unwrap();
        assert_eq!(top.len(), 1);
        let vir = Voa::virasoro(r(1, 2));
        let top = top_space(&vir, &vir.vacuum_module(), 4).unwrap();
        assert_eq!(top.len(), 1);
    }

    #[test]
    fn rho_scalar_values() {
        let bos = Voa::free_boson(r(1, 1));
        let module = bos.fock(r(2, 1)).unwrap();
        let top = top_space(&bos, &module, 2).unwrap();
        let id = rho_matrix(&bos, &bos.vacuum(), &top).unwrap();
        assert_eq!(id, vec![vec![ExactScalar::one()]]);
        // o(U(1)ω) = λ²(L(0) - c/24) on the lowest vector, h = μ²/2
        let omega = rho_matrix(&bos, &bos.omega(), &top).unwrap();
        assert_eq!(omega, vec![vec![sc("47/24*λ^2")]]);
    }

    #[test]
    fn rho_is_a_representation() {
        let bos = Voa::free_boson(r(1, 1));
        let module = bos.fock(r(2, 1)).unwrap();
        let report = check_rho_representation(&bos, &module, 3).unwrap();
        assert!(report.passed, "{report}");
    }

    #[test]
    fn bimodule_laws_smoke() {
        let bos = Voa::free_boson(r(1, 1));
        let module = bos.fock(r(1, 2)).unwrap();
        let report = check_bimodule(&bos, &module, 3).unwrap();
        assert!(report.passed, "{report}");
    }

    #[test]
    fn exponential_intertwiner_rho() {
        let bos = Voa::free_boson(r(1, 1));
        let rho = rho_intertwiner(&bos, &r(2, 1), &r(-1, 1), 4).unwrap();
        assert!(rho.report.passed, "{}", rho.report);
        assert_eq!(rho.top_dim, 1);
        assert_eq!(rho.induced_dim, 1);
        assert!(rho.is_isomorphism);
        // U(1)e_μ = λ² e_μ: the surviving class maps to λ² times the top vector
        assert_eq!(rho.matrix.len(), 1);
        assert_eq!(rho.matrix[0][0], sc("λ^2"));
        assert_eq!(rho.induced_matrix, vec![vec![sc("λ^2")]]);
    }
}
