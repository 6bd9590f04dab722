//! State spaces and mode actions for the two chiral algebras every check
//! in this crate runs on: the universal Virasoro vacuum algebra at
//! rational central charge, and the rank-one Heisenberg algebra with
//! [J_m, J_n] = gram·m·δ_{m+n,0} together with its charged Fock modules.
//!
//! States are finite ℚ(λ)-combinations of PBW monomials over a vacuum or
//! highest-weight vector. The general mode action u_t is computed by the
//! iterate identity
//!
//!   (a_{-p} b)_t = Σ_{i≥0} C(p+i-1, i) [ a_{-p-i} b_{t+i}
//!                                        - (-1)^p b_{t-p-i} a_i ],
//!
//! peeling one PBW generator at a time down to the vacuum and, for
//! charged highest-weight vectors, to the exponential vertex operator.
//! Mode indices are rational: the charge pairing μν/gram shifts them off
//! the integers, and a single grading guard (the relative grade of the
//! target must be a nonnegative integer) makes every incompatible index
//! act as zero. All mode and Virasoro actions are memoized per engine.

use std::cell::RefCell;
use std::collections::{BTreeMap, HashMap};
use std::fmt;

use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::coeff::{binom, rat_to_string, ExactScalar, Rat};
use crate::error::{Error, Result};

fn rint(n: i64) -> Rat {
    Rat::from_integer(BigInt::from(n))
}

/// Graded module over one of the two algebra flavors.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Module {
    /// Universal Virasoro vacuum module at central charge c, PBW basis
    /// L(-n_1)...L(-n_k)|0> with n_1 ≥ ... ≥ n_k ≥ 2.
    VirasoroVacuum { c: Rat },
    /// Heisenberg Fock module with J_0 eigenvalue `charge`, PBW basis
    /// J(-n_1)...J(-n_k)|charge> with parts ≥ 1.
    Fock { gram: Rat, charge: Rat },
}

impl Module {
    /// Conformal weight of the highest-weight vector.
    pub fn base_weight(&self) -> Rat {
        match self {
            Module::VirasoroVacuum { .. } => Rat::zero(),
            Module::Fock { gram, charge } => charge * charge / (rint(2) * gram),
        }
    }

    pub fn charge(&self) -> Rat {
        match self {
            Module::VirasoroVacuum { .. } => Rat::zero(),
            Module::Fock { charge, .. } => charge.clone(),
        }
    }

    fn min_part(&self) -> u32 {
        match self {
            Module::VirasoroVacuum { .. } => 2,
            Module::Fock { .. } => 1,
        }
    }

    fn same_algebra(&self, o: &Module) -> bool {
        match (self, o) {
            (Module::VirasoroVacuum { c: a }, Module::VirasoroVacuum { c: b }) => a == b,
            (Module::Fock { gram: a, .. }, Module::Fock { gram: b, .. }) => a == b,
            _ => false,
        }
    }

    fn generator_letter(&self) -> char {
        match self {
            Module::VirasoroVacuum { .. } => 'L',
            Module::Fock { .. } => 'J',
        }
    }
}

fn level(parts: &[u32]) -> u32 {
    parts.iter().sum()
}

/// Finite ℚ(λ)-combination of PBW basis states of one module.
#[derive(Clone, Debug, PartialEq)]
pub struct Vector {
    module: Module,
    terms: BTreeMap<Vec<u32>, ExactScalar>,
}

impl Vector {
    pub fn zero(module: Module) -> Self {
        Vector {
            module,
            terms: BTreeMap::new(),
        }
    }

    /// Single PBW monomial; parts must be descending and at least the
    /// module's minimum (2 for Virasoro, 1 for Fock).
    pub fn basis(module: Module, parts: &[u32]) -> Result<Self> {
        let ok = parts.windows(2).all(|w| w[0] >= w[1])
            && parts.iter().all(|&p| p >= module.min_part());
        if !ok {
            return Err(Error::Unsupported {
                op: "basis state",
                detail: format!("parts {parts:?} are not a valid PBW monomial"),
            });
        }
        let mut v = Vector::zero(module);
        v.terms.insert(parts.to_vec(), ExactScalar::one());
        Ok(v)
    }

    pub fn module(&self) -> &Module {
        &self.module
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Vec<u32>, &ExactScalar)> {
        self.terms.iter()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn coeff(&self, parts: &[u32]) -> ExactScalar {
        self.terms.get(parts).cloned().unwrap_or_default()
    }

    fn accumulate(&mut self, parts: Vec<u32>, c: ExactScalar) {
        if c.is_zero() {
            return;
        }
        match self.terms.entry(parts) {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                let s = o.get().add(&c);
                if s.is_zero() {
                    o.remove();
                } else {
                    *o.get_mut() = s;
                }
            }
        }
    }

    pub fn add(&self, o: &Vector) -> Result<Vector> {
        if self.module != o.module {
            return Err(Error::ModuleMismatch {
                left: format!("{:?}", self.module),
                right: format!("{:?}", o.module),
            });
        }
        let mut out = self.clone();
        for (p, c) in &o.terms {
            out.accumulate(p.clone(), c.clone());
        }
        Ok(out)
    }

    pub fn sub(&self, o: &Vector) -> Result<Vector> {
        self.add(&o.scale(&ExactScalar::from_int(-1)))
    }

    pub fn scale(&self, c: &ExactScalar) -> Vector {
        if c.is_zero() {
            return Vector::zero(self.module.clone());
        }
        Vector {
            module: self.module.clone(),
            terms: self.terms.iter().map(|(p, v)| (p.clone(), v.mul(c))).collect(),
        }
    }

    pub fn scale_rat(&self, r: &Rat) -> Vector {
        self.scale(&ExactScalar::from_rat(r.clone()))
    }

    pub fn state_weight(module: &Module, parts: &[u32]) -> Rat {
        module.base_weight() + rint(level(parts) as i64)
    }

    /// Homogeneous conformal weight, None for zero or mixed vectors.
    pub fn weight(&self) -> Option<Rat> {
        let mut w = None;
        for p in self.terms.keys() {
            let this = Vector::state_weight(&self.module, p);
            match &w {
                None => w = Some(this),
                Some(prev) if *prev != this => return None,
                _ => {}
            }
        }
        w
    }

    pub fn graded_components(&self) -> BTreeMap<Rat, Vector> {
        let mut out: BTreeMap<Rat, Vector> = BTreeMap::new();
        for (p, c) in &self.terms {
            let w = Vector::state_weight(&self.module, p);
            out.entry(w)
                .or_insert_with(|| Vector::zero(self.module.clone()))
                .accumulate(p.clone(), c.clone());
        }
        out
    }
}

impl fmt::Display for Vector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let letter = self.module.generator_letter();
        let ket = match &self.module {
            Module::VirasoroVacuum { .. } => "|0>".to_string(),
            Module::Fock { charge, .. } => format!("|{}>", rat_to_string(charge)),
        };
        let mut first = true;
        for (parts, c) in &self.terms {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            if !c.is_one() {
                write!(f, "({c})*")?;
            }
            let mut i = 0;
            while i < parts.len() {
                let run = parts[i..].iter().take_while(|&&p| p == parts[i]).count();
                write!(f, "{letter}(-{})", parts[i])?;
                if run > 1 {
                    write!(f, "^{run}")?;
                }
                i += run;
            }
            write!(f, "{ket}")?;
        }
        Ok(())
    }
}

/// Descending partitions of `total` with parts at least `min_part`.
pub fn partitions(total: u32, min_part: u32) -> Vec<Vec<u32>> {
    fn go(remaining: u32, max_part: u32, min_part: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if remaining == 0 {
            out.push(prefix.clone());
            return;
        }
        let top = max_part.min(remaining);
        let mut part = top;
        while part >= min_part {
            prefix.push(part);
            go(remaining - part, part, min_part, prefix, out);
            prefix.pop();
            part -= 1;
        }
    }
    let mut out = Vec::new();
    go(total, total.max(1), min_part, &mut Vec::new(), &mut out);
    out
}

/// Counts of partitions with parts at least `min_part`, for sizes
/// 0..=max (bounded-knapsack recurrence, no enumeration).
pub fn partition_counts(max: usize, min_part: usize) -> Vec<u64> {
    let mut dp = vec![0u64; max + 1];
    dp[0] = 1;
    for part in min_part.max(1)..=max.max(1) {
        if part > max {
            break;
        }
        for g in part..=max {
            dp[g] += dp[g - part];
        }
    }
    dp
}

type ModeKey = (Rat, Vec<u32>, Rat, Rat, Vec<u32>);

/// Mode engine for one algebra instance. Holds the memo tables; all
/// vectors passed in must live over modules of this algebra.
pub struct Voa {
    vacuum_module: Module,
    mode_memo: RefCell<HashMap<ModeKey, Vector>>,
    l_memo: RefCell<HashMap<(i64, Rat, Vec<u32>), Vector>>,
}

impl Voa {
    pub fn virasoro(c: Rat) -> Self {
        Voa::new(Module::VirasoroVacuum { c })
    }

    pub fn free_boson(gram: Rat) -> Self {
        assert!(!gram.is_zero(), "degenerate gram");
        Voa::new(Module::Fock {
            gram,
            charge: Rat::zero(),
        })
    }

    fn new(vacuum_module: Module) -> Self {
        Voa {
            vacuum_module,
            mode_memo: RefCell::new(HashMap::new()),
            l_memo: RefCell::new(HashMap::new()),
        }
    }

    pub fn vacuum_module(&self) -> Module {
        self.vacuum_module.clone()
    }

    pub fn central_charge(&self) -> Rat {
        match &self.vacuum_module {
            Module::VirasoroVacuum { c } => c.clone(),
            Module::Fock { .. } => Rat::one(),
        }
    }

    pub fn vacuum(&self) -> Vector {
        Vector::basis(self.vacuum_module.clone(), &[]).unwrap()
    }

    /// Conformal vector: L(-2)|0>, or J(-1)²|0>/(2·gram) for the boson.
    pub fn omega(&self) -> Vector {
        match &self.vacuum_module {
            Module::VirasoroVacuum { .. } => {
                Vector::basis(self.vacuum_module.clone(), &[2]).unwrap()
            }
            Module::Fock { gram, .. } => {
                let half = Rat::one() / (rint(2) * gram);
                Vector::basis(self.vacuum_module.clone(), &[1, 1])
                    .unwrap()
                    .scale_rat(&half)
            }
        }
    }

    pub fn fock(&self, charge: Rat) -> Result<Module> {
        match &self.vacuum_module {
            Module::Fock { gram, .. } => Ok(Module::Fock {
                gram: gram.clone(),
                charge,
            }),
            Module::VirasoroVacuum { .. } => Err(Error::Unsupported {
                op: "fock",
                detail: "Virasoro algebra has no charged modules here".into(),
            }),
        }
    }

    pub fn fock_state(&self, charge: Rat, parts: &[u32]) -> Result<Vector> {
        Vector::basis(self.fock(charge)?, parts)
    }

    pub fn vacuum_state(&self, parts: &[u32]) -> Result<Vector> {
        Vector::basis(self.vacuum_module.clone(), parts)
    }

    pub fn check_compatible(&self, m: &Module) -> Result<()> {
        if self.vacuum_module.same_algebra(m) {
            Ok(())
        } else {
            Err(Error::ModuleMismatch {
                left: format!("{:?}", self.vacuum_module),
                right: format!("{m:?}"),
            })
        }
    }

    pub fn basis(&self, module: &Module, level: u32) -> Result<Vec<Vector>> {
        self.check_compatible(module)?;
        Ok(partitions(level, module.min_part())
            .into_iter()
            .map(|p| Vector::basis(module.clone(), &p).unwrap())
            .collect())
    }

    // -- Heisenberg action ---------------------------------------------

    /// J_n on a Fock-module vector.
    pub fn j_apply(&self, n: i64, w: &Vector) -> Result<Vector> {
        self.check_compatible(w.module())?;
        let Module::Fock { gram, charge } = w.module().clone() else {
            return Err(Error::Unsupported {
                op: "j_apply",
                detail: "current modes act on Fock modules only".into(),
            });
        };
        let mut out = Vector::zero(w.module().clone());
        for (parts, c) in &w.terms {
            let piece = self.j_basis(&gram, &charge, n, parts);
            for (p2, c2) in piece.terms {
                out.accumulate(p2, c2.mul(c));
            }
        }
        Ok(out)
    }

    fn j_basis(&self, gram: &Rat, charge: &Rat, n: i64, parts: &[u32]) -> Vector {
        let module = Module::Fock {
            gram: gram.clone(),
            charge: charge.clone(),
        };
        if n == 0 {
            return Vector::basis(module, parts).unwrap().scale_rat(charge);
        }
        if n < 0 {
            let part = (-n) as u32;
            let pos = parts.iter().position(|&p| p < part).unwrap_or(parts.len());
            let mut v = parts.to_vec();
            v.insert(pos, part);
            return Vector::basis(module, &v).unwrap();
        }
        let part = n as u32;
        let count = parts.iter().filter(|&&p| p == part).count();
        if count == 0 {
            return Vector::zero(module);
        }
        let pos = parts.iter().position(|&p| p == part).unwrap();
        let mut v = parts.to_vec();
        v.remove(pos);
        Vector::basis(module, &v)
            .unwrap()
            .scale_rat(&(gram * rint(n) * rint(count as i64)))
    }

    // -- Virasoro action -----------------------------------------------

    /// L(n) on any module of this algebra.
    pub fn l_apply(&self, n: i64, w: &Vector) -> Result<Vector> {
        self.check_compatible(w.module())?;
        let mut out = Vector::zero(w.module().clone());
        for (parts, c) in &w.terms {
            let piece = self.l_basis(w.module(), n, parts);
            for (p2, c2) in piece.terms {
                out.accumulate(p2, c2.mul(c));
            }
        }
        Ok(out)
    }

    fn l_basis(&self, module: &Module, n: i64, parts: &[u32]) -> Vector {
        let key = (n, module.charge(), parts.to_vec());
        if let Some(hit) = self.l_memo.borrow().get(&key) {
            return hit.clone();
        }
        let out = match module {
            Module::VirasoroVacuum { c } => self.l_virasoro(module, c, n, parts),
            Module::Fock { gram, charge } => self.l_fock(module, gram, charge, n, parts),
        };
        self.l_memo.borrow_mut().insert(key, out.clone());
        out
    }

    /// PBW straightening against [L(n), L(-m)] = (n+m)L(n-m)
    /// + δ_{n,m} c(n³-n)/12.
    fn l_virasoro(&self, module: &Module, c: &Rat, n: i64, parts: &[u32]) -> Vector {
        if parts.is_empty() {
            return if n <= -2 {
                Vector::basis(module.clone(), &[(-n) as u32]).unwrap()
            } else {
                Vector::zero(module.clone())
            };
        }
        let m = parts[0];
        let rest = &parts[1..];
        if n <= -2 && (-n) as u32 >= m {
            let mut v = vec![(-n) as u32];
            v.extend_from_slice(parts);
            return Vector::basis(module.clone(), &v).unwrap();
        }
        let mut acc = Vector::zero(module.clone());
        let pushed = self.l_basis(module, n, rest);
        for (p2, c2) in &pushed.terms {
            let lifted = self.l_basis(module, -(m as i64), p2).scale(c2);
            acc = acc.add(&lifted).unwrap();
        }
        let swap = self
            .l_basis(module, n - m as i64, rest)
            .scale_rat(&rint(n + m as i64));
        acc = acc.add(&swap).unwrap();
        if n == m as i64 {
            let central = c * rint(n * n * n - n) / rint(12);
            let tail = Vector::basis(module.clone(), rest).unwrap().scale_rat(&central);
            acc = acc.add(&tail).unwrap();
        }
        acc
    }

    /// Sugawara action L(n) = (1/2·gram) Σ :J_k J_{n-k}: on Fock states;
    /// n = 0 acts by the conformal weight.
    fn l_fock(&self, module: &Module, gram: &Rat, charge: &Rat, n: i64, parts: &[u32]) -> Vector {
        let state = Vector::basis(module.clone(), parts).unwrap();
        if n == 0 {
            let wt = Vector::state_weight(module, parts);
            return state.scale_rat(&wt);
        }
        let lvl = level(parts) as i64;
        let norm = Rat::one() / (rint(2) * gram);
        let mut acc = Vector::zero(module.clone());
        let b_min = (n + 1).div_euclid(2);
        for b in b_min..=lvl.max(0) {
            let a = n - b;
            // annihilators act first (normal ordering); larger index b first
            let inner = self.j_basis(gram, charge, b, parts);
            if inner.is_zero() {
                continue;
            }
            let outer = self.j_apply(a, &inner).unwrap();
            if outer.is_zero() {
                continue;
            }
            let factor = if a == b { norm.clone() } else { &norm * rint(2) };
            acc = acc.add(&outer.scale_rat(&factor)).unwrap();
        }
        acc
    }

    // -- General modes --------------------------------------------------

    /// Mode u_t of the (intertwining) vertex operator attached to u,
    /// applied to w. Gradings fix the target module; indices t whose
    /// relative grade is fractional or negative act as zero.
    pub fn mode(&self, u: &Vector, t: &Rat, w: &Vector) -> Result<Vector> {
        self.check_compatible(u.module())?;
        self.check_compatible(w.module())?;
        let target = self.mode_target(u.module(), w.module());
        let mut out = Vector::zero(target);
        for (pu, cu) in &u.terms {
            for (pw, cw) in &w.terms {
                let piece = self.mode_basis(u.module(), pu, t, w.module(), pw);
                if piece.is_zero() {
                    continue;
                }
                out = out.add(&piece.scale(&cu.mul(cw)))?;
            }
        }
        Ok(out)
    }

    pub fn mode_int(&self, u: &Vector, t: i64, w: &Vector) -> Result<Vector> {
        self.mode(u, &rint(t), w)
    }

    /// Largest mode index t for which u_t w can still be nonzero, read off
    /// the gradings; i64::MIN when either vector is zero.
    pub fn mode_ceiling(&self, u: &Vector, w: &Vector) -> i64 {
        let target = self.mode_target(u.module(), w.module());
        let top = |v: &Vector| {
            v.terms()
                .map(|(parts, _)| Vector::state_weight(v.module(), parts))
                .max()
        };
        match (top(u), top(w)) {
            (Some(a), Some(b)) => (a + b - Rat::one() - target.base_weight())
                .floor()
                .to_integer()
                .to_i64()
                .unwrap_or(i64::MIN),
            _ => i64::MIN,
        }
    }

    /// Module a mode of a `u_mod` vector sends `w_mod` into; Fock charges add.
    pub fn mode_target(&self, u_mod: &Module, w_mod: &Module) -> Module {
        match (u_mod, w_mod) {
            (Module::Fock { gram, charge: a }, Module::Fock { charge: b, .. }) => Module::Fock {
                gram: gram.clone(),
                charge: a + b,
            },
            _ => w_mod.clone(),
        }
    }

    fn mode_basis(
        &self,
        u_mod: &Module,
        u_parts: &[u32],
        t: &Rat,
        w_mod: &Module,
        w_parts: &[u32],
    ) -> Vector {
        let target = self.mode_target(u_mod, w_mod);
        let rel = Vector::state_weight(u_mod, u_parts) + Vector::state_weight(w_mod, w_parts)
            - t
            - Rat::one()
            - target.base_weight();
        if !rel.is_integer() || rel.is_negative() {
            return Vector::zero(target);
        }
        let key: ModeKey = (
            u_mod.charge(),
            u_parts.to_vec(),
            t.clone(),
            w_mod.charge(),
            w_parts.to_vec(),
        );
        if let Some(hit) = self.mode_memo.borrow().get(&key) {
            return hit.clone();
        }
        let out = match u_parts.split_first() {
            None => {
                if u_mod.charge().is_zero() {
                    // vacuum vector: 1_t = δ_{t,-1} id
                    if *t == rint(-1) {
                        Vector::basis(target, w_parts).unwrap()
                    } else {
                        Vector::zero(target)
                    }
                } else {
                    let rel_int = rel.to_integer().to_i64().expect("grade fits i64");
                    self.exponential_mode(u_mod, w_parts, rel_int, &target)
                }
            }
            Some((&n1, rest)) => self.iterate_mode(u_mod, n1, rest, t, w_mod, w_parts, &target),
        };
        self.mode_memo.borrow_mut().insert(key, out.clone());
        out
    }

    /// (e_μ)_t w via E⁻(μ,x) E⁺(μ,x) e_μ x^{μν/gram}: collect every way
    /// of splitting the required grade between annihilation degree d⁺
    /// and creation degree d⁻ = rel - level(w) + d⁺.
    fn exponential_mode(&self, u_mod: &Module, w_parts: &[u32], rel: i64, target: &Module) -> Vector {
        let Module::Fock { gram, charge: mu } = u_mod else {
            unreachable!("charged states live in Fock modules");
        };
        let shifted = Vector::basis(target.clone(), w_parts).unwrap();
        let lvl = level(w_parts) as i64;
        let s = rel - lvl;
        let mut acc = Vector::zero(target.clone());
        for d_plus in 0..=lvl {
            let d_minus = s + d_plus;
            if d_minus < 0 {
                continue;
            }
            let lowered = self.exp_ladder(gram, mu, d_plus as u32, &shifted, true);
            if lowered.is_zero() {
                continue;
            }
            let raised = self.exp_ladder(gram, mu, d_minus as u32, &lowered, false);
            acc = acc.add(&raised).unwrap();
        }
        acc
    }

    /// Degree-d part of exp(∓(μ/gram) Σ_{n>0} J_{±n} x^{∓n}/n) applied
    /// to v (annihilate: upper signs).
    fn exp_ladder(&self, gram: &Rat, mu: &Rat, d: u32, v: &Vector, annihilate: bool) -> Vector {
        if d == 0 {
            return v.clone();
        }
        let base = mu / gram;
        let mut acc = Vector::zero(v.module().clone());
        for part in partitions(d, 1) {
            let mut coeff = Rat::one();
            let mut i = 0;
            while i < part.len() {
                let n = part[i];
                let run = part[i..].iter().take_while(|&&p| p == n).count();
                let mut c_n = &base / rint(n as i64);
                if annihilate {
                    c_n = -c_n;
                }
                let mut power = Rat::one();
                for _ in 0..run {
                    power *= &c_n;
                }
                coeff *= power / factorial_rat(run as u32);
                i += run;
            }
            let mut w = v.clone();
            for &n in &part {
                let idx = if annihilate { n as i64 } else { -(n as i64) };
                w = self.j_apply(idx, &w).unwrap();
                if w.is_zero() {
                    break;
                }
            }
            if !w.is_zero() {
                acc = acc.add(&w.scale_rat(&coeff)).unwrap();
            }
        }
        acc
    }

    #[allow(clippy::too_many_arguments)]
    fn iterate_mode(
        &self,
        u_mod: &Module,
        n1: u32,
        rest: &[u32],
        t: &Rat,
        w_mod: &Module,
        w_parts: &[u32],
        target: &Module,
    ) -> Vector {
        let is_boson = matches!(u_mod, Module::Fock { .. });
        // u = a_{-p}(rest) with a the weight-1 current or the conformal
        // vector, whose modes are a_s = J_s or a_s = L(s-1)
        let p: i64 = if is_boson { n1 as i64 } else { n1 as i64 - 1 };
        let rest_state = Vector::basis(u_mod.clone(), rest).unwrap();
        let w_state = Vector::basis(w_mod.clone(), w_parts).unwrap();
        let sign = if p % 2 == 0 { 1 } else { -1 };
        let mut acc = Vector::zero(target.clone());

        // Σ_i C(p+i-1, i) a_{-p-i} (rest_{t+i} w): grading kills the
        // inner mode beyond rel(u) - n1
        let rel_u = Vector::state_weight(u_mod, &[&[n1][..], rest].concat())
            + Vector::state_weight(w_mod, w_parts)
            - t
            - Rat::one()
            - target.base_weight();
        let bound1 = rel_u.to_integer().to_i64().expect("grade fits i64") - n1 as i64;
        let mut i = 0i64;
        while i <= bound1 {
            let inner = self.mode_basis(u_mod, rest, &(t + rint(i)), w_mod, w_parts);
            if !inner.is_zero() {
                let outer = if is_boson {
                    self.j_apply(-p - i, &inner).unwrap()
                } else {
                    self.l_apply(-p - i - 1, &inner).unwrap()
                };
                let b = binom(p + i - 1, i as u32);
                acc = acc.add(&outer.scale_rat(&b)).unwrap();
            }
            i += 1;
        }

        // -(-1)^p Σ_i C(p+i-1, i) rest_{t-p-i} (a_i w): a_i kills w once
        // i exceeds the level (one later for the conformal vector)
        let lvl_w = level(w_parts) as i64;
        let bound2 = if is_boson { lvl_w } else { lvl_w + 1 };
        for i in 0..=bound2 {
            let aw = if is_boson {
                self.j_apply(i, &w_state).unwrap()
            } else {
                self.l_apply(i - 1, &w_state).unwrap()
            };
            if aw.is_zero() {
                continue;
            }
            let shifted_t = t - rint(p + i);
            let inner = self.mode(&rest_state, &shifted_t, &aw).unwrap();
            if !inner.is_zero() {
                let b = binom(p + i - 1, i as u32) * rint(-sign);
                acc = acc.add(&inner.scale_rat(&b)).unwrap();
            }
        }
        acc
    }
}

fn factorial_rat(n: u32) -> Rat {
    let mut acc = Rat::one();
    for i in 2..=n as i64 {
        acc *= rint(i);
    }
    acc
}

// ---------------------------------------------------------------------------
// Lattice sector bookkeeping: the rank-one even lattice scaled so its
// generator has norm 2N. Only graded dimensions are needed; charge β
// contributes weight β²/(4N), and sector j collects β ≡ j mod 2N.

/// Minimal conformal weight of sector j of the norm-2N lattice.
pub fn lattice_min_weight(n: u32, j: u32) -> Rat {
    assert!(n > 0 && j < 2 * n);
    let a = i64::from(j);
    let b = a - 2 * i64::from(n);
    Rat::new(BigInt::from((a * a).min(b * b)), BigInt::from(4 * i64::from(n)))
}

/// Dimensions of the first `grades` integer grades of sector j above its
/// minimal weight.
pub fn lattice_sector_dims(n: u32, j: u32, grades: usize) -> Vec<u64> {
    let h = lattice_min_weight(n, j);
    let counts = partition_counts(grades.saturating_sub(1), 1);
    let mut dims = vec![0u64; grades];
    let four_n = Rat::from_integer(BigInt::from(4 * i64::from(n)));
    for dir in [1i64, -1] {
        let mut beta = i64::from(j);
        if dir < 0 {
            beta -= 2 * i64::from(n);
        }
        loop {
            let rel = Rat::from_integer(BigInt::from(beta * beta)) / &four_n - &h;
            assert!(rel.is_integer());
            let Some(rel) = rel.to_integer().to_usize() else {
                break;
            };
            if rel >= grades {
                break;
            }
            for g in rel..grades {
                dims[g] += counts[g - rel];
            }
            beta += dir * 2 * i64::from(n);
        }
    }
    dims
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(n: i64, d: i64) -> Rat {
        Rat::new(BigInt::from(n), BigInt::from(d))
    }

    #[test]
    fn virasoro_vacuum_dims() {
        assert_eq!(partition_counts(6, 2), vec![1, 0, 1, 1, 2, 2, 4]);
        let voa = Voa::virasoro(r(1, 2));
        assert_eq!(voa.basis(&voa.vacuum_module(), 4).unwrap().len(), 2);
        assert_eq!(voa.basis(&voa.vacuum_module(), 6).unwrap().len(), 4);
        assert_eq!(partitions(5, 2), vec![vec![5], vec![3, 2]]);
    }

    #[test]
    fn virasoro_commutator_with_central_term() {
        let c = r(1, 2);
        let voa = Voa::virasoro(c.clone());
        let samples = [
            voa.vacuum(),
            voa.omega(),
            voa.vacuum_state(&[3, 2]).unwrap(),
        ];
        for v in &samples {
            for (k, m) in [(3i64, 3i64), (2, 2), (1, 3)] {
                let lhs = voa
                    .l_apply(k, &voa.l_apply(-m, v).unwrap())
                    .unwrap()
                    .sub(&voa.l_apply(-m, &voa.l_apply(k, v).unwrap()).unwrap())
                    .unwrap();
                let mut rhs = voa.l_apply(k - m, v).unwrap().scale_rat(&rint(k + m));
                if k == m {
                    let central = &c * rint(k * k * k - k) / rint(12);
                    rhs = rhs.add(&v.scale_rat(&central)).unwrap();
                }
                assert_eq!(lhs, rhs, "[L({k}), L(-{m})] on {v}");
            }
        }
    }

    #[test]
    fn heisenberg_commutator() {
        let voa = Voa::free_boson(r(3, 1));
        let w = voa.fock_state(r(1, 2), &[2, 1]).unwrap();
        let comm = |m: i64, n: i64, v: &Vector| {
            voa.j_apply(m, &voa.j_apply(n, v).unwrap())
                .unwrap()
                .sub(&voa.j_apply(n, &voa.j_apply(m, v).unwrap()).unwrap())
                .unwrap()
        };
        assert_eq!(comm(2, -2, &w), w.scale_rat(&r(6, 1)));
        assert!(comm(1, -2, &w).is_zero());
        assert!(comm(-1, -3, &w).is_zero());
        // [L(m), J(n)] = -n J(m+n)
        let lhs = voa
            .l_apply(1, &voa.j_apply(-1, &w).unwrap())
            .unwrap()
            .sub(&voa.j_apply(-1, &voa.l_apply(1, &w).unwrap()).unwrap())
            .unwrap();
        assert_eq!(lhs, voa.j_apply(0, &w).unwrap());
    }

    #[test]
    fn fock_weights() {
        let voa = Voa::free_boson(r(2, 1));
        let w = voa.fock_state(r(2, 3), &[2, 1]).unwrap();
        let expect = r(1, 9) + rint(3);
        assert_eq!(voa.l_apply(0, &w).unwrap(), w.scale_rat(&expect));
        assert_eq!(w.weight(), Some(expect));
    }

    #[test]
    fn omega_modes_agree_with_l_action() {
        let vir = Voa::virasoro(r(1, 2));
        let v = vir.vacuum_state(&[3]).unwrap();
        for n in -3..=3 {
            let via_mode = vir.mode_int(&vir.omega(), n + 1, &v).unwrap();
            assert_eq!(via_mode, vir.l_apply(n, &v).unwrap(), "L({n}) virasoro");
        }
        let bos = Voa::free_boson(r(2, 1));
        let w = bos.fock_state(r(1, 2), &[2, 1]).unwrap();
        for n in -3..=3 {
            let via_mode = bos.mode_int(&bos.omega(), n + 1, &w).unwrap();
            assert_eq!(via_mode, bos.l_apply(n, &w).unwrap(), "L({n}) boson");
        }
    }

    #[test]
    fn translation_covariance_of_modes() {
        // J(-2)|0> = L(-1)J(-1)|0>, so its modes are -t J_{t-1}
        let bos = Voa::free_boson(r(1, 1));
        let u2 = bos.vacuum_state(&[2]).unwrap();
        let u1 = bos.vacuum_state(&[1]).unwrap();
        let w = bos.fock_state(r(-1, 1), &[1]).unwrap();
        for t in -3..=2 {
            let lhs = bos.mode_int(&u2, t, &w).unwrap();
            let rhs = bos.mode_int(&u1, t - 1, &w).unwrap().scale_rat(&rint(-t));
            assert_eq!(lhs, rhs, "t = {t}");
        }
        // L(-3)|0> = L(-1)L(-2)|0> on the Virasoro side
        let vir = Voa::virasoro(r(1, 1));
        let u3 = vir.vacuum_state(&[3]).unwrap();
        let om = vir.omega();
        let v = vir.vacuum_state(&[2, 2]).unwrap();
        for t in -4..=3 {
            let lhs = vir.mode_int(&u3, t, &v).unwrap();
            let rhs = vir.mode_int(&om, t - 1, &v).unwrap().scale_rat(&rint(-t));
            assert_eq!(lhs, rhs, "t = {t}");
        }
    }

    #[test]
    fn exponential_top_mode_and_grading_guard() {
        let voa = Voa::free_boson(r(2, 1));
        // charges 2 and -1: pairing μν/gram = -1, top mode index 0
        let e2 = voa.fock_state(r(2, 1), &[]).unwrap();
        let w = voa.fock_state(r(-1, 1), &[]).unwrap();
        let top = voa.mode_int(&e2, 0, &w).unwrap();
        assert_eq!(top, voa.fock_state(r(1, 1), &[]).unwrap());
        // fractional charge: pairing 1/3 shifts indices off the integers
        let f = voa.fock_state(r(1, 3), &[]).unwrap();
        let top_f = voa.mode(&e2, &r(-4, 3), &f).unwrap();
        assert_eq!(top_f, voa.fock_state(r(7, 3), &[]).unwrap());
        assert!(voa.mode_int(&e2, -1, &f).unwrap().is_zero());
        // level-1 coefficient of the creation ladder: (μ/gram) J(-1)
        let next = voa.mode_int(&e2, -1, &w).unwrap();
        assert_eq!(
            next,
            voa.fock_state(r(1, 1), &[1]).unwrap().scale_rat(&r(1, 1))
        );
    }

    #[test]
    fn exponential_covariance() {
        // [J_n, (e_μ)_t] = μ (e_μ)_{t+n}
        let voa = Voa::free_boson(r(2, 1));
        let mu = r(2, 1);
        let e2 = voa.fock_state(mu.clone(), &[]).unwrap();
        let w = voa.fock_state(r(-1, 1), &[1]).unwrap();
        for n in [-2i64, -1, 1, 2] {
            for t in -3..=1 {
                let lhs = voa
                    .j_apply(n, &voa.mode_int(&e2, t, &w).unwrap())
                    .unwrap()
                    .sub(&voa.mode_int(&e2, t, &voa.j_apply(n, &w).unwrap()).unwrap())
                    .unwrap();
                let rhs = voa.mode_int(&e2, t + n, &w).unwrap().scale_rat(&mu);
                assert_eq!(lhs, rhs, "n = {n}, t = {t}");
            }
        }
        // L(-1)e_μ = (μ/gram) J(-1)e_μ and modes of L(-1)u are -t u_{t-1}
        let du = voa.fock_state(mu.clone(), &[1]).unwrap();
        for t in -3..=1 {
            let lhs = voa.mode_int(&du, t, &w).unwrap();
            let rhs = voa.mode_int(&e2, t - 1, &w).unwrap().scale_rat(&rint(-t));
            assert_eq!(lhs, rhs, "t = {t}");
        }
    }

    #[test]
    fn lattice_dimensions() {
        assert_eq!(lattice_min_weight(1, 0), r(0, 1));
        assert_eq!(lattice_min_weight(1, 1), r(1, 4));
        assert_eq!(lattice_sector_dims(1, 0, 4), vec![1, 3, 4, 7]);
        assert_eq!(lattice_sector_dims(1, 1, 3), vec![2, 2, 6]);
        assert_eq!(lattice_min_weight(2, 3), r(1, 8));
    }

    #[test]
    fn module_mismatch_is_an_error() {
        let vir = Voa::virasoro(r(1, 2));
        let bos = Voa::free_boson(r(1, 1));
        let w = bos.fock_state(r(1, 1), &[]).unwrap();
        assert!(vir.l_apply(0, &w).is_err());
        assert!(vir.check_compatible(w.module()).is_err());
        let other = Voa::virasoro(r(1, 1));
        assert!(other.check_compatible(&vir.vacuum_module()).is_err());
    }
}
