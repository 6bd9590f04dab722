//! Randomized algebraic laws. Deterministic identity checks live next to
//! their modules; these run each law on arbitrary small inputs instead of
//! hand-picked ones.

use proptest::prelude::*;

use torustrace_core::coeff::{ExactScalar, Rat};
use torustrace_core::fps::{derivation_exp_apply, derivation_exp_coeffs, MultiSeries};
use torustrace_core::voa::{Vector, Voa};

fn rat(p: i64, q: i64) -> Rat {
    Rat::new(p.into(), q.into())
}

fn small_rat() -> impl Strategy<Value = Rat> {
    (-9i64..=9, 1i64..=9).prop_map(|(p, q)| rat(p, q))
}

fn scalar() -> impl Strategy<Value = ExactScalar> {
    prop::collection::vec((small_rat(), -2i64..=2), 1..4).prop_map(|terms| {
        terms.into_iter().fold(ExactScalar::zero(), |acc, (r, k)| {
            acc.add(&ExactScalar::lambda_pow(k).scale_rat(&r))
        })
    })
}

/// f = y + c₂y² + … + c₅y⁵ as a polynomial with a hard window.
fn unit_tangent_poly(cs: &[Rat], hi: i64) -> MultiSeries {
    let mut entries = vec![(vec![("y".into(), 1)], ExactScalar::one())];
    for (i, c) in cs.iter().enumerate() {
        entries.push((
            vec![("y".into(), i as i64 + 2)],
            ExactScalar::from_rat(c.clone()),
        ));
    }
    MultiSeries::from_terms(entries).with_truncation("y", hi)
}

/// Sparse two-variable polynomial; windows stay hard, so products are exact.
fn poly_xq() -> impl Strategy<Value = MultiSeries> {
    prop::collection::vec(((-2i64..=3, 0i64..=4), scalar()), 1..5).prop_map(|terms| {
        MultiSeries::from_terms(
            terms
                .into_iter()
                .map(|((ex, eq), c)| {
                    (vec![("x".to_string(), ex), ("q".to_string(), eq)], c)
                })
                .collect(),
        )
    })
}

proptest! {
    #[test]
    fn addition_cancels_exactly(a in scalar(), b in scalar()) {
        prop_assert_eq!(a.add(&b).sub(&b), a);
    }

    #[test]
    fn evaluation_is_a_ring_homomorphism(a in scalar(), b in scalar()) {
        let prod = a.mul(&b).eval_lambda(8).unwrap();
        let parts = a.eval_lambda(8).unwrap() * b.eval_lambda(8).unwrap();
        prop_assert!((prod - parts).norm() < 1e-6, "{} vs {}", prod, parts);
    }

    #[test]
    fn compositional_inverse_round_trips(cs in prop::collection::vec(small_rat(), 0..4)) {
        let f = unit_tangent_poly(&cs, 6);
        let inv = f.comp_inverse("y").unwrap();
        let diff = inv
            .compose("y", &f)
            .unwrap()
            .sub(&MultiSeries::monomial("y", 1))
            .unwrap();
        prop_assert!(diff.is_empty(), "residual {diff}");
        let s = diff.spec("y").unwrap();
        prop_assert!(s.hi >= 4, "window collapsed to {:?}", s);
    }

    #[test]
    fn derivation_coefficients_rebuild_the_series(cs in prop::collection::vec(small_rat(), 0..4)) {
        let hi = 6;
        let f = unit_tangent_poly(&cs, hi);
        let coeffs = derivation_exp_coeffs(&f, "y", (hi - 1) as usize).unwrap();
        let rebuilt = derivation_exp_apply(&coeffs, "y", hi).unwrap();
        let diff = rebuilt.sub(&f).unwrap();
        prop_assert!(diff.is_empty(), "residual {diff}");
        prop_assert!(diff.spec("y").unwrap().hi >= hi);
    }

    #[test]
    fn series_multiplication_is_associative(a in poly_xq(), b in poly_xq(), c in poly_xq()) {
        let lhs = a.mul(&b).mul(&c);
        let rhs = a.mul(&b.mul(&c));
        let diff = lhs.sub(&rhs).unwrap();
        prop_assert!(diff.is_empty(), "residual {diff}");
    }

    #[test]
    fn series_multiplication_distributes(a in poly_xq(), b in poly_xq(), c in poly_xq()) {
        let lhs = a.mul(&b.add(&c).unwrap());
        let rhs = a.mul(&b).add(&a.mul(&c)).unwrap();
        let diff = lhs.sub(&rhs).unwrap();
        prop_assert!(diff.is_empty(), "residual {diff}");
    }
}

fn pick(voa: &Voa, level: u32, index: &prop::sample::Index) -> Vector {
    let basis = voa.basis(&voa.vacuum_module(), level).unwrap();
    basis[index.index(basis.len())].clone()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn modes_obey_the_grading_law(
        boson in any::<bool>(),
        lu in 0u32..=4,
        lw in 0u32..=4,
        iu in any::<prop::sample::Index>(),
        iw in any::<prop::sample::Index>(),
        n in -3i64..=5,
    ) {
        let voa = if boson {
            Voa::free_boson(rat(1, 1))
        } else {
            Voa::virasoro(rat(1, 2))
        };
        // Virasoro has no level-1 states; fold empty levels down to the vacuum.
        let lu = if !boson && lu == 1 { 0 } else { lu };
        let lw = if !boson && lw == 1 { 0 } else { lw };
        let u = pick(&voa, lu, &iu);
        let w = pick(&voa, lw, &iw);
        let m = voa.mode_int(&u, n, &w).unwrap();
        if !m.is_zero() {
            let want = u.weight().unwrap() + w.weight().unwrap() - rat(n + 1, 1);
            for (wt, _) in m.graded_components() {
                prop_assert_eq!(&wt, &want, "mode u_{} landed at grade {}", n, wt);
            }
        }
    }

    #[test]
    fn virasoro_bracket_has_the_central_term(
        cc in small_rat(),
        m in -4i64..=4,
        n in -4i64..=4,
        lw in 0u32..=4,
        iw in any::<prop::sample::Index>(),
    ) {
        let voa = Voa::virasoro(cc.clone());
        let lw = if lw == 1 { 0 } else { lw };
        let w = pick(&voa, lw, &iw);
        let lhs = voa
            .l_apply(m, &voa.l_apply(n, &w).unwrap())
            .unwrap()
            .sub(&voa.l_apply(n, &voa.l_apply(m, &w).unwrap()).unwrap())
            .unwrap();
        let mut rhs = voa.l_apply(m + n, &w).unwrap().scale_rat(&rat(m - n, 1));
        if m + n == 0 {
            let central = cc / rat(12, 1) * rat(m * m * m - m, 1);
            rhs = rhs.add(&w.scale_rat(&central)).unwrap();
        }
        prop_assert!(lhs.sub(&rhs).unwrap().is_zero());
    }
}
