use super::*;
use crate::semantics::SemConfig;
use crate::syntax::build::*;
use crate::syntax::{parse, TermRef};
use num_rational::BigRational;

fn v(web: &Web, c: &[f64]) -> PcsVec {
    PcsVec::new(web.clone(), c.to_vec()).unwrap()
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() < 1e-12
}

#[test]
fn norms() {
    let w = Web::nat(3);
    let s = PcsSpace::simplex(w.clone());
    assert_eq!(s.norm(&PcsVec::basis(&w, 0)).unwrap(), 1.0);
    assert_eq!(s.norm(&v(&w, &[0.5, 0.25, 0.0])).unwrap(), 0.75);
    assert_eq!(s.norm(&PcsVec::zero(&w)).unwrap(), 0.0);
    let p = PcsSpace::polar(w.clone(), vec![vec![1.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]).unwrap();
    let x = v(&w, &[0.2, 0.3, 0.1]);
    assert!(close(p.norm(&x).unwrap(), 0.5));
    let b = PcsSpace::boxed(w.clone(), vec![1.0, 0.5, 2.0]).unwrap();
    assert!(close(b.norm(&x).unwrap(), 0.6));
}

#[test]
fn invalid_spaces() {
    let w = Web::nat(2);
    assert!(PcsSpace::boxed(w.clone(), vec![1.0, 0.0]).is_err());
    assert!(PcsSpace::polar(w.clone(), vec![vec![1.0, 0.0]]).is_err());
    assert!(PcsSpace::polar(w, vec![vec![1.0]]).is_err());
    assert!(Web::new(Vec::<String>::new()).is_err());
    assert!(PcsVec::new(Web::nat(1), vec![-1.0]).is_err());
}

#[test]
fn matrices() {
    let k = 4;
    let w = Web::nat(k);
    let e0 = PcsVec::basis(&w, 0);
    assert_eq!(matapp(&LinMap::succ(k), &e0).unwrap(), PcsVec::basis(&w, 1));
    assert_eq!(matapp(&LinMap::pred(k), &e0).unwrap(), e0);
    assert_eq!(
        matapp(&LinMap::pred(k), &PcsVec::basis(&w, 3)).unwrap(),
        PcsVec::basis(&w, 2)
    );
    let s = LinMap::succ(k);
    let p = LinMap::pred(k);
    let lhs = compose(&compose(&s, &p).unwrap(), &s).unwrap();
    let rhs = compose(&s, &compose(&p, &s).unwrap()).unwrap();
    assert_eq!(lhs, rhs);
    assert!(matapp(&s, &PcsVec::basis(&Web::nat(2), 0)).is_err());
}

#[test]
fn tensor_and_monomial() {
    let w = Web::nat(2);
    let x = v(&w, &[0.5, 0.25]);
    let t = x.tensor(&v(&w, &[1.0, 0.5]));
    assert_eq!(t.coords(), &[0.5, 0.25, 0.25, 0.125]);
    assert_eq!(t.web().symbols()[1], "(0,1)");
    assert_eq!(v(&w, &[0.5, 0.0]).monomial(&Multiset::new([0, 0])), 0.25);
    assert_eq!(x.monomial(&Multiset::empty()), 1.0);
}

#[test]
fn polar_membership() {
    let w = Web::nat(1);
    let e0 = PcsVec::basis(&w, 0);
    assert!(polar_member(&e0, std::slice::from_ref(&e0)).unwrap());
    assert!(!polar_member(&e0.scale(2.0), std::slice::from_ref(&e0)).unwrap());
    assert!(polar_duality_check(1000, 7).passed());
}

#[test]
fn lattice_and_distance() {
    let w = Web::nat(2);
    let s = PcsSpace::simplex(w.clone());
    let x = v(&w, &[0.3, 0.6]);
    assert_eq!(dist(&x, &x, &s).unwrap(), 0.0);
    for eps in [0.1, 0.01] {
        let d = dist(&PcsVec::basis(&w, 0), &v(&w, &[1.0 - eps, eps]), &s).unwrap();
        assert!(close(d, 2.0 * eps));
    }
    let y = v(&w, &[0.5, 0.1]);
    assert_eq!(glb(&x, &y).unwrap().coords(), &[0.3, 0.1]);
    assert!(close(lub(&x, &y).unwrap().get(0), 0.5) && close(lub(&x, &y).unwrap().get(1), 0.6));
    let report = distance_axioms_check(2000, 11);
    assert!(report.passed(), "{report:?}");
}

#[test]
fn local_spaces() {
    let w = Web::nat(2);
    let s = PcsSpace::simplex(w.clone());
    assert_eq!(s.local_web(&PcsVec::zero(&w)).unwrap(), vec![0, 1]);
    assert!(s.local_web(&PcsVec::basis(&w, 1)).unwrap().is_empty());
    let half = v(&w, &[0.5, 0.0]);
    assert!(s.local_member(&half, &v(&w, &[0.0, 0.5])).unwrap());
    assert!(!s.local_member(&half, &v(&w, &[0.0, 0.75])).unwrap());
    assert!(s.local_web(&v(&w, &[1.0, 1.0])).is_err());

    let b = PcsSpace::boxed(w.clone(), vec![1.0, 1.0]).unwrap();
    assert_eq!(b.local_web(&v(&w, &[1.0, 0.2])).unwrap(), vec![1]);
    let p = PcsSpace::polar(w.clone(), vec![vec![1.0, 0.0], vec![0.0, 2.0]]).unwrap();
    assert_eq!(p.local_web(&v(&w, &[0.3, 0.5])).unwrap(), vec![0]);
    assert!(!p
        .local_member(&v(&w, &[0.3, 0.5]), &v(&w, &[0.1, 0.01]))
        .unwrap());
}

#[test]
fn series_application() {
    let w = Web::nat(2);
    let one = Web::nat(1);
    let sq = PowerSeries::new(w.clone(), one.clone())
        .with_term(Multiset::new([0, 0]), 0, 1.0)
        .unwrap();
    assert_eq!(sq.apply(&v(&w, &[0.5, 0.0])).unwrap().coords(), &[0.25]);
    assert_eq!(sq.apply(&PcsVec::basis(&w, 0)).unwrap().coords(), &[1.0]);
    let id = PowerSeries::identity(&w);
    let x = v(&w, &[0.3, 0.4]);
    assert_eq!(id.apply(&x).unwrap(), x);
    assert!(sq.clone().with_term(Multiset::new([5]), 0, 1.0).is_err());
}

#[test]
fn derivatives() {
    let w = Web::nat(2);
    let sq = PowerSeries::new(w.clone(), Web::unit())
        .with_term(Multiset::new([0, 0]), 0, 1.0)
        .unwrap();
    let x = v(&w, &[0.3, 0.2]);
    let d = sq.deriv(&x).unwrap();
    assert!(close(d.get(0, 0), 0.6));
    assert_eq!(d.get(1, 0), 0.0);
    // identity: derivative is the identity matrix everywhere
    assert_eq!(
        PowerSeries::identity(&w).deriv(&x).unwrap(),
        LinMap::identity(&w)
    );
}

#[test]
fn codereliction() {
    let w = Web::nat(2);
    let t = promotion(&w, 3);
    let ms = multisets_up_to(2, 3);
    assert_eq!(ms.len(), t.output().len());
    assert_eq!(ms.len(), 10);
    let zero = t.deriv(&PcsVec::zero(&w)).unwrap();
    for a in 0..2 {
        for (j, nu) in ms.iter().enumerate() {
            let dirac = if *nu == Multiset::single(a) { 1.0 } else { 0.0 };
            assert_eq!(zero.get(a, j), dirac, "a={a} nu={nu}");
        }
    }
    let x = v(&w, &[0.3, 0.5]);
    let d = t.deriv(&x).unwrap();
    for a in 0..2 {
        for (j, nu) in ms.iter().enumerate() {
            let want = match nu.remove_one(a) {
                Some(rest) => nu.count(a) as f64 * x.monomial(&rest),
                None => 0.0,
            };
            assert!(close(d.get(a, j), want));
        }
    }
}

#[test]
fn chain_rule_examples() {
    let w = Web::nat(1);
    let id = PowerSeries::identity(&w);
    let x = v(&w, &[0.4]);
    let u = v(&w, &[0.3]);
    assert_eq!(chain_rule_discrepancy(&id, &id, &x, &u).unwrap(), 0.0);
    let sq = PowerSeries::new(w.clone(), w.clone())
        .with_term(Multiset::new([0, 0]), 0, 1.0)
        .unwrap();
    let comp = sq.then(&sq).unwrap();
    // (x²)² has derivative 4x³
    assert!(close(
        comp.deriv(&x).unwrap().get(0, 0),
        4.0 * 0.4f64.powi(3)
    ));
    assert!(chain_rule_discrepancy(&sq, &sq, &x, &u).unwrap() < 1e-15);
    let r = chain_rule_check(100, 1e-9, 3);
    assert!(r.passed(), "{r:?}");
}

#[test]
fn lipschitz_examples() {
    let w = Web::nat(1);
    let t = PowerSeries::new(w.clone(), Web::unit())
        .with_term(Multiset::new([0; 10]), 0, 1.0)
        .unwrap();
    let (x, y) = (v(&w, &[0.9]), v(&w, &[0.8]));
    let gap = (t.apply(&x).unwrap().get(0) - t.apply(&y).unwrap().get(0)).abs();
    let d = dist(&x, &y, &PcsSpace::simplex(w.clone())).unwrap();
    assert!((gap - 0.2412).abs() < 1e-3);
    assert!(gap <= d / 0.1 + SLACK);
    assert!(lipschitz_check(SeriesSource::Fixed(&t), 0.9, 500, 1).passed());
    let constant = PowerSeries::new(w, Web::unit())
        .with_term(Multiset::empty(), 0, 0.5)
        .unwrap();
    let r = lipschitz_check(SeriesSource::Fixed(&constant), 0.5, 100, 1);
    assert_eq!(r.max_statistic, 0.0);
}

#[test]
fn randomized_properties() {
    let random = SeriesSource::Random {
        web_size: 3,
        max_degree: 6,
        max_terms: 6,
    };
    let r = lipschitz_check(random, 0.5, 2000, 5);
    assert!(r.passed(), "{r:?}");
    let r = first_order_check(500, 9);
    assert!(r.passed(), "{r:?}");
    let r = scaled_derivative_check(0.7, 500, 13);
    assert!(r.passed(), "{r:?}");
}

fn amplifier() -> TermRef {
    parse("fix (\\f:nat->nat. \\x:nat. ifz x then 0 else f x)").unwrap()
}

#[test]
fn tamed_amplifier() {
    let cfg = SemConfig::default();
    let eps = BigRational::new(1.into(), 10.into());
    let p = BigRational::new(1.into(), 2.into());
    let ctx = vec![amplifier()];
    let r = tamed_bound_check(&dice_ratio(0, 1), &dice(eps), &p, &ctx, &cfg).unwrap();
    assert!(close(r.distance, 0.2));
    assert!(close(r.bound, 0.2));
    assert!((r.gaps[0].untamed_gap - 1.0).abs() < 1e-6, "{r:?}");
    // tamed gap is pε/(1 − p(1 − ε))
    assert!((r.max_gap - 0.05 / 0.55).abs() < 1e-6, "{r:?}");
    assert!(r.passed());
}

#[test]
fn tamed_identical_terms() {
    let cfg = SemConfig::default();
    let p = BigRational::new(1.into(), 4.into());
    let ctx = parse_contexts("# two contexts\n\\x:nat. x\n\n\\x:nat. succ x # shift\n").unwrap();
    assert_eq!(ctx.len(), 2);
    let r = tamed_bound_check(&dice_ratio(1, 3), &dice_ratio(1, 3), &p, &ctx, &cfg).unwrap();
    assert_eq!(r.max_gap, 0.0);
    assert_eq!(r.distance, 0.0);
}

#[test]
fn tamed_rejects_bad_input() {
    let cfg = SemConfig::default();
    let p = BigRational::new(1.into(), 2.into());
    let f = lam("x", crate::syntax::Type::Nat, var("x"));
    assert!(tamed_bound_check(&f, &f, &p, &[], &cfg).is_err());
    assert!(tamed_bound_check(&num(0), &num(0), &p, &[num(0)], &cfg).is_err());
    let e = parse_contexts("\\x:nat. x\n\\x:nat. (\n").unwrap_err();
    assert_eq!(e.line, 2);
}
