use super::*;
use crate::syntax::build::*;
use crate::syntax::{loop_term, make_mq, parse};
use num_rational::BigRational;

fn q(a: i64, b: i64) -> BigRational {
    BigRational::new(a.into(), b.into())
}

fn cfg() -> SemConfig {
    SemConfig::default()
}

fn pz(t: &TermRef) -> f64 {
    prob_zero(t, &cfg()).unwrap().value
}

fn mq_marked(a: i64, b: i64) -> TermRef {
    app(make_mq(q(a, b)), mark(num(0), "l"))
}

#[test]
fn dice_denotation() {
    let d = denot(&dice_ratio(3, 10), &Env::new(), &cfg()).unwrap();
    let dist = d.value.as_dist().unwrap();
    assert!((dist.coord(0).value - 0.3).abs() < 1e-15);
    assert!((dist.coord(1).value - 0.7).abs() < 1e-15);
    assert!(!d.unconverged);
}

#[test]
fn loop_is_exactly_zero() {
    let d = denot(&loop_term(&Type::Nat), &Env::new(), &cfg()).unwrap();
    let dist = d.value.as_dist().unwrap();
    assert_eq!(dist.mass(), 0.0);
    assert_eq!(dist.pending(), 0.0);
    assert!(!d.unconverged);
    let nn = Type::arrow(Type::Nat, Type::Nat);
    assert_eq!(pz(&app(loop_term(&nn), num(0))), 0.0);
}

#[test]
fn small_programs() {
    assert_eq!(pz(&num(1)), 0.0);
    assert_eq!(pz(&num(0)), 1.0);
    assert_eq!(pz(&dice_ratio(1, 2)), 0.5);
    assert_eq!(pz(&pred(succ(num(0)))), 1.0);
    let t = parse("let x = dice(1/4) in ifz x then 1 else 0").unwrap();
    assert!((pz(&t) - 0.75).abs() < 1e-15);
}

#[test]
fn countdown_does_not_stall() {
    // the first iterates all observe zero mass
    let t = parse("(fix (\\f:nat->nat. \\x:nat. ifz x then 0 else f (pred x))) 20").unwrap();
    let p = prob_zero(&t, &cfg()).unwrap();
    assert_eq!(p.value, 1.0);
    assert!(!p.unconverged);
}

#[test]
fn ground_fixpoint() {
    // x = 1/2 x + 1/2 e0 converges to e0
    let t = parse("fix (\\x:nat. ifz dice(1/2) then 0 else x)").unwrap();
    assert!((pz(&t) - 1.0).abs() < 1e-9);
}

#[test]
fn example_convergence_probabilities() {
    for (a, b, want, slack) in [
        (0, 1, 1.0, 1e-3),
        (1, 4, 1.0, 1e-3),
        (3, 4, 1.0 / 3.0, 1e-3),
        (19, 20, 1.0 / 19.0, 1e-3),
        (1, 2, 1.0, 1e-2),
    ] {
        let got = pz(&app(make_mq(q(a, b)), num(0)));
        assert!((got - want).abs() < slack, "q={a}/{b}: {got}");
    }
}

#[test]
fn expected_counts() {
    for (a, b, want, slack) in [(1, 4, 3.0, 1e-3), (3, 4, 3.0, 1e-3), (0, 1, 2.0, 1e-9)] {
        let e = expected_count(&mq_marked(a, b), &"l".into(), &cfg()).unwrap();
        let c = e.conditional.unwrap().value().unwrap();
        assert!((c - want).abs() < slack, "q={a}/{b}: {c}");
    }
    let e = expected_count(&mq_marked(1, 2), &"l".into(), &cfg()).unwrap();
    assert!(e.raw.is_diverges());
    assert!(e.conditional.unwrap().is_diverges());
}

#[test]
fn expected_count_without_convergence() {
    let t = app(
        lam("x", Type::Nat, loop_term(&Type::Nat)),
        mark(num(0), "l"),
    );
    let e = expected_count(&t, &"l".into(), &cfg()).unwrap();
    assert_eq!(e.p_conv, 0.0);
    assert!(e.conditional.is_none());
}

#[test]
fn finite_differences() {
    let tight = SemConfig {
        tol: 1e-13,
        ..cfg()
    };
    let l: Label = "l".into();
    let c = finite_difference_check(&num(0), &l, 1e-2, &tight).unwrap();
    assert_eq!(c.central, 0.0);
    assert_eq!(c.dual, 0.0);
    let c = finite_difference_check(&mark(num(0), "l"), &l, 1e-2, &tight).unwrap();
    assert!((c.central - 1.0).abs() < 1e-12 && (c.dual - 1.0).abs() < 1e-12);
    for (a, b) in [(0, 1), (1, 4), (3, 4)] {
        let t = mq_marked(a, b);
        let e2 = finite_difference_check(&t, &l, 1e-2, &tight).unwrap();
        let e3 = finite_difference_check(&t, &l, 1e-3, &tight).unwrap();
        assert!(
            e3.abs_error() < 1e-7 || e2.abs_error() / e3.abs_error() > 10f64.powf(1.5),
            "q={a}/{b}: {e2:?} {e3:?}"
        );
    }
}

#[test]
fn pred_overflow_is_an_error() {
    let small = SemConfig { nmax: 2, ..cfg() };
    let t = pred(num(5));
    assert!(matches!(
        prob_zero(&t, &small),
        Err(SemError::Precision { .. })
    ));
    assert_eq!(prob_zero(&succ(num(5)), &small).unwrap().value, 0.0);
}

#[test]
fn labels_and_types_are_rejected() {
    assert!(matches!(
        prob_zero(&mark(num(0), "l"), &cfg()),
        Err(SemError::Labelled(_))
    ));
    assert!(matches!(
        prob_zero(&lam("x", Type::Nat, var("x")), &cfg()),
        Err(SemError::NotGround(_))
    ));
    assert!(matches!(
        prob_zero(&var("x"), &cfg()),
        Err(SemError::Type(_))
    ));
}

#[test]
fn higher_order_arguments() {
    // (\g. g (g 0)) applied to a coin-guarded successor
    let t = parse("(\\g:nat->nat. g (g 0)) (\\x:nat. ifz dice(1/2) then x else succ x)").unwrap();
    assert!((pz(&t) - 0.25).abs() < 1e-15);
}

#[test]
fn spy_lemma_small() {
    // value of spy at r e0 equals prob_zero of the stripped lcof translation
    let t = mq_marked(1, 3);
    let r = q(4, 5);
    let lc = crate::translate::lcof(
        &t,
        &crate::syntax::TypingContext::new(),
        &crate::translate::RateAssignment::uniform(["l".into()], r),
    )
    .unwrap();
    let lhs = pz(&strip(&lc));
    let point = [(Label::new("l"), Dual::constant(0.8))].into();
    let rhs = spy_denot(&t, &point, &cfg()).unwrap().dist.coord(0).value;
    assert!((lhs - rhs).abs() < 1e-9, "{lhs} vs {rhs}");
}

#[test]
fn function_typed_result() {
    let d = denot(&make_mq(q(1, 2)), &Env::new(), &cfg()).unwrap();
    assert!(!d.value.is_ground());
}

#[test]
fn long_kleene_chains_fit_small_stacks() {
    // dice(0) is never 0, so the loop below exhausts the iteration budget
    // and leaves a long chain of levels behind.
    let t = parse("fix (\\f:nat -> nat. \\x:nat. ifz x then 0 else f x) dice(0)").unwrap();
    let p = std::thread::Builder::new()
        .stack_size(256 * 1024)
        .spawn(move || prob_zero(&t, &SemConfig::default()).unwrap())
        .unwrap()
        .join()
        .unwrap();
    assert_eq!(p.value, 0.0);
}

#[test]
fn nested_fix_is_not_recomputed_per_level() {
    // The inner loop converges only like 1/k, so it always runs to the cap.
    let inner = "fix (\\g:nat. ifz dice(1/3) then n else ifz g then g else 0)";
    let alone = parse(&format!("(\\n:nat. {inner}) 2")).unwrap();
    let nested = parse(&format!(
        "fix (\\f:nat -> nat. \\n:nat. ifz n then 1 else let y = f (pred n) in {inner}) 2"
    ))
    .unwrap();
    let start = std::time::Instant::now();
    let a = prob_zero(&alone, &cfg()).unwrap();
    let b = prob_zero(&nested, &cfg()).unwrap();
    assert!(a.unconverged && b.unconverged);
    assert!((a.value - 0.5).abs() < 1e-3 && (b.value - 0.5).abs() < 1e-3);
    assert!(start.elapsed().as_secs() < 5);
}

#[test]
fn fix_of_a_constant_is_exact() {
    // The recursion variable is unused, so no iteration is needed and no
    // residue of the inner loop keeps the outer one running to the cap.
    let t = parse(
        "fix (\\f:nat -> nat. \\n:nat. let x = fix (\\g:nat. ifz dice(1/2) then 0 else succ g) in \
         fix (\\h:nat. ifz dice(1/2) then x else succ h)) 1",
    )
    .unwrap();
    let d = denot(&t, &Env::new(), &cfg()).unwrap();
    assert!(!d.unconverged);
    assert!((d.value.as_dist().unwrap().mass() - 1.0).abs() < 1e-6);
}
