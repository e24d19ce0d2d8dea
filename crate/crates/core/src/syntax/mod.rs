//! Abstract syntax of probabilistic PCF with labels, its typing judgment,
//! closed substitution, and a handful of program builders.

mod parse;
mod print;

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::{Serialize, Serializer};
use thiserror::Error;

pub use parse::{parse, parse_type, SyntaxError};

/// Exact coin bias. Always in `[0, 1]`.
pub type Prob = BigRational;

macro_rules! interned_name {
    ($(#[$m:meta])* $name:ident) => {
        $(#[$m])*
        #[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $name(Arc<str>);

        impl $name {
            pub fn new(s: impl AsRef<str>) -> Self {
                $name(Arc::from(s.as_ref()))
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{:?}", &*self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                $name::new(s)
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(&self.0)
            }
        }
    };
}

interned_name!(
    /// A variable name.
    Name
);
interned_name!(
    /// A label attached to a subterm by `mark[l] M`.
    Label
);

/// Simple types: `nat` and arrows.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub enum Type {
    Nat,
    Arrow(Arc<Type>, Arc<Type>),
}

impl Type {
    pub fn arrow(dom: Type, cod: Type) -> Type {
        Type::Arrow(Arc::new(dom), Arc::new(cod))
    }

    /// Number of arguments needed to reach `nat`.
    pub fn arity(&self) -> usize {
        match self {
            Type::Nat => 0,
            Type::Arrow(_, cod) => 1 + cod.arity(),
        }
    }

    pub fn is_ground(&self) -> bool {
        matches!(self, Type::Nat)
    }
}

pub type TermRef = Arc<Term>;

/// Terms of the language. Children are shared, so cloning a term is cheap
/// and substitution only rebuilds the spine that actually changes.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub enum Term {
    Num(BigUint),
    Succ(TermRef),
    Pred(TermRef),
    Var(Name),
    Dice(Prob),
    Let {
        var: Name,
        bound: TermRef,
        body: TermRef,
    },
    /// `ifz M then N else P`: `N` when `M` is zero, `P` otherwise.
    Ifz {
        cond: TermRef,
        zero: TermRef,
        succ: TermRef,
    },
    App(TermRef, TermRef),
    Abs {
        var: Name,
        ty: Type,
        body: TermRef,
    },
    Fix(TermRef),
    Mark(TermRef, Label),
}

/// Smart constructors returning shared terms.
pub mod build {
    use super::*;

    pub fn num(n: u64) -> TermRef {
        Arc::new(Term::Num(BigUint::from(n)))
    }

    pub fn big_num(n: BigUint) -> TermRef {
        Arc::new(Term::Num(n))
    }

    pub fn succ(t: TermRef) -> TermRef {
        Arc::new(Term::Succ(t))
    }

    pub fn pred(t: TermRef) -> TermRef {
        Arc::new(Term::Pred(t))
    }

    pub fn var(x: impl Into<Name>) -> TermRef {
        Arc::new(Term::Var(x.into()))
    }

    /// Panics if `r` is outside `[0, 1]`.
    pub fn dice(r: Prob) -> TermRef {
        assert!(is_probability(&r), "dice bias {r} outside [0,1]");
        Arc::new(Term::Dice(r))
    }

    /// `dice(num/den)`.
    pub fn dice_ratio(num: i64, den: i64) -> TermRef {
        dice(BigRational::new(num.into(), den.into()))
    }

    pub fn let_in(x: impl Into<Name>, bound: TermRef, body: TermRef) -> TermRef {
        Arc::new(Term::Let {
            var: x.into(),
            bound,
            body,
        })
    }

    pub fn ifz(cond: TermRef, zero: TermRef, succ: TermRef) -> TermRef {
        Arc::new(Term::Ifz { cond, zero, succ })
    }

    pub fn app(f: TermRef, a: TermRef) -> TermRef {
        Arc::new(Term::App(f, a))
    }

    pub fn lam(x: impl Into<Name>, ty: Type, body: TermRef) -> TermRef {
        Arc::new(Term::Abs {
            var: x.into(),
            ty,
            body,
        })
    }

    pub fn fix(t: TermRef) -> TermRef {
        Arc::new(Term::Fix(t))
    }

    pub fn mark(t: TermRef, l: impl Into<Label>) -> TermRef {
        Arc::new(Term::Mark(t, l.into()))
    }
}

pub(crate) fn is_probability(r: &Prob) -> bool {
    !(r < &Prob::zero() || r > &Prob::one())
}

/// The divergent term `fix (\x:σ. x)`.
pub fn loop_term(ty: &Type) -> TermRef {
    build::fix(build::lam("x", ty.clone(), build::var("x")))
}

/// The recursive program `M_q : nat -> nat` whose convergence probability on
/// `0` is `(1 - |2q - 1|) / 2q` and which uses its argument twice on every
/// terminating leaf.
pub fn make_mq(q: Prob) -> TermRef {
    use build::*;
    let nat = Type::Nat;
    let omega = loop_term(&nat);
    let fx = || app(var("f"), var("x"));
    let twice = |t: &dyn Fn() -> TermRef| ifz(t(), ifz(t(), num(0), omega.clone()), omega.clone());
    fix(lam(
        "f",
        Type::arrow(Type::Nat, Type::Nat),
        lam(
            "x",
            Type::Nat,
            ifz(dice(q), twice(&fx), twice(&|| var("x"))),
        ),
    ))
}

impl Term {
    pub fn is_zero_numeral(&self) -> bool {
        matches!(self, Term::Num(n) if n.is_zero())
    }

    /// Labels occurring anywhere in the term.
    pub fn labels(&self) -> BTreeSet<Label> {
        let mut out = BTreeSet::new();
        self.collect_labels(&mut out);
        out
    }

    fn collect_labels(&self, out: &mut BTreeSet<Label>) {
        if let Term::Mark(_, l) = self {
            out.insert(l.clone());
        }
        self.for_each_child(|c| c.collect_labels(out));
    }

    pub fn free_vars(&self) -> BTreeSet<Name> {
        let mut out = BTreeSet::new();
        self.collect_free(&mut Vec::new(), &mut out);
        out
    }

    fn collect_free(&self, bound: &mut Vec<Name>, out: &mut BTreeSet<Name>) {
        match self {
            Term::Var(x) => {
                if !bound.contains(x) {
                    out.insert(x.clone());
                }
            }
            Term::Let {
                var,
                bound: m,
                body,
            } => {
                m.collect_free(bound, out);
                bound.push(var.clone());
                body.collect_free(bound, out);
                bound.pop();
            }
            Term::Abs { var, body, .. } => {
                bound.push(var.clone());
                body.collect_free(bound, out);
                bound.pop();
            }
            _ => self.for_each_child(|c| c.collect_free(bound, out)),
        }
    }

    /// Every variable name occurring in the term, bound or free.
    pub fn all_vars(&self) -> BTreeSet<Name> {
        let mut out = BTreeSet::new();
        self.collect_all_vars(&mut out);
        out
    }

    fn collect_all_vars(&self, out: &mut BTreeSet<Name>) {
        match self {
            Term::Var(x) => {
                out.insert(x.clone());
            }
            Term::Let { var, .. } | Term::Abs { var, .. } => {
                out.insert(var.clone());
            }
            _ => {}
        }
        self.for_each_child(|c| c.collect_all_vars(out));
    }

    pub fn is_closed(&self) -> bool {
        self.free_vars().is_empty()
    }

    pub fn size(&self) -> usize {
        let mut n = 1;
        self.for_each_child(|c| n += c.size());
        n
    }

    fn for_each_child(&self, mut f: impl FnMut(&Term)) {
        match self {
            Term::Num(_) | Term::Var(_) | Term::Dice(_) => {}
            Term::Succ(t) | Term::Pred(t) | Term::Fix(t) | Term::Mark(t, _) => f(t),
            Term::Abs { body, .. } => f(body),
            Term::Let { bound, body, .. } => {
                f(bound);
                f(body);
            }
            Term::App(a, b) => {
                f(a);
                f(b);
            }
            Term::Ifz { cond, zero, succ } => {
                f(cond);
                f(zero);
                f(succ);
            }
        }
    }
}

/// Substitutes the closed term `s` for the free occurrences of `x` in `t`.
///
/// Since `s` is closed no capture can happen. Subterms without free
/// occurrences of `x` are shared with the input.
pub fn subst(t: &TermRef, x: &Name, s: &TermRef) -> TermRef {
    subst_opt(t, x, s).unwrap_or_else(|| t.clone())
}

fn subst_opt(t: &TermRef, x: &Name, s: &TermRef) -> Option<TermRef> {
    let one = |c: &TermRef| subst_opt(c, x, s);
    let keep = |o: Option<TermRef>, c: &TermRef| o.unwrap_or_else(|| c.clone());
    match &**t {
        Term::Num(_) | Term::Dice(_) => None,
        Term::Var(y) => (y == x).then(|| s.clone()),
        Term::Succ(a) => one(a).map(|a| Arc::new(Term::Succ(a))),
        Term::Pred(a) => one(a).map(|a| Arc::new(Term::Pred(a))),
        Term::Fix(a) => one(a).map(|a| Arc::new(Term::Fix(a))),
        Term::Mark(a, l) => one(a).map(|a| Arc::new(Term::Mark(a, l.clone()))),
        Term::Abs { var, ty, body } => {
            if var == x {
                return None;
            }
            one(body).map(|body| {
                Arc::new(Term::Abs {
                    var: var.clone(),
                    ty: ty.clone(),
                    body,
                })
            })
        }
        Term::Let { var, bound, body } => {
            let nb = one(bound);
            let nbody = if var == x { None } else { one(body) };
            if nb.is_none() && nbody.is_none() {
                return None;
            }
            Some(Arc::new(Term::Let {
                var: var.clone(),
                bound: keep(nb, bound),
                body: keep(nbody, body),
            }))
        }
        Term::App(a, b) => {
            let (na, nb) = (one(a), one(b));
            if na.is_none() && nb.is_none() {
                return None;
            }
            Some(Arc::new(Term::App(keep(na, a), keep(nb, b))))
        }
        Term::Ifz { cond, zero, succ } => {
            let (nc, nz, ns) = (one(cond), one(zero), one(succ));
            if nc.is_none() && nz.is_none() && ns.is_none() {
                return None;
            }
            Some(Arc::new(Term::Ifz {
                cond: keep(nc, cond),
                zero: keep(nz, zero),
                succ: keep(ns, succ),
            }))
        }
    }
}

/// Ordered variable typing context without duplicate names.
#[derive(Clone, Default, Debug, PartialEq, Eq)]
pub struct TypingContext {
    entries: Vec<(Name, Type)>,
}

impl TypingContext {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a context, rejecting duplicate names.
    pub fn from_entries(
        entries: impl IntoIterator<Item = (Name, Type)>,
    ) -> Result<Self, TypeError> {
        let mut ctx = TypingContext::new();
        for (x, ty) in entries {
            if ctx.lookup(&x).is_some() {
                return Err(TypeError::DuplicateBinding(x));
            }
            ctx.entries.push((x, ty));
        }
        Ok(ctx)
    }

    pub fn lookup(&self, x: &Name) -> Option<&Type> {
        self.entries
            .iter()
            .rev()
            .find(|(y, _)| y == x)
            .map(|(_, t)| t)
    }

    /// Returns the context extended with `x : ty`, replacing an earlier
    /// binding of `x`.
    pub fn extend(&self, x: Name, ty: Type) -> Self {
        let mut entries: Vec<_> = self
            .entries
            .iter()
            .filter(|(y, _)| *y != x)
            .cloned()
            .collect();
        entries.push((x, ty));
        TypingContext { entries }
    }

    pub fn entries(&self) -> &[(Name, Type)] {
        &self.entries
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TypeError {
    #[error("unbound variable `{0}`")]
    Unbound(Name),
    #[error("type mismatch in `{term}`: expected {expected}, found {found}")]
    Mismatch {
        term: String,
        expected: Type,
        found: Type,
    },
    #[error("`{term}` has type {found} and cannot be applied")]
    NotAFunction { term: String, found: Type },
    #[error("duplicate binding for `{0}` in typing context")]
    DuplicateBinding(Name),
}

fn mismatch(term: &Term, expected: &Type, found: Type) -> TypeError {
    TypeError::Mismatch {
        term: term.to_string(),
        expected: expected.clone(),
        found,
    }
}

fn expect(term: &Term, expected: &Type, found: Type) -> Result<(), TypeError> {
    if &found == expected {
        Ok(())
    } else {
        Err(mismatch(term, expected, found))
    }
}

/// Computes the unique type of `t` in `ctx`. Marks are transparent.
pub fn typecheck(ctx: &TypingContext, t: &Term) -> Result<Type, TypeError> {
    let nat = Type::Nat;
    match t {
        Term::Num(_) | Term::Dice(_) => Ok(Type::Nat),
        Term::Succ(a) | Term::Pred(a) => {
            expect(a, &nat, typecheck(ctx, a)?)?;
            Ok(Type::Nat)
        }
        Term::Var(x) => ctx
            .lookup(x)
            .cloned()
            .ok_or_else(|| TypeError::Unbound(x.clone())),
        Term::Let { var, bound, body } => {
            expect(bound, &nat, typecheck(ctx, bound)?)?;
            typecheck(&ctx.extend(var.clone(), Type::Nat), body)
        }
        Term::Ifz { cond, zero, succ } => {
            expect(cond, &nat, typecheck(ctx, cond)?)?;
            let ty = typecheck(ctx, zero)?;
            expect(succ, &ty, typecheck(ctx, succ)?)?;
            Ok(ty)
        }
        Term::App(f, a) => match typecheck(ctx, f)? {
            Type::Arrow(dom, cod) => {
                expect(a, &dom, typecheck(ctx, a)?)?;
                Ok((*cod).clone())
            }
            found => Err(TypeError::NotAFunction {
                term: f.to_string(),
                found,
            }),
        },
        Term::Abs { var, ty, body } => {
            let cod = typecheck(&ctx.extend(var.clone(), ty.clone()), body)?;
            Ok(Type::arrow(ty.clone(), cod))
        }
        Term::Fix(m) => match typecheck(ctx, m)? {
            Type::Arrow(dom, cod) if dom == cod => Ok((*dom).clone()),
            found => {
                let Type::Arrow(ref dom, _) = found else {
                    return Err(TypeError::NotAFunction {
                        term: m.to_string(),
                        found,
                    });
                };
                let want = Type::arrow((**dom).clone(), (**dom).clone());
                Err(mismatch(m, &want, found))
            }
        },
        Term::Mark(m, _) => typecheck(ctx, m),
    }
}

/// Typechecks a closed term.
pub fn typecheck_closed(t: &Term) -> Result<Type, TypeError> {
    typecheck(&TypingContext::new(), t)
}

#[cfg(test)]
mod tests {
    use super::build::*;
    use super::*;

    fn nat_nat() -> Type {
        Type::arrow(Type::Nat, Type::Nat)
    }

    #[test]
    fn numeral_is_nat() {
        assert_eq!(typecheck_closed(&num(5)), Ok(Type::Nat));
    }

    #[test]
    fn fix_of_identity() {
        let t = fix(lam("f", nat_nat(), var("f")));
        assert_eq!(typecheck_closed(&t), Ok(nat_nat()));
    }

    #[test]
    fn mq_has_type_nat_to_nat() {
        for (a, b) in [(0, 1), (1, 4), (1, 2), (3, 4), (1, 1)] {
            let q = BigRational::new(a.into(), b.into());
            assert_eq!(typecheck_closed(&make_mq(q)), Ok(nat_nat()));
        }
    }

    #[test]
    fn loop_term_shape() {
        assert_eq!(loop_term(&Type::Nat), fix(lam("x", Type::Nat, var("x"))));
        assert_eq!(typecheck_closed(&loop_term(&nat_nat())), Ok(nat_nat()));
    }

    #[test]
    fn unbound_and_mismatch() {
        assert_eq!(
            typecheck_closed(&var("y")),
            Err(TypeError::Unbound(Name::new("y")))
        );
        let bad = ifz(num(0), num(1), lam("x", Type::Nat, var("x")));
        assert!(matches!(
            typecheck_closed(&bad),
            Err(TypeError::Mismatch { .. })
        ));
        let bad_app = app(num(1), num(2));
        assert!(matches!(
            typecheck_closed(&bad_app),
            Err(TypeError::NotAFunction { .. })
        ));
        let bad_let = let_in("x", lam("y", Type::Nat, var("y")), var("x"));
        assert!(typecheck_closed(&bad_let).is_err());
        let bad_fix = fix(lam("x", Type::Nat, lam("y", Type::Nat, var("y"))));
        assert!(typecheck_closed(&bad_fix).is_err());
    }

    #[test]
    fn mark_is_transparent() {
        let t = mark(lam("x", Type::Nat, var("x")), "l");
        assert_eq!(typecheck_closed(&t), Ok(nat_nat()));
    }

    #[test]
    fn context_rejects_duplicates() {
        let r =
            TypingContext::from_entries([(Name::new("x"), Type::Nat), (Name::new("x"), Type::Nat)]);
        assert!(r.is_err());
    }

    #[test]
    fn subst_examples() {
        let zero = num(0);
        assert_eq!(subst(&var("x"), &"x".into(), &zero), zero);
        let shadow = lam("x", Type::Nat, var("x"));
        assert_eq!(subst(&shadow, &"x".into(), &num(1)), shadow);
        let t = ifz(var("z"), var("z"), num(1));
        assert_eq!(subst(&t, &"z".into(), &zero), ifz(num(0), num(0), num(1)));
    }

    #[test]
    fn subst_shares_untouched_subterms() {
        let body = succ(num(3));
        let t = app(lam("y", Type::Nat, body.clone()), var("x"));
        let out = subst(&t, &"x".into(), &num(0));
        let Term::App(f, _) = &*out else { panic!() };
        assert!(Arc::ptr_eq(
            f,
            &match &*t {
                Term::App(f, _) => f.clone(),
                _ => unreachable!(),
            }
        ));
        assert!(Arc::ptr_eq(&subst(&body, &"x".into(), &num(0)), &body));
    }

    #[test]
    fn labels_of_terms() {
        let t = mark(app(mark(var("f"), "a"), mark(num(0), "b")), "a");
        let ls: Vec<_> = t.labels().into_iter().map(|l| l.to_string()).collect();
        assert_eq!(ls, ["a", "b"]);
        assert!(num(0).labels().is_empty());
    }

    #[test]
    fn free_variables() {
        let t = let_in("x", var("y"), app(var("x"), var("z")));
        let fv: Vec<_> = t.free_vars().into_iter().map(|x| x.to_string()).collect();
        assert_eq!(fv, ["y", "z"]);
        assert!(make_mq(BigRational::new(1.into(), 2.into())).is_closed());
    }
}
