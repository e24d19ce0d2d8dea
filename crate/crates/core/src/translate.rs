//! Label-erasing and label-reifying program translations.
//!
//! * [`strip`] removes every `mark`.
//! * [`lcof`] turns `mark[l] M` into `ifz dice(r_l) then M else Ω`, so that a
//!   run surviving all marks has its weight multiplied by `r^μ`.
//! * [`spy`] turns `mark[l] M` into `ifz x_l then M else Ω` for a fresh
//!   `nat` variable `x_l`; the denotation then becomes a power series in the
//!   `x_l` whose coefficients are the label-count probabilities.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use thiserror::Error;

use crate::syntax::{
    build, loop_term, typecheck, Label, Name, Prob, Term, TermRef, Type, TypeError, TypingContext,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TranslateError {
    #[error("no rate given for label `{0}`")]
    MissingRate(Label),
    #[error("no spy variable given for label `{0}`")]
    MissingVar(Label),
    #[error("spy variable `{0}` clashes with a variable of the term")]
    VarClash(Name),
    #[error("spy variable `{0}` is used for two labels")]
    DuplicateVar(Name),
    #[error(transparent)]
    Type(#[from] TypeError),
}

/// Per-label coin bias used by [`lcof`].
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RateAssignment(pub BTreeMap<Label, Prob>);

impl RateAssignment {
    /// Same rate for every given label.
    pub fn uniform(labels: impl IntoIterator<Item = Label>, r: Prob) -> Self {
        RateAssignment(labels.into_iter().map(|l| (l, r.clone())).collect())
    }

    pub fn get(&self, l: &Label) -> Option<&Prob> {
        self.0.get(l)
    }
}

/// Per-label fresh variable used by [`spy`].
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SpyVarMap(pub BTreeMap<Label, Name>);

impl SpyVarMap {
    /// Picks a variable `spy_<label>` (primed as needed) for every label of
    /// `t`, avoiding all variables of `t`.
    pub fn fresh_for(t: &Term) -> Self {
        let mut taken: BTreeSet<Name> = t.all_vars();
        let mut map = BTreeMap::new();
        for l in t.labels() {
            let mut name = format!("spy_{l}");
            while taken.contains(&Name::new(&name)) {
                name.push('\'');
            }
            let name = Name::new(name);
            taken.insert(name.clone());
            map.insert(l, name);
        }
        SpyVarMap(map)
    }

    pub fn get(&self, l: &Label) -> Option<&Name> {
        self.0.get(l)
    }

    /// `ctx` extended with `x_l : nat` for every spy variable.
    pub fn extend_context(&self, ctx: &TypingContext) -> TypingContext {
        self.0
            .values()
            .fold(ctx.clone(), |c, x| c.extend(x.clone(), Type::Nat))
    }
}

/// Removes every label.
pub fn strip(t: &TermRef) -> TermRef {
    match &**t {
        Term::Num(_) | Term::Var(_) | Term::Dice(_) => t.clone(),
        Term::Mark(m, _) => strip(m),
        _ => map_children(t, &mut |c| Ok::<_, TranslateError>(strip(c)))
            .expect("strip is infallible"),
    }
}

/// Rebuilds `t` with each immediate child replaced by `f(child)`.
fn map_children<E>(
    t: &TermRef,
    f: &mut impl FnMut(&TermRef) -> Result<TermRef, E>,
) -> Result<TermRef, E> {
    Ok(Arc::new(match &**t {
        Term::Num(_) | Term::Var(_) | Term::Dice(_) => return Ok(t.clone()),
        Term::Succ(a) => Term::Succ(f(a)?),
        Term::Pred(a) => Term::Pred(f(a)?),
        Term::Fix(a) => Term::Fix(f(a)?),
        Term::Mark(a, l) => Term::Mark(f(a)?, l.clone()),
        Term::App(a, b) => Term::App(f(a)?, f(b)?),
        Term::Abs { var, ty, body } => Term::Abs {
            var: var.clone(),
            ty: ty.clone(),
            body: f(body)?,
        },
        Term::Let { var, bound, body } => Term::Let {
            var: var.clone(),
            bound: f(bound)?,
            body: f(body)?,
        },
        Term::Ifz { cond, zero, succ } => Term::Ifz {
            cond: f(cond)?,
            zero: f(zero)?,
            succ: f(succ)?,
        },
    }))
}

/// Type-directed rewrite of every `mark[l] M` into `guard(l, M', σ)` where
/// `M'` is the rewritten body and `σ` the type of `M` in its context.
fn rewrite_marks(
    t: &TermRef,
    ctx: &TypingContext,
    guard: &dyn Fn(&Label, TermRef, &Type) -> Result<TermRef, TranslateError>,
) -> Result<TermRef, TranslateError> {
    match &**t {
        Term::Mark(m, l) => {
            let ty = typecheck(ctx, m)?;
            let inner = rewrite_marks(m, ctx, guard)?;
            guard(l, inner, &ty)
        }
        Term::Abs { var, ty, body } => {
            let inner = ctx.extend(var.clone(), ty.clone());
            Ok(Arc::new(Term::Abs {
                var: var.clone(),
                ty: ty.clone(),
                body: rewrite_marks(body, &inner, guard)?,
            }))
        }
        Term::Let { var, bound, body } => {
            let inner = ctx.extend(var.clone(), Type::Nat);
            Ok(Arc::new(Term::Let {
                var: var.clone(),
                bound: rewrite_marks(bound, ctx, guard)?,
                body: rewrite_marks(body, &inner, guard)?,
            }))
        }
        _ => map_children(t, &mut |c| rewrite_marks(c, ctx, guard)),
    }
}

/// Replaces each `mark[l] M` (with `M : σ`) by
/// `ifz dice(r_l) then M else fix (\x:σ. x)`.
pub fn lcof(
    t: &TermRef,
    ctx: &TypingContext,
    rates: &RateAssignment,
) -> Result<TermRef, TranslateError> {
    rewrite_marks(t, ctx, &|l, inner, ty| {
        let r = rates
            .get(l)
            .ok_or_else(|| TranslateError::MissingRate(l.clone()))?;
        Ok(build::ifz(build::dice(r.clone()), inner, loop_term(ty)))
    })
}

/// Replaces each `mark[l] M` (with `M : σ`) by
/// `ifz x_l then M else fix (\x:σ. x)`.
///
/// The result is typed in `vars.extend_context(ctx)`.
pub fn spy(t: &TermRef, ctx: &TypingContext, vars: &SpyVarMap) -> Result<TermRef, TranslateError> {
    let used = t.all_vars();
    let mut seen = BTreeSet::new();
    for x in vars.0.values() {
        if used.contains(x) || ctx.lookup(x).is_some() {
            return Err(TranslateError::VarClash(x.clone()));
        }
        if !seen.insert(x.clone()) {
            return Err(TranslateError::DuplicateVar(x.clone()));
        }
    }
    rewrite_marks(t, ctx, &|l, inner, ty| {
        let x = vars
            .get(l)
            .ok_or_else(|| TranslateError::MissingVar(l.clone()))?;
        Ok(build::ifz(build::var(x.clone()), inner, loop_term(ty)))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::build::*;
    use crate::syntax::{make_mq, typecheck_closed};
    use num_rational::BigRational;

    fn ratio(a: i64, b: i64) -> BigRational {
        BigRational::new(a.into(), b.into())
    }

    fn rates(l: &str, r: BigRational) -> RateAssignment {
        RateAssignment([(Label::new(l), r)].into_iter().collect())
    }

    #[test]
    fn strip_examples() {
        assert_eq!(strip(&mark(num(0), "l")), num(0));
        let plain = app(make_mq(ratio(1, 2)), num(0));
        assert_eq!(strip(&plain), plain);
        let t = app(make_mq(ratio(1, 2)), mark(num(0), "l"));
        assert_eq!(strip(&t), plain);
        assert_eq!(strip(&strip(&t)), strip(&t));
        assert!(strip(&t).labels().is_empty());
    }

    #[test]
    fn lcof_rate_one_example() {
        let out = lcof(
            &mark(num(0), "l"),
            &TypingContext::new(),
            &rates("l", ratio(1, 1)),
        )
        .unwrap();
        assert_eq!(out, ifz(dice_ratio(1, 1), num(0), loop_term(&Type::Nat)));
    }

    #[test]
    fn lcof_without_labels_is_identity() {
        let t = app(make_mq(ratio(1, 3)), num(0));
        assert_eq!(
            lcof(&t, &TypingContext::new(), &RateAssignment::default()).unwrap(),
            t
        );
    }

    #[test]
    fn lcof_missing_rate() {
        let r = lcof(
            &mark(num(0), "l"),
            &TypingContext::new(),
            &RateAssignment::default(),
        );
        assert_eq!(r, Err(TranslateError::MissingRate("l".into())));
    }

    #[test]
    fn lcof_uses_type_in_context() {
        // the marked subterm is the function variable f : nat -> nat
        let nn = Type::arrow(Type::Nat, Type::Nat);
        let t = lam("f", nn.clone(), app(mark(var("f"), "l"), num(0)));
        let out = lcof(&t, &TypingContext::new(), &rates("l", ratio(1, 2))).unwrap();
        let expect = lam(
            "f",
            nn.clone(),
            app(ifz(dice_ratio(1, 2), var("f"), loop_term(&nn)), num(0)),
        );
        assert_eq!(out, expect);
        assert_eq!(typecheck_closed(&out), typecheck_closed(&t));
    }

    #[test]
    fn spy_example_and_identity() {
        let vars = SpyVarMap([(Label::new("l"), Name::new("x"))].into_iter().collect());
        let out = spy(&mark(num(0), "l"), &TypingContext::new(), &vars).unwrap();
        assert_eq!(out, ifz(var("x"), num(0), loop_term(&Type::Nat)));
        let plain = app(make_mq(ratio(1, 3)), num(0));
        assert_eq!(
            spy(&plain, &TypingContext::new(), &SpyVarMap::default()).unwrap(),
            plain
        );
    }

    #[test]
    fn spy_rejects_clashes() {
        let t = app(lam("x", Type::Nat, mark(var("x"), "l")), num(0));
        let vars = SpyVarMap([(Label::new("l"), Name::new("x"))].into_iter().collect());
        assert_eq!(
            spy(&t, &TypingContext::new(), &vars),
            Err(TranslateError::VarClash("x".into()))
        );
        let fresh = SpyVarMap::fresh_for(&t);
        let out = spy(&t, &TypingContext::new(), &fresh).unwrap();
        assert_eq!(
            typecheck(&fresh.extend_context(&TypingContext::new()), &out),
            Ok(Type::Nat)
        );
    }

    #[test]
    fn fresh_names_avoid_term_variables() {
        let t = lam("spy_l", Type::Nat, mark(var("spy_l"), "l"));
        let fresh = SpyVarMap::fresh_for(&t);
        assert_eq!(fresh.get(&"l".into()).unwrap().as_str(), "spy_l'");
    }
}
