//! Environment-passing evaluator for the denotational semantics.
//!
//! Ground values are [`Dist`]s; functions are closures that are applied
//! lazily, which realizes the power-series semantics without ever building
//! a series. `fix` is computed by Kleene iteration from bottom. Every
//! ground value carries a `pending` bound on the mass still missing because
//! some bottom was hit, which gives a sound stopping rule.

use std::cell::{Cell, RefCell};
use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt;
use std::rc::Rc;
use std::sync::Arc;

use num_traits::{One, ToPrimitive};

use super::{Dist, Dual, SemConfig, SemError};
use crate::syntax::{typecheck, Name, Prob, Term, TermRef, Type, TypingContext};

const STACK_RED_ZONE: usize = 128 * 1024;
const STACK_GROWTH: usize = 8 * 1024 * 1024;
const MEMO_CAPACITY: usize = 16;
/// Enough for one `let` sweep over every numeral below the default `nmax`.
const FIX_CACHE_CAPACITY: usize = 128;

/// A denotation: a distribution at type `nat`, a closure at arrow types.
#[derive(Clone)]
pub enum SemValue {
    Ground(Rc<Dist>),
    Func(Rc<Closure>),
}

impl SemValue {
    pub fn ground(d: Dist) -> Self {
        SemValue::Ground(Rc::new(d))
    }

    pub fn as_dist(&self) -> Option<&Dist> {
        match self {
            SemValue::Ground(d) => Some(d),
            SemValue::Func(_) => None,
        }
    }

    pub fn is_ground(&self) -> bool {
        matches!(self, SemValue::Ground(_))
    }

    fn ptr_eq(&self, other: &SemValue) -> bool {
        match (self, other) {
            (SemValue::Ground(a), SemValue::Ground(b)) => Rc::ptr_eq(a, b),
            (SemValue::Func(a), SemValue::Func(b)) => Rc::ptr_eq(a, b),
            _ => false,
        }
    }

    /// Same argument for memoization purposes: equal contents for ground
    /// values, identity for closures.
    fn same_arg(&self, other: &SemValue) -> bool {
        match (self, other) {
            (SemValue::Ground(a), SemValue::Ground(b)) => Rc::ptr_eq(a, b) || a == b,
            (SemValue::Func(a), SemValue::Func(b)) => Rc::ptr_eq(a, b),
            _ => false,
        }
    }
}

impl fmt::Debug for SemValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SemValue::Ground(d) => d.fmt(f),
            SemValue::Func(c) => write!(f, "<function of arity {}>", c.arity),
        }
    }
}

/// An opaque function value.
pub struct Closure {
    kind: ClosureKind,
    arity: usize,
    memo: RefCell<VecDeque<(SemValue, SemValue)>>,
}

enum ClosureKind {
    Lambda {
        var: Name,
        ty: Type,
        body: TermRef,
        env: Env,
    },
    /// `Σ wᵢ fᵢ` plus up to `pending` unknown mass; with no parts this is
    /// bottom (`pending = 1`) or the exact zero function (`pending = 0`).
    Combo {
        parts: Vec<(Dual, SemValue)>,
        pending: f64,
    },
    Fix(Rc<FixState>),
    Partial {
        fix: Rc<FixState>,
        args: Vec<SemValue>,
    },
}

impl Closure {
    fn value(kind: ClosureKind, arity: usize) -> SemValue {
        debug_assert!(arity > 0);
        SemValue::Func(Rc::new(Closure {
            kind,
            arity,
            memo: RefCell::new(VecDeque::new()),
        }))
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    fn lookup(&self, arg: &SemValue) -> Option<SemValue> {
        self.memo
            .borrow()
            .iter()
            .find(|(a, _)| a.same_arg(arg))
            .map(|(_, v)| v.clone())
    }

    fn remember(&self, arg: SemValue, v: SemValue) {
        let mut memo = self.memo.borrow_mut();
        if memo.len() == MEMO_CAPACITY {
            memo.pop_front();
        }
        memo.push_back((arg, v));
    }
}

/// The approximants `F^k(⊥)` of a fixpoint at arrow type.
struct FixState {
    functional: SemValue,
    arity: usize,
    levels: RefCell<Vec<SemValue>>,
}

type Garbage = (ClosureKind, VecDeque<(SemValue, SemValue)>);

/// Values of one `fix` node, keyed by the values of its free variables.
type FixEntries = VecDeque<(Vec<SemValue>, SemValue)>;

thread_local! {
    static GARBAGE: RefCell<Vec<Garbage>> = const { RefCell::new(Vec::new()) };
    static DRAINING: Cell<bool> = const { Cell::new(false) };
}

// Closures reach each other through environments, memo tables and Kleene
// levels, in chains as long as the iteration count. Dropping them through a
// queue keeps the native stack flat.
impl Drop for Closure {
    fn drop(&mut self) {
        let kind = std::mem::replace(
            &mut self.kind,
            ClosureKind::Combo {
                parts: Vec::new(),
                pending: 0.0,
            },
        );
        let mut item = Some((kind, std::mem::take(self.memo.get_mut())));
        // During thread teardown the queue may be gone; drop in place then.
        if GARBAGE
            .try_with(|g| g.borrow_mut().push(item.take().expect("present")))
            .is_err()
        {
            return;
        }
        if DRAINING.with(|d| d.replace(true)) {
            return;
        }
        while let Some(next) = GARBAGE.with(|g| g.borrow_mut().pop()) {
            drop(next);
        }
        DRAINING.with(|d| d.set(false));
    }
}

/// Immutable variable environment with types, innermost binding first.
#[derive(Clone, Default)]
pub struct Env(Option<Rc<EnvNode>>);

struct EnvNode {
    name: Name,
    ty: Type,
    value: SemValue,
    next: Env,
}

impl Env {
    pub fn new() -> Self {
        Env(None)
    }

    pub fn bind(&self, name: Name, ty: Type, value: SemValue) -> Env {
        Env(Some(Rc::new(EnvNode {
            name,
            ty,
            value,
            next: self.clone(),
        })))
    }

    pub fn lookup(&self, x: &Name) -> Option<&SemValue> {
        let mut cur = self.0.as_deref();
        while let Some(node) = cur {
            if &node.name == x {
                return Some(&node.value);
            }
            cur = node.next.0.as_deref();
        }
        None
    }

    /// The typing context described by the bindings.
    pub fn context(&self) -> TypingContext {
        let mut nodes = Vec::new();
        let mut cur = self.0.as_deref();
        while let Some(node) = cur {
            nodes.push(node);
            cur = node.next.0.as_deref();
        }
        nodes.into_iter().rev().fold(TypingContext::new(), |c, n| {
            c.extend(n.name.clone(), n.ty.clone())
        })
    }
}

/// Linear combination under construction.
struct Accum {
    parts: Vec<(Dual, SemValue)>,
    pending: f64,
}

impl Accum {
    fn new(pending: f64) -> Self {
        Accum {
            parts: Vec::new(),
            pending,
        }
    }

    fn push(&mut self, w: Dual, v: SemValue) {
        if !w.is_zero() {
            self.parts.push((w, v));
        }
    }

    fn finish(mut self, arity: usize, nmax: usize) -> SemValue {
        if arity == 0 {
            let mut d = Dist::zero(nmax);
            for (w, v) in &self.parts {
                d.add_assign(&v.as_dist().expect("ground part").scale(w));
            }
            d.add_pending(self.pending);
            return SemValue::ground(d);
        }
        if self.pending == 0.0 && self.parts.len() == 1 && self.parts[0].0 == Dual::constant(1.0) {
            return self.parts.pop().expect("one part").1;
        }
        Closure::value(
            ClosureKind::Combo {
                parts: self.parts,
                pending: self.pending,
            },
            arity,
        )
    }
}

fn bottom(arity: usize, nmax: usize) -> SemValue {
    if arity == 0 {
        SemValue::ground(Dist::zero(nmax).with_pending(1.0))
    } else {
        Closure::value(
            ClosureKind::Combo {
                parts: Vec::new(),
                pending: 1.0,
            },
            arity,
        )
    }
}

/// Marks a value as exact: its missing mass is known to be zero.
fn settle(v: &SemValue) -> SemValue {
    match v {
        SemValue::Ground(d) => SemValue::ground((**d).clone().with_pending(0.0)),
        SemValue::Func(c) => match &c.kind {
            ClosureKind::Combo { parts, pending } if parts.is_empty() && *pending > 0.0 => {
                Closure::value(
                    ClosureKind::Combo {
                        parts: Vec::new(),
                        pending: 0.0,
                    },
                    c.arity,
                )
            }
            _ => v.clone(),
        },
    }
}

pub(crate) struct Evaluator {
    cfg: SemConfig,
    /// Type of each `fix`, `ifz`, `let` and abstraction node, `None` when a shared node
    /// is used at several types.
    types: HashMap<*const Term, Option<Type>>,
    /// Free variables of each `fix` node.
    fix_free: HashMap<*const Term, Vec<Name>>,
    /// `fix (\f. M)` nodes with `f` unused in `M`; their value is `M`'s.
    constant_fix: HashSet<*const Term>,
    /// A `fix` nested in another recursion is met again at every outer
    /// level, usually with the same free values; without this each outer
    /// step would redo the inner iteration.
    fix_cache: RefCell<HashMap<*const Term, FixEntries>>,
    unconverged: Cell<bool>,
    _root: TermRef,
}

impl Evaluator {
    /// Typechecks `root` in the context of `env` and prepares evaluation.
    pub(crate) fn new(root: &TermRef, env: &Env, cfg: SemConfig) -> Result<Self, SemError> {
        let ctx = env.context();
        typecheck(&ctx, root)?;
        let mut ev = Evaluator {
            cfg,
            types: HashMap::new(),
            fix_free: HashMap::new(),
            constant_fix: HashSet::new(),
            fix_cache: RefCell::new(HashMap::new()),
            unconverged: Cell::new(false),
            _root: root.clone(),
        };
        ev.annotate(&ctx, root);
        Ok(ev)
    }

    pub(crate) fn unconverged(&self) -> bool {
        self.unconverged.get()
    }

    /// Records node types; `t` is known to be well typed.
    fn annotate(&mut self, ctx: &TypingContext, t: &TermRef) -> Type {
        let ty = match &**t {
            Term::Num(_) | Term::Dice(_) => Type::Nat,
            Term::Succ(a) | Term::Pred(a) => {
                self.annotate(ctx, a);
                Type::Nat
            }
            Term::Var(x) => ctx.lookup(x).cloned().expect("well typed"),
            Term::Let { var, bound, body } => {
                self.annotate(ctx, bound);
                self.annotate(&ctx.extend(var.clone(), Type::Nat), body)
            }
            Term::Ifz { cond, zero, succ } => {
                self.annotate(ctx, cond);
                self.annotate(ctx, succ);
                self.annotate(ctx, zero)
            }
            Term::App(f, a) => {
                self.annotate(ctx, a);
                match self.annotate(ctx, f) {
                    Type::Arrow(_, cod) => (*cod).clone(),
                    Type::Nat => unreachable!("well typed"),
                }
            }
            Term::Abs { var, ty, body } => {
                let cod = self.annotate(&ctx.extend(var.clone(), ty.clone()), body);
                Type::arrow(ty.clone(), cod)
            }
            Term::Fix(m) => {
                self.fix_free
                    .insert(Arc::as_ptr(t), t.free_vars().into_iter().collect());
                if let Term::Abs { var, body, .. } = &**m {
                    if !body.free_vars().contains(var) {
                        self.constant_fix.insert(Arc::as_ptr(t));
                    }
                }
                match self.annotate(ctx, m) {
                    Type::Arrow(dom, _) => (*dom).clone(),
                    Type::Nat => unreachable!("well typed"),
                }
            }
            Term::Mark(m, _) => self.annotate(ctx, m),
        };
        if matches!(
            **t,
            Term::Fix(_) | Term::Ifz { .. } | Term::Let { .. } | Term::Abs { .. }
        ) {
            self.types
                .entry(Arc::as_ptr(t))
                .and_modify(|e| {
                    if e.as_ref() != Some(&ty) {
                        *e = None;
                    }
                })
                .or_insert_with(|| Some(ty.clone()));
        }
        ty
    }

    fn arity_of(&self, t: &TermRef, env: &Env) -> Result<usize, SemError> {
        match self.types.get(&Arc::as_ptr(t)) {
            Some(Some(ty)) => Ok(ty.arity()),
            _ => Ok(typecheck(&env.context(), t)?.arity()),
        }
    }

    fn nmax(&self) -> usize {
        self.cfg.nmax
    }

    pub(crate) fn eval(&self, t: &TermRef, env: &Env) -> Result<SemValue, SemError> {
        stacker::maybe_grow(STACK_RED_ZONE, STACK_GROWTH, || self.eval_node(t, env))
    }

    fn eval_ground(&self, t: &TermRef, env: &Env) -> Result<Rc<Dist>, SemError> {
        match self.eval(t, env)? {
            SemValue::Ground(d) => Ok(d),
            SemValue::Func(_) => unreachable!("well typed"),
        }
    }

    fn eval_node(&self, t: &TermRef, env: &Env) -> Result<SemValue, SemError> {
        let nmax = self.nmax();
        Ok(match &**t {
            Term::Num(n) => {
                let i = n.to_usize().unwrap_or(usize::MAX);
                SemValue::ground(Dist::dirac(i, nmax))
            }
            Term::Succ(a) => SemValue::ground(self.eval_ground(a, env)?.succ()),
            Term::Pred(a) => {
                let d = self.eval_ground(a, env)?;
                SemValue::ground(d.pred(self.cfg.tol).ok_or_else(|| SemError::Precision {
                    op: "pred",
                    overflow: d.overflow().value,
                })?)
            }
            Term::Var(x) => env
                .lookup(x)
                .cloned()
                .ok_or_else(|| SemError::Unbound(x.clone()))?,
            Term::Dice(r) => {
                let p0 = r.to_f64().expect("finite probability");
                let p1 = (Prob::one() - r).to_f64().expect("finite probability");
                SemValue::ground(Dist::from_coords(
                    vec![Dual::constant(p0), Dual::constant(p1)],
                    Dual::zero(),
                    nmax.max(1),
                ))
            }
            Term::Let { var, bound, body } => {
                let d = self.eval_ground(bound, env)?;
                if !d.overflow_negligible(self.cfg.tol) {
                    return Err(SemError::Precision {
                        op: "let",
                        overflow: d.overflow().value,
                    });
                }
                let mut acc = Accum::new(d.pending());
                for (n, w) in d.support() {
                    let inner = env.bind(
                        var.clone(),
                        Type::Nat,
                        SemValue::ground(Dist::dirac(n, nmax)),
                    );
                    acc.push(w.clone(), self.eval(body, &inner)?);
                }
                acc.finish(self.arity_of(t, env)?, nmax)
            }
            Term::Ifz { cond, zero, succ } => {
                let d = self.eval_ground(cond, env)?;
                let (w0, w1) = (d.coord(0), d.nonzero_mass());
                let mut acc = Accum::new(d.pending());
                if !w0.is_zero() {
                    acc.push(w0, self.eval(zero, env)?);
                }
                if !w1.is_zero() {
                    acc.push(w1, self.eval(succ, env)?);
                }
                acc.finish(self.arity_of(t, env)?, nmax)
            }
            Term::App(f, a) => {
                let f = self.eval(f, env)?;
                let a = self.eval(a, env)?;
                self.apply(&f, a)?
            }
            Term::Abs { var, ty, body } => {
                let arity = self.arity_of(t, env)?;
                Closure::value(
                    ClosureKind::Lambda {
                        var: var.clone(),
                        ty: ty.clone(),
                        body: body.clone(),
                        env: env.clone(),
                    },
                    arity,
                )
            }
            Term::Fix(m) => {
                if self.constant_fix.contains(&Arc::as_ptr(t)) {
                    let Term::Abs { body, .. } = &**m else {
                        unreachable!("recorded as an abstraction")
                    };
                    return self.eval(body, env);
                }
                let key = self.fix_key(t, env)?;
                if let Some(v) = key.as_ref().and_then(|k| self.cached_fix(t, k)) {
                    return Ok(v);
                }
                let functional = self.eval(m, env)?;
                let arity = self.arity_of(t, env)?;
                let v = if arity == 0 {
                    self.kleene_ground(&functional)?
                } else {
                    let state = Rc::new(FixState {
                        functional,
                        arity,
                        levels: RefCell::new(vec![bottom(arity, nmax)]),
                    });
                    Closure::value(ClosureKind::Fix(state), arity)
                };
                if let Some(k) = key {
                    let mut cache = self.fix_cache.borrow_mut();
                    let entries = cache.entry(Arc::as_ptr(t)).or_default();
                    if entries.len() == FIX_CACHE_CAPACITY {
                        entries.pop_front();
                    }
                    entries.push_back((k, v.clone()));
                }
                v
            }
            Term::Mark(_, l) => return Err(SemError::Labelled(l.clone())),
        })
    }

    fn fix_key(&self, t: &TermRef, env: &Env) -> Result<Option<Vec<SemValue>>, SemError> {
        let Some(names) = self.fix_free.get(&Arc::as_ptr(t)) else {
            return Ok(None);
        };
        names
            .iter()
            .map(|x| {
                env.lookup(x)
                    .cloned()
                    .ok_or_else(|| SemError::Unbound(x.clone()))
            })
            .collect::<Result<_, _>>()
            .map(Some)
    }

    fn cached_fix(&self, t: &TermRef, key: &[SemValue]) -> Option<SemValue> {
        let cache = self.fix_cache.borrow();
        cache.get(&Arc::as_ptr(t))?.iter().find_map(|(k, v)| {
            (k.len() == key.len() && k.iter().zip(key).all(|(a, b)| a.same_arg(b)))
                .then(|| v.clone())
        })
    }

    pub(crate) fn apply(&self, f: &SemValue, arg: SemValue) -> Result<SemValue, SemError> {
        stacker::maybe_grow(STACK_RED_ZONE, STACK_GROWTH, || self.apply_inner(f, arg))
    }

    fn apply_inner(&self, f: &SemValue, arg: SemValue) -> Result<SemValue, SemError> {
        let SemValue::Func(c) = f else {
            unreachable!("well typed")
        };
        if let Some(v) = c.lookup(&arg) {
            return Ok(v);
        }
        let v = match &c.kind {
            ClosureKind::Lambda { var, ty, body, env } => {
                self.eval(body, &env.bind(var.clone(), ty.clone(), arg.clone()))?
            }
            ClosureKind::Combo { parts, pending } => {
                let mut acc = Accum::new(*pending);
                for (w, g) in parts {
                    acc.push(w.clone(), self.apply(g, arg.clone())?);
                }
                acc.finish(c.arity - 1, self.nmax())
            }
            ClosureKind::Fix(state) => self.saturate(state, vec![arg.clone()])?,
            ClosureKind::Partial { fix, args } => {
                let mut args = args.clone();
                args.push(arg.clone());
                self.saturate(fix, args)?
            }
        };
        c.remember(arg, v.clone());
        Ok(v)
    }

    fn saturate(&self, state: &Rc<FixState>, args: Vec<SemValue>) -> Result<SemValue, SemError> {
        if args.len() < state.arity {
            Ok(Closure::value(
                ClosureKind::Partial {
                    fix: state.clone(),
                    args: args.clone(),
                },
                state.arity - args.len(),
            ))
        } else {
            self.kleene_apply(state, &args)
        }
    }

    fn level(&self, state: &FixState, k: usize) -> Result<SemValue, SemError> {
        loop {
            let last = {
                let levels = state.levels.borrow();
                if let Some(v) = levels.get(k) {
                    return Ok(v.clone());
                }
                levels.last().expect("bottom level").clone()
            };
            let next = self.apply(&state.functional, last)?;
            state.levels.borrow_mut().push(next);
        }
    }

    fn apply_all(&self, f: &SemValue, args: &[SemValue]) -> Result<Rc<Dist>, SemError> {
        let mut v = f.clone();
        for a in args {
            v = self.apply(&v, a.clone())?;
        }
        match v {
            SemValue::Ground(d) => Ok(d),
            SemValue::Func(_) => unreachable!("saturated application"),
        }
    }

    fn converged(&self, next: &Dist, prev: &Dist) -> bool {
        next.pending() < self.cfg.tol && next.sup_diff(prev) < self.cfg.tol
    }

    /// Least fixpoint at type `nat`.
    fn kleene_ground(&self, functional: &SemValue) -> Result<SemValue, SemError> {
        let mut prev = bottom(0, self.nmax());
        for _ in 0..self.cfg.fix_iters {
            let next = self.apply(functional, prev.clone())?;
            if next.ptr_eq(&prev) {
                return Ok(settle(&prev));
            }
            let done = self.converged(
                next.as_dist().expect("ground"),
                prev.as_dist().expect("ground"),
            );
            prev = next;
            if done {
                return Ok(prev);
            }
        }
        self.unconverged.set(true);
        Ok(prev)
    }

    /// `(fix F) a₁ … aₙ` at ground result type, observed on these arguments.
    fn kleene_apply(&self, state: &FixState, args: &[SemValue]) -> Result<SemValue, SemError> {
        let mut prev = Rc::new(Dist::zero(self.nmax()).with_pending(1.0));
        for k in 1..=self.cfg.fix_iters {
            let below = self.level(state, k - 1)?;
            let here = self.level(state, k)?;
            if here.ptr_eq(&below) {
                let exact = self.apply_all(&settle(&below), args)?;
                return Ok(SemValue::ground((*exact).clone().with_pending(0.0)));
            }
            let next = self.apply_all(&here, args)?;
            let done = self.converged(&next, &prev);
            prev = next;
            if done {
                return Ok(SemValue::Ground(prev));
            }
        }
        self.unconverged.set(true);
        Ok(SemValue::Ground(prev))
    }
}
