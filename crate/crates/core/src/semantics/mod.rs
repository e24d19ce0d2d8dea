//! Denotational semantics in probabilistic coherence spaces, evaluated
//! numerically: ground values are truncated distributions over dual
//! numbers, so that label derivatives come out of the same evaluation.

mod dist;
mod dual;
mod eval;

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

pub use dist::Dist;
pub use dual::Dual;
pub use eval::{Closure, Env, SemValue};

use crate::syntax::{Label, Name, TermRef, Type, TypeError};
use crate::translate::{spy, strip, SpyVarMap, TranslateError};
use eval::Evaluator;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SemConfig {
    /// Largest numeral tracked exactly; larger ones go to the overflow bucket.
    pub nmax: usize,
    /// Kleene unrolling budget per fixpoint.
    pub fix_iters: usize,
    /// Sup-norm stopping threshold.
    pub tol: f64,
    /// Derivatives above this are reported as divergent.
    pub divergence_threshold: f64,
}

impl Default for SemConfig {
    fn default() -> Self {
        SemConfig {
            nmax: 64,
            fix_iters: 10_000,
            tol: 1e-9,
            divergence_threshold: 1e12,
        }
    }
}

impl SemConfig {
    pub fn validate(&self) -> Result<(), SemError> {
        let ok = self.nmax > 0
            && self.fix_iters > 0
            && self.tol > 0.0
            && self.tol.is_finite()
            && self.divergence_threshold > 0.0;
        if ok {
            Ok(())
        } else {
            Err(SemError::Config(format!("{self:?}")))
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SemError {
    #[error(transparent)]
    Type(#[from] TypeError),
    #[error(transparent)]
    Translate(#[from] TranslateError),
    #[error("unbound variable `{0}` in environment")]
    Unbound(Name),
    #[error("term still carries label `{0}`; strip or spy it first")]
    Labelled(Label),
    #[error("{op} applied to a distribution with overflow mass {overflow:e}; raise nmax")]
    Precision { op: &'static str, overflow: f64 },
    #[error("term has type {0}, expected nat")]
    NotGround(Type),
    #[error("invalid configuration {0}")]
    Config(String),
    #[error("step size h must lie in (0, 1/2), got {0}")]
    Step(f64),
}

/// Result of [`denot`].
#[derive(Debug)]
pub struct Denotation {
    pub value: SemValue,
    /// Some fixpoint hit its iteration budget before meeting the tolerance.
    pub unconverged: bool,
}

/// Evaluates a mark-free term whose free variables are bound in `env`.
pub fn denot(t: &TermRef, env: &Env, cfg: &SemConfig) -> Result<Denotation, SemError> {
    cfg.validate()?;
    if let Some(l) = t.labels().into_iter().next() {
        return Err(SemError::Labelled(l));
    }
    let ev = Evaluator::new(t, env, cfg.clone())?;
    let value = ev.eval(t, env)?;
    Ok(Denotation {
        value,
        unconverged: ev.unconverged(),
    })
}

/// Ground denotation of a closed or environment-typed term.
#[derive(Clone, Debug, Serialize)]
pub struct GroundDenotation {
    pub dist: Dist,
    /// Upper bound on the mass missing from `dist`.
    pub pending: f64,
    pub unconverged: bool,
}

fn denot_ground(t: &TermRef, env: &Env, cfg: &SemConfig) -> Result<GroundDenotation, SemError> {
    let d = denot(t, env, cfg)?;
    match d.value {
        SemValue::Ground(dist) => Ok(GroundDenotation {
            pending: dist.pending(),
            dist: (*dist).clone(),
            unconverged: d.unconverged,
        }),
        SemValue::Func(_) => Err(SemError::NotGround(
            crate::syntax::typecheck(&env.context(), t).expect("evaluated"),
        )),
    }
}

/// Probability of converging to `0`, with the convergence flag.
#[derive(Clone, Copy, Debug, Serialize, PartialEq)]
pub struct ProbZero {
    pub value: f64,
    pub pending: f64,
    pub unconverged: bool,
}

/// `⟦M⟧₀` for a closed label-free `M : nat`.
pub fn prob_zero(t: &TermRef, cfg: &SemConfig) -> Result<ProbZero, SemError> {
    let g = denot_ground(t, &Env::new(), cfg)?;
    Ok(ProbZero {
        value: g.dist.coord(0).value,
        pending: g.pending,
        unconverged: g.unconverged,
    })
}

/// Denotation of `spy(M)` with each spy variable `x_l` bound to `w_l · e₀`.
/// Labels of `M` missing from `point` are bound to `e₀` (rate 1).
pub fn spy_denot(
    t: &TermRef,
    point: &BTreeMap<Label, Dual>,
    cfg: &SemConfig,
) -> Result<GroundDenotation, SemError> {
    let vars = SpyVarMap::fresh_for(t);
    let translated = spy(t, &crate::syntax::TypingContext::new(), &vars)?;
    let mut env = Env::new();
    for (l, x) in &vars.0 {
        let w = point.get(l).cloned().unwrap_or_else(|| Dual::constant(1.0));
        env = env.bind(
            x.clone(),
            Type::Nat,
            SemValue::ground(Dist::point(0, w, cfg.nmax)),
        );
    }
    denot_ground(&translated, &env, cfg)
}

/// A derivative that is either finite or detected as infinite.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Estimate {
    Value(f64),
    Diverges,
}

impl Estimate {
    pub fn value(self) -> Option<f64> {
        match self {
            Estimate::Value(v) => Some(v),
            Estimate::Diverges => None,
        }
    }

    pub fn is_diverges(self) -> bool {
        self == Estimate::Diverges
    }
}

impl Serialize for Estimate {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Estimate::Value(v) => s.serialize_f64(*v),
            Estimate::Diverges => s.serialize_str("DIVERGES"),
        }
    }
}

/// Expected number of times a label is crossed.
#[derive(Clone, Debug, Serialize)]
pub struct ExpectedCount {
    /// `∂⟦spy M⟧₀/∂r_l` at `r = 1`: expected count over converging runs,
    /// not yet conditioned.
    pub raw: Estimate,
    /// `raw / p_conv`; `None` when `p_conv = 0`.
    pub conditional: Option<Estimate>,
    pub p_conv: f64,
    /// Kleene budget of the last evaluation.
    pub fix_iters: usize,
    /// The ladder ended without settling either way.
    pub unconverged: bool,
}

const LADDER_START: u32 = 4;
const STALL_RATIO: f64 = 0.9;

/// Expected number of crossings of `l` by runs of `M` ending in `0`,
/// conditioned on that event, from the derivative of the spy translation.
pub fn expected_count(t: &TermRef, l: &Label, cfg: &SemConfig) -> Result<ExpectedCount, SemError> {
    cfg.validate()?;
    let p_conv = prob_zero(&strip(t), cfg)?.value;
    let point: BTreeMap<Label, Dual> = [(l.clone(), Dual::variable(1.0, l.clone()))].into();

    let mut prev: Option<f64> = None;
    let mut last_step: Option<f64> = None;
    let mut outcome = None;
    let mut iters = 0;
    let mut unconverged = true;
    for k in LADDER_START.. {
        iters = (1usize << k.min(62)).min(cfg.fix_iters);
        let run = SemConfig {
            fix_iters: iters,
            ..cfg.clone()
        };
        let g = spy_denot(t, &point, &run)?;
        let p = g.dist.coord(0).partial(l);
        if !p.is_finite() || p > cfg.divergence_threshold {
            outcome = Some(Estimate::Diverges);
            unconverged = false;
            break;
        }
        if !g.unconverged {
            outcome = Some(Estimate::Value(p));
            unconverged = false;
            break;
        }
        if let Some(q) = prev {
            let step = (p - q).abs();
            if step <= cfg.tol * p.abs().max(1.0) {
                outcome = Some(Estimate::Value(p));
                unconverged = false;
                break;
            }
            if last_step.is_some_and(|s| step >= STALL_RATIO * s) {
                outcome = Some(Estimate::Diverges);
                unconverged = false;
                break;
            }
            last_step = Some(step);
        }
        prev = Some(p);
        outcome = Some(Estimate::Value(p));
        if iters >= cfg.fix_iters {
            break;
        }
    }
    let raw = outcome.expect("ladder ran at least once");
    let conditional = (p_conv > 0.0).then(|| match raw {
        Estimate::Value(v) => Estimate::Value(v / p_conv),
        Estimate::Diverges => Estimate::Diverges,
    });
    Ok(ExpectedCount {
        raw,
        conditional,
        p_conv,
        fix_iters: iters,
        unconverged,
    })
}

/// Central finite difference of `r ↦ ⟦spy M⟧₀(r·e₀)` in direction `l`
/// against the dual-number partial, both at `r_l = 1 − h`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct FiniteDifference {
    pub h: f64,
    pub central: f64,
    pub dual: f64,
}

impl FiniteDifference {
    pub fn abs_error(&self) -> f64 {
        (self.central - self.dual).abs()
    }
}

pub fn finite_difference_check(
    t: &TermRef,
    l: &Label,
    h: f64,
    cfg: &SemConfig,
) -> Result<FiniteDifference, SemError> {
    if !(h > 0.0 && h < 0.5) {
        return Err(SemError::Step(h));
    }
    let at = |w: Dual| -> Result<Dual, SemError> {
        let point = [(l.clone(), w)].into();
        Ok(spy_denot(t, &point, cfg)?.dist.coord(0))
    };
    let hi = at(Dual::constant(1.0))?.value;
    let lo = at(Dual::constant(1.0 - 2.0 * h))?.value;
    let dual = at(Dual::variable(1.0 - h, l.clone()))?.partial(l);
    Ok(FiniteDifference {
        h,
        central: (hi - lo) / (2.0 * h),
        dual,
    })
}

#[cfg(test)]
mod tests;
