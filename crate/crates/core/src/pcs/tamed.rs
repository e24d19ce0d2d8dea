//! Lower bounds on the tamed observational distance over a finite family
//! of testing contexts, checked against the denotational bound.

use num_rational::BigRational;
use num_traits::{One, ToPrimitive};
use rayon::prelude::*;
use serde::Serialize;

use super::{dist, PcsError, PcsSpace, PcsVec, Web};
use crate::semantics::{denot, prob_zero, Dist, Env, SemConfig};
use crate::syntax::{
    build, loop_term, parse, typecheck_closed, Name, Prob, SyntaxError, TermRef, Type,
};

/// Numerical slack on the tamed bound, absorbing Kleene truncation.
pub const TAMED_SLACK: f64 = 1e-6;

/// Reads a context file: one term per line, `#` comments, blank lines
/// ignored. Error positions refer to the file.
pub fn parse_contexts(src: &str) -> Result<Vec<TermRef>, SyntaxError> {
    let mut out = Vec::new();
    for (i, line) in src.lines().enumerate() {
        let body = line.split('#').next().unwrap_or("");
        if body.trim().is_empty() {
            continue;
        }
        let t = parse(body).map_err(|e| SyntaxError { line: i + 1, ..e })?;
        out.push(t);
    }
    Ok(out)
}

/// `C_p = λz:σ. C (ifz dice(p) then z else Ω_σ)`, with `z` fresh for `C`.
pub fn tamed_context(c: &TermRef, sigma: &Type, p: &Prob) -> TermRef {
    let used = c.all_vars();
    let mut z = String::from("z");
    while used.contains(&Name::new(&z)) {
        z.push('\'');
    }
    let gate = build::ifz(
        build::dice(p.clone()),
        build::var(z.as_str()),
        loop_term(sigma),
    );
    build::lam(z.as_str(), sigma.clone(), build::app(c.clone(), gate))
}

#[derive(Clone, Debug, Serialize)]
pub struct ContextGap {
    pub context: String,
    /// `|P(C_p M ⇓ 0) − P(C_p M′ ⇓ 0)|`.
    pub gap: f64,
    /// The same gap for the untamed context `C`.
    pub untamed_gap: f64,
    pub within_bound: bool,
    pub unconverged: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct TamedReport {
    pub p: f64,
    /// `d(⟦M⟧, ⟦M′⟧)` in the space of sub-probability distributions.
    pub distance: f64,
    /// `p/(1−p) · distance`.
    pub bound: f64,
    /// Lower bound on the `p`-tamed observational distance.
    pub max_gap: f64,
    pub max_untamed_gap: f64,
    pub violations: usize,
    pub gaps: Vec<ContextGap>,
}

impl TamedReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// A ground denotation as a vector on `{0, …, nmax, overflow}`.
fn as_vector(d: &Dist) -> PcsVec {
    let n = d.nmax() + 2;
    let mut coords = vec![0.0; n];
    for (i, c) in d.coords().iter().enumerate() {
        coords[i] = c.value.max(0.0);
    }
    coords[n - 1] = d.overflow().value.max(0.0);
    PcsVec::new(Web::nat(n), coords).expect("nonnegative")
}

/// `d(⟦M⟧, ⟦M′⟧)` for closed `M, M′ : nat`, in the space of
/// sub-probability distributions on `{0, …, nmax, overflow}`.
pub fn ground_distance(m: &TermRef, m2: &TermRef, cfg: &SemConfig) -> Result<f64, PcsError> {
    let ground = |t: &TermRef| -> Result<PcsVec, PcsError> {
        let d = denot(t, &Env::new(), cfg)?;
        match d.value.as_dist() {
            Some(dist) => Ok(as_vector(dist)),
            None => Err(PcsError::Domain(format!(
                "distance is only computed at type nat, not {}",
                typecheck_closed(t)?
            ))),
        }
    };
    let (x, y) = (ground(m)?, ground(m2)?);
    dist(&x, &y, &PcsSpace::simplex(x.web().clone()))
}

/// Checks `|P(C_p M ⇓ 0) − P(C_p M′ ⇓ 0)| ≤ p/(1−p) · d(⟦M⟧, ⟦M′⟧)` for
/// every context, for closed `M, M′ : nat` and contexts `C : nat → nat`.
pub fn tamed_bound_check(
    m: &TermRef,
    m2: &TermRef,
    p: &Prob,
    contexts: &[TermRef],
    cfg: &SemConfig,
) -> Result<TamedReport, PcsError> {
    if p >= &BigRational::one() {
        return Err(PcsError::Domain("p must lie in [0, 1)".into()));
    }
    let sigma = typecheck_closed(m)?;
    let sigma2 = typecheck_closed(m2)?;
    if sigma != sigma2 {
        return Err(PcsError::Domain(format!(
            "terms have types {sigma} and {sigma2}"
        )));
    }
    if !sigma.is_ground() {
        return Err(PcsError::Domain(format!(
            "distance is only computed at type nat, not {sigma}"
        )));
    }
    let want = Type::arrow(sigma.clone(), Type::Nat);
    for c in contexts {
        let ty = typecheck_closed(c)?;
        if ty != want {
            return Err(PcsError::Domain(format!(
                "context {c} has type {ty}, expected {want}"
            )));
        }
    }
    let distance = ground_distance(m, m2, cfg)?;
    let pf = p.to_f64().expect("finite");
    let bound = pf / (1.0 - pf) * distance;

    let gaps: Vec<ContextGap> = contexts
        .par_iter()
        .map(|c| -> Result<ContextGap, PcsError> {
            let tamed = tamed_context(c, &sigma, p);
            let a = prob_zero(&build::app(tamed.clone(), m.clone()), cfg)?;
            let b = prob_zero(&build::app(tamed, m2.clone()), cfg)?;
            let ua = prob_zero(&build::app(c.clone(), m.clone()), cfg)?;
            let ub = prob_zero(&build::app(c.clone(), m2.clone()), cfg)?;
            let gap = (a.value - b.value).abs();
            Ok(ContextGap {
                context: c.to_string(),
                gap,
                untamed_gap: (ua.value - ub.value).abs(),
                within_bound: gap <= bound + TAMED_SLACK,
                unconverged: a.unconverged || b.unconverged,
            })
        })
        .collect::<Result<_, _>>()?;
    Ok(TamedReport {
        p: pf,
        distance,
        bound,
        max_gap: gaps.iter().map(|g| g.gap).fold(0.0, f64::max),
        max_untamed_gap: gaps.iter().map(|g| g.untamed_gap).fold(0.0, f64::max),
        violations: gaps.iter().filter(|g| !g.within_bound).count(),
        gaps,
    })
}
