//! The machine and the denotation against each other: exhaustive
//! enumeration bounds the probability of reaching `0` from both sides, and
//! the denotation must land in between.

use num_traits::ToPrimitive;
use rayon::prelude::*;
use serde::Serialize;

use crate::generate::{random_program, GenConfig};
use crate::machine::{enumerate, stream_rng, Budget, State};
use crate::semantics::{prob_zero, SemConfig, SemError};
use crate::syntax::TermRef;

/// Slack for the comparison, absorbing floating point and Kleene truncation.
pub const SANDWICH_SLACK: f64 = 1e-6;

#[derive(Clone, Debug, Serialize)]
pub struct Sandwich {
    pub program: String,
    /// Mass of accepted runs within the budget.
    pub lower: f64,
    pub denotation: f64,
    /// `lower` plus the mass cut by the budget.
    pub upper: f64,
}

impl Sandwich {
    pub fn holds(&self) -> bool {
        self.lower <= self.denotation + SANDWICH_SLACK
            && self.denotation <= self.upper + SANDWICH_SLACK
    }

    /// The enumeration decided every run, so the bounds coincide.
    pub fn is_tight(&self) -> bool {
        self.upper - self.lower < SANDWICH_SLACK
    }
}

/// Brackets `⟦M⟧₀` for a closed label-free `M : nat`.
pub fn sandwich(t: &TermRef, budget: Budget, cfg: &SemConfig) -> Result<Sandwich, SemError> {
    let r = enumerate(&State::initial(t.clone()), budget);
    let lower = r.converged_mass.to_f64().expect("finite");
    let open = r.open_mass.to_f64().expect("finite");
    Ok(Sandwich {
        program: t.to_string(),
        lower,
        denotation: prob_zero(t, cfg)?.value,
        upper: lower + open,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct AdequacyReport {
    pub programs: usize,
    pub violations: usize,
    pub tight: usize,
    /// Programs drawn but replaced because their numerals outgrew `nmax`.
    pub skipped: usize,
    /// First violating program, if any.
    pub witness: Option<Sandwich>,
}

impl AdequacyReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Runs [`sandwich`] over `n` generated label-free programs. Programs whose
/// denotation cannot be computed within `nmax` are replaced by fresh draws.
pub fn adequacy_check(
    n: usize,
    seed: u64,
    budget: Budget,
    cfg: &SemConfig,
) -> Result<AdequacyReport, SemError> {
    let gen = GenConfig::plain();
    let mut results: Vec<Sandwich> = Vec::with_capacity(n);
    let mut skipped = 0;
    let mut next = 0u64;
    while results.len() < n {
        let batch: Vec<TermRef> = (next..next + n as u64)
            .map(|i| random_program(&gen, &mut stream_rng(seed, i)))
            .collect();
        next += n as u64;
        let outcomes: Vec<_> = batch.par_iter().map(|t| sandwich(t, budget, cfg)).collect();
        for o in outcomes {
            match o {
                Ok(s) if results.len() < n => results.push(s),
                Ok(_) => {}
                Err(SemError::Precision { .. }) => skipped += 1,
                Err(e) => return Err(e),
            }
        }
    }
    Ok(AdequacyReport {
        programs: n,
        violations: results.iter().filter(|s| !s.holds()).count(),
        tight: results.iter().filter(|s| s.is_tight()).count(),
        skipped,
        witness: results.into_iter().find(|s| !s.holds()),
    })
}
