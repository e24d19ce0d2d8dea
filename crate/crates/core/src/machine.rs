//! The stack machine, driven by explicit choice sequences.
//!
//! A [`State`] is a closed focus term together with a stack of frames. The
//! machine is deterministic except at `dice(r)`, where it consumes one bit:
//! `0` continues with numeral `0` and weight `r`, `1` continues with numeral
//! `1` and weight `1 - r`. A run accepts exactly when the focus is `0` on an
//! empty stack.
//!
//! On top of the single-run evaluator this module provides exhaustive
//! bounded enumeration of all runs (exact rational weights) and Monte Carlo
//! sampling with reproducible per-sample seeds.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::ser::SerializeMap;
use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::syntax::{
    subst, typecheck, typecheck_closed, Label, Name, Prob, Term, TermRef, Type, TypeError,
    TypingContext,
};

pub const DEFAULT_MAX_STEPS: u64 = 1_000_000;
pub const DEFAULT_MAX_CHOICES: usize = 64;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Frame {
    Arg(TermRef),
    Succ,
    Pred,
    Ifz(TermRef, TermRef),
    Let(Name, TermRef),
}

/// Persistent stack of frames: clones share their tails, so saving a state
/// for cycle detection or branching during enumeration costs `O(1)`.
#[derive(Clone, Default)]
pub struct Stack {
    top: Option<Arc<Node>>,
    len: usize,
}

struct Node {
    frame: Frame,
    rest: Option<Arc<Node>>,
}

impl Stack {
    pub fn new() -> Self {
        Stack::default()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn push(&mut self, frame: Frame) {
        let rest = self.top.take();
        self.top = Some(Arc::new(Node { frame, rest }));
        self.len += 1;
    }

    pub fn pop(&mut self) -> Option<Frame> {
        let node = self.top.take()?;
        self.len -= 1;
        match Arc::try_unwrap(node) {
            Ok(mut n) => {
                self.top = n.rest.take();
                Some(n.frame)
            }
            Err(n) => {
                self.top = n.rest.clone();
                Some(n.frame.clone())
            }
        }
    }

    /// Frames from the top down.
    pub fn iter(&self) -> impl Iterator<Item = &Frame> {
        let mut cur = self.top.as_deref();
        std::iter::from_fn(move || {
            let n = cur?;
            cur = n.rest.as_deref();
            Some(&n.frame)
        })
    }
}

impl FromIterator<Frame> for Stack {
    /// Pushes in order, so the last frame ends on top.
    fn from_iter<I: IntoIterator<Item = Frame>>(iter: I) -> Self {
        let mut s = Stack::new();
        for f in iter {
            s.push(f);
        }
        s
    }
}

impl PartialEq for Stack {
    fn eq(&self, other: &Self) -> bool {
        if self.len != other.len {
            return false;
        }
        let (mut a, mut b) = (self.top.as_ref(), other.top.as_ref());
        loop {
            match (a, b) {
                (None, None) => return true,
                (Some(x), Some(y)) => {
                    if Arc::ptr_eq(x, y) {
                        return true;
                    }
                    if x.frame != y.frame {
                        return false;
                    }
                    a = x.rest.as_ref();
                    b = y.rest.as_ref();
                }
                _ => return false,
            }
        }
    }
}

impl Eq for Stack {}

impl fmt::Debug for Stack {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.iter()).finish()
    }
}

impl Drop for Stack {
    // Iterative, so that dropping a deep stack does not recurse.
    fn drop(&mut self) {
        let mut cur = self.top.take();
        while let Some(node) = cur {
            match Arc::try_unwrap(node) {
                Ok(mut n) => cur = n.rest.take(),
                Err(_) => break,
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct State {
    pub focus: TermRef,
    pub stack: Stack,
}

impl State {
    /// The initial state `<M, ε>`.
    pub fn initial(term: TermRef) -> Self {
        State {
            focus: term,
            stack: Stack::new(),
        }
    }

    /// Checks the state typing judgment: the focus has some type `σ` and the
    /// stack turns a `σ` into a `nat`.
    pub fn typecheck(&self) -> Result<(), TypeError> {
        let empty = TypingContext::new();
        let mut ty = typecheck_closed(&self.focus)?;
        for frame in self.stack.iter() {
            ty = match (frame, ty) {
                (Frame::Arg(n), Type::Arrow(dom, cod)) => {
                    let found = typecheck_closed(n)?;
                    if found != *dom {
                        return Err(TypeError::Mismatch {
                            term: n.to_string(),
                            expected: (*dom).clone(),
                            found,
                        });
                    }
                    (*cod).clone()
                }
                (Frame::Succ | Frame::Pred, Type::Nat) => Type::Nat,
                (Frame::Ifz(n, p), Type::Nat) => {
                    let t = typecheck_closed(n)?;
                    let u = typecheck_closed(p)?;
                    if t != u {
                        return Err(TypeError::Mismatch {
                            term: p.to_string(),
                            expected: t,
                            found: u,
                        });
                    }
                    t
                }
                (Frame::Let(x, n), Type::Nat) => typecheck(&empty.extend(x.clone(), Type::Nat), n)?,
                (frame, found) => {
                    return Err(TypeError::Mismatch {
                        term: format!("{frame:?}"),
                        expected: Type::Nat,
                        found,
                    })
                }
            };
        }
        if ty != Type::Nat {
            return Err(TypeError::Mismatch {
                term: self.focus.to_string(),
                expected: Type::Nat,
                found: ty,
            });
        }
        Ok(())
    }
}

/// A finite sequence of coin outcomes.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ChoiceSeq(pub Vec<bool>);

impl ChoiceSeq {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for ChoiceSeq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.0 {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for ChoiceSeq {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(format!("invalid choice bit `{other}`")),
            })
            .collect::<Result<_, _>>()
            .map(ChoiceSeq)
    }
}

impl Serialize for ChoiceSeq {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// Finite multiset of labels.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LabelMultiset(BTreeMap<Label, u64>);

impl LabelMultiset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn singleton(l: Label) -> Self {
        let mut m = Self::new();
        m.add(l);
        m
    }

    pub fn add(&mut self, l: Label) {
        *self.0.entry(l).or_insert(0) += 1;
    }

    pub fn count(&self, l: &Label) -> u64 {
        self.0.get(l).copied().unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Label, u64)> {
        self.0.iter().map(|(l, &n)| (l, n))
    }

    /// Multiset union (counts add).
    pub fn union(&self, other: &LabelMultiset) -> LabelMultiset {
        let mut out = self.clone();
        for (l, n) in other.iter() {
            *out.0.entry(l.clone()).or_insert(0) += n;
        }
        out
    }
}

impl FromIterator<(Label, u64)> for LabelMultiset {
    fn from_iter<I: IntoIterator<Item = (Label, u64)>>(iter: I) -> Self {
        let mut m = LabelMultiset::new();
        for (l, n) in iter {
            if n > 0 {
                *m.0.entry(l).or_insert(0) += n;
            }
        }
        m
    }
}

impl Serialize for LabelMultiset {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(self.0.len()))?;
        for (l, n) in &self.0 {
            map.serialize_entry(l.as_str(), n)?;
        }
        map.end()
    }
}

pub(crate) fn serialize_ratio<S: Serializer>(r: &BigRational, s: S) -> Result<S::Ok, S::Error> {
    s.collect_str(r)
}

/// One accepted run.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PathRecord {
    pub choices: ChoiceSeq,
    #[serde(serialize_with = "serialize_ratio")]
    pub weight: BigRational,
    pub labels: LabelMultiset,
}

/// Result of a single machine transition.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Step {
    Continue,
    /// Waiting for a coin outcome; call [`Machine::resolve`].
    Choice(Prob),
    Accept,
    /// Stuck on a non-accepting normal form (e.g. a non-zero numeral on the
    /// empty stack).
    Reject,
}

/// How an uninterrupted deterministic segment of a run ended.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Event {
    Choice(Prob),
    Accept,
    Reject,
    /// The machine revisited a state without consuming a choice.
    Cycle,
    OutOfSteps,
}

/// Brent cycle detection over the states of one deterministic segment.
#[derive(Clone, Debug)]
struct CycleWatch {
    saved: Option<State>,
    power: u64,
    lam: u64,
}

impl CycleWatch {
    fn new() -> Self {
        CycleWatch {
            saved: None,
            power: 1,
            lam: 0,
        }
    }

    fn observe(&mut self, s: &State) -> bool {
        if let Some(saved) = &self.saved {
            if saved.stack.len() == s.stack.len() && saved == s {
                return true;
            }
        }
        if self.saved.is_none() || self.lam == self.power {
            self.saved = Some(s.clone());
            self.power *= 2;
            self.lam = 0;
        }
        self.lam += 1;
        false
    }
}

/// A machine in the middle of a run.
#[derive(Clone, Debug)]
pub struct Machine {
    state: State,
    steps: u64,
    labels: LabelMultiset,
    watch: CycleWatch,
}

fn numeral(n: BigUint) -> TermRef {
    Arc::new(Term::Num(n))
}

impl Machine {
    pub fn new(state: State) -> Self {
        Machine {
            state,
            steps: 0,
            labels: LabelMultiset::new(),
            watch: CycleWatch::new(),
        }
    }

    pub fn state(&self) -> &State {
        &self.state
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn labels(&self) -> &LabelMultiset {
        &self.labels
    }

    /// Resolves a pending `dice` with the given bit.
    pub fn resolve(&mut self, bit: bool) {
        debug_assert!(matches!(*self.state.focus, Term::Dice(_)));
        self.state.focus = numeral(BigUint::from(bit as u8));
        self.watch = CycleWatch::new();
    }

    /// Performs one transition.
    pub fn step(&mut self) -> Step {
        let st = &mut self.state;
        let focus = st.focus.clone();
        let next = match &*focus {
            Term::Let { var, bound, body } => {
                st.stack.push(Frame::Let(var.clone(), body.clone()));
                bound.clone()
            }
            Term::Ifz { cond, zero, succ } => {
                st.stack.push(Frame::Ifz(zero.clone(), succ.clone()));
                cond.clone()
            }
            Term::App(f, a) => {
                st.stack.push(Frame::Arg(a.clone()));
                f.clone()
            }
            Term::Fix(m) => {
                st.stack.push(Frame::Arg(focus.clone()));
                m.clone()
            }
            Term::Succ(m) => {
                st.stack.push(Frame::Succ);
                m.clone()
            }
            Term::Pred(m) => {
                st.stack.push(Frame::Pred);
                m.clone()
            }
            Term::Mark(m, l) => {
                self.labels.add(l.clone());
                m.clone()
            }
            Term::Dice(r) => return Step::Choice(r.clone()),
            Term::Abs { var, body, .. } => match st.stack.pop() {
                Some(Frame::Arg(n)) => subst(body, var, &n),
                _ => return Step::Reject,
            },
            Term::Num(n) => match st.stack.pop() {
                None if n.is_zero() => return Step::Accept,
                None => return Step::Reject,
                Some(Frame::Let(x, body)) => subst(&body, &x, &focus),
                Some(Frame::Ifz(zero, succ)) => {
                    if n.is_zero() {
                        zero
                    } else {
                        succ
                    }
                }
                Some(Frame::Succ) => numeral(n + 1u32),
                Some(Frame::Pred) => {
                    if n.is_zero() {
                        focus.clone()
                    } else {
                        numeral(n - 1u32)
                    }
                }
                Some(Frame::Arg(_)) => return Step::Reject,
            },
            Term::Var(_) => return Step::Reject,
        };
        st.focus = next;
        self.steps += 1;
        Step::Continue
    }

    /// Runs until the next coin, a normal form, a detected cycle, or until
    /// the total step count reaches `max_steps`.
    pub fn advance(&mut self, max_steps: u64) -> Event {
        loop {
            if self.steps >= max_steps {
                return Event::OutOfSteps;
            }
            match self.step() {
                Step::Continue => {}
                Step::Choice(r) => return Event::Choice(r),
                Step::Accept => return Event::Accept,
                Step::Reject => return Event::Reject,
            }
            if self.watch.observe(&self.state) {
                return Event::Cycle;
            }
        }
    }
}

fn bit_weight(r: &Prob, bit: bool) -> Prob {
    if bit {
        Prob::one() - r
    } else {
        r.clone()
    }
}

/// Runs the machine on `s` following exactly the choices in `alpha`.
///
/// Returns `None` when the run does not accept, when `alpha` is too short or
/// too long for the run, or when `max_steps` is exceeded.
pub fn run(s: &State, alpha: &ChoiceSeq, max_steps: u64) -> Option<PathRecord> {
    let mut m = Machine::new(s.clone());
    let mut weight = BigRational::one();
    let mut bits = alpha.0.iter();
    loop {
        match m.advance(max_steps) {
            Event::Choice(r) => {
                let &bit = bits.next()?;
                weight *= bit_weight(&r, bit);
                m.resolve(bit);
            }
            Event::Accept => {
                return bits.next().is_none().then(|| PathRecord {
                    choices: alpha.clone(),
                    weight,
                    labels: m.labels,
                })
            }
            Event::Reject | Event::Cycle | Event::OutOfSteps => return None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Budget {
    pub max_steps: u64,
    pub max_choice_len: usize,
}

impl Default for Budget {
    fn default() -> Self {
        Budget {
            max_steps: DEFAULT_MAX_STEPS,
            max_choice_len: DEFAULT_MAX_CHOICES,
        }
    }
}

/// All runs of a state up to a budget.
///
/// The four masses always add up to exactly one: every run either accepts,
/// gets stuck on a non-zero result, is proven divergent by revisiting a
/// state, or is cut by the budget.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct EnumerationResult {
    pub paths: Vec<PathRecord>,
    #[serde(serialize_with = "serialize_ratio")]
    pub converged_mass: BigRational,
    #[serde(serialize_with = "serialize_ratio")]
    pub open_mass: BigRational,
    #[serde(serialize_with = "serialize_ratio")]
    pub rejected_mass: BigRational,
    #[serde(serialize_with = "serialize_ratio")]
    pub diverged_mass: BigRational,
    pub budget: Budget,
}

impl EnumerationResult {
    /// Distribution of the label multiset over accepted runs.
    pub fn label_distribution(&self) -> BTreeMap<LabelMultiset, BigRational> {
        let mut out: BTreeMap<LabelMultiset, BigRational> = BTreeMap::new();
        for p in &self.paths {
            *out.entry(p.labels.clone())
                .or_insert_with(BigRational::zero) += &p.weight;
        }
        out
    }
}

/// Depth-first enumeration of every run of `s`, branching on each coin.
/// Zero-weight branches are skipped.
pub fn enumerate(s: &State, budget: Budget) -> EnumerationResult {
    let mut res = EnumerationResult {
        paths: Vec::new(),
        converged_mass: BigRational::zero(),
        open_mass: BigRational::zero(),
        rejected_mass: BigRational::zero(),
        diverged_mass: BigRational::zero(),
        budget,
    };
    let mut todo = vec![(Machine::new(s.clone()), Vec::new(), BigRational::one())];
    while let Some((mut m, choices, weight)) = todo.pop() {
        match m.advance(budget.max_steps) {
            Event::Choice(r) => {
                if choices.len() >= budget.max_choice_len {
                    res.open_mass += weight;
                    continue;
                }
                // Push bit 1 first so that bit 0 is explored first.
                for bit in [true, false] {
                    let w = bit_weight(&r, bit);
                    if w.is_zero() {
                        continue;
                    }
                    let mut child = m.clone();
                    child.resolve(bit);
                    let mut cs = choices.clone();
                    cs.push(bit);
                    todo.push((child, cs, &weight * w));
                }
            }
            Event::Accept => {
                res.converged_mass += &weight;
                res.paths.push(PathRecord {
                    choices: ChoiceSeq(choices),
                    weight,
                    labels: m.labels,
                });
            }
            Event::Reject => res.rejected_mass += weight,
            Event::Cycle => res.diverged_mass += weight,
            Event::OutOfSteps => res.open_mass += weight,
        }
    }
    res
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Converged,
    Rejected,
    Diverged,
    OutOfSteps,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SampleOutcome {
    pub converged: bool,
    pub status: RunStatus,
    /// Meaningful only when `converged`.
    pub labels: LabelMultiset,
    pub steps: u64,
}

/// Random generator for sample `index` of a batch seeded by `root`.
pub fn stream_rng(root: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(root);
    rng.set_stream(index);
    rng
}

/// Runs the machine once, drawing each coin from `rng`.
pub fn sample_with<R: Rng>(s: &State, rng: &mut R, max_steps: u64) -> SampleOutcome {
    let mut m = Machine::new(s.clone());
    let status = loop {
        match m.advance(max_steps) {
            Event::Choice(r) => {
                let p = r.to_f64().unwrap_or(0.0).clamp(0.0, 1.0);
                // bit 0 has probability r
                let bit = !rng.gen_bool(p);
                m.resolve(bit);
            }
            Event::Accept => break RunStatus::Converged,
            Event::Reject => break RunStatus::Rejected,
            Event::Cycle => break RunStatus::Diverged,
            Event::OutOfSteps => break RunStatus::OutOfSteps,
        }
    };
    let converged = status == RunStatus::Converged;
    SampleOutcome {
        converged,
        status,
        labels: if converged {
            m.labels
        } else {
            LabelMultiset::new()
        },
        steps: m.steps,
    }
}

pub fn sample(s: &State, seed: u64, max_steps: u64) -> SampleOutcome {
    sample_with(s, &mut stream_rng(seed, 0), max_steps)
}

/// `n` independent samples; sample `i` uses stream `i` of `seed`, so the
/// output does not depend on thread scheduling.
pub fn sample_many(s: &State, seed: u64, n: u64, max_steps: u64) -> Vec<SampleOutcome> {
    (0..n)
        .into_par_iter()
        .map(|i| sample_with(s, &mut stream_rng(seed, i), max_steps))
        .collect()
}

/// Aggregate of a Monte Carlo batch.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MonteCarloSummary {
    pub samples: u64,
    pub converged: u64,
    pub rejected: u64,
    pub diverged: u64,
    pub out_of_steps: u64,
    pub p_conv: f64,
    pub p_conv_stderr: f64,
    /// Mean count of each label over converged samples.
    pub conditional_label_means: BTreeMap<String, f64>,
}

pub fn summarize(outcomes: &[SampleOutcome]) -> MonteCarloSummary {
    let n = outcomes.len() as u64;
    let count = |st| outcomes.iter().filter(|o| o.status == st).count() as u64;
    let converged = count(RunStatus::Converged);
    let mut totals: BTreeMap<String, u64> = BTreeMap::new();
    for o in outcomes.iter().filter(|o| o.converged) {
        for (l, c) in o.labels.iter() {
            *totals.entry(l.to_string()).or_insert(0) += c;
        }
    }
    let p = if n > 0 {
        converged as f64 / n as f64
    } else {
        0.0
    };
    MonteCarloSummary {
        samples: n,
        converged,
        rejected: count(RunStatus::Rejected),
        diverged: count(RunStatus::Diverged),
        out_of_steps: count(RunStatus::OutOfSteps),
        p_conv: p,
        p_conv_stderr: if n > 0 {
            (p * (1.0 - p) / n as f64).sqrt()
        } else {
            0.0
        },
        conditional_label_means: totals
            .into_iter()
            .map(|(l, t)| (l, t as f64 / converged.max(1) as f64))
            .collect(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConditionalEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub p_conv: f64,
    pub samples: u64,
    pub converged: u64,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MachineError {
    #[error("no converged run among {0} samples")]
    NoConvergedSamples(u64),
}

/// Monte Carlo estimate of the expected count of `l` given convergence.
pub fn estimate_conditional_count(
    m: &TermRef,
    l: &Label,
    n: u64,
    max_steps: u64,
    seed: u64,
) -> Result<ConditionalEstimate, MachineError> {
    let outcomes = sample_many(&State::initial(m.clone()), seed, n, max_steps);
    let counts: Vec<f64> = outcomes
        .iter()
        .filter(|o| o.converged)
        .map(|o| o.labels.count(l) as f64)
        .collect();
    if counts.is_empty() {
        return Err(MachineError::NoConvergedSamples(n));
    }
    let k = counts.len() as f64;
    let mean = counts.iter().sum::<f64>() / k;
    let var = if counts.len() > 1 {
        counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (k - 1.0)
    } else {
        0.0
    };
    Ok(ConditionalEstimate {
        mean,
        stderr: (var / k).sqrt(),
        p_conv: k / n as f64,
        samples: n,
        converged: counts.len() as u64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::build::*;
    use crate::syntax::{loop_term, make_mq};

    fn ratio(a: i64, b: i64) -> BigRational {
        BigRational::new(a.into(), b.into())
    }

    fn seq(s: &str) -> ChoiceSeq {
        s.parse().unwrap()
    }

    #[test]
    fn zero_on_empty_stack_accepts() {
        let p = run(&State::initial(num(0)), &seq(""), 10).unwrap();
        assert_eq!(p.weight, BigRational::one());
        assert!(p.labels.is_empty());
    }

    #[test]
    fn dice_bit_zero_has_weight_r() {
        let p = run(&State::initial(dice_ratio(1, 3)), &seq("0"), 10).unwrap();
        assert_eq!(p.weight, ratio(1, 3));
        // bit 1 yields numeral 1, which is rejected
        assert!(run(&State::initial(dice_ratio(1, 3)), &seq("1"), 10).is_none());
    }

    #[test]
    fn mark_adds_label() {
        let p = run(&State::initial(mark(num(0), "l")), &seq(""), 10).unwrap();
        assert_eq!(p.labels, LabelMultiset::singleton("l".into()));
    }

    #[test]
    fn choice_sequence_length_must_match() {
        let s = State::initial(dice_ratio(1, 2));
        assert!(run(&s, &seq(""), 10).is_none());
        assert!(run(&s, &seq("00"), 10).is_none());
        assert!(run(&State::initial(num(0)), &seq("0"), 10).is_none());
    }

    #[test]
    fn bit_one_yields_numeral_one() {
        // ifz dice(1/4) then 1 else 0 accepts exactly on bit 1
        let t = ifz(dice_ratio(1, 4), num(1), num(0));
        let p = run(&State::initial(t), &seq("1"), 100).unwrap();
        assert_eq!(p.weight, ratio(3, 4));
    }

    #[test]
    fn let_keeps_the_rest_of_the_stack() {
        let t = succ(let_in("x", num(2), pred(pred(var("x")))));
        let t = pred(t);
        assert!(run(&State::initial(t), &seq(""), 100).is_some());
    }

    #[test]
    fn stack_shares_tails() {
        let mut a: Stack = [Frame::Succ, Frame::Pred].into_iter().collect();
        let b = a.clone();
        assert_eq!(a.pop(), Some(Frame::Pred));
        assert_eq!(a.len(), 1);
        assert_eq!(b.len(), 2);
        assert_ne!(a, b);
        a.push(Frame::Pred);
        assert_eq!(a, b);
        assert_eq!(
            b.iter().cloned().collect::<Vec<_>>(),
            [Frame::Pred, Frame::Succ]
        );
    }

    #[test]
    fn deep_stack_drops() {
        let s: Stack = (0..1_000_000).map(|_| Frame::Succ).collect();
        let t = s.clone();
        drop(s);
        assert_eq!(t.len(), 1_000_000);
    }

    #[test]
    fn pred_of_zero_is_zero() {
        assert!(run(&State::initial(pred(num(0))), &seq(""), 10).is_some());
        assert!(run(&State::initial(pred(num(2))), &seq(""), 10).is_none());
    }

    #[test]
    fn enumerate_single_coin() {
        let r = enumerate(&State::initial(dice_ratio(1, 2)), Budget::default());
        assert_eq!(r.paths.len(), 1);
        assert_eq!(r.paths[0].choices, seq("0"));
        assert_eq!(r.converged_mass, ratio(1, 2));
        assert_eq!(r.rejected_mass, ratio(1, 2));
        assert!(r.open_mass.is_zero());
    }

    #[test]
    fn enumerate_loop_is_divergent_not_open() {
        let r = enumerate(&State::initial(loop_term(&Type::Nat)), Budget::default());
        assert!(r.converged_mass.is_zero());
        assert!(r.open_mass.is_zero());
        assert_eq!(r.diverged_mass, BigRational::one());
    }

    #[test]
    fn enumerate_masses_sum_to_one() {
        let t = app(make_mq(ratio(3, 4)), num(0));
        let r = enumerate(
            &State::initial(t),
            Budget {
                max_steps: 100_000,
                max_choice_len: 12,
            },
        );
        let total = &r.converged_mass + &r.open_mass + &r.rejected_mass + &r.diverged_mass;
        assert_eq!(total, BigRational::one());
        let sum: BigRational = r.paths.iter().map(|p| p.weight.clone()).sum();
        assert_eq!(sum, r.converged_mass);
        assert!(r.converged_mass < ratio(1, 3));
        assert!(&r.converged_mass + &r.open_mass >= ratio(1, 3));
    }

    #[test]
    fn paths_replay_with_run() {
        let t = app(make_mq(ratio(1, 3)), mark(num(0), "l"));
        let s = State::initial(t);
        let r = enumerate(
            &s,
            Budget {
                max_steps: 10_000,
                max_choice_len: 7,
            },
        );
        assert!(!r.paths.is_empty());
        for p in &r.paths {
            assert_eq!(run(&s, &p.choices, 10_000).as_ref(), Some(p));
        }
    }

    #[test]
    fn out_of_steps_is_open() {
        // counts down from 50 deterministically
        let f = fix(lam(
            "f",
            Type::arrow(Type::Nat, Type::Nat),
            lam(
                "x",
                Type::Nat,
                ifz(var("x"), num(0), app(var("f"), pred(var("x")))),
            ),
        ));
        let s = State::initial(app(f, num(50)));
        let small = enumerate(
            &s,
            Budget {
                max_steps: 20,
                max_choice_len: 4,
            },
        );
        assert_eq!(small.open_mass, BigRational::one());
        let big = enumerate(
            &s,
            Budget {
                max_steps: 10_000,
                max_choice_len: 4,
            },
        );
        assert_eq!(big.converged_mass, BigRational::one());
    }

    #[test]
    fn sampling_degenerate_coins() {
        let s = State::initial(num(0));
        let o = sample(&s, 1, 10);
        assert!(o.converged && o.labels.is_empty());
        for seed in 0..20 {
            assert!(sample(&State::initial(dice_ratio(1, 1)), seed, 10).converged);
            assert_eq!(
                sample(&State::initial(dice_ratio(0, 1)), seed, 10).status,
                RunStatus::Rejected
            );
        }
    }

    #[test]
    fn sampling_is_reproducible() {
        let s = State::initial(app(make_mq(ratio(1, 4)), mark(num(0), "l")));
        let a = sample_many(&s, 9, 200, 10_000);
        let b = sample_many(&s, 9, 200, 10_000);
        assert_eq!(a, b);
        assert_eq!(a[0], sample(&s, 9, 10_000));
    }

    #[test]
    fn conditional_count_of_marked_zero() {
        let e = estimate_conditional_count(&mark(num(0), "l"), &"l".into(), 100, 100, 3).unwrap();
        assert_eq!(e.mean, 1.0);
        assert_eq!(e.p_conv, 1.0);
    }

    #[test]
    fn conditional_count_deterministic_program() {
        let t = app(make_mq(ratio(0, 1)), mark(num(0), "l"));
        let e = estimate_conditional_count(&t, &"l".into(), 500, 10_000, 3).unwrap();
        assert_eq!(e.mean, 2.0);
        assert_eq!(e.stderr, 0.0);
    }

    #[test]
    fn no_converged_samples_is_an_error() {
        let r = estimate_conditional_count(&num(1), &"l".into(), 10, 10, 0);
        assert_eq!(r, Err(MachineError::NoConvergedSamples(10)));
    }

    #[test]
    fn reachable_states_are_well_typed() {
        let t = app(make_mq(ratio(1, 2)), mark(num(0), "l"));
        let mut rng = stream_rng(5, 0);
        let mut m = Machine::new(State::initial(t));
        for _ in 0..2_000 {
            m.state().typecheck().unwrap();
            match m.step() {
                Step::Continue => {}
                Step::Choice(_) => m.resolve(rng.gen_bool(0.5)),
                Step::Accept | Step::Reject => break,
            }
        }
    }

    #[test]
    fn choice_seq_text() {
        assert_eq!(seq("0110").to_string(), "0110");
        assert!("012".parse::<ChoiceSeq>().is_err());
    }
}
