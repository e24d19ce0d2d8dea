//! Seeded random generation of closed programs of type `nat`, used to build
//! test corpora.
//!
//! Programs are built from numerals, coins, `succ`/`pred`, `ifz`, `let`,
//! beta-redexes, divergence, bounded recursion (a countdown whose recursive
//! calls always see a smaller argument) and, optionally, geometric
//! recursion that terminates only almost surely.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::machine::stream_rng;
use crate::syntax::build::*;
use crate::syntax::{loop_term, Label, Name, TermRef, Type};

#[derive(Clone, Debug)]
pub struct GenConfig {
    pub max_depth: usize,
    /// Labels that may be attached to subterms; empty for label-free programs.
    pub labels: Vec<Label>,
    /// Allow recursion that terminates only with probability < 1 or almost
    /// surely, so that exhaustive enumeration may leave open mass.
    pub unbounded_recursion: bool,
    /// Largest numeral literal.
    pub max_numeral: u64,
    /// Chance that a generated subterm is wrapped in a mark.
    pub mark_rate: f64,
}

impl GenConfig {
    /// Label-free programs with every feature enabled.
    pub fn plain() -> Self {
        GenConfig {
            max_depth: 4,
            labels: Vec::new(),
            unbounded_recursion: true,
            max_numeral: 3,
            mark_rate: 0.35,
        }
    }

    /// Labelled programs whose every run terminates within a bounded number
    /// of steps, so their enumeration is exhaustive.
    pub fn labelled(labels: &[&str]) -> Self {
        GenConfig {
            max_depth: 5,
            labels: labels.iter().map(Label::new).collect(),
            unbounded_recursion: false,
            max_numeral: 4,
            mark_rate: 0.6,
        }
    }
}

struct Gen<'a, R> {
    cfg: &'a GenConfig,
    rng: &'a mut R,
    fresh: usize,
}

impl<R: Rng> Gen<'_, R> {
    fn name(&mut self, base: &str) -> Name {
        self.fresh += 1;
        Name::new(format!("{base}{}", self.fresh))
    }

    fn coin(&mut self) -> TermRef {
        let den = *[2i64, 3, 4, 5, 10].choose(self.rng).expect("nonempty");
        dice_ratio(self.rng.gen_range(0..=den), den)
    }

    /// `nat` leaves; `scope` lists variables of type `nat`.
    fn leaf(&mut self, scope: &[Name]) -> TermRef {
        match self.rng.gen_range(0..10) {
            0..=2 => num(self.rng.gen_range(0..=self.cfg.max_numeral)),
            3..=5 => self.coin(),
            6..=8 if !scope.is_empty() => var(scope.choose(self.rng).expect("nonempty").clone()),
            9 if self.rng.gen_bool(0.3) => loop_term(&Type::Nat),
            _ => num(0),
        }
    }

    /// A `nat` term; `call` is a recursive call available inside a
    /// countdown body.
    fn nat(&mut self, depth: usize, scope: &[Name], call: Option<&TermRef>) -> TermRef {
        if depth == 0 {
            let t = match call {
                Some(c) if self.rng.gen_bool(0.3) => c.clone(),
                _ => self.leaf(scope),
            };
            return self.maybe_mark(t);
        }
        let d = depth - 1;
        let t = match self.rng.gen_range(0..12) {
            0 => succ(self.nat(d, scope, call)),
            1 => pred(self.nat(d, scope, call)),
            2 | 3 => ifz(
                self.nat(d, scope, call),
                self.nat(d, scope, call),
                self.nat(d, scope, call),
            ),
            4 => {
                let x = self.name("x");
                let bound = self.nat(d, scope, call);
                let mut inner = scope.to_vec();
                inner.push(x.clone());
                let_in(x, bound, self.nat(d, &inner, call))
            }
            5 => {
                let x = self.name("y");
                let arg = self.nat(d, scope, call);
                let mut inner = scope.to_vec();
                inner.push(x.clone());
                app(lam(x, Type::Nat, self.nat(d, &inner, call)), arg)
            }
            6 => self.countdown(d, scope),
            7 if self.cfg.unbounded_recursion => self.geometric(d, scope),
            8 => match call {
                Some(c) => c.clone(),
                None => self.leaf(scope),
            },
            _ => self.leaf(scope),
        };
        self.maybe_mark(t)
    }

    fn maybe_mark(&mut self, t: TermRef) -> TermRef {
        if !self.cfg.labels.is_empty() && self.rng.gen_bool(self.cfg.mark_rate) {
            let l = self.cfg.labels.choose(self.rng).expect("nonempty").clone();
            mark(t, l)
        } else {
            t
        }
    }

    /// `(fix λf. λn. ifz n then B else S) k` where `S` may call `f (pred n)`.
    fn countdown(&mut self, depth: usize, scope: &[Name]) -> TermRef {
        let f = self.name("f");
        let n = self.name("n");
        let call = app(var(f.clone()), pred(var(n.clone())));
        let mut inner = scope.to_vec();
        inner.push(n.clone());
        let base = self.nat(depth.min(1), &inner, None);
        let step = self.nat(depth.min(2), &inner, Some(&call));
        let body = lam(n.clone(), Type::Nat, ifz(var(n), base, step));
        let nn = Type::arrow(Type::Nat, Type::Nat);
        let start = num(self.rng.gen_range(0..=self.cfg.max_numeral));
        app(fix(lam(f, nn, body)), start)
    }

    /// `fix λx. ifz dice(r) then A else (op x)` with `op` one of identity,
    /// successor or a conditional: terminates with a probability that
    /// depends on `r`.
    fn geometric(&mut self, depth: usize, scope: &[Name]) -> TermRef {
        let x = self.name("g");
        let mut inner = scope.to_vec();
        inner.push(x.clone());
        let exit = self.nat(depth.min(1), scope, None);
        let again = match self.rng.gen_range(0..3) {
            0 => var(x.clone()),
            1 => succ(var(x.clone())),
            _ => ifz(var(x.clone()), var(x.clone()), num(0)),
        };
        fix(lam(x, Type::Nat, ifz(self.coin(), exit, again)))
    }
}

/// One random closed program of type `nat`.
pub fn random_program(cfg: &GenConfig, rng: &mut impl Rng) -> TermRef {
    let depth = rng.gen_range(1..=cfg.max_depth.max(1));
    let mut g = Gen { cfg, rng, fresh: 0 };
    g.nat(depth, &[], None)
}

/// `n` programs, the `i`-th drawn from stream `i` of `seed`.
pub fn corpus(cfg: &GenConfig, seed: u64, n: usize) -> Vec<TermRef> {
    (0..n as u64)
        .map(|i| random_program(cfg, &mut stream_rng(seed, i)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::machine::{enumerate, Budget, State};
    use crate::syntax::typecheck_closed;
    use num_traits::Zero;

    #[test]
    fn programs_are_closed_and_typed() {
        for cfg in [GenConfig::plain(), GenConfig::labelled(&["a", "b"])] {
            for t in corpus(&cfg, 3, 200) {
                assert_eq!(typecheck_closed(&t), Ok(Type::Nat), "{t}");
            }
        }
        assert!(corpus(&GenConfig::plain(), 3, 200)
            .iter()
            .all(|t| t.labels().is_empty()));
    }

    #[test]
    fn deterministic_in_seed() {
        let cfg = GenConfig::plain();
        assert_eq!(corpus(&cfg, 9, 20), corpus(&cfg, 9, 20));
        assert_ne!(corpus(&cfg, 9, 20), corpus(&cfg, 10, 20));
    }

    #[test]
    fn labelled_programs_enumerate_exhaustively() {
        let budget = Budget {
            max_steps: 100_000,
            max_choice_len: 40,
        };
        for t in corpus(&GenConfig::labelled(&["a", "b"]), 5, 40) {
            let r = enumerate(&State::initial(t.clone()), budget);
            assert!(r.open_mass.is_zero(), "{t}");
        }
    }
}
