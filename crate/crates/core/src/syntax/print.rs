//! Concrete syntax printer. Output always reparses to the same tree.

use std::fmt;

use super::{Term, Type};

impl fmt::Display for Type {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Type::Nat => f.write_str("nat"),
            Type::Arrow(dom, cod) => {
                if matches!(**dom, Type::Arrow(..)) {
                    write!(f, "({dom}) -> {cod}")
                } else {
                    write!(f, "{dom} -> {cod}")
                }
            }
        }
    }
}

// Precedence levels: binders extend as far right as possible, then
// application, then prefix operators, then atoms.
const BINDER: u8 = 0;
const APP: u8 = 1;
const PREFIX: u8 = 2;
const ATOM: u8 = 3;

fn level(t: &Term) -> u8 {
    match t {
        Term::Abs { .. } | Term::Let { .. } | Term::Ifz { .. } => BINDER,
        Term::App(..) => APP,
        Term::Succ(_) | Term::Pred(_) | Term::Fix(_) | Term::Mark(..) => PREFIX,
        Term::Num(_) | Term::Var(_) | Term::Dice(_) => ATOM,
    }
}

fn write_at(f: &mut fmt::Formatter<'_>, t: &Term, min: u8) -> fmt::Result {
    if level(t) < min {
        write!(f, "(")?;
        write_term(f, t)?;
        write!(f, ")")
    } else {
        write_term(f, t)
    }
}

fn write_term(f: &mut fmt::Formatter<'_>, t: &Term) -> fmt::Result {
    match t {
        Term::Num(n) => write!(f, "{n}"),
        Term::Var(x) => write!(f, "{x}"),
        Term::Dice(r) => write!(f, "dice({}/{})", r.numer(), r.denom()),
        Term::Succ(a) => {
            f.write_str("succ ")?;
            write_at(f, a, PREFIX)
        }
        Term::Pred(a) => {
            f.write_str("pred ")?;
            write_at(f, a, PREFIX)
        }
        Term::Fix(a) => {
            f.write_str("fix ")?;
            write_at(f, a, PREFIX)
        }
        Term::Mark(a, l) => {
            write!(f, "mark[{l}] ")?;
            write_at(f, a, PREFIX)
        }
        Term::App(a, b) => {
            write_at(f, a, APP)?;
            f.write_str(" ")?;
            write_at(f, b, ATOM)
        }
        Term::Abs { var, ty, body } => {
            write!(f, "\\{var}:{ty}. ")?;
            write_term(f, body)
        }
        Term::Let { var, bound, body } => {
            write!(f, "let {var} = ")?;
            write_term(f, bound)?;
            f.write_str(" in ")?;
            write_term(f, body)
        }
        Term::Ifz { cond, zero, succ } => {
            f.write_str("ifz ")?;
            write_term(f, cond)?;
            f.write_str(" then ")?;
            write_term(f, zero)?;
            f.write_str(" else ")?;
            write_term(f, succ)
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_term(f, self)
    }
}
