//! Hand-written lexer and recursive-descent parser for the concrete syntax.
//!
//! ```text
//! expr   ::= '\' ident ':' type '.' expr
//!          | 'let' ident '=' expr 'in' expr
//!          | 'ifz' expr 'then' expr 'else' expr
//!          | app
//! app    ::= prefix atom*
//! prefix ::= ('succ' | 'pred' | 'fix' | 'mark' '[' ident ']') (prefix | binder)
//!          | atom
//! atom   ::= numeral | ident | 'dice' '(' numeral ('/' numeral)? ')' | '(' expr ')'
//! type   ::= 'nat' | type '->' type | '(' type ')'
//! ```
//!
//! `#` starts a comment running to the end of the line.

use std::sync::Arc;

use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::Zero;
use thiserror::Error;

use super::{is_probability, Label, Name, Term, TermRef, Type};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("{line}:{col}: {msg}")]
pub struct SyntaxError {
    pub line: usize,
    pub col: usize,
    pub msg: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Num(BigUint),
    Backslash,
    Colon,
    Dot,
    Arrow,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Equals,
    Slash,
    Eof,
}

const KEYWORDS: &[&str] = &[
    "succ", "pred", "let", "in", "ifz", "then", "else", "fix", "mark", "dice", "nat",
];

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

fn lex(src: &str) -> Result<Vec<Token>, SyntaxError> {
    let mut out = Vec::new();
    let chars: Vec<char> = src.chars().collect();
    let (mut i, mut line, mut col) = (0, 1, 1);
    while i < chars.len() {
        let c = chars[i];
        let (tl, tc) = (line, col);
        let push = |out: &mut Vec<Token>, tok| {
            out.push(Token {
                tok,
                line: tl,
                col: tc,
            })
        };
        match c {
            '\n' => {
                i += 1;
                line += 1;
                col = 1;
                continue;
            }
            c if c.is_whitespace() => {}
            '#' => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
                continue;
            }
            '\\' | 'λ' => push(&mut out, Tok::Backslash),
            ':' => push(&mut out, Tok::Colon),
            '.' => push(&mut out, Tok::Dot),
            '(' => push(&mut out, Tok::LParen),
            ')' => push(&mut out, Tok::RParen),
            '[' => push(&mut out, Tok::LBracket),
            ']' => push(&mut out, Tok::RBracket),
            '=' => push(&mut out, Tok::Equals),
            '/' => push(&mut out, Tok::Slash),
            '-' if chars.get(i + 1) == Some(&'>') => {
                push(&mut out, Tok::Arrow);
                i += 2;
                col += 2;
                continue;
            }
            c if c.is_ascii_digit() => {
                let start = i;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
                let digits: String = chars[start..i].iter().collect();
                let n = digits.parse::<BigUint>().expect("ascii digits");
                push(&mut out, Tok::Num(n));
                col += i - start;
                continue;
            }
            c if c.is_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len()
                    && (chars[i].is_alphanumeric() || chars[i] == '_' || chars[i] == '\'')
                {
                    i += 1;
                }
                let word: String = chars[start..i].iter().collect();
                push(&mut out, Tok::Ident(word));
                col += i - start;
                continue;
            }
            other => {
                return Err(SyntaxError {
                    line,
                    col,
                    msg: format!("unexpected character `{other}`"),
                })
            }
        }
        i += 1;
        col += 1;
    }
    out.push(Token {
        tok: Tok::Eof,
        line,
        col,
    });
    Ok(out)
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error<T>(&self, msg: impl Into<String>) -> Result<T, SyntaxError> {
        let t = &self.toks[self.pos];
        Err(SyntaxError {
            line: t.line,
            col: t.col,
            msg: msg.into(),
        })
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(w) if w == kw)
    }

    fn expect_kw(&mut self, kw: &str) -> Result<(), SyntaxError> {
        if self.is_kw(kw) {
            self.bump();
            Ok(())
        } else {
            self.error(format!("expected `{kw}`, found {}", describe(self.peek())))
        }
    }

    fn expect(&mut self, tok: Tok) -> Result<(), SyntaxError> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            self.error(format!(
                "expected {}, found {}",
                describe(&tok),
                describe(self.peek())
            ))
        }
    }

    fn ident(&mut self) -> Result<String, SyntaxError> {
        match self.peek().clone() {
            Tok::Ident(w) if !KEYWORDS.contains(&w.as_str()) => {
                self.bump();
                Ok(w)
            }
            other => self.error(format!("expected identifier, found {}", describe(&other))),
        }
    }

    fn ty(&mut self) -> Result<Type, SyntaxError> {
        let dom = match self.peek() {
            Tok::LParen => {
                self.bump();
                let t = self.ty()?;
                self.expect(Tok::RParen)?;
                t
            }
            _ if self.is_kw("nat") => {
                self.bump();
                Type::Nat
            }
            other => return self.error(format!("expected type, found {}", describe(other))),
        };
        if *self.peek() == Tok::Arrow {
            self.bump();
            Ok(Type::arrow(dom, self.ty()?))
        } else {
            Ok(dom)
        }
    }

    fn starts_binder(&self) -> bool {
        *self.peek() == Tok::Backslash || self.is_kw("let") || self.is_kw("ifz")
    }

    fn starts_atom(&self) -> bool {
        match self.peek() {
            Tok::Num(_) | Tok::LParen => true,
            Tok::Ident(w) => w == "dice" || !KEYWORDS.contains(&w.as_str()),
            _ => false,
        }
    }

    fn expr(&mut self) -> Result<TermRef, SyntaxError> {
        if *self.peek() == Tok::Backslash {
            self.bump();
            let x = self.ident()?;
            self.expect(Tok::Colon)?;
            let ty = self.ty()?;
            self.expect(Tok::Dot)?;
            let body = self.expr()?;
            return Ok(Arc::new(Term::Abs {
                var: Name::new(x),
                ty,
                body,
            }));
        }
        if self.is_kw("let") {
            self.bump();
            let x = self.ident()?;
            self.expect(Tok::Equals)?;
            let bound = self.expr()?;
            self.expect_kw("in")?;
            let body = self.expr()?;
            return Ok(Arc::new(Term::Let {
                var: Name::new(x),
                bound,
                body,
            }));
        }
        if self.is_kw("ifz") {
            self.bump();
            let cond = self.expr()?;
            self.expect_kw("then")?;
            let zero = self.expr()?;
            self.expect_kw("else")?;
            let succ = self.expr()?;
            return Ok(Arc::new(Term::Ifz { cond, zero, succ }));
        }
        let mut head = self.prefix()?;
        while self.starts_atom() {
            let arg = self.atom()?;
            head = Arc::new(Term::App(head, arg));
        }
        Ok(head)
    }

    fn prefix(&mut self) -> Result<TermRef, SyntaxError> {
        let wrap: Box<dyn Fn(TermRef) -> Term> = if self.is_kw("succ") {
            Box::new(Term::Succ)
        } else if self.is_kw("pred") {
            Box::new(Term::Pred)
        } else if self.is_kw("fix") {
            Box::new(Term::Fix)
        } else if self.is_kw("mark") {
            self.bump();
            self.expect(Tok::LBracket)?;
            let l = Label::new(self.ident()?);
            if *self.peek() != Tok::RBracket {
                return self.error(format!("expected `]`, found {}", describe(self.peek())));
            }
            // Leave `]` as the current token so the common bump below consumes it.
            Box::new(move |t| Term::Mark(t, l.clone()))
        } else {
            return self.atom();
        };
        self.bump();
        let arg = if self.starts_binder() {
            self.expr()?
        } else {
            self.prefix()?
        };
        Ok(Arc::new(wrap(arg)))
    }

    fn atom(&mut self) -> Result<TermRef, SyntaxError> {
        match self.peek().clone() {
            Tok::Num(n) => {
                self.bump();
                Ok(Arc::new(Term::Num(n)))
            }
            Tok::LParen => {
                self.bump();
                let t = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(t)
            }
            Tok::Ident(w) if w == "dice" => {
                self.bump();
                self.expect(Tok::LParen)?;
                let num = self.numeral()?;
                let den = if *self.peek() == Tok::Slash {
                    self.bump();
                    self.numeral()?
                } else {
                    BigUint::from(1u32)
                };
                if den.is_zero() {
                    return self.error("dice parameter has zero denominator");
                }
                let r = BigRational::new(num.into(), den.into());
                if !is_probability(&r) {
                    return self.error(format!("dice parameter {r} outside [0,1]"));
                }
                self.expect(Tok::RParen)?;
                Ok(Arc::new(Term::Dice(r)))
            }
            Tok::Ident(w) if !KEYWORDS.contains(&w.as_str()) => {
                self.bump();
                Ok(Arc::new(Term::Var(Name::new(w))))
            }
            other => self.error(format!("expected a term, found {}", describe(&other))),
        }
    }

    fn numeral(&mut self) -> Result<BigUint, SyntaxError> {
        match self.peek().clone() {
            Tok::Num(n) => {
                self.bump();
                Ok(n)
            }
            other => self.error(format!("expected numeral, found {}", describe(&other))),
        }
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Ident(w) => format!("`{w}`"),
        Tok::Num(n) => format!("`{n}`"),
        Tok::Backslash => "`\\`".into(),
        Tok::Colon => "`:`".into(),
        Tok::Dot => "`.`".into(),
        Tok::Arrow => "`->`".into(),
        Tok::LParen => "`(`".into(),
        Tok::RParen => "`)`".into(),
        Tok::LBracket => "`[`".into(),
        Tok::RBracket => "`]`".into(),
        Tok::Equals => "`=`".into(),
        Tok::Slash => "`/`".into(),
        Tok::Eof => "end of input".into(),
    }
}

/// Parses a single term; the whole input must be consumed.
pub fn parse(src: &str) -> Result<TermRef, SyntaxError> {
    let mut p = Parser {
        toks: lex(src)?,
        pos: 0,
    };
    let t = p.expr()?;
    if *p.peek() != Tok::Eof {
        return p.error(format!("unexpected {} after term", describe(p.peek())));
    }
    Ok(t)
}

pub fn parse_type(src: &str) -> Result<Type, SyntaxError> {
    let mut p = Parser {
        toks: lex(src)?,
        pos: 0,
    };
    let t = p.ty()?;
    if *p.peek() != Tok::Eof {
        return p.error(format!("unexpected {} after type", describe(p.peek())));
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::build::*;
    use crate::syntax::make_mq;

    #[test]
    fn dice_literal() {
        assert_eq!(parse("dice(1/2)").unwrap(), dice_ratio(1, 2));
        assert_eq!(parse("dice(1)").unwrap(), dice_ratio(1, 1));
        assert_eq!(parse("dice(2/4)").unwrap(), dice_ratio(1, 2));
    }

    #[test]
    fn lambda_literal() {
        assert_eq!(
            parse("\\x:nat. succ x").unwrap(),
            lam("x", Type::Nat, succ(var("x")))
        );
    }

    #[test]
    fn application_is_left_associative() {
        assert_eq!(
            parse("f x y").unwrap(),
            app(app(var("f"), var("x")), var("y"))
        );
    }

    #[test]
    fn arrow_is_right_associative() {
        let t = parse_type("nat -> nat -> nat").unwrap();
        assert_eq!(t, Type::arrow(Type::Nat, Type::arrow(Type::Nat, Type::Nat)));
        let t = parse_type("(nat -> nat) -> nat").unwrap();
        assert_eq!(t, Type::arrow(Type::arrow(Type::Nat, Type::Nat), Type::Nat));
    }

    #[test]
    fn mq_source_text() {
        let src = "
            # M_q at q = 3/4
            fix \\f:nat -> nat. \\x:nat.
              ifz dice(3/4)
              then ifz f x then (ifz f x then 0 else fix (\\x:nat. x)) else fix (\\x:nat. x)
              else ifz x then (ifz x then 0 else fix (\\x:nat. x)) else fix (\\x:nat. x)
        ";
        assert_eq!(
            parse(src).unwrap(),
            make_mq(BigRational::new(3.into(), 4.into()))
        );
    }

    #[test]
    fn mark_and_let() {
        assert_eq!(parse("mark[l] 0").unwrap(), mark(num(0), "l"));
        assert_eq!(
            parse("let y = dice(1/3) in pred y").unwrap(),
            let_in("y", dice_ratio(1, 3), pred(var("y")))
        );
    }

    #[test]
    fn errors_carry_position() {
        let e = parse("dice(3/2)").unwrap_err();
        assert_eq!((e.line, e.col), (1, 9));
        assert!(e.msg.contains("outside"));
        let e = parse("\\x:nat.\n  (x").unwrap_err();
        assert_eq!(e.line, 2);
        assert!(parse("succ").is_err());
        assert!(parse("0 )").is_err());
        assert!(parse("let in = 0 in 0").is_err());
        assert!(parse("x $").is_err());
    }

    #[test]
    fn mq_round_trips() {
        for (a, b) in [(0, 1), (1, 2), (19, 20)] {
            let t = make_mq(BigRational::new(a.into(), b.into()));
            assert_eq!(parse(&t.to_string()).unwrap(), t);
        }
    }
}
