//! Formula syntax trees and the prefix text syntax.
//!
//! ```text
//! formula := ("forall" | "exists") NAME ":" formula
//!          | ("not" | "and" | "or" | "implies" | "equiv") "(" formula ("," formula)* ")"
//!          | "groupequiv" "(" NAME "," NAME "," INT "," INT ")"
//!          | NAME "(" term ")"
//! term    := NAME | "#" INT
//! ```

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Term {
    /// A bound variable or a named constant of the grounding.
    Name(String),
    /// A fixed dataset row.
    Row(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Formula {
    Atom { predicate: String, term: Term },
    Not(Box<Formula>),
    And(Vec<Formula>),
    Or(Vec<Formula>),
    Implies(Box<Formula>, Box<Formula>),
    Equiv(Box<Formula>, Box<Formula>),
    ForAll { var: String, body: Box<Formula> },
    Exists { var: String, body: Box<Formula> },
    /// Equivalence of the positive rates predicted for the two values of
    /// a binary `feature`, inside quantile bin `bin` of `bins` (bins cut
    /// on the score computed with `feature` held at its mean).
    GroupEquiv {
        predicate: String,
        feature: String,
        bins: usize,
        bin: usize,
    },
}

impl Formula {
    pub fn atom(predicate: &str, var: &str) -> Self {
        Formula::Atom {
            predicate: predicate.into(),
            term: Term::Name(var.into()),
        }
    }

    pub fn not(f: Formula) -> Self {
        Formula::Not(Box::new(f))
    }

    pub fn implies(a: Formula, b: Formula) -> Self {
        Formula::Implies(Box::new(a), Box::new(b))
    }

    pub fn equiv(a: Formula, b: Formula) -> Self {
        Formula::Equiv(Box::new(a), Box::new(b))
    }

    pub fn forall(var: &str, body: Formula) -> Self {
        Formula::ForAll {
            var: var.into(),
            body: Box::new(body),
        }
    }

    pub fn exists(var: &str, body: Formula) -> Self {
        Formula::Exists {
            var: var.into(),
            body: Box::new(body),
        }
    }

    /// Names used as terms but not bound by an enclosing quantifier. These
    /// must be constants of the grounding.
    pub fn free_names(&self) -> BTreeSet<String> {
        fn walk(f: &Formula, bound: &mut Vec<String>, out: &mut BTreeSet<String>) {
            match f {
                Formula::Atom {
                    term: Term::Name(n), ..
                } => {
                    if !bound.contains(n) {
                        out.insert(n.clone());
                    }
                }
                Formula::Atom { .. } | Formula::GroupEquiv { .. } => {}
                Formula::Not(a) => walk(a, bound, out),
                Formula::And(xs) | Formula::Or(xs) => xs.iter().for_each(|x| walk(x, bound, out)),
                Formula::Implies(a, b) | Formula::Equiv(a, b) => {
                    walk(a, bound, out);
                    walk(b, bound, out);
                }
                Formula::ForAll { var, body } | Formula::Exists { var, body } => {
                    bound.push(var.clone());
                    walk(body, bound, out);
                    bound.pop();
                }
            }
        }
        let mut out = BTreeSet::new();
        walk(self, &mut Vec::new(), &mut out);
        out
    }

    /// Predicate names referenced anywhere in the formula.
    pub fn predicates(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.visit(&mut |f| match f {
            Formula::Atom { predicate, .. } | Formula::GroupEquiv { predicate, .. } => {
                out.insert(predicate.clone());
            }
            _ => {}
        });
        out
    }

    fn visit(&self, f: &mut impl FnMut(&Formula)) {
        f(self);
        match self {
            Formula::Not(a) | Formula::ForAll { body: a, .. } | Formula::Exists { body: a, .. } => a.visit(f),
            Formula::And(xs) | Formula::Or(xs) => xs.iter().for_each(|x| x.visit(f)),
            Formula::Implies(a, b) | Formula::Equiv(a, b) => {
                a.visit(f);
                b.visit(f);
            }
            Formula::Atom { .. } | Formula::GroupEquiv { .. } => {}
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Name(n) => f.write_str(n),
            Term::Row(r) => write!(f, "#{r}"),
        }
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let list = |f: &mut fmt::Formatter<'_>, name: &str, xs: &[&Formula]| {
            write!(f, "{name}(")?;
            for (i, x) in xs.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                write!(f, "{x}")?;
            }
            f.write_str(")")
        };
        match self {
            Formula::Atom { predicate, term } => write!(f, "{predicate}({term})"),
            Formula::Not(a) => list(f, "not", &[a]),
            Formula::And(xs) => list(f, "and", &xs.iter().collect::<Vec<_>>()),
            Formula::Or(xs) => list(f, "or", &xs.iter().collect::<Vec<_>>()),
            Formula::Implies(a, b) => list(f, "implies", &[a, b]),
            Formula::Equiv(a, b) => list(f, "equiv", &[a, b]),
            Formula::ForAll { var, body } => write!(f, "forall {var}: {body}"),
            Formula::Exists { var, body } => write!(f, "exists {var}: {body}"),
            Formula::GroupEquiv {
                predicate,
                feature,
                bins,
                bin,
            } => write!(f, "groupequiv({predicate}, {feature}, {bins}, {bin})"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Name(String),
    Int(usize),
    Hash,
    LParen,
    RParen,
    Comma,
    Colon,
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    line: usize,
    end_column: usize,
}

fn lex(text: &str, line: usize, col0: usize) -> Result<(Vec<(Tok, usize)>, usize)> {
    let chars: Vec<char> = text.chars().collect();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let col = col0 + i;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let single = match c {
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            ',' => Some(Tok::Comma),
            ':' => Some(Tok::Colon),
            '#' => Some(Tok::Hash),
            _ => None,
        };
        if let Some(t) = single {
            toks.push((t, col));
            i += 1;
        } else if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let s: String = chars[start..i].iter().collect();
            let v = s
                .parse()
                .map_err(|_| Error::parse(line, col, format!("integer {s} is too large")))?;
            toks.push((Tok::Int(v), col));
        } else if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_' || chars[i] == '.') {
                i += 1;
            }
            toks.push((Tok::Name(chars[start..i].iter().collect()), col));
        } else {
            return Err(Error::parse(line, col, format!("unexpected character '{c}'")));
        }
    }
    Ok((toks, col0 + chars.len()))
}

fn describe(t: Option<&Tok>) -> String {
    match t {
        None => "end of input".into(),
        Some(Tok::Name(n)) => format!("'{n}'"),
        Some(Tok::Int(v)) => format!("'{v}'"),
        Some(Tok::Hash) => "'#'".into(),
        Some(Tok::LParen) => "'('".into(),
        Some(Tok::RParen) => "')'".into(),
        Some(Tok::Comma) => "','".into(),
        Some(Tok::Colon) => "':'".into(),
    }
}

impl Parser {
    fn column(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end_column, |t| t.1)
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.0)
    }

    fn err(&self, message: impl Into<String>) -> Error {
        Error::parse(self.line, self.column(), message)
    }

    fn expect(&mut self, want: Tok) -> Result<()> {
        if self.peek() == Some(&want) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(format!("expected {}, found {}", describe(Some(&want)), describe(self.peek()))))
        }
    }

    fn name(&mut self) -> Result<String> {
        match self.peek() {
            Some(Tok::Name(n)) => {
                let n = n.clone();
                self.pos += 1;
                Ok(n)
            }
            t => Err(self.err(format!("expected a name, found {}", describe(t)))),
        }
    }

    fn int(&mut self) -> Result<usize> {
        match self.peek() {
            Some(Tok::Int(v)) => {
                let v = *v;
                self.pos += 1;
                Ok(v)
            }
            t => Err(self.err(format!("expected an integer, found {}", describe(t)))),
        }
    }

    fn args(&mut self) -> Result<Vec<Formula>> {
        self.expect(Tok::LParen)?;
        let mut out = vec![self.formula()?];
        while self.peek() == Some(&Tok::Comma) {
            self.pos += 1;
            out.push(self.formula()?);
        }
        self.expect(Tok::RParen)?;
        Ok(out)
    }

    fn formula(&mut self) -> Result<Formula> {
        let col = self.column();
        let head = self.name()?;
        let arity = |p: &Parser, xs: &Vec<Formula>, lo: usize, hi: usize| -> Result<()> {
            if xs.len() < lo || xs.len() > hi {
                let want = if lo == hi {
                    format!("{lo}")
                } else {
                    format!("at least {lo}")
                };
                Err(Error::parse(
                    p.line,
                    col,
                    format!("'{head}' takes {want} arguments, got {}", xs.len()),
                ))
            } else {
                Ok(())
            }
        };
        match head.as_str() {
            "forall" | "exists" => {
                let var = self.name()?;
                self.expect(Tok::Colon)?;
                let body = Box::new(self.formula()?);
                Ok(if head == "forall" {
                    Formula::ForAll { var, body }
                } else {
                    Formula::Exists { var, body }
                })
            }
            "not" => {
                let mut xs = self.args()?;
                arity(self, &xs, 1, 1)?;
                Ok(Formula::Not(Box::new(xs.remove(0))))
            }
            "and" | "or" => {
                let xs = self.args()?;
                arity(self, &xs, 2, usize::MAX)?;
                Ok(if head == "and" {
                    Formula::And(xs)
                } else {
                    Formula::Or(xs)
                })
            }
            "implies" | "equiv" => {
                let mut xs = self.args()?;
                arity(self, &xs, 2, 2)?;
                let b = Box::new(xs.pop().unwrap());
                let a = Box::new(xs.pop().unwrap());
                Ok(if head == "implies" {
                    Formula::Implies(a, b)
                } else {
                    Formula::Equiv(a, b)
                })
            }
            "groupequiv" => {
                self.expect(Tok::LParen)?;
                let predicate = self.name()?;
                self.expect(Tok::Comma)?;
                let feature = self.name()?;
                self.expect(Tok::Comma)?;
                let bins_col = self.column();
                let bins = self.int()?;
                self.expect(Tok::Comma)?;
                let bin_col = self.column();
                let bin = self.int()?;
                self.expect(Tok::RParen)?;
                if bins < 2 {
                    return Err(Error::parse(self.line, bins_col, "groupequiv needs at least 2 bins"));
                }
                if bin >= bins {
                    return Err(Error::parse(self.line, bin_col, format!("bin {bin} out of range for {bins} bins")));
                }
                Ok(Formula::GroupEquiv {
                    predicate,
                    feature,
                    bins,
                    bin,
                })
            }
            _ => {
                self.expect(Tok::LParen)?;
                let term = match self.peek() {
                    Some(Tok::Hash) => {
                        self.pos += 1;
                        Term::Row(self.int()?)
                    }
                    _ => Term::Name(self.name()?),
                };
                if self.peek() == Some(&Tok::Comma) {
                    return Err(self.err(format!("predicate '{head}' takes a single term")));
                }
                self.expect(Tok::RParen)?;
                Ok(Formula::Atom { predicate: head, term })
            }
        }
    }
}

/// Parses one formula; `line` and `column` locate `text` in its source for
/// error messages.
pub fn parse_formula_at(text: &str, line: usize, column: usize) -> Result<Formula> {
    let (toks, end_column) = lex(text, line, column)?;
    let mut p = Parser {
        toks,
        pos: 0,
        line,
        end_column,
    };
    let f = p.formula()?;
    if p.pos != p.toks.len() {
        return Err(p.err(format!("unexpected {} after the formula", describe(p.peek()))));
    }
    Ok(f)
}

pub fn parse_formula(text: &str) -> Result<Formula> {
    parse_formula_at(text, 1, 1)
}

impl std::str::FromStr for Formula {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_formula(s)
    }
}
