//! Polynomials in noncommuting variables `x1..xm` and lifted constants
//! `c1..ck` with complex coefficients.
//!
//! Grammar: sums and differences of products; juxtaposition multiplies
//! (`x1x2`), as does `*`; `^n` takes a nonnegative integer power; numbers may
//! carry an `i` suffix (`0.5i`) and a bare `i` is the imaginary unit.

use std::collections::BTreeMap;
use std::fmt;

use num_complex::Complex64;

use crate::error::{config, Result};

/// A letter of a monomial, 0-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Letter {
    X(usize),
    C(usize),
}

impl fmt::Display for Letter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Letter::X(i) => write!(f, "x{}", i + 1),
            Letter::C(i) => write!(f, "c{}", i + 1),
        }
    }
}

pub type Word = Vec<Letter>;

/// Expanded polynomial: words mapped to nonzero coefficients, in word order.
#[derive(Debug, Clone, PartialEq)]
pub struct NcPoly {
    pub terms: Vec<(Complex64, Word)>,
    pub source: String,
}

impl NcPoly {
    pub fn parse(source: &str) -> Result<NcPoly> {
        let tokens = tokenize(source)?;
        let mut p = Parser { tokens, pos: 0, source };
        let map = p.sum()?;
        if p.pos != p.tokens.len() {
            return Err(p.error("unexpected trailing input"));
        }
        Ok(NcPoly::from_map(map, source.to_string()))
    }

    pub fn from_terms(terms: Vec<(Complex64, Word)>) -> NcPoly {
        let mut map = BTreeMap::new();
        for (c, w) in terms {
            *map.entry(w).or_insert(Complex64::new(0.0, 0.0)) += c;
        }
        let mut p = NcPoly::from_map(map, String::new());
        p.source = p.to_string();
        p
    }

    fn from_map(map: BTreeMap<Word, Complex64>, source: String) -> NcPoly {
        NcPoly {
            terms: map.into_iter().filter(|(_, c)| c.norm() != 0.0).map(|(w, c)| (c, w)).collect(),
            source,
        }
    }

    pub fn degree(&self) -> usize {
        self.terms.iter().map(|(_, w)| w.len()).max().unwrap_or(0)
    }

    /// Largest 1-based generator index used, 0 when none.
    pub fn max_generator(&self) -> usize {
        self.letters()
            .filter_map(|l| match l {
                Letter::X(i) => Some(i + 1),
                Letter::C(_) => None,
            })
            .max()
            .unwrap_or(0)
    }

    /// Largest 1-based constant index used, 0 when none.
    pub fn max_constant(&self) -> usize {
        self.letters()
            .filter_map(|l| match l {
                Letter::C(i) => Some(i + 1),
                Letter::X(_) => None,
            })
            .max()
            .unwrap_or(0)
    }

    fn letters(&self) -> impl Iterator<Item = Letter> + '_ {
        self.terms.iter().flat_map(|(_, w)| w.iter().copied())
    }
}

impl fmt::Display for NcPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (k, (c, w)) in self.terms.iter().enumerate() {
            if k > 0 {
                write!(f, " + ")?;
            }
            match (c.re, c.im) {
                (re, im) if im == 0.0 => write!(f, "({re:?})")?,
                (re, im) if re == 0.0 => write!(f, "({im:?}i)")?,
                (re, im) => write!(f, "({re:?} + {im:?}i)")?,
            }
            for l in w {
                write!(f, "{l}")?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Imag(f64),
    Letter(Letter),
    Plus,
    Minus,
    Star,
    Caret,
    LParen,
    RParen,
}

fn tokenize(src: &str) -> Result<Vec<(Tok, usize)>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    let err = |col: usize, msg: &str| config(format!("polynomial `{src}`, column {}: {msg}", col + 1));
    while i < chars.len() {
        let c = chars[i];
        let start = i;
        match c {
            ' ' | '\t' => {
                i += 1;
                continue;
            }
            '+' => out.push((Tok::Plus, start)),
            '-' | '\u{2212}' => out.push((Tok::Minus, start)),
            '*' => out.push((Tok::Star, start)),
            '^' => out.push((Tok::Caret, start)),
            '(' => out.push((Tok::LParen, start)),
            ')' => out.push((Tok::RParen, start)),
            '0'..='9' | '.' => {
                while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                    i += 1;
                }
                if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                    let mut j = i + 1;
                    if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                        j += 1;
                    }
                    if j < chars.len() && chars[j].is_ascii_digit() {
                        i = j;
                        while i < chars.len() && chars[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let text: String = chars[start..i].iter().collect();
                let v: f64 = text.parse().map_err(|_| err(start, "malformed number"))?;
                // An `i` directly after a number that is not a variable prefix.
                if i < chars.len() && chars[i] == 'i' && !chars.get(i + 1).is_some_and(|c| c.is_ascii_alphanumeric()) {
                    i += 1;
                    out.push((Tok::Imag(v), start));
                } else {
                    out.push((Tok::Num(v), start));
                }
                continue;
            }
            'x' | 'c' => {
                i += 1;
                let d0 = i;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
                let digits: String = chars[d0..i].iter().collect();
                let k: usize = digits
                    .parse()
                    .ok()
                    .filter(|k| *k >= 1)
                    .ok_or_else(|| err(start, "variables are written x1, x2, … or c1, c2, …"))?;
                let l = if c == 'x' { Letter::X(k - 1) } else { Letter::C(k - 1) };
                out.push((Tok::Letter(l), start));
                continue;
            }
            'i' => out.push((Tok::Imag(1.0), start)),
            _ => return Err(err(start, &format!("unexpected character `{c}`"))),
        }
        i += 1;
    }
    Ok(out)
}

type Map = BTreeMap<Word, Complex64>;

fn scalar(c: Complex64) -> Map {
    BTreeMap::from([(Vec::new(), c)])
}

fn product(a: &Map, b: &Map) -> Map {
    let mut out = Map::new();
    for (wa, ca) in a {
        for (wb, cb) in b {
            let w: Word = wa.iter().chain(wb).copied().collect();
            *out.entry(w).or_insert(Complex64::new(0.0, 0.0)) += ca * cb;
        }
    }
    out
}

struct Parser<'s> {
    tokens: Vec<(Tok, usize)>,
    pos: usize,
    source: &'s str,
}

impl Parser<'_> {
    fn error(&self, msg: &str) -> crate::Error {
        let col = self.tokens.get(self.pos).map_or(self.source.chars().count(), |t| t.1);
        config(format!("polynomial `{}`, column {}: {msg}", self.source, col + 1))
    }

    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos).map(|t| &t.0)
    }

    fn sum(&mut self) -> Result<Map> {
        let mut acc = self.product()?;
        while let Some(op) = self.peek().cloned() {
            let sign = match op {
                Tok::Plus => 1.0,
                Tok::Minus => -1.0,
                _ => break,
            };
            self.pos += 1;
            for (w, c) in self.product()? {
                *acc.entry(w).or_insert(Complex64::new(0.0, 0.0)) += c * sign;
            }
        }
        Ok(acc)
    }

    fn product(&mut self) -> Result<Map> {
        let mut acc = self.unary()?;
        loop {
            match self.peek() {
                Some(Tok::Star) => self.pos += 1,
                Some(Tok::Num(_) | Tok::Imag(_) | Tok::Letter(_) | Tok::LParen) => {}
                _ => break,
            }
            let rhs = self.unary()?;
            acc = product(&acc, &rhs);
        }
        Ok(acc)
    }

    fn unary(&mut self) -> Result<Map> {
        if self.peek() == Some(&Tok::Minus) {
            self.pos += 1;
            let inner = self.unary()?;
            return Ok(inner.into_iter().map(|(w, c)| (w, -c)).collect());
        }
        if self.peek() == Some(&Tok::Plus) {
            self.pos += 1;
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Map> {
        let base = self.primary()?;
        if self.peek() != Some(&Tok::Caret) {
            return Ok(base);
        }
        self.pos += 1;
        let n = match self.peek() {
            Some(Tok::Num(v)) if v.fract() == 0.0 && *v >= 0.0 && *v <= 16.0 => *v as u32,
            _ => return Err(self.error("exponent must be a small nonnegative integer")),
        };
        self.pos += 1;
        let mut acc = scalar(Complex64::new(1.0, 0.0));
        for _ in 0..n {
            acc = product(&acc, &base);
        }
        Ok(acc)
    }

    fn primary(&mut self) -> Result<Map> {
        let tok = self.peek().cloned().ok_or_else(|| self.error("unexpected end of input"))?;
        self.pos += 1;
        match tok {
            Tok::Num(v) => Ok(scalar(Complex64::new(v, 0.0))),
            Tok::Imag(v) => Ok(scalar(Complex64::new(0.0, v))),
            Tok::Letter(l) => Ok(BTreeMap::from([(vec![l], Complex64::new(1.0, 0.0))])),
            Tok::LParen => {
                let inner = self.sum()?;
                if self.peek() != Some(&Tok::RParen) {
                    return Err(self.error("expected `)`"));
                }
                self.pos += 1;
                Ok(inner)
            }
            _ => {
                self.pos -= 1;
                Err(self.error("expected a number, variable or `(`"))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn commutator_expands_to_two_words() {
        let p = NcPoly::parse("x1x2 - x2x1 - x3").unwrap();
        assert_eq!(
            p.terms,
            vec![
                (c(1.0, 0.0), vec![Letter::X(0), Letter::X(1)]),
                (c(-1.0, 0.0), vec![Letter::X(1), Letter::X(0)]),
                (c(-1.0, 0.0), vec![Letter::X(2)]),
            ]
        );
        assert_eq!(p.degree(), 2);
        assert_eq!(p.max_generator(), 3);
    }

    #[test]
    fn products_keep_their_order() {
        let p = NcPoly::parse("(x1 + x2)^2").unwrap();
        assert_eq!(p.terms.len(), 4);
        let q = NcPoly::parse("x1*x1 + x1 x2 + x2x1 + x2^2").unwrap();
        assert_eq!(p.terms, q.terms);
    }

    #[test]
    fn imaginary_and_constant_letters() {
        let p = NcPoly::parse("0.5i c1 - 2x1 + i").unwrap();
        assert_eq!(
            p.terms,
            vec![
                (c(0.0, 1.0), vec![]),
                (c(-2.0, 0.0), vec![Letter::X(0)]),
                (c(0.0, 0.5), vec![Letter::C(0)]),
            ]
        );
        assert_eq!(p.max_constant(), 1);
    }

    #[test]
    fn cancellation_removes_terms() {
        assert!(NcPoly::parse("x1x2 - x1x2").unwrap().terms.is_empty());
    }

    #[test]
    fn malformed_input_is_rejected() {
        for bad in ["x0", "x1 +", "y1", "x1^x2", "(x1"] {
            assert!(NcPoly::parse(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn display_round_trips() {
        let p = NcPoly::parse("2x1x2 - 0.25i x3 + (1 + 2i)c2").unwrap();
        let q = NcPoly::parse(&p.to_string()).unwrap();
        assert_eq!(p.terms, q.terms);
    }
}
