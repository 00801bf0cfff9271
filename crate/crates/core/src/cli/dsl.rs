//! Kernel specification language.
//!
//! ```text
//! expr   := term ('+' term)*
//! term   := factor ('*' factor)*
//! factor := kernel '(' args ')' | '(' expr ')'
//! kernel := se | poly2 | sdof | sw | swneg
//! col    := IDENT | cos2 '(' IDENT ')' | neg '(' IDENT ')'
//! ```
//!
//! `se` and `poly2` take one or more columns, `sdof` exactly one, and
//! `sw`/`swneg` take a column, an optional transform name and a switch tag:
//! `sw(cos2(theta), S)` and `sw(theta, cos2, S)` are the same leaf.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result, Span};
use crate::kernels::FeatureTransform;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColRef {
    pub column: String,
    pub transform: FeatureTransform,
}

impl fmt::Display for ColRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.transform.name() {
            Some(t) => write!(f, "{t}({})", self.column),
            None => f.write_str(&self.column),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LeafSpec {
    Se(Vec<ColRef>),
    Poly2(Vec<ColRef>),
    Sdof(ColRef),
    Switch { input: ColRef, tag: String, negated: bool },
}

/// Parse tree of a kernel specification.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum KernelSpec {
    Sum(Vec<KernelSpec>),
    Product(Vec<KernelSpec>),
    Leaf(LeafSpec),
}

impl KernelSpec {
    pub fn leaves(&self) -> Vec<&LeafSpec> {
        let mut out = Vec::new();
        self.collect(&mut out);
        out
    }

    fn collect<'a>(&'a self, out: &mut Vec<&'a LeafSpec>) {
        match self {
            KernelSpec::Sum(c) | KernelSpec::Product(c) => c.iter().for_each(|k| k.collect(out)),
            KernelSpec::Leaf(l) => out.push(l),
        }
    }
}

fn join(f: &mut fmt::Formatter<'_>, cols: &[ColRef]) -> fmt::Result {
    for (i, c) in cols.iter().enumerate() {
        if i > 0 {
            f.write_str(", ")?;
        }
        write!(f, "{c}")?;
    }
    Ok(())
}

impl fmt::Display for LeafSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LeafSpec::Se(c) => {
                f.write_str("se(")?;
                join(f, c)?;
                f.write_str(")")
            }
            LeafSpec::Poly2(c) => {
                f.write_str("poly2(")?;
                join(f, c)?;
                f.write_str(")")
            }
            LeafSpec::Sdof(c) => write!(f, "sdof({c})"),
            LeafSpec::Switch { input, tag, negated } => {
                write!(f, "{}({input}, {tag})", if *negated { "swneg" } else { "sw" })
            }
        }
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelSpec::Leaf(l) => write!(f, "{l}"),
            KernelSpec::Sum(children) => {
                for (i, c) in children.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" + ")?;
                    }
                    match c {
                        KernelSpec::Sum(_) => write!(f, "({c})")?,
                        _ => write!(f, "{c}")?,
                    }
                }
                Ok(())
            }
            KernelSpec::Product(children) => {
                for (i, c) in children.iter().enumerate() {
                    if i > 0 {
                        f.write_str("*")?;
                    }
                    match c {
                        KernelSpec::Leaf(_) => write!(f, "{c}")?,
                        _ => write!(f, "({c})")?,
                    }
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    LParen,
    RParen,
    Comma,
    Plus,
    Star,
    End,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "'{s}'"),
            Tok::LParen => f.write_str("'('"),
            Tok::RParen => f.write_str("')'"),
            Tok::Comma => f.write_str("','"),
            Tok::Plus => f.write_str("'+'"),
            Tok::Star => f.write_str("'*'"),
            Tok::End => f.write_str("end of input"),
        }
    }
}

fn parse_err(span: Span, message: impl Into<String>) -> Error {
    Error::Parse { span, message: message.into() }
}

fn lex(text: &str) -> Result<Vec<(Tok, Span)>> {
    let mut out = Vec::new();
    let (mut line, mut column) = (1, 1);
    let mut chars = text.chars().peekable();
    while let Some(&c) = chars.peek() {
        let span = Span { line, column };
        if c == '\n' {
            chars.next();
            line += 1;
            column = 1;
            continue;
        }
        if c.is_whitespace() {
            chars.next();
            column += 1;
            continue;
        }
        let single = match c {
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            ',' => Some(Tok::Comma),
            '+' => Some(Tok::Plus),
            '*' => Some(Tok::Star),
            _ => None,
        };
        if let Some(t) = single {
            chars.next();
            column += 1;
            out.push((t, span));
            continue;
        }
        if c.is_alphanumeric() || c == '_' || c == '.' || c == '-' {
            let mut ident = String::new();
            while let Some(&d) = chars.peek() {
                if d.is_alphanumeric() || d == '_' || d == '.' || d == '-' {
                    ident.push(d);
                    chars.next();
                    column += 1;
                } else {
                    break;
                }
            }
            out.push((Tok::Ident(ident), span));
            continue;
        }
        return Err(parse_err(span, format!("unexpected character '{c}'")));
    }
    out.push((Tok::End, Span { line, column }));
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, Span)>,
    pos: usize,
    columns: Option<Vec<String>>,
    switches: BTreeMap<String, ColRef>,
}

impl Parser {
    fn peek(&self) -> &(Tok, Span) {
        &self.toks[self.pos]
    }

    fn next(&mut self) -> (Tok, Span) {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, want: Tok) -> Result<Span> {
        let (t, span) = self.next();
        if t == want {
            Ok(span)
        } else {
            Err(parse_err(span, format!("expected {want}, found {t}")))
        }
    }

    fn ident(&mut self, what: &str) -> Result<(String, Span)> {
        match self.next() {
            (Tok::Ident(s), span) => Ok((s, span)),
            (t, span) => Err(parse_err(span, format!("expected {what}, found {t}"))),
        }
    }

    fn expr(&mut self) -> Result<KernelSpec> {
        let mut terms = vec![self.term()?];
        while self.peek().0 == Tok::Plus {
            self.next();
            terms.push(self.term()?);
        }
        Ok(if terms.len() == 1 { terms.pop().expect("one term") } else { KernelSpec::Sum(terms) })
    }

    fn term(&mut self) -> Result<KernelSpec> {
        let mut factors = vec![self.factor()?];
        while self.peek().0 == Tok::Star {
            self.next();
            factors.push(self.factor()?);
        }
        Ok(if factors.len() == 1 { factors.pop().expect("one factor") } else { KernelSpec::Product(factors) })
    }

    fn factor(&mut self) -> Result<KernelSpec> {
        match self.next() {
            (Tok::LParen, _) => {
                let e = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            (Tok::Ident(name), span) => {
                self.expect(Tok::LParen)?;
                let leaf = match name.as_str() {
                    "se" => LeafSpec::Se(self.col_list()?),
                    "poly2" => LeafSpec::Poly2(self.col_list()?),
                    "sdof" => LeafSpec::Sdof(self.col()?),
                    "sw" | "swneg" => self.switch(name == "swneg")?,
                    other => {
                        return Err(parse_err(span, format!("unknown kernel '{other}' (expected se, poly2, sdof, sw or swneg)")))
                    }
                };
                self.expect(Tok::RParen)?;
                Ok(KernelSpec::Leaf(leaf))
            }
            (t, span) => Err(parse_err(span, format!("expected a kernel or '(', found {t}"))),
        }
    }

    fn col_list(&mut self) -> Result<Vec<ColRef>> {
        let mut cols = vec![self.col()?];
        while self.peek().0 == Tok::Comma {
            self.next();
            cols.push(self.col()?);
        }
        Ok(cols)
    }

    fn check_column(&self, name: &str, span: Span) -> Result<()> {
        if let Some(cols) = &self.columns {
            let prefix = format!("{name}_");
            if !cols.iter().any(|c| c == name || c.starts_with(&prefix)) {
                return Err(parse_err(span, format!("unknown column '{name}'")));
            }
        }
        Ok(())
    }

    fn col(&mut self) -> Result<ColRef> {
        let (name, span) = self.ident("a column name")?;
        let transform = match name.as_str() {
            "cos2" => Some(FeatureTransform::Cos2),
            "neg" => Some(FeatureTransform::Negate),
            _ => None,
        };
        if let (Some(t), Tok::LParen) = (transform, &self.peek().0) {
            self.next();
            let (inner, ispan) = self.ident("a column name")?;
            self.expect(Tok::RParen)?;
            self.check_column(&inner, ispan)?;
            return Ok(ColRef { column: inner, transform: t });
        }
        self.check_column(&name, span)?;
        Ok(ColRef { column: name, transform: FeatureTransform::Identity })
    }

    fn switch(&mut self, negated: bool) -> Result<LeafSpec> {
        let mut input = self.col()?;
        self.expect(Tok::Comma)?;
        let (mut tag, mut span) = self.ident("a transform or switch tag")?;
        if self.peek().0 == Tok::Comma {
            let transform = match tag.as_str() {
                "cos2" => FeatureTransform::Cos2,
                "neg" => FeatureTransform::Negate,
                "identity" => FeatureTransform::Identity,
                other => return Err(parse_err(span, format!("unknown transform '{other}' (expected cos2, neg or identity)"))),
            };
            if input.transform != FeatureTransform::Identity {
                return Err(parse_err(span, "transform given twice"));
            }
            input.transform = transform;
            self.next();
            (tag, span) = self.ident("a switch tag")?;
        }
        if let Some(prev) = self.switches.get(&tag) {
            if *prev != input {
                return Err(parse_err(span, format!("switch '{tag}' is bound to '{prev}' and to '{input}'")));
            }
        } else {
            self.switches.insert(tag.clone(), input.clone());
        }
        Ok(LeafSpec::Switch { input, tag, negated })
    }
}

/// Parse a kernel spec; with `columns`, every referenced column must exist
/// (exactly, or as the prefix `name_` of a column group).
pub fn parse_kernel_spec(text: &str, columns: Option<&[String]>) -> Result<KernelSpec> {
    let mut p = Parser { toks: lex(text)?, pos: 0, columns: columns.map(|c| c.to_vec()), switches: BTreeMap::new() };
    let spec = p.expr()?;
    let (t, span) = p.next();
    if t != Tok::End {
        return Err(parse_err(span, format!("unexpected {t} after a complete expression")));
    }
    Ok(spec)
}
