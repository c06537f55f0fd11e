//! Two-part model formulas.
//!
//! ```text
//! RESP ~ TERM (+ TERM)* [ | sigma: TERM (+ TERM)* ]
//! TERM := 1 | IDENT | log(IDENT) | cs(ARG [, df=NUMBER])
//! ARG  := IDENT | log(IDENT)
//! ```
//!
//! `cs(x)` without a df uses 3 extra degrees of freedom.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::data::{Column, Dataset, VarExpr};
use crate::engine::{fmt_df, ModelSpec, SplineTerm, SubModel};
use crate::error::{Error, Result};
use crate::families::{Family, Link, Param};

pub const DEFAULT_CS_DF: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Term {
    Var(VarExpr),
    Spline { arg: VarExpr, df: f64 },
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(v) => write!(f, "{v}"),
            Term::Spline { arg, df } => write!(f, "cs({arg}, df={})", fmt_df(*df)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormulaAst {
    pub response: VarExpr,
    pub mu: Vec<Term>,
    pub sigma: Option<Vec<Term>>,
}

fn write_terms(f: &mut fmt::Formatter<'_>, terms: &[Term]) -> fmt::Result {
    if terms.is_empty() {
        return f.write_str("1");
    }
    for (i, t) in terms.iter().enumerate() {
        if i > 0 {
            f.write_str(" + ")?;
        }
        write!(f, "{t}")?;
    }
    Ok(())
}

impl fmt::Display for FormulaAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ~ ", self.response)?;
        write_terms(f, &self.mu)?;
        if let Some(s) = &self.sigma {
            f.write_str(" | sigma: ")?;
            write_terms(f, s)?;
        }
        Ok(())
    }
}

impl FormulaAst {
    /// Every variable the formula refers to, response first.
    pub fn variables(&self) -> Vec<VarExpr> {
        let mut out = vec![self.response.clone()];
        for t in self.mu.iter().chain(self.sigma.iter().flatten()) {
            let v = match t {
                Term::Var(v) => v,
                Term::Spline { arg, .. } => arg,
            };
            if !out.contains(v) {
                out.push(v.clone());
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Num(String),
    LParen,
    RParen,
    Comma,
    Eq,
    Plus,
    Tilde,
    Pipe,
    Colon,
    End,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) | Tok::Num(s) => write!(f, "'{s}'"),
            Tok::LParen => f.write_str("'('"),
            Tok::RParen => f.write_str("')'"),
            Tok::Comma => f.write_str("','"),
            Tok::Eq => f.write_str("'='"),
            Tok::Plus => f.write_str("'+'"),
            Tok::Tilde => f.write_str("'~'"),
            Tok::Pipe => f.write_str("'|'"),
            Tok::Colon => f.write_str("':'"),
            Tok::End => f.write_str("end of formula"),
        }
    }
}

struct Parser<'a> {
    text: &'a str,
    toks: Vec<(Tok, usize)>,
    pos: usize,
}

fn parse_error(text: &str, column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        message: message.into(),
        column,
        text: text.to_string(),
        caret: format!("{}^", " ".repeat(column.saturating_sub(1))),
    }
}

fn tokenize(text: &str) -> Result<Vec<(Tok, usize)>> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let col = i + 1;
        let single = match c {
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            ',' => Some(Tok::Comma),
            '=' => Some(Tok::Eq),
            '+' => Some(Tok::Plus),
            '~' => Some(Tok::Tilde),
            '|' => Some(Tok::Pipe),
            ':' => Some(Tok::Colon),
            _ => None,
        };
        if let Some(t) = single {
            out.push((t, col));
            i += 1;
        } else if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' || c == '-' {
            let start = i;
            i += 1;
            while i < chars.len()
                && (chars[i].is_ascii_alphanumeric()
                    || chars[i] == '.'
                    || ((chars[i] == '-' || chars[i] == '+') && matches!(chars[i - 1], 'e' | 'E')))
            {
                i += 1;
            }
            out.push((Tok::Num(chars[start..i].iter().collect()), col));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_' || chars[i] == '.') {
                i += 1;
            }
            out.push((Tok::Ident(chars[start..i].iter().collect()), col));
        } else {
            return Err(parse_error(text, col, format!("unexpected character '{c}'")));
        }
    }
    out.push((Tok::End, chars.len() + 1));
    Ok(out)
}

impl<'a> Parser<'a> {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn col(&self) -> usize {
        self.toks[self.pos].1
    }

    fn next(&mut self) -> (Tok, usize) {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn err(&self, column: usize, message: impl Into<String>) -> Error {
        parse_error(self.text, column, message)
    }

    fn expect(&mut self, want: Tok) -> Result<usize> {
        let (t, col) = self.next();
        if t == want {
            Ok(col)
        } else {
            Err(self.err(col, format!("expected {want}, found {t}")))
        }
    }

    fn ident(&mut self) -> Result<(String, usize)> {
        match self.next() {
            (Tok::Ident(s), col) => Ok((s, col)),
            (t, col) => Err(self.err(col, format!("expected a variable name, found {t}"))),
        }
    }

    /// IDENT or log(IDENT).
    fn var_expr(&mut self) -> Result<VarExpr> {
        let (name, col) = self.ident()?;
        if *self.peek() != Tok::LParen {
            return Ok(VarExpr::Var(name));
        }
        if name != "log" {
            return Err(self.err(col, format!("unknown function '{name}'")));
        }
        self.next();
        let (inner, _) = self.ident()?;
        self.expect(Tok::RParen)?;
        Ok(VarExpr::Log(inner))
    }

    /// A term, or `None` for the explicit intercept `1`.
    fn term(&mut self) -> Result<Option<(Term, usize)>> {
        let col = self.col();
        match self.peek().clone() {
            Tok::Num(s) if s == "1" => {
                self.next();
                Ok(None)
            }
            Tok::Ident(name) if name == "cs" => {
                self.next();
                self.expect(Tok::LParen)?;
                let arg = self.var_expr()?;
                let mut df = DEFAULT_CS_DF;
                if *self.peek() == Tok::Comma {
                    self.next();
                    let (key, kcol) = self.ident()?;
                    if key != "df" {
                        return Err(self.err(kcol, format!("malformed df: expected 'df=', found '{key}'")));
                    }
                    self.expect(Tok::Eq)?;
                    df = match self.next() {
                        (Tok::Num(s), ncol) => match s.parse::<f64>() {
                            Ok(v) if v > 0.0 && v.is_finite() => v,
                            _ => return Err(self.err(ncol, format!("malformed df '{s}': must be a positive number"))),
                        },
                        (t, ncol) => return Err(self.err(ncol, format!("malformed df: expected a number, found {t}"))),
                    };
                }
                self.expect(Tok::RParen)?;
                Ok(Some((Term::Spline { arg, df }, col)))
            }
            Tok::Ident(_) => Ok(Some((Term::Var(self.var_expr()?), col))),
            t => Err(self.err(col, format!("expected a term, found {t}"))),
        }
    }

    fn terms(&mut self) -> Result<Vec<Term>> {
        let mut out: Vec<Term> = Vec::new();
        loop {
            if let Some((t, col)) = self.term()? {
                let key = |t: &Term| match t {
                    Term::Var(v) => v.clone(),
                    Term::Spline { arg, .. } => arg.clone(),
                };
                if out.iter().any(|o| key(o) == key(&t)) {
                    return Err(self.err(col, format!("duplicate term '{t}'")));
                }
                out.push(t);
            }
            if *self.peek() == Tok::Plus {
                self.next();
            } else {
                return Ok(out);
            }
        }
    }
}

pub fn parse_formula(text: &str) -> Result<FormulaAst> {
    let mut p = Parser {
        text,
        toks: tokenize(text)?,
        pos: 0,
    };
    let response = p.var_expr()?;
    p.expect(Tok::Tilde)?;
    let mu = p.terms()?;
    let sigma = if *p.peek() == Tok::Pipe {
        p.next();
        let (kw, col) = p.ident()?;
        if kw != "sigma" {
            return Err(p.err(col, format!("expected 'sigma:', found '{kw}'")));
        }
        p.expect(Tok::Colon)?;
        Some(p.terms()?)
    } else {
        None
    };
    if *p.peek() != Tok::End {
        let col = p.col();
        let t = p.peek().clone();
        return Err(p.err(col, format!("unexpected {t}")));
    }
    Ok(FormulaAst { response, mu, sigma })
}

fn check_numeric(data: &Dataset, v: &VarExpr) -> Result<()> {
    let direct = v.to_string();
    if data.has(&direct) && matches!(v, VarExpr::Log(_)) {
        return Ok(());
    }
    match data.column(v.base()) {
        None => Err(Error::Schema(format!("unknown variable '{}'", v.base()))),
        Some(Column::Categorical { .. }) => Err(Error::Schema(format!(
            "'{}' is categorical; use its indicator columns",
            v.base()
        ))),
        Some(Column::Real(_)) => Ok(()),
    }
}

fn is_continuous(data: &Dataset, v: &VarExpr) -> bool {
    match data.eval(v) {
        Ok(x) => {
            let binary = x.iter().all(|&a| a == 0.0 || a == 1.0);
            !binary
        }
        Err(_) => false,
    }
}

fn submodel(terms: &[Term], link: Link, data: &Dataset) -> Result<SubModel> {
    let mut parametric = Vec::new();
    let mut splines = Vec::new();
    for t in terms {
        match t {
            Term::Var(v) => {
                check_numeric(data, v)?;
                parametric.push(v.clone());
            }
            Term::Spline { arg, df } => {
                if data.column(arg.base()).is_none() && !data.has(&arg.to_string()) {
                    return Err(Error::Schema(format!("unknown variable '{}'", arg.base())));
                }
                if matches!(data.column(arg.base()), Some(Column::Categorical { .. })) || !is_continuous(data, arg) {
                    return Err(Error::NonContinuousSpline(arg.to_string()));
                }
                splines.push(SplineTerm::new(arg.clone(), *df));
            }
        }
    }
    Ok(SubModel::new(link, parametric, splines))
}

/// Resolve a formula against a dataset (derived variables included) into a
/// validated model specification. Links default to the family's defaults.
pub fn build_spec(
    ast: &FormulaAst,
    family: Family,
    mu_link: Option<Link>,
    sigma_link: Option<Link>,
    data: &Dataset,
) -> Result<ModelSpec> {
    check_numeric(data, &ast.response)?;
    let mu_link = mu_link.unwrap_or(family.default_link(Param::Mu));
    let sigma_link = sigma_link.unwrap_or(family.default_link(Param::Sigma));
    let mut warnings = Vec::new();
    if family.mu_positive() && mu_link != Link::Log {
        warnings.push(format!(
            "{mu_link} link for {family} mu does not keep mu positive; fitting may fail"
        ));
    }
    if sigma_link != Link::Log {
        warnings.push(format!(
            "{sigma_link} link for sigma does not keep sigma positive; fitting may fail"
        ));
    }
    let spec = ModelSpec {
        response: ast.response.clone(),
        family,
        mu: submodel(&ast.mu, mu_link, data)?,
        sigma: submodel(ast.sigma.as_deref().unwrap_or(&[]), sigma_link, data)?,
        warnings,
    };
    spec.validate()?;
    Ok(spec)
}
