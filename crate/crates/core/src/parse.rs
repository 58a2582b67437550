//! Concrete syntax: lexing, parsing and canonical printing.
//!
//! ```text
//! expr    := "let" IDENT "=" expr "in" expr
//!          | "if" expr "then" expr "else" expr
//!          | or
//! or      := and ("||" and)*
//! and     := not ("&&" not)*
//! not     := "!" not | atom
//! atom    := "flip" PROB | "discrete" "(" PROB ("," PROB)* ")"
//!          | "(" expr "," expr ("," expr)* ")" | "(" expr ")"
//!          | "fst" atom | "snd" atom | IDENT "==" INT
//!          | "true" | "false" | IDENT
//! PROB    := DECIMAL | DECIMAL "/" DECIMAL
//! ```
//!
//! `//` starts a line comment. Tuples with more than two components are
//! right-nested pairs.

use std::fmt::{self, Write};

use crate::ast::{renumber_flips, Expr};
use crate::prob::Prob;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Pos {
    pub line: usize,
    pub col: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SourceSpan {
    pub start: Pos,
    pub end: Pos,
}

impl fmt::Display for SourceSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:{}-{}:{}",
            self.start.line, self.start.col, self.end.line, self.end.col
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseErrorKind {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("unbound variable `{0}`")]
    Unbound(String),
    #[error("invalid probability: {0}")]
    BadProb(String),
    #[error("discrete parameters sum to {0}, expected 1")]
    DiscreteSum(String),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{span}: {kind}")]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub span: SourceSpan,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Number(String),
    Kw(&'static str),
    Sym(&'static str),
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) | Tok::Number(s) => write!(f, "`{}`", s),
            Tok::Kw(s) | Tok::Sym(s) => write!(f, "`{}`", s),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

pub const KEYWORDS: &[&str] = &[
    "let", "in", "if", "then", "else", "flip", "discrete", "fst", "snd", "true", "false",
];

const SYMBOLS: &[&str] = &["||", "&&", "==", "!", "(", ")", ",", "=", "/"];

pub fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '\'')
        && !KEYWORDS.contains(&s)
}

fn lex(text: &str) -> Result<Vec<(Tok, SourceSpan)>, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    let advance = |i: &mut usize, line: &mut usize, col: &mut usize, c: char| {
        *i += 1;
        if c == '\n' {
            *line += 1;
            *col = 1;
        } else {
            *col += 1;
        }
    };
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            advance(&mut i, &mut line, &mut col, c);
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                {
                    let ch = chars[i];
                    advance(&mut i, &mut line, &mut col, ch);
                }
            }
            continue;
        }
        let start = Pos { line, col };
        let tok = if c.is_ascii_alphabetic() || c == '_' {
            let mut s = String::new();
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_' || chars[i] == '\'')
            {
                s.push(chars[i]);
                {
                    let ch = chars[i];
                    advance(&mut i, &mut line, &mut col, ch);
                }
            }
            match KEYWORDS.iter().find(|k| **k == s) {
                Some(k) => Tok::Kw(k),
                None => Tok::Ident(s),
            }
        } else if c.is_ascii_digit()
            || (c == '.' && matches!(chars.get(i + 1), Some(d) if d.is_ascii_digit()))
        {
            let mut s = String::new();
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                s.push(chars[i]);
                {
                    let ch = chars[i];
                    advance(&mut i, &mut line, &mut col, ch);
                }
            }
            Tok::Number(s)
        } else {
            let rest: String = chars[i..chars.len().min(i + 2)].iter().collect();
            match SYMBOLS.iter().find(|s| rest.starts_with(**s)) {
                Some(s) => {
                    for _ in 0..s.len() {
                        {
                            let ch = chars[i];
                            advance(&mut i, &mut line, &mut col, ch);
                        }
                    }
                    Tok::Sym(s)
                }
                None => {
                    return Err(ParseError {
                        kind: ParseErrorKind::Syntax(format!("unexpected character `{}`", c)),
                        span: SourceSpan {
                            start,
                            end: Pos { line, col: col + 1 },
                        },
                    })
                }
            }
        };
        out.push((
            tok,
            SourceSpan {
                start,
                end: Pos { line, col },
            },
        ));
    }
    let end = Pos { line, col };
    out.push((Tok::Eof, SourceSpan { start: end, end }));
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, SourceSpan)>,
    pos: usize,
    scope: Vec<String>,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn span(&self) -> SourceSpan {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> (Tok, SourceSpan) {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error<T>(&self, kind: ParseErrorKind, span: SourceSpan) -> Result<T, ParseError> {
        Err(ParseError { kind, span })
    }

    fn unexpected<T>(&self, expected: &str) -> Result<T, ParseError> {
        self.error(
            ParseErrorKind::Syntax(format!("expected {}, found {}", expected, self.peek())),
            self.span(),
        )
    }

    fn eat_sym(&mut self, s: &str) -> bool {
        if matches!(self.peek(), Tok::Sym(t) if *t == s) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, s: &str) -> Result<(), ParseError> {
        if self.eat_sym(s) {
            Ok(())
        } else {
            self.unexpected(&format!("`{}`", s))
        }
    }

    fn expect_kw(&mut self, k: &str) -> Result<(), ParseError> {
        if matches!(self.peek(), Tok::Kw(t) if *t == k) {
            self.bump();
            Ok(())
        } else {
            self.unexpected(&format!("`{}`", k))
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        match self.peek() {
            Tok::Kw("let") => {
                self.bump();
                let name = match self.bump() {
                    (Tok::Ident(s), _) => s,
                    (t, span) => {
                        return self.error(
                            ParseErrorKind::Syntax(format!("expected identifier, found {}", t)),
                            span,
                        )
                    }
                };
                self.expect_sym("=")?;
                let bound = self.expr()?;
                self.expect_kw("in")?;
                self.scope.push(name.clone());
                let body = self.expr();
                self.scope.pop();
                Ok(Expr::Let(name, Box::new(bound), Box::new(body?)))
            }
            Tok::Kw("if") => {
                self.bump();
                let g = self.expr()?;
                self.expect_kw("then")?;
                let t = self.expr()?;
                self.expect_kw("else")?;
                let e = self.expr()?;
                Ok(Expr::Ite(Box::new(g), Box::new(t), Box::new(e)))
            }
            _ => self.or_expr(),
        }
    }

    fn or_expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.and_expr()?;
        while self.eat_sym("||") {
            let rhs = self.and_expr()?;
            lhs = Expr::Or(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn and_expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.not_expr()?;
        while self.eat_sym("&&") {
            let rhs = self.not_expr()?;
            lhs = Expr::And(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn not_expr(&mut self) -> Result<Expr, ParseError> {
        if self.eat_sym("!") {
            Ok(Expr::Not(Box::new(self.not_expr()?)))
        } else {
            self.atom()
        }
    }

    fn prob(&mut self) -> Result<Prob, ParseError> {
        let start = self.span();
        let num = match self.bump() {
            (Tok::Number(s), _) => s,
            (t, span) => {
                return self.error(
                    ParseErrorKind::Syntax(format!("expected probability, found {}", t)),
                    span,
                )
            }
        };
        let text = if self.eat_sym("/") {
            match self.bump() {
                (Tok::Number(d), _) => format!("{}/{}", num, d),
                (t, span) => {
                    return self.error(
                        ParseErrorKind::Syntax(format!("expected denominator, found {}", t)),
                        span,
                    )
                }
            }
        } else {
            num
        };
        let span = SourceSpan {
            start: start.start,
            end: self.toks[self.pos.saturating_sub(1)].1.end,
        };
        let p: Prob = text.parse().map_err(|_| ParseError {
            kind: ParseErrorKind::BadProb(text.clone()),
            span,
        })?;
        if !p.is_probability() {
            return self.error(
                ParseErrorKind::BadProb(format!("{} is outside [0, 1]", text)),
                span,
            );
        }
        Ok(p)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let (tok, span) = self.bump();
        match tok {
            Tok::Kw("flip") => Ok(Expr::Flip(crate::ast::FlipId::UNASSIGNED, self.prob()?)),
            Tok::Kw("discrete") => {
                self.expect_sym("(")?;
                let mut ps = vec![self.prob()?];
                while self.eat_sym(",") {
                    ps.push(self.prob()?);
                }
                let close = self.span();
                self.expect_sym(")")?;
                let sum: Prob = ps.iter().sum();
                if !sum.is_one() {
                    return self.error(
                        ParseErrorKind::DiscreteSum(sum.to_string()),
                        SourceSpan {
                            start: span.start,
                            end: close.end,
                        },
                    );
                }
                Ok(Expr::Discrete(ps))
            }
            Tok::Kw("fst") => Ok(Expr::Fst(Box::new(self.atom()?))),
            Tok::Kw("snd") => Ok(Expr::Snd(Box::new(self.atom()?))),
            Tok::Kw("true") => Ok(Expr::True),
            Tok::Kw("false") => Ok(Expr::False),
            Tok::Sym("(") => {
                let first = self.expr()?;
                if self.eat_sym(")") {
                    return Ok(first);
                }
                let mut items = vec![first];
                while self.eat_sym(",") {
                    items.push(self.expr()?);
                }
                if items.len() < 2 {
                    return self.unexpected("`,` or `)`");
                }
                self.expect_sym(")")?;
                Ok(crate::ast::tuple_of(items))
            }
            Tok::Ident(name) => {
                if !self.scope.contains(&name) {
                    return self.error(ParseErrorKind::Unbound(name), span);
                }
                if self.eat_sym("==") {
                    match self.bump() {
                        (Tok::Number(n), nspan) => {
                            let k = n.parse::<u64>().map_err(|_| ParseError {
                                kind: ParseErrorKind::Syntax(format!("expected integer, found `{}`", n)),
                                span: nspan,
                            })?;
                            Ok(Expr::IntEq(name, k))
                        }
                        (t, nspan) => self.error(
                            ParseErrorKind::Syntax(format!("expected integer, found {}", t)),
                            nspan,
                        ),
                    }
                } else {
                    Ok(Expr::Var(name))
                }
            }
            t => self.error(
                ParseErrorKind::Syntax(format!("expected expression, found {}", t)),
                span,
            ),
        }
    }
}

/// Parse program text into a well-scoped expression with flip ids assigned
/// in program order.
pub fn parse(text: &str) -> Result<Expr, ParseError> {
    let mut parser = Parser {
        toks: lex(text)?,
        pos: 0,
        scope: Vec::new(),
    };
    let mut e = parser.expr()?;
    if *parser.peek() != Tok::Eof {
        return parser.unexpected("end of input");
    }
    renumber_flips(&mut e);
    Ok(e)
}

// Binding strength used when deciding on parentheses.
const LVL_EXPR: u8 = 0;
const LVL_OR: u8 = 1;
const LVL_AND: u8 = 2;
const LVL_NOT: u8 = 3;
const LVL_ATOM: u8 = 4;

fn level(e: &Expr) -> u8 {
    match e {
        Expr::Let(..) | Expr::Ite(..) => LVL_EXPR,
        Expr::Or(..) => LVL_OR,
        Expr::And(..) => LVL_AND,
        Expr::Not(..) => LVL_NOT,
        _ => LVL_ATOM,
    }
}

fn write_expr(out: &mut String, e: &Expr, ctx: u8, indent: usize) {
    if level(e) < ctx {
        out.push('(');
        write_expr(out, e, LVL_EXPR, indent);
        out.push(')');
        return;
    }
    let newline = |out: &mut String, indent: usize| {
        out.push('\n');
        out.extend(std::iter::repeat_n(' ', indent));
    };
    match e {
        Expr::Let(x, bound, body) => {
            write!(out, "let {} = ", x).unwrap();
            write_expr(out, bound, LVL_EXPR, indent + 4);
            out.push_str(" in");
            newline(out, indent);
            write_expr(out, body, LVL_EXPR, indent);
        }
        Expr::Ite(g, t, els) => {
            out.push_str("if ");
            write_expr(out, g, LVL_EXPR, indent + 4);
            out.push_str(" then ");
            write_expr(out, t, LVL_EXPR, indent + 4);
            newline(out, indent);
            out.push_str("else ");
            write_expr(out, els, LVL_EXPR, indent);
        }
        Expr::Flip(_, theta) => write!(out, "flip {}", theta).unwrap(),
        Expr::Discrete(ps) => {
            out.push_str("discrete(");
            for (i, q) in ps.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write!(out, "{}", q).unwrap();
            }
            out.push(')');
        }
        Expr::Tuple(a, b) => {
            out.push('(');
            write_expr(out, a, LVL_EXPR, indent + 4);
            let mut rest: &Expr = b;
            while let Expr::Tuple(x, y) = rest {
                out.push_str(", ");
                write_expr(out, x, LVL_EXPR, indent + 4);
                rest = y;
            }
            out.push_str(", ");
            write_expr(out, rest, LVL_EXPR, indent + 4);
            out.push(')');
        }
        Expr::Fst(a) => {
            out.push_str("fst ");
            write_expr(out, a, LVL_ATOM, indent);
        }
        Expr::Snd(a) => {
            out.push_str("snd ");
            write_expr(out, a, LVL_ATOM, indent);
        }
        Expr::IntEq(x, k) => write!(out, "{}=={}", x, k).unwrap(),
        Expr::Not(a) => {
            out.push('!');
            write_expr(out, a, LVL_NOT, indent);
        }
        Expr::And(a, b) => {
            write_expr(out, a, LVL_AND, indent);
            out.push_str(" && ");
            write_expr(out, b, LVL_NOT, indent);
        }
        Expr::Or(a, b) => {
            write_expr(out, a, LVL_OR, indent);
            out.push_str(" || ");
            write_expr(out, b, LVL_AND, indent);
        }
        Expr::True => out.push_str("true"),
        Expr::False => out.push_str("false"),
        Expr::Var(x) => out.push_str(x),
    }
}

/// Canonical program text. `parse(&print(p))` reproduces `p` whenever `p`'s
/// flips are numbered in program order.
pub fn print(p: &Expr) -> String {
    let mut out = String::new();
    write_expr(&mut out, p, LVL_EXPR, 0);
    out
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&print(self))
    }
}
