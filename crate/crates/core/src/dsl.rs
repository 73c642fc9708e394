//! Text format for models: lexer, recursive-descent parser, semantic
//! analysis and the canonical serializer.
//!
//! ```text
//! scm     := "scm" IDENT "{" decl* "}"
//! decl    := noise | var
//! noise   := "noise" IDENT "~" pmf
//! pmf     := "{" LABEL ":" RATIONAL ("," LABEL ":" RATIONAL)* "}"
//! var     := "var" IDENT ":" range "=" expr
//! range   := "{" LABEL ("," LABEL)* "}"
//! RATIONAL := INT "/" INT | INT
//! LABEL   := IDENT | INT
//! ```
//!
//! Expressions use `+ - *`, comparisons `= != < <=` (also `≠ ≤`),
//! `and/or/not`, `if c then a else b`, and explicit lookup tables
//! `table (V1, ..., Vk) { (l1, ..., lk) -> label, ... }`. Line comments
//! start with `#`. A variable's parents and its noise variable are inferred
//! from the references in its expression; every assignment must reference
//! exactly one noise variable. Labels that parse as integers carry integer
//! semantics in arithmetic; symbolic labels are only comparable.
//!
//! Parsing a model also validates it, so a successful parse yields a model
//! that inference accepts as-is. Errors carry a byte span plus 1-based
//! line/column and name what was expected; when several rule violations
//! exist the one earliest in the source (ties broken by message) is
//! reported.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fmt::Write as _;

use num::One;
use serde::{Deserialize, Serialize};

use crate::dist::{FiniteRange, Pmf, VarId};
use crate::expr::{BinOp, Expr, TableExpr};
use crate::rational::{format_rational, Rational};
use crate::scm::{Assignment, Mechanism, Scm, Variable, Violation};

// ---------------------------------------------------------------------------
// Spans and errors

/// Byte span into the (LF-normalized) source text, with the 1-based line and
/// column of its start.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceSpan {
    pub start: usize,
    pub end: usize,
    pub line: u32,
    pub col: u32,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParseError {
    pub span: SourceSpan,
    pub message: String,
    /// What would have been accepted instead; never empty.
    pub expected: Vec<String>,
}

impl ParseError {
    fn new(span: SourceSpan, message: impl Into<String>, expected: Vec<String>) -> Self {
        ParseError {
            span,
            message: message.into(),
            expected,
        }
    }

    /// Stable one-line rendering used by golden tests and the CLI.
    pub fn render(&self) -> String {
        format!(
            "{}:{}: {} (expected {})",
            self.span.line,
            self.span.col,
            self.message,
            self.expected.join(" or ")
        )
    }
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

impl std::error::Error for ParseError {}

// ---------------------------------------------------------------------------
// Lexer

#[derive(Clone, Debug, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Int(i64),
    LBrace,
    RBrace,
    LParen,
    RParen,
    Colon,
    Comma,
    Tilde,
    Assign,
    Plus,
    Minus,
    Star,
    Slash,
    Lt,
    Le,
    Ne,
    Arrow,
    KwScm,
    KwNoise,
    KwVar,
    KwIf,
    KwThen,
    KwElse,
    KwAnd,
    KwOr,
    KwNot,
    KwTable,
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Int(i) => format!("integer `{i}`"),
            Tok::LBrace => "`{`".into(),
            Tok::RBrace => "`}`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::Colon => "`:`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Tilde => "`~`".into(),
            Tok::Assign => "`=`".into(),
            Tok::Plus => "`+`".into(),
            Tok::Minus => "`-`".into(),
            Tok::Star => "`*`".into(),
            Tok::Slash => "`/`".into(),
            Tok::Lt => "`<`".into(),
            Tok::Le => "`<=`".into(),
            Tok::Ne => "`!=`".into(),
            Tok::Arrow => "`->`".into(),
            Tok::KwScm => "`scm`".into(),
            Tok::KwNoise => "`noise`".into(),
            Tok::KwVar => "`var`".into(),
            Tok::KwIf => "`if`".into(),
            Tok::KwThen => "`then`".into(),
            Tok::KwElse => "`else`".into(),
            Tok::KwAnd => "`and`".into(),
            Tok::KwOr => "`or`".into(),
            Tok::KwNot => "`not`".into(),
            Tok::KwTable => "`table`".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    span: SourceSpan,
}

struct Lexer<'a> {
    src: &'a str,
    chars: std::iter::Peekable<std::str::CharIndices<'a>>,
    line: u32,
    col: u32,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer {
            src,
            chars: src.char_indices().peekable(),
            line: 1,
            col: 1,
        }
    }

    fn bump(&mut self) -> Option<(usize, char)> {
        let next = self.chars.next();
        if let Some((_, c)) = next {
            if c == '\n' {
                self.line += 1;
                self.col = 1;
            } else {
                self.col += 1;
            }
        }
        next
    }

    fn span_here(&mut self, start: usize, line: u32, col: u32) -> SourceSpan {
        let end = self
            .chars
            .peek()
            .map(|(i, _)| *i)
            .unwrap_or(self.src.len());
        SourceSpan {
            start,
            end,
            line,
            col,
        }
    }

    fn tokenize(mut self) -> Result<Vec<Token>, ParseError> {
        let mut out = Vec::new();
        loop {
            // Skip whitespace and comments.
            loop {
                match self.chars.peek() {
                    Some((_, c)) if c.is_whitespace() => {
                        self.bump();
                    }
                    Some((_, '#')) => {
                        while let Some((_, c)) = self.chars.peek() {
                            if *c == '\n' {
                                break;
                            }
                            self.bump();
                        }
                    }
                    _ => break,
                }
            }
            let (line, col) = (self.line, self.col);
            let Some((start, c)) = self.bump() else {
                out.push(Token {
                    tok: Tok::Eof,
                    span: SourceSpan {
                        start: self.src.len(),
                        end: self.src.len(),
                        line,
                        col,
                    },
                });
                return Ok(out);
            };
            let tok = match c {
                '{' => Tok::LBrace,
                '}' => Tok::RBrace,
                '(' => Tok::LParen,
                ')' => Tok::RParen,
                ':' => Tok::Colon,
                ',' => Tok::Comma,
                '~' => Tok::Tilde,
                '=' => Tok::Assign,
                '+' => Tok::Plus,
                '*' => Tok::Star,
                '/' => Tok::Slash,
                '≠' => Tok::Ne,
                '≤' => Tok::Le,
                '-' => {
                    if matches!(self.chars.peek(), Some((_, '>'))) {
                        self.bump();
                        Tok::Arrow
                    } else {
                        Tok::Minus
                    }
                }
                '<' => {
                    if matches!(self.chars.peek(), Some((_, '='))) {
                        self.bump();
                        Tok::Le
                    } else {
                        Tok::Lt
                    }
                }
                '!' => {
                    if matches!(self.chars.peek(), Some((_, '='))) {
                        self.bump();
                        Tok::Ne
                    } else {
                        return Err(ParseError::new(
                            self.span_here(start, line, col),
                            "unexpected character `!`",
                            vec!["`!=`".into()],
                        ));
                    }
                }
                c if c.is_ascii_digit() => {
                    let mut text = String::from(c);
                    while let Some((_, d)) = self.chars.peek() {
                        if d.is_ascii_digit() {
                            text.push(*d);
                            self.bump();
                        } else {
                            break;
                        }
                    }
                    let value: i64 = text.parse().map_err(|_| {
                        ParseError::new(
                            self.span_here(start, line, col),
                            format!("integer literal `{text}` is too large"),
                            vec!["an integer that fits in 64 bits".into()],
                        )
                    })?;
                    Tok::Int(value)
                }
                c if c.is_ascii_alphabetic() || c == '_' => {
                    let mut text = String::from(c);
                    while let Some((_, d)) = self.chars.peek() {
                        if d.is_ascii_alphanumeric() || *d == '_' {
                            text.push(*d);
                            self.bump();
                        } else {
                            break;
                        }
                    }
                    match text.as_str() {
                        "scm" => Tok::KwScm,
                        "noise" => Tok::KwNoise,
                        "var" => Tok::KwVar,
                        "if" => Tok::KwIf,
                        "then" => Tok::KwThen,
                        "else" => Tok::KwElse,
                        "and" => Tok::KwAnd,
                        "or" => Tok::KwOr,
                        "not" => Tok::KwNot,
                        "table" => Tok::KwTable,
                        _ => Tok::Ident(text),
                    }
                }
                other => {
                    return Err(ParseError::new(
                        self.span_here(start, line, col),
                        format!("unexpected character `{other}`"),
                        vec!["an identifier".into(), "an integer".into(), "punctuation".into()],
                    ));
                }
            };
            let span = self.span_here(start, line, col);
            out.push(Token { tok, span });
        }
    }
}

// ---------------------------------------------------------------------------
// Unresolved AST

#[derive(Clone, Debug)]
struct Spanned<T> {
    node: T,
    span: SourceSpan,
}

#[derive(Clone, Debug)]
enum UExpr {
    Int(i64),
    Ident(String),
    Bin(BinOp, Box<Spanned<UExpr>>, Box<Spanned<UExpr>>),
    Not(Box<Spanned<UExpr>>),
    If(
        Box<Spanned<UExpr>>,
        Box<Spanned<UExpr>>,
        Box<Spanned<UExpr>>,
    ),
    Table(UTable),
}

#[derive(Clone, Debug)]
struct UTable {
    keys: Vec<Spanned<String>>,
    rows: Vec<URow>,
}

#[derive(Clone, Debug)]
struct URow {
    key: Vec<Spanned<String>>,
    value: Spanned<String>,
    span: SourceSpan,
}

struct NoiseDecl {
    id: Spanned<String>,
    pairs: Vec<(Spanned<String>, Rational)>,
    pmf_span: SourceSpan,
}

struct VarDecl {
    id: Spanned<String>,
    labels: Vec<Spanned<String>>,
    body: Spanned<UExpr>,
}

enum Decl {
    Noise(NoiseDecl),
    Var(VarDecl),
}

// ---------------------------------------------------------------------------
// Parser

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

type PResult<T> = Result<T, ParseError>;

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos.min(self.tokens.len() - 1)]
    }

    fn next(&mut self) -> Token {
        let t = self.tokens[self.pos.min(self.tokens.len() - 1)].clone();
        if self.pos < self.tokens.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn unexpected(&self, expected: Vec<String>) -> ParseError {
        let t = self.peek();
        ParseError::new(
            t.span,
            format!("unexpected {}", t.tok.describe()),
            expected,
        )
    }

    fn expect(&mut self, tok: Tok) -> PResult<Token> {
        if self.peek().tok == tok {
            Ok(self.next())
        } else {
            Err(self.unexpected(vec![tok.describe()]))
        }
    }

    fn ident(&mut self, what: &str) -> PResult<Spanned<String>> {
        match &self.peek().tok {
            Tok::Ident(s) => {
                let node = s.clone();
                let span = self.peek().span;
                self.next();
                Ok(Spanned { node, span })
            }
            _ => Err(self.unexpected(vec![what.to_owned()])),
        }
    }

    /// A value label: identifier or integer literal.
    fn label(&mut self) -> PResult<Spanned<String>> {
        match &self.peek().tok {
            Tok::Ident(s) => {
                let node = s.clone();
                let span = self.peek().span;
                self.next();
                Ok(Spanned { node, span })
            }
            Tok::Int(i) => {
                let node = i.to_string();
                let span = self.peek().span;
                self.next();
                Ok(Spanned { node, span })
            }
            _ => Err(self.unexpected(vec!["a value label".into()])),
        }
    }

    fn rational(&mut self) -> PResult<Rational> {
        let numer = match self.peek().tok {
            Tok::Int(i) => {
                self.next();
                i
            }
            _ => return Err(self.unexpected(vec!["a rational number".into()])),
        };
        if self.peek().tok == Tok::Slash {
            self.next();
            let denom = match self.peek().tok {
                Tok::Int(i) if i > 0 => {
                    self.next();
                    i
                }
                _ => return Err(self.unexpected(vec!["a positive denominator".into()])),
            };
            Ok(crate::rational::rat(numer, denom))
        } else {
            Ok(crate::rational::rat_int(numer))
        }
    }

    fn pmf(&mut self) -> PResult<(Vec<(Spanned<String>, Rational)>, SourceSpan)> {
        let open = self.expect(Tok::LBrace)?;
        let mut pairs = Vec::new();
        loop {
            let label = self.label()?;
            self.expect(Tok::Colon)?;
            let mass = self.rational()?;
            pairs.push((label, mass));
            match &self.peek().tok {
                Tok::Comma => {
                    self.next();
                }
                Tok::RBrace => break,
                _ => return Err(self.unexpected(vec!["`,`".into(), "`}`".into()])),
            }
        }
        let close = self.expect(Tok::RBrace)?;
        let span = SourceSpan {
            start: open.span.start,
            end: close.span.end,
            line: open.span.line,
            col: open.span.col,
        };
        Ok((pairs, span))
    }

    fn range(&mut self) -> PResult<Vec<Spanned<String>>> {
        self.expect(Tok::LBrace)?;
        let mut labels = vec![self.label()?];
        loop {
            match &self.peek().tok {
                Tok::Comma => {
                    self.next();
                    labels.push(self.label()?);
                }
                Tok::RBrace => {
                    self.next();
                    return Ok(labels);
                }
                _ => return Err(self.unexpected(vec!["`,`".into(), "`}`".into()])),
            }
        }
    }

    fn decl(&mut self) -> PResult<Decl> {
        match self.peek().tok {
            Tok::KwNoise => {
                self.next();
                let id = self.ident("a noise variable name")?;
                self.expect(Tok::Tilde)?;
                let (pairs, pmf_span) = self.pmf()?;
                Ok(Decl::Noise(NoiseDecl { id, pairs, pmf_span }))
            }
            Tok::KwVar => {
                self.next();
                let id = self.ident("a variable name")?;
                self.expect(Tok::Colon)?;
                let labels = self.range()?;
                self.expect(Tok::Assign)?;
                let body = self.expr()?;
                Ok(Decl::Var(VarDecl { id, labels, body }))
            }
            _ => Err(self.unexpected(vec!["`noise`".into(), "`var`".into(), "`}`".into()])),
        }
    }

    fn spanned(&self, start: SourceSpan, node: UExpr) -> Spanned<UExpr> {
        let end = self.tokens[self.pos.saturating_sub(1).min(self.tokens.len() - 1)]
            .span
            .end;
        Spanned {
            node,
            span: SourceSpan {
                start: start.start,
                end,
                line: start.line,
                col: start.col,
            },
        }
    }

    fn expr(&mut self) -> PResult<Spanned<UExpr>> {
        if self.peek().tok == Tok::KwIf {
            return self.if_expr();
        }
        self.or_expr()
    }

    fn if_expr(&mut self) -> PResult<Spanned<UExpr>> {
        let start = self.expect(Tok::KwIf)?.span;
        let cond = self.expr()?;
        self.expect(Tok::KwThen)?;
        let then = self.expr()?;
        self.expect(Tok::KwElse)?;
        let otherwise = self.expr()?;
        Ok(self.spanned(
            start,
            UExpr::If(Box::new(cond), Box::new(then), Box::new(otherwise)),
        ))
    }

    fn or_expr(&mut self) -> PResult<Spanned<UExpr>> {
        let mut lhs = self.and_expr()?;
        while self.peek().tok == Tok::KwOr {
            self.next();
            let rhs = self.and_expr()?;
            let start = lhs.span;
            lhs = self.spanned(start, UExpr::Bin(BinOp::Or, Box::new(lhs), Box::new(rhs)));
        }
        Ok(lhs)
    }

    fn and_expr(&mut self) -> PResult<Spanned<UExpr>> {
        let mut lhs = self.not_expr()?;
        while self.peek().tok == Tok::KwAnd {
            self.next();
            let rhs = self.not_expr()?;
            let start = lhs.span;
            lhs = self.spanned(start, UExpr::Bin(BinOp::And, Box::new(lhs), Box::new(rhs)));
        }
        Ok(lhs)
    }

    fn not_expr(&mut self) -> PResult<Spanned<UExpr>> {
        if self.peek().tok == Tok::KwNot {
            let start = self.next().span;
            let inner = self.not_expr()?;
            return Ok(self.spanned(start, UExpr::Not(Box::new(inner))));
        }
        self.cmp_expr()
    }

    fn cmp_expr(&mut self) -> PResult<Spanned<UExpr>> {
        let lhs = self.add_expr()?;
        let op = match self.peek().tok {
            Tok::Assign => BinOp::Eq,
            Tok::Ne => BinOp::Ne,
            Tok::Lt => BinOp::Lt,
            Tok::Le => BinOp::Le,
            _ => return Ok(lhs),
        };
        self.next();
        let rhs = self.add_expr()?;
        let start = lhs.span;
        Ok(self.spanned(start, UExpr::Bin(op, Box::new(lhs), Box::new(rhs))))
    }

    fn add_expr(&mut self) -> PResult<Spanned<UExpr>> {
        let mut lhs = self.mul_expr()?;
        loop {
            let op = match self.peek().tok {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.next();
            let rhs = self.mul_expr()?;
            let start = lhs.span;
            lhs = self.spanned(start, UExpr::Bin(op, Box::new(lhs), Box::new(rhs)));
        }
    }

    fn mul_expr(&mut self) -> PResult<Spanned<UExpr>> {
        let mut lhs = self.unary_expr()?;
        while self.peek().tok == Tok::Star {
            self.next();
            let rhs = self.unary_expr()?;
            let start = lhs.span;
            lhs = self.spanned(start, UExpr::Bin(BinOp::Mul, Box::new(lhs), Box::new(rhs)));
        }
        Ok(lhs)
    }

    fn unary_expr(&mut self) -> PResult<Spanned<UExpr>> {
        if self.peek().tok == Tok::Minus {
            let start = self.next().span;
            let inner = self.unary_expr()?;
            let node = match inner.node {
                UExpr::Int(i) => UExpr::Int(-i),
                other => UExpr::Bin(
                    BinOp::Sub,
                    Box::new(Spanned {
                        node: UExpr::Int(0),
                        span: start,
                    }),
                    Box::new(Spanned {
                        node: other,
                        span: inner.span,
                    }),
                ),
            };
            return Ok(self.spanned(start, node));
        }
        self.primary()
    }

    fn primary(&mut self) -> PResult<Spanned<UExpr>> {
        let token = self.peek().clone();
        match token.tok {
            Tok::Int(i) => {
                self.next();
                Ok(Spanned {
                    node: UExpr::Int(i),
                    span: token.span,
                })
            }
            Tok::Ident(s) => {
                self.next();
                Ok(Spanned {
                    node: UExpr::Ident(s),
                    span: token.span,
                })
            }
            Tok::LParen => {
                self.next();
                let inner = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(inner)
            }
            Tok::KwIf => self.if_expr(),
            Tok::KwTable => self.table_expr(),
            _ => Err(self.unexpected(vec![
                "an integer".into(),
                "an identifier".into(),
                "`(`".into(),
                "`if`".into(),
                "`table`".into(),
            ])),
        }
    }

    fn table_expr(&mut self) -> PResult<Spanned<UExpr>> {
        let start = self.expect(Tok::KwTable)?.span;
        self.expect(Tok::LParen)?;
        let mut keys = vec![self.ident("a variable name")?];
        loop {
            match self.peek().tok {
                Tok::Comma => {
                    self.next();
                    keys.push(self.ident("a variable name")?);
                }
                Tok::RParen => {
                    self.next();
                    break;
                }
                _ => return Err(self.unexpected(vec!["`,`".into(), "`)`".into()])),
            }
        }
        self.expect(Tok::LBrace)?;
        let mut rows = Vec::new();
        loop {
            let open = self.expect(Tok::LParen)?;
            let mut key = vec![self.label()?];
            loop {
                match self.peek().tok {
                    Tok::Comma => {
                        self.next();
                        key.push(self.label()?);
                    }
                    Tok::RParen => {
                        self.next();
                        break;
                    }
                    _ => return Err(self.unexpected(vec!["`,`".into(), "`)`".into()])),
                }
            }
            self.expect(Tok::Arrow)?;
            let value = self.label()?;
            let span = SourceSpan {
                start: open.span.start,
                end: value.span.end,
                line: open.span.line,
                col: open.span.col,
            };
            rows.push(URow { key, value, span });
            match self.peek().tok {
                Tok::Comma => {
                    self.next();
                    // Allow a trailing comma before the closing brace.
                    if self.peek().tok == Tok::RBrace {
                        self.next();
                        break;
                    }
                }
                Tok::RBrace => {
                    self.next();
                    break;
                }
                _ => return Err(self.unexpected(vec!["`,`".into(), "`}`".into()])),
            }
        }
        Ok(self.spanned(start, UExpr::Table(UTable { keys, rows })))
    }

    fn model(&mut self) -> PResult<(Spanned<String>, Vec<Decl>)> {
        self.expect(Tok::KwScm)?;
        let name = self.ident("a model name")?;
        self.expect(Tok::LBrace)?;
        let mut decls = Vec::new();
        while self.peek().tok != Tok::RBrace {
            decls.push(self.decl()?);
        }
        self.expect(Tok::RBrace)?;
        self.expect(Tok::Eof)?;
        Ok((name, decls))
    }
}

// ---------------------------------------------------------------------------
// Semantic analysis

struct Analyzer<'a> {
    decls: &'a [Decl],
    /// id -> (decl position, is_noise)
    symbols: BTreeMap<String, (usize, bool)>,
    errors: Vec<ParseError>,
}

fn semantic(span: SourceSpan, message: String, expected: Vec<String>) -> ParseError {
    ParseError::new(span, message, expected)
}

impl<'a> Analyzer<'a> {
    fn range_of_symbol(&self, id: &str) -> Option<FiniteRange> {
        let &(pos, is_noise) = self.symbols.get(id)?;
        match &self.decls[pos] {
            Decl::Noise(n) if is_noise => {
                FiniteRange::new(n.pairs.iter().map(|(l, _)| l.node.clone()).collect()).ok()
            }
            Decl::Var(v) if !is_noise => {
                FiniteRange::new(v.labels.iter().map(|l| l.node.clone()).collect()).ok()
            }
            _ => None,
        }
    }

    fn resolve(&mut self, e: &Spanned<UExpr>, refs: &mut Vec<(String, bool)>) -> Expr {
        match &e.node {
            UExpr::Int(i) => Expr::Int(*i),
            UExpr::Ident(name) => {
                if let Some(&(_, is_noise)) = self.symbols.get(name) {
                    if !refs.iter().any(|(r, _)| r == name) {
                        refs.push((name.clone(), is_noise));
                    }
                    Expr::Var(VarId::new(name.clone()))
                } else {
                    Expr::Label(name.clone())
                }
            }
            UExpr::Bin(op, a, b) => Expr::Bin(
                *op,
                Box::new(self.resolve(a, refs)),
                Box::new(self.resolve(b, refs)),
            ),
            UExpr::Not(a) => Expr::Not(Box::new(self.resolve(a, refs))),
            UExpr::If(c, t, o) => Expr::If(
                Box::new(self.resolve(c, refs)),
                Box::new(self.resolve(t, refs)),
                Box::new(self.resolve(o, refs)),
            ),
            UExpr::Table(t) => {
                let mut keys = Vec::new();
                for k in &t.keys {
                    match self.symbols.get(&k.node) {
                        Some(&(_, is_noise)) => {
                            if !refs.iter().any(|(r, _)| r == &k.node) {
                                refs.push((k.node.clone(), is_noise));
                            }
                        }
                        None => self.errors.push(semantic(
                            k.span,
                            format!("unknown table key `{}`", k.node),
                            vec!["a declared variable".into()],
                        )),
                    }
                    keys.push(VarId::new(k.node.clone()));
                }
                let key_ranges: Vec<Option<FiniteRange>> =
                    t.keys.iter().map(|k| self.range_of_symbol(&k.node)).collect();
                let mut rows = BTreeMap::new();
                for row in &t.rows {
                    if row.key.len() != t.keys.len() {
                        self.errors.push(semantic(
                            row.span,
                            format!(
                                "table row has {} entries, key has {}",
                                row.key.len(),
                                t.keys.len()
                            ),
                            vec![format!("{} entries", t.keys.len())],
                        ));
                        continue;
                    }
                    for (k, label) in row.key.iter().enumerate() {
                        if let Some(Some(range)) = key_ranges.get(k) {
                            if range.index_of(&label.node).is_none() {
                                self.errors.push(semantic(
                                    label.span,
                                    format!(
                                        "`{}` is not a value of `{}`",
                                        label.node,
                                        t.keys[k].node
                                    ),
                                    vec![format!("one of {{{}}}", range.labels().join(", "))],
                                ));
                            }
                        }
                    }
                    let key: Vec<String> = row.key.iter().map(|l| l.node.clone()).collect();
                    if rows.insert(key, row.value.node.clone()).is_some() {
                        self.errors.push(semantic(
                            row.span,
                            "duplicate table row".into(),
                            vec!["each key tuple to appear once".into()],
                        ));
                    }
                }
                Expr::Table(TableExpr { keys, rows })
            }
        }
    }

    /// Labels literals must belong to the target's range or to the range of
    /// some variable referenced in the body; anything else is a typo.
    fn check_labels(
        &mut self,
        e: &Spanned<UExpr>,
        allowed: &BTreeSet<String>,
    ) {
        match &e.node {
            UExpr::Ident(name) => {
                if !self.symbols.contains_key(name) && !allowed.contains(name) {
                    self.errors.push(semantic(
                        e.span,
                        format!("unknown variable or label `{name}`"),
                        vec!["a declared variable".into(), "a range label".into()],
                    ));
                }
            }
            UExpr::Int(_) => {}
            UExpr::Bin(_, a, b) => {
                self.check_labels(a, allowed);
                self.check_labels(b, allowed);
            }
            UExpr::Not(a) => self.check_labels(a, allowed),
            UExpr::If(c, t, o) => {
                self.check_labels(c, allowed);
                self.check_labels(t, allowed);
                self.check_labels(o, allowed);
            }
            UExpr::Table(_) => {}
        }
    }
}

/// Parses and validates a model; on success the returned model passes
/// validation as-is.
pub fn parse_scm(text: &str) -> Result<Scm, ParseError> {
    let normalized: String;
    let src = if text.contains("\r\n") {
        normalized = text.replace("\r\n", "\n");
        &normalized
    } else {
        text
    };
    let tokens = Lexer::new(src).tokenize()?;
    let mut parser = Parser { tokens, pos: 0 };
    let (name, decls) = parser.model()?;

    // Symbol table, with duplicate detection.
    let mut symbols: BTreeMap<String, (usize, bool)> = BTreeMap::new();
    let mut errors: Vec<ParseError> = Vec::new();
    for (pos, d) in decls.iter().enumerate() {
        let (id, is_noise) = match d {
            Decl::Noise(n) => (&n.id, true),
            Decl::Var(v) => (&v.id, false),
        };
        if symbols.contains_key(&id.node) {
            errors.push(semantic(
                id.span,
                format!("duplicate definition of `{}`", id.node),
                vec!["a fresh identifier".into()],
            ));
        } else {
            symbols.insert(id.node.clone(), (pos, is_noise));
        }
    }

    // Noise declarations: ranges and exact normalization.
    let mut noise_info: BTreeMap<String, (FiniteRange, Vec<Rational>, SourceSpan)> =
        BTreeMap::new();
    for d in &decls {
        let Decl::Noise(n) = d else { continue };
        let labels: Vec<String> = n.pairs.iter().map(|(l, _)| l.node.clone()).collect();
        let mut seen = BTreeSet::new();
        for (l, _) in &n.pairs {
            if !seen.insert(l.node.clone()) {
                errors.push(semantic(
                    l.span,
                    format!("duplicate label `{}` in pmf", l.node),
                    vec!["distinct labels".into()],
                ));
            }
        }
        let masses: Vec<Rational> = n.pairs.iter().map(|(_, m)| m.clone()).collect();
        let total: Rational = masses.iter().sum();
        if !total.is_one() {
            errors.push(semantic(
                n.pmf_span,
                format!("pmf masses sum to {}", format_rational(&total)),
                vec!["masses summing to exactly 1".into()],
            ));
        }
        if let Ok(range) = FiniteRange::new(labels) {
            noise_info.insert(n.id.node.clone(), (range, masses, n.id.span));
        }
    }

    // Variable declarations: ranges, bodies, parent and noise wiring.
    let mut analyzer = Analyzer {
        decls: &decls,
        symbols: symbols.clone(),
        errors: Vec::new(),
    };
    struct PendingVar {
        id: Spanned<String>,
        range: FiniteRange,
        body: Expr,
        body_span: SourceSpan,
        parents: Vec<String>,
        noise: Option<String>,
    }
    let mut pending: Vec<PendingVar> = Vec::new();
    let mut noise_users: BTreeMap<String, Vec<Spanned<String>>> = BTreeMap::new();
    for d in &decls {
        let Decl::Var(v) = d else { continue };
        let mut seen = BTreeSet::new();
        for l in &v.labels {
            if !seen.insert(l.node.clone()) {
                errors.push(semantic(
                    l.span,
                    format!("duplicate label `{}` in range", l.node),
                    vec!["distinct labels".into()],
                ));
            }
        }
        let Ok(range) = FiniteRange::new(v.labels.iter().map(|l| l.node.clone()).collect())
        else {
            continue;
        };

        let mut refs: Vec<(String, bool)> = Vec::new();
        let body = analyzer.resolve(&v.body, &mut refs);

        // Allowed label literals: target range plus ranges of referenced
        // variables.
        let mut allowed: BTreeSet<String> = range.labels().iter().cloned().collect();
        for (r, _) in &refs {
            if let Some(rr) = analyzer.range_of_symbol(r) {
                allowed.extend(rr.labels().iter().cloned());
            }
        }
        analyzer.check_labels(&v.body, &allowed);

        // Parents in declaration order; exactly one noise reference.
        let mut parents: Vec<(usize, String)> = Vec::new();
        let mut noises: Vec<String> = Vec::new();
        for (r, is_noise) in &refs {
            if *is_noise {
                noises.push(r.clone());
            } else if let Some(&(pos, _)) = symbols.get(r) {
                parents.push((pos, r.clone()));
            }
        }
        parents.sort();
        // Register every referenced noise variable, so a body with the
        // wrong noise count does not also trip the usage checks below.
        for n in &noises {
            noise_users.entry(n.clone()).or_default().push(v.id.clone());
        }
        let noise = match noises.len() {
            1 => Some(noises[0].clone()),
            0 => {
                errors.push(semantic(
                    v.body.span,
                    format!("assignment for `{}` references no noise variable", v.id.node),
                    vec!["exactly one noise variable in the body".into()],
                ));
                None
            }
            _ => {
                errors.push(semantic(
                    v.body.span,
                    format!(
                        "assignment for `{}` references {} noise variables ({})",
                        v.id.node,
                        noises.len(),
                        noises.join(", ")
                    ),
                    vec!["exactly one noise variable in the body".into()],
                ));
                None
            }
        };
        pending.push(PendingVar {
            id: v.id.clone(),
            range,
            body,
            body_span: v.body.span,
            parents: parents.into_iter().map(|(_, p)| p).collect(),
            noise,
        });
    }
    errors.extend(analyzer.errors);

    // Each noise variable must power exactly one assignment.
    for d in &decls {
        let Decl::Noise(n) = d else { continue };
        match noise_users.get(&n.id.node).map(|u| u.len()).unwrap_or(0) {
            0 => errors.push(semantic(
                n.id.span,
                format!("noise variable `{}` is not used by any assignment", n.id.node),
                vec!["each noise variable to power exactly one assignment".into()],
            )),
            1 => {}
            _ => {
                let users = &noise_users[&n.id.node];
                errors.push(semantic(
                    users[1].span,
                    format!(
                        "noise variable `{}` is already used by `{}`",
                        n.id.node, users[0].node
                    ),
                    vec!["a dedicated noise variable per assignment".into()],
                ));
            }
        }
    }

    if !errors.is_empty() {
        errors.sort_by(|a, b| {
            (a.span.start, &a.message).cmp(&(b.span.start, &b.message))
        });
        return Err(errors.remove(0));
    }

    // Assemble mechanisms in variable-declaration order.
    let mut mechanisms = Vec::new();
    let mut var_spans: BTreeMap<String, SourceSpan> = BTreeMap::new();
    for p in pending {
        let noise_id = p.noise.expect("checked above");
        let (noise_range, masses, _) = noise_info
            .get(&noise_id)
            .expect("noise declared")
            .clone();
        let noise_dist = match Pmf::single(noise_id.clone(), noise_range.clone(), masses) {
            Ok(d) => d,
            Err(e) => {
                return Err(semantic(
                    p.id.span,
                    format!("noise distribution for `{noise_id}` is invalid: {e}"),
                    vec!["a normalized pmf".into()],
                ))
            }
        };
        var_spans.insert(p.id.node.clone(), p.body_span);
        mechanisms.push(Mechanism {
            variable: Variable::new(p.id.node.clone(), p.range),
            assignment: Assignment {
                target: VarId::new(p.id.node.clone()),
                parents: p.parents.iter().map(|p| VarId::new(p.clone())).collect(),
                noise: VarId::new(noise_id.clone()),
                body: p.body,
            },
            noise: Variable::new(noise_id, noise_range),
            noise_dist,
        });
    }

    let model = Scm::new(name.node, mechanisms);
    let report = model.validate();
    if report.is_valid() {
        return Ok(model);
    }

    // Map validation findings back onto source spans.
    let whole = SourceSpan {
        start: 0,
        end: src.len(),
        line: 1,
        col: 1,
    };
    let mut verrors: Vec<ParseError> = Vec::new();
    for v in &report.violations {
        let e = match v {
            Violation::Cycle { path } => {
                let first = path
                    .iter()
                    .filter_map(|p| var_spans.get(p.as_str()))
                    .min_by_key(|s| s.start)
                    .copied()
                    .unwrap_or(whole);
                let names: Vec<&str> = path.iter().map(|p| p.as_str()).collect();
                semantic(
                    first,
                    format!("cycle in the parent graph: {}", names.join(" -> ")),
                    vec!["an acyclic dependency graph".into()],
                )
            }
            Violation::NonTotal {
                target,
                witness,
                detail,
            } => {
                let span = var_spans
                    .get(target.as_str())
                    .copied()
                    .unwrap_or(whole);
                let env: Vec<String> =
                    witness.iter().map(|(v, l)| format!("{v}={l}")).collect();
                semantic(
                    span,
                    format!(
                        "assignment for `{target}` is not total at ({}): {detail}",
                        env.join(", ")
                    ),
                    vec!["every input to map into the target range".into()],
                )
            }
            other => semantic(whole, other.to_string(), vec!["a well-formed model".into()]),
        };
        verrors.push(e);
    }
    verrors.sort_by(|a, b| (a.span.start, &a.message).cmp(&(b.span.start, &b.message)));
    Err(verrors.remove(0))
}

/// Parses a bare pmf literal, e.g. `{x0: 1/2, x1: 1/2}`. Used verbatim by
/// command-line protocol and intervention flags.
pub fn parse_pmf_text(text: &str) -> Result<Vec<(String, Rational)>, ParseError> {
    let tokens = Lexer::new(text).tokenize()?;
    let mut parser = Parser { tokens, pos: 0 };
    let (pairs, _) = parser.pmf()?;
    parser.expect(Tok::Eof)?;
    Ok(pairs
        .into_iter()
        .map(|(l, m)| (l.node, m))
        .collect())
}

// ---------------------------------------------------------------------------
// Serializer

fn write_pmf(out: &mut String, dist: &Pmf) {
    let (_, range) = &dist.scope()[0];
    let pairs: Vec<String> = range
        .labels()
        .iter()
        .zip(dist.masses())
        .map(|(l, m)| format!("{l}: {}", format_rational(m)))
        .collect();
    let _ = write!(out, "{{{}}}", pairs.join(", "));
}

fn write_body(out: &mut String, model: &Scm, body: &Expr) {
    if let Expr::Table(t) = body {
        // Canonical table layout: one row per line, sorted by the value
        // index tuple of the key variables.
        let ranges: Vec<Option<FiniteRange>> = t
            .keys
            .iter()
            .map(|k| {
                model
                    .variable(k.as_str())
                    .map(|v| v.range.clone())
                    .or_else(|| {
                        model
                            .noise_vars()
                            .find(|n| n.id == *k)
                            .map(|n| n.range.clone())
                    })
            })
            .collect();
        let mut rows: Vec<(Vec<usize>, &Vec<String>, &String)> = t
            .rows
            .iter()
            .map(|(key, val)| {
                let idx: Vec<usize> = key
                    .iter()
                    .enumerate()
                    .map(|(k, label)| {
                        ranges[k]
                            .as_ref()
                            .and_then(|r| r.index_of(label))
                            .unwrap_or(usize::MAX)
                    })
                    .collect();
                (idx, key, val)
            })
            .collect();
        rows.sort();
        let keys: Vec<&str> = t.keys.iter().map(|k| k.as_str()).collect();
        let _ = write!(out, "table ({}) {{", keys.join(", "));
        for (i, (_, key, val)) in rows.iter().enumerate() {
            let sep = if i + 1 < rows.len() { "," } else { "" };
            let _ = write!(out, "\n    ({}) -> {}{}", key.join(", "), val, sep);
        }
        out.push_str("\n  }");
    } else {
        let _ = crate::expr::write_expr(out, body, 0);
    }
}

/// Canonical text for a model: mechanisms in declaration order, each as a
/// `noise` line followed by its `var` line, rationals normalized, table
/// rows sorted by value-index tuple, LF line endings. Parsing the output
/// reproduces the model structurally.
pub fn serialize_scm(model: &Scm) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "scm {} {{", model.name());
    for m in model.mechanisms() {
        let _ = write!(out, "  noise {} ~ ", m.noise.id);
        write_pmf(&mut out, &m.noise_dist);
        out.push('\n');
        let _ = write!(
            out,
            "  var {} : {{{}}} = ",
            m.variable.id,
            m.variable.range.labels().join(", ")
        );
        write_body(&mut out, model, &m.assignment.body);
        out.push('\n');
    }
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::rat;

    const ADDITIVE: &str = "scm paper_ex1 {\n  noise N_X ~ {0: 1/2, 1: 1/2}\n  var X : {0, 1} = N_X\n  noise N_Y ~ {0: 1/2, 1: 1/2}\n  var Y : {0, 1, 2} = X + N_Y\n}\n";

    #[test]
    fn parses_the_additive_model() {
        let model = parse_scm(ADDITIVE).unwrap();
        assert_eq!(model.name(), "paper_ex1");
        let py = model.entailed(&["Y"]).unwrap();
        assert_eq!(py.masses(), &[rat(1, 4), rat(1, 2), rat(1, 4)]);
    }

    #[test]
    fn serialization_is_the_identity_on_canonical_text() {
        let model = parse_scm(ADDITIVE).unwrap();
        assert_eq!(serialize_scm(&model), ADDITIVE);
        let reparsed = parse_scm(&serialize_scm(&model)).unwrap();
        assert_eq!(reparsed, model);
    }

    #[test]
    fn cycle_is_a_parse_error_naming_both_variables() {
        let text = "scm loop {\n  noise N_X ~ {0: 1}\n  noise N_Y ~ {0: 1}\n  var X : {0, 1} = Y + N_X\n  var Y : {0, 1} = X + N_Y\n}\n";
        let err = parse_scm(text).unwrap_err();
        assert!(err.message.contains("cycle"), "{err}");
        assert!(err.message.contains('X') && err.message.contains('Y'), "{err}");
        assert_eq!(err.span.line, 4);
    }

    #[test]
    fn unnormalized_pmf_is_rejected() {
        let text = "scm m {\n  noise N ~ {0: 1/2, 1: 1/3}\n  var X : {0, 1} = N\n}\n";
        let err = parse_scm(text).unwrap_err();
        assert!(err.message.contains("5/6"), "{err}");
        assert_eq!(err.span.line, 2);
    }

    #[test]
    fn guarded_symbolic_model_parses() {
        let text = "scm gate {\n  noise N_X ~ {x0: 9/10, x1: 1/10}\n  var X : {x0, x1} = N_X\n  noise N_Y ~ {y0: 1/2, y1: 1/2}\n  var Y : {y0, y1} = if X = x1 then N_Y else y0\n}\n";
        let model = parse_scm(text).unwrap();
        let py = model.entailed(&["Y"]).unwrap();
        assert_eq!(py.masses(), &[rat(19, 20), rat(1, 20)]);
        // Canonical fixpoint after one round.
        let canon = serialize_scm(&model);
        assert_eq!(serialize_scm(&parse_scm(&canon).unwrap()), canon);
    }

    #[test]
    fn table_bodies_round_trip() {
        let text = "scm t {\n  noise N_A ~ {0: 1/3, 1: 2/3}\n  var A : {0, 1} = N_A\n  noise N_B ~ {u: 1}\n  var B : {b0, b1} = table (A, N_B) {\n    (0, u) -> b0,\n    (1, u) -> b1\n  }\n}\n";
        let model = parse_scm(text).unwrap();
        assert_eq!(serialize_scm(&model), text);
        assert_eq!(parse_scm(&serialize_scm(&model)).unwrap(), model);
    }

    #[test]
    fn minimal_model_serializes_to_four_lines() {
        let text = "scm one {\n  noise N ~ {0: 1}\n  var X : {0} = N\n}\n";
        let model = parse_scm(text).unwrap();
        let canon = serialize_scm(&model);
        assert_eq!(canon.lines().count(), 4);
        assert_eq!(canon, text);
    }

    #[test]
    fn missing_table_row_is_a_totality_error() {
        let text = "scm t {\n  noise N ~ {0: 1/2, 1: 1/2}\n  var A : {0, 1} = N\n  noise M ~ {0: 1}\n  var B : {0, 1} = table (A, M) {\n    (0, 0) -> 1\n  }\n}\n";
        let err = parse_scm(text).unwrap_err();
        assert!(err.message.contains("not total"), "{err}");
        assert!(err.message.contains("A=1"), "{err}");
    }

    #[test]
    fn unknown_identifier_is_reported_with_span() {
        let text = "scm m {\n  noise N ~ {0: 1}\n  var X : {0, 1} = Q + N\n}\n";
        let err = parse_scm(text).unwrap_err();
        assert!(err.message.contains('Q'), "{err}");
        assert_eq!(err.span.line, 3);
        assert!(!err.expected.is_empty());
    }

    #[test]
    fn errors_are_ordered_by_span() {
        // Two problems: a bad pmf sum (line 2) and an unknown ident (line 3).
        let text = "scm m {\n  noise N ~ {0: 1/3}\n  var X : {0, 1} = Q + N\n}\n";
        let err = parse_scm(text).unwrap_err();
        assert_eq!(err.span.line, 2, "{err}");
    }

    #[test]
    fn pmf_text_parses_for_protocol_flags() {
        let pairs = parse_pmf_text("{0: 2/3, 1: 1/3}").unwrap();
        assert_eq!(pairs[0], ("0".to_owned(), rat(2, 3)));
        assert_eq!(pairs[1], ("1".to_owned(), rat(1, 3)));
        assert!(parse_pmf_text("{0: 2/3} trailing").is_err());
    }
}
