//! Lexer and rule parser shared by grammar files and logic snippets.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use crate::logic::{ArithOp, Atom, CmpOp, Literal, LogicFragment, Rule, Term, Value};

pub(crate) fn escape_terminal(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub msg: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.line, self.col, self.msg)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) enum Tok {
    Ident(String),
    Var(String),
    Int(i64),
    Str(String),
    Directive(String),
    Arrow,
    Pipe,
    LBrace,
    RBrace,
    LParen,
    RParen,
    Comma,
    Dot,
    If,
    At,
    Cmp(CmpOp),
    Plus,
    Minus,
    Star,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) | Tok::Var(s) => write!(f, "`{s}`"),
            Tok::Int(i) => write!(f, "`{i}`"),
            Tok::Str(s) => write!(f, "string \"{s}\""),
            Tok::Directive(s) => write!(f, "`#{s}`"),
            Tok::Arrow => write!(f, "`->`"),
            Tok::Pipe => write!(f, "`|`"),
            Tok::LBrace => write!(f, "`{{`"),
            Tok::RBrace => write!(f, "`}}`"),
            Tok::LParen => write!(f, "`(`"),
            Tok::RParen => write!(f, "`)`"),
            Tok::Comma => write!(f, "`,`"),
            Tok::Dot => write!(f, "`.`"),
            Tok::If => write!(f, "`:-`"),
            Tok::At => write!(f, "`@`"),
            Tok::Cmp(op) => write!(f, "`{}`", op.symbol()),
            Tok::Plus => write!(f, "`+`"),
            Tok::Minus => write!(f, "`-`"),
            Tok::Star => write!(f, "`*`"),
            Tok::Eof => write!(f, "end of input"),
        }
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Spanned {
    pub tok: Tok,
    pub line: usize,
    pub col: usize,
}

pub(crate) fn lex(src: &str) -> Result<Vec<Spanned>, ParseError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    let err = |line, col, msg: String| ParseError { line, col, msg };
    while i < chars.len() {
        let c = chars[i];
        let (sl, sc) = (line, col);
        let adv = |n: usize, i: &mut usize, col: &mut usize| {
            *i += n;
            *col += n;
        };
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            adv(1, &mut i, &mut col);
            continue;
        }
        if c == '%' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let two: String = chars[i..(i + 2).min(chars.len())].iter().collect();
        let tok = match two.as_str() {
            "->" => Some(Tok::Arrow),
            ":-" => Some(Tok::If),
            "!=" => Some(Tok::Cmp(CmpOp::Ne)),
            "<=" => Some(Tok::Cmp(CmpOp::Le)),
            ">=" => Some(Tok::Cmp(CmpOp::Ge)),
            _ => None,
        };
        if let Some(t) = tok {
            out.push(Spanned { tok: t, line: sl, col: sc });
            adv(2, &mut i, &mut col);
            continue;
        }
        let single = match c {
            '|' => Some(Tok::Pipe),
            '{' => Some(Tok::LBrace),
            '}' => Some(Tok::RBrace),
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            ',' => Some(Tok::Comma),
            '.' => Some(Tok::Dot),
            '@' => Some(Tok::At),
            '=' => Some(Tok::Cmp(CmpOp::Eq)),
            '<' => Some(Tok::Cmp(CmpOp::Lt)),
            '>' => Some(Tok::Cmp(CmpOp::Gt)),
            '+' => Some(Tok::Plus),
            '-' => Some(Tok::Minus),
            '*' => Some(Tok::Star),
            _ => None,
        };
        if let Some(t) = single {
            out.push(Spanned { tok: t, line: sl, col: sc });
            adv(1, &mut i, &mut col);
            continue;
        }
        if c == '"' {
            let mut s = String::new();
            i += 1;
            col += 1;
            loop {
                match chars.get(i) {
                    None | Some('\n') => return Err(err(sl, sc, "unterminated string".into())),
                    Some('"') => {
                        i += 1;
                        col += 1;
                        break;
                    }
                    Some('\\') => {
                        let e = match chars.get(i + 1) {
                            Some('"') => '"',
                            Some('\\') => '\\',
                            Some('n') => '\n',
                            Some('t') => '\t',
                            other => {
                                return Err(err(line, col, format!("bad escape \\{}", other.map_or(String::new(), |c| c.to_string()))))
                            }
                        };
                        s.push(e);
                        i += 2;
                        col += 2;
                    }
                    Some(ch) => {
                        s.push(*ch);
                        i += 1;
                        col += 1;
                    }
                }
            }
            out.push(Spanned { tok: Tok::Str(s), line: sl, col: sc });
            continue;
        }
        if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let text: String = chars[start..i].iter().collect();
            col += i - start;
            let v = text.parse::<i64>().map_err(|_| err(sl, sc, format!("integer {text} out of range")))?;
            out.push(Spanned { tok: Tok::Int(v), line: sl, col: sc });
            continue;
        }
        if c == '#' || c.is_alphabetic() || c == '_' {
            let start = i;
            i += 1;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_' || chars[i] == '\'') {
                i += 1;
            }
            let text: String = chars[start..i].iter().collect();
            col += i - start;
            let tok = if let Some(d) = text.strip_prefix('#') {
                Tok::Directive(d.to_string())
            } else if c.is_uppercase() || c == '_' {
                Tok::Var(text)
            } else {
                Tok::Ident(text)
            };
            out.push(Spanned { tok, line: sl, col: sc });
            continue;
        }
        return Err(err(sl, sc, format!("unexpected character `{c}`")));
    }
    out.push(Spanned { tok: Tok::Eof, line, col });
    Ok(out)
}

pub(crate) struct Cursor<'t> {
    pub toks: &'t [Spanned],
    pub pos: usize,
}

impl<'t> Cursor<'t> {
    pub fn new(toks: &'t [Spanned]) -> Self {
        Cursor { toks, pos: 0 }
    }

    pub fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    pub fn peek_at(&self, n: usize) -> &Tok {
        &self.toks[(self.pos + n).min(self.toks.len() - 1)].tok
    }

    pub fn here(&self) -> (usize, usize) {
        let s = &self.toks[self.pos];
        (s.line, s.col)
    }

    pub fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    pub fn error(&self, msg: impl Into<String>) -> ParseError {
        let (line, col) = self.here();
        ParseError { line, col, msg: msg.into() }
    }

    pub fn expect(&mut self, t: Tok) -> Result<(), ParseError> {
        if *self.peek() == t {
            self.bump();
            Ok(())
        } else {
            Err(self.error(format!("expected {t}, found {}", self.peek())))
        }
    }
}

/// A parsed rule.
pub(crate) struct RuleSrc {
    pub rule: Rule,
    /// `@k` references with their positions, for range checks.
    pub child_refs: Vec<(usize, usize, usize)>,
}

struct Vars {
    names: Vec<Arc<str>>,
    index: HashMap<String, usize>,
}

impl Vars {
    fn get(&mut self, name: &str) -> Term {
        if name == "_" {
            self.names.push(Arc::from("_"));
            return Term::Var { name: Arc::from("_"), index: self.names.len() - 1 };
        }
        let idx = *self.index.entry(name.to_string()).or_insert_with(|| {
            self.names.push(Arc::from(name));
            self.names.len() - 1
        });
        Term::Var { name: self.names[idx].clone(), index: idx }
    }
}

/// Parses rules until `}` or end of input.
pub(crate) fn parse_rules(c: &mut Cursor) -> Result<Vec<RuleSrc>, ParseError> {
    let mut out = Vec::new();
    while !matches!(c.peek(), Tok::RBrace | Tok::Eof) {
        out.push(parse_rule(c)?);
    }
    Ok(out)
}

fn parse_rule(c: &mut Cursor) -> Result<RuleSrc, ParseError> {
    let (line, col) = c.here();
    let mut vars = Vars { names: Vec::new(), index: HashMap::new() };
    let mut refs = Vec::new();
    let head = if *c.peek() == Tok::If {
        None
    } else {
        let Literal::Pos { atom, child: None } = parse_literal(c, &mut vars, &mut refs)? else {
            return Err(ParseError { line, col, msg: "rule head must be a plain atom".into() });
        };
        Some(atom)
    };
    let mut body = Vec::new();
    if *c.peek() == Tok::If {
        c.bump();
        loop {
            body.push(parse_literal(c, &mut vars, &mut refs)?);
            if *c.peek() == Tok::Comma {
                c.bump();
            } else {
                break;
            }
        }
    }
    c.expect(Tok::Dot)?;
    let rule = Rule::new(head, body, vars.names).map_err(|e| ParseError { line, col, msg: e.to_string() })?;
    Ok(RuleSrc { rule, child_refs: refs })
}

fn parse_literal(c: &mut Cursor, vars: &mut Vars, refs: &mut Vec<(usize, usize, usize)>) -> Result<Literal, ParseError> {
    let negated = matches!(c.peek(), Tok::Ident(s) if s == "not") && !matches!(c.peek_at(1), Tok::LParen | Tok::Cmp(_));
    if negated {
        c.bump();
    }
    let is_atom = match (c.peek(), c.peek_at(1)) {
        (Tok::Ident(_), Tok::LParen) => true,
        (Tok::Ident(_), Tok::Cmp(_) | Tok::Plus | Tok::Minus | Tok::Star) => false,
        (Tok::Ident(_), _) => true,
        _ => false,
    };
    if !is_atom {
        if negated {
            return Err(c.error("expected an atom after `not`"));
        }
        let left = parse_expr(c, vars)?;
        let Tok::Cmp(op) = c.peek().clone() else {
            return Err(c.error(format!("expected a comparison operator, found {}", c.peek())));
        };
        c.bump();
        let right = parse_expr(c, vars)?;
        return Ok(Literal::Cmp { op, left, right });
    }
    let Tok::Ident(pred) = c.bump() else { unreachable!() };
    let mut args = Vec::new();
    if *c.peek() == Tok::LParen {
        c.bump();
        loop {
            args.push(parse_expr(c, vars)?);
            match c.bump() {
                Tok::Comma => continue,
                Tok::RParen => break,
                t => return Err(c.error(format!("expected `,` or `)`, found {t}"))),
            }
        }
    }
    let mut child = None;
    if *c.peek() == Tok::At {
        let (l, col) = c.here();
        c.bump();
        match c.bump() {
            Tok::Int(k) if k >= 1 => {
                child = Some(k as usize);
                refs.push((k as usize, l, col));
            }
            t => return Err(c.error(format!("expected a child index after `@`, found {t}"))),
        }
    }
    let atom = Atom { pred: Arc::from(pred.as_str()), args };
    Ok(if negated { Literal::Neg { atom, child } } else { Literal::Pos { atom, child } })
}

fn parse_expr(c: &mut Cursor, vars: &mut Vars) -> Result<Term, ParseError> {
    let mut left = parse_product(c, vars)?;
    loop {
        let op = match c.peek() {
            Tok::Plus => ArithOp::Add,
            Tok::Minus => ArithOp::Sub,
            _ => return Ok(left),
        };
        c.bump();
        let right = parse_product(c, vars)?;
        left = Term::Arith(op, Box::new(left), Box::new(right));
    }
}

fn parse_product(c: &mut Cursor, vars: &mut Vars) -> Result<Term, ParseError> {
    let mut left = parse_primary(c, vars)?;
    while *c.peek() == Tok::Star {
        c.bump();
        let right = parse_primary(c, vars)?;
        left = Term::Arith(ArithOp::Mul, Box::new(left), Box::new(right));
    }
    Ok(left)
}

fn parse_primary(c: &mut Cursor, vars: &mut Vars) -> Result<Term, ParseError> {
    match c.bump() {
        Tok::Var(v) => Ok(vars.get(&v)),
        Tok::Int(i) => Ok(Term::Const(Value::Int(i))),
        Tok::Minus => match c.bump() {
            Tok::Int(i) => Ok(Term::Const(Value::Int(-i))),
            t => Err(c.error(format!("expected an integer after `-`, found {t}"))),
        },
        Tok::Str(s) => Ok(Term::Const(Value::string(&s))),
        Tok::Ident(s) => {
            if *c.peek() == Tok::LParen {
                return Err(c.error("function terms are not supported"));
            }
            Ok(Term::Const(Value::sym(&s)))
        }
        Tok::LParen => {
            let mut items = vec![parse_expr(c, vars)?];
            let mut tuple = false;
            while *c.peek() == Tok::Comma {
                c.bump();
                tuple = true;
                if *c.peek() == Tok::RParen {
                    break;
                }
                items.push(parse_expr(c, vars)?);
            }
            c.expect(Tok::RParen)?;
            if !tuple {
                return Ok(items.pop().expect("one item"));
            }
            // Fold ground tuples into constants so printing round-trips.
            if items.iter().all(|t| matches!(t, Term::Const(_))) {
                let vals = items
                    .into_iter()
                    .map(|t| match t {
                        Term::Const(v) => v,
                        _ => unreachable!(),
                    })
                    .collect();
                return Ok(Term::Const(Value::tuple(vals)));
            }
            Ok(Term::Tuple(items))
        }
        t => Err(c.error(format!("expected a term, found {t}"))),
    }
}

impl LogicFragment {
    /// Parses a standalone list of rules.
    pub fn parse(src: &str) -> Result<LogicFragment, ParseError> {
        let toks = lex(src)?;
        let mut c = Cursor::new(&toks);
        let rules = parse_rules(&mut c)?;
        if *c.peek() != Tok::Eof {
            return Err(c.error(format!("unexpected {}", c.peek())));
        }
        LogicFragment::new(rules.into_iter().map(|r| r.rule).collect())
            .map_err(|e| ParseError { line: 1, col: 1, msg: e.to_string() })
    }
}
