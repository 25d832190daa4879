//! Concrete syntax for processes, declarations, stacks, and relation
//! certificates.
//!
//! ```text
//! decl out x, y(val, cont)      // kinds, optional per-name sorts
//! decl in u. decl cont p, q. decl ref l. decl val 0..3
//! proc P = u().( x<> | y().x<> ) | z().y<> | v<>
//! stack S = q^i, p^o
//! relation R {
//!   mode = seq-refs;
//!   id;
//!   triple eta=1; refs="l"; lhs=P; rhs=Q;
//!   triple stack="q^i,p^o"; lhs=new a. x<a,q>; rhs=Q2;
//! }
//! ```
//!
//! Reference-cell macros (`read l(m).P`, `write l<n>.P`, `swap l<n>(m).P`,
//! `faa l<n>(m).P` and the derived `swapD`/`faaD`) expand at parse time.

use crate::equiv::{CertMode, CertTriple, RelationCert, Typing};
use crate::names::{Name, NameKind};
use crate::process::{Obj, Process};
use crate::refs::{self, RefMacro};
use crate::wb::{Stack, StackTag};
use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pos {
    pub line: usize,
    pub col: usize,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("{pos}: syntax error: {msg}")]
    Syntax { pos: Pos, msg: String },
    #[error("{pos}: undeclared name `{id}`")]
    UndeclaredName { pos: Pos, id: String },
    #[error("{pos}: value literal {v} outside the declared domain (size {size})")]
    ValueOutOfDomain { pos: Pos, v: u32, size: u32 },
    #[error("{pos}: {violation}")]
    IllFormed { pos: Pos, violation: crate::process::SyntaxViolation },
    #[error("{pos}: macro expansion: {err}")]
    Macro { pos: Pos, err: refs::FreshnessViolation },
    #[error("{pos}: ill-formed stack: {msg}")]
    BadStack { pos: Pos, msg: String },
}

/// One parsed source file.
#[derive(Debug, Clone, Default)]
pub struct SourceUnit {
    pub decls: BTreeMap<Arc<str>, NameKind>,
    /// Explicitly declared object signatures (sorting entries).
    pub sigs: BTreeMap<Arc<str>, Vec<NameKind>>,
    /// Size of the value domain; 0 when not declared.
    pub val_domain: u32,
    pub defs: Vec<(String, Process)>,
    pub stacks: Vec<(String, Stack)>,
    pub relations: Vec<RelationCert>,
}

impl SourceUnit {
    pub fn def(&self, name: &str) -> Option<&Process> {
        self.defs.iter().find(|(n, _)| n == name).map(|(_, p)| p)
    }

    pub fn stack(&self, name: &str) -> Option<&Stack> {
        self.stacks.iter().find(|(n, _)| n == name).map(|(_, s)| s)
    }

    pub fn relation(&self, name: &str) -> Option<&RelationCert> {
        self.relations.iter().find(|r| r.name == name)
    }

    pub fn lookup_kind(&self, id: &str) -> Option<NameKind> {
        self.decls.get(id).copied()
    }
}

// ---------------------------------------------------------------------------
// lexer
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Int(u32),
    Str(String),
    LAngle,
    RAngle,
    LParen,
    RParen,
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    Dot,
    DotDot,
    Comma,
    Pipe,
    Plus,
    Bang,
    Eq,
    Semi,
    Caret,
    Colon,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{}`", s),
            Tok::Int(v) => write!(f, "`{}`", v),
            Tok::Str(s) => write!(f, "\"{}\"", s),
            Tok::LAngle => write!(f, "`<`"),
            Tok::RAngle => write!(f, "`>`"),
            Tok::LParen => write!(f, "`(`"),
            Tok::RParen => write!(f, "`)`"),
            Tok::LBrace => write!(f, "`{{`"),
            Tok::RBrace => write!(f, "`}}`"),
            Tok::LBracket => write!(f, "`[`"),
            Tok::RBracket => write!(f, "`]`"),
            Tok::Dot => write!(f, "`.`"),
            Tok::DotDot => write!(f, "`..`"),
            Tok::Comma => write!(f, "`,`"),
            Tok::Pipe => write!(f, "`|`"),
            Tok::Plus => write!(f, "`+`"),
            Tok::Bang => write!(f, "`!`"),
            Tok::Eq => write!(f, "`=`"),
            Tok::Semi => write!(f, "`;`"),
            Tok::Caret => write!(f, "`^`"),
            Tok::Colon => write!(f, "`:`"),
            Tok::Eof => write!(f, "end of input"),
        }
    }
}

fn lex(text: &str, allow_machine_names: bool) -> Result<Vec<(Tok, Pos)>, ParseError> {
    let mut out = Vec::new();
    let mut line = 1usize;
    let mut col = 1usize;
    let mut chars = text.chars().peekable();
    while let Some(&c) = chars.peek() {
        let pos = Pos { line, col };
        match c {
            '\n' => {
                chars.next();
                line += 1;
                col = 1;
            }
            c if c.is_whitespace() => {
                chars.next();
                col += 1;
            }
            '/' => {
                chars.next();
                col += 1;
                if chars.peek() == Some(&'/') {
                    while let Some(&c) = chars.peek() {
                        if c == '\n' {
                            break;
                        }
                        chars.next();
                        col += 1;
                    }
                } else {
                    return Err(ParseError::Syntax { pos, msg: "stray `/`".into() });
                }
            }
            '"' => {
                chars.next();
                col += 1;
                let mut s = String::new();
                loop {
                    match chars.next() {
                        Some('"') => {
                            col += 1;
                            break;
                        }
                        Some('\n') | None => {
                            return Err(ParseError::Syntax {
                                pos,
                                msg: "unterminated string".into(),
                            })
                        }
                        Some(c) => {
                            s.push(c);
                            col += 1;
                        }
                    }
                }
                out.push((Tok::Str(s), pos));
            }
            c if c.is_ascii_digit() => {
                let mut s = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_ascii_digit() {
                        s.push(c);
                        chars.next();
                        col += 1;
                    } else {
                        break;
                    }
                }
                let v: u32 = s.parse().map_err(|_| ParseError::Syntax {
                    pos,
                    msg: format!("integer literal `{}` out of range", s),
                })?;
                out.push((Tok::Int(v), pos));
            }
            c if c.is_alphabetic() || c == '_' || (c == '#' && allow_machine_names) => {
                let mut s = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_alphanumeric() || c == '_' || c == '\'' || c == '#' || c == '-' {
                        s.push(c);
                        chars.next();
                        col += 1;
                    } else {
                        break;
                    }
                }
                out.push((Tok::Ident(s), pos));
            }
            _ => {
                chars.next();
                col += 1;
                let tok = match c {
                    '<' => Tok::LAngle,
                    '>' => Tok::RAngle,
                    '(' => Tok::LParen,
                    ')' => Tok::RParen,
                    '{' => Tok::LBrace,
                    '}' => Tok::RBrace,
                    '[' => Tok::LBracket,
                    ']' => Tok::RBracket,
                    '.' => {
                        if chars.peek() == Some(&'.') {
                            chars.next();
                            col += 1;
                            Tok::DotDot
                        } else {
                            Tok::Dot
                        }
                    }
                    ',' => Tok::Comma,
                    '|' => Tok::Pipe,
                    '+' => Tok::Plus,
                    '!' => Tok::Bang,
                    '=' => Tok::Eq,
                    ';' => Tok::Semi,
                    '^' => Tok::Caret,
                    ':' => Tok::Colon,
                    other => {
                        return Err(ParseError::Syntax {
                            pos,
                            msg: format!("unexpected character `{}`", other),
                        })
                    }
                };
                out.push((tok, pos));
            }
        }
    }
    out.push((Tok::Eof, Pos { line, col }));
    Ok(out)
}

// ---------------------------------------------------------------------------
// parser
// ---------------------------------------------------------------------------

const RESERVED: &[&str] = &[
    "decl", "proc", "stack", "relation", "triple", "new", "tau", "read", "write", "swap", "faa",
    "swapD", "faaD", "empty",
];

struct Parser {
    toks: Vec<(Tok, Pos)>,
    at: usize,
    unit: SourceUnit,
}

/// Parse a complete source unit.
pub fn parse(text: &str) -> Result<SourceUnit, ParseError> {
    parse_with_options(text, false)
}

/// As [`parse`] but optionally admitting machine-generated `#` names
/// (used when re-reading tool output such as trace dumps).
pub fn parse_with_options(text: &str, allow_machine_names: bool) -> Result<SourceUnit, ParseError> {
    let toks = lex(text, allow_machine_names)?;
    let mut p = Parser { toks, at: 0, unit: SourceUnit::default() };
    p.unit()?;
    Ok(p.unit)
}

/// Parse one process expression against an existing unit's declarations.
pub fn parse_process(text: &str, unit: &SourceUnit) -> Result<Process, ParseError> {
    let toks = lex(text, true)?;
    let mut p = Parser { toks, at: 0, unit: unit.clone() };
    let proc = p.process()?;
    p.expect(Tok::Eof)?;
    proc.check_wellformed()
        .map_err(|violation| ParseError::IllFormed { pos: Pos { line: 1, col: 1 }, violation })?;
    Ok(proc)
}

/// Parse a stack literal like `q^i, p^o` or `empty` against a unit.
pub fn parse_stack(text: &str, unit: &SourceUnit) -> Result<Stack, ParseError> {
    let toks = lex(text, true)?;
    let mut p = Parser { toks, at: 0, unit: unit.clone() };
    let s = p.stack_literal()?;
    p.expect(Tok::Eof)?;
    Ok(s)
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].0
    }

    fn pos(&self) -> Pos {
        self.toks[self.at].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.at].0.clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn expect(&mut self, t: Tok) -> Result<(), ParseError> {
        if *self.peek() == t {
            self.bump();
            Ok(())
        } else {
            Err(ParseError::Syntax {
                pos: self.pos(),
                msg: format!("expected {}, found {}", t, self.peek()),
            })
        }
    }

    fn eat(&mut self, t: &Tok) -> bool {
        if self.peek() == t {
            self.bump();
            true
        } else {
            false
        }
    }

    fn ident(&mut self) -> Result<(String, Pos), ParseError> {
        let pos = self.pos();
        match self.bump() {
            Tok::Ident(s) => Ok((s, pos)),
            other => {
                Err(ParseError::Syntax { pos, msg: format!("expected identifier, found {}", other) })
            }
        }
    }

    fn at_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn unit(&mut self) -> Result<(), ParseError> {
        loop {
            if self.eat(&Tok::Dot) {
                continue; // declaration terminators are optional separators
            }
            if self.at_keyword("decl") {
                self.bump();
                self.decl()?;
            } else if self.at_keyword("proc") {
                self.bump();
                let (name, pos) = self.ident()?;
                self.expect(Tok::Eq)?;
                let proc = self.process()?;
                proc.check_wellformed()
                    .map_err(|violation| ParseError::IllFormed { pos, violation })?;
                self.unit.defs.push((name, proc));
            } else if self.at_keyword("stack") {
                self.bump();
                let (name, _) = self.ident()?;
                self.expect(Tok::Eq)?;
                let s = self.stack_literal()?;
                self.unit.stacks.push((name, s));
            } else if self.at_keyword("relation") {
                self.bump();
                self.relation()?;
            } else if *self.peek() == Tok::Eof {
                return Ok(());
            } else {
                return Err(ParseError::Syntax {
                    pos: self.pos(),
                    msg: format!(
                        "expected `decl`, `proc`, `stack` or `relation`, found {}",
                        self.peek()
                    ),
                });
            }
        }
    }

    fn decl(&mut self) -> Result<(), ParseError> {
        let (kw, pos) = self.ident()?;
        let kind = match kw.as_str() {
            "out" => NameKind::OutCtl,
            "in" => NameKind::InCtl,
            "cont" => NameKind::Cont,
            "ref" => NameKind::Ref,
            "val" => {
                // decl val N | decl val LO..HI (exclusive upper bound)
                // decl val m, n declares value placeholder names
                if matches!(self.peek(), Tok::Ident(_)) {
                    NameKind::Val
                } else {
                    let pos = self.pos();
                    let first = match self.bump() {
                        Tok::Int(v) => v,
                        other => {
                            return Err(ParseError::Syntax {
                                pos,
                                msg: format!("expected domain size, found {}", other),
                            })
                        }
                    };
                    let size = if self.eat(&Tok::DotDot) {
                        let hi = match self.bump() {
                            Tok::Int(v) => v,
                            other => {
                                return Err(ParseError::Syntax {
                                    pos,
                                    msg: format!("expected range end, found {}", other),
                                })
                            }
                        };
                        if first != 0 || hi == 0 {
                            return Err(ParseError::Syntax {
                                pos,
                                msg: "value ranges must have the form 0..N".into(),
                            });
                        }
                        hi
                    } else {
                        first
                    };
                    self.unit.val_domain = size;
                    return Ok(());
                }
            }
            other => {
                return Err(ParseError::Syntax {
                    pos,
                    msg: format!("unknown declaration kind `{}`", other),
                })
            }
        };
        loop {
            let (name, pos) = self.ident()?;
            if RESERVED.contains(&name.as_str()) {
                return Err(ParseError::Syntax {
                    pos,
                    msg: format!("`{}` is a reserved word", name),
                });
            }
            let id: Arc<str> = Arc::from(name.as_str());
            // optional object signature: x(val, cont)
            if self.eat(&Tok::LParen) {
                let mut sig = Vec::new();
                if !self.eat(&Tok::RParen) {
                    loop {
                        let (k, kp) = self.ident()?;
                        let kk = match k.as_str() {
                            "out" => NameKind::OutCtl,
                            "in" => NameKind::InCtl,
                            "cont" => NameKind::Cont,
                            "ref" => NameKind::Ref,
                            "val" => NameKind::Val,
                            other => {
                                return Err(ParseError::Syntax {
                                    pos: kp,
                                    msg: format!("unknown kind `{}` in signature", other),
                                })
                            }
                        };
                        sig.push(kk);
                        if !self.eat(&Tok::Comma) {
                            break;
                        }
                    }
                    self.expect(Tok::RParen)?;
                }
                self.unit.sigs.insert(id.clone(), sig);
            }
            self.unit.decls.insert(id, kind);
            if !self.eat(&Tok::Comma) {
                break;
            }
        }
        Ok(())
    }

    fn name(&mut self) -> Result<Name, ParseError> {
        let pos = self.pos();
        match self.bump() {
            Tok::Ident(s) => match self.unit.decls.get(s.as_str()) {
                Some(&k) => Ok(Name::new(&s, k)),
                None if s.starts_with('#') => {
                    // machine names carry their kind in the sigil
                    let k = match s.chars().nth(1) {
                        Some('o') | Some('n') | Some('u') | Some('b') => NameKind::OutCtl,
                        Some('i') => NameKind::InCtl,
                        Some('c') => NameKind::Cont,
                        Some('r') => NameKind::Ref,
                        _ => {
                            return Err(ParseError::UndeclaredName { pos, id: s })
                        }
                    };
                    Ok(Name::new(&s, k))
                }
                None => Err(ParseError::UndeclaredName { pos, id: s }),
            },
            Tok::Int(v) => self.val_name(v, pos),
            other => {
                Err(ParseError::Syntax { pos, msg: format!("expected a name, found {}", other) })
            }
        }
    }

    fn val_name(&self, v: u32, pos: Pos) -> Result<Name, ParseError> {
        if self.unit.val_domain == 0 || v >= self.unit.val_domain {
            return Err(ParseError::ValueOutOfDomain { pos, v, size: self.unit.val_domain });
        }
        Ok(Name::val(v))
    }

    // process := term ('|' term)*
    fn process(&mut self) -> Result<Process, ParseError> {
        let mut terms = vec![self.term()?];
        while self.eat(&Tok::Pipe) {
            terms.push(self.term()?);
        }
        let mut p = terms.pop().expect("nonempty");
        while let Some(t) = terms.pop() {
            p = Process::Par(Box::new(t), Box::new(p));
        }
        Ok(p)
    }

    // term := 'new' names '.' process  |  sum
    fn term(&mut self) -> Result<Process, ParseError> {
        if self.at_keyword("new") {
            self.bump();
            let mut binders = Vec::new();
            loop {
                binders.push(self.name()?);
                if !self.eat(&Tok::Comma) {
                    break;
                }
            }
            self.expect(Tok::Dot)?;
            // restriction scopes to the end of the enclosing group
            let body = self.process()?;
            let mut p = body;
            for b in binders.into_iter().rev() {
                p = Process::Res(b, Box::new(p));
            }
            Ok(p)
        } else {
            self.sum()
        }
    }

    // sum := prefix ('+' prefix)*
    fn sum(&mut self) -> Result<Process, ParseError> {
        let mut p = self.prefix()?;
        while self.eat(&Tok::Plus) {
            let q = self.prefix()?;
            p = Process::Sum(Box::new(p), Box::new(q));
        }
        Ok(p)
    }

    // one prefixed unit; continuations after '.' parse at this level, and a
    // restriction in continuation position scopes to the end of the group
    fn prefix(&mut self) -> Result<Process, ParseError> {
        let pos = self.pos();
        if self.at_keyword("new") {
            return self.term();
        }
        match self.peek().clone() {
            Tok::Int(0) => {
                self.bump();
                Ok(Process::Nil)
            }
            Tok::LParen => {
                self.bump();
                let p = self.process()?;
                self.expect(Tok::RParen)?;
                Ok(p)
            }
            Tok::Bang => {
                self.bump();
                let subj = self.name()?;
                self.expect(Tok::LParen)?;
                let binders = self.binder_list()?;
                self.expect(Tok::Dot)?;
                let body = self.prefix()?;
                Ok(Process::ReplInput(subj, binders, Box::new(body)))
            }
            Tok::LBracket => {
                self.bump();
                let a = self.name()?;
                self.expect(Tok::Eq)?;
                let b = self.name()?;
                self.expect(Tok::RBracket)?;
                let g = self.prefix()?;
                Ok(Process::Match(a, b, Box::new(g)))
            }
            Tok::Ident(s) if s == "tau" => {
                self.bump();
                self.expect(Tok::Dot)?;
                let body = self.prefix()?;
                Ok(Process::Tau(Box::new(body)))
            }
            Tok::Ident(s) if ["read", "write", "swap", "faa", "swapD", "faaD"].contains(&s.as_str()) => {
                self.macro_prefix(&s)
            }
            Tok::Ident(id) => {
                // a bare identifier that is not followed by a prefix shape
                // references an earlier definition
                let follows = &self.toks[(self.at + 1).min(self.toks.len() - 1)].0;
                if !matches!(follows, Tok::LAngle | Tok::LParen) {
                    if let Some(p) = self.unit.def(&id) {
                        let p = p.clone();
                        self.bump();
                        return Ok(p);
                    }
                }
                let subj = self.name()?;
                match self.peek() {
                    Tok::LAngle => {
                        self.bump();
                        let objs = self.obj_list()?;
                        Ok(Process::Output(subj, objs))
                    }
                    Tok::LParen => {
                        self.bump();
                        let binders = self.binder_list()?;
                        self.expect(Tok::Dot)?;
                        let body = self.prefix()?;
                        Ok(Process::Input(subj, binders, Box::new(body)))
                    }
                    _ => Err(ParseError::Syntax {
                        pos,
                        msg: format!(
                            "`{}` is a name; expected `<`, `(` or a defined process",
                            subj.id
                        ),
                    }),
                }
            }
            other => Err(ParseError::Syntax {
                pos,
                msg: format!("expected a process, found {}", other),
            }),
        }
    }

    fn macro_prefix(&mut self, kw: &str) -> Result<Process, ParseError> {
        let pos = self.pos();
        self.bump();
        let cell = self.name()?;
        let mut written = None;
        let mut binder = None;
        if self.eat(&Tok::LAngle) {
            let o = self.obj()?;
            self.expect(Tok::RAngle)?;
            written = Some(o);
        }
        if self.eat(&Tok::LParen) {
            let b = self.name()?;
            self.expect(Tok::RParen)?;
            binder = Some(b);
        }
        self.expect(Tok::Dot)?;
        let body = self.prefix()?;
        let m = match kw {
            "read" => RefMacro::Read,
            "write" => RefMacro::Write,
            "swap" => RefMacro::Swap,
            "faa" => RefMacro::Faa,
            "swapD" => RefMacro::SwapD,
            "faaD" => RefMacro::FaaD,
            _ => unreachable!(),
        };
        refs::expand_macro(m, &cell, written, binder, body, self.unit.val_domain)
            .map_err(|err| ParseError::Macro { pos, err })
    }

    fn binder_list(&mut self) -> Result<Vec<Name>, ParseError> {
        let mut out = Vec::new();
        if self.eat(&Tok::RParen) {
            return Ok(out);
        }
        loop {
            out.push(self.name()?);
            if !self.eat(&Tok::Comma) {
                break;
            }
        }
        self.expect(Tok::RParen)?;
        Ok(out)
    }

    fn obj(&mut self) -> Result<Obj, ParseError> {
        let pos = self.pos();
        let first = self.name()?;
        if self.eat(&Tok::Plus) {
            let second = self.name()?;
            if self.unit.val_domain == 0 {
                return Err(ParseError::Syntax {
                    pos,
                    msg: "`+` objects need a declared value domain".into(),
                });
            }
            Ok(Obj::Add(first, second, self.unit.val_domain).eval())
        } else {
            Ok(Obj::Name(first))
        }
    }

    fn obj_list(&mut self) -> Result<Vec<Obj>, ParseError> {
        let mut out = Vec::new();
        if self.eat(&Tok::RAngle) {
            return Ok(out);
        }
        loop {
            out.push(self.obj()?);
            if !self.eat(&Tok::Comma) {
                break;
            }
        }
        self.expect(Tok::RAngle)?;
        Ok(out)
    }

    fn stack_literal(&mut self) -> Result<Stack, ParseError> {
        let pos = self.pos();
        if self.at_keyword("empty") {
            self.bump();
            return Ok(Stack::empty());
        }
        let mut entries = Vec::new();
        loop {
            let n = self.name()?;
            self.expect(Tok::Caret)?;
            let (tag, tpos) = self.ident()?;
            let tag = match tag.as_str() {
                "o" | "O" => StackTag::Out,
                "i" | "I" => StackTag::In,
                other => {
                    return Err(ParseError::Syntax {
                        pos: tpos,
                        msg: format!("expected tag `o` or `i`, found `{}`", other),
                    })
                }
            };
            entries.push((n, tag));
            if !self.eat(&Tok::Comma) {
                break;
            }
        }
        Stack::new(entries).map_err(|e| ParseError::BadStack { pos, msg: e.to_string() })
    }

    fn relation(&mut self) -> Result<(), ParseError> {
        let (name, _) = self.ident()?;
        let mut cert = RelationCert {
            name,
            mode: CertMode::Seq,
            include_identity: false,
            triples: Vec::new(),
        };
        self.expect(Tok::LBrace)?;
        loop {
            if self.eat(&Tok::RBrace) {
                break;
            }
            if self.at_keyword("mode") {
                self.bump();
                self.expect(Tok::Eq)?;
                let (m, mpos) = self.ident()?;
                cert.mode = match m.as_str() {
                    "ordinary" => CertMode::Ordinary,
                    "seq" => CertMode::Seq,
                    "seq-refs" => CertMode::SeqRefs,
                    "wb" => CertMode::Wb,
                    "wb-upto" => CertMode::WbUpto,
                    other => {
                        return Err(ParseError::Syntax {
                            pos: mpos,
                            msg: format!("unknown relation mode `{}`", other),
                        })
                    }
                };
                self.eat(&Tok::Semi);
            } else if self.at_keyword("id") {
                self.bump();
                cert.include_identity = true;
                self.eat(&Tok::Semi);
            } else if self.at_keyword("triple") {
                self.bump();
                let t = self.triple(cert.mode)?;
                cert.triples.push(t);
            } else {
                return Err(ParseError::Syntax {
                    pos: self.pos(),
                    msg: format!("expected `mode`, `id`, `triple` or `}}`, found {}", self.peek()),
                });
            }
        }
        self.unit.relations.push(cert);
        Ok(())
    }

    fn triple(&mut self, mode: CertMode) -> Result<CertTriple, ParseError> {
        let pos = self.pos();
        let mut eta: Option<u8> = None;
        let mut stack: Option<Stack> = None;
        let mut refs_set: Vec<Name> = Vec::new();
        let mut lhs: Option<Process> = None;
        let mut rhs: Option<Process> = None;
        let mut depth = 0usize;
        loop {
            if self.at_keyword("eta") {
                self.bump();
                self.expect(Tok::Eq)?;
                let p = self.pos();
                match self.bump() {
                    Tok::Int(v) if v <= 1 => eta = Some(v as u8),
                    other => {
                        return Err(ParseError::Syntax {
                            pos: p,
                            msg: format!("expected 0 or 1, found {}", other),
                        })
                    }
                }
            } else if self.at_keyword("stack") {
                self.bump();
                self.expect(Tok::Eq)?;
                let p = self.pos();
                match self.bump() {
                    Tok::Str(s) => {
                        let parsed = parse_stack(&s, &self.unit)
                            .map_err(|e| ParseError::Syntax { pos: p, msg: e.to_string() })?;
                        stack = Some(parsed);
                    }
                    other => {
                        return Err(ParseError::Syntax {
                            pos: p,
                            msg: format!("expected a quoted stack, found {}", other),
                        })
                    }
                }
            } else if self.at_keyword("refs") {
                self.bump();
                self.expect(Tok::Eq)?;
                let p = self.pos();
                match self.bump() {
                    Tok::Str(s) => {
                        for part in s.split(',').map(str::trim).filter(|x| !x.is_empty()) {
                            match self.unit.decls.get(part) {
                                Some(&NameKind::Ref) => refs_set.push(Name::new(part, NameKind::Ref)),
                                _ => {
                                    return Err(ParseError::UndeclaredName {
                                        pos: p,
                                        id: part.to_string(),
                                    })
                                }
                            }
                        }
                    }
                    other => {
                        return Err(ParseError::Syntax {
                            pos: p,
                            msg: format!("expected a quoted reference list, found {}", other),
                        })
                    }
                }
            } else if self.at_keyword("depth") {
                self.bump();
                self.expect(Tok::Eq)?;
                let p = self.pos();
                match self.bump() {
                    Tok::Int(v) => depth = v as usize,
                    other => {
                        return Err(ParseError::Syntax {
                            pos: p,
                            msg: format!("expected an integer, found {}", other),
                        })
                    }
                }
            } else if self.at_keyword("lhs") {
                self.bump();
                self.expect(Tok::Eq)?;
                lhs = Some(self.process()?);
            } else if self.at_keyword("rhs") {
                self.bump();
                self.expect(Tok::Eq)?;
                rhs = Some(self.process()?);
            } else if self.eat(&Tok::Semi) {
                if self.at_keyword("triple") || *self.peek() == Tok::RBrace {
                    break;
                }
            } else {
                break;
            }
        }
        let lhs = lhs.ok_or_else(|| ParseError::Syntax { pos, msg: "triple without lhs".into() })?;
        let rhs = rhs.ok_or_else(|| ParseError::Syntax { pos, msg: "triple without rhs".into() })?;
        for p in [&lhs, &rhs] {
            p.check_wellformed().map_err(|violation| ParseError::IllFormed { pos, violation })?;
        }
        let typing = match mode {
            CertMode::Wb | CertMode::WbUpto => Typing::Wb(stack.unwrap_or_else(Stack::empty)),
            CertMode::Ordinary => Typing::Plain,
            CertMode::Seq => Typing::Seq(eta.ok_or_else(|| ParseError::Syntax {
                pos,
                msg: "sequential triple without eta".into(),
            })?),
            CertMode::SeqRefs => Typing::SeqRefs(
                refs_set.iter().cloned().collect(),
                eta.ok_or_else(|| ParseError::Syntax {
                    pos,
                    msg: "seq-refs triple without eta".into(),
                })?,
            ),
        };
        Ok(CertTriple { typing, lhs, rhs, depth })
    }
}

// ---------------------------------------------------------------------------
// rendering
// ---------------------------------------------------------------------------

/// Render a process back to concrete syntax. `parse(render(p))` is
/// alpha-equivalent to `p` (given the right declarations). Reference-cell
/// reads and writes are re-sugared so corpus displays stay close to their
/// usual notation.
pub fn render(p: &Process) -> String {
    render_prec(p, 0)
}

// prec: 0 = par, 1 = sum, 2 = prefix
fn render_prec(p: &Process, prec: u8) -> String {
    match p {
        Process::Nil => "0".into(),
        Process::Output(a, objs) => {
            let inner = objs.iter().map(|o| o.to_string()).collect::<Vec<_>>().join(",");
            format!("{}<{}>", a, inner)
        }
        Process::Input(subj, binders, body) => {
            if let Some(s) = render_ref_macro(subj, binders, body) {
                return s;
            }
            let bs = binders.iter().map(|b| b.id.to_string()).collect::<Vec<_>>().join(",");
            format!("{}({}).{}", subj, bs, render_prec(body, 2))
        }
        Process::ReplInput(subj, binders, body) => {
            let bs = binders.iter().map(|b| b.id.to_string()).collect::<Vec<_>>().join(",");
            format!("!{}({}).{}", subj, bs, render_prec(body, 2))
        }
        Process::Tau(body) => format!("tau.{}", render_prec(body, 2)),
        Process::Match(a, b, g) => format!("[{}={}]{}", a, b, render_prec(g, 2)),
        Process::Sum(g1, g2) => {
            let s = format!("{} + {}", render_prec(g1, 2), render_prec(g2, 1));
            if prec >= 2 {
                format!("({})", s)
            } else {
                s
            }
        }
        Process::Par(l, r) => {
            let s = format!("{} | {}", render_prec(l, 1), render_prec(r, 0));
            if prec >= 1 {
                format!("({})", s)
            } else {
                s
            }
        }
        Process::Res(a, body) => {
            let mut binders = vec![a.clone()];
            let mut inner: &Process = body;
            while let Process::Res(b, next) = inner {
                binders.push(b.clone());
                inner = next;
            }
            let bs = binders.iter().map(|b| b.id.to_string()).collect::<Vec<_>>().join(",");
            let s = format!("new {}. {}", bs, render_prec(inner, 0));
            if prec >= 1 {
                format!("({})", s)
            } else {
                s
            }
        }
    }
}

/// Detect `l(m).(l<m> | R)` and `l(m').(l<n> | R)` shapes on reference
/// subjects and print them as `read l(m).R` / `write l<n>.R`.
fn render_ref_macro(subj: &Name, binders: &[Name], body: &Process) -> Option<String> {
    if subj.kind != NameKind::Ref || binders.len() != 1 {
        return None;
    }
    let m = &binders[0];
    let (emit, rest) = match body {
        Process::Par(l, r) => match &**l {
            Process::Output(a, objs) if a == subj && objs.len() == 1 => (objs[0].clone(), r),
            _ => return None,
        },
        _ => return None,
    };
    match &emit {
        Obj::Name(o) if o == m => Some(format!("read {}({}).{}", subj, m, render_prec(rest, 2))),
        Obj::Name(o) if !rest.free_names().contains(m) && o != m => {
            Some(format!("write {}<{}>.{}", subj, o, render_prec(rest, 2)))
        }
        Obj::Add(..) if !rest.free_names().contains(m) => {
            Some(format!("write {}<{}>.{}", subj, emit, render_prec(rest, 2)))
        }
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::canon::alpha_equiv;

    #[test]
    fn parse_trivial_output() {
        let unit = parse("decl out x. proc P = x<>").unwrap();
        let p = unit.def("P").unwrap();
        assert_eq!(*p, Process::output(Name::new("x", NameKind::OutCtl), vec![]));
    }

    #[test]
    fn parse_thread_example() {
        let unit = parse(
            "decl out x, y, z. decl in u, v.\n\
             proc P = u().( x<> | y().x<> ) | z().y<> | v<>",
        )
        .unwrap();
        let p = unit.def("P").unwrap();
        let fns: Vec<String> = p.free_names().iter().map(|n| n.id.to_string()).collect();
        assert_eq!(fns, ["u", "v", "x", "y", "z"]);
    }

    #[test]
    fn undeclared_name_is_reported_with_position() {
        let err = parse("proc P = x<>").unwrap_err();
        match err {
            ParseError::UndeclaredName { pos, id } => {
                assert_eq!(id, "x");
                assert_eq!(pos.line, 1);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn sum_of_nonguard_rejected() {
        let err = parse("decl out x, y. proc P = x<> + y<>").unwrap_err();
        assert!(matches!(err, ParseError::IllFormed { .. }), "{err:?}");
    }

    #[test]
    fn match_on_continuation_rejected() {
        let err = parse("decl cont p, q. decl in u. proc P = [p=q]u<>").unwrap_err();
        assert!(matches!(err, ParseError::IllFormed { .. }), "{err:?}");
    }

    #[test]
    fn new_scopes_right() {
        let unit = parse("decl out x, y. proc P = new x. x<> | y<>").unwrap();
        let p = unit.def("P").unwrap();
        assert!(matches!(p, Process::Res(..)));
        assert!(p.free_names().iter().all(|n| n.id.as_ref() != "x"));
    }

    #[test]
    fn render_round_trips() {
        let src = "decl out x, y. decl in u. decl cont p. decl val 0..3. decl val a.\n\
                   proc P = new p. (x<1,p> | p(a).(y<a,a+1> | u().tau.0)) | [1=2]tau.u<>";
        let unit = parse(src).unwrap();
        let p = unit.def("P").unwrap();
        let txt = render(p);
        let reparsed = parse_process(&txt, &unit).unwrap();
        assert!(alpha_equiv(p, &reparsed), "render was {txt}");
    }

    #[test]
    fn macros_expand() {
        let unit = parse(
            "decl val 0..3. decl val m. decl ref l. decl out c(val).\n\
             proc RD = read l(m).c<m>\n\
             proc WR = write l<2>.c<0>\n\
             proc SW = swap l<2>(m).c<m>\n\
             proc FA = faa l<1>(m).c<m>\n\
             proc SWD = swapD l<2>(m).c<m>",
        );
        let unit = match unit {
            Ok(u) => u,
            Err(e) => panic!("{e}"),
        };
        // read l(m).R == l(m).(l<m> | R)
        let rd = unit.def("RD").unwrap();
        match rd {
            Process::Input(subj, binders, body) => {
                assert_eq!(subj.kind, NameKind::Ref);
                assert_eq!(binders.len(), 1);
                assert!(matches!(&**body, Process::Par(..)));
            }
            other => panic!("unexpected {other:?}"),
        }
        // swapD expands to read-then-write
        let swd = unit.def("SWD").unwrap();
        let txt = render(swd);
        assert!(txt.starts_with("read l("), "got {txt}");
        // faa writes m+1
        let fa = render(unit.def("FA").unwrap());
        assert!(fa.contains("+"), "got {fa}");
    }

    #[test]
    fn stack_literals() {
        let unit = parse("decl cont p, q. stack S = q^i, p^o").unwrap();
        let s = unit.stack("S").unwrap();
        assert_eq!(s.len(), 2);
        let err = parse("decl cont p, q. stack S = p^o, q^o");
        assert!(err.is_err());
    }

    #[test]
    fn relation_blocks_parse() {
        let unit = parse(
            "decl out x. decl in u. decl cont p.\n\
             proc A = x<>\n\
             proc B = tau.x<>\n\
             relation R { mode = seq; id; triple eta=1; lhs=A; rhs=B; }",
        )
        .unwrap();
        let r = unit.relation("R").unwrap();
        assert!(r.include_identity);
        assert_eq!(r.triples.len(), 1);
    }
}
