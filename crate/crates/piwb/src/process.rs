//! Abstract syntax of the asynchronous pi-calculus.
//!
//! The grammar is the asynchronous one: outputs are particles without a
//! continuation, sums and matches range over the guarded fragment only:
//!
//! ```text
//! P ::= a<b~> | !a(b~).P | P|Q | new a. P | G
//! G ::= 0 | a(b~).P | tau.P | [a=b]G | G+G'
//! ```
//!
//! Object positions admit a sum of two value operands so that fetch-and-add
//! can be written down; the sum evaluates as soon as both operands are
//! literal values of the configured domain.

use crate::names::{fresh_name, Name, NameKind};
use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;
use thiserror::Error;

/// An object position of an output: a plain name, or a modular sum of two
/// value operands (evaluated when both are literals).
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum Obj {
    Name(Name),
    /// `a + b` over the value domain; `modulus` is the domain size.
    Add(Name, Name, u32),
}

impl Obj {
    pub fn names(&self) -> Vec<&Name> {
        match self {
            Obj::Name(n) => vec![n],
            Obj::Add(a, b, _) => vec![a, b],
        }
    }

    pub fn as_name(&self) -> Option<&Name> {
        match self {
            Obj::Name(n) => Some(n),
            Obj::Add(..) => None,
        }
    }

    pub fn kind(&self) -> NameKind {
        match self {
            Obj::Name(n) => n.kind,
            Obj::Add(..) => NameKind::Val,
        }
    }

    /// Reduce `Add` to a literal when both operands are literals.
    pub fn eval(self) -> Obj {
        match self {
            Obj::Add(a, b, m) => match (a.as_val(), b.as_val()) {
                (Some(x), Some(y)) => Obj::Name(Name::val((x + y) % m)),
                _ => Obj::Add(a, b, m),
            },
            o => o,
        }
    }
}

impl fmt::Display for Obj {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Obj::Name(n) => write!(f, "{}", n),
            Obj::Add(a, b, _) => write!(f, "{}+{}", a, b),
        }
    }
}

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum Process {
    Nil,
    /// `a<b1,...,bn>` — an output particle.
    Output(Name, Vec<Obj>),
    /// `a(b1,...,bn).P`
    Input(Name, Vec<Name>, Box<Process>),
    /// `!a(b1,...,bn).P`
    ReplInput(Name, Vec<Name>, Box<Process>),
    /// `tau.P`
    Tau(Box<Process>),
    /// `[a=b]G`
    Match(Name, Name, Box<Process>),
    /// `G + G'`
    Sum(Box<Process>, Box<Process>),
    Par(Box<Process>, Box<Process>),
    /// `new a. P`
    Res(Name, Box<Process>),
}

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum SyntaxViolation {
    #[error("sum or match argument is not in the guarded fragment: {0}")]
    GuardGrammarViolation(String),
    #[error("match on a continuation name: {0}")]
    ContinuationInMatch(String),
    #[error("duplicate binder {0} in one prefix")]
    DuplicateBinder(String),
    #[error("value used as a channel subject: {0}")]
    ValueAsSubject(String),
}

#[derive(Error, Debug, Clone, PartialEq, Eq)]
#[error("kind mismatch substituting {to} (kind {}) for {from} (kind {})", .to.kind, .from.kind)]
pub struct KindMismatch {
    pub to: Name,
    pub from: Name,
}

impl Process {
    pub fn par(a: Process, b: Process) -> Process {
        Process::Par(Box::new(a), Box::new(b))
    }

    pub fn res(a: Name, p: Process) -> Process {
        Process::Res(a, Box::new(p))
    }

    pub fn input(a: Name, binders: Vec<Name>, p: Process) -> Process {
        Process::Input(a, binders, Box::new(p))
    }

    pub fn output(a: Name, objs: Vec<Name>) -> Process {
        Process::Output(a, objs.into_iter().map(Obj::Name).collect())
    }

    /// Is this term inside the guarded grammar `G`?
    pub fn is_guard(&self) -> bool {
        match self {
            Process::Nil | Process::Input(..) | Process::Tau(..) => true,
            Process::Match(_, _, g) => g.is_guard(),
            Process::Sum(g1, g2) => g1.is_guard() && g2.is_guard(),
            _ => false,
        }
    }

    /// Well-formedness: sums and matches confined to guards, binders pairwise
    /// distinct, no value subjects, no match on continuation names.
    pub fn check_wellformed(&self) -> Result<(), SyntaxViolation> {
        match self {
            Process::Nil => Ok(()),
            Process::Output(a, _) => {
                if a.kind == NameKind::Val {
                    return Err(SyntaxViolation::ValueAsSubject(a.id.to_string()));
                }
                Ok(())
            }
            Process::Input(a, binders, p) | Process::ReplInput(a, binders, p) => {
                if a.kind == NameKind::Val {
                    return Err(SyntaxViolation::ValueAsSubject(a.id.to_string()));
                }
                let mut seen = BTreeSet::new();
                for b in binders {
                    if !seen.insert(b.id.clone()) {
                        return Err(SyntaxViolation::DuplicateBinder(b.id.to_string()));
                    }
                }
                p.check_wellformed()
            }
            Process::Tau(p) => p.check_wellformed(),
            Process::Match(a, b, g) => {
                if a.kind == NameKind::Cont || b.kind == NameKind::Cont {
                    return Err(SyntaxViolation::ContinuationInMatch(format!("[{}={}]", a, b)));
                }
                if !g.is_guard() {
                    return Err(SyntaxViolation::GuardGrammarViolation(g.to_string()));
                }
                g.check_wellformed()
            }
            Process::Sum(g1, g2) => {
                for g in [g1, g2] {
                    if !g.is_guard() {
                        return Err(SyntaxViolation::GuardGrammarViolation(g.to_string()));
                    }
                    g.check_wellformed()?;
                }
                Ok(())
            }
            Process::Par(p, q) => {
                p.check_wellformed()?;
                q.check_wellformed()
            }
            Process::Res(_, p) => p.check_wellformed(),
        }
    }

    /// Free names, value literals included.
    pub fn free_names(&self) -> BTreeSet<Name> {
        let mut out = BTreeSet::new();
        self.collect_free(&mut Vec::new(), &mut out);
        out
    }

    fn collect_free(&self, bound: &mut Vec<Name>, out: &mut BTreeSet<Name>) {
        let add = |n: &Name, bound: &Vec<Name>, out: &mut BTreeSet<Name>| {
            if !bound.contains(n) {
                out.insert(n.clone());
            }
        };
        match self {
            Process::Nil => {}
            Process::Output(a, objs) => {
                add(a, bound, out);
                for o in objs {
                    for n in o.names() {
                        add(n, bound, out);
                    }
                }
            }
            Process::Input(a, binders, p) | Process::ReplInput(a, binders, p) => {
                add(a, bound, out);
                let len = bound.len();
                bound.extend(binders.iter().cloned());
                p.collect_free(bound, out);
                bound.truncate(len);
            }
            Process::Tau(p) => p.collect_free(bound, out),
            Process::Match(a, b, g) => {
                add(a, bound, out);
                add(b, bound, out);
                g.collect_free(bound, out);
            }
            Process::Sum(g1, g2) => {
                g1.collect_free(bound, out);
                g2.collect_free(bound, out);
            }
            Process::Par(p, q) => {
                p.collect_free(bound, out);
                q.collect_free(bound, out);
            }
            Process::Res(a, p) => {
                let len = bound.len();
                bound.push(a.clone());
                p.collect_free(bound, out);
                bound.truncate(len);
            }
        }
    }

    /// Capture-avoiding simultaneous substitution `P{to~/from~}`.
    pub fn substitute(&self, to: &[Name], from: &[Name]) -> Result<Process, KindMismatch> {
        assert_eq!(to.len(), from.len(), "substitution lists must have equal length");
        for (t, f) in to.iter().zip(from) {
            if t.kind != f.kind {
                return Err(KindMismatch { to: t.clone(), from: f.clone() });
            }
        }
        let map: Vec<(Name, Name)> =
            from.iter().cloned().zip(to.iter().cloned()).filter(|(f, t)| f != t).collect();
        if map.is_empty() {
            return Ok(self.clone());
        }
        let mut avoid: BTreeSet<Arc<str>> = self
            .free_names()
            .into_iter()
            .map(|n| n.id)
            .chain(to.iter().map(|n| n.id.clone()))
            .chain(from.iter().map(|n| n.id.clone()))
            .collect();
        Ok(self.subst_inner(&map, &mut avoid))
    }

    fn subst_inner(&self, map: &[(Name, Name)], avoid: &mut BTreeSet<Arc<str>>) -> Process {
        let app = |n: &Name, map: &[(Name, Name)]| -> Name {
            map.iter().find(|(f, _)| f == n).map(|(_, t)| t.clone()).unwrap_or_else(|| n.clone())
        };
        let app_obj = |o: &Obj, map: &[(Name, Name)]| -> Obj {
            match o {
                Obj::Name(n) => Obj::Name(app(n, map)),
                Obj::Add(a, b, m) => Obj::Add(app(a, map), app(b, map), *m).eval(),
            }
        };
        match self {
            Process::Nil => Process::Nil,
            Process::Output(a, objs) => Process::Output(
                app(a, map),
                objs.iter().map(|o| app_obj(o, map)).collect(),
            ),
            Process::Input(a, binders, p) | Process::ReplInput(a, binders, p) => {
                let subj = app(a, map);
                let map: Vec<(Name, Name)> =
                    map.iter().filter(|(f, _)| !binders.contains(f)).cloned().collect();
                // rename binders that would capture substituted names
                let mut binders = binders.clone();
                let mut body = (**p).clone();
                for b in binders.iter_mut() {
                    if map.iter().any(|(_, t)| t == b) {
                        let nb = fresh_name(b.kind, avoid);
                        body = body
                            .substitute(std::slice::from_ref(&nb), std::slice::from_ref(b))
                            .expect("fresh binder has matching kind");
                        *b = nb;
                    }
                }
                let body = body.subst_inner(&map, avoid);
                match self {
                    Process::Input(..) => Process::Input(subj, binders, Box::new(body)),
                    _ => Process::ReplInput(subj, binders, Box::new(body)),
                }
            }
            Process::Tau(p) => Process::Tau(Box::new(p.subst_inner(map, avoid))),
            Process::Match(a, b, g) => Process::Match(
                app(a, map),
                app(b, map),
                Box::new(g.subst_inner(map, avoid)),
            ),
            Process::Sum(g1, g2) => Process::Sum(
                Box::new(g1.subst_inner(map, avoid)),
                Box::new(g2.subst_inner(map, avoid)),
            ),
            Process::Par(p, q) => Process::Par(
                Box::new(p.subst_inner(map, avoid)),
                Box::new(q.subst_inner(map, avoid)),
            ),
            Process::Res(a, p) => {
                let map: Vec<(Name, Name)> =
                    map.iter().filter(|(f, _)| f != a).cloned().collect();
                let mut a = a.clone();
                let mut body = (**p).clone();
                if map.iter().any(|(_, t)| t == &a) {
                    let na = fresh_name(a.kind, avoid);
                    body = body
                        .substitute(std::slice::from_ref(&na), std::slice::from_ref(&a))
                        .expect("fresh binder has matching kind");
                    a = na;
                }
                Process::Res(a, Box::new(body.subst_inner(&map, avoid)))
            }
        }
    }

    /// Number of AST nodes; used by generators and enumeration bounds.
    pub fn size(&self) -> usize {
        match self {
            Process::Nil | Process::Output(..) => 1,
            Process::Input(_, _, p) | Process::ReplInput(_, _, p) => 1 + p.size(),
            Process::Tau(p) | Process::Res(_, p) => 1 + p.size(),
            Process::Match(_, _, g) => 1 + g.size(),
            Process::Sum(a, b) | Process::Par(a, b) => 1 + a.size() + b.size(),
        }
    }
}

impl fmt::Display for Process {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&crate::parser::render(self))
    }
}

/// A static context `new a~. (frame | [.])`.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct StaticContext {
    pub restrictions: Vec<Name>,
    pub frame: Process,
}

impl StaticContext {
    pub fn hole() -> Self {
        StaticContext { restrictions: Vec::new(), frame: Process::Nil }
    }

    /// `E[p]`.
    pub fn plug(&self, p: &Process) -> Process {
        let mut body = Process::par(self.frame.clone(), p.clone());
        for a in self.restrictions.iter().rev() {
            body = Process::res(a.clone(), body);
        }
        body
    }
}

impl fmt::Display for StaticContext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if !self.restrictions.is_empty() {
            write!(
                f,
                "new {}. ",
                self.restrictions.iter().map(|n| n.id.to_string()).collect::<Vec<_>>().join(",")
            )?;
        }
        write!(f, "({} | [.])", self.frame)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn n(id: &str, k: NameKind) -> Name {
        Name::new(id, k)
    }

    #[test]
    fn free_names_output() {
        let x = n("x", NameKind::OutCtl);
        let a = n("a", NameKind::InCtl);
        let p = Process::output(x.clone(), vec![a.clone()]);
        assert_eq!(p.free_names(), [x, a].into_iter().collect());
    }

    #[test]
    fn free_names_restriction_binds() {
        let x = n("x", NameKind::OutCtl);
        let p = Process::res(x.clone(), Process::output(x, vec![]));
        assert!(p.free_names().is_empty());
    }

    #[test]
    fn substitute_simple() {
        let p = n("p", NameKind::Cont);
        let a = n("a", NameKind::Val);
        let b = n("b", NameKind::Val);
        let proc = Process::output(p.clone(), vec![a.clone()]);
        let got = proc.substitute(&[b.clone()], &[a]).unwrap();
        assert_eq!(got, Process::output(p, vec![b]));
    }

    #[test]
    fn substitute_capture_avoiding() {
        // (new b. x<b>){b/a} must rename the binder
        let x = n("x", NameKind::OutCtl);
        let a = n("a", NameKind::InCtl);
        let b = n("b", NameKind::InCtl);
        let proc = Process::res(
            b.clone(),
            Process::output(x.clone(), vec![b.clone()]),
        );
        // put `a` in the body so the substitution is not vacuous
        let proc = Process::par(proc, Process::output(a.clone(), vec![]));
        let got = proc.substitute(&[b.clone()], &[a]).unwrap();
        match got {
            Process::Par(l, r) => {
                match *l {
                    Process::Res(c, body) => {
                        assert_ne!(c, b);
                        assert_eq!(*body, Process::output(x, vec![c]));
                    }
                    other => panic!("unexpected {other:?}"),
                }
                assert_eq!(*r, Process::output(b, vec![]));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn substitute_kind_mismatch() {
        let x = n("x", NameKind::OutCtl);
        let u = n("u", NameKind::InCtl);
        let proc = Process::output(x.clone(), vec![]);
        assert!(proc.substitute(&[u], &[x]).is_err());
    }

    #[test]
    fn add_objects_evaluate() {
        let o = Obj::Add(Name::val(2), Name::val(2), 3).eval();
        assert_eq!(o, Obj::Name(Name::val(1)));
    }

    #[test]
    fn plug_is_framed_parallel() {
        let p = Process::output(n("x", NameKind::OutCtl), vec![]);
        let e = StaticContext::hole();
        assert_eq!(e.plug(&p), Process::par(Process::Nil, p));
    }
}
