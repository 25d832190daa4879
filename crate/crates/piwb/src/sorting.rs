//! Milner sorting: each channel name carries a fixed tuple of object kinds.
//!
//! Signatures come from declarations when given and are otherwise inferred
//! from use; every prefix must agree with its subject's signature in arity
//! and kinds.

use crate::names::{Name, NameKind};
use crate::process::{Obj, Process};
use std::collections::BTreeMap;
use std::sync::Arc;
use thiserror::Error;

#[derive(Clone, Debug, Default)]
pub struct Sorting {
    sigs: BTreeMap<Arc<str>, Vec<NameKind>>,
    pub val_domain: u32,
}

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum SortViolation {
    #[error("{subject} used with objects ({got}) but its signature is ({want}) — at {at}")]
    Mismatch { subject: Name, got: String, want: String, at: String },
    #[error("value name {0} used as a channel — at {1}")]
    ValueSubject(Name, String),
}

fn kinds_str(kinds: &[NameKind]) -> String {
    kinds.iter().map(|k| k.label().to_string()).collect::<Vec<_>>().join(",")
}

impl Sorting {
    pub fn with_val_domain(val_domain: u32) -> Self {
        Sorting { sigs: BTreeMap::new(), val_domain }
    }

    pub fn declare(&mut self, id: &str, sig: Vec<NameKind>) {
        self.sigs.insert(Arc::from(id), sig);
    }

    pub fn sig_of(&self, name: &Name) -> Option<&Vec<NameKind>> {
        self.sigs.get(&name.id)
    }

    pub fn sig_of_id(&self, id: &str) -> Option<&Vec<NameKind>> {
        self.sigs.get(id)
    }

    /// Check `p` against this sorting, inferring signatures for names that
    /// do not have one yet. Inference keys on identifiers, so reusing one
    /// identifier at two different sorts is reported as a violation.
    pub fn check(&mut self, p: &Process) -> Result<(), SortViolation> {
        match p {
            Process::Nil => Ok(()),
            Process::Output(a, objs) => {
                if a.kind == NameKind::Val {
                    return Err(SortViolation::ValueSubject(a.clone(), p.to_string()));
                }
                let got: Vec<NameKind> = objs.iter().map(Obj::kind).collect();
                self.unify(a, &got, p)
            }
            Process::Input(a, binders, body) | Process::ReplInput(a, binders, body) => {
                if a.kind == NameKind::Val {
                    return Err(SortViolation::ValueSubject(a.clone(), p.to_string()));
                }
                let got: Vec<NameKind> = binders.iter().map(|b| b.kind).collect();
                self.unify(a, &got, p)?;
                self.check(body)
            }
            Process::Tau(body) | Process::Res(_, body) => self.check(body),
            Process::Match(_, _, g) => self.check(g),
            Process::Sum(g1, g2) | Process::Par(g1, g2) => {
                self.check(g1)?;
                self.check(g2)
            }
        }
    }

    fn unify(&mut self, subject: &Name, got: &[NameKind], at: &Process) -> Result<(), SortViolation> {
        match self.sigs.get(&subject.id) {
            Some(want) if want.as_slice() == got => Ok(()),
            Some(want) => Err(SortViolation::Mismatch {
                subject: subject.clone(),
                got: kinds_str(got),
                want: kinds_str(want),
                at: at.to_string(),
            }),
            None => {
                self.sigs.insert(subject.id.clone(), got.to_vec());
                Ok(())
            }
        }
    }
}

/// Check a process against a sorting without extending it further.
pub fn check_sorting(delta: &Sorting, p: &Process) -> Result<(), SortViolation> {
    let mut scratch = delta.clone();
    scratch.check(p)
}

/// Build a sorting from a parsed unit: declared signatures, then inference
/// over every definition and relation side.
pub fn sorting_of_unit(unit: &crate::parser::SourceUnit) -> Result<Sorting, SortViolation> {
    let mut s = Sorting::with_val_domain(unit.val_domain);
    for (id, sig) in &unit.sigs {
        s.sigs.insert(id.clone(), sig.clone());
    }
    for (_, p) in &unit.defs {
        s.check(p)?;
    }
    for r in &unit.relations {
        for t in &r.triples {
            s.check(&t.lhs)?;
            s.check(&t.rhs)?;
        }
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arity_mismatch_rejected() {
        let x = Name::new("x", NameKind::OutCtl);
        let mut s = Sorting::with_val_domain(3);
        s.declare("x", vec![NameKind::Val]);
        let ok = Process::output(x.clone(), vec![Name::val(2)]);
        assert!(s.clone().check(&ok).is_ok());
        let bad = Process::output(x, vec![Name::val(2), Name::val(1)]);
        assert!(matches!(s.check(&bad), Err(SortViolation::Mismatch { .. })));
    }

    #[test]
    fn inference_is_consistent_across_uses() {
        let x = Name::new("x", NameKind::OutCtl);
        let p = Process::par(
            Process::output(x.clone(), vec![Name::val(0)]),
            Process::input(x, vec![Name::new("b", NameKind::InCtl)], Process::Nil),
        );
        let mut s = Sorting::with_val_domain(3);
        assert!(s.check(&p).is_err());
    }

    #[test]
    fn wb_convention_signature() {
        let x = Name::new("x", NameKind::OutCtl);
        let mut s = Sorting::with_val_domain(3);
        s.declare("x", vec![NameKind::Val, NameKind::Cont]);
        let p = Process::output(x, vec![Name::val(1), Name::new("q", NameKind::Cont)]);
        assert!(s.check(&p).is_ok());
    }
}
