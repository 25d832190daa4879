//! Reference cells encoded as input-controlled names.
//!
//! A reference `l` holding `n` is the output particle `l<n>`; reading and
//! writing are inputs at `l` that re-emit the cell. A name `l` is
//! *accessible* in `P` when `P` has exactly one unguarded output at `l`.
//! Tracking the accessible set `S` refines type-allowed transitions: the
//! environment may not pretend to own a reference that is accessible, so
//! visible inputs at `l` with `l` in `S` are rejected.

use crate::lts::Action;
use crate::names::{fresh_name, Name, NameKind};
use crate::process::{Obj, Process};
use std::collections::BTreeMap;
use std::collections::BTreeSet;
use thiserror::Error;

/// The accessible-reference set `S`.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord)]
pub struct RefEnv {
    pub accessible: BTreeSet<Name>,
}

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum RefsError {
    #[error("reference {0} has {1} unguarded outputs; a cell must hold exactly one value")]
    MultipleOutputs(Name, usize),
}

/// Collect the free reference names with an unguarded top-level output.
/// Errors if any reference has more than one (the state is ill-typed).
pub fn accessible_refs(p: &Process) -> Result<BTreeSet<Name>, RefsError> {
    let mut counts: BTreeMap<Name, usize> = BTreeMap::new();
    collect_unguarded_ref_outputs(p, &mut Vec::new(), &mut counts);
    let mut out = BTreeSet::new();
    for (name, count) in counts {
        if count > 1 {
            return Err(RefsError::MultipleOutputs(name, count));
        }
        out.insert(name);
    }
    Ok(out)
}

fn collect_unguarded_ref_outputs(
    p: &Process,
    bound: &mut Vec<Name>,
    counts: &mut BTreeMap<Name, usize>,
) {
    match p {
        Process::Output(a, _) if a.kind == NameKind::Ref && !bound.contains(a) => {
            *counts.entry(a.clone()).or_insert(0) += 1;
        }
        Process::Par(l, r) => {
            collect_unguarded_ref_outputs(l, bound, counts);
            collect_unguarded_ref_outputs(r, bound, counts);
        }
        Process::Res(a, body) => {
            bound.push(a.clone());
            collect_unguarded_ref_outputs(body, bound, counts);
            bound.pop();
        }
        _ => {}
    }
}

/// Constraint (*): a visible input at an accessible reference is not
/// type-allowed.
pub fn refs_constraint(s: &RefEnv, action: &Action) -> bool {
    match action {
        Action::In { subj, .. } => {
            !(subj.kind == NameKind::Ref && s.accessible.contains(subj))
        }
        _ => true,
    }
}

/// While tracking references, the process never hands a cell to the
/// environment: visible outputs at reference names are not type-allowed.
pub fn output_at_ref(action: &Action) -> bool {
    matches!(action, Action::Out { subj, .. } if subj.kind == NameKind::Ref)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RefMacro {
    Read,
    Write,
    Swap,
    Faa,
    SwapD,
    FaaD,
}

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum FreshnessViolation {
    #[error("write binder {0} occurs free in the continuation")]
    BinderNotFresh(Name),
    #[error("macro argument {0} is not a reference name")]
    NotARef(Name),
    #[error("`{0}` requires a result binder")]
    MissingBinder(&'static str),
    #[error("`{0}` requires a written value")]
    MissingValue(&'static str),
    #[error("fetch-and-add needs a declared value domain")]
    NoValueDomain,
}

/// Literal expansions:
///
/// ```text
/// read  l(m).R      = l(m).(l<m>   | R)
/// write l<n>.R      = l(m').(l<n>  | R)        m' fresh for R
/// swap  l<n>(m).R   = l(m).(l<n>   | R)
/// faa   l<n>(m).R   = l(m).(l<m+n> | R)
/// swapD l<n>(m).R   = read l(m).write l<n>.R
/// faaD  l<n>(m).R   = read l(m).write l<m+n>.R
/// ```
pub fn expand_macro(
    m: RefMacro,
    cell: &Name,
    written: Option<Obj>,
    binder: Option<Name>,
    body: Process,
    val_domain: u32,
) -> Result<Process, FreshnessViolation> {
    if cell.kind != NameKind::Ref {
        return Err(FreshnessViolation::NotARef(cell.clone()));
    }
    let reemit = |o: Obj, rest: Process| {
        Process::Par(Box::new(Process::Output(cell.clone(), vec![o])), Box::new(rest))
    };
    let fresh_binder = |rest: &Process| {
        let mut avoid: BTreeSet<_> = rest.free_names().into_iter().map(|n| n.id).collect();
        avoid.insert(cell.id.clone());
        fresh_name(NameKind::Val, &mut avoid)
    };
    match m {
        RefMacro::Read => {
            let m = binder.ok_or(FreshnessViolation::MissingBinder("read"))?;
            Ok(Process::Input(
                cell.clone(),
                vec![m.clone()],
                Box::new(reemit(Obj::Name(m), body)),
            ))
        }
        RefMacro::Write => {
            let n = written.ok_or(FreshnessViolation::MissingValue("write"))?;
            let m = match binder {
                Some(b) => {
                    if body.free_names().contains(&b) {
                        return Err(FreshnessViolation::BinderNotFresh(b));
                    }
                    b
                }
                None => fresh_binder(&body),
            };
            Ok(Process::Input(cell.clone(), vec![m], Box::new(reemit(n, body))))
        }
        RefMacro::Swap => {
            let n = written.ok_or(FreshnessViolation::MissingValue("swap"))?;
            let m = binder.ok_or(FreshnessViolation::MissingBinder("swap"))?;
            Ok(Process::Input(cell.clone(), vec![m], Box::new(reemit(n, body))))
        }
        RefMacro::Faa => {
            let n = written.ok_or(FreshnessViolation::MissingValue("faa"))?;
            let m = binder.ok_or(FreshnessViolation::MissingBinder("faa"))?;
            let sum = add_obj(&m, &n, val_domain)?;
            Ok(Process::Input(cell.clone(), vec![m], Box::new(reemit(sum, body))))
        }
        RefMacro::SwapD => {
            let n = written.ok_or(FreshnessViolation::MissingValue("swapD"))?;
            let m = binder.ok_or(FreshnessViolation::MissingBinder("swapD"))?;
            let write = expand_macro(RefMacro::Write, cell, Some(n), None, body, val_domain)?;
            expand_macro(RefMacro::Read, cell, None, Some(m), write, val_domain)
        }
        RefMacro::FaaD => {
            let n = written.ok_or(FreshnessViolation::MissingValue("faaD"))?;
            let m = binder.ok_or(FreshnessViolation::MissingBinder("faaD"))?;
            let sum = add_obj(&m, &n, val_domain)?;
            let write = expand_macro(RefMacro::Write, cell, Some(sum), None, body, val_domain)?;
            expand_macro(RefMacro::Read, cell, None, Some(m), write, val_domain)
        }
    }
}

fn add_obj(m: &Name, n: &Obj, val_domain: u32) -> Result<Obj, FreshnessViolation> {
    if val_domain == 0 {
        return Err(FreshnessViolation::NoValueDomain);
    }
    match n {
        Obj::Name(n) => Ok(Obj::Add(m.clone(), n.clone(), val_domain).eval()),
        Obj::Add(..) => Err(FreshnessViolation::NoValueDomain),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn l() -> Name {
        Name::new("l", NameKind::Ref)
    }

    #[test]
    fn accessible_counts_unguarded_outputs() {
        let cell = Process::output(l(), vec![Name::val(0)]);
        let guarded = Process::input(l(), vec![Name::new("m", NameKind::Val)], Process::Nil);
        let p = Process::par(cell.clone(), guarded);
        assert_eq!(accessible_refs(&p).unwrap(), [l()].into_iter().collect());
        // read-in-progress exposes no cell
        let read = expand_macro(
            RefMacro::Read,
            &l(),
            None,
            Some(Name::new("m", NameKind::Val)),
            Process::Nil,
            3,
        )
        .unwrap();
        assert!(accessible_refs(&read).unwrap().is_empty());
        // two cells are ill-typed
        let bad = Process::par(cell.clone(), cell);
        assert!(matches!(accessible_refs(&bad), Err(RefsError::MultipleOutputs(_, 2))));
    }

    #[test]
    fn constraint_star() {
        let mut s = RefEnv::default();
        s.accessible.insert(l());
        let input = Action::In { subj: l(), objs: vec![Name::val(1)] };
        assert!(!refs_constraint(&s, &input));
        assert!(refs_constraint(&RefEnv::default(), &input));
        assert!(refs_constraint(&s, &Action::Tau));
    }

    #[test]
    fn swap_d_is_read_then_write() {
        let m = Name::new("m", NameKind::Val);
        let c = Name::new("c", NameKind::OutCtl);
        let body = Process::output(c, vec![m.clone()]);
        let p = expand_macro(
            RefMacro::SwapD,
            &l(),
            Some(Obj::Name(Name::val(2))),
            Some(m.clone()),
            body,
            3,
        )
        .unwrap();
        // l(m).(l<m> | l(m').(l<2> | c<m>))
        match &p {
            Process::Input(subj, binders, body) => {
                assert_eq!(subj, &l());
                assert_eq!(binders, &vec![m.clone()]);
                match &**body {
                    Process::Par(first, rest) => {
                        assert_eq!(**first, Process::Output(l(), vec![Obj::Name(m)]));
                        assert!(matches!(&**rest, Process::Input(..)));
                    }
                    other => panic!("unexpected {other:?}"),
                }
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
