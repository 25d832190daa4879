//! The sequentiality type system.
//!
//! Judgements have the form `|-eta P` with `eta` in {0,1}: `1` means the
//! process owns the computation thread, `0` that it does not. The rules are
//! syntax-directed, so each process has at most one eta:
//!
//! - an input's continuation always owns the thread;
//! - an input at an input-controlled name owns the thread, at an
//!   output-controlled name it does not (nor does a replicated input);
//! - outputs own the thread exactly at output-controlled names;
//! - parallel grants the thread to at most one component, sum to both
//!   branches equally; nil and match never own it.

use crate::lts::{Action, LtsCtx, Step};
use crate::names::{Name, NameKind};
use crate::process::Process;
use crate::refs::{self, RefEnv};
use std::collections::BTreeSet;
use std::fmt;
use thiserror::Error;

/// The thread indicator eta.
pub type Eta = u8;

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum SeqTypeError {
    #[error("input continuation does not own the thread (rule {rule}) in: {at}")]
    InactiveContinuation { rule: &'static str, at: String },
    #[error("replicated input at the input-controlled name {0} has no typing rule")]
    ReplicatedInputControlled(Name),
    #[error("two active parallel components (rule Par) in: {at}")]
    TwoActiveComponents { at: String },
    #[error("sum branches have different thread indicators (rule Sum) in: {at}")]
    SumMismatch { at: String },
    #[error("match guard owns the thread (rule Mat) in: {at}")]
    ActiveMatch { at: String },
    #[error("value name {0} used as a subject")]
    ValueSubject(Name),
}

/// A typed state for the sequential discipline: the thread indicator, the
/// process, and optionally the tracked accessible-reference set.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct SeqConfig {
    pub eta: Eta,
    pub proc: Process,
    pub refs: Option<RefEnv>,
}

impl SeqConfig {
    pub fn plain(eta: Eta, proc: Process) -> Self {
        SeqConfig { eta, proc, refs: None }
    }

    pub fn with_refs(eta: Eta, proc: Process, refs: RefEnv) -> Self {
        SeqConfig { eta, proc, refs: Some(refs) }
    }
}

impl fmt::Display for SeqConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.refs {
            None => write!(f, "|-{} {}", self.eta, self.proc),
            Some(r) => {
                let s = r
                    .accessible
                    .iter()
                    .map(|n| n.id.to_string())
                    .collect::<Vec<_>>()
                    .join(",");
                write!(f, "|-{{{}}};{} {}", s, self.eta, self.proc)
            }
        }
    }
}

/// Compute the unique eta with `|-eta p`, or a structured failure naming the
/// violated rule and the lowest offending subterm.
pub fn typecheck_seq(p: &Process) -> Result<Eta, SeqTypeError> {
    match p {
        Process::Nil => Ok(0),
        Process::Output(a, _) => match a.kind {
            NameKind::Val => Err(SeqTypeError::ValueSubject(a.clone())),
            k if k.is_output_controlled() => Ok(1), // O-Act
            _ => Ok(0),                             // O-Ina
        },
        Process::Input(a, _, body) => {
            let inner = typecheck_seq(body)?;
            if inner != 1 {
                return Err(SeqTypeError::InactiveContinuation {
                    rule: if a.kind.is_input_controlled() { "I-Act" } else { "I-Ina" },
                    at: p.to_string(),
                });
            }
            match a.kind {
                NameKind::Val => Err(SeqTypeError::ValueSubject(a.clone())),
                k if k.is_input_controlled() => Ok(1), // I-Act
                _ => Ok(0),                            // I-Ina
            }
        }
        Process::ReplInput(a, _, body) => {
            let inner = typecheck_seq(body)?;
            if inner != 1 {
                return Err(SeqTypeError::InactiveContinuation { rule: "I-Ina", at: p.to_string() });
            }
            if a.kind.is_input_controlled() {
                return Err(SeqTypeError::ReplicatedInputControlled(a.clone()));
            }
            Ok(0)
        }
        Process::Tau(body) => typecheck_seq(body),
        Process::Match(_, _, g) => {
            let inner = typecheck_seq(g)?;
            if inner != 0 {
                return Err(SeqTypeError::ActiveMatch { at: p.to_string() });
            }
            Ok(0)
        }
        Process::Sum(g1, g2) => {
            let e1 = typecheck_seq(g1)?;
            let e2 = typecheck_seq(g2)?;
            if e1 != e2 {
                return Err(SeqTypeError::SumMismatch { at: p.to_string() });
            }
            Ok(e1)
        }
        Process::Par(l, r) => {
            let e1 = typecheck_seq(l)?;
            let e2 = typecheck_seq(r)?;
            if e1 + e2 > 1 {
                return Err(SeqTypeError::TwoActiveComponents { at: p.to_string() });
            }
            Ok(e1 + e2)
        }
        Process::Res(_, body) => typecheck_seq(body),
    }
}

/// Why a transition is not type-allowed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Disallowed {
    /// eta = 1 and the action does not carry the thread.
    ThreadViolation,
    /// Constraint (*): input at an accessible reference.
    AccessibleRefInput(Name),
    /// Visible output at a tracked reference name.
    RefOutput(Name),
}

impl fmt::Display for Disallowed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Disallowed::ThreadViolation => {
                write!(f, "active process may only offer thread-carrying particles")
            }
            Disallowed::AccessibleRefInput(l) => {
                write!(f, "input at accessible reference {}", l)
            }
            Disallowed::RefOutput(l) => write!(f, "visible output at reference {}", l),
        }
    }
}

/// Type-allowed transitions: at eta = 0 everything, tau always, and at
/// eta = 1 only inputs at input-controlled subjects or outputs at
/// output-controlled subjects. Reference tracking adds constraint (*) and
/// keeps cells process-owned.
pub fn type_allowed(c: &SeqConfig, action: &Action) -> Result<(), Disallowed> {
    if let Some(renv) = &c.refs {
        if !action.is_tau() {
            if let Action::In { subj, .. } = action {
                if subj.kind == NameKind::Ref && c.eta == 1 && !refs::refs_constraint(renv, action) {
                    return Err(Disallowed::AccessibleRefInput(subj.clone()));
                }
            }
            if refs::output_at_ref(action) {
                let subj = action.subject().expect("output has a subject").clone();
                return Err(Disallowed::RefOutput(subj));
            }
        }
    }
    if c.eta == 0 || action.is_tau() {
        return Ok(());
    }
    match action {
        Action::In { subj, .. } if subj.kind.is_input_controlled() => Ok(()),
        Action::Out { subj, .. } if subj.kind.is_output_controlled() => Ok(()),
        _ => Err(Disallowed::ThreadViolation),
    }
}

/// Evolve the typing along a type-allowed transition: an input at an
/// output-controlled name acquires the thread, an output at one releases
/// it, anything else preserves eta. The accessible set is recomputed from
/// the target.
pub fn evolve_eta(c: &SeqConfig, action: &Action, target: &Process) -> SeqConfig {
    let eta = match action {
        Action::In { subj, .. } if subj.kind.is_output_controlled() => 1,
        Action::Out { subj, .. } if subj.kind.is_output_controlled() => 0,
        _ => c.eta,
    };
    let refs = c.refs.as_ref().map(|_| RefEnv {
        accessible: refs::accessible_refs(target).unwrap_or_default(),
    });
    SeqConfig { eta, proc: target.clone(), refs }
}

/// Type-allowed strong steps from a configuration.
pub fn allowed_steps(ctx: &LtsCtx, c: &SeqConfig, env: &BTreeSet<Name>) -> Vec<(Step, SeqConfig)> {
    crate::lts::step(ctx, &c.proc, env)
        .into_iter()
        .filter(|s| type_allowed(c, &s.action).is_ok())
        .map(|s| {
            let next = evolve_eta(c, &s.action, &s.target);
            (s, next)
        })
        .collect()
}

/// Weak typed barbs: names `a` such that some weak type-allowed output with
/// subject `a` exists. The boolean reports budget truncation.
pub fn barbs(ctx: &LtsCtx, c: &SeqConfig, env: &BTreeSet<Name>) -> (BTreeSet<Name>, bool) {
    let mut out = BTreeSet::new();
    let closure = crate::lts::tau_closure(ctx, &c.proc, ctx.budget);
    for (state, _) in &closure.states {
        let here = SeqConfig {
            eta: c.eta,
            proc: state.clone(),
            refs: c.refs.as_ref().map(|_| RefEnv {
                accessible: refs::accessible_refs(state).unwrap_or_default(),
            }),
        };
        for s in crate::lts::step(ctx, state, env) {
            if s.action.is_output() && type_allowed(&here, &s.action).is_ok() {
                out.insert(s.action.subject().expect("output has a subject").clone());
            }
        }
    }
    (out, closure.truncated)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::names::NameKind::*;
    use crate::parser;

    fn p(src: &str) -> Process {
        let unit = parser::parse(src).unwrap();
        unit.defs.last().unwrap().1.clone()
    }

    #[test]
    fn thread_example_is_active() {
        let proc = p("decl out x,y,z. decl in u,v. proc P = u().( x<> | y().x<> ) | z().y<> | v<>");
        assert_eq!(typecheck_seq(&proc), Ok(1));
    }

    #[test]
    fn nil_and_bare_outputs() {
        assert_eq!(typecheck_seq(&Process::Nil), Ok(0));
        assert_eq!(typecheck_seq(&Process::output(Name::new("x", OutCtl), vec![])), Ok(1));
        assert_eq!(typecheck_seq(&Process::output(Name::new("u", InCtl), vec![])), Ok(0));
    }

    #[test]
    fn two_active_components_rejected() {
        let proc = p("decl out x,y. proc P = x<> | y<>");
        assert!(matches!(typecheck_seq(&proc), Err(SeqTypeError::TwoActiveComponents { .. })));
    }

    #[test]
    fn type_allowed_clauses() {
        let x = Name::new("x", OutCtl);
        let u = Name::new("u", InCtl);
        let active_out = SeqConfig::plain(1, Process::output(x.clone(), vec![]));
        let out_action = Action::Out { subj: x.clone(), objs: vec![], extruded: vec![] };
        assert!(type_allowed(&active_out, &out_action).is_ok());
        // input at an output-controlled name is not observable at eta=1
        let inp_x = Action::In { subj: x, objs: vec![] };
        let active = SeqConfig::plain(1, Process::Nil);
        assert!(type_allowed(&active, &inp_x).is_err());
        let inp_u = Action::In { subj: u, objs: vec![] };
        assert!(type_allowed(&active, &inp_u).is_ok());
        // inactive processes allow everything
        let inactive = SeqConfig::plain(0, Process::Nil);
        assert!(type_allowed(&inactive, &inp_x).is_ok());
    }

    #[test]
    fn eta_evolution() {
        let x = Name::new("x", OutCtl);
        let c = SeqConfig::plain(0, Process::input(x.clone(), vec![], Process::output(x.clone(), vec![])));
        let inp = Action::In { subj: x.clone(), objs: vec![] };
        let next = evolve_eta(&c, &inp, &Process::output(x.clone(), vec![]));
        assert_eq!(next.eta, 1);
        let outp = Action::Out { subj: x, objs: vec![], extruded: vec![] };
        let done = evolve_eta(&next, &outp, &Process::Nil);
        assert_eq!(done.eta, 0);
    }

    #[test]
    fn barbs_of_simple_output() {
        let unit = parser::parse("decl out x. decl in a. proc P = x<a>").unwrap();
        let proc = unit.def("P").unwrap().clone();
        let sorting = crate::sorting::sorting_of_unit(&unit).unwrap();
        let ctx = LtsCtx::new(sorting);
        let (bs, truncated) = barbs(&ctx, &SeqConfig::plain(1, proc), &BTreeSet::new());
        assert!(!truncated);
        assert_eq!(bs, [Name::new("x", OutCtl)].into_iter().collect());
    }

    #[test]
    fn active_nullary_has_no_barbs() {
        // 0_1 = new x. x<>
        let proc = p("decl out x. proc Nil1 = new x. x<>");
        assert_eq!(typecheck_seq(&proc), Ok(1));
        let ctx = LtsCtx::new(crate::sorting::Sorting::with_val_domain(1));
        let (bs, _) = barbs(&ctx, &SeqConfig::plain(1, proc), &BTreeSet::new());
        assert!(bs.is_empty());
    }
}
