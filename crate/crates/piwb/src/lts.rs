//! Early asynchronous labelled transitions, weak closures, and bounded
//! reachable-graph exploration.
//!
//! Inputs are instantiated at transition time: each binder position draws
//! from the names of matching kind visible to the pair under analysis, the
//! full value domain for value positions, plus a bounded pool of canonical
//! fresh names. Replication firings are budgeted per path; exceeding the
//! budget marks the state truncated rather than silently dropping moves.

use crate::canon::canonical_form;
use crate::names::{fresh_name, Name, NameKind};
use crate::process::{Obj, Process};
use crate::sorting::Sorting;
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::sync::Arc;
use thiserror::Error;

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum Action {
    Tau,
    /// Early input `a(b~)`: the objects actually received.
    In { subj: Name, objs: Vec<Name> },
    /// Output `new c~. a<b~>`; `extruded` lists the bound objects.
    Out { subj: Name, objs: Vec<Name>, extruded: Vec<Name> },
}

impl Action {
    pub fn subject(&self) -> Option<&Name> {
        match self {
            Action::Tau => None,
            Action::In { subj, .. } | Action::Out { subj, .. } => Some(subj),
        }
    }

    pub fn is_tau(&self) -> bool {
        matches!(self, Action::Tau)
    }

    pub fn is_input(&self) -> bool {
        matches!(self, Action::In { .. })
    }

    pub fn is_output(&self) -> bool {
        matches!(self, Action::Out { .. })
    }

    /// Free names of the action (extruded objects are binders).
    pub fn free_names(&self) -> BTreeSet<Name> {
        match self {
            Action::Tau => BTreeSet::new(),
            Action::In { subj, objs } => {
                let mut s: BTreeSet<Name> = objs.iter().cloned().collect();
                s.insert(subj.clone());
                s
            }
            Action::Out { subj, objs, extruded } => {
                let mut s: BTreeSet<Name> =
                    objs.iter().filter(|o| !extruded.contains(o)).cloned().collect();
                s.insert(subj.clone());
                s
            }
        }
    }

    /// All names mentioned, bound or free.
    pub fn names(&self) -> BTreeSet<Name> {
        match self {
            Action::Tau => BTreeSet::new(),
            Action::In { subj, objs } | Action::Out { subj, objs, .. } => {
                let mut s: BTreeSet<Name> = objs.iter().cloned().collect();
                s.insert(subj.clone());
                s
            }
        }
    }

    /// Continuation names in object position (questions mention these).
    pub fn object_conts(&self) -> Vec<&Name> {
        match self {
            Action::Tau => Vec::new(),
            Action::In { objs, .. } | Action::Out { objs, .. } => {
                objs.iter().filter(|n| n.kind == NameKind::Cont).collect()
            }
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Tau => write!(f, "tau"),
            Action::In { subj, objs } => {
                let os = objs.iter().map(|n| n.id.to_string()).collect::<Vec<_>>().join(",");
                write!(f, "{}({})", subj, os)
            }
            Action::Out { subj, objs, extruded } => {
                let os = objs.iter().map(|n| n.id.to_string()).collect::<Vec<_>>().join(",");
                if extruded.is_empty() {
                    write!(f, "{}<{}>", subj, os)
                } else {
                    let ex =
                        extruded.iter().map(|n| n.id.to_string()).collect::<Vec<_>>().join(",");
                    write!(f, "new {}. {}<{}>", ex, subj, os)
                }
            }
        }
    }
}

/// One strong transition, with bookkeeping the typed layers need.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Step {
    pub action: Action,
    /// Raw target (not canonicalized).
    pub target: Process,
    /// Derived through a communication (as opposed to a tau prefix).
    pub is_interaction: bool,
    /// Fired a replicated input.
    pub rep_fired: bool,
    /// Object signatures for fresh names this step introduced.
    pub fresh_sigs: Vec<(Name, Vec<NameKind>)>,
}

/// Shared configuration for transition generation.
#[derive(Clone, Debug)]
pub struct LtsCtx {
    pub sorting: Sorting,
    /// Replication firings allowed along one path.
    pub budget: usize,
    /// Fresh-name pool multiplier (1 = one fresh name per position).
    pub extra_fresh: usize,
}

impl LtsCtx {
    pub fn new(sorting: Sorting) -> Self {
        LtsCtx { sorting, budget: 4, extra_fresh: 1 }
    }

    pub fn with_budget(mut self, budget: usize) -> Self {
        self.budget = budget;
        self
    }
}

#[derive(Error, Debug, Clone, PartialEq, Eq)]
#[error("replication budget of {budget} exceeded during weak closure")]
pub struct BudgetExceeded {
    pub budget: usize,
}

/// All strong transitions of `p`, with inputs instantiated over
/// `env + free_names(p)` plus fresh pools. Extruded names are renamed to
/// canonical machine names so equal actions compare equal across processes.
pub fn step(ctx: &LtsCtx, p: &Process, env: &BTreeSet<Name>) -> Vec<Step> {
    let mut full_env: BTreeSet<Name> = env.clone();
    full_env.extend(p.free_names());
    let mut steps = transitions(ctx, p, &full_env);
    // canonical renaming of extruded names, deterministic per (p, env)
    for s in &mut steps {
        if let Action::Out { objs, extruded, .. } = &mut s.action {
            if !extruded.is_empty() {
                let mut avoid: BTreeSet<Arc<str>> = full_env.iter().map(|n| n.id.clone()).collect();
                avoid.extend(s.target.free_names().into_iter().map(|n| n.id));
                avoid.extend(objs.iter().map(|n| n.id.clone()));
                let mut renames: Vec<(Name, Name)> = Vec::new();
                for e in extruded.iter() {
                    let f = fresh_name(e.kind, &mut avoid);
                    renames.push((e.clone(), f));
                }
                if !renames.is_empty() {
                    let (from, to): (Vec<Name>, Vec<Name>) = renames.iter().cloned().unzip();
                    for o in objs.iter_mut() {
                        if let Some(i) = from.iter().position(|n| n == o) {
                            *o = to[i].clone();
                        }
                    }
                    for e in extruded.iter_mut() {
                        if let Some(i) = from.iter().position(|n| n == e) {
                            *e = to[i].clone();
                        }
                    }
                    s.target =
                        s.target.substitute(&to, &from).expect("extrusion renaming is kind-safe");
                }
            }
        }
    }
    steps.sort_by(|a, b| (&a.action, &a.target).cmp(&(&b.action, &b.target)));
    steps.dedup_by(|a, b| a.action == b.action && a.target == b.target);
    steps
}

fn transitions(ctx: &LtsCtx, p: &Process, env: &BTreeSet<Name>) -> Vec<Step> {
    match p {
        Process::Nil => Vec::new(),
        Process::Output(a, objs) => {
            let mut names = Vec::with_capacity(objs.len());
            for o in objs {
                match o {
                    Obj::Name(n) => names.push(n.clone()),
                    // unevaluated arithmetic: the output cannot fire yet
                    Obj::Add(..) => return Vec::new(),
                }
            }
            vec![Step {
                action: Action::Out { subj: a.clone(), objs: names, extruded: Vec::new() },
                target: Process::Nil,
                is_interaction: false,
                rep_fired: false,
                fresh_sigs: Vec::new(),
            }]
        }
        Process::Input(a, binders, body) => input_steps(ctx, p, a, binders, body, env, false),
        Process::ReplInput(a, binders, body) => input_steps(ctx, p, a, binders, body, env, true),
        Process::Tau(body) => vec![Step {
            action: Action::Tau,
            target: (**body).clone(),
            is_interaction: false,
            rep_fired: false,
            fresh_sigs: Vec::new(),
        }],
        Process::Match(a, b, g) => {
            if a == b {
                transitions(ctx, g, env)
            } else {
                Vec::new()
            }
        }
        Process::Sum(g1, g2) => {
            let mut out = transitions(ctx, g1, env);
            out.extend(transitions(ctx, g2, env));
            out
        }
        Process::Par(l, r) => {
            let mut out = Vec::new();
            let fn_l = l.free_names();
            let fn_r = r.free_names();
            for side in 0..2 {
                let (a, b, fn_b): (&Process, &Process, &BTreeSet<Name>) = if side == 0 {
                    (l, r, &fn_r)
                } else {
                    (r, l, &fn_l)
                };
                for mut s in transitions(ctx, a, env) {
                    // bound names of the action must avoid the passive side
                    if let Action::Out { objs, extruded, .. } = &mut s.action {
                        let clashes: Vec<Name> =
                            extruded.iter().filter(|e| fn_b.contains(e)).cloned().collect();
                        if !clashes.is_empty() {
                            let mut avoid: BTreeSet<Arc<str>> =
                                env.iter().map(|n| n.id.clone()).collect();
                            avoid.extend(fn_b.iter().map(|n| n.id.clone()));
                            avoid.extend(s.target.free_names().into_iter().map(|n| n.id));
                            avoid.extend(objs.iter().map(|n| n.id.clone()));
                            let mut from = Vec::new();
                            let mut to = Vec::new();
                            for c in clashes {
                                let f = fresh_name(c.kind, &mut avoid);
                                from.push(c);
                                to.push(f);
                            }
                            for o in objs.iter_mut() {
                                if let Some(i) = from.iter().position(|n| n == o) {
                                    *o = to[i].clone();
                                }
                            }
                            for e in extruded.iter_mut() {
                                if let Some(i) = from.iter().position(|n| n == e) {
                                    *e = to[i].clone();
                                }
                            }
                            s.target = s
                                .target
                                .substitute(&to, &from)
                                .expect("extrusion renaming is kind-safe");
                        }
                    }
                    let target = if side == 0 {
                        Process::Par(Box::new(s.target), b.clone().into())
                    } else {
                        Process::Par(b.clone().into(), Box::new(s.target))
                    };
                    out.push(Step { target, ..s });
                }
            }
            // communications (rule AComm)
            for side in 0..2 {
                let (snd, rcv): (&Process, &Process) = if side == 0 { (l, r) } else { (r, l) };
                for s in output_steps(ctx, snd, env) {
                    if let Action::Out { subj, objs, extruded } = &s.action {
                        for t in input_steps_at(ctx, rcv, subj, objs) {
                            let (a_target, b_target) = (&s.target, &t.target);
                            let inner = if side == 0 {
                                Process::par(a_target.clone(), b_target.clone())
                            } else {
                                Process::par(b_target.clone(), a_target.clone())
                            };
                            let mut tgt = inner;
                            for e in extruded.iter().rev() {
                                tgt = Process::res(e.clone(), tgt);
                            }
                            out.push(Step {
                                action: Action::Tau,
                                target: tgt,
                                is_interaction: true,
                                rep_fired: s.rep_fired || t.rep_fired,
                                fresh_sigs: Vec::new(),
                            });
                        }
                    }
                }
            }
            out
        }
        Process::Res(c, body) => {
            // rename the binder apart from the environment to keep
            // instantiation and extrusion unambiguous
            let needs_rename = env.contains(c);
            let (c, body) = if needs_rename {
                let mut avoid: BTreeSet<Arc<str>> = env.iter().map(|n| n.id.clone()).collect();
                avoid.extend(body.free_names().into_iter().map(|n| n.id));
                let nc = fresh_name(c.kind, &mut avoid);
                let nb = body
                    .substitute(std::slice::from_ref(&nc), std::slice::from_ref(c))
                    .expect("binder renaming is kind-safe");
                (nc, nb)
            } else {
                (c.clone(), (**body).clone())
            };
            let mut out = Vec::new();
            for s in transitions(ctx, &body, env) {
                match &s.action {
                    Action::Tau => {
                        out.push(Step { target: Process::res(c.clone(), s.target), ..s });
                    }
                    Action::In { subj, objs } => {
                        // the environment cannot mention the restricted name
                        if subj != &c && !objs.contains(&c) {
                            out.push(Step { target: Process::res(c.clone(), s.target), ..s });
                        }
                    }
                    Action::Out { subj, objs, extruded } => {
                        if subj == &c {
                            continue;
                        }
                        if objs.contains(&c) && !extruded.contains(&c) {
                            // Open: extrude the restriction
                            let mut extruded = extruded.clone();
                            extruded.push(c.clone());
                            out.push(Step {
                                action: Action::Out {
                                    subj: subj.clone(),
                                    objs: objs.clone(),
                                    extruded,
                                },
                                ..s
                            });
                        } else {
                            out.push(Step { target: Process::res(c.clone(), s.target), ..s });
                        }
                    }
                }
            }
            out
        }
    }
}

/// Output transitions only (no input instantiation): cheap scan for the
/// communication rule.
fn output_steps(ctx: &LtsCtx, p: &Process, env: &BTreeSet<Name>) -> Vec<Step> {
    match p {
        Process::Output(..) => transitions(ctx, p, env),
        Process::Match(a, b, g) => {
            if a == b {
                output_steps(ctx, g, env)
            } else {
                Vec::new()
            }
        }
        Process::Sum(g1, g2) => {
            let mut out = output_steps(ctx, g1, env);
            out.extend(output_steps(ctx, g2, env));
            out
        }
        Process::Par(l, r) => {
            let fn_l = l.free_names();
            let fn_r = r.free_names();
            let mut out = Vec::new();
            for side in 0..2 {
                let (a, b, fn_b): (&Process, &Process, &BTreeSet<Name>) = if side == 0 {
                    (l, r, &fn_r)
                } else {
                    (r, l, &fn_l)
                };
                for mut s in output_steps(ctx, a, env) {
                    if let Action::Out { objs, extruded, .. } = &mut s.action {
                        let clashes: Vec<Name> =
                            extruded.iter().filter(|e| fn_b.contains(e)).cloned().collect();
                        if !clashes.is_empty() {
                            let mut avoid: BTreeSet<Arc<str>> =
                                env.iter().map(|n| n.id.clone()).collect();
                            avoid.extend(fn_b.iter().map(|n| n.id.clone()));
                            avoid.extend(s.target.free_names().into_iter().map(|n| n.id));
                            avoid.extend(objs.iter().map(|n| n.id.clone()));
                            let mut from = Vec::new();
                            let mut to = Vec::new();
                            for csh in clashes {
                                let f = fresh_name(csh.kind, &mut avoid);
                                from.push(csh);
                                to.push(f);
                            }
                            for o in objs.iter_mut() {
                                if let Some(i) = from.iter().position(|n| n == o) {
                                    *o = to[i].clone();
                                }
                            }
                            for e in extruded.iter_mut() {
                                if let Some(i) = from.iter().position(|n| n == e) {
                                    *e = to[i].clone();
                                }
                            }
                            s.target = s
                                .target
                                .substitute(&to, &from)
                                .expect("extrusion renaming is kind-safe");
                        }
                    }
                    let target = if side == 0 {
                        Process::Par(Box::new(s.target), b.clone().into())
                    } else {
                        Process::Par(b.clone().into(), Box::new(s.target))
                    };
                    out.push(Step { target, ..s });
                }
            }
            out
        }
        Process::Res(c, body) => {
            let mut out = Vec::new();
            for s in output_steps(ctx, body, env) {
                if let Action::Out { subj, objs, extruded } = &s.action {
                    if subj == c {
                        continue;
                    }
                    if objs.contains(c) && !extruded.contains(c) {
                        let mut extruded = extruded.clone();
                        extruded.push(c.clone());
                        out.push(Step {
                            action: Action::Out {
                                subj: subj.clone(),
                                objs: objs.clone(),
                                extruded,
                            },
                            ..s
                        });
                    } else {
                        out.push(Step { target: Process::res(c.clone(), s.target), ..s });
                    }
                }
            }
            out
        }
        _ => Vec::new(),
    }
}

/// Input transitions of `p` at `subj` receiving exactly `objs`.
fn input_steps_at(ctx: &LtsCtx, p: &Process, subj: &Name, objs: &[Name]) -> Vec<Step> {
    match p {
        Process::Input(a, binders, body) | Process::ReplInput(a, binders, body) => {
            if a != subj || binders.len() != objs.len() {
                return Vec::new();
            }
            if binders.iter().zip(objs).any(|(b, o)| b.kind != o.kind) {
                return Vec::new();
            }
            let received = match body.substitute(objs, binders) {
                Ok(r) => r,
                Err(_) => return Vec::new(),
            };
            let (target, rep) = match p {
                Process::Input(..) => (received, false),
                _ => (Process::par(received, p.clone()), true),
            };
            vec![Step {
                action: Action::In { subj: subj.clone(), objs: objs.to_vec() },
                target,
                is_interaction: false,
                rep_fired: rep,
                fresh_sigs: Vec::new(),
            }]
        }
        Process::Match(a, b, g) => {
            if a == b {
                input_steps_at(ctx, g, subj, objs)
            } else {
                Vec::new()
            }
        }
        Process::Sum(g1, g2) => {
            let mut out = input_steps_at(ctx, g1, subj, objs);
            out.extend(input_steps_at(ctx, g2, subj, objs));
            out
        }
        Process::Par(l, r) => {
            let mut out = Vec::new();
            for s in input_steps_at(ctx, l, subj, objs) {
                out.push(Step { target: Process::Par(Box::new(s.target), r.clone()), ..s });
            }
            for s in input_steps_at(ctx, r, subj, objs) {
                out.push(Step { target: Process::Par(l.clone(), Box::new(s.target)), ..s });
            }
            out
        }
        Process::Res(c, body) => {
            if c == subj || objs.contains(c) {
                // rename the binder away from the received names
                let mut avoid: BTreeSet<Arc<str>> = objs.iter().map(|n| n.id.clone()).collect();
                avoid.insert(subj.id.clone());
                avoid.extend(body.free_names().into_iter().map(|n| n.id));
                let nc = fresh_name(c.kind, &mut avoid);
                let nb = body
                    .substitute(std::slice::from_ref(&nc), std::slice::from_ref(c))
                    .expect("binder renaming is kind-safe");
                input_steps_at(ctx, &nb, subj, objs)
                    .into_iter()
                    .map(|s| Step { target: Process::res(nc.clone(), s.target), ..s })
                    .collect()
            } else {
                input_steps_at(ctx, body, subj, objs)
                    .into_iter()
                    .map(|s| Step { target: Process::res(c.clone(), s.target), ..s })
                    .collect()
            }
        }
        _ => Vec::new(),
    }
}

/// Early-input instantiation for a single prefix.
fn input_steps(
    ctx: &LtsCtx,
    whole: &Process,
    subj: &Name,
    binders: &[Name],
    body: &Process,
    env: &BTreeSet<Name>,
    replicated: bool,
) -> Vec<Step> {
    // candidate names per position
    let mut avoid: BTreeSet<Arc<str>> = env.iter().map(|n| n.id.clone()).collect();
    avoid.extend(whole.free_names().into_iter().map(|n| n.id));
    let mut per_kind_fresh: BTreeMap<NameKind, Vec<Name>> = BTreeMap::new();
    for kind in [NameKind::OutCtl, NameKind::InCtl, NameKind::Cont, NameKind::Ref] {
        let positions = binders.iter().filter(|b| b.kind == kind).count();
        if positions == 0 {
            continue;
        }
        let pool_size = positions * ctx.extra_fresh.max(1);
        let mut pool = Vec::with_capacity(pool_size);
        for _ in 0..pool_size {
            pool.push(fresh_name(kind, &mut avoid));
        }
        per_kind_fresh.insert(kind, pool);
    }
    let candidates: Vec<Vec<Name>> = binders
        .iter()
        .map(|b| {
            if b.kind == NameKind::Val {
                let domain = ctx.sorting.val_domain.max(1);
                (0..domain).map(Name::val).collect()
            } else {
                let mut c: Vec<Name> =
                    env.iter().filter(|n| n.kind == b.kind).cloned().collect();
                c.extend(per_kind_fresh.get(&b.kind).cloned().unwrap_or_default());
                c
            }
        })
        .collect();

    let mut out = Vec::new();
    let mut idx = vec![0usize; binders.len()];
    loop {
        let objs: Vec<Name> =
            idx.iter().enumerate().map(|(i, &j)| candidates[i][j].clone()).collect();
        if let Ok(received) = body.substitute(&objs, binders) {
            let target = if replicated {
                Process::par(received, whole.clone())
            } else {
                received
            };
            let mut fresh_sigs = Vec::new();
            for (b, o) in binders.iter().zip(&objs) {
                if o.is_machine() {
                    if let Some(sig) = ctx.sorting.sig_of_id(&b.id) {
                        fresh_sigs.push((o.clone(), sig.clone()));
                    }
                }
            }
            out.push(Step {
                action: Action::In { subj: subj.clone(), objs },
                target,
                is_interaction: false,
                rep_fired: replicated,
                fresh_sigs,
            });
        }
        // next index tuple
        let mut i = 0;
        loop {
            if i == binders.len() {
                return out;
            }
            idx[i] += 1;
            if idx[i] < candidates[i].len() {
                break;
            }
            idx[i] = 0;
            i += 1;
        }
        if binders.is_empty() {
            return out;
        }
    }
}

/// Internal transitions only: tau prefixes and communications. Skips input
/// instantiation entirely, so it is environment-independent.
pub fn tau_steps(ctx: &LtsCtx, p: &Process) -> Vec<Step> {
    match p {
        Process::Nil | Process::Output(..) | Process::Input(..) | Process::ReplInput(..) => {
            Vec::new()
        }
        Process::Tau(body) => vec![Step {
            action: Action::Tau,
            target: (**body).clone(),
            is_interaction: false,
            rep_fired: false,
            fresh_sigs: Vec::new(),
        }],
        Process::Match(a, b, g) => {
            if a == b {
                tau_steps(ctx, g)
            } else {
                Vec::new()
            }
        }
        Process::Sum(g1, g2) => {
            let mut out = tau_steps(ctx, g1);
            out.extend(tau_steps(ctx, g2));
            out
        }
        Process::Par(l, r) => {
            let mut out = Vec::new();
            for s in tau_steps(ctx, l) {
                out.push(Step { target: Process::Par(Box::new(s.target), r.clone()), ..s });
            }
            for s in tau_steps(ctx, r) {
                out.push(Step { target: Process::Par(l.clone(), Box::new(s.target)), ..s });
            }
            let empty = BTreeSet::new();
            for side in 0..2 {
                let (snd, rcv): (&Process, &Process) = if side == 0 { (l, r) } else { (r, l) };
                for s in output_steps(ctx, snd, &empty) {
                    if let Action::Out { subj, objs, extruded } = &s.action {
                        for t in input_steps_at(ctx, rcv, subj, objs) {
                            let inner = if side == 0 {
                                Process::par(s.target.clone(), t.target.clone())
                            } else {
                                Process::par(t.target.clone(), s.target.clone())
                            };
                            let mut tgt = inner;
                            for e in extruded.iter().rev() {
                                tgt = Process::res(e.clone(), tgt);
                            }
                            out.push(Step {
                                action: Action::Tau,
                                target: tgt,
                                is_interaction: true,
                                rep_fired: s.rep_fired || t.rep_fired,
                                fresh_sigs: Vec::new(),
                            });
                        }
                    }
                }
            }
            out
        }
        Process::Res(_, body) => {
            let c = match p {
                Process::Res(c, _) => c.clone(),
                _ => unreachable!(),
            };
            tau_steps(ctx, body)
                .into_iter()
                .map(|s| Step { target: Process::res(c.clone(), s.target), ..s })
                .collect()
        }
    }
}

/// Result of a weak-closure query.
#[derive(Clone, Debug, Default)]
pub struct WeakSteps {
    /// Weak successors per action; tau entries use `Action::Tau` and include
    /// the zero-step move.
    pub steps: Vec<(Action, Process, usize)>,
    /// Some closure path was cut by the replication budget.
    pub truncated: bool,
}

/// `p ==mu=>` for every strong action `mu` enabled in the tau-closure,
/// followed by further reductions. Targets are canonical. The `usize` is the
/// number of replication firings consumed.
pub fn weak_steps(ctx: &LtsCtx, p: &Process, env: &BTreeSet<Name>, budget: usize) -> WeakSteps {
    let mut result = WeakSteps::default();
    let pre = tau_closure(ctx, p, budget);
    result.truncated |= pre.truncated;
    let mut seen: BTreeSet<(Action, Process)> = BTreeSet::new();
    for (state, used_pre) in &pre.states {
        // the empty weak move
        let canon = canonical_form(state);
        if seen.insert((Action::Tau, canon.clone())) {
            result.steps.push((Action::Tau, canon, *used_pre));
        }
        for s in step(ctx, state, env) {
            let cost_step = usize::from(s.rep_fired);
            if used_pre + cost_step > budget {
                result.truncated = true;
                continue;
            }
            let post = tau_closure(ctx, &s.target, budget - used_pre - cost_step);
            result.truncated |= post.truncated;
            for (final_state, used_post) in &post.states {
                let canon = canonical_form(final_state);
                let total = used_pre + cost_step + used_post;
                if seen.insert((s.action.clone(), canon.clone())) {
                    result.steps.push((s.action.clone(), canon, total));
                }
            }
        }
    }
    result.steps.sort();
    result
}

#[derive(Clone, Debug)]
pub struct TauClosure {
    /// Reached states (raw) with minimal replication cost.
    pub states: Vec<(Process, usize)>,
    pub truncated: bool,
}

/// Reflexive-transitive tau closure with replication budget. Internal moves
/// are environment-independent.
pub fn tau_closure(ctx: &LtsCtx, p: &Process, budget: usize) -> TauClosure {
    let mut best: BTreeMap<Process, usize> = BTreeMap::new();
    let mut repr: BTreeMap<Process, Process> = BTreeMap::new();
    let mut queue: VecDeque<(Process, usize)> = VecDeque::new();
    let canon0 = canonical_form(p);
    best.insert(canon0.clone(), 0);
    repr.insert(canon0, p.clone());
    queue.push_back((p.clone(), 0));
    let mut truncated = false;
    while let Some((state, used)) = queue.pop_front() {
        for s in tau_steps(ctx, &state) {
            let cost = usize::from(s.rep_fired);
            if used + cost > budget {
                truncated = true;
                continue;
            }
            let canon = canonical_form(&s.target);
            let better = match best.get(&canon) {
                Some(&prev) => used + cost < prev,
                None => true,
            };
            if better {
                best.insert(canon.clone(), used + cost);
                repr.insert(canon.clone(), s.target.clone());
                queue.push_back((s.target, used + cost));
            }
        }
    }
    TauClosure {
        states: best
            .into_iter()
            .map(|(canon, used)| (repr.remove(&canon).unwrap_or(canon), used))
            .collect(),
        truncated,
    }
}

/// Weak transitions matching one specific action: `p ==mu^=>`. For outputs
/// the candidate's extruded names are unified with the challenge's; for
/// inputs the exact received objects are replayed, so no instantiation
/// search happens. Environment-independent, hence cacheable.
pub fn weak_match(
    ctx: &LtsCtx,
    p: &Process,
    action: &Action,
    budget: usize,
) -> (Vec<(Process, usize)>, bool) {
    let mut out: BTreeMap<Process, usize> = BTreeMap::new();
    let mut truncated = false;
    let pre = tau_closure(ctx, p, budget);
    truncated |= pre.truncated;
    let mut add = |target: Process, cost: usize, out: &mut BTreeMap<Process, usize>| {
        let canon = canonical_form(&target);
        let better = out.get(&canon).map(|&c| cost < c).unwrap_or(true);
        if better {
            out.insert(canon, cost);
        }
    };
    for (state, used) in &pre.states {
        match action {
            Action::Tau => add(state.clone(), *used, &mut out),
            Action::In { subj, objs } => {
                for s in input_steps_at(ctx, state, subj, objs) {
                    let cost = used + usize::from(s.rep_fired);
                    if cost > budget {
                        truncated = true;
                        continue;
                    }
                    let post = tau_closure(ctx, &s.target, budget - cost);
                    truncated |= post.truncated;
                    for (t, c2) in &post.states {
                        add(t.clone(), cost + c2, &mut out);
                    }
                }
            }
            Action::Out { .. } => {
                let empty = BTreeSet::new();
                for s in output_steps(ctx, state, &empty) {
                    let Some(target) = unify_output(action, &s.action, &s.target) else {
                        continue;
                    };
                    let cost = used + usize::from(s.rep_fired);
                    if cost > budget {
                        truncated = true;
                        continue;
                    }
                    let post = tau_closure(ctx, &target, budget - cost);
                    truncated |= post.truncated;
                    for (t, c2) in &post.states {
                        add(t.clone(), cost + c2, &mut out);
                    }
                }
            }
        }
    }
    (out.into_iter().collect(), truncated)
}

/// Rename a candidate output's extruded names to the challenge's; `None`
/// when the actions do not unify.
fn unify_output(challenge: &Action, candidate: &Action, target: &Process) -> Option<Process> {
    let (Action::Out { subj: s1, objs: o1, extruded: e1 },
         Action::Out { subj: s2, objs: o2, extruded: e2 }) = (challenge, candidate)
    else {
        return None;
    };
    if s1 != s2 || o1.len() != o2.len() || e1.len() != e2.len() {
        return None;
    }
    let mut from = Vec::new();
    let mut to = Vec::new();
    for (a, b) in o1.iter().zip(o2) {
        let a_ex = e1.contains(a);
        let b_ex = e2.contains(b);
        if a_ex != b_ex {
            return None;
        }
        if a_ex {
            if a.kind != b.kind {
                return None;
            }
            match from.iter().position(|f| f == b) {
                Some(i) => {
                    if to[i] != *a {
                        return None;
                    }
                }
                None => {
                    if to.contains(a) {
                        return None;
                    }
                    from.push(b.clone());
                    to.push(a.clone());
                }
            }
        } else if a != b {
            return None;
        }
    }
    if from.is_empty() {
        return Some(target.clone());
    }
    target.substitute(&to, &from).ok()
}

/// Bounded reachable graph.
#[derive(Clone, Debug)]
pub struct StateGraph {
    pub root: usize,
    pub states: Vec<Process>,
    pub edges: BTreeSet<(usize, Action, usize)>,
    pub truncated_states: BTreeSet<usize>,
    pub budget: usize,
}

impl StateGraph {
    pub fn state_id(&self, p: &Process) -> Option<usize> {
        let c = canonical_form(p);
        self.states.iter().position(|s| *s == c)
    }

    /// Weak successors from a state of the graph.
    pub fn weak_closure(
        &self,
        ctx: &LtsCtx,
        from: &Process,
    ) -> Result<BTreeSet<(Action, Process)>, BudgetExceeded> {
        let id = self
            .state_id(from)
            .unwrap_or_else(|| panic!("weak_closure: state not in graph"));
        let env: BTreeSet<Name> = self.states[self.root].free_names();
        let w = weak_steps(ctx, &self.states[id], &env, self.budget);
        if w.truncated {
            return Err(BudgetExceeded { budget: self.budget });
        }
        Ok(w.steps.into_iter().map(|(a, p, _)| (a, p)).collect())
    }

    pub fn dump(&self) -> String {
        use std::fmt::Write as _;
        let mut out = String::new();
        for (i, s) in self.states.iter().enumerate() {
            let mark = if self.truncated_states.contains(&i) { "\ttruncated" } else { "" };
            let _ = writeln!(out, "state\t{}\t{}{}", i, crate::parser::render(s), mark);
        }
        for (a, act, b) in &self.edges {
            let _ = writeln!(out, "edge\t{}\t{}\t{}", a, act, b);
        }
        out
    }
}

/// Explore the reachable graph with at most `budget` replication firings per
/// path; frontiers that would exceed it are marked truncated.
pub fn explore(ctx: &LtsCtx, p: &Process, budget: usize) -> StateGraph {
    let env: BTreeSet<Name> = p.free_names();
    let root_canon = canonical_form(p);
    let mut ids: BTreeMap<Process, usize> = BTreeMap::new();
    let mut states: Vec<Process> = Vec::new();
    let mut remaining: Vec<usize> = Vec::new();
    let mut edges = BTreeSet::new();
    let mut truncated_states = BTreeSet::new();
    ids.insert(root_canon.clone(), 0);
    states.push(root_canon);
    remaining.push(budget);
    let mut queue = VecDeque::new();
    queue.push_back(0usize);
    while let Some(id) = queue.pop_front() {
        let state = states[id].clone();
        let avail = remaining[id];
        let mut env_here = env.clone();
        env_here.extend(state.free_names());
        for s in step(ctx, &state, &env_here) {
            let cost = usize::from(s.rep_fired);
            if cost > avail {
                truncated_states.insert(id);
                continue;
            }
            let canon = canonical_form(&s.target);
            let next_remaining = avail - cost;
            match ids.get(&canon) {
                Some(&nid) => {
                    edges.insert((id, s.action, nid));
                    if next_remaining > remaining[nid] {
                        remaining[nid] = next_remaining;
                        queue.push_back(nid);
                    }
                }
                None => {
                    let nid = states.len();
                    ids.insert(canon.clone(), nid);
                    states.push(canon);
                    remaining.push(next_remaining);
                    edges.insert((id, s.action, nid));
                    queue.push_back(nid);
                }
            }
        }
    }
    StateGraph { root: 0, states, edges, truncated_states, budget }
}

/// The unique tau-target when every transition of `p` is the same internal
/// move up to structural congruence.
pub fn is_deterministic_step(ctx: &LtsCtx, p: &Process) -> Option<Process> {
    let env = p.free_names();
    let steps = step(ctx, p, &env);
    let mut target: Option<Process> = None;
    if steps.is_empty() {
        return None;
    }
    for s in steps {
        if !s.action.is_tau() {
            return None;
        }
        let canon = canonical_form(&s.target);
        match &target {
            Some(t) if *t != canon => return None,
            _ => target = Some(canon),
        }
    }
    target
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::names::NameKind::*;

    fn ctx() -> LtsCtx {
        LtsCtx::new(Sorting::with_val_domain(3))
    }

    fn n(id: &str, k: NameKind) -> Name {
        Name::new(id, k)
    }

    #[test]
    fn output_fires() {
        let p = Process::output(n("x", OutCtl), vec![n("a", InCtl)]);
        let steps = step(&ctx(), &p, &BTreeSet::new());
        assert_eq!(steps.len(), 1);
        assert_eq!(
            steps[0].action,
            Action::Out { subj: n("x", OutCtl), objs: vec![n("a", InCtl)], extruded: vec![] }
        );
        assert_eq!(steps[0].target, Process::Nil);
    }

    #[test]
    fn input_instantiates_over_env_and_fresh() {
        // x(y).0 with env {z} of matching kind: receive z or a fresh name
        let p = Process::input(n("x", OutCtl), vec![n("y", OutCtl)], Process::Nil);
        let env: BTreeSet<Name> = [n("z", OutCtl)].into_iter().collect();
        let steps = step(&ctx(), &p, &env);
        let mut received: Vec<String> = steps
            .iter()
            .filter_map(|s| match &s.action {
                Action::In { objs, .. } => Some(objs[0].id.to_string()),
                _ => None,
            })
            .collect();
        received.sort();
        // env name z, the subject's own name is not of matching kind set:
        // subject x is OutCtl so x itself is also a candidate via fn(p)
        assert!(received.contains(&"z".to_string()));
        assert!(received.iter().any(|r| r.starts_with("#o")));
    }

    #[test]
    fn communication_and_extrusion() {
        // new a.(x<a> | 0) | x(b).b<>  --tau--> new a.(0|0|a<>)
        let a = n("a", OutCtl);
        let x = n("x", OutCtl);
        let b = n("b", OutCtl);
        let p = Process::par(
            Process::res(a.clone(), Process::output(x.clone(), vec![a.clone()])),
            Process::input(x.clone(), vec![b.clone()], Process::output(b, vec![])),
        );
        let steps = step(&ctx(), &p, &BTreeSet::new());
        let taus: Vec<&Step> = steps.iter().filter(|s| s.action.is_tau()).collect();
        assert_eq!(taus.len(), 1);
        assert!(taus[0].is_interaction);
        let expected = canonical_form(&Process::res(
            a.clone(),
            Process::output(a.clone(), vec![]),
        ));
        assert_eq!(canonical_form(&taus[0].target), expected);
        // the bound output extrudes
        let opens: Vec<&Step> = steps
            .iter()
            .filter(|s| matches!(&s.action, Action::Out { extruded, .. } if !extruded.is_empty()))
            .collect();
        assert_eq!(opens.len(), 1);
    }

    #[test]
    fn replication_persists_and_counts() {
        let x = n("x", OutCtl);
        let p = Process::res(
            x.clone(),
            Process::par(
                Process::output(x.clone(), vec![]),
                Process::ReplInput(x.clone(), vec![], Box::new(Process::output(x, vec![]))),
            ),
        );
        let g = explore(&ctx(), &p, 5);
        // divergent single state with a tau self-loop
        assert_eq!(g.states.len(), 1);
        assert_eq!(g.edges.len(), 1);
        assert!(g.truncated_states.is_empty());
    }

    #[test]
    fn weak_closure_absorbs_tau() {
        let x = n("x", OutCtl);
        let p = Process::Tau(Box::new(Process::Tau(Box::new(Process::output(x.clone(), vec![])))));
        let w = weak_steps(&ctx(), &p, &BTreeSet::new(), 4);
        assert!(w
            .steps
            .iter()
            .any(|(a, t, _)| matches!(a, Action::Out { subj, .. } if subj == &x)
                && *t == Process::Nil));
    }

    #[test]
    fn deterministic_interaction() {
        // new a.(a<> | a().y<>) has exactly one transition, a tau
        let a = n("a", OutCtl);
        let y = n("y", OutCtl);
        let p = Process::res(
            a.clone(),
            Process::par(
                Process::output(a.clone(), vec![]),
                Process::input(a, vec![], Process::output(y.clone(), vec![])),
            ),
        );
        let t = is_deterministic_step(&ctx(), &p).expect("deterministic");
        assert_eq!(t, canonical_form(&Process::output(y, vec![])));
        // a visible action breaks determinism
        let q = Process::output(n("x", OutCtl), vec![]);
        assert!(is_deterministic_step(&ctx(), &q).is_none());
    }
}
