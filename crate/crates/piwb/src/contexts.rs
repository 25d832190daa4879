//! Sampling of typed static contexts for barbed spot checks.
//!
//! The family mixes hand-shaped testers with seeded random frames and keeps
//! only candidates that typecheck against the pair's typing:
//!
//! - message frames `u<v~>` feeding the pair's inputs;
//! - reader testers `y(c~).new u,z.(z-converter | [c=v]u<>)` that turn an
//!   observed output (and its data) into a fresh barb;
//! - probe frames `z<> | z().R` whose barb disappears when `R` starts;
//! - forwarder contexts for well-bracketed pairs, plus replicated services
//!   answering their calls.

use crate::equiv::Typing;
use crate::lts::LtsCtx;
use crate::names::{fresh_name, Name, NameKind};
use crate::process::{Obj, Process, StaticContext};
use crate::refs;
use crate::seq;
use crate::sorting::Sorting;
use crate::wb::{self, Stack, StackTag};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeSet;
use std::sync::Arc;

/// Deterministically sample `want` static contexts typed compatibly with
/// the pair. The sorting may be extended with signatures for the fresh
/// names the contexts introduce.
pub fn sample_contexts(
    ctx: &mut LtsCtx,
    typing: &Typing,
    p: &Process,
    q: &Process,
    seed: u64,
    want: usize,
) -> Vec<StaticContext> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut free: BTreeSet<Name> = p.free_names();
    free.extend(q.free_names());
    free.retain(|n| n.kind != NameKind::Val);
    let mut avoid: BTreeSet<Arc<str>> = free.iter().map(|n| n.id.clone()).collect();
    if let Typing::Wb(s) = typing {
        avoid.extend(s.names().into_iter().map(|n| n.id));
    }

    let mut candidates: Vec<StaticContext> = vec![StaticContext::hole()];

    // message frames for free input-controlled names (not tracked refs)
    for u in free.iter().filter(|n| n.kind == NameKind::InCtl) {
        if let Some(objs) = default_objects(ctx, u, &mut avoid) {
            candidates.push(StaticContext {
                restrictions: Vec::new(),
                frame: Process::Output(u.clone(), objs),
            });
        }
    }

    // feeding frames for free output-controlled names (active supply)
    for x in free.iter().filter(|n| n.kind == NameKind::OutCtl) {
        if let Some(objs) = default_objects(ctx, x, &mut avoid) {
            if objs.iter().all(|o| o.kind() != NameKind::Cont) {
                candidates.push(StaticContext {
                    restrictions: Vec::new(),
                    frame: Process::Output(x.clone(), objs),
                });
            }
        }
    }

    // reader testers at free output-controlled names
    for y in free.iter().filter(|n| n.kind == NameKind::OutCtl) {
        let sig = match ctx.sorting.sig_of(y) {
            Some(s) => s.clone(),
            None => continue,
        };
        if sig.iter().any(|k| *k == NameKind::Cont) {
            continue; // continuation-carrying calls are served below
        }
        let domain = ctx.sorting.val_domain.max(1);
        let val_positions: Vec<usize> =
            sig.iter().enumerate().filter(|(_, k)| **k == NameKind::Val).map(|(i, _)| i).collect();
        let mut variants: Vec<Option<(usize, u32)>> = vec![None];
        for &i in &val_positions {
            for v in 0..domain.min(3) {
                variants.push(Some((i, v)));
            }
        }
        for variant in variants {
            let mut binders = Vec::new();
            for k in &sig {
                binders.push(fresh_name(*k, &mut avoid));
            }
            let u = fresh_name(NameKind::InCtl, &mut avoid);
            let z = fresh_name(NameKind::OutCtl, &mut avoid);
            ctx.sorting.declare(&u.id, vec![]);
            ctx.sorting.declare(&z.id, vec![]);
            // [c_i = v] tau.u<>  (or a plain u<> when no value is tested)
            let emit = Process::output(u.clone(), vec![]);
            let gated = match variant {
                None => emit,
                Some((i, v)) => Process::Match(
                    binders[i].clone(),
                    Name::val(v),
                    Box::new(Process::Tau(Box::new(emit))),
                ),
            };
            // new u. (u().z<> | gated) is the active continuation
            let convert = Process::input(u.clone(), vec![], Process::output(z.clone(), vec![]));
            let body = Process::res(u, Process::par(convert, gated));
            let reader = Process::Input(y.clone(), binders, Box::new(body));
            candidates.push(StaticContext { restrictions: Vec::new(), frame: reader });
        }
    }

    // probe frames: z<> | z().R with R an input at a free out-controlled name
    for y in free.iter().filter(|n| n.kind == NameKind::OutCtl) {
        let sig = match ctx.sorting.sig_of(y) {
            Some(s) => s.clone(),
            None => continue,
        };
        if sig.iter().any(|k| *k == NameKind::Cont) {
            continue;
        }
        let z = fresh_name(NameKind::OutCtl, &mut avoid);
        let w = fresh_name(NameKind::OutCtl, &mut avoid);
        ctx.sorting.declare(&z.id, vec![]);
        ctx.sorting.declare(&w.id, vec![]);
        let mut binders = Vec::new();
        for k in &sig {
            binders.push(fresh_name(*k, &mut avoid));
        }
        let r = Process::Input(y.clone(), binders, Box::new(Process::output(w.clone(), vec![])));
        let frame = Process::par(
            Process::output(z.clone(), vec![]),
            Process::input(z, vec![], r),
        );
        candidates.push(StaticContext { restrictions: Vec::new(), frame });
    }

    // well-bracketing: forwarder contexts and services
    if let Typing::Wb(stack) = typing {
        let n_obligations = stack
            .entries()
            .iter()
            .filter(|(_, t)| *t == StackTag::Out)
            .count();
        let mut xs = Vec::new();
        for _ in 0..n_obligations {
            let x = fresh_name(NameKind::OutCtl, &mut avoid);
            xs.push(x);
        }
        let fresh_q = fresh_name(NameKind::Cont, &mut avoid);
        if let Ok(e) = wb::build_forwarder_context(stack, &xs, &fresh_q, &ctx.sorting) {
            // register the signatures of the forwarding names
            for (x, (pn, _)) in xs.iter().zip(
                stack.entries().iter().filter(|(_, t)| *t == StackTag::Out),
            ) {
                let mut sig = ctx.sorting.sig_of(pn).cloned().unwrap_or_default();
                sig.push(NameKind::Cont);
                ctx.sorting.declare(&x.id, sig);
            }
            ctx.sorting.declare(&fresh_q.id, vec![]);
            candidates.push(e);
        }
        // replicated services answering continuation-carrying calls
        for x in free.iter().filter(|n| n.kind == NameKind::OutCtl) {
            let sig = match ctx.sorting.sig_of(x) {
                Some(s) => s.clone(),
                None => continue,
            };
            if sig.last() != Some(&NameKind::Cont) {
                continue;
            }
            let mut binders = Vec::new();
            for k in &sig {
                binders.push(fresh_name(*k, &mut avoid));
            }
            let ret = binders.last().expect("continuation binder").clone();
            let ret_sig = ctx.sorting.sig_of(&ret).cloned().unwrap_or_default();
            let mut answer_objs: Vec<Obj> = Vec::new();
            for k in &ret_sig {
                match k {
                    NameKind::Val => answer_objs.push(Obj::Name(Name::val(0))),
                    other => {
                        let n = fresh_name(*other, &mut avoid);
                        answer_objs.push(Obj::Name(n));
                    }
                }
            }
            let service = Process::ReplInput(
                x.clone(),
                binders,
                Box::new(Process::Output(ret, answer_objs)),
            );
            candidates.push(StaticContext { restrictions: Vec::new(), frame: service });
        }
    }

    // random parallel combinations of the base frames
    let base = candidates.clone();
    while candidates.len() < want * 3 && base.len() > 1 {
        let a = &base[rng.gen_range(0..base.len())];
        let b = &base[rng.gen_range(0..base.len())];
        if a.frame == Process::Nil || b.frame == Process::Nil {
            continue;
        }
        let mut restrictions = a.restrictions.clone();
        restrictions.extend(b.restrictions.iter().cloned());
        candidates.push(StaticContext {
            restrictions,
            frame: Process::par(a.frame.clone(), b.frame.clone()),
        });
        if candidates.len() > want * 8 {
            break;
        }
    }

    // keep candidates that typecheck against the pair
    let mut out = Vec::new();
    for e in candidates {
        if typed_ok(&ctx.sorting, typing, &e, p) && typed_ok(&ctx.sorting, typing, &e, q) {
            out.push(e);
        }
        if out.len() >= want {
            break;
        }
    }
    out
}

fn default_objects(
    ctx: &mut LtsCtx,
    subject: &Name,
    avoid: &mut BTreeSet<Arc<str>>,
) -> Option<Vec<Obj>> {
    let sig = ctx.sorting.sig_of(subject)?.clone();
    let mut out = Vec::new();
    for k in sig {
        match k {
            NameKind::Val => out.push(Obj::Name(Name::val(0))),
            NameKind::Cont => return None,
            other => {
                let n = fresh_name(other, avoid);
                ctx.sorting.declare(&n.id, vec![]);
                out.push(Obj::Name(n));
            }
        }
    }
    Some(out)
}

fn typed_ok(sorting: &Sorting, typing: &Typing, e: &StaticContext, p: &Process) -> bool {
    let plugged = e.plug(p);
    if crate::sorting::check_sorting(sorting, &plugged).is_err() {
        return false;
    }
    match typing {
        Typing::Plain => true,
        Typing::Seq(_) => seq::typecheck_seq(&plugged).is_ok(),
        Typing::SeqRefs(..) => {
            seq::typecheck_seq(&plugged).is_ok()
                && refs::accessible_refs(&plugged).is_ok()
                && refs::accessible_refs(&e.frame)
                    .map(|s| s.is_empty())
                    .unwrap_or(false)
        }
        Typing::Wb(stack) => {
            if !wb::is_discreet(&e.frame) || seq::typecheck_seq(&plugged).is_err() {
                return false;
            }
            // the composite must be wb-typed at some stack extending the
            // pair's: check the frame alone at the empty stack or let the
            // forwarder construction justify it
            wb::typecheck_wb(&e.frame, &Stack::empty()).is_ok()
                || forwarder_composite_ok(stack, e, p)
        }
    }
}

fn forwarder_composite_ok(stack: &Stack, e: &StaticContext, p: &Process) -> bool {
    // forwarder contexts restrict exactly the stack names
    let restricted: BTreeSet<&Name> = e.restrictions.iter().collect();
    if !stack.names().iter().all(|n| restricted.contains(n)) {
        return false;
    }
    let plugged = e.plug(p);
    // typed at q_n^o for the one fresh continuation left free
    let free_conts: Vec<Name> = plugged
        .free_names()
        .into_iter()
        .filter(|n| n.kind == NameKind::Cont)
        .collect();
    match free_conts.as_slice() {
        [] => wb::typecheck_wb(&plugged, &Stack::empty()).is_ok(),
        [q] => wb::typecheck_wb(&plugged, &Stack::single(q.clone())).is_ok(),
        _ => !wb::admissible_stacks(&plugged).is_empty(),
    }
}
