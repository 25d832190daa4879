//! The well-bracketing type system.
//!
//! Judgements `|-sigma P` carry a stack of tagged continuation names that
//! prescribes the order of pending returns. Stacks alternate input and
//! output tags and end with an output tag; a name occurring with both tags
//! has its input occurrence immediately after the output one.
//!
//! Typing is not syntax-directed in the stack: parallel splits the stack
//! into an interleaving, and restriction of a continuation name may insert
//! its two capabilities anywhere an input tag (or the top) allows. The
//! checker searches those choices with memoization.

use crate::lts::{Action, LtsCtx, Step};
use crate::names::{fresh_name, Name, NameKind};
use crate::process::{Obj, Process, StaticContext};
use crate::seq::{self, Eta, SeqConfig};
use crate::sorting::Sorting;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;
use thiserror::Error;

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum StackTag {
    Out,
    In,
}

impl StackTag {
    pub fn sigil(self) -> char {
        match self {
            StackTag::Out => 'o',
            StackTag::In => 'i',
        }
    }
}

/// A well-bracketing stack; entry 0 is the top.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Default)]
pub struct Stack {
    entries: Vec<(Name, StackTag)>,
}

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum StackError {
    #[error("tags do not alternate at position {0}")]
    Alternation(usize),
    #[error("stack must end with an output tag")]
    Terminal,
    #[error("{0} occurs twice with the same tag")]
    DuplicateEntry(Name),
    #[error("input occurrence of {0} does not immediately follow its output occurrence")]
    SplitCapabilities(Name),
    #[error("{0} is not a continuation name")]
    NotContinuation(Name),
}

impl Stack {
    pub fn empty() -> Self {
        Stack { entries: Vec::new() }
    }

    pub fn new(entries: Vec<(Name, StackTag)>) -> Result<Self, StackError> {
        check_stack(&entries)?;
        Ok(Stack { entries })
    }

    pub fn single(p: Name) -> Self {
        Stack { entries: vec![(p, StackTag::Out)] }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(Name, StackTag)] {
        &self.entries
    }

    pub fn top(&self) -> Option<&(Name, StackTag)> {
        self.entries.first()
    }

    pub fn contains(&self, n: &Name) -> bool {
        self.entries.iter().any(|(m, _)| m == n)
    }

    pub fn contains_tagged(&self, n: &Name, tag: StackTag) -> bool {
        self.entries.iter().any(|(m, t)| m == n && *t == tag)
    }

    pub fn names(&self) -> BTreeSet<Name> {
        self.entries.iter().map(|(n, _)| n.clone()).collect()
    }

    fn popped(&self) -> Stack {
        Stack { entries: self.entries[1..].to_vec() }
    }

    fn pushed(&self, n: Name, tag: StackTag) -> Result<Stack, StackError> {
        let mut entries = Vec::with_capacity(self.entries.len() + 1);
        entries.push((n, tag));
        entries.extend(self.entries.iter().cloned());
        Stack::new(entries)
    }
}

impl fmt::Display for Stack {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.entries.is_empty() {
            return write!(f, "empty");
        }
        let s = self
            .entries
            .iter()
            .map(|(n, t)| format!("{}^{}", n.id, t.sigil()))
            .collect::<Vec<_>>()
            .join(",");
        f.write_str(&s)
    }
}

/// Well-formedness of a tagged sequence as a stack.
pub fn check_stack(entries: &[(Name, StackTag)]) -> Result<(), StackError> {
    for (i, (n, _)) in entries.iter().enumerate() {
        if n.kind != NameKind::Cont {
            return Err(StackError::NotContinuation(n.clone()));
        }
        if i + 1 < entries.len() && entries[i].1 == entries[i + 1].1 {
            return Err(StackError::Alternation(i + 1));
        }
    }
    if let Some((_, tag)) = entries.last() {
        if *tag != StackTag::Out {
            return Err(StackError::Terminal);
        }
    }
    let mut seen: BTreeMap<(Name, StackTag), usize> = BTreeMap::new();
    for (i, (n, t)) in entries.iter().enumerate() {
        if seen.insert((n.clone(), *t), i).is_some() {
            return Err(StackError::DuplicateEntry(n.clone()));
        }
    }
    for ((n, t), &i) in &seen {
        if *t == StackTag::In {
            if let Some(&j) = seen.get(&(n.clone(), StackTag::Out)) {
                if i != j + 1 {
                    return Err(StackError::SplitCapabilities(n.clone()));
                }
            }
        }
    }
    Ok(())
}

pub fn stack_wellformed(entries: &[(Name, StackTag)]) -> bool {
    check_stack(entries).is_ok()
}

/// All stacks that interleave `s2` and `s3`: order-preserving merges that
/// are themselves well-formed. Empty when a name clashes.
pub fn interleave(s2: &Stack, s3: &Stack) -> BTreeSet<Stack> {
    let mut out = BTreeSet::new();
    let mut prefix = Vec::new();
    merge(s2.entries(), s3.entries(), &mut prefix, &mut out);
    out
}

fn merge(
    a: &[(Name, StackTag)],
    b: &[(Name, StackTag)],
    prefix: &mut Vec<(Name, StackTag)>,
    out: &mut BTreeSet<Stack>,
) {
    // alternation can be checked incrementally
    if prefix.len() >= 2 && prefix[prefix.len() - 2].1 == prefix[prefix.len() - 1].1 {
        return;
    }
    if a.is_empty() && b.is_empty() {
        if check_stack(prefix).is_ok() {
            out.insert(Stack { entries: prefix.clone() });
        }
        return;
    }
    if let Some((h, rest)) = a.split_first() {
        prefix.push(h.clone());
        merge(rest, b, prefix, out);
        prefix.pop();
    }
    if let Some((h, rest)) = b.split_first() {
        prefix.push(h.clone());
        merge(a, rest, prefix, out);
        prefix.pop();
    }
}

/// All ways to split `s` into two subsequences that are stacks whose
/// interleaving contains `s`.
pub fn deinterleavings(s: &Stack) -> Vec<(Stack, Stack)> {
    let n = s.len();
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for mask in 0..(1u32 << n) {
        let mut left = Vec::new();
        let mut right = Vec::new();
        for (i, e) in s.entries().iter().enumerate() {
            if mask & (1 << i) != 0 {
                left.push(e.clone());
            } else {
                right.push(e.clone());
            }
        }
        if check_stack(&left).is_ok() && check_stack(&right).is_ok() {
            let pair = (Stack { entries: left }, Stack { entries: right });
            if seen.insert(pair.clone()) {
                out.push(pair);
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// typing
// ---------------------------------------------------------------------------

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum WbError {
    #[error("no derivation of |-{stack} for {proc}; search stopped at {frontier}")]
    NoDerivation { stack: String, proc: String, frontier: String },
    #[error("output at the output-controlled name {0} must carry exactly one trailing continuation name")]
    OutputConvention(Name),
    #[error("input at the output-controlled name {0} must bind exactly one trailing continuation name")]
    InputConvention(Name),
    #[error("continuation names may only be sent at output-controlled names: {0}")]
    ContinuationLeak(Name),
}

/// A typed state for the well-bracketing discipline.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct WbConfig {
    pub stack: Stack,
    pub proc: Process,
}

impl fmt::Display for WbConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "|-[{}] {}", self.stack, self.proc)
    }
}

/// The arity-shape convention: under well-bracketing every communication at
/// an output-controlled name carries exactly one continuation name, in last
/// position, and no other position (at any subject) mentions continuations.
pub fn check_wb_convention(p: &Process) -> Result<(), WbError> {
    let conts = |objs: &[NameKind]| objs.iter().filter(|k| **k == NameKind::Cont).count();
    match p {
        Process::Nil => Ok(()),
        Process::Output(a, objs) => {
            let kinds: Vec<NameKind> = objs.iter().map(Obj::kind).collect();
            match a.kind {
                NameKind::OutCtl => {
                    if kinds.last() != Some(&NameKind::Cont) || conts(&kinds) != 1 {
                        return Err(WbError::OutputConvention(a.clone()));
                    }
                    Ok(())
                }
                _ => {
                    if conts(&kinds) > 0 {
                        return Err(WbError::ContinuationLeak(a.clone()));
                    }
                    Ok(())
                }
            }
        }
        Process::Input(a, binders, body) | Process::ReplInput(a, binders, body) => {
            let kinds: Vec<NameKind> = binders.iter().map(|b| b.kind).collect();
            match a.kind {
                NameKind::OutCtl => {
                    if kinds.last() != Some(&NameKind::Cont) || conts(&kinds) != 1 {
                        return Err(WbError::InputConvention(a.clone()));
                    }
                }
                _ => {
                    if conts(&kinds) > 0 {
                        return Err(WbError::ContinuationLeak(a.clone()));
                    }
                }
            }
            check_wb_convention(body)
        }
        Process::Tau(b) | Process::Res(_, b) => check_wb_convention(b),
        Process::Match(_, _, g) => check_wb_convention(g),
        Process::Sum(a, b) | Process::Par(a, b) => {
            check_wb_convention(a)?;
            check_wb_convention(b)
        }
    }
}

/// Decide `|-s p` by backtracking over parallel splits and restriction
/// insertion points.
pub fn typecheck_wb(p: &Process, s: &Stack) -> Result<(), WbError> {
    let mut memo = BTreeMap::new();
    if derive(p, s, &mut memo) {
        Ok(())
    } else {
        let frontier = frontier_hint(p, s, &mut memo);
        Err(WbError::NoDerivation {
            stack: s.to_string(),
            proc: p.to_string(),
            frontier,
        })
    }
}

type Memo = BTreeMap<(Process, Stack), bool>;

fn derive(p: &Process, s: &Stack, memo: &mut Memo) -> bool {
    let key = (p.clone(), s.clone());
    if let Some(&r) = memo.get(&key) {
        return r;
    }
    memo.insert(key.clone(), false); // cycles cannot occur; placeholder
    let result = derive_inner(p, s, memo);
    memo.insert(key, result);
    result
}

fn derive_inner(p: &Process, s: &Stack, memo: &mut Memo) -> bool {
    match p {
        // wb-Nil
        Process::Nil => s.is_empty(),
        Process::Output(a, objs) => {
            let kinds: Vec<NameKind> = objs.iter().map(Obj::kind).collect();
            match a.kind {
                // wb-Out1: |-p^o p<a~>, no continuation objects
                NameKind::Cont => {
                    kinds.iter().all(|k| *k != NameKind::Cont)
                        && s.entries() == [(a.clone(), StackTag::Out)]
                }
                // wb-Out2: |-p^o x<a~,p>
                NameKind::OutCtl => match objs.last().and_then(Obj::as_name) {
                    Some(pn) if pn.kind == NameKind::Cont => {
                        kinds[..kinds.len() - 1].iter().all(|k| *k != NameKind::Cont)
                            && s.entries() == [(pn.clone(), StackTag::Out)]
                    }
                    _ => false,
                },
                // wb-Out3: |-empty u<a~>
                NameKind::InCtl | NameKind::Ref => {
                    kinds.iter().all(|k| *k != NameKind::Cont) && s.is_empty()
                }
                NameKind::Val => false,
            }
        }
        Process::Input(a, binders, body) => {
            match a.kind {
                // wb-Inp1: |-q^i,p^o q(a~).P from |-p^o P, p != q
                NameKind::Cont => {
                    binders.iter().all(|b| b.kind != NameKind::Cont)
                        && s.len() == 2
                        && s.entries()[0] == (a.clone(), StackTag::In)
                        && s.entries()[1].1 == StackTag::Out
                        && s.entries()[1].0 != *a
                        && derive(body, &Stack::single(s.entries()[1].0.clone()), memo)
                }
                // wb-Inp2: |-empty x(a~,p).P from |-p^o P
                NameKind::OutCtl => match binders.last() {
                    Some(pn) if pn.kind == NameKind::Cont => {
                        binders[..binders.len() - 1].iter().all(|b| b.kind != NameKind::Cont)
                            && s.is_empty()
                            && derive(body, &Stack::single(pn.clone()), memo)
                    }
                    _ => false,
                },
                // wb-Inp3: |-p^o u(a~).P from |-p^o P
                NameKind::InCtl | NameKind::Ref => {
                    binders.iter().all(|b| b.kind != NameKind::Cont)
                        && s.len() == 1
                        && s.entries()[0].1 == StackTag::Out
                        && derive(body, s, memo)
                }
                NameKind::Val => false,
            }
        }
        Process::ReplInput(a, binders, body) => {
            // wb-Inp2 only: replication is a service at an output-controlled name
            a.kind == NameKind::OutCtl
                && match binders.last() {
                    Some(pn) if pn.kind == NameKind::Cont => {
                        binders[..binders.len() - 1].iter().all(|b| b.kind != NameKind::Cont)
                            && s.is_empty()
                            && derive(body, &Stack::single(pn.clone()), memo)
                    }
                    _ => false,
                }
        }
        // wb-Tau: same stack, at most one entry (no guarded input tags)
        Process::Tau(body) => s.len() <= 1 && derive(body, s, memo),
        // wb-Mat: empty stack, so no continuation obligations underneath
        Process::Match(_, _, g) => s.is_empty() && derive(g, s, memo),
        // wb-Sum: equal premise stacks, at most one entry
        Process::Sum(g1, g2) => s.len() <= 1 && derive(g1, s, memo) && derive(g2, s, memo),
        // wb-Par: the stack is an interleaving of the premise stacks
        Process::Par(l, r) => {
            deinterleavings(s).into_iter().any(|(sl, sr)| {
                (derive(l, &sl, memo) && derive(r, &sr, memo))
                    || (derive(l, &sr, memo) && derive(r, &sl, memo))
            })
        }
        Process::Res(a, body) => {
            if a.kind != NameKind::Cont {
                // wb-Res3
                return derive(body, s, memo);
            }
            // rename the binder apart from the stack
            let (a, body): (Name, Process) = if s.contains(a) {
                let mut avoid: BTreeSet<Arc<str>> =
                    s.names().iter().map(|n| n.id.clone()).collect();
                avoid.extend(body.free_names().into_iter().map(|n| n.id));
                let na = fresh_name(NameKind::Cont, &mut avoid);
                let nb = body
                    .substitute(std::slice::from_ref(&na), std::slice::from_ref(a))
                    .expect("binder renaming is kind-safe");
                (na, nb)
            } else {
                (a.clone(), (**body).clone())
            };
            // wb-Res2: the name does not appear in the premise stack
            if derive(&body, s, memo) {
                return true;
            }
            // wb-Res1: insert p^o,p^i at any point where the prefix is empty
            // or ends with an input tag
            for split in 0..=s.len() {
                let (xi, rest) = s.entries().split_at(split);
                let prefix_ok = xi.is_empty() || xi.last().map(|e| e.1) == Some(StackTag::In);
                let rest_ok = rest.is_empty() || rest[0].1 == StackTag::Out;
                if !prefix_ok || !rest_ok {
                    continue;
                }
                let mut entries = xi.to_vec();
                entries.push((a.clone(), StackTag::Out));
                entries.push((a.clone(), StackTag::In));
                entries.extend(rest.iter().cloned());
                if check_stack(&entries).is_ok()
                    && derive(&body, &Stack { entries }, memo)
                {
                    return true;
                }
            }
            false
        }
    }
}

/// Best-effort hint for failure reports: the first subterm that types under
/// no candidate stack.
fn frontier_hint(p: &Process, s: &Stack, memo: &mut Memo) -> String {
    match p {
        Process::Par(l, r) => {
            for side in [l, r] {
                let any = enumerate_stacks(side)
                    .into_iter()
                    .any(|cand| derive(side, &cand, memo));
                if !any {
                    return format!("component {}", side);
                }
            }
            format!("no interleaving of {} covers both components", s)
        }
        _ => p.to_string(),
    }
}

/// Candidate stacks for `p`: arrangements of its free continuation names,
/// each with one or both capabilities, filtered by the typing itself.
pub fn enumerate_stacks(p: &Process) -> Vec<Stack> {
    let conts: Vec<Name> = p
        .free_names()
        .into_iter()
        .filter(|n| n.kind == NameKind::Cont)
        .collect();
    let mut out = Vec::new();
    let mut entries = Vec::new();
    build_stacks(&conts, &mut entries, &mut out);
    out
}

fn build_stacks(avail: &[Name], prefix: &mut Vec<(Name, StackTag)>, out: &mut Vec<Stack>) {
    if check_stack(prefix).is_ok() {
        out.push(Stack { entries: prefix.clone() });
    }
    for n in avail {
        for tag in [StackTag::Out, StackTag::In] {
            if prefix.iter().any(|(m, t)| m == n && *t == tag) {
                continue;
            }
            // both-capability names must appear as p^o,p^i adjacently
            if tag == StackTag::In
                && prefix.iter().any(|(m, _)| m == n)
                && prefix.last().map(|(m, t)| (m == n, *t)) != Some((true, StackTag::Out))
            {
                continue;
            }
            prefix.push((n.clone(), tag));
            // alternation pruning
            let len = prefix.len();
            if len < 2 || prefix[len - 2].1 != prefix[len - 1].1 {
                build_stacks(avail, prefix, out);
            }
            prefix.pop();
        }
    }
}

/// All stacks under which `p` typechecks.
pub fn admissible_stacks(p: &Process) -> Vec<Stack> {
    enumerate_stacks(p)
        .into_iter()
        .filter(|s| typecheck_wb(p, s).is_ok())
        .collect()
}

// ---------------------------------------------------------------------------
// typed transitions
// ---------------------------------------------------------------------------

/// Erasure to the sequentiality system: active iff the stack starts with an
/// output tag.
pub fn erase(s: &Stack) -> Eta {
    match s.top() {
        Some((_, StackTag::Out)) => 1,
        _ => 0,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WbDisallowed {
    Seq(seq::Disallowed),
    /// A continuation name of the action is in the stack but not on top.
    NotOnTop(Name),
    /// Both capabilities are held by the process, so the environment may
    /// not use the name as a subject.
    DoubleCapabilitySubject(Name),
    /// The stack update required by the action is impossible.
    NoStackClause(String),
}

impl fmt::Display for WbDisallowed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WbDisallowed::Seq(d) => write!(f, "{}", d),
            WbDisallowed::NotOnTop(p) => write!(f, "continuation {} is not on top of the stack", p),
            WbDisallowed::DoubleCapabilitySubject(p) => {
                write!(f, "both capabilities of {} are held by the process", p)
            }
            WbDisallowed::NoStackClause(msg) => write!(f, "{}", msg),
        }
    }
}

/// Type-allowed transitions with stacks: sequentially allowed under the
/// erased stack, and the first continuation name observed must be on top.
pub fn wb_allowed(c: &WbConfig, action: &Action) -> Result<(), WbDisallowed> {
    let seq_config = SeqConfig::plain(erase(&c.stack), c.proc.clone());
    seq::type_allowed(&seq_config, action).map_err(WbDisallowed::Seq)?;
    for p in action.free_names().iter().filter(|n| n.kind == NameKind::Cont) {
        if c.stack.contains(p) {
            match c.stack.top() {
                Some((top, _)) if top == p => {
                    let both = c.stack.contains_tagged(p, StackTag::Out)
                        && c.stack.contains_tagged(p, StackTag::In);
                    if both && action.subject() == Some(p) {
                        return Err(WbDisallowed::DoubleCapabilitySubject(p.clone()));
                    }
                }
                _ => return Err(WbDisallowed::NotOnTop(p.clone())),
            }
        }
    }
    Ok(())
}

/// The stack after a type-allowed action:
///
/// 1. answers at a continuation (output or input subject) pop it;
/// 2. extruding a fresh continuation pushes its input obligation;
/// 3. emitting a free continuation pops its output obligation;
/// 4. receiving a continuation pushes an output obligation;
/// 5. a tau at an adjacent `p^o,p^i` pair that drops `p` pops both.
pub fn evolve_stack(c: &WbConfig, action: &Action, target: &Process) -> Result<Stack, WbDisallowed> {
    let s = &c.stack;
    match action {
        Action::Out { subj, .. } if subj.kind == NameKind::Cont => {
            // clause 1
            match s.top() {
                Some((p, StackTag::Out)) if p == subj => Ok(s.popped()),
                _ => Err(WbDisallowed::NoStackClause(format!(
                    "answer at {} needs {}^o on top of {}",
                    subj, subj, s
                ))),
            }
        }
        Action::In { subj, .. } if subj.kind == NameKind::Cont => {
            // clause 2
            match s.top() {
                Some((p, StackTag::In)) if p == subj => Ok(s.popped()),
                _ => Err(WbDisallowed::NoStackClause(format!(
                    "input at {} needs {}^i on top of {}",
                    subj, subj, s
                ))),
            }
        }
        Action::Out { objs, extruded, .. } => {
            match objs.last() {
                Some(p) if p.kind == NameKind::Cont => {
                    if extruded.contains(p) {
                        // clause 3: question
                        s.pushed(p.clone(), StackTag::In).map_err(|e| {
                            WbDisallowed::NoStackClause(format!(
                                "cannot push {}^i onto {}: {}",
                                p, s, e
                            ))
                        })
                    } else {
                        // clause 4: delegation of a free continuation
                        match s.top() {
                            Some((q, StackTag::Out)) if q == p => Ok(s.popped()),
                            _ => Err(WbDisallowed::NoStackClause(format!(
                                "emitting free {} needs {}^o on top of {}",
                                p, p, s
                            ))),
                        }
                    }
                }
                _ => Ok(s.clone()),
            }
        }
        Action::In { objs, .. } => {
            match objs.last() {
                Some(p) if p.kind == NameKind::Cont => {
                    // clause 5: received continuations must be answered
                    s.pushed(p.clone(), StackTag::Out).map_err(|e| {
                        WbDisallowed::NoStackClause(format!(
                            "cannot push {}^o onto {}: {}",
                            p, s, e
                        ))
                    })
                }
                _ => Ok(s.clone()),
            }
        }
        Action::Tau => {
            // clause 6
            let e = s.entries();
            if e.len() >= 2
                && e[0].0 == e[1].0
                && e[0].1 == StackTag::Out
                && e[1].1 == StackTag::In
                && !target.free_names().contains(&e[0].0)
            {
                Ok(Stack { entries: e[2..].to_vec() })
            } else {
                Ok(s.clone())
            }
        }
    }
}

/// Strong wb-allowed steps with their evolved configurations.
pub fn allowed_steps(ctx: &LtsCtx, c: &WbConfig, env: &BTreeSet<Name>) -> Vec<(Step, WbConfig)> {
    crate::lts::step(ctx, &c.proc, env)
        .into_iter()
        .filter(|s| wb_allowed(c, &s.action).is_ok())
        .filter_map(|s| {
            let stack = evolve_stack(c, &s.action, &s.target).ok()?;
            let next = WbConfig { stack, proc: s.target.clone() };
            Some((s, next))
        })
        .collect()
}

// ---------------------------------------------------------------------------
// clean and discreet
// ---------------------------------------------------------------------------

/// Clean stacks hold no name with both capabilities.
pub fn is_clean(s: &Stack) -> bool {
    s.entries().iter().all(|(n, t)| {
        *t != StackTag::In || !s.contains_tagged(n, StackTag::Out)
    })
}

/// Discreet processes only ever emit private continuation names: any free
/// continuation (or one received at an output-controlled input) may not
/// appear in the object of an output.
pub fn is_discreet(p: &Process) -> bool {
    discreet_check(p, &mut Vec::new())
}

fn discreet_check(p: &Process, nu_bound: &mut Vec<Name>) -> bool {
    match p {
        Process::Nil => true,
        Process::Output(_, objs) => objs.iter().all(|o| match o {
            Obj::Name(n) => n.kind != NameKind::Cont || nu_bound.contains(n),
            Obj::Add(..) => true,
        }),
        Process::Input(_, _, body) | Process::ReplInput(_, _, body) => {
            // received continuations are global: not nu-bound
            discreet_check(body, nu_bound)
        }
        Process::Tau(b) => discreet_check(b, nu_bound),
        Process::Match(_, _, g) => discreet_check(g, nu_bound),
        Process::Sum(a, b) | Process::Par(a, b) => {
            discreet_check(a, nu_bound) && discreet_check(b, nu_bound)
        }
        Process::Res(a, body) => {
            let pushed = a.kind == NameKind::Cont;
            if pushed {
                nu_bound.push(a.clone());
            }
            let r = discreet_check(body, nu_bound);
            if pushed {
                nu_bound.pop();
            }
            r
        }
    }
}

/// Replace every output of a global continuation `p` by the output of a
/// fresh private one that forwards to `p`:
/// `x<a~,p>  ->  new q. (x<a~,q> | q(b~).p<b~>)`.
pub fn make_discreet(p: &Process, sorting: &Sorting) -> Process {
    let mut avoid: BTreeSet<Arc<str>> = p.free_names().into_iter().map(|n| n.id).collect();
    rewrite_discreet(p, &mut Vec::new(), &mut avoid, sorting)
}

fn rewrite_discreet(
    p: &Process,
    nu_bound: &mut Vec<Name>,
    avoid: &mut BTreeSet<Arc<str>>,
    sorting: &Sorting,
) -> Process {
    match p {
        Process::Nil => Process::Nil,
        Process::Output(subj, objs) => {
            let global_cont = objs.iter().enumerate().find_map(|(i, o)| match o {
                Obj::Name(n) if n.kind == NameKind::Cont && !nu_bound.contains(n) => {
                    Some((i, n.clone()))
                }
                _ => None,
            });
            match global_cont {
                None => p.clone(),
                Some((i, global)) => {
                    let q = fresh_name(NameKind::Cont, avoid);
                    let arity: Vec<NameKind> =
                        sorting.sig_of(&global).cloned().unwrap_or_default();
                    let mut binders = Vec::new();
                    for k in &arity {
                        binders.push(fresh_name(*k, avoid));
                    }
                    let mut objs = objs.clone();
                    objs[i] = Obj::Name(q.clone());
                    let forward = Process::Input(
                        q.clone(),
                        binders.clone(),
                        Box::new(Process::output(global, binders)),
                    );
                    Process::res(
                        q,
                        Process::par(Process::Output(subj.clone(), objs), forward),
                    )
                }
            }
        }
        Process::Input(a, binders, body) | Process::ReplInput(a, binders, body) => {
            let rewritten = rewrite_discreet(body, nu_bound, avoid, sorting);
            match p {
                Process::Input(..) => Process::Input(a.clone(), binders.clone(), Box::new(rewritten)),
                _ => Process::ReplInput(a.clone(), binders.clone(), Box::new(rewritten)),
            }
        }
        Process::Tau(b) => Process::Tau(Box::new(rewrite_discreet(b, nu_bound, avoid, sorting))),
        Process::Match(a, b, g) => Process::Match(
            a.clone(),
            b.clone(),
            Box::new(rewrite_discreet(g, nu_bound, avoid, sorting)),
        ),
        Process::Sum(a, b) => Process::Sum(
            Box::new(rewrite_discreet(a, nu_bound, avoid, sorting)),
            Box::new(rewrite_discreet(b, nu_bound, avoid, sorting)),
        ),
        Process::Par(a, b) => Process::Par(
            Box::new(rewrite_discreet(a, nu_bound, avoid, sorting)),
            Box::new(rewrite_discreet(b, nu_bound, avoid, sorting)),
        ),
        Process::Res(a, body) => {
            let pushed = a.kind == NameKind::Cont;
            if pushed {
                nu_bound.push(a.clone());
            }
            let r = rewrite_discreet(body, nu_bound, avoid, sorting);
            if pushed {
                nu_bound.pop();
            }
            Process::res(a.clone(), r)
        }
    }
}

/// A transition is discreet when the continuation names it carries in
/// object position are fresh for the stack (hence for the process).
pub fn is_discreet_transition(c: &WbConfig, action: &Action) -> bool {
    let proc_free = c.proc.free_names();
    action
        .object_conts()
        .iter()
        .all(|p| !c.stack.contains(p) && !proc_free.contains(*p))
}

// ---------------------------------------------------------------------------
// forwarder contexts
// ---------------------------------------------------------------------------

#[derive(Error, Debug, Clone, PartialEq, Eq)]
#[error("stack {0} does not decompose as xi, p1^o, q1^i, ..., pn^o")]
pub struct DecompositionError(pub String);

/// Build the forwarder context for a stack `xi, p1^o, q1^i, ..., pn^o`
/// (`xi` empty or a single input tag): restrict the stack's names and run
/// `p_i(y~).x_i<y~,q_i>` for each output obligation, with `fresh_q` as the
/// final continuation. Plugging a process typed at the stack yields a
/// process typed at `xi, fresh_q^o`.
pub fn build_forwarder_context(
    s: &Stack,
    fresh_xs: &[Name],
    fresh_q: &Name,
    sorting: &Sorting,
) -> Result<StaticContext, DecompositionError> {
    let entries = s.entries();
    let mut idx = 0;
    if let Some((_, StackTag::In)) = entries.first() {
        idx = 1; // xi
    }
    let rest = &entries[idx..];
    // rest must alternate o,i,o,i,...,o
    let mut ps: Vec<Name> = Vec::new();
    let mut qs: Vec<Name> = Vec::new();
    for (i, (n, t)) in rest.iter().enumerate() {
        let want = if i % 2 == 0 { StackTag::Out } else { StackTag::In };
        if *t != want {
            return Err(DecompositionError(s.to_string()));
        }
        if i % 2 == 0 {
            ps.push(n.clone());
        } else {
            qs.push(n.clone());
        }
    }
    if !rest.is_empty() && rest.last().map(|e| e.1) != Some(StackTag::Out) {
        return Err(DecompositionError(s.to_string()));
    }
    let n = ps.len();
    if n == 0 {
        return Ok(StaticContext::hole());
    }
    if fresh_xs.len() < n {
        return Err(DecompositionError(format!(
            "need {} forwarding names, got {}",
            n,
            fresh_xs.len()
        )));
    }
    qs.push(fresh_q.clone());
    let mut avoid: BTreeSet<Arc<str>> = s.names().iter().map(|x| x.id.clone()).collect();
    avoid.extend(fresh_xs.iter().map(|x| x.id.clone()));
    avoid.insert(fresh_q.id.clone());
    let mut frame = Process::Nil;
    for i in (0..n).rev() {
        let arity: Vec<NameKind> = sorting.sig_of(&ps[i]).cloned().unwrap_or_default();
        let mut binders = Vec::new();
        for k in &arity {
            binders.push(fresh_name(*k, &mut avoid));
        }
        let mut objs: Vec<Obj> = binders.iter().cloned().map(Obj::Name).collect();
        objs.push(Obj::Name(qs[i].clone()));
        let fwd = Process::Input(
            ps[i].clone(),
            binders,
            Box::new(Process::Output(fresh_xs[i].clone(), objs)),
        );
        frame = if matches!(frame, Process::Nil) { fwd } else { Process::par(fwd, frame) };
    }
    // restrict the stack's own names: all p_i and the q_i that came from it
    let mut restrictions = ps;
    restrictions.extend(qs.into_iter().filter(|q| q != fresh_q));
    Ok(StaticContext { restrictions, frame })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cont(id: &str) -> Name {
        Name::new(id, NameKind::Cont)
    }

    fn st(entries: &[(&str, StackTag)]) -> Stack {
        Stack::new(entries.iter().map(|(n, t)| (cont(n), *t)).collect()).unwrap()
    }

    #[test]
    fn stack_wellformedness() {
        assert!(Stack::new(vec![]).is_ok());
        assert!(Stack::new(vec![(cont("p"), StackTag::Out)]).is_ok());
        // p'^i, p^o, p^i, q^o : both-capability input right after output
        assert!(Stack::new(vec![
            (cont("p'"), StackTag::In),
            (cont("p"), StackTag::Out),
            (cont("p"), StackTag::In),
            (cont("q"), StackTag::Out),
        ])
        .is_ok());
        // no alternation
        assert!(matches!(
            Stack::new(vec![(cont("p"), StackTag::Out), (cont("q"), StackTag::Out)]),
            Err(StackError::Alternation(_))
        ));
        // must end with an output tag
        assert!(matches!(
            Stack::new(vec![(cont("p"), StackTag::In)]),
            Err(StackError::Terminal)
        ));
        // split capabilities
        assert!(matches!(
            Stack::new(vec![
                (cont("p"), StackTag::In),
                (cont("q"), StackTag::Out),
                (cont("q"), StackTag::In),
                (cont("p"), StackTag::Out),
            ]),
            Err(StackError::SplitCapabilities(_))
        ));
    }

    #[test]
    fn interleave_base_and_order() {
        let empty = Stack::empty();
        assert_eq!(interleave(&empty, &empty), [Stack::empty()].into_iter().collect());
        // p^o against q^i,r^o
        let a = st(&[("p", StackTag::Out)]);
        let b = st(&[("q", StackTag::In), ("r", StackTag::Out)]);
        let got = interleave(&a, &b);
        // merges preserving order and well-formedness
        assert!(got.contains(&st(&[
            ("p", StackTag::Out),
            ("q", StackTag::In),
            ("r", StackTag::Out)
        ])));
        for s in &got {
            assert!(check_stack(s.entries()).is_ok());
        }
    }

    #[test]
    fn interleave_name_clash_empty() {
        let a = st(&[("p", StackTag::Out)]);
        assert!(interleave(&a, &a).is_empty());
    }

    #[test]
    fn erase_cases() {
        assert_eq!(erase(&Stack::empty()), 0);
        assert_eq!(erase(&st(&[("p", StackTag::Out)])), 1);
        assert_eq!(erase(&st(&[("q", StackTag::In), ("p", StackTag::Out)])), 0);
    }

    #[test]
    fn clean_stacks() {
        assert!(is_clean(&Stack::empty()));
        assert!(is_clean(&st(&[("q", StackTag::In), ("p", StackTag::Out)])));
        assert!(!is_clean(&st(&[
            ("p", StackTag::Out),
            ("p", StackTag::In),
            ("q", StackTag::Out)
        ])));
    }
}
