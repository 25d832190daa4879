//! Deciders and certificate checkers for the three bisimilarities.
//!
//! The deciders run an on-the-fly greatest-fixpoint game over pairs rather
//! than partition refinement: the asynchronous input clause and the
//! forwarder clause compose new material onto the answering side, so the
//! state space is not known up front. Replication budgets bound the game;
//! verdicts that touched a truncated region are downgraded to `bounded`.

use crate::canon::canonical_form;
use crate::lts::{self, Action, LtsCtx, Step};
use crate::names::{fresh_name, Name, NameKind};
use crate::process::{Obj, Process};
use crate::refs::{self, RefEnv};
use crate::seq::{self, Eta, SeqConfig};
use crate::wb::{self, Stack, WbConfig};
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::sync::Arc;

// ---------------------------------------------------------------------------
// typings, certificates, verdicts
// ---------------------------------------------------------------------------

/// The typing component of a relation triple.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Typing {
    /// Untyped (ordinary bisimilarity).
    Plain,
    Seq(Eta),
    SeqRefs(BTreeSet<Name>, Eta),
    Wb(Stack),
}

impl fmt::Display for Typing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Typing::Plain => write!(f, "-"),
            Typing::Seq(e) => write!(f, "eta={}", e),
            Typing::SeqRefs(s, e) => {
                let names =
                    s.iter().map(|n| n.id.to_string()).collect::<Vec<_>>().join(",");
                write!(f, "refs={{{}}};eta={}", names, e)
            }
            Typing::Wb(s) => write!(f, "stack={}", s),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CertMode {
    Ordinary,
    Seq,
    SeqRefs,
    Wb,
    WbUpto,
}

impl fmt::Display for CertMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            CertMode::Ordinary => "ordinary",
            CertMode::Seq => "seq",
            CertMode::SeqRefs => "seq-refs",
            CertMode::Wb => "wb",
            CertMode::WbUpto => "wb-upto",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug)]
pub struct CertTriple {
    pub typing: Typing,
    pub lhs: Process,
    pub rhs: Process,
    /// Replication depth at which this triple sits (0 for roots); the
    /// checker suppresses replication-firing challenges from the deepest
    /// layer and reports a bounded verdict instead.
    pub depth: usize,
}

#[derive(Clone, Debug)]
pub struct RelationCert {
    pub name: String,
    pub mode: CertMode,
    pub include_identity: bool,
    pub triples: Vec<CertTriple>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Yes,
    No,
    /// Verdict obtained on a truncated state space.
    BoundedYes,
    BoundedNo,
}

impl Outcome {
    pub fn is_yes(self) -> bool {
        matches!(self, Outcome::Yes | Outcome::BoundedYes)
    }

    pub fn is_bounded(self) -> bool {
        matches!(self, Outcome::BoundedYes | Outcome::BoundedNo)
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Outcome::Yes => write!(f, "yes"),
            Outcome::No => write!(f, "no"),
            Outcome::BoundedYes => write!(f, "bounded(yes)"),
            Outcome::BoundedNo => write!(f, "bounded(no)"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Side::Left => write!(f, "lhs"),
            Side::Right => write!(f, "rhs"),
        }
    }
}

/// One step of a distinguishing strategy: the stated side plays the action;
/// every answer stays distinguished, and the recorded successor documents
/// one line of play.
#[derive(Clone, Debug)]
pub struct WitnessStep {
    pub side: Side,
    pub action: Action,
    pub lhs: Process,
    pub rhs: Process,
}

#[derive(Clone, Debug, Default)]
pub struct Stats {
    pub pairs: usize,
    pub challenges: usize,
    pub truncated: bool,
}

#[derive(Clone, Debug)]
pub struct Verdict {
    pub outcome: Outcome,
    pub witness: Vec<WitnessStep>,
    pub stats: Stats,
    /// Size of the closing relation when the outcome is a yes.
    pub relation_size: usize,
}

// ---------------------------------------------------------------------------
// the game engine
// ---------------------------------------------------------------------------

type PairKey = (Typing, Process, Process, usize, usize);

struct Challenge {
    side: Side,
    action: Action,
    succs: Vec<PairKey>,
    /// The answer set may be incomplete (budget truncation), so a failure
    /// of this challenge is not definitive.
    answers_truncated: bool,
}

struct PairNode {
    challenges: Vec<Challenge>,
}

/// Decision engine; owns caches and a sorting extended with the signatures
/// of fresh names met along the way.
pub struct Decider {
    pub ctx: LtsCtx,
    wb_cache: BTreeMap<(Process, Stack), bool>,
    seq_cache: BTreeMap<Process, Option<Eta>>,
    match_cache: BTreeMap<(Process, Action, usize), (Vec<(Process, usize)>, bool)>,
}

impl Decider {
    pub fn new(ctx: LtsCtx) -> Self {
        Decider {
            ctx,
            wb_cache: BTreeMap::new(),
            seq_cache: BTreeMap::new(),
            match_cache: BTreeMap::new(),
        }
    }

    fn weak_match_cached(
        &mut self,
        q: &Process,
        action: &Action,
        budget: usize,
    ) -> (Vec<(Process, usize)>, bool) {
        let key = (canonical_form(q), action.clone(), budget);
        if let Some(hit) = self.match_cache.get(&key) {
            return hit.clone();
        }
        let r = lts::weak_match(&self.ctx, q, action, budget);
        self.match_cache.insert(key, r.clone());
        r
    }

    fn seq_eta(&mut self, p: &Process) -> Option<Eta> {
        if let Some(e) = self.seq_cache.get(p) {
            return *e;
        }
        let r = seq::typecheck_seq(p).ok();
        self.seq_cache.insert(p.clone(), r);
        r
    }

    fn wb_ok(&mut self, p: &Process, s: &Stack) -> bool {
        let key = (p.clone(), s.clone());
        if let Some(&r) = self.wb_cache.get(&key) {
            return r;
        }
        let r = wb::typecheck_wb(p, s).is_ok();
        self.wb_cache.insert(key, r);
        r
    }

    /// Typing of a successor triple is admissible for both processes.
    fn typing_holds(&mut self, t: &Typing, p: &Process) -> bool {
        match t {
            Typing::Plain => true,
            Typing::Seq(e) => self.seq_eta(p) == Some(*e),
            Typing::SeqRefs(s, e) => {
                self.seq_eta(p) == Some(*e)
                    && refs::accessible_refs(p).map(|a| a == *s).unwrap_or(false)
            }
            Typing::Wb(s) => self.wb_ok(p, s),
        }
    }

    fn env_of(&self, t: &Typing, p: &Process, q: &Process) -> BTreeSet<Name> {
        let mut env: BTreeSet<Name> = p.free_names();
        env.extend(q.free_names());
        if let Typing::Wb(s) = t {
            env.extend(s.names());
        }
        env
    }

    /// Mode-allowed strong challenges from one process under a typing.
    fn challenges_of(
        &mut self,
        t: &Typing,
        p: &Process,
        env: &BTreeSet<Name>,
    ) -> (Vec<(Step, Typing)>, bool) {
        let truncated = false;
        let steps = lts::step(&self.ctx, p, env);
        let mut out = Vec::new();
        for s in steps {
            for (n, sig) in &s.fresh_sigs {
                if self.ctx.sorting.sig_of(n).is_none() {
                    self.ctx.sorting.declare(&n.id, sig.clone());
                }
            }
            match t {
                Typing::Plain => out.push((s, Typing::Plain)),
                Typing::Seq(e) => {
                    let c = SeqConfig::plain(*e, p.clone());
                    if seq::type_allowed(&c, &s.action).is_ok() {
                        let next = seq::evolve_eta(&c, &s.action, &s.target);
                        out.push((s, Typing::Seq(next.eta)));
                    }
                }
                Typing::SeqRefs(set, e) => {
                    let c = SeqConfig::with_refs(
                        *e,
                        p.clone(),
                        RefEnv { accessible: set.clone() },
                    );
                    if seq::type_allowed(&c, &s.action).is_ok() {
                        // a target with a duplicated cell is ill-typed and
                        // yields no challenge
                        if let Ok(acc) = refs::accessible_refs(&s.target) {
                            let next = seq::evolve_eta(&c, &s.action, &s.target);
                            out.push((s, Typing::SeqRefs(acc, next.eta)));
                        }
                    }
                }
                Typing::Wb(stack) => {
                    let c = WbConfig { stack: stack.clone(), proc: p.clone() };
                    if wb::wb_allowed(&c, &s.action).is_ok()
                        && wb::is_discreet_transition(&c, &s.action)
                    {
                        if let Ok(next) = wb::evolve_stack(&c, &s.action, &s.target) {
                            out.push((s, Typing::Wb(next)));
                        }
                    }
                }
            }
        }
        (out, truncated)
    }

    /// Weak answers of `q` to a challenge `action`, including the
    /// asynchronous composition clauses. Returns canonical targets with
    /// their replication cost.
    fn answers_of(
        &mut self,
        t_next: &Typing,
        action: &Action,
        q: &Process,
        env: &BTreeSet<Name>,
        budget: usize,
    ) -> (Vec<(Process, usize)>, bool) {
        let mut truncated = false;
        // clause 1: q ==mu^=> q'
        let (matched, tr) = self.weak_match_cached(q, action, budget);
        truncated |= tr;
        let mut out: BTreeMap<Process, usize> = matched.into_iter().collect();
        // asynchronous input clauses
        if let Action::In { subj, objs } = action {
            let composed = match t_next {
                Typing::Wb(_) if subj.kind == NameKind::OutCtl => {
                    // forwarder clause: q | new q'.(x<a~,q'> | q'(b~).p<b~>)
                    let p_cont = objs.last().cloned();
                    match p_cont {
                        Some(p_cont) if p_cont.kind == NameKind::Cont => {
                            let mut avoid: BTreeSet<Arc<str>> =
                                env.iter().map(|n| n.id.clone()).collect();
                            avoid.extend(q.free_names().into_iter().map(|n| n.id));
                            let fresh_q = fresh_name(NameKind::Cont, &mut avoid);
                            let arity: Vec<NameKind> = self
                                .ctx
                                .sorting
                                .sig_of(&p_cont)
                                .cloned()
                                .unwrap_or_default();
                            let mut binders = Vec::new();
                            for k in &arity {
                                binders.push(fresh_name(*k, &mut avoid));
                            }
                            let mut fwd_objs: Vec<Obj> =
                                objs[..objs.len() - 1].iter().cloned().map(Obj::Name).collect();
                            fwd_objs.push(Obj::Name(fresh_q.clone()));
                            let call = Process::Output(subj.clone(), fwd_objs);
                            let ret = Process::Input(
                                fresh_q.clone(),
                                binders.clone(),
                                Box::new(Process::output(p_cont, binders)),
                            );
                            Some(Process::par(
                                q.clone(),
                                Process::res(fresh_q, Process::par(call, ret)),
                            ))
                        }
                        _ => None,
                    }
                }
                Typing::Wb(_) => {
                    // only input-controlled subjects may be answered by
                    // plain message composition under well-bracketing
                    if subj.kind.is_input_controlled() {
                        Some(Process::par(
                            q.clone(),
                            Process::output(subj.clone(), objs.clone()),
                        ))
                    } else {
                        None
                    }
                }
                _ => Some(Process::par(
                    q.clone(),
                    Process::output(subj.clone(), objs.clone()),
                )),
            };
            if let Some(composed) = composed {
                let (states, tr) = self.weak_match_cached(&composed, &Action::Tau, budget);
                truncated |= tr;
                for (canon, cost) in states {
                    let better = out.get(&canon).map(|&c| cost < c).unwrap_or(true);
                    if better {
                        out.insert(canon, cost);
                    }
                }
            }
        }
        // successor typing must hold on the answering side
        let filtered: Vec<(Process, usize)> = out
            .into_iter()
            .filter(|(target, _)| self.typing_holds(t_next, target))
            .collect();
        (filtered, truncated)
    }

    /// Decide bisimilarity of a typed pair.
    pub fn decide(&mut self, typing: Typing, p: &Process, q: &Process) -> Verdict {
        let budget = self.ctx.budget;
        let root: PairKey =
            (typing, canonical_form(p), canonical_form(q), budget, budget);
        let mut universe: BTreeMap<PairKey, PairNode> = BTreeMap::new();
        let mut queue: VecDeque<PairKey> = VecDeque::new();
        let mut truncated = false;
        queue.push_back(root.clone());
        while let Some(key) = queue.pop_front() {
            if universe.contains_key(&key) {
                continue;
            }
            let (t, cp, cq, bp, bq) = key.clone();
            let env = self.env_of(&t, &cp, &cq);
            let mut challenges = Vec::new();
            let mut challenges_truncated = false;
            for side in [Side::Left, Side::Right] {
                let (challenger, answerer, b_ch, b_an) = match side {
                    Side::Left => (&cp, &cq, bp, bq),
                    Side::Right => (&cq, &cp, bq, bp),
                };
                let (chs, tr) = self.challenges_of(&t, challenger, &env);
                challenges_truncated |= tr;
                for (step, t_next) in chs {
                    let cost = usize::from(step.rep_fired);
                    if cost > b_ch {
                        challenges_truncated = true;
                        continue;
                    }
                    let challenger_after = canonical_form(&step.target);
                    let (answers, answers_truncated) =
                        self.answers_of(&t_next, &step.action, answerer, &env, b_an);
                    let succs: Vec<PairKey> = answers
                        .into_iter()
                        .map(|(ans, a_cost)| {
                            let (np, nq, nbp, nbq) = match side {
                                Side::Left => {
                                    (challenger_after.clone(), ans, b_ch - cost, b_an - a_cost)
                                }
                                Side::Right => {
                                    (ans, challenger_after.clone(), b_an - a_cost, b_ch - cost)
                                }
                            };
                            (t_next.clone(), np, nq, nbp, nbq)
                        })
                        .collect();
                    for s in &succs {
                        if !universe.contains_key(s) {
                            queue.push_back(s.clone());
                        }
                    }
                    challenges.push(Challenge {
                        side,
                        action: step.action,
                        succs,
                        answers_truncated,
                    });
                }
            }
            truncated |= challenges_truncated
                || challenges.iter().any(|c| c.answers_truncated);
            universe.insert(key, PairNode { challenges });
        }

        // greatest fixpoint: peel off pairs with an unanswerable challenge
        let bad = peel(&universe, false);
        // definitive failures: only challenges with complete answer sets
        let def_bad = peel(&universe, true);

        let stats = Stats {
            pairs: universe.len(),
            challenges: universe.values().map(|n| n.challenges.len()).sum(),
            truncated,
        };
        let outcome = if def_bad.contains_key(&root) {
            Outcome::No
        } else if bad.contains_key(&root) {
            Outcome::BoundedNo
        } else if truncated {
            Outcome::BoundedYes
        } else {
            Outcome::Yes
        };
        let witness = if def_bad.contains_key(&root) {
            extract_witness(&universe, &def_bad, &root)
        } else if bad.contains_key(&root) {
            extract_witness(&universe, &bad, &root)
        } else {
            Vec::new()
        };
        let relation_size = if bad.contains_key(&root) { 0 } else { universe.len() - bad.len() };
        Verdict { outcome, witness, stats, relation_size }
    }

    /// Replay a distinguishing strategy: each recorded challenge must be
    /// enabled, the recorded line must follow actual answers, and the final
    /// challenge must have no answer at all.
    pub fn replay_witness(
        &mut self,
        typing: Typing,
        p: &Process,
        q: &Process,
        witness: &[WitnessStep],
    ) -> bool {
        let budget = self.ctx.budget;
        let mut cur =
            (typing, canonical_form(p), canonical_form(q), budget, budget);
        for (i, step) in witness.iter().enumerate() {
            let (t, cp, cq, bp, bq) = cur.clone();
            let env = self.env_of(&t, &cp, &cq);
            let (challenger, answerer, b_an) = match step.side {
                Side::Left => (&cp, &cq, bq),
                Side::Right => (&cq, &cp, bp),
            };
            let (chs, _) = self.challenges_of(&t, challenger, &env);
            let found = chs.iter().find(|(s, _)| s.action == step.action);
            let Some((ch_step, t_next)) = found else { return false };
            let answerer = answerer.clone();
            let (answers, _) =
                self.answers_of(t_next, &ch_step.action, &answerer, &env, b_an);
            if i + 1 == witness.len() {
                return answers.is_empty();
            }
            // follow the recorded line of play
            let want_l = canonical_form(&step.lhs);
            let want_r = canonical_form(&step.rhs);
            let matched = answers.iter().find(|(ans, _)| match step.side {
                Side::Left => {
                    canonical_form(&ch_step.target) == want_l && *ans == want_r
                }
                Side::Right => {
                    canonical_form(&ch_step.target) == want_r && *ans == want_l
                }
            });
            let Some((ans, a_cost)) = matched else { return false };
            let cost = usize::from(ch_step.rep_fired);
            cur = match step.side {
                Side::Left => (t_next.clone(), want_l, ans.clone(), bp - cost, b_an - a_cost),
                Side::Right => (t_next.clone(), ans.clone(), want_r, b_an - a_cost, bq - cost),
            };
        }
        false
    }
}

/// Iteratively remove pairs that have a challenge whose every recorded
/// answer is already removed. With `definite` set, only challenges with
/// complete (untruncated) answer sets count.
fn peel(universe: &BTreeMap<PairKey, PairNode>, definite: bool) -> BTreeMap<PairKey, usize> {
    let mut bad: BTreeMap<PairKey, usize> = BTreeMap::new();
    let mut round = 0usize;
    loop {
        round += 1;
        let mut newly_bad = Vec::new();
        for (key, node) in universe {
            if bad.contains_key(key) {
                continue;
            }
            let doomed = node.challenges.iter().any(|c| {
                (!definite || !c.answers_truncated)
                    && c.succs.iter().all(|s| bad.contains_key(s))
            });
            if doomed {
                newly_bad.push(key.clone());
            }
        }
        if newly_bad.is_empty() {
            return bad;
        }
        for k in newly_bad {
            bad.insert(k, round);
        }
    }
}

fn extract_witness(
    universe: &BTreeMap<PairKey, PairNode>,
    bad: &BTreeMap<PairKey, usize>,
    root: &PairKey,
) -> Vec<WitnessStep> {
    let mut out = Vec::new();
    let mut cur = root.clone();
    loop {
        let Some(&round) = bad.get(&cur) else { break };
        let node = &universe[&cur];
        // the challenge that doomed this pair: all successors bad at
        // earlier rounds
        let doomed = node.challenges.iter().find(|c| {
            c.succs.iter().all(|s| bad.get(s).map(|&r| r < round).unwrap_or(false))
        });
        let Some(ch) = doomed else { break };
        if ch.succs.is_empty() {
            out.push(WitnessStep {
                side: ch.side,
                action: ch.action.clone(),
                lhs: cur.1.clone(),
                rhs: cur.2.clone(),
            });
            break;
        }
        let next = ch.succs[0].clone();
        out.push(WitnessStep {
            side: ch.side,
            action: ch.action.clone(),
            lhs: next.1.clone(),
            rhs: next.2.clone(),
        });
        cur = next;
        if out.len() > 64 {
            break;
        }
    }
    out
}

// ---------------------------------------------------------------------------
// public deciders
// ---------------------------------------------------------------------------

pub fn bisim_ordinary(ctx: &LtsCtx, p: &Process, q: &Process) -> Verdict {
    Decider::new(ctx.clone()).decide(Typing::Plain, p, q)
}

pub fn bisim_seq(ctx: &LtsCtx, c1: &SeqConfig, c2: &SeqConfig) -> Verdict {
    assert_eq!(c1.eta, c2.eta, "sequential bisimilarity relates equal thread indicators");
    let typing = match (&c1.refs, &c2.refs) {
        (Some(r1), Some(r2)) => {
            assert_eq!(r1, r2, "seq-refs bisimilarity relates equal accessible sets");
            Typing::SeqRefs(r1.accessible.clone(), c1.eta)
        }
        _ => Typing::Seq(c1.eta),
    };
    Decider::new(ctx.clone()).decide(typing, &c1.proc, &c2.proc)
}

pub fn bisim_wb(ctx: &LtsCtx, c1: &WbConfig, c2: &WbConfig) -> Verdict {
    assert_eq!(c1.stack, c2.stack, "wb bisimilarity relates equal stacks");
    let p = wb::make_discreet(&c1.proc, &ctx.sorting);
    let q = wb::make_discreet(&c2.proc, &ctx.sorting);
    Decider::new(ctx.clone()).decide(Typing::Wb(c1.stack.clone()), &p, &q)
}

// ---------------------------------------------------------------------------
// certificate checking
// ---------------------------------------------------------------------------

/// Key for membership tests: free non-value names are renamed by first
/// occurrence (stack first, then each canonical process), so triples equal
/// up to a kind-preserving bijection of free names compare equal.
fn triple_key(t: &Typing, p: &Process, q: &Process) -> (Typing, Process, Process) {
    let cp = canonical_form(p);
    let cq = canonical_form(q);
    let mut order: Vec<Name> = Vec::new();
    let push = |n: &Name, order: &mut Vec<Name>| {
        if n.kind != NameKind::Val && !order.contains(n) {
            order.push(n.clone());
        }
    };
    match t {
        Typing::Wb(s) => {
            for (n, _) in s.entries() {
                push(n, &mut order);
            }
        }
        Typing::SeqRefs(s, _) => {
            for n in s {
                push(n, &mut order);
            }
        }
        _ => {}
    }
    for proc in [&cp, &cq] {
        for n in free_occurrence_order(proc) {
            push(&n, &mut order);
        }
    }
    let renamed: Vec<(Name, Name)> = order
        .iter()
        .enumerate()
        .map(|(i, n)| (n.clone(), Name::new(&format!("#m{}", i), n.kind)))
        .collect();
    let apply = |p: &Process| -> Process {
        let (from, to): (Vec<Name>, Vec<Name>) = renamed.iter().cloned().unzip();
        p.substitute(&to, &from).expect("kind-preserving renaming")
    };
    let ren = |n: &Name| -> Name {
        renamed.iter().find(|(f, _)| f == n).map(|(_, t)| t.clone()).unwrap_or_else(|| n.clone())
    };
    let t = match t {
        Typing::Plain => Typing::Plain,
        Typing::Seq(e) => Typing::Seq(*e),
        Typing::SeqRefs(s, e) => {
            Typing::SeqRefs(s.iter().map(&ren).collect(), *e)
        }
        Typing::Wb(s) => Typing::Wb(
            Stack::new(s.entries().iter().map(|(n, t)| (ren(n), *t)).collect())
                .expect("renamed stack stays well-formed"),
        ),
    };
    (t, apply(&cp), apply(&cq))
}

/// Free names in first-occurrence (pre-order) order.
fn free_occurrence_order(p: &Process) -> Vec<Name> {
    let mut out = Vec::new();
    let mut bound = Vec::new();
    occurrence_walk(p, &mut bound, &mut out);
    out
}

fn occurrence_walk(p: &Process, bound: &mut Vec<Name>, out: &mut Vec<Name>) {
    let hit = |n: &Name, bound: &Vec<Name>, out: &mut Vec<Name>| {
        if !bound.contains(n) && !out.contains(n) {
            out.push(n.clone());
        }
    };
    match p {
        Process::Nil => {}
        Process::Output(a, objs) => {
            hit(a, bound, out);
            for o in objs {
                for n in o.names() {
                    hit(n, bound, out);
                }
            }
        }
        Process::Input(a, bs, body) | Process::ReplInput(a, bs, body) => {
            hit(a, bound, out);
            let len = bound.len();
            bound.extend(bs.iter().cloned());
            occurrence_walk(body, bound, out);
            bound.truncate(len);
        }
        Process::Tau(b) => occurrence_walk(b, bound, out),
        Process::Match(a, b, g) => {
            hit(a, bound, out);
            hit(b, bound, out);
            occurrence_walk(g, bound, out);
        }
        Process::Sum(a, b) | Process::Par(a, b) => {
            occurrence_walk(a, bound, out);
            occurrence_walk(b, bound, out);
        }
        Process::Res(a, body) => {
            let len = bound.len();
            bound.push(a.clone());
            occurrence_walk(body, bound, out);
            bound.truncate(len);
        }
    }
}

/// Report for one certificate check.
#[derive(Clone, Debug)]
pub struct CertReport {
    pub name: String,
    pub mode: CertMode,
    pub outcome: Outcome,
    pub triples: usize,
    /// Challenges suppressed at the replication frontier.
    pub frontier_challenges: usize,
    pub failures: Vec<CertFailure>,
}

#[derive(Clone, Debug)]
pub struct CertFailure {
    pub triple_index: usize,
    pub side: Side,
    pub action: Option<Action>,
    pub reason: String,
}

impl fmt::Display for CertFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.action {
            Some(a) => write!(
                f,
                "triple {} ({}): challenge {} unmatched: {}",
                self.triple_index, self.side, a, self.reason
            ),
            None => write!(f, "triple {}: {}", self.triple_index, self.reason),
        }
    }
}

/// Check that a relation is a bisimulation of its mode: every triple is
/// well-typed and every allowed challenge from either side is answered
/// inside the relation (up to identity, and for `wb-upto` up to
/// deterministic reductions and static contexts).
pub fn check_certificate(ctx: &LtsCtx, cert: &RelationCert) -> CertReport {
    check_certificate_as(ctx, cert, cert.mode)
}

/// As [`check_certificate`] but reinterpreting the triples under another
/// mode (used to demonstrate what fails without a constraint).
pub fn check_certificate_as(ctx: &LtsCtx, cert: &RelationCert, mode: CertMode) -> CertReport {
    let mut decider = Decider::new(ctx.clone());
    let mut failures = Vec::new();
    let mut frontier_challenges = 0usize;
    let max_depth = cert.triples.iter().map(|t| t.depth).max().unwrap_or(0);

    // typings reinterpreted under the checking mode
    let triples: Vec<CertTriple> = cert
        .triples
        .iter()
        .map(|t| CertTriple {
            typing: reinterpret_typing(&t.typing, mode),
            lhs: t.lhs.clone(),
            rhs: t.rhs.clone(),
            depth: t.depth,
        })
        .collect();
    let member_keys: BTreeSet<(Typing, Process, Process)> =
        triples.iter().map(|t| triple_key(&t.typing, &t.lhs, &t.rhs)).collect();

    let is_member = |decider: &mut Decider,
                     t: &Typing,
                     p: &Process,
                     q: &Process|
     -> bool {
        if cert.include_identity
            && canonical_form(p) == canonical_form(q)
            && decider.typing_holds(t, p)
        {
            return true;
        }
        member_keys.contains(&triple_key(t, p, q))
    };

    for (ti, triple) in triples.iter().enumerate() {
        // typing of the triple itself
        for (side, proc) in [(Side::Left, &triple.lhs), (Side::Right, &triple.rhs)] {
            if !decider.typing_holds(&triple.typing, proc) {
                failures.push(CertFailure {
                    triple_index: ti,
                    side,
                    action: None,
                    reason: format!("not typed at {}", triple.typing),
                });
            }
        }
        let env = decider.env_of(&triple.typing, &triple.lhs, &triple.rhs);
        for side in [Side::Left, Side::Right] {
            let (challenger, answerer) = match side {
                Side::Left => (&triple.lhs, &triple.rhs),
                Side::Right => (&triple.rhs, &triple.lhs),
            };
            let (chs, _) = decider.challenges_of(&triple.typing, challenger, &env);
            for (step, t_next) in chs {
                if step.rep_fired && triple.depth >= max_depth && max_depth > 0 {
                    // replication frontier of the transcription
                    frontier_challenges += 1;
                    continue;
                }
                let challenger_after = canonical_form(&step.target);
                let (answers, _) =
                    decider.answers_of(&t_next, &step.action, answerer, &env, ctx.budget);
                let mut matched = false;
                for (ans, _) in &answers {
                    let (np, nq) = match side {
                        Side::Left => (challenger_after.clone(), ans.clone()),
                        Side::Right => (ans.clone(), challenger_after.clone()),
                    };
                    if is_member(&mut decider, &t_next, &np, &nq) {
                        matched = true;
                        break;
                    }
                    if mode == CertMode::WbUpto
                        && member_upto(&mut decider, &member_keys, cert.include_identity, &t_next, &np, &nq)
                    {
                        matched = true;
                        break;
                    }
                }
                if !matched {
                    failures.push(CertFailure {
                        triple_index: ti,
                        side,
                        action: Some(step.action.clone()),
                        reason: if answers.is_empty() {
                            "no answer at all".into()
                        } else {
                            format!(
                                "{} answers, none lands in the relation",
                                answers.len()
                            )
                        },
                    });
                }
            }
        }
    }
    let outcome = match (failures.is_empty(), frontier_challenges > 0) {
        (true, false) => Outcome::Yes,
        (true, true) => Outcome::BoundedYes,
        (false, _) => Outcome::No,
    };
    CertReport {
        name: cert.name.clone(),
        mode,
        outcome,
        triples: triples.len(),
        frontier_challenges,
        failures,
    }
}

fn reinterpret_typing(t: &Typing, mode: CertMode) -> Typing {
    match (t, mode) {
        (Typing::Wb(s), CertMode::Seq) => Typing::Seq(wb::erase(s)),
        (_, CertMode::Ordinary) => Typing::Plain,
        (Typing::SeqRefs(_, e), CertMode::Seq) => Typing::Seq(*e),
        _ => t.clone(),
    }
}

/// Up-to membership: strip a deterministic-reduction prefix on the left and
/// a common static context from both sides, then look the remainder up in
/// the relation.
fn member_upto(
    decider: &mut Decider,
    members: &BTreeSet<(Typing, Process, Process)>,
    include_identity: bool,
    t: &Typing,
    p: &Process,
    q: &Process,
) -> bool {
    let chain = det_chain(decider, t, p, 16);
    let cq = canonical_form(q);
    let (q_binders, q_comps) = split_layer(&cq);
    for d in &chain {
        let cd = canonical_form(d);
        if include_identity && cd == cq && decider.typing_holds(t, d) {
            return true;
        }
        if members.contains(&triple_key(t, &cd, &cq)) {
            return true;
        }
        let (p_binders, p_comps) = split_layer(&cd);
        // common strippable components
        let mut common: Vec<Process> = Vec::new();
        for c in &p_comps {
            if q_comps.contains(c) && !common.contains(c) {
                common.push(c.clone());
            }
        }
        for strip in nonempty_subsets(&common) {
            let p_rest = remove_comps(&p_binders, &p_comps, &strip);
            let q_rest = remove_comps(&q_binders, &q_comps, &strip);
            let (Some(p_rest), Some(q_rest)) = (p_rest, q_rest) else { continue };
            // candidate hole typings: every member typing plus identity
            if include_identity && canonical_form(&p_rest) == canonical_form(&q_rest) {
                return true;
            }
            for (mt, ml, mr) in members.iter() {
                let _ = (ml, mr);
                if members.contains(&triple_key(mt, &p_rest, &q_rest)) {
                    return true;
                }
            }
        }
    }
    false
}

/// Iterated deterministic reductions of the left process under the typing.
fn det_chain(decider: &mut Decider, t: &Typing, p: &Process, limit: usize) -> Vec<Process> {
    let mut out = vec![p.clone()];
    let mut cur = p.clone();
    for _ in 0..limit {
        let env = cur.free_names();
        let (chs, _) = decider.challenges_of(t, &cur, &env);
        if chs.is_empty() {
            break;
        }
        let mut target: Option<Process> = None;
        let mut ok = true;
        for (s, _) in &chs {
            if !s.action.is_tau() {
                ok = false;
                break;
            }
            let c = canonical_form(&s.target);
            match &target {
                Some(t0) if *t0 != c => {
                    ok = false;
                    break;
                }
                _ => target = Some(c),
            }
        }
        match (ok, target) {
            (true, Some(next)) => {
                out.push(next.clone());
                cur = next;
            }
            _ => break,
        }
    }
    out
}

fn split_layer(p: &Process) -> (Vec<Name>, Vec<Process>) {
    let mut binders = Vec::new();
    let mut comps = Vec::new();
    fn walk(p: &Process, binders: &mut Vec<Name>, comps: &mut Vec<Process>) {
        match p {
            Process::Nil => {}
            Process::Par(l, r) => {
                walk(l, binders, comps);
                walk(r, binders, comps);
            }
            Process::Res(a, b) => {
                binders.push(a.clone());
                walk(b, binders, comps);
            }
            other => comps.push(other.clone()),
        }
    }
    walk(p, &mut binders, &mut comps);
    (binders, comps)
}

fn remove_comps(
    binders: &[Name],
    comps: &[Process],
    strip: &[Process],
) -> Option<Process> {
    let mut left: Vec<Process> = comps.to_vec();
    for s in strip {
        let i = left.iter().position(|c| c == s)?;
        left.remove(i);
    }
    // restrictions used by stripped components stay shared: the remainder
    // keeps them as free names (the context binds them outside the hole)
    let mut body = match left.len() {
        0 => Process::Nil,
        _ => {
            let mut it = left.into_iter().rev();
            let first = it.next().unwrap();
            it.fold(first, |acc, c| Process::par(c, acc))
        }
    };
    // re-bind binders used only by the remainder
    let strip_free: BTreeSet<Name> =
        strip.iter().flat_map(|c| c.free_names()).collect();
    for b in binders.iter().rev() {
        if body.free_names().contains(b) && !strip_free.contains(b) {
            body = Process::res(b.clone(), body);
        }
    }
    Some(body)
}

fn nonempty_subsets(items: &[Process]) -> Vec<Vec<Process>> {
    let n = items.len().min(5);
    let mut out = Vec::new();
    for mask in 1..(1u32 << n) {
        let mut sub = Vec::new();
        for (i, item) in items.iter().take(n).enumerate() {
            if mask & (1 << i) != 0 {
                sub.push(item.clone());
            }
        }
        out.push(sub);
    }
    out
}

// ---------------------------------------------------------------------------
// barbed spot checks
// ---------------------------------------------------------------------------

/// Barbed bisimulation on the bounded tau-graphs of `E[p]` and `E[q]`:
/// matching weak reductions with equal typed weak barbs at every step.
pub fn barbed_spotcheck(
    ctx: &LtsCtx,
    typing: &Typing,
    p: &Process,
    q: &Process,
    contexts: &[crate::process::StaticContext],
) -> Verdict {
    let mut truncated = false;
    let mut stats = Stats::default();
    for e in contexts {
        let ep = e.plug(p);
        let eq = e.plug(q);
        let (ok, tr, pairs) = barbed_bisim(ctx, typing, &ep, &eq);
        stats.pairs += pairs;
        truncated |= tr;
        if !ok {
            stats.truncated = truncated;
            return Verdict {
                outcome: if truncated { Outcome::BoundedNo } else { Outcome::No },
                witness: Vec::new(),
                stats,
                relation_size: 0,
            };
        }
    }
    stats.truncated = truncated;
    Verdict {
        outcome: if truncated { Outcome::BoundedYes } else { Outcome::Yes },
        witness: Vec::new(),
        stats,
        relation_size: 0,
    }
}

/// Typed weak barbs of a composite state.
fn composite_barbs(
    ctx: &LtsCtx,
    typing: &Typing,
    p: &Process,
    env: &BTreeSet<Name>,
) -> (BTreeSet<Name>, bool) {
    match typing {
        Typing::Plain => {
            let w = lts::weak_steps(ctx, p, env, ctx.budget);
            let barbs = w
                .steps
                .iter()
                .filter_map(|(a, _, _)| match a {
                    Action::Out { subj, .. } => Some(subj.clone()),
                    _ => None,
                })
                .collect();
            (barbs, w.truncated)
        }
        Typing::Seq(_) | Typing::SeqRefs(..) => {
            let eta = seq::typecheck_seq(p).unwrap_or(0);
            let refs = match typing {
                Typing::SeqRefs(..) => Some(RefEnv {
                    accessible: refs::accessible_refs(p).unwrap_or_default(),
                }),
                _ => None,
            };
            let c = SeqConfig { eta, proc: p.clone(), refs };
            seq::barbs(ctx, &c, env)
        }
        Typing::Wb(_) => {
            // barbs via erasure: the composite's stack is clean, so eta is
            // stable along reductions
            let eta = seq::typecheck_seq(p).unwrap_or(0);
            let c = SeqConfig::plain(eta, p.clone());
            seq::barbs(ctx, &c, env)
        }
    }
}

fn barbed_bisim(
    ctx: &LtsCtx,
    typing: &Typing,
    p: &Process,
    q: &Process,
) -> (bool, bool, usize) {
    let mut env: BTreeSet<Name> = p.free_names();
    env.extend(q.free_names());
    let mut truncated = false;

    // bounded tau graphs
    let gp = tau_graph(ctx, p, &env, &mut truncated);
    let gq = tau_graph(ctx, q, &env, &mut truncated);

    let barbs_p: Vec<BTreeSet<Name>> = gp
        .states
        .iter()
        .map(|s| {
            let (b, tr) = composite_barbs(ctx, typing, s, &env);
            truncated |= tr;
            b
        })
        .collect();
    let barbs_q: Vec<BTreeSet<Name>> = gq
        .states
        .iter()
        .map(|s| {
            let (b, tr) = composite_barbs(ctx, typing, s, &env);
            truncated |= tr;
            b
        })
        .collect();

    // greatest barbed bisimulation over the product
    let np = gp.states.len();
    let nq = gq.states.len();
    let mut related = vec![vec![false; nq]; np];
    for i in 0..np {
        for j in 0..nq {
            related[i][j] = barbs_p[i] == barbs_q[j];
        }
    }
    loop {
        let mut changed = false;
        for i in 0..np {
            for j in 0..nq {
                if !related[i][j] {
                    continue;
                }
                let ok_fwd = gp.succs[i].iter().all(|&i2| {
                    gq.weak[j].iter().any(|&j2| related[i2][j2])
                });
                let ok_bwd = gq.succs[j].iter().all(|&j2| {
                    gp.weak[i].iter().any(|&i2| related[i2][j2])
                });
                if !(ok_fwd && ok_bwd) {
                    related[i][j] = false;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    (related[gp.root][gq.root], truncated, np * nq)
}

struct TauGraph {
    root: usize,
    states: Vec<Process>,
    /// strong tau successors
    succs: Vec<Vec<usize>>,
    /// weak tau successors (reflexive-transitive)
    weak: Vec<Vec<usize>>,
}

fn tau_graph(ctx: &LtsCtx, p: &Process, env: &BTreeSet<Name>, truncated: &mut bool) -> TauGraph {
    let mut ids: BTreeMap<Process, usize> = BTreeMap::new();
    let mut states = Vec::new();
    let mut budget_left = Vec::new();
    let mut succs: Vec<Vec<usize>> = Vec::new();
    let root_c = canonical_form(p);
    ids.insert(root_c.clone(), 0);
    states.push(root_c);
    budget_left.push(ctx.budget);
    succs.push(Vec::new());
    let mut queue = VecDeque::new();
    queue.push_back(0usize);
    while let Some(i) = queue.pop_front() {
        let state = states[i].clone();
        let avail = budget_left[i];
        for s in lts::step(ctx, &state, env) {
            if !s.action.is_tau() {
                continue;
            }
            let cost = usize::from(s.rep_fired);
            if cost > avail {
                *truncated = true;
                continue;
            }
            let c = canonical_form(&s.target);
            let id = match ids.get(&c) {
                Some(&id) => {
                    if avail - cost > budget_left[id] {
                        budget_left[id] = avail - cost;
                        queue.push_back(id);
                    }
                    id
                }
                None => {
                    let id = states.len();
                    ids.insert(c.clone(), id);
                    states.push(c);
                    budget_left.push(avail - cost);
                    succs.push(Vec::new());
                    queue.push_back(id);
                    id
                }
            };
            if !succs[i].contains(&id) {
                succs[i].push(id);
            }
        }
    }
    // reflexive-transitive closure
    let n = states.len();
    let mut weak: Vec<BTreeSet<usize>> = (0..n).map(|i| [i].into_iter().collect()).collect();
    loop {
        let mut changed = false;
        for i in 0..n {
            let cur: Vec<usize> = weak[i].iter().cloned().collect();
            for j in cur {
                for &k in &succs[j] {
                    if weak[i].insert(k) {
                        changed = true;
                    }
                }
            }
        }
        if !changed {
            break;
        }
    }
    TauGraph {
        root: 0,
        states,
        succs,
        weak: weak.into_iter().map(|s| s.into_iter().collect()).collect(),
    }
}
