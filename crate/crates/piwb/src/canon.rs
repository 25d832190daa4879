//! Canonical forms for structural congruence.
//!
//! `canonical_form` is a total function with `canonical_form(p) ==
//! canonical_form(q)` iff `p == q` modulo: commutativity and associativity
//! of parallel, neutrality of nil, maximal hoisting of restrictions (scope
//! extrusion without capture), exchange and garbage collection of
//! restrictions, and alpha-renaming. Sum and match structure is left alone:
//! the congruence has no laws for them.
//!
//! States produced during exploration are identified by their canonical
//! form, so this must be deterministic. Binders are relabelled by scope
//! level (`#n0`, `#n1`, ...); parallel components are sorted structurally;
//! restriction order is fixed by taking the least result over all
//! permutations of each layer's binders.

use crate::names::{Name, NameKind};
use crate::process::{Obj, Process};
use std::collections::BTreeMap;
use std::sync::Arc;

/// Upper bound on binders per layer for the exact permutation search; layers
/// wider than this fall back to a deterministic heuristic order.
const PERM_LIMIT: usize = 7;

type Env = BTreeMap<Name, Name>;

thread_local! {
    static CANON_MEMO: std::cell::RefCell<std::collections::HashMap<Process, Process>> =
        std::cell::RefCell::new(std::collections::HashMap::new());
}

/// Cap on the per-thread memo table; exploration revisits the same raw
/// targets constantly, so this pays for itself quickly.
const CANON_MEMO_CAP: usize = 1 << 20;

pub fn canonical_form(p: &Process) -> Process {
    if let Some(hit) = CANON_MEMO.with(|m| m.borrow().get(p).cloned()) {
        return hit;
    }
    let mut counter = 0usize;
    let unique = uniquify(p, &mut BTreeMap::new(), &mut counter);
    let result = canon_layer(&unique, &Env::new(), 0);
    CANON_MEMO.with(|m| {
        let mut m = m.borrow_mut();
        if m.len() >= CANON_MEMO_CAP {
            m.clear();
        }
        m.insert(p.clone(), result.clone());
    });
    result
}

/// Plain alpha-normal form: binders relabelled by scope level in syntactic
/// order, no structural rearrangement. Two processes are alpha-equivalent
/// iff their alpha keys are equal.
pub fn alpha_key(p: &Process) -> Process {
    let mut counter = 0usize;
    let unique = uniquify(p, &mut BTreeMap::new(), &mut counter);
    relabel_syntactic(&unique, &Env::new(), 0)
}

pub fn alpha_equiv(p: &Process, q: &Process) -> bool {
    alpha_key(p) == alpha_key(q)
}

fn rename(n: &Name, env: &Env) -> Name {
    env.get(n).cloned().unwrap_or_else(|| n.clone())
}

fn rename_obj(o: &Obj, env: &Env) -> Obj {
    match o {
        Obj::Name(n) => Obj::Name(rename(n, env)),
        Obj::Add(a, b, m) => Obj::Add(rename(a, env), rename(b, env), *m).eval(),
    }
}

fn level_name(level: usize, kind: NameKind) -> Name {
    Name { id: Arc::from(format!("#n{}", level)), kind }
}

/// Rename every binder to a globally unique `#u<i>` so that hoisting
/// restrictions across parallels can never capture.
fn uniquify(p: &Process, env: &mut BTreeMap<Name, Name>, counter: &mut usize) -> Process {
    let mut fresh = |n: &Name| {
        let id = format!("#u{}", *counter);
        *counter += 1;
        Name { id: Arc::from(id), kind: n.kind }
    };
    match p {
        Process::Nil => Process::Nil,
        Process::Output(a, objs) => Process::Output(
            rename(a, env),
            objs.iter().map(|o| rename_obj(o, env)).collect(),
        ),
        Process::Input(a, binders, body) | Process::ReplInput(a, binders, body) => {
            let subj = rename(a, env);
            let mut saved = Vec::new();
            let mut bs = Vec::new();
            for b in binders {
                let nb = fresh(b);
                saved.push((b.clone(), env.insert(b.clone(), nb.clone())));
                bs.push(nb);
            }
            let body = uniquify(body, env, counter);
            for (b, old) in saved.into_iter().rev() {
                match old {
                    Some(o) => env.insert(b, o),
                    None => env.remove(&b),
                };
            }
            match p {
                Process::Input(..) => Process::Input(subj, bs, Box::new(body)),
                _ => Process::ReplInput(subj, bs, Box::new(body)),
            }
        }
        Process::Tau(body) => Process::Tau(Box::new(uniquify(body, env, counter))),
        Process::Match(a, b, g) => Process::Match(
            rename(a, env),
            rename(b, env),
            Box::new(uniquify(g, env, counter)),
        ),
        Process::Sum(g1, g2) => Process::Sum(
            Box::new(uniquify(g1, env, counter)),
            Box::new(uniquify(g2, env, counter)),
        ),
        Process::Par(l, r) => Process::Par(
            Box::new(uniquify(l, env, counter)),
            Box::new(uniquify(r, env, counter)),
        ),
        Process::Res(a, body) => {
            let na = fresh(a);
            let old = env.insert(a.clone(), na.clone());
            let body = uniquify(body, env, counter);
            match old {
                Some(o) => env.insert(a.clone(), o),
                None => env.remove(a),
            };
            Process::Res(na, Box::new(body))
        }
    }
}

/// Collect the layer under `p`: hoisted restriction binders plus flattened
/// non-nil parallel components. Binders are unique after `uniquify`.
fn collect_layer(p: &Process, binders: &mut Vec<Name>, comps: &mut Vec<Process>) {
    match p {
        Process::Nil => {}
        Process::Par(l, r) => {
            collect_layer(l, binders, comps);
            collect_layer(r, binders, comps);
        }
        Process::Res(a, body) => {
            binders.push(a.clone());
            collect_layer(body, binders, comps);
        }
        other => comps.push(other.clone()),
    }
}

fn canon_layer(p: &Process, env: &Env, level: usize) -> Process {
    let mut binders = Vec::new();
    let mut comps = Vec::new();
    collect_layer(p, &mut binders, &mut comps);

    // garbage-collect binders no component uses
    let free: Vec<std::collections::BTreeSet<Name>> =
        comps.iter().map(|c| c.free_names()).collect();
    let used: Vec<Name> = binders
        .into_iter()
        .filter(|b| free.iter().any(|f| f.contains(b)))
        .collect();

    let build = |order: &[Name]| -> Process {
        let mut env = env.clone();
        for (i, b) in order.iter().enumerate() {
            env.insert(b.clone(), level_name(level + i, b.kind));
        }
        let inner_level = level + order.len();
        let mut done: Vec<Process> =
            comps.iter().map(|c| canon_comp(c, &env, inner_level)).collect();
        done.sort();
        let mut body = match done.pop() {
            None => Process::Nil,
            Some(last) => {
                let mut acc = last;
                while let Some(c) = done.pop() {
                    acc = Process::Par(Box::new(c), Box::new(acc));
                }
                acc
            }
        };
        for (i, b) in order.iter().enumerate().rev() {
            body = Process::Res(level_name(level + i, b.kind), Box::new(body));
        }
        body
    };

    if used.len() <= 1 {
        return build(&used);
    }
    if used.len() > PERM_LIMIT {
        // deterministic fallback: order binders by their usage fingerprint
        let mut keyed: Vec<(Process, Name)> = used
            .iter()
            .map(|b| {
                let marked: Vec<Process> = comps
                    .iter()
                    .filter(|c| c.free_names().contains(b))
                    .map(|c| canon_comp(c, env, level))
                    .collect();
                (marked.into_iter().fold(Process::Nil, Process::par), b.clone())
            })
            .collect();
        keyed.sort();
        let order: Vec<Name> = keyed.into_iter().map(|(_, b)| b).collect();
        return build(&order);
    }
    permutations(&used).into_iter().map(|ord| build(&ord)).min().expect("nonempty")
}

fn canon_comp(c: &Process, env: &Env, level: usize) -> Process {
    match c {
        Process::Nil => Process::Nil,
        Process::Output(a, objs) => Process::Output(
            rename(a, env),
            objs.iter().map(|o| rename_obj(o, env)).collect(),
        ),
        Process::Input(a, binders, body) | Process::ReplInput(a, binders, body) => {
            let subj = rename(a, env);
            let mut env = env.clone();
            let mut bs = Vec::new();
            for (i, b) in binders.iter().enumerate() {
                let nb = level_name(level + i, b.kind);
                env.insert(b.clone(), nb.clone());
                bs.push(nb);
            }
            let body = canon_layer(body, &env, level + binders.len());
            match c {
                Process::Input(..) => Process::Input(subj, bs, Box::new(body)),
                _ => Process::ReplInput(subj, bs, Box::new(body)),
            }
        }
        Process::Tau(body) => Process::Tau(Box::new(canon_layer(body, env, level))),
        Process::Match(a, b, g) => Process::Match(
            rename(a, env),
            rename(b, env),
            Box::new(canon_comp(g, env, level)),
        ),
        Process::Sum(g1, g2) => Process::Sum(
            Box::new(canon_comp(g1, env, level)),
            Box::new(canon_comp(g2, env, level)),
        ),
        // guards cannot contain bare Par/Res, but tolerate them defensively
        Process::Par(..) | Process::Res(..) => canon_layer(c, env, level),
    }
}

/// Relabel binders in syntactic order without rearranging anything.
fn relabel_syntactic(p: &Process, env: &Env, level: usize) -> Process {
    match p {
        Process::Nil => Process::Nil,
        Process::Output(a, objs) => Process::Output(
            rename(a, env),
            objs.iter().map(|o| rename_obj(o, env)).collect(),
        ),
        Process::Input(a, binders, body) | Process::ReplInput(a, binders, body) => {
            let subj = rename(a, env);
            let mut env = env.clone();
            let mut bs = Vec::new();
            for (i, b) in binders.iter().enumerate() {
                let nb = level_name(level + i, b.kind);
                env.insert(b.clone(), nb.clone());
                bs.push(nb);
            }
            let body = relabel_syntactic(body, &env, level + binders.len());
            match p {
                Process::Input(..) => Process::Input(subj, bs, Box::new(body)),
                _ => Process::ReplInput(subj, bs, Box::new(body)),
            }
        }
        Process::Tau(body) => Process::Tau(Box::new(relabel_syntactic(body, env, level))),
        Process::Match(a, b, g) => Process::Match(
            rename(a, env),
            rename(b, env),
            Box::new(relabel_syntactic(g, env, level)),
        ),
        Process::Sum(g1, g2) => Process::Sum(
            Box::new(relabel_syntactic(g1, env, level)),
            Box::new(relabel_syntactic(g2, env, level)),
        ),
        Process::Par(l, r) => Process::Par(
            Box::new(relabel_syntactic(l, env, level)),
            Box::new(relabel_syntactic(r, env, level)),
        ),
        Process::Res(a, body) => {
            let na = level_name(level, a.kind);
            let mut env = env.clone();
            env.insert(a.clone(), na.clone());
            Process::Res(na, Box::new(relabel_syntactic(body, &env, level + 1)))
        }
    }
}

fn permutations<T: Clone>(items: &[T]) -> Vec<Vec<T>> {
    if items.is_empty() {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(i);
        for mut tail in permutations(&rest) {
            tail.insert(0, head.clone());
            out.push(tail);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::names::NameKind::*;

    fn n(id: &str, k: NameKind) -> Name {
        Name::new(id, k)
    }

    #[test]
    fn par_nil_neutral() {
        let p = Process::output(n("x", OutCtl), vec![]);
        let pn = Process::par(p.clone(), Process::Nil);
        assert_eq!(canonical_form(&pn), canonical_form(&p));
    }

    #[test]
    fn par_commutative() {
        let p = Process::output(n("x", OutCtl), vec![]);
        let q = Process::output(n("y", OutCtl), vec![]);
        assert_eq!(
            canonical_form(&Process::par(p.clone(), q.clone())),
            canonical_form(&Process::par(q, p))
        );
    }

    #[test]
    fn scope_extrusion() {
        // new a.(x<a>) | y<>  ==  new a.(x<a> | y<>)
        let a = n("a", InCtl);
        let lhs = Process::par(
            Process::res(a.clone(), Process::output(n("x", OutCtl), vec![a.clone()])),
            Process::output(n("y", OutCtl), vec![]),
        );
        let rhs = Process::res(
            a.clone(),
            Process::par(
                Process::output(n("x", OutCtl), vec![a]),
                Process::output(n("y", OutCtl), vec![]),
            ),
        );
        assert_eq!(canonical_form(&lhs), canonical_form(&rhs));
    }

    #[test]
    fn unused_restriction_dropped() {
        let a = n("a", InCtl);
        let p = Process::output(n("x", OutCtl), vec![]);
        assert_eq!(canonical_form(&Process::res(a, p.clone())), canonical_form(&p));
        assert_eq!(canonical_form(&Process::res(n("b", Cont), Process::Nil)), Process::Nil);
    }

    #[test]
    fn restriction_exchange() {
        let a = n("a", InCtl);
        let b = n("b", InCtl);
        let body = Process::output(n("x", OutCtl), vec![a.clone(), b.clone()]);
        let ab = Process::res(a.clone(), Process::res(b.clone(), body.clone()));
        let ba = Process::res(b, Process::res(a, body));
        assert_eq!(canonical_form(&ab), canonical_form(&ba));
    }

    #[test]
    fn alpha_renaming_preserves_kind() {
        let p1 = Process::res(n("a", InCtl), Process::output(n("x", OutCtl), vec![n("a", InCtl)]));
        let p2 = Process::res(n("b", InCtl), Process::output(n("x", OutCtl), vec![n("b", InCtl)]));
        let p3 = Process::res(n("b", Cont), Process::output(n("x", OutCtl), vec![n("b", Cont)]));
        assert_eq!(canonical_form(&p1), canonical_form(&p2));
        assert_ne!(canonical_form(&p1), canonical_form(&p3));
    }

    #[test]
    fn idempotent() {
        let a = n("a", InCtl);
        let p = Process::par(
            Process::res(a.clone(), Process::output(n("x", OutCtl), vec![a])),
            Process::input(n("y", OutCtl), vec![n("c", Val)], Process::Nil),
        );
        let c1 = canonical_form(&p);
        assert_eq!(canonical_form(&c1), c1);
    }

    #[test]
    fn sum_structure_not_reordered() {
        let g1 = Process::input(n("x", OutCtl), vec![], Process::output(n("y", OutCtl), vec![]));
        let g2 = Process::input(n("z", OutCtl), vec![], Process::output(n("y", OutCtl), vec![]));
        let s12 = Process::Sum(Box::new(g1.clone()), Box::new(g2.clone()));
        let s21 = Process::Sum(Box::new(g2), Box::new(g1));
        assert_ne!(canonical_form(&s12), canonical_form(&s21));
    }
}
