use piwb::equiv::{self};
use piwb::wb::{admissible_stacks, typecheck_wb, StackTag, WbConfig};
use piwb::*;

fn setup(src: &str) -> (SourceUnit, LtsCtx) {
    let unit = parse(src).unwrap();
    let sorting = sorting_of_unit(&unit).unwrap();
    (unit, LtsCtx::new(sorting))
}

const WB_SRC: &str = "decl val 0..3. decl val a, b, c2.\n\
    decl out x(val,cont), bb(cont).\n\
    decl in u(val).\n\
    decl cont p(val), pp(val), q(val), qq(val), r, rr, p2.\n\
    proc T1 = p<a>\n\
    proc T2 = u(a).p<a>\n\
    proc T3 = new q. ( x<b,q> | q(c2).p<c2> )\n\
    proc T4 = x<b,q> | q(c2).p<c2>\n\
    proc P0 = p(a).pp<a> | q(b).qq<b>\n\
    proc Bad = r().rr<> | rr().r<>\n\
    proc Res1Ex = new rr. ( new r. ( bb<r> | r().rr<> ) | rr().p2<> )\n\
    stack S1 = p^o\n\
    stack S4 = q^o, q^i, p^o\n\
    stack P0A = p^i, pp^o, q^i, qq^o\n\
    stack P0B = q^i, qq^o, p^i, pp^o\n\
    stack SR = p2^o";

#[test]
fn wb_typing_examples() {
    let (unit, _ctx) = setup(WB_SRC);
    let s1 = unit.stack("S1").unwrap();
    assert!(typecheck_wb(unit.def("T1").unwrap(), s1).is_ok());
    assert!(typecheck_wb(unit.def("T2").unwrap(), s1).is_ok());
    assert!(typecheck_wb(unit.def("T3").unwrap(), s1).is_ok());
    assert!(typecheck_wb(unit.def("T4").unwrap(), unit.stack("S4").unwrap()).is_ok());
    // T4 does not typecheck at the short stack
    assert!(typecheck_wb(unit.def("T4").unwrap(), s1).is_err());
    // P0 has exactly the two displayed stacks
    let p0 = unit.def("P0").unwrap();
    assert!(typecheck_wb(p0, unit.stack("P0A").unwrap()).is_ok());
    assert!(typecheck_wb(p0, unit.stack("P0B").unwrap()).is_ok());
    let all = admissible_stacks(p0);
    eprintln!("P0 admits {} stacks", all.len());
    assert_eq!(all.len(), 2);
    // the crossing pair is typable under no stack
    let bad = unit.def("Bad").unwrap();
    assert!(admissible_stacks(bad).is_empty());
    // the restriction example types at p2^o
    assert!(typecheck_wb(unit.def("Res1Ex").unwrap(), unit.stack("SR").unwrap()).is_ok());
}

#[test]
fn wb_subject_reduction_on_res1_example() {
    let (unit, ctx) = setup(WB_SRC);
    let p = unit.def("Res1Ex").unwrap().clone();
    let stack = unit.stack("SR").unwrap().clone();
    let c = WbConfig { stack, proc: p.clone() };
    let env = p.free_names();
    let steps = wb::allowed_steps(&ctx, &c, &env);
    assert!(!steps.is_empty());
    for (s, next) in &steps {
        eprintln!("{} --{}--> stack {}", c.stack, s.action, next.stack);
        assert!(
            typecheck_wb(&next.proc, &next.stack).is_ok(),
            "subject reduction fails on {} after {}",
            next.proc,
            s.action
        );
    }
    // the bound output at bb extrudes r and pushes its input obligation
    let open = steps
        .iter()
        .find(|(s, _)| matches!(&s.action, lts::Action::Out { subj, .. } if subj.id.as_ref() == "bb"))
        .expect("question at bb");
    assert_eq!(open.1.stack.entries()[0].1, StackTag::In);
}

const AWK_SRC: &str = "decl val 0..2. decl val n.\n\
    decl ref l.\n\
    decl out x(out,cont), y(cont).\n\
    decl cont p(val), q, r.\n\
    proc Body1 = write l<0>. new q. ( y<q> | q(). write l<1>. new r. ( y<r> | r(). read l(n). p<n> ) )\n\
    proc P1 = new l. ( l<0> | !x(y,p).Body1 )\n\
    proc P2 = !x(y,p). new q. ( y<q> | q(). new r. ( y<r> | r(). p<1> ) )";

#[test]
fn awkward_probe() {
    let (unit, mut ctx) = setup(AWK_SRC);
    ctx.budget = 2;
    let p1 = unit.def("P1").unwrap().clone();
    let p2 = unit.def("P2").unwrap().clone();
    assert!(typecheck_wb(&p1, &Stack::empty()).is_ok());
    assert!(typecheck_wb(&p2, &Stack::empty()).is_ok());
    assert!(wb::is_discreet(&p1) && wb::is_discreet(&p2));
    let t0 = std::time::Instant::now();
    let v = equiv::bisim_wb(
        &ctx,
        &WbConfig { stack: Stack::empty(), proc: p1 },
        &WbConfig { stack: Stack::empty(), proc: p2 },
    );
    eprintln!(
        "awkward budget=2: {} pairs={} challenges={} in {:?}",
        v.outcome,
        v.stats.pairs,
        v.stats.challenges,
        t0.elapsed()
    );
    assert!(v.outcome.is_yes());
}
