use piwb::equiv::{self, Typing};
use piwb::refs::RefEnv;
use piwb::seq::SeqConfig;
use piwb::*;

fn setup(src: &str) -> (SourceUnit, LtsCtx) {
    let unit = parse(src).unwrap();
    let sorting = sorting_of_unit(&unit).unwrap();
    (unit, LtsCtx::new(sorting))
}

#[test]
fn ex_exp_law1() {
    let (unit, ctx) = setup(
        "decl out x, y, w. decl in u, v.\n\
         proc L1 = u().y<> | x().w<>\n\
         proc R1 = u().( y<> | x().w<> )",
    );
    let l = unit.def("L1").unwrap().clone();
    let r = unit.def("R1").unwrap().clone();
    let v = equiv::bisim_seq(&ctx, &SeqConfig::plain(1, l), &SeqConfig::plain(1, r));
    eprintln!("ex_exp_law1: {} pairs={} challenges={}", v.outcome, v.stats.pairs, v.stats.challenges);
    assert!(v.outcome.is_yes(), "{:?}", v.outcome);
    assert!(!v.outcome.is_bounded());
}

#[test]
fn swap_vs_swapd() {
    let (unit, ctx) = setup(
        "decl val 0..3. decl val m. decl ref l. decl out c(val).\n\
         proc SwapL = swap l<1>(m).c<m>\n\
         proc SwapD = swapD l<1>(m).c<m>",
    );
    let sl = unit.def("SwapL").unwrap().clone();
    let sd = unit.def("SwapD").unwrap().clone();
    // equal under sequentiality with references at (empty, 1)
    let v = equiv::bisim_seq(
        &ctx,
        &SeqConfig::with_refs(1, sl.clone(), RefEnv::default()),
        &SeqConfig::with_refs(1, sd.clone(), RefEnv::default()),
    );
    eprintln!("swap seq-refs: {} pairs={}", v.outcome, v.stats.pairs);
    assert_eq!(v.outcome, equiv::Outcome::Yes);
    // distinguished ordinarily, with a replayable witness
    let v2 = equiv::bisim_ordinary(&ctx, &sl, &sd);
    eprintln!("swap ordinary: {} witness={}", v2.outcome, v2.witness.len());
    for w in &v2.witness {
        eprintln!("  {} plays {}", w.side, w.action);
    }
    assert_eq!(v2.outcome, equiv::Outcome::No);
    let mut d = equiv::Decider::new(ctx.clone());
    assert!(d.replay_witness(Typing::Plain, &sl, &sd, &v2.witness));
}

#[test]
fn z_example() {
    let (unit, ctx) = setup(
        "decl out x, y, z, xx. decl out yp, zp.\n\
         proc Nil1 = new xx. xx<>\n\
         proc P = new yp, zp. ( !x().( zp().z<> | yp<> ) | !y().zp<> )\n\
         proc Q = x().Nil1 + y().Nil1",
    );
    let p = unit.def("P").unwrap().clone();
    let q = unit.def("Q").unwrap().clone();
    let v = equiv::bisim_seq(&ctx, &SeqConfig::plain(0, p.clone()), &SeqConfig::plain(0, q.clone()));
    eprintln!("z-example seq: {} pairs={}", v.outcome, v.stats.pairs);
    assert_eq!(v.outcome, equiv::Outcome::Yes);
    let v2 = equiv::bisim_ordinary(&ctx, &p, &q);
    eprintln!("z-example ordinary: {}", v2.outcome);
    assert!(!v2.outcome.is_yes());
}

#[test]
fn e_rewr_laws() {
    let (unit, ctx) = setup(
        "decl val 0..3. decl val m. decl ref l. decl out c(val).\n\
         proc L1 = l<0> | read l(m).c<m>\n\
         proc R1 = l<0> | c<0>\n\
         proc L2 = l<0> | write l<2>.c<1>\n\
         proc R2 = l<2> | c<1>",
    );
    let mk = |n: &str| unit.def(n).unwrap().clone();
    let renv = || RefEnv { accessible: [Name::new("l", NameKind::Ref)].into_iter().collect() };
    for (l, r) in [("L1", "R1"), ("L2", "R2")] {
        let v = equiv::bisim_seq(
            &ctx,
            &SeqConfig::with_refs(1, mk(l), renv()),
            &SeqConfig::with_refs(1, mk(r), renv()),
        );
        eprintln!("e_rewr {l}~{r}: {} pairs={}", v.outcome, v.stats.pairs);
        assert_eq!(v.outcome, equiv::Outcome::Yes);
    }
}
