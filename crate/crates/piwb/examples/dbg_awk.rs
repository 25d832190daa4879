use piwb::equiv::{self};
use piwb::wb::WbConfig;
use piwb::*;

fn main() {
    let src = "decl val 0..2. decl val n.\n\
        decl ref l.\n\
        decl out x(out,cont), y(cont).\n\
        decl cont p(val), q, r.\n\
        proc Body1 = write l<0>. new q. ( y<q> | q(). write l<1>. new r. ( y<r> | r(). read l(n). p<n> ) )\n\
        proc P1 = new l. ( l<0> | !x(y,p).Body1 )\n\
        proc P2 = !x(y,p). new q. ( y<q> | q(). new r. ( y<r> | r(). p<1> ) )";
    let unit = parse(src).unwrap();
    let sorting = sorting_of_unit(&unit).unwrap();
    for budget in [2usize, 3, 4] {
        let mut ctx = LtsCtx::new(sorting.clone());
        ctx.budget = budget;
        let p1 = unit.def("P1").unwrap().clone();
        let p2 = unit.def("P2").unwrap().clone();
        let t0 = std::time::Instant::now();
        let v = equiv::bisim_wb(
            &ctx,
            &WbConfig { stack: Stack::empty(), proc: p1 },
            &WbConfig { stack: Stack::empty(), proc: p2 },
        );
        println!(
            "budget={} outcome={} pairs={} challenges={} elapsed={:?}",
            budget, v.outcome, v.stats.pairs, v.stats.challenges, t0.elapsed()
        );
    }
}
