use descent::front::compile;
use descent::herd::{DomainOpts, Geometry, Herd, StepEvent, TracePc};
use descent::instrument::instrument_checks;

#[test]
fn prewiden_covered_by_widened() {
    let src = std::fs::read_to_string("../../corpus/fill_verify.c").unwrap();
    let ir = compile(&src, "fill_verify").expect("compiles");
    let ir = instrument_checks(&ir, false);
    let opts = DomainOpts::default();
    let geo = Geometry::new(&ir, opts.prefix);
    let mut h = Herd::initial(&ir, &geo);
    let mut rounds = 0;
    let mut checked = 0;
    loop {
        if h.needs_split(&ir) {
            let kids = h.split(&ir, &geo, &opts);
            let mut chosen = None;
            for k in kids {
                if matches!(k.primary_pc(), TracePc::Active(_)) {
                    chosen = Some(k);
                    break;
                }
            }
            match chosen {
                Some(k) => h = k,
                None => break,
            }
            continue;
        }
        match h.step(&ir, &geo, &opts) {
            StepEvent::LoopIterDone(l) => {
                rounds += 1;
                if h.should_widen(&opts, l) {
                    h.truncate_path(&ir, l);
                    let mut pre = h.clone();
                    h.widen(&geo, &[]);
                    let covered = pre.more_precise(&h);
                    eprintln!("round {rounds}: pre.more_precise(widened) = {covered}");
                    checked += 1;
                    if checked >= 4 {
                        break;
                    }
                }
            }
            StepEvent::Terminal => break,
            _ => {}
        }
        if rounds > 40 {
            break;
        }
    }
    assert!(checked > 0, "never reached a widening boundary");
}
