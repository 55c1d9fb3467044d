//! Timing-sensitive checks; kept to a single test so nothing else in this
//! binary competes for the CPU while it runs.

use lfc_bench::{records_for, run_scaling, slopes, CountingAlloc, Operator, DEFAULT_CHANNELS, DEFAULT_SIZES};

#[global_allocator]
static ALLOC: CountingAlloc = CountingAlloc;

fn ratio(records: &[lfc_bench::BenchRecord], op: Operator, from: usize, to: usize, f: fn(&lfc_bench::BenchRecord) -> u64) -> f64 {
    let rs = records_for(records, op);
    let at = |s| f(rs.iter().find(|r| r.size == s).unwrap()) as f64;
    at(to) / at(from)
}

#[test]
fn lfc_scales_linearly_and_attention_quadratically() {
    let ops = [Operator::Lfc, Operator::Attention, Operator::Pointwise];
    let recs = run_scaling(&ops, &DEFAULT_SIZES, DEFAULT_CHANNELS, 7, 42).unwrap();
    for r in &recs {
        eprintln!("{} {} {} {}", r.operator, r.size, r.wall_ns, r.peak_bytes);
    }
    let lfc = slopes(&recs, Operator::Lfc).unwrap();
    let att = slopes(&recs, Operator::Attention).unwrap();
    eprintln!("lfc {lfc:?} attention {att:?}");
    assert!((0.85..=1.25).contains(&lfc.time), "lfc time slope {}", lfc.time);
    assert!((0.85..=1.25).contains(&lfc.memory), "lfc memory slope {}", lfc.memory);
    assert!((1.7..=2.3).contains(&att.time), "attention time slope {}", att.time);
    assert!((1.7..=2.3).contains(&att.memory), "attention memory slope {}", att.memory);
    assert!(lfc.time < att.time && lfc.memory < att.memory);

    let pw = ratio(&recs, Operator::Pointwise, 32, 64, |r| r.wall_ns);
    assert!((3.0..=5.0).contains(&pw), "pointwise 32->64 time ratio {pw}");
    let mem = ratio(&recs, Operator::Lfc, 16, 128, |r| r.peak_bytes);
    assert!((48.0..=80.0).contains(&mem), "lfc 16->128 memory ratio {mem}");
    let at = ratio(&recs, Operator::Attention, 32, 64, |r| r.wall_ns);
    assert!((10.0..=24.0).contains(&at), "attention 32->64 time ratio {at}");
}
