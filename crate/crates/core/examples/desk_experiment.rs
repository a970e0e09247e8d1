//! Trains one model variant on the synthetic benchmark and prints held-out
//! scores and the per-position loss profile.
//!
//! `cargo run --release -p cmert-core --example desk_experiment -- <variant> <seed>`
//! with variant one of `full`, `refinement_only`, `context_only`, `baseline`,
//! `leaky`, `distant_future`, `latency<d>`.

use std::time::Instant;

use cmert::experiment::{Benchmark, Variant};

fn parse(name: &str) -> Variant {
    match name {
        "full" => Variant::Full,
        "refinement_only" => Variant::RefinementOnly,
        "context_only" => Variant::ContextOnly,
        "baseline" => Variant::Baseline,
        "leaky" => Variant::Leaky,
        "distant_future" => Variant::DistantFuture,
        other => match other.strip_prefix("latency").and_then(|d| d.parse().ok()) {
            Some(d) => Variant::Latency(d),
            None => panic!("unknown variant {other}"),
        },
    }
}

fn main() -> cmert::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let variant = parse(args.get(1).map(String::as_str).unwrap_or("full"));
    let seed: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0);
    let bench = Benchmark::default();
    let data = bench.data(seed)?;
    let start = Instant::now();
    let r = bench.run(variant, seed, &data)?;
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(" ");
    println!(
        "{} seed={seed} time={:.1}s final_total={:.3} mAP={:.2} acc={:.2} pf1={:.1} sf1={:.1} edit={:.1}",
        variant.name(),
        start.elapsed().as_secs_f64(),
        r.final_loss,
        r.report.per_frame_map,
        r.report.accuracy,
        r.report.pf1,
        r.report.sf1,
        r.report.edit
    );
    println!("  loss: {}", fmt(&r.loss_profile));
    println!("  acc : {}", fmt(&r.accuracy_profile));
    Ok(())
}
