//! Weight-recovery run on one segment: synthesize an expert drive, learn
//! from a random start, and compare driving styles on a held-out track.
//!
//! cargo run --release --example weight_recovery -- curvy 300

use std::time::Instant;

use driveirl::config::RunConfig;
use driveirl::demos::{max_replay_cycles, synthesize_expert};
use driveirl::envmodel::{generate_track, Environment, SegmentKind};
use driveirl::pipeline::{build_and_train, evaluate_driving_style, expert_cycles_for};
use driveirl::reward::RewardWeights;

fn main() -> driveirl::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let kind: SegmentKind = args.get(1).map_or("straight", |s| s.as_str()).parse()?;
    let length: f64 = match args.get(2) {
        Some(s) => s
            .parse()
            .map_err(|_| driveirl::Error::InvalidArgument(format!("bad length '{s}'")))?,
        None => 200.0,
    };
    let cfg = RunConfig::default();
    let hidden = RewardWeights::expert();
    let init = RewardWeights::random(1);

    let t = Instant::now();
    let env = Environment::new(generate_track(kind, length, 7)?, cfg.track.resolution)?;
    let cycles = expert_cycles_for(&env, &cfg);
    let zeta = synthesize_expert(&env, &hidden, cycles, &cfg, 0)?;
    println!("expert: {cycles} cycles, {:.1} s of odometry in {:.1?}", zeta.duration(), t.elapsed());

    let t = Instant::now();
    let (buffer, report) = build_and_train(&env, &zeta, &init, usize::MAX, &cfg)?;
    println!(
        "buffer: {} cycles of {}; trained in {:.1?}",
        buffer.len(),
        max_replay_cycles(&zeta, &cfg),
        t.elapsed()
    );
    let (a, b) = (report.initial, report.final_metrics());
    println!("evd {:.4} -> {:.4}", a.evd, b.evd);
    println!("ed  {:.4} -> {:.4} ({:.0}%)", a.ed, b.ed, 100.0 * b.ed / a.ed);
    println!("learned {:?}", report.final_theta.theta());

    let held = Environment::new(generate_track(kind, length, 8)?, cfg.track.resolution)?;
    let zeta_h = synthesize_expert(&held, &hidden, expert_cycles_for(&held, &cfg), &cfg, 0)?;
    let n = max_replay_cycles(&zeta_h, &cfg);
    for (name, w) in [("random", &init), ("learned", &report.final_theta), ("expert", &hidden)] {
        let r = evaluate_driving_style(&held, &zeta_h, w, n, &cfg)?;
        println!("{name:8} mean d {:.4} std {:.4} ed {:.4}", r.mean_distance, r.std_distance, r.mean_expected_distance);
    }
    Ok(())
}
