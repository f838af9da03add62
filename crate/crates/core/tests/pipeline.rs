use driveirl::config::RunConfig;
use driveirl::demos::{build_replay_buffer, max_replay_cycles, synthesize_expert};
use driveirl::envmodel::{generate_track, Environment, SegmentKind};
use driveirl::pipeline::evaluate_driving_style;
use driveirl::reward::RewardWeights;
use driveirl::Error;

fn straight() -> Environment {
    Environment::new(generate_track(SegmentKind::Straight, 80.0, 7).unwrap(), 0.25).unwrap()
}

#[test]
fn hidden_weights_find_a_demo_in_every_straight_cycle() {
    let cfg = RunConfig::default();
    let e = straight();
    let hidden = RewardWeights::expert();
    let zeta = synthesize_expert(&e, &hidden, 8, &cfg, 0).unwrap();
    assert!((zeta.duration() - 8.0).abs() < 1e-9);

    let buffer = build_replay_buffer(&e, &zeta, &hidden, usize::MAX, &cfg).unwrap();
    assert_eq!(buffer.len(), max_replay_cycles(&zeta, &cfg));
    for c in &buffer.cycles {
        c.validate(Some(cfg.demos.demo_threshold)).unwrap();
        assert!((1..=cfg.demos.augment_k).contains(&c.demo_count()));
        let best = c.projection_distances.iter().cloned().fold(f64::INFINITY, f64::min);
        let flagged_best = c.demo_indices().map(|i| c.projection_distances[i]).fold(f64::INFINITY, f64::min);
        assert_eq!(best, flagged_best);
    }

    let report = evaluate_driving_style(&e, &zeta, &hidden, buffer.len(), &cfg).unwrap();
    assert_eq!(report.rows.len(), buffer.len());
    assert!(report.mean_distance <= cfg.demos.demo_threshold);

    let too_many = max_replay_cycles(&zeta, &cfg) + 1;
    assert!(matches!(
        evaluate_driving_style(&e, &zeta, &hidden, too_many, &cfg),
        Err(Error::Coverage { .. })
    ));
}
