//! End-to-end experiment steps shared by the CLI and the acceptance suite.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::demos::{build_replay_buffer, max_replay_cycles, projection_distance, OdometryRecord, ReplayBuffer};
use crate::envmodel::{Environment, SegmentKind};
use crate::error::{Error, Result};
use crate::irl::{policy_distribution, train, TrainingReport};
use crate::planner::{run_mpc, MpcMode};
use crate::reward::RewardWeights;

/// Free-mode cycles that keep the whole horizon on the track when driving
/// at cruise speed from the configured start.
pub fn expert_cycles_for(env: &Environment, cfg: &RunConfig) -> usize {
    let cruise = match env.track.kind {
        SegmentKind::Straight => cfg.track.cruise_speed_straight,
        SegmentKind::Curvy => cfg.track.cruise_speed_curvy,
    };
    let usable = env.track.length - cfg.planner.start_station - 10.0;
    let steps = (usable / (cruise * cfg.vehicle.duration)).floor() as usize;
    steps.saturating_sub(cfg.planner.horizon).max(1)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StyleRow {
    pub cycle: usize,
    pub policy_count: usize,
    /// Projection distance of the policy the planner selects.
    pub optimal_distance: f64,
    pub expected_value: f64,
    pub expected_distance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StyleReport {
    pub rows: Vec<StyleRow>,
    pub mean_distance: f64,
    pub std_distance: f64,
    pub mean_expected_distance: f64,
}

impl StyleReport {
    fn from_rows(rows: Vec<StyleRow>) -> Self {
        let n = rows.len().max(1) as f64;
        let mean = rows.iter().map(|r| r.optimal_distance).sum::<f64>() / n;
        let var = rows.iter().map(|r| (r.optimal_distance - mean).powi(2)).sum::<f64>() / n;
        let med = rows.iter().map(|r| r.expected_distance).sum::<f64>() / n;
        Self {
            rows,
            mean_distance: mean,
            std_distance: var.sqrt(),
            mean_expected_distance: med,
        }
    }

    pub fn write_csv_to(&self, w: &mut impl std::io::Write) -> std::io::Result<()> {
        writeln!(w, "# driveirl evaluation schema {}", crate::reward::SCHEMA_VERSION)?;
        writeln!(w, "cycle,policy_count,optimal_distance,expected_value,expected_distance")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{:?},{:?},{:?}",
                r.cycle, r.policy_count, r.optimal_distance, r.expected_value, r.expected_distance
            )?;
        }
        w.flush()
    }
}

/// Replays `zeta` in reset mode under `weights` and measures how closely the
/// planner's choice and its policy distribution follow the record.
pub fn evaluate_driving_style(
    env: &Environment,
    zeta: &OdometryRecord,
    weights: &RewardWeights,
    cycles: usize,
    cfg: &RunConfig,
) -> Result<StyleReport> {
    let available = max_replay_cycles(zeta, cfg);
    if available == 0 || cycles > available {
        let need = cycles.max(1) - 1 + cfg.planner.horizon;
        return Err(Error::Coverage {
            have_start: zeta.start_time(),
            have_end: zeta.end_time(),
            need_start: zeta.start_time(),
            need_end: zeta.start_time() + need as f64 * cfg.vehicle.duration,
        });
    }
    let mut rows = Vec::with_capacity(cycles);
    let episode = run_mpc(
        env,
        weights,
        cycles,
        MpcMode::Reset(zeta),
        &cfg.planner,
        &cfg.vehicle,
        cfg.irl.seed,
        |out| {
            let policies = &out.outcome.policies;
            let d = policies
                .par_iter()
                .map(|p| projection_distance(zeta, p, cfg.demos.alpha0))
                .collect::<Result<Vec<f64>>>()?;
            let feats: Vec<_> = policies.iter().map(|p| p.feature_integral).collect();
            let dist = policy_distribution(&feats, weights)?;
            rows.push(StyleRow {
                cycle: out.cycle,
                policy_count: policies.len(),
                optimal_distance: d[out.selected],
                expected_value: dist.probabilities.iter().zip(&dist.values).map(|(p, v)| p * v).sum(),
                expected_distance: dist.probabilities.iter().zip(&d).map(|(p, d)| p * d).sum(),
            });
            Ok(())
        },
    )?;
    if let Some(reason) = episode.failure {
        return Err(Error::PlanningFailure(reason));
    }
    Ok(StyleReport::from_rows(rows))
}

/// Builds the buffer under `theta_init` and trains. With refresh rounds
/// enabled, the buffer is rebuilt under the latest weights and training
/// continues from them; epochs are numbered across rounds.
pub fn build_and_train(
    env: &Environment,
    zeta: &OdometryRecord,
    theta_init: &RewardWeights,
    cycles: usize,
    cfg: &RunConfig,
) -> Result<(ReplayBuffer, TrainingReport)> {
    let mut buffer = build_replay_buffer(env, zeta, theta_init, cycles, cfg)?;
    let mut report = train(&buffer, theta_init, &cfg.irl)?;
    for _ in 0..cfg.irl.refresh_rounds {
        let theta = report.final_theta;
        buffer = build_replay_buffer(env, zeta, &theta, cycles, cfg)?;
        let next = train(&buffer, &theta, &cfg.irl)?;
        let offset = report.epochs.len();
        report.epochs.extend(next.epochs.into_iter().map(|mut e| {
            e.epoch += offset;
            e
        }));
        report.final_theta = next.final_theta;
    }
    Ok((buffer, report))
}
