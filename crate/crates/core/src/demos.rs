//! Demonstrations: odometry records, the projection metric, demonstration
//! selection, the planner-driven synthetic expert, and the replay buffer.

use std::io::{BufRead, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::envmodel::{wrap_angle, Environment};
use crate::error::{Error, Result};
use crate::planner::{run_mpc, MpcMode, Policy};
use crate::reward::{check_feature_names, feature_names, FeatureVector, RewardWeights, SCHEMA_VERSION};
use crate::vehicle::{PlannerState, SubPose, Transition, VehicleConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DemoConfig {
    /// Per-second discount of the projection metric.
    pub alpha0: f64,
    pub demo_threshold: f64,
    pub augment_k: usize,
    /// Odometry sample rate, Hz.
    pub odometry_rate: f64,
}

impl Default for DemoConfig {
    fn default() -> Self {
        Self {
            alpha0: 0.9,
            demo_threshold: 0.5,
            augment_k: 5,
            odometry_rate: 20.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OdometrySample {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
    pub v: f64,
}

const TIME_EPS: f64 = 1e-9;

/// A recorded (or synthesized) drive.
#[derive(Clone, Debug, PartialEq)]
pub struct OdometryRecord {
    samples: Vec<OdometrySample>,
}

impl OdometryRecord {
    pub fn new(samples: Vec<OdometrySample>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::Validation("odometry needs at least two samples".into()));
        }
        for w in samples.windows(2) {
            if !(w[1].t > w[0].t) {
                return Err(Error::Validation(format!(
                    "odometry time not strictly increasing at t={}",
                    w[1].t
                )));
            }
        }
        if let Some(s) = samples
            .iter()
            .find(|s| ![s.t, s.x, s.y, s.yaw, s.v].iter().all(|v| v.is_finite()))
        {
            return Err(Error::Validation(format!("non-finite odometry sample {s:?}")));
        }
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[OdometrySample] {
        &self.samples
    }

    pub fn start_time(&self) -> f64 {
        self.samples[0].t
    }

    pub fn end_time(&self) -> f64 {
        self.samples[self.samples.len() - 1].t
    }

    pub fn duration(&self) -> f64 {
        self.end_time() - self.start_time()
    }

    fn mean_spacing(&self) -> f64 {
        self.duration() / (self.samples.len() - 1) as f64
    }

    pub fn covers(&self, start: f64, end: f64) -> Result<()> {
        if start < self.start_time() - TIME_EPS || end > self.end_time() + TIME_EPS {
            return Err(Error::Coverage {
                have_start: self.start_time(),
                have_end: self.end_time(),
                need_start: start,
                need_end: end,
            });
        }
        Ok(())
    }

    /// Linear interpolation in position and speed, shortest arc in yaw.
    pub fn interpolate(&self, t: f64) -> Result<OdometrySample> {
        self.covers(t, t)?;
        let s = &self.samples;
        let t = t.clamp(self.start_time(), self.end_time());
        let hi = s.partition_point(|p| p.t < t).clamp(1, s.len() - 1);
        let (a, b) = (&s[hi - 1], &s[hi]);
        if b.t == t {
            return Ok(*b);
        }
        let u = ((t - a.t) / (b.t - a.t)).clamp(0.0, 1.0);
        Ok(OdometrySample {
            t,
            x: a.x + u * (b.x - a.x),
            y: a.y + u * (b.y - a.y),
            yaw: a.yaw + u * wrap_angle(b.yaw - a.yaw),
            v: a.v + u * (b.v - a.v),
        })
    }

    /// Planner start state at time `t`. Acceleration and wheel angle are
    /// estimated by central differences and rounded to the sampling lattice.
    pub fn reset_state(&self, t: f64, vehicle: &VehicleConfig) -> Result<PlannerState> {
        let p = self.interpolate(t)?;
        let h = self.mean_spacing();
        let lo = (t - h).max(self.start_time());
        let hi = (t + h).min(self.end_time());
        let (a, b) = (self.interpolate(lo)?, self.interpolate(hi)?);
        let span = hi - lo;
        let accel = vehicle.snap_accel((b.v - a.v) / span).clamp(-vehicle.a_max, vehicle.a_max);
        let yaw_rate = wrap_angle(b.yaw - a.yaw) / span;
        let wheel = if p.v > vehicle.creep_speed {
            (yaw_rate * vehicle.wheelbase / p.v).atan()
        } else {
            0.0
        };
        let wheel = vehicle
            .snap_wheel(wheel.clamp(-vehicle.wheel_angle_max, vehicle.wheel_angle_max))
            .clamp(-vehicle.wheel_angle_max, vehicle.wheel_angle_max);
        Ok(PlannerState {
            a_lon: if p.v > 0.0 || accel > 0.0 { accel } else { 0.0 },
            wheel_angle: wheel,
            time: t,
            ..PlannerState::new(p.x, p.y, p.yaw, p.v.max(0.0))
        })
    }

    /// Resamples a chain of transitions at `rate` Hz.
    pub fn from_transitions<'a>(
        transitions: impl IntoIterator<Item = &'a Transition>,
        rate: f64,
    ) -> Result<Self> {
        let mut poses: Vec<SubPose> = Vec::new();
        for tr in transitions {
            let skip = usize::from(!poses.is_empty());
            poses.extend(tr.sub_poses.iter().skip(skip).copied());
        }
        Self::resample(&poses, rate)
    }

    fn resample(poses: &[SubPose], rate: f64) -> Result<Self> {
        if poses.len() < 2 {
            return Err(Error::Validation("need at least two poses to resample".into()));
        }
        let dense = OdometryRecord::new(
            poses
                .iter()
                .map(|p| OdometrySample { t: p.t, x: p.x, y: p.y, yaw: p.yaw, v: p.v })
                .collect(),
        )?;
        let t0 = dense.start_time();
        let n = ((dense.end_time() - t0) * rate + TIME_EPS).floor() as usize;
        let samples = (0..=n)
            .map(|i| dense.interpolate(t0 + i as f64 / rate))
            .collect::<Result<Vec<_>>>()?;
        OdometryRecord::new(samples)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(f);
        self.write_csv_to(&mut w).map_err(|e| Error::io(path, e))
    }

    pub fn write_csv_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "# driveirl odometry schema {SCHEMA_VERSION}")?;
        writeln!(w, "t,x,y,yaw,v")?;
        for s in &self.samples {
            writeln!(w, "{:?},{:?},{:?},{:?},{:?}", s.t, s.x, s.y, s.yaw, s.v)?;
        }
        w.flush()
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv_from(f)
    }

    pub fn read_csv_from(r: impl std::io::Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(r);
        let header = rdr.headers()?.clone();
        if header.iter().collect::<Vec<_>>() != ["t", "x", "y", "yaw", "v"] {
            return Err(Error::Validation(format!(
                "odometry header must be t,x,y,yaw,v, got {:?}",
                header
            )));
        }
        let samples = rdr
            .deserialize::<OdometrySample>()
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Self::new(samples)
    }
}

/// Discounted per-sample error between odometry and a pose: Euclidean
/// position error plus the squared wrapped yaw error. The position term is
/// frame-invariant, so longitudinal/lateral decomposition does not change it.
#[inline]
fn pose_error(z: &OdometrySample, p: &SubPose) -> f64 {
    let dyaw = wrap_angle(z.yaw - p.yaw);
    (z.x - p.x).hypot(z.y - p.y) + dyaw * dyaw
}

/// Projection metric between odometry and a policy, trapezoid over the
/// policy's sub-poses with weight `alpha0^(t - t_start)`.
pub fn projection_distance(zeta: &OdometryRecord, policy: &Policy, alpha0: f64) -> Result<f64> {
    let t0 = policy.start_time();
    zeta.covers(t0, policy.end_time())?;
    let mut acc = 0.0;
    let mut prev: Option<(f64, f64)> = None;
    for (i, tr) in policy.transitions.iter().enumerate() {
        for p in tr.sub_poses.iter().skip(usize::from(i > 0)) {
            let z = zeta.interpolate(p.t)?;
            let g = alpha0.powf(p.t - t0) * pose_error(&z, p);
            if let Some((tp, gp)) = prev {
                acc += 0.5 * (p.t - tp) * (gp + g);
            }
            prev = Some((p.t, g));
        }
    }
    Ok(acc)
}

/// Up to `k` lowest-distance indices with `d <= threshold`, nearest first.
pub fn select_demonstrations(distances: &[f64], threshold: f64, k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..distances.len())
        .filter(|&i| distances[i] <= threshold)
        .collect();
    idx.sort_by(|&a, &b| distances[a].total_cmp(&distances[b]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

/// Same selection over policies whose distance has been filled in.
pub fn select_demonstration_policies(policies: &[Policy], threshold: f64, k: usize) -> Vec<&Policy> {
    let d: Vec<f64> = policies
        .iter()
        .map(|p| if p.is_valid() { p.projection_distance.unwrap_or(f64::INFINITY) } else { f64::INFINITY })
        .collect();
    select_demonstrations(&d, threshold, k)
        .into_iter()
        .map(|i| &policies[i])
        .collect()
}

/// Drives `cycles` free-mode MPC cycles under `hidden` weights and records
/// the executed trajectory at the configured odometry rate.
pub fn synthesize_expert(
    env: &Environment,
    hidden: &RewardWeights,
    cycles: usize,
    cfg: &RunConfig,
    seed: u64,
) -> Result<OdometryRecord> {
    let episode = run_mpc(
        env,
        hidden,
        cycles,
        MpcMode::Free,
        &cfg.planner,
        &cfg.vehicle,
        seed,
        |_| Ok(()),
    )?;
    let executed = episode.executed.iter().map(|t| t.as_ref());
    match &episode.failure {
        None => OdometryRecord::from_transitions(executed, cfg.demos.odometry_rate),
        Some(reason) => {
            let partial = if episode.executed.is_empty() {
                OdometryRecord::new(Vec::new()).unwrap_or(OdometryRecord { samples: Vec::new() })
            } else {
                OdometryRecord::from_transitions(executed, cfg.demos.odometry_rate)?
            };
            Err(Error::ExpertTruncated {
                reason: reason.clone(),
                partial: Box::new(partial),
            })
        }
    }
}

/// Number of reset-mode cycles the record supports with a full horizon.
pub fn max_replay_cycles(zeta: &OdometryRecord, cfg: &RunConfig) -> usize {
    let step = cfg.vehicle.duration;
    let span = zeta.duration() - cfg.planner.horizon as f64 * step;
    if span < -TIME_EPS {
        0
    } else {
        ((span + TIME_EPS) / step).floor() as usize + 1
    }
}

/// Fills `projection_distance` for every policy, in parallel.
pub fn annotate_distances(policies: &mut [Policy], zeta: &OdometryRecord, alpha0: f64) -> Result<()> {
    policies.par_iter_mut().try_for_each(|p| {
        p.projection_distance = Some(projection_distance(zeta, p, alpha0)?);
        Ok(())
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BufferCycle {
    pub cycle_id: usize,
    pub feature_integrals: Vec<FeatureVector>,
    pub projection_distances: Vec<f64>,
    pub demo_flags: Vec<bool>,
}

impl BufferCycle {
    pub fn demo_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.demo_flags
            .iter()
            .enumerate()
            .filter_map(|(i, &f)| f.then_some(i))
    }

    pub fn demo_count(&self) -> usize {
        self.demo_flags.iter().filter(|f| **f).count()
    }

    pub fn validate(&self, threshold: Option<f64>) -> Result<()> {
        let n = self.feature_integrals.len();
        if n == 0 || self.projection_distances.len() != n || self.demo_flags.len() != n {
            return Err(Error::Validation(format!(
                "cycle {}: inconsistent policy counts",
                self.cycle_id
            )));
        }
        if self.demo_count() == 0 {
            return Err(Error::Validation(format!("cycle {} has no demonstration", self.cycle_id)));
        }
        if let Some(th) = threshold {
            if self.demo_indices().any(|i| self.projection_distances[i] > th) {
                return Err(Error::Validation(format!(
                    "cycle {} flags a demonstration beyond the threshold",
                    self.cycle_id
                )));
            }
        }
        let finite = self
            .feature_integrals
            .iter()
            .flatten()
            .chain(&self.projection_distances)
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Validation(format!("cycle {} has non-finite entries", self.cycle_id)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ReplayBuffer {
    pub cycles: Vec<BufferCycle>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BufferHeader {
    schema: u32,
    kind: String,
    feature_names: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct BufferLine {
    schema: u32,
    #[serde(flatten)]
    cycle: BufferCycle,
}

const BUFFER_KIND: &str = "replay_buffer";

impl ReplayBuffer {
    pub fn len(&self) -> usize {
        self.cycles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cycles.is_empty()
    }

    /// Line-delimited JSON: a header line naming the schema and feature
    /// order, then one line per cycle.
    pub fn write_jsonl_to(&self, w: &mut impl Write) -> Result<()> {
        let header = BufferHeader {
            schema: SCHEMA_VERSION,
            kind: BUFFER_KIND.into(),
            feature_names: feature_names().into_iter().map(String::from).collect(),
        };
        let io = |e| Error::io("<buffer>", e);
        serde_json::to_writer(&mut *w, &header)?;
        w.write_all(b"\n").map_err(io)?;
        for c in &self.cycles {
            serde_json::to_writer(&mut *w, &BufferLine { schema: SCHEMA_VERSION, cycle: c.clone() })?;
            w.write_all(b"\n").map_err(io)?;
        }
        w.flush().map_err(io)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(f);
        self.write_jsonl_to(&mut w)
    }

    pub fn read_jsonl_from(r: impl BufRead) -> Result<Self> {
        let mut lines = r.lines();
        let first = lines
            .next()
            .ok_or_else(|| Error::Validation("empty replay buffer file".into()))?
            .map_err(|e| Error::io("<buffer>", e))?;
        let header: BufferHeader = serde_json::from_str(&first)?;
        if header.schema != SCHEMA_VERSION || header.kind != BUFFER_KIND {
            return Err(Error::Validation("not a schema-1 replay buffer".into()));
        }
        check_feature_names(&header.feature_names)?;
        let mut cycles = Vec::new();
        for line in lines {
            let line = line.map_err(|e| Error::io("<buffer>", e))?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: BufferLine = serde_json::from_str(&line)?;
            if parsed.schema != SCHEMA_VERSION {
                return Err(Error::Validation(format!("cycle line with schema {}", parsed.schema)));
            }
            parsed.cycle.validate(None)?;
            cycles.push(parsed.cycle);
        }
        Ok(Self { cycles })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_jsonl_from(std::io::BufReader::new(f))
    }
}

/// Replays `zeta` in reset-to-odometry mode under `theta_init` and stores
/// every cycle that has at least one demonstration.
pub fn build_replay_buffer(
    env: &Environment,
    zeta: &OdometryRecord,
    theta_init: &RewardWeights,
    cycles: usize,
    cfg: &RunConfig,
) -> Result<ReplayBuffer> {
    let cycles = cycles.min(max_replay_cycles(zeta, cfg));
    if cycles == 0 {
        return Err(Error::Coverage {
            have_start: zeta.start_time(),
            have_end: zeta.end_time(),
            need_start: zeta.start_time(),
            need_end: zeta.start_time() + cfg.planner.horizon as f64 * cfg.vehicle.duration,
        });
    }
    let mut buffer = ReplayBuffer::default();
    let demos = &cfg.demos;
    run_mpc(
        env,
        theta_init,
        cycles,
        MpcMode::Reset(zeta),
        &cfg.planner,
        &cfg.vehicle,
        cfg.irl.seed,
        |out| {
            let distances = out
                .outcome
                .policies
                .par_iter()
                .map(|p| projection_distance(zeta, p, demos.alpha0))
                .collect::<Result<Vec<f64>>>()?;
            let chosen = select_demonstrations(&distances, demos.demo_threshold, demos.augment_k);
            if chosen.is_empty() {
                return Ok(());
            }
            let mut flags = vec![false; distances.len()];
            for i in chosen {
                flags[i] = true;
            }
            buffer.cycles.push(BufferCycle {
                cycle_id: out.cycle,
                feature_integrals: out.outcome.policies.iter().map(|p| p.feature_integral).collect(),
                projection_distances: distances,
                demo_flags: flags,
            });
            Ok(())
        },
    )?;
    if buffer.is_empty() {
        return Err(Error::EmptyBuffer);
    }
    Ok(buffer)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envmodel::{generate_track, SegmentKind};
    use crate::planner::{plan_cycle, PlannerConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn env() -> Environment {
        Environment::new(generate_track(SegmentKind::Curvy, 200.0, 5).unwrap(), 0.25).unwrap()
    }

    fn some_policy(env: &Environment, steps: usize, seed: u64) -> Policy {
        let cfg = PlannerConfig { horizon: steps, prune_cap: 150, ..Default::default() };
        let s0 = PlannerState::on_track(&env.track, 20.0, 5.0);
        let out = plan_cycle(&s0, &RewardWeights::expert(), env, &cfg, &VehicleConfig::default(), 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        out.policies[rng.gen_range(0..out.policies.len())].clone()
    }

    fn odometry_from_poses(poses: &[SubPose], dx: f64, dy: f64) -> OdometryRecord {
        OdometryRecord::new(
            poses
                .iter()
                .map(|p| OdometrySample { t: p.t, x: p.x + dx, y: p.y + dy, yaw: p.yaw, v: p.v })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn self_distance_is_zero() {
        let e = env();
        let p = some_policy(&e, 4, 1);
        let zeta = odometry_from_poses(&p.poses(), 0.0, 0.0);
        assert_eq!(projection_distance(&zeta, &p, 0.9).unwrap(), 0.0);
    }

    #[test]
    fn constant_lateral_offset_closed_form() {
        let e = env();
        let p = some_policy(&e, 3, 2);
        let poses = p.poses();
        // Shift every pose by 1 m perpendicular to its own heading.
        let zeta = OdometryRecord::new(
            poses
                .iter()
                .map(|q| OdometrySample {
                    t: q.t,
                    x: q.x - q.yaw.sin(),
                    y: q.y + q.yaw.cos(),
                    yaw: q.yaw,
                    v: q.v,
                })
                .collect(),
        )
        .unwrap();
        let d = projection_distance(&zeta, &p, 1.0).unwrap();
        let span = p.end_time() - p.start_time();
        assert!((d - span).abs() < 1e-9, "{d} vs {span}");
    }

    #[test]
    fn mirrored_pairs_have_equal_distance() {
        let e = Environment::new(generate_track(SegmentKind::Straight, 200.0, 5).unwrap(), 0.25).unwrap();
        let p = some_policy(&e, 3, 3);
        let zeta = odometry_from_poses(&p.poses(), 0.4, 0.3);
        let d = projection_distance(&zeta, &p, 0.9).unwrap();
        // Mirror both across the (straight) centerline y = 0.
        let mut m = p.clone();
        m.transitions = p
            .transitions
            .iter()
            .map(|t| {
                let mut t = (**t).clone();
                for s in &mut t.sub_poses {
                    s.y = -s.y;
                    s.yaw = -s.yaw;
                }
                Arc::new(t)
            })
            .collect();
        let zm = OdometryRecord::new(
            zeta.samples()
                .iter()
                .map(|s| OdometrySample { y: -s.y, yaw: -s.yaw, ..*s })
                .collect(),
        )
        .unwrap();
        let dm = projection_distance(&zm, &m, 0.9).unwrap();
        assert!((d - dm).abs() < 1e-12);
    }

    #[test]
    fn coverage_error() {
        let e = env();
        let p = some_policy(&e, 3, 4);
        let poses = p.poses();
        let zeta = odometry_from_poses(&poses[..poses.len() / 2], 0.0, 0.0);
        assert!(matches!(
            projection_distance(&zeta, &p, 0.9),
            Err(Error::Coverage { .. })
        ));
    }

    #[test]
    fn yaw_interpolation_takes_short_arc() {
        let z = OdometryRecord::new(vec![
            OdometrySample { t: 0.0, x: 0.0, y: 0.0, yaw: PI - 0.1, v: 1.0 },
            OdometrySample { t: 1.0, x: 1.0, y: 0.0, yaw: -PI + 0.1, v: 1.0 },
        ])
        .unwrap();
        let m = z.interpolate(0.5).unwrap();
        assert!((wrap_angle(m.yaw) - PI).abs() < 1e-12 || (wrap_angle(m.yaw) + PI).abs() < 1e-12);
    }

    #[test]
    fn selection_examples() {
        assert_eq!(select_demonstrations(&[0.0], 0.5, 1), vec![0]);
        assert!(select_demonstrations(&[0.6, 0.9, 3.0], 0.5, 3).is_empty());
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let d: Vec<f64> = (0..100).map(|_| rng.gen_range(0.0..2.0)).collect();
        let got = select_demonstrations(&d, 0.5, 5);
        let mut oracle: Vec<(f64, usize)> = d.iter().cloned().zip(0..).filter(|(x, _)| *x <= 0.5).collect();
        oracle.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let oracle: Vec<usize> = oracle.into_iter().take(5).map(|x| x.1).collect();
        assert_eq!(got, oracle);
    }

    #[test]
    fn odometry_csv_round_trip() {
        let e = env();
        let p = some_policy(&e, 2, 6);
        let z = OdometryRecord::from_transitions(p.transitions.iter().map(|t| t.as_ref()), 20.0).unwrap();
        let mut buf = Vec::new();
        z.write_csv_to(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().nth(1), Some("t,x,y,yaw,v"));
        let back = OdometryRecord::read_csv_from(&buf[..]).unwrap();
        assert_eq!(back, z);
        assert_eq!(z.samples().len(), 41);
    }

    #[test]
    fn odometry_rejects_bad_input() {
        let bad = "t,x,y,yaw,v\n0,0,0,0,1\n0,1,0,0,1\n";
        assert!(OdometryRecord::read_csv_from(bad.as_bytes()).is_err());
        let bad = "t,x,y,v,yaw\n0,0,0,0,1\n1,1,0,0,1\n";
        assert!(OdometryRecord::read_csv_from(bad.as_bytes()).is_err());
    }

    #[test]
    fn reset_state_recovers_boundary_state() {
        let e = env();
        let p = some_policy(&e, 4, 7);
        let z = OdometryRecord::from_transitions(p.transitions.iter().map(|t| t.as_ref()), 20.0).unwrap();
        let cfg = VehicleConfig::default();
        for k in 0..=4 {
            let t = k as f64;
            let s = z.reset_state(t, &cfg).unwrap();
            let pose = if k == 0 { p.transitions[0].sub_poses[0] } else { *p.transitions[k - 1].sub_poses.last().unwrap() };
            assert!((s.x - pose.x).abs() < 1e-9 && (s.y - pose.y).abs() < 1e-9);
            assert_eq!(s.a_lon, 0.0);
            if k > 0 {
                assert_eq!(s.v, p.actions[k - 1].terminal_speed);
                if k < 4 {
                    assert_eq!(s.wheel_angle, p.actions[k - 1].terminal_wheel_angle, "k={k}");
                }
            }
        }
    }

    #[test]
    fn buffer_round_trip() {
        let e = env();
        let cfg = PlannerConfig { horizon: 2, prune_cap: 100, ..Default::default() };
        let s0 = PlannerState::on_track(&e.track, 20.0, 5.0);
        let out = plan_cycle(&s0, &RewardWeights::expert(), &e, &cfg, &VehicleConfig::default(), 0).unwrap();
        let n = out.policies.len();
        let buf = ReplayBuffer {
            cycles: vec![BufferCycle {
                cycle_id: 3,
                feature_integrals: out.policies.iter().map(|p| p.feature_integral).collect(),
                projection_distances: (0..n).map(|i| i as f64 * 0.1).collect(),
                demo_flags: (0..n).map(|i| i < 2).collect(),
            }],
        };
        let mut bytes = Vec::new();
        buf.write_jsonl_to(&mut bytes).unwrap();
        let back = ReplayBuffer::read_jsonl_from(&bytes[..]).unwrap();
        assert_eq!(back, buf);
    }
}
