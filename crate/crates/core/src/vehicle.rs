//! Kinematic bicycle transition model.
//!
//! Actions are polynomial profiles over one transition: a quintic velocity
//! profile and a cubic wheel-angle profile. Both start from the parent's
//! velocity, acceleration and wheel angle and end at a sampled target with
//! zero acceleration and zero steering rate, so every state on a transition
//! boundary has `a_lon == 0` and a wheel angle on the steering lattice.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::envmodel::{wrap_angle, Environment, FeatureMap, Track};
use crate::reward::{Feature, FeatureVector, K};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VehicleConfig {
    pub wheelbase: f64,
    pub wheel_angle_max: f64,
    pub a_max: f64,
    pub a_lat_max: f64,
    pub v_max: f64,
    /// Speeds strictly between zero and this count as creeping.
    pub creep_speed: f64,
    /// Transition duration, seconds.
    pub duration: f64,
    /// Integration sub-steps per transition.
    pub substeps: usize,
    /// Terminal speed offsets relative to the parent speed, m/s.
    pub speed_offsets: Vec<f64>,
    /// Terminal wheel-angle offsets relative to the parent wheel angle, rad.
    pub wheel_offsets: Vec<f64>,
    /// Terminal wheel angles are rounded to multiples of this step (0 disables).
    pub wheel_lattice: f64,
    /// Accelerations estimated from odometry are rounded to this step (0 disables).
    pub accel_lattice: f64,
    /// Uniform jitter on terminal speeds as a fraction of 0.5 m/s (0 = exact grid).
    pub jitter: f64,
}

impl Default for VehicleConfig {
    fn default() -> Self {
        Self {
            wheelbase: 2.8,
            wheel_angle_max: 0.45,
            a_max: 4.0,
            a_lat_max: 4.0,
            v_max: 20.0,
            creep_speed: 0.5,
            duration: 1.0,
            substeps: 20,
            speed_offsets: vec![-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0],
            wheel_offsets: vec![-0.1, -0.06, -0.03, -0.01, 0.0, 0.01, 0.03, 0.06, 0.1],
            wheel_lattice: 0.01,
            accel_lattice: 0.25,
            jitter: 0.0,
        }
    }
}

impl VehicleConfig {
    pub fn snap_wheel(&self, delta: f64) -> f64 {
        if self.wheel_lattice > 0.0 {
            (delta / self.wheel_lattice).round() * self.wheel_lattice
        } else {
            delta
        }
    }

    pub fn snap_accel(&self, a: f64) -> f64 {
        if self.accel_lattice > 0.0 {
            (a / self.accel_lattice).round() * self.accel_lattice
        } else {
            a
        }
    }
}

/// Link from a graph state to its parent node and the action taken there.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParentLink {
    pub layer: usize,
    pub index: usize,
    pub action: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlannerState {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
    pub v: f64,
    pub a_lon: f64,
    pub wheel_angle: f64,
    pub t_index: usize,
    /// Absolute time, seconds.
    pub time: f64,
    /// Accumulated discounted reward within the current planning cycle.
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub parent: Option<ParentLink>,
}

impl PlannerState {
    pub fn new(x: f64, y: f64, yaw: f64, v: f64) -> Self {
        Self {
            x,
            y,
            yaw,
            v,
            a_lon: 0.0,
            wheel_angle: 0.0,
            t_index: 0,
            time: 0.0,
            value: 0.0,
            parent: None,
        }
    }

    /// State on the centerline at arclength `s`, aligned with the road.
    pub fn on_track(track: &Track, s: f64, v: f64) -> Self {
        let p = track.point_at(s);
        Self::new(p[0], p[1], track.heading_at(s), v)
    }

    pub fn is_valid(&self, cfg: &VehicleConfig) -> bool {
        self.v >= 0.0
            && self.v.is_finite()
            && self.wheel_angle.abs() <= cfg.wheel_angle_max + 1e-12
            && self.a_lon.abs() <= cfg.a_max + 1e-12
            && self.value.is_finite()
            && self.x.is_finite()
            && self.y.is_finite()
            && self.yaw.is_finite()
    }

    /// Root copy: same kinematics, fresh value and no parent.
    pub fn as_root(&self) -> Self {
        Self {
            t_index: 0,
            value: 0.0,
            parent: None,
            ..*self
        }
    }
}

/// Polynomial action over `[0, duration]`, coefficients in ascending powers of τ.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionProfile {
    pub duration: f64,
    pub lon_coeffs: [f64; 6],
    pub lat_coeffs: [f64; 4],
    pub terminal_speed: f64,
    pub terminal_wheel_angle: f64,
}

impl ActionProfile {
    /// Quintic velocity with `v(0)=v0, a(0)=a0, j(0)=0` and
    /// `v(T)=v_end, a(T)=0, j(T)=0`; cubic wheel angle with zero end rates.
    pub fn new(v0: f64, a0: f64, v_end: f64, delta0: f64, delta_end: f64, duration: f64) -> Self {
        let t = duration;
        let d = v_end - v0 - a0 * t;
        // Scaled unknowns p = c3·T³, q = c4·T⁴, r = c5·T⁵.
        let p = 10.0 * d + 4.0 * a0 * t;
        let q = -15.0 * d - 7.0 * a0 * t;
        let r = 6.0 * d + 3.0 * a0 * t;
        let lon_coeffs = [v0, a0, 0.0, p / t.powi(3), q / t.powi(4), r / t.powi(5)];
        let dd = delta_end - delta0;
        let lat_coeffs = [delta0, 0.0, 3.0 * dd / (t * t), -2.0 * dd / (t * t * t)];
        Self {
            duration,
            lon_coeffs,
            lat_coeffs,
            terminal_speed: v_end,
            terminal_wheel_angle: delta_end,
        }
    }

    pub fn hold(v0: f64, delta0: f64, duration: f64) -> Self {
        Self::new(v0, 0.0, v0, delta0, delta0, duration)
    }

    /// `(v, a, jerk)` at τ.
    #[inline]
    pub fn longitudinal(&self, tau: f64) -> (f64, f64, f64) {
        let c = &self.lon_coeffs;
        let v = c[0] + tau * (c[1] + tau * (c[2] + tau * (c[3] + tau * (c[4] + tau * c[5]))));
        let a = c[1] + tau * (2.0 * c[2] + tau * (3.0 * c[3] + tau * (4.0 * c[4] + tau * 5.0 * c[5])));
        let j = 2.0 * c[2] + tau * (6.0 * c[3] + tau * (12.0 * c[4] + tau * 20.0 * c[5]));
        (v, a, j)
    }

    /// `(δ, dδ/dτ)` at τ.
    #[inline]
    pub fn lateral(&self, tau: f64) -> (f64, f64) {
        let c = &self.lat_coeffs;
        let d = c[0] + tau * (c[1] + tau * (c[2] + tau * c[3]));
        let dd = c[1] + tau * (2.0 * c[2] + tau * 3.0 * c[3]);
        (d, dd)
    }

    /// Checks `v ≥ 0` and the wheel-angle bound at `samples + 1` points.
    pub fn is_feasible(&self, cfg: &VehicleConfig, samples: usize) -> bool {
        (0..=samples).all(|k| {
            let tau = self.duration * k as f64 / samples as f64;
            let (v, _, _) = self.longitudinal(tau);
            let (d, _) = self.lateral(tau);
            v >= -1e-9 && d.abs() <= cfg.wheel_angle_max + 1e-12
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Valid,
    Collision,
    OffMap,
    ComfortViolation,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubPose {
    /// Absolute time, seconds.
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
    pub v: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub sub_poses: Vec<SubPose>,
    /// Undiscounted per-feature integrals over this transition. The
    /// end-direction entry is the terminal deviation, not a time integral.
    pub raw_feature_integrand: FeatureVector,
    pub label: Label,
    /// Station of the final sub-pose (nearest centerline arclength).
    pub end_station: f64,
}

/// Samples the action grid for `state`. Terminal speeds are
/// `max(0, v + offset)`, terminal wheel angles `clamp(δ + offset)` snapped to
/// the steering lattice; duplicates and infeasible profiles are dropped.
pub fn sample_actions(state: &PlannerState, cfg: &VehicleConfig, seed: u64) -> Vec<ActionProfile> {
    let mut rng = (cfg.jitter > 0.0).then(|| ChaCha8Rng::seed_from_u64(seed));
    let mut out = Vec::with_capacity(cfg.speed_offsets.len() * cfg.wheel_offsets.len());
    let mut speeds: Vec<f64> = Vec::with_capacity(cfg.speed_offsets.len());
    for off in &cfg.speed_offsets {
        let mut v_end = state.v + off;
        if let Some(rng) = rng.as_mut() {
            v_end += cfg.jitter * 0.5 * rng.gen_range(-1.0..=1.0);
        }
        let v_end = v_end.max(0.0);
        if v_end > cfg.v_max || speeds.contains(&v_end) {
            continue;
        }
        speeds.push(v_end);
    }
    let mut wheels: Vec<f64> = Vec::with_capacity(cfg.wheel_offsets.len());
    for off in &cfg.wheel_offsets {
        let d = cfg.snap_wheel(
            (state.wheel_angle + off).clamp(-cfg.wheel_angle_max, cfg.wheel_angle_max),
        );
        let d = d.clamp(-cfg.wheel_angle_max, cfg.wheel_angle_max);
        if !wheels.contains(&d) {
            wheels.push(d);
        }
    }
    for &v_end in &speeds {
        for &d_end in &wheels {
            let a = ActionProfile::new(state.v, state.a_lon, v_end, state.wheel_angle, d_end, cfg.duration);
            if a.is_feasible(cfg, cfg.substeps.max(8)) {
                out.push(a);
            }
        }
    }
    if out.is_empty() {
        // Never return an empty set: brake to standstill on the current wheel angle.
        let stop = ActionProfile::new(
            state.v,
            state.a_lon,
            0.0,
            state.wheel_angle,
            state.wheel_angle,
            cfg.duration,
        );
        out.push(stop);
    }
    out
}

/// Per-sample quantities kept while integrating one transition.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct Sample {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
    pub v: f64,
    a_lat: f64,
}

impl Sample {
    pub fn pose(&self) -> SubPose {
        SubPose {
            t: self.t,
            x: self.x,
            y: self.y,
            yaw: self.yaw,
            v: self.v,
        }
    }
}

pub(crate) struct Rollout {
    pub state: PlannerState,
    pub integrand: FeatureVector,
    pub label: Label,
    pub end_station: f64,
}

/// Integrates `action` from `state`, filling `samples`. Stops at the first
/// sub-pose that violates a label rule.
pub(crate) fn rollout(
    state: &PlannerState,
    action: &ActionProfile,
    map: &FeatureMap,
    track: &Track,
    cfg: &VehicleConfig,
    samples: &mut Vec<Sample>,
) -> Rollout {
    let n = cfg.substeps.max(1);
    let dt = action.duration / n as f64;
    let inv_l = 1.0 / cfg.wheelbase;
    samples.clear();

    let mut integrand = [0.0; K];
    let mut prev_g = [0.0; K];
    let mut label = Label::Valid;
    let mut end_station = 0.0;
    let (mut x, mut y, mut yaw) = (state.x, state.y, state.yaw);
    let (mut prev_vc, mut prev_vs, mut prev_w) = (0.0, 0.0, 0.0);

    for k in 0..=n {
        let tau = k as f64 * dt;
        let (mut v, mut a, j) = action.longitudinal(tau);
        let (mut d, _) = action.lateral(tau);
        if k == n {
            v = action.terminal_speed;
            a = 0.0;
            d = action.terminal_wheel_angle;
        }
        let v = v.max(0.0);
        let w = v * d.tan() * inv_l;
        if k > 0 {
            yaw += 0.5 * dt * (prev_w + w);
            x += 0.5 * dt * (prev_vc + v * yaw.cos());
            y += 0.5 * dt * (prev_vs + v * yaw.sin());
        }
        let (vc, vs) = (v * yaw.cos(), v * yaw.sin());
        let Some(lk) = map.lookup(x, y, yaw) else {
            label = Label::OffMap;
            break;
        };
        let a_lat = v * w;
        if lk.features.curb_proximity() >= 1.0 - 1e-12 {
            label = Label::Collision;
            break;
        }
        if a.abs() > cfg.a_max + 1e-9 || a_lat.abs() > cfg.a_lat_max + 1e-9 {
            label = Label::ComfortViolation;
            break;
        }
        let mut g = [0.0; K];
        g[Feature::VTargetDev.index()] = (v - track.target_speed_at(lk.station)).abs();
        g[Feature::AccelLon.index()] = a.abs();
        g[Feature::JerkLon.index()] = j.abs();
        g[Feature::AccelLat.index()] = a_lat.abs();
        g[Feature::Creeping.index()] = if v > 0.0 && v < cfg.creep_speed { 1.0 } else { 0.0 };
        g[Feature::LaneCenter.index()] = lk.features.lane_center();
        g[Feature::CurbProximity.index()] = lk.features.curb_proximity();
        g[Feature::LanePotential.index()] = lk.features.lane_potential();
        g[Feature::DirectionDev.index()] = lk.features.direction_dev();
        g[Feature::ConflictArea.index()] = lk.features.conflict_area();
        if k > 0 {
            for i in 0..K {
                integrand[i] += 0.5 * dt * (prev_g[i] + g[i]);
            }
        }
        prev_g = g;
        prev_vc = vc;
        prev_vs = vs;
        prev_w = w;
        end_station = lk.station;
        samples.push(Sample {
            t: state.time + tau,
            x,
            y,
            yaw,
            v,
            a_lat,
        });
    }

    if label == Label::Valid {
        integrand[Feature::JerkLat.index()] = lateral_jerk_integral(samples, dt);
        let last = samples[n];
        integrand[Feature::EndDirection.index()] = end_direction_value(last.yaw, track.heading_at(end_station));
    }

    let last = samples.last().copied().unwrap_or(Sample {
        t: state.time,
        x: state.x,
        y: state.y,
        yaw: state.yaw,
        v: state.v,
        a_lat: 0.0,
    });
    let next = PlannerState {
        x: last.x,
        y: last.y,
        yaw: last.yaw,
        v: action.terminal_speed,
        a_lon: 0.0,
        wheel_angle: action.terminal_wheel_angle,
        t_index: state.t_index + 1,
        time: state.time + action.duration,
        value: state.value,
        parent: None,
    };
    Rollout {
        state: next,
        integrand,
        label,
        end_station,
    }
}

/// Trapezoidal integral of |d a_lat / dt| with the derivative taken by
/// finite differences over the sub-samples (central inside, one-sided at the ends).
fn lateral_jerk_integral(samples: &[Sample], dt: f64) -> f64 {
    let n = samples.len();
    if n < 2 {
        return 0.0;
    }
    let deriv = |k: usize| -> f64 {
        if k == 0 {
            (samples[1].a_lat - samples[0].a_lat) / dt
        } else if k == n - 1 {
            (samples[n - 1].a_lat - samples[n - 2].a_lat) / dt
        } else {
            (samples[k + 1].a_lat - samples[k - 1].a_lat) / (2.0 * dt)
        }
    };
    let mut acc = 0.0;
    let mut prev = deriv(0).abs();
    for k in 1..n {
        let cur = deriv(k).abs();
        acc += 0.5 * dt * (prev + cur);
        prev = cur;
    }
    acc
}

#[inline]
fn end_direction_value(yaw: f64, tangent: f64) -> f64 {
    wrap_angle(yaw - tangent).abs() / PI
}

/// Integrates `action` from `state` through the environment. The successor's
/// value is left unchanged; the planner adds the discounted reward.
pub fn integrate(
    state: &PlannerState,
    action: &ActionProfile,
    env: &Environment,
    cfg: &VehicleConfig,
) -> (PlannerState, Transition) {
    let mut samples = Vec::with_capacity(cfg.substeps + 1);
    let r = rollout(state, action, &env.map, &env.track, cfg, &mut samples);
    let transition = Transition {
        sub_poses: samples.iter().map(Sample::pose).collect(),
        raw_feature_integrand: r.integrand,
        label: r.label,
        end_station: r.end_station,
    };
    (r.state, transition)
}

/// Angle between the final sub-pose heading and the road tangent at the
/// transition's end, normalized by π.
pub fn end_direction_feature(transition: &Transition, track: &Track) -> f64 {
    match transition.sub_poses.last() {
        Some(p) => end_direction_value(p.yaw, track.heading_at(transition.end_station)),
        None => 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envmodel::{generate_track, SegmentKind};

    fn straight_env() -> Environment {
        let t = generate_track(SegmentKind::Straight, 200.0, 7).unwrap();
        Environment::new(t, 0.25).unwrap()
    }

    #[test]
    fn grid_size_and_continuity() {
        let cfg = VehicleConfig::default();
        let mut s = PlannerState::new(0.0, 0.0, 0.0, 10.0);
        s.wheel_angle = 0.02;
        let acts = sample_actions(&s, &cfg, 0);
        assert_eq!(acts.len(), 63);
        for a in &acts {
            let (v, acc, _) = a.longitudinal(0.0);
            let (d, _) = a.lateral(0.0);
            assert!((v - 10.0).abs() < 1e-9);
            assert!(acc.abs() < 1e-9);
            assert!((d - 0.02).abs() < 1e-9);
            let (v_end, a_end, j_end) = a.longitudinal(a.duration);
            assert!((v_end - a.terminal_speed).abs() < 1e-9);
            assert!(a_end.abs() < 1e-9 && j_end.abs() < 1e-9);
            let (d_end, dd_end) = a.lateral(a.duration);
            assert!((d_end - a.terminal_wheel_angle).abs() < 1e-12 && dd_end.abs() < 1e-12);
        }
    }

    #[test]
    fn terminal_speed_matches_grid_target() {
        let cfg = VehicleConfig::default();
        let s = PlannerState::new(0.0, 0.0, 0.0, 6.5);
        let acts = sample_actions(&s, &cfg, 3);
        for (i, a) in acts.iter().enumerate() {
            let target = s.v + cfg.speed_offsets[i / cfg.wheel_offsets.len()];
            let (v, _, _) = a.longitudinal(a.duration);
            assert!((v - target).abs() < 1e-9);
        }
    }

    #[test]
    fn nonzero_initial_acceleration_is_continuous() {
        let cfg = VehicleConfig::default();
        let mut s = PlannerState::new(0.0, 0.0, 0.0, 8.0);
        s.a_lon = 1.3;
        for a in sample_actions(&s, &cfg, 0) {
            let (_, a0, _) = a.longitudinal(0.0);
            assert!((a0 - 1.3).abs() < 1e-9);
        }
    }

    #[test]
    fn standstill_includes_hold() {
        let cfg = VehicleConfig::default();
        let s = PlannerState::new(0.0, 0.0, 0.0, 0.0);
        let acts = sample_actions(&s, &cfg, 0);
        assert!(!acts.is_empty());
        let hold = acts
            .iter()
            .find(|a| a.terminal_speed == 0.0 && a.terminal_wheel_angle == 0.0)
            .unwrap();
        for k in 0..=10 {
            let tau = k as f64 * 0.1;
            assert_eq!(hold.longitudinal(tau).0, 0.0);
            assert_eq!(hold.lateral(tau).0, 0.0);
        }
        // Decelerating targets collapse onto zero and are deduplicated.
        assert_eq!(acts.len(), 4 * 9);
    }

    #[test]
    fn constant_velocity_straight() {
        let env = straight_env();
        let cfg = VehicleConfig::default();
        let s = PlannerState::new(20.0, 0.0, 0.0, 10.0);
        let a = ActionProfile::hold(10.0, 0.0, 1.0);
        let (next, tr) = integrate(&s, &a, &env, &cfg);
        assert_eq!(tr.label, Label::Valid);
        assert!((next.x - 30.0).abs() < 1e-9);
        assert!(next.y.abs() < 1e-12 && next.yaw.abs() < 1e-12);
        assert_eq!(tr.raw_feature_integrand[Feature::AccelLon.index()], 0.0);
        assert!(tr.sub_poses.len() >= 8);
        assert!(tr.sub_poses.windows(2).all(|w| w[1].t > w[0].t));
    }

    #[test]
    fn velocity_deviation_closed_form() {
        let cfg = VehicleConfig::default();
        let mut track = generate_track(SegmentKind::Straight, 200.0, 7).unwrap();
        track.target_speed_profile = vec![crate::envmodel::SpeedBreakpoint { from: 0.0, speed: 10.0 }];
        let env = Environment::new(track.clone(), 0.25).unwrap();
        let s = PlannerState::new(20.0, 0.0, 0.0, 10.0);
        let a = ActionProfile::hold(10.0, 0.0, 1.0);
        let (_, tr) = integrate(&s, &a, &env, &cfg);
        assert!(tr.raw_feature_integrand[Feature::VTargetDev.index()].abs() < 1e-12);

        track.target_speed_profile[0].speed = 12.0;
        let env = Environment::new(track, 0.25).unwrap();
        let (_, tr) = integrate(&s, &a, &env, &cfg);
        assert!((tr.raw_feature_integrand[Feature::VTargetDev.index()] - 2.0 * a.duration).abs() < 1e-12);
    }

    #[test]
    fn standstill_stays_put_and_does_not_creep() {
        let env = straight_env();
        let cfg = VehicleConfig::default();
        let s = PlannerState::new(20.0, 0.3, 0.1, 0.0);
        let a = ActionProfile::hold(0.0, 0.0, 1.0);
        let (next, tr) = integrate(&s, &a, &env, &cfg);
        assert_eq!((next.x, next.y, next.yaw), (s.x, s.y, s.yaw));
        assert_eq!(tr.raw_feature_integrand[Feature::Creeping.index()], 0.0);
    }

    #[test]
    fn creeping_is_counted() {
        let env = straight_env();
        let cfg = VehicleConfig::default();
        let s = PlannerState::new(20.0, 0.0, 0.0, 0.3);
        let a = ActionProfile::hold(0.3, 0.0, 1.0);
        let (_, tr) = integrate(&s, &a, &env, &cfg);
        assert!((tr.raw_feature_integrand[Feature::Creeping.index()] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn labels() {
        let env = straight_env();
        let cfg = VehicleConfig::default();
        // Heading straight at the curb.
        let s = PlannerState::new(20.0, 0.0, PI / 2.0, 5.0);
        let (_, tr) = integrate(&s, &ActionProfile::hold(5.0, 0.0, 1.0), &env, &cfg);
        assert_eq!(tr.label, Label::Collision);
        // Starting outside the map.
        let s = PlannerState::new(env.map.origin[0] - 1.0, 0.0, 0.0, 5.0);
        let (_, tr) = integrate(&s, &ActionProfile::hold(5.0, 0.0, 1.0), &env, &cfg);
        assert_eq!(tr.label, Label::OffMap);
        // Hard lateral acceleration.
        let mut s = PlannerState::new(20.0, 0.0, 0.0, 15.0);
        s.wheel_angle = 0.2;
        let (_, tr) = integrate(&s, &ActionProfile::hold(15.0, 0.2, 1.0), &env, &cfg);
        assert_eq!(tr.label, Label::ComfortViolation);
    }

    #[test]
    fn magnitude_features_nonnegative() {
        let env = Environment::new(generate_track(SegmentKind::Curvy, 200.0, 2).unwrap(), 0.25).unwrap();
        let cfg = VehicleConfig::default();
        let s = PlannerState::on_track(&env.track, 30.0, 6.0);
        for a in sample_actions(&s, &cfg, 0) {
            let (_, tr) = integrate(&s, &a, &env, &cfg);
            if tr.label == Label::Valid {
                assert!(tr.raw_feature_integrand.iter().all(|f| *f >= 0.0 && f.is_finite()));
            }
        }
    }

    #[test]
    fn second_order_convergence() {
        let env = Environment::new(generate_track(SegmentKind::Straight, 200.0, 1).unwrap(), 0.1).unwrap();
        let mut s = PlannerState::new(20.0, 0.0, 0.0, 8.0);
        s.wheel_angle = 0.02;
        let a = ActionProfile::new(8.0, 0.0, 10.0, 0.02, 0.06, 1.0);
        let end = |n: usize| {
            let cfg = VehicleConfig { substeps: n, ..Default::default() };
            let (next, _) = integrate(&s, &a, &env, &cfg);
            (next.x, next.y, next.yaw)
        };
        let err = |p: (f64, f64, f64), q: (f64, f64, f64)| {
            ((p.0 - q.0).powi(2) + (p.1 - q.1).powi(2) + (p.2 - q.2).powi(2)).sqrt()
        };
        let reference = end(1024);
        let e1 = err(end(16), reference);
        let e2 = err(end(32), reference);
        // Halving the step should shrink the error by about four.
        assert!(e2 < e1 / 3.0, "e16={e1} e32={e2}");
    }

    #[test]
    fn end_direction_examples() {
        let env = straight_env();
        let cfg = VehicleConfig::default();
        let s = PlannerState::new(20.0, 0.0, 0.0, 5.0);
        let (_, tr) = integrate(&s, &ActionProfile::hold(5.0, 0.0, 1.0), &env, &cfg);
        assert!(end_direction_feature(&tr, &env.track).abs() < 1e-12);

        let mut perpendicular = tr.clone();
        perpendicular.sub_poses.last_mut().unwrap().yaw = PI / 2.0;
        assert!((end_direction_feature(&perpendicular, &env.track) - 0.5).abs() < 1e-12);

        // Brute-force wrap oracle: try all 2π shifts and keep the smallest.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let yaw: f64 = rng.gen_range(-20.0..20.0);
            let mut t = tr.clone();
            t.sub_poses.last_mut().unwrap().yaw = yaw;
            let oracle = (-4..=4)
                .map(|k| (yaw + 2.0 * PI * k as f64).abs())
                .fold(f64::INFINITY, f64::min)
                / PI;
            assert!((end_direction_feature(&t, &env.track) - oracle).abs() < 1e-9);
        }
    }
}
