//! Synthetic road segments and their rasterized feature maps.
//!
//! A [`Track`] is a single-lane road described by a centerline polyline. It is
//! rasterized into a [`FeatureMap`] holding one normalized grid per
//! infrastructural reward feature. Grid values live on nodes spaced
//! `resolution` apart; queries interpolate bilinearly between the four
//! surrounding nodes.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reward::INFRASTRUCTURAL_CHANNELS;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SegmentKind {
    Straight,
    Curvy,
}

impl std::str::FromStr for SegmentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "straight" => Ok(SegmentKind::Straight),
            "curvy" => Ok(SegmentKind::Curvy),
            other => Err(Error::InvalidArgument(format!(
                "kind: expected 'straight' or 'curvy', got '{other}'"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackConfig {
    pub lane_width: f64,
    /// Upper bound on centerline curvature, 1/m.
    pub kappa_max: f64,
    /// Fraction of `kappa_max` actually used by the curvy generator.
    pub kappa_fill: f64,
    pub point_spacing: f64,
    pub resolution: f64,
    pub cruise_speed_straight: f64,
    pub cruise_speed_curvy: f64,
    /// Target speed approaching and crossing a conflict zone.
    pub conflict_speed: f64,
    pub conflict_zone_length: f64,
}

impl Default for TrackConfig {
    fn default() -> Self {
        Self {
            lane_width: 3.5,
            kappa_max: 0.1,
            kappa_fill: 0.6,
            point_spacing: 0.5,
            resolution: 0.25,
            cruise_speed_straight: 7.0,
            cruise_speed_curvy: 6.0,
            conflict_speed: 4.0,
            conflict_zone_length: 4.0,
        }
    }
}

/// Piecewise-constant target speed: `speed` applies from arclength `from` on.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpeedBreakpoint {
    pub from: f64,
    pub speed: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Track {
    pub kind: SegmentKind,
    pub length: f64,
    pub seed: u64,
    pub lane_width: f64,
    pub kappa_max: f64,
    pub conflict_zones: Vec<(f64, f64)>,
    pub target_speed_profile: Vec<SpeedBreakpoint>,
    pub centerline: Vec<[f64; 2]>,
    pub arclength: Vec<f64>,
    pub heading: Vec<f64>,
    pub curvature: Vec<f64>,
}

/// On-disk form of a track. The centerline is regenerated from
/// `(kind, length, seed, kappa_max)` on load.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackFile {
    pub kind: SegmentKind,
    pub length: f64,
    pub seed: u64,
    pub lane_width: f64,
    #[serde(default = "default_kappa_max")]
    pub kappa_max: f64,
    pub conflict_zones: Vec<(f64, f64)>,
    pub target_speed_profile: Vec<SpeedBreakpoint>,
}

fn default_kappa_max() -> f64 {
    TrackConfig::default().kappa_max
}

pub fn generate_track(kind: SegmentKind, length: f64, seed: u64) -> Result<Track> {
    generate_track_with(kind, length, seed, &TrackConfig::default())
}

pub fn generate_track_with(
    kind: SegmentKind,
    length: f64,
    seed: u64,
    cfg: &TrackConfig,
) -> Result<Track> {
    if !(length > 0.0) || !length.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "length must be positive, got {length}"
        )));
    }
    if !(cfg.lane_width > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "lane_width must be positive, got {}",
            cfg.lane_width
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Curvature profile first so the zone placement draws come after it.
    let curvature_fn = match kind {
        SegmentKind::Straight => None,
        SegmentKind::Curvy => Some(CurvatureProfile::random(&mut rng, cfg)),
    };

    let zone_len = cfg.conflict_zone_length.min(length * 0.5);
    let zone_start = length * rng.gen_range(0.45..0.65);
    let zone_end = (zone_start + zone_len).min(length);
    let cruise = match kind {
        SegmentKind::Straight => cfg.cruise_speed_straight,
        SegmentKind::Curvy => cfg.cruise_speed_curvy,
    };
    let slow_from = (zone_start - 20.0).max(0.0);
    let mut profile = vec![SpeedBreakpoint { from: 0.0, speed: cruise }];
    if slow_from > 0.0 {
        profile.push(SpeedBreakpoint { from: slow_from, speed: cfg.conflict_speed });
    } else {
        profile[0].speed = cfg.conflict_speed;
    }
    if zone_end + 5.0 < length {
        profile.push(SpeedBreakpoint { from: zone_end + 5.0, speed: cruise });
    }

    let file = TrackFile {
        kind,
        length,
        seed,
        lane_width: cfg.lane_width,
        kappa_max: cfg.kappa_max,
        conflict_zones: vec![(zone_start, zone_end)],
        target_speed_profile: profile,
    };
    build_track(file, curvature_fn.as_ref(), cfg.point_spacing)
}

/// Band-limited curvature: a sum of three sinusoids with wavelengths of
/// 60-150 m, ramped in over the first 20 m so tracks start straight.
#[derive(Clone, Debug)]
struct CurvatureProfile {
    terms: [(f64, f64, f64); 3],
    scale: f64,
}

impl CurvatureProfile {
    fn random(rng: &mut ChaCha8Rng, cfg: &TrackConfig) -> Self {
        let mut terms = [(0.0, 0.0, 0.0); 3];
        for t in terms.iter_mut() {
            let amp = rng.gen_range(0.5..1.0);
            let wavelength = rng.gen_range(60.0..150.0);
            let phase = rng.gen_range(0.0..2.0 * PI);
            *t = (amp, 2.0 * PI / wavelength, phase);
        }
        let total: f64 = terms.iter().map(|t| t.0).sum();
        Self {
            terms,
            scale: cfg.kappa_max * cfg.kappa_fill.clamp(0.0, 1.0) / total,
        }
    }

    fn eval(&self, s: f64) -> f64 {
        let ramp = smoothstep((s / 20.0).clamp(0.0, 1.0));
        let raw: f64 = self
            .terms
            .iter()
            .map(|(a, k, p)| a * (k * s + p).sin())
            .sum();
        ramp * self.scale * raw
    }
}

fn smoothstep(u: f64) -> f64 {
    u * u * (3.0 - 2.0 * u)
}

fn build_track(
    file: TrackFile,
    curvature: Option<&CurvatureProfile>,
    spacing: f64,
) -> Result<Track> {
    let n = ((file.length / spacing).ceil() as usize).max(1);
    let ds = file.length / n as f64;
    let mut centerline = Vec::with_capacity(n + 1);
    let mut arclength = Vec::with_capacity(n + 1);
    let mut heading = Vec::with_capacity(n + 1);
    let mut kappa: Vec<f64> = Vec::with_capacity(n + 1);
    let (mut x, mut y, mut h) = (0.0f64, 0.0f64, 0.0f64);
    for i in 0..=n {
        let s = i as f64 * ds;
        let k = curvature.map_or(0.0, |c| c.eval(s));
        if i > 0 {
            let k_prev = kappa[i - 1];
            let h_next = h + 0.5 * (k_prev + k) * ds;
            let h_mid = 0.5 * (h + h_next);
            x += ds * h_mid.cos();
            y += ds * h_mid.sin();
            h = h_next;
        }
        centerline.push([x, y]);
        arclength.push(s);
        heading.push(h);
        kappa.push(k);
    }
    let track = Track {
        kind: file.kind,
        length: file.length,
        seed: file.seed,
        lane_width: file.lane_width,
        kappa_max: file.kappa_max,
        conflict_zones: file.conflict_zones,
        target_speed_profile: file.target_speed_profile,
        centerline,
        arclength,
        heading,
        curvature: kappa,
    };
    track.validate()?;
    Ok(track)
}

impl Track {
    pub fn validate(&self) -> Result<()> {
        if self.centerline.len() < 2 {
            return Err(Error::Validation("centerline needs at least 2 points".into()));
        }
        if self.arclength.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Validation("centerline arclength not increasing".into()));
        }
        if !(self.lane_width > 0.0) {
            return Err(Error::Validation("lane_width must be positive".into()));
        }
        for &(a, b) in &self.conflict_zones {
            if !(0.0 <= a && a <= b && b <= self.length) {
                return Err(Error::Validation(format!(
                    "conflict zone ({a}, {b}) outside [0, {}]",
                    self.length
                )));
            }
        }
        if self.target_speed_profile.is_empty() {
            return Err(Error::Validation("empty target speed profile".into()));
        }
        for bp in &self.target_speed_profile {
            if !(bp.speed >= 0.0) || !bp.speed.is_finite() || !bp.from.is_finite() {
                return Err(Error::Validation(format!("bad target speed {bp:?}")));
            }
        }
        Ok(())
    }

    pub fn to_file(&self) -> TrackFile {
        TrackFile {
            kind: self.kind,
            length: self.length,
            seed: self.seed,
            lane_width: self.lane_width,
            kappa_max: self.kappa_max,
            conflict_zones: self.conflict_zones.clone(),
            target_speed_profile: self.target_speed_profile.clone(),
        }
    }

    /// Regenerates the centerline for a stored track file. The zone and
    /// speed-profile fields from the file take precedence over the generator.
    pub fn from_file(file: TrackFile, cfg: &TrackConfig) -> Result<Track> {
        let gen_cfg = TrackConfig {
            lane_width: file.lane_width,
            kappa_max: file.kappa_max,
            ..cfg.clone()
        };
        let generated = generate_track_with(file.kind, file.length, file.seed, &gen_cfg)?;
        let track = Track {
            conflict_zones: file.conflict_zones,
            target_speed_profile: file.target_speed_profile,
            ..generated
        };
        track.validate()?;
        Ok(track)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.to_file()).expect("track serialize");
        s.push('\n');
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path, cfg: &TrackConfig) -> Result<Track> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: TrackFile = serde_json::from_str(&text)?;
        Track::from_file(file, cfg)
    }

    pub fn target_speed_at(&self, s: f64) -> f64 {
        let mut speed = self.target_speed_profile[0].speed;
        for bp in &self.target_speed_profile {
            if bp.from <= s {
                speed = bp.speed;
            } else {
                break;
            }
        }
        speed
    }

    fn segment_at(&self, s: f64) -> (usize, f64) {
        let s = s.clamp(0.0, self.length);
        let i = match self
            .arclength
            .binary_search_by(|a| a.partial_cmp(&s).unwrap())
        {
            Ok(i) => i.min(self.arclength.len() - 2),
            Err(i) => i.saturating_sub(1).min(self.arclength.len() - 2),
        };
        let u = (s - self.arclength[i]) / (self.arclength[i + 1] - self.arclength[i]);
        (i, u)
    }

    /// Centerline point at arclength `s` (clamped to the track).
    pub fn point_at(&self, s: f64) -> [f64; 2] {
        let (i, u) = self.segment_at(s);
        let a = self.centerline[i];
        let b = self.centerline[i + 1];
        [a[0] + u * (b[0] - a[0]), a[1] + u * (b[1] - a[1])]
    }

    pub fn heading_at(&self, s: f64) -> f64 {
        let (i, u) = self.segment_at(s);
        self.heading[i] + u * (self.heading[i + 1] - self.heading[i])
    }

    /// Nearest-point projection onto the centerline: `(arclength, signed
    /// lateral offset, tangent heading)`. Positive offsets lie to the left.
    pub fn project(&self, x: f64, y: f64) -> (f64, f64, f64) {
        let mut best = (f64::INFINITY, 0.0, 0.0, 0.0);
        for i in 0..self.centerline.len() - 1 {
            let (d2, t) = segment_distance2(self.centerline[i], self.centerline[i + 1], x, y);
            if d2 < best.0 {
                let s = self.arclength[i] + t * (self.arclength[i + 1] - self.arclength[i]);
                let h = self.heading_at(s);
                let p = self.point_at(s);
                let lat = -(x - p[0]) * h.sin() + (y - p[1]) * h.cos();
                best = (d2, s, lat, h);
            }
        }
        (best.1, best.2, best.3)
    }
}

/// Squared distance from `(x, y)` to segment `ab` and the clamped parameter.
#[inline]
fn segment_distance2(a: [f64; 2], b: [f64; 2], x: f64, y: f64) -> (f64, f64) {
    let (ex, ey) = (b[0] - a[0], b[1] - a[1]);
    let len2 = ex * ex + ey * ey;
    let t = if len2 > 0.0 {
        (((x - a[0]) * ex + (y - a[1]) * ey) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (px, py) = (a[0] + t * ex - x, a[1] + t * ey - y);
    (px * px + py * py, t)
}

/// Wraps an angle to `(-π, π]`.
#[inline]
pub fn wrap_angle(a: f64) -> f64 {
    let mut r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r -= 2.0 * PI;
    }
    r
}

pub const CH_LANE_CENTER: usize = 0;
pub const CH_CURB: usize = 1;
pub const CH_LANE_POTENTIAL: usize = 2;
pub const CH_DIRECTION: usize = 3;
pub const CH_CONFLICT: usize = 4;
pub const NUM_CHANNELS: usize = 5;

// Per-node layout: the five channels, then auxiliary lookups that are not
// features (arclength station and the tangent as a unit vector).
const AUX_STATION: usize = 5;
const AUX_COS: usize = 6;
const AUX_SIN: usize = 7;
const NODE_LEN: usize = 8;

/// Multi-channel normalized grid. Node `(i, j)` sits at
/// `origin + (i, j) * resolution`.
#[derive(Clone, Debug)]
pub struct FeatureMap {
    pub origin: [f64; 2],
    pub resolution: f64,
    pub width: usize,
    pub height: usize,
    nodes: Vec<[f64; NODE_LEN]>,
}

/// Infrastructural feature values at a pose. The direction entry is the
/// normalized yaw deviation from the local road tangent, not the raw channel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoseFeatures {
    pub values: [f64; NUM_CHANNELS],
}

impl PoseFeatures {
    pub fn get(&self, name: &str) -> Option<f64> {
        channel_index(name).map(|i| self.values[i])
    }
    pub fn lane_center(&self) -> f64 {
        self.values[CH_LANE_CENTER]
    }
    pub fn curb_proximity(&self) -> f64 {
        self.values[CH_CURB]
    }
    pub fn lane_potential(&self) -> f64 {
        self.values[CH_LANE_POTENTIAL]
    }
    pub fn direction_dev(&self) -> f64 {
        self.values[CH_DIRECTION]
    }
    pub fn conflict_area(&self) -> f64 {
        self.values[CH_CONFLICT]
    }
}

/// Everything the vehicle model needs from one map lookup.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Lookup {
    pub features: PoseFeatures,
    pub station: f64,
}

pub fn channel_index(name: &str) -> Option<usize> {
    INFRASTRUCTURAL_CHANNELS.iter().position(|c| *c == name)
}

pub fn rasterize(track: &Track, resolution: f64) -> Result<FeatureMap> {
    if !(resolution > 0.0) || !resolution.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "resolution must be positive, got {resolution}"
        )));
    }
    if resolution > track.lane_width {
        return Err(Error::InvalidArgument(format!(
            "resolution {resolution} exceeds lane width {}",
            track.lane_width
        )));
    }
    let half = 0.5 * track.lane_width;
    let margin = track.lane_width + 2.0;
    let (mut min_x, mut min_y, mut max_x, mut max_y) =
        (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in &track.centerline {
        min_x = min_x.min(p[0]);
        min_y = min_y.min(p[1]);
        max_x = max_x.max(p[0]);
        max_y = max_y.max(p[1]);
    }
    let origin = [min_x - margin, min_y - margin];
    let width = ((max_x - min_x + 2.0 * margin) / resolution).ceil() as usize + 1;
    let height = ((max_y - min_y + 2.0 * margin) / resolution).ceil() as usize + 1;

    // Nearest-centerline distance, station and tangent, stamped segment by
    // segment within a band wide enough for every channel to saturate.
    let band = track.lane_width;
    let mut dist2 = vec![f64::INFINITY; width * height];
    let mut station = vec![0.0; width * height];
    let mut tangent = vec![0.0; width * height];
    for i in 0..track.centerline.len() - 1 {
        let a = track.centerline[i];
        let b = track.centerline[i + 1];
        let lo_x = ((a[0].min(b[0]) - band - origin[0]) / resolution).floor().max(0.0) as usize;
        let hi_x = (((a[0].max(b[0]) + band - origin[0]) / resolution).ceil() as usize).min(width - 1);
        let lo_y = ((a[1].min(b[1]) - band - origin[1]) / resolution).floor().max(0.0) as usize;
        let hi_y = (((a[1].max(b[1]) + band - origin[1]) / resolution).ceil() as usize).min(height - 1);
        for gy in lo_y..=hi_y {
            let y = origin[1] + gy as f64 * resolution;
            for gx in lo_x..=hi_x {
                let x = origin[0] + gx as f64 * resolution;
                let (d2, t) = segment_distance2(a, b, x, y);
                let idx = gy * width + gx;
                if d2 < dist2[idx] {
                    dist2[idx] = d2;
                    station[idx] = track.arclength[i] + t * (track.arclength[i + 1] - track.arclength[i]);
                    tangent[idx] = track.heading[i] + t * (track.heading[i + 1] - track.heading[i]);
                }
            }
        }
    }

    let mut nodes = vec![[0.0; NODE_LEN]; width * height];
    for (idx, node) in nodes.iter_mut().enumerate() {
        let d = dist2[idx].sqrt();
        let s = station[idx];
        let heading = wrap_angle(tangent[idx]);
        let on_road = d <= half;
        node[CH_LANE_CENTER] = (d / half).min(1.0);
        node[CH_CURB] = ((d - 0.5 * half) / (0.5 * half)).clamp(0.0, 1.0);
        node[CH_LANE_POTENTIAL] = if on_road { 0.0 } else { 1.0 };
        node[CH_DIRECTION] = ((heading + PI) / (2.0 * PI)).clamp(0.0, 1.0);
        node[CH_CONFLICT] = if on_road
            && track.conflict_zones.iter().any(|&(a, b)| s >= a && s <= b)
        {
            1.0
        } else {
            0.0
        };
        node[AUX_STATION] = s;
        node[AUX_COS] = heading.cos();
        node[AUX_SIN] = heading.sin();
    }

    Ok(FeatureMap {
        origin,
        resolution,
        width,
        height,
        nodes,
    })
}

impl FeatureMap {
    pub fn channel_names(&self) -> &'static [&'static str; NUM_CHANNELS] {
        &INFRASTRUCTURAL_CHANNELS
    }

    pub fn node_position(&self, i: usize, j: usize) -> [f64; 2] {
        [
            self.origin[0] + i as f64 * self.resolution,
            self.origin[1] + j as f64 * self.resolution,
        ]
    }

    /// Stored value of `channel` at node `(i, j)`.
    pub fn value(&self, channel: usize, i: usize, j: usize) -> f64 {
        self.nodes[j * self.width + i][channel]
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        let gx = (x - self.origin[0]) / self.resolution;
        let gy = (y - self.origin[1]) / self.resolution;
        gx >= 0.0 && gy >= 0.0 && gx <= (self.width - 1) as f64 && gy <= (self.height - 1) as f64
    }

    #[inline]
    fn cell(&self, x: f64, y: f64) -> Option<(usize, usize, f64, f64)> {
        let gx = (x - self.origin[0]) / self.resolution;
        let gy = (y - self.origin[1]) / self.resolution;
        if !(gx >= 0.0 && gy >= 0.0) {
            return None;
        }
        let (wmax, hmax) = ((self.width - 1) as f64, (self.height - 1) as f64);
        if gx > wmax || gy > hmax {
            return None;
        }
        // Right/top edges interpolate inside the last cell.
        let i = (gx.floor() as usize).min(self.width.saturating_sub(2));
        let j = (gy.floor() as usize).min(self.height.saturating_sub(2));
        Some((i, j, gx - i as f64, gy - j as f64))
    }

    #[inline]
    fn blend(&self, i: usize, j: usize, u: f64, w: f64) -> [f64; NODE_LEN] {
        let n00 = &self.nodes[j * self.width + i];
        let n10 = &self.nodes[j * self.width + i + 1];
        let n01 = &self.nodes[(j + 1) * self.width + i];
        let n11 = &self.nodes[(j + 1) * self.width + i + 1];
        let mut out = [0.0; NODE_LEN];
        for c in 0..NODE_LEN {
            let lo = n00[c] + u * (n10[c] - n00[c]);
            let hi = n01[c] + u * (n11[c] - n01[c]);
            out[c] = lo + w * (hi - lo);
        }
        out
    }

    /// Raw bilinear sample of one channel.
    pub fn sample(&self, channel: usize, x: f64, y: f64) -> Result<f64> {
        let (i, j, u, w) = self.cell(x, y).ok_or(Error::OutOfBounds { x, y })?;
        Ok(self.blend(i, j, u, w)[channel])
    }

    /// Interpolated arclength of the nearest centerline point.
    pub fn station(&self, x: f64, y: f64) -> Result<f64> {
        self.sample(AUX_STATION, x, y)
    }

    /// Interpolated road tangent heading.
    pub fn road_heading(&self, x: f64, y: f64) -> Result<f64> {
        let (i, j, u, w) = self.cell(x, y).ok_or(Error::OutOfBounds { x, y })?;
        let b = self.blend(i, j, u, w);
        Ok(b[AUX_SIN].atan2(b[AUX_COS]))
    }

    #[inline]
    pub(crate) fn lookup(&self, x: f64, y: f64, yaw: f64) -> Option<Lookup> {
        let (i, j, u, w) = self.cell(x, y)?;
        let b = self.blend(i, j, u, w);
        let heading = b[AUX_SIN].atan2(b[AUX_COS]);
        let mut values = [0.0; NUM_CHANNELS];
        values.copy_from_slice(&b[..NUM_CHANNELS]);
        values[CH_DIRECTION] = (wrap_angle(yaw - heading).abs() / PI).min(1.0);
        Some(Lookup {
            features: PoseFeatures { values },
            station: b[AUX_STATION],
        })
    }
}

pub fn query_features(map: &FeatureMap, x: f64, y: f64, yaw: f64) -> Result<PoseFeatures> {
    map.lookup(x, y, yaw)
        .map(|l| l.features)
        .ok_or(Error::OutOfBounds { x, y })
}

/// A track together with its rasterized map; immutable and shareable.
#[derive(Clone, Debug)]
pub struct Environment {
    pub track: Track,
    pub map: FeatureMap,
}

impl Environment {
    pub fn new(track: Track, resolution: f64) -> Result<Self> {
        let map = rasterize(&track, resolution)?;
        Ok(Self { track, map })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn discrete_curvature(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
        // Circumscribed-circle curvature 4·area / (|ab|·|bc|·|ca|).
        let ab = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
        let bc = ((c[0] - b[0]).powi(2) + (c[1] - b[1]).powi(2)).sqrt();
        let ca = ((a[0] - c[0]).powi(2) + (a[1] - c[1]).powi(2)).sqrt();
        let cross = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
        2.0 * cross.abs() / (ab * bc * ca)
    }

    #[test]
    fn straight_track_is_straight() {
        let t = generate_track(SegmentKind::Straight, 200.0, 7).unwrap();
        let last = t.centerline.last().unwrap();
        assert!((last[0] - 200.0).abs() < 1e-9 && last[1].abs() < 1e-12);
        assert!((t.arclength.last().unwrap() - 200.0).abs() < 1e-9);
        assert!(t.curvature.iter().all(|k| *k == 0.0));
        for w in t.centerline.windows(3) {
            assert!(discrete_curvature(w[0], w[1], w[2]) < 1e-12);
        }
    }

    #[test]
    fn curvy_track_is_deterministic_and_bounded() {
        let a = generate_track(SegmentKind::Curvy, 300.0, 3).unwrap();
        let b = generate_track(SegmentKind::Curvy, 300.0, 3).unwrap();
        assert_eq!(a, b);
        let max_fd = a
            .centerline
            .windows(3)
            .map(|w| discrete_curvature(w[0], w[1], w[2]))
            .fold(0.0, f64::max);
        assert!(max_fd <= 0.1, "max curvature {max_fd}");
        assert!(max_fd > 0.005, "curvy track barely curves: {max_fd}");
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(matches!(
            generate_track(SegmentKind::Curvy, -5.0, 1),
            Err(Error::InvalidArgument(_))
        ));
        let t = generate_track(SegmentKind::Straight, 50.0, 1).unwrap();
        assert!(matches!(rasterize(&t, 4.0), Err(Error::InvalidArgument(_))));
        assert!(matches!(rasterize(&t, 0.0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn track_file_round_trip() {
        let t = generate_track(SegmentKind::Curvy, 120.0, 11).unwrap();
        let file: TrackFile = serde_json::from_str(&t.to_json()).unwrap();
        let back = Track::from_file(file, &TrackConfig::default()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn straight_channels_on_centerline_and_boundary() {
        let t = generate_track(SegmentKind::Straight, 100.0, 7).unwrap();
        let m = rasterize(&t, 0.25).unwrap();
        let f = query_features(&m, 30.0, 0.0, 0.0).unwrap();
        assert!(f.lane_center().abs() < 1e-12);
        assert!(f.curb_proximity().abs() < 1e-12);
        assert!(f.direction_dev().abs() < 1e-12);
        let f = query_features(&m, 30.0, t.lane_width / 2.0, 0.0).unwrap();
        assert!((f.curb_proximity() - 1.0).abs() < 1e-12);
        assert!((f.lane_center() - 1.0).abs() < 1e-12);
        let f = query_features(&m, 30.0, -t.lane_width / 2.0, PI / 2.0).unwrap();
        assert!((f.curb_proximity() - 1.0).abs() < 1e-12);
        assert!((f.direction_dev() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn lane_center_grows_with_offset() {
        let t = generate_track(SegmentKind::Straight, 60.0, 2).unwrap();
        let m = rasterize(&t, 0.25).unwrap();
        let mut prev = -1.0;
        for k in 0..=12 {
            let y = k as f64 * 0.25;
            let v = m.sample(CH_LANE_CENTER, 20.0, y).unwrap();
            assert!(v >= prev);
            prev = v;
        }
        assert_eq!(prev, 1.0);
    }

    #[test]
    fn conflict_channel_marks_zone() {
        let t = generate_track(SegmentKind::Straight, 100.0, 5).unwrap();
        let m = rasterize(&t, 0.25).unwrap();
        let (a, b) = t.conflict_zones[0];
        let mid = 0.5 * (a + b);
        assert_eq!(m.sample(CH_CONFLICT, mid, 0.0).unwrap(), 1.0);
        assert_eq!(m.sample(CH_CONFLICT, a - 5.0, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn curvy_map_channels_normalized() {
        let t = generate_track(SegmentKind::Curvy, 300.0, 3).unwrap();
        let m = rasterize(&t, 0.25).unwrap();
        for j in 0..m.height {
            for i in 0..m.width {
                for c in 0..NUM_CHANNELS {
                    let v = m.value(c, i, j);
                    assert!(v.is_finite() && (0.0..=1.0).contains(&v), "{c} {i} {j} {v}");
                }
            }
        }
    }

    #[test]
    fn interpolation_identity_midpoint_and_bounds() {
        let t = generate_track(SegmentKind::Curvy, 150.0, 9).unwrap();
        let m = rasterize(&t, 0.25).unwrap();
        // Node identity.
        for (i, j) in [(10, 10), (m.width / 2, m.height / 2), (m.width - 1, m.height - 1)] {
            let p = m.node_position(i, j);
            for c in [CH_LANE_CENTER, CH_CURB, CH_LANE_POTENTIAL, CH_CONFLICT] {
                assert!((m.sample(c, p[0], p[1]).unwrap() - m.value(c, i, j)).abs() < 1e-12);
            }
        }
        // Between a 0 node and a 1 node.
        let s = FeatureMap {
            origin: [0.0, 0.0],
            resolution: 1.0,
            width: 2,
            height: 2,
            nodes: vec![
                [0.0; NODE_LEN],
                [1.0; NODE_LEN],
                [0.0; NODE_LEN],
                [1.0; NODE_LEN],
            ],
        };
        assert!((s.sample(CH_LANE_CENTER, 0.5, 0.0).unwrap() - 0.5).abs() < 1e-15);

        // Random in-bounds poses stay within their neighbourhood's range.
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..1000 {
            let gx = rng.gen_range(0.0..(m.width - 1) as f64);
            let gy = rng.gen_range(0.0..(m.height - 1) as f64);
            let x = m.origin[0] + gx * m.resolution;
            let y = m.origin[1] + gy * m.resolution;
            let (i, j) = (gx.floor() as usize, gy.floor() as usize);
            for c in [CH_LANE_CENTER, CH_CURB, CH_LANE_POTENTIAL, CH_CONFLICT] {
                let corners = [
                    m.value(c, i, j),
                    m.value(c, i + 1, j),
                    m.value(c, i, j + 1),
                    m.value(c, i + 1, j + 1),
                ];
                let lo = corners.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = corners.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let v = m.sample(c, x, y).unwrap();
                assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
            }
        }
    }

    #[test]
    fn query_is_lipschitz_within_a_cell() {
        let t = generate_track(SegmentKind::Curvy, 150.0, 4).unwrap();
        let m = rasterize(&t, 0.25).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..500 {
            let gx = rng.gen_range(1.0..(m.width - 3) as f64);
            let gy = rng.gen_range(1.0..(m.height - 3) as f64);
            let (x, y) = (m.origin[0] + gx * m.resolution, m.origin[1] + gy * m.resolution);
            let dx = rng.gen_range(-0.1..0.1) * m.resolution;
            let dy = rng.gen_range(-0.1..0.1) * m.resolution;
            for c in [CH_LANE_CENTER, CH_CURB, CH_CONFLICT] {
                // Each channel changes by at most 1 between neighbouring nodes,
                // so the slope is bounded by 2 / resolution over the square.
                let l = 2.0 / m.resolution;
                let a = m.sample(c, x, y).unwrap();
                let b = m.sample(c, x + dx, y + dy).unwrap();
                assert!((a - b).abs() <= l * (dx.abs() + dy.abs()) + 1e-12);
            }
        }
    }

    #[test]
    fn out_of_bounds_query() {
        let t = generate_track(SegmentKind::Straight, 50.0, 1).unwrap();
        let m = rasterize(&t, 0.5).unwrap();
        assert!(matches!(
            query_features(&m, -100.0, 0.0, 0.0),
            Err(Error::OutOfBounds { .. })
        ));
    }

    #[test]
    fn projection_recovers_offset() {
        let t = generate_track(SegmentKind::Curvy, 200.0, 6).unwrap();
        let s = 87.3;
        let p = t.point_at(s);
        let h = t.heading_at(s);
        let (x, y) = (p[0] - 0.7 * h.sin(), p[1] + 0.7 * h.cos());
        let (s2, lat, _) = t.project(x, y);
        assert!((s2 - s).abs() < 0.05, "{s2}");
        assert!((lat - 0.7).abs() < 0.01, "{lat}");
    }

    #[test]
    fn target_speed_is_piecewise() {
        let t = generate_track(SegmentKind::Straight, 200.0, 7).unwrap();
        let (a, _) = t.conflict_zones[0];
        assert_eq!(t.target_speed_at(0.0), 7.0);
        assert_eq!(t.target_speed_at(a), 4.0);
        assert_eq!(t.target_speed_at(199.0), 7.0);
    }
}
