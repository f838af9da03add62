//! Linear reward model over the fixed twelve-feature registry.
//!
//! The reward of a state-action pair is `R = -Σ θ_i f_i`: every feature is a
//! cost and every weight a non-negative penalty. A policy's value is the same
//! inner product taken against its discounted feature path integral.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of reward features.
pub const K: usize = 12;

/// Schema version shared by weight, replay-buffer and episode files.
pub const SCHEMA_VERSION: u32 = 1;

/// A per-feature vector in canonical registry order.
pub type FeatureVector = [f64; K];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureKind {
    Motion,
    Infrastructural,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FeatureDescriptor {
    pub name: &'static str,
    pub kind: FeatureKind,
    pub units: &'static str,
}

/// Canonical feature indices. The discriminant is the position in every
/// feature vector, weight file and buffer line.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(usize)]
pub enum Feature {
    VTargetDev = 0,
    AccelLon,
    JerkLon,
    AccelLat,
    JerkLat,
    EndDirection,
    Creeping,
    LaneCenter,
    CurbProximity,
    LanePotential,
    DirectionDev,
    ConflictArea,
}

impl Feature {
    pub const ALL: [Feature; K] = [
        Feature::VTargetDev,
        Feature::AccelLon,
        Feature::JerkLon,
        Feature::AccelLat,
        Feature::JerkLat,
        Feature::EndDirection,
        Feature::Creeping,
        Feature::LaneCenter,
        Feature::CurbProximity,
        Feature::LanePotential,
        Feature::DirectionDev,
        Feature::ConflictArea,
    ];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn descriptor(self) -> &'static FeatureDescriptor {
        &FEATURE_REGISTRY[self.index()]
    }

    pub fn name(self) -> &'static str {
        self.descriptor().name
    }
}

/// The ordered feature registry. Seven motion features followed by five
/// infrastructural ones; the order never changes.
pub const FEATURE_REGISTRY: [FeatureDescriptor; K] = [
    FeatureDescriptor { name: "v_target_dev", kind: FeatureKind::Motion, units: "m/s*s" },
    FeatureDescriptor { name: "accel_lon", kind: FeatureKind::Motion, units: "m/s^2*s" },
    FeatureDescriptor { name: "jerk_lon", kind: FeatureKind::Motion, units: "m/s^3*s" },
    FeatureDescriptor { name: "accel_lat", kind: FeatureKind::Motion, units: "m/s^2*s" },
    FeatureDescriptor { name: "jerk_lat", kind: FeatureKind::Motion, units: "m/s^3*s" },
    FeatureDescriptor { name: "end_direction", kind: FeatureKind::Motion, units: "rad/pi" },
    FeatureDescriptor { name: "creeping", kind: FeatureKind::Motion, units: "s" },
    FeatureDescriptor { name: "lane_center", kind: FeatureKind::Infrastructural, units: "1*s" },
    FeatureDescriptor { name: "curb_proximity", kind: FeatureKind::Infrastructural, units: "1*s" },
    FeatureDescriptor { name: "lane_potential", kind: FeatureKind::Infrastructural, units: "1*s" },
    FeatureDescriptor { name: "direction_dev", kind: FeatureKind::Infrastructural, units: "1*s" },
    FeatureDescriptor { name: "conflict_area", kind: FeatureKind::Infrastructural, units: "1*s" },
];

/// Names of the infrastructural features, which are also the feature-map channels.
pub const INFRASTRUCTURAL_CHANNELS: [&str; 5] = [
    "lane_center",
    "curb_proximity",
    "lane_potential",
    "direction_dev",
    "conflict_area",
];

pub fn feature_names() -> Vec<&'static str> {
    FEATURE_REGISTRY.iter().map(|d| d.name).collect()
}

/// Hand-tuned weights shipped with the toolkit. These are our own tuning for
/// the synthetic tracks, not values taken from any recorded drive.
const EXPERT_THETA: FeatureVector = [
    1.0,  // v_target_dev
    0.4,  // accel_lon
    0.1,  // jerk_lon
    0.5,  // accel_lat
    0.2,  // jerk_lat
    4.0,  // end_direction
    2.0,  // creeping
    1.5,  // lane_center
    3.0,  // curb_proximity
    1.0,  // lane_potential
    4.0,  // direction_dev
    0.3,  // conflict_area
];

/// Validated, non-negative reward weights.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RewardWeights {
    theta: FeatureVector,
}

impl RewardWeights {
    pub fn new(theta: FeatureVector) -> Result<Self> {
        validate_theta(&theta)?;
        Ok(Self { theta })
    }

    pub fn from_slice(theta: &[f64]) -> Result<Self> {
        let arr: FeatureVector = theta.try_into().map_err(|_| {
            Error::InvalidArgument(format!("expected {K} weights, got {}", theta.len()))
        })?;
        Self::new(arr)
    }

    pub fn zeros() -> Self {
        Self { theta: [0.0; K] }
    }

    pub fn expert() -> Self {
        Self { theta: EXPERT_THETA }
    }

    /// Uniform weights in `[0.1, 1.0]`, deterministic in `seed`.
    pub fn random(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut theta = [0.0; K];
        for w in theta.iter_mut() {
            *w = rng.gen_range(0.1..=1.0);
        }
        Self { theta }
    }

    pub fn theta(&self) -> &FeatureVector {
        &self.theta
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let mut theta = self.theta;
        theta.iter_mut().for_each(|w| *w *= factor);
        Self::new(theta)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn to_json(&self) -> String {
        let file = WeightsFile {
            schema: SCHEMA_VERSION,
            feature_names: feature_names().into_iter().map(String::from).collect(),
            theta: self.theta.to_vec(),
        };
        let mut s = serde_json::to_string_pretty(&file).expect("weights serialize");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: WeightsFile = serde_json::from_str(text)?;
        if file.schema != SCHEMA_VERSION {
            return Err(Error::Validation(format!(
                "unsupported weights schema {}",
                file.schema
            )));
        }
        check_feature_names(&file.feature_names)?;
        Self::from_slice(&file.theta)
    }
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self::expert()
    }
}

/// Preset or file reference for weights, as accepted on the command line:
/// `expert`, `random:SEED`, `zero`, or a path to a weights file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum WeightsSource {
    Expert,
    Random(u64),
    Zero,
    File(std::path::PathBuf),
}

impl WeightsSource {
    pub fn resolve(&self) -> Result<RewardWeights> {
        match self {
            WeightsSource::Expert => Ok(RewardWeights::expert()),
            WeightsSource::Random(seed) => Ok(RewardWeights::random(*seed)),
            WeightsSource::Zero => Ok(RewardWeights::zeros()),
            WeightsSource::File(p) => RewardWeights::load(p),
        }
    }
}

impl FromStr for WeightsSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "expert" {
            return Ok(WeightsSource::Expert);
        }
        if s == "zero" {
            return Ok(WeightsSource::Zero);
        }
        if let Some(seed) = s.strip_prefix("random:") {
            let seed = seed
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad random seed in '{s}'")))?;
            return Ok(WeightsSource::Random(seed));
        }
        let path = s.strip_prefix("file:").unwrap_or(s);
        Ok(WeightsSource::File(path.into()))
    }
}

impl fmt::Display for WeightsSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WeightsSource::Expert => write!(f, "expert"),
            WeightsSource::Random(seed) => write!(f, "random:{seed}"),
            WeightsSource::Zero => write!(f, "zero"),
            WeightsSource::File(p) => write!(f, "{}", p.display()),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WeightsFile {
    schema: u32,
    feature_names: Vec<String>,
    theta: Vec<f64>,
}

pub(crate) fn check_feature_names(names: &[String]) -> Result<()> {
    let expected = feature_names();
    if names.len() != expected.len() || names.iter().zip(&expected).any(|(a, b)| a != b) {
        return Err(Error::Validation(format!(
            "feature names {names:?} do not match registry order {expected:?}"
        )));
    }
    Ok(())
}

fn validate_theta(theta: &[f64]) -> Result<()> {
    for (i, w) in theta.iter().enumerate() {
        if !w.is_finite() {
            return Err(Error::Validation(format!(
                "weight {} ({}) is not finite",
                i, FEATURE_REGISTRY[i].name
            )));
        }
        if *w < 0.0 {
            return Err(Error::Validation(format!(
                "weight {} ({}) is negative: {w}",
                i, FEATURE_REGISTRY[i].name
            )));
        }
    }
    Ok(())
}

#[inline]
pub fn dot(a: &FeatureVector, b: &FeatureVector) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `R = -⟨θ, f⟩` on slices of matching length.
pub fn reward(features: &[f64], theta: &[f64]) -> Result<f64> {
    if features.len() != theta.len() {
        return Err(Error::InvalidArgument(format!(
            "feature dimension {} does not match weight dimension {}",
            features.len(),
            theta.len()
        )));
    }
    Ok(-features.iter().zip(theta).map(|(f, w)| f * w).sum::<f64>())
}

/// Value of a policy from its (already discounted) feature path integral.
pub fn policy_value(feature_integral: &[f64], theta: &[f64]) -> Result<f64> {
    reward(feature_integral, theta)
}

#[inline]
pub(crate) fn value_of(feature_integral: &FeatureVector, weights: &RewardWeights) -> f64 {
    -dot(feature_integral, &weights.theta)
}
