//! Run configuration: every tunable, with defaults, in one schema-versioned
//! JSON document. Unknown keys are rejected at every level.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::demos::DemoConfig;
use crate::envmodel::TrackConfig;
use crate::error::{Error, Result};
use crate::irl::IrlConfig;
use crate::planner::PlannerConfig;
use crate::reward::SCHEMA_VERSION;
use crate::vehicle::VehicleConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub schema: u32,
    pub track: TrackConfig,
    pub vehicle: VehicleConfig,
    pub planner: PlannerConfig,
    pub demos: DemoConfig,
    pub irl: IrlConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema: SCHEMA_VERSION,
            track: TrackConfig::default(),
            vehicle: VehicleConfig::default(),
            planner: PlannerConfig::default(),
            demos: DemoConfig::default(),
            irl: IrlConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serialize");
        s.push('\n');
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Validation(what.to_string()));
        if self.schema != SCHEMA_VERSION {
            return bad(&format!("unsupported config schema {}", self.schema));
        }
        let t = &self.track;
        if !(t.lane_width > 0.0 && t.resolution > 0.0 && t.point_spacing > 0.0 && t.kappa_max >= 0.0) {
            return bad("track: lane_width, resolution and point_spacing must be positive");
        }
        let v = &self.vehicle;
        if !(v.wheelbase > 0.0 && v.duration > 0.0 && v.a_max > 0.0 && v.a_lat_max > 0.0 && v.wheel_angle_max > 0.0) {
            return bad("vehicle: wheelbase, duration and limits must be positive");
        }
        if v.substeps < 8 {
            return bad("vehicle.substeps must be at least 8");
        }
        if v.speed_offsets.is_empty() || v.wheel_offsets.is_empty() {
            return bad("vehicle: action grid must not be empty");
        }
        let p = &self.planner;
        if p.horizon == 0 || p.prune_cap == 0 || p.bucket_keep == 0 {
            return bad("planner: horizon, prune_cap and bucket_keep must be at least 1");
        }
        if !(p.gamma > 0.0 && p.gamma <= 1.0) || !(p.bucket_cell > 0.0 && p.bucket_speed > 0.0) {
            return bad("planner: gamma must be in (0, 1], bucket sizes positive");
        }
        let d = &self.demos;
        if !(d.alpha0 > 0.0 && d.alpha0 <= 1.0) || !(d.demo_threshold >= 0.0) || d.augment_k == 0 || !(d.odometry_rate > 0.0) {
            return bad("demos: alpha0 in (0, 1], threshold >= 0, augment_k >= 1, odometry_rate > 0");
        }
        let i = &self.irl;
        if !(i.lr0 >= 0.0) || !(i.lr_decay > 0.0) || i.batch_size == 0 {
            return bad("irl: lr0 >= 0, lr_decay > 0, batch_size >= 1");
        }
        Ok(())
    }
}
