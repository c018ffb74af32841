use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::airflow::{JetModel, PerceptionModel, CALIBRATED_WEBER};
use crate::geometry::{CameraIntrinsics, MarkerSpec};
use crate::pipeline::StageLatencyModel;
use crate::safety::SafetyZoneConfig;
use crate::sim::{HumanModel, RobotTrajectory, World, DEFAULT_DURATION_S};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SafetySection {
    pub had_m: f64,
    pub danger_m: f64,
    pub hysteresis_m: f64,
}

impl Default for SafetySection {
    fn default() -> Self {
        let z = SafetyZoneConfig::<f64>::default();
        Self { had_m: z.had, danger_m: z.danger, hysteresis_m: z.hysteresis }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JetSection {
    pub v0_mps: f64,
    pub duct_d_m: f64,
    pub core_k: f64,
}

impl Default for JetSection {
    fn default() -> Self {
        let j = JetModel::<f64>::default();
        Self { v0_mps: j.v0, duct_d_m: j.duct_d, core_k: j.core_k }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerceptionSection {
    pub weber: f64,
    pub detect_q_pa: f64,
    /// Impeller duty for single-judgement perception runs.
    pub duty_pct: f64,
}

impl Default for PerceptionSection {
    fn default() -> Self {
        Self { weber: CALIBRATED_WEBER, detect_q_pa: PerceptionModel::<f64>::default().detect_q, duty_pct: 100.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraSection {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub image_w: u32,
    pub image_h: u32,
}

impl Default for CameraSection {
    fn default() -> Self {
        let k = CameraIntrinsics::<f64>::default();
        Self { fx: k.fx, fy: k.fy, cx: k.cx, cy: k.cy, image_w: k.image_w, image_h: k.image_h }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    pub duration_s: f64,
    pub active_duty_pct: f64,
    pub pixel_noise_px: f64,
    pub marker_side_m: f64,
    pub marker_tilt: [f64; 3],
    pub camera: CameraSection,
    pub human: HumanModel,
    pub robot: RobotTrajectory,
}

impl Default for SimSection {
    fn default() -> Self {
        let w = World::default();
        Self {
            duration_s: DEFAULT_DURATION_S,
            active_duty_pct: w.active_duty_pct,
            pixel_noise_px: w.pixel_noise_px,
            marker_side_m: w.marker.side_len,
            marker_tilt: w.marker_tilt,
            camera: CameraSection::default(),
            human: w.human,
            robot: w.robot,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub safety: SafetySection,
    pub jet: JetSection,
    pub perception: PerceptionSection,
    pub latency: StageLatencyModel,
    pub sim: SimSection,
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn apply_override(root: &mut Value, assignment: &str) -> Result<(), String> {
    let (key, raw) =
        assignment.split_once('=').ok_or_else(|| format!("override {assignment:?} is not of the form key=value"))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_owned()));
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let Value::Object(map) = node else {
            return Err(format!("override key {key:?}: {:?} is not a section", parts[..i].join(".")));
        };
        if !map.contains_key(*part) {
            return Err(format!("unknown config key {key:?}"));
        }
        node = map.get_mut(*part).expect("checked");
    }
    *node = value;
    Ok(())
}

impl RunConfig {
    /// Defaults, overlaid by the optional JSON file, then by `key=value`
    /// overrides. Unknown keys are rejected at every stage.
    pub fn load(file: Option<&Path>, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut root = serde_json::to_value(RunConfig::default()).expect("default config serializes");
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)
                .map_err(|e| ConfigError::Io(format!("cannot read config {}: {e}", path.display())))?;
            let over: Value = serde_json::from_str(&text)
                .map_err(|e| ConfigError::Invalid(format!("config {} is not valid JSON: {e}", path.display())))?;
            if !over.is_object() {
                return Err(ConfigError::Invalid("config file must hold a JSON object".into()));
            }
            merge(&mut root, over);
        }
        for o in overrides {
            apply_override(&mut root, o).map_err(ConfigError::Invalid)?;
        }
        let cfg: RunConfig = serde_json::from_value(root).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        cfg.world().map_err(ConfigError::Invalid)?;
        if !(cfg.sim.duration_s > 0.0 && cfg.sim.duration_s.is_finite()) {
            return Err(ConfigError::Invalid("sim.duration_s must be positive".into()));
        }
        if !(cfg.perception.duty_pct > 0.0 && cfg.perception.duty_pct <= 100.0) {
            return Err(ConfigError::Invalid("perception.duty_pct must lie in (0, 100]".into()));
        }
        Ok(cfg)
    }

    pub fn zones(&self) -> SafetyZoneConfig<f64> {
        SafetyZoneConfig { had: self.safety.had_m, danger: self.safety.danger_m, hysteresis: self.safety.hysteresis_m }
    }

    pub fn jet(&self) -> JetModel<f64> {
        JetModel { v0: self.jet.v0_mps, duct_d: self.jet.duct_d_m, core_k: self.jet.core_k }
    }

    pub fn perception(&self) -> PerceptionModel<f64> {
        PerceptionModel { weber: self.perception.weber, detect_q: self.perception.detect_q_pa }
    }

    pub fn camera(&self) -> CameraIntrinsics<f64> {
        let c = &self.sim.camera;
        CameraIntrinsics { fx: c.fx, fy: c.fy, cx: c.cx, cy: c.cy, image_w: c.image_w, image_h: c.image_h }
    }

    /// Validated simulation world.
    pub fn world(&self) -> Result<World, String> {
        let marker = MarkerSpec::new(self.sim.marker_side_m, 0).map_err(|e| e.to_string())?;
        let w = World {
            human: self.sim.human.clone(),
            robot: self.sim.robot.clone(),
            zones: self.zones(),
            jet: self.jet(),
            perception: self.perception(),
            latency: self.latency,
            camera: self.camera(),
            marker,
            marker_tilt: self.sim.marker_tilt,
            pixel_noise_px: self.sim.pixel_noise_px,
            active_duty_pct: self.sim.active_duty_pct,
        };
        w.validate().map_err(|e| e.to_string())?;
        Ok(w)
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConfigError {
    Io(String),
    Invalid(String),
}
