//! TOML run configuration with `section.key=value` overrides.
//!
//! Missing keys take the defaults below; unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use situate_core::datamodel::WindowSpec;
use situate_core::decoder::ModelConfig;
use situate_core::numerics::AdamConfig;
use situate_core::objective::LossWeights;
use situate_core::pipeline::{AblationFlags, SuiteOptions, TrainConfig};
use situate_core::scenegen::SceneConfig;

use crate::error::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Feeds scene generation, initialization and batch order.
    pub seed: u64,
    pub scene: SceneSection,
    pub model: ModelSection,
    pub train: TrainSection,
    pub window: WindowSection,
    pub ablate: AblateSection,
    pub paths: PathsSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSection {
    pub n_objects: usize,
    pub room: [f64; 2],
    pub episodes: usize,
    pub gaze_lag: usize,
    pub gaze_noise_deg: f64,
    pub position_noise: f64,
    pub frame_rate_hz: f64,
    pub d_clip: usize,
    pub max_hand_speed: f64,
    pub grasp_radius: f64,
}

impl Default for SceneSection {
    fn default() -> Self {
        let c = SceneConfig::default();
        SceneSection {
            n_objects: c.n_objects,
            room: c.room,
            episodes: c.episodes,
            gaze_lag: c.gaze_lag,
            gaze_noise_deg: c.gaze_noise_deg,
            position_noise: c.position_noise,
            frame_rate_hz: c.frame_rate_hz,
            d_clip: c.d_clip,
            max_hand_speed: c.max_hand_speed,
            grasp_radius: c.grasp_radius,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub t_h: usize,
    pub t_f: usize,
    pub n_objects: usize,
    pub top_k: usize,
    pub d: usize,
    pub l_e: usize,
    pub l_i: usize,
    pub l_d: usize,
    pub d_clip: usize,
    pub hidden: usize,
    pub no_hierarchy: bool,
    pub vanilla_gcn: bool,
}

impl Default for ModelSection {
    fn default() -> Self {
        let c = ModelConfig::default();
        ModelSection {
            t_h: c.t_h,
            t_f: c.t_f,
            n_objects: c.n_objects,
            top_k: c.top_k,
            d: c.d,
            l_e: c.l_e,
            l_i: c.l_i,
            l_d: c.l_d,
            d_clip: c.d_clip,
            hidden: c.hidden,
            no_hierarchy: c.flags.no_hierarchy,
            vanilla_gcn: c.flags.vanilla_gcn,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Keep every n-th training window.
    pub window_step: usize,
    pub weights: WeightsSection,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainSection {
            epochs: t.epochs,
            batch_size: t.batch_size,
            lr: t.lr,
            decay: t.decay,
            beta1: t.adam.beta1,
            beta2: t.adam.beta2,
            eps: t.adam.eps,
            window_step: 1,
            weights: WeightsSection::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeightsSection {
    pub gaze: f64,
    pub rot: f64,
    pub pos: f64,
    pub center: f64,
    pub vel: f64,
    pub int: f64,
    pub state: f64,
}

impl Default for WeightsSection {
    fn default() -> Self {
        let [gaze, rot, pos, center, vel, int, state] = LossWeights::default().as_array();
        WeightsSection { gaze, rot, pos, center, vel, int, state }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowSection {
    pub stride: usize,
}

impl Default for WindowSection {
    fn default() -> Self {
        WindowSection { stride: WindowSpec::default().stride }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblateSection {
    pub k_values: Vec<usize>,
    /// Epochs of the K-sweep runs; 0 means `train.epochs`.
    pub k_epochs: usize,
}

impl Default for AblateSection {
    fn default() -> Self {
        AblateSection { k_values: SuiteOptions::default().k_values, k_epochs: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    /// Corpus directory written by `gen`.
    pub data: PathBuf,
    /// Checkpoints, loss curves and reports.
    pub run: PathBuf,
}

impl Default for PathsSection {
    fn default() -> Self {
        PathsSection { data: "data".into(), run: "run".into() }
    }
}

impl RunConfig {
    pub fn scene(&self) -> SceneConfig {
        let s = &self.scene;
        SceneConfig {
            seed: self.seed,
            n_objects: s.n_objects,
            room: s.room,
            episodes: s.episodes,
            gaze_lag: s.gaze_lag,
            gaze_noise_deg: s.gaze_noise_deg,
            position_noise: s.position_noise,
            frame_rate_hz: s.frame_rate_hz,
            d_clip: s.d_clip,
            max_hand_speed: s.max_hand_speed,
            grasp_radius: s.grasp_radius,
        }
    }

    pub fn model(&self) -> ModelConfig {
        let m = &self.model;
        ModelConfig {
            t_h: m.t_h,
            t_f: m.t_f,
            n_objects: m.n_objects,
            top_k: m.top_k,
            d: m.d,
            l_e: m.l_e,
            l_i: m.l_i,
            l_d: m.l_d,
            d_clip: m.d_clip,
            hidden: m.hidden,
            flags: AblationFlags { no_hierarchy: m.no_hierarchy, vanilla_gcn: m.vanilla_gcn },
        }
    }

    pub fn train(&self) -> TrainConfig {
        let t = &self.train;
        let w = &t.weights;
        TrainConfig {
            epochs: t.epochs,
            batch_size: t.batch_size,
            lr: t.lr,
            decay: t.decay,
            seed: self.seed,
            weights: LossWeights {
                gaze: w.gaze,
                rot: w.rot,
                pos: w.pos,
                center: w.center,
                vel: w.vel,
                int: w.int,
                state: w.state,
            },
            model: self.model(),
            adam: AdamConfig { beta1: t.beta1, beta2: t.beta2, eps: t.eps },
        }
    }

    pub fn window(&self) -> WindowSpec {
        WindowSpec {
            history: self.model.t_h,
            horizon: self.model.t_f,
            stride: self.window.stride,
            source_hz: self.scene.frame_rate_hz,
        }
    }

    pub fn suite(&self) -> SuiteOptions {
        SuiteOptions {
            k_values: self.ablate.k_values.clone(),
            k_epochs: (self.ablate.k_epochs > 0).then_some(self.ablate.k_epochs),
        }
    }

    /// Check every section against the core validators.
    pub fn validate(&self) -> Result<()> {
        self.scene().validate()?;
        self.train().validate()?;
        self.window().validate()?;
        if self.train.window_step == 0 {
            return Err(Error::Config("train.window_step must be at least 1".into()));
        }
        if self.scene.d_clip != self.model.d_clip {
            return Err(Error::Config(format!("scene.d_clip = {} but model.d_clip = {}", self.scene.d_clip, self.model.d_clip)));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config is plain data")
    }
}

/// Parse an override value as a TOML literal, falling back to a bare string.
fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Apply one `dotted.key=value` override to a TOML document.
pub fn apply_override(doc: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) =
        assignment.split_once('=').ok_or_else(|| Error::Config(format!("override {assignment:?} is not key=value")))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("bad override key {key:?}")));
    }
    let (last, parents) = path.split_last().expect("split yields at least one part");
    let mut table = doc;
    for p in parents {
        let entry = table.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry.as_table_mut().ok_or_else(|| Error::Config(format!("override {key:?}: {p} is not a section")))?;
    }
    table.insert(last.to_string(), parse_value(raw.trim()));
    Ok(())
}

/// Build a config from TOML text plus overrides, then validate it.
pub fn config_from_str(text: &str, overrides: &[String]) -> Result<RunConfig> {
    let mut doc: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    for o in overrides {
        apply_override(&mut doc, o)?;
    }
    let cfg: RunConfig = toml::Value::Table(doc).try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Load `path` (or defaults when `None`) and apply overrides.
pub fn load_config(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?,
        None => String::new(),
    };
    config_from_str(&text, overrides)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = config_from_str("", &[]).unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.train(), TrainConfig { seed: 0, ..TrainConfig::default() });
        assert_eq!(c.model(), ModelConfig::default());
        assert_eq!(c.window(), WindowSpec::default());
    }

    #[test]
    fn defaults_round_trip_through_toml() {
        let c = RunConfig::default();
        assert_eq!(config_from_str(&c.to_toml(), &[]).unwrap(), c);
    }

    #[test]
    fn overrides_reach_nested_keys() {
        let c = config_from_str(
            "seed = 3\n[train]\nepochs = 7\n",
            &["train.weights.center=2.5".into(), "model.vanilla_gcn=true".into(), "seed=9".into()],
        )
        .unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.train.epochs, 7);
        assert_eq!(c.train().weights.center, 2.5);
        assert!(c.model().flags.vanilla_gcn);
        assert_eq!(c.scene().seed, 9);
    }

    #[test]
    fn unknown_and_invalid_keys_rejected() {
        assert!(matches!(config_from_str("[train]\nepoch = 3\n", &[]), Err(Error::Config(_))));
        assert!(matches!(config_from_str("", &["bogus=1".into()]), Err(Error::Config(_))));
        assert!(matches!(config_from_str("", &["model.top_k=60".into()]), Err(Error::Core(_))));
        assert!(matches!(config_from_str("", &["train.lr".into()]), Err(Error::Config(_))));
    }

    #[test]
    fn string_values_fall_back() {
        let c = config_from_str("", &["paths.data=/tmp/corpus".into()]).unwrap();
        assert_eq!(c.paths.data, PathBuf::from("/tmp/corpus"));
    }
}
