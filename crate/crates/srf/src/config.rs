//! JSON configuration: one document covering training, network, rendering,
//! data generation, and evaluation, with dotted-path command-line overrides.
//! Unknown keys are rejected.

use serde::{Deserialize, Serialize};

use srf_core::field::{
    FieldConfig, ImplicitNetConfig, PositionalEncodingConfig, RenderNetConfig,
};
use srf_core::metrics::{ChamferMode, EvalSettings};
use srf_core::train::{
    CurriculumSchedule, LossWeights, StageTwoStart, SupervisionSource, TrainConfig, WeightKnob,
};

#[derive(Debug)]
pub enum ConfigError {
    Io(std::io::Error),
    Parse(String),
    BadOverride(String),
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ConfigError::Io(e) => write!(f, "io error: {e}"),
            ConfigError::Parse(m) => write!(f, "config error: {m}"),
            ConfigError::BadOverride(m) => write!(f, "bad --set override: {m}"),
        }
    }
}

impl std::error::Error for ConfigError {}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub epochs: usize,
    pub rays_per_iteration: usize,
    pub max_iterations_per_epoch: usize,
    pub point_batch: usize,
    pub n_uniform: usize,
    pub n_near: usize,
    pub near_band: f64,
    pub lr: f64,
    pub lr_decay_factor: f64,
    pub lr_decay_at: [f64; 2],
    pub samples_per_ray: usize,
    pub normal_eps: f64,
    pub seed: u64,
    /// "analytic" or a grid resolution (> 0).
    pub grid_supervision: Option<usize>,
    pub weights: WeightsSection,
    pub curriculum: CurriculumSection,
}

impl Default for TrainSection {
    fn default() -> Self {
        let d = TrainConfig::default();
        TrainSection {
            epochs: d.epochs,
            rays_per_iteration: d.rays_per_iteration,
            max_iterations_per_epoch: d.max_iterations_per_epoch,
            point_batch: d.point_batch,
            n_uniform: d.n_uniform,
            n_near: d.n_near,
            near_band: d.near_band,
            lr: d.lr,
            lr_decay_factor: d.lr_decay_factor,
            lr_decay_at: [d.lr_decay_at.0, d.lr_decay_at.1],
            samples_per_ray: d.samples_per_ray,
            normal_eps: d.normal_eps,
            seed: d.seed,
            grid_supervision: None,
            weights: WeightsSection::default(),
            curriculum: CurriculumSection::default(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WeightsSection {
    pub sdf: f64,
    pub rgb: f64,
    pub rgb_multiplier: f64,
    pub depth: f64,
    pub depth_multiplier: f64,
    pub normal: f64,
    pub normal_multiplier: f64,
}

impl Default for WeightsSection {
    fn default() -> Self {
        WeightsSection {
            sdf: 1.0,
            rgb: 1.0,
            rgb_multiplier: 1.0,
            depth: 1.0,
            depth_multiplier: 1.0,
            normal: 1.0,
            normal_multiplier: 1.0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CurriculumSection {
    /// Fixed Stage Two start epoch; overrides the fraction when set.
    pub stage_two_epoch: Option<usize>,
    /// Stage Two start as a fraction of the epoch budget.
    pub stage_two_fraction: f64,
    /// Ramp slope per epoch; derived from the caps when absent.
    pub eta: Option<f64>,
    pub cap_rgb: f64,
    pub cap_depth: f64,
    pub cap_normal: f64,
    pub capped: bool,
}

impl Default for CurriculumSection {
    fn default() -> Self {
        let d = CurriculumSchedule::default();
        CurriculumSection {
            stage_two_epoch: None,
            stage_two_fraction: 0.5,
            eta: d.eta,
            cap_rgb: d.cap_rgb,
            cap_depth: d.cap_depth,
            cap_normal: d.cap_normal,
            capped: d.capped,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkSection {
    pub layers: usize,
    pub hidden: usize,
    pub geo_features: usize,
    pub skip: bool,
    pub render_layers: usize,
    pub render_hidden: usize,
    pub frequencies: usize,
    pub omega: f64,
    #[serde(default = "default_true")]
    pub include_input: bool,
    pub instance_features: usize,
    pub pixel_features: usize,
    pub feature_res: [usize; 2],
}

impl Default for NetworkSection {
    fn default() -> Self {
        let d = FieldConfig::desk();
        NetworkSection {
            layers: d.implicit.layers,
            hidden: d.implicit.hidden,
            geo_features: d.implicit.geo_features,
            skip: d.implicit.skip,
            render_layers: d.render.layers,
            render_hidden: d.render.hidden,
            frequencies: d.encoding.frequencies,
            omega: d.encoding.omega,
            include_input: d.encoding.include_input,
            instance_features: d.instance_features,
            pixel_features: d.pixel_features,
            feature_res: [d.feature_res.0, d.feature_res.1],
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RenderSection {
    pub samples_per_ray: usize,
    pub background: [f64; 3],
    pub width: u32,
    pub height: u32,
    pub fov_deg: f64,
    pub beta_override: Option<f64>,
}

impl Default for RenderSection {
    fn default() -> Self {
        RenderSection {
            samples_per_ray: 64,
            background: [0.5, 0.5, 0.5],
            width: 96,
            height: 96,
            fov_deg: 40.0,
            beta_override: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    pub views: usize,
    pub ring_radius: f64,
    pub elevation_deg: f64,
    pub width: u32,
    pub height: u32,
    pub fov_deg: f64,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            views: 8,
            ring_radius: 3.0,
            elevation_deg: 20.0,
            width: 64,
            height: 64,
            fov_deg: 40.0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub tau: f64,
    pub samples: usize,
    /// "mean" or "sum" squared-distance reduction per direction.
    pub chamfer_mode: String,
    pub icp_max_iters: usize,
    pub icp_tol: f64,
    pub seed: u64,
}

impl Default for EvalSection {
    fn default() -> Self {
        let d = EvalSettings::default();
        EvalSection {
            tau: d.tau,
            samples: d.samples,
            chamfer_mode: "mean".into(),
            icp_max_iters: d.icp_max_iters,
            icp_tol: d.icp_tol,
            seed: d.seed,
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub train: TrainSection,
    pub network: NetworkSection,
    pub render: RenderSection,
    pub data: DataSection,
    pub eval: EvalSection,
}

impl Config {
    pub fn field_config(&self) -> FieldConfig {
        let n = &self.network;
        FieldConfig {
            encoding: PositionalEncodingConfig {
                frequencies: n.frequencies,
                omega: n.omega,
                include_input: n.include_input,
            },
            implicit: ImplicitNetConfig {
                layers: n.layers,
                hidden: n.hidden,
                geo_features: n.geo_features,
                skip: n.skip,
            },
            render: RenderNetConfig { layers: n.render_layers, hidden: n.render_hidden },
            instance_features: n.instance_features,
            pixel_features: n.pixel_features,
            feature_res: (n.feature_res[0], n.feature_res[1]),
        }
    }

    pub fn train_config(&self) -> Result<TrainConfig, ConfigError> {
        let t = &self.train;
        if t.epochs == 0 || t.rays_per_iteration == 0 {
            return Err(ConfigError::Parse("epochs and rays_per_iteration must be >= 1".into()));
        }
        let supervision = match t.grid_supervision {
            Some(res) if res >= 2 => SupervisionSource::Grid { resolution: res },
            Some(res) => {
                return Err(ConfigError::Parse(format!(
                    "grid_supervision resolution {res} must be >= 2"
                )))
            }
            None => SupervisionSource::Analytic,
        };
        let c = &t.curriculum;
        Ok(TrainConfig {
            epochs: t.epochs,
            rays_per_iteration: t.rays_per_iteration,
            max_iterations_per_epoch: t.max_iterations_per_epoch.max(1),
            point_batch: t.point_batch,
            n_uniform: t.n_uniform,
            n_near: t.n_near,
            near_band: t.near_band,
            lr: t.lr,
            lr_decay_factor: t.lr_decay_factor,
            lr_decay_at: (t.lr_decay_at[0], t.lr_decay_at[1]),
            samples_per_ray: t.samples_per_ray,
            normal_eps: t.normal_eps,
            seed: t.seed,
            weights: LossWeights {
                sdf: t.weights.sdf,
                rgb: WeightKnob { base: t.weights.rgb, multiplier: t.weights.rgb_multiplier },
                depth: WeightKnob {
                    base: t.weights.depth,
                    multiplier: t.weights.depth_multiplier,
                },
                normal: WeightKnob {
                    base: t.weights.normal,
                    multiplier: t.weights.normal_multiplier,
                },
            },
            schedule: CurriculumSchedule {
                stage_two_start: match c.stage_two_epoch {
                    Some(e) => StageTwoStart::Epoch(e),
                    None => StageTwoStart::Fraction(c.stage_two_fraction),
                },
                eta: c.eta,
                cap_rgb: c.cap_rgb,
                cap_depth: c.cap_depth,
                cap_normal: c.cap_normal,
                capped: c.capped,
            },
            supervision,
            field: self.field_config(),
        })
    }

    pub fn eval_settings(&self) -> Result<EvalSettings, ConfigError> {
        let mode = match self.eval.chamfer_mode.as_str() {
            "mean" => ChamferMode::MeanPerDirection,
            "sum" => ChamferMode::SumPerDirection,
            other => {
                return Err(ConfigError::Parse(format!(
                    "eval.chamfer_mode must be 'mean' or 'sum', got '{other}'"
                )))
            }
        };
        Ok(EvalSettings {
            tau: self.eval.tau,
            samples: self.eval.samples,
            chamfer_mode: mode,
            icp_max_iters: self.eval.icp_max_iters,
            icp_tol: self.eval.icp_tol,
            seed: self.eval.seed,
        })
    }

    /// Stable serialization used for the checkpoint config hash.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}

/// Load a config file (or defaults when `path` is None) and apply dotted-path
/// overrides like `train.epochs=100`.
pub fn load_config(path: Option<&std::path::Path>, overrides: &[String]) -> Result<Config, ConfigError> {
    let mut value: serde_json::Value = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(ConfigError::Io)?;
            serde_json::from_str(&text).map_err(|e| ConfigError::Parse(e.to_string()))?
        }
        None => serde_json::json!({}),
    };
    for item in overrides {
        apply_override(&mut value, item)?;
    }
    serde_json::from_value(value).map_err(|e| ConfigError::Parse(e.to_string()))
}

fn apply_override(value: &mut serde_json::Value, item: &str) -> Result<(), ConfigError> {
    let (path, raw) = item
        .split_once('=')
        .ok_or_else(|| ConfigError::BadOverride(format!("'{item}' is not key=value")))?;
    let parsed: serde_json::Value = serde_json::from_str(raw)
        .unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
    let mut cursor = value;
    let segments: Vec<&str> = path.split('.').collect();
    if segments.is_empty() {
        return Err(ConfigError::BadOverride("empty key".into()));
    }
    for seg in &segments[..segments.len() - 1] {
        if !cursor.is_object() {
            return Err(ConfigError::BadOverride(format!("'{seg}' is not an object")));
        }
        cursor = cursor
            .as_object_mut()
            .unwrap()
            .entry(seg.to_string())
            .or_insert_with(|| serde_json::json!({}));
    }
    let last = segments[segments.len() - 1];
    cursor
        .as_object_mut()
        .ok_or_else(|| ConfigError::BadOverride(format!("'{path}' parent is not an object")))?
        .insert(last.to_string(), parsed);
    Ok(())
}
