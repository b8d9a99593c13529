//! Scenario configuration: one text file binds sensors, class mapping, loss
//! weights, optimizer/schedule constants, dataset sizes, synthetic-scene
//! parameters, and the ablation flags for a full experiment.
//!
//! Format: UTF-8, `#` comments, top-level `key = value` pairs followed by
//! `[section]` blocks of more pairs. [`render`] writes the canonical form and
//! `load(render(c)) == c` holds exactly.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::io::synth::SceneParams;
use crate::io::SensorSpec;
use crate::losses::LossWeights;
use crate::optim::Schedule;

/// Sensor geometry as written in configs.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SensorConfig {
    pub beams: usize,
    pub fov_up_deg: f64,
    pub fov_down_deg: f64,
    pub horizontal_resolution: usize,
    pub max_range: f64,
}

impl SensorConfig {
    pub fn to_spec(&self) -> SensorSpec {
        SensorSpec::linear(
            self.beams,
            self.fov_up_deg,
            self.fov_down_deg,
            self.horizontal_resolution,
            self.max_range,
        )
    }
}

/// Optimizer constants for the three parameter groups.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct OptimConfig {
    pub lr_2d: f64,
    pub momentum_2d: f64,
    pub lr_3d: f64,
    pub beta1_3d: f64,
    pub beta2_3d: f64,
    pub lr_disc: f64,
    pub beta1_disc: f64,
    pub beta2_disc: f64,
}

/// Schedule constants: multi-step for the segmentation optimizers,
/// polynomial for the discriminators.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ScheduleConfig {
    pub milestones: Vec<u64>,
    pub gamma: f64,
    pub poly_power: f64,
}

/// Run-shape constants.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    pub max_iter: u64,
    pub batch_size: usize,
    pub val_every: u64,
    pub image_width: usize,
    pub cutout_width: usize,
    pub seed: u64,
    pub source_scans: usize,
    pub target_scans: usize,
    pub val_scans: usize,
    pub test_scans: usize,
}

/// 2D and 3D augmentation knobs.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AugmentConfig {
    pub flip_prob: f64,
    pub dropout_patches: usize,
    pub dropout_max_height: usize,
    pub dropout_max_width: usize,
    pub rotation_deg: f64,
    pub translation: f64,
    pub flip_x_prob: f64,
    pub flip_y_prob: f64,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    /// Built-in class-mapping name.
    pub mapping: String,
    pub source_sensor: SensorConfig,
    pub target_sensor: SensorConfig,
    pub weights: LossWeights,
    pub optim: OptimConfig,
    pub schedule: ScheduleConfig,
    pub train: TrainConfig,
    pub augment: AugmentConfig,
    pub scene_source: SceneParams,
    pub scene_target: SceneParams,
    pub enable_targetlike: bool,
    pub enable_discriminators: bool,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        let err = |m: String| Err(Error::ConfigError(m));
        if self.source_sensor.beams < 2 || self.target_sensor.beams < 2 {
            return err("sensors need at least 2 beams".into());
        }
        if self.train.batch_size == 0 {
            return err("batch-size must be >= 1".into());
        }
        if self.train.cutout_width > self.train.image_width {
            return err(format!(
                "cutout-width {} exceeds image-width {}",
                self.train.cutout_width, self.train.image_width
            ));
        }
        if self.train.val_every == 0 || self.train.max_iter == 0 {
            return err("max-iter and val-every must be positive".into());
        }
        if self.enable_targetlike && self.target_sensor.beams > self.source_sensor.beams {
            return err("target-like generation needs target beams <= source beams".into());
        }
        crate::io::ClassMapping::builtin(&self.mapping)?;
        Ok(())
    }

    pub fn seg_schedule(&self, base: f64) -> Schedule {
        Schedule::MultiStep {
            base,
            gamma: self.schedule.gamma,
            milestones: self.schedule.milestones.clone(),
        }
    }

    pub fn disc_schedule(&self) -> Schedule {
        Schedule::Polynomial {
            base: self.optim.lr_disc,
            max_iter: self.train.max_iter,
            power: self.schedule.poly_power,
        }
    }
}

/// The training-mode variants used by experiments and ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Variant {
    /// Cross-modal + discriminators + target-like.
    Full,
    /// Adversarial weights zeroed, discriminators disabled.
    NoDiscriminator,
    /// Target-like stream disabled.
    NoTargetlike,
    /// Both ablations at once.
    NoDisNoTgl,
    /// Supervised training on the source domain only.
    SourceOnly,
    /// Supervised training on labelled target data (upper bound).
    Oracle,
}

impl Variant {
    pub fn tag(&self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoDiscriminator => "no-discriminator",
            Variant::NoTargetlike => "no-targetlike",
            Variant::NoDisNoTgl => "no-dis-no-tgl",
            Variant::SourceOnly => "baseline",
            Variant::Oracle => "oracle",
        }
    }

    pub fn parse(s: &str) -> Result<Variant> {
        Ok(match s {
            "full" => Variant::Full,
            "no-discriminator" => Variant::NoDiscriminator,
            "no-targetlike" => Variant::NoTargetlike,
            "no-dis-no-tgl" => Variant::NoDisNoTgl,
            "baseline" => Variant::SourceOnly,
            "oracle" => Variant::Oracle,
            other => return Err(Error::ConfigError(format!("unknown variant '{other}'"))),
        })
    }
}

fn zero_adversarial(w: &mut LossWeights) {
    w.lambda_g2d_tp = 0.0;
    w.lambda_g3d_tp = 0.0;
    w.lambda_g2d_tf = 0.0;
    w.lambda_d2d_tp = 0.0;
    w.lambda_d3d_tp = 0.0;
    w.lambda_d2d_tf = 0.0;
    w.lambda_d2d_sp = 0.0;
    w.lambda_d3d_sp = 0.0;
    w.lambda_d2d_sf = 0.0;
}

/// Specialize a config for a training variant.
pub fn apply_variant(cfg: &ScenarioConfig, variant: Variant) -> ScenarioConfig {
    let mut out = cfg.clone();
    out.name = format!("{}-{}", cfg.name, variant.tag());
    match variant {
        Variant::Full => {
            out.name = cfg.name.clone();
        }
        Variant::NoDiscriminator => {
            zero_adversarial(&mut out.weights);
            out.enable_discriminators = false;
        }
        Variant::NoTargetlike => {
            out.weights.lambda_tl = 0.0;
            out.enable_targetlike = false;
        }
        Variant::NoDisNoTgl => {
            zero_adversarial(&mut out.weights);
            out.enable_discriminators = false;
            out.weights.lambda_tl = 0.0;
            out.enable_targetlike = false;
        }
        Variant::SourceOnly | Variant::Oracle => {
            zero_adversarial(&mut out.weights);
            out.enable_discriminators = false;
            out.weights.lambda_s = 0.0;
            out.weights.lambda_tl = 0.0;
            out.weights.lambda_t = 0.0;
            out.enable_targetlike = false;
        }
    }
    out
}

/// The four ablation variants: full, no-discriminator, no-targetlike, and
/// both removed. The full variant equals the input config.
pub fn ablation_variants(cfg: &ScenarioConfig) -> Vec<(Variant, ScenarioConfig)> {
    [Variant::Full, Variant::NoDiscriminator, Variant::NoTargetlike, Variant::NoDisNoTgl]
        .into_iter()
        .map(|v| (v, apply_variant(cfg, v)))
        .collect()
}

// ── text format ─────────────────────────────────────────────────────────────

struct Parser {
    entries: Vec<(String, String, String)>,
    used: Vec<bool>,
}

impl Parser {
    fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        let mut section = String::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(h) = line.strip_prefix('[') {
                let h = h.strip_suffix(']').ok_or_else(|| {
                    Error::ConfigError(format!("line {}: unterminated section", lineno + 1))
                })?;
                section = h.to_string();
                continue;
            }
            let mut parts = line.splitn(2, '=');
            let key = parts.next().unwrap_or("").trim().to_string();
            let value = parts
                .next()
                .map(|v| v.trim().to_string())
                .ok_or_else(|| Error::ConfigError(format!("line {}: expected key = value", lineno + 1)))?;
            if key.is_empty() {
                return Err(Error::ConfigError(format!("line {}: empty key", lineno + 1)));
            }
            entries.push((section.clone(), key, value));
        }
        let used = vec![false; entries.len()];
        Ok(Self { entries, used })
    }

    fn take(&mut self, section: &str, key: &str) -> Result<String> {
        for (i, (s, k, v)) in self.entries.iter().enumerate() {
            if s == section && k == key {
                self.used[i] = true;
                return Ok(v.clone());
            }
        }
        Err(Error::ConfigError(format!("missing key '{key}' in section [{section}]")))
    }

    fn finish(&self) -> Result<()> {
        for (i, used) in self.used.iter().enumerate() {
            if !used {
                let (s, k, _) = &self.entries[i];
                let place = if s.is_empty() { "top level".to_string() } else { format!("[{s}]") };
                return Err(Error::ConfigError(format!("unknown key '{k}' at {place}")));
            }
        }
        Ok(())
    }

    fn f64(&mut self, section: &str, key: &str) -> Result<f64> {
        let v = self.take(section, key)?;
        v.parse().map_err(|_| Error::ConfigError(format!("bad number for '{key}': {v}")))
    }

    fn usize(&mut self, section: &str, key: &str) -> Result<usize> {
        let v = self.take(section, key)?;
        v.parse().map_err(|_| Error::ConfigError(format!("bad integer for '{key}': {v}")))
    }

    fn u64(&mut self, section: &str, key: &str) -> Result<u64> {
        let v = self.take(section, key)?;
        v.parse().map_err(|_| Error::ConfigError(format!("bad integer for '{key}': {v}")))
    }

    fn bool(&mut self, section: &str, key: &str) -> Result<bool> {
        let v = self.take(section, key)?;
        match v.as_str() {
            "true" => Ok(true),
            "false" => Ok(false),
            _ => Err(Error::ConfigError(format!("bad bool for '{key}': {v}"))),
        }
    }

    fn u64_list(&mut self, section: &str, key: &str) -> Result<Vec<u64>> {
        let v = self.take(section, key)?;
        v.split(',')
            .map(|x| {
                x.trim()
                    .parse()
                    .map_err(|_| Error::ConfigError(format!("bad list entry for '{key}': {x}")))
            })
            .collect()
    }
}

fn sensor(p: &mut Parser, section: &str) -> Result<SensorConfig> {
    Ok(SensorConfig {
        beams: p.usize(section, "beams")?,
        fov_up_deg: p.f64(section, "fov-up-deg")?,
        fov_down_deg: p.f64(section, "fov-down-deg")?,
        horizontal_resolution: p.usize(section, "horizontal-resolution")?,
        max_range: p.f64(section, "max-range")?,
    })
}

fn scene(p: &mut Parser, section: &str) -> Result<SceneParams> {
    Ok(SceneParams {
        ground_z: p.f64(section, "ground-z")?,
        cars: p.usize(section, "cars")?,
        buildings: p.usize(section, "buildings")?,
        poles: p.usize(section, "poles")?,
        trunks: p.usize(section, "trunks")?,
        pedestrians: p.usize(section, "pedestrians")?,
        placement_radius: (p.f64(section, "placement-min")?, p.f64(section, "placement-max")?),
        size_scale: p.f64(section, "size-scale")?,
        remission_gain: p.f64(section, "remission-gain")?,
    })
}

/// Parse a scenario config from text.
pub fn load(text: &str) -> Result<ScenarioConfig> {
    let mut p = Parser::parse(text)?;
    let cfg = ScenarioConfig {
        name: p.take("", "name")?,
        mapping: p.take("", "mapping")?,
        source_sensor: sensor(&mut p, "source-sensor")?,
        target_sensor: sensor(&mut p, "target-sensor")?,
        weights: LossWeights {
            lambda_p: p.f64("weights", "lambda-p")?,
            lambda_s: p.f64("weights", "lambda-s")?,
            lambda_tl: p.f64("weights", "lambda-tl")?,
            lambda_t: p.f64("weights", "lambda-t")?,
            lambda_g2d_tp: p.f64("weights", "lambda-g2d-tp")?,
            lambda_g3d_tp: p.f64("weights", "lambda-g3d-tp")?,
            lambda_g2d_tf: p.f64("weights", "lambda-g2d-tf")?,
            lambda_d2d_tp: p.f64("weights", "lambda-d2d-tp")?,
            lambda_d3d_tp: p.f64("weights", "lambda-d3d-tp")?,
            lambda_d2d_tf: p.f64("weights", "lambda-d2d-tf")?,
            lambda_d2d_sp: p.f64("weights", "lambda-d2d-sp")?,
            lambda_d3d_sp: p.f64("weights", "lambda-d3d-sp")?,
            lambda_d2d_sf: p.f64("weights", "lambda-d2d-sf")?,
        },
        optim: OptimConfig {
            lr_2d: p.f64("optim", "lr-2d")?,
            momentum_2d: p.f64("optim", "momentum-2d")?,
            lr_3d: p.f64("optim", "lr-3d")?,
            beta1_3d: p.f64("optim", "beta1-3d")?,
            beta2_3d: p.f64("optim", "beta2-3d")?,
            lr_disc: p.f64("optim", "lr-disc")?,
            beta1_disc: p.f64("optim", "beta1-disc")?,
            beta2_disc: p.f64("optim", "beta2-disc")?,
        },
        schedule: ScheduleConfig {
            milestones: p.u64_list("schedule", "milestones")?,
            gamma: p.f64("schedule", "gamma")?,
            poly_power: p.f64("schedule", "poly-power")?,
        },
        train: TrainConfig {
            max_iter: p.u64("train", "max-iter")?,
            batch_size: p.usize("train", "batch-size")?,
            val_every: p.u64("train", "val-every")?,
            image_width: p.usize("train", "image-width")?,
            cutout_width: p.usize("train", "cutout-width")?,
            seed: p.u64("train", "seed")?,
            source_scans: p.usize("train", "source-scans")?,
            target_scans: p.usize("train", "target-scans")?,
            val_scans: p.usize("train", "val-scans")?,
            test_scans: p.usize("train", "test-scans")?,
        },
        augment: AugmentConfig {
            flip_prob: p.f64("augment", "flip-prob")?,
            dropout_patches: p.usize("augment", "dropout-patches")?,
            dropout_max_height: p.usize("augment", "dropout-max-height")?,
            dropout_max_width: p.usize("augment", "dropout-max-width")?,
            rotation_deg: p.f64("augment", "rotation-deg")?,
            translation: p.f64("augment", "translation")?,
            flip_x_prob: p.f64("augment", "flip-x-prob")?,
            flip_y_prob: p.f64("augment", "flip-y-prob")?,
        },
        scene_source: scene(&mut p, "scene-source")?,
        scene_target: scene(&mut p, "scene-target")?,
        enable_targetlike: p.bool("flags", "enable-targetlike")?,
        enable_discriminators: p.bool("flags", "enable-discriminators")?,
    };
    p.finish()?;
    cfg.validate()?;
    Ok(cfg)
}

/// Canonical text form; `load(render(cfg)) == cfg`.
pub fn render(cfg: &ScenarioConfig) -> String {
    let mut s = String::new();
    let w = &cfg.weights;
    let _ = writeln!(s, "name = {}", cfg.name);
    let _ = writeln!(s, "mapping = {}", cfg.mapping);
    for (sec, sen) in [("source-sensor", &cfg.source_sensor), ("target-sensor", &cfg.target_sensor)] {
        let _ = writeln!(s, "\n[{sec}]");
        let _ = writeln!(s, "beams = {}", sen.beams);
        let _ = writeln!(s, "fov-up-deg = {}", sen.fov_up_deg);
        let _ = writeln!(s, "fov-down-deg = {}", sen.fov_down_deg);
        let _ = writeln!(s, "horizontal-resolution = {}", sen.horizontal_resolution);
        let _ = writeln!(s, "max-range = {}", sen.max_range);
    }
    let _ = writeln!(s, "\n[weights]");
    let _ = writeln!(s, "lambda-p = {}", w.lambda_p);
    let _ = writeln!(s, "lambda-s = {}", w.lambda_s);
    let _ = writeln!(s, "lambda-tl = {}", w.lambda_tl);
    let _ = writeln!(s, "lambda-t = {}", w.lambda_t);
    let _ = writeln!(s, "lambda-g2d-tp = {}", w.lambda_g2d_tp);
    let _ = writeln!(s, "lambda-g3d-tp = {}", w.lambda_g3d_tp);
    let _ = writeln!(s, "lambda-g2d-tf = {}", w.lambda_g2d_tf);
    let _ = writeln!(s, "lambda-d2d-tp = {}", w.lambda_d2d_tp);
    let _ = writeln!(s, "lambda-d3d-tp = {}", w.lambda_d3d_tp);
    let _ = writeln!(s, "lambda-d2d-tf = {}", w.lambda_d2d_tf);
    let _ = writeln!(s, "lambda-d2d-sp = {}", w.lambda_d2d_sp);
    let _ = writeln!(s, "lambda-d3d-sp = {}", w.lambda_d3d_sp);
    let _ = writeln!(s, "lambda-d2d-sf = {}", w.lambda_d2d_sf);
    let _ = writeln!(s, "\n[optim]");
    let _ = writeln!(s, "lr-2d = {}", cfg.optim.lr_2d);
    let _ = writeln!(s, "momentum-2d = {}", cfg.optim.momentum_2d);
    let _ = writeln!(s, "lr-3d = {}", cfg.optim.lr_3d);
    let _ = writeln!(s, "beta1-3d = {}", cfg.optim.beta1_3d);
    let _ = writeln!(s, "beta2-3d = {}", cfg.optim.beta2_3d);
    let _ = writeln!(s, "lr-disc = {}", cfg.optim.lr_disc);
    let _ = writeln!(s, "beta1-disc = {}", cfg.optim.beta1_disc);
    let _ = writeln!(s, "beta2-disc = {}", cfg.optim.beta2_disc);
    let _ = writeln!(s, "\n[schedule]");
    let milestones: Vec<String> = cfg.schedule.milestones.iter().map(u64::to_string).collect();
    let _ = writeln!(s, "milestones = {}", milestones.join(","));
    let _ = writeln!(s, "gamma = {}", cfg.schedule.gamma);
    let _ = writeln!(s, "poly-power = {}", cfg.schedule.poly_power);
    let _ = writeln!(s, "\n[train]");
    let _ = writeln!(s, "max-iter = {}", cfg.train.max_iter);
    let _ = writeln!(s, "batch-size = {}", cfg.train.batch_size);
    let _ = writeln!(s, "val-every = {}", cfg.train.val_every);
    let _ = writeln!(s, "image-width = {}", cfg.train.image_width);
    let _ = writeln!(s, "cutout-width = {}", cfg.train.cutout_width);
    let _ = writeln!(s, "seed = {}", cfg.train.seed);
    let _ = writeln!(s, "source-scans = {}", cfg.train.source_scans);
    let _ = writeln!(s, "target-scans = {}", cfg.train.target_scans);
    let _ = writeln!(s, "val-scans = {}", cfg.train.val_scans);
    let _ = writeln!(s, "test-scans = {}", cfg.train.test_scans);
    let _ = writeln!(s, "\n[augment]");
    let _ = writeln!(s, "flip-prob = {}", cfg.augment.flip_prob);
    let _ = writeln!(s, "dropout-patches = {}", cfg.augment.dropout_patches);
    let _ = writeln!(s, "dropout-max-height = {}", cfg.augment.dropout_max_height);
    let _ = writeln!(s, "dropout-max-width = {}", cfg.augment.dropout_max_width);
    let _ = writeln!(s, "rotation-deg = {}", cfg.augment.rotation_deg);
    let _ = writeln!(s, "translation = {}", cfg.augment.translation);
    let _ = writeln!(s, "flip-x-prob = {}", cfg.augment.flip_x_prob);
    let _ = writeln!(s, "flip-y-prob = {}", cfg.augment.flip_y_prob);
    for (sec, sc) in [("scene-source", &cfg.scene_source), ("scene-target", &cfg.scene_target)] {
        let _ = writeln!(s, "\n[{sec}]");
        let _ = writeln!(s, "ground-z = {}", sc.ground_z);
        let _ = writeln!(s, "cars = {}", sc.cars);
        let _ = writeln!(s, "buildings = {}", sc.buildings);
        let _ = writeln!(s, "poles = {}", sc.poles);
        let _ = writeln!(s, "trunks = {}", sc.trunks);
        let _ = writeln!(s, "pedestrians = {}", sc.pedestrians);
        let _ = writeln!(s, "placement-min = {}", sc.placement_radius.0);
        let _ = writeln!(s, "placement-max = {}", sc.placement_radius.1);
        let _ = writeln!(s, "size-scale = {}", sc.size_scale);
        let _ = writeln!(s, "remission-gain = {}", sc.remission_gain);
    }
    let _ = writeln!(s, "\n[flags]");
    let _ = writeln!(s, "enable-targetlike = {}", cfg.enable_targetlike);
    let _ = writeln!(s, "enable-discriminators = {}", cfg.enable_discriminators);
    s
}

macro_rules! preset_table {
    ($($key:literal => $file:literal),+ $(,)?) => {
        /// Shipped scenario presets, by name.
        pub const BUILTIN_SCENARIOS: &[(&str, &str)] = &[
            $(($key, include_str!(concat!("../configs/", $file)))),+
        ];
    };
}

preset_table! {
    "nuscenes-usa-sg" => "nuscenes-usa-sg.cfg",
    "nslidarseg-usa-sg" => "nslidarseg-usa-sg.cfg",
    "kitti-to-nslidarseg" => "kitti-to-nslidarseg.cfg",
    "kitti-to-poss" => "kitti-to-poss.cfg",
    "synth-64to32" => "synth-64to32.cfg",
}

/// Load a shipped preset by name.
pub fn builtin(name: &str) -> Result<ScenarioConfig> {
    let text = BUILTIN_SCENARIOS
        .iter()
        .find_map(|&(k, v)| (k == name).then_some(v))
        .ok_or_else(|| Error::ConfigError(format!("unknown builtin scenario '{name}'")))?;
    load(text)
}

/// Load from a file path or, failing that, a builtin name.
pub fn load_path_or_builtin(arg: &str) -> Result<ScenarioConfig> {
    if std::path::Path::new(arg).exists() {
        let text = std::fs::read_to_string(arg)?;
        load(&text)
    } else {
        builtin(arg)
    }
}
