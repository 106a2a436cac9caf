//! Flat `key=value` configuration.
//!
//! Values are layered: file, then `SPIKEHAR_<KEY>` environment variables,
//! then explicit overrides (command-line flags). Later layers win.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::encoder::{ThresholdScheme, DEFAULT_CAP_BASE, DEFAULT_IMU_BASE, DEFAULT_THRESHOLD_COUNT};
use crate::error::{Error, Result};
use crate::ingest::{LabelRule, ResampleMethod, ResampleSpec, WindowSpec};
use crate::profiler::EnergyModel;
use crate::snn::{LifParams, MAX_DELAY};
use crate::trainer::{SpikeMode, SurrogateShape, SurrogateSpec, TrainConfig};

pub const ENV_PREFIX: &str = "SPIKEHAR_";

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KvConfig {
    values: BTreeMap<String, String>,
}

impl KvConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse { row: n + 1, message: format!("expected key=value, got `{line}`") })?;
            values.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(Self { values })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Overlays `SPIKEHAR_<KEY>` variables from `vars`; the key part is
    /// lower-cased.
    pub fn apply_env<I, K, V>(&mut self, vars: I)
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: Into<String>,
    {
        for (k, v) in vars {
            if let Some(key) = k.as_ref().strip_prefix(ENV_PREFIX) {
                self.values.insert(key.to_ascii_lowercase(), v.into());
            }
        }
    }

    pub fn set(&mut self, key: &str, value: impl Display) {
        self.values.insert(key.to_string(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.values.keys().map(String::as_str)
    }

    pub fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        self.get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| Error::config(format!("bad value `{v}` for {key}: {e}")))
            })
            .transpose()
    }

    pub fn or<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: Display,
    {
        Ok(self.parsed(key)?.unwrap_or(default))
    }
}

/// Everything one end-to-end run needs.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
    pub seed: u64,
    /// Overrides the rate stated in recording headers.
    pub source_rate_hz: Option<f64>,
    pub resample: ResampleSpec,
    pub window: WindowSpec,
    pub imu_base: f64,
    pub cap_base: f64,
    pub threshold_scheme: ThresholdScheme,
    pub threshold_count: usize,
    /// Hidden layers; the output layer is sized from the data.
    pub hidden: String,
    /// 0 means one past the largest label seen.
    pub classes: usize,
    pub lif: LifParams,
    pub train: TrainConfig,
    pub surrogate: SurrogateSpec,
    pub init_scale: f64,
    /// Fractions of the window length; absolute counts are derived per run.
    pub target_true_frac: f64,
    pub target_false_frac: f64,
    pub weight_classes: bool,
    pub energy: EnergyModel,
    pub injection_stall: bool,
    pub hardware_label: String,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            data_dir: PathBuf::from("data"),
            out_dir: PathBuf::from("out"),
            seed: 0,
            source_rate_hz: None,
            resample: ResampleSpec {
                target_rate_hz: 100.0,
                method: ResampleMethod::CubicSpline,
            },
            window: WindowSpec {
                window_s: 1.0,
                stride_s: 1.0,
                label_rule: LabelRule::Majority,
            },
            imu_base: DEFAULT_IMU_BASE,
            cap_base: DEFAULT_CAP_BASE,
            threshold_scheme: ThresholdScheme::Geometric,
            threshold_count: DEFAULT_THRESHOLD_COUNT,
            hidden: "16D".into(),
            classes: 0,
            lif: LifParams {
                v_threshold: 256,
                ..LifParams::default()
            },
            train: TrainConfig {
                learning_rate: 2.0,
                delay_learning_rate: Some(0.02),
                epochs: 40,
                batch_size: 8,
                seed: 0,
                train_delays: true,
                delay_cap: MAX_DELAY,
            },
            surrogate: SurrogateSpec::default(),
            init_scale: 1.0,
            target_true_frac: 0.3,
            target_false_frac: 0.01,
            weight_classes: true,
            energy: EnergyModel {
                timestep_s: 1e-3,
                ..EnergyModel::default()
            },
            injection_stall: false,
            hardware_label: "simulated".into(),
        }
    }
}

/// Every key [`PipelineConfig::from_kv`] understands.
pub const KNOWN_KEYS: &[&str] = &[
    "data_dir",
    "out_dir",
    "seed",
    "jobs",
    "source_rate_hz",
    "resample_hz",
    "resample_method",
    "window_s",
    "stride_s",
    "label_rule",
    "imu_base",
    "cap_base",
    "threshold_scheme",
    "thresholds",
    "hidden",
    "classes",
    "v_threshold",
    "decay_u",
    "decay_v",
    "refractory_steps",
    "timestep_ms",
    "epochs",
    "lr",
    "delay_lr",
    "batch_size",
    "train_delays",
    "delay_cap",
    "surrogate",
    "alpha",
    "spike_mode",
    "init_scale",
    "loss_true",
    "loss_false",
    "weight_classes",
    "e_sop",
    "e_update",
    "p_static",
    "injection_stall",
    "hardware",
];

pub fn parse_surrogate_shape(s: &str) -> Result<SurrogateShape> {
    match s.to_ascii_lowercase().as_str() {
        "exp" | "exponential" | "exponential_pdf" => Ok(SurrogateShape::ExponentialPdf),
        "rect" | "rectangular" => Ok(SurrogateShape::Rectangular),
        other => Err(Error::config(format!("unknown surrogate `{other}` (exp or rect)"))),
    }
}

fn parse_spike_mode(s: &str) -> Result<SpikeMode> {
    match s.to_ascii_lowercase().as_str() {
        "hard" => Ok(SpikeMode::Hard),
        "soft" => Ok(SpikeMode::Soft),
        other => Err(Error::config(format!("unknown spike mode `{other}` (hard or soft)"))),
    }
}

impl PipelineConfig {
    pub fn from_kv(kv: &KvConfig) -> Result<Self> {
        if let Some(unknown) = kv.keys().find(|k| !KNOWN_KEYS.contains(k)) {
            return Err(Error::config(format!("unknown config key `{unknown}`")));
        }
        let d = Self::default();
        let lif = LifParams {
            v_threshold: kv.or("v_threshold", d.lif.v_threshold)?,
            decay_u: kv.or("decay_u", d.lif.decay_u)?,
            decay_v: kv.or("decay_v", d.lif.decay_v)?,
            refractory_steps: kv.or("refractory_steps", d.lif.refractory_steps)?,
            timestep_ms: kv.or("timestep_ms", d.lif.timestep_ms)?,
        };
        lif.validate()?;
        let seed = kv.or("seed", d.seed)?;
        let cfg = Self {
            data_dir: kv.parsed("data_dir")?.unwrap_or(d.data_dir),
            out_dir: kv.parsed("out_dir")?.unwrap_or(d.out_dir),
            seed,
            source_rate_hz: kv.parsed("source_rate_hz")?,
            resample: ResampleSpec {
                target_rate_hz: kv.or("resample_hz", d.resample.target_rate_hz)?,
                method: kv.or("resample_method", d.resample.method)?,
            },
            window: WindowSpec {
                window_s: kv.or("window_s", d.window.window_s)?,
                stride_s: kv.or("stride_s", d.window.stride_s)?,
                label_rule: kv.or("label_rule", d.window.label_rule)?,
            },
            imu_base: kv.or("imu_base", d.imu_base)?,
            cap_base: kv.or("cap_base", d.cap_base)?,
            threshold_scheme: kv.or("threshold_scheme", d.threshold_scheme)?,
            threshold_count: kv.or("thresholds", d.threshold_count)?,
            hidden: kv.or("hidden", d.hidden)?,
            classes: kv.or("classes", d.classes)?,
            lif,
            train: TrainConfig {
                learning_rate: kv.or("lr", d.train.learning_rate)?,
                delay_learning_rate: kv.parsed("delay_lr")?.or(d.train.delay_learning_rate),
                epochs: kv.or("epochs", d.train.epochs)?,
                batch_size: kv.or("batch_size", d.train.batch_size)?,
                seed,
                train_delays: kv.or("train_delays", d.train.train_delays)?,
                delay_cap: kv.or("delay_cap", d.train.delay_cap)?,
            },
            surrogate: SurrogateSpec {
                shape: kv.get("surrogate").map(parse_surrogate_shape).transpose()?.unwrap_or(d.surrogate.shape),
                alpha: kv.or("alpha", d.surrogate.alpha)?,
                mode: kv.get("spike_mode").map(parse_spike_mode).transpose()?.unwrap_or(d.surrogate.mode),
            },
            init_scale: kv.or("init_scale", d.init_scale)?,
            target_true_frac: kv.or("loss_true", d.target_true_frac)?,
            target_false_frac: kv.or("loss_false", d.target_false_frac)?,
            weight_classes: kv.or("weight_classes", d.weight_classes)?,
            energy: EnergyModel {
                e_sop: kv.or("e_sop", d.energy.e_sop)?,
                e_update: kv.or("e_update", d.energy.e_update)?,
                p_static: kv.or("p_static", d.energy.p_static)?,
                timestep_s: lif.timestep_ms * 1e-3,
            },
            injection_stall: kv.or("injection_stall", d.injection_stall)?,
            hardware_label: kv.or("hardware", d.hardware_label)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.window.validate()?;
        self.train.validate()?;
        self.surrogate.validate()?;
        self.energy.validate()?;
        if self.resample.target_rate_hz.is_nan() || self.resample.target_rate_hz <= 0.0 {
            return Err(Error::config("resample_hz must be positive"));
        }
        if !(self.target_true_frac > self.target_false_frac && self.target_false_frac >= 0.0) {
            return Err(Error::config("need loss_true > loss_false >= 0"));
        }
        if self.init_scale.is_nan() || self.init_scale <= 0.0 {
            return Err(Error::config("init_scale must be positive"));
        }
        Ok(())
    }
}
