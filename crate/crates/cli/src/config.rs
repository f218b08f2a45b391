//! The TOML run configuration. Every knob has a default here; flags
//! override individual values after the file is loaded.

use std::fs;
use std::path::{Path, PathBuf};

use mhol::datagen::GenConfig;
use mhol::features::ErrorPolicy;
use mhol::{DelayWindows, Error, FeatureConfig, GlmKind, Method, Result, TrainConfig};
use serde::{Deserialize, Serialize};

pub const DATA_DIR_ENV: &str = "MHOL_DATA_DIR";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub data: DataSection,
    pub features: FeatureConfig,
    pub windows: WindowsSection,
    pub train: TrainConfig<f64>,
    pub run: RunSection,
    pub serving: ServingSection,
    pub generator: GenConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// Base directory for relative input and output paths.
    pub dir: Option<PathBuf>,
}

/// Window end points in whole days, or in seconds. `seconds` wins when
/// both are set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowsSection {
    pub days: Option<Vec<u64>>,
    pub seconds: Option<Vec<u64>>,
}

impl Default for WindowsSection {
    fn default() -> Self {
        WindowsSection { days: Some(vec![1, 2, 5, 12, 30]), seconds: None }
    }
}

impl WindowsSection {
    pub fn resolve(&self) -> Result<DelayWindows> {
        match (&self.days, &self.seconds) {
            (_, Some(s)) => DelayWindows::new(std::iter::once(0).chain(s.iter().copied()).collect()),
            (Some(d), None) => DelayWindows::from_days(d),
            (None, None) => Err(Error::config("windows: set days or seconds")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Streaming,
    Batch,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    #[default]
    Cvr,
    Vpc,
}

impl Task {
    pub fn kind(self) -> GlmKind {
        match self {
            Task::Cvr => GlmKind::Logistic,
            Task::Vpc => GlmKind::Linear,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OnBadRecord {
    #[default]
    Skip,
    Abort,
}

impl From<OnBadRecord> for ErrorPolicy {
    fn from(p: OnBadRecord) -> Self {
        match p {
            OnBadRecord::Skip => ErrorPolicy::Skip,
            OnBadRecord::Abort => ErrorPolicy::Abort,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub method: String,
    pub mode: Mode,
    pub task: Task,
    /// Threads for advancing heads; 0 means one per head.
    pub workers: usize,
    pub eval_days: i64,
    pub on_bad_record: OnBadRecord,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            method: "mhol".into(),
            mode: Mode::Streaming,
            task: Task::Cvr,
            workers: 0,
            eval_days: 7,
            on_bad_record: OnBadRecord::Skip,
        }
    }
}

impl RunSection {
    pub fn method(&self) -> Result<Method> {
        self.method.parse()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServingSection {
    /// Clamp summed CVR heads to [0, 1] when serving.
    pub combine_clamp: bool,
    /// Floor summed VPC heads at 0 when serving.
    pub floor_vpc: bool,
}

impl Default for ServingSection {
    fn default() -> Self {
        ServingSection { combine_clamp: true, floor_vpc: false }
    }
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::config(one_line(&e.to_string())))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Checks every section; run before doing any work.
    pub fn validate(&self) -> Result<()> {
        self.features.validate()?;
        self.train.validate()?;
        self.windows.resolve()?;
        self.run.method()?;
        self.generator.validate()?;
        if self.run.eval_days < 1 {
            return Err(Error::config("run.eval_days must be at least 1"));
        }
        Ok(())
    }
}

/// Collapses a multi-line diagnostic into one line.
pub fn one_line(msg: &str) -> String {
    msg.split_whitespace().collect::<Vec<_>>().join(" ")
}
