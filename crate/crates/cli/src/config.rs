use std::path::Path;

use hypercert::pipeline::{AnalyzeOptions, Schedule, SimulationConfig, StatePlant, DEFAULT_WINDOW_PS};
use hypercert::tagstream::{DriftOptions, LinkParams, TagFormat};
use serde::{Deserialize, Serialize};

use crate::Failure;

pub const SCHEMA_VERSION: u32 = 1;

/// Everything a run can be configured with. Missing sections fall back to the
/// preset (if any) and then to built-in defaults; command-line flags win over
/// all of them.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub preset: Option<String>,
    #[serde(default)]
    pub link: Option<LinkParams>,
    #[serde(default)]
    pub plant: Option<PlantConfig>,
    #[serde(default)]
    pub schedule: Option<Schedule>,
    #[serde(default)]
    pub analysis: Option<AnalysisConfig>,
    #[serde(default)]
    pub certify: Option<CertifyConfig>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum PlantConfig {
    Explicit(StatePlant),
    /// Noise chosen so the run reproduces these visibilities.
    Calibrated {
        v_hv: f64,
        v_phi: f64,
        v_et: f64,
    },
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    #[serde(default)]
    pub window_ps: Option<u64>,
    #[serde(default)]
    pub drift: Option<DriftOptions>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertifyConfig {
    #[serde(default)]
    pub sdp_inputs: Option<(f64, f64)>,
    #[serde(default)]
    pub tol: Option<f64>,
    #[serde(default)]
    pub inequality: Option<bool>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, Failure> {
        let Some(path) = path else {
            return Ok(Self {
                schema_version: SCHEMA_VERSION,
                ..Default::default()
            });
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::config(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: Self = serde_json::from_str(&text)
            .map_err(|e| Failure::config(format!("invalid config {}: {e}", path.display())))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(Failure::config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }

    pub fn window_ps(&self, flag: Option<u64>) -> u64 {
        flag.or(self.analysis.as_ref().and_then(|a| a.window_ps))
            .unwrap_or(DEFAULT_WINDOW_PS)
    }

    pub fn analyze_options(&self, window_flag: Option<u64>) -> AnalyzeOptions {
        AnalyzeOptions {
            window_ps: self.window_ps(window_flag),
            drift: self.analysis.as_ref().and_then(|a| a.drift.clone()).unwrap_or_default(),
        }
    }

    /// Link, plant and schedule for `simulate`.
    pub fn simulation(
        &self,
        preset_flag: Option<&str>,
        seed: Option<u64>,
        window_flag: Option<u64>,
    ) -> Result<SimulationConfig, Failure> {
        let preset = preset_flag.or(self.preset.as_deref());
        let schedule = self.schedule.clone().unwrap_or_else(Schedule::field_trial);
        let mut link = match (&self.link, preset) {
            (Some(l), _) => l.clone(),
            (None, Some(name)) => LinkParams {
                duration_s: schedule.duration_s(),
                ..LinkParams::preset(name)?
            },
            (None, None) => LinkParams {
                duration_s: schedule.duration_s(),
                ..Default::default()
            },
        };
        if let Some(s) = seed {
            link.seed = s;
        }
        let window = self.window_ps(window_flag);
        let plant = match (&self.plant, preset) {
            (Some(PlantConfig::Explicit(p)), _) => *p,
            (Some(PlantConfig::Calibrated { v_hv, v_phi, v_et }), _) => {
                StatePlant::calibrated(&link, window, (*v_hv, *v_phi, *v_et))?
            }
            (None, Some("field-trial" | "field_trial")) => StatePlant::field_trial(&link, window)?,
            (None, _) => StatePlant::ideal(),
        };
        let cfg = SimulationConfig { link, plant, schedule };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileEntry {
    /// Relative to the manifest.
    pub path: String,
    pub sha256: String,
    pub records: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expected {
    /// Two-photon detection rate, cps.
    pub coincidence_rate: f64,
    /// Accidental rate in the calibration window, cps.
    pub accidental_rate: f64,
    pub source_car: f64,
    pub window_ps: u64,
}

/// Written by `simulate`; enough to regenerate the tag files and to analyze
/// them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub schema_version: u32,
    pub seed: u64,
    pub simulation: SimulationConfig,
    pub expected: Expected,
    pub tag_format: TagFormat,
    pub alice: FileEntry,
    pub bob: FileEntry,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::data(format!("cannot read manifest {}: {e}", path.display())))?;
        let m: Self = serde_json::from_str(&text)
            .map_err(|e| Failure::data(format!("invalid manifest {}: {e}", path.display())))?;
        if m.schema_version != SCHEMA_VERSION {
            return Err(Failure::data(format!(
                "unsupported manifest schema_version {}",
                m.schema_version
            )));
        }
        Ok(m)
    }
}
