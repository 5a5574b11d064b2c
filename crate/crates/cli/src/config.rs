//! Run configuration: TOML in, validated structs out.

use std::collections::BTreeMap;
use std::path::Path;

use mmqubit_core::device::DeviceParams;
use mmqubit_core::protocols::{linspace, InitialState, TwoToneMode};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::registry::{self, ExperimentInfo};
use crate::{CliError, Format};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub device: DeviceParams,
    pub experiment: ExperimentConfig,
    #[serde(default)]
    pub dynamics: DynamicsConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub id: String,
    #[serde(default)]
    pub axes: BTreeMap<String, AxisSpec>,
    pub pulse: Option<PulseSpec>,
    /// Fixed drive frequency for layouts without a frequency axis (default f01).
    pub drive_ghz: Option<f64>,
    #[serde(default)]
    pub phase_advance_ghz: f64,
    #[serde(default)]
    pub two_tone_mode: TwoToneMode,
    pub circuit: Option<CircuitSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisSpec {
    pub start: f64,
    pub stop: f64,
    pub count: usize,
}

impl AxisSpec {
    pub fn values(&self) -> Vec<f64> {
        linspace(self.start, self.stop, self.count)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseSpec {
    pub tau_ns: f64,
    pub sigma_ns: f64,
    /// Pulse area in radians; mutually exclusive with `amplitude_ghz`.
    pub area_rad: Option<f64>,
    pub amplitude_ghz: Option<f64>,
}

/// Lumped readout resonator used by the Purcell sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircuitSpec {
    pub c_r_ff: f64,
    pub bracket_ghz: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsConfig {
    #[serde(default = "default_n_q")]
    pub n_q: usize,
    #[serde(default = "default_n_r")]
    pub n_r: usize,
    #[serde(default = "default_dt")]
    pub dt_ns: f64,
    #[serde(default)]
    pub undamped: bool,
    #[serde(default)]
    pub initial: InitialState,
    #[serde(default)]
    pub noise_amplitude: f64,
    #[serde(default)]
    pub noise_seed: u64,
}

fn default_n_q() -> usize {
    2
}
fn default_n_r() -> usize {
    1
}
fn default_dt() -> f64 {
    0.002
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        Self {
            n_q: default_n_q(),
            n_r: default_n_r(),
            dt_ns: default_dt(),
            undamped: false,
            initial: InitialState::Ground,
            noise_amplitude: 0.0,
            noise_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Relative to the output root; defaults to the experiment id.
    pub directory: Option<String>,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
}

fn default_formats() -> Vec<Format> {
    vec![Format::Csv, Format::Json]
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: None,
            formats: default_formats(),
        }
    }
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, CliError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Parses and validates; errors carry the dotted path of the offending field.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let de = toml::Deserializer::new(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            let msg = inner.message().trim().to_string();
            if path.is_empty() || path == "." {
                CliError::Validation(msg)
            } else {
                CliError::Validation(format!("{path}: {msg}"))
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn info(&self) -> &'static ExperimentInfo {
        registry::lookup(&self.experiment.id).expect("validated experiment id")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let invalid = |m: String| Err(CliError::Validation(m));
        self.device
            .validate()
            .map_err(|e| CliError::Validation(format!("device: {e}")))?;
        let exp = &self.experiment;
        let Some(info) = registry::lookup(&exp.id) else {
            return invalid(format!(
                "experiment.id: unknown experiment `{}` (known: {})",
                exp.id,
                registry::ids().join(", ")
            ));
        };
        for (name, axis) in &exp.axes {
            let at = format!("experiment.axes.{name}");
            if axis.count < 1 {
                return invalid(format!("{at}: count must be >= 1"));
            }
            if !axis.start.is_finite() || !axis.stop.is_finite() {
                return invalid(format!("{at}: start and stop must be finite"));
            }
            if axis.stop < axis.start {
                return invalid(format!("{at}: stop {} < start {}", axis.stop, axis.start));
            }
            if axis.stop == axis.start && axis.count > 1 {
                return invalid(format!("{at}: start == stop needs count = 1"));
            }
        }
        let names: Vec<&str> = exp.axes.keys().map(String::as_str).collect();
        if info.layout_for(&names).is_none() {
            return invalid(format!(
                "experiment.axes: `{}` expects axes {}, got [{}]",
                info.id,
                info.layouts_text(),
                names.join(", ")
            ));
        }
        if info.needs_pulse {
            let Some(p) = exp.pulse else {
                return invalid(format!("experiment.pulse: required by `{}`", info.id));
            };
            if !(p.sigma_ns > 0.0) || !(p.tau_ns >= 0.0) {
                return invalid("experiment.pulse: need sigma_ns > 0 and tau_ns >= 0".into());
            }
            if p.area_rad.is_some() && p.amplitude_ghz.is_some() {
                return invalid("experiment.pulse: give area_rad or amplitude_ghz, not both".into());
            }
            if info.id == "rabi-time" && p.amplitude_ghz.is_none() {
                return invalid("experiment.pulse.amplitude_ghz: required by `rabi-time`".into());
            }
        }
        if info.id == "purcell-sweep" {
            let Some(c) = exp.circuit else {
                return invalid("experiment.circuit: required by `purcell-sweep`".into());
            };
            if !(c.c_r_ff > 0.0) || !(c.bracket_ghz[0] > 0.0) || !(c.bracket_ghz[1] > c.bracket_ghz[0]) {
                return invalid("experiment.circuit: need c_r_ff > 0 and 0 < bracket_ghz[0] < bracket_ghz[1]".into());
            }
            if exp.axes.get("junction_scale").is_some_and(|a| !(a.start > 0.0)) {
                return invalid("experiment.axes.junction_scale: scales must be positive".into());
            }
        }
        let d = &self.dynamics;
        if d.n_q < 2 || d.n_r < 1 {
            return invalid(format!("dynamics: need n_q >= 2 and n_r >= 1, got {} and {}", d.n_q, d.n_r));
        }
        if !(d.dt_ns > 0.0) {
            return invalid(format!("dynamics.dt_ns: must be positive, got {}", d.dt_ns));
        }
        if !(d.noise_amplitude >= 0.0) {
            return invalid(format!("dynamics.noise_amplitude: must be >= 0, got {}", d.noise_amplitude));
        }
        if self.output.formats.is_empty() {
            return invalid("output.formats: at least one format is required".into());
        }
        Ok(())
    }

    /// Canonical JSON (sorted keys, shortest float text) of the parsed config.
    pub fn canonical_json(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        serde_json::to_string(&value).expect("json value serializes")
    }

    /// SHA-256 of the canonical JSON; independent of TOML layout and comments.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical_json().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
