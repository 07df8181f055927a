//! Run configuration in TOML.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::CellParams;
use crate::placement::{PlacementSettings, DEFAULT_EXHAUSTIVE_CAP};
use crate::sdp::SdpSettings;
use crate::sim::{InputProfile, NoiseKind, SimConfig};
use crate::synthesis::SynthesisSettings;

/// The bundled configuration, with the reference cell parameters.
pub const DEFAULT_TOML: &str = include_str!("../config/default.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub cells: usize,
    pub gamma: f64,
    /// Target sensor count for placement.
    pub sensors: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selection: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default)]
    pub params: CellParams,
    #[serde(default)]
    pub solver: SdpSettings,
    #[serde(default)]
    pub placement: PlacementConfig,
    #[serde(default)]
    pub simulation: SimulationConfig,
    #[serde(default)]
    pub preset: BTreeMap<String, Preset>,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlacementConfig {
    pub tie_tol: f64,
    pub exhaustive_cap: u128,
}

impl Default for PlacementConfig {
    fn default() -> Self {
        PlacementConfig { tie_tol: 1e-7, exhaustive_cap: DEFAULT_EXHAUSTIVE_CAP }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationConfig {
    pub duration: f64,
    pub step: f64,
    /// Uniform initial estimation error [K].
    pub initial_error: f64,
    pub seed: u64,
    pub tail_fraction: f64,
    pub current_squared: f64,
    pub inlet_temperature: f64,
    pub noise: NoiseKind,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        let input = InputProfile::default();
        SimulationConfig {
            duration: 3000.0,
            step: 0.1,
            initial_error: 10.0,
            seed: 0,
            tail_fraction: 0.5,
            current_squared: input.current_squared,
            inlet_temperature: input.inlet_temperature,
            noise: NoiseKind::default(),
        }
    }
}

/// Overrides applied by `--preset`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Preset {
    pub cells: Option<usize>,
    pub gamma: Option<f64>,
    pub sensors: Option<usize>,
    pub selection: Option<Vec<usize>>,
    pub weights: Option<Vec<f64>>,
    pub sd: Option<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig::from_toml_str(DEFAULT_TOML).expect("bundled configuration parses")
    }
}

impl RunConfig {
    /// Parses and validates; error messages carry the line and field.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("configuration serialises")
    }

    /// Applies a named preset section.
    pub fn with_preset(mut self, name: &str) -> Result<Self> {
        let p = self
            .preset
            .get(name)
            .cloned()
            .ok_or_else(|| Error::Config(format!("unknown preset `{name}`")))?;
        if let Some(v) = p.cells {
            self.cells = v;
            if p.weights.is_none() {
                self.weights = None;
            }
        }
        if let Some(v) = p.gamma {
            self.gamma = v;
        }
        if let Some(v) = p.sensors {
            self.sensors = v;
        }
        if let Some(v) = p.selection {
            self.selection = Some(v);
        }
        if let Some(v) = p.weights {
            self.weights = Some(v);
        }
        if let Some(v) = p.sd {
            self.params.sd = v;
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: String| Err(Error::Config(format!("field `{field}`: {msg}")));
        if self.cells < 2 {
            return bad("cells", format!("a string needs at least 2 cells, got {}", self.cells));
        }
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return bad("gamma", format!("must be positive, got {}", self.gamma));
        }
        if self.sensors == 0 || self.sensors > self.cells {
            return bad("sensors", format!("must be in 1..={}, got {}", self.cells, self.sensors));
        }
        if let Some(sel) = &self.selection {
            if let Some(c) = sel.iter().find(|&&c| c == 0 || c > self.cells) {
                return bad("selection", format!("cell {c} is outside 1..={}", self.cells));
            }
        }
        if let Some(w) = &self.weights {
            if w.len() != self.cells {
                return bad("weights", format!("expected {} entries, got {}", self.cells, w.len()));
            }
            if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return bad("weights", "entries must be finite and nonnegative".into());
            }
        }
        self.params.validate().map_err(|e| Error::Config(format!("section `params`: {e}")))?;
        self.solver.validate().map_err(|e| Error::Config(format!("section `solver`: {e}")))?;
        if !(self.placement.tie_tol >= 0.0) {
            return bad("placement.tie_tol", "must be nonnegative".into());
        }
        let s = &self.simulation;
        if !(s.tail_fraction > 0.0 && s.tail_fraction <= 1.0) {
            return bad("simulation.tail_fraction", format!("must be in (0, 1], got {}", s.tail_fraction));
        }
        self.sim_config(1).validate().map_err(|e| Error::Config(format!("section `simulation`: {e}")))?;
        Ok(())
    }

    pub fn weights_vector(&self) -> Option<DVector<f64>> {
        self.weights.as_ref().map(|w| DVector::from_vec(w.clone()))
    }

    pub fn synthesis_settings(&self) -> SynthesisSettings {
        SynthesisSettings { sdp: self.solver, ..SynthesisSettings::default() }
    }

    pub fn placement_settings(&self, jobs: Option<usize>) -> PlacementSettings {
        PlacementSettings { synthesis: self.synthesis_settings(), tie_tol: self.placement.tie_tol, jobs }
    }

    /// Simulation settings for a system with `states` error states.
    pub fn sim_config(&self, states: usize) -> SimConfig {
        let s = &self.simulation;
        SimConfig {
            duration: s.duration,
            step: s.step,
            initial_error: DVector::from_element(states, s.initial_error),
            noise: vec![s.noise.clone()],
            seed: s.seed,
            input: InputProfile { current_squared: s.current_squared, inlet_temperature: s.inlet_temperature },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_config_carries_reference_parameters() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.params, CellParams::default());
        assert_eq!(cfg.solver, SdpSettings::default());
        assert_eq!(cfg.cells, 10);
    }

    #[test]
    fn presets() {
        let c1 = RunConfig::default().with_preset("case1").unwrap();
        assert_eq!((c1.cells, c1.gamma, c1.sensors), (10, 1.0, 1));
        assert_eq!(c1.selection, Some(vec![3]));
        let c2 = RunConfig::default().with_preset("case2").unwrap();
        assert_eq!((c2.cells, c2.gamma, c2.sensors), (40, 3.0, 4));
        assert_eq!(c2.selection, Some(vec![3, 6, 17, 30]));
        assert!(RunConfig::default().with_preset("case3").is_err());
    }

    #[test]
    fn unknown_keys_are_rejected_with_location() {
        let text = DEFAULT_TOML.replace("rcc = 0.2", "rcc = 0.2\nrxx = 1.0");
        let err = RunConfig::from_toml_str(&text).unwrap_err().to_string();
        assert!(err.contains("rxx"), "{err}");
        assert!(err.contains("line"), "{err}");
    }

    #[test]
    fn invalid_values_name_the_field() {
        let text = DEFAULT_TOML.replacen("cells = 10", "cells = 1", 1);
        let err = RunConfig::from_toml_str(&text).unwrap_err().to_string();
        assert!(err.contains("cells"), "{err}");
        let text = DEFAULT_TOML.replace("ru = 5.0", "ru = -5.0");
        let err = RunConfig::from_toml_str(&text).unwrap_err().to_string();
        assert!(err.contains("ru"), "{err}");
    }

    #[test]
    fn round_trip_through_text() {
        let cfg = RunConfig::default().with_preset("case2").unwrap();
        let again = RunConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn missing_file_is_an_io_error() {
        let err = RunConfig::load(Path::new("/nonexistent/cellsense.toml")).unwrap_err();
        assert!(matches!(err, Error::Io(_)));
    }
}
