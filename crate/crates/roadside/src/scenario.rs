//! Scenario files.

use std::path::Path;

use roadside_core::detect::CusumConfig;
use roadside_core::filter::FilterConfig;
use roadside_core::fusion::DeviceTopology;
use roadside_core::noise::NoiseModel;
use roadside_core::SensorConfig;
use serde::{Deserialize, Serialize};

use crate::Error;

/// Vehicle driven through every repetition of a scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleTemplate {
    pub length_m: f64,
    /// Defaults to the sensor's lane edge.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lateral_near_m: Option<f64>,
    /// Used when the scenario lists no speeds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speed_mps: Option<f64>,
}

/// A named preset or explicit parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NoiseSpec {
    Preset(String),
    Inline(NoiseModel),
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self::Preset("paper-calibrated".into())
    }
}

impl NoiseSpec {
    pub fn resolve(&self) -> Result<NoiseModel, Error> {
        match self {
            NoiseSpec::Preset(name) => {
                NoiseModel::preset(name).ok_or_else(|| Error::UnknownPreset(name.clone()))
            }
            NoiseSpec::Inline(m) => Ok(*m),
        }
    }
}

fn default_repetitions() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: String,
    /// Repetition `r` uses seed `seed + r`.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    pub vehicle: VehicleTemplate,
    #[serde(default)]
    pub speeds_mps: Vec<f64>,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub sensor: SensorConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filter: Option<FilterConfig>,
    #[serde(default)]
    pub cusum: CusumConfig,
    pub topology: DeviceTopology,
    /// Output path prefix.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
}

impl ScenarioSpec {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, Error> {
        let path = path.as_ref();
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Io(path.display().to_string(), e))?;
        let spec: Self = serde_json::from_str(&text)
            .map_err(|e| Error::Parse(path.display().to_string(), e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), Error> {
        if self.repetitions < 1 {
            return Err(Error::Scenario("repetitions must be >= 1".into()));
        }
        if self.speeds().is_empty() {
            return Err(Error::Scenario("no vehicle speed given".into()));
        }
        if self.speeds().iter().any(|v| v.is_nan() || *v <= 0.0) {
            return Err(Error::Scenario("speeds must be positive".into()));
        }
        self.sensor.validate()?;
        self.filter().validate()?;
        self.cusum.validate()?;
        self.topology.validate()?;
        self.noise.resolve()?.validate()?;
        Ok(())
    }

    pub fn speeds(&self) -> Vec<f64> {
        if self.speeds_mps.is_empty() {
            self.vehicle.speed_mps.into_iter().collect()
        } else {
            self.speeds_mps.clone()
        }
    }

    pub fn filter(&self) -> FilterConfig {
        self.filter
            .unwrap_or_else(|| FilterConfig::for_burst(self.sensor.burst_size))
    }

    pub fn lateral_near_m(&self) -> f64 {
        self.vehicle
            .lateral_near_m
            .unwrap_or(self.sensor.lateral_offset_m)
    }
}
