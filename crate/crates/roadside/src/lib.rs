//! Scenario runner, file formats and command line tools on top of
//! `roadside-core`.

pub mod experiment;
pub mod io;
pub mod scenario;

pub use experiment::{
    aggregate, run_scenario, simulate_pass, sweep_angles, CellStats, PassRecord, Quantity,
    ScenarioResult, Source, SweepRow,
};
pub use scenario::{NoiseSpec, ScenarioSpec, VehicleTemplate};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),
    #[error("cannot parse {0}: {1}")]
    Parse(String, String),
    #[error("invalid scenario: {0}")]
    Scenario(String),
    #[error("unknown noise preset {0:?}")]
    UnknownPreset(String),
    #[error(transparent)]
    Core(#[from] roadside_core::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Io(..) => "IO",
            Error::Parse(..) => "PARSE",
            Error::Scenario(_) => "INVALID_SCENARIO",
            Error::UnknownPreset(_) => "UNKNOWN_PRESET",
            Error::Core(e) => e.code(),
            Error::Csv(_) => "CSV",
        }
    }
}
