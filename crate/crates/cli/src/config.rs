//! Run configuration: built-in defaults, an optional JSON defaults file
//! (`PIMOLAP_CONFIG`), then command-line overrides.

use std::path::Path;

use clap::ValueEnum;
use pimolap_core::{Circuit, CostParams, EngineMode, Split};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const CONFIG_ENV: &str = "PIMOLAP_CONFIG";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum EngineKind {
    /// Filter and aggregate in memory; all estimated groups on PIM.
    Pim,
    /// Host-only scan (reference).
    Host,
    /// Sampling-based split of groups between PIM and host.
    HybridGroupby,
    /// Filter in memory, aggregate on the host.
    PimFilter,
}

impl EngineKind {
    pub fn name(self) -> &'static str {
        match self {
            EngineKind::Pim => "pim",
            EngineKind::Host => "host",
            EngineKind::HybridGroupby => "hybrid-groupby",
            EngineKind::PimFilter => "pim-filter",
        }
    }

    /// Engine mode for the in-memory engines; `None` for the host scan.
    pub fn mode(self) -> Option<EngineMode> {
        match self {
            EngineKind::Pim => Some(EngineMode::Pim),
            EngineKind::HybridGroupby => Some(EngineMode::HybridGroupBy),
            EngineKind::PimFilter => Some(EngineMode::FilterOnly),
            EngineKind::Host => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, ValueEnum)]
pub enum LayoutKind {
    #[serde(rename = "one_xb")]
    #[value(name = "one_xb")]
    OneXb,
    #[serde(rename = "two_xb")]
    #[value(name = "two_xb")]
    TwoXb,
}

impl LayoutKind {
    pub fn name(self) -> &'static str {
        match self {
            LayoutKind::OneXb => "one_xb",
            LayoutKind::TwoXb => "two_xb",
        }
    }

    /// Split for a wide relation whose dimension attributes are `second`.
    pub fn split(self, second: Vec<String>) -> Split {
        match self {
            LayoutKind::OneXb => Split::OneXb,
            LayoutKind::TwoXb => Split::TwoXb { second },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum CircuitKind {
    Pure,
    Peripheral,
}

impl CircuitKind {
    pub fn circuit(self) -> Circuit {
        match self {
            CircuitKind::Pure => Circuit::PurePim,
            CircuitKind::Peripheral => Circuit::Peripheral,
        }
    }
}

/// Cell-array geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Geometry {
    pub rows: usize,
    pub cols: usize,
    pub scratch_bits: usize,
}

impl Default for Geometry {
    fn default() -> Self {
        Geometry { rows: 1024, cols: 1024, scratch_bits: 256 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub engine: EngineKind,
    pub layout: LayoutKind,
    pub circuit: CircuitKind,
    pub sample_fraction: f64,
    pub seed: u64,
    pub scale: usize,
    pub geometry: Geometry,
    pub params: CostParams,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            engine: EngineKind::Pim,
            layout: LayoutKind::OneXb,
            circuit: CircuitKind::Pure,
            sample_fraction: pimolap_core::engine::DEFAULT_SAMPLE_FRACTION,
            seed: 42,
            scale: 1,
            geometry: Geometry::default(),
            params: CostParams::default(),
        }
    }
}

impl RunConfig {
    /// Defaults, overlaid with the file named by `PIMOLAP_CONFIG` if set.
    pub fn from_env() -> Result<Self, CliError> {
        match std::env::var_os(CONFIG_ENV) {
            Some(p) => Self::from_file(Path::new(&p)),
            None => Ok(Self::default()),
        }
    }

    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        read_json(path)
    }

    pub fn engine_config(&self) -> pimolap_core::EngineConfig {
        pimolap_core::EngineConfig {
            mode: self.engine.mode().unwrap_or(EngineMode::Pim),
            circuit: self.circuit.circuit(),
            params: self.params,
            sample_fraction: self.sample_fraction,
            seed: self.seed,
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if !(self.sample_fraction > 0.0 && self.sample_fraction <= 1.0) {
            return Err(CliError::Usage(format!("--sample-fraction must be in (0, 1], got {}", self.sample_fraction)));
        }
        let p = &self.params;
        if [p.c_pim_op, p.c_bit_xfer, p.c_host_rec, p.c_periph_row].iter().any(|c| !(*c >= 0.0)) {
            return Err(CliError::Usage("cost parameters must be non-negative".into()));
        }
        if self.scale == 0 {
            return Err(CliError::Usage("--scale must be at least 1".into()));
        }
        Ok(())
    }
}

/// Reads a JSON file into `T`.
pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Json { path: path.display().to_string(), message: e.to_string() })
}
