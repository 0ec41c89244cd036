//! Data sources: a generated SSB-lite star or a CSV directory, pre-joined
//! into the wide relation that queries run against.

use std::path::Path;

use pimolap_core::schema::{self, StarDescriptor, StarSchema};
use pimolap_core::{plan_layout, store_records, HostTable, PimMemory};

use crate::config::{Geometry, LayoutKind, RunConfig};
use crate::CliError;

#[derive(Debug, Clone)]
pub struct Dataset {
    pub star: StarSchema,
    pub wide: HostTable,
}

impl Dataset {
    pub fn from_star(star: StarSchema) -> Result<Self, CliError> {
        let wide = schema::prejoin(&star)?;
        Ok(Dataset { star, wide })
    }

    pub fn generate(scale: usize, seed: u64) -> Result<Self, CliError> {
        if scale == 0 {
            return Err(CliError::Usage("--scale must be at least 1".into()));
        }
        Self::from_star(schema::gen_ssb_lite(scale, seed))
    }

    /// Loads `schema.json` and the CSV files it names from `dir`.
    pub fn load(dir: &Path) -> Result<Self, CliError> {
        let path = dir.join("schema.json");
        let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        let desc = StarDescriptor::from_json(&text)?;
        Self::from_star(schema::load_csv(dir, &desc)?)
    }

    /// Loads `dir` when given, otherwise generates from the configured scale and seed.
    pub fn resolve(dir: Option<&Path>, config: &RunConfig) -> Result<Self, CliError> {
        match dir {
            Some(d) => Self::load(d),
            None => Self::generate(config.scale, config.seed),
        }
    }

    /// Stores the wide relation in a fresh memory. Under `two_xb` the
    /// dimension attributes go to the second array.
    pub fn memory(&self, layout: LayoutKind, geometry: Geometry) -> Result<PimMemory, CliError> {
        let split = layout.split(schema::dimension_attrs(&self.star));
        let l = plan_layout(&self.wide.schema, geometry.rows, geometry.cols, geometry.scratch_bits, split)?;
        Ok(store_records(l, &self.wide.rows)?)
    }
}
