//! JSON run reports: config echo, spectral values, seeds, artifact paths,
//! and wall-clock timings per phase.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use crate::config::RunConfig;
use crate::CliError;

#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct PhaseTimings {
    pub simulate: f64,
    pub featurize: f64,
    pub covariances: f64,
    pub solve: f64,
    pub total: f64,
}

#[derive(Debug, Serialize)]
pub struct RunReport<'a> {
    pub command: &'static str,
    pub library_version: &'static str,
    pub mode: String,
    pub values: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub loss_history: Option<Vec<f64>>,
    pub seeds: BTreeMap<&'static str, u64>,
    pub artifacts: BTreeMap<&'static str, String>,
    pub timings_sec: PhaseTimings,
    pub config: &'a RunConfig,
}

impl<'a> RunReport<'a> {
    pub fn new(command: &'static str, config: &'a RunConfig) -> Self {
        Self {
            command,
            library_version: env!("CARGO_PKG_VERSION"),
            mode: config.model.mode.clone(),
            values: Vec::new(),
            loss_history: None,
            seeds: BTreeMap::new(),
            artifacts: BTreeMap::new(),
            timings_sec: PhaseTimings::default(),
            config,
        }
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let mut bytes = serde_json::to_vec_pretty(self)
            .map_err(|e| CliError::validation(format!("report serialization: {e}")))?;
        bytes.push(b'\n');
        transferop_core::io::atomic_write(path, &bytes)?;
        Ok(())
    }
}
