//! Run configuration: TOML file, `--set section.key=value` overrides, and
//! full validation before any computation starts.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Deserialize, Serialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub system: SystemConfig,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub training: TrainingConfig,
    pub ensemble: EnsembleConfig,
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemConfig {
    /// ou | lemon_slice | triple_well | bickley | grid
    pub name: String,
    pub alpha: f64,
    pub beta: Option<f64>,
    pub wells: u32,
    /// Bickley integration window.
    pub t0: f64,
    pub t1: f64,
    pub integrator_step: f64,
    /// Sampling box for `grid` datasets.
    pub domain_min: Vec<f64>,
    pub domain_max: Vec<f64>,
    /// uniform | regular
    pub grid_mode: String,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            name: "ou".into(),
            alpha: 1.0,
            beta: None,
            wells: 5,
            t0: 0.0,
            t1: 40.0,
            integrator_step: 0.01,
            domain_min: vec![-5.0],
            domain_max: vec![5.0],
            grid_mode: "uniform".into(),
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub m: usize,
    /// Lag expressed in integrator steps, or as a time via `lag_time`.
    pub lag_steps: Option<usize>,
    pub lag_time: Option<f64>,
    pub step_size: f64,
    /// Spacing between the starting indices of consecutive pairs; defaults
    /// to the lag (non-overlapping pairs).
    pub stride: Option<usize>,
    pub burn_in: usize,
    pub seed: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            m: 20000,
            lag_steps: None,
            lag_time: None,
            step_size: 0.005,
            stride: None,
            burn_in: 1000,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub widths: Vec<usize>,
    /// tanh | relu | gaussian
    pub activation: String,
    /// normal | uniform
    pub distribution: String,
    pub weight_scale: f64,
    pub bias_scale: f64,
    /// eigen | singular | schrodinger
    pub mode: String,
    pub n: usize,
    pub rank_tol: f64,
    pub symmetrize: bool,
    pub seed: u64,
    /// Potential of the Schrödinger branch: qho | ou | lemon_slice | triple_well
    pub potential: String,
    pub omega: f64,
    pub hbar: f64,
    pub mass: f64,
    pub potential_offset: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            widths: vec![256, 512, 256],
            activation: "tanh".into(),
            distribution: "normal".into(),
            weight_scale: 1.0,
            bias_scale: 1.0,
            mode: "eigen".into(),
            n: 4,
            rank_tol: 1e-10,
            symmetrize: true,
            seed: 0,
            potential: "qho".into(),
            omega: 1.0,
            hbar: 1.0,
            mass: 1.0,
            potential_offset: 0.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub step_size: f64,
    /// tanh | identity
    pub output_activation: String,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            step_size: 0.5,
            output_activation: "tanh".into(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleConfig {
    pub members: usize,
    pub base_seed: u64,
    /// grid | data
    pub eval_mode: String,
    /// Points per axis of the evaluation grid.
    pub grid_points: Vec<usize>,
    /// Grid bounds; data bounding box when absent.
    pub grid_min: Option<Vec<f64>>,
    pub grid_max: Option<Vec<f64>>,
    /// Number of training points evaluated in `data` mode.
    pub eval_sample: usize,
    /// Resample the dataset with replacement per member.
    pub bootstrap: bool,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            members: 100,
            base_seed: 0,
            eval_mode: "grid".into(),
            grid_points: vec![50],
            grid_min: None,
            grid_max: None,
            eval_sample: 2000,
            bootstrap: false,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: "out".into() }
    }
}

/// Parses a `--set section.key=value` override into a TOML path assignment.
fn parse_override(table: &mut toml::Table, spec: &str) -> Result<(), CliError> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::validation(format!("--set '{spec}': expected key=value")))?;
    let segments: Vec<&str> = path.trim().split('.').collect();
    if segments.len() != 2 {
        return Err(CliError::validation(format!(
            "--set '{spec}': key must be section.name"
        )));
    }
    let raw = raw.trim();
    let value: toml::Value = {
        // Reuse the TOML scalar grammar by parsing a one-line document.
        let doc = format!("v = {raw}");
        match doc.parse::<toml::Table>() {
            Ok(t) => t["v"].clone(),
            Err(_) => toml::Value::String(raw.to_string()),
        }
    };
    let section = table
        .entry(segments[0].to_string())
        .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    match section.as_table_mut() {
        Some(t) => {
            t.insert(segments[1].to_string(), value);
            Ok(())
        }
        None => Err(CliError::validation(format!(
            "--set '{spec}': '{}' is not a section",
            segments[0]
        ))),
    }
}

/// Loads a config from an optional file plus `--set` overrides. Unknown keys
/// and type errors are reported with their full key path.
pub fn load_config(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig, CliError> {
    let mut table: toml::Table = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| {
                CliError::validation(format!("config {}: {e}", p.display()))
            })?;
            text.parse().map_err(|e| {
                CliError::validation(format!("config {}: {e}", p.display()))
            })?
        }
        None => toml::Table::new(),
    };
    for spec in overrides {
        parse_override(&mut table, spec)?;
    }
    let deserializer = toml::Value::Table(table);
    serde_path_to_error::deserialize(deserializer)
        .map_err(|e| CliError::validation(format!("config key '{}': {}", e.path(), e.inner())))
}

impl RunConfig {
    /// Lag expressed in integrator steps.
    pub fn lag_steps(&self) -> Result<usize, CliError> {
        match (self.data.lag_steps, self.data.lag_time) {
            (Some(steps), None) => Ok(steps),
            (None, Some(time)) => {
                let steps = time / self.data.step_size;
                let rounded = steps.round();
                if (steps - rounded).abs() > 1e-9 * steps.abs().max(1.0) || rounded < 1.0 {
                    return Err(CliError::validation(format!(
                        "data.lag_time: {time} is not a positive multiple of step_size {}",
                        self.data.step_size
                    )));
                }
                Ok(rounded as usize)
            }
            (Some(_), Some(_)) => Err(CliError::validation(
                "data.lag_steps and data.lag_time are mutually exclusive".into(),
            )),
            (None, None) => Ok(100),
        }
    }

    pub fn stride(&self) -> Result<usize, CliError> {
        Ok(self.data.stride.unwrap_or(self.lag_steps()?))
    }

    /// Full validation; every complaint names its key.
    pub fn validate(&self) -> Result<(), CliError> {
        let mut errors = Vec::new();
        match self.system.name.as_str() {
            "ou" | "lemon_slice" | "triple_well" | "bickley" | "grid" => {}
            other => errors.push(format!(
                "system.name: unknown system '{other}' (expected ou, lemon_slice, triple_well, bickley, or grid)"
            )),
        }
        if self.data.m == 0 {
            errors.push("data.m: must be >= 1".into());
        }
        if self.data.step_size <= 0.0 {
            errors.push("data.step_size: must be > 0".into());
        }
        if self.system.alpha <= 0.0 {
            errors.push("system.alpha: must be > 0".into());
        }
        if self.system.wells < 2 {
            errors.push("system.wells: must be >= 2".into());
        }
        if let Some(beta) = self.system.beta {
            if beta <= 0.0 {
                errors.push("system.beta: must be > 0".into());
            }
        }
        if self.system.name == "bickley" && self.system.t1 < self.system.t0 {
            errors.push("system.t1: must be >= t0".into());
        }
        if self.system.name == "grid" {
            if self.system.domain_min.len() != self.system.domain_max.len()
                || self.system.domain_min.is_empty()
            {
                errors.push("system.domain_min/domain_max: need matching non-empty bounds".into());
            } else if self
                .system
                .domain_min
                .iter()
                .zip(&self.system.domain_max)
                .any(|(lo, hi)| lo >= hi)
            {
                errors.push("system.domain_min: each bound must be below domain_max".into());
            }
            if !matches!(self.system.grid_mode.as_str(), "uniform" | "regular") {
                errors.push(format!(
                    "system.grid_mode: unknown mode '{}'",
                    self.system.grid_mode
                ));
            }
        }
        if self.model.widths.is_empty() || self.model.widths.contains(&0) {
            errors.push("model.widths: need at least one positive width".into());
        }
        if !matches!(self.model.activation.as_str(), "tanh" | "relu" | "gaussian") {
            errors.push(format!(
                "model.activation: unknown activation '{}'",
                self.model.activation
            ));
        }
        if !matches!(self.model.distribution.as_str(), "normal" | "uniform") {
            errors.push(format!(
                "model.distribution: unknown family '{}'",
                self.model.distribution
            ));
        }
        if !matches!(self.model.mode.as_str(), "eigen" | "singular" | "schrodinger") {
            errors.push(format!("model.mode: unknown mode '{}'", self.model.mode));
        }
        if self.model.n == 0 {
            errors.push("model.n: must be >= 1".into());
        }
        if !(self.model.rank_tol > 0.0 && self.model.rank_tol < 1.0) {
            errors.push("model.rank_tol: must lie in (0, 1)".into());
        }
        if !matches!(
            self.model.potential.as_str(),
            "qho" | "ou" | "lemon_slice" | "triple_well"
        ) {
            errors.push(format!(
                "model.potential: unknown potential '{}'",
                self.model.potential
            ));
        }
        if self.model.omega <= 0.0 {
            errors.push("model.omega: must be > 0".into());
        }
        if self.training.step_size < 0.0 {
            errors.push("training.step_size: must be >= 0".into());
        }
        if !matches!(self.training.output_activation.as_str(), "tanh" | "identity") {
            errors.push(format!(
                "training.output_activation: unknown activation '{}'",
                self.training.output_activation
            ));
        }
        if self.ensemble.members < 2 {
            errors.push("ensemble.members: must be >= 2".into());
        }
        if !matches!(self.ensemble.eval_mode.as_str(), "grid" | "data") {
            errors.push(format!(
                "ensemble.eval_mode: unknown mode '{}'",
                self.ensemble.eval_mode
            ));
        }
        if self.ensemble.eval_mode == "grid"
            && (self.ensemble.grid_points.is_empty()
                || self.ensemble.grid_points.iter().any(|p| *p < 2))
        {
            errors.push("ensemble.grid_points: need at least 2 points per axis".into());
        }
        if let Err(e) = self.lag_steps() {
            errors.push(e.to_string());
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(CliError::validation(errors.join("\n")))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected_with_path() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, "[data]\nmm = 3\n").unwrap();
        let err = load_config(Some(&p), &[]).unwrap_err();
        assert!(err.to_string().contains("data"), "{err}");
    }

    #[test]
    fn overrides_win_over_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, "[data]\nm = 10\n[model]\nwidths = [4]\n").unwrap();
        let cfg = load_config(
            Some(&p),
            &[
                "data.m=99".into(),
                "model.widths=[8, 16]".into(),
                "system.name=triple_well".into(),
            ],
        )
        .unwrap();
        assert_eq!(cfg.data.m, 99);
        assert_eq!(cfg.model.widths, vec![8, 16]);
        assert_eq!(cfg.system.name, "triple_well");
    }

    #[test]
    fn zero_m_fails_validation() {
        let cfg = load_config(None, &["data.m=0".into()]).unwrap();
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("data.m"));
    }

    #[test]
    fn lag_time_converts_to_steps() {
        let cfg = load_config(None, &["data.lag_time=0.5".into()]).unwrap();
        assert_eq!(cfg.lag_steps().unwrap(), 100);
        let bad = load_config(None, &["data.lag_time=0.5003".into()]).unwrap();
        assert!(bad.lag_steps().is_err());
    }
}
