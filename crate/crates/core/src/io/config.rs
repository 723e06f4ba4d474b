//! The JSON system file and the run configuration it may carry.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{IoError, SCHEMA_VERSION};
use crate::cycles::{BlockSearchConfig, GripenbergConfig, SearchConfig, DEFAULT_ENUM_CAP};
use crate::ipa::IpaConfig;
use crate::linalg::{self, Matrix};
use crate::system::{validate_system, SwitchingSystem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Text,
    Csv,
    Json,
}

impl std::str::FromStr for OutputFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "text" => Ok(OutputFormat::Text),
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(format!("unknown format {other:?} (text, csv, json)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub steps: Vec<f64>,
    pub beam: usize,
    pub depth: usize,
    pub enum_length: usize,
    /// Largest number of mode blocks in the block scan; 0 disables it.
    pub block_count: usize,
    /// Largest loop count per block in the block scan.
    pub block_loops: usize,
    pub max_iterations: usize,
    pub max_vertices: usize,
    /// Extra growth rate per unit time for the polytope iteration (0 = exact).
    pub rate_margin: f64,
    /// `None`: decided from the regimes (Metzler ⇒ positive).
    pub positive_mode: Option<bool>,
    pub format: OutputFormat,
}

impl Default for RunConfig {
    fn default() -> Self {
        let g = GripenbergConfig::default();
        let b = BlockSearchConfig::default();
        let i = IpaConfig::default();
        RunConfig {
            steps: Vec::new(),
            beam: g.beam,
            depth: g.depth,
            enum_length: crate::cycles::DEFAULT_ENUM_LENGTH,
            block_count: b.max_blocks,
            block_loops: b.max_loops,
            max_iterations: i.max_iterations,
            max_vertices: i.max_vertices_per_mode,
            rate_margin: i.rate_margin,
            positive_mode: None,
            format: OutputFormat::Text,
        }
    }
}

impl RunConfig {
    pub fn search_config(&self) -> SearchConfig {
        SearchConfig {
            enum_length: self.enum_length,
            enum_cap: DEFAULT_ENUM_CAP,
            gripenberg: GripenbergConfig {
                beam: self.beam,
                depth: self.depth,
                ..GripenbergConfig::default()
            },
            blocks: (self.block_count >= 2).then(|| BlockSearchConfig {
                max_blocks: self.block_count,
                max_loops: self.block_loops,
                ..BlockSearchConfig::default()
            }),
        }
    }

    pub fn ipa_config(&self, positive_mode: bool) -> IpaConfig {
        IpaConfig {
            max_iterations: self.max_iterations,
            max_vertices_per_mode: self.max_vertices,
            positive_mode,
            rate_margin: self.rate_margin,
            ..IpaConfig::default()
        }
    }

    /// Checks the parameters against a dwell time `m`.
    pub fn validate(&self, m: f64) -> Result<(), String> {
        if let Some(h) = self.steps.iter().find(|&&h| !(h > 0.0 && h <= m)) {
            return Err(format!("step {h} is outside (0, {m}]"));
        }
        if self.beam < 2 || !self.beam.is_multiple_of(2) {
            return Err(format!("beam must be a positive even number, got {}", self.beam));
        }
        if self.depth == 0 || self.enum_length == 0 {
            return Err("depth and enum_length must be positive".into());
        }
        if self.max_iterations == 0 || self.max_vertices == 0 {
            return Err("max_iterations and max_vertices must be positive".into());
        }
        if !(self.rate_margin >= 0.0 && self.rate_margin.is_finite()) {
            return Err(format!("rate_margin must be finite and >= 0, got {}", self.rate_margin));
        }
        if self.block_count == 1 {
            return Err("block_count must be 0 (off) or at least 2".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemFile {
    pub schema_version: String,
    /// Row-major `d×d` arrays.
    pub matrices: Vec<Vec<Vec<f64>>>,
    pub dwell_time: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalize_2norm: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<RunConfig>,
}

impl SystemFile {
    pub fn from_system(sys: &SwitchingSystem) -> Self {
        SystemFile {
            schema_version: SCHEMA_VERSION.into(),
            matrices: sys.matrices().iter().map(rows_of).collect(),
            dwell_time: sys.dwell_time(),
            labels: sys.labels().map(|l| l.to_vec()),
            normalize_2norm: None,
            config: None,
        }
    }

    /// Builds and validates the system (normalizing if requested).
    pub fn to_system(&self, path: &str) -> Result<SwitchingSystem, IoError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(IoError::validation(
                path,
                format!("unsupported schema_version {:?}, expected {SCHEMA_VERSION:?}", self.schema_version),
            ));
        }
        let mut mats = Vec::with_capacity(self.matrices.len());
        for (k, rows) in self.matrices.iter().enumerate() {
            let d = rows.len();
            if let Some(r) = rows.iter().position(|r| r.len() != d) {
                return Err(IoError::validation(
                    path,
                    format!("matrices[{k}] row {r} has {} entries, expected {d}", rows[r].len()),
                ));
            }
            let mut a = Matrix::from_fn(d, d, |i, j| rows[i][j]);
            if self.normalize_2norm == Some(true) && d > 0 && a.iter().all(|x| x.is_finite()) {
                let n = linalg::operator_2norm(&a).map_err(|e| IoError::validation(path, e))?;
                if n > 0.0 {
                    a /= n;
                }
            }
            mats.push(a);
        }
        let sys = validate_system(mats, self.dwell_time).map_err(|e| IoError::validation(path, e))?;
        match &self.labels {
            Some(l) => sys.with_labels(l.clone()).map_err(|e| IoError::validation(path, e)),
            None => Ok(sys),
        }
    }
}

pub fn rows_of(a: &Matrix) -> Vec<Vec<f64>> {
    (0..a.nrows()).map(|i| a.row(i).iter().copied().collect()).collect()
}

/// Strict parse of a system document; unknown keys are rejected and absent
/// configuration fields take their defaults.
pub fn parse_system_str(text: &str, path: &str) -> Result<(SwitchingSystem, RunConfig), IoError> {
    let file: SystemFile = serde_json::from_str(text).map_err(|e| IoError::parse(path, &e))?;
    let sys = file.to_system(path)?;
    let cfg = file.config.unwrap_or_default();
    cfg.validate(sys.dwell_time()).map_err(|e| IoError::validation(path, e))?;
    Ok((sys, cfg))
}

pub fn parse_system_file(path: &Path) -> Result<(SwitchingSystem, RunConfig), IoError> {
    let text = std::fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
    parse_system_str(&text, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    const EX1: &str = r#"{
        "schema_version": "1",
        "matrices": [
            [[0.0, 0.0], [0.29289321881345254, 0.0]],
            [[-0.5857864376269051, -0.5857864376269051], [-0.29289321881345254, -0.5857864376269051]]
        ],
        "dwell_time": 1.0,
        "config": { "steps": [0.2] }
    }"#;

    #[test]
    fn example_file() {
        let (s, cfg) = parse_system_str(EX1, "ex1.json").unwrap();
        assert_eq!(s.mode_count(), 2);
        assert_eq!(s.dim(), 2);
        assert_eq!(s.dwell_time(), 1.0);
        assert_eq!(cfg.steps, vec![0.2]);
        assert_eq!(cfg.beam, 100);
    }

    #[test]
    fn negative_dwell_time() {
        let t = EX1.replace("\"dwell_time\": 1.0", "\"dwell_time\": -1");
        assert!(matches!(parse_system_str(&t, "x"), Err(IoError::Validation { .. })));
    }

    #[test]
    fn unknown_key_named() {
        let t = EX1.replace("\"dwell_time\": 1.0", "\"dwell_time\": 1.0, \"colour\": 3");
        match parse_system_str(&t, "x") {
            Err(IoError::Parse { message, line, .. }) => {
                assert!(message.contains("colour"), "{message}");
                assert!(line > 0);
            }
            other => panic!("{other:?}"),
        }
        let t = EX1.replace("\"steps\": [0.2]", "\"steps\": [0.2], \"bream\": 4");
        assert!(matches!(parse_system_str(&t, "x"), Err(IoError::Parse { message, .. }) if message.contains("bream")));
    }

    #[test]
    fn step_outside_range() {
        let t = EX1.replace("[0.2]", "[1.5]");
        assert!(matches!(parse_system_str(&t, "x"), Err(IoError::Validation { .. })));
    }

    #[test]
    fn ragged_and_schema() {
        let t = EX1.replace("[[0.0, 0.0], [0.29289321881345254, 0.0]]", "[[0.0, 0.0], [0.3]]");
        assert!(matches!(parse_system_str(&t, "x"), Err(IoError::Validation { .. })));
        let t = EX1.replace("\"schema_version\": \"1\"", "\"schema_version\": \"9\"");
        assert!(matches!(parse_system_str(&t, "x"), Err(IoError::Validation { .. })));
    }

    #[test]
    fn normalization() {
        let t = EX1.replace("\"dwell_time\": 1.0", "\"dwell_time\": 1.0, \"normalize_2norm\": true");
        let (s, _) = parse_system_str(&t, "x").unwrap();
        for a in s.matrices() {
            assert!((linalg::operator_2norm(a).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn file_roundtrip() {
        let (s, _) = parse_system_str(EX1, "x").unwrap();
        let text = serde_json::to_string(&SystemFile::from_system(&s)).unwrap();
        let (back, _) = parse_system_str(&text, "y").unwrap();
        assert_eq!(back.matrices(), s.matrices());
    }
}
