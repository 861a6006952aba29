//! Run configuration: JSON on disk, with command-line overrides.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use taplab::{AtomicMeasure, GridSpec, Mixture, PrefixSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct XiConfig {
    /// (p, β_p²) pairs.
    pub coeffs: Vec<(u32, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrefixConfig {
    pub u: Vec<f64>,
    pub q: Vec<f64>,
    pub tail: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum MeasureConfig {
    /// (location, weight) pairs.
    Atoms(Vec<(f64, f64)>),
    Prefix(PrefixConfig),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(rename = "L")]
    pub half_width: f64,
    pub points: usize,
    pub quad_nodes: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    pub paths: usize,
    pub dt: f64,
    pub seed: u64,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            paths: 100_000,
            dt: 5e-4,
            seed: 0,
        }
    }
}

/// Task name and task-specific parameters; each task reads the fields it needs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    /// Energy level f.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f: Option<f64>,
    /// Number of prefix atoms after the origin.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tail_atoms: Option<usize>,
    /// Fixed prefix masses (null marks a free entry).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u: Option<Vec<Option<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<Vec<Option<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub starts: Option<usize>,
    /// "stick" or "softmax".
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coords: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thetas: Option<Vec<f64>>,
    /// "annealed" or "quenched".
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fs: Option<Vec<f64>>,
    /// Magnetizations m_1..m_N.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<Vec<f64>>,
    /// "plateau" or "euler".
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scheme: Option<String>,
    /// Spectral measure as (location, weight) pairs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spectrum: Option<Vec<(f64, f64)>>,
    /// Semicircle variance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xs: Option<Vec<f64>>,
    /// Dimension N for field and matrix experiments.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    /// "quick" or "full".
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub xi: XiConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measure: Option<MeasureConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridConfig>,
    #[serde(default)]
    pub mc: McConfig,
    #[serde(default)]
    pub task: TaskConfig,
    /// Output CSV path; stdout when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            xi: XiConfig {
                coeffs: vec![(2, 0.25)],
            },
            measure: None,
            grid: None,
            mc: McConfig::default(),
            task: TaskConfig::default(),
            out: None,
        }
    }
}

/// Configuration error with the JSON path of the offending field.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "config error at `{}`: {}", self.path, self.message)
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| ConfigError {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical JSON form without the output path, hex encoded.
    pub fn hash(&self) -> String {
        let c = Self {
            out: None,
            ..self.clone()
        };
        hex::encode(Sha256::digest(c.to_json().as_bytes()))
    }

    pub fn mixture(&self) -> Result<Mixture, ConfigError> {
        Mixture::new(&self.xi.coeffs).map_err(|e| ConfigError {
            path: "xi.coeffs".into(),
            message: e.to_string(),
        })
    }

    pub fn grid_spec(&self, mix: &Mixture) -> GridSpec {
        match self.grid {
            Some(g) => GridSpec {
                half_width: g.half_width,
                points: g.points,
                quad_nodes: g.quad_nodes,
            },
            None => GridSpec::for_mixture(mix),
        }
    }

    pub fn measure(&self) -> Result<AtomicMeasure, ConfigError> {
        let err = |e: taplab::Error| ConfigError {
            path: "measure".into(),
            message: e.to_string(),
        };
        match &self.measure {
            None => Err(ConfigError {
                path: "measure".into(),
                message: "this task needs a measure".into(),
            }),
            Some(MeasureConfig::Atoms(a)) => AtomicMeasure::new(a.clone()).map_err(err),
            Some(MeasureConfig::Prefix(p)) => {
                let tail = AtomicMeasure::new(p.tail.clone()).map_err(err)?;
                PrefixSpec::new(p.u.clone(), p.q.clone(), tail)
                    .and_then(|s| s.assemble())
                    .map_err(err)
            }
        }
    }
}
