//! Versioned TOML experiment configuration. Unknown keys are errors.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{LabError, Result};
use crate::escape_prob::DEFAULT_TEST_WALKS;
use crate::experiments::{parse_graph, Experiment, MAX_UST_VERTICES};
use crate::lattice_walk::Dim;

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_RAW_ROW_LIMIT: u64 = 10_000_000;
pub const DEFAULT_RESERVOIR: usize = 100_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    Growth,
    Escape,
    Cutpoints,
    Nonintersect,
    Pieces,
    UstCheck,
    Tails,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    /// Label used in stream ids and CSV rows; defaults to the kind.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub kind: Kind,
    #[serde(default = "default_dim")]
    pub dim: u8,
    /// Radii, or cut counts for `pieces`. Unused by `ust-check`.
    #[serde(default)]
    pub radii: Vec<f64>,
    /// Samples per radius, split over the chains.
    pub samples: u64,
    pub seed: u64,
    #[serde(default = "default_chains")]
    pub chains: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_walks: Option<usize>,
    /// `escape`: measure `Es(n / r, n)` for each ratio `r`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub inner_ratios: Vec<f64>,
    /// `pieces`: radius at which walk pairs are conditioned not to intersect.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation_radius: Option<f64>,
    /// `tails`: multiples `t` of the mean at which tails are measured.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub thresholds: Vec<f64>,
    /// `ust-check`: `cycle:N`, `path:N` or `grid:RxC`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph: Option<String>,
    /// `ust-check`: vertex pair for the spanning-tree path versus loop-erased walk comparison.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pemantle: Option<(usize, usize)>,
    #[serde(default = "default_row_limit")]
    pub raw_row_limit: u64,
    #[serde(default = "default_reservoir")]
    pub reservoir_size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

fn default_dim() -> u8 {
    2
}
fn default_chains() -> u32 {
    1
}
fn default_row_limit() -> u64 {
    DEFAULT_RAW_ROW_LIMIT
}
fn default_reservoir() -> usize {
    DEFAULT_RESERVOIR
}

fn invalid(msg: impl Into<String>) -> LabError {
    LabError::ConfigInvalid(msg.into())
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| invalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn name(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.experiment_name().to_string())
    }

    fn experiment_name(&self) -> &'static str {
        match self.kind {
            Kind::Growth => "growth",
            Kind::Escape => "escape",
            Kind::Cutpoints => "cutpoints",
            Kind::Nonintersect => "nonintersect",
            Kind::Pieces => "pieces",
            Kind::UstCheck => "ust-check",
            Kind::Tails => "tails",
        }
    }

    pub fn dimension(&self) -> Result<Dim> {
        Dim::from_usize(self.dim as usize).map_err(|_| invalid(format!("dim must be 2 or 3, got {}", self.dim)))
    }

    /// SHA-256 of the canonical TOML rendering, excluding the output path.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.out = None;
        let digest = Sha256::digest(canonical.to_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// The radius grid as cells see it; `ust-check` has one cell per chain at
    /// `n = vertex count`.
    pub fn grid(&self) -> Result<Vec<f64>> {
        match self.kind {
            Kind::UstCheck => Ok(vec![parse_graph(self.graph.as_deref().unwrap_or(""))?.vertex_count() as f64]),
            _ => Ok(self.radii.clone()),
        }
    }

    pub fn experiment(&self) -> Result<Experiment> {
        let dim = self.dimension()?;
        Ok(match self.kind {
            Kind::Growth => Experiment::Growth { dim },
            Kind::Cutpoints => Experiment::Cutpoints { dim },
            Kind::Nonintersect => Experiment::Nonintersect { dim },
            Kind::Tails => Experiment::Tails { dim },
            Kind::Escape => Experiment::Escape {
                dim,
                test_walks: self.test_walks.unwrap_or(DEFAULT_TEST_WALKS),
                inner_ratios: self.inner_ratios.clone(),
            },
            Kind::Pieces => Experiment::Pieces {
                dim,
                truncation_radius: self.truncation_radius.ok_or_else(|| invalid("pieces needs truncation_radius"))?,
            },
            Kind::UstCheck => Experiment::UstCheck {
                graph: self.graph.clone().ok_or_else(|| invalid("ust-check needs graph"))?,
                pemantle: self.pemantle,
            },
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(invalid(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        self.dimension()?;
        if self.samples == 0 || self.chains == 0 {
            return Err(invalid("samples and chains must be positive"));
        }
        if u64::from(self.chains) > self.samples {
            return Err(invalid("more chains than samples"));
        }
        if self.reservoir_size == 0 {
            return Err(invalid("reservoir_size must be positive"));
        }
        if let Some(name) = &self.name {
            if name.is_empty() || name.contains([',', '"', '\n', '/', '\\']) {
                return Err(invalid(format!("name `{name}` must be non-empty without , \" / \\ or newlines")));
            }
        }
        let kind = self.kind;
        let forbid = |present: bool, key: &str| {
            if present {
                Err(invalid(format!("`{key}` does not apply to {}", self.experiment_name())))
            } else {
                Ok(())
            }
        };
        forbid(self.test_walks.is_some() && kind != Kind::Escape, "test_walks")?;
        forbid(!self.inner_ratios.is_empty() && kind != Kind::Escape, "inner_ratios")?;
        forbid(self.truncation_radius.is_some() && kind != Kind::Pieces, "truncation_radius")?;
        forbid(!self.thresholds.is_empty() && kind != Kind::Tails, "thresholds")?;
        forbid(self.graph.is_some() && kind != Kind::UstCheck, "graph")?;
        forbid(self.pemantle.is_some() && kind != Kind::UstCheck, "pemantle")?;

        if kind == Kind::UstCheck {
            forbid(!self.radii.is_empty(), "radii")?;
            let g = parse_graph(self.graph.as_deref().ok_or_else(|| invalid("ust-check needs graph"))?)?;
            if g.vertex_count() > MAX_UST_VERTICES {
                return Err(invalid(format!("ust-check graphs are limited to {MAX_UST_VERTICES} vertices")));
            }
            if let Some((u, v)) = self.pemantle {
                if u >= g.vertex_count() || v >= g.vertex_count() {
                    return Err(invalid("pemantle vertices out of range"));
                }
            }
            return Ok(());
        }
        if self.radii.is_empty() {
            return Err(invalid("radii must be non-empty"));
        }
        if self.radii.iter().any(|r| !r.is_finite() || *r < 1.0) {
            return Err(invalid("radii must be finite and at least 1"));
        }
        if self.radii.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("radii must be strictly increasing"));
        }
        match kind {
            Kind::Escape => {
                if self.test_walks == Some(0) {
                    return Err(invalid("test_walks must be positive"));
                }
                if self.inner_ratios.iter().any(|r| !(*r >= 1.0 && r.is_finite())) {
                    return Err(invalid("inner_ratios must be at least 1"));
                }
            }
            Kind::Pieces => {
                if self.radii.iter().any(|r| r.fract() != 0.0) {
                    return Err(invalid("pieces radii are cut counts and must be integers"));
                }
                match self.truncation_radius {
                    Some(t) if t.is_finite() && t >= 1.0 => {}
                    _ => return Err(invalid("pieces needs truncation_radius >= 1")),
                }
            }
            Kind::Tails if self.thresholds.is_empty() || self.thresholds.iter().any(|t| !(*t > 0.0 && t.is_finite())) => {
                return Err(invalid("tails needs positive thresholds"));
            }
            _ => {}
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const GROWTH: &str = r#"
schema_version = 1
kind = "growth"
dim = 2
radii = [16, 32]
samples = 10
seed = 7
"#;

    #[test]
    fn parses_minimal_config() {
        let c = ExperimentConfig::from_toml(GROWTH).unwrap();
        assert_eq!(c.kind, Kind::Growth);
        assert_eq!(c.chains, 1);
        assert_eq!(c.name(), "growth");
        assert_eq!(ExperimentConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn unknown_keys_are_errors() {
        let text = format!("{GROWTH}\nsample = 3\n");
        assert!(matches!(ExperimentConfig::from_toml(&text), Err(LabError::ConfigInvalid(_))));
    }

    #[test]
    fn version_and_grid_are_checked() {
        for bad in [
            GROWTH.replace("schema_version = 1", "schema_version = 2"),
            GROWTH.replace("[16, 32]", "[32, 16]"),
            GROWTH.replace("[16, 32]", "[]"),
            GROWTH.replace("dim = 2", "dim = 4"),
            GROWTH.replace("samples = 10", "samples = 0"),
            format!("{GROWTH}\ngraph = \"cycle:4\"\n"),
            GROWTH.replace("kind = \"growth\"", "kind = \"pieces\""),
        ] {
            assert!(ExperimentConfig::from_toml(&bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn hash_ignores_formatting_and_output_path() {
        let a = ExperimentConfig::from_toml(GROWTH).unwrap();
        let mut b = ExperimentConfig::from_toml(&GROWTH.replace("radii = [16, 32]", "radii = [16.0,32.0]")).unwrap();
        assert_eq!(a.hash(), b.hash());
        b.out = Some("elsewhere".into());
        assert_eq!(a.hash(), b.hash());
        b.seed = 8;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn ust_config() {
        let text = "schema_version = 1\nkind = \"ust-check\"\ngraph = \"cycle:4\"\nsamples = 100\nseed = 1\npemantle = [0, 2]\n";
        let c = ExperimentConfig::from_toml(text).unwrap();
        assert_eq!(c.grid().unwrap(), vec![4.0]);
        let big = text.replace("cycle:4", "grid:4x4");
        assert!(ExperimentConfig::from_toml(&big).is_err());
    }
}
