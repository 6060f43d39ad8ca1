//! Pipeline configuration file.
//!
//! A single TOML document with one section per stage. Command-line flags
//! override file values, and file values override built-in defaults.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::degrade::{Degradation, HexGrid};
use crate::error::{Error, Result};
use crate::geo::{GeoPoint, LocalFrame};
use crate::mapmatch::HmmParams;
use crate::metrics::default_bins;
use crate::model::ModelConfig;
use crate::roadnet::RoadGraph;
use crate::trajgen::GenConfig;

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Global seed; every stage derives its own stream from it.
    pub seed: Option<u64>,
    /// Train/validation/test fractions used by `gen`.
    pub split: [f64; 3],
    pub paths: PathsSection,
    pub gen: GenConfig,
    pub degrade: DegradeSection,
    pub model: ModelConfig,
    pub hmm: HmmSection,
    pub eval: EvalSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: None,
            split: [0.8, 0.1, 0.1],
            paths: PathsSection::default(),
            gen: GenConfig::default(),
            degrade: DegradeSection::default(),
            model: ModelConfig::default(),
            hmm: HmmSection::default(),
            eval: EvalSection::default(),
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    pub graph: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DegradeKind {
    #[default]
    Hex,
    Round,
    Noise,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DegradeSection {
    pub kind: DegradeKind,
    /// H3-style resolution used when `edge_len_m` is not given.
    pub level: u8,
    pub edge_len_m: Option<f64>,
    /// Hex lattice origin `[lat, lon]`; defaults to the road graph's frame
    /// origin.
    pub origin: Option<[f64; 2]>,
    pub decimals: u32,
    pub sigma_m: f64,
}

impl Default for DegradeSection {
    fn default() -> Self {
        DegradeSection {
            kind: DegradeKind::Hex,
            level: 7,
            edge_len_m: None,
            origin: None,
            decimals: 3,
            sigma_m: 10.0,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HmmSection {
    pub sigma_m: Option<f64>,
    pub beta_m: Option<f64>,
    /// Defaults to twice the hex edge length.
    pub candidate_radius_m: Option<f64>,
    pub max_candidates: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    /// Histogram bin edges in km; the last may be `inf`.
    pub bins: Option<Vec<f64>>,
}

impl PipelineConfig {
    pub fn from_toml(text: &str, context: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            context: context.to_string(),
            message: e.message().to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, &path.display().to_string())
    }

    /// Push the global seed into every stage block.
    pub fn apply_seed(&mut self, flag: Option<u64>) {
        let seed = flag.or(self.seed).unwrap_or(0);
        self.seed = Some(seed);
        self.gen.seed = seed;
        self.model.seed = seed;
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn graph_path(&self) -> Result<&Path> {
        self.paths
            .graph
            .as_deref()
            .ok_or_else(|| Error::Config("no road graph configured; set paths.graph".into()))
    }

    pub fn hex_grid(&self, graph: Option<&RoadGraph>) -> Result<HexGrid> {
        let d = &self.degrade;
        let frame = match (d.origin, graph.and_then(RoadGraph::frame)) {
            (Some([lat, lon]), _) => LocalFrame::at(GeoPoint::new(lat, lon)?)?,
            (None, Some(f)) => *f,
            (None, None) => {
                return Err(Error::Config(
                    "hex degradation needs degrade.origin or a non-empty road graph".into(),
                ))
            }
        };
        match d.edge_len_m {
            Some(e) => HexGrid::new(frame, e),
            None => HexGrid::at_resolution(frame, d.level),
        }
    }

    pub fn degradation(&self, graph: Option<&RoadGraph>) -> Result<Degradation> {
        Ok(match self.degrade.kind {
            DegradeKind::Hex => Degradation::Hex(self.hex_grid(graph)?),
            DegradeKind::Round => Degradation::Round {
                decimals: self.degrade.decimals,
            },
            DegradeKind::Noise => Degradation::Noise {
                sigma_m: self.degrade.sigma_m,
                seed: self.seed(),
            },
        })
    }

    /// HMM parameters; an unset search radius becomes twice the hex edge.
    pub fn hmm_params(&self, hex_edge_m: Option<f64>) -> Result<HmmParams> {
        let base = match hex_edge_m {
            Some(e) => HmmParams::for_hex_edge(e),
            None => HmmParams::default(),
        };
        let h = &self.hmm;
        let p = HmmParams {
            sigma_m: h.sigma_m.unwrap_or(base.sigma_m),
            beta_m: h.beta_m.unwrap_or(base.beta_m),
            candidate_radius_m: h.candidate_radius_m.unwrap_or(base.candidate_radius_m),
            max_candidates: h.max_candidates.unwrap_or(base.max_candidates),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn bins(&self) -> Vec<f64> {
        self.eval.bins.clone().unwrap_or_else(default_bins)
    }

    pub fn validate(&self) -> Result<()> {
        self.gen.validate()?;
        self.model.validate()?;
        if let Some(e) = self.degrade.edge_len_m {
            if !(e > 0.0 && e.is_finite()) {
                return Err(Error::Config(format!(
                    "degrade.edge_len_m must be > 0, got {e}"
                )));
            }
        }
        Ok(())
    }
}
