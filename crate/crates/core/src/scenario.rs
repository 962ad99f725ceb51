//! JSON scenario files: one file describes one formation and one run.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::{AgentGains, ControlGains, GainError, DEFAULT_GAIN};
use crate::geometry::Vec3;
use crate::graph::{GraphError, SensingGraph};
use crate::shape::{spec_from_embedding, targets_from_spec, BisphericalTargets, ShapeError, ShapeSpec};
use crate::sim::{Formation, FrameSpec, InitSpec, Integrator, ScaleEvent, SimConfig, SimError};

pub const SCENARIO_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSection {
    /// `[source, sink]`: `source` senses `sink`.
    pub edges: Vec<[usize; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeDistance {
    pub from: usize,
    pub to: usize,
    pub distance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ShapeSection {
    /// Distances and signed volumes read off an example configuration.
    Embedding(Vec<[f64; 3]>),
    Explicit {
        distances: Vec<EdgeDistance>,
        volumes: Vec<f64>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GainsSection {
    Uniform(f64),
    PerAgent(Vec<AgentGains>),
}

impl Default for GainsSection {
    fn default() -> Self {
        GainsSection::Uniform(DEFAULT_GAIN)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    pub integrator: Integrator,
    pub dt: f64,
    pub t_end: f64,
    pub events: Vec<ScaleEvent>,
    pub log_every: usize,
    pub pinned: Vec<usize>,
}

impl Default for SimSection {
    fn default() -> Self {
        let d = SimConfig::default();
        Self {
            integrator: d.integrator,
            dt: d.dt,
            t_end: d.t_end,
            events: d.events,
            log_every: d.log_every,
            pinned: d.pinned,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
    pub format: OutputFormat,
    /// File stem of the trajectory and summary.
    pub stem: String,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: None,
            format: OutputFormat::Csv,
            stem: "trajectory".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub version: u32,
    #[serde(default)]
    pub name: Option<String>,
    pub graph: GraphSection,
    pub shape: ShapeSection,
    #[serde(default)]
    pub gains: GainsSection,
    #[serde(default)]
    pub sim: SimSection,
    #[serde(default = "default_init")]
    pub init: InitSpec,
    #[serde(default)]
    pub frames: FrameSpec,
    #[serde(default)]
    pub noise: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: OutputSection,
}

fn default_init() -> InitSpec {
    SimConfig::default().init
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed scenario: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("unsupported scenario version {0}, expected {SCENARIO_VERSION}")]
    Version(u32),
    #[error("graph has no edges")]
    EmptyGraph,
    #[error("malformed graph: {0}")]
    Structure(GraphError),
    #[error("{what} lists {actual} agents, graph has {expected}")]
    AgentCount {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("invalid gains: {0}")]
    Gains(#[from] GainError),
    #[error("invalid desired shape: {0}")]
    Shape(#[from] ShapeError),
    #[error("invalid simulation settings: {0}")]
    Sim(#[from] SimError),
}

impl ScenarioError {
    /// Domain failures (as opposed to I/O and schema problems).
    pub fn is_domain(&self) -> bool {
        matches!(self, ScenarioError::Shape(_) | ScenarioError::Gains(_))
    }
}

impl ScenarioFile {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let file: ScenarioFile = serde_json::from_str(text)?;
        if file.version != SCENARIO_VERSION {
            return Err(ScenarioError::Version(file.version));
        }
        Ok(file)
    }

    pub fn read(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::from_json(&text)
    }

    /// Agent count implied by the edge list.
    pub fn agents(&self) -> usize {
        self.graph.edges.iter().flatten().copied().max().unwrap_or(0)
    }

    /// Structurally checked graph, without the hierarchy rules.
    pub fn sensing_graph(&self) -> Result<SensingGraph, ScenarioError> {
        if self.graph.edges.is_empty() {
            return Err(ScenarioError::EmptyGraph);
        }
        let edges = self.graph.edges.iter().map(|&[s, t]| (s, t)).collect();
        SensingGraph::new(self.agents(), edges).map_err(ScenarioError::Structure)
    }

    pub fn shape_spec(&self, g: &SensingGraph) -> Result<ShapeSpec, ScenarioError> {
        match &self.shape {
            ShapeSection::Embedding(p) => {
                if p.len() != g.n() {
                    return Err(ScenarioError::AgentCount {
                        what: "shape embedding",
                        expected: g.n(),
                        actual: p.len(),
                    });
                }
                let p: Vec<Vec3> = p.iter().map(|c| Vec3::new(c[0], c[1], c[2])).collect();
                Ok(spec_from_embedding(&p, g)?)
            }
            ShapeSection::Explicit { distances, volumes } => {
                let map: BTreeMap<_, _> = distances.iter().map(|e| ((e.from, e.to), e.distance)).collect();
                Ok(ShapeSpec::new(g.clone(), map, volumes.clone())?)
            }
        }
    }

    pub fn control_gains(&self, n: usize) -> Result<ControlGains, ScenarioError> {
        match &self.gains {
            GainsSection::Uniform(k) => Ok(ControlGains::new(vec![AgentGains::uniform(*k); n])?),
            GainsSection::PerAgent(list) if list.len() != n => Err(ScenarioError::AgentCount {
                what: "gains",
                expected: n,
                actual: list.len(),
            }),
            GainsSection::PerAgent(list) => Ok(ControlGains::new(list.clone())?),
        }
    }

    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            integrator: self.sim.integrator,
            dt: self.sim.dt,
            t_end: self.sim.t_end,
            events: self.sim.events.clone(),
            seed: self.seed,
            init: self.init.clone(),
            frames: self.frames,
            noise: self.noise,
            log_every: self.sim.log_every,
            pinned: self.sim.pinned.clone(),
        }
    }
}

/// A scenario with every section checked and the setpoints derived.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub file: ScenarioFile,
    pub spec: ShapeSpec,
    pub formation: Formation,
    pub sim: SimConfig,
}

impl Scenario {
    pub fn from_file(file: ScenarioFile) -> Result<Self, ScenarioError> {
        let graph = file.sensing_graph()?;
        let spec = file.shape_spec(&graph)?;
        let targets = targets_from_spec(&spec)?;
        let gains = file.control_gains(graph.n())?;
        let sim = file.sim_config();
        sim.validate(graph.n())?;
        Ok(Self {
            file,
            spec,
            formation: Formation { graph, targets, gains },
            sim,
        })
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        Self::from_file(ScenarioFile::read(path)?)
    }

    pub fn targets(&self) -> &BisphericalTargets {
        &self.formation.targets
    }
}
