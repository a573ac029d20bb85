//! Experiment configuration: one JSON document describes a whole run.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use rucoord_core::dynamics::ENUMERATE_MAX;
use rucoord_core::game::{additive_game, ShockCdf, ThresholdDist};
use rucoord_core::network::{LatticeSpec, Network};
use rucoord_core::StepFn;

use crate::HarnessError;

/// Source of the threshold distribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum GameSource {
    /// `P` given directly as `{"base": .., "steps": [[x, v], ..]}`.
    Inline { p: StepFn },
    /// Additive payoffs `alpha - lambda * eps`, discretized with steps of at most `max_step`.
    Additive {
        alpha: f64,
        lambda: f64,
        shock: ShockCdf,
        #[serde(default = "default_max_step")]
        max_step: f64,
    },
}

fn default_max_step() -> f64 {
    1e-3
}

impl GameSource {
    pub fn build(&self) -> Result<ThresholdDist, HarnessError> {
        Ok(match self {
            GameSource::Inline { p } => ThresholdDist::direct(p.clone()),
            GameSource::Additive {
                alpha,
                lambda,
                shock,
                max_step,
            } => additive_game(*alpha, *lambda, *shock, *max_step)?,
        })
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = read(path)?;
        serde_json::from_str(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum NetworkSource {
    Complete { n: usize },
    /// `k` disjoint copies of the complete graph on `n` nodes.
    Copies { n: usize, k: usize },
    Lattice { side: usize, density: usize },
    /// Edge-list file; relative paths resolve against the config file.
    File { path: PathBuf },
}

impl NetworkSource {
    pub fn build(&self) -> Result<Network, HarnessError> {
        Ok(match self {
            NetworkSource::Complete { n } => Network::complete_graph(*n)?,
            NetworkSource::Copies { n, k } => Network::complete_graph(*n)?.disjoint_copies(*k)?,
            NetworkSource::Lattice { side, density } => Network::lattice(LatticeSpec::new(*side, *density)?)?,
            NetworkSource::File { path } => Network::read_edge_list(path)?,
        })
    }

    /// Node count without building the network, when cheap to know.
    pub fn nodes(&self) -> Option<usize> {
        match self {
            NetworkSource::Complete { n } => Some(*n),
            NetworkSource::Copies { n, k } => Some(n * k),
            NetworkSource::Lattice { side, .. } => Some(side * side),
            NetworkSource::File { .. } => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Probe {
    /// Largest and smallest equilibria by monotone iteration.
    Extremal,
    /// Every equilibrium, for `n <= 20`.
    Enumerate,
    /// Best responses to each stable fixed point, followed by dynamics.
    SeededLocal,
    /// Initial profile at `x*`, upward then downward dynamics, bound audit.
    RuPath,
}

/// Cube parameters for lattice analysis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeAnalysis {
    /// Small-cube side in nodes.
    pub b: usize,
    /// Large-cube side in nodes.
    pub big: usize,
    pub gamma: f64,
    pub radius: f64,
    pub rho: f64,
    #[serde(default = "default_d")]
    pub d: f64,
}

fn default_d() -> f64 {
    rucoord_core::lattice::DEFAULT_D
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub game: GameSource,
    pub network: NetworkSource,
    #[serde(default = "default_replications")]
    pub replications: u64,
    pub seed: u64,
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default = "default_probes")]
    pub probes: Vec<Probe>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub lattice: Option<LatticeAnalysis>,
}

fn default_replications() -> u64 {
    1
}

fn default_eta() -> f64 {
    0.05
}

fn default_probes() -> Vec<Probe> {
    vec![Probe::Extremal]
}

impl ExperimentConfig {
    pub fn new(game: GameSource, network: NetworkSource, replications: u64, seed: u64) -> Self {
        ExperimentConfig {
            game,
            network,
            replications,
            seed,
            eta: default_eta(),
            probes: default_probes(),
            output: None,
            lattice: None,
        }
    }

    pub fn with_probes(mut self, probes: &[Probe]) -> Self {
        self.probes = probes.to_vec();
        self
    }

    pub fn with_eta(mut self, eta: f64) -> Self {
        self.eta = eta;
        self
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parse and validate a config file. Relative network and output paths
    /// are resolved against the file's directory.
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = read(path)?;
        let mut cfg: Self =
            serde_json::from_str(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let NetworkSource::File { path: p } = &mut cfg.network {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if let Some(out) = &mut cfg.output {
            if out.is_relative() {
                *out = base.join(&*out);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.replications == 0 {
            return Err(HarnessError::Config("replications must be at least 1".into()));
        }
        if !(self.eta > 0.0 && self.eta <= 0.5) {
            return Err(HarnessError::Config(format!("eta = {} outside (0, 0.5]", self.eta)));
        }
        if self.probes.contains(&Probe::Enumerate) {
            if let Some(n) = self.network.nodes() {
                if n > ENUMERATE_MAX {
                    return Err(HarnessError::Config(format!(
                        "enumerate probe needs n <= {ENUMERATE_MAX}, network has {n}"
                    )));
                }
            }
        }
        if let Some(l) = &self.lattice {
            if !(l.gamma > 0.0 && l.rho >= 0.0 && l.radius >= 0.0 && l.d >= 0.0) {
                return Err(HarnessError::Config("lattice analysis needs gamma > 0 and rho, radius, d >= 0".into()));
            }
        }
        Ok(())
    }

    pub fn has(&self, probe: Probe) -> bool {
        self.probes.contains(&probe)
    }
}

fn read(path: &Path) -> Result<String, HarnessError> {
    fs::read_to_string(path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))
}
