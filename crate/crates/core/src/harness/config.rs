use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::model::{Dynamics, InputSignal, ObservationModel, Quadrant, SystemModel, Visibility};
use crate::network::{RangeRule, TopologySpec, Trajectory};
use crate::node::{NodeConfig, DEFAULT_EPSILON, DEFAULT_WINDOW};
use crate::AgentId;

pub const DEFAULT_HORIZON: usize = 200;
pub const DEFAULT_RADIUS: f64 = 120.0;
/// Initial covariance is `DEFAULT_P0 · I`.
pub const DEFAULT_P0: f64 = 10.0;

// Neither the angular rate, the initial angle nor the start point of the
// target are published; these keep the target circling through all four
// quadrants before and after the input step.
const DEFAULT_OMEGA: f64 = 1e-4;
const DEFAULT_THETA0: f64 = 0.15;
const DEFAULT_X0: [f64; 2] = [250.0, 0.0];
const STATIC_OFFSET: f64 = 150.0;
/// Prior scale of the dynamic scenario. Compensation moves a node by
/// `ε P̄ Σ(...)`, which overshoots once `ε λ(P̄) |N|` nears 1; with up to
/// eight neighbours the 10·I prior is past that point.
pub const DYNAMIC_P0: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Stationary4Agent,
    Dynamic9Agent,
}

impl FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stationary_4agent" | "stationary" | "1" => Ok(ScenarioKind::Stationary4Agent),
            "dynamic_9agent" | "dynamic" | "2" => Ok(ScenarioKind::Dynamic9Agent),
            other => Err(Error::Config(format!("unknown scenario {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Diskf,
    Oracle,
    LocalOnly,
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Estimator::Diskf => "diskf",
            Estimator::Oracle => "oracle",
            Estimator::LocalOnly => "local_only",
        })
    }
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "diskf" => Ok(Estimator::Diskf),
            "oracle" | "centralized" => Ok(Estimator::Oracle),
            "local_only" | "local-only" | "none" => Ok(Estimator::LocalOnly),
            other => Err(Error::Config(format!("unknown estimator {other:?}"))),
        }
    }
}

/// Topology shorthand used on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TopologyChoice {
    AllToAll,
    Ring,
    None,
    Range,
}

impl FromStr for TopologyChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all_to_all" | "all-to-all" => Ok(TopologyChoice::AllToAll),
            "ring" | "1-hop" | "one_hop" => Ok(TopologyChoice::Ring),
            "none" => Ok(TopologyChoice::None),
            "range" | "range_based" | "dynamic" => Ok(TopologyChoice::Range),
            other => Err(Error::Config(format!("unknown topology {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub omega: f64,
    pub theta0: f64,
    /// Rows of `G`.
    pub input_matrix: Vec<Vec<f64>>,
    /// Rows of `Q`.
    pub process_noise: Vec<Vec<f64>>,
    pub x0: Vec<f64>,
    /// Initial covariance scale: `P₀ = p0 · I`.
    pub p0: f64,
    /// `(step, value)` pairs of the piecewise-constant input.
    pub input: Vec<(usize, Vec<f64>)>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            omega: DEFAULT_OMEGA,
            theta0: DEFAULT_THETA0,
            input_matrix: vec![vec![1.0], vec![1.0]],
            process_noise: vec![vec![0.2, 0.0], vec![0.0, 0.2]],
            x0: DEFAULT_X0.to_vec(),
            p0: DEFAULT_P0,
            input: vec![(10, vec![10.0])],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub id: AgentId,
    /// Rows of `H`.
    pub h: Vec<Vec<f64>>,
    /// Rows of `R`.
    pub r: Vec<Vec<f64>>,
    pub visibility: Visibility,
    pub trajectory: Trajectory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSettings {
    pub epsilon: f64,
    pub window: usize,
    pub time_window: bool,
    pub compensation: bool,
    pub input_fusion: bool,
}

impl Default for EstimatorSettings {
    fn default() -> Self {
        Self {
            epsilon: DEFAULT_EPSILON,
            window: DEFAULT_WINDOW,
            time_window: true,
            compensation: true,
            input_fusion: true,
        }
    }
}

impl EstimatorSettings {
    pub fn node_config(&self) -> NodeConfig {
        NodeConfig {
            epsilon: self.epsilon,
            time_window: self.time_window.then_some(self.window),
            compensation: self.compensation,
            input_fusion: self.input_fusion,
        }
    }
}

/// Everything needed to reproduce a batch of runs. Serializes to TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub horizon: usize,
    pub seeds: Vec<u64>,
    pub model: ModelConfig,
    pub settings: EstimatorSettings,
    pub topology: TopologySpec,
    pub agents: Vec<AgentConfig>,
}

fn row(h: [f64; 2]) -> Vec<Vec<f64>> {
    vec![h.to_vec()]
}

const H_X: [f64; 2] = [1.0, 0.0];
const H_Y: [f64; 2] = [0.0, 1.0];
const QUADRANTS: [Quadrant; 4] = [Quadrant::Q1, Quadrant::Q2, Quadrant::Q3, Quadrant::Q4];

fn static_agents(visibility_by_pose: bool) -> Vec<AgentConfig> {
    let corners = [
        [STATIC_OFFSET, STATIC_OFFSET],
        [-STATIC_OFFSET, STATIC_OFFSET],
        [-STATIC_OFFSET, -STATIC_OFFSET],
        [STATIC_OFFSET, -STATIC_OFFSET],
    ];
    (0..4)
        .map(|i| AgentConfig {
            id: AgentId(i as u32 + 1),
            // Agents 1 and 3 see x, 2 and 4 see y.
            h: row(if i % 2 == 0 { H_X } else { H_Y }),
            r: vec![vec![2.0]],
            visibility: if visibility_by_pose {
                Visibility::SameQuadrant
            } else {
                Visibility::Quadrant(QUADRANTS[i])
            },
            trajectory: Trajectory::fixed(corners[i][0], corners[i][1]),
        })
        .collect()
}

fn mobile_agents() -> Vec<AgentConfig> {
    let loops: [(Vec<[f64; 2]>, f64, [f64; 2]); 5] = [
        (
            vec![
                [-200.0, 200.0],
                [200.0, 200.0],
                [200.0, -200.0],
                [-200.0, -200.0],
            ],
            8.0,
            H_X,
        ),
        (vec![[-250.0, 10.0], [250.0, 10.0]], 5.0, H_Y),
        (vec![[10.0, -250.0], [10.0, 250.0]], 5.0, H_X),
        (
            vec![[0.0, 200.0], [200.0, 0.0], [0.0, -200.0], [-200.0, 0.0]],
            6.0,
            H_Y,
        ),
        (
            vec![[-60.0, -60.0], [60.0, -60.0], [60.0, 60.0], [-60.0, 60.0]],
            3.0,
            H_X,
        ),
    ];
    loops
        .into_iter()
        .enumerate()
        .map(|(i, (points, speed, h))| AgentConfig {
            id: AgentId(i as u32 + 5),
            h: row(h),
            r: vec![vec![2.0]],
            visibility: Visibility::SameQuadrant,
            trajectory: Trajectory::Waypoints { points, speed },
        })
        .collect()
}

impl ScenarioConfig {
    pub fn preset(kind: ScenarioKind) -> Self {
        match kind {
            ScenarioKind::Stationary4Agent => {
                let agents = static_agents(false);
                let ids: Vec<AgentId> = agents.iter().map(|a| a.id).collect();
                Self {
                    name: "stationary_4agent".into(),
                    horizon: DEFAULT_HORIZON,
                    seeds: (0..20).collect(),
                    model: ModelConfig::default(),
                    settings: EstimatorSettings::default(),
                    topology: TopologySpec::ring(&ids),
                    agents,
                }
            }
            ScenarioKind::Dynamic9Agent => {
                let mut agents = static_agents(true);
                agents.extend(mobile_agents());
                Self {
                    name: "dynamic_9agent".into(),
                    horizon: DEFAULT_HORIZON,
                    seeds: (0..20).collect(),
                    model: ModelConfig {
                        p0: DYNAMIC_P0,
                        ..ModelConfig::default()
                    },
                    settings: EstimatorSettings::default(),
                    topology: TopologySpec::RangeBased {
                        radius: DEFAULT_RADIUS,
                        rule: RangeRule::Intersect,
                    },
                    agents,
                }
            }
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn agent_ids(&self) -> Vec<AgentId> {
        self.agents.iter().map(|a| a.id).collect()
    }

    /// Replaces the topology; `radius` is only used by [`TopologyChoice::Range`].
    pub fn set_topology(&mut self, choice: TopologyChoice, radius: f64) {
        self.topology = match choice {
            TopologyChoice::AllToAll => TopologySpec::AllToAll,
            TopologyChoice::Ring => TopologySpec::ring(&self.agent_ids()),
            TopologyChoice::None => TopologySpec::isolated(),
            TopologyChoice::Range => {
                let rule = match &self.topology {
                    TopologySpec::RangeBased { rule, .. } => *rule,
                    _ => RangeRule::default(),
                };
                TopologySpec::RangeBased { radius, rule }
            }
        };
    }

    /// Short label used in output files.
    pub fn topology_label(&self) -> String {
        match &self.topology {
            TopologySpec::AllToAll => "all_to_all".into(),
            TopologySpec::StaticAdjacency { edges } if edges.is_empty() => "none".into(),
            TopologySpec::StaticAdjacency { edges } if *edges == ring_edges(&self.agent_ids()) => {
                "ring".into()
            }
            TopologySpec::StaticAdjacency { .. } => "static".into(),
            TopologySpec::RangeBased { .. } => "range".into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("seed list is empty".into()));
        }
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be positive".into()));
        }
        if self.agents.is_empty() {
            return Err(Error::Config("no agents".into()));
        }
        let ids: BTreeSet<AgentId> = self.agents.iter().map(|a| a.id).collect();
        if ids.len() != self.agents.len() {
            return Err(Error::Config("duplicate agent id".into()));
        }
        if let TopologySpec::StaticAdjacency { edges } = &self.topology {
            for (a, b) in edges {
                if !ids.contains(a) || !ids.contains(b) {
                    return Err(Error::Config(format!(
                        "edge ({a}, {b}) names an unknown agent"
                    )));
                }
            }
        }
        if let TopologySpec::RangeBased { radius, .. } = &self.topology {
            if !radius.is_finite() || *radius < 0.0 {
                return Err(Error::Config("radius must be finite and >= 0".into()));
            }
        }
        if !self.settings.epsilon.is_finite() || self.settings.epsilon < 0.0 {
            return Err(Error::Config("epsilon must be finite and >= 0".into()));
        }
        if self.settings.window == 0 {
            return Err(Error::Config("time window must be positive".into()));
        }
        if !self.model.p0.is_finite() || self.model.p0 <= 0.0 {
            return Err(Error::Config("p0 must be positive".into()));
        }
        for a in &self.agents {
            a.trajectory.validate()?;
        }
        let system = self.system_model()?;
        if system.state_dim() != 2 || system.input_dim() != 1 {
            return Err(Error::Config(
                "scenarios track a planar target with a scalar input".into(),
            ));
        }
        self.input_signal()?;
        self.observation_models()?;
        Ok(())
    }

    pub fn system_model(&self) -> Result<SystemModel> {
        SystemModel::new(
            Dynamics::Rotation {
                omega: self.model.omega,
                theta0: self.model.theta0,
            },
            matrix_from_rows(&self.model.input_matrix, "input_matrix")?,
            matrix_from_rows(&self.model.process_noise, "process_noise")?,
        )
    }

    pub fn input_signal(&self) -> Result<InputSignal> {
        let m = self.model.input_matrix.first().map_or(0, Vec::len);
        InputSignal::new(
            m,
            self.model
                .input
                .iter()
                .map(|(k, v)| (*k, Vector::from_column_slice(v)))
                .collect(),
        )
    }

    pub fn x0(&self) -> Result<Vector> {
        if self.model.x0.len() != 2 {
            return Err(Error::Config("x0 must have two components".into()));
        }
        Ok(Vector::from_column_slice(&self.model.x0))
    }

    pub fn p0(&self) -> Matrix {
        Matrix::identity(2, 2) * self.model.p0
    }

    pub fn observation_models(&self) -> Result<BTreeMap<AgentId, ObservationModel>> {
        self.agents
            .iter()
            .map(|a| {
                let obs = ObservationModel::new(
                    a.id,
                    matrix_from_rows(&a.h, "h")?,
                    matrix_from_rows(&a.r, "r")?,
                    a.visibility,
                )?;
                if obs.h().ncols() != 2 {
                    return Err(Error::Config(format!(
                        "agent {}: H must have two columns",
                        a.id
                    )));
                }
                Ok((a.id, obs))
            })
            .collect()
    }

    pub fn trajectories(&self) -> BTreeMap<AgentId, Trajectory> {
        self.agents
            .iter()
            .map(|a| (a.id, a.trajectory.clone()))
            .collect()
    }
}

fn ring_edges(ids: &[AgentId]) -> Vec<(AgentId, AgentId)> {
    match TopologySpec::ring(ids) {
        TopologySpec::StaticAdjacency { edges } => edges,
        _ => unreachable!(),
    }
}

fn matrix_from_rows(rows: &[Vec<f64>], what: &str) -> Result<Matrix> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if nrows == 0 || ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Config(format!(
            "{what}: rows must be non-empty and equal length"
        )));
    }
    Ok(Matrix::from_row_iterator(
        nrows,
        ncols,
        rows.iter().flatten().copied(),
    ))
}
