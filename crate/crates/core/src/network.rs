//! Communication topology and the once-per-step exchange.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::ExchangePacket;
use crate::AgentId;

/// How a range-based link is decided for per-agent radius `r`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RangeRule {
    /// Link iff the two discs of radius `r` touch: `‖p_i − p_j‖ ≤ 2r`.
    #[default]
    Intersect,
    /// Link iff each agent is inside the other's disc: `‖p_i − p_j‖ ≤ r`.
    WithinRadius,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TopologySpec {
    AllToAll,
    StaticAdjacency {
        edges: Vec<(AgentId, AgentId)>,
    },
    RangeBased {
        radius: f64,
        #[serde(default)]
        rule: RangeRule,
    },
}

impl TopologySpec {
    /// Undirected ring over `ids` in the given order.
    pub fn ring(ids: &[AgentId]) -> Self {
        let edges = match ids.len() {
            0 | 1 => Vec::new(),
            2 => vec![(ids[0], ids[1])],
            len => (0..len).map(|i| (ids[i], ids[(i + 1) % len])).collect(),
        };
        TopologySpec::StaticAdjacency { edges }
    }

    pub fn isolated() -> Self {
        TopologySpec::StaticAdjacency { edges: Vec::new() }
    }

    pub fn radius(&self) -> Option<f64> {
        match self {
            TopologySpec::RangeBased { radius, .. } => Some(*radius),
            _ => None,
        }
    }
}

/// Where an agent is at step `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Trajectory {
    Static {
        position: [f64; 2],
    },
    /// Closed piecewise-linear loop traversed at `speed` distance units per
    /// step, starting at the first waypoint.
    Waypoints {
        points: Vec<[f64; 2]>,
        speed: f64,
    },
}

impl Trajectory {
    pub fn fixed(x: f64, y: f64) -> Self {
        Trajectory::Static { position: [x, y] }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Trajectory::Static { position } => {
                if position.iter().all(|v| v.is_finite()) {
                    Ok(())
                } else {
                    Err(Error::Config("static position is not finite".into()))
                }
            }
            Trajectory::Waypoints { points, speed } => {
                if points.is_empty() {
                    return Err(Error::Config(
                        "waypoint loop needs at least one point".into(),
                    ));
                }
                if !speed.is_finite() || *speed < 0.0 {
                    return Err(Error::Config(
                        "waypoint speed must be finite and >= 0".into(),
                    ));
                }
                if points.iter().flatten().any(|v| !v.is_finite()) {
                    return Err(Error::Config("waypoint is not finite".into()));
                }
                Ok(())
            }
        }
    }

    pub fn position(&self, k: usize) -> Vector2<f64> {
        match self {
            Trajectory::Static { position } => Vector2::new(position[0], position[1]),
            Trajectory::Waypoints { points, speed } => {
                let pts: Vec<Vector2<f64>> =
                    points.iter().map(|p| Vector2::new(p[0], p[1])).collect();
                let segments: Vec<f64> = (0..pts.len())
                    .map(|i| (pts[(i + 1) % pts.len()] - pts[i]).norm())
                    .collect();
                let perimeter: f64 = segments.iter().sum();
                if perimeter == 0.0 {
                    return pts[0];
                }
                let mut s = (speed * k as f64) % perimeter;
                for (i, len) in segments.iter().enumerate() {
                    if s <= *len && *len > 0.0 {
                        let t = s / len;
                        return pts[i] + (pts[(i + 1) % pts.len()] - pts[i]) * t;
                    }
                    s -= len;
                }
                pts[0]
            }
        }
    }
}

/// `N_i` at step `k`; always contains `node`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborSet {
    pub node: AgentId,
    pub members: BTreeSet<AgentId>,
    pub timestep: usize,
}

impl NeighborSet {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

pub fn neighborhoods(
    topology: &TopologySpec,
    poses: &BTreeMap<AgentId, Trajectory>,
    k: usize,
) -> BTreeMap<AgentId, NeighborSet> {
    let mut members: BTreeMap<AgentId, BTreeSet<AgentId>> =
        poses.keys().map(|&id| (id, BTreeSet::from([id]))).collect();
    let mut link = |a: AgentId, b: AgentId| {
        if members.contains_key(&a) && members.contains_key(&b) {
            members.get_mut(&a).unwrap().insert(b);
            members.get_mut(&b).unwrap().insert(a);
        }
    };
    match topology {
        TopologySpec::AllToAll => {
            for &a in poses.keys() {
                for &b in poses.keys() {
                    link(a, b);
                }
            }
        }
        TopologySpec::StaticAdjacency { edges } => {
            for &(a, b) in edges {
                link(a, b);
            }
        }
        TopologySpec::RangeBased { radius, rule } => {
            let limit = match rule {
                RangeRule::Intersect => 2.0 * radius,
                RangeRule::WithinRadius => *radius,
            };
            let positions: Vec<(AgentId, Vector2<f64>)> =
                poses.iter().map(|(&id, t)| (id, t.position(k))).collect();
            // A zero range reaches nobody, even a co-located agent.
            let reach = *radius > 0.0;
            for (i, (a, pa)) in positions.iter().enumerate() {
                for (b, pb) in &positions[i + 1..] {
                    if reach && (pa - pb).norm() <= limit {
                        link(*a, *b);
                    }
                }
            }
        }
    }
    members
        .into_iter()
        .map(|(node, members)| {
            (
                node,
                NeighborSet {
                    node,
                    members,
                    timestep: k,
                },
            )
        })
        .collect()
}

/// Delivers packets once per step. A second call for the same step is an
/// error, which is how the single-round property is enforced.
#[derive(Debug, Default)]
pub struct ExchangeBarrier {
    last_step: Option<usize>,
    rounds: usize,
}

impl ExchangeBarrier {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn rounds(&self) -> usize {
        self.rounds
    }

    pub fn exchange(
        &mut self,
        k: usize,
        outgoing: &BTreeMap<AgentId, ExchangePacket>,
        nbrs: &BTreeMap<AgentId, NeighborSet>,
    ) -> Result<BTreeMap<AgentId, Vec<ExchangePacket>>> {
        if self.last_step.is_some_and(|last| k <= last) {
            return Err(Error::SecondExchange(k));
        }
        self.last_step = Some(k);
        self.rounds += 1;
        Ok(exchange(outgoing, nbrs))
    }
}

/// Node `i` receives `{packet_j : j ∈ N_i}`, in sender order.
pub fn exchange(
    outgoing: &BTreeMap<AgentId, ExchangePacket>,
    nbrs: &BTreeMap<AgentId, NeighborSet>,
) -> BTreeMap<AgentId, Vec<ExchangePacket>> {
    nbrs.iter()
        .map(|(&node, set)| {
            let received = set
                .members
                .iter()
                .filter_map(|j| outgoing.get(j).cloned())
                .collect();
            (node, received)
        })
        .collect()
}
