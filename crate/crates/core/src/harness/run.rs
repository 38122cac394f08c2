use std::collections::BTreeMap;

use rayon::prelude::*;

use super::config::{Estimator, ScenarioConfig};
use super::metrics::{
    average_summaries, compute_metrics, AgentMetrics, RunMetrics, SummaryMetrics,
};
use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::model::{observe, simulate_truth, GroundTruth, NoiseSource, ObservationModel};
use crate::network::{neighborhoods, ExchangeBarrier, NeighborSet, TopologySpec};
use crate::node::DiskfNode;
use crate::oracle::{centralized_step, stack_observations, CentralizedFilterState};
use crate::AgentId;

/// One agent at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub agent: AgentId,
    pub truth_x: Vector,
    /// The input that drove the state into this step.
    pub truth_d: Vector,
    pub est_x: Vector,
    /// Fused input estimate, when one exists at this step.
    pub est_d: Option<Vector>,
    pub observed: bool,
    /// The agent's own input estimate, when valid.
    pub local_d: Option<Vector>,
    pub n_neighbors: usize,
    pub compensation_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedRun {
    pub seed: u64,
    pub truth: GroundTruth,
    /// Ordered by step, then agent id.
    pub records: Vec<StepRecord>,
    pub metrics: RunMetrics,
    pub exchange_rounds: usize,
}

impl SeedRun {
    pub fn agent_records(&self, agent: AgentId) -> impl Iterator<Item = &StepRecord> {
        self.records.iter().filter(move |r| r.agent == agent)
    }
}

#[derive(Debug, Clone)]
pub struct ScenarioResult {
    pub config: ScenarioConfig,
    pub estimator: Estimator,
    pub runs: Vec<std::result::Result<SeedRun, (u64, Error)>>,
    /// Mean over successful seeds of each seed's agent-averaged metrics.
    pub aggregate: SummaryMetrics,
}

impl ScenarioResult {
    pub fn run_id(&self) -> String {
        format!(
            "{}/{}/{}",
            self.config.name,
            self.estimator,
            self.config.topology_label()
        )
    }

    pub fn successful(&self) -> impl Iterator<Item = &SeedRun> {
        self.runs.iter().filter_map(|r| r.as_ref().ok())
    }

    pub fn failures(&self) -> impl Iterator<Item = &(u64, Error)> {
        self.runs.iter().filter_map(|r| r.as_ref().err())
    }
}

/// Runs every seed of `config` (in parallel) and aggregates.
///
/// A seed that fails is reported in `runs` and left out of the aggregate.
pub fn run_scenario(config: &ScenarioConfig, estimator: Estimator) -> Result<ScenarioResult> {
    config.validate()?;
    let runs: Vec<_> = config
        .seeds
        .par_iter()
        .map(|&seed| {
            run_seed(config, estimator, seed).map_err(|e| {
                log::error!("seed {seed}: {e}");
                (seed, e)
            })
        })
        .collect();
    let summaries: Vec<SummaryMetrics> = runs
        .iter()
        .filter_map(|r| r.as_ref().ok())
        .map(|r| r.metrics.mean)
        .collect();
    let aggregate = average_summaries(&summaries);
    Ok(ScenarioResult {
        config: config.clone(),
        estimator,
        runs,
        aggregate,
    })
}

/// One seed: truth, measurements and the chosen estimator, barrier-stepped.
pub fn run_seed(config: &ScenarioConfig, estimator: Estimator, seed: u64) -> Result<SeedRun> {
    let model = config.system_model()?;
    let input = config.input_signal()?;
    let observations = config.observation_models()?;
    let trajectories = config.trajectories();
    let x0 = config.x0()?;
    let p0 = config.p0();
    let noise = NoiseSource::new(seed);
    let truth = simulate_truth(&model, &input, &x0, config.horizon, &mut noise.process())?;
    let mut meas_streams: BTreeMap<AgentId, _> = observations
        .keys()
        .map(|&id| (id, noise.measurement(id)))
        .collect();

    let topology = match estimator {
        Estimator::LocalOnly => TopologySpec::isolated(),
        _ => config.topology.clone(),
    };

    let mut engine = match estimator {
        Estimator::Diskf | Estimator::LocalOnly => Engine::Diskf(
            observations
                .values()
                .map(|obs| {
                    let node = DiskfNode::new(
                        obs.clone(),
                        config.settings.node_config(),
                        x0.clone(),
                        p0.clone(),
                        model.input_dim(),
                    );
                    (obs.agent, node)
                })
                .collect(),
        ),
        Estimator::Oracle => Engine::Oracle(
            observations
                .keys()
                .map(|&id| {
                    (
                        id,
                        CentralizedFilterState::new(x0.clone(), p0.clone(), model.input_dim()),
                    )
                })
                .collect(),
        ),
    };

    let mut barrier = ExchangeBarrier::new();
    let mut records = Vec::with_capacity(config.horizon * observations.len());
    for k in 1..=config.horizon {
        let truth_x = &truth.states[k];
        let measurements: BTreeMap<AgentId, Option<Vector>> = observations
            .iter()
            .map(|(id, obs)| {
                let pose = trajectories[id].position(k);
                let stream = meas_streams.get_mut(id).unwrap();
                (*id, observe(truth_x, obs, &pose, k, stream))
            })
            .collect();
        let nbrs = neighborhoods(&topology, &trajectories, k);
        let step = StepContext {
            k,
            truth_x,
            truth_d: truth.input_into(k),
            measurements: &measurements,
            nbrs: &nbrs,
        };
        match &mut engine {
            Engine::Diskf(nodes) => diskf_step(nodes, &model, &step, &mut barrier, &mut records)?,
            Engine::Oracle(states) => oracle_step(
                states,
                &observations,
                &model,
                &step,
                &mut barrier,
                &mut records,
            )?,
        }
    }

    let metrics = seed_metrics(&records, &truth)?;
    Ok(SeedRun {
        seed,
        truth,
        records,
        metrics,
        exchange_rounds: barrier.rounds(),
    })
}

enum Engine {
    Diskf(BTreeMap<AgentId, DiskfNode>),
    Oracle(BTreeMap<AgentId, CentralizedFilterState>),
}

struct StepContext<'a> {
    k: usize,
    truth_x: &'a Vector,
    truth_d: &'a Vector,
    measurements: &'a BTreeMap<AgentId, Option<Vector>>,
    nbrs: &'a BTreeMap<AgentId, NeighborSet>,
}

fn diskf_step(
    nodes: &mut BTreeMap<AgentId, DiskfNode>,
    model: &crate::model::SystemModel,
    step: &StepContext<'_>,
    barrier: &mut ExchangeBarrier,
    records: &mut Vec<StepRecord>,
) -> Result<()> {
    let k = step.k;
    let mut outgoing = BTreeMap::new();
    for (id, node) in nodes.iter_mut() {
        let packet = node.local_stage(model, k, step.measurements[id].as_ref())?;
        outgoing.insert(*id, packet);
    }
    let received = barrier.exchange(k, &outgoing, step.nbrs)?;
    for (id, node) in nodes.iter_mut() {
        let report = node.fuse_stage(model, k, &received[id])?;
        records.push(StepRecord {
            step: k,
            agent: *id,
            truth_x: step.truth_x.clone(),
            truth_d: step.truth_d.clone(),
            est_x: report.belief.x.clone(),
            est_d: report
                .fused_input
                .any_valid
                .then(|| report.fused_input.d.clone()),
            observed: report.had_observation,
            local_d: report.own_input.valid.then(|| report.own_input.d.clone()),
            n_neighbors: report.n_neighbors,
            compensation_norm: report.compensation.norm(),
        });
    }
    Ok(())
}

/// Each node runs a centralized filter over the raw measurements and
/// models of its whole neighborhood.
fn oracle_step(
    states: &mut BTreeMap<AgentId, CentralizedFilterState>,
    observations: &BTreeMap<AgentId, ObservationModel>,
    model: &crate::model::SystemModel,
    step: &StepContext<'_>,
    barrier: &mut ExchangeBarrier,
    records: &mut Vec<StepRecord>,
) -> Result<()> {
    // The oracle shares raw data rather than packets but still counts as one round.
    barrier.exchange(step.k, &BTreeMap::new(), &BTreeMap::new())?;
    for (id, state) in states.iter_mut() {
        let set = &step.nbrs[id];
        let visible: BTreeMap<AgentId, (Vector, &ObservationModel)> = set
            .members
            .iter()
            .filter_map(|j| {
                step.measurements[j]
                    .as_ref()
                    .map(|y| (*j, (y.clone(), &observations[j])))
            })
            .collect();
        let stacked = stack_observations(&visible, model.state_dim());
        *state = centralized_step(state, &stacked, model, step.k)?;
        records.push(StepRecord {
            step: step.k,
            agent: *id,
            truth_x: step.truth_x.clone(),
            truth_d: step.truth_d.clone(),
            est_x: state.x.clone(),
            est_d: state.input_valid.then(|| state.d.clone()),
            observed: step.measurements[id].is_some(),
            local_d: state.input_valid.then(|| state.d.clone()),
            n_neighbors: set.len(),
            compensation_norm: 0.0,
        });
    }
    Ok(())
}

fn seed_metrics(records: &[StepRecord], truth: &GroundTruth) -> Result<RunMetrics> {
    let mut by_agent: BTreeMap<AgentId, Vec<&StepRecord>> = BTreeMap::new();
    for r in records {
        by_agent.entry(r.agent).or_default().push(r);
    }
    let mut per_agent = BTreeMap::new();
    for (id, rows) in by_agent {
        let est: Vec<Vector> = rows.iter().map(|r| r.est_x.clone()).collect();
        let tru: Vec<Vector> = rows.iter().map(|r| truth.states[r.step].clone()).collect();
        let state = compute_metrics(&est, &tru)?;
        let (est_d, tru_d): (Vec<Vector>, Vec<Vector>) = rows
            .iter()
            .filter_map(|r| r.est_d.clone().map(|d| (d, r.truth_d.clone())))
            .unzip();
        let input = if est_d.is_empty() {
            None
        } else {
            Some(compute_metrics(&est_d, &tru_d)?)
        };
        per_agent.insert(id, AgentMetrics { state, input });
    }
    Ok(RunMetrics::from_agents(per_agent))
}

/// One [`run_scenario`] per radius, keeping everything else fixed.
pub fn sweep_radius(
    config: &ScenarioConfig,
    radii: &[f64],
    estimator: Estimator,
) -> Result<Vec<(f64, ScenarioResult)>> {
    let TopologySpec::RangeBased { rule, .. } = config.topology else {
        return Err(Error::Config(
            "radius sweep needs a range-based topology".into(),
        ));
    };
    radii
        .iter()
        .map(|&radius| {
            let mut c = config.clone();
            c.topology = TopologySpec::RangeBased { radius, rule };
            run_scenario(&c, estimator).map(|r| (radius, r))
        })
        .collect()
}
