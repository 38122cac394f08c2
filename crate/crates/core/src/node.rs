//! One DISKF node: local estimation, a packet out, fusion of what came back.

use crate::error::Result;
use crate::estimator::{
    advance_time_window, local_step, InputEstimate, LocalBelief, LocalStepOutput, TimeWindow,
};
use crate::fusion::{compensation, fuse_available_inputs, fuse_states, ExchangePacket, FusedInput};
use crate::linalg::{Matrix, Vector};
use crate::model::{ObservationModel, SystemModel};
use crate::AgentId;

pub const DEFAULT_EPSILON: f64 = 0.05;
pub const DEFAULT_WINDOW: usize = 5;

/// Switches for the ablation axes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeConfig {
    pub epsilon: f64,
    /// Observation window length; `None` disables gating.
    pub time_window: Option<usize>,
    pub compensation: bool,
    /// When false a node uses only its own input estimate.
    pub input_fusion: bool,
}

impl Default for NodeConfig {
    fn default() -> Self {
        Self {
            epsilon: DEFAULT_EPSILON,
            time_window: Some(DEFAULT_WINDOW),
            compensation: true,
            input_fusion: true,
        }
    }
}

/// What a node reports after fusing a step.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeStepReport {
    pub belief: LocalBelief,
    pub fused_input: FusedInput,
    /// This node's own input estimate before fusion.
    pub own_input: InputEstimate,
    pub had_observation: bool,
    pub compensation: Vector,
    pub n_neighbors: usize,
}

#[derive(Debug, Clone)]
pub struct DiskfNode {
    pub id: AgentId,
    obs: ObservationModel,
    config: NodeConfig,
    belief: LocalBelief,
    window: TimeWindow,
    previous_fused: FusedInput,
    pending: Option<(usize, LocalStepOutput, ExchangePacket)>,
}

impl DiskfNode {
    pub fn new(
        obs: ObservationModel,
        config: NodeConfig,
        x0: Vector,
        p0: Matrix,
        input_dim: usize,
    ) -> Self {
        let window = config
            .time_window
            .map(TimeWindow::new)
            .unwrap_or_else(TimeWindow::disabled);
        Self {
            id: obs.agent,
            obs,
            config,
            belief: LocalBelief::new(x0, p0),
            window,
            previous_fused: FusedInput::none(input_dim),
            pending: None,
        }
    }

    pub fn belief(&self) -> &LocalBelief {
        &self.belief
    }

    pub fn window(&self) -> &TimeWindow {
        &self.window
    }

    pub fn observation_model(&self) -> &ObservationModel {
        &self.obs
    }

    /// Individual estimation for step `k`; returns the packet to send.
    pub fn local_stage(
        &mut self,
        model: &SystemModel,
        k: usize,
        y: Option<&Vector>,
    ) -> Result<ExchangePacket> {
        let local = local_step(&self.belief, model, &self.obs, y, &self.window, k)?;
        let packet = ExchangePacket::from_local(
            self.id,
            &local,
            model.input_matrix(k - 1),
            &self.previous_fused,
        );
        self.pending = Some((k, local, packet.clone()));
        Ok(packet)
    }

    /// Input fusion, state fusion and compensation over the packets received
    /// at step `k` (own packet included).
    pub fn fuse_stage(
        &mut self,
        model: &SystemModel,
        k: usize,
        received: &[ExchangePacket],
    ) -> Result<NodeStepReport> {
        let (step, local, own_packet) = self
            .pending
            .take()
            .expect("fuse_stage called without a preceding local_stage");
        assert_eq!(step, k, "fuse_stage step does not match local_stage step");

        let m = model.input_dim();
        let fused_input = if self.config.input_fusion {
            fuse_available_inputs(received, m)?
        } else {
            fuse_available_inputs(std::slice::from_ref(&own_packet), m)?
        };

        let fused = fuse_states(self.id, received, &local, &fused_input, model, k)?;

        let adjustment = if self.config.compensation {
            let others: Vec<Vector> = received
                .iter()
                .filter(|p| p.sender != self.id)
                .map(|p| p.x_pred_injected.clone())
                .collect();
            compensation(
                &fused.p,
                &own_packet.x_pred_injected,
                &others,
                self.config.epsilon,
            )
        } else {
            Vector::zeros(fused.x.len())
        };
        let belief = LocalBelief::new(&fused.x + &adjustment, fused.p);

        let neighbor_input_valid = self.config.input_fusion
            && received
                .iter()
                .any(|p| p.sender != self.id && p.input.valid);
        self.window = advance_time_window(self.window, local.had_observation, neighbor_input_valid);
        self.belief = belief.clone();
        self.previous_fused = fused_input.clone();

        Ok(NodeStepReport {
            belief,
            fused_input,
            own_input: local.input.clone(),
            had_observation: local.had_observation,
            compensation: adjustment,
            n_neighbors: received.len(),
        })
    }
}
