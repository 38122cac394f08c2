//! Reference estimators.
//!
//! [`centralized_step`] is a recursive filter with input estimation that sees
//! every stacked measurement and system matrix directly. It uses the
//! classical gain form of the update, not the information form used by the
//! nodes, so agreement between the two is a real cross-check.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::estimator::{predict, rank_condition, LocalBelief};
use crate::linalg::{spd_inverse, symmetrize, Matrix, Vector};
use crate::model::{ObservationModel, SystemModel};
use crate::node::{DiskfNode, NodeConfig, NodeStepReport};
use crate::AgentId;

#[derive(Debug, Clone, PartialEq)]
pub struct CentralizedFilterState {
    pub x: Vector,
    pub p: Matrix,
    pub d: Vector,
    pub s: Matrix,
    /// Whether `d` was estimated at the last step.
    pub input_valid: bool,
}

impl CentralizedFilterState {
    pub fn new(x: Vector, p: Matrix, m: usize) -> Self {
        Self {
            x,
            p,
            d: Vector::zeros(m),
            s: Matrix::zeros(m, m),
            input_valid: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StackedObservation {
    pub h: Matrix,
    pub r: Matrix,
    pub y: Vector,
    pub contributors: Vec<AgentId>,
}

impl StackedObservation {
    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

/// Row-stacks `H` and `y` in agent-id order and puts each `R` on the block diagonal.
pub fn stack_observations(
    observations: &BTreeMap<AgentId, (Vector, &ObservationModel)>,
    n: usize,
) -> StackedObservation {
    let total: usize = observations.values().map(|(y, _)| y.len()).sum();
    let mut h = Matrix::zeros(total, n);
    let mut r = Matrix::zeros(total, total);
    let mut y = Vector::zeros(total);
    let mut row = 0;
    for (y_j, obs) in observations.values() {
        let p = y_j.len();
        h.view_mut((row, 0), (p, n)).copy_from(obs.h());
        r.view_mut((row, row), (p, p)).copy_from(obs.r());
        y.rows_mut(row, p).copy_from(y_j);
        row += p;
    }
    StackedObservation {
        h,
        r,
        y,
        contributors: observations.keys().copied().collect(),
    }
}

/// Predict, estimate the input from the stacked innovation, inject it, and
/// update with every stacked measurement.
pub fn centralized_step(
    state: &CentralizedFilterState,
    stacked: &StackedObservation,
    model: &SystemModel,
    k: usize,
) -> Result<CentralizedFilterState> {
    let n = model.state_dim();
    let m = model.input_dim();
    let (x_pred, p_pred) = predict(
        &LocalBelief::new(state.x.clone(), state.p.clone()),
        model,
        k,
    );
    if stacked.is_empty() {
        return Ok(CentralizedFilterState {
            x: x_pred,
            p: p_pred,
            d: Vector::zeros(m),
            s: Matrix::zeros(m, m),
            input_valid: false,
        });
    }
    if stacked.h.ncols() != n {
        return Err(Error::Dimension {
            context: "stacked observation matrix",
            expected: n,
            actual: stacked.h.ncols(),
        });
    }
    let h = &stacked.h;
    let g = model.input_matrix(k - 1);
    let innovation_cov = h * &p_pred * h.transpose() + &stacked.r;
    let innovation_inv = spd_inverse(&innovation_cov, "stacked innovation covariance")?;

    let (d, s, input_valid) = if rank_condition(h, g) {
        let hg = h * g;
        let s = spd_inverse(
            &(hg.transpose() * &innovation_inv * &hg),
            "stacked input information",
        )?;
        let d = &s * hg.transpose() * &innovation_inv * (&stacked.y - h * &x_pred);
        (d, s, true)
    } else {
        (Vector::zeros(m), Matrix::zeros(m, m), false)
    };

    let x_star = &x_pred + g * &d;
    let gain = &p_pred * h.transpose() * &innovation_inv;
    let x = &x_star + &gain * (&stacked.y - h * &x_star);
    // Joseph form.
    let i_kh = Matrix::identity(n, n) - &gain * h;
    let p =
        symmetrize(&(&i_kh * &p_pred * i_kh.transpose() + &gain * &stacked.r * gain.transpose()));
    Ok(CentralizedFilterState {
        x,
        p,
        d,
        s,
        input_valid,
    })
}

/// No-communication baseline: a DISKF node whose neighborhood is only itself.
pub fn local_only_filter(
    obs: ObservationModel,
    config: NodeConfig,
    model: &SystemModel,
    x0: Vector,
    p0: Matrix,
    observations: &[Option<Vector>],
) -> Result<Vec<NodeStepReport>> {
    let mut node = DiskfNode::new(obs, config, x0, p0, model.input_dim());
    observations
        .iter()
        .enumerate()
        .map(|(i, y)| {
            let k = i + 1;
            let packet = node.local_stage(model, k, y.as_ref())?;
            node.fuse_stage(model, k, std::slice::from_ref(&packet))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{rotation_dynamics, Visibility};

    fn obs(id: u32, row: [f64; 2], r: f64) -> ObservationModel {
        ObservationModel::new(
            AgentId(id),
            Matrix::from_row_slice(1, 2, &row),
            Matrix::from_element(1, 1, r),
            Visibility::Always,
        )
        .unwrap()
    }

    #[test]
    fn stacking_single_observer() {
        let o = obs(1, [1.0, 0.0], 2.0);
        let map = BTreeMap::from([(AgentId(1), (Vector::from_element(1, 3.0), &o))]);
        let s = stack_observations(&map, 2);
        assert_eq!(s.h, Matrix::from_row_slice(1, 2, &[1.0, 0.0]));
        assert_eq!(s.y, Vector::from_element(1, 3.0));
        assert_eq!(s.r, Matrix::from_element(1, 1, 2.0));
    }

    #[test]
    fn stacking_two_observers_gives_identity() {
        let a = obs(2, [0.0, 1.0], 1.0);
        let b = obs(1, [1.0, 0.0], 3.0);
        let map = BTreeMap::from([
            (AgentId(2), (Vector::from_element(1, 7.0), &a)),
            (AgentId(1), (Vector::from_element(1, 5.0), &b)),
        ]);
        let s = stack_observations(&map, 2);
        assert_eq!(s.h, Matrix::identity(2, 2));
        assert_eq!(s.y, Vector::from_column_slice(&[5.0, 7.0]));
        assert_eq!(
            s.r,
            Matrix::from_diagonal(&Vector::from_column_slice(&[3.0, 1.0]))
        );
        assert_eq!(s.contributors, vec![AgentId(1), AgentId(2)]);
    }

    #[test]
    fn stacking_is_additive_in_information() {
        let a = obs(1, [0.3, 1.2], 1.5);
        let b = obs(2, [-0.7, 0.4], 0.6);
        let c = obs(3, [2.0, 1.0], 4.0);
        let ys = [1.5, -2.0, 9.0];
        let map: BTreeMap<AgentId, (Vector, &ObservationModel)> = [&a, &b, &c]
            .iter()
            .zip(ys)
            .map(|(o, y)| (o.agent, (Vector::from_element(1, y), *o)))
            .collect();
        let s = stack_observations(&map, 2);
        let r_inv = s.r.clone().try_inverse().unwrap();
        let info = s.h.transpose() * &r_inv * &s.h;
        let info_y = s.h.transpose() * &r_inv * &s.y;
        let mut sum_info = Matrix::zeros(2, 2);
        let mut sum_y = Vector::zeros(2);
        for (y, o) in map.values() {
            let ri = o.r().clone().try_inverse().unwrap();
            sum_info += o.h().transpose() * &ri * o.h();
            sum_y += o.h().transpose() * &ri * y;
        }
        assert!((info - sum_info).abs().max() <= 1e-12);
        assert!((info_y - sum_y).abs().max() <= 1e-12);
    }

    #[test]
    fn empty_stack_is_pure_prediction() {
        let model = rotation_dynamics(0.01, 0.3);
        let s = stack_observations(&BTreeMap::new(), 2);
        assert!(s.is_empty());
        let state = CentralizedFilterState::new(
            Vector::from_column_slice(&[4.0, 1.0]),
            Matrix::identity(2, 2),
            1,
        );
        let next = centralized_step(&state, &s, &model, 2).unwrap();
        let (x, p) = predict(
            &LocalBelief::new(state.x.clone(), state.p.clone()),
            &model,
            2,
        );
        assert_eq!(next.x, x);
        assert_eq!(next.p, p);
        assert!(!next.input_valid);
    }

    #[test]
    fn single_source_matches_solo_node() {
        let model = rotation_dynamics(1e-3, 0.15)
            .with_process_noise(Matrix::from_diagonal_element(2, 2, 0.2))
            .unwrap();
        let o = obs(1, [1.0, 0.0], 2.0);
        let x0 = Vector::from_column_slice(&[100.0, 0.0]);
        let p0 = Matrix::identity(2, 2) * 10.0;
        let ys: Vec<Option<Vector>> = (0..30)
            .map(|k| {
                Some(Vector::from_element(
                    1,
                    100.0 * (0.15 * k as f64).cos() + k as f64,
                ))
            })
            .collect();
        let config = NodeConfig {
            time_window: None,
            compensation: false,
            ..NodeConfig::default()
        };
        let solo =
            local_only_filter(o.clone(), config, &model, x0.clone(), p0.clone(), &ys).unwrap();
        let mut state = CentralizedFilterState::new(x0, p0, 1);
        for (i, y) in ys.iter().enumerate() {
            let map = BTreeMap::from([(AgentId(1), (y.clone().unwrap(), &o))]);
            state = centralized_step(&state, &stack_observations(&map, 2), &model, i + 1).unwrap();
            let r = &solo[i];
            assert!(
                (&state.x - &r.belief.x).abs().max() < 1e-10,
                "step {}",
                i + 1
            );
            assert!((&state.p - &r.belief.p).abs().max() < 1e-10);
            assert!((state.d[0] - r.fused_input.d[0]).abs() < 1e-10);
        }
    }

    #[test]
    fn silent_agent_rolls_out_prediction() {
        let model = rotation_dynamics(0.0, 0.2);
        let o = obs(1, [1.0, 0.0], 2.0);
        let x0 = Vector::from_column_slice(&[10.0, 0.0]);
        let p0 = Matrix::identity(2, 2);
        let ys = vec![None; 12];
        let out = local_only_filter(
            o,
            NodeConfig::default(),
            &model,
            x0.clone(),
            p0.clone(),
            &ys,
        )
        .unwrap();
        let mut belief = LocalBelief::new(x0, p0);
        for (i, r) in out.iter().enumerate() {
            let (x, p) = predict(&belief, &model, i + 1);
            belief = LocalBelief::new(x, p);
            assert!((&r.belief.x - &belief.x).abs().max() < 1e-12);
            assert!(!r.fused_input.any_valid);
        }
    }
}
