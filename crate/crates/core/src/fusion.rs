//! Post-exchange fusion on a node.
//!
//! Inputs are fused with fast covariance intersection (weights from inverse
//! covariance traces). States are fused by summing each neighbor's
//! information increment `P̃⁻¹x̃ − P̂⁻¹x̂` on top of the node's own
//! input-injected prediction, which reproduces a filter that saw every
//! neighbor's measurement.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::estimator::{InputEstimate, LocalBelief, LocalStepOutput};
use crate::linalg::{spd_inverse, trace, Matrix, Vector};
use crate::model::SystemModel;
use crate::AgentId;

/// The one message an agent sends per step.
#[derive(Debug, Clone, PartialEq)]
pub struct ExchangePacket {
    pub sender: AgentId,
    pub input: InputEstimate,
    pub x_pred: Vector,
    pub p_pred: Matrix,
    pub x_upd: Vector,
    pub p_upd: Matrix,
    /// Sender's prediction plus `G·d̄` using the sender's fused input from
    /// the previous step.
    pub x_pred_injected: Vector,
}

impl ExchangePacket {
    pub fn from_local(
        sender: AgentId,
        local: &LocalStepOutput,
        g: &Matrix,
        previous_fused: &FusedInput,
    ) -> Self {
        Self {
            sender,
            input: local.input.clone(),
            x_pred: local.x_pred.clone(),
            p_pred: local.p_pred.clone(),
            x_upd: local.x_upd.clone(),
            p_upd: local.p_upd.clone(),
            x_pred_injected: &local.x_pred + g * previous_fused.injection(),
        }
    }

    /// Number of `f64` fields for state dimension `n` and input dimension `m`.
    pub fn record_len(n: usize, m: usize) -> usize {
        2 + m + m * m + 3 * n + 2 * n * n
    }

    /// Flat little-endian `f64` record, matrices row-major, in the order
    /// `sender, valid, d̂[m], Ŝ[m×m], x̂[n], P̂[n×n], x̃[n], P̃[n×n], x̂*[n]`.
    /// `valid` is `1.0` or `0.0`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let n = self.x_pred.len();
        let m = self.input.d.len();
        let mut fields = Vec::with_capacity(Self::record_len(n, m));
        fields.push(self.sender.0 as f64);
        fields.push(if self.input.valid { 1.0 } else { 0.0 });
        fields.extend(self.input.d.iter());
        push_row_major(&mut fields, &self.input.s);
        fields.extend(self.x_pred.iter());
        push_row_major(&mut fields, &self.p_pred);
        fields.extend(self.x_upd.iter());
        push_row_major(&mut fields, &self.p_upd);
        fields.extend(self.x_pred_injected.iter());
        fields.iter().flat_map(|f| f.to_le_bytes()).collect()
    }

    pub fn from_bytes(bytes: &[u8], n: usize, m: usize) -> Result<Self> {
        let len = Self::record_len(n, m);
        if bytes.len() != 8 * len {
            return Err(Error::Packet(format!(
                "expected {} bytes, got {}",
                8 * len,
                bytes.len()
            )));
        }
        let fields: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let mut cursor = Fields {
            data: &fields,
            at: 0,
        };
        let sender = cursor.take(1)[0];
        if sender < 0.0 || sender.fract() != 0.0 || sender > u32::MAX as f64 {
            return Err(Error::Packet(format!("bad sender field {sender}")));
        }
        let valid = match cursor.take(1)[0] {
            1.0 => true,
            0.0 => false,
            v => return Err(Error::Packet(format!("bad validity field {v}"))),
        };
        let d = cursor.vector(m);
        let s = cursor.matrix(m);
        let x_pred = cursor.vector(n);
        let p_pred = cursor.matrix(n);
        let x_upd = cursor.vector(n);
        let p_upd = cursor.matrix(n);
        let x_pred_injected = cursor.vector(n);
        Ok(Self {
            sender: AgentId(sender as u32),
            input: InputEstimate { d, s, valid },
            x_pred,
            p_pred,
            x_upd,
            p_upd,
            x_pred_injected,
        })
    }
}

fn push_row_major(out: &mut Vec<f64>, m: &Matrix) {
    for r in 0..m.nrows() {
        out.extend(m.row(r).iter());
    }
}

struct Fields<'a> {
    data: &'a [f64],
    at: usize,
}

impl Fields<'_> {
    fn take(&mut self, len: usize) -> &[f64] {
        let out = &self.data[self.at..self.at + len];
        self.at += len;
        out
    }

    fn vector(&mut self, len: usize) -> Vector {
        Vector::from_column_slice(self.take(len))
    }

    fn matrix(&mut self, dim: usize) -> Matrix {
        Matrix::from_row_slice(dim, dim, self.take(dim * dim))
    }
}

/// Result of input fusion over a neighborhood.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedInput {
    pub d: Vector,
    pub s: Matrix,
    pub any_valid: bool,
}

impl FusedInput {
    pub fn none(m: usize) -> Self {
        Self {
            d: Vector::zeros(m),
            s: Matrix::zeros(m, m),
            any_valid: false,
        }
    }

    /// The input to inject into a prediction: `d̄`, or zero when nothing valid was fused.
    pub fn injection(&self) -> Vector {
        if self.any_valid {
            self.d.clone()
        } else {
            Vector::zeros(self.d.len())
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionWeights {
    pub weights: BTreeMap<AgentId, f64>,
}

/// Fast CI weights `ω_j ∝ 1 / tr(Ŝ_j)` over the packets with a valid input.
///
/// `None` when no packet carries a valid input or a valid trace is not
/// strictly positive.
pub fn ci_weights<'a, I>(packets: I) -> Option<FusionWeights>
where
    I: IntoIterator<Item = &'a ExchangePacket>,
{
    let inverse_traces: BTreeMap<AgentId, f64> = packets
        .into_iter()
        .filter(|p| p.input.valid)
        .map(|p| (p.sender, 1.0 / trace(&p.input.s)))
        .collect();
    if inverse_traces.is_empty() || inverse_traces.values().any(|w| !w.is_finite() || *w <= 0.0) {
        return None;
    }
    let total: f64 = inverse_traces.values().sum();
    Some(FusionWeights {
        weights: inverse_traces
            .into_iter()
            .map(|(id, w)| (id, w / total))
            .collect(),
    })
}

/// `S̄ = (Σ ω_j Ŝ_j⁻¹)⁻¹`, `d̄ = S̄ Σ ω_j Ŝ_j⁻¹ d̂_j`.
///
/// Packets without a weight are ignored. Summation runs in sender order so
/// the result does not depend on delivery order.
pub fn fuse_inputs(packets: &[ExchangePacket], weights: &FusionWeights) -> Result<FusedInput> {
    let mut sorted: Vec<&ExchangePacket> = packets
        .iter()
        .filter(|p| p.input.valid && weights.weights.contains_key(&p.sender))
        .collect();
    sorted.sort_by_key(|p| p.sender);
    let Some(first) = sorted.first() else {
        return Err(Error::Conditioning("input fusion with no weighted packet"));
    };
    let m = first.input.d.len();
    let mut info = Matrix::zeros(m, m);
    let mut info_d = Vector::zeros(m);
    for p in sorted {
        let w = weights.weights[&p.sender];
        let s_inv = spd_inverse(&p.input.s, "input covariance")?;
        info_d += &s_inv * &p.input.d * w;
        info += s_inv * w;
    }
    let s = spd_inverse(&info, "fused input information")?;
    let d = &s * info_d;
    Ok(FusedInput {
        d,
        s,
        any_valid: true,
    })
}

/// CI over whatever valid inputs are present; [`FusedInput::none`] otherwise.
pub fn fuse_available_inputs(packets: &[ExchangePacket], m: usize) -> Result<FusedInput> {
    match ci_weights(packets) {
        Some(w) => fuse_inputs(packets, &w),
        None => Ok(FusedInput::none(m)),
    }
}

/// Prediction with the fused input injected into the mean. The covariance
/// is the plain prediction covariance.
pub fn predict_with_input(
    belief: &LocalBelief,
    model: &SystemModel,
    fused: &FusedInput,
    k: usize,
) -> (Vector, Matrix) {
    let (x, p) = crate::estimator::predict(belief, model, k);
    (x + model.input_matrix(k - 1) * fused.injection(), p)
}

/// Information-decomposition state fusion over `packets`, which must include
/// the node's own packet:
///
/// `P̄⁻¹ = P̂*⁻¹ + Σ_j (P̃_j⁻¹ − P̂_j⁻¹)`
/// `x̄ = P̄ [Σ_j (P̃_j⁻¹ x̃_j − P̂_j⁻¹ x̂_j) + P̂*⁻¹ (x̂ + G d̄)]`
pub fn fuse_states(
    node: AgentId,
    packets: &[ExchangePacket],
    own: &LocalStepOutput,
    fused: &FusedInput,
    model: &SystemModel,
    k: usize,
) -> Result<LocalBelief> {
    if !packets.iter().any(|p| p.sender == node) {
        return Err(Error::MissingSelf(node));
    }
    let mut sorted: Vec<&ExchangePacket> = packets.iter().collect();
    sorted.sort_by_key(|p| p.sender);

    let n = own.x_pred.len();
    let mut info = Matrix::zeros(n, n);
    let mut info_x = Vector::zeros(n);
    for p in sorted {
        let upd_inv = spd_inverse(&p.p_upd, "neighbor updated covariance")?;
        let pred_inv = spd_inverse(&p.p_pred, "neighbor predicted covariance")?;
        info_x += &upd_inv * &p.x_upd - &pred_inv * &p.x_pred;
        info += upd_inv - pred_inv;
    }

    let x_star = &own.x_pred + model.input_matrix(k - 1) * fused.injection();
    let prior_inv = spd_inverse(&own.p_pred, "injected prediction covariance")?;
    info_x += &prior_inv * x_star;
    info += prior_inv;

    let p = spd_inverse(&info, "fused information")?;
    let x = &p * info_x;
    Ok(LocalBelief { x, p })
}

/// Diffusion step `x̄ + ε P̄ Σ_j (x̂*_j − x̂*_i)`.
pub fn compensate_state(
    x_bar: &Vector,
    p_bar: &Matrix,
    own_x_pred_star: &Vector,
    neighbor_x_pred_stars: &[Vector],
    epsilon: f64,
) -> Vector {
    x_bar + compensation(p_bar, own_x_pred_star, neighbor_x_pred_stars, epsilon)
}

/// The additive term of [`compensate_state`].
pub fn compensation(
    p_bar: &Matrix,
    own_x_pred_star: &Vector,
    neighbor_x_pred_stars: &[Vector],
    epsilon: f64,
) -> Vector {
    let mut sum = Vector::zeros(own_x_pred_star.len());
    for other in neighbor_x_pred_stars {
        sum += other - own_x_pred_star;
    }
    p_bar * sum * epsilon
}
