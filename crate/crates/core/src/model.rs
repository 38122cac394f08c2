//! Linear dynamics, heterogeneous sensors, noise streams and ground truth.

use nalgebra::Vector2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{is_psd, is_symmetric, psd_factor, Matrix, Vector};
use crate::AgentId;

/// How the state transition matrix evolves over time.
#[derive(Debug, Clone, PartialEq)]
pub enum Dynamics {
    Fixed(Matrix),
    /// 2-D rotation by `θ_k = omega·k + theta0` at step `k`.
    Rotation {
        omega: f64,
        theta0: f64,
    },
}

impl Dynamics {
    fn at(&self, k: usize) -> Matrix {
        match self {
            Dynamics::Fixed(a) => a.clone(),
            Dynamics::Rotation { omega, theta0 } => rotation(omega * k as f64 + theta0),
        }
    }

    fn dim(&self) -> usize {
        match self {
            Dynamics::Fixed(a) => a.nrows(),
            Dynamics::Rotation { .. } => 2,
        }
    }
}

pub fn rotation(theta: f64) -> Matrix {
    let (s, c) = theta.sin_cos();
    Matrix::from_row_slice(2, 2, &[c, -s, s, c])
}

/// `x_k = A_{k-1} x_{k-1} + G_{k-1} d_{k-1} + w_{k-1}`, with `A` and `G`
/// shared by every agent.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemModel {
    dynamics: Dynamics,
    input_matrix: Matrix,
    process_noise: Matrix,
    process_factor: Matrix,
}

impl SystemModel {
    pub fn new(dynamics: Dynamics, input_matrix: Matrix, process_noise: Matrix) -> Result<Self> {
        let n = dynamics.dim();
        if let Dynamics::Fixed(a) = &dynamics {
            if !a.is_square() {
                return Err(Error::Model("dynamics matrix must be square".into()));
            }
            if a.iter().any(|v| !v.is_finite()) {
                return Err(Error::Model("dynamics matrix is not finite".into()));
            }
        }
        if input_matrix.nrows() != n {
            return Err(Error::Dimension {
                context: "input matrix rows",
                expected: n,
                actual: input_matrix.nrows(),
            });
        }
        if input_matrix.ncols() == 0 {
            return Err(Error::Model("input dimension must be positive".into()));
        }
        if input_matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::Model("input matrix is not finite".into()));
        }
        if process_noise.nrows() != n || process_noise.ncols() != n {
            return Err(Error::Dimension {
                context: "process noise covariance",
                expected: n,
                actual: process_noise.nrows(),
            });
        }
        if !is_symmetric(&process_noise, 1e-12) {
            return Err(Error::Model(
                "process noise covariance is not symmetric".into(),
            ));
        }
        if !is_psd(&process_noise, 0.0) {
            return Err(Error::Model(
                "process noise covariance has a negative eigenvalue".into(),
            ));
        }
        let process_factor = psd_factor(&process_noise);
        Ok(Self {
            dynamics,
            input_matrix,
            process_noise,
            process_factor,
        })
    }

    pub fn with_process_noise(self, q: Matrix) -> Result<Self> {
        Self::new(self.dynamics, self.input_matrix, q)
    }

    pub fn state_dim(&self) -> usize {
        self.dynamics.dim()
    }

    pub fn input_dim(&self) -> usize {
        self.input_matrix.ncols()
    }

    /// `A_k`.
    pub fn dynamics(&self, k: usize) -> Matrix {
        self.dynamics.at(k)
    }

    /// `G_k`. Constant in every model this crate builds.
    pub fn input_matrix(&self, _k: usize) -> &Matrix {
        &self.input_matrix
    }

    pub fn process_noise(&self) -> &Matrix {
        &self.process_noise
    }
}

/// Planar target rotating about the origin with `G = [1, 1]ᵀ` and `Q = 0`.
pub fn rotation_dynamics(omega: f64, theta0: f64) -> SystemModel {
    SystemModel::new(
        Dynamics::Rotation { omega, theta0 },
        Matrix::from_column_slice(2, 1, &[1.0, 1.0]),
        Matrix::zeros(2, 2),
    )
    .expect("rotation model is well formed")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Quadrant {
    Q1,
    Q2,
    Q3,
    Q4,
}

impl Quadrant {
    /// Points on the axes go to the quadrant whose closed side they lie on:
    /// `x ≥ 0, y ≥ 0` is Q1, `x < 0, y ≥ 0` is Q2, `x < 0, y < 0` is Q3, the rest Q4.
    pub fn of(x: f64, y: f64) -> Quadrant {
        match (x >= 0.0, y >= 0.0) {
            (true, true) => Quadrant::Q1,
            (false, true) => Quadrant::Q2,
            (false, false) => Quadrant::Q3,
            (true, false) => Quadrant::Q4,
        }
    }

    pub fn of_state(x: &Vector) -> Quadrant {
        Quadrant::of(x[0], x[1])
    }
}

/// When an agent is able to sense the target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "quadrant")]
pub enum Visibility {
    Always,
    Never,
    /// Target lies in a fixed quadrant.
    Quadrant(Quadrant),
    /// Target lies in the same quadrant as the agent's current position.
    SameQuadrant,
}

impl Visibility {
    pub fn is_visible(&self, truth: &Vector, pose: &Vector2<f64>, _k: usize) -> bool {
        match self {
            Visibility::Always => true,
            Visibility::Never => false,
            Visibility::Quadrant(q) => Quadrant::of_state(truth) == *q,
            Visibility::SameQuadrant => Quadrant::of_state(truth) == Quadrant::of(pose.x, pose.y),
        }
    }
}

/// `y = H x + v`, `v ~ N(0, R)`, available only while `visibility` holds.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationModel {
    pub agent: AgentId,
    h: Matrix,
    r: Matrix,
    r_factor: Matrix,
    pub visibility: Visibility,
}

impl ObservationModel {
    /// `R` must be symmetric PSD. A singular `R` is accepted (noiseless
    /// sensing); the estimators regularize it through the jitter policy.
    pub fn new(agent: AgentId, h: Matrix, r: Matrix, visibility: Visibility) -> Result<Self> {
        let p = h.nrows();
        if p == 0 || h.ncols() == 0 {
            return Err(Error::Model(format!(
                "agent {agent}: empty observation matrix"
            )));
        }
        if r.nrows() != p || r.ncols() != p {
            return Err(Error::Dimension {
                context: "measurement noise covariance",
                expected: p,
                actual: r.nrows(),
            });
        }
        if !is_symmetric(&r, 1e-12) || !is_psd(&r, 0.0) {
            return Err(Error::Model(format!(
                "agent {agent}: measurement noise covariance must be symmetric PSD"
            )));
        }
        let r_factor = psd_factor(&r);
        Ok(Self {
            agent,
            h,
            r,
            r_factor,
            visibility,
        })
    }

    pub fn obs_dim(&self) -> usize {
        self.h.nrows()
    }

    pub fn h(&self) -> &Matrix {
        &self.h
    }

    pub fn r(&self) -> &Matrix {
        &self.r
    }
}

/// Piecewise-constant input: each breakpoint `(k, value)` holds from step
/// `k` until the next one; before the first breakpoint the input is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct InputSignal {
    dim: usize,
    breakpoints: Vec<(usize, Vector)>,
}

impl InputSignal {
    pub fn new(dim: usize, mut breakpoints: Vec<(usize, Vector)>) -> Result<Self> {
        if breakpoints.iter().any(|(_, v)| v.len() != dim) {
            return Err(Error::Model("input breakpoint dimension mismatch".into()));
        }
        if breakpoints
            .iter()
            .any(|(_, v)| v.iter().any(|x| !x.is_finite()))
        {
            return Err(Error::Model("input breakpoint is not finite".into()));
        }
        breakpoints.sort_by_key(|(k, _)| *k);
        Ok(Self { dim, breakpoints })
    }

    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            breakpoints: Vec::new(),
        }
    }

    /// Scalar step: `0` before `at`, `value` from `at` on.
    pub fn step(at: usize, value: f64) -> Self {
        Self {
            dim: 1,
            breakpoints: vec![(at, Vector::from_element(1, value))],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn value(&self, k: usize) -> Vector {
        self.breakpoints
            .iter()
            .rev()
            .find(|(start, _)| *start <= k)
            .map(|(_, v)| v.clone())
            .unwrap_or_else(|| Vector::zeros(self.dim))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum NoiseRole {
    Process = 1,
    Measurement = 2,
}

/// Root of all randomness in a run. Substreams are keyed by role and agent
/// so that adding an agent never perturbs the draws of another.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoiseSource {
    pub seed: u64,
}

impl NoiseSource {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    fn stream(&self, role: NoiseRole, agent: u32) -> NoiseStream {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(((role as u64) << 32) | agent as u64);
        NoiseStream { rng }
    }

    pub fn process(&self) -> NoiseStream {
        self.stream(NoiseRole::Process, 0)
    }

    pub fn measurement(&self, agent: AgentId) -> NoiseStream {
        self.stream(NoiseRole::Measurement, agent.0)
    }
}

#[derive(Debug, Clone)]
pub struct NoiseStream {
    rng: ChaCha8Rng,
}

impl NoiseStream {
    /// Draws `F·z` with `z` standard normal, i.e. a sample of `N(0, F Fᵀ)`.
    pub fn gaussian(&mut self, factor: &Matrix) -> Vector {
        let z = Vector::from_iterator(
            factor.ncols(),
            (0..factor.ncols()).map(|_| StandardNormal.sample(&mut self.rng)),
        );
        factor * z
    }
}

/// `states[k]` for `k = 0..=horizon`; `inputs[k]` is `d_k`, so the step into
/// `states[k]` is driven by `inputs[k - 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub states: Vec<Vector>,
    pub inputs: Vec<Vector>,
}

impl GroundTruth {
    pub fn horizon(&self) -> usize {
        self.states.len().saturating_sub(1)
    }

    /// The input that moved the state from `k - 1` to `k`.
    pub fn input_into(&self, k: usize) -> &Vector {
        &self.inputs[k - 1]
    }
}

/// One step of the true dynamics: `A_{k-1} x + G_{k-1} d + w`.
pub fn step_truth(
    state: &Vector,
    model: &SystemModel,
    input: &Vector,
    k: usize,
    noise: &mut NoiseStream,
) -> Result<Vector> {
    let n = model.state_dim();
    if state.len() != n {
        return Err(Error::Dimension {
            context: "truth state",
            expected: n,
            actual: state.len(),
        });
    }
    if input.len() != model.input_dim() {
        return Err(Error::Dimension {
            context: "truth input",
            expected: model.input_dim(),
            actual: input.len(),
        });
    }
    assert!(k >= 1, "truth steps start at k = 1");
    let w = noise.gaussian(&model.process_factor);
    Ok(model.dynamics(k - 1) * state + model.input_matrix(k - 1) * input + w)
}

pub fn simulate_truth(
    model: &SystemModel,
    input: &InputSignal,
    x0: &Vector,
    horizon: usize,
    noise: &mut NoiseStream,
) -> Result<GroundTruth> {
    let mut states = Vec::with_capacity(horizon + 1);
    let mut inputs = Vec::with_capacity(horizon);
    states.push(x0.clone());
    for k in 1..=horizon {
        let d = input.value(k - 1);
        let next = step_truth(&states[k - 1], model, &d, k, noise)?;
        inputs.push(d);
        states.push(next);
    }
    Ok(GroundTruth { states, inputs })
}

/// Noisy measurement, or `None` when the target is not visible.
///
/// The measurement stream advances on every call, visible or not, so the
/// noise at step `k` does not depend on the visibility history.
pub fn observe(
    truth: &Vector,
    obs: &ObservationModel,
    pose: &Vector2<f64>,
    k: usize,
    noise: &mut NoiseStream,
) -> Option<Vector> {
    let v = noise.gaussian(&obs.r_factor);
    obs.visibility
        .is_visible(truth, pose, k)
        .then(|| obs.h() * truth + v)
}
