//! Per-agent processing before the exchange: prediction, unknown-input
//! estimation from the innovation, and a plain information-form update that
//! leaves the input out.

use crate::error::{Error, Result};
use crate::linalg::{numerical_rank, spd_inverse, symmetrize, Matrix, Vector};
use crate::model::{ObservationModel, SystemModel};

/// Fused posterior `(x̄, P̄)` carried from one step to the next.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalBelief {
    pub x: Vector,
    pub p: Matrix,
}

impl LocalBelief {
    pub fn new(x: Vector, p: Matrix) -> Self {
        Self { x, p }
    }
}

/// Local input estimate `d̂` with covariance `Ŝ`. When `valid` is false the
/// numbers are zero and must not enter any fusion sum.
#[derive(Debug, Clone, PartialEq)]
pub struct InputEstimate {
    pub d: Vector,
    pub s: Matrix,
    pub valid: bool,
}

impl InputEstimate {
    pub fn invalid(m: usize) -> Self {
        Self {
            d: Vector::zeros(m),
            s: Matrix::zeros(m, m),
            valid: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalStepOutput {
    pub x_pred: Vector,
    pub p_pred: Matrix,
    pub input: InputEstimate,
    pub x_upd: Vector,
    pub p_upd: Matrix,
    pub had_observation: bool,
}

/// Counts steps since the agent last saw the target (or last heard a valid
/// input estimate from a neighbor).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimeWindow {
    pub steps_since_last_obs: usize,
    pub window_len: usize,
}

impl TimeWindow {
    pub fn new(window_len: usize) -> Self {
        Self {
            steps_since_last_obs: 0,
            window_len,
        }
    }

    /// A window that never closes.
    pub fn disabled() -> Self {
        Self::new(usize::MAX)
    }

    pub fn exceeded(&self) -> bool {
        self.steps_since_last_obs > self.window_len
    }
}

/// `x̂ = A_{k-1} x̄`, `P̂ = A_{k-1} P̄ A_{k-1}ᵀ + Q`. No input term.
pub fn predict(belief: &LocalBelief, model: &SystemModel, k: usize) -> (Vector, Matrix) {
    let a = model.dynamics(k - 1);
    let x = &a * &belief.x;
    let p = symmetrize(&(&a * &belief.p * a.transpose() + model.process_noise()));
    (x, p)
}

/// True iff `H·G` has full column rank `m`.
pub fn rank_condition(h: &Matrix, g: &Matrix) -> bool {
    numerical_rank(&(h * g)) == g.ncols()
}

/// Minimum-variance unbiased estimate of the previous step's input from the
/// innovation `y - H x̂`.
///
/// Returns an invalid estimate (not an error) when the rank condition fails
/// or the observation gap has exceeded the window.
pub fn estimate_input(
    x_pred: &Vector,
    p_pred: &Matrix,
    y: &Vector,
    obs: &ObservationModel,
    g: &Matrix,
    window: &TimeWindow,
) -> Result<InputEstimate> {
    let m = g.ncols();
    let h = obs.h();
    if window.exceeded() || !rank_condition(h, g) {
        return Ok(InputEstimate::invalid(m));
    }
    let r_tilde = h * p_pred * h.transpose() + obs.r();
    let r_tilde_inv = spd_inverse(&r_tilde, "innovation covariance")
        .map_err(|_| Error::EstimationDegenerate("innovation covariance not invertible"))?;
    let hg = h * g;
    let hg_t_rinv = hg.transpose() * &r_tilde_inv;
    let s = spd_inverse(&(&hg_t_rinv * &hg), "input information")
        .map_err(|_| Error::EstimationDegenerate("input information not invertible"))?;
    let gain = &s * &hg_t_rinv;
    let d = gain * (y - h * x_pred);
    Ok(InputEstimate { d, s, valid: true })
}

/// Information-form measurement update without the input:
/// `P̃⁻¹ = P̂⁻¹ + Hᵀ R⁻¹ H`, `x̃ = x̂ + P̃ Hᵀ R⁻¹ (y − H x̂)`.
pub fn kf_update(
    x_pred: &Vector,
    p_pred: &Matrix,
    y: Option<&Vector>,
    obs: &ObservationModel,
) -> Result<(Vector, Matrix)> {
    let Some(y) = y else {
        return Ok((x_pred.clone(), p_pred.clone()));
    };
    if y.len() != obs.obs_dim() {
        return Err(Error::Dimension {
            context: "measurement",
            expected: obs.obs_dim(),
            actual: y.len(),
        });
    }
    let h = obs.h();
    let r_inv = spd_inverse(obs.r(), "measurement noise")?;
    let info = spd_inverse(p_pred, "predicted covariance")? + h.transpose() * &r_inv * h;
    let p_upd = spd_inverse(&info, "updated information")?;
    let gain = &p_upd * h.transpose() * &r_inv;
    let x_upd = x_pred + gain * (y - h * x_pred);
    Ok((x_upd, p_upd))
}

pub fn advance_time_window(
    window: TimeWindow,
    had_observation: bool,
    neighbor_input_valid: bool,
) -> TimeWindow {
    let steps_since_last_obs = if had_observation || neighbor_input_valid {
        0
    } else {
        window.steps_since_last_obs.saturating_add(1)
    };
    TimeWindow {
        steps_since_last_obs,
        ..window
    }
}

/// Prediction, gated input estimation and pure update for one agent.
///
/// A degenerate input estimation is logged and downgraded to an invalid
/// estimate; the state update still runs.
pub fn local_step(
    belief: &LocalBelief,
    model: &SystemModel,
    obs: &ObservationModel,
    y: Option<&Vector>,
    window: &TimeWindow,
    k: usize,
) -> Result<LocalStepOutput> {
    let (x_pred, p_pred) = predict(belief, model, k);
    let g = model.input_matrix(k - 1);
    let input = match y {
        Some(y) => estimate_input(&x_pred, &p_pred, y, obs, g, window).unwrap_or_else(|e| {
            log::warn!("agent {} step {k}: {e}", obs.agent);
            InputEstimate::invalid(model.input_dim())
        }),
        None => InputEstimate::invalid(model.input_dim()),
    };
    let (x_upd, p_upd) = kf_update(&x_pred, &p_pred, y, obs)?;
    Ok(LocalStepOutput {
        x_pred,
        p_pred,
        input,
        x_upd,
        p_upd,
        had_observation: y.is_some(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::min_eigenvalue;
    use crate::model::{rotation_dynamics, Dynamics, Visibility};
    use crate::AgentId;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn scalar_model(q: f64) -> SystemModel {
        SystemModel::new(
            Dynamics::Fixed(Matrix::identity(1, 1)),
            Matrix::identity(1, 1),
            Matrix::from_element(1, 1, q),
        )
        .unwrap()
    }

    fn scalar_obs(r: f64) -> ObservationModel {
        ObservationModel::new(
            AgentId(0),
            Matrix::identity(1, 1),
            Matrix::from_element(1, 1, r),
            Visibility::Always,
        )
        .unwrap()
    }

    fn v(xs: &[f64]) -> Vector {
        Vector::from_column_slice(xs)
    }

    #[test]
    fn predict_zero_mean_stays_zero() {
        let m = rotation_dynamics(0.3, 0.2);
        let b = LocalBelief::new(Vector::zeros(2), Matrix::identity(2, 2));
        assert_eq!(predict(&b, &m, 4).0, Vector::zeros(2));
    }

    #[test]
    fn predict_adds_process_noise() {
        let m = rotation_dynamics(0.0, 0.0)
            .with_process_noise(Matrix::identity(2, 2))
            .unwrap();
        let b = LocalBelief::new(Vector::zeros(2), Matrix::identity(2, 2));
        assert_eq!(predict(&b, &m, 1).1, Matrix::identity(2, 2) * 2.0);
    }

    #[test]
    fn predict_rotates_mean() {
        // θ_0 = π/2 so A_0 is the quarter turn.
        let m = rotation_dynamics(0.0, std::f64::consts::FRAC_PI_2);
        let b = LocalBelief::new(v(&[1.0, 0.0]), Matrix::identity(2, 2));
        let (x, _) = predict(&b, &m, 1);
        assert!((x - v(&[0.0, 1.0])).abs().max() < 1e-15);
    }

    #[test]
    fn rank_condition_cases() {
        let hx = Matrix::from_row_slice(1, 2, &[1.0, 0.0]);
        assert!(rank_condition(
            &hx,
            &Matrix::from_column_slice(2, 1, &[1.0, 1.0])
        ));
        assert!(!rank_condition(
            &hx,
            &Matrix::from_column_slice(2, 1, &[0.0, 1.0])
        ));
        assert!(rank_condition(
            &Matrix::identity(2, 2),
            &Matrix::identity(2, 2)
        ));
    }

    #[test]
    fn scalar_gain_is_one() {
        let obs = scalar_obs(3.0);
        let est = estimate_input(
            &v(&[2.0]),
            &Matrix::from_element(1, 1, 5.0),
            &v(&[9.5]),
            &obs,
            &Matrix::identity(1, 1),
            &TimeWindow::new(5),
        )
        .unwrap();
        assert!(est.valid);
        assert_relative_eq!(est.d[0], 7.5, epsilon = 1e-12);
        // Ŝ = R̃ / (HG)² = 5 + 3.
        assert_relative_eq!(est.s[(0, 0)], 8.0, epsilon = 1e-12);
    }

    #[test]
    fn gap_beyond_window_invalidates() {
        let obs = scalar_obs(1.0);
        let w = TimeWindow {
            steps_since_last_obs: 6,
            window_len: 5,
        };
        let est = estimate_input(
            &v(&[0.0]),
            &Matrix::identity(1, 1),
            &v(&[100.0]),
            &obs,
            &Matrix::identity(1, 1),
            &w,
        )
        .unwrap();
        assert!(!est.valid);
        let at_limit = TimeWindow {
            steps_since_last_obs: 5,
            ..w
        };
        let est = estimate_input(
            &v(&[0.0]),
            &Matrix::identity(1, 1),
            &v(&[100.0]),
            &obs,
            &Matrix::identity(1, 1),
            &at_limit,
        )
        .unwrap();
        assert!(est.valid);
    }

    #[test]
    fn rank_failure_invalidates() {
        let obs = ObservationModel::new(
            AgentId(0),
            Matrix::from_row_slice(1, 2, &[1.0, 0.0]),
            Matrix::identity(1, 1),
            Visibility::Always,
        )
        .unwrap();
        let est = estimate_input(
            &Vector::zeros(2),
            &Matrix::identity(2, 2),
            &v(&[1.0]),
            &obs,
            &Matrix::from_column_slice(2, 1, &[0.0, 1.0]),
            &TimeWindow::new(5),
        )
        .unwrap();
        assert_eq!(est, InputEstimate::invalid(1));
    }

    #[test]
    fn noiseless_scalar_chain_recovers_input() {
        // x_k = x_{k-1} + 10, perfectly measured, started at the truth.
        let model = scalar_model(0.0);
        let obs = scalar_obs(0.0);
        let g = Matrix::identity(1, 1);
        let mut belief = LocalBelief::new(v(&[0.0]), Matrix::identity(1, 1));
        let mut truth = 0.0;
        for k in 1..=20 {
            truth += 10.0;
            let out = local_step(
                &belief,
                &model,
                &obs,
                Some(&v(&[truth])),
                &TimeWindow::new(5),
                k,
            )
            .unwrap();
            assert!(out.input.valid);
            assert!(
                (out.input.d[0] - 10.0).abs() < 1e-9,
                "k={k} d={}",
                out.input.d
            );
            // Inject the estimate as the fusion stage would for a lone node.
            let x_star = &out.x_pred + &g * &out.input.d;
            belief = LocalBelief::new(x_star, out.p_upd.clone());
        }
    }

    #[test]
    fn scalar_update_halves_covariance() {
        let obs = scalar_obs(1.0);
        let (x, p) =
            kf_update(&v(&[2.0]), &Matrix::identity(1, 1), Some(&v(&[4.0])), &obs).unwrap();
        assert_relative_eq!(p[(0, 0)], 0.5, epsilon = 1e-15);
        assert_relative_eq!(x[0], 3.0, epsilon = 1e-15);
    }

    #[test]
    fn no_observation_passes_through() {
        let obs = scalar_obs(1.0);
        let p = Matrix::from_element(1, 1, 3.0);
        let (x, pu) = kf_update(&v(&[2.0]), &p, None, &obs).unwrap();
        assert_eq!(x, v(&[2.0]));
        assert_eq!(pu, p);
    }

    #[test]
    fn huge_noise_means_no_correction() {
        let obs = scalar_obs(1e8);
        let (x, _) =
            kf_update(&v(&[0.0]), &Matrix::identity(1, 1), Some(&v(&[5.0])), &obs).unwrap();
        assert!(x[0].abs() <= 1e-6 * 5.0);
    }

    #[test]
    fn singular_prior_is_a_conditioning_error() {
        let obs = scalar_obs(1.0);
        let p = Matrix::from_element(1, 1, -1.0);
        assert!(matches!(
            kf_update(&v(&[0.0]), &p, Some(&v(&[1.0])), &obs),
            Err(Error::Conditioning(_))
        ));
    }

    #[test]
    fn window_transitions() {
        let w = TimeWindow {
            steps_since_last_obs: 3,
            window_len: 5,
        };
        assert_eq!(advance_time_window(w, true, false).steps_since_last_obs, 0);
        assert_eq!(advance_time_window(w, false, true).steps_since_last_obs, 0);
        assert_eq!(advance_time_window(w, false, false).steps_since_last_obs, 4);
        assert_eq!(advance_time_window(w, false, false).window_len, 5);
    }

    #[test]
    fn unobserved_step_outputs_prediction() {
        let model = rotation_dynamics(0.01, 0.1);
        let obs = ObservationModel::new(
            AgentId(0),
            Matrix::from_row_slice(1, 2, &[1.0, 0.0]),
            Matrix::identity(1, 1),
            Visibility::Always,
        )
        .unwrap();
        let b = LocalBelief::new(v(&[1.0, 2.0]), Matrix::identity(2, 2));
        let out = local_step(&b, &model, &obs, None, &TimeWindow::new(5), 3).unwrap();
        assert!(!out.had_observation);
        assert!(!out.input.valid);
        assert_eq!(out.x_upd, out.x_pred);
        assert_eq!(out.p_upd, out.p_pred);
    }

    fn spd(dim: usize, seed: &[f64]) -> Matrix {
        let a = Matrix::from_iterator(dim, dim, seed.iter().copied().cycle().take(dim * dim));
        &a * a.transpose() + Matrix::identity(dim, dim) * 0.5
    }

    proptest! {
        #[test]
        fn information_and_gain_forms_agree(
            n in 1usize..=4,
            p in 1usize..=4,
            pa in prop::collection::vec(-2.0f64..2.0, 16),
            ra in prop::collection::vec(-2.0f64..2.0, 16),
            ha in prop::collection::vec(-3.0f64..3.0, 16),
            xa in prop::collection::vec(-10.0f64..10.0, 4),
            ya in prop::collection::vec(-10.0f64..10.0, 4),
        ) {
            let p_pred = spd(n, &pa);
            let r = spd(p, &ra);
            let h = Matrix::from_iterator(p, n, ha.iter().copied().take(p * n));
            let obs = ObservationModel::new(AgentId(0), h.clone(), r.clone(), Visibility::Always).unwrap();
            let x = Vector::from_iterator(n, xa.iter().copied().take(n));
            let y = Vector::from_iterator(p, ya.iter().copied().take(p));
            let (xi, pi) = kf_update(&x, &p_pred, Some(&y), &obs).unwrap();

            let s = &h * &p_pred * h.transpose() + &r;
            let k = &p_pred * h.transpose() * s.try_inverse().unwrap();
            let xc = &x + &k * (&y - &h * &x);
            let pc = (Matrix::identity(n, n) - &k * &h) * &p_pred;
            prop_assert!((xi - xc).abs().max() < 1e-8);
            prop_assert!((pi.clone() - pc).abs().max() < 1e-8);
            // Update never inflates the covariance.
            prop_assert!(min_eigenvalue(&(&p_pred - &pi)) >= -1e-10);
        }
    }
}
