use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::AgentId;

/// MAE and RMSE over every component of every step in a series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorStats {
    pub mae: f64,
    pub rmse: f64,
    pub count: usize,
}

/// Errors are pooled over steps and components.
pub fn compute_metrics(estimates: &[Vector], truth: &[Vector]) -> Result<ErrorStats> {
    if estimates.len() != truth.len() {
        return Err(Error::Harness(format!(
            "estimate trace has {} steps, truth has {}",
            estimates.len(),
            truth.len()
        )));
    }
    let mut abs = 0.0;
    let mut sq = 0.0;
    let mut count = 0usize;
    for (e, t) in estimates.iter().zip(truth) {
        if e.len() != t.len() {
            return Err(Error::Harness(
                "estimate and truth dimensions differ".into(),
            ));
        }
        for (a, b) in e.iter().zip(t.iter()) {
            let err = a - b;
            abs += err.abs();
            sq += err * err;
            count += 1;
        }
    }
    if count == 0 {
        return Ok(ErrorStats {
            mae: 0.0,
            rmse: 0.0,
            count: 0,
        });
    }
    Ok(ErrorStats {
        mae: abs / count as f64,
        rmse: (sq / count as f64).sqrt(),
        count,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentMetrics {
    pub state: ErrorStats,
    /// `None` when the agent never held a fused input estimate.
    pub input: Option<ErrorStats>,
}

/// Uniform average over agents (and later over seeds).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SummaryMetrics {
    pub mae_state: f64,
    pub rmse_state: f64,
    /// NaN when no agent produced an input estimate.
    pub mae_input: f64,
    pub rmse_input: f64,
}

impl SummaryMetrics {
    pub fn named(&self) -> [(&'static str, f64); 4] {
        [
            ("mae_state", self.mae_state),
            ("rmse_state", self.rmse_state),
            ("mae_input", self.mae_input),
            ("rmse_input", self.rmse_input),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    pub per_agent: BTreeMap<AgentId, AgentMetrics>,
    pub mean: SummaryMetrics,
}

impl RunMetrics {
    pub fn from_agents(per_agent: BTreeMap<AgentId, AgentMetrics>) -> Self {
        let states: Vec<ErrorStats> = per_agent.values().map(|a| a.state).collect();
        let inputs: Vec<ErrorStats> = per_agent.values().filter_map(|a| a.input).collect();
        let mean = SummaryMetrics {
            mae_state: mean(states.iter().map(|s| s.mae)),
            rmse_state: mean(states.iter().map(|s| s.rmse)),
            mae_input: mean(inputs.iter().map(|s| s.mae)),
            rmse_input: mean(inputs.iter().map(|s| s.rmse)),
        };
        Self { per_agent, mean }
    }
}

/// Mean of each field, skipping NaN entries field by field.
pub fn average_summaries(items: &[SummaryMetrics]) -> SummaryMetrics {
    SummaryMetrics {
        mae_state: nan_mean(items.iter().map(|s| s.mae_state)),
        rmse_state: nan_mean(items.iter().map(|s| s.rmse_state)),
        mae_input: nan_mean(items.iter().map(|s| s.mae_input)),
        rmse_input: nan_mean(items.iter().map(|s| s.rmse_input)),
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

fn nan_mean(values: impl Iterator<Item = f64>) -> f64 {
    mean(values.filter(|v| !v.is_nan()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn scalars(xs: &[f64]) -> Vec<Vector> {
        xs.iter().map(|&x| Vector::from_element(1, x)).collect()
    }

    #[test]
    fn zero_error() {
        let t = scalars(&[1.0, 2.0]);
        let s = compute_metrics(&t, &t).unwrap();
        assert_eq!((s.mae, s.rmse), (0.0, 0.0));
    }

    #[test]
    fn constant_error() {
        let s = compute_metrics(&scalars(&[3.0, 4.0, 5.0]), &scalars(&[1.0, 2.0, 3.0])).unwrap();
        assert_eq!((s.mae, s.rmse), (2.0, 2.0));
    }

    #[test]
    fn two_point_errors() {
        let s = compute_metrics(&scalars(&[0.0, 2.0]), &scalars(&[0.0, 0.0])).unwrap();
        assert_eq!(s.mae, 1.0);
        assert!((s.rmse - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn length_mismatch() {
        assert!(compute_metrics(&scalars(&[0.0]), &scalars(&[0.0, 1.0])).is_err());
    }

    #[test]
    fn averages_skip_missing_inputs() {
        let a = SummaryMetrics {
            mae_state: 1.0,
            rmse_state: 2.0,
            mae_input: f64::NAN,
            rmse_input: f64::NAN,
        };
        let b = SummaryMetrics {
            mae_state: 3.0,
            rmse_state: 4.0,
            mae_input: 5.0,
            rmse_input: 6.0,
        };
        let m = average_summaries(&[a, b]);
        assert_eq!(
            (m.mae_state, m.rmse_state, m.mae_input, m.rmse_input),
            (2.0, 3.0, 5.0, 6.0)
        );
    }

    proptest! {
        #[test]
        fn rmse_dominates_mae(errs in prop::collection::vec(-1e3f64..1e3, 1..50)) {
            let zeros = vec![0.0; errs.len()];
            let s = compute_metrics(&scalars(&errs), &scalars(&zeros)).unwrap();
            prop_assert!(s.rmse >= s.mae * (1.0 - 1e-12));
            prop_assert!(s.mae >= 0.0);
        }
    }
}
