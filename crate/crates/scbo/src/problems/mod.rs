//! Benchmark problems: box bounds, objective, and many-output constraints.
//!
//! Every problem exposes constraints in "feasible iff all outputs are at or
//! below zero" form. Problems may also declare a cheap closed-form validity
//! filter (checked before any expensive evaluation), a known optimal
//! objective value for gap reporting, and a partition of constraint outputs
//! into groups for aggregation-based baselines.

mod speed_reducer;
mod synthetic;

pub use speed_reducer::SpeedReducer;
pub use synthetic::{SyntheticTailoring, SyntheticTailoringConfig};

use ndarray::prelude::*;

use crate::dataset::{BoundsSpec, Filter};
use crate::error::{Error, Result};

/// A constrained minimization benchmark.
pub trait Problem: Send + Sync {
    /// Registry identifier.
    fn name(&self) -> &str;

    /// Input dimension.
    fn dim(&self) -> usize;

    /// Box bounds in problem units.
    fn bounds(&self) -> &BoundsSpec;

    /// Number of constraint outputs.
    fn constraint_count(&self) -> usize;

    /// Objective and constraint vector at `x` (problem units). Feasible
    /// points have every constraint at or below zero.
    fn evaluate(&self, x: &[f64]) -> Result<(f64, Array1<f64>)>;

    /// Closed-form validity region in problem units, when the problem has
    /// one. Points rejected here are never evaluated.
    fn filter(&self) -> Option<Filter<'_>> {
        None
    }

    /// Best known feasible objective value, when one is established.
    fn known_optimum(&self) -> Option<f64> {
        None
    }

    /// Partition of constraint indices into groups for aggregation
    /// baselines. `None` means every output forms its own group.
    fn ks_groups(&self) -> Option<Vec<Vec<usize>>> {
        None
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::Evaluation(format!(
                "{} expects {} inputs, got {}",
                self.name(),
                self.dim(),
                x.len()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Evaluation(format!(
                "{} got a non-finite input",
                self.name()
            )));
        }
        Ok(())
    }
}

/// Two-dimensional sanity problem: minimize `x0 + x1` on `[-1, 1]^2`
/// subject to `x0 >= 0` and `x1 >= 0`. The optimum is 0 at the origin.
pub struct ToyLinear {
    bounds: BoundsSpec,
}

impl ToyLinear {
    pub fn new() -> Self {
        Self {
            bounds: BoundsSpec::from_slices(&[-1.0, -1.0], &[1.0, 1.0]).unwrap(),
        }
    }
}

impl Default for ToyLinear {
    fn default() -> Self {
        Self::new()
    }
}

impl Problem for ToyLinear {
    fn name(&self) -> &str {
        "toy_linear"
    }

    fn dim(&self) -> usize {
        2
    }

    fn bounds(&self) -> &BoundsSpec {
        &self.bounds
    }

    fn constraint_count(&self) -> usize {
        2
    }

    fn evaluate(&self, x: &[f64]) -> Result<(f64, Array1<f64>)> {
        self.check_input(x)?;
        Ok((x[0] + x[1], array![-x[0], -x[1]]))
    }

    fn known_optimum(&self) -> Option<f64> {
        Some(0.0)
    }
}

/// Names accepted by [`build`].
pub fn available() -> Vec<&'static str> {
    vec!["speed_reducer", "synthetic_tailoring", "toy_linear"]
}

fn no_overrides(name: &str, overrides: Option<&serde_json::Value>) -> Result<()> {
    match overrides {
        None => Ok(()),
        Some(v) if v.is_null() => Ok(()),
        Some(v) if v.as_object().is_some_and(|m| m.is_empty()) => Ok(()),
        Some(_) => Err(Error::Config(format!(
            "problem {name} accepts no overrides"
        ))),
    }
}

/// Instantiates a problem by registry name.
///
/// `overrides` is an optional JSON object of problem parameters; only
/// `synthetic_tailoring` accepts any. Unknown names list the registry.
pub fn build(name: &str, overrides: Option<&serde_json::Value>) -> Result<Box<dyn Problem>> {
    match name {
        "speed_reducer" => {
            no_overrides(name, overrides)?;
            Ok(Box::new(SpeedReducer::new()))
        }
        "toy_linear" => {
            no_overrides(name, overrides)?;
            Ok(Box::new(ToyLinear::new()))
        }
        "synthetic_tailoring" => {
            let config = SyntheticTailoringConfig::from_overrides(overrides)?;
            Ok(Box::new(SyntheticTailoring::new(config)?))
        }
        _ => Err(Error::UnknownProblem {
            name: name.to_string(),
            available: available().join(", "),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_builds_every_listed_problem() {
        for name in available() {
            let problem = build(name, None).unwrap();
            assert_eq!(problem.name(), name);
            assert_eq!(problem.bounds().dim(), problem.dim());
        }
    }

    #[test]
    fn unknown_problem_lists_the_registry() {
        let err = build("warp_drive", None).map(|_| ()).unwrap_err();
        match err {
            Error::UnknownProblem { name, available } => {
                assert_eq!(name, "warp_drive");
                assert!(available.contains("speed_reducer"));
                assert!(available.contains("synthetic_tailoring"));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn overrides_on_fixed_problems_are_rejected() {
        let overrides = serde_json::json!({"d": 9});
        assert!(build("speed_reducer", Some(&overrides)).is_err());
        assert!(build("toy_linear", Some(&overrides)).is_err());
        let empty = serde_json::json!({});
        assert!(build("speed_reducer", Some(&empty)).is_ok());
    }

    #[test]
    fn toy_linear_matches_its_closed_form() {
        let p = ToyLinear::new();
        let (f, c) = p.evaluate(&[0.25, -0.5]).unwrap();
        assert_eq!(f, -0.25);
        assert_eq!(c, array![-0.25, 0.5]);
        assert_eq!(p.known_optimum(), Some(0.0));
        assert!(p.evaluate(&[0.1]).is_err());
        assert!(p.evaluate(&[f64::NAN, 0.0]).is_err());
    }
}
