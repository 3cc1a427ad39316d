//! Gear train sizing benchmark with seven design variables and eleven
//! constraints.
//!
//! The objective is the weight of a speed reducer as a polynomial in gear
//! face width, teeth module, pinion teeth count, shaft lengths, and shaft
//! diameters. Constraints cover bending and surface stress on the gear
//! teeth, transverse deflection and stress of both shafts, and a set of
//! dimensional compatibility ratios.

use ndarray::prelude::*;

use crate::dataset::BoundsSpec;
use crate::error::Result;
use crate::problems::Problem;

const LOWER: [f64; 7] = [2.6, 0.7, 17.0, 7.3, 7.8, 2.9, 5.0];
const UPPER: [f64; 7] = [3.6, 0.8, 28.0, 8.3, 8.3, 3.9, 5.5];

/// Best feasible objective value on these bounds.
pub const OPTIMUM: f64 = 2996.3481649685;

pub struct SpeedReducer {
    bounds: BoundsSpec,
}

impl SpeedReducer {
    pub fn new() -> Self {
        Self {
            bounds: BoundsSpec::from_slices(&LOWER, &UPPER).unwrap(),
        }
    }
}

impl Default for SpeedReducer {
    fn default() -> Self {
        Self::new()
    }
}

impl Problem for SpeedReducer {
    fn name(&self) -> &str {
        "speed_reducer"
    }

    fn dim(&self) -> usize {
        7
    }

    fn bounds(&self) -> &BoundsSpec {
        &self.bounds
    }

    fn constraint_count(&self) -> usize {
        11
    }

    fn evaluate(&self, x: &[f64]) -> Result<(f64, Array1<f64>)> {
        self.check_input(x)?;
        let (x1, x2, x3, x4, x5, x6, x7) = (x[0], x[1], x[2], x[3], x[4], x[5], x[6]);

        let f = 0.7854 * x1 * x2 * x2 * (3.3333 * x3 * x3 + 14.9334 * x3 - 43.0934)
            - 1.508 * x1 * (x6 * x6 + x7 * x7)
            + 7.4777 * (x6.powi(3) + x7.powi(3))
            + 0.7854 * (x4 * x6 * x6 + x5 * x7 * x7);

        let c = array![
            27.0 / (x1 * x2 * x2 * x3) - 1.0,
            397.5 / (x1 * x2 * x2 * x3 * x3) - 1.0,
            1.93 * x4.powi(3) / (x2 * x3 * x6.powi(4)) - 1.0,
            1.93 * x5.powi(3) / (x2 * x3 * x7.powi(4)) - 1.0,
            ((745.0 * x4 / (x2 * x3)).powi(2) + 16.9e6).sqrt() / (110.0 * x6.powi(3)) - 1.0,
            ((745.0 * x5 / (x2 * x3)).powi(2) + 157.5e6).sqrt() / (85.0 * x7.powi(3)) - 1.0,
            x2 * x3 / 40.0 - 1.0,
            5.0 * x2 / x1 - 1.0,
            x1 / (12.0 * x2) - 1.0,
            (1.5 * x6 + 1.9) / x4 - 1.0,
            (1.1 * x7 + 1.9) / x5 - 1.0,
        ];
        Ok((f, c))
    }

    fn known_optimum(&self) -> Option<f64> {
        Some(OPTIMUM)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng as _;

    /// Active-constraint solution of the weight minimization on these
    /// bounds: the first five coordinates sit on their lower bounds and the
    /// shaft diameters balance the two stress constraints to equality.
    const BEST_X: [f64; 7] = [
        3.5,
        0.7,
        17.0,
        7.3,
        7.8,
        3.350214666096447,
        5.286683229757916,
    ];

    #[test]
    fn best_known_point_is_feasible_with_the_recorded_objective() {
        let p = SpeedReducer::new();
        let (f, c) = p.evaluate(&BEST_X).unwrap();
        assert_abs_diff_eq!(f, OPTIMUM, epsilon = 1e-6);
        let worst = c.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(worst <= 1e-9, "worst constraint {worst}");
        assert!(worst > -1e-9, "the stress constraints should be active");
    }

    #[test]
    fn box_corners_evaluate_finite() {
        let p = SpeedReducer::new();
        for corner in 0..128u32 {
            let x: Vec<f64> = (0..7)
                .map(|j| {
                    if corner >> j & 1 == 0 {
                        LOWER[j]
                    } else {
                        UPPER[j]
                    }
                })
                .collect();
            let (f, c) = p.evaluate(&x).unwrap();
            assert!(f.is_finite());
            assert!(c.iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn feasible_region_is_a_small_slice_of_the_box() {
        let p = SpeedReducer::new();
        let mut rng = crate::rng::chacha(314);
        let n = 200_000;
        let mut feasible = 0usize;
        for _ in 0..n {
            let x: Vec<f64> = (0..7)
                .map(|j| LOWER[j] + rng.gen::<f64>() * (UPPER[j] - LOWER[j]))
                .collect();
            let (_, c) = p.evaluate(&x).unwrap();
            if c.iter().all(|&v| v <= 0.0) {
                feasible += 1;
            }
        }
        let fraction = feasible as f64 / n as f64;
        assert!(
            (0.0009..0.0036).contains(&fraction),
            "feasible fraction {fraction}"
        );
    }

    #[test]
    fn no_sampled_point_beats_the_recorded_optimum() {
        let p = SpeedReducer::new();
        let mut rng = crate::rng::chacha(2718);
        for _ in 0..200_000 {
            let x: Vec<f64> = (0..7)
                .map(|j| LOWER[j] + rng.gen::<f64>() * (UPPER[j] - LOWER[j]))
                .collect();
            let (f, c) = p.evaluate(&x).unwrap();
            if c.iter().all(|&v| v <= 0.0) {
                assert!(f >= OPTIMUM - 1e-9, "sampled {f} beats recorded optimum");
            }
        }
    }

    #[test]
    fn perturbing_the_best_point_inside_the_box_never_improves_it() {
        let p = SpeedReducer::new();
        let mut rng = crate::rng::chacha(99);
        for _ in 0..20_000 {
            let x: Vec<f64> = (0..7)
                .map(|j| {
                    let step = 10f64.powf(-4.0 * rng.gen::<f64>());
                    let v = BEST_X[j] + (rng.gen::<f64>() - 0.5) * step;
                    v.clamp(LOWER[j], UPPER[j])
                })
                .collect();
            let (f, c) = p.evaluate(&x).unwrap();
            if c.iter().all(|&v| v <= 0.0) {
                assert!(f >= OPTIMUM - 1e-9, "local perturbation {f} improves optimum");
            }
        }
    }
}
