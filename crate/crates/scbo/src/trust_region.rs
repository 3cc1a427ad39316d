//! Hyperrectangular trust region with success/failure resizing.
//!
//! The region lives in the normalized unit cube. Its side lengths follow the
//! objective surrogate's lengthscales so the box is wide along flat
//! directions and narrow along sensitive ones, and a base length doubles
//! after a streak of improving batches or halves after a streak of
//! non-improving ones. Shrinking past a floor triggers a restart: the base
//! length resets and the caller is expected to reseed with a fresh design.

use ndarray::prelude::*;

use crate::error::{Error, Result};

/// Resizing schedule and length limits for a trust region.
#[derive(Debug, Clone)]
pub struct TrustRegionConfig {
    /// Base side length right after startup or a restart.
    pub initial_length: f64,
    /// Doubling stops here.
    pub max_length: f64,
    /// Shrinking below this triggers a restart.
    pub min_length: f64,
    /// Consecutive improving batches needed to double the base length.
    pub success_tolerance: usize,
    /// Consecutive non-improving batches needed to halve the base length.
    pub failure_tolerance: usize,
}

impl TrustRegionConfig {
    /// Default schedule for a `dim`-dimensional problem evaluated in batches
    /// of `batch` points. The failure tolerance scales with dimension so that
    /// high-dimensional runs get more attempts before the region shrinks.
    pub fn for_problem(dim: usize, batch: usize) -> Self {
        let q = batch.max(1) as f64;
        let failure = (4.0 / q).max(dim as f64 / q).ceil() as usize;
        Self {
            initial_length: 0.8,
            max_length: 1.6,
            min_length: 0.5f64.powi(7),
            success_tolerance: 3,
            failure_tolerance: failure.max(1),
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.initial_length.is_finite() && self.initial_length > 0.0) {
            return Err(Error::Config(format!(
                "trust region initial length must be positive, got {}",
                self.initial_length
            )));
        }
        if self.min_length <= 0.0 || self.min_length >= self.initial_length {
            return Err(Error::Config(format!(
                "trust region min length must lie in (0, initial), got {}",
                self.min_length
            )));
        }
        if self.max_length < self.initial_length {
            return Err(Error::Config(format!(
                "trust region max length must be at least the initial length, got {}",
                self.max_length
            )));
        }
        if self.success_tolerance == 0 || self.failure_tolerance == 0 {
            return Err(Error::Config(
                "trust region tolerances must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// What a call to [`TrustRegionState::update`] did to the region.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrustRegionEvent {
    /// Streak counters moved but the base length did not.
    Unchanged,
    /// Base length doubled (capped at the maximum).
    Expanded,
    /// Base length halved.
    Shrunk,
    /// Base length fell below the floor; state reset for a fresh start.
    Restarted,
}

/// Mutable trust region state tracked across optimizer iterations.
#[derive(Debug, Clone)]
pub struct TrustRegionState {
    config: TrustRegionConfig,
    base_length: f64,
    success_count: usize,
    failure_count: usize,
    restart_count: usize,
    needs_reseed: bool,
}

impl TrustRegionState {
    pub fn new(config: TrustRegionConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            base_length: config.initial_length,
            config,
            success_count: 0,
            failure_count: 0,
            restart_count: 0,
            needs_reseed: false,
        })
    }

    pub fn config(&self) -> &TrustRegionConfig {
        &self.config
    }

    pub fn base_length(&self) -> f64 {
        self.base_length
    }

    pub fn success_count(&self) -> usize {
        self.success_count
    }

    pub fn failure_count(&self) -> usize {
        self.failure_count
    }

    pub fn restart_count(&self) -> usize {
        self.restart_count
    }

    /// True right after a restart, until [`TrustRegionState::acknowledge_reseed`]
    /// is called. The optimizer uses this to know it must evaluate a fresh
    /// space-filling design before trusting the region again.
    pub fn needs_reseed(&self) -> bool {
        self.needs_reseed
    }

    pub fn acknowledge_reseed(&mut self) {
        self.needs_reseed = false;
    }

    /// Region box around `center`, shaped by the objective surrogate's
    /// `lengthscales` and clipped to the unit cube.
    ///
    /// Each side is `lengthscales[i] * L / geometric_mean(lengthscales)`, so
    /// the box volume matches an isotropic cube of side `L` before clipping
    /// and relative lengthscales only redistribute extent between axes.
    pub fn bounds(
        &self,
        center: ArrayView1<'_, f64>,
        lengthscales: ArrayView1<'_, f64>,
    ) -> Result<(Array1<f64>, Array1<f64>)> {
        let d = center.len();
        if lengthscales.len() != d {
            return Err(Error::Config(format!(
                "trust region center has {} dims but lengthscales have {}",
                d,
                lengthscales.len()
            )));
        }
        if lengthscales.iter().any(|&l| !(l.is_finite() && l > 0.0)) {
            return Err(Error::Config(
                "trust region lengthscales must be positive and finite".into(),
            ));
        }
        let log_mean = lengthscales.iter().map(|l| l.ln()).sum::<f64>() / d as f64;
        let geo_mean = log_mean.exp();
        let mut lower = Array1::zeros(d);
        let mut upper = Array1::zeros(d);
        for i in 0..d {
            let side = lengthscales[i] / geo_mean * self.base_length;
            lower[i] = (center[i] - 0.5 * side).max(0.0);
            upper[i] = (center[i] + 0.5 * side).min(1.0);
        }
        Ok((lower, upper))
    }

    /// Feed in whether the latest batch produced a new incumbent.
    ///
    /// Streaks of `success_tolerance` improvements double the base length
    /// (capped), streaks of `failure_tolerance` misses halve it, and each
    /// resize clears both counters. Halving below the minimum length restarts
    /// the region instead: the base length resets, the restart counter
    /// increments, and [`TrustRegionState::needs_reseed`] turns on.
    pub fn update(&mut self, improved: bool) -> TrustRegionEvent {
        if improved {
            self.success_count += 1;
            self.failure_count = 0;
        } else {
            self.failure_count += 1;
            self.success_count = 0;
        }
        if self.success_count >= self.config.success_tolerance {
            self.success_count = 0;
            self.base_length = (2.0 * self.base_length).min(self.config.max_length);
            return TrustRegionEvent::Expanded;
        }
        if self.failure_count >= self.config.failure_tolerance {
            self.failure_count = 0;
            self.base_length *= 0.5;
            if self.base_length < self.config.min_length {
                self.base_length = self.config.initial_length;
                self.success_count = 0;
                self.failure_count = 0;
                self.restart_count += 1;
                self.needs_reseed = true;
                return TrustRegionEvent::Restarted;
            }
            return TrustRegionEvent::Shrunk;
        }
        TrustRegionEvent::Unchanged
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn state_with(failure_tolerance: usize) -> TrustRegionState {
        let config = TrustRegionConfig {
            failure_tolerance,
            ..TrustRegionConfig::for_problem(2, 1)
        };
        TrustRegionState::new(config).unwrap()
    }

    #[test]
    fn default_schedule_scales_failure_tolerance_with_dimension() {
        assert_eq!(TrustRegionConfig::for_problem(7, 1).failure_tolerance, 7);
        assert_eq!(TrustRegionConfig::for_problem(7, 4).failure_tolerance, 2);
        assert_eq!(TrustRegionConfig::for_problem(2, 1).failure_tolerance, 4);
        assert_eq!(TrustRegionConfig::for_problem(108, 16).failure_tolerance, 7);
        assert_eq!(TrustRegionConfig::for_problem(108, 200).failure_tolerance, 1);
    }

    #[test]
    fn three_successes_double_the_length_up_to_the_cap() {
        let mut state = state_with(4);
        assert_eq!(state.update(true), TrustRegionEvent::Unchanged);
        assert_eq!(state.update(true), TrustRegionEvent::Unchanged);
        assert_eq!(state.update(true), TrustRegionEvent::Expanded);
        assert_abs_diff_eq!(state.base_length(), 1.6);
        for _ in 0..3 {
            state.update(true);
        }
        assert_abs_diff_eq!(state.base_length(), 1.6, epsilon = 0.0);
        assert_eq!(state.success_count(), 0);
    }

    #[test]
    fn failure_streaks_halve_the_length() {
        let mut state = state_with(2);
        for _ in 0..2 {
            state.update(false);
        }
        assert_abs_diff_eq!(state.base_length(), 0.4);
        for _ in 0..2 {
            state.update(false);
        }
        assert_abs_diff_eq!(state.base_length(), 0.2);
        assert_eq!(state.restart_count(), 0);
    }

    #[test]
    fn success_resets_the_failure_streak() {
        let mut state = state_with(3);
        state.update(false);
        state.update(false);
        state.update(true);
        assert_eq!(state.failure_count(), 0);
        assert_eq!(state.success_count(), 1);
        state.update(false);
        state.update(false);
        assert_abs_diff_eq!(state.base_length(), 0.8, epsilon = 0.0);
        state.update(false);
        assert_abs_diff_eq!(state.base_length(), 0.4);
    }

    #[test]
    fn shrinking_past_the_floor_restarts() {
        let config = TrustRegionConfig {
            min_length: 0.01,
            failure_tolerance: 2,
            ..TrustRegionConfig::for_problem(2, 1)
        };
        let mut state = TrustRegionState::new(config).unwrap();
        state.base_length = 0.012;
        state.update(false);
        let event = state.update(false);
        assert_eq!(event, TrustRegionEvent::Restarted);
        assert_abs_diff_eq!(state.base_length(), 0.8, epsilon = 0.0);
        assert_eq!(state.restart_count(), 1);
        assert_eq!(state.success_count(), 0);
        assert_eq!(state.failure_count(), 0);
        assert!(state.needs_reseed());
        state.acknowledge_reseed();
        assert!(!state.needs_reseed());
    }

    #[test]
    fn bounds_redistribute_extent_by_lengthscale_ratio() {
        let state = state_with(4);
        let center = array![0.5, 0.5];
        let ls = array![1.0, 4.0];
        let (lower, upper) = state.bounds(center.view(), ls.view()).unwrap();
        assert_abs_diff_eq!(upper[0] - lower[0], 0.4, epsilon = 1e-12);
        assert_abs_diff_eq!(lower[1], 0.0, epsilon = 0.0);
        assert_abs_diff_eq!(upper[1], 1.0, epsilon = 0.0);
        assert_abs_diff_eq!(lower[0], 0.3, epsilon = 1e-12);
        assert_abs_diff_eq!(upper[0], 0.7, epsilon = 1e-12);
    }

    #[test]
    fn equal_lengthscales_give_an_isotropic_box() {
        let state = state_with(4);
        let center = array![0.5, 0.5, 0.5];
        let ls = array![0.3, 0.3, 0.3];
        let (lower, upper) = state.bounds(center.view(), ls.view()).unwrap();
        for i in 0..3 {
            assert_abs_diff_eq!(upper[i] - lower[i], 0.8, epsilon = 1e-12);
        }
    }

    #[test]
    fn bounds_clip_at_the_cube_corner() {
        let state = state_with(4);
        let center = array![0.05, 0.95];
        let ls = array![1.0, 1.0];
        let (lower, upper) = state.bounds(center.view(), ls.view()).unwrap();
        assert_abs_diff_eq!(lower[0], 0.0, epsilon = 0.0);
        assert_abs_diff_eq!(upper[0], 0.45, epsilon = 1e-12);
        assert_abs_diff_eq!(lower[1], 0.55, epsilon = 1e-12);
        assert_abs_diff_eq!(upper[1], 1.0, epsilon = 0.0);
    }

    #[test]
    fn bounds_reject_mismatched_or_degenerate_lengthscales() {
        let state = state_with(4);
        assert!(state
            .bounds(array![0.5, 0.5].view(), array![1.0].view())
            .is_err());
        assert!(state
            .bounds(array![0.5, 0.5].view(), array![1.0, 0.0].view())
            .is_err());
    }

    proptest! {
        #[test]
        fn base_length_stays_on_the_doubling_grid(updates in proptest::collection::vec(any::<bool>(), 0..200)) {
            let mut state = state_with(2);
            for improved in updates {
                state.update(improved);
                let config = state.config().clone();
                prop_assert!(state.base_length() >= config.min_length);
                prop_assert!(state.base_length() <= config.max_length);
                let ratio = state.base_length() / config.initial_length;
                let k = ratio.log2();
                let snapped = k.round();
                prop_assert!((k - snapped).abs() < 1e-12 || (state.base_length() - config.max_length).abs() < 1e-12);
                prop_assert!(state.success_count() == 0 || state.failure_count() == 0);
            }
        }

        #[test]
        fn boxes_always_fit_the_unit_cube(
            center in proptest::collection::vec(0.0f64..1.0, 1..6),
            raw_ls in proptest::collection::vec(0.01f64..4.0, 1..6),
        ) {
            let d = center.len().min(raw_ls.len());
            let state = state_with(4);
            let c = Array1::from(center[..d].to_vec());
            let ls = Array1::from(raw_ls[..d].to_vec());
            let (lower, upper) = state.bounds(c.view(), ls.view()).unwrap();
            for i in 0..d {
                prop_assert!(lower[i] >= 0.0 && upper[i] <= 1.0);
                prop_assert!(lower[i] <= c[i] && c[i] <= upper[i]);
            }
        }
    }
}
