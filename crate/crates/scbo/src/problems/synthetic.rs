//! Desk-scale composite panel tailoring analogue.
//!
//! The design vector stacks, panel by panel, eight lamination parameters in
//! `[-1, 1]` and one thickness. The objective is structural mass (area
//! weighted thickness) plus a small convex quadratic that charges each panel
//! for lamination imbalance. Constraints are reserve-factor style margins: a
//! few thousand outputs, all driven through a low-rank linear map of a small
//! set of latent load features, so the constraint manifold has a known
//! effective rank regardless of how many outputs are emitted.
//!
//! Each latent feature decays linearly in its own sparse weighted mean of
//! the normalized panel thicknesses `T_k(x)` and carries a bounded nonlinear
//! ripple (sinusoids plus a quadratic along random directions). Spreading
//! the thickness response over per-feature directions keeps the constraint
//! spectrum graded instead of collapsing onto one dominant component.
//! Output biases are calibrated from the ripple bounds so that every design
//! with `min_k T_k(x)` at or above a threshold `T*` is feasible by
//! construction, while designs with `max_k T_k(x)` more than two ripple
//! amplitudes below `T*` violate every output. `T*` itself is placed from a
//! target feasible-volume fraction via the normal quantile of the average
//! thickness mean under uniform sampling, which makes feasible designs
//! essentially impossible to hit at random yet easy to reach by pushing
//! thickness up.

use ndarray::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::dataset::{BoundsSpec, Filter};
use crate::error::{Error, Result};
use crate::problems::Problem;
use crate::rng;

const PARAMS_PER_PANEL: usize = 8;
const VARS_PER_PANEL: usize = PARAMS_PER_PANEL + 1;
const THICKNESS_MIN: f64 = 0.002;
const THICKNESS_MAX: f64 = 0.03;
/// Upper bound on the squared norm of one panel's lamination parameters.
pub const PANEL_NORM_LIMIT: f64 = 3.5;
const NONZEROS_PER_ROW: usize = 3;
const SINUSOIDS: usize = 3;
/// Weight of the quadratic lamination-imbalance term in the objective.
const STABILITY_WEIGHT: f64 = 2e-4;

#[derive(Debug, Clone)]
pub struct SyntheticTailoringConfig {
    /// Panels; each contributes nine design variables.
    pub panels: usize,
    /// Independent load cases; each emits `outputs_per_loadcase` margins.
    pub loadcases: usize,
    pub outputs_per_loadcase: usize,
    /// Latent load features driving all outputs.
    pub effective_rank: usize,
    /// Contiguous margin blocks per loadcase for aggregation baselines.
    pub discipline_blocks: usize,
    /// Target fraction of the box (under uniform sampling) that is feasible.
    pub feasible_fraction: f64,
    /// Ripple amplitude relative to each latent feature's thickness slope.
    pub wiggle_scale: f64,
    pub seed: u64,
}

impl Default for SyntheticTailoringConfig {
    fn default() -> Self {
        Self {
            panels: 12,
            loadcases: 2,
            outputs_per_loadcase: 893,
            effective_rank: 30,
            discipline_blocks: 33,
            feasible_fraction: 1e-5,
            wiggle_scale: 0.025,
            seed: 0xA380,
        }
    }
}

impl SyntheticTailoringConfig {
    /// Applies a JSON object of overrides to the default configuration.
    ///
    /// Accepted keys: `d` (total input dimension, a multiple of nine),
    /// `g` (total outputs, a multiple of `loadcases`), `loadcases`, `rank`,
    /// `blocks`, `feasible_fraction`, `wiggle_scale`, `seed`.
    pub fn from_overrides(overrides: Option<&serde_json::Value>) -> Result<Self> {
        let mut config = Self::default();
        let Some(value) = overrides else {
            return Ok(config);
        };
        if value.is_null() {
            return Ok(config);
        }
        let map = value.as_object().ok_or_else(|| {
            Error::Config("problem overrides must be a JSON object".into())
        })?;
        let mut total_outputs: Option<u64> = None;
        for (key, v) in map {
            let as_u64 = || {
                v.as_u64().ok_or_else(|| {
                    Error::Config(format!("override {key} must be a non-negative integer"))
                })
            };
            let as_f64 = || {
                v.as_f64()
                    .ok_or_else(|| Error::Config(format!("override {key} must be a number")))
            };
            match key.as_str() {
                "d" => {
                    let d = as_u64()? as usize;
                    if d == 0 || d % VARS_PER_PANEL != 0 {
                        return Err(Error::Config(format!(
                            "override d must be a positive multiple of {VARS_PER_PANEL}, got {d}"
                        )));
                    }
                    config.panels = d / VARS_PER_PANEL;
                }
                "g" => total_outputs = Some(as_u64()?),
                "loadcases" => config.loadcases = as_u64()? as usize,
                "rank" => config.effective_rank = as_u64()? as usize,
                "blocks" => config.discipline_blocks = as_u64()? as usize,
                "feasible_fraction" => config.feasible_fraction = as_f64()?,
                "wiggle_scale" => config.wiggle_scale = as_f64()?,
                "seed" => config.seed = as_u64()?,
                other => {
                    return Err(Error::Config(format!(
                        "unknown synthetic_tailoring override {other}"
                    )))
                }
            }
        }
        if let Some(g) = total_outputs {
            let g = g as usize;
            if g == 0 || g % config.loadcases != 0 {
                return Err(Error::Config(format!(
                    "override g must be a positive multiple of loadcases ({}), got {g}",
                    config.loadcases
                )));
            }
            config.outputs_per_loadcase = g / config.loadcases;
        }
        Ok(config)
    }

    fn validate(&self) -> Result<()> {
        if self.panels == 0 || self.loadcases == 0 || self.outputs_per_loadcase == 0 {
            return Err(Error::Config(
                "synthetic_tailoring needs at least one panel, loadcase, and output".into(),
            ));
        }
        if self.effective_rank == 0 {
            return Err(Error::Config("effective rank must be positive".into()));
        }
        if self.discipline_blocks == 0 || self.discipline_blocks > self.outputs_per_loadcase {
            return Err(Error::Config(format!(
                "discipline blocks must lie in [1, {}], got {}",
                self.outputs_per_loadcase, self.discipline_blocks
            )));
        }
        if !(self.feasible_fraction > 0.0 && self.feasible_fraction < 0.5) {
            return Err(Error::Config(format!(
                "feasible fraction must lie in (0, 0.5), got {}",
                self.feasible_fraction
            )));
        }
        if !(self.wiggle_scale > 0.0 && self.wiggle_scale <= 0.2) {
            return Err(Error::Config(format!(
                "wiggle scale must lie in (0, 0.2], got {}",
                self.wiggle_scale
            )));
        }
        Ok(())
    }
}

/// One latent feature's ripple: bounded sinusoids plus a centered quadratic
/// along random directions of the shifted normalized input.
struct Ripple {
    sin_amplitude: [f64; SINUSOIDS],
    sin_direction: Array2<f64>,
    sin_phase: [f64; SINUSOIDS],
    quad_amplitude: f64,
    quad_direction: Array1<f64>,
    quad_center: f64,
}

impl Ripple {
    fn value(&self, shifted: &Array1<f64>) -> f64 {
        let mut total = 0.0;
        for s in 0..SINUSOIDS {
            let phase = self.sin_direction.row(s).dot(shifted);
            let freq = 2.0 * std::f64::consts::PI * (s + 1) as f64;
            total += self.sin_amplitude[s] * (freq * phase + self.sin_phase[s]).sin();
        }
        let q = self.quad_direction.dot(shifted);
        total + self.quad_amplitude * (q * q - self.quad_center)
    }
}

pub struct SyntheticTailoring {
    config: SyntheticTailoringConfig,
    bounds: BoundsSpec,
    /// Per-feature thickness weights, one non-negative row per latent
    /// feature, each summing to one.
    feature_weights: Array2<f64>,
    /// Column means of `feature_weights`.
    mean_weights: Vec<f64>,
    panel_areas: Vec<f64>,
    feature_slope: Array1<f64>,
    ripples: Vec<Ripple>,
    output_map: Array2<f64>,
    bias: Array1<f64>,
    threshold: f64,
    groups: Vec<Vec<usize>>,
    anchor: Vec<f64>,
    filter_fn: Box<dyn Fn(&[f64]) -> bool + Send + Sync>,
}

fn unit_gaussian_direction<R: Rng>(rng: &mut R, dim: usize) -> Array1<f64> {
    loop {
        let v = Array1::from_iter((0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let norm = v.dot(&v).sqrt();
        if norm > 1e-9 {
            return v / norm;
        }
    }
}

fn panel_norms_ok(x: &[f64]) -> bool {
    x.chunks_exact(VARS_PER_PANEL).all(|panel| {
        let sq: f64 = panel[..PARAMS_PER_PANEL].iter().map(|v| v * v).sum();
        sq <= PANEL_NORM_LIMIT
    })
}

impl SyntheticTailoring {
    pub fn new(config: SyntheticTailoringConfig) -> Result<Self> {
        config.validate()?;
        let panels = config.panels;
        let d = panels * VARS_PER_PANEL;
        let rank = config.effective_rank;
        let per_case = config.outputs_per_loadcase;
        let outputs = config.loadcases * per_case;

        let mut lower = Vec::with_capacity(d);
        let mut upper = Vec::with_capacity(d);
        for _ in 0..panels {
            lower.extend(std::iter::repeat(-1.0).take(PARAMS_PER_PANEL));
            upper.extend(std::iter::repeat(1.0).take(PARAMS_PER_PANEL));
            lower.push(THICKNESS_MIN);
            upper.push(THICKNESS_MAX);
        }
        let bounds = BoundsSpec::from_slices(&lower, &upper)?;

        // All instance randomness comes from one stream in a fixed draw
        // order, so a configuration pins the problem exactly.
        let mut stream = rng::chacha(config.seed);

        let panel_areas: Vec<f64> = (0..panels).map(|_| stream.gen_range(80.0..120.0)).collect();

        let feature_slope =
            Array1::from_iter((0..rank).map(|_| stream.gen_range(1.0..2.0)));

        // Each feature averages the thickness of a few panels. The first
        // panel is assigned cyclically so every panel influences at least
        // one feature whenever rank >= panels.
        let touched = NONZEROS_PER_ROW.min(panels);
        let mut feature_weights = Array2::<f64>::zeros((rank, panels));
        for k in 0..rank {
            let mut chosen = vec![k % panels];
            while chosen.len() < touched {
                let p = stream.gen_range(0..panels);
                if !chosen.contains(&p) {
                    chosen.push(p);
                }
            }
            let raw: Vec<f64> = (0..touched).map(|_| stream.gen_range(0.5..1.5)).collect();
            let sum: f64 = raw.iter().sum();
            for (p, w) in chosen.into_iter().zip(raw) {
                feature_weights[[k, p]] = w / sum;
            }
        }
        let mean_weights: Vec<f64> = (0..panels)
            .map(|p| feature_weights.column(p).sum() / rank as f64)
            .collect();

        let wiggle = config.wiggle_scale;
        let mut ripples = Vec::with_capacity(rank);
        for k in 0..rank {
            let mut sin_direction = Array2::zeros((SINUSOIDS, d));
            let mut sin_phase = [0.0; SINUSOIDS];
            for s in 0..SINUSOIDS {
                sin_direction
                    .row_mut(s)
                    .assign(&unit_gaussian_direction(&mut stream, d));
                sin_phase[s] = stream.gen_range(0.0..std::f64::consts::TAU);
            }
            let quad_direction = unit_gaussian_direction(&mut stream, d);
            let shares: Vec<f64> = (0..SINUSOIDS + 1)
                .map(|_| stream.gen_range(0.5..1.5))
                .collect();
            let share_sum: f64 = shares.iter().sum();
            let budget = wiggle * feature_slope[k];
            let mut sin_amplitude = [0.0; SINUSOIDS];
            for s in 0..SINUSOIDS {
                let sign = if stream.gen::<bool>() { 1.0 } else { -1.0 };
                sin_amplitude[s] = sign * budget * shares[s] / share_sum;
            }
            // The quadratic is centered at half its maximum so its range is
            // symmetric and its magnitude bound equals its amplitude share.
            let reach = quad_direction.iter().map(|v| v.abs()).sum::<f64>() / 2.0;
            let quad_center = reach * reach / 2.0;
            let quad_share = budget * shares[SINUSOIDS] / share_sum;
            let sign = if stream.gen::<bool>() { 1.0 } else { -1.0 };
            let quad_amplitude = if quad_center > 0.0 {
                sign * quad_share / quad_center
            } else {
                0.0
            };
            ripples.push(Ripple {
                sin_amplitude,
                sin_direction,
                sin_phase,
                quad_amplitude,
                quad_direction,
                quad_center,
            });
        }

        // First loadcase: sparse non-negative rows, a few features each.
        let mut output_map = Array2::<f64>::zeros((outputs, rank));
        let picks = NONZEROS_PER_ROW.min(rank);
        for j in 0..per_case {
            let mut chosen: Vec<usize> = Vec::with_capacity(picks);
            while chosen.len() < picks {
                let k = stream.gen_range(0..rank);
                if !chosen.contains(&k) {
                    chosen.push(k);
                }
            }
            for k in chosen {
                output_map[[j, k]] = stream.gen_range(0.2..1.0);
            }
        }
        // Remaining loadcases: non-negative mixtures of the first block's
        // rows, so all outputs share one rank-limited column space while
        // later cases respond to every feature.
        if config.loadcases > 1 {
            let mixer =
                Array2::from_shape_fn((rank, rank), |_| stream.gen_range(0.0..1.0));
            let first = output_map.slice(s![..per_case, ..]).to_owned();
            let mixed = first.dot(&mixer);
            for case in 1..config.loadcases {
                for j in 0..per_case {
                    let row = case * per_case + j;
                    let target = stream.gen_range(1.5..3.0);
                    let scale = target / mixed.row(j).dot(&feature_slope);
                    for k in 0..rank {
                        output_map[[row, k]] = mixed[[j, k]] * scale;
                    }
                }
            }
        }

        // Threshold from the target feasible volume: under uniform sampling
        // the average thickness mean is a weighted mean of independent
        // uniforms, so its upper quantile follows from the normal
        // approximation. Rows bind on per-feature means clustered around
        // it, which only tightens the target.
        let t_var: f64 = mean_weights.iter().map(|w| w * w).sum::<f64>() / 12.0;
        let threshold = 0.5 + normal_upper_quantile(config.feasible_fraction) * t_var.sqrt();
        if threshold >= 0.99 {
            return Err(Error::Config(format!(
                "feasible fraction {} puts the thickness threshold at {threshold:.3}, \
                 too close to the box edge; use more panels or a larger fraction",
                config.feasible_fraction
            )));
        }

        // Bias calibration: with slope row sums m_j = (output_map *
        // feature_slope)_j and ripple bound wiggle * m_j, every design whose
        // per-feature thickness means all reach the threshold satisfies
        // output j regardless of ripple values.
        let slope_rows = output_map.dot(&feature_slope);
        let bias = slope_rows.mapv(|m| -m * (1.0 - threshold + wiggle));

        let mut groups = Vec::with_capacity(config.loadcases * config.discipline_blocks);
        let base = per_case / config.discipline_blocks;
        let extra = per_case % config.discipline_blocks;
        for case in 0..config.loadcases {
            let mut start = case * per_case;
            for b in 0..config.discipline_blocks {
                let size = base + usize::from(b < extra);
                groups.push((start..start + size).collect());
                start += size;
            }
        }

        let mut anchor = Vec::with_capacity(d);
        for _ in 0..panels {
            anchor.extend(std::iter::repeat(0.0).take(PARAMS_PER_PANEL));
            anchor.push(THICKNESS_MAX);
        }

        Ok(Self {
            config,
            bounds,
            feature_weights,
            mean_weights,
            panel_areas,
            feature_slope,
            ripples,
            output_map,
            bias,
            threshold,
            groups,
            anchor,
            filter_fn: Box::new(panel_norms_ok),
        })
    }

    pub fn config(&self) -> &SyntheticTailoringConfig {
        &self.config
    }

    /// Thickness threshold: designs whose per-feature thickness means all
    /// reach it are feasible regardless of the lamination parameters.
    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    /// A feasible design: zero lamination parameters, maximum thickness.
    pub fn anchor(&self) -> &[f64] {
        &self.anchor
    }

    /// Normalized thickness of every panel of `x`, each in `[0, 1]`.
    fn normalized_thickness(&self, x: &[f64]) -> Vec<f64> {
        let span = THICKNESS_MAX - THICKNESS_MIN;
        x.chunks_exact(VARS_PER_PANEL)
            .map(|panel| (panel[PARAMS_PER_PANEL] - THICKNESS_MIN) / span)
            .collect()
    }

    /// Average-weighted mean normalized thickness of `x`.
    pub fn mean_thickness(&self, x: &[f64]) -> f64 {
        self.normalized_thickness(x)
            .iter()
            .zip(&self.mean_weights)
            .map(|(t, w)| w * t)
            .sum()
    }

    fn shifted_normalized(&self, x: &[f64]) -> Array1<f64> {
        let lower = self.bounds.lower();
        let upper = self.bounds.upper();
        Array1::from_iter(
            x.iter()
                .enumerate()
                .map(|(i, &v)| (v - lower[i]) / (upper[i] - lower[i]) - 0.5),
        )
    }
}

impl Problem for SyntheticTailoring {
    fn name(&self) -> &str {
        "synthetic_tailoring"
    }

    fn dim(&self) -> usize {
        self.config.panels * VARS_PER_PANEL
    }

    fn bounds(&self) -> &BoundsSpec {
        &self.bounds
    }

    fn constraint_count(&self) -> usize {
        self.config.loadcases * self.config.outputs_per_loadcase
    }

    fn evaluate(&self, x: &[f64]) -> Result<(f64, Array1<f64>)> {
        self.check_input(x)?;
        let shifted = self.shifted_normalized(x);
        let panel_t = self.normalized_thickness(x);
        let features = Array1::from_iter(
            self.feature_slope
                .iter()
                .zip(self.feature_weights.rows())
                .zip(&self.ripples)
                .map(|((&slope, weights), ripple)| {
                    let t: f64 = weights.iter().zip(&panel_t).map(|(w, t)| w * t).sum();
                    slope * (1.0 - t) + ripple.value(&shifted)
                }),
        );
        let c = self.output_map.dot(&features) + &self.bias;
        let objective: f64 = x
            .chunks_exact(VARS_PER_PANEL)
            .zip(&self.panel_areas)
            .map(|(panel, area)| {
                let mass = area * panel[PARAMS_PER_PANEL];
                let imbalance: f64 = panel[..PARAMS_PER_PANEL].iter().map(|v| v * v).sum();
                mass + area * STABILITY_WEIGHT * imbalance
            })
            .sum();
        Ok((objective, c))
    }

    fn filter(&self) -> Option<Filter<'_>> {
        Some(Filter {
            name: "panel-lamination-norm",
            accept: &*self.filter_fn,
        })
    }

    fn ks_groups(&self) -> Option<Vec<Vec<usize>>> {
        Some(self.groups.clone())
    }
}

/// Upper-tail standard normal quantile: returns `z` with `P(Z > z) = p`.
///
/// Rational minimax approximation with relative error below 1.2e-9 across
/// the full range.
pub fn normal_upper_quantile(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "quantile needs p in (0, 1), got {p}");
    -normal_lower_quantile(p)
}

fn normal_lower_quantile(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;

    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -((((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0))
    }
}
