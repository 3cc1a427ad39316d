//! Candidate generation and constrained Thompson sampling batch selection.
//!
//! Candidates are low-discrepancy perturbations of the current center inside
//! a trust region box. Batch selection draws joint posterior realizations of
//! the objective and every constraint surrogate over the candidate set, then
//! picks one candidate per batch slot: the sampled-feasible candidate with
//! the lowest sampled objective when one exists, otherwise the candidate
//! with the smallest total constraint violation.

use ndarray::prelude::*;

use crate::dataset::{Filter, REJECTION_BUDGET};
use crate::error::{Error, Result};
use crate::gp::GpModel;
use crate::latent::LatentProjection;
use crate::{par, rng};

/// Maximum input dimension of the low-discrepancy candidate sampler.
pub const MAX_SAMPLER_DIM: usize = 256;

/// Dimensions perturbed per candidate on average (high-dimensional case).
const PERTURBED_PER_CANDIDATE: f64 = 20.0;

const LABEL_MASK: u64 = 0x6d61;
const LABEL_SOBOL: u64 = 0x7174;
const LABEL_OBJECTIVE: u64 = 0x6f64;
const LABEL_CONSTRAINT: u64 = 0x6364;

/// Default candidate pool size for a `dim`-dimensional problem.
pub fn default_candidate_count(dim: usize) -> usize {
    (200 * dim).clamp(2000, 5000)
}

/// A fixed pool of candidate points in normalized coordinates.
#[derive(Debug, Clone)]
pub struct CandidateSet {
    points: Array2<f64>,
}

impl CandidateSet {
    pub fn from_points(points: Array2<f64>) -> Self {
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn points(&self) -> ArrayView2<'_, f64> {
        self.points.view()
    }
}

/// Draws `count` candidates inside the box `[lower, upper]` by perturbing
/// `center` along a random subset of dimensions.
///
/// Each candidate copies the center, then resamples every dimension in a
/// Bernoulli mask (probability `min(1, 20/d)`, at least one dimension forced)
/// from an Owen-scrambled low-discrepancy sequence stretched over the box.
/// All coordinates here are normalized; when a `filter` is supplied it must
/// accept normalized points too, and rejected proposals are redrawn with a
/// budget of [`REJECTION_BUDGET`] proposals per accepted candidate.
pub fn generate_candidates(
    lower: ArrayView1<'_, f64>,
    upper: ArrayView1<'_, f64>,
    center: ArrayView1<'_, f64>,
    count: usize,
    seed: u64,
    filter: Option<&Filter>,
) -> Result<CandidateSet> {
    let d = center.len();
    if lower.len() != d || upper.len() != d {
        return Err(Error::Config(format!(
            "candidate box dims {}x{} do not match center dim {}",
            lower.len(),
            upper.len(),
            d
        )));
    }
    if d == 0 || count == 0 {
        return Err(Error::Config(
            "candidate generation needs at least one dimension and one point".into(),
        ));
    }
    if d > MAX_SAMPLER_DIM {
        return Err(Error::Config(format!(
            "candidate sampler supports up to {MAX_SAMPLER_DIM} dimensions, got {d}"
        )));
    }
    for i in 0..d {
        if !(lower[i] <= center[i] && center[i] <= upper[i]) {
            return Err(Error::Bounds(format!(
                "center coordinate {i} ({}) lies outside the box [{}, {}]",
                center[i], lower[i], upper[i]
            )));
        }
    }

    let p_perturb = (PERTURBED_PER_CANDIDATE / d as f64).min(1.0);
    let mut mask_rng = rng::chacha(rng::derive(seed, LABEL_MASK));

    // The sampler addresses at most 2^16 points per scramble seed, so long
    // rejection streaks roll over into freshly derived scrambles.
    const SOBOL_BLOCK: u64 = 1 << 16;
    let mut points = Array2::<f64>::zeros((count, d));
    let mut proposal: u64 = 0;
    let mut mask = vec![false; d];
    let mut point = vec![0.0f64; d];
    for row in 0..count {
        let mut accepted = false;
        for _ in 0..REJECTION_BUDGET {
            let mut any = false;
            for m in mask.iter_mut() {
                *m = rand::Rng::gen::<f64>(&mut mask_rng) < p_perturb;
                any |= *m;
            }
            if !any {
                mask[rand::Rng::gen_range(&mut mask_rng, 0..d)] = true;
            }
            let block_seed = rng::derive2(seed, LABEL_SOBOL, proposal / SOBOL_BLOCK) as u32;
            let index = (proposal % SOBOL_BLOCK) as u32;
            for j in 0..d {
                point[j] = if mask[j] {
                    let u = sobol_burley::sample(index, j as u32, block_seed) as f64;
                    lower[j] + u * (upper[j] - lower[j])
                } else {
                    center[j]
                };
            }
            proposal += 1;
            if filter.map_or(true, |f| f.accepts(&point)) {
                points.row_mut(row).assign(&ArrayView1::from(&point[..]));
                accepted = true;
                break;
            }
        }
        if !accepted {
            return Err(Error::RejectionBudget {
                filter: filter.map(|f| f.name.to_string()).unwrap_or_default(),
                budget: REJECTION_BUDGET,
            });
        }
    }
    Ok(CandidateSet::from_points(points))
}

fn total_violation(constraints: ArrayView1<'_, f64>) -> f64 {
    constraints.iter().map(|&v| v.max(0.0)).sum()
}

/// One selection pass over shared posterior realizations.
///
/// `constraints_for_slot(s)` returns the slot's sampled constraint matrix
/// (candidates x outputs). Selected candidates are removed from later slots.
fn select_rows(
    points: ArrayView2<'_, f64>,
    objective_draws: &Array2<f64>,
    mut constraints_for_slot: impl FnMut(usize) -> Result<Array2<f64>>,
    batch: usize,
) -> Result<(Array2<f64>, Vec<usize>)> {
    let m = points.nrows();
    if batch > m {
        return Err(Error::Config(format!(
            "batch size {batch} exceeds candidate count {m}"
        )));
    }
    let mut taken = vec![false; m];
    let mut indices = Vec::with_capacity(batch);
    let mut selected = Array2::<f64>::zeros((batch, points.ncols()));
    for slot in 0..batch {
        let realized = constraints_for_slot(slot)?;
        debug_assert_eq!(realized.nrows(), m);
        let mut best_feasible: Option<(f64, usize)> = None;
        let mut best_infeasible: Option<(f64, f64, usize)> = None;
        for i in 0..m {
            if taken[i] {
                continue;
            }
            let violation = total_violation(realized.row(i));
            let objective = objective_draws[[slot, i]];
            if violation == 0.0 {
                let key = (objective, i);
                if best_feasible.map_or(true, |b| key < b) {
                    best_feasible = Some(key);
                }
            } else {
                let key = (violation, objective, i);
                if best_infeasible.map_or(true, |b| key < b) {
                    best_infeasible = Some(key);
                }
            }
        }
        let pick = match (best_feasible, best_infeasible) {
            (Some((_, i)), _) => i,
            (None, Some((_, _, i))) => i,
            (None, None) => unreachable!("batch <= candidate count"),
        };
        taken[pick] = true;
        indices.push(pick);
        selected.row_mut(slot).assign(&points.row(pick));
    }
    Ok((selected, indices))
}

fn draw_constraints(
    models: &[GpModel],
    points: ArrayView2<'_, f64>,
    batch: usize,
    seed: u64,
) -> Result<Vec<Array2<f64>>> {
    par::map_indexed(models.len(), |j| {
        models[j].sample_posterior(points, batch, rng::derive2(seed, LABEL_CONSTRAINT, j as u64))
    })
    .into_iter()
    .collect()
}

/// Selects a batch with every constraint modeled directly by its own
/// surrogate. Sampled feasibility is checked on the raw realizations.
pub fn thompson_select_full(
    objective: &GpModel,
    constraint_models: &[GpModel],
    candidates: &CandidateSet,
    batch: usize,
    seed: u64,
) -> Result<(Array2<f64>, Vec<usize>)> {
    let points = candidates.points();
    let objective_draws =
        objective.sample_posterior(points, batch, rng::derive(seed, LABEL_OBJECTIVE))?;
    let draws = draw_constraints(constraint_models, points, batch, seed)?;
    let m = candidates.len();
    select_rows(
        points,
        &objective_draws,
        |slot| {
            let mut realized = Array2::<f64>::zeros((m, draws.len()));
            for (j, d) in draws.iter().enumerate() {
                realized.column_mut(j).assign(&d.row(slot));
            }
            Ok(realized)
        },
        batch,
    )
}

/// Selects a batch with constraints modeled in a latent subspace.
///
/// Latent realizations are drawn per latent surrogate, mapped back to the
/// original constraint space through `projection`, and feasibility is
/// checked on the reconstruction.
pub fn thompson_select_latent(
    objective: &GpModel,
    latent_models: &[GpModel],
    projection: &LatentProjection,
    candidates: &CandidateSet,
    batch: usize,
    seed: u64,
) -> Result<(Array2<f64>, Vec<usize>)> {
    if latent_models.len() != projection.g() {
        return Err(Error::Config(format!(
            "{} latent surrogates but projection keeps {} coordinates",
            latent_models.len(),
            projection.g()
        )));
    }
    let points = candidates.points();
    let objective_draws =
        objective.sample_posterior(points, batch, rng::derive(seed, LABEL_OBJECTIVE))?;
    let draws = draw_constraints(latent_models, points, batch, seed)?;
    let m = candidates.len();
    select_rows(
        points,
        &objective_draws,
        |slot| {
            let mut z = Array2::<f64>::zeros((m, draws.len()));
            for (j, d) in draws.iter().enumerate() {
                z.column_mut(j).assign(&d.row(slot));
            }
            projection.reconstruct_rows(z.view())
        },
        batch,
    )
}
