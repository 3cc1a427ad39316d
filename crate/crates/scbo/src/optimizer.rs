//! Trust-region constrained Bayesian optimization loop.
//!
//! One run seeds a Latin hypercube design, then iterates: pick the incumbent
//! center, restrict training data to the trust region box, model the
//! objective and the constraints (directly, in a latent projection of the
//! constraint rows, or through per-group aggregation), select a batch by
//! constrained Thompson sampling over low-discrepancy candidates, evaluate,
//! and resize the region on success or failure. Region collapse triggers a
//! global restart with a fresh design. All randomness is derived from the
//! run seed, so records are reproducible bit for bit.

use std::io::{BufWriter, Write as _};
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use ndarray::prelude::*;
use rand::Rng as _;

use crate::acquisition::{self, CandidateSet};
use crate::dataset::{self, Dataset, Filter, REJECTION_BUDGET};
use crate::error::{Error, Result};
use crate::gp::{self, FitOptions, GpHyperparameters, GpModel};
use crate::latent::{self, LatentProjection, Truncation};
use crate::problems::Problem;
use crate::rng;
use crate::trust_region::{TrustRegionConfig, TrustRegionEvent, TrustRegionState};

const LABEL_DOE: u64 = 0x646f65;
const LABEL_RANDOM: u64 = 0x726e64;
const LABEL_FIT_OBJECTIVE: u64 = 0x666f62;
const LABEL_FIT_CONSTRAINTS: u64 = 0x66636e;
const LABEL_FIT_RETRY: u64 = 0x667274;
const LABEL_CANDIDATES: u64 = 0x636e64;
const LABEL_DRAWS: u64 = 0x647277;
const LABEL_RESEED: u64 = 0x727364;
const LABEL_REPEAT: u64 = 0x727074;

/// How constraints are modeled during the optimization loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// One surrogate per constraint output.
    Full,
    /// Surrogates on linear principal-component coordinates of the outputs.
    Pca,
    /// Surrogates on kernel principal-component coordinates.
    Kpca,
    /// Surrogates on per-group smooth-maximum aggregates.
    Ks,
    /// No modeling: uniform random proposals.
    Random,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Full => "full",
            Method::Pca => "pca",
            Method::Kpca => "kpca",
            Method::Ks => "ks",
            Method::Random => "random",
        }
    }

    pub fn all() -> [Method; 5] {
        [
            Method::Full,
            Method::Pca,
            Method::Kpca,
            Method::Ks,
            Method::Random,
        ]
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "full" => Ok(Method::Full),
            "pca" => Ok(Method::Pca),
            "kpca" => Ok(Method::Kpca),
            "ks" => Ok(Method::Ks),
            "random" => Ok(Method::Random),
            other => Err(Error::Config(format!(
                "unknown method {other}; expected full, pca, kpca, ks, or random"
            ))),
        }
    }
}

/// When the constraint projection is recomputed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProjectionRefit {
    /// Refit on the full archive before every modeling step.
    EveryIteration,
    /// Fit once on the initial design and keep it for the whole run.
    FixedAtDoe,
}

impl FromStr for ProjectionRefit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "every" | "every_iteration" => Ok(ProjectionRefit::EveryIteration),
            "fixed" | "fixed_at_doe" => Ok(ProjectionRefit::FixedAtDoe),
            other => Err(Error::Config(format!(
                "unknown projection refit policy {other}; expected every or fixed"
            ))),
        }
    }
}

/// Width of the latent constraint space for the projection methods.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LatentBudget {
    /// Keep exactly this many components (clamped to what the data offers).
    Count(usize),
    /// Keep components with eigenvalue above this fraction of the largest.
    Tolerance(f64),
}

impl Default for LatentBudget {
    fn default() -> Self {
        LatentBudget::Tolerance(latent::DEFAULT_EIGENVALUE_TOLERANCE)
    }
}

#[derive(Debug, Clone)]
pub struct OptimizerConfig {
    pub method: Method,
    /// Initial space-filling design size (counts against the budget).
    pub doe_size: usize,
    /// Points selected and evaluated per iteration.
    pub batch_size: usize,
    /// Total problem evaluations, initial design included.
    pub budget: usize,
    pub latent_budget: LatentBudget,
    pub projection_refit: ProjectionRefit,
    /// Aggregation sharpness for [`Method::Ks`].
    pub ks_rho: f64,
    /// Overrides the problem's own constraint grouping when set.
    pub ks_groups: Option<Vec<Vec<usize>>>,
    /// Gaussian kernel width for [`Method::Kpca`], as a multiple of the
    /// median pairwise row distance. The default widens the kernel well past
    /// the median heuristic because reconstruction back to constraint space
    /// loses sign accuracy on out-of-sample rows when the kernel is narrow.
    pub kpca_width_scale: f64,
    pub seed: u64,
    /// Candidate pool size; defaults to a dimension-scaled value.
    pub candidate_count: Option<usize>,
    /// Trust region schedule; defaults to the standard one for (dim, batch).
    pub trust_region: Option<TrustRegionConfig>,
    /// Cap on surrogate training points per iteration (most recent kept).
    pub max_fit_points: Option<usize>,
}

impl OptimizerConfig {
    pub fn new(method: Method, doe_size: usize, batch_size: usize, budget: usize) -> Self {
        Self {
            method,
            doe_size,
            batch_size,
            budget,
            latent_budget: LatentBudget::default(),
            projection_refit: ProjectionRefit::EveryIteration,
            ks_rho: 100.0,
            ks_groups: None,
            kpca_width_scale: 4.0,
            seed: 0,
            candidate_count: None,
            trust_region: None,
            max_fit_points: None,
        }
    }

    fn validate(&self, problem: &dyn Problem) -> Result<()> {
        if self.doe_size < 2 {
            return Err(Error::Config(format!(
                "initial design needs at least 2 points, got {}",
                self.doe_size
            )));
        }
        if self.budget < self.doe_size {
            return Err(Error::Config(format!(
                "budget {} is smaller than the initial design {}",
                self.budget, self.doe_size
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if self.method == Method::Ks && !(self.ks_rho > 0.0) {
            return Err(Error::Config(format!(
                "aggregation sharpness must be positive, got {}",
                self.ks_rho
            )));
        }
        if self.method == Method::Kpca && !(self.kpca_width_scale > 0.0) {
            return Err(Error::Config(format!(
                "kernel width scale must be positive, got {}",
                self.kpca_width_scale
            )));
        }
        if let LatentBudget::Count(g) = self.latent_budget {
            if g == 0 {
                return Err(Error::Config("latent width must be at least 1".into()));
            }
        }
        if let LatentBudget::Tolerance(t) = self.latent_budget {
            if !(t > 0.0 && t < 1.0) {
                return Err(Error::Config(format!(
                    "eigenvalue tolerance must lie in (0, 1), got {t}"
                )));
            }
        }
        if let Some(groups) = &self.ks_groups {
            validate_groups(groups, problem.constraint_count())?;
        }
        if let Some(n) = self.candidate_count {
            if n < self.batch_size {
                return Err(Error::Config(format!(
                    "candidate pool {n} is smaller than the batch size {}",
                    self.batch_size
                )));
            }
        }
        Ok(())
    }
}

/// One evaluated design in a run's history.
#[derive(Debug, Clone)]
pub struct EvaluationRecord {
    /// 1-based evaluation index.
    pub eval: usize,
    /// Design in problem units (not serialized to CSV).
    pub x: Vec<f64>,
    pub f: f64,
    /// Raw constraint values (not serialized to CSV).
    pub c: Vec<f64>,
    pub feasible: bool,
    /// Best feasible objective so far; NaN until the first feasible design.
    pub incumbent: f64,
    /// Total constraint violation of this design.
    pub violation: f64,
    /// Trust region base length when this design was proposed.
    pub tr_length: f64,
    /// Constraint surrogates in play when this design was proposed
    /// (0 during the initial design, reseeds, and random search).
    pub surrogates: usize,
    /// This evaluation's share of its iteration's wall time, seconds.
    pub iter_time_s: f64,
}

/// Full log of one optimization run.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub method: Method,
    pub seed: u64,
    pub history: Vec<EvaluationRecord>,
    pub best_f: Option<f64>,
    pub best_x: Option<Vec<f64>>,
    pub wall_time_s: f64,
    pub restart_count: usize,
    /// Eigenvalues of the first projection fitted (projection methods only).
    pub initial_spectrum: Option<Vec<f64>>,
    /// Set when the run aborted early; the history holds the partial record.
    pub error: Option<String>,
}

pub const RUN_CSV_HEADER: &str = "eval,f,feasible,incumbent,violation,tr_length,g,iter_time_s";

impl RunRecord {
    pub fn first_feasible_eval(&self) -> Option<usize> {
        self.history.iter().find(|r| r.feasible).map(|r| r.eval)
    }

    /// Writes the per-evaluation history in the standard column layout.
    pub fn to_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut w = BufWriter::new(file);
        writeln!(w, "{RUN_CSV_HEADER}")?;
        for r in &self.history {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                r.eval,
                dataset::format_float(r.f),
                r.feasible,
                dataset::format_float(r.incumbent),
                dataset::format_float(r.violation),
                dataset::format_float(r.tr_length),
                r.surrogates,
                dataset::format_float(r.iter_time_s),
            )?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads back a history CSV. Designs and constraint vectors are not in
    /// the file, so those fields come back empty.
    pub fn history_from_csv(path: &Path) -> Result<Vec<EvaluationRecord>> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
        let mut out = Vec::new();
        for row in reader.records() {
            let row = row?;
            if row.len() != 8 {
                return Err(Error::Config(format!(
                    "run CSV row has {} fields, expected 8",
                    row.len()
                )));
            }
            let field = |i: usize| -> Result<f64> {
                row[i]
                    .parse::<f64>()
                    .map_err(|e| Error::Config(format!("bad float in run CSV: {e}")))
            };
            out.push(EvaluationRecord {
                eval: row[0]
                    .parse()
                    .map_err(|e| Error::Config(format!("bad eval index in run CSV: {e}")))?,
                x: Vec::new(),
                f: field(1)?,
                feasible: row[2].trim() == "true",
                incumbent: field(3)?,
                violation: field(4)?,
                tr_length: field(5)?,
                surrogates: row[6]
                    .parse()
                    .map_err(|e| Error::Config(format!("bad surrogate count in run CSV: {e}")))?,
                iter_time_s: field(7)?,
                c: Vec::new(),
            });
        }
        Ok(out)
    }

    /// Writes the run summary as JSON.
    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "method": self.method.as_str(),
            "seed": self.seed,
            "evaluations": self.history.len(),
            "best_f": self.best_f,
            "best_x": self.best_x,
            "first_feasible_eval": self.first_feasible_eval(),
            "wall_time_s": self.wall_time_s,
            "restart_count": self.restart_count,
            "error": self.error,
        })
    }

    pub fn write_summary(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(BufWriter::new(file), &self.summary_json())?;
        Ok(())
    }
}

fn validate_groups(groups: &[Vec<usize>], constraint_count: usize) -> Result<()> {
    if groups.is_empty() {
        return Err(Error::Config("constraint grouping is empty".into()));
    }
    let mut seen = vec![false; constraint_count];
    for group in groups {
        if group.is_empty() {
            return Err(Error::Config("constraint group is empty".into()));
        }
        for &idx in group {
            if idx >= constraint_count {
                return Err(Error::Config(format!(
                    "constraint group index {idx} out of range (G = {constraint_count})"
                )));
            }
            if seen[idx] {
                return Err(Error::Config(format!(
                    "constraint index {idx} appears in more than one group"
                )));
            }
            seen[idx] = true;
        }
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(Error::Config(format!(
            "constraint index {missing} is not covered by any group"
        )));
    }
    Ok(())
}

/// Smooth conservative maximum of each constraint group.
///
/// Per group returns `max_j c_j + (1/rho) * log(sum_j exp(rho (c_j - max)))`,
/// which lies between the true maximum and the maximum plus `ln(m)/rho`.
pub fn ks_aggregate(c: ArrayView1<'_, f64>, groups: &[Vec<usize>], rho: f64) -> Result<Array1<f64>> {
    if !(rho > 0.0) {
        return Err(Error::Config(format!(
            "aggregation sharpness must be positive, got {rho}"
        )));
    }
    let mut out = Array1::zeros(groups.len());
    for (gi, group) in groups.iter().enumerate() {
        if group.is_empty() {
            return Err(Error::Config("constraint group is empty".into()));
        }
        let mut max = f64::NEG_INFINITY;
        for &idx in group {
            if idx >= c.len() {
                return Err(Error::Config(format!(
                    "constraint group index {idx} out of range (G = {})",
                    c.len()
                )));
            }
            max = max.max(c[idx]);
        }
        let sum: f64 = group.iter().map(|&idx| (rho * (c[idx] - max)).exp()).sum();
        out[gi] = max + sum.ln() / rho;
    }
    Ok(out)
}

fn singleton_groups(constraint_count: usize) -> Vec<Vec<usize>> {
    (0..constraint_count).map(|i| vec![i]).collect()
}

/// Best design in rows `from..`: a feasible row with the lowest objective
/// when one exists, otherwise the row with the smallest total violation.
/// Returns (row index, feasible, key value).
fn incumbent_in(data: &Dataset, from: usize) -> Option<(usize, bool, f64)> {
    if let Some((idx, f)) = data.best_feasible_from(from) {
        return Some((idx, true, f));
    }
    data.min_violation_from(from).map(|(idx, v)| (idx, false, v))
}

fn improved_over(before: Option<(usize, bool, f64)>, after: Option<(usize, bool, f64)>) -> bool {
    match (before, after) {
        (None, Some(_)) => true,
        (Some((_, bf, bv)), Some((_, af, av))) => (af && !bf) || (af == bf && av < bv),
        _ => false,
    }
}

struct FitState {
    objective: Option<GpHyperparameters>,
    constraints: Vec<Option<GpHyperparameters>>,
    width: usize,
}

impl FitState {
    fn new() -> Self {
        Self {
            objective: None,
            constraints: Vec::new(),
            width: 0,
        }
    }

    fn reset(&mut self) {
        self.objective = None;
        self.constraints.clear();
        self.width = 0;
    }

    fn constraint_starts(&mut self, width: usize) -> Option<&[Option<GpHyperparameters>]> {
        if self.width != width {
            self.constraints = vec![None; width];
            self.width = width;
            None
        } else {
            Some(&self.constraints)
        }
    }
}

/// Training recipe for refits inside the loop: start from the previous
/// optimum plus one fresh start instead of the full cold multistart.
fn refit_options(warm: Option<GpHyperparameters>) -> FitOptions {
    FitOptions {
        starts: 2,
        warm_start: warm,
        ..FitOptions::default()
    }
}

fn fit_models(
    x: ArrayView2<'_, f64>,
    f: ArrayView1<'_, f64>,
    targets: ArrayView2<'_, f64>,
    seed_objective: u64,
    seed_constraints: u64,
    state: &mut FitState,
) -> Result<(GpModel, Vec<GpModel>)> {
    let width = targets.ncols();
    let objective_options = refit_options(state.objective.clone());
    let objective = gp::fit_with_options(x, f, seed_objective, &objective_options)
        .or_else(|_| {
            gp::fit_with_options(
                x,
                f,
                rng::derive(seed_objective, LABEL_FIT_RETRY),
                &FitOptions::default(),
            )
        })?;
    let warm = state.constraint_starts(width).map(|w| w.to_vec());
    let options = refit_options(None);
    let constraints = gp::fit_batch(x, targets, seed_constraints, &options, warm.as_deref())
        .or_else(|_| {
            gp::fit_batch(
                x,
                targets,
                rng::derive(seed_constraints, LABEL_FIT_RETRY),
                &FitOptions::default(),
                None,
            )
        })?;
    state.objective = Some(objective.hyper().clone());
    state.constraints = constraints.iter().map(|m| Some(m.hyper().clone())).collect();
    state.width = width;
    Ok((objective, constraints))
}

/// Runs one optimization and returns its full record.
///
/// A problem evaluation error or an unrecoverable surrogate training error
/// stops the loop early; the record then carries the partial history plus
/// the error text. Configuration errors fail fast instead.
pub fn run(problem: &dyn Problem, config: &OptimizerConfig) -> Result<RunRecord> {
    crate::init();
    config.validate(problem)?;

    let d = problem.dim();
    let g_out = problem.constraint_count();
    let bounds = problem.bounds();
    let seed = config.seed;
    let raw_filter = problem.filter();
    let accept_normalized = |z: &[f64]| -> bool {
        match &raw_filter {
            Some(f) => {
                let x = bounds.denormalize(z);
                f.accepts(x.as_slice().expect("contiguous"))
            }
            None => true,
        }
    };
    let normalized_filter = raw_filter.as_ref().map(|f| Filter {
        name: f.name,
        accept: &accept_normalized,
    });

    let groups = match config.method {
        Method::Ks => Some(match &config.ks_groups {
            Some(g) => g.clone(),
            None => match problem.ks_groups() {
                Some(g) => {
                    validate_groups(&g, g_out)?;
                    g
                }
                None => singleton_groups(g_out),
            },
        }),
        _ => None,
    };

    let tr_config = config
        .trust_region
        .clone()
        .unwrap_or_else(|| TrustRegionConfig::for_problem(d, config.batch_size));
    let mut tr = TrustRegionState::new(tr_config)?;

    let started = Instant::now();
    let mut data = Dataset::new(d, g_out);
    let mut record = RunRecord {
        method: config.method,
        seed,
        history: Vec::with_capacity(config.budget),
        best_f: None,
        best_x: None,
        wall_time_s: 0.0,
        restart_count: 0,
        initial_spectrum: None,
        error: None,
    };

    let push_evaluated = |data: &mut Dataset,
                          record: &mut RunRecord,
                          x_problem: &[f64],
                          f: f64,
                          c: Array1<f64>,
                          tr_length: f64,
                          surrogates: usize|
     -> Result<()> {
        let z = bounds.normalize(x_problem)?;
        data.push(z.view(), f, c.view())?;
        let feasible = c.iter().all(|&v| v <= 0.0);
        let violation: f64 = c.iter().map(|v| v.max(0.0)).sum();
        if feasible && record.best_f.map_or(true, |b| f < b) {
            record.best_f = Some(f);
            record.best_x = Some(x_problem.to_vec());
        }
        let incumbent = record.best_f.unwrap_or(f64::NAN);
        record.history.push(EvaluationRecord {
            eval: data.len(),
            x: x_problem.to_vec(),
            f,
            c: c.to_vec(),
            feasible,
            incumbent,
            violation,
            tr_length,
            surrogates,
            iter_time_s: 0.0,
        });
        Ok(())
    };

    let stamp_iteration_time =
        |record: &mut RunRecord, from: usize, elapsed_s: f64| {
            let n = record.history.len().saturating_sub(from);
            if n == 0 {
                return;
            }
            let share = elapsed_s / n as f64;
            for r in &mut record.history[from..] {
                r.iter_time_s = share;
            }
        };

    // Initial design. Evaluation failures abort with the partial record.
    let doe_n = config.doe_size.min(config.budget);
    let doe_t0 = Instant::now();
    let doe = dataset::lhs_sample(bounds, doe_n, rng::derive(seed, LABEL_DOE), raw_filter.as_ref())?;
    for row in doe.rows() {
        let x = row.to_vec();
        match problem.evaluate(&x) {
            Ok((f, c)) => {
                push_evaluated(&mut data, &mut record, &x, f, c, tr.base_length(), 0)?
            }
            Err(e) => {
                record.error = Some(e.to_string());
                break;
            }
        }
    }
    stamp_iteration_time(&mut record, 0, doe_t0.elapsed().as_secs_f64());

    let mut fit_state = FitState::new();
    let mut fixed_projection: Option<LatentProjection> = None;
    let mut last_lengthscales: Option<Array1<f64>> = None;
    let mut epoch_start = 0usize;
    let mut iteration: u64 = 0;

    'outer: while record.error.is_none() && data.len() < config.budget {
        iteration += 1;
        let iter_t0 = Instant::now();
        let history_mark = record.history.len();
        let batch = config.batch_size.min(config.budget - data.len());

        if config.method == Method::Random {
            let mut draw = rng::chacha(rng::derive2(seed, LABEL_RANDOM, iteration));
            for _ in 0..batch {
                let mut accepted = None;
                for _ in 0..REJECTION_BUDGET {
                    let z: Vec<f64> = (0..d).map(|_| draw.gen::<f64>()).collect();
                    if accept_normalized(&z) {
                        accepted = Some(z);
                        break;
                    }
                }
                let Some(z) = accepted else {
                    record.error = Some(
                        Error::RejectionBudget {
                            filter: raw_filter.as_ref().map(|f| f.name.to_string()).unwrap_or_default(),
                            budget: REJECTION_BUDGET,
                        }
                        .to_string(),
                    );
                    break 'outer;
                };
                let x = bounds.denormalize(&z).to_vec();
                match problem.evaluate(&x) {
                    Ok((f, c)) => {
                        push_evaluated(&mut data, &mut record, &x, f, c, tr.base_length(), 0)?
                    }
                    Err(e) => {
                        record.error = Some(e.to_string());
                        break 'outer;
                    }
                }
            }
            stamp_iteration_time(&mut record, history_mark, iter_t0.elapsed().as_secs_f64());
            continue;
        }

        // Center and trust region box. Lengthscales come from the previous
        // objective surrogate; the first iteration after a (re)start uses an
        // isotropic box.
        let before = incumbent_in(&data, epoch_start);
        let center_idx = before.expect("data non-empty").0;
        let center = data.x().row(center_idx).to_owned();
        let lengthscales = last_lengthscales
            .clone()
            .unwrap_or_else(|| Array1::ones(d));
        let (lo, hi) = tr.bounds(center.view(), lengthscales.view())?;

        // Training subset: epoch points inside the box, all epoch points as
        // a fallback, newest-first cap on top.
        let archive_x = data.x();
        let mut rows: Vec<usize> = (epoch_start..data.len())
            .filter(|&i| {
                let x = archive_x.row(i);
                (0..d).all(|j| x[j] >= lo[j] && x[j] <= hi[j])
            })
            .collect();
        if rows.len() < d + 2 {
            rows = (epoch_start..data.len()).collect();
        }
        if let Some(cap) = config.max_fit_points {
            if rows.len() > cap {
                let keep_from = rows.len() - cap;
                let kept: Vec<usize> = rows[keep_from..].to_vec();
                rows = if kept.contains(&center_idx) {
                    kept
                } else {
                    let mut with_center = vec![center_idx];
                    with_center.extend(kept.into_iter().skip(1));
                    with_center
                };
            }
        }
        let n_fit = rows.len();
        let mut fit_x = Array2::zeros((n_fit, d));
        let mut fit_f = Array1::zeros(n_fit);
        for (k, &i) in rows.iter().enumerate() {
            fit_x.row_mut(k).assign(&data.x().row(i));
            fit_f[k] = data.f()[i];
        }

        // Constraint targets under the active method.
        let mut projection: Option<LatentProjection> = None;
        let targets: Array2<f64> = match config.method {
            Method::Full => {
                let mut t = Array2::zeros((n_fit, g_out));
                for (k, &i) in rows.iter().enumerate() {
                    t.row_mut(k).assign(&data.c().row(i));
                }
                t
            }
            Method::Ks => {
                let groups = groups.as_ref().expect("groups prepared for KS");
                let mut t = Array2::zeros((n_fit, groups.len()));
                for (k, &i) in rows.iter().enumerate() {
                    let agg = ks_aggregate(data.c().row(i), groups, config.ks_rho)?;
                    t.row_mut(k).assign(&agg);
                }
                t
            }
            Method::Pca | Method::Kpca => {
                let proj = match (config.projection_refit, &fixed_projection) {
                    (ProjectionRefit::FixedAtDoe, Some(p)) => p.clone(),
                    _ => {
                        let p = fit_projection(
                            config.method,
                            data.c(),
                            config.latent_budget,
                            config.kpca_width_scale,
                        )?;
                        if config.projection_refit == ProjectionRefit::FixedAtDoe {
                            fixed_projection = Some(p.clone());
                        }
                        p
                    }
                };
                if record.initial_spectrum.is_none() {
                    record.initial_spectrum = Some(proj.eigenvalues().to_vec());
                }
                let mut c_rows = Array2::zeros((n_fit, g_out));
                for (k, &i) in rows.iter().enumerate() {
                    c_rows.row_mut(k).assign(&data.c().row(i));
                }
                let t = proj.project_rows(c_rows.view())?;
                projection = Some(proj);
                t
            }
            Method::Random => unreachable!("handled above"),
        };

        let width = targets.ncols();
        let fit = fit_models(
            fit_x.view(),
            fit_f.view(),
            targets.view(),
            rng::derive2(seed, LABEL_FIT_OBJECTIVE, iteration),
            rng::derive2(seed, LABEL_FIT_CONSTRAINTS, iteration),
            &mut fit_state,
        );
        let (objective, constraints) = match fit {
            Ok(models) => models,
            Err(e) => {
                record.error = Some(e.to_string());
                break;
            }
        };
        last_lengthscales = Some(objective.hyper().lengthscales.clone());

        // Candidates and batch selection.
        let n_c = config
            .candidate_count
            .unwrap_or_else(|| acquisition::default_candidate_count(d))
            .max(batch);
        let candidates: CandidateSet = match acquisition::generate_candidates(
            lo.view(),
            hi.view(),
            center.view(),
            n_c,
            rng::derive2(seed, LABEL_CANDIDATES, iteration),
            normalized_filter.as_ref(),
        ) {
            Ok(c) => c,
            Err(e) => {
                record.error = Some(e.to_string());
                break;
            }
        };
        let draw_seed = rng::derive2(seed, LABEL_DRAWS, iteration);
        let selection = match &projection {
            Some(proj) => acquisition::thompson_select_latent(
                &objective,
                &constraints,
                proj,
                &candidates,
                batch,
                draw_seed,
            ),
            None => acquisition::thompson_select_full(
                &objective,
                &constraints,
                &candidates,
                batch,
                draw_seed,
            ),
        };
        let (selected, _) = match selection {
            Ok(s) => s,
            Err(e) => {
                record.error = Some(e.to_string());
                break;
            }
        };

        for row in selected.rows() {
            let x = bounds.denormalize(row.as_slice().expect("contiguous")).to_vec();
            match problem.evaluate(&x) {
                Ok((f, c)) => {
                    push_evaluated(&mut data, &mut record, &x, f, c, tr.base_length(), width)?
                }
                Err(e) => {
                    record.error = Some(e.to_string());
                    break 'outer;
                }
            }
        }

        let after = incumbent_in(&data, epoch_start);
        let event = tr.update(improved_over(before, after));
        if event == TrustRegionEvent::Restarted {
            epoch_start = data.len();
            last_lengthscales = None;
            fit_state.reset();
            record.restart_count = tr.restart_count();
            let reseed_n = config.doe_size.min(config.budget - data.len());
            if reseed_n > 0 {
                let fresh = dataset::lhs_sample(
                    bounds,
                    reseed_n,
                    rng::derive2(seed, LABEL_RESEED, tr.restart_count() as u64),
                    raw_filter.as_ref(),
                )?;
                for row in fresh.rows() {
                    let x = row.to_vec();
                    match problem.evaluate(&x) {
                        Ok((f, c)) => push_evaluated(
                            &mut data,
                            &mut record,
                            &x,
                            f,
                            c,
                            tr.base_length(),
                            0,
                        )?,
                        Err(e) => {
                            record.error = Some(e.to_string());
                            break 'outer;
                        }
                    }
                }
            }
            tr.acknowledge_reseed();
        }
        stamp_iteration_time(&mut record, history_mark, iter_t0.elapsed().as_secs_f64());
    }

    record.wall_time_s = started.elapsed().as_secs_f64();
    Ok(record)
}

fn fit_projection(
    method: Method,
    c: ArrayView2<'_, f64>,
    budget: LatentBudget,
    kpca_width_scale: f64,
) -> Result<LatentProjection> {
    let available = c.nrows().min(c.ncols());
    match method {
        Method::Pca => {
            let truncation = match budget {
                LatentBudget::Count(g) => Truncation::FixedCount(g.min(available).max(1)),
                LatentBudget::Tolerance(t) => Truncation::EigenvalueTolerance(t),
            };
            latent::pca_fit(c, truncation)
        }
        Method::Kpca => {
            let width = Some(latent::median_pairwise_distance(c) * kpca_width_scale);
            let g = match budget {
                LatentBudget::Count(g) => g.min(available).max(1),
                LatentBudget::Tolerance(t) => {
                    let probe = latent::kpca_fit(c, available.max(1), width)?;
                    let ev = probe.eigenvalues();
                    let lead = ev[0];
                    ev.iter().filter(|&&v| v > t * lead).count().max(1)
                }
            };
            latent::kpca_fit(c, g, width)
        }
        other => Err(Error::Config(format!(
            "method {} has no latent projection",
            other.as_str()
        ))),
    }
}

/// Mean and sample standard deviation of the incumbent trace across runs.
///
/// Runs that have not yet found a feasible design at some index contribute
/// a default value there: the worst (maximum) objective among all feasible
/// evaluations across the whole run set, or the worst observed objective
/// anywhere when no run found anything feasible.
#[derive(Debug, Clone)]
pub struct Aggregate {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

pub fn aggregate_incumbents(records: &[RunRecord]) -> Aggregate {
    let complete: Vec<&RunRecord> = records.iter().filter(|r| r.error.is_none()).collect();
    let len = complete.iter().map(|r| r.history.len()).max().unwrap_or(0);
    let feasible_worst = complete
        .iter()
        .flat_map(|r| r.history.iter().filter(|e| e.feasible).map(|e| e.f))
        .fold(f64::NEG_INFINITY, f64::max);
    let default = if feasible_worst.is_finite() {
        feasible_worst
    } else {
        complete
            .iter()
            .flat_map(|r| r.history.iter().map(|e| e.f))
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let mut mean = Vec::with_capacity(len);
    let mut std = Vec::with_capacity(len);
    for i in 0..len {
        let values: Vec<f64> = complete
            .iter()
            .map(|r| {
                let v = r
                    .history
                    .get(i)
                    .map(|e| e.incumbent)
                    .unwrap_or(f64::NAN);
                if v.is_nan() {
                    default
                } else {
                    v
                }
            })
            .collect();
        let n = values.len() as f64;
        let m = values.iter().sum::<f64>() / n;
        let s = if values.len() > 1 {
            (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        mean.push(m);
        std.push(s);
    }
    Aggregate { mean, std }
}

pub const AGGREGATE_CSV_HEADER: &str = "eval,mean_incumbent,std_incumbent";

pub fn aggregate_to_csv(aggregate: &Aggregate, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    writeln!(w, "{AGGREGATE_CSV_HEADER}")?;
    for i in 0..aggregate.mean.len() {
        writeln!(
            w,
            "{},{},{}",
            i + 1,
            dataset::format_float(aggregate.mean[i]),
            dataset::format_float(aggregate.std[i]),
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Runs `repeats` independent replicates with seeds derived from
/// `config.seed` and the repeat index.
pub fn run_repeats(
    problem: &dyn Problem,
    config: &OptimizerConfig,
    repeats: usize,
) -> Result<Vec<RunRecord>> {
    if repeats == 0 {
        return Err(Error::Config("repeats must be at least 1".into()));
    }
    crate::par::map_indexed(repeats, |rep| {
        let mut repeat_config = config.clone();
        repeat_config.seed = rng::derive2(config.seed, LABEL_REPEAT, rep as u64);
        run(problem, &repeat_config)
    })
    .into_iter()
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{self, ToyLinear};
    use approx::assert_abs_diff_eq;

    fn toy_config(method: Method, budget: usize) -> OptimizerConfig {
        let mut config = OptimizerConfig::new(method, 10, 1, budget);
        config.seed = 5;
        config.candidate_count = Some(128);
        config
    }

    #[test]
    fn aggregation_of_a_single_group_is_the_identity() {
        let c = array![0.3, -0.2, 1.5];
        let groups = vec![vec![0usize, 1, 2]];
        let out = ks_aggregate(c.view(), &groups, 100.0).unwrap();
        assert_eq!(out.len(), 1);
        let singles = singleton_groups(3);
        let identity = ks_aggregate(c.view(), &singles, 100.0).unwrap();
        assert_eq!(identity, c);
    }

    #[test]
    fn aggregation_of_two_equal_values_adds_the_log_of_two() {
        let c = array![0.7, 0.7];
        let out = ks_aggregate(c.view(), &[vec![0, 1]], 100.0).unwrap();
        assert_abs_diff_eq!(out[0], 0.7 + 2.0f64.ln() / 100.0, epsilon = 1e-12);
    }

    #[test]
    fn aggregation_stays_within_the_smooth_maximum_bounds() {
        let mut rng = crate::rng::chacha(17);
        for _ in 0..200 {
            let m = 1 + rand::Rng::gen_range(&mut rng, 0..12);
            let c = Array1::from_iter(
                (0..m).map(|_| rand::Rng::gen_range(&mut rng, -5.0..5.0)),
            );
            let group: Vec<usize> = (0..m).collect();
            let out = ks_aggregate(c.view(), &[group], 100.0).unwrap();
            let max = c.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert!(out[0] >= max - 1e-9);
            assert!(out[0] <= max + (m as f64).ln() / 100.0 + 1e-9);
        }
    }

    #[test]
    fn invalid_groupings_are_rejected() {
        assert!(ks_aggregate(array![1.0, 2.0].view(), &[vec![]], 100.0).is_err());
        assert!(ks_aggregate(array![1.0, 2.0].view(), &[vec![5]], 100.0).is_err());
        assert!(validate_groups(&[vec![0], vec![0]], 2).is_err());
        assert!(validate_groups(&[vec![0]], 2).is_err());
        assert!(validate_groups(&[vec![0], vec![1]], 2).is_ok());
    }

    #[test]
    fn random_mode_with_budget_equal_to_doe_is_exactly_the_design() {
        let problem = ToyLinear::new();
        let config = toy_config(Method::Random, 10);
        let record = run(&problem, &config).unwrap();
        assert_eq!(record.history.len(), 10);
        assert!(record.history.iter().all(|r| r.surrogates == 0));
        let best_doe = record
            .history
            .iter()
            .filter(|r| r.feasible)
            .map(|r| r.f)
            .fold(f64::INFINITY, f64::min);
        if best_doe.is_finite() {
            assert_eq!(record.best_f, Some(best_doe));
        } else {
            assert_eq!(record.best_f, None);
        }
    }

    #[test]
    fn incumbent_trace_is_non_increasing_after_first_feasible() {
        let problem = ToyLinear::new();
        for method in [Method::Random, Method::Pca, Method::Full] {
            let record = run(&problem, &toy_config(method, 30)).unwrap();
            assert_eq!(record.history.len(), 30, "{method:?}");
            let mut last: Option<f64> = None;
            for r in &record.history {
                if !r.incumbent.is_nan() {
                    if let Some(prev) = last {
                        assert!(r.incumbent <= prev + 1e-15);
                    }
                    last = Some(r.incumbent);
                }
            }
            assert!(last.is_some(), "{method:?} never found a feasible point");
        }
    }

    #[test]
    fn same_seed_reproduces_the_run_exactly() {
        let problem = ToyLinear::new();
        let config = toy_config(Method::Pca, 25);
        let a = run(&problem, &config).unwrap();
        let b = run(&problem, &config).unwrap();
        assert_eq!(a.history.len(), b.history.len());
        for (ra, rb) in a.history.iter().zip(&b.history) {
            assert_eq!(ra.x, rb.x);
            assert_eq!(ra.f, rb.f);
            assert_eq!(ra.incumbent.to_bits(), rb.incumbent.to_bits());
        }
    }

    /// Six constraint outputs that are scaled copies of two independent
    /// ones; the latent route should discover rank 2 and still solve it.
    struct DuplicatedToy {
        bounds: crate::dataset::BoundsSpec,
    }

    impl Problem for DuplicatedToy {
        fn name(&self) -> &str {
            "duplicated_toy"
        }
        fn dim(&self) -> usize {
            2
        }
        fn bounds(&self) -> &crate::dataset::BoundsSpec {
            &self.bounds
        }
        fn constraint_count(&self) -> usize {
            6
        }
        fn evaluate(&self, x: &[f64]) -> Result<(f64, Array1<f64>)> {
            self.check_input(x)?;
            let (a, b) = (-x[0], -x[1]);
            Ok((x[0] + x[1], array![a, b, 2.0 * a, 0.5 * b, 3.0 * a, b]))
        }
    }

    #[test]
    fn latent_mode_discovers_the_constraint_rank_and_still_solves() {
        let problem = DuplicatedToy {
            bounds: crate::dataset::BoundsSpec::from_slices(&[-1.0, -1.0], &[1.0, 1.0]).unwrap(),
        };
        let mut config = toy_config(Method::Pca, 30);
        config.latent_budget = LatentBudget::Tolerance(1e-6);
        let record = run(&problem, &config).unwrap();
        assert!(record.error.is_none());
        let widths: Vec<usize> = record
            .history
            .iter()
            .map(|r| r.surrogates)
            .filter(|&w| w > 0)
            .collect();
        assert!(!widths.is_empty());
        assert!(
            widths.iter().all(|&w| w == 2),
            "expected 2 latent surrogates for a rank-2 constraint matrix, got {widths:?}"
        );
        assert!(record.best_f.is_some());
        let spectrum = record.initial_spectrum.as_ref().unwrap();
        assert!(spectrum.len() >= 2 && spectrum[0] >= spectrum[1]);
    }

    #[test]
    fn aggregation_with_singleton_groups_matches_direct_modeling_exactly() {
        let problem = ToyLinear::new();
        let full = toy_config(Method::Full, 13);
        let mut ks = toy_config(Method::Ks, 13);
        ks.seed = full.seed;
        let a = run(&problem, &full).unwrap();
        let b = run(&problem, &ks).unwrap();
        for (ra, rb) in a.history.iter().zip(&b.history) {
            assert_eq!(ra.x, rb.x);
            assert_eq!(ra.f.to_bits(), rb.f.to_bits());
        }
    }

    #[test]
    fn run_csv_round_trips_every_column() {
        let problem = ToyLinear::new();
        let record = run(&problem, &toy_config(Method::Full, 14)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.csv");
        record.to_csv(&path).unwrap();
        let loaded = RunRecord::history_from_csv(&path).unwrap();
        assert_eq!(loaded.len(), record.history.len());
        for (a, b) in record.history.iter().zip(&loaded) {
            assert_eq!(a.eval, b.eval);
            assert_eq!(a.f.to_bits(), b.f.to_bits());
            assert_eq!(a.feasible, b.feasible);
            assert_eq!(a.incumbent.to_bits(), b.incumbent.to_bits());
            assert_eq!(a.violation.to_bits(), b.violation.to_bits());
            assert_eq!(a.tr_length.to_bits(), b.tr_length.to_bits());
            assert_eq!(a.surrogates, b.surrogates);
            assert_eq!(a.iter_time_s.to_bits(), b.iter_time_s.to_bits());
        }
    }

    #[test]
    fn budget_smaller_than_design_is_rejected() {
        let problem = ToyLinear::new();
        let config = OptimizerConfig::new(Method::Full, 10, 1, 5);
        assert!(run(&problem, &config).is_err());
    }

    #[test]
    fn repeats_use_distinct_seeds_and_aggregate_them() {
        let problem = ToyLinear::new();
        let config = toy_config(Method::Random, 12);
        let records = run_repeats(&problem, &config, 3).unwrap();
        assert_eq!(records.len(), 3);
        assert_ne!(records[0].history[0].x, records[1].history[0].x);
        let agg = aggregate_incumbents(&records);
        assert_eq!(agg.mean.len(), 12);

        let single = aggregate_incumbents(&records[..1]);
        let run0_default_free: Vec<f64> = records[0]
            .history
            .iter()
            .map(|r| r.incumbent)
            .filter(|v| !v.is_nan())
            .collect();
        let tail = &single.mean[12 - run0_default_free.len()..];
        for (a, b) in tail.iter().zip(&run0_default_free) {
            assert_eq!(a, b);
        }
        assert!(single.std.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn aggregate_uses_worst_feasible_objective_before_first_feasible() {
        let mk = |incumbents: Vec<f64>, fs: Vec<f64>, feas: Vec<bool>| RunRecord {
            method: Method::Random,
            seed: 0,
            history: incumbents
                .into_iter()
                .zip(fs)
                .zip(feas)
                .enumerate()
                .map(|(i, ((inc, f), feasible))| EvaluationRecord {
                    eval: i + 1,
                    x: vec![],
                    f,
                    c: vec![],
                    feasible,
                    incumbent: inc,
                    violation: 0.0,
                    tr_length: 0.8,
                    surrogates: 0,
                    iter_time_s: 0.0,
                })
                .collect(),
            best_f: None,
            best_x: None,
            wall_time_s: 0.0,
            restart_count: 0,
            initial_spectrum: None,
            error: None,
        };
        let a = mk(
            vec![f64::NAN, 5.0, 4.0],
            vec![9.0, 5.0, 4.0],
            vec![false, true, true],
        );
        let b = mk(
            vec![f64::NAN, f64::NAN, f64::NAN],
            vec![7.0, 8.0, 6.0],
            vec![false, false, false],
        );
        let agg = aggregate_incumbents(&[a, b]);
        // Worst feasible objective anywhere is 5.0; run B contributes it at
        // every index, run A before its first feasible design.
        assert_abs_diff_eq!(agg.mean[0], 5.0);
        assert_abs_diff_eq!(agg.mean[1], 5.0);
        assert_abs_diff_eq!(agg.mean[2], 4.5);
    }

    #[test]
    fn method_names_parse_case_insensitively() {
        assert_eq!("PCA".parse::<Method>().unwrap(), Method::Pca);
        assert_eq!("full".parse::<Method>().unwrap(), Method::Full);
        assert!("newton".parse::<Method>().is_err());
        assert_eq!(
            "every".parse::<ProjectionRefit>().unwrap(),
            ProjectionRefit::EveryIteration
        );
        assert_eq!(
            "fixed_at_doe".parse::<ProjectionRefit>().unwrap(),
            ProjectionRefit::FixedAtDoe
        );
    }

    #[test]
    fn speed_reducer_smoke_run_finds_feasible_designs() {
        let problem = problems::build("speed_reducer", None).unwrap();
        let mut config = OptimizerConfig::new(Method::Pca, 15, 1, 45);
        config.latent_budget = LatentBudget::Count(4);
        config.projection_refit = ProjectionRefit::FixedAtDoe;
        config.candidate_count = Some(256);
        config.seed = 11;
        let record = run(problem.as_ref(), &config).unwrap();
        assert!(record.error.is_none());
        assert_eq!(record.history.len(), 45);
        assert!(record.best_f.is_some(), "no feasible design in 45 evals");
        assert!(record.initial_spectrum.is_some());
    }
}
