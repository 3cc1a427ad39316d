//! Gaussian-process regression with an anisotropic squared-exponential
//! kernel.
//!
//! One surrogate models one scalar output. The kernel is
//! `k(a, b) = s² · exp(-½ Σ_i ((a_i - b_i) / l_i)²)` with a lengthscale per
//! input dimension plus a signal variance, and a small fixed diagonal jitter
//! standing in for observation noise. Hyperparameters are trained by
//! multi-start projected gradient ascent on the log marginal likelihood in
//! log-parameter space. All solves go through a Cholesky factor of the
//! kernel matrix; nothing forms `K⁻¹y` by explicit inversion.
//!
//! Targets are standardized inside [`fit`] (zero mean, unit variance over
//! the training data) and every public prediction is returned on the
//! original scale.

use ndarray::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg;
use crate::par;
use crate::rng;

/// Lower/upper bounds for lengthscales during training (normalized inputs).
pub const LENGTHSCALE_BOUNDS: (f64, f64) = (0.005, 4.0);
/// Lower/upper bounds for the signal variance during training (standardized
/// targets).
pub const SIGNAL_VARIANCE_BOUNDS: (f64, f64) = (0.05, 20.0);
/// Diagonal jitter ladder: training starts at the first rung and escalates
/// tenfold on factorization failure, giving up past the last rung.
pub const JITTER_LADDER: [f64; 5] = [1e-6, 1e-5, 1e-4, 1e-3, 1e-2];

#[derive(Debug, Clone, PartialEq)]
pub struct GpHyperparameters {
    /// One positive lengthscale per input dimension.
    pub lengthscales: Array1<f64>,
    /// Kernel amplitude `s²`.
    pub signal_variance: f64,
    /// Diagonal term added to the training kernel matrix.
    pub noise_jitter: f64,
}

impl GpHyperparameters {
    pub fn new(lengthscales: Array1<f64>, signal_variance: f64, noise_jitter: f64) -> Self {
        Self {
            lengthscales,
            signal_variance,
            noise_jitter,
        }
    }

    fn validate(&self, dim: usize) -> Result<()> {
        if self.lengthscales.len() != dim {
            return Err(Error::Config(format!(
                "expected {dim} lengthscales, got {}",
                self.lengthscales.len()
            )));
        }
        if self.lengthscales.iter().any(|l| !(*l > 0.0)) || !(self.signal_variance > 0.0) {
            return Err(Error::Config(
                "lengthscales and signal variance must be positive".into(),
            ));
        }
        if !(self.noise_jitter >= 0.0) {
            return Err(Error::Config("noise jitter must be non-negative".into()));
        }
        Ok(())
    }
}

/// Kernel value for a single pair of points.
pub fn kernel_eval(a: ArrayView1<f64>, b: ArrayView1<f64>, hyper: &GpHyperparameters) -> f64 {
    assert_eq!(a.len(), b.len());
    assert_eq!(a.len(), hyper.lengthscales.len());
    let mut q = 0.0;
    for i in 0..a.len() {
        let d = (a[i] - b[i]) / hyper.lengthscales[i];
        q += d * d;
    }
    hyper.signal_variance * (-0.5 * q).exp()
}

/// Scales each column of `x` by the inverse lengthscale.
fn scaled(x: &ArrayView2<f64>, lengthscales: &Array1<f64>) -> Array2<f64> {
    let mut z = x.to_owned();
    for (j, mut col) in z.columns_mut().into_iter().enumerate() {
        col.mapv_inplace(|v| v / lengthscales[j]);
    }
    z
}

/// Symmetric noise-free kernel matrix of the training points.
///
/// Built from one GEMM; only the upper triangle is computed and mirrored, so
/// the result is exactly symmetric with `s²` on the diagonal.
fn kernel_matrix_sym(x: &ArrayView2<f64>, hyper: &GpHyperparameters) -> Array2<f64> {
    let n = x.nrows();
    let z = scaled(x, &hyper.lengthscales);
    let g = linalg::matmul_nt(&z.view(), &z.view());
    let mut k = Array2::<f64>::zeros((n, n));
    let s2 = hyper.signal_variance;
    for i in 0..n {
        k[[i, i]] = s2;
        for j in (i + 1)..n {
            let sq = (g[[i, i]] + g[[j, j]] - 2.0 * g[[i, j]]).max(0.0);
            let v = s2 * (-0.5 * sq).exp();
            k[[i, j]] = v;
            k[[j, i]] = v;
        }
    }
    k
}

/// Cross-kernel matrix `k(a_i, b_j)` (rows: `a`, columns: `b`).
fn kernel_matrix_cross(
    a: &ArrayView2<f64>,
    b: &ArrayView2<f64>,
    hyper: &GpHyperparameters,
) -> Array2<f64> {
    let za = scaled(a, &hyper.lengthscales);
    let zb = scaled(b, &hyper.lengthscales);
    let mut k = linalg::matmul_nt(&za.view(), &zb.view());
    let na: Vec<f64> = za.rows().into_iter().map(|r| r.dot(&r)).collect();
    let nb: Vec<f64> = zb.rows().into_iter().map(|r| r.dot(&r)).collect();
    let s2 = hyper.signal_variance;
    for i in 0..k.nrows() {
        for j in 0..k.ncols() {
            let sq = (na[i] + nb[j] - 2.0 * k[[i, j]]).max(0.0);
            k[[i, j]] = s2 * (-0.5 * sq).exp();
        }
    }
    k
}

/// Log marginal likelihood of `(x, y)` under `hyper`, with its gradient.
///
/// Returns `(value, gradient)` where the gradient is taken with respect to
/// the raw parameters in the order `l_1, …, l_D, s²` (the jitter is treated
/// as fixed). The value is
/// `-½ yᵀK⁻¹y - ½ log|K| - (N/2) log 2π` with `K = K_sig + jitter·I`.
pub fn log_marginal_likelihood(
    hyper: &GpHyperparameters,
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
) -> Result<(f64, Array1<f64>)> {
    hyper.validate(x.ncols())?;
    let n = x.nrows();
    assert_eq!(n, y.len(), "x and y row counts differ");
    assert!(n > 0, "need at least one observation");
    let k_sig = kernel_matrix_sym(&x, hyper);
    let l = linalg::cholesky_lower(&k_sig.view(), hyper.noise_jitter).map_err(|_| {
        Error::Factorization {
            context: "kernel matrix",
            order: n,
            reg: hyper.noise_jitter,
        }
    })?;
    let mut yc = y.to_owned().insert_axis(Axis(1));
    linalg::solve_lower_inplace(&l.view(), &mut yc, false);
    let half_quad: f64 = 0.5 * yc.iter().map(|v| v * v).sum::<f64>();
    linalg::solve_lower_inplace(&l.view(), &mut yc, true);
    let alpha = yc.remove_axis(Axis(1));
    let log_det_half: f64 = (0..n).map(|i| l[[i, i]].ln()).sum();
    let value = -half_quad - log_det_half - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();

    // Gradient: ½ tr((ααᵀ - K⁻¹) ∂K/∂θ). With W = (ααᵀ - K⁻¹) ∘ K_sig the
    // s² component is Σ W / (2 s²) and each lengthscale component reduces to
    // row sums of W against squared coordinate differences, which expands
    // into one GEMM instead of a loop over dimensions.
    let kinv = linalg::inverse_from_cholesky(&l.view());
    let mut w = k_sig;
    for i in 0..n {
        for j in 0..n {
            w[[i, j]] *= alpha[i] * alpha[j] - kinv[[i, j]];
        }
    }
    let d = x.ncols();
    let mut grad = Array1::<f64>::zeros(d + 1);
    grad[d] = w.sum() / (2.0 * hyper.signal_variance);
    let row_sums: Array1<f64> = w.sum_axis(Axis(1));
    let u = linalg::matmul(&w.view(), &x);
    for i in 0..d {
        let mut t = 0.0;
        for a in 0..n {
            let xa = x[[a, i]];
            t += xa * xa * row_sums[a] - xa * u[[a, i]];
        }
        grad[i] = t / hyper.lengthscales[i].powi(3);
    }
    Ok((value, grad))
}

/// Knobs for [`fit`]; `Default` gives the standard training recipe.
#[derive(Debug, Clone)]
pub struct FitOptions {
    /// Number of optimization restarts.
    pub starts: usize,
    /// Gradient-ascent iteration cap per restart.
    pub max_iters: usize,
    /// Convergence threshold on the projected gradient norm (log space).
    pub grad_tol: f64,
    /// Optional previous hyperparameters, inserted as the first restart.
    pub warm_start: Option<GpHyperparameters>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            starts: 4,
            max_iters: 100,
            grad_tol: 1e-5,
            warm_start: None,
        }
    }
}

/// A trained surrogate: hyperparameters plus the factorized training state.
#[derive(Debug, Clone)]
pub struct GpModel {
    hyper: GpHyperparameters,
    train_x: Array2<f64>,
    chol: Array2<f64>,
    alpha: Array1<f64>,
    y_shift: f64,
    y_scale: f64,
}

impl GpModel {
    /// Factorizes a model at the given hyperparameters without training or
    /// target standardization. Fails if `K + jitter·I` is not positive
    /// definite at exactly the given jitter.
    pub fn from_hyperparameters(
        hyper: GpHyperparameters,
        x: ArrayView2<f64>,
        y: ArrayView1<f64>,
    ) -> Result<Self> {
        hyper.validate(x.ncols())?;
        assert_eq!(x.nrows(), y.len());
        let k_sig = kernel_matrix_sym(&x, &hyper);
        let chol =
            linalg::cholesky_lower(&k_sig.view(), hyper.noise_jitter).map_err(|_| Error::Factorization {
                context: "kernel matrix",
                order: x.nrows(),
                reg: hyper.noise_jitter,
            })?;
        let mut yc = y.to_owned().insert_axis(Axis(1));
        linalg::solve_lower_inplace(&chol.view(), &mut yc, false);
        linalg::solve_lower_inplace(&chol.view(), &mut yc, true);
        Ok(Self {
            hyper,
            train_x: x.to_owned(),
            chol,
            alpha: yc.remove_axis(Axis(1)),
            y_shift: 0.0,
            y_scale: 1.0,
        })
    }

    pub fn hyper(&self) -> &GpHyperparameters {
        &self.hyper
    }

    pub fn train_x(&self) -> ArrayView2<'_, f64> {
        self.train_x.view()
    }

    pub fn len(&self) -> usize {
        self.train_x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Shift/scale applied to targets during [`fit`] (`0, 1` when the model
    /// came from [`GpModel::from_hyperparameters`]).
    pub fn standardization(&self) -> (f64, f64) {
        (self.y_shift, self.y_scale)
    }

    /// Posterior mean and variance at each query row, on the original target
    /// scale. Variances are clamped at zero.
    pub fn posterior(&self, queries: ArrayView2<f64>) -> (Array1<f64>, Array1<f64>) {
        assert_eq!(queries.ncols(), self.train_x.ncols());
        let kq = kernel_matrix_cross(&queries, &self.train_x.view(), &self.hyper);
        let mean_std = kq.dot(&self.alpha);
        let mut w = kq.reversed_axes().as_standard_layout().to_owned();
        linalg::solve_lower_inplace(&self.chol.view(), &mut w, false);
        let s2 = self.hyper.signal_variance;
        let mut var = Array1::<f64>::zeros(queries.nrows());
        for (j, col) in w.columns().into_iter().enumerate() {
            let explained: f64 = col.dot(&col);
            var[j] = (s2 - explained).max(0.0) * self.y_scale * self.y_scale;
        }
        let mean = mean_std.mapv(|v| self.y_shift + self.y_scale * v);
        (mean, var)
    }

    /// Joint posterior draws at the query rows, on the original target scale.
    ///
    /// Returns a `count × M` matrix whose rows are independent realizations
    /// of the posterior at the `M` query points (exact finite-dimensional
    /// sampling through the factorized posterior covariance). The covariance
    /// factorization escalates a relative diagonal nugget on failure and
    /// errors out past `1e-3 · s²`.
    pub fn sample_posterior(
        &self,
        queries: ArrayView2<f64>,
        count: usize,
        seed: u64,
    ) -> Result<Array2<f64>> {
        assert_eq!(queries.ncols(), self.train_x.ncols());
        let m = queries.nrows();
        let kq = kernel_matrix_cross(&queries, &self.train_x.view(), &self.hyper);
        let mean_std = kq.dot(&self.alpha);
        let mut w = kq.reversed_axes().as_standard_layout().to_owned();
        linalg::solve_lower_inplace(&self.chol.view(), &mut w, false);
        let mut cov = kernel_matrix_sym(&queries, &self.hyper);
        let wtw = linalg::matmul_tn(&w.view(), &w.view());
        cov -= &wtw;
        for i in 0..m {
            for j in (i + 1)..m {
                let v = 0.5 * (cov[[i, j]] + cov[[j, i]]);
                cov[[i, j]] = v;
                cov[[j, i]] = v;
            }
        }
        let s2 = self.hyper.signal_variance;
        let mut factor = None;
        for rel in [0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4, 1e-3] {
            if let Ok(l) = linalg::cholesky_lower(&cov.view(), rel * s2) {
                factor = Some(l);
                break;
            }
        }
        let factor = factor.ok_or(Error::Factorization {
            context: "posterior covariance",
            order: m,
            reg: 1e-3 * s2,
        })?;
        let mut rng = rng::chacha(seed);
        let mut z = Array2::<f64>::zeros((count, m));
        for v in z.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        // draws = mean + (L z_i); batched as Z Lᵀ.
        let mut draws = linalg::matmul_nt(&z.view(), &factor.view());
        for mut row in draws.rows_mut() {
            row += &mean_std;
        }
        draws.mapv_inplace(|v| self.y_shift + self.y_scale * v);
        Ok(draws)
    }
}

const LOG_STEP_MIN: f64 = 1e-12;
const ARMIJO_C1: f64 = 1e-4;

struct FitProblem<'a> {
    x: ArrayView2<'a, f64>,
    y_std: Array1<f64>,
    jitter: f64,
    lb: Array1<f64>,
    ub: Array1<f64>,
}

impl FitProblem<'_> {
    fn hyper_at(&self, p: &Array1<f64>) -> GpHyperparameters {
        let d = self.x.ncols();
        GpHyperparameters {
            lengthscales: p.slice(s![..d]).mapv(f64::exp),
            signal_variance: p[d].exp(),
            noise_jitter: self.jitter,
        }
    }

    fn value_grad(&self, p: &Array1<f64>) -> Option<(f64, Array1<f64>)> {
        let hyper = self.hyper_at(p);
        let (value, grad_raw) = log_marginal_likelihood(&hyper, self.x, self.y_std.view()).ok()?;
        // Chain rule into log space: ∂/∂log θ = θ ∂/∂θ.
        let d = self.x.ncols();
        let mut grad = grad_raw;
        for i in 0..d {
            grad[i] *= hyper.lengthscales[i];
        }
        grad[d] *= hyper.signal_variance;
        Some((value, grad))
    }

    fn value(&self, p: &Array1<f64>) -> Option<f64> {
        let hyper = self.hyper_at(p);
        let k_sig = kernel_matrix_sym(&self.x, &hyper);
        let l = linalg::cholesky_lower(&k_sig.view(), self.jitter).ok()?;
        let n = self.x.nrows();
        let mut yc = self.y_std.clone().insert_axis(Axis(1));
        linalg::solve_lower_inplace(&l.view(), &mut yc, false);
        let half_quad: f64 = 0.5 * yc.iter().map(|v| v * v).sum::<f64>();
        let log_det_half: f64 = (0..n).map(|i| l[[i, i]].ln()).sum();
        Some(-half_quad - log_det_half - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln())
    }

    fn clamp(&self, p: &mut Array1<f64>) {
        for i in 0..p.len() {
            p[i] = p[i].clamp(self.lb[i], self.ub[i]);
        }
    }

    fn projected_grad_norm(&self, p: &Array1<f64>, g: &Array1<f64>) -> f64 {
        let mut acc = 0.0;
        for i in 0..p.len() {
            let pinned_hi = p[i] >= self.ub[i] - 1e-15 && g[i] > 0.0;
            let pinned_lo = p[i] <= self.lb[i] + 1e-15 && g[i] < 0.0;
            if !pinned_hi && !pinned_lo {
                acc += g[i] * g[i];
            }
        }
        acc.sqrt()
    }

    /// Projected gradient ascent with backtracking line search from `p0`.
    fn ascend(&self, mut p: Array1<f64>, max_iters: usize, grad_tol: f64) -> Option<(f64, Array1<f64>)> {
        self.clamp(&mut p);
        let (mut value, mut grad) = self.value_grad(&p)?;
        let mut step = 0.5;
        for _ in 0..max_iters {
            let gn = self.projected_grad_norm(&p, &grad);
            if gn < grad_tol {
                break;
            }
            let dir = grad.mapv(|g| g / gn);
            let mut accepted = false;
            while step >= LOG_STEP_MIN {
                let mut trial = &p + &(&dir * step);
                self.clamp(&mut trial);
                let moved: f64 = (&trial - &p).mapv(f64::abs).sum();
                if moved > 0.0 {
                    if let Some(tv) = self.value(&trial) {
                        let slope: f64 = dir.dot(&(&trial - &p));
                        if tv > value + ARMIJO_C1 * slope.max(0.0) && tv > value {
                            let improvement = tv - value;
                            p = trial;
                            let refreshed = self.value_grad(&p)?;
                            value = refreshed.0;
                            grad = refreshed.1;
                            step = (step * 1.5).min(2.0);
                            accepted = true;
                            if improvement < 1e-10 * (1.0 + value.abs()) {
                                return Some((value, p));
                            }
                            break;
                        }
                    }
                }
                step *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        Some((value, p))
    }
}

/// Trains a surrogate on `(x, y)` with the default recipe. See
/// [`fit_with_options`].
pub fn fit(x: ArrayView2<f64>, y: ArrayView1<f64>, seed: u64) -> Result<GpModel> {
    fit_with_options(x, y, seed, &FitOptions::default())
}

/// Trains a surrogate on `(x, y)`.
///
/// Targets are standardized internally. Restart initial points are derived
/// from `seed` only (not from the data), so identical inputs always produce
/// identical models. The kernel-matrix jitter starts at the first rung of
/// [`JITTER_LADDER`] and escalates on factorization failure; if the last
/// rung still fails for every restart the training errors out.
pub fn fit_with_options(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    seed: u64,
    options: &FitOptions,
) -> Result<GpModel> {
    let n = x.nrows();
    let d = x.ncols();
    if n < 2 {
        return Err(Error::Training(format!("need at least 2 observations, got {n}")));
    }
    assert_eq!(n, y.len(), "x and y row counts differ");
    if options.starts == 0 {
        return Err(Error::Config("fit requires at least one restart".into()));
    }

    let y_shift = y.sum() / n as f64;
    let var: f64 = y.iter().map(|v| (v - y_shift).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    let y_scale = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
    let y_std = y.mapv(|v| (v - y_shift) / y_scale);

    let lb = Array1::from_iter(
        std::iter::repeat(LENGTHSCALE_BOUNDS.0.ln())
            .take(d)
            .chain(std::iter::once(SIGNAL_VARIANCE_BOUNDS.0.ln())),
    );
    let ub = Array1::from_iter(
        std::iter::repeat(LENGTHSCALE_BOUNDS.1.ln())
            .take(d)
            .chain(std::iter::once(SIGNAL_VARIANCE_BOUNDS.1.ln())),
    );

    let mut starts: Vec<Array1<f64>> = Vec::with_capacity(options.starts);
    if let Some(h) = &options.warm_start {
        if h.lengthscales.len() == d {
            let mut p = Array1::zeros(d + 1);
            for i in 0..d {
                p[i] = h.lengthscales[i].max(1e-300).ln();
            }
            p[d] = h.signal_variance.max(1e-300).ln();
            starts.push(p);
        }
    }
    if starts.len() < options.starts {
        // Prior center: mid-range lengthscales, unit variance.
        let mut p = Array1::zeros(d + 1);
        p.slice_mut(s![..d]).fill(0.5f64.ln());
        p[d] = 0.0;
        starts.push(p);
    }
    let mut start_rng = rng::chacha(rng::derive(seed, 0x6670));
    while starts.len() < options.starts {
        let mut p = Array1::zeros(d + 1);
        for i in 0..d {
            let u: f64 = start_rng.gen();
            p[i] = 0.05f64.ln() + u * (2.0f64.ln() - 0.05f64.ln());
        }
        let u: f64 = start_rng.gen();
        p[d] = 0.1f64.ln() + u * (10.0f64.ln() - 0.1f64.ln());
        starts.push(p);
    }

    for &jitter in JITTER_LADDER.iter() {
        let problem = FitProblem {
            x,
            y_std: y_std.clone(),
            jitter,
            lb: lb.clone(),
            ub: ub.clone(),
        };
        let mut best: Option<(f64, Array1<f64>)> = None;
        let mut any_start_evaluated = false;
        for p0 in &starts {
            match problem.ascend(p0.clone(), options.max_iters, options.grad_tol) {
                Some((value, p)) => {
                    any_start_evaluated = true;
                    if best.as_ref().map_or(true, |(bv, _)| value > *bv) {
                        best = Some((value, p));
                    }
                }
                None => continue,
            }
        }
        if !any_start_evaluated {
            continue; // escalate jitter
        }
        let (_, p) = best.expect("at least one start evaluated");
        let hyper = problem.hyper_at(&p);
        let k_sig = kernel_matrix_sym(&x, &hyper);
        let chol = match linalg::cholesky_lower(&k_sig.view(), jitter) {
            Ok(l) => l,
            Err(_) => continue,
        };
        let mut yc = y_std.clone().insert_axis(Axis(1));
        linalg::solve_lower_inplace(&chol.view(), &mut yc, false);
        linalg::solve_lower_inplace(&chol.view(), &mut yc, true);
        return Ok(GpModel {
            hyper,
            train_x: x.to_owned(),
            chol,
            alpha: yc.remove_axis(Axis(1)),
            y_shift,
            y_scale,
        });
    }
    Err(Error::Training(format!(
        "kernel matrix not positive definite for any jitter up to {:.0e}",
        JITTER_LADDER.last().unwrap()
    )))
}

/// Trains one surrogate per column of `y_columns`, in parallel when the
/// `parallel` feature is on.
///
/// Every column uses the same restart schedule (derived from `seed` alone),
/// so identical columns produce identical models and the result does not
/// depend on scheduling. `warm_starts`, when given, supplies a per-column
/// warm start.
pub fn fit_batch(
    x: ArrayView2<f64>,
    y_columns: ArrayView2<f64>,
    seed: u64,
    options: &FitOptions,
    warm_starts: Option<&[Option<GpHyperparameters>]>,
) -> Result<Vec<GpModel>> {
    let m = y_columns.ncols();
    assert_eq!(x.nrows(), y_columns.nrows(), "x and y row counts differ");
    if let Some(w) = warm_starts {
        assert_eq!(w.len(), m, "one warm start slot per column");
    }
    let results = par::map_indexed(m, |j| {
        let mut opts = options.clone();
        if let Some(w) = warm_starts {
            opts.warm_start = w[j].clone();
        }
        fit_with_options(x, y_columns.column(j).to_owned().view(), seed, &opts)
    });
    results.into_iter().collect()
}

/// Sequential twin of [`fit_batch`]; output-identical, used as the baseline
/// in the benchmark suite.
pub fn fit_batch_seq(
    x: ArrayView2<f64>,
    y_columns: ArrayView2<f64>,
    seed: u64,
    options: &FitOptions,
    warm_starts: Option<&[Option<GpHyperparameters>]>,
) -> Result<Vec<GpModel>> {
    let m = y_columns.ncols();
    assert_eq!(x.nrows(), y_columns.nrows());
    if let Some(w) = warm_starts {
        assert_eq!(w.len(), m);
    }
    let results = par::map_indexed_seq(m, |j| {
        let mut opts = options.clone();
        if let Some(w) = warm_starts {
            opts.warm_start = w[j].clone();
        }
        fit_with_options(x, y_columns.column(j).to_owned().view(), seed, &opts)
    });
    results.into_iter().collect()
}
