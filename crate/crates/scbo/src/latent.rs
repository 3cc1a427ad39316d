//! Dimensionality reduction of a tall constraint matrix.
//!
//! An `N × G` matrix of constraint observations (one row per evaluated
//! design, one column per constraint output) is compressed to `g ≤ min(N, G)`
//! latent coordinates per row, either linearly (PCA) or through a Gaussian
//! kernel (kernel PCA). Surrogates are then trained per latent coordinate
//! instead of per constraint column, and candidate feasibility is judged
//! after mapping latent vectors back to the original space: a linear
//! basis expansion for PCA, a ridge-regression pre-image for kernel PCA.

use ndarray::prelude::*;

use crate::error::{Error, Result};
use crate::linalg;

/// How many principal directions to keep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Truncation {
    /// Keep exactly this many leading components.
    FixedCount(usize),
    /// Keep every component with `λ_i > tol · λ_1`.
    EigenvalueTolerance(f64),
}

/// Default relative eigenvalue cutoff for [`Truncation::EigenvalueTolerance`].
pub const DEFAULT_EIGENVALUE_TOLERANCE: f64 = 1e-2;

/// Kernel used by [`kpca_fit_with`]. The linear kernel exists mainly as a
/// cross-check: with it, kernel PCA reproduces plain PCA coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KpcaKernel {
    Gaussian,
    Linear,
}

#[derive(Debug, Clone)]
pub struct PcaOptions {
    /// Scale each column to unit variance before the eigendecomposition
    /// (constraint outputs can live on very different unit scales).
    pub standardize_columns: bool,
}

impl Default for PcaOptions {
    fn default() -> Self {
        Self {
            standardize_columns: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct KpcaOptions {
    /// Double-center the kernel matrix (and apply the matching correction to
    /// query kernel vectors). On by default; turning it off reproduces the
    /// raw eigenproblem `Kα = λα`.
    pub center: bool,
    pub standardize_columns: bool,
    pub kernel: KpcaKernel,
    /// Gaussian kernel width σ. `None` selects the median pairwise distance
    /// between rows.
    pub kernel_width: Option<f64>,
}

impl Default for KpcaOptions {
    fn default() -> Self {
        Self {
            center: true,
            standardize_columns: false,
            kernel: KpcaKernel::Gaussian,
            kernel_width: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProjectionKind {
    Pca,
    Kpca,
}

/// A fitted projection between constraint space and the latent space.
///
/// Immutable once fitted; projection and reconstruction are pure.
#[derive(Debug, Clone)]
pub struct LatentProjection {
    kind: ProjectionKind,
    g: usize,
    /// Column means of the training matrix, original units.
    mean: Array1<f64>,
    /// Per-column scale when standardization was requested.
    column_scale: Option<Array1<f64>>,
    /// Retained eigenvalues, descending.
    eigenvalues: Array1<f64>,
    /// PCA: orthonormal `G × g` basis of the (preprocessed) column space.
    basis: Option<Array2<f64>>,
    /// kPCA: preprocessed training rows the kernel is evaluated against.
    train_rows: Option<Array2<f64>>,
    kernel: KpcaKernel,
    kernel_width: f64,
    centered: bool,
    /// kPCA: `N × g` dual coefficients, scaled so `λ_q · ‖α_q‖² = 1`.
    dual_coeffs: Option<Array2<f64>>,
    /// kPCA centering statistics: per-column means of the training kernel
    /// matrix and its grand mean.
    kernel_col_means: Option<Array1<f64>>,
    kernel_grand_mean: f64,
    /// kPCA: `(g+1) × G` ridge map from `[z, 1]` to the original row.
    preimage: Option<Array2<f64>>,
}

/// Ridge regularization for the kernel-PCA pre-image map.
const PREIMAGE_RIDGE: f64 = 1e-6;
/// Eigenvalues at or below this are treated as numerically zero.
const EIGENVALUE_FLOOR: f64 = 1e-12;

fn column_means(c: &ArrayView2<f64>) -> Array1<f64> {
    c.mean_axis(Axis(0)).expect("non-empty matrix")
}

/// Center (and optionally scale) the rows of `c`, returning the
/// preprocessing parameters alongside the transformed matrix.
fn preprocess(
    c: &ArrayView2<f64>,
    standardize: bool,
) -> (Array2<f64>, Array1<f64>, Option<Array1<f64>>) {
    let mean = column_means(c);
    let mut out = c.to_owned();
    for mut row in out.rows_mut() {
        row -= &mean;
    }
    let scale = if standardize {
        let n = c.nrows() as f64;
        let denom = (n - 1.0).max(1.0);
        let mut s = Array1::<f64>::zeros(c.ncols());
        for j in 0..c.ncols() {
            let v: f64 = out.column(j).iter().map(|x| x * x).sum::<f64>() / denom;
            s[j] = if v.sqrt() > 1e-12 { v.sqrt() } else { 1.0 };
        }
        for mut row in out.rows_mut() {
            row /= &s;
        }
        Some(s)
    } else {
        None
    };
    (out, mean, scale)
}

/// Orthonormal completion for eigendirections whose eigenvalue vanished:
/// picks the first standard basis vector with a usable residual after
/// orthogonalizing against the columns already present.
fn complete_basis_column(basis: &mut Array2<f64>, k: usize) {
    let g_dim = basis.nrows();
    for j in 0..g_dim {
        let mut v = Array1::<f64>::zeros(g_dim);
        v[j] = 1.0;
        for prev in 0..k {
            let col = basis.column(prev);
            let proj = col.dot(&v);
            v.scaled_add(-proj, &col);
        }
        let norm = v.dot(&v).sqrt();
        if norm > 1e-6 {
            v /= norm;
            basis.column_mut(k).assign(&v);
            return;
        }
    }
    // Unreachable for k < G, but keep the column zeroed rather than panic.
}

fn resolve_truncation(eigenvalues: &[f64], truncation: Truncation, cap: usize) -> Result<usize> {
    match truncation {
        Truncation::FixedCount(g) => {
            if g == 0 {
                return Err(Error::Config("latent dimension must be at least 1".into()));
            }
            if g > cap {
                return Err(Error::Config(format!(
                    "requested {g} latent components but only {cap} are available"
                )));
            }
            Ok(g)
        }
        Truncation::EigenvalueTolerance(tol) => {
            if !(tol > 0.0) {
                return Err(Error::Config("eigenvalue tolerance must be positive".into()));
            }
            let lead = eigenvalues.first().copied().unwrap_or(0.0);
            let kept = eigenvalues.iter().take(cap).filter(|&&l| l > tol * lead).count();
            Ok(kept.max(1))
        }
    }
}

/// Fits a linear (PCA) projection of the rows of `c`. See [`pca_fit_with`].
pub fn pca_fit(c: ArrayView2<f64>, truncation: Truncation) -> Result<LatentProjection> {
    pca_fit_with(c, truncation, &PcaOptions::default())
}

/// Fits a linear projection: centers columns, eigendecomposes the sample
/// covariance `C̄ᵀC̄/(N−1)`, and keeps the leading eigenpairs.
///
/// When `N < G` the `N × N` Gram matrix is decomposed instead and its
/// eigenvectors mapped back to column space, which has the same retained
/// spectrum at a fraction of the cost.
pub fn pca_fit_with(
    c: ArrayView2<f64>,
    truncation: Truncation,
    options: &PcaOptions,
) -> Result<LatentProjection> {
    let n = c.nrows();
    let g_dim = c.ncols();
    if n < 2 {
        return Err(Error::Config(format!(
            "latent projection needs at least 2 rows, got {n}"
        )));
    }
    let (centered, mean, scale) = preprocess(&c, options.standardize_columns);
    let denom = (n - 1) as f64;
    let cap = n.min(g_dim);

    // Both routes produce the spectrum first, resolve the kept width from
    // it, and only then materialize that many basis columns; zero-eigenvalue
    // directions are expensive to complete and rarely retained.
    let (eigenvalues, basis) = if n < g_dim {
        // Gram route: eigenvectors u of C̄C̄ᵀ map to basis columns C̄ᵀu/√σ.
        let gram = linalg::matmul_nt(&centered.view(), &centered.view());
        let (vals, vecs) = linalg::eigh_ascending(&gram.view())?;
        let mut eigenvalues = Array1::<f64>::zeros(cap);
        for k in 0..cap {
            eigenvalues[k] = vals[n - 1 - k].max(0.0) / denom;
        }
        let g = resolve_truncation(eigenvalues.as_slice().unwrap(), truncation, cap)?;
        let mut basis = Array2::<f64>::zeros((g_dim, g));
        for k in 0..g {
            let src = n - 1 - k;
            let sigma = vals[src].max(0.0);
            if sigma > EIGENVALUE_FLOOR {
                let u = vecs.column(src);
                let v = linalg::matmul_tn(
                    &centered.view(),
                    &u.to_owned().insert_axis(Axis(1)).view(),
                );
                let v = v.remove_axis(Axis(1)) / sigma.sqrt();
                basis.column_mut(k).assign(&v);
            } else {
                complete_basis_column(&mut basis, k);
            }
        }
        (eigenvalues.slice(s![..g]).to_owned(), basis)
    } else {
        let cov = linalg::matmul_tn(&centered.view(), &centered.view()) / denom;
        let (vals, vecs) = linalg::eigh_ascending(&cov.view())?;
        let mut eigenvalues = Array1::<f64>::zeros(cap);
        for k in 0..cap {
            eigenvalues[k] = vals[g_dim - 1 - k].max(0.0);
        }
        let g = resolve_truncation(eigenvalues.as_slice().unwrap(), truncation, cap)?;
        let mut basis = Array2::<f64>::zeros((g_dim, g));
        for k in 0..g {
            basis.column_mut(k).assign(&vecs.column(g_dim - 1 - k));
        }
        (eigenvalues.slice(s![..g]).to_owned(), basis)
    };

    let g = basis.ncols();
    Ok(LatentProjection {
        kind: ProjectionKind::Pca,
        g,
        mean,
        column_scale: scale,
        eigenvalues,
        basis: Some(basis),
        train_rows: None,
        kernel: KpcaKernel::Linear,
        kernel_width: 1.0,
        centered: true,
        dual_coeffs: None,
        kernel_col_means: None,
        kernel_grand_mean: 0.0,
        preimage: None,
    })
}

fn kernel_value(kernel: KpcaKernel, width: f64, a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    match kernel {
        KpcaKernel::Linear => a.dot(&b),
        KpcaKernel::Gaussian => {
            let mut sq = 0.0;
            for (x, y) in a.iter().zip(b.iter()) {
                let d = x - y;
                sq += d * d;
            }
            (-sq / (2.0 * width * width)).exp()
        }
    }
}

/// Median pairwise Euclidean distance between rows (1.0 when degenerate).
pub fn median_pairwise_distance(c: ArrayView2<f64>) -> f64 {
    let n = c.nrows();
    let mut dists = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            let mut sq = 0.0;
            for (a, b) in c.row(i).iter().zip(c.row(j).iter()) {
                let d = a - b;
                sq += d * d;
            }
            dists.push(sq.sqrt());
        }
    }
    if dists.is_empty() {
        return 1.0;
    }
    dists.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
    let med = dists[dists.len() / 2];
    if med > 0.0 {
        med
    } else {
        1.0
    }
}

/// Fits a kernel-PCA projection with the Gaussian kernel and default
/// options. See [`kpca_fit_with`].
pub fn kpca_fit(c: ArrayView2<f64>, g: usize, kernel_width: Option<f64>) -> Result<LatentProjection> {
    let options = KpcaOptions {
        kernel_width,
        ..KpcaOptions::default()
    };
    kpca_fit_with(c, g, &options)
}

/// Fits a kernel-PCA projection.
///
/// Builds the `N × N` kernel matrix over rows, double-centers it (unless
/// disabled), solves the symmetric eigenproblem, and rescales each retained
/// eigenvector by `1/√λ` so the implicit feature-space directions have unit
/// norm. Components whose eigenvalue has collapsed below numerical zero are
/// dropped with a warning (at least one component is always kept; a fully
/// degenerate one projects to zero). Reconstruction goes through a ridge
/// regression from latent coordinates (plus intercept) back to the original
/// rows.
pub fn kpca_fit_with(
    c: ArrayView2<f64>,
    g: usize,
    options: &KpcaOptions,
) -> Result<LatentProjection> {
    let n = c.nrows();
    if n < 2 {
        return Err(Error::Config(format!(
            "latent projection needs at least 2 rows, got {n}"
        )));
    }
    if g == 0 {
        return Err(Error::Config("latent dimension must be at least 1".into()));
    }
    if g > n.min(c.ncols()) {
        return Err(Error::Config(format!(
            "requested {g} latent components but only {} are available",
            n.min(c.ncols())
        )));
    }
    if let Some(w) = options.kernel_width {
        if !(w > 0.0) {
            return Err(Error::Config("kernel width must be positive".into()));
        }
    }

    let mean = column_means(&c);
    let (rows, scale) = if options.standardize_columns {
        let (mut p, _, s) = preprocess(&c, true);
        // Keep rows in standardized units but re-add the (scaled) mean so the
        // kernel sees the same geometry project() will see.
        let s = s.expect("standardization requested");
        for mut row in p.rows_mut() {
            row += &(&mean / &s);
        }
        (p, Some(s))
    } else {
        (c.to_owned(), None)
    };

    let width = match options.kernel {
        KpcaKernel::Gaussian => options
            .kernel_width
            .unwrap_or_else(|| median_pairwise_distance(rows.view())),
        KpcaKernel::Linear => 1.0,
    };

    let mut k = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in i..n {
            let v = kernel_value(options.kernel, width, rows.row(i), rows.row(j));
            k[[i, j]] = v;
            k[[j, i]] = v;
        }
    }
    let col_means = k.mean_axis(Axis(0)).expect("non-empty kernel matrix");
    let grand_mean = col_means.sum() / n as f64;
    let mut kc = k.clone();
    if options.center {
        for i in 0..n {
            for j in 0..n {
                kc[[i, j]] = k[[i, j]] - col_means[i] - col_means[j] + grand_mean;
            }
        }
    }

    let (vals, vecs) = linalg::eigh_ascending(&kc.view())?;
    let usable = (0..n)
        .rev()
        .take(g)
        .filter(|&idx| vals[idx] > EIGENVALUE_FLOOR)
        .count();
    let kept = if usable < g {
        log::warn!(
            "kernel spectrum supports only {usable} of {g} requested latent components"
        );
        usable.max(1)
    } else {
        g
    };

    let mut eigenvalues = Array1::<f64>::zeros(kept);
    let mut dual = Array2::<f64>::zeros((n, kept));
    for q in 0..kept {
        let src = n - 1 - q;
        let lambda = vals[src].max(0.0);
        eigenvalues[q] = lambda;
        if lambda > EIGENVALUE_FLOOR {
            let scaled = vecs.column(src).mapv(|v| v / lambda.sqrt());
            dual.column_mut(q).assign(&scaled);
        }
    }

    let mut proj = LatentProjection {
        kind: ProjectionKind::Kpca,
        g: kept,
        mean,
        column_scale: scale,
        eigenvalues,
        basis: None,
        train_rows: Some(rows),
        kernel: options.kernel,
        kernel_width: width,
        centered: options.center,
        dual_coeffs: Some(dual),
        kernel_col_means: Some(col_means),
        kernel_grand_mean: grand_mean,
        preimage: None,
    };

    // Ridge pre-image: [Z 1] · W ≈ C on the training rows.
    let z = proj.project_rows(c)?;
    let mut design = Array2::<f64>::ones((n, kept + 1));
    design.slice_mut(s![.., ..kept]).assign(&z);
    let mut normal = linalg::matmul_tn(&design.view(), &design.view());
    for i in 0..=kept {
        normal[[i, i]] += PREIMAGE_RIDGE;
    }
    let rhs = linalg::matmul_tn(&design.view(), &c);
    let chol = linalg::cholesky_lower(&normal.view(), 0.0).map_err(|_| Error::Factorization {
        context: "pre-image normal equations",
        order: kept + 1,
        reg: PREIMAGE_RIDGE,
    })?;
    let w = linalg::solve_with_cholesky(&chol.view(), &rhs.view());
    proj.preimage = Some(w);
    Ok(proj)
}

impl LatentProjection {
    pub fn kind(&self) -> ProjectionKind {
        self.kind
    }

    /// Number of latent coordinates.
    pub fn g(&self) -> usize {
        self.g
    }

    /// Retained eigenvalues, descending.
    pub fn eigenvalues(&self) -> ArrayView1<'_, f64> {
        self.eigenvalues.view()
    }

    /// Column means of the training matrix.
    pub fn mean(&self) -> ArrayView1<'_, f64> {
        self.mean.view()
    }

    /// PCA basis (`G × g`), when this is a linear projection.
    pub fn basis(&self) -> Option<ArrayView2<'_, f64>> {
        self.basis.as_ref().map(|b| b.view())
    }

    /// kPCA dual coefficients (`N × g`), when this is a kernel projection.
    pub fn dual_coeffs(&self) -> Option<ArrayView2<'_, f64>> {
        self.dual_coeffs.as_ref().map(|d| d.view())
    }

    pub fn kernel_width(&self) -> f64 {
        self.kernel_width
    }

    /// Retained spectrum as `component,eigenvalue` CSV text.
    pub fn eigenvalue_csv(&self) -> String {
        let mut out = String::from("component,eigenvalue\n");
        for (i, l) in self.eigenvalues.iter().enumerate() {
            out.push_str(&format!("{},{}\n", i + 1, crate::dataset::format_float(*l)));
        }
        out
    }

    fn apply_column_scale(&self, c: &ArrayView1<f64>) -> Array1<f64> {
        match &self.column_scale {
            Some(s) => c.to_owned() / s,
            None => c.to_owned(),
        }
    }

    /// Maps one constraint vector to latent coordinates.
    pub fn project(&self, c: ArrayView1<f64>) -> Result<Array1<f64>> {
        if c.len() != self.mean.len() {
            return Err(Error::Config(format!(
                "expected a length-{} constraint vector, got {}",
                self.mean.len(),
                c.len()
            )));
        }
        match self.kind {
            ProjectionKind::Pca => {
                let basis = self.basis.as_ref().expect("pca basis");
                let mut centered = c.to_owned() - &self.mean;
                if let Some(s) = &self.column_scale {
                    centered /= s;
                }
                Ok(centered.dot(basis))
            }
            ProjectionKind::Kpca => {
                let rows = self.train_rows.as_ref().expect("kpca rows");
                let dual = self.dual_coeffs.as_ref().expect("kpca duals");
                let col_means = self.kernel_col_means.as_ref().expect("kpca stats");
                let q = self.apply_column_scale(&c);
                let n = rows.nrows();
                let mut kvec = Array1::<f64>::zeros(n);
                for i in 0..n {
                    kvec[i] = kernel_value(self.kernel, self.kernel_width, rows.row(i), q.view());
                }
                if self.centered {
                    let kmean = kvec.sum() / n as f64;
                    for i in 0..n {
                        kvec[i] = kvec[i] - col_means[i] - kmean + self.kernel_grand_mean;
                    }
                }
                Ok(kvec.dot(dual))
            }
        }
    }

    /// Maps every row of `c` to latent coordinates (`M × g`).
    pub fn project_rows(&self, c: ArrayView2<f64>) -> Result<Array2<f64>> {
        let mut out = Array2::<f64>::zeros((c.nrows(), self.g));
        for (i, row) in c.rows().into_iter().enumerate() {
            out.row_mut(i).assign(&self.project(row)?);
        }
        Ok(out)
    }

    /// Maps one latent vector back to constraint space.
    pub fn reconstruct(&self, z: ArrayView1<f64>) -> Result<Array1<f64>> {
        let rows = self.reconstruct_rows(z.insert_axis(Axis(0)))?;
        Ok(rows.remove_axis(Axis(0)))
    }

    /// Maps latent rows back to constraint space (`M × G`). For PCA this is
    /// the exact linear inverse on the retained subspace; for kernel PCA it
    /// is the fitted ridge pre-image.
    pub fn reconstruct_rows(&self, z: ArrayView2<f64>) -> Result<Array2<f64>> {
        if z.ncols() != self.g {
            return Err(Error::Config(format!(
                "expected {} latent coordinates, got {}",
                self.g,
                z.ncols()
            )));
        }
        match self.kind {
            ProjectionKind::Pca => {
                let basis = self.basis.as_ref().expect("pca basis");
                let mut out = linalg::matmul_nt(&z, &basis.view());
                if let Some(s) = &self.column_scale {
                    for mut row in out.rows_mut() {
                        row *= s;
                    }
                }
                for mut row in out.rows_mut() {
                    row += &self.mean;
                }
                Ok(out)
            }
            ProjectionKind::Kpca => {
                let w = self.preimage.as_ref().expect("pre-image map");
                let m = z.nrows();
                let mut design = Array2::<f64>::ones((m, self.g + 1));
                design.slice_mut(s![.., ..self.g]).assign(&z);
                Ok(linalg::matmul(&design.view(), &w.view()))
            }
        }
    }

    /// Relative squared-Frobenius reconstruction error of `c_star` through
    /// this projection: `‖C* − Ĉ*‖²_F / ‖C*‖²_F`.
    pub fn subspace_error(&self, c_star: ArrayView2<f64>) -> Result<f64> {
        let norm_sq: f64 = c_star.iter().map(|v| v * v).sum();
        if norm_sq == 0.0 {
            return Err(Error::Config(
                "subspace error is undefined for an all-zero matrix".into(),
            ));
        }
        let z = self.project_rows(c_star)?;
        let rec = self.reconstruct_rows(z.view())?;
        let diff_sq: f64 = c_star
            .iter()
            .zip(rec.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        Ok(diff_sq / norm_sq)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn random_matrix(n: usize, g: usize, seed: u64) -> Array2<f64> {
        let mut r = rng::chacha(seed);
        Array2::from_shape_fn((n, g), |_| r.gen::<f64>() * 2.0 - 1.0)
    }

    fn rank_structured(n: usize, g_dim: usize, rank: usize, seed: u64) -> Array2<f64> {
        let a = random_matrix(n, rank, seed);
        let b = random_matrix(rank, g_dim, seed.wrapping_add(1));
        let mut c = a.dot(&b);
        for mut row in c.rows_mut() {
            row += 0.5;
        }
        c
    }

    #[test]
    fn rank_one_data_has_one_dominant_eigenvalue() {
        let dir = array![1.0, -2.0, 0.5];
        let mut c = Array2::<f64>::zeros((12, 3));
        for i in 0..12 {
            let t = i as f64 * 0.3 - 1.0;
            c.row_mut(i).assign(&(&dir * t));
        }
        let proj = pca_fit(c.view(), Truncation::FixedCount(3)).unwrap();
        let e = proj.eigenvalues();
        assert!(e[1] <= 1e-10 * e[0]);
        assert!(e[2] <= 1e-10 * e[0]);
    }

    #[test]
    fn rank_two_data_reconstructs_exactly_with_two_components() {
        let c = rank_structured(50, 20, 2, 7);
        let proj = pca_fit(c.view(), Truncation::FixedCount(2)).unwrap();
        let err = proj.subspace_error(c.view()).unwrap();
        assert!(err <= 1e-10, "error {err}");
    }

    #[test]
    fn duplicate_columns_get_equal_basis_rows() {
        let mut c = random_matrix(30, 5, 11);
        let dup = c.column(1).to_owned();
        c.column_mut(3).assign(&dup);
        let proj = pca_fit(c.view(), Truncation::FixedCount(3)).unwrap();
        let basis = proj.basis().unwrap();
        for q in 0..3 {
            assert_abs_diff_eq!(basis[[1, q]], basis[[3, q]], epsilon = 1e-8);
        }
    }

    #[test]
    fn projection_centers_the_mean_to_zero() {
        let c = rank_structured(25, 8, 3, 13);
        let proj = pca_fit(c.view(), Truncation::FixedCount(3)).unwrap();
        let z = proj.project(proj.mean()).unwrap();
        for v in z {
            assert_abs_diff_eq!(v, 0.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn projection_inverts_basis_expansion() {
        let c = rank_structured(25, 8, 4, 17);
        let proj = pca_fit(c.view(), Truncation::FixedCount(4)).unwrap();
        let z0 = array![0.3, -1.2, 0.05, 2.0];
        let rec = proj.reconstruct(z0.view()).unwrap();
        let z1 = proj.project(rec.view()).unwrap();
        for (a, b) in z0.iter().zip(z1.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-10);
        }
    }

    #[test]
    fn zero_latent_vector_reconstructs_the_mean() {
        let c = rank_structured(25, 8, 4, 19);
        let proj = pca_fit(c.view(), Truncation::FixedCount(4)).unwrap();
        let rec = proj.reconstruct(Array1::zeros(4).view()).unwrap();
        for (a, b) in rec.iter().zip(proj.mean().iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn full_rank_round_trip_recovers_training_rows() {
        let c = random_matrix(12, 6, 23);
        let proj = pca_fit(c.view(), Truncation::FixedCount(6)).unwrap();
        let z = proj.project_rows(c.view()).unwrap();
        let rec = proj.reconstruct_rows(z.view()).unwrap();
        for (a, b) in c.iter().zip(rec.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-9);
        }
    }

    #[test]
    fn basis_is_orthonormal_and_spectrum_descends() {
        for &(n, g_dim) in &[(10usize, 25usize), (40, 6)] {
            let c = random_matrix(n, g_dim, 29 + n as u64);
            let cap = n.min(g_dim);
            let proj = pca_fit(c.view(), Truncation::FixedCount(cap)).unwrap();
            let basis = proj.basis().unwrap();
            let gram = basis.t().dot(&basis);
            for i in 0..cap {
                for j in 0..cap {
                    let expected = if i == j { 1.0 } else { 0.0 };
                    assert_abs_diff_eq!(gram[[i, j]], expected, epsilon = 1e-8);
                }
            }
            let e = proj.eigenvalues();
            for q in 1..cap {
                assert!(e[q] <= e[q - 1] + 1e-12);
                assert!(e[q] >= -1e-10);
            }
        }
    }

    #[test]
    fn eigenvalue_sum_matches_covariance_trace() {
        let c = random_matrix(30, 12, 31);
        let proj = pca_fit(c.view(), Truncation::FixedCount(12)).unwrap();
        let mean = column_means(&c.view());
        let mut trace = 0.0;
        for j in 0..12 {
            trace += c
                .column(j)
                .iter()
                .map(|v| (v - mean[j]) * (v - mean[j]))
                .sum::<f64>()
                / 29.0;
        }
        let total: f64 = proj.eigenvalues().sum();
        assert_abs_diff_eq!(total / trace, 1.0, epsilon = 1e-8);
    }

    #[test]
    fn training_projections_have_zero_mean_components() {
        let c = random_matrix(28, 9, 37);
        let proj = pca_fit(c.view(), Truncation::FixedCount(5)).unwrap();
        let z = proj.project_rows(c.view()).unwrap();
        for q in 0..5 {
            let m: f64 = z.column(q).sum() / 28.0;
            assert_abs_diff_eq!(m, 0.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn truncation_error_matches_spectral_tail_on_centered_data() {
        let mut c = rank_structured(40, 10, 8, 41);
        let mean = column_means(&c.view());
        for mut row in c.rows_mut() {
            row -= &mean;
        }
        let full = pca_fit(c.view(), Truncation::FixedCount(10)).unwrap();
        let spectrum = full.eigenvalues().to_owned();
        let total: f64 = spectrum.sum();
        for g in 1..=6 {
            let proj = pca_fit(c.view(), Truncation::FixedCount(g)).unwrap();
            let err = proj.subspace_error(c.view()).unwrap();
            let tail: f64 = spectrum.slice(s![g..]).sum();
            assert_abs_diff_eq!(err, tail / total, epsilon = 1e-8);
        }
    }

    #[test]
    fn subspace_error_shrinks_as_components_are_added() {
        let c = rank_structured(35, 15, 10, 43);
        let mut prev = f64::INFINITY;
        for g in 1..=10 {
            let proj = pca_fit(c.view(), Truncation::FixedCount(g)).unwrap();
            let err = proj.subspace_error(c.view()).unwrap();
            assert!(err <= prev + 1e-12, "g={g}: {err} > {prev}");
            prev = err;
        }
    }

    #[test]
    fn tolerance_truncation_keeps_the_dominant_part_of_the_spectrum() {
        let c = rank_structured(40, 12, 3, 47);
        let proj = pca_fit(
            c.view(),
            Truncation::EigenvalueTolerance(DEFAULT_EIGENVALUE_TOLERANCE),
        )
        .unwrap();
        assert!(proj.g() >= 1 && proj.g() <= 4, "kept {}", proj.g());
        let err = proj.subspace_error(c.view()).unwrap();
        assert!(err < 0.05, "error {err}");
    }

    #[test]
    fn oversized_requests_and_tiny_data_are_rejected() {
        let c = random_matrix(5, 3, 53);
        assert!(pca_fit(c.view(), Truncation::FixedCount(4)).is_err());
        let single = random_matrix(1, 3, 59);
        assert!(pca_fit(single.view(), Truncation::FixedCount(1)).is_err());
        assert!(kpca_fit(single.view(), 1, None).is_err());
    }

    #[test]
    fn linear_kernel_reproduces_pca_coordinates_up_to_sign() {
        for &(n, g_dim) in &[(10usize, 5usize), (10, 40), (50, 5), (50, 40)] {
            let c = random_matrix(n, g_dim, 61 + (n + g_dim) as u64);
            let g = 3.min(n.min(g_dim));
            let pca = pca_fit(c.view(), Truncation::FixedCount(g)).unwrap();
            let kp = kpca_fit_with(
                c.view(),
                g,
                &KpcaOptions {
                    kernel: KpcaKernel::Linear,
                    ..KpcaOptions::default()
                },
            )
            .unwrap();
            let zp = pca.project_rows(c.view()).unwrap();
            let zk = kp.project_rows(c.view()).unwrap();
            for q in 0..g {
                let dot: f64 = zp.column(q).dot(&zk.column(q));
                let sign = if dot >= 0.0 { 1.0 } else { -1.0 };
                for i in 0..n {
                    assert_abs_diff_eq!(zp[[i, q]], sign * zk[[i, q]], epsilon = 1e-6);
                }
            }
        }
    }

    #[test]
    fn two_rows_leave_one_usable_kernel_component() {
        let c = array![[0.0, 0.0, 1.0], [1.0, 2.0, -1.0]];
        let proj = kpca_fit(c.view(), 2, None).unwrap();
        assert_eq!(proj.g(), 1);
        assert!(proj.eigenvalues()[0] > 1e-12);
    }

    #[test]
    fn wide_kernels_degenerate_to_linear_projections() {
        let c = rank_structured(30, 10, 4, 67);
        let scale = median_pairwise_distance(c.view());
        let pca = pca_fit(c.view(), Truncation::FixedCount(1)).unwrap();
        let kp = kpca_fit(c.view(), 1, Some(1e6 * scale)).unwrap();
        let zp = pca.project_rows(c.view()).unwrap();
        let zk = kp.project_rows(c.view()).unwrap();
        let mp: f64 = zp.column(0).sum() / 30.0;
        let mk: f64 = zk.column(0).sum() / 30.0;
        let mut num = 0.0;
        let mut dp = 0.0;
        let mut dk = 0.0;
        for i in 0..30 {
            let a = zp[[i, 0]] - mp;
            let b = zk[[i, 0]] - mk;
            num += a * b;
            dp += a * a;
            dk += b * b;
        }
        let corr = num / (dp.sqrt() * dk.sqrt());
        assert!(corr.abs() > 0.99, "correlation {corr}");
    }

    #[test]
    fn kernel_projection_matches_training_coordinates() {
        let c = rank_structured(20, 8, 4, 71);
        let proj = kpca_fit(c.view(), 3, None).unwrap();
        let z = proj.project_rows(c.view()).unwrap();
        // Training coordinates are eigenvector rows scaled by √λ.
        let dual = proj.dual_coeffs().unwrap();
        for q in 0..proj.g() {
            let l = proj.eigenvalues()[q];
            for i in 0..20 {
                assert_abs_diff_eq!(z[[i, q]], l * dual[[i, q]], epsilon = 1e-8);
            }
        }
        // And re-projecting a training row reproduces its coordinate.
        let z0 = proj.project(c.row(4)).unwrap();
        for q in 0..proj.g() {
            assert_abs_diff_eq!(z0[q], z[[4, q]], epsilon = 1e-8);
        }
    }

    #[test]
    fn identical_queries_project_identically_and_smoothly() {
        let c = rank_structured(20, 8, 4, 73);
        let proj = kpca_fit(c.view(), 3, None).unwrap();
        let q = c.row(2).to_owned() + 0.05;
        let a = proj.project(q.view()).unwrap();
        let b = proj.project(q.view()).unwrap();
        assert_eq!(a, b);
        let mut q2 = q.clone();
        q2[0] += 1e-6;
        let c2 = proj.project(q2.view()).unwrap();
        let delta: f64 = (&c2 - &a).iter().map(|v| v.abs()).fold(0.0, f64::max);
        assert!(delta <= 1e-3, "latent shift {delta}");
    }

    #[test]
    fn dual_coefficients_satisfy_the_scaling_convention() {
        let c = rank_structured(18, 7, 5, 79);
        let proj = kpca_fit(c.view(), 4, None).unwrap();
        let dual = proj.dual_coeffs().unwrap();
        for q in 0..proj.g() {
            let norm_sq: f64 = dual.column(q).dot(&dual.column(q));
            assert_abs_diff_eq!(proj.eigenvalues()[q] * norm_sq, 1.0, epsilon = 1e-8);
        }
    }

    #[test]
    fn kernel_preimage_tracks_pca_reconstruction_quality() {
        let c = rank_structured(40, 12, 3, 83);
        let g = 3;
        let pca = pca_fit(c.view(), Truncation::FixedCount(g)).unwrap();
        let kp = kpca_fit(c.view(), g, None).unwrap();
        let pca_err = pca.subspace_error(c.view()).unwrap();
        let kp_err = kp.subspace_error(c.view()).unwrap();
        assert!(
            kp_err <= pca_err + 0.1,
            "kernel pre-image error {kp_err} vs linear {pca_err}"
        );
        // Single-row round trip stays in the same error regime.
        let z = kp.project(c.row(0)).unwrap();
        let rec = kp.reconstruct(z.view()).unwrap();
        let num: f64 = (&rec - &c.row(0)).iter().map(|v| v * v).sum();
        let den: f64 = c.row(0).iter().map(|v| v * v).sum();
        assert!(num / den < 0.2, "row error {}", num / den);
    }

    #[test]
    fn constant_rows_reconstruct_to_that_row() {
        let mut c = Array2::<f64>::zeros((10, 4));
        for mut row in c.rows_mut() {
            row.assign(&array![1.0, -2.0, 0.5, 3.0]);
        }
        let proj = kpca_fit(c.view(), 1, None).unwrap();
        let rec = proj.reconstruct(array![0.7].view()).unwrap();
        for (a, b) in rec.iter().zip(c.row(0).iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-6);
        }
    }

    #[test]
    fn zero_matrix_has_no_subspace_error() {
        let c = rank_structured(10, 4, 2, 89);
        let proj = pca_fit(c.view(), Truncation::FixedCount(2)).unwrap();
        let zeros = Array2::<f64>::zeros((3, 4));
        assert!(proj.subspace_error(zeros.view()).is_err());
    }

    #[test]
    fn spectrum_exports_as_csv() {
        let c = rank_structured(10, 4, 2, 97);
        let proj = pca_fit(c.view(), Truncation::FixedCount(2)).unwrap();
        let csv = proj.eigenvalue_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("component,eigenvalue"));
        assert_eq!(csv.lines().count(), 3);
    }
}
