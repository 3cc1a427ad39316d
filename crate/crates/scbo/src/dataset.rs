//! Evaluation archive, box bounds, and space-filling initial designs.
//!
//! The optimizer works on inputs normalized to the unit cube; this module
//! owns the mapping to and from problem units, the Latin hypercube design
//! used to seed runs, and the growing `(x, f, c)` archive with its
//! feasibility bookkeeping.

use std::io::{BufWriter, Write as _};
use std::path::Path;

use ndarray::prelude::*;
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng;

/// Proposal budget per requested point when rejection-filtering a design.
pub const REJECTION_BUDGET: usize = 1_000_000;

/// A named acceptance predicate over points in problem units.
///
/// Benchmark problems use this for closed-form validity regions that are
/// cheap to check and should never be handed to the surrogates (for example
/// a per-panel norm bound on lamination parameters).
pub struct Filter<'a> {
    pub name: &'a str,
    pub accept: &'a (dyn Fn(&[f64]) -> bool + Sync),
}

impl<'a> Filter<'a> {
    pub fn accepts(&self, x: &[f64]) -> bool {
        (self.accept)(x)
    }
}

/// Axis-aligned box bounds in problem units.
#[derive(Debug, Clone)]
pub struct BoundsSpec {
    lower: Array1<f64>,
    upper: Array1<f64>,
}

impl BoundsSpec {
    /// Requires finite bounds with `lower[i] < upper[i]` for every axis.
    pub fn new(lower: Array1<f64>, upper: Array1<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::Bounds(format!(
                "lower has {} entries, upper has {}",
                lower.len(),
                upper.len()
            )));
        }
        for i in 0..lower.len() {
            if !lower[i].is_finite() || !upper[i].is_finite() || lower[i] >= upper[i] {
                return Err(Error::Bounds(format!(
                    "axis {i}: need finite lower < upper, got [{}, {}]",
                    lower[i], upper[i]
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn from_slices(lower: &[f64], upper: &[f64]) -> Result<Self> {
        Self::new(Array1::from(lower.to_vec()), Array1::from(upper.to_vec()))
    }

    /// The unit cube in `dim` dimensions.
    pub fn unit(dim: usize) -> Self {
        Self {
            lower: Array1::zeros(dim),
            upper: Array1::ones(dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> ArrayView1<'_, f64> {
        self.lower.view()
    }

    pub fn upper(&self) -> ArrayView1<'_, f64> {
        self.upper.view()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lower.iter().zip(self.upper.iter()))
                .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }

    /// Maps a point in problem units onto the unit cube.
    pub fn normalize(&self, x: &[f64]) -> Result<Array1<f64>> {
        if !self.contains(x) {
            return Err(Error::Bounds(format!(
                "point {x:?} lies outside the declared bounds"
            )));
        }
        Ok(Array1::from_iter(x.iter().zip(self.lower.iter().zip(self.upper.iter())).map(
            |(v, (lo, hi))| (*v - *lo) / (*hi - *lo),
        )))
    }

    /// Maps a unit-cube point back to problem units.
    pub fn denormalize(&self, z: &[f64]) -> Array1<f64> {
        assert_eq!(z.len(), self.dim());
        Array1::from_iter(
            z.iter()
                .zip(self.lower.iter().zip(self.upper.iter()))
                .map(|(v, (lo, hi))| *lo + *v * (*hi - *lo)),
        )
    }
}

/// Latin hypercube design of `count` points inside `bounds`, in problem units.
///
/// Each coordinate is stratified into `count` equal bins with exactly one
/// sample per bin. When a `filter` is given, points it rejects are replaced
/// by fresh uniform draws until they pass (which sacrifices stratification
/// for the replaced points only); [`Error::RejectionBudget`] is returned if
/// a replacement cannot be found within [`REJECTION_BUDGET`] proposals.
pub fn lhs_sample(
    bounds: &BoundsSpec,
    count: usize,
    seed: u64,
    filter: Option<&Filter>,
) -> Result<Array2<f64>> {
    let d = bounds.dim();
    let mut out = Array2::<f64>::zeros((count, d));
    if count == 0 {
        return Ok(out);
    }
    let mut rng = rng::chacha(seed);
    for j in 0..d {
        let mut bins: Vec<usize> = (0..count).collect();
        // Fisher-Yates with the shared stream keeps the design deterministic.
        for i in (1..count).rev() {
            let k = rng.gen_range(0..=i);
            bins.swap(i, k);
        }
        let lo = bounds.lower[j];
        let width = bounds.upper[j] - bounds.lower[j];
        for i in 0..count {
            let u: f64 = rng.gen();
            out[[i, j]] = lo + (bins[i] as f64 + u) / count as f64 * width;
        }
    }
    if let Some(filter) = filter {
        let mut point = vec![0.0; d];
        for i in 0..count {
            point.copy_from_slice(out.row(i).as_slice().unwrap());
            if filter.accepts(&point) {
                continue;
            }
            let mut accepted = false;
            for _ in 0..REJECTION_BUDGET {
                for j in 0..d {
                    let u: f64 = rng.gen();
                    point[j] = bounds.lower[j] + u * (bounds.upper[j] - bounds.lower[j]);
                }
                if filter.accepts(&point) {
                    out.row_mut(i).assign(&ArrayView1::from(&point[..]));
                    accepted = true;
                    break;
                }
            }
            if !accepted {
                return Err(Error::RejectionBudget {
                    filter: filter.name.to_string(),
                    budget: REJECTION_BUDGET,
                });
            }
        }
    }
    Ok(out)
}

/// Append-only archive of evaluated designs.
///
/// Inputs are stored normalized to the unit cube; objective and constraint
/// values are stored raw. A design is feasible when every constraint value
/// is `<= 0`.
#[derive(Debug, Clone)]
pub struct Dataset {
    x: Array2<f64>,
    f: Vec<f64>,
    c: Array2<f64>,
}

impl Dataset {
    pub fn new(dim: usize, constraints: usize) -> Self {
        Self {
            x: Array2::zeros((0, dim)),
            f: Vec::new(),
            c: Array2::zeros((0, constraints)),
        }
    }

    pub fn len(&self) -> usize {
        self.f.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn constraint_count(&self) -> usize {
        self.c.ncols()
    }

    pub fn x(&self) -> ArrayView2<'_, f64> {
        self.x.view()
    }

    pub fn f(&self) -> &[f64] {
        &self.f
    }

    pub fn c(&self) -> ArrayView2<'_, f64> {
        self.c.view()
    }

    /// Appends one evaluated design. `x` must already be normalized.
    pub fn push(&mut self, x: ArrayView1<f64>, f: f64, c: ArrayView1<f64>) -> Result<()> {
        if x.len() != self.dim() || c.len() != self.constraint_count() {
            return Err(Error::Config(format!(
                "push: expected {}-dim x and {} constraints, got {} and {}",
                self.dim(),
                self.constraint_count(),
                x.len(),
                c.len()
            )));
        }
        if x.iter().any(|v| !v.is_finite() || *v < -1e-12 || *v > 1.0 + 1e-12) {
            return Err(Error::Bounds(format!(
                "push: normalized input outside the unit cube: {:?}",
                x.to_vec()
            )));
        }
        if !f.is_finite() || c.iter().any(|v| !v.is_finite()) {
            return Err(Error::Evaluation(
                "push: non-finite objective or constraint value".into(),
            ));
        }
        self.x.push_row(x).expect("row shape checked above");
        self.c.push_row(c).expect("row shape checked above");
        self.f.push(f);
        Ok(())
    }

    pub fn is_feasible(&self, row: usize) -> bool {
        self.c.row(row).iter().all(|v| *v <= 0.0)
    }

    /// Sum of positive parts of the constraint values of `row`.
    pub fn total_violation(&self, row: usize) -> f64 {
        self.c.row(row).iter().map(|v| v.max(0.0)).sum()
    }

    /// Best feasible design among rows `from..len()`: lowest objective, ties
    /// broken by earliest row.
    pub fn best_feasible_from(&self, from: usize) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for i in from..self.len() {
            if self.is_feasible(i) {
                let fi = self.f[i];
                if best.map_or(true, |(_, fb)| fi < fb) {
                    best = Some((i, fi));
                }
            }
        }
        best
    }

    pub fn best_feasible(&self) -> Option<(usize, f64)> {
        self.best_feasible_from(0)
    }

    /// Row with the smallest total violation among rows `from..len()`, ties
    /// broken by earliest row. `None` only when the range is empty.
    pub fn min_violation_from(&self, from: usize) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for i in from..self.len() {
            let v = self.total_violation(i);
            if best.map_or(true, |(_, vb)| v < vb) {
                best = Some((i, v));
            }
        }
        best
    }

    /// Writes the archive as CSV with header `x_1..x_D,f,c_1..c_G` and
    /// round-trip-exact float formatting.
    pub fn to_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut w = BufWriter::new(file);
        let mut header = Vec::with_capacity(self.dim() + 1 + self.constraint_count());
        for j in 0..self.dim() {
            header.push(format!("x_{}", j + 1));
        }
        header.push("f".to_string());
        for j in 0..self.constraint_count() {
            header.push(format!("c_{}", j + 1));
        }
        writeln!(w, "{}", header.join(","))?;
        for i in 0..self.len() {
            let mut fields = Vec::with_capacity(header.len());
            for v in self.x.row(i) {
                fields.push(format_float(*v));
            }
            fields.push(format_float(self.f[i]));
            for v in self.c.row(i) {
                fields.push(format_float(*v));
            }
            writeln!(w, "{}", fields.join(","))?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads an archive written by [`Dataset::to_csv`].
    pub fn from_csv(path: &Path) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path)?;
        let headers = reader.headers()?.clone();
        let dim = headers.iter().filter(|h| h.starts_with("x_")).count();
        let constraints = headers.iter().filter(|h| h.starts_with("c_")).count();
        if dim + constraints + 1 != headers.len() || !headers.iter().any(|h| h == "f") {
            return Err(Error::Config(format!(
                "unrecognized dataset header: {headers:?}"
            )));
        }
        let mut ds = Dataset::new(dim, constraints);
        for record in reader.records() {
            let record = record?;
            let parse = |s: &str| -> Result<f64> {
                s.parse::<f64>()
                    .map_err(|e| Error::Config(format!("bad float {s:?}: {e}")))
            };
            let mut x = Array1::zeros(dim);
            for j in 0..dim {
                x[j] = parse(&record[j])?;
            }
            let f = parse(&record[dim])?;
            let mut c = Array1::zeros(constraints);
            for j in 0..constraints {
                c[j] = parse(&record[dim + 1 + j])?;
            }
            ds.push(x.view(), f, c.view())?;
        }
        Ok(ds)
    }
}

/// Shortest representation that still round-trips `f64` exactly (17
/// significant digits covers every double).
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn demo_bounds() -> BoundsSpec {
        BoundsSpec::from_slices(&[-2.0, 0.5, 10.0], &[3.0, 0.8, 30.0]).unwrap()
    }

    #[test]
    fn bounds_reject_inverted_axes() {
        assert!(BoundsSpec::from_slices(&[1.0], &[1.0]).is_err());
        assert!(BoundsSpec::from_slices(&[2.0], &[1.0]).is_err());
        assert!(BoundsSpec::from_slices(&[f64::NAN], &[1.0]).is_err());
    }

    #[test]
    fn normalize_round_trips() {
        let bounds = demo_bounds();
        let mut rng = crate::rng::chacha(11);
        for _ in 0..100 {
            let x: Vec<f64> = (0..3)
                .map(|j| {
                    let u: f64 = rand::Rng::gen(&mut rng);
                    bounds.lower()[j] + u * (bounds.upper()[j] - bounds.lower()[j])
                })
                .collect();
            let z = bounds.normalize(&x).unwrap();
            assert!(z.iter().all(|v| (0.0..=1.0).contains(v)));
            let back = bounds.denormalize(z.as_slice().unwrap());
            for j in 0..3 {
                assert_abs_diff_eq!(back[j], x[j], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn normalize_rejects_outside_points() {
        let bounds = demo_bounds();
        assert!(bounds.normalize(&[-2.1, 0.6, 20.0]).is_err());
        assert!(bounds.normalize(&[0.0, 0.6]).is_err());
    }

    #[test]
    fn lhs_is_stratified_per_coordinate() {
        let bounds = demo_bounds();
        let n = 37;
        let pts = lhs_sample(&bounds, n, 5, None).unwrap();
        for j in 0..bounds.dim() {
            let mut seen = vec![false; n];
            for i in 0..n {
                let u = (pts[[i, j]] - bounds.lower()[j]) / (bounds.upper()[j] - bounds.lower()[j]);
                let bin = ((u * n as f64).floor() as usize).min(n - 1);
                assert!(!seen[bin], "coordinate {j} has two samples in bin {bin}");
                seen[bin] = true;
            }
            assert!(seen.iter().all(|b| *b));
        }
    }

    #[test]
    fn lhs_is_seed_deterministic() {
        let bounds = demo_bounds();
        let a = lhs_sample(&bounds, 25, 9, None).unwrap();
        let b = lhs_sample(&bounds, 25, 9, None).unwrap();
        assert_eq!(a, b);
        let c = lhs_sample(&bounds, 25, 10, None).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn lhs_respects_filter() {
        let bounds = BoundsSpec::unit(2);
        let accept = |x: &[f64]| x[0] + x[1] <= 1.0;
        let filter = Filter {
            name: "lower-left triangle",
            accept: &accept,
        };
        let pts = lhs_sample(&bounds, 40, 3, Some(&filter)).unwrap();
        for i in 0..40 {
            assert!(pts[[i, 0]] + pts[[i, 1]] <= 1.0);
        }
    }

    #[test]
    fn lhs_reports_impossible_filter() {
        let bounds = BoundsSpec::unit(2);
        let accept = |_: &[f64]| false;
        let filter = Filter {
            name: "nothing passes",
            accept: &accept,
        };
        let err = lhs_sample(&bounds, 1, 3, Some(&filter)).unwrap_err();
        assert!(err.to_string().contains("nothing passes"));
    }

    #[test]
    fn best_feasible_and_violation_bookkeeping() {
        let mut ds = Dataset::new(1, 2);
        ds.push(array![0.1].view(), 5.0, array![-1.0, -0.5].view()).unwrap();
        ds.push(array![0.2].view(), 3.0, array![0.2, -0.5].view()).unwrap();
        ds.push(array![0.3].view(), 4.0, array![-0.1, -0.1].view()).unwrap();
        ds.push(array![0.4].view(), 4.0, array![-0.2, -0.2].view()).unwrap();
        assert_eq!(ds.best_feasible(), Some((2, 4.0)));
        assert_eq!(ds.best_feasible_from(3), Some((3, 4.0)));
        assert!(ds.is_feasible(0));
        assert!(!ds.is_feasible(1));
        assert_abs_diff_eq!(ds.total_violation(1), 0.2);
        assert_eq!(ds.min_violation_from(0).unwrap().0, 0);
    }

    #[test]
    fn push_validates_inputs() {
        let mut ds = Dataset::new(2, 1);
        assert!(ds.push(array![0.5, 1.2].view(), 1.0, array![0.0].view()).is_err());
        assert!(ds
            .push(array![0.5, 0.5].view(), f64::NAN, array![0.0].view())
            .is_err());
        assert!(ds.push(array![0.5].view(), 1.0, array![0.0].view()).is_err());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let mut ds = Dataset::new(2, 3);
        let mut rng = crate::rng::chacha(2);
        let mut draw = move || rand::Rng::gen::<f64>(&mut rng);
        for _ in 0..10 {
            let x = array![draw(), draw()];
            let c = array![draw() - 0.5, (draw() - 0.5) * 1e-9, draw() * 1e6];
            ds.push(x.view(), draw() * 1e3, c.view()).unwrap();
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        ds.to_csv(&path).unwrap();
        let back = Dataset::from_csv(&path).unwrap();
        assert_eq!(ds.x(), back.x());
        assert_eq!(ds.f(), back.f());
        assert_eq!(ds.c(), back.c());
    }

    proptest! {
        #[test]
        fn float_formatting_round_trips(v in proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO) {
            let s = format_float(v);
            let back: f64 = s.parse().unwrap();
            prop_assert_eq!(v.to_bits(), back.to_bits());
        }
    }
}
