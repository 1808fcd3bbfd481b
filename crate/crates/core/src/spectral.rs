//! Spectral radius of nonnegative operators by shifted power iteration.

use std::borrow::Cow;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::transition::MeanMatrix;

/// A nonnegative linear map `y = A x` on `R^dim`.
pub trait LinearOperator: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

/// Numeric CSR matrix. Structure may be borrowed from a symbolic matrix.
#[derive(Debug, Clone)]
pub struct CsrMatrix<'a> {
    pub row_ptr: Cow<'a, [u64]>,
    pub cols: Cow<'a, [u32]>,
    pub values: Vec<f64>,
}

impl CsrMatrix<'static> {
    pub fn from_dense(rows: &[Vec<f64>]) -> Self {
        let mut row_ptr = vec![0u64];
        let mut cols = Vec::new();
        let mut values = Vec::new();
        for row in rows {
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    cols.push(j as u32);
                    values.push(v);
                }
            }
            row_ptr.push(cols.len() as u64);
        }
        CsrMatrix { row_ptr: Cow::Owned(row_ptr), cols: Cow::Owned(cols), values }
    }
}

impl LinearOperator for CsrMatrix<'_> {
    fn dim(&self) -> usize {
        self.row_ptr.len() - 1
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.par_iter_mut().with_min_len(1024).enumerate().for_each(|(i, yi)| {
            let (a, b) = (self.row_ptr[i] as usize, self.row_ptr[i + 1] as usize);
            let mut s = 0.0;
            for k in a..b {
                s += self.values[k] * x[self.cols[k] as usize];
            }
            *yi = s;
        });
    }
}

/// Evaluates every entry of a symbolic matrix at `params`.
pub fn evaluate<'a>(matrix: &'a MeanMatrix, params: &[f64]) -> Result<CsrMatrix<'a>> {
    check_params(params, matrix.model.arity())?;
    Ok(CsrMatrix {
        row_ptr: Cow::Borrowed(&matrix.row_ptr),
        cols: Cow::Borrowed(&matrix.cols),
        values: matrix.values_at(params),
    })
}

pub fn check_params(params: &[f64], arity: usize) -> Result<()> {
    if params.len() != arity {
        return Err(Error::InvalidParams(format!("expected {arity} parameters, got {}", params.len())));
    }
    if let Some(p) = params.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::InvalidParams(format!("parameter {p} outside [0, 1]")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerOptions {
    /// Diagonal shift that keeps the iteration aperiodic.
    pub shift: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Consecutive iterations within `tol` required to declare convergence.
    pub stable_iters: usize,
}

impl Default for PowerOptions {
    fn default() -> Self {
        PowerOptions { shift: 1e-3, tol: 1e-12, max_iter: 200_000, stable_iters: 5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralReport {
    pub radius_estimate: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Last relative change of the estimate.
    pub residual: f64,
    /// Collatz-Wielandt bounds `min_i (Ax)_i/x_i <= rho <= max_i (Ax)_i/x_i`
    /// from the final iterate.
    pub lower: f64,
    pub upper: f64,
}

const SUM_CHUNK: usize = 4096;

fn l1(v: &[f64]) -> f64 {
    let partial: Vec<f64> = v.par_chunks(SUM_CHUNK).map(|c| c.iter().sum::<f64>()).collect();
    partial.iter().sum()
}

fn ratio_bounds(x: &[f64], y: &[f64], shift: f64) -> (f64, f64) {
    let partial: Vec<(f64, f64)> = x
        .par_chunks(SUM_CHUNK)
        .zip(y.par_chunks(SUM_CHUNK))
        .map(|(xc, yc)| {
            let mut lo = f64::INFINITY;
            let mut hi = 0.0f64;
            for (&a, &b) in xc.iter().zip(yc) {
                if a > 0.0 {
                    let r = b / a;
                    lo = lo.min(r);
                    hi = hi.max(r);
                } else if b > 0.0 {
                    hi = f64::INFINITY;
                }
            }
            (lo, hi)
        })
        .collect();
    let (lo, hi) = partial.iter().fold((f64::INFINITY, 0.0f64), |(l, h), &(a, b)| (l.min(a), h.max(b)));
    ((lo - shift).max(0.0), hi - shift)
}

/// For a nonnegative operator, A^n 1 = 0 exactly iff A is nilpotent: there
/// is no cancellation. The shifted iteration only approaches rho = 0 like 1/k.
fn nilpotent(op: &dyn LinearOperator, max_steps: usize) -> bool {
    let n = op.dim();
    if n > max_steps {
        return false;
    }
    let mut z = vec![1.0; n];
    let mut next = vec![0.0; n];
    for _ in 0..n {
        op.apply(&z, &mut next);
        std::mem::swap(&mut z, &mut next);
        if z.iter().all(|&v| v == 0.0) {
            return true;
        }
    }
    false
}

/// What the caller wants to learn from the iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Goal {
    Estimate,
    /// Stop as soon as the Collatz-Wielandt bounds place rho on one side of
    /// the threshold.
    Compare(f64),
}

fn iterate(op: &dyn LinearOperator, opts: &PowerOptions, goal: Goal) -> SpectralReport {
    let n = op.dim();
    if n == 0 {
        return SpectralReport { radius_estimate: 0.0, iterations: 0, converged: true, residual: 0.0, lower: 0.0, upper: 0.0 };
    }
    let shift = opts.shift;
    let mut x = vec![1.0 / n as f64; n];
    let mut y = vec![0.0; n];
    let mut estimate = f64::NAN;
    let mut stable = 0;
    let mut residual = f64::INFINITY;
    let mut bounds = (0.0, f64::INFINITY);
    for it in 1..=opts.max_iter {
        op.apply(&x, &mut y);
        y.par_iter_mut().zip(x.par_iter()).for_each(|(yi, xi)| *yi += shift * xi);
        // x has unit L1 norm, so the norm of y is the Rayleigh-type ratio
        let norm = l1(&y);
        let next = norm - shift;
        if let Goal::Compare(threshold) = goal {
            bounds = ratio_bounds(&x, &y, shift);
            if bounds.1 < threshold || bounds.0 >= threshold {
                return SpectralReport {
                    radius_estimate: next.max(0.0),
                    iterations: it,
                    converged: false,
                    residual,
                    lower: bounds.0,
                    upper: bounds.1,
                };
            }
        }
        if norm <= 0.0 {
            return SpectralReport { radius_estimate: 0.0, iterations: it, converged: true, residual: 0.0, lower: 0.0, upper: 0.0 };
        }
        residual = if estimate.is_nan() { f64::INFINITY } else { (next - estimate).abs() / next.abs().max(f64::MIN_POSITIVE) };
        estimate = next;
        let inv = 1.0 / norm;
        x.par_iter_mut().zip(y.par_iter()).for_each(|(xi, yi)| *xi = yi * inv);
        if residual <= opts.tol {
            stable += 1;
            if stable >= opts.stable_iters {
                if goal == Goal::Estimate {
                    op.apply(&x, &mut y);
                    y.par_iter_mut().zip(x.par_iter()).for_each(|(yi, xi)| *yi += shift * xi);
                    bounds = ratio_bounds(&x, &y, shift);
                }
                return SpectralReport {
                    radius_estimate: estimate.max(0.0),
                    iterations: it,
                    converged: true,
                    residual,
                    lower: bounds.0,
                    upper: bounds.1,
                };
            }
        } else {
            stable = 0;
        }
    }
    if nilpotent(op, opts.max_iter) {
        return SpectralReport { radius_estimate: 0.0, iterations: opts.max_iter, converged: true, residual: 0.0, lower: 0.0, upper: 0.0 };
    }
    SpectralReport {
        radius_estimate: estimate.max(0.0),
        iterations: opts.max_iter,
        converged: false,
        residual,
        lower: bounds.0,
        upper: bounds.1,
    }
}

/// Estimates the spectral radius. A report with `converged == false` means
/// the iteration budget ran out.
pub fn spectral_radius(op: &dyn LinearOperator, opts: &PowerOptions) -> SpectralReport {
    iterate(op, opts, Goal::Estimate)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Certificate {
    pub subcritical: bool,
    pub report: SpectralReport,
}

/// Decides `rho < 1 - margin`. A run that does not converge yields
/// `subcritical == false` with `report.converged == false`.
pub fn is_subcritical(op: &dyn LinearOperator, margin: f64, opts: &PowerOptions) -> Result<Certificate> {
    if !(margin > 0.0) {
        return Err(Error::InvalidParams(format!("margin must be positive, got {margin}")));
    }
    let report = spectral_radius(op, opts);
    Ok(Certificate { subcritical: report.converged && report.radius_estimate < 1.0 - margin, report })
}

/// Like [`is_subcritical`], but returns early once the Collatz-Wielandt
/// bounds of an iterate settle the comparison.
pub fn decide_subcritical(op: &dyn LinearOperator, margin: f64, opts: &PowerOptions, params: &[f64]) -> Result<Certificate> {
    if !(margin > 0.0) {
        return Err(Error::InvalidParams(format!("margin must be positive, got {margin}")));
    }
    let threshold = 1.0 - margin;
    let report = iterate(op, opts, Goal::Compare(threshold));
    if report.converged {
        return Ok(Certificate { subcritical: report.radius_estimate < threshold, report });
    }
    if report.upper < threshold {
        return Ok(Certificate { subcritical: true, report });
    }
    if report.lower >= threshold {
        return Ok(Certificate { subcritical: false, report });
    }
    Err(Error::NonConvergence { params: params.to_vec(), iterations: report.iterations, residual: report.residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    fn dense_radius(rows: &[Vec<f64>]) -> f64 {
        let n = rows.len();
        let m = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
        m.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn two_by_two_closed_form() {
        let rows = vec![vec![0.75, 0.25], vec![0.25, 0.5]];
        let m = CsrMatrix::from_dense(&rows);
        let r = spectral_radius(&m, &PowerOptions::default());
        let exact = (1.25 + (0.0625f64 + 0.25).sqrt()) / 2.0;
        assert!(r.converged);
        assert!((r.radius_estimate - exact).abs() < 1e-10);
        assert!(r.lower <= exact + 1e-12 && exact <= r.upper + 1e-12);
    }

    #[test]
    fn periodic_matrix_converges_with_shift() {
        let rows = vec![vec![0.0, 2.0], vec![0.5, 0.0]];
        let r = spectral_radius(&CsrMatrix::from_dense(&rows), &PowerOptions::default());
        assert!(r.converged);
        assert!((r.radius_estimate - 1.0).abs() < 1e-9);
    }

    #[test]
    fn zero_and_empty() {
        let r = spectral_radius(&CsrMatrix::from_dense(&[vec![0.0, 0.0], vec![0.0, 0.0]]), &PowerOptions::default());
        assert_eq!(r.radius_estimate, 0.0);
        assert!(r.converged);
        let empty = CsrMatrix::from_dense(&[]);
        assert_eq!(spectral_radius(&empty, &PowerOptions::default()).radius_estimate, 0.0);
    }

    #[test]
    fn non_convergence_is_reported() {
        let rows = vec![vec![0.5, 0.1], vec![0.2, 0.4]];
        let opts = PowerOptions { max_iter: 2, ..Default::default() };
        let r = spectral_radius(&CsrMatrix::from_dense(&rows), &opts);
        assert!(!r.converged);
        let c = is_subcritical(&CsrMatrix::from_dense(&rows), 1e-6, &opts).unwrap();
        assert!(!c.subcritical && !c.report.converged);
        let edge = CsrMatrix::from_dense(&[vec![1.0 - 1e-6, 0.0], vec![0.0, 0.5]]);
        let err = decide_subcritical(&edge, 1e-6, &opts, &[0.3]).unwrap_err();
        assert!(matches!(err, Error::NonConvergence { iterations: 2, .. }));
    }

    #[test]
    fn nilpotent_matrix_has_radius_zero() {
        let rows = vec![vec![0.0, 0.7, 0.2], vec![0.0, 0.0, 0.9], vec![0.0, 0.0, 0.0]];
        let opts = PowerOptions { max_iter: 2000, ..PowerOptions::default() };
        let r = spectral_radius(&CsrMatrix::from_dense(&rows), &opts);
        assert!(r.converged);
        assert_eq!(r.radius_estimate, 0.0);
    }

    #[test]
    fn margin_edge_cases() {
        let m = CsrMatrix::from_dense(&[vec![0.1]]);
        let opts = PowerOptions::default();
        assert!(!is_subcritical(&m, 1.5, &opts).unwrap().subcritical);
        assert!(is_subcritical(&m, 0.0, &opts).is_err());
        assert!(is_subcritical(&m, 0.5, &opts).unwrap().subcritical);
    }

    #[test]
    fn early_decision_agrees() {
        let rows = vec![vec![0.3, 0.2, 0.0], vec![0.1, 0.4, 0.3], vec![0.2, 0.0, 0.5]];
        let m = CsrMatrix::from_dense(&rows);
        let rho = dense_radius(&rows);
        let opts = PowerOptions::default();
        for margin in [0.01, 0.1, 0.2, 0.3, 0.5] {
            let full = is_subcritical(&m, margin, &opts).unwrap().subcritical;
            let fast = decide_subcritical(&m, margin, &opts, &[]).unwrap().subcritical;
            assert_eq!(full, fast, "margin {margin}");
            assert_eq!(full, rho < 1.0 - margin);
        }
    }

    #[test]
    fn check_params_rejects() {
        assert!(check_params(&[0.5], 2).is_err());
        assert!(check_params(&[1.5], 1).is_err());
        assert!(check_params(&[f64::NAN], 1).is_err());
        assert!(check_params(&[0.0, 1.0], 2).is_ok());
    }

    fn arb_matrix() -> impl Strategy<Value = Vec<Vec<f64>>> {
        (2usize..9).prop_flat_map(|n| {
            prop::collection::vec(prop::collection::vec(prop_oneof![Just(0.0), 0.01f64..1.0], n), n)
                .prop_map(move |mut rows| {
                    // a positive cycle keeps the matrix irreducible
                    for i in 0..rows.len() {
                        let j = (i + 1) % rows.len();
                        rows[i][j] = rows[i][j].max(0.05);
                    }
                    rows
                })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn matches_dense_eigenvalues(rows in arb_matrix()) {
            let r = spectral_radius(&CsrMatrix::from_dense(&rows), &PowerOptions::default());
            let exact = dense_radius(&rows);
            prop_assert!(r.converged);
            prop_assert!((r.radius_estimate - exact).abs() <= 1e-8 * exact.max(1.0));
            prop_assert!(r.lower <= exact * (1.0 + 1e-9) && exact <= r.upper * (1.0 + 1e-9) + 1e-12);
        }

        #[test]
        fn entrywise_monotone(rows in arb_matrix(), bump in 0.0f64..0.5, at in 0usize..64) {
            let n = rows.len();
            let mut bigger = rows.clone();
            bigger[at % n][(at / n) % n] += bump;
            let a = spectral_radius(&CsrMatrix::from_dense(&rows), &PowerOptions::default());
            let b = spectral_radius(&CsrMatrix::from_dense(&bigger), &PowerOptions::default());
            prop_assert!(b.radius_estimate >= a.radius_estimate - 1e-9);
        }

        #[test]
        fn shift_invariance(rows in arb_matrix(), shift in 1e-4f64..0.5) {
            let a = spectral_radius(&CsrMatrix::from_dense(&rows), &PowerOptions::default());
            let b = spectral_radius(&CsrMatrix::from_dense(&rows), &PowerOptions { shift, ..Default::default() });
            prop_assert!((a.radius_estimate - b.radius_estimate).abs() <= 1e-8 * a.radius_estimate.max(1.0));
        }
    }
}
