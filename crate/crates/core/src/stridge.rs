//! Sequential-threshold ridge regression.
//!
//! A fit alternates ridge solves and hard thresholding of small
//! normalized-column coefficients until the active set stops changing, then
//! (by default) refits the survivors without regularization. A sweep over
//! thresholds gives the terms-vs-threshold curve; [`select_threshold`] picks
//! the first point after its sharpest drop.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gmpe::{log_spaced, PhysicalEquation};
use crate::library::{denormalize_coefficients, DesignMatrix};

pub const DEFAULT_LAMBDA: f64 = 1e-7;
pub const DEFAULT_UNDERFIT_TOLERANCE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub lambda: f64,
    pub delta: f64,
    pub max_iterations: usize,
    pub final_refit_unregularized: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            lambda: DEFAULT_LAMBDA,
            delta: 0.0,
            max_iterations: 25,
            final_refit_unregularized: true,
        }
    }
}

impl SolverConfig {
    pub fn with_delta(self, delta: f64) -> Self {
        SolverConfig { delta, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!(
                "lambda must be >= 0, got {}",
                self.lambda
            )));
        }
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return Err(Error::Config(format!(
                "delta must be >= 0, got {}",
                self.delta
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be positive".into()));
        }
        Ok(())
    }
}

/// Solves `(A + lambda I) x = b` for symmetric positive semi-definite `A`
/// by Cholesky factorization.
fn solve_regularized(a: &DMatrix<f64>, b: &DVector<f64>, lambda: f64) -> Result<DVector<f64>> {
    let n = a.nrows();
    let max_diag = (0..n).map(|i| a[(i, i)] + lambda).fold(0.0, f64::max);
    let tol = max_diag * 1e-13;

    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)] + lambda;
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > tol) {
            return Err(Error::RankDeficient {
                column: j,
                pivot: d,
            });
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }

    // L z = b, then L^T x = z
    let mut z = DVector::<f64>::zeros(n);
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[(i, k)] * z[k];
        }
        z[i] = s / l[(i, i)];
    }
    let mut x = DVector::<f64>::zeros(n);
    for i in (0..n).rev() {
        let mut s = z[i];
        for k in (i + 1)..n {
            s -= l[(k, i)] * x[k];
        }
        x[i] = s / l[(i, i)];
    }
    Ok(x)
}

/// `argmin ||theta xi - y||^2 + lambda ||xi||^2` through the normal equations.
pub fn ridge_solve(theta: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> Result<DVector<f64>> {
    if theta.nrows() == 0 || theta.ncols() == 0 || theta.nrows() != y.len() {
        return Err(Error::Config(format!(
            "ridge_solve: incompatible shapes {}x{} and {}",
            theta.nrows(),
            theta.ncols(),
            y.len()
        )));
    }
    if !(lambda >= 0.0) {
        return Err(Error::Config(format!("lambda must be >= 0, got {lambda}")));
    }
    if theta.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Domain("ridge_solve: non-finite input".into()));
    }
    let gram = theta.tr_mul(theta);
    let rhs = theta.tr_mul(y);
    solve_regularized(&gram, &rhs, lambda)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitStats {
    pub rss: f64,
    pub r_squared: f64,
    pub n_terms: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseModel {
    /// Coefficients on normalized columns, zero outside the support.
    pub xi_normalized: Vec<f64>,
    /// Active column indices, ascending.
    pub support: Vec<usize>,
    pub physical: PhysicalEquation,
    pub fit_stats: FitStats,
    pub config: SolverConfig,
    /// Active set after each thresholding pass, starting with all columns.
    pub support_trace: Vec<Vec<usize>>,
    pub converged: bool,
}

/// Normal-equation blocks shared by every fit on one design matrix.
struct Problem<'a> {
    matrix: &'a DesignMatrix,
    gram: DMatrix<f64>,
    rhs: DVector<f64>,
    tss: f64,
}

impl<'a> Problem<'a> {
    fn new(matrix: &'a DesignMatrix) -> Self {
        let theta = matrix.theta();
        let y = matrix.y();
        let mean = y.mean();
        Problem {
            matrix,
            gram: theta.tr_mul(theta),
            rhs: theta.tr_mul(y),
            tss: y.iter().map(|v| (v - mean).powi(2)).sum(),
        }
    }

    fn solve_on(&self, support: &[usize], lambda: f64) -> Result<Vec<f64>> {
        let k = support.len();
        let gram = DMatrix::from_fn(k, k, |a, b| self.gram[(support[a], support[b])]);
        let rhs = DVector::from_fn(k, |a, _| self.rhs[support[a]]);
        let sub = solve_regularized(&gram, &rhs, lambda)?;
        let mut xi = vec![0.0; self.matrix.n_terms()];
        for (a, &j) in support.iter().enumerate() {
            xi[j] = sub[a];
        }
        Ok(xi)
    }

    fn fit(&self, config: &SolverConfig) -> Result<SparseModel> {
        config.validate()?;
        let n = self.matrix.n_terms();
        let mut support: Vec<usize> = (0..n).collect();
        let mut xi = self.solve_on(&support, config.lambda)?;
        let mut trace = vec![support.clone()];
        let mut converged = false;

        for _ in 0..config.max_iterations {
            // Only currently active terms are candidates, so a dropped term
            // cannot come back even at delta = 0.
            let next: Vec<usize> = support
                .iter()
                .copied()
                .filter(|&j| xi[j].abs() >= config.delta)
                .collect();
            if next.is_empty() {
                return Err(Error::EmptyModel {
                    delta: config.delta,
                });
            }
            if next == support {
                converged = true;
                break;
            }
            support = next;
            xi = self.solve_on(&support, config.lambda)?;
            trace.push(support.clone());
        }

        if config.final_refit_unregularized {
            // A rank-deficient support keeps its regularized solution.
            if let Ok(refit) = self.solve_on(&support, 0.0) {
                xi = refit;
            }
        }

        let fitted = self.matrix.predict_normalized(&xi);
        let rss: f64 = fitted
            .iter()
            .zip(self.matrix.y().iter())
            .map(|(f, y)| (f - y).powi(2))
            .sum();
        let r_squared = if self.tss > 0.0 {
            1.0 - rss / self.tss
        } else {
            1.0
        };
        let mut physical = denormalize_coefficients(&xi, self.matrix);
        physical.provenance_mut().lambda = Some(config.lambda);
        physical.provenance_mut().delta = Some(config.delta);

        Ok(SparseModel {
            fit_stats: FitStats {
                rss,
                r_squared,
                n_terms: support.len(),
            },
            xi_normalized: xi,
            support,
            physical,
            config: *config,
            support_trace: trace,
            converged,
        })
    }
}

pub fn stridge_fit(matrix: &DesignMatrix, config: &SolverConfig) -> Result<SparseModel> {
    Problem::new(matrix).fit(config)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub delta: f64,
    /// Zero when thresholding emptied the model or the fit failed.
    pub n_terms: usize,
    pub model: Option<SparseModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSweep {
    pub points: Vec<SweepPoint>,
    /// Total sum of squares of the target, used by the underfitting guard.
    pub tss: f64,
    /// Indices `k` where `n_terms[k + 1] > n_terms[k]`.
    pub monotonicity_violations: Vec<usize>,
}

impl ThresholdSweep {
    pub fn deltas(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.delta).collect()
    }

    pub fn n_terms(&self) -> Vec<usize> {
        self.points.iter().map(|p| p.n_terms).collect()
    }

    pub fn is_monotone(&self) -> bool {
        self.monotonicity_violations.is_empty()
    }
}

/// 50 log-spaced thresholds from 1e-3 to 10.
pub fn default_delta_grid() -> Vec<f64> {
    log_spaced(1e-3, 10.0, 50)
}

/// Fits every threshold in `delta_grid` with the rest of `base` unchanged.
/// Grid points are evaluated in parallel; output order follows the grid.
pub fn threshold_sweep(
    matrix: &DesignMatrix,
    base: &SolverConfig,
    delta_grid: &[f64],
) -> Result<ThresholdSweep> {
    if delta_grid.is_empty() {
        return Err(Error::Config("threshold grid is empty".into()));
    }
    if delta_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Config(
            "threshold grid must be strictly increasing".into(),
        ));
    }
    base.with_delta(delta_grid[0]).validate()?;
    let problem = Problem::new(matrix);
    let points: Vec<SweepPoint> = delta_grid
        .par_iter()
        .map(|&delta| match problem.fit(&base.with_delta(delta)) {
            Ok(model) => SweepPoint {
                delta,
                n_terms: model.fit_stats.n_terms,
                model: Some(model),
                failure: None,
            },
            Err(e) => SweepPoint {
                delta,
                n_terms: 0,
                model: None,
                failure: Some(e.to_string()),
            },
        })
        .collect();
    let monotonicity_violations = points
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[1].n_terms > w[0].n_terms)
        .map(|(k, _)| k)
        .collect();
    Ok(ThresholdSweep {
        points,
        tss: problem.tss,
        monotonicity_violations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KneeRule {
    /// A drop is ignored when the model after it has an RSS more than this
    /// fraction above the smallest-threshold model's RSS.
    pub underfit_tolerance: f64,
}

impl Default for KneeRule {
    fn default() -> Self {
        KneeRule {
            underfit_tolerance: DEFAULT_UNDERFIT_TOLERANCE,
        }
    }
}

/// Index of the selected grid point.
///
/// Candidates are single-step decreases of `n_terms`, excluding drops into
/// zero terms; the selected point is the one right after the winning drop.
/// Without `rss` the winner is the largest drop, ties going to the larger
/// threshold. With `rss`, drops whose post-drop RSS exceeds the reference
/// (first non-empty point) by more than the rule's tolerance are skipped as
/// underfitting and the winner is the remaining drop at the largest
/// threshold, i.e. the sparsest model that still fits. If every drop
/// underfits the reference point itself is selected.
pub fn select_knee(
    n_terms: &[usize],
    rss: Option<&[f64]>,
    tss: f64,
    rule: &KneeRule,
) -> Result<usize> {
    if n_terms.len() < 2 {
        return Err(Error::Config(
            "knee selection needs at least two sweep points".into(),
        ));
    }
    if rss.is_some_and(|r| r.len() != n_terms.len()) {
        return Err(Error::Config("rss and n_terms lengths differ".into()));
    }
    let reference = n_terms.iter().position(|&n| n > 0);
    let allowed = match (rss, reference) {
        (Some(r), Some(i)) => r[i] * (1.0 + rule.underfit_tolerance) + 1e-12 * tss.max(0.0),
        _ => f64::INFINITY,
    };

    let mut any_drop = false;
    let mut best: Option<(usize, usize)> = None;
    for k in 0..n_terms.len() - 1 {
        let (before, after) = (n_terms[k], n_terms[k + 1]);
        if after >= before || after == 0 {
            continue;
        }
        any_drop = true;
        if rss.is_some_and(|r| !(r[k + 1] <= allowed)) {
            continue;
        }
        // With rss every adequate drop scores the same, so the tie-break
        // picks the last one.
        let score = if rss.is_some() { 0 } else { before - after };
        if best.is_none_or(|(s, _)| score >= s) {
            best = Some((score, k + 1));
        }
    }
    match (best, any_drop) {
        (Some((_, idx)), _) => Ok(idx),
        (None, true) => Ok(reference.expect("a drop implies a non-empty point")),
        (None, false) => Err(Error::NoKnee),
    }
}

pub fn select_threshold(sweep: &ThresholdSweep) -> Result<f64> {
    select_threshold_with(sweep, &KneeRule::default()).map(|i| sweep.points[i].delta)
}

/// Like [`select_threshold`] but returns the grid index.
pub fn select_threshold_with(sweep: &ThresholdSweep, rule: &KneeRule) -> Result<usize> {
    let rss: Vec<f64> = sweep
        .points
        .iter()
        .map(|p| p.model.as_ref().map_or(f64::INFINITY, |m| m.fit_stats.rss))
        .collect();
    select_knee(&sweep.n_terms(), Some(&rss), sweep.tss, rule)
}
