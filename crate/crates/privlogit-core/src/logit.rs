//! Plaintext logistic-regression core: model, objective, derivatives, and the
//! two optimizers (exact Newton and the constant-Hessian variant).
//!
//! Everything here is privacy-free `f64` math. The distributed protocols reuse
//! these routines at the local nodes and the test suites use them as oracles
//! for the secure backends.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Convergence threshold default on the relative log-likelihood change.
pub const DEFAULT_TOL: f64 = 1e-6;
/// Iteration cap default.
pub const DEFAULT_MAX_ITER: usize = 500;
/// A Cholesky pivot below this fraction of the largest diagonal entry is
/// treated as non-positive.
pub const CHOLESKY_PIVOT_RTOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum LogitError {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("matrix is not positive definite (pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },
    #[error("triangular system is singular at row {row}")]
    Singular { row: usize },
    #[error("Newton iteration diverged at iteration {iteration}: {reason}")]
    Diverged { iteration: usize, reason: String },
}

/// A design matrix with a binary response, the unit of ingestion and of
/// horizontal partitioning.
#[derive(Debug, Clone)]
pub struct Dataset {
    x: DMatrix<f64>,
    y: DVector<f64>,
}

impl Dataset {
    /// Validates shapes, finiteness, and that every response is 0 or 1.
    pub fn new(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self, LogitError> {
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(LogitError::InvalidDataset(
                "covariate matrix must be at least 1x1".into(),
            ));
        }
        if y.len() != x.nrows() {
            return Err(LogitError::DimensionMismatch {
                expected: x.nrows(),
                actual: y.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(LogitError::InvalidDataset(
                "covariates contain non-finite entries".into(),
            ));
        }
        if y.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(LogitError::InvalidDataset(
                "responses must all be 0 or 1".into(),
            ));
        }
        Ok(Self { x, y })
    }

    pub fn from_rows(rows: &[Vec<f64>], y: &[f64]) -> Result<Self, LogitError> {
        let n = rows.len();
        let p = rows.first().map(|r| r.len()).unwrap_or(0);
        if rows.iter().any(|r| r.len() != p) {
            return Err(LogitError::InvalidDataset("ragged rows".into()));
        }
        let x = DMatrix::from_fn(n, p, |i, j| rows[i][j]);
        Self::new(x, DVector::from_column_slice(y))
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    /// Builds a dataset from a subset of rows (horizontal partition block).
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self, LogitError> {
        if rows.is_empty() {
            return Err(LogitError::InvalidDataset("empty row selection".into()));
        }
        let x = DMatrix::from_fn(rows.len(), self.p(), |i, j| self.x[(rows[i], j)]);
        let y = DVector::from_fn(rows.len(), |i, _| self.y[rows[i]]);
        Self::new(x, y)
    }
}

/// Fit configuration shared by both optimizers.
#[derive(Debug, Clone)]
pub struct ModelConfig {
    /// Ridge penalty, 0 for plain logistic regression.
    pub lambda: f64,
    /// Relative log-likelihood change below which the fit has converged.
    pub tol: f64,
    pub max_iter: usize,
    /// Starting coefficients; all-zero when absent.
    pub beta0: Option<DVector<f64>>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            lambda: 0.0,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            beta0: None,
        }
    }
}

impl ModelConfig {
    fn validate(&self, p: usize) -> Result<DVector<f64>, LogitError> {
        if !(self.lambda >= 0.0) {
            return Err(LogitError::InvalidConfig("lambda must be >= 0".into()));
        }
        if !(self.tol > 0.0) {
            return Err(LogitError::InvalidConfig("tol must be > 0".into()));
        }
        if self.max_iter == 0 {
            return Err(LogitError::InvalidConfig("max_iter must be >= 1".into()));
        }
        match &self.beta0 {
            None => Ok(DVector::zeros(p)),
            Some(b) if b.len() == p => Ok(b.clone()),
            Some(b) => Err(LogitError::DimensionMismatch {
                expected: p,
                actual: b.len(),
            }),
        }
    }
}

/// Outcome of an optimizer run.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub beta: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Objective value per iterate, starting at the initial coefficients;
    /// always `iterations + 1` entries long.
    pub likelihood_trace: Vec<f64>,
}

/// Cholesky factor with unit access to the underlying matrix. Diagonal
/// entries are strictly positive by construction.
#[derive(Debug, Clone)]
pub struct LowerTriangular {
    l: DMatrix<f64>,
}

impl LowerTriangular {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.l
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }
}

/// Curvature bounds used by the linear-rate property: `big_m` bounds the
/// objective's curvature from above, `small_m` from below along a fit
/// trajectory.
#[derive(Debug, Clone, Copy)]
pub struct SpectralBounds {
    pub big_m: f64,
    pub small_m: f64,
}

/// Numerically stable logistic function, exact at 0 and saturating cleanly
/// for |z| up to several hundred.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// log(1 + e^t) without overflow for large |t|.
fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

fn check_beta(data: &Dataset, beta: &DVector<f64>) -> Result<(), LogitError> {
    if beta.len() != data.p() {
        return Err(LogitError::DimensionMismatch {
            expected: data.p(),
            actual: beta.len(),
        });
    }
    Ok(())
}

/// Ridge-penalized log-likelihood of the logistic model.
pub fn log_likelihood(
    data: &Dataset,
    beta: &DVector<f64>,
    lambda: f64,
) -> Result<f64, LogitError> {
    check_beta(data, beta)?;
    let t = data.x() * beta;
    let mut acc = 0.0;
    for i in 0..data.n() {
        acc += data.y()[i] * t[i] - softplus(t[i]);
    }
    Ok(acc - 0.5 * lambda * beta.dot(beta))
}

/// Gradient of the penalized log-likelihood. With `lambda = 0` on a data
/// partition this is exactly the per-organization gradient share.
pub fn gradient(
    data: &Dataset,
    beta: &DVector<f64>,
    lambda: f64,
) -> Result<DVector<f64>, LogitError> {
    check_beta(data, beta)?;
    let t = data.x() * beta;
    let resid = DVector::from_fn(data.n(), |i, _| data.y()[i] - sigmoid(t[i]));
    Ok(data.x().transpose() * resid - lambda * beta)
}

/// Exact Hessian, `-X' A X - lambda I` with `a_ii = p_i (1 - p_i)`.
pub fn hessian(
    data: &Dataset,
    beta: &DVector<f64>,
    lambda: f64,
) -> Result<DMatrix<f64>, LogitError> {
    check_beta(data, beta)?;
    let t = data.x() * beta;
    let p = data.p();
    let mut h = DMatrix::zeros(p, p);
    for i in 0..data.n() {
        let pi = sigmoid(t[i]);
        let a = pi * (1.0 - pi);
        let row = data.x().row(i);
        // h -= a * x_i x_i'
        for c in 0..p {
            let ac = a * row[c];
            for r in 0..p {
                h[(r, c)] -= ac * row[r];
            }
        }
    }
    for d in 0..p {
        h[(d, d)] -= lambda;
    }
    Ok(h)
}

/// Constant curvature bound `-X'X/4 - lambda I`, independent of the
/// coefficients. The per-partition version (`lambda = 0`) sums exactly to
/// the whole-dataset value.
pub fn approx_hessian(data: &Dataset, lambda: f64) -> Result<DMatrix<f64>, LogitError> {
    let mut h = data.x().transpose() * data.x();
    h.scale_mut(-0.25);
    for d in 0..data.p() {
        h[(d, d)] -= lambda;
    }
    Ok(h)
}

/// Textbook Cholesky factorization of a symmetric positive-definite matrix.
/// Callers pass the negated curvature matrix, which is positive definite
/// whenever `lambda > 0` or the covariates have full column rank.
pub fn cholesky(a: &DMatrix<f64>) -> Result<LowerTriangular, LogitError> {
    let p = a.nrows();
    if a.ncols() != p {
        return Err(LogitError::DimensionMismatch {
            expected: p,
            actual: a.ncols(),
        });
    }
    let max_diag = (0..p).fold(0.0f64, |m, d| m.max(a[(d, d)].abs()));
    let pivot_floor = CHOLESKY_PIVOT_RTOL * max_diag;
    let mut l = DMatrix::zeros(p, p);
    for j in 0..p {
        let mut pivot = a[(j, j)];
        for k in 0..j {
            pivot -= l[(j, k)] * l[(j, k)];
        }
        if !(pivot > pivot_floor) || !pivot.is_finite() {
            return Err(LogitError::NotPositiveDefinite { pivot: j });
        }
        let diag = pivot.sqrt();
        l[(j, j)] = diag;
        for i in (j + 1)..p {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / diag;
        }
    }
    Ok(LowerTriangular { l })
}

/// Solves `L L' x = g` by a forward then a backward triangular sweep.
pub fn solve_via_cholesky(
    l: &LowerTriangular,
    g: &DVector<f64>,
) -> Result<DVector<f64>, LogitError> {
    let p = l.dim();
    if g.len() != p {
        return Err(LogitError::DimensionMismatch {
            expected: p,
            actual: g.len(),
        });
    }
    let lm = &l.l;
    let mut z = DVector::zeros(p);
    for i in 0..p {
        if lm[(i, i)] == 0.0 {
            return Err(LogitError::Singular { row: i });
        }
        let mut s = g[i];
        for k in 0..i {
            s -= lm[(i, k)] * z[k];
        }
        z[i] = s / lm[(i, i)];
    }
    let mut x = DVector::zeros(p);
    for i in (0..p).rev() {
        if lm[(i, i)] == 0.0 {
            return Err(LogitError::Singular { row: i });
        }
        let mut s = z[i];
        for k in (i + 1)..p {
            s -= lm[(k, i)] * x[k];
        }
        x[i] = s / lm[(i, i)];
    }
    Ok(x)
}

/// Relative-change convergence test, strict: an exact tie with the threshold
/// does not converge. A zero previous value only converges onto itself.
pub fn converged(l_prev: f64, l_curr: f64, tol: f64) -> bool {
    if l_prev == 0.0 {
        return l_curr == 0.0;
    }
    (l_curr - l_prev).abs() / l_prev.abs() < tol
}

/// Pure Newton ascent, re-factoring the exact Hessian every iteration.
/// No damping or line search; loss of positive definiteness surfaces as a
/// divergence error.
pub fn newton_fit(data: &Dataset, cfg: &ModelConfig) -> Result<FitResult, LogitError> {
    let mut beta = cfg.validate(data.p())?;
    let mut l_prev = log_likelihood(data, &beta, cfg.lambda)?;
    let mut trace = vec![l_prev];
    for it in 1..=cfg.max_iter {
        let h = hessian(data, &beta, cfg.lambda)?;
        let factor = cholesky(&(-h)).map_err(|e| match e {
            LogitError::NotPositiveDefinite { .. } => LogitError::Diverged {
                iteration: it,
                reason: "Hessian lost positive definiteness".into(),
            },
            other => other,
        })?;
        let g = gradient(data, &beta, cfg.lambda)?;
        // beta - H^{ -1} g  ==  beta + (-H)^{-1} g
        beta += solve_via_cholesky(&factor, &g)?;
        let l_curr = log_likelihood(data, &beta, cfg.lambda)?;
        if !l_curr.is_finite() {
            return Err(LogitError::Diverged {
                iteration: it,
                reason: "objective became non-finite".into(),
            });
        }
        trace.push(l_curr);
        if converged(l_prev, l_curr, cfg.tol) {
            return Ok(FitResult {
                beta,
                iterations: it,
                converged: true,
                likelihood_trace: trace,
            });
        }
        l_prev = l_curr;
    }
    Ok(FitResult {
        beta,
        iterations: cfg.max_iter,
        converged: false,
        likelihood_trace: trace,
    })
}

/// Constant-Hessian ascent: factor the curvature bound once, then reuse it
/// for every update. The objective trace is strictly increasing.
pub fn privlogit_fit(data: &Dataset, cfg: &ModelConfig) -> Result<FitResult, LogitError> {
    let mut beta = cfg.validate(data.p())?;
    let h = approx_hessian(data, cfg.lambda)?;
    let factor = cholesky(&(-h)).map_err(|e| match e {
        LogitError::NotPositiveDefinite { .. } => LogitError::InvalidConfig(
            "approximate Hessian is not positive definite; increase lambda or check covariate rank"
                .into(),
        ),
        other => other,
    })?;
    let mut l_prev = log_likelihood(data, &beta, cfg.lambda)?;
    let mut trace = vec![l_prev];
    for it in 1..=cfg.max_iter {
        let g = gradient(data, &beta, cfg.lambda)?;
        beta += solve_via_cholesky(&factor, &g)?;
        let l_curr = log_likelihood(data, &beta, cfg.lambda)?;
        trace.push(l_curr);
        if converged(l_prev, l_curr, cfg.tol) {
            return Ok(FitResult {
                beta,
                iterations: it,
                converged: true,
                likelihood_trace: trace,
            });
        }
        l_prev = l_curr;
    }
    Ok(FitResult {
        beta,
        iterations: cfg.max_iter,
        converged: false,
        likelihood_trace: trace,
    })
}

fn symmetric_eigenvalues(m: &DMatrix<f64>) -> DVector<f64> {
    // Symmetrize first; the inputs are symmetric up to rounding.
    let sym = (m + m.transpose()).scale(0.5);
    nalgebra::SymmetricEigen::new(sym).eigenvalues
}

/// Curvature bounds for the linear-rate property: the upper bound comes from
/// the largest eigenvalue of `X'X`; the lower bound is the smallest
/// eigenvalue of `X' A X` seen along a constant-Hessian fit trajectory.
/// Test-support routine; assumes the fit is well posed.
pub fn spectral_bounds(data: &Dataset, lambda: f64) -> Result<SpectralBounds, LogitError> {
    let xtx = data.x().transpose() * data.x();
    let big_m = symmetric_eigenvalues(&xtx).max() / 4.0 + lambda;

    let cfg = ModelConfig {
        lambda,
        tol: 1e-10,
        max_iter: 5_000,
        beta0: None,
    };
    let factor = cholesky(&(-approx_hessian(data, lambda)?))?;
    let mut beta = DVector::zeros(data.p());
    let mut small = f64::INFINITY;
    let mut l_prev = log_likelihood(data, &beta, lambda)?;
    for _ in 0..cfg.max_iter {
        small = small.min(min_curvature(data, &beta));
        let g = gradient(data, &beta, lambda)?;
        beta += solve_via_cholesky(&factor, &g)?;
        let l_curr = log_likelihood(data, &beta, lambda)?;
        if converged(l_prev, l_curr, cfg.tol) {
            break;
        }
        l_prev = l_curr;
    }
    small = small.min(min_curvature(data, &beta));
    Ok(SpectralBounds {
        big_m,
        small_m: small + lambda,
    })
}

fn min_curvature(data: &Dataset, beta: &DVector<f64>) -> f64 {
    let t = data.x() * beta;
    let p = data.p();
    let mut xax = DMatrix::zeros(p, p);
    for i in 0..data.n() {
        let pi = sigmoid(t[i]);
        let a = pi * (1.0 - pi);
        let row = data.x().row(i);
        for c in 0..p {
            let ac = a * row[c];
            for r in 0..p {
                xax[(r, c)] += ac * row[r];
            }
        }
    }
    symmetric_eigenvalues(&xax).min()
}
