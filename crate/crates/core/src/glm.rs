//! Deterministic fitting kernels: weighted least squares, weighted binary
//! logistic regression and baseline-category multinomial logistic regression.
//!
//! Likelihood fits use Newton iterations with step halving. All routines are
//! pure functions of their inputs.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, LinalgError, Matrix};
use crate::scalar::Scalar;

/// Name of the explicit intercept column.
pub const INTERCEPT: &str = "(Intercept)";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GlmError {
    #[error("invalid design: {0}")]
    InvalidDesign(String),
    #[error("length mismatch: design has {rows} rows but {what} has {len}")]
    LengthMismatch {
        rows: usize,
        what: &'static str,
        len: usize,
    },
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error("rank-deficient design; dependent columns: {columns:?}")]
    RankDeficient { columns: Vec<String> },
    #[error("single-class response: every observation has y = {class}")]
    SingleClass { class: usize },
    #[error("response categories absent from the data: {missing:?}")]
    AbsentCategory { missing: Vec<usize> },
    #[error("invalid response value {value} at row {row}")]
    InvalidResponse { row: usize, value: String },
    #[error("separation detected: |coefficient| reached {max_abs:.3} without convergence")]
    Separation { max_abs: f64 },
    #[error("column mismatch: fit uses {expected:?}, design has {found:?}")]
    ColumnMismatch {
        expected: Vec<String>,
        found: Vec<String>,
    },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Named design matrix with an explicit intercept column where one is used.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix<T> {
    names: Vec<String>,
    values: Matrix<T>,
}

impl<T: Scalar> DesignMatrix<T> {
    pub fn new(names: Vec<String>, values: Matrix<T>) -> Result<Self, GlmError> {
        if names.len() != values.cols() {
            return Err(GlmError::InvalidDesign(format!(
                "{} names for {} columns",
                names.len(),
                values.cols()
            )));
        }
        let mut seen = HashSet::new();
        for n in &names {
            if !seen.insert(n.as_str()) {
                return Err(GlmError::InvalidDesign(format!("duplicate column name {n:?}")));
            }
        }
        if let Some(pos) = values.as_slice().iter().position(|v| !v.is_finite()) {
            return Err(GlmError::InvalidDesign(format!(
                "non-finite entry at row {}, column {:?}",
                pos / values.cols().max(1),
                names[pos % values.cols().max(1)]
            )));
        }
        Ok(Self { names, values })
    }

    pub fn from_rows(names: &[&str], rows: &[Vec<T>]) -> Result<Self, GlmError> {
        let m = Matrix::from_rows(rows)?;
        Self::new(names.iter().map(|s| s.to_string()).collect(), m)
    }

    /// Intercept-only design with `n` rows.
    pub fn intercept_only(n: usize) -> Self {
        Self {
            names: vec![INTERCEPT.to_string()],
            values: Matrix::from_row_major(n, 1, vec![T::one(); n]).expect("sized"),
        }
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &Matrix<T> {
        &self.values
    }

    pub fn n_rows(&self) -> usize {
        self.values.rows()
    }

    pub fn n_cols(&self) -> usize {
        self.values.cols()
    }

    pub fn row(&self, i: usize) -> &[T] {
        self.values.row(i)
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Keep only the rows for which `keep` is true.
    pub fn select_rows(&self, keep: &[bool]) -> Self {
        let p = self.n_cols();
        let mut data = Vec::new();
        let mut n = 0;
        for (i, &k) in keep.iter().enumerate() {
            if k {
                data.extend_from_slice(self.row(i));
                n += 1;
            }
        }
        Self {
            names: self.names.clone(),
            values: Matrix::from_row_major(n, p, data).expect("sized"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitKind {
    Linear,
    Logistic,
    Multinomial { categories: usize },
}

/// Outcome of a fitting kernel.
///
/// For multinomial fits `coefficients` holds one block of `n_cols` values per
/// non-reference category, in category order (category 0 is the reference).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult<T> {
    pub kind: FitKind,
    pub column_names: Vec<String>,
    pub coefficients: Vec<T>,
    pub converged: bool,
    pub iterations: usize,
    /// Log-likelihood for likelihood fits, weighted residual sum of squares
    /// for least squares.
    pub objective: T,
    /// Max-norm of the (per-observation averaged) score at return.
    pub gradient_norm: T,
    pub n_obs: usize,
}

impl<T: Scalar> FitResult<T> {
    /// Coefficient block for category `k` (1-based for multinomial fits).
    pub fn category_block(&self, k: usize) -> &[T] {
        let p = self.column_names.len();
        &self.coefficients[(k - 1) * p..k * p]
    }

    pub fn coefficient(&self, name: &str) -> Option<T> {
        self.column_names
            .iter()
            .position(|n| n == name)
            .map(|j| self.coefficients[j])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[derive(Default)]
pub struct WlsOptions {
    /// Retry with a `1e-8` ridge when the design is rank deficient.
    pub ridge_fallback: bool,
}


#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LikelihoodOptions {
    pub max_iter: usize,
    pub tolerance: f64,
    /// Centre and scale non-intercept columns internally, then back-transform.
    pub standardize: bool,
}

impl LikelihoodOptions {
    pub fn logistic() -> Self {
        Self {
            max_iter: 100,
            tolerance: 1e-8,
            standardize: false,
        }
    }

    pub fn multinomial() -> Self {
        Self {
            max_iter: 200,
            tolerance: 1e-8,
            standardize: false,
        }
    }
}

fn check_len(rows: usize, what: &'static str, len: usize) -> Result<(), GlmError> {
    if rows != len {
        return Err(GlmError::LengthMismatch { rows, what, len });
    }
    Ok(())
}

fn check_weights<T: Scalar>(w: &[T]) -> Result<(), GlmError> {
    if w.iter().any(|&v| !(v >= T::zero()) || !v.is_finite()) {
        return Err(GlmError::InvalidWeights("weights must be finite and nonnegative".into()));
    }
    if !w.iter().any(|&v| v > T::zero()) {
        return Err(GlmError::InvalidWeights("all weights are zero".into()));
    }
    Ok(())
}

fn rank_tolerance<T: Scalar>() -> T {
    T::of(1e-9).max(T::epsilon() * T::of(1e3))
}

/// Weighted least squares via Householder QR on `sqrt(w)`-scaled rows.
pub fn fit_wls<T: Scalar>(x: &DesignMatrix<T>, y: &[T], w: &[T]) -> Result<FitResult<T>, GlmError> {
    fit_wls_with(x, y, w, &WlsOptions::default())
}

pub fn fit_wls_with<T: Scalar>(
    x: &DesignMatrix<T>,
    y: &[T],
    w: &[T],
    opts: &WlsOptions,
) -> Result<FitResult<T>, GlmError> {
    let n = x.n_rows();
    let p = x.n_cols();
    check_len(n, "y", y.len())?;
    check_len(n, "w", w.len())?;
    check_weights(w)?;
    if y.iter().any(|v| !v.is_finite()) {
        return Err(GlmError::InvalidDesign("non-finite response".into()));
    }
    let active: Vec<usize> = (0..n).filter(|&i| w[i] > T::zero()).collect();
    let sw: Vec<T> = active.iter().map(|&i| w[i].sqrt()).collect();
    let cols: Vec<Vec<T>> = (0..p)
        .map(|j| active.iter().zip(&sw).map(|(&i, &s)| x.values[(i, j)] * s).collect())
        .collect();
    let rhs: Vec<T> = active.iter().zip(&sw).map(|(&i, &s)| y[i] * s).collect();

    let coefficients = match linalg::qr_least_squares(cols, rhs, rank_tolerance()) {
        Ok(c) => c,
        Err(LinalgError::RankDeficient { columns }) => {
            if opts.ridge_fallback {
                log::warn!("rank-deficient WLS design, applying ridge 1e-8");
                ridge_solve(x, y, w, T::of(1e-8))?
            } else {
                return Err(GlmError::RankDeficient {
                    columns: columns.into_iter().map(|j| x.names[j].clone()).collect(),
                });
            }
        }
        Err(e) => return Err(e.into()),
    };

    let mut rss = T::zero();
    let mut cross = vec![T::zero(); p];
    for &i in &active {
        let r = y[i] - linalg::dot(x.row(i), &coefficients);
        rss += w[i] * r * r;
        for (c, &xv) in cross.iter_mut().zip(x.row(i)) {
            *c += w[i] * r * xv;
        }
    }
    let wsum: T = active.iter().map(|&i| w[i]).sum();
    let gradient_norm = cross.iter().fold(T::zero(), |m, &c| m.max((c / wsum).abs()));
    Ok(FitResult {
        kind: FitKind::Linear,
        column_names: x.names.clone(),
        coefficients,
        converged: true,
        iterations: 1,
        objective: rss,
        gradient_norm,
        n_obs: active.len(),
    })
}

fn ridge_solve<T: Scalar>(x: &DesignMatrix<T>, y: &[T], w: &[T], lambda: T) -> Result<Vec<T>, GlmError> {
    let p = x.n_cols();
    let mut xtx = Matrix::zeros(p, p);
    let mut xty = vec![T::zero(); p];
    for i in 0..x.n_rows() {
        if w[i] == T::zero() {
            continue;
        }
        let r = x.row(i);
        for a in 0..p {
            xty[a] += w[i] * r[a] * y[i];
            for b in 0..=a {
                xtx[(a, b)] += w[i] * r[a] * r[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            xtx[(b, a)] = xtx[(a, b)];
        }
        xtx[(a, a)] += lambda;
    }
    Ok(linalg::solve_spd(&xtx, &xty)?)
}

fn sigmoid<T: Scalar>(eta: T) -> T {
    if eta >= T::zero() {
        T::one() / (T::one() + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (T::one() + e)
    }
}

/// `log(1 + exp(eta))` without overflow.
fn softplus<T: Scalar>(eta: T) -> T {
    if eta > T::zero() {
        eta + (-eta).exp().ln_1p()
    } else {
        eta.exp().ln_1p()
    }
}

/// Weighted Bernoulli log-likelihood at `beta`.
pub fn logistic_log_likelihood<T: Scalar>(x: &DesignMatrix<T>, y: &[T], w: &[T], beta: &[T]) -> T {
    (0..x.n_rows())
        .filter(|&i| w[i] > T::zero())
        .map(|i| {
            let eta = linalg::dot(x.row(i), beta);
            w[i] * (y[i] * eta - softplus(eta))
        })
        .sum()
}

/// Score of the weighted Bernoulli log-likelihood.
pub fn logistic_gradient<T: Scalar>(x: &DesignMatrix<T>, y: &[T], w: &[T], beta: &[T]) -> Vec<T> {
    let mut g = vec![T::zero(); x.n_cols()];
    for i in 0..x.n_rows() {
        if w[i] == T::zero() {
            continue;
        }
        let r = w[i] * (y[i] - sigmoid(linalg::dot(x.row(i), beta)));
        for (gj, &xv) in g.iter_mut().zip(x.row(i)) {
            *gj += r * xv;
        }
    }
    g
}

struct Standardizer<T> {
    mean: Vec<T>,
    scale: Vec<T>,
    intercept: Option<usize>,
}

impl<T: Scalar> Standardizer<T> {
    fn fit(x: &DesignMatrix<T>) -> Self {
        let n = T::of(x.n_rows() as f64);
        let intercept = x.column_index(INTERCEPT);
        let p = x.n_cols();
        let mut mean = vec![T::zero(); p];
        let mut scale = vec![T::one(); p];
        for j in 0..p {
            if Some(j) == intercept {
                continue;
            }
            let col = x.values.column(j);
            let m = col.iter().copied().sum::<T>() / n;
            let v = col.iter().map(|&c| (c - m) * (c - m)).sum::<T>() / n;
            if intercept.is_some() {
                mean[j] = m;
            }
            if v > T::zero() {
                scale[j] = v.sqrt();
            }
        }
        Self { mean, scale, intercept }
    }

    fn transform(&self, x: &DesignMatrix<T>) -> DesignMatrix<T> {
        let mut m = x.values.clone();
        for i in 0..m.rows() {
            for (j, v) in m.row_mut(i).iter_mut().enumerate() {
                if Some(j) != self.intercept {
                    *v = (*v - self.mean[j]) / self.scale[j];
                }
            }
        }
        DesignMatrix {
            names: x.names.clone(),
            values: m,
        }
    }

    fn back_transform(&self, block: &mut [T]) {
        let mut shift = T::zero();
        for j in 0..block.len() {
            if Some(j) == self.intercept {
                continue;
            }
            block[j] /= self.scale[j];
            shift += block[j] * self.mean[j];
        }
        if let Some(k) = self.intercept {
            block[k] -= shift;
        }
    }
}

/// Weighted binary logistic regression by Newton/IRLS.
pub fn fit_logistic<T: Scalar>(x: &DesignMatrix<T>, y: &[T], w: &[T]) -> Result<FitResult<T>, GlmError> {
    fit_logistic_with(x, y, w, &LikelihoodOptions::logistic())
}

pub fn fit_logistic_with<T: Scalar>(
    x: &DesignMatrix<T>,
    y: &[T],
    w: &[T],
    opts: &LikelihoodOptions,
) -> Result<FitResult<T>, GlmError> {
    let n = x.n_rows();
    check_len(n, "y", y.len())?;
    check_len(n, "w", w.len())?;
    check_weights(w)?;
    let mut seen = [false; 2];
    for (i, &v) in y.iter().enumerate() {
        if v == T::zero() {
            seen[0] |= w[i] > T::zero();
        } else if v == T::one() {
            seen[1] |= w[i] > T::zero();
        } else {
            return Err(GlmError::InvalidResponse {
                row: i,
                value: format!("{v}"),
            });
        }
    }
    if !seen[0] || !seen[1] {
        return Err(GlmError::SingleClass {
            class: usize::from(seen[1]),
        });
    }
    if opts.standardize {
        let st = Standardizer::fit(x);
        let xs = st.transform(x);
        let mut fit = newton_logistic(&xs, y, w, opts)?;
        st.back_transform(&mut fit.coefficients);
        fit.column_names = x.names.clone();
        fit.gradient_norm = max_abs(&logistic_gradient(x, y, w, &fit.coefficients)) / weight_sum(w);
        fit.objective = logistic_log_likelihood(x, y, w, &fit.coefficients);
        return Ok(fit);
    }
    newton_logistic(x, y, w, opts)
}

fn max_abs<T: Scalar>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |m, &g| m.max(g.abs()))
}

fn weight_sum<T: Scalar>(w: &[T]) -> T {
    w.iter().copied().sum()
}

fn newton_logistic<T: Scalar>(
    x: &DesignMatrix<T>,
    y: &[T],
    w: &[T],
    opts: &LikelihoodOptions,
) -> Result<FitResult<T>, GlmError> {
    let p = x.n_cols();
    let tol = T::of(opts.tolerance);
    let mut beta = vec![T::zero(); p];
    let mut ll = logistic_log_likelihood(x, y, w, &beta);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        let mut grad = vec![T::zero(); p];
        let mut hess = Matrix::zeros(p, p);
        for i in 0..x.n_rows() {
            if w[i] == T::zero() {
                continue;
            }
            let row = x.row(i);
            let mu = sigmoid(linalg::dot(row, &beta));
            let r = w[i] * (y[i] - mu);
            let v = w[i] * mu * (T::one() - mu);
            for a in 0..p {
                grad[a] += r * row[a];
                let va = v * row[a];
                for b in 0..=a {
                    hess[(a, b)] += va * row[b];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                hess[(b, a)] = hess[(a, b)];
            }
        }
        let step = match linalg::solve_spd(&hess, &grad) {
            Ok(s) => s,
            Err(_) => break,
        };
        let (new_beta, new_ll, applied) = halve_until_ascent(&beta, &step, ll, |b| {
            logistic_log_likelihood(x, y, w, b)
        });
        beta = new_beta;
        ll = new_ll;
        if max_abs(&applied) < tol {
            converged = true;
            break;
        }
    }
    let wsum = weight_sum(w);
    let gradient_norm = max_abs(&logistic_gradient(x, y, w, &beta)) / wsum;
    let biggest = max_abs(&beta);
    if !converged && biggest > T::of(30.0) {
        return Err(GlmError::Separation {
            max_abs: biggest.to_f64_lossy(),
        });
    }
    if !converged {
        log::warn!("logistic regression did not converge in {iterations} iterations");
    }
    Ok(FitResult {
        kind: FitKind::Logistic,
        column_names: x.names.clone(),
        coefficients: beta,
        converged,
        iterations,
        objective: ll,
        gradient_norm,
        n_obs: w.iter().filter(|&&v| v > T::zero()).count(),
    })
}

/// Apply `step`, halving it until the objective does not decrease.
/// Returns the new parameters, objective and the step actually taken.
fn halve_until_ascent<T: Scalar>(
    beta: &[T],
    step: &[T],
    current: T,
    objective: impl Fn(&[T]) -> T,
) -> (Vec<T>, T, Vec<T>) {
    let mut scale = T::one();
    let half = T::of(0.5);
    let slack = current.abs() * T::epsilon() * T::of(16.0);
    for _ in 0..40 {
        let applied: Vec<T> = step.iter().map(|&s| s * scale).collect();
        let cand: Vec<T> = beta.iter().zip(&applied).map(|(&b, &s)| b + s).collect();
        let val = objective(&cand);
        if val.is_finite() && val >= current - slack {
            return (cand, val, applied);
        }
        scale *= half;
    }
    (beta.to_vec(), current, vec![T::zero(); beta.len()])
}

/// Softmax probabilities for one design row under baseline-category
/// coefficients (`categories - 1` blocks).
pub fn softmax_row<T: Scalar>(coefficients: &[T], row: &[T], categories: usize) -> Vec<T> {
    let p = row.len();
    let mut eta = Vec::with_capacity(categories);
    eta.push(T::zero());
    for k in 1..categories {
        eta.push(linalg::dot(&coefficients[(k - 1) * p..k * p], row));
    }
    let m = eta.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
    let exps: Vec<T> = eta.iter().map(|&e| (e - m).exp()).collect();
    let s: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / s).collect()
}

pub fn multinomial_log_likelihood<T: Scalar>(
    x: &DesignMatrix<T>,
    y: &[usize],
    categories: usize,
    beta: &[T],
) -> T {
    let p = x.n_cols();
    (0..x.n_rows())
        .map(|i| {
            let row = x.row(i);
            let mut eta = vec![T::zero(); categories];
            for k in 1..categories {
                eta[k] = linalg::dot(&beta[(k - 1) * p..k * p], row);
            }
            let m = eta.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
            let lse = m + eta.iter().map(|&e| (e - m).exp()).sum::<T>().ln();
            eta[y[i]] - lse
        })
        .sum()
}

pub fn multinomial_gradient<T: Scalar>(
    x: &DesignMatrix<T>,
    y: &[usize],
    categories: usize,
    beta: &[T],
) -> Vec<T> {
    let p = x.n_cols();
    let mut g = vec![T::zero(); (categories - 1) * p];
    for i in 0..x.n_rows() {
        let row = x.row(i);
        let pr = softmax_row(beta, row, categories);
        for k in 1..categories {
            let r = if y[i] == k { T::one() } else { T::zero() } - pr[k];
            for j in 0..p {
                g[(k - 1) * p + j] += r * row[j];
            }
        }
    }
    g
}

/// Observed information (negative Hessian) of the multinomial log-likelihood.
pub fn multinomial_information<T: Scalar>(x: &DesignMatrix<T>, categories: usize, beta: &[T]) -> Matrix<T> {
    let p = x.n_cols();
    let d = (categories - 1) * p;
    let mut info = Matrix::zeros(d, d);
    for i in 0..x.n_rows() {
        let row = x.row(i);
        let pr = softmax_row(beta, row, categories);
        for k in 1..categories {
            for l in 1..=k {
                let c = if k == l { pr[k] * (T::one() - pr[k]) } else { -pr[k] * pr[l] };
                for a in 0..p {
                    let ca = c * row[a];
                    for b in 0..p {
                        info[((k - 1) * p + a, (l - 1) * p + b)] += ca * row[b];
                    }
                }
            }
        }
    }
    for r in 0..d {
        for c in (r + 1)..d {
            info[(r, c)] = info[(c, r)];
        }
    }
    info
}

/// Multinomial logistic regression with category 0 as reference.
pub fn fit_multinomial<T: Scalar>(
    x: &DesignMatrix<T>,
    y: &[usize],
    categories: usize,
) -> Result<FitResult<T>, GlmError> {
    fit_multinomial_with(x, y, categories, &LikelihoodOptions::multinomial())
}

pub fn fit_multinomial_with<T: Scalar>(
    x: &DesignMatrix<T>,
    y: &[usize],
    categories: usize,
    opts: &LikelihoodOptions,
) -> Result<FitResult<T>, GlmError> {
    check_len(x.n_rows(), "y", y.len())?;
    if categories < 2 {
        return Err(GlmError::InvalidDesign("need at least two categories".into()));
    }
    let mut counts = vec![0usize; categories];
    for (i, &c) in y.iter().enumerate() {
        if c >= categories {
            return Err(GlmError::InvalidResponse {
                row: i,
                value: c.to_string(),
            });
        }
        counts[c] += 1;
    }
    let missing: Vec<usize> = (0..categories).filter(|&k| counts[k] == 0).collect();
    if !missing.is_empty() {
        return Err(GlmError::AbsentCategory { missing });
    }
    if opts.standardize {
        let st = Standardizer::fit(x);
        let xs = st.transform(x);
        let mut fit = newton_multinomial(&xs, y, categories, opts)?;
        let p = x.n_cols();
        for k in 0..categories - 1 {
            st.back_transform(&mut fit.coefficients[k * p..(k + 1) * p]);
        }
        fit.column_names = x.names.clone();
        let n = T::of(x.n_rows() as f64);
        fit.gradient_norm = max_abs(&multinomial_gradient(x, y, categories, &fit.coefficients)) / n;
        fit.objective = multinomial_log_likelihood(x, y, categories, &fit.coefficients);
        return Ok(fit);
    }
    newton_multinomial(x, y, categories, opts)
}

fn newton_multinomial<T: Scalar>(
    x: &DesignMatrix<T>,
    y: &[usize],
    categories: usize,
    opts: &LikelihoodOptions,
) -> Result<FitResult<T>, GlmError> {
    let p = x.n_cols();
    let d = (categories - 1) * p;
    let n = T::of(x.n_rows() as f64);
    let tol = T::of(opts.tolerance);
    let mut beta = vec![T::zero(); d];
    let mut ll = multinomial_log_likelihood(x, y, categories, &beta);
    let mut converged = false;
    let mut iterations = 0;
    let mut grad = multinomial_gradient(x, y, categories, &beta);
    loop {
        if max_abs(&grad) / n <= tol {
            converged = true;
            break;
        }
        if iterations >= opts.max_iter {
            break;
        }
        iterations += 1;
        let info = multinomial_information(x, categories, &beta);
        let step = match linalg::solve_spd(&info, &grad) {
            Ok(s) => s,
            Err(_) => break,
        };
        let (nb, nll, applied) = halve_until_ascent(&beta, &step, ll, |b| {
            multinomial_log_likelihood(x, y, categories, b)
        });
        beta = nb;
        ll = nll;
        grad = multinomial_gradient(x, y, categories, &beta);
        if applied.iter().all(|&s| s == T::zero()) {
            // no further ascent possible at working precision
            converged = max_abs(&grad) / n <= tol;
            break;
        }
    }
    if !converged {
        log::warn!("multinomial regression not converged after {iterations} iterations");
    }
    Ok(FitResult {
        kind: FitKind::Multinomial { categories },
        column_names: x.names.clone(),
        coefficients: beta,
        converged,
        iterations,
        objective: ll,
        gradient_norm: max_abs(&grad) / n,
        n_obs: x.n_rows(),
    })
}

/// Predicted probabilities. Binary fits give one column (`P(y = 1)`),
/// multinomial fits one column per category.
pub fn predict_proba<T: Scalar>(fit: &FitResult<T>, x: &DesignMatrix<T>) -> Result<Matrix<T>, GlmError> {
    if fit.column_names != x.names {
        return Err(GlmError::ColumnMismatch {
            expected: fit.column_names.clone(),
            found: x.names.clone(),
        });
    }
    let n = x.n_rows();
    match fit.kind {
        FitKind::Logistic => {
            let data = (0..n)
                .map(|i| sigmoid(linalg::dot(x.row(i), &fit.coefficients)))
                .collect();
            Ok(Matrix::from_row_major(n, 1, data)?)
        }
        FitKind::Multinomial { categories } => {
            let mut data = Vec::with_capacity(n * categories);
            for i in 0..n {
                data.extend(softmax_row(&fit.coefficients, x.row(i), categories));
            }
            Ok(Matrix::from_row_major(n, categories, data)?)
        }
        FitKind::Linear => Err(GlmError::InvalidDesign(
            "probabilities requested from a least-squares fit".into(),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn design(names: &[&str], rows: Vec<Vec<f64>>) -> DesignMatrix<f64> {
        DesignMatrix::from_rows(names, &rows).unwrap()
    }

    #[test]
    fn wls_single_point_interpolates() {
        let x = design(&[INTERCEPT], vec![vec![1.0]]);
        let fit = fit_wls(&x, &[2.0], &[1.0]).unwrap();
        assert_relative_eq!(fit.coefficients[0], 2.0, epsilon = 1e-14);
    }

    #[test]
    fn wls_three_points() {
        let x = design(&[INTERCEPT, "x"], vec![vec![1.0, 0.0], vec![1.0, 1.0], vec![1.0, 2.0]]);
        let fit = fit_wls(&x, &[1.0, 2.0, 4.0], &[1.0; 3]).unwrap();
        assert_relative_eq!(fit.coefficients[0], 5.0 / 6.0, epsilon = 1e-12);
        assert_relative_eq!(fit.coefficients[1], 1.5, epsilon = 1e-12);
        let scaled = fit_wls(&x, &[1.0, 2.0, 4.0], &[7.0; 3]).unwrap();
        for (a, b) in fit.coefficients.iter().zip(&scaled.coefficients) {
            assert_relative_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn wls_f32_path() {
        let x = DesignMatrix::<f32>::from_rows(
            &[INTERCEPT, "x"],
            &[vec![1.0, 0.0], vec![1.0, 1.0], vec![1.0, 2.0]],
        )
        .unwrap();
        let fit = fit_wls(&x, &[1.0, 2.0, 4.0], &[1.0; 3]).unwrap();
        assert!((fit.coefficients[1] - 1.5).abs() < 1e-5);
    }

    #[test]
    fn wls_rank_deficiency_names_columns() {
        let x = design(&[INTERCEPT, "a", "b"], vec![
            vec![1.0, 1.0, 2.0],
            vec![1.0, 2.0, 4.0],
            vec![1.0, 3.0, 6.0],
            vec![1.0, 4.0, 8.0],
        ]);
        let err = fit_wls(&x, &[1.0, 2.0, 3.0, 5.0], &[1.0; 4]).unwrap_err();
        assert_eq!(err, GlmError::RankDeficient { columns: vec!["b".into()] });
        let ok = fit_wls_with(&x, &[1.0, 2.0, 3.0, 5.0], &[1.0; 4], &WlsOptions { ridge_fallback: true });
        assert!(ok.is_ok());
    }

    #[test]
    fn wls_rejects_bad_weights() {
        let x = design(&[INTERCEPT], vec![vec![1.0], vec![1.0]]);
        assert!(matches!(fit_wls(&x, &[1.0, 2.0], &[0.0, 0.0]), Err(GlmError::InvalidWeights(_))));
        assert!(matches!(fit_wls(&x, &[1.0, 2.0], &[-1.0, 1.0]), Err(GlmError::InvalidWeights(_))));
    }

    #[test]
    fn design_rejects_nonfinite_and_duplicates() {
        assert!(DesignMatrix::from_rows(&["a"], &[vec![f64::NAN]]).is_err());
        assert!(DesignMatrix::from_rows(&["a", "a"], &[vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn logistic_intercept_is_logit_of_mean() {
        let x = DesignMatrix::<f64>::intercept_only(8);
        let y = [1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let fit = fit_logistic(&x, &y, &[1.0; 8]).unwrap();
        assert!(fit.converged);
        assert_relative_eq!(fit.coefficients[0], (0.25f64 / 0.75).ln(), epsilon = 1e-10);
    }

    #[test]
    fn logistic_single_class() {
        let x = DesignMatrix::<f64>::intercept_only(3);
        assert_eq!(
            fit_logistic(&x, &[1.0; 3], &[1.0; 3]).unwrap_err(),
            GlmError::SingleClass { class: 1 }
        );
    }

    #[test]
    fn logistic_separation_is_reported() {
        let x = design(&[INTERCEPT, "x"], (0..10).map(|i| vec![1.0, i as f64]).collect());
        let y: Vec<f64> = (0..10).map(|i| if i < 5 { 0.0 } else { 1.0 }).collect();
        assert!(matches!(fit_logistic(&x, &y, &[1.0; 10]), Err(GlmError::Separation { .. })));
    }

    #[test]
    fn multinomial_intercept_log_ratios() {
        let x = DesignMatrix::<f64>::intercept_only(10);
        let y = [0, 0, 0, 0, 0, 1, 1, 1, 2, 2];
        let fit = fit_multinomial(&x, &y, 3).unwrap();
        assert!(fit.converged);
        assert_relative_eq!(fit.coefficients[0], (0.3f64 / 0.5).ln(), epsilon = 1e-9);
        assert_relative_eq!(fit.coefficients[1], (0.2f64 / 0.5).ln(), epsilon = 1e-9);
        let pr = predict_proba(&fit, &x).unwrap();
        for (k, f) in [0.5, 0.3, 0.2].iter().enumerate() {
            let mean: f64 = pr.column(k).iter().sum::<f64>() / 10.0;
            assert_relative_eq!(mean, *f, epsilon = 1e-9);
        }
    }

    #[test]
    fn multinomial_absent_category() {
        let x = DesignMatrix::<f64>::intercept_only(4);
        assert_eq!(
            fit_multinomial(&x, &[0, 0, 2, 2], 3).unwrap_err(),
            GlmError::AbsentCategory { missing: vec![1] }
        );
    }

    #[test]
    fn predict_uniform_and_half() {
        let x = DesignMatrix::<f64>::intercept_only(2);
        let multi = FitResult {
            kind: FitKind::Multinomial { categories: 3 },
            column_names: vec![INTERCEPT.into()],
            coefficients: vec![0.0, 0.0],
            converged: true,
            iterations: 0,
            objective: 0.0,
            gradient_norm: 0.0,
            n_obs: 2,
        };
        let pr = predict_proba(&multi, &x).unwrap();
        for v in pr.as_slice() {
            assert_relative_eq!(*v, 1.0 / 3.0, epsilon = 1e-15);
        }
        let bin = FitResult {
            kind: FitKind::Logistic,
            coefficients: vec![0.0],
            ..multi.clone()
        };
        assert_eq!(predict_proba(&bin, &x).unwrap().as_slice(), &[0.5, 0.5]);
        let other = design(&["z"], vec![vec![1.0]]);
        assert!(matches!(predict_proba(&bin, &other), Err(GlmError::ColumnMismatch { .. })));
    }

    #[test]
    fn standardized_fit_matches_raw() {
        let rows: Vec<Vec<f64>> = (0..60)
            .map(|i| vec![1.0, 100.0 + (i as f64 * 0.37).sin() * 20.0, (i % 7) as f64])
            .collect();
        let y: Vec<f64> = (0..60).map(|i| f64::from(((i * 31) % 11) < 5)).collect();
        let x = design(&[INTERCEPT, "a", "b"], rows);
        let raw = fit_logistic(&x, &y, &[1.0; 60]).unwrap();
        let opts = LikelihoodOptions {
            standardize: true,
            ..LikelihoodOptions::logistic()
        };
        let st = fit_logistic_with(&x, &y, &[1.0; 60], &opts).unwrap();
        for (a, b) in raw.coefficients.iter().zip(&st.coefficients) {
            assert_relative_eq!(a, b, epsilon = 1e-7, max_relative = 1e-7);
        }
    }
}
