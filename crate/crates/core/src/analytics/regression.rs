//! Maximum-likelihood fits for the three model families: proportional-odds
//! ordinal, Bernoulli logit, and NB2 negative binomial (variance `μ + μ²/θ`).

use indexmap::IndexMap;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};
use statrs::function::gamma::{digamma, ln_gamma};

use super::design::{DesignMatrix, INTERCEPT};
use crate::error::FitError;

pub const MAX_ITER: usize = 100;
pub const LL_TOL: f64 = 1e-10;
/// Coefficients beyond this magnitude are treated as diverging.
const DIVERGENCE: f64 = 40.0;
const LOG_THETA_BOUNDS: (f64, f64) = (-9.210340371976182, 18.420680743952367); // ln 1e-4, ln 1e8

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Ordinal,
    NegativeBinomial,
    Logit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionFit {
    pub family: Family,
    pub coefficients: IndexMap<String, f64>,
    pub standard_errors: IndexMap<String, f64>,
    pub z_values: IndexMap<String, f64>,
    pub p_values: IndexMap<String, f64>,
    /// Ordinal only; strictly increasing.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub cutpoints: Vec<f64>,
    /// Ordered response levels matching the cutpoints (ordinal only).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub levels: Vec<String>,
    /// NB dispersion.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deviance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pearson_chi2: Option<f64>,
    pub log_likelihood: f64,
    pub aic: f64,
    /// Number of estimated parameters.
    pub k: usize,
    pub n_obs: usize,
    pub hessian_condition_number: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl RegressionFit {
    pub fn coefficient(&self, name: &str) -> Result<f64, FitError> {
        self.coefficients.get(name).copied().ok_or_else(|| FitError::UnknownColumn(name.into()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OddsRatio {
    pub odds_ratio: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
}

/// `exp(β)` with the Wald interval `exp(β ± 1.96·SE)`.
pub fn odds_ratio_from(beta: f64, se: f64) -> OddsRatio {
    OddsRatio { odds_ratio: beta.exp(), ci_lower: (beta - 1.96 * se).exp(), ci_upper: (beta + 1.96 * se).exp() }
}

pub fn odds_ratio(fit: &RegressionFit, column: &str) -> Result<OddsRatio, FitError> {
    let beta = fit.coefficient(column)?;
    Ok(odds_ratio_from(beta, fit.standard_errors[column]))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrTest {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
}

/// Likelihood-ratio test of `reduced` nested in `full`.
pub fn lr_test(full: &RegressionFit, reduced: &RegressionFit) -> Result<LrTest, FitError> {
    lr_test_raw(full.log_likelihood, full.k, reduced.log_likelihood, reduced.k)
}

pub fn lr_test_raw(ll_full: f64, k_full: usize, ll_reduced: f64, k_reduced: usize) -> Result<LrTest, FitError> {
    let df = k_full as i64 - k_reduced as i64;
    if df <= 0 {
        return Err(FitError::NestingViolation(df));
    }
    let statistic = (2.0 * (ll_full - ll_reduced)).max(0.0);
    let chi = ChiSquared::new(df as f64).map_err(|_| FitError::Degenerate("chi-squared df"))?;
    Ok(LrTest { statistic, df: df as usize, p_value: chi.sf(statistic) })
}

fn sigmoid(a: f64) -> f64 {
    if a >= 0.0 {
        1.0 / (1.0 + (-a).exp())
    } else {
        let e = a.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^a)` without overflow.
fn softplus(a: f64) -> f64 {
    if a > 0.0 {
        a + (-a).exp().ln_1p()
    } else {
        a.exp().ln_1p()
    }
}

fn check_rank(x: &DesignMatrix) -> Result<(), FitError> {
    let rank = x.rank();
    if rank < x.ncols() {
        return Err(FitError::SingularDesign { rank, columns: x.ncols() });
    }
    Ok(())
}

fn check_len(x: &DesignMatrix, n: usize) -> Result<(), FitError> {
    if n == 0 {
        return Err(FitError::EmptySet);
    }
    if x.nrows() != n {
        return Err(FitError::Dimension(format!("{} responses for {} design rows", n, x.nrows())));
    }
    Ok(())
}

struct Objective {
    ll: f64,
    grad: DVector<f64>,
    /// Hessian of the log-likelihood (negative definite at a maximum).
    hess: DMatrix<f64>,
}

struct NewtonResult {
    params: DVector<f64>,
    objective: Objective,
    iterations: usize,
}

/// Damped Newton ascent. Stops when the relative log-likelihood change is
/// below [`LL_TOL`] and the last step was negligible.
fn newton(
    start: DVector<f64>,
    eval: impl Fn(&DVector<f64>) -> Objective,
    feasible: impl Fn(&DVector<f64>) -> bool,
    diverged: impl Fn(&DVector<f64>) -> bool,
) -> Result<NewtonResult, FitError> {
    let mut params = start;
    let mut obj = eval(&params);
    for iteration in 1..=MAX_ITER {
        let neg = -&obj.hess;
        let step = match neg.clone().cholesky() {
            Some(ch) => ch.solve(&obj.grad),
            None => {
                // Not locally concave; regularize toward gradient ascent.
                let scale = neg.diagonal().abs().max().max(1.0);
                let ridge = &neg + DMatrix::identity(neg.nrows(), neg.ncols()) * (1e-3 * scale);
                ridge.cholesky().ok_or(FitError::Degenerate("information matrix"))?.solve(&obj.grad)
            }
        };
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let candidate = &params + &step * t;
            if feasible(&candidate) {
                let next = eval(&candidate);
                if next.ll.is_finite() && next.ll >= obj.ll - 1e-12 * obj.ll.abs().max(1.0) {
                    accepted = Some((candidate, next));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((candidate, next)) = accepted else {
            // No ascent direction left: at the optimum to machine precision.
            return Ok(NewtonResult { params, objective: obj, iterations: iteration });
        };
        let change = (next.ll - obj.ll).abs() / obj.ll.abs().max(1e-300);
        let moved = (&candidate - &params).amax();
        params = candidate;
        obj = next;
        if diverged(&params) {
            return Err(FitError::Separation);
        }
        if change < LL_TOL && moved < 1e-7 {
            return Ok(NewtonResult { params, objective: obj, iterations: iteration });
        }
    }
    Err(FitError::NotConverged(MAX_ITER))
}

/// Inverse of the observed information and its condition number.
fn covariance(hess: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64), FitError> {
    let info = -hess;
    let eig = info.clone().symmetric_eigen();
    let (lo, hi) = eig.eigenvalues.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(v.abs()), hi.max(v.abs())));
    // NaN eigenvalues land here too.
    if lo.is_nan() || lo <= 0.0 {
        return Err(FitError::Degenerate("singular information matrix"));
    }
    let inv = info.try_inverse().ok_or(FitError::Degenerate("singular information matrix"))?;
    Ok((inv, hi / lo))
}

struct Report {
    coefficients: IndexMap<String, f64>,
    standard_errors: IndexMap<String, f64>,
    z_values: IndexMap<String, f64>,
    p_values: IndexMap<String, f64>,
}

fn report(names: &[String], beta: &[f64], cov_diag: &[f64]) -> Report {
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let mut r = Report {
        coefficients: IndexMap::new(),
        standard_errors: IndexMap::new(),
        z_values: IndexMap::new(),
        p_values: IndexMap::new(),
    };
    for ((name, &b), &v) in names.iter().zip(beta).zip(cov_diag) {
        let se = v.max(0.0).sqrt();
        let z = b / se;
        r.coefficients.insert(name.clone(), b);
        r.standard_errors.insert(name.clone(), se);
        r.z_values.insert(name.clone(), z);
        r.p_values.insert(name.clone(), 2.0 * normal.sf(z.abs()));
    }
    r
}

// ---------------------------------------------------------------------------
// Logit

/// Weighted Bernoulli-logit log-likelihood and its gradient in `beta`.
pub fn logit_loglik(x: &DMatrix<f64>, y: &[f64], weights: Option<&[f64]>, beta: &DVector<f64>) -> (f64, DVector<f64>) {
    let o = logit_objective(x, y, weights, beta);
    (o.ll, o.grad)
}

fn logit_objective(x: &DMatrix<f64>, y: &[f64], weights: Option<&[f64]>, beta: &DVector<f64>) -> Objective {
    let eta = x * beta;
    let p = x.ncols();
    let mut ll = 0.0;
    let mut grad = DVector::zeros(p);
    let mut hess = DMatrix::zeros(p, p);
    for i in 0..x.nrows() {
        let w = weights.map_or(1.0, |w| w[i]);
        let e = eta[i];
        let mu = sigmoid(e);
        ll += w * (y[i] * e - softplus(e));
        let xi = x.row(i).transpose();
        grad.axpy(w * (y[i] - mu), &xi, 1.0);
        hess.ger(-w * mu * (1.0 - mu), &xi, &xi, 1.0);
    }
    Objective { ll, grad, hess }
}

/// Bernoulli-logit maximum likelihood by Newton (IRLS) iterations. Optional
/// frequency weights scale each observation's contribution.
pub fn fit_logit(y: &[f64], x: &DesignMatrix, weights: Option<&[f64]>) -> Result<RegressionFit, FitError> {
    check_len(x, y.len())?;
    if y.iter().any(|v| !(*v == 0.0 || *v == 1.0)) {
        return Err(FitError::Degenerate("logit response must be 0 or 1"));
    }
    if let Some(w) = weights {
        if w.len() != y.len() || w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(FitError::Dimension("weights must be non-negative, one per row".into()));
        }
    }
    check_rank(x)?;
    let weighted = |i: usize| weights.is_none_or(|w| w[i] > 0.0);
    let ones = (0..y.len()).filter(|&i| weighted(i) && y[i] == 1.0).count();
    let zeros = (0..y.len()).filter(|&i| weighted(i) && y[i] == 0.0).count();
    if ones == 0 || zeros == 0 {
        return Err(FitError::Separation);
    }

    let m = x.matrix();
    let result = newton(
        DVector::zeros(x.ncols()),
        |b| logit_objective(m, y, weights, b),
        |_| true,
        |b| b.amax() > DIVERGENCE,
    )?;
    // A perfect fit means the likelihood has no finite maximizer.
    if result.objective.ll > -1e-6 {
        return Err(FitError::Separation);
    }
    let (cov, cond) = covariance(&result.objective.hess)?;
    let r = report(x.names(), result.params.as_slice(), cov.diagonal().as_slice());
    let k = x.ncols();
    let ll = result.objective.ll;
    Ok(RegressionFit {
        family: Family::Logit,
        coefficients: r.coefficients,
        standard_errors: r.standard_errors,
        z_values: r.z_values,
        p_values: r.p_values,
        cutpoints: Vec::new(),
        levels: Vec::new(),
        theta: None,
        deviance: None,
        pearson_chi2: None,
        log_likelihood: ll,
        aic: 2.0 * k as f64 - 2.0 * ll,
        k,
        n_obs: y.len(),
        hessian_condition_number: cond,
        converged: true,
        iterations: result.iterations,
    })
}

// ---------------------------------------------------------------------------
// Proportional odds

/// Proportional-odds log-likelihood `P(Y ≤ j) = σ(α_j − xβ)` and its gradient.
/// `params` holds the `K − 1` cutpoints followed by `β`; `y` holds category
/// indices in `0..K`.
pub fn ordinal_loglik(x: &DMatrix<f64>, y: &[usize], params: &DVector<f64>) -> (f64, DVector<f64>) {
    let o = ordinal_objective(x, y, params);
    (o.ll, o.grad)
}

fn ordinal_objective(x: &DMatrix<f64>, y: &[usize], params: &DVector<f64>) -> Objective {
    assert_eq!(x.nrows(), y.len(), "one response per design row");
    let p = x.ncols();
    let cuts = params.len() - p;
    let beta = params.rows(cuts, p);
    let dim = params.len();
    let mut ll = 0.0;
    let mut grad = DVector::zeros(dim);
    let mut hess = DMatrix::zeros(dim, dim);
    // Per-observation derivatives of P, sparse in the cutpoints.
    let mut dp = DVector::zeros(dim);
    for (i, &j) in y.iter().enumerate() {
        let xi = x.row(i);
        let eta = xi.dot(&beta.transpose());
        // (F, f, f') at the upper and lower cutpoints; infinite cutpoints contribute (1|0, 0, 0).
        let at = |k: Option<usize>, upper: bool| match k {
            Some(k) => {
                let s = sigmoid(params[k] - eta);
                let f = s * (1.0 - s);
                (s, f, f * (1.0 - 2.0 * s))
            }
            None => (if upper { 1.0 } else { 0.0 }, 0.0, 0.0),
        };
        let hi_idx = (j < cuts).then_some(j);
        let lo_idx = j.checked_sub(1);
        let (fh, gh, hh) = at(hi_idx, true);
        let (fl, gl, hl) = at(lo_idx, false);
        let prob = (fh - fl).max(1e-300);
        ll += prob.ln();

        dp.fill(0.0);
        if let Some(k) = hi_idx {
            dp[k] = gh;
        }
        if let Some(k) = lo_idx {
            dp[k] = -gl;
        }
        for (c, xv) in xi.iter().enumerate() {
            dp[cuts + c] = -xv * (gh - gl);
        }
        grad.axpy(1.0 / prob, &dp, 1.0);

        // Second derivatives of P.
        let mut d2 = DMatrix::zeros(dim, dim);
        if let Some(k) = hi_idx {
            d2[(k, k)] = hh;
            for (c, xv) in xi.iter().enumerate() {
                d2[(k, cuts + c)] = -xv * hh;
                d2[(cuts + c, k)] = -xv * hh;
            }
        }
        if let Some(k) = lo_idx {
            d2[(k, k)] = -hl;
            for (c, xv) in xi.iter().enumerate() {
                d2[(k, cuts + c)] = xv * hl;
                d2[(cuts + c, k)] = xv * hl;
            }
        }
        for (a, xa) in xi.iter().enumerate() {
            for (b, xb) in xi.iter().enumerate() {
                d2[(cuts + a, cuts + b)] = xa * xb * (hh - hl);
            }
        }
        hess += d2 / prob;
        hess.ger(-1.0 / (prob * prob), &dp, &dp, 1.0);
    }
    Objective { ll, grad, hess }
}

/// Proportional-odds fit. Any intercept column is dropped because the
/// cutpoints absorb it. Categories are the distinct values of `y` in order.
pub fn fit_ordinal<T: Ord + Clone + ToString>(y: &[T], x: &DesignMatrix) -> Result<RegressionFit, FitError> {
    check_len(x, y.len())?;
    let mut levels: Vec<T> = y.to_vec();
    levels.sort();
    levels.dedup();
    if levels.len() < 2 {
        return Err(FitError::Degenerate("ordinal response needs at least two categories"));
    }
    let x = x.without_intercept();
    check_rank(&x)?;
    if x.ncols() > 0 {
        // A constant column would duplicate the cutpoints.
        let with_const = DesignMatrix::new(
            std::iter::once(INTERCEPT.to_string()).chain(x.names().iter().cloned()).collect(),
            x.matrix().clone().insert_column(0, 1.0),
        )?;
        check_rank(&with_const)?;
    }
    let idx: Vec<usize> = y.iter().map(|v| levels.binary_search(v).expect("level")).collect();
    let k = levels.len();
    let n = y.len() as f64;

    let mut start = DVector::zeros(k - 1 + x.ncols());
    let mut cum = 0.0;
    for j in 0..k - 1 {
        cum += idx.iter().filter(|&&c| c == j).count() as f64;
        let p = (cum / n).clamp(1e-6, 1.0 - 1e-6);
        start[j] = (p / (1.0 - p)).ln();
    }
    let cuts = k - 1;
    let m = x.matrix();
    let result = newton(
        start,
        |params| ordinal_objective(m, &idx, params),
        |params| (1..cuts).all(|j| params[j] > params[j - 1]),
        |params| params.rows(cuts, params.len() - cuts).amax() > DIVERGENCE,
    )?;
    let (cov, cond) = covariance(&result.objective.hess)?;
    let params = result.params.as_slice();
    let diag: Vec<f64> = cov.diagonal().iter().copied().collect();
    let r = report(x.names(), &params[cuts..], &diag[cuts..]);
    let n_params = params.len();
    let ll = result.objective.ll;
    Ok(RegressionFit {
        family: Family::Ordinal,
        coefficients: r.coefficients,
        standard_errors: r.standard_errors,
        z_values: r.z_values,
        p_values: r.p_values,
        cutpoints: params[..cuts].to_vec(),
        levels: levels.iter().map(ToString::to_string).collect(),
        theta: None,
        deviance: None,
        pearson_chi2: None,
        log_likelihood: ll,
        aic: 2.0 * n_params as f64 - 2.0 * ll,
        k: n_params,
        n_obs: y.len(),
        hessian_condition_number: cond,
        converged: true,
        iterations: result.iterations,
    })
}

// ---------------------------------------------------------------------------
// Negative binomial

fn nb_term(y: f64, mu: f64, theta: f64) -> f64 {
    ln_gamma(y + theta) - ln_gamma(theta) - ln_gamma(y + 1.0) + theta * (theta / (theta + mu)).ln()
        + if y > 0.0 { y * (mu / (theta + mu)).ln() } else { 0.0 }
}

/// NB2 log-likelihood and its gradient in `(β, ln θ)`.
pub fn nb_loglik(x: &DMatrix<f64>, y: &[f64], beta: &DVector<f64>, log_theta: f64) -> (f64, DVector<f64>) {
    let theta = log_theta.exp();
    let eta = x * beta;
    let p = x.ncols();
    let mut ll = 0.0;
    let mut grad = DVector::zeros(p + 1);
    let dg_theta = digamma(theta);
    for i in 0..x.nrows() {
        let mu = eta[i].exp();
        ll += nb_term(y[i], mu, theta);
        let d_eta = theta * (y[i] - mu) / (theta + mu);
        for c in 0..p {
            grad[c] += d_eta * x[(i, c)];
        }
        let d_theta = digamma(y[i] + theta) - dg_theta + (theta / (theta + mu)).ln() + 1.0 - (y[i] + theta) / (theta + mu);
        grad[p] += d_theta * theta;
    }
    (ll, grad)
}

fn nb_beta_objective(x: &DMatrix<f64>, y: &[f64], beta: &DVector<f64>, theta: f64) -> Objective {
    let eta = x * beta;
    let p = x.ncols();
    let mut ll = 0.0;
    let mut grad = DVector::zeros(p);
    let mut hess = DMatrix::zeros(p, p);
    for i in 0..x.nrows() {
        let mu = eta[i].exp();
        if !mu.is_finite() {
            return Objective { ll: f64::NEG_INFINITY, grad, hess };
        }
        ll += nb_term(y[i], mu, theta);
        let xi = x.row(i).transpose();
        grad.axpy(theta * (y[i] - mu) / (theta + mu), &xi, 1.0);
        hess.ger(-theta * mu * (theta + y[i]) / ((theta + mu) * (theta + mu)), &xi, &xi, 1.0);
    }
    Objective { ll, grad, hess }
}

/// Maximizes the log-likelihood over `ln θ` within fixed bounds by golden-section search.
fn nb_theta(y: &[f64], mu: &[f64]) -> f64 {
    let ll = |lt: f64| {
        let t = f64::exp(lt);
        y.iter().zip(mu).map(|(&y, &m)| nb_term(y, m, t)).sum::<f64>()
    };
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = LOG_THETA_BOUNDS;
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut fc, mut fd) = (ll(c), ll(d));
    while b - a > 1e-9 {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = ll(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = ll(d);
        }
    }
    ((a + b) / 2.0).exp()
}

/// NB2 regression with log link. Alternates Newton steps on `β` at fixed `θ`
/// with a one-dimensional maximization over `θ`.
pub fn fit_nb(y: &[f64], x: &DesignMatrix) -> Result<RegressionFit, FitError> {
    check_len(x, y.len())?;
    if y.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(FitError::Degenerate("counts must be non-negative"));
    }
    if y.iter().all(|v| *v == 0.0) {
        return Err(FitError::Degenerate("all-zero response"));
    }
    check_rank(x)?;
    let m = x.matrix();

    // Start from least squares on ln(y + 0.5).
    let target = DVector::from_iterator(y.len(), y.iter().map(|v| (v + 0.5).ln()));
    let mut beta = m
        .clone()
        .svd(true, true)
        .solve(&target, 1e-12)
        .map_err(|_| FitError::Degenerate("initial least squares"))?;
    let mut theta = 1.0;
    let mut ll_prev = f64::NEG_INFINITY;
    let mut iterations = 0;
    let mut last_hess = None;
    let mut converged = false;
    for outer in 1..=MAX_ITER {
        iterations = outer;
        let inner = newton(
            beta.clone(),
            |b| nb_beta_objective(m, y, b, theta),
            |_| true,
            |b| b.amax() > 1e3,
        )
        .map_err(|e| if e == FitError::Separation { FitError::Degenerate("diverging coefficients") } else { e })?;
        beta = inner.params;
        let mu: Vec<f64> = (m * &beta).iter().map(|e| e.exp()).collect();
        theta = nb_theta(y, &mu);
        let ll: f64 = y.iter().zip(&mu).map(|(&y, &m)| nb_term(y, m, theta)).sum();
        last_hess = Some(nb_beta_objective(m, y, &beta, theta).hess);
        if (ll - ll_prev).abs() / ll.abs().max(1e-300) < LL_TOL {
            ll_prev = ll;
            converged = true;
            break;
        }
        ll_prev = ll;
    }
    if !converged {
        return Err(FitError::NotConverged(MAX_ITER));
    }
    let (cov, cond) = covariance(&last_hess.expect("at least one iteration"))?;
    let r = report(x.names(), beta.as_slice(), cov.diagonal().as_slice());
    let mu: Vec<f64> = (m * &beta).iter().map(|e| e.exp()).collect();
    let deviance = 2.0
        * y.iter()
            .zip(&mu)
            .map(|(&y, &m)| {
                let a = if y > 0.0 { y * (y / m).ln() } else { 0.0 };
                a - (y + theta) * ((y + theta) / (m + theta)).ln()
            })
            .sum::<f64>();
    let pearson = y.iter().zip(&mu).map(|(&y, &m)| (y - m).powi(2) / (m + m * m / theta)).sum();
    let k = x.ncols() + 1;
    Ok(RegressionFit {
        family: Family::NegativeBinomial,
        coefficients: r.coefficients,
        standard_errors: r.standard_errors,
        z_values: r.z_values,
        p_values: r.p_values,
        cutpoints: Vec::new(),
        levels: Vec::new(),
        theta: Some(theta),
        deviance: Some(deviance),
        pearson_chi2: Some(pearson),
        log_likelihood: ll_prev,
        aic: 2.0 * k as f64 - 2.0 * ll_prev,
        k,
        n_obs: y.len(),
        hessian_condition_number: cond,
        converged: true,
        iterations,
    })
}
