//! Random-intercept linear mixed model fitted by profiled REML.
//!
//! With `lambda = sigma_b^2 / sigma_e^2`, each subject's covariance is
//! `sigma_e^2 (I + lambda 11')`. For fixed `lambda` the GLS coefficients and
//! the REML residual variance have closed forms, leaving a one-dimensional
//! search over `log(lambda)` in `[-12, 12]`: a coarse grid locates the peak
//! and a golden-section search refines it.

use nalgebra::{DMatrix, DVector};

use crate::data::LongitudinalDataset;
use crate::design::{build_design, DesignMatrix, ModelSpec, INTERCEPT};
use crate::error::{Error, Result};
use crate::fit::{CoefficientTable, FitSummary, StatKind, TermEstimate};
use crate::linalg::{spd_inverse, spd_solve, weighted_normal_equations, ExchangeableInverse};
use crate::stats::normal_two_sided_p;

pub const LOG_LAMBDA_MIN: f64 = -12.0;
pub const LOG_LAMBDA_MAX: f64 = 12.0;
const COARSE_STEP: f64 = 0.5;
const SEARCH_TOL: f64 = 1e-9;
const MAX_ITER: usize = 200;

#[derive(Debug, Clone)]
pub struct LmmFit {
    pub labels: Vec<String>,
    pub coefficients: Vec<f64>,
    pub cov: DMatrix<f64>,
    pub std_errors: Vec<f64>,
    pub test_stats: Vec<f64>,
    /// Normal-approximation two-sided p-values.
    pub p_values: Vec<f64>,
    /// Containment degrees of freedom, reported alongside.
    pub df: Vec<f64>,
    pub sigma_b2: f64,
    pub sigma_e2: f64,
    pub icc: f64,
    pub log_lambda: f64,
    pub reml_loglik: f64,
    pub converged: bool,
    pub iterations: usize,
    pub n_subjects: usize,
    pub n_obs: usize,
}

impl LmmFit {
    pub fn coefficient(&self, label: &str) -> Option<f64> {
        self.labels
            .iter()
            .position(|l| l == label)
            .map(|i| self.coefficients[i])
    }
}

impl FitSummary for LmmFit {
    fn table(&self) -> CoefficientTable {
        CoefficientTable {
            kind: StatKind::T,
            rows: (0..self.labels.len())
                .map(|i| TermEstimate {
                    term: self.labels[i].clone(),
                    estimate: self.coefficients[i],
                    std_error: self.std_errors[i],
                    statistic: self.test_stats[i],
                    p_value: self.p_values[i],
                    df: Some(self.df[i]),
                })
                .collect(),
        }
    }

    fn converged(&self) -> bool {
        self.converged
    }
}

/// Intraclass correlation `sigma_b2 / (sigma_b2 + sigma_e2)`.
pub fn icc(sigma_b2: f64, sigma_e2: f64) -> Result<f64> {
    if sigma_b2 < 0.0 || sigma_e2 < 0.0 {
        return Err(Error::Numerical("variance components must be nonnegative".into()));
    }
    let total = sigma_b2 + sigma_e2;
    if total == 0.0 {
        return Err(Error::Numerical("ICC undefined when both variances are zero".into()));
    }
    Ok(sigma_b2 / total)
}

/// GLS solution and REML criterion at one value of `lambda`.
#[derive(Debug, Clone)]
pub struct ProfilePoint {
    pub lambda: f64,
    pub beta: DVector<f64>,
    pub sigma_e2: f64,
    pub reml_loglik: f64,
    /// `X' H^-1 X` with `H = I + lambda 11'` per subject.
    pub xthx: DMatrix<f64>,
}

/// Profiled REML log-likelihood at variance ratio `lambda >= 0`:
/// `-1/2 [(N-p)(1 + log(2 pi sigma^2)) + sum log|H_i| + log|X'H^-1 X|]`.
pub fn reml_profile(design: &DesignMatrix, lambda: f64) -> Result<ProfilePoint> {
    let x = &design.rows;
    let y = &design.response;
    let (n, p) = (design.n_obs(), design.n_cols());
    if n <= p {
        return Err(Error::Numerical(format!("{n} observations for {p} coefficients")));
    }
    let weight = |m: usize| ExchangeableInverse::random_intercept(lambda, m);
    let (xthx, xthy) = weighted_normal_equations(x, y, design.clusters(), weight);
    let (beta, logdet_xthx) = spd_solve(&xthx, &xthy, "X'H^-1X")?;

    let resid = y - x * &beta;
    let mut quad = 0.0;
    let mut logdet_h = 0.0;
    for range in design.clusters() {
        let r = &resid.as_slice()[range.clone()];
        quad += weight(range.len()).quad(r, r);
        logdet_h += (1.0 + range.len() as f64 * lambda).ln();
    }
    let dof = (n - p) as f64;
    let sigma_e2 = quad / dof;
    let reml_loglik = -0.5
        * (dof * (1.0 + (2.0 * std::f64::consts::PI * sigma_e2).ln()) + logdet_h + logdet_xthx);
    Ok(ProfilePoint {
        lambda,
        beta,
        sigma_e2,
        reml_loglik,
        xthx,
    })
}

pub fn fit_lmm(dataset: &LongitudinalDataset, spec: &ModelSpec) -> Result<LmmFit> {
    let design = build_design(dataset, spec)?;
    fit_lmm_design(&design)
}

pub fn fit_lmm_design(design: &DesignMatrix) -> Result<LmmFit> {
    design.check_rank()?;
    let clusters = design.clusters();
    if clusters.len() < 2 || clusters.iter().all(|r| r.len() < 2) {
        return Err(Error::Numerical(
            "need at least 2 subjects and some subject with repeated visits".into(),
        ));
    }

    let eval = |log_lambda: f64| reml_profile(design, log_lambda.exp()).map(|pt| pt.reml_loglik);

    let n_coarse = ((LOG_LAMBDA_MAX - LOG_LAMBDA_MIN) / COARSE_STEP).round() as usize;
    let mut best = (LOG_LAMBDA_MIN, f64::NEG_INFINITY);
    for k in 0..=n_coarse {
        let ll = LOG_LAMBDA_MIN + k as f64 * COARSE_STEP;
        let v = eval(ll)?;
        if v > best.1 {
            best = (ll, v);
        }
    }

    // golden-section refinement on the bracket around the best grid point
    let invphi = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = (best.0 - COARSE_STEP).max(LOG_LAMBDA_MIN);
    let mut b = (best.0 + COARSE_STEP).min(LOG_LAMBDA_MAX);
    let mut c = b - invphi * (b - a);
    let mut d = a + invphi * (b - a);
    let mut fc = eval(c)?;
    let mut fd = eval(d)?;
    let mut iterations = 0;
    while (b - a) > SEARCH_TOL && iterations < MAX_ITER {
        iterations += 1;
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - invphi * (b - a);
            fc = eval(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + invphi * (b - a);
            fd = eval(d)?;
        }
    }
    let converged = (b - a) <= SEARCH_TOL;

    let mut log_lambda = 0.5 * (a + b);
    let mut point = reml_profile(design, log_lambda.exp())?;
    for edge in [LOG_LAMBDA_MIN, LOG_LAMBDA_MAX] {
        if (edge - log_lambda).abs() <= COARSE_STEP {
            let at_edge = reml_profile(design, edge.exp())?;
            if at_edge.reml_loglik > point.reml_loglik {
                log_lambda = edge;
                point = at_edge;
            }
        }
    }

    let sigma_e2 = point.sigma_e2;
    let sigma_b2 = point.lambda * sigma_e2;
    let cov = spd_inverse(&point.xthx, "X'H^-1X")? * sigma_e2;
    let p = design.n_cols();
    let coefficients: Vec<f64> = point.beta.iter().copied().collect();
    let std_errors: Vec<f64> = (0..p).map(|i| cov[(i, i)].sqrt()).collect();
    let test_stats: Vec<f64> = coefficients
        .iter()
        .zip(&std_errors)
        .map(|(b, s)| b / s)
        .collect();
    let p_values = test_stats.iter().map(|&t| normal_two_sided_p(t)).collect();

    Ok(LmmFit {
        labels: design.column_labels.clone(),
        df: containment_df(design),
        coefficients,
        cov,
        std_errors,
        test_stats,
        p_values,
        sigma_b2,
        sigma_e2,
        icc: icc(sigma_b2, sigma_e2)?,
        log_lambda,
        reml_loglik: point.reml_loglik,
        converged,
        iterations,
        n_subjects: clusters.len(),
        n_obs: design.n_obs(),
    })
}

/// Between-subject terms get `n_subjects - p_between - 1`; the intercept and
/// within-subject terms get `n_obs - n_subjects - p_within`.
fn containment_df(design: &DesignMatrix) -> Vec<f64> {
    let between = design.between_cluster_columns();
    let is_intercept = |j: usize| design.column_labels[j] == INTERCEPT;
    let p_between = (0..between.len())
        .filter(|&j| between[j] && !is_intercept(j))
        .count();
    let p_within = (0..between.len())
        .filter(|&j| !between[j] && !is_intercept(j))
        .count();
    let n_sub = design.clusters().len() as f64;
    let n_obs = design.n_obs() as f64;
    (0..between.len())
        .map(|j| {
            if between[j] && !is_intercept(j) {
                n_sub - p_between as f64 - 1.0
            } else {
                n_obs - n_sub - p_within as f64
            }
        })
        .collect()
}
