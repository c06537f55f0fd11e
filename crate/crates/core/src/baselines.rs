//! Classical normal linear regression with Box-Cox and specification tests,
//! HC3 covariance, and the gamma GLM with log link.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{check_rank, mat_vec, wls, xtwx_inverse};
use crate::math::{chi2_sf, ln_gamma, norm_sf};

const LEVERAGE_MAX: f64 = 1.0 - 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OlsFit {
    pub names: Vec<String>,
    pub beta: Vec<f64>,
    pub fitted: Vec<f64>,
    pub residuals: Vec<f64>,
    /// Unbiased residual variance `RSS / (n - p)`.
    pub sigma2_hat: f64,
    pub rss: f64,
    pub r2: f64,
    pub adj_r2: f64,
    /// Gaussian log-likelihood at the ML variance `RSS / n`.
    pub loglik: f64,
    pub aic: f64,
    pub bic: f64,
    pub n: usize,
    /// Parameters counted by AIC/BIC: coefficients plus the variance.
    pub k: usize,
    pub hat_diagonals: Vec<f64>,
    pub vcov_classical: Vec<Vec<f64>>,
    /// `None` when some observation has leverage 1.
    pub vcov_hc3: Option<Vec<Vec<f64>>>,
}

impl OlsFit {
    pub fn se_classical(&self) -> Vec<f64> {
        diag_sqrt(&self.vcov_classical)
    }

    pub fn se_hc3(&self) -> Option<Vec<f64>> {
        self.vcov_hc3.as_deref().map(diag_sqrt)
    }
}

fn diag_sqrt(v: &[Vec<f64>]) -> Vec<f64> {
    (0..v.len()).map(|j| v[j][j].sqrt()).collect()
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// Ordinary least squares through a QR decomposition of `X`.
pub fn ols_fit(x: &DMatrix<f64>, y: &[f64], names: &[String]) -> Result<OlsFit> {
    let (n, p) = x.shape();
    if n <= p {
        return Err(Error::InsufficientData(format!(
            "{n} observations for {p} coefficients"
        )));
    }
    check_rank(x, names)?;
    let beta = wls(x, y, None)?;
    let fitted = mat_vec(x, &beta);
    let residuals: Vec<f64> = y.iter().zip(&fitted).map(|(a, b)| a - b).collect();
    let rss: f64 = residuals.iter().map(|e| e * e).sum();
    let ybar = y.iter().sum::<f64>() / n as f64;
    let tss: f64 = y.iter().map(|v| (v - ybar).powi(2)).sum();
    let r2 = if tss > 0.0 { 1.0 - rss / tss } else { 0.0 };
    let adj_r2 = 1.0 - (1.0 - r2) * (n as f64 - 1.0) / (n - p) as f64;
    let nf = n as f64;
    let loglik = -0.5 * nf * ((2.0 * PI * rss / nf).ln() + 1.0);
    let k = p + 1;
    let q = x.clone().qr().q();
    let hat_diagonals: Vec<f64> = (0..n).map(|i| q.row(i).norm_squared()).collect();
    let xtx_inv = xtwx_inverse(x, None, names)?;
    let sigma2_hat = rss / (n - p) as f64;
    let vcov_classical = to_rows(&(&xtx_inv * sigma2_hat));
    let vcov_hc3 = hc3_vcov(x, &xtx_inv, &residuals, &hat_diagonals)
        .ok()
        .map(|m| to_rows(&m));
    Ok(OlsFit {
        names: names.to_vec(),
        beta,
        fitted,
        residuals,
        sigma2_hat,
        rss,
        r2,
        adj_r2,
        loglik,
        aic: -2.0 * loglik + 2.0 * k as f64,
        bic: -2.0 * loglik + nf.ln() * k as f64,
        n,
        k,
        hat_diagonals,
        vcov_classical,
        vcov_hc3,
    })
}

fn hc3_vcov(x: &DMatrix<f64>, xtx_inv: &DMatrix<f64>, e: &[f64], h: &[f64]) -> Result<DMatrix<f64>> {
    let p = x.ncols();
    let mut meat = DMatrix::<f64>::zeros(p, p);
    for i in 0..x.nrows() {
        if h[i] >= LEVERAGE_MAX {
            return Err(Error::Leverage { row: i, leverage: h[i] });
        }
        let omega = (e[i] / (1.0 - h[i])).powi(2);
        for a in 0..p {
            let xa = x[(i, a)] * omega;
            for b in 0..p {
                meat[(a, b)] += xa * x[(i, b)];
            }
        }
    }
    Ok(xtx_inv * meat * xtx_inv)
}

/// HC3 standard errors `sqrt(diag((X'X)^-1 X' diag(e^2/(1-h)^2) X (X'X)^-1))`.
pub fn hc3_se(fit: &OlsFit, x: &DMatrix<f64>) -> Result<Vec<f64>> {
    let xtx_inv = xtwx_inverse(x, None, &fit.names)?;
    let v = hc3_vcov(x, &xtx_inv, &fit.residuals, &fit.hat_diagonals)?;
    Ok((0..v.nrows()).map(|j| v[(j, j)].sqrt()).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxCoxProfile {
    pub lambda_hat: f64,
    pub loglik_hat: f64,
    pub grid: Vec<f64>,
    pub profile: Vec<f64>,
}

/// 81 equally spaced points on [-2, 2].
pub fn default_lambda_grid() -> Vec<f64> {
    (0..81).map(|i| -2.0 + 0.05 * i as f64).collect()
}

pub fn box_cox_transform(y: f64, lambda: f64) -> f64 {
    if lambda.abs() < 1e-12 {
        y.ln()
    } else {
        (y.powf(lambda) - 1.0) / lambda
    }
}

/// Profile log-likelihood of the Box-Cox parameter including the Jacobian
/// `(lambda - 1) sum log y`.
pub fn box_cox_loglik(y: &[f64], x: &DMatrix<f64>, lambda: f64) -> Result<f64> {
    let z: Vec<f64> = y.iter().map(|&v| box_cox_transform(v, lambda)).collect();
    let beta = wls(x, &z, None)?;
    let fit = mat_vec(x, &beta);
    let rss: f64 = z.iter().zip(&fit).map(|(a, b)| (a - b).powi(2)).sum();
    let n = y.len() as f64;
    let jac: f64 = y.iter().map(|v| v.ln()).sum();
    Ok(-0.5 * n * ((2.0 * PI * rss / n).ln() + 1.0) + (lambda - 1.0) * jac)
}

/// Grid search for the profile maximum, refined by golden-section search
/// between the grid neighbours of the best grid point.
pub fn box_cox_profile(y: &[f64], x: &DMatrix<f64>, grid: &[f64]) -> Result<BoxCoxProfile> {
    for (i, &v) in y.iter().enumerate() {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::domain(
                "y",
                v,
                format!("Box-Cox needs positive responses (row {i})"),
            ));
        }
    }
    if grid.len() < 3 {
        return Err(Error::domain(
            "lambda_grid",
            grid.len() as f64,
            "need at least 3 grid points",
        ));
    }
    let mut grid = grid.to_vec();
    grid.sort_by(f64::total_cmp);
    let profile = grid
        .iter()
        .map(|&l| box_cox_loglik(y, x, l))
        .collect::<Result<Vec<_>>>()?;
    let best = (0..grid.len())
        .max_by(|&a, &b| profile[a].total_cmp(&profile[b]))
        .expect("nonempty grid");
    let lo = grid[best.saturating_sub(1)];
    let hi = grid[(best + 1).min(grid.len() - 1)];
    let (lambda_hat, loglik_hat) = golden_max(|l| box_cox_loglik(y, x, l), lo, hi, 1e-6)?;
    let (lambda_hat, loglik_hat) = if loglik_hat >= profile[best] {
        (lambda_hat, loglik_hat)
    } else {
        (grid[best], profile[best])
    };
    Ok(BoxCoxProfile {
        lambda_hat,
        loglik_hat,
        grid,
        profile,
    })
}

fn golden_max<F: Fn(f64) -> Result<f64>>(f: F, mut a: f64, mut b: f64, tol: f64) -> Result<(f64, f64)> {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    while b - a > tol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d)?;
        }
    }
    let m = 0.5 * (a + b);
    Ok((m, f(m)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub df: f64,
    pub p: f64,
}

/// Jarque-Bera normality test with moment skewness and kurtosis.
pub fn jarque_bera(residuals: &[f64]) -> Result<TestResult> {
    let n = residuals.len();
    if n < 8 {
        return Err(Error::InsufficientData(format!(
            "Jarque-Bera needs at least 8 residuals, got {n}"
        )));
    }
    let nf = n as f64;
    let m = residuals.iter().sum::<f64>() / nf;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &e in residuals {
        let d = e - m;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= nf;
    m3 /= nf;
    m4 /= nf;
    if m2 == 0.0 {
        return Err(Error::Undefined("Jarque-Bera on constant residuals".into()));
    }
    let s = m3 / m2.powf(1.5);
    let k = m4 / (m2 * m2);
    let statistic = nf / 6.0 * (s * s + (k - 3.0).powi(2) / 4.0);
    Ok(TestResult {
        statistic,
        df: 2.0,
        p: chi2_sf(statistic, 2.0),
    })
}

/// Breusch-Pagan test: `n R^2` of the regression of squared residuals on `X`,
/// referred to chi-squared with `p - 1` df.
pub fn breusch_pagan(x: &DMatrix<f64>, residuals: &[f64]) -> Result<TestResult> {
    let (n, p) = x.shape();
    if p < 2 {
        return Err(Error::InsufficientData(
            "Breusch-Pagan needs at least one regressor".into(),
        ));
    }
    let names: Vec<String> = (0..p).map(|j| format!("x{j}")).collect();
    check_rank(x, &names)?;
    let e2: Vec<f64> = residuals.iter().map(|e| e * e).collect();
    let beta = wls(x, &e2, None)?;
    let fit = mat_vec(x, &beta);
    let mean = e2.iter().sum::<f64>() / n as f64;
    let tss: f64 = e2.iter().map(|v| (v - mean).powi(2)).sum();
    let rss: f64 = e2.iter().zip(&fit).map(|(a, b)| (a - b).powi(2)).sum();
    let r2 = if tss > 1e-300 { (1.0 - rss / tss).max(0.0) } else { 0.0 };
    let statistic = n as f64 * r2;
    let df = (p - 1) as f64;
    Ok(TestResult {
        statistic,
        df,
        p: chi2_sf(statistic, df),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlmFit {
    pub names: Vec<String>,
    pub beta: Vec<f64>,
    pub eta: Vec<f64>,
    pub mu_hat: Vec<f64>,
    /// Pearson moment estimate `sum ((y - mu)/mu)^2 / (n - p)`.
    pub dispersion: f64,
    pub deviance: f64,
    /// Log-likelihood with the gamma shape at its deviance-based estimate
    /// `n / deviance`.
    pub loglik: f64,
    pub aic: f64,
    pub bic: f64,
    pub se: Vec<f64>,
    pub z: Vec<f64>,
    pub p: Vec<f64>,
    pub iterations: usize,
}

pub const GLM_MAX_ITER: usize = 100;

/// Gamma GLM with log link by iteratively reweighted least squares.
pub fn glm_fit_gamma_log(x: &DMatrix<f64>, y: &[f64], names: &[String]) -> Result<GlmFit> {
    let (n, p) = x.shape();
    for (i, &v) in y.iter().enumerate() {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::domain(
                "y",
                v,
                format!("gamma response must be positive (row {i})"),
            ));
        }
    }
    if n <= p {
        return Err(Error::InsufficientData(format!(
            "{n} observations for {p} coefficients"
        )));
    }
    check_rank(x, names)?;
    let deviance_of = |mu: &[f64]| -> f64 {
        2.0 * y
            .iter()
            .zip(mu)
            .map(|(&yi, &mi)| -(yi / mi).ln() + (yi - mi) / mi)
            .sum::<f64>()
    };
    // For the log link the working weights are constant.
    let mut eta: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mut mu: Vec<f64> = y.to_vec();
    let mut dev = deviance_of(&mu);
    let mut beta = vec![0.0; p];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < GLM_MAX_ITER {
        iterations += 1;
        let z: Vec<f64> = (0..n).map(|i| eta[i] + (y[i] - mu[i]) / mu[i]).collect();
        let new_beta = wls(x, &z, None)?;
        let step = beta
            .iter()
            .zip(&new_beta)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        beta = new_beta;
        eta = mat_vec(x, &beta);
        mu = eta.iter().map(|e| e.exp()).collect();
        let new_dev = deviance_of(&mu);
        if !new_dev.is_finite() {
            break;
        }
        let change = (new_dev - dev).abs();
        dev = new_dev;
        if iterations > 1 && change < 1e-10 * (dev.abs() + 0.1) && step < 1e-10 {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Convergence { iterations });
    }
    let dispersion = y
        .iter()
        .zip(&mu)
        .map(|(&yi, &mi)| ((yi - mi) / mi).powi(2))
        .sum::<f64>()
        / (n - p) as f64;
    let xtx_inv = xtwx_inverse(x, None, names)?;
    let se: Vec<f64> = (0..p).map(|j| (dispersion * xtx_inv[(j, j)]).sqrt()).collect();
    let z: Vec<f64> = beta.iter().zip(&se).map(|(b, s)| b / s).collect();
    let pvals: Vec<f64> = z.iter().map(|v| 2.0 * norm_sf(v.abs())).collect();
    let shape = n as f64 / dev;
    let loglik: f64 = y
        .iter()
        .zip(&mu)
        .map(|(&yi, &mi)| shape * (shape / mi).ln() - ln_gamma(shape) + (shape - 1.0) * yi.ln() - shape * yi / mi)
        .sum();
    let k = (p + 1) as f64;
    Ok(GlmFit {
        names: names.to_vec(),
        beta,
        eta,
        mu_hat: mu,
        dispersion,
        deviance: dev,
        loglik,
        aic: -2.0 * loglik + 2.0 * k,
        bic: -2.0 * loglik + (n as f64).ln() * k,
        se,
        z,
        p: pvals,
        iterations,
    })
}
