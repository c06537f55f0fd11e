//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use hedonic_gamlss::families::{Family, Link, Param};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, InverseGaussian, LogNormal, Normal, Weibull};

/// Reinsch `Q` (m x m-2) and `R` (m-2 x m-2) for sorted distinct knots.
pub fn reinsch_matrices(x: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
    let m = x.len();
    let n = m - 2;
    let h: Vec<f64> = x.windows(2).map(|p| p[1] - p[0]).collect();
    let mut q = DMatrix::<f64>::zeros(m, n);
    let mut r = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        q[(j, j)] = 1.0 / h[j];
        q[(j + 1, j)] = -1.0 / h[j] - 1.0 / h[j + 1];
        q[(j + 2, j)] = 1.0 / h[j + 1];
        r[(j, j)] = (h[j] + h[j + 1]) / 3.0;
        if j + 1 < n {
            r[(j, j + 1)] = h[j + 1] / 6.0;
            r[(j + 1, j)] = h[j + 1] / 6.0;
        }
    }
    (q, r)
}

/// Dense `S = (W + lambda K)^-1 W` with `K = Q R^-1 Q'`, formed directly.
/// Accurate only while `lambda K` is moderately conditioned.
pub fn dense_smoother_direct(x: &[f64], w: &[f64], lambda: f64) -> DMatrix<f64> {
    let (q, r) = reinsch_matrices(x);
    let k = &q * r.try_inverse().unwrap() * q.transpose();
    let wm = DMatrix::from_diagonal(&DVector::from_column_slice(w));
    (&wm + k * lambda).lu().solve(&wm).unwrap()
}

/// Dense smoother matrix from a Householder QR of the stacked matrix
/// `[L_R'; sqrt(lambda) W^-1/2 Q]`: with `B` the lower block of the
/// orthogonal factor, `S = I - W^-1/2 B B' W^1/2`.
pub fn dense_smoother(x: &[f64], w: &[f64], lambda: f64) -> DMatrix<f64> {
    let m = x.len();
    let n = m - 2;
    let (q, r) = reinsch_matrices(x);
    let lr = r.cholesky().unwrap().l();
    let mut stacked = DMatrix::<f64>::zeros(n + m, n);
    stacked.view_mut((0, 0), (n, n)).copy_from(&lr.transpose());
    for i in 0..m {
        for j in 0..n {
            stacked[(n + i, j)] = lambda.sqrt() * q[(i, j)] / w[i].sqrt();
        }
    }
    let qf = stacked.qr().q();
    let b = qf.view((n, 0), (m, n)).into_owned();
    let bbt = &b * b.transpose();
    DMatrix::from_fn(m, m, |i, j| {
        let delta = if i == j { 1.0 } else { 0.0 };
        delta - bbt[(i, j)] * w[j].sqrt() / w[i].sqrt()
    })
}

pub fn sorted_uniform(rng: &mut ChaCha8Rng, n: usize, hi: f64) -> Vec<f64> {
    let mut x: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..hi)).collect();
    x.sort_by(f64::total_cmp);
    x
}

/// Least squares through the explicit inverse of `X'X`. Returns the
/// coefficients and the residual sum of squares.
pub fn normal_equations(x: &DMatrix<f64>, y: &[f64]) -> (Vec<f64>, f64, DMatrix<f64>) {
    let xtx_inv = (x.transpose() * x).try_inverse().unwrap();
    let yv = DVector::from_column_slice(y);
    let beta = &xtx_inv * x.transpose() * &yv;
    let r = &yv - x * &beta;
    (beta.iter().copied().collect(), r.dot(&r), xtx_inv)
}

/// Gamma GLM with log link by Fisher scoring with a Cholesky solve of the
/// weighted normal equations, started from `log(mean(y))` and run until the
/// step is negligible. Returns the coefficients.
pub fn gamma_log_scoring(x: &DMatrix<f64>, y: &[f64]) -> Vec<f64> {
    let p = x.ncols();
    let n = y.len();
    let mut beta = DVector::<f64>::zeros(p);
    beta[0] = (y.iter().sum::<f64>() / n as f64).ln();
    for _ in 0..200 {
        let eta = x * &beta;
        // With a log link the gamma working weights are constant, so each
        // step solves X'X d = X'((y - mu)/mu).
        let score = DVector::from_fn(n, |i, _| (y[i] - eta[i].exp()) / eta[i].exp());
        let xtx = x.transpose() * x;
        let step = xtx.cholesky().unwrap().solve(&(x.transpose() * score));
        beta += &step;
        if step.amax() < 1e-14 * (1.0 + beta.amax()) {
            break;
        }
    }
    beta.iter().copied().collect()
}

/// Intercept plus `p - 1` standard normal covariates.
pub fn random_design(rng: &mut ChaCha8Rng, n: usize, p: usize) -> DMatrix<f64> {
    let normal = Normal::new(0.0, 1.0).unwrap();
    DMatrix::from_fn(n, p, |_, j| if j == 0 { 1.0 } else { normal.sample(rng) })
}

/// One draw from `family` at `(mu, sigma)` under the mean-dispersion
/// parameterization.
pub fn draw(family: Family, mu: f64, sigma: f64, rng: &mut ChaCha8Rng) -> f64 {
    match family {
        Family::NO => Normal::new(mu, sigma).unwrap().sample(rng),
        Family::LOGNO => LogNormal::new(mu, sigma).unwrap().sample(rng),
        Family::GA => {
            let shape = 1.0 / (sigma * sigma);
            Gamma::new(shape, mu / shape).unwrap().sample(rng)
        }
        Family::IG => InverseGaussian::new(mu, 1.0 / (sigma * sigma)).unwrap().sample(rng),
        Family::WEI => Weibull::new(mu, sigma).unwrap().sample(rng),
    }
}

/// Central finite difference of `log f` with respect to `eta = g(theta)`.
pub fn fd_score(family: Family, which: Param, link: Link, y: f64, mu: f64, sigma: f64, h: f64) -> f64 {
    let theta = if which == Param::Mu { mu } else { sigma };
    let eta = link.apply(theta).unwrap();
    let ll = |e: f64| {
        let t = link.inverse(e).unwrap();
        let (m, s) = if which == Param::Mu { (t, sigma) } else { (mu, t) };
        family.log_density(y, m, s).unwrap()
    };
    (ll(eta + h) - ll(eta - h)) / (2.0 * h)
}

/// Trapezoid rule on `[a, b]` with `m` intervals.
pub fn trapezoid(f: impl Fn(f64) -> f64, a: f64, b: f64, m: usize) -> f64 {
    let h = (b - a) / m as f64;
    let mut s = 0.5 * (f(a) + f(b));
    for i in 1..m {
        s += f(a + i as f64 * h);
    }
    s * h
}

/// `E[g(Y)]` under `family` by integration in `t = log y` (or `y` itself for
/// the normal family). The integrand decays fast in both tails, so the
/// trapezoid rule on a wide grid is accurate.
pub fn expectation(family: Family, mu: f64, sigma: f64, g: impl Fn(f64) -> f64) -> f64 {
    let dens = |y: f64| family.log_density(y, mu, sigma).map(f64::exp).unwrap_or(0.0);
    match family {
        Family::NO => trapezoid(|y| g(y) * dens(y), mu - 40.0 * sigma, mu + 40.0 * sigma, 200_000),
        _ => {
            let centre = if family == Family::LOGNO { mu } else { mu.ln() };
            trapezoid(
                |t| {
                    let y = t.exp();
                    g(y) * dens(y) * y
                },
                centre - 40.0,
                centre + 12.0,
                400_000,
            )
        }
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

pub fn sd(x: &[f64]) -> f64 {
    let m = mean(x);
    (x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() as f64 - 1.0)).sqrt()
}
