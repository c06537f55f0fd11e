//! Two-parameter response distributions and link functions.
//!
//! Every family uses the mean-dispersion convention:
//!
//! * `NO`    normal, mean `mu`, standard deviation `sigma`
//! * `LOGNO` log-normal, `log Y ~ N(mu, sigma^2)`
//! * `GA`    gamma, mean `mu`, variance `sigma^2 mu^2`
//! * `IG`    inverse Gaussian, mean `mu`, variance `sigma^2 mu^3`
//! * `WEI`   Weibull with scale `mu` and shape `sigma`, so `F(mu) = 1 - 1/e`
//!
//! Scores and iterative weights are expressed on the predictor scale
//! `eta = g(theta)` and use the expected information of each parameter.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{digamma, gamma_p, ln_gamma, norm_cdf, norm_sf, trigamma};

/// Bounds applied to every iterative weight.
pub const WEIGHT_MIN: f64 = 1e-10;
pub const WEIGHT_MAX: f64 = 1e10;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Link {
    Log,
    Identity,
    Inverse,
}

impl Link {
    /// `eta = g(x)`.
    pub fn apply(self, x: f64) -> Result<f64> {
        match self {
            Link::Log if x <= 0.0 => Err(Error::domain("x", x, "log link needs a positive argument")),
            Link::Log => Ok(x.ln()),
            Link::Identity => Ok(x),
            Link::Inverse if x == 0.0 => Err(Error::domain("x", x, "inverse link of zero")),
            Link::Inverse => Ok(1.0 / x),
        }
    }

    /// `x = g^{-1}(eta)`.
    pub fn inverse(self, eta: f64) -> Result<f64> {
        match self {
            Link::Log => Ok(eta.exp()),
            Link::Identity => Ok(eta),
            Link::Inverse if eta == 0.0 => Err(Error::domain("eta", eta, "reciprocal of zero")),
            Link::Inverse => Ok(1.0 / eta),
        }
    }

    /// `d eta / d x`.
    pub fn derivative(self, x: f64) -> Result<f64> {
        match self {
            Link::Log if x <= 0.0 => Err(Error::domain("x", x, "log link needs a positive argument")),
            Link::Log => Ok(1.0 / x),
            Link::Identity => Ok(1.0),
            Link::Inverse if x == 0.0 => Err(Error::domain("x", x, "inverse link of zero")),
            Link::Inverse => Ok(-1.0 / (x * x)),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Link::Log => "log",
            Link::Identity => "identity",
            Link::Inverse => "inverse",
        }
    }

    pub const ALL: [Link; 3] = [Link::Log, Link::Identity, Link::Inverse];
}

impl fmt::Display for Link {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Link {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "log" => Ok(Link::Log),
            "identity" => Ok(Link::Identity),
            "inverse" | "reciprocal" => Ok(Link::Inverse),
            other => Err(Error::Schema(format!("unknown link '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Param {
    Mu,
    Sigma,
}

impl Param {
    pub const ALL: [Param; 2] = [Param::Mu, Param::Sigma];

    pub fn name(self) -> &'static str {
        match self {
            Param::Mu => "mu",
            Param::Sigma => "sigma",
        }
    }
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Param {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mu" => Ok(Param::Mu),
            "sigma" => Ok(Param::Sigma),
            other => Err(Error::Schema(format!("unknown distribution parameter '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[allow(clippy::upper_case_acronyms)]
pub enum Family {
    NO,
    LOGNO,
    GA,
    IG,
    WEI,
}

/// Per-observation distribution parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl ParamVector {
    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }

    pub fn get(&self, which: Param) -> &[f64] {
        match which {
            Param::Mu => &self.mu,
            Param::Sigma => &self.sigma,
        }
    }

    pub fn get_mut(&mut self, which: Param) -> &mut Vec<f64> {
        match which {
            Param::Mu => &mut self.mu,
            Param::Sigma => &mut self.sigma,
        }
    }
}

impl Family {
    pub const ALL: [Family; 5] = [Family::NO, Family::LOGNO, Family::GA, Family::IG, Family::WEI];

    pub fn name(self) -> &'static str {
        match self {
            Family::NO => "NO",
            Family::LOGNO => "LOGNO",
            Family::GA => "GA",
            Family::IG => "IG",
            Family::WEI => "WEI",
        }
    }

    pub fn n_params(self) -> usize {
        2
    }

    pub fn param_names(self) -> [&'static str; 2] {
        ["mu", "sigma"]
    }

    pub fn default_link(self, which: Param) -> Link {
        match (self, which) {
            (Family::NO | Family::LOGNO, Param::Mu) => Link::Identity,
            _ => Link::Log,
        }
    }

    /// Whether `mu` must be strictly positive.
    pub fn mu_positive(self) -> bool {
        !matches!(self, Family::NO | Family::LOGNO)
    }

    pub fn y_positive(self) -> bool {
        !matches!(self, Family::NO)
    }

    pub fn check_y(self, y: f64) -> Result<()> {
        if !y.is_finite() {
            return Err(Error::domain("y", y, "response must be finite"));
        }
        if self.y_positive() && y <= 0.0 {
            return Err(Error::domain(
                "y",
                y,
                format!("{} response must be positive", self.name()),
            ));
        }
        Ok(())
    }

    pub fn check_params(self, mu: f64, sigma: f64) -> Result<()> {
        if !mu.is_finite() || (self.mu_positive() && mu <= 0.0) {
            return Err(Error::domain(
                "mu",
                mu,
                format!("outside the {} parameter space", self.name()),
            ));
        }
        if !sigma.is_finite() || sigma <= 0.0 {
            return Err(Error::domain("sigma", sigma, "sigma must be positive"));
        }
        Ok(())
    }

    pub fn check_param(self, which: Param, value: f64) -> Result<()> {
        match which {
            Param::Mu => self.check_params(value, 1.0),
            Param::Sigma => self.check_params(if self.mu_positive() { 1.0 } else { 0.0 }, value),
        }
    }

    /// log f(y | mu, sigma).
    pub fn log_density(self, y: f64, mu: f64, sigma: f64) -> Result<f64> {
        self.check_y(y)?;
        self.check_params(mu, sigma)?;
        Ok(self.log_density_unchecked(y, mu, sigma))
    }

    pub(crate) fn log_density_unchecked(self, y: f64, mu: f64, sigma: f64) -> f64 {
        let half_ln_2pi = 0.5 * (2.0 * PI).ln();
        match self {
            Family::NO => {
                let z = (y - mu) / sigma;
                -half_ln_2pi - sigma.ln() - 0.5 * z * z
            }
            Family::LOGNO => {
                let ly = y.ln();
                let z = (ly - mu) / sigma;
                -half_ln_2pi - sigma.ln() - ly - 0.5 * z * z
            }
            Family::GA => {
                let s2 = sigma * sigma;
                let shape = 1.0 / s2;
                let scale = s2 * mu;
                (shape - 1.0) * y.ln() - y / scale - shape * scale.ln() - ln_gamma(shape)
            }
            Family::IG => {
                let s2 = sigma * sigma;
                -half_ln_2pi - sigma.ln() - 1.5 * y.ln() - (y - mu) * (y - mu) / (2.0 * mu * mu * s2 * y)
            }
            Family::WEI => {
                let r = y / mu;
                sigma.ln() - mu.ln() + (sigma - 1.0) * r.ln() - r.powf(sigma)
            }
        }
    }

    /// F(y | mu, sigma).
    pub fn cdf(self, y: f64, mu: f64, sigma: f64) -> Result<f64> {
        self.check_y(y)?;
        self.check_params(mu, sigma)?;
        Ok(self.cdf_unchecked(y, mu, sigma))
    }

    pub(crate) fn cdf_unchecked(self, y: f64, mu: f64, sigma: f64) -> f64 {
        match self {
            Family::NO => norm_cdf((y - mu) / sigma),
            Family::LOGNO => norm_cdf((y.ln() - mu) / sigma),
            Family::GA => {
                let s2 = sigma * sigma;
                gamma_p(1.0 / s2, y / (s2 * mu))
            }
            Family::IG => {
                let b = 1.0 / (sigma * (y).sqrt());
                let first = norm_cdf(b * (y / mu - 1.0));
                let log_second = 2.0 / (mu * sigma * sigma) + ln_norm_sf(b * (y / mu + 1.0));
                (first + log_second.exp()).clamp(0.0, 1.0)
            }
            Family::WEI => -(-(y / mu).powf(sigma)).exp_m1(),
        }
    }

    /// E[Y | mu, sigma].
    pub fn mean(self, mu: f64, sigma: f64) -> f64 {
        match self {
            Family::NO | Family::GA | Family::IG => mu,
            Family::LOGNO => (mu + 0.5 * sigma * sigma).exp(),
            Family::WEI => mu * ln_gamma(1.0 + 1.0 / sigma).exp(),
        }
    }

    /// Var[Y | mu, sigma].
    pub fn variance(self, mu: f64, sigma: f64) -> f64 {
        let s2 = sigma * sigma;
        match self {
            Family::NO => s2,
            Family::LOGNO => (s2.exp() - 1.0) * (2.0 * mu + s2).exp(),
            Family::GA => s2 * mu * mu,
            Family::IG => s2 * mu * mu * mu,
            Family::WEI => {
                let g1 = ln_gamma(1.0 + 1.0 / sigma).exp();
                let g2 = ln_gamma(1.0 + 2.0 / sigma).exp();
                mu * mu * (g2 - g1 * g1)
            }
        }
    }

    /// d log f / d theta and the expected information E[-d^2 log f / d theta^2]
    /// for a single observation, on the natural parameter scale.
    fn score_info(self, which: Param, y: f64, mu: f64, sigma: f64) -> (f64, f64) {
        let s2 = sigma * sigma;
        match (self, which) {
            (Family::NO, Param::Mu) => ((y - mu) / s2, 1.0 / s2),
            (Family::NO, Param::Sigma) => {
                let r = y - mu;
                ((r * r - s2) / (s2 * sigma), 2.0 / s2)
            }
            (Family::LOGNO, Param::Mu) => ((y.ln() - mu) / s2, 1.0 / s2),
            (Family::LOGNO, Param::Sigma) => {
                let r = y.ln() - mu;
                ((r * r - s2) / (s2 * sigma), 2.0 / s2)
            }
            (Family::GA, Param::Mu) => ((y - mu) / (s2 * mu * mu), 1.0 / (s2 * mu * mu)),
            (Family::GA, Param::Sigma) => {
                let a = 1.0 / s2;
                let dl_da = y.ln() - y / mu + a.ln() + 1.0 - mu.ln() - digamma(a);
                let da_ds = -2.0 / (s2 * sigma);
                let info_a = trigamma(a) - 1.0 / a;
                (dl_da * da_ds, info_a * da_ds * da_ds)
            }
            (Family::IG, Param::Mu) => {
                let m3 = mu * mu * mu;
                ((y - mu) / (s2 * m3), 1.0 / (s2 * m3))
            }
            (Family::IG, Param::Sigma) => {
                let r = y - mu;
                (-1.0 / sigma + r * r / (mu * mu * s2 * sigma * y), 2.0 / s2)
            }
            (Family::WEI, Param::Mu) => {
                let t = (y / mu).powf(sigma);
                (sigma / mu * (t - 1.0), s2 / (mu * mu))
            }
            (Family::WEI, Param::Sigma) => {
                let lr = (y / mu).ln();
                let t = (sigma * lr).exp();
                let c = 1.0 - EULER_GAMMA;
                (1.0 / sigma + lr * (1.0 - t), (PI * PI / 6.0 + c * c) / s2)
            }
        }
    }

    /// Working score `u = d l / d eta` and iterative weight
    /// `w = E[-d^2 l / d eta^2]` for parameter `which` under `link`.
    pub fn score_and_weight(
        self,
        y: &[f64],
        params: &ParamVector,
        which: Param,
        link: Link,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = y.len();
        if params.mu.len() != n || params.sigma.len() != n {
            return Err(Error::Schema(format!(
                "parameter vectors have length {} / {}, response has {n}",
                params.mu.len(),
                params.sigma.len()
            )));
        }
        let mut u = Vec::with_capacity(n);
        let mut w = Vec::with_capacity(n);
        for i in 0..n {
            let (mu, sigma) = (params.mu[i], params.sigma[i]);
            self.check_params(mu, sigma).map_err(|e| Error::Fitting {
                row: i,
                message: e.to_string(),
            })?;
            let theta = if which == Param::Mu { mu } else { sigma };
            let deta = link.derivative(theta).map_err(|e| Error::Fitting {
                row: i,
                message: e.to_string(),
            })?;
            let (score, info) = self.score_info(which, y[i], mu, sigma);
            let ui = score / deta;
            let wi = info / (deta * deta);
            if !ui.is_finite() || !wi.is_finite() {
                return Err(Error::Fitting {
                    row: i,
                    message: format!("non-finite score ({ui}) or weight ({wi}) for {which}"),
                });
            }
            u.push(ui);
            w.push(wi.clamp(WEIGHT_MIN, WEIGHT_MAX));
        }
        Ok((u, w))
    }

    /// Moment-based starting value for sigma, floored at 0.1.
    pub fn initial_sigma(self, y: &[f64]) -> f64 {
        let n = y.len() as f64;
        let m = y.iter().sum::<f64>() / n;
        let var = y.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
        let log_sd = || {
            let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
            let lm = ly.iter().sum::<f64>() / n;
            (ly.iter().map(|v| (v - lm) * (v - lm)).sum::<f64>() / n).sqrt()
        };
        let s = match self {
            Family::NO => var.sqrt(),
            Family::LOGNO => log_sd(),
            Family::GA => var.sqrt() / m,
            Family::IG => (var / (m * m * m)).sqrt(),
            Family::WEI => PI / (6f64.sqrt() * log_sd()),
        };
        if s.is_finite() {
            s.max(0.1)
        } else {
            0.1
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "NO" => Ok(Family::NO),
            "LOGNO" => Ok(Family::LOGNO),
            "GA" => Ok(Family::GA),
            "IG" => Ok(Family::IG),
            "WEI" => Ok(Family::WEI),
            other => Err(Error::Schema(format!("unknown family '{other}'"))),
        }
    }
}

/// log(1 - Φ(x)) without underflow for large x.
fn ln_norm_sf(x: f64) -> f64 {
    if x < 30.0 {
        norm_sf(x).ln()
    } else {
        let x2 = x * x;
        -0.5 * x2 - (x * (2.0 * PI).sqrt()).ln() + (1.0 - 1.0 / x2 + 3.0 / (x2 * x2)).ln()
    }
}
