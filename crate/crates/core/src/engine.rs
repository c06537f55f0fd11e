//! Penalized maximum-likelihood fitting of location and dispersion submodels.
//!
//! Each distribution parameter has an additive predictor
//! `g(theta) = X beta + sum_j f_j(x_j)` where every `f_j` is a cubic smoothing
//! spline term. Parameters are updated in turn (mu, then sigma), each holding
//! the other fixed. One update linearizes the log-likelihood into a working
//! response `z = eta + u / w` with weights `w`, then runs weighted backfitting:
//! the parametric block by weighted least squares and every spline term on
//! its partial residuals at a penalty calibrated to the requested df.
//!
//! A spline term `cs(x, df = k)` contributes a parametric linear coefficient
//! plus `k` extra degrees of freedom: its smoother is calibrated to trace
//! `k + 2` and the weighted linear part of the smooth is moved into the
//! parametric block.

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, VarExpr};
use crate::error::{Error, Result};
use crate::families::{Family, Link, Param, ParamVector};
use crate::linalg::{check_rank, design, mat_vec, wls, xtwx_inverse};
use crate::math::norm_sf;
use crate::smoothers::{KnotMap, SmootherFit};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineTerm {
    pub var: VarExpr,
    /// Extra smoothing degrees of freedom beyond the linear part.
    pub df: f64,
}

impl SplineTerm {
    pub fn new(var: VarExpr, df: f64) -> Self {
        SplineTerm { var, df }
    }

    pub fn label(&self) -> String {
        format!("cs({}, df={})", self.var, fmt_df(self.df))
    }
}

pub(crate) fn fmt_df(df: f64) -> String {
    if df.fract() == 0.0 && df.abs() < 1e15 {
        format!("{}", df as i64)
    } else {
        format!("{df}")
    }
}

/// The additive predictor of one distribution parameter. An intercept is
/// always present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubModel {
    pub link: Link,
    pub parametric: Vec<VarExpr>,
    pub splines: Vec<SplineTerm>,
}

impl SubModel {
    pub fn constant(link: Link) -> Self {
        SubModel {
            link,
            parametric: Vec::new(),
            splines: Vec::new(),
        }
    }

    pub fn new(link: Link, parametric: Vec<VarExpr>, splines: Vec<SplineTerm>) -> Self {
        SubModel {
            link,
            parametric,
            splines,
        }
    }

    /// Names of the parametric coefficients, in design-column order.
    pub fn coef_names(&self) -> Vec<String> {
        std::iter::once("(Intercept)".to_string())
            .chain(self.parametric.iter().map(|v| v.to_string()))
            .chain(self.splines.iter().map(SplineTerm::label))
            .collect()
    }

    pub fn n_coefficients(&self) -> usize {
        1 + self.parametric.len() + self.splines.len()
    }

    pub fn df(&self) -> f64 {
        self.n_coefficients() as f64 + self.splines.iter().map(|s| s.df).sum::<f64>()
    }

    fn covariates(&self) -> impl Iterator<Item = &VarExpr> {
        self.parametric.iter().chain(self.splines.iter().map(|s| &s.var))
    }

    /// Parametric design: intercept, parametric terms, then linear parts of
    /// the spline terms.
    pub fn design(&self, data: &Dataset) -> Result<DMatrix<f64>> {
        let mut cols = vec![vec![1.0; data.n()]];
        for v in self.covariates() {
            cols.push(data.eval(v)?);
        }
        Ok(design(&cols))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub response: VarExpr,
    pub family: Family,
    pub mu: SubModel,
    pub sigma: SubModel,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DfEntry {
    pub param: Param,
    pub term: String,
    pub df: f64,
}

impl ModelSpec {
    /// Response with intercept-only submodels under the family's default links.
    pub fn intercept_only(response: VarExpr, family: Family) -> Self {
        ModelSpec {
            response,
            family,
            mu: SubModel::constant(family.default_link(Param::Mu)),
            sigma: SubModel::constant(family.default_link(Param::Sigma)),
            warnings: Vec::new(),
        }
    }

    pub fn submodel(&self, which: Param) -> &SubModel {
        match which {
            Param::Mu => &self.mu,
            Param::Sigma => &self.sigma,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for which in Param::ALL {
            let sub = self.submodel(which);
            let mut seen = std::collections::HashSet::new();
            for v in sub.covariates() {
                if v.base() == self.response.base() {
                    return Err(Error::Schema(format!(
                        "response '{}' appears among the {which} covariates",
                        self.response
                    )));
                }
                if !seen.insert(v.clone()) {
                    return Err(Error::Schema(format!(
                        "'{v}' appears more than once in the {which} submodel"
                    )));
                }
            }
            for s in &sub.splines {
                if !(s.df >= 0.0 && s.df.is_finite()) {
                    return Err(Error::domain("df", s.df, "spline df must be nonnegative"));
                }
            }
        }
        Ok(())
    }

    /// Degrees of freedom per term: one per parametric coefficient plus the
    /// extra smoothing df of each spline term.
    pub fn df_ledger(&self) -> Vec<DfEntry> {
        let mut out = Vec::new();
        for which in Param::ALL {
            let sub = self.submodel(which);
            for name in sub.coef_names() {
                out.push(DfEntry {
                    param: which,
                    term: name,
                    df: 1.0,
                });
            }
            for s in &sub.splines {
                out.push(DfEntry {
                    param: which,
                    term: format!("{} (smooth)", s.label()),
                    df: s.df,
                });
            }
        }
        out
    }

    pub fn df_total(&self) -> f64 {
        self.mu.df() + self.sigma.df()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub max_outer: usize,
    pub max_inner: usize,
    pub tol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_outer: 50,
            max_inner: 30,
            tol: 1e-6,
        }
    }
}

/// Fitted predictor for one distribution parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamFit {
    pub param: Param,
    pub link: Link,
    pub coef_names: Vec<String>,
    pub beta: Vec<f64>,
    /// Nonlinear part of each spline term (linear part removed), aligned with
    /// the submodel's spline terms; `None` for terms with zero extra df.
    pub smoothers: Vec<Option<SmootherFit>>,
    pub se: Vec<f64>,
    pub vcov: Vec<Vec<f64>>,
    #[serde(skip)]
    pub eta: Vec<f64>,
    #[serde(skip)]
    pub fitted: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub format_version: u32,
    pub spec: ModelSpec,
    pub mu: ParamFit,
    pub sigma: ParamFit,
    pub global_deviance: f64,
    pub df_total: f64,
    pub df_ledger: Vec<DfEntry>,
    pub n: usize,
    pub converged: bool,
    pub iterations: usize,
    /// Global deviance after each outer iteration.
    pub gd_trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefRow {
    pub param: Param,
    pub name: String,
    pub estimate: f64,
    pub se: f64,
    pub z: f64,
    pub p: f64,
}

impl fmt::Display for CoefRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<6} {:<28} {:>14.4} {:>12.4} {:>10.3} {:>8}",
            self.param.name(),
            self.name,
            self.estimate,
            self.se,
            self.z,
            fmt_p(self.p)
        )
    }
}

/// p-values to four decimals with a floor display.
pub fn fmt_p(p: f64) -> String {
    if p < 1e-4 {
        "<0.0001".to_string()
    } else {
        format!("{p:.4}")
    }
}

impl FittedModel {
    pub fn param(&self, which: Param) -> &ParamFit {
        match which {
            Param::Mu => &self.mu,
            Param::Sigma => &self.sigma,
        }
    }

    pub fn fitted_params(&self) -> ParamVector {
        ParamVector {
            mu: self.mu.fitted.clone(),
            sigma: self.sigma.fitted.clone(),
        }
    }

    /// Fitted response means E[Y | theta_i].
    pub fn fitted_mean(&self) -> Vec<f64> {
        self.mu
            .fitted
            .iter()
            .zip(&self.sigma.fitted)
            .map(|(&m, &s)| self.spec.family.mean(m, s))
            .collect()
    }

    /// Apply the fitted predictor of `which` to `data` and invert the link.
    pub fn predict(&self, data: &Dataset, which: Param) -> Result<Vec<f64>> {
        let pf = self.param(which);
        let eta = linear_predictor(self.spec.submodel(which), &pf.beta, &pf.smoothers, data)?;
        eta.iter().map(|&e| pf.link.inverse(e)).collect()
    }

    pub fn predict_params(&self, data: &Dataset) -> Result<ParamVector> {
        Ok(ParamVector {
            mu: self.predict(data, Param::Mu)?,
            sigma: self.predict(data, Param::Sigma)?,
        })
    }

    /// `-2 sum log f(y_i | theta_i)` at the fitted parameters.
    pub fn global_deviance(&self, data: &Dataset) -> Result<f64> {
        let y = data.eval(&self.spec.response)?;
        global_deviance(self.spec.family, &y, &self.predict_params(data)?)
    }

    /// Sum over spline terms of `lambda * int f''^2`.
    pub fn penalty(&self) -> f64 {
        [&self.mu, &self.sigma]
            .iter()
            .flat_map(|p| p.smoothers.iter().flatten())
            .map(SmootherFit::penalty)
            .sum()
    }

    /// `l - 1/2 sum lambda * int f''^2`.
    pub fn penalized_loglik(&self, data: &Dataset) -> Result<f64> {
        Ok(-0.5 * self.global_deviance(data)? - 0.5 * self.penalty())
    }

    /// Estimate, standard error, Wald z and two-sided normal p for every
    /// parametric coefficient. Standard errors are conditional on the
    /// smoothing df.
    pub fn standard_errors(&self) -> Vec<CoefRow> {
        [&self.mu, &self.sigma]
            .iter()
            .flat_map(|pf| {
                pf.coef_names.iter().enumerate().map(move |(j, name)| {
                    let (estimate, se) = (pf.beta[j], pf.se[j]);
                    let z = if estimate == 0.0 { 0.0 } else { estimate / se };
                    CoefRow {
                        param: pf.param,
                        name: name.clone(),
                        estimate,
                        se,
                        z,
                        p: 2.0 * norm_sf(z.abs()),
                    }
                })
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Parse a serialized model. Observation-level vectors are not stored, so
    /// `eta` and `fitted` come back empty.
    pub fn from_json(text: &str) -> Result<Self> {
        let fm: FittedModel = serde_json::from_str(text)?;
        if fm.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Schema(format!(
                "unsupported model format_version {} (expected {MODEL_FORMAT_VERSION})",
                fm.format_version
            )));
        }
        Ok(fm)
    }
}

/// `-2 sum_i log f(y_i | mu_i, sigma_i)`.
pub fn global_deviance(family: Family, y: &[f64], params: &ParamVector) -> Result<f64> {
    let mut ll = 0.0;
    for (i, &yi) in y.iter().enumerate() {
        ll += family.log_density(yi, params.mu[i], params.sigma[i])?;
    }
    Ok(-2.0 * ll)
}

fn linear_predictor(
    sub: &SubModel,
    beta: &[f64],
    smoothers: &[Option<SmootherFit>],
    data: &Dataset,
) -> Result<Vec<f64>> {
    let x = sub.design(data)?;
    let mut eta = mat_vec(&x, beta);
    for (term, fit) in sub.splines.iter().zip(smoothers) {
        if let Some(fit) = fit {
            let xs = data.eval(&term.var)?;
            for (e, &xi) in eta.iter_mut().zip(&xs) {
                *e += fit.eval(xi);
            }
        }
    }
    Ok(eta)
}

/// Fixed structure of one submodel on the training data.
struct Component {
    which: Param,
    link: Link,
    x: DMatrix<f64>,
    names: Vec<String>,
    spline_x: Vec<Vec<f64>>,
    maps: Vec<Option<KnotMap>>,
    targets: Vec<f64>,
}

#[derive(Clone)]
struct State {
    beta: Vec<f64>,
    smooth: Vec<Option<SmootherFit>>,
    f: Vec<Vec<f64>>,
    eta: Vec<f64>,
    lambdas: Vec<Option<f64>>,
}

impl State {
    fn blend(&self, new: &State, t: f64) -> State {
        let mix = |a: &[f64], b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| x + t * (y - x)).collect() };
        let smooth = self
            .smooth
            .iter()
            .zip(&new.smooth)
            .map(|(a, b)| match (a, b) {
                (Some(a), Some(b)) => Some(SmootherFit {
                    knots: b.knots.clone(),
                    values: mix(&a.values, &b.values),
                    second_derivs: mix(&a.second_derivs, &b.second_derivs),
                    lambda: b.lambda,
                    edf: b.edf,
                    fitted: mix(&a.fitted, &b.fitted),
                }),
                (_, b) => b.clone(),
            })
            .collect();
        State {
            beta: mix(&self.beta, &new.beta),
            smooth,
            f: self.f.iter().zip(&new.f).map(|(a, b)| mix(a, b)).collect(),
            eta: mix(&self.eta, &new.eta),
            lambdas: new.lambdas.clone(),
        }
    }
}

impl Component {
    fn new(which: Param, sub: &SubModel, data: &Dataset) -> Result<Self> {
        let x = sub.design(data)?;
        let names = sub.coef_names();
        check_rank(&x, &names)?;
        let mut spline_x = Vec::new();
        let mut maps = Vec::new();
        let mut targets = Vec::new();
        for s in &sub.splines {
            let xs = data.eval(&s.var)?;
            let map = if s.df > 0.0 {
                let map = KnotMap::new(&xs)?;
                if s.df + 2.0 > map.n_knots() as f64 {
                    return Err(Error::domain(
                        "df",
                        s.df,
                        format!(
                            "{} has only {} distinct values; at most df={} is possible",
                            s.var,
                            map.n_knots(),
                            map.n_knots() - 2
                        ),
                    ));
                }
                Some(map)
            } else {
                None
            };
            spline_x.push(xs);
            maps.push(map);
            targets.push(s.df + 2.0);
        }
        Ok(Component {
            which,
            link: sub.link,
            x,
            names,
            spline_x,
            maps,
            targets,
        })
    }

    fn n(&self) -> usize {
        self.x.nrows()
    }

    fn empty_state(&self) -> State {
        let k = self.maps.len();
        State {
            beta: vec![0.0; self.x.ncols()],
            smooth: vec![None; k],
            f: vec![vec![0.0; self.n()]; k],
            eta: vec![0.0; self.n()],
            lambdas: vec![None; k],
        }
    }

    /// Weighted backfitting of the working response.
    fn backfit(&self, z: &[f64], w: &[f64], start: &State, opts: &FitOptions) -> Result<State> {
        let n = self.n();
        let weighted: Vec<_> = self
            .maps
            .iter()
            .map(|m| m.as_ref().map(|m| m.with_weights(w)).transpose())
            .collect::<Result<_>>()?;
        let mut lambdas = start.lambdas.clone();
        for (j, ws) in weighted.iter().enumerate() {
            if let Some(ws) = ws {
                lambdas[j] = Some(ws.calibrate(self.targets[j], lambdas[j])?);
            }
        }
        let mut f = start.f.clone();
        let mut smooth = start.smooth.clone();
        let mut lin = vec![0.0; n];
        let has_smooth = weighted.iter().any(Option::is_some);
        for _ in 0..opts.max_inner.max(1) {
            let r: Vec<f64> = (0..n).map(|i| z[i] - f.iter().map(|fj| fj[i]).sum::<f64>()).collect();
            let beta = wls(&self.x, &r, Some(w)).map_err(|e| self.rank_error(e))?;
            let new_lin = mat_vec(&self.x, &beta);
            let mut change = max_abs_diff(&lin, &new_lin);
            lin = new_lin;
            if !has_smooth {
                break;
            }
            for (j, ws) in weighted.iter().enumerate() {
                let Some(ws) = ws else { continue };
                let partial: Vec<f64> = (0..n)
                    .map(|i| {
                        let others: f64 = f.iter().enumerate().filter(|(l, _)| *l != j).map(|(_, fl)| fl[i]).sum();
                        z[i] - lin[i] - others
                    })
                    .collect();
                let lambda = lambdas[j].expect("calibrated");
                let mut fit = ws.fit_values(&partial, lambda)?;
                fit.edf = self.targets[j];
                let xs = &self.spline_x[j];
                let (a, b) = weighted_line(xs, &fit.fitted, w);
                for (v, &t) in fit.values.iter_mut().zip(&fit.knots) {
                    *v -= a + b * t;
                }
                let index = self.maps[j].as_ref().expect("smoother present").index();
                let new_f: Vec<f64> = index.iter().map(|&k| fit.values[k]).collect();
                fit.fitted = new_f.clone();
                change = change.max(max_abs_diff(&f[j], &new_f));
                f[j] = new_f;
                smooth[j] = Some(fit);
            }
            if change < opts.tol {
                break;
            }
        }
        let r: Vec<f64> = (0..n).map(|i| z[i] - f.iter().map(|fj| fj[i]).sum::<f64>()).collect();
        let beta = wls(&self.x, &r, Some(w)).map_err(|e| self.rank_error(e))?;
        let mut eta = mat_vec(&self.x, &beta);
        for fj in &f {
            for (e, v) in eta.iter_mut().zip(fj) {
                *e += v;
            }
        }
        Ok(State {
            beta,
            smooth,
            f,
            eta,
            lambdas,
        })
    }

    fn rank_error(&self, e: Error) -> Error {
        match e {
            Error::Rank { columns } if columns.is_empty() => Error::Rank {
                columns: self.names.clone(),
            },
            other => other,
        }
    }

    fn theta(&self, family: Family, eta: &[f64]) -> Result<Vec<f64>> {
        eta.iter()
            .enumerate()
            .map(|(i, &e)| {
                let t = self.link.inverse(e).map_err(|err| Error::Fitting {
                    row: i,
                    message: err.to_string(),
                })?;
                family.check_param(self.which, t).map_err(|err| Error::Fitting {
                    row: i,
                    message: err.to_string(),
                })?;
                Ok(t)
            })
            .collect()
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn weighted_line(x: &[f64], y: &[f64], w: &[f64]) -> (f64, f64) {
    let sw: f64 = w.iter().sum();
    let xm = x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let ym = y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for i in 0..x.len() {
        let dx = x[i] - xm;
        sxy += w[i] * dx * (y[i] - ym);
        sxx += w[i] * dx * dx;
    }
    let b = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (ym - b * xm, b)
}

/// Fit `spec` to `data` from the default starting values.
pub fn fit(spec: &ModelSpec, data: &Dataset, options: &FitOptions) -> Result<FittedModel> {
    fit_from(spec, data, options, None)
}

/// Fit starting from the given per-observation parameters instead of the
/// default `mu = (y + mean(y)) / 2`, `sigma = moment estimate`.
pub fn fit_from(
    spec: &ModelSpec,
    data: &Dataset,
    options: &FitOptions,
    start: Option<&ParamVector>,
) -> Result<FittedModel> {
    fit_impl(spec, data, options, start, None)
}

/// Refit `previous.spec` to `data`, starting from the coefficients,
/// smoothers and smoothing parameters of `previous`.
pub fn refit(previous: &FittedModel, data: &Dataset, options: &FitOptions) -> Result<FittedModel> {
    let params = previous.predict_params(data)?;
    fit_impl(&previous.spec, data, options, Some(&params), Some(previous))
}

fn fit_impl(
    spec: &ModelSpec,
    data: &Dataset,
    options: &FitOptions,
    start: Option<&ParamVector>,
    warm: Option<&FittedModel>,
) -> Result<FittedModel> {
    spec.validate()?;
    let family = spec.family;
    let y = data.eval(&spec.response)?;
    for (i, &v) in y.iter().enumerate() {
        family.check_y(v).map_err(|e| Error::Fitting {
            row: i,
            message: e.to_string(),
        })?;
    }
    let n = y.len();
    let df_total = spec.df_total();
    if (n as f64) <= df_total {
        return Err(Error::InsufficientData(format!(
            "{n} observations for a model with {df_total} degrees of freedom"
        )));
    }
    let comps = [
        Component::new(Param::Mu, &spec.mu, data)?,
        Component::new(Param::Sigma, &spec.sigma, data)?,
    ];

    let mut theta = match start {
        Some(p) => p.clone(),
        None => initial_params(family, &y),
    };
    let mut states: Vec<State> = Vec::with_capacity(2);
    let mut consistent = [false, false];
    for (k, comp) in comps.iter().enumerate() {
        let mut st = comp.empty_state();
        for (i, &t) in theta.get(comp.which).iter().enumerate() {
            st.eta[i] = comp.link.apply(t).map_err(|e| Error::Fitting {
                row: i,
                message: format!("starting value for {}: {e}", comp.which),
            })?;
        }
        if let Some(prev) = warm {
            let pf = prev.param(comp.which);
            st.beta = pf.beta.clone();
            st.smooth = pf.smoothers.clone();
            for (j, sm) in pf.smoothers.iter().enumerate() {
                if let Some(sm) = sm {
                    st.f[j] = comp.spline_x[j].iter().map(|&x| sm.eval(x)).collect();
                    st.lambdas[j] = Some(sm.lambda);
                }
            }
            consistent[k] = true;
        }
        // A constant start lies in the span of the intercept.
        let first = st.eta[0];
        if st.eta.iter().all(|&e| e == first) {
            st.beta[0] = first;
            consistent[k] = true;
        }
        states.push(st);
    }

    let mut gd = global_deviance(family, &y, &theta)?;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    for iter in 1..=options.max_outer {
        iterations = iter;
        let gd_start = gd;
        for (k, comp) in comps.iter().enumerate() {
            let (u, w) = family.score_and_weight(&y, &theta, comp.which, comp.link)?;
            let z: Vec<f64> = (0..n).map(|i| states[k].eta[i] + u[i] / w[i]).collect();
            let proposal = comp.backfit(&z, &w, &states[k], options)?;
            let mut accepted = None;
            let mut t = 1.0;
            for _ in 0..30 {
                let cand = if t == 1.0 {
                    proposal.clone()
                } else {
                    states[k].blend(&proposal, t)
                };
                if let Ok(th) = comp.theta(family, &cand.eta) {
                    let mut trial = theta.clone();
                    *trial.get_mut(comp.which) = th;
                    if let Ok(g) = global_deviance(family, &y, &trial) {
                        if g.is_finite() && (!consistent[k] || g <= gd) {
                            accepted = Some((cand, trial, g));
                            break;
                        }
                    }
                }
                if !consistent[k] && t == 1.0 {
                    // a start outside the model space has nothing to step back to
                    break;
                }
                t *= 0.5;
            }
            match accepted {
                Some((st, th, g)) => {
                    states[k] = st;
                    theta = th;
                    gd = g;
                    consistent[k] = true;
                }
                None if consistent[k] => {}
                None => {
                    let th = comp.theta(family, &proposal.eta)?;
                    return Err(
                        match global_deviance(family, &y, &{
                            let mut trial = theta.clone();
                            *trial.get_mut(comp.which) = th;
                            trial
                        }) {
                            Err(e) => e,
                            Ok(_) => Error::Divergence { trace: trace.clone() },
                        },
                    );
                }
            }
        }
        trace.push(gd);
        if !gd.is_finite() {
            return Err(Error::Divergence { trace });
        }
        if (gd_start - gd).abs() < options.tol * n as f64 {
            converged = true;
            break;
        }
    }

    let mut fits = Vec::with_capacity(2);
    for (k, comp) in comps.iter().enumerate() {
        let sub = spec.submodel(comp.which);
        let st = &states[k];
        let eta = linear_predictor(sub, &st.beta, &st.smooth, data)?;
        let fitted = comp.theta(family, &eta)?;
        fits.push((eta, fitted));
    }
    let final_params = ParamVector {
        mu: fits[0].1.clone(),
        sigma: fits[1].1.clone(),
    };
    let global_dev = global_deviance(family, &y, &final_params)?;
    if !global_dev.is_finite() {
        return Err(Error::Divergence { trace });
    }

    let mut param_fits = Vec::with_capacity(2);
    for (k, comp) in comps.iter().enumerate() {
        let (_, w) = family.score_and_weight(&y, &final_params, comp.which, comp.link)?;
        let vcov = xtwx_inverse(&comp.x, Some(&w), &comp.names)?;
        let p = comp.x.ncols();
        let (eta, fitted) = std::mem::take(&mut fits[k]);
        param_fits.push(ParamFit {
            param: comp.which,
            link: comp.link,
            coef_names: comp.names.clone(),
            beta: states[k].beta.clone(),
            smoothers: states[k].smooth.clone(),
            se: (0..p).map(|j| vcov[(j, j)].sqrt()).collect(),
            vcov: (0..p).map(|i| (0..p).map(|j| vcov[(i, j)]).collect()).collect(),
            eta,
            fitted,
        });
    }
    let sigma = param_fits.pop().expect("two parameters");
    let mu = param_fits.pop().expect("two parameters");
    Ok(FittedModel {
        format_version: MODEL_FORMAT_VERSION,
        spec: spec.clone(),
        mu,
        sigma,
        global_deviance: global_dev,
        df_total,
        df_ledger: spec.df_ledger(),
        n,
        converged,
        iterations,
        gd_trace: trace,
    })
}

fn initial_params(family: Family, y: &[f64]) -> ParamVector {
    let n = y.len();
    let mu = if family == Family::LOGNO {
        let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
        let m = ly.iter().sum::<f64>() / n as f64;
        ly.iter().map(|v| 0.5 * (v + m)).collect()
    } else {
        let m = y.iter().sum::<f64>() / n as f64;
        y.iter().map(|v| 0.5 * (v + m)).collect()
    };
    ParamVector {
        mu,
        sigma: vec![family.initial_sigma(y); n],
    }
}
