//! Side-by-side comparison of normal linear, gamma GLM and GAMLSS models.

use std::fmt::Write;

use hedonic_gamlss::baselines::{box_cox_profile, box_cox_transform, default_lambda_grid, glm_fit_gamma_log, ols_fit};
use hedonic_gamlss::data::{Dataset, VarExpr};
use hedonic_gamlss::diagnostics::{check_reported, lr_test, pseudo_r2_corr, ConsistencyCheck, LrTest, ReportedRow};
use hedonic_gamlss::engine::{fit, FitOptions, ModelSpec, SubModel};
use hedonic_gamlss::families::{Family, Link};
use hedonic_gamlss::formula::{build_spec, parse_formula, FormulaAst, Term};
use hedonic_gamlss::{Error, Result};
use serde::{Deserialize, Serialize};

pub const COMPARE_FORMAT_VERSION: u32 = 1;

/// Default allowed BIC discrepancy for reported rows rounded to integers.
pub const DEFAULT_TOLERANCE: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelClass {
    Cnlrm,
    Glm,
    Gamlss,
}

impl ModelClass {
    pub fn name(self) -> &'static str {
        match self {
            ModelClass::Cnlrm => "CNLRM",
            ModelClass::Glm => "GLM",
            ModelClass::Gamlss => "GAMLSS",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Links {
    #[serde(default)]
    pub mu: Option<String>,
    #[serde(default)]
    pub sigma: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEntry {
    #[serde(default)]
    pub name: Option<String>,
    pub class: ModelClass,
    pub formula: String,
    #[serde(default)]
    pub family: Option<String>,
    #[serde(default)]
    pub links: Links,
    #[serde(default)]
    pub box_cox: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CompareSpec {
    #[serde(default)]
    pub format_version: Option<u32>,
    #[serde(default)]
    pub models: Vec<ModelEntry>,
    /// Published or hand-entered criteria rows to check for consistency.
    #[serde(default)]
    pub reported: Vec<ReportedRow>,
    #[serde(default)]
    pub tolerance: Option<f64>,
}

impl CompareSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: CompareSpec = serde_json::from_str(text)?;
        if let Some(v) = spec.format_version {
            if v != COMPARE_FORMAT_VERSION {
                return Err(Error::Schema(format!(
                    "unsupported comparison format_version {v} (expected {COMPARE_FORMAT_VERSION})"
                )));
            }
        }
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRow {
    pub name: String,
    pub class: ModelClass,
    pub formula: String,
    /// The response as modeled, e.g. `UP`, `log(UP)` or `boxcox(UP)`.
    pub scale: String,
    pub n: usize,
    /// Parameters or effective degrees of freedom counted by the criteria.
    pub df: f64,
    /// Log-likelihood on the modeled scale. Box-Cox rows use the transformed
    /// response and count the power as a parameter.
    pub loglik: f64,
    pub aic: f64,
    pub bic: f64,
    /// Squared correlation of the untransformed response with the fitted
    /// values mapped back to its scale.
    pub pseudo_r2: f64,
    pub converged: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub box_cox_lambda: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NestedTest {
    pub restricted: String,
    pub full: String,
    #[serde(flatten)]
    pub test: LrTest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub format_version: u32,
    /// Ordered by decreasing pseudo-R².
    pub models: Vec<ModelRow>,
    /// Whether AIC and BIC may be compared across all listed models.
    pub criteria_comparable: bool,
    pub scales: Vec<String>,
    pub lr_tests: Vec<NestedTest>,
    pub consistency: Vec<ConsistencyCheck>,
}

fn parametric_only(ast: &FormulaAst) -> Result<Vec<VarExpr>> {
    if ast.sigma.is_some() {
        return Err(Error::Schema(
            "sigma submodel is only available for the GAMLSS class".into(),
        ));
    }
    ast.mu
        .iter()
        .map(|t| match t {
            Term::Var(v) => Ok(v.clone()),
            Term::Spline { .. } => Err(Error::Schema(format!(
                "smooth term '{t}' is only available for the GAMLSS class"
            ))),
        })
        .collect()
}

fn back_transform(resp: &VarExpr, fitted: &[f64]) -> Vec<f64> {
    match resp {
        VarExpr::Var(_) => fitted.to_vec(),
        VarExpr::Log(_) => fitted.iter().map(|v| v.exp()).collect(),
    }
}

fn inverse_box_cox(v: f64, lambda: f64) -> f64 {
    if lambda.abs() < 1e-12 {
        v.exp()
    } else {
        (lambda * v + 1.0).max(0.0).powf(1.0 / lambda)
    }
}

fn parse_link(s: &Option<String>) -> Result<Option<Link>> {
    s.as_deref().map(str::parse).transpose()
}

fn fit_entry(
    entry: &ModelEntry,
    index: usize,
    data: &Dataset,
    options: &FitOptions,
) -> Result<(ModelRow, Option<ModelSpec>, f64)> {
    let ast = parse_formula(&entry.formula)?;
    let name = entry.name.clone().unwrap_or_else(|| format!("model{}", index + 1));
    let n = data.n();
    let ln_n = (n as f64).ln();
    let raw = data.real(ast.response.base())?.to_vec();
    let criteria = |loglik: f64, k: f64| (-2.0 * loglik + 2.0 * k, -2.0 * loglik + ln_n * k);
    match entry.class {
        ModelClass::Cnlrm => {
            let terms = parametric_only(&ast)?;
            let sub = SubModel::new(Link::Identity, terms, vec![]);
            let x = sub.design(data)?;
            let names = sub.coef_names();
            let y = data.eval(&ast.response)?;
            let (row_scale, loglik, k, fitted, lambda) = if entry.box_cox {
                let prof = box_cox_profile(&y, &x, &default_lambda_grid())?;
                let lambda = prof.lambda_hat;
                let yt: Vec<f64> = y.iter().map(|&v| box_cox_transform(v, lambda)).collect();
                let ols = ols_fit(&x, &yt, &names)?;
                let fitted: Vec<f64> = ols.fitted.iter().map(|&v| inverse_box_cox(v, lambda)).collect();
                let fitted = back_transform(&ast.response, &fitted);
                (
                    format!("boxcox({})", ast.response),
                    ols.loglik,
                    ols.k as f64 + 1.0,
                    fitted,
                    Some(lambda),
                )
            } else {
                let ols = ols_fit(&x, &y, &names)?;
                let fitted = back_transform(&ast.response, &ols.fitted);
                (ast.response.to_string(), ols.loglik, ols.k as f64, fitted, None)
            };
            let (aic, bic) = criteria(loglik, k);
            Ok((
                ModelRow {
                    name,
                    class: entry.class,
                    formula: ast.to_string(),
                    scale: row_scale,
                    n,
                    df: k,
                    loglik,
                    aic,
                    bic,
                    pseudo_r2: pseudo_r2_corr(&raw, &fitted)?,
                    converged: true,
                    box_cox_lambda: lambda,
                },
                None,
                0.0,
            ))
        }
        ModelClass::Glm => {
            let family: Family = entry.family.as_deref().unwrap_or("GA").parse()?;
            let link = parse_link(&entry.links.mu)?.unwrap_or(Link::Log);
            if family != Family::GA || link != Link::Log || entry.box_cox {
                return Err(Error::Schema(format!(
                    "model '{name}': the GLM class supports the gamma family with log link only"
                )));
            }
            let terms = parametric_only(&ast)?;
            let sub = SubModel::new(Link::Log, terms, vec![]);
            let x = sub.design(data)?;
            let y = data.eval(&ast.response)?;
            let glm = glm_fit_gamma_log(&x, &y, &sub.coef_names())?;
            let fitted = back_transform(&ast.response, &glm.mu_hat);
            Ok((
                ModelRow {
                    name,
                    class: entry.class,
                    formula: ast.to_string(),
                    scale: ast.response.to_string(),
                    n,
                    df: glm.names.len() as f64 + 1.0,
                    loglik: glm.loglik,
                    aic: glm.aic,
                    bic: glm.bic,
                    pseudo_r2: pseudo_r2_corr(&raw, &fitted)?,
                    converged: true,
                    box_cox_lambda: None,
                },
                None,
                0.0,
            ))
        }
        ModelClass::Gamlss => {
            if entry.box_cox {
                return Err(Error::Schema(format!(
                    "model '{name}': box_cox applies to the CNLRM class only"
                )));
            }
            let family: Family = entry.family.as_deref().unwrap_or("GA").parse()?;
            let spec = build_spec(
                &ast,
                family,
                parse_link(&entry.links.mu)?,
                parse_link(&entry.links.sigma)?,
                data,
            )?;
            let fm = fit(&spec, data, options)?;
            let gd = fm.global_deviance;
            let fitted = back_transform(&ast.response, &fm.fitted_mean());
            Ok((
                ModelRow {
                    name,
                    class: entry.class,
                    formula: ast.to_string(),
                    scale: ast.response.to_string(),
                    n,
                    df: fm.df_total,
                    loglik: -0.5 * gd,
                    aic: gd + 2.0 * fm.df_total,
                    bic: gd + ln_n * fm.df_total,
                    pseudo_r2: pseudo_r2_corr(&raw, &fitted)?,
                    converged: fm.converged,
                    box_cox_lambda: None,
                },
                Some(spec),
                gd,
            ))
        }
    }
}

fn sub_contains(big: &SubModel, small: &SubModel) -> bool {
    // a spline carries its own linear term, so x is nested in cs(x)
    big.link == small.link
        && small
            .parametric
            .iter()
            .all(|t| big.parametric.contains(t) || big.splines.iter().any(|s| &s.var == t))
        && small
            .splines
            .iter()
            .all(|t| big.splines.iter().any(|s| s.var == t.var && s.df >= t.df))
}

/// Whether `small` is `big` with some terms removed.
pub fn nested_in(small: &ModelSpec, big: &ModelSpec) -> bool {
    small != big
        && small.response == big.response
        && small.family == big.family
        && sub_contains(&big.mu, &small.mu)
        && sub_contains(&big.sigma, &small.sigma)
}

/// Fit every listed model on `data`, order by pseudo-R², run likelihood-ratio
/// tests for nested GAMLSS pairs and check the reported rows.
pub fn run_compare(spec: &CompareSpec, data: Option<&Dataset>, options: &FitOptions) -> Result<CompareReport> {
    if !spec.models.is_empty() && data.is_none() {
        return Err(Error::Schema("fitting the listed models needs --data".into()));
    }
    let mut fitted = Vec::new();
    for (i, entry) in spec.models.iter().enumerate() {
        let data = data.expect("checked above");
        fitted.push(fit_entry(entry, i, data, options)?);
    }
    let mut lr_tests = Vec::new();
    for (a, (ra, sa, gda)) in fitted.iter().enumerate() {
        for (b, (rb, sb, gdb)) in fitted.iter().enumerate() {
            if let (Some(sa), Some(sb)) = (sa, sb) {
                if a != b && nested_in(sa, sb) {
                    lr_tests.push(NestedTest {
                        restricted: ra.name.clone(),
                        full: rb.name.clone(),
                        test: lr_test(*gda, *gdb, ra.df, rb.df)?,
                    });
                }
            }
        }
    }
    let mut models: Vec<ModelRow> = fitted.into_iter().map(|(r, _, _)| r).collect();
    models.sort_by(|a, b| b.pseudo_r2.total_cmp(&a.pseudo_r2).then_with(|| a.name.cmp(&b.name)));
    let mut scales: Vec<String> = Vec::new();
    for m in &models {
        if !scales.contains(&m.scale) {
            scales.push(m.scale.clone());
        }
    }
    let tol = spec.tolerance.unwrap_or(DEFAULT_TOLERANCE);
    Ok(CompareReport {
        format_version: COMPARE_FORMAT_VERSION,
        criteria_comparable: scales.len() <= 1,
        scales,
        models,
        lr_tests,
        consistency: spec.reported.iter().map(|r| check_reported(r, tol)).collect(),
    })
}

/// Plain-text rendering of a comparison.
pub fn render(report: &CompareReport) -> String {
    let mut s = String::new();
    if !report.models.is_empty() {
        let mark = if report.criteria_comparable { "" } else { "*" };
        let _ = writeln!(
            s,
            "{:<16} {:<7} {:<14} {:>8} {:>12} {:>12} {:>10}",
            "model", "class", "scale", "df", "AIC", "BIC", "pseudo-R2"
        );
        for m in &report.models {
            let _ = writeln!(
                s,
                "{:<16} {:<7} {:<14} {:>8.2} {:>12} {:>12} {:>10.4}{}",
                m.name,
                m.class.name(),
                m.scale,
                m.df,
                format!("{:.2}{mark}", m.aic),
                format!("{:.2}{mark}", m.bic),
                m.pseudo_r2,
                if m.converged { "" } else { "  (not converged)" }
            );
        }
        if !report.criteria_comparable {
            let _ = writeln!(
                s,
                "* AIC/BIC are not comparable across response scales ({}); compare them only within one scale.",
                report.scales.join(", ")
            );
        }
    }
    if !report.lr_tests.is_empty() {
        let _ = writeln!(s, "\nlikelihood-ratio tests");
        for t in &report.lr_tests {
            let _ = writeln!(
                s,
                "{} within {}: Lambda = {:.4}, d = {:.2}, p = {}",
                t.restricted,
                t.full,
                t.test.lambda,
                t.test.d,
                hedonic_gamlss::engine::fmt_p(t.test.p)
            );
        }
    }
    if !report.consistency.is_empty() {
        let _ = writeln!(s, "\nreported criteria");
        for c in &report.consistency {
            if c.consistent {
                let _ = writeln!(
                    s,
                    "{}: consistent (df {:.1}, implied BIC {:.1})",
                    c.name, c.df_from_aic, c.bic_implied
                );
            } else {
                let _ = writeln!(s, "{}: INCONSISTENT", c.name);
                for issue in &c.issues {
                    let _ = writeln!(s, "  - {issue}");
                }
                if let Some((df, bic)) = c.swap_gd_aic {
                    let _ = writeln!(
                        s,
                        "  - with GD and AIC exchanged the row is consistent: df {df:.1}, BIC {bic:.1}"
                    );
                }
            }
        }
    }
    s
}
