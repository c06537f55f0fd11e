//! Deviance-based selection criteria, likelihood-ratio tests, quantile
//! residuals, worm plots and pseudo-R² measures.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::engine::{fit, FitOptions, FittedModel, ModelSpec};
use crate::error::{Error, Result};
use crate::math::{chi2_sf, kolmogorov_sf, norm_pdf, norm_quantile, quantile_sorted};

pub const REPORT_FORMAT_VERSION: u32 = 1;
/// Probability-scale clamp applied before the inverse normal.
pub const U_CLAMP: f64 = 1e-12;

/// Generalized AIC: `gd + penalty * df`.
pub fn gaic(gd: f64, df: f64, penalty: f64) -> Result<f64> {
    if !(df >= 0.0) {
        return Err(Error::domain("df", df, "must be nonnegative"));
    }
    if !(penalty >= 0.0) {
        return Err(Error::domain("penalty", penalty, "must be nonnegative"));
    }
    Ok(gd + penalty * df)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionReport {
    pub gd: f64,
    pub df_total: f64,
    pub n: usize,
    pub aic: f64,
    pub bic: f64,
    /// GAIC keyed by the penalty as written, e.g. `"3"` or `"2.5"`.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub gaic_custom: BTreeMap<String, f64>,
}

impl CriterionReport {
    pub fn new(gd: f64, df_total: f64, n: usize, custom_penalties: &[f64]) -> Result<Self> {
        if n == 0 {
            return Err(Error::InsufficientData("criteria need n > 0".into()));
        }
        let mut gaic_custom = BTreeMap::new();
        for &k in custom_penalties {
            gaic_custom.insert(format!("{k}"), gaic(gd, df_total, k)?);
        }
        Ok(CriterionReport {
            gd,
            df_total,
            n,
            aic: gaic(gd, df_total, 2.0)?,
            bic: gaic(gd, df_total, (n as f64).ln())?,
            gaic_custom,
        })
    }

    pub fn from_model(fm: &FittedModel) -> Result<Self> {
        Self::new(fm.global_deviance, fm.df_total, fm.n, &[])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrTest {
    pub lambda: f64,
    pub d: f64,
    pub p: f64,
}

/// Generalized likelihood-ratio test of a model with deviance `gd0` nested in
/// one with deviance `gd1`.
pub fn lr_test(gd0: f64, gd1: f64, df0: f64, df1: f64) -> Result<LrTest> {
    let d = df1 - df0;
    if !(d > 0.0) {
        return Err(Error::Nesting(d));
    }
    let lambda = gd0 - gd1;
    Ok(LrTest {
        lambda,
        d,
        p: chi2_sf(lambda.max(0.0), d),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualSet {
    pub r: Vec<f64>,
    pub u: Vec<f64>,
    pub randomized: bool,
    pub seed: Option<u64>,
    /// Observations whose probability was clamped into `[1e-12, 1 - 1e-12]`.
    pub clamped: usize,
}

impl ResidualSet {
    /// Quantile residuals from probability-integral-transform values.
    pub fn from_probabilities(u: &[f64]) -> Self {
        let mut clamped = 0;
        let u: Vec<f64> = u
            .iter()
            .map(|&p| {
                let c = p.clamp(U_CLAMP, 1.0 - U_CLAMP);
                if c != p {
                    clamped += 1;
                }
                c
            })
            .collect();
        ResidualSet {
            r: u.iter().map(|&p| norm_quantile(p)).collect(),
            u,
            randomized: false,
            seed: None,
            clamped,
        }
    }
}

/// `r_i = Phi^-1(F(y_i | theta_i))`. Every supported family is continuous,
/// so no randomization takes place and `seed` is not recorded.
pub fn quantile_residuals(fm: &FittedModel, data: &Dataset, _seed: Option<u64>) -> Result<ResidualSet> {
    let y = data.eval(&fm.spec.response)?;
    let params = fm.predict_params(data)?;
    let family = fm.spec.family;
    let u = y
        .iter()
        .enumerate()
        .map(|(i, &yi)| family.cdf(yi, params.mu[i], params.sigma[i]))
        .collect::<Result<Vec<_>>>()?;
    Ok(ResidualSet::from_probabilities(&u))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WormPoint {
    pub z: f64,
    pub deviation: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Pointwise 95% half-width of the worm-plot band at plotting position `p`.
pub fn worm_band(p: f64, n: usize) -> f64 {
    let z = norm_quantile(p);
    1.96 * (p * (1.0 - p) / n as f64).sqrt() / norm_pdf(z)
}

/// Detrended normal QQ data: ordered residuals against normal quantiles at
/// `p_i = (i - 0.5)/n`. With `max_points` set, an evenly spaced subset of the
/// ordered points is returned; band widths still use the full `n`.
pub fn worm_plot_data(r: &[f64], max_points: Option<usize>) -> Result<Vec<WormPoint>> {
    let n = r.len();
    if n < 10 {
        return Err(Error::InsufficientData(format!(
            "worm plot needs at least 10 residuals, got {n}"
        )));
    }
    let mut sorted = r.to_vec();
    sorted.sort_by(f64::total_cmp);
    let take = max_points.unwrap_or(n).clamp(2, n);
    let idx: Vec<usize> = if take == n {
        (0..n).collect()
    } else {
        (0..take)
            .map(|k| ((k as f64) * (n - 1) as f64 / (take - 1) as f64).round() as usize)
            .collect()
    };
    Ok(idx
        .into_iter()
        .map(|i| {
            let p = (i as f64 + 0.5) / n as f64;
            let z = norm_quantile(p);
            let band = worm_band(p, n);
            WormPoint {
                z,
                deviation: sorted[i] - z,
                lower: -band,
                upper: band,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WormGroup {
    pub lower: f64,
    pub upper: f64,
    pub n: usize,
    pub points: Vec<WormPoint>,
}

/// Quantile-bin boundaries of `x` (type-7 quantiles at `k/bins`).
pub fn bin_boundaries(x: &[f64], bins: usize) -> Result<Vec<f64>> {
    if bins == 0 || x.is_empty() {
        return Err(Error::domain(
            "bins",
            bins as f64,
            "need at least one bin and one value",
        ));
    }
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok((0..=bins)
        .map(|k| quantile_sorted(&sorted, k as f64 / bins as f64))
        .collect())
}

/// One worm plot per quantile bin of `by`. Bins are closed on the right and
/// the first bin also includes its lower boundary.
pub fn worm_groups(r: &[f64], by: &[f64], bins: usize, max_points: Option<usize>) -> Result<Vec<WormGroup>> {
    if r.len() != by.len() {
        return Err(Error::Schema(format!(
            "{} residuals but {} grouping values",
            r.len(),
            by.len()
        )));
    }
    let bounds = bin_boundaries(by, bins)?;
    let mut groups: Vec<Vec<f64>> = vec![Vec::new(); bins];
    for (&ri, &b) in r.iter().zip(by) {
        let k = bounds[1..bins].partition_point(|&t| t < b);
        groups[k].push(ri);
    }
    groups
        .into_iter()
        .enumerate()
        .map(|(k, g)| {
            Ok(WormGroup {
                lower: bounds[k],
                upper: bounds[k + 1],
                n: g.len(),
                points: worm_plot_data(&g, max_points)?,
            })
        })
        .collect()
}

/// Squared sample correlation of `y` and `yhat`.
pub fn pseudo_r2_corr(y: &[f64], yhat: &[f64]) -> Result<f64> {
    if y.len() != yhat.len() || y.len() < 2 {
        return Err(Error::Undefined(
            "pseudo-R² needs two equally long vectors of length >= 2".into(),
        ));
    }
    let n = y.len() as f64;
    let my = y.iter().sum::<f64>() / n;
    let mh = yhat.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in y.iter().zip(yhat) {
        let (da, db) = (a - my, b - mh);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Undefined("pseudo-R² of a constant vector".into()));
    }
    // An affine image of y scores exactly 1 once the deviations from the
    // line are within the rounding of the inputs and the summed means.
    let b = sxy / sxx;
    let eps = (n + 4.0) * f64::EPSILON;
    let affine = y.iter().zip(yhat).all(|(a, h)| {
        let off = (h - mh) - b * (a - my);
        off.abs() <= eps * (h.abs() + mh.abs() + b.abs() * (a.abs() + my.abs()))
    });
    if affine {
        return Ok(1.0);
    }
    Ok((sxy * sxy / (sxx * syy)).min(1.0))
}

/// `1 - loglik_fit / loglik_null`.
pub fn pseudo_r2_mcfadden(loglik_fit: f64, loglik_null: f64) -> Result<f64> {
    if loglik_null == 0.0 {
        return Err(Error::Undefined(
            "McFadden pseudo-R² with a zero null log-likelihood".into(),
        ));
    }
    Ok(1.0 - loglik_fit / loglik_null)
}

/// `1 - exp(2 (loglik_null - loglik_fit) / n)`.
pub fn pseudo_r2_coxsnell(loglik_fit: f64, loglik_null: f64, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::InsufficientData("Cox-Snell pseudo-R² needs n > 0".into()));
    }
    Ok(1.0 - (2.0 * (loglik_null - loglik_fit) / n as f64).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsTest {
    pub statistic: f64,
    pub p: f64,
}

/// One-sample Kolmogorov-Smirnov test against N(0, 1), with Stephens'
/// small-sample adjustment of the asymptotic distribution.
pub fn ks_normal(r: &[f64]) -> Result<KsTest> {
    let n = r.len();
    if n == 0 {
        return Err(Error::InsufficientData("KS test on an empty sample".into()));
    }
    let mut s = r.to_vec();
    s.sort_by(f64::total_cmp);
    let nf = n as f64;
    let mut d: f64 = 0.0;
    for (i, &v) in s.iter().enumerate() {
        let f = crate::math::norm_cdf(v);
        d = d.max((i as f64 + 1.0) / nf - f).max(f - i as f64 / nf);
    }
    let sq = nf.sqrt();
    Ok(KsTest {
        statistic: d,
        p: kolmogorov_sf(d * (sq + 0.12 + 0.11 / sq)),
    })
}

/// Criteria of a published or hand-entered model row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportedRow {
    pub name: String,
    pub gd: f64,
    pub aic: f64,
    pub bic: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyCheck {
    pub name: String,
    /// `(aic - gd) / 2`.
    pub df_from_aic: f64,
    /// `gd + ln(n) * df_from_aic`.
    pub bic_implied: f64,
    pub consistent: bool,
    pub issues: Vec<String>,
    /// When the row is inconsistent but becomes consistent with GD and AIC
    /// exchanged: the implied df and BIC of the exchanged row.
    pub swap_gd_aic: Option<(f64, f64)>,
}

/// Check `aic = gd + 2 df` and `bic = gd + ln(n) df` on a reported row.
/// `tol` is the allowed BIC discrepancy on the reported scale (rounded
/// tables need about 0.5).
pub fn check_reported(row: &ReportedRow, tol: f64) -> ConsistencyCheck {
    let ln_n = (row.n as f64).ln();
    let implied = |gd: f64, aic: f64| {
        let df = (aic - gd) / 2.0;
        (df, gd + ln_n * df)
    };
    let (df, bic_implied) = implied(row.gd, row.aic);
    let mut issues = Vec::new();
    if df < 0.0 {
        issues.push(format!(
            "AIC {} is below GD {}, impossible since AIC = GD + 2 df",
            row.aic, row.gd
        ));
    }
    if row.bic < row.aic && row.n as f64 > std::f64::consts::E.powi(2) {
        issues.push(format!("BIC {} is below AIC {} although ln(n) > 2", row.bic, row.aic));
    }
    if (row.bic - bic_implied).abs() > tol {
        issues.push(format!(
            "BIC {} differs from GD + ln(n) df = {:.1} by {:.1}",
            row.bic,
            bic_implied,
            row.bic - bic_implied
        ));
    }
    let consistent = issues.is_empty();
    let swap_gd_aic = if consistent {
        None
    } else {
        let (df2, bic2) = implied(row.aic, row.gd);
        (df2 >= 0.0 && (row.bic - bic2).abs() <= tol).then_some((df2, bic2))
    };
    ConsistencyCheck {
        name: row.name.clone(),
        df_from_aic: df,
        bic_implied,
        consistent,
        issues,
        swap_gd_aic,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PseudoR2 {
    pub corr: f64,
    pub mcfadden: f64,
    pub coxsnell: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualSummary {
    pub mean: f64,
    pub variance: f64,
    pub skewness: f64,
    pub kurtosis: f64,
    pub min: f64,
    pub max: f64,
}

impl ResidualSummary {
    pub fn of(r: &[f64]) -> Self {
        let n = r.len() as f64;
        let mean = r.iter().sum::<f64>() / n;
        let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
        for &v in r {
            let d = v - mean;
            m2 += d * d;
            m3 += d * d * d;
            m4 += d * d * d * d;
        }
        let (m2, m3, m4) = (m2 / n, m3 / n, m4 / n);
        ResidualSummary {
            mean,
            variance: m2 * n / (n - 1.0),
            skewness: m3 / m2.powf(1.5),
            kurtosis: m4 / (m2 * m2),
            min: r.iter().copied().fold(f64::INFINITY, f64::min),
            max: r.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub format_version: u32,
    pub converged: bool,
    pub criteria: CriterionReport,
    pub loglik: f64,
    pub loglik_null: f64,
    pub pseudo_r2: PseudoR2,
    pub residuals: ResidualSummary,
    pub ks: KsTest,
    pub randomized: bool,
    pub clamped: usize,
}

/// Log-likelihood of the intercept-only model of the same family and links.
pub fn null_loglik(spec: &ModelSpec, data: &Dataset, options: &FitOptions) -> Result<f64> {
    let mut null = ModelSpec::intercept_only(spec.response.clone(), spec.family);
    null.mu.link = spec.mu.link;
    null.sigma.link = spec.sigma.link;
    Ok(-0.5 * fit(&null, data, options)?.global_deviance)
}

/// Criteria, pseudo-R² measures and residual checks for a fitted model.
pub fn diagnose(fm: &FittedModel, data: &Dataset, options: &FitOptions) -> Result<(DiagnosticsReport, ResidualSet)> {
    let rs = quantile_residuals(fm, data, None)?;
    let gd = fm.global_deviance(data)?;
    let loglik = -0.5 * gd;
    let loglik_null = null_loglik(&fm.spec, data, options)?;
    let y = data.eval(&fm.spec.response)?;
    let params = fm.predict_params(data)?;
    let mean: Vec<f64> = params
        .mu
        .iter()
        .zip(&params.sigma)
        .map(|(&m, &s)| fm.spec.family.mean(m, s))
        .collect();
    let report = DiagnosticsReport {
        format_version: REPORT_FORMAT_VERSION,
        converged: fm.converged,
        criteria: CriterionReport::new(gd, fm.df_total, data.n(), &[])?,
        loglik,
        loglik_null,
        pseudo_r2: PseudoR2 {
            corr: pseudo_r2_corr(&y, &mean)?,
            mcfadden: pseudo_r2_mcfadden(loglik, loglik_null)?,
            coxsnell: pseudo_r2_coxsnell(loglik, loglik_null, data.n())?,
        },
        residuals: ResidualSummary::of(&rs.r),
        ks: ks_normal(&rs.r)?,
        randomized: rs.randomized,
        clamped: rs.clamped,
    };
    Ok((report, rs))
}
