//! The `fit`, `compare`, `diagnose`, `simulate` and `predict` subcommands.
//!
//! Every command returns its exit status; errors propagate to the caller,
//! which reports them on standard error.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use hedonic_gamlss::data::{derive_variables, load_csv, Dataset, SchemaSpec, VarExpr};
use hedonic_gamlss::diagnostics::{diagnose, worm_groups, worm_plot_data, DiagnosticsReport, ResidualSet};
use hedonic_gamlss::engine::{fit, FitOptions, FittedModel};
use hedonic_gamlss::families::{Family, Link, Param};
use hedonic_gamlss::formula::{build_spec, parse_formula};
use hedonic_gamlss::simulate::{simulate_hedonic, Truth};
use hedonic_gamlss::{Error, Result};

use crate::compare::{render, run_compare, CompareSpec};
use crate::svg;

/// Points drawn per worm plot; bands still use every residual.
pub const WORM_MAX_POINTS: usize = 1000;

pub const EXIT_OK: i32 = 0;
pub const EXIT_NOT_CONVERGED: i32 = 2;

/// Load a CSV file. Files carrying the land-lot covariates are checked
/// against that schema and get the derived dummies, logs and interaction;
/// anything else is loaded as plain columns.
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let probe = load_csv(path, &SchemaSpec::free())?;
    let schema = SchemaSpec::hedonic_covariates();
    if schema.vars.iter().filter(|v| v.required).all(|v| probe.has(v.name)) {
        derive_variables(&load_csv(path, &schema)?)
    } else {
        Ok(probe)
    }
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn fit_options(tol: Option<f64>, max_iter: Option<usize>) -> FitOptions {
    let mut o = FitOptions::default();
    if let Some(t) = tol {
        o.tol = t;
    }
    if let Some(m) = max_iter {
        o.max_outer = m;
    }
    o
}

pub fn coefficient_table(fm: &FittedModel) -> String {
    let mut s = String::new();
    let spec = &fm.spec;
    let _ = writeln!(
        s,
        "family {}   mu link {}   sigma link {}   n {}",
        spec.family, spec.mu.link, spec.sigma.link, fm.n
    );
    let _ = writeln!(
        s,
        "{:<6} {:<28} {:>14} {:>12} {:>10} {:>8}",
        "param", "term", "estimate", "se", "z", "p"
    );
    for row in fm.standard_errors() {
        let _ = writeln!(s, "{row}");
    }
    let _ = writeln!(s, "\neffective degrees of freedom");
    for e in &fm.df_ledger {
        let _ = writeln!(s, "{:<6} {:<28} {:>8}", e.param.name(), e.term, e.df);
    }
    let _ = writeln!(s, "{:<6} {:<28} {:>8}", "", "total", fm.df_total);
    let _ = writeln!(s, "\nconverged {} after {} iterations", fm.converged, fm.iterations);
    s
}

fn criteria_summary(r: &DiagnosticsReport) -> String {
    format!(
        "GD {:.2}   AIC {:.2}   BIC {:.2}   df {:.2}\npseudo-R2 corr {:.4}   McFadden {:.4}   Cox-Snell {:.4}\n",
        r.criteria.gd,
        r.criteria.aic,
        r.criteria.bic,
        r.criteria.df_total,
        r.pseudo_r2.corr,
        r.pseudo_r2.mcfadden,
        r.pseudo_r2.coxsnell
    )
}

fn residual_csv(fm: &FittedModel, data: &Dataset, rs: &ResidualSet) -> Result<String> {
    let y = data.eval(&fm.spec.response)?;
    let params = fm.predict_params(data)?;
    let mut s = String::from("row,y,mu,sigma,mean,u,r\n");
    for i in 0..y.len() {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            i + 1,
            y[i],
            params.mu[i],
            params.sigma[i],
            fm.spec.family.mean(params.mu[i], params.sigma[i]),
            rs.u[i],
            rs.r[i]
        );
    }
    Ok(s)
}

fn worm_csv(groups: &[(String, Vec<hedonic_gamlss::diagnostics::WormPoint>)]) -> String {
    let mut s = String::from("group,z,deviation,lower,upper\n");
    for (label, pts) in groups {
        for p in pts {
            let _ = writeln!(s, "\"{label}\",{},{},{},{}", p.z, p.deviation, p.lower, p.upper);
        }
    }
    s
}

fn write_diagnostics(
    fm: &FittedModel,
    data: &Dataset,
    report: &DiagnosticsReport,
    rs: &ResidualSet,
    out: &Path,
    report_name: &str,
) -> Result<()> {
    write(&out.join(report_name), &(serde_json::to_string_pretty(report)? + "\n"))?;
    write(&out.join("residuals.csv"), &residual_csv(fm, data, rs)?)?;
    let panels = vec![(String::new(), worm_plot_data(&rs.r, Some(WORM_MAX_POINTS))?)];
    write(&out.join("worm.svg"), &svg::worm_plot("Worm plot", &panels))?;
    write(&out.join("worm.csv"), &worm_csv(&panels))?;
    Ok(())
}

pub struct FitArgs {
    pub data: PathBuf,
    pub formula: String,
    pub family: String,
    pub mu_link: Option<String>,
    pub sigma_link: Option<String>,
    pub out: PathBuf,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
}

/// Writes `coefficients.txt`, `criteria.json`, `model.json`,
/// `residuals.csv`, `worm.csv` and `worm.svg` into the output directory.
pub fn cmd_fit(a: &FitArgs) -> Result<i32> {
    let ast = parse_formula(&a.formula)?;
    let family: Family = a.family.parse()?;
    let mu_link = a.mu_link.as_deref().map(str::parse::<Link>).transpose()?;
    let sigma_link = a.sigma_link.as_deref().map(str::parse::<Link>).transpose()?;
    let data = load_dataset(&a.data)?;
    let spec = build_spec(&ast, family, mu_link, sigma_link, &data)?;
    for w in &spec.warnings {
        eprintln!("warning: {w}");
    }
    let options = fit_options(a.tol, a.max_iter);
    let fm = fit(&spec, &data, &options)?;
    let (report, rs) = diagnose(&fm, &data, &options)?;
    fs::create_dir_all(&a.out)?;
    let table = coefficient_table(&fm);
    let criteria = criteria_summary(&report);
    write(
        &a.out.join("coefficients.txt"),
        &format!("{ast}\n\n{table}\n{criteria}"),
    )?;
    write(&a.out.join("model.json"), &(fm.to_json()? + "\n"))?;
    write_diagnostics(&fm, &data, &report, &rs, &a.out, "criteria.json")?;
    print!("{table}\n{criteria}");
    if fm.converged {
        Ok(EXIT_OK)
    } else {
        eprintln!("warning: fit did not converge in {} iterations", fm.iterations);
        Ok(EXIT_NOT_CONVERGED)
    }
}

pub struct DiagnoseArgs {
    pub model: PathBuf,
    pub data: PathBuf,
    pub out: PathBuf,
    pub worm_by: Option<String>,
    pub bins: usize,
}

/// Writes `diagnostics.json`, `residuals.csv`, `residual_index.svg`,
/// `worm.csv`, `worm.svg` and, with a grouping variable, `worm_by.csv` and
/// `worm_by.svg`.
pub fn cmd_diagnose(a: &DiagnoseArgs) -> Result<i32> {
    let fm = FittedModel::from_json(&read(&a.model)?)?;
    let data = load_dataset(&a.data)?;
    let by = a.worm_by.as_deref().map(str::parse::<VarExpr>).transpose()?;
    let by_values = by.as_ref().map(|v| data.eval(v)).transpose()?;
    let (report, rs) = diagnose(&fm, &data, &FitOptions::default())?;
    let grouped = match (&by, &by_values) {
        (Some(v), Some(x)) => Some(
            worm_groups(&rs.r, x, a.bins, Some(WORM_MAX_POINTS))?
                .into_iter()
                .enumerate()
                .map(|(k, g)| {
                    let open = if k == 0 { "[" } else { "(" };
                    (
                        format!("{v} in {open}{:.4}, {:.4}]  n={}", g.lower, g.upper, g.n),
                        g.points,
                    )
                })
                .collect::<Vec<_>>(),
        ),
        _ => None,
    };
    fs::create_dir_all(&a.out)?;
    write_diagnostics(&fm, &data, &report, &rs, &a.out, "diagnostics.json")?;
    write(
        &a.out.join("residual_index.svg"),
        &svg::residual_index_plot("Quantile residuals", &rs.r),
    )?;
    if let (Some(v), Some(panels)) = (&by, &grouped) {
        write(
            &a.out.join("worm_by.svg"),
            &svg::worm_plot(&format!("Worm plots by {v}"), panels),
        )?;
        write(&a.out.join("worm_by.csv"), &worm_csv(panels))?;
    }
    print!("{}", criteria_summary(&report));
    println!(
        "KS D {:.4}, p {}",
        report.ks.statistic,
        hedonic_gamlss::engine::fmt_p(report.ks.p)
    );
    Ok(EXIT_OK)
}

pub struct SimulateArgs {
    pub seed: u64,
    pub n: usize,
    pub truth: Option<PathBuf>,
    pub out: PathBuf,
}

pub fn cmd_simulate(a: &SimulateArgs) -> Result<i32> {
    let truth = match &a.truth {
        Some(p) => Truth::from_json(&read(p)?)?,
        None => Truth::default(),
    };
    let ds = simulate_hedonic(a.seed, a.n, &truth)?;
    ds.save_csv(&a.out)?;
    Ok(EXIT_OK)
}

pub struct PredictArgs {
    pub model: PathBuf,
    pub data: PathBuf,
    pub which: String,
    pub out: PathBuf,
}

pub fn cmd_predict(a: &PredictArgs) -> Result<i32> {
    let which: Param = a.which.parse()?;
    let fm = FittedModel::from_json(&read(&a.model)?)?;
    let data = load_dataset(&a.data)?;
    let pred = fm.predict(&data, which)?;
    let mut s = format!("row,{}\n", which.name());
    for (i, v) in pred.iter().enumerate() {
        let _ = writeln!(s, "{},{v}", i + 1);
    }
    write(&a.out, &s)?;
    Ok(EXIT_OK)
}

pub struct CompareArgs {
    pub data: Option<PathBuf>,
    pub spec: PathBuf,
    pub out: Option<PathBuf>,
}

pub fn cmd_compare(a: &CompareArgs) -> Result<i32> {
    let spec = CompareSpec::from_json(&read(&a.spec)?)?;
    let data = a.data.as_deref().map(load_dataset).transpose()?;
    let report = run_compare(&spec, data.as_ref(), &FitOptions::default())?;
    if let Some(out) = &a.out {
        write(out, &(serde_json::to_string_pretty(&report)? + "\n"))?;
    }
    print!("{}", render(&report));
    Ok(EXIT_OK)
}
