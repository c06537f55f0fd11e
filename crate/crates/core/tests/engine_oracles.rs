//! The fitting engine against least squares, an independent gamma GLM and
//! its own structural properties.

mod common;

use common::{draw, gamma_log_scoring, normal_equations, random_design, rng};
use hedonic_gamlss::baselines::glm_fit_gamma_log;
use hedonic_gamlss::data::{derive_variables, Dataset, VarExpr};
use hedonic_gamlss::engine::{fit, fit_from, global_deviance, refit, FitOptions, ModelSpec, SplineTerm, SubModel};
use hedonic_gamlss::families::{Family, Link, Param};
use hedonic_gamlss::simulate::{simulate_hedonic, Truth};
use hedonic_gamlss::Error;
use nalgebra::DMatrix;

fn var(s: &str) -> VarExpr {
    VarExpr::Var(s.into())
}

fn tight() -> FitOptions {
    FitOptions {
        max_outer: 200,
        max_inner: 50,
        tol: 1e-13,
    }
}

/// Dataset with columns `y, x1, .., x{p-1}` from a design whose first column
/// is the intercept.
fn dataset(x: &DMatrix<f64>, y: &[f64]) -> Dataset {
    let mut cols = vec![("y".to_string(), y.to_vec())];
    for j in 1..x.ncols() {
        cols.push((format!("x{j}"), x.column(j).iter().copied().collect()));
    }
    Dataset::from_reals(cols).unwrap()
}

fn parametric_spec(family: Family, link: Link, p: usize) -> ModelSpec {
    let mut spec = ModelSpec::intercept_only(var("y"), family);
    spec.mu = SubModel::new(link, (1..p).map(|j| var(&format!("x{j}"))).collect(), vec![]);
    spec
}

#[test]
fn normal_identity_model_is_least_squares() {
    let mut r = rng(31);
    for case in 0..20 {
        let n = if case % 2 == 0 { 100 } else { 1000 };
        let p = 2 + case % 4;
        let x = random_design(&mut r, n, p);
        let y: Vec<f64> = (0..n)
            .map(|i| (0..p).map(|j| x[(i, j)] * (j as f64 - 1.0)).sum::<f64>() + draw(Family::NO, 0.0, 1.3, &mut r))
            .collect();
        let (beta, rss, xtx_inv) = normal_equations(&x, &y);
        let fm = fit(
            &parametric_spec(Family::NO, Link::Identity, p),
            &dataset(&x, &y),
            &tight(),
        )
        .unwrap();
        assert!(fm.converged);
        let sigma2_ml = rss / n as f64;
        for j in 0..p {
            assert!((fm.mu.beta[j] - beta[j]).abs() < 1e-8, "case {case} beta {j}");
            let se = (sigma2_ml * xtx_inv[(j, j)]).sqrt();
            assert!(
                (fm.mu.se[j] - se).abs() < 1e-8,
                "case {case} se {j}: {} vs {se}",
                fm.mu.se[j]
            );
        }
        assert!((fm.sigma.fitted[0] - sigma2_ml.sqrt()).abs() < 1e-8);
    }
}

#[test]
fn gamma_log_model_is_the_gamma_glm() {
    let mut r = rng(32);
    for case in 0..20 {
        let n = if case % 2 == 0 { 100 } else { 1000 };
        let p = 2 + case % 3;
        let x = random_design(&mut r, n, p);
        let y: Vec<f64> = (0..n)
            .map(|i| {
                let eta = 1.0 + (1..p).map(|j| 0.3 * x[(i, j)]).sum::<f64>();
                draw(Family::GA, eta.exp(), 0.6, &mut r)
            })
            .collect();
        let oracle = gamma_log_scoring(&x, &y);
        let names: Vec<String> = (0..p).map(|j| format!("b{j}")).collect();
        let glm = glm_fit_gamma_log(&x, &y, &names).unwrap();
        let fm = fit(&parametric_spec(Family::GA, Link::Log, p), &dataset(&x, &y), &tight()).unwrap();
        assert!(fm.converged);
        for j in 0..p {
            assert!(
                (fm.mu.beta[j] - oracle[j]).abs() < 1e-6,
                "case {case} vs scoring oracle"
            );
            assert!(
                (fm.mu.beta[j] - glm.beta[j]).abs() < 1e-6,
                "case {case} vs baseline GLM"
            );
            assert!(
                (glm.beta[j] - oracle[j]).abs() < 1e-8,
                "case {case}: {} vs {}",
                glm.beta[j],
                oracle[j]
            );
            // same information matrix up to the dispersion estimate
            let s = fm.sigma.fitted[0];
            let expected = glm.se[j] * s / glm.dispersion.sqrt();
            assert!((fm.mu.se[j] / expected - 1.0).abs() < 1e-6, "case {case} se {j}");
        }
    }
}

fn hedonic(seed: u64, n: usize) -> Dataset {
    derive_variables(&simulate_hedonic(seed, n, &Truth::default()).unwrap()).unwrap()
}

fn small_smooth_spec() -> ModelSpec {
    let mut spec = ModelSpec::intercept_only(var("UP"), Family::GA);
    spec.mu = SubModel::new(
        Link::Log,
        vec![var("SZ"), var("STR1"), var("YR07")],
        vec![
            SplineTerm::new(VarExpr::Log("AR".into()), 4.0),
            SplineTerm::new(var("LAT"), 3.0),
        ],
    );
    spec.sigma = SubModel::new(Link::Log, vec![var("ST")], vec![]);
    spec
}

#[test]
fn deviance_is_direct_sum_and_order_free() {
    let data = hedonic(5, 600);
    let fm = fit(&small_smooth_spec(), &data, &FitOptions::default()).unwrap();
    let y = data.real("UP").unwrap();
    let mut direct = 0.0;
    for i in 0..y.len() {
        direct += -2.0
            * Family::GA
                .log_density(y[i], fm.mu.fitted[i], fm.sigma.fitted[i])
                .unwrap();
    }
    assert_eq!(fm.global_deviance, direct);
    assert!((fm.global_deviance(&data).unwrap() - direct).abs() < 1e-9 * direct);

    let rev: Vec<usize> = (0..data.n()).rev().collect();
    let shuffled = data.take_rows(&rev);
    let gd_rev = fm.global_deviance(&shuffled).unwrap();
    assert!((gd_rev - direct).abs() < 1e-9 * direct.abs());
}

#[test]
fn predictions_reproduce_fitted_values() {
    let data = hedonic(6, 500);
    let fm = fit(&small_smooth_spec(), &data, &FitOptions::default()).unwrap();
    for which in Param::ALL {
        let p = fm.predict(&data, which).unwrap();
        let f = &fm.param(which).fitted;
        for i in 0..p.len() {
            assert!((p[i] - f[i]).abs() <= 1e-10 * f[i].abs().max(1.0));
        }
        let eta = &fm.param(which).eta;
        for i in 0..p.len() {
            assert!((fm.param(which).link.inverse(eta[i]).unwrap() - f[i]).abs() <= 1e-12 * f[i].abs().max(1.0));
        }
    }
    let restored = hedonic_gamlss::engine::FittedModel::from_json(&fm.to_json().unwrap()).unwrap();
    assert_eq!(
        restored.predict(&data, Param::Mu).unwrap(),
        fm.predict(&data, Param::Mu).unwrap()
    );
}

#[test]
fn single_row_prediction_matches_manual_assembly() {
    let data = hedonic(7, 500);
    let spec = small_smooth_spec();
    let fm = fit(&spec, &data, &FitOptions::default()).unwrap();
    let row = data.take_rows(&[17]);
    let value = |v: &VarExpr| row.eval(v).unwrap()[0];
    let b = &fm.mu.beta;
    let mut eta = b[0];
    for (k, v) in spec.mu.parametric.iter().enumerate() {
        eta += b[1 + k] * value(v);
    }
    for (k, s) in spec.mu.splines.iter().enumerate() {
        let x = value(&s.var);
        eta += b[1 + spec.mu.parametric.len() + k] * x;
        eta += fm.mu.smoothers[k].as_ref().unwrap().eval(x);
    }
    let pred = fm.predict(&row, Param::Mu).unwrap()[0];
    assert!((pred - eta.exp()).abs() < 1e-10 * pred);
}

#[test]
fn intercept_only_predictions_are_constant() {
    let data = hedonic(8, 200);
    let spec = ModelSpec::intercept_only(var("UP"), Family::GA);
    let fm = fit(&spec, &data, &tight()).unwrap();
    let mean = common::mean(data.real("UP").unwrap());
    assert!((fm.mu.fitted[0] / mean - 1.0).abs() < 1e-8);
    let p = fm.predict(&data, Param::Mu).unwrap();
    assert!(p.iter().all(|v| *v == fm.mu.beta[0].exp()));
}

#[test]
fn fitting_is_deterministic_and_deviance_monotone() {
    let data = hedonic(9, 800);
    let a = fit(&small_smooth_spec(), &data, &FitOptions::default()).unwrap();
    let b = fit(&small_smooth_spec(), &data, &FitOptions::default()).unwrap();
    assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    assert_eq!(a.mu.fitted, b.mu.fitted);
    for w in a.gd_trace.windows(2) {
        assert!(w[1] <= w[0] + 1e-8 * w[0].abs(), "GD rose: {:?}", a.gd_trace);
    }
}

#[test]
fn warm_start_from_fitted_parameters_converges_immediately() {
    let data = hedonic(10, 800);
    let spec = small_smooth_spec();
    let fm = fit(&spec, &data, &FitOptions::default()).unwrap();
    let again = refit(&fm, &data, &FitOptions::default()).unwrap();
    assert!(
        again.converged && again.iterations <= 2,
        "{} iterations {:?}",
        again.iterations,
        again.gd_trace
    );
    assert!((again.global_deviance - fm.global_deviance).abs() < 1e-3 * data.n() as f64 * 1e-3);

    // parametric models need only the fitted parameters
    let param = fit(&parametric_spec_hedonic(), &data, &FitOptions::default()).unwrap();
    let again = fit_from(&param.spec, &data, &FitOptions::default(), Some(&param.fitted_params())).unwrap();
    assert!(
        again.converged && again.iterations <= 2,
        "{} iterations",
        again.iterations
    );
}

#[test]
fn zero_extra_df_spline_is_the_linear_term() {
    let data = hedonic(11, 600);
    let mut with_zero = small_smooth_spec();
    with_zero.mu.splines[1].df = 0.0;
    let mut linear = small_smooth_spec();
    linear.mu.splines.truncate(1);
    linear.mu.parametric.push(var("LAT"));
    let a = fit(&with_zero, &data, &tight()).unwrap();
    let b = fit(&linear, &data, &tight()).unwrap();
    // column order differs: LAT sits after the remaining spline in `a`
    let coef = |fm: &hedonic_gamlss::engine::FittedModel, name: &str| {
        fm.mu.beta[fm
            .mu
            .coef_names
            .iter()
            .position(|n| n.starts_with(name) || n.contains(&format!("({name},")))
            .unwrap()]
    };
    for name in ["(Intercept)", "SZ", "STR1", "YR07", "LAT"] {
        assert!((coef(&a, name) - coef(&b, name)).abs() < 1e-8, "{name}");
    }
    assert!((a.global_deviance - b.global_deviance).abs() < 1e-6);
    assert_eq!(a.df_total, b.df_total);
}

#[test]
fn duplicated_rows_shrink_standard_errors_by_root_two() {
    let mut r = rng(12);
    let n = 300;
    let x = random_design(&mut r, n, 3);
    let y: Vec<f64> = (0..n)
        .map(|i| draw(Family::GA, (0.5 + 0.4 * x[(i, 1)] - 0.2 * x[(i, 2)]).exp(), 0.5, &mut r))
        .collect();
    let data = dataset(&x, &y);
    let rows: Vec<usize> = (0..n).chain(0..n).collect();
    let doubled = data.take_rows(&rows);
    let spec = parametric_spec(Family::GA, Link::Log, 3);
    let a = fit(&spec, &data, &tight()).unwrap();
    let b = fit(&spec, &doubled, &tight()).unwrap();
    for j in 0..3 {
        assert!((b.mu.se[j] * 2f64.sqrt() / a.mu.se[j] - 1.0).abs() < 1e-6);
    }
}

#[test]
fn penalty_and_penalized_likelihood() {
    let data = hedonic(13, 500);
    let param = fit(&parametric_spec_hedonic(), &data, &FitOptions::default()).unwrap();
    assert_eq!(param.penalized_loglik(&data).unwrap(), -0.5 * param.global_deviance);

    let fm = fit(&small_smooth_spec(), &data, &FitOptions::default()).unwrap();
    let s = fm.mu.smoothers[0].as_ref().unwrap();
    // f'' is linear between knots; integrate its square by the trapezoid rule
    let (t, c) = (&s.knots, &s.second_derivs);
    let mut quad = 0.0;
    for k in 0..t.len() - 1 {
        let m = 64;
        let h = (t[k + 1] - t[k]) / m as f64;
        for i in 0..m {
            let f = |a: f64| c[k] + (c[k + 1] - c[k]) * a;
            let (a0, a1) = (i as f64 / m as f64, (i + 1) as f64 / m as f64);
            quad += 0.5 * h * (f(a0).powi(2) + f(a1).powi(2));
        }
    }
    assert!((s.lambda * quad - s.penalty()).abs() < 1e-8 * s.penalty().max(1.0) + 1e-6 * s.penalty());
    let total: f64 = fm.mu.smoothers.iter().flatten().map(|s| s.penalty()).sum();
    assert!((fm.penalized_loglik(&data).unwrap() - (-0.5 * fm.global_deviance - 0.5 * total)).abs() < 1e-9);
}

fn parametric_spec_hedonic() -> ModelSpec {
    let mut spec = ModelSpec::intercept_only(var("UP"), Family::GA);
    spec.mu = SubModel::new(Link::Log, vec![var("SZ"), VarExpr::Log("AR".into())], vec![]);
    spec
}

#[test]
fn collinear_design_names_columns() {
    let mut r = rng(14);
    let n = 50;
    let x = random_design(&mut r, n, 2);
    let y: Vec<f64> = (0..n).map(|_| draw(Family::GA, 2.0, 0.5, &mut r)).collect();
    let x1: Vec<f64> = x.column(1).iter().copied().collect();
    let x2: Vec<f64> = x1.iter().map(|v| 2.0 * v).collect();
    let data = Dataset::from_reals(vec![("y", y), ("x1", x1), ("x2", x2)]).unwrap();
    let spec = parametric_spec(Family::GA, Link::Log, 3);
    match fit(&spec, &data, &FitOptions::default()) {
        Err(Error::Rank { columns }) => assert!(columns.iter().any(|c| c == "x2" || c == "x1")),
        other => panic!("expected a rank error, got {other:?}"),
    }
}

#[test]
fn global_deviance_of_one_point() {
    // GA(1, 1) at y = 1 has log density -1
    let params = hedonic_gamlss::families::ParamVector {
        mu: vec![1.0],
        sigma: vec![1.0],
    };
    assert!((global_deviance(Family::GA, &[1.0], &params).unwrap() - 2.0).abs() < 1e-12);
}
