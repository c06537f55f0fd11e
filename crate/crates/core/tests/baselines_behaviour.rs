//! Classical regression baselines: HC3 against a hand-computed sandwich,
//! Breusch-Pagan size, Box-Cox recovery and the gamma GLM.

mod common;

use common::{draw, gamma_log_scoring, normal_equations, random_design, rng};
use hedonic_gamlss::baselines::{
    box_cox_profile, box_cox_transform, breusch_pagan, default_lambda_grid, glm_fit_gamma_log, hc3_se, jarque_bera,
    ols_fit,
};
use hedonic_gamlss::families::Family;
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Normal};

fn names(p: usize) -> Vec<String> {
    (0..p).map(|j| format!("b{j}")).collect()
}

fn with_intercept(x: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(x.len(), 2, |i, j| if j == 0 { 1.0 } else { x[i] })
}

#[test]
fn hc3_five_point_fixture() {
    // beta = (3, 0.8), e = (-0.4, 0.8, -1, 1.2, -0.6), h = (0.6, 0.3, 0.2, 0.3, 0.6);
    // X'X = diag(5, 10), so each entry is a weighted sum of e^2 / (1 - h)^2
    let x = with_intercept(&[-2.0, -1.0, 0.0, 1.0, 2.0]);
    let y = [1.0, 3.0, 2.0, 5.0, 4.0];
    let fit = ols_fit(&x, &y, &names(2)).unwrap();
    assert!((fit.beta[0] - 3.0).abs() < 1e-14 && (fit.beta[1] - 0.8).abs() < 1e-14);
    let h = [0.6, 0.3, 0.2, 0.3, 0.6];
    for i in 0..5 {
        assert!((fit.hat_diagonals[i] - h[i]).abs() < 1e-14);
    }
    let var_b0: f64 = (1.0 + 64.0 / 49.0 + 25.0 / 16.0 + 144.0 / 49.0 + 9.0 / 4.0) / 25.0;
    let var_b1: f64 = (4.0 + 64.0 / 49.0 + 144.0 / 49.0 + 4.0 * 9.0 / 4.0) / 100.0;
    let se = fit.se_hc3().unwrap();
    assert!((se[0] - var_b0.sqrt()).abs() < 1e-12);
    assert!((se[1] - var_b1.sqrt()).abs() < 1e-12);
    assert_eq!(hc3_se(&fit, &x).unwrap(), se);
    let v = fit.vcov_hc3.as_ref().unwrap();
    let cov: f64 = (-2.0 - 64.0 / 49.0 + 144.0 / 49.0 + 2.0 * 9.0 / 4.0) / 50.0;
    assert!((v[0][1] - cov).abs() < 1e-12 && v[0][1] == v[1][0]);
}

#[test]
fn ols_matches_normal_equations() {
    let mut r = rng(40);
    let x = random_design(&mut r, 200, 4);
    let y: Vec<f64> = (0..200)
        .map(|i| x[(i, 1)] - 2.0 * x[(i, 3)] + r.random_range(-1.0..1.0))
        .collect();
    let (beta, rss, xtx_inv) = normal_equations(&x, &y);
    let fit = ols_fit(&x, &y, &names(4)).unwrap();
    assert!((fit.rss - rss).abs() < 1e-9 * rss);
    let s2 = rss / 196.0;
    for j in 0..4 {
        assert!((fit.beta[j] - beta[j]).abs() < 1e-10);
        assert!((fit.se_classical()[j] - (s2 * xtx_inv[(j, j)]).sqrt()).abs() < 1e-10);
    }
    let loglik = -100.0 * ((2.0 * std::f64::consts::PI * rss / 200.0).ln() + 1.0);
    assert!((fit.loglik - loglik).abs() < 1e-9);
    assert!((fit.aic - (-2.0 * loglik + 10.0)).abs() < 1e-9);
}

#[test]
fn hc3_agrees_with_classical_under_homoskedasticity() {
    let mut r = rng(41);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let n = 5000;
    let x = random_design(&mut r, n, 3);
    let y: Vec<f64> = (0..n).map(|i| 1.0 + x[(i, 1)] + normal.sample(&mut r)).collect();
    let fit = ols_fit(&x, &y, &names(3)).unwrap();
    for (a, b) in fit.se_hc3().unwrap().iter().zip(fit.se_classical()) {
        assert!((a / b - 1.0).abs() < 0.02, "HC3/classical = {}", a / b);
    }

    // balanced one-way layout with equal variances
    let groups = 4;
    let per = 500;
    let x = DMatrix::from_fn(
        groups * per,
        groups,
        |i, j| if j == 0 || i / per == j { 1.0 } else { 0.0 },
    );
    let y: Vec<f64> = (0..groups * per)
        .map(|i| (i / per) as f64 + normal.sample(&mut r))
        .collect();
    let fit = ols_fit(&x, &y, &names(groups)).unwrap();
    for (a, b) in fit.se_hc3().unwrap().iter().zip(fit.se_classical()) {
        assert!((a / b - 1.0).abs() < 0.10);
    }
}

#[test]
fn breusch_pagan_has_nominal_size_and_power() {
    let mut r = rng(42);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let reps = 500;
    let n = 200;
    let mut rejections = 0;
    for _ in 0..reps {
        let x = random_design(&mut r, n, 3);
        let y: Vec<f64> = (0..n)
            .map(|i| 2.0 + x[(i, 1)] - x[(i, 2)] + normal.sample(&mut r))
            .collect();
        let fit = ols_fit(&x, &y, &names(3)).unwrap();
        if breusch_pagan(&x, &fit.residuals).unwrap().p < 0.05 {
            rejections += 1;
        }
    }
    let size = rejections as f64 / reps as f64;
    assert!((0.03..=0.07).contains(&size), "size {size}");

    let x = random_design(&mut r, 500, 2);
    let y: Vec<f64> = (0..500)
        .map(|i| x[(i, 1)] + (0.5 * x[(i, 1)]).exp() * normal.sample(&mut r))
        .collect();
    let fit = ols_fit(&x, &y, &names(2)).unwrap();
    assert!(breusch_pagan(&x, &fit.residuals).unwrap().p < 1e-6);
}

#[test]
fn jarque_bera_separates_normal_from_skewed() {
    let mut r = rng(43);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let e: Vec<f64> = (0..2000).map(|_| normal.sample(&mut r)).collect();
    assert!(jarque_bera(&e).unwrap().p > 0.001);
    let skewed: Vec<f64> = (0..2000).map(|_| normal.sample(&mut r).exp()).collect();
    assert!(jarque_bera(&skewed).unwrap().p < 1e-10);
}

#[test]
fn box_cox_recovers_lambda() {
    let mut r = rng(44);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let n = 2000;
    for lambda in [0.0, 0.5, 1.0] {
        // y^lambda (or log y) is linear in x with normal errors
        let xs: Vec<f64> = (0..n).map(|_| r.random_range(0.0..4.0)).collect();
        let x = with_intercept(&xs);
        let y: Vec<f64> = xs
            .iter()
            .map(|&v| {
                if lambda == 0.0 {
                    (0.5 + 0.8 * v + 0.2 * normal.sample(&mut r)).exp()
                } else {
                    (1.0 + 2.0 * v + 0.2 * normal.sample(&mut r)).powf(1.0 / lambda)
                }
            })
            .collect();
        let prof = box_cox_profile(&y, &x, &default_lambda_grid()).unwrap();
        assert!(
            (prof.lambda_hat - lambda).abs() < 0.05,
            "lambda {lambda}: {}",
            prof.lambda_hat
        );
        assert!(prof.profile.iter().all(|&l| l <= prof.loglik_hat + 1e-9));
    }
    assert_eq!(box_cox_transform(std::f64::consts::E, 0.0), 1.0);
    assert!((box_cox_transform(4.0, 0.5) - 2.0).abs() < 1e-15);
}

#[test]
fn box_cox_rejects_nonpositive_response() {
    let x = with_intercept(&[1.0, 2.0, 3.0, 4.0]);
    assert!(box_cox_profile(&[1.0, 0.0, 2.0, 3.0], &x, &default_lambda_grid()).is_err());
}

#[test]
fn gamma_glm_matches_scoring_oracle() {
    let mut r = rng(45);
    for n in [100, 1000] {
        let x = random_design(&mut r, n, 3);
        let y: Vec<f64> = (0..n)
            .map(|i| {
                draw(
                    Family::GA,
                    (2.0 + 0.5 * x[(i, 1)] - 0.25 * x[(i, 2)]).exp(),
                    0.4,
                    &mut r,
                )
            })
            .collect();
        let glm = glm_fit_gamma_log(&x, &y, &names(3)).unwrap();
        let oracle = gamma_log_scoring(&x, &y);
        for j in 0..3 {
            assert!((glm.beta[j] - oracle[j]).abs() < 1e-8);
        }
        let pearson = (0..n)
            .map(|i| ((y[i] - glm.mu_hat[i]) / glm.mu_hat[i]).powi(2))
            .sum::<f64>()
            / (n - 3) as f64;
        assert!((glm.dispersion - pearson).abs() < 1e-12 * pearson);
        let xtx_inv = (x.transpose() * &x).try_inverse().unwrap();
        for j in 0..3 {
            assert!((glm.se[j] - (pearson * xtx_inv[(j, j)]).sqrt()).abs() < 1e-10);
            assert!((glm.z[j] - glm.beta[j] / glm.se[j]).abs() < 1e-10);
        }
    }
}

#[test]
fn jarque_bera_reference_cases() {
    use statrs::distribution::{ContinuousCDF, Normal as StatrsNormal};
    let std = StatrsNormal::new(0.0, 1.0).unwrap();
    let q: Vec<f64> = (1..=1000).map(|i| std.inverse_cdf((i as f64 - 0.5) / 1000.0)).collect();
    assert!(jarque_bera(&q).unwrap().p > 0.5);
    let mut r = rng(46);
    let e: Vec<f64> = (0..1000).map(|_| -r.random::<f64>().ln()).collect();
    assert!(jarque_bera(&e).unwrap().p < 0.01);
}

#[test]
fn breusch_pagan_detects_variance_proportional_to_a_covariate() {
    let mut r = rng(47);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let n = 2000;
    let xs: Vec<f64> = (0..n).map(|_| r.random_range(1.0..10.0)).collect();
    let x = with_intercept(&xs);
    let y: Vec<f64> = xs
        .iter()
        .map(|&v| 1.0 + 0.5 * v + v.sqrt() * normal.sample(&mut r))
        .collect();
    let fit = ols_fit(&x, &y, &names(2)).unwrap();
    assert!(breusch_pagan(&x, &fit.residuals).unwrap().p < 0.01);
}

#[test]
fn gamma_glm_recovers_coefficients() {
    let truth = [2.0, 0.5, -0.25];
    let n = 2000;
    let reps = 40;
    let mut estimates = vec![Vec::new(); 3];
    let mut r = rng(48);
    let x = random_design(&mut r, n, 3);
    for _ in 0..reps {
        let y: Vec<f64> = (0..n)
            .map(|i| {
                draw(
                    Family::GA,
                    (truth[0] + truth[1] * x[(i, 1)] + truth[2] * x[(i, 2)]).exp(),
                    0.4,
                    &mut r,
                )
            })
            .collect();
        let glm = glm_fit_gamma_log(&x, &y, &names(3)).unwrap();
        for j in 0..3 {
            estimates[j].push(glm.beta[j]);
        }
    }
    for j in 0..3 {
        let m = common::mean(&estimates[j]);
        let mc_se = common::sd(&estimates[j]) / (reps as f64).sqrt();
        assert!(
            (m - truth[j]).abs() < 3.0 * mc_se.max(1e-12),
            "coef {j}: {m} vs {}",
            truth[j]
        );
    }
}
