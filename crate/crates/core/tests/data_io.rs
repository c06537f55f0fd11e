//! Loading, derived variables, descriptive statistics and the generator.

mod common;

use hedonic_gamlss::baselines::glm_fit_gamma_log;
use hedonic_gamlss::data::{derive_variables, describe, read_csv, Column, Dataset, SchemaSpec, VarExpr};
use hedonic_gamlss::simulate::{simulate_hedonic, Truth};
use hedonic_gamlss::Error;
use nalgebra::DMatrix;

const HEADER: &str = "UP,AR,FR,LAT,LON,UC,ST,TO,PA,SI,VN,SZ,STR,NI,YR";

fn parse(text: &str) -> hedonic_gamlss::Result<Dataset> {
    read_csv(text.as_bytes(), &SchemaSpec::hedonic())
}

fn three_rows() -> String {
    format!(
        "{HEADER}\n\
         120.5,300,12,705000,8780000,4.5,3,1,0,0,0,0,local,register,2005\n\
         80.25,450,10,706000,8781000,3.0,7,0,1,0,1,1,collector,offer,2006\n\
         99,250,15,707000,8782000,6.0,18,0,0,1,1,0,minor arterial,transaction,2007\n"
    )
}

#[test]
fn loads_well_formed_file() {
    let ds = parse(&three_rows()).unwrap();
    assert_eq!(ds.n(), 3);
    assert_eq!(ds.real("UP").unwrap(), &[120.5, 80.25, 99.0]);
    match ds.column("STR").unwrap() {
        Column::Categorical { levels, .. } => assert_eq!(levels, &["local", "collector", "minor arterial"]),
        other => panic!("STR loaded as {other:?}"),
    }
}

#[test]
fn load_errors_are_specific() {
    // drop the first (UP) field of every line
    let no_up: String = three_rows()
        .lines()
        .map(|l| format!("{}\n", l.split_once(',').unwrap().1))
        .collect();
    match parse(&no_up) {
        Err(Error::Schema(m)) => assert!(m.contains("UP"), "{m}"),
        other => panic!("{other:?}"),
    }
    let bad = three_rows().replace("450", "4x0");
    match parse(&bad) {
        Err(Error::Schema(m)) => assert!(m.contains("row 2") && m.contains("AR"), "{m}"),
        other => panic!("{other:?}"),
    }
    let out_of_range = three_rows().replace(",18,", ",19,");
    match parse(&out_of_range) {
        Err(Error::Schema(m)) => assert!(m.contains("row 3") && m.contains("ST"), "{m}"),
        other => panic!("{other:?}"),
    }
    assert!(parse("").is_err());
    assert!(parse(&format!("{HEADER}\n")).is_err());
}

#[test]
fn rows_with_missing_cells_are_dropped_and_counted() {
    let text = three_rows().replace("80.25", "NA");
    let ds = parse(&text).unwrap();
    assert_eq!(ds.n(), 2);
    assert!(format!("{:?}", ds.provenance()).contains("dropped_rows: 1"));
}

#[test]
fn csv_round_trip_is_bit_exact() {
    let ds = simulate_hedonic(3, 500, &Truth::default()).unwrap();
    let mut buf = Vec::new();
    ds.write_csv(&mut buf).unwrap();
    let back = read_csv(buf.as_slice(), &SchemaSpec::hedonic()).unwrap();
    assert_eq!(back.names(), ds.names());
    for name in ds.names() {
        let (a, b) = (ds.column(name).unwrap(), back.column(name).unwrap());
        for row in 0..ds.n() {
            assert_eq!(a.label(row), b.label(row), "{name} row {row}");
        }
        if let (Some(x), Some(y)) = (a.as_real(), b.as_real()) {
            assert!(x.iter().zip(y).all(|(p, q)| p.to_bits() == q.to_bits()));
        }
    }
}

#[test]
fn derived_variables_follow_the_coding() {
    let ds = derive_variables(&parse(&three_rows()).unwrap()).unwrap();
    let col = |n: &str| ds.real(n).unwrap().to_vec();
    assert_eq!(col("YR06"), vec![0.0, 1.0, 0.0]);
    assert_eq!(col("YR07"), vec![0.0, 0.0, 1.0]);
    assert_eq!(col("STR1"), vec![0.0, 0.0, 1.0]);
    assert_eq!(col("STR2"), vec![0.0, 1.0, 0.0]);
    assert_eq!(col("NIO"), vec![0.0, 1.0, 0.0]);
    assert_eq!(col("NIT"), vec![0.0, 0.0, 1.0]);
    // VN = 0 on the first row, FR = 10 and 15 on the others
    assert_eq!(col("FRVN"), vec![0.0, 10.0, 15.0]);
    assert_eq!(col("log(FRVN)")[0], 0.0);
    assert!((col("log(FRVN)")[1] - std::f64::consts::LN_10).abs() < 1e-12);
    assert_eq!(col("log(AR)")[0], 300f64.ln());
    assert_eq!(ds.eval(&VarExpr::Log("UP".into())).unwrap()[1], 80.25f64.ln());

    let zero_fr = three_rows().replace(",12,", ",0,");
    assert!(matches!(
        parse(&zero_fr).and_then(|d| derive_variables(&d)),
        Err(Error::Domain { .. }) | Err(Error::Schema(_))
    ));
}

#[test]
fn derivation_is_idempotent_and_dummies_partition() {
    let raw = simulate_hedonic(4, 2000, &Truth::default()).unwrap();
    let once = derive_variables(&raw).unwrap();
    let twice = derive_variables(&once).unwrap();
    assert_eq!(once.names(), twice.names());
    for name in once.names() {
        for row in 0..once.n() {
            assert_eq!(
                once.column(name).unwrap().label(row),
                twice.column(name).unwrap().label(row)
            );
        }
    }
    for (family, dummies, baseline) in [
        ("YR", ["YR06", "YR07"], "2005"),
        ("STR", ["STR1", "STR2"], "local"),
        ("NI", ["NIO", "NIT"], "register"),
    ] {
        let a = once.real(dummies[0]).unwrap();
        let b = once.real(dummies[1]).unwrap();
        let col = once.column(family).unwrap();
        for row in 0..once.n() {
            assert!(a[row] + b[row] <= 1.0);
            if col.label(row) == baseline {
                assert_eq!(a[row] + b[row], 0.0);
            }
        }
    }
}

#[test]
fn describe_matches_two_pass_statistics() {
    let ds = Dataset::from_reals(vec![("c", vec![7.0; 5]), ("v", vec![1.0, 2.0, 3.0, 4.0, 2.5])]).unwrap();
    let d = describe(&ds, &[VarExpr::Var("c".into())]).unwrap();
    assert_eq!((d[0].mean, d[0].median, d[0].sd, d[0].range), (7.0, 7.0, 0.0, 0.0));
    let four = Dataset::from_reals(vec![("v", vec![1.0, 2.0, 3.0, 4.0])]).unwrap();
    let d = describe(&four, &[VarExpr::Var("v".into())]).unwrap();
    assert_eq!((d[0].mean, d[0].median, d[0].range), (2.5, 2.5, 3.0));
    assert!(describe(&four, &[]).is_err());

    let sim = derive_variables(&simulate_hedonic(5, 3000, &Truth::default()).unwrap()).unwrap();
    let vars = ["UP", "AR", "LAT", "log(AR)"];
    let exprs: Vec<VarExpr> = vars.iter().map(|v| VarExpr::Var((*v).into())).collect();
    let d = describe(&sim, &exprs).unwrap();
    for (k, v) in vars.iter().enumerate() {
        let x = sim.real(v).unwrap();
        let m = common::mean(x);
        let sd = common::sd(x);
        assert!((d[k].mean - m).abs() < 1e-10 * m.abs().max(1.0));
        assert!((d[k].sd - sd).abs() < 1e-10 * sd.max(1.0));
        let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!((d[k].min, d[k].max), (lo, hi));
    }
}

#[test]
fn generator_is_deterministic_and_valid() {
    let a = simulate_hedonic(11, 300, &Truth::default()).unwrap();
    let b = simulate_hedonic(11, 300, &Truth::default()).unwrap();
    let c = simulate_hedonic(12, 300, &Truth::default()).unwrap();
    let (mut wa, mut wb, mut wc) = (Vec::new(), Vec::new(), Vec::new());
    a.write_csv(&mut wa).unwrap();
    b.write_csv(&mut wb).unwrap();
    c.write_csv(&mut wc).unwrap();
    assert_eq!(wa, wb);
    assert_ne!(wa, wc);
    for seed in 0..20 {
        let ds = simulate_hedonic(seed, 60 + seed as usize * 7, &Truth::default()).unwrap();
        SchemaSpec::hedonic().validate(&ds).unwrap();
    }
    assert!(simulate_hedonic(1, 49, &Truth::default()).is_err());
    let truth = Truth::default();
    assert_eq!(Truth::from_json(&truth.to_json().unwrap()).unwrap(), truth);
}

#[test]
fn generated_prices_have_the_implied_mean() {
    let n = 100_000;
    let truth = Truth::default();
    let ds = derive_variables(&simulate_hedonic(21, n, &truth).unwrap()).unwrap();
    let up = ds.real("UP").unwrap();
    assert!(up.iter().all(|&v| v > 0.0));
    let (mu, sigma) = truth.params(&ds).unwrap();
    let implied = common::mean(&mu);
    // Var(mean UP | covariates) = sum sigma^2 mu^2 / n^2
    let se = mu.iter().zip(&sigma).map(|(m, s)| s * s * m * m).sum::<f64>().sqrt() / n as f64;
    assert!(
        (common::mean(up) - implied).abs() < 3.0 * se,
        "{} vs {implied} (se {se})",
        common::mean(up)
    );
}

#[test]
fn constant_dispersion_when_sigma_has_no_covariates() {
    let n = 100_000;
    let mut truth = Truth::default();
    truth.sigma.linear.clear();
    truth.sigma.smooth.clear();
    let ds = derive_variables(&simulate_hedonic(22, n, &truth).unwrap()).unwrap();
    // gamma GLM on the true log-mean predictor and log area
    let eta = truth.mu.eta(&ds).unwrap();
    let log_ar = ds.real("log(AR)").unwrap();
    let x = DMatrix::from_fn(n, 3, |i, j| match j {
        0 => 1.0,
        1 => eta[i],
        _ => log_ar[i],
    });
    let y = ds.real("UP").unwrap();
    let names = vec!["(Intercept)".to_string(), "eta".into(), "log(AR)".into()];
    let glm = glm_fit_gamma_log(&x, y, &names).unwrap();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| log_ar[a].total_cmp(&log_ar[b]));
    let quintile: Vec<f64> = order
        .chunks(n / 5)
        .map(|rows| {
            rows.iter()
                .map(|&i| ((y[i] - glm.mu_hat[i]) / glm.mu_hat[i]).powi(2))
                .sum::<f64>()
                / rows.len() as f64
        })
        .collect();
    let expected = (2.0 * truth.sigma.intercept).exp();
    for q in &quintile {
        assert!((q / glm.dispersion - 1.0).abs() < 0.10, "{quintile:?}");
    }
    assert!((glm.dispersion / expected - 1.0).abs() < 0.05);
}
