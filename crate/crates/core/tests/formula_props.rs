//! Formula language: round trips, error positions and model assembly.

use hedonic_gamlss::data::{derive_variables, VarExpr};
use hedonic_gamlss::families::{Family, Link};
use hedonic_gamlss::formula::{build_spec, parse_formula, FormulaAst, Term};
use hedonic_gamlss::simulate::{simulate_hedonic, Truth, DEFAULT_FORMULA};
use hedonic_gamlss::Error;
use proptest::prelude::*;

const PARAMETRIC: &str = "STR1 + STR2 + SI + PA + TO + NIO + NIT + YR06 + YR07 + SZ";

fn var_expr() -> impl Strategy<Value = VarExpr> {
    let name = prop::sample::select(vec!["UP", "AR", "LAT", "LON", "ST", "UC", "SZ", "x_1", "FR.v"]);
    (name, any::<bool>()).prop_map(|(n, log)| {
        if log {
            VarExpr::Log(n.into())
        } else {
            VarExpr::Var(n.into())
        }
    })
}

fn term() -> impl Strategy<Value = Term> {
    prop_oneof![
        var_expr().prop_map(Term::Var),
        (var_expr(), 1u32..40).prop_map(|(arg, half)| Term::Spline {
            arg,
            df: half as f64 / 2.0
        }),
    ]
}

fn terms() -> impl Strategy<Value = Vec<Term>> {
    prop::collection::vec(term(), 0..6).prop_map(|mut v| {
        let mut seen = std::collections::HashSet::new();
        // cs(x) already carries the linear term in x
        v.retain(|t| {
            seen.insert(match t {
                Term::Var(e) | Term::Spline { arg: e, .. } => e.to_string(),
            })
        });
        v
    })
}

fn ast() -> impl Strategy<Value = FormulaAst> {
    (var_expr(), terms(), prop::option::of(terms())).prop_map(|(response, mu, sigma)| FormulaAst {
        response,
        mu,
        sigma,
    })
}

proptest! {
    #[test]
    fn print_then_parse_is_identity(a in ast()) {
        let text = a.to_string();
        let back = parse_formula(&text).unwrap();
        prop_assert_eq!(&back, &a);
        prop_assert_eq!(back.to_string(), text);
    }

    #[test]
    fn whitespace_is_ignored(a in ast(), pad in prop::collection::vec(0usize..3, 64)) {
        let text = a.to_string();
        let mut spaced = String::new();
        let mut k = 0;
        for ch in text.chars() {
            if ch == ' ' {
                spaced.push_str(&" ".repeat(pad[k % pad.len()]));
                k += 1;
            } else {
                spaced.push(ch);
            }
        }
        prop_assert_eq!(parse_formula(&spaced).unwrap(), a);
    }
}

#[test]
fn simple_formula() {
    let a = parse_formula("UP ~ STR1").unwrap();
    assert_eq!(a.mu, vec![Term::Var(VarExpr::Var("STR1".into()))]);
    assert!(a.sigma.is_none());
    let a = parse_formula("UP ~ cs(LAT, df=10) + cs(log(AR), df=10) + SZ | sigma: ST + cs(log(AR), df=10)").unwrap();
    assert_eq!(a.mu.len(), 3);
    assert_eq!(
        a.sigma.as_ref().unwrap()[1],
        Term::Spline {
            arg: VarExpr::Log("AR".into()),
            df: 10.0
        }
    );
    assert_eq!(parse_formula("UP ~ cs(ST)").unwrap().mu[0].to_string(), "cs(ST, df=3)");
}

fn parse_error(text: &str) -> (String, usize, String) {
    match parse_formula(text) {
        Err(Error::Parse {
            message, column, caret, ..
        }) => (message, column, caret),
        other => panic!("{text}: {other:?}"),
    }
}

#[test]
fn errors_point_at_the_offending_column() {
    let (m, c, caret) = parse_error("UP ~ spline(LAT)");
    assert_eq!(m, "unknown function 'spline'");
    assert_eq!(c, 6);
    assert_eq!(caret, "     ^");
    let (m, _, _) = parse_error("UP ~ cs(LAT, df=-2)");
    assert!(m.contains("df"), "{m}");
    let (m, _, _) = parse_error("UP ~ cs(LAT, df=0)");
    assert!(m.contains("df"), "{m}");
    let (m, c, _) = parse_error("UP ~ SZ + LAT + SZ");
    assert!(m.contains("duplicate"), "{m}");
    assert_eq!(c, 17);
    parse_error("UP ~ SZ | mu: ST");
    parse_error("UP SZ");
    parse_error("UP ~ SZ +");
}

fn lots() -> hedonic_gamlss::data::Dataset {
    derive_variables(&simulate_hedonic(2, 400, &Truth::default()).unwrap()).unwrap()
}

#[test]
fn published_model_structures_have_the_published_df() {
    let data = lots();
    let splines3 = "cs(LAT) + cs(LON) + cs(log(AR)) + cs(ST) + cs(UC) + cs(log(FRVN))";
    let base = format!("UP ~ {PARAMETRIC} + {splines3}");
    let spec = build_spec(&parse_formula(&base).unwrap(), Family::LOGNO, None, None, &data).unwrap();
    assert_eq!(spec.df_total(), 36.0);
    let spec = build_spec(&parse_formula(&base).unwrap(), Family::GA, None, None, &data).unwrap();
    assert_eq!(spec.df_total(), 36.0);

    let splines35 =
        "cs(LAT, df=10) + cs(LON, df=10) + cs(log(AR), df=10) + cs(ST, df=8) + cs(UC, df=3) + cs(log(FRVN), df=10)";
    let rich = format!("UP ~ {PARAMETRIC} + {splines35}");
    let spec = build_spec(&parse_formula(&rich).unwrap(), Family::GA, Some(Link::Log), None, &data).unwrap();
    assert_eq!(spec.df_total(), 69.0);

    let spec = build_spec(
        &parse_formula(DEFAULT_FORMULA).unwrap(),
        Family::GA,
        Some(Link::Log),
        Some(Link::Log),
        &data,
    )
    .unwrap();
    assert_eq!(spec.df_total(), 81.0);
    assert_eq!(spec.df_ledger().iter().map(|e| e.df).sum::<f64>(), 81.0);
}

#[test]
fn assembly_errors_and_warnings() {
    let data = lots();
    let build =
        |text: &str, link: Option<Link>| build_spec(&parse_formula(text).unwrap(), Family::GA, link, None, &data);
    match build("UP ~ cs(STR1, df=3)", None) {
        Err(e @ Error::NonContinuousSpline(_)) => assert!(e.to_string().contains("spline on non-continuous variable")),
        other => panic!("{other:?}"),
    }
    match build("UP ~ NOPE", None) {
        Err(Error::Schema(m)) => assert!(m.contains("unknown variable 'NOPE'")),
        other => panic!("{other:?}"),
    }
    assert!(matches!(build("UP ~ STR", None), Err(Error::Schema(_))));
    let spec = build("UP ~ SZ + log(AR)", Some(Link::Identity)).unwrap();
    assert!(!spec.warnings.is_empty());
    assert!(build("UP ~ SZ", None).unwrap().warnings.is_empty());
}
