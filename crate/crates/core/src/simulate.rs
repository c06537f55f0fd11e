//! Seeded synthetic land-lot data.
//!
//! Covariates are drawn with marginals shaped like the urban-lot schema:
//! UTM-like coordinate boxes, log-normal areas, integer sectors and
//! independent categorical attributes. The response is gamma with
//! `log mu = intercept + linear terms + smooth effects` and
//! `log sigma = intercept + linear terms + smooth effects`, where a smooth
//! effect is `amplitude * sin(frequency * pi * (x - center) / scale)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{derive_variables, Column, Dataset, Provenance, VarExpr};
use crate::error::{Error, Result};

pub const TRUTH_FORMAT_VERSION: u32 = 1;

pub const LAT_RANGE: (f64, f64) = (701_500.0, 714_600.0);
pub const LON_RANGE: (f64, f64) = (8_769_000.0, 8_798_000.0);
pub const AR_RANGE: (f64, f64) = (48.0, 91_780.0);
pub const FR_RANGE: (f64, f64) = (2.6, 516.0);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearTerm {
    pub variable: String,
    pub coef: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothEffect {
    pub variable: String,
    pub amplitude: f64,
    pub frequency: f64,
    pub center: f64,
    pub scale: f64,
}

impl SmoothEffect {
    pub fn eval(&self, x: f64) -> f64 {
        self.amplitude * (self.frequency * std::f64::consts::PI * (x - self.center) / self.scale).sin()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorTruth {
    pub intercept: f64,
    #[serde(default)]
    pub linear: Vec<LinearTerm>,
    #[serde(default)]
    pub smooth: Vec<SmoothEffect>,
}

impl PredictorTruth {
    /// Linear predictor on a dataset that already carries derived variables.
    pub fn eta(&self, data: &Dataset) -> Result<Vec<f64>> {
        let mut eta = vec![self.intercept; data.n()];
        for t in &self.linear {
            let x = data.eval(&t.variable.parse::<VarExpr>()?)?;
            for (e, v) in eta.iter_mut().zip(x) {
                *e += t.coef * v;
            }
        }
        for s in &self.smooth {
            let x = data.eval(&s.variable.parse::<VarExpr>()?)?;
            for (e, v) in eta.iter_mut().zip(x) {
                *e += s.eval(v);
            }
        }
        Ok(eta)
    }

    fn validate(&self, which: &str) -> Result<()> {
        let known = derived_numeric_names();
        let check = |name: &str| -> Result<()> {
            if known.contains(&name) {
                Ok(())
            } else {
                Err(Error::Schema(format!(
                    "{which} truth refers to unknown variable '{name}'"
                )))
            }
        };
        let finite = |v: f64, what: &str| -> Result<()> {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::domain(what, v, "must be finite"))
            }
        };
        finite(self.intercept, "intercept")?;
        for t in &self.linear {
            check(&t.variable)?;
            finite(t.coef, &t.variable)?;
        }
        for s in &self.smooth {
            check(&s.variable)?;
            for v in [s.amplitude, s.frequency, s.center, s.scale] {
                finite(v, &s.variable)?;
            }
            if s.scale == 0.0 {
                return Err(Error::domain("scale", 0.0, "smooth effect scale must be nonzero"));
            }
        }
        Ok(())
    }
}

fn derived_numeric_names() -> [&'static str; 21] {
    [
        "AR",
        "FR",
        "LAT",
        "LON",
        "UC",
        "ST",
        "TO",
        "PA",
        "SI",
        "VN",
        "SZ",
        "YR06",
        "YR07",
        "STR1",
        "STR2",
        "NIO",
        "NIT",
        "log(AR)",
        "log(ST)",
        "FRVN",
        "log(FRVN)",
    ]
}

/// Gamma model formula with the structure of [`Truth::default`]: every
/// parametric and smooth effect of the generator has a matching term.
pub const DEFAULT_FORMULA: &str = "UP ~ STR1 + STR2 + SI + PA + TO + NIO + NIT + YR06 + YR07 + SZ \
+ cs(LAT, df=10) + cs(LON, df=10) + cs(log(AR), df=10) + cs(ST, df=8) + cs(UC, df=3) + cs(log(FRVN), df=10) \
| sigma: ST + cs(log(AR), df=10)";

/// Generator parameters for [`simulate_hedonic`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub format_version: u32,
    pub mu: PredictorTruth,
    pub sigma: PredictorTruth,
}

impl Default for Truth {
    /// Structure of the richest hedonic model: dummy effects on the log mean,
    /// smooth location, area, sector, construction-index and frontage
    /// effects, and a dispersion depending on sector and log area.
    fn default() -> Self {
        let lin = |variable: &str, coef: f64| LinearTerm {
            variable: variable.to_string(),
            coef,
        };
        let smooth = |variable: &str, amplitude: f64, frequency: f64, center: f64, scale: f64| SmoothEffect {
            variable: variable.to_string(),
            amplitude,
            frequency,
            center,
            scale,
        };
        let lat_c = 0.5 * (LAT_RANGE.0 + LAT_RANGE.1);
        let lat_s = 0.5 * (LAT_RANGE.1 - LAT_RANGE.0);
        let lon_c = 0.5 * (LON_RANGE.0 + LON_RANGE.1);
        let lon_s = 0.5 * (LON_RANGE.1 - LON_RANGE.0);
        Truth {
            format_version: TRUTH_FORMAT_VERSION,
            mu: PredictorTruth {
                intercept: 5.2,
                linear: vec![
                    lin("STR1", 0.2039),
                    lin("STR2", 0.0729),
                    lin("SI", 0.0714),
                    lin("PA", 0.1653),
                    lin("TO", 0.1778),
                    lin("NIO", 0.3722),
                    lin("NIT", 0.2790),
                    lin("YR06", 0.1255),
                    lin("YR07", 0.4195),
                    lin("SZ", 0.4824),
                    lin("log(AR)", -0.35),
                    lin("UC", 0.12),
                    lin("log(FRVN)", 0.08),
                ],
                smooth: vec![
                    smooth("LAT", 0.35, 1.0, lat_c, lat_s),
                    smooth("LON", 0.30, 0.75, lon_c, lon_s),
                    smooth("log(AR)", 0.12, 0.5, 6.0, 2.0),
                    smooth("ST", 0.10, 1.0, 9.5, 8.5),
                ],
            },
            sigma: PredictorTruth {
                intercept: -1.6838,
                linear: vec![lin("ST", -0.0391), lin("log(AR)", 0.137)],
                smooth: vec![smooth("log(AR)", 0.08, 0.5, 6.0, 2.0)],
            },
        }
    }
}

impl Truth {
    pub fn validate(&self) -> Result<()> {
        if self.format_version != TRUTH_FORMAT_VERSION {
            return Err(Error::Schema(format!(
                "unsupported truth format_version {} (expected {TRUTH_FORMAT_VERSION})",
                self.format_version
            )));
        }
        self.mu.validate("mu")?;
        self.sigma.validate("sigma")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let t: Truth = serde_json::from_str(text)?;
        t.validate()?;
        Ok(t)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// True `(mu, sigma)` for every row of a dataset with derived variables.
    pub fn params(&self, data: &Dataset) -> Result<(Vec<f64>, Vec<f64>)> {
        let mu = self.mu.eta(data)?.into_iter().map(f64::exp).collect();
        let sigma = self.sigma.eta(data)?.into_iter().map(f64::exp).collect();
        Ok((mu, sigma))
    }
}

fn categorical(levels: &[&str], codes: Vec<u32>) -> Column {
    Column::Categorical {
        levels: levels.iter().map(|s| s.to_string()).collect(),
        codes,
    }
}

fn draw_level<R: Rng>(rng: &mut R, probs: &[f64]) -> u32 {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return k as u32;
        }
    }
    (probs.len() - 1) as u32
}

/// Covariates only (no `UP`), deterministic in `seed`.
pub fn simulate_covariates(seed: u64, n: usize) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let log_area = Normal::new(6.0, 0.7).expect("valid normal");
    let mut lat = Vec::with_capacity(n);
    let mut lon = Vec::with_capacity(n);
    let mut ar = Vec::with_capacity(n);
    let mut fr = Vec::with_capacity(n);
    let mut uc = Vec::with_capacity(n);
    let mut st = Vec::with_capacity(n);
    let mut bin: [Vec<f64>; 5] = Default::default();
    let bin_p = [0.35, 0.25, 0.15, 0.3, 0.3];
    let mut strc = Vec::with_capacity(n);
    let mut nic = Vec::with_capacity(n);
    let mut yrc = Vec::with_capacity(n);
    for _ in 0..n {
        lat.push(rng.random_range(LAT_RANGE.0..LAT_RANGE.1));
        lon.push(rng.random_range(LON_RANGE.0..LON_RANGE.1));
        let a = Distribution::<f64>::sample(&log_area, &mut rng)
            .exp()
            .clamp(AR_RANGE.0, AR_RANGE.1);
        ar.push(a);
        let depth_ratio: f64 = rng.random_range(0.3..0.8);
        fr.push((a.sqrt() * depth_ratio).clamp(FR_RANGE.0, FR_RANGE.1));
        uc.push(3.0 + 0.5 * rng.random_range(0..7) as f64);
        st.push(rng.random_range(1..=18) as f64);
        for (col, &p) in bin.iter_mut().zip(&bin_p) {
            col.push(if rng.random::<f64>() < p { 1.0 } else { 0.0 });
        }
        strc.push(draw_level(&mut rng, &[0.15, 0.25, 0.6]));
        nic.push(draw_level(&mut rng, &[0.55, 0.2, 0.25]));
        yrc.push(draw_level(&mut rng, &[0.3, 0.35, 0.35]));
    }
    let [to, pa, si, vn, sz] = bin;
    let cols = vec![
        ("AR".to_string(), Column::Real(ar)),
        ("FR".to_string(), Column::Real(fr)),
        ("LAT".to_string(), Column::Real(lat)),
        ("LON".to_string(), Column::Real(lon)),
        ("UC".to_string(), Column::Real(uc)),
        ("ST".to_string(), Column::Real(st)),
        ("TO".to_string(), Column::Real(to)),
        ("PA".to_string(), Column::Real(pa)),
        ("SI".to_string(), Column::Real(si)),
        ("VN".to_string(), Column::Real(vn)),
        ("SZ".to_string(), Column::Real(sz)),
        (
            "STR".to_string(),
            categorical(&["minor_arterial", "collector", "local"], strc),
        ),
        (
            "NI".to_string(),
            categorical(&["offer", "transaction", "register"], nic),
        ),
        ("YR".to_string(), categorical(&["2005", "2006", "2007"], yrc)),
    ];
    Dataset::new(cols, Provenance::Generator { seed })
}

/// Synthetic land lots with a gamma unit price drawn from `truth`.
/// The returned dataset holds the raw schema columns; derived variables are
/// added by [`derive_variables`].
pub fn simulate_hedonic(seed: u64, n: usize, truth: &Truth) -> Result<Dataset> {
    if n < 50 {
        return Err(Error::InsufficientData(format!("simulation needs n >= 50, got {n}")));
    }
    truth.validate()?;
    let covariates = simulate_covariates(seed, n)?;
    let derived = derive_variables(&covariates)?;
    let (mu, sigma) = truth.params(&derived)?;
    // The response stream is separate from the covariate stream.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let mut up = Vec::with_capacity(n);
    for (i, (&m, &s)) in mu.iter().zip(&sigma).enumerate() {
        let shape = 1.0 / (s * s);
        let g = Gamma::new(shape, m / shape).map_err(|e| Error::domain(&format!("row {i}"), s, e.to_string()))?;
        up.push(g.sample(&mut rng).max(f64::MIN_POSITIVE));
    }
    let mut cols = vec![("UP".to_string(), Column::Real(up))];
    for name in covariates.names() {
        cols.push((name.clone(), covariates.column(name).expect("own column").clone()));
    }
    Dataset::new(cols, Provenance::Generator { seed })
}
