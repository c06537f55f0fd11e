//! Columnar datasets, the land-lot variable schema, derived variables and
//! descriptive statistics.

use std::collections::HashSet;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Column {
    Real(Vec<f64>),
    /// Levels in first-appearance order; `codes[i]` indexes `levels`.
    Categorical {
        levels: Vec<String>,
        codes: Vec<u32>,
    },
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Column::Real(v) => v.len(),
            Column::Categorical { codes, .. } => codes.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn as_real(&self) -> Option<&[f64]> {
        match self {
            Column::Real(v) => Some(v),
            Column::Categorical { .. } => None,
        }
    }

    pub fn label(&self, row: usize) -> String {
        match self {
            Column::Real(v) => v[row].to_string(),
            Column::Categorical { levels, codes } => levels[codes[row] as usize].clone(),
        }
    }

    fn take(&self, rows: &[usize]) -> Column {
        match self {
            Column::Real(v) => Column::Real(rows.iter().map(|&r| v[r]).collect()),
            Column::Categorical { levels, codes } => Column::Categorical {
                levels: levels.clone(),
                codes: rows.iter().map(|&r| codes[r]).collect(),
            },
        }
    }

    fn from_labels(labels: &[String]) -> Column {
        let mut levels: Vec<String> = Vec::new();
        let codes = labels
            .iter()
            .map(|l| match levels.iter().position(|v| v == l) {
                Some(p) => p as u32,
                None => {
                    levels.push(l.clone());
                    (levels.len() - 1) as u32
                }
            })
            .collect();
        Column::Categorical { levels, codes }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    File { path: String, dropped_rows: usize },
    Generator { seed: u64 },
    Memory,
}

/// An immutable table of equally long named columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    names: Vec<String>,
    columns: Vec<Column>,
    n: usize,
    provenance: Provenance,
}

impl Dataset {
    pub fn new(columns: Vec<(String, Column)>, provenance: Provenance) -> Result<Self> {
        let n = columns.first().map(|(_, c)| c.len()).unwrap_or(0);
        let mut seen = HashSet::new();
        for (name, col) in &columns {
            if col.len() != n {
                return Err(Error::Schema(format!(
                    "column '{name}' has {} rows, expected {n}",
                    col.len()
                )));
            }
            if !seen.insert(name.clone()) {
                return Err(Error::Schema(format!("duplicate column '{name}'")));
            }
        }
        let (names, columns) = columns.into_iter().unzip();
        Ok(Dataset {
            names,
            columns,
            n,
            provenance,
        })
    }

    pub fn from_reals<S: Into<String>>(cols: Vec<(S, Vec<f64>)>) -> Result<Self> {
        Dataset::new(
            cols.into_iter().map(|(k, v)| (k.into(), Column::Real(v))).collect(),
            Provenance::Memory,
        )
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.names.iter().position(|n| n == name).map(|i| &self.columns[i])
    }

    pub fn has(&self, name: &str) -> bool {
        self.column(name).is_some()
    }

    pub fn real(&self, name: &str) -> Result<&[f64]> {
        match self.column(name) {
            Some(Column::Real(v)) => Ok(v),
            Some(Column::Categorical { .. }) => Err(Error::Schema(format!(
                "column '{name}' is categorical, a numeric column is required"
            ))),
            None => Err(Error::Schema(format!("missing column '{name}'"))),
        }
    }

    /// Value of `name` or, for `log(name)`, a precomputed `log(name)` column
    /// when one exists and the elementwise log otherwise.
    pub fn eval(&self, expr: &VarExpr) -> Result<Vec<f64>> {
        match expr {
            VarExpr::Var(name) => Ok(self.real(name)?.to_vec()),
            VarExpr::Log(name) => {
                let derived = expr.to_string();
                if let Some(Column::Real(v)) = self.column(&derived) {
                    return Ok(v.clone());
                }
                self.real(name)?
                    .iter()
                    .enumerate()
                    .map(|(i, &v)| {
                        if v > 0.0 {
                            Ok(v.ln())
                        } else {
                            Err(Error::domain(
                                &format!("{name}[row {}]", i + 1),
                                v,
                                "log of a nonpositive value",
                            ))
                        }
                    })
                    .collect()
            }
        }
    }

    /// Returns a copy with `name` added or replaced.
    pub fn with_column(&self, name: &str, col: Column) -> Result<Self> {
        if col.len() != self.n && !self.columns.is_empty() {
            return Err(Error::Schema(format!(
                "column '{name}' has {} rows, expected {}",
                col.len(),
                self.n
            )));
        }
        let mut out = self.clone();
        if out.columns.is_empty() {
            out.n = col.len();
        }
        match out.names.iter().position(|n| n == name) {
            Some(i) => out.columns[i] = col,
            None => {
                out.names.push(name.to_string());
                out.columns.push(col);
            }
        }
        Ok(out)
    }

    pub fn take_rows(&self, rows: &[usize]) -> Dataset {
        Dataset {
            names: self.names.clone(),
            columns: self.columns.iter().map(|c| c.take(rows)).collect(),
            n: rows.len(),
            provenance: self.provenance.clone(),
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.names)?;
        let mut record = Vec::with_capacity(self.names.len());
        for row in 0..self.n {
            record.clear();
            record.extend(self.columns.iter().map(|c| c.label(row)));
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))
    }
}

/// A numeric variable reference: `NAME` or `log(NAME)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VarExpr {
    Var(String),
    Log(String),
}

impl VarExpr {
    pub fn base(&self) -> &str {
        match self {
            VarExpr::Var(n) | VarExpr::Log(n) => n,
        }
    }
}

impl std::str::FromStr for VarExpr {
    type Err = Error;

    /// `NAME` or `log(NAME)`.
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        let ident = |x: &str| !x.is_empty() && x.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.');
        if let Some(inner) = t.strip_prefix("log(").and_then(|r| r.strip_suffix(')')) {
            let inner = inner.trim();
            if ident(inner) {
                return Ok(VarExpr::Log(inner.to_string()));
            }
        } else if ident(t) {
            return Ok(VarExpr::Var(t.to_string()));
        }
        Err(Error::Schema(format!("'{s}' is not a variable or log(variable)")))
    }
}

impl fmt::Display for VarExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VarExpr::Var(n) => f.write_str(n),
            VarExpr::Log(n) => write!(f, "log({n})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum VarKind {
    PositiveReal,
    Real,
    /// One of a fixed set of numeric values.
    Discrete(Vec<f64>),
    Integer {
        min: i64,
        max: i64,
    },
    Binary,
    /// Categorical with canonical levels; each level lists accepted spellings.
    Levels(Vec<(&'static str, &'static [&'static str])>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarSpec {
    pub name: &'static str,
    pub kind: VarKind,
    pub required: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemaSpec {
    pub vars: Vec<VarSpec>,
}

const STR_LEVELS: [(&str, &[&str]); 3] = [
    ("minor_arterial", &["minor_arterial", "minor arterial", "str1", "1"]),
    (
        "collector",
        &["collector", "collector_street", "collector street", "str2", "2"],
    ),
    ("local", &["local", "local_street", "local street", "3"]),
];
const NI_LEVELS: [(&str, &[&str]); 3] = [
    ("offer", &["offer", "o"]),
    ("transaction", &["transaction", "t"]),
    ("register", &["register", "register_office", "register office", "r"]),
];
const YR_LEVELS: [(&str, &[&str]); 3] = [
    ("2005", &["2005", "2005.0"]),
    ("2006", &["2006", "2006.0"]),
    ("2007", &["2007", "2007.0"]),
];

impl SchemaSpec {
    /// The land-lot schema; `UP` is required.
    pub fn hedonic() -> Self {
        let mut s = Self::hedonic_covariates();
        s.vars[0].required = true;
        s
    }

    /// The land-lot schema with an optional response, for appraisal of new lots.
    pub fn hedonic_covariates() -> Self {
        let v = |name, kind| VarSpec {
            name,
            kind,
            required: true,
        };
        let uc: Vec<f64> = (0..7).map(|i| 3.0 + 0.5 * i as f64).collect();
        SchemaSpec {
            vars: vec![
                VarSpec {
                    name: "UP",
                    kind: VarKind::PositiveReal,
                    required: false,
                },
                v("AR", VarKind::PositiveReal),
                v("FR", VarKind::PositiveReal),
                v("LAT", VarKind::Real),
                v("LON", VarKind::Real),
                v("UC", VarKind::Discrete(uc)),
                v("ST", VarKind::Integer { min: 1, max: 18 }),
                v("TO", VarKind::Binary),
                v("PA", VarKind::Binary),
                v("SI", VarKind::Binary),
                v("VN", VarKind::Binary),
                v("SZ", VarKind::Binary),
                v("STR", VarKind::Levels(STR_LEVELS.to_vec())),
                v("NI", VarKind::Levels(NI_LEVELS.to_vec())),
                v("YR", VarKind::Levels(YR_LEVELS.to_vec())),
            ],
        }
    }

    /// No required variables; every column is loaded as numeric or categorical.
    pub fn free() -> Self {
        SchemaSpec { vars: Vec::new() }
    }

    fn get(&self, name: &str) -> Option<&VarSpec> {
        self.vars.iter().find(|v| v.name == name)
    }

    /// Check every declared kind; violations carry 1-based data row numbers.
    pub fn validate(&self, ds: &Dataset) -> Result<()> {
        for spec in &self.vars {
            let Some(col) = ds.column(spec.name) else {
                if spec.required {
                    return Err(Error::Schema(format!("missing required column '{}'", spec.name)));
                }
                continue;
            };
            let bad = |row: usize, what: String| {
                Err(Error::Schema(format!("row {}: column '{}' {what}", row + 1, spec.name)))
            };
            match (&spec.kind, col) {
                (VarKind::Levels(levels), Column::Categorical { levels: got, codes }) => {
                    for (row, &c) in codes.iter().enumerate() {
                        if canonical_level(levels, &got[c as usize]).is_none() {
                            return bad(row, format!("has unknown level '{}'", got[c as usize]));
                        }
                    }
                }
                (VarKind::Levels(levels), Column::Real(v)) => {
                    for (row, x) in v.iter().enumerate() {
                        if canonical_level(levels, &x.to_string()).is_none() {
                            return bad(row, format!("has unknown level '{x}'"));
                        }
                    }
                }
                (_, Column::Categorical { .. }) => {
                    return Err(Error::Schema(format!("column '{}' must be numeric", spec.name)))
                }
                (kind, Column::Real(v)) => {
                    for (row, &x) in v.iter().enumerate() {
                        let ok = match kind {
                            VarKind::PositiveReal => x > 0.0 && x.is_finite(),
                            VarKind::Real => x.is_finite(),
                            VarKind::Discrete(vals) => vals.iter().any(|&a| (a - x).abs() < 1e-9),
                            VarKind::Integer { min, max } => x.fract() == 0.0 && x >= *min as f64 && x <= *max as f64,
                            VarKind::Binary => x == 0.0 || x == 1.0,
                            VarKind::Levels(_) => unreachable!(),
                        };
                        if !ok {
                            return bad(row, format!("value {x} violates {kind:?}"));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

fn canonical_level(levels: &[(&'static str, &'static [&'static str])], label: &str) -> Option<&'static str> {
    let l = label.trim().to_ascii_lowercase();
    levels
        .iter()
        .find(|(_, aliases)| aliases.contains(&l.as_str()))
        .map(|(c, _)| *c)
}

fn is_missing(cell: &str) -> bool {
    let c = cell.trim();
    c.is_empty() || c.eq_ignore_ascii_case("na") || c.eq_ignore_ascii_case("nan")
}

/// Load a CSV file and enforce `schema`. Rows with a missing cell are dropped
/// and counted in the provenance.
pub fn load_csv(path: &Path, schema: &SchemaSpec) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    let mut ds = read_csv(file, schema)?;
    if let Provenance::File { path: p, .. } = &mut ds.provenance {
        *p = path.display().to_string();
    }
    Ok(ds)
}

pub fn read_csv<R: Read>(input: R, schema: &SchemaSpec) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if headers.is_empty() || headers.iter().all(|h| h.is_empty()) {
        return Err(Error::Schema("empty file: no header row".into()));
    }
    for spec in &schema.vars {
        if spec.required && !headers.iter().any(|h| h == spec.name) {
            return Err(Error::Schema(format!("missing required column '{}'", spec.name)));
        }
    }
    let mut cells: Vec<Vec<String>> = vec![Vec::new(); headers.len()];
    let mut dropped = 0usize;
    for rec in rdr.records() {
        let rec = rec?;
        if rec.iter().any(is_missing) || rec.len() < headers.len() {
            dropped += 1;
            continue;
        }
        for (j, cell) in rec.iter().enumerate().take(headers.len()) {
            cells[j].push(cell.trim().to_string());
        }
    }
    if cells[0].is_empty() {
        return Err(Error::Schema("empty file: no data rows".into()));
    }
    let mut columns = Vec::with_capacity(headers.len());
    for (j, name) in headers.iter().enumerate() {
        let raw = &cells[j];
        let spec = schema.get(name);
        let col = match spec.map(|s| &s.kind) {
            Some(VarKind::Levels(_)) => Column::from_labels(raw),
            Some(_) => {
                let mut v = Vec::with_capacity(raw.len());
                for (row, s) in raw.iter().enumerate() {
                    v.push(s.parse::<f64>().map_err(|_| {
                        Error::Schema(format!(
                            "unparseable cell '{s}' at data row {}, column '{name}'",
                            row + 1
                        ))
                    })?);
                }
                Column::Real(v)
            }
            None => {
                let parsed: std::result::Result<Vec<f64>, _> = raw.iter().map(|s| s.parse::<f64>()).collect();
                match parsed {
                    Ok(v) => Column::Real(v),
                    Err(_) => Column::from_labels(raw),
                }
            }
        };
        columns.push((name.clone(), col));
    }
    let ds = Dataset::new(
        columns,
        Provenance::File {
            path: String::new(),
            dropped_rows: dropped,
        },
    )?;
    schema.validate(&ds)?;
    Ok(ds)
}

fn level_dummy(ds: &Dataset, var: &str, level: &str) -> Result<Column> {
    let levels = match SchemaSpec::hedonic().get(var).map(|s| s.kind.clone()) {
        Some(VarKind::Levels(l)) => l,
        _ => unreachable!("{var} is declared categorical"),
    };
    let col = ds
        .column(var)
        .ok_or_else(|| Error::Schema(format!("missing column '{var}'")))?;
    let dummy = (0..ds.n())
        .map(|row| {
            let label = col.label(row);
            match canonical_level(&levels, &label) {
                Some(c) => Ok(if c == level { 1.0 } else { 0.0 }),
                None => Err(Error::Schema(format!(
                    "row {}: column '{var}' has unknown level '{label}'",
                    row + 1
                ))),
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(Column::Real(dummy))
}

/// Add the dummy, log and interaction variables used by the land-lot models.
///
/// Baselines: 2005 for `YR`, local street for `STR`, register office for `NI`.
/// `FRVN = FR * VN` and `log(FRVN) = log(max(FRVN, 1))`, which vanishes for
/// lots outside valuable neighborhoods.
pub fn derive_variables(ds: &Dataset) -> Result<Dataset> {
    let mut out = ds.clone();
    let dummies = [
        ("YR06", "YR", "2006"),
        ("YR07", "YR", "2007"),
        ("STR1", "STR", "minor_arterial"),
        ("STR2", "STR", "collector"),
        ("NIO", "NI", "offer"),
        ("NIT", "NI", "transaction"),
    ];
    for (name, var, level) in dummies {
        out = out.with_column(name, level_dummy(ds, var, level)?)?;
    }
    let positive_log = |name: &str| -> Result<Vec<f64>> {
        ds.real(name)?
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                if v > 0.0 {
                    Ok(v.ln())
                } else {
                    Err(Error::domain(&format!("{name}[row {}]", i + 1), v, "must be positive"))
                }
            })
            .collect()
    };
    out = out.with_column("log(AR)", Column::Real(positive_log("AR")?))?;
    let fr = ds.real("FR")?;
    if let Some((i, &v)) = fr.iter().enumerate().find(|(_, v)| **v <= 0.0) {
        return Err(Error::domain(&format!("FR[row {}]", i + 1), v, "must be positive"));
    }
    out = out.with_column("log(ST)", Column::Real(positive_log("ST")?))?;
    if ds.has("UP") {
        out = out.with_column("log(UP)", Column::Real(positive_log("UP")?))?;
    }
    let vn = ds.real("VN")?;
    let frvn: Vec<f64> = fr.iter().zip(vn).map(|(f, v)| f * v).collect();
    let log_frvn = frvn.iter().map(|v| v.max(1.0).ln()).collect();
    out = out.with_column("FRVN", Column::Real(frvn))?;
    out = out.with_column("log(FRVN)", Column::Real(log_frvn))?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Description {
    pub variable: String,
    pub mean: f64,
    pub median: f64,
    pub sd: f64,
    pub min: f64,
    pub max: f64,
    pub range: f64,
}

/// Mean, median, standard deviation (n - 1 denominator), min, max and range.
pub fn describe(ds: &Dataset, variables: &[VarExpr]) -> Result<Vec<Description>> {
    if variables.is_empty() {
        return Err(Error::Schema("describe needs at least one variable".into()));
    }
    variables
        .iter()
        .map(|var| {
            let v = ds.eval(var)?;
            if v.is_empty() {
                return Err(Error::InsufficientData(format!("column '{var}' is empty")));
            }
            let n = v.len() as f64;
            let mean = v.iter().sum::<f64>() / n;
            let sd = if v.len() > 1 {
                (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            let mut sorted = v.clone();
            sorted.sort_by(f64::total_cmp);
            let mid = sorted.len() / 2;
            let median = if sorted.len() % 2 == 0 {
                0.5 * (sorted[mid - 1] + sorted[mid])
            } else {
                sorted[mid]
            };
            let (min, max) = (sorted[0], sorted[sorted.len() - 1]);
            Ok(Description {
                variable: var.to_string(),
                mean,
                median,
                sd,
                min,
                max,
                range: max - min,
            })
        })
        .collect()
}
