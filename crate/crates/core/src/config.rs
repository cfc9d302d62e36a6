//! Declarative run configuration.
//!
//! Documents are TOML with optional sections:
//!
//! ```toml
//! initial_data = "sincos: a=1, b=0.5"
//!
//! [grid]
//! m = 256
//!
//! [time]
//! h = 2.44140625e-4
//! t_final = 0.5
//! delta_t = 0.03125     # omit for no-reset mode
//!
//! [ensemble]
//! n_copies = 4
//! nu = 0.5
//! seed = 7
//! eps_jac = 1e-3
//! drift = true
//!
//! [experiment]
//! id = "rate_dt"
//! realizations = 64
//! delta_t_list = [0.0625, 0.03125, 0.015625]
//! ```
//!
//! Every key is optional; missing keys take the defaults of
//! [`RunConfig::default`] and [`ExperimentSpec::preset`].

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::experiments::{ExperimentId, ExperimentSpec};
use crate::fields::{FieldError, PeriodicGrid, ScalarField};
use crate::particle::RunConfig;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid config: {field}: {message}")]
    Validation { field: String, message: String },
}

impl ConfigError {
    pub(crate) fn validation(field: &str, message: impl Into<String>) -> Self {
        ConfigError::Validation {
            field: field.to_string(),
            message: message.into(),
        }
    }
}

/// Named initial-data presets.
///
/// Text form is `name` or `name: key=value, key=value`:
///
/// * `zero`
/// * `const: value=c`
/// * `sin: amplitude=A`            `A sin(2 pi x)`
/// * `msin: amplitude=A`           `-A sin(2 pi x)`
/// * `sincos: a=1, b=0.5`          `a sin(2 pi x) + b cos(4 pi x)`
/// * `fourier: a0=.., cos3=.., sin1=..` general trigonometric polynomial
#[derive(Debug, Clone, PartialEq)]
pub enum InitialData {
    Zero,
    Constant(f64),
    Sin(f64),
    MinusSin(f64),
    SinCos { a: f64, b: f64 },
    Fourier {
        mean: f64,
        /// `(n, cos coefficient, sin coefficient)`, `n >= 1`, sorted by `n`.
        modes: Vec<(u32, f64, f64)>,
    },
}

impl Default for InitialData {
    fn default() -> Self {
        InitialData::MinusSin(1.0)
    }
}

impl InitialData {
    pub fn eval(&self, x: f64) -> f64 {
        let w = 2.0 * PI * x;
        match self {
            InitialData::Zero => 0.0,
            InitialData::Constant(c) => *c,
            InitialData::Sin(a) => a * w.sin(),
            InitialData::MinusSin(a) => -a * w.sin(),
            InitialData::SinCos { a, b } => a * w.sin() + b * (2.0 * w).cos(),
            InitialData::Fourier { mean, modes } => {
                mean + modes
                    .iter()
                    .map(|&(n, c, s)| {
                        let k = f64::from(n) * w;
                        c * k.cos() + s * k.sin()
                    })
                    .sum::<f64>()
            }
        }
    }

    pub fn sample(&self, grid: PeriodicGrid) -> Result<ScalarField, FieldError> {
        ScalarField::sample(grid, |x| self.eval(x))
    }

    /// Spatial mean of the continuous function.
    pub fn mean(&self) -> f64 {
        match self {
            InitialData::Constant(c) => *c,
            InitialData::Fourier { mean, .. } => *mean,
            _ => 0.0,
        }
    }

    /// Highest wavenumber present.
    pub fn max_mode(&self) -> u32 {
        match self {
            InitialData::Zero | InitialData::Constant(_) => 0,
            InitialData::Sin(_) | InitialData::MinusSin(_) => 1,
            InitialData::SinCos { .. } => 2,
            InitialData::Fourier { modes, .. } => modes.iter().map(|m| m.0).max().unwrap_or(0),
        }
    }
}

impl fmt::Display for InitialData {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitialData::Zero => write!(f, "zero"),
            InitialData::Constant(c) => write!(f, "const: value={c:?}"),
            InitialData::Sin(a) => write!(f, "sin: amplitude={a:?}"),
            InitialData::MinusSin(a) => write!(f, "msin: amplitude={a:?}"),
            InitialData::SinCos { a, b } => write!(f, "sincos: a={a:?}, b={b:?}"),
            InitialData::Fourier { mean, modes } => {
                write!(f, "fourier: a0={mean:?}")?;
                for &(n, c, s) in modes {
                    if c != 0.0 {
                        write!(f, ", cos{n}={c:?}")?;
                    }
                    if s != 0.0 {
                        write!(f, ", sin{n}={s:?}")?;
                    }
                }
                Ok(())
            }
        }
    }
}

impl FromStr for InitialData {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (name, rest) = match s.split_once(':') {
            Some((n, r)) => (n.trim(), r.trim()),
            None => (s.trim(), ""),
        };
        let mut params: Vec<(String, f64)> = Vec::new();
        for item in rest.split(',').map(str::trim).filter(|t| !t.is_empty()) {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| format!("expected key=value, got `{item}`"))?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| format!("`{}` is not a number", v.trim()))?;
            if !v.is_finite() {
                return Err(format!("`{}` must be finite", k.trim()));
            }
            params.push((k.trim().to_string(), v));
        }
        let take = |allowed: &[&str]| -> Result<Vec<Option<f64>>, String> {
            if let Some((k, _)) = params.iter().find(|(k, _)| !allowed.contains(&k.as_str())) {
                return Err(format!("unknown parameter `{k}` for preset `{name}`"));
            }
            Ok(allowed
                .iter()
                .map(|a| params.iter().find(|(k, _)| k == a).map(|p| p.1))
                .collect())
        };
        match name {
            "zero" => take(&[]).map(|_| InitialData::Zero),
            "const" => Ok(InitialData::Constant(take(&["value"])?[0].unwrap_or(1.0))),
            "sin" => Ok(InitialData::Sin(take(&["amplitude"])?[0].unwrap_or(1.0))),
            "msin" => Ok(InitialData::MinusSin(take(&["amplitude"])?[0].unwrap_or(1.0))),
            "sincos" => {
                let p = take(&["a", "b"])?;
                Ok(InitialData::SinCos {
                    a: p[0].unwrap_or(1.0),
                    b: p[1].unwrap_or(0.5),
                })
            }
            "fourier" => {
                let mut mean = 0.0;
                let mut modes: Vec<(u32, f64, f64)> = Vec::new();
                for (k, v) in &params {
                    if k == "a0" {
                        mean = *v;
                        continue;
                    }
                    let (is_cos, num) = if let Some(n) = k.strip_prefix("cos") {
                        (true, n)
                    } else if let Some(n) = k.strip_prefix("sin") {
                        (false, n)
                    } else {
                        return Err(format!("unknown parameter `{k}` for preset `fourier`"));
                    };
                    let n: u32 = num
                        .parse()
                        .ok()
                        .filter(|&n| n >= 1)
                        .ok_or_else(|| format!("bad mode number in `{k}`"))?;
                    let slot = match modes.iter_mut().find(|m| m.0 == n) {
                        Some(s) => s,
                        None => {
                            modes.push((n, 0.0, 0.0));
                            modes.last_mut().unwrap()
                        }
                    };
                    if is_cos {
                        slot.1 = *v;
                    } else {
                        slot.2 = *v;
                    }
                }
                modes.sort_by_key(|m| m.0);
                Ok(InitialData::Fourier { mean, modes })
            }
            other => Err(format!(
                "unknown initial-data preset `{other}` (expected zero, const, sin, msin, sincos, fourier)"
            )),
        }
    }
}

impl Serialize for InitialData {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for InitialData {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// `initial_data` may be a bare string or a table with a `preset` key.
#[derive(Deserialize)]
#[serde(untagged)]
enum InitialDataDoc {
    Text(InitialData),
    Table(PresetTable),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PresetTable {
    preset: InitialData,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct Document {
    initial_data: Option<InitialDataDoc>,
    #[serde(default)]
    grid: GridDoc,
    #[serde(default)]
    time: TimeDoc,
    #[serde(default)]
    ensemble: EnsembleDoc,
    experiment: Option<ExperimentDoc>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct GridDoc {
    m: Option<usize>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct TimeDoc {
    h: Option<f64>,
    t_final: Option<f64>,
    delta_t: Option<f64>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct EnsembleDoc {
    n_copies: Option<usize>,
    nu: Option<f64>,
    seed: Option<u64>,
    eps_jac: Option<f64>,
    drift: Option<bool>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ExperimentDoc {
    id: String,
    realizations: Option<usize>,
    delta_t_list: Option<Vec<f64>>,
    n_list: Option<Vec<usize>>,
    coupled: Option<bool>,
    spde_dt: Option<f64>,
}

/// Parsed document: the run configuration plus an optional experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedConfig {
    pub run: RunConfig,
    pub experiment: Option<ExperimentSpec>,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Parse and validate a config document. Keys present in the document
/// override the defaults; an `[experiment]` section starts from the
/// experiment's preset and then applies those overrides.
pub fn parse_config(text: &str) -> Result<ParsedConfig, ConfigError> {
    let doc = parse_document(text)?;
    let run = doc.run_config()?;
    let experiment = match &doc.experiment {
        None => None,
        Some(x) => Some(doc.experiment_spec(x.id()?)?),
    };
    Ok(ParsedConfig { run, experiment })
}

/// Parse a document for experiment `id`. An `[experiment]` section is
/// optional but, when present, must name the same experiment.
pub fn parse_experiment(text: &str, id: ExperimentId) -> Result<ExperimentSpec, ConfigError> {
    let doc = parse_document(text)?;
    if let Some(x) = &doc.experiment {
        let named = x.id()?;
        if named != id {
            return Err(ConfigError::validation(
                "experiment.id",
                format!("document names `{named}` but `{id}` was requested"),
            ));
        }
    }
    doc.experiment_spec(id)
}

fn parse_document(text: &str) -> Result<Document, ConfigError> {
    toml::from_str(text).map_err(|e| ConfigError::Parse {
        line: e.span().map(|s| line_of(text, s.start)).unwrap_or(1),
        message: e.message().to_string(),
    })
}

impl ExperimentDoc {
    fn id(&self) -> Result<ExperimentId, ConfigError> {
        self.id
            .parse()
            .map_err(|msg: String| ConfigError::validation("experiment.id", msg))
    }
}

impl Document {
    fn apply(&self, base: &mut RunConfig) {
        if let Some(m) = self.grid.m {
            base.m = m;
        }
        if let Some(h) = self.time.h {
            base.h = h;
        }
        if let Some(t) = self.time.t_final {
            base.t_final = t;
        }
        if let Some(d) = self.time.delta_t {
            base.delta_t = Some(d);
        }
        let e = &self.ensemble;
        if let Some(n) = e.n_copies {
            base.n_copies = n;
        }
        if let Some(nu) = e.nu {
            base.nu = nu;
        }
        if let Some(s) = e.seed {
            base.seed = s;
        }
        if let Some(eps) = e.eps_jac {
            base.eps_jac = eps;
        }
        if let Some(d) = e.drift {
            base.drift = d;
        }
        match &self.initial_data {
            Some(InitialDataDoc::Text(d)) => base.initial = d.clone(),
            Some(InitialDataDoc::Table(t)) => base.initial = t.preset.clone(),
            None => {}
        }
    }

    fn run_config(&self) -> Result<RunConfig, ConfigError> {
        let mut run = RunConfig::default();
        self.apply(&mut run);
        run.validate()?;
        Ok(run)
    }

    fn experiment_spec(&self, id: ExperimentId) -> Result<ExperimentSpec, ConfigError> {
        let mut spec = ExperimentSpec::preset(id);
        self.apply(&mut spec.base);
        if let Some(x) = &self.experiment {
            if let Some(r) = x.realizations {
                spec.realizations = r;
            }
            if let Some(l) = &x.delta_t_list {
                spec.delta_t_list = l.clone();
            }
            if let Some(l) = &x.n_list {
                spec.n_list = l.clone();
            }
            if let Some(c) = x.coupled {
                spec.coupled = c;
            }
            if let Some(dt) = x.spde_dt {
                spec.spde_dt = dt;
            }
        }
        spec.validate()?;
        Ok(spec)
    }
}

/// `value / step` as an integer when it is one within `1e-12` relative.
pub fn integer_ratio(value: f64, step: f64) -> Option<u64> {
    let r = value / step;
    let n = r.round();
    if n >= 1.0 && (r - n).abs() <= 1e-12 * n.max(1.0) {
        Some(n as u64)
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let p = parse_config("").unwrap();
        assert_eq!(p.run, RunConfig::default());
        assert_eq!(p.run.nu, 0.5);
        assert_eq!(p.run.eps_jac, 1e-3);
        assert_eq!(p.run.m, 512);
        assert_eq!(p.run.h, 1e-4);
        assert!(p.experiment.is_none());
    }

    #[test]
    fn reset_interval_must_be_multiple_of_step() {
        let err = parse_config("[time]\nh = 7e-4\ndelta_t = 0.03\nt_final = 0.7\n").unwrap_err();
        match err {
            ConfigError::Validation { field, .. } => assert_eq!(field, "time.delta_t"),
            other => panic!("{other:?}"),
        }
        // 0.03 is 300 steps of 1e-4 to within 1e-12
        assert!(parse_config("[time]\nh = 1e-4\ndelta_t = 0.03\nt_final = 0.03\n").is_ok());
    }

    #[test]
    fn presets() {
        let p = parse_config("initial_data = \"msin: amplitude=1\"\n").unwrap();
        assert_eq!(p.run.initial, InitialData::MinusSin(1.0));
        let g = PeriodicGrid::new(8).unwrap();
        let u = p.run.initial.sample(g).unwrap();
        assert_eq!(u.values()[2], -1.0);

        let p = parse_config("[initial_data]\npreset = \"sincos\"\n").unwrap();
        assert_eq!(p.run.initial, InitialData::SinCos { a: 1.0, b: 0.5 });

        let f: InitialData = "fourier: a0=0.25, sin1=1, cos3=-0.5".parse().unwrap();
        assert!((f.eval(0.25) - (0.25 + 1.0 - 0.5 * (1.5 * PI).cos())).abs() < 1e-15);
        assert_eq!(f.max_mode(), 3);
        let round: InitialData = f.to_string().parse().unwrap();
        assert_eq!(round, f);

        assert!("sawtooth".parse::<InitialData>().is_err());
        assert!("sin: amp=1".parse::<InitialData>().is_err());
    }

    #[test]
    fn parse_errors_report_lines() {
        let err = parse_config("[grid]\nm = 256\n\n[time]\nbogus = 1\n").unwrap_err();
        match err {
            ConfigError::Parse { line, message } => {
                assert_eq!(line, 5, "{message}");
                assert!(message.contains("bogus"), "{message}");
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_config("[grid\n"), Err(ConfigError::Parse { line: 1, .. })));
    }

    #[test]
    fn grid_and_copy_validation() {
        assert!(matches!(
            parse_config("[grid]\nm = 100\n"),
            Err(ConfigError::Validation { .. })
        ));
        assert!(parse_config("[ensemble]\nn_copies = 0\n").is_err());
        assert!(parse_config("[ensemble]\nnu = -1\n").is_err());
    }

    #[test]
    fn experiment_section() {
        let p = parse_config("[experiment]\nid = \"rate_dt\"\nrealizations = 16\n").unwrap();
        let e = p.experiment.unwrap();
        assert_eq!(e.id, ExperimentId::RateDt);
        assert_eq!(e.realizations, 16);
        assert!(parse_config("[experiment]\nid = \"nope\"\n").is_err());
    }

    #[test]
    fn experiment_by_id() {
        let e = parse_experiment("[time]\nh = 2.44140625e-4\n", ExperimentId::RateDt).unwrap();
        assert_eq!(e.base.h, 1.0 / 4096.0);
        assert_eq!(e.realizations, ExperimentSpec::preset(ExperimentId::RateDt).realizations);
        assert_eq!(parse_experiment("", ExperimentId::Survival).unwrap(), ExperimentSpec::preset(ExperimentId::Survival));
        let clash = parse_experiment("[experiment]\nid = \"rate_n\"\n", ExperimentId::RateDt).unwrap_err();
        assert!(matches!(clash, ConfigError::Validation { field, .. } if field == "experiment.id"));
    }

    #[test]
    fn integer_ratios() {
        assert_eq!(integer_ratio(0.03, 1e-4), Some(300));
        assert_eq!(integer_ratio(0.03, 7e-4), None);
        assert_eq!(integer_ratio(0.5, 0.5), Some(1));
        assert_eq!(integer_ratio(0.0, 0.5), None);
    }
}
