//! Flat `key = value` experiment configuration.
//!
//! ```text
//! # comments start with '#'
//! kind = n-cyclic
//! n = 3
//! t = 125, 1000
//! N = auto
//! ```
//!
//! Lists are comma separated. [`ExperimentConfig::emit`] writes every key, with
//! floats in shortest round-trip form, so `parse(emit(c)) == c`.

use std::fmt::Write as _;
use std::path::PathBuf;

use higgslab_core::{Family, SystemKind};
use serde::Serialize;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("bad value for `{key}`: {msg}")]
    BadValue { key: String, msg: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Cells {
    Auto,
    Fixed(usize),
}

/// Tolerances of every verdict the lab issues.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tolerances {
    /// Relative tolerance of fitted vs predicted decay rates.
    pub decay_rate: f64,
    /// Relative tolerance of the cross-t rate ratio vs `(t2/t1)^{1/b}`.
    pub decay_ratio: f64,
    /// Absolute tolerance of transport diagonal logs vs `μ_j`.
    pub diag_log: f64,
    pub wkb: f64,
    /// Vector-distance tolerance in units of `2L`.
    pub vector: f64,
    pub pairing: f64,
    pub det_drift: f64,
    /// Tolerance of every defect in exact-leading mode.
    pub exact: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            decay_rate: 0.15,
            decay_ratio: 0.10,
            diag_log: 0.05,
            wkb: 0.05,
            vector: 0.05,
            pairing: 0.05,
            det_drift: 1e-8,
            exact: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    #[serde(rename = "kind", serialize_with = "serialize_family")]
    pub family: Family,
    pub n: usize,
    /// Ray parameters, strictly increasing.
    pub t: Vec<f64>,
    pub radius: f64,
    pub cells: Cells,
    /// Boundary amplitude factor: boundary scale `α t^{-2/b}`.
    pub alpha: f64,
    pub theta: Vec<f64>,
    /// Extra random angles drawn from `seed`.
    pub theta_random: usize,
    pub length: Vec<f64>,
    pub seed: u64,
    /// Fit window as fractions of `R`.
    pub fit_window: (f64, f64),
    pub solver_tol: f64,
    pub tolerances: Tolerances,
    pub exact_leading: bool,
    pub override_path_guard: bool,
    pub out: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            family: Family::NCyclic,
            n: 3,
            t: vec![125.0, 1000.0],
            radius: 1.0,
            cells: Cells::Auto,
            alpha: 1e-3,
            theta: vec![0.0, 0.4],
            theta_random: 0,
            length: vec![0.3],
            seed: 0,
            fit_window: (0.5, 0.95),
            solver_tol: 1e-10,
            tolerances: Tolerances::default(),
            exact_leading: false,
            override_path_guard: false,
            out: None,
        }
    }
}

fn serialize_family<S: serde::Serializer>(f: &Family, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(family_name(*f))
}

pub fn family_name(f: Family) -> &'static str {
    match f {
        Family::NCyclic => "n-cyclic",
        Family::NMinus1Cyclic => "n-1-cyclic",
    }
}

pub fn parse_family(s: &str) -> Result<Family, ConfigError> {
    match s.trim().to_ascii_lowercase().as_str() {
        "n-cyclic" | "ncyclic" => Ok(Family::NCyclic),
        "n-1-cyclic" | "nminus1cyclic" | "n-minus-1-cyclic" => Ok(Family::NMinus1Cyclic),
        other => Err(ConfigError::BadValue {
            key: "kind".into(),
            msg: format!("`{other}` is not one of n-cyclic, n-1-cyclic"),
        }),
    }
}

fn bad(key: &str, msg: impl Into<String>) -> ConfigError {
    ConfigError::BadValue { key: key.into(), msg: msg.into() }
}

fn float(key: &str, v: &str) -> Result<f64, ConfigError> {
    v.trim().parse::<f64>().map_err(|e| bad(key, format!("`{}`: {e}", v.trim())))
}

fn float_list(key: &str, v: &str) -> Result<Vec<f64>, ConfigError> {
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|x| float(key, x)).collect()
}

fn integer<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    v.trim().parse::<T>().map_err(|e| bad(key, format!("`{}`: {e}", v.trim())))
}

fn boolean(key: &str, v: &str) -> Result<bool, ConfigError> {
    match v.trim() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        other => Err(bad(key, format!("`{other}` is not a boolean"))),
    }
}

fn list(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", ")
}

impl ExperimentConfig {
    pub fn kind(&self) -> Result<SystemKind, ConfigError> {
        SystemKind::new(self.family, self.n).map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    /// Parse a whole file on top of the defaults; keys not mentioned keep
    /// their default values.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| ConfigError::Syntax { line: i + 1, text: raw.to_string() })?;
            cfg.set(key.trim(), value.trim())?;
        }
        Ok(cfg)
    }

    /// Apply one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "kind" => self.family = parse_family(value)?,
            "n" => self.n = integer(key, value)?,
            "t" => self.t = float_list(key, value)?,
            "R" => self.radius = float(key, value)?,
            "N" => {
                self.cells = if value.trim() == "auto" { Cells::Auto } else { Cells::Fixed(integer(key, value)?) }
            }
            "alpha" => self.alpha = float(key, value)?,
            "theta" => self.theta = float_list(key, value)?,
            "theta_random" => self.theta_random = integer(key, value)?,
            "L" => self.length = float_list(key, value)?,
            "seed" => self.seed = integer(key, value)?,
            "fit_window" => {
                let v = float_list(key, value)?;
                if v.len() != 2 {
                    return Err(bad(key, "expected two fractions `lo, hi`"));
                }
                self.fit_window = (v[0], v[1]);
            }
            "solver_tol" => self.solver_tol = float(key, value)?,
            "tol.decay_rate" => self.tolerances.decay_rate = float(key, value)?,
            "tol.decay_ratio" => self.tolerances.decay_ratio = float(key, value)?,
            "tol.diag_log" => self.tolerances.diag_log = float(key, value)?,
            "tol.wkb" => self.tolerances.wkb = float(key, value)?,
            "tol.vector" => self.tolerances.vector = float(key, value)?,
            "tol.pairing" => self.tolerances.pairing = float(key, value)?,
            "tol.det_drift" => self.tolerances.det_drift = float(key, value)?,
            "tol.exact" => self.tolerances.exact = float(key, value)?,
            "exact_leading" => self.exact_leading = boolean(key, value)?,
            "override_path_guard" => self.override_path_guard = boolean(key, value)?,
            "out" => self.out = if value.is_empty() { None } else { Some(PathBuf::from(value)) },
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    /// Every key in canonical order.
    pub fn emit(&self) -> String {
        let tol = &self.tolerances;
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("kind", family_name(self.family).into());
        kv("n", self.n.to_string());
        kv("t", list(&self.t));
        kv("R", format!("{:?}", self.radius));
        kv(
            "N",
            match self.cells {
                Cells::Auto => "auto".into(),
                Cells::Fixed(n) => n.to_string(),
            },
        );
        kv("alpha", format!("{:?}", self.alpha));
        kv("theta", list(&self.theta));
        kv("theta_random", self.theta_random.to_string());
        kv("L", list(&self.length));
        kv("seed", self.seed.to_string());
        kv("fit_window", list(&[self.fit_window.0, self.fit_window.1]));
        kv("solver_tol", format!("{:?}", self.solver_tol));
        kv("tol.decay_rate", format!("{:?}", tol.decay_rate));
        kv("tol.decay_ratio", format!("{:?}", tol.decay_ratio));
        kv("tol.diag_log", format!("{:?}", tol.diag_log));
        kv("tol.wkb", format!("{:?}", tol.wkb));
        kv("tol.vector", format!("{:?}", tol.vector));
        kv("tol.pairing", format!("{:?}", tol.pairing));
        kv("tol.det_drift", format!("{:?}", tol.det_drift));
        kv("tol.exact", format!("{:?}", tol.exact));
        kv("exact_leading", self.exact_leading.to_string());
        kv("override_path_guard", self.override_path_guard.to_string());
        if let Some(out) = &self.out {
            kv("out", out.display().to_string());
        }
        s
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.kind()?;
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        if self.t.is_empty() {
            return invalid("the t list is empty".into());
        }
        if self.t.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
            return invalid("t entries must be positive".into());
        }
        if self.t.windows(2).any(|w| w[1] <= w[0]) {
            return invalid("t entries must be strictly increasing".into());
        }
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return invalid(format!("R must be positive, got {}", self.radius));
        }
        if let Cells::Fixed(n) = self.cells {
            if n < 16 {
                return invalid(format!("N must be at least 16, got {n}"));
            }
        }
        if !(0.0..=0.5).contains(&self.alpha) {
            return invalid(format!("alpha must lie in [0, 0.5], got {}", self.alpha));
        }
        if self.theta.is_empty() && self.theta_random == 0 {
            return invalid("no angles: set theta or theta_random".into());
        }
        if self.theta.iter().any(|x| !x.is_finite()) {
            return invalid("theta entries must be finite".into());
        }
        if self.length.is_empty() {
            return invalid("the L list is empty".into());
        }
        for &l in &self.length {
            if !(l > 0.0 && l <= self.radius) {
                return invalid(format!("L = {l} must lie in (0, R]"));
            }
            if l > 0.5 * self.radius && !self.override_path_guard {
                return invalid(format!(
                    "L = {l} exceeds R/2 = {}; pass --override-path-guard to allow it",
                    0.5 * self.radius
                ));
            }
        }
        let (lo, hi) = self.fit_window;
        if !(0.0 <= lo && lo < hi && hi <= 1.0) {
            return invalid(format!("fit window [{lo}, {hi}] must satisfy 0 <= lo < hi <= 1"));
        }
        if !(self.solver_tol >= 1e-13) {
            return invalid(format!("solver_tol must be >= 1e-13, got {}", self.solver_tol));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        assert_eq!(ExperimentConfig::parse(&cfg.emit()).unwrap(), cfg);
    }

    #[test]
    fn parses_lists_and_comments() {
        let cfg = ExperimentConfig::parse("# sweep\nkind = n-1-cyclic\nn = 4\nt = 100, 500 # two\nN = 2048\n").unwrap();
        assert_eq!(cfg.family, Family::NMinus1Cyclic);
        assert_eq!(cfg.t, vec![100.0, 500.0]);
        assert_eq!(cfg.cells, Cells::Fixed(2048));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(ExperimentConfig::parse("kind = toda"), Err(ConfigError::BadValue { .. })));
        assert!(matches!(ExperimentConfig::parse("colour = red"), Err(ConfigError::UnknownKey(_))));
        assert!(matches!(ExperimentConfig::parse("just words"), Err(ConfigError::Syntax { .. })));
        let mut cfg = ExperimentConfig::default();
        cfg.t.clear();
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig { t: vec![1000.0, 125.0], ..Default::default() };
        assert!(cfg.validate().is_err());
        cfg.t = vec![125.0];
        cfg.length = vec![0.7];
        assert!(cfg.validate().is_err());
        cfg.override_path_guard = true;
        cfg.validate().unwrap();
        cfg.alpha = 0.6;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn awkward_floats_round_trip() {
        let cfg = ExperimentConfig {
            t: vec![0.1 + 0.2, 1.0 / 3.0, 1e300],
            theta: vec![std::f64::consts::PI, -0.0],
            alpha: 1e-3 / 7.0,
            out: Some(PathBuf::from("runs/a b")),
            ..Default::default()
        };
        assert_eq!(ExperimentConfig::parse(&cfg.emit()).unwrap(), cfg);
    }
}
