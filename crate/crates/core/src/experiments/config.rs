//! Declarative scenario files.
//!
//! Unknown keys anywhere in the document are rejected, including keys that do
//! not belong to the selected `b` scheme.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::solver::SolverConfig;

pub const DEFAULT_ALPHA: f64 = 1e-4;
pub const DEFAULT_K_NOISE_FREE: usize = 100;
pub const DEFAULT_K_NOISY: usize = 10;
pub const DEFAULT_DENSITY: f64 = 0.1;
pub const DEFAULT_SEED: u64 = 7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    /// Target ratio `‖η‖₂ / ‖y‖₂`.
    pub level: f64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSpec {
    pub location: [f64; 2],
    pub amplitude: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeKind {
    Identity,
    TruncPinv,
    RandomSparse,
    PreOrth,
}

/// `b_scheme` as written in a file; missing parameters are filled in once the
/// grids and the noise level are known.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeSpec {
    pub b: SchemeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub indices: Option<Vec<usize>>,
}

impl SchemeSpec {
    pub fn of(kind: SchemeKind) -> Self {
        Self { b: kind, k: None, p: None, density: None, seed: None, indices: None }
    }

    fn check_keys(&self) -> Result<()> {
        let present = [
            ("k", self.k.is_some()),
            ("p", self.p.is_some()),
            ("density", self.density.is_some()),
            ("seed", self.seed.is_some()),
            ("indices", self.indices.is_some()),
        ];
        let allowed: &[&str] = match self.b {
            SchemeKind::Identity => &[],
            SchemeKind::TruncPinv => &["k"],
            SchemeKind::RandomSparse => &["p", "density", "seed"],
            SchemeKind::PreOrth => &["indices"],
        };
        for (key, set) in present {
            if set && !allowed.contains(&key) {
                return Err(Error::Parse(format!("b_scheme: key `{key}` does not apply to scheme {:?}", self.b)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct Analyses {
    #[serde(default)]
    pub certificates: bool,
    #[serde(default)]
    pub overlap: bool,
    #[serde(default)]
    pub coherence: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(rename = "forward_N")]
    pub forward_n: usize,
    #[serde(rename = "inverse_N")]
    pub inverse_n: usize,
    /// Same grid for data and inversion, on purpose.
    #[serde(default)]
    pub inverse_crime: bool,
    pub epsilon: f64,
    pub sources: Vec<SourceSpec>,
    pub b_scheme: SchemeSpec,
    /// Use `W = I` instead of the column norms of `C`.
    #[serde(default)]
    pub unweighted: bool,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverOverrides>,
    #[serde(default)]
    pub analyses: Analyses,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}

impl ScenarioConfig {
    /// Solver settings with the scenario's `alpha` and overrides applied.
    pub fn solver_config(&self) -> SolverConfig {
        let mut cfg = SolverConfig::with_alpha(self.alpha);
        if let Some(o) = &self.solver {
            if let Some(m) = o.max_iter {
                cfg.max_iterations = m;
            }
            if let Some(t) = o.tol {
                cfg.rel_tolerance = t;
            }
        }
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Validation(msg));
        if self.name.trim().is_empty() {
            return fail("name must not be empty".into());
        }
        if self.inverse_n < 2 {
            return fail(format!("inverse_N = {} must be at least 2", self.inverse_n));
        }
        if self.forward_n < self.inverse_n {
            return fail(format!("forward_N = {} is smaller than inverse_N = {}", self.forward_n, self.inverse_n));
        }
        if self.forward_n % self.inverse_n != 0 {
            return fail(format!("forward_N = {} is not a multiple of inverse_N = {}", self.forward_n, self.inverse_n));
        }
        if self.inverse_crime != (self.forward_n == self.inverse_n) {
            return fail("equal grids are allowed only with inverse_crime = true, and inverse_crime requires them".into());
        }
        if !self.epsilon.is_finite() {
            return fail("epsilon must be finite".into());
        }
        if self.sources.is_empty() {
            return fail("at least one source is required".into());
        }
        for (k, s) in self.sources.iter().enumerate() {
            let [x, y] = s.location;
            if !((0.0..=1.0).contains(&x) && (0.0..=1.0).contains(&y)) {
                return fail(format!("source {k}: location ({x}, {y}) lies outside the unit square"));
            }
            if !s.amplitude.is_finite() {
                return fail(format!("source {k}: amplitude must be finite"));
            }
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return fail(format!("alpha = {} must be positive", self.alpha));
        }
        if !(self.noise.level >= 0.0 && self.noise.level.is_finite()) {
            return fail(format!("noise level {} must be a non-negative number", self.noise.level));
        }
        if let Some(o) = &self.solver {
            if o.max_iter == Some(0) {
                return fail("solver.max_iter must be positive".into());
            }
            if o.tol.is_some_and(|t| !(t > 0.0)) {
                return fail("solver.tol must be positive".into());
            }
        }
        let b = &self.b_scheme;
        if b.k == Some(0) || b.p == Some(0) {
            return fail("b_scheme: k and p must be positive".into());
        }
        if b.density.is_some_and(|d| !(d > 0.0 && d <= 1.0)) {
            return fail("b_scheme: density must lie in (0, 1]".into());
        }
        if b.indices.as_ref().is_some_and(|v| v.is_empty()) {
            return fail("b_scheme: indices must not be empty".into());
        }
        Ok(())
    }

    /// Directory for artifacts when none is given on the command line.
    pub fn default_output_dir(&self) -> PathBuf {
        self.output_dir.clone().unwrap_or_else(|| PathBuf::from("out").join(&self.name))
    }
}

/// Parses and validates a scenario document.
pub fn parse_scenario(text: &str) -> Result<ScenarioConfig> {
    let cfg: ScenarioConfig = serde_json::from_str(text)
        .map_err(|e| Error::Parse(format!("{e} (line {}, column {})", e.line(), e.column())))?;
    cfg.b_scheme.check_keys()?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_scenario(path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_scenario(&text).map_err(|e| match e {
        Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
        Error::Validation(m) => Error::Validation(format!("{}: {m}", path.display())),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "name": "t", "forward_N": 32, "inverse_N": 16, "epsilon": 1.0,
        "sources": [{"location": [0.5, 0.5], "amplitude": 1.0}],
        "b_scheme": {"b": "identity"}
    }"#;

    fn with(key: &str, value: &str) -> String {
        let mut v: serde_json::Value = serde_json::from_str(MINIMAL).unwrap();
        v[key] = serde_json::from_str(value).unwrap();
        v.to_string()
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = parse_scenario(MINIMAL).unwrap();
        assert_eq!(cfg.alpha, 1e-4);
        assert_eq!(cfg.noise.level, 0.0);
        assert!(!cfg.inverse_crime && !cfg.unweighted);
        let solver = cfg.solver_config();
        assert_eq!(solver, SolverConfig::default());
    }

    #[test]
    fn grid_invariants() {
        let bad = with("forward_N", "100").replace("\"inverse_N\":16", "\"inverse_N\":64");
        assert!(matches!(parse_scenario(&bad), Err(Error::Validation(_))));
        assert!(matches!(parse_scenario(&with("forward_N", "16")), Err(Error::Validation(_))));
        let crime = with("forward_N", "16");
        let mut v: serde_json::Value = serde_json::from_str(&crime).unwrap();
        v["inverse_crime"] = true.into();
        assert!(parse_scenario(&v.to_string()).is_ok());
        assert!(matches!(parse_scenario(&with("inverse_crime", "true")), Err(Error::Validation(_))));
    }

    #[test]
    fn unknown_keys_fail_closed() {
        assert!(matches!(parse_scenario(&with("alpha_max", "1.0")), Err(Error::Parse(m)) if m.contains("alpha_max")));
        assert!(matches!(parse_scenario(&with("b_scheme", r#"{"b":"identity","k":3}"#)), Err(Error::Parse(_))));
        assert!(matches!(parse_scenario(&with("b_scheme", r#"{"b":"trunc_pinv","q":3}"#)), Err(Error::Parse(_))));
        assert!(matches!(parse_scenario(&with("noise", r#"{"level":0.1,"sigma":1}"#)), Err(Error::Parse(_))));
        assert!(matches!(parse_scenario(&with("solver", r#"{"max_iter":10,"kkt":1}"#)), Err(Error::Parse(_))));
        assert!(matches!(parse_scenario(&with("b_scheme", r#"{"b":"svd"}"#)), Err(Error::Parse(_))));
    }

    #[test]
    fn parse_errors_carry_position() {
        match parse_scenario("{\n \"name\": \"x\",\n \"forward_N\": true\n}") {
            Err(Error::Parse(m)) => assert!(m.contains("line 3"), "{m}"),
            other => panic!("expected a parse error, got {other:?}"),
        }
    }

    #[test]
    fn value_checks() {
        for (key, value) in [("alpha", "0.0"), ("inverse_N", "1"), ("sources", "[]"), ("noise", r#"{"level":-0.1}"#)] {
            assert!(parse_scenario(&with(key, value)).is_err(), "{key}");
        }
        let outside = with("sources", r#"[{"location":[1.5,0.2],"amplitude":1}]"#);
        assert!(matches!(parse_scenario(&outside), Err(Error::Validation(_))));
        let cfg = parse_scenario(&with("solver", r#"{"max_iter":7,"tol":1e-9}"#)).unwrap();
        assert_eq!(cfg.solver_config().max_iterations, 7);
        assert_eq!(cfg.solver_config().rel_tolerance, 1e-9);
    }
}
