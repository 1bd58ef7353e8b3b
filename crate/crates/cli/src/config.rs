//! Scenario documents in TOML.
//!
//! ```toml
//! [model]
//! kind = "extended"          # original | extended | custom
//!
//! [parameters]
//! m = 1.0
//! nu = 2.0                   # optional; see [ermakov]
//!
//! [profiles]
//! omega = 2.0                # constant, "1 + t/10", { rate = 0.1 } or { t = [...], values = [...] }
//! friction = 0.5
//!
//! [time]
//! t1 = 0.0
//! t2 = 10.0
//! samples = 200
//!
//! [gauge]
//! tau1 = 0.0
//! tau2 = 5.0
//!
//! [initial]
//! x1 = 1.0
//! x2 = 0.0
//! p1 = 0.0
//! p2 = 0.5
//!
//! [ermakov]
//! rho0 = 1.0
//! rho_dot0 = 0.0
//!
//! [integrator]
//! method = "rk45"            # rk45 | rk4
//! abs_tol = 1e-10
//! rel_tol = 1e-10
//! max_step = 0.1
//!
//! [output]
//! dir = "out"
//! ```
//!
//! A custom model names its own Lagrangian and variables:
//!
//! ```toml
//! [model]
//! kind = "custom"
//! lagrangian = "m/2*(x1dot^2 + x2dot^2)"
//! coordinates = ["x1", "x2"]
//! velocities = ["x1dot", "x2dot"]
//! momenta = ["p1", "p2"]
//! ```

use std::path::{Path, PathBuf};

use extphase::constraints::GaugeSpec;
use extphase::dynamics::{uniform_grid, IntegratorPolicy, Method, Oscillator};
use extphase::expr::{ExprProfile, Profile};
use extphase::invariants::ErmakovConfig;
use extphase::numeric::CubicSpline;
use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Original,
    #[default]
    Extended,
    Custom,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(default)]
    pub kind: ModelKind,
    pub lagrangian: Option<String>,
    pub coordinates: Option<Vec<String>>,
    pub velocities: Option<Vec<String>>,
    pub momenta: Option<Vec<String>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Parameters {
    #[serde(default = "one")]
    pub m: f64,
    pub nu: Option<f64>,
}

impl Default for Parameters {
    fn default() -> Self {
        Self { m: 1.0, nu: None }
    }
}

/// A coefficient function of `t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProfileSpec {
    Constant(f64),
    Expression(String),
    Exponential { rate: f64 },
    Table { t: Vec<f64>, values: Vec<f64> },
}

impl ProfileSpec {
    fn build(&self) -> Result<Profile, String> {
        match self {
            ProfileSpec::Constant(c) if c.is_finite() => Ok(Profile::Constant(*c)),
            ProfileSpec::Constant(c) => Err(format!("profile constant must be finite, got {c}")),
            ProfileSpec::Expression(text) => ExprProfile::new(text)
                .map(Profile::Expression)
                .map_err(|e| format!("profile `{text}`: {e}")),
            ProfileSpec::Exponential { rate } if rate.is_finite() => {
                Ok(Profile::Exponential { rate: *rate })
            }
            ProfileSpec::Exponential { rate } => {
                Err(format!("profile rate must be finite, got {rate}"))
            }
            ProfileSpec::Table { t, values } => CubicSpline::new(t.clone(), values.clone())
                .map(Profile::Tabulated)
                .map_err(|e| format!("profile table: {e}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Profiles {
    #[serde(default = "unit_profile")]
    pub omega: ProfileSpec,
    #[serde(default = "zero_profile")]
    pub friction: ProfileSpec,
}

impl Default for Profiles {
    fn default() -> Self {
        Self {
            omega: unit_profile(),
            friction: zero_profile(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSection {
    #[serde(default)]
    pub t1: f64,
    #[serde(default = "ten")]
    pub t2: f64,
    #[serde(default = "default_samples")]
    pub samples: usize,
}

impl Default for TimeSection {
    fn default() -> Self {
        Self {
            t1: 0.0,
            t2: 10.0,
            samples: default_samples(),
        }
    }
}

/// `tau` window mapped onto the `[time]` window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaugeSection {
    pub tau1: f64,
    pub tau2: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Initial {
    #[serde(default)]
    pub x1: f64,
    #[serde(default)]
    pub x2: f64,
    #[serde(default)]
    pub p1: f64,
    #[serde(default)]
    pub p2: f64,
}

impl Initial {
    pub fn state(&self) -> [f64; 4] {
        [self.x1, self.x2, self.p1, self.p2]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErmakovSection {
    #[serde(default = "one")]
    pub rho0: f64,
    #[serde(default)]
    pub rho_dot0: f64,
}

impl Default for ErmakovSection {
    fn default() -> Self {
        Self {
            rho0: 1.0,
            rho_dot0: 0.0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSection {
    pub method: Option<Method>,
    pub abs_tol: Option<f64>,
    pub rel_tol: Option<f64>,
    pub max_step: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub parameters: Parameters,
    #[serde(default)]
    pub profiles: Profiles,
    #[serde(default)]
    pub time: TimeSection,
    pub gauge: Option<GaugeSection>,
    #[serde(default)]
    pub initial: Initial,
    pub ermakov: Option<ErmakovSection>,
    #[serde(default)]
    pub integrator: IntegratorSection,
    #[serde(default)]
    pub output: OutputSection,
}

fn one() -> f64 {
    1.0
}

fn ten() -> f64 {
    10.0
}

fn default_samples() -> usize {
    200
}

fn unit_profile() -> ProfileSpec {
    ProfileSpec::Constant(1.0)
}

fn zero_profile() -> ProfileSpec {
    ProfileSpec::Constant(0.0)
}

/// 1-based line of `key` inside `[section]`, or of the section header.
pub fn locate(src: &str, section: &str, key: Option<&str>) -> Option<usize> {
    let mut current = String::new();
    let mut header = None;
    for (i, raw) in src.lines().enumerate() {
        let line = raw.trim();
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = name.trim().to_string();
            if current == section {
                header = Some(i + 1);
            }
            continue;
        }
        if current != section {
            continue;
        }
        if let Some(key) = key {
            if let Some(rest) = line.strip_prefix(key) {
                if rest.trim_start().starts_with('=') {
                    return Some(i + 1);
                }
            }
        }
    }
    header
}

/// 1-based line of a top-level `key`.
pub fn locate_top(src: &str, key: &str) -> Option<usize> {
    locate(src, "", Some(key))
}

fn line_of_offset(src: &str, offset: usize) -> usize {
    src[..offset.min(src.len())].matches('\n').count() + 1
}

/// Parses TOML text, reporting syntax and type errors with their line.
pub fn parse_toml<T: for<'de> Deserialize<'de>>(path: &Path, src: &str) -> Result<T, ConfigError> {
    toml::from_str(src).map_err(|e| {
        let line = e.span().map(|s| line_of_offset(src, s.start));
        ConfigError::new(path, line, e.message().trim().to_string())
    })
}

pub fn read(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path)
        .map_err(|e| ConfigError::new(path, None, format!("cannot read file: {e}")))
}

/// A validated scenario with its source for error reporting.
#[derive(Clone, Debug)]
pub struct LoadedScenario {
    pub path: PathBuf,
    pub source: String,
    pub scenario: Scenario,
}

impl LoadedScenario {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let source = read(path)?;
        Self::from_source(path, source)
    }

    pub fn from_source(path: &Path, source: String) -> Result<Self, ConfigError> {
        let scenario: Scenario = parse_toml(path, &source)?;
        let loaded = Self {
            path: path.to_path_buf(),
            source,
            scenario,
        };
        loaded.validate()?;
        Ok(loaded)
    }

    fn error(&self, section: &str, key: Option<&str>, message: impl Into<String>) -> ConfigError {
        ConfigError::new(&self.path, locate(&self.source, section, key), message)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let s = &self.scenario;
        if !(s.parameters.m.is_finite() && s.parameters.m > 0.0) {
            return Err(self.error(
                "parameters",
                Some("m"),
                format!("m must be positive, got {}", s.parameters.m),
            ));
        }
        if let Some(nu) = s.parameters.nu {
            if !(nu.is_finite() && nu >= 0.0) {
                return Err(self.error(
                    "parameters",
                    Some("nu"),
                    format!("nu must be non-negative, got {nu}"),
                ));
            }
        }
        if s.model.kind == ModelKind::Custom {
            let m = &s.model;
            if m.lagrangian.is_none()
                || m.coordinates.is_none()
                || m.velocities.is_none()
                || m.momenta.is_none()
            {
                return Err(self.error(
                    "model",
                    Some("kind"),
                    "a custom model needs lagrangian, coordinates, velocities and momenta",
                ));
            }
        }
        self.oscillator()?;
        self.time_grid()?;
        self.gauge()?;
        self.policy(None)?;
        if let Some(e) = &s.ermakov {
            if !(e.rho0.is_finite() && e.rho0 > 0.0) {
                return Err(self.error(
                    "ermakov",
                    Some("rho0"),
                    format!("rho0 must be positive, got {}", e.rho0),
                ));
            }
        }
        Ok(())
    }

    pub fn oscillator(&self) -> Result<Oscillator, ConfigError> {
        let p = &self.scenario.profiles;
        let omega = p
            .omega
            .build()
            .map_err(|m| self.error("profiles", Some("omega"), m))?;
        let friction = p
            .friction
            .build()
            .map_err(|m| self.error("profiles", Some("friction"), m))?;
        Oscillator::new(self.scenario.parameters.m, omega, friction)
            .map_err(|e| self.error("parameters", Some("m"), e.to_string()))
    }

    pub fn time_grid(&self) -> Result<Vec<f64>, ConfigError> {
        let t = &self.scenario.time;
        if !(t.t1.is_finite() && t.t2.is_finite()) {
            return Err(self.error("time", None, "t1 and t2 must be finite"));
        }
        if t.t2 == t.t1 {
            return Err(self.error("time", Some("t2"), "empty span: t2 equals t1"));
        }
        if t.t2 < t.t1 {
            return Err(self.error("time", Some("t2"), "time window needs t2 > t1"));
        }
        if t.samples == 0 {
            return Err(self.error("time", Some("samples"), "samples must be at least 1"));
        }
        Ok(uniform_grid(t.t1, t.t2, t.samples))
    }

    /// The configured window, or `tau = t` over the time window when absent.
    pub fn gauge(&self) -> Result<GaugeSpec, ConfigError> {
        let t = &self.scenario.time;
        let (tau1, tau2) = match &self.scenario.gauge {
            Some(g) => (g.tau1, g.tau2),
            None => (t.t1, t.t2),
        };
        GaugeSpec::new(tau1, tau2, t.t1, t.t2)
            .map_err(|e| self.error("gauge", Some("tau2"), e.to_string()))
    }

    /// Integrator settings; `tol` overrides both tolerances.
    pub fn policy(&self, tol: Option<f64>) -> Result<IntegratorPolicy, ConfigError> {
        let i = &self.scenario.integrator;
        let d = IntegratorPolicy::default();
        let policy = IntegratorPolicy {
            method: i.method.unwrap_or(d.method),
            abs_tol: tol.or(i.abs_tol).unwrap_or(d.abs_tol),
            rel_tol: tol.or(i.rel_tol).unwrap_or(d.rel_tol),
            max_step: i.max_step.unwrap_or(d.max_step),
        };
        policy
            .validate()
            .map_err(|e| self.error("integrator", None, e.to_string()))?;
        Ok(policy)
    }

    /// `nu` from `[parameters]`, or the equilibrium value for `rho0`.
    pub fn ermakov(&self, osc: &Oscillator) -> Result<ErmakovConfig, ConfigError> {
        let e = self.scenario.ermakov.clone().unwrap_or_default();
        let cfg = match self.scenario.parameters.nu {
            Some(nu) => ErmakovConfig::new(nu, e.rho0, e.rho_dot0),
            None => ErmakovConfig::equilibrium(osc, self.scenario.time.t1, e.rho0).map(|c| {
                ErmakovConfig {
                    rho_dot0: e.rho_dot0,
                    ..c
                }
            }),
        };
        cfg.map_err(|err| self.error("ermakov", None, err.to_string()))
    }

    pub fn output_dir(&self, flag: Option<&Path>) -> PathBuf {
        flag.map(Path::to_path_buf)
            .or_else(|| self.scenario.output.dir.clone())
            .unwrap_or_else(|| PathBuf::from("out"))
    }
}
