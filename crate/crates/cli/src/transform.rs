//! Transform specifications in TOML:
//!
//! ```toml
//! A1 = "Q1 + Q1^3*T/10"
//! A2 = "2*Q2"
//! B = "T + T^3/5"
//! D1 = "Q1^2*T"
//! D2 = "0"
//! # optional overrides: C1, C2 (replace 1/A_i'), F (replaces the completed F), G (added to F)
//!
//! [sampling]
//! seed = 7
//! half_width = 1.0
//! ```

use std::fmt::Write as _;
use std::path::Path;

use anyhow::Context;
use extphase::canonical::{complete, registry, symplectic_defect, TransformSpec};
use extphase::constraints::PointSampler;
use serde::{Deserialize, Serialize};

use crate::config::{locate_top, parse_toml, read};
use crate::error::{CliError, ConfigError};
use crate::simulate::write_json;

/// Threshold on the symplectic defect and the ODE residuals.
pub const DEFAULT_THRESHOLD: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sampling {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_half_width")]
    pub half_width: f64,
}

impl Default for Sampling {
    fn default() -> Self {
        Self {
            seed: default_seed(),
            half_width: default_half_width(),
        }
    }
}

fn default_seed() -> u64 {
    7
}

fn default_half_width() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformFile {
    #[serde(rename = "A1")]
    pub a1: String,
    #[serde(rename = "A2")]
    pub a2: String,
    #[serde(rename = "B")]
    pub b: String,
    #[serde(rename = "D1", default = "zero")]
    pub d1: String,
    #[serde(rename = "D2", default = "zero")]
    pub d2: String,
    #[serde(rename = "C1")]
    pub c1: Option<String>,
    #[serde(rename = "C2")]
    pub c2: Option<String>,
    #[serde(rename = "F")]
    pub f: Option<String>,
    #[serde(rename = "G")]
    pub g: Option<String>,
    #[serde(default)]
    pub sampling: Sampling,
}

fn zero() -> String {
    "0".into()
}

impl TransformFile {
    pub fn spec(&self, path: &Path, src: &str) -> Result<TransformSpec, ConfigError> {
        let reg = registry();
        let parse = |key: &str, text: &str| {
            reg.parse(text)
                .map_err(|e| ConfigError::new(path, locate_top(src, key), format!("{key}: {e}")))
        };
        let mut spec = TransformSpec::new(
            parse("A1", &self.a1)?,
            parse("A2", &self.a2)?,
            parse("B", &self.b)?,
            parse("D1", &self.d1)?,
            parse("D2", &self.d2)?,
        );
        spec.c1 = self.c1.as_deref().map(|t| parse("C1", t)).transpose()?;
        spec.c2 = self.c2.as_deref().map(|t| parse("C2", t)).transpose()?;
        spec.f = self.f.as_deref().map(|t| parse("F", t)).transpose()?;
        spec.g = self.g.as_deref().map(|t| parse("G", t)).transpose()?;
        spec.validate()
            .map_err(|e| ConfigError::new(path, None, e.to_string()))?;
        if !(self.sampling.half_width.is_finite() && self.sampling.half_width > 0.0) {
            return Err(ConfigError::new(
                path,
                crate::config::locate(src, "sampling", Some("half_width")),
                "half_width must be positive",
            ));
        }
        Ok(spec)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TransformReport {
    pub spec: String,
    pub points: usize,
    pub threshold: f64,
    pub symbolic_integrals: bool,
    pub defect: f64,
    pub max_ode_residual: f64,
    pub passed: bool,
}

impl TransformReport {
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "spec: {}", self.spec);
        let _ = writeln!(
            s,
            "integrals: {}",
            if self.symbolic_integrals {
                "symbolic"
            } else {
                "quadrature"
            }
        );
        let _ = writeln!(
            s,
            "symplectic defect = {:.3e} over {} points",
            self.defect, self.points
        );
        let _ = writeln!(s, "max ODE residual = {:.3e}", self.max_ode_residual);
        let _ = writeln!(
            s,
            "{} (threshold {:e})",
            if self.passed { "PASS" } else { "FAIL" },
            self.threshold
        );
        s
    }
}

/// Samples `points` states, measures `max |MᵀJM − J|` and the ODE residuals,
/// and writes `summary.json` to `out`. A failed check is reported through
/// [`CliError::CheckFailed`] after the report has been produced.
pub fn transform_check(
    path: &Path,
    points: usize,
    threshold: Option<f64>,
    out: &Path,
) -> Result<(TransformReport, Result<(), CliError>), CliError> {
    let src = read(path)?;
    let file: TransformFile = parse_toml(path, &src)?;
    let spec = file.spec(path, &src)?;
    if points == 0 {
        return Err(ConfigError::new(path, None, "--points must be at least 1").into());
    }
    let threshold = threshold.unwrap_or(DEFAULT_THRESHOLD);
    let name = path.display().to_string();
    let tr = complete(&spec).map_err(|e| CliError::CheckFailed(format!("{name}: {e}")))?;
    let mut sampler = PointSampler::new(file.sampling.seed);
    let w = file.sampling.half_width;
    let pts: Vec<[f64; 6]> = (0..points)
        .map(|_| std::array::from_fn(|_| sampler.uniform(-w, w)))
        .collect();
    let defect =
        symplectic_defect(&tr, &pts).map_err(|e| CliError::CheckFailed(format!("{name}: {e}")))?;
    let mut max_res = 0.0f64;
    for p in &pts {
        let r = tr
            .ode_residuals(p)
            .map_err(|e| CliError::CheckFailed(format!("{name}: {e}")))?;
        max_res = r.iter().fold(max_res, |m, x| m.max(x.abs()));
    }
    let passed = defect < threshold && max_res < threshold;
    let report = TransformReport {
        spec: name.clone(),
        points,
        threshold,
        symbolic_integrals: tr.is_symbolic(),
        defect,
        max_ode_residual: max_res,
        passed,
    };
    std::fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    write_json(out, "summary.json", &report)?;
    let verdict = if passed {
        Ok(())
    } else {
        Err(CliError::CheckFailed(format!(
            "{name}: symplectic defect {defect:.3e}, ODE residual {max_res:.3e} (threshold {threshold:e})"
        )))
    };
    Ok((report, verdict))
}
