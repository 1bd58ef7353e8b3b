//! The Ermakov-Pinney auxiliary equation
//! `ρ'' + η ρ' + ω² ρ = ν² f² / (m² ρ³)` and the classical Lewis-Riesenfeld
//! invariant built from its solution.

use std::io::{self, Write};

use serde::Serialize;
use thiserror::Error;

use crate::brackets::EquationsOfMotion;
use crate::dynamics::{
    solve, write_columns, DynamicsError, IntegratorPolicy, Oscillator, SolveStats, Trajectory,
};
use crate::expr::{Bindings, CompiledSystem, EvalError, PhaseExpr, Registry, SymbolKind};
use crate::numeric::CubicSpline;

const ERMAKOV_RHO: &str = "sigma";
const ERMAKOV_SIGMA: &str = "-eta_fric(t)*sigma - w(t)^2*rho + nu^2*f(t)^2*m^-2*rho^-3";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InvariantError {
    #[error("invalid Ermakov configuration: {0}")]
    Config(String),
    #[error("auxiliary solution collapsed after t = {last_valid}: {reason}")]
    Collapse { last_valid: f64, reason: String },
    #[error("trajectory and auxiliary solution cannot be aligned at t = {0}")]
    GridMismatch(f64),
    #[error("finite-difference residual needs a uniform grid with at least five points")]
    Stencil,
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Strength `ν` and initial data of the auxiliary function.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ErmakovConfig {
    pub nu: f64,
    pub rho0: f64,
    pub rho_dot0: f64,
}

impl ErmakovConfig {
    pub fn new(nu: f64, rho0: f64, rho_dot0: f64) -> Result<Self, InvariantError> {
        let cfg = Self { nu, rho0, rho_dot0 };
        cfg.validate()?;
        Ok(cfg)
    }

    /// `ν = m ω(t0) ρ0² / f(t0)` with `ρ'(t0) = 0`: the constant solution when
    /// friction vanishes and the frequency is constant.
    pub fn equilibrium(osc: &Oscillator, t0: f64, rho0: f64) -> Result<Self, InvariantError> {
        let b = osc.params().clone().with("t", t0);
        let omega =
            osc.registry()
                .parse("w(t)")
                .expect("declared atom")
                .eval(osc.registry(), &b, t0)?;
        let f =
            osc.registry()
                .parse("f(t)")
                .expect("declared atom")
                .eval(osc.registry(), &b, t0)?;
        Self::new(osc.mass() * omega * rho0 * rho0 / f, rho0, 0.0)
    }

    pub fn validate(&self) -> Result<(), InvariantError> {
        if !(self.nu.is_finite() && self.nu >= 0.0) {
            return Err(InvariantError::Config(format!(
                "nu must be finite and non-negative, got {}",
                self.nu
            )));
        }
        if !(self.rho0.is_finite() && self.rho0 > 0.0) {
            return Err(InvariantError::Config(format!(
                "rho0 must be positive, got {}",
                self.rho0
            )));
        }
        if !self.rho_dot0.is_finite() {
            return Err(InvariantError::Config("rho_dot0 must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ErmakovSolution {
    pub grid: Vec<f64>,
    pub rho: Vec<f64>,
    pub rho_dot: Vec<f64>,
    pub stats: SolveStats,
}

fn ermakov_registry(osc: &Oscillator) -> Registry {
    let mut reg = osc.registry().clone();
    for s in ["rho", "sigma"] {
        reg.declare(s, SymbolKind::Canonical).expect("fresh names");
    }
    reg
}

fn ermakov_rows(reg: &Registry) -> [PhaseExpr; 2] {
    [
        reg.parse(ERMAKOV_RHO).expect("valid expression"),
        reg.parse(ERMAKOV_SIGMA).expect("valid expression"),
    ]
}

fn collapse(last_valid: f64, e: DynamicsError) -> InvariantError {
    match e {
        DynamicsError::Policy(_)
        | DynamicsError::Grid
        | DynamicsError::EmptySpan
        | DynamicsError::Shape => InvariantError::Dynamics(e),
        other => InvariantError::Collapse {
            last_valid,
            reason: other.to_string(),
        },
    }
}

/// Runs the given equations with a positivity guard on the state slot `rho_at`.
fn run_guarded(
    eom: &EquationsOfMotion,
    reg: &Registry,
    params: &Bindings,
    init: &[f64],
    grid: &[f64],
    policy: &IntegratorPolicy,
    rho_at: usize,
) -> Result<(Vec<Vec<f64>>, SolveStats), InvariantError> {
    let layout: Vec<&str> = eom.vars().iter().map(String::as_str).collect();
    let sys = CompiledSystem::new(eom.rhs(), reg, &layout, params, "t")
        .map_err(DynamicsError::Compile)?;
    let mut last_valid = grid.first().copied().unwrap_or(0.0);
    let result = solve(
        |t, y, out| sys.eval_into(t, y, out),
        init,
        grid,
        policy,
        |t, y| {
            if y[rho_at] > 0.0 {
                last_valid = t;
                Ok(())
            } else {
                Err(DynamicsError::NonFinite { at: t })
            }
        },
    );
    result.map_err(|e| match e {
        DynamicsError::NonFinite { at } if at > last_valid => InvariantError::Collapse {
            last_valid,
            reason: format!("rho reached zero near t = {at}"),
        },
        other => collapse(last_valid, other),
    })
}

fn params_with_nu(osc: &Oscillator, cfg: &ErmakovConfig) -> Bindings {
    osc.params().clone().with("nu", cfg.nu)
}

/// Solves the auxiliary equation alone over `grid` (in `t`).
pub fn solve_ermakov(
    osc: &Oscillator,
    cfg: &ErmakovConfig,
    grid: &[f64],
    policy: &IntegratorPolicy,
) -> Result<ErmakovSolution, InvariantError> {
    cfg.validate()?;
    let reg = ermakov_registry(osc);
    let eom = EquationsOfMotion::new(
        vec!["rho".into(), "sigma".into()],
        ermakov_rows(&reg).to_vec(),
    );
    let (states, stats) = run_guarded(
        &eom,
        &reg,
        &params_with_nu(osc, cfg),
        &[cfg.rho0, cfg.rho_dot0],
        grid,
        policy,
        0,
    )?;
    Ok(ErmakovSolution {
        grid: grid.to_vec(),
        rho: states.iter().map(|s| s[0]).collect(),
        rho_dot: states.iter().map(|s| s[1]).collect(),
        stats,
    })
}

/// Oscillator and auxiliary function integrated as one system on one grid.
pub fn solve_coupled(
    osc: &Oscillator,
    cfg: &ErmakovConfig,
    init: &[f64; 4],
    grid: &[f64],
    policy: &IntegratorPolicy,
) -> Result<(Trajectory, ErmakovSolution), InvariantError> {
    cfg.validate()?;
    let reg = ermakov_registry(osc);
    let base = osc.original_eom()?;
    let mut vars = base.vars().to_vec();
    let mut rhs = base.rhs().to_vec();
    vars.extend(["rho".to_string(), "sigma".to_string()]);
    rhs.extend(ermakov_rows(&reg));
    let eom = EquationsOfMotion::new(vars, rhs);
    let y0 = [init[0], init[1], init[2], init[3], cfg.rho0, cfg.rho_dot0];
    let (states, stats) = run_guarded(&eom, &reg, &params_with_nu(osc, cfg), &y0, grid, policy, 4)?;
    let osc_states: Vec<Vec<f64>> = states.iter().map(|s| s[..4].to_vec()).collect();
    let meta = crate::dynamics::TrajectoryMeta {
        integrator: policy.method.name().to_string(),
        policy: *policy,
        stats,
    };
    let traj =
        Trajectory::from_states("t", grid.to_vec(), base.vars().to_vec(), &osc_states, meta)?;
    let sol = ErmakovSolution {
        grid: grid.to_vec(),
        rho: states.iter().map(|s| s[4]).collect(),
        rho_dot: states.iter().map(|s| s[5]).collect(),
        stats,
    };
    Ok((traj, sol))
}

fn same_grid(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len()
        && a.iter()
            .zip(b)
            .all(|(x, y)| (x - y).abs() <= 1e-12 * x.abs().max(1.0))
}

/// `I = ½ Σ_i [(m f⁻¹ ρ' x_i − ρ p_i)² + ν² x_i² / ρ²]` at each trajectory point.
/// The auxiliary solution is spline-interpolated when the grids differ.
pub fn lewis_invariant(
    traj: &Trajectory,
    sol: &ErmakovSolution,
    osc: &Oscillator,
    nu: f64,
) -> Result<Vec<f64>, InvariantError> {
    let aligned = same_grid(traj.grid(), &sol.grid);
    let splines = if aligned {
        None
    } else {
        let s = |y: &[f64]| {
            CubicSpline::new(sol.grid.clone(), y.to_vec())
                .map_err(|_| InvariantError::GridMismatch(sol.grid[0]))
        };
        Some((s(&sol.rho)?, s(&sol.rho_dot)?))
    };
    let col = |v: &str| {
        traj.series(v)
            .ok_or_else(|| DynamicsError::UnknownVariable(v.to_string()))
    };
    let (x1, x2, p1, p2) = (col("x1")?, col("x2")?, col("p1")?, col("p2")?);
    let f_expr = osc.registry().parse("f(t)").expect("declared atom");
    let m = osc.mass();
    let mut out = Vec::with_capacity(traj.len());
    for (k, &t) in traj.grid().iter().enumerate() {
        let (rho, rho_dot) = match &splines {
            None => (sol.rho[k], sol.rho_dot[k]),
            Some((r, rd)) => (
                r.eval(t, 0).map_err(|_| InvariantError::GridMismatch(t))?,
                rd.eval(t, 0).map_err(|_| InvariantError::GridMismatch(t))?,
            ),
        };
        let f = f_expr.eval(osc.registry(), &Bindings::new().with("t", t), t)?;
        let part = |x: f64, p: f64| {
            let a = m / f * rho_dot * x - rho * p;
            a * a + nu * nu * x * x / (rho * rho)
        };
        out.push(0.5 * (part(x1[k], p1[k]) + part(x2[k], p2[k])));
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DriftReport {
    /// `max |I − I₀| / |I₀|`, or the absolute drift when `I₀ = 0`.
    pub max_drift: f64,
    pub at: f64,
    pub relative: bool,
}

pub fn invariant_drift_report(grid: &[f64], values: &[f64]) -> DriftReport {
    let Some(&i0) = values.first() else {
        return DriftReport {
            max_drift: 0.0,
            at: 0.0,
            relative: false,
        };
    };
    let relative = i0 != 0.0;
    let scale = if relative { i0.abs() } else { 1.0 };
    let (mut max_drift, mut at) = (0.0, grid.first().copied().unwrap_or(0.0));
    for (&t, &v) in grid.iter().zip(values) {
        let d = (v - i0).abs() / scale;
        if d > max_drift {
            max_drift = d;
            at = t;
        }
    }
    DriftReport {
        max_drift,
        at,
        relative,
    }
}

/// Largest residual of the auxiliary equation on interior points, with `ρ''`
/// taken from fourth-order central differences of the `ρ'` series.
pub fn ermakov_residual(
    sol: &ErmakovSolution,
    osc: &Oscillator,
    nu: f64,
) -> Result<f64, InvariantError> {
    let g = &sol.grid;
    if g.len() < 5 {
        return Err(InvariantError::Stencil);
    }
    let h = g[1] - g[0];
    if g.windows(2)
        .any(|w| ((w[1] - w[0]) - h).abs() > 1e-9 * h.abs())
    {
        return Err(InvariantError::Stencil);
    }
    let reg = osc.registry();
    let coeff = |text: &str, t: f64| {
        reg.parse(text)
            .expect("declared atoms")
            .eval(reg, &Bindings::new().with("t", t), t)
    };
    let m = osc.mass();
    let (r, v) = (&sol.rho, &sol.rho_dot);
    let mut worst = 0.0f64;
    for k in 2..g.len() - 2 {
        let t = g[k];
        let d1 = v[k];
        let d2 = (v[k - 2] - 8.0 * v[k - 1] + 8.0 * v[k + 1] - v[k + 2]) / (12.0 * h);
        let (eta, w, f) = (
            coeff("eta_fric(t)", t)?,
            coeff("w(t)", t)?,
            coeff("f(t)", t)?,
        );
        let res = d2 + eta * d1 + w * w * r[k] - nu * nu * f * f / (m * m * r[k].powi(3));
        worst = worst.max(res.abs());
    }
    Ok(worst)
}

/// CSV with columns `t,rho,rho_dot,I`.
pub fn write_invariant_csv<W: Write>(
    mut w: W,
    sol: &ErmakovSolution,
    invariant: &[f64],
) -> io::Result<()> {
    write_columns(
        &mut w,
        "t",
        &sol.grid,
        &["rho", "rho_dot", "I"],
        &[sol.rho.clone(), sol.rho_dot.clone(), invariant.to_vec()],
    )
}
