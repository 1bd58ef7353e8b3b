use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::Context;
use extphase::dynamics::{
    constraint_drift, gauge_equivalence_error, gauge_grid, write_columns, IntegratorPolicy,
    SolveStats, Trajectory,
};
use extphase::invariants::{
    ermakov_residual, invariant_drift_report, lewis_invariant, solve_coupled, write_invariant_csv,
    DriftReport, ErmakovConfig, InvariantError,
};
use serde::Serialize;

use crate::config::LoadedScenario;
use crate::error::CliError;

#[derive(Clone, Debug, Serialize)]
pub struct SimulationSummary {
    pub scenario: String,
    pub policy: IntegratorPolicy,
    pub lambda: f64,
    pub equivalence_error: f64,
    pub max_phi: f64,
    pub max_eta_gauge: f64,
    pub original: SolveStats,
    pub extended: SolveStats,
}

impl SimulationSummary {
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "scenario: {}", self.scenario);
        let _ = writeln!(
            s,
            "integrator: {} (abs_tol {:e}, rel_tol {:e}, max_step {})",
            self.policy.method.name(),
            self.policy.abs_tol,
            self.policy.rel_tol,
            self.policy.max_step
        );
        let _ = writeln!(
            s,
            "gauge-equivalence error = {:.3e}",
            self.equivalence_error
        );
        let _ = writeln!(s, "max |phi| = {:.3e}", self.max_phi);
        let _ = writeln!(s, "max |eta_gauge| = {:.3e}", self.max_eta_gauge);
        for (name, st) in [("original", &self.original), ("extended", &self.extended)] {
            let _ = writeln!(
                s,
                "{name}: {} steps accepted, {} rejected, achieved local error {:.3e}",
                st.accepted, st.rejected, st.max_local_error
            );
        }
        s
    }
}

fn create(dir: &Path, name: &str) -> anyhow::Result<BufWriter<File>> {
    let path = dir.join(name);
    Ok(BufWriter::new(File::create(&path).with_context(|| {
        format!("cannot create {}", path.display())
    })?))
}

/// Creates `dir/name`, fills it with `body` and flushes it.
fn write_file(
    dir: &Path,
    name: &str,
    body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
) -> anyhow::Result<()> {
    let mut w = create(dir, name)?;
    body(&mut w)
        .and_then(|_| w.flush())
        .with_context(|| format!("writing {name}"))
}

fn write_trajectory(dir: &Path, name: &str, traj: &Trajectory) -> anyhow::Result<()> {
    write_file(dir, name, |w| traj.write_csv(w))
}

pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> anyhow::Result<()> {
    write_file(dir, name, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        w.write_all(b"\n")
    })
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Runs the original and the gauge-fixed extended dynamics and writes
/// `original.csv`, `extended.csv`, `drift.csv` and `summary.json` to `out`.
pub fn simulate(
    sc: &LoadedScenario,
    out: &Path,
    tol: Option<f64>,
) -> Result<SimulationSummary, CliError> {
    let osc = sc.oscillator()?;
    let gauge = sc.gauge()?;
    let grid = sc.time_grid()?;
    let policy = sc.policy(tol)?;
    let init = sc.scenario.initial.state();
    let name = sc.path.display().to_string();

    let orig = osc
        .integrate_original(&init, &grid, &policy)
        .with_context(|| format!("{name}: original run failed"))?;
    let y0 = osc
        .extended_initial(&gauge, &init)
        .with_context(|| format!("{name}: extended initial state"))?;
    let ext = osc
        .integrate_extended(&gauge, &y0, &gauge_grid(&gauge, &grid), &policy)
        .with_context(|| format!("{name}: extended run failed"))?;
    let drift = constraint_drift(
        &ext,
        &[osc.constraint().clone(), gauge.eta_gauge()],
        osc.registry(),
        osc.params(),
    )
    .with_context(|| format!("{name}: constraint drift"))?;
    let equivalence_error =
        gauge_equivalence_error(&orig, &ext).with_context(|| format!("{name}: comparison"))?;

    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    write_trajectory(out, "original.csv", &orig)?;
    write_trajectory(out, "extended.csv", &ext)?;
    write_file(out, "drift.csv", |w| {
        write_columns(w, "tau", ext.grid(), &["phi", "eta_gauge"], &drift)
    })?;

    let summary = SimulationSummary {
        scenario: name,
        policy,
        lambda: gauge.lambda_f64(),
        equivalence_error,
        max_phi: max_abs(&drift[0]),
        max_eta_gauge: max_abs(&drift[1]),
        original: orig.meta().stats,
        extended: ext.meta().stats,
    };
    write_json(out, "summary.json", &summary)?;
    Ok(summary)
}

#[derive(Clone, Debug, Serialize)]
pub struct InvariantSummary {
    pub scenario: String,
    pub policy: IntegratorPolicy,
    pub ermakov: ErmakovConfig,
    pub initial_invariant: f64,
    pub drift: DriftReport,
    pub ermakov_residual: Option<f64>,
}

impl InvariantSummary {
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "scenario: {}", self.scenario);
        let e = &self.ermakov;
        let _ = writeln!(
            s,
            "nu = {}, rho0 = {}, rho_dot0 = {}",
            e.nu, e.rho0, e.rho_dot0
        );
        let _ = writeln!(s, "I(t1) = {:.12e}", self.initial_invariant);
        let kind = if self.drift.relative {
            "relative"
        } else {
            "absolute"
        };
        let _ = writeln!(
            s,
            "max {kind} drift of I = {:.3e} at t = {}",
            self.drift.max_drift, self.drift.at
        );
        if let Some(r) = self.ermakov_residual {
            let _ = writeln!(s, "auxiliary-equation residual = {r:.3e}");
        }
        s
    }
}

/// Integrates the oscillator with the auxiliary function and writes
/// `invariant.csv` and `summary.json` to `out`.
pub fn invariant(
    sc: &LoadedScenario,
    out: &Path,
    tol: Option<f64>,
) -> Result<InvariantSummary, CliError> {
    let osc = sc.oscillator()?;
    let grid = sc.time_grid()?;
    let policy = sc.policy(tol)?;
    let cfg = sc.ermakov(&osc)?;
    let name = sc.path.display().to_string();

    let (traj, sol) = match solve_coupled(&osc, &cfg, &sc.scenario.initial.state(), &grid, &policy)
    {
        Ok(r) => r,
        Err(InvariantError::Collapse { last_valid, reason }) => {
            return Err(CliError::CheckFailed(format!(
                "{name}: auxiliary function collapsed ({reason}); last valid t = {last_valid}"
            )))
        }
        Err(e) => {
            return Err(anyhow::Error::new(e)
                .context(format!("{name}: invariant run failed"))
                .into())
        }
    };
    let values =
        lewis_invariant(&traj, &sol, &osc, cfg.nu).with_context(|| format!("{name}: invariant"))?;
    let drift = invariant_drift_report(&grid, &values);
    let residual = ermakov_residual(&sol, &osc, cfg.nu).ok();

    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    write_file(out, "invariant.csv", |w| {
        write_invariant_csv(w, &sol, &values)
    })?;
    let summary = InvariantSummary {
        scenario: name,
        policy,
        ermakov: cfg,
        initial_invariant: values[0],
        drift,
        ermakov_residual: residual,
    };
    write_json(out, "summary.json", &summary)?;
    Ok(summary)
}
