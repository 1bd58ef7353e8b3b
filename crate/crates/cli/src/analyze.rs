use std::fmt::Write as _;

use anyhow::Context;
use extphase::brackets::{dirac, poisson, ConstraintMatrix};
use extphase::constraints::{
    classify, hessian, legendre, secondary_search, ConstraintClass, ConstraintSet, LagrangianModel,
};
use extphase::expr::{PhaseExpr, Registry, SymbolKind};
use serde::Serialize;

use crate::config::{LoadedScenario, ModelKind};
use crate::error::CliError;

#[derive(Clone, Debug, Serialize)]
pub struct ClassifiedConstraint {
    pub name: String,
    pub expression: String,
    pub class: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct BracketEntry {
    pub left: String,
    pub right: String,
    pub value: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct GaugeAnalysis {
    pub lambda: String,
    pub eta_gauge: String,
    pub classification: Vec<ClassifiedConstraint>,
    pub delta: String,
    pub inverse: String,
    pub dirac_brackets: Vec<BracketEntry>,
    /// The general formula agrees with the two-constraint form on every pair.
    pub two_constraint_form_agrees: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct AnalysisReport {
    pub model: String,
    pub lagrangian: String,
    pub hessian_det: String,
    pub rank: usize,
    pub momenta: Vec<BracketEntry>,
    pub hamiltonian: String,
    pub canonical_hamiltonian: String,
    pub classification: Vec<ClassifiedConstraint>,
    pub secondary_passes: usize,
    pub gauge: Option<GaugeAnalysis>,
}

fn model_for(sc: &LoadedScenario, reg: &mut Registry) -> Result<LagrangianModel, CliError> {
    let m = &sc.scenario.model;
    let built = match m.kind {
        ModelKind::Original => LagrangianModel::original(reg),
        ModelKind::Extended => LagrangianModel::extended(reg),
        ModelKind::Custom => {
            let (coords, vels, moms) = (
                m.coordinates.clone().unwrap_or_default(),
                m.velocities.clone().unwrap_or_default(),
                m.momenta.clone().unwrap_or_default(),
            );
            for (names, kind) in [
                (&coords, SymbolKind::Canonical),
                (&vels, SymbolKind::Velocity),
                (&moms, SymbolKind::Canonical),
            ] {
                for n in names {
                    if reg.kind(n).is_none() {
                        reg.declare(n, kind).map_err(|e| anyhow::anyhow!("{e}"))?;
                    }
                }
            }
            let text = m.lagrangian.clone().unwrap_or_default();
            let l = reg.parse(&text).map_err(|e| {
                crate::error::ConfigError::new(
                    &sc.path,
                    crate::config::locate(&sc.source, "model", Some("lagrangian")),
                    format!("lagrangian: {e}"),
                )
            })?;
            LagrangianModel::new(&coords, &vels, &moms, l, reg)
        }
    };
    built.map_err(|e| {
        crate::error::ConfigError::new(
            &sc.path,
            crate::config::locate(&sc.source, "model", Some("kind")),
            e.to_string(),
        )
        .into()
    })
}

fn names(n: usize, prefix: &str) -> Vec<String> {
    if n == 1 {
        vec![prefix.to_string()]
    } else {
        (1..=n).map(|i| format!("{prefix}{i}")).collect()
    }
}

fn labelled(
    exprs: &[PhaseExpr],
    names: &[String],
    labels: &[ConstraintClass],
) -> Vec<ClassifiedConstraint> {
    exprs
        .iter()
        .zip(names)
        .zip(labels)
        .map(|((e, n), c)| ClassifiedConstraint {
            name: n.clone(),
            expression: e.to_string(),
            class: c.to_string(),
        })
        .collect()
}

pub fn analyze(sc: &LoadedScenario) -> Result<AnalysisReport, CliError> {
    let mut reg = Registry::oscillator();
    let model = model_for(sc, &mut reg)?;
    let chart = model.chart();
    let h = hessian(&model, &reg);
    let leg = legendre(&model, &reg).context("Legendre transform")?;
    let mut cs = ConstraintSet::from_legendre(&leg);
    let search = secondary_search(&cs, &chart, &reg).context("consistency conditions")?;
    cs.secondaries = search.secondaries.clone();
    let classified = classify(&cs, &chart, &reg).context("classification")?;
    let all = classified.all();
    let phi_names = names(all.len(), "phi");
    let classification = labelled(&all, &phi_names, classified.labels());

    let has_first_class = classified.labels().contains(&ConstraintClass::First);
    let gauge = if has_first_class && chart.contains("t") && chart.contains("pt") {
        let spec = sc.gauge()?;
        let gauged = classify(&cs.clone().with_gauge(spec.clone()), &chart, &reg)
            .context("classification with gauge")?;
        let gall = gauged.all();
        let mut gnames = names(gall.len() - 1, "phi");
        gnames.push("eta_gauge".into());
        let cm = ConstraintMatrix::new(gall.clone(), &chart, &reg).context("constraint matrix")?;
        let vars = chart.variables();
        let mut entries = Vec::new();
        let mut agrees = true;
        for (i, a) in vars.iter().enumerate() {
            for b in &vars[i + 1..] {
                let (fa, fb) = (PhaseExpr::symbol(a), PhaseExpr::symbol(b));
                let db = dirac(&fa, &fb, &cm, &chart, &reg).context("Dirac bracket")?;
                if gall.len() == 2 {
                    agrees &=
                        db == two_constraint_form(&fa, &fb, &gall[0], &gall[1], &chart, &reg)?;
                }
                if !db.is_zero() {
                    entries.push(BracketEntry {
                        left: a.to_string(),
                        right: b.to_string(),
                        value: db.to_string(),
                    });
                }
            }
        }
        Some(GaugeAnalysis {
            lambda: spec.lambda().to_string(),
            eta_gauge: spec.eta_gauge().to_string(),
            classification: labelled(&gall, &gnames, gauged.labels()),
            delta: cm.delta().to_string(),
            inverse: cm.inverse().to_string(),
            dirac_brackets: entries,
            two_constraint_form_agrees: agrees && gall.len() == 2,
        })
    } else {
        None
    };

    Ok(AnalysisReport {
        model: format!("{:?}", sc.scenario.model.kind).to_lowercase(),
        lagrangian: model.lagrangian().to_string(),
        hessian_det: h.det.to_string(),
        rank: leg.rank,
        momenta: leg
            .momenta
            .iter()
            .map(|(p, e)| BracketEntry {
                left: p.clone(),
                right: String::new(),
                value: e.to_string(),
            })
            .collect(),
        hamiltonian: leg.hamiltonian.to_string(),
        canonical_hamiltonian: leg.canonical_hamiltonian.to_string(),
        classification,
        secondary_passes: search.passes,
        gauge,
    })
}

/// `{f,g} + ({f,φ}{η,g} − {f,η}{φ,g}) / {φ,η}`, which is
/// `{f,g} − ({f,φ}{η,g} − {f,η}{φ,g})` when `{φ,η} = −1`.
fn two_constraint_form(
    f: &PhaseExpr,
    g: &PhaseExpr,
    phi: &PhaseExpr,
    eta: &PhaseExpr,
    chart: &extphase::expr::Chart,
    reg: &Registry,
) -> Result<PhaseExpr, CliError> {
    let pb = |a: &PhaseExpr, b: &PhaseExpr| poisson(a, b, chart, reg).context("Poisson bracket");
    let denom = pb(phi, eta)?
        .recip()
        .context("{phi, eta} is not invertible")?;
    let num = pb(f, phi)?
        .mul_expr(&pb(eta, g)?)
        .sub_expr(&pb(f, eta)?.mul_expr(&pb(phi, g)?));
    Ok(pb(f, g)?.add_expr(&num.mul_expr(&denom)))
}

impl AnalysisReport {
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "model: {}", self.model);
        let _ = writeln!(s, "L = {}", self.lagrangian);
        let _ = writeln!(s, "det = {}", self.hessian_det);
        let _ = writeln!(s, "rank = {}", self.rank);
        for m in &self.momenta {
            let _ = writeln!(s, "{} = {}", m.left, m.value);
        }
        let _ = writeln!(s, "H = {}", self.hamiltonian);
        let _ = writeln!(s, "H0 = {}", self.canonical_hamiltonian);
        if self.classification.is_empty() {
            let _ = writeln!(s, "no constraints");
        } else {
            let _ = writeln!(
                s,
                "constraints (consistency closed after {} pass):",
                self.secondary_passes
            );
            for c in &self.classification {
                let _ = writeln!(s, "  {} = {}  [{}]", c.name, c.expression, c.class);
            }
        }
        if let Some(g) = &self.gauge {
            let _ = writeln!(
                s,
                "gauge: eta_gauge = {}  (lambda = {})",
                g.eta_gauge, g.lambda
            );
            for c in &g.classification {
                let _ = writeln!(s, "  {}  [{}]", c.name, c.class);
            }
            let _ = writeln!(s, "Delta = {}", g.delta);
            let _ = writeln!(s, "C = {}", g.inverse);
            let _ = writeln!(
                s,
                "Dirac brackets ({} nonvanishing):",
                g.dirac_brackets.len()
            );
            for b in &g.dirac_brackets {
                let _ = writeln!(s, "  {{{}, {}}}_D = {}", b.left, b.right, b.value);
            }
            let _ = writeln!(
                s,
                "two-constraint form: {}",
                if g.two_constraint_form_agrees {
                    "agrees"
                } else {
                    "differs"
                }
            );
        }
        s
    }
}
