//! Lagrangian-level analysis: velocity Hessians, the Legendre transform with
//! primary-constraint extraction, first/second-class classification, the
//! consistency (secondary-constraint) loop, total Hamiltonians and gauge fixing.

mod sample;

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::brackets::{poisson, BracketError};
use crate::expr::{
    rational_from_f64, Chart, EvalError, ExprError, ExprMatrix, MatrixError, PhaseExpr, Rational,
    Registry, SymbolKind,
};

pub use sample::{PointSampler, SurfaceError, SURFACE_TOL};

/// Threshold on `|{φ_a, φ_b}|` at sampled surface points above which a bracket counts as nonvanishing.
pub const WEAK_ZERO_TOL: f64 = 1e-10;
/// Number of surface points used when a bracket is neither zero nor constant.
pub const WEAK_SAMPLES: usize = 16;
const RANK_SAMPLES: usize = 4;
const RANK_RTOL: f64 = 1e-10;
const MAX_CONSISTENCY_PASSES: usize = 8;
const DEFAULT_SEED: u64 = 0x5eed_d1ac;

pub const ORIGINAL_LAGRANGIAN: &str =
    "m/(2*f(t))*(x1dot^2 + x2dot^2) - m*w(t)^2/(2*f(t))*(x1^2 + x2^2)";
pub const EXTENDED_LAGRANGIAN: &str =
    "m/(2*f(t)*tdot)*(x1dot^2 + x2dot^2) - m*w(t)^2*tdot/(2*f(t))*(x1^2 + x2^2)";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConstraintError {
    #[error("model needs one velocity and one momentum per coordinate")]
    Arity,
    #[error("`{name}` must be declared as {expected}")]
    Kind {
        name: String,
        expected: &'static str,
    },
    #[error("`{0}` is used twice in the model")]
    Repeated(String),
    #[error("momentum `{0}` appears in the Lagrangian")]
    MomentumInLagrangian(String),
    #[error(
        "Lagrangian is not quadratic in the solvable velocities (`{0}` enters the Hessian block)"
    )]
    NotQuadratic(String),
    #[error("could not eliminate velocity `{velocity}` from the primary constraint {constraint}")]
    VelocityInConstraint {
        velocity: String,
        constraint: String,
    },
    #[error("consistency condition {0} is a nonzero constant; the model is inconsistent")]
    Inconsistent(String),
    #[error("consistency loop did not close after {0} passes")]
    NoClosure(usize),
    #[error("total Hamiltonian needs {expected} multipliers, got {got}")]
    Multipliers { expected: usize, got: usize },
    #[error("no primary constraints to build a total Hamiltonian from")]
    NoPrimaries,
    #[error("empty span: gauge window needs tau2 > tau1 and t2 > t1")]
    EmptySpan,
    #[error("gauge window value {0} is not finite")]
    NonFinite(f64),
    #[error(transparent)]
    Bracket(#[from] BracketError),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Surface(#[from] SurfaceError),
    #[error(transparent)]
    Parse(#[from] crate::expr::ParseError),
}

/// A Lagrangian with its configuration variables, their velocities and the
/// names chosen for the conjugate momenta.
#[derive(Clone, Debug, PartialEq)]
pub struct LagrangianModel {
    coordinates: Vec<String>,
    velocities: Vec<String>,
    momenta: Vec<String>,
    lagrangian: PhaseExpr,
}

impl LagrangianModel {
    pub fn new<S: AsRef<str>>(
        coordinates: &[S],
        velocities: &[S],
        momenta: &[S],
        lagrangian: PhaseExpr,
        reg: &Registry,
    ) -> Result<Self, ConstraintError> {
        let n = coordinates.len();
        if n == 0 || velocities.len() != n || momenta.len() != n {
            return Err(ConstraintError::Arity);
        }
        let own = |v: &[S]| v.iter().map(|s| s.as_ref().to_string()).collect::<Vec<_>>();
        let (coordinates, velocities, momenta) = (own(coordinates), own(velocities), own(momenta));
        let mut seen = BTreeSet::new();
        for name in coordinates.iter().chain(&velocities).chain(&momenta) {
            if !seen.insert(name.as_str()) {
                return Err(ConstraintError::Repeated(name.clone()));
            }
        }
        let expect = |name: &str, ok: &[SymbolKind], expected: &'static str| {
            if reg.kind(name).is_some_and(|k| ok.contains(&k)) {
                Ok(())
            } else {
                Err(ConstraintError::Kind {
                    name: name.to_string(),
                    expected,
                })
            }
        };
        for q in &coordinates {
            expect(
                q,
                &[SymbolKind::Canonical, SymbolKind::Time],
                "a canonical or time symbol",
            )?;
        }
        for v in &velocities {
            expect(v, &[SymbolKind::Velocity], "a velocity")?;
        }
        for p in &momenta {
            expect(p, &[SymbolKind::Canonical], "a canonical symbol")?;
            if lagrangian.depends_on(p) {
                return Err(ConstraintError::MomentumInLagrangian(p.clone()));
            }
        }
        Ok(Self {
            coordinates,
            velocities,
            momenta,
            lagrangian,
        })
    }

    /// The two damped oscillators in the time-dependent description.
    pub fn original(reg: &Registry) -> Result<Self, ConstraintError> {
        let l = reg.parse(ORIGINAL_LAGRANGIAN)?;
        Self::new(&["x1", "x2"], &["x1dot", "x2dot"], &["p1", "p2"], l, reg)
    }

    /// The same system with time promoted to the coordinate `t`, parametrized by `tau`.
    pub fn extended(reg: &Registry) -> Result<Self, ConstraintError> {
        let l = reg.parse(EXTENDED_LAGRANGIAN)?;
        Self::new(
            &["x1", "x2", "t"],
            &["x1dot", "x2dot", "tdot"],
            &["p1", "p2", "pt"],
            l,
            reg,
        )
    }

    pub fn coordinates(&self) -> &[String] {
        &self.coordinates
    }

    pub fn velocities(&self) -> &[String] {
        &self.velocities
    }

    pub fn momenta(&self) -> &[String] {
        &self.momenta
    }

    pub fn lagrangian(&self) -> &PhaseExpr {
        &self.lagrangian
    }

    pub fn chart(&self) -> Chart {
        let pairs: Vec<(&str, &str)> = self
            .coordinates
            .iter()
            .zip(&self.momenta)
            .map(|(q, p)| (q.as_str(), p.as_str()))
            .collect();
        Chart::new(&pairs).expect("model names are validated identifiers")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Hessian {
    pub matrix: ExprMatrix,
    pub det: PhaseExpr,
}

/// `∂²L/∂v_i∂v_j` and its determinant.
pub fn hessian(model: &LagrangianModel, reg: &Registry) -> Hessian {
    let first: Vec<PhaseExpr> = model
        .velocities
        .iter()
        .map(|v| model.lagrangian.diff(v, reg))
        .collect();
    let n = first.len();
    let matrix = ExprMatrix::from_fn(n, n, |i, j| first[i].diff(&model.velocities[j], reg));
    let det = matrix.det().expect("square by construction");
    Hessian { matrix, det }
}

/// Largest numeric rank over a few random points, singular values counted
/// above `1e-10` times the largest.
pub fn numeric_rank(
    matrix: &ExprMatrix,
    reg: &Registry,
    sampler: &mut PointSampler,
) -> Result<usize, EvalError> {
    let entries: Vec<&PhaseExpr> = (0..matrix.rows())
        .flat_map(|i| (0..matrix.cols()).map(move |j| (i, j)))
        .map(|(i, j)| matrix.get(i, j))
        .collect();
    let mut rank = 0;
    for _ in 0..RANK_SAMPLES {
        let b = sampler.bindings(&entries);
        let m = matrix.eval(reg, &b, 0.0)?;
        rank = rank.max(svd_rank(&m));
    }
    Ok(rank)
}

fn svd_rank(m: &DMatrix<f64>) -> usize {
    let sv = m.singular_values();
    let top = sv.max();
    if top == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > RANK_RTOL * top).count()
}

/// Result of the Legendre transform.
#[derive(Clone, Debug, PartialEq)]
pub struct Legendre {
    /// `p_i = ∂L/∂v_i` in Lagrangian variables.
    pub momenta: Vec<(String, PhaseExpr)>,
    /// Velocities solved in terms of momenta (and the unsolved velocities).
    pub solved: Vec<(String, PhaseExpr)>,
    /// Velocities left undetermined; one primary constraint each.
    pub unresolved: Vec<String>,
    /// `Σ p_i v_i − L` after eliminating the solved velocities.
    pub hamiltonian: PhaseExpr,
    /// The part of `hamiltonian` free of unresolved velocities.
    pub canonical_hamiltonian: PhaseExpr,
    pub primaries: Vec<PhaseExpr>,
    pub rank: usize,
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::new(), &mut out);
    out
}

pub fn legendre(model: &LagrangianModel, reg: &Registry) -> Result<Legendre, ConstraintError> {
    legendre_with(model, reg, &mut PointSampler::new(DEFAULT_SEED))
}

pub fn legendre_with(
    model: &LagrangianModel,
    reg: &Registry,
    sampler: &mut PointSampler,
) -> Result<Legendre, ConstraintError> {
    let vel = &model.velocities;
    let n = vel.len();
    let hess = hessian(model, reg);
    let rank = if hess.det.is_zero() {
        numeric_rank(&hess.matrix, reg, sampler)?.min(n - 1)
    } else {
        n
    };
    let solvable = combinations(n, rank)
        .into_iter()
        .find(|idx| {
            !hess
                .matrix
                .principal(idx)
                .det()
                .map(|d| d.is_zero())
                .unwrap_or(true)
        })
        .unwrap_or_default();
    let unresolved: Vec<usize> = (0..n).filter(|i| !solvable.contains(i)).collect();

    let block = hess.matrix.principal(&solvable);
    for i in 0..block.rows() {
        for j in 0..block.cols() {
            if let Some(&s) = solvable
                .iter()
                .find(|&&s| block.get(i, j).depends_on(&vel[s]))
            {
                return Err(ConstraintError::NotQuadratic(vel[s].clone()));
            }
        }
    }

    let momenta: Vec<(String, PhaseExpr)> = (0..n)
        .map(|i| {
            (
                model.momenta[i].clone(),
                model.lagrangian.diff(&vel[i], reg),
            )
        })
        .collect();
    let zero_solvable = |e: &PhaseExpr| -> Result<PhaseExpr, ExprError> {
        solvable
            .iter()
            .try_fold(e.clone(), |acc, &s| acc.subs(&vel[s], &PhaseExpr::zero()))
    };
    let rhs = solvable
        .iter()
        .map(|&s| Ok(PhaseExpr::symbol(&model.momenta[s]).sub_expr(&zero_solvable(&momenta[s].1)?)))
        .collect::<Result<Vec<_>, ExprError>>()?;
    let values = if solvable.is_empty() {
        Vec::new()
    } else {
        block.inverse()?.apply(&rhs)?
    };
    let solved: Vec<(String, PhaseExpr)> = solvable
        .iter()
        .map(|&s| vel[s].clone())
        .zip(values)
        .collect();
    let eliminate = |e: &PhaseExpr| -> Result<PhaseExpr, ExprError> {
        solved
            .iter()
            .try_fold(e.clone(), |acc, (v, val)| acc.subs(v, val))
    };

    let mut primaries = Vec::with_capacity(unresolved.len());
    for &u in &unresolved {
        let phi = PhaseExpr::symbol(&model.momenta[u]).sub_expr(&eliminate(&momenta[u].1)?);
        if let Some(v) = vel.iter().find(|v| phi.depends_on(v)) {
            return Err(ConstraintError::VelocityInConstraint {
                velocity: v.clone(),
                constraint: phi.to_string(),
            });
        }
        primaries.push(phi);
    }

    let pv = (0..n).fold(PhaseExpr::zero(), |acc, i| {
        acc.add_expr(&PhaseExpr::symbol(&model.momenta[i]).mul_expr(&PhaseExpr::symbol(&vel[i])))
    });
    let hamiltonian = eliminate(&pv.sub_expr(&model.lagrangian))?;
    let canonical_hamiltonian = unresolved.iter().try_fold(hamiltonian.clone(), |acc, &u| {
        acc.subs(&vel[u], &PhaseExpr::zero())
    })?;

    Ok(Legendre {
        momenta,
        solved,
        unresolved: unresolved.iter().map(|&u| vel[u].clone()).collect(),
        hamiltonian,
        canonical_hamiltonian,
        primaries,
        rank,
    })
}

/// Affine gauge `t = λ(τ − τ₁) + t₁` with `λ = (t₂ − t₁)/(τ₂ − τ₁)`.
///
/// Window values are converted to exact rationals through their shortest
/// decimal representation.
#[derive(Clone, Debug, PartialEq)]
pub struct GaugeSpec {
    tau1: Rational,
    tau2: Rational,
    t1: Rational,
    t2: Rational,
}

impl GaugeSpec {
    pub fn new(tau1: f64, tau2: f64, t1: f64, t2: f64) -> Result<Self, ConstraintError> {
        let r = |x: f64| rational_from_f64(x).ok_or(ConstraintError::NonFinite(x));
        let g = Self {
            tau1: r(tau1)?,
            tau2: r(tau2)?,
            t1: r(t1)?,
            t2: r(t2)?,
        };
        if g.tau2 <= g.tau1 || g.t2 <= g.t1 {
            return Err(ConstraintError::EmptySpan);
        }
        Ok(g)
    }

    pub fn window(&self) -> (f64, f64, f64, f64) {
        let f = |r: &Rational| {
            PhaseExpr::constant(r.clone())
                .as_f64_constant()
                .unwrap_or(0.0)
        };
        (f(&self.tau1), f(&self.tau2), f(&self.t1), f(&self.t2))
    }

    pub fn lambda(&self) -> Rational {
        (&self.t2 - &self.t1) / (&self.tau2 - &self.tau1)
    }

    pub fn lambda_f64(&self) -> f64 {
        PhaseExpr::constant(self.lambda())
            .as_f64_constant()
            .unwrap_or(f64::NAN)
    }

    /// `t − [λ(τ − τ₁) + t₁]`, which vanishes on the gauge orbit.
    pub fn eta_gauge(&self) -> PhaseExpr {
        let orbit = PhaseExpr::symbol("tau")
            .sub_expr(&PhaseExpr::constant(self.tau1.clone()))
            .scale(&self.lambda())
            .add_expr(&PhaseExpr::constant(self.t1.clone()));
        PhaseExpr::symbol("t").sub_expr(&orbit)
    }

    /// Time on the gauge orbit at parameter value `tau`.
    pub fn time_at(&self, tau: f64) -> f64 {
        let (tau1, _, t1, _) = self.window();
        t1 + self.lambda_f64() * (tau - tau1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConstraintClass {
    First,
    Second,
}

impl std::fmt::Display for ConstraintClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ConstraintClass::First => "first-class",
            ConstraintClass::Second => "second-class",
        })
    }
}

/// Constraints of a model together with its canonical Hamiltonian.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintSet {
    pub primaries: Vec<PhaseExpr>,
    pub secondaries: Vec<PhaseExpr>,
    pub gauge: Option<GaugeSpec>,
    pub canonical_hamiltonian: PhaseExpr,
    labels: Vec<ConstraintClass>,
}

impl ConstraintSet {
    pub fn new(primaries: Vec<PhaseExpr>, canonical_hamiltonian: PhaseExpr) -> Self {
        Self {
            primaries,
            secondaries: Vec::new(),
            gauge: None,
            canonical_hamiltonian,
            labels: Vec::new(),
        }
    }

    pub fn from_legendre(l: &Legendre) -> Self {
        Self::new(l.primaries.clone(), l.canonical_hamiltonian.clone())
    }

    pub fn with_gauge(mut self, gauge: GaugeSpec) -> Self {
        self.gauge = Some(gauge);
        self.labels.clear();
        self
    }

    /// Primaries, secondaries, then the gauge condition if any.
    pub fn all(&self) -> Vec<PhaseExpr> {
        let mut out: Vec<PhaseExpr> = self
            .primaries
            .iter()
            .chain(&self.secondaries)
            .cloned()
            .collect();
        if let Some(g) = &self.gauge {
            out.push(g.eta_gauge());
        }
        out
    }

    pub fn is_empty(&self) -> bool {
        self.primaries.is_empty() && self.secondaries.is_empty() && self.gauge.is_none()
    }

    /// Labels aligned with [`ConstraintSet::all`]; empty until classified.
    pub fn labels(&self) -> &[ConstraintClass] {
        &self.labels
    }
}

/// Decides whether `e` is weakly nonzero on the surface `constraints = 0`.
pub fn weakly_nonzero(
    e: &PhaseExpr,
    constraints: &[PhaseExpr],
    chart: &Chart,
    reg: &Registry,
    sampler: &mut PointSampler,
) -> Result<bool, ConstraintError> {
    if e.is_zero() {
        return Ok(false);
    }
    if let Some(c) = e.as_f64_constant() {
        return Ok(c != 0.0);
    }
    for _ in 0..WEAK_SAMPLES {
        let b = sampler.surface_point(e, constraints, chart, reg)?;
        if e.eval(reg, &b, 0.0)?.abs() > WEAK_ZERO_TOL {
            return Ok(true);
        }
    }
    Ok(false)
}

pub fn classify(
    cs: &ConstraintSet,
    chart: &Chart,
    reg: &Registry,
) -> Result<ConstraintSet, ConstraintError> {
    classify_with(cs, chart, reg, &mut PointSampler::new(DEFAULT_SEED))
}

/// A constraint is second-class when its bracket with some other constraint
/// is weakly nonzero, first-class otherwise.
pub fn classify_with(
    cs: &ConstraintSet,
    chart: &Chart,
    reg: &Registry,
    sampler: &mut PointSampler,
) -> Result<ConstraintSet, ConstraintError> {
    let all = cs.all();
    let n = all.len();
    let mut second = vec![false; n];
    for a in 0..n {
        for b in a + 1..n {
            let br = poisson(&all[a], &all[b], chart, reg)?;
            if weakly_nonzero(&br, &all, chart, reg, sampler)? {
                second[a] = true;
                second[b] = true;
            }
        }
    }
    let mut out = cs.clone();
    out.labels = second
        .into_iter()
        .map(|s| {
            if s {
                ConstraintClass::Second
            } else {
                ConstraintClass::First
            }
        })
        .collect();
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SecondaryReport {
    pub secondaries: Vec<PhaseExpr>,
    /// Passes of the consistency loop, including the final one that found nothing new.
    pub passes: usize,
}

/// Iterates `{χ, H₀} + Σ_k λ_k {χ, φ_k} ≈ 0` over all known constraints `χ`.
///
/// A condition with a weakly nonzero multiplier coefficient fixes a
/// multiplier; otherwise a weakly nonzero `{χ, H₀}` becomes a new constraint.
pub fn secondary_search(
    cs: &ConstraintSet,
    chart: &Chart,
    reg: &Registry,
) -> Result<SecondaryReport, ConstraintError> {
    let mut sampler = PointSampler::new(DEFAULT_SEED);
    let mut known: Vec<PhaseExpr> = cs
        .primaries
        .iter()
        .chain(&cs.secondaries)
        .cloned()
        .collect();
    let mut found = Vec::new();
    let mut checked = 0;
    for pass in 1..=MAX_CONSISTENCY_PASSES {
        let mut fresh = Vec::new();
        for chi in &known[checked..] {
            let mut fixes_multiplier = false;
            for phi in &cs.primaries {
                let br = poisson(chi, phi, chart, reg)?;
                if weakly_nonzero(&br, &known, chart, reg, &mut sampler)? {
                    fixes_multiplier = true;
                    break;
                }
            }
            if fixes_multiplier {
                continue;
            }
            let cond = poisson(chi, &cs.canonical_hamiltonian, chart, reg)?;
            if weakly_nonzero(&cond, &known, chart, reg, &mut sampler)? {
                if cond.as_constant().is_some() {
                    return Err(ConstraintError::Inconsistent(cond.to_string()));
                }
                fresh.push(cond);
            }
        }
        checked = known.len();
        if fresh.is_empty() {
            return Ok(SecondaryReport {
                secondaries: found,
                passes: pass,
            });
        }
        found.extend(fresh.iter().cloned());
        known.extend(fresh);
    }
    Err(ConstraintError::NoClosure(MAX_CONSISTENCY_PASSES))
}

/// `H_T = H₀ + Σ_k λ_k φ_k` over the primaries.
pub fn total_hamiltonian(
    cs: &ConstraintSet,
    multipliers: &[PhaseExpr],
) -> Result<PhaseExpr, ConstraintError> {
    if cs.primaries.is_empty() {
        return Err(ConstraintError::NoPrimaries);
    }
    if multipliers.len() != cs.primaries.len() {
        return Err(ConstraintError::Multipliers {
            expected: cs.primaries.len(),
            got: multipliers.len(),
        });
    }
    Ok(cs
        .primaries
        .iter()
        .zip(multipliers)
        .fold(cs.canonical_hamiltonian.clone(), |acc, (phi, lam)| {
            acc.add_expr(&lam.mul_expr(phi))
        }))
}

/// The primary constraint of the extended oscillator.
pub const EXTENDED_CONSTRAINT: &str =
    "pt + f(t)/(2*m)*(p1^2 + p2^2) + m*w(t)^2/(2*f(t))*(x1^2 + x2^2)";
/// Hamiltonian of the original system.
pub const ORIGINAL_HAMILTONIAN: &str = "f(t)/(2*m)*(p1^2 + p2^2) + m*w(t)^2/(2*f(t))*(x1^2 + x2^2)";
