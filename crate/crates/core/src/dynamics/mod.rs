//! Numerical flows of the original time-dependent system and of the
//! gauge-fixed extended system, with constraint and gauge-orbit diagnostics.

mod ode;
mod trajectory;

use thiserror::Error;

pub use ode::{solve, IntegratorPolicy, Method, SolveStats};
pub use trajectory::{write_columns, Trajectory, TrajectoryMeta};

use crate::brackets::{hamilton_eom, Bracket, BracketError, EquationsOfMotion};
use crate::constraints::{GaugeSpec, EXTENDED_CONSTRAINT, ORIGINAL_HAMILTONIAN, SURFACE_TOL};
use crate::expr::{Bindings, Chart, CompiledSystem, EvalError, PhaseExpr, Profile, Registry};

/// Factor on the surface tolerance beyond which an extended run is aborted.
pub const VIOLATION_FACTOR: f64 = 100.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("invalid integrator policy: {0}")]
    Policy(String),
    #[error("empty span")]
    EmptySpan,
    #[error("grid must be strictly monotone and finite")]
    Grid,
    #[error("state and grid sizes disagree")]
    Shape,
    #[error("non-finite state at parameter {at}")]
    NonFinite { at: f64 },
    #[error("step size underflow at parameter {at}")]
    StepUnderflow { at: f64 },
    #[error("evaluation failed at parameter {at}: {source}")]
    Eval { at: f64, source: EvalError },
    #[error("cannot compile right-hand side: {0}")]
    Compile(EvalError),
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("parameter {at} lies outside the trajectory")]
    OutOfSpan { at: f64 },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("constraint violated at parameter {at}: |phi| = {value:e}")]
    ConstraintViolation { at: f64, value: f64 },
    #[error(transparent)]
    Bracket(#[from] BracketError),
}

/// `intervals + 1` equally spaced points from `start` to `end` inclusive.
pub fn uniform_grid(start: f64, end: f64, intervals: usize) -> Vec<f64> {
    let n = intervals.max(1);
    (0..=n)
        .map(|k| {
            if k == n {
                end
            } else {
                start + (end - start) * k as f64 / n as f64
            }
        })
        .collect()
}

/// Integrates symbolic equations of motion; `param` names the evolution
/// parameter as it may appear in the right-hand sides.
pub fn integrate(
    eom: &EquationsOfMotion,
    reg: &Registry,
    params: &Bindings,
    param: &str,
    init: &[f64],
    grid: &[f64],
    policy: &IntegratorPolicy,
) -> Result<Trajectory, DynamicsError> {
    integrate_guarded(eom, reg, params, param, init, grid, policy, |_, _| Ok(()))
}

#[allow(clippy::too_many_arguments)]
fn integrate_guarded<G>(
    eom: &EquationsOfMotion,
    reg: &Registry,
    params: &Bindings,
    param: &str,
    init: &[f64],
    grid: &[f64],
    policy: &IntegratorPolicy,
    guard: G,
) -> Result<Trajectory, DynamicsError>
where
    G: FnMut(f64, &[f64]) -> Result<(), DynamicsError>,
{
    if init.len() != eom.vars().len() {
        return Err(DynamicsError::Shape);
    }
    if grid.len() >= 2 && grid[grid.len() - 1] == grid[0] {
        return Err(DynamicsError::EmptySpan);
    }
    let layout: Vec<&str> = eom.vars().iter().map(String::as_str).collect();
    let sys = CompiledSystem::new(eom.rhs(), reg, &layout, params, param)
        .map_err(DynamicsError::Compile)?;
    let (states, stats) = solve(
        |t, y, out| sys.eval_into(t, y, out),
        init,
        grid,
        policy,
        guard,
    )?;
    let meta = TrajectoryMeta {
        integrator: policy.method.name().to_string(),
        policy: *policy,
        stats,
    };
    Trajectory::from_states(param, grid.to_vec(), eom.vars().to_vec(), &states, meta)
}

/// The two damped oscillators with numeric profiles for `w` and `eta_fric`;
/// `f` follows as `exp(-∫₀ᵗ eta_fric)`.
#[derive(Clone, Debug)]
pub struct Oscillator {
    reg: Registry,
    mass: f64,
    params: Bindings,
    hamiltonian: PhaseExpr,
    constraint: PhaseExpr,
}

impl Oscillator {
    pub fn new(mass: f64, omega: Profile, friction: Profile) -> Result<Self, DynamicsError> {
        if !(mass.is_finite() && mass > 0.0) {
            return Err(DynamicsError::Precondition(format!(
                "mass must be positive, got {mass}"
            )));
        }
        let mut reg = Registry::oscillator();
        reg.set_profile("w", omega).expect("declared atom");
        reg.set_profile("f", Profile::Damping(Box::new(friction.clone())))
            .expect("declared atom");
        reg.set_profile("eta_fric", friction)
            .expect("declared atom");
        let hamiltonian = reg.parse(ORIGINAL_HAMILTONIAN).expect("valid expression");
        let constraint = reg.parse(EXTENDED_CONSTRAINT).expect("valid expression");
        Ok(Self {
            reg,
            mass,
            params: Bindings::new().with("m", mass),
            hamiltonian,
            constraint,
        })
    }

    /// Constant frequency and constant friction: `f(t) = exp(-eta t)`.
    pub fn caldirola_kanai(mass: f64, omega: f64, eta: f64) -> Result<Self, DynamicsError> {
        Self::new(mass, Profile::Constant(omega), Profile::Constant(eta))
    }

    pub fn registry(&self) -> &Registry {
        &self.reg
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    /// Parameter values (`m`) for evaluation.
    pub fn params(&self) -> &Bindings {
        &self.params
    }

    pub fn hamiltonian(&self) -> &PhaseExpr {
        &self.hamiltonian
    }

    pub fn constraint(&self) -> &PhaseExpr {
        &self.constraint
    }

    /// `H(x1, x2, p1, p2, t)`.
    pub fn energy(&self, t: f64, state: &[f64; 4]) -> Result<f64, EvalError> {
        let mut b = self.params.clone();
        for (name, v) in ["x1", "x2", "p1", "p2"].iter().zip(state) {
            b.set(name, *v);
        }
        b.set("t", t);
        self.hamiltonian.eval(&self.reg, &b, t)
    }

    pub fn original_eom(&self) -> Result<EquationsOfMotion, DynamicsError> {
        Ok(hamilton_eom(
            &self.hamiltonian,
            &Chart::original(),
            Bracket::Poisson,
            &self.reg,
        )?)
    }

    /// Flow of `H_T = λφ` with the gauge's multiplier.
    pub fn extended_eom(&self, gauge: &GaugeSpec) -> Result<EquationsOfMotion, DynamicsError> {
        let ht = self
            .constraint
            .mul_expr(&PhaseExpr::constant(gauge.lambda()));
        Ok(hamilton_eom(
            &ht,
            &Chart::extended(),
            Bracket::Poisson,
            &self.reg,
        )?)
    }

    /// State `[x1, x2, p1, p2]` integrated over a `t` grid.
    pub fn integrate_original(
        &self,
        init: &[f64; 4],
        grid: &[f64],
        policy: &IntegratorPolicy,
    ) -> Result<Trajectory, DynamicsError> {
        integrate(
            &self.original_eom()?,
            &self.reg,
            &self.params,
            "t",
            init,
            grid,
            policy,
        )
    }

    /// Extended state `[x1, x2, t1, p1, p2, -H]` on the constraint surface at the start of the window.
    pub fn extended_initial(
        &self,
        gauge: &GaugeSpec,
        init: &[f64; 4],
    ) -> Result<[f64; 6], EvalError> {
        let (_, _, t1, _) = gauge.window();
        let h = self.energy(t1, init)?;
        Ok([init[0], init[1], t1, init[2], init[3], -h])
    }

    fn phi_at(&self, state: &[f64]) -> Result<f64, EvalError> {
        let mut b = self.params.clone();
        for (name, v) in Chart::extended().variables().iter().zip(state) {
            b.set(name, *v);
        }
        self.constraint.eval(&self.reg, &b, state[2])
    }

    /// Extended state ordered `[x1, x2, t, p1, p2, pt]` integrated over a `tau` grid
    /// starting at the window's `tau1`.
    pub fn integrate_extended(
        &self,
        gauge: &GaugeSpec,
        init: &[f64; 6],
        tau_grid: &[f64],
        policy: &IntegratorPolicy,
    ) -> Result<Trajectory, DynamicsError> {
        let (tau1, _, t1, _) = gauge.window();
        let phi0 = self.phi_at(init).map_err(DynamicsError::Compile)?;
        if phi0.abs() >= SURFACE_TOL {
            return Err(DynamicsError::Precondition(format!(
                "initial state is off the constraint surface (|phi| = {:e})",
                phi0.abs()
            )));
        }
        if (init[2] - t1).abs() > 1e-12 * t1.abs().max(1.0) {
            return Err(DynamicsError::Precondition(format!(
                "initial time {} does not satisfy the gauge condition t = {t1}",
                init[2]
            )));
        }
        if tau_grid
            .first()
            .is_none_or(|&s| (s - tau1).abs() > 1e-12 * tau1.abs().max(1.0))
        {
            return Err(DynamicsError::Precondition(format!(
                "tau grid must start at tau1 = {tau1}"
            )));
        }
        let eom = self.extended_eom(gauge)?;
        let layout: Vec<&str> = eom.vars().iter().map(String::as_str).collect();
        let phi = CompiledSystem::new(
            std::slice::from_ref(&self.constraint),
            &self.reg,
            &layout,
            &self.params,
            "tau",
        )
        .map_err(DynamicsError::Compile)?;
        let limit = VIOLATION_FACTOR * SURFACE_TOL;
        let guard = |tau: f64, y: &[f64]| {
            let v = phi
                .eval(tau, y)
                .map_err(|source| DynamicsError::Eval { at: tau, source })?[0]
                .abs();
            if v > limit {
                Err(DynamicsError::ConstraintViolation { at: tau, value: v })
            } else {
                Ok(())
            }
        };
        integrate_guarded(
            &eom,
            &self.reg,
            &self.params,
            "tau",
            init,
            tau_grid,
            policy,
            guard,
        )
    }
}

/// `tau` values mapped onto a `t` grid by the gauge orbit.
pub fn gauge_grid(gauge: &GaugeSpec, t_grid: &[f64]) -> Vec<f64> {
    let (tau1, _, t1, _) = gauge.window();
    let lam = gauge.lambda_f64();
    t_grid.iter().map(|t| tau1 + (t - t1) / lam).collect()
}

/// `|c|` for each constraint at each grid point. Constraints may use the
/// trajectory's variables, its parameter name, and the bound parameters.
pub fn constraint_drift(
    traj: &Trajectory,
    constraints: &[PhaseExpr],
    reg: &Registry,
    params: &Bindings,
) -> Result<Vec<Vec<f64>>, DynamicsError> {
    if constraints.is_empty() {
        return Ok(Vec::new());
    }
    let layout: Vec<&str> = traj.vars().iter().map(String::as_str).collect();
    let sys = CompiledSystem::new(constraints, reg, &layout, params, traj.param())
        .map_err(DynamicsError::Compile)?;
    let mut out = vec![Vec::with_capacity(traj.len()); constraints.len()];
    for (k, &p) in traj.grid().iter().enumerate() {
        let v = sys
            .eval(p, &traj.state(k))
            .map_err(|source| DynamicsError::Eval { at: p, source })?;
        for (col, x) in out.iter_mut().zip(v) {
            col.push(x.abs());
        }
    }
    Ok(out)
}

/// Sup-norm distance between the extended run, read at its own `t` values,
/// and the original run over the shared variables. Points are matched by
/// index when the times agree to `1e-9`, otherwise by spline interpolation.
pub fn gauge_equivalence_error(
    original: &Trajectory,
    extended: &Trajectory,
) -> Result<f64, DynamicsError> {
    let times = extended
        .series("t")
        .ok_or_else(|| DynamicsError::UnknownVariable("t".into()))?;
    let shared: Vec<&String> = original
        .vars()
        .iter()
        .filter(|v| extended.series(v).is_some())
        .collect();
    let mut worst = 0.0f64;
    for (k, &t) in times.iter().enumerate() {
        let matched = original
            .grid()
            .get(k)
            .filter(|&&g| (g - t).abs() <= 1e-9 * t.abs().max(1.0))
            .map(|_| k);
        for v in &shared {
            let reference = match matched {
                Some(i) => original.series(v).unwrap()[i],
                None => original.interpolate(v, t)?,
            };
            worst = worst.max((extended.series(v).unwrap()[k] - reference).abs());
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_oscillator_closed_form() {
        let osc = Oscillator::caldirola_kanai(1.0, 2.0, 0.0).unwrap();
        let grid = uniform_grid(0.0, 10.0, 200);
        let tr = osc
            .integrate_original(&[1.0, 0.0, 0.0, 0.0], &grid, &IntegratorPolicy::default())
            .unwrap();
        let x1 = tr.series("x1").unwrap();
        let err = grid
            .iter()
            .zip(x1)
            .map(|(t, x)| (x - (2.0 * t).cos()).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn zero_hamiltonian_is_constant() {
        let reg = Registry::oscillator();
        let eom = hamilton_eom(
            &PhaseExpr::zero(),
            &Chart::original(),
            Bracket::Poisson,
            &reg,
        )
        .unwrap();
        let grid = uniform_grid(0.0, 1.0, 4);
        let tr = integrate(
            &eom,
            &reg,
            &Bindings::new(),
            "t",
            &[1.0, 2.0, 3.0, 4.0],
            &grid,
            &IntegratorPolicy::default(),
        )
        .unwrap();
        assert_eq!(tr.last_state(), [1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn affine_gauge_orbit() {
        let osc = Oscillator::caldirola_kanai(1.0, 2.0, 0.5).unwrap();
        let gauge = GaugeSpec::new(0.0, 1.0, 0.0, 10.0).unwrap();
        let init = osc.extended_initial(&gauge, &[1.0, 0.0, 0.0, 0.5]).unwrap();
        let tau = uniform_grid(0.0, 1.0, 10);
        let tr = osc
            .integrate_extended(&gauge, &init, &tau, &IntegratorPolicy::default())
            .unwrap();
        assert!((tr.series("t").unwrap()[5] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn extended_preconditions() {
        let osc = Oscillator::caldirola_kanai(1.0, 2.0, 0.5).unwrap();
        let gauge = GaugeSpec::new(0.0, 1.0, 0.0, 1.0).unwrap();
        let mut init = osc.extended_initial(&gauge, &[1.0, 0.0, 0.0, 0.0]).unwrap();
        init[5] += 0.1;
        let tau = uniform_grid(0.0, 1.0, 4);
        let p = IntegratorPolicy::default();
        assert!(matches!(
            osc.integrate_extended(&gauge, &init, &tau, &p),
            Err(DynamicsError::Precondition(_))
        ));
        init[5] -= 0.1;
        init[2] = 0.5;
        assert!(matches!(
            osc.integrate_extended(&gauge, &init, &tau, &p),
            Err(DynamicsError::Precondition(_))
        ));
    }

    #[test]
    fn drift_of_violating_state() {
        let osc = Oscillator::caldirola_kanai(1.0, 2.0, 0.0).unwrap();
        let eom = osc
            .extended_eom(&GaugeSpec::new(0.0, 1.0, 0.0, 1.0).unwrap())
            .unwrap();
        let grid = uniform_grid(0.0, 1.0, 4);
        let mut init = [1.0, 0.0, 0.0, 0.0, 0.0, -2.0];
        init[5] += 0.1;
        let tr = integrate(
            &eom,
            osc.registry(),
            osc.params(),
            "tau",
            &init,
            &grid,
            &IntegratorPolicy::default(),
        )
        .unwrap();
        let d = constraint_drift(
            &tr,
            &[osc.constraint().clone()],
            osc.registry(),
            osc.params(),
        )
        .unwrap();
        assert!(d[0][0] >= 0.1 - 1e-15);
        assert!(constraint_drift(&tr, &[], osc.registry(), osc.params())
            .unwrap()
            .is_empty());
    }

    #[test]
    fn csv_format() {
        let osc = Oscillator::caldirola_kanai(1.0, 1.0, 0.0).unwrap();
        let tr = osc
            .integrate_original(
                &[1.0, 0.0, 0.0, 0.0],
                &[0.0, 0.5],
                &IntegratorPolicy::rk4(0.1),
            )
            .unwrap();
        let csv = tr.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("t,x1,x2,p1,p2"));
        assert_eq!(lines.next(), Some("0.0000000000000000e0,1.0000000000000000e0,0.0000000000000000e0,0.0000000000000000e0,0.0000000000000000e0"));
        assert_eq!(lines.count(), 1);
    }
}
