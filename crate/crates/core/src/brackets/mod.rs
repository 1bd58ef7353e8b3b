//! Poisson and Dirac brackets over a [`Chart`], the constraint matrix, and
//! symbolic Hamilton equations.

use thiserror::Error;

use crate::expr::{Chart, ExprMatrix, MatrixError, PhaseExpr, Registry, SymbolKind};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BracketError {
    #[error("`{0}` is a phase-space variable outside the chart")]
    OutsideChart(String),
    #[error(
        "constraint matrix is singular; first-class constraints present at indices {first_class:?}"
    )]
    Singular {
        first_class: Vec<usize>,
        delta: ExprMatrix,
    },
    #[error(transparent)]
    Matrix(#[from] MatrixError),
}

fn check_chart(e: &PhaseExpr, chart: &Chart, reg: &Registry) -> Result<(), BracketError> {
    for s in e.symbols() {
        if chart.contains(&s) {
            continue;
        }
        if matches!(
            reg.kind(&s),
            Some(SymbolKind::Canonical | SymbolKind::Velocity)
        ) {
            return Err(BracketError::OutsideChart(s));
        }
    }
    Ok(())
}

fn poisson_unchecked(f: &PhaseExpr, g: &PhaseExpr, chart: &Chart, reg: &Registry) -> PhaseExpr {
    let mut out = PhaseExpr::zero();
    for (q, p) in chart.pairs() {
        let dfq = f.diff(q, reg);
        let dgp = g.diff(p, reg);
        let dfp = f.diff(p, reg);
        let dgq = g.diff(q, reg);
        out = out
            .add_expr(&dfq.mul_expr(&dgp))
            .sub_expr(&dfp.mul_expr(&dgq));
    }
    out
}

/// `{f, g} = Σ (∂f/∂q ∂g/∂p − ∂f/∂p ∂g/∂q)` over the chart's pairs.
pub fn poisson(
    f: &PhaseExpr,
    g: &PhaseExpr,
    chart: &Chart,
    reg: &Registry,
) -> Result<PhaseExpr, BracketError> {
    check_chart(f, chart, reg)?;
    check_chart(g, chart, reg)?;
    Ok(poisson_unchecked(f, g, chart, reg))
}

/// Second-class constraints with `Δ_ab = {φ_a, φ_b}` and its inverse `C`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintMatrix {
    constraints: Vec<PhaseExpr>,
    delta: ExprMatrix,
    inverse: ExprMatrix,
}

impl ConstraintMatrix {
    pub fn new(
        constraints: Vec<PhaseExpr>,
        chart: &Chart,
        reg: &Registry,
    ) -> Result<Self, BracketError> {
        for c in &constraints {
            check_chart(c, chart, reg)?;
        }
        let n = constraints.len();
        let delta = ExprMatrix::from_fn(n, n, |a, b| {
            if a == b {
                PhaseExpr::zero()
            } else {
                poisson_unchecked(&constraints[a], &constraints[b], chart, reg)
            }
        });
        let inverse = match delta.inverse() {
            Ok(inv) => inv,
            Err(MatrixError::Singular) => {
                let first_class = (0..n)
                    .filter(|&a| (0..n).all(|b| delta.get(a, b).is_zero()))
                    .collect();
                return Err(BracketError::Singular { first_class, delta });
            }
            Err(e) => return Err(e.into()),
        };
        Ok(Self {
            constraints,
            delta,
            inverse,
        })
    }

    pub fn constraints(&self) -> &[PhaseExpr] {
        &self.constraints
    }

    pub fn delta(&self) -> &ExprMatrix {
        &self.delta
    }

    pub fn inverse(&self) -> &ExprMatrix {
        &self.inverse
    }

    /// `Δ·C = I` entrywise after simplification.
    pub fn verifies_inverse(&self) -> bool {
        self.delta.mul(&self.inverse).is_ok_and(|p| p.is_identity())
    }
}

/// `{f, g}_DB = {f, g} − Σ_ab {f, φ_a} C_ab {φ_b, g}`.
pub fn dirac(
    f: &PhaseExpr,
    g: &PhaseExpr,
    cm: &ConstraintMatrix,
    chart: &Chart,
    reg: &Registry,
) -> Result<PhaseExpr, BracketError> {
    let mut out = poisson(f, g, chart, reg)?;
    let left: Vec<PhaseExpr> = cm
        .constraints
        .iter()
        .map(|phi| poisson_unchecked(f, phi, chart, reg))
        .collect();
    let right: Vec<PhaseExpr> = cm
        .constraints
        .iter()
        .map(|phi| poisson_unchecked(phi, g, chart, reg))
        .collect();
    for (a, fa) in left.iter().enumerate().filter(|(_, e)| !e.is_zero()) {
        for (b, gb) in right.iter().enumerate().filter(|(_, e)| !e.is_zero()) {
            let c = cm.inverse.get(a, b);
            if !c.is_zero() {
                out = out.sub_expr(&fa.mul_expr(c).mul_expr(gb));
            }
        }
    }
    Ok(out)
}

/// Which bracket generates the flow.
#[derive(Clone, Copy, Debug)]
pub enum Bracket<'a> {
    Poisson,
    Dirac(&'a ConstraintMatrix),
}

impl Bracket<'_> {
    pub fn apply(
        &self,
        f: &PhaseExpr,
        g: &PhaseExpr,
        chart: &Chart,
        reg: &Registry,
    ) -> Result<PhaseExpr, BracketError> {
        match self {
            Bracket::Poisson => poisson(f, g, chart, reg),
            Bracket::Dirac(cm) => dirac(f, g, cm, chart, reg),
        }
    }
}

/// Right-hand sides `dz/dτ = {z, H}` in chart order.
#[derive(Clone, Debug, PartialEq)]
pub struct EquationsOfMotion {
    vars: Vec<String>,
    rhs: Vec<PhaseExpr>,
}

impl EquationsOfMotion {
    pub fn new(vars: Vec<String>, rhs: Vec<PhaseExpr>) -> Self {
        assert_eq!(vars.len(), rhs.len(), "one right-hand side per variable");
        Self { vars, rhs }
    }

    pub fn vars(&self) -> &[String] {
        &self.vars
    }

    pub fn rhs(&self) -> &[PhaseExpr] {
        &self.rhs
    }

    pub fn get(&self, var: &str) -> Option<&PhaseExpr> {
        self.vars
            .iter()
            .position(|v| v == var)
            .map(|i| &self.rhs[i])
    }

    /// Substitutes a value for a symbol in every right-hand side.
    pub fn subs(&self, var: &str, value: &PhaseExpr) -> Result<Self, crate::expr::ExprError> {
        let rhs = self
            .rhs
            .iter()
            .map(|e| e.subs(var, value))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            vars: self.vars.clone(),
            rhs,
        })
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &PhaseExpr)> {
        self.vars.iter().map(|s| s.as_str()).zip(self.rhs.iter())
    }
}

pub fn hamilton_eom(
    hamiltonian: &PhaseExpr,
    chart: &Chart,
    bracket: Bracket<'_>,
    reg: &Registry,
) -> Result<EquationsOfMotion, BracketError> {
    let vars = chart.variables();
    let rhs = vars
        .iter()
        .map(|v| bracket.apply(&PhaseExpr::symbol(v), hamiltonian, chart, reg))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(EquationsOfMotion::new(
        vars.into_iter().map(String::from).collect(),
        rhs,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Registry;

    const PHI: &str = "pt + f(t)/(2*m)*(p1^2 + p2^2) + m*w(t)^2/(2*f(t))*(x1^2 + x2^2)";
    const ETA: &str = "t - 10*tau";

    fn setup() -> (Registry, Chart) {
        (Registry::oscillator(), Chart::extended())
    }

    fn e(r: &Registry, s: &str) -> PhaseExpr {
        r.parse(s).unwrap()
    }

    #[test]
    fn fundamental_brackets_original() {
        let r = Registry::oscillator();
        let c = Chart::original();
        assert!(poisson(&e(&r, "x1"), &e(&r, "p1"), &c, &r)
            .unwrap()
            .is_one());
        assert!(poisson(&e(&r, "x1"), &e(&r, "p2"), &c, &r)
            .unwrap()
            .is_zero());
        assert_eq!(
            poisson(&e(&r, "pt"), &e(&r, "x1"), &c, &r),
            Err(BracketError::OutsideChart("pt".into()))
        );
    }

    #[test]
    fn phi_eta_bracket() {
        let (r, c) = setup();
        assert_eq!(
            poisson(&e(&r, PHI), &e(&r, ETA), &c, &r).unwrap(),
            PhaseExpr::int(-1)
        );
    }

    #[test]
    fn dirac_brackets_of_fundamental_variables() {
        let (r, c) = setup();
        let cm = ConstraintMatrix::new(vec![e(&r, PHI), e(&r, ETA)], &c, &r).unwrap();
        assert!(cm.verifies_inverse());
        let db = |a: &str, b: &str| dirac(&e(&r, a), &e(&r, b), &cm, &c, &r).unwrap();
        assert!(db("x1", "p1").is_one());
        assert!(db("t", "pt").is_zero());
        assert_eq!(db("p1", "pt"), e(&r, "m*w(t)^2*x1/f(t)"));
        assert_eq!(db("x2", "pt"), e(&r, "-f(t)*p2/m"));
    }

    #[test]
    fn singular_constraint_matrix_reports_first_class() {
        let (r, c) = setup();
        match ConstraintMatrix::new(vec![e(&r, PHI)], &c, &r) {
            Err(BracketError::Singular { first_class, .. }) => assert_eq!(first_class, [0]),
            other => panic!("expected singular matrix, got {other:?}"),
        }
    }

    #[test]
    fn total_hamiltonian_flow() {
        let (r, c) = setup();
        let h = e(&r, &format!("lam*({PHI})"));
        let eom = hamilton_eom(&h, &c, Bracket::Poisson, &r).unwrap();
        assert_eq!(eom.get("x1").unwrap(), &e(&r, "lam*f(t)*p1/m"));
        assert_eq!(eom.get("p2").unwrap(), &e(&r, "-lam*m*w(t)^2*x2/f(t)"));
        assert_eq!(eom.get("t").unwrap(), &e(&r, "lam"));
        // {pt, lam*phi} = -lam * dphi/dt, with f' = -eta_fric*f.
        let expected = e(
            &r,
            "-lam*(-eta_fric(t)*f(t)/(2*m)*(p1^2 + p2^2) \
             + m/(2*f(t))*w(t)*(2*w_d1(t) + w(t)*eta_fric(t))*(x1^2 + x2^2))",
        );
        assert_eq!(eom.get("pt").unwrap(), &expected);
    }
}
