//! Canonical transformations of the extended phase space of the separable form
//!
//! ```text
//! x_i = A_i(Q_i, T),  t = B(T),  p_i = C_i(Q_i, T) P_i + D_i(Q_i, T),  pt = F(Q, T, P)
//! ```
//!
//! completed from `A_i`, `B`, `D_i` by `C_i = 1/A_i'` and
//! `F = P_T/B' − Σ_i (Ȧ_i/(A_i' B')) P_i + (1/B') Σ_i ∫ (Ḋ_i A_i' − Ȧ_i D_i') dQ_i`,
//! where `'` is `∂/∂Q_i` and the dot is `∂/∂T`.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::expr::{
    Bindings, EvalError, ExprError, ExprMatrix, ParseError, PhaseExpr, Registry, SymbolKind,
};
use crate::numeric;

/// New variables, in Jacobian column order.
pub const NEW_VARS: [&str; 6] = ["Q1", "Q2", "T", "P1", "P2", "PT"];
/// Old variables, in Jacobian row order.
pub const OLD_VARS: [&str; 6] = ["x1", "x2", "t", "p1", "p2", "pt"];

const DENOMINATOR_FLOOR: f64 = 1e-12;
const QUAD_TOL: f64 = 1e-13;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CanonicalError {
    #[error("{part} may only depend on {allowed}, found `{found}`")]
    Dependency {
        part: &'static str,
        allowed: &'static str,
        found: String,
    },
    #[error("{0} vanishes identically")]
    Degenerate(&'static str),
    #[error("{which} = {value:e} is too close to zero at the evaluation point")]
    SingularDenominator { which: &'static str, value: f64 },
    #[error("integral over {var} failed: {reason}")]
    Quadrature { var: &'static str, reason: String },
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Registry of the new chart: `Q1, Q2, T, P1, P2, PT`.
pub fn registry() -> Registry {
    let mut reg = Registry::new();
    for v in NEW_VARS {
        reg.declare(v, SymbolKind::Canonical).expect("fresh names");
    }
    reg
}

/// Generating functions of a transformation, in the new variables.
#[derive(Clone, Debug, PartialEq)]
pub struct TransformSpec {
    pub a1: PhaseExpr,
    pub a2: PhaseExpr,
    pub b: PhaseExpr,
    pub d1: PhaseExpr,
    pub d2: PhaseExpr,
    /// Replaces `1/A_1'`; used to build non-canonical probes.
    pub c1: Option<PhaseExpr>,
    pub c2: Option<PhaseExpr>,
    /// Replaces the completed `F` entirely.
    pub f: Option<PhaseExpr>,
    /// A function of `T` added to `F`.
    pub g: Option<PhaseExpr>,
}

fn check_deps(
    e: &PhaseExpr,
    part: &'static str,
    allowed: &'static [&'static str],
    text: &'static str,
) -> Result<(), CanonicalError> {
    if let Some(found) = e
        .symbols()
        .into_iter()
        .find(|s| !allowed.contains(&s.as_str()))
    {
        return Err(CanonicalError::Dependency {
            part,
            allowed: text,
            found,
        });
    }
    if let Some(a) = e.atoms().into_iter().next() {
        return Err(CanonicalError::Dependency {
            part,
            allowed: text,
            found: a.to_string(),
        });
    }
    Ok(())
}

impl TransformSpec {
    pub fn new(a1: PhaseExpr, a2: PhaseExpr, b: PhaseExpr, d1: PhaseExpr, d2: PhaseExpr) -> Self {
        Self {
            a1,
            a2,
            b,
            d1,
            d2,
            c1: None,
            c2: None,
            f: None,
            g: None,
        }
    }

    /// Parses `[A1, A2, B, D1, D2]` in the new-chart grammar.
    pub fn parse(texts: [&str; 5]) -> Result<Self, CanonicalError> {
        let reg = registry();
        let [a1, a2, b, d1, d2] = texts.map(|t| reg.parse(t));
        Ok(Self::new(a1?, a2?, b?, d1?, d2?))
    }

    pub fn identity() -> Self {
        Self::parse(["Q1", "Q2", "T", "0", "0"]).expect("valid identity")
    }

    pub fn validate(&self) -> Result<(), CanonicalError> {
        check_deps(&self.a1, "A1", &["Q1", "T"], "Q1, T")?;
        check_deps(&self.a2, "A2", &["Q2", "T"], "Q2, T")?;
        check_deps(&self.b, "B", &["T"], "T")?;
        check_deps(&self.d1, "D1", &["Q1", "T"], "Q1, T")?;
        check_deps(&self.d2, "D2", &["Q2", "T"], "Q2, T")?;
        if let Some(c) = &self.c1 {
            check_deps(c, "C1", &["Q1", "T"], "Q1, T")?;
        }
        if let Some(c) = &self.c2 {
            check_deps(c, "C2", &["Q2", "T"], "Q2, T")?;
        }
        if let Some(f) = &self.f {
            check_deps(f, "F", &NEW_VARS, "Q1, Q2, T, P1, P2, PT")?;
        }
        if let Some(g) = &self.g {
            check_deps(g, "G", &["T"], "T")?;
        }
        Ok(())
    }
}

/// `prefactor(T) · ∫₀^{var} integrand dvar`, kept numeric when the integrand
/// is not polynomial in `var`.
#[derive(Clone, Debug, PartialEq)]
struct QuadTerm {
    var: &'static str,
    col: usize,
    integrand: PhaseExpr,
    integrand_t: PhaseExpr,
    prefactor: PhaseExpr,
    prefactor_t: PhaseExpr,
}

/// Derivatives of one separable block `(A_i, C_i, D_i)`.
#[derive(Clone, Debug, PartialEq)]
struct Block {
    a_prime: PhaseExpr,
    a_dot: PhaseExpr,
    c: PhaseExpr,
    c_prime: PhaseExpr,
    c_dot: PhaseExpr,
    d_prime: PhaseExpr,
    d_dot: PhaseExpr,
}

#[derive(Clone, Debug)]
pub struct Transform {
    reg: Registry,
    maps: [PhaseExpr; 6],
    jac: ExprMatrix,
    quad: Vec<QuadTerm>,
    blocks: [Block; 2],
    b_dot: PhaseExpr,
}

pub fn complete(spec: &TransformSpec) -> Result<Transform, CanonicalError> {
    spec.validate()?;
    let reg = registry();
    let b_dot = spec.b.diff("T", &reg);
    if b_dot.is_zero() {
        return Err(CanonicalError::Degenerate("dB/dT"));
    }
    let inv_b_dot = b_dot.recip()?;
    let mut f = PhaseExpr::symbol("PT").mul_expr(&inv_b_dot);
    let mut quad = Vec::new();
    let parts = [
        ("Q1", "P1", 0usize, &spec.a1, &spec.d1, &spec.c1, "dA1/dQ1"),
        ("Q2", "P2", 1usize, &spec.a2, &spec.d2, &spec.c2, "dA2/dQ2"),
    ];
    let mut blocks = Vec::with_capacity(2);
    let mut p_maps = Vec::with_capacity(2);
    for (q, p, col, a, d, c_override, label) in parts {
        let a_prime = a.diff(q, &reg);
        if a_prime.is_zero() {
            return Err(CanonicalError::Degenerate(label));
        }
        let inv_a_prime = a_prime.recip()?;
        let a_dot = a.diff("T", &reg);
        let d_prime = d.diff(q, &reg);
        let d_dot = d.diff("T", &reg);
        let c = c_override.clone().unwrap_or_else(|| inv_a_prime.clone());
        f = f.sub_expr(
            &a_dot
                .mul_expr(&inv_a_prime)
                .mul_expr(&inv_b_dot)
                .mul_expr(&PhaseExpr::symbol(p)),
        );
        let integrand = d_dot.mul_expr(&a_prime).sub_expr(&a_dot.mul_expr(&d_prime));
        match integrand.integrate_polynomial(q) {
            Some(antiderivative) => f = f.add_expr(&antiderivative.mul_expr(&inv_b_dot)),
            None => quad.push(QuadTerm {
                var: q,
                col,
                integrand_t: integrand.diff("T", &reg),
                integrand,
                prefactor_t: inv_b_dot.diff("T", &reg),
                prefactor: inv_b_dot.clone(),
            }),
        }
        p_maps.push(c.mul_expr(&PhaseExpr::symbol(p)).add_expr(d));
        blocks.push(Block {
            c_prime: c.diff(q, &reg),
            c_dot: c.diff("T", &reg),
            c,
            a_prime,
            a_dot,
            d_prime,
            d_dot,
        });
    }
    if let Some(g) = &spec.g {
        f = f.add_expr(g);
    }
    if let Some(over) = &spec.f {
        f = over.clone();
        quad.clear();
    }
    let [p1, p2]: [PhaseExpr; 2] = p_maps.try_into().expect("two blocks");
    let maps = [spec.a1.clone(), spec.a2.clone(), spec.b.clone(), p1, p2, f];
    let jac = ExprMatrix::from_fn(6, 6, |i, j| maps[i].diff(NEW_VARS[j], &reg));
    let blocks: [Block; 2] = blocks.try_into().expect("two blocks");
    Ok(Transform {
        reg,
        maps,
        jac,
        quad,
        blocks,
        b_dot,
    })
}

fn bind(point: &[f64; 6]) -> Bindings {
    let mut b = Bindings::new();
    for (v, x) in NEW_VARS.iter().zip(point) {
        b.set(v, *x);
    }
    b
}

impl Transform {
    /// Symbolic component maps `x1, x2, t, p1, p2, pt`; the last omits any
    /// numerically integrated terms.
    pub fn maps(&self) -> &[PhaseExpr; 6] {
        &self.maps
    }

    /// `C_i`, as used in the momentum maps.
    pub fn c(&self, i: usize) -> &PhaseExpr {
        &self.blocks[i].c
    }

    /// True when `F` is fully symbolic.
    pub fn is_symbolic(&self) -> bool {
        self.quad.is_empty()
    }

    fn eval(&self, e: &PhaseExpr, b: &Bindings) -> Result<f64, CanonicalError> {
        Ok(e.eval(&self.reg, b, 0.0)?)
    }

    fn check_denominators(&self, b: &Bindings) -> Result<(), CanonicalError> {
        for (which, e) in [
            ("dA1/dQ1", &self.blocks[0].a_prime),
            ("dA2/dQ2", &self.blocks[1].a_prime),
            ("dB/dT", &self.b_dot),
        ] {
            let value = self.eval(e, b)?;
            if value.abs() < DENOMINATOR_FLOOR {
                return Err(CanonicalError::SingularDenominator { which, value });
            }
        }
        Ok(())
    }

    fn integral(
        &self,
        term: &QuadTerm,
        integrand: &PhaseExpr,
        point: &[f64; 6],
    ) -> Result<f64, CanonicalError> {
        let mut b = bind(point);
        let upper = point[term.col];
        numeric::integrate(
            |q| {
                b.set(term.var, q);
                integrand
                    .eval(&self.reg, &b, 0.0)
                    .map_err(|_| numeric::NumericError::NonFinite(q))
            },
            0.0,
            upper,
            QUAD_TOL,
        )
        .map_err(|e| CanonicalError::Quadrature {
            var: term.var,
            reason: e.to_string(),
        })
    }

    /// Old variables at a point of the new chart.
    pub fn apply(&self, point: &[f64; 6]) -> Result<[f64; 6], CanonicalError> {
        let b = bind(point);
        self.check_denominators(&b)?;
        let mut out = [0.0; 6];
        for (o, e) in out.iter_mut().zip(&self.maps) {
            *o = self.eval(e, &b)?;
        }
        for term in &self.quad {
            out[5] +=
                self.eval(&term.prefactor, &b)? * self.integral(term, &term.integrand, point)?;
        }
        Ok(out)
    }

    /// `∂(x1, x2, t, p1, p2, pt)/∂(Q1, Q2, T, P1, P2, PT)` at a point.
    pub fn jacobian(&self, point: &[f64; 6]) -> Result<DMatrix<f64>, CanonicalError> {
        let b = bind(point);
        self.check_denominators(&b)?;
        let mut m = self.jac.eval(&self.reg, &b, 0.0)?;
        for term in &self.quad {
            let pref = self.eval(&term.prefactor, &b)?;
            m[(5, term.col)] += pref * self.eval(&term.integrand, &b)?;
            let value = self.integral(term, &term.integrand, point)?;
            let value_t = self.integral(term, &term.integrand_t, point)?;
            m[(5, 2)] += self.eval(&term.prefactor_t, &b)? * value + pref * value_t;
        }
        Ok(m)
    }

    /// Residuals of the seven conditions for `MᵀJM = J` at a point.
    pub fn ode_residuals(&self, point: &[f64; 6]) -> Result<[f64; 7], CanonicalError> {
        let b = bind(point);
        let m = self.jacobian(point)?;
        let b_dot = self.eval(&self.b_dot, &b)?;
        let mut r = [0.0; 7];
        for (i, blk) in self.blocks.iter().enumerate() {
            let p = point[3 + i];
            let v = |e: &PhaseExpr| self.eval(e, &b);
            let (a_prime, a_dot, c) = (v(&blk.a_prime)?, v(&blk.a_dot)?, v(&blk.c)?);
            r[i] = a_dot * (v(&blk.c_prime)? * p + v(&blk.d_prime)?) + b_dot * m[(5, i)]
                - (v(&blk.c_dot)? * p + v(&blk.d_dot)?) * a_prime;
            r[2 + i] = c * a_dot + b_dot * m[(5, 3 + i)];
            r[5 + i] = c * a_prime - 1.0;
        }
        r[4] = b_dot * m[(5, 5)] - 1.0;
        Ok(r)
    }

    /// The seven conditions as symbolic expressions; `None` when `F` has numeric parts.
    pub fn symbolic_residuals(&self) -> Option<[PhaseExpr; 7]> {
        if !self.is_symbolic() {
            return None;
        }
        let f = &self.maps[5];
        let dq = |i: usize| f.diff(NEW_VARS[i], &self.reg);
        let mut out: [PhaseExpr; 7] = std::array::from_fn(|_| PhaseExpr::zero());
        for (i, blk) in self.blocks.iter().enumerate() {
            let p = PhaseExpr::symbol(NEW_VARS[3 + i]);
            out[i] = blk
                .a_dot
                .mul_expr(&blk.c_prime.mul_expr(&p).add_expr(&blk.d_prime))
                .add_expr(&self.b_dot.mul_expr(&dq(i)))
                .sub_expr(
                    &blk.c_dot
                        .mul_expr(&p)
                        .add_expr(&blk.d_dot)
                        .mul_expr(&blk.a_prime),
                );
            out[2 + i] = blk
                .c
                .mul_expr(&blk.a_dot)
                .add_expr(&self.b_dot.mul_expr(&dq(3 + i)));
            out[5 + i] = blk.c.mul_expr(&blk.a_prime).sub_expr(&PhaseExpr::one());
        }
        out[4] = self.b_dot.mul_expr(&dq(5)).sub_expr(&PhaseExpr::one());
        Some(out)
    }
}

/// `J = [[0, I], [−I, 0]]` in 3+3 blocks.
pub fn symplectic_form() -> DMatrix<f64> {
    DMatrix::from_fn(6, 6, |i, j| {
        if j == i + 3 {
            1.0
        } else if i == j + 3 {
            -1.0
        } else {
            0.0
        }
    })
}

fn defect_of(m: &DMatrix<f64>) -> f64 {
    let j = symplectic_form();
    (m.transpose() * &j * m - j).amax()
}

/// `sup_points max|MᵀJM − J|`.
pub fn symplectic_defect(tr: &Transform, points: &[[f64; 6]]) -> Result<f64, CanonicalError> {
    points
        .iter()
        .try_fold(0.0f64, |acc, p| Ok(acc.max(defect_of(&tr.jacobian(p)?))))
}

/// Jacobian of `outer ∘ inner` by the chain rule.
pub fn composite_jacobian(
    outer: &Transform,
    inner: &Transform,
    point: &[f64; 6],
) -> Result<DMatrix<f64>, CanonicalError> {
    let mid = inner.apply(point)?;
    Ok(outer.jacobian(&mid)? * inner.jacobian(point)?)
}

pub fn composite_defect(
    outer: &Transform,
    inner: &Transform,
    points: &[[f64; 6]],
) -> Result<f64, CanonicalError> {
    points.iter().try_fold(0.0f64, |acc, p| {
        Ok(acc.max(defect_of(&composite_jacobian(outer, inner, p)?)))
    })
}
