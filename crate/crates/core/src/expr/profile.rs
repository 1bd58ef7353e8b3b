use std::sync::{Arc, Mutex};

use super::{Bindings, EvalError, ParseError, PhaseExpr, Registry, SymbolKind};
use crate::numeric::{self, CubicSpline};

/// Numeric model of a coefficient atom as a function of its argument.
#[derive(Clone, Debug)]
pub enum Profile {
    Constant(f64),
    /// `exp(-rate * t)`.
    Exponential {
        rate: f64,
    },
    /// Closed-form expression in the variable `t`.
    Expression(ExprProfile),
    Tabulated(CubicSpline),
    /// `exp(-∫₀ᵗ friction(s) ds)`, the damping factor built from a friction profile.
    Damping(Box<Profile>),
}

/// Expression in `t` with lazily extended symbolic derivatives.
#[derive(Clone, Debug)]
pub struct ExprProfile {
    text: String,
    reg: Arc<Registry>,
    derivatives: Arc<Mutex<Vec<PhaseExpr>>>,
}

impl ExprProfile {
    pub fn new(text: &str) -> Result<Self, ParseError> {
        let mut reg = Registry::new();
        reg.declare("t", SymbolKind::Time).expect("fresh registry");
        let expr = reg.parse(text)?;
        Ok(Self {
            text: text.to_string(),
            reg: Arc::new(reg),
            derivatives: Arc::new(Mutex::new(vec![expr])),
        })
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    fn derivative(&self, order: u32) -> PhaseExpr {
        let mut cache = self.derivatives.lock().unwrap_or_else(|e| e.into_inner());
        while cache.len() <= order as usize {
            let next = cache.last().unwrap().diff("t", &self.reg);
            cache.push(next);
        }
        cache[order as usize].clone()
    }

    fn eval(&self, order: u32, t: f64) -> Result<f64, EvalError> {
        self.derivative(order)
            .eval(&self.reg, &Bindings::new().with("t", t), t)
    }
}

const DAMPING_QUAD_TOL: f64 = 1e-14;

impl Profile {
    /// `order`-th derivative at `t`.
    pub fn value(&self, order: u32, t: f64) -> Result<f64, EvalError> {
        let v = match self {
            Profile::Constant(c) => {
                if order == 0 {
                    *c
                } else {
                    0.0
                }
            }
            Profile::Exponential { rate } => (-rate).powi(order as i32) * (-rate * t).exp(),
            Profile::Expression(e) => e.eval(order, t)?,
            Profile::Tabulated(s) => s
                .eval(t, order)
                .map_err(|e| EvalError::Profile(e.to_string()))?,
            Profile::Damping(friction) => {
                let f = match **friction {
                    Profile::Constant(c) => (-c * t).exp(),
                    _ => {
                        let integral = numeric::integrate(
                            |s| {
                                friction
                                    .value(0, s)
                                    .map_err(|_| numeric::NumericError::NonFinite(s))
                            },
                            0.0,
                            t,
                            DAMPING_QUAD_TOL,
                        )
                        .map_err(|e| EvalError::Profile(e.to_string()))?;
                        (-integral).exp()
                    }
                };
                match order {
                    0 => f,
                    1 => -friction.value(0, t)? * f,
                    2 => {
                        let eta = friction.value(0, t)?;
                        (eta * eta - friction.value(1, t)?) * f
                    }
                    _ => {
                        return Err(EvalError::Profile(format!(
                            "damping profile derivative of order {order} is not available"
                        )))
                    }
                }
            }
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(EvalError::NonFinite {
                context: format!("profile at t = {t}"),
            })
        }
    }
}
