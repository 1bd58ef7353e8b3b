use std::collections::HashMap;
use std::sync::Arc;

use num_traits::ToPrimitive;
use thiserror::Error;

use super::{AtomRef, Factor, PhaseExpr, Profile, Registry};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("unbound symbol `{0}`")]
    Unbound(String),
    #[error("atom `{0}` has no numeric profile")]
    NoProfile(String),
    #[error("non-finite value in {context}")]
    NonFinite { context: String },
    #[error("profile error: {0}")]
    Profile(String),
}

/// Numeric values for symbols, plus optional fixed values for atoms.
#[derive(Clone, Debug, Default)]
pub struct Bindings {
    values: HashMap<String, f64>,
    atoms: HashMap<AtomRef, f64>,
}

impl Bindings {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: &str, value: f64) -> Self {
        self.set(name, value);
        self
    }

    pub fn set(&mut self, name: &str, value: f64) {
        self.values.insert(name.to_string(), value);
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.values.get(name).copied()
    }

    /// Pins an atom to a value, bypassing its profile.
    pub fn set_atom(&mut self, atom: AtomRef, value: f64) {
        self.atoms.insert(atom, value);
    }

    pub fn atom(&self, atom: &AtomRef) -> Option<f64> {
        self.atoms.get(atom).copied()
    }
}

fn atom_value(atom: &AtomRef, reg: &Registry, b: &Bindings, time: f64) -> Result<f64, EvalError> {
    if let Some(v) = b.atom(atom) {
        return Ok(v);
    }
    let arg = b.get(atom.arg()).unwrap_or(time);
    let def = reg
        .atom_def(atom.name())
        .ok_or_else(|| EvalError::NoProfile(atom.name().to_string()))?;
    if def.rule.is_some() && atom.order() > 0 {
        // Higher derivatives of ruled atoms follow the rule, not the profile.
        let lowered = AtomRef::new(atom.name(), atom.order() - 1, atom.arg());
        return reg.atom_derivative(&lowered).eval(reg, b, time);
    }
    let profile = def
        .profile
        .as_ref()
        .ok_or_else(|| EvalError::NoProfile(atom.name().to_string()))?;
    profile.value(atom.order(), arg)
}

impl PhaseExpr {
    /// Evaluates with symbol values from `b`. Atoms read their argument from
    /// `b` when bound, otherwise from `time`.
    pub fn eval(&self, reg: &Registry, b: &Bindings, time: f64) -> Result<f64, EvalError> {
        let mut total = 0.0;
        for (mono, coeff) in self.terms() {
            let mut term = coeff.to_f64().unwrap_or(f64::NAN);
            for (factor, exp) in mono.factors() {
                let base = match factor {
                    Factor::Symbol(s) => {
                        b.get(s).ok_or_else(|| EvalError::Unbound(s.to_string()))?
                    }
                    Factor::Atom(a) => atom_value(a, reg, b, time)?,
                    Factor::Group(g) => g.eval(reg, b, time)?,
                };
                term *= base.powi(exp);
            }
            total += term;
        }
        if total.is_finite() {
            Ok(total)
        } else {
            Err(EvalError::NonFinite {
                context: format!("`{self}`"),
            })
        }
    }
}

#[derive(Clone, Debug)]
enum Slot {
    State(usize),
    Const(f64),
    Time,
    Atom(usize),
    Expr(Box<CExpr>),
}

#[derive(Clone, Debug)]
struct CExpr {
    terms: Vec<(f64, Vec<(Slot, i32)>)>,
}

#[derive(Clone, Debug)]
struct CAtom {
    profile: Arc<Profile>,
    order: u32,
    arg: Slot,
}

/// Expressions lowered to flat numeric form over an ordered state layout.
/// Symbols in the layout read from the state vector; other symbols must be
/// bound at compile time, except `time_name`, which reads the integration
/// parameter.
#[derive(Clone, Debug)]
pub struct CompiledSystem {
    atoms: Vec<CAtom>,
    exprs: Vec<CExpr>,
    texts: Vec<String>,
}

struct Compiler<'a> {
    reg: &'a Registry,
    layout: &'a [&'a str],
    b: &'a Bindings,
    time_name: &'a str,
    atoms: Vec<(AtomRef, CAtom)>,
}

impl Compiler<'_> {
    fn symbol_slot(&self, name: &str) -> Result<Slot, EvalError> {
        if let Some(i) = self.layout.iter().position(|v| *v == name) {
            Ok(Slot::State(i))
        } else if let Some(v) = self.b.get(name) {
            Ok(Slot::Const(v))
        } else if name == self.time_name {
            Ok(Slot::Time)
        } else {
            Err(EvalError::Unbound(name.to_string()))
        }
    }

    fn atom_slot(&mut self, atom: &AtomRef) -> Result<Slot, EvalError> {
        if let Some(v) = self.b.atom(atom) {
            return Ok(Slot::Const(v));
        }
        if let Some(i) = self.atoms.iter().position(|(a, _)| a == atom) {
            return Ok(Slot::Atom(i));
        }
        let def = self
            .reg
            .atom_def(atom.name())
            .ok_or_else(|| EvalError::NoProfile(atom.name().to_string()))?;
        if def.rule.is_some() && atom.order() > 0 {
            let lowered = AtomRef::new(atom.name(), atom.order() - 1, atom.arg());
            let expr = self.reg.atom_derivative(&lowered);
            return Ok(Slot::Expr(Box::new(self.lower(&expr)?)));
        }
        let profile = def
            .profile
            .clone()
            .ok_or_else(|| EvalError::NoProfile(atom.name().to_string()))?;
        let arg = match self.symbol_slot(atom.arg()) {
            Ok(slot) => slot,
            Err(_) => Slot::Time,
        };
        self.atoms.push((
            atom.clone(),
            CAtom {
                profile,
                order: atom.order(),
                arg,
            },
        ));
        Ok(Slot::Atom(self.atoms.len() - 1))
    }

    fn lower(&mut self, e: &PhaseExpr) -> Result<CExpr, EvalError> {
        let mut terms = Vec::with_capacity(e.len());
        for (mono, coeff) in e.terms() {
            let mut factors = Vec::new();
            for (factor, exp) in mono.factors() {
                let slot = match factor {
                    Factor::Symbol(s) => self.symbol_slot(s)?,
                    Factor::Atom(a) => self.atom_slot(a)?,
                    Factor::Group(g) => Slot::Expr(Box::new(self.lower(g)?)),
                };
                factors.push((slot, exp));
            }
            terms.push((coeff.to_f64().unwrap_or(f64::NAN), factors));
        }
        Ok(CExpr { terms })
    }
}

fn slot_value(slot: &Slot, time: f64, state: &[f64], atoms: &[f64]) -> f64 {
    match slot {
        Slot::State(i) => state[*i],
        Slot::Const(v) => *v,
        Slot::Time => time,
        Slot::Atom(i) => atoms[*i],
        Slot::Expr(e) => e.eval(time, state, atoms),
    }
}

impl CExpr {
    fn eval(&self, time: f64, state: &[f64], atoms: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(c, factors)| {
                factors.iter().fold(*c, |acc, (slot, exp)| {
                    acc * slot_value(slot, time, state, atoms).powi(*exp)
                })
            })
            .sum()
    }
}

impl CompiledSystem {
    pub fn new(
        exprs: &[PhaseExpr],
        reg: &Registry,
        layout: &[&str],
        b: &Bindings,
        time_name: &str,
    ) -> Result<Self, EvalError> {
        let mut c = Compiler {
            reg,
            layout,
            b,
            time_name,
            atoms: Vec::new(),
        };
        let lowered = exprs
            .iter()
            .map(|e| c.lower(e))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            atoms: c.atoms.into_iter().map(|(_, a)| a).collect(),
            exprs: lowered,
            texts: exprs.iter().map(|e| e.to_string()).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.exprs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exprs.is_empty()
    }

    pub fn eval_into(&self, time: f64, state: &[f64], out: &mut [f64]) -> Result<(), EvalError> {
        let mut atom_values = Vec::with_capacity(self.atoms.len());
        for a in &self.atoms {
            let arg = slot_value(&a.arg, time, state, &[]);
            atom_values.push(a.profile.value(a.order, arg)?);
        }
        for (i, e) in self.exprs.iter().enumerate() {
            let v = e.eval(time, state, &atom_values);
            if !v.is_finite() {
                return Err(EvalError::NonFinite {
                    context: format!("`{}` at parameter {time}", self.texts[i]),
                });
            }
            out[i] = v;
        }
        Ok(())
    }

    pub fn eval(&self, time: f64, state: &[f64]) -> Result<Vec<f64>, EvalError> {
        let mut out = vec![0.0; self.exprs.len()];
        self.eval_into(time, state, &mut out)?;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Registry;

    fn oscillator_with_profiles(omega: f64, eta: f64) -> Registry {
        let mut reg = Registry::oscillator();
        reg.set_profile("w", Profile::Constant(omega)).unwrap();
        reg.set_profile("eta_fric", Profile::Constant(eta)).unwrap();
        reg.set_profile("f", Profile::Damping(Box::new(Profile::Constant(eta))))
            .unwrap();
        reg
    }

    #[test]
    fn product_of_bound_symbols() {
        let reg = Registry::oscillator();
        let e = reg.parse("x1*p1").unwrap();
        let b = Bindings::new().with("x1", 2.0).with("p1", 3.0);
        assert_eq!(e.eval(&reg, &b, 0.0).unwrap(), 6.0);
    }

    #[test]
    fn hamiltonian_hand_value() {
        let reg = oscillator_with_profiles(2.0, 0.0);
        let h = reg
            .parse("f(t)*(p1^2+p2^2)/(2*m) + (m*w(t)^2/(2*f(t)))*(x1^2+x2^2)")
            .unwrap();
        let b = Bindings::new()
            .with("x1", 1.0)
            .with("x2", 0.0)
            .with("p1", 0.0)
            .with("p2", 0.0)
            .with("m", 1.0);
        assert_eq!(h.eval(&reg, &b, 0.0).unwrap(), 2.0);
    }

    #[test]
    fn unbound_and_non_finite() {
        let reg = Registry::oscillator();
        let e = reg.parse("x1/m").unwrap();
        assert_eq!(
            e.eval(&reg, &Bindings::new().with("x1", 1.0), 0.0),
            Err(EvalError::Unbound("m".into()))
        );
        let b = Bindings::new().with("x1", 1.0).with("m", 0.0);
        assert!(matches!(
            e.eval(&reg, &b, 0.0),
            Err(EvalError::NonFinite { .. })
        ));
        assert!(matches!(
            reg.parse("f(t)").unwrap().eval(&reg, &Bindings::new(), 0.0),
            Err(EvalError::NoProfile(_))
        ));
    }

    #[test]
    fn compiled_matches_tree_walk() {
        let reg = oscillator_with_profiles(1.7, 0.3);
        let exprs = [
            reg.parse("lam*f(t)*p1/m").unwrap(),
            reg.parse("-lam*m*w(t)^2*x1/f(t) + (x1 + p1)^-1").unwrap(),
            reg.parse("f_d1(t)*x2").unwrap(),
        ];
        let b = Bindings::new().with("m", 1.3).with("lam", 2.0);
        let sys = CompiledSystem::new(&exprs, &reg, &["x1", "x2", "t", "p1"], &b, "tau").unwrap();
        let state = [0.4, -0.2, 1.5, 0.9];
        let out = sys.eval(0.0, &state).unwrap();
        let full = b
            .clone()
            .with("x1", 0.4)
            .with("x2", -0.2)
            .with("t", 1.5)
            .with("p1", 0.9);
        for (e, v) in exprs.iter().zip(out) {
            let direct = e.eval(&reg, &full, 0.0).unwrap();
            assert!((direct - v).abs() < 1e-14, "{e}: {direct} vs {v}");
        }
    }

    #[test]
    fn compiled_time_argument() {
        let reg = oscillator_with_profiles(2.0, 0.1);
        let sys = CompiledSystem::new(
            &[reg.parse("f(t)").unwrap()],
            &reg,
            &["x1"],
            &Bindings::new(),
            "t",
        )
        .unwrap();
        let v = sys.eval(1.0, &[0.0]).unwrap()[0];
        assert!((v - (-0.1f64).exp()).abs() < 1e-15);
    }
}
