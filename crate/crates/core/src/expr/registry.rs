use std::collections::BTreeMap;
use std::sync::Arc;

use thiserror::Error;

use super::{parse, AtomRef, ParseError, PhaseExpr, Profile};

/// Role of a declared symbol.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SymbolKind {
    /// Canonical coordinate or momentum of some chart.
    Canonical,
    Velocity,
    /// Constant parameter such as a mass or a Lagrange multiplier.
    Parameter,
    /// Explicit time or evolution parameter; atoms may depend on it.
    Time,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegistryError {
    #[error("invalid identifier `{0}`")]
    InvalidIdentifier(String),
    #[error("`{0}` is already declared")]
    Duplicate(String),
    #[error("unknown atom `{0}`")]
    UnknownAtom(String),
    #[error("derivative rule for `{atom}` may only use parameters, found `{symbol}`")]
    RuleSymbol { atom: String, symbol: String },
    #[error(transparent)]
    Parse(#[from] ParseError),
}

/// A coefficient function of one time-like variable.
#[derive(Clone, Debug)]
pub struct AtomDef {
    /// First derivative, written with any argument; retargeted on use.
    pub rule: Option<PhaseExpr>,
    pub profile: Option<Arc<Profile>>,
}

/// Declared symbols and coefficient atoms. Built up front, then shared
/// immutably by parsing, differentiation and evaluation.
#[derive(Clone, Debug, Default)]
pub struct Registry {
    symbols: BTreeMap<String, SymbolKind>,
    atoms: BTreeMap<String, AtomDef>,
}

pub(crate) fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic())
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Splits `name_dK` into `(name, K)`.
fn split_derivative_suffix(ident: &str) -> Option<(&str, u32)> {
    let idx = ident.rfind("_d")?;
    let digits = &ident[idx + 2..];
    if digits.is_empty() || !digits.chars().all(|c| c.is_ascii_digit()) {
        return None;
    }
    Some((&ident[..idx], digits.parse().ok()?))
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Symbols and atoms of the two-dimensional damped oscillator in both the
    /// original and the extended chart.
    ///
    /// The extended time coordinate shares the name `t` with the original
    /// time; `pt` is its conjugate momentum and `tau` the evolution parameter.
    /// `f` carries the rule `f' = -eta_fric*f`; `w` and `eta_fric` have none.
    pub fn oscillator() -> Self {
        let mut reg = Self::new();
        for s in ["x1", "x2", "p1", "p2", "pt"] {
            reg.declare(s, SymbolKind::Canonical).unwrap();
        }
        for s in ["x1dot", "x2dot", "tdot"] {
            reg.declare(s, SymbolKind::Velocity).unwrap();
        }
        for s in ["m", "lam", "nu"] {
            reg.declare(s, SymbolKind::Parameter).unwrap();
        }
        reg.declare("t", SymbolKind::Time).unwrap();
        reg.declare("tau", SymbolKind::Time).unwrap();
        reg.declare_atom("w", None).unwrap();
        reg.declare_atom("eta_fric", None).unwrap();
        let rule = PhaseExpr::atom(AtomRef::new("eta_fric", 0, "t"))
            .mul_expr(&PhaseExpr::atom(AtomRef::new("f", 0, "t")))
            .neg_expr();
        reg.declare_atom("f", Some(rule)).unwrap();
        reg
    }

    pub fn declare(&mut self, name: &str, kind: SymbolKind) -> Result<(), RegistryError> {
        if !is_identifier(name) {
            return Err(RegistryError::InvalidIdentifier(name.into()));
        }
        if self.symbols.contains_key(name) || self.atoms.contains_key(name) {
            return Err(RegistryError::Duplicate(name.into()));
        }
        self.symbols.insert(name.into(), kind);
        Ok(())
    }

    /// Declares an atom, optionally with a first-derivative rule. The rule may
    /// only contain atoms, parameters and constants.
    pub fn declare_atom(
        &mut self,
        name: &str,
        rule: Option<PhaseExpr>,
    ) -> Result<(), RegistryError> {
        if !is_identifier(name) || split_derivative_suffix(name).is_some() {
            return Err(RegistryError::InvalidIdentifier(name.into()));
        }
        if self.symbols.contains_key(name) || self.atoms.contains_key(name) {
            return Err(RegistryError::Duplicate(name.into()));
        }
        if let Some(rule) = &rule {
            self.check_rule(name, rule)?;
        }
        self.atoms.insert(
            name.into(),
            AtomDef {
                rule,
                profile: None,
            },
        );
        Ok(())
    }

    fn check_rule(&self, atom: &str, rule: &PhaseExpr) -> Result<(), RegistryError> {
        let args: Vec<String> = rule.atoms().iter().map(|a| a.arg().to_string()).collect();
        for s in rule.symbols() {
            if args.contains(&s) {
                continue;
            }
            if self.kind(&s) != Some(SymbolKind::Parameter) {
                return Err(RegistryError::RuleSymbol {
                    atom: atom.into(),
                    symbol: s,
                });
            }
        }
        Ok(())
    }

    pub fn set_profile(&mut self, atom: &str, profile: Profile) -> Result<(), RegistryError> {
        let def = self
            .atoms
            .get_mut(atom)
            .ok_or_else(|| RegistryError::UnknownAtom(atom.into()))?;
        def.profile = Some(Arc::new(profile));
        Ok(())
    }

    pub fn kind(&self, name: &str) -> Option<SymbolKind> {
        self.symbols.get(name).copied()
    }

    pub fn symbols(&self) -> impl Iterator<Item = (&str, SymbolKind)> {
        self.symbols.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn atom_def(&self, name: &str) -> Option<&AtomDef> {
        self.atoms.get(name)
    }

    /// Resolves an atom identifier, accepting the `name_dK` derivative form.
    pub fn resolve_atom(&self, ident: &str) -> Option<(&str, u32)> {
        if let Some((k, _)) = self.atoms.get_key_value(ident) {
            return Some((k.as_str(), 0));
        }
        let (base, order) = split_derivative_suffix(ident)?;
        self.atoms
            .get_key_value(base)
            .map(|(k, _)| (k.as_str(), order))
    }

    /// Derivative of an atom with respect to its own argument.
    pub fn atom_derivative(&self, atom: &AtomRef) -> PhaseExpr {
        match self.atoms.get(atom.name()).and_then(|d| d.rule.as_ref()) {
            Some(rule) => {
                let mut e = rule.retarget_atoms(atom.arg());
                for _ in 0..atom.order() {
                    e = e.diff(atom.arg(), self);
                }
                e
            }
            None => PhaseExpr::atom(atom.next_order()),
        }
    }

    /// Parses expression text against the declared symbols and atoms.
    pub fn parse(&self, text: &str) -> Result<PhaseExpr, ParseError> {
        parse::parse(text, self)
    }
}
