//! Symbolic phase-space expressions.
//!
//! A [`PhaseExpr`] is stored in a canonical sum-of-terms form: every term is an
//! exact rational coefficient times a [`Monomial`], and a monomial is a sorted
//! list of `(factor, integer exponent)` pairs. Factors are symbols (canonical
//! variables, velocities, parameters), coefficient atoms such as `f(t)`, or a
//! non-expandable group (a sum raised to a negative power). Construction
//! always yields the canonical form, so structural equality decides equality
//! for Laurent polynomials in symbols and atoms, and `simplify` is the
//! identity.

mod chart;
mod eval;
mod matrix;
mod parse;
mod profile;
mod registry;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

pub use chart::{Chart, ChartError};
pub use eval::{Bindings, CompiledSystem, EvalError};
pub use matrix::{ExprMatrix, MatrixError};
pub use parse::ParseError;
pub use profile::{ExprProfile, Profile};
pub use registry::{AtomDef, Registry, RegistryError, SymbolKind};

/// Exact coefficient type.
pub type Rational = num_rational::BigRational;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExprError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("atom argument `{0}` can only be replaced by a bare symbol")]
    AtomArgument(String),
}

/// Reference to a coefficient atom: a named function of one variable,
/// differentiated `order` times.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AtomRef {
    name: Arc<str>,
    order: u32,
    arg: Arc<str>,
}

impl AtomRef {
    pub fn new(name: &str, order: u32, arg: &str) -> Self {
        Self {
            name: name.into(),
            order,
            arg: arg.into(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn arg(&self) -> &str {
        &self.arg
    }

    pub(crate) fn next_order(&self) -> Self {
        Self {
            name: self.name.clone(),
            order: self.order + 1,
            arg: self.arg.clone(),
        }
    }

    pub(crate) fn with_arg(&self, arg: &str) -> Self {
        Self {
            name: self.name.clone(),
            order: self.order,
            arg: arg.into(),
        }
    }
}

impl fmt::Display for AtomRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.order == 0 {
            write!(f, "{}({})", self.name, self.arg)
        } else {
            write!(f, "{}_d{}({})", self.name, self.order, self.arg)
        }
    }
}

/// Multiplicative building block of a monomial.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Factor {
    Symbol(Arc<str>),
    Atom(AtomRef),
    /// Primitive multi-term sum; only ever carries a negative exponent.
    Group(PhaseExpr),
}

/// Sorted product of factors with nonzero integer exponents.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Monomial(Vec<(Factor, i32)>);

impl Monomial {
    pub fn one() -> Self {
        Self(Vec::new())
    }

    fn single(factor: Factor, exp: i32) -> Self {
        if exp == 0 {
            Self::one()
        } else {
            Self(vec![(factor, exp)])
        }
    }

    pub fn is_one(&self) -> bool {
        self.0.is_empty()
    }

    pub fn factors(&self) -> impl Iterator<Item = (&Factor, i32)> {
        self.0.iter().map(|(f, e)| (f, *e))
    }

    pub fn exponent_of(&self, factor: &Factor) -> i32 {
        self.0
            .binary_search_by(|(f, _)| f.cmp(factor))
            .map(|i| self.0[i].1)
            .unwrap_or(0)
    }

    fn mul(&self, other: &Monomial) -> Monomial {
        let mut out = Vec::with_capacity(self.0.len() + other.0.len());
        let (mut i, mut j) = (0, 0);
        while i < self.0.len() && j < other.0.len() {
            let (fa, ea) = &self.0[i];
            let (fb, eb) = &other.0[j];
            match fa.cmp(fb) {
                std::cmp::Ordering::Less => {
                    out.push((fa.clone(), *ea));
                    i += 1;
                }
                std::cmp::Ordering::Greater => {
                    out.push((fb.clone(), *eb));
                    j += 1;
                }
                std::cmp::Ordering::Equal => {
                    let e = ea + eb;
                    if e != 0 {
                        out.push((fa.clone(), e));
                    }
                    i += 1;
                    j += 1;
                }
            }
        }
        out.extend_from_slice(&self.0[i..]);
        out.extend_from_slice(&other.0[j..]);
        Monomial(out)
    }

    fn pow(&self, n: i32) -> Monomial {
        if n == 0 {
            return Monomial::one();
        }
        Monomial(self.0.iter().map(|(f, e)| (f.clone(), e * n)).collect())
    }

    fn with_exponent(&self, idx: usize, exp: i32) -> Monomial {
        let mut v = self.0.clone();
        if exp == 0 {
            v.remove(idx);
        } else {
            v[idx].1 = exp;
        }
        Monomial(v)
    }

    fn has_positive_group(&self) -> bool {
        self.0
            .iter()
            .any(|(f, e)| matches!(f, Factor::Group(_)) && *e > 0)
    }
}

/// Immutable symbolic expression in canonical form.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PhaseExpr {
    terms: Arc<BTreeMap<Monomial, Rational>>,
}

/// Integer as an exact rational.
pub fn rat(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

fn rat_pow(base: &Rational, n: i32) -> Rational {
    let p = num_traits::pow::pow(base.clone(), n.unsigned_abs() as usize);
    if n < 0 {
        p.recip()
    } else {
        p
    }
}

/// Parses a decimal literal (`12`, `0.25`, `1e-3`, `2.5E+4`) into an exact rational.
pub fn rational_from_decimal(text: &str) -> Option<Rational> {
    let (mantissa, exp) = match text.find(['e', 'E']) {
        Some(i) => (&text[..i], text[i + 1..].parse::<i32>().ok()?),
        None => (text, 0),
    };
    let (neg, mantissa) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa),
    };
    let (int_part, frac_part) = match mantissa.split_once('.') {
        Some((a, b)) => (a, b),
        None => (mantissa, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part
        .chars()
        .chain(frac_part.chars())
        .all(|c| c.is_ascii_digit())
    {
        return None;
    }
    let digits = format!("{int_part}{frac_part}");
    let numer: BigInt = if digits.is_empty() {
        BigInt::zero()
    } else {
        digits.parse().ok()?
    };
    let scale = exp - frac_part.len() as i32;
    let ten = rat(10);
    let mut value = Rational::from_integer(numer) * rat_pow(&ten, scale);
    if neg {
        value = -value;
    }
    Some(value)
}

/// Exact rational for the shortest decimal representation of `x`.
pub fn rational_from_f64(x: f64) -> Option<Rational> {
    if !x.is_finite() {
        return None;
    }
    rational_from_decimal(&format!("{x}"))
}

impl PhaseExpr {
    fn from_map(map: BTreeMap<Monomial, Rational>) -> Self {
        Self {
            terms: Arc::new(map),
        }
    }

    fn from_term(mono: Monomial, coeff: Rational) -> Self {
        let mut map = BTreeMap::new();
        if !coeff.is_zero() {
            map.insert(mono, coeff);
        }
        Self::from_map(map)
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn one() -> Self {
        Self::from_term(Monomial::one(), Rational::one())
    }

    pub fn int(n: i64) -> Self {
        Self::from_term(Monomial::one(), rat(n))
    }

    pub fn constant(c: Rational) -> Self {
        Self::from_term(Monomial::one(), c)
    }

    /// Exact constant from the shortest decimal form of a finite float.
    pub fn from_f64(x: f64) -> Option<Self> {
        rational_from_f64(x).map(Self::constant)
    }

    pub fn symbol(name: &str) -> Self {
        Self::from_term(
            Monomial::single(Factor::Symbol(name.into()), 1),
            Rational::one(),
        )
    }

    pub fn atom(atom: AtomRef) -> Self {
        Self::from_term(Monomial::single(Factor::Atom(atom), 1), Rational::one())
    }

    /// Builds an expression from `(monomial, coefficient)` pairs, merging duplicates.
    fn collect<I: IntoIterator<Item = (Monomial, Rational)>>(items: I) -> Self {
        let mut map: BTreeMap<Monomial, Rational> = BTreeMap::new();
        for (m, c) in items {
            if c.is_zero() {
                continue;
            }
            match map.entry(m) {
                std::collections::btree_map::Entry::Vacant(v) => {
                    v.insert(c);
                }
                std::collections::btree_map::Entry::Occupied(mut o) => {
                    let sum = o.get() + c;
                    if sum.is_zero() {
                        o.remove();
                    } else {
                        *o.get_mut() = sum;
                    }
                }
            }
        }
        Self::from_map(map)
    }

    /// Term with possibly positive group exponents, expanded into canonical form.
    fn normalized_term(mono: Monomial, coeff: Rational) -> Self {
        if !mono.has_positive_group() {
            return Self::from_term(mono, coeff);
        }
        let mut rest = Vec::new();
        let mut out = Self::constant(coeff);
        for (f, e) in mono.0 {
            match f {
                Factor::Group(g) if e > 0 => out = out.mul_expr(&g.pow_expanded(e as u32)),
                other => rest.push((other, e)),
            }
        }
        out.mul_expr(&Self::from_term(Monomial(rest), Rational::one()))
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_one(&self) -> bool {
        self.as_constant().is_some_and(|c| c.is_one())
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &Rational)> {
        self.terms.iter()
    }

    /// Constant value, if the expression has no symbolic content.
    pub fn as_constant(&self) -> Option<Rational> {
        match self.terms.len() {
            0 => Some(Rational::zero()),
            1 => {
                let (m, c) = self.terms.iter().next().unwrap();
                m.is_one().then(|| c.clone())
            }
            _ => None,
        }
    }

    pub fn as_f64_constant(&self) -> Option<f64> {
        self.as_constant().and_then(|c| c.to_f64())
    }

    fn single_term(&self) -> Option<(&Monomial, &Rational)> {
        (self.terms.len() == 1).then(|| self.terms.iter().next().unwrap())
    }

    /// `simplify` is the identity on canonical expressions.
    pub fn simplify(&self) -> Self {
        self.clone()
    }

    pub fn add_expr(&self, other: &PhaseExpr) -> Self {
        if self.is_zero() {
            return other.clone();
        }
        if other.is_zero() {
            return self.clone();
        }
        Self::collect(
            self.terms
                .iter()
                .chain(other.terms.iter())
                .map(|(m, c)| (m.clone(), c.clone())),
        )
    }

    pub fn neg_expr(&self) -> Self {
        Self::from_map(self.terms.iter().map(|(m, c)| (m.clone(), -c)).collect())
    }

    pub fn sub_expr(&self, other: &PhaseExpr) -> Self {
        self.add_expr(&other.neg_expr())
    }

    pub fn scale(&self, k: &Rational) -> Self {
        if k.is_zero() {
            return Self::zero();
        }
        Self::from_map(self.terms.iter().map(|(m, c)| (m.clone(), c * k)).collect())
    }

    pub fn mul_expr(&self, other: &PhaseExpr) -> Self {
        if self.is_zero() || other.is_zero() {
            return Self::zero();
        }
        // Cancel a group base against a matching multi-term factor before distributing.
        if other.len() > 1 {
            if let Some(out) = Self::mul_cancelling(self, other) {
                return out;
            }
        }
        if self.len() > 1 {
            if let Some(out) = Self::mul_cancelling(other, self) {
                return out;
            }
        }
        let mut items = Vec::with_capacity(self.len() * other.len());
        for (ma, ca) in self.terms.iter() {
            for (mb, cb) in other.terms.iter() {
                items.push((ma.mul(mb), ca * cb));
            }
        }
        Self::collect(items)
    }

    /// Multiplies `x` by the multi-term sum `s`, cancelling `Group(s')^e` factors
    /// of `x` where `s = c·μ·s'`. Returns `None` when no term of `x` carries the group.
    fn mul_cancelling(x: &PhaseExpr, s: &PhaseExpr) -> Option<PhaseExpr> {
        let (c, mu, prim) = s.decompose();
        let key = Factor::Group(prim);
        if !x.terms.keys().any(|m| m.exponent_of(&key) < 0) {
            return None;
        }
        let mut out = PhaseExpr::zero();
        for (m, coeff) in x.terms.iter() {
            let e = m.exponent_of(&key);
            if e < 0 {
                let idx = m.0.binary_search_by(|(f, _)| f.cmp(&key)).unwrap();
                let mono = m.with_exponent(idx, e + 1).mul(&mu);
                out = out.add_expr(&Self::normalized_term(mono, coeff * &c));
            } else {
                let mut items = Vec::with_capacity(s.len());
                for (mb, cb) in s.terms.iter() {
                    items.push((m.mul(mb), coeff * cb));
                }
                out = out.add_expr(&Self::collect(items));
            }
        }
        Some(out)
    }

    /// Splits a multi-term sum into `c · μ · s'` where `μ` is the common monomial,
    /// `s'` has first coefficient 1 and no common monomial factor.
    fn decompose(&self) -> (Rational, Monomial, PhaseExpr) {
        let mut common: Option<BTreeMap<Factor, i32>> = None;
        for m in self.terms.keys() {
            let here: BTreeMap<Factor, i32> = m.0.iter().cloned().collect();
            common = Some(match common {
                None => here,
                Some(prev) => {
                    let mut keys: BTreeSet<Factor> = prev.keys().cloned().collect();
                    keys.extend(here.keys().cloned());
                    keys.into_iter()
                        .filter_map(|k| {
                            let a = prev.get(&k).copied().unwrap_or(0);
                            let b = here.get(&k).copied().unwrap_or(0);
                            let lo = a.min(b);
                            (lo != 0).then_some((k, lo))
                        })
                        .collect()
                }
            });
        }
        let mu = Monomial(common.unwrap_or_default().into_iter().collect());
        let inv_mu = mu.pow(-1);
        let divided: BTreeMap<Monomial, Rational> = self
            .terms
            .iter()
            .map(|(m, c)| (m.mul(&inv_mu), c.clone()))
            .collect();
        let lead = divided
            .values()
            .next()
            .cloned()
            .unwrap_or_else(Rational::one);
        let prim = PhaseExpr::from_map(divided.into_iter().map(|(m, c)| (m, c / &lead)).collect());
        (lead, mu, prim)
    }

    fn pow_expanded(&self, n: u32) -> Self {
        let mut result = Self::one();
        let mut base = self.clone();
        let mut k = n;
        while k > 0 {
            if k & 1 == 1 {
                result = result.mul_expr(&base);
            }
            k >>= 1;
            if k > 0 {
                base = base.mul_expr(&base);
            }
        }
        result
    }

    /// Integer power. Negative powers of multi-term sums become group factors.
    pub fn pow(&self, n: i32) -> Result<Self, ExprError> {
        if n == 0 {
            return Ok(Self::one());
        }
        if self.is_zero() {
            return if n > 0 {
                Ok(Self::zero())
            } else {
                Err(ExprError::DivisionByZero)
            };
        }
        if let Some((m, c)) = self.single_term() {
            return Ok(Self::normalized_term(m.pow(n), rat_pow(c, n)));
        }
        if n > 0 {
            return Ok(self.pow_expanded(n as u32));
        }
        let (c, mu, prim) = self.decompose();
        let mono = mu.pow(n).mul(&Monomial::single(Factor::Group(prim), n));
        Ok(Self::from_term(mono, rat_pow(&c, n)))
    }

    pub fn recip(&self) -> Result<Self, ExprError> {
        self.pow(-1)
    }

    pub fn checked_div(&self, other: &PhaseExpr) -> Result<Self, ExprError> {
        Ok(self.mul_expr(&other.recip()?))
    }

    /// Exact partial derivative with respect to a symbol. Atoms whose argument
    /// is `var` are differentiated through the registry's derivative rules.
    pub fn diff(&self, var: &str, reg: &Registry) -> Self {
        self.diff_by(&|factor: &Factor| match factor {
            Factor::Symbol(s) => {
                if &**s == var {
                    Self::one()
                } else {
                    Self::zero()
                }
            }
            Factor::Atom(a) => {
                if a.arg() == var {
                    reg.atom_derivative(a)
                } else {
                    Self::zero()
                }
            }
            Factor::Group(g) => g.diff(var, reg),
        })
    }

    /// Partial derivative treating the given atom as an independent symbol.
    pub fn diff_atom(&self, atom: &AtomRef) -> Self {
        self.diff_by(&|factor: &Factor| match factor {
            Factor::Atom(a) if a == atom => Self::one(),
            Factor::Group(g) => g.diff_atom(atom),
            _ => Self::zero(),
        })
    }

    fn diff_by(&self, d: &dyn Fn(&Factor) -> PhaseExpr) -> Self {
        let mut out = Self::zero();
        for (mono, coeff) in self.terms.iter() {
            for (idx, (factor, exp)) in mono.0.iter().enumerate() {
                let inner = d(factor);
                if inner.is_zero() {
                    continue;
                }
                let reduced = mono.with_exponent(idx, exp - 1);
                let term = Self::normalized_term(reduced, coeff * rat(*exp as i64));
                out = out.add_expr(&term.mul_expr(&inner));
            }
        }
        out
    }

    /// Replaces `var` by `value`. Atoms whose argument is `var` follow the
    /// replacement only when it is a bare symbol.
    pub fn subs(&self, var: &str, value: &PhaseExpr) -> Result<Self, ExprError> {
        if !self.depends_on(var) {
            return Ok(self.clone());
        }
        let mut out = Self::zero();
        for (mono, coeff) in self.terms.iter() {
            let mut term = Self::constant(coeff.clone());
            let mut kept = Vec::new();
            for (factor, exp) in mono.0.iter() {
                match factor {
                    Factor::Symbol(s) if &**s == var => term = term.mul_expr(&value.pow(*exp)?),
                    Factor::Atom(a) if a.arg() == var => {
                        let name = value
                            .as_symbol()
                            .ok_or_else(|| ExprError::AtomArgument(var.to_string()))?;
                        kept.push((Factor::Atom(a.with_arg(name)), *exp));
                    }
                    Factor::Group(g) if g.depends_on(var) => {
                        term = term.mul_expr(&g.subs(var, value)?.pow(*exp)?)
                    }
                    other => kept.push((other.clone(), *exp)),
                }
            }
            kept.sort_by(|a, b| a.0.cmp(&b.0));
            let rest = Self::from_term(Monomial(kept), Rational::one());
            out = out.add_expr(&term.mul_expr(&rest));
        }
        Ok(out)
    }

    /// Name of the symbol, if the expression is exactly one bare symbol.
    pub fn as_symbol(&self) -> Option<&str> {
        let (m, c) = self.single_term()?;
        if !c.is_one() || m.0.len() != 1 || m.0[0].1 != 1 {
            return None;
        }
        match &m.0[0].0 {
            Factor::Symbol(s) => Some(s),
            _ => None,
        }
    }

    /// True when `var` occurs directly or as the argument of an atom.
    pub fn depends_on(&self, var: &str) -> bool {
        self.terms.keys().any(|m| {
            m.0.iter().any(|(f, _)| match f {
                Factor::Symbol(s) => &**s == var,
                Factor::Atom(a) => a.arg() == var,
                Factor::Group(g) => g.depends_on(var),
            })
        })
    }

    /// Symbols the expression depends on, including atom arguments.
    pub fn symbols(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.visit_factors(&mut |f| match f {
            Factor::Symbol(s) => {
                out.insert(s.to_string());
            }
            Factor::Atom(a) => {
                out.insert(a.arg().to_string());
            }
            Factor::Group(_) => {}
        });
        out
    }

    pub fn atoms(&self) -> BTreeSet<AtomRef> {
        let mut out = BTreeSet::new();
        self.visit_factors(&mut |f| {
            if let Factor::Atom(a) = f {
                out.insert(a.clone());
            }
        });
        out
    }

    fn visit_factors(&self, visit: &mut dyn FnMut(&Factor)) {
        for m in self.terms.keys() {
            for (f, _) in m.0.iter() {
                visit(f);
                if let Factor::Group(g) = f {
                    g.visit_factors(visit);
                }
            }
        }
    }

    /// Moves every atom onto argument `arg`.
    pub fn retarget_atoms(&self, arg: &str) -> Self {
        let mut out = Self::zero();
        for (mono, coeff) in self.terms.iter() {
            let mut term = Self::constant(coeff.clone());
            for (f, e) in mono.0.iter() {
                let base = match f {
                    Factor::Atom(a) => Self::atom(a.with_arg(arg)),
                    Factor::Group(g) => g.retarget_atoms(arg),
                    Factor::Symbol(s) => Self::symbol(s),
                };
                term = term.mul_expr(&base.pow(*e).expect("nonzero factor"));
            }
            out = out.add_expr(&term);
        }
        out
    }

    /// True if every term is a non-negative power of `var` times factors free of `var`.
    pub fn is_polynomial_in(&self, var: &str) -> bool {
        self.terms.keys().all(|m| {
            m.0.iter().all(|(f, e)| match f {
                Factor::Symbol(s) => &**s != var || *e >= 0,
                Factor::Atom(a) => a.arg() != var,
                Factor::Group(g) => !g.depends_on(var),
            })
        })
    }

    /// Antiderivative in `var` vanishing at `var = 0`, for expressions polynomial in `var`.
    pub fn integrate_polynomial(&self, var: &str) -> Option<Self> {
        if !self.is_polynomial_in(var) {
            return None;
        }
        let key = Factor::Symbol(var.into());
        let items = self.terms.iter().map(|(m, c)| {
            let k = m.exponent_of(&key);
            let raised = m.mul(&Monomial::single(key.clone(), 1));
            (raised, c / rat(k as i64 + 1))
        });
        Some(Self::collect(items))
    }
}

impl Add for PhaseExpr {
    type Output = PhaseExpr;
    fn add(self, rhs: PhaseExpr) -> PhaseExpr {
        self.add_expr(&rhs)
    }
}

impl Add<&PhaseExpr> for &PhaseExpr {
    type Output = PhaseExpr;
    fn add(self, rhs: &PhaseExpr) -> PhaseExpr {
        self.add_expr(rhs)
    }
}

impl Sub for PhaseExpr {
    type Output = PhaseExpr;
    fn sub(self, rhs: PhaseExpr) -> PhaseExpr {
        self.sub_expr(&rhs)
    }
}

impl Sub<&PhaseExpr> for &PhaseExpr {
    type Output = PhaseExpr;
    fn sub(self, rhs: &PhaseExpr) -> PhaseExpr {
        self.sub_expr(rhs)
    }
}

impl Mul for PhaseExpr {
    type Output = PhaseExpr;
    fn mul(self, rhs: PhaseExpr) -> PhaseExpr {
        self.mul_expr(&rhs)
    }
}

impl Mul<&PhaseExpr> for &PhaseExpr {
    type Output = PhaseExpr;
    fn mul(self, rhs: &PhaseExpr) -> PhaseExpr {
        self.mul_expr(rhs)
    }
}

impl Neg for PhaseExpr {
    type Output = PhaseExpr;
    fn neg(self) -> PhaseExpr {
        self.neg_expr()
    }
}

impl Neg for &PhaseExpr {
    type Output = PhaseExpr;
    fn neg(self) -> PhaseExpr {
        self.neg_expr()
    }
}

fn write_factor(f: &mut fmt::Formatter<'_>, factor: &Factor, exp: i32) -> fmt::Result {
    match factor {
        Factor::Symbol(s) => write!(f, "{s}")?,
        Factor::Atom(a) => write!(f, "{a}")?,
        Factor::Group(g) => write!(f, "({g})")?,
    }
    if exp != 1 {
        write!(f, "^{exp}")?;
    }
    Ok(())
}

impl fmt::Display for PhaseExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        for (i, (mono, coeff)) in self.terms.iter().enumerate() {
            let negative = coeff.is_negative();
            match (i, negative) {
                (0, true) => write!(f, "-")?,
                (0, false) => {}
                (_, true) => write!(f, " - ")?,
                (_, false) => write!(f, " + ")?,
            }
            let magnitude = coeff.abs();
            let mut first = true;
            if mono.is_one() || !magnitude.is_one() {
                write!(f, "{magnitude}")?;
                first = false;
            }
            for (factor, exp) in mono.0.iter() {
                if !first {
                    write!(f, "*")?;
                }
                write_factor(f, factor, *exp)?;
                first = false;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reg() -> Registry {
        Registry::oscillator()
    }

    fn p(s: &str) -> PhaseExpr {
        reg().parse(s).unwrap()
    }

    #[test]
    fn decimal_literals_are_exact() {
        assert_eq!(rational_from_decimal("0.25").unwrap(), rat(1) / rat(4));
        assert_eq!(rational_from_decimal("1e-3").unwrap(), rat(1) / rat(1000));
        assert_eq!(rational_from_decimal("2.5E+1").unwrap(), rat(25));
        assert_eq!(rational_from_f64(0.1).unwrap(), rat(1) / rat(10));
        assert!(rational_from_decimal("1.2.3").is_none());
        assert!(rational_from_f64(f64::NAN).is_none());
    }

    #[test]
    fn diff_power() {
        let r = reg();
        assert_eq!(p("x1^2").diff("x1", &r), p("2*x1"));
        assert!(p("p1^2/(2*m)").diff("x1", &r).is_zero());
    }

    #[test]
    fn diff_uses_friction_rule() {
        let r = reg();
        assert_eq!(p("f(t)").diff("t", &r), p("-eta_fric(t)*f(t)"));
        assert_eq!(p("f(t)^-1").diff("t", &r), p("eta_fric(t)*f(t)^-1"));
    }

    #[test]
    fn diff_without_rule_raises_order() {
        let r = reg();
        assert_eq!(p("w(t)^2").diff("t", &r), p("2*w(t)*w_d1(t)"));
        assert_eq!(p("w_d1(t)").diff("t", &r), p("w_d2(t)"));
    }

    #[test]
    fn group_cancels_against_matching_sum() {
        let e = p("(x1 + 2*x2)^-1");
        let s = p("3*x1 + 6*x2");
        assert_eq!(e.mul_expr(&s), PhaseExpr::int(3));
        assert_eq!(s.mul_expr(&e), PhaseExpr::int(3));
    }

    #[test]
    fn negative_power_of_sum_extracts_content() {
        let a = p("(2*x1 + 2*x1^2)^-1");
        let b = p("1/2*x1^-1*(1 + x1)^-1");
        assert_eq!(a, b);
    }

    #[test]
    fn subs_and_retarget() {
        let e = p("m*x1dot^2*f(t)");
        let s = e.subs("x1dot", &p("p1/m")).unwrap();
        assert_eq!(s, p("m^-1*p1^2*f(t)"));
        let moved = p("f(t)*w(t)").retarget_atoms("x1");
        assert_eq!(
            moved
                .atoms()
                .iter()
                .map(|a| a.arg().to_string())
                .collect::<Vec<_>>(),
            ["x1", "x1"]
        );
        assert!(p("f(t)").subs("t", &p("t + 1")).is_err());
    }

    #[test]
    fn polynomial_antiderivative() {
        let mut r = Registry::new();
        for s in ["Q1", "T"] {
            r.declare(s, SymbolKind::Canonical).unwrap();
        }
        let e2 = r.parse("3*Q1^2*T + 1").unwrap();
        assert_eq!(
            e2.integrate_polynomial("Q1").unwrap(),
            r.parse("Q1^3*T + Q1").unwrap()
        );
        assert!(r
            .parse("Q1^-1")
            .unwrap()
            .integrate_polynomial("Q1")
            .is_none());
    }

    #[test]
    fn render_matches_determinant_format() {
        assert_eq!(p("m^2/f(t)^2").to_string(), "m^2*f(t)^-2");
        assert_eq!(p("-x1 + 1/2").to_string(), "1/2 - x1");
    }
}
