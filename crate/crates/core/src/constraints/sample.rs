use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::expr::{AtomRef, Bindings, Chart, EvalError, PhaseExpr, Registry};

/// Residual below which a projected point counts as lying on the constraint surface.
pub const SURFACE_TOL: f64 = 1e-10;
const PROJECTION_TOL: f64 = 1e-13;
const PROJECTION_ITERS: usize = 60;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SurfaceError {
    #[error("projection onto the constraint surface stalled at residual {0:e}")]
    NoConvergence(f64),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Seeded source of random evaluation points. Every symbol and every atom
/// occurrence receives an independent value in `[0.5, 1.5)`.
#[derive(Clone, Debug)]
pub struct PointSampler {
    rng: ChaCha8Rng,
}

impl PointSampler {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        self.rng.random_range(lo..hi)
    }

    pub fn bindings(&mut self, exprs: &[&PhaseExpr]) -> Bindings {
        let mut symbols = BTreeSet::new();
        let mut atoms: BTreeSet<AtomRef> = BTreeSet::new();
        for e in exprs {
            symbols.extend(e.symbols());
            atoms.extend(e.atoms());
        }
        let mut b = Bindings::new();
        for s in symbols {
            let v = self.uniform(0.5, 1.5);
            b.set(&s, v);
        }
        for a in atoms {
            let v = self.uniform(0.5, 1.5);
            b.set_atom(a, v);
        }
        b
    }

    /// Random point for `e`, with the chart variables moved onto the surface
    /// `constraints = 0` by Gauss-Newton steps through the pseudo-inverse.
    pub fn surface_point(
        &mut self,
        e: &PhaseExpr,
        constraints: &[PhaseExpr],
        chart: &Chart,
        reg: &Registry,
    ) -> Result<Bindings, SurfaceError> {
        let mut refs: Vec<&PhaseExpr> = vec![e];
        refs.extend(constraints);
        let mut b = self.bindings(&refs);
        let vars: Vec<&str> = chart
            .variables()
            .into_iter()
            .filter(|v| constraints.iter().any(|c| c.depends_on(v)))
            .collect();
        if vars.is_empty() {
            return Ok(b);
        }
        let residual = |b: &Bindings| -> Result<DVector<f64>, EvalError> {
            let vals = constraints
                .iter()
                .map(|c| c.eval(reg, b, 0.0))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(DVector::from_vec(vals))
        };
        let mut r = residual(&b)?;
        for _ in 0..PROJECTION_ITERS {
            if r.amax() < PROJECTION_TOL {
                return Ok(b);
            }
            let mut jac = DMatrix::zeros(constraints.len(), vars.len());
            for (j, v) in vars.iter().enumerate() {
                let z = b.get(v).unwrap_or(0.0);
                let h = 1e-6 * z.abs().max(1.0);
                b.set(v, z + h);
                let up = residual(&b)?;
                b.set(v, z - h);
                let down = residual(&b)?;
                b.set(v, z);
                jac.set_column(j, &((up - down) / (2.0 * h)));
            }
            let pinv = jac
                .pseudo_inverse(1e-12)
                .map_err(|_| SurfaceError::NoConvergence(r.amax()))?;
            let step = pinv * &r;
            for (j, v) in vars.iter().enumerate() {
                b.set(v, b.get(v).unwrap_or(0.0) - step[j]);
            }
            r = residual(&b)?;
        }
        if r.amax() < SURFACE_TOL {
            Ok(b)
        } else {
            Err(SurfaceError::NoConvergence(r.amax()))
        }
    }
}
