use std::io::{self, Write};

use serde::Serialize;

use super::{DynamicsError, IntegratorPolicy, SolveStats};
use crate::numeric::CubicSpline;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrajectoryMeta {
    pub integrator: String,
    pub policy: IntegratorPolicy,
    pub stats: SolveStats,
}

/// Sampled solution: a strictly increasing parameter grid and one finite
/// series per variable.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    param: String,
    grid: Vec<f64>,
    vars: Vec<String>,
    series: Vec<Vec<f64>>,
    meta: TrajectoryMeta,
}

impl Trajectory {
    /// `states[k]` is the state at `grid[k]`, ordered like `vars`.
    pub fn from_states(
        param: &str,
        grid: Vec<f64>,
        vars: Vec<String>,
        states: &[Vec<f64>],
        meta: TrajectoryMeta,
    ) -> Result<Self, DynamicsError> {
        if grid.len() != states.len() || states.iter().any(|s| s.len() != vars.len()) {
            return Err(DynamicsError::Shape);
        }
        let ascending = grid.windows(2).all(|w| w[1] > w[0]);
        let descending = grid.windows(2).all(|w| w[1] < w[0]);
        if !(ascending || descending) {
            return Err(DynamicsError::Grid);
        }
        if let Some(k) = states.iter().position(|s| s.iter().any(|v| !v.is_finite())) {
            return Err(DynamicsError::NonFinite { at: grid[k] });
        }
        let series = (0..vars.len())
            .map(|i| states.iter().map(|s| s[i]).collect())
            .collect();
        Ok(Self {
            param: param.to_string(),
            grid,
            vars,
            series,
            meta,
        })
    }

    pub fn param(&self) -> &str {
        &self.param
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn vars(&self) -> &[String] {
        &self.vars
    }

    pub fn meta(&self) -> &TrajectoryMeta {
        &self.meta
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn series(&self, var: &str) -> Option<&[f64]> {
        self.vars
            .iter()
            .position(|v| v == var)
            .map(|i| self.series[i].as_slice())
    }

    pub fn state(&self, k: usize) -> Vec<f64> {
        self.series.iter().map(|s| s[k]).collect()
    }

    pub fn last_state(&self) -> Vec<f64> {
        self.state(self.len() - 1)
    }

    /// Cubic-spline value of `var` at `at`; the grid may run in either direction.
    pub fn interpolate(&self, var: &str, at: f64) -> Result<f64, DynamicsError> {
        let s = self
            .series(var)
            .ok_or_else(|| DynamicsError::UnknownVariable(var.to_string()))?;
        let (mut x, mut y) = (self.grid.clone(), s.to_vec());
        if x.len() > 1 && x[1] < x[0] {
            x.reverse();
            y.reverse();
        }
        let spline = CubicSpline::new(x, y).map_err(|_| DynamicsError::Grid)?;
        spline
            .eval(at, 0)
            .map_err(|_| DynamicsError::OutOfSpan { at })
    }

    /// CSV with a header of the parameter name followed by the variables;
    /// values in scientific notation with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        write_columns(&mut w, &self.param, &self.grid, &self.vars, &self.series)
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii output")
    }
}

pub fn write_columns<W: Write, S: AsRef<str>>(
    w: &mut W,
    param: &str,
    grid: &[f64],
    names: &[S],
    columns: &[Vec<f64>],
) -> io::Result<()> {
    write!(w, "{param}")?;
    for n in names {
        write!(w, ",{}", n.as_ref())?;
    }
    writeln!(w)?;
    for (k, g) in grid.iter().enumerate() {
        write!(w, "{g:.16e}")?;
        for c in columns {
            write!(w, ",{:.16e}", c[k])?;
        }
        writeln!(w)?;
    }
    Ok(())
}
