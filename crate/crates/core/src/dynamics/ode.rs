use serde::{Deserialize, Serialize};

use super::DynamicsError;
use crate::expr::EvalError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Classical fourth-order Runge-Kutta with step `max_step`.
    Rk4,
    /// Dormand-Prince 5(4) with error control.
    Rk45,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Rk4 => "rk4",
            Method::Rk45 => "rk45",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegratorPolicy {
    pub method: Method,
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_step: f64,
}

impl Default for IntegratorPolicy {
    fn default() -> Self {
        Self {
            method: Method::Rk45,
            abs_tol: 1e-10,
            rel_tol: 1e-10,
            max_step: 0.1,
        }
    }
}

impl IntegratorPolicy {
    pub fn rk4(step: f64) -> Self {
        Self {
            method: Method::Rk4,
            max_step: step,
            ..Self::default()
        }
    }

    pub fn rk45(tol: f64) -> Self {
        Self {
            abs_tol: tol,
            rel_tol: tol,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        let ok = |x: f64| x.is_finite() && x > 0.0;
        if !(ok(self.abs_tol) && ok(self.rel_tol) && ok(self.max_step)) {
            return Err(DynamicsError::Policy(format!(
                "tolerances and max_step must be positive (abs {}, rel {}, max_step {})",
                self.abs_tol, self.rel_tol, self.max_step
            )));
        }
        Ok(())
    }
}

/// Step bookkeeping of one integration.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
    /// Largest embedded error estimate over accepted steps (max norm); zero for RK4.
    pub max_local_error: f64,
}

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

struct Stepper<'a, F> {
    rhs: F,
    n: usize,
    k: [Vec<f64>; 7],
    tmp: Vec<f64>,
    stats: &'a mut SolveStats,
}

fn combo(out: &mut [f64], y: &[f64], h: f64, terms: &[(f64, &[f64])]) {
    for i in 0..out.len() {
        out[i] = y[i] + h * terms.iter().map(|(c, k)| c * k[i]).sum::<f64>();
    }
}

impl<F> Stepper<'_, F>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<(), EvalError>,
{
    fn call(&mut self, t: f64, idx: usize) -> Result<(), DynamicsError> {
        self.stats.rhs_evals += 1;
        let mut out = std::mem::take(&mut self.k[idx]);
        let r = (self.rhs)(t, &self.tmp, &mut out);
        self.k[idx] = out;
        r.map_err(|source| DynamicsError::Eval { at: t, source })
    }

    fn rk4(&mut self, t: f64, y: &[f64], h: f64, out: &mut [f64]) -> Result<(), DynamicsError> {
        self.tmp.copy_from_slice(y);
        self.call(t, 0)?;
        let [k0, ..] = &self.k;
        combo(&mut self.tmp, y, h, &[(0.5, k0)]);
        self.call(t + 0.5 * h, 1)?;
        let [_, k1, ..] = &self.k;
        combo(&mut self.tmp, y, h, &[(0.5, k1)]);
        self.call(t + 0.5 * h, 2)?;
        let [_, _, k2, ..] = &self.k;
        combo(&mut self.tmp, y, h, &[(1.0, k2)]);
        self.call(t + h, 3)?;
        let [k0, k1, k2, k3, ..] = &self.k;
        combo(
            out,
            y,
            h,
            &[
                (1.0 / 6.0, k0),
                (1.0 / 3.0, k1),
                (1.0 / 3.0, k2),
                (1.0 / 6.0, k3),
            ],
        );
        Ok(())
    }

    /// One Dormand-Prince step; `k[0]` must hold `f(t, y)` on entry and
    /// `k[6]` holds `f(t + h, y_new)` on exit.
    fn dopri(
        &mut self,
        t: f64,
        y: &[f64],
        h: f64,
        out: &mut [f64],
        err: &mut [f64],
    ) -> Result<(), DynamicsError> {
        macro_rules! stage {
            ($idx:expr, $c:expr, [$(($a:expr, $k:expr)),*]) => {{
                let k = &self.k;
                combo(&mut self.tmp, y, h, &[$(($a, &k[$k][..])),*]);
                self.call(t + $c * h, $idx)?;
            }};
        }
        stage!(1, C2, [(A21, 0)]);
        stage!(2, C3, [(A31, 0), (A32, 1)]);
        stage!(3, C4, [(A41, 0), (A42, 1), (A43, 2)]);
        stage!(4, C5, [(A51, 0), (A52, 1), (A53, 2), (A54, 3)]);
        stage!(5, 1.0, [(A61, 0), (A62, 1), (A63, 2), (A64, 3), (A65, 4)]);
        let k = &self.k;
        combo(
            out,
            y,
            h,
            &[
                (B1, &k[0]),
                (B3, &k[2]),
                (B4, &k[3]),
                (B5, &k[4]),
                (B6, &k[5]),
            ],
        );
        self.tmp.copy_from_slice(out);
        self.call(t + h, 6)?;
        let k = &self.k;
        for i in 0..self.n {
            err[i] = h
                * (E1 * k[0][i]
                    + E3 * k[2][i]
                    + E4 * k[3][i]
                    + E5 * k[4][i]
                    + E6 * k[5][i]
                    + E7 * k[6][i]);
        }
        Ok(())
    }
}

fn check_finite(t: f64, y: &[f64]) -> Result<(), DynamicsError> {
    if y.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(DynamicsError::NonFinite { at: t })
    }
}

/// Integrates `y' = rhs(t, y)` from `grid[0]` through every grid point.
///
/// The grid must be strictly monotone in either direction; steps are
/// shortened so that every grid point is hit exactly. `guard` runs after
/// each accepted step and may abort the run.
pub fn solve<F, G>(
    rhs: F,
    y0: &[f64],
    grid: &[f64],
    policy: &IntegratorPolicy,
    mut guard: G,
) -> Result<(Vec<Vec<f64>>, SolveStats), DynamicsError>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<(), EvalError>,
    G: FnMut(f64, &[f64]) -> Result<(), DynamicsError>,
{
    policy.validate()?;
    if grid.len() < 2 {
        return Err(DynamicsError::EmptySpan);
    }
    let dir = (grid[1] - grid[0]).signum();
    if dir == 0.0
        || grid.windows(2).any(|w| (w[1] - w[0]) * dir <= 0.0)
        || grid.iter().any(|g| !g.is_finite())
    {
        return Err(DynamicsError::Grid);
    }
    check_finite(grid[0], y0)?;
    let n = y0.len();
    let span = (grid[grid.len() - 1] - grid[0]).abs();
    let mut stats = SolveStats::default();
    let mut st = Stepper {
        rhs,
        n,
        k: std::array::from_fn(|_| vec![0.0; n]),
        tmp: vec![0.0; n],
        stats: &mut stats,
    };
    let mut out = Vec::with_capacity(grid.len());
    out.push(y0.to_vec());
    let mut y = y0.to_vec();
    let mut t = grid[0];
    let mut next = vec![0.0; n];
    let mut err = vec![0.0; n];
    let mut h = match policy.method {
        Method::Rk4 => policy.max_step,
        Method::Rk45 => policy.max_step.min(span / 8.0),
    };
    let mut have_k0 = false;
    guard(t, &y)?;

    for &target in &grid[1..] {
        while (target - t) * dir > 0.0 {
            let remaining = (target - t).abs();
            let (step, last) = match policy.method {
                // Equal substeps per grid interval, so no sliver is left over.
                Method::Rk4 => {
                    let pieces = (remaining / h * (1.0 - 1e-9)).ceil().max(1.0);
                    (remaining / pieces, pieces == 1.0)
                }
                Method::Rk45 if h >= remaining * (1.0 - 1e-9) => (remaining, true),
                Method::Rk45 => (h, false),
            };
            if step < 1e-14 * t.abs().max(span) {
                return Err(DynamicsError::StepUnderflow { at: t });
            }
            match policy.method {
                Method::Rk4 => {
                    st.rk4(t, &y, dir * step, &mut next)?;
                    check_finite(t + dir * step, &next)?;
                    st.stats.accepted += 1;
                }
                Method::Rk45 => {
                    if !have_k0 {
                        st.tmp.copy_from_slice(&y);
                        st.call(t, 0)?;
                        have_k0 = true;
                    }
                    st.dopri(t, &y, dir * step, &mut next, &mut err)?;
                    let norm = (0..n)
                        .map(|i| {
                            let sc =
                                policy.abs_tol + policy.rel_tol * y[i].abs().max(next[i].abs());
                            (err[i] / sc).powi(2)
                        })
                        .sum::<f64>()
                        / n.max(1) as f64;
                    let norm = norm.sqrt();
                    if !norm.is_finite() || next.iter().any(|v| !v.is_finite()) {
                        st.stats.rejected += 1;
                        h = step * 0.2;
                        continue;
                    }
                    let factor = if norm == 0.0 {
                        5.0
                    } else {
                        (0.9 * norm.powf(-0.2)).clamp(0.2, 5.0)
                    };
                    if norm > 1.0 {
                        st.stats.rejected += 1;
                        h = step * factor.min(1.0);
                        continue;
                    }
                    st.stats.accepted += 1;
                    let local = err.iter().fold(0.0f64, |m, e| m.max(e.abs()));
                    st.stats.max_local_error = st.stats.max_local_error.max(local);
                    st.k.swap(0, 6);
                    if !last {
                        h = (step * factor).min(policy.max_step);
                    } else {
                        h = h.max(step * factor).min(policy.max_step);
                    }
                }
            }
            t = if last { target } else { t + dir * step };
            std::mem::swap(&mut y, &mut next);
            guard(t, &y)?;
            if policy.method == Method::Rk4 {
                h = policy.max_step;
            }
        }
        out.push(y.clone());
    }
    Ok((out, stats))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decay(_t: f64, y: &[f64], out: &mut [f64]) -> Result<(), EvalError> {
        out[0] = -y[0];
        Ok(())
    }

    fn grid(a: f64, b: f64, n: usize) -> Vec<f64> {
        (0..=n).map(|k| a + (b - a) * k as f64 / n as f64).collect()
    }

    #[test]
    fn exponential_decay_both_methods() {
        let g = grid(0.0, 2.0, 4);
        let (ys, stats) = solve(decay, &[1.0], &g, &IntegratorPolicy::rk45(1e-12), |_, _| {
            Ok(())
        })
        .unwrap();
        assert!((ys[4][0] - (-2.0f64).exp()).abs() < 1e-11);
        assert!(stats.max_local_error > 0.0 && stats.max_local_error < 1e-11);
        let (ys, _) = solve(decay, &[1.0], &g, &IntegratorPolicy::rk4(1e-3), |_, _| {
            Ok(())
        })
        .unwrap();
        assert!((ys[4][0] - (-2.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn backward_integration() {
        let g = grid(1.0, 0.0, 2);
        let (ys, _) = solve(
            decay,
            &[(-1.0f64).exp()],
            &g,
            &IntegratorPolicy::default(),
            |_, _| Ok(()),
        )
        .unwrap();
        assert!((ys[2][0] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn rejects_bad_input() {
        let p = IntegratorPolicy::default();
        assert!(matches!(
            solve(decay, &[1.0], &[0.0], &p, |_, _| Ok(())),
            Err(DynamicsError::EmptySpan)
        ));
        assert!(matches!(
            solve(decay, &[1.0], &[0.0, 1.0, 0.5], &p, |_, _| Ok(())),
            Err(DynamicsError::Grid)
        ));
        let bad = IntegratorPolicy { abs_tol: 0.0, ..p };
        assert!(matches!(
            solve(decay, &[1.0], &[0.0, 1.0], &bad, |_, _| Ok(())),
            Err(DynamicsError::Policy(_))
        ));
    }

    #[test]
    fn blow_up_reports_time() {
        // y' = y^2 from y(0) = 1 blows up at t = 1.
        let rhs = |_t: f64, y: &[f64], out: &mut [f64]| {
            out[0] = y[0] * y[0];
            Ok(())
        };
        match solve(
            rhs,
            &[1.0],
            &[0.0, 2.0],
            &IntegratorPolicy::default(),
            |_, _| Ok(()),
        ) {
            Err(DynamicsError::StepUnderflow { at } | DynamicsError::NonFinite { at }) => {
                assert!(at > 0.99 && at <= 1.0, "failed at {at}")
            }
            other => panic!("expected failure near t = 1, got {other:?}"),
        }
    }
}
