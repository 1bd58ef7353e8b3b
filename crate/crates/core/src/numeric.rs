//! Small numerical helpers: natural cubic splines and adaptive quadrature.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericError {
    #[error("spline needs at least two strictly increasing knots with matching values")]
    BadKnots,
    #[error("{x} is outside the tabulated range [{lo}, {hi}]")]
    OutOfRange { x: f64, lo: f64, hi: f64 },
    #[error("integrand is not finite at {0}")]
    NonFinite(f64),
    #[error("quadrature did not reach tolerance on [{a}, {b}]")]
    NoConvergence { a: f64, b: f64 },
}

/// Natural cubic spline through tabulated points.
#[derive(Clone, Debug)]
pub struct CubicSpline {
    x: Vec<f64>,
    y: Vec<f64>,
    m: Vec<f64>,
}

impl CubicSpline {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self, NumericError> {
        let n = x.len();
        if n < 2
            || y.len() != n
            || x.windows(2)
                .any(|w| w[1].partial_cmp(&w[0]) != Some(std::cmp::Ordering::Greater))
        {
            return Err(NumericError::BadKnots);
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(NumericError::BadKnots);
        }
        let mut m = vec![0.0; n];
        if n > 2 {
            // Thomas algorithm on the interior second derivatives.
            let k = n - 2;
            let mut diag = vec![0.0; k];
            let mut upper = vec![0.0; k];
            let mut rhs = vec![0.0; k];
            for i in 0..k {
                let h0 = x[i + 1] - x[i];
                let h1 = x[i + 2] - x[i + 1];
                diag[i] = 2.0 * (h0 + h1);
                upper[i] = h1;
                rhs[i] = 6.0 * ((y[i + 2] - y[i + 1]) / h1 - (y[i + 1] - y[i]) / h0);
            }
            for i in 1..k {
                let lower = x[i + 1] - x[i];
                let w = lower / diag[i - 1];
                diag[i] -= w * upper[i - 1];
                rhs[i] -= w * rhs[i - 1];
            }
            let mut sol = vec![0.0; k];
            sol[k - 1] = rhs[k - 1] / diag[k - 1];
            for i in (0..k - 1).rev() {
                sol[i] = (rhs[i] - upper[i] * sol[i + 1]) / diag[i];
            }
            m[1..n - 1].copy_from_slice(&sol);
        }
        Ok(Self { x, y, m })
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.x[0], *self.x.last().unwrap())
    }

    /// Value (`order = 0`) or derivative of the spline at `at`.
    pub fn eval(&self, at: f64, order: u32) -> Result<f64, NumericError> {
        let (lo, hi) = self.domain();
        if !(at >= lo && at <= hi) {
            return Err(NumericError::OutOfRange { x: at, lo, hi });
        }
        let i = match self.x.binary_search_by(|v| v.partial_cmp(&at).unwrap()) {
            Ok(i) => i.min(self.x.len() - 2),
            Err(i) => i - 1,
        };
        let h = self.x[i + 1] - self.x[i];
        let a = (self.x[i + 1] - at) / h;
        let b = (at - self.x[i]) / h;
        let (y0, y1, m0, m1) = (self.y[i], self.y[i + 1], self.m[i], self.m[i + 1]);
        Ok(match order {
            0 => a * y0 + b * y1 + ((a * a * a - a) * m0 + (b * b * b - b) * m1) * h * h / 6.0,
            1 => {
                (y1 - y0) / h - (3.0 * a * a - 1.0) / 6.0 * h * m0
                    + (3.0 * b * b - 1.0) / 6.0 * h * m1
            }
            2 => a * m0 + b * m1,
            3 => (m1 - m0) / h,
            _ => 0.0,
        })
    }
}

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const K15_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728,
];
const G7_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: FnMut(f64) -> Result<f64, NumericError>>(
    f: &mut F,
    a: f64,
    b: f64,
) -> Result<(f64, f64), NumericError> {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut kronrod = 0.0;
    let mut gauss = 0.0;
    for (i, &node) in GK_NODES.iter().enumerate() {
        if node == 0.0 {
            let v = f(c)?;
            kronrod += K15_WEIGHTS[i] * v;
            gauss += G7_WEIGHTS[3] * v;
        } else {
            let v = f(c - h * node)? + f(c + h * node)?;
            kronrod += K15_WEIGHTS[i] * v;
            if i % 2 == 1 {
                gauss += G7_WEIGHTS[i / 2] * v;
            }
        }
    }
    Ok((kronrod * h, ((kronrod - gauss) * h).abs()))
}

/// Adaptive Gauss-Kronrod (7/15) quadrature of `f` over `[a, b]`.
pub fn integrate<F>(mut f: F, a: f64, b: f64, tol: f64) -> Result<f64, NumericError>
where
    F: FnMut(f64) -> Result<f64, NumericError>,
{
    if a == b {
        return Ok(0.0);
    }
    let mut stack = vec![(a, b, 0u32)];
    let mut total = 0.0;
    let scale_tol = tol.max(f64::EPSILON);
    let width = (b - a).abs();
    while let Some((lo, hi, depth)) = stack.pop() {
        let (value, err) = gk15(&mut f, lo, hi)?;
        if !value.is_finite() {
            return Err(NumericError::NonFinite(0.5 * (lo + hi)));
        }
        let share = (hi - lo).abs() / width;
        if err <= scale_tol * share.max(1e-3) * value.abs().max(1.0) || err < 1e-15 * value.abs() {
            total += value;
        } else if depth >= 40 {
            return Err(NumericError::NoConvergence { a: lo, b: hi });
        } else {
            let mid = 0.5 * (lo + hi);
            stack.push((lo, mid, depth + 1));
            stack.push((mid, hi, depth + 1));
        }
    }
    Ok(total)
}
