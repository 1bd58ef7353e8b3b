use std::fmt;

use nalgebra::DMatrix;
use thiserror::Error;

use super::{Bindings, EvalError, PhaseExpr, Registry};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MatrixError {
    #[error("matrix is not square ({0}x{1})")]
    NotSquare(usize, usize),
    #[error("matrix is singular")]
    Singular,
    #[error("dimension mismatch")]
    Shape,
}

/// Dense matrix of symbolic entries.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExprMatrix {
    rows: usize,
    cols: usize,
    data: Vec<PhaseExpr>,
}

impl ExprMatrix {
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> PhaseExpr) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| {
            if i == j {
                PhaseExpr::one()
            } else {
                PhaseExpr::zero()
            }
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> &PhaseExpr {
        &self.data[i * self.cols + j]
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i).clone())
    }

    pub fn mul(&self, other: &ExprMatrix) -> Result<Self, MatrixError> {
        if self.cols != other.rows {
            return Err(MatrixError::Shape);
        }
        Ok(Self::from_fn(self.rows, other.cols, |i, j| {
            (0..self.cols).fold(PhaseExpr::zero(), |acc, k| {
                acc.add_expr(&self.get(i, k).mul_expr(other.get(k, j)))
            })
        }))
    }

    /// Applies the matrix to a column of expressions.
    pub fn apply(&self, v: &[PhaseExpr]) -> Result<Vec<PhaseExpr>, MatrixError> {
        if v.len() != self.cols {
            return Err(MatrixError::Shape);
        }
        Ok((0..self.rows)
            .map(|i| {
                (0..self.cols).fold(PhaseExpr::zero(), |acc, k| {
                    acc.add_expr(&self.get(i, k).mul_expr(&v[k]))
                })
            })
            .collect())
    }

    fn minor(&self, skip_row: usize, skip_col: usize) -> Self {
        let mut data = Vec::with_capacity((self.rows - 1) * (self.cols - 1));
        for i in (0..self.rows).filter(|&i| i != skip_row) {
            for j in (0..self.cols).filter(|&j| j != skip_col) {
                data.push(self.get(i, j).clone());
            }
        }
        Self {
            rows: self.rows - 1,
            cols: self.cols - 1,
            data,
        }
    }

    /// Principal submatrix on the given indices.
    pub fn principal(&self, idx: &[usize]) -> Self {
        Self::from_fn(idx.len(), idx.len(), |i, j| {
            self.get(idx[i], idx[j]).clone()
        })
    }

    /// Symbolic determinant by cofactor expansion along the sparsest row.
    pub fn det(&self) -> Result<PhaseExpr, MatrixError> {
        if self.rows != self.cols {
            return Err(MatrixError::NotSquare(self.rows, self.cols));
        }
        Ok(self.det_unchecked())
    }

    fn det_unchecked(&self) -> PhaseExpr {
        match self.rows {
            0 => PhaseExpr::one(),
            1 => self.data[0].clone(),
            2 => self
                .get(0, 0)
                .mul_expr(self.get(1, 1))
                .sub_expr(&self.get(0, 1).mul_expr(self.get(1, 0))),
            n => {
                let row = (0..n)
                    .max_by_key(|&i| (0..n).filter(|&j| self.get(i, j).is_zero()).count())
                    .unwrap();
                let mut acc = PhaseExpr::zero();
                for j in 0..n {
                    let a = self.get(row, j);
                    if a.is_zero() {
                        continue;
                    }
                    let cof = a.mul_expr(&self.minor(row, j).det_unchecked());
                    acc = if (row + j) % 2 == 0 {
                        acc.add_expr(&cof)
                    } else {
                        acc.sub_expr(&cof)
                    };
                }
                acc
            }
        }
    }

    /// Inverse through the adjugate; fails when the determinant is symbolically zero.
    pub fn inverse(&self) -> Result<Self, MatrixError> {
        let det = self.det()?;
        if det.is_zero() {
            return Err(MatrixError::Singular);
        }
        let inv_det = det.recip().map_err(|_| MatrixError::Singular)?;
        let n = self.rows;
        if n == 1 {
            return Ok(Self::from_fn(1, 1, |_, _| inv_det.clone()));
        }
        Ok(Self::from_fn(n, n, |i, j| {
            let cof = self.minor(j, i).det_unchecked();
            let signed = if (i + j) % 2 == 0 {
                cof
            } else {
                cof.neg_expr()
            };
            signed.mul_expr(&inv_det)
        }))
    }

    pub fn is_identity(&self) -> bool {
        self.rows == self.cols
            && (0..self.rows).all(|i| {
                (0..self.cols).all(|j| {
                    if i == j {
                        self.get(i, j).is_one()
                    } else {
                        self.get(i, j).is_zero()
                    }
                })
            })
    }

    pub fn is_antisymmetric(&self) -> bool {
        self.rows == self.cols
            && (0..self.rows)
                .all(|i| (0..self.cols).all(|j| self.get(i, j).add_expr(self.get(j, i)).is_zero()))
    }

    pub fn is_symmetric(&self) -> bool {
        self.rows == self.cols
            && (0..self.rows).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }

    pub fn eval(&self, reg: &Registry, b: &Bindings, time: f64) -> Result<DMatrix<f64>, EvalError> {
        let mut out = DMatrix::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(i, j)] = self.get(i, j).eval(reg, b, time)?;
            }
        }
        Ok(out)
    }

    /// Rows as rendered text, `[a, b]` per row.
    pub fn render_rows(&self) -> Vec<String> {
        (0..self.rows)
            .map(|i| {
                let cells: Vec<String> =
                    (0..self.cols).map(|j| self.get(i, j).to_string()).collect();
                format!("[{}]", cells.join(", "))
            })
            .collect()
    }
}

impl fmt::Display for ExprMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}]", self.render_rows().join(", "))
    }
}
