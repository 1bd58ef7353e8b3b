use std::collections::BTreeSet;

use nalgebra::DMatrix;
use thiserror::Error;

use super::registry::is_identifier;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChartError {
    #[error("chart needs at least one canonical pair")]
    Empty,
    #[error("`{0}` appears more than once in the chart")]
    Repeated(String),
    #[error("invalid identifier `{0}`")]
    InvalidIdentifier(String),
}

/// Ordered canonical pairs `(coordinate, momentum)` defining a phase space.
///
/// Variables are ordered with all coordinates first, then all momenta; this
/// ordering is used for Jacobians and the Poisson matrix.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Chart {
    pairs: Vec<(String, String)>,
}

impl Chart {
    pub fn new<S: AsRef<str>>(pairs: &[(S, S)]) -> Result<Self, ChartError> {
        if pairs.is_empty() {
            return Err(ChartError::Empty);
        }
        let mut seen = BTreeSet::new();
        for (q, p) in pairs {
            for v in [q.as_ref(), p.as_ref()] {
                if !is_identifier(v) {
                    return Err(ChartError::InvalidIdentifier(v.to_string()));
                }
                if !seen.insert(v.to_string()) {
                    return Err(ChartError::Repeated(v.to_string()));
                }
            }
        }
        Ok(Self {
            pairs: pairs
                .iter()
                .map(|(q, p)| (q.as_ref().to_string(), p.as_ref().to_string()))
                .collect(),
        })
    }

    /// `(x1, p1), (x2, p2)`.
    pub fn original() -> Self {
        Self::new(&[("x1", "p1"), ("x2", "p2")]).unwrap()
    }

    /// `(x1, p1), (x2, p2), (t, pt)`: time promoted to a coordinate.
    pub fn extended() -> Self {
        Self::new(&[("x1", "p1"), ("x2", "p2"), ("t", "pt")]).unwrap()
    }

    pub fn pairs(&self) -> impl Iterator<Item = (&str, &str)> {
        self.pairs.iter().map(|(q, p)| (q.as_str(), p.as_str()))
    }

    pub fn coordinates(&self) -> impl Iterator<Item = &str> {
        self.pairs.iter().map(|(q, _)| q.as_str())
    }

    pub fn momenta(&self) -> impl Iterator<Item = &str> {
        self.pairs.iter().map(|(_, p)| p.as_str())
    }

    /// All variables: coordinates, then momenta.
    pub fn variables(&self) -> Vec<&str> {
        self.coordinates().chain(self.momenta()).collect()
    }

    pub fn degrees_of_freedom(&self) -> usize {
        self.pairs.len()
    }

    pub fn dim(&self) -> usize {
        2 * self.pairs.len()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index_of(name).is_some()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.variables().iter().position(|v| *v == name)
    }

    /// Matrix of fundamental brackets `{z_i, z_j}`: `[[0, I], [-I, 0]]`.
    pub fn poisson_matrix(&self) -> DMatrix<f64> {
        let n = self.pairs.len();
        DMatrix::from_fn(2 * n, 2 * n, |i, j| {
            if j == i + n {
                1.0
            } else if i == j + n {
                -1.0
            } else {
                0.0
            }
        })
    }
}
