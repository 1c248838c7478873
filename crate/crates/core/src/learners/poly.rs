//! Polynomial feature expansion.
//!
//! Columns are ordered degree-major; within a degree, monomials are the
//! lexicographically sorted multisets of input indices.

use crate::error::{Error, Result};
use crate::linalg::DesignMatrix;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolynomialMap {
    pub degree: usize,
    /// When false only pure powers `x_j^k` are produced.
    pub include_interactions: bool,
    pub input_dim: usize,
    monomials: Vec<Vec<usize>>,
}

fn multisets(d: usize, degree: usize, start: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if prefix.len() == degree {
        out.push(prefix.clone());
        return;
    }
    for j in start..d {
        prefix.push(j);
        multisets(d, degree, j, prefix, out);
        prefix.pop();
    }
}

impl PolynomialMap {
    pub fn new(input_dim: usize, degree: usize, include_interactions: bool) -> Result<Self> {
        if input_dim == 0 || degree == 0 {
            return Err(Error::InvalidArgument(
                "polynomial map needs input_dim >= 1 and degree >= 1".into(),
            ));
        }
        let mut monomials = Vec::new();
        for k in 1..=degree {
            if include_interactions {
                multisets(input_dim, k, 0, &mut Vec::new(), &mut monomials);
            } else {
                monomials.extend((0..input_dim).map(|j| vec![j; k]));
            }
        }
        Ok(Self {
            degree,
            include_interactions,
            input_dim,
            monomials,
        })
    }

    pub fn output_dim(&self) -> usize {
        self.monomials.len()
    }

    /// Each output column as the multiset of input indices it multiplies.
    pub fn monomials(&self) -> &[Vec<usize>] {
        &self.monomials
    }
}

pub fn expand_polynomial(x: &DesignMatrix, map: &PolynomialMap) -> Result<DesignMatrix> {
    x.expect_cols(map.input_dim)?;
    let cols: Vec<Vec<f64>> = map
        .monomials
        .iter()
        .map(|m| {
            (0..x.nrows())
                .map(|i| m.iter().map(|&j| x.get(i, j)).product())
                .collect()
        })
        .collect();
    DesignMatrix::from_columns(&cols)
}
