use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Dense real design matrix (rows are samples, columns are covariates).
///
/// Entries are finite and the matrix has at least one column.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix(DMatrix<f64>);

impl DesignMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::DegenerateInput(format!(
                "design matrix must be non-empty, got {}x{}",
                values.nrows(),
                values.ncols()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            let (i, j) = (pos % values.nrows(), pos / values.nrows());
            return Err(Error::DegenerateInput(format!(
                "non-finite entry at row {i}, column {j}"
            )));
        }
        Ok(Self(values))
    }

    /// Builds from row-major data of shape `n x d`.
    pub fn from_row_slice(n: usize, d: usize, data: &[f64]) -> Result<Self> {
        if data.len() != n * d {
            return Err(Error::Dimension {
                what: "row-major buffer length",
                expected: n * d,
                got: data.len(),
            });
        }
        Self::new(DMatrix::from_row_slice(n, d, data))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * d);
        for r in rows {
            if r.len() != d {
                return Err(Error::Dimension {
                    what: "row length",
                    expected: d,
                    got: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Self::from_row_slice(rows.len(), d, &data)
    }

    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let n = columns.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(n * columns.len());
        for c in columns {
            if c.len() != n {
                return Err(Error::Dimension {
                    what: "column length",
                    expected: n,
                    got: c.len(),
                });
            }
            data.extend_from_slice(c);
        }
        Self::new(DMatrix::from_column_slice(n, columns.len(), &data))
    }


    pub fn nrows(&self) -> usize {
        self.0.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.0.ncols()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.0.column(j).iter().copied().collect()
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.0.row(i).iter().copied().collect()
    }

    /// Rows at `indices`, in that order.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        Self(self.0.select_rows(indices))
    }

    /// Copy with column `j` removed.
    pub fn without_column(&self, j: usize) -> Self {
        Self(self.0.clone().remove_column(j))
    }

    /// Copy with column `j` overwritten by `values`.
    pub fn with_column(&self, j: usize, values: &[f64]) -> Result<Self> {
        crate::error::check_len("replacement column", self.nrows(), values.len())?;
        let mut out = self.clone();
        out.set_column(j, values);
        Ok(out)
    }

    pub(crate) fn set_column(&mut self, j: usize, values: &[f64]) {
        for (dst, &v) in self.0.column_mut(j).iter_mut().zip(values) {
            *dst = v;
        }
    }

    /// Columns listed in `columns`, in that order.
    pub fn select_columns(&self, columns: &[usize]) -> Self {
        Self(self.0.select_columns(columns))
    }

    pub(crate) fn expect_cols(&self, expected: usize) -> Result<()> {
        crate::error::check_len("design matrix columns", expected, self.ncols())
    }
}

/// Indices `0..d` without `j`.
pub(crate) fn all_but(d: usize, j: usize) -> Vec<usize> {
    (0..d).filter(|&k| k != j).collect()
}

/// Solves the symmetric positive definite system `a x = b`.
pub(crate) fn spd_solve(a: DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    match a.cholesky() {
        Some(ch) => Ok(ch.solve(b)),
        None => Err(Error::Numeric("matrix is not positive definite".into())),
    }
}
