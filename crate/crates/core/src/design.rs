use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::network::DistanceMatrix;

/// Features (without an intercept column), response and station distances
/// for one local-regression problem.
#[derive(Debug, Clone, Copy)]
pub struct SpatialDesign<'a> {
    pub x: &'a DMatrix<f64>,
    pub y: &'a DVector<f64>,
    pub dm: &'a DistanceMatrix,
    ids: Option<&'a [String]>,
}

impl<'a> SpatialDesign<'a> {
    pub fn new(x: &'a DMatrix<f64>, y: &'a DVector<f64>, dm: &'a DistanceMatrix) -> Result<Self> {
        let n = x.nrows();
        if y.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: y.len() });
        }
        if dm.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: dm.len() });
        }
        if n < 2 {
            return Err(Error::InvalidInput("need at least 2 stations".into()));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("design contains non-finite values".into()));
        }
        Ok(Self { x, y, dm, ids: None })
    }

    pub fn with_ids(mut self, ids: &'a [String]) -> Result<Self> {
        if ids.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                found: ids.len(),
            });
        }
        self.ids = Some(ids);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }

    pub fn n_features(&self) -> usize {
        self.x.ncols()
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.x.row(i).iter().copied().collect()
    }

    pub fn label(&self, i: usize) -> String {
        match self.ids {
            Some(ids) => ids[i].clone(),
            None => format!("#{i}"),
        }
    }

    pub fn ids(&self) -> Vec<String> {
        (0..self.len()).map(|i| self.label(i)).collect()
    }
}

/// `[1 | X]`.
pub fn with_intercept(x: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), x.ncols() + 1, |i, j| if j == 0 { 1.0 } else { x[(i, j - 1)] })
}
