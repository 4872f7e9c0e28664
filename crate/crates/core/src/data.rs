use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// A regression sample: `n x p` carriers, response, and whether the model has
/// an (unpenalized, implicit) intercept.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub intercept: bool,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>, intercept: bool) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::Dimension(format!(
                "design has {} rows but response has {} entries",
                x.nrows(),
                y.len()
            )));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("data contain non-finite values".into()));
        }
        Ok(Self { x, y, intercept })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn predict(&self, intercept: f64, coeffs: &[f64]) -> DVector<f64> {
        predict(&self.x, intercept, coeffs)
    }

    pub fn residuals(&self, intercept: f64, coeffs: &[f64]) -> DVector<f64> {
        &self.y - self.predict(intercept, coeffs)
    }

    pub fn rows(&self, idx: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select_rows(idx),
            y: self.y.select_rows(idx),
            intercept: self.intercept,
        }
    }

    pub fn columns(&self, idx: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select_columns(idx),
            y: self.y.clone(),
            intercept: self.intercept,
        }
    }
}

pub fn predict(x: &DMatrix<f64>, intercept: f64, coeffs: &[f64]) -> DVector<f64> {
    debug_assert_eq!(x.ncols(), coeffs.len());
    let mut out = DVector::from_element(x.nrows(), intercept);
    for (j, &b) in coeffs.iter().enumerate() {
        if b != 0.0 {
            out.axpy(b, &x.column(j), 1.0);
        }
    }
    out
}
