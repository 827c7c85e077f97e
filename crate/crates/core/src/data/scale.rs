use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-column min-max scaler onto `[0, 1]`.
///
/// Constant columns use a unit range, so they transform to 0 and invert
/// back exactly.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MinMaxScaler {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    pub fitted: bool,
}

impl MinMaxScaler {
    pub fn fit(data: ArrayView2<f64>) -> Result<Self> {
        if data.nrows() == 0 {
            return Err(Error::Usage("cannot fit a scaler on zero rows".into()));
        }
        let min = data
            .fold_axis(Axis(0), f64::INFINITY, |&a, &b| a.min(b))
            .to_vec();
        let max = data
            .fold_axis(Axis(0), f64::NEG_INFINITY, |&a, &b| a.max(b))
            .to_vec();
        if min.iter().chain(&max).any(|v| !v.is_finite()) {
            return Err(Error::Usage("cannot fit a scaler on non-finite data".into()));
        }
        Ok(MinMaxScaler { min, max, fitted: true })
    }

    pub fn width(&self) -> usize {
        self.min.len()
    }

    /// Slope of the inverse transform for column `j`.
    pub fn range(&self, j: usize) -> f64 {
        let r = self.max[j] - self.min[j];
        if r > 0.0 {
            r
        } else {
            1.0
        }
    }

    fn check(&self, cols: usize) -> Result<()> {
        if !self.fitted {
            return Err(Error::Usage("scaler used before fit".into()));
        }
        if cols != self.width() {
            return Err(Error::dimension("scaler width", self.width(), cols));
        }
        Ok(())
    }

    pub fn scale_value(&self, j: usize, v: f64) -> f64 {
        (v - self.min[j]) / self.range(j)
    }

    pub fn unscale_value(&self, j: usize, s: f64) -> f64 {
        s * self.range(j) + self.min[j]
    }

    pub fn transform(&self, data: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check(data.ncols())?;
        let mut out = data.to_owned();
        for (j, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
            col.mapv_inplace(|v| self.scale_value(j, v));
        }
        Ok(out)
    }

    pub fn inverse_transform(&self, data: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check(data.ncols())?;
        let mut out = data.to_owned();
        for (j, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
            col.mapv_inplace(|s| self.unscale_value(j, s));
        }
        Ok(out)
    }
}
