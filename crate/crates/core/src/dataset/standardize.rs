use serde::{Deserialize, Serialize};

use super::{Dataset, FEATURE_NAMES, N_FEATURES};
use crate::error::{Error, Result};
use crate::nn::Matrix;

/// Per-feature z-score parameters (population standard deviation).
///
/// A constant column gets a standard deviation of 1.0, so it transforms to
/// all zeros.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StandardizationParams {
    pub feature_names: Vec<String>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

pub fn fit_standardization(train: &Dataset) -> Result<StandardizationParams> {
    StandardizationParams::fit(&train.feature_matrix())
}

impl StandardizationParams {
    pub fn fit(x: &Matrix) -> Result<Self> {
        let (n, d) = x.shape();
        if n == 0 {
            return Err(Error::EmptyDataset);
        }
        let nf = n as f64;
        let mean: Vec<f64> = x.col_sums().into_iter().map(|s| s / nf).collect();
        let mut var = vec![0.0; d];
        for r in 0..n {
            for ((v, xv), m) in var.iter_mut().zip(x.row(r)).zip(&mean) {
                *v += (xv - m) * (xv - m);
            }
        }
        let std = var
            .into_iter()
            .map(|v| {
                let sd = (v / nf).sqrt();
                if sd > 0.0 && sd.is_finite() {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        let feature_names = if d == N_FEATURES {
            FEATURE_NAMES.iter().map(|s| s.to_string()).collect()
        } else {
            (0..d).map(|i| format!("x{i}")).collect()
        };
        Ok(StandardizationParams {
            feature_names,
            mean,
            std,
        })
    }

    pub fn transform(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.mean.len() {
            return Err(Error::shape(format!(
                "standardization fit on {} features, got {}",
                self.mean.len(),
                x.cols()
            )));
        }
        let mut out = x.clone();
        for r in 0..out.rows() {
            for ((v, m), s) in out.row_mut(r).iter_mut().zip(&self.mean).zip(&self.std) {
                *v = (*v - m) / s;
            }
        }
        Ok(out)
    }
}
