//! Ridge regression for continuous outcomes.

use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::linalg::solve_with_jitter;
use super::LearnerError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeModel {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub l2: f64,
}

impl RidgeModel {
    pub fn predict(&self, x: ArrayView2<f64>) -> Vec<f64> {
        x.rows()
            .into_iter()
            .map(|r| self.intercept + r.iter().zip(&self.coefficients).map(|(a, b)| a * b).sum::<f64>())
            .collect()
    }
}

/// Least squares with an L2 penalty on the coefficients; the intercept is
/// unpenalized.
pub fn fit_ridge(x: ArrayView2<f64>, y: &[f64], l2: f64) -> Result<RidgeModel, LearnerError> {
    let (n, d) = x.dim();
    if y.len() != n {
        return Err(LearnerError::Shape(format!("{} targets for {n} rows", y.len())));
    }
    if n == 0 {
        return Err(LearnerError::Input("no rows".into()));
    }
    if !(l2 >= 0.0) || x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(LearnerError::Input("non-finite input or negative penalty".into()));
    }
    let x_mean: Vec<f64> = (0..d).map(|j| x.column(j).sum() / n as f64).collect();
    let y_mean = y.iter().sum::<f64>() / n as f64;
    let xc = Array2::from_shape_fn((n, d), |(i, j)| x[[i, j]] - x_mean[j]);
    let yc = Array1::from_iter(y.iter().map(|v| v - y_mean));
    let mut gram = xc.t().dot(&xc);
    for j in 0..d {
        gram[[j, j]] += l2;
    }
    let rhs = xc.t().dot(&yc);
    let beta = if d == 0 {
        Array1::zeros(0)
    } else {
        solve_with_jitter(&gram, &rhs).ok_or_else(|| LearnerError::Input("singular design".into()))?
    };
    let intercept = y_mean - beta.iter().zip(&x_mean).map(|(b, m)| b * m).sum::<f64>();
    Ok(RidgeModel {
        coefficients: beta.to_vec(),
        intercept,
        l2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line_recovered_without_penalty() {
        let x = Array2::from_shape_fn((5, 1), |(i, _)| i as f64);
        let y: Vec<f64> = (0..5).map(|i| 2.0 * i as f64 - 1.0).collect();
        let m = fit_ridge(x.view(), &y, 0.0).unwrap();
        assert!((m.coefficients[0] - 2.0).abs() < 1e-10);
        assert!((m.intercept + 1.0).abs() < 1e-10);
    }

    #[test]
    fn penalty_shrinks_toward_mean() {
        let x = Array2::from_shape_fn((5, 1), |(i, _)| i as f64);
        let y: Vec<f64> = (0..5).map(|i| 2.0 * i as f64).collect();
        let m = fit_ridge(x.view(), &y, 10.0).unwrap();
        // Σ(x-x̄)² = 10, so the slope is 20 / (10 + 10).
        assert!((m.coefficients[0] - 1.0).abs() < 1e-12);
        assert!((m.predict(x.view())[2] - 4.0).abs() < 1e-12);
    }
}
