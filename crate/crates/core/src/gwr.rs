//! Global OLS and geographically weighted regression baselines.
//!
//! Local fits solve the weighted least-squares problem through an SVD of
//! `W^{1/2}[1 | X]` with columns equilibrated to unit norm, never through
//! the normal equations. A fit is rejected as singular when the smallest
//! singular value drops below `1e-10` of the largest.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ada_gwl::{binary_search, BandwidthChoice, SearchBounds};
use crate::design::{with_intercept, SpatialDesign};
use crate::error::{Error, Result};
use crate::kernel::{weight_vector, KernelFamily, KernelSpec};

const RANK_RTOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitMetrics {
    pub rmse: f64,
    pub r_squared: f64,
    /// Set when the response has zero total variance; `r_squared` is then
    /// reported as 0.
    pub zero_total_variance: bool,
}

impl FitMetrics {
    pub fn compute(y: &[f64], fitted: &[f64]) -> Self {
        let n = y.len() as f64;
        let sse: f64 = y.iter().zip(fitted).map(|(a, b)| (a - b) * (a - b)).sum();
        let mean = y.iter().sum::<f64>() / n;
        let sst: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum();
        let zero_total_variance = sst == 0.0;
        let r_squared = if zero_total_variance { 0.0 } else { 1.0 - sse / sst };
        Self {
            rmse: (sse / n).sqrt(),
            r_squared,
            zero_total_variance,
        }
    }
}

/// Weighted least-squares solution with its equilibrated condition number.
#[derive(Debug, Clone)]
pub(crate) struct WlsSolution {
    pub coefficients: Vec<f64>,
    pub condition: f64,
}

/// Solves `min ‖diag(sw)(A β − y)‖²`. `Err(condition)` when singular.
pub(crate) fn weighted_least_squares(
    a: &DMatrix<f64>,
    y: &DVector<f64>,
    sqrt_w: &[f64],
) -> std::result::Result<WlsSolution, f64> {
    let (n, k) = a.shape();
    let mut aw = DMatrix::from_fn(n, k, |i, j| sqrt_w[i] * a[(i, j)]);
    let mut col_scale = vec![0.0; k];
    for j in 0..k {
        let norm = aw.column(j).norm();
        if norm == 0.0 {
            return Err(f64::INFINITY);
        }
        col_scale[j] = norm;
        aw.column_mut(j).scale_mut(1.0 / norm);
    }
    let b = DVector::from_fn(n, |i, _| sqrt_w[i] * y[i]);
    let svd = aw.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(smin > RANK_RTOL * smax) {
        return Err(condition);
    }
    let scaled = svd.solve(&b, 0.0).map_err(|_| condition)?;
    let coefficients = (0..k).map(|j| scaled[j] / col_scale[j]).collect();
    Ok(WlsSolution {
        coefficients,
        condition,
    })
}

fn dot_with_intercept(coefficients: &[f64], row: &[f64]) -> f64 {
    coefficients[0] + coefficients[1..].iter().zip(row).map(|(b, x)| b * x).sum::<f64>()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OlsFit {
    /// Intercept first.
    pub coefficients: Vec<f64>,
    pub fitted: Vec<f64>,
    pub metrics: FitMetrics,
}

pub fn ols_fit(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<OlsFit> {
    let (n, p) = x.shape();
    if y.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: y.len() });
    }
    if n <= p + 1 {
        return Err(Error::InvalidInput(format!("OLS needs more than {} rows, got {n}", p + 1)));
    }
    let a = with_intercept(x);
    let sol = weighted_least_squares(&a, y, &vec![1.0; n])
        .map_err(|condition| Error::RankDeficient { condition })?;
    let fitted: Vec<f64> = (0..n)
        .map(|i| {
            let row: Vec<f64> = x.row(i).iter().copied().collect();
            dot_with_intercept(&sol.coefficients, &row)
        })
        .collect();
    let metrics = FitMetrics::compute(y.as_slice(), &fitted);
    Ok(OlsFit {
        coefficients: sol.coefficients,
        fitted,
        metrics,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalCoefficients {
    /// Intercept first, length p + 1.
    pub coefficients: Vec<f64>,
    pub fitted: f64,
    pub condition: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GwrFit {
    pub kernel: KernelSpec,
    pub local: Vec<LocalCoefficients>,
    pub metrics: FitMetrics,
}

impl GwrFit {
    pub fn fitted(&self) -> Vec<f64> {
        self.local.iter().map(|l| l.fitted).collect()
    }
}

fn local_solve(
    design: &SpatialDesign<'_>,
    a: &DMatrix<f64>,
    station: usize,
    kernel: &KernelSpec,
    leave_one_out: bool,
) -> Result<WlsSolution> {
    let wv = weight_vector(design.dm, station, kernel, leave_one_out);
    let required = design.n_features() + 1;
    let effective = wv.positive_count();
    if effective < required {
        return Err(Error::InsufficientEffectiveWeight {
            station: design.label(station),
            effective,
            required,
        });
    }
    weighted_least_squares(a, design.y, &wv.sqrt()).map_err(|condition| Error::LocalSingularFit {
        station: design.label(station),
        condition,
    })
}

/// Local weighted least squares at every station.
pub fn gwr_fit(design: &SpatialDesign<'_>, kernel: &KernelSpec) -> Result<GwrFit> {
    let a = with_intercept(design.x);
    let local: Vec<LocalCoefficients> = (0..design.len())
        .into_par_iter()
        .map(|i| {
            let sol = local_solve(design, &a, i, kernel, false)?;
            let fitted = dot_with_intercept(&sol.coefficients, &design.row(i));
            Ok(LocalCoefficients {
                coefficients: sol.coefficients,
                fitted,
                condition: sol.condition,
            })
        })
        .collect::<Result<_>>()?;
    let fitted: Vec<f64> = local.iter().map(|l| l.fitted).collect();
    let metrics = FitMetrics::compute(design.y.as_slice(), &fitted);
    Ok(GwrFit {
        kernel: *kernel,
        local,
        metrics,
    })
}

/// Leave-one-out predictions: each station is predicted from a local fit in
/// which its own weight is zero.
pub fn gwr_loo_predictions(design: &SpatialDesign<'_>, kernel: &KernelSpec) -> Result<Vec<f64>> {
    let a = with_intercept(design.x);
    (0..design.len())
        .into_par_iter()
        .map(|i| {
            let sol = local_solve(design, &a, i, kernel, true)?;
            Ok(dot_with_intercept(&sol.coefficients, &design.row(i)))
        })
        .collect()
}

/// Root mean squared leave-one-out error at the given kernel.
pub fn gwr_cv_rmse(design: &SpatialDesign<'_>, kernel: &KernelSpec) -> Result<f64> {
    let preds = gwr_loo_predictions(design, kernel)?;
    let sse: f64 = preds
        .iter()
        .zip(design.y.iter())
        .map(|(p, y)| (y - p) * (y - p))
        .sum();
    Ok((sse / design.len() as f64).sqrt())
}

/// Bandwidth minimising the leave-one-out error, found with the same
/// bracketing search as the lasso model. Bandwidths at which some local fit
/// is singular score as infinitely bad; the error is only returned when the
/// selected bandwidth itself is infeasible.
pub fn gwr_bandwidth_cv(
    design: &SpatialDesign<'_>,
    family: KernelFamily,
    bounds: &SearchBounds,
) -> Result<BandwidthChoice> {
    let outcome = binary_search(bounds, |b| {
        let kernel = KernelSpec::new(family, b)?;
        match gwr_cv_rmse(design, &kernel) {
            Ok(v) => Ok(v),
            Err(Error::LocalSingularFit { .. }) | Err(Error::InsufficientEffectiveWeight { .. }) => {
                Ok(f64::INFINITY)
            }
            Err(e) => Err(e),
        }
    })?;
    if !outcome.cv_rmse.is_finite() {
        // surface the underlying local failure
        gwr_cv_rmse(design, &KernelSpec::new(family, outcome.bandwidth)?)?;
    }
    Ok(outcome)
}
