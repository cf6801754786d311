//! Geographically weighted lasso, calibrated with either great-circle
//! distances (GWL) or shortest-path network distances (Ada-GWL).
//!
//! Fitting runs in two phases. Phase 1 searches the bandwidth: at every
//! probe each station gets a lasso path from the other stations (its own
//! weight zeroed) and keeps the path point that best predicts its held-out
//! response. Phase 2 refits every station with full weights at the chosen
//! bandwidth and reads the path at the station's phase-1 shrinkage fraction.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::StationDataset;
use crate::design::SpatialDesign;
use crate::error::{Error, Result};
use crate::gwr::{ols_fit, FitMetrics};
use crate::kernel::{weight_vector, KernelFamily, KernelSpec, WeightVector};
use crate::lars::{lars_path, LarsOptions, ShrinkageFraction, Standardization};
use crate::network::{DistanceMatrix, Metric, TransitGraph};

/// Bandwidth search interval and stopping width, in km.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchBounds {
    pub lb: f64,
    pub ub: f64,
    pub eps: f64,
}

impl SearchBounds {
    pub fn new(lb: f64, ub: f64, eps: f64) -> Result<Self> {
        if !(lb > 0.0 && lb < ub && ub.is_finite()) {
            return Err(Error::InvalidInput(format!("bandwidth bounds need 0 < lb < ub, got [{lb}, {ub}]")));
        }
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::InvalidInput(format!("eps must be positive, got {eps}")));
        }
        Ok(Self { lb, ub, eps })
    }

    /// `ub = ceil(max d)`, `lb = min positive d + 0.01·ub`, and
    /// `eps = 0.05·ols_rmse` unless overridden. The OLS-derived eps is
    /// floored at `1e-6·ub` so a perfect global fit still terminates.
    pub fn from_distances(dm: &DistanceMatrix, ols_rmse: f64, eps_override: Option<f64>) -> Result<Self> {
        let ub = dm.max().ceil();
        let min_pos = dm
            .min_positive()
            .ok_or_else(|| Error::InvalidInput("all stations are co-located".into()))?;
        let lb = min_pos + 0.01 * ub;
        let eps = match eps_override {
            Some(e) => e,
            None => (0.05 * ols_rmse).max(1e-6 * ub),
        };
        Self::new(lb, ub, eps)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandwidthChoice {
    pub bandwidth: f64,
    pub cv_rmse: f64,
    /// Every (bandwidth, error) evaluated, in evaluation order.
    pub probes: Vec<(f64, f64)>,
}

/// Bracketing search: compare the error at the quarter points of the
/// current interval and discard the quarter beyond the worse one; equal
/// errors discard the upper quarter. Stops once the interval is no wider
/// than `eps`, then returns the best of the centre, both bounds and the
/// initial bounds, preferring earlier candidates on equal error.
pub fn binary_search<F>(bounds: &SearchBounds, mut error_at: F) -> Result<BandwidthChoice>
where
    F: FnMut(f64) -> Result<f64>,
{
    let mut probes: Vec<(f64, f64)> = Vec::new();
    let mut eval = |b: f64, probes: &mut Vec<(f64, f64)>| -> Result<f64> {
        if let Some(&(_, e)) = probes.iter().find(|(x, _)| x.to_bits() == b.to_bits()) {
            return Ok(e);
        }
        let e = error_at(b)?;
        let e = if e.is_nan() { f64::INFINITY } else { e };
        probes.push((b, e));
        Ok(e)
    };

    let (mut lb, mut ub) = (bounds.lb, bounds.ub);
    let mut c = 0.5 * (lb + ub);
    let mut diff = ub - lb;
    while diff > bounds.eps {
        let lc = 0.5 * (lb + c);
        let cu = 0.5 * (c + ub);
        let e_lc = eval(lc, &mut probes)?;
        let e_cu = eval(cu, &mut probes)?;
        if e_lc > e_cu {
            lb = lc;
        } else {
            ub = cu;
        }
        c = 0.5 * (lb + ub);
        diff = (ub - lb).abs();
    }

    let mut best = (c, eval(c, &mut probes)?);
    for b in [lb, ub, bounds.lb, bounds.ub] {
        let e = eval(b, &mut probes)?;
        if e < best.1 {
            best = (b, e);
        }
    }
    Ok(BandwidthChoice {
        bandwidth: best.0,
        cv_rmse: best.1,
        probes,
    })
}

/// Phase-1 outcome for one station.
#[derive(Debug, Clone, PartialEq)]
pub struct StationSelection {
    pub s_frac: ShrinkageFraction,
    /// `true` where the slope is zero at the selected path point.
    pub zero_mask: Vec<bool>,
    pub loo_prediction: f64,
    /// The local design was degenerate; an intercept-only model was used.
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalLarsResult {
    pub bandwidth: f64,
    pub stations: Vec<StationSelection>,
    pub cv_rmse: f64,
}

impl LocalLarsResult {
    pub fn fallback_stations(&self) -> Vec<usize> {
        (0..self.stations.len()).filter(|&i| self.stations[i].fallback).collect()
    }
}

fn weighted_mean(y: &DVector<f64>, weights: &[f64]) -> Option<f64> {
    let total: f64 = weights.iter().sum();
    (total > 0.0).then(|| weights.iter().zip(y.iter()).map(|(w, v)| w * v).sum::<f64>() / total)
}

fn intercept_only_prediction(y: &DVector<f64>, wv: &WeightVector) -> f64 {
    weighted_mean(y, &wv.weights).unwrap_or_else(|| {
        // nothing carries weight; fall back to the mean of the other stations
        let others: Vec<f64> = (0..y.len()).filter(|&j| j != wv.station).map(|j| y[j]).collect();
        others.iter().sum::<f64>() / others.len() as f64
    })
}

/// Per-station leave-one-out lasso selection at bandwidth `b`.
pub fn local_lars(
    b: f64,
    design: &SpatialDesign<'_>,
    family: KernelFamily,
    options: &LarsOptions,
) -> Result<LocalLarsResult> {
    let kernel = KernelSpec::new(family, b)?;
    let p = design.n_features();
    let stations: Vec<StationSelection> = (0..design.len())
        .into_par_iter()
        .map(|i| {
            let wv = weight_vector(design.dm, i, &kernel, true);
            let row = design.row(i);
            match lars_path(design.x, design.y, &wv.weights, options) {
                Ok(path) => {
                    let point = path.best_point(&row, design.y[i]);
                    let sol = path.solution_at(point.s_frac);
                    Ok(StationSelection {
                        s_frac: point.s_frac,
                        zero_mask: sol.zero_mask,
                        loo_prediction: point.prediction,
                        fallback: false,
                    })
                }
                Err(Error::DegenerateDesign(_)) => Ok(StationSelection {
                    s_frac: ShrinkageFraction::ZERO,
                    zero_mask: vec![true; p],
                    loo_prediction: intercept_only_prediction(design.y, &wv),
                    fallback: true,
                }),
                Err(Error::NumericalRankLoss { .. }) => Err(Error::DegenerateDesign(format!(
                    "lasso path at station `{}` lost rank",
                    design.label(i)
                ))),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;
    let sse: f64 = stations
        .iter()
        .zip(design.y.iter())
        .map(|(s, y)| (y - s.loo_prediction).powi(2))
        .sum();
    Ok(LocalLarsResult {
        bandwidth: b,
        cv_rmse: (sse / design.len() as f64).sqrt(),
        stations,
    })
}

/// Bandwidth minimising the leave-one-out lasso error within `bounds`.
pub fn bandwidth_selector(
    bounds: &SearchBounds,
    design: &SpatialDesign<'_>,
    family: KernelFamily,
    options: &LarsOptions,
) -> Result<BandwidthChoice> {
    binary_search(bounds, |b| local_lars(b, design, family, options).map(|r| r.cv_rmse))
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GwlSettings {
    /// Replaces the OLS-derived stopping width of the bandwidth search.
    pub eps: Option<f64>,
    /// Replaces the distance-derived search interval entirely.
    pub bounds: Option<SearchBounds>,
    pub lars: LarsOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationFit {
    /// Intercept first.
    pub coefficients: Vec<f64>,
    pub s_frac: ShrinkageFraction,
    /// Zero slopes of the final (full-weight) fit.
    pub zero_mask: Vec<bool>,
    /// Zero slopes selected by the leave-one-out phase.
    pub loo_zero_mask: Vec<bool>,
    pub fitted: f64,
    pub loo_prediction: f64,
    pub fallback: bool,
    pub standardization: Option<Standardization>,
}

impl StationFit {
    pub fn intercept(&self) -> f64 {
        self.coefficients[0]
    }

    pub fn slopes(&self) -> &[f64] {
        &self.coefficients[1..]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaGwlModel {
    pub metric: Metric,
    pub kernel: KernelFamily,
    pub bandwidth: f64,
    pub search: SearchBounds,
    /// Leave-one-out RMSE at the selected bandwidth.
    pub cv_rmse: f64,
    pub station_ids: Vec<String>,
    pub feature_names: Vec<String>,
    pub stations: Vec<StationFit>,
    /// In-sample metrics of the final fits.
    pub metrics: FitMetrics,
    /// Metrics of the leave-one-out predictions.
    pub loo_metrics: FitMetrics,
}

impl AdaGwlModel {
    pub fn len(&self) -> usize {
        self.stations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stations.is_empty()
    }

    pub fn fitted(&self) -> Vec<f64> {
        self.stations.iter().map(|s| s.fitted).collect()
    }

    /// n × (p + 1), intercept first.
    pub fn coefficient_matrix(&self) -> DMatrix<f64> {
        let cols = self.feature_names.len() + 1;
        DMatrix::from_fn(self.len(), cols, |i, j| self.stations[i].coefficients[j])
    }

    pub fn station_index(&self, id: &str) -> Option<usize> {
        self.station_ids.iter().position(|s| s == id)
    }

    /// Local prediction at `station` for a feature vector.
    pub fn predict(&self, station: usize, features: &[f64]) -> Result<f64> {
        let fit = self.stations.get(station).ok_or_else(|| {
            Error::InvalidInput(format!("station index {station} outside model of {} stations", self.len()))
        })?;
        if features.len() != self.feature_names.len() {
            return Err(Error::DimensionMismatch {
                expected: self.feature_names.len(),
                found: features.len(),
            });
        }
        Ok(linear_predict(&fit.coefficients, features))
    }
}

fn linear_predict(coefficients: &[f64], features: &[f64]) -> f64 {
    coefficients[0]
        + coefficients[1..]
            .iter()
            .zip(features)
            .map(|(b, x)| b * x)
            .sum::<f64>()
}

/// Two-phase fit on a prepared design. The metric recorded on the model is
/// the one carried by the design's distance matrix.
pub fn fit_gwl(design: &SpatialDesign<'_>, family: KernelFamily, settings: &GwlSettings) -> Result<AdaGwlModel> {
    let bounds = match settings.bounds {
        Some(b) => b,
        None => {
            let ols_rmse = match settings.eps {
                Some(_) => 0.0,
                None => ols_fit(design.x, design.y)?.metrics.rmse,
            };
            SearchBounds::from_distances(design.dm, ols_rmse, settings.eps)?
        }
    };
    let choice = bandwidth_selector(&bounds, design, family, &settings.lars)?;
    let phase1 = local_lars(choice.bandwidth, design, family, &settings.lars)?;
    let kernel = KernelSpec::new(family, choice.bandwidth)?;

    let p = design.n_features();
    let stations: Vec<StationFit> = (0..design.len())
        .into_par_iter()
        .map(|i| {
            let sel = &phase1.stations[i];
            let wv = weight_vector(design.dm, i, &kernel, false);
            let row = design.row(i);
            let fit = match lars_path(design.x, design.y, &wv.weights, &settings.lars) {
                Ok(path) => {
                    let sol = path.solution_at(sel.s_frac);
                    let coefficients = sol.coefficients();
                    StationFit {
                        fitted: linear_predict(&coefficients, &row),
                        coefficients,
                        s_frac: sel.s_frac,
                        zero_mask: sol.zero_mask,
                        loo_zero_mask: sel.zero_mask.clone(),
                        loo_prediction: sel.loo_prediction,
                        fallback: sel.fallback,
                        standardization: Some(path.standardization().clone()),
                    }
                }
                Err(Error::DegenerateDesign(_)) => {
                    let mut coefficients = vec![0.0; p + 1];
                    coefficients[0] = intercept_only_prediction(design.y, &wv);
                    StationFit {
                        fitted: linear_predict(&coefficients, &row),
                        coefficients,
                        s_frac: ShrinkageFraction::ZERO,
                        zero_mask: vec![true; p],
                        loo_zero_mask: sel.zero_mask.clone(),
                        loo_prediction: sel.loo_prediction,
                        fallback: true,
                        standardization: None,
                    }
                }
                Err(e) => return Err(e),
            };
            Ok(fit)
        })
        .collect::<Result<_>>()?;

    let fitted: Vec<f64> = stations.iter().map(|s| s.fitted).collect();
    let loo: Vec<f64> = stations.iter().map(|s| s.loo_prediction).collect();
    Ok(AdaGwlModel {
        metric: design.dm.metric(),
        kernel: family,
        bandwidth: choice.bandwidth,
        search: bounds,
        cv_rmse: phase1.cv_rmse,
        station_ids: design.ids(),
        feature_names: (0..p).map(|k| format!("x{}", k + 1)).collect(),
        stations,
        metrics: FitMetrics::compute(design.y.as_slice(), &fitted),
        loo_metrics: FitMetrics::compute(design.y.as_slice(), &loo),
    })
}

/// Fits one target of a dataset. `Metric::Network` needs `graph`;
/// `Metric::Euclidean` gives plain GWL.
pub fn fit_ada_gwl(
    dataset: &StationDataset,
    target: &str,
    graph: Option<&TransitGraph>,
    metric: Metric,
    family: KernelFamily,
    settings: &GwlSettings,
    radius_km: f64,
) -> Result<AdaGwlModel> {
    let dm = dataset.distance_matrix(metric, graph, radius_km)?;
    fit_with_distances(dataset, target, &dm, family, settings)
}

/// Same as [`fit_ada_gwl`] with a precomputed distance matrix.
pub fn fit_with_distances(
    dataset: &StationDataset,
    target: &str,
    dm: &DistanceMatrix,
    family: KernelFamily,
    settings: &GwlSettings,
) -> Result<AdaGwlModel> {
    let x = dataset.feature_matrix();
    let y = dataset.target(target)?;
    let design = SpatialDesign::new(&x, &y, dm)?.with_ids(dataset.ids())?;
    let mut model = fit_gwl(&design, family, settings)?;
    model.feature_names = dataset.feature_names().to_vec();
    Ok(model)
}
