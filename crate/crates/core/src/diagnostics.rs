//! Spatial autocorrelation, collinearity and cross-model comparison.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::ada_gwl::{fit_with_distances, GwlSettings, SearchBounds};
use crate::dataset::{format_f64, StationDataset};
use crate::design::SpatialDesign;
use crate::error::{Error, Result};
use crate::gwr::{gwr_bandwidth_cv, gwr_fit, ols_fit};
use crate::kernel::{weight_vector, KernelFamily, KernelSpec};
use crate::network::{DistanceMatrix, Metric, TransitGraph};

/// Row-standardized spatial weights.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialWeights {
    w: DMatrix<f64>,
    description: String,
}

impl SpatialWeights {
    /// Scales each row of a non-negative matrix to sum to one. The diagonal
    /// must be zero and every row needs a positive entry.
    pub fn row_standardize(raw: DMatrix<f64>, description: impl Into<String>) -> Result<Self> {
        let n = raw.nrows();
        if raw.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: raw.ncols(),
            });
        }
        if raw.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidInput("spatial weights must be finite and non-negative".into()));
        }
        let mut w = raw;
        for i in 0..n {
            if w[(i, i)] != 0.0 {
                return Err(Error::InvalidInput(format!("spatial weight of station {i} on itself is not zero")));
            }
            let total: f64 = w.row(i).sum();
            if total <= 0.0 {
                return Err(Error::EmptyNeighborhood(i));
            }
            for j in 0..n {
                w[(i, j)] /= total;
            }
        }
        Ok(Self {
            w,
            description: description.into(),
        })
    }

    /// `1/d` between distinct stations; co-located pairs get no weight.
    pub fn inverse_distance(dm: &DistanceMatrix) -> Result<Self> {
        let n = dm.len();
        let raw = DMatrix::from_fn(n, n, |i, j| {
            let d = dm.get(i, j);
            if i != j && d > 0.0 {
                1.0 / d
            } else {
                0.0
            }
        });
        Self::row_standardize(raw, format!("row-standardized inverse {} distance", dm.metric().as_str()))
    }

    /// Binary weights on the `k` nearest other stations, ties broken by
    /// station order.
    pub fn k_nearest(dm: &DistanceMatrix, k: usize) -> Result<Self> {
        let n = dm.len();
        if k == 0 || k >= n {
            return Err(Error::InvalidInput(format!("k-nearest weights need 1 <= k < {n}, got {k}")));
        }
        let mut raw = DMatrix::zeros(n, n);
        for i in 0..n {
            let mut others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            others.sort_by(|&a, &b| dm.get(i, a).total_cmp(&dm.get(i, b)).then(a.cmp(&b)));
            for &j in &others[..k] {
                raw[(i, j)] = 1.0;
            }
        }
        Self::row_standardize(raw, format!("row-standardized {k}-nearest {} neighbours", dm.metric().as_str()))
    }

    pub fn len(&self) -> usize {
        self.w.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.w.nrows() == 0
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn description(&self) -> &str {
        &self.description
    }

    pub fn spatial_lag(&self, values: &[f64]) -> Vec<f64> {
        let v = DVector::from_column_slice(values);
        (&self.w * v).iter().copied().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoranResult {
    pub observed: f64,
    pub expected: f64,
    pub variance: f64,
    pub z_score: f64,
    /// Two-sided, normal approximation.
    pub p_value: f64,
    /// Two-sided pseudo p-value from random relabelling, when requested.
    pub permutation_p: Option<f64>,
    pub weighting: String,
}

/// Random-relabelling test settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PermutationTest {
    pub permutations: usize,
    pub seed: u64,
}

impl Default for PermutationTest {
    fn default() -> Self {
        Self {
            permutations: 999,
            seed: 0,
        }
    }
}

fn moran_statistic(w: &DMatrix<f64>, z: &[f64], denom: f64) -> f64 {
    let n = z.len();
    let mut num = 0.0;
    for i in 0..n {
        let mut lag = 0.0;
        for j in 0..n {
            lag += w[(i, j)] * z[j];
        }
        num += z[i] * lag;
    }
    // row-standardized weights sum to n, so n / S0 = 1
    num / denom
}

pub fn morans_i(values: &[f64], weights: &SpatialWeights, permutation: Option<PermutationTest>) -> Result<MoranResult> {
    let n = values.len();
    if n < 3 {
        return Err(Error::InvalidInput(format!("Moran's I needs at least 3 values, got {n}")));
    }
    if weights.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: weights.len(),
        });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("Moran's I values must be finite".into()));
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let z: Vec<f64> = values.iter().map(|v| v - mean).collect();
    let denom: f64 = z.iter().map(|v| v * v).sum();
    let scale = values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if denom <= (f64::EPSILON * scale).powi(2) * n as f64 {
        return Err(Error::ConstantVariable);
    }

    let w = weights.matrix();
    let nf = n as f64;
    let observed = moran_statistic(w, &z, denom);
    let expected = -1.0 / (nf - 1.0);

    let s0 = nf;
    let mut s1 = 0.0;
    for i in 0..n {
        for j in 0..n {
            s1 += (w[(i, j)] + w[(j, i)]).powi(2);
        }
    }
    s1 *= 0.5;
    let s2: f64 = (0..n).map(|i| (w.row(i).sum() + w.column(i).sum()).powi(2)).sum();
    let variance = (nf * nf * s1 - nf * s2 + 3.0 * s0 * s0) / ((nf * nf - 1.0) * s0 * s0) - expected * expected;
    let z_score = (observed - expected) / variance.sqrt();
    let p_value = erfc(z_score.abs() / std::f64::consts::SQRT_2).clamp(0.0, 1.0);

    let permutation_p = permutation.map(|t| {
        let mut rng = ChaCha8Rng::seed_from_u64(t.seed);
        let mut shuffled = z.clone();
        let target = (observed - expected).abs();
        let mut extreme = 0usize;
        for _ in 0..t.permutations {
            shuffled.shuffle(&mut rng);
            if (moran_statistic(w, &shuffled, denom) - expected).abs() >= target {
                extreme += 1;
            }
        }
        (extreme + 1) as f64 / (t.permutations + 1) as f64
    });

    Ok(MoranResult {
        observed,
        expected,
        variance,
        z_score,
        p_value,
        permutation_p,
        weighting: weights.description().to_string(),
    })
}

/// One row per named variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoranRow {
    pub variable: String,
    pub result: MoranResult,
}

pub fn moran_table(dataset: &StationDataset, weights: &SpatialWeights, permutation: Option<PermutationTest>) -> Result<Vec<MoranRow>> {
    let mut columns: Vec<(String, Vec<f64>)> = Vec::new();
    for t in dataset.target_names() {
        columns.push((t.clone(), dataset.target(t)?.iter().copied().collect()));
    }
    for f in dataset.feature_names() {
        columns.push((f.clone(), dataset.feature(f)?));
    }
    columns
        .into_par_iter()
        .map(|(variable, values)| {
            let result = morans_i(&values, weights, permutation).map_err(|e| match e {
                Error::ConstantVariable => Error::InvalidInput(format!("variable `{variable}` is constant")),
                other => other,
            })?;
            Ok(MoranRow { variable, result })
        })
        .collect()
}

pub fn write_moran_csv(rows: &[MoranRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["variable", "moran_i", "expected_i", "variance", "z_score", "p_value", "permutation_p"])?;
    for r in rows {
        let m = &r.result;
        w.write_record([
            r.variable.clone(),
            format_f64(m.observed),
            format_f64(m.expected),
            format_f64(m.variance),
            format_f64(m.z_score),
            format_f64(m.p_value),
            m.permutation_p.map(format_f64).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `(value, spatial lag)` pairs for a Moran scatter plot.
pub fn moran_scatter(values: &[f64], weights: &SpatialWeights) -> Vec<(f64, f64)> {
    values.iter().copied().zip(weights.spatial_lag(values)).collect()
}

pub const CONDITION_THRESHOLDS: [f64; 3] = [30.0, 100.0, 1000.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    /// Unit weights.
    pub global: f64,
    pub local: Vec<f64>,
}

impl ConditionReport {
    /// Number of stations above each of [`CONDITION_THRESHOLDS`].
    pub fn exceedances(&self) -> Vec<(f64, usize)> {
        CONDITION_THRESHOLDS
            .iter()
            .map(|&t| (t, self.local.iter().filter(|&&k| k > t).count()))
            .collect()
    }

    /// Which band between the thresholds the global value falls in.
    pub fn global_band(&self) -> &'static str {
        band(self.global)
    }
}

pub fn band(k: f64) -> &'static str {
    match k {
        k if k < 30.0 => "<30",
        k if k < 100.0 => "30-100",
        k if k < 1000.0 => "100-1000",
        _ => ">1000",
    }
}

/// Condition number of the weighted design after centring each column on
/// its weighted mean and scaling it to unit norm. Exact rank deficiency
/// gives infinity.
pub fn weighted_condition_number(x: &DMatrix<f64>, weights: &[f64]) -> f64 {
    let (n, p) = x.shape();
    if p == 0 {
        return 1.0;
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return f64::INFINITY;
    }
    let mut a = DMatrix::zeros(n, p);
    for j in 0..p {
        let mean = (0..n).map(|i| weights[i] * x[(i, j)]).sum::<f64>() / total;
        for i in 0..n {
            a[(i, j)] = weights[i].sqrt() * (x[(i, j)] - mean);
        }
        let norm = a.column(j).norm();
        if norm == 0.0 {
            return f64::INFINITY;
        }
        a.column_mut(j).scale_mut(1.0 / norm);
    }
    let sv = a.singular_values();
    let smax = sv.max();
    let smin = if n < p { 0.0 } else { sv.min() };
    if smin <= f64::EPSILON * (n.max(p) as f64) * smax {
        f64::INFINITY
    } else {
        (smax / smin).max(1.0)
    }
}

pub fn local_condition_numbers(x: &DMatrix<f64>, dm: &DistanceMatrix, kernel: &KernelSpec) -> Result<ConditionReport> {
    if dm.len() != x.nrows() {
        return Err(Error::DimensionMismatch {
            expected: x.nrows(),
            found: dm.len(),
        });
    }
    let global = weighted_condition_number(x, &vec![1.0; x.nrows()]);
    let local = (0..x.nrows())
        .into_par_iter()
        .map(|i| weighted_condition_number(x, &weight_vector(dm, i, kernel, false).weights))
        .collect();
    Ok(ConditionReport { global, local })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelKind {
    Ols,
    Gwr,
    AdaGwr,
    Gwl,
    AdaGwl,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [Self::Ols, Self::Gwr, Self::AdaGwr, Self::Gwl, Self::AdaGwl];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Ols => "OLS",
            Self::Gwr => "GWR",
            Self::AdaGwr => "Ada-GWR",
            Self::Gwl => "GWL",
            Self::AdaGwl => "Ada-GWL",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub target: String,
    pub model: ModelKind,
    /// `None` for OLS.
    pub bandwidth: Option<f64>,
    pub rmse: f64,
    pub r_squared: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonTable {
    pub fn get(&self, target: &str, model: ModelKind) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.target == target && r.model == model)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["target", "model", "bandwidth", "rmse", "r_squared"])?;
        for r in &self.rows {
            w.write_record([
                r.target.clone(),
                r.model.name().to_string(),
                r.bandwidth.map(format_f64).unwrap_or_default(),
                format_f64(r.rmse),
                format_f64(r.r_squared),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Aligned plain-text table with 4 decimals.
    pub fn render_text(&self) -> String {
        let header = ["target", "model", "bandwidth", "rmse", "r_squared"];
        let cells: Vec<[String; 5]> = self
            .rows
            .iter()
            .map(|r| {
                [
                    r.target.clone(),
                    r.model.name().to_string(),
                    r.bandwidth.map(|b| format!("{b:.4}")).unwrap_or_else(|| "-".into()),
                    format!("{:.4}", r.rmse),
                    format!("{:.4}", r.r_squared),
                ]
            })
            .collect();
        let mut widths = header.map(str::len);
        for row in &cells {
            for (w, c) in widths.iter_mut().zip(row) {
                *w = (*w).max(c.len());
            }
        }
        let mut out = String::new();
        let line = |out: &mut String, row: &[&str]| {
            let parts: Vec<String> = row
                .iter()
                .zip(widths)
                .enumerate()
                .map(|(k, (c, w))| if k < 2 { format!("{c:<w$}") } else { format!("{c:>w$}") })
                .collect();
            let _ = writeln!(out, "{}", parts.join("  ").trim_end());
        };
        line(&mut out, &header);
        for row in &cells {
            line(&mut out, &row.each_ref().map(String::as_str));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompareSettings {
    pub kernel: KernelFamily,
    pub gwl: GwlSettings,
    pub radius_km: f64,
}

/// Fits OLS, GWR, Ada-GWR, GWL and Ada-GWL for every target. Both distance
/// matrices are computed once and shared by all fits.
pub fn compare_models(
    dataset: &StationDataset,
    graph: &TransitGraph,
    targets: &[String],
    settings: &CompareSettings,
) -> Result<ComparisonTable> {
    let euclid = dataset.distance_matrix(Metric::Euclidean, None, settings.radius_km)?;
    let network = dataset.distance_matrix(Metric::Network, Some(graph), settings.radius_km)?;
    let x = dataset.feature_matrix();
    let mut rows = Vec::new();
    for target in targets {
        let y = dataset.target(target)?;
        let ols = ols_fit(&x, &y)?;
        rows.push(ComparisonRow {
            target: target.clone(),
            model: ModelKind::Ols,
            bandwidth: None,
            rmse: ols.metrics.rmse,
            r_squared: ols.metrics.r_squared,
        });
        for (kind, dm) in [(ModelKind::Gwr, &euclid), (ModelKind::AdaGwr, &network)] {
            let design = SpatialDesign::new(&x, &y, dm)?.with_ids(dataset.ids())?;
            let bounds = match settings.gwl.bounds {
                Some(b) => b,
                None => SearchBounds::from_distances(dm, ols.metrics.rmse, settings.gwl.eps)?,
            };
            let choice = gwr_bandwidth_cv(&design, settings.kernel, &bounds)?;
            let fit = gwr_fit(&design, &KernelSpec::new(settings.kernel, choice.bandwidth)?)?;
            rows.push(ComparisonRow {
                target: target.clone(),
                model: kind,
                bandwidth: Some(choice.bandwidth),
                rmse: fit.metrics.rmse,
                r_squared: fit.metrics.r_squared,
            });
        }
        for (kind, dm) in [(ModelKind::Gwl, &euclid), (ModelKind::AdaGwl, &network)] {
            let model = fit_with_distances(dataset, target, dm, settings.kernel, &settings.gwl)?;
            rows.push(ComparisonRow {
                target: target.clone(),
                model: kind,
                bandwidth: Some(model.bandwidth),
                rmse: model.metrics.rmse,
                r_squared: model.metrics.r_squared,
            });
        }
    }
    Ok(ComparisonTable { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ring_weights(n: usize) -> SpatialWeights {
        let raw = DMatrix::from_fn(n, n, |i, j| {
            if (i + 1) % n == j || (j + 1) % n == i {
                1.0
            } else {
                0.0
            }
        });
        SpatialWeights::row_standardize(raw, "ring").unwrap()
    }

    #[test]
    fn alternating_ring_is_minus_one() {
        let values: Vec<f64> = (0..10).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let m = morans_i(&values, &ring_weights(10), None).unwrap();
        assert!((m.observed + 1.0).abs() < 1e-12);
        assert!((m.expected + 1.0 / 9.0).abs() < 1e-15);
        assert!((0.0..=1.0).contains(&m.p_value));
    }

    #[test]
    fn smooth_field_is_positive_and_affine_invariant() {
        let w = ring_weights(20);
        let values: Vec<f64> = (0..20).map(|i| (i as f64 * std::f64::consts::PI / 10.0).sin()).collect();
        let a = morans_i(&values, &w, None).unwrap();
        assert!(a.observed > 0.5);
        assert!(a.p_value < 0.01);
        let shifted: Vec<f64> = values.iter().map(|v| -3.0 * v + 7.0).collect();
        let b = morans_i(&shifted, &w, None).unwrap();
        assert!((a.observed - b.observed).abs() < 1e-12);
    }

    #[test]
    fn constant_values_and_isolated_rows_rejected() {
        assert!(matches!(morans_i(&[2.0; 5], &ring_weights(5), None), Err(Error::ConstantVariable)));
        let mut raw = DMatrix::from_element(3, 3, 1.0);
        raw.fill_diagonal(0.0);
        raw.row_mut(1).fill(0.0);
        assert!(matches!(SpatialWeights::row_standardize(raw, ""), Err(Error::EmptyNeighborhood(1))));
    }

    #[test]
    fn permutation_p_is_seeded() {
        let w = ring_weights(12);
        let values: Vec<f64> = (0..12).map(|i| i as f64).collect();
        let t = PermutationTest { permutations: 199, seed: 5 };
        let a = morans_i(&values, &w, Some(t)).unwrap().permutation_p.unwrap();
        let b = morans_i(&values, &w, Some(t)).unwrap().permutation_p.unwrap();
        assert_eq!(a, b);
        assert!(a > 0.0 && a < 0.05);
    }

    #[test]
    fn knn_weights_rows() {
        let dm = DistanceMatrix::from_rows(
            4,
            vec![0.0, 1.0, 2.0, 3.0, 1.0, 0.0, 1.0, 2.0, 2.0, 1.0, 0.0, 1.0, 3.0, 2.0, 1.0, 0.0],
            Metric::Euclidean,
        )
        .unwrap();
        let w = SpatialWeights::k_nearest(&dm, 2).unwrap();
        assert_eq!(w.matrix().row(0).iter().copied().collect::<Vec<_>>(), vec![0.0, 0.5, 0.5, 0.0]);
        assert_eq!(w.matrix().row(1).iter().copied().collect::<Vec<_>>(), vec![0.5, 0.0, 0.5, 0.0]);
        let idw = SpatialWeights::inverse_distance(&dm).unwrap();
        for i in 0..4 {
            assert!((idw.matrix().row(i).sum() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn condition_numbers() {
        // orthogonal zero-mean columns
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 1.0, 1.0, -1.0, -1.0, 1.0, -1.0, -1.0]);
        assert!((weighted_condition_number(&x, &[1.0; 4]) - 1.0).abs() < 1e-12);
        let dup = DMatrix::from_row_slice(4, 2, &[1.0, 1.0, 2.0, 2.0, 3.0, 3.0, 5.0, 5.0]);
        assert_eq!(weighted_condition_number(&dup, &[1.0; 4]), f64::INFINITY);

        let y = DMatrix::from_row_slice(5, 2, &[1.0, 0.3, 2.0, -1.0, 0.5, 4.0, 3.0, 2.0, -2.0, 1.0]);
        let w = [0.2, 1.0, 0.7, 0.4, 0.9];
        let k = weighted_condition_number(&y, &w);
        let swapped = DMatrix::from_fn(5, 2, |i, j| y[(i, 1 - j)] * if j == 0 { 1e3 } else { 1.0 });
        assert!((weighted_condition_number(&swapped, &w) - k).abs() < 1e-9 * k);
        assert!(k >= 1.0);
        assert_eq!(band(32.5), "30-100");
        assert_eq!(band(1500.0), ">1000");
    }

    #[test]
    fn comparison_table_text() {
        let t = ComparisonTable {
            rows: vec![ComparisonRow {
                target: "weekly".into(),
                model: ModelKind::AdaGwr,
                bandwidth: Some(3.14159),
                rmse: 1.0,
                r_squared: 0.5,
            }],
        };
        let text = t.render_text();
        assert!(text.contains("Ada-GWR"));
        assert!(text.contains("3.1416"));
        assert_eq!(text.lines().count(), 2);
    }
}
