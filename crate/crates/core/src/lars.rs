//! Least angle regression with the lasso modification.
//!
//! The path is computed on a weighted, centred and (optionally) scaled copy
//! of the design: the intercept is never penalized because it is absorbed by
//! weighted centring, and each column is divided by its weighted standard
//! deviation so the ℓ1 budget is shared fairly between features measured in
//! different units. Coefficients are stored on that standardized scale and
//! mapped back through [`Standardization`] when a solution is requested.
//!
//! Positions along the path are addressed by [`ShrinkageFraction`], the ℓ1
//! norm of the standardized slopes divided by the ℓ1 norm at the final knot.
//!
//! With the objective `½‖y_c − Zβ‖² + λ‖β‖₁`, the λ at a knot is the common
//! absolute correlation of the active columns with the residual.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Knots closer than this (relative to the maximal ℓ1 norm) snap together.
const KNOT_SNAP_RTOL: f64 = 1e-12;
/// A candidate column whose residual norm against the active set falls
/// below this fraction of its own norm is treated as collinear.
const COLLINEAR_RTOL: f64 = 1e-10;
/// Path points whose held-out residuals differ by less than this, relative
/// to the response scale, are equally good.
const TIE_RESIDUAL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LarsOptions {
    /// Scale columns to unit weighted standard deviation before the path.
    pub standardize: bool,
}

impl Default for LarsOptions {
    fn default() -> Self {
        Self { standardize: true }
    }
}

/// Position along a lasso path as a fraction of the maximal ℓ1 norm.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ShrinkageFraction(f64);

impl ShrinkageFraction {
    pub const ZERO: ShrinkageFraction = ShrinkageFraction(0.0);
    pub const ONE: ShrinkageFraction = ShrinkageFraction(1.0);

    pub fn new(value: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&value) {
            Ok(Self(value))
        } else {
            Err(Error::InvalidInput(format!("shrinkage fraction {value} outside [0, 1]")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Weighted centring and scaling applied before the path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub x_mean: Vec<f64>,
    /// Divisor for each column; 1 when scaling is disabled, 0 for dropped
    /// constant columns.
    pub x_scale: Vec<f64>,
    pub y_mean: f64,
    /// Columns constant under the weighting; they stay at zero.
    pub dropped: Vec<usize>,
}

impl Standardization {
    fn compute(x: &DMatrix<f64>, y: &DVector<f64>, weights: &[f64], standardize: bool) -> Result<Self> {
        let (n, p) = x.shape();
        validate_inputs(n, p, y.len(), weights)?;
        let total: f64 = weights.iter().sum();
        let y_mean = weights.iter().zip(y.iter()).map(|(w, v)| w * v).sum::<f64>() / total;
        let mut x_mean = vec![0.0; p];
        let mut x_scale = vec![0.0; p];
        let mut dropped = Vec::new();
        for k in 0..p {
            let col = x.column(k);
            let mean = weights.iter().zip(col.iter()).map(|(w, v)| w * v).sum::<f64>() / total;
            let var = weights
                .iter()
                .zip(col.iter())
                .map(|(w, v)| w * (v - mean) * (v - mean))
                .sum::<f64>()
                / total;
            let magnitude = weights
                .iter()
                .zip(col.iter())
                .filter(|(w, _)| **w > 0.0)
                .map(|(_, v)| v.abs())
                .fold(0.0, f64::max);
            let sd = var.sqrt();
            x_mean[k] = mean;
            if magnitude == 0.0 || sd <= 1e-12 * magnitude {
                dropped.push(k);
                x_scale[k] = 0.0;
            } else {
                x_scale[k] = if standardize { sd } else { 1.0 };
            }
        }
        if dropped.len() == p {
            return Err(Error::DegenerateDesign("every column is constant under the weighting".into()));
        }
        Ok(Self {
            x_mean,
            x_scale,
            y_mean,
            dropped,
        })
    }

    /// Maps standardized slopes to (intercept, slopes) on the original scale.
    pub fn to_original(&self, standardized: &[f64]) -> (f64, Vec<f64>) {
        let slopes: Vec<f64> = standardized
            .iter()
            .zip(&self.x_scale)
            .map(|(&b, &s)| if s == 0.0 || b == 0.0 { 0.0 } else { b / s })
            .collect();
        let intercept = self.y_mean
            - self
                .x_mean
                .iter()
                .zip(&slopes)
                .map(|(m, b)| m * b)
                .sum::<f64>();
        (intercept, slopes)
    }

    /// Prediction for `row` from standardized slopes without leaving the
    /// standardized parametrisation.
    pub fn predict_standardized(&self, standardized: &[f64], row: &[f64]) -> f64 {
        let mut acc = self.y_mean;
        for k in 0..standardized.len() {
            if self.x_scale[k] != 0.0 && standardized[k] != 0.0 {
                acc += (row[k] - self.x_mean[k]) / self.x_scale[k] * standardized[k];
            }
        }
        acc
    }
}

fn validate_inputs(n: usize, p: usize, ny: usize, weights: &[f64]) -> Result<()> {
    if ny != n {
        return Err(Error::DimensionMismatch { expected: n, found: ny });
    }
    if weights.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: weights.len(),
        });
    }
    if p == 0 {
        return Err(Error::DegenerateDesign("design has no columns".into()));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::InvalidInput("weights must be finite and non-negative".into()));
    }
    let positive = weights.iter().filter(|&&w| w > 0.0).count();
    if positive < 2 {
        return Err(Error::DegenerateDesign(format!(
            "{positive} positively weighted rows, need at least 2"
        )));
    }
    Ok(())
}

/// What happened to the active set at a knot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PathEvent {
    Enter(usize),
    Drop(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Knot {
    /// ℓ1 norm of the standardized slopes.
    pub l1: f64,
    /// Penalty at which this knot is the lasso solution.
    pub lambda: f64,
    /// Standardized slopes, one per design column.
    pub coefs: Vec<f64>,
    /// Variables moving on the segment that leaves this knot (the final
    /// active set for the last knot).
    pub active: Vec<usize>,
    /// `None` only on the final knot.
    pub event: Option<PathEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LarsPath {
    knots: Vec<Knot>,
    standardization: Standardization,
    /// Columns skipped because they were collinear with the active set.
    collinear: Vec<usize>,
}

/// A point on the path, mapped back to the original column scales.
#[derive(Debug, Clone, PartialEq)]
pub struct LassoSolution {
    pub s_frac: ShrinkageFraction,
    pub intercept: f64,
    pub slopes: Vec<f64>,
    /// `true` where the slope is exactly zero.
    pub zero_mask: Vec<bool>,
}

impl LassoSolution {
    /// Intercept followed by slopes.
    pub fn coefficients(&self) -> Vec<f64> {
        let mut c = Vec::with_capacity(self.slopes.len() + 1);
        c.push(self.intercept);
        c.extend_from_slice(&self.slopes);
        c
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        self.intercept + self.slopes.iter().zip(row).map(|(b, x)| b * x).sum::<f64>()
    }
}

/// The point on a path that best predicts a held-out response.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathPoint {
    pub s_frac: ShrinkageFraction,
    pub prediction: f64,
    pub squared_error: f64,
}

/// Builds `Z = diag(√w)(X − 1x̄ᵀ)/scale` and `y_c = diag(√w)(y − ȳ)` over the
/// kept columns.
fn standardized_problem(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    weights: &[f64],
    st: &Standardization,
) -> (DMatrix<f64>, DVector<f64>, Vec<usize>) {
    let n = x.nrows();
    let kept: Vec<usize> = (0..x.ncols()).filter(|k| st.x_scale[*k] != 0.0).collect();
    let sw: Vec<f64> = weights.iter().map(|w| w.sqrt()).collect();
    let z = DMatrix::from_fn(n, kept.len(), |i, c| {
        let k = kept[c];
        sw[i] * (x[(i, k)] - st.x_mean[k]) / st.x_scale[k]
    });
    let yc = DVector::from_fn(n, |i, _| sw[i] * (y[i] - st.y_mean));
    (z, yc, kept)
}

/// Full lasso path for the weighted regression of `y` on `x` (no intercept
/// column; the intercept is implicit).
pub fn lars_path(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    weights: &[f64],
    options: &LarsOptions,
) -> Result<LarsPath> {
    let st = Standardization::compute(x, y, weights, options.standardize)?;
    let (z, yc, kept) = standardized_problem(x, y, weights, &st);
    let p = x.ncols();
    let q = kept.len();
    let positive_rows = weights.iter().filter(|&&w| w > 0.0).count();
    let max_active = q.min(positive_rows - 1);

    let gram = z.transpose() * &z;
    let mut beta = DVector::<f64>::zeros(q);
    let mut corr = z.tr_mul(&yc);
    let c0 = corr.amax();
    let c_tol = (c0 * 1e-11).max(f64::MIN_POSITIVE);

    let full = |beta: &DVector<f64>| -> Vec<f64> {
        let mut out = vec![0.0; p];
        for (c, &k) in kept.iter().enumerate() {
            out[k] = beta[c];
        }
        out
    };
    let to_cols = |set: &[usize]| -> Vec<usize> {
        let mut v: Vec<usize> = set.iter().map(|&c| kept[c]).collect();
        v.sort_unstable();
        v
    };

    let mut knots = Vec::new();
    let mut collinear = Vec::new();
    if c0 <= f64::MIN_POSITIVE || max_active == 0 || !c0.is_finite() {
        knots.push(Knot {
            l1: 0.0,
            lambda: if c0.is_finite() { c0 } else { 0.0 },
            coefs: vec![0.0; p],
            active: Vec::new(),
            event: None,
        });
        return Ok(LarsPath {
            knots,
            standardization: st,
            collinear,
        });
    }

    let mut active: Vec<usize> = Vec::new();
    let mut ignored = vec![false; q];
    let mut big_c = c0;
    let mut just_dropped: Option<usize> = None;
    let mut pending_event: Option<PathEvent> = None;
    let max_steps = 20 * q + 50;

    for step in 0..max_steps {
        if pending_event.is_none() {
            // add the most correlated admissible inactive column
            loop {
                let candidate = (0..q)
                    .filter(|j| !ignored[*j] && !active.contains(j))
                    .max_by(|&a, &b| corr[a].abs().total_cmp(&corr[b].abs()).then(b.cmp(&a)));
                let Some(j) = candidate else { break };
                if is_collinear(&gram, &active, j) {
                    ignored[j] = true;
                    collinear.push(kept[j]);
                    continue;
                }
                active.push(j);
                pending_event = Some(PathEvent::Enter(kept[j]));
                break;
            }
        }
        if knots.is_empty() {
            knots.push(Knot {
                l1: 0.0,
                lambda: c0,
                coefs: vec![0.0; p],
                active: to_cols(&active),
                event: pending_event,
            });
        } else if let Some(last) = knots.last_mut() {
            last.active = to_cols(&active);
            last.event = pending_event;
        }
        pending_event = None;
        if active.is_empty() {
            break;
        }

        let m = active.len();
        let g_a = DMatrix::from_fn(m, m, |r, c| gram[(active[r], active[c])]);
        let signs = DVector::from_fn(m, |r, _| sign(corr[active[r]]));
        let chol = Cholesky::new(g_a).ok_or(Error::NumericalRankLoss { step })?;
        let g = chol.solve(&signs);
        let denom = signs.dot(&g);
        if !(denom > 0.0) || !denom.is_finite() {
            return Err(Error::NumericalRankLoss { step });
        }
        let aa = denom.powf(-0.5);
        let w = g * aa;
        // a = Zᵀu with u = Z_A w
        let a = DVector::from_fn(q, |j, _| (0..m).map(|r| gram[(j, active[r])] * w[r]).sum::<f64>());

        let ls_step = big_c / aa;
        let mut gamma = ls_step;
        let mut entering_possible = false;
        if active.len() < max_active {
            for j in 0..q {
                if ignored[j] || active.contains(&j) {
                    continue;
                }
                // the column dropped at the previous knot sits exactly on the
                // boundary; only a genuine re-entry counts for it
                let floor = if Some(j) == just_dropped { 1e-8 } else { 1e-12 } * ls_step;
                for cand in [(big_c - corr[j]) / (aa - a[j]), (big_c + corr[j]) / (aa + a[j])] {
                    if cand.is_finite() && cand > floor && cand < gamma {
                        gamma = cand;
                        entering_possible = true;
                    }
                }
            }
        }
        let mut drop_at: Option<usize> = None;
        for (r, &j) in active.iter().enumerate() {
            if w[r] == 0.0 || beta[j] == 0.0 {
                continue;
            }
            let cross = -beta[j] / w[r];
            if cross > ls_step * 1e-12 && cross < gamma {
                gamma = cross;
                drop_at = Some(r);
            }
        }

        for (r, &j) in active.iter().enumerate() {
            beta[j] += gamma * w[r];
        }
        just_dropped = None;
        if let Some(r) = drop_at {
            let j = active.remove(r);
            beta[j] = 0.0;
            just_dropped = Some(j);
            pending_event = Some(PathEvent::Drop(kept[j]));
        }

        let resid = &yc - &z * &beta;
        corr = z.tr_mul(&resid);
        big_c = active.iter().map(|&j| corr[j].abs()).fold(0.0, f64::max);
        if drop_at.is_none() && !entering_possible {
            // least squares on the active set has been reached
            big_c = 0.0;
        }
        let l1 = beta.iter().map(|b| b.abs()).sum::<f64>();
        let prev_l1 = knots.last().map_or(0.0, |k| k.l1);
        if l1 > prev_l1 {
            knots.push(Knot {
                l1,
                lambda: big_c,
                coefs: full(&beta),
                active: to_cols(&active),
                event: None,
            });
        } else if let Some(last) = knots.last_mut() {
            // zero-length step: fold the event into the previous knot
            last.coefs = full(&beta);
            last.lambda = big_c;
        }
        if big_c <= c_tol || (drop_at.is_none() && !entering_possible) {
            break;
        }
    }
    if let Some(last) = knots.last_mut() {
        last.event = None;
    }
    Ok(LarsPath {
        knots,
        standardization: st,
        collinear,
    })
}

fn sign(v: f64) -> f64 {
    if v < 0.0 {
        -1.0
    } else {
        1.0
    }
}

fn is_collinear(gram: &DMatrix<f64>, active: &[usize], j: usize) -> bool {
    let gjj = gram[(j, j)];
    if gjj <= 0.0 {
        return true;
    }
    if active.is_empty() {
        return false;
    }
    let m = active.len();
    let g_a = DMatrix::from_fn(m, m, |r, c| gram[(active[r], active[c])]);
    let g_aj = DVector::from_fn(m, |r, _| gram[(active[r], j)]);
    match Cholesky::new(g_a) {
        Some(ch) => {
            let v = ch.solve(&g_aj);
            gjj - g_aj.dot(&v) <= COLLINEAR_RTOL * gjj
        }
        None => true,
    }
}

impl LarsPath {
    pub fn knots(&self) -> &[Knot] {
        &self.knots
    }

    pub fn standardization(&self) -> &Standardization {
        &self.standardization
    }

    pub fn collinear(&self) -> &[usize] {
        &self.collinear
    }

    pub fn n_features(&self) -> usize {
        self.standardization.x_mean.len()
    }

    pub fn max_l1(&self) -> f64 {
        self.knots.last().map_or(0.0, |k| k.l1)
    }

    /// Standardized slopes at fraction `s` of the maximal ℓ1 norm.
    pub fn standardized_at(&self, s: ShrinkageFraction) -> Vec<f64> {
        let max = self.max_l1();
        if max == 0.0 {
            return self.knots[0].coefs.clone();
        }
        let target = s.value() * max;
        let snap = KNOT_SNAP_RTOL * max;
        if let Some(k) = self.knots.iter().find(|k| (k.l1 - target).abs() <= snap) {
            return k.coefs.clone();
        }
        let hi = self.knots.partition_point(|k| k.l1 < target).min(self.knots.len() - 1);
        let lo = hi.saturating_sub(1);
        let (a, b) = (&self.knots[lo], &self.knots[hi]);
        let t = (target - a.l1) / (b.l1 - a.l1);
        interpolate(&a.coefs, &b.coefs, t)
    }

    pub fn solution_at(&self, s: ShrinkageFraction) -> LassoSolution {
        let std = self.standardized_at(s);
        let (intercept, slopes) = self.standardization.to_original(&std);
        let zero_mask = slopes.iter().map(|b| *b == 0.0).collect();
        LassoSolution {
            s_frac: s,
            intercept,
            slopes,
            zero_mask,
        }
    }

    /// Fraction at which knot `k` sits.
    pub fn knot_fraction(&self, k: usize) -> ShrinkageFraction {
        let max = self.max_l1();
        if max == 0.0 {
            ShrinkageFraction::ZERO
        } else {
            ShrinkageFraction((self.knots[k].l1 / max).clamp(0.0, 1.0))
        }
    }

    /// Prediction for `row` at every knot.
    pub fn knot_predictions(&self, row: &[f64]) -> Vec<f64> {
        self.knots
            .iter()
            .map(|k| self.standardization.predict_standardized(&k.coefs, row))
            .collect()
    }

    /// Exact minimiser of `(target − ŷ(row))²` over the whole path, knots and
    /// interior points alike. Predictions are linear along each segment, so
    /// each segment contributes its endpoints and, when the target lies
    /// between them, the crossing point. Residuals within rounding of the
    /// best one count as ties, and the point furthest along the path wins.
    pub fn best_point(&self, row: &[f64], target: f64) -> PathPoint {
        let preds = self.knot_predictions(row);
        let max = self.max_l1();
        let point = |s: ShrinkageFraction, prediction: f64| PathPoint {
            s_frac: s,
            prediction,
            squared_error: (target - prediction).powi(2),
        };
        let mut candidates = vec![point(self.knot_fraction(0), preds[0])];
        for k in 1..preds.len() {
            let (a, b) = (preds[k - 1], preds[k]);
            if (a - target) * (b - target) < 0.0 {
                let t = (target - a) / (b - a);
                let l1 = self.knots[k - 1].l1 + t * (self.knots[k].l1 - self.knots[k - 1].l1);
                candidates.push(point(ShrinkageFraction((l1 / max).clamp(0.0, 1.0)), a + t * (b - a)));
            }
            candidates.push(point(self.knot_fraction(k), b));
        }
        let scale = preds.iter().fold(target.abs().max(1.0), |m, p| m.max(p.abs()));
        let tol = (TIE_RESIDUAL * scale).powi(2);
        let min = candidates
            .iter()
            .map(|c| c.squared_error)
            .fold(f64::INFINITY, f64::min);
        candidates
            .into_iter()
            .rev()
            .find(|c| c.squared_error <= min + tol)
            .expect("path has at least one knot")
    }
}

fn interpolate(a: &[f64], b: &[f64], t: f64) -> Vec<f64> {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| if x == 0.0 && y == 0.0 { 0.0 } else { x + t * (y - x) })
        .collect()
}

/// Coordinate-descent lasso solution, kept as an independent reference for
/// the path.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution {
    pub standardized: Vec<f64>,
    pub intercept: f64,
    pub slopes: Vec<f64>,
    pub sweeps: usize,
}

/// Minimises `½‖y_c − Zβ‖² + λ‖β‖₁` on the same standardized problem as
/// [`lars_path`] by cyclic coordinate descent. Stops when no coordinate
/// moves by more than `1e-12` in a sweep.
pub fn lasso_oracle(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    weights: &[f64],
    lambda: f64,
    options: &LarsOptions,
    max_sweeps: usize,
) -> Result<OracleSolution> {
    if !(lambda >= 0.0) {
        return Err(Error::InvalidInput(format!("lambda must be non-negative, got {lambda}")));
    }
    let (n, p) = x.shape();
    validate_inputs(n, p, y.len(), weights)?;

    // centring and scaling re-derived here rather than shared with the path
    let total: f64 = weights.iter().sum();
    let wmean = |v: &mut dyn Iterator<Item = f64>| -> f64 {
        v.zip(weights).map(|(a, w)| a * w).sum::<f64>() / total
    };
    let y_mean = wmean(&mut y.iter().copied());
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(p);
    let mut means = vec![0.0; p];
    let mut scales = vec![0.0; p];
    for k in 0..p {
        let m = wmean(&mut x.column(k).iter().copied());
        let var = wmean(&mut x.column(k).iter().map(|v| (v - m) * (v - m)));
        let big = (0..n)
            .filter(|&i| weights[i] > 0.0)
            .map(|i| x[(i, k)].abs())
            .fold(0.0, f64::max);
        means[k] = m;
        let sd = var.sqrt();
        if big == 0.0 || sd <= 1e-12 * big {
            cols.push(vec![0.0; n]);
            continue;
        }
        scales[k] = if options.standardize { sd } else { 1.0 };
        cols.push(
            (0..n)
                .map(|i| weights[i].sqrt() * (x[(i, k)] - m) / scales[k])
                .collect(),
        );
    }
    if scales.iter().all(|s| *s == 0.0) {
        return Err(Error::DegenerateDesign("every column is constant under the weighting".into()));
    }
    let norms: Vec<f64> = cols.iter().map(|c| c.iter().map(|v| v * v).sum()).collect();
    let mut resid: Vec<f64> = (0..n).map(|i| weights[i].sqrt() * (y[i] - y_mean)).collect();
    let mut beta = vec![0.0; p];

    for sweep in 1..=max_sweeps {
        let mut max_delta = 0.0_f64;
        for k in 0..p {
            if norms[k] == 0.0 {
                continue;
            }
            let rho: f64 = cols[k].iter().zip(&resid).map(|(a, r)| a * r).sum::<f64>() + norms[k] * beta[k];
            let updated = soft_threshold(rho, lambda) / norms[k];
            let delta = updated - beta[k];
            if delta != 0.0 {
                for (r, a) in resid.iter_mut().zip(&cols[k]) {
                    *r -= delta * a;
                }
                beta[k] = updated;
                max_delta = max_delta.max(delta.abs());
            }
        }
        if max_delta <= 1e-12 {
            let slopes: Vec<f64> = (0..p)
                .map(|k| if scales[k] == 0.0 { 0.0 } else { beta[k] / scales[k] })
                .collect();
            let intercept = y_mean - means.iter().zip(&slopes).map(|(m, b)| m * b).sum::<f64>();
            return Ok(OracleSolution {
                standardized: beta,
                intercept,
                slopes,
                sweeps: sweep,
            });
        }
    }
    Err(Error::NonConvergence { sweeps: max_sweeps })
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(n: usize) -> Vec<f64> {
        vec![1.0; n]
    }

    /// Columns orthogonal, mean zero, equal norm.
    fn orthogonal_design() -> DMatrix<f64> {
        DMatrix::from_row_slice(
            4,
            2,
            &[1.0, 1.0, 1.0, -1.0, -1.0, 1.0, -1.0, -1.0],
        )
    }

    #[test]
    fn orthogonal_design_is_soft_thresholding() {
        let x = orthogonal_design();
        let y = &x * DVector::from_vec(vec![3.0, 0.0]);
        let path = lars_path(&x, &y, &unit(4), &LarsOptions::default()).unwrap();
        let knots = path.knots();
        assert_eq!(knots.len(), 2);
        assert_eq!(knots[0].active, vec![0]);
        assert_eq!(knots[0].event, Some(PathEvent::Enter(0)));
        // column 1 never enters
        assert!(knots.iter().all(|k| k.coefs[1] == 0.0));
        let end = path.solution_at(ShrinkageFraction::ONE);
        assert!((end.slopes[0] - 3.0).abs() < 1e-12);
        assert_eq!(end.slopes[1], 0.0);
        // slope 0 grows linearly in s
        for s in [0.25, 0.5, 0.75] {
            let sol = path.solution_at(ShrinkageFraction::new(s).unwrap());
            assert!((sol.slopes[0] - 3.0 * s).abs() < 1e-12);
            assert!(sol.zero_mask[1]);
        }
    }

    #[test]
    fn orthogonal_oracle_matches_soft_threshold() {
        let x = orthogonal_design();
        let y = &x * DVector::from_vec(vec![3.0, -0.5]);
        // unit-sd columns: Z = X, ZᵀZ = 4I, Zᵀy = (12, -2)
        let sol = lasso_oracle(&x, &y, &unit(4), 3.0, &LarsOptions::default(), 1000).unwrap();
        assert!((sol.standardized[0] - (12.0 - 3.0) / 4.0).abs() < 1e-12);
        assert_eq!(sol.standardized[1], 0.0);
        let ols = lasso_oracle(&x, &y, &unit(4), 0.0, &LarsOptions::default(), 1000).unwrap();
        assert!((ols.slopes[0] - 3.0).abs() < 1e-12);
        assert!((ols.slopes[1] + 0.5).abs() < 1e-12);
    }

    #[test]
    fn oracle_zero_above_lambda_max() {
        let x = DMatrix::from_row_slice(5, 2, &[1.0, 0.3, 2.0, -1.0, 0.5, 0.7, -1.2, 2.2, 0.1, -0.4]);
        let y = DVector::from_vec(vec![1.0, 2.5, -0.3, 0.8, 1.9]);
        let path = lars_path(&x, &y, &unit(5), &LarsOptions::default()).unwrap();
        let lambda_max = path.knots()[0].lambda;
        let sol = lasso_oracle(&x, &y, &unit(5), lambda_max * 1.0001, &LarsOptions::default(), 1000).unwrap();
        assert!(sol.standardized.iter().all(|b| *b == 0.0));
    }

    #[test]
    fn uncorrelated_response_gives_single_knot() {
        let x = orthogonal_design();
        // orthogonal to both columns and to the intercept
        let y = DVector::from_vec(vec![1.0, -1.0, -1.0, 1.0]);
        let path = lars_path(&x, &y, &unit(4), &LarsOptions::default()).unwrap();
        assert_eq!(path.knots().len(), 1);
        let sol = path.solution_at(ShrinkageFraction::new(0.7).unwrap());
        assert_eq!(sol.slopes, vec![0.0, 0.0]);
        assert_eq!(sol.intercept, 0.0);
    }

    #[test]
    fn final_knot_is_weighted_least_squares() {
        let x = DMatrix::from_row_slice(
            6,
            2,
            &[1.0, 0.2, 2.0, 1.1, 3.0, -0.7, 4.0, 0.9, 5.0, 2.5, 6.0, -1.3],
        );
        let y = DVector::from_vec(vec![2.1, 3.9, 5.2, 8.8, 10.1, 11.7]);
        let w = vec![1.0, 0.5, 2.0, 0.1, 1.5, 0.8];
        let path = lars_path(&x, &y, &w, &LarsOptions::default()).unwrap();
        let end = path.solution_at(ShrinkageFraction::ONE);

        // weighted normal equations with an intercept column
        let xi = DMatrix::from_fn(6, 3, |i, j| if j == 0 { 1.0 } else { x[(i, j - 1)] });
        let wm = DMatrix::from_diagonal(&DVector::from_vec(w.clone()));
        let lhs = xi.transpose() * &wm * &xi;
        let rhs = xi.transpose() * &wm * &y;
        let beta = lhs.lu().solve(&rhs).unwrap();
        let got = end.coefficients();
        for k in 0..3 {
            assert!((got[k] - beta[k]).abs() < 1e-9, "{k}: {} vs {}", got[k], beta[k]);
        }
    }

    #[test]
    fn solution_endpoints_and_knots() {
        let x = DMatrix::from_row_slice(
            6,
            3,
            &[
                1.0, 0.2, 3.0, 2.0, 1.1, -1.0, 3.0, -0.7, 0.5, 4.0, 0.9, 2.0, 5.0, 2.5, -0.3, 6.0, -1.3, 1.1,
            ],
        );
        let y = DVector::from_vec(vec![2.1, 3.9, 5.2, 8.8, 10.1, 11.7]);
        let w = vec![1.0, 0.5, 2.0, 0.0, 1.5, 0.8];
        let path = lars_path(&x, &y, &w, &LarsOptions::default()).unwrap();

        let start = path.solution_at(ShrinkageFraction::ZERO);
        assert!(start.slopes.iter().all(|b| *b == 0.0));
        let wy: f64 = w.iter().zip(y.iter()).map(|(a, b)| a * b).sum::<f64>() / w.iter().sum::<f64>();
        assert!((start.intercept - wy).abs() < 1e-12);

        let end = path.solution_at(ShrinkageFraction::ONE);
        let last = path.knots().last().unwrap();
        assert_eq!(path.standardized_at(ShrinkageFraction::ONE), last.coefs);
        assert_eq!(end.zero_mask, last.coefs.iter().map(|b| *b == 0.0).collect::<Vec<_>>());

        for k in 0..path.knots().len() {
            let s = path.knot_fraction(k);
            assert_eq!(path.standardized_at(s), path.knots()[k].coefs);
        }
    }

    #[test]
    fn knot_structure_invariants() {
        let x = DMatrix::from_fn(12, 4, |i, j| ((i * 7 + j * 3) % 11) as f64 - 5.0 + 0.1 * (j as f64));
        let y = DVector::from_fn(12, |i, _| (i as f64).sin() * 3.0 + 0.5 * i as f64);
        let path = lars_path(&x, &y, &unit(12), &LarsOptions::default()).unwrap();
        let knots = path.knots();
        assert!(knots[0].coefs.iter().all(|b| *b == 0.0));
        for pair in knots.windows(2) {
            assert!(pair[1].l1 > pair[0].l1);
            assert!(pair[1].lambda <= pair[0].lambda + 1e-12);
        }
        for pair in knots[..knots.len() - 1].windows(2) {
            let (a, b) = (&pair[0].active, &pair[1].active);
            let diff = a.iter().filter(|v| !b.contains(v)).count() + b.iter().filter(|v| !a.contains(v)).count();
            assert_eq!(diff, 1);
        }
        assert!(knots.last().unwrap().event.is_none());
    }

    #[test]
    fn constant_columns_are_dropped() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 7.0, 2.0, 7.0, 3.0, 7.0, 4.0, 7.0]);
        let y = DVector::from_vec(vec![1.0, 2.0, 2.5, 4.5]);
        let path = lars_path(&x, &y, &unit(4), &LarsOptions::default()).unwrap();
        assert_eq!(path.standardization().dropped, vec![1]);
        let sol = path.solution_at(ShrinkageFraction::ONE);
        assert_eq!(sol.slopes[1], 0.0);

        let flat = DMatrix::from_row_slice(3, 1, &[2.0, 2.0, 2.0]);
        let y3 = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        assert!(matches!(
            lars_path(&flat, &y3, &unit(3), &LarsOptions::default()),
            Err(Error::DegenerateDesign(_))
        ));
        // a single positively weighted row is degenerate too
        let x3 = DMatrix::from_row_slice(3, 1, &[1.0, 2.0, 3.0]);
        assert!(matches!(
            lars_path(&x3, &y3, &[0.0, 1.0, 0.0], &LarsOptions::default()),
            Err(Error::DegenerateDesign(_))
        ));
    }

    #[test]
    fn duplicated_column_is_skipped() {
        let x = DMatrix::from_row_slice(5, 2, &[1.0, 1.0, 2.0, 2.0, 3.0, 3.0, 4.0, 4.0, 6.0, 6.0]);
        let y = DVector::from_vec(vec![1.1, 1.9, 3.2, 3.9, 6.1]);
        let path = lars_path(&x, &y, &unit(5), &LarsOptions::default()).unwrap();
        let sol = path.solution_at(ShrinkageFraction::ONE);
        assert!(sol.zero_mask.iter().filter(|z| **z).count() == 1);
    }

    #[test]
    fn standardization_switch_changes_path_not_endpoint() {
        let x = DMatrix::from_row_slice(
            6,
            2,
            &[1.0, 200.0, 2.0, 110.0, 3.0, -70.0, 4.0, 90.0, 5.0, 250.0, 6.0, -130.0],
        );
        let y = DVector::from_vec(vec![2.1, 3.9, 5.2, 8.8, 10.1, 11.7]);
        let a = lars_path(&x, &y, &unit(6), &LarsOptions { standardize: true }).unwrap();
        let b = lars_path(&x, &y, &unit(6), &LarsOptions { standardize: false }).unwrap();
        let ea = a.solution_at(ShrinkageFraction::ONE).coefficients();
        let eb = b.solution_at(ShrinkageFraction::ONE).coefficients();
        for (u, v) in ea.iter().zip(&eb) {
            assert!((u - v).abs() < 1e-8);
        }
        assert_eq!(b.standardization().x_scale, vec![1.0, 1.0]);
    }

    #[test]
    fn shrinkage_fraction_validation() {
        assert!(ShrinkageFraction::new(-0.1).is_err());
        assert!(ShrinkageFraction::new(1.1).is_err());
        assert!(ShrinkageFraction::new(f64::NAN).is_err());
        assert_eq!(ShrinkageFraction::new(0.5).unwrap().value(), 0.5);
    }
}
