//! Grouping stations by their local coefficient profiles.

use std::ops::RangeInclusive;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ada_gwl::AdaGwlModel;
use crate::dataset::format_f64;
use crate::error::{Error, Result};

pub const MAX_ITERATIONS: usize = 300;
pub const DEFAULT_RESTARTS: usize = 10;
/// Below this ratio of the largest second difference to the largest single
/// drop, the WCSS curve has no clear elbow.
pub const WEAK_ELBOW_RATIO: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientProfile {
    pub station_id: String,
    pub values: Vec<f64>,
    /// All raw entries were equal; `values` is all zeros.
    pub zero_variance: bool,
}

/// z-score of one profile against its own mean and population standard
/// deviation.
pub fn zscore(values: &[f64]) -> (Vec<f64>, bool) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    if values.is_empty() || sd <= f64::EPSILON * mean.abs() || sd == 0.0 {
        (vec![0.0; values.len()], true)
    } else {
        (values.iter().map(|v| (v - mean) / sd).collect(), false)
    }
}

/// Per-station standardized slopes (and the intercept when asked).
pub fn scale_profiles(model: &AdaGwlModel, include_intercept: bool) -> Vec<CoefficientProfile> {
    let skip = if include_intercept { 0 } else { 1 };
    model
        .stations
        .iter()
        .zip(&model.station_ids)
        .map(|(s, id)| {
            let (values, zero_variance) = zscore(&s.coefficients[skip..]);
            CoefficientProfile {
                station_id: id.clone(),
                values,
                zero_variance,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterResult {
    pub k: usize,
    /// Numbered in order of first appearance.
    pub labels: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub wcss: f64,
    pub iterations: usize,
    /// Objective after each assignment step.
    pub history: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centre) in centroids.iter().enumerate() {
        let d = sq_dist(p, centre);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn validate(points: &[Vec<f64>], k: usize) -> Result<()> {
    let n = points.len();
    if k == 0 {
        return Err(Error::InvalidInput("k must be at least 1".into()));
    }
    if k > n {
        return Err(Error::TooManyClusters { k, n });
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::InvalidInput("profiles differ in length".into()));
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("profiles contain non-finite values".into()));
    }
    Ok(())
}

fn plus_plus_init(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &points[chosen[0]])).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random_range(0.0..total);
            let mut pick = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if target < d {
                    pick = i;
                    break;
                }
                target -= d;
            }
            pick
        } else {
            // every point coincides with a centre already
            (0..n).find(|i| !chosen.contains(i)).expect("k <= n")
        };
        chosen.push(next);
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, &points[next]));
        }
    }
    chosen.into_iter().map(|i| points[i].clone()).collect()
}

fn relabel(labels: &mut [usize], centroids: &mut Vec<Vec<f64>>) {
    let k = centroids.len();
    let mut map = vec![usize::MAX; k];
    let mut next = 0;
    for &l in labels.iter() {
        if map[l] == usize::MAX {
            map[l] = next;
            next += 1;
        }
    }
    for m in map.iter_mut().filter(|m| **m == usize::MAX) {
        *m = next;
        next += 1;
    }
    for l in labels.iter_mut() {
        *l = map[*l];
    }
    let mut reordered = vec![Vec::new(); k];
    for (old, c) in centroids.drain(..).enumerate() {
        reordered[map[old]] = c;
    }
    *centroids = reordered;
}

/// Lloyd iterations from the given centres. Empty clusters keep their
/// previous centre.
fn lloyd(points: &[Vec<f64>], mut centroids: Vec<Vec<f64>>) -> ClusterResult {
    let k = centroids.len();
    let dim = points[0].len();
    let mut labels: Vec<usize> = Vec::new();
    let mut history = Vec::new();
    let mut iterations = 0;
    loop {
        let assigned: Vec<(usize, f64)> = points.iter().map(|p| nearest(p, &centroids)).collect();
        let objective: f64 = assigned.iter().map(|a| a.1).sum();
        if let Some(&prev) = history.last() {
            debug_assert!(objective <= prev * (1.0 + 1e-12) + 1e-12, "k-means objective increased");
        }
        history.push(objective);
        let new_labels: Vec<usize> = assigned.iter().map(|a| a.0).collect();
        if new_labels == labels || iterations == MAX_ITERATIONS {
            labels = new_labels;
            break;
        }
        labels = new_labels;
        iterations += 1;
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &l) in points.iter().zip(&labels) {
            counts[l] += 1;
            for (s, v) in sums[l].iter_mut().zip(p) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
    }
    let wcss = *history.last().expect("at least one assignment");
    relabel(&mut labels, &mut centroids);
    ClusterResult {
        k,
        labels,
        centroids,
        wcss,
        iterations,
        history,
    }
}

fn better(a: ClusterResult, b: ClusterResult) -> ClusterResult {
    if b.wcss < a.wcss {
        b
    } else {
        a
    }
}

/// k-means++ seeded Lloyd clustering, best of `restarts` runs. Restart `r`
/// draws from stream `r` of the seeded generator; equal objectives keep
/// the lowest restart.
pub fn kmeans_restarts(points: &[Vec<f64>], k: usize, seed: u64, restarts: usize) -> Result<ClusterResult> {
    validate(points, k)?;
    let runs: Vec<ClusterResult> = (0..restarts.max(1))
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64);
            lloyd(points, plus_plus_init(points, k, &mut rng))
        })
        .collect();
    Ok(runs.into_iter().reduce(better).expect("at least one restart"))
}

pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64) -> Result<ClusterResult> {
    kmeans_restarts(points, k, seed, DEFAULT_RESTARTS)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KChoice {
    pub k: usize,
    /// `(k, wcss)` over the evaluated range.
    pub curve: Vec<(usize, f64)>,
    pub weak_elbow: bool,
}

/// Elbow of a WCSS curve: the interior `k` with the largest second
/// difference, smallest `k` on ties.
pub fn elbow(curve: &[(usize, f64)]) -> Result<KChoice> {
    if curve.len() < 3 {
        return Err(Error::RangeTooSmall(curve.len()));
    }
    let mut best = (curve[1].0, f64::NEG_INFINITY);
    for w in curve.windows(3) {
        let d2 = w[0].1 - 2.0 * w[1].1 + w[2].1;
        if d2 > best.1 {
            best = (w[1].0, d2);
        }
    }
    let max_drop = curve.windows(2).map(|w| w[0].1 - w[1].1).fold(0.0_f64, f64::max);
    let weak_elbow = max_drop <= 0.0 || best.1 < WEAK_ELBOW_RATIO * max_drop;
    Ok(KChoice {
        k: best.0,
        curve: curve.to_vec(),
        weak_elbow,
    })
}

/// Runs k-means over `k_range` and picks the elbow. Each `k` is also
/// refined from the previous solution plus its worst-fitting point, so the
/// curve never increases.
pub fn choose_k(points: &[Vec<f64>], k_range: RangeInclusive<usize>, seed: u64) -> Result<(KChoice, Vec<ClusterResult>)> {
    let (lo, hi) = (*k_range.start(), *k_range.end());
    let count = if hi >= lo { hi - lo + 1 } else { 0 };
    if count < 3 {
        return Err(Error::RangeTooSmall(count));
    }
    validate(points, hi)?;
    validate(points, lo)?;
    let mut results: Vec<ClusterResult> = Vec::with_capacity(count);
    for k in lo..=hi {
        let mut fit = kmeans(points, k, seed)?;
        if let Some(prev) = results.last() {
            let worst = points
                .iter()
                .map(|p| nearest(p, &prev.centroids).1)
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |m, (i, d)| if d > m.1 { (i, d) } else { m });
            let mut centres = prev.centroids.clone();
            centres.push(points[worst.0].clone());
            fit = better(fit, lloyd(points, centres));
        }
        results.push(fit);
    }
    let curve: Vec<(usize, f64)> = results.iter().map(|r| (r.k, r.wcss)).collect();
    Ok((elbow(&curve)?, results))
}

pub fn write_labels_csv(ids: &[String], labels: &[usize], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["station_id", "cluster"])?;
    for (id, l) in ids.iter().zip(labels) {
        w.write_record([id.as_str(), &l.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_wcss_csv(curve: &[(usize, f64)], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["k", "wcss"])?;
    for (k, v) in curve {
        w.write_record([k.to_string(), format_f64(*v)])?;
    }
    w.flush()?;
    Ok(())
}
