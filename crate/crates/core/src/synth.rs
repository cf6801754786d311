//! Seeded synthetic data: station datasets with planted coefficients,
//! random lasso instances and clustered profiles.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::dataset::StationDataset;
use crate::network::{great_circle_distance, GeoPoint, TransitGraph, DEFAULT_EARTH_RADIUS_KM};

pub const TARGET: &str = "ridership";

const BASE_LAT: f64 = 22.55;
const BASE_LON: f64 = 114.05;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn normal_matrix(rng: &mut ChaCha8Rng, n: usize, p: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, p, |_, _| StandardNormal.sample(rng))
}

/// Offsets in km east/north of the base point, converted to degrees.
fn offset_point(east_km: f64, north_km: f64) -> GeoPoint {
    let km_per_deg = DEFAULT_EARTH_RADIUS_KM * PI / 180.0;
    let lat = BASE_LAT + north_km / km_per_deg;
    let lon = BASE_LON + east_km / (km_per_deg * BASE_LAT.to_radians().cos());
    GeoPoint::new(lat, lon).expect("offsets stay within coordinate range")
}

fn feature_names(p: usize) -> Vec<String> {
    (1..=p).map(|k| format!("x{k:02}")).collect()
}

fn build_dataset(ids: Vec<String>, points: Vec<GeoPoint>, x: &DMatrix<f64>, y: &[f64]) -> StationDataset {
    let rows = (0..x.nrows()).map(|i| x.row(i).iter().copied().collect()).collect();
    let targets = y.iter().map(|&v| vec![v]).collect();
    StationDataset::new(ids, points, feature_names(x.ncols()), rows, vec![TARGET.into()], targets)
        .expect("synthetic dataset is valid")
}

/// 60 stations scattered over a 20 km square, 5 well-conditioned features
/// and a globally linear response with unit noise.
pub fn fixture_f0(seed: u64) -> StationDataset {
    let (n, p) = (60, 5);
    let mut r = rng(seed);
    let points: Vec<GeoPoint> = (0..n)
        .map(|_| offset_point(r.random_range(0.0..20.0), r.random_range(0.0..20.0)))
        .collect();
    let x = normal_matrix(&mut r, n, p);
    let beta = [2.0, -1.0, 0.5, 3.0, -2.5];
    let y: Vec<f64> = (0..n)
        .map(|i| {
            let e: f64 = StandardNormal.sample(&mut r);
            1.0 + (0..p).map(|k| beta[k] * x[(i, k)]).sum::<f64>() + e
        })
        .collect();
    let ids = (0..n).map(|i| format!("f{i:03}")).collect();
    build_dataset(ids, points, &x, &y)
}

/// Layout of the five-line serpentine network: stations on parallel
/// east-west lines 0.8 km apart at 1 km spacing, consecutive lines joined
/// at alternating ends. Returns the points in network order, the edges
/// between consecutive stations and each station's arc length from the
/// first one.
pub struct SerpentineLayout {
    pub ids: Vec<String>,
    pub points: Vec<GeoPoint>,
    pub arc_km: Vec<f64>,
    pub graph: TransitGraph,
}

pub fn serpentine_network() -> SerpentineLayout {
    let lines = [24usize, 24, 24, 23, 23];
    let mut points = Vec::new();
    for (k, &len) in lines.iter().enumerate() {
        let north = 0.8 * k as f64;
        let mut line: Vec<GeoPoint> = (0..len).map(|j| offset_point(j as f64, north)).collect();
        if k % 2 == 1 {
            line.reverse();
        }
        points.extend(line);
    }
    let n = points.len();
    let ids: Vec<String> = (0..n).map(|i| format!("s{i:03}")).collect();
    let mut edges = Vec::with_capacity(n - 1);
    let mut arc_km = vec![0.0; n];
    for i in 1..n {
        let len = great_circle_distance(points[i - 1], points[i], DEFAULT_EARTH_RADIUS_KM)
            .expect("valid radius");
        arc_km[i] = arc_km[i - 1] + len;
        edges.push((ids[i - 1].clone(), ids[i].clone(), len));
    }
    let graph = TransitGraph::new(ids.clone(), &edges).expect("serpentine graph is valid");
    SerpentineLayout {
        ids,
        points,
        arc_km,
        graph,
    }
}

/// Planted coefficients of fixture F1 at arc length `s`: intercept first,
/// then ten slopes. Slopes 5 to 10 are zero everywhere, slopes 2 and 3 are
/// zero on alternating stretches.
pub fn f1_coefficients(s: f64) -> [f64; F1_FEATURES + 1] {
    [
        20.0 + 5.0 * (2.0 * PI * s / 60.0).sin(),
        3.0 + 2.0 * (2.0 * PI * s / 30.0).sin(),
        (2.5 * (2.0 * PI * s / 45.0).sin()).max(0.0),
        (2.0 * (2.0 * PI * s / 70.0).cos()).max(0.0),
        -2.0 + 1.5 * (2.0 * PI * s / 25.0).cos(),
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
    ]
}

pub const F1_FEATURES: usize = 10;

/// 118 stations on the serpentine network; coefficients vary smoothly with
/// network arc length, so stations on neighbouring lines (0.8 km apart on
/// the map) can be tens of km apart along the network.
pub fn fixture_f1(seed: u64) -> (StationDataset, TransitGraph) {
    let layout = serpentine_network();
    let n = layout.ids.len();
    let mut r = rng(seed);
    let x = normal_matrix(&mut r, n, F1_FEATURES);
    let noise = Normal::new(0.0, 0.5).expect("valid sd");
    let y: Vec<f64> = (0..n)
        .map(|i| {
            let b = f1_coefficients(layout.arc_km[i]);
            b[0] + (0..F1_FEATURES).map(|k| b[k + 1] * x[(i, k)]).sum::<f64>() + noise.sample(&mut r)
        })
        .collect();
    (build_dataset(layout.ids, layout.points, &x, &y), layout.graph)
}

/// Slopes of fixture F2; the six zero entries form the planted support's
/// complement.
pub const F2_SLOPES: [f64; 14] = [
    3.0, 0.0, -2.0, 1.5, 0.0, 4.0, -1.0, 0.0, 2.5, 0.0, 1.0, 0.0, -3.0, 0.0,
];

/// Noise-free response on the serpentine network with 14 features, six of
/// whose slopes are zero at every station.
pub fn fixture_f2(seed: u64) -> (StationDataset, TransitGraph) {
    let layout = serpentine_network();
    let n = layout.ids.len();
    let mut r = rng(seed);
    let x = normal_matrix(&mut r, n, F2_SLOPES.len());
    let y: Vec<f64> = (0..n)
        .map(|i| 10.0 + F2_SLOPES.iter().enumerate().map(|(k, b)| b * x[(i, k)]).sum::<f64>())
        .collect();
    (build_dataset(layout.ids, layout.points, &x, &y), layout.graph)
}

/// Random weighted regression problem with 2..=`max_n` rows and
/// 1..=`max_p` columns.
pub struct LassoInstance {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub weights: Vec<f64>,
}

pub fn random_lasso_instance(seed: u64, max_n: usize, max_p: usize) -> LassoInstance {
    let mut r = rng(seed);
    let p = r.random_range(1..=max_p);
    let n = r.random_range((p + 2).min(max_n)..=max_n);
    let x = normal_matrix(&mut r, n, p);
    let beta: Vec<f64> = (0..p)
        .map(|_| if r.random_bool(0.3) { 0.0 } else { r.random_range(-3.0..3.0) })
        .collect();
    let y = DVector::from_fn(n, |i, _| {
        let e: f64 = StandardNormal.sample(&mut r);
        (0..p).map(|k| beta[k] * x[(i, k)]).sum::<f64>() + e
    });
    let weights = (0..n).map(|_| r.random_range(0.2..1.0)).collect();
    LassoInstance { x, y, weights }
}

/// Connected graph on 2..=`max_nodes` nodes named `v00`, `v01`, ...: a
/// random spanning tree plus up to `n` extra edges, possibly parallel.
/// Integer lengths in 1..=3 make equal-length shortest paths common.
pub fn random_connected_graph(seed: u64, max_nodes: usize, integer_lengths: bool) -> (Vec<String>, Vec<(usize, usize, f64)>) {
    let mut r = rng(seed);
    let n = r.random_range(2..=max_nodes.max(2));
    let len = |r: &mut ChaCha8Rng| {
        if integer_lengths {
            r.random_range(1..=3) as f64
        } else {
            r.random_range(0.1..10.0)
        }
    };
    let mut edges = Vec::new();
    for v in 1..n {
        let u = r.random_range(0..v);
        edges.push((u, v, len(&mut r)));
    }
    for _ in 0..r.random_range(0..=n) {
        let a = r.random_range(0..n);
        let b = r.random_range(0..n);
        if a != b {
            edges.push((a, b, len(&mut r)));
        }
    }
    ((0..n).map(|i| format!("v{i:02}")).collect(), edges)
}

/// A unimodal error curve over bandwidth with its minimiser drawn inside
/// `[lb, ub]`.
#[derive(Debug, Clone, Copy)]
pub struct UnimodalCurve {
    pub minimiser: f64,
    pub floor: f64,
    pub left: f64,
    pub right: f64,
    pub power: f64,
}

impl UnimodalCurve {
    pub fn random(seed: u64, lb: f64, ub: f64) -> Self {
        let mut r = rng(seed);
        Self {
            minimiser: r.random_range(lb + 0.05 * (ub - lb)..ub - 0.05 * (ub - lb)),
            floor: r.random_range(0.5..5.0),
            left: r.random_range(0.1..3.0),
            right: r.random_range(0.1..3.0),
            power: r.random_range(1.0..3.0),
        }
    }

    pub fn eval(&self, b: f64) -> f64 {
        let d = b - self.minimiser;
        let slope = if d < 0.0 { self.left } else { self.right };
        self.floor + slope * d.abs().powf(self.power)
    }
}

/// `k` tight clusters of `per` points each around mutually orthogonal
/// centres `10·e_j` in `dim` dimensions. Returns the points and the
/// planted labels.
pub fn planted_blobs(seed: u64, k: usize, per: usize, dim: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
    assert!(k <= dim, "need one axis per blob");
    let mut r = rng(seed);
    let spread = Normal::new(0.0, 0.1).expect("valid sd");
    let mut points = Vec::with_capacity(k * per);
    let mut labels = Vec::with_capacity(k * per);
    for i in 0..k * per {
        let c = i % k;
        let p: Vec<f64> = (0..dim)
            .map(|d| if d == c { 10.0 } else { 0.0 } + spread.sample(&mut r))
            .collect();
        points.push(p);
        labels.push(c);
    }
    (points, labels)
}
