//! Station graph, great-circle and shortest-path distance matrices, and the
//! network-structure features (degree, betweenness, distance to centre).
//!
//! Edges are undirected. Shortest paths use a binary-heap label-setting
//! search from every source; betweenness uses Brandes' dependency
//! accumulation on the same search.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean Earth radius (IUGG), km.
pub const DEFAULT_EARTH_RADIUS_KM: f64 = 6371.0088;

/// Relative tolerance used to treat two path lengths as tied.
const TIE_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    lat: f64,
    lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self> {
        if !lat.is_finite() || !(-90.0..=90.0).contains(&lat) {
            return Err(Error::InvalidInput(format!("latitude {lat} outside [-90, 90]")));
        }
        if !lon.is_finite() || !(-180.0..=180.0).contains(&lon) {
            return Err(Error::InvalidInput(format!("longitude {lon} outside [-180, 180]")));
        }
        Ok(Self { lat, lon })
    }

    pub fn lat(&self) -> f64 {
        self.lat
    }

    pub fn lon(&self) -> f64 {
        self.lon
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Euclidean,
    Network,
}

impl Metric {
    pub fn as_str(&self) -> &'static str {
        match self {
            Metric::Euclidean => "euclidean",
            Metric::Network => "network",
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "euclidean" => Ok(Metric::Euclidean),
            "network" => Ok(Metric::Network),
            other => Err(Error::Config(format!("unknown metric `{other}`"))),
        }
    }
}

/// Symmetric n×n matrix of distances in km, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    data: Vec<f64>,
    metric: Metric,
}

impl DistanceMatrix {
    /// Builds a matrix from row-major values, checking the zero diagonal,
    /// symmetry and non-negativity.
    pub fn from_rows(n: usize, data: Vec<f64>, metric: Metric) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                found: data.len(),
            });
        }
        for i in 0..n {
            if data[i * n + i] != 0.0 {
                return Err(Error::InvalidInput(format!("non-zero diagonal at {i}")));
            }
            for j in 0..n {
                let v = data[i * n + j];
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::InvalidInput(format!(
                        "distance ({i}, {j}) = {v} is not a finite non-negative number"
                    )));
                }
                if v != data[j * n + i] {
                    return Err(Error::InvalidInput(format!("distance matrix asymmetric at ({i}, {j})")));
                }
            }
        }
        Ok(Self { n, data, metric })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(0.0, f64::max)
    }

    /// Smallest strictly positive off-diagonal entry, if any.
    pub fn min_positive(&self) -> Option<f64> {
        self.data
            .iter()
            .copied()
            .filter(|&d| d > 0.0)
            .min_by(|a, b| a.total_cmp(b))
    }
}

/// Great-circle distance via the spherical law of cosines, with the arccos
/// argument clamped to [-1, 1].
pub fn great_circle_distance(a: GeoPoint, b: GeoPoint, radius_km: f64) -> Result<f64> {
    check_radius(radius_km)?;
    Ok(central_angle(a, b) * radius_km)
}

fn central_angle(a: GeoPoint, b: GeoPoint) -> f64 {
    if a == b {
        return 0.0;
    }
    let (lat_a, lat_b) = (a.lat.to_radians(), b.lat.to_radians());
    let dlon = (b.lon - a.lon).to_radians();
    let cos_angle = lat_a.cos() * lat_b.cos() * dlon.cos() + lat_a.sin() * lat_b.sin();
    cos_angle.clamp(-1.0, 1.0).acos()
}

fn check_radius(radius_km: f64) -> Result<()> {
    if radius_km.is_finite() && radius_km > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("earth radius must be positive, got {radius_km}")))
    }
}

pub fn euclidean_distance_matrix(
    ids: &[String],
    points: &[GeoPoint],
    radius_km: f64,
) -> Result<DistanceMatrix> {
    check_radius(radius_km)?;
    if ids.len() != points.len() {
        return Err(Error::DimensionMismatch {
            expected: ids.len(),
            found: points.len(),
        });
    }
    if points.len() < 2 {
        return Err(Error::InvalidInput("need at least 2 stations".into()));
    }
    let mut seen = HashSet::new();
    for id in ids {
        if !seen.insert(id.as_str()) {
            return Err(Error::DuplicateStationId(id.clone()));
        }
    }
    let n = points.len();
    let mut data = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = central_angle(points[i], points[j]) * radius_km;
            data[i * n + j] = d;
            data[j * n + i] = d;
        }
    }
    Ok(DistanceMatrix {
        n,
        data,
        metric: Metric::Euclidean,
    })
}

pub fn distance_to_center(points: &[GeoPoint], center: GeoPoint, radius_km: f64) -> Result<Vec<f64>> {
    check_radius(radius_km)?;
    Ok(points.iter().map(|&p| central_angle(p, center) * radius_km).collect())
}

/// Undirected station graph with positive edge lengths in km.
#[derive(Debug, Clone)]
pub struct TransitGraph {
    nodes: Vec<String>,
    edges: Vec<(usize, usize, f64)>,
    /// Adjacency with parallel edges collapsed to their shortest length.
    adjacency: Vec<Vec<(usize, f64)>>,
}

impl TransitGraph {
    pub fn new<S: AsRef<str>>(nodes: Vec<String>, edges: &[(S, S, f64)]) -> Result<Self> {
        let mut index = HashMap::with_capacity(nodes.len());
        for (i, id) in nodes.iter().enumerate() {
            if index.insert(id.clone(), i).is_some() {
                return Err(Error::DuplicateStationId(id.clone()));
            }
        }
        let mut indexed = Vec::with_capacity(edges.len());
        for (from, to, length) in edges {
            let (from, to) = (from.as_ref(), to.as_ref());
            let a = *index.get(from).ok_or_else(|| Error::UnknownStation(from.to_string()))?;
            let b = *index.get(to).ok_or_else(|| Error::UnknownStation(to.to_string()))?;
            if !length.is_finite() || *length <= 0.0 {
                return Err(Error::NonPositiveLength {
                    from: from.to_string(),
                    to: to.to_string(),
                    length: *length,
                });
            }
            if a == b {
                return Err(Error::InvalidInput(format!("self-loop at station `{from}`")));
            }
            indexed.push((a, b, *length));
        }
        Ok(Self::from_indexed(nodes, indexed))
    }

    fn from_indexed(nodes: Vec<String>, edges: Vec<(usize, usize, f64)>) -> Self {
        let mut best: HashMap<(usize, usize), f64> = HashMap::new();
        for &(a, b, len) in &edges {
            let key = (a.min(b), a.max(b));
            best.entry(key)
                .and_modify(|l| *l = l.min(len))
                .or_insert(len);
        }
        let mut adjacency = vec![Vec::new(); nodes.len()];
        let mut pairs: Vec<_> = best.into_iter().collect();
        pairs.sort_by(|x, y| x.0.cmp(&y.0));
        for ((a, b), len) in pairs {
            adjacency[a].push((b, len));
            adjacency[b].push((a, len));
        }
        Self {
            nodes,
            edges,
            adjacency,
        }
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn neighbors(&self, node: usize) -> &[(usize, f64)] {
        &self.adjacency[node]
    }

    /// Returns `DisconnectedGraph` naming the stations unreachable from the
    /// first node.
    pub fn ensure_connected(&self) -> Result<()> {
        if self.nodes.is_empty() {
            return Ok(());
        }
        let mut seen = vec![false; self.len()];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            for &(v, _) in &self.adjacency[u] {
                if !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        let unreachable: Vec<String> = seen
            .iter()
            .zip(&self.nodes)
            .filter(|(s, _)| !**s)
            .map(|(_, id)| id.clone())
            .collect();
        if unreachable.is_empty() {
            Ok(())
        } else {
            Err(Error::DisconnectedGraph {
                origin: self.nodes[0].clone(),
                unreachable,
            })
        }
    }
}

#[derive(Copy, Clone, PartialEq)]
struct HeapEntry {
    dist: f64,
    node: usize,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on distance, ties by node index for a deterministic order
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn single_source(g: &TransitGraph, source: usize) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; g.len()];
    let mut heap = BinaryHeap::new();
    dist[source] = 0.0;
    heap.push(HeapEntry { dist: 0.0, node: source });
    while let Some(HeapEntry { dist: d, node: u }) = heap.pop() {
        if d > dist[u] {
            continue;
        }
        for &(v, len) in g.neighbors(u) {
            let nd = d + len;
            if nd < dist[v] {
                dist[v] = nd;
                heap.push(HeapEntry { dist: nd, node: v });
            }
        }
    }
    dist
}

/// All-pairs shortest-path lengths along the graph.
pub fn network_distance_matrix(g: &TransitGraph) -> Result<DistanceMatrix> {
    if g.len() < 2 {
        return Err(Error::InvalidInput("need at least 2 stations".into()));
    }
    g.ensure_connected()?;
    let n = g.len();
    let rows: Vec<Vec<f64>> = (0..n).into_par_iter().map(|s| single_source(g, s)).collect();
    let mut data = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            // both directions are computed independently; take one so the
            // matrix is exactly symmetric
            let d = rows[i][j].min(rows[j][i]);
            data[i * n + j] = d;
            data[j * n + i] = d;
        }
    }
    Ok(DistanceMatrix {
        n,
        data,
        metric: Metric::Network,
    })
}

pub fn degree_centrality(g: &TransitGraph) -> Vec<usize> {
    (0..g.len()).map(|i| g.neighbors(i).len()).collect()
}

/// Unnormalized shortest-path betweenness over unordered pairs; tied
/// shortest paths share credit equally.
pub fn betweenness_centrality(g: &TransitGraph) -> Result<Vec<f64>> {
    g.ensure_connected()?;
    let n = g.len();
    let partial: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|s| brandes_dependencies(g, s))
        .collect();
    let mut centrality = vec![0.0; n];
    for deps in &partial {
        for (c, d) in centrality.iter_mut().zip(deps) {
            *c += d;
        }
    }
    // every unordered pair was counted from both ends
    centrality.iter_mut().for_each(|c| *c /= 2.0);
    Ok(centrality)
}

fn brandes_dependencies(g: &TransitGraph, source: usize) -> Vec<f64> {
    let n = g.len();
    let mut dist = vec![f64::INFINITY; n];
    let mut sigma = vec![0.0_f64; n];
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut settled = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut heap = BinaryHeap::new();

    dist[source] = 0.0;
    sigma[source] = 1.0;
    heap.push(HeapEntry { dist: 0.0, node: source });
    while let Some(HeapEntry { dist: d, node: u }) = heap.pop() {
        if settled[u] || d > dist[u] {
            continue;
        }
        settled[u] = true;
        order.push(u);
        for &(v, len) in g.neighbors(u) {
            if settled[v] {
                continue;
            }
            let nd = d + len;
            let tol = TIE_RTOL * nd.max(dist[v].min(f64::MAX));
            if nd < dist[v] - tol {
                dist[v] = nd;
                sigma[v] = sigma[u];
                preds[v].clear();
                preds[v].push(u);
                heap.push(HeapEntry { dist: nd, node: v });
            } else if (nd - dist[v]).abs() <= tol {
                sigma[v] += sigma[u];
                preds[v].push(u);
            }
        }
    }

    let mut delta = vec![0.0; n];
    for &w in order.iter().rev() {
        for &v in &preds[w] {
            delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w]);
        }
    }
    delta[source] = 0.0;
    delta
}

#[cfg(test)]
mod tests {
    use super::*;

    fn haversine(a: (f64, f64), b: (f64, f64), r: f64) -> f64 {
        let (p1, p2) = (a.0.to_radians(), b.0.to_radians());
        let dp = p2 - p1;
        let dl = (b.1 - a.1).to_radians();
        let h = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
        2.0 * r * h.sqrt().min(1.0).asin()
    }

    fn pt(lat: f64, lon: f64) -> GeoPoint {
        GeoPoint::new(lat, lon).unwrap()
    }

    fn graph(n: usize, edges: &[(usize, usize, f64)]) -> TransitGraph {
        let nodes = (0..n).map(|i| format!("s{i}")).collect();
        let e: Vec<(String, String, f64)> = edges
            .iter()
            .map(|&(a, b, l)| (format!("s{a}"), format!("s{b}"), l))
            .collect();
        TransitGraph::new(nodes, &e).unwrap()
    }

    #[test]
    fn great_circle_examples() {
        let r = 6371.0;
        assert_eq!(great_circle_distance(pt(22.5, 114.0), pt(22.5, 114.0), r).unwrap(), 0.0);
        let quarter = great_circle_distance(pt(0.0, 0.0), pt(0.0, 90.0), r).unwrap();
        let oracle = haversine((0.0, 0.0), (0.0, 90.0), r);
        assert!((oracle - 10007.543398010286).abs() < 1e-6);
        assert!((quarter - oracle).abs() < 1e-6);
        let half = great_circle_distance(pt(0.0, 0.0), pt(0.0, 180.0), r).unwrap();
        assert!((half - haversine((0.0, 0.0), (0.0, 180.0), r)).abs() < 1e-6);
        assert!((half - 20015.086796020572).abs() < 1e-6);
    }

    #[test]
    fn geopoint_rejects_out_of_range() {
        assert!(GeoPoint::new(95.0, 0.0).is_err());
        assert!(GeoPoint::new(0.0, -181.0).is_err());
        assert!(GeoPoint::new(f64::NAN, 0.0).is_err());
    }

    #[test]
    fn euclidean_matrix_examples() {
        let ids: Vec<String> = vec!["a".into(), "b".into()];
        let dm = euclidean_distance_matrix(&ids, &[pt(1.0, 2.0), pt(1.0, 2.0)], 6371.0).unwrap();
        assert_eq!(dm.row(0), &[0.0, 0.0]);
        assert_eq!(dm.row(1), &[0.0, 0.0]);

        let ids: Vec<String> = vec!["a".into(), "b".into(), "c".into()];
        let pts = [pt(0.0, 0.0), pt(0.0, 1.0), pt(0.0, 2.0)];
        let dm = euclidean_distance_matrix(&ids, &pts, 6371.0).unwrap();
        let oracle = haversine((0.0, 0.0), (0.0, 1.0), 6371.0);
        assert!((oracle - 111.19492664455873).abs() < 1e-9);
        assert!((dm.get(0, 1) - oracle).abs() < 1e-6);
        assert!((dm.get(1, 2) - oracle).abs() < 1e-6);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(dm.get(i, j), dm.get(j, i));
            }
        }

        let dup: Vec<String> = vec!["a".into(), "a".into()];
        assert!(matches!(
            euclidean_distance_matrix(&dup, &pts[..2], 6371.0),
            Err(Error::DuplicateStationId(_))
        ));
    }

    #[test]
    fn network_matrix_examples() {
        let path = graph(3, &[(0, 1, 1.0), (1, 2, 2.0)]);
        let dm = network_distance_matrix(&path).unwrap();
        assert_eq!(dm.get(0, 2), 3.0);
        assert_eq!(dm.metric(), Metric::Network);

        let tri = graph(3, &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 3.0)]);
        let dm = network_distance_matrix(&tri).unwrap();
        assert_eq!(dm.get(0, 2), 2.0);
        for i in 0..3 {
            assert_eq!(dm.get(i, i), 0.0);
        }
    }

    #[test]
    fn disconnected_graph_names_component() {
        let g = graph(4, &[(0, 1, 1.0), (2, 3, 1.0)]);
        match network_distance_matrix(&g) {
            Err(Error::DisconnectedGraph { origin, unreachable }) => {
                assert_eq!(origin, "s0");
                assert_eq!(unreachable, vec!["s2".to_string(), "s3".to_string()]);
            }
            other => panic!("expected DisconnectedGraph, got {other:?}"),
        }
        assert!(betweenness_centrality(&g).is_err());
    }

    #[test]
    fn graph_validation() {
        let nodes = vec!["a".to_string(), "b".to_string()];
        assert!(matches!(
            TransitGraph::new(nodes.clone(), &[("a", "b", 0.0)]),
            Err(Error::NonPositiveLength { .. })
        ));
        assert!(matches!(
            TransitGraph::new(nodes.clone(), &[("a", "z", 1.0)]),
            Err(Error::UnknownStation(_))
        ));
        assert!(TransitGraph::new(nodes, &[("a", "a", 1.0)]).is_err());
    }

    #[test]
    fn degree_examples() {
        assert_eq!(degree_centrality(&graph(3, &[(0, 1, 1.0), (1, 2, 1.0)])), vec![1, 2, 1]);
        let star = graph(5, &[(0, 1, 1.0), (0, 2, 1.0), (0, 3, 1.0), (0, 4, 1.0)]);
        assert_eq!(degree_centrality(&star), vec![4, 1, 1, 1, 1]);
        let cycle: Vec<_> = (0..5).map(|i| (i, (i + 1) % 5, 1.0)).collect();
        assert_eq!(degree_centrality(&graph(5, &cycle)), vec![2; 5]);
        // parallel edges count once
        assert_eq!(degree_centrality(&graph(2, &[(0, 1, 1.0), (1, 0, 2.0)])), vec![1, 1]);
    }

    #[test]
    fn betweenness_examples() {
        let b = betweenness_centrality(&graph(3, &[(0, 1, 1.0), (1, 2, 1.0)])).unwrap();
        assert_eq!(b, vec![0.0, 1.0, 0.0]);

        let c4: Vec<_> = (0..4).map(|i| (i, (i + 1) % 4, 1.0)).collect();
        let b = betweenness_centrality(&graph(4, &c4)).unwrap();
        for v in b {
            assert!((v - 0.5).abs() < 1e-12);
        }

        let mut k4 = Vec::new();
        for i in 0..4 {
            for j in (i + 1)..4 {
                k4.push((i, j, 1.0));
            }
        }
        assert_eq!(betweenness_centrality(&graph(4, &k4)).unwrap(), vec![0.0; 4]);
    }

    #[test]
    fn distance_to_center_examples() {
        let c = pt(0.0, 0.0);
        let d = distance_to_center(&[c, pt(0.0, 1.0)], c, 6371.0).unwrap();
        assert_eq!(d[0], 0.0);
        assert!((d[1] - haversine((0.0, 0.0), (0.0, 1.0), 6371.0)).abs() < 1e-6);
        let swapped = distance_to_center(&[pt(0.0, 1.0), c], c, 6371.0).unwrap();
        assert_eq!(swapped, vec![d[1], d[0]]);
    }
}
