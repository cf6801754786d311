//! Station tables and edge lists.
//!
//! Station CSV: `station_id,lat,lon,<feature...>,<target...>`, header
//! required. Which numeric columns are targets is declared by the caller;
//! the remaining ones are features unless an explicit feature list is
//! given. Rows are reordered by station id on load so results never depend
//! on file order.
//!
//! Edge CSV: `from,to,length_km`, header required.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::network::{
    betweenness_centrality, degree_centrality, distance_to_center, euclidean_distance_matrix,
    network_distance_matrix, DistanceMatrix, GeoPoint, Metric, TransitGraph,
};

pub const DEGREE_COLUMN: &str = "Degree";
pub const BETWEENNESS_COLUMN: &str = "Betweenness";
pub const CENTER_DISTANCE_COLUMN: &str = "Dis_to_center";

#[derive(Debug, Clone, PartialEq)]
pub struct StationDataset {
    ids: Vec<String>,
    points: Vec<GeoPoint>,
    feature_names: Vec<String>,
    /// n × p
    features: DMatrix<f64>,
    target_names: Vec<String>,
    /// n × t
    targets: DMatrix<f64>,
}

impl StationDataset {
    /// Builds a dataset from row-aligned parts and sorts it by station id.
    pub fn new(
        ids: Vec<String>,
        points: Vec<GeoPoint>,
        feature_names: Vec<String>,
        features: Vec<Vec<f64>>,
        target_names: Vec<String>,
        targets: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let n = ids.len();
        for (what, len) in [("points", points.len()), ("features", features.len()), ("targets", targets.len())] {
            if len != n {
                return Err(Error::InvalidInput(format!("{what} has {len} rows, expected {n}")));
            }
        }
        let mut seen = HashSet::new();
        for id in &ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::DuplicateStationId(id.clone()));
            }
        }
        check_unique_names(&feature_names, &target_names)?;
        for (i, (f, t)) in features.iter().zip(&targets).enumerate() {
            if f.len() != feature_names.len() || t.len() != target_names.len() {
                return Err(Error::InvalidInput(format!("row {i} has the wrong number of values")));
            }
            if f.iter().chain(t).any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!("row {i} contains a non-finite value")));
            }
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| ids[a].cmp(&ids[b]));
        let p = feature_names.len();
        let t = target_names.len();
        Ok(Self {
            ids: order.iter().map(|&i| ids[i].clone()).collect(),
            points: order.iter().map(|&i| points[i]).collect(),
            features: DMatrix::from_fn(n, p, |r, c| features[order[r]][c]),
            targets: DMatrix::from_fn(n, t, |r, c| targets[order[r]][c]),
            feature_names,
            target_names,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn points(&self) -> &[GeoPoint] {
        &self.points
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn target_names(&self) -> &[String] {
        &self.target_names
    }

    pub fn feature_matrix(&self) -> DMatrix<f64> {
        self.features.clone()
    }

    pub fn feature_row(&self, i: usize) -> Vec<f64> {
        self.features.row(i).iter().copied().collect()
    }

    pub fn feature(&self, name: &str) -> Result<Vec<f64>> {
        let k = self
            .feature_names
            .iter()
            .position(|f| f == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))?;
        Ok(self.features.column(k).iter().copied().collect())
    }

    pub fn target(&self, name: &str) -> Result<DVector<f64>> {
        let k = self
            .target_names
            .iter()
            .position(|t| t == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))?;
        Ok(self.targets.column(k).into_owned())
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.ids.binary_search_by(|s| s.as_str().cmp(id)).ok()
    }

    /// Keeps only the named features, in the given order.
    pub fn select_features(&self, names: &[String]) -> Result<Self> {
        let idx: Vec<usize> = names
            .iter()
            .map(|n| {
                self.feature_names
                    .iter()
                    .position(|f| f == n)
                    .ok_or_else(|| Error::MissingColumn(n.clone()))
            })
            .collect::<Result<_>>()?;
        let mut out = self.clone();
        out.features = DMatrix::from_fn(self.len(), idx.len(), |r, c| self.features[(r, idx[c])]);
        out.feature_names = names.to_vec();
        Ok(out)
    }

    /// A copy of `graph` whose node order matches this dataset. Stations
    /// missing from the edge list become isolated nodes.
    pub fn align_graph(&self, graph: &TransitGraph) -> Result<TransitGraph> {
        if graph.nodes() == self.ids.as_slice() {
            return Ok(graph.clone());
        }
        let edges: Vec<(&str, &str, f64)> = graph
            .edges()
            .iter()
            .map(|&(a, b, l)| (graph.nodes()[a].as_str(), graph.nodes()[b].as_str(), l))
            .collect();
        for id in graph.nodes() {
            if self.index_of(id).is_none() {
                return Err(Error::UnknownStation(id.clone()));
            }
        }
        TransitGraph::new(self.ids.clone(), &edges)
    }

    pub fn distance_matrix(
        &self,
        metric: Metric,
        graph: Option<&TransitGraph>,
        radius_km: f64,
    ) -> Result<DistanceMatrix> {
        match metric {
            Metric::Euclidean => euclidean_distance_matrix(&self.ids, &self.points, radius_km),
            Metric::Network => {
                let graph = graph.ok_or_else(|| Error::Config("network metric needs an edge list".into()))?;
                network_distance_matrix(&self.align_graph(graph)?)
            }
        }
    }

    /// Appends `Degree`, `Betweenness` and `Dis_to_center` features.
    pub fn derive_network_features(&self, graph: &TransitGraph, center: GeoPoint, radius_km: f64) -> Result<Self> {
        for name in [DEGREE_COLUMN, BETWEENNESS_COLUMN, CENTER_DISTANCE_COLUMN] {
            if self.feature_names.iter().chain(&self.target_names).any(|f| f == name) {
                return Err(Error::ColumnCollision(name.to_string()));
            }
        }
        let graph = self.align_graph(graph)?;
        let degree = degree_centrality(&graph);
        let betweenness = betweenness_centrality(&graph)?;
        let center_km = distance_to_center(&self.points, center, radius_km)?;
        let n = self.len();
        let p = self.feature_names.len();
        let mut out = self.clone();
        out.features = DMatrix::from_fn(n, p + 3, |r, c| match c {
            c if c < p => self.features[(r, c)],
            c if c == p => degree[r] as f64,
            c if c == p + 1 => betweenness[r],
            _ => center_km[r],
        });
        out.feature_names
            .extend([DEGREE_COLUMN, BETWEENNESS_COLUMN, CENTER_DISTANCE_COLUMN].map(String::from));
        Ok(out)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["station_id".to_string(), "lat".into(), "lon".into()];
        header.extend(self.feature_names.iter().cloned());
        header.extend(self.target_names.iter().cloned());
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut rec = vec![
                self.ids[i].clone(),
                format_f64(self.points[i].lat()),
                format_f64(self.points[i].lon()),
            ];
            rec.extend(self.features.row(i).iter().map(|v| format_f64(*v)));
            rec.extend(self.targets.row(i).iter().map(|v| format_f64(*v)));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_unique_names(features: &[String], targets: &[String]) -> Result<()> {
    let mut seen = HashSet::new();
    for name in features.iter().chain(targets) {
        if !seen.insert(name.as_str()) {
            return Err(Error::ColumnCollision(name.clone()));
        }
    }
    Ok(())
}

/// 17 significant digits, enough to round-trip any f64.
pub fn format_f64(v: f64) -> String {
    format!("{:.16e}", v)
}

/// Which columns of a station CSV are targets and which are features.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ColumnSpec {
    pub targets: Vec<String>,
    /// `None` means every non-target numeric column.
    pub features: Option<Vec<String>>,
}

fn parse_cell(value: &str, row: usize, column: &str) -> Result<f64> {
    value.trim().parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| Error::NonNumericCell {
        row,
        column: column.to_string(),
        value: value.to_string(),
    })
}

/// Reads a station CSV. Row numbers in errors are file line numbers.
pub fn load_stations(path: &Path, spec: &ColumnSpec) -> Result<StationDataset> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let header: Vec<String> = reader.headers()?.iter().map(String::from).collect();
    let col = |name: &str| -> Result<usize> {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let id_col = col("station_id")?;
    let lat_col = col("lat")?;
    let lon_col = col("lon")?;
    let target_cols: Vec<usize> = spec.targets.iter().map(|t| col(t)).collect::<Result<_>>()?;
    let feature_names: Vec<String> = match &spec.features {
        Some(f) => f.clone(),
        None => header
            .iter()
            .enumerate()
            .filter(|(i, h)| ![id_col, lat_col, lon_col].contains(i) && !spec.targets.contains(h))
            .map(|(_, h)| h.clone())
            .collect(),
    };
    let feature_cols: Vec<usize> = feature_names.iter().map(|f| col(f)).collect::<Result<_>>()?;

    let mut ids = Vec::new();
    let mut points = Vec::new();
    let mut features = Vec::new();
    let mut targets = Vec::new();
    let mut seen = HashSet::new();
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        let line = r + 2;
        let get = |c: usize| record.get(c).unwrap_or("");
        let id = get(id_col).to_string();
        if id.is_empty() {
            return Err(Error::NonNumericCell {
                row: line,
                column: "station_id".into(),
                value: String::new(),
            });
        }
        if !seen.insert(id.clone()) {
            return Err(Error::DuplicateStationId(id));
        }
        let lat = parse_cell(get(lat_col), line, "lat")?;
        let lon = parse_cell(get(lon_col), line, "lon")?;
        if !(-90.0..=90.0).contains(&lat) {
            return Err(Error::OutOfRange {
                row: line,
                column: "lat".into(),
                value: lat,
            });
        }
        if !(-180.0..=180.0).contains(&lon) {
            return Err(Error::OutOfRange {
                row: line,
                column: "lon".into(),
                value: lon,
            });
        }
        points.push(GeoPoint::new(lat, lon)?);
        features.push(
            feature_cols
                .iter()
                .zip(&feature_names)
                .map(|(&c, name)| parse_cell(get(c), line, name))
                .collect::<Result<Vec<_>>>()?,
        );
        targets.push(
            target_cols
                .iter()
                .zip(&spec.targets)
                .map(|(&c, name)| parse_cell(get(c), line, name))
                .collect::<Result<Vec<_>>>()?,
        );
        ids.push(id);
    }
    StationDataset::new(ids, points, feature_names, features, spec.targets.clone(), targets)
}

/// Reads an edge CSV. With a dataset, endpoints must be known stations and
/// the graph's node order follows the dataset.
pub fn load_edges(path: &Path, dataset: Option<&StationDataset>) -> Result<TransitGraph> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let header: Vec<String> = reader.headers()?.iter().map(String::from).collect();
    let col = |name: &str| -> Result<usize> {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let (from_col, to_col, len_col) = (col("from")?, col("to")?, col("length_km")?);
    let mut edges: Vec<(String, String, f64)> = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        let line = r + 2;
        let from = record.get(from_col).unwrap_or("").to_string();
        let to = record.get(to_col).unwrap_or("").to_string();
        let raw = record.get(len_col).unwrap_or("");
        let length = raw.trim().parse::<f64>().map_err(|_| Error::NonNumericCell {
            row: line,
            column: "length_km".into(),
            value: raw.to_string(),
        })?;
        edges.push((from, to, length));
    }
    let nodes = match dataset {
        Some(ds) => ds.ids().to_vec(),
        None => {
            let mut ids: Vec<String> = edges.iter().flat_map(|(a, b, _)| [a.clone(), b.clone()]).collect();
            ids.sort();
            ids.dedup();
            ids
        }
    };
    TransitGraph::new(nodes, &edges)
}

pub fn write_edges_csv(graph: &TransitGraph, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["from", "to", "length_km"])?;
    for &(a, b, l) in graph.edges() {
        w.write_record([graph.nodes()[a].as_str(), graph.nodes()[b].as_str(), &format_f64(l)])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads `station_id,<feature...>` rows for prediction, columns matched by
/// name against `feature_names`.
pub fn load_feature_rows(path: &Path, feature_names: &[String]) -> Result<Vec<(String, Vec<f64>)>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let header: Vec<String> = reader.headers()?.iter().map(String::from).collect();
    let index: HashMap<&str, usize> = header.iter().enumerate().map(|(i, h)| (h.as_str(), i)).collect();
    let id_col = *index
        .get("station_id")
        .ok_or_else(|| Error::MissingColumn("station_id".into()))?;
    let cols: Vec<usize> = feature_names
        .iter()
        .map(|f| index.get(f.as_str()).copied().ok_or_else(|| Error::MissingColumn(f.clone())))
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        let line = r + 2;
        let id = record.get(id_col).unwrap_or("").to_string();
        let values = cols
            .iter()
            .zip(feature_names)
            .map(|(&c, name)| parse_cell(record.get(c).unwrap_or(""), line, name))
            .collect::<Result<Vec<_>>>()?;
        rows.push((id, values));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let path = dir.path().join(name);
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(body.as_bytes()).unwrap();
        path
    }

    fn spec() -> ColumnSpec {
        ColumnSpec {
            targets: vec!["weekly".into()],
            features: None,
        }
    }

    #[test]
    fn loads_well_formed_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "s.csv",
            "station_id,lat,lon,pop,shops,weekly\nb,22.5,114.0,1,2,10\na,22.6,114.1,3,4,20\nc,22.7,114.2,5,6,30\n",
        );
        let ds = load_stations(&p, &spec()).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.ids(), &["a", "b", "c"]);
        assert_eq!(ds.feature_names(), &["pop", "shops"]);
        assert_eq!(ds.target("weekly").unwrap().as_slice(), &[20.0, 10.0, 30.0]);
        assert_eq!(ds.feature_row(0), vec![3.0, 4.0]);
    }

    #[test]
    fn rejects_bad_rows() {
        let dir = tempfile::tempdir().unwrap();
        let dup = write(&dir, "d.csv", "station_id,lat,lon,f,weekly\na,1,1,1,1\na,2,2,2,2\n");
        assert!(matches!(load_stations(&dup, &spec()), Err(Error::DuplicateStationId(id)) if id == "a"));

        let lat = write(&dir, "l.csv", "station_id,lat,lon,f,weekly\na,1,1,1,1\nb,95,2,2,2\n");
        assert!(matches!(
            load_stations(&lat, &spec()),
            Err(Error::OutOfRange { row: 3, ref column, .. }) if column == "lat"
        ));

        let text = write(&dir, "t.csv", "station_id,lat,lon,f,weekly\na,1,1,x,1\n");
        assert!(matches!(
            load_stations(&text, &spec()),
            Err(Error::NonNumericCell { row: 2, ref column, .. }) if column == "f"
        ));

        let empty = write(&dir, "e.csv", "station_id,lat,lon,f,weekly\na,1,1,,1\n");
        assert!(matches!(load_stations(&empty, &spec()), Err(Error::NonNumericCell { .. })));

        let missing = write(&dir, "m.csv", "station_id,lat,lon,f\na,1,1,1\n");
        assert!(matches!(load_stations(&missing, &spec()), Err(Error::MissingColumn(c)) if c == "weekly"));
    }

    #[test]
    fn edges_load_and_validate() {
        let dir = tempfile::tempdir().unwrap();
        let st = write(
            &dir,
            "s.csv",
            "station_id,lat,lon,f,weekly\na,22.5,114.0,1,1\nb,22.5,114.01,2,2\nc,22.5,114.02,3,3\n",
        );
        let ds = load_stations(&st, &spec()).unwrap();
        let e = write(&dir, "e.csv", "from,to,length_km\na,b,1.0\nb,c,1.5\n");
        let g = load_edges(&e, Some(&ds)).unwrap();
        assert_eq!(g.len(), 3);
        assert_eq!(g.edges().len(), 2);

        let zero = write(&dir, "z.csv", "from,to,length_km\na,b,0\n");
        assert!(matches!(load_edges(&zero, Some(&ds)), Err(Error::NonPositiveLength { .. })));
        let unknown = write(&dir, "u.csv", "from,to,length_km\na,q,1\n");
        assert!(matches!(load_edges(&unknown, Some(&ds)), Err(Error::UnknownStation(s)) if s == "q"));
    }

    #[test]
    fn network_features() {
        let ids: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let pts = vec![
            GeoPoint::new(22.5, 114.0).unwrap(),
            GeoPoint::new(22.5, 114.01).unwrap(),
            GeoPoint::new(22.5, 114.02).unwrap(),
        ];
        let ds = StationDataset::new(
            ids.clone(),
            pts.clone(),
            vec!["f".into()],
            vec![vec![1.0], vec![2.0], vec![3.0]],
            vec!["y".into()],
            vec![vec![1.0], vec![2.0], vec![3.0]],
        )
        .unwrap();
        let g = TransitGraph::new(ids, &[("a", "b", 1.0), ("b", "c", 1.0)]).unwrap();
        let out = ds.derive_network_features(&g, pts[1], 6371.0).unwrap();
        assert_eq!(out.feature("Degree").unwrap(), vec![1.0, 2.0, 1.0]);
        assert_eq!(out.feature("Betweenness").unwrap(), vec![0.0, 1.0, 0.0]);
        assert_eq!(out.feature("Dis_to_center").unwrap()[1], 0.0);
        assert!(matches!(
            out.derive_network_features(&g, pts[1], 6371.0),
            Err(Error::ColumnCollision(_))
        ));
    }
}
