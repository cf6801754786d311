//! Run configuration.
//!
//! Values resolve in three layers: built-in defaults, then a `key = value`
//! config file, then command-line flags. Keys are the field names of
//! [`RunConfig`]; list values are comma separated; `#` starts a comment.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::KernelFamily;
use crate::network::{GeoPoint, Metric, DEFAULT_EARTH_RADIUS_KM};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MoranWeighting {
    /// Row-standardized inverse distance.
    Idw,
    /// Row-standardized binary k nearest neighbours.
    Knn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub metric: Metric,
    pub kernel: KernelFamily,
    pub earth_radius_km: f64,
    /// Overrides the OLS-derived bandwidth search width.
    pub eps: Option<f64>,
    pub seed: u64,
    /// Target columns present in the station file.
    pub targets: Vec<String>,
    /// The target a single-target command fits; defaults to the only
    /// declared target.
    pub target: Option<String>,
    /// Feature columns; every other numeric column when unset.
    pub features: Option<Vec<String>>,
    /// Append Degree, Betweenness and Dis_to_center computed from the edge
    /// list, measuring centre distance from this point.
    pub center: Option<(f64, f64)>,
    pub standardize: bool,
    /// Fixed cluster count; chosen by the elbow rule when unset.
    pub k: Option<usize>,
    pub k_min: usize,
    pub k_max: usize,
    pub cluster_intercept: bool,
    pub moran_weights: MoranWeighting,
    pub moran_k: usize,
    /// Random relabellings for Moran's I; 0 disables the test.
    pub permutations: usize,
    /// Kernel bandwidth for local condition numbers; cross-validated GWR
    /// bandwidth when unset.
    pub bandwidth: Option<f64>,
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            metric: Metric::Network,
            kernel: KernelFamily::Gaussian,
            earth_radius_km: DEFAULT_EARTH_RADIUS_KM,
            eps: None,
            seed: 0,
            targets: Vec::new(),
            target: None,
            features: None,
            center: None,
            standardize: true,
            k: None,
            k_min: 1,
            k_max: 8,
            cluster_intercept: false,
            moran_weights: MoranWeighting::Idw,
            moran_k: 4,
            permutations: 0,
            bandwidth: None,
            out: None,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value `{value}` for `{key}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("invalid value `{value}` for `{key}`"))),
    }
}

fn parse_list(value: &str) -> Vec<String> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(String::from)
        .collect()
}

/// `none`, `auto` and the empty string clear an optional value.
fn is_unset(value: &str) -> bool {
    matches!(value, "" | "none" | "auto")
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "metric" => self.metric = value.parse()?,
            "kernel" => self.kernel = value.parse()?,
            "earth_radius_km" => self.earth_radius_km = parse(key, value)?,
            "eps" => self.eps = if is_unset(value) { None } else { Some(parse(key, value)?) },
            "seed" => self.seed = parse(key, value)?,
            "targets" => self.targets = parse_list(value),
            "target" => self.target = (!is_unset(value)).then(|| value.to_string()),
            "features" => self.features = if is_unset(value) { None } else { Some(parse_list(value)) },
            "center" => {
                self.center = if is_unset(value) {
                    None
                } else {
                    let parts = parse_list(value);
                    if parts.len() != 2 {
                        return Err(Error::Config(format!("`center` needs `lat,lon`, got `{value}`")));
                    }
                    Some((parse(key, &parts[0])?, parse(key, &parts[1])?))
                }
            }
            "standardize" => self.standardize = parse_bool(key, value)?,
            "k" => self.k = if is_unset(value) { None } else { Some(parse(key, value)?) },
            "k_min" => self.k_min = parse(key, value)?,
            "k_max" => self.k_max = parse(key, value)?,
            "cluster_intercept" => self.cluster_intercept = parse_bool(key, value)?,
            "moran_weights" => {
                self.moran_weights = match value {
                    "idw" => MoranWeighting::Idw,
                    "knn" => MoranWeighting::Knn,
                    _ => return Err(Error::Config(format!("invalid value `{value}` for `{key}`"))),
                }
            }
            "moran_k" => self.moran_k = parse(key, value)?,
            "permutations" => self.permutations = parse(key, value)?,
            "bandwidth" => self.bandwidth = if is_unset(value) { None } else { Some(parse(key, value)?) },
            "out" => self.out = (!is_unset(value)).then(|| PathBuf::from(value)),
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Applies every `key = value` line of a config file.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
            self.set(key.trim(), value)
                .map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)?;
        self.apply_text(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.earth_radius_km > 0.0 && self.earth_radius_km.is_finite()) {
            return Err(Error::Config("earth_radius_km must be positive".into()));
        }
        if let Some(e) = self.eps {
            if !(e > 0.0 && e.is_finite()) {
                return Err(Error::Config("eps must be positive".into()));
            }
        }
        if let Some(b) = self.bandwidth {
            if !(b > 0.0 && b.is_finite()) {
                return Err(Error::Config("bandwidth must be positive".into()));
            }
        }
        if self.k_min == 0 || self.k_max < self.k_min + 2 {
            return Err(Error::Config(format!(
                "k range {}..={} must start at 1 or more and span at least 3 values",
                self.k_min, self.k_max
            )));
        }
        if self.k == Some(0) {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if self.moran_k == 0 {
            return Err(Error::Config("moran_k must be at least 1".into()));
        }
        if let Some((lat, lon)) = self.center {
            GeoPoint::new(lat, lon).map_err(|e| Error::Config(format!("center: {e}")))?;
        }
        if let Some(t) = &self.target {
            if !self.targets.is_empty() && !self.targets.contains(t) {
                return Err(Error::Config(format!("target `{t}` is not among the declared targets")));
            }
        }
        Ok(())
    }

    /// The target a single-target command should fit.
    pub fn resolved_target(&self) -> Result<String> {
        match (&self.target, self.targets.as_slice()) {
            (Some(t), _) => Ok(t.clone()),
            (None, [only]) => Ok(only.clone()),
            (None, []) => Err(Error::Config("no target declared".into())),
            (None, _) => Err(Error::Config("several targets declared; choose one with `target`".into())),
        }
    }

    /// Declared target columns, including `target` when it is not listed.
    pub fn target_columns(&self) -> Vec<String> {
        let mut cols = self.targets.clone();
        if let Some(t) = &self.target {
            if !cols.contains(t) {
                cols.push(t.clone());
            }
        }
        cols
    }

    pub fn center_point(&self) -> Result<Option<GeoPoint>> {
        self.center.map(|(lat, lon)| GeoPoint::new(lat, lon)).transpose()
    }
}
