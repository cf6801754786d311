//! Command-line front end: `fit`, `compare`, `diagnose`, `cluster` and
//! `predict`.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::ada_gwl::{fit_with_distances, AdaGwlModel, GwlSettings, SearchBounds};
use crate::clustering::{choose_k, kmeans, scale_profiles, write_labels_csv, write_wcss_csv};
use crate::config::{MoranWeighting, RunConfig};
use crate::dataset::{format_f64, load_edges, load_feature_rows, load_stations, ColumnSpec, StationDataset};
use crate::design::SpatialDesign;
use crate::diagnostics::{
    band, compare_models, local_condition_numbers, moran_scatter, moran_table, write_moran_csv, CompareSettings,
    PermutationTest, SpatialWeights,
};
use crate::error::{Error, Result};
use crate::gwr::{gwr_bandwidth_cv, ols_fit};
use crate::kernel::KernelSpec;
use crate::lars::LarsOptions;
use crate::network::TransitGraph;

pub const FORMAT_VERSION: u32 = 1;
pub const THREADS_ENV: &str = "GEOWL_THREADS";

#[derive(Debug, Parser)]
#[command(name = "geowl", version, about = "Geographically weighted lasso for station ridership")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a lasso model for one target and write it as JSON.
    Fit(DataArgs),
    /// Compare OLS, GWR, Ada-GWR, GWL and Ada-GWL on every target.
    Compare(DataArgs),
    /// Moran's I per variable and local condition numbers.
    Diagnose(DataArgs),
    /// Cluster stations by their coefficient profiles.
    Cluster(ClusterArgs),
    /// Predict from a saved model.
    Predict(PredictArgs),
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Station CSV.
    #[arg(long)]
    stations: PathBuf,
    /// Edge CSV (`from,to,length_km`).
    #[arg(long)]
    edges: Option<PathBuf>,
    #[command(flatten)]
    flags: ConfigFlags,
}

#[derive(Debug, Args)]
struct ClusterArgs {
    /// Fitted model JSON; when absent the model is fitted from `--stations`.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    stations: Option<PathBuf>,
    #[arg(long)]
    edges: Option<PathBuf>,
    #[command(flatten)]
    flags: ConfigFlags,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// CSV with `station_id` and the model's feature columns.
    #[arg(long)]
    features: PathBuf,
    #[command(flatten)]
    flags: ConfigFlags,
}

/// Flags mirroring the config file keys; set flags win over the file.
#[derive(Debug, Args, Default)]
struct ConfigFlags {
    /// `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    target: Option<String>,
    /// Comma-separated target columns of the station file.
    #[arg(long)]
    targets: Option<String>,
    /// Comma-separated feature columns.
    #[arg(long)]
    feature_columns: Option<String>,
    /// `euclidean` or `network`.
    #[arg(long)]
    metric: Option<String>,
    /// `gaussian` or `bisquare`.
    #[arg(long)]
    kernel: Option<String>,
    #[arg(long)]
    eps: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    earth_radius_km: Option<String>,
    /// `lat,lon` of the city centre; adds network features.
    #[arg(long)]
    center: Option<String>,
    #[arg(long)]
    standardize: Option<String>,
    /// Cluster count or `auto`.
    #[arg(long)]
    k: Option<String>,
    #[arg(long)]
    k_min: Option<String>,
    #[arg(long)]
    k_max: Option<String>,
    #[arg(long)]
    cluster_intercept: Option<String>,
    /// `idw` or `knn`.
    #[arg(long)]
    moran_weights: Option<String>,
    #[arg(long)]
    moran_k: Option<String>,
    #[arg(long)]
    permutations: Option<String>,
    #[arg(long)]
    bandwidth: Option<String>,
}

impl ConfigFlags {
    fn pairs(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        let mut push = |key: &'static str, v: &Option<String>| {
            if let Some(v) = v {
                out.push((key, v.clone()));
            }
        };
        push("target", &self.target);
        push("targets", &self.targets);
        push("features", &self.feature_columns);
        push("metric", &self.metric);
        push("kernel", &self.kernel);
        push("eps", &self.eps);
        push("seed", &self.seed);
        push("earth_radius_km", &self.earth_radius_km);
        push("center", &self.center);
        push("standardize", &self.standardize);
        push("k", &self.k);
        push("k_min", &self.k_min);
        push("k_max", &self.k_max);
        push("cluster_intercept", &self.cluster_intercept);
        push("moran_weights", &self.moran_weights);
        push("moran_k", &self.moran_k);
        push("permutations", &self.permutations);
        push("bandwidth", &self.bandwidth);
        if let Some(o) = &self.out {
            out.push(("out", o.display().to_string()));
        }
        out
    }

    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &self.config {
            cfg.apply_file(path)?;
        }
        for (k, v) in self.pairs() {
            cfg.set(k, &v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Saved model: the fit plus the configuration that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub format_version: u32,
    pub target: String,
    /// Output location is left out so reruns elsewhere stay identical.
    pub config: RunConfig,
    pub model: AdaGwlModel,
}

impl ModelDocument {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let doc: Self = serde_json::from_str(&text)?;
        if doc.format_version != FORMAT_VERSION {
            return Err(Error::Config(format!(
                "model format version {} is not supported (expected {FORMAT_VERSION})",
                doc.format_version
            )));
        }
        Ok(doc)
    }
}

/// Writes through a temporary sibling file and renames it into place.
pub fn write_atomic(path: &Path, write: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidInput(format!("`{}` is not a file path", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    match write(&tmp) {
        Ok(()) => {
            std::fs::rename(&tmp, path)?;
            Ok(())
        }
        Err(e) => {
            let _ = std::fs::remove_file(&tmp);
            Err(e)
        }
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    write_atomic(path, |tmp| Ok(std::fs::write(tmp, text)?))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

fn output_dir(cfg: &RunConfig) -> Result<PathBuf> {
    let dir = cfg
        .out
        .clone()
        .ok_or_else(|| Error::Config("no output directory; pass --out".into()))?;
    std::fs::create_dir_all(&dir)?;
    write_json(&dir.join("run_config.json"), cfg)?;
    Ok(dir)
}

struct Inputs {
    dataset: StationDataset,
    graph: Option<TransitGraph>,
}

fn load_inputs(stations: &Path, edges: Option<&Path>, cfg: &RunConfig) -> Result<Inputs> {
    let spec = ColumnSpec {
        targets: cfg.target_columns(),
        features: cfg.features.clone(),
    };
    let mut dataset = load_stations(stations, &spec)?;
    println!("loaded {} stations from {}", dataset.len(), stations.display());
    let graph = edges.map(|p| load_edges(p, Some(&dataset))).transpose()?;
    if let Some(center) = cfg.center_point()? {
        let g = graph
            .as_ref()
            .ok_or_else(|| Error::Config("`center` needs an edge list to derive network features".into()))?;
        dataset = dataset.derive_network_features(g, center, cfg.earth_radius_km)?;
    }
    Ok(Inputs { dataset, graph })
}

fn gwl_settings(cfg: &RunConfig) -> GwlSettings {
    GwlSettings {
        eps: cfg.eps,
        bounds: None,
        lars: LarsOptions {
            standardize: cfg.standardize,
        },
    }
}

fn fit_model(inputs: &Inputs, cfg: &RunConfig) -> Result<ModelDocument> {
    let target = cfg.resolved_target()?;
    let dm = inputs
        .dataset
        .distance_matrix(cfg.metric, inputs.graph.as_ref(), cfg.earth_radius_km)?;
    let model = fit_with_distances(&inputs.dataset, &target, &dm, cfg.kernel, &gwl_settings(cfg))?;
    let mut config = cfg.clone();
    config.out = None;
    Ok(ModelDocument {
        format_version: FORMAT_VERSION,
        target,
        config,
        model,
    })
}

fn write_coefficients(model: &AdaGwlModel, path: &Path) -> Result<()> {
    write_atomic(path, |tmp| {
        let mut w = csv::Writer::from_path(tmp)?;
        let mut header = vec!["station_id".to_string(), "fitted".into(), "s_frac".into(), "fallback".into(), "intercept".into()];
        header.extend(model.feature_names.iter().cloned());
        w.write_record(&header)?;
        for (id, s) in model.station_ids.iter().zip(&model.stations) {
            let mut rec = vec![
                id.clone(),
                format_f64(s.fitted),
                format_f64(s.s_frac.value()),
                s.fallback.to_string(),
            ];
            rec.extend(s.coefficients.iter().map(|c| format_f64(*c)));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    })
}

fn cmd_fit(args: &DataArgs) -> Result<()> {
    let cfg = args.flags.resolve()?;
    let out = output_dir(&cfg)?;
    let inputs = load_inputs(&args.stations, args.edges.as_deref(), &cfg)?;
    let doc = fit_model(&inputs, &cfg)?;
    write_json(&out.join("model.json"), &doc)?;
    write_coefficients(&doc.model, &out.join("coefficients.csv"))?;
    let m = &doc.model;
    let fallbacks = m.stations.iter().filter(|s| s.fallback).count();
    println!(
        "{} {}: bandwidth {:.4} km, rmse {:.4}, r2 {:.4}, loo rmse {:.4}, {} intercept-only stations",
        m.metric.as_str(),
        doc.target,
        m.bandwidth,
        m.metrics.rmse,
        m.metrics.r_squared,
        m.loo_metrics.rmse,
        fallbacks
    );
    Ok(())
}

fn cmd_compare(args: &DataArgs) -> Result<()> {
    let cfg = args.flags.resolve()?;
    let out = output_dir(&cfg)?;
    let inputs = load_inputs(&args.stations, args.edges.as_deref(), &cfg)?;
    let graph = inputs
        .graph
        .as_ref()
        .ok_or_else(|| Error::Config("compare needs an edge list for the network models".into()))?;
    let targets = match &cfg.target {
        Some(t) => vec![t.clone()],
        None => inputs.dataset.target_names().to_vec(),
    };
    let settings = CompareSettings {
        kernel: cfg.kernel,
        gwl: gwl_settings(&cfg),
        radius_km: cfg.earth_radius_km,
    };
    let table = compare_models(&inputs.dataset, graph, &targets, &settings)?;
    write_atomic(&out.join("comparison.csv"), |tmp| table.write_csv(tmp))?;
    let text = table.render_text();
    write_text(&out.join("comparison.txt"), &text)?;
    print!("{text}");
    Ok(())
}

#[derive(Serialize)]
struct ConditionSummary {
    bandwidth: f64,
    global: f64,
    global_band: &'static str,
    exceedances: Vec<Exceedance>,
}

#[derive(Serialize)]
struct Exceedance {
    threshold: f64,
    stations: usize,
}

fn cmd_diagnose(args: &DataArgs) -> Result<()> {
    let cfg = args.flags.resolve()?;
    let out = output_dir(&cfg)?;
    let inputs = load_inputs(&args.stations, args.edges.as_deref(), &cfg)?;
    let ds = &inputs.dataset;
    let dm = ds.distance_matrix(cfg.metric, inputs.graph.as_ref(), cfg.earth_radius_km)?;

    let weights = match cfg.moran_weights {
        MoranWeighting::Idw => SpatialWeights::inverse_distance(&dm)?,
        MoranWeighting::Knn => SpatialWeights::k_nearest(&dm, cfg.moran_k)?,
    };
    let permutation = (cfg.permutations > 0).then_some(PermutationTest {
        permutations: cfg.permutations,
        seed: cfg.seed,
    });
    let rows = moran_table(ds, &weights, permutation)?;
    write_atomic(&out.join("moran.csv"), |tmp| write_moran_csv(&rows, tmp))?;
    println!("{:<24} {:>10} {:>12} {:>10}", "variable", "moran_i", "expected_i", "p_value");
    for r in &rows {
        println!(
            "{:<24} {:>10.4} {:>12.8} {:>10.4}",
            r.variable, r.result.observed, r.result.expected, r.result.p_value
        );
    }

    if let Ok(target) = cfg.resolved_target() {
        let values: Vec<f64> = ds.target(&target)?.iter().copied().collect();
        let pairs = moran_scatter(&values, &weights);
        write_atomic(&out.join("moran_scatter.csv"), |tmp| {
            let mut w = csv::Writer::from_path(tmp)?;
            w.write_record(["station_id", "value", "spatial_lag"])?;
            for (id, (v, lag)) in ds.ids().iter().zip(&pairs) {
                w.write_record([id.as_str(), &format_f64(*v), &format_f64(*lag)])?;
            }
            w.flush()?;
            Ok(())
        })?;
    }

    let x = ds.feature_matrix();
    let bandwidth = match cfg.bandwidth {
        Some(b) => b,
        None => {
            let target = cfg.resolved_target()?;
            let y = ds.target(&target)?;
            let design = SpatialDesign::new(&x, &y, &dm)?.with_ids(ds.ids())?;
            let bounds = SearchBounds::from_distances(&dm, ols_fit(&x, &y)?.metrics.rmse, cfg.eps)?;
            gwr_bandwidth_cv(&design, cfg.kernel, &bounds)?.bandwidth
        }
    };
    let report = local_condition_numbers(&x, &dm, &KernelSpec::new(cfg.kernel, bandwidth)?)?;
    write_atomic(&out.join("condition.csv"), |tmp| {
        let mut w = csv::Writer::from_path(tmp)?;
        w.write_record(["station_id", "condition_number", "band"])?;
        for (id, k) in ds.ids().iter().zip(&report.local) {
            w.write_record([id.as_str(), &format_f64(*k), band(*k)])?;
        }
        w.flush()?;
        Ok(())
    })?;
    let summary = ConditionSummary {
        bandwidth,
        global: report.global,
        global_band: report.global_band(),
        exceedances: report
            .exceedances()
            .into_iter()
            .map(|(threshold, stations)| Exceedance { threshold, stations })
            .collect(),
    };
    write_json(&out.join("condition_summary.json"), &summary)?;
    println!("global condition number {:.4} ({})", report.global, report.global_band());
    for e in &summary.exceedances {
        println!("stations above {}: {}", e.threshold, e.stations);
    }
    Ok(())
}

#[derive(Serialize)]
struct ClusterSummary {
    k: usize,
    wcss: f64,
    weak_elbow: Option<bool>,
    zero_variance_stations: Vec<String>,
}

fn cmd_cluster(args: &ClusterArgs) -> Result<()> {
    let cfg = args.flags.resolve()?;
    let out = output_dir(&cfg)?;
    let model = match (&args.model, &args.stations) {
        (Some(path), _) => ModelDocument::load(path)?.model,
        (None, Some(stations)) => {
            let inputs = load_inputs(stations, args.edges.as_deref(), &cfg)?;
            fit_model(&inputs, &cfg)?.model
        }
        (None, None) => return Err(Error::Config("cluster needs --model or --stations".into())),
    };
    let profiles = scale_profiles(&model, cfg.cluster_intercept);
    let points: Vec<Vec<f64>> = profiles.iter().map(|p| p.values.clone()).collect();
    let (result, curve, weak) = match cfg.k {
        Some(k) => {
            let r = kmeans(&points, k, cfg.seed)?;
            let curve = vec![(k, r.wcss)];
            (r, curve, None)
        }
        None => {
            let hi = cfg.k_max.min(points.len());
            let (choice, results) = choose_k(&points, cfg.k_min..=hi, cfg.seed)?;
            let r = results
                .into_iter()
                .find(|r| r.k == choice.k)
                .expect("chosen k was evaluated");
            (r, choice.curve, Some(choice.weak_elbow))
        }
    };
    write_atomic(&out.join("labels.csv"), |tmp| write_labels_csv(&model.station_ids, &result.labels, tmp))?;
    write_atomic(&out.join("wcss.csv"), |tmp| write_wcss_csv(&curve, tmp))?;
    write_atomic(&out.join("profiles.csv"), |tmp| {
        let mut w = csv::Writer::from_path(tmp)?;
        let mut header = vec!["station_id".to_string(), "zero_variance".into()];
        if cfg.cluster_intercept {
            header.push("intercept".into());
        }
        header.extend(model.feature_names.iter().cloned());
        w.write_record(&header)?;
        for p in &profiles {
            let mut rec = vec![p.station_id.clone(), p.zero_variance.to_string()];
            rec.extend(p.values.iter().map(|v| format_f64(*v)));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    })?;
    let summary = ClusterSummary {
        k: result.k,
        wcss: result.wcss,
        weak_elbow: weak,
        zero_variance_stations: profiles
            .iter()
            .filter(|p| p.zero_variance)
            .map(|p| p.station_id.clone())
            .collect(),
    };
    write_json(&out.join("cluster.json"), &summary)?;
    println!("k = {}, wcss {:.4}", result.k, result.wcss);
    if weak == Some(true) {
        println!("warning: the WCSS curve has no clear elbow");
    }
    Ok(())
}

fn cmd_predict(args: &PredictArgs) -> Result<()> {
    let cfg = args.flags.resolve()?;
    let out = output_dir(&cfg)?;
    let doc = ModelDocument::load(&args.model)?;
    let rows = load_feature_rows(&args.features, &doc.model.feature_names)?;
    let predictions: Vec<(String, f64)> = rows
        .into_iter()
        .map(|(id, x)| {
            let i = doc
                .model
                .station_index(&id)
                .ok_or_else(|| Error::UnknownStation(id.clone()))?;
            Ok((id, doc.model.predict(i, &x)?))
        })
        .collect::<Result<_>>()?;
    write_atomic(&out.join("predictions.csv"), |tmp| {
        let mut w = csv::Writer::from_path(tmp)?;
        w.write_record(["station_id", "prediction"])?;
        for (id, p) in &predictions {
            w.write_record([id.as_str(), &format_f64(*p)])?;
        }
        w.flush()?;
        Ok(())
    })?;
    println!("wrote {} predictions", predictions.len());
    Ok(())
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Diagnose(a) => cmd_diagnose(a),
        Command::Cluster(a) => cmd_cluster(a),
        Command::Predict(a) => cmd_predict(a),
    }
}

fn error_json(kind: &str, message: &str) -> String {
    serde_json::json!({ "error": kind, "message": message }).to_string()
}

fn configure_threads() -> Result<()> {
    if let Ok(raw) = std::env::var(THREADS_ENV) {
        let n: usize = raw
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::Config(format!("{THREADS_ENV} must be a positive integer, got `{raw}`")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    Ok(())
}

/// Parses `args`, runs the command and returns the process exit code.
/// Failures print a JSON object on stderr.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            eprintln!("{}", error_json("Usage", e.to_string().trim()));
            return 2;
        }
    };
    match configure_threads().and_then(|_| run(&cli)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", error_json(e.kind(), &e.to_string()));
            1
        }
    }
}
