use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use lgcp_core::basis::{Basis, BasisDocument};
use lgcp_core::data::{Dataset, GridSpec, Outcome, ParamVector};
use lgcp_core::evaluation::{
    npll, p_thin_split, rmse, ConstantIntensity, GridIntensity, IntensityModel, PlugInIntensity,
    PosteriorMeanIntensity, ScaledIntensity,
};
use lgcp_core::io::{
    read_grid_exchange, read_samples, read_shots, write_samples, write_scores, write_shots, write_surface_csv,
    ChainSummary, ContourDocument, DatasetSidecar, Provenance, RowRejection, SamplesMetadata, ScoreRow,
};
use lgcp_core::sampler::{chain_rng, run_chain_stream, PosteriorSamples, SamplerConfig};
use lgcp_core::simulator::{synthetic_scenario, Scenario, Truth};
use lgcp_core::summaries::{intensity_map, probability_density_map, relative_risk_map, MapKind, SurfaceMap};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::CliError;

pub const TOOL_VERSION: &str = concat!("lgcp ", env!("CARGO_PKG_VERSION"));

fn provenance(config: &Config, seed: u64) -> Provenance {
    Provenance { tool_version: TOOL_VERSION.into(), config_hash: config.hash(), seed }
}

/// Relative paths in a config file are taken from the file's directory.
fn resolve(config_path: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        config_path.parent().unwrap_or(Path::new(".")).join(p)
    }
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::data(e.to_string()))?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    serde_json::from_str(&read_text(path)?).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| CliError::usage(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Sidecar written next to a shot CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetDocument {
    pub provenance: Provenance,
    #[serde(flatten)]
    pub dataset: DatasetSidecar,
}

pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

#[derive(Debug, Clone)]
pub struct SimulateReport {
    pub games: usize,
    pub shots: [usize; 2],
    pub data_path: PathBuf,
    pub truth_path: PathBuf,
}

/// Simulates the scenario named in the config and writes the shot CSV, its
/// sidecar and the truth JSON.
pub fn cmd_simulate(config_path: &Path) -> Result<SimulateReport, CliError> {
    let cfg = Config::load(config_path)?;
    let sim = &cfg.simulate;
    let scenario = match sim.scenario.as_str() {
        "uniform-theta" => Scenario::UniformTheta,
        "fitted-theta" => {
            let path = sim
                .truth_input
                .as_ref()
                .ok_or_else(|| CliError::usage("scenario fitted-theta needs simulate.truth_input"))?;
            Scenario::FittedTheta(Box::new(Truth::from_json(&read_text(&resolve(config_path, path))?)?))
        }
        other => return Err(CliError::usage(format!("unknown scenario '{other}'"))),
    };
    let (ds, truth) = synthetic_scenario(&scenario, sim.games, sim.seed)?;

    let data_path = resolve(config_path, &sim.data_output);
    let truth_path = resolve(config_path, &sim.truth_output);
    let mut csv = Vec::new();
    write_shots(&ds, &mut csv)?;
    write_bytes(&data_path, &csv)?;
    write_json(&sidecar_path(&data_path), &DatasetDocument { provenance: provenance(&cfg, sim.seed), dataset: DatasetSidecar::of(&ds) })?;
    let mut truth_text = truth.to_json()?;
    truth_text.push('\n');
    write_bytes(&truth_path, truth_text.as_bytes())?;
    Ok(SimulateReport {
        games: ds.num_games(),
        shots: [ds.count(Outcome::Missed), ds.count(Outcome::Made)],
        data_path,
        truth_path,
    })
}

/// Reads a shot CSV under the config's region, encoding and row policy.
/// A sidecar that disagrees with the config is a configuration error.
pub fn load_dataset(data: &Path, cfg: &Config) -> Result<(Dataset, Vec<RowRejection>), CliError> {
    let region = cfg.region()?;
    let encoding = cfg.encoding()?;
    let sidecar = sidecar_path(data);
    if sidecar.exists() {
        let doc: DatasetDocument = read_json(&sidecar)?;
        if doc.dataset.encoding != encoding {
            return Err(CliError::usage(format!(
                "data was written with encoding '{}' but the config asks for '{}'",
                doc.dataset.encoding.name(),
                encoding.name()
            )));
        }
        if doc.dataset.region != region {
            return Err(CliError::usage("data region differs from the config region"));
        }
    }
    let file = fs::File::open(data).map_err(|e| CliError::data(format!("cannot read {}: {e}", data.display())))?;
    let table = read_shots(file, cfg.data.policy)?;
    let ds = table.to_dataset(region, encoding, cfg.data.filter)?;
    if ds.num_games() == 0 {
        return Err(CliError::data(format!("{} contains no games", data.display())));
    }
    Ok((ds, table.rejected))
}

fn fit_chains(ds: &Dataset, basis: &Basis, grid: &GridSpec, sampler: &SamplerConfig, chains: usize) -> Result<Vec<PosteriorSamples>, CliError> {
    let runs: Vec<_> = (0..chains)
        .into_par_iter()
        .map(|c| run_chain_stream(ds, basis, grid, sampler, c as u64))
        .collect();
    runs.into_iter().map(|r| r.map_err(CliError::from)).collect()
}

#[derive(Debug, Clone)]
pub struct FitReport {
    pub samples_path: PathBuf,
    pub metadata_path: PathBuf,
    pub chains: Vec<ChainSummary>,
    pub rejected: Vec<RowRejection>,
    pub games: usize,
    pub shots: usize,
}

/// Fits the model to a shot CSV; writes the samples CSV and its metadata
/// sidecar (same stem, `.json`).
pub fn cmd_fit(data: &Path, config_path: &Path, out: &Path, threads: usize) -> Result<FitReport, CliError> {
    let cfg = Config::load(config_path)?;
    let sampler = cfg.sampler()?;
    let basis = cfg.basis()?;
    let grid = cfg.grid()?;
    let (ds, rejected) = load_dataset(data, &cfg)?;

    let start = Instant::now();
    let chains = with_threads(threads, || fit_chains(&ds, &basis, &grid, &sampler, cfg.sampler.chains))??;
    let runtime = start.elapsed().as_secs_f64();

    let mut csv = Vec::new();
    write_samples(&chains, &mut csv)?;
    write_bytes(out, &csv)?;
    let summaries: Vec<ChainSummary> = chains.iter().enumerate().map(|(c, s)| ChainSummary::of(c, s)).collect();
    let meta = SamplesMetadata {
        provenance: provenance(&cfg, sampler.seed),
        config: sampler,
        basis: basis.to_document(),
        region: ds.region,
        grid,
        encoding: ds.encoding,
        chains: summaries.clone(),
        runtime_seconds: runtime,
    };
    let metadata_path = sidecar_path(out);
    write_json(&metadata_path, &meta)?;
    Ok(FitReport {
        samples_path: out.to_path_buf(),
        metadata_path,
        chains: summaries,
        rejected,
        games: ds.num_games(),
        shots: ds.num_shots(),
    })
}

/// A fit read back from disk.
pub struct LoadedFit {
    pub metadata: SamplesMetadata,
    pub basis: Basis,
    pub draws: Vec<ParamVector>,
}

pub fn load_fit(samples: &Path, basis_override: Option<&Path>) -> Result<LoadedFit, CliError> {
    let metadata: SamplesMetadata = read_json(&sidecar_path(samples))?;
    let basis = match basis_override {
        Some(p) => {
            let doc: BasisDocument = read_json(p)?;
            Basis::from_document(&doc)?
        }
        None => Basis::from_document(&metadata.basis)?,
    };
    let p = metadata.encoding.dim();
    let file = fs::File::open(samples).map_err(|e| CliError::data(format!("cannot read {}: {e}", samples.display())))?;
    let draws: Vec<ParamVector> = read_samples(file, basis.len(), p)?.into_iter().map(|r| r.theta).collect();
    if draws.is_empty() {
        return Err(CliError::data(format!("{} holds no draws", samples.display())));
    }
    Ok(LoadedFit { metadata, basis, draws })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRequest {
    pub kind: MapKind,
    pub z: Vec<f64>,
    /// Reference covariates of a relative-risk map.
    pub z_b: Option<Vec<f64>>,
    pub outcome: Outcome,
    pub level: f64,
    /// Overrides the fit's grid resolution.
    pub resolution: Option<(usize, usize)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SurfaceDocument {
    pub provenance: Provenance,
    #[serde(flatten)]
    pub map: SurfaceMap,
}

#[derive(Debug, Clone)]
pub struct SummaryReport {
    pub csv_path: PathBuf,
    pub json_path: PathBuf,
    pub contour_path: Option<PathBuf>,
    pub map: SurfaceMap,
}

/// Writes `<prefix>.csv` and `<prefix>.json`, plus `<prefix>.contour.json`
/// for relative-risk maps.
pub fn cmd_summarize(samples: &Path, basis: Option<&Path>, request: &SummaryRequest, out_prefix: &Path) -> Result<SummaryReport, CliError> {
    let fit = load_fit(samples, basis)?;
    let p = fit.metadata.encoding.dim();
    if request.z.len() != p || request.z_b.as_ref().is_some_and(|z| z.len() != p) {
        return Err(CliError::usage(format!("covariate vectors must have {p} entries for this fit")));
    }
    let grid = match request.resolution {
        Some((nx, ny)) => GridSpec::new(fit.metadata.grid.region, nx, ny)?,
        None => fit.metadata.grid,
    };
    let (b, d, z) = (&fit.basis, &fit.draws, &request.z);
    let map = match request.kind {
        MapKind::Intensity => intensity_map(d, b, z, request.outcome, &grid, false)?,
        MapKind::SqrtIntensity => intensity_map(d, b, z, request.outcome, &grid, true)?,
        MapKind::Density => probability_density_map(d, b, z, &grid)?,
        MapKind::RelativeRisk => {
            let z_b = request.z_b.as_ref().ok_or_else(|| CliError::usage("relative risk needs a reference covariate vector"))?;
            relative_risk_map(d, b, z, z_b, &grid, request.level)?
        }
    };

    let with_ext = |ext: &str| {
        let mut s = out_prefix.as_os_str().to_owned();
        s.push(ext);
        PathBuf::from(s)
    };
    let csv_path = with_ext(".csv");
    let json_path = with_ext(".json");
    let mut csv = Vec::new();
    write_surface_csv(&map, &mut csv)?;
    write_bytes(&csv_path, &csv)?;
    write_json(&json_path, &SurfaceDocument { provenance: fit.metadata.provenance.clone(), map: map.clone() })?;
    let contour_path = if request.kind == MapKind::RelativeRisk {
        let path = with_ext(".contour.json");
        write_json(&path, &ContourDocument::new(1.0, &map.contour(1.0)))?;
        Some(path)
    } else {
        None
    };
    Ok(SummaryReport { csv_path, json_path, contour_path, map })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Protocol {
    Rmse,
    Npll,
}

impl Protocol {
    pub fn parse(name: &str) -> Result<Self, CliError> {
        match name {
            "rmse" => Ok(Protocol::Rmse),
            "npll" => Ok(Protocol::Npll),
            other => Err(CliError::usage(format!("unknown protocol '{other}'"))),
        }
    }
}

/// Where the scored intensity comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum Estimator {
    /// A samples CSV written by `fit`.
    Samples(PathBuf),
    /// A grid-exchange CSV from an external method.
    Grid(PathBuf),
    /// The θ of a truth JSON, used as a plug-in.
    Truth(PathBuf),
}

#[derive(Debug, Clone)]
pub struct EvaluateRequest {
    pub protocol: Protocol,
    pub config: PathBuf,
    pub data: PathBuf,
    pub truth: Option<PathBuf>,
    /// `None` under NPLL refits the model on every training split.
    pub estimator: Option<Estimator>,
    /// Also score the constant empirical-rate intensity.
    pub baseline: bool,
    pub out: PathBuf,
    pub threads: usize,
    pub repetitions: Option<usize>,
    pub p: Option<f64>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct EvaluateReport {
    pub rows: Vec<ScoreRow>,
    /// `(method, mean, sd)` of the reported score per method.
    pub aggregates: Vec<(String, f64, f64)>,
}

fn load_truth_model(path: &Path) -> Result<PlugInIntensity, CliError> {
    let truth = Truth::from_json(&read_text(path)?)?;
    Ok(PlugInIntensity { basis: truth.basis()?, theta: truth.theta })
}

fn fixed_model(est: &Estimator, p: usize) -> Result<(String, Box<dyn IntensityModel + Send + Sync>), CliError> {
    Ok(match est {
        Estimator::Samples(path) => {
            let fit = load_fit(path, None)?;
            if fit.metadata.encoding.dim() != p {
                return Err(CliError::usage("fit and data use different covariate encodings"));
            }
            ("lgcp".into(), Box::new(PosteriorMeanIntensity { basis: fit.basis, draws: fit.draws }))
        }
        Estimator::Grid(path) => {
            let file = fs::File::open(path).map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))?;
            ("external".into(), Box::new(GridIntensity::from_rows(&read_grid_exchange(file)?)?))
        }
        Estimator::Truth(path) => {
            let m = load_truth_model(path)?;
            if m.theta.p() != p {
                return Err(CliError::usage("truth and data use different covariate encodings"));
            }
            ("plug-in".into(), Box::new(m))
        }
    })
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, sd)
}

/// Scores an estimator and writes one CSV row per method and repetition.
///
/// Under NPLL, fixed estimators (a reused fit, an external grid or a truth)
/// are full-data intensities and are multiplied by `p` to stand in for the
/// training-side intensity.
pub fn cmd_evaluate(req: &EvaluateRequest) -> Result<EvaluateReport, CliError> {
    let cfg = Config::load(&req.config)?;
    let (ds, _) = load_dataset(&req.data, &cfg)?;
    let p_dim = ds.p();
    let eval = &cfg.evaluate;
    let seed = req.seed.unwrap_or(eval.seed);

    let rows = match req.protocol {
        Protocol::Rmse => {
            let truth_path = req.truth.as_ref().ok_or_else(|| CliError::usage("rmse needs a truth JSON"))?;
            let truth = load_truth_model(truth_path)?;
            let est = req.estimator.as_ref().ok_or_else(|| CliError::usage("rmse needs an estimator to score"))?;
            let (method, model) = fixed_model(est, p_dim)?;
            let mut rows = vec![ScoreRow { method, seed, rmse: Some(rmse(model.as_ref(), &truth, &ds)?), npll: None }];
            if req.baseline {
                let base = ConstantIntensity::empirical(&ds);
                rows.push(ScoreRow { method: "constant".into(), seed, rmse: Some(rmse(&base, &truth, &ds)?), npll: None });
            }
            rows
        }
        Protocol::Npll => {
            let p = req.p.unwrap_or(eval.p);
            let reps = req.repetitions.unwrap_or(eval.repetitions);
            if reps == 0 {
                return Err(CliError::usage("repetitions must be at least 1"));
            }
            if eval.partition == 0 {
                return Err(CliError::usage("evaluate.partition must be at least 1"));
            }
            let partition = GridSpec::new(ds.region, eval.partition, eval.partition)?;
            let integration = cfg.grid()?;
            let fixed = match &req.estimator {
                Some(est) => Some(fixed_model(est, p_dim)?),
                None if eval.refit => None,
                None => return Err(CliError::usage("evaluate.refit = false needs an estimator to reuse")),
            };
            let (sampler, basis) = (cfg.sampler()?, cfg.basis()?);
            let chains = cfg.sampler.chains;
            let score_rep = |r: usize| -> Result<Vec<ScoreRow>, CliError> {
                let rep_seed = seed.wrapping_add(r as u64);
                let (train, test) = p_thin_split(&ds, p, &mut chain_rng(rep_seed, 0))?;
                let mut rows = Vec::new();
                let score = match &fixed {
                    Some((method, model)) => {
                        let scaled = ScaledIntensity { inner: model.as_ref(), factor: p };
                        (method.clone(), npll(&scaled, &test, p, &partition, &integration)?)
                    }
                    None => {
                        let cfg_r = SamplerConfig { seed: sampler.seed.wrapping_add(r as u64), ..sampler.clone() };
                        let fits = fit_chains(&train, &basis, &integration, &cfg_r, chains)?;
                        let draws = fits.into_iter().flat_map(|f| f.draws).collect();
                        let model = PosteriorMeanIntensity { basis: basis.clone(), draws };
                        ("lgcp".to_string(), npll(&model, &test, p, &partition, &integration)?)
                    }
                };
                rows.push(ScoreRow { method: score.0, seed: rep_seed, rmse: None, npll: Some(score.1) });
                if req.baseline {
                    let base = ConstantIntensity::empirical(&train);
                    let value = npll(&base, &test, p, &partition, &integration)?;
                    rows.push(ScoreRow { method: "constant".into(), seed: rep_seed, rmse: None, npll: Some(value) });
                }
                Ok(rows)
            };
            let per_rep = with_threads(req.threads, || (0..reps).into_par_iter().map(score_rep).collect::<Vec<_>>())?;
            let mut rows = Vec::new();
            for r in per_rep {
                rows.extend(r?);
            }
            rows
        }
    };

    let mut buf = Vec::new();
    write_scores(&rows, &mut buf)?;
    write_bytes(&req.out, &buf)?;

    let mut methods: Vec<String> = Vec::new();
    for r in &rows {
        if !methods.contains(&r.method) {
            methods.push(r.method.clone());
        }
    }
    let aggregates = methods
        .into_iter()
        .map(|m| {
            let values: Vec<f64> = rows.iter().filter(|r| r.method == m).filter_map(|r| r.npll.or(r.rmse)).collect();
            let (mean, sd) = mean_sd(&values);
            (m, mean, sd)
        })
        .collect();
    Ok(EvaluateReport { rows, aggregates })
}

/// Basis implied by the config's kernel and region.
pub fn cmd_basis(config_path: &Path) -> Result<BasisDocument, CliError> {
    Ok(Config::load(config_path)?.basis()?.to_document())
}
