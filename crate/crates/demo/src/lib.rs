//! Browser bindings for the shot-chart model. Every export returns a JSON
//! string; `www/index.html` draws the results on canvases.

use lgcp_core::basis::{Basis, DomainMap, KernelParams, Truncation};
use lgcp_core::data::{encode_covariates, GridSpec, Outcome};
use lgcp_core::sampler::{run_chain, SamplerConfig};
use lgcp_core::simulator::{synthetic_scenario, Scenario};
use lgcp_core::summaries::{intensity_map, relative_risk_map, Flag, SurfaceEvaluator};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Values on an `nx × ny` lattice, row-major from the bottom-left cell.
#[derive(Debug, Clone, Serialize)]
pub struct Raster {
    pub nx: usize,
    pub ny: usize,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BasisView {
    pub l: usize,
    pub recovery: f64,
    pub eigenvalues: Vec<f64>,
    /// Cumulative captured variance fraction after each term.
    pub cumulative: Vec<f64>,
    pub degrees: Vec<[usize; 2]>,
    pub function: Raster,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulationView {
    pub games: usize,
    pub region: [f64; 4],
    /// `[x, y, made]` per shot of the shown covariate cell.
    pub shots: Vec<[f64; 3]>,
    pub made: usize,
    pub missed: usize,
    pub true_intensity: Raster,
}

#[derive(Debug, Clone, Serialize)]
pub struct FitView {
    pub true_intensity: Raster,
    pub fitted_intensity: Raster,
    pub relative_risk: Raster,
    /// 1 above, -1 below, 0 for cells whose interval covers 1.
    pub flags: Vec<i8>,
    pub acceptance: [f64; 3],
}

fn to_json<T: Serialize>(value: &T) -> Result<String, String> {
    serde_json::to_string(value).map_err(|e| e.to_string())
}

fn err(e: impl ToString) -> String {
    e.to_string()
}

/// Spectrum of the Gaussian kernel `(a, b)` truncated at variance fraction
/// `alpha`, and eigenfunction `index` on `[-1, 1]²`.
pub fn basis_view(a: f64, b: f64, alpha: f64, index: usize, n: usize) -> Result<BasisView, String> {
    let params = KernelParams::new(a, b).map_err(err)?;
    let basis = Basis::build(params, Truncation::Threshold(alpha), DomainMap::identity()).map_err(err)?;
    let grid = GridSpec::new(lgcp_core::Region::unit_square_centered(), n, n).map_err(err)?;
    let index = index.min(basis.len() - 1);
    let phi = basis.eval(&grid.centers()).map_err(err)?;
    let total = basis.total_variance();
    let mut acc = 0.0;
    let cumulative = basis
        .eigenvalues()
        .iter()
        .map(|v| {
            acc += v;
            acc / total
        })
        .collect();
    Ok(BasisView {
        l: basis.len(),
        recovery: basis.recovery(),
        eigenvalues: basis.eigenvalues().to_vec(),
        cumulative,
        degrees: basis.functions().iter().map(|f| [f.kx, f.ky]).collect(),
        function: Raster { nx: n, ny: n, values: (0..grid.len()).map(|h| phi.get(h, index)).collect() },
    })
}

/// Simulates the uniform-θ scenario and returns the shots of one covariate
/// cell with that cell's true made-shot intensity.
pub fn simulation_view(games: usize, seed: u64, home: bool, strong: bool, n: usize) -> Result<SimulationView, String> {
    let (ds, truth) = synthetic_scenario(&Scenario::UniformTheta, games, seed).map_err(err)?;
    let shots: Vec<[f64; 3]> = ds
        .games
        .iter()
        .filter(|g| g.home == home && g.strong == strong)
        .flat_map(|g| g.shots.iter())
        .map(|s| [s.location.x, s.location.y, if s.outcome == Outcome::Made { 1.0 } else { 0.0 }])
        .collect();
    let made = shots.iter().filter(|s| s[2] == 1.0).count();
    let basis = truth.basis().map_err(err)?;
    let grid = GridSpec::new(truth.region, n, n).map_err(err)?;
    let eval = SurfaceEvaluator::new(&basis, grid).map_err(err)?;
    let z = encode_covariates(home, strong, truth.encoding);
    let values = eval.log_intensity(&truth.theta, &z, Outcome::Made).into_iter().map(f64::exp).collect();
    let r = truth.region;
    Ok(SimulationView {
        games,
        region: [r.x_min, r.x_max, r.y_min, r.y_max],
        missed: shots.len() - made,
        made,
        shots,
        true_intensity: Raster { nx: n, ny: n, values },
    })
}

/// Fits the uniform-θ scenario with an adaptive short chain and maps the
/// made-shot intensity of cell `a` and the relative risk of `a` against `b`.
pub fn fit_view(games: usize, seed: u64, iterations: usize, a: [bool; 2], b: [bool; 2], n: usize) -> Result<FitView, String> {
    let (ds, truth) = synthetic_scenario(&Scenario::UniformTheta, games, seed).map_err(err)?;
    let basis = truth.basis().map_err(err)?;
    let grid = GridSpec::new(truth.region, n, n).map_err(err)?;
    let cfg = SamplerConfig { iterations, burn_in: iterations / 2, adapt: true, seed, ..SamplerConfig::default() };
    let fit = run_chain(&ds, &basis, &grid, &cfg).map_err(err)?;
    let z_a = encode_covariates(a[0], a[1], truth.encoding);
    let z_b = encode_covariates(b[0], b[1], truth.encoding);
    let eval = SurfaceEvaluator::new(&basis, grid).map_err(err)?;
    let truth_values = eval.log_intensity(&truth.theta, &z_a, Outcome::Made).into_iter().map(f64::exp).collect();
    let fitted = intensity_map(&fit.draws, &basis, &z_a, Outcome::Made, &grid, false).map_err(err)?;
    let rr = relative_risk_map(&fit.draws, &basis, &z_a, &z_b, &grid, 0.9).map_err(err)?;
    let flags = rr
        .flags
        .unwrap_or_default()
        .into_iter()
        .map(|f| match f {
            Flag::Above => 1,
            Flag::Below => -1,
            Flag::None => 0,
        })
        .collect();
    Ok(FitView {
        true_intensity: Raster { nx: n, ny: n, values: truth_values },
        fitted_intensity: Raster { nx: n, ny: n, values: fitted.values },
        relative_risk: Raster { nx: n, ny: n, values: rr.values },
        flags,
        acceptance: fit.acceptance,
    })
}

#[wasm_bindgen]
pub fn explore_basis(a: f64, b: f64, alpha: f64, index: usize, n: usize) -> Result<String, JsValue> {
    basis_view(a, b, alpha, index, n).and_then(|v| to_json(&v)).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn simulate(games: usize, seed: u32, home: bool, strong: bool, n: usize) -> Result<String, JsValue> {
    simulation_view(games, seed.into(), home, strong, n).and_then(|v| to_json(&v)).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn quick_fit(
    games: usize,
    seed: u32,
    iterations: usize,
    home_a: bool,
    strong_a: bool,
    home_b: bool,
    strong_b: bool,
    n: usize,
) -> Result<String, JsValue> {
    fit_view(games, seed.into(), iterations, [home_a, strong_a], [home_b, strong_b], n)
        .and_then(|v| to_json(&v))
        .map_err(|e| JsValue::from_str(&e))
}
