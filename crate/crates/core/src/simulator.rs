//! Synthetic shot charts drawn from the model.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::basis::{dot, Basis, BasisDocument, DomainMap, KernelParams, Truncation};
use crate::data::{encode_covariates, Dataset, Encoding, GameRecord, GridSpec, Outcome, ParamVector, ShotEvent};
use crate::error::{Error, Result};
use crate::geometry::{Point, Region};
use crate::sampler::chain_rng;

/// Multiplier applied to the grid maximum when forming the thinning envelope.
pub const ENVELOPE_SAFETY: f64 = 1.2;

/// Cells per side of the grid used to locate the envelope.
pub const ENVELOPE_GRID: usize = 64;

/// Samples an inhomogeneous Poisson process on `region` by thinning a
/// homogeneous process at `ENVELOPE_SAFETY · max_h λ(s_h)`.
///
/// Fails if a candidate location exceeds the envelope.
pub fn sample_ppp<R: Rng + ?Sized>(
    log_intensity: impl Fn(Point) -> f64,
    region: &Region,
    envelope_grid: &GridSpec,
    rng: &mut R,
) -> Result<Vec<Point>> {
    let peak = envelope_grid
        .centers()
        .into_iter()
        .map(|s| log_intensity(s).exp())
        .fold(0.0f64, f64::max);
    if !peak.is_finite() {
        return Err(Error::InvalidParameter("intensity is not finite on the envelope grid".into()));
    }
    let bound = peak * ENVELOPE_SAFETY;
    if bound == 0.0 {
        return Ok(Vec::new());
    }
    let n = Poisson::new(bound * region.area())
        .map_err(|e| Error::InvalidParameter(format!("poisson mean: {e}")))?
        .sample(rng) as usize;
    let mut points = Vec::new();
    for _ in 0..n {
        let s = Point::new(
            region.x_min + region.width() * rng.random::<f64>(),
            region.y_min + region.height() * rng.random::<f64>(),
        );
        let u: f64 = rng.random();
        let lambda = log_intensity(s).exp();
        if lambda > bound {
            return Err(Error::Envelope { value: lambda, bound, x: s.x, y: s.y });
        }
        if u * bound < lambda {
            points.push(s);
        }
    }
    Ok(points)
}

/// Ground truth of a simulated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub scenario: String,
    pub seed: u64,
    pub region: Region,
    pub encoding: Encoding,
    pub basis: BasisDocument,
    pub theta: ParamVector,
}

impl Truth {
    pub fn basis(&self) -> Result<Basis> {
        Basis::from_document(&self.basis)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let truth: Truth = serde_json::from_str(text)?;
        truth.theta.check_dims(truth.basis.l, truth.encoding.dim())?;
        Ok(truth)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Scenario {
    /// `a = b = 1`, `L = 3`, `θ` iid `U[-1, 1]` on `[-1, 1]²`.
    UniformTheta,
    /// Coefficients, basis and region taken from a previous fit.
    FittedTheta(Box<Truth>),
}

/// Game `i` gets covariate cell `i mod 4` of (home, strong).
pub fn balanced_cell(i: usize) -> (bool, bool) {
    [(true, true), (true, false), (false, true), (false, false)][i % 4]
}

pub fn uniform_theta_truth(seed: u64) -> Result<Truth> {
    let params = KernelParams::new(1.0, 1.0)?;
    let basis = Basis::build(params, Truncation::Fixed(3), DomainMap::identity())?;
    let encoding = Encoding::Interaction;
    let (l, p) = (basis.len(), encoding.dim());
    let mut rng = chain_rng(seed, u64::MAX);
    let coef: Vec<f64> = (0..(1 + 2 * p) * l).map(|_| rng.random_range(-1.0..=1.0)).collect();
    Ok(Truth {
        scenario: "uniform-theta".into(),
        seed,
        region: Region::unit_square_centered(),
        encoding,
        basis: basis.to_document(),
        theta: ParamVector::from_coefficients(&coef, l, p)?,
    })
}

/// Draws `games` games from `truth`; game `i` uses RNG stream `i`.
pub fn simulate_dataset(truth: &Truth, games: usize, seed: u64) -> Result<Dataset> {
    let basis = truth.basis()?;
    let grid = GridSpec::new(truth.region, ENVELOPE_GRID, ENVELOPE_GRID)?;
    let mut records = Vec::with_capacity(games);
    for i in 0..games {
        let (home, strong) = balanced_cell(i);
        let z = encode_covariates(home, strong, truth.encoding);
        let mut rng = chain_rng(seed, i as u64);
        let mut shots = Vec::new();
        for j in Outcome::BOTH {
            let coef = truth.theta.surface_coefficients(&z, j);
            let pts = sample_ppp(|s| dot(&basis.eval_point(s), &coef), &truth.region, &grid, &mut rng)?;
            shots.extend(pts.into_iter().map(|location| ShotEvent { location, outcome: j }));
        }
        records.push(GameRecord { game_id: format!("g{i:04}"), home, strong, z, shots });
    }
    Dataset::new(records, truth.region, truth.encoding, None)
}

/// Builds a scenario's truth and simulates `games` games from it.
pub fn synthetic_scenario(kind: &Scenario, games: usize, seed: u64) -> Result<(Dataset, Truth)> {
    if games == 0 || !games.is_multiple_of(4) {
        return Err(Error::Config(format!("balanced design needs a positive multiple of 4 games, got {games}")));
    }
    let truth = match kind {
        Scenario::UniformTheta => uniform_theta_truth(seed)?,
        Scenario::FittedTheta(t) => Truth { seed, ..(**t).clone() },
    };
    let dataset = simulate_dataset(&truth, games, seed)?;
    Ok((dataset, truth))
}
