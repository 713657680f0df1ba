//! Scoring fitted intensities: RMSE against a known truth and the
//! p-thinning negative predictive log likelihood (NPLL).

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::basis::{dot, Basis};
use crate::data::{Dataset, GameRecord, GridSpec, Outcome, ParamVector};
use crate::error::{Error, Result};
use crate::geometry::{Point, Region};

/// Lower bound on regional expected counts in the NPLL.
pub const NPLL_INTENSITY_FLOOR: f64 = 1e-12;
/// Number of rectangles per side of the NPLL partition.
pub const NPLL_PARTITION: usize = 20;

/// Anything that can report `λ_j(s)` for a game.
pub trait IntensityModel {
    fn intensity(&self, game: &GameRecord, outcome: Outcome, s: Point) -> f64;

    fn intensities(&self, game: &GameRecord, outcome: Outcome, points: &[Point]) -> Vec<f64> {
        points.iter().map(|&s| self.intensity(game, outcome, s)).collect()
    }

    /// Whether two games with equal covariates can have different intensities.
    fn depends_on_game(&self) -> bool {
        false
    }
}

impl<M: IntensityModel + ?Sized> IntensityModel for &M {
    fn intensity(&self, game: &GameRecord, outcome: Outcome, s: Point) -> f64 {
        (**self).intensity(game, outcome, s)
    }

    fn intensities(&self, game: &GameRecord, outcome: Outcome, points: &[Point]) -> Vec<f64> {
        (**self).intensities(game, outcome, points)
    }

    fn depends_on_game(&self) -> bool {
        (**self).depends_on_game()
    }
}

/// Intensity of a fixed coefficient vector.
#[derive(Debug, Clone)]
pub struct PlugInIntensity {
    pub basis: Basis,
    pub theta: ParamVector,
}

impl IntensityModel for PlugInIntensity {
    fn intensity(&self, game: &GameRecord, outcome: Outcome, s: Point) -> f64 {
        let c = self.theta.surface_coefficients(&game.z, outcome);
        dot(&self.basis.eval_point(s), &c).exp()
    }

    fn intensities(&self, game: &GameRecord, outcome: Outcome, points: &[Point]) -> Vec<f64> {
        let c = self.theta.surface_coefficients(&game.z, outcome);
        let phi = self.basis.eval(points).expect("finite points");
        phi.mul_vec(&c).into_iter().map(f64::exp).collect()
    }
}

/// Posterior mean `E[λ_j(s; z) | S]` over retained draws.
#[derive(Debug, Clone)]
pub struct PosteriorMeanIntensity {
    pub basis: Basis,
    pub draws: Vec<ParamVector>,
}

impl IntensityModel for PosteriorMeanIntensity {
    fn intensity(&self, game: &GameRecord, outcome: Outcome, s: Point) -> f64 {
        self.intensities(game, outcome, &[s])[0]
    }

    fn intensities(&self, game: &GameRecord, outcome: Outcome, points: &[Point]) -> Vec<f64> {
        let phi = self.basis.eval(points).expect("finite points");
        let mut acc = vec![0.0; points.len()];
        for d in &self.draws {
            let c = d.surface_coefficients(&game.z, outcome);
            for (a, eta) in acc.iter_mut().zip(phi.mul_vec(&c)) {
                *a += eta.exp();
            }
        }
        let n = self.draws.len() as f64;
        acc.into_iter().map(|a| a / n).collect()
    }
}

/// Spatially flat intensity per outcome.
#[derive(Debug, Clone, Copy)]
pub struct ConstantIntensity(pub [f64; 2]);

impl ConstantIntensity {
    /// Empirical rate per game and unit area of each outcome.
    pub fn empirical(dataset: &Dataset) -> Self {
        let denom = dataset.num_games() as f64 * dataset.region.area();
        Self([dataset.count(Outcome::Missed) as f64 / denom, dataset.count(Outcome::Made) as f64 / denom])
    }
}

impl IntensityModel for ConstantIntensity {
    fn intensity(&self, _: &GameRecord, outcome: Outcome, _: Point) -> f64 {
        self.0[outcome.index()]
    }
}

/// Another model multiplied by a constant.
#[derive(Debug, Clone)]
pub struct ScaledIntensity<M> {
    pub inner: M,
    pub factor: f64,
}

impl<M: IntensityModel> IntensityModel for ScaledIntensity<M> {
    fn intensity(&self, game: &GameRecord, outcome: Outcome, s: Point) -> f64 {
        self.factor * self.inner.intensity(game, outcome, s)
    }

    fn intensities(&self, game: &GameRecord, outcome: Outcome, points: &[Point]) -> Vec<f64> {
        self.inner.intensities(game, outcome, points).into_iter().map(|v| v * self.factor).collect()
    }

    fn depends_on_game(&self) -> bool {
        self.inner.depends_on_game()
    }
}

/// One row of the grid-exchange format used to import external estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridExchangeRow {
    pub x: f64,
    pub y: f64,
    /// Empty applies the row to every game.
    pub game_id: Option<String>,
    pub outcome: Outcome,
    pub value: f64,
}

/// Piecewise-constant intensity on a regular grid of cell centers.
#[derive(Debug, Clone)]
pub struct GridIntensity {
    grid: GridSpec,
    surfaces: BTreeMap<(Option<String>, usize), Vec<f64>>,
}

impl GridIntensity {
    pub fn from_rows(rows: &[GridExchangeRow]) -> Result<Self> {
        let uniq = |f: fn(&GridExchangeRow) -> f64| {
            let mut v: Vec<f64> = rows.iter().map(f).collect();
            v.sort_by(f64::total_cmp);
            v.dedup();
            v
        };
        let (xs, ys) = (uniq(|r| r.x), uniq(|r| r.y));
        if xs.len() < 2 || ys.len() < 2 {
            return Err(Error::Input("grid exchange needs at least 2x2 cells".into()));
        }
        let (dx, dy) = (xs[1] - xs[0], ys[1] - ys[0]);
        let region = Region::new(
            xs[0] - dx / 2.0,
            xs[xs.len() - 1] + dx / 2.0,
            ys[0] - dy / 2.0,
            ys[ys.len() - 1] + dy / 2.0,
        )?;
        let grid = GridSpec::new(region, xs.len(), ys.len())?;
        let mut surfaces: BTreeMap<(Option<String>, usize), Vec<f64>> = BTreeMap::new();
        for r in rows {
            let h = grid
                .locate(Point::new(r.x, r.y))
                .ok_or_else(|| Error::Input(format!("cell ({}, {}) off the grid", r.x, r.y)))?;
            let surface = surfaces
                .entry((r.game_id.clone(), r.outcome.index()))
                .or_insert_with(|| vec![f64::NAN; grid.len()]);
            surface[h] = r.value;
        }
        Ok(Self { grid, surfaces })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }
}

impl IntensityModel for GridIntensity {
    fn intensity(&self, game: &GameRecord, outcome: Outcome, s: Point) -> f64 {
        let surface = self
            .surfaces
            .get(&(Some(game.game_id.clone()), outcome.index()))
            .or_else(|| self.surfaces.get(&(None, outcome.index())));
        match (surface, self.grid.locate(s)) {
            (Some(v), Some(h)) => v[h],
            _ => f64::NAN,
        }
    }

    fn depends_on_game(&self) -> bool {
        self.surfaces.keys().any(|(g, _)| g.is_some())
    }
}

/// Root mean squared difference of two intensities at the observed shots.
pub fn rmse(estimate: &dyn IntensityModel, truth: &dyn IntensityModel, dataset: &Dataset) -> Result<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for game in &dataset.games {
        for j in Outcome::BOTH {
            let pts: Vec<Point> =
                game.shots.iter().filter(|s| s.outcome == j).map(|s| s.location).collect();
            if pts.is_empty() {
                continue;
            }
            let est = estimate.intensities(game, j, &pts);
            let tru = truth.intensities(game, j, &pts);
            for (a, b) in est.iter().zip(&tru) {
                sum += (a - b) * (a - b);
            }
            n += pts.len();
        }
    }
    if n == 0 {
        return Err(Error::Data("no observed shots to score".into()));
    }
    let value = (sum / n as f64).sqrt();
    if !value.is_finite() {
        return Err(Error::Numerical {
            iteration: 0,
            block: "rmse".into(),
            detail: "estimate or truth produced a non-finite intensity".into(),
        });
    }
    Ok(value)
}

/// Keeps each shot in the training side independently with probability `p`.
/// Every game appears on both sides, possibly without shots.
pub fn p_thin_split<R: Rng + ?Sized>(dataset: &Dataset, p: f64, rng: &mut R) -> Result<(Dataset, Dataset)> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidParameter(format!("retention probability {p} outside (0, 1)")));
    }
    let mut train = dataset.clone();
    let mut test = dataset.clone();
    for ((g, tr), te) in dataset.games.iter().zip(&mut train.games).zip(&mut test.games) {
        tr.shots.clear();
        te.shots.clear();
        for shot in &g.shots {
            if rng.random::<f64>() < p {
                tr.shots.push(*shot);
            } else {
                te.shots.push(*shot);
            }
        }
    }
    Ok((train, test))
}

fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

/// `-log Poisson(n | μ)`.
pub fn poisson_nll(n: usize, mu: f64) -> f64 {
    mu - n as f64 * mu.ln() + ln_factorial(n)
}

/// `NPLL = -Σ_i Σ_j Σ_l log Poisson(n*_{l,i,j} | (1-p)/p · λ̂_{l,i,j})`, where
/// `λ̂_{l,i,j}` integrates the train-fitted intensity of game `i` over the
/// partition rectangle `l` using the cells of `integration` whose centers
/// fall inside it.
pub fn npll(
    model: &dyn IntensityModel,
    test: &Dataset,
    p: f64,
    partition: &GridSpec,
    integration: &GridSpec,
) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidParameter(format!("retention probability {p} outside (0, 1)")));
    }
    let centers = integration.centers();
    let cell_region: Vec<Option<usize>> = centers.iter().map(|&c| partition.locate(c)).collect();
    let area = integration.cell_area();
    let scale = (1.0 - p) / p;

    let mut cache: Vec<(Vec<u64>, [Vec<f64>; 2])> = Vec::new();
    let mut total = 0.0;
    for game in &test.games {
        let key: Vec<u64> = game.z.iter().map(|v| v.to_bits()).collect();
        let cached = if model.depends_on_game() { None } else { cache.iter().position(|(k, _)| *k == key) };
        let idx = match cached {
            Some(i) => i,
            None => {
                let sums = Outcome::BOTH.map(|j| {
                    let mut s = vec![0.0; partition.len()];
                    for (v, r) in model.intensities(game, j, &centers).into_iter().zip(&cell_region) {
                        if let Some(r) = r {
                            s[*r] += v * area;
                        }
                    }
                    s
                });
                cache.push((key, sums));
                cache.len() - 1
            }
        };
        for j in Outcome::BOTH {
            let mut counts = vec![0usize; partition.len()];
            for shot in game.shots.iter().filter(|s| s.outcome == j) {
                let r = partition.locate(shot.location).ok_or_else(|| {
                    Error::Data(format!("test shot of game {} outside the partition", game.game_id))
                })?;
                counts[r] += 1;
            }
            for (n, lam) in counts.iter().zip(&cache[idx].1[j.index()]) {
                if !lam.is_finite() {
                    return Err(Error::Numerical {
                        iteration: 0,
                        block: "npll".into(),
                        detail: format!("non-finite regional intensity for game {}", game.game_id),
                    });
                }
                total += poisson_nll(*n, scale * lam.max(NPLL_INTENSITY_FLOOR));
            }
        }
        if model.depends_on_game() {
            cache.clear();
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Encoding, ShotEvent};
    use crate::sampler::chain_rng;

    fn game(id: &str, shots: &[(f64, f64, bool)]) -> GameRecord {
        GameRecord {
            game_id: id.into(),
            home: true,
            strong: false,
            z: vec![1.0, 0.0],
            shots: shots
                .iter()
                .map(|&(x, y, m)| ShotEvent { location: Point::new(x, y), outcome: Outcome::from_flag(m) })
                .collect(),
        }
    }

    fn unit() -> Region {
        Region::new(0.0, 1.0, 0.0, 1.0).unwrap()
    }

    #[test]
    fn rmse_plug_ins() {
        let ds = Dataset::new(
            vec![game("a", &[(0.1, 0.2, true), (0.5, 0.5, false)]), game("b", &[(0.9, 0.9, true), (0.3, 0.7, false)])],
            unit(),
            Encoding::Additive,
            None,
        )
        .unwrap();
        let truth = ConstantIntensity([2.0, 3.0]);
        assert_eq!(rmse(&truth, &truth, &ds).unwrap(), 0.0);
        assert!((rmse(&ConstantIntensity([2.5, 3.5]), &truth, &ds).unwrap() - 0.5).abs() < 1e-15);
        // hand computation: misses see error 1, makes error 3 → sqrt((1+1+9+9)/4)
        let est = ConstantIntensity([3.0, 6.0]);
        assert!((rmse(&est, &truth, &ds).unwrap() - 5f64.sqrt()).abs() < 1e-15);
        let empty = Dataset::new(vec![game("c", &[])], unit(), Encoding::Additive, None).unwrap();
        assert!(rmse(&truth, &truth, &empty).is_err());
    }

    #[test]
    fn npll_single_region_plug_in() {
        let ds = Dataset::new(vec![game("a", &[(0.2, 0.2, true), (0.4, 0.6, true)])], unit(), Encoding::Additive, None)
            .unwrap();
        let part = GridSpec::new(unit(), 1, 1).unwrap();
        // μ = (1-p)/p λ̂ = 1 for made, 1 for missed with p = 0.5
        let score = npll(&ConstantIntensity([1.0, 1.0]), &ds, 0.5, &part, &GridSpec::new(unit(), 4, 4).unwrap())
            .unwrap();
        let made = 1.0 + 2f64.ln();
        let missed = 1.0;
        assert!((score - made - missed).abs() < 1e-12);
    }

    #[test]
    fn npll_empty_test_is_rate_penalty() {
        let ds = Dataset::new(vec![game("a", &[]), game("b", &[])], unit(), Encoding::Additive, None).unwrap();
        let part = GridSpec::new(unit(), NPLL_PARTITION, NPLL_PARTITION).unwrap();
        let fine = GridSpec::new(unit(), 40, 40).unwrap();
        let score = npll(&ConstantIntensity([2.0, 3.0]), &ds, 0.8, &part, &fine).unwrap();
        let want = 2.0 * 0.25 * (2.0 + 3.0);
        assert!((score - want).abs() < 1e-10);
    }

    #[test]
    fn zero_estimate_is_floored() {
        let ds = Dataset::new(vec![game("a", &[(0.5, 0.5, true)])], unit(), Encoding::Additive, None).unwrap();
        let part = GridSpec::new(unit(), 1, 1).unwrap();
        let score = npll(&ConstantIntensity([0.0, 0.0]), &ds, 0.8, &part, &part).unwrap();
        assert!(score.is_finite() && score > 20.0);
    }

    #[test]
    fn thinning_partitions_shots() {
        let shots: Vec<(f64, f64, bool)> = (0..50).map(|i| (i as f64 / 50.0, 0.5, i % 2 == 0)).collect();
        let ds = Dataset::new(vec![game("a", &shots)], unit(), Encoding::Additive, None).unwrap();
        let mut rng = chain_rng(4, 0);
        let (tr, te) = p_thin_split(&ds, 0.8, &mut rng).unwrap();
        assert_eq!(tr.num_shots() + te.num_shots(), 50);
        let mut union: Vec<_> = tr.games[0].shots.iter().chain(&te.games[0].shots).map(|s| s.location.x).collect();
        union.sort_by(f64::total_cmp);
        let mut orig: Vec<_> = ds.games[0].shots.iter().map(|s| s.location.x).collect();
        orig.sort_by(f64::total_cmp);
        assert_eq!(union, orig);
        assert!(p_thin_split(&ds, 1.0, &mut rng).is_err());
        let mut rng2 = chain_rng(4, 0);
        assert_eq!(p_thin_split(&ds, 0.8, &mut rng2).unwrap().0, tr);
    }

    #[test]
    fn grid_intensity_lookup() {
        let mut rows = Vec::new();
        for (x, y) in [(0.25, 0.25), (0.75, 0.25), (0.25, 0.75), (0.75, 0.75)] {
            rows.push(GridExchangeRow { x, y, game_id: None, outcome: Outcome::Made, value: x + y });
            rows.push(GridExchangeRow { x, y, game_id: Some("a".into()), outcome: Outcome::Made, value: 9.0 });
        }
        let g = GridIntensity::from_rows(&rows).unwrap();
        assert_eq!(g.grid().region, unit());
        let a = game("a", &[]);
        let b = game("b", &[]);
        assert_eq!(g.intensity(&a, Outcome::Made, Point::new(0.1, 0.9)), 9.0);
        assert_eq!(g.intensity(&b, Outcome::Made, Point::new(0.1, 0.9)), 1.0);
        assert!(g.intensity(&b, Outcome::Missed, Point::new(0.1, 0.9)).is_nan());
        assert!(g.depends_on_game());
    }
}
