//! Shots, games, covariate coding, quadrature grids and the design row.

use serde::{Deserialize, Serialize};

use crate::basis::Basis;
use crate::error::{Error, Result};
use crate::geometry::{Point, Region};

/// Shots farther than this from the basket (feet) are dropped.
pub const MAX_SHOT_DISTANCE: f64 = 28.0;
/// Shots closer than this to the basket (feet) are dropped.
pub const MIN_SHOT_DISTANCE: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Outcome {
    Missed,
    Made,
}

impl Outcome {
    pub const BOTH: [Outcome; 2] = [Outcome::Missed, Outcome::Made];

    pub fn index(self) -> usize {
        match self {
            Outcome::Missed => 0,
            Outcome::Made => 1,
        }
    }

    pub fn from_flag(made: bool) -> Self {
        if made {
            Outcome::Made
        } else {
            Outcome::Missed
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShotEvent {
    pub location: Point,
    pub outcome: Outcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameRecord {
    pub game_id: String,
    pub home: bool,
    pub strong: bool,
    pub z: Vec<f64>,
    pub shots: Vec<ShotEvent>,
}

impl GameRecord {
    pub fn count(&self, outcome: Outcome) -> usize {
        self.shots.iter().filter(|s| s.outcome == outcome).count()
    }
}

/// Covariate coding of the per-game indicators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Encoding {
    /// No covariates; the model reduces to the shared intercept surface.
    Baseline,
    /// `(home, strong)`.
    Additive,
    /// `(home, strong, home·strong)`.
    Interaction,
}

impl Encoding {
    pub fn dim(self) -> usize {
        match self {
            Encoding::Baseline => 0,
            Encoding::Additive => 2,
            Encoding::Interaction => 3,
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "baseline" | "p0" => Ok(Encoding::Baseline),
            "additive" | "p2" => Ok(Encoding::Additive),
            "interaction" | "p3" | "p3-interaction" => Ok(Encoding::Interaction),
            other => Err(Error::Config(format!("unknown covariate encoding '{other}'"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Encoding::Baseline => "baseline",
            Encoding::Additive => "additive",
            Encoding::Interaction => "interaction",
        }
    }
}

/// 0/1 indicator coding of the game covariates.
pub fn encode_covariates(home: bool, strong: bool, scheme: Encoding) -> Vec<f64> {
    let (h, s) = (f64::from(u8::from(home)), f64::from(u8::from(strong)));
    match scheme {
        Encoding::Baseline => vec![],
        Encoding::Additive => vec![h, s],
        Encoding::Interaction => vec![h, s, h * s],
    }
}

/// Removal counts recorded by [`filter_shots`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterReport {
    pub kept: usize,
    pub too_far: usize,
    pub too_close: usize,
    pub outside_region: usize,
    pub inconsistent_covariates: usize,
}

impl FilterReport {
    pub fn removed(&self) -> usize {
        self.too_far + self.too_close + self.outside_region + self.inconsistent_covariates
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub games: Vec<GameRecord>,
    pub region: Region,
    pub encoding: Encoding,
    pub filter: Option<FilterReport>,
}

impl Dataset {
    /// Checks the structural invariants shared by every constructor.
    pub fn new(
        games: Vec<GameRecord>,
        region: Region,
        encoding: Encoding,
        filter: Option<FilterReport>,
    ) -> Result<Self> {
        let p = encoding.dim();
        for g in &games {
            if g.z.len() != p {
                return Err(Error::Dimension(format!(
                    "game {} has {} covariates, encoding '{}' expects {p}",
                    g.game_id,
                    g.z.len(),
                    encoding.name()
                )));
            }
            if let Some(s) = g.shots.iter().find(|s| !region.contains(s.location)) {
                return Err(Error::Data(format!(
                    "shot ({}, {}) of game {} lies outside the region",
                    s.location.x, s.location.y, g.game_id
                )));
            }
        }
        Ok(Self { games, region, encoding, filter })
    }

    pub fn p(&self) -> usize {
        self.encoding.dim()
    }

    pub fn num_games(&self) -> usize {
        self.games.len()
    }

    pub fn num_shots(&self) -> usize {
        self.games.iter().map(|g| g.shots.len()).sum()
    }

    pub fn count(&self, outcome: Outcome) -> usize {
        self.games.iter().map(|g| g.count(outcome)).sum()
    }

    /// Flattens back to raw rows, one per shot.
    pub fn to_raw(&self) -> Vec<RawShot> {
        self.games
            .iter()
            .flat_map(|g| {
                g.shots.iter().map(move |s| RawShot {
                    game_id: g.game_id.clone(),
                    x: s.location.x,
                    y: s.location.y,
                    made: s.outcome == Outcome::Made,
                    home: g.home,
                    strong: g.strong,
                })
            })
            .collect()
    }
}

/// One unfiltered shot record in the court frame (basket at the origin).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawShot {
    pub game_id: String,
    pub x: f64,
    pub y: f64,
    pub made: bool,
    pub home: bool,
    pub strong: bool,
}

/// Drops shots beyond [`MAX_SHOT_DISTANCE`] or inside [`MIN_SHOT_DISTANCE`] of
/// the basket, and shots outside `region`. Games keep first-appearance order
/// and survive even if all their shots are removed.
pub fn filter_shots(raw: &[RawShot], region: Region, encoding: Encoding) -> Dataset {
    let mut report = FilterReport::default();
    let mut games: Vec<GameRecord> = Vec::new();
    for r in raw {
        let idx = match games.iter().position(|g| g.game_id == r.game_id) {
            Some(i) => i,
            None => {
                games.push(GameRecord {
                    game_id: r.game_id.clone(),
                    home: r.home,
                    strong: r.strong,
                    z: encode_covariates(r.home, r.strong, encoding),
                    shots: Vec::new(),
                });
                games.len() - 1
            }
        };
        let game = &mut games[idx];
        if game.home != r.home || game.strong != r.strong {
            report.inconsistent_covariates += 1;
            continue;
        }
        let p = Point::new(r.x, r.y);
        let d = p.norm();
        if d > MAX_SHOT_DISTANCE {
            report.too_far += 1;
        } else if d < MIN_SHOT_DISTANCE {
            report.too_close += 1;
        } else if !region.contains(p) {
            report.outside_region += 1;
        } else {
            report.kept += 1;
            game.shots.push(ShotEvent { location: p, outcome: Outcome::from_flag(r.made) });
        }
    }
    Dataset { games, region, encoding, filter: Some(report) }
}

/// Equal-area rectangular cells tiling a region, indexed `h = iy·nx + ix`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub region: Region,
    pub nx: usize,
    pub ny: usize,
}

impl GridSpec {
    pub fn new(region: Region, nx: usize, ny: usize) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::InvalidParameter(format!("grid {nx}x{ny} has no cells")));
        }
        Ok(Self { region, nx, ny })
    }

    /// One-foot cells over the half court.
    pub fn court_default() -> Self {
        Self { region: Region::half_court(), nx: 50, ny: 35 }
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dx(&self) -> f64 {
        self.region.width() / self.nx as f64
    }

    pub fn dy(&self) -> f64 {
        self.region.height() / self.ny as f64
    }

    pub fn cell_area(&self) -> f64 {
        self.dx() * self.dy()
    }

    pub fn center(&self, h: usize) -> Point {
        let (ix, iy) = (h % self.nx, h / self.nx);
        Point::new(
            self.region.x_min + (ix as f64 + 0.5) * self.dx(),
            self.region.y_min + (iy as f64 + 0.5) * self.dy(),
        )
    }

    pub fn centers(&self) -> Vec<Point> {
        (0..self.len()).map(|h| self.center(h)).collect()
    }

    /// Cell containing `p`; points on the upper boundary fall in the last cell.
    pub fn locate(&self, p: Point) -> Option<usize> {
        if !self.region.contains(p) {
            return None;
        }
        let ix = (((p.x - self.region.x_min) / self.dx()) as usize).min(self.nx - 1);
        let iy = (((p.y - self.region.y_min) / self.dy()) as usize).min(self.ny - 1);
        Some(iy * self.nx + ix)
    }

    /// Midpoint-rule integral `Σ_h f(s_h) · area`.
    pub fn integrate(&self, f: impl Fn(Point) -> f64) -> f64 {
        let area = self.cell_area();
        (0..self.len()).map(|h| f(self.center(h)) * area).sum()
    }
}

/// Coefficients and hypervariances of the model.
///
/// `theta_beta[j]` stacks the `p` covariate surfaces for outcome `j`,
/// each a length-`L` run: `(θ^β_{j,1}, …, θ^β_{j,p})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    pub theta0: Vec<f64>,
    pub theta_beta: [Vec<f64>; 2],
    pub sigma0_sq: f64,
    pub sigma_beta_sq: f64,
}

impl ParamVector {
    pub fn zeros(l: usize, p: usize) -> Self {
        Self {
            theta0: vec![0.0; l],
            theta_beta: [vec![0.0; p * l], vec![0.0; p * l]],
            sigma0_sq: 1.0,
            sigma_beta_sq: 1.0,
        }
    }

    /// Splits a flat `(θ⁰, θ^β₀, θ^β₁)` vector of length `(1+2p)L`.
    pub fn from_coefficients(coef: &[f64], l: usize, p: usize) -> Result<Self> {
        if coef.len() != (1 + 2 * p) * l {
            return Err(Error::Dimension(format!(
                "expected {} coefficients for L={l}, p={p}, got {}",
                (1 + 2 * p) * l,
                coef.len()
            )));
        }
        let (t0, rest) = coef.split_at(l);
        let (b0, b1) = rest.split_at(p * l);
        Ok(Self {
            theta0: t0.to_vec(),
            theta_beta: [b0.to_vec(), b1.to_vec()],
            sigma0_sq: 1.0,
            sigma_beta_sq: 1.0,
        })
    }

    pub fn l(&self) -> usize {
        self.theta0.len()
    }

    pub fn p(&self) -> usize {
        if self.theta0.is_empty() {
            0
        } else {
            self.theta_beta[0].len() / self.theta0.len()
        }
    }

    pub fn coefficients(&self) -> Vec<f64> {
        let mut out = self.theta0.clone();
        out.extend_from_slice(&self.theta_beta[0]);
        out.extend_from_slice(&self.theta_beta[1]);
        out
    }

    pub fn beta(&self, outcome: Outcome, k: usize) -> &[f64] {
        let l = self.l();
        &self.theta_beta[outcome.index()][k * l..(k + 1) * l]
    }

    /// `θ⁰ + Σ_k z_k θ^β_{j,k}`: the coefficient of `φ(s)` in `log λ_j(s; z)`.
    pub fn surface_coefficients(&self, z: &[f64], outcome: Outcome) -> Vec<f64> {
        let mut c = self.theta0.clone();
        for (k, &zk) in z.iter().enumerate() {
            if zk != 0.0 {
                for (ci, b) in c.iter_mut().zip(self.beta(outcome, k)) {
                    *ci += zk * b;
                }
            }
        }
        c
    }

    pub fn check_dims(&self, l: usize, p: usize) -> Result<()> {
        if self.theta0.len() != l || self.theta_beta.iter().any(|b| b.len() != p * l) {
            return Err(Error::Dimension(format!(
                "parameter vector does not match L={l}, p={p}"
            )));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.coefficients().iter().all(|v| v.is_finite())
            && self.sigma0_sq.is_finite()
            && self.sigma_beta_sq.is_finite()
    }
}

/// `X_j(s; z)ᵀ = (1, c_j ⊗ zᵀ) ⊗ φ(s)ᵀ`, of length `(1+2p)L`.
pub fn design_row(basis: &Basis, z: &[f64], p: usize, outcome: Outcome, s: Point) -> Result<Vec<f64>> {
    if z.len() != p {
        return Err(Error::Dimension(format!("covariate vector has length {}, expected {p}", z.len())));
    }
    let phi = basis.eval_point(s);
    Ok(design_row_from_phi(&phi, z, outcome))
}

pub(crate) fn design_row_from_phi(phi: &[f64], z: &[f64], outcome: Outcome) -> Vec<f64> {
    let (l, p) = (phi.len(), z.len());
    let mut row = vec![0.0; (1 + 2 * p) * l];
    row[..l].copy_from_slice(phi);
    let offset = l + outcome.index() * p * l;
    for (k, &zk) in z.iter().enumerate() {
        for (dst, &f) in row[offset + k * l..offset + (k + 1) * l].iter_mut().zip(phi) {
            *dst = zk * f;
        }
    }
    row
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{DomainMap, KernelParams, Truncation};

    fn basis(l: usize) -> Basis {
        Basis::build(KernelParams::new(1.0, 1.0).unwrap(), Truncation::Fixed(l), DomainMap::identity())
            .unwrap()
    }

    fn kron(a: &[f64], b: &[f64]) -> Vec<f64> {
        a.iter().flat_map(|x| b.iter().map(move |y| x * y)).collect()
    }

    #[test]
    fn encodes_indicators() {
        assert_eq!(encode_covariates(true, true, Encoding::Additive), vec![1.0, 1.0]);
        assert_eq!(encode_covariates(false, false, Encoding::Interaction), vec![0.0, 0.0, 0.0]);
        assert_eq!(encode_covariates(true, false, Encoding::Interaction), vec![1.0, 0.0, 0.0]);
        assert_eq!(encode_covariates(true, true, Encoding::Interaction), vec![1.0, 1.0, 1.0]);
        assert!(encode_covariates(true, true, Encoding::Baseline).is_empty());
    }

    #[test]
    fn zero_covariates_leave_only_intercept() {
        let b = basis(3);
        let s = Point::new(0.2, -0.4);
        let row = design_row(&b, &[0.0, 0.0], 2, Outcome::Made, s).unwrap();
        let phi = b.eval_point(s);
        assert_eq!(&row[..3], phi.as_slice());
        assert!(row[3..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn scalar_covariate_copies_basis() {
        let b = basis(3);
        let s = Point::new(-0.5, 0.1);
        let phi = b.eval_point(s);
        let row = design_row(&b, &[1.0], 1, Outcome::Made, s).unwrap();
        let want: Vec<f64> = phi.iter().chain([0.0; 3].iter()).chain(phi.iter()).copied().collect();
        assert_eq!(row, want);
    }

    #[test]
    fn layout_matches_generic_kronecker() {
        let b = basis(3);
        let s = Point::new(0.3, 0.6);
        let phi = b.eval_point(s);
        let z = [1.0, 0.0];
        let row = design_row(&b, &z, 2, Outcome::Missed, s).unwrap();
        assert_eq!(row.len(), 15);
        // (1, c_0 ⊗ zᵀ) ⊗ φᵀ with c_0 = (1, 0)
        let mut lead = vec![1.0];
        lead.extend(kron(&[1.0, 0.0], &z));
        assert_eq!(row, kron(&lead, &phi));
        let nonzero: Vec<usize> = row.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(i, _)| i).collect();
        assert_eq!(nonzero, vec![0, 1, 2, 3, 4, 5]);
        assert!(design_row(&b, &z, 3, Outcome::Missed, s).is_err());
    }

    #[test]
    fn filter_applies_distance_rules() {
        let shot = |x: f64, y: f64| RawShot {
            game_id: "g".into(),
            x,
            y,
            made: true,
            home: true,
            strong: false,
        };
        let raw = vec![shot(0.0, 30.0), shot(0.0, 0.5), shot(0.0, 15.0), shot(-24.0, 34.0)];
        let ds = filter_shots(&raw, Region::half_court(), Encoding::Additive);
        let rep = ds.filter.unwrap();
        assert_eq!((rep.too_far, rep.too_close, rep.kept), (2, 1, 1));
        assert_eq!(ds.games[0].shots[0].location, Point::new(0.0, 15.0));
        let again = filter_shots(&ds.to_raw(), ds.region, ds.encoding);
        assert_eq!(again.games, ds.games);
        assert_eq!(again.filter.unwrap().removed(), 0);
    }

    #[test]
    fn grid_tiles_region() {
        let g = GridSpec::court_default();
        assert_eq!(g.len(), 1750);
        assert!((g.cell_area() - 1.0).abs() < 1e-12);
        assert!((g.integrate(|_| 1.0) - g.region.area()).abs() < 1e-9);
        assert_eq!(g.locate(g.center(37)), Some(37));
        assert_eq!(g.locate(Point::new(25.0, 35.0)), Some(1749));
        assert_eq!(g.locate(Point::new(26.0, 3.0)), None);
    }

    #[test]
    fn surface_coefficients_combine_blocks() {
        let coef: Vec<f64> = (0..15).map(|i| i as f64).collect();
        let t = ParamVector::from_coefficients(&coef, 3, 2).unwrap();
        assert_eq!(t.coefficients(), coef);
        let c = t.surface_coefficients(&[1.0, 2.0], Outcome::Made);
        // θ⁰ = 0,1,2; θ^β₁ = (9,10,11),(12,13,14)
        assert_eq!(c, vec![0.0 + 9.0 + 24.0, 1.0 + 10.0 + 26.0, 2.0 + 11.0 + 28.0]);
    }
}
