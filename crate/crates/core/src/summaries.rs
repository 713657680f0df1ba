//! Posterior summary surfaces on a grid.
//!
//! Every functional is computed per retained draw and then averaged, so the
//! maps and their credible-interval flags come from the same draws.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::basis::{Basis, BasisValues};
use crate::data::{GridSpec, Outcome, ParamVector};
use crate::error::{Error, Result};
use crate::geometry::Point;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MapKind {
    Intensity,
    SqrtIntensity,
    Density,
    RelativeRisk,
}

impl MapKind {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "intensity" => Ok(MapKind::Intensity),
            "sqrt-intensity" => Ok(MapKind::SqrtIntensity),
            "density" => Ok(MapKind::Density),
            "relrisk" | "relative-risk" => Ok(MapKind::RelativeRisk),
            other => Err(Error::InvalidParameter(format!("unknown map kind '{other}'"))),
        }
    }
}

/// Credible-interval verdict for a relative-risk cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Flag {
    /// Lower bound above one.
    Above,
    /// Upper bound below one.
    Below,
    None,
}

impl Flag {
    pub fn symbol(self) -> &'static str {
        match self {
            Flag::Above => "+",
            Flag::Below => "-",
            Flag::None => "",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovariateContext {
    Single { z: Vec<f64>, outcome: Option<Outcome> },
    Pair { z_a: Vec<f64>, z_b: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceMap {
    pub grid: GridSpec,
    pub kind: MapKind,
    pub context: CovariateContext,
    pub values: Vec<f64>,
    pub flags: Option<Vec<Flag>>,
    pub ci_level: Option<f64>,
}

impl SurfaceMap {
    pub fn contour(&self, level: f64) -> Vec<Vec<Point>> {
        contour_lines(&self.grid, &self.values, level)
    }
}

/// Basis values at the grid centers, shared across draws.
#[derive(Debug, Clone)]
pub struct SurfaceEvaluator {
    grid: GridSpec,
    phi: BasisValues,
}

impl SurfaceEvaluator {
    pub fn new(basis: &Basis, grid: GridSpec) -> Result<Self> {
        Ok(Self { phi: basis.eval(&grid.centers())?, grid })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// `log λ_j(s_h; z)` for every cell.
    pub fn log_intensity(&self, theta: &ParamVector, z: &[f64], outcome: Outcome) -> Vec<f64> {
        self.phi.mul_vec(&theta.surface_coefficients(z, outcome))
    }

    /// `∫_R (λ₁ + λ₀)(s; z) ds` by the midpoint rule.
    pub fn total_rate(&self, theta: &ParamVector, z: &[f64]) -> f64 {
        let area = self.grid.cell_area();
        Outcome::BOTH
            .iter()
            .map(|&j| self.log_intensity(theta, z, j).iter().map(|e| e.exp() * area).sum::<f64>())
            .sum()
    }

    /// Per-draw `RR(s_h; a, b)`.
    pub fn relative_risk(&self, theta: &ParamVector, z_a: &[f64], z_b: &[f64]) -> Vec<f64> {
        let ratio = self.total_rate(theta, z_b) / self.total_rate(theta, z_a);
        let la = self.log_intensity(theta, z_a, Outcome::Made);
        let lb = self.log_intensity(theta, z_b, Outcome::Made);
        la.iter().zip(&lb).map(|(a, b)| (a - b).exp() * ratio).collect()
    }

    /// Per-draw probability mass of a made shot in each cell,
    /// `λ₁(s_h; z)|cell| / ∫(λ₁ + λ₀)(s; z) ds`.
    pub fn made_shot_mass(&self, theta: &ParamVector, z: &[f64]) -> Vec<f64> {
        let total = self.total_rate(theta, z);
        let area = self.grid.cell_area();
        self.log_intensity(theta, z, Outcome::Made).iter().map(|e| e.exp() * area / total).collect()
    }
}

fn check_draws(draws: &[ParamVector], basis: &Basis, zs: &[&[f64]]) -> Result<()> {
    if draws.is_empty() {
        return Err(Error::Input("no posterior draws to summarize".into()));
    }
    let p = zs[0].len();
    if zs.iter().any(|z| z.len() != p) {
        return Err(Error::Dimension("covariate vectors differ in length".into()));
    }
    draws.iter().try_for_each(|d| d.check_dims(basis.len(), p))
}

/// Posterior mean of `λ_j(s_h; z)`; with `sqrt`, the root of that mean.
pub fn intensity_map(
    draws: &[ParamVector],
    basis: &Basis,
    z: &[f64],
    outcome: Outcome,
    grid: &GridSpec,
    sqrt: bool,
) -> Result<SurfaceMap> {
    check_draws(draws, basis, &[z])?;
    let eval = SurfaceEvaluator::new(basis, *grid)?;
    let mut acc = vec![0.0; grid.len()];
    for d in draws {
        for (a, e) in acc.iter_mut().zip(eval.log_intensity(d, z, outcome)) {
            *a += e.exp();
        }
    }
    let n = draws.len() as f64;
    let values = acc.into_iter().map(|a| if sqrt { (a / n).sqrt() } else { a / n }).collect();
    Ok(SurfaceMap {
        grid: *grid,
        kind: if sqrt { MapKind::SqrtIntensity } else { MapKind::Intensity },
        context: CovariateContext::Single { z: z.to_vec(), outcome: Some(outcome) },
        values,
        flags: None,
        ci_level: None,
    })
}

/// Location distribution of made shots: posterior mean of
/// `Pr{T(s)|z} · Pr{T₁(s)|T(s), z}` per cell, normalized to sum to one.
pub fn probability_density_map(draws: &[ParamVector], basis: &Basis, z: &[f64], grid: &GridSpec) -> Result<SurfaceMap> {
    check_draws(draws, basis, &[z])?;
    let eval = SurfaceEvaluator::new(basis, *grid)?;
    let mut acc = vec![0.0; grid.len()];
    for d in draws {
        for (a, m) in acc.iter_mut().zip(eval.made_shot_mass(d, z)) {
            *a += m;
        }
    }
    let total: f64 = acc.iter().sum();
    let values = acc.into_iter().map(|a| a / total).collect();
    Ok(SurfaceMap {
        grid: *grid,
        kind: MapKind::Density,
        context: CovariateContext::Single { z: z.to_vec(), outcome: Some(Outcome::Made) },
        values,
        flags: None,
        ci_level: None,
    })
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Posterior mean relative risk of a made shot under `z_a` versus `z_b`,
/// flagged where the central `ci_level` credible interval excludes one.
pub fn relative_risk_map(
    draws: &[ParamVector],
    basis: &Basis,
    z_a: &[f64],
    z_b: &[f64],
    grid: &GridSpec,
    ci_level: f64,
) -> Result<SurfaceMap> {
    if !(ci_level > 0.0 && ci_level < 1.0) {
        return Err(Error::InvalidParameter(format!("credible level {ci_level} outside (0, 1)")));
    }
    check_draws(draws, basis, &[z_a, z_b])?;
    let eval = SurfaceEvaluator::new(basis, *grid)?;
    let h = grid.len();
    let n = draws.len();
    // cell-major so each cell's draws are contiguous for sorting
    let mut per_cell = vec![0.0; h * n];
    for (k, d) in draws.iter().enumerate() {
        for (cell, rr) in eval.relative_risk(d, z_a, z_b).into_iter().enumerate() {
            per_cell[cell * n + k] = rr;
        }
    }
    let tail = 0.5 * (1.0 - ci_level);
    let mut values = Vec::with_capacity(h);
    let mut flags = Vec::with_capacity(h);
    for cell in per_cell.chunks_exact_mut(n) {
        values.push(cell.iter().sum::<f64>() / n as f64);
        cell.sort_by(f64::total_cmp);
        let flag = if quantile_sorted(cell, tail) > 1.0 {
            Flag::Above
        } else if quantile_sorted(cell, 1.0 - tail) < 1.0 {
            Flag::Below
        } else {
            Flag::None
        };
        flags.push(flag);
    }
    Ok(SurfaceMap {
        grid: *grid,
        kind: MapKind::RelativeRisk,
        context: CovariateContext::Pair { z_a: z_a.to_vec(), z_b: z_b.to_vec() },
        values,
        flags: Some(flags),
        ci_level: Some(ci_level),
    })
}

/// Crossing on a lattice edge between two cell centers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Edge {
    /// Between `(ix, iy)` and `(ix + 1, iy)`.
    H(usize, usize),
    /// Between `(ix, iy)` and `(ix, iy + 1)`.
    V(usize, usize),
}

/// Marching squares on the lattice of cell centers. Returns polylines of the
/// `level` set; closed loops repeat their first point at the end.
pub fn contour_lines(grid: &GridSpec, values: &[f64], level: f64) -> Vec<Vec<Point>> {
    let (nx, ny) = (grid.nx, grid.ny);
    if nx < 2 || ny < 2 {
        return Vec::new();
    }
    let val = |ix: usize, iy: usize| values[iy * nx + ix];
    let above = |ix: usize, iy: usize| val(ix, iy) > level;
    let crossing = |e: Edge| -> Point {
        let ((x0, y0), (x1, y1)) = match e {
            Edge::H(ix, iy) => ((ix, iy), (ix + 1, iy)),
            Edge::V(ix, iy) => ((ix, iy), (ix, iy + 1)),
        };
        let (v0, v1) = (val(x0, y0), val(x1, y1));
        let t = (level - v0) / (v1 - v0);
        let p0 = grid.center(y0 * nx + x0);
        let p1 = grid.center(y1 * nx + x1);
        Point::new(p0.x + t * (p1.x - p0.x), p0.y + t * (p1.y - p0.y))
    };

    let mut segments: Vec<(Edge, Edge)> = Vec::new();
    for iy in 0..ny - 1 {
        for ix in 0..nx - 1 {
            let code = usize::from(above(ix, iy))
                | usize::from(above(ix + 1, iy)) << 1
                | usize::from(above(ix + 1, iy + 1)) << 2
                | usize::from(above(ix, iy + 1)) << 3;
            let (b, r, t, l) = (Edge::H(ix, iy), Edge::V(ix + 1, iy), Edge::H(ix, iy + 1), Edge::V(ix, iy));
            let center_above =
                (val(ix, iy) + val(ix + 1, iy) + val(ix + 1, iy + 1) + val(ix, iy + 1)) / 4.0 > level;
            match code {
                0 | 15 => {}
                1 | 14 => segments.push((l, b)),
                2 | 13 => segments.push((b, r)),
                3 | 12 => segments.push((l, r)),
                4 | 11 => segments.push((r, t)),
                6 | 9 => segments.push((b, t)),
                7 | 8 => segments.push((l, t)),
                5 if center_above => segments.extend([(l, t), (b, r)]),
                5 => segments.extend([(l, b), (r, t)]),
                10 if center_above => segments.extend([(l, b), (r, t)]),
                10 => segments.extend([(l, t), (b, r)]),
                _ => unreachable!(),
            }
        }
    }

    let mut by_edge: HashMap<Edge, Vec<usize>> = HashMap::new();
    for (i, (a, b)) in segments.iter().enumerate() {
        by_edge.entry(*a).or_default().push(i);
        by_edge.entry(*b).or_default().push(i);
    }
    let mut used = vec![false; segments.len()];
    let mut lines = Vec::new();
    // open chains first (start at edges touched once), then loops
    let mut starts: Vec<usize> = (0..segments.len())
        .filter(|&i| by_edge[&segments[i].0].len() == 1 || by_edge[&segments[i].1].len() == 1)
        .collect();
    starts.extend(0..segments.len());
    for start in starts {
        if used[start] {
            continue;
        }
        used[start] = true;
        let (a, b) = segments[start];
        let (mut chain, mut tip) = if by_edge[&b].len() == 1 { (vec![b, a], a) } else { (vec![a, b], b) };
        while let Some(&next) = by_edge[&tip].iter().find(|&&i| !used[i]) {
            used[next] = true;
            let (p, q) = segments[next];
            tip = if p == tip { q } else { p };
            chain.push(tip);
        }
        lines.push(chain.into_iter().map(crossing).collect());
    }
    lines
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{DomainMap, KernelParams, Truncation};
    use crate::geometry::Region;

    fn basis() -> Basis {
        Basis::build(KernelParams::new(1.0, 1.0).unwrap(), Truncation::Fixed(3), DomainMap::identity())
            .unwrap()
    }

    fn grid() -> GridSpec {
        GridSpec::new(Region::unit_square_centered(), 12, 10).unwrap()
    }

    fn draw(seed: u64) -> ParamVector {
        let coef: Vec<f64> = (0..15).map(|i| ((i as f64 + 1.0) * (seed as f64 + 0.37)).sin()).collect();
        ParamVector::from_coefficients(&coef, 3, 2).unwrap()
    }

    #[test]
    fn zero_theta_maps() {
        let d = vec![ParamVector::zeros(3, 2)];
        let m = intensity_map(&d, &basis(), &[1.0, 0.0], Outcome::Made, &grid(), false).unwrap();
        assert!(m.values.iter().all(|&v| v == 1.0));
        let dens = probability_density_map(&d, &basis(), &[1.0, 0.0], &grid()).unwrap();
        for v in &dens.values {
            assert!((v - 1.0 / 120.0).abs() < 1e-15);
        }
    }

    #[test]
    fn intensity_is_mean_of_exponentials() {
        let d = vec![draw(1), draw(2)];
        let b = basis();
        let g = grid();
        let m = intensity_map(&d, &b, &[1.0, 1.0], Outcome::Missed, &g, false).unwrap();
        let s = intensity_map(&d, &b, &[1.0, 1.0], Outcome::Missed, &g, true).unwrap();
        let eval = SurfaceEvaluator::new(&b, g).unwrap();
        let (e1, e2) = (eval.log_intensity(&d[0], &[1.0, 1.0], Outcome::Missed), eval.log_intensity(&d[1], &[1.0, 1.0], Outcome::Missed));
        for h in 0..g.len() {
            let want = 0.5 * (e1[h].exp() + e2[h].exp());
            assert!((m.values[h] - want).abs() < 1e-12 * want);
            assert!((s.values[h] - want.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn relative_risk_identities() {
        let d: Vec<_> = (0..7).map(draw).collect();
        let b = basis();
        let z = [1.0, 0.0];
        let same = relative_risk_map(&d, &b, &z, &z, &grid(), 0.9).unwrap();
        assert!(same.values.iter().all(|&v| v == 1.0));
        assert!(same.flags.as_ref().unwrap().iter().all(|&f| f == Flag::None));
        assert!(same.contour(1.0).is_empty());

        let mut inert = d.clone();
        for t in &mut inert {
            t.theta_beta = [vec![0.0; 6], vec![0.0; 6]];
        }
        let rr = relative_risk_map(&inert, &b, &[1.0, 1.0], &[0.0, 1.0], &grid(), 0.9).unwrap();
        assert!(rr.values.iter().all(|&v| (v - 1.0).abs() < 1e-14));
    }

    #[test]
    fn contour_of_plane_is_straight_line() {
        let g = GridSpec::new(Region::new(0.0, 10.0, 0.0, 5.0).unwrap(), 10, 5).unwrap();
        let values: Vec<f64> = (0..g.len()).map(|h| g.center(h).x / 5.0).collect();
        let lines = contour_lines(&g, &values, 1.0);
        assert_eq!(lines.len(), 1);
        assert_eq!(lines[0].len(), 5);
        assert!(lines[0].iter().all(|p| (p.x - 5.0).abs() < 1e-12));
    }

    #[test]
    fn contour_of_bump_is_closed_loop() {
        let g = GridSpec::new(Region::new(-1.0, 1.0, -1.0, 1.0).unwrap(), 30, 30).unwrap();
        let values: Vec<f64> = (0..g.len()).map(|h| 2.0 * (-3.0 * g.center(h).norm().powi(2)).exp()).collect();
        let lines = contour_lines(&g, &values, 1.0);
        assert_eq!(lines.len(), 1);
        let line = &lines[0];
        assert_eq!(line.first(), line.last());
        let r = (2f64.ln() / 3.0).sqrt();
        assert!(line.iter().all(|p| (p.norm() - r).abs() < 0.02));
    }

    #[test]
    fn rejects_bad_requests() {
        assert!(intensity_map(&[], &basis(), &[0.0, 0.0], Outcome::Made, &grid(), false).is_err());
        assert!(relative_risk_map(&[draw(1)], &basis(), &[0.0, 0.0], &[0.0], &grid(), 0.9).is_err());
        assert!(relative_risk_map(&[draw(1)], &basis(), &[0.0, 0.0], &[1.0, 0.0], &grid(), 1.0).is_err());
        assert!(MapKind::parse("heat").is_err());
    }
}
