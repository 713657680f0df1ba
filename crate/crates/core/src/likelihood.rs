//! Log posterior of the coefficients and its block gradients.
//!
//! Up to additive constants that do not depend on `θ`:
//!
//! ```text
//! log π(θ | S) = Σ_{i,j,t} X_{i,j}(s_{i,j,t})ᵀθ
//!              - Σ_{i,j} Σ_h exp{X_{i,j}(s_h)ᵀθ} |cell|
//!              - ½ θᵀ Σ⁻¹ θ
//! ```
//!
//! The `exp{|R|}` factor of the Poisson density and `log(t!)` terms are
//! dropped; Metropolis ratios only ever see differences.
//!
//! The data term is linear in `θ`, so shots enter only through the
//! sufficient statistics `Σ_t φ(s_{i,j,t})`. Games sharing a covariate
//! vector share their grid integrals.

use serde::{Deserialize, Serialize};

use crate::basis::{dot, Basis, BasisValues};
use crate::data::{design_row_from_phi, Dataset, GridSpec, Outcome, ParamVector};
use crate::error::{Error, Result};
use crate::geometry::Point;

/// A coefficient block updated jointly by the sampler.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Block {
    /// `θ⁰`, the shared intercept surface.
    Intercept,
    /// `θ^β_j`, all covariate surfaces of one outcome type.
    Covariate(Outcome),
}

impl Block {
    pub const ALL: [Block; 3] =
        [Block::Intercept, Block::Covariate(Outcome::Missed), Block::Covariate(Outcome::Made)];

    pub fn name(self) -> &'static str {
        match self {
            Block::Intercept => "theta0",
            Block::Covariate(Outcome::Missed) => "theta_beta0",
            Block::Covariate(Outcome::Made) => "theta_beta1",
        }
    }

    pub fn slice(self, theta: &ParamVector) -> &[f64] {
        match self {
            Block::Intercept => &theta.theta0,
            Block::Covariate(j) => &theta.theta_beta[j.index()],
        }
    }

    pub fn slice_mut(self, theta: &mut ParamVector) -> &mut Vec<f64> {
        match self {
            Block::Intercept => &mut theta.theta0,
            Block::Covariate(j) => &mut theta.theta_beta[j.index()],
        }
    }
}

/// Basis values at the quadrature cell centers.
#[derive(Debug, Clone)]
pub struct QuadratureCache {
    grid: GridSpec,
    phi: BasisValues,
}

impl QuadratureCache {
    pub fn new(basis: &Basis, grid: GridSpec) -> Result<Self> {
        let phi = basis.eval(&grid.centers())?;
        Ok(Self { grid, phi })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn phi(&self) -> &BasisValues {
        &self.phi
    }

    /// `Σ_h exp{φ(s_h)ᵀc} |cell|`, accumulating `Σ_h exp{·}|cell| φ(s_h)`
    /// into `grad` when given.
    fn integral(&self, coef: &[f64], mut grad: Option<&mut [f64]>) -> f64 {
        let area = self.grid.cell_area();
        let mut total = 0.0;
        for h in 0..self.phi.rows() {
            let row = self.phi.row(h);
            let w = dot(row, coef).exp() * area;
            total += w;
            if let Some(g) = grad.as_deref_mut() {
                for (gl, &f) in g.iter_mut().zip(row) {
                    *gl += w * f;
                }
            }
        }
        total
    }
}

#[derive(Debug, Clone)]
struct CovariateGroup {
    z: Vec<f64>,
    games: f64,
}

/// Everything the sampler needs to evaluate the posterior repeatedly.
#[derive(Debug, Clone)]
pub struct Posterior {
    l: usize,
    p: usize,
    xi: Vec<f64>,
    cache: QuadratureCache,
    groups: Vec<CovariateGroup>,
    /// `Σ_{i,j,t} φ(s_{i,j,t})`
    shot_sum: Vec<f64>,
    /// `Σ_i z_i ⊗ Σ_t φ(s_{i,j,t})` per outcome.
    shot_sum_beta: [Vec<f64>; 2],
}

impl Posterior {
    pub fn new(dataset: &Dataset, basis: &Basis, grid: GridSpec) -> Result<Self> {
        if dataset.games.is_empty() {
            return Err(Error::Data("dataset has no games".into()));
        }
        let (l, p) = (basis.len(), dataset.p());
        let mut post = Self::prior_only(basis, p, grid)?;
        for game in &dataset.games {
            if game.z.len() != p {
                return Err(Error::Dimension(format!(
                    "game {} has {} covariates, expected {p}",
                    game.game_id,
                    game.z.len()
                )));
            }
            match post.groups.iter_mut().find(|g| same_bits(&g.z, &game.z)) {
                Some(g) => g.games += 1.0,
                None => post.groups.push(CovariateGroup { z: game.z.clone(), games: 1.0 }),
            }
            let points: Vec<Point> = game.shots.iter().map(|s| s.location).collect();
            let phi = basis.eval(&points)?;
            for (t, shot) in game.shots.iter().enumerate() {
                let row = phi.row(t);
                for (acc, &f) in post.shot_sum.iter_mut().zip(row) {
                    *acc += f;
                }
                let acc = &mut post.shot_sum_beta[shot.outcome.index()];
                for (k, &zk) in game.z.iter().enumerate() {
                    for (a, &f) in acc[k * l..(k + 1) * l].iter_mut().zip(row) {
                        *a += zk * f;
                    }
                }
            }
        }
        Ok(post)
    }

    /// Posterior with no games: only the Gaussian prior remains.
    pub fn prior_only(basis: &Basis, p: usize, grid: GridSpec) -> Result<Self> {
        let l = basis.len();
        Ok(Self {
            l,
            p,
            xi: basis.eigenvalues().to_vec(),
            cache: QuadratureCache::new(basis, grid)?,
            groups: Vec::new(),
            shot_sum: vec![0.0; l],
            shot_sum_beta: [vec![0.0; p * l], vec![0.0; p * l]],
        })
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.xi
    }

    pub fn cache(&self) -> &QuadratureCache {
        &self.cache
    }

    pub fn block_len(&self, block: Block) -> usize {
        match block {
            Block::Intercept => self.l,
            Block::Covariate(_) => self.p * self.l,
        }
    }

    /// `θᵀ(σ²Ξ)⁻¹θ` for a block laid out in runs of `L`.
    fn quad_form(&self, coef: &[f64]) -> f64 {
        coef.chunks_exact(self.l.max(1))
            .map(|run| run.iter().zip(&self.xi).map(|(t, x)| t * t / x).sum::<f64>())
            .sum()
    }

    /// Full log posterior of the coefficients given the hypervariances.
    pub fn log_posterior(&self, theta: &ParamVector) -> f64 {
        let mut lp = dot(&self.shot_sum, &theta.theta0);
        for j in Outcome::BOTH {
            lp += dot(&self.shot_sum_beta[j.index()], &theta.theta_beta[j.index()]);
        }
        for g in &self.groups {
            for j in Outcome::BOTH {
                let c = theta.surface_coefficients(&g.z, j);
                lp -= g.games * self.cache.integral(&c, None);
            }
        }
        lp -= 0.5 * self.quad_form(&theta.theta0) / theta.sigma0_sq;
        lp -= 0.5 * (self.quad_form(&theta.theta_beta[0]) + self.quad_form(&theta.theta_beta[1]))
            / theta.sigma_beta_sq;
        lp
    }

    /// Log full conditional of one block (up to a constant) and its gradient,
    /// with the block's coefficients replaced by `coef`.
    pub fn block_density(&self, theta: &ParamVector, block: Block, coef: &[f64]) -> (f64, Vec<f64>) {
        let l = self.l;
        let mut grad = vec![0.0; coef.len()];
        let mut scratch = vec![0.0; l];
        let mut lp;
        match block {
            Block::Intercept => {
                lp = dot(&self.shot_sum, coef);
                grad.copy_from_slice(&self.shot_sum);
                for g in &self.groups {
                    for j in Outcome::BOTH {
                        let mut c = coef.to_vec();
                        for k in 0..self.p {
                            let zk = g.z[k];
                            for (ci, b) in c.iter_mut().zip(theta.beta(j, k)) {
                                *ci += zk * b;
                            }
                        }
                        scratch.iter_mut().for_each(|v| *v = 0.0);
                        lp -= g.games * self.cache.integral(&c, Some(&mut scratch));
                        for (gr, s) in grad.iter_mut().zip(&scratch) {
                            *gr -= g.games * s;
                        }
                    }
                }
                for ((gr, &t), &x) in grad.iter_mut().zip(coef).zip(&self.xi) {
                    *gr -= t / (theta.sigma0_sq * x);
                }
                lp -= 0.5 * self.quad_form(coef) / theta.sigma0_sq;
            }
            Block::Covariate(j) => {
                let stats = &self.shot_sum_beta[j.index()];
                lp = dot(stats, coef);
                grad.copy_from_slice(stats);
                for g in &self.groups {
                    let mut c = theta.theta0.clone();
                    for (k, &zk) in g.z.iter().enumerate() {
                        for (ci, b) in c.iter_mut().zip(&coef[k * l..(k + 1) * l]) {
                            *ci += zk * b;
                        }
                    }
                    scratch.iter_mut().for_each(|v| *v = 0.0);
                    lp -= g.games * self.cache.integral(&c, Some(&mut scratch));
                    for (k, &zk) in g.z.iter().enumerate() {
                        if zk != 0.0 {
                            for (gr, s) in grad[k * l..(k + 1) * l].iter_mut().zip(&scratch) {
                                *gr -= g.games * zk * s;
                            }
                        }
                    }
                }
                for (run_g, run_t) in grad.chunks_exact_mut(l).zip(coef.chunks_exact(l)) {
                    for ((gr, &t), &x) in run_g.iter_mut().zip(run_t).zip(&self.xi) {
                        *gr -= t / (theta.sigma_beta_sq * x);
                    }
                }
                lp -= 0.5 * self.quad_form(coef) / theta.sigma_beta_sq;
            }
        }
        (lp, grad)
    }

    /// Gradient of [`Posterior::log_posterior`] restricted to `block`.
    pub fn grad_block(&self, theta: &ParamVector, block: Block) -> Vec<f64> {
        self.block_density(theta, block, block.slice(theta)).1
    }
}

fn same_bits(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

/// `log λ_j(s; z) = X_j(s; z)ᵀθ`.
pub fn log_intensity(theta: &ParamVector, basis: &Basis, z: &[f64], outcome: Outcome, s: Point) -> Result<f64> {
    theta.check_dims(basis.len(), z.len())?;
    let phi = basis.eval_point(s);
    Ok(dot(&design_row_from_phi(&phi, z, outcome), &theta.coefficients()))
}

/// Midpoint-rule approximation of `∫_R λ_j(s; z) ds`.
pub fn integral_approx(
    theta: &ParamVector,
    basis: &Basis,
    z: &[f64],
    outcome: Outcome,
    grid: &GridSpec,
) -> Result<f64> {
    theta.check_dims(basis.len(), z.len())?;
    let cache = QuadratureCache::new(basis, *grid)?;
    Ok(cache.integral(&theta.surface_coefficients(z, outcome), None))
}

/// Log posterior of `θ` given its hypervariances.
pub fn log_posterior(theta: &ParamVector, dataset: &Dataset, basis: &Basis, grid: &GridSpec) -> Result<f64> {
    if !(theta.sigma0_sq > 0.0 && theta.sigma_beta_sq > 0.0) {
        return Err(Error::InvalidParameter("prior variances must be positive".into()));
    }
    theta.check_dims(basis.len(), dataset.p())?;
    Ok(Posterior::new(dataset, basis, *grid)?.log_posterior(theta))
}

/// Gradient of the log posterior with respect to one block.
pub fn grad_block(
    theta: &ParamVector,
    block: Block,
    dataset: &Dataset,
    basis: &Basis,
    grid: &GridSpec,
) -> Result<Vec<f64>> {
    theta.check_dims(basis.len(), dataset.p())?;
    Ok(Posterior::new(dataset, basis, *grid)?.grad_block(theta, block))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{DomainMap, KernelParams, Truncation};
    use crate::data::{Encoding, GameRecord, ShotEvent};
    use crate::geometry::Region;

    fn basis(l: usize) -> Basis {
        Basis::build(KernelParams::new(1.0, 1.0).unwrap(), Truncation::Fixed(l), DomainMap::identity())
            .unwrap()
    }

    fn grid() -> GridSpec {
        GridSpec::new(Region::unit_square_centered(), 20, 20).unwrap()
    }

    fn game(id: &str, z: Vec<f64>, shots: &[(f64, f64, bool)]) -> GameRecord {
        GameRecord {
            game_id: id.into(),
            home: false,
            strong: false,
            z,
            shots: shots
                .iter()
                .map(|&(x, y, m)| ShotEvent { location: Point::new(x, y), outcome: Outcome::from_flag(m) })
                .collect(),
        }
    }

    #[test]
    fn zero_theta_gives_unit_intensity() {
        let b = basis(3);
        let t = ParamVector::zeros(3, 2);
        assert_eq!(log_intensity(&t, &b, &[1.0, 0.0], Outcome::Made, Point::new(0.1, 0.2)).unwrap(), 0.0);
        let area = integral_approx(&t, &b, &[1.0, 1.0], Outcome::Missed, &grid()).unwrap();
        assert!((area - 4.0).abs() < 1e-12);
    }

    #[test]
    fn zero_theta_log_posterior_is_minus_area_per_game_and_type() {
        let b = basis(3);
        let ds = Dataset::new(
            vec![game("a", vec![1.0, 0.0], &[(0.1, 0.1, true)]), game("b", vec![0.0, 1.0], &[])],
            Region::unit_square_centered(),
            Encoding::Additive,
            None,
        )
        .unwrap();
        let lp = log_posterior(&ParamVector::zeros(3, 2), &ds, &b, &grid()).unwrap();
        assert!((lp - (-2.0 * 2.0 * 4.0)).abs() < 1e-9);
    }

    #[test]
    fn empty_dataset_rejected() {
        let ds = Dataset::new(vec![], Region::unit_square_centered(), Encoding::Additive, None).unwrap();
        assert!(log_posterior(&ParamVector::zeros(3, 2), &ds, &basis(3), &grid()).is_err());
    }

    #[test]
    fn no_shots_intercept_gradient_is_pure_integral() {
        let b = basis(3);
        let ds = Dataset::new(
            vec![game("a", vec![0.0, 1.0], &[]), game("b", vec![1.0, 1.0], &[])],
            Region::unit_square_centered(),
            Encoding::Additive,
            None,
        )
        .unwrap();
        let g = grad_block(&ParamVector::zeros(3, 2), Block::Intercept, &ds, &b, &grid()).unwrap();
        let grid = grid();
        let phi = b.eval(&grid.centers()).unwrap();
        for l in 0..3 {
            let want: f64 = -4.0 * (0..grid.len()).map(|h| phi.get(h, l) * grid.cell_area()).sum::<f64>();
            assert!((g[l] - want).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_covariates_leave_only_prior_gradient() {
        let b = basis(3);
        let ds = Dataset::new(
            vec![game("a", vec![0.0, 0.0], &[(0.2, 0.3, true), (-0.5, 0.1, false)])],
            Region::unit_square_centered(),
            Encoding::Additive,
            None,
        )
        .unwrap();
        let mut t = ParamVector::zeros(3, 2);
        t.theta_beta[1] = vec![0.3, -0.2, 0.1, 0.5, 0.4, -0.6];
        t.sigma_beta_sq = 2.0;
        let g = grad_block(&t, Block::Covariate(Outcome::Made), &ds, &b, &grid()).unwrap();
        for (i, gi) in g.iter().enumerate() {
            let want = -t.theta_beta[1][i] / (2.0 * b.eigenvalues()[i % 3]);
            assert!((gi - want).abs() < 1e-12);
        }
    }

    #[test]
    fn weaker_prior_raises_log_posterior() {
        let b = basis(3);
        let ds = Dataset::new(
            vec![game("a", vec![1.0, 0.0], &[(0.2, 0.3, true)])],
            Region::unit_square_centered(),
            Encoding::Additive,
            None,
        )
        .unwrap();
        let mut t = ParamVector::from_coefficients(&[0.2; 15], 3, 2).unwrap();
        let lp1 = log_posterior(&t, &ds, &b, &grid()).unwrap();
        t.sigma0_sq *= 2.0;
        t.sigma_beta_sq *= 2.0;
        assert!(log_posterior(&t, &ds, &b, &grid()).unwrap() > lp1);
    }
}
