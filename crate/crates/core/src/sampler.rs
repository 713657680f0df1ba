//! Metropolis-within-Gibbs sampler.
//!
//! Each sweep updates `θ⁰` by MALA, draws `σ₀²` from its inverse-Gamma full
//! conditional, updates `θ^β₀` and `θ^β₁` by MALA, then draws `σ_β²`.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::basis::Basis;
use crate::data::{design_row_from_phi, Dataset, GridSpec, Outcome, ParamVector};
use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::likelihood::{Block, Posterior};

/// Acceptance rate targeted by burn-in step-size adaptation.
pub const TARGET_ACCEPTANCE: f64 = 0.574;
/// Pseudo-count replacing empty `(game, type)` cells in the initial regression.
pub const ZERO_COUNT_PSEUDO: f64 = 0.5;
/// Ridge added when the initial normal equations are singular.
pub const INIT_RIDGE: f64 = 1e-6;

/// How the default MALA step sizes scale with `L` and `p`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepRule {
    /// `τ² = 0.03 / [L(p+1)]^{1/3}` for every block.
    Joint,
    /// As `Joint` for `θ⁰`, but `τ_β² = 0.03 / [L (p+1)^{1/3}]`.
    Split,
}

impl StepRule {
    pub fn step_sizes(self, l: usize, p: usize) -> (f64, f64) {
        let (l, p1) = (l as f64, (p + 1) as f64);
        let tau0 = 0.03 / (l * p1).cbrt();
        let tau_beta = match self {
            StepRule::Joint => tau0,
            StepRule::Split => 0.03 / (l * p1.cbrt()),
        };
        (tau0, tau_beta)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub step_rule: StepRule,
    /// Overrides the rule-based `τ₀²`.
    pub tau0_sq: Option<f64>,
    /// Overrides the rule-based `τ_β²`.
    pub tau_beta_sq: Option<f64>,
    /// Robbins–Monro adaptation of each block's `τ²` during burn-in.
    pub adapt: bool,
    pub a_sigma: f64,
    pub b_sigma: f64,
    pub c: f64,
    pub d: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            iterations: 15_000,
            burn_in: 10_000,
            thin: 1,
            seed: 1,
            step_rule: StepRule::Joint,
            tau0_sq: None,
            tau_beta_sq: None,
            adapt: false,
            a_sigma: 5.0,
            b_sigma: 5.0,
            c: 5.0,
            d: 5.0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.burn_in >= self.iterations {
            return Err(Error::Config(format!(
                "burn_in {} must be smaller than iterations {}",
                self.burn_in, self.iterations
            )));
        }
        if self.thin == 0 {
            return Err(Error::Config("thin must be at least 1".into()));
        }
        let positive = [self.a_sigma, self.b_sigma, self.c, self.d]
            .into_iter()
            .chain(self.tau0_sq)
            .chain(self.tau_beta_sq)
            .all(|v| v > 0.0 && v.is_finite());
        if !positive {
            return Err(Error::Config("step sizes and prior hyperparameters must be positive".into()));
        }
        Ok(())
    }

    pub fn step_sizes(&self, l: usize, p: usize) -> (f64, f64) {
        let (t0, tb) = self.step_rule.step_sizes(l, p);
        (self.tau0_sq.unwrap_or(t0), self.tau_beta_sq.unwrap_or(tb))
    }

    pub fn retained(&self) -> usize {
        (self.iterations - self.burn_in) / self.thin
    }
}

fn block_index(block: Block) -> usize {
    match block {
        Block::Intercept => 0,
        Block::Covariate(Outcome::Missed) => 1,
        Block::Covariate(Outcome::Made) => 2,
    }
}

/// Mutable state of a single chain.
#[derive(Debug, Clone)]
pub struct ChainState {
    pub theta: ParamVector,
    pub iteration: usize,
    pub tau_sq: [f64; 3],
    pub attempted: [usize; 3],
    pub accepted: [usize; 3],
    pub nonfinite: [usize; 3],
    pub rng: ChaCha8Rng,
}

impl ChainState {
    pub fn new(theta: ParamVector, tau0_sq: f64, tau_beta_sq: f64, rng: ChaCha8Rng) -> Self {
        Self {
            theta,
            iteration: 0,
            tau_sq: [tau0_sq, tau_beta_sq, tau_beta_sq],
            attempted: [0; 3],
            accepted: [0; 3],
            nonfinite: [0; 3],
            rng,
        }
    }

    pub fn acceptance_rate(&self, block: Block) -> f64 {
        let b = block_index(block);
        if self.attempted[b] == 0 {
            0.0
        } else {
            self.accepted[b] as f64 / self.attempted[b] as f64
        }
    }
}

/// RNG for chain `stream` of run `seed`.
pub fn chain_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// One MALA update of `block`. Returns whether the proposal was accepted.
///
/// Proposals with a non-finite log density or gradient are rejected and
/// counted separately.
pub fn mala_step(state: &mut ChainState, block: Block, post: &Posterior) -> bool {
    let b = block_index(block);
    let tau2 = state.tau_sq[b];
    let tau = tau2.sqrt();
    let current = block.slice(&state.theta).to_vec();
    let (lp_cur, g_cur) = post.block_density(&state.theta, block, &current);

    let mean_fwd: Vec<f64> = current.iter().zip(&g_cur).map(|(t, g)| t + 0.5 * tau2 * g).collect();
    let proposal: Vec<f64> = mean_fwd
        .iter()
        .map(|m| {
            let e: f64 = StandardNormal.sample(&mut state.rng);
            m + tau * e
        })
        .collect();
    let u: f64 = state.rng.random();
    state.attempted[b] += 1;

    let (lp_prop, g_prop) = post.block_density(&state.theta, block, &proposal);
    if !lp_prop.is_finite() || g_prop.iter().any(|g| !g.is_finite()) {
        state.nonfinite[b] += 1;
        return false;
    }
    let sq = |x: &[f64], m: &[f64]| x.iter().zip(m).map(|(a, c)| (a - c) * (a - c)).sum::<f64>();
    let mean_bwd: Vec<f64> = proposal.iter().zip(&g_prop).map(|(t, g)| t + 0.5 * tau2 * g).collect();
    let log_q_fwd = -sq(&proposal, &mean_fwd) / (2.0 * tau2);
    let log_q_bwd = -sq(&current, &mean_bwd) / (2.0 * tau2);
    let log_ratio = lp_prop - lp_cur + log_q_bwd - log_q_fwd;

    if u.ln() < log_ratio {
        *block.slice_mut(&mut state.theta) = proposal;
        state.accepted[b] += 1;
        true
    } else {
        false
    }
}

/// Draw from `IG(shape, rate)`, density `∝ x^{-shape-1} e^{-rate/x}`.
pub fn sample_inverse_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> f64 {
    let g = Gamma::new(shape, 1.0 / rate).expect("inverse-gamma parameters must be positive");
    1.0 / g.sample(rng)
}

fn quad_form(coef: &[f64], xi: &[f64]) -> f64 {
    coef.chunks_exact(xi.len().max(1))
        .map(|run| run.iter().zip(xi).map(|(t, x)| t * t / x).sum::<f64>())
        .sum()
}

/// Shape and rate of the `σ₀²` full conditional.
pub fn sigma0_conditional(theta0: &[f64], a_sigma: f64, b_sigma: f64, xi: &[f64]) -> (f64, f64) {
    (a_sigma + 0.5 * theta0.len() as f64, b_sigma + 0.5 * quad_form(theta0, xi))
}

/// Shape and rate of the `σ_β²` full conditional, pooling all `2p` surfaces.
pub fn sigma_beta_conditional(beta0: &[f64], beta1: &[f64], c: f64, d: f64, xi: &[f64]) -> (f64, f64) {
    let n = (beta0.len() + beta1.len()) as f64;
    (c + 0.5 * n, d + 0.5 * (quad_form(beta0, xi) + quad_form(beta1, xi)))
}

pub fn gibbs_sigma0<R: Rng + ?Sized>(theta0: &[f64], a_sigma: f64, b_sigma: f64, xi: &[f64], rng: &mut R) -> f64 {
    let (shape, rate) = sigma0_conditional(theta0, a_sigma, b_sigma, xi);
    sample_inverse_gamma(shape, rate, rng)
}

pub fn gibbs_sigma_beta<R: Rng + ?Sized>(
    beta0: &[f64],
    beta1: &[f64],
    c: f64,
    d: f64,
    xi: &[f64],
    rng: &mut R,
) -> f64 {
    let (shape, rate) = sigma_beta_conditional(beta0, beta1, c, d, xi);
    sample_inverse_gamma(shape, rate, rng)
}

/// Least-squares starting value for `θ⁰`: regress `log(m_ij / |cell|)` on the
/// summed design rows `X̃_ij = Σ_t X_ij(s_ijt)` and keep the intercept block.
pub fn init_theta0(dataset: &Dataset, grid: &GridSpec, basis: &Basis) -> Result<Vec<f64>> {
    let (l, p) = (basis.len(), dataset.p());
    let n = (1 + 2 * p) * l;
    let mut ata = DMatrix::<f64>::zeros(n, n);
    let mut atb = DVector::<f64>::zeros(n);
    let area = grid.cell_area();
    for game in &dataset.games {
        let points: Vec<Point> = game.shots.iter().map(|s| s.location).collect();
        let phi = basis.eval(&points)?;
        for j in Outcome::BOTH {
            let mut sum_phi = vec![0.0; l];
            let mut count = 0usize;
            for (t, shot) in game.shots.iter().enumerate() {
                if shot.outcome == j {
                    count += 1;
                    for (a, f) in sum_phi.iter_mut().zip(phi.row(t)) {
                        *a += f;
                    }
                }
            }
            let m = if count == 0 { ZERO_COUNT_PSEUDO } else { count as f64 };
            let y = (m / area).ln();
            let row = DVector::from_vec(design_row_from_phi(&sum_phi, &game.z, j));
            ata += &row * row.transpose();
            atb += &row * y;
        }
    }
    let max_diag = (0..n).map(|i| ata[(i, i)]).fold(0.0f64, f64::max);
    let solution = match Cholesky::new(ata.clone()) {
        Some(ch) if (0..n).all(|i| ch.l_dirty()[(i, i)].powi(2) > 1e-12 * max_diag) => ch.solve(&atb),
        _ => {
            let ridged = ata + DMatrix::identity(n, n) * INIT_RIDGE;
            Cholesky::new(ridged)
                .ok_or_else(|| Error::Numerical {
                    iteration: 0,
                    block: "theta0".into(),
                    detail: "initial normal equations not positive definite after ridge".into(),
                })?
                .solve(&atb)
        }
    };
    let theta0: Vec<f64> = solution.iter().take(l).copied().collect();
    if theta0.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical {
            iteration: 0,
            block: "theta0".into(),
            detail: "non-finite initial value".into(),
        });
    }
    Ok(theta0)
}

/// Retained draws of one chain plus run metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSamples {
    pub l: usize,
    pub p: usize,
    pub draws: Vec<ParamVector>,
    pub config: SamplerConfig,
    /// Post-burn-in acceptance rate per block, ordered as [`Block::ALL`].
    pub acceptance: [f64; 3],
    /// Final step sizes (after any adaptation).
    pub step_sizes: [f64; 3],
    pub nonfinite_rejections: [usize; 3],
}

impl PosteriorSamples {
    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    /// Posterior mean of every coefficient.
    pub fn mean(&self) -> ParamVector {
        let n = self.draws.len() as f64;
        let mut acc = vec![0.0; (1 + 2 * self.p) * self.l];
        let (mut s0, mut sb) = (0.0, 0.0);
        for d in &self.draws {
            for (a, v) in acc.iter_mut().zip(d.coefficients()) {
                *a += v;
            }
            s0 += d.sigma0_sq;
            sb += d.sigma_beta_sq;
        }
        acc.iter_mut().for_each(|a| *a /= n);
        let mut mean = ParamVector::from_coefficients(&acc, self.l, self.p).expect("consistent dims");
        mean.sigma0_sq = s0 / n;
        mean.sigma_beta_sq = sb / n;
        mean
    }
}

fn check_finite(theta: &ParamVector, iteration: usize, block: &str) -> Result<()> {
    if theta.is_finite() && theta.sigma0_sq > 0.0 && theta.sigma_beta_sq > 0.0 {
        return Ok(());
    }
    Err(Error::Numerical {
        iteration,
        block: block.into(),
        detail: format!(
            "state became non-finite: sigma0_sq={}, sigma_beta_sq={}, theta={:?}",
            theta.sigma0_sq,
            theta.sigma_beta_sq,
            theta.coefficients()
        ),
    })
}

/// Runs one chain with RNG stream 0.
pub fn run_chain(dataset: &Dataset, basis: &Basis, grid: &GridSpec, config: &SamplerConfig) -> Result<PosteriorSamples> {
    run_chain_stream(dataset, basis, grid, config, 0)
}

/// Runs one chain on RNG stream `stream`; distinct streams give independent chains.
pub fn run_chain_stream(
    dataset: &Dataset,
    basis: &Basis,
    grid: &GridSpec,
    config: &SamplerConfig,
    stream: u64,
) -> Result<PosteriorSamples> {
    config.validate()?;
    let post = Posterior::new(dataset, basis, *grid)?;
    let (l, p) = (basis.len(), dataset.p());
    let mut rng = chain_rng(config.seed, stream);

    let mut theta = ParamVector::zeros(l, p);
    theta.theta0 = init_theta0(dataset, grid, basis)?;
    theta.sigma0_sq = sample_inverse_gamma(config.a_sigma, config.b_sigma, &mut rng);
    theta.sigma_beta_sq = sample_inverse_gamma(config.c, config.d, &mut rng);

    let (tau0, tau_beta) = config.step_sizes(l, p);
    let mut state = ChainState::new(theta, tau0, tau_beta, rng);
    let xi = post.eigenvalues().to_vec();

    let mut draws = Vec::with_capacity(config.retained());
    let mut post_burn = ([0usize; 3], [0usize; 3]);
    for v in 1..=config.iterations {
        state.iteration = v;
        for block in Block::ALL {
            let accepted = mala_step(&mut state, block, &post);
            let b = block_index(block);
            if config.adapt && v <= config.burn_in {
                let gain = (v as f64).powf(-0.6);
                let hit = if accepted { 1.0 } else { 0.0 };
                state.tau_sq[b] *= (gain * (hit - TARGET_ACCEPTANCE)).exp();
            }
            if v > config.burn_in {
                post_burn.0[b] += 1;
                post_burn.1[b] += usize::from(accepted);
            }
            check_finite(&state.theta, v, block.name())?;
            match block {
                Block::Intercept => {
                    state.theta.sigma0_sq =
                        gibbs_sigma0(&state.theta.theta0, config.a_sigma, config.b_sigma, &xi, &mut state.rng);
                    check_finite(&state.theta, v, "sigma0_sq")?;
                }
                Block::Covariate(Outcome::Made) => {
                    state.theta.sigma_beta_sq = gibbs_sigma_beta(
                        &state.theta.theta_beta[0],
                        &state.theta.theta_beta[1],
                        config.c,
                        config.d,
                        &xi,
                        &mut state.rng,
                    );
                    check_finite(&state.theta, v, "sigma_beta_sq")?;
                }
                Block::Covariate(Outcome::Missed) => {}
            }
        }
        if v > config.burn_in && (v - config.burn_in).is_multiple_of(config.thin) {
            draws.push(state.theta.clone());
        }
    }

    let mut acceptance = [0.0; 3];
    for b in 0..3 {
        if post_burn.0[b] > 0 {
            acceptance[b] = post_burn.1[b] as f64 / post_burn.0[b] as f64;
        }
    }
    Ok(PosteriorSamples {
        l,
        p,
        draws,
        config: config.clone(),
        acceptance,
        step_sizes: state.tau_sq,
        nonfinite_rejections: state.nonfinite,
    })
}

/// Potential scale reduction factor `R̂` over equal-length chains.
pub fn gelman_rubin(chains: &[Vec<f64>]) -> f64 {
    let m = chains.len() as f64;
    let n = chains.iter().map(Vec::len).min().unwrap_or(0);
    if chains.len() < 2 || n < 2 {
        return f64::NAN;
    }
    let nf = n as f64;
    let means: Vec<f64> = chains.iter().map(|c| c[..n].iter().sum::<f64>() / nf).collect();
    let grand = means.iter().sum::<f64>() / m;
    let between = nf / (m - 1.0) * means.iter().map(|x| (x - grand).powi(2)).sum::<f64>();
    let within = chains
        .iter()
        .zip(&means)
        .map(|(c, mu)| c[..n].iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (nf - 1.0))
        .sum::<f64>()
        / m;
    let var_hat = (nf - 1.0) / nf * within + between / nf;
    (var_hat / within).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_rules_match_closed_forms() {
        let (t0, tb) = StepRule::Joint.step_sizes(15, 2);
        assert!((t0 - 0.03 / 45f64.cbrt()).abs() < 1e-15);
        assert_eq!(t0, tb);
        let (_, tb) = StepRule::Split.step_sizes(15, 2);
        assert!((tb - 0.03 / (15.0 * 3f64.cbrt())).abs() < 1e-15);
    }

    #[test]
    fn config_validation() {
        let mut c = SamplerConfig::default();
        assert!(c.validate().is_ok());
        c.burn_in = c.iterations;
        assert!(c.validate().is_err());
        let c = SamplerConfig { tau0_sq: Some(0.0), ..SamplerConfig::default() };
        assert!(c.validate().is_err());
    }

    #[test]
    fn conditional_parameters() {
        let xi = [2.0, 1.0];
        assert_eq!(sigma0_conditional(&[0.0, 0.0], 5.0, 5.0, &xi), (6.0, 5.0));
        let (_, r1) = sigma0_conditional(&[1.0, 1.0], 5.0, 5.0, &xi);
        let (_, r2) = sigma0_conditional(&[2.0, 2.0], 5.0, 5.0, &xi);
        assert!(((r2 - 5.0) - 4.0 * (r1 - 5.0)).abs() < 1e-12);
        // p = 1, θ^β₀ = θ^β₁: increment is θᵀΞ⁻¹θ
        let beta = [0.4, -1.0];
        let (shape, rate) = sigma_beta_conditional(&beta, &beta, 5.0, 5.0, &xi);
        assert_eq!(shape, 7.0);
        assert!((rate - 5.0 - (0.16 / 2.0 + 1.0)).abs() < 1e-12);
        assert_eq!(sigma_beta_conditional(&[0.0; 6], &[0.0; 6], 5.0, 5.0, &[1.0; 3]), (11.0, 5.0));
    }

    #[test]
    fn gelman_rubin_near_one_for_iid_chains() {
        let mut rng = chain_rng(3, 0);
        let chains: Vec<Vec<f64>> =
            (0..2).map(|_| (0..2000).map(|_| StandardNormal.sample(&mut rng)).collect()).collect();
        assert!((gelman_rubin(&chains) - 1.0).abs() < 0.01);
        let shifted = vec![chains[0].clone(), chains[1].iter().map(|x| x + 3.0).collect()];
        assert!(gelman_rubin(&shifted) > 1.5);
    }
}
