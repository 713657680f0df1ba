use lgcp_core::basis::{Basis, DomainMap, KernelParams, Truncation};
use lgcp_core::data::{Dataset, Encoding, GameRecord, GridSpec, Outcome, ParamVector, ShotEvent};
use lgcp_core::geometry::{Point, Region};
use lgcp_core::likelihood::{Block, Posterior};
use lgcp_core::sampler::{
    chain_rng, gelman_rubin, gibbs_sigma0, gibbs_sigma_beta, init_theta0, mala_step, run_chain, run_chain_stream,
    sigma0_conditional, sigma_beta_conditional, ChainState, SamplerConfig,
};
use lgcp_core::simulator::{synthetic_scenario, Scenario};
use statrs::distribution::{ContinuousCDF, Gamma};

fn unit_basis(l: usize) -> Basis {
    Basis::build(KernelParams::new(1.0, 1.0).unwrap(), Truncation::Fixed(l), DomainMap::identity()).unwrap()
}

fn unit_grid() -> GridSpec {
    GridSpec::new(Region::unit_square_centered(), 20, 20).unwrap()
}

/// One-sample Kolmogorov–Smirnov statistic.
fn ks_statistic(mut draws: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    draws.sort_by(f64::total_cmp);
    let n = draws.len() as f64;
    draws
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max((i as f64 + 1.0) / n - f)
        })
        .fold(0.0, f64::max)
}

/// `1 − F_Gamma(1/x)`, the inverse-gamma CDF.
fn inverse_gamma_cdf(shape: f64, rate: f64) -> impl Fn(f64) -> f64 {
    let g = Gamma::new(shape, rate).unwrap();
    move |x| 1.0 - g.cdf(1.0 / x)
}

const KS_CRITICAL_01: f64 = 1.628;

#[test]
fn sigma0_draws_pass_ks() {
    let xi = unit_basis(3).eigenvalues().to_vec();
    let theta0 = [0.7, -1.2, 0.4];
    let (shape, rate) = sigma0_conditional(&theta0, 5.0, 5.0, &xi);
    let mut rng = chain_rng(21, 0);
    let draws: Vec<f64> = (0..10_000).map(|_| gibbs_sigma0(&theta0, 5.0, 5.0, &xi, &mut rng)).collect();
    let d = ks_statistic(draws, inverse_gamma_cdf(shape, rate));
    assert!(d < KS_CRITICAL_01 / 100.0, "D = {d}");
}

#[test]
fn sigma_beta_draws_pass_ks() {
    let xi = unit_basis(3).eigenvalues().to_vec();
    let beta0 = [0.3, -0.2, 0.9, 0.1, 0.0, -0.5, 1.1, 0.2, -0.3];
    let beta1 = [-0.4, 0.6, 0.0, 0.2, 0.8, -0.1, 0.0, 0.3, 0.5];
    let (shape, rate) = sigma_beta_conditional(&beta0, &beta1, 5.0, 5.0, &xi);
    assert_eq!(shape, 5.0 + 9.0);
    let mut rng = chain_rng(22, 0);
    let draws: Vec<f64> = (0..10_000).map(|_| gibbs_sigma_beta(&beta0, &beta1, 5.0, 5.0, &xi, &mut rng)).collect();
    let d = ks_statistic(draws, inverse_gamma_cdf(shape, rate));
    assert!(d < KS_CRITICAL_01 / 100.0, "D = {d}");
}

#[test]
fn ks_detects_wrong_rate() {
    let xi = [1.0, 1.0, 1.0];
    let mut rng = chain_rng(23, 0);
    let draws: Vec<f64> = (0..10_000).map(|_| gibbs_sigma0(&[0.0; 3], 5.0, 5.0, &xi, &mut rng)).collect();
    assert!(ks_statistic(draws, inverse_gamma_cdf(6.5, 6.0)) > KS_CRITICAL_01 / 100.0);
}

#[test]
fn sigma0_mean_at_zero_theta() {
    let xi = unit_basis(3).eigenvalues().to_vec();
    let (a, b, l) = (5.0, 5.0, 3.0);
    let mut rng = chain_rng(24, 0);
    let n = 100_000;
    let draws: Vec<f64> = (0..n).map(|_| gibbs_sigma0(&[0.0; 3], a, b, &xi, &mut rng)).collect();
    let shape = a + l / 2.0;
    let mean = b / (shape - 1.0);
    let sd = (b * b / ((shape - 1.0).powi(2) * (shape - 2.0))).sqrt();
    let got = draws.iter().sum::<f64>() / n as f64;
    assert!((got - mean).abs() < 3.0 * sd / (n as f64).sqrt(), "{got} vs {mean}");
}

#[test]
fn prior_only_chain_recovers_prior_moments() {
    let basis = unit_basis(3);
    let post = Posterior::prior_only(&basis, 1, unit_grid()).unwrap();
    let mut theta = ParamVector::zeros(3, 1);
    theta.sigma0_sq = 1.5;
    theta.sigma_beta_sq = 0.7;
    let mut state = ChainState::new(theta, 0.3, 0.15, chain_rng(25, 0));
    let n = 100_000;
    let mut sums = [[0.0; 3]; 3];
    let mut squares = [[0.0; 3]; 3];
    for _ in 0..n {
        for (b, block) in Block::ALL.into_iter().enumerate() {
            mala_step(&mut state, block, &post);
            for (l, v) in block.slice(&state.theta).iter().enumerate() {
                sums[b][l] += v;
                squares[b][l] += v * v;
            }
        }
    }
    let xi = basis.eigenvalues();
    for (b, sigma_sq) in [1.5, 0.7, 0.7].into_iter().enumerate() {
        for l in 0..3 {
            let target = sigma_sq * xi[l];
            let mean = sums[b][l] / n as f64;
            let var = squares[b][l] / n as f64 - mean * mean;
            assert!((var / target - 1.0).abs() < 0.1, "block {b} l {l}: {var} vs {target}");
            assert!(mean.abs() < 0.1 * target.sqrt(), "block {b} l {l}: mean {mean}");
        }
    }
    for block in Block::ALL {
        let rate = state.acceptance_rate(block);
        assert!(rate > 0.3 && rate < 1.0, "{rate}");
    }
}

fn small_synthetic() -> Dataset {
    synthetic_scenario(&Scenario::UniformTheta, 16, 31).unwrap().0
}

fn quick_config(iterations: usize, burn_in: usize) -> SamplerConfig {
    SamplerConfig { iterations, burn_in, adapt: true, seed: 9, ..SamplerConfig::default() }
}

#[test]
fn tiny_steps_are_almost_always_accepted() {
    let ds = small_synthetic();
    let basis = unit_basis(3);
    let post = Posterior::new(&ds, &basis, unit_grid()).unwrap();
    let mut theta = ParamVector::zeros(3, 3);
    theta.theta0 = init_theta0(&ds, &unit_grid(), &basis).unwrap();
    let mut state = ChainState::new(theta, 1e-12, 1e-12, chain_rng(26, 0));
    for _ in 0..300 {
        for block in Block::ALL {
            mala_step(&mut state, block, &post);
        }
    }
    for block in Block::ALL {
        assert!(state.acceptance_rate(block) > 0.99);
    }
}

#[test]
fn chains_are_deterministic() {
    let ds = small_synthetic();
    let basis = unit_basis(3);
    let cfg = quick_config(300, 100);
    let a = run_chain(&ds, &basis, &unit_grid(), &cfg).unwrap();
    let b = run_chain(&ds, &basis, &unit_grid(), &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.len(), 200);
    let other = run_chain(&ds, &basis, &unit_grid(), &SamplerConfig { seed: 10, ..cfg }).unwrap();
    assert_ne!(a.draws, other.draws);
}

#[test]
fn one_past_burn_in_keeps_one_draw() {
    let ds = small_synthetic();
    let cfg = SamplerConfig { iterations: 51, burn_in: 50, ..SamplerConfig::default() };
    let s = run_chain(&ds, &unit_basis(3), &unit_grid(), &cfg).unwrap();
    assert_eq!(s.len(), 1);
    let thinned = SamplerConfig { iterations: 150, burn_in: 50, thin: 7, ..cfg };
    assert_eq!(run_chain(&ds, &unit_basis(3), &unit_grid(), &thinned).unwrap().len(), 100 / 7);
}

#[test]
fn independent_chains_agree() {
    let ds = synthetic_scenario(&Scenario::UniformTheta, 40, 32).unwrap().0;
    let basis = unit_basis(3);
    let cfg = quick_config(2500, 1000);
    let chains: Vec<Vec<f64>> = [(1u64, 0u64), (2, 1)]
        .iter()
        .map(|&(seed, stream)| {
            let c = SamplerConfig { seed, ..cfg.clone() };
            let s = run_chain_stream(&ds, &basis, &unit_grid(), &c, stream).unwrap();
            s.draws.iter().map(|d| d.theta0[0]).collect()
        })
        .collect();
    let r = gelman_rubin(&chains);
    assert!(r < 1.1, "R-hat {r}");
}

#[test]
fn acceptance_counters_bounded_by_iterations() {
    let ds = small_synthetic();
    let s = run_chain(&ds, &unit_basis(3), &unit_grid(), &quick_config(200, 100)).unwrap();
    assert!(s.acceptance.iter().all(|&a| (0.0..=1.0).contains(&a)));
    assert!(s.step_sizes.iter().all(|&t| t > 0.0 && t.is_finite()));
}

fn game(id: &str, shots: &[(f64, f64, bool)]) -> GameRecord {
    GameRecord {
        game_id: id.into(),
        home: false,
        strong: false,
        z: vec![],
        shots: shots
            .iter()
            .map(|&(x, y, m)| ShotEvent { location: Point::new(x, y), outcome: Outcome::from_flag(m) })
            .collect(),
    }
}

#[test]
fn init_for_identical_games_matches_single_game_solve() {
    let basis = unit_basis(2);
    let grid = unit_grid();
    let shots = [(0.1, 0.2, true), (-0.5, 0.3, false), (0.4, -0.6, true), (0.0, 0.9, false), (0.7, 0.7, false)];
    let region = Region::unit_square_centered();
    let many = Dataset::new((0..5).map(|i| game(&format!("g{i}"), &shots)).collect(), region, Encoding::Baseline, None).unwrap();
    let got = init_theta0(&many, &grid, &basis).unwrap();

    // one game gives a square 2x2 system, solved by Cramer's rule
    let mut rows = [[0.0; 2]; 2];
    let mut counts = [0.0; 2];
    for &(x, y, made) in &shots {
        let j = usize::from(made);
        let phi = basis.eval_point(Point::new(x, y));
        rows[j][0] += phi[0];
        rows[j][1] += phi[1];
        counts[j] += 1.0;
    }
    let y: Vec<f64> = counts.iter().map(|m| (m / grid.cell_area()).ln()).collect();
    let det = rows[0][0] * rows[1][1] - rows[0][1] * rows[1][0];
    let want = [(y[0] * rows[1][1] - rows[0][1] * y[1]) / det, (rows[0][0] * y[1] - rows[1][0] * y[0]) / det];
    for (g, w) in got.iter().zip(&want) {
        assert!((g - w).abs() < 1e-8 * w.abs().max(1.0), "{got:?} vs {want:?}");
    }
}

#[test]
fn init_handles_zero_counts_and_tiny_data() {
    let basis = unit_basis(3);
    let region = Region::unit_square_centered();
    let one = Dataset::new(vec![game("solo", &[(0.2, 0.1, true)])], region, Encoding::Baseline, None).unwrap();
    let t = init_theta0(&one, &unit_grid(), &basis).unwrap();
    assert!(t.iter().all(|v| v.is_finite()));
    let some_empty = Dataset::new(
        vec![game("a", &[(0.2, 0.1, true), (0.3, -0.4, true)]), game("b", &[]), game("c", &[(-0.6, 0.5, false)])],
        region,
        Encoding::Baseline,
        None,
    )
    .unwrap();
    assert!(init_theta0(&some_empty, &unit_grid(), &basis).unwrap().iter().all(|v| v.is_finite()));
}

#[test]
fn acceptance_rates_on_synthetic_scenario() {
    let (ds, truth) = synthetic_scenario(&Scenario::UniformTheta, 200, 3).unwrap();
    let basis = truth.basis().unwrap();
    let grid = GridSpec::new(truth.region, 40, 40).unwrap();
    let adapted = run_chain(&ds, &basis, &grid, &quick_config(1200, 600)).unwrap();
    let fixed = run_chain(&ds, &basis, &grid, &SamplerConfig { adapt: false, ..quick_config(1200, 600) }).unwrap();
    eprintln!("acceptance adapted {:?} fixed {:?}", adapted.acceptance, fixed.acceptance);
    assert!(adapted.acceptance.iter().all(|&a| a > 0.1 && a < 0.9));
    assert!(fixed.acceptance.iter().all(|&a| (0.0..=1.0).contains(&a)));
}
