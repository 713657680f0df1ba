use lgcp_core::data::{Dataset, GameRecord, GridSpec, Outcome};
use lgcp_core::evaluation::{
    npll, p_thin_split, rmse, ConstantIntensity, IntensityModel, PlugInIntensity, ScaledIntensity, NPLL_PARTITION,
};
use lgcp_core::geometry::Point;
use lgcp_core::sampler::chain_rng;
use lgcp_core::simulator::{synthetic_scenario, Scenario, Truth};
use proptest::prelude::*;

struct Offset<M> {
    inner: M,
    shift: f64,
}

impl<M: IntensityModel> IntensityModel for Offset<M> {
    fn intensity(&self, game: &GameRecord, outcome: Outcome, s: Point) -> f64 {
        self.inner.intensity(game, outcome, s) + self.shift
    }
}

fn scenario(games: usize, seed: u64) -> (Dataset, Truth, PlugInIntensity) {
    let (ds, truth) = synthetic_scenario(&Scenario::UniformTheta, games, seed).unwrap();
    let model = PlugInIntensity { basis: truth.basis().unwrap(), theta: truth.theta.clone() };
    (ds, truth, model)
}

#[test]
fn rmse_of_truth_and_offsets() {
    let (ds, _, truth) = scenario(12, 51);
    assert_eq!(rmse(&truth, &truth, &ds).unwrap(), 0.0);
    for c in [-0.75, 2.5] {
        let shifted = Offset { inner: truth.clone(), shift: c };
        let got = rmse(&shifted, &truth, &ds).unwrap();
        assert!((got - c.abs()).abs() < 1e-12, "{got}");
    }
}

#[test]
fn thinning_fraction_is_binomial() {
    let (ds, _, _) = scenario(8, 52);
    let n = ds.num_shots() as f64;
    let reps = 1000;
    let mut rng = chain_rng(52, 0);
    let mut kept = 0.0;
    for _ in 0..reps {
        let (train, test) = p_thin_split(&ds, 0.8, &mut rng).unwrap();
        assert_eq!(train.num_shots() + test.num_shots(), ds.num_shots());
        kept += train.num_shots() as f64 / n;
    }
    let mean = kept / reps as f64;
    let tol = 3.0 * (0.8 * 0.2 / n / reps as f64).sqrt();
    assert!((mean - 0.8).abs() < tol, "{mean} ± {tol}");
}

#[test]
fn near_one_retention_empties_test_side() {
    let (ds, _, _) = scenario(8, 53);
    let (train, test) = p_thin_split(&ds, 1.0 - 1e-12, &mut chain_rng(53, 0)).unwrap();
    assert_eq!(test.num_shots(), 0);
    assert_eq!(train, ds);
    assert!(p_thin_split(&ds, 1.0, &mut chain_rng(53, 0)).is_err());
    assert!(p_thin_split(&ds, 0.0, &mut chain_rng(53, 0)).is_err());
}

#[test]
fn true_intensity_beats_misspecified_on_average() {
    let (ds, truth, model) = scenario(200, 54);
    let partition = GridSpec::new(truth.region, NPLL_PARTITION, NPLL_PARTITION).unwrap();
    let integration = GridSpec::new(truth.region, 60, 60).unwrap();
    let p = 0.8;
    let (mut good, mut bad) = (0.0, 0.0);
    for rep in 0..10 {
        let (_, test) = p_thin_split(&ds, p, &mut chain_rng(54, rep)).unwrap();
        let right = ScaledIntensity { inner: model.clone(), factor: p };
        let wrong = ScaledIntensity { inner: model.clone(), factor: 4.0 * p };
        good += npll(&right, &test, p, &partition, &integration).unwrap();
        bad += npll(&wrong, &test, p, &partition, &integration).unwrap();
    }
    assert!(good < bad, "{good} vs {bad}");
}

#[test]
fn npll_is_additive_over_games() {
    let (ds, truth, model) = scenario(8, 55);
    let partition = GridSpec::new(truth.region, 5, 5).unwrap();
    let integration = GridSpec::new(truth.region, 20, 20).unwrap();
    let whole = npll(&model, &ds, 0.7, &partition, &integration).unwrap();
    let parts: f64 = ds
        .games
        .iter()
        .map(|g| {
            let single = Dataset { games: vec![g.clone()], ..ds.clone() };
            npll(&model, &single, 0.7, &partition, &integration).unwrap()
        })
        .sum();
    assert!((whole - parts).abs() < 1e-9 * whole.abs());
}

#[test]
fn npll_rejects_shots_outside_partition() {
    let (ds, truth, model) = scenario(4, 56);
    let mut small = truth.region;
    small.x_max = 0.0;
    let partition = GridSpec::new(small, 4, 4).unwrap();
    let integration = GridSpec::new(truth.region, 8, 8).unwrap();
    assert!(npll(&model, &ds, 0.8, &partition, &integration).is_err());
    assert!(npll(&ConstantIntensity([1.0, 1.0]), &ds, 1.5, &partition, &integration).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn rmse_ignores_observation_order(seed in 0u64..1000) {
        let (ds, _, truth) = scenario(8, 57);
        let est = ConstantIntensity::empirical(&ds);
        let base = rmse(&est, &truth, &ds).unwrap();
        let mut permuted = ds.clone();
        permuted.games.rotate_left(seed as usize % 8);
        for g in &mut permuted.games {
            let k = g.shots.len().max(1);
            g.shots.rotate_right(seed as usize % k);
        }
        let again = rmse(&est, &truth, &permuted).unwrap();
        prop_assert!((base - again).abs() < 1e-12 * base);
    }

    #[test]
    fn fixed_seed_gives_identical_split(seed in 0u64..1000) {
        let (ds, _, _) = scenario(4, 58);
        let a = p_thin_split(&ds, 0.8, &mut chain_rng(seed, 0)).unwrap();
        let b = p_thin_split(&ds, 0.8, &mut chain_rng(seed, 0)).unwrap();
        prop_assert_eq!(a, b);
    }
}
