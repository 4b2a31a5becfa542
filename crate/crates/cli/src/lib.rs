//! Self-checks shared by the `drccbo oracle-check` command and the acceptance
//! suite.

use drccbo_core::{
    make_grid, worst_case_expectation, AmbiguitySet, DiscreteDistribution, GpPosterior, GridSpace,
    KernelParams, Observation,
};
use drccbo_oracle::{dense_posterior, l1_ball_min_expectation};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub name: &'static str,
    pub cases: usize,
    pub failures: usize,
    pub max_error: f64,
    pub tolerance: f64,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

/// Greedy worst-case expectation against the simplex LP on random L1 balls
/// (`|Ω| ≤ 20`, `|c| ≤ 10`, radius in `[0, 2.5]`).
pub fn lp_oracle_check(instances: usize, seed: u64) -> CheckReport {
    let tolerance = 1e-9;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = 0;
    let mut max_error: f64 = 0.0;
    for _ in 0..instances {
        let n = rng.random_range(1..=20);
        let costs: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
        // sparse references are the interesting corner, so zero some masses
        let masses: Vec<f64> = (0..n)
            .map(|_| if rng.random_bool(0.2) { 0.0 } else { rng.random::<f64>() })
            .collect();
        let masses = if masses.iter().sum::<f64>() > 0.0 { masses } else { vec![1.0; n] };
        let reference = DiscreteDistribution::from_masses(&masses).expect("positive masses");
        let radius = rng.random_range(0.0..2.5);
        let set = AmbiguitySet::l1(reference, radius).expect("non-negative radius");
        let greedy = worst_case_expectation(&costs, &set);
        let err = match l1_ball_min_expectation(&costs, set.reference().weights(), radius) {
            Ok(lp) => (greedy - lp.objective).abs(),
            Err(_) => f64::INFINITY,
        };
        max_error = max_error.max(err);
        if !(err <= tolerance) {
            failures += 1;
        }
    }
    CheckReport {
        name: "worst-case expectation vs simplex LP",
        cases: instances,
        failures,
        max_error,
        tolerance,
    }
}

/// Incremental GP posteriors against a dense solve, and against a rebuild
/// from the shuffled observation list, on random grids up to 20×20 with up
/// to 100 observations.
pub fn gp_rebuild_check(configs: usize, seed: u64) -> CheckReport {
    let tolerance = 1e-8;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = 0;
    let mut max_error: f64 = 0.0;
    for _ in 0..configs {
        let nx = rng.random_range(2..=20);
        let nw = rng.random_range(2..=20);
        let grid = GridSpace::new(
            make_grid(-3.0, 3.0, nx).expect("valid grid"),
            make_grid(-2.0, 2.0, nw).expect("valid grid"),
        )
        .expect("valid grid");
        let kernel = KernelParams::new(
            rng.random_range(0.5..2.0),
            rng.random_range(0.5..5.0),
            10f64.powf(rng.random_range(-3.0..-1.0)),
        )
        .expect("positive kernel");
        let t = rng.random_range(0..=100);
        let mut gp = GpPosterior::new(kernel, &grid).expect("valid kernel");
        for _ in 0..t {
            let (ix, iw) = (rng.random_range(0..nx), rng.random_range(0..nw));
            gp.add_observation(ix, iw, rng.random_range(-2.0..2.0)).expect("noise keeps the Gram matrix definite");
        }
        let pts = grid.points();
        let train: Vec<(f64, f64)> = gp.observations().iter().map(|o| grid.point(o.x_index, o.w_index)).collect();
        let y: Vec<f64> = gp.observations().iter().map(|o| o.value).collect();
        let k = |a: &(f64, f64), b: &(f64, f64)| kernel.eval(*a, *b);
        let mut err: f64 = match dense_posterior(k, kernel.noise_variance, &train, &y, &pts) {
            Some(dense) => (0..pts.len())
                .map(|i| {
                    let (m, v) = gp.posterior_at(pts[i]);
                    (m - dense.mean[i])
                        .abs()
                        .max((v - dense.variance(i).max(0.0)).abs())
                        .max((gp.mean(i) - dense.mean[i]).abs())
                })
                .fold(0.0, f64::max),
            None => f64::INFINITY,
        };
        let mut shuffled: Vec<Observation> = gp.observations().to_vec();
        shuffled.shuffle(&mut rng);
        match GpPosterior::from_observations(kernel, &grid, &shuffled) {
            Ok(rebuilt) => {
                for i in 0..pts.len() {
                    err = err
                        .max((rebuilt.mean(i) - gp.mean(i)).abs())
                        .max((rebuilt.variance(i) - gp.variance(i)).abs());
                }
            }
            Err(_) => err = f64::INFINITY,
        }
        max_error = max_error.max(err);
        if !(err <= tolerance) {
            failures += 1;
        }
    }
    CheckReport {
        name: "GP posterior vs dense solve and rebuild",
        cases: configs,
        failures,
        max_error,
        tolerance,
    }
}
