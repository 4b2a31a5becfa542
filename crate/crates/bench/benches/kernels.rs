use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use drccbo_core::problems::{sir_peak, SirParams};
use drccbo_core::{
    make_grid, worst_case_expectation, AmbiguitySet, BetaMode, BoundsTable, DiscreteDistribution,
    GpPosterior, GridSpace, KernelParams, ScheduleParams,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn grid(n: usize) -> GridSpace {
    let axis = make_grid(-10.0, 10.0, n).unwrap();
    GridSpace::new(axis.clone(), axis).unwrap()
}

fn observed(n_obs: usize, rng: &mut ChaCha8Rng) -> GpPosterior {
    let g = grid(50);
    let mut gp = GpPosterior::new(KernelParams::new(1.0, 3.0, 1e-4).unwrap(), &g).unwrap();
    for _ in 0..n_obs {
        gp.add_observation(rng.random_range(0..50), rng.random_range(0..50), rng.random())
            .unwrap();
    }
    gp
}

fn worst_case(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let costs: Vec<f64> = (0..50).map(|_| rng.random_range(-1.0..1.0)).collect();
    let set = AmbiguitySet::l1(DiscreteDistribution::uniform(50).unwrap(), 0.15).unwrap();
    c.bench_function("worst_case_expectation/50", |b| {
        b.iter(|| worst_case_expectation(black_box(&costs), &set))
    });
}

fn gp_update(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let gp = observed(100, &mut rng);
    c.bench_function("gp_add_observation/50x50/100obs", |b| {
        b.iter_batched(
            || gp.clone(),
            |mut gp| gp.add_observation(7, 11, 0.5).unwrap(),
            BatchSize::LargeInput,
        )
    });
}

fn bounds(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let gp_f = observed(60, &mut rng);
    let gp_g = observed(60, &mut rng);
    let params = ScheduleParams {
        delta: 0.1,
        xi: 1e-12,
        eta: 0.0,
        alpha: 0.53,
        threshold_h: 0.5,
        beta_mode: BetaMode::Fixed {
            sqrt_beta_f: 3.0,
            sqrt_beta_g: 2.0,
        },
    };
    let set = AmbiguitySet::l1(DiscreteDistribution::uniform(50).unwrap(), 0.15).unwrap();
    c.bench_function("bounds_table/50x50", |b| {
        b.iter(|| BoundsTable::compute(&gp_f, &gp_g, (9.0, 4.0), &params, &set))
    });
}

fn sir(c: &mut Criterion) {
    let params = SirParams::default();
    c.bench_function("sir_peak", |b| b.iter(|| sir_peak(black_box(0.3), black_box(0.1), &params)));
}

criterion_group!(benches, worst_case, gp_update, bounds, sir);
criterion_main!(benches);
