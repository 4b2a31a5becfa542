//! Comparison policies: Random, US, DRBO, DRPTR and CCBO, plus the proposed
//! rule behind the same interface.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::ambiguity::{worst_case_indicator, AmbiguitySet, DiscreteDistribution};
use crate::drcc::{
    acquisition_values, argmax_by, argmin_by, select_w_simulator, select_x, BoundsTable,
    ScheduleParams, SetLabel,
};
use crate::error::{Error, Result};
use crate::gp::GpPosterior;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Proposed,
    Random,
    Us,
    Drbo,
    Drptr,
    Ccbo,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Proposed,
        Method::Random,
        Method::Us,
        Method::Drbo,
        Method::Drptr,
        Method::Ccbo,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Proposed => "proposed",
            Method::Random => "random",
            Method::Us => "us",
            Method::Drbo => "drbo",
            Method::Drptr => "drptr",
            Method::Ccbo => "ccbo",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown method '{s}'")))
    }
}

impl Serialize for Method {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Method {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Tuning knobs of the comparison methods.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    pub drptr_gamma: f64,
    pub ccbo_mc_samples: usize,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            drptr_gamma: 0.1,
            ccbo_mc_samples: 1000,
        }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.drptr_gamma >= 0.0 && self.drptr_gamma.is_finite()) {
            return Err(Error::InvalidParameter("drptr_gamma must be non-negative".into()));
        }
        if self.ccbo_mc_samples == 0 {
            return Err(Error::InvalidParameter("ccbo_mc_samples must be at least 1".into()));
        }
        Ok(())
    }
}

/// Chosen design and, in the simulator setting, environment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Selection {
    pub x: usize,
    pub w: Option<usize>,
}

/// Frozen state a policy may look at.
#[derive(Debug, Clone, Copy)]
pub struct PolicyContext<'a> {
    pub gp_f: &'a GpPosterior,
    pub gp_g: &'a GpPosterior,
    pub table: &'a BoundsTable,
    pub set: &'a AmbiguitySet,
    pub params: &'a ScheduleParams,
    pub betas: (f64, f64),
    /// Empirical law of the environments observed so far.
    pub empirical: &'a DiscreteDistribution,
    pub controllable: bool,
}

impl PolicyContext<'_> {
    fn n_x(&self) -> usize {
        self.table.len()
    }

    fn n_w(&self) -> usize {
        self.gp_f.n_w()
    }
}

pub fn select(
    method: Method,
    ctx: &PolicyContext<'_>,
    config: &BaselineConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Selection> {
    match method {
        Method::Proposed => proposed_select(ctx),
        Method::Random => Ok(random_select(ctx.n_x(), ctx.n_w(), ctx.controllable, rng)),
        Method::Us => Ok(us_select(ctx.gp_f, ctx.gp_g, ctx.n_x(), ctx.controllable, ctx.empirical)),
        Method::Drbo => Ok(drbo_select(ctx.gp_f, ctx.table, ctx.controllable)),
        Method::Drptr => Ok(drptr_select(ctx, config)),
        Method::Ccbo => Ok(ccbo_select(ctx, config, rng)),
    }
}

/// The acquisition rule over `H ∪ M`, and the variance rule for `w`.
pub fn proposed_select(ctx: &PolicyContext<'_>) -> Result<Selection> {
    let a = acquisition_values(ctx.table, ctx.params.alpha, ctx.params.xi)?;
    let x = select_x(ctx.table, &a)?;
    let w = ctx
        .controllable
        .then(|| select_w_simulator(x, ctx.gp_f, ctx.gp_g));
    Ok(Selection { x, w })
}

pub fn random_select(n_x: usize, n_w: usize, controllable: bool, rng: &mut impl Rng) -> Selection {
    if controllable {
        let k = rng.random_range(0..n_x * n_w);
        Selection {
            x: k / n_w,
            w: Some(k % n_w),
        }
    } else {
        Selection {
            x: rng.random_range(0..n_x),
            w: None,
        }
    }
}

/// Uncertainty sampling on `max{σ_f², σ_g²}`; uncontrollable runs average the
/// score over the empirical law of `w`.
pub fn us_select(
    gp_f: &GpPosterior,
    gp_g: &GpPosterior,
    n_x: usize,
    controllable: bool,
    empirical: &DiscreteDistribution,
) -> Selection {
    let n_w = gp_f.n_w();
    let score = |i: usize| gp_f.variance(i).max(gp_g.variance(i));
    if controllable {
        let k = argmax_by(0..n_x * n_w, score).expect("grid is non-empty");
        Selection {
            x: k / n_w,
            w: Some(k % n_w),
        }
    } else {
        let p = empirical.weights();
        let x = argmax_by(0..n_x, |ix| (0..n_w).map(|iw| p[iw] * score(ix * n_w + iw)).sum())
            .expect("grid is non-empty");
        Selection { x, w: None }
    }
}

/// Optimistic DR objective only; the constraint is ignored.
pub fn drbo_select(gp_f: &GpPosterior, table: &BoundsTable, controllable: bool) -> Selection {
    let x = argmax_by(0..table.len(), |i| table.rows[i].upper_f).expect("grid is non-empty");
    let w = controllable.then(|| {
        argmax_by(0..gp_f.n_w(), |iw| gp_f.variance(gp_f.flat(x, iw))).expect("grid is non-empty")
    });
    Selection { x, w }
}

pub(crate) fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

pub(crate) fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

const FAR: f64 = 40.0;

/// Sweeps the indicator family `on_w(z) = [k_w z > τ_w]` along `z ∈ ℝ` and
/// calls `visit(lo, hi, mass_on, n_on)` once per constant segment, where
/// `mass_on` is the `weights`-mass of the active indicators.
pub fn sweep_indicators(
    k: &[f64],
    tau: &[f64],
    weights: &[f64],
    mut visit: impl FnMut(f64, f64, f64, usize),
) {
    let mut mass = 0.0;
    let mut n_on = 0usize;
    // (breakpoint, turns on?, index)
    let mut events: Vec<(f64, bool, usize)> = Vec::with_capacity(k.len());
    for w in 0..k.len() {
        if k[w] == 0.0 {
            if tau[w] < 0.0 {
                mass += weights[w];
                n_on += 1;
            }
        } else {
            let b = tau[w] / k[w];
            // beyond ±FAR the Gaussian tail mass is below f64 resolution
            let starts_on = if b < -FAR {
                k[w] > 0.0
            } else if b > FAR {
                k[w] < 0.0
            } else {
                events.push((b, k[w] > 0.0, w));
                k[w] < 0.0
            };
            if starts_on {
                mass += weights[w];
                n_on += 1;
            }
        }
    }
    events.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut lo = f64::NEG_INFINITY;
    let mut e = 0;
    while e < events.len() {
        let b = events[e].0;
        if b > lo {
            visit(lo, b, mass, n_on);
        }
        while e < events.len() && events[e].0 == b {
            let (_, on, w) = events[e];
            if on {
                mass += weights[w];
                n_on += 1;
            } else {
                mass -= weights[w];
                n_on -= 1;
            }
            e += 1;
        }
        lo = b;
    }
    visit(lo, f64::INFINITY, mass, n_on);
}

fn gaussian_mass(lo: f64, hi: f64) -> f64 {
    (std_normal_cdf(hi) - std_normal_cdf(lo)).max(0.0)
}

/// One-step look-ahead of `g` at the points `targets` after a hypothetical
/// observation at flat index `c`: with `y* = μ(c) + s Z`, the posterior mean at
/// `j` becomes `μ(j) + k_j Z` and the standard deviation `σ₊(j)`.
fn one_step(gp: &GpPosterior, c: usize, targets: &[usize]) -> (Vec<f64>, Vec<f64>) {
    let cov: Vec<f64> = targets.iter().map(|&j| gp.covariance(j, c)).collect();
    one_step_from(gp, c, targets, &cov)
}

fn one_step_from(gp: &GpPosterior, c: usize, targets: &[usize], cov: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let s = (gp.variance(c) + gp.kernel().noise_variance).sqrt();
    let mut k = Vec::with_capacity(targets.len());
    let mut sd = Vec::with_capacity(targets.len());
    for (&j, &cj) in targets.iter().zip(cov) {
        let kj = if s > 0.0 { cj / s } else { 0.0 };
        k.push(kj);
        sd.push((gp.variance(j) - kj * kj).max(0.0).sqrt());
    }
    (k, sd)
}

fn m_targets(ctx: &PolicyContext<'_>) -> Vec<usize> {
    let n_w = ctx.n_w();
    ctx.table
        .members(SetLabel::M)
        .flat_map(|ix| (0..n_w).map(move |iw| ix * n_w + iw))
        .collect()
}

/// `(a_t, RMILE_t)` at a candidate, given the look-ahead slopes and deviations
/// over `M × Ω` in flat order.
fn drptr_terms(ctx: &PolicyContext<'_>, targets: &[usize], k: &[f64], sd: &[f64]) -> (f64, f64) {
    let n_w = ctx.n_w();
    let root_beta = ctx.betas.1.max(0.0).sqrt();
    let h = ctx.params.threshold_h;
    let q = ctx.set.reference().weights();
    let radius = ctx.set.radius();
    let mut gain = 0.0;
    let mut rmile = 0.0;
    let mut tau = vec![0.0; n_w];
    for start in (0..targets.len()).step_by(n_w) {
        let ks = &k[start..start + n_w];
        for w in 0..n_w {
            let n = start + w;
            let base = -ctx.gp_g.mean(targets[n]) + root_beta * sd[n];
            tau[w] = h - ctx.params.eta + base;
            let t_g = h + base;
            let z = if ks[w] == 0.0 {
                -t_g * f64::INFINITY
            } else {
                -t_g / ks[w].abs()
            };
            rmile += if z > FAR {
                1.0
            } else if z < -FAR || z.is_nan() {
                0.0
            } else {
                std_normal_cdf(z)
            };
        }
        sweep_indicators(ks, &tau, q, |lo, hi, mass, n_on| {
            if worst_case_indicator(mass, n_on == n_w, radius) > ctx.params.alpha {
                gain += gaussian_mass(lo, hi);
            }
        });
    }
    (gain, rmile)
}

/// Exact `Σ_{x ∈ M} P_{y*}(l^G(x | c, y*) > α)` for a candidate flat index `c`.
pub fn drptr_classification_gain(ctx: &PolicyContext<'_>, c: usize) -> f64 {
    let targets = m_targets(ctx);
    let (k, sd) = one_step(ctx.gp_g, c, &targets);
    drptr_terms(ctx, &targets, &k, &sd).0
}

/// Analytic `Σ_{(x,w) ∈ M × Ω} P_{y*}(l^g(x, w | c, y*) > h)`.
pub fn drptr_rmile(ctx: &PolicyContext<'_>, c: usize) -> f64 {
    let targets = m_targets(ctx);
    let (k, sd) = one_step(ctx.gp_g, c, &targets);
    drptr_terms(ctx, &targets, &k, &sd).1
}

/// `max{a_t, γ RMILE_t}` at every point of `X × Ω`, flat order.
pub fn drptr_scores(ctx: &PolicyContext<'_>, config: &BaselineConfig) -> Vec<f64> {
    let n = ctx.gp_g.len();
    let targets = m_targets(ctx);
    if targets.is_empty() {
        return vec![0.0; n];
    }
    let all: Vec<usize> = (0..n).collect();
    let cov = ctx.gp_g.cross_covariance(&targets, &all);
    (0..n)
        .into_par_iter()
        .map(|c| {
            let (k, sd) = one_step_from(ctx.gp_g, c, &targets, cov.column(c).as_slice());
            let (gain, rmile) = drptr_terms(ctx, &targets, &k, &sd);
            gain.max(config.drptr_gamma * rmile)
        })
        .collect()
}

pub fn drptr_select(ctx: &PolicyContext<'_>, config: &BaselineConfig) -> Selection {
    let n_w = ctx.n_w();
    let scores = drptr_scores(ctx, config);
    if ctx.controllable {
        let k = argmax_by(0..scores.len(), |i| scores[i]).expect("grid is non-empty");
        Selection {
            x: k / n_w,
            w: Some(k % n_w),
        }
    } else {
        let p = ctx.empirical.weights();
        let x = argmax_by(0..ctx.n_x(), |ix| {
            (0..n_w).map(|iw| p[iw] * scores[ix * n_w + iw]).sum()
        })
        .expect("grid is non-empty");
        Selection { x, w: None }
    }
}

/// Mean and variance of `Z^F(x) = Σ_w f(x, w) p(w)` under the posterior.
pub fn z_f_moments(ix: usize, gp_f: &GpPosterior, p: &[f64]) -> (f64, f64) {
    let mean: f64 = gp_f.slice_mean(ix).iter().zip(p).map(|(m, w)| m * w).sum();
    let cov = gp_f.slice_covariance(ix);
    let pv = DVector::from_column_slice(p);
    let var = (pv.transpose() * &cov * &pv)[(0, 0)];
    (mean, var.max(0.0))
}

/// `E[max{Z − c, 0}]` for `Z ~ N(mean, var)`.
pub fn expected_improvement(mean: f64, var: f64, c: f64) -> f64 {
    let sd = var.max(0.0).sqrt();
    if sd == 0.0 {
        return (mean - c).max(0.0);
    }
    let z = (mean - c) / sd;
    (mean - c) * std_normal_cdf(z) + sd * std_normal_pdf(z)
}

/// `E[Z^G(x)] = Σ_w Φ((μ_g − h)/σ_g) p(w)`.
pub fn expected_feasibility(ix: usize, gp_g: &GpPosterior, h: f64, p: &[f64]) -> f64 {
    (0..gp_g.n_w())
        .map(|iw| {
            let j = gp_g.flat(ix, iw);
            let (m, sd) = (gp_g.mean(j), gp_g.std_dev(j));
            let prob = if sd > 0.0 {
                std_normal_cdf((m - h) / sd)
            } else if m > h {
                1.0
            } else {
                0.0
            };
            prob * p[iw]
        })
        .sum()
}

/// Joint draws of `g` over one environment slice.
pub struct SliceSampler {
    mean: DVector<f64>,
    factor: DMatrix<f64>,
}

impl SliceSampler {
    pub fn new(ix: usize, gp: &GpPosterior) -> Self {
        let cov = gp.slice_covariance(ix);
        let eig = SymmetricEigen::new(cov);
        let mut factor = eig.eigenvectors;
        for (j, lambda) in eig.eigenvalues.iter().enumerate() {
            let s = lambda.max(0.0).sqrt();
            factor.column_mut(j).scale_mut(s);
        }
        SliceSampler {
            mean: DVector::from_column_slice(gp.slice_mean(ix)),
            factor,
        }
    }

    pub fn sample(&self, rng: &mut impl Rng) -> DVector<f64> {
        let z = DVector::from_fn(self.mean.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
        &self.mean + &self.factor * z
    }

    /// `count` draws as the columns of one matrix.
    pub fn sample_many(&self, count: usize, rng: &mut impl Rng) -> DMatrix<f64> {
        let n = self.mean.len();
        let z = DMatrix::from_fn(n, count, |_, _| rng.sample::<f64, _>(StandardNormal));
        let mut out = &self.factor * z;
        for mut col in out.column_iter_mut() {
            col += &self.mean;
        }
        out
    }
}

/// Monte-Carlo `P(Σ_w 1[g(x, w) > h] p(w) > α)`.
pub fn feasibility_probability_mc(
    ix: usize,
    gp_g: &GpPosterior,
    h: f64,
    alpha: f64,
    p: &[f64],
    samples: usize,
    rng: &mut impl Rng,
) -> f64 {
    let draws = SliceSampler::new(ix, gp_g).sample_many(samples, rng);
    let hits = draws
        .column_iter()
        .filter(|g| g.iter().zip(p).filter(|(v, _)| **v > h).map(|(_, w)| w).sum::<f64>() > alpha)
        .count();
    hits as f64 / samples as f64
}

/// Incumbent for the feasible improvement: best expected objective among
/// designs expected to be feasible, else the most-likely-feasible design's.
pub fn ccbo_incumbent(z_f_means: &[f64], feasibility: &[f64], alpha: f64) -> f64 {
    let feasible = (0..z_f_means.len()).filter(|&i| feasibility[i] > alpha);
    match argmax_by(feasible, |i| z_f_means[i]) {
        Some(i) => z_f_means[i],
        None => {
            let i = argmax_by(0..feasibility.len(), |i| feasibility[i]).expect("grid is non-empty");
            z_f_means[i]
        }
    }
}

/// `CCBO_t(x) = EI(x) · P(Z^G(x) > α)` for every design; also returns the EI
/// factors.
pub fn ccbo_values(
    ctx: &PolicyContext<'_>,
    config: &BaselineConfig,
    seed: u64,
) -> (Vec<f64>, Vec<f64>) {
    let p = ctx.set.reference().weights();
    let h = ctx.params.threshold_h;
    let moments: Vec<(f64, f64)> = (0..ctx.n_x()).map(|ix| z_f_moments(ix, ctx.gp_f, p)).collect();
    let feas: Vec<f64> = (0..ctx.n_x()).map(|ix| expected_feasibility(ix, ctx.gp_g, h, p)).collect();
    let means: Vec<f64> = moments.iter().map(|m| m.0).collect();
    let c_feas = ccbo_incumbent(&means, &feas, ctx.params.alpha);
    let ei: Vec<f64> = moments
        .iter()
        .map(|&(m, v)| expected_improvement(m, v, c_feas))
        .collect();
    let values = (0..ctx.n_x())
        .into_par_iter()
        .map(|ix| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(ix as u64);
            let prob = feasibility_probability_mc(
                ix,
                ctx.gp_g,
                h,
                ctx.params.alpha,
                p,
                config.ccbo_mc_samples,
                &mut rng,
            );
            ei[ix] * prob
        })
        .collect();
    (values, ei)
}

/// Variance over `y*` of the feasibility probability at `ix` after a
/// hypothetical `g` observation at `(ix, w_star)`.
///
/// Base draws `g₀` of the slice and a noisy `y₀ = g₀(w*) + ε` are turned into
/// conditional draws by `g₀ + k (Z − Z₀)` with `y* = μ(w*) + s Z`, so each
/// base draw's feasibility is a step function of `Z`; a sweep evaluates it
/// against every `Z` sample at once.
pub fn one_step_feasibility_variance(
    ix: usize,
    w_star: usize,
    gp_g: &GpPosterior,
    base: &DMatrix<f64>,
    noise: &[f64],
    z_samples_sorted: &[f64],
    h: f64,
    alpha: f64,
    p: &[f64],
) -> f64 {
    let n_w = gp_g.n_w();
    let c = gp_g.flat(ix, w_star);
    let targets: Vec<usize> = (0..n_w).map(|iw| gp_g.flat(ix, iw)).collect();
    let s = (gp_g.variance(c) + gp_g.kernel().noise_variance).sqrt();
    let (k, _) = one_step(gp_g, c, &targets);
    let m = z_samples_sorted.len();
    let mut diff = vec![0i64; m + 1];
    let mut tau = vec![0.0; n_w];
    for (g0, eps) in base.column_iter().zip(noise) {
        let z0 = (g0[w_star] + eps - gp_g.mean(c)) / s;
        for w in 0..n_w {
            tau[w] = h - g0[w] + k[w] * z0;
        }
        sweep_indicators(&k, &tau, p, |lo, hi, mass, _| {
            if mass > alpha {
                let a = z_samples_sorted.partition_point(|&z| z <= lo);
                let b = z_samples_sorted.partition_point(|&z| z < hi);
                if a < b {
                    diff[a] += 1;
                    diff[b] -= 1;
                }
            }
        });
    }
    let n = base.ncols() as f64;
    let mut run = 0i64;
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for d in diff.iter().take(m) {
        run += d;
        let prob = run as f64 / n;
        sum += prob;
        sum_sq += prob * prob;
    }
    let mean = sum / m as f64;
    (sum_sq / m as f64 - mean * mean).max(0.0)
}

pub fn ccbo_select(ctx: &PolicyContext<'_>, config: &BaselineConfig, rng: &mut ChaCha8Rng) -> Selection {
    let seed = rng.next_u64();
    let (values, ei) = ccbo_values(ctx, config, seed);
    let x = argmax_by(0..values.len(), |i| values[i]).expect("grid is non-empty");
    if !ctx.controllable {
        return Selection { x, w: None };
    }
    let p = ctx.set.reference().weights();
    let sampler = SliceSampler::new(x, ctx.gp_g);
    let noise_sd = ctx.gp_g.kernel().noise_variance.sqrt();
    let samples = config.ccbo_mc_samples;
    let base = sampler.sample_many(samples, rng);
    let noise: Vec<f64> = (0..samples)
        .map(|_| noise_sd * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let mut z: Vec<f64> = (0..samples).map(|_| rng.sample(StandardNormal)).collect();
    z.sort_by(f64::total_cmp);
    let n_w = ctx.n_w();
    let variances: Vec<f64> = (0..n_w)
        .into_par_iter()
        .map(|w| {
            let v = one_step_feasibility_variance(
                x,
                w,
                ctx.gp_g,
                &base,
                &noise,
                &z,
                ctx.params.threshold_h,
                ctx.params.alpha,
                p,
            );
            ei[x] * ei[x] * v
        })
        .collect();
    let w = argmin_by(0..n_w, |i| variances[i]).expect("grid is non-empty");
    Selection { x, w: Some(w) }
}
