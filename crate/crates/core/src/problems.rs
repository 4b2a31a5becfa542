//! Benchmark problems: the synthetic bump/quadratic pair, the SIR epidemic
//! risk cases, true environment distributions, exact DRCC optima and the
//! utility-gap metric.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ambiguity::{worst_case_expectation, AmbiguitySet, DiscreteDistribution};
use crate::drcc::argmax_by;
use crate::error::{Error, Result};
pub use crate::grid::{make_grid, GridSpace};

/// Sum of three Gaussian bumps in `x` plus the same three in `w`.
pub fn synthetic_f(x: f64, w: f64) -> f64 {
    bumps(x) + bumps(w)
}

fn bumps(v: f64) -> f64 {
    (-v * v / 4.0).exp() + 0.6 * (-(v - 8.0).powi(2) / 3.0).exp() + 0.3 * (-(v + 9.0).powi(2) / 5.0).exp()
}

/// Matyas-type quadratic `0.26 (x² + w²) − 0.48 x w`.
pub fn synthetic_g(x: f64, w: f64) -> f64 {
    0.26 * (x * x + w * w) - 0.48 * (x * w)
}

fn normal_pdf(x: f64, mean: f64, variance: f64) -> f64 {
    let z = x - mean;
    (-z * z / (2.0 * variance)).exp() / (2.0 * std::f64::consts::PI * variance).sqrt()
}

/// `0.5 N(−5, 10) + 0.5 N(5, 10)` evaluated on the grid and normalized.
pub fn true_mixture_distribution(w_values: &[f64]) -> Result<DiscreteDistribution> {
    if w_values.is_empty() {
        return Err(Error::Empty("environment grid"));
    }
    let masses: Vec<f64> = w_values
        .iter()
        .map(|&w| 0.5 * normal_pdf(w, -5.0, 10.0) + 0.5 * normal_pdf(w, 5.0, 10.0))
        .collect();
    DiscreteDistribution::from_masses(&masses)
}

/// Forward-Euler SIR settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SirParams {
    pub s0: f64,
    pub i0: f64,
    pub r0: f64,
    pub dt: f64,
    pub t_max: f64,
}

impl Default for SirParams {
    fn default() -> Self {
        SirParams {
            s0: 990.0,
            i0: 10.0,
            r0: 0.0,
            dt: 0.005,
            t_max: 15.0,
        }
    }
}

impl SirParams {
    pub fn steps(&self) -> usize {
        (self.t_max / self.dt).round() as usize
    }
}

/// Compartment sizes at every time step (`steps + 1` entries).
#[derive(Debug, Clone)]
pub struct SirTrajectory {
    pub s: Vec<f64>,
    pub i: Vec<f64>,
    pub r: Vec<f64>,
}

pub fn sir_trajectory(beta_contact: f64, gamma_isolation: f64, params: &SirParams) -> SirTrajectory {
    let steps = params.steps();
    let dt = params.t_max / steps as f64;
    let (mut s, mut i, mut r) = (params.s0, params.i0, params.r0);
    let mut traj = SirTrajectory {
        s: Vec::with_capacity(steps + 1),
        i: Vec::with_capacity(steps + 1),
        r: Vec::with_capacity(steps + 1),
    };
    traj.s.push(s);
    traj.i.push(i);
    traj.r.push(r);
    for _ in 0..steps {
        let n = s + i + r;
        let infection = beta_contact * i * s / n;
        let removal = gamma_isolation * i;
        s -= dt * infection;
        i += dt * (infection - removal);
        r += dt * removal;
        traj.s.push(s);
        traj.i.push(i);
        traj.r.push(r);
    }
    traj
}

/// Peak number of infected over the simulated horizon.
pub fn sir_simulate(beta_contact: f64, gamma_isolation: f64) -> f64 {
    sir_peak(beta_contact, gamma_isolation, &SirParams::default())
}

pub fn sir_peak(beta_contact: f64, gamma_isolation: f64, params: &SirParams) -> f64 {
    sir_trajectory(beta_contact, gamma_isolation, params)
        .i
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Peak infections over `rates × rates`, row-major in β (contact) then γ.
pub fn sir_table(rates: &[f64], params: &SirParams) -> Vec<f64> {
    let n = rates.len();
    (0..n * n)
        .into_par_iter()
        .map(|k| sir_peak(rates[k / n], rates[k % n], params))
        .collect()
}

fn sir_cache_header(rates: &[f64], params: &SirParams) -> String {
    format!(
        "# lo={} hi={} n={} dt={} t_max={} s0={} i0={} r0={}",
        rates[0],
        rates[rates.len() - 1],
        rates.len(),
        params.dt,
        params.t_max,
        params.s0,
        params.i0,
        params.r0
    )
}

const SIR_CACHE_MAGIC: &str = "# drccbo sir cache v1";

/// Writes the peak-infection table with a header recording how it was made.
pub fn write_sir_cache(path: &Path, rates: &[f64], params: &SirParams, table: &[f64]) -> Result<()> {
    let mut out = String::with_capacity(table.len() * 20);
    out.push_str(SIR_CACHE_MAGIC);
    out.push('\n');
    out.push_str(&sir_cache_header(rates, params));
    out.push('\n');
    for v in table {
        out.push_str(&format!("{v}\n"));
    }
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    fs::write(path, out)?;
    Ok(())
}

/// Reads a cache written by [`write_sir_cache`]; `None` if the file is
/// missing, malformed, or was produced with different settings.
pub fn read_sir_cache(path: &Path, rates: &[f64], params: &SirParams) -> Option<Vec<f64>> {
    let text = fs::read_to_string(path).ok()?;
    let mut lines = text.lines();
    if lines.next()? != SIR_CACHE_MAGIC || lines.next()? != sir_cache_header(rates, params) {
        return None;
    }
    let values: Vec<f64> = lines.map(|l| l.trim().parse().ok()).collect::<Option<_>>()?;
    (values.len() == rates.len() * rates.len()).then_some(values)
}

/// Cached table if valid, otherwise computes and (re)writes it.
pub fn load_or_compute_sir(path: Option<&Path>, rates: &[f64], params: &SirParams) -> Result<Vec<f64>> {
    if let Some(p) = path {
        if let Some(t) = read_sir_cache(p, rates, params) {
            return Ok(t);
        }
    }
    let table = sir_table(rates, params);
    if let Some(p) = path {
        write_sir_cache(p, rates, params, &table)?;
    }
    Ok(table)
}

/// Shifted risk tables over the (contact, isolation) grid.
#[derive(Debug, Clone)]
pub struct RiskTables {
    pub r1: Vec<f64>,
    pub r2: Vec<f64>,
    pub c1: f64,
    pub c2: f64,
}

fn midrange(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = v.iter().copied().fold(f64::INFINITY, f64::min);
    (max + min) / 2.0
}

/// `R1 = n_inf − 450β + 800γ − C1` and `R2 = n_inf − C2`, each shifted so the
/// table's maximum and minimum have equal magnitude.
pub fn risk_functions(rates: &[f64], n_infected: &[f64]) -> Result<RiskTables> {
    let n = rates.len();
    if n_infected.len() != n * n {
        return Err(Error::DimensionMismatch {
            expected: n * n,
            got: n_infected.len(),
        });
    }
    let raw1: Vec<f64> = (0..n * n)
        .map(|k| n_infected[k] - 450.0 * rates[k / n] + 800.0 * rates[k % n])
        .collect();
    let c1 = midrange(&raw1);
    let c2 = midrange(n_infected);
    Ok(RiskTables {
        r1: raw1.iter().map(|v| v - c1).collect(),
        r2: n_infected.iter().map(|v| v - c2).collect(),
        c1,
        c2,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProblemTag {
    Synthetic,
    SirCase1,
    SirCase2,
    SirCase3,
    SirCase4,
}

impl ProblemTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            ProblemTag::Synthetic => "synthetic",
            ProblemTag::SirCase1 => "sir-case1",
            ProblemTag::SirCase2 => "sir-case2",
            ProblemTag::SirCase3 => "sir-case3",
            ProblemTag::SirCase4 => "sir-case4",
        }
    }

    pub fn is_sir(&self) -> bool {
        !matches!(self, ProblemTag::Synthetic)
    }
}

impl fmt::Display for ProblemTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProblemTag {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "synthetic" => Ok(ProblemTag::Synthetic),
            "sir-case1" => Ok(ProblemTag::SirCase1),
            "sir-case2" => Ok(ProblemTag::SirCase2),
            "sir-case3" => Ok(ProblemTag::SirCase3),
            "sir-case4" => Ok(ProblemTag::SirCase4),
            other => Err(Error::Config(format!("unknown problem '{other}'"))),
        }
    }
}

impl Serialize for ProblemTag {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for ProblemTag {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// True objective and constraint tables on a grid, row-major `ix * n_w + iw`.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    pub grid: GridSpace,
    pub f_table: Vec<f64>,
    pub g_table: Vec<f64>,
    pub noise_f: f64,
    pub noise_g: f64,
    /// Nature's law over Ω; required only in the uncontrollable settings.
    pub true_distribution: Option<DiscreteDistribution>,
}

impl ProblemInstance {
    pub fn new(
        grid: GridSpace,
        f_table: Vec<f64>,
        g_table: Vec<f64>,
        noise_f: f64,
        noise_g: f64,
        true_distribution: Option<DiscreteDistribution>,
    ) -> Result<Self> {
        for (name, t) in [("f", &f_table), ("g", &g_table)] {
            if t.len() != grid.len() {
                return Err(Error::DimensionMismatch {
                    expected: grid.len(),
                    got: t.len(),
                });
            }
            if t.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} table has non-finite values")));
            }
        }
        if !(noise_f >= 0.0 && noise_g >= 0.0) {
            return Err(Error::InvalidParameter("noise variances must be non-negative".into()));
        }
        if let Some(p) = &true_distribution {
            if p.len() != grid.n_w() {
                return Err(Error::DimensionMismatch {
                    expected: grid.n_w(),
                    got: p.len(),
                });
            }
        }
        Ok(ProblemInstance {
            grid,
            f_table,
            g_table,
            noise_f,
            noise_g,
            true_distribution,
        })
    }

    /// Synthetic pair on an `n × n` grid over `[−10, 10]²` with the mixture law.
    pub fn synthetic(n: usize, noise_f: f64, noise_g: f64) -> Result<Self> {
        let axis = make_grid(-10.0, 10.0, n)?;
        let grid = GridSpace::new(axis.clone(), axis.clone())?;
        let pts = grid.points();
        let f = pts.iter().map(|&(x, w)| synthetic_f(x, w)).collect();
        let g = pts.iter().map(|&(x, w)| synthetic_g(x, w)).collect();
        let p = true_mixture_distribution(&axis)?;
        ProblemInstance::new(grid, f, g, noise_f, noise_g, Some(p))
    }

    /// One of the four SIR cases built from a peak-infection table over
    /// `rates × rates` (row-major in contact rate).
    pub fn sir_case(case: ProblemTag, rates: &[f64], n_infected: &[f64], noise_f: f64, noise_g: f64) -> Result<Self> {
        let risk = risk_functions(rates, n_infected)?;
        let n = rates.len();
        let grid = GridSpace::new(rates.to_vec(), rates.to_vec())?;
        // (x, w) -> index into the (contact, isolation) table
        let direct = |ix: usize, iw: usize| ix * n + iw;
        let swapped = |ix: usize, iw: usize| iw * n + ix;
        let (swap, f_is_r1) = match case {
            ProblemTag::SirCase1 => (false, true),
            ProblemTag::SirCase2 => (false, false),
            ProblemTag::SirCase3 => (true, true),
            ProblemTag::SirCase4 => (true, false),
            ProblemTag::Synthetic => {
                return Err(Error::InvalidParameter("synthetic is not an SIR case".into()))
            }
        };
        let mut f = Vec::with_capacity(n * n);
        let mut g = Vec::with_capacity(n * n);
        for ix in 0..n {
            for iw in 0..n {
                let k = if swap { swapped(ix, iw) } else { direct(ix, iw) };
                let (a, b) = if f_is_r1 { (risk.r1[k], risk.r2[k]) } else { (risk.r2[k], risk.r1[k]) };
                f.push(-a);
                g.push(-b);
            }
        }
        ProblemInstance::new(grid, f, g, noise_f, noise_g, None)
    }

    pub fn f(&self, ix: usize, iw: usize) -> f64 {
        self.f_table[self.grid.flat(ix, iw)]
    }

    pub fn g(&self, ix: usize, iw: usize) -> f64 {
        self.g_table[self.grid.flat(ix, iw)]
    }
}

/// True `F_t` and `G_t` for every design under one ambiguity set.
#[derive(Debug, Clone)]
pub struct TrueValues {
    pub f_values: Vec<f64>,
    pub g_values: Vec<f64>,
    pub alpha: f64,
}

impl TrueValues {
    pub fn compute(instance: &ProblemInstance, set: &AmbiguitySet, alpha: f64, h: f64) -> Self {
        let n_w = instance.grid.n_w();
        let mut f_values = Vec::with_capacity(instance.grid.n_x());
        let mut g_values = Vec::with_capacity(instance.grid.n_x());
        for ix in 0..instance.grid.n_x() {
            let f_row = &instance.f_table[ix * n_w..(ix + 1) * n_w];
            let ind: Vec<f64> = instance.g_table[ix * n_w..(ix + 1) * n_w]
                .iter()
                .map(|&g| if g > h { 1.0 } else { 0.0 })
                .collect();
            f_values.push(worst_case_expectation(f_row, set));
            g_values.push(worst_case_expectation(&ind, set));
        }
        TrueValues {
            f_values,
            g_values,
            alpha,
        }
    }

    pub fn is_feasible(&self, ix: usize) -> bool {
        self.g_values[ix] > self.alpha
    }

    pub fn min_f(&self) -> f64 {
        self.f_values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Feasible argmax of `F_t` and its value, or `(None, min F_t)`.
    pub fn optimum(&self) -> (Option<usize>, f64) {
        let feasible = (0..self.f_values.len()).filter(|&i| self.is_feasible(i));
        match argmax_by(feasible, |i| self.f_values[i]) {
            Some(i) => (Some(i), self.f_values[i]),
            None => (None, self.min_f()),
        }
    }

    /// Utility gap for a recommendation (`None` when `H_t` is empty).
    pub fn utility_gap(&self, recommendation: Option<usize>) -> f64 {
        let (_, best) = self.optimum();
        match recommendation {
            Some(x) if self.is_feasible(x) => best - self.f_values[x],
            _ => best - self.min_f(),
        }
    }
}

/// Brute-force DRCC optimum on the true tables.
pub fn exact_optimum(
    instance: &ProblemInstance,
    set: &AmbiguitySet,
    alpha: f64,
    h: f64,
) -> (Option<usize>, f64) {
    TrueValues::compute(instance, set, alpha, h).optimum()
}

pub fn utility_gap(
    recommendation: Option<usize>,
    instance: &ProblemInstance,
    set: &AmbiguitySet,
    alpha: f64,
    h: f64,
) -> f64 {
    TrueValues::compute(instance, set, alpha, h).utility_gap(recommendation)
}
