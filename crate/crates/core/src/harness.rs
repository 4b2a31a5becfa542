//! The outer loop of DRCC-BO, experiment settings, and replication.

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand::distr::weighted::WeightedIndex;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ambiguity::{empirical_reference, epsilon_schedule, AmbiguitySet, DiscreteDistribution};
use crate::baselines::{select, BaselineConfig, Method, PolicyContext};
use crate::drcc::{
    current_best, eta_parameter, stopping, BetaMode, BoundsTable, ScheduleParams, SetLabel,
    StopStatus,
};
use crate::error::{Error, Result};
use crate::gp::{prior_variance_min, GpPosterior, KernelParams};
use crate::grid::make_grid;
use crate::problems::{load_or_compute_sir, ProblemInstance, ProblemTag, SirParams, TrueValues};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Setting {
    /// Both `x` and `w` are chosen by the algorithm.
    Simulator,
    /// `w` is drawn from the true law; uniform reference.
    Fixed,
    /// `w` is drawn from the true law; empirical reference.
    DataDriven,
}

impl Setting {
    pub fn as_str(&self) -> &'static str {
        match self {
            Setting::Simulator => "simulator",
            Setting::Fixed => "fixed",
            Setting::DataDriven => "data-driven",
        }
    }

    pub fn controllable(&self) -> bool {
        matches!(self, Setting::Simulator)
    }
}

impl std::str::FromStr for Setting {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "simulator" => Ok(Setting::Simulator),
            "fixed" => Ok(Setting::Fixed),
            "data-driven" => Ok(Setting::DataDriven),
            other => Err(Error::Config(format!("unknown setting '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EtaMode {
    Zero,
    Theoretical,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpsilonMode {
    Fixed(f64),
    /// The decaying data-driven radius.
    Schedule,
}

impl EpsilonMode {
    pub fn radius(&self, t: usize, n_w: usize, delta: f64) -> f64 {
        match *self {
            EpsilonMode::Fixed(e) => e,
            EpsilonMode::Schedule => epsilon_schedule(t, n_w, delta),
        }
    }
}

/// Everything one run needs besides the problem instance and the seed.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub method: Method,
    pub setting: Setting,
    pub kernel_f: KernelParams,
    pub kernel_g: KernelParams,
    pub h: f64,
    pub alpha: f64,
    pub xi: f64,
    pub delta: f64,
    pub eta: EtaMode,
    pub beta: BetaMode,
    pub epsilon: EpsilonMode,
    pub iterations: usize,
    pub baseline: BaselineConfig,
}

impl RunSpec {
    pub fn schedule_params(&self, instance: &ProblemInstance) -> ScheduleParams {
        let eta = match self.eta {
            EtaMode::Zero => 0.0,
            EtaMode::Theoretical => eta_parameter(
                self.xi,
                self.delta,
                prior_variance_min(&self.kernel_g, &instance.grid).sqrt(),
                instance.grid.len(),
            ),
        };
        ScheduleParams {
            delta: self.delta,
            xi: self.xi,
            eta,
            alpha: self.alpha,
            threshold_h: self.h,
            beta_mode: self.beta,
        }
    }

    pub fn validate(&self, instance: &ProblemInstance) -> Result<()> {
        self.kernel_f.validate()?;
        self.kernel_g.validate()?;
        self.baseline.validate()?;
        self.schedule_params(instance).validate()?;
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be at least 1".into()));
        }
        if let EpsilonMode::Fixed(e) = self.epsilon {
            if !(e >= 0.0 && e.is_finite()) {
                return Err(Error::Config(format!("epsilon must be non-negative, got {e}")));
            }
        }
        if !self.setting.controllable() && instance.true_distribution.is_none() {
            return Err(Error::Config(format!(
                "the {} setting needs a true environment distribution",
                self.setting.as_str()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RunStatus {
    Continue,
    NoSolution,
    Converged,
    BudgetExhausted,
}

impl RunStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            RunStatus::Continue => "continue",
            RunStatus::NoSolution => "no_solution",
            RunStatus::Converged => "converged",
            RunStatus::BudgetExhausted => "budget_exhausted",
        }
    }

    pub fn is_terminal(&self) -> bool {
        !matches!(self, RunStatus::Continue)
    }
}

impl std::str::FromStr for RunStatus {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        [
            RunStatus::Continue,
            RunStatus::NoSolution,
            RunStatus::Converged,
            RunStatus::BudgetExhausted,
        ]
        .into_iter()
        .find(|r| r.as_str() == s)
        .ok_or_else(|| Error::Config(format!("unknown status '{s}'")))
    }
}

/// One iteration of a run. `x_index`..`y_g` are empty on a stopping row.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub t: usize,
    pub x_index: Option<usize>,
    pub w_index: Option<usize>,
    pub y_f: Option<f64>,
    pub y_g: Option<f64>,
    pub n_h: usize,
    pub n_l: usize,
    pub n_m: usize,
    pub c_best: f64,
    pub recommendation: Option<usize>,
    pub utility_gap: f64,
    pub status: RunStatus,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunTrace {
    pub rows: Vec<TraceRow>,
}

impl RunTrace {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn final_status(&self) -> Option<RunStatus> {
        self.rows.last().map(|r| r.status)
    }

    pub fn final_recommendation(&self) -> Option<usize> {
        self.rows.last().and_then(|r| r.recommendation)
    }

    /// Utility gaps extended to `budget` entries by repeating the last one.
    pub fn padded_gaps(&self, budget: usize) -> Vec<f64> {
        let mut v: Vec<f64> = self.rows.iter().map(|r| r.utility_gap).take(budget).collect();
        let last = v.last().copied().unwrap_or(f64::NAN);
        v.resize(budget, last);
        v
    }
}

/// What an observer sees at every iteration, after the bounds sweep.
pub struct IterationView<'a> {
    pub t: usize,
    pub table: &'a BoundsTable,
    pub set: &'a AmbiguitySet,
    pub truth: &'a TrueValues,
    pub row: &'a TraceRow,
}

/// Independent generator streams so that, for instance, a policy's random
/// draws never shift the environment sequence.
struct Streams {
    init: ChaCha8Rng,
    env: ChaCha8Rng,
    noise: ChaCha8Rng,
    policy: ChaCha8Rng,
}

impl Streams {
    fn new(seed: u64) -> Self {
        let stream = |k: u64| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            r.set_stream(k);
            r
        };
        Streams {
            init: stream(0),
            env: stream(1),
            noise: stream(2),
            policy: stream(3),
        }
    }
}

pub fn run_algorithm1(instance: &ProblemInstance, spec: &RunSpec, seed: u64) -> Result<RunTrace> {
    run_algorithm1_observed(instance, spec, seed, &mut |_| {})
}

pub fn run_algorithm1_observed(
    instance: &ProblemInstance,
    spec: &RunSpec,
    seed: u64,
    observer: &mut dyn FnMut(&IterationView<'_>),
) -> Result<RunTrace> {
    spec.validate(instance)?;
    let params = spec.schedule_params(instance);
    let grid = &instance.grid;
    let (n_x, n_w, n) = (grid.n_x(), grid.n_w(), grid.len());
    let controllable = spec.setting.controllable();
    let nature = match &instance.true_distribution {
        Some(p) if !controllable => Some(
            WeightedIndex::new(p.weights())
                .map_err(|e| Error::InvalidParameter(format!("true distribution: {e}")))?,
        ),
        _ => None,
    };
    let mut rng = Streams::new(seed);
    let sd_f = spec.kernel_f.noise_variance.sqrt();
    let sd_g = spec.kernel_g.noise_variance.sqrt();

    let mut gp_f = GpPosterior::new(spec.kernel_f, grid)?;
    let mut gp_g = GpPosterior::new(spec.kernel_g, grid)?;
    let mut observe = |gp_f: &mut GpPosterior, gp_g: &mut GpPosterior, ix: usize, iw: usize| -> Result<(f64, f64)> {
        let yf = instance.f(ix, iw) + sd_f * rng.noise.sample::<f64, _>(StandardNormal);
        let yg = instance.g(ix, iw) + sd_g * rng.noise.sample::<f64, _>(StandardNormal);
        gp_f.add_observation(ix, iw, yf)?;
        gp_g.add_observation(ix, iw, yg)?;
        Ok((yf, yg))
    };

    let x0 = rng.init.random_range(0..n_x);
    let w0 = match &nature {
        Some(d) => rng.init.sample(d),
        None => rng.init.random_range(0..n_w),
    };
    observe(&mut gp_f, &mut gp_g, x0, w0).map_err(|e| at(0, e))?;
    let mut observed_w = vec![w0];
    let uniform = DiscreteDistribution::uniform(n_w)?;
    let mut trace = RunTrace::default();

    for t in 1..=spec.iterations {
        let nature_w = nature.as_ref().map(|d| rng.env.sample(d));
        let empirical = empirical_reference(&observed_w, n_w)?;
        let reference = match spec.setting {
            Setting::DataDriven => empirical.clone(),
            _ => uniform.clone(),
        };
        let set = AmbiguitySet::l1(reference, spec.epsilon.radius(t, n_w, spec.delta))?;
        let betas = params.beta_mode.betas(t, n, params.delta);
        let table = BoundsTable::compute(&gp_f, &gp_g, betas, &params, &set);
        let truth = TrueValues::compute(instance, &set, params.alpha, params.threshold_h);
        let recommendation = table.recommendation();
        let stop = if spec.method == Method::Proposed {
            stopping(&table, params.xi)
        } else {
            StopStatus::Continue
        };
        let mut row = TraceRow {
            t,
            x_index: None,
            w_index: None,
            y_f: None,
            y_g: None,
            n_h: table.count(SetLabel::H),
            n_l: table.count(SetLabel::L),
            n_m: table.count(SetLabel::M),
            c_best: current_best(&table),
            recommendation,
            utility_gap: truth.utility_gap(recommendation),
            status: match stop {
                StopStatus::Continue => RunStatus::Continue,
                StopStatus::NoSolution => RunStatus::NoSolution,
                StopStatus::Converged { .. } => RunStatus::Converged,
            },
        };
        if row.status.is_terminal() {
            observer(&IterationView { t, table: &table, set: &set, truth: &truth, row: &row });
            trace.rows.push(row);
            break;
        }
        let ctx = PolicyContext {
            gp_f: &gp_f,
            gp_g: &gp_g,
            table: &table,
            set: &set,
            params: &params,
            betas,
            empirical: &empirical,
            controllable,
        };
        let choice = select(spec.method, &ctx, &spec.baseline, &mut rng.policy).map_err(|e| at(t, e))?;
        let w = match (choice.w, nature_w) {
            (Some(w), _) => w,
            (None, Some(w)) => w,
            (None, None) => {
                return Err(at(t, Error::Inconsistent("policy returned no environment".into())))
            }
        };
        let (yf, yg) = observe(&mut gp_f, &mut gp_g, choice.x, w).map_err(|e| at(t, e))?;
        observed_w.push(w);
        row.x_index = Some(choice.x);
        row.w_index = Some(w);
        row.y_f = Some(yf);
        row.y_g = Some(yg);
        if t == spec.iterations {
            row.status = RunStatus::BudgetExhausted;
        }
        observer(&IterationView { t, table: &table, set: &set, truth: &truth, row: &row });
        trace.rows.push(row);
    }
    Ok(trace)
}

fn at(iteration: usize, e: Error) -> Error {
    Error::AtIteration {
        iteration,
        source: Box::new(e),
    }
}

/// Runs `reps` independent replications with seeds `base_seed + rep`, in
/// parallel. Any failure aborts the batch.
pub fn run_replications(
    instance: &ProblemInstance,
    spec: &RunSpec,
    reps: usize,
    base_seed: u64,
) -> Result<Vec<RunTrace>> {
    spec.validate(instance)?;
    (0..reps)
        .into_par_iter()
        .map(|rep| {
            run_algorithm1(instance, spec, base_seed.wrapping_add(rep as u64)).map_err(|e| Error::AtReplication {
                rep,
                source: Box::new(e),
            })
        })
        .collect()
}

/// Per-iteration mean utility gap across traces, each padded to `budget`.
pub fn mean_curve(traces: &[RunTrace], budget: usize) -> Vec<f64> {
    let mut sum = vec![0.0; budget];
    for tr in traces {
        for (s, g) in sum.iter_mut().zip(tr.padded_gaps(budget)) {
            *s += g;
        }
    }
    let n = traces.len() as f64;
    sum.into_iter().map(|s| s / n).collect()
}

/// A JSON experiment description. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemTag,
    pub setting: Setting,
    /// Compared in this order; the plot legend follows it.
    pub methods: Vec<Method>,
    pub kernel_f: KernelParams,
    pub kernel_g: KernelParams,
    pub h: f64,
    pub alpha: f64,
    pub xi: f64,
    pub eta: EtaMode,
    pub beta: BetaMode,
    pub epsilon: EpsilonMode,
    pub delta: f64,
    pub iterations: usize,
    pub replications: usize,
    pub seed: u64,
    pub output_dir: PathBuf,
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
    #[serde(default)]
    pub baseline: BaselineConfig,
    /// Where the SIR peak-infection table is cached.
    #[serde(default)]
    pub sir_cache: Option<PathBuf>,
}

fn default_grid_points() -> usize {
    50
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::Config("methods must not be empty".into()));
        }
        if self.replications == 0 {
            return Err(Error::Config("replications must be at least 1".into()));
        }
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be at least 1".into()));
        }
        if self.grid_points < 2 {
            return Err(Error::Config("grid_points must be at least 2".into()));
        }
        if self.problem.is_sir() && !self.setting.controllable() {
            return Err(Error::Config(
                "SIR problems have no true environment law; use the simulator setting".into(),
            ));
        }
        self.kernel_f.validate().map_err(config)?;
        self.kernel_g.validate().map_err(config)?;
        self.baseline.validate().map_err(config)?;
        self.schedule_params_unchecked().validate().map_err(config)?;
        if let EpsilonMode::Fixed(e) = self.epsilon {
            if !(e >= 0.0 && e.is_finite()) {
                return Err(Error::Config(format!("epsilon must be non-negative, got {e}")));
            }
        }
        Ok(())
    }

    fn schedule_params_unchecked(&self) -> ScheduleParams {
        ScheduleParams {
            delta: self.delta,
            xi: self.xi,
            eta: 0.0,
            alpha: self.alpha,
            threshold_h: self.h,
            beta_mode: self.beta,
        }
    }

    pub fn run_spec(&self, method: Method) -> RunSpec {
        RunSpec {
            method,
            setting: self.setting,
            kernel_f: self.kernel_f,
            kernel_g: self.kernel_g,
            h: self.h,
            alpha: self.alpha,
            xi: self.xi,
            delta: self.delta,
            eta: self.eta,
            beta: self.beta,
            epsilon: self.epsilon,
            iterations: self.iterations,
            baseline: self.baseline,
        }
    }

    /// Builds the true tables; SIR problems go through the cache if set.
    pub fn build_instance(&self) -> Result<ProblemInstance> {
        let (nf, ng) = (self.kernel_f.noise_variance, self.kernel_g.noise_variance);
        if self.problem == ProblemTag::Synthetic {
            return ProblemInstance::synthetic(self.grid_points, nf, ng);
        }
        let rates = make_grid(0.01, 0.5, self.grid_points)?;
        let table = load_or_compute_sir(self.sir_cache.as_deref(), &rates, &SirParams::default())?;
        ProblemInstance::sir_case(self.problem, &rates, &table, nf, ng)
    }
}

fn config(e: Error) -> Error {
    match e {
        Error::InvalidParameter(m) => Error::Config(m),
        other => other,
    }
}

/// Results of every method in a config.
#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub problem: ProblemTag,
    pub setting: Setting,
    pub iterations: usize,
    pub methods: Vec<MethodResult>,
}

#[derive(Debug, Clone)]
pub struct MethodResult {
    pub method: Method,
    pub traces: Vec<RunTrace>,
    pub mean_gap: Vec<f64>,
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let instance = cfg.build_instance()?;
    let mut methods = Vec::with_capacity(cfg.methods.len());
    for &method in &cfg.methods {
        let traces = run_replications(&instance, &cfg.run_spec(method), cfg.replications, cfg.seed)?;
        let mean_gap = mean_curve(&traces, cfg.iterations);
        methods.push(MethodResult {
            method,
            traces,
            mean_gap,
        });
    }
    Ok(ExperimentResult {
        problem: cfg.problem,
        setting: cfg.setting,
        iterations: cfg.iterations,
        methods,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpace;

    fn small_instance() -> ProblemInstance {
        let axis = make_grid(-10.0, 10.0, 8).unwrap();
        let grid = GridSpace::new(axis.clone(), axis.clone()).unwrap();
        let pts = grid.points();
        let f = pts.iter().map(|&(x, w)| crate::problems::synthetic_f(x, w)).collect();
        let g = pts.iter().map(|&(x, w)| crate::problems::synthetic_g(x, w)).collect();
        let p = crate::problems::true_mixture_distribution(&axis).unwrap();
        ProblemInstance::new(grid, f, g, 1e-8, 1e-4, Some(p)).unwrap()
    }

    pub(crate) fn spec(method: Method, setting: Setting, iterations: usize) -> RunSpec {
        RunSpec {
            method,
            setting,
            kernel_f: KernelParams::new(1.0, 3.0, 1e-8).unwrap(),
            kernel_g: KernelParams::new(2500.0, 4.0, 1e-4).unwrap(),
            h: 5.0,
            alpha: 0.53,
            xi: 1e-12,
            delta: 0.1,
            eta: EtaMode::Zero,
            beta: BetaMode::Fixed {
                sqrt_beta_f: 3.0,
                sqrt_beta_g: 2.0,
            },
            epsilon: EpsilonMode::Fixed(0.15),
            iterations,
            baseline: BaselineConfig {
                ccbo_mc_samples: 100,
                ..Default::default()
            },
        }
    }

    #[test]
    fn budget_one_gives_one_row() {
        let inst = small_instance();
        let tr = run_algorithm1(&inst, &spec(Method::Proposed, Setting::Simulator, 1), 4).unwrap();
        assert_eq!(tr.len(), 1);
        assert!(tr.rows[0].status.is_terminal());
    }

    #[test]
    fn runs_are_reproducible_for_every_method_and_setting() {
        let inst = small_instance();
        for m in Method::ALL {
            for s in [Setting::Simulator, Setting::Fixed, Setting::DataDriven] {
                let a = run_algorithm1(&inst, &spec(m, s, 6), 11).unwrap();
                let b = run_algorithm1(&inst, &spec(m, s, 6), 11).unwrap();
                assert_eq!(a, b, "{m} {}", s.as_str());
                for r in &a.rows {
                    assert_eq!(r.n_h + r.n_l + r.n_m, 8);
                    assert!(r.utility_gap >= 0.0);
                }
            }
        }
    }

    #[test]
    fn uncontrollable_environment_stream_is_policy_independent() {
        let inst = small_instance();
        let a = run_algorithm1(&inst, &spec(Method::Random, Setting::Fixed, 10), 2).unwrap();
        let b = run_algorithm1(&inst, &spec(Method::Us, Setting::Fixed, 10), 2).unwrap();
        let wa: Vec<_> = a.rows.iter().map(|r| r.w_index).collect();
        let wb: Vec<_> = b.rows.iter().map(|r| r.w_index).collect();
        assert_eq!(wa, wb);
    }

    #[test]
    fn one_replication_curve_is_the_trace() {
        let inst = small_instance();
        let sp = spec(Method::Random, Setting::Simulator, 5);
        let traces = run_replications(&inst, &sp, 1, 7).unwrap();
        let curve = mean_curve(&traces, 5);
        let gaps: Vec<f64> = traces[0].rows.iter().map(|r| r.utility_gap).collect();
        assert_eq!(curve, gaps);
    }

    #[test]
    fn padding_holds_the_last_value() {
        let mut tr = RunTrace::default();
        for (t, g) in [(1, 3.0), (2, 1.5)] {
            tr.rows.push(TraceRow {
                t,
                x_index: None,
                w_index: None,
                y_f: None,
                y_g: None,
                n_h: 0,
                n_l: 0,
                n_m: 0,
                c_best: 0.0,
                recommendation: None,
                utility_gap: g,
                status: RunStatus::Continue,
            });
        }
        assert_eq!(tr.padded_gaps(4), vec![3.0, 1.5, 1.5, 1.5]);
    }

    #[test]
    fn config_parsing_is_strict() {
        let good = r#"{
            "problem": "synthetic", "setting": "simulator", "methods": ["proposed", "random"],
            "kernel_f": {"signal_variance": 1, "length_scale": 3, "noise_variance": 1e-8},
            "kernel_g": {"signal_variance": 2500, "length_scale": 4, "noise_variance": 1e-4},
            "h": 5, "alpha": 0.53, "xi": 1e-12, "eta": "zero",
            "beta": {"fixed": {"sqrt_beta_f": 3, "sqrt_beta_g": 2}},
            "epsilon": {"fixed": 0.15}, "delta": 0.1,
            "iterations": 10, "replications": 2, "seed": 0, "output_dir": "out"
        }"#;
        let cfg = ExperimentConfig::from_json(good).unwrap();
        assert_eq!(cfg.grid_points, 50);
        let extra = good.replacen("\"h\": 5", "\"h\": 5, \"bogus\": 1", 1);
        assert!(ExperimentConfig::from_json(&extra).unwrap_err().is_config());
        let sir = good.replacen("synthetic", "sir-case1", 1).replacen("simulator", "fixed", 1);
        assert!(ExperimentConfig::from_json(&sir).unwrap_err().is_config());
        let bad_alpha = good.replacen("0.53", "1.5", 1);
        assert!(ExperimentConfig::from_json(&bad_alpha).unwrap_err().is_config());
    }
}
