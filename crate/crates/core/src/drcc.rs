//! Credible intervals for the DR expectation `F_t` and DR probability `G_t`,
//! the H/L/M classification, the acquisition function, selection rules and
//! stopping conditions.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ambiguity::{worst_case_expectation, AmbiguitySet};
use crate::error::{Error, Result};
use crate::gp::GpPosterior;

/// Confidence-width schedule for the credible intervals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum BetaMode {
    /// `β_t = 2 log(2 |X×Ω| π² t² / (3δ))` for both functions.
    Theoretical,
    /// Constant `β^{1/2}` per function.
    Fixed { sqrt_beta_f: f64, sqrt_beta_g: f64 },
}

impl BetaMode {
    /// `(β_f, β_g)` at iteration `t`.
    pub fn betas(&self, t: usize, product_size: usize, delta: f64) -> (f64, f64) {
        match *self {
            BetaMode::Theoretical => {
                let b = beta_schedule(t, product_size, delta);
                (b, b)
            }
            BetaMode::Fixed {
                sqrt_beta_f,
                sqrt_beta_g,
            } => (sqrt_beta_f * sqrt_beta_f, sqrt_beta_g * sqrt_beta_g),
        }
    }
}

/// User-facing parameters of the DRCC problem and the algorithm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleParams {
    pub delta: f64,
    pub xi: f64,
    pub eta: f64,
    pub alpha: f64,
    pub threshold_h: f64,
    pub beta_mode: BetaMode,
}

impl ScheduleParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidParameter(format!("alpha must lie in (0,1), got {}", self.alpha)));
        }
        if !(self.xi > 0.0) {
            return Err(Error::InvalidParameter(format!("xi must be positive, got {}", self.xi)));
        }
        if !(self.eta >= 0.0) {
            return Err(Error::InvalidParameter(format!("eta must be non-negative, got {}", self.eta)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidParameter(format!("delta must lie in (0,1), got {}", self.delta)));
        }
        if !self.threshold_h.is_finite() {
            return Err(Error::InvalidParameter("threshold h must be finite".into()));
        }
        if let BetaMode::Fixed {
            sqrt_beta_f,
            sqrt_beta_g,
        } = self.beta_mode
        {
            if !(sqrt_beta_f >= 0.0 && sqrt_beta_g >= 0.0) {
                return Err(Error::InvalidParameter("fixed beta^(1/2) must be non-negative".into()));
            }
        }
        Ok(())
    }
}

pub fn beta_schedule(t: usize, product_size: usize, delta: f64) -> f64 {
    let t = t.max(1) as f64;
    2.0 * (2.0 * product_size as f64 * PI * PI * t * t / (3.0 * delta)).ln()
}

/// Overestimation parameter `min{ξσ₀/2, ξ²δσ₀/(8|X×Ω|)}`, where `σ₀` is the
/// smallest prior standard deviation of `g`.
pub fn eta_parameter(xi: f64, delta: f64, sigma0min_g: f64, product_size: usize) -> f64 {
    let a = xi * sigma0min_g / 2.0;
    let b = xi * xi * delta * sigma0min_g / (8.0 * product_size as f64);
    a.min(b)
}

/// `μ ∓ β^{1/2} σ` at grid point `idx`.
pub fn credible_interval(gp: &GpPosterior, idx: usize, beta: f64) -> (f64, f64) {
    let m = gp.mean(idx);
    let half = beta.max(0.0).sqrt() * gp.std_dev(idx);
    (m - half, m + half)
}

/// Credible interval of `1[g > h]` from the interval `[l_g, u_g]` of `g`.
pub fn indicator_interval(l_g: f64, u_g: f64, h: f64, eta: f64) -> (f64, f64) {
    if l_g > h - eta {
        (1.0, 1.0)
    } else if u_g > h {
        (0.0, 1.0)
    } else {
        (0.0, 0.0)
    }
}

/// `(l^F, u^F)`: worst-case expectations of the lower and upper envelopes of `f`
/// over the environment slice at `ix`.
pub fn f_bounds(ix: usize, gp_f: &GpPosterior, beta_f: f64, set: &AmbiguitySet) -> (f64, f64) {
    let n_w = gp_f.n_w();
    let mut lower = Vec::with_capacity(n_w);
    let mut upper = Vec::with_capacity(n_w);
    for iw in 0..n_w {
        let (l, u) = credible_interval(gp_f, gp_f.flat(ix, iw), beta_f);
        lower.push(l);
        upper.push(u);
    }
    (
        worst_case_expectation(&lower, set),
        worst_case_expectation(&upper, set),
    )
}

/// `(l^G, u^G)`: worst-case expectations of the indicator envelopes at `ix`.
pub fn g_bounds(
    ix: usize,
    gp_g: &GpPosterior,
    beta_g: f64,
    h: f64,
    eta: f64,
    set: &AmbiguitySet,
) -> (f64, f64) {
    let n_w = gp_g.n_w();
    let mut lower = Vec::with_capacity(n_w);
    let mut upper = Vec::with_capacity(n_w);
    for iw in 0..n_w {
        let (l, u) = credible_interval(gp_g, gp_g.flat(ix, iw), beta_g);
        let (li, ui) = indicator_interval(l, u, h, eta);
        lower.push(li);
        upper.push(ui);
    }
    (
        worst_case_expectation(&lower, set),
        worst_case_expectation(&upper, set),
    )
}

/// Membership in the estimated upper set `H`, lower set `L`, or potential set `M`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SetLabel {
    H,
    L,
    M,
}

pub fn classify(lower_g: f64, upper_g: f64, alpha: f64, xi: f64) -> SetLabel {
    if lower_g > alpha - xi {
        SetLabel::H
    } else if upper_g <= alpha {
        SetLabel::L
    } else {
        SetLabel::M
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesignBounds {
    pub lower_f: f64,
    pub upper_f: f64,
    pub lower_g: f64,
    pub upper_g: f64,
    pub label: SetLabel,
}

/// Bounds and labels for every design point at one iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundsTable {
    pub rows: Vec<DesignBounds>,
}

impl BoundsTable {
    /// Sweeps every design point. Pure in the GP states, so the sweep runs in
    /// parallel.
    pub fn compute(
        gp_f: &GpPosterior,
        gp_g: &GpPosterior,
        betas: (f64, f64),
        params: &ScheduleParams,
        set: &AmbiguitySet,
    ) -> Self {
        let n_x = gp_f.len() / gp_f.n_w();
        let rows = (0..n_x)
            .into_par_iter()
            .map(|ix| {
                let (lower_f, upper_f) = f_bounds(ix, gp_f, betas.0, set);
                let (lower_g, upper_g) =
                    g_bounds(ix, gp_g, betas.1, params.threshold_h, params.eta, set);
                DesignBounds {
                    lower_f,
                    upper_f,
                    lower_g,
                    upper_g,
                    label: classify(lower_g, upper_g, params.alpha, params.xi),
                }
            })
            .collect();
        BoundsTable { rows }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn members(&self, label: SetLabel) -> impl Iterator<Item = usize> + '_ {
        self.rows
            .iter()
            .enumerate()
            .filter(move |(_, r)| r.label == label)
            .map(|(i, _)| i)
    }

    pub fn count(&self, label: SetLabel) -> usize {
        self.rows.iter().filter(|r| r.label == label).count()
    }

    /// `argmax_{x ∈ H} l^F(x)`, lowest index on ties; `None` if `H` is empty.
    pub fn recommendation(&self) -> Option<usize> {
        argmax_by(self.members(SetLabel::H), |i| self.rows[i].lower_f)
    }
}

/// Incumbent `c_best`: best conservative value over `H`, else the worst over
/// `M`, else the worst over all of `X`.
pub fn current_best(table: &BoundsTable) -> f64 {
    let lf = |i: usize| table.rows[i].lower_f;
    if let Some(i) = table.recommendation() {
        return lf(i);
    }
    let min_over = |it: &mut dyn Iterator<Item = usize>| it.map(lf).fold(f64::INFINITY, f64::min);
    if table.count(SetLabel::M) > 0 {
        min_over(&mut table.members(SetLabel::M))
    } else {
        min_over(&mut (0..table.len()))
    }
}

/// `a_t(x) = max{u^F(x) − c_best, 0} · a^G(x)`.
pub fn acquisition(ix: usize, table: &BoundsTable, cbest: f64, alpha: f64, xi: f64) -> Result<f64> {
    let row = &table.rows[ix];
    let a_g = match row.label {
        SetLabel::H => 1.0,
        SetLabel::L => 0.0,
        SetLabel::M => {
            let width = row.upper_g - row.lower_g;
            if !(width > 0.0) {
                return Err(Error::Inconsistent(format!(
                    "design {ix} labelled M with collapsed G interval [{}, {}]",
                    row.lower_g, row.upper_g
                )));
            }
            (row.upper_g - (alpha - xi)) / width
        }
    };
    Ok((row.upper_f - cbest).max(0.0) * a_g)
}

/// All acquisition values in design order.
pub fn acquisition_values(table: &BoundsTable, alpha: f64, xi: f64) -> Result<Vec<f64>> {
    let cbest = current_best(table);
    (0..table.len())
        .map(|ix| acquisition(ix, table, cbest, alpha, xi))
        .collect()
}

/// Next design: argmax of the acquisition over `H ∪ M`, lowest index on ties.
pub fn select_x(table: &BoundsTable, acquisition: &[f64]) -> Result<usize> {
    let candidates = (0..table.len()).filter(|&i| table.rows[i].label != SetLabel::L);
    argmax_by(candidates, |i| acquisition[i]).ok_or(Error::Empty("H ∪ M"))
}

/// Next environment at `x_next`: the largest combined posterior variance.
pub fn select_w_simulator(x_next: usize, gp_f: &GpPosterior, gp_g: &GpPosterior) -> usize {
    let n_w = gp_f.n_w();
    argmax_by(0..n_w, |iw| {
        let i = gp_f.flat(x_next, iw);
        gp_f.variance(i) + gp_g.variance(i)
    })
    .expect("environment grid is non-empty")
}

/// Outcome of the stopping check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopStatus {
    Continue,
    /// Every design is certified infeasible (`L_t = X`).
    NoSolution,
    /// The optimistic and conservative maxima agree to within `ξ`.
    Converged { recommendation: usize },
}

pub fn stopping(table: &BoundsTable, xi: f64) -> StopStatus {
    if table.count(SetLabel::L) == table.len() {
        return StopStatus::NoSolution;
    }
    let Some(best) = table.recommendation() else {
        return StopStatus::Continue;
    };
    let optimistic = (0..table.len())
        .filter(|&i| table.rows[i].label != SetLabel::L)
        .map(|i| table.rows[i].upper_f)
        .fold(f64::NEG_INFINITY, f64::max);
    if optimistic - table.rows[best].lower_f < xi {
        StopStatus::Converged {
            recommendation: best,
        }
    } else {
        StopStatus::Continue
    }
}

/// First index attaining the maximum of `score`.
pub(crate) fn argmax_by<I, F>(indices: I, score: F) -> Option<usize>
where
    I: IntoIterator<Item = usize>,
    F: Fn(usize) -> f64,
{
    let mut best: Option<(usize, f64)> = None;
    for i in indices {
        let s = score(i);
        match best {
            Some((_, b)) if !(s > b) => {}
            _ => best = Some((i, s)),
        }
    }
    best.map(|(i, _)| i)
}

/// First index attaining the minimum of `score`.
pub(crate) fn argmin_by<I, F>(indices: I, score: F) -> Option<usize>
where
    I: IntoIterator<Item = usize>,
    F: Fn(usize) -> f64,
{
    argmax_by(indices, |i| -score(i))
}
