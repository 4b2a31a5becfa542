//! Dense two-phase simplex with Bland's rule.
//!
//! Solves `min c^T x` subject to `A_eq x = b_eq`, `A_ub x <= b_ub`, `x >= 0`.
//! Intended for small problems (a few dozen variables) where exactness of the
//! optimum matters more than speed.

use std::fmt;

const PIVOT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum LpError {
    Infeasible,
    Unbounded,
    Shape(String),
}

impl fmt::Display for LpError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LpError::Infeasible => write!(f, "linear program is infeasible"),
            LpError::Unbounded => write!(f, "linear program is unbounded"),
            LpError::Shape(m) => write!(f, "malformed linear program: {m}"),
        }
    }
}

impl std::error::Error for LpError {}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub objective: f64,
    pub x: Vec<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct LinearProgram {
    pub cost: Vec<f64>,
    pub eq_rows: Vec<(Vec<f64>, f64)>,
    pub ub_rows: Vec<(Vec<f64>, f64)>,
}

#[derive(Clone, Copy, PartialEq)]
enum RowKind {
    Le,
    Ge,
    Eq,
}

impl LinearProgram {
    pub fn new(cost: Vec<f64>) -> Self {
        LinearProgram {
            cost,
            ..Default::default()
        }
    }

    pub fn eq(&mut self, row: Vec<f64>, rhs: f64) -> &mut Self {
        self.eq_rows.push((row, rhs));
        self
    }

    pub fn le(&mut self, row: Vec<f64>, rhs: f64) -> &mut Self {
        self.ub_rows.push((row, rhs));
        self
    }

    pub fn solve(&self) -> Result<LpSolution, LpError> {
        let n = self.cost.len();
        let mut rows: Vec<(Vec<f64>, f64, RowKind)> = Vec::new();
        for (r, b) in &self.ub_rows {
            if r.len() != n {
                return Err(LpError::Shape("inequality row length".into()));
            }
            if *b >= 0.0 {
                rows.push((r.clone(), *b, RowKind::Le));
            } else {
                rows.push((r.iter().map(|v| -v).collect(), -b, RowKind::Ge));
            }
        }
        for (r, b) in &self.eq_rows {
            if r.len() != n {
                return Err(LpError::Shape("equality row length".into()));
            }
            if *b >= 0.0 {
                rows.push((r.clone(), *b, RowKind::Eq));
            } else {
                rows.push((r.iter().map(|v| -v).collect(), -b, RowKind::Eq));
            }
        }
        let m = rows.len();
        let n_slack = rows.iter().filter(|r| r.2 != RowKind::Eq).count();
        let n_art = rows.iter().filter(|r| r.2 != RowKind::Le).count();
        let width = n + n_slack + n_art;
        // tableau: m constraint rows, each of length width + 1 (rhs last)
        let mut tab = vec![vec![0.0; width + 1]; m];
        let mut basis = vec![0usize; m];
        let mut slack_col = n;
        let mut art_col = n + n_slack;
        let mut artificial = vec![false; width];
        for (i, (r, b, kind)) in rows.iter().enumerate() {
            tab[i][..n].copy_from_slice(r);
            tab[i][width] = *b;
            match kind {
                RowKind::Le => {
                    tab[i][slack_col] = 1.0;
                    basis[i] = slack_col;
                    slack_col += 1;
                }
                RowKind::Ge => {
                    tab[i][slack_col] = -1.0;
                    slack_col += 1;
                    tab[i][art_col] = 1.0;
                    artificial[art_col] = true;
                    basis[i] = art_col;
                    art_col += 1;
                }
                RowKind::Eq => {
                    tab[i][art_col] = 1.0;
                    artificial[art_col] = true;
                    basis[i] = art_col;
                    art_col += 1;
                }
            }
        }

        if n_art > 0 {
            let phase1: Vec<f64> = (0..width)
                .map(|j| if artificial[j] { 1.0 } else { 0.0 })
                .collect();
            run_simplex(&mut tab, &mut basis, &phase1, &vec![true; width])?;
            let infeas: f64 = basis
                .iter()
                .enumerate()
                .filter(|(_, &b)| artificial[b])
                .map(|(i, _)| tab[i][width])
                .sum();
            if infeas > 1e-9 {
                return Err(LpError::Infeasible);
            }
            // drive remaining (zero-valued) artificials out of the basis
            for i in 0..m {
                if artificial[basis[i]] {
                    if let Some(j) = (0..width).find(|&j| !artificial[j] && tab[i][j].abs() > 1e-9) {
                        pivot(&mut tab, &mut basis, i, j);
                    }
                }
            }
        }

        let mut cost = vec![0.0; width];
        cost[..n].copy_from_slice(&self.cost);
        let allowed: Vec<bool> = (0..width).map(|j| !artificial[j]).collect();
        run_simplex(&mut tab, &mut basis, &cost, &allowed)?;

        let mut x = vec![0.0; n];
        for (i, &b) in basis.iter().enumerate() {
            if b < n {
                x[b] = tab[i][width];
            }
        }
        let objective = x.iter().zip(&self.cost).map(|(a, c)| a * c).sum();
        Ok(LpSolution { objective, x })
    }
}

fn pivot(tab: &mut [Vec<f64>], basis: &mut [usize], row: usize, col: usize) {
    let p = tab[row][col];
    for v in tab[row].iter_mut() {
        *v /= p;
    }
    let pivot_row = tab[row].clone();
    for (i, r) in tab.iter_mut().enumerate() {
        if i == row {
            continue;
        }
        let factor = r[col];
        if factor != 0.0 {
            for (v, pv) in r.iter_mut().zip(&pivot_row) {
                *v -= factor * pv;
            }
        }
    }
    basis[row] = col;
}

fn run_simplex(
    tab: &mut [Vec<f64>],
    basis: &mut [usize],
    cost: &[f64],
    allowed: &[bool],
) -> Result<(), LpError> {
    let width = cost.len();
    loop {
        // reduced costs: c_j - c_B^T B^-1 A_j
        let entering = (0..width).find(|&j| {
            if !allowed[j] || basis.contains(&j) {
                return false;
            }
            let mut rc = cost[j];
            for (i, &b) in basis.iter().enumerate() {
                rc -= cost[b] * tab[i][j];
            }
            rc < -PIVOT_TOL
        });
        let Some(col) = entering else {
            return Ok(());
        };
        let mut best: Option<(usize, f64)> = None;
        for (i, row) in tab.iter().enumerate() {
            let a = row[col];
            if a > PIVOT_TOL {
                let ratio = row[width] / a;
                match best {
                    None => best = Some((i, ratio)),
                    Some((bi, br)) => {
                        if ratio < br - 1e-15 || (ratio <= br + 1e-15 && basis[i] < basis[bi]) {
                            best = Some((i, ratio));
                        }
                    }
                }
            }
        }
        let Some((row, _)) = best else {
            return Err(LpError::Unbounded);
        };
        pivot(tab, basis, row, col);
    }
}

/// `min_p sum_w costs[w] p[w]` over the probability simplex intersected with the
/// L1 ball `||p - reference||_1 <= radius`, via the epigraph reformulation
/// (`p - q <= d`, `q - p <= d`, `sum d <= radius`).
pub fn l1_ball_min_expectation(
    costs: &[f64],
    reference: &[f64],
    radius: f64,
) -> Result<LpSolution, LpError> {
    let n = costs.len();
    if reference.len() != n {
        return Err(LpError::Shape("costs/reference length".into()));
    }
    // variables: p_0..p_{n-1}, d_0..d_{n-1}
    let mut cost = costs.to_vec();
    cost.extend(std::iter::repeat(0.0).take(n));
    let mut lp = LinearProgram::new(cost);
    let mut simplex = vec![0.0; 2 * n];
    simplex[..n].iter_mut().for_each(|v| *v = 1.0);
    lp.eq(simplex, 1.0);
    for w in 0..n {
        let mut up = vec![0.0; 2 * n];
        up[w] = 1.0;
        up[n + w] = -1.0;
        lp.le(up, reference[w]);
        let mut down = vec![0.0; 2 * n];
        down[w] = -1.0;
        down[n + w] = -1.0;
        lp.le(down, -reference[w]);
    }
    let mut budget = vec![0.0; 2 * n];
    budget[n..].iter_mut().for_each(|v| *v = 1.0);
    lp.le(budget, radius);
    let mut sol = lp.solve()?;
    sol.x.truncate(n);
    Ok(sol)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textbook_problem() {
        // max 3x + 5y s.t. x <= 4, 2y <= 12, 3x + 2y <= 18  ->  36 at (2, 6)
        let mut lp = LinearProgram::new(vec![-3.0, -5.0]);
        lp.le(vec![1.0, 0.0], 4.0)
            .le(vec![0.0, 2.0], 12.0)
            .le(vec![3.0, 2.0], 18.0);
        let sol = lp.solve().unwrap();
        assert!((sol.objective + 36.0).abs() < 1e-12);
        assert!((sol.x[0] - 2.0).abs() < 1e-12 && (sol.x[1] - 6.0).abs() < 1e-12);
    }

    #[test]
    fn detects_infeasible() {
        let mut lp = LinearProgram::new(vec![1.0]);
        lp.eq(vec![1.0], 2.0).le(vec![1.0], 1.0);
        assert_eq!(lp.solve().unwrap_err(), LpError::Infeasible);
    }

    #[test]
    fn detects_unbounded() {
        let mut lp = LinearProgram::new(vec![-1.0, 0.0]);
        lp.le(vec![0.0, 1.0], 1.0);
        assert_eq!(lp.solve().unwrap_err(), LpError::Unbounded);
    }

    #[test]
    fn l1_ball_hand_case() {
        let third = 1.0 / 3.0;
        let sol = l1_ball_min_expectation(&[1.0, 2.0, 3.0], &[third, third, third], 0.15).unwrap();
        assert!((sol.objective - 1.85).abs() < 1e-12);
        let full = l1_ball_min_expectation(&[1.0, 2.0, 3.0], &[0.2, 0.5, 0.3], 2.0).unwrap();
        assert!((full.objective - 1.0).abs() < 1e-12);
    }
}
