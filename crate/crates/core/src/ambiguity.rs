//! Discrete distributions on Ω, L1 ambiguity sets, and exact worst-case
//! expectations over them.
//!
//! For the L1 ball `{p ∈ Δ : ‖p − q‖₁ ≤ ε}` the infimum of `cᵀp` has a closed
//! greedy solution: moving mass `m` from coordinate `j` onto the cheapest
//! coordinate `k` costs `2m` of L1 budget and saves `m (c_j − c_k)`, so the
//! optimum strips up to `ε/2` of reference mass from the most expensive
//! coordinates first.

use std::f64::consts::PI;

use crate::error::{Error, Result};

const SUM_TOL: f64 = 1e-12;

/// A probability vector indexed by environment index.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDistribution {
    weights: Vec<f64>,
}

impl DiscreteDistribution {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Empty("distribution weights"));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidParameter(
                "distribution weights must be finite and non-negative".into(),
            ));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > SUM_TOL {
            return Err(Error::InvalidParameter(format!(
                "distribution weights sum to {sum}, expected 1"
            )));
        }
        Ok(DiscreteDistribution { weights })
    }

    /// Normalizes non-negative masses into a distribution.
    pub fn from_masses(masses: &[f64]) -> Result<Self> {
        let total: f64 = masses.iter().sum();
        if !(total.is_finite() && total > 0.0) {
            return Err(Error::InvalidParameter(format!("total mass {total} is not positive")));
        }
        DiscreteDistribution::new(masses.iter().map(|m| m / total).collect())
    }

    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Empty("distribution support"));
        }
        Ok(DiscreteDistribution {
            weights: vec![1.0 / n as f64; n],
        })
    }

    pub fn point_mass(n: usize, at: usize) -> Result<Self> {
        if at >= n {
            return Err(Error::InvalidParameter(format!("point mass index {at} >= {n}")));
        }
        let mut weights = vec![0.0; n];
        weights[at] = 1.0;
        Ok(DiscreteDistribution { weights })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// `Σ_w values[w] p(w)`.
    pub fn expectation(&self, values: &[f64]) -> f64 {
        assert_eq!(values.len(), self.weights.len(), "expectation: length mismatch");
        values.iter().zip(&self.weights).map(|(v, p)| v * p).sum()
    }
}

/// Distances supported for ambiguity sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Distance {
    L1,
}

/// All distributions within `radius` of `reference`.
#[derive(Debug, Clone, PartialEq)]
pub struct AmbiguitySet {
    reference: DiscreteDistribution,
    radius: f64,
    distance: Distance,
}

impl AmbiguitySet {
    pub fn l1(reference: DiscreteDistribution, radius: f64) -> Result<Self> {
        if !(radius.is_finite() && radius >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "ambiguity radius must be non-negative, got {radius}"
            )));
        }
        Ok(AmbiguitySet {
            reference,
            radius,
            distance: Distance::L1,
        })
    }

    pub fn reference(&self) -> &DiscreteDistribution {
        &self.reference
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn distance(&self) -> Distance {
        self.distance
    }

    pub fn len(&self) -> usize {
        self.reference.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reference.is_empty()
    }
}

/// `Σ_w |p(w) − q(w)|`.
pub fn l1_distance(p: &DiscreteDistribution, q: &DiscreteDistribution) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch {
            expected: p.len(),
            got: q.len(),
        });
    }
    Ok(p.weights().iter().zip(q.weights()).map(|(a, b)| (a - b).abs()).sum())
}

/// Exact `inf_{p ∈ set} Σ_w costs[w] p(w)`.
///
/// Panics if `costs` and the set's support differ in length.
pub fn worst_case_expectation(costs: &[f64], set: &AmbiguitySet) -> f64 {
    let q = set.reference().weights();
    assert_eq!(costs.len(), q.len(), "worst_case_expectation: length mismatch");
    let base: f64 = costs.iter().zip(q).map(|(c, p)| c * p).sum();
    let (cheapest, c_min) = argmin(costs);
    let c_max = costs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut budget = 0.5 * set.radius();
    if budget <= 0.0 {
        return base.clamp(c_min, c_max);
    }
    let mut order: Vec<usize> = (0..costs.len()).filter(|&j| j != cheapest).collect();
    order.sort_by(|&a, &b| costs[b].total_cmp(&costs[a]).then(a.cmp(&b)));
    let mut savings = 0.0;
    for j in order {
        let gap = costs[j] - c_min;
        if gap <= 0.0 || budget <= 0.0 {
            break;
        }
        let moved = q[j].min(budget);
        savings += moved * gap;
        budget -= moved;
    }
    (base - savings).clamp(c_min, base.min(c_max).max(c_min))
}

/// The minimizing distribution behind [`worst_case_expectation`].
pub fn worst_case_distribution(costs: &[f64], set: &AmbiguitySet) -> DiscreteDistribution {
    let q = set.reference().weights();
    assert_eq!(costs.len(), q.len(), "worst_case_distribution: length mismatch");
    let mut p = q.to_vec();
    let (cheapest, c_min) = argmin(costs);
    let mut budget = 0.5 * set.radius();
    let mut order: Vec<usize> = (0..costs.len()).filter(|&j| j != cheapest).collect();
    order.sort_by(|&a, &b| costs[b].total_cmp(&costs[a]).then(a.cmp(&b)));
    for j in order {
        if costs[j] - c_min <= 0.0 || budget <= 0.0 {
            break;
        }
        let moved = q[j].min(budget);
        p[j] -= moved;
        p[cheapest] += moved;
        budget -= moved;
    }
    DiscreteDistribution { weights: p }
}

/// [`worst_case_expectation`] for 0/1 costs, from the reference mass on the
/// ones and whether every coordinate is a one.
pub fn worst_case_indicator(mass_on: f64, all_on: bool, radius: f64) -> f64 {
    if all_on {
        1.0
    } else {
        (mass_on - 0.5 * radius.max(0.0)).max(0.0)
    }
}

fn argmin(costs: &[f64]) -> (usize, f64) {
    let mut best = (0, costs[0]);
    for (i, &c) in costs.iter().enumerate().skip(1) {
        if c < best.1 {
            best = (i, c);
        }
    }
    best
}

/// Empirical distribution of observed environment indices over `n_w` cells.
pub fn empirical_reference(observed: &[usize], n_w: usize) -> Result<DiscreteDistribution> {
    if observed.is_empty() {
        return Err(Error::Empty("observed environment sequence"));
    }
    let mut counts = vec![0usize; n_w];
    for &w in observed {
        if w >= n_w {
            return Err(Error::InvalidParameter(format!("environment index {w} >= {n_w}")));
        }
        counts[w] += 1;
    }
    let t = observed.len() as f64;
    Ok(DiscreteDistribution {
        weights: counts.into_iter().map(|c| c as f64 / t).collect(),
    })
}

/// Data-driven ambiguity radius `|Ω| √(log(|Ω| π² t² / (3δ)) / (2t))`.
pub fn epsilon_schedule(t: usize, omega_size: usize, delta: f64) -> f64 {
    let t = t.max(1) as f64;
    let n = omega_size as f64;
    n * ((n * PI * PI * t * t / (3.0 * delta)).ln() / (2.0 * t)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use drccbo_oracle::l1_ball_min_expectation;
    use proptest::prelude::*;

    fn set(q: Vec<f64>, r: f64) -> AmbiguitySet {
        AmbiguitySet::l1(DiscreteDistribution::new(q).unwrap(), r).unwrap()
    }

    #[test]
    fn l1_examples() {
        let p = DiscreteDistribution::new(vec![0.5, 0.5]).unwrap();
        let q = DiscreteDistribution::new(vec![0.3, 0.7]).unwrap();
        assert_eq!(l1_distance(&p, &p).unwrap(), 0.0);
        assert!((l1_distance(&p, &q).unwrap() - 0.4).abs() < 1e-15);
        let a = DiscreteDistribution::point_mass(2, 0).unwrap();
        let b = DiscreteDistribution::point_mass(2, 1).unwrap();
        assert_eq!(l1_distance(&a, &b).unwrap(), 2.0);
        let c = DiscreteDistribution::uniform(3).unwrap();
        assert!(matches!(l1_distance(&a, &c), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn distribution_validation() {
        assert!(DiscreteDistribution::new(vec![0.5, 0.6]).is_err());
        assert!(DiscreteDistribution::new(vec![-0.1, 1.1]).is_err());
        assert!(DiscreteDistribution::new(vec![]).is_err());
        assert!(AmbiguitySet::l1(DiscreteDistribution::uniform(2).unwrap(), -0.1).is_err());
    }

    #[test]
    fn zero_radius_is_reference_expectation() {
        let s = set(vec![0.2, 0.5, 0.3], 0.0);
        assert_eq!(worst_case_expectation(&[1.0, 2.0, 3.0], &s), 1.0 * 0.2 + 2.0 * 0.5 + 3.0 * 0.3);
    }

    #[test]
    fn full_budget_concentrates_on_minimum() {
        for r in [2.0, 2.5, 96.2] {
            let s = set(vec![0.2, 0.5, 0.3], r);
            assert_eq!(worst_case_expectation(&[1.0, 2.0, 3.0], &s), 1.0);
        }
    }

    #[test]
    fn hand_case_matches_lp_oracle() {
        let third = 1.0 / 3.0;
        let s = set(vec![third, third, third], 0.15);
        let v = worst_case_expectation(&[1.0, 2.0, 3.0], &s);
        assert!((v - 1.85).abs() < 1e-14);
        let lp = l1_ball_min_expectation(&[1.0, 2.0, 3.0], &[third; 3], 0.15).unwrap();
        assert!((v - lp.objective).abs() < 1e-12);
    }

    #[test]
    fn minimizer_lies_in_the_set() {
        let s = set(vec![0.1, 0.2, 0.3, 0.4], 0.5);
        let costs = [4.0, 1.0, 3.0, 2.0];
        let p = worst_case_distribution(&costs, &s);
        assert!(l1_distance(&p, s.reference()).unwrap() <= 0.5 + 1e-15);
        assert!((p.expectation(&costs) - worst_case_expectation(&costs, &s)).abs() < 1e-14);
    }

    #[test]
    fn empirical_examples() {
        assert_eq!(empirical_reference(&[1], 3).unwrap().weights(), &[0.0, 1.0, 0.0]);
        assert_eq!(empirical_reference(&[0, 1, 0, 0], 2).unwrap().weights(), &[0.75, 0.25]);
        assert!(empirical_reference(&[], 2).is_err());
        assert!(empirical_reference(&[2], 2).is_err());
    }

    #[test]
    fn epsilon_schedule_values() {
        // 50 * sqrt(0.5 * ln(50 π² / 0.3))
        let e1 = epsilon_schedule(1, 50, 0.1);
        let expected = 50.0 * (0.5 * (50.0 * PI * PI / 0.3_f64).ln()).sqrt();
        assert!((e1 - expected).abs() < 1e-12);
        assert!((e1 - 96.21).abs() < 0.01);
        assert!(epsilon_schedule(10_000, 50, 0.1) < epsilon_schedule(100, 50, 0.1));
        for t in [1, 2, 10, 1000, 1_000_000] {
            assert!(epsilon_schedule(t, 50, 0.1) > 0.0);
        }
    }

    fn instance() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, f64)> {
        (1usize..=20).prop_flat_map(|n| {
            (
                prop::collection::vec(-10.0f64..10.0, n),
                prop::collection::vec(0.0f64..1.0, n),
                0.0f64..2.5,
            )
        })
    }

    fn normalize(m: &[f64]) -> Vec<f64> {
        let total: f64 = m.iter().sum();
        if total <= 0.0 {
            vec![1.0 / m.len() as f64; m.len()]
        } else {
            m.iter().map(|v| v / total).collect()
        }
    }

    proptest! {
        #[test]
        fn agrees_with_lp_oracle((costs, masses, r) in instance()) {
            let q = normalize(&masses);
            let s = AmbiguitySet::l1(DiscreteDistribution::from_masses(&q).unwrap(), r).unwrap();
            let v = worst_case_expectation(&costs, &s);
            let lp = l1_ball_min_expectation(&costs, s.reference().weights(), r).unwrap();
            prop_assert!((v - lp.objective).abs() < 1e-9, "greedy {} lp {}", v, lp.objective);
        }

        #[test]
        fn monotone_in_radius((costs, masses, r) in instance(), extra in 0.0f64..1.0) {
            let q = DiscreteDistribution::from_masses(&normalize(&masses)).unwrap();
            let small = worst_case_expectation(&costs, &AmbiguitySet::l1(q.clone(), r).unwrap());
            let large = worst_case_expectation(&costs, &AmbiguitySet::l1(q, r + extra).unwrap());
            prop_assert!(large <= small + 1e-12);
        }

        #[test]
        fn translation_equivariant((costs, masses, r) in instance(), kappa in -5.0f64..5.0) {
            let s = AmbiguitySet::l1(DiscreteDistribution::from_masses(&normalize(&masses)).unwrap(), r).unwrap();
            let shifted: Vec<f64> = costs.iter().map(|c| c + kappa).collect();
            let a = worst_case_expectation(&costs, &s);
            let b = worst_case_expectation(&shifted, &s);
            prop_assert!((b - (a + kappa)).abs() < 1e-12);
        }

        #[test]
        fn binary_costs_stay_in_unit_interval(
            bits in prop::collection::vec(any::<bool>(), 1..20),
            r in 0.0f64..3.0,
        ) {
            let n = bits.len();
            let s = AmbiguitySet::l1(DiscreteDistribution::uniform(n).unwrap(), r).unwrap();
            let costs: Vec<f64> = bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
            let v = worst_case_expectation(&costs, &s);
            prop_assert!((0.0..=1.0).contains(&v));
        }

        #[test]
        fn indicator_closed_form_matches((_, masses, r) in instance(), bits in prop::collection::vec(any::<bool>(), 20)) {
            let q = normalize(&masses);
            let n = q.len();
            let costs: Vec<f64> = bits[..n].iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
            let mass_on: f64 = costs.iter().zip(&q).map(|(c, p)| c * p).sum();
            let all_on = bits[..n].iter().all(|&b| b);
            let s = set(q, r);
            let v = worst_case_indicator(mass_on, all_on, r);
            prop_assert!((v - worst_case_expectation(&costs, &s)).abs() < 1e-12);
        }

        #[test]
        fn bounded_by_min_and_reference((costs, masses, r) in instance()) {
            let s = AmbiguitySet::l1(DiscreteDistribution::from_masses(&normalize(&masses)).unwrap(), r).unwrap();
            let v = worst_case_expectation(&costs, &s);
            let min = costs.iter().copied().fold(f64::INFINITY, f64::min);
            prop_assert!(v >= min - 1e-12);
            prop_assert!(v <= s.reference().expectation(&costs) + 1e-12);
        }
    }

    #[test]
    fn empirical_converges_to_source() {
        use rand::distr::{weighted::WeightedIndex, Distribution};
        use rand::SeedableRng;
        let masses: Vec<f64> = (0..50).map(|i| 1.0 + (i as f64 * 0.37).sin().abs()).collect();
        let truth = DiscreteDistribution::from_masses(&masses).unwrap();
        let sampler = WeightedIndex::new(truth.weights()).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let draws: Vec<usize> = (0..10_000).map(|_| sampler.sample(&mut rng)).collect();
        let emp = empirical_reference(&draws, 50).unwrap();
        assert!(l1_distance(&emp, &truth).unwrap() < 0.05 * 50f64.sqrt());
        assert!(l1_distance(&emp, &truth).unwrap() < 0.1);
    }
}
