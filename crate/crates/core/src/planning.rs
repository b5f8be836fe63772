//! Exact planners.
//!
//! * single user type: the best fixed arm maximizes `P / (L (1 - P))`;
//! * two types, unit departure: belief updates, belief-category walks and
//!   the closed-form return `sum_i b P1x^m1 P2x^m2 + (1 - b) P1y^m1 P2y^m2`;
//! * the constant-time 2x2 planner built on the three-way structure split.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Instance, Policy};
use crate::structure::{self, Structure, StructureClass};

/// Tolerance for every value comparison made while choosing a plan.
pub const VALUE_TOLERANCE: f64 = 1e-12;

/// Candidate switch points beyond this are clamped and flagged.
pub const MAX_SWITCH_POINT: f64 = 1e6;

/// Best fixed arm for a single-type instance and its expected return.
/// Ties go to the lowest category index.
pub fn single_type_optimal_arm(instance: &Instance) -> Result<(usize, f64)> {
    if instance.num_types() != 1 {
        return Err(Error::Unsupported(format!(
            "a single user type (got M={})",
            instance.num_types()
        )));
    }
    let mut best = (0, f64::NEG_INFINITY);
    for a in 0..instance.num_categories() {
        let value = fixed_arm_single_type_value(instance.click(a, 0), instance.depart(a, 0));
        if value > best.1 {
            best = (a, value);
        }
    }
    Ok(best)
}

/// Expected clicks of a fixed arm for one user type: `P / (L (1 - P))`.
pub fn fixed_arm_single_type_value(click: f64, depart: f64) -> f64 {
    click / (depart * (1.0 - click))
}

/// Exact expected return of an open-loop schedule, for any instance.
///
/// Per type the user is still present at iteration `j` with probability
/// `S_j`, where `S_{j+1} = S_j (1 - L (1 - P))`; the tail after the prefix is
/// a geometric series.
pub fn policy_value(instance: &Instance, policy: &Policy) -> Result<f64> {
    policy_value_with_prior(instance, policy, instance.prior())
}

/// [`policy_value`] with an explicit type distribution in place of the prior.
pub fn policy_value_with_prior(
    instance: &Instance,
    policy: &Policy,
    weights: &[f64],
) -> Result<f64> {
    instance.require_policy(policy)?;
    if weights.len() != instance.num_types() {
        return Err(Error::InvalidArgument(format!(
            "expected {} type weights, got {}",
            instance.num_types(),
            weights.len()
        )));
    }
    let mut total = 0.0;
    for (x, &w) in weights.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let mut present = 1.0;
        let mut value = 0.0;
        for &a in policy.prefix() {
            let p = instance.click(a, x);
            value += present * p;
            present *= 1.0 - instance.depart(a, x) * (1.0 - p);
        }
        let t = policy.tail();
        value += present * fixed_arm_single_type_value(instance.click(t, x), instance.depart(t, x));
        total += w * value;
    }
    Ok(total)
}

/// Posterior probability of type x (the first type) after a click.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct Belief(f64);

impl Belief {
    pub fn new(b: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&b) {
            Ok(Belief(b))
        } else {
            Err(Error::InvalidArgument(format!(
                "belief {b} is outside [0, 1]"
            )))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Belief after a click on category `a`:
/// `b P[a][x] / (b P[a][x] + (1 - b) P[a][y])`.
pub fn belief_update(b: Belief, a: usize, instance: &Instance) -> Result<Belief> {
    instance.require_two_by_two()?;
    let (px, py) = (instance.click(a, 0), instance.click(a, 1));
    let num = b.0 * px;
    Ok(Belief(num / (num + (1.0 - b.0) * py)))
}

/// General-M posterior over types after a click on category `a`.
pub fn type_posterior(weights: &[f64], a: usize, instance: &Instance) -> Vec<f64> {
    let mut post: Vec<f64> = weights
        .iter()
        .enumerate()
        .map(|(x, &w)| w * instance.click(a, x))
        .collect();
    let z: f64 = post.iter().sum();
    post.iter_mut().for_each(|p| *p /= z);
    post
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WalkStep {
    /// Belief when the category is chosen.
    pub belief: f64,
    pub category: usize,
    /// Times category 1 was chosen up to and including this step.
    pub count_first: u64,
    /// Times category 2 was chosen up to and including this step.
    pub count_second: u64,
}

/// The deterministic walk of beliefs and categories a policy induces when
/// every recommendation is clicked.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BeliefWalk {
    pub steps: Vec<WalkStep>,
}

pub fn belief_category_walk(
    policy: &Policy,
    b0: Belief,
    len: usize,
    instance: &Instance,
) -> Result<BeliefWalk> {
    instance.require_two_by_two()?;
    instance.require_unit_departure()?;
    instance.require_policy(policy)?;
    let mut steps = Vec::with_capacity(len);
    let (mut b, mut m1, mut m2) = (b0, 0u64, 0u64);
    for j in 0..len {
        let a = policy.action(j);
        if a == 0 {
            m1 += 1;
        } else {
            m2 += 1;
        }
        steps.push(WalkStep {
            belief: b.0,
            category: a,
            count_first: m1,
            count_second: m2,
        });
        b = belief_update(b, a, instance)?;
    }
    Ok(BeliefWalk { steps })
}

/// Partial sum of the closed-form return plus a bound on what is missing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncatedValue {
    pub value: f64,
    /// `(1 - epsilon)^H / epsilon`; the full return lies in
    /// `[value, value + tail_bound]`.
    pub tail_bound: f64,
}

/// Sum of the first `horizon` terms of the closed-form return, computed from
/// the walk's category counts.
pub fn expected_return_truncated(
    instance: &Instance,
    policy: &Policy,
    b: Belief,
    horizon: usize,
) -> Result<TruncatedValue> {
    if horizon == 0 {
        return Err(Error::InvalidArgument(
            "horizon must be at least 1".to_string(),
        ));
    }
    let walk = belief_category_walk(policy, b, horizon, instance)?;
    let p = instance.click_matrix();
    let (x1, x2, y1, y2) = (p[0][0], p[1][0], p[0][1], p[1][1]);
    let bx = b.0;
    let value = walk
        .steps
        .iter()
        .map(|s| {
            let (m1, m2) = (s.count_first as i32, s.count_second as i32);
            bx * x1.powi(m1) * x2.powi(m2) + (1.0 - bx) * y1.powi(m1) * y2.powi(m2)
        })
        .sum();
    let eps = instance.epsilon();
    Ok(TruncatedValue {
        value,
        tail_bound: (1.0 - eps).powi(horizon as i32) / eps,
    })
}

/// Where a threshold policy hands over to the other category.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SwitchPoint {
    /// Switch after this many recommendations of the first category.
    After(u64),
    /// Never switch.
    Never,
}

/// Coefficients `(c1, c2, c3)` with `value(N) = c1 Pfx^N + c2 Pfy^N + c3`
/// for the threshold policy that plays `first` for `N` iterations.
pub fn threshold_coefficients(
    instance: &Instance,
    first: usize,
    b: Belief,
) -> Result<(f64, f64, f64)> {
    instance.require_two_by_two()?;
    instance.require_unit_departure()?;
    if first > 1 {
        return Err(Error::InvalidPolicy(format!("no category {}", first + 1)));
    }
    let second = 1 - first;
    let (fx, fy) = (instance.click(first, 0), instance.click(first, 1));
    let (sx, sy) = (instance.click(second, 0), instance.click(second, 1));
    let b = b.0;
    let c1 = b * (fx / (fx - 1.0) + sx / (1.0 - sx));
    let c2 = (1.0 - b) * (fy / (fy - 1.0) + sy / (1.0 - sy));
    let c3 = b * fx / (1.0 - fx) + (1.0 - b) * fy / (1.0 - fy);
    Ok((c1, c2, c3))
}

/// Exact value of the threshold policy `(first, N)` on a 2x2 unit-departure
/// instance with belief `b` on the first type.
pub fn threshold_value_exact(
    instance: &Instance,
    first: usize,
    switch: SwitchPoint,
    b: Belief,
) -> Result<f64> {
    match switch {
        SwitchPoint::Never => fixed_arm_value_2x2(instance, first, b),
        SwitchPoint::After(n) => {
            let (c1, c2, c3) = threshold_coefficients(instance, first, b)?;
            let (fx, fy) = (instance.click(first, 0), instance.click(first, 1));
            let n = n as f64;
            Ok(c1 * fx.powf(n) + c2 * fy.powf(n) + c3)
        }
    }
}

/// `b Pax / (1 - Pax) + (1 - b) Pay / (1 - Pay)`.
pub fn fixed_arm_value_2x2(instance: &Instance, a: usize, b: Belief) -> Result<f64> {
    instance.require_two_by_two()?;
    instance.require_unit_departure()?;
    let (px, py) = (instance.click(a, 0), instance.click(a, 1));
    Ok(b.0 * px / (1.0 - px) + (1.0 - b.0) * py / (1.0 - py))
}

/// Stationary point of `f(N) = c1 P2x^N + c2 P2y^N + c3` for a normalized
/// dominant-column instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaddleComputation {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub n_tilde: f64,
    pub n_star: f64,
    /// Set when `n_star` exceeded [`MAX_SWITCH_POINT`] and was clamped.
    pub capped: bool,
}

pub fn saddle_point(instance: &Instance, b: Belief) -> Result<SaddleComputation> {
    instance.require_two_by_two()?;
    let found = structure::classify(instance)?;
    let p = instance.click_matrix();
    let normalized = p[0][0] >= p[0][1] && p[0][0] >= p[1][0] && p[0][0] >= p[1][1];
    if !normalized || found != Structure::DominantColumn {
        return Err(Error::WrongStructure {
            expected: Structure::DominantColumn,
            found,
        });
    }
    if !(b.0 > 0.0 && b.0 < 1.0) {
        return Err(Error::DegenerateSaddle(format!(
            "belief {} is not in (0, 1)",
            b.0
        )));
    }
    let (p2x, p2y) = (p[1][0], p[1][1]);
    if p2x == p2y {
        return Err(Error::DegenerateSaddle(
            "category 2 is uninformative (P2x == P2y)".to_string(),
        ));
    }
    let (c1, c2, c3) = threshold_coefficients(instance, 1, b)?;
    if c1 <= 0.0 {
        return Err(Error::DegenerateSaddle(
            "c1 vanishes (P1x == P2x)".to_string(),
        ));
    }
    let n_tilde = (-c2 * p2y.ln() / (c1 * p2x.ln())).ln() / (p2x / p2y).ln();
    let mut n_star = n_tilde.max(0.0);
    let capped = n_star > MAX_SWITCH_POINT;
    if capped {
        n_star = MAX_SWITCH_POINT;
    }
    Ok(SaddleComputation {
        c1,
        c2,
        c3,
        n_tilde,
        n_star,
        capped,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    /// Policy over the original category labels.
    pub policy: Policy,
    pub value: f64,
}

/// Output of the 2x2 structure planner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub structure: StructureClass,
    pub saddle: Option<SaddleComputation>,
    /// Every policy compared, in tie-breaking order.
    pub candidates: Vec<Candidate>,
    pub policy: Policy,
    pub value: f64,
}

/// Optimal policy for a 2x2 instance with unit departure.
///
/// Dominant row plays category 1 (after normalization) forever. Dominant
/// column compares `pi^1`, the threshold policies switching at the floor
/// and ceiling of `N*`, and `pi^2`; when `N*` is undefined (uninformative
/// category 2, vanishing `c1`, or a degenerate prior) the value is monotone
/// in the switch point and only `pi^1` and `pi^2` are compared. Dominant
/// diagonal compares `pi^1` and `pi^2`. Ties go to the earlier switch.
pub fn optimal_policy_2x2(instance: &Instance) -> Result<Plan> {
    instance.require_two_by_two()?;
    instance.require_unit_departure()?;
    let (norm, class) = structure::normalize_2x2(instance)?;
    let b = Belief::new(norm.prior()[0])?;

    let mut normalized_candidates: Vec<(Policy, f64)> = Vec::new();
    let mut saddle = None;
    normalized_candidates.push((Policy::fixed(0), fixed_arm_value_2x2(&norm, 0, b)?));
    match class.variant {
        Structure::DominantRow => {}
        Structure::DominantColumn => {
            if let Ok(s) = saddle_point(&norm, b) {
                let lo = s.n_star.floor() as u64;
                let hi = s.n_star.ceil() as u64;
                for n in [lo, hi] {
                    let policy = Policy::threshold(1, n as usize)?;
                    if n == 0 || normalized_candidates.iter().any(|(p, _)| *p == policy) {
                        continue;
                    }
                    let value = threshold_value_exact(&norm, 1, SwitchPoint::After(n), b)?;
                    normalized_candidates.push((policy, value));
                }
                saddle = Some(s);
            }
            normalized_candidates.push((Policy::fixed(1), fixed_arm_value_2x2(&norm, 1, b)?));
        }
        Structure::DominantDiagonal => {
            normalized_candidates.push((Policy::fixed(1), fixed_arm_value_2x2(&norm, 1, b)?));
        }
    }

    let mut best = 0;
    for (i, (_, v)) in normalized_candidates.iter().enumerate().skip(1) {
        if *v > normalized_candidates[best].1 + VALUE_TOLERANCE {
            best = i;
        }
    }
    let candidates: Vec<Candidate> = normalized_candidates
        .iter()
        .map(|(p, v)| Candidate {
            policy: structure::denormalize_policy(p, &class),
            value: *v,
        })
        .collect();
    Ok(Plan {
        structure: class,
        saddle,
        policy: candidates[best].policy.clone(),
        value: candidates[best].value,
        candidates,
    })
}
