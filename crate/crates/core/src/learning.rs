//! UCB-Hybrid over a finite set of policies, the policy sets it runs on,
//! sub-exponential parameters for episode returns, and regret bookkeeping.

use serde::{Deserialize, Serialize};

use crate::environment::{Learner, StreamResult};
use crate::error::{Error, Result};
use crate::model::{EpisodeResult, Instance, Policy};
use crate::planning;

/// Sub-exponential parameters fed to UCB-Hybrid: `tilde_tau` bounds the
/// scale of every policy's centred return and `eta` bounds `b^2 / tau^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubExpParams {
    pub tilde_tau: f64,
    pub eta: f64,
}

fn margin_scale(epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "epsilon = {epsilon} is outside (0, 1)"
        )));
    }
    Ok(8.0 * std::f64::consts::E / (1.0 / (1.0 - epsilon)).ln())
}

/// Fixed-arm policies with a single user type:
/// `tilde_tau = 8e / ln(1 / (1 - epsilon))`, `eta = 1`.
pub fn subexp_params_single_type(epsilon: f64) -> Result<SubExpParams> {
    Ok(SubExpParams {
        tilde_tau: margin_scale(epsilon)?,
        eta: 1.0,
    })
}

/// Threshold policies with two user types; the same constants as the
/// single-type case.
pub fn subexp_params_two_type(epsilon: f64) -> Result<SubExpParams> {
    subexp_params_single_type(epsilon)
}

/// Per-arm scale `tau_a = b_a = -8e / ln(1 - L_a (1 - P_a))` of a fixed-arm
/// return for a single user type.
pub fn fixed_arm_subexp_scale(click: f64, depart: f64) -> f64 {
    -8.0 * std::f64::consts::E / (1.0 - depart * (1.0 - click)).ln()
}

/// `{pi^a : a in [K]}`, with policy id `a`.
pub fn build_fixed_arm_policy_set(num_categories: usize) -> Vec<Policy> {
    (0..num_categories).map(Policy::fixed).collect()
}

/// All `(a, h)` threshold policies with `a in {1, 2}` and `h <= H`, ordered
/// by first category, then `h`. Contains `2H + 2` distinct policies.
pub fn build_threshold_policy_set(max_switch: usize) -> Vec<Policy> {
    (0..2)
        .flat_map(|first| {
            (0..=max_switch).map(move |h| Policy::threshold(first, h).expect("first is 0 or 1"))
        })
        .collect()
}

/// `H = ceil(ln(T / epsilon) / ln(1 / (1 - epsilon)))`, the smallest horizon
/// with `(1 - epsilon)^H / epsilon <= 1 / T`.
pub fn horizon_for_t(num_users: usize, epsilon: f64) -> Result<usize> {
    if num_users < 2 {
        return Err(Error::InvalidArgument("T must be at least 2".to_string()));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "epsilon = {epsilon} is outside (0, 1)"
        )));
    }
    let raw = (num_users as f64 / epsilon).ln() / (1.0 / (1.0 - epsilon)).ln();
    // Snap values that are integral up to rounding so ln 4 / ln 2 gives 2.
    let snapped = if (raw - raw.round()).abs() < 1e-9 {
        raw.round()
    } else {
        raw.ceil()
    };
    Ok(snapped.max(0.0) as usize)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyStats {
    pub pulls: u64,
    pub return_sum: f64,
    pub upper_bound: f64,
}

impl PolicyStats {
    pub fn mean(&self) -> Option<f64> {
        (self.pulls > 0).then(|| self.return_sum / self.pulls as f64)
    }
}

/// UCB with hybrid confidence radii.
///
/// Every policy starts with an infinite upper bound. After the `n`-th return
/// of a policy its bound becomes the empirical mean plus
/// `8 sqrt(eta) tilde_tau ln T / n` while `n < 8 eta ln T`, and
/// `sqrt(8 tilde_tau^2 ln T / n)` afterwards. The next user gets the policy
/// with the largest bound, lowest id on ties.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UcbHybrid {
    policies: Vec<Policy>,
    stats: Vec<PolicyStats>,
    num_users: usize,
    log_t: f64,
    params: SubExpParams,
    elapsed: u64,
    pending: Option<usize>,
}

impl UcbHybrid {
    pub fn new(policies: Vec<Policy>, num_users: usize, params: SubExpParams) -> Result<Self> {
        if policies.is_empty() {
            return Err(Error::InvalidArgument("policy set is empty".to_string()));
        }
        if num_users < 2 {
            return Err(Error::InvalidArgument("T must be at least 2".to_string()));
        }
        if !(params.tilde_tau > 0.0 && params.eta > 0.0) {
            return Err(Error::InvalidArgument(
                "tilde_tau and eta must be positive".to_string(),
            ));
        }
        let stats = vec![
            PolicyStats {
                pulls: 0,
                return_sum: 0.0,
                upper_bound: f64::INFINITY,
            };
            policies.len()
        ];
        Ok(UcbHybrid {
            policies,
            stats,
            num_users,
            log_t: (num_users as f64).ln(),
            params,
            elapsed: 0,
            pending: None,
        })
    }

    pub fn policies(&self) -> &[Policy] {
        &self.policies
    }

    pub fn stats(&self) -> &[PolicyStats] {
        &self.stats
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn params(&self) -> SubExpParams {
        self.params
    }

    /// Episodes whose return has been observed.
    pub fn elapsed(&self) -> u64 {
        self.elapsed
    }

    /// Pull count below which the linear radius applies: `8 eta ln T`.
    pub fn switch_count(&self) -> f64 {
        8.0 * self.params.eta * self.log_t
    }

    /// Confidence radius after `n >= 1` observations.
    pub fn radius(&self, n: u64) -> f64 {
        let n_f = n as f64;
        let SubExpParams { tilde_tau, eta } = self.params;
        if n_f < self.switch_count() {
            8.0 * eta.sqrt() * tilde_tau * self.log_t / n_f
        } else {
            (8.0 * tilde_tau * tilde_tau * self.log_t / n_f).sqrt()
        }
    }

    fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, s) in self.stats.iter().enumerate().skip(1) {
            if s.upper_bound > self.stats[best].upper_bound {
                best = i;
            }
        }
        best
    }

    /// Records the return of the pending policy, then picks the next one.
    pub fn step(&mut self, last_return: Option<f64>) -> Result<usize> {
        if let Some(r) = last_return {
            let id = self.pending.ok_or(Error::UnexpectedObservation(0))?;
            self.record(id, r)?;
        }
        self.select()
    }

    fn record(&mut self, id: usize, value: f64) -> Result<()> {
        if self.pending != Some(id) {
            return Err(Error::UnexpectedObservation(id));
        }
        self.pending = None;
        self.elapsed += 1;
        let pulls = self.stats[id].pulls + 1;
        let radius = self.radius(pulls);
        let s = &mut self.stats[id];
        s.pulls = pulls;
        s.return_sum += value;
        s.upper_bound = s.return_sum / pulls as f64 + radius;
        Ok(())
    }
}

impl Learner for UcbHybrid {
    fn select(&mut self) -> Result<usize> {
        let id = self.argmax();
        self.pending = Some(id);
        Ok(id)
    }

    fn policy(&self, id: usize) -> &Policy {
        &self.policies[id]
    }

    fn observe(&mut self, id: usize, outcome: EpisodeResult) -> Result<()> {
        self.record(id, outcome.return_clicks as f64)
    }
}

/// Realized cumulative regret `t v* - sum_{s <= t} V_s` after every episode.
pub fn regret_curve(trace: &StreamResult, v_star: f64) -> Vec<f64> {
    let mut total = 0.0;
    trace
        .returns()
        .enumerate()
        .map(|(t, r)| {
            total += r as f64;
            (t + 1) as f64 * v_star - total
        })
        .collect()
}

/// Cumulative regret against the expected value of each chosen policy:
/// `sum_{s <= t} (v* - E[V^{pi_s}])`. Its expectation equals that of
/// [`regret_curve`] without the per-user return noise.
pub fn pseudo_regret_curve(trace: &StreamResult, policy_values: &[f64], v_star: f64) -> Vec<f64> {
    let mut total = 0.0;
    trace
        .episodes
        .iter()
        .map(|e| {
            total += v_star - policy_values[e.policy_id];
            total
        })
        .collect()
}

/// Optimal expected return, when an exact planner covers the instance.
pub fn optimal_value(instance: &Instance) -> Result<f64> {
    if instance.num_types() == 1 {
        return Ok(planning::single_type_optimal_arm(instance)?.1);
    }
    if instance.is_two_by_two() && instance.has_unit_departure() {
        return Ok(planning::optimal_policy_2x2(instance)?.value);
    }
    Err(Error::Unsupported(
        "M = 1, or M = K = 2 with unit departure, for an exact optimum".to_string(),
    ))
}
