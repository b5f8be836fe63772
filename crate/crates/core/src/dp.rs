//! Finite-horizon planner for two categories and any number of types.
//!
//! With unit departure, the truncated return of a schedule depends only on
//! the running counts `(c1, c2)` of each category:
//!
//! ```text
//! V_H = sum_{i=1..H} alpha(c1_i, c2_i),   alpha(c1, c2) = sum_x q_x P1x^c1 P2x^c2
//! ```
//!
//! so the best `H`-step schedule solves
//! `D^h(c1, c2) = max(D^{h-1}(c1 - 1, c2), D^{h-1}(c1, c2 - 1)) + alpha(c1, c2)`
//! over the `h + 1` cells of each layer, `O(H^2)` cells in total.
//!
//! Values are kept in two rolling rows; choices are kept for every cell so
//! the schedule can be recovered by backtracking.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Instance;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpPlan {
    /// Category per iteration, 0-based.
    pub actions: Vec<usize>,
    pub value: f64,
    /// Number of table cells filled: `H (H + 3) / 2`.
    pub cells: usize,
}

struct Alpha {
    weights: Vec<f64>,
    first_pow: Vec<Vec<f64>>,
    second_pow: Vec<Vec<f64>>,
}

impl Alpha {
    fn new(instance: &Instance, weights: &[f64], horizon: usize) -> Self {
        let powers = |a: usize| -> Vec<Vec<f64>> {
            (0..weights.len())
                .map(|x| {
                    let p = instance.click(a, x);
                    std::iter::successors(Some(1.0), |v| Some(v * p))
                        .take(horizon + 1)
                        .collect()
                })
                .collect()
        };
        Alpha {
            weights: weights.to_vec(),
            first_pow: powers(0),
            second_pow: powers(1),
        }
    }

    fn at(&self, c1: usize, c2: usize) -> f64 {
        self.weights
            .iter()
            .enumerate()
            .map(|(x, w)| w * self.first_pow[x][c1] * self.second_pow[x][c2])
            .sum()
    }
}

fn check(instance: &Instance, weights: &[f64], horizon: usize) -> Result<()> {
    if horizon == 0 {
        return Err(Error::InvalidArgument(
            "horizon must be at least 1".to_string(),
        ));
    }
    if instance.num_categories() != 2 {
        return Err(Error::Unsupported(format!(
            "exactly two categories (got K={})",
            instance.num_categories()
        )));
    }
    instance.require_unit_departure()?;
    if weights.len() != instance.num_types() {
        return Err(Error::InvalidArgument(format!(
            "expected {} type weights, got {}",
            instance.num_types(),
            weights.len()
        )));
    }
    Ok(())
}

/// Runs the forward recursion up to `horizon`, calling `layer(h, row)` with
/// the values `row[c1] = D^h(c1, h - c1)` after each layer. Returns the
/// choice triangle: `choices[h-1][c1]` is true when the last step of the
/// best path into `(c1, h - c1)` was category 1.
fn forward(alpha: &Alpha, horizon: usize, mut layer: impl FnMut(usize, &[f64])) -> Vec<Vec<bool>> {
    let mut prev = vec![0.0];
    let mut next = Vec::with_capacity(horizon + 1);
    let mut choices = Vec::with_capacity(horizon);
    for h in 1..=horizon {
        next.clear();
        let mut picks = Vec::with_capacity(h + 1);
        for c1 in 0..=h {
            let c2 = h - c1;
            // z1 = 1: arrived from (c1 - 1, c2); z2 = 1: from (c1, c2 - 1).
            let via_first = (c1 >= 1).then(|| prev[c1 - 1]);
            let via_second = (c2 >= 1).then(|| prev[c1]);
            let (best, took_first) = match (via_first, via_second) {
                (Some(f), Some(s)) if f >= s => (f, true),
                (Some(_), Some(s)) => (s, false),
                (Some(f), None) => (f, true),
                (None, Some(s)) => (s, false),
                (None, None) => unreachable!("every cell has a parent"),
            };
            next.push(best + alpha.at(c1, c2));
            picks.push(took_first);
        }
        layer(h, &next);
        choices.push(picks);
        std::mem::swap(&mut prev, &mut next);
    }
    choices
}

/// Best `horizon`-step schedule for the instance's prior.
pub fn dp_plan(instance: &Instance, horizon: usize) -> Result<DpPlan> {
    dp_plan_with_prior(instance, instance.prior(), horizon)
}

/// Best `horizon`-step schedule for an explicit type distribution.
///
/// Cell ties prefer category 1; among final cells the one with the most
/// category-1 recommendations wins ties.
pub fn dp_plan_with_prior(instance: &Instance, weights: &[f64], horizon: usize) -> Result<DpPlan> {
    check(instance, weights, horizon)?;
    let alpha = Alpha::new(instance, weights, horizon);
    let mut last = Vec::new();
    let choices = forward(&alpha, horizon, |h, row| {
        if h == horizon {
            last = row.to_vec();
        }
    });

    let mut c1 = horizon;
    for c in (0..horizon).rev() {
        if last[c] > last[c1] {
            c1 = c;
        }
    }
    let value = last[c1];

    let mut actions = vec![0; horizon];
    for h in (1..=horizon).rev() {
        if choices[h - 1][c1] {
            actions[h - 1] = 0;
            c1 -= 1;
        } else {
            actions[h - 1] = 1;
        }
    }
    Ok(DpPlan {
        actions,
        value,
        cells: horizon * (horizon + 3) / 2,
    })
}

/// Optimal truncated value for every horizon `1..=max_horizon`, from a
/// single forward pass.
pub fn dp_value_curve(instance: &Instance, max_horizon: usize) -> Result<Vec<(usize, f64)>> {
    check(instance, instance.prior(), max_horizon)?;
    let alpha = Alpha::new(instance, instance.prior(), max_horizon);
    let mut curve = Vec::with_capacity(max_horizon);
    forward(&alpha, max_horizon, |h, row| {
        let best = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        curve.push((h, best));
    });
    Ok(curve)
}
