//! Independent verification paths.
//!
//! Nothing here calls into `planning` or `dp`: values are recomputed by
//! simulation, by running survival products, or by enumerating outcome
//! trees, so that agreement with the planners means something.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::environment::{Environment, RngStream};
use crate::error::{Error, Result};
use crate::model::{Instance, Policy};

/// Largest horizon accepted by the tree and sequence enumerations.
pub const MAX_ENUMERATION_HORIZON: usize = 14;

/// Largest horizon accepted by [`brute_force_value`].
pub const MAX_SURVIVAL_HORIZON: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub episodes: usize,
}

/// Sample mean and standard error of episode returns. Episode `i` draws
/// from `RngStream::new(seed, i)`, so the result does not depend on how the
/// work is split across threads.
pub fn monte_carlo_value<E>(
    env: &E,
    policy: &Policy,
    episodes: usize,
    seed: u64,
) -> Result<McEstimate>
where
    E: Environment + Sync + ?Sized,
{
    if episodes == 0 {
        return Err(Error::InvalidArgument(
            "need at least one episode".to_string(),
        ));
    }
    let returns = (0..episodes as u64)
        .into_par_iter()
        .map(|i| {
            env.run_episode(policy, &mut RngStream::new(seed, i))
                .map(|r| r.return_clicks)
        })
        .collect::<Result<Vec<u64>>>()?;
    Ok(summarize(&returns))
}

/// Episode lengths for `episodes` independent users.
pub fn sample_lengths<E>(env: &E, policy: &Policy, episodes: usize, seed: u64) -> Result<Vec<u64>>
where
    E: Environment + Sync + ?Sized,
{
    (0..episodes as u64)
        .into_par_iter()
        .map(|i| {
            env.run_episode(policy, &mut RngStream::new(seed, i))
                .map(|r| r.length)
        })
        .collect()
}

fn summarize(samples: &[u64]) -> McEstimate {
    let n = samples.len() as f64;
    // Integer sums are exact, so the estimate is independent of ordering.
    let sum: u128 = samples.iter().map(|&v| v as u128).sum();
    let sum_sq: u128 = samples.iter().map(|&v| (v as u128) * (v as u128)).sum();
    let mean = sum as f64 / n;
    let var = if samples.len() > 1 {
        ((sum_sq as f64) - n * mean * mean).max(0.0) / (n - 1.0)
    } else {
        0.0
    };
    McEstimate {
        mean,
        stderr: (var / n).sqrt(),
        episodes: samples.len(),
    }
}

fn require_unit_departure(instance: &Instance) -> Result<()> {
    if instance.depart_matrix().iter().flatten().all(|&l| l == 1.0) {
        Ok(())
    } else {
        Err(Error::Unsupported(
            "departure probabilities equal to 1".to_string(),
        ))
    }
}

fn require_categories(instance: &Instance, policy: &Policy) -> Result<()> {
    let k = instance.num_categories();
    if policy
        .prefix()
        .iter()
        .chain([policy.tail()].iter())
        .any(|&a| a >= k)
    {
        return Err(Error::InvalidPolicy(format!(
            "{policy} uses a category outside 1..={k}"
        )));
    }
    Ok(())
}

/// Expected clicks within the first `horizon` iterations for a unit-departure
/// instance: `sum_x q_x sum_{i <= H} prod_{j <= i} P[a_j][x]`.
pub fn brute_force_value(instance: &Instance, policy: &Policy, horizon: usize) -> Result<f64> {
    brute_force_value_with_prior(instance, policy, instance.prior(), horizon)
}

pub fn brute_force_value_with_prior(
    instance: &Instance,
    policy: &Policy,
    weights: &[f64],
    horizon: usize,
) -> Result<f64> {
    if horizon > MAX_SURVIVAL_HORIZON {
        return Err(Error::InvalidArgument(format!(
            "horizon {horizon} exceeds {MAX_SURVIVAL_HORIZON}"
        )));
    }
    require_unit_departure(instance)?;
    require_categories(instance, policy)?;
    let mut total = 0.0;
    for (x, &w) in weights.iter().enumerate() {
        let mut survive = 1.0;
        let mut sum = 0.0;
        for j in 0..horizon {
            survive *= instance.click(policy.action(j), x);
            sum += survive;
        }
        total += w * sum;
    }
    Ok(total)
}

/// Exact truncated expectation by walking the full outcome tree: at each
/// iteration the user clicks, misses and stays, or misses and leaves.
/// Works for any departure matrix.
pub fn brute_force_value_general(
    instance: &Instance,
    policy: &Policy,
    horizon: usize,
) -> Result<f64> {
    if horizon > MAX_ENUMERATION_HORIZON {
        return Err(Error::InvalidArgument(format!(
            "horizon {horizon} exceeds {MAX_ENUMERATION_HORIZON} for tree enumeration"
        )));
    }
    require_categories(instance, policy)?;

    fn descend(
        instance: &Instance,
        schedule: &[usize],
        x: usize,
        j: usize,
        prob: f64,
        clicks: u32,
    ) -> f64 {
        if j == schedule.len() {
            return prob * clicks as f64;
        }
        let a = schedule[j];
        let p = instance.click(a, x);
        let l = instance.depart(a, x);
        let click = descend(instance, schedule, x, j + 1, prob * p, clicks + 1);
        let stay = if l < 1.0 {
            descend(
                instance,
                schedule,
                x,
                j + 1,
                prob * (1.0 - p) * (1.0 - l),
                clicks,
            )
        } else {
            0.0
        };
        let leave = prob * (1.0 - p) * l * clicks as f64;
        click + stay + leave
    }

    let schedule = policy.schedule(horizon);
    Ok(instance
        .prior()
        .iter()
        .enumerate()
        .map(|(x, &w)| w * descend(instance, &schedule, x, 0, 1.0, 0))
        .sum())
}

/// Exact value of the threshold policy `(first, h)` on a 2x2 unit-departure
/// instance: explicit survival products over the first `h` iterations and a
/// geometric tail for the other category.
pub fn threshold_value_by_survival(instance: &Instance, first: usize, h: usize) -> Result<f64> {
    require_unit_departure(instance)?;
    if instance.num_categories() != 2 || first > 1 {
        return Err(Error::Unsupported("two categories".to_string()));
    }
    let second = 1 - first;
    let mut total = 0.0;
    for (x, &w) in instance.prior().iter().enumerate() {
        let p_first = instance.click(first, x);
        let p_second = instance.click(second, x);
        let mut survive = 1.0;
        let mut sum = 0.0;
        for _ in 0..h {
            survive *= p_first;
            sum += survive;
        }
        sum += survive * p_second / (1.0 - p_second);
        total += w * sum;
    }
    Ok(total)
}

/// Best threshold policy `(a, h)` with `h <= max_switch`, by exhaustive
/// evaluation. Candidates are visited by increasing `h`, category 2 first,
/// and a candidate replaces the incumbent only if it is better by more than
/// `1e-12`, so rounding noise never favours a long prefix.
pub fn grid_search_threshold(instance: &Instance, max_switch: usize) -> Result<(Policy, f64)> {
    let mut best: Option<(Policy, f64)> = None;
    for h in 0..=max_switch {
        for first in [1, 0] {
            let value = threshold_value_by_survival(instance, first, h)?;
            if best.as_ref().is_none_or(|(_, v)| value > *v + 1e-12) {
                best = Some((Policy::threshold(first, h)?, value));
            }
        }
    }
    best.ok_or_else(|| Error::InvalidArgument("empty grid".to_string()))
}

/// Best schedule over all `K^H` category sequences of length `horizon` for a
/// unit-departure instance, with its truncated value.
pub fn exhaustive_best_schedule(instance: &Instance, horizon: usize) -> Result<(Vec<usize>, f64)> {
    if horizon == 0 || horizon > MAX_ENUMERATION_HORIZON {
        return Err(Error::InvalidArgument(format!(
            "horizon must be in 1..={MAX_ENUMERATION_HORIZON}"
        )));
    }
    require_unit_departure(instance)?;
    let k = instance.num_categories();
    let mut schedule = vec![0usize; horizon];
    let mut best = (schedule.clone(), f64::NEG_INFINITY);
    loop {
        let value: f64 = instance
            .prior()
            .iter()
            .enumerate()
            .map(|(x, &w)| {
                let mut survive = 1.0;
                let mut sum = 0.0;
                for &a in &schedule {
                    survive *= instance.click(a, x);
                    sum += survive;
                }
                w * sum
            })
            .sum();
        if value > best.1 {
            best = (schedule.clone(), value);
        }
        // Odometer increment over base-K digits.
        let mut i = horizon;
        loop {
            if i == 0 {
                return Ok(best);
            }
            i -= 1;
            schedule[i] += 1;
            if schedule[i] < k {
                break;
            }
            schedule[i] = 0;
        }
    }
}

/// Kolmogorov-Smirnov distance between the empirical distribution of
/// `samples` (support 1, 2, ...) and a geometric law with success
/// probability `p`, `P(N <= n) = 1 - (1 - p)^n`.
pub fn geometric_ks_distance(samples: &[u64], p: f64) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let mut sorted = samples.to_vec();
    sorted.sort_unstable();
    let n = sorted.len() as f64;
    let mut worst: f64 = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let v = sorted[i];
        let before = i as f64 / n;
        while i < sorted.len() && sorted[i] == v {
            i += 1;
        }
        let after = i as f64 / n;
        let cdf_at = 1.0 - (1.0 - p).powf(v as f64);
        let cdf_below = 1.0 - (1.0 - p).powf(v as f64 - 1.0);
        worst = worst
            .max((after - cdf_at).abs())
            .max((before - cdf_below).abs());
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::Simulator;
    use approx::assert_abs_diff_eq;

    #[test]
    fn first_step_values_on_table1() {
        let inst = Instance::table1();
        assert_abs_diff_eq!(
            brute_force_value(&inst, &Policy::fixed(1), 1).unwrap(),
            0.394,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            brute_force_value(&inst, &Policy::fixed(0), 1).unwrap(),
            0.368,
            epsilon = 1e-15
        );
    }

    #[test]
    fn tree_enumeration_agrees_with_survival_products() {
        let inst = Instance::table1();
        let p = Policy::new(vec![1, 0, 1, 1], 0);
        for h in 0..=10 {
            assert_abs_diff_eq!(
                brute_force_value_general(&inst, &p, h).unwrap(),
                brute_force_value(&inst, &p, h).unwrap(),
                epsilon = 1e-14
            );
        }
        assert_eq!(brute_force_value_general(&inst, &p, 0).unwrap(), 0.0);
        assert!(brute_force_value_general(&inst, &p, 15).is_err());
    }

    #[test]
    fn tree_enumeration_brackets_single_type_formula() {
        let (p, l) = (0.4, 0.5);
        let inst = Instance::new(vec![1.0], vec![vec![p]], vec![vec![l]], None).unwrap();
        let exact = p / (l * (1.0 - p));
        let v = brute_force_value_general(&inst, &Policy::fixed(0), 14).unwrap();
        // Per-iteration survival is 1 - L (1 - P) = 0.7.
        let tail = 0.7f64.powi(14) * exact;
        assert!(v <= exact && exact <= v + tail + 1e-12);
    }

    #[test]
    fn grid_search_examples() {
        let (policy, value) = grid_search_threshold(&Instance::table1(), 60).unwrap();
        assert_eq!(policy, Policy::threshold(1, 6).unwrap());
        assert_abs_diff_eq!(value, 0.650_290_584_407_5, epsilon = 1e-12);

        let row = Instance::with_unit_departure(
            vec![0.3, 0.7],
            vec![vec![0.5, 0.4], vec![0.3, 0.2]],
            None,
        )
        .unwrap();
        assert_eq!(grid_search_threshold(&row, 60).unwrap().0, Policy::fixed(0));
    }

    #[test]
    fn exhaustive_search_small_cases() {
        let (schedule, value) = exhaustive_best_schedule(&Instance::table1(), 1).unwrap();
        assert_eq!(schedule, vec![1]);
        assert_abs_diff_eq!(value, 0.394, epsilon = 1e-15);
        // Ten steps are too few for the switch to category 1 to pay off.
        let (schedule, _) = exhaustive_best_schedule(&Instance::table1(), 10).unwrap();
        assert_eq!(schedule, vec![1; 10]);
        let (schedule, _) = exhaustive_best_schedule(&Instance::table1(), 14).unwrap();
        assert_eq!(&schedule[..6], &[1; 6]);
    }

    #[test]
    fn monte_carlo_is_deterministic_and_sane() {
        let sim = Simulator::new(Instance::table1());
        let a = monte_carlo_value(&sim, &Policy::fixed(1), 20_000, 11).unwrap();
        let b = monte_carlo_value(&sim, &Policy::fixed(1), 20_000, 11).unwrap();
        assert_eq!(a, b);
        let exact = 0.4 * 0.4 / 0.6 + 0.6 * 0.39 / 0.61;
        assert!((a.mean - exact).abs() < 4.0 * a.stderr);

        let dead = Instance::with_unit_departure(vec![1.0], vec![vec![1e-9]], None).unwrap();
        let est = monte_carlo_value(&Simulator::new(dead), &Policy::fixed(0), 1000, 0).unwrap();
        assert_eq!(est.mean, 0.0);
        assert!(monte_carlo_value(&sim, &Policy::fixed(0), 0, 0).is_err());
    }

    #[test]
    fn ks_distance_of_exact_quantiles_is_small() {
        // Deterministic sample following the geometric quantile function.
        let p: f64 = 0.3;
        let n = 10_000;
        let samples: Vec<u64> = (0..n)
            .map(|i| {
                let u = (i as f64 + 0.5) / n as f64;
                ((1.0 - u).ln() / (1.0 - p).ln()).ceil().max(1.0) as u64
            })
            .collect();
        assert!(geometric_ks_distance(&samples, p) < 1e-3);
        assert!(geometric_ks_distance(&samples, 0.6) > 0.1);
    }
}
