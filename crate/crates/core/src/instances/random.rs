use rand::Rng;

use crate::error::{Error, Result};
use crate::model::Instance;
use crate::structure::{self, Structure};

/// Draws allowed before [`random_instance`] gives up on a target structure.
pub const REJECTION_BUDGET: usize = 100_000;

#[derive(Debug, Clone, PartialEq)]
pub struct RandomInstanceConfig {
    pub num_categories: usize,
    pub num_types: usize,
    pub epsilon: f64,
    /// Lower bound on every click and departure probability.
    pub margin: f64,
    /// Draw `L` at random instead of fixing it to 1.
    pub random_departure: bool,
    /// Only for 2x2: resample until the instance has this structure.
    pub target: Option<Structure>,
}

impl RandomInstanceConfig {
    pub fn new(num_categories: usize, num_types: usize, epsilon: f64) -> Self {
        RandomInstanceConfig {
            num_categories,
            num_types,
            epsilon,
            margin: 0.01,
            random_departure: false,
            target: None,
        }
    }

    pub fn with_target(mut self, target: Structure) -> Self {
        self.target = Some(target);
        self
    }

    pub fn with_random_departure(mut self) -> Self {
        self.random_departure = true;
        self
    }
}

/// Uniform draw from `(lo, hi]`.
fn uniform_left_open<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    let u: f64 = rng.gen();
    hi - (hi - lo) * u
}

/// Uniform draw from the probability simplex (flat Dirichlet).
fn simplex<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    let mut w: Vec<f64> = (0..n).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    // Push the rounding residue into the largest entry so the sum is 1.
    let residue = 1.0 - w.iter().sum::<f64>();
    let largest = (0..n)
        .max_by(|&a, &b| w[a].total_cmp(&w[b]))
        .expect("n >= 1");
    w[largest] += residue;
    w
}

fn draw<R: Rng + ?Sized>(config: &RandomInstanceConfig, rng: &mut R) -> Result<Instance> {
    let (k, m) = (config.num_categories, config.num_types);
    let click = (0..k)
        .map(|_| {
            (0..m)
                .map(|_| uniform_left_open(rng, config.margin, 1.0 - config.epsilon))
                .collect()
        })
        .collect();
    let depart = (0..k)
        .map(|_| {
            (0..m)
                .map(|_| {
                    if config.random_departure {
                        uniform_left_open(rng, config.margin, 1.0)
                    } else {
                        1.0
                    }
                })
                .collect()
        })
        .collect();
    let prior = simplex(rng, m);
    Instance::new(prior, click, depart, Some(config.epsilon))
}

/// Random instance with `P` uniform on `(margin, 1 - epsilon]`, `L` either 1
/// or uniform on `(margin, 1]`, and `q` uniform on the simplex.
pub fn random_instance<R: Rng + ?Sized>(
    config: &RandomInstanceConfig,
    rng: &mut R,
) -> Result<Instance> {
    if config.num_categories == 0 || config.num_types == 0 {
        return Err(Error::InvalidArgument(
            "K and M must be positive".to_string(),
        ));
    }
    if !(config.epsilon > 0.0 && config.epsilon < 1.0)
        || !(config.margin > 0.0 && config.margin < 1.0 - config.epsilon)
    {
        return Err(Error::InvalidArgument(format!(
            "need 0 < margin ({}) < 1 - epsilon ({})",
            config.margin,
            1.0 - config.epsilon
        )));
    }
    let Some(target) = config.target else {
        return draw(config, rng);
    };
    if config.num_categories != 2 || config.num_types != 2 {
        return Err(Error::InvalidArgument(
            "a target structure needs K = M = 2".to_string(),
        ));
    }
    for _ in 0..REJECTION_BUDGET {
        let candidate = draw(config, rng)?;
        if structure::classify(&candidate)? == target {
            return Ok(candidate);
        }
    }
    Err(Error::RejectionBudget(REJECTION_BUDGET))
}
