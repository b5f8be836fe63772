//! Stochastic simulator of the departing-bandits protocol.
//!
//! Each episode samples one user type from the prior, then repeatedly
//! recommends the policy's category for the current iteration. The user
//! clicks with probability `P[a][type]`; after a no-click they leave with
//! probability `L[a][type]`.
//!
//! Draw order is fixed: one uniform for the type at episode start, then per
//! iteration one uniform for the click and, only on a no-click, one uniform
//! for the departure. Episodes draw from an [`RngStream`] keyed by
//! `(seed, episode index)`, which makes parallel Monte Carlo reproduce the
//! serial run exactly.

use std::io::Write;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{EpisodeResult, Instance, Policy};

/// Default cap on recommendations within one episode.
pub const DEFAULT_MAX_EPISODE_LEN: u64 = 10_000_000;

/// Reproducible random substream: ChaCha8 seeded from `seed` with the
/// stream selector set to `stream`.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        RngStream { seed, stream, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.rng.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> std::result::Result<(), rand::Error> {
        self.rng.try_fill_bytes(dest)
    }
}

/// Draws an index from a discrete distribution with one uniform.
pub(crate) fn sample_index<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    // u landed in the rounding gap above the cumulative sum.
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

/// Anything that can play one episode of a schedule against a user.
pub trait Environment {
    fn run_episode(&self, policy: &Policy, rng: &mut RngStream) -> Result<EpisodeResult>;
}

/// Simulator backed by an explicit instance.
#[derive(Debug, Clone)]
pub struct Simulator {
    instance: Instance,
    max_episode_len: u64,
}

impl Simulator {
    pub fn new(instance: Instance) -> Self {
        Simulator {
            instance,
            max_episode_len: DEFAULT_MAX_EPISODE_LEN,
        }
    }

    pub fn with_max_episode_len(mut self, limit: u64) -> Self {
        self.max_episode_len = limit;
        self
    }

    pub fn instance(&self) -> &Instance {
        &self.instance
    }
}

impl Environment for Simulator {
    fn run_episode(&self, policy: &Policy, rng: &mut RngStream) -> Result<EpisodeResult> {
        run_episode_with_limit(&self.instance, policy, rng, self.max_episode_len)
    }
}

pub fn run_episode(
    instance: &Instance,
    policy: &Policy,
    rng: &mut RngStream,
) -> Result<EpisodeResult> {
    run_episode_with_limit(instance, policy, rng, DEFAULT_MAX_EPISODE_LEN)
}

pub fn run_episode_with_limit(
    instance: &Instance,
    policy: &Policy,
    rng: &mut RngStream,
    max_len: u64,
) -> Result<EpisodeResult> {
    instance.require_policy(policy)?;
    let user_type = sample_index(instance.prior(), rng);
    let mut clicks = 0u64;
    let mut j = 0u64;
    loop {
        if j >= max_len {
            return Err(Error::EpisodeTooLong { limit: max_len });
        }
        let a = policy.action(j as usize);
        j += 1;
        if rng.gen::<f64>() < instance.click(a, user_type) {
            clicks += 1;
            continue;
        }
        if rng.gen::<f64>() < instance.depart(a, user_type) {
            return Ok(EpisodeResult {
                return_clicks: clicks,
                length: j,
            });
        }
    }
}

/// Sequential decision maker that picks one policy per arriving user and
/// only sees the realized return and length of that user's episode.
pub trait Learner {
    /// Id of the policy to run for the next user.
    fn select(&mut self) -> Result<usize>;

    fn policy(&self, id: usize) -> &Policy;

    fn observe(&mut self, id: usize, outcome: EpisodeResult) -> Result<()>;
}

/// Learner that always plays the same policy.
#[derive(Debug, Clone)]
pub struct ConstantLearner {
    policy: Policy,
}

impl ConstantLearner {
    pub fn new(policy: Policy) -> Self {
        ConstantLearner { policy }
    }
}

impl Learner for ConstantLearner {
    fn select(&mut self) -> Result<usize> {
        Ok(0)
    }

    fn policy(&self, _id: usize) -> &Policy {
        &self.policy
    }

    fn observe(&mut self, _id: usize, _outcome: EpisodeResult) -> Result<()> {
        Ok(())
    }
}

/// Learner that cycles through a fixed list of policies.
#[derive(Debug, Clone)]
pub struct RoundRobinLearner {
    policies: Vec<Policy>,
    next: usize,
}

impl RoundRobinLearner {
    pub fn new(policies: Vec<Policy>) -> Self {
        assert!(
            !policies.is_empty(),
            "round robin needs at least one policy"
        );
        RoundRobinLearner { policies, next: 0 }
    }
}

impl Learner for RoundRobinLearner {
    fn select(&mut self) -> Result<usize> {
        let id = self.next;
        self.next = (self.next + 1) % self.policies.len();
        Ok(id)
    }

    fn policy(&self, id: usize) -> &Policy {
        &self.policies[id]
    }

    fn observe(&mut self, _id: usize, _outcome: EpisodeResult) -> Result<()> {
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub policy_id: usize,
    pub outcome: EpisodeResult,
}

/// Trace of a stream of `T` users.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StreamResult {
    pub episodes: Vec<EpisodeRecord>,
    pub total_value: u64,
}

impl StreamResult {
    pub fn returns(&self) -> impl Iterator<Item = u64> + '_ {
        self.episodes.iter().map(|e| e.outcome.return_clicks)
    }

    /// Writes `episode,policy_id,return,length`, one row per episode, with
    /// 1-based episode indices.
    pub fn write_csv<W: Write>(&self, writer: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(["episode", "policy_id", "return", "length"])?;
        for (t, e) in self.episodes.iter().enumerate() {
            out.write_record(&[
                (t + 1).to_string(),
                e.policy_id.to_string(),
                e.outcome.return_clicks.to_string(),
                e.outcome.length.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Runs `T` users through `env`, asking `learner` for a policy before each
/// episode and reporting the outcome after it. Episode `t` (1-based) draws
/// from `RngStream::new(seed, t)`.
pub fn run_stream<E, L>(
    env: &E,
    learner: &mut L,
    num_users: usize,
    seed: u64,
) -> Result<StreamResult>
where
    E: Environment + ?Sized,
    L: Learner + ?Sized,
{
    if num_users == 0 {
        return Err(Error::InvalidArgument("T must be at least 1".to_string()));
    }
    let mut episodes = Vec::with_capacity(num_users);
    let mut total = 0u64;
    for t in 1..=num_users {
        let id = learner.select()?;
        let mut rng = RngStream::new(seed, t as u64);
        let outcome = env.run_episode(learner.policy(id), &mut rng)?;
        learner.observe(id, outcome)?;
        total += outcome.return_clicks;
        episodes.push(EpisodeRecord {
            policy_id: id,
            outcome,
        });
    }
    Ok(StreamResult {
        episodes,
        total_value: total,
    })
}
