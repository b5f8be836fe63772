//! Multi-seed regret studies: UCB-Hybrid over fixed-arm or threshold
//! policies, with realized and pseudo-regret curves per seed and averaged.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::environment::{run_stream, Environment, Simulator};
use crate::error::{Error, Result};
use crate::learning::{self, SubExpParams, UcbHybrid};
use crate::model::{Instance, Policy};
use crate::planning;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicySetKind {
    Fixed,
    Threshold,
}

impl fmt::Display for PolicySetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PolicySetKind::Fixed => "fixed",
            PolicySetKind::Threshold => "threshold",
        })
    }
}

impl FromStr for PolicySetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fixed" => Ok(PolicySetKind::Fixed),
            "threshold" => Ok(PolicySetKind::Threshold),
            other => Err(Error::InvalidArgument(format!(
                "unknown policy set '{other}' (fixed|threshold)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub num_users: usize,
    pub seeds: Vec<u64>,
    pub policy_set: PolicySetKind,
    /// Largest switch point in the threshold set; `horizon_for_t` if unset.
    pub horizon: Option<usize>,
    /// Margin used for the sub-exponential constants instead of the
    /// instance's.
    pub epsilon_override: Option<f64>,
    pub eta: f64,
}

impl ExperimentConfig {
    pub fn new(num_users: usize, num_seeds: u64, policy_set: PolicySetKind) -> Self {
        ExperimentConfig {
            num_users,
            seeds: (0..num_seeds).collect(),
            policy_set,
            horizon: None,
            epsilon_override: None,
            eta: 1.0,
        }
    }

    fn epsilon(&self, instance: &Instance) -> f64 {
        self.epsilon_override.unwrap_or(instance.epsilon())
    }

    pub fn params(&self, instance: &Instance) -> Result<SubExpParams> {
        let mut params = match self.policy_set {
            PolicySetKind::Fixed => learning::subexp_params_single_type(self.epsilon(instance))?,
            PolicySetKind::Threshold => learning::subexp_params_two_type(self.epsilon(instance))?,
        };
        params.eta = self.eta;
        Ok(params)
    }

    pub fn policies(&self, instance: &Instance) -> Result<Vec<Policy>> {
        match self.policy_set {
            PolicySetKind::Fixed => Ok(learning::build_fixed_arm_policy_set(
                instance.num_categories(),
            )),
            PolicySetKind::Threshold => {
                if instance.num_categories() != 2 {
                    return Err(Error::Unsupported(
                        "threshold policies need K = 2".to_string(),
                    ));
                }
                let h = match self.horizon {
                    Some(h) => h,
                    None => learning::horizon_for_t(self.num_users, self.epsilon(instance))?,
                };
                Ok(learning::build_threshold_policy_set(h))
            }
        }
    }
}

/// One learner run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRun {
    pub seed: u64,
    /// `t v* - sum of returns` after each episode.
    pub regret: Vec<f64>,
    /// `sum (v* - E[V^{pi_t}])` after each episode.
    pub pseudo_regret: Vec<f64>,
    pub pulls: Vec<u64>,
    /// Pulls per policy over the last tenth of the episodes.
    pub late_pulls: Vec<u64>,
}

/// `R(T) / R(T / 2)` for a cumulative curve of length `T`.
pub fn doubling_ratio(curve: &[f64]) -> Option<f64> {
    let t = curve.len();
    if t < 2 {
        return None;
    }
    Some(curve[t - 1] / curve[t / 2 - 1])
}

/// Mean and standard error of `values`.
pub fn mean_stderr(values: impl IntoIterator<Item = f64>) -> (f64, f64) {
    let values: Vec<f64> = values.into_iter().collect();
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub policy_set: PolicySetKind,
    pub policies: Vec<Policy>,
    pub policy_values: Vec<f64>,
    pub v_star: f64,
    /// Index of the best policy in the set.
    pub best_in_set: usize,
    pub params: SubExpParams,
    /// Ordered by seed as given in the config.
    pub runs: Vec<SeedRun>,
}

impl ExperimentResult {
    fn mean_curve(&self, pick: impl Fn(&SeedRun) -> &[f64]) -> Vec<f64> {
        let t = self.runs.first().map_or(0, |r| pick(r).len());
        (0..t)
            .map(|i| self.runs.iter().map(|r| pick(r)[i]).sum::<f64>() / self.runs.len() as f64)
            .collect()
    }

    pub fn mean_regret(&self) -> Vec<f64> {
        self.mean_curve(|r| &r.regret)
    }

    pub fn mean_pseudo_regret(&self) -> Vec<f64> {
        self.mean_curve(|r| &r.pseudo_regret)
    }

    /// Doubling ratio of the seed-averaged realized regret.
    pub fn doubling_ratio(&self) -> Option<f64> {
        doubling_ratio(&self.mean_regret())
    }

    /// Doubling ratio of the seed-averaged pseudo-regret.
    pub fn pseudo_doubling_ratio(&self) -> Option<f64> {
        doubling_ratio(&self.mean_pseudo_regret())
    }

    /// Share of the last tenth of episodes that went to the best policy in
    /// the set, averaged over seeds.
    pub fn late_best_share(&self) -> f64 {
        let shares = self.runs.iter().map(|r| {
            let total: u64 = r.late_pulls.iter().sum();
            r.late_pulls[self.best_in_set] as f64 / total as f64
        });
        mean_stderr(shares).0
    }

    /// `t,cum_regret_mean,cum_regret_stderr` every `every` episodes and at
    /// the final one.
    pub fn write_aggregate_csv<W: Write>(&self, writer: W, every: usize) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(["t", "cum_regret_mean", "cum_regret_stderr"])
            .map_err(csv_error)?;
        let t_max = self.runs.first().map_or(0, |r| r.regret.len());
        for t in sample_points(t_max, every) {
            let (mean, se) = mean_stderr(self.runs.iter().map(|r| r.regret[t - 1]));
            out.write_record(&[t.to_string(), fmt_f64(mean), fmt_f64(se)])
                .map_err(csv_error)?;
        }
        out.flush().map_err(|e| csv_error(e.into()))?;
        Ok(())
    }

    /// `seed,t,cum_regret,pseudo_regret` for every seed.
    pub fn write_per_seed_csv<W: Write>(&self, writer: W, every: usize) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(["seed", "t", "cum_regret", "pseudo_regret"])
            .map_err(csv_error)?;
        for run in &self.runs {
            for t in sample_points(run.regret.len(), every) {
                out.write_record(&[
                    run.seed.to_string(),
                    t.to_string(),
                    fmt_f64(run.regret[t - 1]),
                    fmt_f64(run.pseudo_regret[t - 1]),
                ])
                .map_err(csv_error)?;
            }
        }
        out.flush().map_err(|e| csv_error(e.into()))?;
        Ok(())
    }

    /// One summary row per seed followed by a `mean` row.
    pub fn summary_rows(&self) -> Vec<SummaryRow> {
        let mut rows: Vec<SummaryRow> = self
            .runs
            .iter()
            .map(|r| {
                let t = r.regret.len();
                let late: u64 = r.late_pulls.iter().sum();
                SummaryRow {
                    policy_set: self.policy_set,
                    seed: r.seed.to_string(),
                    num_users: t,
                    regret_half: r.regret[t / 2 - 1],
                    regret_final: r.regret[t - 1],
                    doubling_ratio: doubling_ratio(&r.regret).unwrap_or(f64::NAN),
                    pseudo_regret_final: r.pseudo_regret[t - 1],
                    pseudo_doubling_ratio: doubling_ratio(&r.pseudo_regret).unwrap_or(f64::NAN),
                    late_best_share: r.late_pulls[self.best_in_set] as f64 / late as f64,
                }
            })
            .collect();
        let regret = self.mean_regret();
        let pseudo = self.mean_pseudo_regret();
        let t = regret.len();
        rows.push(SummaryRow {
            policy_set: self.policy_set,
            seed: "mean".to_string(),
            num_users: t,
            regret_half: regret[t / 2 - 1],
            regret_final: regret[t - 1],
            doubling_ratio: self.doubling_ratio().unwrap_or(f64::NAN),
            pseudo_regret_final: pseudo[t - 1],
            pseudo_doubling_ratio: self.pseudo_doubling_ratio().unwrap_or(f64::NAN),
            late_best_share: self.late_best_share(),
        });
        rows
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub policy_set: PolicySetKind,
    pub seed: String,
    #[serde(rename = "T")]
    pub num_users: usize,
    pub regret_half: f64,
    pub regret_final: f64,
    pub doubling_ratio: f64,
    pub pseudo_regret_final: f64,
    pub pseudo_doubling_ratio: f64,
    pub late_best_share: f64,
}

/// Writes summary rows with full-precision floats.
pub fn write_summary_csv<W: Write>(writer: W, rows: &[SummaryRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record([
        "policy_set",
        "seed",
        "T",
        "regret_half",
        "regret_final",
        "doubling_ratio",
        "pseudo_regret_final",
        "pseudo_doubling_ratio",
        "late_best_share",
    ])
    .map_err(csv_error)?;
    for r in rows {
        out.write_record(&[
            r.policy_set.to_string(),
            r.seed.clone(),
            r.num_users.to_string(),
            fmt_f64(r.regret_half),
            fmt_f64(r.regret_final),
            fmt_f64(r.doubling_ratio),
            fmt_f64(r.pseudo_regret_final),
            fmt_f64(r.pseudo_doubling_ratio),
            fmt_f64(r.late_best_share),
        ])
        .map_err(csv_error)?;
    }
    out.flush().map_err(|e| csv_error(e.into()))?;
    Ok(())
}

/// Shortest representation that round-trips, which keeps every digit.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

fn csv_error(source: csv::Error) -> Error {
    Error::Csv {
        path: "<output>".into(),
        source,
    }
}

fn sample_points(t_max: usize, every: usize) -> impl Iterator<Item = usize> {
    let every = every.max(1);
    (1..=t_max).filter(move |t| t % every == 0 || *t == t_max)
}

/// Runs UCB-Hybrid on `env` once for `seed`.
pub fn run_seed<E: Environment + ?Sized>(
    env: &E,
    policies: &[Policy],
    policy_values: &[f64],
    v_star: f64,
    config: &ExperimentConfig,
    params: SubExpParams,
    seed: u64,
) -> Result<SeedRun> {
    let mut learner = UcbHybrid::new(policies.to_vec(), config.num_users, params)?;
    let trace = run_stream(env, &mut learner, config.num_users, seed)?;
    let late_start = config.num_users - config.num_users / 10;
    let mut late_pulls = vec![0; policies.len()];
    for e in &trace.episodes[late_start..] {
        late_pulls[e.policy_id] += 1;
    }
    Ok(SeedRun {
        seed,
        regret: learning::regret_curve(&trace, v_star),
        pseudo_regret: learning::pseudo_regret_curve(&trace, policy_values, v_star),
        pulls: learner.stats().iter().map(|s| s.pulls).collect(),
        late_pulls,
    })
}

/// Runs every seed of `config` on the simulator for `instance`, in
/// parallel. Regret is measured against the exact optimum over all
/// policies, not only those in the set.
pub fn run_experiment(instance: &Instance, config: &ExperimentConfig) -> Result<ExperimentResult> {
    if config.num_users < 10 {
        return Err(Error::InvalidArgument("T must be at least 10".to_string()));
    }
    if config.seeds.is_empty() {
        return Err(Error::InvalidArgument("no seeds".to_string()));
    }
    let policies = config.policies(instance)?;
    let params = config.params(instance)?;
    let policy_values = policies
        .iter()
        .map(|p| planning::policy_value(instance, p))
        .collect::<Result<Vec<_>>>()?;
    let v_star = learning::optimal_value(instance)?;
    let best_in_set = (0..policies.len())
        .max_by(|&a, &b| {
            policy_values[a]
                .total_cmp(&policy_values[b])
                .then(b.cmp(&a))
        })
        .expect("policy set is not empty");
    let sim = Simulator::new(instance.clone());
    let runs = config
        .seeds
        .par_iter()
        .map(|&seed| {
            run_seed(
                &sim,
                &policies,
                &policy_values,
                v_star,
                config,
                params,
                seed,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentResult {
        policy_set: config.policy_set,
        policies,
        policy_values,
        v_star,
        best_in_set,
        params,
        runs,
    })
}
