use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use departing_bandits::environment::{run_stream, ConstantLearner, Simulator};
use departing_bandits::error::{Error, Result};
use departing_bandits::experiment::{self, ExperimentConfig, PolicySetKind};
use departing_bandits::instances::{
    self, RandomInstanceConfig, RatingsConfig, SemiSyntheticConfig,
};
use departing_bandits::model::{Instance, Policy};
use departing_bandits::{dp, oracle, planning, RngStream, Structure};

const OUT_DIR_ENV: &str = "DEPARTING_BANDITS_OUT";

#[derive(Debug, Parser)]
#[command(
    name = "departing-bandits",
    version,
    about = "Bandits with departing users"
)]
struct Cli {
    /// JSON file with default values for any flag (flags take precedence).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory for CSV files [env: DEPARTING_BANDITS_OUT] [default: .]
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Optimal policy for a known instance.
    Plan(PlanArgs),
    /// UCB-Hybrid over one policy set, several seeds.
    Learn(LearnArgs),
    /// Roll out a fixed policy.
    Simulate(SimulateArgs),
    /// Values from the independent verification paths.
    Oracle(OracleArgs),
    /// Write a random or ratings-based instance.
    Gen(GenArgs),
    /// Fixed-arm learner against threshold learner on one instance.
    Experiment(ExperimentArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Csv,
}

#[derive(Debug, Args)]
struct InstanceArg {
    /// Instance JSON file, or `table1` for the built-in two-type example.
    #[arg(long)]
    instance: PathBuf,
}

impl InstanceArg {
    fn load(&self) -> Result<Instance> {
        if self.instance.as_os_str() == "table1" && !self.instance.exists() {
            return Ok(Instance::table1());
        }
        Instance::from_path(&self.instance)
    }
}

#[derive(Debug, Args)]
struct PlanArgs {
    #[command(flatten)]
    instance: InstanceArg,
    /// Finite-horizon dynamic program instead of the structure planner.
    #[arg(long)]
    dp: bool,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
}

#[derive(Debug, Args)]
struct LearnArgs {
    #[command(flatten)]
    instance: InstanceArg,
    #[arg(long = "T")]
    num_users: Option<usize>,
    #[arg(long)]
    seeds: Option<u64>,
    #[arg(long, value_enum)]
    policy_set: Option<SetArg>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    epsilon_override: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    /// Write every n-th episode of the regret curves.
    #[arg(long)]
    every: Option<usize>,
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    #[command(flatten)]
    instance: InstanceArg,
    #[arg(long = "T")]
    num_users: Option<usize>,
    #[arg(long)]
    seeds: Option<u64>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    epsilon_override: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    every: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SetArg {
    Fixed,
    Threshold,
}

impl From<SetArg> for PolicySetKind {
    fn from(s: SetArg) -> Self {
        match s {
            SetArg::Fixed => PolicySetKind::Fixed,
            SetArg::Threshold => PolicySetKind::Threshold,
        }
    }
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    instance: InstanceArg,
    /// `pi^A`, `(A,H)`, `fixed:A`, `threshold:A:H`, or `A,A,...;T`; categories from 1.
    #[arg(long)]
    policy: String,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct OracleArgs {
    #[command(flatten)]
    instance: InstanceArg,
    /// Policy to evaluate; the planner's choice if omitted.
    #[arg(long)]
    policy: Option<String>,
    /// Truncation horizon for the exact sums, and largest switch point for
    /// the grid search.
    #[arg(long)]
    horizon: Option<usize>,
    /// Also run the exhaustive schedule search (needs horizon <= 14).
    #[arg(long)]
    dp: bool,
    #[arg(long)]
    mc_episodes: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
}

#[derive(Debug, Args)]
struct GenArgs {
    #[arg(long, conflicts_with = "from_ratings")]
    random: bool,
    #[arg(long, requires_all = ["ratings", "items", "categories"])]
    from_ratings: bool,
    #[arg(long = "K")]
    num_categories: Option<usize>,
    #[arg(long = "M")]
    num_types: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    margin: Option<f64>,
    /// dr, dc or dd (2x2 only).
    #[arg(long)]
    structure: Option<Structure>,
    #[arg(long)]
    random_departure: bool,
    #[arg(long)]
    ratings: Option<PathBuf>,
    #[arg(long)]
    items: Option<PathBuf>,
    /// Comma-separated genre labels, one per category.
    #[arg(long, value_delimiter = ',')]
    categories: Option<Vec<String>>,
    #[arg(long)]
    seed: Option<u64>,
    /// Instance file to write; stdout if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Values read from `--config`. Every key is optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    #[serde(rename = "T")]
    num_users: Option<usize>,
    seeds: Option<u64>,
    seed: Option<u64>,
    policy_set: Option<PolicySetKind>,
    horizon: Option<usize>,
    epsilon_override: Option<f64>,
    eta: Option<f64>,
    every: Option<usize>,
    episodes: Option<usize>,
    mc_episodes: Option<usize>,
    out_dir: Option<PathBuf>,
    #[serde(rename = "K")]
    num_categories: Option<usize>,
    #[serde(rename = "M")]
    num_types: Option<usize>,
    epsilon: Option<f64>,
    margin: Option<f64>,
}

impl FileConfig {
    fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(serde_json::from_str(&text)?)
    }
}

struct Context {
    config: FileConfig,
    out_dir: PathBuf,
}

impl Context {
    fn output(&self, name: &str) -> Result<BufWriter<File>> {
        fs::create_dir_all(&self.out_dir).map_err(|source| Error::Io {
            path: self.out_dir.clone(),
            source,
        })?;
        let path = self.out_dir.join(name);
        let file = File::create(&path).map_err(|source| Error::Io { path, source })?;
        Ok(BufWriter::new(file))
    }

    fn path(&self, name: &str) -> String {
        self.out_dir.join(name).display().to_string()
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let message = e.to_string();
            let first = message
                .lines()
                .next()
                .unwrap_or("")
                .trim_start_matches("error: ");
            report("usage", first);
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report(e.kind(), &e.to_string());
            ExitCode::from(1)
        }
    }
}

fn report(kind: &str, message: &str) {
    let line = serde_json::json!({ "error": kind, "message": message });
    eprintln!("{line}");
}

fn run(cli: Cli) -> Result<()> {
    let config = FileConfig::load(cli.config.as_deref())?;
    let out_dir = cli
        .out_dir
        .clone()
        .or_else(|| config.out_dir.clone())
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    let ctx = Context { config, out_dir };
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match cli.command {
        Command::Plan(args) => plan(&args, &mut out),
        Command::Learn(args) => learn(&ctx, &args, &mut out),
        Command::Simulate(args) => simulate(&ctx, &args, &mut out),
        Command::Oracle(args) => oracle_cmd(&ctx, &args, &mut out),
        Command::Gen(args) => gen(&ctx, &args, &mut out),
        Command::Experiment(args) => experiment_cmd(&ctx, &args, &mut out),
    }
}

fn io_err(e: io::Error) -> Error {
    Error::Io {
        path: PathBuf::from("<stdout>"),
        source: e,
    }
}

fn fmt(x: f64) -> String {
    experiment::fmt_f64(x)
}

fn plan(args: &PlanArgs, out: &mut impl Write) -> Result<()> {
    let instance = args.instance.load()?;
    if args.dp {
        let horizon = args
            .horizon
            .ok_or_else(|| Error::InvalidArgument("--dp needs --horizon".to_string()))?;
        let plan = dp::dp_plan(&instance, horizon)?;
        let actions: Vec<String> = plan.actions.iter().map(|a| (a + 1).to_string()).collect();
        match args.format {
            Format::Text => writeln!(
                out,
                "actions: {}\nvalue: {}\ncells: {}",
                actions.join(","),
                fmt(plan.value),
                plan.cells
            ),
            Format::Csv => writeln!(
                out,
                "actions,value\n\"{}\",{}",
                actions.join(","),
                fmt(plan.value)
            ),
        }
        .map_err(io_err)?;
        return Ok(());
    }

    if instance.num_types() == 1 {
        let (arm, value) = planning::single_type_optimal_arm(&instance)?;
        let policy = Policy::fixed(arm);
        match args.format {
            Format::Text => writeln!(
                out,
                "structure: SingleType\npolicy: {policy}\nvalue: {}",
                fmt(value)
            ),
            Format::Csv => writeln!(out, "policy,value,chosen\n{policy},{},true", fmt(value)),
        }
        .map_err(io_err)?;
        return Ok(());
    }

    let plan = planning::optimal_policy_2x2(&instance)?;
    match args.format {
        Format::Text => {
            let p = plan.structure.permutation;
            writeln!(out, "structure: {}", plan.structure.variant).map_err(io_err)?;
            writeln!(
                out,
                "normalization: swap_categories={} swap_types={}",
                p.swap_categories, p.swap_types
            )
            .map_err(io_err)?;
            if let Some(s) = plan.saddle {
                writeln!(
                    out,
                    "saddle: c1={} c2={} c3={} n_tilde={} n_star={}{}",
                    fmt(s.c1),
                    fmt(s.c2),
                    fmt(s.c3),
                    fmt(s.n_tilde),
                    fmt(s.n_star),
                    if s.capped { " (capped)" } else { "" }
                )
                .map_err(io_err)?;
            }
            for c in &plan.candidates {
                writeln!(out, "candidate: {} value={}", c.policy, fmt(c.value)).map_err(io_err)?;
            }
            writeln!(out, "policy: {}\nvalue: {}", plan.policy, fmt(plan.value)).map_err(io_err)?;
        }
        Format::Csv => {
            writeln!(out, "structure,policy,value,chosen").map_err(io_err)?;
            for c in &plan.candidates {
                writeln!(
                    out,
                    "{},\"{}\",{},{}",
                    plan.structure.variant,
                    c.policy,
                    fmt(c.value),
                    c.policy == plan.policy
                )
                .map_err(io_err)?;
            }
        }
    }
    Ok(())
}

fn experiment_config(
    ctx: &Context,
    num_users: Option<usize>,
    seeds: Option<u64>,
    policy_set: PolicySetKind,
    horizon: Option<usize>,
    epsilon_override: Option<f64>,
    eta: Option<f64>,
) -> ExperimentConfig {
    let c = &ctx.config;
    let mut config = ExperimentConfig::new(
        num_users.or(c.num_users).unwrap_or(10_000),
        seeds.or(c.seeds).unwrap_or(20),
        policy_set,
    );
    config.horizon = horizon.or(c.horizon);
    config.epsilon_override = epsilon_override.or(c.epsilon_override);
    config.eta = eta.or(c.eta).unwrap_or(1.0);
    config
}

fn write_learning_outputs(
    ctx: &Context,
    result: &experiment::ExperimentResult,
    every: usize,
    out: &mut impl Write,
) -> Result<Vec<experiment::SummaryRow>> {
    let set = result.policy_set;
    result.write_aggregate_csv(ctx.output(&format!("regret_{set}.csv"))?, every)?;
    result.write_per_seed_csv(ctx.output(&format!("regret_{set}_per_seed.csv"))?, every)?;
    let rows = result.summary_rows();
    let mean = rows.last().expect("mean row");
    writeln!(
        out,
        "{set}: {} policies, best in set {} ({}), v* = {}\n  mean regret at T/2 = {}, at T = {}, doubling ratio = {}, pseudo-regret doubling ratio = {}\n  wrote {}",
        result.policies.len(),
        result.policies[result.best_in_set],
        fmt(result.policy_values[result.best_in_set]),
        fmt(result.v_star),
        fmt(mean.regret_half),
        fmt(mean.regret_final),
        fmt(mean.doubling_ratio),
        fmt(mean.pseudo_doubling_ratio),
        ctx.path(&format!("regret_{set}.csv")),
    )
    .map_err(io_err)?;
    Ok(rows)
}

fn learn(ctx: &Context, args: &LearnArgs, out: &mut impl Write) -> Result<()> {
    let instance = args.instance.load()?;
    let set = args
        .policy_set
        .map(PolicySetKind::from)
        .or(ctx.config.policy_set)
        .unwrap_or(PolicySetKind::Threshold);
    let config = experiment_config(
        ctx,
        args.num_users,
        args.seeds,
        set,
        args.horizon,
        args.epsilon_override,
        args.eta,
    );
    let every = args.every.or(ctx.config.every).unwrap_or(1);
    let result = experiment::run_experiment(&instance, &config)?;
    let rows = write_learning_outputs(ctx, &result, every, out)?;
    experiment::write_summary_csv(ctx.output(&format!("summary_{set}.csv"))?, &rows)
}

fn experiment_cmd(ctx: &Context, args: &ExperimentArgs, out: &mut impl Write) -> Result<()> {
    let instance = args.instance.load()?;
    let every = args.every.or(ctx.config.every).unwrap_or(1);
    let mut rows = Vec::new();
    for set in [PolicySetKind::Fixed, PolicySetKind::Threshold] {
        let config = experiment_config(
            ctx,
            args.num_users,
            args.seeds,
            set,
            args.horizon,
            args.epsilon_override,
            args.eta,
        );
        let result = experiment::run_experiment(&instance, &config)?;
        rows.extend(write_learning_outputs(ctx, &result, every, out)?);
    }
    experiment::write_summary_csv(ctx.output("summary.csv")?, &rows)?;
    writeln!(out, "wrote {}", ctx.path("summary.csv")).map_err(io_err)
}

fn simulate(ctx: &Context, args: &SimulateArgs, out: &mut impl Write) -> Result<()> {
    let instance = args.instance.load()?;
    let policy = Policy::parse(&args.policy)?;
    let episodes = args.episodes.or(ctx.config.episodes).unwrap_or(10_000);
    let seed = args.seed.or(ctx.config.seed).unwrap_or(0);
    let sim = Simulator::new(instance);
    let mut learner = ConstantLearner::new(policy.clone());
    let trace = run_stream(&sim, &mut learner, episodes, seed)?;
    trace
        .write_csv(ctx.output("episodes.csv")?)
        .map_err(|source| Error::Csv {
            path: ctx.out_dir.join("episodes.csv"),
            source,
        })?;
    let (mean, se) = experiment::mean_stderr(trace.returns().map(|r| r as f64));
    writeln!(
        out,
        "policy: {policy}\nepisodes: {episodes}\nmean return: {} (stderr {})\nwrote {}",
        fmt(mean),
        fmt(se),
        ctx.path("episodes.csv")
    )
    .map_err(io_err)
}

fn oracle_cmd(ctx: &Context, args: &OracleArgs, out: &mut impl Write) -> Result<()> {
    let instance = args.instance.load()?;
    let seed = args.seed.or(ctx.config.seed).unwrap_or(0);
    let mc_episodes = args
        .mc_episodes
        .or(ctx.config.mc_episodes)
        .unwrap_or(100_000);
    let policy = match &args.policy {
        Some(text) => Policy::parse(text)?,
        None if instance.num_types() == 1 => {
            Policy::fixed(planning::single_type_optimal_arm(&instance)?.0)
        }
        None => planning::optimal_policy_2x2(&instance)?.policy,
    };
    let unit = instance.has_unit_departure();
    let horizon = args.horizon.unwrap_or(if unit {
        60
    } else {
        oracle::MAX_ENUMERATION_HORIZON
    });

    let mut rows: Vec<(String, String, f64, Option<f64>)> = Vec::new();
    let truncated = if unit {
        oracle::brute_force_value(&instance, &policy, horizon)?
    } else {
        oracle::brute_force_value_general(&instance, &policy, horizon)?
    };
    rows.push((
        format!("truncated_h{horizon}"),
        policy.to_string(),
        truncated,
        None,
    ));
    let mc = oracle::monte_carlo_value(
        &Simulator::new(instance.clone()),
        &policy,
        mc_episodes,
        seed,
    )?;
    rows.push((
        "monte_carlo".to_string(),
        policy.to_string(),
        mc.mean,
        Some(mc.stderr),
    ));
    if unit && instance.is_two_by_two() {
        let (best, value) = oracle::grid_search_threshold(&instance, horizon)?;
        rows.push(("grid_search".to_string(), best.to_string(), value, None));
    }
    if args.dp && unit {
        let (schedule, value) = oracle::exhaustive_best_schedule(&instance, horizon)?;
        let labels: Vec<String> = schedule.iter().map(|a| (a + 1).to_string()).collect();
        rows.push((
            format!("exhaustive_h{horizon}"),
            labels.join(","),
            value,
            None,
        ));
    }

    match args.format {
        Format::Text => {
            for (method, policy, value, se) in &rows {
                match se {
                    Some(se) => writeln!(
                        out,
                        "{method}: {policy} value={} stderr={}",
                        fmt(*value),
                        fmt(*se)
                    ),
                    None => writeln!(out, "{method}: {policy} value={}", fmt(*value)),
                }
                .map_err(io_err)?;
            }
        }
        Format::Csv => {
            writeln!(out, "method,policy,value,stderr").map_err(io_err)?;
            for (method, policy, value, se) in &rows {
                writeln!(
                    out,
                    "{method},\"{policy}\",{},{}",
                    fmt(*value),
                    se.map(fmt).unwrap_or_default()
                )
                .map_err(io_err)?;
            }
        }
    }
    Ok(())
}

fn gen(ctx: &Context, args: &GenArgs, out: &mut impl Write) -> Result<()> {
    let c = &ctx.config;
    let seed = args.seed.or(c.seed).unwrap_or(0);
    let mut rng = RngStream::new(seed, 0);
    let instance = if args.from_ratings {
        let categories = args.categories.clone().unwrap_or_default();
        let table = instances::load_ratings(
            args.ratings.as_ref().expect("required by clap"),
            args.items.as_ref().expect("required by clap"),
            &categories,
            &RatingsConfig::default(),
        )?;
        for row in &table.report.malformed {
            eprintln!(
                "skipped {}:{}: {}",
                row.file.display(),
                row.line,
                row.reason
            );
        }
        let mut config = SemiSyntheticConfig::default();
        if let Some(e) = args.epsilon.or(c.epsilon) {
            config.epsilon = e;
        }
        if let Some(m) = args.margin.or(c.margin) {
            config.margin = m;
        }
        let num_types = args.num_types.or(c.num_types).unwrap_or(2);
        instances::build_semi_synthetic(&table, num_types, &config, &mut rng)?.instance
    } else if args.random {
        let mut config = RandomInstanceConfig::new(
            args.num_categories.or(c.num_categories).unwrap_or(2),
            args.num_types.or(c.num_types).unwrap_or(2),
            args.epsilon.or(c.epsilon).unwrap_or(0.1),
        );
        if let Some(m) = args.margin.or(c.margin) {
            config.margin = m;
        }
        config.target = args.structure;
        config.random_departure = args.random_departure;
        instances::random_instance(&config, &mut rng)?
    } else {
        return Err(Error::InvalidArgument(
            "gen needs --random or --from-ratings".to_string(),
        ));
    };
    let text = instance.to_json_string()?;
    match &args.out {
        Some(path) => fs::write(path, text + "\n").map_err(|source| Error::Io {
            path: path.clone(),
            source,
        }),
        None => writeln!(out, "{text}").map_err(io_err),
    }
}
