//! The `dac` command line: list, run, suite, analyze, validate-config and plot.
//!
//! Exit codes are a stable contract: 0 success, 1 usage or configuration
//! error, 2 partial failure, 3 I/O error.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use dac_core::analysis::{self, AnalysisSettings, DifficultyProfile};
use dac_core::config::InstanceSource;
use dac_core::envs::{default_config, validate_config};
use dac_core::instance::Split;
use dac_core::logging::{self, PlotKind};
use dac_core::runner::{run_suite, ExperimentPlan, SuiteReport};
use dac_core::{BenchmarkConfig, BenchmarkId, Error, PolicySpec, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_PARTIAL: i32 = 2;
pub const EXIT_IO: i32 = 3;

const POLICY_GRAMMAR: &str = "static:<action>, random:<seed>, repeat:<len>:<seed>, optimal or csa";

#[derive(Debug, Parser)]
#[command(name = "dac", version, about = "Dynamic algorithm configuration benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print every built-in benchmark with its space categories and defaults.
    List,
    /// Run policies on one benchmark and write traces and summaries.
    Run(RunArgs),
    /// Run the reference policy zoo on several benchmarks.
    Suite(SuiteArgs),
    /// Compute difficulty profiles and the ranked radar data.
    Analyze(AnalyzeArgs),
    /// Check a benchmark config or experiment plan and print its resolved form.
    ValidateConfig(ValidateArgs),
    /// Turn the traces of a run directory into plot-ready CSV.
    Plot(PlotArgs),
}

#[derive(Debug, Args)]
struct Common {
    /// Output root; runs land in `<output>/<run_id>/`.
    #[arg(long, env = "DAC_OUTPUT_ROOT", default_value = "runs")]
    output: PathBuf,
    /// Seeds as `a..b` (inclusive) or a comma list.
    #[arg(long, value_parser = parse_seed_list)]
    seeds: Option<SeedList>,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    log_observations: bool,
    /// Maximum number of (policy, seed) cells run in parallel.
    #[arg(long)]
    jobs: Option<usize>,
    /// Instance split of generated instance sets.
    #[arg(long, value_parser = parse_split)]
    split: Option<Split>,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long, conflicts_with_all = ["config", "plan"])]
    benchmark: Option<String>,
    /// Benchmark config JSON.
    #[arg(long, conflicts_with = "plan")]
    config: Option<PathBuf>,
    /// Experiment plan JSON, e.g. the frozen `plan.json` of an earlier run.
    #[arg(long)]
    plan: Option<PathBuf>,
    /// Policy string; repeatable.
    #[arg(long = "policy")]
    policies: Vec<String>,
    #[arg(long)]
    run_id: Option<String>,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct SuiteArgs {
    /// Benchmarks to include; all four when omitted.
    #[arg(long = "benchmark")]
    benchmarks: Vec<String>,
    /// Policy strings replacing the default zoo; repeatable.
    #[arg(long = "policy")]
    policies: Vec<String>,
    /// Prefix of the per-benchmark run ids.
    #[arg(long, default_value = "suite")]
    run_prefix: String,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    #[arg(long = "benchmark")]
    benchmarks: Vec<String>,
    /// Benchmark config JSON; repeatable.
    #[arg(long = "config")]
    configs: Vec<PathBuf>,
    #[arg(long, env = "DAC_OUTPUT_ROOT", default_value = "runs")]
    output: PathBuf,
    #[arg(long, value_parser = parse_seed_list)]
    seeds: Option<SeedList>,
    #[arg(long, default_value_t = 10)]
    runs: usize,
    #[arg(long, default_value_t = 50)]
    static_count: usize,
    #[arg(long)]
    instance_limit: Option<usize>,
    /// Recompute profiles whose cache no longer matches.
    #[arg(long)]
    refresh: bool,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    #[arg(long, conflicts_with = "plan", required_unless_present = "plan")]
    config: Option<PathBuf>,
    #[arg(long)]
    plan: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PlotArgs {
    /// Run directory holding `.jsonl` traces.
    #[arg(long)]
    run: PathBuf,
    /// policy_performance, per_instance or action_trajectory.
    #[arg(long)]
    kind: String,
    /// Destination file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Wrapper so clap parses the whole list from one value instead of repeating the flag.
#[derive(Debug, Clone)]
struct SeedList(Vec<u64>);

fn parse_seed_list(text: &str) -> std::result::Result<SeedList, String> {
    parse_seeds(text).map(SeedList)
}

fn parse_seeds(text: &str) -> std::result::Result<Vec<u64>, String> {
    let bad = |e: &dyn std::fmt::Display| format!("invalid seed list `{text}`: {e}");
    if let Some((a, b)) = text.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|e| bad(&e))?;
        let b: u64 = b.trim().parse().map_err(|e| bad(&e))?;
        if a > b {
            return Err(bad(&"empty range"));
        }
        return Ok((a..=b).collect());
    }
    text.split(',').map(|s| s.trim().parse().map_err(|e| bad(&e))).collect()
}

fn parse_split(text: &str) -> std::result::Result<Split, String> {
    match text {
        "train" => Ok(Split::Train),
        "test" => Ok(Split::Test),
        _ => Err(format!("unknown split `{text}` (expected train or test)")),
    }
}

/// Maps an error to its exit code, looking through context wrappers.
pub fn exit_code(error: &Error) -> i32 {
    match error {
        Error::Context { source, .. } => exit_code(source),
        Error::Io { .. } => EXIT_IO,
        Error::Incomplete(_) => EXIT_PARTIAL,
        _ => EXIT_USAGE,
    }
}

/// Parses `args` (including the program name) and executes the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { write!(err, "{text}") } else { write!(out, "{text}") };
            return code;
        }
    };
    let result = match cli.command {
        Command::List => cmd_list(out),
        Command::Run(a) => cmd_run(a, out, err),
        Command::Suite(a) => cmd_suite(a, out, err),
        Command::Analyze(a) => cmd_analyze(a, out),
        Command::ValidateConfig(a) => cmd_validate(a, out),
        Command::Plot(a) => cmd_plot(a, out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

fn io_out(e: std::io::Error) -> Error {
    Error::io("<stdout>", e)
}

fn cmd_list(out: &mut dyn Write) -> Result<i32> {
    for id in BenchmarkId::ALL {
        let cfg = default_config(id);
        let (state_cat, action_cat) = analysis::space_categories(&cfg);
        let actions = match cfg.action_space.action_count() {
            Some(n) if !cfg.action_space.is_continuous() => n.to_string(),
            _ => "continuous".to_string(),
        };
        let count = match cfg.instance_source {
            InstanceSource::Generator { count, .. } => count,
            InstanceSource::File { .. } => 0,
        };
        writeln!(
            out,
            "{:<8} states: {} (cat {state_cat})  actions: {actions} (cat {action_cat})  cutoff: {}  reward_quality: {}  instances: train {count} / test {count}",
            id.as_str(),
            cfg.observation_space.dimension,
            cfg.episode_cutoff,
            cfg.reward_quality,
        )
        .map_err(io_out)?;
    }
    Ok(EXIT_OK)
}

fn config_for(benchmark: Option<&str>, config: Option<&Path>) -> Result<BenchmarkConfig> {
    match (benchmark, config) {
        (_, Some(path)) => {
            let cfg = BenchmarkConfig::load(path)?;
            validate_config(&cfg)?;
            Ok(cfg)
        }
        (Some(name), None) => Ok(default_config(name.parse()?)),
        (None, None) => Err(Error::Usage("name a built-in --benchmark or pass --config".into())),
    }
}

fn parse_policies(texts: &[String], config: &BenchmarkConfig) -> Result<Vec<PolicySpec>> {
    texts
        .iter()
        .map(|t| {
            let spec = PolicySpec::parse(t, &config.action_space).map_err(|e| match e {
                Error::Usage(m) => Error::Usage(format!("{m} (policies: {POLICY_GRAMMAR})")),
                other => other,
            })?;
            spec.validate(config.benchmark_id, &config.action_space)
                .map_err(|e| Error::Usage(format!("policy `{t}`: {e}")))?;
            Ok(spec)
        })
        .collect()
}

fn apply_common(plan: &mut ExperimentPlan, common: &Common) -> Result<()> {
    if let Some(seeds) = &common.seeds {
        plan.seeds = seeds.0.clone();
    }
    if let Some(n) = common.episodes {
        plan.episodes_per_instance = n;
    }
    if common.log_observations {
        plan.log_observations = true;
    }
    if common.jobs.is_some() {
        plan.jobs = common.jobs;
    }
    if let Some(split) = common.split {
        plan.benchmark_config = plan.benchmark_config.clone().with_split(split);
    }
    plan.output_dir = common.output.clone();
    plan.validate()
}

fn report(report: &SuiteReport, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    writeln!(out, "run {} ({}, config {})", report.run_id, report.benchmark, report.config_hash).map_err(io_out)?;
    writeln!(out, "output {}", report.run_dir.display()).map_err(io_out)?;
    for r in &report.policy_rows {
        writeln!(
            out,
            "  {:<20} mean {:>12.4}  std {:>10.4}  ci95 [{:.4}, {:.4}]  seeds {}  incomplete cells {}",
            r.policy, r.mean, r.std, r.ci95_low, r.ci95_high, r.seeds, r.incomplete_cells
        )
        .map_err(io_out)?;
    }
    for f in report.failures() {
        let _ = writeln!(err, "failed: policy {} seed {} instance {}: {}", f.policy, f.seed, f.instance_id, f.error);
    }
    Ok(if report.is_complete() { EXIT_OK } else { EXIT_PARTIAL })
}

fn cmd_run(a: RunArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let mut plan = match &a.plan {
        Some(path) => {
            let mut plan = ExperimentPlan::load(path)?;
            // a frozen plan names its original run; a rerun gets a fresh one
            plan.run_id = None;
            if !a.policies.is_empty() {
                plan.policies = parse_policies(&a.policies, &plan.benchmark_config)?;
            }
            plan
        }
        None => {
            let cfg = config_for(a.benchmark.as_deref(), a.config.as_deref())?;
            if a.policies.is_empty() {
                return Err(Error::Usage(format!("give at least one --policy ({POLICY_GRAMMAR})")));
            }
            let policies = parse_policies(&a.policies, &cfg)?;
            ExperimentPlan::new(cfg, policies, &a.common.output)
        }
    };
    plan.run_id = a.run_id.or(plan.run_id);
    apply_common(&mut plan, &a.common)?;
    let plan = plan.resolved()?;
    report(&run_suite(&plan)?, out, err)
}

/// Random baseline plus every applicable reference policy.
fn default_zoo(config: &BenchmarkConfig) -> Vec<PolicySpec> {
    let mut zoo = vec![PolicySpec::Random { seed: 0 }];
    for p in [PolicySpec::Optimal, PolicySpec::Csa] {
        if p.applicable_benchmarks().contains(&config.benchmark_id) {
            zoo.push(p);
        }
    }
    zoo
}

fn cmd_suite(a: SuiteArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let ids: Vec<BenchmarkId> = if a.benchmarks.is_empty() {
        BenchmarkId::ALL.to_vec()
    } else {
        a.benchmarks.iter().map(|b| b.parse()).collect::<Result<_>>()?
    };
    let mut code = EXIT_OK;
    for id in ids {
        let cfg = default_config(id);
        let policies = if a.policies.is_empty() {
            default_zoo(&cfg)
        } else {
            parse_policies(&a.policies, &cfg)?
        };
        let mut plan = ExperimentPlan::new(cfg, policies, &a.common.output);
        plan.run_id = Some(format!("{}-{id}", a.run_prefix));
        apply_common(&mut plan, &a.common)?;
        if report(&run_suite(&plan.resolved()?)?, out, err)? != EXIT_OK {
            code = EXIT_PARTIAL;
        }
    }
    Ok(code)
}

fn cache_path(root: &Path, benchmark: &str) -> PathBuf {
    root.join("analysis").join(format!("{benchmark}.profile.json"))
}

/// Cached profile if it matches `config` and `settings`; a mismatch is a
/// stale-cache error unless `refresh` is set.
fn cached_profile(path: &Path, config: &BenchmarkConfig, settings: &AnalysisSettings, refresh: bool) -> Result<Option<DifficultyProfile>> {
    if !path.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let cached: DifficultyProfile = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        line: e.line() as u64,
        message: e.to_string(),
    })?;
    if cached.config_hash == config.config_hash() && &cached.settings == settings {
        return Ok(Some(cached));
    }
    if refresh {
        return Ok(None);
    }
    Err(Error::StaleCache(format!(
        "{} was computed for config {} with different inputs than config {}; rerun with --refresh",
        path.display(),
        cached.config_hash,
        config.config_hash()
    )))
}

fn cmd_analyze(a: AnalyzeArgs, out: &mut dyn Write) -> Result<i32> {
    let mut configs: Vec<BenchmarkConfig> = a.benchmarks.iter().map(|b| Ok(default_config(b.parse()?))).collect::<Result<_>>()?;
    for path in &a.configs {
        configs.push(config_for(None, Some(path))?);
    }
    if configs.is_empty() {
        return Err(Error::Usage("name at least one --benchmark or --config".into()));
    }
    let settings = AnalysisSettings {
        seeds: a.seeds.map(|s| s.0).unwrap_or_else(|| AnalysisSettings::default().seeds),
        runs: a.runs,
        static_count: a.static_count,
        instance_limit: a.instance_limit,
    };
    let dir = a.output.join("analysis");
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut profiles = Vec::new();
    for cfg in &configs {
        let path = cache_path(&a.output, cfg.benchmark_id.as_str());
        let p = match cached_profile(&path, cfg, &settings, a.refresh)? {
            Some(p) => p,
            None => {
                let p = analysis::profile(cfg, &settings)?;
                let json = serde_json::to_string_pretty(&p).expect("profiles serialize");
                fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
                p
            }
        };
        writeln!(
            out,
            "{:<8} state {} action {} reward_quality {} noise {:.4e}{} heterogeneity {:.4}{} dynamicity {:.4}",
            p.benchmark,
            p.state_space_category,
            p.action_space_category,
            p.reward_quality,
            p.noise,
            if p.noise_degenerate { " (raw std)" } else { "" },
            p.policy_heterogeneity,
            if p.heterogeneity_degenerate { " (raw std)" } else { "" },
            p.dynamicity
        )
        .map_err(io_out)?;
        profiles.push(p);
    }
    let radar = dir.join("radar.csv");
    logging::write_csv_rows(&radar, &analysis::radar_rows(&profiles))?;
    writeln!(out, "radar {}", radar.display()).map_err(io_out)?;
    Ok(EXIT_OK)
}

fn cmd_validate(a: ValidateArgs, out: &mut dyn Write) -> Result<i32> {
    let json = match (&a.config, &a.plan) {
        (Some(path), _) => {
            let cfg = config_for(None, Some(path))?;
            writeln!(out, "ok {} config {}", cfg.benchmark_id, cfg.config_hash()).map_err(io_out)?;
            cfg.to_json()
        }
        (None, Some(path)) => {
            let plan = ExperimentPlan::load(path)?.resolved()?;
            validate_config(&plan.benchmark_config)?;
            writeln!(out, "ok {} plan, config {}", plan.benchmark_config.benchmark_id, plan.benchmark_config.config_hash()).map_err(io_out)?;
            plan.to_json()
        }
        (None, None) => unreachable!("clap requires one of --config and --plan"),
    };
    writeln!(out, "{json}").map_err(io_out)?;
    Ok(EXIT_OK)
}

fn cmd_plot(a: PlotArgs, out: &mut dyn Write) -> Result<i32> {
    let kind: PlotKind = a.kind.parse()?;
    let trace = logging::reload_run(&a.run)?;
    let csv = logging::to_plot_data(&trace, kind)?;
    match a.out {
        Some(path) => fs::write(&path, csv).map_err(|e| Error::io(&path, e))?,
        None => out.write_all(csv.as_bytes()).map_err(io_out)?,
    }
    Ok(EXIT_OK)
}
