//! Experiment grids over (policy, seed) cells.
//!
//! A cell builds its own environment from the plan's config, reseeds the
//! environment stream with the cell seed, and runs every selected instance
//! `episodes_per_instance` times. Cells share nothing while running, so a
//! cell's results do not depend on which other cells exist.

use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::BenchmarkConfig;
use crate::env::Environment;
use crate::envs::make_environment;
use crate::error::{Error, Result};
use crate::logging::{self, EpisodeOutcome, PolicyRow, StepLogRecord, SummaryRow, TraceWriter};
use crate::policy::{Policy, PolicySpec};
use crate::seed::derive_seed;
use crate::space::Action;

pub const DEFAULT_SEEDS: [u64; 10] = [0, 1, 2, 3, 4, 5, 6, 7, 8, 9];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    pub benchmark_config: BenchmarkConfig,
    pub policies: Vec<PolicySpec>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "one")]
    pub episodes_per_instance: usize,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub log_observations: bool,
    /// Worker threads; `None` uses the global pool.
    #[serde(default)]
    pub jobs: Option<usize>,
    /// Instance indices to run; `None` runs the whole set.
    #[serde(default)]
    pub instances: Option<Vec<usize>>,
    /// Defaults to `<benchmark>-<unix milliseconds>`.
    #[serde(default)]
    pub run_id: Option<String>,
}

fn default_seeds() -> Vec<u64> {
    DEFAULT_SEEDS.to_vec()
}

fn one() -> usize {
    1
}

impl ExperimentPlan {
    pub fn new(benchmark_config: BenchmarkConfig, policies: Vec<PolicySpec>, output_dir: impl Into<PathBuf>) -> Self {
        ExperimentPlan {
            benchmark_config,
            policies,
            seeds: default_seeds(),
            episodes_per_instance: 1,
            output_dir: output_dir.into(),
            log_observations: false,
            jobs: None,
            instances: None,
            run_id: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            path: "plan".into(),
            line: e.line() as u64,
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Parse { line, message, .. } => Error::Parse {
                path: path.display().to_string(),
                line,
                message,
            },
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plans serialize")
    }

    /// Binds static actions to the config's action space, then validates.
    pub fn resolved(mut self) -> Result<Self> {
        let space = self.benchmark_config.action_space.clone();
        self.policies = self.policies.into_iter().map(|p| p.bind(&space)).collect::<Result<_>>()?;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        self.benchmark_config.validate()?;
        if self.seeds.is_empty() {
            return Err(Error::config("seeds", "must not be empty"));
        }
        let distinct: BTreeSet<_> = self.seeds.iter().collect();
        if distinct.len() != self.seeds.len() {
            return Err(Error::config("seeds", "must be distinct"));
        }
        if self.episodes_per_instance == 0 {
            return Err(Error::config("episodes_per_instance", "must be positive"));
        }
        if self.policies.is_empty() {
            return Err(Error::config("policies", "must not be empty"));
        }
        if self.jobs == Some(0) {
            return Err(Error::config("jobs", "must be positive"));
        }
        let ids: BTreeSet<String> = self.policies.iter().map(PolicySpec::id).collect();
        if ids.len() != self.policies.len() {
            return Err(Error::config("policies", "must be distinct"));
        }
        for p in &self.policies {
            p.validate(self.benchmark_config.benchmark_id, &self.benchmark_config.action_space)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeSummary {
    pub policy_id: String,
    pub seed: u64,
    pub instance_id: String,
    pub instance_index: usize,
    pub episode: u64,
    pub cumulative_reward: f64,
    pub steps_taken: usize,
    pub wall_time: Duration,
}

/// One step as seen by the runner, handed to the step sink.
#[derive(Debug, Clone)]
pub struct StepEvent<'a> {
    pub step: usize,
    pub action: &'a Action,
    pub reward: f64,
    pub observation: &'a [f64],
    pub wall_time: Duration,
}

/// Policy stream key of an episode; a function of the cell seed and the
/// (instance, episode) position only.
pub fn episode_key(seed: u64, instance_index: usize, episode: u64) -> u64 {
    derive_seed(seed, "episode-key", ((instance_index as u64) << 32) | episode)
}

/// Resets to `instance_index` and steps with `policy` until done.
///
/// The caller seeds the environment; `episode` is forwarded to the policy key.
pub fn run_episode(
    env: &mut dyn Environment,
    policy: &mut Policy,
    seed: u64,
    instance_index: usize,
    episode: u64,
    sink: &mut dyn FnMut(StepEvent<'_>) -> Result<()>,
) -> Result<EpisodeSummary> {
    let start = Instant::now();
    let mut observation = env.reset_to(instance_index)?;
    policy.begin_episode(episode_key(seed, instance_index, episode));
    let mut cumulative_reward = 0.0;
    let mut steps = 0;
    loop {
        let t0 = Instant::now();
        let action = policy.act(&observation, steps, env)?;
        let result = env.step(&action)?;
        cumulative_reward += result.reward;
        sink(StepEvent {
            step: steps,
            action: &action,
            reward: result.reward,
            observation: &result.observation,
            wall_time: t0.elapsed(),
        })?;
        steps += 1;
        observation = result.observation;
        if result.done {
            break;
        }
    }
    Ok(EpisodeSummary {
        policy_id: policy.spec().id(),
        seed,
        instance_id: env.instance_id(instance_index).unwrap_or_default(),
        instance_index,
        episode,
        cumulative_reward,
        steps_taken: steps,
        wall_time: start.elapsed(),
    })
}

/// Uniform mean over instances of the per-instance mean cumulative reward.
pub fn estimate_return(summaries: &[EpisodeSummary], instance_ids: &[String]) -> Result<f64> {
    let mut per_instance: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for s in summaries {
        per_instance.entry(&s.instance_id).or_default().push(s.cumulative_reward);
    }
    let missing: Vec<String> = instance_ids
        .iter()
        .filter(|id| !per_instance.contains_key(id.as_str()))
        .cloned()
        .collect();
    if !missing.is_empty() {
        return Err(Error::Incomplete(missing));
    }
    let means: Vec<f64> = instance_ids
        .iter()
        .map(|id| logging::mean_std(&per_instance[id.as_str()]).0)
        .collect();
    Ok(logging::mean_std(&means).0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub policy: String,
    pub seed: u64,
    pub instance_id: String,
    pub error: String,
}

#[derive(Debug, Clone)]
pub struct CellReport {
    pub policy_id: String,
    pub seed: u64,
    pub episodes: Vec<EpisodeSummary>,
    pub failures: Vec<CellFailure>,
    pub trace_path: Option<PathBuf>,
}

impl CellReport {
    pub fn is_complete(&self) -> bool {
        self.failures.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct SuiteReport {
    pub run_id: String,
    pub benchmark: String,
    pub config_hash: String,
    pub run_dir: PathBuf,
    pub cells: Vec<CellReport>,
    pub summary_rows: Vec<SummaryRow>,
    pub policy_rows: Vec<PolicyRow>,
}

impl SuiteReport {
    pub fn episode_count(&self) -> usize {
        self.cells.iter().map(|c| c.episodes.len()).sum()
    }

    pub fn failures(&self) -> Vec<&CellFailure> {
        self.cells.iter().flat_map(|c| &c.failures).collect()
    }

    pub fn is_complete(&self) -> bool {
        self.cells.iter().all(CellReport::is_complete)
    }
}

pub type EnvFactory = dyn Fn(&BenchmarkConfig) -> Result<Box<dyn Environment>> + Sync;

pub fn run_suite(plan: &ExperimentPlan) -> Result<SuiteReport> {
    run_suite_with(plan, &make_environment)
}

fn default_run_id(plan: &ExperimentPlan) -> String {
    let ms = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis());
    format!("{}-{ms}", plan.benchmark_config.benchmark_id)
}

/// Runs the grid with environments from `factory`. Writes the traces,
/// `summary.csv`, `policy_summary.csv`, `failures.csv` (only when cells
/// failed), the resolved `config.json` and the frozen `plan.json` into
/// `<output_dir>/<run_id>/`.
pub fn run_suite_with(plan: &ExperimentPlan, factory: &EnvFactory) -> Result<SuiteReport> {
    plan.validate()?;
    let config = &plan.benchmark_config;
    let run_id = plan.run_id.clone().unwrap_or_else(|| default_run_id(plan));
    let run_dir = plan.output_dir.join(&run_id);
    fs::create_dir_all(&run_dir).map_err(|e| Error::io(&run_dir, e))?;
    config.save(&run_dir.join("config.json"))?;
    let frozen = ExperimentPlan {
        run_id: Some(run_id.clone()),
        ..plan.clone()
    };
    let plan_path = run_dir.join("plan.json");
    fs::write(&plan_path, frozen.to_json()).map_err(|e| Error::io(&plan_path, e))?;

    let probe = factory(config)?;
    let instance_ids: Vec<String> = (0..probe.instance_count()).map(|i| probe.instance_id(i).unwrap_or_default()).collect();
    drop(probe);
    let selected: Vec<usize> = match &plan.instances {
        Some(list) => {
            if let Some(bad) = list.iter().find(|&&i| i >= instance_ids.len()) {
                return Err(Error::config("instances", format!("index {bad} outside set of {}", instance_ids.len())));
            }
            list.clone()
        }
        None => (0..instance_ids.len()).collect(),
    };

    let cells: Vec<(&PolicySpec, u64)> = plan
        .policies
        .iter()
        .flat_map(|p| plan.seeds.iter().map(move |&s| (p, s)))
        .collect();
    let ctx = CellContext {
        plan,
        factory,
        run_id: &run_id,
        config_hash: config.config_hash(),
        selected: &selected,
    };
    let run_all = || cells.par_iter().map(|&(p, s)| ctx.run(p, s)).collect::<Vec<CellReport>>();
    let reports = match plan.jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::config("jobs", e.to_string()))?
            .install(run_all),
        None => run_all(),
    };

    let benchmark = config.benchmark_id.to_string();
    let outcomes: Vec<EpisodeOutcome> = reports
        .iter()
        .flat_map(|c| &c.episodes)
        .map(|e| EpisodeOutcome {
            benchmark: benchmark.clone(),
            policy_id: e.policy_id.clone(),
            seed: e.seed,
            instance_id: e.instance_id.clone(),
            episode: e.episode,
            cumulative_reward: e.cumulative_reward,
            steps: e.steps_taken,
        })
        .collect();
    let summary_rows = logging::summarize(&outcomes);
    let mut policy_rows = Vec::new();
    for p in &plan.policies {
        let id = p.id();
        let rows: Vec<SummaryRow> = summary_rows.iter().filter(|r| r.policy == id).cloned().collect();
        let incomplete = reports.iter().filter(|c| c.policy_id == id && !c.is_complete()).count();
        let mut row = match logging::policy_rows(&rows).pop() {
            Some(row) => row,
            None => PolicyRow {
                benchmark: benchmark.clone(),
                policy: id,
                seeds: 0,
                mean: f64::NAN,
                std: f64::NAN,
                ci95_low: f64::NAN,
                ci95_high: f64::NAN,
                incomplete_cells: 0,
            },
        };
        row.incomplete_cells = incomplete;
        policy_rows.push(row);
    }
    logging::write_csv_rows(&run_dir.join("summary.csv"), &summary_rows)?;
    logging::write_csv_rows(&run_dir.join("policy_summary.csv"), &policy_rows)?;
    let failures: Vec<CellFailure> = reports.iter().flat_map(|c| c.failures.clone()).collect();
    if !failures.is_empty() {
        logging::write_csv_rows(&run_dir.join("failures.csv"), &failures)?;
    }
    Ok(SuiteReport {
        run_id,
        benchmark,
        config_hash: config.config_hash(),
        run_dir,
        cells: reports,
        summary_rows,
        policy_rows,
    })
}

struct CellContext<'a> {
    plan: &'a ExperimentPlan,
    factory: &'a EnvFactory,
    run_id: &'a str,
    config_hash: String,
    selected: &'a [usize],
}

impl CellContext<'_> {
    fn run(&self, spec: &PolicySpec, seed: u64) -> CellReport {
        let policy_id = spec.id();
        let mut report = CellReport {
            policy_id: policy_id.clone(),
            seed,
            episodes: Vec::new(),
            failures: Vec::new(),
            trace_path: None,
        };
        let fail = |report: &mut CellReport, instance_id: String, e: Error| {
            report.failures.push(CellFailure {
                policy: policy_id.clone(),
                seed,
                instance_id,
                error: e.to_string(),
            })
        };
        let mut env = match (self.factory)(&self.plan.benchmark_config) {
            Ok(env) => env,
            Err(e) => {
                fail(&mut report, String::new(), e);
                return report;
            }
        };
        env.seed(seed);
        let path = logging::trace_path(&self.plan.output_dir, self.run_id, &policy_id, seed);
        let mut writer = match TraceWriter::create(&path) {
            Ok(w) => w,
            Err(e) => {
                fail(&mut report, String::new(), e);
                return report;
            }
        };
        report.trace_path = Some(path);
        let mut policy = spec.build(env.action_space());
        let benchmark = self.plan.benchmark_config.benchmark_id.to_string();
        for &index in self.selected {
            let instance_id = env.instance_id(index).unwrap_or_default();
            for episode in 0..self.plan.episodes_per_instance as u64 {
                let mut records = Vec::new();
                let mut sink = |ev: StepEvent<'_>| {
                    records.push(StepLogRecord {
                        run_id: self.run_id.to_string(),
                        benchmark: benchmark.clone(),
                        config_hash: self.config_hash.clone(),
                        policy_id: policy_id.clone(),
                        seed,
                        instance_id: instance_id.clone(),
                        episode,
                        step: ev.step as u64,
                        action: ev.action.clone(),
                        reward: ev.reward,
                        observation: self.plan.log_observations.then(|| ev.observation.to_vec()),
                        wall_time_ns: ev.wall_time.as_nanos() as u64,
                    });
                    Ok(())
                };
                // records of a failed episode are dropped so traces hold whole episodes only
                let outcome = run_episode(env.as_mut(), &mut policy, seed, index, episode, &mut sink).and_then(|s| {
                    records.iter().try_for_each(|r| writer.append(r))?;
                    writer.end_episode()?;
                    Ok(s)
                });
                match outcome {
                    Ok(summary) => report.episodes.push(summary),
                    Err(e) => {
                        let e = e.context(format!("policy {policy_id}, seed {seed}, instance {instance_id}"));
                        fail(&mut report, instance_id.clone(), e);
                        break;
                    }
                }
            }
        }
        report
    }
}
