//! The shipped benchmarks and the id-based dispatch over them.

pub mod cmaes;
pub mod luby;
pub mod sgd;
pub mod sigmoid;

use std::collections::BTreeMap;

use serde_json::Value;

use crate::config::{BenchmarkConfig, BenchmarkId, InstanceOrder, InstanceSource, DEFAULT_INSTANCE_COUNT, FORMAT_VERSION};
use crate::env::{Benchmark, Environment, Episodic};
use crate::error::{Error, Result};
use crate::instance::{InstanceSet, Split};
use crate::seed;

pub use cmaes::CmaesBenchmark;
pub use luby::LubyBenchmark;
pub use sgd::SgdBenchmark;
pub use sigmoid::SigmoidBenchmark;

macro_rules! dispatch {
    ($id:expr, $f:ident ( $($arg:expr),* )) => {
        match $id {
            BenchmarkId::Sigmoid => $f::<SigmoidBenchmark>($($arg),*),
            BenchmarkId::Luby => $f::<LubyBenchmark>($($arg),*),
            BenchmarkId::Cmaes => $f::<CmaesBenchmark>($($arg),*),
            BenchmarkId::Sgd => $f::<SgdBenchmark>($($arg),*),
        }
    };
}

fn params_to_map<T: serde::Serialize>(params: &T) -> BTreeMap<String, Value> {
    match serde_json::to_value(params).expect("params serialize") {
        Value::Object(map) => map.into_iter().collect(),
        _ => unreachable!("benchmark params serialize to a JSON object"),
    }
}

/// Fully resolved default config for `B` with the given parameters.
pub fn config_for<B: Benchmark>(params: &B::Params) -> BenchmarkConfig {
    let (action_space, observation_space) = B::spaces(params, B::DEFAULT_CUTOFF);
    BenchmarkConfig {
        format_version: FORMAT_VERSION.to_string(),
        benchmark_id: B::ID,
        action_space,
        observation_space,
        episode_cutoff: B::DEFAULT_CUTOFF,
        instance_source: InstanceSource::Generator {
            split: Split::Train,
            count: DEFAULT_INSTANCE_COUNT,
        },
        instance_order: InstanceOrder::RoundRobin,
        seed: 0,
        reward_quality: B::REWARD_QUALITY,
        benchmark_params: params_to_map(params),
    }
}

fn default_config_of<B: Benchmark>() -> BenchmarkConfig {
    config_for::<B>(&B::Params::default())
}

pub fn default_config(id: BenchmarkId) -> BenchmarkConfig {
    dispatch!(id, default_config_of())
}

/// Parses the typed parameters of `B`, filling unspecified keys from defaults.
pub fn typed_params<B: Benchmark>(config: &BenchmarkConfig) -> Result<B::Params> {
    let map: serde_json::Map<String, Value> = config
        .benchmark_params
        .iter()
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();
    serde_json::from_value(Value::Object(map)).map_err(|e| {
        let msg = e.to_string();
        let field = msg
            .split('`')
            .nth(1)
            .map(|f| format!("benchmark_params.{f}"))
            .unwrap_or_else(|| "benchmark_params".to_string());
        Error::config(field, msg)
    })
}

fn validate_of<B: Benchmark>(config: &BenchmarkConfig) -> Result<()> {
    let params = typed_params::<B>(config)?;
    B::validate_params(&params, config.episode_cutoff)?;
    let (action, observation) = B::spaces(&params, config.episode_cutoff);
    if config.action_space != action {
        return Err(Error::config(
            "action_space",
            format!("does not match the space implied by benchmark_params: expected {action:?}"),
        ));
    }
    if config.observation_space != observation {
        return Err(Error::config(
            "observation_space",
            format!("does not match the space implied by benchmark_params: expected {observation:?}"),
        ));
    }
    Ok(())
}

pub fn validate_config(config: &BenchmarkConfig) -> Result<()> {
    dispatch!(config.benchmark_id, validate_of(config))
}

fn refresh_of<B: Benchmark>(config: &mut BenchmarkConfig) -> Result<()> {
    let params = typed_params::<B>(config)?;
    let (action, observation) = B::spaces(&params, config.episode_cutoff);
    config.action_space = action;
    config.observation_space = observation;
    config.benchmark_params = params_to_map(&params);
    Ok(())
}

/// Recomputes the spaces (and expands defaults) after a parameter change.
pub fn refresh_spaces(config: &mut BenchmarkConfig) -> Result<()> {
    dispatch!(config.benchmark_id, refresh_of(config))
}

/// Instance set described by `config.instance_source`.
pub fn load_instances<B: Benchmark>(config: &BenchmarkConfig) -> Result<InstanceSet<B::Instance>> {
    match &config.instance_source {
        InstanceSource::File { path } => InstanceSet::read_csv(path),
        InstanceSource::Generator { split, count } => {
            let params = typed_params::<B>(config)?;
            let mut rng = seed::rng_for(config.seed, seed::STREAM_INSTANCES, split.stream_index());
            let instances = B::generate_instances(&params, config.episode_cutoff, *split, *count, &mut rng);
            InstanceSet::new(
                instances,
                *split,
                format!("generated: {} {} x{} seed {}", B::ID, split.as_str(), count, config.seed),
            )
        }
    }
}

pub fn build_environment<B: Benchmark>(config: &BenchmarkConfig) -> Result<Episodic<B>> {
    config.validate()?;
    let params = typed_params::<B>(config)?;
    let instances = load_instances::<B>(config)?;
    let inner = B::build(params, config.episode_cutoff)?;
    Episodic::new(config.clone(), inner, instances)
}

fn boxed<B: Benchmark>(config: &BenchmarkConfig) -> Result<Box<dyn Environment>> {
    Ok(Box::new(build_environment::<B>(config)?))
}

/// Builds an environment in the unreset state. All randomness derives from `config.seed`.
pub fn make_environment(config: &BenchmarkConfig) -> Result<Box<dyn Environment>> {
    dispatch!(config.benchmark_id, boxed(config))
}

fn instance_csv_of<B: Benchmark>(config: &BenchmarkConfig) -> Result<String> {
    load_instances::<B>(config)?.to_csv_string()
}

/// CSV text of the instance set a config resolves to.
pub fn instance_csv(config: &BenchmarkConfig) -> Result<String> {
    config.validate()?;
    dispatch!(config.benchmark_id, instance_csv_of(config))
}
