//! Episodic reset/step environment contract.
//!
//! Benchmarks implement the small [`Benchmark`] trait; [`Episodic`] wraps one
//! into an [`Environment`], owning the instance set, round-robin iteration,
//! the step counter, action validation and the per-episode random streams.

use std::collections::BTreeMap;
use std::fmt::Debug;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::config::{BenchmarkConfig, BenchmarkId};
use crate::error::{Error, Result};
use crate::instance::{InstanceRecord, InstanceSet, Split};
use crate::seed::{self, Rng};
use crate::space::{Action, SpaceSpec};

pub type Observation = Vec<f64>;

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
    /// Diagnostics only; never needed for control.
    pub info: BTreeMap<String, f64>,
}

/// Built-in reference controllers an environment may expose.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReferenceKind {
    Optimal,
    Csa,
}

/// Environment object used by policies and the runner.
///
/// Not safe for concurrent stepping; distinct environments share nothing mutable.
pub trait Environment: Send {
    fn config(&self) -> &BenchmarkConfig;

    fn benchmark(&self) -> BenchmarkId {
        self.config().benchmark_id
    }

    fn action_space(&self) -> &SpaceSpec;

    fn observation_space(&self) -> &SpaceSpec;

    fn instance_count(&self) -> usize;

    fn instance_id(&self, index: usize) -> Option<String>;

    /// Index of the instance of the current (or last) episode.
    fn current_instance(&self) -> Option<usize>;

    /// Reseeds the environment-stochasticity stream. Instance sets are unaffected.
    fn seed(&mut self, seed: u64);

    /// Starts an episode on the next instance in round-robin order.
    fn reset(&mut self) -> Observation;

    /// Starts an episode on a specific instance; the next `reset` continues after it.
    fn reset_to(&mut self, index: usize) -> Result<Observation>;

    fn step(&mut self, action: &Action) -> Result<StepResult>;

    /// Steps taken in the current episode.
    fn step_count(&self) -> usize;

    fn reference_action(&self, kind: ReferenceKind) -> Result<Action>;
}

/// Randomness handed to a benchmark at the start of an episode.
pub struct EpisodeContext {
    pub instance_index: usize,
    /// Environment stochasticity; varies with the run seed.
    pub rng: Rng,
    /// Per-instance initial conditions; depends only on the config seed and instance.
    pub init_rng: Rng,
}

#[derive(Debug, Clone)]
pub struct Transition {
    pub observation: Observation,
    pub reward: f64,
    /// Benchmark-specific early termination (the cutoff is handled by [`Episodic`]).
    pub terminated: bool,
    pub info: BTreeMap<String, f64>,
}

pub trait Benchmark: Send + Sized + 'static {
    const ID: BenchmarkId;
    const DEFAULT_CUTOFF: usize;
    const REWARD_QUALITY: u8;

    type Instance: InstanceRecord;
    type Params: Serialize + DeserializeOwned + Default + Clone + Debug;

    fn validate_params(params: &Self::Params, cutoff: usize) -> Result<()>;

    /// (action space, observation space) implied by the parameters.
    fn spaces(params: &Self::Params, cutoff: usize) -> (SpaceSpec, SpaceSpec);

    fn generate_instances(
        params: &Self::Params,
        cutoff: usize,
        split: Split,
        count: usize,
        rng: &mut Rng,
    ) -> Vec<Self::Instance>;

    fn build(params: Self::Params, cutoff: usize) -> Result<Self>;

    /// Rejects instances incompatible with the configured parameters.
    fn check_instance(&self, instance: &Self::Instance) -> Result<()>;

    fn begin(&mut self, instance: &Self::Instance, ctx: EpisodeContext) -> Observation;

    /// Executes one control interval. `step` is the 0-based index of this step.
    fn advance(&mut self, action: &Action, step: usize) -> Result<Transition>;

    fn reference_action(&self, kind: ReferenceKind) -> Option<Action>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Unreset,
    Active,
    Done,
}

pub struct Episodic<B: Benchmark> {
    config: BenchmarkConfig,
    inner: B,
    instances: InstanceSet<B::Instance>,
    env_seed: u64,
    visits: Vec<u64>,
    cursor: Option<usize>,
    steps: usize,
    phase: Phase,
}

impl<B: Benchmark> Episodic<B> {
    pub fn new(config: BenchmarkConfig, inner: B, instances: InstanceSet<B::Instance>) -> Result<Self> {
        for inst in &instances.instances {
            inner
                .check_instance(inst)
                .map_err(|e| e.context(format!("instance `{}`", inst.id())))?;
        }
        let n = instances.len();
        let env_seed = seed::derive_seed(config.seed, seed::STREAM_ENVIRONMENT, 0);
        Ok(Episodic {
            config,
            inner,
            instances,
            env_seed,
            visits: vec![0; n],
            cursor: None,
            steps: 0,
            phase: Phase::Unreset,
        })
    }

    pub fn instances(&self) -> &InstanceSet<B::Instance> {
        &self.instances
    }

    pub fn inner(&self) -> &B {
        &self.inner
    }

    fn start(&mut self, index: usize) -> Observation {
        let visit = self.visits[index];
        self.visits[index] += 1;
        let ctx = EpisodeContext {
            instance_index: index,
            rng: seed::rng_for(self.env_seed, "episode", ((index as u64) << 32) | visit),
            init_rng: seed::rng_for(self.config.seed, seed::STREAM_INSTANCE_INIT, index as u64),
        };
        self.cursor = Some(index);
        self.steps = 0;
        self.phase = Phase::Active;
        self.inner.begin(&self.instances.instances[index], ctx)
    }
}

impl<B: Benchmark> Environment for Episodic<B> {
    fn config(&self) -> &BenchmarkConfig {
        &self.config
    }

    fn action_space(&self) -> &SpaceSpec {
        &self.config.action_space
    }

    fn observation_space(&self) -> &SpaceSpec {
        &self.config.observation_space
    }

    fn instance_count(&self) -> usize {
        self.instances.len()
    }

    fn instance_id(&self, index: usize) -> Option<String> {
        self.instances.instances.get(index).map(|i| i.id().to_string())
    }

    fn current_instance(&self) -> Option<usize> {
        self.cursor
    }

    fn seed(&mut self, seed: u64) {
        self.env_seed = seed::derive_seed(seed, seed::STREAM_ENVIRONMENT, 0);
        self.visits.iter_mut().for_each(|v| *v = 0);
    }

    fn reset(&mut self) -> Observation {
        let next = self.cursor.map_or(0, |c| (c + 1) % self.instances.len());
        self.start(next)
    }

    fn reset_to(&mut self, index: usize) -> Result<Observation> {
        if index >= self.instances.len() {
            return Err(Error::Domain(format!(
                "instance index {index} outside set of {}",
                self.instances.len()
            )));
        }
        Ok(self.start(index))
    }

    fn step(&mut self, action: &Action) -> Result<StepResult> {
        match self.phase {
            Phase::Unreset => return Err(Error::State("step called before reset".into())),
            Phase::Done => return Err(Error::State("step called after the episode finished".into())),
            Phase::Active => {}
        }
        self.config.action_space.check_action(action)?;
        let t = self.inner.advance(action, self.steps)?;
        self.steps += 1;
        let done = t.terminated || self.steps >= self.config.episode_cutoff;
        if done {
            self.phase = Phase::Done;
        }
        Ok(StepResult {
            observation: t.observation,
            reward: t.reward,
            done,
            info: t.info,
        })
    }

    fn step_count(&self) -> usize {
        self.steps
    }

    fn reference_action(&self, kind: ReferenceKind) -> Result<Action> {
        if self.phase != Phase::Active {
            return Err(Error::State("reference actions need an active episode".into()));
        }
        self.inner.reference_action(kind).ok_or_else(|| {
            Error::config(
                "policy",
                format!("{kind:?} reference policy is not available for {}", B::ID),
            )
        })
    }
}
