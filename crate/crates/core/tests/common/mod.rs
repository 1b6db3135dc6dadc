#![allow(dead_code)]

use std::collections::BTreeMap;

use dac_core::env::{Environment, Observation, ReferenceKind, StepResult};
use dac_core::envs::sgd::{Batch, Mlp};
use dac_core::envs::{default_config, make_environment};
use dac_core::{Action, BenchmarkConfig, BenchmarkId, Error, Result, SpaceSpec};

/// Rewards `reward` on every step regardless of the action.
pub struct ConstantEnv {
    pub config: BenchmarkConfig,
    pub reward: f64,
    pub instances: usize,
    cursor: Option<usize>,
    steps: usize,
}

impl ConstantEnv {
    pub fn new(reward: f64, instances: usize) -> Self {
        ConstantEnv {
            config: default_config(BenchmarkId::Luby),
            reward,
            instances,
            cursor: None,
            steps: 0,
        }
    }
}

impl Environment for ConstantEnv {
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
        self.instances
    }

    fn instance_id(&self, index: usize) -> Option<String> {
        (index < self.instances).then(|| format!("const-{index}"))
    }

    fn current_instance(&self) -> Option<usize> {
        self.cursor
    }

    fn seed(&mut self, _seed: u64) {}

    fn reset(&mut self) -> Observation {
        let next = self.cursor.map_or(0, |c| (c + 1) % self.instances);
        self.reset_to(next).expect("in range")
    }

    fn reset_to(&mut self, index: usize) -> Result<Observation> {
        self.cursor = Some(index);
        self.steps = 0;
        Ok(vec![0.0; self.config.observation_space.dimension])
    }

    fn step(&mut self, action: &Action) -> Result<StepResult> {
        self.config.action_space.check_action(action)?;
        self.steps += 1;
        Ok(StepResult {
            observation: vec![0.0; self.config.observation_space.dimension],
            reward: self.reward,
            done: self.steps >= self.config.episode_cutoff,
            info: BTreeMap::new(),
        })
    }

    fn step_count(&self) -> usize {
        self.steps
    }

    fn reference_action(&self, _kind: ReferenceKind) -> Result<Action> {
        Err(Error::config("policy", "no reference"))
    }
}

/// A real environment whose steps fail on one instance.
pub struct FailingEnv {
    pub inner: Box<dyn Environment>,
    pub failing_instance: usize,
}

impl FailingEnv {
    pub fn new(config: &BenchmarkConfig, failing_instance: usize) -> Self {
        FailingEnv {
            inner: make_environment(config).unwrap(),
            failing_instance,
        }
    }
}

impl Environment for FailingEnv {
    fn config(&self) -> &BenchmarkConfig {
        self.inner.config()
    }

    fn action_space(&self) -> &SpaceSpec {
        self.inner.action_space()
    }

    fn observation_space(&self) -> &SpaceSpec {
        self.inner.observation_space()
    }

    fn instance_count(&self) -> usize {
        self.inner.instance_count()
    }

    fn instance_id(&self, index: usize) -> Option<String> {
        self.inner.instance_id(index)
    }

    fn current_instance(&self) -> Option<usize> {
        self.inner.current_instance()
    }

    fn seed(&mut self, seed: u64) {
        self.inner.seed(seed)
    }

    fn reset(&mut self) -> Observation {
        self.inner.reset()
    }

    fn reset_to(&mut self, index: usize) -> Result<Observation> {
        self.inner.reset_to(index)
    }

    fn step(&mut self, action: &Action) -> Result<StepResult> {
        if self.inner.current_instance() == Some(self.failing_instance) && self.inner.step_count() == 2 {
            return Err(Error::Numeric("injected failure".into()));
        }
        self.inner.step(action)
    }

    fn step_count(&self) -> usize {
        self.inner.step_count()
    }

    fn reference_action(&self, kind: ReferenceKind) -> Result<Action> {
        self.inner.reference_action(kind)
    }
}

/// Runs one episode of a fixed action sequence, returning the step results.
pub fn rollout(env: &mut dyn Environment, instance: usize, actions: impl Fn(usize) -> Action) -> Vec<StepResult> {
    env.reset_to(instance).unwrap();
    let mut out = Vec::new();
    loop {
        let r = env.step(&actions(out.len())).unwrap();
        let done = r.done;
        out.push(r);
        if done {
            return out;
        }
    }
}

/// Largest relative deviation between the analytic gradient and central
/// differences, with magnitudes below `floor` compared absolutely.
pub fn gradient_error(net: &Mlp, batch: &Batch<'_>, h: f64, floor: f64) -> f64 {
    let (_, grad) = net.forward_backward(batch).unwrap();
    let mut probe = net.clone();
    let mut worst: f64 = 0.0;
    for i in 0..net.parameters.len() {
        let base = probe.parameters[i];
        probe.parameters[i] = base + h;
        let up = probe.mean_loss(batch).unwrap();
        probe.parameters[i] = base - h;
        let down = probe.mean_loss(batch).unwrap();
        probe.parameters[i] = base;
        let fd = (up - down) / (2.0 * h);
        let err = (grad[i] - fd).abs() / grad[i].abs().max(fd.abs()).max(floor);
        worst = worst.max(err);
    }
    worst
}
