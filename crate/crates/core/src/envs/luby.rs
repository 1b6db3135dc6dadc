//! Luby sequence prediction benchmark.
//!
//! At step `k` (0-based) the target is `luby(k + 1 + start_shift + offset)`,
//! where `offset` is the rounded running sum of Normal(0, noise_scale) draws.
//! Action `a` stands for the value `2^a`; the reward is 0 for a hit and -1
//! otherwise.
//!
//! Observation layout: `[timestep, last H actions (-1 padding, most recent
//! last), previous reward, next goal, episode cutoff]`.
//!
//! Instance CSV columns: `instance_id, start_shift, noise_scale`.

use std::collections::BTreeMap;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::config::BenchmarkId;
use crate::env::{Benchmark, EpisodeContext, Observation, ReferenceKind, Transition};
use crate::error::{Error, Result};
use crate::instance::{expect_column, parse_field, InstanceRecord, Split};
use crate::seed::Rng;
use crate::space::{Action, Interval, SpaceSpec};

/// Value of the Luby sequence at 1-based position `t`.
pub fn luby_value(t: u64) -> Result<u64> {
    if t == 0 {
        return Err(Error::Domain("the Luby sequence is indexed from 1".into()));
    }
    let mut t = t;
    loop {
        if (t + 1).is_power_of_two() {
            // t = 2^k - 1
            let k = (t + 1).trailing_zeros();
            return Ok(1 << (k - 1));
        }
        // 2^(k-1) <= t < 2^k - 1
        let k = 64 - t.leading_zeros();
        t = t - (1 << (k - 1)) + 1;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LubyParams {
    /// Power of two; the action count is its base-2 logarithm.
    pub sequence_length: u64,
    /// Number of past actions exposed in the observation.
    pub history_length: usize,
    /// Largest start shift the generator may draw.
    pub max_start_shift: u64,
    /// Noise scale assigned to generated instances.
    pub noise_scale: f64,
}

impl Default for LubyParams {
    fn default() -> Self {
        LubyParams {
            sequence_length: 64,
            history_length: 5,
            max_start_shift: 62,
            noise_scale: 0.0,
        }
    }
}

impl LubyParams {
    pub fn action_count(&self) -> usize {
        self.sequence_length.trailing_zeros() as usize
    }

    /// Largest position whose value is still reachable with the available actions.
    pub fn max_position(&self) -> u64 {
        (1u64 << (self.action_count() + 1)) - 2
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LubyInstance {
    pub id: String,
    pub start_shift: u64,
    pub noise_scale: f64,
}

impl InstanceRecord for LubyInstance {
    fn id(&self) -> &str {
        &self.id
    }

    fn csv_header(_instances: &[Self]) -> Result<Vec<String>> {
        Ok(["instance_id", "start_shift", "noise_scale"].map(String::from).to_vec())
    }

    fn to_csv_row(&self) -> Vec<String> {
        vec![self.id.clone(), self.start_shift.to_string(), self.noise_scale.to_string()]
    }

    fn from_csv_row(header: &[String], row: &[String]) -> std::result::Result<Self, String> {
        for (i, name) in ["instance_id", "start_shift", "noise_scale"].iter().enumerate() {
            expect_column(header, i, name)?;
        }
        Ok(LubyInstance {
            id: row[0].clone(),
            start_shift: parse_field(row, 1, "start_shift")?,
            noise_scale: parse_field(row, 2, "noise_scale")?,
        })
    }
}

pub struct LubyBenchmark {
    params: LubyParams,
    cutoff: usize,
    instance: Option<LubyInstance>,
    rng: Option<Rng>,
    noise: Option<Normal<f64>>,
    drift: f64,
    step: usize,
    history: Vec<f64>,
    prev_reward: f64,
}

impl LubyBenchmark {
    /// Position of the upcoming step, with the pre-drawn drift already applied.
    fn next_position(&self) -> u64 {
        let inst = self.instance.as_ref().expect("episode started");
        let base = self.step as f64 + 1.0 + inst.start_shift as f64 + self.drift.round();
        (base.max(1.0) as u64).min(self.params.max_position())
    }

    fn next_goal(&self) -> u64 {
        luby_value(self.next_position()).expect("positions are >= 1")
    }

    fn draw_drift(&mut self) {
        if let (Some(noise), Some(rng)) = (&self.noise, self.rng.as_mut()) {
            self.drift += noise.sample(rng);
        }
    }

    fn observe(&self) -> Observation {
        let mut obs = Vec::with_capacity(4 + self.params.history_length);
        obs.push(self.step as f64);
        obs.extend(&self.history);
        obs.push(self.prev_reward);
        obs.push(self.next_goal() as f64);
        obs.push(self.cutoff as f64);
        obs
    }
}

impl Benchmark for LubyBenchmark {
    const ID: BenchmarkId = BenchmarkId::Luby;
    const DEFAULT_CUTOFF: usize = 64;
    const REWARD_QUALITY: u8 = 1;

    type Instance = LubyInstance;
    type Params = LubyParams;

    fn validate_params(params: &LubyParams, cutoff: usize) -> Result<()> {
        if !params.sequence_length.is_power_of_two() || params.sequence_length < 2 || params.sequence_length > 1 << 20 {
            return Err(Error::config(
                "benchmark_params.sequence_length",
                "must be a power of two between 2 and 2^20",
            ));
        }
        if params.history_length == 0 {
            return Err(Error::config("benchmark_params.history_length", "must be positive"));
        }
        if params.max_start_shift + cutoff as u64 > params.max_position() {
            return Err(Error::config(
                "benchmark_params.max_start_shift",
                format!(
                    "shift {} plus cutoff {cutoff} exceeds the last reachable position {}",
                    params.max_start_shift,
                    params.max_position()
                ),
            ));
        }
        if !(params.noise_scale >= 0.0 && params.noise_scale.is_finite()) {
            return Err(Error::config("benchmark_params.noise_scale", "must be finite and >= 0"));
        }
        Ok(())
    }

    fn spaces(params: &LubyParams, cutoff: usize) -> (SpaceSpec, SpaceSpec) {
        let a = params.action_count();
        let mut bounds = vec![Interval::new(0.0, cutoff as f64)];
        bounds.extend(std::iter::repeat_n(Interval::new(-1.0, (a - 1) as f64), params.history_length));
        bounds.push(Interval::new(-1.0, 0.0));
        bounds.push(Interval::new(1.0, (1u64 << (a - 1)) as f64));
        bounds.push(Interval::new(0.0, cutoff as f64));
        (SpaceSpec::discrete(a), SpaceSpec::continuous(bounds))
    }

    /// Shifts are uniform over even values for the training split and odd values
    /// for the test split, so the two sets never share an instance.
    fn generate_instances(params: &LubyParams, _cutoff: usize, split: Split, count: usize, rng: &mut Rng) -> Vec<LubyInstance> {
        let parity = split.stream_index();
        let choices: Vec<u64> = (0..=params.max_start_shift).filter(|s| s % 2 == parity).collect();
        (0..count)
            .map(|i| LubyInstance {
                id: format!("{}-{i:03}", split.as_str()),
                start_shift: if choices.is_empty() { 0 } else { choices[rng.random_range(0..choices.len())] },
                noise_scale: params.noise_scale,
            })
            .collect()
    }

    fn build(params: LubyParams, cutoff: usize) -> Result<Self> {
        let history = vec![-1.0; params.history_length];
        Ok(LubyBenchmark {
            params,
            cutoff,
            instance: None,
            rng: None,
            noise: None,
            drift: 0.0,
            step: 0,
            history,
            prev_reward: 0.0,
        })
    }

    fn check_instance(&self, instance: &LubyInstance) -> Result<()> {
        if instance.start_shift + self.cutoff as u64 > self.params.max_position() {
            return Err(Error::config(
                "instances",
                format!(
                    "start_shift {} runs past position {} within {} steps",
                    instance.start_shift,
                    self.params.max_position(),
                    self.cutoff
                ),
            ));
        }
        if !(instance.noise_scale >= 0.0 && instance.noise_scale.is_finite()) {
            return Err(Error::config("instances", "noise_scale must be finite and >= 0"));
        }
        Ok(())
    }

    fn begin(&mut self, instance: &LubyInstance, ctx: EpisodeContext) -> Observation {
        self.noise = (instance.noise_scale > 0.0)
            .then(|| Normal::new(0.0, instance.noise_scale).expect("validated noise scale"));
        self.instance = Some(instance.clone());
        self.rng = Some(ctx.rng);
        self.drift = 0.0;
        self.step = 0;
        self.history.iter_mut().for_each(|h| *h = -1.0);
        self.prev_reward = 0.0;
        self.draw_drift();
        self.observe()
    }

    fn advance(&mut self, action: &Action, step: usize) -> Result<Transition> {
        let &Action::Discrete(a) = action else {
            return Err(Error::Domain(format!("luby expects a discrete action, got {action:?}")));
        };
        let position = self.next_position();
        let target = luby_value(position)?;
        let reward = if 1u64 << a == target { 0.0 } else { -1.0 };

        self.history.remove(0);
        self.history.push(a as f64);
        self.prev_reward = reward;
        self.step = step + 1;
        self.draw_drift();

        let mut info = BTreeMap::new();
        info.insert("position".to_string(), position as f64);
        info.insert("target".to_string(), target as f64);
        Ok(Transition {
            observation: self.observe(),
            reward,
            terminated: false,
            info,
        })
    }

    fn reference_action(&self, kind: ReferenceKind) -> Option<Action> {
        match kind {
            ReferenceKind::Optimal => {
                self.instance.as_ref()?;
                Some(Action::Discrete(self.next_goal().trailing_zeros() as usize))
            }
            ReferenceKind::Csa => None,
        }
    }
}
