//! Sigmoid approximation benchmark.
//!
//! In each of D dimensions the agent picks one of `n_d` levels; level `a`
//! stands for the value `a / (n_d - 1)`. The per-dimension reward is
//! `1 - |sigmoid(t) - a / (n_d - 1)|` and the step reward is the product over
//! dimensions, so it lies in [0, 1].
//!
//! Observation layout: `[remaining steps, shift_1..shift_D, slope_1..slope_D,
//! previous action_1..previous action_D]` with `-1` before the first step.
//!
//! Instance CSV columns: `instance_id, shift_1..shift_D, slope_1..slope_D`.

use std::collections::BTreeMap;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::config::BenchmarkId;
use crate::env::{Benchmark, EpisodeContext, Observation, ReferenceKind, Transition};
use crate::error::{Error, Result};
use crate::instance::{parse_field, InstanceRecord, Split};
use crate::seed::Rng;
use crate::space::{Action, Interval, SpaceSpec, UNBOUNDED};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SigmoidParams {
    /// Number of levels per dimension; each must be at least 2.
    pub action_counts: Vec<usize>,
    /// Generator range for the slope magnitude; the sign is drawn uniformly.
    pub slope_range: [f64; 2],
    /// Generator range for the shift.
    pub shift_range: [f64; 2],
}

impl Default for SigmoidParams {
    fn default() -> Self {
        SigmoidParams {
            action_counts: vec![10, 5],
            slope_range: [0.5, 4.0],
            shift_range: [0.0, SigmoidBenchmark::DEFAULT_CUTOFF as f64],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SigmoidInstance {
    pub id: String,
    pub shifts: Vec<f64>,
    pub slopes: Vec<f64>,
}

impl SigmoidInstance {
    pub fn dimensions(&self) -> usize {
        self.shifts.len()
    }
}

impl InstanceRecord for SigmoidInstance {
    fn id(&self) -> &str {
        &self.id
    }

    fn csv_header(instances: &[Self]) -> Result<Vec<String>> {
        let d = instances[0].dimensions();
        if instances.iter().any(|i| i.dimensions() != d || i.slopes.len() != d) {
            return Err(Error::config("instances", "sigmoid instances must share one dimension count"));
        }
        let mut h = vec!["instance_id".to_string()];
        h.extend((1..=d).map(|i| format!("shift_{i}")));
        h.extend((1..=d).map(|i| format!("slope_{i}")));
        Ok(h)
    }

    fn to_csv_row(&self) -> Vec<String> {
        let mut row = vec![self.id.clone()];
        row.extend(self.shifts.iter().map(f64::to_string));
        row.extend(self.slopes.iter().map(f64::to_string));
        row
    }

    fn from_csv_row(header: &[String], row: &[String]) -> std::result::Result<Self, String> {
        if header.len() < 3 || (header.len() - 1) % 2 != 0 {
            return Err(format!("sigmoid files need 1 + 2D columns, header has {}", header.len()));
        }
        let d = (header.len() - 1) / 2;
        let shifts = (0..d)
            .map(|i| parse_field(row, 1 + i, &header[1 + i]))
            .collect::<std::result::Result<Vec<f64>, _>>()?;
        let slopes = (0..d)
            .map(|i| parse_field(row, 1 + d + i, &header[1 + d + i]))
            .collect::<std::result::Result<Vec<f64>, _>>()?;
        Ok(SigmoidInstance {
            id: row[0].clone(),
            shifts,
            slopes,
        })
    }
}

pub fn sigmoid_value(t: f64, shift: f64, slope: f64) -> f64 {
    1.0 / (1.0 + (-slope * (t - shift)).exp())
}

/// Distance between the sigmoid value and level `a`, in level units.
fn level_distance(value: f64, a: usize, n: usize) -> f64 {
    (value * (n - 1) as f64 - a as f64).abs()
}

pub fn sigmoid_reward(t: f64, actions: &[usize], instance: &SigmoidInstance, cardinalities: &[usize]) -> Result<f64> {
    if actions.len() != cardinalities.len() || actions.len() != instance.dimensions() {
        return Err(Error::Domain(format!(
            "expected {} action components, got {}",
            instance.dimensions(),
            actions.len()
        )));
    }
    let mut reward = 1.0;
    for d in 0..actions.len() {
        let (a, n) = (actions[d], cardinalities[d]);
        if a >= n {
            return Err(Error::Domain(format!("action component {d} = {a} outside 0..{}", n - 1)));
        }
        let value = sigmoid_value(t, instance.shifts[d], instance.slopes[d]);
        reward *= 1.0 - level_distance(value, a, n) / (n - 1) as f64;
    }
    Ok(reward)
}

/// Per-dimension closest level; ties go to the smaller index.
pub fn optimal_sigmoid_action(t: f64, instance: &SigmoidInstance, cardinalities: &[usize]) -> Vec<usize> {
    cardinalities
        .iter()
        .enumerate()
        .map(|(d, &n)| {
            let value = sigmoid_value(t, instance.shifts[d], instance.slopes[d]);
            let mut best = 0;
            for a in 1..n {
                if level_distance(value, a, n) < level_distance(value, best, n) {
                    best = a;
                }
            }
            best
        })
        .collect()
}

pub struct SigmoidBenchmark {
    params: SigmoidParams,
    cutoff: usize,
    instance: Option<SigmoidInstance>,
    step: usize,
    last_action: Vec<f64>,
}

impl SigmoidBenchmark {
    fn observe(&self) -> Observation {
        let inst = self.instance.as_ref().expect("episode started");
        let mut obs = Vec::with_capacity(1 + 3 * inst.dimensions());
        obs.push((self.cutoff - self.step) as f64);
        obs.extend(&inst.shifts);
        obs.extend(&inst.slopes);
        obs.extend(&self.last_action);
        obs
    }
}

impl Benchmark for SigmoidBenchmark {
    const ID: BenchmarkId = BenchmarkId::Sigmoid;
    const DEFAULT_CUTOFF: usize = 10;
    const REWARD_QUALITY: u8 = 2;

    type Instance = SigmoidInstance;
    type Params = SigmoidParams;

    fn validate_params(params: &SigmoidParams, _cutoff: usize) -> Result<()> {
        if params.action_counts.is_empty() || params.action_counts.iter().any(|&n| n < 2) {
            return Err(Error::config(
                "benchmark_params.action_counts",
                "need at least one dimension, each with at least 2 levels",
            ));
        }
        let [lo, hi] = params.slope_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::config("benchmark_params.slope_range", "need 0 < low <= high"));
        }
        let [lo, hi] = params.shift_range;
        if !(lo <= hi && lo.is_finite() && hi.is_finite()) {
            return Err(Error::config("benchmark_params.shift_range", "need finite low <= high"));
        }
        Ok(())
    }

    fn spaces(params: &SigmoidParams, cutoff: usize) -> (SpaceSpec, SpaceSpec) {
        let d = params.action_counts.len();
        let mut bounds = vec![Interval::new(0.0, cutoff as f64)];
        bounds.extend(std::iter::repeat_n(Interval::new(-UNBOUNDED, UNBOUNDED), 2 * d));
        bounds.extend(
            params
                .action_counts
                .iter()
                .map(|&n| Interval::new(-1.0, (n - 1) as f64)),
        );
        (
            SpaceSpec::multi_discrete(params.action_counts.clone()),
            SpaceSpec::continuous(bounds),
        )
    }

    fn generate_instances(params: &SigmoidParams, _cutoff: usize, split: Split, count: usize, rng: &mut Rng) -> Vec<SigmoidInstance> {
        let d = params.action_counts.len();
        let [shift_lo, shift_hi] = params.shift_range;
        let [slope_lo, slope_hi] = params.slope_range;
        (0..count)
            .map(|i| {
                let shifts = (0..d).map(|_| shift_lo + rng.random::<f64>() * (shift_hi - shift_lo)).collect();
                let slopes = (0..d)
                    .map(|_| {
                        let magnitude = slope_lo + rng.random::<f64>() * (slope_hi - slope_lo);
                        if rng.random::<bool>() { magnitude } else { -magnitude }
                    })
                    .collect();
                SigmoidInstance {
                    id: format!("{}-{i:03}", split.as_str()),
                    shifts,
                    slopes,
                }
            })
            .collect()
    }

    fn build(params: SigmoidParams, cutoff: usize) -> Result<Self> {
        let d = params.action_counts.len();
        Ok(SigmoidBenchmark {
            params,
            cutoff,
            instance: None,
            step: 0,
            last_action: vec![-1.0; d],
        })
    }

    fn check_instance(&self, instance: &SigmoidInstance) -> Result<()> {
        let d = self.params.action_counts.len();
        if instance.shifts.len() != d || instance.slopes.len() != d {
            return Err(Error::config(
                "instances",
                format!("instance has {} dimensions, benchmark has {d}", instance.shifts.len()),
            ));
        }
        if instance.shifts.iter().chain(&instance.slopes).any(|x| !x.is_finite()) {
            return Err(Error::config("instances", "shift and slope must be finite"));
        }
        Ok(())
    }

    fn begin(&mut self, instance: &SigmoidInstance, _ctx: EpisodeContext) -> Observation {
        self.instance = Some(instance.clone());
        self.step = 0;
        self.last_action.iter_mut().for_each(|a| *a = -1.0);
        self.observe()
    }

    fn advance(&mut self, action: &Action, step: usize) -> Result<Transition> {
        let Action::MultiDiscrete(levels) = action else {
            return Err(Error::Domain(format!("sigmoid expects a multi-discrete action, got {action:?}")));
        };
        let inst = self.instance.as_ref().expect("episode started");
        let reward = sigmoid_reward(step as f64, levels, inst, &self.params.action_counts)?;
        self.step = step + 1;
        self.last_action = levels.iter().map(|&a| a as f64).collect();
        Ok(Transition {
            observation: self.observe(),
            reward,
            terminated: false,
            info: BTreeMap::new(),
        })
    }

    fn reference_action(&self, kind: ReferenceKind) -> Option<Action> {
        match kind {
            ReferenceKind::Optimal => {
                let inst = self.instance.as_ref()?;
                Some(Action::MultiDiscrete(optimal_sigmoid_action(
                    self.step as f64,
                    inst,
                    &self.params.action_counts,
                )))
            }
            ReferenceKind::Csa => None,
        }
    }
}
