//! Step-size control for CMA-ES.
//!
//! One environment step runs one generation with the step size given by the
//! action. The reward is the negated best fitness of that generation; the raw
//! value is reported in `info["best_fitness"]`.
//!
//! Observation layout: `[sigma, ||p_sigma||, lambda, H best fitness values,
//! H fitness deltas, H step sizes]`, histories most recent first and zero
//! padded, `H = 40` by default (123 numbers).
//!
//! Instance CSV columns: `instance_id, function_class, dimension,
//! optimum_shift_1..optimum_shift_n, rotation_seed (empty = none), f_offset`.

pub mod functions;
pub mod strategy;

use std::collections::BTreeMap;

use nalgebra::DVector;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::config::BenchmarkId;
use crate::env::{Benchmark, EpisodeContext, Observation, ReferenceKind, Transition};
use crate::error::{Error, Result};
use crate::instance::Split;
use crate::seed::Rng;
use crate::space::{Action, Interval, SpaceSpec, UNBOUNDED};

pub use functions::{evaluate_function, FunctionClass, FunctionInstance, Objective};
pub use strategy::{cma_generation, csa_step_size, expected_norm, population_size, CmaParameters, CmaState, MAX_SIGMA};

/// Shifts are drawn from, and must lie in, `[-SHIFT_BOUND, SHIFT_BOUND]`.
pub const SHIFT_BOUND: f64 = 4.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CmaesParams {
    /// Problem dimension of generated instances.
    pub dimension: usize,
    pub sigma0: f64,
    /// Constant initial mean; `null` draws it uniformly from [-4, 4]^n per instance.
    pub initial_mean: Option<f64>,
    pub history_length: usize,
    /// An episode ends once `best - f_offset` falls to this value.
    pub target_precision: f64,
    /// Classes cycled through by the generator.
    pub function_classes: Vec<FunctionClass>,
    /// Whether generated instances get a random rotation.
    pub rotate: bool,
}

impl Default for CmaesParams {
    fn default() -> Self {
        CmaesParams {
            dimension: 10,
            sigma0: 0.5,
            initial_mean: None,
            history_length: 40,
            target_precision: 1e-8,
            function_classes: FunctionClass::ALL.to_vec(),
            rotate: false,
        }
    }
}

struct Episode {
    objective: Objective,
    state: CmaState,
    strategy: CmaParameters,
    rng: Rng,
}

pub struct CmaesBenchmark {
    params: CmaesParams,
    episode: Option<Episode>,
}

impl CmaesBenchmark {
    fn observe(&self) -> Observation {
        let ep = self.episode.as_ref().expect("episode started");
        let s = &ep.state;
        let mut obs = Vec::with_capacity(3 + 3 * self.params.history_length);
        obs.push(s.sigma);
        obs.push(s.path_sigma.norm());
        obs.push(ep.strategy.lambda as f64);
        obs.extend(s.best_fitness_history.slots());
        obs.extend(s.fitness_delta_history.slots());
        obs.extend(s.sigma_history.slots());
        obs
    }

    pub fn state(&self) -> Option<&CmaState> {
        self.episode.as_ref().map(|e| &e.state)
    }

    pub fn strategy(&self) -> Option<&CmaParameters> {
        self.episode.as_ref().map(|e| &e.strategy)
    }
}

impl Benchmark for CmaesBenchmark {
    const ID: BenchmarkId = BenchmarkId::Cmaes;
    const DEFAULT_CUTOFF: usize = 1000;
    const REWARD_QUALITY: u8 = 2;

    type Instance = FunctionInstance;
    type Params = CmaesParams;

    fn validate_params(params: &CmaesParams, _cutoff: usize) -> Result<()> {
        if params.dimension < 2 {
            return Err(Error::config("benchmark_params.dimension", "must be at least 2"));
        }
        if !(params.sigma0 > 0.0 && params.sigma0 <= MAX_SIGMA) {
            return Err(Error::config("benchmark_params.sigma0", "must lie in (0, 10]"));
        }
        if let Some(m) = params.initial_mean {
            if !m.is_finite() {
                return Err(Error::config("benchmark_params.initial_mean", "must be finite"));
            }
        }
        if params.history_length == 0 {
            return Err(Error::config("benchmark_params.history_length", "must be positive"));
        }
        if !(params.target_precision >= 0.0) {
            return Err(Error::config("benchmark_params.target_precision", "must be >= 0"));
        }
        if params.function_classes.is_empty() {
            return Err(Error::config("benchmark_params.function_classes", "must not be empty"));
        }
        Ok(())
    }

    fn spaces(params: &CmaesParams, _cutoff: usize) -> (SpaceSpec, SpaceSpec) {
        let h = params.history_length;
        let mut bounds = vec![
            Interval::new(0.0, MAX_SIGMA),
            Interval::non_negative(),
            Interval::non_negative(),
        ];
        bounds.extend(std::iter::repeat_n(Interval::new(-UNBOUNDED, UNBOUNDED), 2 * h));
        bounds.extend(std::iter::repeat_n(Interval::new(0.0, MAX_SIGMA), h));
        (
            SpaceSpec::continuous(vec![Interval::new(0.0, MAX_SIGMA)]).with_lower_open(),
            SpaceSpec::continuous(bounds),
        )
    }

    fn generate_instances(params: &CmaesParams, _cutoff: usize, split: Split, count: usize, rng: &mut Rng) -> Vec<FunctionInstance> {
        let classes = &params.function_classes;
        (0..count)
            .map(|i| {
                let class = classes[i % classes.len()];
                let shift = (0..params.dimension)
                    .map(|_| rng.random_range(-SHIFT_BOUND..=SHIFT_BOUND))
                    .collect();
                let mut inst = FunctionInstance::new(format!("{}-{i:03}-{class}", split.as_str()), class, shift);
                if params.rotate {
                    inst.rotation_seed = Some(rng.random());
                }
                inst
            })
            .collect()
    }

    fn build(params: CmaesParams, _cutoff: usize) -> Result<Self> {
        Ok(CmaesBenchmark { params, episode: None })
    }

    fn check_instance(&self, inst: &FunctionInstance) -> Result<()> {
        if inst.dimension < 2 || inst.optimum_shift.len() != inst.dimension {
            return Err(Error::config(
                "instances",
                format!("dimension {} with {} shift components", inst.dimension, inst.optimum_shift.len()),
            ));
        }
        if inst.optimum_shift.iter().any(|s| !(s.abs() <= SHIFT_BOUND)) {
            return Err(Error::config("instances", "optimum_shift components must lie in [-4, 4]"));
        }
        if !inst.f_offset.is_finite() {
            return Err(Error::config("instances", "f_offset must be finite"));
        }
        Ok(())
    }

    fn begin(&mut self, instance: &FunctionInstance, ctx: EpisodeContext) -> Observation {
        let n = instance.dimension;
        let mut init_rng = ctx.init_rng;
        let mean = match self.params.initial_mean {
            Some(m) => DVector::from_element(n, m),
            None => DVector::from_fn(n, |_, _| init_rng.random_range(-SHIFT_BOUND..=SHIFT_BOUND)),
        };
        self.episode = Some(Episode {
            objective: Objective::new(instance),
            state: CmaState::new(mean, self.params.sigma0, self.params.history_length),
            strategy: CmaParameters::new(n),
            rng: ctx.rng,
        });
        self.observe()
    }

    fn advance(&mut self, action: &Action, _step: usize) -> Result<Transition> {
        let sigma = action
            .as_scalar()
            .ok_or_else(|| Error::Domain(format!("cmaes expects a scalar step size, got {action:?}")))?;
        let target = self.params.target_precision;
        let ep = self.episode.as_mut().expect("episode started");
        let best = cma_generation(&mut ep.state, &ep.strategy, &ep.objective, sigma, &mut ep.rng)?;
        let terminated = ep.state.best_so_far - ep.objective.f_offset() <= target;

        let mut info = BTreeMap::new();
        info.insert("best_fitness".to_string(), best);
        info.insert("best_so_far".to_string(), ep.state.best_so_far);
        info.insert("sigma".to_string(), sigma);
        info.insert("generation".to_string(), ep.state.generation as f64);
        Ok(Transition {
            observation: self.observe(),
            reward: -best,
            terminated,
            info,
        })
    }

    fn reference_action(&self, kind: ReferenceKind) -> Option<Action> {
        match kind {
            ReferenceKind::Csa => {
                let ep = self.episode.as_ref()?;
                Some(Action::scalar(csa_step_size(&ep.state, &ep.strategy)))
            }
            ReferenceKind::Optimal => None,
        }
    }
}
