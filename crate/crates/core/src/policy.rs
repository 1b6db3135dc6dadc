//! Baseline policies: static, uniform random, repeated random, and the
//! environment-provided optimal and CSA references.
//!
//! Text form: `static:<action>`, `random:<seed>`, `repeat:<len>:<seed>`,
//! `optimal`, `csa`. Multi-component static actions are comma separated.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::config::BenchmarkId;
use crate::env::{Environment, ReferenceKind};
use crate::error::{Error, Result};
use crate::seed::{rng_for, Rng, STREAM_POLICY};
use crate::space::{Action, SpaceKind, SpaceSpec};

pub const REPEAT_LENGTHS: [usize; 4] = [1, 10, 100, 1000];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicySpec {
    Static { action: Action },
    Random { seed: u64 },
    RepeatRandom { seed: u64, repeat_length: usize },
    Optimal,
    Csa,
}

impl PolicySpec {
    /// The text form, also used to name trace files and summary rows.
    pub fn id(&self) -> String {
        self.to_string()
    }

    pub fn applicable_benchmarks(&self) -> Vec<BenchmarkId> {
        match self {
            PolicySpec::Optimal => vec![BenchmarkId::Sigmoid, BenchmarkId::Luby],
            PolicySpec::Csa => vec![BenchmarkId::Cmaes],
            _ => BenchmarkId::ALL.to_vec(),
        }
    }

    /// Checks the policy against a benchmark and its action space.
    pub fn validate(&self, benchmark: BenchmarkId, action_space: &SpaceSpec) -> Result<()> {
        if !self.applicable_benchmarks().contains(&benchmark) {
            return Err(Error::config("policy", format!("policy `{self}` does not apply to benchmark {benchmark}")));
        }
        match self {
            PolicySpec::Static { action } => action_space
                .check_action(action)
                .map_err(|e| Error::config("policy", format!("static action {action}: {e}"))),
            PolicySpec::RepeatRandom { repeat_length, .. } if !REPEAT_LENGTHS.contains(repeat_length) => Err(Error::config(
                "policy",
                format!("repeat length {repeat_length} not in {REPEAT_LENGTHS:?}"),
            )),
            _ => Ok(()),
        }
    }

    /// Parses the text form; static actions are interpreted against `action_space`.
    pub fn parse(text: &str, action_space: &SpaceSpec) -> Result<Self> {
        text.parse::<PolicySpec>()?.bind(action_space)
    }

    /// Reinterprets a static action in the representation of `action_space`,
    /// so `[2]` read from JSON becomes `2.0` for a continuous space.
    pub fn bind(self, action_space: &SpaceSpec) -> Result<Self> {
        match self {
            PolicySpec::Static { action } => Ok(PolicySpec::Static {
                action: action_space.parse_action(&action.to_string())?,
            }),
            other => Ok(other),
        }
    }

    pub fn build(&self, action_space: &SpaceSpec) -> Policy {
        Policy {
            spec: self.clone(),
            space: action_space.clone(),
            rng: None,
            held: None,
        }
    }
}

impl fmt::Display for PolicySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicySpec::Static { action } => write!(f, "static:{action}"),
            PolicySpec::Random { seed } => write!(f, "random:{seed}"),
            PolicySpec::RepeatRandom { seed, repeat_length } => write!(f, "repeat:{repeat_length}:{seed}"),
            PolicySpec::Optimal => f.write_str("optimal"),
            PolicySpec::Csa => f.write_str("csa"),
        }
    }
}

/// Space-independent parse: static values become `Continuous` until
/// [`PolicySpec::parse`] reinterprets them against an action space.
impl FromStr for PolicySpec {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let usage = |why: &str| Error::Usage(format!("bad policy `{text}`: {why}"));
        let parts: Vec<&str> = text.trim().split(':').collect();
        let seed = |s: &str| s.parse::<u64>().map_err(|_| usage("seed must be an unsigned integer"));
        match parts.as_slice() {
            ["optimal"] => Ok(PolicySpec::Optimal),
            ["csa"] => Ok(PolicySpec::Csa),
            ["random", s] => Ok(PolicySpec::Random { seed: seed(s)? }),
            ["repeat", len, s] => {
                let repeat_length = len.parse::<usize>().map_err(|_| usage("repeat length must be an integer"))?;
                if !REPEAT_LENGTHS.contains(&repeat_length) {
                    return Err(usage("repeat length must be 1, 10, 100 or 1000"));
                }
                Ok(PolicySpec::RepeatRandom { seed: seed(s)?, repeat_length })
            }
            ["static", values] => {
                let v = values
                    .split(',')
                    .map(|x| x.trim().parse::<f64>())
                    .collect::<std::result::Result<Vec<f64>, _>>()
                    .map_err(|_| usage("static action must be numbers separated by commas"))?;
                Ok(PolicySpec::Static {
                    action: Action::Continuous(v),
                })
            }
            _ => Err(usage("expected static:<action>, random:<seed>, repeat:<len>:<seed>, optimal or csa")),
        }
    }
}

/// A policy bound to an action space, with its private random stream.
#[derive(Debug, Clone)]
pub struct Policy {
    spec: PolicySpec,
    space: SpaceSpec,
    rng: Option<Rng>,
    held: Option<Action>,
}

impl Policy {
    pub fn spec(&self) -> &PolicySpec {
        &self.spec
    }

    /// Restarts the random stream for the episode identified by `key`; equal
    /// keys replay identical action sequences.
    pub fn begin_episode(&mut self, key: u64) {
        self.held = None;
        self.rng = match self.spec {
            PolicySpec::Random { seed } | PolicySpec::RepeatRandom { seed, .. } => Some(rng_for(seed, STREAM_POLICY, key)),
            _ => None,
        };
    }

    fn sample(&mut self) -> Action {
        if self.rng.is_none() {
            self.begin_episode(0);
        }
        self.space.sample(self.rng.as_mut().expect("random stream"))
    }

    pub fn act(&mut self, _observation: &[f64], step: usize, env: &dyn Environment) -> Result<Action> {
        match &self.spec {
            PolicySpec::Static { action } => Ok(action.clone()),
            PolicySpec::Random { .. } => Ok(self.sample()),
            PolicySpec::RepeatRandom { repeat_length, .. } => {
                let len = *repeat_length;
                if step % len == 0 || self.held.is_none() {
                    let a = self.sample();
                    self.held = Some(a);
                }
                Ok(self.held.clone().expect("held action"))
            }
            PolicySpec::Optimal => env.reference_action(ReferenceKind::Optimal),
            PolicySpec::Csa => env.reference_action(ReferenceKind::Csa),
        }
    }
}

/// Static policies spread over an action space.
///
/// Discrete and multi-discrete spaces get one policy per action. A
/// one-dimensional continuous space gets `count` cell midpoints.
pub fn static_grid(space: &SpaceSpec, count: usize) -> Result<Vec<PolicySpec>> {
    let actions: Vec<Action> = match space.kind {
        SpaceKind::Discrete => (0..space.cardinalities[0]).map(Action::Discrete).collect(),
        SpaceKind::MultiDiscrete => {
            let mut all = vec![Vec::new()];
            for &n in &space.cardinalities {
                all = all
                    .into_iter()
                    .flat_map(|prefix: Vec<usize>| {
                        (0..n).map(move |a| {
                            let mut v = prefix.clone();
                            v.push(a);
                            v
                        })
                    })
                    .collect();
            }
            all.into_iter().map(Action::MultiDiscrete).collect()
        }
        SpaceKind::Continuous => {
            if count < 2 {
                return Err(Error::Domain("continuous static grids need at least 2 points".into()));
            }
            if space.bounds.len() != 1 {
                return Err(Error::Domain("static grids support one-dimensional continuous spaces only".into()));
            }
            let b = space.bounds[0];
            let width = (b.high - b.low) / count as f64;
            (0..count)
                .map(|i| Action::scalar(b.low + (i as f64 + 0.5) * width))
                .collect()
        }
    };
    Ok(actions.into_iter().map(|action| PolicySpec::Static { action }).collect())
}
