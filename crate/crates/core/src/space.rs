//! Action and observation space descriptions.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::Rng;

/// Stand-in for an unbounded side of a continuous interval. Keeps configs JSON-representable.
pub const UNBOUNDED: f64 = f64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpaceKind {
    Discrete,
    Continuous,
    MultiDiscrete,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub low: f64,
    pub high: f64,
}

impl Interval {
    pub fn new(low: f64, high: f64) -> Self {
        Interval { low, high }
    }

    pub fn unbounded() -> Self {
        Interval::new(-UNBOUNDED, UNBOUNDED)
    }

    pub fn non_negative() -> Self {
        Interval::new(0.0, UNBOUNDED)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceSpec {
    pub kind: SpaceKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub cardinalities: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub bounds: Vec<Interval>,
    pub dimension: usize,
    /// Continuous spaces only: excludes the lower bound itself, e.g. a step size in (0, 10].
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub lower_open: bool,
}

/// One control decision. Serialized untagged: `3`, `[3, 2]` or `[0.5]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Action {
    Discrete(usize),
    MultiDiscrete(Vec<usize>),
    Continuous(Vec<f64>),
}

impl Action {
    /// Convenience for one-dimensional continuous spaces.
    pub fn scalar(value: f64) -> Self {
        Action::Continuous(vec![value])
    }

    pub fn as_values(&self) -> Vec<f64> {
        match self {
            Action::Discrete(a) => vec![*a as f64],
            Action::MultiDiscrete(v) => v.iter().map(|&a| a as f64).collect(),
            Action::Continuous(v) => v.clone(),
        }
    }

    pub fn as_scalar(&self) -> Option<f64> {
        match self {
            Action::Discrete(a) => Some(*a as f64),
            Action::Continuous(v) if v.len() == 1 => Some(v[0]),
            _ => None,
        }
    }
}

impl std::fmt::Display for Action {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let join = |vals: Vec<String>| vals.join(",");
        match self {
            Action::Discrete(a) => write!(f, "{a}"),
            Action::MultiDiscrete(v) => write!(f, "{}", join(v.iter().map(|a| a.to_string()).collect())),
            Action::Continuous(v) => write!(f, "{}", join(v.iter().map(|a| a.to_string()).collect())),
        }
    }
}

impl SpaceSpec {
    pub fn discrete(n: usize) -> Self {
        SpaceSpec {
            kind: SpaceKind::Discrete,
            cardinalities: vec![n],
            bounds: Vec::new(),
            dimension: 1,
            lower_open: false,
        }
    }

    pub fn multi_discrete(cardinalities: Vec<usize>) -> Self {
        SpaceSpec {
            kind: SpaceKind::MultiDiscrete,
            dimension: cardinalities.len(),
            cardinalities,
            bounds: Vec::new(),
            lower_open: false,
        }
    }

    pub fn continuous(bounds: Vec<Interval>) -> Self {
        SpaceSpec {
            kind: SpaceKind::Continuous,
            dimension: bounds.len(),
            cardinalities: Vec::new(),
            bounds,
            lower_open: false,
        }
    }

    pub fn with_lower_open(mut self) -> Self {
        self.lower_open = true;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::config("space", msg));
        if self.dimension == 0 {
            return bad("dimension must be positive".into());
        }
        match self.kind {
            SpaceKind::Discrete => {
                if self.cardinalities.len() != 1 || self.dimension != 1 {
                    return bad("discrete space needs exactly one cardinality and dimension 1".into());
                }
                if self.cardinalities[0] == 0 {
                    return bad("discrete cardinality must be at least 1".into());
                }
            }
            SpaceKind::MultiDiscrete => {
                if self.cardinalities.len() != self.dimension {
                    return bad(format!(
                        "multi-discrete space has {} cardinalities for dimension {}",
                        self.cardinalities.len(),
                        self.dimension
                    ));
                }
                if self.cardinalities.iter().any(|&n| n == 0) {
                    return bad("multi-discrete cardinalities must be at least 1".into());
                }
            }
            SpaceKind::Continuous => {
                if self.bounds.len() != self.dimension {
                    return bad(format!(
                        "continuous space has {} bounds for dimension {}",
                        self.bounds.len(),
                        self.dimension
                    ));
                }
                for (i, b) in self.bounds.iter().enumerate() {
                    if !(b.low < b.high) {
                        return bad(format!("bound {i} requires low < high, got [{}, {}]", b.low, b.high));
                    }
                }
            }
        }
        if self.lower_open && self.kind != SpaceKind::Continuous {
            return bad("lower_open only applies to continuous spaces".into());
        }
        Ok(())
    }

    /// Number of distinct actions, or `None` for continuous spaces.
    pub fn action_count(&self) -> Option<u128> {
        match self.kind {
            SpaceKind::Continuous => None,
            _ => Some(self.cardinalities.iter().map(|&n| n as u128).product()),
        }
    }

    pub fn is_continuous(&self) -> bool {
        self.kind == SpaceKind::Continuous
    }

    /// Errors (never clamps) when `action` is not a member of this space.
    pub fn check_action(&self, action: &Action) -> Result<()> {
        match (self.kind, action) {
            (SpaceKind::Discrete, Action::Discrete(a)) => {
                if *a >= self.cardinalities[0] {
                    return Err(Error::Domain(format!(
                        "action {a} outside discrete space of {} actions",
                        self.cardinalities[0]
                    )));
                }
            }
            (SpaceKind::MultiDiscrete, Action::MultiDiscrete(v)) => {
                if v.len() != self.dimension {
                    return Err(Error::Domain(format!(
                        "action has {} components, space has {}",
                        v.len(),
                        self.dimension
                    )));
                }
                for (d, (&a, &n)) in v.iter().zip(&self.cardinalities).enumerate() {
                    if a >= n {
                        return Err(Error::Domain(format!(
                            "action component {d} = {a} outside 0..{}",
                            n - 1
                        )));
                    }
                }
            }
            (SpaceKind::Continuous, Action::Continuous(v)) => {
                if v.len() != self.dimension {
                    return Err(Error::Domain(format!(
                        "action has {} components, space has {}",
                        v.len(),
                        self.dimension
                    )));
                }
                for (d, (&x, b)) in v.iter().zip(&self.bounds).enumerate() {
                    let above_low = if self.lower_open { x > b.low } else { x >= b.low };
                    if !x.is_finite() || !above_low || x > b.high {
                        let open = if self.lower_open { "(" } else { "[" };
                        return Err(Error::Domain(format!(
                            "action component {d} = {x} outside {open}{}, {}]",
                            b.low, b.high
                        )));
                    }
                }
            }
            (kind, other) => {
                return Err(Error::Domain(format!(
                    "action {other:?} does not match a {kind:?} space"
                )))
            }
        }
        Ok(())
    }

    /// True when every component of `obs` lies inside this (continuous) space.
    pub fn contains_observation(&self, obs: &[f64]) -> bool {
        obs.len() == self.dimension
            && obs
                .iter()
                .zip(&self.bounds)
                .all(|(&x, b)| x >= b.low && x <= b.high)
    }

    /// Uniform draw from the space.
    pub fn sample(&self, rng: &mut Rng) -> Action {
        match self.kind {
            SpaceKind::Discrete => Action::Discrete(rng.random_range(0..self.cardinalities[0])),
            SpaceKind::MultiDiscrete => Action::MultiDiscrete(
                self.cardinalities
                    .iter()
                    .map(|&n| rng.random_range(0..n))
                    .collect(),
            ),
            SpaceKind::Continuous => Action::Continuous(
                self.bounds
                    .iter()
                    .map(|b| {
                        let u: f64 = rng.random();
                        if self.lower_open {
                            // u in [0, 1) maps onto (low, high]
                            b.high - u * (b.high - b.low)
                        } else {
                            b.low + u * (b.high - b.low)
                        }
                    })
                    .collect(),
            ),
        }
    }

    /// Parses the textual form produced by `Action`'s `Display` impl against this space.
    pub fn parse_action(&self, text: &str) -> Result<Action> {
        let parts: Vec<&str> = text.split(',').map(str::trim).collect();
        let bad = |e: String| Error::Usage(format!("cannot parse action `{text}`: {e}"));
        let action = match self.kind {
            SpaceKind::Discrete => {
                if parts.len() != 1 {
                    return Err(bad("expected a single index".into()));
                }
                Action::Discrete(parts[0].parse().map_err(|e| bad(format!("{e}")))?)
            }
            SpaceKind::MultiDiscrete => Action::MultiDiscrete(
                parts
                    .iter()
                    .map(|p| p.parse::<usize>().map_err(|e| bad(format!("{e}"))))
                    .collect::<Result<_>>()?,
            ),
            SpaceKind::Continuous => Action::Continuous(
                parts
                    .iter()
                    .map(|p| p.parse::<f64>().map_err(|e| bad(format!("{e}"))))
                    .collect::<Result<_>>()?,
            ),
        };
        self.check_action(&action)
            .map_err(|e| Error::Usage(format!("action `{text}` is not in the action space: {e}")))?;
        Ok(action)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from_seed;

    #[test]
    fn discrete_bounds_are_enforced() {
        let s = SpaceSpec::discrete(6);
        assert!(s.check_action(&Action::Discrete(5)).is_ok());
        assert!(matches!(s.check_action(&Action::Discrete(6)), Err(Error::Domain(_))));
        assert!(s.check_action(&Action::scalar(1.0)).is_err());
    }

    #[test]
    fn open_lower_bound() {
        let s = SpaceSpec::continuous(vec![Interval::new(0.0, 10.0)]).with_lower_open();
        assert!(s.check_action(&Action::scalar(0.0)).is_err());
        assert!(s.check_action(&Action::scalar(10.0)).is_ok());
        assert!(s.check_action(&Action::scalar(10.0001)).is_err());
        assert!(s.check_action(&Action::scalar(f64::NAN)).is_err());
        let mut rng = rng_from_seed(1);
        for _ in 0..1000 {
            assert!(s.check_action(&s.sample(&mut rng)).is_ok());
        }
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(SpaceSpec::discrete(0).validate().is_err());
        assert!(SpaceSpec::continuous(vec![Interval::new(1.0, 1.0)]).validate().is_err());
        let mut md = SpaceSpec::multi_discrete(vec![10, 5]);
        md.dimension = 3;
        assert!(md.validate().is_err());
        assert!(SpaceSpec::multi_discrete(vec![10, 5]).validate().is_ok());
    }

    #[test]
    fn action_json_shapes() {
        let cases = [
            (Action::Discrete(3), "3"),
            (Action::MultiDiscrete(vec![3, 2]), "[3,2]"),
            (Action::Continuous(vec![3.0]), "[3.0]"),
        ];
        for (a, json) in cases {
            assert_eq!(serde_json::to_string(&a).unwrap(), json);
            assert_eq!(serde_json::from_str::<Action>(json).unwrap(), a);
        }
    }

    #[test]
    fn parse_action_validates() {
        let s = SpaceSpec::multi_discrete(vec![10, 5]);
        assert_eq!(s.parse_action("3,4").unwrap(), Action::MultiDiscrete(vec![3, 4]));
        assert!(s.parse_action("3,5").is_err());
        assert!(SpaceSpec::discrete(6).parse_action("99").is_err());
    }
}
