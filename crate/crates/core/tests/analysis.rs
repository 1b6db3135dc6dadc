mod common;

use common::ConstantEnv;
use dac_core::analysis::{
    competition_ranks, dynamicity_score_with, heterogeneity_from_means, heterogeneity_score_with, noise_score, noise_score_with,
    profile_with, radar_rows, space_categories, AnalysisSettings, DifficultyProfile,
};
use dac_core::env::{Observation, ReferenceKind, StepResult};
use dac_core::envs::default_config;
use dac_core::space::Interval;
use dac_core::{Action, BenchmarkConfig, BenchmarkId, Environment, Error, Result, SpaceSpec};

fn small() -> AnalysisSettings {
    AnalysisSettings {
        seeds: vec![0, 1],
        runs: 3,
        static_count: 5,
        instance_limit: Some(4),
    }
}

/// Pays 1 whenever the action differs from the previous one.
struct SwitchEnv {
    base: ConstantEnv,
    last: Option<Action>,
}

impl Environment for SwitchEnv {
    fn config(&self) -> &BenchmarkConfig {
        self.base.config()
    }
    fn action_space(&self) -> &SpaceSpec {
        self.base.action_space()
    }
    fn observation_space(&self) -> &SpaceSpec {
        self.base.observation_space()
    }
    fn instance_count(&self) -> usize {
        self.base.instance_count()
    }
    fn instance_id(&self, index: usize) -> Option<String> {
        self.base.instance_id(index)
    }
    fn current_instance(&self) -> Option<usize> {
        self.base.current_instance()
    }
    fn seed(&mut self, seed: u64) {
        self.base.seed(seed)
    }
    fn reset(&mut self) -> Observation {
        self.last = None;
        self.base.reset()
    }
    fn reset_to(&mut self, index: usize) -> Result<Observation> {
        self.last = None;
        self.base.reset_to(index)
    }
    fn step(&mut self, action: &Action) -> Result<StepResult> {
        let mut r = self.base.step(action)?;
        r.reward = if self.last.as_ref().is_some_and(|l| l != action) { 1.0 } else { 0.0 };
        self.last = Some(action.clone());
        Ok(r)
    }
    fn step_count(&self) -> usize {
        self.base.step_count()
    }
    fn reference_action(&self, kind: ReferenceKind) -> Result<Action> {
        self.base.reference_action(kind)
    }
}

fn constant_factory(_: &BenchmarkConfig) -> Result<Box<dyn Environment>> {
    Ok(Box::new(ConstantEnv::new(-2.0, 3)))
}

fn switch_factory(_: &BenchmarkConfig) -> Result<Box<dyn Environment>> {
    Ok(Box::new(SwitchEnv {
        base: ConstantEnv::new(0.0, 3),
        last: None,
    }))
}

#[test]
fn categories_follow_space_sizes() {
    assert_eq!(space_categories(&default_config(BenchmarkId::Luby)), (1, 1));
    assert_eq!(space_categories(&default_config(BenchmarkId::Cmaes)).1, 3);
    assert_eq!(space_categories(&default_config(BenchmarkId::Sgd)), (1, 3));
    let mut cfg = default_config(BenchmarkId::Luby);
    for (n, cat) in [(99, 1), (100, 2), (1000, 2), (1001, 3)] {
        cfg.action_space = SpaceSpec::discrete(n);
        assert_eq!(space_categories(&cfg).1, cat, "{n} actions");
    }
    cfg.action_space = SpaceSpec::multi_discrete(vec![10, 10, 10]);
    assert_eq!(space_categories(&cfg).1, 2);
    cfg.action_space = SpaceSpec::continuous(vec![Interval::new(0.0, 1.0)]);
    assert_eq!(space_categories(&cfg).1, 3);
    for (d, cat) in [(9, 1), (10, 2), (100, 2), (101, 3)] {
        cfg.observation_space = SpaceSpec::continuous(vec![Interval::unbounded(); d]);
        assert_eq!(space_categories(&cfg).0, cat, "{d} features");
    }
}

#[test]
fn deterministic_benchmarks_have_no_noise() {
    for id in [BenchmarkId::Sigmoid, BenchmarkId::Luby] {
        let s = noise_score(&default_config(id), &small()).unwrap();
        assert_eq!(s.value, 0.0, "{id}");
        assert!(!s.degenerate);
    }
}

#[test]
fn sgd_episodes_are_instance_determined() {
    let settings = AnalysisSettings {
        seeds: vec![0],
        runs: 2,
        static_count: 5,
        instance_limit: Some(1),
    };
    let s = noise_score(&default_config(BenchmarkId::Sgd), &settings).unwrap();
    assert_eq!((s.value, s.degenerate), (0.0, false));
}

#[test]
fn drifting_luby_is_noisy() {
    let cfg = default_config(BenchmarkId::Luby)
        .with_param("noise_scale", serde_json::json!(1.5))
        .unwrap();
    assert!(noise_score(&cfg, &small()).unwrap().value > 0.0);
}

#[test]
fn constant_rewards_score_zero_everywhere() {
    let cfg = default_config(BenchmarkId::Luby);
    assert_eq!(dynamicity_score_with(&cfg, &small(), &constant_factory).unwrap(), 0.0);
    assert_eq!(heterogeneity_score_with(&cfg, &small(), &constant_factory).unwrap().value, 0.0);
    assert_eq!(noise_score_with(&cfg, &small(), &constant_factory).unwrap().value, 0.0);
}

#[test]
fn switching_rewards_favor_short_repeats() {
    let cfg = default_config(BenchmarkId::Luby);
    let d = dynamicity_score_with(&cfg, &small(), &switch_factory).unwrap();
    assert_eq!(d, 1.0);
}

#[test]
fn heterogeneity_example() {
    let s = heterogeneity_from_means(&[vec![1.0, 3.0]]);
    assert_eq!((s.value, s.degenerate), (0.5, false));
    let s = heterogeneity_from_means(&[vec![1.0, 3.0], vec![2.0, 2.0]]);
    assert_eq!(s.value, 0.25);
    assert!(heterogeneity_from_means(&[vec![-1.0, 1.0]]).degenerate);
}

#[test]
fn long_episodes_rejected_for_dynamicity() {
    let cfg = default_config(BenchmarkId::Sigmoid).with_cutoff(1001).unwrap();
    assert!(matches!(dynamicity_score_with(&cfg, &small(), &constant_factory), Err(Error::Config { .. })));
    let mut bad = small();
    bad.runs = 0;
    assert!(noise_score(&default_config(BenchmarkId::Luby), &bad).is_err());
}

#[test]
fn radar_ranks_ascend_with_ties() {
    assert_eq!(competition_ranks(&[0.3, 0.1, 0.3, 0.0]), vec![3, 2, 3, 1]);
    let base = profile_with(&default_config(BenchmarkId::Luby), &small(), &constant_factory).unwrap();
    assert_eq!(base.reward_quality, default_config(BenchmarkId::Luby).reward_quality);
    let mut other = base.clone();
    other.benchmark = "other".into();
    other.dynamicity = 0.5;
    other.state_space_category = 3;
    let rows = radar_rows(&[base, other]);
    assert_eq!(rows.len(), 2 * DifficultyProfile::DIMENSIONS.len());
    let rank = |b: &str, d: &str| rows.iter().find(|r| r.benchmark == b && r.dimension == d).unwrap().rank;
    assert_eq!(rank("luby", "dynamicity"), 1);
    assert_eq!(rank("other", "dynamicity"), 2);
    assert_eq!(rank("other", "state_space"), 2);
    assert_eq!(rank("luby", "noise"), 1);
    assert_eq!(rank("other", "noise"), 1);
}
