//! Difficulty profiles: space-size categories, reward quality, noise, policy
//! heterogeneity and dynamicity, plus ranked radar data across benchmarks.
//!
//! Every score is deterministic given the config and [`AnalysisSettings`].
//! Lower raw values and ranks mean easier.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::BenchmarkConfig;
use crate::envs::make_environment;
use crate::runner::EnvFactory;
use crate::error::{Error, Result};
use crate::logging::mean_std;
use crate::policy::{static_grid, PolicySpec, REPEAT_LENGTHS};
use crate::runner::run_episode;
use crate::seed::derive_seed;
use crate::space::SpaceSpec;

/// Below this, a mean counts as zero when normalizing a standard deviation.
pub const DEGENERATE_MEAN: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisSettings {
    pub seeds: Vec<u64>,
    /// Repeated evaluations per seed (noise) and runs per seed (dynamicity).
    pub runs: usize,
    /// Grid size for continuous action spaces.
    pub static_count: usize,
    /// Use only the first `n` instances.
    pub instance_limit: Option<usize>,
}

impl Default for AnalysisSettings {
    fn default() -> Self {
        AnalysisSettings {
            seeds: (0..10).collect(),
            runs: 10,
            static_count: 50,
            instance_limit: None,
        }
    }
}

impl AnalysisSettings {
    fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::config("seeds", "must not be empty"));
        }
        if self.runs == 0 {
            return Err(Error::config("runs", "must be positive"));
        }
        if self.instance_limit == Some(0) {
            return Err(Error::config("instance_limit", "must be positive"));
        }
        Ok(())
    }
}

/// A standard deviation divided by `|mean|`; when the mean is degenerate the
/// raw standard deviation is kept and flagged.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spread {
    pub value: f64,
    pub degenerate: bool,
}

pub fn normalized_std(values: &[f64]) -> Spread {
    let (mean, std) = mean_std(values);
    if std == 0.0 {
        Spread {
            value: 0.0,
            degenerate: false,
        }
    } else if mean.abs() < DEGENERATE_MEAN {
        Spread {
            value: std,
            degenerate: true,
        }
    } else {
        Spread {
            value: std / mean.abs(),
            degenerate: false,
        }
    }
}

/// Average of spreads; degenerate if any input is.
pub fn mean_spread(spreads: &[Spread]) -> Spread {
    let values: Vec<f64> = spreads.iter().map(|s| s.value).collect();
    Spread {
        value: mean_std(&values).0,
        degenerate: spreads.iter().any(|s| s.degenerate),
    }
}

/// `(state category, action category)` from the declared spaces.
pub fn space_categories(config: &BenchmarkConfig) -> (u8, u8) {
    (state_category(&config.observation_space), action_category(&config.action_space))
}

fn state_category(space: &SpaceSpec) -> u8 {
    match space.dimension {
        d if d < 10 => 1,
        d if d <= 100 => 2,
        _ => 3,
    }
}

fn action_category(space: &SpaceSpec) -> u8 {
    match space.action_count() {
        Some(n) if n < 100 => 1,
        Some(n) if n <= 1000 => 2,
        _ => 3,
    }
}

fn instance_indices(config: &BenchmarkConfig, settings: &AnalysisSettings, factory: &EnvFactory) -> Result<Vec<usize>> {
    let n = factory(config)?.instance_count();
    Ok((0..settings.instance_limit.map_or(n, |l| l.min(n))).collect())
}

/// One episode per instance; the policy key comes from `key_seed` and the
/// environment stream from `env_seed`.
fn episode_returns(
    factory: &EnvFactory,
    config: &BenchmarkConfig,
    spec: &PolicySpec,
    env_seed: u64,
    key_seed: u64,
    instances: &[usize],
) -> Result<Vec<f64>> {
    let mut env = factory(config)?;
    env.seed(env_seed);
    let mut policy = spec.build(env.action_space());
    instances
        .iter()
        .map(|&i| run_episode(env.as_mut(), &mut policy, key_seed, i, 0, &mut |_| Ok(())).map(|s| s.cumulative_reward))
        .collect()
}

/// Per seed `s`: the random policy with action seed `s` is evaluated `runs`
/// times with different environment streams and identical actions; each
/// evaluation is the mean return over the instances. Returns the mean over
/// seeds of std / |mean| across evaluations.
pub fn noise_score(config: &BenchmarkConfig, settings: &AnalysisSettings) -> Result<Spread> {
    noise_score_with(config, settings, &make_environment)
}

pub fn noise_score_with(config: &BenchmarkConfig, settings: &AnalysisSettings, factory: &EnvFactory) -> Result<Spread> {
    settings.validate()?;
    let instances = instance_indices(config, settings, factory)?;
    let tasks: Vec<(u64, u64)> = settings
        .seeds
        .iter()
        .flat_map(|&s| (0..settings.runs as u64).map(move |r| (s, r)))
        .collect();
    let evaluations: Vec<f64> = tasks
        .par_iter()
        .map(|&(s, r)| {
            let returns = episode_returns(factory, config, &PolicySpec::Random { seed: s }, derive_seed(s, "noise-repeat", r), s, &instances)?;
            Ok(mean_std(&returns).0)
        })
        .collect::<Result<_>>()?;
    let spreads: Vec<Spread> = evaluations.chunks(settings.runs).map(normalized_std).collect();
    Ok(mean_spread(&spreads))
}

/// Mean over policies of std / |mean| of per-instance mean returns.
pub fn heterogeneity_from_means(per_policy_instance_means: &[Vec<f64>]) -> Spread {
    let spreads: Vec<Spread> = per_policy_instance_means.iter().map(|m| normalized_std(m)).collect();
    mean_spread(&spreads)
}

pub fn heterogeneity_score(config: &BenchmarkConfig, settings: &AnalysisSettings) -> Result<Spread> {
    heterogeneity_score_with(config, settings, &make_environment)
}

pub fn heterogeneity_score_with(config: &BenchmarkConfig, settings: &AnalysisSettings, factory: &EnvFactory) -> Result<Spread> {
    settings.validate()?;
    let instances = instance_indices(config, settings, factory)?;
    let grid = static_grid(&config.action_space, settings.static_count)?;
    let tasks: Vec<(usize, u64)> = (0..grid.len())
        .flat_map(|p| settings.seeds.iter().map(move |&s| (p, s)))
        .collect();
    let returns: Vec<Vec<f64>> = tasks
        .par_iter()
        .map(|&(p, s)| episode_returns(factory, config, &grid[p], s, s, &instances))
        .collect::<Result<_>>()?;
    let seeds = settings.seeds.len();
    let means: Vec<Vec<f64>> = returns
        .chunks(seeds)
        .map(|per_seed| {
            (0..instances.len())
                .map(|i| mean_std(&per_seed.iter().map(|r| r[i]).collect::<Vec<_>>()).0)
                .collect()
        })
        .collect();
    Ok(heterogeneity_from_means(&means))
}

/// Points for the winning repeat length of one cell; `averages[j]` belongs to
/// `REPEAT_LENGTHS[j]`. Ties go to the largest tied length.
pub fn dynamicity_points(averages: &[f64; 4]) -> u32 {
    let best = averages.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let winner = (0..4).rev().find(|&j| averages[j] == best).unwrap_or(3);
    3 - winner as u32
}

/// Scaled total of [`dynamicity_points`] over (instance, seed) cells, in [0, 1].
pub fn dynamicity_from_cells(cells: &[[f64; 4]]) -> f64 {
    if cells.is_empty() {
        return 0.0;
    }
    let total: u32 = cells.iter().map(dynamicity_points).sum();
    total as f64 / (3 * cells.len()) as f64
}

pub fn dynamicity_score(config: &BenchmarkConfig, settings: &AnalysisSettings) -> Result<f64> {
    dynamicity_score_with(config, settings, &make_environment)
}

pub fn dynamicity_score_with(config: &BenchmarkConfig, settings: &AnalysisSettings, factory: &EnvFactory) -> Result<f64> {
    settings.validate()?;
    if config.episode_cutoff > 1000 {
        return Err(Error::config("episode_cutoff", "dynamicity needs episodes of at most 1000 steps"));
    }
    let instances = instance_indices(config, settings, factory)?;
    let runs = settings.runs as u64;
    let tasks: Vec<(usize, u64, u64)> = (0..REPEAT_LENGTHS.len())
        .flat_map(|j| settings.seeds.iter().flat_map(move |&s| (0..runs).map(move |r| (j, s, r))))
        .collect();
    let returns: Vec<Vec<f64>> = tasks
        .par_iter()
        .map(|&(j, s, r)| {
            let spec = PolicySpec::RepeatRandom {
                seed: s,
                repeat_length: REPEAT_LENGTHS[j],
            };
            // identical streams across repeat lengths, so lengths >= cutoff tie exactly
            let run_seed = derive_seed(s, "dynamicity-run", r);
            episode_returns(factory, config, &spec, run_seed, run_seed, &instances)
        })
        .collect::<Result<_>>()?;
    let mut averages: BTreeMap<(u64, usize), [f64; 4]> = BTreeMap::new();
    let per_length = settings.seeds.len() * settings.runs;
    for (j, block) in returns.chunks(per_length).enumerate() {
        for (si, seed_block) in block.chunks(settings.runs).enumerate() {
            for i in 0..instances.len() {
                let values: Vec<f64> = seed_block.iter().map(|r| r[i]).collect();
                averages.entry((settings.seeds[si], i)).or_insert([0.0; 4])[j] = mean_std(&values).0;
            }
        }
    }
    let cells: Vec<[f64; 4]> = averages.into_values().collect();
    Ok(dynamicity_from_cells(&cells))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifficultyProfile {
    pub benchmark: String,
    pub config_hash: String,
    pub state_space_category: u8,
    pub action_space_category: u8,
    pub reward_quality: u8,
    pub noise: f64,
    pub noise_degenerate: bool,
    pub policy_heterogeneity: f64,
    pub heterogeneity_degenerate: bool,
    pub dynamicity: f64,
    pub settings: AnalysisSettings,
}

impl DifficultyProfile {
    pub const DIMENSIONS: [&'static str; 6] = [
        "state_space",
        "action_space",
        "reward_quality",
        "noise",
        "policy_heterogeneity",
        "dynamicity",
    ];

    pub fn raw_scores(&self) -> [f64; 6] {
        [
            self.state_space_category as f64,
            self.action_space_category as f64,
            self.reward_quality as f64,
            self.noise,
            self.policy_heterogeneity,
            self.dynamicity,
        ]
    }
}

pub fn profile(config: &BenchmarkConfig, settings: &AnalysisSettings) -> Result<DifficultyProfile> {
    profile_with(config, settings, &make_environment)
}

pub fn profile_with(config: &BenchmarkConfig, settings: &AnalysisSettings, factory: &EnvFactory) -> Result<DifficultyProfile> {
    config.validate()?;
    let (state, action) = space_categories(config);
    let noise = noise_score_with(config, settings, factory)?;
    let heterogeneity = heterogeneity_score_with(config, settings, factory)?;
    let dynamicity = dynamicity_score_with(config, settings, factory)?;
    Ok(DifficultyProfile {
        benchmark: config.benchmark_id.to_string(),
        config_hash: config.config_hash(),
        state_space_category: state,
        action_space_category: action,
        reward_quality: config.reward_quality,
        noise: noise.value,
        noise_degenerate: noise.degenerate,
        policy_heterogeneity: heterogeneity.value,
        heterogeneity_degenerate: heterogeneity.degenerate,
        dynamicity,
        settings: settings.clone(),
    })
}

/// Competition ranks, ascending: equal values share the lower rank.
pub fn competition_ranks(values: &[f64]) -> Vec<usize> {
    values
        .iter()
        .map(|v| 1 + values.iter().filter(|w| w.total_cmp(v).is_lt()).count())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadarRow {
    pub benchmark: String,
    pub dimension: String,
    pub raw_score: f64,
    pub rank: usize,
}

/// Rows per (benchmark, dimension), benchmarks in input order.
pub fn radar_rows(profiles: &[DifficultyProfile]) -> Vec<RadarRow> {
    let scores: Vec<[f64; 6]> = profiles.iter().map(DifficultyProfile::raw_scores).collect();
    let ranks: Vec<Vec<usize>> = (0..6)
        .map(|d| competition_ranks(&scores.iter().map(|s| s[d]).collect::<Vec<_>>()))
        .collect();
    let mut rows = Vec::new();
    for (b, p) in profiles.iter().enumerate() {
        for (d, name) in DifficultyProfile::DIMENSIONS.iter().enumerate() {
            rows.push(RadarRow {
                benchmark: p.benchmark.clone(),
                dimension: name.to_string(),
                raw_score: scores[b][d],
                rank: ranks[d][b],
            });
        }
    }
    rows
}
