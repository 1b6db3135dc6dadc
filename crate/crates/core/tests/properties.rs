mod common;

use std::time::Duration;

use common::ConstantEnv;
use dac_core::analysis::{dynamicity_from_cells, dynamicity_points, normalized_std};
use dac_core::envs::default_config;
use dac_core::envs::luby::luby_value;
use dac_core::envs::sigmoid::{optimal_sigmoid_action, sigmoid_reward, SigmoidInstance};
use dac_core::runner::{estimate_return, EpisodeSummary};
use dac_core::seed::rng_from_seed;
use dac_core::space::Interval;
use dac_core::{Action, BenchmarkConfig, BenchmarkId, Error, PolicySpec, SpaceSpec};
use proptest::prelude::*;

fn space_strategy() -> impl Strategy<Value = SpaceSpec> {
    prop_oneof![
        (1usize..50).prop_map(SpaceSpec::discrete),
        prop::collection::vec(1usize..8, 1..4).prop_map(SpaceSpec::multi_discrete),
        prop::collection::vec((-100.0f64..100.0, 0.001f64..50.0), 1..4).prop_map(|b| {
            SpaceSpec::continuous(b.into_iter().map(|(lo, w)| Interval::new(lo, lo + w)).collect())
        }),
    ]
}

fn sigmoid_case() -> impl Strategy<Value = (SigmoidInstance, Vec<usize>, Vec<usize>, f64)> {
    (1usize..5)
        .prop_flat_map(|d| {
            (
                prop::collection::vec(0.0f64..10.0, d),
                prop::collection::vec(-5.0f64..5.0, d),
                prop::collection::vec(2usize..8, d),
                0u32..10,
            )
        })
        .prop_flat_map(|(shifts, slopes, cards, t)| {
            let actions: Vec<BoxedStrategy<usize>> = cards.iter().map(|&n| (0..n).boxed()).collect();
            (Just(shifts), Just(slopes), Just(cards), actions, Just(t as f64))
        })
        .prop_map(|(shifts, slopes, cards, actions, t)| {
            (
                SigmoidInstance {
                    id: "p".into(),
                    shifts,
                    slopes,
                },
                cards,
                actions,
                t,
            )
        })
}

/// Luby sequence from the doubling construction: S_1 = (1), S_k = S_{k-1} S_{k-1} 2^{k-1}.
fn luby_by_construction(len: usize) -> Vec<u64> {
    let mut seq = vec![1u64];
    let mut k = 1;
    while seq.len() < len {
        let mut next = seq.clone();
        next.extend_from_slice(&seq);
        next.push(1 << k);
        seq = next;
        k += 1;
    }
    seq.truncate(len);
    seq
}

fn action_stream(spec: &PolicySpec, space: &SpaceSpec, key: u64, steps: usize) -> Vec<Action> {
    let mut env = ConstantEnv::new(0.0, 1);
    env.config.action_space = space.clone();
    let mut policy = spec.build(space);
    policy.begin_episode(key);
    (0..steps).map(|t| policy.act(&[], t, &env).unwrap()).collect()
}

fn summary(instance: usize, reward: f64) -> EpisodeSummary {
    EpisodeSummary {
        policy_id: "p".into(),
        seed: 0,
        instance_id: format!("i{instance}"),
        instance_index: instance,
        episode: 0,
        cumulative_reward: reward,
        steps_taken: 1,
        wall_time: Duration::ZERO,
    }
}

#[test]
fn luby_matches_doubling_construction() {
    let expected = luby_by_construction(1 << 13);
    for (i, &v) in expected.iter().enumerate() {
        assert_eq!(luby_value(i as u64 + 1).unwrap(), v, "position {}", i + 1);
    }
    assert!(matches!(luby_value(0), Err(Error::Domain(_))));
}

proptest! {
    #[test]
    fn sampled_actions_lie_in_space(space in space_strategy(), seed in any::<u64>()) {
        prop_assert!(space.validate().is_ok());
        let mut rng = rng_from_seed(seed);
        for _ in 0..20 {
            let a = space.sample(&mut rng);
            prop_assert!(space.check_action(&a).is_ok(), "{a:?} not in {space:?}");
            let reparsed = space.parse_action(&a.to_string()).unwrap();
            prop_assert!(space.check_action(&reparsed).is_ok());
        }
    }

    #[test]
    fn sigmoid_reward_in_unit_interval((inst, cards, actions, t) in sigmoid_case()) {
        let r = sigmoid_reward(t, &actions, &inst, &cards).unwrap();
        prop_assert!((0.0..=1.0).contains(&r), "{r}");
    }

    #[test]
    fn sigmoid_optimal_dominates((inst, cards, actions, t) in sigmoid_case()) {
        let best = optimal_sigmoid_action(t, &inst, &cards);
        let r_best = sigmoid_reward(t, &best, &inst, &cards).unwrap();
        let r = sigmoid_reward(t, &actions, &inst, &cards).unwrap();
        prop_assert!(r_best >= r - 1e-12, "{r_best} < {r}");
    }

    #[test]
    fn sigmoid_reward_permutation_invariant((inst, cards, actions, t) in sigmoid_case(), rot in 0usize..4) {
        let d = cards.len();
        let perm: Vec<usize> = (0..d).map(|i| (i + rot) % d).collect();
        let permuted = SigmoidInstance {
            id: inst.id.clone(),
            shifts: perm.iter().map(|&i| inst.shifts[i]).collect(),
            slopes: perm.iter().map(|&i| inst.slopes[i]).collect(),
        };
        let pc: Vec<usize> = perm.iter().map(|&i| cards[i]).collect();
        let pa: Vec<usize> = perm.iter().map(|&i| actions[i]).collect();
        let a = sigmoid_reward(t, &actions, &inst, &cards).unwrap();
        let b = sigmoid_reward(t, &pa, &permuted, &pc).unwrap();
        prop_assert!((a - b).abs() <= 1e-12);
    }

    #[test]
    fn random_policy_reproducible(space in space_strategy(), seed in any::<u64>(), key in any::<u64>()) {
        let spec = PolicySpec::Random { seed };
        let a = action_stream(&spec, &space, key, 30);
        prop_assert_eq!(&a, &action_stream(&spec, &space, key, 30));
        prop_assert!(a.iter().all(|x| space.check_action(x).is_ok()));
    }

    #[test]
    fn repeat_one_is_random(space in space_strategy(), seed in any::<u64>(), key in any::<u64>()) {
        let rand = action_stream(&PolicySpec::Random { seed }, &space, key, 40);
        let rep = action_stream(&PolicySpec::RepeatRandom { seed, repeat_length: 1 }, &space, key, 40);
        prop_assert_eq!(rand, rep);
    }

    #[test]
    fn repeat_holds_between_boundaries(seed in any::<u64>(), key in any::<u64>(), len in prop::sample::select(vec![10usize, 100])) {
        let space = SpaceSpec::discrete(1000);
        let a = action_stream(&PolicySpec::RepeatRandom { seed, repeat_length: len }, &space, key, 250);
        for t in 0..a.len() {
            if t % len != 0 {
                prop_assert_eq!(&a[t], &a[t - 1]);
            }
        }
    }

    #[test]
    fn normalized_std_scale_and_shift(values in prop::collection::vec(1.0f64..100.0, 2..20), c in 0.1f64..10.0, shift in -50.0f64..50.0) {
        let base = normalized_std(&values);
        let scaled = normalized_std(&values.iter().map(|v| v * c).collect::<Vec<_>>());
        prop_assert!((base.value - scaled.value).abs() <= 1e-9 * base.value.max(1.0));
        prop_assert!(base.value >= 0.0);
        // std itself is translation invariant
        let (m, _) = dac_core::logging::mean_std(&values);
        let shifted: Vec<f64> = values.iter().map(|v| v + shift).collect();
        let (ms, _) = dac_core::logging::mean_std(&shifted);
        let s = normalized_std(&shifted);
        if !s.degenerate && s.value > 0.0 {
            let std_base = base.value * m.abs();
            let std_shifted = s.value * ms.abs();
            prop_assert!((std_base - std_shifted).abs() <= 1e-8 * std_base.max(1.0));
        }
    }

    #[test]
    fn dynamicity_in_unit_interval(cells in prop::collection::vec(prop::array::uniform4(-10.0f64..10.0), 0..30)) {
        let d = dynamicity_from_cells(&cells);
        prop_assert!((0.0..=1.0).contains(&d));
        for c in &cells {
            prop_assert!(dynamicity_points(c) <= 3);
        }
    }

    #[test]
    fn constant_cells_score_zero(v in -10.0f64..10.0, n in 1usize..20) {
        prop_assert_eq!(dynamicity_from_cells(&vec![[v; 4]; n]), 0.0);
    }

    #[test]
    fn estimate_return_matches_double_loop(rewards in prop::collection::vec(prop::collection::vec(-100.0f64..100.0, 1..5), 1..8)) {
        let summaries: Vec<EpisodeSummary> = rewards
            .iter()
            .enumerate()
            .flat_map(|(i, rs)| rs.iter().map(move |&r| summary(i, r)))
            .collect();
        let ids: Vec<String> = (0..rewards.len()).map(|i| format!("i{i}")).collect();
        let mut outer = 0.0;
        for rs in &rewards {
            let mut inner = 0.0;
            for r in rs {
                inner += r;
            }
            outer += inner / rs.len() as f64;
        }
        let oracle = outer / rewards.len() as f64;
        let got = estimate_return(&summaries, &ids).unwrap();
        prop_assert!((got - oracle).abs() <= 1e-9 * oracle.abs().max(1.0));

        let mut with_missing = ids.clone();
        with_missing.push("absent".into());
        prop_assert!(matches!(estimate_return(&summaries, &with_missing), Err(Error::Incomplete(m)) if m == vec!["absent".to_string()]));
    }

    #[test]
    fn config_json_roundtrip(which in 0usize..4, seed in any::<u64>(), cutoff in 1usize..60) {
        let id = BenchmarkId::ALL[which];
        // short enough for every benchmark, including the luby position limit
        let cfg = default_config(id).with_seed(seed).with_cutoff(cutoff).unwrap();
        let back = BenchmarkConfig::from_json(&cfg.to_json()).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(back.config_hash(), cfg.config_hash());
    }
}
