use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ellm_core::env_core::{Environment, StepResult};
use ellm_core::gridcraft::achievements::{AchievementTree, ACHIEVEMENTS};
use ellm_core::gridcraft::{Gridcraft, GridcraftConfig};

fn short(cap: u64) -> Gridcraft {
    Gridcraft::new(GridcraftConfig {
        episode_cap: cap,
        ..GridcraftConfig::desk()
    })
    .unwrap()
}

/// Random-action episode; returns the step results.
fn rollout(env: &mut Gridcraft, seed: u64, rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<StepResult>) {
    env.reset(seed);
    let n = env.action_space().len();
    let (mut actions, mut steps) = (Vec::new(), Vec::new());
    loop {
        let a = rng.random_range(0..n);
        let r = env.step(a);
        let done = r.done;
        actions.push(a);
        steps.push(r);
        if done {
            return (actions, steps);
        }
    }
}

#[test]
fn replaying_actions_reproduces_the_trajectory() {
    let mut env = short(300);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for seed in 0..5 {
        let (actions, steps) = rollout(&mut env, seed, &mut rng);
        env.reset(seed);
        for (a, want) in actions.iter().zip(&steps) {
            let got = env.step(*a);
            assert_eq!(serde_json::to_vec(&got).unwrap(), serde_json::to_vec(want).unwrap());
        }
    }
}

#[test]
fn random_trajectories_respect_achievement_semantics() {
    let tree = AchievementTree::default();
    let known: BTreeSet<&str> = ACHIEVEMENTS.into_iter().collect();
    let mut env = short(100);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut unlocked = 0;
    for episode in 0..10_000u64 {
        let (_, steps) = rollout(&mut env, episode, &mut rng);
        let mut emitted: Vec<String> = Vec::new();
        let mut before = steps[0].observation.inventory.clone();
        for (i, r) in steps.iter().enumerate() {
            for e in &r.events {
                assert!(known.contains(e.as_str()), "unknown achievement {e}");
                assert!(!emitted.contains(e), "{e} emitted twice in episode {episode}");
                emitted.push(e.clone());
            }
            if i > 0 && r.observation.inventory != before {
                assert!(
                    r.action_outcome.is_some(),
                    "inventory changed without an action outcome in episode {episode}"
                );
            }
            before = r.observation.inventory.clone();
            if let Some(t) = &r.observation.target {
                assert!(r.observation.sees(t), "target {t} is not in view");
            }
            let v = r.observation.vitals.unwrap();
            assert!([v.health, v.food, v.drink, v.energy].iter().all(|m| *m <= 9));
        }
        if let Some(i) = emitted.iter().position(|e| e == "collect_iron") {
            assert!(emitted[..i].iter().any(|e| e == "make_stone_pickaxe"));
        }
        assert!(tree.respects_order(&emitted), "order violated: {emitted:?}");
        assert_eq!(env.unique_achievements(), emitted.len());
        unlocked += emitted.len();
    }
    assert!(unlocked > 0);
}
