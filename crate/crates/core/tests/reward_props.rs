use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ellm_core::env_core::EpisodeLedger;
use ellm_core::reward::{
    apt_reward, cosine, ellm_reward, hardcoded_goal_reward, AptBuffer, Embedder, EmbeddingVector, LexicalEmbedder,
    RandomProjectionEmbedder, RndConfig, RndState,
};
use ellm_core::suggestion::{filter_achieved, SuggestionSet, SuggestionSource};

const WORDS: [&str; 12] = [
    "chop", "tree", "eat", "cow", "drink", "water", "mine", "stone", "place", "table", "wood", "pickaxe",
];

fn phrase() -> impl Strategy<Value = String> {
    prop::collection::vec(prop::sample::select(WORDS.to_vec()), 1..4).prop_map(|w| w.join(" "))
}

fn goals() -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(phrase(), 0..6)
}

fn embedders() -> [Box<dyn Embedder<f64>>; 2] {
    [Box::new(LexicalEmbedder), Box::new(RandomProjectionEmbedder::default())]
}

proptest! {
    #[test]
    fn reward_gates_on_delta_max(caption in phrase(), goals in goals(), t in -1.0f64..1.0) {
        for e in embedders() {
            let r = ellm_reward(&caption, &goals, t, e.as_ref());
            prop_assert_eq!(r.reward > 0.0, r.delta_max > t && r.delta_max > 0.0);
            if r.reward != 0.0 {
                prop_assert_eq!(r.reward, r.delta_max);
            }
            prop_assert_eq!(r.matched_goal.is_some(), r.delta_max > t && !goals.is_empty());
        }
    }

    #[test]
    fn delta_max_ignores_goal_order_and_grows_with_union(
        caption in phrase(), a in prop::collection::vec(phrase(), 1..6), b in goals(), seed in any::<u64>()
    ) {
        for e in embedders() {
            let base = ellm_reward(&caption, &a, 2.0, e.as_ref()).delta_max;
            let mut shuffled = a.clone();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for i in (1..shuffled.len()).rev() {
                shuffled.swap(i, rng.random_range(0..=i));
            }
            prop_assert_eq!(ellm_reward(&caption, &shuffled, 2.0, e.as_ref()).delta_max, base);
            let union: Vec<String> = a.iter().chain(&b).cloned().collect();
            prop_assert!(ellm_reward(&caption, &union, 2.0, e.as_ref()).delta_max >= base);
        }
    }

    #[test]
    fn cosine_is_symmetric_and_scale_free(
        u in prop::collection::vec(-5.0f64..5.0, 8), v in prop::collection::vec(-5.0f64..5.0, 8),
        a in 0.01f64..100.0, b in 0.01f64..100.0
    ) {
        let (eu, ev) = (EmbeddingVector::new(u), EmbeddingVector::new(v));
        let c = cosine(&eu, &ev).unwrap();
        prop_assert!((-1.0..=1.0).contains(&c));
        prop_assert!((cosine(&ev, &eu).unwrap() - c).abs() < 1e-12);
        prop_assert!((cosine(&eu.scaled(a), &ev.scaled(b)).unwrap() - c).abs() < 1e-9);
    }

    #[test]
    fn filtered_goals_pay_once_per_episode(stream in prop::collection::vec((phrase(), goals()), 1..40)) {
        let e = LexicalEmbedder;
        let mut ledger = EpisodeLedger::new();
        for (caption, raw) in &stream {
            let set = SuggestionSet::new(raw, SuggestionSource::ScriptedOracle, 0, 7);
            let filtered = filter_achieved(&set, &ledger);
            let r = ellm_reward::<f64, _>(caption, &filtered.goals, 0.99, &e);
            if let Some(g) = &r.matched_goal {
                prop_assert!(ledger.mark(g), "{} paid twice", g);
            }
            prop_assert_eq!(hardcoded_goal_reward(caption, &filtered.goals, Some(&ledger)) > 0.0,
                filtered.goals.contains(caption) && !ledger.contains(caption));
        }
    }

    #[test]
    fn apt_reward_is_non_negative(points in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 4), 1..30),
                                  q in prop::collection::vec(-3.0f64..3.0, 4), k in 1usize..8) {
        let mut buf = AptBuffer::new(k, 16).unwrap();
        buf.fill(points);
        prop_assert!(buf.len() <= 16);
        prop_assert!(apt_reward(&q, &buf) >= 0.0);
    }
}

#[test]
fn empty_inputs_pay_nothing() {
    for e in embedders() {
        assert_eq!(ellm_reward::<f64, &str>("chop tree", &[], -1.0, e.as_ref()).reward, 0.0);
        assert_eq!(ellm_reward("", &["chop tree"], -1.0, e.as_ref()).reward, 0.0);
        assert_eq!(e.embed("").norm(), 0.0);
    }
}

#[test]
fn rnd_prefers_unseen_states() {
    let mut wins = 0;
    for trial in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(trial);
        let cfg = RndConfig::default();
        let mut rnd = RndState::<f64>::new(8, &cfg, &mut rng);
        let seen: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let fresh: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        for _ in 0..300 {
            rnd.reward(&seen).unwrap();
        }
        if rnd.novelty(&fresh).unwrap() > rnd.novelty(&seen).unwrap() {
            wins += 1;
        }
    }
    assert!(wins >= 95, "fresh state more novel in only {wins}/100 trials");
}
