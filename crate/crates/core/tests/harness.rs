use std::collections::{BTreeMap, HashSet};

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ellm_core::agent::checkpoint;
use ellm_core::env_core::{ActionOutcome, Direction, Environment, Observation, StepResult};
use ellm_core::gridcraft::knowledge::GoalCategory;
use ellm_core::gridcraft::{Gridcraft, GridcraftConfig};
use ellm_core::harness::eval::{FnPolicy, Policy};
use ellm_core::harness::{
    analyze_suggestions, emit_reports, evaluate, evaluate_policy, iqm, median, pretrain, transfer, EnvKind, Event,
    Method, RunArtifacts, RunConfig, TransferMode,
};
use ellm_core::housegrid::{Housegrid, HousegridConfig, RearrangementTask};
use ellm_core::llm_client::CacheMode;

fn quick(env: EnvKind, method: Method, steps: u64) -> RunConfig {
    let mut cfg = RunConfig::new(env, method);
    cfg.steps = steps;
    cfg
}

fn positive_rewards(art: &RunArtifacts) -> Vec<(u64, u64, String)> {
    art.seeds
        .iter()
        .flat_map(|s| &s.events)
        .filter_map(|e| match e {
            Event::Reward {
                seed,
                episode,
                goal: Some(g),
                reward,
                ..
            } if *reward > 0.0 => Some((*seed, *episode, g.clone())),
            _ => None,
        })
        .collect()
}

#[test]
fn zero_step_budget() {
    let art = pretrain(&quick(EnvKind::Gridcraft, Method::Ellm, 0)).unwrap();
    assert_eq!(art.seeds.len(), 1);
    let s = &art.seeds[0];
    assert!(s.episodes.is_empty() && s.events.is_empty() && s.transcript.is_empty());
    assert_eq!((s.env_steps, s.updates, s.network_calls), (0, 0, 0));
}

#[test]
fn rerun_gives_identical_reports() {
    let mut cfg = quick(EnvKind::Gridcraft, Method::Ellm, 6000);
    cfg.seeds = vec![0, 1];
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        emit_reports(&pretrain(&cfg).unwrap(), d.path()).unwrap();
    }
    for f in ["episodes.csv", "events.jsonl", "transcript.jsonl", "seed_1/checkpoint.bin"] {
        let a = std::fs::read(dirs[0].path().join(f)).unwrap();
        let b = std::fs::read(dirs[1].path().join(f)).unwrap();
        assert!(!a.is_empty(), "{f} is empty");
        assert_eq!(a, b, "{f} differs between reruns");
    }
}

#[test]
fn knowledge_based_methods_never_suggest() {
    for m in [Method::Apt, Method::Rnd, Method::Noveld] {
        let art = pretrain(&quick(EnvKind::Gridcraft, m, 5600)).unwrap();
        let s = &art.seeds[0];
        assert!(s.transcript.is_empty(), "{m:?} logged suggestions");
        assert_eq!(s.network_calls, 0);
        assert!(s.updates > 0);
        assert!(s.episodes.iter().any(|e| e.intrinsic_return > 0.0), "{m:?} paid nothing");
    }
}

#[test]
fn filtered_methods_pay_each_goal_once_per_episode() {
    for m in [Method::Ellm, Method::Oracle, Method::Novelty] {
        let mut cfg = quick(EnvKind::Gridcraft, m, 8000);
        let mut agent = cfg.agent_config();
        agent.seed_frames = cfg.steps;
        cfg.agent = Some(agent);
        let keys = positive_rewards(&pretrain(&cfg).unwrap());
        assert!(!keys.is_empty(), "{m:?} never rewarded");
        let unique: HashSet<_> = keys.iter().collect();
        assert_eq!(unique.len(), keys.len(), "{m:?} repeated a reward");
    }
}

#[test]
fn oracle_suggestions_are_all_good() {
    let art = pretrain(&quick(EnvKind::Gridcraft, Method::Oracle, 3000)).unwrap();
    let a = analyze_suggestions(&art.seeds[0].transcript);
    assert!(a.suggested.total() > 0);
    assert_eq!(a.suggested.fraction(GoalCategory::Good), 1.0);
    assert_eq!(a.rewarded.fraction(GoalCategory::Impossible), 0.0);
}

#[test]
fn replayed_run_is_bit_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = quick(EnvKind::Gridcraft, Method::Ellm, 6000);
    cfg.llm.cache = Some(dir.path().join("cache.jsonl"));
    pretrain(&cfg).unwrap();
    cfg.llm.cache_mode = CacheMode::Replay;
    let a = pretrain(&cfg).unwrap();
    let b = pretrain(&cfg).unwrap();
    assert_eq!(a.seeds[0].network_calls, 0);
    assert_eq!(a.seeds[0].events, b.seeds[0].events);
    assert_eq!(a.seeds[0].transcript, b.seeds[0].transcript);
    assert_eq!(a.seeds[0].checkpoint, b.seeds[0].checkpoint);
}

fn pretrained(dir: &std::path::Path) -> RunConfig {
    let mut cfg = quick(EnvKind::Gridcraft, Method::Ellm, 1000);
    cfg.out_dir = Some(dir.to_path_buf());
    pretrain(&cfg).unwrap();
    cfg.out_dir = None;
    cfg.transfer.checkpoint = Some(dir.join("seed_{seed}").join("checkpoint.bin"));
    cfg.transfer.task = "place_table".into();
    cfg.transfer.steps = 5600;
    cfg
}

#[test]
fn finetune_with_zero_lr_keeps_weights() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = pretrained(dir.path());
    cfg.transfer.mode = TransferMode::Finetune;
    cfg.transfer.lr = 0.0;
    let art = transfer(&cfg).unwrap();
    let s = &art.seeds[0];
    assert!(s.updates > 0);
    let (_, before) = checkpoint::load::<f32>(&dir.path().join("seed_0/checkpoint.bin")).unwrap();
    let (_, after) = checkpoint::decode::<f32>(s.checkpoint.as_ref().unwrap()).unwrap();
    assert_eq!(before.params, after.params);
}

#[test]
fn guided_transfer_never_touches_the_guide() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = pretrained(dir.path());
    cfg.transfer.mode = TransferMode::Guided;
    let art = transfer(&cfg).unwrap();
    let s = &art.seeds[0];
    assert!(s.updates > 0);
    let (before, after) = s.guide_hash.clone().unwrap();
    assert_eq!(before, after);
    assert!(s.episodes.iter().all(|e| e.task_success.is_some()));
}

#[test]
fn evaluate_loads_checkpoints_and_rejects_mismatches() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = pretrained(dir.path());
    let path = dir.path().join("seed_0/checkpoint.bin");
    let mut ecfg = cfg.clone();
    ecfg.eval.trials = 2;
    ecfg.eval.episodes = 2;
    let s = evaluate(&ecfg, &path).unwrap();
    assert_eq!(s.per_trial.len(), 2);
    assert_eq!(s.metric, "unique_achievements");
    let house = quick(EnvKind::Housegrid, Method::Ellm, 0);
    assert!(evaluate(&house, &path).is_err());
}

#[test]
fn random_policy_stays_below_two_achievements() {
    let mut env = Gridcraft::new(GridcraftConfig::desk()).unwrap();
    let n = env.action_space().len();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut policy = FnPolicy(move |_: &dyn Environment, _: &Observation| rng.random_range(0..n));
    let s = evaluate_policy(&mut env, &mut policy, 10, 10, 0).unwrap();
    assert!(s.mean < 2.0, "random policy mean {}", s.mean);
    assert!(s.min <= s.iqm && s.iqm <= s.max);
}

/// Walks to each misplaced object, carries it to its first correct receptacle.
struct Tidy {
    task: RearrangementTask,
    at: BTreeMap<String, String>,
    width: i32,
    height: i32,
}

impl Tidy {
    fn new(task: RearrangementTask) -> Self {
        Tidy {
            at: BTreeMap::new(),
            task,
            width: 12,
            height: 12,
        }
    }

    fn index(env: &dyn Environment, verb: &str, noun: Option<&str>) -> usize {
        env.action_space()
            .iter()
            .position(|a| a.verb == verb && a.noun.as_deref() == noun)
            .unwrap()
    }
}

impl Policy for Tidy {
    fn begin(&mut self, _env: &mut dyn Environment, _obs: &Observation) -> ellm_core::Result<()> {
        self.at = self.task.objects.iter().map(|o| (o.name.clone(), o.start.clone())).collect();
        Ok(())
    }

    fn act(&mut self, env: &dyn Environment, obs: &Observation) -> ellm_core::Result<usize> {
        let (verb, object, receptacle) = match &obs.holding {
            Some(o) => {
                let def = self.task.objects.iter().find(|d| &d.name == o).unwrap();
                ("place", o.clone(), def.correct[0].clone())
            }
            None => match self
                .task
                .objects
                .iter()
                .find(|o| !o.correct.contains(&self.at[&o.name]))
            {
                Some(o) => ("pick", o.name.clone(), self.at[&o.name].clone()),
                None => return Ok(Self::index(env, "turn left", None)),
            },
        };
        let r = self.task.receptacles.iter().find(|r| r.name == receptacle).unwrap();
        let stand = (r.x.clamp(1, self.width - 2), r.y.clamp(1, self.height - 2));
        let pose = obs.pose.unwrap();
        let want = if (pose.x, pose.y) == stand {
            Direction::ALL.into_iter().find(|d| d.delta() == (r.x - stand.0, r.y - stand.1)).unwrap()
        } else if pose.x != stand.0 {
            if pose.x < stand.0 { Direction::Right } else { Direction::Left }
        } else if pose.y < stand.1 {
            Direction::Down
        } else {
            Direction::Up
        };
        Ok(if pose.facing != want {
            Self::index(env, "turn right", None)
        } else if (pose.x, pose.y) != stand {
            Self::index(env, "forward", None)
        } else if verb == "pick" {
            Self::index(env, "pick", Some(&object))
        } else {
            Self::index(env, "place", Some(&receptacle))
        })
    }

    fn observe(&mut self, _env: &mut dyn Environment, res: &StepResult) -> ellm_core::Result<()> {
        if let Some(ActionOutcome::Place { object, receptacle }) = &res.action_outcome {
            self.at.insert(object.clone(), receptacle.clone());
        }
        Ok(())
    }
}

#[test]
fn scripted_policy_solves_housegrid() {
    for task in 1..=4 {
        let mut env = Housegrid::new(HousegridConfig {
            task,
            episode_cap: 1000,
            ..Default::default()
        })
        .unwrap();
        let mut policy = Tidy::new(env.task().clone());
        let s = evaluate_policy(&mut env, &mut policy, 2, 3, 9).unwrap();
        assert_eq!(s.metric, "success_rate");
        assert_eq!(s.mean, 1.0, "task {task}: {:?}", s.per_trial);
    }
}

proptest! {
    #[test]
    fn iqm_and_median_lie_within_range(v in prop::collection::vec(-100.0f64..100.0, 1..40)) {
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let (q, m) = (iqm(&v), median(&v));
        prop_assert!(lo - 1e-9 <= q && q <= hi + 1e-9);
        prop_assert!(lo <= m && m <= hi);
    }
}
