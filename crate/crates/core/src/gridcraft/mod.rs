//! Symbolic survival-crafting world with a verb + noun action space.

pub mod achievements;
pub mod knowledge;
pub mod mechanics;
pub mod tasks;
pub mod world;

use std::collections::BTreeSet;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::captioning::{caption_state_crafter, caption_transition_crafter, KIND_ORDER};
use crate::env_core::{
    enumerate_actions, ActionOutcome, ActionSpec, CellView, Direction, Environment, EpisodeLedger,
    Observation, Pose, StatusFlag, StepResult, Vitals, VOID,
};
use crate::error::{Error, Result};
use crate::hashing::Fnv;

use achievements::Item;
pub use mechanics::{apply_action, tick_world, Transition};
use tasks::TaskTracker;
pub use world::{generate_world, WorldState};
use world::MAX_METER;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Densities {
    pub cow: f64,
    pub zombie: f64,
    pub skeleton: f64,
    pub coal: f64,
    pub iron: f64,
    pub diamond: f64,
    pub lava: f64,
    pub forest_tree: f64,
    pub scattered_tree: f64,
}

impl Default for Densities {
    fn default() -> Self {
        Densities {
            cow: 0.015,
            zombie: 0.004,
            skeleton: 0.05,
            coal: 0.1,
            iron: 0.06,
            diamond: 0.03,
            lava: 0.15,
            forest_tree: 0.45,
            scattered_tree: 0.02,
        }
    }
}

/// Ticks between one-unit meter changes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeterConfig {
    pub hunger_interval: u32,
    pub thirst_interval: u32,
    pub fatigue_interval: u32,
    pub recover_threshold: i32,
    pub degen_threshold: i32,
}

impl Default for MeterConfig {
    fn default() -> Self {
        MeterConfig {
            hunger_interval: 25,
            thirst_interval: 20,
            fatigue_interval: 30,
            recover_threshold: 10,
            degen_threshold: 15,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MobConfig {
    pub chase_radius: i32,
    pub chase_probability: f64,
    pub wander_probability: f64,
    pub attack_damage: u8,
    pub attack_cooldown: u32,
    pub cow_respawn: f64,
    pub zombie_respawn: f64,
    pub max_cows: usize,
    pub max_zombies: usize,
}

impl Default for MobConfig {
    fn default() -> Self {
        MobConfig {
            chase_radius: 6,
            chase_probability: 0.8,
            wander_probability: 0.5,
            attack_damage: 2,
            attack_cooldown: 5,
            cow_respawn: 0.01,
            zombie_respawn: 0.005,
            max_cows: 40,
            max_zombies: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridcraftConfig {
    pub width: usize,
    pub height: usize,
    pub view_rows: usize,
    pub view_cols: usize,
    pub episode_cap: u64,
    /// Any mob dies within this many unarmed hits.
    pub hits_to_kill: u32,
    pub sapling_probability: f64,
    pub plant_ripe_ticks: u32,
    /// Chebyshev radius within which stations count as nearby.
    pub nearby_radius: i32,
    pub verbs: Vec<String>,
    pub nouns: Vec<String>,
    pub density: Densities,
    pub meters: MeterConfig,
    pub mobs: MobConfig,
}

impl Default for GridcraftConfig {
    fn default() -> Self {
        GridcraftConfig {
            width: 64,
            height: 64,
            view_rows: 7,
            view_cols: 9,
            episode_cap: 10_000,
            hits_to_kill: 2,
            sapling_probability: 0.1,
            plant_ripe_ticks: 300,
            nearby_radius: 1,
            verbs: knowledge::VERBS.iter().map(|s| s.to_string()).collect(),
            nouns: knowledge::NOUNS.iter().map(|s| s.to_string()).collect(),
            density: Densities::default(),
            meters: MeterConfig::default(),
            mobs: MobConfig::default(),
        }
    }
}

impl GridcraftConfig {
    /// Small map and short episodes for fast experiments.
    pub fn desk() -> Self {
        GridcraftConfig {
            width: 24,
            height: 24,
            episode_cap: 500,
            plant_ripe_ticks: 100,
            mobs: MobConfig {
                max_cows: 8,
                max_zombies: 3,
                ..MobConfig::default()
            },
            ..GridcraftConfig::default()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "desk" => Ok(Self::desk()),
            "full" | "default" => Ok(Self::default()),
            other => Err(Error::config(format!("unknown gridcraft preset `{other}`"))),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width < 8 || self.height < 8 {
            return Err(Error::config("gridcraft map must be at least 8x8"));
        }
        if self.view_rows % 2 == 0 || self.view_cols % 2 == 0 {
            return Err(Error::config("view window dimensions must be odd"));
        }
        if self.hits_to_kill == 0 {
            return Err(Error::config("hits_to_kill must be positive"));
        }
        Ok(())
    }
}

/// Feature layout: per kind (presence, dx, dy) of the nearest visible cell,
/// target one-hot, facing one-hot, inventory, vitals.
pub const FEATURE_DIM: usize = KIND_ORDER.len() * 3 + (KIND_ORDER.len() + 1) + 4 + 12 + 4;

pub struct Gridcraft {
    cfg: GridcraftConfig,
    actions: Vec<ActionSpec>,
    world: WorldState,
    rng: ChaCha8Rng,
    ledger: EpisodeLedger,
    unlocked: BTreeSet<String>,
    task: Option<TaskTracker>,
    done: bool,
}

impl Gridcraft {
    pub fn new(cfg: GridcraftConfig) -> Result<Self> {
        cfg.validate()?;
        let verbs: Vec<&str> = cfg.verbs.iter().map(String::as_str).collect();
        let nouns: Vec<&str> = cfg.nouns.iter().map(String::as_str).collect();
        let actions = enumerate_actions(&verbs, &nouns)?;
        let world = generate_world(0, &cfg);
        Ok(Gridcraft {
            cfg,
            actions,
            world,
            rng: ChaCha8Rng::seed_from_u64(0),
            ledger: EpisodeLedger::new(),
            unlocked: BTreeSet::new(),
            task: None,
            done: false,
        })
    }

    pub fn config(&self) -> &GridcraftConfig {
        &self.cfg
    }

    pub fn world(&self) -> &WorldState {
        &self.world
    }

    pub fn world_mut(&mut self) -> &mut WorldState {
        &mut self.world
    }

    pub fn unlocked(&self) -> &BTreeSet<String> {
        &self.unlocked
    }

    pub fn is_done(&self) -> bool {
        self.done
    }
}

fn status_of(v: &Vitals) -> BTreeSet<StatusFlag> {
    let mut s = BTreeSet::new();
    if v.food < MAX_METER {
        s.insert(StatusFlag::Hungry);
    }
    if v.drink < MAX_METER {
        s.insert(StatusFlag::Thirsty);
    }
    if v.energy < MAX_METER {
        s.insert(StatusFlag::Sleepy);
    }
    if v.health < MAX_METER {
        s.insert(StatusFlag::LowHealth);
    }
    s
}

/// Builds the agent's observation of `world`.
pub fn observe(world: &WorldState, cfg: &GridcraftConfig) -> Observation {
    let (hr, hc) = ((cfg.view_rows / 2) as i32, (cfg.view_cols / 2) as i32);
    let a = &world.agent;
    let local_view = (-hr..=hr)
        .map(|dy| {
            (-hc..=hc)
                .map(|dx| CellView::new(world.visible_kind(a.x + dx, a.y + dy).unwrap_or(VOID)))
                .collect()
        })
        .collect();
    let (tx, ty) = world.facing_cell();
    let vitals = Vitals {
        health: a.health,
        food: a.food,
        drink: a.drink,
        energy: a.energy,
    };
    Observation {
        local_view,
        target: world.visible_kind(tx, ty).map(str::to_string),
        inventory: Item::ALL
            .iter()
            .filter(|i| a.count(**i) > 0)
            .map(|i| (i.token().to_string(), a.count(*i)))
            .collect(),
        status: status_of(&vitals),
        holding: None,
        seen: Vec::new(),
        pose: Some(Pose {
            x: a.x,
            y: a.y,
            facing: a.facing,
        }),
        vitals: Some(vitals),
    }
}

/// Fixed-length features of a crafting-world observation.
pub fn features(obs: &Observation) -> Vec<f64> {
    let mut f = vec![0.0; FEATURE_DIM];
    let rows = obs.local_view.len() as i32;
    let cols = obs.local_view.first().map_or(0, Vec::len) as i32;
    let (cr, cc) = (rows / 2, cols / 2);
    let mut best = [i32::MAX; KIND_ORDER.len()];
    for (r, row) in obs.local_view.iter().enumerate() {
        for (c, cell) in row.iter().enumerate() {
            let Some(k) = KIND_ORDER.iter().position(|k| *k == cell.kind) else {
                continue;
            };
            let (dx, dy) = (c as i32 - cc, r as i32 - cr);
            let d = dx.abs() + dy.abs();
            if d < best[k] {
                best[k] = d;
                f[3 * k] = 1.0;
                f[3 * k + 1] = dx as f64 / cc.max(1) as f64;
                f[3 * k + 2] = dy as f64 / cr.max(1) as f64;
            }
        }
    }
    let mut o = KIND_ORDER.len() * 3;
    let target = obs
        .target
        .as_deref()
        .and_then(|t| KIND_ORDER.iter().position(|k| *k == t))
        .unwrap_or(KIND_ORDER.len());
    f[o + target] = 1.0;
    o += KIND_ORDER.len() + 1;
    if let Some(p) = obs.pose {
        f[o + p.facing.index()] = 1.0;
    }
    o += 4;
    for (i, item) in Item::ALL.iter().enumerate() {
        f[o + i] = obs.count(item.token()) as f64 / 9.0;
    }
    o += 12;
    if let Some(v) = obs.vitals {
        for (i, m) in [v.health, v.food, v.drink, v.energy].into_iter().enumerate() {
            f[o + i] = m as f64 / MAX_METER as f64;
        }
    }
    f
}

impl Environment for Gridcraft {
    fn id(&self) -> &'static str {
        "gridcraft"
    }

    fn action_space(&self) -> &[ActionSpec] {
        &self.actions
    }

    fn reset(&mut self, seed: u64) -> Observation {
        self.world = generate_world(seed, &self.cfg);
        self.rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        self.ledger.clear();
        self.unlocked.clear();
        if let Some(t) = &mut self.task {
            t.reset();
        }
        self.done = false;
        self.observation()
    }

    fn step(&mut self, action: usize) -> StepResult {
        assert!(
            action < self.actions.len(),
            "action index {action} outside action space of {}",
            self.actions.len()
        );
        if self.done {
            return StepResult {
                observation: self.observation(),
                events: Vec::new(),
                effects: Vec::new(),
                action_outcome: None,
                done: true,
                extrinsic_reward: 0.0,
            };
        }
        let spec = self.actions[action].clone();
        let tr = apply_action(&mut self.world, &spec, &self.cfg, &mut self.rng);
        tick_world(&mut self.world, &self.cfg, &mut self.rng);
        self.ledger.tick();
        let events: Vec<&str> = tr
            .effects
            .iter()
            .copied()
            .filter(|e| self.unlocked.insert(e.to_string()))
            .collect();
        let extrinsic_reward = match &mut self.task {
            Some(t) => t.reward(&tr.effects, &events, &self.world.plant_positions()),
            None => 0.0,
        };
        self.done = self.world.agent.health == 0 || self.ledger.step_count() >= self.cfg.episode_cap;
        StepResult {
            observation: self.observation(),
            events: events.iter().map(|e| e.to_string()).collect(),
            effects: tr.effects.iter().map(|e| e.to_string()).collect(),
            action_outcome: tr.outcome,
            done: self.done,
            extrinsic_reward,
        }
    }

    fn observation(&self) -> Observation {
        observe(&self.world, &self.cfg)
    }

    fn truncated(&self) -> bool {
        self.done && self.world.agent.health > 0
    }

    fn ledger(&self) -> &EpisodeLedger {
        &self.ledger
    }

    fn ledger_mut(&mut self) -> &mut EpisodeLedger {
        &mut self.ledger
    }

    fn caption_state(&self, obs: &Observation) -> String {
        caption_state_crafter(obs)
    }

    fn caption_transition(&self, outcome: Option<&ActionOutcome>) -> String {
        caption_transition_crafter(outcome)
    }

    fn features(&self, obs: &Observation) -> Vec<f64> {
        features(obs)
    }

    fn feature_dim(&self) -> usize {
        FEATURE_DIM
    }

    fn expressible_goals(&self) -> Vec<String> {
        self.actions.iter().map(ActionSpec::label).collect()
    }

    fn oracle_goals(&self, obs: &Observation) -> Vec<String> {
        knowledge::oracle_goals(obs)
    }

    fn unique_achievements(&self) -> usize {
        self.unlocked.len()
    }

    fn set_task(&mut self, task: Option<&str>) -> Result<()> {
        self.task = task.map(TaskTracker::new).transpose()?;
        Ok(())
    }

    fn task_success(&self) -> bool {
        self.task.as_ref().is_some_and(TaskTracker::complete)
    }

    fn state_hash(&self) -> u64 {
        let a = &self.world.agent;
        let mut h = Fnv::default();
        h.write_i64(a.x as i64)
            .write_i64(a.y as i64)
            .write(&[a.facing.index() as u8]);
        for n in a.inventory {
            h.write(&n.to_le_bytes());
        }
        h.finish()
    }
}

/// Facing direction implied by a move verb, for scripted policies.
pub fn move_verb(dir: Direction) -> &'static str {
    match dir {
        Direction::Left => "move left",
        Direction::Right => "move right",
        Direction::Up => "move up",
        Direction::Down => "move down",
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use world::{Mob, MobKind, Terrain};

    fn env() -> Gridcraft {
        let mut e = Gridcraft::new(GridcraftConfig::desk()).unwrap();
        e.reset(3);
        e
    }

    fn clear_front(e: &mut Gridcraft, t: Terrain) {
        let w = e.world_mut();
        w.mobs.clear();
        w.placements.clear();
        let (x, y) = w.facing_cell();
        w.set_terrain(x, y, t);
    }

    #[test]
    fn has_260_actions() {
        assert_eq!(env().action_space().len(), 260);
    }

    #[test]
    fn reset_is_deterministic() {
        let mut e = env();
        let a = e.reset(7);
        let b = e.reset(7);
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        let c = e.reset(8);
        assert_ne!(generate_world(7, e.config()).tiles, generate_world(8, e.config()).tiles);
        assert_eq!(e.ledger().step_count(), 0);
        let _ = c;
    }

    #[test]
    fn chop_tree_collects_wood() {
        let mut e = env();
        clear_front(&mut e, Terrain::Tree);
        let r = e.step_spec(&ActionSpec::new("chop", Some("tree")));
        assert!(r.events.contains(&"collect_wood".to_string()));
        assert_eq!(r.observation.count("wood"), 1);
    }

    #[test]
    fn drink_tree_is_a_noop_with_outcome() {
        let mut e = env();
        clear_front(&mut e, Terrain::Tree);
        let before = e.world().clone();
        let r = e.step_spec(&ActionSpec::new("drink", Some("tree")));
        assert!(r.events.is_empty());
        assert_eq!(e.world().agent.inventory, before.agent.inventory);
        assert_eq!(e.caption_transition(r.action_outcome.as_ref()), "drink tree");
    }

    #[test]
    fn move_into_wall_keeps_position() {
        let mut e = env();
        e.world_mut().mobs.clear();
        let (x, y) = (e.world().agent.x, e.world().agent.y);
        e.world_mut().set_terrain(x - 1, y, Terrain::Stone);
        let r = e.step_spec(&ActionSpec::new("move left", None));
        assert_eq!((e.world().agent.x, e.world().agent.y), (x, y));
        assert!(r.events.is_empty());
        assert!(r.action_outcome.is_none());
    }

    #[test]
    fn make_crafting_table_with_one_wood() {
        let mut e = env();
        clear_front(&mut e, Terrain::Grass);
        e.world_mut().agent.add(Item::Wood, 1);
        let r = e.step_spec(&ActionSpec::new("make", Some("crafting table")));
        assert_eq!(r.observation.count("wood"), 0);
        assert_eq!(r.events, vec!["place_table".to_string()]);
    }

    #[test]
    fn mine_stone_needs_pickaxe() {
        let mut e = env();
        clear_front(&mut e, Terrain::Stone);
        let r = e.step_spec(&ActionSpec::new("mine", Some("stone")));
        assert!(r.events.is_empty());
        assert_eq!(r.observation.count("stone"), 0);
        e.world_mut().agent.add(Item::WoodPickaxe, 1);
        let r = e.step_spec(&ActionSpec::new("mine", Some("stone")));
        assert_eq!(r.events, vec!["collect_stone".to_string()]);
    }

    #[test]
    fn cow_dies_within_two_hits() {
        let mut e = env();
        clear_front(&mut e, Terrain::Grass);
        e.world_mut().mobs.clear();
        let (x, y) = e.world().facing_cell();
        e.world_mut().mobs.push(Mob {
            kind: MobKind::Cow,
            x,
            y,
            health: 3,
            cooldown: 0,
        });
        e.cfg.mobs.wander_probability = 0.0;
        let r1 = e.step_spec(&ActionSpec::new("attack", Some("cow")));
        assert!(r1.events.is_empty());
        assert!(e.world().mobs[0].health < 3);
        let r2 = e.step_spec(&ActionSpec::new("attack", Some("cow")));
        assert_eq!(r2.events, vec!["eat_cow".to_string()]);
    }

    #[test]
    fn sleep_restores_energy() {
        let mut e = env();
        e.world_mut().agent.energy = 3;
        let r = e.step_spec(&ActionSpec::new("sleep", None));
        assert_eq!(r.events, vec!["wake_up".to_string()]);
        assert_eq!(e.world().agent.energy, MAX_METER);
    }

    #[test]
    fn feature_dim_matches() {
        let e = env();
        assert_eq!(e.features(&e.observation()).len(), FEATURE_DIM);
        assert_eq!(FEATURE_DIM, 85);
    }

    #[test]
    fn config_round_trips_through_toml() {
        let cfg = GridcraftConfig::desk();
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(GridcraftConfig::from_toml_str(&text).unwrap(), cfg);
        assert!(GridcraftConfig::from_toml_str("width = 4").is_err());
    }
}
