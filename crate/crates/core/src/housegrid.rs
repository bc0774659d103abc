//! One-room object rearrangement world with misplaced household objects.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::captioning::{caption_state_housegrid, caption_transition_housegrid};
use crate::env_core::{
    ActionOutcome, ActionSpec, CellView, Direction, Environment, EpisodeLedger, Observation, Pose,
    StepResult,
};
use crate::error::{Error, Result};
use crate::hashing::Fnv;

pub const TASKS_JSON: &str = include_str!("../data/housegrid_tasks.v1.json");
pub const TASKS_FORMAT_VERSION: u32 = 1;

pub const FLOOR: &str = "floor";
pub const WALL: &str = "wall";

pub const MOVE_ACTIONS: [&str; 5] = ["forward", "turn left", "turn right", "look up", "look down"];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReceptacleDef {
    pub name: String,
    pub x: i32,
    pub y: i32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectDef {
    pub name: String,
    pub start: String,
    pub correct: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RearrangementTask {
    pub id: u32,
    pub receptacles: Vec<ReceptacleDef>,
    pub objects: Vec<ObjectDef>,
}

impl RearrangementTask {
    pub fn object_names(&self) -> Vec<&str> {
        self.objects.iter().map(|o| o.name.as_str()).collect()
    }

    pub fn receptacle_names(&self) -> Vec<&str> {
        self.receptacles.iter().map(|r| r.name.as_str()).collect()
    }

    pub fn is_correct(&self, object: &str, receptacle: &str) -> bool {
        self.objects
            .iter()
            .any(|o| o.name == object && o.correct.iter().any(|c| c == receptacle))
    }

    /// Every (object, receptacle) pair, labelled with ground truth.
    pub fn pairs(&self) -> Vec<(&str, &str, bool)> {
        let mut out = Vec::new();
        for o in &self.objects {
            for r in &self.receptacles {
                out.push((o.name.as_str(), r.name.as_str(), o.correct.contains(&r.name)));
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskFile {
    pub version: u32,
    pub width: i32,
    pub height: i32,
    pub tasks: Vec<RearrangementTask>,
}

impl TaskFile {
    pub fn parse(text: &str) -> Result<Self> {
        let f: TaskFile = serde_json::from_str(text)?;
        f.validate()?;
        Ok(f)
    }

    pub fn builtin() -> Self {
        Self::parse(TASKS_JSON).expect("bundled task file is valid")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    fn validate(&self) -> Result<()> {
        if self.version != TASKS_FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported task file version {}", self.version)));
        }
        if self.width < 4 || self.height < 4 {
            return Err(Error::config("room must be at least 4x4"));
        }
        for t in &self.tasks {
            let bad = |m: String| Err(Error::config(format!("task {}: {m}", t.id)));
            if t.objects.len() != 5 {
                return bad(format!("{} objects, expected 5", t.objects.len()));
            }
            let names: BTreeSet<&str> = t.receptacle_names().into_iter().collect();
            if names.len() != t.receptacles.len() {
                return bad("duplicate receptacle".into());
            }
            let mut cells = BTreeSet::new();
            for r in &t.receptacles {
                let border = r.x == 0 || r.y == 0 || r.x == self.width - 1 || r.y == self.height - 1;
                let corner = (r.x == 0 || r.x == self.width - 1) && (r.y == 0 || r.y == self.height - 1);
                if !border || corner || r.x < 0 || r.y < 0 || r.x >= self.width || r.y >= self.height {
                    return bad(format!("receptacle `{}` is not on a border cell", r.name));
                }
                if !cells.insert((r.x, r.y)) {
                    return bad(format!("receptacle `{}` shares a cell", r.name));
                }
            }
            for o in &t.objects {
                if !names.contains(o.start.as_str()) || o.correct.iter().any(|c| !names.contains(c.as_str())) {
                    return bad(format!("object `{}` names an unknown receptacle", o.name));
                }
                if o.correct.contains(&o.start) {
                    return bad(format!("object `{}` starts in a correct receptacle", o.name));
                }
            }
        }
        Ok(())
    }

    pub fn task(&self, id: u32) -> Result<&RearrangementTask> {
        self.tasks
            .iter()
            .find(|t| t.id == id)
            .ok_or_else(|| Error::config(format!("unknown housegrid task {id}")))
    }
}

/// Task from the bundled data file.
pub fn load_task(id: u32) -> Result<RearrangementTask> {
    TaskFile::builtin().task(id).cloned()
}

/// Fraction of objects resting in a correct receptacle.
pub fn success_rate(task: &RearrangementTask, placements: &BTreeMap<String, String>) -> f64 {
    let ok = task
        .objects
        .iter()
        .filter(|o| placements.get(&o.name).is_some_and(|r| o.correct.contains(r)))
        .count();
    ok as f64 / task.objects.len() as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HousegridConfig {
    pub task: u32,
    pub episode_cap: u64,
    /// Cells visible ahead of the agent.
    pub view_depth: usize,
    /// Odd width of the view cone.
    pub view_width: usize,
    pub tasks_file: Option<PathBuf>,
}

impl Default for HousegridConfig {
    fn default() -> Self {
        HousegridConfig {
            task: 1,
            episode_cap: 200,
            view_depth: 3,
            view_width: 3,
            tasks_file: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Location {
    In(usize),
    Gripper,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HouseState {
    pub x: i32,
    pub y: i32,
    pub facing: Direction,
    /// Where each task object currently is, by object index.
    pub objects: Vec<Location>,
    pub seen: Vec<usize>,
}

impl HouseState {
    pub fn holding(&self) -> Option<usize> {
        self.objects.iter().position(|l| *l == Location::Gripper)
    }
}

pub struct Housegrid {
    cfg: HousegridConfig,
    width: i32,
    height: i32,
    task: RearrangementTask,
    actions: Vec<ActionSpec>,
    cells: BTreeMap<(i32, i32), usize>,
    state: HouseState,
    rng: ChaCha8Rng,
    ledger: EpisodeLedger,
    achieved: BTreeSet<String>,
    reward_task: bool,
    done: bool,
}

impl Housegrid {
    pub fn new(cfg: HousegridConfig) -> Result<Self> {
        if cfg.view_width % 2 == 0 || cfg.view_depth == 0 || cfg.episode_cap == 0 {
            return Err(Error::config("view_width must be odd; view_depth and episode_cap positive"));
        }
        let file = match &cfg.tasks_file {
            Some(p) => TaskFile::load(p)?,
            None => TaskFile::builtin(),
        };
        let task = file.task(cfg.task)?.clone();
        let mut actions: Vec<ActionSpec> = MOVE_ACTIONS.iter().map(|a| ActionSpec::new(*a, None)).collect();
        actions.extend(task.objects.iter().map(|o| ActionSpec::new("pick", Some(&o.name))));
        actions.extend(task.receptacles.iter().map(|r| ActionSpec::new("place", Some(&r.name))));
        let cells = task
            .receptacles
            .iter()
            .enumerate()
            .map(|(i, r)| ((r.x, r.y), i))
            .collect();
        let state = Self::initial_state(&task, file.width, file.height, &mut ChaCha8Rng::seed_from_u64(0));
        let mut env = Housegrid {
            width: file.width,
            height: file.height,
            task,
            actions,
            cells,
            state,
            rng: ChaCha8Rng::seed_from_u64(0),
            ledger: EpisodeLedger::new(),
            achieved: BTreeSet::new(),
            reward_task: false,
            done: false,
            cfg,
        };
        env.update_seen();
        Ok(env)
    }

    fn initial_state<R: Rng>(task: &RearrangementTask, w: i32, h: i32, rng: &mut R) -> HouseState {
        let objects = task
            .objects
            .iter()
            .map(|o| {
                let r = task.receptacles.iter().position(|r| r.name == o.start).expect("validated");
                Location::In(r)
            })
            .collect();
        HouseState {
            x: rng.random_range(1..w - 1),
            y: rng.random_range(1..h - 1),
            facing: Direction::ALL[rng.random_range(0..4)],
            objects,
            seen: Vec::new(),
        }
    }

    pub fn task(&self) -> &RearrangementTask {
        &self.task
    }

    pub fn state(&self) -> &HouseState {
        &self.state
    }

    pub fn state_mut(&mut self) -> &mut HouseState {
        &mut self.state
    }

    /// Current receptacle of each object; held objects are absent.
    pub fn placements(&self) -> BTreeMap<String, String> {
        self.task
            .objects
            .iter()
            .zip(&self.state.objects)
            .filter_map(|(o, l)| match l {
                Location::In(r) => Some((o.name.clone(), self.task.receptacles[*r].name.clone())),
                Location::Gripper => None,
            })
            .collect()
    }

    fn kind_at(&self, x: i32, y: i32) -> &str {
        if let Some(r) = self.cells.get(&(x, y)) {
            return &self.task.receptacles[*r].name;
        }
        if x <= 0 || y <= 0 || x >= self.width - 1 || y >= self.height - 1 {
            WALL
        } else {
            FLOOR
        }
    }

    fn facing_cell(&self) -> (i32, i32) {
        let (dx, dy) = self.state.facing.delta();
        (self.state.x + dx, self.state.y + dy)
    }

    fn facing_receptacle(&self) -> Option<usize> {
        self.cells.get(&self.facing_cell()).copied()
    }

    /// View cells ordered far row first; each row runs left to right from
    /// the agent's point of view.
    fn view_cells(&self) -> Vec<Vec<(i32, i32)>> {
        let (fx, fy) = self.state.facing.delta();
        let (rx, ry) = self.state.facing.turn_right().delta();
        let half = (self.cfg.view_width / 2) as i32;
        (1..=self.cfg.view_depth as i32)
            .rev()
            .map(|d| {
                (-half..=half)
                    .map(|l| (self.state.x + fx * d + rx * l, self.state.y + fy * d + ry * l))
                    .collect()
            })
            .collect()
    }

    fn update_seen(&mut self) {
        for (x, y) in self.view_cells().into_iter().flatten() {
            if let Some(r) = self.cells.get(&(x, y)) {
                if !self.state.seen.contains(r) {
                    self.state.seen.push(*r);
                }
            }
        }
    }

    fn contents(&self, r: usize) -> Vec<String> {
        self.task
            .objects
            .iter()
            .zip(&self.state.objects)
            .filter(|(_, l)| **l == Location::In(r))
            .map(|(o, _)| o.name.clone())
            .collect()
    }

    fn correct_count(&self) -> usize {
        self.task
            .objects
            .iter()
            .zip(&self.state.objects)
            .filter(|(o, l)| match l {
                Location::In(r) => o.correct.contains(&self.task.receptacles[*r].name),
                Location::Gripper => false,
            })
            .count()
    }

    fn apply(&mut self, spec: &ActionSpec) -> Option<ActionOutcome> {
        match (spec.verb.as_str(), spec.noun.as_deref()) {
            ("forward", None) => {
                let (x, y) = self.facing_cell();
                if self.kind_at(x, y) == FLOOR {
                    self.state.x = x;
                    self.state.y = y;
                }
                None
            }
            ("turn left", None) => {
                self.state.facing = self.state.facing.turn_left();
                None
            }
            ("turn right", None) => {
                self.state.facing = self.state.facing.turn_right();
                None
            }
            ("pick", Some(object)) => {
                let r = self.facing_receptacle()?;
                if self.state.holding().is_some() {
                    return None;
                }
                let i = self.task.objects.iter().position(|o| o.name == object)?;
                if self.state.objects[i] != Location::In(r) {
                    return None;
                }
                self.state.objects[i] = Location::Gripper;
                Some(ActionOutcome::Pick {
                    object: object.to_string(),
                })
            }
            ("place", Some(receptacle)) => {
                let r = self.facing_receptacle()?;
                if self.task.receptacles[r].name != receptacle {
                    return None;
                }
                let i = self.state.holding()?;
                self.state.objects[i] = Location::In(r);
                Some(ActionOutcome::Place {
                    object: self.task.objects[i].name.clone(),
                    receptacle: receptacle.to_string(),
                })
            }
            _ => None,
        }
    }
}

impl Environment for Housegrid {
    fn id(&self) -> &'static str {
        "housegrid"
    }

    fn action_space(&self) -> &[ActionSpec] {
        &self.actions
    }

    fn reset(&mut self, seed: u64) -> Observation {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.state = Self::initial_state(&self.task, self.width, self.height, &mut self.rng);
        self.update_seen();
        self.ledger.clear();
        self.achieved.clear();
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
        let before = self.correct_count();
        let spec = self.actions[action].clone();
        let outcome = self.apply(&spec);
        self.update_seen();
        self.ledger.tick();
        let mut events = Vec::new();
        if let Some(o) = &outcome {
            let c = caption_transition_housegrid(Some(o));
            if self.achieved.insert(c.clone()) {
                events.push(c);
            }
        }
        let after = self.correct_count();
        let extrinsic_reward = if self.reward_task {
            after as f64 - before as f64
        } else {
            0.0
        };
        self.done = self.ledger.step_count() >= self.cfg.episode_cap;
        StepResult {
            observation: self.observation(),
            effects: events.clone(),
            events,
            action_outcome: outcome,
            done: self.done,
            extrinsic_reward,
        }
    }

    fn truncated(&self) -> bool {
        self.done
    }

    fn observation(&self) -> Observation {
        let local_view = self
            .view_cells()
            .into_iter()
            .map(|row| {
                row.into_iter()
                    .map(|(x, y)| {
                        let mut c = CellView::new(self.kind_at(x, y));
                        if let Some(r) = self.cells.get(&(x, y)) {
                            c.contents = self.contents(*r);
                        }
                        c
                    })
                    .collect()
            })
            .collect();
        let (fx, fy) = self.facing_cell();
        Observation {
            local_view,
            target: Some(self.kind_at(fx, fy).to_string()),
            holding: self.state.holding().map(|i| self.task.objects[i].name.clone()),
            seen: self
                .state
                .seen
                .iter()
                .map(|r| self.task.receptacles[*r].name.clone())
                .collect(),
            pose: Some(Pose {
                x: self.state.x,
                y: self.state.y,
                facing: self.state.facing,
            }),
            ..Default::default()
        }
    }

    fn ledger(&self) -> &EpisodeLedger {
        &self.ledger
    }

    fn ledger_mut(&mut self) -> &mut EpisodeLedger {
        &mut self.ledger
    }

    fn caption_state(&self, obs: &Observation) -> String {
        caption_state_housegrid(obs)
    }

    fn caption_transition(&self, outcome: Option<&ActionOutcome>) -> String {
        caption_transition_housegrid(outcome)
    }

    /// Pose, facing, facing-cell receptacle, and per-object location
    /// (receptacle one-hot, gripper, seen flag).
    fn features(&self, obs: &Observation) -> Vec<f64> {
        let nr = self.task.receptacles.len();
        let mut f = Vec::with_capacity(self.feature_dim());
        let pose = obs.pose.expect("housegrid observations carry a pose");
        f.push(pose.x as f64 / (self.width - 1) as f64);
        f.push(pose.y as f64 / (self.height - 1) as f64);
        let mut facing = [0.0; 4];
        facing[pose.facing.index()] = 1.0;
        f.extend(facing);
        let mut target = vec![0.0; nr + 2];
        match obs.target.as_deref() {
            Some(FLOOR) => target[nr] = 1.0,
            Some(WALL) => target[nr + 1] = 1.0,
            Some(t) => {
                if let Some(r) = self.task.receptacles.iter().position(|r| r.name == t) {
                    target[r] = 1.0;
                }
            }
            None => {}
        }
        f.extend(target);
        let mut where_is: BTreeMap<&str, Option<&str>> = BTreeMap::new();
        for cell in obs.local_view.iter().flatten() {
            for o in &cell.contents {
                where_is.insert(o, Some(&cell.kind));
            }
        }
        for o in &self.task.objects {
            let mut slot = vec![0.0; nr + 2];
            if obs.holding.as_deref() == Some(o.name.as_str()) {
                slot[nr] = 1.0;
            } else if let Some(Some(k)) = where_is.get(o.name.as_str()) {
                if let Some(r) = self.task.receptacles.iter().position(|r| &r.name == k) {
                    slot[r] = 1.0;
                    slot[nr + 1] = 1.0;
                }
            }
            f.extend(slot);
        }
        for r in &self.task.receptacles {
            f.push(if obs.seen.contains(&r.name) { 1.0 } else { 0.0 });
        }
        f
    }

    fn feature_dim(&self) -> usize {
        let nr = self.task.receptacles.len();
        2 + 4 + (nr + 2) + self.task.objects.len() * (nr + 2) + nr
    }

    fn expressible_goals(&self) -> Vec<String> {
        let mut out: Vec<String> = self.task.objects.iter().map(|o| format!("pick {}", o.name)).collect();
        for o in &self.task.objects {
            for r in &self.task.receptacles {
                out.push(format!("place {} in/on {}", o.name, r.name));
            }
        }
        out
    }

    /// Ground-truth goals over what the agent knows: pick a visible object
    /// that sits in a wrong receptacle, or place the held object in a seen
    /// correct receptacle.
    fn oracle_goals(&self, obs: &Observation) -> Vec<String> {
        let mut out = Vec::new();
        match &obs.holding {
            Some(h) => {
                for r in &obs.seen {
                    if self.task.is_correct(h, r) {
                        out.push(format!("place {h} in/on {r}"));
                    }
                }
            }
            None => {
                for cell in obs.local_view.iter().flatten() {
                    for o in &cell.contents {
                        if !self.task.is_correct(o, &cell.kind) {
                            out.push(format!("pick {o}"));
                        }
                    }
                }
            }
        }
        out
    }

    fn unique_achievements(&self) -> usize {
        self.achieved.len()
    }

    fn success_rate(&self) -> Option<f64> {
        Some(success_rate(&self.task, &self.placements()))
    }

    fn set_task(&mut self, task: Option<&str>) -> Result<()> {
        self.reward_task = match task {
            None => false,
            Some("rearrange") => true,
            Some(other) => return Err(Error::config(format!("unknown housegrid task `{other}`"))),
        };
        Ok(())
    }

    fn task_success(&self) -> bool {
        self.reward_task && self.correct_count() == self.task.objects.len()
    }

    fn state_hash(&self) -> u64 {
        let mut h = Fnv::default();
        h.write_i64(self.state.x as i64)
            .write_i64(self.state.y as i64)
            .write(&[self.state.facing.index() as u8]);
        for l in &self.state.objects {
            match l {
                Location::In(r) => h.write_i64(*r as i64),
                Location::Gripper => h.write_i64(-1),
            };
        }
        h.finish()
    }
}
