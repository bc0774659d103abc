//! Action semantics and per-tick world dynamics.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::achievements::{placement_recipes, required_pickaxe, tool_recipes, Item, PlacementKind, Product, Recipe};
use super::world::{Mob, MobKind, Placement, Terrain, WorldState, MAX_METER};
use super::GridcraftConfig;
use crate::env_core::{ActionOutcome, ActionSpec, Direction};

/// Result of applying one action, before world dynamics run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Transition {
    pub outcome: Option<ActionOutcome>,
    /// Achievement-style effects, repeats included.
    pub effects: Vec<&'static str>,
}

impl Transition {
    fn interact(verb: &str, noun: Option<&str>) -> Self {
        Transition {
            outcome: Some(ActionOutcome::Interact {
                verb: verb.to_string(),
                noun: noun.map(str::to_string),
            }),
            effects: Vec::new(),
        }
    }

    fn with(mut self, effect: &'static str) -> Self {
        self.effects.push(effect);
        self
    }
}

fn move_dir(verb: &str) -> Option<Direction> {
    match verb {
        "move left" => Some(Direction::Left),
        "move right" => Some(Direction::Right),
        "move up" => Some(Direction::Up),
        "move down" => Some(Direction::Down),
        _ => None,
    }
}

/// Applies `action` to the world. Nonsense verb/noun pairs are silent no-ops,
/// but still count as an outcome when the agent faces the named object.
pub fn apply_action(
    world: &mut WorldState,
    action: &ActionSpec,
    cfg: &GridcraftConfig,
    rng: &mut ChaCha8Rng,
) -> Transition {
    let verb = action.verb.as_str();
    if let Some(dir) = move_dir(verb) {
        world.agent.facing = dir;
        let (x, y) = world.facing_cell();
        if world.walkable(x, y) {
            world.agent.x = x;
            world.agent.y = y;
            if world.terrain(x, y) == Terrain::Lava {
                world.agent.health = 0;
            }
        }
        return Transition::default();
    }
    match verb {
        "do nothing" => Transition::default(),
        "sleep" => {
            if world.agent.energy < MAX_METER {
                world.agent.energy = MAX_METER;
                world.agent.fatigue_clock = 0;
                Transition::interact("sleep", None).with("wake_up")
            } else {
                Transition::default()
            }
        }
        "place" | "make" => {
            let Some(noun) = action.noun.as_deref() else {
                return Transition::default();
            };
            match creation_recipe(verb, noun) {
                Some(recipe) => create(world, verb, &recipe, cfg),
                None => facing_noop(world, verb, noun),
            }
        }
        "mine" | "eat" | "attack" | "chop" | "drink" => {
            let Some(noun) = action.noun.as_deref() else {
                return Transition::default();
            };
            let (tx, ty) = world.facing_cell();
            if world.visible_kind(tx, ty) != Some(noun) {
                return Transition::default();
            }
            let t = Transition::interact(verb, Some(noun));
            interact(world, verb, noun, (tx, ty), cfg, rng, t)
        }
        _ => Transition::default(),
    }
}

fn facing_noop(world: &WorldState, verb: &str, noun: &str) -> Transition {
    let (tx, ty) = world.facing_cell();
    if world.visible_kind(tx, ty) == Some(noun) {
        Transition::interact(verb, Some(noun))
    } else {
        Transition::default()
    }
}

/// Recipe reachable through `verb noun`. Stations can be built with either verb.
fn creation_recipe(verb: &str, noun: &str) -> Option<Recipe> {
    let placements = placement_recipes().into_iter().find(|r| r.noun == noun);
    match verb {
        "place" => placements,
        "make" => tool_recipes()
            .into_iter()
            .find(|r| r.noun == noun)
            .or_else(|| {
                placements.filter(|r| {
                    matches!(
                        r.product,
                        Product::Placement(PlacementKind::Table | PlacementKind::Furnace)
                    )
                })
            }),
        _ => None,
    }
}

fn can_afford(world: &WorldState, recipe: &Recipe, cfg: &GridcraftConfig) -> bool {
    recipe
        .ingredients
        .iter()
        .all(|(item, n)| world.agent.count(*item) >= *n)
        && recipe
            .stations
            .iter()
            .all(|s| world.nearby(*s, cfg.nearby_radius))
        && recipe.tool_tier.is_none_or(|t| world.agent.count(t) > 0)
}

fn placeable_on(kind: PlacementKind, t: Terrain) -> bool {
    match kind {
        PlacementKind::Plant => t == Terrain::Grass,
        PlacementKind::Stone => matches!(
            t,
            Terrain::Grass | Terrain::Sand | Terrain::Path | Terrain::Water | Terrain::Lava
        ),
        _ => matches!(t, Terrain::Grass | Terrain::Sand | Terrain::Path),
    }
}

fn create(world: &mut WorldState, verb: &str, recipe: &Recipe, cfg: &GridcraftConfig) -> Transition {
    if !can_afford(world, recipe, cfg) {
        return Transition::default();
    }
    match recipe.product {
        Product::Placement(kind) => {
            let (tx, ty) = world.facing_cell();
            let free = world.in_bounds(tx, ty)
                && placeable_on(kind, world.terrain(tx, ty))
                && !world.placements.contains_key(&(tx, ty))
                && world.mob_at(tx, ty).is_none();
            if !free {
                return Transition::default();
            }
            world.placements.insert((tx, ty), Placement { kind, age: 0 });
        }
        Product::Item(item) => {
            if world.agent.count(item) >= 9 {
                return Transition::default();
            }
            world.agent.add(item, 1);
        }
    }
    for (item, n) in &recipe.ingredients {
        world.agent.remove(*item, *n);
    }
    Transition::interact(verb, Some(recipe.noun)).with(recipe.achievement)
}

fn interact(
    world: &mut WorldState,
    verb: &str,
    noun: &str,
    (tx, ty): (i32, i32),
    cfg: &GridcraftConfig,
    rng: &mut ChaCha8Rng,
    t: Transition,
) -> Transition {
    match (verb, noun) {
        ("chop", "tree") => {
            world.agent.add(Item::Wood, 1);
            t.with("collect_wood")
        }
        ("chop", "grass") => {
            if rng.random::<f64>() < cfg.sapling_probability {
                world.agent.add(Item::Sapling, 1);
                t.with("collect_sapling")
            } else {
                t
            }
        }
        ("drink", "water") => {
            world.agent.drink = (world.agent.drink + 1).min(MAX_METER);
            world.agent.thirst_clock = 0;
            t.with("collect_drink")
        }
        ("attack" | "eat", "cow") | ("attack", "zombie" | "skeleton") => {
            let Some(i) = world.mob_at(tx, ty) else {
                return t;
            };
            let damage = hit_damage(world, world.mobs[i].kind, cfg);
            let mob = &mut world.mobs[i];
            mob.health = mob.health.saturating_sub(damage);
            if mob.health > 0 {
                return t;
            }
            let kind = mob.kind;
            world.mobs.remove(i);
            match kind {
                MobKind::Cow => {
                    world.agent.food = (world.agent.food + 6).min(MAX_METER);
                    world.agent.hunger_clock = 0;
                    t.with("eat_cow")
                }
                MobKind::Zombie => t.with("defeat_zombie"),
                MobKind::Skeleton => t.with("defeat_skeleton"),
            }
        }
        ("eat", "plant") => {
            let ripe = world
                .placements
                .get(&(tx, ty))
                .is_some_and(|p| p.age >= cfg.plant_ripe_ticks);
            if ripe {
                world.placements.get_mut(&(tx, ty)).unwrap().age = 0;
                world.agent.food = (world.agent.food + 4).min(MAX_METER);
                world.agent.hunger_clock = 0;
                t.with("eat_plant")
            } else {
                t
            }
        }
        ("mine", material) => {
            let Some(tool) = required_pickaxe(material) else {
                return t;
            };
            if world.agent.count(tool) == 0 {
                return t;
            }
            let (item, effect) = match material {
                "stone" => (Item::Stone, "collect_stone"),
                "coal" => (Item::Coal, "collect_coal"),
                "iron" => (Item::Iron, "collect_iron"),
                _ => (Item::Diamond, "collect_diamond"),
            };
            if world.placements.remove(&(tx, ty)).is_none() {
                world.set_terrain(tx, ty, Terrain::Path);
            }
            world.agent.add(item, 1);
            t.with(effect)
        }
        _ => t,
    }
}

/// Damage of one hit: enough to kill within `hits_to_kill`, more with swords.
fn hit_damage(world: &WorldState, kind: MobKind, cfg: &GridcraftConfig) -> u32 {
    let base = kind.max_health().div_ceil(cfg.hits_to_kill.max(1));
    let bonus = [
        (Item::IronSword, 3),
        (Item::StoneSword, 2),
        (Item::WoodSword, 1),
    ]
    .into_iter()
    .find(|(s, _)| world.agent.count(*s) > 0)
    .map_or(0, |(_, b)| b);
    base + bonus
}

/// Advances meters, plants and mobs by one tick.
pub fn tick_world(world: &mut WorldState, cfg: &GridcraftConfig, rng: &mut ChaCha8Rng) {
    world.tick += 1;
    let m = &cfg.meters;
    let a = &mut world.agent;
    a.hunger_clock += 1;
    if a.hunger_clock >= m.hunger_interval {
        a.hunger_clock = 0;
        a.food = a.food.saturating_sub(1);
    }
    a.thirst_clock += 1;
    if a.thirst_clock >= m.thirst_interval {
        a.thirst_clock = 0;
        a.drink = a.drink.saturating_sub(1);
    }
    a.fatigue_clock += 1;
    if a.fatigue_clock >= m.fatigue_interval {
        a.fatigue_clock = 0;
        a.energy = a.energy.saturating_sub(1);
    }
    if a.food == 0 || a.drink == 0 || a.energy == 0 {
        a.recover_clock = a.recover_clock.min(0) - 1;
        if a.recover_clock <= -m.degen_threshold {
            a.recover_clock = 0;
            a.health = a.health.saturating_sub(1);
        }
    } else {
        a.recover_clock = a.recover_clock.max(0) + 1;
        if a.recover_clock >= m.recover_threshold {
            a.recover_clock = 0;
            a.health = (a.health + 1).min(MAX_METER);
        }
    }
    for p in world.placements.values_mut() {
        if p.kind == PlacementKind::Plant {
            p.age = p.age.saturating_add(1);
        }
    }
    move_mobs(world, cfg, rng);
    respawn(world, cfg, rng);
}

fn move_mobs(world: &mut WorldState, cfg: &GridcraftConfig, rng: &mut ChaCha8Rng) {
    for i in 0..world.mobs.len() {
        let Mob { kind, x, y, .. } = world.mobs[i];
        if world.mobs[i].cooldown > 0 {
            world.mobs[i].cooldown -= 1;
        }
        let (ax, ay) = (world.agent.x, world.agent.y);
        let dist = (ax - x).abs() + (ay - y).abs();
        let hostile = kind != MobKind::Cow;
        if hostile && dist == 1 {
            if world.mobs[i].cooldown == 0 {
                world.mobs[i].cooldown = cfg.mobs.attack_cooldown;
                world.agent.health = world.agent.health.saturating_sub(cfg.mobs.attack_damage);
            }
            continue;
        }
        let step = if kind == MobKind::Zombie
            && dist <= cfg.mobs.chase_radius
            && rng.random::<f64>() < cfg.mobs.chase_probability
        {
            let (dx, dy) = (ax - x, ay - y);
            if dx.abs() > dy.abs() {
                Some((dx.signum(), 0))
            } else {
                Some((0, dy.signum()))
            }
        } else if rng.random::<f64>() < cfg.mobs.wander_probability {
            let d = Direction::ALL[rng.random_range(0..4)];
            Some(d.delta())
        } else {
            None
        };
        if let Some((dx, dy)) = step {
            let (nx, ny) = (x + dx, y + dy);
            if world.mob_can_enter(kind, nx, ny) {
                world.mobs[i].x = nx;
                world.mobs[i].y = ny;
            }
        }
    }
}

fn respawn(world: &mut WorldState, cfg: &GridcraftConfig, rng: &mut ChaCha8Rng) {
    let spawns = [
        (MobKind::Cow, cfg.mobs.cow_respawn, cfg.mobs.max_cows),
        (MobKind::Zombie, cfg.mobs.zombie_respawn, cfg.mobs.max_zombies),
    ];
    for (kind, p, cap) in spawns {
        if rng.random::<f64>() >= p {
            continue;
        }
        if world.mobs.iter().filter(|m| m.kind == kind).count() >= cap {
            continue;
        }
        let x = rng.random_range(0..world.width);
        let y = rng.random_range(0..world.height);
        let far = (x - world.agent.x).abs() > cfg.view_cols as i32 / 2
            || (y - world.agent.y).abs() > cfg.view_rows as i32 / 2;
        if far && world.terrain(x, y) == Terrain::Grass && world.mob_can_enter(kind, x, y) {
            world.mobs.push(Mob {
                kind,
                x,
                y,
                health: kind.max_health(),
                cooldown: 0,
            });
        }
    }
}
