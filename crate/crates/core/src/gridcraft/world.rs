//! World state and procedural generation.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::achievements::{Item, PlacementKind};
use super::GridcraftConfig;
use crate::env_core::Direction;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Terrain {
    Water,
    Grass,
    Sand,
    Stone,
    Path,
    Tree,
    Lava,
    Coal,
    Iron,
    Diamond,
}

impl Terrain {
    pub fn token(self) -> &'static str {
        match self {
            Terrain::Water => "water",
            Terrain::Grass => "grass",
            Terrain::Sand => "sand",
            Terrain::Stone => "stone",
            Terrain::Path => "path",
            Terrain::Tree => "tree",
            Terrain::Lava => "lava",
            Terrain::Coal => "coal",
            Terrain::Iron => "iron",
            Terrain::Diamond => "diamond",
        }
    }

    pub fn walkable(self) -> bool {
        matches!(
            self,
            Terrain::Grass | Terrain::Sand | Terrain::Path | Terrain::Lava
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MobKind {
    Cow,
    Zombie,
    Skeleton,
}

impl MobKind {
    pub fn token(self) -> &'static str {
        match self {
            MobKind::Cow => "cow",
            MobKind::Zombie => "zombie",
            MobKind::Skeleton => "skeleton",
        }
    }

    pub fn max_health(self) -> u32 {
        match self {
            MobKind::Cow => 3,
            MobKind::Zombie => 5,
            MobKind::Skeleton => 3,
        }
    }

    fn can_stand(self, t: Terrain) -> bool {
        match self {
            MobKind::Skeleton => t == Terrain::Path,
            _ => matches!(t, Terrain::Grass | Terrain::Sand | Terrain::Path),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mob {
    pub kind: MobKind,
    pub x: i32,
    pub y: i32,
    pub health: u32,
    pub cooldown: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Placement {
    pub kind: PlacementKind,
    /// Ticks since placement (plants ripen with age).
    pub age: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentState {
    pub x: i32,
    pub y: i32,
    pub facing: Direction,
    pub health: u8,
    pub food: u8,
    pub drink: u8,
    pub energy: u8,
    pub inventory: [u32; 12],
    pub hunger_clock: u32,
    pub thirst_clock: u32,
    pub fatigue_clock: u32,
    pub recover_clock: i32,
}

impl AgentState {
    pub fn count(&self, item: Item) -> u32 {
        self.inventory[item.index()]
    }

    pub fn add(&mut self, item: Item, n: u32) {
        let slot = &mut self.inventory[item.index()];
        *slot = (*slot + n).min(9);
    }

    pub fn remove(&mut self, item: Item, n: u32) {
        let slot = &mut self.inventory[item.index()];
        *slot = slot.saturating_sub(n);
    }
}

pub const MAX_METER: u8 = 9;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorldState {
    pub width: i32,
    pub height: i32,
    pub tiles: Vec<Terrain>,
    pub mobs: Vec<Mob>,
    /// Keyed by `(x, y)`; at most one placement per cell.
    pub placements: BTreeMap<(i32, i32), Placement>,
    pub agent: AgentState,
    pub tick: u64,
}

impl WorldState {
    pub fn in_bounds(&self, x: i32, y: i32) -> bool {
        x >= 0 && y >= 0 && x < self.width && y < self.height
    }

    pub fn terrain(&self, x: i32, y: i32) -> Terrain {
        self.tiles[(y * self.width + x) as usize]
    }

    pub fn set_terrain(&mut self, x: i32, y: i32, t: Terrain) {
        let w = self.width;
        self.tiles[(y * w + x) as usize] = t;
    }

    pub fn mob_at(&self, x: i32, y: i32) -> Option<usize> {
        self.mobs.iter().position(|m| m.x == x && m.y == y)
    }

    /// Token of what is visible at a cell: mob, then placement, then terrain.
    pub fn visible_kind(&self, x: i32, y: i32) -> Option<&'static str> {
        if !self.in_bounds(x, y) {
            return None;
        }
        if let Some(i) = self.mob_at(x, y) {
            return Some(self.mobs[i].kind.token());
        }
        if let Some(p) = self.placements.get(&(x, y)) {
            return Some(p.kind.token());
        }
        Some(self.terrain(x, y).token())
    }

    pub fn facing_cell(&self) -> (i32, i32) {
        let (dx, dy) = self.agent.facing.delta();
        (self.agent.x + dx, self.agent.y + dy)
    }

    /// Cell free for the agent to walk onto.
    pub fn walkable(&self, x: i32, y: i32) -> bool {
        self.in_bounds(x, y)
            && self.terrain(x, y).walkable()
            && !self.placements.contains_key(&(x, y))
            && self.mob_at(x, y).is_none()
    }

    pub fn mob_can_enter(&self, kind: MobKind, x: i32, y: i32) -> bool {
        self.in_bounds(x, y)
            && kind.can_stand(self.terrain(x, y))
            && !self.placements.contains_key(&(x, y))
            && self.mob_at(x, y).is_none()
            && !(x == self.agent.x && y == self.agent.y)
    }

    /// Whether a placement of `kind` lies within Chebyshev `radius` of the agent.
    pub fn nearby(&self, kind: PlacementKind, radius: i32) -> bool {
        let (ax, ay) = (self.agent.x, self.agent.y);
        self.placements
            .iter()
            .any(|((x, y), p)| p.kind == kind && (x - ax).abs() <= radius && (y - ay).abs() <= radius)
    }

    pub fn count_terrain(&self, t: Terrain) -> usize {
        self.tiles.iter().filter(|x| **x == t).count()
    }

    pub fn plant_positions(&self) -> Vec<(i32, i32)> {
        self.placements
            .iter()
            .filter(|(_, p)| p.kind == PlacementKind::Plant)
            .map(|(pos, _)| *pos)
            .collect()
    }
}

/// Smooth value noise in `[0, 1]` on a `width × height` grid.
fn value_noise(rng: &mut ChaCha8Rng, width: usize, height: usize, cell: usize) -> Vec<f64> {
    let gw = width / cell + 2;
    let gh = height / cell + 2;
    let lattice: Vec<f64> = (0..gw * gh).map(|_| rng.random::<f64>()).collect();
    let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
    let mut out = Vec::with_capacity(width * height);
    for y in 0..height {
        for x in 0..width {
            let fx = x as f64 / cell as f64;
            let fy = y as f64 / cell as f64;
            let (ix, iy) = (fx.floor() as usize, fy.floor() as usize);
            let (tx, ty) = (smooth(fx - ix as f64), smooth(fy - iy as f64));
            let at = |i: usize, j: usize| lattice[j * gw + i];
            let top = at(ix, iy) * (1.0 - tx) + at(ix + 1, iy) * tx;
            let bottom = at(ix, iy + 1) * (1.0 - tx) + at(ix + 1, iy + 1) * tx;
            out.push(top * (1.0 - ty) + bottom * ty);
        }
    }
    out
}

fn blend(a: &[f64], b: &[f64], wa: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| wa * x + (1.0 - wa) * y).collect()
}

/// Generates a world deterministically from `seed`.
pub fn generate_world(seed: u64, cfg: &GridcraftConfig) -> WorldState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (cfg.width, cfg.height);
    let water = {
        let a = value_noise(&mut rng, w, h, 9);
        let b = value_noise(&mut rng, w, h, 3);
        blend(&a, &b, 0.75)
    };
    let mountain = {
        let a = value_noise(&mut rng, w, h, 10);
        let b = value_noise(&mut rng, w, h, 4);
        blend(&a, &b, 0.75)
    };
    let tunnels = value_noise(&mut rng, w, h, 3);
    let forest = value_noise(&mut rng, w, h, 5);

    let (sx, sy) = ((w / 2) as i32, (h / 2) as i32);
    let d = &cfg.density;
    let mut tiles = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let dist = (((x as i32 - sx).pow(2) + (y as i32 - sy).pow(2)) as f64).sqrt();
            // Keep the spawn area open.
            let spawn_bias = (0.25 - dist / 24.0).max(0.0);
            let wv = water[i] - spawn_bias;
            let mv = mountain[i] - spawn_bias;
            let t = if mv > 0.6 {
                if tunnels[i] > 0.68 {
                    if mv > 0.66 && rng.random::<f64>() < d.lava {
                        Terrain::Lava
                    } else {
                        Terrain::Path
                    }
                } else if mv > 0.7 && rng.random::<f64>() < d.diamond {
                    Terrain::Diamond
                } else if mv > 0.65 && rng.random::<f64>() < d.iron {
                    Terrain::Iron
                } else if rng.random::<f64>() < d.coal {
                    Terrain::Coal
                } else {
                    Terrain::Stone
                }
            } else if wv > 0.66 {
                Terrain::Water
            } else if wv > 0.61 {
                Terrain::Sand
            } else if (forest[i] > 0.58 && rng.random::<f64>() < d.forest_tree)
                || rng.random::<f64>() < d.scattered_tree
            {
                Terrain::Tree
            } else {
                Terrain::Grass
            };
            tiles.push(t);
        }
    }

    let mut world = WorldState {
        width: w as i32,
        height: h as i32,
        tiles,
        mobs: Vec::new(),
        placements: BTreeMap::new(),
        agent: AgentState {
            x: sx,
            y: sy,
            facing: Direction::Down,
            health: MAX_METER,
            food: MAX_METER,
            drink: MAX_METER,
            energy: MAX_METER,
            inventory: [0; 12],
            hunger_clock: 0,
            thirst_clock: 0,
            fatigue_clock: 0,
            recover_clock: 0,
        },
        tick: 0,
    };
    for dy in -1..=1 {
        for dx in -1..=1 {
            world.set_terrain(sx + dx, sy + dy, Terrain::Grass);
        }
    }
    if world.count_terrain(Terrain::Stone) < 8 {
        add_stone_patch(&mut world, &mut rng);
    }
    ensure_present(&mut world, &mut rng, Terrain::Tree, &[Terrain::Grass], Some(6));
    ensure_present(&mut world, &mut rng, Terrain::Water, &[Terrain::Grass, Terrain::Sand], None);
    for t in [Terrain::Coal, Terrain::Iron, Terrain::Diamond] {
        ensure_present(&mut world, &mut rng, t, &[Terrain::Stone], None);
    }

    for y in 0..world.height {
        for x in 0..world.width {
            let dist = (x - sx).abs().max((y - sy).abs());
            let t = world.terrain(x, y);
            let roll = rng.random::<f64>();
            let kind = match t {
                Terrain::Grass if dist >= 3 && roll < d.cow => Some(MobKind::Cow),
                Terrain::Grass if dist >= 6 && roll > 1.0 - d.zombie => Some(MobKind::Zombie),
                Terrain::Path if roll < d.skeleton => Some(MobKind::Skeleton),
                _ => None,
            };
            if let Some(kind) = kind {
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
    world
}

/// Turns a 3×3 block away from spawn into stone.
fn add_stone_patch(world: &mut WorldState, rng: &mut ChaCha8Rng) {
    let (sx, sy) = (world.width / 2, world.height / 2);
    let centers: Vec<(i32, i32)> = (1..world.height - 1)
        .flat_map(|y| (1..world.width - 1).map(move |x| (x, y)))
        .filter(|&(x, y)| (x - sx).abs().max((y - sy).abs()) >= 4)
        .collect();
    let (cx, cy) = centers[rng.random_range(0..centers.len())];
    for dy in -1..=1 {
        for dx in -1..=1 {
            world.set_terrain(cx + dx, cy + dy, Terrain::Stone);
        }
    }
}

/// Converts one random cell of an allowed kind into `t` when `t` is absent
/// (optionally within `radius` of spawn).
fn ensure_present(
    world: &mut WorldState,
    rng: &mut ChaCha8Rng,
    t: Terrain,
    from: &[Terrain],
    radius: Option<i32>,
) {
    let (sx, sy) = (world.width / 2, world.height / 2);
    let within = |x: i32, y: i32| {
        radius.is_none_or(|r| (x - sx).abs() <= r && (y - sy).abs() <= r)
            && ((x - sx).abs() > 1 || (y - sy).abs() > 1)
    };
    let present = (0..world.height)
        .flat_map(|y| (0..world.width).map(move |x| (x, y)))
        .any(|(x, y)| world.terrain(x, y) == t && within(x, y));
    if present {
        return;
    }
    let candidates: Vec<(i32, i32)> = (0..world.height)
        .flat_map(|y| (0..world.width).map(move |x| (x, y)))
        .filter(|&(x, y)| from.contains(&world.terrain(x, y)) && within(x, y))
        .collect();
    if candidates.is_empty() {
        return;
    }
    let (x, y) = candidates[rng.random_range(0..candidates.len())];
    world.set_terrain(x, y, t);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_per_seed() {
        let cfg = GridcraftConfig::desk();
        assert_eq!(generate_world(5, &cfg), generate_world(5, &cfg));
    }

    #[test]
    fn seeds_differ() {
        let cfg = GridcraftConfig::desk();
        let a = generate_world(1, &cfg);
        let b = generate_world(2, &cfg);
        let hamming = a.tiles.iter().zip(&b.tiles).filter(|(x, y)| x != y).count();
        assert!(hamming > 0);
    }

    #[test]
    fn every_seed_has_trees_and_resources() {
        for cfg in [GridcraftConfig::desk(), GridcraftConfig::default()] {
            for seed in 0..100 {
                let w = generate_world(seed, &cfg);
                for t in [Terrain::Tree, Terrain::Water, Terrain::Stone, Terrain::Coal, Terrain::Iron, Terrain::Diamond] {
                    assert!(w.count_terrain(t) > 0, "seed {seed} lacks {t:?}");
                }
                assert_eq!(w.terrain(w.agent.x, w.agent.y), Terrain::Grass);
            }
        }
    }
}
