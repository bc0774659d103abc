//! Items, recipes and the achievement tree of the crafting world.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

/// Inventory items. Token strings are what captions and goals use.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Item {
    Wood,
    Stone,
    Coal,
    Iron,
    Diamond,
    Sapling,
    WoodPickaxe,
    StonePickaxe,
    IronPickaxe,
    WoodSword,
    StoneSword,
    IronSword,
}

impl Item {
    pub const ALL: [Item; 12] = [
        Item::Wood,
        Item::Stone,
        Item::Coal,
        Item::Iron,
        Item::Diamond,
        Item::Sapling,
        Item::WoodPickaxe,
        Item::StonePickaxe,
        Item::IronPickaxe,
        Item::WoodSword,
        Item::StoneSword,
        Item::IronSword,
    ];

    pub fn token(self) -> &'static str {
        match self {
            Item::Wood => "wood",
            Item::Stone => "stone",
            Item::Coal => "coal",
            Item::Iron => "iron",
            Item::Diamond => "diamond",
            Item::Sapling => "sapling",
            Item::WoodPickaxe => "wood pickaxe",
            Item::StonePickaxe => "stone pickaxe",
            Item::IronPickaxe => "iron pickaxe",
            Item::WoodSword => "wood sword",
            Item::StoneSword => "stone sword",
            Item::IronSword => "iron sword",
        }
    }

    pub fn from_token(t: &str) -> Option<Item> {
        Item::ALL.into_iter().find(|i| i.token() == t)
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Objects the agent can put into the world.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PlacementKind {
    Table,
    Furnace,
    Plant,
    Stone,
}

impl PlacementKind {
    pub fn token(self) -> &'static str {
        match self {
            PlacementKind::Table => "crafting table",
            PlacementKind::Furnace => "furnace",
            PlacementKind::Plant => "plant",
            PlacementKind::Stone => "stone",
        }
    }
}

/// What a recipe yields.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Product {
    Item(Item),
    Placement(PlacementKind),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Recipe {
    /// Noun used in `place`/`make` actions.
    pub noun: &'static str,
    pub product: Product,
    pub ingredients: Vec<(Item, u32)>,
    /// Stations that must be within reach.
    pub stations: Vec<PlacementKind>,
    /// Tool the agent must already own.
    pub tool_tier: Option<Item>,
    /// Achievement unlocked by a successful craft or placement.
    pub achievement: &'static str,
}

/// Placement recipes, reachable through the `place` verb.
pub fn placement_recipes() -> Vec<Recipe> {
    vec![
        Recipe {
            noun: "crafting table",
            product: Product::Placement(PlacementKind::Table),
            ingredients: vec![(Item::Wood, 1)],
            stations: vec![],
            tool_tier: None,
            achievement: "place_table",
        },
        Recipe {
            noun: "furnace",
            product: Product::Placement(PlacementKind::Furnace),
            ingredients: vec![(Item::Stone, 1)],
            stations: vec![PlacementKind::Table],
            tool_tier: None,
            achievement: "place_furnace",
        },
        Recipe {
            noun: "plant",
            product: Product::Placement(PlacementKind::Plant),
            ingredients: vec![(Item::Sapling, 1)],
            stations: vec![],
            tool_tier: None,
            achievement: "place_plant",
        },
        Recipe {
            noun: "stone",
            product: Product::Placement(PlacementKind::Stone),
            ingredients: vec![(Item::Stone, 1)],
            stations: vec![],
            tool_tier: None,
            achievement: "place_stone",
        },
    ]
}

/// Tool recipes, reachable through the `make` verb.
pub fn tool_recipes() -> Vec<Recipe> {
    let tool = |noun, item, ingredients: Vec<(Item, u32)>, stations: Vec<PlacementKind>, ach| Recipe {
        noun,
        product: Product::Item(item),
        ingredients,
        stations,
        tool_tier: None,
        achievement: ach,
    };
    use PlacementKind::{Furnace, Table};
    vec![
        tool("wood pickaxe", Item::WoodPickaxe, vec![(Item::Wood, 1)], vec![Table], "make_wood_pickaxe"),
        tool("wood sword", Item::WoodSword, vec![(Item::Wood, 1)], vec![Table], "make_wood_sword"),
        tool(
            "stone pickaxe",
            Item::StonePickaxe,
            vec![(Item::Wood, 1), (Item::Stone, 1)],
            vec![Table],
            "make_stone_pickaxe",
        ),
        tool(
            "stone sword",
            Item::StoneSword,
            vec![(Item::Wood, 1), (Item::Stone, 1)],
            vec![Table],
            "make_stone_sword",
        ),
        tool(
            "iron pickaxe",
            Item::IronPickaxe,
            vec![(Item::Wood, 1), (Item::Coal, 1), (Item::Iron, 1)],
            vec![Table, Furnace],
            "make_iron_pickaxe",
        ),
        tool(
            "iron sword",
            Item::IronSword,
            vec![(Item::Wood, 1), (Item::Coal, 1), (Item::Iron, 1)],
            vec![Table, Furnace],
            "make_iron_sword",
        ),
    ]
}

/// Which pickaxe a mineable material needs.
pub fn required_pickaxe(material: &str) -> Option<Item> {
    match material {
        "stone" | "coal" => Some(Item::WoodPickaxe),
        "iron" => Some(Item::StonePickaxe),
        "diamond" => Some(Item::IronPickaxe),
        _ => None,
    }
}

pub const ACHIEVEMENTS: [&str; 22] = [
    "collect_wood",
    "place_table",
    "eat_cow",
    "collect_sapling",
    "collect_drink",
    "collect_stone",
    "place_stone",
    "eat_plant",
    "defeat_zombie",
    "defeat_skeleton",
    "make_wood_pickaxe",
    "make_wood_sword",
    "place_plant",
    "place_furnace",
    "collect_coal",
    "collect_iron",
    "make_stone_pickaxe",
    "make_stone_sword",
    "collect_diamond",
    "make_iron_pickaxe",
    "make_iron_sword",
    "wake_up",
];

/// Achievements and their prerequisites.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AchievementTree {
    pub achievements: BTreeSet<&'static str>,
    pub prerequisites: BTreeMap<&'static str, BTreeSet<&'static str>>,
}

impl Default for AchievementTree {
    fn default() -> Self {
        let edges: [(&str, &[&str]); 22] = [
            ("collect_wood", &[]),
            ("place_table", &["collect_wood"]),
            ("eat_cow", &[]),
            ("collect_sapling", &[]),
            ("collect_drink", &[]),
            ("collect_stone", &["make_wood_pickaxe"]),
            ("place_stone", &["collect_stone"]),
            ("eat_plant", &["place_plant"]),
            ("defeat_zombie", &[]),
            ("defeat_skeleton", &[]),
            ("make_wood_pickaxe", &["place_table"]),
            ("make_wood_sword", &["place_table"]),
            ("place_plant", &["collect_sapling"]),
            ("place_furnace", &["collect_stone", "place_table"]),
            ("collect_coal", &["make_wood_pickaxe"]),
            ("collect_iron", &["make_stone_pickaxe"]),
            ("make_stone_pickaxe", &["collect_stone"]),
            ("make_stone_sword", &["collect_stone"]),
            ("collect_diamond", &["make_iron_pickaxe"]),
            ("make_iron_pickaxe", &["place_furnace", "collect_coal", "collect_iron"]),
            ("make_iron_sword", &["place_furnace", "collect_coal", "collect_iron"]),
            ("wake_up", &[]),
        ];
        let mut prerequisites = BTreeMap::new();
        for (a, pre) in edges {
            let a: &'static str = ACHIEVEMENTS.iter().find(|x| **x == a).unwrap();
            let set = pre
                .iter()
                .map(|p| *ACHIEVEMENTS.iter().find(|x| *x == p).unwrap())
                .collect();
            prerequisites.insert(a, set);
        }
        AchievementTree {
            achievements: ACHIEVEMENTS.iter().copied().collect(),
            prerequisites,
        }
    }
}

impl AchievementTree {
    /// Kahn's algorithm; returns `None` if the prerequisite graph has a cycle.
    pub fn topological_order(&self) -> Option<Vec<&'static str>> {
        let mut indegree: BTreeMap<&str, usize> = self
            .achievements
            .iter()
            .map(|a| (*a, self.prerequisites.get(a).map_or(0, BTreeSet::len)))
            .collect();
        let mut ready: Vec<&'static str> = indegree
            .iter()
            .filter(|(_, d)| **d == 0)
            .map(|(a, _)| *a)
            .collect();
        let mut order = Vec::new();
        while let Some(a) = ready.pop() {
            order.push(a);
            for (b, pre) in &self.prerequisites {
                if pre.contains(a) {
                    let d = indegree.get_mut(b).unwrap();
                    *d -= 1;
                    if *d == 0 {
                        ready.push(b);
                    }
                }
            }
        }
        (order.len() == self.achievements.len()).then_some(order)
    }

    /// Whether `emitted` respects prerequisite order, considering only
    /// prerequisites that were themselves emitted.
    pub fn respects_order(&self, emitted: &[String]) -> bool {
        let position: BTreeMap<&str, usize> = emitted
            .iter()
            .enumerate()
            .map(|(i, e)| (e.as_str(), i))
            .collect();
        emitted.iter().enumerate().all(|(i, e)| {
            self.prerequisites.get(e.as_str()).is_none_or(|pre| {
                pre.iter()
                    .all(|p| position.get(p).is_none_or(|&j| j < i))
            })
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tree_is_acyclic_and_complete() {
        let tree = AchievementTree::default();
        assert_eq!(tree.achievements.len(), 22);
        let order = tree.topological_order().expect("acyclic");
        assert_eq!(order.len(), 22);
    }

    #[test]
    fn table_needs_one_wood() {
        let table = placement_recipes()
            .into_iter()
            .find(|r| r.noun == "crafting table")
            .unwrap();
        assert_eq!(table.ingredients, vec![(Item::Wood, 1)]);
    }

    #[test]
    fn order_check() {
        let tree = AchievementTree::default();
        let ok = vec!["collect_wood".to_string(), "place_table".to_string()];
        let bad = vec!["place_table".to_string(), "collect_wood".to_string()];
        assert!(tree.respects_order(&ok));
        assert!(!tree.respects_order(&bad));
        assert!(tree.respects_order(&["place_table".to_string()]));
    }
}
