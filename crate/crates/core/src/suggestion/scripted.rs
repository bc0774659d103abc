//! Deterministic stand-ins for a language model, served through the same
//! completion interface (and cache) as a real endpoint.

use crate::hashing::Fnv;
use crate::housegrid::RearrangementTask;
use crate::llm_client::{CompletionBackend, CompletionRequest, CompletionResponse, LlmError};

use super::prompts::{pair_of_prompt, scene_of_prompt, PromptTemplate};
use super::{render_goal_list, DEFAULT_MAX_GOALS};

/// Facts read back out of a crafting-world state caption.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Scene {
    pub visible: Vec<String>,
    pub target: Option<String>,
    pub inventory: Vec<String>,
    pub status: Vec<String>,
}

fn split_list(list: &str) -> Vec<String> {
    list.replace(", and ", ", ")
        .replace(" and ", ", ")
        .split(", ")
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

pub fn parse_scene(caption: &str) -> Scene {
    let mut scene = Scene::default();
    for sentence in caption.split(". ").map(|s| s.trim().trim_end_matches('.')) {
        if let Some(l) = sentence.strip_prefix("You see ") {
            scene.visible = split_list(l);
        } else if let Some(t) = sentence.strip_prefix("You are targeting ") {
            scene.target = Some(t.to_string());
        } else if let Some(l) = sentence.strip_prefix("You have in your inventory ") {
            scene.inventory = split_list(l);
        } else if let Some(s) = sentence.strip_prefix("You are ") {
            scene.status.push(s.to_string());
        } else if let Some(s) = sentence.strip_prefix("You have ") {
            scene.status.push(s.to_string());
        }
    }
    scene
}

/// Suggests plausible actions for what the caption mentions, the targeted
/// object first. Like a real model it ignores tool requirements for mining.
#[derive(Clone, Debug)]
pub struct ScriptedCrafterLlm {
    pub template: PromptTemplate,
    pub max_goals: usize,
}

impl Default for ScriptedCrafterLlm {
    fn default() -> Self {
        ScriptedCrafterLlm {
            template: PromptTemplate::crafter_v1(),
            max_goals: DEFAULT_MAX_GOALS,
        }
    }
}

fn object_goals(kind: &str, scene: &Scene) -> Vec<&'static str> {
    let has = |i: &str| scene.inventory.iter().any(|x| x == i);
    match kind {
        "tree" => vec!["chop tree"],
        "grass" => vec!["chop grass"],
        "water" => vec!["drink water"],
        "cow" => vec!["attack cow", "eat cow"],
        "zombie" => vec!["attack zombie"],
        "skeleton" => vec!["attack skeleton"],
        "plant" => vec!["eat plant"],
        "stone" => vec!["mine stone"],
        "coal" => vec!["mine coal"],
        "iron" => vec!["mine iron"],
        "diamond" => vec!["mine diamond"],
        "crafting table" => {
            let mut g = Vec::new();
            if has("wood") {
                g.extend(["make wood pickaxe", "make wood sword"]);
            }
            if has("wood") && has("stone") {
                g.extend(["make stone pickaxe", "make stone sword"]);
            }
            if has("stone") {
                g.push("place furnace");
            }
            g
        }
        "furnace" if has("wood") && has("coal") && has("iron") => {
            vec!["make iron pickaxe", "make iron sword"]
        }
        _ => Vec::new(),
    }
}

impl ScriptedCrafterLlm {
    pub fn suggestions(&self, caption: &str) -> Vec<String> {
        let scene = parse_scene(caption);
        let mut out: Vec<&str> = Vec::new();
        let mut kinds: Vec<&str> = scene.target.iter().map(String::as_str).collect();
        kinds.extend(scene.visible.iter().map(String::as_str));
        for k in kinds {
            out.extend(object_goals(k, &scene));
        }
        let has = |i: &str| scene.inventory.iter().any(|x| x == i);
        let sees = |k: &str| scene.visible.iter().any(|x| x == k);
        if has("wood") && !sees("crafting table") {
            out.push("place crafting table");
        }
        if has("plant") && sees("grass") {
            out.push("place plant");
        }
        if scene.status.iter().any(|s| s == "sleepy") {
            out.push("sleep");
        }
        let mut dedup: Vec<String> = Vec::new();
        for g in out {
            if !dedup.iter().any(|d| d == g) {
                dedup.push(g.to_string());
            }
        }
        dedup.truncate(self.max_goals);
        dedup
    }
}

impl CompletionBackend for ScriptedCrafterLlm {
    fn complete(&mut self, req: &CompletionRequest) -> Result<CompletionResponse, LlmError> {
        let scene = scene_of_prompt(&req.prompt, &self.template);
        Ok(CompletionResponse {
            text: format!("\n{}", render_goal_list(&self.suggestions(scene))),
            ..Default::default()
        })
    }
}

/// Answers yes/no placement questions from the task's ground truth, with
/// configurable accuracy on correct pairs (matches) and on wrong pairs
/// (mismatches). Errors are a fixed function of the pair and `seed`.
#[derive(Clone, Debug)]
pub struct GroundTruthLlm {
    pub task: RearrangementTask,
    pub match_accuracy: f64,
    pub mismatch_accuracy: f64,
    pub seed: u64,
}

impl GroundTruthLlm {
    pub fn new(task: RearrangementTask) -> Self {
        GroundTruthLlm {
            task,
            match_accuracy: 1.0,
            mismatch_accuracy: 1.0,
            seed: 0,
        }
    }

    pub fn answer(&self, object: &str, receptacle: &str) -> bool {
        let mut h = Fnv::default();
        h.write(&self.seed.to_le_bytes())
            .write(object.as_bytes())
            .write(&[0])
            .write(receptacle.as_bytes());
        let u = (h.finish() >> 11) as f64 / (1u64 << 53) as f64;
        if self.task.is_correct(object, receptacle) {
            u < self.match_accuracy
        } else {
            u >= self.mismatch_accuracy
        }
    }

    /// Realised accuracy on (correct pairs, wrong pairs).
    pub fn realised_accuracy(&self) -> (f64, f64) {
        let (mut tp, mut p, mut tn, mut n) = (0, 0, 0, 0);
        for (o, r, correct) in self.task.pairs() {
            let yes = self.answer(o, r);
            if correct {
                p += 1;
                tp += yes as usize;
            } else {
                n += 1;
                tn += (!yes) as usize;
            }
        }
        (tp as f64 / p.max(1) as f64, tn as f64 / n.max(1) as f64)
    }
}

impl CompletionBackend for GroundTruthLlm {
    fn complete(&mut self, req: &CompletionRequest) -> Result<CompletionResponse, LlmError> {
        let (object, receptacle) = pair_of_prompt(&req.prompt)
            .ok_or_else(|| LlmError::InvalidRequest("not a placement question".into()))?;
        let yes = self.answer(object, receptacle);
        let (hi, lo) = (0.9f64.ln(), 0.1f64.ln());
        let mut resp = CompletionResponse {
            text: if yes { " Yes." } else { " No." }.into(),
            ..Default::default()
        };
        if req.logprob_count > 0 {
            resp.first_token_logprobs.insert(" Yes".into(), if yes { hi } else { lo });
            resp.first_token_logprobs.insert(" No".into(), if yes { lo } else { hi });
        }
        Ok(resp)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::housegrid::load_task;
    use crate::suggestion::{build_prompt_crafter, build_prompt_housegrid, decide_from_response, parse_open_ended};

    #[test]
    fn scene_parsing() {
        let s = parse_scene(
            "You see water, grass, cow, and diamond. You are targeting grass. You have in your inventory plant. You are sleepy.",
        );
        assert_eq!(s.visible, vec!["water", "grass", "cow", "diamond"]);
        assert_eq!(s.target.as_deref(), Some("grass"));
        assert_eq!(s.inventory, vec!["plant"]);
        assert_eq!(s.status, vec!["sleepy"]);
    }

    #[test]
    fn mimic_suggests_from_prompt() {
        let mut llm = ScriptedCrafterLlm::default();
        let prompt = build_prompt_crafter(
            "You see grass and tree. You are targeting tree. You have in your inventory wood.",
            &llm.template,
        );
        let resp = llm.complete(&CompletionRequest::new("m", prompt)).unwrap();
        assert_eq!(
            parse_open_ended(&resp.text),
            vec!["chop tree", "chop grass", "place crafting table"]
        );
    }

    #[test]
    fn ground_truth_answers() {
        let task = load_task(1).unwrap();
        let mut llm = GroundTruthLlm::new(task);
        let t = PromptTemplate::housegrid_v1();
        let mut req = CompletionRequest::new("m", build_prompt_housegrid("vase", "shelf", &t));
        req.logprob_count = 2;
        assert!(decide_from_response(&llm.complete(&req).unwrap()).unwrap());
        req.prompt = build_prompt_housegrid("vase", "kitchen sink", &t);
        assert!(!decide_from_response(&llm.complete(&req).unwrap()).unwrap());
        assert_eq!(llm.realised_accuracy(), (1.0, 1.0));
        llm.match_accuracy = 0.5;
        let (tp, tn) = llm.realised_accuracy();
        assert!(tp < 1.0 && tn == 1.0);
    }
}
