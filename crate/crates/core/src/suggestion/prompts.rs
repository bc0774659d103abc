//! Versioned prompt templates and their rendering.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub version: String,
    pub preamble: String,
    pub few_shot_examples: String,
    pub query_suffix: String,
}

fn asset(text: &str) -> String {
    text.strip_suffix('\n').unwrap_or(text).to_string()
}

impl PromptTemplate {
    pub fn crafter_v1() -> Self {
        PromptTemplate {
            version: "crafter.v1".into(),
            preamble: asset(include_str!("../../assets/prompts/crafter.v1/preamble.txt")),
            few_shot_examples: asset(include_str!("../../assets/prompts/crafter.v1/few_shot.txt")),
            query_suffix: asset(include_str!("../../assets/prompts/crafter.v1/query_suffix.txt")),
        }
    }

    pub fn housegrid_v1() -> Self {
        PromptTemplate {
            version: "housegrid.v1".into(),
            preamble: asset(include_str!("../../assets/prompts/housegrid.v1/preamble.txt")),
            few_shot_examples: asset(include_str!("../../assets/prompts/housegrid.v1/few_shot.txt")),
            query_suffix: asset(include_str!("../../assets/prompts/housegrid.v1/query_suffix.txt")),
        }
    }

    /// Reads `preamble.txt`, `few_shot.txt` and `query_suffix.txt` from `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let read = |name: &str| {
            let p = dir.join(name);
            std::fs::read_to_string(&p).map(|t| asset(&t)).map_err(|e| Error::io(p, e))
        };
        Ok(PromptTemplate {
            version: dir
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default(),
            preamble: read("preamble.txt")?,
            few_shot_examples: read("few_shot.txt")?,
            query_suffix: read("query_suffix.txt")?,
        })
    }
}

/// Open-ended prompt: instructions, worked examples, then the current scene.
pub fn build_prompt_crafter(state_caption: &str, template: &PromptTemplate) -> String {
    let scene = state_caption.trim();
    let query = if scene.is_empty() {
        template.query_suffix.clone()
    } else {
        format!("{scene} {}", template.query_suffix)
    };
    format!("{}\n\n{}\n\n{query}", template.preamble, template.few_shot_examples)
}

/// Yes/no prompt asking whether `object` belongs in `receptacle`.
pub fn build_prompt_housegrid(object: &str, receptacle: &str, template: &PromptTemplate) -> String {
    let query = template
        .query_suffix
        .replace("{object}", object)
        .replace("{receptacle}", receptacle);
    format!("{}\n\n{}\n{query}", template.preamble, template.few_shot_examples)
}

/// Scene caption of a rendered open-ended prompt (inverse of the last block).
pub fn scene_of_prompt<'a>(prompt: &'a str, template: &PromptTemplate) -> &'a str {
    let last = prompt.rsplit("\n\n").next().unwrap_or(prompt);
    last.strip_suffix(template.query_suffix.as_str())
        .unwrap_or(last)
        .trim()
}

/// `(object, receptacle)` of a rendered yes/no prompt.
pub fn pair_of_prompt(prompt: &str) -> Option<(&str, &str)> {
    let last = prompt.lines().last()?;
    let rest = last.strip_prefix("Should you store a ")?.strip_suffix(':')?;
    let (object, receptacle) = rest.split_once(" in/on the ")?;
    Some((object, receptacle))
}
