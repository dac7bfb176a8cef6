//! Prompt composition for the two LLM stages and derivation of the
//! spatial/temporal text prompt banks.

use indexmap::IndexMap;

use serde_json::json;

use super::{normalize_name, ActionSubgraph, TripleKind, K_MAX, K_MIN};
use crate::error::{Error, Result};

/// Stage-1 prompt: ask for the entity lists and relation triples of one
/// action, structured as instruction, one-shot context, and input text.
pub fn compose_stage1_prompt(action: &str, k: usize) -> Result<String> {
    if normalize_name(action).is_empty() {
        return Err(Error::validation("action name is empty".to_string()));
    }
    if !(K_MIN..=K_MAX).contains(&k) {
        return Err(Error::validation(format!(
            "entity count {k} outside [{K_MIN}, {K_MAX}]"
        )));
    }
    Ok(format!(
        "Instruction:\n\
         You are a commonsense knowledge base for human actions. Answer in YAML format.\n\
         Q1. Return the object entity list containing Top {k} most relevant objects for the given action, \
         and the sub-action list describing its temporal steps.\n\
         Q2. Find the proper predicate names that describe the relationships between the entities, \
         and return relation triples in the form <head, predicate, tail> under the headers \
         \"Object relation triples:\" and \"Sub-action relation triples:\".\n\
         \n\
         Context:\n\
         user: abseiling\n\
         assistant:\n\
         Object list:\n\
         1. rope\n\
         2. harness\n\
         3. carabiner\n\
         4. helmet\n\
         5. cliff\n\
         Sub-action list:\n\
         1. anchoring the rope\n\
         2. descending the cliff\n\
         Object relation triples:\n\
         1. <rope, attached to, harness>\n\
         Sub-action relation triples:\n\
         1. <abseiling, starts with, anchoring the rope>\n\
         \n\
         Input:\n\
         {action}\n"
    ))
}

/// Stage-2 prompt: ask for one completed sentence per entity and triple,
/// each starting from the hard template for the action.
pub fn compose_stage2_prompt(g: &ActionSubgraph) -> Result<String> {
    if g.triples.is_empty() {
        return Err(Error::validation(format!(
            "subgraph for {:?} has no relation triples to complete",
            g.action
        )));
    }
    let mut items = String::new();
    let mut n = 0;
    for obj in g.listed_objects() {
        n += 1;
        items.push_str(&format!("{n}. {}\n", obj.name));
    }
    for t in &g.triples {
        n += 1;
        items.push_str(&format!("{n}. {}\n", t.key()));
    }
    Ok(format!(
        "Instruction:\n\
         You are a commonsense knowledge base for human actions. \
         Try to complete the whole sentence according to each entity or relation triple below, \
         keeping the main sentence and clause semantically consistent. \
         Every sentence must begin with \"This is a video of {action},\". \
         Answer one numbered line per item as \"item: sentence\".\n\
         \n\
         Context:\n\
         user: This is an example of abseiling. 1. <rope, attached to, harness>\n\
         assistant: 1. <rope, attached to, harness>: This is a video of abseiling, where a rope is attached to a harness.\n\
         \n\
         Input:\n\
         This is an example of {action}.\n\
         {items}",
        action = g.action,
    ))
}

/// The spatial and temporal prompt strings for one action class.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PromptBank {
    pub action: String,
    pub spatial: Vec<String>,
    pub temporal: Vec<String>,
}

impl PromptBank {
    /// Ordered union: spatial prompts first, then temporal.
    pub fn combined(&self) -> Vec<&str> {
        self.spatial
            .iter()
            .chain(&self.temporal)
            .map(String::as_str)
            .collect()
    }

    pub fn n_st(&self) -> usize {
        self.spatial.len() + self.temporal.len()
    }

    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "action": self.action,
            "spatial": self.spatial,
            "temporal": self.temporal,
        })
    }
}

/// Assemble the prompt bank: one spatial prompt per listed object, one
/// prompt per triple routed by its kind, every sentence taken from the
/// stage-2 responses when present and well-formed, otherwise from a
/// deterministic template. An empty bank degrades to the hard template
/// alone.
pub fn triples_to_prompts(
    g: &ActionSubgraph,
    stage2: &IndexMap<String, String>,
) -> PromptBank {
    let prefix = format!("This is a video of {},", g.action);
    let lookup = |key: &str, fallback: String| -> String {
        match stage2.get(&normalize_name(key)) {
            Some(s) if s.starts_with(&prefix) => s.clone(),
            _ => fallback,
        }
    };
    let mut spatial = Vec::new();
    let mut temporal = Vec::new();
    for obj in g.listed_objects() {
        spatial.push(lookup(
            &obj.name,
            format!("This is a video of {}, which involves {}.", g.action, obj.name),
        ));
    }
    for t in &g.triples {
        let sentence = lookup(
            &t.key(),
            format!(
                "This is a video of {}, where {} {} {}.",
                g.action, t.head, t.predicate, t.tail
            ),
        );
        match t.kind {
            TripleKind::Spatial => spatial.push(sentence),
            TripleKind::Temporal => temporal.push(sentence),
        }
    }
    if spatial.is_empty() && temporal.is_empty() {
        spatial.push(format!("This is a video of {}.", g.action));
    }
    PromptBank {
        action: g.action.clone(),
        spatial,
        temporal,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::askg::{ConceptNode, NodeKind, RelationTriple};

    #[test]
    fn stage1_prompt_contains_the_literal_question() {
        let p = compose_stage1_prompt("abseiling", 7).unwrap();
        assert!(p.contains("Return the object entity list containing Top 7 most relevant objects"));
        let q = compose_stage1_prompt("archery", 5).unwrap();
        assert!(q.contains("Top 5 most relevant"));
        assert!(q.ends_with("archery\n"));
        assert!(compose_stage1_prompt("", 5).is_err());
        assert!(compose_stage1_prompt("archery", 4).is_err());
        assert!(compose_stage1_prompt("archery", 11).is_err());
    }

    fn tiny_graph() -> ActionSubgraph {
        ActionSubgraph {
            action: "archery".to_string(),
            objects: vec![ConceptNode {
                name: "bow".to_string(),
                kind: NodeKind::Object,
                listed: true,
            }],
            sub_actions: vec![],
            triples: vec![RelationTriple {
                head: "bow".to_string(),
                predicate: "used to shoot".to_string(),
                tail: "arrow".to_string(),
                kind: TripleKind::Spatial,
            }],
        }
    }

    #[test]
    fn stage2_prompt_enumerates_and_requires_triples() {
        let g = tiny_graph();
        let p = compose_stage2_prompt(&g).unwrap();
        assert!(p.contains("This is an example of archery."));
        assert!(p.contains("<bow, used to shoot, arrow>"));
        let mut empty = g;
        empty.triples.clear();
        assert!(compose_stage2_prompt(&empty).is_err());
    }

    #[test]
    fn bank_uses_responses_with_template_fallback() {
        let g = tiny_graph();
        let mut stage2 = IndexMap::new();
        stage2.insert(
            "<bow, used to shoot, arrow>".to_string(),
            "This is a video of archery, where a bow is used to shoot an arrow.".to_string(),
        );
        let bank = triples_to_prompts(&g, &stage2);
        assert_eq!(
            bank.spatial,
            [
                // No stage-2 sentence for the object: deterministic fallback.
                "This is a video of archery, which involves bow.",
                "This is a video of archery, where a bow is used to shoot an arrow.",
            ]
        );
        assert!(bank.temporal.is_empty());
    }

    #[test]
    fn garbled_sentence_falls_back_and_empty_graph_degrades() {
        let mut g = tiny_graph();
        let mut stage2 = IndexMap::new();
        stage2.insert(
            "<bow, used to shoot, arrow>".to_string(),
            "A bow shoots an arrow.".to_string(), // missing hard template
        );
        let bank = triples_to_prompts(&g, &stage2);
        assert_eq!(
            bank.spatial[1],
            "This is a video of archery, where bow used to shoot arrow."
        );
        g.objects.clear();
        g.triples.clear();
        let empty = triples_to_prompts(&g, &stage2);
        assert_eq!(empty.spatial, ["This is a video of archery."]);
        assert_eq!(empty.n_st(), 1);
    }
}
