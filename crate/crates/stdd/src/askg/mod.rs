//! Action semantic knowledge graphs and the text prompts derived from
//! them.
//!
//! A graph for one action class lists the objects and sub-actions an LLM
//! associates with it, plus relation triples over those concepts. Triples
//! between objects yield spatial prompts; triples involving sub-actions
//! (or the action in a sequencing role) yield temporal prompts. Graphs
//! are built from stored LLM responses by default; a live HTTP client is
//! opt-in and caches its responses so any live run becomes a fixture.

mod client;
mod parse;
mod prompts;

pub use client::{build_action_graph, FixtureClient, HttpClient, LlmClient, Stage};
pub use parse::{parse_stage1_response, parse_stage2_response};
pub use prompts::{
    compose_stage1_prompt, compose_stage2_prompt, triples_to_prompts, PromptBank,
};

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Case-insensitive trimmed form used for node identity.
pub fn normalize_name(s: &str) -> String {
    s.trim().to_lowercase()
}

/// File-name slug for an action ("clean and jerk" -> "clean-and-jerk").
pub fn action_slug(action: &str) -> String {
    let mut out = String::new();
    for part in action.split(|c: char| !c.is_alphanumeric()) {
        if part.is_empty() {
            continue;
        }
        if !out.is_empty() {
            out.push('-');
        }
        out.push_str(&part.to_lowercase());
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Object,
    SubAction,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConceptNode {
    pub name: String,
    pub kind: NodeKind,
    /// False for endpoints that appear only inside triples, not in the
    /// response's entity lists.
    pub listed: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TripleKind {
    Spatial,
    Temporal,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationTriple {
    pub head: String,
    pub predicate: String,
    pub tail: String,
    pub kind: TripleKind,
}

impl RelationTriple {
    /// Canonical angle-bracket rendering, used as a lookup key for
    /// stage-2 clauses.
    pub fn key(&self) -> String {
        format!("<{}, {}, {}>", self.head, self.predicate, self.tail)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionSubgraph {
    pub action: String,
    pub objects: Vec<ConceptNode>,
    pub sub_actions: Vec<ConceptNode>,
    pub triples: Vec<RelationTriple>,
}

/// What a triple endpoint name resolves to within one subgraph.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Endpoint {
    Action,
    Object,
    SubAction,
}

/// Predicates that place the action itself in a sequencing role.
const SEQUENCING_PREDICATES: &[&str] = &[
    "starts with",
    "begins with",
    "ends with",
    "precedes",
    "comes before",
    "followed by",
];

impl ActionSubgraph {
    pub fn resolve(&self, name: &str) -> Option<Endpoint> {
        let n = normalize_name(name);
        if n == normalize_name(&self.action) {
            return Some(Endpoint::Action);
        }
        if self.objects.iter().any(|c| normalize_name(&c.name) == n) {
            return Some(Endpoint::Object);
        }
        if self.sub_actions.iter().any(|c| normalize_name(&c.name) == n) {
            return Some(Endpoint::SubAction);
        }
        None
    }

    /// Endpoint-based triple classification: temporal iff either endpoint
    /// is a sub-action, or the head is the action with a sequencing
    /// predicate; otherwise spatial.
    pub fn classify(&self, head: &str, predicate: &str, tail: &str) -> TripleKind {
        let h = self.resolve(head);
        let t = self.resolve(tail);
        if h == Some(Endpoint::SubAction) || t == Some(Endpoint::SubAction) {
            return TripleKind::Temporal;
        }
        if h == Some(Endpoint::Action)
            && SEQUENCING_PREDICATES.contains(&normalize_name(predicate).as_str())
        {
            return TripleKind::Temporal;
        }
        TripleKind::Spatial
    }

    /// Objects that appeared in the response's entity list, in order.
    pub fn listed_objects(&self) -> impl Iterator<Item = &ConceptNode> {
        self.objects.iter().filter(|c| c.listed)
    }
}

/// Machine-readable structural check results; an empty violation list
/// means the subgraph satisfies every invariant.
#[derive(Clone, Debug, Default, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Allowed listed-object counts from the standard stage-1 prompt.
pub const K_MIN: usize = 5;
pub const K_MAX: usize = 10;

pub fn validate_graph(g: &ActionSubgraph) -> ValidationReport {
    let mut v = Vec::new();
    if normalize_name(&g.action).is_empty() {
        v.push("action name is empty".to_string());
    }
    for node in g.objects.iter().chain(&g.sub_actions) {
        if normalize_name(&node.name).is_empty() {
            v.push(format!("{:?} node has an empty name", node.kind));
        }
    }
    let listed = g.listed_objects().count();
    if !(K_MIN..=K_MAX).contains(&listed) {
        v.push(format!(
            "listed object count {listed} outside [{K_MIN}, {K_MAX}]"
        ));
    }
    for t in &g.triples {
        for end in [&t.head, &t.tail] {
            if g.resolve(end).is_none() {
                v.push(format!("triple {} references unlisted concept {end:?}", t.key()));
            }
        }
        if normalize_name(&t.head) == normalize_name(&t.tail) {
            v.push(format!("triple {} has identical endpoints", t.key()));
        }
        let expected = g.classify(&t.head, &t.predicate, &t.tail);
        if t.kind != expected {
            v.push(format!(
                "triple {} classified {:?} but endpoints imply {expected:?}",
                t.key(),
                t.kind
            ));
        }
    }
    ValidationReport { violations: v }
}

/// Write one graph JSON per action into `dir`, atomically (temp file +
/// rename) so a failure never leaves a partial document.
pub fn save_graph(dir: &Path, g: &ActionSubgraph) -> Result<std::path::PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(format!("{}.json", action_slug(&g.action)));
    let tmp = dir.join(format!(".{}.json.tmp", action_slug(&g.action)));
    fs::write(&tmp, serde_json::to_string_pretty(g)?)?;
    fs::rename(&tmp, &path)?;
    Ok(path)
}

pub fn load_graph(path: &Path) -> Result<ActionSubgraph> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn node(name: &str, kind: NodeKind) -> ConceptNode {
        ConceptNode {
            name: name.to_string(),
            kind,
            listed: true,
        }
    }

    fn toy_graph() -> ActionSubgraph {
        ActionSubgraph {
            action: "juggling".to_string(),
            objects: ["ball", "club", "hand", "stage", "audience"]
                .iter()
                .map(|n| node(n, NodeKind::Object))
                .collect(),
            sub_actions: vec![node("tossing the ball", NodeKind::SubAction)],
            triples: vec![
                RelationTriple {
                    head: "ball".to_string(),
                    predicate: "held by".to_string(),
                    tail: "hand".to_string(),
                    kind: TripleKind::Spatial,
                },
                RelationTriple {
                    head: "juggling".to_string(),
                    predicate: "starts with".to_string(),
                    tail: "tossing the ball".to_string(),
                    kind: TripleKind::Temporal,
                },
            ],
        }
    }

    #[test]
    fn clean_graph_validates() {
        assert!(validate_graph(&toy_graph()).is_clean());
    }

    #[test]
    fn unresolved_endpoint_is_one_violation() {
        let mut g = toy_graph();
        g.triples.push(RelationTriple {
            head: "helmet".to_string(),
            predicate: "worn by".to_string(),
            tail: "hand".to_string(),
            kind: TripleKind::Spatial,
        });
        let report = validate_graph(&g);
        assert_eq!(report.violations.len(), 1);
        assert!(report.violations[0].contains("helmet"));
    }

    #[test]
    fn short_object_list_violates_k_range() {
        let mut g = toy_graph();
        g.objects.truncate(3);
        g.triples.clear();
        let report = validate_graph(&g);
        assert_eq!(report.violations.len(), 1);
        assert!(report.violations[0].contains("outside"));
    }

    #[test]
    fn sequencing_and_subaction_triples_are_temporal() {
        let g = toy_graph();
        assert_eq!(
            g.classify("juggling", "starts with", "tossing the ball"),
            TripleKind::Temporal
        );
        assert_eq!(
            g.classify("tossing the ball", "precedes", "tossing the ball again"),
            TripleKind::Temporal
        );
        assert_eq!(g.classify("ball", "held by", "hand"), TripleKind::Spatial);
        // Action as a non-sequencing tail stays spatial.
        assert_eq!(g.classify("club", "used during", "juggling"), TripleKind::Spatial);
    }

    #[test]
    fn slug_flattens_punctuation_and_case() {
        assert_eq!(action_slug("Clean and jerk"), "clean-and-jerk");
        assert_eq!(action_slug("archery"), "archery");
    }

    #[test]
    fn graph_round_trips_through_json() {
        let dir = tempfile::tempdir().unwrap();
        let g = toy_graph();
        let path = save_graph(dir.path(), &g).unwrap();
        assert_eq!(load_graph(&path).unwrap(), g);
    }
}
