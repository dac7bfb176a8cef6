//! Parsers for the two LLM response stages.
//!
//! Stage 1 answers are headed, numbered lists of entities and
//! angle-bracket relation triples; stage 2 answers map each entity or
//! triple to a completed sentence. Both parsers tolerate surrounding
//! prose and skip lines they cannot interpret, collecting warnings
//! instead of failing.

use indexmap::IndexMap;

use super::{normalize_name, ActionSubgraph, ConceptNode, NodeKind, RelationTriple};
use crate::error::{Error, Result};

#[derive(Clone, Copy, PartialEq, Eq)]
enum Section {
    None,
    Objects,
    SubActions,
    ObjectTriples,
    SubActionTriples,
}

fn detect_header(line: &str) -> Option<Section> {
    let l = line.to_lowercase();
    if !l.contains(':') {
        return None;
    }
    let sub = l.contains("sub-action") || l.contains("sub action");
    if l.contains("relation") || l.contains("triple") {
        Some(if sub { Section::SubActionTriples } else { Section::ObjectTriples })
    } else if l.contains("list") {
        Some(if sub { Section::SubActions } else { Section::Objects })
    } else {
        None
    }
}

/// Strip a leading "3.", "3)", "-", or "*" bullet. Returns None for
/// lines that are not list items.
fn strip_bullet(line: &str) -> Option<&str> {
    let t = line.trim();
    if let Some(rest) = t.strip_prefix('-').or_else(|| t.strip_prefix('*')) {
        return Some(rest.trim());
    }
    let digits = t.chars().take_while(|c| c.is_ascii_digit()).count();
    if digits > 0 {
        let rest = &t[digits..];
        if let Some(rest) = rest.strip_prefix('.').or_else(|| rest.strip_prefix(')')) {
            return Some(rest.trim());
        }
    }
    None
}

/// Split "<head, predicate, tail>" into its three trimmed parts.
fn parse_triple_text(item: &str) -> Option<(String, String, String)> {
    let start = item.find('<')?;
    let end = item[start..].find('>')? + start;
    let inner = &item[start + 1..end];
    let parts: Vec<&str> = inner.split(',').map(str::trim).collect();
    match parts.as_slice() {
        [h, p, t] if !h.is_empty() && !p.is_empty() && !t.is_empty() => {
            Some((h.to_string(), p.to_string(), t.to_string()))
        }
        _ => None,
    }
}

/// Parse a stage-1 response into a subgraph for `action`, returning
/// non-fatal warnings alongside. Triple endpoints that match no listed
/// entity are registered as unlisted concept nodes (typed by the section
/// the triple appeared in) so every triple always resolves.
pub fn parse_stage1_response(
    action: &str,
    text: &str,
) -> Result<(ActionSubgraph, Vec<String>)> {
    let mut section = Section::None;
    let mut objects: Vec<ConceptNode> = Vec::new();
    let mut sub_actions: Vec<ConceptNode> = Vec::new();
    let mut raw_triples: Vec<(Section, String, String, String)> = Vec::new();
    let mut warnings = Vec::new();

    for (lineno, line) in text.lines().enumerate() {
        if let Some(s) = detect_header(line) {
            section = s;
            continue;
        }
        let Some(item) = strip_bullet(line) else { continue };
        if item.is_empty() {
            continue;
        }
        match section {
            Section::Objects | Section::SubActions => {
                let name = item.split(':').next().unwrap_or(item).trim();
                if name.is_empty() {
                    warnings.push(format!("line {}: empty entity name", lineno + 1));
                    continue;
                }
                let (list, kind) = if section == Section::Objects {
                    (&mut objects, NodeKind::Object)
                } else {
                    (&mut sub_actions, NodeKind::SubAction)
                };
                if !list.iter().any(|c| normalize_name(&c.name) == normalize_name(name)) {
                    list.push(ConceptNode {
                        name: name.to_string(),
                        kind,
                        listed: true,
                    });
                }
            }
            Section::ObjectTriples | Section::SubActionTriples | Section::None => {
                match parse_triple_text(item) {
                    Some((h, p, t)) => raw_triples.push((section, h, p, t)),
                    None => {
                        if item.contains('<') {
                            warnings.push(format!(
                                "line {}: dropped malformed triple {item:?}",
                                lineno + 1
                            ));
                        }
                    }
                }
            }
        }
    }

    if objects.is_empty() && sub_actions.is_empty() {
        return Err(Error::parse(format!(
            "stage-1 response for {action:?}: no entities found in {} lines",
            text.lines().count()
        )));
    }

    let mut graph = ActionSubgraph {
        action: action.to_string(),
        objects,
        sub_actions,
        triples: Vec::new(),
    };
    for (section, h, p, t) in raw_triples {
        for end in [&h, &t] {
            if graph.resolve(end).is_none() {
                let kind = if section == Section::SubActionTriples {
                    NodeKind::SubAction
                } else {
                    NodeKind::Object
                };
                warnings.push(format!(
                    "registered unlisted {kind:?} endpoint {end:?}"
                ));
                let node = ConceptNode {
                    name: end.to_string(),
                    kind,
                    listed: false,
                };
                match kind {
                    NodeKind::Object => graph.objects.push(node),
                    NodeKind::SubAction => graph.sub_actions.push(node),
                }
            }
        }
        let kind = graph.classify(&h, &p, &t);
        graph.triples.push(RelationTriple {
            head: h,
            predicate: p,
            tail: t,
            kind,
        });
    }
    Ok((graph, warnings))
}

/// Parse a stage-2 response into a map from normalized entity name or
/// canonical triple key to the completed sentence.
pub fn parse_stage2_response(text: &str) -> Result<IndexMap<String, String>> {
    let mut map = IndexMap::new();
    for line in text.lines() {
        let Some(item) = strip_bullet(line) else { continue };
        let (key, sentence) = if item.starts_with('<') {
            let Some((h, p, t)) = parse_triple_text(item) else { continue };
            let close = item.find('>').expect("checked by parse_triple_text");
            let rest = item[close + 1..].trim_start();
            let Some(sentence) = rest.strip_prefix(':') else { continue };
            (format!("<{h}, {p}, {t}>"), sentence.trim())
        } else {
            let Some((key, sentence)) = item.split_once(':') else { continue };
            (key.trim().to_string(), sentence.trim())
        };
        if sentence.is_empty() {
            continue;
        }
        map.insert(normalize_name(&key), sentence.to_string());
    }
    if map.is_empty() {
        return Err(Error::parse("stage-2 response: no keyed sentences found".to_string()));
    }
    Ok(map)
}
