//! Transport for LLM responses: stored fixtures or a live chat endpoint.

use std::fs;
use std::path::PathBuf;

use indexmap::IndexMap;

use super::{
    action_slug, compose_stage1_prompt, compose_stage2_prompt, parse_stage1_response,
    parse_stage2_response, ActionSubgraph,
};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    One,
    Two,
}

impl Stage {
    fn file_suffix(&self) -> &'static str {
        match self {
            Stage::One => "stage1",
            Stage::Two => "stage2",
        }
    }
}

/// Source of raw LLM response text for (stage, action) pairs.
pub trait LlmClient {
    fn complete(&self, stage: Stage, action: &str, prompt: &str) -> Result<String>;
}

/// Deterministic client reading `<slug>.<stage>.txt` files from a
/// directory; used for all tests and the shipped appendix corpus.
pub struct FixtureClient {
    dir: PathBuf,
}

impl FixtureClient {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        FixtureClient { dir: dir.into() }
    }

    fn path_for(&self, stage: Stage, action: &str) -> PathBuf {
        self.dir
            .join(format!("{}.{}.txt", action_slug(action), stage.file_suffix()))
    }
}

impl LlmClient for FixtureClient {
    fn complete(&self, stage: Stage, action: &str, _prompt: &str) -> Result<String> {
        let path = self.path_for(stage, action);
        fs::read_to_string(&path).map_err(|e| {
            Error::Io(std::io::Error::new(
                e.kind(),
                format!("{}: {e}", path.display()),
            ))
        })
    }
}

/// Live chat-completion client. Responses are cached as fixture files so
/// every live run is replayable offline afterwards.
pub struct HttpClient {
    endpoint: String,
    model: String,
    api_key: Option<String>,
    cache_dir: Option<PathBuf>,
}

impl HttpClient {
    /// `api_key` comes from the environment variable named by
    /// `key_env` (unset means unauthenticated local endpoints).
    pub fn new(
        endpoint: impl Into<String>,
        model: impl Into<String>,
        key_env: &str,
        cache_dir: Option<PathBuf>,
    ) -> Self {
        HttpClient {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key: std::env::var(key_env).ok(),
            cache_dir,
        }
    }
}

impl LlmClient for HttpClient {
    fn complete(&self, stage: Stage, action: &str, prompt: &str) -> Result<String> {
        let body = serde_json::json!({
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
        });
        let client = reqwest::blocking::Client::new();
        let mut req = client.post(&self.endpoint).json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req
            .send()
            .map_err(|e| Error::Http(format!("{}: {e}", self.endpoint)))?;
        if !resp.status().is_success() {
            return Err(Error::Http(format!(
                "{}: status {}",
                self.endpoint,
                resp.status()
            )));
        }
        let value: serde_json::Value = resp
            .json()
            .map_err(|e| Error::Http(format!("{}: malformed body: {e}", self.endpoint)))?;
        let text = value["choices"][0]["message"]["content"]
            .as_str()
            .ok_or_else(|| {
                Error::Http(format!("{}: response has no message content", self.endpoint))
            })?
            .to_string();
        if let Some(dir) = &self.cache_dir {
            fs::create_dir_all(dir)?;
            let path = dir.join(format!("{}.{}.txt", action_slug(action), stage.file_suffix()));
            fs::write(path, &text)?;
        }
        Ok(text)
    }
}

/// Drive both stages for one action: prompt, parse the graph, prompt for
/// sentence completions, parse those. Any failure leaves no partial
/// state behind (nothing is written here).
pub fn build_action_graph(
    client: &dyn LlmClient,
    action: &str,
    k: usize,
) -> Result<(ActionSubgraph, IndexMap<String, String>, Vec<String>)> {
    let p1 = compose_stage1_prompt(action, k)?;
    let r1 = client.complete(Stage::One, action, &p1)?;
    let (graph, warnings) = parse_stage1_response(action, &r1)?;
    let p2 = compose_stage2_prompt(&graph)?;
    let r2 = client.complete(Stage::Two, action, &p2)?;
    let stage2 = parse_stage2_response(&r2)?;
    Ok((graph, stage2, warnings))
}
