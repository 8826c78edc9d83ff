//! Chat-completion gateway: one client contract for the three model roles
//! (decomposer, subquestion answerer, final answerer), the prompt
//! templates, call accounting, and a deterministic scripted mock.
//!
//! The wire protocol is the common chat-completions HTTP shape, so any
//! compatible server works; model decoding is greedy (temperature 0).

use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("prompt is empty")]
    EmptyPrompt,
    #[error("chat transport failure after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },
    #[error("chat endpoint rejected the request: {0}")]
    Rejected(String),
    #[error("chat response missing message content")]
    EmptyChoices,
}

/// Connection and decoding settings for one model role.
///
/// Decoding is greedy by construction: `temperature` defaults to 0 and the
/// request body always carries it, so identical prompts serialize to
/// byte-identical request bodies.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChatConfig {
    pub endpoint: String,
    pub model: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub api_key: Option<String>,
    pub max_input_tokens: usize,
    pub max_output_tokens: usize,
    pub temperature: f64,
    pub max_retries: u32,
}

impl ChatConfig {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key: None,
            max_input_tokens: 512,
            max_output_tokens: 32,
            temperature: 0.0,
            max_retries: 3,
        }
    }
}

pub trait ChatClient: Send + Sync {
    /// Issues one logical chat call and returns the raw assistant text.
    fn complete(&self, prompt: &str) -> Result<String, LlmError>;
}

/// Per-question count of logical model calls. Retries do not count; only
/// completed logical calls do.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallLedger {
    pub decomposition_calls: usize,
    pub subquestion_calls: usize,
    pub final_calls: usize,
}

impl CallLedger {
    pub fn total(&self) -> usize {
        self.decomposition_calls + self.subquestion_calls + self.final_calls
    }
}

// ---------------------------------------------------------------------------
// Prompt templates
// ---------------------------------------------------------------------------

/// Prompt for answering one subquestion over its retrieved subgraph.
pub fn build_subquestion_prompt(subquestion: &str, subgraph_text: &str) -> String {
    format!(
        "Answer the question using only the knowledge graph below. \
         Reply with a single entity and nothing else.\n\n\
         {subgraph_text}\n\
         Question: {subquestion}\n\
         Answer:"
    )
}

/// Prompt for the final answer over the merged graph.
///
/// Deliberately contains the complex question and the merged graph only;
/// intermediate subquestion answers are never included.
pub fn build_final_prompt(question: &str, merged_graph_text: &str) -> String {
    format!(
        "Answer the question using the knowledge graph below. \
         Reply with the answer entity only.\n\n\
         {merged_graph_text}\n\
         Question: {question}\n\
         Answer:"
    )
}

/// One chat call answering a subquestion; increments the ledger.
pub fn answer_subquestion(
    subquestion: &str,
    subgraph_text: &str,
    client: &dyn ChatClient,
    ledger: &mut CallLedger,
) -> Result<String, LlmError> {
    let prompt = build_subquestion_prompt(subquestion, subgraph_text);
    let raw = client.complete(&prompt)?;
    ledger.subquestion_calls += 1;
    Ok(raw.trim().to_string())
}

/// One chat call answering the complex question; increments the ledger.
pub fn answer_final(
    question: &str,
    merged_graph_text: &str,
    client: &dyn ChatClient,
    ledger: &mut CallLedger,
) -> Result<String, LlmError> {
    let prompt = build_final_prompt(question, merged_graph_text);
    let raw = client.complete(&prompt)?;
    ledger.final_calls += 1;
    Ok(raw.trim().to_string())
}

// ---------------------------------------------------------------------------
// HTTP client
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct WireMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: Vec<WireMessage<'a>>,
    temperature: f64,
    max_tokens: usize,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireResponseMessage,
}

#[derive(Deserialize)]
struct WireResponseMessage {
    content: Option<String>,
}

pub struct HttpChatClient {
    cfg: ChatConfig,
}

impl HttpChatClient {
    pub fn new(cfg: ChatConfig) -> Self {
        Self { cfg }
    }

    pub fn config(&self) -> &ChatConfig {
        &self.cfg
    }

    /// Serialized request body for a prompt. Exposed so the greedy contract
    /// (identical prompts produce byte-identical bodies) can be asserted.
    pub fn request_body(&self, prompt: &str) -> Vec<u8> {
        let req = WireRequest {
            model: &self.cfg.model,
            messages: vec![WireMessage { role: "user", content: prompt }],
            temperature: self.cfg.temperature,
            max_tokens: self.cfg.max_output_tokens,
        };
        serde_json::to_vec(&req).expect("request serialization cannot fail")
    }

    fn request_once(&self, prompt: &str) -> Result<String, LlmError> {
        let body = self.request_body(prompt);
        let mut req = ureq::post(&self.cfg.endpoint)
            .header("Content-Type", "application/json");
        if let Some(key) = &self.cfg.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = req.send(&body[..]).map_err(classify_chat_error)?;
        let parsed: WireResponse = response
            .body_mut()
            .read_json()
            .map_err(|e| LlmError::Rejected(format!("bad response body: {e}")))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or(LlmError::EmptyChoices)
    }
}

fn classify_chat_error(err: ureq::Error) -> LlmError {
    match err {
        ureq::Error::StatusCode(code) if code == 429 || code == 408 || code >= 500 => {
            LlmError::Transport { attempts: 1, message: format!("http status {code}") }
        }
        ureq::Error::StatusCode(code) => LlmError::Rejected(format!("http status {code}")),
        ureq::Error::Io(e) => LlmError::Transport { attempts: 1, message: e.to_string() },
        ureq::Error::Timeout(t) => {
            LlmError::Transport { attempts: 1, message: format!("timeout: {t}") }
        }
        ureq::Error::HostNotFound => {
            LlmError::Transport { attempts: 1, message: "host not found".into() }
        }
        other => LlmError::Rejected(other.to_string()),
    }
}

impl ChatClient for HttpChatClient {
    fn complete(&self, prompt: &str) -> Result<String, LlmError> {
        if prompt.is_empty() {
            return Err(LlmError::EmptyPrompt);
        }
        let mut delay = Duration::from_millis(100);
        let mut attempt = 0u32;
        loop {
            match self.request_once(prompt) {
                Ok(text) => return Ok(text),
                Err(LlmError::Transport { .. }) if attempt < self.cfg.max_retries => {
                    attempt += 1;
                    std::thread::sleep(delay);
                    delay *= 2;
                }
                Err(LlmError::Transport { message, .. }) => {
                    return Err(LlmError::Transport { attempts: attempt + 1, message });
                }
                Err(e) => return Err(e),
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Scripted mock
// ---------------------------------------------------------------------------

/// One substring-matching rule of a scripted mock.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScriptRule {
    pub contains: String,
    pub response: String,
}

/// Deterministic chat client answering by the first rule whose `contains`
/// string occurs in the prompt, with a default response otherwise. Every
/// prompt is recorded for assertions.
pub struct ScriptedMock {
    rules: Vec<ScriptRule>,
    default_response: String,
    log: Mutex<Vec<String>>,
}

impl ScriptedMock {
    pub fn new(rules: Vec<ScriptRule>, default_response: impl Into<String>) -> Self {
        Self { rules, default_response: default_response.into(), log: Mutex::new(Vec::new()) }
    }

    /// All prompts seen so far, in call order.
    pub fn prompts(&self) -> Vec<String> {
        self.log.lock().unwrap().clone()
    }

    pub fn call_count(&self) -> usize {
        self.log.lock().unwrap().len()
    }
}

impl ChatClient for ScriptedMock {
    fn complete(&self, prompt: &str) -> Result<String, LlmError> {
        self.log.lock().unwrap().push(prompt.to_string());
        for rule in &self.rules {
            if prompt.contains(&rule.contains) {
                return Ok(rule.response.clone());
            }
        }
        Ok(self.default_response.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scripted_mock_matches_first_rule() {
        let mock = ScriptedMock::new(
            vec![
                ScriptRule { contains: "1984".into(), response: "[\"a\", \"b\"]".into() },
                ScriptRule { contains: "19".into(), response: "other".into() },
            ],
            "default",
        );
        assert_eq!(mock.complete("about 1984 please").unwrap(), "[\"a\", \"b\"]");
        assert_eq!(mock.complete("no match here").unwrap(), "default");
        assert_eq!(mock.complete("about 1984 please").unwrap(), "[\"a\", \"b\"]");
        assert_eq!(mock.prompts().len(), 3);
    }

    #[test]
    fn answer_ops_update_ledger_and_trim() {
        let mock = ScriptedMock::new(
            vec![ScriptRule { contains: "capital".into(), response: "  Paris \n".into() }],
            "",
        );
        let mut ledger = CallLedger::default();
        let answer =
            answer_subquestion("What is the capital?", "node_id,node_attr\n", &mock, &mut ledger)
                .unwrap();
        assert_eq!(answer, "Paris");
        assert_eq!(ledger.subquestion_calls, 1);

        let empty = answer_subquestion("something else", "g", &mock, &mut ledger).unwrap();
        assert_eq!(empty, "");
        assert_eq!(ledger.subquestion_calls, 2);

        let fin = answer_final("capital of what?", "graph", &mock, &mut ledger).unwrap();
        assert_eq!(fin, "Paris");
        assert_eq!(ledger.final_calls, 1);
        assert_eq!(ledger.total(), 3);
    }

    #[test]
    fn subquestion_prompt_contains_parts() {
        let p = build_subquestion_prompt("Who wrote it?", "node_id,node_attr\n0,X\n");
        assert!(p.contains("Who wrote it?"));
        assert!(p.contains("node_id,node_attr"));
    }

    #[test]
    fn final_prompt_golden() {
        let p = build_final_prompt("Q?", "GRAPH\n");
        assert_eq!(
            p,
            "Answer the question using the knowledge graph below. \
             Reply with the answer entity only.\n\nGRAPH\n\nQuestion: Q?\nAnswer:"
        );
    }

    #[test]
    fn request_bodies_are_byte_identical_for_identical_prompts() {
        let client = HttpChatClient::new(ChatConfig::new("http://localhost:1/v1", "m"));
        assert_eq!(client.request_body("same prompt"), client.request_body("same prompt"));
        assert_eq!(client.config().temperature, 0.0);
        assert_eq!(client.config().max_input_tokens, 512);
        assert_eq!(client.config().max_output_tokens, 32);
    }

    #[test]
    fn request_body_shape_is_chat_completions() {
        let client = HttpChatClient::new(ChatConfig::new("http://localhost:1/v1", "test-model"));
        let body: serde_json::Value =
            serde_json::from_slice(&client.request_body("hello")).unwrap();
        assert_eq!(body["model"], "test-model");
        assert_eq!(body["messages"][0]["role"], "user");
        assert_eq!(body["messages"][0]["content"], "hello");
        assert_eq!(body["temperature"], 0.0);
        assert_eq!(body["max_tokens"], 32);
    }
}
