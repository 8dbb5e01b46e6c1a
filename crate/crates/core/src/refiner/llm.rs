//! Chat-completion refiner: renders the four refinement prompts, calls an
//! OpenAI-compatible endpoint at temperature 0, retries with exponential
//! backoff, and caches responses by prompt hash so reruns cost nothing.

use super::{fnv1a_hex, ClusterDigest, Refiner, RefinerError};
use serde::Deserialize;
use std::collections::HashMap;
use std::time::Duration;

/// Environment variable holding the API key.
pub const API_KEY_ENV: &str = "TAXOGRAPH_API_KEY";

/// Endpoint settings for [`LlmRefiner`].
#[derive(Clone, Debug)]
pub struct LlmConfig {
    /// Root of the OpenAI-compatible API, e.g. `https://api.deepseek.com/v1`.
    pub base_url: String,
    pub model: String,
    pub timeout_secs: u64,
    /// Retries after the first attempt.
    pub max_retries: u32,
    /// First backoff delay; doubles per retry.
    pub backoff_ms: u64,
    pub temperature: f64,
}

impl LlmConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        LlmConfig {
            base_url: base_url.into(),
            model: model.into(),
            timeout_secs: 60,
            max_retries: 3,
            backoff_ms: 500,
            temperature: 0.0,
        }
    }
}

// ---------------------------------------------------------------------------
// Prompt templates
// ---------------------------------------------------------------------------

fn numbered(docs: &[&str]) -> String {
    docs.iter()
        .enumerate()
        .map(|(i, d)| format!("{}. {}", i + 1, d))
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn render_split_prompt(docs: &[&str]) -> String {
    format!(
        "Here are some documents currently in one cluster:\n\n{}\n\n\
         Please decide whether they should stay in one cluster, or be split \
         into multiple subclusters based on different topics. Only respond \
         with a single number: the number of subclusters needed. If no split \
         is needed, respond with 1.",
        numbered(docs)
    )
}

pub fn render_merge_prompt(a: &[&str], b: &[&str]) -> String {
    format!(
        "Here are two clusters of documents:\n\nCluster A:\n{}\n\nCluster B:\n{}\n\n\
         Determine whether the two clusters are about the same or highly \
         similar topic and should be merged. Return only 1 if they should be \
         merged, or 0 if they should remain separate.",
        numbered(a),
        numbered(b)
    )
}

pub fn render_summarize_prompt(docs: &[&str]) -> String {
    format!(
        "Here are some documents from the same cluster:\n\n{}\n\n\
         Please:\n\n- Generate a short topic label (2\u{2013}5 words)\n\n\
         - Summarize the common theme in 1\u{2013}2 sentences\n\n\
         Output format (in JSON):\n\n{{\n\n  \"label\": \"[label]\",\n\n  \
         \"summary\": \"[summary]\"\n\n}}",
        numbered(docs)
    )
}

pub fn render_outlier_prompt(text: &str, candidates: &[ClusterDigest]) -> String {
    let mut clusters = String::new();
    for (i, c) in candidates.iter().enumerate() {
        clusters.push_str(&format!(
            "Cluster {}:\n\nLabel: {}\n\nSummary: {}\n\n",
            i + 1,
            c.label,
            c.summary
        ));
    }
    format!(
        "Here is a document and a list of cluster summaries:\n\nDocument:\n\n{}\n\n{}\
         Decide which cluster the document best belongs to. Only return the \
         number of the best matching cluster (e.g., 1, 2, 3, ...).",
        text, clusters
    )
}

// ---------------------------------------------------------------------------
// Response parsing
// ---------------------------------------------------------------------------

/// Whitespace-tolerant integer parse.
pub fn parse_int_response(content: &str) -> Result<i64, RefinerError> {
    content
        .trim()
        .parse::<i64>()
        .map_err(|_| RefinerError::Parse(format!("expected an integer, got {content:?}")))
}

pub fn parse_merge_response(content: &str) -> Result<bool, RefinerError> {
    match parse_int_response(content)? {
        1 => Ok(true),
        0 => Ok(false),
        other => Err(RefinerError::Parse(format!(
            "expected 0 or 1, got {other}"
        ))),
    }
}

/// Extracts the outermost JSON object (tolerating code fences or prose
/// around it), requires string `label` and `summary`, ignores extra keys.
pub fn parse_summary_response(content: &str) -> Result<ClusterDigest, RefinerError> {
    let start = content
        .find('{')
        .ok_or_else(|| RefinerError::Parse("no JSON object in response".into()))?;
    let end = content
        .rfind('}')
        .ok_or_else(|| RefinerError::Parse("unterminated JSON object".into()))?;
    if end < start {
        return Err(RefinerError::Parse("unterminated JSON object".into()));
    }
    let value: serde_json::Value = serde_json::from_str(&content[start..=end])
        .map_err(|e| RefinerError::Parse(format!("bad JSON: {e}")))?;
    let get = |key: &str| -> Result<String, RefinerError> {
        value
            .get(key)
            .and_then(|v| v.as_str())
            .map(str::to_string)
            .ok_or_else(|| RefinerError::Parse(format!("missing string field `{key}`")))
    };
    Ok(ClusterDigest {
        label: get("label")?,
        summary: get("summary")?,
    })
}

pub fn parse_choice_response(content: &str) -> Result<usize, RefinerError> {
    let v = parse_int_response(content)?;
    if v < 1 {
        return Err(RefinerError::Parse(format!(
            "cluster number must be positive, got {v}"
        )));
    }
    Ok(v as usize)
}

// ---------------------------------------------------------------------------
// HTTP client
// ---------------------------------------------------------------------------

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    content: String,
}

/// Blocking chat-completion client implementing [`Refiner`].
pub struct LlmRefiner {
    config: LlmConfig,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
    cache: HashMap<String, String>,
    /// Total requests actually sent (cache misses, including retries).
    pub requests_sent: usize,
}

impl LlmRefiner {
    /// Reads the API key from [`API_KEY_ENV`]; absent means unauthenticated
    /// requests (local endpoints).
    pub fn new(config: LlmConfig) -> Result<Self, RefinerError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| RefinerError::Transport(e.to_string()))?;
        Ok(LlmRefiner {
            config,
            api_key: std::env::var(API_KEY_ENV).ok(),
            client,
            cache: HashMap::new(),
            requests_sent: 0,
        })
    }

    fn endpoint(&self) -> String {
        format!(
            "{}/chat/completions",
            self.config.base_url.trim_end_matches('/')
        )
    }

    fn request_once(&mut self, prompt: &str) -> Result<String, RefinerError> {
        let body = serde_json::json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.config.temperature,
        });
        let mut req = self.client.post(self.endpoint()).json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        self.requests_sent += 1;
        let resp = req
            .send()
            .map_err(|e| RefinerError::Transport(e.to_string()))?;
        let status = resp.status();
        let text = resp
            .text()
            .map_err(|e| RefinerError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(RefinerError::Http {
                status: status.as_u16(),
                detail: text.chars().take(200).collect(),
            });
        }
        let parsed: ChatResponse = serde_json::from_str(&text)
            .map_err(|e| RefinerError::Parse(format!("bad completion envelope: {e}")))?;
        parsed
            .choices
            .first()
            .map(|c| c.message.content.clone())
            .ok_or_else(|| RefinerError::Parse("completion has no choices".into()))
    }

    /// Sends a prompt and parses the answer, retrying transport and parse
    /// failures alike; a success is cached by prompt hash.
    fn ask<T>(
        &mut self,
        prompt: &str,
        parse: impl Fn(&str) -> Result<T, RefinerError>,
    ) -> Result<T, RefinerError> {
        let key = fnv1a_hex(prompt);
        if let Some(cached) = self.cache.get(&key) {
            return parse(cached);
        }
        let mut delay = Duration::from_millis(self.config.backoff_ms);
        let mut last_err = None;
        for attempt in 0..=self.config.max_retries {
            if attempt > 0 {
                std::thread::sleep(delay);
                delay *= 2;
            }
            match self.request_once(prompt).and_then(|content| {
                parse(&content).map(|value| (content, value))
            }) {
                Ok((content, value)) => {
                    self.cache.insert(key, content);
                    return Ok(value);
                }
                Err(e) => last_err = Some(e),
            }
        }
        Err(last_err.expect("at least one attempt"))
    }
}

impl Refiner for LlmRefiner {
    fn decide_split(&mut self, samples: &[&str]) -> Result<usize, RefinerError> {
        let prompt = render_split_prompt(samples);
        let count = self.ask(&prompt, |c| {
            let v = parse_int_response(c)?;
            if v < 1 {
                return Err(RefinerError::Parse(format!(
                    "subcluster count must be at least 1, got {v}"
                )));
            }
            Ok(v as usize)
        })?;
        Ok(count)
    }

    fn decide_merge(&mut self, a: &[&str], b: &[&str]) -> Result<bool, RefinerError> {
        let prompt = render_merge_prompt(a, b);
        self.ask(&prompt, parse_merge_response)
    }

    fn summarize(&mut self, samples: &[&str]) -> Result<ClusterDigest, RefinerError> {
        let prompt = render_summarize_prompt(samples);
        self.ask(&prompt, parse_summary_response)
    }

    fn assign_outlier(
        &mut self,
        text: &str,
        candidates: &[ClusterDigest],
        _current: usize,
    ) -> Result<usize, RefinerError> {
        let prompt = render_outlier_prompt(text, candidates);
        self.ask(&prompt, parse_choice_response)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_prompt_carries_contract_phrase_and_texts() {
        let prompt = render_split_prompt(&["first doc", "second doc"]);
        assert!(prompt.contains("the number of subclusters needed"));
        assert!(prompt.contains("1. first doc"));
        assert!(prompt.contains("2. second doc"));
    }

    #[test]
    fn merge_prompt_shows_both_clusters() {
        let prompt = render_merge_prompt(&["a1"], &["b1", "b2"]);
        assert!(prompt.contains("Cluster A:\n1. a1"));
        assert!(prompt.contains("Cluster B:\n1. b1\n2. b2"));
        assert!(prompt.contains("Return only 1 if they should be merged"));
    }

    #[test]
    fn summarize_prompt_requests_json() {
        let prompt = render_summarize_prompt(&["doc"]);
        assert!(prompt.contains("Generate a short topic label"));
        assert!(prompt.contains("\"label\""));
        assert!(prompt.contains("\"summary\""));
    }

    #[test]
    fn outlier_prompt_numbers_candidates() {
        let candidates = vec![
            ClusterDigest { label: "X".into(), summary: "about x".into() },
            ClusterDigest { label: "Y".into(), summary: "about y".into() },
        ];
        let prompt = render_outlier_prompt("the doc", &candidates);
        assert!(prompt.contains("Cluster 1:\n\nLabel: X"));
        assert!(prompt.contains("Cluster 2:\n\nLabel: Y"));
        assert!(prompt.contains("number of the best matching cluster"));
    }

    #[test]
    fn integer_parse_tolerates_whitespace() {
        assert_eq!(parse_int_response(" 2\n").unwrap(), 2);
        assert_eq!(parse_int_response("3").unwrap(), 3);
        assert!(parse_int_response("two").is_err());
    }

    #[test]
    fn merge_parse_requires_binary() {
        assert!(parse_merge_response("1").unwrap());
        assert!(!parse_merge_response("0\n").unwrap());
        assert!(parse_merge_response("2").is_err());
    }

    #[test]
    fn summary_parse_ignores_extra_keys_and_fences() {
        let content = "```json\n{\"label\": \"L\", \"summary\": \"S\", \"confidence\": 0.9}\n```";
        let digest = parse_summary_response(content).unwrap();
        assert_eq!(digest.label, "L");
        assert_eq!(digest.summary, "S");
    }

    #[test]
    fn summary_parse_requires_label() {
        let err = parse_summary_response("{\"summary\": \"S\"}");
        assert!(matches!(err, Err(RefinerError::Parse(_))));
    }

    #[test]
    fn choice_parse_requires_positive() {
        assert_eq!(parse_choice_response(" 3 ").unwrap(), 3);
        assert!(parse_choice_response("0").is_err());
        assert!(parse_choice_response("-1").is_err());
    }
}
