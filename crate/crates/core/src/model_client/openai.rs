use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use super::{Backend, ClientError, Decoding, TokenLogprob};

/// Adapter for the OpenAI-style `/completions` API. Continuation logprobs come
/// from `echo: true` with `logprobs` set, so the server scores the prompt
/// tokens under teacher forcing.
#[derive(Debug, Clone)]
pub struct OpenAiCompatBackend {
    client: reqwest::blocking::Client,
    url: String,
    model_id: String,
    token: Option<String>,
    prompt_prefix: String,
    echo_max_tokens: usize,
}

#[derive(Debug, Clone, Default)]
pub struct OpenAiOptions {
    pub timeout: Option<Duration>,
    pub bearer_token: Option<String>,
    /// Prepended to every prompt; its characters are excluded from scoring.
    pub prompt_prefix: Option<String>,
    /// `max_tokens` sent with echo requests; some servers reject 0.
    pub echo_max_tokens: Option<usize>,
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    #[serde(default)]
    text: String,
    logprobs: Option<Logprobs>,
}

#[derive(Deserialize)]
struct Logprobs {
    tokens: Vec<String>,
    token_logprobs: Vec<Option<f64>>,
    text_offset: Vec<usize>,
}

impl OpenAiCompatBackend {
    pub fn new(base_url: &str, model_id: &str, opts: OpenAiOptions) -> Result<Self, ClientError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(opts.timeout.unwrap_or(Duration::from_secs(60)))
            .build()
            .map_err(|e| ClientError::Protocol(format!("building HTTP client: {e}")))?;
        Ok(Self {
            client,
            url: format!("{}/completions", base_url.trim_end_matches('/')),
            model_id: model_id.to_string(),
            token: opts.bearer_token,
            prompt_prefix: opts.prompt_prefix.unwrap_or_default(),
            echo_max_tokens: opts.echo_max_tokens.unwrap_or(1),
        })
    }

    fn post(&self, body: serde_json::Value) -> Result<CompletionResponse, ClientError> {
        let mut req = self.client.post(&self.url).json(&body);
        if let Some(t) = &self.token {
            req = req.bearer_auth(t);
        }
        let resp = req.send().map_err(|e| ClientError::Transport {
            attempts: 1,
            message: e.to_string(),
        })?;
        let status = resp.status();
        let text = resp.text().map_err(|e| ClientError::Transport {
            attempts: 1,
            message: format!("reading body: {e}"),
        })?;
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(ClientError::Transport {
                attempts: 1,
                message: format!("HTTP {status}: {}", snippet(&text)),
            });
        }
        if !status.is_success() {
            let lower = text.to_lowercase();
            if lower.contains("echo") || lower.contains("logprobs") {
                return Err(ClientError::Capability(format!(
                    "HTTP {status}: {}; the endpoint must support echo with logprobs (teacher forcing)",
                    snippet(&text)
                )));
            }
            return Err(ClientError::Protocol(format!("HTTP {status}: {}", snippet(&text))));
        }
        serde_json::from_str(&text).map_err(|e| ClientError::Protocol(format!("bad response body: {e}")))
    }
}

fn snippet(s: &str) -> &str {
    let end = s.char_indices().nth(300).map_or(s.len(), |(i, _)| i);
    &s[..end]
}

/// Tokens overlapping the character span `[start, end)` of the echoed text.
fn select_span(lp: &Logprobs, start: usize, end: usize) -> Result<Vec<TokenLogprob>, ClientError> {
    if lp.tokens.len() != lp.token_logprobs.len() || lp.tokens.len() != lp.text_offset.len() {
        return Err(ClientError::Protocol("logprobs arrays differ in length".into()));
    }
    let mut out = Vec::new();
    for i in 0..lp.tokens.len() {
        let off = lp.text_offset[i];
        let tok_end = off + lp.tokens[i].chars().count();
        if off >= end || tok_end <= start {
            continue;
        }
        let logprob = lp.token_logprobs[i].ok_or_else(|| {
            ClientError::Capability(format!(
                "no logprob for echoed token {:?}; enable echo with logprobs (teacher forcing)",
                lp.tokens[i]
            ))
        })?;
        out.push(TokenLogprob {
            text: lp.tokens[i].clone(),
            logprob,
        });
    }
    Ok(out)
}

impl Backend for OpenAiCompatBackend {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn continuation_logprobs(&self, prompt: &str, continuation: &str) -> Result<Vec<TokenLogprob>, ClientError> {
        let full = format!("{}{prompt}{continuation}", self.prompt_prefix);
        let start = self.prompt_prefix.chars().count() + prompt.chars().count();
        let end = start + continuation.chars().count();
        let resp = self.post(json!({
            "model": self.model_id,
            "prompt": full,
            "echo": true,
            "logprobs": 1,
            "max_tokens": self.echo_max_tokens,
            "temperature": 0.0,
        }))?;
        let choice = resp
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| ClientError::Protocol("response has no choices".into()))?;
        let lp = choice.logprobs.ok_or_else(|| {
            ClientError::Capability(
                "endpoint returned no logprobs for the prompt; use a server that supports echo with logprobs (teacher forcing)"
                    .into(),
            )
        })?;
        let toks = select_span(&lp, start, end)?;
        if toks.is_empty() {
            return Err(ClientError::Capability(
                "echoed tokens do not cover the continuation; the endpoint ignored echo".into(),
            ));
        }
        Ok(toks)
    }

    fn complete(&self, prompt: &str, max_tokens: usize, decoding: &Decoding) -> Result<String, ClientError> {
        let mut body = json!({
            "model": self.model_id,
            "prompt": format!("{}{prompt}", self.prompt_prefix),
            "max_tokens": max_tokens,
        });
        match decoding {
            Decoding::Greedy => body["temperature"] = json!(0.0),
            Decoding::Sampled { temperature, seed } => {
                body["temperature"] = json!(temperature);
                body["seed"] = json!(seed);
            }
        }
        let resp = self.post(body)?;
        resp.choices
            .into_iter()
            .next()
            .map(|c| c.text)
            .ok_or_else(|| ClientError::Protocol("response has no choices".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn span_selection_handles_merged_space() {
        // prompt "ab" (2 chars), continuation " Personen"
        let lp = Logprobs {
            tokens: vec!["a".into(), "b".into(), " Pers".into(), "onen".into(), "!".into()],
            token_logprobs: vec![None, Some(-1.0), Some(-2.0), Some(-0.1), Some(-5.0)],
            text_offset: vec![0, 1, 2, 7, 11],
        };
        let t = select_span(&lp, 2, 11).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t[0].logprob, -2.0);
    }

    #[test]
    fn missing_logprob_is_capability_error() {
        let lp = Logprobs {
            tokens: vec!["a".into(), " men".into()],
            token_logprobs: vec![None, None],
            text_offset: vec![0, 1],
        };
        assert!(matches!(select_span(&lp, 1, 5), Err(ClientError::Capability(_))));
    }
}
