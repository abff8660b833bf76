//! Scoring and generation against a completion endpoint.
//!
//! Backends expose teacher-forced per-token logprobs of a continuation and
//! plain completions. Coreferents are scored by the logprob of their first
//! token only, with a leading space attached.

mod batch;
mod mock;
mod openai;

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Language;

pub use batch::{run_batch, BatchMode, BatchOptions, BatchSummary};
pub use mock::{MockBackend, MOCK_TIMESTAMP};
pub use openai::{OpenAiCompatBackend, OpenAiOptions};

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },

    #[error("endpoint capability: {0}")]
    Capability(String),

    #[error("protocol error: {0}")]
    Protocol(String),
}

impl ClientError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, ClientError::Transport { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenLogprob {
    pub text: String,
    pub logprob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Decoding {
    #[default]
    Greedy,
    Sampled { temperature: f64, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub instance_id: String,
    pub model_id: String,
    pub logprob: f64,
    pub first_token_text: String,
    pub token_count_of_coreferent: usize,
    pub timestamp: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub instance_id: String,
    pub model_id: String,
    pub max_tokens: usize,
    pub continuation_text: String,
    pub decoding: Decoding,
    pub prompt_text: String,
    pub language: Language,
    pub timestamp: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    /// Extra attempts after the first failure.
    pub retries: u32,
    pub initial_backoff_ms: u64,
    pub max_backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            retries: 3,
            initial_backoff_ms: 500,
            max_backoff_ms: 8000,
        }
    }
}

impl RetryPolicy {
    pub fn none() -> Self {
        Self {
            retries: 0,
            ..Self::default()
        }
    }

    pub fn backoff(&self, attempt: u32) -> Duration {
        let ms = self
            .initial_backoff_ms
            .saturating_mul(1u64 << attempt.min(20))
            .min(self.max_backoff_ms);
        Duration::from_millis(ms)
    }

    /// Runs `f` until it succeeds, fails with a non-retryable error, or
    /// exhausts the retry budget.
    pub fn run<T>(&self, mut f: impl FnMut() -> Result<T, ClientError>) -> Result<T, ClientError> {
        let mut attempt = 0;
        loop {
            match f() {
                Ok(v) => return Ok(v),
                Err(e) if e.is_retryable() && attempt < self.retries => {
                    log::debug!("attempt {} failed: {e}", attempt + 1);
                    std::thread::sleep(self.backoff(attempt));
                    attempt += 1;
                }
                Err(ClientError::Transport { message, .. }) => {
                    return Err(ClientError::Transport {
                        attempts: attempt + 1,
                        message,
                    })
                }
                Err(e) => return Err(e),
            }
        }
    }
}

/// A completion endpoint.
pub trait Backend: Send + Sync {
    fn model_id(&self) -> &str;

    /// Per-token logprobs of `continuation` given `prompt`, under teacher forcing.
    fn continuation_logprobs(&self, prompt: &str, continuation: &str) -> Result<Vec<TokenLogprob>, ClientError>;

    /// Up to `max_tokens` tokens continuing `prompt`.
    fn complete(&self, prompt: &str, max_tokens: usize, decoding: &Decoding) -> Result<String, ClientError>;

    /// RFC 3339 timestamp for new records.
    fn timestamp(&self) -> String {
        chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
    }
}

/// Logprob of the first token of `" " + coreferent` after `context`.
pub fn score_first_token(
    backend: &dyn Backend,
    instance_id: &str,
    context: &str,
    coreferent: &str,
) -> Result<ScoreRecord, ClientError> {
    if context.is_empty() {
        return Err(ClientError::Protocol("empty scoring context".into()));
    }
    let continuation = format!(" {coreferent}");
    let tokens = backend.continuation_logprobs(context, &continuation)?;
    let first = tokens
        .first()
        .ok_or_else(|| ClientError::Protocol(format!("no tokens returned for {continuation:?}")))?;
    if !first.logprob.is_finite() {
        return Err(ClientError::Protocol(format!(
            "non-finite logprob {} for {:?}",
            first.logprob, first.text
        )));
    }
    Ok(ScoreRecord {
        instance_id: instance_id.to_string(),
        model_id: backend.model_id().to_string(),
        logprob: first.logprob,
        first_token_text: first.text.clone(),
        token_count_of_coreferent: tokens.len(),
        timestamp: backend.timestamp(),
    })
}

pub fn generate(
    backend: &dyn Backend,
    instance_id: &str,
    context: &str,
    language: Language,
    max_tokens: usize,
    decoding: &Decoding,
) -> Result<GenerationRecord, ClientError> {
    let continuation_text = if max_tokens == 0 {
        String::new()
    } else {
        backend.complete(context, max_tokens, decoding)?
    };
    Ok(GenerationRecord {
        instance_id: instance_id.to_string(),
        model_id: backend.model_id().to_string(),
        max_tokens,
        continuation_text,
        decoding: decoding.clone(),
        prompt_text: context.to_string(),
        language,
        timestamp: backend.timestamp(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::cell::Cell;

    #[test]
    fn retry_counts_attempts() {
        let p = RetryPolicy { retries: 2, initial_backoff_ms: 0, max_backoff_ms: 0 };
        let calls = Cell::new(0);
        let r: Result<(), _> = p.run(|| {
            calls.set(calls.get() + 1);
            Err(ClientError::Transport { attempts: 1, message: "down".into() })
        });
        assert_eq!(calls.get(), 3);
        assert!(matches!(r, Err(ClientError::Transport { attempts: 3, .. })));

        calls.set(0);
        let r: Result<(), _> = p.run(|| {
            calls.set(calls.get() + 1);
            Err(ClientError::Capability("no echo".into()))
        });
        assert_eq!(calls.get(), 1);
        assert!(r.is_err());
    }

    #[test]
    fn backoff_is_capped() {
        let p = RetryPolicy { retries: 9, initial_backoff_ms: 100, max_backoff_ms: 1000 };
        assert_eq!(p.backoff(0), Duration::from_millis(100));
        assert_eq!(p.backoff(2), Duration::from_millis(400));
        assert_eq!(p.backoff(8), Duration::from_millis(1000));
    }
}
