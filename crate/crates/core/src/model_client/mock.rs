use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use sha2::{Digest, Sha256};

use super::{Backend, ClientError, Decoding, TokenLogprob};

/// Timestamp stamped on every mock record so outputs are reproducible.
pub const MOCK_TIMESTAMP: &str = "1970-01-01T00:00:00Z";

/// Penalty applied to each token after the first of a scored continuation.
const LATER_TOKEN_STEP: f64 = 0.05;

const FILLER: [&str; 12] = [
    "they", "were", "happy", "to", "see", "the", "results", "and", "left", "early", "together", "again",
];

type Scorer = dyn Fn(&str, &str) -> f64 + Send + Sync;

/// Deterministic in-process backend.
///
/// Tokenization: whitespace-delimited words keep their leading space, and
/// words longer than six characters split after the fourth character, so
/// `" people"` is one token and `" Personen"` is two.
#[derive(Clone)]
pub struct MockBackend {
    model_id: String,
    scorer: Option<Arc<Scorer>>,
    completion: Option<String>,
    failures: Arc<Mutex<HashMap<String, Option<u32>>>>,
}

impl std::fmt::Debug for MockBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MockBackend")
            .field("model_id", &self.model_id)
            .field("scripted", &self.scorer.is_some())
            .finish()
    }
}

impl Default for MockBackend {
    fn default() -> Self {
        Self::new("mock")
    }
}

fn unit_hash(parts: &[&str]) -> f64 {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p.as_bytes());
        h.update([0x1f]);
    }
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes")) as f64 / u64::MAX as f64
}

pub fn mock_tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut rest = text;
    while !rest.is_empty() {
        let lead = rest.len() - rest.trim_start().len();
        let body = &rest[lead..];
        let end = body.find(char::is_whitespace).unwrap_or(body.len());
        let word = &body[..end];
        let prefix = &rest[..lead];
        if word.chars().count() > 6 {
            let cut = word.char_indices().nth(4).map_or(word.len(), |(i, _)| i);
            out.push(format!("{prefix}{}", &word[..cut]));
            out.push(word[cut..].to_string());
        } else if !(word.is_empty() && prefix.is_empty()) {
            out.push(format!("{prefix}{word}"));
        }
        rest = &body[end..];
    }
    out
}

impl MockBackend {
    pub fn new(model_id: &str) -> Self {
        Self {
            model_id: model_id.to_string(),
            scorer: None,
            completion: None,
            failures: Arc::default(),
        }
    }

    /// Scripts the first-token logprob as a function of (prompt, continuation).
    pub fn with_scorer(mut self, f: impl Fn(&str, &str) -> f64 + Send + Sync + 'static) -> Self {
        self.scorer = Some(Arc::new(f));
        self
    }

    /// Every completion returns this text, truncated to `max_tokens` mock tokens.
    pub fn with_completion(mut self, text: &str) -> Self {
        self.completion = Some(text.to_string());
        self
    }

    /// Calls whose prompt contains `needle` fail with a transport error,
    /// `times` times or forever when `None`.
    pub fn fail_on(self, needle: &str, times: Option<u32>) -> Self {
        self.failures.lock().expect("mock lock").insert(needle.to_string(), times);
        self
    }

    fn check_failure(&self, prompt: &str) -> Result<(), ClientError> {
        let mut f = self.failures.lock().expect("mock lock");
        for (needle, left) in f.iter_mut() {
            if !prompt.contains(needle.as_str()) {
                continue;
            }
            match left {
                Some(0) => continue,
                Some(n) => *n -= 1,
                None => {}
            }
            return Err(ClientError::Transport {
                attempts: 1,
                message: format!("scripted failure for prompt containing {needle:?}"),
            });
        }
        Ok(())
    }
}

impl Backend for MockBackend {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn continuation_logprobs(&self, prompt: &str, continuation: &str) -> Result<Vec<TokenLogprob>, ClientError> {
        self.check_failure(prompt)?;
        let tokens = mock_tokenize(continuation);
        let first = match &self.scorer {
            Some(f) => f(prompt, continuation),
            None => -(0.1 + 9.9 * unit_hash(&[prompt, continuation])),
        };
        Ok(tokens
            .into_iter()
            .enumerate()
            .map(|(i, text)| TokenLogprob {
                text,
                logprob: first - LATER_TOKEN_STEP * i as f64,
            })
            .collect())
    }

    fn complete(&self, prompt: &str, max_tokens: usize, decoding: &Decoding) -> Result<String, ClientError> {
        self.check_failure(prompt)?;
        let tokens = match &self.completion {
            Some(t) => mock_tokenize(t),
            None => {
                let salt = match decoding {
                    Decoding::Greedy => String::new(),
                    Decoding::Sampled { temperature, seed } => format!("{temperature}/{seed}"),
                };
                (0..max_tokens)
                    .map(|i| {
                        let u = unit_hash(&[prompt, &salt, &i.to_string()]);
                        format!(" {}", FILLER[(u * FILLER.len() as f64) as usize % FILLER.len()])
                    })
                    .collect()
            }
        };
        Ok(tokens.into_iter().take(max_tokens).collect())
    }

    fn timestamp(&self) -> String {
        MOCK_TIMESTAMP.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model_client::score_first_token;

    #[test]
    fn tokenizer_splits_long_words() {
        assert_eq!(mock_tokenize(" people"), vec![" people"]);
        assert_eq!(mock_tokenize(" Personen"), vec![" Pers", "onen"]);
        assert_eq!(mock_tokenize(" Männer"), vec![" Männer"]);
        assert_eq!(mock_tokenize(" a b"), vec![" a", " b"]);
    }

    #[test]
    fn scripted_half_probability() {
        let m = MockBackend::default().with_scorer(|_, c| if c == " men" { 0.5f64.ln() } else { -3.0 });
        let r = score_first_token(&m, "id", "Some of the", "men").unwrap();
        assert!((r.logprob + 0.693).abs() < 1e-3);
        assert_eq!(r.token_count_of_coreferent, 1);
    }

    #[test]
    fn split_coreferent_uses_first_token_only() {
        let m = MockBackend::default().with_scorer(|_, _| -1.25);
        let r = score_first_token(&m, "id", "Einige der", "Personen").unwrap();
        assert_eq!(r.logprob, -1.25);
        assert_eq!(r.first_token_text, " Pers");
        assert_eq!(r.token_count_of_coreferent, 2);
    }

    #[test]
    fn hash_scores_are_idempotent() {
        let m = MockBackend::default();
        let a = score_first_token(&m, "x", "ctx", "women").unwrap();
        let b = score_first_token(&m, "x", "ctx", "women").unwrap();
        assert_eq!(a, b);
        assert!(a.logprob < 0.0);
    }

    #[test]
    fn completion_truncates() {
        let m = MockBackend::default().with_completion(" were all smiling at the camera");
        assert_eq!(m.complete("p", 3, &Decoding::Greedy).unwrap(), " were all smil");
        assert_eq!(m.complete("p", 0, &Decoding::Greedy).unwrap(), "");
    }

    #[test]
    fn scripted_failures_run_out() {
        let m = MockBackend::default().fail_on("bad", Some(1));
        assert!(m.complete("a bad prompt", 2, &Decoding::Greedy).is_err());
        assert!(m.complete("a bad prompt", 2, &Decoding::Greedy).is_ok());
    }
}
