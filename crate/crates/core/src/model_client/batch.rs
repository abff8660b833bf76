use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;

use serde::{Deserialize, Serialize};

use super::{generate, score_first_token, Backend, ClientError, Decoding, RetryPolicy};
use crate::corpus::ProbeInstance;
use crate::error::{Error, Result};
use crate::jsonl::open_append;

#[derive(Debug, Clone, PartialEq)]
pub enum BatchMode {
    Score,
    Generate { max_tokens: usize, decoding: Decoding },
}

#[derive(Debug, Clone)]
pub struct BatchOptions {
    pub max_parallel_requests: usize,
    pub retry: RetryPolicy,
}

impl Default for BatchOptions {
    fn default() -> Self {
        Self {
            max_parallel_requests: 4,
            retry: RetryPolicy::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BatchSummary {
    pub total: usize,
    pub skipped_existing: usize,
    pub succeeded: usize,
    pub failed: Vec<FailedInstance>,
    /// Lines dropped from a previous run because they did not parse.
    pub repaired_lines: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedInstance {
    pub instance_id: String,
    pub error: String,
}

impl BatchSummary {
    pub fn is_complete(&self) -> bool {
        self.failed.is_empty()
    }
}

#[derive(Deserialize)]
struct IdOnly {
    instance_id: String,
}

/// Ids already recorded in `path`. Unparseable lines (a write cut short by a
/// crash) and duplicates are dropped by rewriting the file.
fn existing_ids(path: &Path) -> Result<(HashSet<String>, usize)> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok((HashSet::new(), 0)),
        Err(e) => return Err(Error::io(path, e)),
    };
    let mut ids = HashSet::new();
    let mut keep = Vec::new();
    let mut dropped = 0;
    for line in text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<IdOnly>(line) {
            Ok(r) if ids.insert(r.instance_id.clone()) => keep.push(line),
            _ => dropped += 1,
        }
    }
    if dropped > 0 || (!text.is_empty() && !text.ends_with('\n')) {
        log::warn!("{}: dropping {dropped} unreadable or duplicate line(s)", path.display());
        let mut body = keep.join("\n");
        if !body.is_empty() {
            body.push('\n');
        }
        fs::write(path, body).map_err(|e| Error::io(path, e))?;
    }
    Ok((ids, dropped))
}

fn run_one(backend: &dyn Backend, inst: &ProbeInstance, mode: &BatchMode) -> std::result::Result<String, ClientError> {
    let json = |v: serde_json::Result<String>| v.map_err(|e| ClientError::Protocol(e.to_string()));
    match mode {
        BatchMode::Score => {
            let coref = inst.coreferent_surface.as_deref().ok_or_else(|| {
                ClientError::Protocol(format!("instance {} has no coreferent to score", inst.instance_id))
            })?;
            json(serde_json::to_string(&score_first_token(
                backend,
                &inst.instance_id,
                &inst.context_text,
                coref,
            )?))
        }
        BatchMode::Generate { max_tokens, decoding } => json(serde_json::to_string(&generate(
            backend,
            &inst.instance_id,
            &inst.context_text,
            inst.condition.language(),
            *max_tokens,
            decoding,
        )?)),
    }
}

/// Scores or generates for every instance not yet present in `output`,
/// appending one JSONL record per success as results arrive.
pub fn run_batch(
    instances: &[ProbeInstance],
    backend: &dyn Backend,
    mode: &BatchMode,
    output: &Path,
    opts: &BatchOptions,
) -> Result<BatchSummary> {
    if opts.max_parallel_requests == 0 {
        return Err(Error::Config("max_parallel_requests must be >= 1".into()));
    }
    let (done, repaired_lines) = existing_ids(output)?;
    let pending: Vec<&ProbeInstance> = instances.iter().filter(|i| !done.contains(&i.instance_id)).collect();
    let mut summary = BatchSummary {
        total: instances.len(),
        skipped_existing: instances.len() - pending.len(),
        repaired_lines,
        ..Default::default()
    };
    let mut file = open_append(output)?;
    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel::<(usize, std::result::Result<String, ClientError>)>();
    let workers = opts.max_parallel_requests.min(pending.len().max(1));

    std::thread::scope(|s| -> Result<()> {
        for _ in 0..workers {
            let tx = tx.clone();
            let (next, pending) = (&next, &pending);
            s.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(inst) = pending.get(i) else { break };
                let r = opts.retry.run(|| run_one(backend, inst, mode));
                if tx.send((i, r)).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        for (i, r) in rx {
            match r {
                Ok(line) => {
                    file.write_all(line.as_bytes())
                        .and_then(|_| file.write_all(b"\n"))
                        .and_then(|_| file.flush())
                        .map_err(|e| Error::io(output, e))?;
                    summary.succeeded += 1;
                }
                Err(e) => {
                    log::warn!("{}: {e}", pending[i].instance_id);
                    summary.failed.push(FailedInstance {
                        instance_id: pending[i].instance_id.clone(),
                        error: e.to_string(),
                    });
                }
            }
        }
        Ok(())
    })?;
    file.sync_data().map_err(|e| Error::io(output, e))?;
    summary.failed.sort_by(|a, b| a.instance_id.cmp(&b.instance_id));
    Ok(summary)
}
