use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{aggregate_labels, Aggregation, AnnotationLabel, AnnotationTask, CorefLabel, GenderLabel};
use crate::corpus::Language;
use crate::error::{Error, Result};
use crate::jsonl::{append_durable, open_append, read_jsonl_lenient, repair_log};
use crate::model_client::GenerationRecord;
use crate::seed::rng_for;

const TASKS_FILE: &str = "tasks.jsonl";
const LABELS_DIR: &str = "labels";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub annotator_id: String,
    pub done: usize,
    pub total: usize,
}

/// A task as shown to one annotator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskView {
    #[serde(flatten)]
    pub task: AnnotationTask,
    pub status: String,
    pub allowed_gender: Vec<GenderLabel>,
    pub allowed_coreference: Vec<CorefLabel>,
    pub current: Option<AnnotationLabel>,
    pub progress: Progress,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ImportSummary {
    pub new_tasks: usize,
    pub existing: usize,
    /// `(line, reason)` for records that could not be imported.
    pub skipped: Vec<(usize, String)>,
}

/// Raw label submission; fields are validated individually.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LabelSubmission {
    pub instance_id: String,
    pub annotator_id: String,
    pub gender: String,
    pub coreference: String,
}

struct AnnotatorLog {
    path: PathBuf,
    file: Option<File>,
    /// Every submission in arrival order.
    history: Vec<AnnotationLabel>,
    current: HashMap<String, usize>,
    order: Vec<usize>,
}

struct TaskTable {
    tasks: Vec<AnnotationTask>,
    index: HashMap<String, usize>,
}

/// Tasks and per-annotator append-only label logs under one directory.
pub struct AnnotationStore {
    dir: PathBuf,
    seed: u64,
    annotators: Vec<String>,
    tasks: Mutex<TaskTable>,
    logs: BTreeMap<String, Mutex<AnnotatorLog>>,
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

fn seeded_order(seed: u64, annotator: &str, tasks: &[AnnotationTask]) -> Vec<usize> {
    let mut ids: Vec<usize> = (0..tasks.len()).collect();
    ids.sort_by(|a, b| tasks[*a].instance_id.cmp(&tasks[*b].instance_id));
    ids.shuffle(&mut rng_for(seed, &format!("annotation-order/{annotator}"), 0));
    ids
}

impl AnnotationStore {
    /// Opens or creates the store in `dir` for a fixed annotator roster.
    pub fn open(dir: &Path, annotators: &[String], seed: u64) -> Result<Self> {
        if annotators.is_empty() {
            return Err(Error::Config("at least one annotator must be configured".into()));
        }
        fs::create_dir_all(dir.join(LABELS_DIR)).map_err(|e| Error::io(dir, e))?;
        let tasks_path = dir.join(TASKS_FILE);
        repair_log(&tasks_path)?;
        let (tasks, bad): (Vec<AnnotationTask>, usize) = read_jsonl_lenient(&tasks_path)?;
        if bad > 0 {
            log::warn!("{}: ignored {bad} unreadable line(s)", tasks_path.display());
        }
        let mut index = HashMap::new();
        let mut uniq = Vec::new();
        for t in tasks {
            if !index.contains_key(&t.instance_id) {
                index.insert(t.instance_id.clone(), uniq.len());
                uniq.push(t);
            }
        }
        let mut logs = BTreeMap::new();
        for a in annotators {
            if a.is_empty() || a.contains(['/', '\\', '.']) {
                return Err(Error::Config(format!("invalid annotator id {a:?}")));
            }
            let path = dir.join(LABELS_DIR).join(format!("{a}.jsonl"));
            let dropped = repair_log(&path)?;
            if dropped > 0 {
                log::warn!("{}: dropped {dropped} truncated line(s)", path.display());
            }
            let (history, bad): (Vec<AnnotationLabel>, usize) = read_jsonl_lenient(&path)?;
            if bad > 0 {
                log::warn!("{}: ignored {bad} unreadable line(s)", path.display());
            }
            let mut current = HashMap::new();
            for (i, l) in history.iter().enumerate() {
                current.insert(l.instance_id.clone(), i);
            }
            logs.insert(
                a.clone(),
                Mutex::new(AnnotatorLog {
                    path,
                    file: None,
                    history,
                    current,
                    order: seeded_order(seed, a, &uniq),
                }),
            );
        }
        Ok(Self {
            dir: dir.to_path_buf(),
            seed,
            annotators: annotators.to_vec(),
            tasks: Mutex::new(TaskTable { tasks: uniq, index }),
            logs,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn annotators(&self) -> &[String] {
        &self.annotators
    }

    pub fn task_count(&self) -> usize {
        self.tasks.lock().expect("tasks lock").tasks.len()
    }

    pub fn tasks(&self) -> Vec<AnnotationTask> {
        self.tasks.lock().expect("tasks lock").tasks.clone()
    }

    fn log(&self, annotator: &str) -> Result<&Mutex<AnnotatorLog>> {
        self.logs
            .get(annotator)
            .ok_or_else(|| Error::UnknownAnnotator(annotator.to_string()))
    }

    /// Adds one task per generation record not already present.
    pub fn import_generations(&self, path: &Path) -> Result<ImportSummary> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut summary = ImportSummary::default();
        let mut fresh = Vec::new();
        {
            let table = self.tasks.lock().expect("tasks lock");
            let mut seen: HashSet<String> = HashSet::new();
            for (i, line) in text.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let rec: GenerationRecord = match serde_json::from_str(line) {
                    Ok(r) => r,
                    Err(e) => {
                        log::warn!("{}:{}: skipped: {e}", path.display(), i + 1);
                        summary.skipped.push((i + 1, e.to_string()));
                        continue;
                    }
                };
                if table.index.contains_key(&rec.instance_id) || !seen.insert(rec.instance_id.clone()) {
                    summary.existing += 1;
                    continue;
                }
                fresh.push(AnnotationTask {
                    instance_id: rec.instance_id,
                    prompt_text: rec.prompt_text,
                    continuation_text: rec.continuation_text.trim_end().to_string(),
                    language: rec.language,
                });
            }
        }
        if fresh.is_empty() {
            return Ok(summary);
        }
        let tasks_path = self.dir.join(TASKS_FILE);
        let mut f = open_append(&tasks_path)?;
        for t in &fresh {
            append_durable(&mut f, &tasks_path, t)?;
        }
        summary.new_tasks = fresh.len();
        // lock order is always annotator log before task table
        let snapshot = {
            let mut table = self.tasks.lock().expect("tasks lock");
            for t in fresh {
                let at = table.tasks.len();
                table.index.insert(t.instance_id.clone(), at);
                table.tasks.push(t);
            }
            table.tasks.clone()
        };
        for (a, log) in &self.logs {
            log.lock().expect("log lock").order = seeded_order(self.seed, a, &snapshot);
        }
        Ok(summary)
    }

    pub fn progress(&self, annotator: &str) -> Result<Progress> {
        let log = self.log(annotator)?.lock().expect("log lock");
        let table = self.tasks.lock().expect("tasks lock");
        Ok(Progress {
            annotator_id: annotator.to_string(),
            done: log.current.keys().filter(|k| table.index.contains_key(*k)).count(),
            total: table.tasks.len(),
        })
    }

    fn view(&self, annotator: &str, task: &AnnotationTask, log: &AnnotatorLog, total: usize) -> TaskView {
        let current = log.current.get(&task.instance_id).map(|&i| log.history[i].clone());
        TaskView {
            task: task.clone(),
            status: if current.is_some() { "done" } else { "pending" }.into(),
            allowed_gender: GenderLabel::allowed(task.language),
            allowed_coreference: CorefLabel::ALL.to_vec(),
            current,
            progress: Progress {
                annotator_id: annotator.to_string(),
                done: log.current.len(),
                total,
            },
        }
    }

    /// First pending task in the annotator's seeded order, skipping `exclude`.
    pub fn next_task(&self, annotator: &str, exclude: &[String]) -> Result<Option<TaskView>> {
        let log = self.log(annotator)?.lock().expect("log lock");
        let table = self.tasks.lock().expect("tasks lock");
        let next = log.order.iter().map(|&i| &table.tasks[i]).find(|t| {
            !log.current.contains_key(&t.instance_id) && !exclude.contains(&t.instance_id)
        });
        Ok(next.map(|t| self.view(annotator, t, &log, table.tasks.len())))
    }

    pub fn task_view(&self, annotator: &str, instance_id: &str) -> Result<TaskView> {
        let log = self.log(annotator)?.lock().expect("log lock");
        let table = self.tasks.lock().expect("tasks lock");
        let i = *table
            .index
            .get(instance_id)
            .ok_or_else(|| Error::Annotation(format!("no task {instance_id}")))?;
        Ok(self.view(annotator, &table.tasks[i], &log, table.tasks.len()))
    }

    /// Validates and durably stores a label; resubmission replaces the
    /// current label and keeps the earlier one in the audit trail.
    pub fn submit(&self, sub: &LabelSubmission) -> Result<AnnotationLabel> {
        let invalid = |field: &str, message: String| Error::InvalidLabel {
            field: field.into(),
            message,
        };
        if sub.annotator_id.is_empty() {
            return Err(invalid("annotator_id", "required".into()));
        }
        let log_mutex = self.log(&sub.annotator_id)?;
        let language = {
            let table = self.tasks.lock().expect("tasks lock");
            let i = *table
                .index
                .get(&sub.instance_id)
                .ok_or_else(|| invalid("instance_id", format!("no task {:?}", sub.instance_id)))?;
            table.tasks[i].language
        };
        let gender: GenderLabel = sub.gender.parse().map_err(|e| invalid("gender", e))?;
        if !GenderLabel::allowed(language).contains(&gender) {
            return Err(invalid(
                "gender",
                format!("{gender} is only valid for German tasks, this task is {}", lang_name(language)),
            ));
        }
        let coreference: CorefLabel = sub.coreference.parse().map_err(|e| invalid("coreference", e))?;
        let label = AnnotationLabel {
            instance_id: sub.instance_id.clone(),
            annotator_id: sub.annotator_id.clone(),
            gender,
            coreference,
            submitted_at: now(),
        };
        let mut log = log_mutex.lock().expect("log lock");
        let path = log.path.clone();
        if log.file.is_none() {
            log.file = Some(open_append(&path)?);
        }
        append_durable(log.file.as_mut().expect("opened"), &path, &label)?;
        let idx = log.history.len();
        log.history.push(label.clone());
        log.current.insert(label.instance_id.clone(), idx);
        Ok(label)
    }

    /// All submissions by `annotator` for one item, oldest first.
    pub fn audit_trail(&self, annotator: &str, instance_id: &str) -> Result<Vec<AnnotationLabel>> {
        let log = self.log(annotator)?.lock().expect("log lock");
        Ok(log.history.iter().filter(|l| l.instance_id == instance_id).cloned().collect())
    }

    /// Current labels of every annotator, sorted by (instance, annotator).
    pub fn current_labels(&self) -> Vec<AnnotationLabel> {
        let mut out = Vec::new();
        for log in self.logs.values() {
            let log = log.lock().expect("log lock");
            out.extend(log.current.values().map(|&i| log.history[i].clone()));
        }
        out.sort_by(|a, b| (&a.instance_id, &a.annotator_id).cmp(&(&b.instance_id, &b.annotator_id)));
        out
    }

    pub fn aggregate(&self, partial: bool) -> Result<Aggregation> {
        let ids: Vec<String> = self.tasks().into_iter().map(|t| t.instance_id).collect();
        aggregate_labels(&ids, &self.annotators, &self.current_labels(), partial)
    }
}

fn lang_name(l: Language) -> &'static str {
    match l {
        Language::EN => "English",
        Language::DE => "German",
    }
}
