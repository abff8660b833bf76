mod common;

use std::collections::BTreeSet;
use std::path::Path;
use std::sync::Arc;

use corefprobe::annotation::{router, AnnotationLabel, AnnotationStore};
use corefprobe::jsonl::write_jsonl;
use corefprobe::model_client::Decoding;
use corefprobe::{GenerationRecord, Language};
use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde_json::{json, Value};

fn generations(path: &Path, n: usize, language: Language) {
    let recs: Vec<GenerationRecord> = (0..n)
        .map(|i| GenerationRecord {
            instance_id: format!("inst{i:02}"),
            model_id: "mock".into(),
            max_tokens: 8,
            continuation_text: format!(" continuation number {i}"),
            decoding: Decoding::Greedy,
            prompt_text: format!("Prompt {i}. Some of the"),
            language,
            timestamp: "1970-01-01T00:00:00Z".into(),
        })
        .collect();
    write_jsonl(path, &recs).unwrap();
}

struct Setup {
    _dir: tempfile::TempDir,
    base: String,
    store_dir: std::path::PathBuf,
    client: Client,
}

fn setup(n: usize, language: Language, annotators: &[&str]) -> Setup {
    let dir = tempfile::tempdir().unwrap();
    let gens = dir.path().join("gen.jsonl");
    generations(&gens, n, language);
    let store_dir = dir.path().join("store");
    let names: Vec<String> = annotators.iter().map(|s| s.to_string()).collect();
    let store = AnnotationStore::open(&store_dir, &names, 99).unwrap();
    let imported = store.import_generations(&gens).unwrap();
    assert_eq!(imported.new_tasks, n);
    let base = common::spawn_server(router(Arc::new(store), None));
    Setup { _dir: dir, base, store_dir, client: Client::new() }
}

impl Setup {
    fn get(&self, path: &str) -> (StatusCode, Value) {
        let r = self.client.get(format!("{}{path}", self.base)).send().unwrap();
        let s = r.status();
        (s, r.json().unwrap_or(Value::Null))
    }

    fn post(&self, body: Value) -> (StatusCode, Value) {
        let r = self.client.post(format!("{}/api/labels", self.base)).json(&body).send().unwrap();
        let s = r.status();
        (s, r.json().unwrap_or(Value::Null))
    }
}

fn pick(i: usize, who: &str) -> (&'static str, &'static str) {
    let g = ["masc", "fem", "neut", "none_mentioned"][(i + who.len()) % 4];
    let c = ["yes", "no", "unclear"][i % 3];
    (g, c)
}

#[test]
fn two_annotators_round_trip() {
    let s = setup(20, Language::EN, &["alice", "bob"]);
    let mut submitted = BTreeSet::new();
    let mut orders = Vec::new();
    for who in ["alice", "bob"] {
        let mut order = Vec::new();
        loop {
            let (st, v) = s.get(&format!("/api/tasks/next?annotator={who}"));
            assert_eq!(st, StatusCode::OK);
            if v["task"].is_null() {
                break;
            }
            let id = v["task"]["instance_id"].as_str().unwrap().to_string();
            // a page refresh returns the same task and records nothing
            let (_, again) = s.get(&format!("/api/tasks/next?annotator={who}"));
            assert_eq!(again["task"]["instance_id"], json!(id));
            assert_eq!(v["task"]["allowed_gender"], json!(["masc", "fem", "neut", "none_mentioned"]));
            assert!(v["task"]["prompt_text"].as_str().unwrap().starts_with("Prompt"));

            let i: usize = id[4..].parse().unwrap();
            let (g, c) = pick(i, who);
            let body = json!({"instance_id": id, "annotator_id": who, "gender": g, "coreference": c});
            let (st, resp) = s.post(body.clone());
            assert_eq!(st, StatusCode::OK, "{resp}");
            assert_eq!(resp["ok"], json!(true));
            // resubmitting the same label is idempotent in the export
            assert_eq!(s.post(body).0, StatusCode::OK);
            submitted.insert((id.clone(), who.to_string(), g.to_string(), c.to_string()));
            order.push(id);
            assert!(order.len() <= 20, "task loop did not terminate");
        }
        assert_eq!(order.len(), 20);
        orders.push(order);
    }
    assert_ne!(orders[0], orders[1], "annotators should see different orders");

    let (st, p) = s.get("/api/progress?annotator=bob");
    assert_eq!(st, StatusCode::OK);
    assert_eq!((p["done"].as_u64(), p["total"].as_u64()), (Some(20), Some(20)));
    let (_, all) = s.get("/api/progress");
    assert_eq!(all["annotators"].as_array().unwrap().len(), 2);

    let r = s.client.get(format!("{}/api/export", s.base)).send().unwrap();
    assert_eq!(r.headers()["content-type"], "application/x-ndjson");
    let text = r.text().unwrap();
    let exported: Vec<AnnotationLabel> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(exported.len(), 40, "export must hold one current label per (annotator, item)");
    let got: BTreeSet<_> = exported
        .iter()
        .map(|l| (l.instance_id.clone(), l.annotator_id.clone(), l.gender.to_string(), l.coreference.to_string()))
        .collect();
    assert_eq!(got, submitted);

    // labels survive a restart of the store
    let names = vec!["alice".to_string(), "bob".to_string()];
    let reopened = AnnotationStore::open(&s.store_dir, &names, 99).unwrap();
    assert_eq!(reopened.current_labels(), exported);
    let agg = reopened.aggregate(false).unwrap();
    assert_eq!(agg.n_items, 20);
    assert!(agg.gender_kappa.is_some());
}

#[test]
fn invalid_submissions_are_rejected_per_field() {
    let s = setup(3, Language::EN, &["alice"]);
    let (_, v) = s.get("/api/tasks/next?annotator=alice");
    let id = v["task"]["instance_id"].as_str().unwrap().to_string();

    let (st, e) = s.post(json!({"instance_id": id, "annotator_id": "alice", "gender": "masc_fem", "coreference": "yes"}));
    assert_eq!(st, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(e["field"], json!("gender"));

    let (st, e) = s.post(json!({"instance_id": id, "annotator_id": "alice", "gender": "masc", "coreference": "maybe"}));
    assert_eq!(st, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(e["field"], json!("coreference"));

    let (st, e) = s.post(json!({"instance_id": id, "annotator_id": "alice", "gender": "masc"}));
    assert_eq!(st, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(e["field"], json!("coreference"));

    let (st, e) = s.post(json!({"instance_id": "nope", "annotator_id": "alice", "gender": "masc", "coreference": "yes"}));
    assert!(st.is_client_error(), "{st}");
    assert_eq!(e["field"], json!("instance_id"));

    let (st, _) = s.post(json!({"instance_id": id, "annotator_id": "mallory", "gender": "masc", "coreference": "yes"}));
    assert_eq!(st, StatusCode::NOT_FOUND);

    let (st, _) = s.get("/api/tasks/next");
    assert_eq!(st, StatusCode::UNPROCESSABLE_ENTITY);

    // nothing invalid reached the log
    let (_, p) = s.get("/api/progress?annotator=alice");
    assert_eq!(p["done"], json!(0));
}

#[test]
fn german_tasks_allow_coordinated_label_and_exclude_skips() {
    let s = setup(4, Language::DE, &["anna"]);
    let (_, v) = s.get("/api/tasks/next?annotator=anna");
    let first = v["task"]["instance_id"].as_str().unwrap().to_string();
    assert!(v["task"]["allowed_gender"].as_array().unwrap().contains(&json!("masc_fem")));

    let (_, v2) = s.get(&format!("/api/tasks/next?annotator=anna&exclude={first}"));
    assert_ne!(v2["task"]["instance_id"], json!(first));

    let (st, _) = s.post(json!({"instance_id": first, "annotator_id": "anna", "gender": "masc_fem", "coreference": "no"}));
    assert_eq!(st, StatusCode::OK);

    let (_, g) = s.get("/api/guidelines");
    assert!(g["text"].as_str().unwrap().len() > 100);
    assert!(!g["gender_categories"]["EN"].as_array().unwrap().contains(&json!("masc_fem")));
    assert_eq!(g["coreference_categories"], json!(["yes", "no", "unclear"]));
}
