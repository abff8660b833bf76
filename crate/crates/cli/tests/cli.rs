use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

fn bin(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_corefprobe"))
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .args(args)
        .output()
        .expect("run corefprobe")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn full_run(dir: &Path, out: &str) {
    for args in [
        vec!["build-corpus", "--condition", "en_pl", "--condition", "de_pl"],
        vec!["score", "--condition", "en_pl", "--condition", "de_pl"],
        vec!["analyze", "--condition", "en_pl", "--condition", "de_pl"],
        vec!["report", "--condition", "en_pl", "--condition", "de_pl"],
    ] {
        let mut a = args.clone();
        a.extend(["--out-dir", out]);
        let o = bin(dir, &a);
        assert_eq!(code(&o), 0, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn mock_pipeline_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    full_run(dir.path(), "a");
    full_run(dir.path(), "b");
    let a = tree(&dir.path().join("a"));
    let b = tree(&dir.path().join("b"));
    assert_eq!(a.keys().collect::<Vec<_>>(), b.keys().collect::<Vec<_>>());
    for (k, v) in &a {
        assert!(v == &b[k], "{k} differs between runs");
    }
    for f in ["cell_means.csv", "cell_means.md", "anova.md", "tukey.csv", "distribution.svg"] {
        assert!(a.contains_key(&format!("report/de_pl/{f}")), "missing {f}");
    }
    let svg = String::from_utf8(a["report/de_pl/distribution.svg"].clone()).unwrap();
    assert_eq!(svg.matches("<g data-cell=").count(), 24);
}

#[test]
fn german_df_structure_in_cli_output() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&bin(d, &["build-corpus", "--condition", "de_pl"])), 0);
    assert_eq!(code(&bin(d, &["score", "--condition", "de_pl"])), 0);
    let o = bin(d, &["analyze", "--condition", "de_pl"]);
    assert_eq!(code(&o), 0);
    let s = stdout(&o);
    assert!(s.contains("antecedent F(7, 10536)"), "{s}");
    assert!(s.contains("coreferent F(2, 10536)"), "{s}");
    assert!(s.contains("antecedent:coreferent F(14, 10536)"), "{s}");
    assert!(d.join("out/analysis/de_pl.json").exists());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&bin(d, &["--help"])), 0);
    assert_eq!(code(&bin(d, &["analyze", "--condition", "bogus"])), 1);
    assert_eq!(code(&bin(d, &["frobnicate"])), 1);

    std::fs::write(d.join("bad.json"), r#"{"sede": 1}"#).unwrap();
    let o = bin(d, &["--config", "bad.json", "build-corpus"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("sede"));

    let o = bin(d, &["analyze", "--condition", "en_sg"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("corefprobe build-corpus"));
    assert_eq!(code(&bin(d, &["aggregate", "--condition", "en_gen"])), 2);
    assert_eq!(code(&bin(d, &["report", "--condition", "en_gen"])), 2);

    // an endpoint that refuses connections: every request fails, exit 3
    let port = {
        let l = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap().port()
    };
    let cfg = format!(
        r#"{{"endpoints": {{"down": {{"kind": "openai_compatible", "base_url": "http://127.0.0.1:{port}/v1",
            "model_id": "m", "retry": {{"retries": 0}}}}}}, "default_endpoint": "down"}}"#
    );
    std::fs::write(d.join("down.json"), cfg).unwrap();
    assert_eq!(code(&bin(d, &["--config", "down.json", "build-corpus", "--condition", "de_gen"])), 0);
    let probes = d.join("out/probes/de_gen.jsonl");
    let text = std::fs::read_to_string(&probes).unwrap();
    let few: Vec<&str> = text.lines().take(4).collect();
    std::fs::write(&probes, few.join("\n") + "\n").unwrap();
    let o = bin(d, &["--config", "down.json", "generate", "--condition", "de_gen"]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("4 failed"));
    assert_eq!(code(&bin(d, &["--config", "down.json", "score", "--condition", "de_gen"])), 1);
}

#[test]
fn seed_and_out_dir_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("c.json"), r#"{"out_dir": "configured", "generation": {"en_template_count": 30}}"#).unwrap();
    let o = bin(d, &["--config", "c.json", "build-corpus", "--condition", "en_gen"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("630 instances"));
    assert!(d.join("configured/probes/en_gen.jsonl").exists());
    let o = bin(d, &["--config", "c.json", "--out-dir", "elsewhere", "--seed", "5", "build-corpus", "--condition", "en_gen"]);
    assert_eq!(code(&o), 0);
    assert_eq!(
        std::fs::read(d.join("configured/probes/en_gen.jsonl")).unwrap(),
        std::fs::read(d.join("elsewhere/probes/en_gen.jsonl")).unwrap()
    );
}
