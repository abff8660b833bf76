//! Stage orchestration over an output directory.
//!
//! Layout under `out_dir`:
//!
//! ```text
//! probes/<cond>.jsonl          build-corpus
//! scores/<cond>.jsonl          score
//! generations/<cond>.jsonl     generate
//! annotation/<cond>/           annotate-serve (tasks and per-annotator logs)
//! aggregated/<cond>.jsonl      aggregate
//! aggregated/<cond>_agreement.json
//! analysis/<cond>.json         analyze
//! report/<cond>/               report
//! ```

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::annotation::{AggregatedLabel, Aggregation, AnnotationStore, CorefLabel, GenderLabel, ImportSummary};
use crate::config::Config;
use crate::corpus::{build_condition, Banks, Condition, Gender, Language, ProbeInstance};
use crate::error::{Error, Result};
use crate::jsonl::{read_jsonl, write_jsonl};
use crate::model_client::{run_batch, Backend, BatchMode, BatchOptions, BatchSummary, ScoreRecord};
use crate::report::{self, file_sha256, InputDigest, Provenance};
use crate::seed::derive_seed;
use crate::stats::{
    chi_square_independence, AnovaResult, BoxSummary, ChiSqOptions, ChiSqResult, FactorialSample, TukeyResult,
    TwoWayDesign,
};

pub const FACTOR_ANTECEDENT: &str = "antecedent";
pub const FACTOR_COREFERENT: &str = "coreferent";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellBox {
    pub antecedent: String,
    pub coreferent: String,
    pub summary: Option<BoxSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityAnalysis {
    pub condition: Condition,
    pub model_id: String,
    pub provenance: Provenance,
    pub anova: AnovaResult,
    pub tukey: TukeyResult,
    pub cells: Vec<CellBox>,
    pub warnings: Vec<String>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedChiSq {
    pub group: String,
    pub result: ChiSqResult,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Exclusions {
    /// Items whose majority gender label is `none_mentioned`.
    pub none_mentioned: usize,
    /// Items without a majority gender label.
    pub gender_null: usize,
    /// Items left out of the split tests: coreference `unclear` or without majority.
    pub coreference_unresolved: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationAnalysis {
    pub condition: Condition,
    pub provenance: Provenance,
    pub split_by_coreference: bool,
    pub tests: Vec<NamedChiSq>,
    pub excluded: Exclusions,
    pub warnings: Vec<String>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Analysis {
    Probability(ProbabilityAnalysis),
    Generation(GenerationAnalysis),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CorpusSummary {
    pub condition: Condition,
    pub instances: usize,
    pub path: PathBuf,
}

pub struct Pipeline {
    pub config: Config,
    pub out_dir: PathBuf,
    banks: Banks,
}

impl Pipeline {
    /// `out_dir` overrides the configured output directory.
    pub fn new(config: Config, out_dir: Option<PathBuf>) -> Result<Self> {
        config.validate()?;
        let banks = match &config.data_dir {
            Some(dir) => Banks::load_dir(dir)?,
            None => Banks::bundled()?,
        };
        let out_dir = out_dir.unwrap_or_else(|| config.out_dir.clone());
        Ok(Self { config, out_dir, banks })
    }

    pub fn banks(&self) -> &Banks {
        &self.banks
    }

    pub fn probes_path(&self, c: Condition) -> PathBuf {
        self.out_dir.join("probes").join(format!("{c}.jsonl"))
    }

    pub fn scores_path(&self, c: Condition) -> PathBuf {
        self.out_dir.join("scores").join(format!("{c}.jsonl"))
    }

    pub fn generations_path(&self, c: Condition) -> PathBuf {
        self.out_dir.join("generations").join(format!("{c}.jsonl"))
    }

    pub fn annotation_dir(&self, c: Condition) -> PathBuf {
        self.out_dir.join("annotation").join(c.as_str())
    }

    pub fn aggregated_path(&self, c: Condition) -> PathBuf {
        self.out_dir.join("aggregated").join(format!("{c}.jsonl"))
    }

    pub fn agreement_path(&self, c: Condition) -> PathBuf {
        self.out_dir.join("aggregated").join(format!("{c}_agreement.json"))
    }

    pub fn analysis_path(&self, c: Condition) -> PathBuf {
        self.out_dir.join("analysis").join(format!("{c}.json"))
    }

    pub fn report_dir(&self, c: Condition) -> PathBuf {
        self.out_dir.join("report").join(c.as_str())
    }

    pub fn annotators(&self, language: Language) -> &[String] {
        match language {
            Language::EN => &self.config.annotation.annotators_en,
            Language::DE => &self.config.annotation.annotators_de,
        }
    }

    fn upstream(path: &Path, producer: &str) -> Result<()> {
        if path.exists() {
            Ok(())
        } else {
            Err(Error::UpstreamMissing { path: path.to_path_buf(), producer: producer.into() })
        }
    }

    fn digest(&self, path: &Path) -> Result<InputDigest> {
        let rel = path.strip_prefix(&self.out_dir).unwrap_or(path);
        Ok(InputDigest {
            path: rel.to_string_lossy().replace('\\', "/"),
            sha256: file_sha256(path)?,
        })
    }

    fn provenance(&self, inputs: &[&Path]) -> Result<Provenance> {
        Ok(Provenance {
            config_sha256: self.config.hash(),
            seed: self.config.seed,
            inputs: inputs.iter().map(|p| self.digest(p)).collect::<Result<_>>()?,
        })
    }

    pub fn build_corpus(&self, c: Condition) -> Result<CorpusSummary> {
        let probes = build_condition(c, &self.banks, &self.config.generation.corpus)?;
        let path = self.probes_path(c);
        write_jsonl(&path, &probes)?;
        log::info!("{c}: wrote {} probes to {}", probes.len(), path.display());
        Ok(CorpusSummary { condition: c, instances: probes.len(), path })
    }

    pub fn load_probes(&self, c: Condition) -> Result<Vec<ProbeInstance>> {
        let path = self.probes_path(c);
        Self::upstream(&path, "build-corpus")?;
        read_jsonl(&path)
    }

    /// Scores a probability condition with the configured endpoint.
    pub fn score(&self, c: Condition, endpoint: Option<&str>) -> Result<BatchSummary> {
        let (_, ep) = self.config.endpoint(endpoint)?;
        let backend = ep.build_backend()?;
        self.score_with(c, backend.as_ref(), &ep.batch_options())
    }

    pub fn score_with(&self, c: Condition, backend: &dyn Backend, opts: &BatchOptions) -> Result<BatchSummary> {
        if c.is_generation() {
            return Err(Error::Config(format!("{c} is a generation condition; use `generate`")));
        }
        let probes = self.load_probes(c)?;
        let out = self.scores_path(c);
        let summary = run_batch(&probes, backend, &BatchMode::Score, &out, opts)?;
        canonical_order(&out, &probes)?;
        Ok(summary)
    }

    pub fn generate(&self, c: Condition, endpoint: Option<&str>) -> Result<BatchSummary> {
        let (_, ep) = self.config.endpoint(endpoint)?;
        let backend = ep.build_backend()?;
        self.generate_with(c, backend.as_ref(), &ep.batch_options())
    }

    pub fn generate_with(&self, c: Condition, backend: &dyn Backend, opts: &BatchOptions) -> Result<BatchSummary> {
        if !c.is_generation() {
            return Err(Error::Config(format!("{c} is a probability condition; use `score`")));
        }
        let probes = self.load_probes(c)?;
        let out = self.generations_path(c);
        let mode = BatchMode::Generate {
            max_tokens: self.config.generation.max_tokens_override.unwrap_or(c.max_tokens()),
            decoding: self.config.generation.decoding.clone(),
        };
        let summary = run_batch(&probes, backend, &mode, &out, opts)?;
        canonical_order(&out, &probes)?;
        Ok(summary)
    }

    /// Opens the annotation store for `c` and imports any new generations.
    pub fn annotation_store(&self, c: Condition) -> Result<(AnnotationStore, ImportSummary)> {
        if !c.is_generation() {
            return Err(Error::Config(format!("{c} has no generations to annotate")));
        }
        let gens = self.generations_path(c);
        Self::upstream(&gens, "generate")?;
        let store = AnnotationStore::open(&self.annotation_dir(c), self.annotators(c.language()), self.config.seed)?;
        let summary = store.import_generations(&gens)?;
        Ok((store, summary))
    }

    pub fn aggregate(&self, c: Condition, partial: bool) -> Result<Aggregation> {
        let tasks = self.annotation_dir(c).join("tasks.jsonl");
        Self::upstream(&tasks, "annotate-serve")?;
        let store = AnnotationStore::open(&self.annotation_dir(c), self.annotators(c.language()), self.config.seed)?;
        let agg = store.aggregate(partial)?;
        write_jsonl(&self.aggregated_path(c), &agg.labels)?;
        let summary = Aggregation { labels: Vec::new(), ..agg.clone() };
        write_json(&self.agreement_path(c), &summary)?;
        Ok(agg)
    }

    pub fn analyze(&self, c: Condition, split_by_coreference: bool) -> Result<Analysis> {
        let analysis = if c.is_generation() {
            Analysis::Generation(self.analyze_generation(c, split_by_coreference)?)
        } else {
            Analysis::Probability(self.analyze_probability(c)?)
        };
        write_json(&self.analysis_path(c), &analysis)?;
        Ok(analysis)
    }

    fn analyze_probability(&self, c: Condition) -> Result<ProbabilityAnalysis> {
        let probes = self.load_probes(c)?;
        let scores_path = self.scores_path(c);
        Self::upstream(&scores_path, "score")?;
        let scores: Vec<ScoreRecord> = read_jsonl(&scores_path)?;
        let by_id: HashMap<&str, &ScoreRecord> = scores.iter().map(|s| (s.instance_id.as_str(), s)).collect();

        let mut samples = Vec::with_capacity(probes.len());
        let mut missing = Vec::new();
        for p in &probes {
            let Some(coref) = p.coreferent_gender else {
                return Err(Error::Analysis(format!("probe {} has no coreferent", p.instance_id)));
            };
            match by_id.get(p.instance_id.as_str()) {
                Some(s) => samples.push(FactorialSample::new(s.logprob, p.antecedent_gender.as_str(), coref.as_str())),
                None => missing.push(p.instance_id.as_str()),
            }
        }
        if !missing.is_empty() {
            return Err(Error::Analysis(format!(
                "{} of {} probes have no score (first: {}); rerun `corefprobe score`",
                missing.len(),
                probes.len(),
                missing[0]
            )));
        }
        let mut model_ids: Vec<&str> = scores.iter().map(|s| s.model_id.as_str()).collect();
        model_ids.sort_unstable();
        model_ids.dedup();
        if model_ids.len() > 1 {
            return Err(Error::Analysis(format!(
                "{} mixes scores from several models: {}",
                scores_path.display(),
                model_ids.join(", ")
            )));
        }

        let levels_a: Vec<String> = c.antecedent_levels().iter().map(|l| l.as_str().to_string()).collect();
        let levels_b: Vec<String> = Gender::ALL.iter().map(|g| g.as_str().to_string()).collect();
        let design = TwoWayDesign::new(FACTOR_ANTECEDENT, levels_a.clone(), FACTOR_COREFERENT, levels_b.clone());
        let anova = design.anova(&samples)?;
        let tukey = crate::stats::tukey_hsd(&design, &samples)?;

        let mut cells = Vec::new();
        for a in &levels_a {
            for b in &levels_b {
                let v: Vec<f64> = samples
                    .iter()
                    .filter(|s| &s.factor_a == a && &s.factor_b == b)
                    .map(|s| s.response)
                    .collect();
                cells.push(CellBox { antecedent: a.clone(), coreferent: b.clone(), summary: BoxSummary::from_values(&v) });
            }
        }

        let warnings = soft_checks(c, &anova);
        let mut notes = vec![
            format!("response: first-token log-probability of the coreferent, N = {}", anova.n_total),
            anova.eta2_definition.clone(),
            format!("eta2 CI: {}", anova.eta2_ci_method),
            "fixed-effects model; templates are not modelled as a random factor".into(),
            format!("Tukey HSD over all {} interaction cells, alpha = {}", tukey.k, tukey.alpha),
        ];
        if c.language() == Language::EN {
            let i = anova.interaction().eta2;
            let dominant = i > anova.a().eta2 && i > anova.b().eta2;
            notes.push(format!(
                "interaction eta2 {} both main effects",
                if dominant { "exceeds" } else { "does not exceed" }
            ));
        }
        Ok(ProbabilityAnalysis {
            condition: c,
            model_id: model_ids.first().map(|s| s.to_string()).unwrap_or_default(),
            provenance: self.provenance(&[&self.probes_path(c), &scores_path])?,
            anova,
            tukey,
            cells,
            warnings,
            notes,
        })
    }

    fn analyze_generation(&self, c: Condition, split: bool) -> Result<GenerationAnalysis> {
        let probes = self.load_probes(c)?;
        let agg_path = self.aggregated_path(c);
        Self::upstream(&agg_path, "aggregate")?;
        let labels: Vec<AggregatedLabel> = read_jsonl(&agg_path)?;
        let level_of: HashMap<&str, &str> =
            probes.iter().map(|p| (p.instance_id.as_str(), p.antecedent_gender.as_str())).collect();

        let rows: Vec<String> = c.antecedent_levels().iter().map(|l| l.as_str().to_string()).collect();
        let cols: Vec<GenderLabel> =
            GenderLabel::allowed(c.language()).into_iter().filter(|g| g.is_gendered()).collect();
        let col_names: Vec<String> = cols.iter().map(|g| g.as_str().to_string()).collect();

        let mut excluded = Exclusions::default();
        let groups: Vec<(&str, Option<CorefLabel>)> = if split {
            vec![("coreferent", Some(CorefLabel::Yes)), ("non_coreferent", Some(CorefLabel::No))]
        } else {
            vec![("all", None)]
        };
        let mut tables = vec![vec![vec![0u64; cols.len()]; rows.len()]; groups.len()];
        for l in &labels {
            let level = level_of.get(l.instance_id.as_str()).ok_or_else(|| {
                Error::Analysis(format!("aggregated label for unknown instance {}", l.instance_id))
            })?;
            let r = rows.iter().position(|x| x == level).expect("declared level");
            let gender = match l.gender_final {
                None => {
                    excluded.gender_null += 1;
                    continue;
                }
                Some(GenderLabel::NoneMentioned) => {
                    excluded.none_mentioned += 1;
                    continue;
                }
                Some(g) => g,
            };
            let col = cols.iter().position(|x| *x == gender).ok_or_else(|| {
                Error::Analysis(format!("label {gender} is not valid for {:?}", c.language()))
            })?;
            for (gi, (_, want)) in groups.iter().enumerate() {
                match want {
                    None => tables[gi][r][col] += 1,
                    Some(w) if l.coreference_final == Some(*w) => tables[gi][r][col] += 1,
                    Some(_) => {}
                }
            }
            if split && !matches!(l.coreference_final, Some(CorefLabel::Yes | CorefLabel::No)) {
                excluded.coreference_unresolved += 1;
            }
        }

        let mut tests = Vec::new();
        let mut warnings = Vec::new();
        for ((name, _), table) in groups.iter().zip(&tables) {
            let opts = ChiSqOptions {
                bootstrap_resamples: self.config.bootstrap_resamples,
                seed: derive_seed(self.config.seed, &format!("chisq/{c}/{name}"), 0),
                ..ChiSqOptions::default()
            };
            match chi_square_independence(&rows, &col_names, table, &opts) {
                Ok(result) => tests.push(NamedChiSq { group: name.to_string(), result }),
                Err(e) if split => warnings.push(format!("{name}: test not computed: {e}")),
                Err(e) => return Err(e.into()),
            }
        }
        let notes = vec![
            format!(
                "rows: antecedent levels; columns: gender mentioned in the continuation ({})",
                col_names.join(", ")
            ),
            format!(
                "excluded: {} none_mentioned, {} without majority gender label",
                excluded.none_mentioned, excluded.gender_null
            ),
            format!("Cramer's V CI: multinomial bootstrap, {} resamples", self.config.bootstrap_resamples),
        ];
        Ok(GenerationAnalysis {
            condition: c,
            provenance: self.provenance(&[&self.probes_path(c), &agg_path])?,
            split_by_coreference: split,
            tests,
            excluded,
            warnings,
            notes,
        })
    }

    pub fn load_analysis(&self, c: Condition) -> Result<Analysis> {
        let path = self.analysis_path(c);
        Self::upstream(&path, "analyze")?;
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Writes report files for `c` and returns their paths.
    pub fn report(&self, c: Condition) -> Result<Vec<PathBuf>> {
        let analysis = self.load_analysis(c)?;
        let mut prov = match &analysis {
            Analysis::Probability(a) => a.provenance.clone(),
            Analysis::Generation(a) => a.provenance.clone(),
        };
        prov.inputs.push(self.digest(&self.analysis_path(c))?);
        let dir = self.report_dir(c);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let mut files: Vec<(&str, String)> = Vec::new();
        match &analysis {
            Analysis::Probability(a) => {
                let (csv, md) = report::cell_means_tables(&a.anova, &prov);
                files.push(("cell_means.csv", csv));
                files.push(("cell_means.md", md));
                let mut anova_md = report::anova_markdown(&a.anova, &prov);
                if !a.warnings.is_empty() {
                    let w: String = a.warnings.iter().map(|w| format!("- warning: {w}\n")).collect();
                    anova_md = anova_md.replacen("\n## Provenance", &format!("\n{w}\n## Provenance"), 1);
                }
                files.push(("anova.md", anova_md));
                files.push(("tukey.csv", report::tukey_csv(&a.tukey, &prov)));
                let groups = a.anova.levels_a.clone();
                let series = a.anova.levels_b.clone();
                let grid: Vec<Vec<Option<BoxSummary>>> = groups
                    .iter()
                    .map(|g| {
                        series
                            .iter()
                            .map(|s| {
                                a.cells
                                    .iter()
                                    .find(|cb| &cb.antecedent == g && &cb.coreferent == s)
                                    .and_then(|cb| cb.summary.clone())
                            })
                            .collect()
                    })
                    .collect();
                let title = format!("{c}: log(p) of coreferent by antecedent ({})", a.model_id);
                files.push(("distribution.svg", report::render_distribution_svg(&title, &groups, &series, &grid, &prov)));
            }
            Analysis::Generation(a) => {
                let named: Vec<(String, ChiSqResult)> =
                    a.tests.iter().map(|t| (t.group.clone(), t.result.clone())).collect();
                let mut md = report::chisq_markdown(&named, &prov);
                let mut extra = String::new();
                for n in &a.notes {
                    extra.push_str(&format!("- {n}\n"));
                }
                for w in &a.warnings {
                    extra.push_str(&format!("- warning: {w}\n"));
                }
                md = md.replacen("\n## Provenance", &format!("\n{extra}\n## Provenance"), 1);
                files.push(("chisq.md", md));
                files.push(("contingency.csv", report::contingency_csv(&named, &prov)));
            }
        }
        let mut out = Vec::new();
        for (name, body) in files {
            let p = dir.join(name);
            std::fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
            out.push(p);
        }
        Ok(out)
    }
}

/// Degrees-of-freedom expectations for the full German corpus.
fn soft_checks(c: Condition, anova: &AnovaResult) -> Vec<String> {
    let mut w = Vec::new();
    if c == Condition::DePl {
        let expect = [(anova.a().df1, 7, "antecedent"), (anova.b().df1, 2, "coreferent"), (anova.interaction().df1, 14, "interaction")];
        for (got, want, what) in expect {
            if got != want {
                w.push(format!("{what} df is {got}, expected {want} for the full German design"));
            }
        }
        if anova.error_df != 10536 {
            w.push(format!("error df is {}, expected 10536 for the full German corpus", anova.error_df));
        }
    }
    if anova.degenerate {
        w.push("all responses are identical; F and eta2 are undefined".into());
    }
    w
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut body = serde_json::to_string_pretty(value)?;
    body.push('\n');
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}

/// Rewrites a batch output in probe order so that parallel completion order
/// does not leak into file contents.
fn canonical_order(path: &Path, probes: &[ProbeInstance]) -> Result<()> {
    if !path.exists() {
        return Ok(());
    }
    let rank: HashMap<&str, usize> = probes.iter().enumerate().map(|(i, p)| (p.instance_id.as_str(), i)).collect();
    let mut recs: Vec<Value> = read_jsonl(path)?;
    recs.sort_by_key(|r| {
        let id = r.get("instance_id").and_then(Value::as_str).unwrap_or("");
        (rank.get(id).copied().unwrap_or(usize::MAX), id.to_string())
    });
    write_jsonl(path, &recs)?;
    Ok(())
}
