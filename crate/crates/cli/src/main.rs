use std::net::IpAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use corefprobe::config::Config;
use corefprobe::pipeline::{Analysis, Pipeline};
use corefprobe::{Condition, Error};

/// Coreference probes for gendered and gender-inclusive antecedents.
#[derive(Parser)]
#[command(name = "corefprobe", version)]
struct Cli {
    /// JSON configuration file; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory, overriding the configured one.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,

    /// Root seed, overriding the configured one.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Conditions {
    /// Condition to process (repeatable); all applicable conditions when omitted.
    #[arg(long = "condition", value_parser = parse_condition)]
    conditions: Vec<Condition>,
}

#[derive(Subcommand)]
enum Command {
    /// Expand template banks into probe files.
    BuildCorpus(Conditions),
    /// Score coreferent first-token logprobs for probability conditions.
    Score {
        #[command(flatten)]
        cond: Conditions,
        /// Named endpoint from the config; the default endpoint when omitted
        #[arg(long)]
        endpoint: Option<String>,
    },
    /// Generate continuations for generation conditions.
    Generate {
        #[command(flatten)]
        cond: Conditions,
        /// Named endpoint from the config; the default endpoint when omitted
        #[arg(long)]
        endpoint: Option<String>,
    },
    /// Import generations and serve the annotation API.
    AnnotateServe {
        /// Generation condition to annotate
        #[arg(long, value_parser = parse_condition)]
        condition: Condition,
        /// Listen address, overriding the configured one
        #[arg(long)]
        bind: Option<IpAddr>,
        /// Listen port, overriding the configured one
        #[arg(long)]
        port: Option<u16>,
        /// Static annotation UI assets.
        #[arg(long)]
        ui_dir: Option<PathBuf>,
    },
    /// Majority-vote labels and compute agreement.
    Aggregate {
        #[command(flatten)]
        cond: Conditions,
        /// Aggregate even when some annotators have not labelled every item.
        #[arg(long)]
        partial: bool,
    },
    /// Run the statistical analysis.
    Analyze {
        #[command(flatten)]
        cond: Conditions,
        /// Separate chi-square tests for coreferent and non-coreferent continuations.
        #[arg(long)]
        split_by_coreference: bool,
    },
    /// Render tables and figures from analysis results.
    Report(Conditions),
}

fn parse_condition(s: &str) -> Result<Condition, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

const EXIT_CONFIG: u8 = 1;
const EXIT_UPSTREAM: u8 = 2;
const EXIT_FAILURE: u8 = 3;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::UpstreamMissing { .. } => EXIT_UPSTREAM,
        Error::Analysis(_) | Error::Stats(_) | Error::Client(_) | Error::Annotation(_) => EXIT_FAILURE,
        _ => EXIT_CONFIG,
    }
}

fn select(c: &Conditions, want_generation: Option<bool>) -> Vec<Condition> {
    if !c.conditions.is_empty() {
        return c.conditions.clone();
    }
    Condition::ALL
        .into_iter()
        .filter(|x| want_generation.is_none_or(|g| x.is_generation() == g))
        .collect()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_CONFIG) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(cli: Cli) -> Result<u8, Error> {
    let mut config = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    let pipeline = Pipeline::new(config, cli.out_dir)?;
    let mut code = 0;
    match cli.command {
        Command::BuildCorpus(c) => {
            for cond in select(&c, None) {
                let s = pipeline.build_corpus(cond)?;
                println!("{cond}: {} instances -> {}", s.instances, s.path.display());
            }
        }
        Command::Score { cond, endpoint } => {
            for c in select(&cond, Some(false)) {
                let s = pipeline.score(c, endpoint.as_deref())?;
                code = code.max(report_batch(c, &s));
            }
        }
        Command::Generate { cond, endpoint } => {
            for c in select(&cond, Some(true)) {
                let s = pipeline.generate(c, endpoint.as_deref())?;
                code = code.max(report_batch(c, &s));
            }
        }
        Command::AnnotateServe { condition, bind, port, ui_dir } => {
            let (store, imported) = pipeline.annotation_store(condition)?;
            println!(
                "{condition}: {} tasks ({} new), {} skipped records",
                store.task_count(),
                imported.new_tasks,
                imported.skipped.len()
            );
            for (line, why) in &imported.skipped {
                eprintln!("skipped line {line}: {why}");
            }
            let settings = &pipeline.config.annotation;
            let mut addr = settings.addr();
            if let Some(b) = bind {
                addr.set_ip(b);
            }
            if let Some(p) = port {
                addr.set_port(p);
            }
            let ui = ui_dir.or_else(|| settings.ui_dir.clone());
            let rt = tokio::runtime::Runtime::new().map_err(|e| Error::Annotation(format!("runtime: {e}")))?;
            rt.block_on(corefprobe::annotation::serve(Arc::new(store), addr, ui))
                .map_err(|e| Error::Annotation(format!("server on {addr}: {e}")))?;
        }
        Command::Aggregate { cond, partial } => {
            for c in select(&cond, Some(true)) {
                let agg = pipeline.aggregate(c, partial)?;
                println!(
                    "{c}: {} items, {} gender NULL, {} coreference NULL",
                    agg.n_items, agg.gender_nulls, agg.coreference_nulls
                );
                for (what, k) in [("gender", &agg.gender_kappa), ("coreference", &agg.coreference_kappa)] {
                    if let Some(k) = k {
                        println!("  {what} kappa = {:.3} ({})", k.kappa, k.label);
                    }
                }
                if !agg.missing.is_empty() {
                    println!("  partial: {} labels missing", agg.missing.len());
                }
            }
        }
        Command::Analyze { cond, split_by_coreference } => {
            for c in select(&cond, None) {
                match pipeline.analyze(c, split_by_coreference)? {
                    Analysis::Probability(a) => {
                        for e in &a.anova.effects {
                            println!(
                                "{c}: {} F({}, {}) = {:.2}, p = {:.3e}, eta2 = {:.3} ({})",
                                e.effect, e.df1, e.df2, e.f, e.p, e.eta2, e.label
                            );
                        }
                        for w in &a.warnings {
                            eprintln!("warning: {c}: {w}");
                        }
                    }
                    Analysis::Generation(a) => {
                        for t in &a.tests {
                            println!(
                                "{c} [{}]: chi2({}) = {:.2}, p = {:.3e}, V_adj = {:.3} ({})",
                                t.group, t.result.df, t.result.chi2, t.result.p, t.result.cramers_v_adjusted, t.result.label
                            );
                        }
                        for w in &a.warnings {
                            eprintln!("warning: {c}: {w}");
                        }
                    }
                }
            }
        }
        Command::Report(c) => {
            for cond in select(&c, None) {
                for p in pipeline.report(cond)? {
                    println!("{}", p.display());
                }
            }
        }
    }
    Ok(code)
}

fn report_batch(c: Condition, s: &corefprobe::model_client::BatchSummary) -> u8 {
    println!(
        "{c}: {} total, {} already done, {} new, {} failed",
        s.total,
        s.skipped_existing,
        s.succeeded,
        s.failed.len()
    );
    for f in &s.failed {
        eprintln!("failed {}: {}", f.instance_id, f.error);
    }
    if s.is_complete() {
        0
    } else {
        EXIT_FAILURE
    }
}
