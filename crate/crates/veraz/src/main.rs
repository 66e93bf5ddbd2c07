//! Batch command-line frontend: corpus statistics, experiment runs,
//! deployment fits, and report rendering.
//!
//! Exit codes: 0 success, 1 validation error (bad usage, malformed or
//! contradictory configuration), 2 runtime or data error. Progress and
//! logs go to stderr; machine-readable output goes to stdout and files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use veraz::corpus::{length_histogram, LengthHistogram, DEFAULT_LENGTH_PERCENTILE};
use veraz::error::{Error, Result};
use veraz::eval::{PipelineBundle, Representation};
use veraz::report::{ReportDoc, Stat};
use veraz::schemes::{
    expand_grid, run_experiment, train_bundle, DatasetsManifest, ExperimentSpec, RunArtifacts,
    Scheme,
};
use veraz::textnorm::NormalizerConfig;

#[derive(Parser)]
#[command(
    name = "veraz",
    version,
    about = "Fake-news text classification experiments, reproducible from a single seed"
)]
struct Cli {
    /// Worker threads for data-parallel sections (default: all cores).
    /// Results are identical for any value.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Profile datasets: size, class balance, token-length distribution.
    Prepare(PrepareArgs),
    /// Fit a spec's single configuration on its whole training corpus
    /// and save a deployable scoring bundle.
    Train(RunArgs),
    /// Run a single-configuration evaluation spec.
    Eval(RunArgs),
    /// Run a hyperparameter-grid spec.
    Grid(RunArgs),
    /// Run a translated-mixing learning-curve spec.
    Curve(RunArgs),
    /// Render persisted reports as text tables.
    Report(ReportArgs),
    /// Summarize persisted artifacts (reports or bundles).
    Inspect(InspectArgs),
}

#[derive(Args)]
struct PrepareArgs {
    /// Datasets manifest file.
    #[arg(long)]
    manifest: PathBuf,
    /// Dataset names to profile (default: every dataset in the manifest).
    names: Vec<String>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment spec file.
    #[arg(long)]
    spec: PathBuf,
    /// Datasets manifest file.
    #[arg(long)]
    manifest: PathBuf,
    /// Master seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Output override: report directory for eval/grid/curve, bundle
    /// file for train.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long, value_enum)]
    format: ReportFormat,
    /// Report JSON files.
    #[arg(required = true)]
    reports: Vec<PathBuf>,
}

#[derive(Args)]
struct InspectArgs {
    /// Artifact JSON files (reports or bundles).
    #[arg(required = true)]
    files: Vec<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportFormat {
    /// One accuracy row per report, best first.
    Table,
    /// Plot-ready n / accuracy columns from curve reports.
    CurveData,
    /// Row-normalized 2x2 confusion matrices from evaluation reports.
    Confusion,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let ok = e.exit_code() == 0;
            let _ = e.print();
            return if ok { ExitCode::SUCCESS } else { ExitCode::from(1) };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(Error::InvalidConfig("--jobs must be at least 1".to_string()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Error::InvalidConfig(format!("--jobs: {e}")))?;
    }
    match cli.command {
        Command::Prepare(args) => cmd_prepare(&args),
        Command::Train(args) => cmd_train(&args),
        Command::Eval(args) => cmd_run(&args, RunKind::Eval),
        Command::Grid(args) => cmd_run(&args, RunKind::Grid),
        Command::Curve(args) => cmd_run(&args, RunKind::Curve),
        Command::Report(args) => cmd_report(&args),
        Command::Inspect(args) => cmd_inspect(&args),
    }
}

/// Full corpus profile; the json output format serializes this.
#[derive(Serialize)]
struct CorpusProfile {
    name: String,
    documents: usize,
    fake: usize,
    #[serde(rename = "true")]
    true_count: usize,
    files: usize,
    rows_read: usize,
    rows_kept: usize,
    rows_skipped_empty_text: usize,
    ids_disambiguated: usize,
    histogram: LengthHistogram,
}

/// Smallest length L with at least ceil(q * total) documents <= L.
fn length_quantile(counts: &BTreeMap<usize, usize>, total: usize, q: f64) -> usize {
    let target = ((q * total as f64 - 1e-9).ceil() as usize).max(1);
    let mut cumulative = 0;
    for (&len, &count) in counts {
        cumulative += count;
        if cumulative >= target {
            return len;
        }
    }
    *counts.keys().next_back().expect("non-empty histogram")
}

fn cmd_prepare(args: &PrepareArgs) -> Result<()> {
    let manifest = DatasetsManifest::load(&args.manifest)?;
    let names: Vec<String> = if args.names.is_empty() {
        manifest.names().map(str::to_string).collect()
    } else {
        args.names.clone()
    };
    if names.is_empty() {
        return Err(Error::InvalidConfig("manifest declares no datasets".to_string()));
    }

    let mut profiles = Vec::with_capacity(names.len());
    for name in &names {
        eprintln!("profiling '{name}'");
        let (corpus, stats) = manifest.load_corpus(name)?;
        let (fake, true_count) = corpus.class_counts();
        let histogram =
            length_histogram(&corpus, &NormalizerConfig::default(), DEFAULT_LENGTH_PERCENTILE)?;
        profiles.push(CorpusProfile {
            name: name.clone(),
            documents: corpus.len(),
            fake,
            true_count,
            files: stats.len(),
            rows_read: stats.iter().map(|s| s.rows_read).sum(),
            rows_kept: stats.iter().map(|s| s.rows_kept).sum(),
            rows_skipped_empty_text: stats.iter().map(|s| s.rows_skipped_empty_text).sum(),
            ids_disambiguated: stats.iter().map(|s| s.ids_disambiguated).sum(),
            histogram,
        });
    }

    if args.format == Format::Json {
        println!("{}", to_json(&profiles)?);
        return Ok(());
    }
    for p in &profiles {
        let h = &p.histogram;
        let q = |quantile: f64| length_quantile(&h.counts, h.total, quantile);
        println!("corpus={}", p.name);
        println!("  documents={} fake={} true={}", p.documents, p.fake, p.true_count);
        println!(
            "  files={} rows_read={} rows_kept={} skipped_empty_text={} ids_disambiguated={}",
            p.files, p.rows_read, p.rows_kept, p.rows_skipped_empty_text, p.ids_disambiguated
        );
        println!(
            "  token_length p50={} p75={} p90={} p95={} p99={} max={}",
            q(0.50),
            q(0.75),
            q(0.90),
            q(0.95),
            q(0.99),
            h.counts.keys().next_back().copied().unwrap_or(0)
        );
        println!(
            "  recommended_max_len={} (p{:.0})",
            h.recommended_max_len,
            h.percentile * 100.0
        );
    }
    Ok(())
}

enum RunKind {
    Eval,
    Grid,
    Curve,
}

fn load_spec(args: &RunArgs) -> Result<(ExperimentSpec, DatasetsManifest)> {
    let mut spec = ExperimentSpec::load(&args.spec)?;
    let manifest = DatasetsManifest::load(&args.manifest)?;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    Ok((spec, manifest))
}

/// Flag paths are working-directory relative; spec-internal paths
/// resolve against the spec file, so overrides must become absolute.
fn absolutize(p: &PathBuf) -> Result<PathBuf> {
    if p.is_absolute() {
        return Ok(p.clone());
    }
    let cwd = std::env::current_dir().map_err(|e| Error::io("current directory", e))?;
    Ok(cwd.join(p))
}

/// The subcommand must match the shape the spec expands to.
fn check_run_kind(spec: &ExperimentSpec, kind: &RunKind) -> Result<()> {
    let n_configs = match expand_grid(spec) {
        Ok(grid) => grid.len(),
        // Malformed grids get the full violation list from the runner.
        Err(_) => return Ok(()),
    };
    let complaint = match kind {
        RunKind::Eval if spec.scheme == Scheme::Curve => {
            Some("this spec declares the curve scheme; run it with the curve subcommand".to_string())
        }
        RunKind::Eval if n_configs > 1 => Some(format!(
            "this spec expands to {n_configs} configurations; run it with the grid subcommand"
        )),
        RunKind::Grid if spec.scheme == Scheme::Curve => {
            Some("this spec declares the curve scheme; run it with the curve subcommand".to_string())
        }
        RunKind::Grid if n_configs == 1 => Some(
            "this spec expands to a single configuration; run it with the eval subcommand"
                .to_string(),
        ),
        RunKind::Curve if spec.scheme != Scheme::Curve => Some(format!(
            "this spec declares scheme {}; the curve subcommand runs curve specs only",
            spec.scheme
        )),
        _ => None,
    };
    match complaint {
        Some(message) => Err(Error::SpecValidation(message)),
        None => Ok(()),
    }
}

fn fmt_stat(s: &Stat) -> String {
    format!("{:.4}±{:.4}", s.mean, s.std)
}

fn print_artifacts(artifacts: &RunArtifacts) {
    for (path, doc) in &artifacts.written {
        match doc {
            ReportDoc::Eval(r) => {
                let p = &r.payload;
                let mut line = format!(
                    "eval\tscheme={}\tcorpus={}\tmodel={}\ttest_acc={}",
                    p.scheme.as_deref().unwrap_or("-"),
                    p.corpus.name,
                    p.model.family(),
                    fmt_stat(&p.test_acc)
                );
                if let Some(dev) = &p.dev_acc {
                    let _ = write!(line, "\tdev_acc={}", fmt_stat(dev));
                }
                if let Some(ext) = &p.external_acc {
                    let _ = write!(line, "\texternal_acc={}", fmt_stat(ext));
                }
                let _ = write!(line, "\tfile={}", path.display());
                println!("{line}");
            }
            ReportDoc::Grid(g) => {
                let p = &g.payload;
                let best = g.best();
                println!(
                    "grid\tscheme={}\tcorpus={}\tcriterion={}\tconfigs={}\tbest=#{} {} \
                     test_acc={}\tfile={}",
                    p.scheme.as_deref().unwrap_or("-"),
                    p.corpus.name,
                    p.selection_criterion,
                    p.ranked.len(),
                    best.enumeration_index,
                    best.model.family(),
                    fmt_stat(&best.test_acc),
                    path.display()
                );
            }
            ReportDoc::Curve(c) => {
                let p = &c.payload;
                println!(
                    "curve\tscheme={}\tbase={}\ttranslated={}\tpoints={}\tfile={}",
                    p.scheme.as_deref().unwrap_or("-"),
                    p.base_corpus.name,
                    p.translated_corpus.name,
                    p.points.len(),
                    path.display()
                );
                print!("{}", c.to_tsv());
            }
        }
    }
}

fn cmd_run(args: &RunArgs, kind: RunKind) -> Result<()> {
    let (mut spec, manifest) = load_spec(args)?;
    check_run_kind(&spec, &kind)?;
    if let Some(out) = &args.out {
        spec.output = absolutize(out)?;
    }
    eprintln!(
        "running scheme {} spec (seed {}) from {}",
        spec.scheme,
        spec.seed,
        args.spec.display()
    );
    let started = std::time::Instant::now();
    let artifacts = run_experiment(&spec, &manifest)?;
    eprintln!(
        "wrote {} report(s) to {} in {:.1}s",
        artifacts.written.len(),
        artifacts.output_dir.display(),
        started.elapsed().as_secs_f64()
    );
    print_artifacts(&artifacts);
    Ok(())
}

fn cmd_train(args: &RunArgs) -> Result<()> {
    let (spec, manifest) = load_spec(args)?;
    eprintln!(
        "fitting scheme {} configuration (seed {}) on the full training corpus",
        spec.scheme, spec.seed
    );
    let bundle = train_bundle(&spec, &manifest)?;
    let out = match &args.out {
        Some(p) => p.clone(),
        None => spec.resolved_output().join("bundle.json"),
    };
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .map_err(|e| Error::io(parent.display().to_string(), e))?;
        }
    }
    bundle.save_json(&out)?;
    println!(
        "bundle\tmodel={}\tcorpus={}\tvocab={}\tfingerprint={}\tfile={}",
        bundle.model_spec.family(),
        bundle.corpus.name,
        bundle.vocab.len(),
        bundle.fingerprint(),
        out.display()
    );
    Ok(())
}

fn load_docs(paths: &[PathBuf]) -> Result<Vec<(PathBuf, ReportDoc)>> {
    paths
        .iter()
        .map(|p| ReportDoc::load_json(p).map(|doc| (p.clone(), doc)))
        .collect()
}

fn cmd_report(args: &ReportArgs) -> Result<()> {
    let docs = load_docs(&args.reports)?;
    match args.format {
        ReportFormat::Table => report_table(&docs),
        ReportFormat::CurveData => report_curve_data(&docs),
        ReportFormat::Confusion => report_confusion(&docs),
    }
}

fn report_table(docs: &[(PathBuf, ReportDoc)]) -> Result<()> {
    struct Row {
        model: String,
        scheme: String,
        corpus: String,
        test: Stat,
        dev: Option<Stat>,
        file: String,
    }
    let mut rows = Vec::with_capacity(docs.len());
    for (path, doc) in docs {
        let row = match doc {
            ReportDoc::Eval(r) => {
                let p = &r.payload;
                Row {
                    model: p.model.family().to_string(),
                    scheme: p.scheme.clone().unwrap_or_else(|| "-".to_string()),
                    corpus: p.corpus.name.clone(),
                    test: p.test_acc,
                    dev: p.dev_acc,
                    file: path.display().to_string(),
                }
            }
            ReportDoc::Grid(g) => {
                let p = &g.payload;
                let best = g.best();
                Row {
                    model: format!("{}#{}", best.model.family(), best.enumeration_index),
                    scheme: p.scheme.clone().unwrap_or_else(|| "-".to_string()),
                    corpus: p.corpus.name.clone(),
                    test: best.test_acc,
                    dev: best.dev_acc,
                    file: path.display().to_string(),
                }
            }
            ReportDoc::Curve(_) => {
                return Err(Error::InvalidConfig(format!(
                    "{}: curve reports have no scalar accuracy; use --format curve-data",
                    path.display()
                )));
            }
        };
        rows.push(row);
    }
    rows.sort_by(|a, b| {
        b.test
            .mean
            .partial_cmp(&a.test.mean)
            .expect("accuracies are finite")
            .then_with(|| a.file.cmp(&b.file))
    });
    println!("model\tscheme\tcorpus\ttest_acc\ttest_std\tdev_acc\tfile");
    for r in &rows {
        println!(
            "{}\t{}\t{}\t{:.4}\t{:.4}\t{}\t{}",
            r.model,
            r.scheme,
            r.corpus,
            r.test.mean,
            r.test.std,
            r.dev.map(|d| format!("{:.4}", d.mean)).unwrap_or_default(),
            r.file
        );
    }
    Ok(())
}

fn report_curve_data(docs: &[(PathBuf, ReportDoc)]) -> Result<()> {
    for (path, doc) in docs {
        let ReportDoc::Curve(c) = doc else {
            return Err(Error::InvalidConfig(format!(
                "{}: --format curve-data renders curve reports only",
                path.display()
            )));
        };
        if docs.len() > 1 {
            println!("# {}", path.display());
        }
        println!("n\taccuracy");
        for p in &c.payload.points {
            println!(
                "{}\t{}",
                p.n_mixed,
                p.accuracy.map(|a| a.to_string()).unwrap_or_default()
            );
        }
    }
    Ok(())
}

fn print_confusion(label: &str, normalized: &[[f64; 2]; 2]) {
    println!("{label} (rows: true FAKE/TRUE, cols: predicted FAKE/TRUE, row-normalized)");
    for row in normalized {
        println!("{:.4}\t{:.4}", row[0], row[1]);
    }
}

fn report_confusion(docs: &[(PathBuf, ReportDoc)]) -> Result<()> {
    for (path, doc) in docs {
        let ReportDoc::Eval(r) = doc else {
            return Err(Error::InvalidConfig(format!(
                "{}: --format confusion renders evaluation reports only",
                path.display()
            )));
        };
        if docs.len() > 1 {
            println!("# {}", path.display());
        }
        print_confusion("test", &r.payload.test_confusion.normalized);
        if let Some(ext) = &r.payload.external_confusion {
            print_confusion("external", &ext.normalized);
        }
    }
    Ok(())
}

fn repr_name(repr: Representation) -> String {
    match repr {
        Representation::Bow => "bow".to_string(),
        Representation::TfIdf => "tf-idf".to_string(),
        Representation::Sequence { max_len } => format!("sequence(max_len={max_len})"),
    }
}

fn cmd_inspect(args: &InspectArgs) -> Result<()> {
    for path in &args.files {
        match ReportDoc::load_json(path) {
            Ok(doc) => inspect_report(path, &doc),
            Err(_) => match PipelineBundle::load_json(path) {
                Ok(bundle) => inspect_bundle(path, &bundle),
                Err(_) => {
                    return Err(Error::Parse {
                        path: path.display().to_string(),
                        message: "not a recognized report or bundle artifact".to_string(),
                    });
                }
            },
        }
    }
    Ok(())
}

fn inspect_report(path: &PathBuf, doc: &ReportDoc) {
    println!("{}: {} report", path.display(), doc.kind());
    println!("  fingerprint={}", doc.fingerprint());
    match doc {
        ReportDoc::Eval(r) => {
            let p = &r.payload;
            println!(
                "  scheme={} spec_fingerprint={}",
                p.scheme.as_deref().unwrap_or("-"),
                p.spec_fingerprint.as_deref().unwrap_or("-")
            );
            println!(
                "  corpus={} documents={} fake={} true={}",
                p.corpus.name, p.corpus.n_documents, p.corpus.n_fake, p.corpus.n_true
            );
            println!(
                "  model={} repr={} vocab_cap={} seed={}",
                p.model.family(),
                repr_name(p.pipeline.representation),
                p.pipeline.vocab_cap,
                p.seed
            );
            println!(
                "  iterations={} test_acc={}",
                p.iterations.len(),
                fmt_stat(&p.test_acc)
            );
            if let Some(dev) = &p.dev_acc {
                println!("  dev_acc={}", fmt_stat(dev));
            }
            if let Some(ext) = &p.external_acc {
                let name = p.external_corpus.as_ref().map(|c| c.name.as_str()).unwrap_or("-");
                println!("  external={name} external_acc={}", fmt_stat(ext));
            }
            for w in &p.warnings {
                println!("  warning: {w}");
            }
        }
        ReportDoc::Grid(g) => {
            let p = &g.payload;
            println!(
                "  scheme={} spec_fingerprint={}",
                p.scheme.as_deref().unwrap_or("-"),
                p.spec_fingerprint.as_deref().unwrap_or("-")
            );
            println!("  corpus={} criterion={}", p.corpus.name, p.selection_criterion);
            let best = g.best();
            println!(
                "  configs={} best=#{} {} test_acc={}",
                p.ranked.len(),
                best.enumeration_index,
                best.model.family(),
                fmt_stat(&best.test_acc)
            );
        }
        ReportDoc::Curve(c) => {
            let p = &c.payload;
            println!(
                "  scheme={} spec_fingerprint={}",
                p.scheme.as_deref().unwrap_or("-"),
                p.spec_fingerprint.as_deref().unwrap_or("-")
            );
            println!(
                "  base={} translated={} model={} points={}",
                p.base_corpus.name,
                p.translated_corpus.name,
                p.model.family(),
                p.points.len()
            );
        }
    }
}

fn inspect_bundle(path: &PathBuf, bundle: &PipelineBundle) {
    println!("{}: pipeline bundle", path.display());
    println!("  fingerprint={}", bundle.fingerprint());
    println!(
        "  model={} repr={} vocab={} idf={}",
        bundle.model_spec.family(),
        repr_name(bundle.pipeline.representation),
        bundle.vocab.len(),
        if bundle.idf.is_some() { "yes" } else { "no" }
    );
    println!(
        "  fitted_on={} documents={} fake={} true={}",
        bundle.corpus.name, bundle.corpus.n_documents, bundle.corpus.n_fake, bundle.corpus.n_true
    );
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value).map_err(|e| Error::Parse {
        path: "stdout".to_string(),
        message: e.to_string(),
    })
}
