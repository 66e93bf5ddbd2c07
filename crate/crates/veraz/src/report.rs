//! Structured experiment reports: JSON documents with a fingerprinted
//! payload, plus flat TSV tables for external plotting.
//!
//! Timestamps and wall-clock figures live outside the payload, so
//! re-running an experiment with the same seed reproduces the payload
//! fingerprint exactly.

use std::fmt::Write as _;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, SplitPlan};
use crate::error::{Error, Result};
use crate::eval::{ModelSpec, PipelineSettings};
use crate::util::fingerprint;

pub const REPORT_FORMAT_VERSION: u32 = 1;

/// Mean and spread of per-iteration accuracies. The spread is the
/// population standard deviation (divide by n, not n-1): the iterations
/// are the whole set being described, not a sample from a larger one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    /// None for an empty slice.
    pub fn over(values: &[f64]) -> Option<Stat> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Some(Stat { mean, std: var.sqrt() })
    }
}

/// 2x2 confusion matrix; rows are the true class and columns the
/// predicted class, both in (FAKE, TRUE) order.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; 2]; 2],
    /// Row-stochastic view of `counts`; all-zero rows stay zero.
    pub normalized: [[f64; 2]; 2],
}

impl ConfusionMatrix {
    pub fn from_counts(counts: [[u64; 2]; 2]) -> ConfusionMatrix {
        let mut normalized = [[0.0; 2]; 2];
        for (row, norm) in counts.iter().zip(normalized.iter_mut()) {
            let total: u64 = row.iter().sum();
            if total > 0 {
                for (count, cell) in row.iter().zip(norm.iter_mut()) {
                    *cell = *count as f64 / total as f64;
                }
            }
        }
        ConfusionMatrix { counts, normalized }
    }

    /// Entrywise accumulation; the normalized view is re-derived.
    pub fn add_counts(&mut self, other: [[u64; 2]; 2]) {
        for (row, add) in self.counts.iter_mut().zip(other.iter()) {
            for (cell, a) in row.iter_mut().zip(add.iter()) {
                *cell += a;
            }
        }
        *self = ConfusionMatrix::from_counts(self.counts);
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Correctly classified items (the trace).
    pub fn correct(&self) -> u64 {
        self.counts[0][0] + self.counts[1][1]
    }
}

/// Size and class balance of a corpus, echoed into reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub name: String,
    pub n_documents: usize,
    pub n_fake: usize,
    pub n_true: usize,
}

impl CorpusSummary {
    pub fn of(corpus: &Corpus) -> CorpusSummary {
        let (n_fake, n_true) = corpus.class_counts();
        CorpusSummary {
            name: corpus.name.clone(),
            n_documents: corpus.len(),
            n_fake,
            n_true,
        }
    }
}

/// One bootstrap iteration's outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationOutcome {
    pub iteration: usize,
    pub train_size: usize,
    pub dev_size: usize,
    pub test_size: usize,
    /// Vocabulary size fitted on this iteration's training split.
    pub vocab_size: usize,
    pub dev_accuracy: Option<f64>,
    pub test_accuracy: f64,
    /// Accuracy over the external evaluation corpus, when one is bound.
    pub external_accuracy: Option<f64>,
    /// Fraction of the training vocabulary found in the word-vector file.
    pub embedding_coverage: Option<f64>,
    /// Fraction of the external corpus' token types present in this
    /// iteration's training vocabulary.
    pub external_vocab_overlap: Option<f64>,
    /// Fingerprint of the fitted parameters; leakage checks compare these.
    pub model_fingerprint: String,
    pub stopped_early_at: Option<usize>,
    pub best_epoch: Option<usize>,
}

/// The fingerprinted body of an evaluation run: configuration echoes and
/// results, but nothing time-dependent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalPayload {
    pub format_version: u32,
    /// Experiment scheme tag when run from a spec file.
    pub scheme: Option<String>,
    /// Fingerprint of the experiment spec that produced this run.
    pub spec_fingerprint: Option<String>,
    pub corpus: CorpusSummary,
    pub external_corpus: Option<CorpusSummary>,
    pub model: ModelSpec,
    pub pipeline: PipelineSettings,
    pub split: SplitPlan,
    /// Master model seed; iteration i trains with splitmix64(seed, i).
    pub seed: u64,
    /// Fingerprint over (model, pipeline, split): identifies the
    /// configuration independently of its results.
    pub config_fingerprint: String,
    pub iterations: Vec<IterationOutcome>,
    pub dev_acc: Option<Stat>,
    pub test_acc: Stat,
    pub external_acc: Option<Stat>,
    /// Confusion counts summed over the iterations' test splits.
    pub test_confusion: ConfusionMatrix,
    pub external_confusion: Option<ConfusionMatrix>,
    pub warnings: Vec<String>,
}

/// A persisted evaluation run. `fingerprint` covers the payload alone;
/// the timestamps sit outside it, so re-runs reproduce the fingerprint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub payload: EvalPayload,
    pub fingerprint: String,
    pub created_unix: u64,
    pub wall_clock_secs: f64,
}

impl EvalReport {
    pub fn new(payload: EvalPayload, wall_clock_secs: f64) -> EvalReport {
        let fp = fingerprint(&payload);
        EvalReport {
            payload,
            fingerprint: fp,
            created_unix: now_unix(),
            wall_clock_secs,
        }
    }

    /// Re-stamps the scheme tag, recomputing the payload fingerprint.
    pub fn with_scheme(self, scheme: &str) -> EvalReport {
        EvalReport::new(
            EvalPayload {
                scheme: Some(scheme.to_string()),
                ..self.payload
            },
            self.wall_clock_secs,
        )
    }

    /// Re-stamps the producing spec's fingerprint, recomputing the
    /// payload fingerprint.
    pub fn with_spec_fingerprint(self, spec_fingerprint: &str) -> EvalReport {
        EvalReport::new(
            EvalPayload {
                spec_fingerprint: Some(spec_fingerprint.to_string()),
                ..self.payload
            },
            self.wall_clock_secs,
        )
    }

    /// Flat table: one row per iteration.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from(
            "iteration\ttrain_size\tdev_size\ttest_size\tvocab_size\tdev_accuracy\t\
             test_accuracy\texternal_accuracy\tstopped_early_at\tbest_epoch\tmodel_fingerprint\n",
        );
        for it in &self.payload.iterations {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                it.iteration,
                it.train_size,
                it.dev_size,
                it.test_size,
                it.vocab_size,
                opt_cell(&it.dev_accuracy),
                it.test_accuracy,
                opt_cell(&it.external_accuracy),
                opt_cell(&it.stopped_early_at),
                opt_cell(&it.best_epoch),
                it.model_fingerprint,
            );
        }
        out
    }
}

/// One evaluated grid point with its aggregates and per-iteration
/// accuracies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridEntry {
    /// Position in the grid's Cartesian enumeration (the tie-break key).
    pub enumeration_index: usize,
    pub model: ModelSpec,
    pub pipeline: PipelineSettings,
    pub dev_accuracies: Option<Vec<f64>>,
    pub test_accuracies: Vec<f64>,
    pub dev_acc: Option<Stat>,
    pub test_acc: Stat,
    /// Fingerprint of the point's full evaluation report payload.
    pub report_fingerprint: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPayload {
    pub format_version: u32,
    pub scheme: Option<String>,
    /// Fingerprint of the experiment spec that produced this run.
    pub spec_fingerprint: Option<String>,
    pub corpus: CorpusSummary,
    pub split: SplitPlan,
    /// "mean-dev-accuracy" when the plan carves a dev split, otherwise
    /// "mean-test-accuracy".
    pub selection_criterion: String,
    /// Entries ranked best-first under the selection criterion; exact
    /// ties keep enumeration order.
    pub ranked: Vec<GridEntry>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    pub payload: GridPayload,
    pub fingerprint: String,
    pub created_unix: u64,
    pub wall_clock_secs: f64,
}

impl GridReport {
    pub fn new(payload: GridPayload, wall_clock_secs: f64) -> GridReport {
        let fp = fingerprint(&payload);
        GridReport {
            payload,
            fingerprint: fp,
            created_unix: now_unix(),
            wall_clock_secs,
        }
    }

    /// Re-stamps the scheme tag, recomputing the payload fingerprint.
    pub fn with_scheme(self, scheme: &str) -> GridReport {
        GridReport::new(
            GridPayload {
                scheme: Some(scheme.to_string()),
                ..self.payload
            },
            self.wall_clock_secs,
        )
    }

    /// Re-stamps the producing spec's fingerprint, recomputing the
    /// payload fingerprint.
    pub fn with_spec_fingerprint(self, spec_fingerprint: &str) -> GridReport {
        GridReport::new(
            GridPayload {
                spec_fingerprint: Some(spec_fingerprint.to_string()),
                ..self.payload
            },
            self.wall_clock_secs,
        )
    }

    /// The winning grid point.
    pub fn best(&self) -> &GridEntry {
        &self.payload.ranked[0]
    }

    /// Flat table: one row per grid point per iteration. The model and
    /// pipeline columns hold canonical JSON.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from(
            "rank\tenumeration_index\tfamily\titeration\tdev_accuracy\ttest_accuracy\t\
             model\tpipeline\n",
        );
        for (rank, e) in self.payload.ranked.iter().enumerate() {
            let model = canonical_json(&e.model);
            let pipeline = canonical_json(&e.pipeline);
            for (i, test) in e.test_accuracies.iter().enumerate() {
                let dev = e
                    .dev_accuracies
                    .as_ref()
                    .map(|d| d[i].to_string())
                    .unwrap_or_else(|| "NA".to_string());
                let _ = writeln!(
                    out,
                    "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                    rank,
                    e.enumeration_index,
                    e.model.family(),
                    i,
                    dev,
                    test,
                    model,
                    pipeline,
                );
            }
        }
        out
    }
}

/// One learning-curve point: n translated documents mixed into training,
/// the rest held out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub n_mixed: usize,
    pub train_size: usize,
    pub holdout_size: usize,
    /// None when the holdout is empty.
    pub accuracy: Option<f64>,
    pub model_fingerprint: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePayload {
    pub format_version: u32,
    pub scheme: Option<String>,
    /// Fingerprint of the experiment spec that produced this run.
    pub spec_fingerprint: Option<String>,
    pub base_corpus: CorpusSummary,
    pub translated_corpus: CorpusSummary,
    pub model: ModelSpec,
    pub pipeline: PipelineSettings,
    pub seed: u64,
    pub config_fingerprint: String,
    /// Points ordered by ascending n.
    pub points: Vec<CurvePoint>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveReport {
    pub payload: CurvePayload,
    pub fingerprint: String,
    pub created_unix: u64,
    pub wall_clock_secs: f64,
}

impl CurveReport {
    pub fn new(payload: CurvePayload, wall_clock_secs: f64) -> CurveReport {
        let fp = fingerprint(&payload);
        CurveReport {
            payload,
            fingerprint: fp,
            created_unix: now_unix(),
            wall_clock_secs,
        }
    }

    /// Re-stamps the scheme tag, recomputing the payload fingerprint.
    pub fn with_scheme(self, scheme: &str) -> CurveReport {
        CurveReport::new(
            CurvePayload {
                scheme: Some(scheme.to_string()),
                ..self.payload
            },
            self.wall_clock_secs,
        )
    }

    /// Re-stamps the producing spec's fingerprint, recomputing the
    /// payload fingerprint.
    pub fn with_spec_fingerprint(self, spec_fingerprint: &str) -> CurveReport {
        CurveReport::new(
            CurvePayload {
                spec_fingerprint: Some(spec_fingerprint.to_string()),
                ..self.payload
            },
            self.wall_clock_secs,
        )
    }

    /// Plot-ready columns: one row per curve point.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("n\ttrain_size\tholdout_size\taccuracy\n");
        for p in &self.payload.points {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}",
                p.n_mixed,
                p.train_size,
                p.holdout_size,
                opt_cell(&p.accuracy),
            );
        }
        out
    }
}

/// Any persisted report document, tagged for single-file round trips.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "report", rename_all = "kebab-case")]
pub enum ReportDoc {
    Eval(Box<EvalReport>),
    Grid(Box<GridReport>),
    Curve(Box<CurveReport>),
}

impl From<EvalReport> for ReportDoc {
    fn from(r: EvalReport) -> Self {
        ReportDoc::Eval(Box::new(r))
    }
}

impl From<GridReport> for ReportDoc {
    fn from(r: GridReport) -> Self {
        ReportDoc::Grid(Box::new(r))
    }
}

impl From<CurveReport> for ReportDoc {
    fn from(r: CurveReport) -> Self {
        ReportDoc::Curve(Box::new(r))
    }
}

impl ReportDoc {
    pub fn kind(&self) -> &'static str {
        match self {
            ReportDoc::Eval(_) => "eval",
            ReportDoc::Grid(_) => "grid",
            ReportDoc::Curve(_) => "curve",
        }
    }

    pub fn format_version(&self) -> u32 {
        match self {
            ReportDoc::Eval(r) => r.payload.format_version,
            ReportDoc::Grid(r) => r.payload.format_version,
            ReportDoc::Curve(r) => r.payload.format_version,
        }
    }

    /// Fingerprint of the document's payload.
    pub fn fingerprint(&self) -> &str {
        match self {
            ReportDoc::Eval(r) => &r.fingerprint,
            ReportDoc::Grid(r) => &r.fingerprint,
            ReportDoc::Curve(r) => &r.fingerprint,
        }
    }

    pub fn to_tsv(&self) -> String {
        match self {
            ReportDoc::Eval(r) => r.to_tsv(),
            ReportDoc::Grid(r) => r.to_tsv(),
            ReportDoc::Curve(r) => r.to_tsv(),
        }
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let bytes = serde_json::to_vec_pretty(self).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        std::fs::write(path, bytes).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn load_json(path: &Path) -> Result<ReportDoc> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let doc: ReportDoc = serde_json::from_slice(&bytes).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        if doc.format_version() != REPORT_FORMAT_VERSION {
            return Err(Error::Parse {
                path: path.display().to_string(),
                message: format!("unsupported report format version {}", doc.format_version()),
            });
        }
        Ok(doc)
    }
}

fn opt_cell<T: std::fmt::Display>(value: &Option<T>) -> String {
    match value {
        Some(v) => v.to_string(),
        None => "NA".to_string(),
    }
}

fn canonical_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("report serialization cannot fail")
}

pub(crate) fn now_unix() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::SplitPlan;
    use crate::eval::Representation;

    #[test]
    fn population_std_matches_hand_computation() {
        let s = Stat::over(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(s.mean, 2.5);
        // Population variance of 1..4 is 1.25.
        assert!((s.std - 1.25f64.sqrt()).abs() < 1e-15);
        assert!(Stat::over(&[]).is_none());
        assert_eq!(Stat::over(&[0.75]).unwrap().std, 0.0);
    }

    #[test]
    fn confusion_rows_normalize_and_zero_rows_stay_zero() {
        let m = ConfusionMatrix::from_counts([[3, 1], [0, 0]]);
        assert_eq!(m.normalized[0], [0.75, 0.25]);
        assert_eq!(m.normalized[1], [0.0, 0.0]);
        assert_eq!(m.total(), 4);
        assert_eq!(m.correct(), 3);

        let mut acc = ConfusionMatrix::default();
        acc.add_counts([[1, 0], [0, 1]]);
        acc.add_counts([[1, 0], [2, 1]]);
        assert_eq!(acc.counts, [[2, 0], [2, 2]]);
        assert_eq!(acc.normalized[0][0] + acc.normalized[0][1], 1.0);
        assert_eq!(acc.normalized[1][0] + acc.normalized[1][1], 1.0);
    }

    fn sample_eval_report() -> EvalReport {
        let payload = EvalPayload {
            format_version: REPORT_FORMAT_VERSION,
            scheme: Some("1".to_string()),
            spec_fingerprint: None,
            corpus: CorpusSummary {
                name: "toy".to_string(),
                n_documents: 10,
                n_fake: 5,
                n_true: 5,
            },
            external_corpus: None,
            model: ModelSpec::Constant { score: 0.1 + 0.2 },
            pipeline: PipelineSettings {
                representation: Representation::Bow,
                ..PipelineSettings::default()
            },
            split: SplitPlan::default(),
            seed: 7,
            config_fingerprint: "cfg".to_string(),
            iterations: vec![IterationOutcome {
                iteration: 0,
                train_size: 8,
                dev_size: 0,
                test_size: 2,
                vocab_size: 11,
                dev_accuracy: None,
                test_accuracy: 0.5,
                external_accuracy: None,
                embedding_coverage: None,
                external_vocab_overlap: None,
                model_fingerprint: "abc".to_string(),
                stopped_early_at: None,
                best_epoch: None,
            }],
            dev_acc: None,
            test_acc: Stat { mean: 0.5, std: 0.0 },
            external_acc: None,
            test_confusion: ConfusionMatrix::from_counts([[1, 0], [1, 0]]),
            external_confusion: None,
            warnings: vec![],
        };
        EvalReport::new(payload, 0.25)
    }

    #[test]
    fn report_doc_json_round_trip_is_exact() {
        let report = sample_eval_report();
        let doc = ReportDoc::from(report);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.json");
        doc.save_json(&path).unwrap();
        let back = ReportDoc::load_json(&path).unwrap();
        assert_eq!(back, doc);
        assert_eq!(back.fingerprint(), doc.fingerprint());
        assert_eq!(back.kind(), "eval");
    }

    #[test]
    fn fingerprint_ignores_timestamps_but_not_results() {
        let a = sample_eval_report();
        let mut b = a.clone();
        b.created_unix += 1000;
        b.wall_clock_secs *= 3.0;
        assert_eq!(a.fingerprint, b.fingerprint);

        let mut changed = a.payload.clone();
        changed.test_acc.mean = 0.75;
        let c = EvalReport::new(changed, 0.25);
        assert_ne!(a.fingerprint, c.fingerprint);
    }

    #[test]
    fn scheme_restamp_recomputes_fingerprint() {
        let a = sample_eval_report();
        let before = a.fingerprint.clone();
        let b = a.with_scheme("2");
        assert_eq!(b.payload.scheme.as_deref(), Some("2"));
        assert_ne!(b.fingerprint, before);
        assert_eq!(b.fingerprint, fingerprint(&b.payload));
        let mid = b.fingerprint.clone();
        let c = b.with_spec_fingerprint("sfp");
        assert_eq!(c.payload.spec_fingerprint.as_deref(), Some("sfp"));
        assert_ne!(c.fingerprint, mid);
        assert_eq!(c.fingerprint, fingerprint(&c.payload));
    }

    #[test]
    fn eval_tsv_has_one_row_per_iteration() {
        let report = sample_eval_report();
        let tsv = report.to_tsv();
        let lines: Vec<&str> = tsv.lines().collect();
        assert_eq!(lines.len(), 1 + report.payload.iterations.len());
        assert!(lines[0].starts_with("iteration\t"));
        assert!(lines[1].contains("0.5"));
        assert!(lines[1].contains("NA"));
    }

    #[test]
    fn unsupported_format_version_is_rejected() {
        let mut report = sample_eval_report();
        report.payload.format_version = 99;
        let doc = ReportDoc::from(report);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.json");
        doc.save_json(&path).unwrap();
        let err = ReportDoc::load_json(&path).unwrap_err();
        assert!(matches!(err, Error::Parse { .. }), "{err}");
    }
}
