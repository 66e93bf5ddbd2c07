//! Accuracy metrics, bootstrap (ShuffleSplit) evaluation, grid search,
//! and translated-mixing learning curves.
//!
//! Every iteration fits its preprocessing artifacts (vocabulary, idf
//! weights, embedding table) on its own training split, so dev and test
//! documents never influence fitting beyond the declared dev-monitoring
//! role. Parallel tasks derive their seeds from (master seed, task
//! index); results are identical for any worker count.

use std::path::PathBuf;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{
    mix_for_curve, shuffle_split, Corpus, Label, SplitIndices, SplitPlan,
};
use crate::error::{Error, Result};
use crate::models::{
    train_cnn_text, train_gbt, train_lstm_text, train_mlp, train_random_forest, train_svm,
    CnnConfig, EmbeddingMode, ForestConfig, GbtConfig, LstmConfig, MlpConfig, SvmConfig,
    TrainedModel,
};
use crate::report::{
    ConfusionMatrix, CorpusSummary, CurvePayload, CurvePoint, CurveReport, EvalPayload,
    EvalReport, GridEntry, GridPayload, GridReport, IterationOutcome, Stat,
    REPORT_FORMAT_VERSION,
};
use crate::textnorm::{Normalizer, NormalizerConfig};
use crate::util::{fingerprint, splitmix64};
use crate::vectorize::{
    bow, build_vocab, encode_sequence, load_embeddings, tfidf_fit, tfidf_transform,
    vocab_overlap, EmbeddingTable, FeatureMatrix, IdSequences, IdfWeights, OovPolicy,
    Vocabulary, WeightKind,
};

/// Fraction of predictions matching the truth labels.
pub fn accuracy(pred: &[Label], truth: &[Label]) -> Result<f64> {
    check_labels(pred, truth)?;
    let correct = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(correct as f64 / truth.len() as f64)
}

/// Confusion counts: entry (i, j) counts true class i predicted as class
/// j, classes ordered (FAKE, TRUE) on both axes.
pub fn confusion_counts(pred: &[Label], truth: &[Label]) -> Result<[[u64; 2]; 2]> {
    check_labels(pred, truth)?;
    let mut m = [[0u64; 2]; 2];
    for (p, t) in pred.iter().zip(truth) {
        m[class_index(*t)][class_index(*p)] += 1;
    }
    Ok(m)
}

/// Confusion matrix as floats; `normalize` divides each row by its total
/// (row-stochastic, all-zero rows stay zero), otherwise raw counts.
pub fn confusion(pred: &[Label], truth: &[Label], normalize: bool) -> Result<[[f64; 2]; 2]> {
    let counts = confusion_counts(pred, truth)?;
    let mut out = [[0.0; 2]; 2];
    for (row, cells) in counts.iter().zip(out.iter_mut()) {
        let total: u64 = row.iter().sum();
        for (count, cell) in row.iter().zip(cells.iter_mut()) {
            *cell = if normalize {
                if total == 0 { 0.0 } else { *count as f64 / total as f64 }
            } else {
                *count as f64
            };
        }
    }
    Ok(out)
}

fn check_labels(pred: &[Label], truth: &[Label]) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(Error::LengthMismatch { left: pred.len(), right: truth.len() });
    }
    if truth.is_empty() {
        return Err(Error::EmptyInput("labels"));
    }
    Ok(())
}

fn class_index(label: Label) -> usize {
    match label {
        Label::Fake => 0,
        Label::True => 1,
    }
}

/// Document representation handed to the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Representation {
    Bow,
    TfIdf,
    /// Padded/truncated id sequences for the sequence models.
    Sequence { max_len: usize },
}

/// Preprocessing settings, refit inside every training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSettings {
    pub normalizer: NormalizerConfig,
    pub representation: Representation,
    /// Vocabulary cap; the most frequent tokens are kept.
    pub vocab_cap: usize,
    /// Count out-of-vocabulary tokens under the unk column in sparse rows.
    pub count_oov: bool,
    /// Word-vector file for models with the fixed embedding mode.
    pub embedding_file: Option<PathBuf>,
    pub oov_policy: OovPolicy,
}

impl Default for PipelineSettings {
    fn default() -> Self {
        PipelineSettings {
            normalizer: NormalizerConfig::default(),
            representation: Representation::TfIdf,
            vocab_cap: 20000,
            count_oov: false,
            embedding_file: None,
            oov_policy: OovPolicy::ZeroVector,
        }
    }
}

impl PipelineSettings {
    pub fn validate(&self) -> Result<()> {
        self.normalizer.validate()?;
        if self.vocab_cap == 0 {
            return Err(Error::InvalidConfig("vocab_cap must be >= 1".to_string()));
        }
        if let Representation::Sequence { max_len } = self.representation {
            if max_len == 0 {
                return Err(Error::InvalidConfig("sequence max_len must be >= 1".to_string()));
            }
        }
        Ok(())
    }
}

/// A model family with its hyperparameters; the unit that grids and
/// experiment specs select.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum ModelSpec {
    Svm(SvmConfig),
    Rf(ForestConfig),
    Gbt(GbtConfig),
    Mlp(MlpConfig),
    Cnn(CnnConfig),
    Lstm(LstmConfig),
    /// Scores every document with the same constant; a baseline.
    Constant { score: f64 },
}

/// Input class a model family consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReprNeed {
    Sparse,
    Sequence,
    Any,
}

impl ModelSpec {
    pub fn family(&self) -> &'static str {
        match self {
            ModelSpec::Svm(_) => "svm",
            ModelSpec::Rf(_) => "rf",
            ModelSpec::Gbt(_) => "gbt",
            ModelSpec::Mlp(_) => "mlp",
            ModelSpec::Cnn(_) => "cnn",
            ModelSpec::Lstm(_) => "lstm",
            ModelSpec::Constant { .. } => "constant",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ModelSpec::Svm(c) => c.validate(),
            ModelSpec::Rf(c) => c.validate(),
            ModelSpec::Gbt(c) => c.validate(),
            ModelSpec::Mlp(c) => c.validate(),
            ModelSpec::Cnn(c) => c.validate(),
            ModelSpec::Lstm(c) => c.validate(),
            ModelSpec::Constant { score } => {
                if !score.is_finite() {
                    return Err(Error::InvalidConfig("constant score must be finite".to_string()));
                }
                Ok(())
            }
        }
    }

    pub fn needs(&self) -> ReprNeed {
        match self {
            ModelSpec::Svm(_) | ModelSpec::Rf(_) | ModelSpec::Gbt(_) | ModelSpec::Mlp(_) => {
                ReprNeed::Sparse
            }
            ModelSpec::Cnn(_) | ModelSpec::Lstm(_) => ReprNeed::Sequence,
            ModelSpec::Constant { .. } => ReprNeed::Any,
        }
    }

    /// True when the family reads a pre-trained word-vector table.
    pub fn needs_embedding_table(&self) -> bool {
        match self {
            ModelSpec::Cnn(c) => c.embedding == EmbeddingMode::Fixed,
            ModelSpec::Lstm(c) => c.embedding == EmbeddingMode::Fixed,
            _ => false,
        }
    }

    /// Master seed that per-iteration training seeds derive from.
    pub fn seed(&self) -> u64 {
        match self {
            ModelSpec::Svm(c) => c.seed,
            ModelSpec::Rf(c) => c.seed,
            ModelSpec::Gbt(c) => c.seed,
            ModelSpec::Mlp(c) => c.seed,
            ModelSpec::Cnn(c) => c.seed,
            ModelSpec::Lstm(c) => c.seed,
            ModelSpec::Constant { .. } => 0,
        }
    }

    /// Same spec with the seed replaced.
    pub fn with_seed(&self, seed: u64) -> ModelSpec {
        let mut spec = self.clone();
        match &mut spec {
            ModelSpec::Svm(c) => c.seed = seed,
            ModelSpec::Rf(c) => c.seed = seed,
            ModelSpec::Gbt(c) => c.seed = seed,
            ModelSpec::Mlp(c) => c.seed = seed,
            ModelSpec::Cnn(c) => c.seed = seed,
            ModelSpec::Lstm(c) => c.seed = seed,
            ModelSpec::Constant { .. } => {}
        }
        spec
    }
}

/// Errors unless the model family can consume the configured
/// representation and has a word-vector file when it needs one.
pub fn check_compatible(spec: &ModelSpec, pipe: &PipelineSettings) -> Result<()> {
    spec.validate()?;
    pipe.validate()?;
    match (spec.needs(), &pipe.representation) {
        (ReprNeed::Sparse, Representation::Sequence { .. }) => {
            return Err(Error::InvalidConfig(format!(
                "{} requires bow or tf-idf features, not id sequences",
                spec.family()
            )));
        }
        (ReprNeed::Sequence, Representation::Bow | Representation::TfIdf) => {
            return Err(Error::InvalidConfig(format!(
                "{} is a sequence model and requires id sequences",
                spec.family()
            )));
        }
        _ => {}
    }
    if spec.needs_embedding_table() && pipe.embedding_file.is_none() {
        return Err(Error::InvalidConfig(
            "fixed embedding mode requires pipeline.embedding_file".to_string(),
        ));
    }
    Ok(())
}

/// Features for one document block in the model's representation.
enum Feats {
    Sparse(FeatureMatrix),
    Seq(IdSequences),
}

impl Feats {
    fn as_ref(&self) -> crate::models::FeaturesRef<'_> {
        match self {
            Feats::Sparse(m) => crate::models::FeaturesRef::Sparse(m),
            Feats::Seq(s) => crate::models::FeaturesRef::Sequences(s),
        }
    }
}

/// External evaluation corpus, already tokenized.
struct ExtData<'a> {
    tokenized: &'a [Vec<String>],
    labels: &'a [Label],
    /// Full-corpus vocabulary, for the overlap diagnostic.
    vocab: Option<&'a Vocabulary>,
}

/// Everything a fold needs, shared across iterations.
struct EvalContext<'a> {
    tokenized: &'a [Vec<String>],
    labels: &'a [Label],
    ext: Option<ExtData<'a>>,
    spec: &'a ModelSpec,
    pipe: &'a PipelineSettings,
    corpus_name: &'a str,
}

/// Per-split features plus the fitted state and diagnostics for one fold.
struct FoldFeatures {
    train: Feats,
    dev: Option<Feats>,
    test: Option<Feats>,
    external: Option<Feats>,
    table: Option<EmbeddingTable>,
    vocab: Vocabulary,
    idf: Option<IdfWeights>,
    embedding_coverage: Option<f64>,
    external_vocab_overlap: Option<f64>,
}

struct FoldOutcome {
    outcome: IterationOutcome,
    test_confusion: [[u64; 2]; 2],
    external_confusion: Option<[[u64; 2]; 2]>,
}

fn tokenize_all(normalizer: &Normalizer, corpus: &Corpus) -> Vec<Vec<String>> {
    corpus
        .documents()
        .par_iter()
        .map(|d| normalizer.normalize(&d.text))
        .collect()
}

fn take_labels(labels: &[Label], which: &[usize]) -> Vec<Label> {
    which.iter().map(|&i| labels[i]).collect()
}

fn nonempty(which: &[usize]) -> Option<&[usize]> {
    (!which.is_empty()).then_some(which)
}

fn all_indices(n: usize) -> Vec<usize> {
    (0..n).collect()
}

fn sequence_rows(
    docs: &[Vec<String>],
    which: &[usize],
    vocab: &Vocabulary,
    max_len: usize,
) -> IdSequences {
    let mut data = Vec::with_capacity(which.len() * max_len);
    let mut lengths = Vec::with_capacity(which.len());
    for &i in which {
        data.extend(encode_sequence(&docs[i], vocab, max_len));
        lengths.push(docs[i].len().min(max_len));
    }
    IdSequences {
        max_len,
        vocab_len: vocab.len(),
        data,
        lengths,
        vocab_fingerprint: vocab.fingerprint(),
    }
}

/// Fit the vocabulary (and idf / embedding table where applicable) on the
/// training split only, then vectorize every block with the fitted state.
fn featurize_fold(ctx: &EvalContext, idx: &SplitIndices, provenance: &str) -> Result<FoldFeatures> {
    let train_docs: Vec<&[String]> = idx.train.iter().map(|&i| ctx.tokenized[i].as_slice()).collect();
    let vocab = build_vocab(&train_docs, ctx.pipe.vocab_cap, provenance)?;
    let external_vocab_overlap = ctx
        .ext
        .as_ref()
        .and_then(|e| e.vocab)
        .map(|ev| vocab_overlap(&vocab, ev));

    let mut table = None;
    let mut embedding_coverage = None;
    if ctx.spec.needs_embedding_table() {
        let path = ctx.pipe.embedding_file.as_ref().ok_or_else(|| {
            Error::InvalidConfig("fixed embedding mode requires pipeline.embedding_file".to_string())
        })?;
        let t = load_embeddings(path, &vocab, ctx.pipe.oov_policy)?;
        embedding_coverage = Some(t.coverage);
        table = Some(t);
    }

    let ext_tok = ctx.ext.as_ref().map(|e| e.tokenized);
    let mut fitted_idf = None;
    let (train, dev, test, external) = match ctx.pipe.representation {
        Representation::Bow | Representation::TfIdf => {
            let counts = |docs: &[Vec<String>], which: &[usize]| -> Result<FeatureMatrix> {
                let rows: Vec<Vec<(u32, f64)>> = which
                    .iter()
                    .map(|&i| bow(&docs[i], &vocab, ctx.pipe.count_oov))
                    .collect();
                FeatureMatrix::from_rows(&rows, vocab.len(), WeightKind::Counts, vocab.fingerprint())
            };
            let train_counts = counts(ctx.tokenized, &idx.train)?;
            let dev_counts = nonempty(&idx.dev).map(|w| counts(ctx.tokenized, w)).transpose()?;
            let test_counts = nonempty(&idx.test).map(|w| counts(ctx.tokenized, w)).transpose()?;
            let ext_counts = match ext_tok {
                Some(t) if !t.is_empty() => Some(counts(t, &all_indices(t.len()))?),
                _ => None,
            };
            if ctx.pipe.representation == Representation::TfIdf {
                let idf = tfidf_fit(&train_counts)?;
                fitted_idf = Some(idf.clone());
                (
                    Feats::Sparse(tfidf_transform(&train_counts, &idf)?),
                    dev_counts.map(|m| tfidf_transform(&m, &idf)).transpose()?.map(Feats::Sparse),
                    test_counts.map(|m| tfidf_transform(&m, &idf)).transpose()?.map(Feats::Sparse),
                    ext_counts.map(|m| tfidf_transform(&m, &idf)).transpose()?.map(Feats::Sparse),
                )
            } else {
                (
                    Feats::Sparse(train_counts),
                    dev_counts.map(Feats::Sparse),
                    test_counts.map(Feats::Sparse),
                    ext_counts.map(Feats::Sparse),
                )
            }
        }
        Representation::Sequence { max_len } => (
            Feats::Seq(sequence_rows(ctx.tokenized, &idx.train, &vocab, max_len)),
            nonempty(&idx.dev).map(|w| Feats::Seq(sequence_rows(ctx.tokenized, w, &vocab, max_len))),
            nonempty(&idx.test).map(|w| Feats::Seq(sequence_rows(ctx.tokenized, w, &vocab, max_len))),
            match ext_tok {
                Some(t) if !t.is_empty() => {
                    Some(Feats::Seq(sequence_rows(t, &all_indices(t.len()), &vocab, max_len)))
                }
                _ => None,
            },
        ),
    };

    Ok(FoldFeatures {
        train,
        dev,
        test,
        external,
        table,
        vocab,
        idf: fitted_idf,
        embedding_coverage,
        external_vocab_overlap,
    })
}

fn train_one(
    spec: &ModelSpec,
    seed: u64,
    feats: &FoldFeatures,
    y_train: &[Label],
    y_dev: &[Label],
) -> Result<TrainedModel> {
    let spec = spec.with_seed(seed);
    let dev_sparse = match &feats.dev {
        Some(Feats::Sparse(d)) if !y_dev.is_empty() => Some((d, y_dev)),
        _ => None,
    };
    let dev_seq = match &feats.dev {
        Some(Feats::Seq(d)) if !y_dev.is_empty() => Some((d, y_dev)),
        _ => None,
    };
    match (&spec, &feats.train) {
        (ModelSpec::Svm(cfg), Feats::Sparse(x)) => train_svm(x, y_train, cfg),
        (ModelSpec::Rf(cfg), Feats::Sparse(x)) => train_random_forest(x, y_train, cfg),
        (ModelSpec::Gbt(cfg), Feats::Sparse(x)) => train_gbt(x, y_train, cfg),
        (ModelSpec::Mlp(cfg), Feats::Sparse(x)) => train_mlp(x, y_train, dev_sparse, cfg),
        (ModelSpec::Cnn(cfg), Feats::Seq(s)) => {
            train_cnn_text(s, y_train, dev_seq, cfg, feats.table.as_ref())
        }
        (ModelSpec::Lstm(cfg), Feats::Seq(s)) => {
            train_lstm_text(s, y_train, dev_seq, cfg, feats.table.as_ref())
        }
        (ModelSpec::Constant { score }, f) => {
            Ok(TrainedModel::constant(*score, f.as_ref().repr_fingerprint()))
        }
        _ => Err(Error::InvalidConfig(format!(
            "{} cannot consume the configured representation",
            spec.family()
        ))),
    }
}

fn score_block(model: &TrainedModel, feats: &Feats, truth: &[Label]) -> Result<(f64, [[u64; 2]; 2])> {
    let pred: Vec<Label> = model
        .predict(&feats.as_ref())?
        .into_iter()
        .map(|(label, _)| label)
        .collect();
    Ok((accuracy(&pred, truth)?, confusion_counts(&pred, truth)?))
}

fn run_fold(ctx: &EvalContext, i: usize, idx: &SplitIndices) -> Result<FoldOutcome> {
    let provenance = format!("{}[iter{}]", ctx.corpus_name, i);
    let feats = featurize_fold(ctx, idx, &provenance)?;
    let y_train = take_labels(ctx.labels, &idx.train);
    let y_dev = take_labels(ctx.labels, &idx.dev);
    let y_test = take_labels(ctx.labels, &idx.test);
    let model_seed = splitmix64(ctx.spec.seed(), i as u64);
    let model = train_one(ctx.spec, model_seed, &feats, &y_train, &y_dev)?;

    let dev_accuracy = match &feats.dev {
        Some(d) => Some(score_block(&model, d, &y_dev)?.0),
        None => None,
    };
    let test = feats.test.as_ref().ok_or(Error::EmptyInput("test split"))?;
    let (test_accuracy, test_confusion) = score_block(&model, test, &y_test)?;
    let (external_accuracy, external_confusion) = match (&feats.external, &ctx.ext) {
        (Some(x), Some(e)) => {
            let (acc, conf) = score_block(&model, x, e.labels)?;
            (Some(acc), Some(conf))
        }
        _ => (None, None),
    };

    Ok(FoldOutcome {
        outcome: IterationOutcome {
            iteration: i,
            train_size: idx.train.len(),
            dev_size: idx.dev.len(),
            test_size: idx.test.len(),
            vocab_size: feats.vocab.len(),
            dev_accuracy,
            test_accuracy,
            external_accuracy,
            embedding_coverage: feats.embedding_coverage,
            external_vocab_overlap: feats.external_vocab_overlap,
            model_fingerprint: model.params_fingerprint(),
            stopped_early_at: model.history.stopped_early_at,
            best_epoch: model.history.best_epoch,
        },
        test_confusion,
        external_confusion,
    })
}

/// Configuration identity: everything that determines the numbers.
#[derive(Serialize)]
struct ConfigEcho<'a> {
    model: &'a ModelSpec,
    pipeline: &'a PipelineSettings,
    split: &'a SplitPlan,
}

/// Bootstrap (ShuffleSplit) evaluation. Each of `plan.iterations`
/// independent partitions refits preprocessing on its training split,
/// trains a fresh model with seed splitmix64(spec seed, iteration), and
/// scores the dev and test splits. When `external` is bound (e.g. a
/// translated corpus), every iteration's model also scores that whole
/// corpus, and the report carries the vocabulary-overlap diagnostic.
pub fn bootstrap_evaluate(
    spec: &ModelSpec,
    corpus: &Corpus,
    plan: &SplitPlan,
    pipe: &PipelineSettings,
    external: Option<&Corpus>,
) -> Result<EvalReport> {
    let started = Instant::now();
    check_compatible(spec, pipe)?;
    let splits = shuffle_split(corpus, plan)?;
    let normalizer = Normalizer::new(pipe.normalizer.clone())?;
    let tokenized = tokenize_all(&normalizer, corpus);
    let labels = corpus.labels();

    let ext_owned = match external {
        Some(ec) => {
            if ec.is_empty() {
                return Err(Error::EmptyCorpus(ec.name.clone()));
            }
            let tok = tokenize_all(&normalizer, ec);
            let vocab = build_vocab(&tok, usize::MAX, &ec.name)?;
            Some((tok, ec.labels(), vocab))
        }
        None => None,
    };
    let ctx = EvalContext {
        tokenized: &tokenized,
        labels: &labels,
        ext: ext_owned.as_ref().map(|(tok, lab, vocab)| ExtData {
            tokenized: tok,
            labels: lab,
            vocab: Some(vocab),
        }),
        spec,
        pipe,
        corpus_name: &corpus.name,
    };

    let outcomes: Vec<FoldOutcome> = splits
        .par_iter()
        .enumerate()
        .map(|(i, idx)| run_fold(&ctx, i, idx))
        .collect::<Result<Vec<_>>>()?;

    let test_accs: Vec<f64> = outcomes.iter().map(|o| o.outcome.test_accuracy).collect();
    let test_acc = Stat::over(&test_accs).expect("plan guarantees iterations >= 1");
    let dev_accs: Option<Vec<f64>> = outcomes.iter().map(|o| o.outcome.dev_accuracy).collect();
    let dev_acc = dev_accs.as_deref().and_then(Stat::over);
    let ext_accs: Option<Vec<f64>> =
        outcomes.iter().map(|o| o.outcome.external_accuracy).collect();
    let external_acc = ext_accs.as_deref().and_then(Stat::over);

    let mut test_confusion = ConfusionMatrix::default();
    for o in &outcomes {
        test_confusion.add_counts(o.test_confusion);
    }
    let external_confusion = external.map(|_| {
        let mut m = ConfusionMatrix::default();
        for o in &outcomes {
            if let Some(c) = o.external_confusion {
                m.add_counts(c);
            }
        }
        m
    });

    let payload = EvalPayload {
        format_version: REPORT_FORMAT_VERSION,
        scheme: None,
        spec_fingerprint: None,
        corpus: CorpusSummary::of(corpus),
        external_corpus: external.map(CorpusSummary::of),
        model: spec.clone(),
        pipeline: pipe.clone(),
        split: plan.clone(),
        seed: spec.seed(),
        config_fingerprint: fingerprint(&ConfigEcho { model: spec, pipeline: pipe, split: plan }),
        iterations: outcomes.into_iter().map(|o| o.outcome).collect(),
        dev_acc,
        test_acc,
        external_acc,
        test_confusion,
        external_confusion,
        warnings: Vec::new(),
    };
    Ok(EvalReport::new(payload, started.elapsed().as_secs_f64()))
}

/// An expanded hyperparameter grid: every model candidate crossed with
/// every preprocessing variant. Enumeration order is models outer,
/// pipelines inner, and is the tie-break order for selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub models: Vec<ModelSpec>,
    pub pipelines: Vec<PipelineSettings>,
}

impl Grid {
    pub fn validate(&self) -> Result<()> {
        if self.models.is_empty() || self.pipelines.is_empty() {
            return Err(Error::InvalidConfig(
                "grid needs at least one model and one pipeline".to_string(),
            ));
        }
        let family = self.models[0].family();
        if self.models.iter().any(|m| m.family() != family) {
            return Err(Error::InvalidConfig("grid models must share one family".to_string()));
        }
        for m in &self.models {
            for p in &self.pipelines {
                check_compatible(m, p)?;
            }
        }
        Ok(())
    }

    /// Number of grid points (the Cartesian product size).
    pub fn len(&self) -> usize {
        self.models.len() * self.pipelines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Point at enumeration index k.
    pub fn point(&self, k: usize) -> (&ModelSpec, &PipelineSettings) {
        (&self.models[k / self.pipelines.len()], &self.pipelines[k % self.pipelines.len()])
    }
}

/// Evaluates every grid point with [`bootstrap_evaluate`] and ranks them:
/// highest mean dev accuracy when the plan carves a dev split, otherwise
/// highest mean test accuracy; exact ties keep enumeration order. Returns
/// the ranked report plus every point's full evaluation report in
/// enumeration order.
pub fn grid_search(
    grid: &Grid,
    corpus: &Corpus,
    plan: &SplitPlan,
) -> Result<(GridReport, Vec<EvalReport>)> {
    let started = Instant::now();
    grid.validate()?;
    plan.validate()?;

    let reports: Vec<EvalReport> = (0..grid.len())
        .into_par_iter()
        .map(|k| {
            let (model, pipeline) = grid.point(k);
            bootstrap_evaluate(model, corpus, plan, pipeline, None)
        })
        .collect::<Result<Vec<_>>>()?;

    let use_dev = plan.dev_fraction_of_train > 0.0;
    let selection_criterion =
        if use_dev { "mean-dev-accuracy" } else { "mean-test-accuracy" };
    let mut ranked: Vec<GridEntry> = reports
        .iter()
        .enumerate()
        .map(|(k, r)| {
            let (model, pipeline) = grid.point(k);
            GridEntry {
                enumeration_index: k,
                model: model.clone(),
                pipeline: pipeline.clone(),
                dev_accuracies: r.payload.iterations.iter().map(|it| it.dev_accuracy).collect(),
                test_accuracies: r.payload.iterations.iter().map(|it| it.test_accuracy).collect(),
                dev_acc: r.payload.dev_acc,
                test_acc: r.payload.test_acc,
                report_fingerprint: r.fingerprint.clone(),
            }
        })
        .collect();
    let metric = |e: &GridEntry| -> f64 {
        if use_dev {
            e.dev_acc.map(|s| s.mean).unwrap_or(f64::NEG_INFINITY)
        } else {
            e.test_acc.mean
        }
    };
    ranked.sort_by(|a, b| {
        metric(b)
            .partial_cmp(&metric(a))
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.enumeration_index.cmp(&b.enumeration_index))
    });

    let payload = GridPayload {
        format_version: REPORT_FORMAT_VERSION,
        scheme: None,
        spec_fingerprint: None,
        corpus: CorpusSummary::of(corpus),
        split: plan.clone(),
        selection_criterion: selection_criterion.to_string(),
        ranked,
        warnings: Vec::new(),
    };
    Ok((GridReport::new(payload, started.elapsed().as_secs_f64()), reports))
}

/// The mixing counts of the translated learning curve.
pub const DEFAULT_CURVE_POINTS: [usize; 5] = [500, 1000, 1500, 2000, 2500];

/// Translated-mixing learning curve: for each n (ascending, deduplicated),
/// move n randomly chosen translated documents into the training corpus,
/// retrain from scratch, and score the remaining translated holdout.
/// Mixing and training seeds derive from (seed, n), so the curve is
/// stable under reordering or subsetting of the point list. An empty
/// holdout yields a warning and no accuracy for that point.
pub fn learning_curve(
    spec: &ModelSpec,
    base_train: &Corpus,
    translated: &Corpus,
    points: &[usize],
    pipe: &PipelineSettings,
    seed: u64,
) -> Result<CurveReport> {
    let started = Instant::now();
    check_compatible(spec, pipe)?;
    if points.is_empty() {
        return Err(Error::EmptyInput("learning-curve points"));
    }
    let mut ns: Vec<usize> = points.to_vec();
    ns.sort_unstable();
    ns.dedup();
    if let Some(&largest) = ns.last() {
        if largest > translated.len() {
            return Err(Error::NTooLarge { n: largest, available: translated.len() });
        }
    }
    let normalizer = Normalizer::new(pipe.normalizer.clone())?;
    let mix_base = splitmix64(seed, 0);
    let train_base = splitmix64(seed, 1);

    let results: Vec<(CurvePoint, Option<String>)> = ns
        .par_iter()
        .map(|&n| {
            let (augmented, holdout) =
                mix_for_curve(base_train, translated, n, splitmix64(mix_base, n as u64))?;
            let tokenized = tokenize_all(&normalizer, &augmented);
            let hold_tok = (!holdout.is_empty()).then(|| tokenize_all(&normalizer, &holdout));
            let hold_labels = holdout.labels();
            let ctx = EvalContext {
                tokenized: &tokenized,
                labels: &[],
                ext: hold_tok.as_ref().map(|tok| ExtData {
                    tokenized: tok,
                    labels: &hold_labels,
                    vocab: None,
                }),
                spec,
                pipe,
                corpus_name: &augmented.name,
            };
            let idx = SplitIndices {
                train: all_indices(augmented.len()),
                dev: Vec::new(),
                test: Vec::new(),
            };
            let feats = featurize_fold(&ctx, &idx, &format!("{}[n{}]", augmented.name, n))?;
            let y_train = augmented.labels();
            let model =
                train_one(spec, splitmix64(train_base, n as u64), &feats, &y_train, &[])?;
            let accuracy = match &feats.external {
                Some(x) => Some(score_block(&model, x, &hold_labels)?.0),
                None => None,
            };
            let warning = (accuracy.is_none())
                .then(|| format!("n={n}: empty translated holdout, accuracy omitted"));
            Ok((
                CurvePoint {
                    n_mixed: n,
                    train_size: augmented.len(),
                    holdout_size: holdout.len(),
                    accuracy,
                    model_fingerprint: model.params_fingerprint(),
                },
                warning,
            ))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut curve_points = Vec::with_capacity(results.len());
    let mut warnings = Vec::new();
    for (point, warning) in results {
        curve_points.push(point);
        warnings.extend(warning);
    }
    let payload = CurvePayload {
        format_version: REPORT_FORMAT_VERSION,
        scheme: None,
        spec_fingerprint: None,
        base_corpus: CorpusSummary::of(base_train),
        translated_corpus: CorpusSummary::of(translated),
        model: spec.clone(),
        pipeline: pipe.clone(),
        seed,
        config_fingerprint: fingerprint(&(spec, pipe, &ns, seed)),
        points: curve_points,
        warnings,
    };
    Ok(CurveReport::new(payload, started.elapsed().as_secs_f64()))
}

const BUNDLE_FORMAT_VERSION: u32 = 1;

/// A deployable scoring artifact: the fitted preprocessing state
/// (normalizer config, vocabulary, idf weights where applicable) plus
/// the trained model. Everything needed to label new raw text; a
/// load/save round trip reproduces predictions bit-exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineBundle {
    pub format_version: u32,
    pub model_spec: ModelSpec,
    pub pipeline: PipelineSettings,
    /// The corpus everything was fitted on.
    pub corpus: CorpusSummary,
    pub vocab: Vocabulary,
    pub idf: Option<IdfWeights>,
    pub model: TrainedModel,
}

impl PipelineBundle {
    /// Identity over the full fitted state.
    pub fn fingerprint(&self) -> String {
        fingerprint(self)
    }

    pub fn save_json(&self, path: &std::path::Path) -> Result<()> {
        let bytes = serde_json::to_vec_pretty(self).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        std::fs::write(path, bytes).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn load_json(path: &std::path::Path) -> Result<PipelineBundle> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let bundle: PipelineBundle = serde_json::from_slice(&bytes).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        if bundle.format_version != BUNDLE_FORMAT_VERSION {
            return Err(Error::Parse {
                path: path.display().to_string(),
                message: format!("unsupported bundle format version {}", bundle.format_version),
            });
        }
        Ok(bundle)
    }

    /// Label raw texts with the bundled pipeline; `score >= 0.5` maps to
    /// FAKE.
    pub fn score_texts(&self, texts: &[String]) -> Result<Vec<(Label, f64)>> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let normalizer = Normalizer::new(self.pipeline.normalizer.clone())?;
        let tokenized: Vec<Vec<String>> = texts.iter().map(|t| normalizer.normalize(t)).collect();
        let feats = match self.pipeline.representation {
            Representation::Bow | Representation::TfIdf => {
                let rows: Vec<Vec<(u32, f64)>> = tokenized
                    .iter()
                    .map(|doc| bow(doc, &self.vocab, self.pipeline.count_oov))
                    .collect();
                let counts = FeatureMatrix::from_rows(
                    &rows,
                    self.vocab.len(),
                    WeightKind::Counts,
                    self.vocab.fingerprint(),
                )?;
                if self.pipeline.representation == Representation::TfIdf {
                    let idf = self.idf.as_ref().ok_or_else(|| {
                        Error::InvalidConfig("bundle is missing its idf weights".to_string())
                    })?;
                    Feats::Sparse(tfidf_transform(&counts, idf)?)
                } else {
                    Feats::Sparse(counts)
                }
            }
            Representation::Sequence { max_len } => Feats::Seq(sequence_rows(
                &tokenized,
                &all_indices(tokenized.len()),
                &self.vocab,
                max_len,
            )),
        };
        self.model.predict(&feats.as_ref())
    }
}

/// Fit the whole pipeline on every document of `corpus`: the deployment
/// fit, with no splitting and no evaluation. The model trains with the
/// spec's own seed (no per-iteration mixing).
pub fn fit_full(spec: &ModelSpec, corpus: &Corpus, pipe: &PipelineSettings) -> Result<PipelineBundle> {
    check_compatible(spec, pipe)?;
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus(corpus.name.clone()));
    }
    let normalizer = Normalizer::new(pipe.normalizer.clone())?;
    let tokenized = tokenize_all(&normalizer, corpus);
    let labels = corpus.labels();
    let ctx = EvalContext {
        tokenized: &tokenized,
        labels: &labels,
        ext: None,
        spec,
        pipe,
        corpus_name: &corpus.name,
    };
    let idx = SplitIndices {
        train: all_indices(corpus.len()),
        dev: Vec::new(),
        test: Vec::new(),
    };
    let feats = featurize_fold(&ctx, &idx, &corpus.name)?;
    let model = train_one(spec, spec.seed(), &feats, &labels, &[])?;
    Ok(PipelineBundle {
        format_version: BUNDLE_FORMAT_VERSION,
        model_spec: spec.clone(),
        pipeline: pipe.clone(),
        corpus: CorpusSummary::of(corpus),
        vocab: feats.vocab,
        idf: feats.idf,
        model,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Document, Language};
    use proptest::prelude::*;

    fn doc(i: usize, label: Label, marker: &str, name: &str) -> Document {
        Document {
            id: format!("d{i}"),
            text: format!("{marker} common words everywhere filler{}", i % 5),
            label,
            language: Language::Es,
            source: name.to_string(),
        }
    }

    /// Balanced corpus whose label is decided by a marker token.
    fn synth(n: usize, name: &str) -> Corpus {
        let docs = (0..n)
            .map(|i| {
                let label = if i % 2 == 0 { Label::Fake } else { Label::True };
                let marker = if label == Label::Fake {
                    "sensational scandal shocking exclusive"
                } else {
                    "official report statement ministry"
                };
                doc(i, label, marker, name)
            })
            .collect();
        Corpus::new(name, docs).unwrap()
    }

    /// Roughly 70% FAKE corpus, same marker rule.
    fn skewed(n: usize, name: &str) -> Corpus {
        let docs = (0..n)
            .map(|i| {
                let label = if i % 10 < 7 { Label::Fake } else { Label::True };
                let marker = if label == Label::Fake {
                    "sensational scandal shocking exclusive"
                } else {
                    "official report statement ministry"
                };
                doc(i, label, marker, name)
            })
            .collect();
        Corpus::new(name, docs).unwrap()
    }

    fn bow_pipe() -> PipelineSettings {
        PipelineSettings { representation: Representation::Bow, ..PipelineSettings::default() }
    }

    fn always_fake() -> ModelSpec {
        ModelSpec::Constant { score: 0.9 }
    }

    #[test]
    fn accuracy_counts_correct_fraction() {
        let f = Label::Fake;
        let t = Label::True;
        assert_eq!(accuracy(&[f, t, f], &[f, t, f]).unwrap(), 1.0);
        assert_eq!(accuracy(&[f, t], &[t, f]).unwrap(), 0.0);
        let pred = [f, f, f, f, f, f, f, f, t, t];
        let truth = [f, f, f, f, f, f, f, f, f, f];
        assert_eq!(accuracy(&pred, &truth).unwrap(), 0.8);
        assert!(matches!(
            accuracy(&[f], &[f, t]),
            Err(Error::LengthMismatch { left: 1, right: 2 })
        ));
        assert!(matches!(accuracy(&[], &[]), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn confusion_axis_order_is_true_by_predicted() {
        let f = Label::Fake;
        let t = Label::True;
        // Perfect predictions normalize to the identity matrix.
        let m = confusion(&[f, t], &[f, t], true).unwrap();
        assert_eq!(m, [[1.0, 0.0], [0.0, 1.0]]);
        // Two FAKE both predicted TRUE, two TRUE both correct.
        let m = confusion(&[t, t, t, t], &[f, f, t, t], true).unwrap();
        assert_eq!(m, [[0.0, 1.0], [0.0, 1.0]]);
        let counts = confusion_counts(&[t, t, t, t], &[f, f, t, t]).unwrap();
        assert_eq!(counts, [[0, 2], [0, 2]]);
        // Unnormalized float view carries the raw counts.
        let raw = confusion(&[t, t, t, t], &[f, f, t, t], false).unwrap();
        assert_eq!(raw, [[0.0, 2.0], [0.0, 2.0]]);
    }

    proptest! {
        #[test]
        fn accuracy_equals_confusion_trace_ratio(
            pairs in proptest::collection::vec((0..2u8, 0..2u8), 1..200)
        ) {
            let to_label = |v: u8| if v == 0 { Label::Fake } else { Label::True };
            let pred: Vec<Label> = pairs.iter().map(|(p, _)| to_label(*p)).collect();
            let truth: Vec<Label> = pairs.iter().map(|(_, t)| to_label(*t)).collect();
            let acc = accuracy(&pred, &truth).unwrap();
            let m = confusion_counts(&pred, &truth).unwrap();
            let trace = (m[0][0] + m[1][1]) as f64;
            let total: u64 = m.iter().flatten().sum();
            prop_assert_eq!(total as usize, truth.len());
            prop_assert!((acc - trace / total as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn model_spec_serde_uses_family_tag() {
        let spec = ModelSpec::Lstm(LstmConfig::default());
        let json = serde_json::to_string(&spec).unwrap();
        assert!(json.contains("\"family\":\"lstm\""), "{json}");
        let back: ModelSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, spec);
        assert_eq!(spec.family(), "lstm");
        assert_eq!(spec.with_seed(9).seed(), 9);
    }

    #[test]
    fn incompatible_model_and_representation_are_rejected() {
        let seq_pipe = PipelineSettings {
            representation: Representation::Sequence { max_len: 16 },
            ..PipelineSettings::default()
        };
        let cnn = ModelSpec::Cnn(CnnConfig::default());
        let svm = ModelSpec::Svm(SvmConfig::default());
        assert!(matches!(check_compatible(&cnn, &bow_pipe()), Err(Error::InvalidConfig(_))));
        assert!(matches!(check_compatible(&svm, &seq_pipe), Err(Error::InvalidConfig(_))));
        // Fixed embeddings need a word-vector file.
        let fixed = ModelSpec::Cnn(CnnConfig {
            embedding: EmbeddingMode::Fixed,
            ..CnnConfig::default()
        });
        assert!(matches!(check_compatible(&fixed, &seq_pipe), Err(Error::InvalidConfig(_))));
        // The constant baseline accepts anything.
        assert!(check_compatible(&always_fake(), &seq_pipe).is_ok());
        assert!(check_compatible(&always_fake(), &bow_pipe()).is_ok());
        assert!(check_compatible(&svm, &bow_pipe()).is_ok());
    }

    #[test]
    fn constant_classifier_tracks_class_balance() {
        let corpus = synth(40, "bal");
        let plan = SplitPlan { iterations: 5, seed: 3, ..SplitPlan::default() };
        let report =
            bootstrap_evaluate(&always_fake(), &corpus, &plan, &bow_pipe(), None).unwrap();
        let p = &report.payload;
        assert_eq!(p.iterations.len(), 5);
        for it in &p.iterations {
            assert_eq!(it.train_size, 32);
            assert_eq!(it.dev_size, 0);
            assert_eq!(it.test_size, 8);
            assert!(it.dev_accuracy.is_none());
        }
        assert!((p.test_acc.mean - 0.5).abs() < 0.2, "mean {}", p.test_acc.mean);
        assert!(p.test_acc.std > 0.0, "std {}", p.test_acc.std);
        // Always-FAKE never predicts TRUE.
        assert_eq!(p.test_confusion.counts[0][1], 0);
        assert_eq!(p.test_confusion.counts[1][1], 0);
        // Normalized rows with members sum to one.
        for (row, norm) in p.test_confusion.counts.iter().zip(&p.test_confusion.normalized) {
            if row.iter().sum::<u64>() > 0 {
                assert!((norm.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
        // Equal fold sizes make the iteration mean match the pooled ratio.
        let pooled = p.test_confusion.correct() as f64 / p.test_confusion.total() as f64;
        assert!((p.test_acc.mean - pooled).abs() < 1e-12);
        assert_eq!(report.fingerprint, fingerprint(&p));
    }

    #[test]
    fn single_iteration_has_zero_std() {
        let corpus = synth(30, "one");
        let plan = SplitPlan { iterations: 1, ..SplitPlan::default() };
        let report =
            bootstrap_evaluate(&always_fake(), &corpus, &plan, &bow_pipe(), None).unwrap();
        assert_eq!(report.payload.iterations.len(), 1);
        assert_eq!(report.payload.test_acc.std, 0.0);
    }

    #[test]
    fn dev_split_is_scored_when_carved() {
        let corpus = synth(40, "dev");
        let plan = SplitPlan { dev_fraction_of_train: 0.25, seed: 1, ..SplitPlan::default() };
        let report =
            bootstrap_evaluate(&always_fake(), &corpus, &plan, &bow_pipe(), None).unwrap();
        let p = &report.payload;
        assert!(p.dev_acc.is_some());
        for it in &p.iterations {
            assert_eq!(it.dev_size, 8);
            assert_eq!(it.train_size, 24);
            assert!(it.dev_accuracy.is_some());
        }
    }

    #[test]
    fn svm_learns_the_marker_rule() {
        let corpus = synth(60, "sep");
        let plan = SplitPlan { iterations: 3, seed: 2, ..SplitPlan::default() };
        let spec = ModelSpec::Svm(SvmConfig::default());
        let report =
            bootstrap_evaluate(&spec, &corpus, &plan, &PipelineSettings::default(), None)
                .unwrap();
        assert!(
            report.payload.test_acc.mean > 0.9,
            "mean {}",
            report.payload.test_acc.mean
        );
    }

    #[test]
    fn sequence_pipeline_feeds_the_cnn() {
        let corpus = synth(30, "seqs");
        let plan = SplitPlan {
            iterations: 1,
            dev_fraction_of_train: 0.2,
            seed: 4,
            ..SplitPlan::default()
        };
        let spec = ModelSpec::Cnn(CnnConfig {
            filters: 4,
            kernel_size: 3,
            dense_units: 4,
            epochs: 3,
            batch_size: 8,
            embedding: EmbeddingMode::Trainable { dim: 8 },
            ..CnnConfig::default()
        });
        let pipe = PipelineSettings {
            representation: Representation::Sequence { max_len: 12 },
            ..PipelineSettings::default()
        };
        let report = bootstrap_evaluate(&spec, &corpus, &plan, &pipe, None).unwrap();
        let it = &report.payload.iterations[0];
        assert!(it.dev_accuracy.is_some());
        assert!((0.0..=1.0).contains(&it.test_accuracy));
    }

    #[test]
    fn permuting_test_labels_never_changes_the_model() {
        let corpus = synth(30, "leak");
        let plan = SplitPlan { iterations: 1, ..SplitPlan::default() };
        let test_idx: std::collections::HashSet<usize> =
            shuffle_split(&corpus, &plan).unwrap()[0].test.iter().copied().collect();
        let flipped_docs: Vec<Document> = corpus
            .documents()
            .iter()
            .enumerate()
            .map(|(i, d)| {
                let mut d = d.clone();
                if test_idx.contains(&i) {
                    d.label = if d.label == Label::Fake { Label::True } else { Label::Fake };
                }
                d
            })
            .collect();
        let flipped = Corpus::new("leak", flipped_docs).unwrap();
        let spec = ModelSpec::Svm(SvmConfig::default());
        let pipe = bow_pipe();
        let a = bootstrap_evaluate(&spec, &corpus, &plan, &pipe, None).unwrap();
        let b = bootstrap_evaluate(&spec, &flipped, &plan, &pipe, None).unwrap();
        assert_eq!(
            a.payload.iterations[0].model_fingerprint,
            b.payload.iterations[0].model_fingerprint
        );
        // Binary labels: flipping every test label complements the accuracy.
        let sum = a.payload.iterations[0].test_accuracy + b.payload.iterations[0].test_accuracy;
        assert!((sum - 1.0).abs() < 1e-12, "accuracies do not complement: {sum}");
    }

    #[test]
    fn rerun_reproduces_the_payload_fingerprint() {
        let corpus = synth(30, "rep");
        let plan = SplitPlan { iterations: 2, ..SplitPlan::default() };
        let spec = ModelSpec::Svm(SvmConfig::default());
        let a = bootstrap_evaluate(&spec, &corpus, &plan, &bow_pipe(), None).unwrap();
        let b = bootstrap_evaluate(&spec, &corpus, &plan, &bow_pipe(), None).unwrap();
        assert_eq!(a.fingerprint, b.fingerprint);
        assert_eq!(a.payload, b.payload);
    }

    #[test]
    fn external_corpus_is_scored_by_every_iteration() {
        let corpus = synth(30, "main");
        let external = synth(10, "ext");
        let plan = SplitPlan { iterations: 3, ..SplitPlan::default() };
        let report =
            bootstrap_evaluate(&always_fake(), &corpus, &plan, &bow_pipe(), Some(&external))
                .unwrap();
        let p = &report.payload;
        assert_eq!(p.external_corpus.as_ref().unwrap().n_documents, 10);
        assert!(p.external_acc.is_some());
        let conf = p.external_confusion.as_ref().unwrap();
        assert_eq!(conf.total(), 30);
        for it in &p.iterations {
            // The balanced 10-document external corpus scores exactly 0.5
            // under the always-FAKE model.
            assert_eq!(it.external_accuracy, Some(0.5));
            // Both corpora draw from the same token set.
            assert!(it.external_vocab_overlap.unwrap() > 0.99);
        }
    }

    #[test]
    fn grid_point_enumeration_is_models_outer_pipelines_inner() {
        let grid = Grid {
            models: vec![ModelSpec::Constant { score: 0.9 }, ModelSpec::Constant { score: 0.1 }],
            pipelines: vec![bow_pipe(), PipelineSettings::default()],
        };
        assert_eq!(grid.len(), 4);
        assert_eq!(grid.point(0).0, &grid.models[0]);
        assert_eq!(grid.point(0).1, &grid.pipelines[0]);
        assert_eq!(grid.point(1).1, &grid.pipelines[1]);
        assert_eq!(grid.point(2).0, &grid.models[1]);
        assert_eq!(grid.point(3).1, &grid.pipelines[1]);
    }

    #[test]
    fn grid_rejects_mixed_families_and_incompatible_pairs() {
        let mixed = Grid {
            models: vec![
                ModelSpec::Svm(SvmConfig::default()),
                ModelSpec::Rf(ForestConfig::default()),
            ],
            pipelines: vec![bow_pipe()],
        };
        assert!(matches!(mixed.validate(), Err(Error::InvalidConfig(_))));
        let incompatible = Grid {
            models: vec![ModelSpec::Cnn(CnnConfig::default())],
            pipelines: vec![bow_pipe()],
        };
        assert!(matches!(incompatible.validate(), Err(Error::InvalidConfig(_))));
        let empty = Grid { models: vec![], pipelines: vec![bow_pipe()] };
        assert!(matches!(empty.validate(), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn single_point_grid_returns_that_config() {
        let corpus = synth(30, "single");
        let plan = SplitPlan { iterations: 2, ..SplitPlan::default() };
        let grid = Grid { models: vec![always_fake()], pipelines: vec![bow_pipe()] };
        let (gr, reports) = grid_search(&grid, &corpus, &plan).unwrap();
        assert_eq!(reports.len(), 1);
        assert_eq!(gr.payload.ranked.len(), 1);
        assert_eq!(gr.best().model, always_fake());
        assert_eq!(gr.payload.selection_criterion, "mean-test-accuracy");
        assert_eq!(gr.best().report_fingerprint, reports[0].fingerprint);
    }

    #[test]
    fn grid_selects_the_dominant_config() {
        let corpus = skewed(40, "dom");
        let plan = SplitPlan { iterations: 5, seed: 6, ..SplitPlan::default() };
        let grid = Grid {
            models: vec![
                ModelSpec::Constant { score: 0.9 },
                ModelSpec::Constant { score: 0.1 },
            ],
            pipelines: vec![bow_pipe()],
        };
        let (gr, reports) = grid_search(&grid, &corpus, &plan).unwrap();
        // The two constant models predict complementary labels, so their
        // fold accuracies sum to one; on a 70% FAKE corpus always-FAKE
        // wins on the mean.
        for (a, b) in reports[0].payload.iterations.iter().zip(&reports[1].payload.iterations) {
            assert!((a.test_accuracy + b.test_accuracy - 1.0).abs() < 1e-12);
        }
        assert!(reports[0].payload.test_acc.mean > reports[1].payload.test_acc.mean);
        assert_eq!(gr.best().enumeration_index, 0);
        // Oracle: independently recomputed per-config reports give the
        // same argmax and identical payloads.
        let r0 = bootstrap_evaluate(&grid.models[0], &corpus, &plan, &grid.pipelines[0], None)
            .unwrap();
        let r1 = bootstrap_evaluate(&grid.models[1], &corpus, &plan, &grid.pipelines[0], None)
            .unwrap();
        assert_eq!(r0.fingerprint, reports[0].fingerprint);
        assert_eq!(r1.fingerprint, reports[1].fingerprint);
        let oracle_best = if r0.payload.test_acc.mean >= r1.payload.test_acc.mean { 0 } else { 1 };
        assert_eq!(gr.best().enumeration_index, oracle_best);
    }

    #[test]
    fn grid_uses_dev_accuracy_when_a_dev_split_exists() {
        let corpus = synth(40, "devsel");
        let plan = SplitPlan {
            iterations: 2,
            dev_fraction_of_train: 0.25,
            seed: 8,
            ..SplitPlan::default()
        };
        let grid = Grid { models: vec![always_fake()], pipelines: vec![bow_pipe()] };
        let (gr, _) = grid_search(&grid, &corpus, &plan).unwrap();
        assert_eq!(gr.payload.selection_criterion, "mean-dev-accuracy");
        assert!(gr.best().dev_acc.is_some());
        assert!(gr.best().dev_accuracies.is_some());
    }

    #[test]
    fn grid_ties_keep_enumeration_order() {
        let corpus = synth(30, "tie");
        let plan = SplitPlan { iterations: 2, ..SplitPlan::default() };
        let grid = Grid {
            models: vec![always_fake(), always_fake()],
            pipelines: vec![bow_pipe()],
        };
        let (gr, _) = grid_search(&grid, &corpus, &plan).unwrap();
        assert_eq!(gr.best().enumeration_index, 0);
        assert_eq!(gr.payload.ranked[1].enumeration_index, 1);
    }

    #[test]
    fn constant_model_curve_is_flat_with_empty_holdout_warning() {
        let base = synth(30, "base");
        let translated_docs = (0..20)
            .map(|i| doc(i, Label::Fake, "sensational scandal shocking exclusive", "tr"))
            .collect();
        let translated = Corpus::new("tr", translated_docs).unwrap();
        let report = learning_curve(
            &always_fake(),
            &base,
            &translated,
            &[20, 5, 0, 5],
            &bow_pipe(),
            9,
        )
        .unwrap();
        let p = &report.payload;
        let ns: Vec<usize> = p.points.iter().map(|pt| pt.n_mixed).collect();
        assert_eq!(ns, vec![0, 5, 20]);
        // All-FAKE holdout under the always-FAKE model: flat at 1.0.
        assert_eq!(p.points[0].accuracy, Some(1.0));
        assert_eq!(p.points[0].holdout_size, 20);
        assert_eq!(p.points[0].train_size, 30);
        assert_eq!(p.points[1].accuracy, Some(1.0));
        assert_eq!(p.points[1].train_size, 35);
        // n = |translated| leaves nothing to score.
        assert_eq!(p.points[2].accuracy, None);
        assert_eq!(p.points[2].holdout_size, 0);
        assert_eq!(p.points[2].train_size, 50);
        assert!(p.warnings.iter().any(|w| w.contains("empty translated holdout")));
    }

    #[test]
    fn curve_rejects_points_beyond_the_translated_corpus() {
        let base = synth(30, "base2");
        let translated = synth(10, "tr2");
        let err = learning_curve(&always_fake(), &base, &translated, &[11], &bow_pipe(), 0)
            .unwrap_err();
        assert!(matches!(err, Error::NTooLarge { n: 11, available: 10 }));
        let err =
            learning_curve(&always_fake(), &base, &translated, &[], &bow_pipe(), 0).unwrap_err();
        assert!(matches!(err, Error::EmptyInput(_)));
    }

    #[test]
    fn eval_report_round_trips_through_report_doc() {
        let corpus = synth(30, "rt");
        let plan = SplitPlan { iterations: 2, ..SplitPlan::default() };
        let report =
            bootstrap_evaluate(&always_fake(), &corpus, &plan, &bow_pipe(), None).unwrap();
        let doc = crate::report::ReportDoc::from(report);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.json");
        doc.save_json(&path).unwrap();
        let back = crate::report::ReportDoc::load_json(&path).unwrap();
        assert_eq!(back, doc);
    }

    #[test]
    fn full_fit_bundle_round_trips_and_scores_identically() {
        let corpus = synth(40, "deploy");
        let spec = ModelSpec::Svm(SvmConfig { epochs: 10, seed: 9, ..SvmConfig::default() });
        let pipe = PipelineSettings {
            representation: Representation::TfIdf,
            vocab_cap: 64,
            ..PipelineSettings::default()
        };
        let bundle = fit_full(&spec, &corpus, &pipe).unwrap();
        assert_eq!(bundle.corpus.n_documents, 40);
        assert!(bundle.idf.is_some());

        let texts = vec![
            "sensational scandal shocking exclusive common words".to_string(),
            "official report statement ministry common words".to_string(),
        ];
        let scores = bundle.score_texts(&texts).unwrap();
        assert_eq!(scores[0].0, Label::Fake);
        assert_eq!(scores[1].0, Label::True);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bundle.json");
        bundle.save_json(&path).unwrap();
        let back = PipelineBundle::load_json(&path).unwrap();
        assert_eq!(back, bundle);
        assert_eq!(back.fingerprint(), bundle.fingerprint());
        let rescored = back.score_texts(&texts).unwrap();
        assert_eq!(rescored, scores);

        // Refitting reproduces the identical bundle.
        let again = fit_full(&spec, &corpus, &pipe).unwrap();
        assert_eq!(again.fingerprint(), bundle.fingerprint());
    }

    #[test]
    fn sequence_bundle_scores_new_text() {
        let corpus = synth(24, "deploy-seq");
        let spec = ModelSpec::Cnn(CnnConfig {
            filters: 2,
            kernel_size: 2,
            dense_units: 2,
            epochs: 2,
            batch_size: 8,
            embedding: EmbeddingMode::Trainable { dim: 4 },
            ..CnnConfig::default()
        });
        let pipe = PipelineSettings {
            representation: Representation::Sequence { max_len: 8 },
            vocab_cap: 64,
            ..PipelineSettings::default()
        };
        let bundle = fit_full(&spec, &corpus, &pipe).unwrap();
        assert!(bundle.idf.is_none());
        let scores = bundle
            .score_texts(&["official ministry words".to_string()])
            .unwrap();
        assert_eq!(scores.len(), 1);
        assert!((0.0..=1.0).contains(&scores[0].1));
        // An empty batch is a no-op, not an error.
        assert!(bundle.score_texts(&[]).unwrap().is_empty());
    }
}
