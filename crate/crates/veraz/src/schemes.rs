//! Declarative experiments: a datasets manifest naming the corpora, a
//! spec file binding one of the cross-lingual schemes to a model grid,
//! and a runner that validates, executes, and persists the reports.
//!
//! The single `seed` key in a spec drives everything derived:
//! partitioning uses splitmix64(seed, 0), model training
//! splitmix64(seed, 1), curve mixing splitmix64(seed, 2), and stratified
//! subsampling splitmix64(seed, 3). Re-running a spec reproduces every
//! payload fingerprint.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{
    load_csv, merge, stratified_subsample, Corpus, CsvLoadStats, CsvSchema, Label, Language,
    SplitPlan,
};
use crate::error::{Error, Result};
use crate::eval::{
    bootstrap_evaluate, fit_full, grid_search, learning_curve, Grid, ModelSpec,
    PipelineBundle, PipelineSettings, Representation, DEFAULT_CURVE_POINTS,
};
use crate::report::ReportDoc;
use crate::textnorm::{NormalizerConfig, Stemming, StopWords};
use crate::util::{fingerprint, splitmix64};
use crate::vectorize::OovPolicy;

const SEED_SPLIT: u64 = 0;
const SEED_MODEL: u64 = 1;
const SEED_CURVE: u64 = 2;
const SEED_SUBSAMPLE: u64 = 3;

const KNOWN_FAMILIES: [&str; 7] = ["svm", "rf", "gbt", "mlp", "cnn", "lstm", "constant"];

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn parse_err(path: &Path, e: impl fmt::Display) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

/// Raw label values accepted for each class.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LabelValues {
    fake: Vec<String>,
    #[serde(rename = "true")]
    true_values: Vec<String>,
}

/// One named dataset in the manifest: file location(s), language, and
/// the CSV column/label mapping. Multiple files are merged in order.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetEntry {
    #[serde(default)]
    path: Option<PathBuf>,
    #[serde(default)]
    paths: Vec<PathBuf>,
    pub language: Language,
    pub text_column: String,
    pub label_column: String,
    #[serde(default)]
    pub id_column: Option<String>,
    /// Single-byte field delimiter; defaults to a comma.
    #[serde(default)]
    delimiter: Option<String>,
    #[serde(default)]
    labels: Option<LabelValues>,
}

impl DatasetEntry {
    /// Declared files in order, `path` first.
    pub fn files(&self) -> Vec<&PathBuf> {
        self.path.iter().chain(self.paths.iter()).collect()
    }

    fn check(&self, name: &str) -> Result<()> {
        if self.files().is_empty() {
            return Err(Error::InvalidConfig(format!(
                "dataset '{name}' declares no file: set path or paths"
            )));
        }
        if let Some(d) = &self.delimiter {
            if d.len() != 1 {
                return Err(Error::InvalidConfig(format!(
                    "dataset '{name}': delimiter must be a single byte, got '{d}'"
                )));
            }
        }
        if let Some(l) = &self.labels {
            if l.fake.is_empty() || l.true_values.is_empty() {
                return Err(Error::InvalidConfig(format!(
                    "dataset '{name}': both label classes need at least one raw value"
                )));
            }
        }
        Ok(())
    }

    fn schema(&self) -> CsvSchema {
        let mut schema = CsvSchema::new(&self.text_column, &self.label_column);
        schema.id_column = self.id_column.clone();
        if let Some(d) = &self.delimiter {
            schema.delimiter = d.as_bytes()[0];
        }
        if let Some(l) = &self.labels {
            schema.label_map = l
                .fake
                .iter()
                .map(|v| (v.clone(), Label::Fake))
                .chain(l.true_values.iter().map(|v| (v.clone(), Label::True)))
                .collect();
        }
        schema
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestFile {
    datasets: BTreeMap<String, DatasetEntry>,
}

/// Named datasets with their file locations and CSV mappings. Relative
/// file paths are resolved against the manifest file's directory, so a
/// manifest travels with its data.
#[derive(Debug, Clone)]
pub struct DatasetsManifest {
    base_dir: PathBuf,
    datasets: BTreeMap<String, DatasetEntry>,
}

impl DatasetsManifest {
    pub fn load(path: &Path) -> Result<DatasetsManifest> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let file: ManifestFile = toml::from_str(&text).map_err(|e| parse_err(path, e))?;
        for (name, entry) in &file.datasets {
            entry.check(name)?;
        }
        Ok(DatasetsManifest {
            base_dir: path.parent().unwrap_or_else(|| Path::new(".")).to_path_buf(),
            datasets: file.datasets,
        })
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.datasets.keys().map(String::as_str)
    }

    pub fn get(&self, name: &str) -> Result<&DatasetEntry> {
        self.datasets.get(name).ok_or_else(|| {
            Error::InvalidConfig(format!("manifest has no dataset named '{name}'"))
        })
    }

    /// Load (and merge, for multi-file entries) the named dataset. The
    /// returned stats are per file, in declaration order.
    pub fn load_corpus(&self, name: &str) -> Result<(Corpus, Vec<CsvLoadStats>)> {
        let entry = self.get(name)?;
        let files = entry.files();
        let schema = entry.schema();
        let mut parts = Vec::with_capacity(files.len());
        let mut stats = Vec::with_capacity(files.len());
        for (i, file) in files.iter().enumerate() {
            let source = if files.len() == 1 {
                name.to_string()
            } else {
                format!("{name}[{i}]")
            };
            let (corpus, s) = load_csv(&resolve(&self.base_dir, file), &schema, entry.language, &source)?;
            parts.push(corpus);
            stats.push(s);
        }
        let corpus = if parts.len() == 1 {
            parts.pop().expect("one part")
        } else {
            merge(&parts, name)?
        };
        Ok((corpus, stats))
    }
}

/// The experimental protocols: which corpora train and validate, and
/// which model class runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scheme {
    /// Classical models trained and validated on the Spanish corpus.
    #[serde(rename = "1")]
    SpanishClassical,
    /// Sequence models trained and validated on the Spanish corpus.
    #[serde(rename = "2")]
    SpanishDeep,
    /// Sequence models trained and validated on the English corpus.
    #[serde(rename = "3")]
    EnglishDeep,
    /// Sequence models trained on English, scored on the whole
    /// translated corpus every iteration.
    #[serde(rename = "4")]
    CrossLingual,
    /// Translated-mixing learning curve over the English corpus.
    #[serde(rename = "curve")]
    Curve,
}

impl Scheme {
    pub fn tag(&self) -> &'static str {
        match self {
            Scheme::SpanishClassical => "1",
            Scheme::SpanishDeep => "2",
            Scheme::EnglishDeep => "3",
            Scheme::CrossLingual => "4",
            Scheme::Curve => "curve",
        }
    }

    fn allows_family(&self, family: &str) -> bool {
        match self {
            Scheme::SpanishClassical => matches!(family, "svm" | "rf" | "gbt" | "mlp" | "constant"),
            _ => matches!(family, "cnn" | "lstm" | "constant"),
        }
    }

    fn family_rule(&self) -> &'static str {
        match self {
            Scheme::SpanishClassical => "runs the classical models (svm, rf, gbt, mlp)",
            _ => "runs the sequence models (cnn, lstm)",
        }
    }

    fn train_language(&self) -> Language {
        match self {
            Scheme::SpanishClassical | Scheme::SpanishDeep => Language::Es,
            _ => Language::En,
        }
    }

    /// Schemes 1-3 validate on the training corpus itself.
    fn validates_in_place(&self) -> bool {
        matches!(
            self,
            Scheme::SpanishClassical | Scheme::SpanishDeep | Scheme::EnglishDeep
        )
    }

    fn default_dev_fraction(&self) -> f64 {
        match self {
            Scheme::SpanishClassical | Scheme::Curve => 0.0,
            _ => 0.2,
        }
    }

    fn default_stop_words(&self) -> StopWords {
        match self {
            Scheme::SpanishClassical => StopWords::None,
            Scheme::SpanishDeep => StopWords::Es,
            _ => StopWords::En,
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// A scalar or a list of candidates; lists become grid axes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn values(&self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v.clone()],
            OneOrMany::Many(vs) => vs.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    /// Manifest name of the training corpus.
    pub train: String,
    /// Manifest name of the validation corpus; schemes 1-3 require the
    /// same name as `train`.
    pub validate: String,
    /// Stratified subsample size applied to the training corpus.
    #[serde(default)]
    pub subsample_train: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub family: String,
    /// Hyperparameters; unset ones keep the family default. A list value
    /// is a grid axis. `family` and `seed` are not valid keys here.
    #[serde(default)]
    pub params: BTreeMap<String, toml::Value>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NormalizeSection {
    pub lowercase: Option<bool>,
    pub strip_non_alnum: Option<bool>,
    pub stop_words: Option<StopWords>,
    pub stemming: Option<Stemming>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReprKind {
    Bow,
    TfIdf,
    Sequence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RepresentSection {
    pub kind: ReprKind,
    #[serde(default)]
    pub vocab_cap: Option<OneOrMany<usize>>,
    /// Sequence length after padding/truncation; sequence kind only.
    #[serde(default)]
    pub max_len: Option<OneOrMany<usize>>,
    #[serde(default)]
    pub count_oov: bool,
    /// Word-vector file for fixed-embedding models, relative to the spec
    /// file's directory.
    #[serde(default)]
    pub embedding_file: Option<PathBuf>,
    #[serde(default)]
    pub oov_policy: Option<OovPolicy>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    pub iterations: Option<usize>,
    pub train_fraction: Option<f64>,
    pub dev_fraction_of_train: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurveSection {
    /// Translated document counts to mix in; curve scheme only.
    pub points: Option<Vec<usize>>,
}

/// A parsed experiment spec. The fingerprint covers the declared content
/// only, never the file's location, so it is stable across machines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub scheme: Scheme,
    /// Master seed; every derived seed mixes out of this one.
    #[serde(default)]
    pub seed: u64,
    /// Report directory, relative to the spec file's directory.
    pub output: PathBuf,
    pub data: DataSection,
    pub model: ModelSection,
    #[serde(default)]
    pub normalize: NormalizeSection,
    pub represent: RepresentSection,
    #[serde(default)]
    pub split: SplitSection,
    #[serde(default)]
    pub curve: CurveSection,
    #[serde(skip)]
    base_dir: PathBuf,
}

impl ExperimentSpec {
    pub fn load(path: &Path) -> Result<ExperimentSpec> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut spec: ExperimentSpec = toml::from_str(&text).map_err(|e| parse_err(path, e))?;
        spec.base_dir = path.parent().unwrap_or_else(|| Path::new(".")).to_path_buf();
        Ok(spec)
    }

    /// Identity of the declared experiment; embedded in every report it
    /// produces.
    pub fn fingerprint(&self) -> String {
        fingerprint(self)
    }

    /// The output directory, resolved against the spec file's location.
    pub fn resolved_output(&self) -> PathBuf {
        resolve(&self.base_dir, &self.output)
    }

    /// The split plan with scheme defaults filled in and the partition
    /// seed derived from the master seed.
    pub fn split_plan(&self) -> SplitPlan {
        SplitPlan {
            iterations: self.split.iterations.unwrap_or(5),
            train_fraction: self.split.train_fraction.unwrap_or(0.8),
            dev_fraction_of_train: self
                .split
                .dev_fraction_of_train
                .unwrap_or_else(|| self.scheme.default_dev_fraction()),
            seed: splitmix64(self.seed, SEED_SPLIT),
        }
    }
}

/// The normalizer a spec resolves to: scheme defaults (stop words
/// removed in the training language for the sequence schemes, nothing
/// removed for the classical baseline) overlaid with the explicit
/// normalize section.
pub fn resolved_normalizer(spec: &ExperimentSpec) -> NormalizerConfig {
    let mut cfg = NormalizerConfig {
        stop_words: spec.scheme.default_stop_words(),
        ..NormalizerConfig::default()
    };
    if let Some(v) = spec.normalize.lowercase {
        cfg.lowercase = v;
    }
    if let Some(v) = spec.normalize.strip_non_alnum {
        cfg.strip_non_alnum = v;
    }
    if let Some(v) = spec.normalize.stemming {
        cfg.stemming = v;
    }
    if let Some(sw) = &spec.normalize.stop_words {
        cfg.stop_words = match sw {
            StopWords::Custom(p) => StopWords::Custom(resolve(&spec.base_dir, p)),
            other => other.clone(),
        };
    }
    cfg
}

fn toml_to_json(key: &str, v: &toml::Value) -> Result<serde_json::Value> {
    Ok(match v {
        toml::Value::String(s) => serde_json::Value::String(s.clone()),
        toml::Value::Integer(i) => serde_json::Value::from(*i),
        toml::Value::Float(f) => serde_json::Number::from_f64(*f)
            .map(serde_json::Value::Number)
            .ok_or_else(|| {
                Error::InvalidConfig(format!("model.params.{key}: value must be finite"))
            })?,
        toml::Value::Boolean(b) => serde_json::Value::Bool(*b),
        toml::Value::Datetime(_) => {
            return Err(Error::InvalidConfig(format!(
                "model.params.{key}: datetime values are not supported"
            )));
        }
        toml::Value::Array(xs) => serde_json::Value::Array(
            xs.iter().map(|x| toml_to_json(key, x)).collect::<Result<_>>()?,
        ),
        toml::Value::Table(t) => serde_json::Value::Object(
            t.iter()
                .map(|(k, x)| Ok((k.clone(), toml_to_json(key, x)?)))
                .collect::<Result<_>>()?,
        ),
    })
}

fn expand_models(spec: &ExperimentSpec) -> Result<Vec<ModelSpec>> {
    let family = spec.model.family.as_str();
    if !KNOWN_FAMILIES.contains(&family) {
        return Err(Error::InvalidConfig(format!("unknown model family '{family}'")));
    }
    for reserved in ["seed", "family"] {
        if spec.model.params.contains_key(reserved) {
            return Err(Error::InvalidConfig(format!(
                "model.params.{reserved} is not allowed; use the top-level key"
            )));
        }
    }
    let mut fixed = serde_json::Map::new();
    fixed.insert("family".to_string(), serde_json::Value::String(family.to_string()));
    let mut axes: Vec<(&str, Vec<serde_json::Value>)> = Vec::new();
    for (k, v) in &spec.model.params {
        match v {
            toml::Value::Array(xs) => {
                if xs.is_empty() {
                    return Err(Error::InvalidConfig(format!(
                        "model.params.{k}: a grid axis needs at least one value"
                    )));
                }
                let vals = xs.iter().map(|x| toml_to_json(k, x)).collect::<Result<Vec<_>>>()?;
                axes.push((k, vals));
            }
            other => {
                fixed.insert(k.clone(), toml_to_json(k, other)?);
            }
        }
    }

    let seed = splitmix64(spec.seed, SEED_MODEL);
    let total: usize = axes.iter().map(|(_, vs)| vs.len()).product();
    let mut models = Vec::with_capacity(total);
    for combo in 0..total {
        let mut obj = fixed.clone();
        let mut rem = combo;
        for (k, vs) in axes.iter().rev() {
            obj.insert(k.to_string(), vs[rem % vs.len()].clone());
            rem /= vs.len();
        }
        let model: ModelSpec = serde_json::from_value(serde_json::Value::Object(obj))
            .map_err(|e| Error::InvalidConfig(format!("model.params: {e}")))?;
        models.push(model.with_seed(seed));
    }
    Ok(models)
}

fn axis_values(axis: &OneOrMany<usize>, name: &str) -> Result<Vec<usize>> {
    let vals = axis.values();
    if vals.is_empty() {
        return Err(Error::InvalidConfig(format!(
            "{name}: a grid axis needs at least one value"
        )));
    }
    Ok(vals)
}

fn expand_pipelines(spec: &ExperimentSpec) -> Result<Vec<PipelineSettings>> {
    let normalizer = resolved_normalizer(spec);
    let rep = &spec.represent;
    if rep.kind != ReprKind::Sequence && rep.max_len.is_some() {
        return Err(Error::InvalidConfig(
            "represent.max_len only applies to the sequence representation".to_string(),
        ));
    }
    let representations: Vec<Representation> = match rep.kind {
        ReprKind::Bow => vec![Representation::Bow],
        ReprKind::TfIdf => vec![Representation::TfIdf],
        ReprKind::Sequence => {
            let lens = rep.max_len.as_ref().ok_or_else(|| {
                Error::InvalidConfig(
                    "the sequence representation requires represent.max_len".to_string(),
                )
            })?;
            axis_values(lens, "represent.max_len")?
                .into_iter()
                .map(|max_len| Representation::Sequence { max_len })
                .collect()
        }
    };
    let caps = match &rep.vocab_cap {
        Some(axis) => axis_values(axis, "represent.vocab_cap")?,
        None => vec![PipelineSettings::default().vocab_cap],
    };
    let embedding_file = rep.embedding_file.as_ref().map(|p| resolve(&spec.base_dir, p));
    let oov_policy = rep.oov_policy.unwrap_or(OovPolicy::ZeroVector);

    let mut pipelines = Vec::with_capacity(caps.len() * representations.len());
    for &cap in &caps {
        for &representation in &representations {
            pipelines.push(PipelineSettings {
                normalizer: normalizer.clone(),
                representation,
                vocab_cap: cap,
                count_oov: rep.count_oov,
                embedding_file: embedding_file.clone(),
                oov_policy,
            });
        }
    }
    Ok(pipelines)
}

/// Expand a spec's model/representation axes into the full grid. Models
/// enumerate with the first parameter name slowest; pipelines enumerate
/// vocab_cap outer, max_len inner.
pub fn expand_grid(spec: &ExperimentSpec) -> Result<Grid> {
    Ok(Grid {
        models: expand_models(spec)?,
        pipelines: expand_pipelines(spec)?,
    })
}

fn check_binding(
    manifest: &DatasetsManifest,
    scheme: Scheme,
    name: &str,
    expected: Language,
    role: &str,
) -> Option<String> {
    match manifest.get(name) {
        Err(e) => Some(e.to_string()),
        Ok(entry) if entry.language != expected => Some(format!(
            "scheme/dataset mismatch: scheme {scheme} {role} on a {expected} corpus, but '{name}' is {}",
            entry.language
        )),
        Ok(_) => None,
    }
}

/// Structural validation: every violated rule as one message, empty when
/// the spec is well formed. Nothing is executed and no data is read.
pub fn validate_spec(spec: &ExperimentSpec, manifest: &DatasetsManifest) -> Vec<String> {
    let mut violations = Vec::new();
    if spec.output.as_os_str().is_empty() {
        violations.push("output path must not be empty".to_string());
    }

    let family = spec.model.family.as_str();
    if KNOWN_FAMILIES.contains(&family) && !spec.scheme.allows_family(family) {
        violations.push(format!(
            "scheme {} {}; family '{family}' is not supported there",
            spec.scheme,
            spec.scheme.family_rule()
        ));
    }

    if let Some(v) = check_binding(
        manifest,
        spec.scheme,
        &spec.data.train,
        spec.scheme.train_language(),
        "trains",
    ) {
        violations.push(v);
    }
    if spec.scheme.validates_in_place() {
        if spec.data.validate != spec.data.train {
            violations.push(format!(
                "scheme/dataset mismatch: scheme {} trains and validates on the same corpus, \
                 but train is '{}' and validate is '{}'",
                spec.scheme, spec.data.train, spec.data.validate
            ));
        }
    } else if let Some(v) = check_binding(
        manifest,
        spec.scheme,
        &spec.data.validate,
        Language::EsTranslated,
        "validates",
    ) {
        violations.push(v);
    }

    if let Err(e) = spec.split_plan().validate() {
        violations.push(format!("split: {e}"));
    }

    if spec.scheme != Scheme::Curve && spec.curve.points.is_some() {
        violations.push("curve.points only applies to the curve scheme".to_string());
    }
    if spec.scheme == Scheme::Curve {
        if let Some(points) = &spec.curve.points {
            if points.is_empty() {
                violations.push("curve.points needs at least one value".to_string());
            }
        }
    }

    match expand_grid(spec) {
        Err(e) => violations.push(e.to_string()),
        Ok(grid) => {
            if let Err(e) = grid.validate() {
                violations.push(e.to_string());
            }
            if !spec.scheme.validates_in_place() && grid.len() > 1 {
                violations.push(format!(
                    "scheme {} runs a single configuration; give each hyperparameter one value",
                    spec.scheme
                ));
            }
        }
    }
    violations
}

/// Reports produced by one experiment, each with the JSON file it was
/// persisted to. A plot-ready TSV sits next to every JSON file.
#[derive(Debug)]
pub struct RunArtifacts {
    pub written: Vec<(PathBuf, ReportDoc)>,
    pub output_dir: PathBuf,
}

fn save_doc(dir: &Path, stem: &str, doc: ReportDoc) -> Result<(PathBuf, ReportDoc)> {
    let json_path = dir.join(format!("{stem}.json"));
    doc.save_json(&json_path)?;
    let tsv_path = dir.join(format!("{stem}.tsv"));
    std::fs::write(&tsv_path, doc.to_tsv())
        .map_err(|e| Error::io(tsv_path.display().to_string(), e))?;
    Ok((json_path, doc))
}

/// Validate and execute a spec, persisting every report under its
/// output directory. Scheme 4 trains on the English corpus's training
/// splits only; the translated corpus is scored, never fitted on.
pub fn run_experiment(spec: &ExperimentSpec, manifest: &DatasetsManifest) -> Result<RunArtifacts> {
    let violations = validate_spec(spec, manifest);
    if !violations.is_empty() {
        return Err(Error::SpecValidation(violations.join("\n")));
    }
    let spec_fp = spec.fingerprint();
    let scheme_tag = spec.scheme.tag();

    let (mut train_corpus, _) = manifest.load_corpus(&spec.data.train)?;
    if let Some(n) = spec.data.subsample_train {
        train_corpus = stratified_subsample(&train_corpus, n, splitmix64(spec.seed, SEED_SUBSAMPLE))?;
    }
    let plan = spec.split_plan();
    let grid = expand_grid(spec)?;

    let out_dir = spec.resolved_output();
    std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(out_dir.display().to_string(), e))?;
    let mut written = Vec::new();

    match spec.scheme {
        Scheme::SpanishClassical | Scheme::SpanishDeep | Scheme::EnglishDeep => {
            if grid.len() == 1 {
                let report =
                    bootstrap_evaluate(&grid.models[0], &train_corpus, &plan, &grid.pipelines[0], None)?
                        .with_scheme(scheme_tag)
                        .with_spec_fingerprint(&spec_fp);
                written.push(save_doc(&out_dir, "eval", ReportDoc::from(report))?);
            } else {
                let (grid_report, points) = grid_search(&grid, &train_corpus, &plan)?;
                let grid_report = grid_report
                    .with_scheme(scheme_tag)
                    .with_spec_fingerprint(&spec_fp);
                written.push(save_doc(&out_dir, "grid", ReportDoc::from(grid_report))?);
                for (k, point) in points.into_iter().enumerate() {
                    let point = point.with_scheme(scheme_tag).with_spec_fingerprint(&spec_fp);
                    written.push(save_doc(&out_dir, &format!("point-{k:03}"), ReportDoc::from(point))?);
                }
            }
        }
        Scheme::CrossLingual => {
            let (external, _) = manifest.load_corpus(&spec.data.validate)?;
            let report = bootstrap_evaluate(
                &grid.models[0],
                &train_corpus,
                &plan,
                &grid.pipelines[0],
                Some(&external),
            )?
            .with_scheme(scheme_tag)
            .with_spec_fingerprint(&spec_fp);
            written.push(save_doc(&out_dir, "eval", ReportDoc::from(report))?);
        }
        Scheme::Curve => {
            let (translated, _) = manifest.load_corpus(&spec.data.validate)?;
            let points = spec
                .curve
                .points
                .clone()
                .unwrap_or_else(|| DEFAULT_CURVE_POINTS.to_vec());
            let report = learning_curve(
                &grid.models[0],
                &train_corpus,
                &translated,
                &points,
                &grid.pipelines[0],
                splitmix64(spec.seed, SEED_CURVE),
            )?
            .with_scheme(scheme_tag)
            .with_spec_fingerprint(&spec_fp);
            written.push(save_doc(&out_dir, "curve", ReportDoc::from(report))?);
        }
    }
    Ok(RunArtifacts {
        written,
        output_dir: out_dir,
    })
}

/// The deployment fit for a spec: validate, load the training corpus,
/// and fit the spec's single configuration on all of it. Curve specs and
/// grids have no single model to deploy and are rejected.
pub fn train_bundle(spec: &ExperimentSpec, manifest: &DatasetsManifest) -> Result<PipelineBundle> {
    let mut violations = validate_spec(spec, manifest);
    if spec.scheme == Scheme::Curve {
        violations.push("the curve scheme has no single deployment fit".to_string());
    }
    if violations.is_empty() {
        let grid = expand_grid(spec)?;
        if grid.len() > 1 {
            violations.push(format!(
                "a deployment fit needs exactly one configuration; this spec expands to {}",
                grid.len()
            ));
        }
    }
    if !violations.is_empty() {
        return Err(Error::SpecValidation(violations.join("\n")));
    }
    let (mut corpus, _) = manifest.load_corpus(&spec.data.train)?;
    if let Some(n) = spec.data.subsample_train {
        corpus = stratified_subsample(&corpus, n, splitmix64(spec.seed, SEED_SUBSAMPLE))?;
    }
    let grid = expand_grid(spec)?;
    fit_full(&grid.models[0], &corpus, &grid.pipelines[0])
}
