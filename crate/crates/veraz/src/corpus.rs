//! Corpus loading, validation, merging, splitting, and statistics.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::textnorm::{Normalizer, NormalizerConfig};
use crate::util::splitmix64;

/// Binary document class. FAKE is the positive class throughout: scores
/// are P(FAKE) and FAKE sorts first in confusion matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "FAKE")]
    Fake,
    #[serde(rename = "TRUE")]
    True,
}

/// Language tag of a corpus or document.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Language {
    En,
    Es,
    EsTranslated,
}

impl std::fmt::Display for Language {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Language::En => "en",
            Language::Es => "es",
            Language::EsTranslated => "es-translated",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for Language {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "en" => Ok(Language::En),
            "es" => Ok(Language::Es),
            "es-translated" => Ok(Language::EsTranslated),
            other => Err(Error::InvalidConfig(format!(
                "unknown language tag '{other}' (expected en, es, es-translated)"
            ))),
        }
    }
}

/// One labeled news item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    pub label: Label,
    pub language: Language,
    pub source: String,
}

/// An ordered collection of documents with unique ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub name: String,
    documents: Vec<Document>,
}

impl Corpus {
    /// Build a corpus, enforcing unique ids and non-empty text.
    pub fn new(name: impl Into<String>, documents: Vec<Document>) -> Result<Self> {
        let name = name.into();
        let mut seen = HashSet::with_capacity(documents.len());
        for doc in &documents {
            if doc.text.trim().is_empty() {
                return Err(Error::InvalidData(format!(
                    "document '{}' has empty text",
                    doc.id
                )));
            }
            if !seen.insert(doc.id.as_str()) {
                return Err(Error::InvalidData(format!(
                    "duplicate document id '{}' in corpus '{}'",
                    doc.id, name
                )));
            }
        }
        Ok(Corpus { name, documents })
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    /// (FAKE count, TRUE count); the two always sum to `len`.
    pub fn class_counts(&self) -> (usize, usize) {
        let fake = self
            .documents
            .iter()
            .filter(|d| d.label == Label::Fake)
            .count();
        (fake, self.documents.len() - fake)
    }

    pub fn labels(&self) -> Vec<Label> {
        self.documents.iter().map(|d| d.label).collect()
    }

    /// New corpus holding clones of the documents at `indices`, in the
    /// given order.
    pub fn subset(&self, name: impl Into<String>, indices: &[usize]) -> Result<Corpus> {
        let docs = indices
            .iter()
            .map(|&i| self.documents[i].clone())
            .collect();
        Corpus::new(name, docs)
    }
}

/// Column mapping and label normalization for one CSV dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CsvSchema {
    pub text_column: String,
    pub label_column: String,
    /// `None` uses the 1-based data-row ordinal as the id.
    pub id_column: Option<String>,
    pub delimiter: u8,
    /// Raw label values (compared after trimming and lowercasing) mapped
    /// to classes.
    pub label_map: Vec<(String, Label)>,
}

impl CsvSchema {
    pub fn new(text_column: &str, label_column: &str) -> Self {
        CsvSchema {
            text_column: text_column.to_string(),
            label_column: label_column.to_string(),
            id_column: None,
            delimiter: b',',
            label_map: vec![
                ("fake".to_string(), Label::Fake),
                ("false".to_string(), Label::Fake),
                ("0".to_string(), Label::Fake),
                ("true".to_string(), Label::True),
                ("real".to_string(), Label::True),
                ("1".to_string(), Label::True),
            ],
        }
    }

    fn map_label(&self, raw: &str) -> Option<Label> {
        let needle = raw.trim().to_lowercase();
        self.label_map
            .iter()
            .find(|(k, _)| k.trim().to_lowercase() == needle)
            .map(|(_, l)| *l)
    }
}

/// Ingestion counters reported alongside a loaded corpus.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CsvLoadStats {
    pub rows_read: usize,
    pub rows_kept: usize,
    pub rows_skipped_empty_text: usize,
    pub ids_disambiguated: usize,
}

/// Load a labeled corpus from a CSV file. Rows with empty text are
/// skipped and counted; a label outside the map is a hard error naming
/// the 1-based data row. Duplicate ids from the id column are
/// disambiguated by appending `#<row>`.
pub fn load_csv(
    path: &Path,
    schema: &CsvSchema,
    language: Language,
    source: &str,
) -> Result<(Corpus, CsvLoadStats)> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter)
        .flexible(false)
        .from_path(path)?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let text_idx = col(&schema.text_column)?;
    let label_idx = col(&schema.label_column)?;
    let id_idx = match &schema.id_column {
        Some(c) => Some(col(c)?),
        None => None,
    };

    let mut stats = CsvLoadStats::default();
    let mut documents = Vec::new();
    let mut seen_ids: HashSet<String> = HashSet::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record?;
        stats.rows_read += 1;
        let text = record.get(text_idx).unwrap_or("");
        if text.trim().is_empty() {
            stats.rows_skipped_empty_text += 1;
            continue;
        }
        let raw_label = record.get(label_idx).unwrap_or("");
        let label = schema.map_label(raw_label).ok_or(Error::UnmappableLabel {
            row,
            label: raw_label.to_string(),
        })?;
        let mut id = match id_idx {
            Some(idx) => record.get(idx).unwrap_or("").trim().to_string(),
            None => row.to_string(),
        };
        if id.is_empty() {
            id = row.to_string();
        }
        if !seen_ids.insert(id.clone()) {
            id = format!("{id}#{row}");
            seen_ids.insert(id.clone());
            stats.ids_disambiguated += 1;
        }
        documents.push(Document {
            id,
            text: text.to_string(),
            label,
            language,
            source: source.to_string(),
        });
    }
    if documents.is_empty() {
        return Err(Error::EmptyCorpus(path.display().to_string()));
    }
    stats.rows_kept = documents.len();
    Ok((Corpus::new(source, documents)?, stats))
}

/// Concatenate corpora. Ids colliding across inputs are disambiguated by
/// prefixing with the document's source name (and a `#<ordinal>` suffix
/// if two same-source documents still collide).
pub fn merge(corpora: &[Corpus], name: impl Into<String>) -> Result<Corpus> {
    let mut id_count: HashMap<&str, usize> = HashMap::new();
    for corpus in corpora {
        for doc in corpus.documents() {
            *id_count.entry(doc.id.as_str()).or_default() += 1;
        }
    }
    let mut documents = Vec::with_capacity(id_count.len());
    let mut seen: HashSet<String> = HashSet::new();
    for corpus in corpora {
        for doc in corpus.documents() {
            let mut doc = doc.clone();
            if id_count[doc.id.as_str()] > 1 {
                doc.id = format!("{}:{}", doc.source, doc.id);
            }
            let mut ordinal = 1usize;
            while !seen.insert(doc.id.clone()) {
                ordinal += 1;
                doc.id = format!("{}#{}", doc.id, ordinal);
            }
            documents.push(doc);
        }
    }
    Corpus::new(name, documents)
}

/// Bootstrap (ShuffleSplit) plan: independent random partitions per
/// iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub iterations: usize,
    pub train_fraction: f64,
    /// Fraction of the pre-carve train block moved to a dev set; 0 means
    /// a two-way split.
    pub dev_fraction_of_train: f64,
    pub seed: u64,
}

impl Default for SplitPlan {
    fn default() -> Self {
        SplitPlan {
            iterations: 5,
            train_fraction: 0.8,
            dev_fraction_of_train: 0.0,
            seed: 0,
        }
    }
}

impl SplitPlan {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::InvalidConfig("iterations must be >= 1".to_string()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::InvalidConfig(
                "train_fraction must be in (0,1)".to_string(),
            ));
        }
        if !(0.0..1.0).contains(&self.dev_fraction_of_train) {
            return Err(Error::InvalidConfig(
                "dev_fraction_of_train must be in [0,1)".to_string(),
            ));
        }
        Ok(())
    }
}

/// Index sets for one split iteration, each sorted ascending. `dev` is
/// empty for two-way splits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub dev: Vec<usize>,
    pub test: Vec<usize>,
}

/// Split sizes: the train block is floor(train_fraction * N) and test is
/// the remainder; the dev set is then carved out of the train block the
/// same way. For N=2571 at 0.8/0.2 this gives test 515, dev 412, train
/// 1644.
fn split_sizes(n: usize, plan: &SplitPlan) -> (usize, usize, usize) {
    let floor_frac = |count: usize, f: f64| ((count as f64) * f + 1e-9).floor() as usize;
    let train_block = floor_frac(n, plan.train_fraction);
    let test = n - train_block;
    let train = floor_frac(train_block, 1.0 - plan.dev_fraction_of_train);
    let dev = train_block - train;
    (train, dev, test)
}

/// Produce `plan.iterations` independent random partitions of the corpus
/// indices. Deterministic given the plan seed; iteration i uses its own
/// RNG stream, so iterations are order-independent.
pub fn shuffle_split(corpus: &Corpus, plan: &SplitPlan) -> Result<Vec<SplitIndices>> {
    plan.validate()?;
    let n = corpus.len();
    if n < 10 {
        return Err(Error::CorpusTooSmall { size: n, min: 10 });
    }
    let (train_n, dev_n, test_n) = split_sizes(n, plan);
    if train_n == 0 || test_n == 0 {
        return Err(Error::InvalidConfig(format!(
            "split of {n} documents at train_fraction {} leaves an empty side",
            plan.train_fraction
        )));
    }
    let mut out = Vec::with_capacity(plan.iterations);
    for iter in 0..plan.iterations {
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(plan.seed, iter as u64));
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng);
        let mut test: Vec<usize> = idx[..test_n].to_vec();
        let mut dev: Vec<usize> = idx[test_n..test_n + dev_n].to_vec();
        let mut train: Vec<usize> = idx[test_n + dev_n..].to_vec();
        debug_assert_eq!(train.len(), train_n);
        test.sort_unstable();
        dev.sort_unstable();
        train.sort_unstable();
        out.push(SplitIndices { train, dev, test });
    }
    Ok(out)
}

/// Token-length distribution with a percentile-based max_len
/// recommendation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LengthHistogram {
    /// length -> number of documents with that token count
    pub counts: BTreeMap<usize, usize>,
    pub total: usize,
    pub percentile: f64,
    pub recommended_max_len: usize,
}

pub const DEFAULT_LENGTH_PERCENTILE: f64 = 0.90;

/// Tokenize every document and histogram the token counts. The
/// recommended max_len is the smallest length L such that at least
/// ceil(percentile * N) documents have length <= L.
pub fn length_histogram(
    corpus: &Corpus,
    tokenizer: &NormalizerConfig,
    percentile: f64,
) -> Result<LengthHistogram> {
    if corpus.is_empty() {
        return Err(Error::EmptyInput("length_histogram corpus"));
    }
    if !(0.0..=1.0).contains(&percentile) {
        return Err(Error::InvalidConfig(
            "percentile must be in [0,1]".to_string(),
        ));
    }
    let normalizer = Normalizer::new(tokenizer.clone())?;
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for doc in corpus.documents() {
        let len = normalizer.normalize(&doc.text).len();
        *counts.entry(len).or_default() += 1;
    }
    let total = corpus.len();
    let target = ((percentile * total as f64 - 1e-9).ceil() as usize).max(1);
    let mut cumulative = 0usize;
    let mut recommended = *counts.keys().next_back().expect("non-empty histogram");
    for (&len, &count) in &counts {
        cumulative += count;
        if cumulative >= target {
            recommended = len;
            break;
        }
    }
    Ok(LengthHistogram {
        counts,
        total,
        percentile,
        recommended_max_len: recommended,
    })
}

/// Move `n` randomly chosen translated documents into the training
/// corpus; the remaining translated documents form the holdout. The two
/// translated parts are disjoint and exhaustive.
pub fn mix_for_curve(
    base_train: &Corpus,
    translated: &Corpus,
    n: usize,
    seed: u64,
) -> Result<(Corpus, Corpus)> {
    if n > translated.len() {
        return Err(Error::NTooLarge {
            n,
            available: translated.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx: Vec<usize> = (0..translated.len()).collect();
    idx.shuffle(&mut rng);
    let mut chosen: Vec<usize> = idx[..n].to_vec();
    let mut rest: Vec<usize> = idx[n..].to_vec();
    chosen.sort_unstable();
    rest.sort_unstable();
    let mixed = translated.subset(format!("{}[mix{}]", translated.name, n), &chosen)?;
    let augmented = merge(
        &[base_train.clone(), mixed],
        format!("{}+{}", base_train.name, n),
    )?;
    let holdout = translated.subset(format!("{}[holdout]", translated.name), &rest)?;
    Ok((augmented, holdout))
}

/// Random subsample of size `n` preserving the class balance as closely
/// as integer counts allow. Document order is preserved.
pub fn stratified_subsample(corpus: &Corpus, n: usize, seed: u64) -> Result<Corpus> {
    if n > corpus.len() {
        return Err(Error::NTooLarge {
            n,
            available: corpus.len(),
        });
    }
    let (fake_total, true_total) = corpus.class_counts();
    let ratio = fake_total as f64 / corpus.len() as f64;
    let mut n_fake = (n as f64 * ratio).round() as usize;
    n_fake = n_fake.min(fake_total).max(n.saturating_sub(true_total));
    let n_true = n - n_fake;

    let mut fake_idx: Vec<usize> = Vec::with_capacity(fake_total);
    let mut true_idx: Vec<usize> = Vec::with_capacity(true_total);
    for (i, doc) in corpus.documents().iter().enumerate() {
        match doc.label {
            Label::Fake => fake_idx.push(i),
            Label::True => true_idx.push(i),
        }
    }
    let mut rng_fake = ChaCha8Rng::seed_from_u64(splitmix64(seed, 0));
    let mut rng_true = ChaCha8Rng::seed_from_u64(splitmix64(seed, 1));
    fake_idx.shuffle(&mut rng_fake);
    true_idx.shuffle(&mut rng_true);
    let mut keep: Vec<usize> = fake_idx[..n_fake]
        .iter()
        .chain(true_idx[..n_true].iter())
        .copied()
        .collect();
    keep.sort_unstable();
    corpus.subset(format!("{}[{}]", corpus.name, n), &keep)
}
