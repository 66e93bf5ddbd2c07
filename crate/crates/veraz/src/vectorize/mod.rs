//! Vocabulary construction and BoW / tf-idf / id-sequence representations.

pub mod embeddings;
mod sparse;

pub use embeddings::{load_embeddings, EmbeddingTable, OovPolicy};
pub use sparse::{CscView, FeatureMatrix, WeightKind};

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::textnorm::pad_truncate;
use crate::util::fingerprint;

pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";

/// Capped token index fitted on training documents only. Ids 0 and 1 are
/// reserved for pad and unk; real tokens start at 2 and are ordered by
/// descending frequency with lexicographic tie-break.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "VocabularyData", into = "VocabularyData")]
pub struct Vocabulary {
    id_to_token: Vec<String>,
    doc_freq: Vec<u32>,
    max_size: usize,
    /// Tag identifying the training slice this vocabulary was fitted on;
    /// folded into the fingerprint as a leakage guard.
    provenance: String,
    token_to_id: HashMap<String, u32>,
}

/// Serialized form; the token->id map is rebuilt on load.
#[derive(Serialize, Deserialize)]
struct VocabularyData {
    id_to_token: Vec<String>,
    doc_freq: Vec<u32>,
    max_size: usize,
    provenance: String,
}

impl From<VocabularyData> for Vocabulary {
    fn from(d: VocabularyData) -> Self {
        let token_to_id = d
            .id_to_token
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Vocabulary {
            id_to_token: d.id_to_token,
            doc_freq: d.doc_freq,
            max_size: d.max_size,
            provenance: d.provenance,
            token_to_id,
        }
    }
}

impl From<Vocabulary> for VocabularyData {
    fn from(v: Vocabulary) -> Self {
        VocabularyData {
            id_to_token: v.id_to_token,
            doc_freq: v.doc_freq,
            max_size: v.max_size,
            provenance: v.provenance,
        }
    }
}

impl Vocabulary {
    /// Total id count including the two reserved ids.
    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Number of real (non-reserved) tokens.
    pub fn n_tokens(&self) -> usize {
        self.id_to_token.len() - 2
    }

    pub fn max_size(&self) -> usize {
        self.max_size
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn id_of(&self, token: &str) -> Option<u32> {
        self.token_to_id.get(token).copied()
    }

    pub fn token_of(&self, id: u32) -> &str {
        &self.id_to_token[id as usize]
    }

    /// Training document frequency of an id (0 for reserved ids).
    pub fn doc_freq_of(&self, id: u32) -> u32 {
        self.doc_freq[id as usize]
    }

    /// Real tokens in id order.
    pub fn tokens(&self) -> &[String] {
        &self.id_to_token[2..]
    }

    /// SHA-256 over the serialized content (token list, frequencies, cap,
    /// provenance): equal fingerprints mean interchangeable vocabularies.
    pub fn fingerprint(&self) -> String {
        fingerprint(&VocabularyData {
            id_to_token: self.id_to_token.clone(),
            doc_freq: self.doc_freq.clone(),
            max_size: self.max_size,
            provenance: self.provenance.clone(),
        })
    }
}

/// Build a vocabulary from tokenized training documents, keeping the
/// `max_size` most frequent tokens (ties broken lexicographically).
pub fn build_vocab<D: AsRef<[String]>>(
    tokenized_docs: &[D],
    max_size: usize,
    provenance: &str,
) -> Result<Vocabulary> {
    if tokenized_docs.is_empty() {
        return Err(Error::EmptyInput("build_vocab: no documents"));
    }
    let mut term_freq: HashMap<&str, u64> = HashMap::new();
    let mut doc_freq: HashMap<&str, u32> = HashMap::new();
    let mut in_doc: Vec<&str> = Vec::new();
    for doc in tokenized_docs {
        in_doc.clear();
        for token in doc.as_ref() {
            *term_freq.entry(token.as_str()).or_default() += 1;
            in_doc.push(token.as_str());
        }
        in_doc.sort_unstable();
        in_doc.dedup();
        for token in &in_doc {
            *doc_freq.entry(token).or_default() += 1;
        }
    }
    let mut ranked: Vec<(&str, u64)> = term_freq.into_iter().collect();
    ranked.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.truncate(max_size);

    let mut id_to_token = Vec::with_capacity(ranked.len() + 2);
    id_to_token.push(PAD_TOKEN.to_string());
    id_to_token.push(UNK_TOKEN.to_string());
    let mut dfs = vec![0u32, 0u32];
    for (token, _) in &ranked {
        id_to_token.push(token.to_string());
        dfs.push(doc_freq[token]);
    }
    let token_to_id = id_to_token
        .iter()
        .enumerate()
        .map(|(i, t)| (t.clone(), i as u32))
        .collect();
    Ok(Vocabulary {
        id_to_token,
        doc_freq: dfs,
        max_size,
        provenance: provenance.to_string(),
        token_to_id,
    })
}

/// Sparse count vector for one document, sorted by column id.
/// Out-of-vocabulary tokens are counted under the unk column when
/// `count_oov` is set, otherwise dropped.
pub fn bow(tokens: &[String], vocab: &Vocabulary, count_oov: bool) -> Vec<(u32, f64)> {
    let mut counts: BTreeMap<u32, f64> = BTreeMap::new();
    for token in tokens {
        match vocab.id_of(token) {
            Some(id) => *counts.entry(id).or_default() += 1.0,
            None if count_oov => *counts.entry(UNK_ID).or_default() += 1.0,
            None => {}
        }
    }
    counts.into_iter().collect()
}

/// Count matrix over a document batch.
pub fn bow_matrix(
    tokenized_docs: &[Vec<String>],
    vocab: &Vocabulary,
    count_oov: bool,
) -> Result<FeatureMatrix> {
    let rows: Vec<Vec<(u32, f64)>> = tokenized_docs
        .iter()
        .map(|doc| bow(doc, vocab, count_oov))
        .collect();
    FeatureMatrix::from_rows(&rows, vocab.len(), WeightKind::Counts, vocab.fingerprint())
}

/// Smoothed idf weights fitted on a training count matrix:
/// idf(t) = ln((1+N)/(1+df(t))) + 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdfWeights {
    pub idf: Vec<f64>,
    pub n_train_docs: usize,
}

impl IdfWeights {
    pub fn fingerprint(&self) -> String {
        fingerprint(self)
    }
}

/// Fit idf weights from column document frequencies of a count matrix.
pub fn tfidf_fit(train_counts: &FeatureMatrix) -> Result<IdfWeights> {
    if train_counts.kind != WeightKind::Counts {
        return Err(Error::InvalidConfig(
            "tfidf_fit expects a count matrix".to_string(),
        ));
    }
    if train_counts.n_rows() == 0 {
        return Err(Error::EmptyInput("tfidf_fit: no rows"));
    }
    let n = train_counts.n_rows();
    let mut df = vec![0u32; train_counts.n_cols];
    for &c in &train_counts.indices {
        df[c as usize] += 1;
    }
    let idf = df
        .iter()
        .map(|&d| ((1.0 + n as f64) / (1.0 + d as f64)).ln() + 1.0)
        .collect();
    Ok(IdfWeights {
        idf,
        n_train_docs: n,
    })
}

/// Scale counts by idf and L2-normalize each row (rows with no entries
/// stay empty).
pub fn tfidf_transform(counts: &FeatureMatrix, idf: &IdfWeights) -> Result<FeatureMatrix> {
    if counts.kind != WeightKind::Counts {
        return Err(Error::InvalidConfig(
            "tfidf_transform expects a count matrix".to_string(),
        ));
    }
    if counts.n_cols != idf.idf.len() {
        return Err(Error::ShapeMismatch(format!(
            "matrix has {} columns, idf has {}",
            counts.n_cols,
            idf.idf.len()
        )));
    }
    let mut out = counts.clone();
    for i in 0..out.n_rows() {
        let (a, b) = (out.indptr[i], out.indptr[i + 1]);
        let mut norm_sq = 0.0;
        for k in a..b {
            let w = out.values[k] * idf.idf[out.indices[k] as usize];
            out.values[k] = w;
            norm_sq += w * w;
        }
        if norm_sq > 0.0 {
            let inv = 1.0 / norm_sq.sqrt();
            for k in a..b {
                out.values[k] *= inv;
            }
        }
    }
    out.kind = WeightKind::TfIdf;
    out.weight_fingerprint = Some(idf.fingerprint());
    Ok(out)
}

/// Map tokens to ids (unk for OOV) and pad/truncate to `max_len`.
pub fn encode_sequence(tokens: &[String], vocab: &Vocabulary, max_len: usize) -> Vec<u32> {
    let ids: Vec<u32> = tokens
        .iter()
        .map(|t| vocab.id_of(t).unwrap_or(UNK_ID))
        .collect();
    pad_truncate(&ids, max_len, PAD_ID)
}

/// Fixed-length id sequences for a document batch, stored flat.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdSequences {
    pub max_len: usize,
    /// Total id count of the source vocabulary (reserved ids included).
    pub vocab_len: usize,
    /// n_rows * max_len ids, row-major.
    pub data: Vec<u32>,
    /// Pre-padding token counts, capped at max_len.
    pub lengths: Vec<usize>,
    pub vocab_fingerprint: String,
}

impl IdSequences {
    pub fn encode(
        tokenized_docs: &[Vec<String>],
        vocab: &Vocabulary,
        max_len: usize,
    ) -> Result<IdSequences> {
        if max_len == 0 {
            return Err(Error::InvalidConfig("max_len must be >= 1".to_string()));
        }
        let mut data = Vec::with_capacity(tokenized_docs.len() * max_len);
        let mut lengths = Vec::with_capacity(tokenized_docs.len());
        for doc in tokenized_docs {
            data.extend(encode_sequence(doc, vocab, max_len));
            lengths.push(doc.len().min(max_len));
        }
        Ok(IdSequences {
            max_len,
            vocab_len: vocab.len(),
            data,
            lengths,
            vocab_fingerprint: vocab.fingerprint(),
        })
    }

    pub fn n_rows(&self) -> usize {
        self.lengths.len()
    }

    pub fn row(&self, i: usize) -> &[u32] {
        &self.data[i * self.max_len..(i + 1) * self.max_len]
    }

    pub fn select_rows(&self, keep: &[usize]) -> IdSequences {
        let mut data = Vec::with_capacity(keep.len() * self.max_len);
        let mut lengths = Vec::with_capacity(keep.len());
        for &i in keep {
            data.extend_from_slice(self.row(i));
            lengths.push(self.lengths[i]);
        }
        IdSequences {
            max_len: self.max_len,
            vocab_len: self.vocab_len,
            data,
            lengths,
            vocab_fingerprint: self.vocab_fingerprint.clone(),
        }
    }
}

/// Fraction of `other`'s real tokens that are present in `reference`.
pub fn vocab_overlap(reference: &Vocabulary, other: &Vocabulary) -> f64 {
    if other.n_tokens() == 0 {
        return 0.0;
    }
    let hits = other
        .tokens()
        .iter()
        .filter(|t| reference.id_of(t).is_some())
        .count();
    hits as f64 / other.n_tokens() as f64
}
