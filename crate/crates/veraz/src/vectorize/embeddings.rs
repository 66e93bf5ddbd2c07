//! Fixed pre-trained embedding tables loaded from GloVe-style text files.

use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::fingerprint;
use crate::vectorize::{Vocabulary, PAD_ID, UNK_ID};

/// Resolution policy for vocabulary tokens absent from the embedding
/// file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OovPolicy {
    ZeroVector,
    MeanVector,
}

/// Per-vocabulary-id dense vectors. Lookup is total: ids missing from the
/// file resolve via the OOV policy, and pad is always the zero vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingTable {
    pub dim: usize,
    /// vocab_len * dim values, row per vocabulary id.
    vectors: Vec<f64>,
    /// Which vocabulary ids were found in the file.
    present: Vec<bool>,
    /// Fraction of real vocabulary tokens found in the file.
    pub coverage: f64,
    pub oov_policy: OovPolicy,
    pub vocab_fingerprint: String,
}

impl EmbeddingTable {
    /// Builds a table from raw rows; `vectors` holds n_rows * dim values and
    /// row 0 (pad) is expected to be zero.
    #[cfg(test)]
    pub(crate) fn from_rows(dim: usize, vectors: Vec<f64>, vocab_fingerprint: String) -> EmbeddingTable {
        assert_eq!(vectors.len() % dim, 0);
        let n = vectors.len() / dim;
        let mut present = vec![true; n];
        if n > 0 {
            present[PAD_ID as usize] = false;
        }
        EmbeddingTable {
            dim,
            vectors,
            present,
            coverage: 1.0,
            oov_policy: OovPolicy::ZeroVector,
            vocab_fingerprint,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.present.len()
    }

    pub fn row(&self, id: u32) -> &[f64] {
        let i = id as usize;
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    pub fn is_present(&self, id: u32) -> bool {
        self.present[id as usize]
    }

    pub fn fingerprint(&self) -> String {
        fingerprint(self)
    }
}

/// Parse a `token v1 ... vd` text file, keeping only vocabulary tokens.
/// Every line's arity is checked against the first line's dimension;
/// malformed lines abort the load rather than being skipped.
pub fn load_embeddings(
    path: &Path,
    vocab: &Vocabulary,
    oov_policy: OovPolicy,
) -> Result<EmbeddingTable> {
    let file =
        std::fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let reader = BufReader::new(file);
    let mut dim: Option<usize> = None;
    let mut vectors: Vec<f64> = Vec::new();
    let mut present: Vec<bool> = Vec::new();
    let mut found = 0usize;
    let path_str = path.display().to_string();

    let mut pending: Vec<(u32, Vec<f64>)> = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(path_str.clone(), e))?;
        let mut fields = line.split_whitespace();
        let token = fields.next().ok_or_else(|| Error::Parse {
            path: path_str.clone(),
            message: format!("line {line_no}: empty line"),
        })?;
        let rest: Vec<&str> = fields.collect();
        if rest.is_empty() {
            return Err(Error::Parse {
                path: path_str.clone(),
                message: format!("line {line_no}: no vector components"),
            });
        }
        match dim {
            None => dim = Some(rest.len()),
            Some(d) if d != rest.len() => {
                return Err(Error::InconsistentDimension {
                    line: line_no,
                    expected: d,
                    found: rest.len(),
                });
            }
            Some(_) => {}
        }
        let Some(id) = vocab.id_of(token) else {
            continue;
        };
        if id == PAD_ID || id == UNK_ID {
            continue;
        }
        let mut vec = Vec::with_capacity(rest.len());
        for f in &rest {
            let v: f64 = f.parse().map_err(|_| Error::Parse {
                path: path_str.clone(),
                message: format!("line {line_no}: bad float '{f}'"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    path: path_str.clone(),
                    message: format!("line {line_no}: non-finite component"),
                });
            }
            vec.push(v);
        }
        pending.push((id, vec));
        found += 1;
    }
    let dim = dim.ok_or_else(|| Error::Parse {
        path: path_str.clone(),
        message: "empty embedding file".to_string(),
    })?;
    if found == 0 {
        return Err(Error::NoOverlap);
    }

    let n = vocab.len();
    vectors.resize(n * dim, 0.0);
    present.resize(n, false);
    for (id, vec) in pending {
        let i = id as usize;
        // last occurrence of a repeated token wins
        vectors[i * dim..(i + 1) * dim].copy_from_slice(&vec);
        present[i] = true;
    }

    let coverage = found as f64 / vocab.n_tokens().max(1) as f64;

    if oov_policy == OovPolicy::MeanVector {
        let mut mean = vec![0.0f64; dim];
        for (i, &p) in present.iter().enumerate() {
            if p {
                for (m, v) in mean.iter_mut().zip(&vectors[i * dim..(i + 1) * dim]) {
                    *m += v;
                }
            }
        }
        for m in &mut mean {
            *m /= found as f64;
        }
        for i in 0..n {
            if !present[i] && i != PAD_ID as usize {
                vectors[i * dim..(i + 1) * dim].copy_from_slice(&mean);
            }
        }
    }

    Ok(EmbeddingTable {
        dim,
        vectors,
        present,
        coverage,
        oov_policy,
        vocab_fingerprint: vocab.fingerprint(),
    })
}
