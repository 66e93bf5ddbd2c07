//! Sparse row-major (CSR) document-term matrices and a column-major view
//! for tree split search.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Value semantics of a feature matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightKind {
    Counts,
    TfIdf,
}

/// CSR document-term matrix. No explicit zeros are stored and column
/// indices are strictly increasing within each row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub n_cols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<u32>,
    pub values: Vec<f64>,
    pub kind: WeightKind,
    /// Fingerprint of the vocabulary the columns refer to.
    pub vocab_fingerprint: String,
    /// Fingerprint of the idf weights for tf-idf matrices.
    pub weight_fingerprint: Option<String>,
}

impl FeatureMatrix {
    /// Assemble from per-row (column, value) lists. Rows must be sorted
    /// by column with no duplicates; zero values are dropped.
    pub fn from_rows(
        rows: &[Vec<(u32, f64)>],
        n_cols: usize,
        kind: WeightKind,
        vocab_fingerprint: String,
    ) -> Result<Self> {
        let mut indptr = Vec::with_capacity(rows.len() + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for row in rows {
            let mut last: Option<u32> = None;
            for &(col, value) in row {
                if col as usize >= n_cols {
                    return Err(Error::ShapeMismatch(format!(
                        "column {col} out of range for {n_cols} columns"
                    )));
                }
                if let Some(prev) = last {
                    if col <= prev {
                        return Err(Error::ShapeMismatch(format!(
                            "row columns not strictly increasing at {col}"
                        )));
                    }
                }
                last = Some(col);
                if value != 0.0 {
                    indices.push(col);
                    values.push(value);
                }
            }
            indptr.push(indices.len());
        }
        Ok(FeatureMatrix {
            n_cols,
            indptr,
            indices,
            values,
            kind,
            vocab_fingerprint,
            weight_fingerprint: None,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.indptr.len() - 1
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    /// The (columns, values) slices of one row.
    pub fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let (a, b) = (self.indptr[i], self.indptr[i + 1]);
        (&self.indices[a..b], &self.values[a..b])
    }

    /// Keep only the rows at `keep`, in the given order.
    pub fn select_rows(&self, keep: &[usize]) -> FeatureMatrix {
        let mut indptr = Vec::with_capacity(keep.len() + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for &i in keep {
            let (cols, vals) = self.row(i);
            indices.extend_from_slice(cols);
            values.extend_from_slice(vals);
            indptr.push(indices.len());
        }
        FeatureMatrix {
            n_cols: self.n_cols,
            indptr,
            indices,
            values,
            kind: self.kind,
            vocab_fingerprint: self.vocab_fingerprint.clone(),
            weight_fingerprint: self.weight_fingerprint.clone(),
        }
    }

    /// L2 norm of each row.
    pub fn row_norms(&self) -> Vec<f64> {
        (0..self.n_rows())
            .map(|i| self.row(i).1.iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect()
    }

    /// Coordinate-list text export: one `row col value` line per stored
    /// entry, preceded by a `# rows cols nnz` header line.
    pub fn write_coo(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "# {} {} {}", self.n_rows(), self.n_cols, self.nnz())?;
        for i in 0..self.n_rows() {
            let (cols, vals) = self.row(i);
            for (c, v) in cols.iter().zip(vals) {
                writeln!(out, "{i} {c} {v}")?;
            }
        }
        Ok(())
    }

    /// Check CSR structural invariants; used by tests and debug builds.
    pub fn check_invariants(&self) -> Result<()> {
        if self.indptr.is_empty() || *self.indptr.last().unwrap() != self.indices.len() {
            return Err(Error::ShapeMismatch("indptr does not close".to_string()));
        }
        if self.indices.len() != self.values.len() {
            return Err(Error::ShapeMismatch(
                "indices/values length differ".to_string(),
            ));
        }
        for i in 0..self.n_rows() {
            let (cols, vals) = self.row(i);
            for w in cols.windows(2) {
                if w[0] >= w[1] {
                    return Err(Error::ShapeMismatch(format!(
                        "row {i} columns not strictly increasing"
                    )));
                }
            }
            if cols.iter().any(|&c| c as usize >= self.n_cols) {
                return Err(Error::ShapeMismatch(format!("row {i} column out of range")));
            }
            if vals.contains(&0.0) {
                return Err(Error::ShapeMismatch(format!("row {i} stores explicit zero")));
            }
        }
        Ok(())
    }
}

/// Column-major (CSC) view of a feature matrix, for per-feature scans.
#[derive(Debug, Clone)]
pub struct CscView {
    pub n_rows: usize,
    pub n_cols: usize,
    pub col_ptr: Vec<usize>,
    pub row_idx: Vec<u32>,
    pub values: Vec<f64>,
}

impl CscView {
    pub fn from_csr(m: &FeatureMatrix) -> CscView {
        let n_rows = m.n_rows();
        let n_cols = m.n_cols;
        let mut counts = vec![0usize; n_cols];
        for &c in &m.indices {
            counts[c as usize] += 1;
        }
        let mut col_ptr = Vec::with_capacity(n_cols + 1);
        col_ptr.push(0usize);
        for c in 0..n_cols {
            col_ptr.push(col_ptr[c] + counts[c]);
        }
        let mut cursor = col_ptr.clone();
        let mut row_idx = vec![0u32; m.nnz()];
        let mut values = vec![0f64; m.nnz()];
        for r in 0..n_rows {
            let (cols, vals) = m.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                let dst = cursor[c as usize];
                row_idx[dst] = r as u32;
                values[dst] = v;
                cursor[c as usize] += 1;
            }
        }
        CscView {
            n_rows,
            n_cols,
            col_ptr,
            row_idx,
            values,
        }
    }

    /// The (rows, values) slices of one column; rows ascend.
    pub fn col(&self, c: usize) -> (&[u32], &[f64]) {
        let (a, b) = (self.col_ptr[c], self.col_ptr[c + 1]);
        (&self.row_idx[a..b], &self.values[a..b])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> FeatureMatrix {
        FeatureMatrix::from_rows(
            &[
                vec![(0, 1.0), (2, 2.0)],
                vec![],
                vec![(1, 3.0), (2, 4.0), (3, 5.0)],
            ],
            4,
            WeightKind::Counts,
            "fp".to_string(),
        )
        .unwrap()
    }

    #[test]
    fn csr_layout_and_rows() {
        let m = sample();
        assert_eq!(m.n_rows(), 3);
        assert_eq!(m.nnz(), 5);
        assert_eq!(m.row(0), (&[0u32, 2][..], &[1.0, 2.0][..]));
        assert_eq!(m.row(1), (&[][..], &[][..]));
        m.check_invariants().unwrap();
    }

    #[test]
    fn zero_values_are_dropped() {
        let m = FeatureMatrix::from_rows(
            &[vec![(0, 0.0), (1, 2.0)]],
            2,
            WeightKind::Counts,
            "fp".to_string(),
        )
        .unwrap();
        assert_eq!(m.nnz(), 1);
        m.check_invariants().unwrap();
    }

    #[test]
    fn unsorted_rows_are_rejected() {
        let r = FeatureMatrix::from_rows(
            &[vec![(2, 1.0), (1, 1.0)]],
            4,
            WeightKind::Counts,
            "fp".to_string(),
        );
        assert!(r.is_err());
    }

    #[test]
    fn select_rows_keeps_order() {
        let m = sample();
        let s = m.select_rows(&[2, 0]);
        assert_eq!(s.n_rows(), 2);
        assert_eq!(s.row(0), m.row(2));
        assert_eq!(s.row(1), m.row(0));
        s.check_invariants().unwrap();
    }

    #[test]
    fn csc_round_trip() {
        let m = sample();
        let c = CscView::from_csr(&m);
        assert_eq!(c.col(2), (&[0u32, 2][..], &[2.0, 4.0][..]));
        assert_eq!(c.col(0), (&[0u32][..], &[1.0][..]));
        assert_eq!(c.col(1), (&[2u32][..], &[3.0][..]));
        let empty: (&[u32], &[f64]) = (&[], &[]);
        assert_eq!(
            CscView::from_csr(&FeatureMatrix::from_rows(&[], 1, WeightKind::Counts, String::new()).unwrap())
                .col(0),
            empty
        );
    }

    #[test]
    fn coo_export() {
        let m = sample();
        let mut buf = Vec::new();
        m.write_coo(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("# 3 4 5"));
        assert_eq!(lines.next(), Some("0 0 1"));
        assert_eq!(lines.next(), Some("0 2 2"));
        assert_eq!(text.lines().count(), 6);
    }
}
