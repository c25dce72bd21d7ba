//! Cosine similarity and the pairwise requirement matrix.

use std::collections::HashMap;

use thiserror::Error;

use crate::embedding::{EmbeddingTable, EmbeddingVector};

#[derive(Debug, Error, PartialEq)]
pub enum SimilarityError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("cosine is undefined for a zero vector")]
    ZeroVector,
    #[error("zero vector for requirement `{0}`")]
    ZeroRow(String),
    #[error("unknown requirement id `{0}`")]
    UnknownId(String),
    #[error("embedding table is empty")]
    Empty,
    #[error("query needs at least two requirements")]
    TooFew,
    #[error("m_count must be at least 1")]
    ZeroCount,
}

/// Values this close to +/-1 are snapped to it, so identical vectors always
/// compare as exactly 1.
const SNAP: f64 = 1e-12;

fn finish(raw: f64) -> f64 {
    let c = raw.clamp(-1.0, 1.0);
    if c > 1.0 - SNAP {
        1.0
    } else if c < -1.0 + SNAP {
        -1.0
    } else {
        c
    }
}

/// `dot(u, v) / (|u| |v|)`, clamped to `[-1, 1]`.
pub fn cosine(u: &EmbeddingVector, v: &EmbeddingVector) -> Result<f64, SimilarityError> {
    cosine_slices(u.values(), v.values())
}

fn cosine_slices(u: &[f64], v: &[f64]) -> Result<f64, SimilarityError> {
    if u.len() != v.len() {
        return Err(SimilarityError::DimensionMismatch(u.len(), v.len()));
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Err(SimilarityError::ZeroVector);
    }
    Ok(finish(dot / (nu * nv)))
}

/// Symmetric matrix of pairwise cosine similarities, rows in id order.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    ids: Vec<String>,
    index: HashMap<String, usize>,
    values: Vec<f64>,
}

impl SimilarityMatrix {
    /// Builds a matrix from explicit values (row-major, `n * n`).
    pub fn from_values(ids: Vec<String>, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), ids.len() * ids.len(), "matrix must be square");
        let index = ids.iter().enumerate().map(|(i, id)| (id.clone(), i)).collect();
        SimilarityMatrix { ids, index, values }
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn index_of(&self, id: &str) -> Result<usize, SimilarityError> {
        self.index.get(id).copied().ok_or_else(|| SimilarityError::UnknownId(id.to_string()))
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.ids.len() + j]
    }

    pub fn get(&self, a: &str, b: &str) -> Result<f64, SimilarityError> {
        Ok(self.at(self.index_of(a)?, self.index_of(b)?))
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.ids.len();
        &self.values[i * n..(i + 1) * n]
    }

    /// Most similar other row among `candidates`, ties to the lower index.
    pub fn best_among<I>(&self, i: usize, candidates: I) -> Option<(usize, f64)>
    where
        I: IntoIterator<Item = usize>,
    {
        let row = self.row(i);
        let mut best: Option<(usize, f64)> = None;
        for j in candidates {
            if j == i {
                continue;
            }
            match best {
                Some((bj, bv)) if row[j] < bv || (row[j] == bv && j > bj) => {}
                _ => best = Some((j, row[j])),
            }
        }
        best
    }

    /// CSV dump: header of ids, then one row per id with 6 decimals.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("id");
        for id in &self.ids {
            out.push(',');
            out.push_str(id);
        }
        out.push('\n');
        for (i, id) in self.ids.iter().enumerate() {
            out.push_str(id);
            for v in self.row(i) {
                out.push_str(&format!(",{v:.6}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Cosine of every pair of rows in `table`.
pub fn pairwise_matrix(table: &EmbeddingTable) -> Result<SimilarityMatrix, SimilarityError> {
    if table.is_empty() {
        return Err(SimilarityError::Empty);
    }
    let ids: Vec<String> = table.ids().map(String::from).collect();
    let rows: Vec<&EmbeddingVector> = table.iter().map(|(_, v)| v).collect();
    let norms: Vec<f64> = rows.iter().map(|v| v.norm()).collect();
    if let Some(i) = norms.iter().position(|&n| n == 0.0) {
        return Err(SimilarityError::ZeroRow(ids[i].clone()));
    }
    let n = ids.len();
    let mut values = vec![0.0; n * n];
    for i in 0..n {
        values[i * n + i] = 1.0;
        for j in (i + 1)..n {
            let dot: f64 = rows[i].values().iter().zip(rows[j].values()).map(|(a, b)| a * b).sum();
            let c = finish(dot / (norms[i] * norms[j]));
            values[i * n + j] = c;
            values[j * n + i] = c;
        }
    }
    Ok(SimilarityMatrix::from_values(ids, values))
}

/// The most similar other requirement and its similarity. Ties go to the
/// requirement that comes first in id order.
pub fn max_similarity(m: &SimilarityMatrix, id: &str) -> Result<(String, f64), SimilarityError> {
    let i = m.index_of(id)?;
    if m.len() < 2 {
        return Err(SimilarityError::TooFew);
    }
    let (j, v) = m.best_among(i, 0..m.len()).expect("at least one other row");
    Ok((m.ids[j].clone(), v))
}

/// The `m_count` most similar other requirements, most similar first, ties
/// in id order.
pub fn top_m(m: &SimilarityMatrix, id: &str, m_count: usize) -> Result<Vec<String>, SimilarityError> {
    if m_count == 0 {
        return Err(SimilarityError::ZeroCount);
    }
    let i = m.index_of(id)?;
    Ok(top_m_indices(m, i, m_count).into_iter().map(|j| m.ids[j].clone()).collect())
}

pub(crate) fn top_m_indices(m: &SimilarityMatrix, i: usize, m_count: usize) -> Vec<usize> {
    let row = m.row(i);
    let mut others: Vec<usize> = (0..m.len()).filter(|&j| j != i).collect();
    others.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
    others.truncate(m_count);
    others
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::EmbeddingSource;

    fn v(xs: &[f64]) -> EmbeddingVector {
        EmbeddingVector::new(xs.to_vec()).unwrap()
    }

    fn matrix(ids: &[&str], rows: &[&[f64]]) -> SimilarityMatrix {
        let values = rows.iter().flat_map(|r| r.iter().copied()).collect();
        SimilarityMatrix::from_values(ids.iter().map(|s| s.to_string()).collect(), values)
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine(&v(&[3.0, 4.0]), &v(&[3.0, 4.0])).unwrap(), 1.0);
        assert_eq!(cosine(&v(&[1.0, 0.0]), &v(&[0.0, 1.0])).unwrap(), 0.0);
        let c = cosine(&v(&[1.0, 2.0, 2.0]), &v(&[2.0, 1.0, 2.0])).unwrap();
        assert!((c - 8.0 / 9.0).abs() < 1e-12);
        assert_eq!(cosine(&v(&[1.0, 0.0]), &v(&[-2.0, 0.0])).unwrap(), -1.0);
    }

    #[test]
    fn cosine_errors() {
        assert_eq!(cosine(&v(&[1.0]), &v(&[1.0, 2.0])), Err(SimilarityError::DimensionMismatch(1, 2)));
        assert_eq!(cosine(&v(&[0.0, 0.0]), &v(&[1.0, 2.0])), Err(SimilarityError::ZeroVector));
    }

    #[test]
    fn single_requirement_matrix() {
        let t = EmbeddingTable::new(EmbeddingSource::Tfidf, vec![("1".into(), v(&[0.6, 0.8]))]).unwrap();
        let m = pairwise_matrix(&t).unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!(m.at(0, 0), 1.0);
        assert_eq!(max_similarity(&m, "1"), Err(SimilarityError::TooFew));
    }

    #[test]
    fn max_similarity_unique_and_tie() {
        let m = matrix(&["a", "b", "c"], &[&[1.0, 0.5, 0.2], &[0.5, 1.0, 0.5], &[0.2, 0.5, 1.0]]);
        assert_eq!(max_similarity(&m, "a").unwrap(), ("b".to_string(), 0.5));
        // row b ties between a and c; a comes first
        assert_eq!(max_similarity(&m, "b").unwrap(), ("a".to_string(), 0.5));
        assert!(matches!(max_similarity(&m, "zz"), Err(SimilarityError::UnknownId(_))));
    }

    #[test]
    fn two_requirements_always_pick_the_other() {
        let m = matrix(&["x", "y"], &[&[1.0, -0.3], &[-0.3, 1.0]]);
        assert_eq!(max_similarity(&m, "x").unwrap().0, "y");
        assert_eq!(max_similarity(&m, "y").unwrap().0, "x");
    }

    #[test]
    fn top_m_ordering() {
        let m = matrix(
            &["a", "b", "c", "d"],
            &[&[1.0, 0.1, 0.9, 0.9], &[0.1, 1.0, 0.2, 0.3], &[0.9, 0.2, 1.0, 0.4], &[0.9, 0.3, 0.4, 1.0]],
        );
        assert_eq!(top_m(&m, "a", 1).unwrap(), ["c"]);
        assert_eq!(top_m(&m, "a", 10).unwrap(), ["c", "d", "b"]);
        assert_eq!(top_m(&m, "a", 0), Err(SimilarityError::ZeroCount));
        assert_eq!(top_m(&m, "a", 1).unwrap()[0], max_similarity(&m, "a").unwrap().0);
    }

    #[test]
    fn csv_dump_format() {
        let m = matrix(&["1", "2"], &[&[1.0, 0.25], &[0.25, 1.0]]);
        assert_eq!(m.to_csv(), "id,1,2\n1,1.000000,0.250000\n2,0.250000,1.000000\n");
    }
}
