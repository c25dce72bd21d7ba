use std::collections::{BTreeMap, HashMap};

use super::{tokenize, EmbeddingError, EmbeddingSource, EmbeddingTable, EmbeddingVector};
use crate::corpus::RequirementSet;

/// Fitted TFIDF vocabulary.
///
/// `idf(t) = ln((1 + N) / (1 + df(t))) + 1`, so every weight is at least 1.
/// Columns follow lexicographic term order.
#[derive(Debug, Clone, PartialEq)]
pub struct TfidfModel {
    terms: Vec<String>,
    vocabulary: HashMap<String, usize>,
    idf: Vec<f64>,
    n_docs: usize,
}

impl TfidfModel {
    pub fn fit<'a, I>(docs: I) -> Result<Self, EmbeddingError>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut df: BTreeMap<String, usize> = BTreeMap::new();
        let mut n_docs = 0;
        for doc in docs {
            n_docs += 1;
            let mut seen: Vec<String> = tokenize(doc).into_iter().map(|t| t.surface).collect();
            seen.sort_unstable();
            seen.dedup();
            for term in seen {
                *df.entry(term).or_insert(0) += 1;
            }
        }
        if df.is_empty() {
            return Err(EmbeddingError::EmptyCorpus);
        }
        let n = n_docs as f64;
        let mut terms = Vec::with_capacity(df.len());
        let mut idf = Vec::with_capacity(df.len());
        for (term, count) in df {
            idf.push(((1.0 + n) / (1.0 + count as f64)).ln() + 1.0);
            terms.push(term);
        }
        let vocabulary = terms.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Ok(TfidfModel { terms, vocabulary, idf, n_docs })
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn dim(&self) -> usize {
        self.terms.len()
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn column(&self, term: &str) -> Option<usize> {
        self.vocabulary.get(term).copied()
    }

    pub fn idf(&self, term: &str) -> Option<f64> {
        self.column(term).map(|c| self.idf[c])
    }

    /// Raw counts times idf, L2-normalized. Out-of-vocabulary tokens are
    /// ignored; a text with no known tokens is an error.
    pub fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbeddingError> {
        let mut values = vec![0.0; self.terms.len()];
        for tok in tokenize(text) {
            if let Some(c) = self.column(&tok.surface) {
                values[c] += self.idf[c];
            }
        }
        EmbeddingVector::new(values)?.normalized().ok_or_else(|| EmbeddingError::ZeroVector(text.to_string()))
    }
}

pub fn fit_tfidf(corpus: &RequirementSet) -> Result<TfidfModel, EmbeddingError> {
    TfidfModel::fit(corpus.iter().map(|r| r.text.as_str()))
}

pub fn embed_tfidf(model: &TfidfModel, text: &str) -> Result<EmbeddingVector, EmbeddingError> {
    model.embed(text)
}

/// Embeds every requirement of `set`, in set order.
pub fn embed_table_tfidf(model: &TfidfModel, set: &RequirementSet) -> Result<EmbeddingTable, EmbeddingError> {
    let rows = set
        .iter()
        .map(|r| match model.embed(&r.text) {
            Ok(v) => Ok((r.id.clone(), v)),
            Err(EmbeddingError::ZeroVector(_)) => Err(EmbeddingError::ZeroRow(r.id.clone())),
            Err(e) => Err(e),
        })
        .collect::<Result<Vec<_>, _>>()?;
    EmbeddingTable::new(EmbeddingSource::Tfidf, rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three_docs() -> TfidfModel {
        TfidfModel::fit(["uav shall charge", "uav shall fly", "system shall log data"]).unwrap()
    }

    #[test]
    fn idf_matches_hand_computation() {
        let m = three_docs();
        assert_eq!(m.n_docs(), 3);
        // df(uav) = 2: ln(4/3) + 1
        assert!((m.idf("uav").unwrap() - ((4.0f64 / 3.0).ln() + 1.0)).abs() < 1e-12);
        assert!((m.idf("uav").unwrap() - 1.2877).abs() < 1e-4);
        assert_eq!(m.idf("shall").unwrap(), 1.0);
        // df = 1: ln(4/2) + 1
        assert!((m.idf("log").unwrap() - (2.0f64.ln() + 1.0)).abs() < 1e-12);
        assert!(m.idf("kilometers").is_none());
    }

    #[test]
    fn vocabulary_is_lexicographic_and_dense() {
        let m = three_docs();
        assert_eq!(m.terms(), ["charge", "data", "fly", "log", "shall", "system", "uav"]);
        for (i, t) in m.terms().iter().enumerate() {
            assert_eq!(m.column(t), Some(i));
        }
    }

    #[test]
    fn single_document_idf_is_one() {
        let m = TfidfModel::fit(["alpha beta beta"]).unwrap();
        assert_eq!(m.idf("alpha"), Some(1.0));
        assert_eq!(m.idf("beta"), Some(1.0));
    }

    #[test]
    fn repeated_single_term_is_one_hot() {
        let m = three_docs();
        let v = m.embed("uav uav").unwrap();
        let c = m.column("uav").unwrap();
        for (i, x) in v.values().iter().enumerate() {
            assert_eq!(*x, if i == c { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn out_of_vocabulary_text_is_an_error() {
        assert!(matches!(three_docs().embed("kilometers miles"), Err(EmbeddingError::ZeroVector(_))));
    }

    #[test]
    fn all_empty_corpus_is_an_error() {
        assert!(matches!(TfidfModel::fit(["", " . "]), Err(EmbeddingError::EmptyCorpus)));
    }

    #[test]
    fn embedded_vectors_are_unit_norm() {
        let m = three_docs();
        for text in ["uav shall charge", "system log data data data", "fly"] {
            assert!((m.embed(text).unwrap().norm() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn order_insensitive_fit() {
        let a = TfidfModel::fit(["b c", "a b", "c d e"]).unwrap();
        let b = TfidfModel::fit(["c d e", "b c", "a b"]).unwrap();
        assert_eq!(a, b);
    }
}
