//! Exact k-nearest-neighbour retrieval over encoder embeddings.

mod format;

pub use format::{load_index, save_index, DDIX_MAGIC};

use std::collections::BTreeSet;

use crate::cae::{Embedding, Model};
use crate::error::{Error, Result};
use crate::volio::Volume;

#[derive(Debug, Clone, PartialEq)]
pub struct IndexEntry {
    pub case_id: String,
    pub label: usize,
    pub embedding: Embedding,
}

/// Immutable collection of labelled embeddings with unique case ids.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingIndex {
    dim: usize,
    entries: Vec<IndexEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hit {
    pub case_id: String,
    pub label: usize,
    pub distance: f64,
}

impl EmbeddingIndex {
    pub fn new(dim: usize, entries: Vec<IndexEntry>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for e in &entries {
            if e.embedding.len() != dim {
                return Err(Error::Shape(format!(
                    "{}: embedding length {} in a {dim}-dim index",
                    e.case_id,
                    e.embedding.len()
                )));
            }
            if !seen.insert(e.case_id.as_str()) {
                return Err(Error::Eval(format!("duplicate case id {}", e.case_id)));
            }
        }
        Ok(EmbeddingIndex { dim, entries })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    /// Closest `min(k, len)` entries by Euclidean distance, ties by case id.
    pub fn query(&self, z: &Embedding, k: usize) -> Result<Vec<Hit>> {
        if k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if z.len() != self.dim {
            return Err(Error::Shape(format!("query length {} for a {}-dim index", z.len(), self.dim)));
        }
        if z.0.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite query embedding".into()));
        }
        let mut scored: Vec<(f64, &IndexEntry)> =
            self.entries.iter().map(|e| (e.embedding.sq_dist(z), e)).collect();
        scored.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.case_id.cmp(&b.1.case_id)));
        Ok(scored
            .into_iter()
            .take(k)
            .map(|(d, e)| Hit { case_id: e.case_id.clone(), label: e.label, distance: d.sqrt() })
            .collect())
    }
}

/// Encodes each `(case_id, label, volume)`; volumes must already be
/// preprocessed the same way as the training data.
pub fn build_index(cases: &[(String, usize, Volume)], model: &Model) -> Result<EmbeddingIndex> {
    let entries = cases
        .iter()
        .map(|(id, label, v)| {
            Ok(IndexEntry { case_id: id.clone(), label: *label, embedding: model.encode(v)? })
        })
        .collect::<Result<Vec<_>>>()?;
    EmbeddingIndex::new(model.embedding_dim(), entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_index(n: usize, dim: usize, seed: u64) -> EmbeddingIndex {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let entries = (0..n)
            .map(|i| IndexEntry {
                case_id: format!("case{i:03}"),
                label: i % 5,
                embedding: Embedding((0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect()),
            })
            .collect();
        EmbeddingIndex::new(dim, entries).unwrap()
    }

    #[test]
    fn self_query_and_large_k() {
        let idx = random_index(30, 4, 1);
        for e in idx.entries() {
            let hits = idx.query(&e.embedding, 100).unwrap();
            assert_eq!(hits.len(), 30);
            assert_eq!(hits[0].case_id, e.case_id);
            assert_eq!(hits[0].distance, 0.0);
            assert!(hits.windows(2).all(|w| w[0].distance <= w[1].distance));
        }
    }

    #[test]
    fn ties_break_by_case_id() {
        let e = |id: &str, x: f64| IndexEntry { case_id: id.into(), label: 0, embedding: Embedding(vec![x]) };
        let idx = EmbeddingIndex::new(1, vec![e("c", 1.0), e("a", -1.0), e("b", 1.0)]).unwrap();
        let ids: Vec<String> = idx.query(&Embedding(vec![0.0]), 3).unwrap().into_iter().map(|h| h.case_id).collect();
        assert_eq!(ids, ["a", "b", "c"]);
    }

    #[test]
    fn errors() {
        let idx = random_index(3, 2, 2);
        assert!(idx.query(&Embedding(vec![0.0, 0.0]), 0).is_err());
        assert!(idx.query(&Embedding(vec![0.0]), 1).is_err());
        let dup = vec![idx.entries()[0].clone(), idx.entries()[0].clone()];
        assert!(EmbeddingIndex::new(2, dup).is_err());
        assert!(EmbeddingIndex::new(3, idx.entries().to_vec()).is_err());
    }

    #[test]
    fn empty_index() {
        let idx = EmbeddingIndex::new(8, vec![]).unwrap();
        assert!(idx.query(&Embedding(vec![0.0; 8]), 5).unwrap().is_empty());
    }
}
