#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use weakrank::{Corpus, InvertedIndex, Query, RawRecord, Tokenizer};

/// Random corpus over the words `w0 .. w{vocab-1}`.
pub fn random_corpus(
    seed: u64,
    docs: usize,
    vocab: usize,
    min_len: usize,
    max_len: usize,
) -> (Corpus, InvertedIndex) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let records: Vec<RawRecord> = (0..docs)
        .map(|i| {
            let len = rng.gen_range(min_len..=max_len);
            let words: Vec<String> = (0..len)
                .map(|_| format!("w{}", rng.gen_range(0..vocab)))
                .collect();
            RawRecord::new(format!("doc{i:04}"), words.join(" "))
        })
        .collect();
    let corpus = Corpus::build(records, Tokenizer::new()).unwrap();
    let index = InvertedIndex::build(&corpus).unwrap();
    (corpus, index)
}

pub fn random_queries(corpus: &Corpus, seed: u64, n: usize, vocab: usize) -> Vec<Query> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let len = rng.gen_range(1..=4);
            let words: Vec<String> = (0..len)
                .map(|_| format!("w{}", rng.gen_range(0..vocab)))
                .collect();
            corpus.query(&RawRecord::new(format!("q{i}"), words.join(" ")))
        })
        .collect()
}

/// BM25 written directly from the formula over raw token lists, sharing no
/// code with the index.
pub mod bm25_oracle {
    use std::collections::HashMap;

    pub struct Collection {
        pub docs: Vec<Vec<String>>,
    }

    impl Collection {
        pub fn score(&self, query: &[String], doc: usize, k1: f64, b: f64, k3: f64) -> f64 {
            let n = self.docs.len() as f64;
            let avg = self.docs.iter().map(|d| d.len() as f64).sum::<f64>() / n;
            let mut qtf: HashMap<&str, f64> = HashMap::new();
            for t in query {
                *qtf.entry(t.as_str()).or_default() += 1.0;
            }
            let d = &self.docs[doc];
            let dl = d.len() as f64;
            let mut total = 0.0;
            let mut terms: Vec<(&&str, &f64)> = qtf.iter().collect();
            terms.sort_by(|a, b| a.0.cmp(b.0));
            for (t, &q) in terms {
                let tf = d.iter().filter(|w| w.as_str() == *t).count() as f64;
                if tf == 0.0 {
                    continue;
                }
                let df = self
                    .docs
                    .iter()
                    .filter(|doc| doc.iter().any(|w| w.as_str() == *t))
                    .count() as f64;
                let idf = ((n - df + 0.5) / (df + 0.5) + 1.0).ln();
                let tf_part = tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * dl / avg));
                let q_part = (k3 + 1.0) * q / (k3 + q);
                total += idf * tf_part * q_part;
            }
            total
        }
    }
}

pub mod gradcheck;
pub mod oracles;
