//! Document and query ingestion.
//!
//! Text is lowercased and split on every non-alphanumeric character. There is
//! no stemming or stopword removal unless a [`Tokenizer`] is configured for
//! it. The vocabulary is built from the corpus alone: query terms the corpus
//! never uses map to [`OOV`] and every representation skips them.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::index::InvertedIndex;

pub type TermId = u32;

/// Reserved id for query terms missing from the corpus vocabulary.
pub const OOV: TermId = TermId::MAX;

/// Substrings that mark a navigational query in a query log.
pub const URL_MARKERS: [&str; 6] = ["http", "www.", ".com", ".net", ".org", ".edu"];

/// Minimum BM25 hit count for a training query.
pub const DEFAULT_MIN_HITS: usize = 10;

/// Lowercase and split on anything that is not alphanumeric.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|s| !s.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Tokenizer with optional stopword removal and plural stripping.
#[derive(Debug, Clone, Default)]
pub struct Tokenizer {
    stopwords: HashSet<String>,
    stem: bool,
}

impl Tokenizer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_stopwords<I, S>(mut self, words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        self.stopwords = words
            .into_iter()
            .flat_map(|w| tokenize(w.as_ref()))
            .collect();
        self
    }

    /// Enable the S-stemmer (plural stripping only).
    pub fn with_stemming(mut self, on: bool) -> Self {
        self.stem = on;
        self
    }

    pub fn tokens(&self, text: &str) -> Vec<String> {
        tokenize(text)
            .into_iter()
            .filter(|t| !self.stopwords.contains(t))
            .map(|t| if self.stem { s_stem(&t) } else { t })
            .collect()
    }
}

/// Harman's S-stemmer.
fn s_stem(word: &str) -> String {
    let n = word.len();
    if n > 3 && word.ends_with("ies") && !word.ends_with("eies") && !word.ends_with("aies") {
        return format!("{}y", &word[..n - 3]);
    }
    if n > 2
        && word.ends_with("es")
        && !word.ends_with("aes")
        && !word.ends_with("ees")
        && !word.ends_with("oes")
    {
        return word[..n - 1].to_string();
    }
    if n > 1 && word.ends_with('s') && !word.ends_with("us") && !word.ends_with("ss") {
        return word[..n - 1].to_string();
    }
    word.to_string()
}

/// Read a stopword file: one term per line, blank lines and `#` comments ignored.
pub fn read_stopwords(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect())
}

/// An `id<TAB>text` record, as found in corpus and query files.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawRecord {
    pub id: String,
    pub text: String,
}

impl RawRecord {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
        }
    }
}

/// Parse an `id<TAB>text` file. Lines starting with `#` are comments.
pub fn read_tsv_records(path: &Path) -> Result<Vec<RawRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (id, body) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(path, i + 1, "expected `id<TAB>text`"))?;
        if id.is_empty() {
            return Err(Error::parse(path, i + 1, "empty id"));
        }
        out.push(RawRecord::new(id, body));
    }
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Vocabulary {
    terms: Vec<String>,
    ids: HashMap<String, TermId>,
    collection_tf: Vec<u64>,
    df: Vec<u32>,
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn id_of(&self, term: &str) -> Option<TermId> {
        self.ids.get(term).copied()
    }

    /// Like [`Vocabulary::id_of`] but maps unknown terms to [`OOV`].
    pub fn lookup(&self, term: &str) -> TermId {
        self.id_of(term).unwrap_or(OOV)
    }

    pub fn term_of(&self, id: TermId) -> Option<&str> {
        self.terms.get(id as usize).map(String::as_str)
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn collection_tf(&self, id: TermId) -> u64 {
        self.collection_tf.get(id as usize).copied().unwrap_or(0)
    }

    pub fn df(&self, id: TermId) -> u32 {
        self.df.get(id as usize).copied().unwrap_or(0)
    }

    fn intern(&mut self, term: &str) -> TermId {
        if let Some(&id) = self.ids.get(term) {
            return id;
        }
        let id = self.terms.len() as TermId;
        self.terms.push(term.to_string());
        self.ids.insert(term.to_string(), id);
        self.collection_tf.push(0);
        self.df.push(0);
        id
    }

    /// Rebuild from stored parts (used when loading an index file).
    pub(crate) fn from_parts(
        terms: Vec<String>,
        collection_tf: Vec<u64>,
        df: Vec<u32>,
    ) -> Result<Self> {
        if terms.len() != collection_tf.len() || terms.len() != df.len() {
            return Err(Error::Format("vocabulary section lengths disagree".into()));
        }
        let mut ids = HashMap::with_capacity(terms.len());
        for (i, t) in terms.iter().enumerate() {
            if ids.insert(t.clone(), i as TermId).is_some() {
                return Err(Error::Format(format!("duplicate vocabulary term `{t}`")));
            }
        }
        Ok(Self {
            terms,
            ids,
            collection_tf,
            df,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub doc_id: String,
    pub tokens: Vec<TermId>,
}

impl Document {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Query {
    pub query_id: String,
    /// May contain [`OOV`].
    pub tokens: Vec<TermId>,
}

impl Query {
    /// In-vocabulary tokens, in query order.
    pub fn known_tokens(&self) -> impl Iterator<Item = TermId> + '_ {
        self.tokens.iter().copied().filter(|&t| t != OOV)
    }

    pub fn has_known_terms(&self) -> bool {
        self.known_tokens().next().is_some()
    }
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub documents: Vec<Document>,
    pub vocab: Vocabulary,
    pub tokenizer: Tokenizer,
}

impl Corpus {
    pub fn build<I>(records: I, tokenizer: Tokenizer) -> Result<Self>
    where
        I: IntoIterator<Item = RawRecord>,
    {
        let mut vocab = Vocabulary::default();
        let mut documents = Vec::new();
        let mut seen = HashSet::new();
        for rec in records {
            if !seen.insert(rec.id.clone()) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate doc id `{}`",
                    rec.id
                )));
            }
            let tokens: Vec<TermId> = tokenizer
                .tokens(&rec.text)
                .iter()
                .map(|t| vocab.intern(t))
                .collect();
            let mut distinct = tokens.clone();
            distinct.sort_unstable();
            distinct.dedup();
            for &t in &tokens {
                vocab.collection_tf[t as usize] += 1;
            }
            for &t in &distinct {
                vocab.df[t as usize] += 1;
            }
            documents.push(Document {
                doc_id: rec.id,
                tokens,
            });
        }
        if documents.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        Ok(Self {
            documents,
            vocab,
            tokenizer,
        })
    }

    pub fn load(path: &Path, tokenizer: Tokenizer) -> Result<Self> {
        Self::build(read_tsv_records(path)?, tokenizer)
    }

    pub fn query(&self, record: &RawRecord) -> Query {
        make_query(&self.vocab, &self.tokenizer, record)
    }
}

pub fn make_query(vocab: &Vocabulary, tokenizer: &Tokenizer, record: &RawRecord) -> Query {
    Query {
        query_id: record.id.clone(),
        tokens: tokenizer
            .tokens(&record.text)
            .iter()
            .map(|t| vocab.lookup(t))
            .collect(),
    }
}

/// Strip non-alphanumerics, lowercase and collapse whitespace.
pub fn normalize_query_text(text: &str) -> String {
    tokenize(text).join(" ")
}

fn is_navigational(text: &str) -> bool {
    let lower = text.to_lowercase();
    URL_MARKERS.iter().any(|m| lower.contains(m))
}

/// Apply the query-log filter: drop navigational queries, strip
/// non-alphanumerics, deduplicate, drop queries with fewer than `min_hits`
/// matching documents, and drop anything in the evaluation set.
///
/// Kept queries carry their normalized text, so running the filter on its
/// own output is a no-op.
pub fn filter_training_queries(
    raw: &[RawRecord],
    index: &InvertedIndex,
    tokenizer: &Tokenizer,
    min_hits: usize,
    evaluation: &[RawRecord],
) -> Vec<(RawRecord, Query)> {
    let held_out: HashSet<String> = evaluation
        .iter()
        .map(|r| normalize_query_text(&r.text))
        .collect();
    let mut seen = HashSet::new();
    let mut kept = Vec::new();
    for rec in raw {
        if is_navigational(&rec.text) {
            continue;
        }
        let norm = normalize_query_text(&rec.text);
        if norm.is_empty() || held_out.contains(&norm) || !seen.insert(norm.clone()) {
            continue;
        }
        let cleaned = RawRecord::new(rec.id.clone(), norm);
        let query = make_query(index.vocab(), tokenizer, &cleaned);
        if !query.has_known_terms() || index.hit_count(&query) < min_hits {
            continue;
        }
        kept.push((cleaned, query));
    }
    kept
}

/// Seeded random split into (train, validation); each side keeps input order.
pub fn split_train_validation<T: Clone>(
    items: &[T],
    fraction: f64,
    seed: u64,
) -> Result<(Vec<T>, Vec<T>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "split fraction {fraction} not in (0, 1)"
        )));
    }
    if items.len() < 2 {
        return Err(Error::InvalidArgument(
            "need at least two queries to split".into(),
        ));
    }
    let n = items.len();
    let n_train = ((fraction * n as f64).round() as usize).clamp(1, n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut in_train = vec![false; n];
    for &i in &order[..n_train] {
        in_train[i] = true;
    }
    let (mut train, mut val) = (Vec::with_capacity(n_train), Vec::with_capacity(n - n_train));
    for (item, keep) in items.iter().zip(in_train) {
        if keep {
            train.push(item.clone());
        } else {
            val.push(item.clone());
        }
    }
    Ok((train, val))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::index::InvertedIndex;
    use proptest::prelude::*;

    #[test]
    fn tokenize_examples() {
        assert_eq!(tokenize("Neural Ranking!"), vec!["neural", "ranking"]);
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("BM25-model"), vec!["bm25", "model"]);
    }

    #[test]
    fn stopwords_and_stemming() {
        let tok = Tokenizer::new()
            .with_stopwords(["the", "of"])
            .with_stemming(true);
        assert_eq!(
            tok.tokens("The ranking of queries"),
            vec!["ranking", "query"]
        );
        assert_eq!(s_stem("glass"), "glass");
        assert_eq!(s_stem("models"), "model");
        assert_eq!(s_stem("boxes"), "boxe");
    }

    proptest! {
        #[test]
        fn tokenize_idempotent(s in "\\PC{0,40}") {
            let once = tokenize(&s);
            prop_assert_eq!(tokenize(&once.join(" ")), once);
        }
    }

    fn corpus() -> Corpus {
        let docs = (0..12).map(|i| {
            let text = if i < 11 {
                format!("cheap flights to city{i}")
            } else {
                "rare words only".to_string()
            };
            RawRecord::new(format!("d{i:02}"), text)
        });
        Corpus::build(docs, Tokenizer::new()).unwrap()
    }

    #[test]
    fn vocabulary_round_trip_and_counts() {
        let c = corpus();
        let v = &c.vocab;
        for i in 0..v.len() as TermId {
            assert_eq!(v.id_of(v.term_of(i).unwrap()), Some(i));
            assert!(v.df(i) as usize <= c.documents.len());
            assert!(v.collection_tf(i) >= v.df(i) as u64);
        }
        assert_eq!(v.df(v.id_of("cheap").unwrap()), 11);
        for d in &c.documents {
            assert!(d.tokens.iter().all(|&t| (t as usize) < v.len()));
        }
    }

    #[test]
    fn unknown_query_terms_are_oov() {
        let c = corpus();
        let q = c.query(&RawRecord::new("q", "cheap zeppelin"));
        assert_eq!(q.tokens[1], OOV);
        assert_eq!(q.known_tokens().count(), 1);
    }

    #[test]
    fn empty_corpus_is_an_error() {
        assert!(matches!(
            Corpus::build(Vec::new(), Tokenizer::new()),
            Err(Error::EmptyCorpus)
        ));
    }

    #[test]
    fn filter_rules() {
        let c = corpus();
        let index = InvertedIndex::build(&c).unwrap();
        let raw = vec![
            RawRecord::new("a", "www.example.com cheap flights"),
            RawRecord::new("b", "Cheap   flights!"),
            RawRecord::new("c", "cheap flights"),
            RawRecord::new("d", "rare words"),
            RawRecord::new("e", "to city3"),
            RawRecord::new("f", "check http links"),
        ];
        let eval = vec![RawRecord::new("t1", "TO city3")];
        let kept = filter_training_queries(&raw, &index, &c.tokenizer, 10, &eval);
        let ids: Vec<&str> = kept.iter().map(|(r, _)| r.id.as_str()).collect();
        // a, f navigational; c duplicate of b; d only one hit; e in eval set
        assert_eq!(ids, vec!["b"]);
        assert_eq!(kept[0].0.text, "cheap flights");

        let again: Vec<RawRecord> = kept.iter().map(|(r, _)| r.clone()).collect();
        let twice = filter_training_queries(&again, &index, &c.tokenizer, 10, &eval);
        assert_eq!(twice, kept);

        let with_low_bar = filter_training_queries(&raw, &index, &c.tokenizer, 1, &[]);
        assert!(with_low_bar.iter().any(|(r, _)| r.id == "d"));
        assert!(with_low_bar
            .iter()
            .all(|(r, _)| raw.iter().any(|x| x.id == r.id)));
    }

    #[test]
    fn split_sizes_and_determinism() {
        let items: Vec<u32> = (0..100).collect();
        let (tr, va) = split_train_validation(&items, 0.8, 7).unwrap();
        assert_eq!((tr.len(), va.len()), (80, 20));
        let (tr2, va2) = split_train_validation(&items, 0.8, 7).unwrap();
        assert_eq!((tr.clone(), va.clone()), (tr2, va2));
        let mut all: Vec<u32> = tr.iter().chain(&va).copied().collect();
        all.sort();
        assert_eq!(all, items);
        assert!(split_train_validation(&items, 0.0, 7).is_err());
        assert!(split_train_validation(&items[..1], 0.5, 7).is_err());
    }
}
