//! Input representations: map a query and one or two documents to a
//! fixed-length network input.
//!
//! * Dense: `[N, avg_dl, l_d, {df(t_i), tf(t_i, d)} for i < k]`; the pair
//!   form appends `l_d2` and `{tf(t_i, d2)}`.
//! * Sparse: `[tfv_c | tfv_q | tfv_d (| tfv_d2)]` over the vocabulary.
//!
//! Dense and sparse use raw counts unless `log1p` is set.
//! * Embed: one composed embedding per field (query, doc, second doc),
//!   computed inside the model so it stays differentiable.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::corpus::{Query, TermId};
use crate::error::{Error, Result};
use crate::fsutil;
use crate::index::{query_term_counts, DocIdx, InvertedIndex};
use crate::nn::{bag_of, Bag, EmbeddingTable, Weighting};

/// Query-term slots of the dense representation.
pub const DEFAULT_QUERY_SLOTS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RepresentationKind {
    Dense,
    Sparse,
    Embed,
}

impl RepresentationKind {
    pub const ALL: [RepresentationKind; 3] = [Self::Dense, Self::Sparse, Self::Embed];

    pub fn name(self) -> &'static str {
        match self {
            Self::Dense => "dense",
            Self::Sparse => "sparse",
            Self::Embed => "embed",
        }
    }
}

impl fmt::Display for RepresentationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RepresentationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown representation `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DenseOptions {
    pub k: usize,
    /// Feed `ln(1 + x)` of every count (dense and sparse inputs).
    pub log1p: bool,
}

impl Default for DenseOptions {
    fn default() -> Self {
        Self {
            k: DEFAULT_QUERY_SLOTS,
            log1p: false,
        }
    }
}

/// Where the embedding table comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmbeddingSource {
    /// Random init, trained.
    Learned,
    /// Loaded from a file and kept fixed.
    PretrainedFrozen,
    /// Loaded from a file, then trained.
    PretrainedInit,
}

impl EmbeddingSource {
    pub fn name(self) -> &'static str {
        match self {
            Self::Learned => "learned",
            Self::PretrainedFrozen => "pretrained-frozen",
            Self::PretrainedInit => "pretrained-init",
        }
    }

    pub fn trainable(self) -> bool {
        self != Self::PretrainedFrozen
    }

    pub fn needs_file(self) -> bool {
        self != Self::Learned
    }
}

impl FromStr for EmbeddingSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Self::Learned, Self::PretrainedFrozen, Self::PretrainedInit]
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown embedding source `{s}`")))
    }
}

pub fn weighting_name(w: Weighting) -> &'static str {
    match w {
        Weighting::Learned => "learned",
        Weighting::Uniform => "uniform",
        Weighting::Idf => "idf",
    }
}

pub fn parse_weighting(s: &str) -> Result<Weighting> {
    match s {
        "learned" => Ok(Weighting::Learned),
        "uniform" => Ok(Weighting::Uniform),
        "idf" => Ok(Weighting::Idf),
        _ => Err(Error::InvalidArgument(format!("unknown weighting `{s}`"))),
    }
}

/// Input length for `docs` documents (1 point-wise, 2 pair-wise).
pub fn input_len(
    kind: RepresentationKind,
    docs: usize,
    vocab_size: usize,
    dim: usize,
    k: usize,
) -> usize {
    match kind {
        RepresentationKind::Dense => 2 + docs * (1 + k) + k,
        RepresentationKind::Sparse => (2 + docs) * vocab_size,
        RepresentationKind::Embed => (1 + docs) * dim,
    }
}

fn query_slots(q: &Query, k: usize) -> Vec<TermId> {
    q.known_tokens().take(k).collect()
}

pub fn dense_features(
    index: &InvertedIndex,
    q: &Query,
    docs: &[DocIdx],
    opts: DenseOptions,
) -> Vec<f64> {
    let k = opts.k;
    let slots = query_slots(q, k);
    let mut v = Vec::with_capacity(input_len(RepresentationKind::Dense, docs.len(), 0, 0, k));
    v.push(index.num_docs() as f64);
    v.push(index.avg_dl());
    for (di, &d) in docs.iter().enumerate() {
        v.push(index.doc_len(d) as f64);
        for i in 0..k {
            let (df, tf) = match slots.get(i) {
                Some(&t) => (index.df(t) as f64, index.tf(t, d) as f64),
                None => (0.0, 0.0),
            };
            if di == 0 {
                v.push(df);
            }
            v.push(tf);
        }
    }
    if opts.log1p {
        for x in &mut v {
            *x = x.ln_1p();
        }
    }
    v
}

/// Sparse vector with sorted, unique indices.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseFeatures {
    pub len: usize,
    pub entries: Vec<(u32, f64)>,
}

impl SparseFeatures {
    pub fn to_dense(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.len];
        for &(i, x) in &self.entries {
            v[i as usize] = x;
        }
        v
    }
}

fn count(x: f64, log1p: bool) -> f64 {
    if log1p {
        x.ln_1p()
    } else {
        x
    }
}

fn collection_block(index: &InvertedIndex, log1p: bool) -> Vec<(u32, f64)> {
    let vocab = index.vocab();
    (0..vocab.len() as TermId)
        .map(|t| (t, count(vocab.collection_tf(t) as f64, log1p)))
        .filter(|&(_, x)| x > 0.0)
        .collect()
}

fn sparse_with_block(
    index: &InvertedIndex,
    collection: &[(u32, f64)],
    q: &Query,
    docs: &[DocIdx],
    log1p: bool,
) -> SparseFeatures {
    let v = index.vocab().len() as u32;
    let mut entries = collection.to_vec();
    entries.extend(
        query_term_counts(q)
            .into_iter()
            .map(|(t, c)| (v + t, count(c as f64, log1p))),
    );
    for (i, &d) in docs.iter().enumerate() {
        let base = v * (2 + i as u32);
        entries.extend(
            index
                .doc_terms(d)
                .iter()
                .map(|&(t, tf)| (base + t, count(tf as f64, log1p))),
        );
    }
    SparseFeatures {
        len: (2 + docs.len()) * v as usize,
        entries,
    }
}

pub fn sparse_features(
    index: &InvertedIndex,
    q: &Query,
    docs: &[DocIdx],
    log1p: bool,
) -> SparseFeatures {
    sparse_with_block(index, &collection_block(index, log1p), q, docs, log1p)
}

/// Field bags `[query, doc, (doc2)]`; fails if any field has no known term.
pub fn embed_fields(index: &InvertedIndex, q: &Query, docs: &[DocIdx]) -> Result<Vec<Bag>> {
    let v = index.vocab().len();
    let mut fields = Vec::with_capacity(1 + docs.len());
    fields.push(bag_of(&q.tokens, v));
    for &d in docs {
        fields.push(index.doc_terms(d).to_vec());
    }
    if fields.iter().any(|f| f.is_empty()) {
        return Err(Error::AllOov);
    }
    Ok(fields)
}

pub fn embed_features(
    index: &InvertedIndex,
    q: &Query,
    docs: &[DocIdx],
    table: &EmbeddingTable,
    weighting: Weighting,
    idf: &[f64],
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(table.dim * (1 + docs.len()));
    for bag in embed_fields(index, q, docs)? {
        out.extend(table.compose(&bag, weighting, idf)?.vector);
    }
    Ok(out)
}

pub fn idf_table(index: &InvertedIndex) -> Vec<f64> {
    (0..index.vocab().len() as TermId)
        .map(|t| index.idf(t))
        .collect()
}

/// Features in the form the model consumes.
#[derive(Debug, Clone, PartialEq)]
pub enum Features {
    Dense(Vec<f64>),
    Sparse(SparseFeatures),
    Fields(Vec<Bag>),
}

/// Precomputed per-index state for building features of one kind.
#[derive(Debug, Clone)]
pub struct FeatureSpace<'a> {
    pub index: &'a InvertedIndex,
    pub kind: RepresentationKind,
    pub dense: DenseOptions,
    collection: Vec<(u32, f64)>,
}

impl<'a> FeatureSpace<'a> {
    pub fn new(index: &'a InvertedIndex, kind: RepresentationKind, dense: DenseOptions) -> Self {
        let collection = if kind == RepresentationKind::Sparse {
            collection_block(index, dense.log1p)
        } else {
            Vec::new()
        };
        Self {
            index,
            kind,
            dense,
            collection,
        }
    }

    pub fn features(&self, q: &Query, docs: &[DocIdx]) -> Result<Features> {
        Ok(match self.kind {
            RepresentationKind::Dense => {
                Features::Dense(dense_features(self.index, q, docs, self.dense))
            }
            RepresentationKind::Sparse => Features::Sparse(sparse_with_block(
                self.index,
                &self.collection,
                q,
                docs,
                self.dense.log1p,
            )),
            RepresentationKind::Embed => Features::Fields(embed_fields(self.index, q, docs)?),
        })
    }

    /// Nonzero entries of the collection term-frequency block (sparse only).
    pub fn collection_entries(&self) -> &[(u32, f64)] {
        &self.collection
    }
}

/// Load `term f1 ... fm` lines into `table` for terms in the vocabulary.
/// Returns how many rows were replaced; other rows keep their random init.
pub fn load_pretrained(
    path: &Path,
    index: &InvertedIndex,
    table: &mut EmbeddingTable,
) -> Result<usize> {
    let text = fsutil::read_string(path)?;
    let mut loaded = 0;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split(' ');
        let term = parts.next().unwrap_or_default();
        let values: Vec<f64> = parts
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::parse(path, i + 1, "bad float"))?;
        if values.len() != table.dim {
            return Err(Error::parse(
                path,
                i + 1,
                format!("expected {} values, found {}", table.dim, values.len()),
            ));
        }
        if let Some(t) = index.vocab().id_of(term) {
            table.row_mut(t).copy_from_slice(&values);
            loaded += 1;
        }
    }
    if loaded == 0 {
        warn!(
            "no pretrained vectors in {} matched the vocabulary",
            path.display()
        );
    }
    Ok(loaded)
}

/// Write an embedding table in the pretrained text format.
pub fn embeddings_to_text(index: &InvertedIndex, table: &EmbeddingTable) -> String {
    let mut out = String::new();
    for t in 0..table.vocab_size as TermId {
        out.push_str(index.vocab().term_of(t).unwrap_or("?"));
        for x in table.row(t) {
            out.push(' ');
            out.push_str(&format!("{x:e}"));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Corpus, RawRecord, Tokenizer};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    // d0: a b a c     (len 4)
    // d1: b d         (len 2)
    // d2: a e e e f f (len 6)
    fn fixture() -> (Corpus, InvertedIndex) {
        let c = Corpus::build(
            vec![
                RawRecord::new("d0", "a b a c"),
                RawRecord::new("d1", "b d"),
                RawRecord::new("d2", "a e e e f f"),
            ],
            Tokenizer::new(),
        )
        .unwrap();
        let idx = InvertedIndex::build(&c).unwrap();
        (c, idx)
    }

    fn q(c: &Corpus, text: &str) -> Query {
        c.query(&RawRecord::new("q", text))
    }

    #[test]
    fn dense_hand_counts() {
        let (c, idx) = fixture();
        let v = dense_features(&idx, &q(&c, "a e"), &[2], DenseOptions::default());
        // N=3, avg=4, l=6, (df(a)=2, tf=1), (df(e)=1, tf=3), zeros
        let expect = [
            3.0, 4.0, 6.0, 2.0, 1.0, 1.0, 3.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0,
        ];
        assert_eq!(v, expect);
        let pair = dense_features(&idx, &q(&c, "a e"), &[2, 0], DenseOptions::default());
        assert_eq!(pair.len(), 19);
        assert_eq!(&pair[..13], &expect);
        assert_eq!(&pair[13..], &[4.0, 2.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn dense_padding_and_truncation() {
        let (c, idx) = fixture();
        let empty = dense_features(&idx, &q(&c, ""), &[0], DenseOptions::default());
        assert_eq!(empty, [vec![3.0, 4.0, 4.0], vec![0.0; 10]].concat());
        let long = dense_features(
            &idx,
            &q(&c, "a b c d e f zz"),
            &[1],
            DenseOptions::default(),
        );
        assert_eq!(long.len(), 13);
        // zz is OOV and skipped; slots a b c d e, f truncated
        assert_eq!(long[11], 1.0); // df(e)
        let logged = dense_features(&idx, &q(&c, "a"), &[0], DenseOptions { k: 5, log1p: true });
        assert!((logged[0] - 4f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn sparse_hand_counts() {
        let (c, idx) = fixture();
        let v = c.vocab.len();
        let s = sparse_features(&idx, &q(&c, "a a f"), &[2], false);
        assert_eq!(s.len, 3 * v);
        let dense = s.to_dense();
        let id = |t: &str| c.vocab.id_of(t).unwrap() as usize;
        assert_eq!(dense[id("a")], 3.0);
        assert_eq!(dense[id("e")], 3.0);
        assert_eq!(dense[v + id("a")], 2.0);
        assert_eq!(dense[v + id("f")], 1.0);
        assert_eq!(dense[2 * v + id("e")], 3.0);
        assert_eq!(dense[2 * v + id("b")], 0.0);
        assert_eq!(
            s.entries.iter().filter(|e| e.0 as usize >= v).count(),
            2 + 3
        );
        let pair = sparse_features(&idx, &q(&c, ""), &[0, 1], false);
        assert_eq!(pair.len, 4 * v);
        assert!(pair.to_dense()[v..2 * v].iter().all(|&x| x == 0.0));
        assert!(pair.entries.windows(2).all(|w| w[0].0 < w[1].0));
    }

    #[test]
    fn sparse_full_vocabulary_doc_is_all_ones() {
        let c = Corpus::build(
            vec![RawRecord::new("x", "p q r"), RawRecord::new("y", "p")],
            Tokenizer::new(),
        )
        .unwrap();
        let idx = InvertedIndex::build(&c).unwrap();
        let s = sparse_features(&idx, &q(&c, "p"), &[0], false).to_dense();
        assert_eq!(&s[6..9], &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn embed_modes() {
        let (c, idx) = fixture();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let table = EmbeddingTable::random(c.vocab.len(), 4, &mut rng);
        let idf = idf_table(&idx);
        let query = q(&c, "a e");
        let uni = embed_features(&idx, &query, &[1], &table, Weighting::Uniform, &idf).unwrap();
        let a = c.vocab.id_of("a").unwrap();
        let e = c.vocab.id_of("e").unwrap();
        for k in 0..4 {
            assert!((uni[k] - 0.5 * (table.row(a)[k] + table.row(e)[k])).abs() < 1e-15);
        }
        let learned = embed_features(&idx, &query, &[1], &table, Weighting::Learned, &idf).unwrap();
        assert_eq!(learned, uni);
        let idfw = embed_features(&idx, &query, &[1], &table, Weighting::Idf, &idf).unwrap();
        // idf(a): df=2 -> ln(1.6); idf(e): df=1 -> ln(2.0/1.5+1)
        let (ia, ie) = (1.6f64.ln(), (2.5f64 / 1.5 + 1.0).ln());
        for k in 0..4 {
            let want = (ia * table.row(a)[k] + ie * table.row(e)[k]) / (ia + ie);
            assert!((idfw[k] - want).abs() < 1e-15);
        }
        assert_eq!(uni.len(), 8);
        assert!(matches!(
            embed_features(&idx, &q(&c, "zz"), &[1], &table, Weighting::Uniform, &idf),
            Err(Error::AllOov)
        ));
    }

    #[test]
    fn input_lengths() {
        let (c, idx) = fixture();
        let v = c.vocab.len();
        let query = q(&c, "a b");
        for (docs, arity) in [(vec![0], 1), (vec![0, 2], 2)] {
            let fs = FeatureSpace::new(&idx, RepresentationKind::Dense, DenseOptions::default());
            let Features::Dense(x) = fs.features(&query, &docs).unwrap() else {
                panic!()
            };
            assert_eq!(
                x.len(),
                input_len(RepresentationKind::Dense, arity, v, 0, 5)
            );
            let fs = FeatureSpace::new(&idx, RepresentationKind::Sparse, DenseOptions::default());
            let Features::Sparse(s) = fs.features(&query, &docs).unwrap() else {
                panic!()
            };
            assert_eq!(s.len, input_len(RepresentationKind::Sparse, arity, v, 0, 5));
            let fs = FeatureSpace::new(&idx, RepresentationKind::Embed, DenseOptions::default());
            let Features::Fields(f) = fs.features(&query, &docs).unwrap() else {
                panic!()
            };
            assert_eq!(
                f.len() * 7,
                input_len(RepresentationKind::Embed, arity, v, 7, 5)
            );
        }
        assert_eq!(input_len(RepresentationKind::Dense, 1, 0, 0, 5), 13);
        assert_eq!(input_len(RepresentationKind::Dense, 2, 0, 0, 5), 19);
    }

    #[test]
    fn pretrained_text_round_trip() {
        let (c, idx) = fixture();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let src = EmbeddingTable::random(c.vocab.len(), 3, &mut rng);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.txt");
        let mut text = embeddings_to_text(&idx, &src);
        text.push_str("unseen 1 2 3\n");
        std::fs::write(&path, text).unwrap();
        let mut dst = EmbeddingTable::random(c.vocab.len(), 3, &mut rng);
        assert_eq!(
            load_pretrained(&path, &idx, &mut dst).unwrap(),
            c.vocab.len()
        );
        assert_eq!(dst.vectors, src.vectors);
        std::fs::write(&path, "a 1 2\n").unwrap();
        assert!(load_pretrained(&path, &idx, &mut dst).is_err());
    }
}
