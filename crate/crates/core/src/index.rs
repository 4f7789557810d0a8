//! Inverted index and the BM25 scorer used as pseudo-labeler and candidate
//! generator.
//!
//! # Index file layout
//!
//! All integers little-endian.
//!
//! ```text
//! "WRIX1"                      magic + format version
//! u32 n, n bytes               provenance header (UTF-8 text)
//! u32 V                        vocabulary size
//!   V x { u32 len, bytes term, u64 collection_tf, u32 df }
//! u32 N                        document count
//!   N x { u32 len, bytes doc_id, u32 doc_length }
//! V x { u32 count, count x { u32 doc_index, u32 tf } }   postings, doc_index ascending
//! ```
//!
//! Per-document term bags are rebuilt from the postings on load.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::path::Path;

use crate::binio::{Reader, Writer};
use crate::corpus::{Corpus, Query, TermId, Vocabulary};
use crate::error::{Error, Result};
use crate::fsutil;

pub type DocIdx = u32;

const MAGIC: &[u8] = b"WRIX1";

/// Candidate depth used to build training data.
pub const TRAIN_DEPTH: usize = 1000;
/// Candidate depth handed to the neural re-rankers.
pub const RERANK_DEPTH: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
    pub k3: f64,
}

impl Default for Bm25Params {
    /// Indri defaults.
    fn default() -> Self {
        Self {
            k1: 1.2,
            b: 0.75,
            k3: 1000.0,
        }
    }
}

impl Bm25Params {
    pub fn validate(&self) -> Result<()> {
        if !(self.k1 >= 0.0 && (0.0..=1.0).contains(&self.b) && self.k3 >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "invalid BM25 parameters {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Posting {
    pub doc: DocIdx,
    pub tf: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredDoc {
    pub doc: DocIdx,
    pub score: f64,
}

#[derive(Debug, Clone)]
pub struct InvertedIndex {
    vocab: Vocabulary,
    doc_ids: Vec<String>,
    doc_lengths: Vec<u32>,
    postings: Vec<Vec<Posting>>,
    forward: Vec<Vec<(TermId, u32)>>,
    avg_dl: f64,
    id_rank: Vec<u32>,
    by_id: HashMap<String, DocIdx>,
}

/// Distinct in-vocabulary query terms with their query frequency, ascending by id.
pub fn query_term_counts(q: &Query) -> Vec<(TermId, u32)> {
    let mut terms: Vec<TermId> = q.known_tokens().collect();
    terms.sort_unstable();
    let mut out: Vec<(TermId, u32)> = Vec::with_capacity(terms.len());
    for t in terms {
        match out.last_mut() {
            Some((last, c)) if *last == t => *c += 1,
            _ => out.push((t, 1)),
        }
    }
    out
}

impl InvertedIndex {
    pub fn build(corpus: &Corpus) -> Result<Self> {
        if corpus.documents.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let v = corpus.vocab.len();
        let mut postings: Vec<Vec<Posting>> = vec![Vec::new(); v];
        let mut forward = Vec::with_capacity(corpus.documents.len());
        for (d, doc) in corpus.documents.iter().enumerate() {
            let mut terms = doc.tokens.clone();
            terms.sort_unstable();
            let mut bag: Vec<(TermId, u32)> = Vec::new();
            for t in terms {
                match bag.last_mut() {
                    Some((last, c)) if *last == t => *c += 1,
                    _ => bag.push((t, 1)),
                }
            }
            for &(t, tf) in &bag {
                postings[t as usize].push(Posting {
                    doc: d as DocIdx,
                    tf,
                });
            }
            forward.push(bag);
        }
        let doc_ids = corpus.documents.iter().map(|d| d.doc_id.clone()).collect();
        let doc_lengths = corpus.documents.iter().map(|d| d.len() as u32).collect();
        Self::assemble(
            corpus.vocab.clone(),
            doc_ids,
            doc_lengths,
            postings,
            forward,
        )
    }

    fn assemble(
        vocab: Vocabulary,
        doc_ids: Vec<String>,
        doc_lengths: Vec<u32>,
        postings: Vec<Vec<Posting>>,
        forward: Vec<Vec<(TermId, u32)>>,
    ) -> Result<Self> {
        let n = doc_ids.len();
        if n == 0 {
            return Err(Error::EmptyCorpus);
        }
        let total: u64 = doc_lengths.iter().map(|&l| l as u64).sum();
        let avg_dl = total as f64 / n as f64;
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| doc_ids[a].cmp(&doc_ids[b]));
        let mut id_rank = vec![0u32; n];
        for (rank, &d) in order.iter().enumerate() {
            id_rank[d] = rank as u32;
        }
        let by_id = doc_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), i as DocIdx))
            .collect();
        Ok(Self {
            vocab,
            doc_ids,
            doc_lengths,
            postings,
            forward,
            avg_dl,
            id_rank,
            by_id,
        })
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn num_docs(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn avg_dl(&self) -> f64 {
        self.avg_dl
    }

    pub fn doc_len(&self, d: DocIdx) -> u32 {
        self.doc_lengths[d as usize]
    }

    pub fn doc_id(&self, d: DocIdx) -> &str {
        &self.doc_ids[d as usize]
    }

    pub fn doc_index(&self, doc_id: &str) -> Option<DocIdx> {
        self.by_id.get(doc_id).copied()
    }

    pub fn postings(&self, t: TermId) -> &[Posting] {
        self.postings
            .get(t as usize)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// Sorted (term, tf) bag of a document.
    pub fn doc_terms(&self, d: DocIdx) -> &[(TermId, u32)] {
        &self.forward[d as usize]
    }

    pub fn tf(&self, t: TermId, d: DocIdx) -> u32 {
        let bag = &self.forward[d as usize];
        bag.binary_search_by_key(&t, |&(term, _)| term)
            .map(|i| bag[i].1)
            .unwrap_or(0)
    }

    pub fn df(&self, t: TermId) -> u32 {
        self.postings(t).len() as u32
    }

    /// `ln((N - df + 0.5) / (df + 0.5) + 1)`, always positive.
    pub fn idf(&self, t: TermId) -> f64 {
        let n = self.num_docs() as f64;
        let df = self.df(t) as f64;
        ((n - df + 0.5) / (df + 0.5) + 1.0).ln()
    }

    /// Tie rule for rankings: ascending external doc id.
    pub fn cmp_doc_ids(&self, a: DocIdx, b: DocIdx) -> Ordering {
        self.id_rank[a as usize].cmp(&self.id_rank[b as usize])
    }

    /// Number of documents sharing at least one term with the query.
    pub fn hit_count(&self, q: &Query) -> usize {
        let terms = query_term_counts(q);
        match terms.len() {
            0 => 0,
            1 => self.postings(terms[0].0).len(),
            _ => {
                let mut hit = vec![false; self.num_docs()];
                let mut count = 0;
                for &(t, _) in &terms {
                    for p in self.postings(t) {
                        if !hit[p.doc as usize] {
                            hit[p.doc as usize] = true;
                            count += 1;
                        }
                    }
                }
                count
            }
        }
    }

    fn term_weight(&self, params: &Bm25Params, t: TermId, qtf: u32, tf: u32, dl: u32) -> f64 {
        let tf = tf as f64;
        let qtf = qtf as f64;
        let norm = params.k1 * (1.0 - params.b + params.b * dl as f64 / self.avg_dl);
        self.idf(t) * (tf * (params.k1 + 1.0)) / (tf + norm) * ((params.k3 + 1.0) * qtf)
            / (params.k3 + qtf)
    }

    pub fn bm25_score(&self, params: &Bm25Params, q: &Query, d: DocIdx) -> f64 {
        let dl = self.doc_len(d);
        let mut score = 0.0;
        for (t, qtf) in query_term_counts(q) {
            let tf = self.tf(t, d);
            if tf > 0 {
                score += self.term_weight(params, t, qtf, tf, dl);
            }
        }
        score
    }

    pub fn bm25_score_by_id(&self, params: &Bm25Params, q: &Query, doc_id: &str) -> Result<f64> {
        let d = self
            .doc_index(doc_id)
            .ok_or_else(|| Error::UnknownDocument(doc_id.to_string()))?;
        Ok(self.bm25_score(params, q, d))
    }

    /// Top-`k` documents with positive score, descending, ties by doc id.
    ///
    /// Term contributions are summed in the same order as
    /// [`InvertedIndex::bm25_score`], so the scores are bit-identical.
    pub fn retrieve_top_k(&self, params: &Bm25Params, q: &Query, k: usize) -> Vec<ScoredDoc> {
        let mut acc = vec![0.0f64; self.num_docs()];
        let mut touched: Vec<DocIdx> = Vec::new();
        for (t, qtf) in query_term_counts(q) {
            for p in self.postings(t) {
                let slot = &mut acc[p.doc as usize];
                if *slot == 0.0 {
                    touched.push(p.doc);
                }
                *slot += self.term_weight(params, t, qtf, p.tf, self.doc_len(p.doc));
            }
        }
        let mut hits: Vec<ScoredDoc> = touched
            .into_iter()
            .filter(|&d| acc[d as usize] > 0.0)
            .map(|d| ScoredDoc {
                doc: d,
                score: acc[d as usize],
            })
            .collect();
        hits.sort_by(|a, b| {
            b.score
                .total_cmp(&a.score)
                .then_with(|| self.cmp_doc_ids(a.doc, b.doc))
        });
        hits.truncate(k);
        hits
    }

    pub fn to_bytes(&self, header: &str) -> Vec<u8> {
        let mut w = Writer::default();
        w.bytes(MAGIC);
        w.str(header);
        w.u32(self.vocab.len() as u32);
        for t in 0..self.vocab.len() as TermId {
            w.str(self.vocab.term_of(t).unwrap());
            w.u64(self.vocab.collection_tf(t));
            w.u32(self.vocab.df(t));
        }
        w.u32(self.num_docs() as u32);
        for (id, &len) in self.doc_ids.iter().zip(&self.doc_lengths) {
            w.str(id);
            w.u32(len);
        }
        for plist in &self.postings {
            w.u32(plist.len() as u32);
            for p in plist {
                w.u32(p.doc);
                w.u32(p.tf);
            }
        }
        w.buf
    }

    /// Returns the index and the provenance header stored with it.
    pub fn from_bytes(bytes: &[u8]) -> Result<(Self, String)> {
        let mut r = Reader::new(bytes);
        r.expect(MAGIC)?;
        let header = r.str()?;
        let v = r.u32()? as usize;
        let (mut terms, mut ctf, mut df) = (
            Vec::with_capacity(v),
            Vec::with_capacity(v),
            Vec::with_capacity(v),
        );
        for _ in 0..v {
            terms.push(r.str()?);
            ctf.push(r.u64()?);
            df.push(r.u32()?);
        }
        let vocab = Vocabulary::from_parts(terms, ctf, df)?;
        let n = r.u32()? as usize;
        let (mut doc_ids, mut doc_lengths) = (Vec::with_capacity(n), Vec::with_capacity(n));
        for _ in 0..n {
            doc_ids.push(r.str()?);
            doc_lengths.push(r.u32()?);
        }
        let mut postings = Vec::with_capacity(v);
        let mut forward: Vec<Vec<(TermId, u32)>> = vec![Vec::new(); n];
        for t in 0..v {
            let count = r.u32()? as usize;
            let mut plist = Vec::with_capacity(count.min(n));
            for _ in 0..count {
                let doc = r.u32()?;
                let tf = r.u32()?;
                if doc as usize >= n {
                    return Err(Error::Format(format!(
                        "posting references doc {doc} of {n}"
                    )));
                }
                if plist.last().is_some_and(|p: &Posting| p.doc >= doc) {
                    return Err(Error::Format("postings not sorted by doc".into()));
                }
                plist.push(Posting { doc, tf });
                forward[doc as usize].push((t as TermId, tf));
            }
            postings.push(plist);
        }
        r.finish()?;
        Ok((
            Self::assemble(vocab, doc_ids, doc_lengths, postings, forward)?,
            header,
        ))
    }

    pub fn save(&self, path: &Path, header: &str) -> Result<()> {
        fsutil::write_atomic(path, &self.to_bytes(header))
    }

    pub fn load(path: &Path) -> Result<(Self, String)> {
        Self::from_bytes(&fsutil::read(path)?)
    }
}
