//! Weak labels from the BM25 pseudo-labeler.
//!
//! Raw BM25 scores are min-max normalized per query. Point-wise instances are
//! `(query, doc, s)`; pair-wise instances are ordered pairs sampled uniformly
//! without replacement from the candidate list, with equal-score pairs left
//! out because they carry no preference.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use log::debug;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::corpus::Query;
use crate::error::{Error, Result};
use crate::fsutil;
use crate::index::{Bm25Params, DocIdx, InvertedIndex};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointInstance {
    /// Position in the query list the instance was generated from.
    pub query: usize,
    pub doc: DocIdx,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairInstance {
    pub query: usize,
    pub doc1: DocIdx,
    pub doc2: DocIdx,
    pub s1: f64,
    pub s2: f64,
}

impl PairInstance {
    pub fn target(&self) -> Result<f64> {
        pair_probability(self.s1, self.s2)
    }

    pub fn swapped(&self) -> Self {
        Self {
            query: self.query,
            doc1: self.doc2,
            doc2: self.doc1,
            s1: self.s2,
            s2: self.s1,
        }
    }
}

/// Per-query min-max normalization to `[0, 1]`; a constant list maps to 0.5.
pub fn normalize_scores(raw: &[f64]) -> Vec<f64> {
    let (lo, hi) = raw
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        });
    if raw.is_empty() {
        return Vec::new();
    }
    if hi == lo {
        return vec![0.5; raw.len()];
    }
    raw.iter().map(|&x| (x - lo) / (hi - lo)).collect()
}

/// Probability that the first document outranks the second: `s1 / (s1 + s2)`.
pub fn pair_probability(s1: f64, s2: f64) -> Result<f64> {
    let total = s1 + s2;
    if total <= 0.0 || !total.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "pair scores ({s1}, {s2}) have no positive mass"
        )));
    }
    Ok(s1 / total)
}

/// Top-`depth` candidates of one query with normalized scores.
pub fn labeled_candidates(
    index: &InvertedIndex,
    params: &Bm25Params,
    query: &Query,
    depth: usize,
) -> Vec<(DocIdx, f64)> {
    let hits = index.retrieve_top_k(params, query, depth);
    let raw: Vec<f64> = hits.iter().map(|h| h.score).collect();
    hits.iter()
        .map(|h| h.doc)
        .zip(normalize_scores(&raw))
        .collect()
}

pub fn generate_pointwise(
    index: &InvertedIndex,
    params: &Bm25Params,
    queries: &[Query],
    depth: usize,
) -> Result<Vec<PointInstance>> {
    if depth == 0 {
        return Err(Error::InvalidArgument("depth must be at least 1".into()));
    }
    let blocks: Vec<Vec<PointInstance>> = queries
        .par_iter()
        .enumerate()
        .map(|(qi, q)| {
            let cands = labeled_candidates(index, params, q, depth);
            if cands.is_empty() {
                debug!("query {} has no hits, skipped", q.query_id);
            }
            cands
                .into_iter()
                .map(|(doc, score)| PointInstance {
                    query: qi,
                    doc,
                    score,
                })
                .collect()
        })
        .collect();
    Ok(blocks.concat())
}

/// Ordered candidate pairs `(i, j)` with distinct scores, in row-major order.
fn distinct_pairs(scores: &[f64]) -> Vec<(u32, u32)> {
    let n = scores.len();
    let mut out = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i != j && scores[i] != scores[j] {
                out.push((i as u32, j as u32));
            }
        }
    }
    out
}

pub fn generate_pairwise(
    index: &InvertedIndex,
    params: &Bm25Params,
    queries: &[Query],
    depth: usize,
    pairs_per_query: usize,
    seed: u64,
) -> Result<Vec<PairInstance>> {
    if depth == 0 || pairs_per_query == 0 {
        return Err(Error::InvalidArgument(
            "depth and pairs_per_query must be at least 1".into(),
        ));
    }
    let blocks: Vec<Vec<PairInstance>> = queries
        .par_iter()
        .enumerate()
        .map(|(qi, q)| {
            let cands = labeled_candidates(index, params, q, depth);
            let scores: Vec<f64> = cands.iter().map(|c| c.1).collect();
            let pairs = distinct_pairs(&scores);
            if pairs.is_empty() {
                debug!(
                    "query {} has fewer than two distinct-score candidates, skipped",
                    q.query_id
                );
                return Vec::new();
            }
            let chosen: Vec<(u32, u32)> = if pairs.len() <= pairs_per_query {
                pairs
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(qi as u64);
                let mut picks =
                    rand::seq::index::sample(&mut rng, pairs.len(), pairs_per_query).into_vec();
                picks.sort_unstable();
                picks.into_iter().map(|k| pairs[k]).collect()
            };
            chosen
                .into_iter()
                .map(|(i, j)| PairInstance {
                    query: qi,
                    doc1: cands[i as usize].0,
                    doc2: cands[j as usize].0,
                    s1: cands[i as usize].1,
                    s2: cands[j as usize].1,
                })
                .collect()
        })
        .collect();
    Ok(blocks.concat())
}

fn sig9(x: f64) -> String {
    format!("{x:.8e}")
}

pub fn pointwise_tsv(
    header: &str,
    index: &InvertedIndex,
    queries: &[Query],
    rows: &[PointInstance],
) -> String {
    let mut out = String::new();
    out.push_str(header);
    out.push_str("q_id\tdoc_id\ts\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{}\t{}\t{}",
            queries[r.query].query_id,
            index.doc_id(r.doc),
            sig9(r.score)
        );
    }
    out
}

pub fn pairwise_tsv(
    header: &str,
    index: &InvertedIndex,
    queries: &[Query],
    rows: &[PairInstance],
) -> String {
    let mut out = String::new();
    out.push_str(header);
    out.push_str("q_id\tdoc1_id\tdoc2_id\ts1\ts2\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            queries[r.query].query_id,
            index.doc_id(r.doc1),
            index.doc_id(r.doc2),
            sig9(r.s1),
            sig9(r.s2)
        );
    }
    out
}

struct Rows<'a> {
    path: &'a Path,
    fields: usize,
}

impl Rows<'_> {
    fn parse<'t>(&self, text: &'t str) -> Result<Vec<(usize, Vec<&'t str>)>> {
        let mut out = Vec::new();
        let mut seen_header = false;
        for (i, line) in text.lines().enumerate() {
            if line.starts_with('#') || line.is_empty() {
                continue;
            }
            if !seen_header {
                seen_header = true;
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != self.fields {
                return Err(Error::parse(
                    self.path,
                    i + 1,
                    format!("expected {} columns", self.fields),
                ));
            }
            out.push((i + 1, cols));
        }
        Ok(out)
    }
}

fn lookup(
    path: &Path,
    line: usize,
    index: &InvertedIndex,
    qmap: &HashMap<&str, usize>,
    qid: &str,
    docs: &[&str],
) -> Result<(usize, Vec<DocIdx>)> {
    let q = *qmap
        .get(qid)
        .ok_or_else(|| Error::parse(path, line, format!("unknown query `{qid}`")))?;
    let ds = docs
        .iter()
        .map(|d| {
            index
                .doc_index(d)
                .ok_or_else(|| Error::parse(path, line, format!("unknown doc `{d}`")))
        })
        .collect::<Result<_>>()?;
    Ok((q, ds))
}

fn float(path: &Path, line: usize, s: &str) -> Result<f64> {
    s.parse()
        .map_err(|_| Error::parse(path, line, format!("bad number `{s}`")))
}

pub fn read_pointwise(
    path: &Path,
    index: &InvertedIndex,
    queries: &[Query],
) -> Result<Vec<PointInstance>> {
    let text = fsutil::read_string(path)?;
    let qmap: HashMap<&str, usize> = queries
        .iter()
        .enumerate()
        .map(|(i, q)| (q.query_id.as_str(), i))
        .collect();
    Rows { path, fields: 3 }
        .parse(&text)?
        .into_iter()
        .map(|(line, c)| {
            let (query, docs) = lookup(path, line, index, &qmap, c[0], &c[1..2])?;
            Ok(PointInstance {
                query,
                doc: docs[0],
                score: float(path, line, c[2])?,
            })
        })
        .collect()
}

pub fn read_pairwise(
    path: &Path,
    index: &InvertedIndex,
    queries: &[Query],
) -> Result<Vec<PairInstance>> {
    let text = fsutil::read_string(path)?;
    let qmap: HashMap<&str, usize> = queries
        .iter()
        .enumerate()
        .map(|(i, q)| (q.query_id.as_str(), i))
        .collect();
    Rows { path, fields: 5 }
        .parse(&text)?
        .into_iter()
        .map(|(line, c)| {
            let (query, docs) = lookup(path, line, index, &qmap, c[0], &c[1..3])?;
            Ok(PairInstance {
                query,
                doc1: docs[0],
                doc2: docs[1],
                s1: float(path, line, c[3])?,
                s2: float(path, line, c[4])?,
            })
        })
        .collect()
}
