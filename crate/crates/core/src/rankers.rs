//! The three ranking architectures and their training.
//!
//! * `Score`: point-wise regression of the weak score, linear output, MSE.
//! * `Rank`: one point-wise scorer applied to both documents of a pair
//!   (shared weights), tanh output, hinge loss on the score difference.
//! * `RankProb`: the network sees the query and both documents and predicts
//!   the probability that the first outranks the second, sigmoid output,
//!   cross-entropy against `s1 / (s1 + s2)`.

use std::cmp::Ordering;
use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Query;
use crate::error::{Error, Result};
use crate::eval::Qrels;
use crate::index::{Bm25Params, DocIdx, InvertedIndex, ScoredDoc};
use crate::nn::{
    Activation, AdamConfig, AdamState, Composed, EmbedGrads, EmbeddingTable, ForwardCache, Input,
    Mlp, MlpGrads, Mode, Weighting,
};
use crate::represent::{
    idf_table, input_len, DenseOptions, EmbeddingSource, FeatureSpace, Features, RepresentationKind,
};
use crate::weaklabel::{pair_probability, PairInstance, PointInstance};

/// Clamp applied to predicted probabilities before taking logs.
pub const PROB_CLAMP: f64 = 1e-12;
pub const DEFAULT_MARGIN: f64 = 1.0;

pub const BATCH_SIZE_GRID: [usize; 3] = [128, 256, 512];
pub const LEARNING_RATE_GRID: [f64; 5] = [1e-3, 5e-4, 1e-4, 5e-5, 1e-5];
pub const DROPOUT_GRID: [f64; 4] = [0.0, 0.1, 0.2, 0.5];
pub const HIDDEN_SIZE_GRID: [usize; 7] = [16, 32, 64, 128, 256, 512, 1024];
pub const HIDDEN_LAYERS_GRID: [usize; 4] = [1, 2, 3, 4];
pub const EMBEDDING_SIZE_GRID: [usize; 4] = [100, 300, 500, 1000];

/// Gradient accumulation is split into this many fixed chunks per batch.
const CHUNKS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    Score,
    Rank,
    RankProb,
}

impl Architecture {
    pub const ALL: [Architecture; 3] = [Self::Score, Self::Rank, Self::RankProb];

    pub fn name(self) -> &'static str {
        match self {
            Self::Score => "score",
            Self::Rank => "rank",
            Self::RankProb => "rankprob",
        }
    }

    pub fn output_activation(self) -> Activation {
        match self {
            Self::Score => Activation::Linear,
            Self::Rank => Activation::Tanh,
            Self::RankProb => Activation::Sigmoid,
        }
    }

    /// Documents per network input.
    pub fn docs_per_input(self) -> usize {
        match self {
            Self::RankProb => 2,
            _ => 1,
        }
    }

    pub fn is_pairwise(self) -> bool {
        self != Self::Score
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown architecture `{s}`")))
    }
}

/// Everything needed to construct a model besides the index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub arch: Architecture,
    pub repr: RepresentationKind,
    pub dense: DenseOptions,
    pub hidden: Vec<usize>,
    pub embedding_dim: usize,
    pub weighting: Weighting,
    pub embedding_source: EmbeddingSource,
    pub dropout: f64,
}

impl ModelSpec {
    pub fn new(arch: Architecture, repr: RepresentationKind) -> Self {
        Self {
            arch,
            repr,
            dense: DenseOptions::default(),
            hidden: vec![128, 128],
            embedding_dim: 100,
            weighting: Weighting::Learned,
            embedding_source: EmbeddingSource::Learned,
            dropout: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankerModel {
    pub spec: ModelSpec,
    pub mlp: Mlp,
    pub embedding: Option<EmbeddingTable>,
    /// idf per term, used by the fixed idf weighting.
    pub idf: Vec<f64>,
    pub vocab_size: usize,
}

/// Per-input state kept between forward and backward.
#[derive(Debug, Clone)]
pub struct ModelCache {
    mlp: ForwardCache,
    composed: Vec<Composed>,
}

#[derive(Debug, Clone)]
pub struct ModelGrads {
    pub mlp: MlpGrads,
    pub embed: Option<EmbedGrads>,
}

impl ModelGrads {
    pub fn zeros_like(model: &RankerModel) -> Self {
        Self {
            mlp: MlpGrads::zeros_like(&model.mlp),
            embed: model
                .embedding
                .as_ref()
                .map(|e| EmbedGrads::zeros(e.vocab_size, e.dim)),
        }
    }

    pub fn clear(&mut self) {
        self.mlp.clear();
        if let Some(e) = &mut self.embed {
            e.clear();
        }
    }

    pub fn add(&mut self, other: &ModelGrads) {
        self.mlp.add(&other.mlp);
        if let (Some(a), Some(b)) = (&mut self.embed, &other.embed) {
            a.add(b);
        }
    }

    /// Gradient slices in the order of [`RankerModel::params_mut`].
    pub fn slices(&self, model: &RankerModel) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for l in &self.mlp.layers {
            out.push(&l.weights);
            out.push(&l.bias);
        }
        if let Some(e) = &self.embed {
            if model.trains_vectors() {
                out.push(&e.vectors);
            }
            if model.trains_weights() {
                out.push(&e.weights);
            }
        }
        out
    }
}

impl RankerModel {
    /// Fresh model with Glorot dense layers and uniform(-0.05, 0.05) embeddings.
    pub fn new(spec: ModelSpec, index: &InvertedIndex, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vocab_size = index.vocab().len();
        let input = input_len(
            spec.repr,
            spec.arch.docs_per_input(),
            vocab_size,
            spec.embedding_dim,
            spec.dense.k,
        );
        if input == 0 {
            return Err(Error::InvalidArgument("model input would be empty".into()));
        }
        let mlp = Mlp::feed_forward(
            input,
            &spec.hidden,
            spec.arch.output_activation(),
            spec.dropout,
            &mut rng,
        )?;
        let embedding = (spec.repr == RepresentationKind::Embed)
            .then(|| EmbeddingTable::random(vocab_size, spec.embedding_dim, &mut rng));
        Ok(Self {
            spec,
            mlp,
            embedding,
            idf: idf_table(index),
            vocab_size,
        })
    }

    /// Feature space matching this model's representation settings.
    pub fn feature_space<'a>(&self, index: &'a InvertedIndex) -> FeatureSpace<'a> {
        FeatureSpace::new(index, self.spec.repr, self.spec.dense)
    }

    pub fn arch(&self) -> Architecture {
        self.spec.arch
    }

    fn trains_vectors(&self) -> bool {
        self.embedding.is_some() && self.spec.embedding_source.trainable()
    }

    fn trains_weights(&self) -> bool {
        self.embedding.is_some() && self.spec.weighting == Weighting::Learned
    }

    /// Trainable parameter slices; invalidates outstanding forward caches.
    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let tv = self.trains_vectors();
        let tw = self.trains_weights();
        let mut out: Vec<&mut [f64]> = Vec::new();
        for l in self.mlp.layers_mut() {
            out.push(&mut l.weights);
            out.push(&mut l.bias);
        }
        if let Some(e) = &mut self.embedding {
            if tv {
                out.push(&mut e.vectors);
            }
            if tw {
                out.push(&mut e.weights);
            }
        }
        out
    }

    pub fn param_sizes(&mut self) -> Vec<usize> {
        self.params_mut().iter().map(|p| p.len()).collect()
    }

    fn compose_fields(&self, fields: &[crate::nn::Bag]) -> Result<(Vec<f64>, Vec<Composed>)> {
        let table = self
            .embedding
            .as_ref()
            .ok_or_else(|| Error::Architecture("embed features need an embedding table".into()))?;
        let mut x = Vec::with_capacity(table.dim * fields.len());
        let mut composed = Vec::with_capacity(fields.len());
        for bag in fields {
            let c = table.compose(bag, self.spec.weighting, &self.idf)?;
            x.extend_from_slice(&c.vector);
            composed.push(c);
        }
        Ok((x, composed))
    }

    pub fn forward<R: Rng>(
        &self,
        feats: &Features,
        mode: Mode,
        rng: &mut R,
    ) -> Result<(f64, ModelCache)> {
        let (out, mlp, composed) = match feats {
            Features::Dense(x) => {
                let (o, c) = self.mlp.forward(Input::Dense(x), mode, rng)?;
                (o, c, Vec::new())
            }
            Features::Sparse(s) => {
                let (o, c) = self.mlp.forward(
                    Input::Sparse {
                        len: s.len,
                        entries: &s.entries,
                    },
                    mode,
                    rng,
                )?;
                (o, c, Vec::new())
            }
            Features::Fields(fields) => {
                let (x, composed) = self.compose_fields(fields)?;
                let (o, c) = self.mlp.forward(Input::Dense(&x), mode, rng)?;
                (o, c, composed)
            }
        };
        Ok((out[0], ModelCache { mlp, composed }))
    }

    /// Accumulate gradients of `upstream * output` into `grads`.
    pub fn backward(
        &self,
        feats: &Features,
        cache: &ModelCache,
        upstream: f64,
        grads: &mut ModelGrads,
    ) -> Result<()> {
        let need_input = matches!(feats, Features::Fields(_))
            && (self.trains_vectors() || self.trains_weights());
        let gin = self
            .mlp
            .backward(&cache.mlp, &[upstream], &mut grads.mlp, need_input)?;
        if let (Some(gin), Features::Fields(fields)) = (gin, feats) {
            let table = self.embedding.as_ref().expect("embed model has a table");
            let eg = grads.embed.as_mut().expect("embed grads allocated");
            for (f, (bag, comp)) in fields.iter().zip(&cache.composed).enumerate() {
                let up = &gin[f * table.dim..(f + 1) * table.dim];
                table.compose_backward(
                    bag,
                    comp,
                    up,
                    self.spec.weighting,
                    eg,
                    self.trains_vectors(),
                );
            }
        }
        Ok(())
    }

    fn forward_shared<R: Rng>(
        &self,
        feats: &Features,
        shared: Option<&SharedBlock>,
        mode: Mode,
        rng: &mut R,
    ) -> Result<(f64, ModelCache)> {
        match (feats, shared) {
            (Features::Sparse(s), Some(b)) => {
                let input = Input::Sparse {
                    len: s.len,
                    entries: &s.entries[b.skip..],
                };
                let (o, mlp) = self.mlp.forward_with_base(input, &b.pre, mode, rng)?;
                Ok((
                    o[0],
                    ModelCache {
                        mlp,
                        composed: Vec::new(),
                    },
                ))
            }
            _ => self.forward(feats, mode, rng),
        }
    }

    fn predict_shared(&self, feats: &Features, shared: Option<&SharedBlock>) -> Result<f64> {
        match (feats, shared) {
            (Features::Sparse(s), Some(b)) => {
                let input = Input::Sparse {
                    len: s.len,
                    entries: &s.entries[b.skip..],
                };
                Ok(self.mlp.infer_with_base(input, &b.pre)?[0])
            }
            _ => self.predict(feats),
        }
    }

    /// Inference-mode output for prepared features.
    pub fn predict(&self, feats: &Features) -> Result<f64> {
        Ok(match feats {
            Features::Dense(x) => self.mlp.infer(Input::Dense(x))?[0],
            Features::Sparse(s) => self.mlp.infer(Input::Sparse {
                len: s.len,
                entries: &s.entries,
            })?[0],
            Features::Fields(fields) => {
                let (x, _) = self.compose_fields(fields)?;
                self.mlp.infer(Input::Dense(&x))?[0]
            }
        })
    }

    /// Point-wise relevance score; not defined for `RankProb`.
    pub fn score_pointwise(&self, fs: &FeatureSpace<'_>, q: &Query, d: DocIdx) -> Result<f64> {
        if self.arch() == Architecture::RankProb {
            return Err(Error::Architecture(
                "rankprob has no point-wise score; use rerank".into(),
            ));
        }
        self.predict(&fs.features(q, &[d])?)
    }

    /// Probability that `d1` outranks `d2` (`RankProb` only).
    pub fn pair_preference(
        &self,
        fs: &FeatureSpace<'_>,
        q: &Query,
        d1: DocIdx,
        d2: DocIdx,
    ) -> Result<f64> {
        if self.arch() != Architecture::RankProb {
            return Err(Error::Architecture(
                "pair preference needs a rankprob model".into(),
            ));
        }
        self.predict(&fs.features(q, &[d1, d2])?)
    }

    /// Re-rank BM25 candidates. Ties keep the incoming (BM25) order.
    pub fn rerank(
        &self,
        fs: &FeatureSpace<'_>,
        q: &Query,
        candidates: &[ScoredDoc],
    ) -> Result<Vec<ScoredDoc>> {
        match self.arch() {
            Architecture::RankProb => rerank_pairwise(self, fs, q, candidates),
            _ => rerank_pointwise(self, fs, q, candidates),
        }
    }
}

fn sort_by_score_then_position(scored: Vec<(usize, ScoredDoc)>) -> Vec<ScoredDoc> {
    let mut scored = scored;
    scored.sort_by(|a, b| b.1.score.total_cmp(&a.1.score).then(a.0.cmp(&b.0)));
    scored.into_iter().map(|(_, s)| s).collect()
}

pub fn rerank_pointwise(
    model: &RankerModel,
    fs: &FeatureSpace<'_>,
    q: &Query,
    candidates: &[ScoredDoc],
) -> Result<Vec<ScoredDoc>> {
    let shared = SharedBlock::new(model, fs)?;
    let scored = candidates
        .par_iter()
        .enumerate()
        .map(|(i, c)| {
            let score = match fs.features(q, &[c.doc]) {
                Ok(f) => model.predict_shared(&f, shared.as_ref())?,
                Err(Error::AllOov) => f64::NEG_INFINITY,
                Err(e) => return Err(e),
            };
            Ok((i, ScoredDoc { doc: c.doc, score }))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(sort_by_score_then_position(scored))
}

/// First-layer contribution of the collection block that leads every
/// sparse input. It is the same for all instances, so it is computed once
/// per parameter state and skipped per instance.
struct SharedBlock {
    /// Number of leading sparse entries covered by `pre`.
    skip: usize,
    pre: Vec<f64>,
}

impl SharedBlock {
    fn new(model: &RankerModel, fs: &FeatureSpace<'_>) -> Result<Option<Self>> {
        if fs.kind != RepresentationKind::Sparse {
            return Ok(None);
        }
        let v = fs.index.vocab().len();
        let expected = v * (2 + model.arch().docs_per_input());
        if model.mlp.input_len() != expected {
            return Err(Error::Shape {
                expected,
                got: model.mlp.input_len(),
            });
        }
        let entries = fs.collection_entries();
        Ok(Some(Self {
            skip: entries.len(),
            pre: model
                .mlp
                .first_layer_block(0, Input::Sparse { len: v, entries }),
        }))
    }

    /// Add the collection-block weight gradients, given the summed
    /// first-layer bias gradient (which equals the summed first-layer delta).
    fn add_weight_grads(&self, model: &RankerModel, fs: &FeatureSpace<'_>, grads: &mut ModelGrads) {
        let inputs = model.mlp.input_len();
        let g = &mut grads.mlp.layers[0];
        for (o, &d) in g.bias.iter().enumerate() {
            if d != 0.0 {
                let row = &mut g.weights[o * inputs..(o + 1) * inputs];
                for &(i, x) in fs.collection_entries() {
                    row[i as usize] += d * x;
                }
            }
        }
    }
}

/// Sparse pieces of a pair-wise input: a query-only part plus the parts
/// contributed by a document in the first and in the second slot.
struct PairPieces {
    len: usize,
    shared: Vec<(u32, f64)>,
    first: Vec<Vec<(u32, f64)>>,
    second: Vec<Vec<(u32, f64)>>,
}

fn pair_pieces(
    model: &RankerModel,
    fs: &FeatureSpace<'_>,
    q: &Query,
    docs: &[DocIdx],
) -> Result<PairPieces> {
    let index = fs.index;
    let len = model.mlp.input_len();
    let f = |x: f64| if fs.dense.log1p { x.ln_1p() } else { x };
    let indexed = |v: Vec<f64>, offset: usize| -> Vec<(u32, f64)> {
        v.into_iter()
            .enumerate()
            .filter(|&(_, x)| x != 0.0)
            .map(|(i, x)| ((offset + i) as u32, x))
            .collect()
    };
    match fs.kind {
        RepresentationKind::Dense => {
            // Layout: [N, avg, l1, (df_i, tf1_i)*k, l2, tf2_i*k]
            let k = fs.dense.k;
            let slots: Vec<_> = q.known_tokens().take(k).collect();
            let mut shared = vec![(0, f(index.num_docs() as f64)), (1, f(index.avg_dl()))];
            for (i, &t) in slots.iter().enumerate() {
                shared.push(((3 + 2 * i) as u32, f(index.df(t) as f64)));
            }
            let mut first = Vec::with_capacity(docs.len());
            let mut second = Vec::with_capacity(docs.len());
            for &d in docs {
                let mut a = vec![(2u32, f(index.doc_len(d) as f64))];
                let mut b = vec![((3 + 2 * k) as u32, f(index.doc_len(d) as f64))];
                for (i, &t) in slots.iter().enumerate() {
                    let tf = f(index.tf(t, d) as f64);
                    a.push(((4 + 2 * i) as u32, tf));
                    b.push(((4 + 2 * k + i) as u32, tf));
                }
                first.push(a);
                second.push(b);
            }
            Ok(PairPieces {
                len,
                shared,
                first,
                second,
            })
        }
        RepresentationKind::Sparse => {
            let v = index.vocab().len() as u32;
            let mut shared = fs.collection_entries().to_vec();
            shared.extend(
                crate::index::query_term_counts(q)
                    .into_iter()
                    .map(|(t, c)| (v + t, f(c as f64))),
            );
            let doc_part = |d: DocIdx, base: u32| -> Vec<(u32, f64)> {
                index
                    .doc_terms(d)
                    .iter()
                    .map(|&(t, tf)| (base + t, f(tf as f64)))
                    .collect()
            };
            Ok(PairPieces {
                len,
                shared,
                first: docs.iter().map(|&d| doc_part(d, 2 * v)).collect(),
                second: docs.iter().map(|&d| doc_part(d, 3 * v)).collect(),
            })
        }
        RepresentationKind::Embed => {
            let table = model
                .embedding
                .as_ref()
                .ok_or_else(|| Error::Architecture("embed model without table".into()))?;
            let m = table.dim;
            let fields = crate::represent::embed_fields(index, q, &[])?;
            let qv = table
                .compose(&fields[0], model.spec.weighting, &model.idf)?
                .vector;
            let mut first = Vec::with_capacity(docs.len());
            let mut second = Vec::with_capacity(docs.len());
            for &d in docs {
                let bag = index.doc_terms(d);
                let dv = table.compose(bag, model.spec.weighting, &model.idf)?.vector;
                first.push(indexed(dv.clone(), m));
                second.push(indexed(dv, 2 * m));
            }
            Ok(PairPieces {
                len,
                shared: indexed(qv, 0),
                first,
                second,
            })
        }
    }
}

/// Average preference of each candidate against all others.
///
/// The first layer is linear in the input, so its pre-activation is
/// computed once per document and slot and summed per pair.
pub fn rerank_pairwise(
    model: &RankerModel,
    fs: &FeatureSpace<'_>,
    q: &Query,
    candidates: &[ScoredDoc],
) -> Result<Vec<ScoredDoc>> {
    if model.arch() != Architecture::RankProb {
        return Err(Error::Architecture(
            "pair-wise re-ranking needs a rankprob model".into(),
        ));
    }
    let n = candidates.len();
    if n < 2 {
        return Ok(candidates.to_vec());
    }
    let docs: Vec<DocIdx> = candidates.iter().map(|c| c.doc).collect();
    let pieces = match pair_pieces(model, fs, q, &docs) {
        Ok(p) => p,
        Err(Error::AllOov) => return Ok(candidates.to_vec()),
        Err(e) => return Err(e),
    };
    let project = |entries: &[(u32, f64)]| {
        model.mlp.first_layer_block(
            0,
            Input::Sparse {
                len: pieces.len,
                entries,
            },
        )
    };
    let shared = project(&pieces.shared);
    let first: Vec<Vec<f64>> = pieces.first.par_iter().map(|e| project(e)).collect();
    let second: Vec<Vec<f64>> = pieces.second.par_iter().map(|e| project(e)).collect();
    let scored: Vec<(usize, ScoredDoc)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut total = 0.0;
            for j in (0..n).filter(|&j| j != i) {
                let pre: Vec<f64> = shared
                    .iter()
                    .zip(&first[i])
                    .zip(&second[j])
                    .map(|((s, a), b)| s + a + b)
                    .collect();
                total += model.mlp.infer_from_blocks(pre)[0];
            }
            (
                i,
                ScoredDoc {
                    doc: docs[i],
                    score: total / (n - 1) as f64,
                },
            )
        })
        .collect();
    Ok(sort_by_score_then_position(scored))
}

pub fn mse_loss(preds: &[f64], targets: &[f64]) -> Result<f64> {
    if preds.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if preds.len() != targets.len() {
        return Err(Error::Shape {
            expected: preds.len(),
            got: targets.len(),
        });
    }
    Ok(preds
        .iter()
        .zip(targets)
        .map(|(p, t)| (p - t).powi(2))
        .sum::<f64>()
        / preds.len() as f64)
}

fn preference_sign(s1: f64, s2: f64) -> Result<f64> {
    match s1.partial_cmp(&s2) {
        Some(Ordering::Greater) => Ok(1.0),
        Some(Ordering::Less) => Ok(-1.0),
        _ => Err(Error::InvalidArgument(format!(
            "pair with equal weak scores ({s1}, {s2})"
        ))),
    }
}

/// Mean of `max(0, margin - sign(s1 - s2) * (S1 - S2))`.
pub fn hinge_loss(score_diffs: &[f64], weak: &[(f64, f64)], margin: f64) -> Result<f64> {
    if score_diffs.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut total = 0.0;
    for (&diff, &(s1, s2)) in score_diffs.iter().zip(weak) {
        total += (margin - preference_sign(s1, s2)? * diff).max(0.0);
    }
    Ok(total / score_diffs.len() as f64)
}

fn clamp_prob(r: f64) -> f64 {
    r.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

/// Mean binary cross-entropy of predictions `probs` against targets.
pub fn cross_entropy_loss(probs: &[f64], targets: &[f64]) -> Result<f64> {
    if probs.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let total: f64 = probs
        .iter()
        .zip(targets)
        .map(|(&r, &p)| {
            let r = clamp_prob(r);
            -(p * r.ln() + (1.0 - p) * (1.0 - r).ln())
        })
        .sum();
    Ok(total / probs.len() as f64)
}

/// Training instances matching an architecture.
#[derive(Debug, Clone, PartialEq)]
pub enum Instances {
    Points(Vec<PointInstance>),
    Pairs(Vec<PairInstance>),
}

impl Instances {
    pub fn len(&self) -> usize {
        match self {
            Instances::Points(v) => v.len(),
            Instances::Pairs(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TrainSet<'a> {
    pub queries: &'a [Query],
    pub instances: &'a Instances,
}

#[derive(Debug, Clone, Copy)]
enum Item {
    Point(PointInstance),
    Pair(PairInstance),
}

impl TrainSet<'_> {
    fn item(&self, i: usize) -> Item {
        match self.instances {
            Instances::Points(v) => Item::Point(v[i]),
            Instances::Pairs(v) => Item::Pair(v[i]),
        }
    }
}

/// Loss of one instance plus `dL/d(output)` for each network evaluation.
struct Evaluated {
    loss: f64,
    parts: Vec<(Features, ModelCache, f64)>,
}

#[allow(clippy::too_many_arguments)]
fn evaluate_item<R: Rng>(
    model: &RankerModel,
    fs: &FeatureSpace<'_>,
    shared: Option<&SharedBlock>,
    queries: &[Query],
    item: Item,
    margin: f64,
    mode: Mode,
    rng: &mut R,
) -> Result<Evaluated> {
    match (model.arch(), item) {
        (Architecture::Score, Item::Point(p)) => {
            let f = fs.features(&queries[p.query], &[p.doc])?;
            let (s, c) = model.forward_shared(&f, shared, mode, rng)?;
            Ok(Evaluated {
                loss: (s - p.score).powi(2),
                parts: vec![(f, c, 2.0 * (s - p.score))],
            })
        }
        (Architecture::Rank, Item::Pair(p)) => {
            let q = &queries[p.query];
            let f1 = fs.features(q, &[p.doc1])?;
            let f2 = fs.features(q, &[p.doc2])?;
            let (a, c1) = model.forward_shared(&f1, shared, mode, rng)?;
            let (b, c2) = model.forward_shared(&f2, shared, mode, rng)?;
            let sign = preference_sign(p.s1, p.s2)?;
            let loss = (margin - sign * (a - b)).max(0.0);
            let g = if loss > 0.0 { -sign } else { 0.0 };
            Ok(Evaluated {
                loss,
                parts: vec![(f1, c1, g), (f2, c2, -g)],
            })
        }
        (Architecture::RankProb, Item::Pair(p)) => {
            let f = fs.features(&queries[p.query], &[p.doc1, p.doc2])?;
            let (r, c) = model.forward_shared(&f, shared, mode, rng)?;
            let target = pair_probability(p.s1, p.s2)?;
            let rc = clamp_prob(r);
            let loss = -(target * rc.ln() + (1.0 - target) * (1.0 - rc).ln());
            let g = if r == rc {
                -(target / r) + (1.0 - target) / (1.0 - r)
            } else {
                0.0
            };
            Ok(Evaluated {
                loss,
                parts: vec![(f, c, g)],
            })
        }
        (arch, _) => Err(Error::Architecture(format!(
            "{arch} model given the wrong instance arity"
        ))),
    }
}

/// Mean loss and (optionally) accumulated gradients over a batch of item
/// indices, computed in fixed chunks so results do not depend on threading.
#[allow(clippy::too_many_arguments)]
fn batch_pass(
    model: &RankerModel,
    fs: &FeatureSpace<'_>,
    set: TrainSet<'_>,
    batch: &[usize],
    margin: f64,
    mode: Mode,
    workspaces: Option<&mut [ModelGrads]>,
    rng_seed: (u64, u64),
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let scale = 1.0 / batch.len() as f64;
    let chunk = batch.len().div_ceil(CHUNKS);
    let shared = SharedBlock::new(model, fs)?;
    let run = |c: usize, grads: Option<&mut ModelGrads>| -> Result<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed.0);
        rng.set_stream(rng_seed.1 * CHUNKS as u64 + c as u64);
        let lo = (c * chunk).min(batch.len());
        let hi = ((c + 1) * chunk).min(batch.len());
        let mut loss = 0.0;
        let mut grads = grads;
        for &i in &batch[lo..hi] {
            let ev = evaluate_item(
                model,
                fs,
                shared.as_ref(),
                set.queries,
                set.item(i),
                margin,
                mode,
                &mut rng,
            )?;
            loss += ev.loss;
            if let Some(g) = grads.as_deref_mut() {
                for (f, cache, up) in &ev.parts {
                    if *up != 0.0 {
                        model.backward(f, cache, up * scale, g)?;
                    }
                }
            }
        }
        Ok(loss)
    };
    let losses: Vec<f64> = match workspaces {
        Some(ws) => {
            let losses = ws
                .par_iter_mut()
                .enumerate()
                .map(|(c, g)| {
                    g.clear();
                    run(c, Some(g))
                })
                .collect::<Result<Vec<f64>>>()?;
            let (head, tail) = ws.split_at_mut(1);
            for g in tail.iter() {
                head[0].add(g);
            }
            if let Some(b) = &shared {
                b.add_weight_grads(model, fs, &mut head[0]);
            }
            losses
        }
        None => (0..CHUNKS)
            .into_par_iter()
            .map(|c| run(c, None))
            .collect::<Result<Vec<f64>>>()?,
    };
    Ok(losses.iter().sum::<f64>() * scale)
}

/// Mean inference-mode loss of a whole set (or of the given batch).
pub fn dataset_loss(
    model: &RankerModel,
    fs: &FeatureSpace<'_>,
    set: TrainSet<'_>,
    margin: f64,
) -> Result<f64> {
    let all: Vec<usize> = (0..set.instances.len()).collect();
    batch_pass(model, fs, set, &all, margin, Mode::Infer, None, (0, 0))
}

/// Mean squared error of a `Score` model over point instances.
pub fn loss_score(
    model: &RankerModel,
    fs: &FeatureSpace<'_>,
    queries: &[Query],
    batch: &[PointInstance],
) -> Result<f64> {
    if model.arch() != Architecture::Score {
        return Err(Error::Architecture("loss_score needs a score model".into()));
    }
    dataset_loss(
        model,
        fs,
        TrainSet {
            queries,
            instances: &Instances::Points(batch.to_vec()),
        },
        DEFAULT_MARGIN,
    )
}

/// Mean hinge loss of a `Rank` model over pair instances.
pub fn loss_rank(
    model: &RankerModel,
    fs: &FeatureSpace<'_>,
    queries: &[Query],
    batch: &[PairInstance],
    margin: f64,
) -> Result<f64> {
    if model.arch() != Architecture::Rank {
        return Err(Error::Architecture("loss_rank needs a rank model".into()));
    }
    dataset_loss(
        model,
        fs,
        TrainSet {
            queries,
            instances: &Instances::Pairs(batch.to_vec()),
        },
        margin,
    )
}

/// Mean cross-entropy of a `RankProb` model over pair instances.
pub fn loss_rankprob(
    model: &RankerModel,
    fs: &FeatureSpace<'_>,
    queries: &[Query],
    batch: &[PairInstance],
) -> Result<f64> {
    if model.arch() != Architecture::RankProb {
        return Err(Error::Architecture(
            "loss_rankprob needs a rankprob model".into(),
        ));
    }
    dataset_loss(
        model,
        fs,
        TrainSet {
            queries,
            instances: &Instances::Pairs(batch.to_vec()),
        },
        DEFAULT_MARGIN,
    )
}

/// Loss and gradients of one batch at the given dropout mode; exposed for
/// gradient checking.
pub fn batch_gradients(
    model: &RankerModel,
    fs: &FeatureSpace<'_>,
    set: TrainSet<'_>,
    margin: f64,
    mode: Mode,
    seed: u64,
) -> Result<(f64, ModelGrads)> {
    let mut ws: Vec<ModelGrads> = (0..CHUNKS).map(|_| ModelGrads::zeros_like(model)).collect();
    let all: Vec<usize> = (0..set.instances.len()).collect();
    let loss = batch_pass(model, fs, set, &all, margin, mode, Some(&mut ws), (seed, 0))?;
    Ok((loss, ws.swap_remove(0)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub margin: f64,
    pub learning_rate: f64,
    /// Validation loss is also computed every this many steps (0: epoch end only).
    pub val_every: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 128,
            epochs: 5,
            margin: DEFAULT_MARGIN,
            learning_rate: 1e-3,
            val_every: 0,
            seed: 1,
        }
    }
}

impl TrainConfig {
    // negated comparisons also reject NaN
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::InvalidArgument(
                "batch size and epochs must be positive".into(),
            ));
        }
        if !(self.margin > 0.0) {
            return Err(Error::InvalidArgument(
                "hinge margin must be positive".into(),
            ));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidArgument(
                "learning rate must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Whether batch size and learning rate come from the tuning grids.
    pub fn on_grid(&self) -> bool {
        BATCH_SIZE_GRID.contains(&self.batch_size)
            && LEARNING_RATE_GRID.contains(&self.learning_rate)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub step: usize,
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    pub curve: Vec<CurvePoint>,
    pub best_val_loss: Option<f64>,
    pub best_step: usize,
    pub skipped: usize,
}

impl TrainReport {
    /// Mean training loss of each epoch.
    pub fn epoch_train_means(&self) -> Vec<f64> {
        let epochs = self.curve.iter().map(|c| c.epoch + 1).max().unwrap_or(0);
        (0..epochs)
            .map(|e| {
                let xs: Vec<f64> = self
                    .curve
                    .iter()
                    .filter(|c| c.epoch == e)
                    .map(|c| c.train_loss)
                    .collect();
                xs.iter().sum::<f64>() / xs.len().max(1) as f64
            })
            .collect()
    }

    pub fn last_val_loss(&self) -> Option<f64> {
        self.curve.iter().rev().find_map(|c| c.val_loss)
    }

    pub fn to_csv(&self, header: &str) -> String {
        let mut s = String::from(header);
        s.push_str("step,train_loss,val_loss\n");
        for c in &self.curve {
            let val = c.val_loss.map(|v| format!("{v:.9e}")).unwrap_or_default();
            s.push_str(&format!("{},{:.9e},{}\n", c.step, c.train_loss, val));
        }
        s
    }
}

/// Drop instances whose features cannot be built (e.g. all-OOV query).
fn usable(fs: &FeatureSpace<'_>, set: TrainSet<'_>) -> Instances {
    let ok = |q: usize, docs: &[DocIdx]| fs.features(&set.queries[q], docs).is_ok();
    match set.instances {
        Instances::Points(v) => Instances::Points(
            v.iter()
                .filter(|p| ok(p.query, &[p.doc]))
                .copied()
                .collect(),
        ),
        Instances::Pairs(v) => Instances::Pairs(
            v.iter()
                .filter(|p| ok(p.query, &[p.doc1]) && ok(p.query, &[p.doc2]))
                .copied()
                .collect(),
        ),
    }
}

fn check_arity(arch: Architecture, inst: &Instances) -> Result<()> {
    match (arch, inst) {
        (Architecture::Score, Instances::Points(_))
        | (Architecture::Rank | Architecture::RankProb, Instances::Pairs(_)) => Ok(()),
        _ => Err(Error::Architecture(format!(
            "{arch} model given the wrong instance arity"
        ))),
    }
}

/// Mini-batch Adam training. Keeps the parameters with the best validation
/// loss (or the final ones when there is no validation data).
pub fn train(
    model: &mut RankerModel,
    fs: &FeatureSpace<'_>,
    train_set: TrainSet<'_>,
    val_set: Option<TrainSet<'_>>,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    check_arity(model.arch(), train_set.instances)?;
    if let Some(v) = &val_set {
        check_arity(model.arch(), v.instances)?;
    }
    if fs.kind != model.spec.repr {
        return Err(Error::Architecture(
            "feature space and model disagree on representation".into(),
        ));
    }
    let train_items = usable(fs, train_set);
    let skipped = train_set.instances.len() - train_items.len();
    if skipped > 0 {
        info!("skipped {skipped} training instances without usable features");
    }
    if train_items.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let train_view = TrainSet {
        queries: train_set.queries,
        instances: &train_items,
    };
    let val_items = val_set.map(|v| (v.queries, usable(fs, v)));
    let val_view = val_items
        .as_ref()
        .filter(|(_, i)| !i.is_empty())
        .map(|(q, i)| TrainSet {
            queries: q,
            instances: i,
        });

    let sizes = model.param_sizes();
    let mut adam = AdamState::new(AdamConfig::with_learning_rate(cfg.learning_rate), &sizes);
    let mut workspaces: Vec<ModelGrads> =
        (0..CHUNKS).map(|_| ModelGrads::zeros_like(model)).collect();
    let mut order: Vec<usize> = (0..train_items.len()).collect();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let dropout_seed = cfg.seed ^ 0x9e37_79b9_7f4a_7c15;

    let mut report = TrainReport {
        skipped,
        ..TrainReport::default()
    };
    let mut best: Option<(f64, RankerModel)> = None;
    let mut step = 0usize;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let batches: Vec<&[usize]> = order.chunks(cfg.batch_size).collect();
        for (bi, batch) in batches.iter().enumerate() {
            let loss = batch_pass(
                model,
                fs,
                train_view,
                batch,
                cfg.margin,
                Mode::Train,
                Some(&mut workspaces),
                (dropout_seed, step as u64),
            )?;
            if !loss.is_finite() {
                return Err(Error::Diverged { step, loss });
            }
            let gslices = workspaces[0].slices(model);
            adam.step(&mut model.params_mut(), &gslices)?;
            step += 1;
            let epoch_end = bi + 1 == batches.len();
            let periodic = cfg.val_every > 0 && step.is_multiple_of(cfg.val_every);
            let val_loss = match val_view {
                Some(v) if epoch_end || periodic => {
                    let vl = dataset_loss(model, fs, v, cfg.margin)?;
                    if !vl.is_finite() {
                        return Err(Error::Diverged { step, loss: vl });
                    }
                    if best.as_ref().is_none_or(|(b, _)| vl < *b) {
                        best = Some((vl, model.clone()));
                        report.best_step = step;
                    }
                    Some(vl)
                }
                _ => None,
            };
            report.curve.push(CurvePoint {
                step,
                epoch,
                train_loss: loss,
                val_loss,
            });
        }
        debug!(
            "epoch {epoch}: mean train loss {:.6}",
            report
                .epoch_train_means()
                .last()
                .copied()
                .unwrap_or(f64::NAN)
        );
    }
    if let Some((vl, m)) = best {
        report.best_val_loss = Some(vl);
        *model = m;
    } else {
        report.best_step = step;
    }
    Ok(report)
}

/// Supervised instances from relevance judgments: every judged-relevant
/// document (label 1) is paired with one randomly sampled non-relevant
/// document (label 0), preferring non-relevant BM25 candidates.
pub fn supervised_instances(
    arch: Architecture,
    index: &InvertedIndex,
    params: &Bm25Params,
    queries: &[Query],
    qrels: &Qrels,
    depth: usize,
    seed: u64,
) -> Instances {
    let mut points = Vec::new();
    let mut pairs = Vec::new();
    for (qi, q) in queries.iter().enumerate() {
        let relevant: Vec<DocIdx> = qrels
            .relevant(&q.query_id)
            .filter_map(|d| index.doc_index(d))
            .collect();
        if relevant.is_empty() {
            debug!(
                "query {} has no judged relevant documents, skipped",
                q.query_id
            );
            continue;
        }
        let rel_set: HashSet<DocIdx> = relevant.iter().copied().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(qi as u64);
        let mut pool: Vec<DocIdx> = index
            .retrieve_top_k(params, q, depth)
            .into_iter()
            .map(|s| s.doc)
            .filter(|d| !rel_set.contains(d))
            .collect();
        pool.shuffle(&mut rng);
        if pool.len() < relevant.len() {
            let taken: HashSet<DocIdx> = pool.iter().copied().collect();
            let mut rest: Vec<DocIdx> = (0..index.num_docs() as DocIdx)
                .filter(|d| !rel_set.contains(d) && !taken.contains(d))
                .collect();
            rest.shuffle(&mut rng);
            pool.extend(rest);
        }
        for (&pos, &neg) in relevant.iter().zip(&pool) {
            match arch {
                Architecture::Score => {
                    points.push(PointInstance {
                        query: qi,
                        doc: pos,
                        score: 1.0,
                    });
                    points.push(PointInstance {
                        query: qi,
                        doc: neg,
                        score: 0.0,
                    });
                }
                _ => {
                    let p = PairInstance {
                        query: qi,
                        doc1: pos,
                        doc2: neg,
                        s1: 1.0,
                        s2: 0.0,
                    };
                    pairs.push(p);
                    pairs.push(p.swapped());
                }
            }
        }
    }
    match arch {
        Architecture::Score => Instances::Points(points),
        _ => Instances::Pairs(pairs),
    }
}

/// Continue training on supervised instances built from `qrels`, with the
/// model's own loss. On a freshly initialized model this is the
/// supervised-only baseline.
#[allow(clippy::too_many_arguments)]
pub fn fine_tune(
    model: &mut RankerModel,
    fs: &FeatureSpace<'_>,
    params: &Bm25Params,
    queries: &[Query],
    qrels: &Qrels,
    depth: usize,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    let inst = supervised_instances(
        model.arch(),
        fs.index,
        params,
        queries,
        qrels,
        depth,
        cfg.seed,
    );
    if inst.is_empty() {
        return Err(Error::InvalidArgument(
            "no supervised instances (no judged relevant documents)".into(),
        ));
    }
    train(
        model,
        fs,
        TrainSet {
            queries,
            instances: &inst,
        },
        None,
        cfg,
    )
}
