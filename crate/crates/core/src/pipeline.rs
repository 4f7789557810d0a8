//! Config-driven pipeline: index, generate, train, rerank, evaluate,
//! analyze and synth stages.
//!
//! The config is a flat `key = value` file with `#` comments. Relative paths
//! are resolved against the config file's directory. Every output starts with
//! a `#` header naming the tool version, the stage, a hash of the config and
//! the seed, and is written to a temporary name and renamed on success.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::{info, warn};
use sha2::{Digest, Sha256};

use crate::checkpoint;
use crate::corpus::{self, Corpus, Query, RawRecord, Tokenizer};
use crate::error::{Error, Result};
use crate::eval::{self, MetricReport, Qrels, Run, METRIC_NAMES};
use crate::fsutil;
use crate::index::{Bm25Params, InvertedIndex, RERANK_DEPTH, TRAIN_DEPTH};
use crate::nn::Weighting;
use crate::rankers::{
    self, Architecture, Instances, ModelSpec, RankerModel, TrainConfig, TrainReport, TrainSet,
};
use crate::represent::{self, DenseOptions, EmbeddingSource, FeatureSpace, RepresentationKind};
use crate::synth::{self, SynthConfig};
use crate::weaklabel;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Config,
    Index,
    Generate,
    Train,
    Rerank,
    Evaluate,
    Analyze,
    Synth,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Config => "config",
            Stage::Index => "index",
            Stage::Generate => "generate",
            Stage::Train => "train",
            Stage::Rerank => "rerank",
            Stage::Evaluate => "evaluate",
            Stage::Analyze => "analyze",
            Stage::Synth => "synth",
        }
    }

    pub fn exit_code(self) -> i32 {
        match self {
            Stage::Config => 2,
            Stage::Index => 10,
            Stage::Generate => 11,
            Stage::Train => 12,
            Stage::Rerank => 13,
            Stage::Evaluate => 14,
            Stage::Analyze => 15,
            Stage::Synth => 16,
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{stage} stage failed: {source}")]
pub struct StageError {
    pub stage: Stage,
    #[source]
    pub source: Error,
}

impl StageError {
    pub fn exit_code(&self) -> i32 {
        self.stage.exit_code()
    }
}

pub type StageResult<T> = std::result::Result<T, StageError>;

fn in_stage<T>(stage: Stage, r: Result<T>) -> StageResult<T> {
    r.map_err(|source| StageError { stage, source })
}

/// What `train` does with the weak and supervised data.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainMode {
    /// Weak labels only.
    Weak,
    /// Relevance judgments only, from a fresh model.
    Supervised,
    /// Weak labels, then fine-tuning on relevance judgments.
    WeakFinetune,
}

impl FromStr for TrainMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "weak" => Ok(Self::Weak),
            "supervised" => Ok(Self::Supervised),
            "weak+finetune" => Ok(Self::WeakFinetune),
            _ => Err(Error::Config(format!("unknown train.mode `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub corpus: PathBuf,
    pub train_queries: PathBuf,
    pub test_queries: PathBuf,
    pub qrels: PathBuf,
    pub supervised_queries: Option<PathBuf>,
    pub supervised_qrels: Option<PathBuf>,
    pub work_dir: PathBuf,
    pub stopwords: Option<PathBuf>,
    pub stemming: bool,
    pub pretrained_embeddings: Option<PathBuf>,
    pub seed: u64,
    pub bm25: Bm25Params,
    pub min_hits: usize,
    pub train_fraction: f64,
    pub train_depth: usize,
    pub pairs_per_query: usize,
    pub rerank_depth: usize,
    pub model: ModelSpec,
    pub model_tag: Option<String>,
    pub train: TrainConfig,
    pub mode: TrainMode,
    pub finetune: TrainConfig,
    pub finetune_depth: usize,
    pub comparisons: Option<usize>,
    pub synth: SynthConfig,
    /// Effective `key = value` entries, used for the config hash.
    entries: BTreeMap<String, String>,
}

fn parse_entries(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", i + 1)))?;
        let k = k.trim().to_string();
        if out.insert(k.clone(), v.trim().to_string()).is_some() {
            return Err(Error::Config(format!(
                "line {}: duplicate key `{k}`",
                i + 1
            )));
        }
    }
    Ok(out)
}

struct Fields {
    map: BTreeMap<String, String>,
    base: PathBuf,
}

impl Fields {
    fn get<T: FromStr>(&mut self, key: &str, default: T) -> Result<T> {
        match self.map.remove(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::Config(format!("bad value `{v}` for `{key}`"))),
        }
    }

    fn with<T>(&mut self, key: &str, default: T, f: impl Fn(&str) -> Result<T>) -> Result<T> {
        match self.map.remove(key) {
            None => Ok(default),
            Some(v) => f(&v).map_err(|e| Error::Config(format!("`{key}`: {e}"))),
        }
    }

    fn path(&mut self, key: &str) -> Result<PathBuf> {
        self.opt_path(key)?
            .ok_or_else(|| Error::Config(format!("missing required key `{key}`")))
    }

    fn opt_path(&mut self, key: &str) -> Result<Option<PathBuf>> {
        Ok(self
            .map
            .remove(key)
            .filter(|v| !v.is_empty())
            .map(|v| self.base.join(v)))
    }
}

fn parse_hidden(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|x| {
            x.trim()
                .parse::<usize>()
                .ok()
                .filter(|&n| n > 0)
                .ok_or_else(|| Error::Config(format!("bad hidden size `{x}`")))
        })
        .collect()
}

impl PipelineConfig {
    /// Parse config text; `base` anchors relative paths. `overrides` replace
    /// or add entries before parsing.
    pub fn parse(text: &str, base: &Path, overrides: &[(String, String)]) -> Result<Self> {
        let mut entries = parse_entries(text)?;
        for (k, v) in overrides {
            entries.insert(k.clone(), v.clone());
        }
        let mut f = Fields {
            map: entries.clone(),
            base: base.to_path_buf(),
        };
        let d_bm25 = Bm25Params::default();
        let d_train = TrainConfig::default();
        let d_synth = SynthConfig::default();
        let d_dense = DenseOptions::default();
        let arch: Architecture = f.with("model.arch", Architecture::RankProb, str::parse)?;
        let repr: RepresentationKind =
            f.with("model.repr", RepresentationKind::Embed, str::parse)?;
        let seed: u64 = f.get("seed", 1)?;
        let model = ModelSpec {
            arch,
            repr,
            dense: DenseOptions {
                k: f.get("model.dense_k", d_dense.k)?,
                log1p: f.get("model.log1p", d_dense.log1p)?,
            },
            hidden: f.with("model.hidden", vec![128, 128], parse_hidden)?,
            embedding_dim: f.get("model.embedding_dim", 100)?,
            weighting: f.with(
                "model.weighting",
                Weighting::Learned,
                represent::parse_weighting,
            )?,
            embedding_source: f.with("model.embeddings", EmbeddingSource::Learned, str::parse)?,
            dropout: f.get("model.dropout", 0.0)?,
        };
        let train = TrainConfig {
            batch_size: f.get("train.batch_size", d_train.batch_size)?,
            epochs: f.get("train.epochs", d_train.epochs)?,
            margin: f.get("train.margin", d_train.margin)?,
            learning_rate: f.get("train.learning_rate", d_train.learning_rate)?,
            val_every: f.get("train.val_every", d_train.val_every)?,
            seed: seed.wrapping_add(3),
        };
        let finetune = TrainConfig {
            batch_size: f.get("finetune.batch_size", 32)?,
            epochs: f.get("finetune.epochs", 10)?,
            margin: train.margin,
            learning_rate: f.get("finetune.learning_rate", 1e-4)?,
            val_every: 0,
            seed: seed.wrapping_add(4),
        };
        let synth = SynthConfig {
            docs: f.get("synth.docs", d_synth.docs)?,
            train_queries: f.get("synth.train_queries", d_synth.train_queries)?,
            test_queries: f.get("synth.test_queries", d_synth.test_queries)?,
            supervised_queries: f.get("synth.supervised_queries", d_synth.supervised_queries)?,
            topics: f.get("synth.topics", d_synth.topics)?,
            concepts_per_topic: f.get("synth.concepts_per_topic", d_synth.concepts_per_topic)?,
            focus_concepts: f.get("synth.focus_concepts", d_synth.focus_concepts)?,
            background_words: f.get("synth.background_words", d_synth.background_words)?,
            topical_rate: f.get("synth.topical_rate", d_synth.topical_rate)?,
            noise_rate: f.get("synth.noise_rate", d_synth.noise_rate)?,
            preferred_form_rate: f.get("synth.preferred_form_rate", d_synth.preferred_form_rate)?,
            shared_form_rate: f.get("synth.shared_form_rate", d_synth.shared_form_rate)?,
            min_len: f.get("synth.min_len", d_synth.min_len)?,
            max_len: f.get("synth.max_len", d_synth.max_len)?,
            url_query_rate: f.get("synth.url_query_rate", d_synth.url_query_rate)?,
            seed: seed.wrapping_add(5),
        };
        let cfg = Self {
            corpus: f.path("corpus")?,
            train_queries: f.path("train_queries")?,
            test_queries: f.path("test_queries")?,
            qrels: f.path("qrels")?,
            supervised_queries: f.opt_path("supervised_queries")?,
            supervised_qrels: f.opt_path("supervised_qrels")?,
            work_dir: f.path("work_dir")?,
            stopwords: f.opt_path("stopwords")?,
            stemming: f.get("stemming", false)?,
            pretrained_embeddings: f.opt_path("pretrained_embeddings")?,
            seed,
            bm25: Bm25Params {
                k1: f.get("bm25.k1", d_bm25.k1)?,
                b: f.get("bm25.b", d_bm25.b)?,
                k3: f.get("bm25.k3", d_bm25.k3)?,
            },
            min_hits: f.get("queries.min_hits", corpus::DEFAULT_MIN_HITS)?,
            train_fraction: f.get("queries.train_fraction", 0.9)?,
            train_depth: f.get("generate.depth", TRAIN_DEPTH)?,
            pairs_per_query: f.get("generate.pairs_per_query", 25)?,
            rerank_depth: f.get("rerank.depth", RERANK_DEPTH)?,
            model,
            model_tag: f.map.remove("model.tag").filter(|t| !t.is_empty()),
            train,
            mode: f.get("train.mode", TrainMode::Weak)?,
            finetune,
            finetune_depth: f.get("finetune.depth", 100)?,
            comparisons: f.with("eval.comparisons", None, |s| {
                s.parse()
                    .map(Some)
                    .map_err(|_| Error::Config(format!("bad count `{s}`")))
            })?,
            synth,
            entries,
        };
        if let Some(k) = f.map.keys().next() {
            return Err(Error::Config(format!("unknown key `{k}`")));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[(String, String)]) -> Result<Self> {
        let text = fsutil::read_string(path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, &base, overrides)
    }

    pub fn validate(&self) -> Result<()> {
        let cfg_err = |e: Error| Error::Config(e.to_string());
        self.bm25.validate().map_err(cfg_err)?;
        self.train.validate().map_err(cfg_err)?;
        self.finetune.validate().map_err(cfg_err)?;
        self.synth.validate()?;
        if self.train_depth == 0
            || self.rerank_depth == 0
            || self.pairs_per_query == 0
            || self.finetune_depth == 0
        {
            return Err(Error::Config(
                "depths and pairs_per_query must be positive".into(),
            ));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config(
                "queries.train_fraction must be in (0, 1)".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.model.dropout) {
            return Err(Error::Config("model.dropout must be in [0, 1)".into()));
        }
        if self.model.embedding_source.needs_file() && self.pretrained_embeddings.is_none() {
            return Err(Error::Config(
                "pretrained embeddings selected but `pretrained_embeddings` is unset".into(),
            ));
        }
        if !self.train.on_grid() {
            warn!(
                "batch size {} / learning rate {} are outside the usual tuning grid",
                self.train.batch_size, self.train.learning_rate
            );
        }
        Ok(())
    }

    /// First 16 hex digits of the SHA-256 of the effective entries.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in &self.entries {
            h.update(k.as_bytes());
            h.update(b"=");
            h.update(v.as_bytes());
            h.update(b"\n");
        }
        hex::encode(h.finalize())[..16].to_string()
    }

    pub fn header(&self, stage: Stage) -> String {
        format!(
            "# weakrank {VERSION} stage={stage} config={} seed={}\n",
            self.hash(),
            self.seed
        )
    }

    pub fn tokenizer(&self) -> Result<Tokenizer> {
        let mut t = Tokenizer::new().with_stemming(self.stemming);
        if let Some(p) = &self.stopwords {
            t = t.with_stopwords(corpus::read_stopwords(p)?);
        }
        Ok(t)
    }

    pub fn model_tag(&self) -> String {
        self.model_tag.clone().unwrap_or_else(|| {
            let base = format!("{}-{}", self.model.arch, self.model.repr);
            match self.mode {
                TrainMode::Weak => base,
                TrainMode::Supervised => format!("{base}-supervised"),
                TrainMode::WeakFinetune => format!("{base}-finetuned"),
            }
        })
    }

    pub fn index_path(&self) -> PathBuf {
        self.work_dir.join("index.wrix")
    }

    pub fn weak_file(&self, what: &str, split: &str) -> PathBuf {
        self.work_dir.join(format!("weak_{what}_{split}.tsv"))
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.work_dir
            .join(format!("model-{}.ckpt", self.model_tag()))
    }

    pub fn loss_curve_path(&self) -> PathBuf {
        self.work_dir.join(format!("loss-{}.csv", self.model_tag()))
    }

    pub fn run_path(&self) -> PathBuf {
        self.work_dir.join(format!("run-{}.txt", self.model_tag()))
    }

    pub fn bm25_run_path(&self) -> PathBuf {
        self.work_dir.join("run-bm25.txt")
    }

    /// Seed for the train/validation query split.
    pub fn split_seed(&self) -> u64 {
        self.seed
    }

    /// Seed for pair sampling.
    pub fn pair_seed(&self) -> u64 {
        self.seed.wrapping_add(1)
    }

    /// Seed for parameter initialization.
    pub fn init_seed(&self) -> u64 {
        self.seed.wrapping_add(2)
    }
}

fn require(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::Config(format!("missing input {}", path.display())))
    }
}

fn write(path: &Path, text: &str) -> Result<PathBuf> {
    fsutil::write_atomic(path, text.as_bytes())?;
    info!("wrote {}", path.display());
    Ok(path.to_path_buf())
}

pub fn load_index(cfg: &PipelineConfig) -> Result<InvertedIndex> {
    let p = cfg.index_path();
    require(&p)?;
    Ok(InvertedIndex::load(&p)?.0)
}

pub fn load_queries(
    cfg: &PipelineConfig,
    index: &InvertedIndex,
    path: &Path,
) -> Result<Vec<Query>> {
    require(path)?;
    let tok = cfg.tokenizer()?;
    Ok(corpus::read_tsv_records(path)?
        .iter()
        .map(|r| corpus::make_query(index.vocab(), &tok, r))
        .collect())
}

/// Build and save the inverted index.
pub fn cmd_index(cfg: &PipelineConfig) -> StageResult<PathBuf> {
    in_stage(
        Stage::Index,
        (|| {
            require(&cfg.corpus)?;
            let corpus = Corpus::load(&cfg.corpus, cfg.tokenizer()?)?;
            let index = InvertedIndex::build(&corpus)?;
            info!(
                "indexed {} documents, {} terms",
                index.num_docs(),
                index.vocab().len()
            );
            let p = cfg.index_path();
            index.save(&p, &cfg.header(Stage::Index))?;
            Ok(p)
        })(),
    )
}

/// Filter and split the training log, then write point-wise and pair-wise
/// weak labels for both splits.
pub fn cmd_generate(cfg: &PipelineConfig) -> StageResult<Vec<PathBuf>> {
    in_stage(
        Stage::Generate,
        (|| {
            let index = load_index(cfg)?;
            require(&cfg.train_queries)?;
            require(&cfg.test_queries)?;
            let raw = corpus::read_tsv_records(&cfg.train_queries)?;
            let mut held_out = corpus::read_tsv_records(&cfg.test_queries)?;
            if let Some(p) = &cfg.supervised_queries {
                require(p)?;
                held_out.extend(corpus::read_tsv_records(p)?);
            }
            let kept = corpus::filter_training_queries(
                &raw,
                &index,
                &cfg.tokenizer()?,
                cfg.min_hits,
                &held_out,
            );
            info!("kept {} of {} training queries", kept.len(), raw.len());
            let (train, val) =
                corpus::split_train_validation(&kept, cfg.train_fraction, cfg.split_seed())?;
            let header = cfg.header(Stage::Generate);
            let mut out = Vec::new();
            for (split, part) in [("train", &train), ("val", &val)] {
                let records: Vec<RawRecord> = part.iter().map(|(r, _)| r.clone()).collect();
                let queries: Vec<Query> = part.iter().map(|(_, q)| q.clone()).collect();
                out.push(write(
                    &cfg.weak_file("queries", split),
                    &synth::records_tsv(&header, &records),
                )?);
                let points =
                    weaklabel::generate_pointwise(&index, &cfg.bm25, &queries, cfg.train_depth)?;
                out.push(write(
                    &cfg.weak_file("points", split),
                    &weaklabel::pointwise_tsv(&header, &index, &queries, &points),
                )?);
                let pairs = weaklabel::generate_pairwise(
                    &index,
                    &cfg.bm25,
                    &queries,
                    cfg.train_depth,
                    cfg.pairs_per_query,
                    cfg.pair_seed(),
                )?;
                info!(
                    "{split}: {} queries, {} points, {} pairs",
                    queries.len(),
                    points.len(),
                    pairs.len()
                );
                out.push(write(
                    &cfg.weak_file("pairs", split),
                    &weaklabel::pairwise_tsv(&header, &index, &queries, &pairs),
                )?);
            }
            Ok(out)
        })(),
    )
}

/// Weak-label training data of one split in the model's arity.
pub fn load_weak_split(
    cfg: &PipelineConfig,
    index: &InvertedIndex,
    split: &str,
) -> Result<(Vec<Query>, Instances)> {
    let queries = load_queries(cfg, index, &cfg.weak_file("queries", split))?;
    let instances = if cfg.model.arch.is_pairwise() {
        let p = cfg.weak_file("pairs", split);
        require(&p)?;
        Instances::Pairs(weaklabel::read_pairwise(&p, index, &queries)?)
    } else {
        let p = cfg.weak_file("points", split);
        require(&p)?;
        Instances::Points(weaklabel::read_pointwise(&p, index, &queries)?)
    };
    Ok((queries, instances))
}

/// Fresh model for the configured spec, with pretrained vectors if asked.
pub fn init_model(cfg: &PipelineConfig, index: &InvertedIndex) -> Result<RankerModel> {
    let mut model = RankerModel::new(cfg.model.clone(), index, cfg.init_seed())?;
    if cfg.model.embedding_source.needs_file() {
        let path = cfg
            .pretrained_embeddings
            .as_ref()
            .ok_or_else(|| Error::Config("`pretrained_embeddings` is unset".into()))?;
        require(path)?;
        if let Some(table) = model.embedding.as_mut() {
            let n = represent::load_pretrained(path, index, table)?;
            info!("loaded {n} pretrained vectors");
        }
    }
    Ok(model)
}

fn supervised_data(cfg: &PipelineConfig, index: &InvertedIndex) -> Result<(Vec<Query>, Qrels)> {
    let (Some(qp), Some(rp)) = (&cfg.supervised_queries, &cfg.supervised_qrels) else {
        return Err(Error::Config(
            "supervised training needs `supervised_queries` and `supervised_qrels`".into(),
        ));
    };
    require(rp)?;
    Ok((load_queries(cfg, index, qp)?, Qrels::load(rp)?))
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: PathBuf,
    pub loss_curve: PathBuf,
    pub weak: Option<TrainReport>,
    pub finetune: Option<TrainReport>,
}

/// Train per `train.mode` and save the checkpoint and loss curve(s).
pub fn cmd_train(cfg: &PipelineConfig) -> StageResult<TrainOutcome> {
    in_stage(
        Stage::Train,
        (|| {
            let index = load_index(cfg)?;
            let fs = FeatureSpace::new(&index, cfg.model.repr, cfg.model.dense);
            let mut model = init_model(cfg, &index)?;
            let header = cfg.header(Stage::Train);
            let mut weak = None;
            if cfg.mode != TrainMode::Supervised {
                let (tq, ti) = load_weak_split(cfg, &index, "train")?;
                let (vq, vi) = load_weak_split(cfg, &index, "val")?;
                let report = rankers::train(
                    &mut model,
                    &fs,
                    TrainSet {
                        queries: &tq,
                        instances: &ti,
                    },
                    Some(TrainSet {
                        queries: &vq,
                        instances: &vi,
                    }),
                    &cfg.train,
                )?;
                write(&cfg.loss_curve_path(), &report.to_csv(&header))?;
                weak = Some(report);
            }
            let mut finetune = None;
            if cfg.mode != TrainMode::Weak {
                let (queries, qrels) = supervised_data(cfg, &index)?;
                let report = rankers::fine_tune(
                    &mut model,
                    &fs,
                    &cfg.bm25,
                    &queries,
                    &qrels,
                    cfg.finetune_depth,
                    &cfg.finetune,
                )?;
                let path = if weak.is_some() {
                    cfg.work_dir
                        .join(format!("loss-{}-finetune.csv", cfg.model_tag()))
                } else {
                    cfg.loss_curve_path()
                };
                write(&path, &report.to_csv(&header))?;
                finetune = Some(report);
            }
            let ckpt = cfg.checkpoint_path();
            checkpoint::save(&model, &header, &ckpt)?;
            Ok(TrainOutcome {
                checkpoint: ckpt,
                loss_curve: cfg.loss_curve_path(),
                weak,
                finetune,
            })
        })(),
    )
}

/// BM25 top-`depth` run and the model's re-ranking of it, per test query.
pub fn rerank_runs(
    model: &RankerModel,
    index: &InvertedIndex,
    params: &Bm25Params,
    queries: &[Query],
    depth: usize,
    tag: &str,
) -> Result<(Run, Run)> {
    let fs = FeatureSpace::new(index, model.spec.repr, model.spec.dense);
    let mut bm25 = Run::new("bm25");
    let mut run = Run::new(tag);
    let named = |list: &[crate::index::ScoredDoc]| -> Vec<(String, f64)> {
        list.iter()
            .map(|s| (index.doc_id(s.doc).to_string(), s.score))
            .collect()
    };
    for q in queries {
        let cands = index.retrieve_top_k(params, q, depth);
        let reranked = model.rerank(&fs, q, &cands)?;
        bm25.insert(&q.query_id, named(&cands));
        run.insert(&q.query_id, named(&reranked));
    }
    Ok((bm25, run))
}

/// Re-rank the test queries; writes the model run and the BM25 run.
pub fn cmd_rerank(
    cfg: &PipelineConfig,
    checkpoint_path: Option<&Path>,
) -> StageResult<(PathBuf, PathBuf)> {
    in_stage(
        Stage::Rerank,
        (|| {
            let index = load_index(cfg)?;
            let ckpt = checkpoint_path
                .map(Path::to_path_buf)
                .unwrap_or_else(|| cfg.checkpoint_path());
            require(&ckpt)?;
            let (model, _) = checkpoint::load(&ckpt)?;
            if model.vocab_size != index.vocab().len() {
                return Err(Error::Shape {
                    expected: index.vocab().len(),
                    got: model.vocab_size,
                });
            }
            let queries = load_queries(cfg, &index, &cfg.test_queries)?;
            let (bm25, run) = rerank_runs(
                &model,
                &index,
                &cfg.bm25,
                &queries,
                cfg.rerank_depth,
                &cfg.model_tag(),
            )?;
            let header = cfg.header(Stage::Rerank);
            let run_path = write(&cfg.run_path(), &run.to_trec(&header))?;
            let bm25_path = write(&cfg.bm25_run_path(), &bm25.to_trec(&header))?;
            Ok((run_path, bm25_path))
        })(),
    )
}

/// One row of the significance table.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub run: String,
    pub metric: &'static str,
    pub value: f64,
    pub baseline: f64,
    pub test: eval::TTest,
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub reports: Vec<(String, MetricReport)>,
    pub comparisons: Vec<Comparison>,
    pub files: Vec<PathBuf>,
}

/// Compare every run against the first (the baseline) on each metric.
pub fn compare_runs(
    reports: &[(String, MetricReport)],
    comparisons: Option<usize>,
) -> Result<Vec<Comparison>> {
    let Some((_, base)) = reports.first() else {
        return Ok(Vec::new());
    };
    let num = comparisons.unwrap_or(reports.len().saturating_sub(1).max(1));
    let mut out = Vec::new();
    for (name, rep) in &reports[1..] {
        for (m, metric) in METRIC_NAMES.iter().enumerate() {
            out.push(Comparison {
                run: name.clone(),
                metric,
                value: rep.mean(m),
                baseline: base.mean(m),
                test: eval::paired_ttest(&rep.vector(m), &base.vector(m), num)?,
            });
        }
    }
    Ok(out)
}

pub fn significance_tsv(header: &str, baseline: &str, rows: &[Comparison]) -> String {
    let mut s = String::from(header);
    s.push_str(&format!("# baseline: {baseline}\n"));
    s.push_str("run\tmetric\tvalue\tbaseline\tt\tp_value\tthreshold\tsignificant\n");
    for r in rows {
        s.push_str(&format!(
            "{}\t{}\t{:.6}\t{:.6}\t{:.4}\t{:.6e}\t{:.6e}\t{}\n",
            r.run,
            r.metric,
            r.value,
            r.baseline,
            r.test.t,
            r.test.p_value,
            r.test.threshold,
            r.test.significant
        ));
    }
    s
}

fn run_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().trim_start_matches("run-").to_string())
        .unwrap_or_else(|| "run".into())
}

/// Evaluate run files (default: BM25 run then the model run); the first run
/// is the baseline of the significance table.
pub fn cmd_evaluate(cfg: &PipelineConfig, runs: &[PathBuf]) -> StageResult<Evaluation> {
    in_stage(
        Stage::Evaluate,
        (|| {
            require(&cfg.qrels)?;
            let qrels = Qrels::load(&cfg.qrels)?;
            let runs: Vec<PathBuf> = if runs.is_empty() {
                vec![cfg.bm25_run_path(), cfg.run_path()]
            } else {
                runs.to_vec()
            };
            let header = cfg.header(Stage::Evaluate);
            let mut reports = Vec::new();
            let mut files = Vec::new();
            for p in &runs {
                require(p)?;
                let name = run_name(p);
                let rep = eval::evaluate(&Run::load(p)?, &qrels);
                info!(
                    "{name}: MAP {:.4} P@20 {:.4} nDCG@20 {:.4}",
                    rep.map(),
                    rep.p20(),
                    rep.ndcg20()
                );
                files.push(write(
                    &cfg.work_dir.join(format!("metrics-{name}.tsv")),
                    &rep.to_tsv(&header),
                )?);
                reports.push((name, rep));
            }
            let comparisons = compare_runs(&reports, cfg.comparisons)?;
            files.push(write(
                &cfg.work_dir.join("significance.tsv"),
                &significance_tsv(&header, &reports[0].0, &comparisons),
            )?);
            Ok(Evaluation {
                reports,
                comparisons,
                files,
            })
        })(),
    )
}

/// Learned-weight vs idf scatter data and its Pearson correlation.
pub fn cmd_analyze(
    cfg: &PipelineConfig,
    checkpoint_path: Option<&Path>,
) -> StageResult<(PathBuf, f64)> {
    in_stage(
        Stage::Analyze,
        (|| {
            let index = load_index(cfg)?;
            let ckpt = checkpoint_path
                .map(Path::to_path_buf)
                .unwrap_or_else(|| cfg.checkpoint_path());
            require(&ckpt)?;
            let (model, _) = checkpoint::load(&ckpt)?;
            let table = match (&model.embedding, model.spec.weighting) {
                (Some(t), Weighting::Learned) => t,
                _ => {
                    return Err(Error::Architecture(
                        "weight analysis needs an embedding model with learned weighting".into(),
                    ))
                }
            };
            let points = eval::weight_idf_points(table, &index);
            let r = eval::weight_idf_correlation(table, &index)?;
            let header = cfg.header(Stage::Analyze);
            let name = format!("weights-{}", cfg.model_tag());
            let csv = write(
                &cfg.work_dir.join(format!("{name}.csv")),
                &eval::weight_idf_csv(&header, &points),
            )?;
            write(
                &cfg.work_dir.join(format!("{name}.txt")),
                &format!("{header}terms\t{}\npearson_r\t{r:.6}\n", points.len()),
            )?;
            info!("pearson r between learned weights and idf: {r:.4}");
            Ok((csv, r))
        })(),
    )
}

/// Generate the synthetic collection at the configured input paths.
pub fn cmd_synth(cfg: &PipelineConfig) -> StageResult<Vec<PathBuf>> {
    in_stage(
        Stage::Synth,
        (|| {
            let c = synth::generate(&cfg.synth)?;
            let header = cfg.header(Stage::Synth);
            let mut out = vec![
                write(&cfg.corpus, &synth::records_tsv(&header, &c.docs))?,
                write(
                    &cfg.train_queries,
                    &synth::records_tsv(&header, &c.train_queries),
                )?,
                write(
                    &cfg.test_queries,
                    &synth::records_tsv(&header, &c.test_queries),
                )?,
                write(&cfg.qrels, &c.test_qrels.to_trec(&header))?,
            ];
            if let Some(p) = &cfg.supervised_queries {
                out.push(write(
                    p,
                    &synth::records_tsv(&header, &c.supervised_queries),
                )?);
            }
            if let Some(p) = &cfg.supervised_qrels {
                out.push(write(p, &c.supervised_qrels.to_trec(&header))?);
            }
            let syn = cfg.corpus.with_file_name("synonyms.tsv");
            out.push(write(&syn, &c.synonyms_tsv(&header))?);
            Ok(out)
        })(),
    )
}

/// index, generate, train, rerank and evaluate in sequence.
pub fn run_all(cfg: &PipelineConfig) -> StageResult<Evaluation> {
    cmd_index(cfg)?;
    cmd_generate(cfg)?;
    cmd_train(cfg)?;
    cmd_rerank(cfg, None)?;
    cmd_evaluate(cfg, &[])
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str =
        "corpus = data/c.tsv\ntrain_queries = data/w.tsv\ntest_queries = data/t.tsv\n\
                           qrels = data/q.txt\nwork_dir = work # trailing comment\n";

    #[test]
    fn parse_defaults_and_paths() {
        let cfg = PipelineConfig::parse(MINIMAL, Path::new("/base"), &[]).unwrap();
        assert_eq!(cfg.corpus, Path::new("/base/data/c.tsv"));
        assert_eq!(cfg.work_dir, Path::new("/base/work"));
        assert_eq!(cfg.rerank_depth, 2000);
        assert_eq!(cfg.train_depth, 1000);
        assert_eq!(cfg.bm25, Bm25Params::default());
        assert_eq!(cfg.model.arch, Architecture::RankProb);
        assert_eq!(cfg.train.margin, 1.0);
        assert_eq!(cfg.model_tag(), "rankprob-embed");
    }

    #[test]
    fn overrides_change_hash_and_fields() {
        let a = PipelineConfig::parse(MINIMAL, Path::new("."), &[]).unwrap();
        let b = PipelineConfig::parse(
            MINIMAL,
            Path::new("."),
            &[
                ("model.arch".into(), "score".into()),
                ("seed".into(), "9".into()),
            ],
        )
        .unwrap();
        assert_eq!(b.model.arch, Architecture::Score);
        assert_eq!(b.seed, 9);
        assert_ne!(a.hash(), b.hash());
        assert_eq!(
            a.hash(),
            PipelineConfig::parse(MINIMAL, Path::new("/elsewhere"), &[])
                .unwrap()
                .hash()
        );
        assert!(b.header(Stage::Train).starts_with("# weakrank "));
        assert!(b.header(Stage::Train).contains("seed=9"));
    }

    #[test]
    fn config_errors() {
        let err = |extra: &str| {
            PipelineConfig::parse(&format!("{MINIMAL}{extra}\n"), Path::new("."), &[]).unwrap_err()
        };
        assert!(matches!(err("bogus = 1"), Error::Config(_)));
        assert!(matches!(err("bm25.k1 = -1"), Error::Config(_)));
        assert!(matches!(err("model.arch = listwise"), Error::Config(_)));
        assert!(matches!(err("train.margin = 0"), Error::Config(_)));
        assert!(matches!(err("work_dir = again"), Error::Config(_)));
        assert!(matches!(
            err("model.embeddings = pretrained-frozen"),
            Error::Config(_)
        ));
        assert!(matches!(
            PipelineConfig::parse("corpus = x\n", Path::new("."), &[]).unwrap_err(),
            Error::Config(_)
        ));
    }

    #[test]
    fn missing_inputs_map_to_stage_codes() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = PipelineConfig::parse(MINIMAL, dir.path(), &[]).unwrap();
        let e = cmd_index(&cfg).unwrap_err();
        assert_eq!(e.exit_code(), 10);
        assert_eq!(cmd_generate(&cfg).unwrap_err().exit_code(), 11);
        assert_eq!(cmd_train(&cfg).unwrap_err().exit_code(), 12);
        assert_eq!(cmd_rerank(&cfg, None).unwrap_err().exit_code(), 13);
        assert_eq!(cmd_evaluate(&cfg, &[]).unwrap_err().exit_code(), 14);
        assert_eq!(cmd_analyze(&cfg, None).unwrap_err().exit_code(), 15);
        assert!(!dir.path().join("work").join("index.wrix").exists());
    }
}
