//! A small synthetic collection shared by the training examples.
#![allow(dead_code)]

use weakrank::rankers::{Instances, TrainSet};
use weakrank::synth::{self, SynthCollection, SynthConfig};
use weakrank::weaklabel::{generate_pairwise, generate_pointwise};
use weakrank::{corpus, Architecture, Bm25Params, Corpus, InvertedIndex, Query, Tokenizer};

pub struct Toy {
    pub data: SynthCollection,
    pub corpus: Corpus,
    pub index: InvertedIndex,
    pub train: Vec<Query>,
    pub val: Vec<Query>,
    pub test: Vec<Query>,
    pub supervised: Vec<Query>,
}

pub fn toy() -> weakrank::Result<Toy> {
    let data = synth::generate(&SynthConfig::default())?;
    let tokenizer = Tokenizer::new();
    let corpus = Corpus::build(data.docs.clone(), tokenizer.clone())?;
    let index = InvertedIndex::build(&corpus)?;
    let mut held_out = data.test_queries.clone();
    held_out.extend(data.supervised_queries.iter().cloned());
    let kept =
        corpus::filter_training_queries(&data.train_queries, &index, &tokenizer, 10, &held_out);
    let queries: Vec<Query> = kept.into_iter().map(|(_, q)| q).collect();
    let (train, val) = corpus::split_train_validation(&queries, 0.9, 1)?;
    let test = data.test_queries.iter().map(|r| corpus.query(r)).collect();
    let supervised = data
        .supervised_queries
        .iter()
        .map(|r| corpus.query(r))
        .collect();
    Ok(Toy {
        data,
        corpus,
        index,
        train,
        val,
        test,
        supervised,
    })
}

/// BM25 weak labels for `queries` in the form `arch` trains on.
pub fn weak_instances(
    arch: Architecture,
    index: &InvertedIndex,
    queries: &[Query],
) -> weakrank::Result<Instances> {
    let params = Bm25Params::default();
    Ok(match arch {
        Architecture::Score => Instances::Points(generate_pointwise(index, &params, queries, 100)?),
        _ => Instances::Pairs(generate_pairwise(index, &params, queries, 100, 25, 2)?),
    })
}

pub fn set<'a>(queries: &'a [Query], instances: &'a Instances) -> TrainSet<'a> {
    TrainSet { queries, instances }
}
