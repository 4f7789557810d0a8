//! Turn a query log into weakly labeled training instances with BM25.
//!
//! cargo run --example weak_labels

use weakrank::synth::{self, SynthConfig};
use weakrank::weaklabel::{generate_pairwise, generate_pointwise, pairwise_tsv, pointwise_tsv};
use weakrank::{corpus, Bm25Params, Corpus, InvertedIndex, Query, Tokenizer};

fn main() -> weakrank::Result<()> {
    let data = synth::generate(&SynthConfig {
        docs: 300,
        train_queries: 40,
        topics: 6,
        concepts_per_topic: 5,
        background_words: 150,
        ..SynthConfig::default()
    })?;
    let tokenizer = Tokenizer::new();
    let corpus = Corpus::build(data.docs.clone(), tokenizer.clone())?;
    let index = InvertedIndex::build(&corpus)?;

    // drop URL-like queries, duplicates, queries with too few hits and
    // anything that also appears in the test set
    let kept = corpus::filter_training_queries(
        &data.train_queries,
        &index,
        &tokenizer,
        10,
        &data.test_queries,
    );
    let queries: Vec<Query> = kept.into_iter().map(|(_, q)| q).collect();
    println!(
        "{} of {} logged queries kept",
        queries.len(),
        data.train_queries.len()
    );

    let params = Bm25Params::default();
    let points = generate_pointwise(&index, &params, &queries[..2], 5)?;
    print!("{}", pointwise_tsv("", &index, &queries, &points));

    let pairs = generate_pairwise(&index, &params, &queries[..2], 20, 4, 1)?;
    println!();
    print!("{}", pairwise_tsv("", &index, &queries, &pairs));
    for p in pairs.iter().take(3) {
        println!("P(doc1 > doc2) = {:.3}", p.target()?);
    }
    Ok(())
}
