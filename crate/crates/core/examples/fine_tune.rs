//! Compare a model trained only on a few judged queries with one pre-trained
//! on BM25 weak labels and then fine-tuned on the same judgments.
//!
//! cargo run --release --example fine_tune

mod common;

use weakrank::eval::evaluate;
use weakrank::pipeline::rerank_runs;
use weakrank::rankers::{fine_tune, train, ModelSpec, RankerModel, TrainConfig};
use weakrank::{Architecture, Bm25Params, RepresentationKind};

fn main() -> weakrank::Result<()> {
    let toy = common::toy()?;
    let params = Bm25Params::default();
    let spec = ModelSpec::new(Architecture::RankProb, RepresentationKind::Embed);
    let tune = TrainConfig {
        epochs: 10,
        batch_size: 32,
        learning_rate: 1e-4,
        ..TrainConfig::default()
    };

    let mut supervised = RankerModel::new(spec.clone(), &toy.index, 1)?;
    let fs = supervised.feature_space(&toy.index);
    fine_tune(
        &mut supervised,
        &fs,
        &params,
        &toy.supervised,
        &toy.data.supervised_qrels,
        100,
        &tune,
    )?;

    let mut weak = RankerModel::new(spec, &toy.index, 1)?;
    let inst = common::weak_instances(Architecture::RankProb, &toy.index, &toy.train)?;
    let pretrain = TrainConfig {
        epochs: 4,
        ..TrainConfig::default()
    };
    train(
        &mut weak,
        &fs,
        common::set(&toy.train, &inst),
        None,
        &pretrain,
    )?;
    fine_tune(
        &mut weak,
        &fs,
        &params,
        &toy.supervised,
        &toy.data.supervised_qrels,
        100,
        &tune,
    )?;

    println!("judged training queries: {}", toy.supervised.len());
    for (name, model) in [
        ("supervised only", &supervised),
        ("weak + fine-tune", &weak),
    ] {
        let (bm25, run) = rerank_runs(model, &toy.index, &params, &toy.test, 2000, name)?;
        if name == "supervised only" {
            let r = evaluate(&bm25, &toy.data.test_qrels);
            println!("{:<17} MAP {:.4}", "bm25", r.map());
        }
        let r = evaluate(&run, &toy.data.test_qrels);
        println!("{name:<17} MAP {:.4}", r.map());
    }
    Ok(())
}
