//! Train a RankProb model over learned term embeddings on BM25 weak labels,
//! then re-rank BM25 results for held-out queries.
//!
//! cargo run --release --example train_rankprob_embed

mod common;

use weakrank::eval::{evaluate, paired_ttest};
use weakrank::pipeline::rerank_runs;
use weakrank::rankers::{train, ModelSpec, RankerModel, TrainConfig};
use weakrank::{Architecture, Bm25Params, RepresentationKind};

fn main() -> weakrank::Result<()> {
    let toy = common::toy()?;
    let arch = Architecture::RankProb;
    let train_inst = common::weak_instances(arch, &toy.index, &toy.train)?;
    let val_inst = common::weak_instances(arch, &toy.index, &toy.val)?;
    println!(
        "{} training pairs from {} queries, {} validation pairs",
        train_inst.len(),
        toy.train.len(),
        val_inst.len()
    );

    let spec = ModelSpec::new(arch, RepresentationKind::Embed);
    let mut model = RankerModel::new(spec, &toy.index, 1)?;
    let fs = model.feature_space(&toy.index);
    let cfg = TrainConfig::default();
    let report = train(
        &mut model,
        &fs,
        common::set(&toy.train, &train_inst),
        Some(common::set(&toy.val, &val_inst)),
        &cfg,
    )?;
    for (epoch, loss) in report.epoch_train_means().iter().enumerate() {
        println!("epoch {epoch}: mean training loss {loss:.4}");
    }
    println!(
        "best validation loss {:.4} at step {}",
        report.best_val_loss.unwrap_or(f64::NAN),
        report.best_step
    );

    let (bm25, run) = rerank_runs(
        &model,
        &toy.index,
        &Bm25Params::default(),
        &toy.test,
        2000,
        "rankprob-embed",
    )?;
    let base = evaluate(&bm25, &toy.data.test_qrels);
    let ours = evaluate(&run, &toy.data.test_qrels);
    println!("bm25   MAP {:.4}  nDCG@20 {:.4}", base.map(), base.ndcg20());
    println!("model  MAP {:.4}  nDCG@20 {:.4}", ours.map(), ours.ndcg20());
    let t = paired_ttest(&ours.vector(0), &base.vector(0), 1)?;
    println!("MAP difference: t = {:.3}, p = {:.4}", t.t, t.p_value);
    Ok(())
}
