//! Train a Score model over term embeddings and check how the learned term
//! weights relate to inverse document frequency.
//!
//! cargo run --release --example weight_idf_analysis

mod common;

use weakrank::eval::{weight_idf_correlation, weight_idf_points};
use weakrank::rankers::{train, ModelSpec, RankerModel, TrainConfig};
use weakrank::{Architecture, RepresentationKind};

fn main() -> weakrank::Result<()> {
    let toy = common::toy()?;
    let arch = Architecture::Score;
    let train_inst = common::weak_instances(arch, &toy.index, &toy.train)?;
    let spec = ModelSpec {
        hidden: vec![32],
        embedding_dim: 16,
        ..ModelSpec::new(arch, RepresentationKind::Embed)
    };
    let mut model = RankerModel::new(spec, &toy.index, 4)?;
    let fs = model.feature_space(&toy.index);
    let cfg = TrainConfig {
        epochs: 3,
        ..TrainConfig::default()
    };
    train(
        &mut model,
        &fs,
        common::set(&toy.train, &train_inst),
        None,
        &cfg,
    )?;

    let table = model.embedding.as_ref().expect("embedding model");
    let r = weight_idf_correlation(table, &toy.index)?;
    println!("Pearson r between learned weight and idf: {r:.4}");

    let mut points = weight_idf_points(table, &toy.index);
    points.sort_by(|a, b| b.weight.total_cmp(&a.weight));
    println!("\nhighest weighted terms:");
    for p in points.iter().take(5) {
        println!("  {:<12} weight {:+.4}  idf {:.3}", p.term, p.weight, p.idf);
    }
    println!("lowest weighted terms:");
    for p in points.iter().rev().take(5) {
        println!("  {:<12} weight {:+.4}  idf {:.3}", p.term, p.weight, p.idf);
    }
    Ok(())
}
