//! Compare back-propagated gradients with central finite differences for a
//! small RankProb model over term embeddings.
//!
//! cargo run --example gradient_check

use weakrank::nn::Mode;
use weakrank::rankers::{batch_gradients, Instances, ModelSpec, RankerModel, TrainSet};
use weakrank::weaklabel::generate_pairwise;
use weakrank::{
    Architecture, Bm25Params, Corpus, FeatureSpace, InvertedIndex, Query, RawRecord,
    RepresentationKind, Tokenizer,
};

fn main() -> weakrank::Result<()> {
    let texts = [
        "red apple pie",
        "green apple tart",
        "apple orchard harvest",
        "pie crust recipe",
        "orchard tractor",
        "red barn tractor",
        "harvest moon pie",
        "green tea",
    ];
    let records = texts
        .iter()
        .enumerate()
        .map(|(i, t)| RawRecord::new(format!("d{i}"), *t));
    let corpus = Corpus::build(records, Tokenizer::new())?;
    let index = InvertedIndex::build(&corpus)?;
    let queries: Vec<Query> = ["apple pie", "red tractor", "green harvest"]
        .iter()
        .enumerate()
        .map(|(i, t)| corpus.query(&RawRecord::new(format!("q{i}"), *t)))
        .collect();
    let pairs = generate_pairwise(&index, &Bm25Params::default(), &queries, 5, 3, 1)?;
    let instances = Instances::Pairs(pairs);
    let set = TrainSet {
        queries: &queries,
        instances: &instances,
    };

    let spec = ModelSpec {
        hidden: vec![6, 4],
        embedding_dim: 5,
        ..ModelSpec::new(Architecture::RankProb, RepresentationKind::Embed)
    };
    let fs = FeatureSpace::new(&index, spec.repr, spec.dense);
    let mut model = RankerModel::new(spec, &index, 3)?;
    let (loss, grads) = batch_gradients(&model, &fs, set, 1.0, Mode::Infer, 0)?;
    let analytic: Vec<Vec<f64>> = grads.slices(&model).iter().map(|s| s.to_vec()).collect();
    println!("{} pairs, loss {loss:.6}", instances.len());

    let h = 1e-6;
    let mut worst: f64 = 0.0;
    let mut worst_abs: f64 = 0.0;
    let mut checked = 0;
    let sizes = model.param_sizes();
    for (p, &n) in sizes.iter().enumerate() {
        for i in 0..n {
            let orig = model.params_mut()[p][i];
            model.params_mut()[p][i] = orig + h;
            let up = batch_gradients(&model, &fs, set, 1.0, Mode::Infer, 0)?.0;
            model.params_mut()[p][i] = orig - h;
            let down = batch_gradients(&model, &fs, set, 1.0, Mode::Infer, 0)?.0;
            model.params_mut()[p][i] = orig;
            let numeric = (up - down) / (2.0 * h);
            let diff = (analytic[p][i] - numeric).abs();
            worst_abs = worst_abs.max(diff);
            if diff > 1e-8 {
                worst = worst.max(diff / analytic[p][i].abs().max(numeric.abs()));
            }
            checked += 1;
        }
    }
    // differences under 1e-8 count as exact in the relative error
    println!(
        "{checked} parameters in {} blocks, worst relative error {worst:.2e}, \
         worst absolute difference {worst_abs:.2e}",
        sizes.len()
    );
    Ok(())
}
