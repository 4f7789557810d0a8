//! Finite-difference gradient checks of every trainable parameter.

use weakrank::nn::{Mode, Weighting};
use weakrank::rankers::{
    batch_gradients, Instances, ModelSpec, RankerModel, TrainSet, DEFAULT_MARGIN,
};
use weakrank::represent::{DenseOptions, EmbeddingSource};
use weakrank::weaklabel::{generate_pairwise, generate_pointwise};
use weakrank::{Architecture, Bm25Params, FeatureSpace, RepresentationKind};

const H: f64 = 1e-6;
pub const TOLERANCE: f64 = 1e-4;
const ABS_FLOOR: f64 = 1e-8;

pub struct CheckStats {
    pub checked: usize,
    /// Largest relative error seen (differences below the absolute floor count as 0).
    pub worst: f64,
    pub worst_abs: f64,
    pub first_failure: Option<String>,
}

impl CheckStats {
    pub fn passed(&self) -> bool {
        self.checked > 0 && self.first_failure.is_none()
    }
}

/// Compare analytic and central-difference gradients of the batch loss.
pub fn check_combination(
    arch: Architecture,
    repr: RepresentationKind,
    weighting: Weighting,
    dropout: f64,
) -> CheckStats {
    let (corpus, index) = super::random_corpus(11, 12, 20, 4, 10);
    let queries = super::random_queries(&corpus, 5, 3, 20);
    let params = Bm25Params::default();
    let instances = if arch == Architecture::Score {
        let mut p = generate_pointwise(&index, &params, &queries, 4).unwrap();
        p.truncate(6);
        Instances::Points(p)
    } else {
        let mut p = generate_pairwise(&index, &params, &queries, 4, 3, 1).unwrap();
        p.truncate(6);
        Instances::Pairs(p)
    };
    assert!(!instances.is_empty());
    let set = TrainSet {
        queries: &queries,
        instances: &instances,
    };
    let spec = ModelSpec {
        arch,
        repr,
        dense: DenseOptions { k: 3, log1p: true },
        hidden: vec![5, 4],
        embedding_dim: 4,
        weighting,
        embedding_source: EmbeddingSource::Learned,
        dropout,
    };
    let fs = FeatureSpace::new(&index, repr, spec.dense);
    let mut model = RankerModel::new(spec, &index, 3).unwrap();
    // Nonzero raw weights so the learned softmax is not uniform.
    if let Some(t) = model.embedding.as_mut() {
        for (i, w) in t.weights.iter_mut().enumerate() {
            *w = ((i * 7) % 5) as f64 * 0.3 - 0.6;
        }
    }
    // Nonzero biases keep pre-activations off the ReLU kink at zero.
    for (li, layer) in model.mlp.layers_mut().iter_mut().enumerate() {
        for (o, b) in layer.bias.iter_mut().enumerate() {
            *b = 0.05 + 0.01 * ((li + 3 * o) % 4) as f64;
        }
    }
    let mode = if dropout > 0.0 {
        Mode::Train
    } else {
        Mode::Infer
    };
    let loss_at = |m: &RankerModel| {
        batch_gradients(m, &fs, set, DEFAULT_MARGIN, mode, 17)
            .unwrap()
            .0
    };
    let (_, grads) = batch_gradients(&model, &fs, set, DEFAULT_MARGIN, mode, 17).unwrap();
    let analytic: Vec<Vec<f64>> = grads.slices(&model).iter().map(|s| s.to_vec()).collect();
    let sizes: Vec<usize> = model.param_sizes();
    assert_eq!(sizes.len(), analytic.len());
    let mut stats = CheckStats {
        checked: 0,
        worst: 0.0,
        worst_abs: 0.0,
        first_failure: None,
    };
    for (p, &n) in sizes.iter().enumerate() {
        for i in 0..n {
            let orig = model.params_mut()[p][i];
            model.params_mut()[p][i] = orig + H;
            let up = loss_at(&model);
            model.params_mut()[p][i] = orig - H;
            let down = loss_at(&model);
            model.params_mut()[p][i] = orig;
            let numeric = (up - down) / (2.0 * H);
            let a = analytic[p][i];
            let diff = (a - numeric).abs();
            let rel = if diff <= ABS_FLOOR {
                0.0
            } else {
                diff / a.abs().max(numeric.abs())
            };
            if rel >= TOLERANCE && stats.first_failure.is_none() {
                stats.first_failure = Some(format!(
                    "{arch}/{repr} param block {p} entry {i}: analytic {a:e} numeric {numeric:e}"
                ));
            }
            stats.worst = stats.worst.max(rel);
            stats.worst_abs = stats.worst_abs.max(diff);
            stats.checked += 1;
        }
    }
    stats
}
