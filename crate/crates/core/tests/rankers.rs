mod common;

use weakrank::checkpoint;
use weakrank::nn::Weighting;
use weakrank::rankers::{
    cross_entropy_loss, dataset_loss, hinge_loss, loss_rank, loss_rankprob, loss_score, mse_loss,
    rerank_pairwise, rerank_pointwise, train, Instances, ModelSpec, RankerModel, TrainConfig,
    TrainSet,
};
use weakrank::represent::DenseOptions;
use weakrank::weaklabel::{generate_pairwise, generate_pointwise, pair_probability, PairInstance};
use weakrank::{Architecture, Bm25Params, Error, FeatureSpace, RepresentationKind, ScoredDoc};

fn spec(arch: Architecture, repr: RepresentationKind) -> ModelSpec {
    ModelSpec {
        hidden: vec![8, 6],
        embedding_dim: 6,
        dense: DenseOptions { k: 3, log1p: true },
        ..ModelSpec::new(arch, repr)
    }
}

#[test]
fn mse_examples() {
    assert_eq!(mse_loss(&[0.3, 0.9], &[0.3, 0.9]).unwrap(), 0.0);
    assert!((mse_loss(&[0.2], &[0.7]).unwrap() - 0.25).abs() < 1e-15);
    assert_eq!(mse_loss(&[0.0, 1.0], &[1.0, 1.0]).unwrap(), 0.5);
    assert!(matches!(mse_loss(&[], &[]), Err(Error::EmptyBatch)));
}

#[test]
fn hinge_examples() {
    assert!((hinge_loss(&[1.5], &[(0.9, 0.1)], 1.0).unwrap() - 0.0).abs() < 1e-12);
    assert!((hinge_loss(&[-0.5], &[(0.9, 0.1)], 1.0).unwrap() - 1.5).abs() < 1e-12);
    assert!((hinge_loss(&[-2.0], &[(0.1, 0.9)], 1.0).unwrap() - 0.0).abs() < 1e-12);
    assert!(hinge_loss(&[0.3], &[(0.4, 0.4)], 1.0).is_err());
    // swapping documents and weak scores together leaves the loss unchanged
    let diffs = [0.2, -0.7, 1.3];
    let weak = [(0.9, 0.3), (0.2, 0.6), (1.0, 0.0)];
    let swapped: Vec<(f64, f64)> = weak.iter().map(|&(a, b)| (b, a)).collect();
    let neg: Vec<f64> = diffs.iter().map(|d| -d).collect();
    assert_eq!(
        hinge_loss(&diffs, &weak, 1.0).unwrap(),
        hinge_loss(&neg, &swapped, 1.0).unwrap()
    );
}

#[test]
fn cross_entropy_examples() {
    let ln2 = std::f64::consts::LN_2;
    assert!((cross_entropy_loss(&[0.5], &[0.5]).unwrap() - ln2).abs() < 1e-12);
    let direct = -(0.75f64 * 0.75f64.ln() + 0.25 * 0.25f64.ln());
    let got = cross_entropy_loss(&[0.75], &[pair_probability(3.0, 1.0).unwrap()]).unwrap();
    assert!((got - 0.562335).abs() < 1e-6 && (got - direct).abs() < 1e-15);
    // minimized at R = P over a grid
    for p in [0.1, 0.35, 0.8] {
        let best = (1..1000)
            .map(|i| i as f64 / 1000.0)
            .min_by(|a, b| {
                cross_entropy_loss(&[*a], &[p])
                    .unwrap()
                    .total_cmp(&cross_entropy_loss(&[*b], &[p]).unwrap())
            })
            .unwrap();
        assert!((best - p).abs() < 1.5e-3);
    }
    // clamped outputs stay finite; swap symmetry with R -> 1 - R
    assert!(cross_entropy_loss(&[0.0, 1.0], &[1.0, 0.0])
        .unwrap()
        .is_finite());
    let (r, p) = (0.3, pair_probability(0.2, 0.7).unwrap());
    let q = pair_probability(0.7, 0.2).unwrap();
    assert!(
        (cross_entropy_loss(&[r], &[p]).unwrap() - cross_entropy_loss(&[1.0 - r], &[q]).unwrap())
            .abs()
            < 1e-12
    );
    assert!(matches!(
        cross_entropy_loss(&[], &[]),
        Err(Error::EmptyBatch)
    ));
}

#[test]
fn model_losses_check_architecture_and_batches() {
    let (corpus, index) = common::random_corpus(3, 30, 15, 5, 12);
    let queries = common::random_queries(&corpus, 2, 4, 15);
    let p = Bm25Params::default();
    let fs = FeatureSpace::new(
        &index,
        RepresentationKind::Dense,
        DenseOptions { k: 3, log1p: true },
    );
    let points = generate_pointwise(&index, &p, &queries, 5).unwrap();
    let pairs = generate_pairwise(&index, &p, &queries, 5, 6, 1).unwrap();
    let score = RankerModel::new(
        spec(Architecture::Score, RepresentationKind::Dense),
        &index,
        1,
    )
    .unwrap();
    let rank = RankerModel::new(
        spec(Architecture::Rank, RepresentationKind::Dense),
        &index,
        1,
    )
    .unwrap();
    let prob = RankerModel::new(
        spec(Architecture::RankProb, RepresentationKind::Dense),
        &index,
        1,
    )
    .unwrap();
    assert!(loss_score(&score, &fs, &queries, &points).unwrap() >= 0.0);
    assert!(loss_rank(&rank, &fs, &queries, &pairs, 1.0).unwrap() >= 0.0);
    assert!(loss_rankprob(&prob, &fs, &queries, &pairs).unwrap() > 0.0);
    assert!(matches!(
        loss_score(&rank, &fs, &queries, &points),
        Err(Error::Architecture(_))
    ));
    assert!(matches!(
        loss_rankprob(&prob, &fs, &queries, &[]),
        Err(Error::EmptyBatch)
    ));
    let tie = PairInstance {
        query: 0,
        doc1: 0,
        doc2: 1,
        s1: 0.4,
        s2: 0.4,
    };
    assert!(loss_rank(&rank, &fs, &queries, &[tie], 1.0).is_err());
}

#[test]
fn pointwise_scores() {
    let (corpus, index) = common::random_corpus(4, 20, 12, 5, 10);
    let q = corpus.query(&weakrank::RawRecord::new("q", "w1 w2"));
    for repr in RepresentationKind::ALL {
        for arch in [Architecture::Score, Architecture::Rank] {
            let mut m = RankerModel::new(spec(arch, repr), &index, 9).unwrap();
            let fs = m.feature_space(&index);
            let a = m.score_pointwise(&fs, &q, 3).unwrap();
            assert_eq!(a, m.score_pointwise(&fs, &q, 3).unwrap());
            for p in m.params_mut() {
                p.fill(0.0);
            }
            assert_eq!(m.score_pointwise(&fs, &q, 3).unwrap(), 0.0);
        }
        let m = RankerModel::new(spec(Architecture::RankProb, repr), &index, 9).unwrap();
        let fs = m.feature_space(&index);
        assert!(matches!(
            m.score_pointwise(&fs, &q, 3),
            Err(Error::Architecture(_))
        ));
    }
}

#[test]
fn pointwise_rerank_matches_per_document_scores() {
    let (corpus, index) = common::random_corpus(6, 30, 15, 5, 15);
    let q = corpus.query(&weakrank::RawRecord::new("q", "w1 w4 w7"));
    let cands = index.retrieve_top_k(&Bm25Params::default(), &q, 30);
    for repr in RepresentationKind::ALL {
        for arch in [Architecture::Score, Architecture::Rank] {
            let m = RankerModel::new(spec(arch, repr), &index, 4).unwrap();
            let fs = m.feature_space(&index);
            let ranked = rerank_pointwise(&m, &fs, &q, &cands).unwrap();
            assert_eq!(ranked.len(), cands.len());
            for r in &ranked {
                let direct = m.score_pointwise(&fs, &q, r.doc).unwrap();
                assert!(
                    (r.score - direct).abs() < 1e-12,
                    "{arch}/{repr}: {} vs {direct}",
                    r.score
                );
            }
        }
    }
}

#[test]
fn pairwise_rerank_matches_brute_force() {
    let (corpus, index) = common::random_corpus(5, 40, 15, 5, 15);
    let queries = common::random_queries(&corpus, 8, 3, 15);
    let p = Bm25Params::default();
    for repr in RepresentationKind::ALL {
        let fs = FeatureSpace::new(&index, repr, DenseOptions { k: 3, log1p: true });
        let mut model = RankerModel::new(spec(Architecture::RankProb, repr), &index, 2).unwrap();
        for l in model.mlp.layers_mut() {
            for (i, b) in l.bias.iter_mut().enumerate() {
                *b = 0.1 * ((i % 3) as f64 - 1.0);
            }
        }
        for q in &queries {
            let cands = index.retrieve_top_k(&p, q, 12);
            if cands.len() < 2 {
                continue;
            }
            let got = rerank_pairwise(&model, &fs, q, &cands).unwrap();
            for s in &got {
                let others: Vec<f64> = cands
                    .iter()
                    .filter(|c| c.doc != s.doc)
                    .map(|c| model.pair_preference(&fs, q, s.doc, c.doc).unwrap())
                    .collect();
                let mean = others.iter().sum::<f64>() / others.len() as f64;
                assert!(
                    (mean - s.score).abs() < 1e-12,
                    "{repr}: {mean} vs {}",
                    s.score
                );
            }
            assert!(got.windows(2).all(|w| w[0].score >= w[1].score));
        }
    }
}

#[test]
fn pairwise_rerank_edge_cases() {
    let (corpus, index) = common::random_corpus(6, 20, 10, 5, 10);
    let q = corpus.query(&weakrank::RawRecord::new("q", "w1 w2 w3"));
    let p = Bm25Params::default();
    let mut model = RankerModel::new(
        spec(Architecture::RankProb, RepresentationKind::Dense),
        &index,
        2,
    )
    .unwrap();
    let fs = model.feature_space(&index);
    let cands = index.retrieve_top_k(&p, &q, 8);
    assert!(cands.len() >= 4);

    // one candidate: passthrough
    assert_eq!(
        rerank_pairwise(&model, &fs, &q, &cands[..1]).unwrap(),
        cands[..1].to_vec()
    );

    // n = 2: each score is the single preference against the other
    let two = rerank_pairwise(&model, &fs, &q, &cands[..2]).unwrap();
    let r_ab = model
        .pair_preference(&fs, &q, cands[0].doc, cands[1].doc)
        .unwrap();
    let r_ba = model
        .pair_preference(&fs, &q, cands[1].doc, cands[0].doc)
        .unwrap();
    let score_of = |d| two.iter().find(|s| s.doc == d).unwrap().score;
    assert_eq!(score_of(cands[0].doc), r_ab);
    assert_eq!(score_of(cands[1].doc), r_ba);

    // constant 0.5 output: every score ties and BM25 order is kept
    for l in model.mlp.layers_mut() {
        l.weights.fill(0.0);
        l.bias.fill(0.0);
    }
    let flat = rerank_pairwise(&model, &fs, &q, &cands).unwrap();
    let docs = |v: &[ScoredDoc]| v.iter().map(|s| s.doc).collect::<Vec<_>>();
    assert_eq!(docs(&flat), docs(&cands));
    assert!(flat.iter().all(|s| s.score == 0.5));

    let score = RankerModel::new(
        spec(Architecture::Score, RepresentationKind::Dense),
        &index,
        2,
    )
    .unwrap();
    assert!(rerank_pairwise(&score, &fs, &q, &cands).is_err());
}

#[test]
fn pairwise_average_of_fixed_table() {
    // Hand-computed averages for a 4-candidate preference table.
    let r = [
        [0.0, 0.9, 0.6, 0.2],
        [0.3, 0.0, 0.8, 0.7],
        [0.5, 0.1, 0.0, 0.4],
        [0.8, 0.5, 0.3, 0.0],
    ];
    let avg: Vec<f64> = (0..4)
        .map(|i| (0..4).filter(|&j| j != i).map(|j| r[i][j]).sum::<f64>() / 3.0)
        .collect();
    let mut order: Vec<usize> = (0..4).collect();
    order.sort_by(|&a, &b| avg[b].total_cmp(&avg[a]).then(a.cmp(&b)));
    assert_eq!(order, vec![1, 0, 3, 2]);
    assert!((avg[1] - 0.6).abs() < 1e-12);
}

#[test]
fn training_reduces_loss_and_is_reproducible() {
    let (corpus, index) = common::random_corpus(8, 60, 25, 8, 20);
    let queries = common::random_queries(&corpus, 9, 30, 25);
    let p = Bm25Params::default();
    let pairs = Instances::Pairs(generate_pairwise(&index, &p, &queries[..24], 10, 20, 3).unwrap());
    let val = Instances::Pairs(generate_pairwise(&index, &p, &queries[24..], 10, 20, 3).unwrap());
    let cfg = TrainConfig {
        batch_size: 32,
        epochs: 6,
        learning_rate: 1e-2,
        val_every: 5,
        ..TrainConfig::default()
    };
    let fs = FeatureSpace::new(&index, RepresentationKind::Embed, DenseOptions::default());
    let run = || {
        let mut m = RankerModel::new(
            spec(Architecture::RankProb, RepresentationKind::Embed),
            &index,
            4,
        )
        .unwrap();
        let set = TrainSet {
            queries: &queries,
            instances: &pairs,
        };
        let before = dataset_loss(&m, &fs, set, 1.0).unwrap();
        let rep = train(
            &mut m,
            &fs,
            set,
            Some(TrainSet {
                queries: &queries,
                instances: &val,
            }),
            &cfg,
        )
        .unwrap();
        (m, rep, before)
    };
    let (m1, rep1, before) = run();
    let (m2, rep2, _) = run();
    assert_eq!(m1, m2);
    assert_eq!(rep1, rep2);
    let means = rep1.epoch_train_means();
    assert!(means.last().unwrap() < means.first().unwrap());
    assert!(
        rep1.best_val_loss.unwrap()
            <= rep1
                .curve
                .iter()
                .filter_map(|c| c.val_loss)
                .fold(f64::INFINITY, f64::min)
    );
    assert!(
        dataset_loss(
            &m1,
            &fs,
            TrainSet {
                queries: &queries,
                instances: &pairs
            },
            1.0
        )
        .unwrap()
            < before
    );
    assert!(rep1
        .to_csv("# h\n")
        .starts_with("# h\nstep,train_loss,val_loss\n"));
}

#[test]
fn divergence_is_reported() {
    let (corpus, index) = common::random_corpus(8, 30, 20, 8, 20);
    let queries = common::random_queries(&corpus, 9, 10, 20);
    let p = Bm25Params::default();
    let points = Instances::Points(generate_pointwise(&index, &p, &queries, 10).unwrap());
    let fs = FeatureSpace::new(&index, RepresentationKind::Sparse, DenseOptions::default());
    let mut m = RankerModel::new(
        spec(Architecture::Score, RepresentationKind::Sparse),
        &index,
        4,
    )
    .unwrap();
    let cfg = TrainConfig {
        batch_size: 16,
        epochs: 3,
        learning_rate: 1e300,
        ..TrainConfig::default()
    };
    let err = train(
        &mut m,
        &fs,
        TrainSet {
            queries: &queries,
            instances: &points,
        },
        None,
        &cfg,
    )
    .unwrap_err();
    assert!(matches!(err, Error::Diverged { .. }), "{err}");
}

#[test]
fn wrong_arity_is_rejected() {
    let (corpus, index) = common::random_corpus(8, 30, 20, 8, 20);
    let queries = common::random_queries(&corpus, 9, 5, 20);
    let p = Bm25Params::default();
    let points = Instances::Points(generate_pointwise(&index, &p, &queries, 5).unwrap());
    let fs = FeatureSpace::new(&index, RepresentationKind::Dense, DenseOptions::default());
    let mut m = RankerModel::new(
        spec(Architecture::Rank, RepresentationKind::Dense),
        &index,
        4,
    )
    .unwrap();
    let err = train(
        &mut m,
        &fs,
        TrainSet {
            queries: &queries,
            instances: &points,
        },
        None,
        &TrainConfig::default(),
    );
    assert!(matches!(err, Err(Error::Architecture(_))));
}

#[test]
fn checkpoint_round_trip() {
    let (_, index) = common::random_corpus(8, 30, 20, 8, 20);
    let dir = tempfile::tempdir().unwrap();
    for (arch, repr, w) in [
        (
            Architecture::RankProb,
            RepresentationKind::Embed,
            Weighting::Learned,
        ),
        (
            Architecture::Score,
            RepresentationKind::Sparse,
            Weighting::Uniform,
        ),
        (
            Architecture::Rank,
            RepresentationKind::Dense,
            Weighting::Idf,
        ),
    ] {
        let m = RankerModel::new(
            ModelSpec {
                weighting: w,
                ..spec(arch, repr)
            },
            &index,
            4,
        )
        .unwrap();
        let path = dir.path().join(format!("{arch}-{repr}.ckpt"));
        checkpoint::save(&m, "# test\n", &path).unwrap();
        let (back, header) = checkpoint::load(&path).unwrap();
        assert_eq!(back, m);
        assert_eq!(header, "# test\n");
        assert!(checkpoint::sidecar_path(&path).exists());
        let bytes = std::fs::read(&path).unwrap();
        assert!(checkpoint::from_bytes(&bytes[..bytes.len() - 3]).is_err());
    }
}
