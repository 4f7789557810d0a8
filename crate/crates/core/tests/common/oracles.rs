//! Independent reference implementations and the checks that compare the
//! library against them. Each check returns the worst observed deviation.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, StudentsT};
use weakrank::eval::{average_precision, ndcg_at, paired_ttest, precision_at};
use weakrank::{Bm25Params, Corpus, InvertedIndex, Query, RawRecord, Tokenizer};

use super::bm25_oracle::Collection;

/// BM25 on 100 random (query, doc) pairs over a 100-document corpus.
pub fn bm25_max_deviation() -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let vocab = 60;
    let texts: Vec<Vec<String>> = (0..100)
        .map(|_| {
            let len = rng.gen_range(5..=80);
            (0..len)
                .map(|_| format!("t{}", rng.gen_range(0..vocab)))
                .collect()
        })
        .collect();
    let records = texts
        .iter()
        .enumerate()
        .map(|(i, words)| RawRecord::new(format!("d{i:03}"), words.join(" ")));
    let corpus = Corpus::build(records, Tokenizer::new()).unwrap();
    let index = InvertedIndex::build(&corpus).unwrap();
    let oracle = Collection { docs: texts };
    let settings = [
        Bm25Params::default(),
        Bm25Params {
            k1: 0.9,
            b: 0.4,
            k3: 7.0,
        },
        Bm25Params {
            k1: 2.0,
            b: 1.0,
            k3: 0.0,
        },
    ];
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let len = rng.gen_range(1..=5);
        // Some words fall outside the corpus vocabulary.
        let words: Vec<String> = (0..len)
            .map(|_| format!("t{}", rng.gen_range(0..vocab + 5)))
            .collect();
        let q: Query = corpus.query(&RawRecord::new(format!("q{i}"), words.join(" ")));
        let doc = rng.gen_range(0..100);
        let params = settings[i % settings.len()];
        let got = index
            .bm25_score_by_id(&params, &q, &format!("d{doc:03}"))
            .unwrap();
        let want = oracle.score(&words, doc, params.k1, params.b, params.k3);
        worst = worst.max((got - want).abs());
    }
    worst
}

fn oracle_ap(ranked: &[&str], judged: &HashMap<String, u32>) -> f64 {
    let relevant: Vec<&String> = judged
        .iter()
        .filter(|(_, &g)| g > 0)
        .map(|(d, _)| d)
        .collect();
    if relevant.is_empty() {
        return 0.0;
    }
    let mut total = 0.0;
    for r in &relevant {
        if let Some(pos) = ranked.iter().position(|d| d == r) {
            let above = ranked[..=pos]
                .iter()
                .filter(|d| judged.get(**d).copied().unwrap_or(0) > 0)
                .count();
            total += above as f64 / (pos + 1) as f64;
        }
    }
    total / relevant.len() as f64
}

fn oracle_precision(ranked: &[&str], judged: &HashMap<String, u32>, k: usize) -> f64 {
    let mut hits = 0.0;
    for i in 0..k.min(ranked.len()) {
        if judged.get(ranked[i]).copied().unwrap_or(0) > 0 {
            hits += 1.0;
        }
    }
    hits / k as f64
}

fn oracle_ndcg(ranked: &[&str], judged: &HashMap<String, u32>, k: usize) -> f64 {
    let gain = |g: u32| ((1u64 << g) - 1) as f64;
    let discount = |rank: usize| (rank as f64 + 1.0).ln() / 2f64.ln();
    let mut dcg = 0.0;
    for (i, d) in ranked.iter().take(k).enumerate() {
        dcg += gain(judged.get(*d).copied().unwrap_or(0)) / discount(i + 1);
    }
    let mut grades: Vec<u32> = judged.values().copied().collect();
    grades.sort_by(|a, b| b.cmp(a));
    let mut ideal = 0.0;
    for (i, g) in grades.into_iter().take(k).enumerate() {
        ideal += gain(g) / discount(i + 1);
    }
    if ideal > 0.0 {
        dcg / ideal
    } else {
        0.0
    }
}

/// MAP, P@20 and nDCG@20 against brute force on `fixtures` random rankings.
pub fn metric_max_deviation(fixtures: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let pool: Vec<String> = (0..80).map(|i| format!("doc{i}")).collect();
    let mut worst: f64 = 0.0;
    for _ in 0..fixtures {
        let mut judged = HashMap::new();
        let judged_count = rng.gen_range(0..30);
        for d in pool.choose_multiple(&mut rng, judged_count) {
            judged.insert(d.clone(), rng.gen_range(0..=3));
        }
        let mut ranked: Vec<&str> = pool.iter().map(String::as_str).collect();
        ranked.shuffle(&mut rng);
        ranked.truncate(rng.gen_range(0..=60));
        let pairs = [
            (
                average_precision(&ranked, Some(&judged), 1000),
                oracle_ap(&ranked, &judged),
            ),
            (
                precision_at(&ranked, Some(&judged), 20),
                oracle_precision(&ranked, &judged, 20),
            ),
            (
                ndcg_at(&ranked, Some(&judged), 20),
                oracle_ndcg(&ranked, &judged, 20),
            ),
        ];
        for (got, want) in pairs {
            worst = worst.max((got - want).abs());
        }
    }
    worst
}

/// Paired t-test p-values against the Student's t distribution.
pub fn ttest_max_deviation(fixtures: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for i in 0..fixtures {
        let n = rng.gen_range(3..=60);
        let shift = (i as f64 - fixtures as f64 / 2.0) * 0.01;
        let a: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        let b: Vec<f64> = a
            .iter()
            .map(|x| x + shift + 0.2 * (rng.gen::<f64>() - 0.5))
            .collect();
        let test = paired_ttest(&a, &b, 1).unwrap();
        let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64).unwrap();
        let want = 2.0 * (1.0 - dist.cdf(test.t.abs()));
        worst = worst.max((test.p_value - want).abs());
    }
    worst
}
