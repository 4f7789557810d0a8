//! Drive every stage from the shipped config file, the same way the
//! `weakrank` binary does: synth, index, generate, train, rerank, evaluate,
//! analyze. Data and outputs go to a temporary directory.
//!
//! cargo run --release --example pipeline

use std::path::Path;

use weakrank::pipeline::{self, PipelineConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/synthetic.conf");
    let dir = std::env::temp_dir().join(format!("weakrank-pipeline-{}", std::process::id()));
    let at = |name: &str| dir.join(name).display().to_string();
    let overrides: Vec<(String, String)> = [
        ("corpus", "data/corpus.tsv"),
        ("train_queries", "data/train_queries.tsv"),
        ("test_queries", "data/test_queries.tsv"),
        ("qrels", "data/qrels.txt"),
        ("supervised_queries", "data/supervised_queries.tsv"),
        ("supervised_qrels", "data/supervised_qrels.txt"),
        ("work_dir", "work"),
    ]
    .iter()
    .map(|(k, v)| (k.to_string(), at(v)))
    .collect();
    let cfg = PipelineConfig::load(&config, &overrides)?;
    println!(
        "config hash {}, outputs under {}",
        cfg.hash(),
        dir.display()
    );

    pipeline::cmd_synth(&cfg)?;
    let eval = pipeline::run_all(&cfg)?;
    for (tag, report) in &eval.reports {
        println!(
            "{tag:<16} MAP {:.4}  P@20 {:.4}  nDCG@20 {:.4}",
            report.map(),
            report.p20(),
            report.ndcg20()
        );
    }
    for c in &eval.comparisons {
        println!(
            "{} vs baseline on {}: {:.4} vs {:.4}, p = {:.3e}{}",
            c.run,
            c.metric,
            c.value,
            c.baseline,
            c.test.p_value,
            if c.test.significant {
                " (significant)"
            } else {
                ""
            }
        );
    }
    let (csv, r) = pipeline::cmd_analyze(&cfg, None)?;
    println!(
        "weight/idf correlation {r:.4}, scatter in {}",
        csv.display()
    );
    Ok(())
}
