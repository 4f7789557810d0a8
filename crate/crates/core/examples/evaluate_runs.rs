//! Score two TREC runs against relevance judgments and test whether the
//! difference is significant.
//!
//! cargo run --example evaluate_runs

use std::path::Path;

use weakrank::eval::{evaluate, paired_ttest};
use weakrank::{Qrels, Run};

const QRELS: &str = "\
q1 0 d1 1
q1 0 d4 2
q2 0 d2 1
q3 0 d3 1
q3 0 d5 1
";

const BASELINE: &str = "\
q1 Q0 d2 1 3.0 bm25
q1 Q0 d1 2 2.0 bm25
q1 Q0 d4 3 1.0 bm25
q2 Q0 d3 1 2.0 bm25
q2 Q0 d2 2 1.0 bm25
q3 Q0 d1 1 3.0 bm25
q3 Q0 d3 2 2.0 bm25
q3 Q0 d5 3 1.0 bm25
";

const RERANKED: &str = "\
q1 Q0 d4 1 0.9 model
q1 Q0 d1 2 0.8 model
q1 Q0 d2 3 0.1 model
q2 Q0 d2 1 0.7 model
q2 Q0 d3 2 0.2 model
q3 Q0 d3 1 0.6 model
q3 Q0 d1 2 0.5 model
q3 Q0 d5 3 0.4 model
";

fn main() -> weakrank::Result<()> {
    let qrels = Qrels::parse(Path::new("qrels"), QRELS)?;
    let base = evaluate(&Run::parse(Path::new("bm25"), BASELINE)?, &qrels);
    let model = evaluate(&Run::parse(Path::new("model"), RERANKED)?, &qrels);

    println!("run     MAP     P@20    nDCG@20");
    for (name, r) in [("bm25", &base), ("model", &model)] {
        println!(
            "{name:<7} {:.4}  {:.4}  {:.4}",
            r.map(),
            r.p20(),
            r.ndcg20()
        );
    }

    // per-query metric vectors, paired by query; two comparisons share the
    // 0.05 level (Bonferroni)
    for (metric, label) in [(0, "MAP"), (2, "nDCG@20")] {
        let t = paired_ttest(&model.vector(metric), &base.vector(metric), 2)?;
        println!(
            "{label}: mean diff {:+.4}, t = {:.3}, p = {:.4}, threshold {:.3}, significant: {}",
            t.mean_diff, t.t, t.p_value, t.threshold, t.significant
        );
    }
    print!("\n{}", model.to_tsv("# per-query metrics\n"));
    Ok(())
}
