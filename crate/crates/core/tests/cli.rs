use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = "\
corpus = data/corpus.tsv
train_queries = data/train_queries.tsv
test_queries = data/test_queries.tsv
qrels = data/qrels.txt
supervised_queries = data/supervised_queries.tsv
supervised_qrels = data/supervised_qrels.txt
work_dir = work
seed = 3
generate.depth = 20
generate.pairs_per_query = 6
model.hidden = 8,8
model.embedding_dim = 8
train.epochs = 1
train.batch_size = 32
synth.docs = 200
synth.train_queries = 80
synth.test_queries = 10
synth.supervised_queries = 4
synth.topics = 5
synth.concepts_per_topic = 5
synth.focus_concepts = 3
synth.background_words = 100
";

fn weakrank(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_weakrank"))
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("tiny.conf"), TINY).unwrap();
    dir
}

#[test]
fn config_errors_exit_with_config_code() {
    let dir = setup();
    assert_eq!(code(&weakrank(dir.path(), &["index"])), 2);
    assert_eq!(
        code(&weakrank(
            dir.path(),
            &["--config", "missing.conf", "index"]
        )),
        2
    );
    let bad_arch = weakrank(
        dir.path(),
        &["--config", "tiny.conf", "--arch", "listwise", "index"],
    );
    assert_eq!(code(&bad_arch), 2);
    assert!(String::from_utf8_lossy(&bad_arch.stderr).contains("listwise"));
}

#[test]
fn missing_inputs_exit_with_stage_codes() {
    let dir = setup();
    let run = |stage: &str| code(&weakrank(dir.path(), &["--config", "tiny.conf", stage]));
    assert_eq!(run("index"), 10);
    assert_eq!(run("generate"), 11);
    assert_eq!(run("train"), 12);
    assert_eq!(run("rerank"), 13);
    assert_eq!(run("evaluate"), 14);
    assert_eq!(run("analyze"), 15);
}

#[test]
fn full_pipeline_through_the_binary() {
    let dir = setup();
    let d = dir.path();
    for stage in [
        "synth", "index", "generate", "train", "rerank", "evaluate", "analyze",
    ] {
        let o = weakrank(d, &["--config", "tiny.conf", stage]);
        assert!(
            o.status.success(),
            "{stage}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
    }
    let run = fs::read_to_string(d.join("work/run-rankprob-embed.txt")).unwrap();
    assert!(run.starts_with("# weakrank "));
    assert!(run.contains("stage=rerank") && run.contains("seed=3"));
    let metrics = fs::read_to_string(d.join("work/metrics-rankprob-embed.tsv")).unwrap();
    assert!(metrics.lines().any(|l| l.starts_with("all\tmap\t")));
    assert!(d.join("work/significance.tsv").exists());
    assert!(d.join("work/weights-rankprob-embed.csv").exists());

    // flag overrides reach the config: another seed, architecture and representation
    let o = weakrank(
        d,
        &[
            "--config",
            "tiny.conf",
            "--seed",
            "9",
            "--arch",
            "score",
            "--repr",
            "dense",
            "train",
        ],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let curve = fs::read_to_string(d.join("work/loss-score-dense.csv")).unwrap();
    assert!(curve.lines().next().unwrap().contains("seed=9"));
}
