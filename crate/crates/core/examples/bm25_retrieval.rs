//! Index a handful of documents and retrieve with BM25.
//!
//! cargo run --example bm25_retrieval

use weakrank::{Bm25Params, Corpus, InvertedIndex, RawRecord, Tokenizer};

fn main() -> weakrank::Result<()> {
    let docs = [
        ("d1", "The cat sat on the mat."),
        ("d2", "Dogs and cats living together."),
        (
            "d3",
            "A treatise on the domestic cat and its habits; cat care.",
        ),
        ("d4", "Stock markets fell sharply on Monday."),
        ("d5", "Feline behaviour: why the cat ignores you."),
    ];
    let records = docs.iter().map(|(id, text)| RawRecord::new(*id, *text));
    let corpus = Corpus::build(records, Tokenizer::new())?;
    let index = InvertedIndex::build(&corpus)?;
    println!(
        "{} documents, {} terms, average length {:.2}",
        index.num_docs(),
        index.vocab().len(),
        index.avg_dl()
    );

    let params = Bm25Params::default();
    for text in ["cat", "cat habits", "markets"] {
        let q = corpus.query(&RawRecord::new("q", text));
        println!("\nquery {text:?} matches {} documents", index.hit_count(&q));
        for hit in index.retrieve_top_k(&params, &q, 3) {
            println!("  {}  {:.4}", index.doc_id(hit.doc), hit.score);
        }
    }

    // the index round-trips through its binary form
    let bytes = index.to_bytes("# example\n");
    let (restored, header) = InvertedIndex::from_bytes(&bytes)?;
    assert_eq!(restored.num_docs(), index.num_docs());
    println!("\nserialized to {} bytes, header {:?}", bytes.len(), header);
    Ok(())
}
