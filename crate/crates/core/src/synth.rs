//! Synthetic test collection with a synonym table.
//!
//! Every topic owns a set of concepts and every concept has two surface
//! forms. A document is about one topic, mentions a few of its concepts and
//! mostly sticks to one of the two forms. Relevance counts a concept as
//! matched in either form, so exact-match BM25 under-ranks documents that
//! use the other form, while occasional off-topic mentions of a query word
//! pull unrelated documents into its candidate list.

use std::collections::{BTreeSet, HashSet};
use std::fmt::Write as _;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::RawRecord;
use crate::error::{Error, Result};
use crate::eval::Qrels;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub docs: usize,
    pub train_queries: usize,
    pub test_queries: usize,
    pub supervised_queries: usize,
    pub topics: usize,
    pub concepts_per_topic: usize,
    /// Concepts a single document talks about.
    pub focus_concepts: usize,
    pub background_words: usize,
    /// Share of tokens that mention one of the document's concepts.
    pub topical_rate: f64,
    /// Share of tokens that mention a concept of some other topic.
    pub noise_rate: f64,
    /// Probability a mention uses the document's preferred surface form.
    pub preferred_form_rate: f64,
    /// Share of concepts whose second form is a word borrowed from a
    /// concept of another topic, making that word ambiguous.
    pub shared_form_rate: f64,
    pub min_len: usize,
    pub max_len: usize,
    /// Share of training-log queries that look like URLs.
    pub url_query_rate: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            docs: 5000,
            train_queries: 2000,
            test_queries: 100,
            supervised_queries: 30,
            topics: 40,
            concepts_per_topic: 15,
            focus_concepts: 5,
            background_words: 1000,
            topical_rate: 0.5,
            noise_rate: 0.1,
            preferred_form_rate: 0.9,
            shared_form_rate: 0.0,
            min_len: 60,
            max_len: 160,
            url_query_rate: 0.05,
            seed: 7,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("synth: {m}")));
        if self.docs == 0 || self.topics < 2 || self.concepts_per_topic < 3 {
            return bad("need documents, at least two topics and three concepts per topic");
        }
        if self.focus_concepts == 0 || self.focus_concepts > self.concepts_per_topic {
            return bad("focus concepts must be in 1..=concepts_per_topic");
        }
        if self.min_len == 0 || self.min_len > self.max_len {
            return bad("document length range is empty");
        }
        let rates = [
            self.topical_rate,
            self.noise_rate,
            self.preferred_form_rate,
            self.shared_form_rate,
            self.url_query_rate,
        ];
        if rates.iter().any(|r| !(0.0..=1.0).contains(r))
            || self.topical_rate + self.noise_rate > 1.0
        {
            return bad("rates must lie in [0, 1] and topical + noise must not exceed 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCollection {
    pub docs: Vec<RawRecord>,
    pub train_queries: Vec<RawRecord>,
    pub test_queries: Vec<RawRecord>,
    pub test_qrels: Qrels,
    pub supervised_queries: Vec<RawRecord>,
    pub supervised_qrels: Qrels,
    /// The two surface forms of every concept.
    pub synonyms: Vec<(String, String)>,
}

impl SynthCollection {
    pub fn synonyms_tsv(&self, header: &str) -> String {
        let mut out = String::from(header);
        for (a, b) in &self.synonyms {
            let _ = writeln!(out, "{a}\t{b}");
        }
        out
    }
}

pub fn records_tsv(header: &str, records: &[RawRecord]) -> String {
    let mut out = String::from(header);
    for r in records {
        let _ = writeln!(out, "{}\t{}", r.id, r.text);
    }
    out
}

const ONSETS: [&str; 16] = [
    "b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "st",
];
const VOWELS: [&str; 5] = ["a", "e", "i", "o", "u"];

/// `n` distinct pseudo-words of two to four syllables.
fn pseudo_words<R: Rng>(n: usize, rng: &mut R) -> Vec<String> {
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let syllables = rng.gen_range(2..=4);
        let mut w = String::new();
        for _ in 0..syllables {
            w.push_str(ONSETS[rng.gen_range(0..ONSETS.len())]);
            w.push_str(VOWELS[rng.gen_range(0..VOWELS.len())]);
        }
        if seen.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

struct Lexicon {
    /// `forms[topic][concept] = [form0, form1]`
    forms: Vec<Vec<[String; 2]>>,
    background: Vec<String>,
    background_dist: WeightedIndex<f64>,
}

impl Lexicon {
    fn new<R: Rng>(cfg: &SynthConfig, rng: &mut R) -> Self {
        let concepts = cfg.topics * cfg.concepts_per_topic;
        let mut words = pseudo_words(2 * concepts + cfg.background_words, rng).into_iter();
        let mut forms: Vec<Vec<[String; 2]>> = (0..cfg.topics)
            .map(|_| {
                (0..cfg.concepts_per_topic)
                    .map(|_| [words.next().unwrap(), words.next().unwrap()])
                    .collect()
            })
            .collect();
        for t in 0..cfg.topics {
            for c in 0..cfg.concepts_per_topic {
                if rng.gen::<f64>() < cfg.shared_form_rate {
                    let other = (t + rng.gen_range(1..cfg.topics)) % cfg.topics;
                    let oc = rng.gen_range(0..cfg.concepts_per_topic);
                    forms[t][c][1] = forms[other][oc][0].clone();
                }
            }
        }
        let background: Vec<String> = words.collect();
        let zipf: Vec<f64> = (1..=background.len().max(1))
            .map(|r| 1.0 / r as f64)
            .collect();
        Self {
            forms,
            background_dist: WeightedIndex::new(zipf).expect("positive weights"),
            background,
        }
    }
}

struct SynthDoc {
    topic: usize,
    /// Concepts actually mentioned through topical tokens.
    concepts: BTreeSet<usize>,
}

fn make_doc<R: Rng>(cfg: &SynthConfig, lex: &Lexicon, rng: &mut R) -> (SynthDoc, String) {
    let topic = rng.gen_range(0..cfg.topics);
    let preferred = rng.gen_range(0..2usize);
    let mut focus: Vec<usize> = (0..cfg.concepts_per_topic).collect();
    focus.shuffle(rng);
    focus.truncate(cfg.focus_concepts);
    let focus_dist =
        WeightedIndex::new((1..=focus.len()).map(|r| 1.0 / r as f64)).expect("positive weights");
    let len = rng.gen_range(cfg.min_len..=cfg.max_len);
    let mut concepts = BTreeSet::new();
    let mut words: Vec<&str> = Vec::with_capacity(len);
    for _ in 0..len {
        let r: f64 = rng.gen();
        if r < cfg.topical_rate {
            let c = focus[focus_dist.sample(rng)];
            let form = if rng.gen::<f64>() < cfg.preferred_form_rate {
                preferred
            } else {
                1 - preferred
            };
            concepts.insert(c);
            words.push(&lex.forms[topic][c][form]);
        } else if r < cfg.topical_rate + cfg.noise_rate {
            let other = (topic + rng.gen_range(1..cfg.topics)) % cfg.topics;
            let c = rng.gen_range(0..cfg.concepts_per_topic);
            words.push(&lex.forms[other][c][rng.gen_range(0..2)]);
        } else {
            words.push(&lex.background[lex.background_dist.sample(rng)]);
        }
    }
    (SynthDoc { topic, concepts }, words.join(" "))
}

struct SynthQuery {
    topic: usize,
    concepts: Vec<usize>,
    text: String,
}

fn make_query<R: Rng>(cfg: &SynthConfig, lex: &Lexicon, rng: &mut R) -> SynthQuery {
    let topic = rng.gen_range(0..cfg.topics);
    let k = rng.gen_range(2..=3);
    let mut all: Vec<usize> = (0..cfg.concepts_per_topic).collect();
    all.shuffle(rng);
    all.truncate(k);
    all.sort_unstable();
    let text = all
        .iter()
        .map(|&c| lex.forms[topic][c][rng.gen_range(0..2)].as_str())
        .collect::<Vec<_>>()
        .join(" ");
    SynthQuery {
        topic,
        concepts: all,
        text,
    }
}

fn url_query<R: Rng>(lex: &Lexicon, rng: &mut R) -> String {
    let w = &lex.background[rng.gen_range(0..lex.background.len())];
    match rng.gen_range(0..3) {
        0 => format!("www.{w}.com"),
        1 => format!("http {w} org"),
        _ => format!("{w}.net login"),
    }
}

/// Relevance grade: same topic and at least one query concept mentioned in
/// either form; the grade is the number of matched concepts, capped at 2.
fn grade(q: &SynthQuery, d: &SynthDoc) -> u32 {
    if q.topic != d.topic {
        return 0;
    }
    (q.concepts.iter().filter(|c| d.concepts.contains(c)).count() as u32).min(2)
}

fn judge(queries: &[SynthQuery], ids: &[String], docs: &[SynthDoc], doc_ids: &[String]) -> Qrels {
    let mut qrels = Qrels::new();
    for (q, qid) in queries.iter().zip(ids) {
        for (d, did) in docs.iter().zip(doc_ids) {
            let g = grade(q, d);
            if g > 0 {
                qrels.insert(qid, did, g);
            }
        }
    }
    qrels
}

/// Draw unique query texts (distinct from everything in `taken`).
fn unique_queries<R: Rng>(
    n: usize,
    cfg: &SynthConfig,
    lex: &Lexicon,
    taken: &mut HashSet<String>,
    rng: &mut R,
) -> Vec<SynthQuery> {
    let mut out = Vec::with_capacity(n);
    let mut attempts = 0usize;
    while out.len() < n && attempts < 100 * n.max(1) {
        attempts += 1;
        let q = make_query(cfg, lex, rng);
        if taken.insert(q.text.clone()) {
            out.push(q);
        }
    }
    out
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthCollection> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let lex = Lexicon::new(cfg, &mut rng);
    let mut docs = Vec::with_capacity(cfg.docs);
    let mut records = Vec::with_capacity(cfg.docs);
    for i in 0..cfg.docs {
        let (d, text) = make_doc(cfg, &lex, &mut rng);
        docs.push(d);
        records.push(RawRecord::new(format!("D{i:05}"), text));
    }
    let doc_ids: Vec<String> = records.iter().map(|r| r.id.clone()).collect();

    let mut taken = HashSet::new();
    let test = unique_queries(cfg.test_queries, cfg, &lex, &mut taken, &mut rng);
    let supervised = unique_queries(cfg.supervised_queries, cfg, &lex, &mut taken, &mut rng);
    let test_ids: Vec<String> = (0..test.len()).map(|i| format!("T{i:03}")).collect();
    let sup_ids: Vec<String> = (0..supervised.len()).map(|i| format!("S{i:03}")).collect();

    // The training log may repeat queries and contains URL-like noise; the
    // training-query filter is expected to clean it.
    let mut train = Vec::with_capacity(cfg.train_queries);
    for i in 0..cfg.train_queries {
        let text = if rng.gen::<f64>() < cfg.url_query_rate {
            url_query(&lex, &mut rng)
        } else {
            make_query(cfg, &lex, &mut rng).text
        };
        train.push(RawRecord::new(format!("W{i:05}"), text));
    }

    let as_records = |qs: &[SynthQuery], ids: &[String]| -> Vec<RawRecord> {
        qs.iter()
            .zip(ids)
            .map(|(q, id)| RawRecord::new(id.clone(), q.text.clone()))
            .collect()
    };
    Ok(SynthCollection {
        test_qrels: judge(&test, &test_ids, &docs, &doc_ids),
        supervised_qrels: judge(&supervised, &sup_ids, &docs, &doc_ids),
        test_queries: as_records(&test, &test_ids),
        supervised_queries: as_records(&supervised, &sup_ids),
        train_queries: train,
        docs: records,
        synonyms: lex
            .forms
            .iter()
            .flatten()
            .map(|[a, b]| (a.clone(), b.clone()))
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthConfig {
        SynthConfig {
            docs: 300,
            train_queries: 200,
            test_queries: 20,
            supervised_queries: 5,
            topics: 6,
            concepts_per_topic: 8,
            focus_concepts: 3,
            background_words: 100,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn generation_is_seeded() {
        let a = generate(&small()).unwrap();
        assert_eq!(a, generate(&small()).unwrap());
        let other = generate(&SynthConfig {
            seed: 99,
            ..small()
        })
        .unwrap();
        assert_ne!(a.docs, other.docs);
    }

    #[test]
    fn shapes_and_judgments() {
        let c = generate(&small()).unwrap();
        assert_eq!(c.docs.len(), 300);
        assert_eq!(c.train_queries.len(), 200);
        assert_eq!(c.test_queries.len(), 20);
        assert_eq!(c.synonyms.len(), 48);
        for d in &c.docs {
            let n = d.text.split(' ').count();
            assert!((60..=160).contains(&n));
        }
        let judged = c.test_qrels.judged_queries();
        assert!(
            judged.len() >= 18,
            "most test queries should have relevant documents"
        );
        let test_texts: HashSet<&str> = c.test_queries.iter().map(|q| q.text.as_str()).collect();
        assert!(c
            .supervised_queries
            .iter()
            .all(|q| !test_texts.contains(q.text.as_str())));
        assert!(c
            .train_queries
            .iter()
            .any(|q| q.text.contains("www.") || q.text.contains("http")));
    }

    #[test]
    fn shared_forms_borrow_from_other_topics() {
        let cfg = SynthConfig {
            shared_form_rate: 1.0,
            ..small()
        };
        let c = generate(&cfg).unwrap();
        let per_topic = cfg.concepts_per_topic;
        let first_forms: Vec<&str> = c.synonyms.iter().map(|(a, _)| a.as_str()).collect();
        for (i, (_, b)) in c.synonyms.iter().enumerate() {
            let owner = first_forms
                .iter()
                .position(|a| a == b)
                .expect("borrowed form");
            assert_ne!(owner / per_topic, i / per_topic);
        }
        assert!(generate(&SynthConfig {
            shared_form_rate: 1.5,
            ..small()
        })
        .is_err());
    }

    #[test]
    fn relevance_includes_synonym_only_documents() {
        let c = generate(&small()).unwrap();
        let form_of: std::collections::HashMap<&str, &str> = c
            .synonyms
            .iter()
            .flat_map(|(a, b)| [(a.as_str(), b.as_str()), (b.as_str(), a.as_str())])
            .collect();
        let mut synonym_only = 0;
        for q in &c.test_queries {
            let words: Vec<&str> = q.text.split(' ').collect();
            for d in c.test_qrels.relevant(&q.id) {
                let text = &c.docs.iter().find(|r| r.id == d).unwrap().text;
                let tokens: HashSet<&str> = text.split(' ').collect();
                let exact = words.iter().any(|w| tokens.contains(w));
                let syn = words.iter().any(|w| tokens.contains(form_of[w]));
                assert!(exact || syn);
                if !exact {
                    synonym_only += 1;
                }
            }
        }
        assert!(synonym_only > 0);
    }
}
