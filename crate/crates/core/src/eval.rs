//! TREC-style evaluation: run and qrels files, MAP@1000, P@20, nDCG@20, a
//! paired two-tailed t-test with Bonferroni correction, and the correlation
//! between learned term weights and idf.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fsutil;
use crate::index::InvertedIndex;
use crate::nn::EmbeddingTable;

pub const MAP_CUTOFF: usize = 1000;
pub const PRECISION_K: usize = 20;
pub const NDCG_K: usize = 20;
pub const SIGNIFICANCE_LEVEL: f64 = 0.05;

/// Graded judgments: query id -> doc id -> grade.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Qrels {
    judgments: BTreeMap<String, HashMap<String, u32>>,
}

impl Qrels {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, query: &str, doc: &str, grade: u32) {
        self.judgments
            .entry(query.to_string())
            .or_default()
            .insert(doc.to_string(), grade);
    }

    pub fn grade(&self, query: &str, doc: &str) -> u32 {
        self.judgments
            .get(query)
            .and_then(|m| m.get(doc))
            .copied()
            .unwrap_or(0)
    }

    pub fn for_query(&self, query: &str) -> Option<&HashMap<String, u32>> {
        self.judgments.get(query)
    }

    /// Judged-relevant documents (grade > 0) of a query, sorted by id.
    pub fn relevant<'a>(&'a self, query: &str) -> impl Iterator<Item = &'a str> + 'a {
        let mut docs: Vec<&str> = self
            .judgments
            .get(query)
            .map(|m| {
                m.iter()
                    .filter(|(_, &g)| g > 0)
                    .map(|(d, _)| d.as_str())
                    .collect()
            })
            .unwrap_or_default();
        docs.sort_unstable();
        docs.into_iter()
    }

    pub fn num_relevant(&self, query: &str) -> usize {
        self.judgments
            .get(query)
            .map_or(0, |m| m.values().filter(|&&g| g > 0).count())
    }

    /// Queries with at least one judged-relevant document, sorted.
    pub fn judged_queries(&self) -> Vec<&str> {
        self.judgments
            .iter()
            .filter(|(_, m)| m.values().any(|&g| g > 0))
            .map(|(q, _)| q.as_str())
            .collect()
    }

    pub fn queries(&self) -> impl Iterator<Item = &str> {
        self.judgments.keys().map(String::as_str)
    }

    /// Parse `qid 0 docid grade` lines; `#` lines are skipped.
    pub fn parse(path: &Path, text: &str) -> Result<Self> {
        let mut q = Self::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split_whitespace().collect();
            if cols.len() != 4 {
                return Err(Error::parse(path, i + 1, "expected `qid 0 docid grade`"));
            }
            let grade: i64 = cols[3]
                .parse()
                .map_err(|_| Error::parse(path, i + 1, format!("bad grade `{}`", cols[3])))?;
            // Negative grades (e.g. spam labels) count as non-relevant.
            q.insert(cols[0], cols[2], grade.max(0) as u32);
        }
        Ok(q)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(path, &fsutil::read_string(path)?)
    }

    pub fn to_trec(&self, header: &str) -> String {
        let mut out = String::from(header);
        for (q, m) in &self.judgments {
            let mut docs: Vec<(&String, &u32)> = m.iter().collect();
            docs.sort();
            for (d, g) in docs {
                let _ = writeln!(out, "{q} 0 {d} {g}");
            }
        }
        out
    }
}

/// A ranked run: query id -> ordered `(doc id, score)`; list order is final.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Run {
    pub tag: String,
    pub rankings: BTreeMap<String, Vec<(String, f64)>>,
}

impl Run {
    pub fn new(tag: impl Into<String>) -> Self {
        Self {
            tag: tag.into(),
            rankings: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, query: &str, ranked: Vec<(String, f64)>) {
        self.rankings.insert(query.to_string(), ranked);
    }

    pub fn ranked_docs(&self, query: &str) -> Vec<&str> {
        self.rankings
            .get(query)
            .map(|r| r.iter().map(|(d, _)| d.as_str()).collect())
            .unwrap_or_default()
    }

    /// `qid Q0 docid rank score tag` lines.
    pub fn to_trec(&self, header: &str) -> String {
        let mut out = String::from(header);
        for (q, ranked) in &self.rankings {
            for (i, (d, s)) in ranked.iter().enumerate() {
                let _ = writeln!(out, "{q} Q0 {d} {} {s:.9e} {}", i + 1, self.tag);
            }
        }
        out
    }

    /// Parse a run; documents are ordered by their rank column.
    pub fn parse(path: &Path, text: &str) -> Result<Self> {
        let mut run = Run::default();
        let mut rows: BTreeMap<String, Vec<(usize, String, f64)>> = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split_whitespace().collect();
            if cols.len() != 6 {
                return Err(Error::parse(
                    path,
                    i + 1,
                    "expected `qid Q0 docid rank score tag`",
                ));
            }
            let rank: usize = cols[3]
                .parse()
                .map_err(|_| Error::parse(path, i + 1, format!("bad rank `{}`", cols[3])))?;
            let score: f64 = cols[4]
                .parse()
                .map_err(|_| Error::parse(path, i + 1, format!("bad score `{}`", cols[4])))?;
            run.tag = cols[5].to_string();
            rows.entry(cols[0].to_string())
                .or_default()
                .push((rank, cols[2].to_string(), score));
        }
        for (q, mut r) in rows {
            r.sort_by_key(|x| x.0);
            run.rankings
                .insert(q, r.into_iter().map(|(_, d, s)| (d, s)).collect());
        }
        Ok(run)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(path, &fsutil::read_string(path)?)
    }
}

/// Uninterpolated average precision over the top `cutoff` documents,
/// normalized by the total number of judged-relevant documents.
pub fn average_precision(
    ranked: &[&str],
    qrels: Option<&HashMap<String, u32>>,
    cutoff: usize,
) -> f64 {
    let Some(judged) = qrels else { return 0.0 };
    let total = judged.values().filter(|&&g| g > 0).count();
    if total == 0 {
        return 0.0;
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, d) in ranked.iter().take(cutoff).enumerate() {
        if judged.get(*d).is_some_and(|&g| g > 0) {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    sum / total as f64
}

/// Relevant documents in the top `k`, divided by `k`.
pub fn precision_at(ranked: &[&str], qrels: Option<&HashMap<String, u32>>, k: usize) -> f64 {
    let Some(judged) = qrels else { return 0.0 };
    let hits = ranked
        .iter()
        .take(k)
        .filter(|d| judged.get(**d).is_some_and(|&g| g > 0))
        .count();
    hits as f64 / k as f64
}

fn dcg(grades: impl Iterator<Item = u32>) -> f64 {
    grades
        .enumerate()
        .map(|(i, g)| (2f64.powi(g as i32) - 1.0) / ((i + 2) as f64).log2())
        .sum()
}

/// nDCG with gain `2^rel - 1` and discount `log2(i + 1)`.
pub fn ndcg_at(ranked: &[&str], qrels: Option<&HashMap<String, u32>>, k: usize) -> f64 {
    let Some(judged) = qrels else { return 0.0 };
    let mut ideal: Vec<u32> = judged.values().copied().filter(|&g| g > 0).collect();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg = dcg(ideal.into_iter().take(k));
    if idcg == 0.0 {
        return 0.0;
    }
    dcg(ranked
        .iter()
        .take(k)
        .map(|d| judged.get(*d).copied().unwrap_or(0)))
        / idcg
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueryMetrics {
    pub ap: f64,
    pub p20: f64,
    pub ndcg20: f64,
}

pub const METRIC_NAMES: [&str; 3] = ["map", "P_20", "ndcg_cut_20"];

impl QueryMetrics {
    pub fn get(&self, metric: usize) -> f64 {
        [self.ap, self.p20, self.ndcg20][metric]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub tag: String,
    /// Judged queries in sorted order; queries absent from the run score 0.
    pub per_query: BTreeMap<String, QueryMetrics>,
}

impl MetricReport {
    pub fn mean(&self, metric: usize) -> f64 {
        if self.per_query.is_empty() {
            return 0.0;
        }
        self.per_query.values().map(|m| m.get(metric)).sum::<f64>() / self.per_query.len() as f64
    }

    pub fn map(&self) -> f64 {
        self.mean(0)
    }

    pub fn p20(&self) -> f64 {
        self.mean(1)
    }

    pub fn ndcg20(&self) -> f64 {
        self.mean(2)
    }

    pub fn vector(&self, metric: usize) -> Vec<f64> {
        self.per_query.values().map(|m| m.get(metric)).collect()
    }

    /// `query_id metric value` rows followed by the `all` summary block.
    pub fn to_tsv(&self, header: &str) -> String {
        let mut out = String::from(header);
        out.push_str("query_id\tmetric\tvalue\n");
        for (q, m) in &self.per_query {
            for (i, name) in METRIC_NAMES.iter().enumerate() {
                let _ = writeln!(out, "{q}\t{name}\t{:.6}", m.get(i));
            }
        }
        for (i, name) in METRIC_NAMES.iter().enumerate() {
            let _ = writeln!(out, "all\t{name}\t{:.6}", self.mean(i));
        }
        let _ = writeln!(out, "all\tnum_q\t{}", self.per_query.len());
        out
    }
}

/// Evaluate a run over every judged query of `qrels`.
pub fn evaluate(run: &Run, qrels: &Qrels) -> MetricReport {
    let per_query = qrels
        .judged_queries()
        .par_iter()
        .map(|&q| {
            let ranked = run.ranked_docs(q);
            let j = qrels.for_query(q);
            (
                q.to_string(),
                QueryMetrics {
                    ap: average_precision(&ranked, j, MAP_CUTOFF),
                    p20: precision_at(&ranked, j, PRECISION_K),
                    ndcg20: ndcg_at(&ranked, j, NDCG_K),
                },
            )
        })
        .collect::<Vec<_>>()
        .into_iter()
        .collect();
    MetricReport {
        tag: run.tag.clone(),
        per_query,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TTest {
    pub n: usize,
    pub mean_diff: f64,
    pub t: f64,
    pub p_value: f64,
    pub threshold: f64,
    pub significant: bool,
}

/// Paired two-tailed t-test of `a - b`, significant iff
/// `p < 0.05 / num_comparisons`. With zero variance of the differences the
/// p-value is 1 when the means agree and 0 otherwise.
pub fn paired_ttest(a: &[f64], b: &[f64], num_comparisons: usize) -> Result<TTest> {
    if a.len() != b.len() {
        return Err(Error::Shape {
            expected: a.len(),
            got: b.len(),
        });
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::InvalidArgument(
            "paired t-test needs at least two pairs".into(),
        ));
    }
    let threshold = SIGNIFICANCE_LEVEL / num_comparisons.max(1) as f64;
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = diffs.iter().sum::<f64>() / n as f64;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let (t, p) = if var == 0.0 {
        if mean == 0.0 {
            (0.0, 1.0)
        } else {
            (mean.signum() * f64::INFINITY, 0.0)
        }
    } else {
        let t = mean / (var / n as f64).sqrt();
        let df = (n - 1) as f64;
        (
            t,
            regularized_incomplete_beta(df / 2.0, 0.5, df / (df + t * t)),
        )
    };
    Ok(TTest {
        n,
        mean_diff: mean,
        t,
        p_value: p,
        threshold,
        significant: p < threshold,
    })
}

fn ln_gamma(x: f64) -> f64 {
    // Lanczos approximation, g = 7, n = 9.
    #[allow(clippy::excessive_precision)]
    const C: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_59,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_571_6e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = C[0];
    let t = x + 7.5;
    for (i, &c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Continued fraction for the incomplete beta (modified Lentz).
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=300 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < 1e-15 {
            break;
        }
    }
    h
}

/// Regularized incomplete beta function `I_x(a, b)`.
pub fn regularized_incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Shape {
            expected: x.len(),
            got: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::InvalidArgument(
            "correlation needs at least two points".into(),
        ));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::InvalidArgument(
            "correlation undefined for a constant series".into(),
        ));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// One point of the weight/idf scatter.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightIdf {
    pub term: String,
    pub weight: f64,
    pub idf: f64,
}

/// Raw learned weight and idf of every term with `df > 0`.
pub fn weight_idf_points(table: &EmbeddingTable, index: &InvertedIndex) -> Vec<WeightIdf> {
    let vocab = index.vocab();
    (0..vocab.len() as u32)
        .filter(|&t| index.df(t) > 0)
        .map(|t| WeightIdf {
            term: vocab.term_of(t).unwrap_or_default().to_string(),
            weight: table.weights[t as usize],
            idf: index.idf(t),
        })
        .collect()
}

/// Pearson correlation between raw learned term weights and idf.
pub fn weight_idf_correlation(table: &EmbeddingTable, index: &InvertedIndex) -> Result<f64> {
    let pts = weight_idf_points(table, index);
    let w: Vec<f64> = pts.iter().map(|p| p.weight).collect();
    let i: Vec<f64> = pts.iter().map(|p| p.idf).collect();
    pearson(&w, &i)
}

pub fn weight_idf_csv(header: &str, points: &[WeightIdf]) -> String {
    let mut out = String::from(header);
    out.push_str("term,weight,idf\n");
    for p in points {
        let _ = writeln!(out, "{},{:.9e},{:.9e}", p.term, p.weight, p.idf);
    }
    out
}
