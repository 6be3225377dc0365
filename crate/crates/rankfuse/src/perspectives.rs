//! Per-sentence perspective scores and how they are obtained.
//!
//! Each sentence is judged from several perspectives, each on its own native
//! scale: relevance in [0,1], textual similarity in [0,5], information
//! availability in [0,4], and sentence-level BM25 in [0,∞). Scores are never
//! rescaled internally; the fusion weights double as normalizing factors.
//!
//! Neural scorers run out of process and deliver their outputs through a TSV
//! score file ([`ScoreTable`]). Deterministic lexical stand-ins are built in
//! so the full pipeline runs and can be tuned without any external model.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::corpus::{Query, SentenceSpan};
use crate::error::{Error, Result};
use crate::index::{tokenize, Bm25Params, Index};

/// One scoring perspective and its native output range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScorerKind {
    SentRelevance,
    Sts,
    Sia,
    Bm25Sentence,
}

impl ScorerKind {
    pub const ALL: [ScorerKind; 4] = [
        ScorerKind::SentRelevance,
        ScorerKind::Sts,
        ScorerKind::Sia,
        ScorerKind::Bm25Sentence,
    ];

    /// Closed interval every emitted score must lie in.
    pub fn native_range(self) -> (f64, f64) {
        match self {
            ScorerKind::SentRelevance => (0.0, 1.0),
            ScorerKind::Sts => (0.0, 5.0),
            ScorerKind::Sia => (0.0, 4.0),
            ScorerKind::Bm25Sentence => (0.0, f64::INFINITY),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ScorerKind::SentRelevance => "sent_relevance",
            ScorerKind::Sts => "sts",
            ScorerKind::Sia => "sia",
            ScorerKind::Bm25Sentence => "bm25_sentence",
        }
    }
}

/// Raw perspective scores for one (query, sentence) pair.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PerspectiveScores {
    pub s_rel: f64,
    pub s_sts: f64,
    pub s_sia: f64,
    pub s_bm25_sent: f64,
}

/// What to do when a score file has no entry for a (query, sentence, scorer).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FallbackPolicy {
    Builtin,
    Zero,
    Error,
}

/// Stopwords excluded from the query when counting content terms.
const CONTENT_STOPWORDS: &[&str] = &[
    "a", "an", "the", "is", "are", "was", "were", "be", "been", "being", "of", "in", "on", "at",
    "to", "for", "with", "by", "from", "as", "and", "or", "not", "no", "it", "its", "this",
    "that", "these", "those", "what", "which", "who", "whom", "whose", "when", "where", "why",
    "how", "do", "does", "did", "can", "could", "will", "would", "should", "has", "have", "had",
];

fn is_content_term(token: &str) -> bool {
    !CONTENT_STOPWORDS.contains(&token)
}

/// Multiset token-overlap F1 between two token lists.
fn overlap_f1(query_tokens: &[String], sent_tokens: &[String]) -> f64 {
    if query_tokens.is_empty() || sent_tokens.is_empty() {
        return 0.0;
    }
    let mut counts: HashMap<&str, i64> = HashMap::new();
    for t in query_tokens {
        *counts.entry(t).or_insert(0) += 1;
    }
    let mut overlap = 0i64;
    for t in sent_tokens {
        if let Some(c) = counts.get_mut(t.as_str()) {
            if *c > 0 {
                *c -= 1;
                overlap += 1;
            }
        }
    }
    if overlap == 0 {
        return 0.0;
    }
    let p = overlap as f64 / sent_tokens.len() as f64;
    let r = overlap as f64 / query_tokens.len() as f64;
    2.0 * p * r / (p + r)
}

/// Cosine similarity between tf·idf vectors, with idf taken from the index.
fn tfidf_cosine(query_tokens: &[String], sent_tokens: &[String], index: &Index) -> f64 {
    fn vector(tokens: &[String], index: &Index) -> HashMap<String, f64> {
        let mut tf: HashMap<&str, f64> = HashMap::new();
        for t in tokens {
            *tf.entry(t).or_insert(0.0) += 1.0;
        }
        tf.into_iter()
            .map(|(t, c)| (t.to_string(), c * index.idf(t)))
            .collect()
    }
    let q = vector(query_tokens, index);
    let s = vector(sent_tokens, index);
    let dot: f64 = q
        .iter()
        .filter_map(|(t, wq)| s.get(t).map(|ws| wq * ws))
        .sum();
    let nq: f64 = q.values().map(|w| w * w).sum::<f64>().sqrt();
    let ns: f64 = s.values().map(|w| w * w).sum::<f64>().sqrt();
    if nq == 0.0 || ns == 0.0 {
        return 0.0;
    }
    (dot / (nq * ns)).clamp(0.0, 1.0)
}

/// Fraction of the query's unique content terms that appear in the sentence.
fn content_coverage(query_tokens: &[String], sent_tokens: &[String]) -> f64 {
    let content: std::collections::BTreeSet<&str> = query_tokens
        .iter()
        .map(String::as_str)
        .filter(|t| is_content_term(t))
        .collect();
    if content.is_empty() {
        return 0.0;
    }
    let sent: std::collections::HashSet<&str> = sent_tokens.iter().map(String::as_str).collect();
    let covered = content.iter().filter(|t| sent.contains(**t)).count();
    covered as f64 / content.len() as f64
}

/// Deterministic lexical stand-in for each perspective, on its native scale.
///
/// - sent_relevance: unigram token-overlap F1, in [0,1]
/// - sts: 5 × tf·idf cosine similarity, in [0,5]
/// - sia: 4 × covered fraction of the query's content terms, in [0,4]
/// - bm25_sentence: the sentence-level BM25 score
pub fn score_builtin(
    kind: ScorerKind,
    query: &str,
    sentence_text: &str,
    index: &Index,
    params: &Bm25Params,
) -> f64 {
    let cfg = index.analyzer();
    match kind {
        ScorerKind::SentRelevance => {
            overlap_f1(&tokenize(query, cfg), &tokenize(sentence_text, cfg))
        }
        ScorerKind::Sts => {
            5.0 * tfidf_cosine(&tokenize(query, cfg), &tokenize(sentence_text, cfg), index)
        }
        ScorerKind::Sia => {
            4.0 * content_coverage(&tokenize(query, cfg), &tokenize(sentence_text, cfg))
        }
        ScorerKind::Bm25Sentence => {
            index.bm25_sentence_score(&tokenize(query, cfg), sentence_text, params)
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct PartialScores {
    rel: Option<f64>,
    sts: Option<f64>,
    sia: Option<f64>,
}

/// Per-scorer counts of score-table misses.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct MissReport {
    pub sent_relevance: u64,
    pub sts: u64,
    pub sia: u64,
}

impl MissReport {
    pub fn total(&self) -> u64 {
        self.sent_relevance + self.sts + self.sia
    }
}

/// Precomputed scores keyed by `(query_id, doc_id, sent_index)`.
///
/// The table is immutable after load except for the miss counters, which are
/// atomics so resolution can run concurrently across queries.
#[derive(Debug, Default)]
pub struct ScoreTable {
    entries: HashMap<(String, String, u32), PartialScores>,
    miss_rel: AtomicU64,
    miss_sts: AtomicU64,
    miss_sia: AtomicU64,
}

impl ScoreTable {
    pub fn empty() -> ScoreTable {
        ScoreTable::default()
    }

    /// Load a UTF-8 TSV file with lines
    /// `query_id <TAB> doc_id <TAB> sent_index <TAB> scorer_name <TAB> score`.
    ///
    /// Accepted scorer names are `sent_relevance`, `sts` and `sia`; values
    /// must lie within the scorer's native range.
    pub fn load(path: &Path) -> Result<ScoreTable> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut table = ScoreTable::empty();
        for (lineno, line) in BufReader::new(file).lines().enumerate() {
            let lineno = lineno + 1;
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let [query_id, doc_id, sent_index, scorer, value] = fields[..] else {
                return Err(Error::malformed(
                    path,
                    lineno,
                    format!("expected 5 tab-separated fields, got {}", fields.len()),
                ));
            };
            let sent_index: u32 = sent_index
                .parse()
                .map_err(|_| Error::malformed(path, lineno, format!("bad sent_index \"{sent_index}\"")))?;
            let value: f64 = value
                .parse()
                .map_err(|_| Error::malformed(path, lineno, format!("bad score \"{value}\"")))?;
            let kind = match scorer {
                "sent_relevance" => ScorerKind::SentRelevance,
                "sts" => ScorerKind::Sts,
                "sia" => ScorerKind::Sia,
                other => {
                    return Err(Error::UnknownScorer {
                        path: path.into(),
                        line: lineno,
                        name: other.to_string(),
                    })
                }
            };
            let (lo, hi) = kind.native_range();
            if !(value >= lo && value <= hi) {
                return Err(Error::ScoreOutOfRange {
                    path: path.into(),
                    line: lineno,
                    scorer: kind.as_str().to_string(),
                    value,
                    lo,
                    hi,
                });
            }
            let entry = table
                .entries
                .entry((query_id.to_string(), doc_id.to_string(), sent_index))
                .or_default();
            let slot = match kind {
                ScorerKind::SentRelevance => &mut entry.rel,
                ScorerKind::Sts => &mut entry.sts,
                ScorerKind::Sia => &mut entry.sia,
                ScorerKind::Bm25Sentence => unreachable!(),
            };
            if slot.replace(value).is_some() {
                return Err(Error::malformed(
                    path,
                    lineno,
                    format!("duplicate {scorer} entry for ({query_id}, {doc_id}, {sent_index})"),
                ));
            }
        }
        Ok(table)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Snapshot of the per-scorer miss counters.
    pub fn miss_report(&self) -> MissReport {
        MissReport {
            sent_relevance: self.miss_rel.load(Ordering::Relaxed),
            sts: self.miss_sts.load(Ordering::Relaxed),
            sia: self.miss_sia.load(Ordering::Relaxed),
        }
    }
}

/// Resolve the four perspective scores for one (query, sentence) pair.
///
/// Table entries win; missing entries follow the fallback policy and bump the
/// per-scorer miss counter. The sentence-level BM25 score is always computed
/// from the index.
pub fn resolve_scores(
    query: &Query,
    span: &SentenceSpan,
    table: &ScoreTable,
    index: &Index,
    params: &Bm25Params,
    policy: FallbackPolicy,
) -> Result<PerspectiveScores> {
    let key = (query.query_id.clone(), span.doc_id.clone(), span.sent_index);
    let partial = table.entries.get(&key).copied().unwrap_or_default();
    let mut resolve_one = |kind: ScorerKind, present: Option<f64>, counter: &AtomicU64| -> Result<f64> {
        if let Some(v) = present {
            return Ok(v);
        }
        counter.fetch_add(1, Ordering::Relaxed);
        match policy {
            FallbackPolicy::Builtin => Ok(score_builtin(kind, &query.body, &span.text, index, params)),
            FallbackPolicy::Zero => Ok(0.0),
            FallbackPolicy::Error => Err(Error::MissingScore {
                query_id: query.query_id.clone(),
                doc_id: span.doc_id.clone(),
                sent_index: span.sent_index,
                scorer: kind.as_str().to_string(),
            }),
        }
    };
    let s_rel = resolve_one(ScorerKind::SentRelevance, partial.rel, &table.miss_rel)?;
    let s_sts = resolve_one(ScorerKind::Sts, partial.sts, &table.miss_sts)?;
    let s_sia = resolve_one(ScorerKind::Sia, partial.sia, &table.miss_sia)?;
    let s_bm25_sent =
        index.bm25_sentence_score(&tokenize(&query.body, index.analyzer()), &span.text, params);
    Ok(PerspectiveScores {
        s_rel,
        s_sts,
        s_sia,
        s_bm25_sent,
    })
}
