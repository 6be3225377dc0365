//! Inverted index with Okapi BM25 scoring.
//!
//! Documents are scored with the non-negative idf variant
//!
//! ```text
//! score(q, d) = Σ_t idf(t) · tf·(k1+1) / (tf + k1·(1−b + b·dl/avgdl))
//! idf(t)      = ln(1 + (N − df + 0.5) / (df + 0.5))
//! ```
//!
//! summed over the unique query terms. The same statistics also back a
//! sentence-level score where `tf` and `dl` are counted within one sentence
//! while `df`, `N` and `avgdl` stay at the document level.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Document;
use crate::error::{Error, Result};

/// Tokenization switches applied to documents, queries and sentences alike.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalyzerConfig {
    pub lowercase: bool,
    pub stopword_removal: bool,
    pub stopword_list: BTreeSet<String>,
}

impl Default for AnalyzerConfig {
    fn default() -> Self {
        AnalyzerConfig {
            lowercase: true,
            stopword_removal: false,
            stopword_list: BTreeSet::new(),
        }
    }
}

/// Split on runs of non-alphanumeric characters, lowercasing and dropping
/// stopwords as configured. Empty tokens are discarded.
pub fn tokenize(text: &str, config: &AnalyzerConfig) -> Vec<String> {
    let mut tokens = Vec::new();
    for raw in text.split(|c: char| !c.is_alphanumeric()) {
        if raw.is_empty() {
            continue;
        }
        let token = if config.lowercase {
            raw.to_lowercase()
        } else {
            raw.to_string()
        };
        if config.stopword_removal && config.stopword_list.contains(&token) {
            continue;
        }
        tokens.push(token);
    }
    tokens
}

/// Okapi parameters. The conventional defaults are used unless overridden.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.2, b: 0.75 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct DocEntry {
    id: String,
    len: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
struct Posting {
    doc: u32,
    tf: u32,
}

/// Immutable inverted index over a corpus.
#[derive(Debug, Clone)]
pub struct Index {
    analyzer: AnalyzerConfig,
    docs: Vec<DocEntry>,
    by_id: HashMap<String, u32>,
    postings: BTreeMap<String, Vec<Posting>>,
    avgdl: f64,
}

/// Keep the first occurrence of each term, preserving query order so that
/// score summation order is identical across all scoring paths.
fn unique_terms(terms: &[String]) -> Vec<&str> {
    let mut seen = HashSet::new();
    terms
        .iter()
        .map(String::as_str)
        .filter(|t| seen.insert(*t))
        .collect()
}

impl Index {
    /// Build an index over `title + " " + abstract` of every document.
    ///
    /// Fails on an empty corpus or a corpus with no tokens at all, since the
    /// average document length would be undefined.
    pub fn build(corpus: &[Document], analyzer: AnalyzerConfig) -> Result<Index> {
        if corpus.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let mut docs = Vec::with_capacity(corpus.len());
        let mut by_id = HashMap::with_capacity(corpus.len());
        let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
        let mut total_len: u64 = 0;
        for (ordinal, doc) in corpus.iter().enumerate() {
            let ordinal = ordinal as u32;
            if by_id.insert(doc.doc_id.clone(), ordinal).is_some() {
                return Err(Error::DuplicateDocId(doc.doc_id.clone()));
            }
            let tokens = tokenize(&doc.full_text(), &analyzer);
            let mut counts: BTreeMap<&str, u32> = BTreeMap::new();
            for t in &tokens {
                *counts.entry(t).or_insert(0) += 1;
            }
            for (term, tf) in counts {
                postings
                    .entry(term.to_string())
                    .or_default()
                    .push(Posting { doc: ordinal, tf });
            }
            total_len += tokens.len() as u64;
            docs.push(DocEntry {
                id: doc.doc_id.clone(),
                len: tokens.len() as u32,
            });
        }
        if total_len == 0 {
            return Err(Error::EmptyCorpus);
        }
        let avgdl = total_len as f64 / docs.len() as f64;
        Ok(Index {
            analyzer,
            docs,
            by_id,
            postings,
            avgdl,
        })
    }

    pub fn doc_count(&self) -> usize {
        self.docs.len()
    }

    pub fn avgdl(&self) -> f64 {
        self.avgdl
    }

    pub fn vocab_size(&self) -> usize {
        self.postings.len()
    }

    pub fn analyzer(&self) -> &AnalyzerConfig {
        &self.analyzer
    }

    pub fn contains_doc(&self, doc_id: &str) -> bool {
        self.by_id.contains_key(doc_id)
    }

    /// Document frequency of a term; 0 for unseen terms.
    pub fn doc_freq(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, Vec::len)
    }

    /// Non-negative inverse document frequency: `ln(1 + (N−df+0.5)/(df+0.5))`.
    pub fn idf(&self, term: &str) -> f64 {
        let n = self.docs.len() as f64;
        let df = self.doc_freq(term) as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    fn term_part(&self, tf: u32, dl: f64, params: &Bm25Params) -> f64 {
        let tf = tf as f64;
        tf * (params.k1 + 1.0) / (tf + params.k1 * (1.0 - params.b + params.b * dl / self.avgdl))
    }

    /// BM25 score of one document for the given query terms.
    pub fn bm25_score(&self, query_terms: &[String], doc_id: &str, params: &Bm25Params) -> Result<f64> {
        let &ordinal = self
            .by_id
            .get(doc_id)
            .ok_or_else(|| Error::UnknownDocId(doc_id.to_string()))?;
        let dl = self.docs[ordinal as usize].len as f64;
        let mut score = 0.0;
        for term in unique_terms(query_terms) {
            let Some(list) = self.postings.get(term) else {
                continue;
            };
            let Ok(pos) = list.binary_search_by_key(&ordinal, |p| p.doc) else {
                continue;
            };
            score += self.idf(term) * self.term_part(list[pos].tf, dl, params);
        }
        Ok(score)
    }

    /// Retrieve the top `k` documents with positive BM25 score, ordered by
    /// descending score with ties broken by ascending `doc_id`.
    pub fn retrieve_topk(&self, query: &str, k: usize, params: &Bm25Params) -> Vec<(String, f64)> {
        let terms = tokenize(query, &self.analyzer);
        let mut acc: HashMap<u32, f64> = HashMap::new();
        for term in unique_terms(&terms) {
            let Some(list) = self.postings.get(term) else {
                continue;
            };
            let idf = self.idf(term);
            for p in list {
                let dl = self.docs[p.doc as usize].len as f64;
                *acc.entry(p.doc).or_insert(0.0) += idf * self.term_part(p.tf, dl, params);
            }
        }
        let mut scored: Vec<(String, f64)> = acc
            .into_iter()
            .filter(|&(_, s)| s > 0.0)
            .map(|(ord, s)| (self.docs[ord as usize].id.clone(), s))
            .collect();
        scored.sort_unstable_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        scored.truncate(k);
        scored
    }

    /// BM25 with `tf` and `dl` counted inside one sentence while `df`, `N`
    /// and `avgdl` come from the document-level index.
    pub fn bm25_sentence_score(
        &self,
        query_terms: &[String],
        sentence_text: &str,
        params: &Bm25Params,
    ) -> f64 {
        let sent_tokens = tokenize(sentence_text, &self.analyzer);
        let dl = sent_tokens.len() as f64;
        let mut counts: HashMap<&str, u32> = HashMap::new();
        for t in &sent_tokens {
            *counts.entry(t).or_insert(0) += 1;
        }
        let mut score = 0.0;
        for term in unique_terms(query_terms) {
            let Some(&tf) = counts.get(term) else {
                continue;
            };
            score += self.idf(term) * self.term_part(tf, dl, params);
        }
        score
    }

    /// Persist as JSON lines: a header record, one record per document in
    /// build order, then one record per term in sorted order. The encoding
    /// round-trips bit-exactly.
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let write_err = |e: serde_json::Error| {
            Error::io(path, std::io::Error::new(std::io::ErrorKind::Other, e))
        };
        let header = IndexHeader {
            n_docs: self.docs.len(),
            avgdl: self.avgdl,
            analyzer: self.analyzer.clone(),
        };
        serde_json::to_writer(&mut w, &header).map_err(write_err)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        for d in &self.docs {
            serde_json::to_writer(&mut w, d).map_err(write_err)?;
            w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        for (term, postings) in &self.postings {
            let rec = TermRecord {
                term: term.clone(),
                postings: postings.clone(),
            };
            serde_json::to_writer(&mut w, &rec).map_err(write_err)?;
            w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Index> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(file).lines().enumerate();
        let mut next = |what: &str| -> Result<(usize, String)> {
            match lines.next() {
                Some((i, Ok(line))) => Ok((i + 1, line)),
                Some((_, Err(e))) => Err(Error::io(path, e)),
                None => Err(Error::malformed(path, 0, format!("missing {what}"))),
            }
        };
        let (lineno, line) = next("header")?;
        let header: IndexHeader = serde_json::from_str(&line)
            .map_err(|e| Error::malformed(path, lineno, e.to_string()))?;
        let mut docs = Vec::with_capacity(header.n_docs);
        let mut by_id = HashMap::with_capacity(header.n_docs);
        let mut total_len: u64 = 0;
        for _ in 0..header.n_docs {
            let (lineno, line) = next("document record")?;
            let d: DocEntry = serde_json::from_str(&line)
                .map_err(|e| Error::malformed(path, lineno, e.to_string()))?;
            if by_id.insert(d.id.clone(), docs.len() as u32).is_some() {
                return Err(Error::DuplicateDocId(d.id));
            }
            total_len += d.len as u64;
            docs.push(d);
        }
        let mean = total_len as f64 / docs.len().max(1) as f64;
        if docs.is_empty() || (mean - header.avgdl).abs() > 1e-9 {
            return Err(Error::malformed(
                path,
                1,
                format!("header avgdl {} disagrees with document lengths (mean {mean})", header.avgdl),
            ));
        }
        let mut postings = BTreeMap::new();
        for (i, line) in lines {
            let lineno = i + 1;
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: TermRecord = serde_json::from_str(&line)
                .map_err(|e| Error::malformed(path, lineno, e.to_string()))?;
            for p in &rec.postings {
                if p.doc as usize >= docs.len() || p.tf == 0 {
                    return Err(Error::malformed(
                        path,
                        lineno,
                        format!("invalid posting for term \"{}\"", rec.term),
                    ));
                }
            }
            postings.insert(rec.term, rec.postings);
        }
        Ok(Index {
            analyzer: header.analyzer,
            docs,
            by_id,
            postings,
            avgdl: header.avgdl,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct IndexHeader {
    n_docs: usize,
    avgdl: f64,
    analyzer: AnalyzerConfig,
}

#[derive(Serialize, Deserialize)]
struct TermRecord {
    term: String,
    postings: Vec<Posting>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn doc(id: &str, title: &str, abstract_text: &str) -> Document {
        Document {
            doc_id: id.into(),
            title: title.into(),
            abstract_text: abstract_text.into(),
        }
    }

    fn strs(terms: &[&str]) -> Vec<String> {
        terms.iter().map(|s| s.to_string()).collect()
    }

    /// Five hand-countable documents used across the scoring tests.
    ///
    /// Lengths 6,6,6,5,5 → avgdl = 5.6; df(trh)=3, df(heart)=2.
    fn fixture() -> Index {
        let corpus = vec![
            doc("d1", "trh heart", "trh improves heart rate"),
            doc("d2", "trh gut", "trh in the gut"),
            doc("d3", "heart disease", "chronic heart disease study"),
            doc("d4", "kidney", "kidney function and trh"),
            doc("d5", "placebo", "placebo control group data"),
        ];
        Index::build(&corpus, AnalyzerConfig::default()).unwrap()
    }

    #[test]
    fn tokenize_rules() {
        let cfg = AnalyzerConfig::default();
        assert_eq!(
            tokenize("TRH improves cardiac contractility.", &cfg),
            strs(&["trh", "improves", "cardiac", "contractility"])
        );
        assert_eq!(tokenize("", &cfg), Vec::<String>::new());
        assert_eq!(tokenize("4-fluoro-Im-TRH", &cfg), strs(&["4", "fluoro", "im", "trh"]));
    }

    #[test]
    fn tokenize_stopword_removal() {
        let cfg = AnalyzerConfig {
            stopword_removal: true,
            stopword_list: ["the".to_string(), "in".to_string()].into(),
            ..AnalyzerConfig::default()
        };
        assert_eq!(tokenize("TRH in the gut", &cfg), strs(&["trh", "gut"]));
    }

    #[test]
    fn build_counts_and_avgdl() {
        let idx = Index::build(&[doc("d", "a", "b a")], AnalyzerConfig::default()).unwrap();
        assert_eq!(idx.doc_count(), 1);
        assert_eq!(idx.avgdl(), 3.0);
        assert_eq!(idx.doc_freq("a"), 1);
        assert_eq!(idx.postings["a"], vec![Posting { doc: 0, tf: 2 }]);
        assert_eq!(idx.postings["b"], vec![Posting { doc: 0, tf: 1 }]);

        let idx2 = Index::build(
            &[doc("x", "a b", ""), doc("y", "a b c", "d")],
            AnalyzerConfig::default(),
        )
        .unwrap();
        assert_eq!(idx2.avgdl(), 3.0);
    }

    #[test]
    fn build_rejects_empty_corpus() {
        assert!(matches!(
            Index::build(&[], AnalyzerConfig::default()),
            Err(Error::EmptyCorpus)
        ));
    }

    #[test]
    fn score_zero_when_no_query_term_matches() {
        let idx = fixture();
        let s = idx
            .bm25_score(&strs(&["unseen", "words"]), "d1", &Bm25Params::default())
            .unwrap();
        assert_eq!(s, 0.0);
    }

    #[test]
    fn single_term_score_matches_closed_formula() {
        // N=2, df=1, tf=1, dl=avgdl collapses the formula to ln 2.
        let idx = Index::build(
            &[doc("d1", "apple banana", ""), doc("d2", "cherry durian", "")],
            AnalyzerConfig::default(),
        )
        .unwrap();
        let s = idx.bm25_score(&strs(&["apple"]), "d1", &Bm25Params::default()).unwrap();
        assert_relative_eq!(s, 0.693_147_180_559_945_3, epsilon = 1e-12);
    }

    #[test]
    fn duplicate_query_terms_score_once() {
        let idx = fixture();
        let p = Bm25Params::default();
        let once = idx.bm25_score(&strs(&["trh"]), "d1", &p).unwrap();
        let twice = idx.bm25_score(&strs(&["trh", "trh"]), "d1", &p).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn unknown_doc_is_an_error() {
        let idx = fixture();
        assert!(matches!(
            idx.bm25_score(&strs(&["trh"]), "nope", &Bm25Params::default()),
            Err(Error::UnknownDocId(_))
        ));
    }

    #[test]
    fn fixture_scores_match_hand_evaluation() {
        // Independently evaluated from the closed formula with k1=1.2, b=0.75.
        let idx = fixture();
        let p = Bm25Params::default();
        let q = strs(&["trh", "heart"]);
        let expect = [
            ("d1", 1.906_587_716_983_233_3),
            ("d3", 1.180_062_893_238_517),
            ("d2", 0.726_524_823_744_716_3),
            ("d4", 0.563_704_319_951_333_3),
        ];
        for (id, want) in expect {
            let got = idx.bm25_score(&q, id, &p).unwrap();
            assert_relative_eq!(got, want, epsilon = 1e-9);
        }
        assert_eq!(idx.bm25_score(&q, "d5", &p).unwrap(), 0.0);
    }

    #[test]
    fn topk_matches_exhaustive_scoring() {
        let idx = fixture();
        let p = Bm25Params::default();
        let got = idx.retrieve_topk("trh heart", 10, &p);
        // Brute force: score every document, drop zeros, sort by the tie rule.
        let mut brute: Vec<(String, f64)> = ["d1", "d2", "d3", "d4", "d5"]
            .iter()
            .map(|id| {
                let s = idx.bm25_score(&strs(&["trh", "heart"]), id, &p).unwrap();
                (id.to_string(), s)
            })
            .filter(|&(_, s)| s > 0.0)
            .collect();
        brute.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        assert_eq!(got, brute);
        assert_eq!(got.len(), 4);
        assert_eq!(got[0].0, "d1");
    }

    #[test]
    fn topk_truncates_and_breaks_ties_by_doc_id() {
        let corpus = vec![
            doc("b", "same text", ""),
            doc("a", "same text", ""),
            doc("c", "other words", ""),
        ];
        let idx = Index::build(&corpus, AnalyzerConfig::default()).unwrap();
        let p = Bm25Params::default();
        let all = idx.retrieve_topk("same", 10, &p);
        assert_eq!(all.len(), 2);
        assert_eq!(all[0].0, "a");
        assert_eq!(all[1].0, "b");
        assert_eq!(all[0].1, all[1].1);
        assert_eq!(idx.retrieve_topk("same", 1, &p).len(), 1);
    }

    #[test]
    fn sentence_score_cases() {
        let idx = fixture();
        let p = Bm25Params::default();
        assert_eq!(idx.bm25_sentence_score(&strs(&["trh"]), "no match here", &p), 0.0);
        // Single-token sentence equal to the query term, hand evaluated.
        let s = idx.bm25_sentence_score(&strs(&["trh"]), "trh", &p);
        assert_relative_eq!(s, 0.811_789_350_736_761_2, epsilon = 1e-9);
        let s2 = idx.bm25_sentence_score(&strs(&["trh", "heart"]), "trh improves heart rate", &p);
        assert_relative_eq!(s2, 1.601_673_872_539_223_7, epsilon = 1e-9);
    }

    #[test]
    fn sentence_score_ignores_position() {
        let idx = fixture();
        let p = Bm25Params::default();
        let q = strs(&["heart"]);
        // Same sentence text scores the same wherever it sits in a document.
        let a = idx.bm25_sentence_score(&q, "the heart rate rose", &p);
        let b = idx.bm25_sentence_score(&q, "the heart rate rose", &p);
        assert_eq!(a, b);
    }

    #[test]
    fn save_load_roundtrip_is_bit_exact() {
        let idx = fixture();
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("index.jsonl");
        let p2 = dir.path().join("index2.jsonl");
        idx.save(&p1).unwrap();
        let loaded = Index::load(&p1).unwrap();
        loaded.save(&p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
        let params = Bm25Params::default();
        assert_eq!(
            idx.retrieve_topk("trh heart", 10, &params),
            loaded.retrieve_topk("trh heart", 10, &params)
        );
    }
}
