//! Score fusion: recursive document and sentence ranking.
//!
//! Two weighted sums drive the ranking. A sentence's base score combines the
//! three perspective scores,
//!
//! ```text
//! base(s)  = α1·s_rel + α2·s_sts + α3·s_sia
//! ```
//!
//! a document's score combines its retrieval score with its three best
//! sentence base scores,
//!
//! ```text
//! S_DOC(d) = β1·bm25(d) + β2·(w1·t1 + w2·t2 + w3·t3)
//! ```
//!
//! and each sentence's final score adds a document term back in,
//!
//! ```text
//! final(s) = base(s) + α4·doc_term(d)
//! ```
//!
//! where `doc_term` is `S_DOC` by default or the document's BM25 score when
//! `alpha4_source = doc_bm25`. The mutual dependence between sentence and
//! document scores is resolved in exactly three passes: base scores first,
//! document scores from base scores, final sentence scores last. No
//! fixed-point iteration is involved.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::perspectives::PerspectiveScores;

/// What the sentence-level `α4` term multiplies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alpha4Source {
    /// The fused document score (default).
    DocScore,
    /// The document's raw BM25 retrieval score.
    DocBm25,
}

impl fmt::Display for Alpha4Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Alpha4Source::DocScore => "doc_score",
            Alpha4Source::DocBm25 => "doc_bm25",
        })
    }
}

impl FromStr for Alpha4Source {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "doc_score" => Ok(Alpha4Source::DocScore),
            "doc_bm25" => Ok(Alpha4Source::DocBm25),
            other => Err(Error::InvalidWeights(format!(
                "alpha4_source must be doc_score or doc_bm25, got \"{other}\""
            ))),
        }
    }
}

/// Identifies one tunable weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum WeightKey {
    Alpha1,
    Alpha2,
    Alpha3,
    Alpha4,
    Beta1,
    Beta2,
    W1,
    W2,
    W3,
}

impl WeightKey {
    pub const ALL: [WeightKey; 9] = [
        WeightKey::Alpha1,
        WeightKey::Alpha2,
        WeightKey::Alpha3,
        WeightKey::Alpha4,
        WeightKey::Beta1,
        WeightKey::Beta2,
        WeightKey::W1,
        WeightKey::W2,
        WeightKey::W3,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            WeightKey::Alpha1 => "alpha1",
            WeightKey::Alpha2 => "alpha2",
            WeightKey::Alpha3 => "alpha3",
            WeightKey::Alpha4 => "alpha4",
            WeightKey::Beta1 => "beta1",
            WeightKey::Beta2 => "beta2",
            WeightKey::W1 => "w1",
            WeightKey::W2 => "w2",
            WeightKey::W3 => "w3",
        }
    }
}

impl fmt::Display for WeightKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The tunable parameter vector. All nine weights live in [0,1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Weights {
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
    pub alpha4: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
    #[serde(default = "default_alpha4_source")]
    pub alpha4_source: Alpha4Source,
}

fn default_alpha4_source() -> Alpha4Source {
    Alpha4Source::DocScore
}

impl Default for Weights {
    /// Weights tuned on BioASQ development data; shipped as the defaults.
    fn default() -> Self {
        Weights {
            alpha1: 0.6123,
            alpha2: 0.2664,
            alpha3: 0.0785,
            alpha4: 0.9879,
            beta1: 0.0002,
            beta2: 0.8523,
            w1: 0.9938,
            w2: 0.0338,
            w3: 0.0271,
            alpha4_source: Alpha4Source::DocScore,
        }
    }
}

impl Weights {
    /// All nine weights set to the same value (tuning starts here).
    pub fn uniform(value: f64) -> Weights {
        Weights {
            alpha1: value,
            alpha2: value,
            alpha3: value,
            alpha4: value,
            beta1: value,
            beta2: value,
            w1: value,
            w2: value,
            w3: value,
            alpha4_source: Alpha4Source::DocScore,
        }
    }

    pub fn get(&self, key: WeightKey) -> f64 {
        match key {
            WeightKey::Alpha1 => self.alpha1,
            WeightKey::Alpha2 => self.alpha2,
            WeightKey::Alpha3 => self.alpha3,
            WeightKey::Alpha4 => self.alpha4,
            WeightKey::Beta1 => self.beta1,
            WeightKey::Beta2 => self.beta2,
            WeightKey::W1 => self.w1,
            WeightKey::W2 => self.w2,
            WeightKey::W3 => self.w3,
        }
    }

    pub fn set(&mut self, key: WeightKey, value: f64) {
        let slot = match key {
            WeightKey::Alpha1 => &mut self.alpha1,
            WeightKey::Alpha2 => &mut self.alpha2,
            WeightKey::Alpha3 => &mut self.alpha3,
            WeightKey::Alpha4 => &mut self.alpha4,
            WeightKey::Beta1 => &mut self.beta1,
            WeightKey::Beta2 => &mut self.beta2,
            WeightKey::W1 => &mut self.w1,
            WeightKey::W2 => &mut self.w2,
            WeightKey::W3 => &mut self.w3,
        };
        *slot = value;
    }

    pub fn validate(&self) -> Result<()> {
        for key in WeightKey::ALL {
            let v = self.get(key);
            if !(0.0..=1.0).contains(&v) || !v.is_finite() {
                return Err(Error::InvalidWeights(format!("{key} = {v} outside [0, 1]")));
            }
        }
        Ok(())
    }

    /// Parse from the flat key-value (TOML) weight file format.
    pub fn from_toml_str(text: &str) -> Result<Weights> {
        let w: Weights =
            toml::from_str(text).map_err(|e| Error::InvalidWeights(e.to_string()))?;
        w.validate()?;
        Ok(w)
    }

    pub fn to_toml_string(&self) -> String {
        // Field order is fixed by the struct definition; toml keeps it.
        toml::to_string(self).expect("weights serialize to TOML")
    }

    pub fn load(path: &Path) -> Result<Weights> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Weights::from_toml_str(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml_string()).map_err(|e| Error::io(path, e))
    }
}

/// A candidate document with its retrieval score and resolved sentence scores.
#[derive(Debug, Clone)]
pub struct ScoredCandidate {
    pub doc_id: String,
    pub doc_bm25: f64,
    pub sentences: Vec<ScoredSentence>,
}

#[derive(Debug, Clone)]
pub struct ScoredSentence {
    pub sent_index: u32,
    pub scores: PerspectiveScores,
}

/// Ranked documents for one query, strictly ordered by
/// (score desc, doc_id asc) and cut to length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedDocList {
    pub query_id: String,
    pub entries: Vec<(String, f64)>,
}

/// Ranked sentences for one query, strictly ordered by
/// (score desc, doc_id asc, sent_index asc) and cut to length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedSentList {
    pub query_id: String,
    pub entries: Vec<(String, u32, f64)>,
}

/// The α1..α3 part of a sentence's score.
pub fn sentence_base_score(ps: &PerspectiveScores, w: &Weights) -> f64 {
    w.alpha1 * ps.s_rel + w.alpha2 * ps.s_sts + w.alpha3 * ps.s_sia
}

/// Fused document score from its BM25 score and its sentences' base scores.
/// Documents with fewer than three sentences pad the top-3 with zeros.
pub fn doc_score(s_bm25_doc: f64, base_scores: &[f64], w: &Weights) -> f64 {
    let mut top = base_scores.to_vec();
    top.sort_unstable_by(|a, b| b.total_cmp(a));
    let t = |i: usize| top.get(i).copied().unwrap_or(0.0);
    w.beta1 * s_bm25_doc + w.beta2 * (w.w1 * t(0) + w.w2 * t(1) + w.w3 * t(2))
}

/// Final sentence score: base plus the weighted document term.
pub fn final_sentence_score(base: f64, doc_term: f64, w: &Weights) -> f64 {
    base + w.alpha4 * doc_term
}

/// Rank a query's candidate pool into document and sentence lists.
///
/// Three passes: sentence base scores, document scores over all candidates
/// (cut to `k_docs`), then final sentence scores for sentences of the
/// retained documents only (cut to `n_sents`).
pub fn rank_for_query(
    query_id: &str,
    candidates: &[ScoredCandidate],
    w: &Weights,
    k_docs: usize,
    n_sents: usize,
) -> (RankedDocList, RankedSentList) {
    // Pass 1: base scores.
    let base: Vec<Vec<f64>> = candidates
        .iter()
        .map(|c| {
            c.sentences
                .iter()
                .map(|s| sentence_base_score(&s.scores, w))
                .collect()
        })
        .collect();

    // Pass 2: document scores, ranked and cut.
    let mut docs: Vec<(usize, f64)> = candidates
        .iter()
        .enumerate()
        .map(|(i, c)| (i, doc_score(c.doc_bm25, &base[i], w)))
        .collect();
    docs.sort_by(|a, b| {
        b.1.total_cmp(&a.1)
            .then_with(|| candidates[a.0].doc_id.cmp(&candidates[b.0].doc_id))
    });
    docs.truncate(k_docs);

    // Pass 3: final sentence scores within the retained documents.
    let mut sents: Vec<(String, u32, f64)> = Vec::new();
    for &(i, s_doc) in &docs {
        let cand = &candidates[i];
        let doc_term = match w.alpha4_source {
            Alpha4Source::DocScore => s_doc,
            Alpha4Source::DocBm25 => cand.doc_bm25,
        };
        for (j, s) in cand.sentences.iter().enumerate() {
            let score = final_sentence_score(base[i][j], doc_term, w);
            sents.push((cand.doc_id.clone(), s.sent_index, score));
        }
    }
    sents.sort_by(|a, b| {
        b.2.total_cmp(&a.2)
            .then_with(|| a.0.cmp(&b.0))
            .then_with(|| a.1.cmp(&b.1))
    });
    sents.truncate(n_sents);

    let doc_list = RankedDocList {
        query_id: query_id.to_string(),
        entries: docs
            .into_iter()
            .map(|(i, s)| (candidates[i].doc_id.clone(), s))
            .collect(),
    };
    let sent_list = RankedSentList {
        query_id: query_id.to_string(),
        entries: sents,
    };
    (doc_list, sent_list)
}

/// Lookup helper for tests and callers that need a document's fused score.
pub fn doc_score_map(list: &RankedDocList) -> HashMap<&str, f64> {
    list.entries.iter().map(|(id, s)| (id.as_str(), *s)).collect()
}
