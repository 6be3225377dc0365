//! Retrieval evaluation: per-query AP, precision, recall and F1 at a cutoff,
//! aggregated to MPrec, MRec, F-Measure, MAP and GMAP.
//!
//! Average precision uses the capped denominator `min(|gold|, cutoff)`,
//! matching a setting where gold lists are themselves capped at the cutoff.
//! GMAP is the geometric mean of `AP + ε` over queries, clamped to 1.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Debug;
use std::hash::Hash;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::GoldJudgments;
use crate::error::{Error, Result};

fn check_no_duplicates<T: Eq + Hash + Debug>(ranked: &[T]) -> Result<()> {
    let mut seen = HashSet::with_capacity(ranked.len());
    for item in ranked {
        if !seen.insert(item) {
            return Err(Error::DuplicateRanked(format!("{item:?}")));
        }
    }
    Ok(())
}

/// Average precision at `cutoff` with denominator `min(|gold|, cutoff)`.
/// Empty gold scores 0. Duplicate ranked items are rejected.
pub fn average_precision<T: Eq + Hash + Debug>(
    ranked: &[T],
    gold: &HashSet<T>,
    cutoff: usize,
) -> Result<f64> {
    check_no_duplicates(ranked)?;
    if gold.is_empty() {
        return Ok(0.0);
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, item) in ranked.iter().take(cutoff).enumerate() {
        if gold.contains(item) {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    Ok(sum / gold.len().min(cutoff) as f64)
}

/// Precision, recall and F1 at `cutoff`.
///
/// Precision divides by the number of returned items (up to the cutoff), not
/// by the cutoff itself; recall is 0 when gold is empty; F1 is 0 when both
/// precision and recall are 0.
pub fn precision_recall_f1<T: Eq + Hash + Debug>(
    ranked: &[T],
    gold: &HashSet<T>,
    cutoff: usize,
) -> Result<(f64, f64, f64)> {
    check_no_duplicates(ranked)?;
    let returned: Vec<&T> = ranked.iter().take(cutoff).collect();
    let hits = returned.iter().filter(|item| gold.contains(item)).count();
    let p = if returned.is_empty() {
        0.0
    } else {
        hits as f64 / returned.len() as f64
    };
    let r = if gold.is_empty() {
        0.0
    } else {
        hits as f64 / gold.len() as f64
    };
    let f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    Ok((p, r, f1))
}

/// Metrics for a single query.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueryMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub ap: f64,
}

/// Aggregates over all queries. All fields are arithmetic means except
/// `gmap`, the geometric mean of `ap + ε` clamped to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mprec: f64,
    pub mrec: f64,
    pub f_measure: f64,
    pub map: f64,
    pub gmap: f64,
}

/// Full evaluation output for one run (documents or sentences).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub cutoff: usize,
    pub epsilon: f64,
    pub per_query: BTreeMap<String, QueryMetrics>,
    pub aggregate: Aggregate,
}

/// Mean the per-query metrics; `gmap = exp(mean ln(ap + ε))`, clamped to 1.
pub fn aggregate(per_query: &BTreeMap<String, QueryMetrics>, epsilon: f64) -> Result<Aggregate> {
    if per_query.is_empty() {
        return Err(Error::EmptyEvaluation);
    }
    let n = per_query.len() as f64;
    let mut mprec = 0.0;
    let mut mrec = 0.0;
    let mut f_measure = 0.0;
    let mut map = 0.0;
    let mut log_sum = 0.0;
    for m in per_query.values() {
        mprec += m.precision;
        mrec += m.recall;
        f_measure += m.f1;
        map += m.ap;
        log_sum += (m.ap + epsilon).ln();
    }
    Ok(Aggregate {
        mprec: mprec / n,
        mrec: mrec / n,
        f_measure: f_measure / n,
        map: map / n,
        gmap: (log_sum / n).exp().min(1.0),
    })
}

/// One query's ranked output in evaluation form: document ids and sentence
/// keys `(doc_id, normalized text)`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunRanking {
    pub query_id: String,
    pub doc_ids: Vec<String>,
    pub sentences: Vec<(String, String)>,
}

/// Evaluate a run against gold judgments, producing one report for documents
/// and one for sentences. Every run query must have a gold entry.
pub fn evaluate_run(
    run: &[RunRanking],
    gold: &[GoldJudgments],
    cutoff: usize,
    epsilon: f64,
) -> Result<(EvalReport, EvalReport)> {
    let by_query: BTreeMap<&str, &GoldJudgments> =
        gold.iter().map(|g| (g.query_id.as_str(), g)).collect();
    let missing: Vec<String> = run
        .iter()
        .filter(|r| !by_query.contains_key(r.query_id.as_str()))
        .map(|r| r.query_id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingGold(missing));
    }

    let mut doc_metrics = BTreeMap::new();
    let mut sent_metrics = BTreeMap::new();
    for r in run {
        let g = by_query[r.query_id.as_str()];
        let gold_docs: HashSet<&String> = g.gold_docs.iter().collect();
        let ranked_docs: Vec<&String> = r.doc_ids.iter().collect();
        let (p, rec, f1) = precision_recall_f1(&ranked_docs, &gold_docs, cutoff)?;
        let ap = average_precision(&ranked_docs, &gold_docs, cutoff)?;
        doc_metrics.insert(r.query_id.clone(), QueryMetrics { precision: p, recall: rec, f1, ap });

        let gold_sents: HashSet<&(String, String)> = g.gold_sentences.iter().collect();
        let ranked_sents: Vec<&(String, String)> = r.sentences.iter().collect();
        let (p, rec, f1) = precision_recall_f1(&ranked_sents, &gold_sents, cutoff)?;
        let ap = average_precision(&ranked_sents, &gold_sents, cutoff)?;
        sent_metrics.insert(r.query_id.clone(), QueryMetrics { precision: p, recall: rec, f1, ap });
    }

    let docs = EvalReport {
        cutoff,
        epsilon,
        aggregate: aggregate(&doc_metrics, epsilon)?,
        per_query: doc_metrics,
    };
    let sents = EvalReport {
        cutoff,
        epsilon,
        aggregate: aggregate(&sent_metrics, epsilon)?,
        per_query: sent_metrics,
    };
    Ok((docs, sents))
}

impl EvalReport {
    /// Write one row per query plus an `__aggregate__` row.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)
            .map_err(|e| Error::io(path, std::io::Error::new(std::io::ErrorKind::Other, e)))?;
        let io_err = |e: csv::Error| Error::io(path, std::io::Error::new(std::io::ErrorKind::Other, e));
        w.write_record(["query_id", "precision", "recall", "f1", "ap", "gmap"])
            .map_err(io_err)?;
        for (qid, m) in &self.per_query {
            w.write_record([
                qid.as_str(),
                &m.precision.to_string(),
                &m.recall.to_string(),
                &m.f1.to_string(),
                &m.ap.to_string(),
                "",
            ])
            .map_err(io_err)?;
        }
        let a = &self.aggregate;
        w.write_record([
            "__aggregate__",
            &a.mprec.to_string(),
            &a.mrec.to_string(),
            &a.f_measure.to_string(),
            &a.map.to_string(),
            &a.gmap.to_string(),
        ])
        .map_err(io_err)?;
        w.flush().map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn gold(items: &[&str]) -> HashSet<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    fn ranked(items: &[&str]) -> Vec<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn perfect_ranking_scores_one() {
        let ap = average_precision(&ranked(&["a", "b"]), &gold(&["a", "b"]), 10).unwrap();
        assert_eq!(ap, 1.0);
    }

    #[test]
    fn ap_hand_case() {
        let ap = average_precision(&ranked(&["a", "x", "b"]), &gold(&["a", "b"]), 10).unwrap();
        assert_relative_eq!(ap, 0.833_333_333_333_333_3, epsilon = 1e-12);
    }

    #[test]
    fn ap_zero_cases() {
        assert_eq!(average_precision(&ranked(&["x", "y"]), &gold(&["a"]), 10).unwrap(), 0.0);
        assert_eq!(average_precision(&ranked(&["x"]), &gold(&[]), 10).unwrap(), 0.0);
        assert_eq!(average_precision(&Vec::<String>::new(), &gold(&["a"]), 10).unwrap(), 0.0);
    }

    #[test]
    fn ap_respects_cutoff() {
        // Gold at rank 3 is invisible at cutoff 2.
        let ap = average_precision(&ranked(&["x", "y", "a"]), &gold(&["a"]), 2).unwrap();
        assert_eq!(ap, 0.0);
    }

    #[test]
    fn duplicates_are_rejected() {
        let err = average_precision(&ranked(&["a", "a"]), &gold(&["a"]), 10).unwrap_err();
        assert!(matches!(err, Error::DuplicateRanked(_)));
        assert!(precision_recall_f1(&ranked(&["a", "a"]), &gold(&["a"]), 10).is_err());
    }

    #[test]
    fn prf_cases() {
        let (p, r, f1) =
            precision_recall_f1(&ranked(&["a", "b", "c", "d", "e"]), &gold(&["a", "b", "c", "d", "e"]), 10)
                .unwrap();
        assert_eq!((p, r, f1), (1.0, 1.0, 1.0));

        let items = ranked(&["g1", "g2", "x1", "x2", "x3", "x4", "x5", "x6", "x7", "x8"]);
        let (p, r, f1) = precision_recall_f1(&items, &gold(&["g1", "g2", "g3", "g4"]), 10).unwrap();
        assert_relative_eq!(p, 0.2, epsilon = 1e-12);
        assert_relative_eq!(r, 0.5, epsilon = 1e-12);
        assert_relative_eq!(f1, 0.285_714_285_714_285_75, epsilon = 1e-12);

        let (p, r, f1) = precision_recall_f1(&Vec::<String>::new(), &gold(&["a"]), 10).unwrap();
        assert_eq!((p, r, f1), (0.0, 0.0, 0.0));
    }

    fn qm(ap: f64) -> QueryMetrics {
        QueryMetrics { precision: ap, recall: ap, f1: ap, ap }
    }

    #[test]
    fn aggregate_single_query_is_identity() {
        let mut per = BTreeMap::new();
        per.insert("q1".to_string(), qm(0.5));
        let a = aggregate(&per, 0.01).unwrap();
        assert_eq!(a.map, 0.5);
        assert_relative_eq!(a.gmap, 0.51, epsilon = 1e-12);
    }

    #[test]
    fn gmap_two_query_hand_case() {
        let mut per = BTreeMap::new();
        per.insert("q1".to_string(), qm(0.0));
        per.insert("q2".to_string(), qm(1.0));
        let a = aggregate(&per, 0.01).unwrap();
        assert_relative_eq!(a.gmap, 0.100_498_756_211_208_9, epsilon = 1e-6);
        assert_eq!(a.map, 0.5);
    }

    #[test]
    fn equal_aps_make_gmap_map_plus_epsilon() {
        let mut per = BTreeMap::new();
        for i in 0..4 {
            per.insert(format!("q{i}"), qm(0.25));
        }
        let a = aggregate(&per, 0.01).unwrap();
        assert_relative_eq!(a.map, 0.25, epsilon = 1e-12);
        assert_relative_eq!(a.gmap, 0.26, epsilon = 1e-12);
    }

    #[test]
    fn gmap_is_clamped_to_one() {
        let mut per = BTreeMap::new();
        per.insert("q1".to_string(), qm(1.0));
        let a = aggregate(&per, 0.01).unwrap();
        assert_eq!(a.gmap, 1.0);
    }

    #[test]
    fn aggregate_requires_queries() {
        assert!(matches!(aggregate(&BTreeMap::new(), 0.01), Err(Error::EmptyEvaluation)));
    }

    fn mk_gold(query_id: &str, docs: &[&str], sents: &[(&str, &str)]) -> GoldJudgments {
        GoldJudgments {
            query_id: query_id.into(),
            gold_docs: docs.iter().map(|s| s.to_string()).collect(),
            gold_sentences: sents
                .iter()
                .map(|(d, t)| (d.to_string(), t.to_string()))
                .collect(),
        }
    }

    #[test]
    fn evaluate_run_perfect_and_empty() {
        let gold = vec![mk_gold("q1", &["1", "2"], &[("1", "alpha"), ("2", "beta")])];
        let run = vec![RunRanking {
            query_id: "q1".into(),
            doc_ids: ranked(&["1", "2"]),
            sentences: vec![("1".into(), "alpha".into()), ("2".into(), "beta".into())],
        }];
        let (docs, sents) = evaluate_run(&run, &gold, 10, 0.01).unwrap();
        assert_eq!(docs.aggregate.map, 1.0);
        assert_eq!(docs.aggregate.gmap, 1.0);
        assert_eq!(sents.aggregate.map, 1.0);

        let empty_run = vec![RunRanking { query_id: "q1".into(), ..Default::default() }];
        let (docs, sents) = evaluate_run(&empty_run, &gold, 10, 0.01).unwrap();
        assert_eq!(docs.aggregate.map, 0.0);
        assert_eq!(sents.aggregate.map, 0.0);
    }

    #[test]
    fn evaluate_run_requires_gold() {
        let run = vec![RunRanking { query_id: "nope".into(), ..Default::default() }];
        let err = evaluate_run(&run, &[], 10, 0.01).unwrap_err();
        assert!(matches!(err, Error::MissingGold(ids) if ids == vec!["nope".to_string()]));
    }

    /// Five queries scored by hand, end to end through `evaluate_run`.
    #[test]
    fn evaluate_run_matches_hand_scored_sheet() {
        let gold = vec![
            mk_gold("q1", &["a", "b"], &[]),
            mk_gold("q2", &["a", "b", "z"], &[]),
            mk_gold("q3", &["q"], &[]),
            mk_gold("q4", &["g1", "g2", "g3", "g4", "g5"], &[]),
            mk_gold("q5", &["a"], &[]),
        ];
        let run = vec![
            RunRanking { query_id: "q1".into(), doc_ids: ranked(&["a", "b", "c"]), ..Default::default() },
            RunRanking { query_id: "q2".into(), doc_ids: ranked(&["x", "a", "y", "b"]), ..Default::default() },
            RunRanking { query_id: "q3".into(), doc_ids: ranked(&["m", "n"]), ..Default::default() },
            RunRanking { query_id: "q4".into(), doc_ids: ranked(&["g1", "g2", "g3", "g4", "g5"]), ..Default::default() },
            RunRanking { query_id: "q5".into(), ..Default::default() },
        ];
        let (docs, _) = evaluate_run(&run, &gold, 10, 0.01).unwrap();
        let expect_ap = [1.0, 0.333_333_333_333_333_3, 0.0, 1.0, 0.0];
        let expect_f1 = [0.8, 0.571_428_571_428_571_5, 0.0, 1.0, 0.0];
        for (i, q) in ["q1", "q2", "q3", "q4", "q5"].iter().enumerate() {
            let m = &docs.per_query[*q];
            assert_relative_eq!(m.ap, expect_ap[i], epsilon = 1e-12);
            assert_relative_eq!(m.f1, expect_f1[i], epsilon = 1e-12);
        }
        let a = &docs.aggregate;
        assert_relative_eq!(a.mprec, 0.433_333_333_333_333_3, epsilon = 1e-12);
        assert_relative_eq!(a.mrec, 0.533_333_333_333_333_3, epsilon = 1e-12);
        assert_relative_eq!(a.f_measure, 0.474_285_714_285_714_3, epsilon = 1e-12);
        assert_relative_eq!(a.map, 0.466_666_666_666_666_6, epsilon = 1e-12);
        assert_relative_eq!(a.gmap, 0.128_490_714_322_541_42, epsilon = 1e-9);
    }
}
