//! Documents, queries, gold judgments, and sentence segmentation.
//!
//! A document is a title plus an abstract. Sentences are tracked as
//! [`SentenceSpan`]s carrying byte offsets into their section so that any
//! emitted snippet can be traced back to the exact source text.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A title+abstract record identified by a unique key (PubMed ID or arbitrary).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub title: String,
    #[serde(rename = "abstract")]
    pub abstract_text: String,
}

impl Document {
    pub fn section_text(&self, section: Section) -> &str {
        match section {
            Section::Title => &self.title,
            Section::Abstract => &self.abstract_text,
        }
    }

    /// The text indexed for retrieval: title and abstract joined by a space.
    pub fn full_text(&self) -> String {
        format!("{} {}", self.title, self.abstract_text)
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if self.doc_id.is_empty() {
            return Err("empty doc_id".into());
        }
        if self.title.trim().is_empty() && self.abstract_text.trim().is_empty() {
            return Err(format!("doc_id \"{}\": title and abstract both empty", self.doc_id));
        }
        Ok(())
    }
}

/// Section of a document a sentence belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Section {
    Title,
    Abstract,
}

impl Section {
    pub fn as_str(self) -> &'static str {
        match self {
            Section::Title => "title",
            Section::Abstract => "abstract",
        }
    }
}

/// One sentence of a document, with byte offsets into its section text.
///
/// Invariants: `begin_offset < end_offset <= section length`, spans within a
/// document are non-overlapping and ordered, and `text` equals the section
/// substring at `[begin_offset, end_offset)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceSpan {
    pub doc_id: String,
    pub sent_index: u32,
    pub section: Section,
    pub begin_offset: usize,
    pub end_offset: usize,
    pub text: String,
}

/// A retrieval query.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub query_id: String,
    pub body: String,
}

/// Reference judgments for one query: relevant documents and relevant
/// sentences keyed by `(doc_id, normalized text)`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GoldJudgments {
    pub query_id: String,
    pub gold_docs: BTreeSet<String>,
    pub gold_sentences: BTreeSet<(String, String)>,
}

/// Lowercase and collapse all whitespace runs to single spaces.
///
/// This is the canonical key used to match predicted sentences against gold
/// snippets; offset-based matching would be brittle across segmenters.
pub fn normalize_text(text: &str) -> String {
    text.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// Extract a document id from a URL by taking the trailing path segment.
pub fn doc_id_from_url(url: &str) -> Result<String> {
    match url.rsplit_once('/') {
        Some((_, id)) if !id.is_empty() => Ok(id.to_string()),
        _ => Err(Error::BadDocUrl(url.to_string())),
    }
}

/// Load a corpus from a JSON-lines file, one document object per line.
pub fn load_corpus(path: &Path) -> Result<Vec<Document>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut docs = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let doc: Document = serde_json::from_str(&line)
            .map_err(|e| Error::malformed(path, lineno, e.to_string()))?;
        doc.validate()
            .map_err(|msg| Error::malformed(path, lineno, msg))?;
        if !seen.insert(doc.doc_id.clone()) {
            return Err(Error::DuplicateDocId(doc.doc_id));
        }
        docs.push(doc);
    }
    Ok(docs)
}

#[derive(Deserialize)]
struct QuestionFile {
    questions: Vec<QuestionRecord>,
}

#[derive(Deserialize)]
struct QuestionRecord {
    id: Option<String>,
    body: Option<String>,
    #[serde(default)]
    documents: Vec<String>,
    #[serde(default)]
    snippets: Vec<SnippetRecord>,
}

#[derive(Deserialize)]
struct SnippetRecord {
    document: String,
    text: String,
}

fn read_question_file(path: &Path) -> Result<QuestionFile> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_reader(BufReader::new(file))
        .map_err(|e| Error::malformed(path, e.line(), e.to_string()))
}

/// Load queries from a question file: `{"questions":[{"id","body"},…]}`.
pub fn load_queries(path: &Path) -> Result<Vec<Query>> {
    let parsed = read_question_file(path)?;
    let mut queries = Vec::with_capacity(parsed.questions.len());
    let mut seen = std::collections::HashSet::new();
    for (i, q) in parsed.questions.into_iter().enumerate() {
        let query_id = q
            .id
            .filter(|s| !s.is_empty())
            .ok_or_else(|| Error::malformed(path, 0, format!("question #{}: missing id", i + 1)))?;
        let body = q
            .body
            .filter(|s| !s.is_empty())
            .ok_or_else(|| Error::malformed(path, 0, format!("question \"{query_id}\": missing body")))?;
        if !seen.insert(query_id.clone()) {
            return Err(Error::DuplicateQueryId(query_id));
        }
        queries.push(Query { query_id, body });
    }
    Ok(queries)
}

/// Load gold judgments from a question file. Documents are given as URLs and
/// reduced to ids via [`doc_id_from_url`]; snippets contribute
/// `(doc_id, normalized text)` pairs.
pub fn load_gold(path: &Path) -> Result<Vec<GoldJudgments>> {
    let parsed = read_question_file(path)?;
    let mut gold = Vec::with_capacity(parsed.questions.len());
    for (i, q) in parsed.questions.into_iter().enumerate() {
        let query_id = q
            .id
            .filter(|s| !s.is_empty())
            .ok_or_else(|| Error::malformed(path, 0, format!("question #{}: missing id", i + 1)))?;
        if q.body.as_deref().unwrap_or("").is_empty() {
            return Err(Error::malformed(path, 0, format!("question \"{query_id}\": missing body")));
        }
        let mut gold_docs = BTreeSet::new();
        for url in &q.documents {
            gold_docs.insert(doc_id_from_url(url)?);
        }
        let mut gold_sentences = BTreeSet::new();
        for sn in &q.snippets {
            let doc_id = doc_id_from_url(&sn.document)?;
            if !gold_docs.is_empty() && !gold_docs.contains(&doc_id) {
                return Err(Error::GoldSnippetOutsideDocs { query_id, doc_id });
            }
            gold_sentences.insert((doc_id, normalize_text(&sn.text)));
        }
        gold.push(GoldJudgments {
            query_id,
            gold_docs,
            gold_sentences,
        });
    }
    Ok(gold)
}

/// Abbreviations that never end a sentence, matched case-insensitively
/// against the token ending at a period.
const ABBREVIATIONS: &[&str] = &[
    "e.g.", "i.e.", "etc.", "cf.", "vs.", "al.", "fig.", "figs.", "eq.", "eqs.", "ref.", "refs.",
    "no.", "nos.", "ca.", "approx.", "resp.", "sp.", "spp.", "mol.", "wt.", "vol.", "dr.", "mr.",
    "mrs.", "ms.", "prof.", "st.", "inc.", "ltd.", "i.v.", "i.m.", "i.p.", "s.c.", "p.o.",
    "b.i.d.", "t.i.d.", "q.d.",
];

fn is_abbreviation(text: &str, terminator_at: usize) -> bool {
    // Token = run of alphanumerics, periods and hyphens ending at the period.
    let before = &text[..terminator_at];
    let start = before
        .char_indices()
        .rev()
        .take_while(|(_, c)| c.is_alphanumeric() || *c == '.' || *c == '-')
        .last()
        .map(|(i, _)| i)
        .unwrap_or(terminator_at);
    let token = text[start..=terminator_at].to_lowercase();
    ABBREVIATIONS.contains(&token.as_str())
}

/// A terminator splits only when followed by whitespace and an uppercase
/// letter, or by (possibly empty) trailing whitespace to end of text.
fn is_sentence_boundary(text: &str, terminator_at: usize, terminator: char) -> bool {
    let rest = &text[terminator_at + terminator.len_utf8()..];
    let mut saw_whitespace = false;
    for c in rest.chars() {
        if c.is_whitespace() {
            saw_whitespace = true;
            continue;
        }
        return saw_whitespace && c.is_uppercase();
    }
    true
}

fn segment_section(text: &str) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut start: Option<usize> = None;
    let mut last_non_ws = 0usize;
    for (i, c) in text.char_indices() {
        if c.is_whitespace() {
            continue;
        }
        if start.is_none() {
            start = Some(i);
        }
        last_non_ws = i + c.len_utf8();
        if matches!(c, '.' | '!' | '?')
            && is_sentence_boundary(text, i, c)
            && !(c == '.' && is_abbreviation(text, i))
        {
            spans.push((start.take().unwrap(), last_non_ws));
        }
    }
    if let Some(s) = start {
        spans.push((s, last_non_ws));
    }
    spans
}

/// Split a document into sentence spans.
///
/// A non-empty title always yields exactly one span. The abstract is split at
/// `.` `!` `?` terminators followed by whitespace and an uppercase letter (or
/// end of text), with an abbreviation guard list. Segmentation is
/// deterministic and lossless: every non-whitespace character of a section is
/// covered by exactly one span.
pub fn segment_sentences(doc: &Document) -> Vec<SentenceSpan> {
    let mut spans = Vec::new();
    let mut index = 0u32;
    // Title: one span covering all non-whitespace text.
    let title_trimmed = doc.title.trim();
    if !title_trimmed.is_empty() {
        let begin = doc.title.find(title_trimmed).unwrap_or(0);
        spans.push(SentenceSpan {
            doc_id: doc.doc_id.clone(),
            sent_index: index,
            section: Section::Title,
            begin_offset: begin,
            end_offset: begin + title_trimmed.len(),
            text: title_trimmed.to_string(),
        });
        index += 1;
    }
    for (begin, end) in segment_section(&doc.abstract_text) {
        spans.push(SentenceSpan {
            doc_id: doc.doc_id.clone(),
            sent_index: index,
            section: Section::Abstract,
            begin_offset: begin,
            end_offset: end,
            text: doc.abstract_text[begin..end].to_string(),
        });
        index += 1;
    }
    spans
}
