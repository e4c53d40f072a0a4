//! Line-delimited JSON corpus files.
//!
//! One question per line with its candidate documents embedded. NULL
//! snippets are never written; they are appended when a document is loaded.

use std::collections::BTreeSet;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::corpus::{Answer, Corpus, DocId, Document, Question, Selection, SnippetId};
use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct QuestionRecord {
    id: String,
    tokens: Vec<String>,
    candidate_docs: Vec<DocumentRecord>,
    gold_answer: AnswerRecord,
    gold_docs: Vec<DocId>,
    gold_evidence: Vec<Selection>,
    hidden_alternatives: Vec<Selection>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DocumentRecord {
    id: DocId,
    title: Vec<String>,
    snippets: Vec<SnippetRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SnippetRecord {
    id: SnippetId,
    tokens: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AnswerRecord {
    #[serde(rename = "type")]
    kind: String,
    value: Value,
}

impl From<&Answer> for AnswerRecord {
    fn from(a: &Answer) -> Self {
        let (kind, value) = match a {
            Answer::Span(t) => ("span", Value::from(t.clone())),
            Answer::Number(v) => ("number", Value::from(*v)),
            Answer::Boolean(b) => ("boolean", Value::from(if *b { "yes" } else { "no" })),
            Answer::None => ("none", Value::Null),
        };
        AnswerRecord {
            kind: kind.into(),
            value,
        }
    }
}

impl TryFrom<AnswerRecord> for Answer {
    type Error = String;

    fn try_from(r: AnswerRecord) -> std::result::Result<Self, String> {
        let answer = match (r.kind.as_str(), r.value) {
            ("span", v) => Answer::Span(serde_json::from_value(v).map_err(|e| e.to_string())?),
            ("number", v) => Answer::Number(v.as_f64().ok_or("number value must be numeric")?),
            ("boolean", Value::String(s)) => match s.as_str() {
                "yes" => Answer::Boolean(true),
                "no" => Answer::Boolean(false),
                other => return Err(format!("boolean value must be yes or no, got {other}")),
            },
            ("none", Value::Null) => Answer::None,
            (kind, v) => return Err(format!("bad answer {kind}: {v}")),
        };
        Ok(answer)
    }
}

fn to_record(corpus: &Corpus, q: &Question) -> Result<QuestionRecord> {
    let candidate_docs = corpus
        .candidates(q)?
        .into_iter()
        .map(|doc| DocumentRecord {
            id: doc.id,
            title: doc.title.clone(),
            snippets: doc
                .real_snippets()
                .iter()
                .map(|s| SnippetRecord {
                    id: s.id,
                    tokens: s.tokens.clone(),
                })
                .collect(),
        })
        .collect();
    Ok(QuestionRecord {
        id: q.id.clone(),
        tokens: q.tokens.clone(),
        candidate_docs,
        gold_answer: (&q.gold_answer).into(),
        gold_docs: q.gold_doc_ids.iter().copied().collect(),
        gold_evidence: q.gold_evidence.iter().copied().collect(),
        hidden_alternatives: q.hidden_alternatives.iter().copied().collect(),
    })
}

/// Serializes the corpus, one JSON object per line.
pub fn write_corpus<W: Write>(corpus: &Corpus, mut out: W) -> Result<()> {
    for q in &corpus.questions {
        serde_json::to_writer(&mut out, &to_record(corpus, q)?)?;
        out.write_all(b"\n").map_err(|e| Error::io("<corpus>", e))?;
    }
    Ok(())
}

pub fn save_corpus(corpus: &Corpus, path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_corpus(corpus, &mut w)?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_corpus<R: BufRead>(input: R) -> Result<Corpus> {
    let mut corpus = Corpus::default();
    for (i, line) in input.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io("<corpus>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |reason: String| Error::Corpus {
            line: line_no,
            reason,
        };
        let rec: QuestionRecord =
            serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
        let mut candidate_doc_ids = Vec::with_capacity(rec.candidate_docs.len());
        for d in rec.candidate_docs {
            for (i, s) in d.snippets.iter().enumerate() {
                if s.id as usize != i {
                    return Err(bad(format!("document {} snippet ids are not dense", d.id)));
                }
            }
            let doc = Document::new(
                d.id,
                d.title,
                d.snippets.into_iter().map(|s| s.tokens).collect(),
            );
            candidate_doc_ids.push(doc.id);
            match corpus.documents.get(&doc.id) {
                Some(existing) if *existing != doc => {
                    return Err(bad(format!("document {} redefined differently", doc.id)))
                }
                Some(_) => {}
                None => {
                    corpus.documents.insert(doc.id, doc);
                }
            }
        }
        let gold_answer = Answer::try_from(rec.gold_answer).map_err(bad)?;
        let q = Question {
            id: rec.id,
            tokens: rec.tokens,
            candidate_doc_ids,
            gold_answer,
            gold_doc_ids: rec.gold_docs.into_iter().collect(),
            gold_evidence: rec.gold_evidence.into_iter().collect::<BTreeSet<_>>(),
            hidden_alternatives: rec.hidden_alternatives.into_iter().collect(),
        };
        corpus.questions.push(q);
    }
    corpus.validate()?;
    Ok(corpus)
}

pub fn load_corpus(path: &Path) -> Result<Corpus> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_corpus(BufReader::new(file))
}
