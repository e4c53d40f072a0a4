//! Questions, documents, snippets, answers and the contexts built from them.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::error::{Error, Result};

pub type DocId = u32;
pub type SnippetId = u32;

/// A `(document, snippet)` reference.
pub type Selection = (DocId, SnippetId);

#[derive(Debug, Clone, PartialEq)]
pub struct Snippet {
    pub id: SnippetId,
    pub tokens: Vec<String>,
    pub is_null: bool,
}

impl Snippet {
    pub fn null(id: SnippetId) -> Self {
        Snippet {
            id,
            tokens: Vec::new(),
            is_null: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    pub id: DocId,
    pub title: Vec<String>,
    /// Real snippets with ids `0..n`, followed by the NULL snippet with id `n`.
    pub snippets: Vec<Snippet>,
}

impl Document {
    /// Builds a document from its real snippets and appends the NULL option.
    pub fn new(id: DocId, title: Vec<String>, snippet_tokens: Vec<Vec<String>>) -> Self {
        let mut snippets: Vec<Snippet> = snippet_tokens
            .into_iter()
            .enumerate()
            .map(|(i, tokens)| Snippet {
                id: i as SnippetId,
                tokens,
                is_null: false,
            })
            .collect();
        snippets.push(Snippet::null(snippets.len() as SnippetId));
        Document {
            id,
            title,
            snippets,
        }
    }

    pub fn null_id(&self) -> SnippetId {
        (self.snippets.len() - 1) as SnippetId
    }

    pub fn snippet(&self, id: SnippetId) -> Result<&Snippet> {
        self.snippets.get(id as usize).ok_or(Error::UnknownSnippet {
            doc: self.id,
            snippet: id,
        })
    }

    /// Snippets other than NULL.
    pub fn real_snippets(&self) -> &[Snippet] {
        &self.snippets[..self.snippets.len() - 1]
    }

    fn check(&self) -> Result<()> {
        let Some(last) = self.snippets.last() else {
            return Err(Error::Contract(format!("document {} has no snippets", self.id)));
        };
        if !last.is_null || !last.tokens.is_empty() {
            return Err(Error::Contract(format!(
                "document {} must end with an empty NULL snippet",
                self.id
            )));
        }
        for (i, s) in self.snippets.iter().enumerate() {
            if s.id as usize != i {
                return Err(Error::Contract(format!(
                    "document {} has non-dense snippet id {}",
                    self.id, s.id
                )));
            }
            if s.is_null && i + 1 != self.snippets.len() {
                return Err(Error::Contract(format!(
                    "document {} has more than one NULL snippet",
                    self.id
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AnswerKind {
    None,
    Boolean,
    Span,
    Number,
}

impl AnswerKind {
    pub const ALL: [AnswerKind; 4] = [
        AnswerKind::None,
        AnswerKind::Boolean,
        AnswerKind::Span,
        AnswerKind::Number,
    ];

    pub fn label(self) -> &'static str {
        match self {
            AnswerKind::None => "none",
            AnswerKind::Boolean => "yes_no",
            AnswerKind::Span => "span",
            AnswerKind::Number => "number",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Answer {
    Span(Vec<String>),
    Number(f64),
    Boolean(bool),
    /// Unanswerable.
    None,
}

impl Answer {
    pub fn span(text: &str) -> Self {
        Answer::Span(tokenize(text))
    }

    pub fn kind(&self) -> AnswerKind {
        match self {
            Answer::Span(_) => AnswerKind::Span,
            Answer::Number(_) => AnswerKind::Number,
            Answer::Boolean(_) => AnswerKind::Boolean,
            Answer::None => AnswerKind::None,
        }
    }

    pub fn check(&self) -> Result<()> {
        match self {
            Answer::Span(t) if t.is_empty() => {
                Err(Error::Contract("span answer must be non-empty".into()))
            }
            Answer::Number(v) if !v.is_finite() => {
                Err(Error::Contract("number answer must be finite".into()))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for Answer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Answer::Span(t) => write!(f, "{}", t.join(" ")),
            Answer::Number(v) => write!(f, "{v}"),
            Answer::Boolean(true) => f.write_str("yes"),
            Answer::Boolean(false) => f.write_str("no"),
            Answer::None => f.write_str("<unanswerable>"),
        }
    }
}

/// A set of snippet selections with at most one snippet per document.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ContextSet {
    selections: BTreeMap<DocId, SnippetId>,
}

impl ContextSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = Selection>) -> Result<Self> {
        let mut c = ContextSet::new();
        for (d, s) in pairs {
            c.insert(d, s)?;
        }
        Ok(c)
    }

    pub fn insert(&mut self, doc: DocId, snippet: SnippetId) -> Result<()> {
        if self.selections.insert(doc, snippet).is_some() {
            return Err(Error::Contract(format!(
                "context selects more than one snippet from document {doc}"
            )));
        }
        Ok(())
    }

    /// Selections in ascending `(doc, snippet)` order.
    pub fn iter(&self) -> impl Iterator<Item = Selection> + '_ {
        self.selections.iter().map(|(&d, &s)| (d, s))
    }

    pub fn get(&self, doc: DocId) -> Option<SnippetId> {
        self.selections.get(&doc).copied()
    }

    pub fn contains(&self, pair: Selection) -> bool {
        self.get(pair.0) == Some(pair.1)
    }

    pub fn docs(&self) -> impl Iterator<Item = DocId> + '_ {
        self.selections.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.selections.len()
    }

    pub fn is_empty(&self) -> bool {
        self.selections.is_empty()
    }

    pub fn to_pairs(&self) -> Vec<Selection> {
        self.iter().collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Question {
    pub id: String,
    pub tokens: Vec<String>,
    pub candidate_doc_ids: Vec<DocId>,
    pub gold_answer: Answer,
    pub gold_doc_ids: BTreeSet<DocId>,
    pub gold_evidence: BTreeSet<Selection>,
    /// Unannotated evidence the gold answer is also derivable from. Evaluation only.
    pub hidden_alternatives: BTreeSet<Selection>,
}

impl Question {
    /// The annotated context: one gold snippet per gold document that has one.
    pub fn gold_context(&self) -> Result<ContextSet> {
        ContextSet::from_pairs(self.gold_evidence.iter().copied())
    }

    pub fn is_answerable(&self) -> bool {
        self.gold_answer != Answer::None
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    pub documents: BTreeMap<DocId, Document>,
    pub questions: Vec<Question>,
}

impl Corpus {
    pub fn document(&self, id: DocId) -> Result<&Document> {
        self.documents.get(&id).ok_or(Error::UnknownDocument(id))
    }

    pub fn snippet(&self, pair: Selection) -> Result<&Snippet> {
        self.document(pair.0)?.snippet(pair.1)
    }

    /// Candidate documents of `q`, in candidate order.
    pub fn candidates<'a>(&'a self, q: &'a Question) -> Result<Vec<&'a Document>> {
        q.candidate_doc_ids
            .iter()
            .map(|&d| self.document(d))
            .collect()
    }

    /// Checks every structural invariant of documents and questions.
    pub fn validate(&self) -> Result<()> {
        for (&id, doc) in &self.documents {
            if doc.id != id {
                return Err(Error::Contract(format!("document keyed {id} has id {}", doc.id)));
            }
            doc.check()?;
        }
        for q in &self.questions {
            self.validate_question(q)?;
        }
        Ok(())
    }

    fn validate_question(&self, q: &Question) -> Result<()> {
        let fail = |msg: String| Err(Error::Contract(format!("question {}: {msg}", q.id)));
        q.gold_answer.check()?;
        let candidates: BTreeSet<DocId> = q.candidate_doc_ids.iter().copied().collect();
        if candidates.len() != q.candidate_doc_ids.len() {
            return fail("duplicate candidate documents".into());
        }
        for &d in &q.candidate_doc_ids {
            self.document(d)?;
        }
        if !q.gold_doc_ids.is_subset(&candidates) {
            return fail("gold documents are not all candidates".into());
        }
        let mut seen = BTreeSet::new();
        for &(d, s) in &q.gold_evidence {
            if !q.gold_doc_ids.contains(&d) {
                return fail(format!("gold evidence ({d},{s}) outside the gold documents"));
            }
            if !seen.insert(d) {
                return fail(format!("more than one gold snippet in document {d}"));
            }
            if self.snippet((d, s))?.is_null {
                return fail("gold evidence cannot be NULL".into());
            }
        }
        if !q.is_answerable() && !q.gold_evidence.is_empty() {
            return fail("unanswerable question with gold evidence".into());
        }
        for &(d, s) in &q.hidden_alternatives {
            if !candidates.contains(&d) {
                return fail(format!("alternative ({d},{s}) outside the candidates"));
            }
            self.snippet((d, s))?;
        }
        if !q.hidden_alternatives.is_disjoint(&q.gold_evidence) {
            return fail("hidden alternatives overlap gold evidence".into());
        }
        Ok(())
    }
}

/// Tokens of the non-NULL selected snippets in ascending `(doc, snippet)` order.
pub fn concatenate_context(corpus: &Corpus, q: &Question, c: &ContextSet) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for (d, s) in c.iter() {
        if !q.candidate_doc_ids.contains(&d) {
            return Err(Error::UnknownDocument(d));
        }
        let snippet = corpus.snippet((d, s))?;
        if !snippet.is_null {
            out.extend(snippet.tokens.iter().cloned());
        }
    }
    Ok(out)
}

/// Whitespace tokenization with lowercasing and punctuation stripping.
///
/// A `.` survives only between digits and a `-` only in front of a digit, so
/// `-3.5` stays a number while `end.` becomes `end`.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().filter_map(normalize_token).collect()
}

pub fn normalize_token(word: &str) -> Option<String> {
    let chars: Vec<char> = word.chars().collect();
    let mut out = String::with_capacity(word.len());
    for (i, &ch) in chars.iter().enumerate() {
        let next_digit = chars.get(i + 1).is_some_and(|c| c.is_ascii_digit());
        if ch.is_alphanumeric() {
            out.extend(ch.to_lowercase());
        } else if ch == '.' && next_digit && out.chars().last().is_some_and(|c| c.is_ascii_digit()) {
            out.push('.');
        } else if ch == '-' && next_digit && out.is_empty() {
            out.push('-');
        }
    }
    (!out.is_empty()).then_some(out)
}

/// Parses a token as a finite number. Alphabetic tokens such as `inf` never parse.
pub fn parse_number(token: &str) -> Option<f64> {
    let body = token.strip_prefix('-').unwrap_or(token);
    if !body.starts_with(|c: char| c.is_ascii_digit()) {
        return None;
    }
    token.parse::<f64>().ok().filter(|v| v.is_finite())
}

pub fn is_year(token: &str) -> bool {
    token.len() == 4
        && token.bytes().all(|b| b.is_ascii_digit())
        && (1000..=2099).contains(&token.parse::<u32>().unwrap_or(0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        tokenize(s)
    }

    fn fixture() -> (Corpus, Question) {
        let d1 = Document::new(1, toks("one"), vec![toks("a b"), toks("x")]);
        let d2 = Document::new(2, toks("two"), vec![toks("y"), toks("c")]);
        let q = Question {
            id: "q".into(),
            tokens: toks("what"),
            candidate_doc_ids: vec![1, 2],
            gold_answer: Answer::span("a"),
            gold_doc_ids: [1].into(),
            gold_evidence: [(1, 0)].into(),
            hidden_alternatives: BTreeSet::new(),
        };
        let corpus = Corpus {
            documents: [(1, d1), (2, d2)].into(),
            questions: vec![q.clone()],
        };
        (corpus, q)
    }

    #[test]
    fn tokenizer_normalizes() {
        assert_eq!(toks("Aaron  Burr, shot!"), vec!["aaron", "burr", "shot"]);
        assert_eq!(toks("-3.5 end. 1,804"), vec!["-3.5", "end", "1804"]);
        assert_eq!(toks("-- ..."), Vec::<String>::new());
    }

    #[test]
    fn numbers_and_years() {
        assert_eq!(parse_number("1804"), Some(1804.0));
        assert_eq!(parse_number("-2"), Some(-2.0));
        assert_eq!(parse_number("inf"), None);
        assert_eq!(parse_number("nan"), None);
        assert!(is_year("1804"));
        assert!(!is_year("804"));
        assert!(!is_year("3000"));
    }

    #[test]
    fn documents_end_with_null() {
        let d = Document::new(7, vec![], vec![toks("a"), toks("b")]);
        assert_eq!(d.snippets.len(), 3);
        assert_eq!(d.null_id(), 2);
        assert!(d.snippets[2].is_null && d.snippets[2].tokens.is_empty());
        assert_eq!(d.real_snippets().len(), 2);
        d.check().unwrap();
    }

    #[test]
    fn concatenation_examples() {
        let (corpus, q) = fixture();
        let empty = ContextSet::new();
        assert!(concatenate_context(&corpus, &q, &empty).unwrap().is_empty());

        let null_only = ContextSet::from_pairs([(1, 2)]).unwrap();
        assert!(concatenate_context(&corpus, &q, &null_only).unwrap().is_empty());

        let c = ContextSet::from_pairs([(2, 1), (1, 0)]).unwrap();
        assert_eq!(concatenate_context(&corpus, &q, &c).unwrap(), vec!["a", "b", "c"]);
    }

    #[test]
    fn concatenation_lookup_errors() {
        let (corpus, q) = fixture();
        let bad_snippet = ContextSet::from_pairs([(1, 9)]).unwrap();
        assert!(matches!(
            concatenate_context(&corpus, &q, &bad_snippet),
            Err(Error::UnknownSnippet { doc: 1, snippet: 9 })
        ));
        let bad_doc = ContextSet::from_pairs([(5, 0)]).unwrap();
        assert!(matches!(
            concatenate_context(&corpus, &q, &bad_doc),
            Err(Error::UnknownDocument(5))
        ));
    }

    #[test]
    fn context_set_rejects_second_snippet_from_a_document() {
        assert!(ContextSet::from_pairs([(1, 0), (1, 1)]).is_err());
    }

    #[test]
    fn validation_catches_broken_invariants() {
        let (mut corpus, mut q) = fixture();
        corpus.validate().unwrap();

        q.gold_evidence = [(2, 0)].into();
        corpus.questions = vec![q.clone()];
        assert!(corpus.validate().is_err());

        q.gold_evidence = BTreeSet::new();
        q.hidden_alternatives = [(1, 0)].into();
        q.gold_evidence = [(1, 0)].into();
        corpus.questions = vec![q.clone()];
        assert!(corpus.validate().is_err());

        q.hidden_alternatives = BTreeSet::new();
        q.gold_answer = Answer::None;
        corpus.questions = vec![q];
        assert!(corpus.validate().is_err());
    }
}
