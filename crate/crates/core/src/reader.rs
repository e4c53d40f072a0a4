//! Answer model `P(a | q, C)`: candidate enumeration over a concatenated
//! context and a log-linear head per candidate kind.

use std::collections::HashSet;

use crate::corpus::{normalize_token, parse_number, Answer};
use crate::error::Result;
use crate::scalar::{log_sum_exp, Scalar};
use crate::scorer::{backward_score, forward_score, CandidateKind, FeatureVector, Head, ModelParams, Tape};

/// Longest span considered as an answer.
pub const MAX_SPAN_LEN: usize = 8;
pub const NUMBER_TOLERANCE: f64 = 1e-6;
const WINDOW: usize = 3;

const STOPWORDS: &[&str] = &[
    "a", "an", "the", "in", "of", "by", "was", "who", "it", "and", "to", "on", "at", "as", "for", "with", "had",
    "been", "is", "did", "he", "she", "they", "after", "before", "that", "this",
];
const BOOLEAN_CUES: &[&str] = &[
    "is", "was", "did", "does", "do", "are", "were", "has", "had", "can", "could", "will",
];

/// Slots of the reader feature vector.
pub mod slot {
    pub const QUESTION_OVERLAP: usize = 0;
    pub const LENGTH: usize = 1;
    pub const IS_SPAN: usize = 2;
    pub const IS_LITERAL: usize = 3;
    pub const IS_DERIVED: usize = 4;
    pub const IS_BOOLEAN: usize = 5;
    pub const IS_UNANSWERABLE: usize = 6;
    pub const POSITION: usize = 7;
    pub const LEFT_WINDOW: usize = 8;
    pub const RIGHT_WINDOW: usize = 9;
    pub const CONTEXT_COVERAGE: usize = 10;
    pub const CONTEXT_EMPTY: usize = 11;
    pub const BOOLEAN_CUE: usize = 12;
    pub const QUANTITY_CUE: usize = 13;
    pub const POSITIVE_DIFFERENCE: usize = 14;
    pub const STOPWORDS: usize = 15;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    Add,
    Sub,
}

impl Op {
    pub fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            Op::Add => a + b,
            Op::Sub => a - b,
        }
    }
}

/// Where a candidate comes from in the context.
#[derive(Debug, Clone, PartialEq)]
pub enum Provenance {
    Span { start: usize, len: usize },
    Literal { position: usize },
    Derived { lhs: usize, rhs: usize, op: Op },
    Boolean,
    Unanswerable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnswerCandidate {
    pub answer: Answer,
    pub provenance: Provenance,
}

impl AnswerCandidate {
    pub fn kind(&self) -> CandidateKind {
        match &self.answer {
            Answer::Span(_) => CandidateKind::Span,
            Answer::Number(_) => CandidateKind::Number,
            Answer::Boolean(true) => CandidateKind::Yes,
            Answer::Boolean(false) => CandidateKind::No,
            Answer::None => CandidateKind::Unanswerable,
        }
    }
}

fn normalized(tokens: &[String]) -> Vec<String> {
    tokens.iter().filter_map(|t| normalize_token(t)).collect()
}

/// Type and value equality. Numbers within 1e-6, spans by normalized tokens.
pub fn answer_equal(a: &Answer, b: &Answer) -> bool {
    match (a, b) {
        (Answer::Span(x), Answer::Span(y)) => normalized(x) == normalized(y),
        (Answer::Number(x), Answer::Number(y)) => (x - y).abs() <= NUMBER_TOLERANCE,
        (Answer::Boolean(x), Answer::Boolean(y)) => x == y,
        (Answer::None, Answer::None) => true,
        _ => false,
    }
}

/// Distinct context numbers, each with its first position.
pub fn context_numbers(context: &[String]) -> Vec<(usize, f64)> {
    let mut out: Vec<(usize, f64)> = Vec::new();
    for (i, t) in context.iter().enumerate() {
        if let Some(v) = parse_number(t) {
            if !out.iter().any(|&(_, u)| (u - v).abs() <= NUMBER_TOLERANCE) {
                out.push((i, v));
            }
        }
    }
    out
}

/// Whether `target` is a context number or one `+`/`−` away from two of them.
pub fn number_reachable(target: f64, context: &[String]) -> bool {
    let nums = context_numbers(context);
    let close = |v: f64| (v - target).abs() <= NUMBER_TOLERANCE;
    nums.iter().any(|&(_, v)| close(v))
        || nums.iter().enumerate().any(|(i, &(_, a))| {
            nums.iter()
                .enumerate()
                .any(|(j, &(_, b))| i != j && (close(a + b) || close(a - b)))
        })
}

/// Spans up to [`MAX_SPAN_LEN`], literal numbers, one-step sums and
/// differences of distinct numbers, yes, no and unanswerable. Duplicated
/// answer values keep their first candidate.
pub fn candidate_answers(context: &[String]) -> Vec<AnswerCandidate> {
    let mut out: Vec<AnswerCandidate> = Vec::new();
    let mut seen_spans: HashSet<&[String]> = HashSet::new();
    for start in 0..context.len() {
        for len in 1..=MAX_SPAN_LEN.min(context.len() - start) {
            let span = &context[start..start + len];
            if seen_spans.insert(span) {
                out.push(AnswerCandidate {
                    answer: Answer::Span(span.to_vec()),
                    provenance: Provenance::Span { start, len },
                });
            }
        }
    }

    let nums = context_numbers(context);
    let mut values: Vec<f64> = Vec::new();
    let mut push_number = |out: &mut Vec<AnswerCandidate>, v: f64, provenance: Provenance| {
        if v.is_finite() && !values.iter().any(|&u| (u - v).abs() <= NUMBER_TOLERANCE) {
            values.push(v);
            out.push(AnswerCandidate {
                answer: Answer::Number(v),
                provenance,
            });
        }
    };
    for &(position, v) in &nums {
        push_number(&mut out, v, Provenance::Literal { position });
    }
    for (i, &(pa, a)) in nums.iter().enumerate() {
        for (j, &(pb, b)) in nums.iter().enumerate() {
            if i == j {
                continue;
            }
            if i < j {
                push_number(&mut out, a + b, Provenance::Derived { lhs: pa, rhs: pb, op: Op::Add });
            }
            push_number(&mut out, a - b, Provenance::Derived { lhs: pa, rhs: pb, op: Op::Sub });
        }
    }

    for (answer, provenance) in [
        (Answer::Boolean(true), Provenance::Boolean),
        (Answer::Boolean(false), Provenance::Boolean),
        (Answer::None, Provenance::Unanswerable),
    ] {
        out.push(AnswerCandidate { answer, provenance });
    }
    out
}

/// Question-level facts the reader features reuse for every candidate.
struct ReaderContext<'a> {
    question: HashSet<&'a str>,
    context: &'a [String],
    coverage: f64,
    boolean_cue: bool,
    quantity_cue: bool,
}

impl<'a> ReaderContext<'a> {
    fn new(question: &'a [String], context: &'a [String]) -> Self {
        let qset: HashSet<&str> = question.iter().map(String::as_str).collect();
        let ctx: HashSet<&str> = context.iter().map(String::as_str).collect();
        let coverage = if qset.is_empty() {
            0.0
        } else {
            qset.intersection(&ctx).count() as f64 / qset.len() as f64
        };
        let boolean_cue = question
            .first()
            .is_some_and(|t| BOOLEAN_CUES.contains(&t.as_str()));
        let quantity_cue = question
            .windows(2)
            .any(|w| w[0] == "how" && (w[1] == "many" || w[1] == "much"));
        ReaderContext {
            question: qset,
            context,
            coverage,
            boolean_cue,
            quantity_cue,
        }
    }

    fn in_question(&self, t: &str) -> bool {
        self.question.contains(t)
    }

    fn left_window(&self, start: usize) -> f64 {
        let from = start.saturating_sub(WINDOW);
        self.context[from..start]
            .iter()
            .filter(|t| self.in_question(t))
            .count() as f64
            / WINDOW as f64
    }

    fn right_window(&self, end: usize) -> f64 {
        let to = (end + WINDOW).min(self.context.len());
        self.context[end.min(to)..to]
            .iter()
            .filter(|t| self.in_question(t))
            .count() as f64
            / WINDOW as f64
    }

    fn position(&self, i: usize) -> f64 {
        if self.context.len() > 1 {
            i as f64 / (self.context.len() - 1) as f64
        } else {
            0.0
        }
    }

    fn features<T: Scalar>(&self, cand: &AnswerCandidate, dim: usize) -> FeatureVector<T> {
        let mut x = FeatureVector::zeros(dim);
        x.set(slot::CONTEXT_COVERAGE, self.coverage);
        x.set(slot::CONTEXT_EMPTY, if self.context.is_empty() { 1.0 } else { 0.0 });
        x.set(slot::BOOLEAN_CUE, if self.boolean_cue { 1.0 } else { 0.0 });
        x.set(slot::QUANTITY_CUE, if self.quantity_cue { 1.0 } else { 0.0 });
        match cand.provenance {
            Provenance::Span { start, len } => {
                let toks = &self.context[start..start + len];
                let in_q = toks.iter().filter(|t| self.in_question(t)).count();
                let stop = toks.iter().filter(|t| STOPWORDS.contains(&t.as_str())).count();
                x.set(slot::IS_SPAN, 1.0);
                x.set(slot::QUESTION_OVERLAP, in_q as f64 / len as f64);
                x.set(slot::LENGTH, len as f64 / MAX_SPAN_LEN as f64);
                x.set(slot::POSITION, self.position(start));
                x.set(slot::LEFT_WINDOW, self.left_window(start));
                x.set(slot::RIGHT_WINDOW, self.right_window(start + len));
                x.set(slot::STOPWORDS, stop as f64 / len as f64);
            }
            Provenance::Literal { position } => {
                x.set(slot::IS_LITERAL, 1.0);
                x.set(slot::LENGTH, 1.0 / MAX_SPAN_LEN as f64);
                if self.in_question(&self.context[position]) {
                    x.set(slot::QUESTION_OVERLAP, 1.0);
                }
                x.set(slot::POSITION, self.position(position));
                x.set(slot::LEFT_WINDOW, self.left_window(position));
                x.set(slot::RIGHT_WINDOW, self.right_window(position + 1));
            }
            Provenance::Derived { lhs, rhs, op } => {
                x.set(slot::IS_DERIVED, 1.0);
                x.set(slot::LENGTH, 1.0 / MAX_SPAN_LEN as f64);
                x.set(slot::POSITION, 0.5 * (self.position(lhs) + self.position(rhs)));
                x.set(slot::LEFT_WINDOW, 0.5 * (self.left_window(lhs) + self.left_window(rhs)));
                x.set(
                    slot::RIGHT_WINDOW,
                    0.5 * (self.right_window(lhs + 1) + self.right_window(rhs + 1)),
                );
                if let Answer::Number(v) = cand.answer {
                    if op == Op::Sub && v > 0.0 {
                        x.set(slot::POSITIVE_DIFFERENCE, 1.0);
                    }
                }
            }
            Provenance::Boolean => x.set(slot::IS_BOOLEAN, 1.0),
            Provenance::Unanswerable => x.set(slot::IS_UNANSWERABLE, 1.0),
        }
        x
    }
}

/// Feature vectors of every candidate of `context`.
pub fn reader_features<T: Scalar>(
    question: &[String],
    context: &[String],
    candidates: &[AnswerCandidate],
    dim: usize,
) -> Vec<FeatureVector<T>> {
    let rc = ReaderContext::new(question, context);
    candidates.iter().map(|c| rc.features(c, dim)).collect()
}

#[derive(Debug, Clone)]
pub struct AnswerDistribution<T> {
    pub candidates: Vec<AnswerCandidate>,
    pub probs: Vec<T>,
}

impl<T: Scalar> AnswerDistribution<T> {
    /// Probability of the candidate equal to `answer`, zero if absent.
    pub fn prob_of(&self, answer: &Answer) -> T {
        self.candidates
            .iter()
            .position(|c| answer_equal(&c.answer, answer))
            .map_or(T::zero(), |i| self.probs[i])
    }

    /// Most probable candidate; the earliest wins ties.
    pub fn argmax(&self) -> &AnswerCandidate {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        &self.candidates[best]
    }
}

/// Reader forward pass over one context, with tapes for backpropagation.
#[derive(Debug)]
pub struct ReaderPass<T> {
    pub candidates: Vec<AnswerCandidate>,
    pub log_probs: Vec<T>,
    tapes: Vec<Tape<T>>,
}

impl<T: Scalar> ReaderPass<T> {
    pub fn forward(params: &ModelParams<T>, question: &[String], context: &[String]) -> Result<Self> {
        let candidates = candidate_answers(context);
        let features = reader_features(question, context, &candidates, params.feature_dim());
        let mut logits = Vec::with_capacity(candidates.len());
        let mut tapes = Vec::with_capacity(candidates.len());
        for (c, x) in candidates.iter().zip(&features) {
            let (z, tape) = forward_score(params, Head::Reader(c.kind()), x)?;
            logits.push(z);
            tapes.push(tape);
        }
        let lse = log_sum_exp(&logits);
        let log_probs = logits.iter().map(|&z| z - lse).collect();
        Ok(ReaderPass {
            candidates,
            log_probs,
            tapes,
        })
    }

    pub fn find(&self, answer: &Answer) -> Option<usize> {
        self.candidates
            .iter()
            .position(|c| answer_equal(&c.answer, answer))
    }

    pub fn unanswerable_index(&self) -> usize {
        self.candidates.len() - 1
    }

    /// `log P(answer | q, C)`, or `None` when the answer is not a candidate.
    pub fn log_prob(&self, answer: &Answer) -> Option<T> {
        self.find(answer).map(|i| self.log_probs[i])
    }

    /// Adds `scale · ∂ log P(candidate i) / ∂ logits` to `upstream`.
    pub fn accumulate_log_prob(&self, index: usize, scale: T, upstream: &mut [T]) {
        for (j, (u, &lp)) in upstream.iter_mut().zip(&self.log_probs).enumerate() {
            let indicator = if j == index { T::one() } else { T::zero() };
            *u = *u + scale * (indicator - lp.exp());
        }
    }

    pub fn backward(self, upstream: &[T], params: &ModelParams<T>, grads: &mut ModelParams<T>) {
        for (tape, &g) in self.tapes.into_iter().zip(upstream) {
            backward_score(tape, g, params, grads);
        }
    }

    pub fn distribution(&self) -> AnswerDistribution<T> {
        AnswerDistribution {
            candidates: self.candidates.clone(),
            probs: self.log_probs.iter().map(|lp| lp.exp()).collect(),
        }
    }
}

pub fn answer_distribution<T: Scalar>(
    params: &ModelParams<T>,
    question: &[String],
    context: &[String],
) -> Result<AnswerDistribution<T>> {
    Ok(ReaderPass::forward(params, question, context)?.distribution())
}
