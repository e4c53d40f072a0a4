//! Retrieval and QA metrics.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::corpus::{normalize_token, Answer, AnswerKind, ContextSet, Corpus, DocId, Question};
use crate::error::{Error, Result};
use crate::reader::answer_equal;
use crate::scalar::Scalar;
use crate::scorer::ModelParams;
use crate::training::predict;

/// What a system returned for one question.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRecord {
    pub docs: BTreeSet<DocId>,
    pub context: ContextSet,
    pub answer: Answer,
}

impl PredictionRecord {
    /// The annotation itself, as an oracle system would return it.
    pub fn oracle(q: &Question) -> Result<Self> {
        Ok(PredictionRecord {
            docs: q.gold_doc_ids.clone(),
            context: q.gold_context()?,
            answer: q.gold_answer.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub questions: usize,
    pub doc_f1: f64,
    pub rt_recall: f64,
    pub qa_em: f64,
    pub qa_f1: f64,
    /// QA F1 by gold answer type, for the types present.
    pub per_type_qa_f1: BTreeMap<String, f64>,
    /// Over questions with hidden alternatives: correct answers whose
    /// context holds an alternative and no gold evidence.
    pub alternative_hit_rate: f64,
    pub alternative_questions: usize,
}

/// Set F1; two empty sets agree perfectly.
pub fn set_f1<T: Ord>(predicted: &BTreeSet<T>, gold: &BTreeSet<T>) -> f64 {
    if predicted.is_empty() && gold.is_empty() {
        return 1.0;
    }
    let hit = predicted.intersection(gold).count() as f64;
    if hit == 0.0 {
        return 0.0;
    }
    let p = hit / predicted.len() as f64;
    let r = hit / gold.len() as f64;
    2.0 * p * r / (p + r)
}

/// Bag-of-tokens F1 after normalization.
pub fn token_f1(predicted: &[String], gold: &[String]) -> f64 {
    let norm = |toks: &[String]| -> Vec<String> { toks.iter().filter_map(|t| normalize_token(t)).collect() };
    let (p, g) = (norm(predicted), norm(gold));
    if p.is_empty() || g.is_empty() {
        return if p.is_empty() && g.is_empty() { 1.0 } else { 0.0 };
    }
    let mut counts: BTreeMap<&str, i64> = BTreeMap::new();
    for t in &g {
        *counts.entry(t).or_default() += 1;
    }
    let mut common = 0usize;
    for t in &p {
        if let Some(c) = counts.get_mut(t.as_str()) {
            if *c > 0 {
                *c -= 1;
                common += 1;
            }
        }
    }
    if common == 0 {
        return 0.0;
    }
    let precision = common as f64 / p.len() as f64;
    let recall = common as f64 / g.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Token F1 for span gold answers, exact match otherwise.
pub fn answer_f1(predicted: &Answer, gold: &Answer) -> f64 {
    match (predicted, gold) {
        (Answer::Span(p), Answer::Span(g)) => token_f1(p, g),
        (p, Answer::Span(g)) => token_f1(&crate::corpus::tokenize(&p.to_string()), g),
        (p, g) => f64::from(u8::from(answer_equal(p, g))),
    }
}

pub fn evaluate_predictions(corpus: &Corpus, predictions: &[PredictionRecord]) -> Result<MetricsReport> {
    if predictions.len() != corpus.questions.len() {
        return Err(Error::Contract(format!(
            "{} predictions for {} questions",
            predictions.len(),
            corpus.questions.len()
        )));
    }
    let mut doc_f1 = 0.0;
    let mut recall_sum = 0.0;
    let mut recall_n = 0usize;
    let mut em = 0.0;
    let mut f1 = 0.0;
    let mut by_type: BTreeMap<AnswerKind, (f64, usize)> = BTreeMap::new();
    let mut alt_hits = 0usize;
    let mut alt_n = 0usize;

    for (q, pred) in corpus.questions.iter().zip(predictions) {
        doc_f1 += set_f1(&pred.docs, &q.gold_doc_ids);
        if !q.gold_evidence.is_empty() {
            let found = q.gold_evidence.iter().filter(|&&p| pred.context.contains(p)).count();
            recall_sum += found as f64 / q.gold_evidence.len() as f64;
            recall_n += 1;
        }
        let correct = answer_equal(&pred.answer, &q.gold_answer);
        let qf1 = answer_f1(&pred.answer, &q.gold_answer);
        em += f64::from(u8::from(correct));
        f1 += qf1;
        let slot = by_type.entry(q.gold_answer.kind()).or_default();
        slot.0 += qf1;
        slot.1 += 1;
        if !q.hidden_alternatives.is_empty() {
            alt_n += 1;
            let uses_alt = q.hidden_alternatives.iter().any(|&p| pred.context.contains(p));
            let uses_gold = q.gold_evidence.iter().any(|&p| pred.context.contains(p));
            if correct && uses_alt && !uses_gold {
                alt_hits += 1;
            }
        }
    }
    let n = corpus.questions.len().max(1) as f64;
    let ratio = |num: f64, den: usize| if den == 0 { 0.0 } else { num / den as f64 };
    Ok(MetricsReport {
        questions: corpus.questions.len(),
        doc_f1: doc_f1 / n,
        rt_recall: if recall_n == 0 { 1.0 } else { recall_sum / recall_n as f64 },
        qa_em: em / n,
        qa_f1: f1 / n,
        per_type_qa_f1: by_type
            .into_iter()
            .map(|(k, (s, c))| (k.label().to_string(), s / c as f64))
            .collect(),
        alternative_hit_rate: ratio(alt_hits as f64, alt_n),
        alternative_questions: alt_n,
    })
}

pub fn predict_all<T: Scalar>(params: &ModelParams<T>, corpus: &Corpus) -> Result<Vec<PredictionRecord>> {
    corpus
        .questions
        .iter()
        .map(|q| {
            let p = predict(params, q, corpus)?;
            Ok(PredictionRecord {
                docs: p.selection.selected,
                context: p.context,
                answer: p.answer,
            })
        })
        .collect()
}

pub fn evaluate<T: Scalar>(params: &ModelParams<T>, corpus: &Corpus) -> Result<MetricsReport> {
    evaluate_predictions(corpus, &predict_all(params, corpus)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{tokenize, Document};

    fn corpus() -> Corpus {
        let mut c = Corpus::default();
        c.documents.insert(0, Document::new(0, tokenize("a"), vec![tokenize("aaron burr shot him"), tokenize("burr fled")]));
        c.documents.insert(1, Document::new(1, tokenize("b"), vec![tokenize("nothing here")]));
        c.questions.push(Question {
            id: "q0".into(),
            tokens: tokenize("who shot him"),
            candidate_doc_ids: vec![0, 1],
            gold_answer: Answer::span("aaron burr"),
            gold_doc_ids: [0].into(),
            gold_evidence: [(0, 0)].into(),
            hidden_alternatives: [(0, 1)].into(),
        });
        c.questions.push(Question {
            id: "q1".into(),
            tokens: tokenize("who shot the king"),
            candidate_doc_ids: vec![0, 1],
            gold_answer: Answer::None,
            gold_doc_ids: [1].into(),
            gold_evidence: BTreeSet::new(),
            hidden_alternatives: BTreeSet::new(),
        });
        c
    }

    #[test]
    fn token_f1_examples() {
        let f = token_f1(&tokenize("aaron"), &tokenize("aaron burr"));
        assert_eq!(f, 2.0 / 3.0);
        assert_eq!(token_f1(&tokenize("Aaron Burr"), &tokenize("aaron burr")), 1.0);
        assert_eq!(token_f1(&tokenize("king"), &tokenize("aaron burr")), 0.0);
        assert_eq!(token_f1(&[], &[]), 1.0);
    }

    #[test]
    fn non_span_answers_score_binary() {
        assert_eq!(answer_f1(&Answer::Number(3.0), &Answer::Number(3.0)), 1.0);
        assert_eq!(answer_f1(&Answer::Number(3.0), &Answer::Number(4.0)), 0.0);
        assert_eq!(answer_f1(&Answer::Boolean(true), &Answer::None), 0.0);
        assert_eq!(answer_f1(&Answer::Number(3.0), &Answer::span("3 ships")), 2.0 / 3.0);
    }

    #[test]
    fn set_f1_examples() {
        let a: BTreeSet<u32> = [1, 2].into();
        assert_eq!(set_f1(&a, &a), 1.0);
        assert_eq!(set_f1(&[1].into(), &a), 2.0 / 3.0);
        assert_eq!(set_f1(&BTreeSet::<u32>::new(), &BTreeSet::new()), 1.0);
        assert_eq!(set_f1(&[3].into(), &a), 0.0);
    }

    #[test]
    fn oracle_scores_one() {
        let c = corpus();
        let preds: Vec<_> = c.questions.iter().map(|q| PredictionRecord::oracle(q).unwrap()).collect();
        let r = evaluate_predictions(&c, &preds).unwrap();
        assert_eq!((r.doc_f1, r.rt_recall, r.qa_em, r.qa_f1), (1.0, 1.0, 1.0, 1.0));
        assert!(r.per_type_qa_f1.values().all(|&v| v == 1.0));
        assert_eq!(r.alternative_hit_rate, 0.0);
    }

    #[test]
    fn alternative_hit_requires_no_gold_and_a_correct_answer() {
        let c = corpus();
        let mut preds: Vec<_> = c.questions.iter().map(|q| PredictionRecord::oracle(q).unwrap()).collect();
        preds[0].context = ContextSet::from_pairs([(0, 1)]).unwrap();
        let r = evaluate_predictions(&c, &preds).unwrap();
        assert_eq!(r.alternative_hit_rate, 1.0);
        assert_eq!(r.rt_recall, 0.0);
        preds[0].answer = Answer::span("burr");
        let r = evaluate_predictions(&c, &preds).unwrap();
        assert_eq!(r.alternative_hit_rate, 0.0);
        assert_eq!(r.qa_f1, (2.0 / 3.0 + 1.0) / 2.0);
        assert_eq!(r.per_type_qa_f1["span"], 2.0 / 3.0);
    }

    #[test]
    fn length_mismatch_is_rejected() {
        assert!(evaluate_predictions(&corpus(), &[]).is_err());
    }
}
