//! Training losses.
//!
//! * `g_d`: binary cross-entropy of document selection against the gold documents.
//! * `g_c`: negative log-likelihood of each gold snippet within its document.
//! * `g_a`: negative log-likelihood of the gold answer given the gold context.
//! * `g_m`: negative log of the answer marginal over the valid top-m contexts.
//! * `g_an`: unanswerable loss on invalid top-m contexts; reader gradients only.
//!
//! The total is `g_d + g_c + g_a + g_m + α·g_an`. Everything is computed in
//! log space with log arguments clamped at 1e-12.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::corpus::{concatenate_context, Answer, Corpus, DocId};
use crate::error::{Error, Result};
use crate::reader::{number_reachable, ReaderPass};
use crate::retrieval::{QuestionView, RetrievalGrad, RetrievalPass, ScoredContext};
use crate::scalar::{clamp_log, log_sum_exp, softplus, Scalar};
use crate::scorer::ModelParams;

/// Weight of the invalid-context loss when the data has unanswerable questions.
pub const DEFAULT_ALPHA: f64 = 0.5;
pub const DEFAULT_TOP_M: usize = 4;

/// Which loss terms contribute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LossTerms {
    pub doc: bool,
    pub evidence: bool,
    pub answer: bool,
    pub marginal: bool,
    pub invalid: bool,
}

impl LossTerms {
    pub const SUPERVISED: LossTerms = LossTerms {
        doc: true,
        evidence: true,
        answer: true,
        marginal: false,
        invalid: false,
    };
    pub const FULL: LossTerms = LossTerms {
        doc: true,
        evidence: true,
        answer: true,
        marginal: true,
        invalid: true,
    };
    pub const NONE: LossTerms = LossTerms {
        doc: false,
        evidence: false,
        answer: false,
        marginal: false,
        invalid: false,
    };
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveConfig {
    pub m: usize,
    pub alpha: f64,
    pub terms: LossTerms,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        ObjectiveConfig {
            m: DEFAULT_TOP_M,
            alpha: DEFAULT_ALPHA,
            terms: LossTerms::FULL,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub g_d: f64,
    pub g_c: f64,
    pub g_a: f64,
    pub g_m: f64,
    pub g_an: f64,
    pub total: f64,
    /// Number of valid contexts in the top-m set.
    pub s1_size: usize,
    /// Number of invalid contexts in the top-m set.
    pub s2_size: usize,
    /// Set when marginalization ran but found no valid context.
    pub s1_empty: bool,
}

impl LossReport {
    pub fn is_finite(&self) -> bool {
        [self.g_d, self.g_c, self.g_a, self.g_m, self.g_an, self.total]
            .iter()
            .all(|v| v.is_finite())
    }

    /// Element-wise accumulation, used for epoch averages.
    pub fn add(&mut self, other: &LossReport) {
        self.g_d += other.g_d;
        self.g_c += other.g_c;
        self.g_a += other.g_a;
        self.g_m += other.g_m;
        self.g_an += other.g_an;
        self.total += other.total;
        self.s1_size += other.s1_size;
        self.s2_size += other.s2_size;
        self.s1_empty |= other.s1_empty;
    }

    pub fn scale(&mut self, factor: f64) {
        self.g_d *= factor;
        self.g_c *= factor;
        self.g_a *= factor;
        self.g_m *= factor;
        self.g_an *= factor;
        self.total *= factor;
    }
}

/// Whether the gold answer is derivable from the context tokens.
pub fn is_valid_context(gold: &Answer, context: &[String]) -> bool {
    match gold {
        Answer::Span(span) => {
            let span: Vec<String> = span.iter().filter_map(|t| crate::corpus::normalize_token(t)).collect();
            !span.is_empty() && context.windows(span.len()).any(|w| w == span.as_slice())
        }
        Answer::Number(v) => number_reachable(*v, context),
        Answer::Boolean(_) | Answer::None => true,
    }
}

/// Valid contexts, then invalid ones.
pub type Partition<T> = (Vec<ScoredContext<T>>, Vec<ScoredContext<T>>);

/// Splits scored contexts into valid and invalid ones, preserving order.
pub fn partition_contexts<T: Scalar>(
    gold: &Answer,
    contexts: Vec<ScoredContext<T>>,
    corpus: &Corpus,
    view: &QuestionView<'_, T>,
) -> Result<Partition<T>> {
    let mut valid = Vec::new();
    let mut invalid = Vec::new();
    for sc in contexts {
        let tokens = concatenate_context(corpus, view.question, &sc.context)?;
        if is_valid_context(gold, &tokens) {
            valid.push(sc);
        } else {
            invalid.push(sc);
        }
    }
    Ok((valid, invalid))
}

/// Clamped log plus a flag telling whether the gradient passes through.
fn floored<T: Scalar>(log_p: Option<T>) -> (T, bool) {
    match log_p {
        Some(lp) => {
            let (v, clamped) = clamp_log(lp);
            (v, !clamped)
        }
        None => (clamp_log(T::neg_infinity()).0, false),
    }
}

struct Engine<'a, 'q, T: Scalar> {
    params: &'a ModelParams<T>,
    view: &'a QuestionView<'q, T>,
    corpus: &'a Corpus,
}

impl<T: Scalar> Engine<'_, '_, T> {
    fn gold_docs_checked(&self) -> Result<&BTreeSet<DocId>> {
        let q = self.view.question;
        for &(d, s) in &q.gold_evidence {
            if !q.gold_doc_ids.contains(&d) {
                return Err(Error::Contract(format!(
                    "question {}: gold evidence ({d},{s}) lies outside the gold documents",
                    q.id
                )));
            }
        }
        Ok(&q.gold_doc_ids)
    }

    fn doc_loss(&self, pass: &RetrievalPass<T>, rgrad: &mut RetrievalGrad<T>, scale: T) -> Result<T> {
        let gold = self.gold_docs_checked()?;
        let mut loss = T::zero();
        for (i, d) in pass.doc_ids().iter().enumerate() {
            let positive = gold.contains(d);
            let z = pass.doc_logit(i);
            // log σ(z) = −softplus(−z), log(1 − σ(z)) = −softplus(z)
            let lp = if positive { -softplus(-z) } else { -softplus(z) };
            let (lp, flows) = floored(Some(lp));
            loss = loss - lp;
            if flows {
                let target = if positive { T::one() } else { T::zero() };
                rgrad.doc[i] = rgrad.doc[i] + scale * (pass.doc_prob(i) - target);
            }
        }
        Ok(loss)
    }

    fn evidence_loss(&self, pass: &RetrievalPass<T>, rgrad: &mut RetrievalGrad<T>, scale: T) -> Result<T> {
        self.gold_docs_checked()?;
        let mut loss = T::zero();
        for &(d, s) in &self.view.question.gold_evidence {
            let di = pass.doc_index(d)?;
            let si = pass.snippet_index(di, s)?;
            let (lp, flows) = floored(Some(pass.evidence_log_prob(di, si)));
            loss = loss - lp;
            if flows {
                pass.accumulate_evidence(di, si, -scale, rgrad);
            }
        }
        Ok(loss)
    }

    /// `−log P(target | q, C)` with its gradient into `grads` scaled by `scale`.
    fn answer_nll(
        &self,
        tokens: &[String],
        target: &Answer,
        scale: T,
        grads: Option<&mut ModelParams<T>>,
    ) -> Result<T> {
        let pass = ReaderPass::forward(self.params, &self.view.question.tokens, tokens)?;
        let idx = pass.find(target);
        let (lp, flows) = floored(idx.map(|i| pass.log_probs[i]));
        if let (Some(grads), Some(i), true) = (grads, idx, flows) {
            let mut up = vec![T::zero(); pass.log_probs.len()];
            pass.accumulate_log_prob(i, -scale, &mut up);
            pass.backward(&up, self.params, grads);
        }
        Ok(-lp)
    }

    fn gold_answer_loss(&self, scale: T, grads: Option<&mut ModelParams<T>>) -> Result<T> {
        self.gold_docs_checked()?;
        let q = self.view.question;
        let tokens = concatenate_context(self.corpus, q, &q.gold_context()?)?;
        self.answer_nll(&tokens, &q.gold_answer, scale, grads)
    }

    fn marginal_loss(
        &self,
        pass: &RetrievalPass<T>,
        valid: &[ScoredContext<T>],
        rgrad: &mut RetrievalGrad<T>,
        scale: T,
        mut grads: Option<&mut ModelParams<T>>,
    ) -> Result<T> {
        if valid.is_empty() {
            return Ok(T::zero());
        }
        let q = self.view.question;
        let mut readers = Vec::with_capacity(valid.len());
        let mut terms = Vec::with_capacity(valid.len());
        for sc in valid {
            let tokens = concatenate_context(self.corpus, q, &sc.context)?;
            let reader = ReaderPass::forward(self.params, &q.tokens, &tokens)?;
            let idx = reader.find(&q.gold_answer);
            let (lp, flows) = floored(idx.map(|i| reader.log_probs[i]));
            terms.push(lp + sc.log_joint);
            readers.push((reader, idx.filter(|_| flows)));
        }
        let lse = log_sum_exp(&terms);
        if grads.is_none() {
            return Ok(-lse);
        }
        let docs: BTreeSet<DocId> = valid[0].context.docs().collect();
        for ((sc, (reader, idx)), &term) in valid.iter().zip(readers).zip(&terms) {
            let w = (term - lse).exp() * scale;
            pass.accumulate_doc_set(&docs, -w, rgrad);
            for (d, s) in sc.context.iter() {
                let di = pass.doc_index(d)?;
                let si = pass.snippet_index(di, s)?;
                pass.accumulate_evidence(di, si, -w, rgrad);
            }
            if let (Some(i), Some(g)) = (idx, grads.as_deref_mut()) {
                let mut up = vec![T::zero(); reader.log_probs.len()];
                reader.accumulate_log_prob(i, -w, &mut up);
                reader.backward(&up, self.params, g);
            }
        }
        Ok(-lse)
    }

    fn invalid_loss(
        &self,
        invalid: &[ScoredContext<T>],
        scale: T,
        mut grads: Option<&mut ModelParams<T>>,
    ) -> Result<T> {
        let q = self.view.question;
        let mut loss = T::zero();
        for sc in invalid {
            let tokens = concatenate_context(self.corpus, q, &sc.context)?;
            loss = loss + self.answer_nll(&tokens, &Answer::None, scale, grads.as_deref_mut())?;
        }
        Ok(loss)
    }
}

/// Evaluates the enabled loss terms for one question and, when `grads` is
/// given, adds the gradient of the reported total into it.
pub fn evaluate_loss<T: Scalar>(
    params: &ModelParams<T>,
    view: &QuestionView<'_, T>,
    corpus: &Corpus,
    cfg: &ObjectiveConfig,
    mut grads: Option<&mut ModelParams<T>>,
) -> Result<LossReport> {
    if cfg.alpha < 0.0 {
        return Err(Error::Config("alpha must be non-negative".into()));
    }
    let engine = Engine {
        params,
        view,
        corpus,
    };
    let one = T::one();
    let alpha = T::of(cfg.alpha);
    let terms = cfg.terms;
    let pass = RetrievalPass::forward(params, view)?;
    let mut rgrad = pass.zero_grad();
    let mut report = LossReport::default();

    if terms.doc {
        report.g_d = engine.doc_loss(&pass, &mut rgrad, one)?.as_f64();
    }
    if terms.evidence {
        report.g_c = engine.evidence_loss(&pass, &mut rgrad, one)?.as_f64();
    }
    if terms.answer {
        report.g_a = engine.gold_answer_loss(one, grads.as_deref_mut())?.as_f64();
    }
    if terms.marginal || terms.invalid {
        let top = pass.top_contexts(cfg.m)?;
        let (valid, invalid) = partition_contexts(&view.question.gold_answer, top, corpus, view)?;
        report.s1_size = valid.len();
        report.s2_size = invalid.len();
        if terms.marginal {
            report.s1_empty = valid.is_empty();
            report.g_m = engine
                .marginal_loss(&pass, &valid, &mut rgrad, one, grads.as_deref_mut())?
                .as_f64();
        }
        if terms.invalid {
            report.g_an = engine
                .invalid_loss(&invalid, alpha, grads.as_deref_mut())?
                .as_f64();
        }
    }
    report.total = report.g_d + report.g_c + report.g_a + report.g_m + cfg.alpha * report.g_an;
    if !report.is_finite() {
        return Err(Error::NonFinite("loss"));
    }
    if let Some(g) = grads {
        pass.backward(&rgrad, params, g);
    }
    Ok(report)
}

/// `(g_d, g_c, g_a)`.
pub fn supervised_losses<T: Scalar>(
    params: &ModelParams<T>,
    view: &QuestionView<'_, T>,
    corpus: &Corpus,
) -> Result<(f64, f64, f64)> {
    let cfg = ObjectiveConfig {
        terms: LossTerms::SUPERVISED,
        ..Default::default()
    };
    let r = evaluate_loss(params, view, corpus, &cfg, None)?;
    Ok((r.g_d, r.g_c, r.g_a))
}

/// `g_m` over the given valid contexts, which must share one document set.
pub fn marginal_loss<T: Scalar>(
    params: &ModelParams<T>,
    view: &QuestionView<'_, T>,
    corpus: &Corpus,
    valid: &[ScoredContext<T>],
) -> Result<f64> {
    let engine = Engine {
        params,
        view,
        corpus,
    };
    let pass = RetrievalPass::forward(params, view)?;
    let mut rgrad = pass.zero_grad();
    Ok(engine
        .marginal_loss(&pass, valid, &mut rgrad, T::one(), None)?
        .as_f64())
}

/// `g_an` over the given invalid contexts.
pub fn invalid_context_loss<T: Scalar>(
    params: &ModelParams<T>,
    view: &QuestionView<'_, T>,
    corpus: &Corpus,
    invalid: &[ScoredContext<T>],
) -> Result<f64> {
    let engine = Engine {
        params,
        view,
        corpus,
    };
    Ok(engine.invalid_loss(invalid, T::one(), None)?.as_f64())
}

pub fn total_loss<T: Scalar>(
    params: &ModelParams<T>,
    view: &QuestionView<'_, T>,
    corpus: &Corpus,
    m: usize,
    alpha: f64,
) -> Result<LossReport> {
    let cfg = ObjectiveConfig {
        m,
        alpha,
        terms: LossTerms::FULL,
    };
    evaluate_loss(params, view, corpus, &cfg, None)
}
