//! Set-valued retrieval: independent document selection, per-document
//! evidence softmax with a NULL option, joint context probabilities and the
//! top-m context set used for marginalization.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use crate::corpus::{ContextSet, Corpus, DocId, Question, Selection, SnippetId};
use crate::error::{Error, Result};
use crate::scalar::{log_sum_exp, sigmoid, softplus, Scalar};
use crate::scorer::{backward_score, forward_score, FeatureVector, Featurizer, Head, ModelParams, Tape};

/// Document probabilities above this value are selected.
pub const DOC_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone)]
pub struct SnippetView<T> {
    pub id: SnippetId,
    pub is_null: bool,
    pub features: FeatureVector<T>,
}

#[derive(Debug, Clone)]
pub struct DocView<T> {
    pub id: DocId,
    pub features: FeatureVector<T>,
    /// Snippets the evidence softmax normalizes over. NULL is always present.
    pub snippets: Vec<SnippetView<T>>,
}

/// A question with all retrieval features precomputed. Features do not
/// depend on parameters, so a view is built once and reused.
#[derive(Debug, Clone)]
pub struct QuestionView<'a, T> {
    pub question: &'a Question,
    pub docs: Vec<DocView<T>>,
}

impl<'a, T: Scalar> QuestionView<'a, T> {
    pub fn build(corpus: &Corpus, question: &'a Question, feature_dim: usize) -> Result<Self> {
        let candidates = corpus.candidates(question)?;
        let featurizer = Featurizer::new(&question.tokens, &candidates, feature_dim);
        let n = candidates.len();
        let docs = candidates
            .iter()
            .enumerate()
            .map(|(i, doc)| DocView {
                id: doc.id,
                features: featurizer.document(doc, i, n),
                snippets: doc
                    .snippets
                    .iter()
                    .map(|s| SnippetView {
                        id: s.id,
                        is_null: s.is_null,
                        features: featurizer.snippet(doc, s),
                    })
                    .collect(),
            })
            .collect();
        Ok(QuestionView { question, docs })
    }

    /// Keeps only the listed snippets (plus NULL) of the listed documents.
    /// Documents absent from `keep` are left untouched.
    pub fn restrict(&self, keep: &BTreeMap<DocId, BTreeSet<SnippetId>>) -> Self {
        let docs = self
            .docs
            .iter()
            .map(|d| match keep.get(&d.id) {
                None => d.clone(),
                Some(ids) => DocView {
                    id: d.id,
                    features: d.features.clone(),
                    snippets: d
                        .snippets
                        .iter()
                        .filter(|s| s.is_null || ids.contains(&s.id))
                        .cloned()
                        .collect(),
                },
            })
            .collect();
        QuestionView {
            question: self.question,
            docs,
        }
    }

    pub fn doc_index(&self, id: DocId) -> Result<usize> {
        self.docs
            .iter()
            .position(|d| d.id == id)
            .ok_or(Error::UnknownDocument(id))
    }
}

/// Per-document selection probabilities and the thresholded set.
#[derive(Debug, Clone, PartialEq)]
pub struct DocSelection<T> {
    pub logits: BTreeMap<DocId, T>,
    pub probs: BTreeMap<DocId, T>,
    pub selected: BTreeSet<DocId>,
}

impl<T: Scalar> DocSelection<T> {
    pub fn from_logits(logits: BTreeMap<DocId, T>) -> Self {
        let probs = logits.iter().map(|(&d, &z)| (d, sigmoid(z))).collect::<BTreeMap<_, _>>();
        let selected = probs
            .iter()
            .filter(|(_, &p)| p > T::of(DOC_THRESHOLD))
            .map(|(&d, _)| d)
            .collect();
        DocSelection {
            logits,
            probs,
            selected,
        }
    }
}

/// Per-document distributions over snippets, NULL included.
#[derive(Debug, Clone, PartialEq)]
pub struct EvidenceDistribution<T> {
    pub log_probs: BTreeMap<DocId, Vec<(SnippetId, T)>>,
}

impl<T: Scalar> EvidenceDistribution<T> {
    pub fn log_prob(&self, pair: Selection) -> Result<T> {
        let dist = self
            .log_probs
            .get(&pair.0)
            .ok_or_else(|| Error::Contract(format!("document {} is not in D", pair.0)))?;
        dist.iter()
            .find(|(s, _)| *s == pair.1)
            .map(|&(_, lp)| lp)
            .ok_or(Error::UnknownSnippet {
                doc: pair.0,
                snippet: pair.1,
            })
    }

    pub fn probs(&self, doc: DocId) -> Option<Vec<(SnippetId, T)>> {
        self.log_probs
            .get(&doc)
            .map(|v| v.iter().map(|&(s, lp)| (s, lp.exp())).collect())
    }

    pub fn docs(&self) -> impl Iterator<Item = DocId> + '_ {
        self.log_probs.keys().copied()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredContext<T> {
    pub context: ContextSet,
    /// `log P(D, C | q)`.
    pub log_joint: T,
}

/// `Σ_{d∈D} log p_d + Σ_{d∉D} log(1 − p_d)`, from the logits for stability.
pub fn document_set_log_probability<T: Scalar>(sel: &DocSelection<T>, docs: &BTreeSet<DocId>) -> Result<T> {
    for d in docs {
        if !sel.logits.contains_key(d) {
            return Err(Error::Contract(format!("document {d} is not a candidate")));
        }
    }
    Ok(sel
        .logits
        .iter()
        .map(|(d, &z)| if docs.contains(d) { -softplus(-z) } else { -softplus(z) })
        .sum())
}

/// `log P(D|q) + Σ log P(s | d, q)` for a context choosing one snippet in every document of D.
pub fn context_log_probability<T: Scalar>(
    doc_log_p: T,
    ev: &EvidenceDistribution<T>,
    c: &ContextSet,
) -> Result<T> {
    for d in c.docs() {
        if !ev.log_probs.contains_key(&d) {
            return Err(Error::Contract(format!(
                "context selects from document {d} outside D"
            )));
        }
    }
    let mut total = doc_log_p;
    for d in ev.docs() {
        let s = c.get(d).ok_or_else(|| {
            Error::Contract(format!("context has no selection for document {d} in D"))
        })?;
        total = total + ev.log_prob((d, s))?;
    }
    Ok(total)
}

/// One forward pass of both retrieval heads over a question, with tapes kept
/// for backpropagation.
#[derive(Debug)]
pub struct RetrievalPass<T> {
    doc_ids: Vec<DocId>,
    doc_logits: Vec<T>,
    doc_tapes: Vec<Tape<T>>,
    snippet_ids: Vec<Vec<SnippetId>>,
    evidence_logits: Vec<Vec<T>>,
    evidence_log_probs: Vec<Vec<T>>,
    evidence_tapes: Vec<Vec<Tape<T>>>,
}

/// Upstream gradients with respect to every retrieval logit of a pass.
#[derive(Debug, Clone)]
pub struct RetrievalGrad<T> {
    pub doc: Vec<T>,
    pub evidence: Vec<Vec<T>>,
}

impl<T: Scalar> RetrievalPass<T> {
    pub fn forward(params: &ModelParams<T>, view: &QuestionView<'_, T>) -> Result<Self> {
        let n = view.docs.len();
        let mut pass = RetrievalPass {
            doc_ids: Vec::with_capacity(n),
            doc_logits: Vec::with_capacity(n),
            doc_tapes: Vec::with_capacity(n),
            snippet_ids: Vec::with_capacity(n),
            evidence_logits: Vec::with_capacity(n),
            evidence_log_probs: Vec::with_capacity(n),
            evidence_tapes: Vec::with_capacity(n),
        };
        for doc in &view.docs {
            let (z, tape) = forward_score(params, Head::Document, &doc.features)?;
            pass.doc_ids.push(doc.id);
            pass.doc_logits.push(z);
            pass.doc_tapes.push(tape);
            let mut ids = Vec::with_capacity(doc.snippets.len());
            let mut logits = Vec::with_capacity(doc.snippets.len());
            let mut tapes = Vec::with_capacity(doc.snippets.len());
            for s in &doc.snippets {
                let (z, tape) = forward_score(params, Head::Evidence, &s.features)?;
                ids.push(s.id);
                logits.push(z);
                tapes.push(tape);
            }
            let lse = log_sum_exp(&logits);
            pass.evidence_log_probs
                .push(logits.iter().map(|&z| z - lse).collect());
            pass.snippet_ids.push(ids);
            pass.evidence_logits.push(logits);
            pass.evidence_tapes.push(tapes);
        }
        Ok(pass)
    }

    pub fn doc_ids(&self) -> &[DocId] {
        &self.doc_ids
    }

    pub fn doc_index(&self, id: DocId) -> Result<usize> {
        self.doc_ids
            .iter()
            .position(|&d| d == id)
            .ok_or(Error::UnknownDocument(id))
    }

    pub fn snippet_index(&self, doc_index: usize, id: SnippetId) -> Result<usize> {
        self.snippet_ids[doc_index]
            .iter()
            .position(|&s| s == id)
            .ok_or(Error::UnknownSnippet {
                doc: self.doc_ids[doc_index],
                snippet: id,
            })
    }

    pub fn doc_logit(&self, doc_index: usize) -> T {
        self.doc_logits[doc_index]
    }

    pub fn doc_prob(&self, doc_index: usize) -> T {
        sigmoid(self.doc_logits[doc_index])
    }

    pub fn evidence_log_prob(&self, doc_index: usize, snippet_index: usize) -> T {
        self.evidence_log_probs[doc_index][snippet_index]
    }

    pub fn selection(&self) -> DocSelection<T> {
        DocSelection::from_logits(
            self.doc_ids
                .iter()
                .copied()
                .zip(self.doc_logits.iter().copied())
                .collect(),
        )
    }

    pub fn evidence(&self, docs: &BTreeSet<DocId>) -> Result<EvidenceDistribution<T>> {
        let mut log_probs = BTreeMap::new();
        for &d in docs {
            let i = self.doc_index(d)?;
            log_probs.insert(
                d,
                self.snippet_ids[i]
                    .iter()
                    .copied()
                    .zip(self.evidence_log_probs[i].iter().copied())
                    .collect(),
            );
        }
        Ok(EvidenceDistribution { log_probs })
    }

    pub fn zero_grad(&self) -> RetrievalGrad<T> {
        RetrievalGrad {
            doc: vec![T::zero(); self.doc_logits.len()],
            evidence: self
                .evidence_logits
                .iter()
                .map(|l| vec![T::zero(); l.len()])
                .collect(),
        }
    }

    /// Adds `scale · ∂ log P(D|q) / ∂ logits` for document set `docs`.
    pub fn accumulate_doc_set(&self, docs: &BTreeSet<DocId>, scale: T, grad: &mut RetrievalGrad<T>) {
        for (i, d) in self.doc_ids.iter().enumerate() {
            let p = self.doc_prob(i);
            let dz = if docs.contains(d) { T::one() - p } else { -p };
            grad.doc[i] = grad.doc[i] + scale * dz;
        }
    }

    /// Adds `scale · ∂ log P(s | d, q) / ∂ logits`.
    pub fn accumulate_evidence(&self, doc_index: usize, snippet_index: usize, scale: T, grad: &mut RetrievalGrad<T>) {
        let row = &mut grad.evidence[doc_index];
        for (j, (g, &lp)) in row.iter_mut().zip(&self.evidence_log_probs[doc_index]).enumerate() {
            let indicator = if j == snippet_index { T::one() } else { T::zero() };
            *g = *g + scale * (indicator - lp.exp());
        }
    }

    /// Backpropagates logit gradients into `grads`, consuming the tapes.
    pub fn backward(self, grad: &RetrievalGrad<T>, params: &ModelParams<T>, grads: &mut ModelParams<T>) {
        for (tape, &g) in self.doc_tapes.into_iter().zip(&grad.doc) {
            backward_score(tape, g, params, grads);
        }
        for (tapes, gs) in self.evidence_tapes.into_iter().zip(&grad.evidence) {
            for (tape, &g) in tapes.into_iter().zip(gs) {
                backward_score(tape, g, params, grads);
            }
        }
    }

    /// Top-m contexts over the thresholded document set.
    ///
    /// Each selected document contributes its `m` most probable snippets;
    /// the best `m` combinations of the Cartesian product are returned in
    /// descending joint probability, ties broken by the `(doc, snippet)` list.
    pub fn top_contexts(&self, m: usize) -> Result<Vec<ScoredContext<T>>> {
        if m == 0 {
            return Err(Error::Contract("m must be at least 1".into()));
        }
        let sel = self.selection();
        let doc_log_p = document_set_log_probability(&sel, &sel.selected)?;
        let ev = self.evidence(&sel.selected)?;

        let mut beam: Vec<(T, Vec<Selection>)> = vec![(T::zero(), Vec::new())];
        for &d in &sel.selected {
            let i = self.doc_index(d)?;
            let mut picks: Vec<(SnippetId, T)> = self.snippet_ids[i]
                .iter()
                .copied()
                .zip(self.evidence_log_probs[i].iter().copied())
                .collect();
            picks.sort_by(|a, b| cmp_desc(a.1, b.1).then(a.0.cmp(&b.0)));
            picks.truncate(m);
            let mut next = Vec::with_capacity(beam.len() * picks.len());
            for (score, prefix) in &beam {
                for &(s, lp) in &picks {
                    let mut pairs = prefix.clone();
                    pairs.push((d, s));
                    next.push((*score + lp, pairs));
                }
            }
            // The best m full contexts only extend the best m prefixes.
            next.sort_by(|a, b| cmp_desc(a.0, b.0).then_with(|| a.1.cmp(&b.1)));
            next.truncate(m);
            beam = next;
        }

        let mut out = beam
            .into_iter()
            .map(|(_, pairs)| {
                let context = ContextSet::from_pairs(pairs)?;
                let log_joint = context_log_probability(doc_log_p, &ev, &context)?;
                Ok(ScoredContext { context, log_joint })
            })
            .collect::<Result<Vec<_>>>()?;
        out.sort_by(|a, b| {
            cmp_desc(a.log_joint, b.log_joint).then_with(|| a.context.to_pairs().cmp(&b.context.to_pairs()))
        });
        Ok(out)
    }
}

fn cmp_desc<T: Scalar>(a: T, b: T) -> Ordering {
    b.partial_cmp(&a).unwrap_or(Ordering::Equal)
}

pub fn document_probabilities<T: Scalar>(
    params: &ModelParams<T>,
    view: &QuestionView<'_, T>,
) -> Result<DocSelection<T>> {
    if view.docs.is_empty() {
        return Err(Error::Contract(format!(
            "question {} has no candidate documents",
            view.question.id
        )));
    }
    let logits = view
        .docs
        .iter()
        .map(|d| Ok((d.id, forward_score(params, Head::Document, &d.features)?.0)))
        .collect::<Result<BTreeMap<_, _>>>()?;
    Ok(DocSelection::from_logits(logits))
}

pub fn evidence_distributions<T: Scalar>(
    params: &ModelParams<T>,
    view: &QuestionView<'_, T>,
    docs: &BTreeSet<DocId>,
) -> Result<EvidenceDistribution<T>> {
    RetrievalPass::forward(params, view)?.evidence(docs)
}

pub fn enumerate_topm_contexts<T: Scalar>(
    params: &ModelParams<T>,
    view: &QuestionView<'_, T>,
    m: usize,
) -> Result<Vec<ScoredContext<T>>> {
    RetrievalPass::forward(params, view)?.top_contexts(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn selection(logits: &[(DocId, f64)]) -> DocSelection<f64> {
        DocSelection::from_logits(logits.iter().copied().collect())
    }

    fn logit(p: f64) -> f64 {
        (p / (1.0 - p)).ln()
    }

    fn dist(rows: &[(DocId, &[f64])]) -> EvidenceDistribution<f64> {
        EvidenceDistribution {
            log_probs: rows
                .iter()
                .map(|(d, ps)| {
                    (
                        *d,
                        ps.iter()
                            .enumerate()
                            .map(|(j, p)| (j as SnippetId, p.ln()))
                            .collect(),
                    )
                })
                .collect(),
        }
    }

    #[test]
    fn sigmoid_threshold_examples() {
        let sel = selection(&[(1, 0.0)]);
        assert_eq!(sel.probs[&1], 0.5);
        assert!(sel.selected.is_empty());

        let sel = selection(&[(1, 2.0), (2, -2.0)]);
        assert!((sel.probs[&1] - 0.8808).abs() < 1e-4);
        assert!((sel.probs[&2] - 0.1192).abs() < 1e-4);
        assert_eq!(sel.selected, [1].into());
    }

    #[test]
    fn doc_set_log_probability_examples() {
        let sel = selection(&[(1, logit(0.9)), (2, logit(0.2))]);
        let lp = document_set_log_probability(&sel, &[1].into()).unwrap();
        assert!((lp - 0.72f64.ln()).abs() < 1e-12);

        let sel = selection(&[(1, 0.0)]);
        let lp = document_set_log_probability(&sel, &BTreeSet::new()).unwrap();
        assert!((lp - 0.5f64.ln()).abs() < 1e-12);

        assert!(document_set_log_probability(&sel, &[9].into()).is_err());
    }

    #[test]
    fn doc_set_probabilities_sum_to_one_over_power_set() {
        let sel = selection(&[(1, 0.3), (2, -1.1), (3, 2.4)]);
        let ids = [1, 2, 3];
        let mut total = 0.0;
        for mask in 0u32..8 {
            let set: BTreeSet<DocId> = (0..3).filter(|b| mask >> b & 1 == 1).map(|b| ids[b]).collect();
            total += document_set_log_probability(&sel, &set).unwrap().exp();
        }
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn context_log_probability_examples() {
        let ev = dist(&[(1, &[0.5, 0.5])]);
        let c = ContextSet::from_pairs([(1, 0)]).unwrap();
        let lp = context_log_probability(-0.3, &ev, &c).unwrap();
        assert!((lp - (-0.3 + 0.5f64.ln())).abs() < 1e-12);

        let empty = EvidenceDistribution::<f64> {
            log_probs: BTreeMap::new(),
        };
        assert_eq!(context_log_probability(-1.5, &empty, &ContextSet::new()).unwrap(), -1.5);
    }

    #[test]
    fn context_outside_d_is_a_contract_violation() {
        let ev = dist(&[(1, &[0.5, 0.5])]);
        let c = ContextSet::from_pairs([(1, 0), (2, 0)]).unwrap();
        assert!(matches!(context_log_probability(0.0, &ev, &c), Err(Error::Contract(_))));
        assert!(matches!(
            context_log_probability(0.0, &ev, &ContextSet::new()),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn evidence_product_sums_to_doc_probability() {
        let ev = dist(&[(1, &[0.2, 0.3, 0.5]), (4, &[0.6, 0.4])]);
        let doc_lp = 0.35f64.ln();
        let mut total = 0.0;
        for a in 0..3 {
            for b in 0..2 {
                let c = ContextSet::from_pairs([(1, a), (4, b)]).unwrap();
                total += context_log_probability(doc_lp, &ev, &c).unwrap().exp();
            }
        }
        assert!((total - 0.35).abs() < 1e-9);
    }
}
