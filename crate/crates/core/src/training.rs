//! SGD training loop, negative downsampling, checkpoints and prediction.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{concatenate_context, Answer, ContextSet, Corpus, DocId, Document, Question, SnippetId};
use crate::error::{Error, Result};
use crate::objective::{evaluate_loss, LossReport, LossTerms, ObjectiveConfig, DEFAULT_ALPHA, DEFAULT_TOP_M};
use crate::reader::ReaderPass;
use crate::retrieval::{DocSelection, QuestionView, RetrievalPass};
use crate::scalar::Scalar;
use crate::scorer::{CheckpointMeta, GroupMask, ModelParams, DEFAULT_FEATURE_DIM, DEFAULT_HIDDEN_DIM, MIN_FEATURE_DIM};

pub const DEFAULT_EPOCHS: usize = 30;
pub const DEFAULT_DOWNSAMPLE_K: usize = 7;
pub const DEFAULT_LEARNING_RATE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub m: usize,
    pub alpha: f64,
    pub negative_downsample_k: usize,
    pub seed: u64,
    pub marginalization: bool,
    pub invalid_loss: bool,
    pub joint: bool,
    pub feature_dim: usize,
    pub hidden_dim: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: DEFAULT_EPOCHS,
            learning_rate: DEFAULT_LEARNING_RATE,
            m: DEFAULT_TOP_M,
            alpha: DEFAULT_ALPHA,
            negative_downsample_k: DEFAULT_DOWNSAMPLE_K,
            seed: 0,
            marginalization: true,
            invalid_loss: true,
            joint: true,
            feature_dim: DEFAULT_FEATURE_DIM,
            hidden_dim: DEFAULT_HIDDEN_DIM,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::Config(msg.into()));
        if self.epochs < 1 {
            return fail("epochs must be at least 1");
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return fail("learning_rate must be finite and non-negative");
        }
        if self.m < 1 {
            return fail("m must be at least 1");
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return fail("alpha must be finite and non-negative");
        }
        if self.negative_downsample_k < 1 {
            return fail("negative_downsample_k must be at least 1");
        }
        if self.feature_dim < MIN_FEATURE_DIM {
            return fail("feature_dim is below the feature slot count");
        }
        if self.hidden_dim < 1 {
            return fail("hidden_dim must be at least 1");
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }

    /// `alpha`, or 0 when the corpus has no unanswerable questions.
    pub fn effective_alpha(&self, corpus: &Corpus) -> f64 {
        if corpus.questions.iter().any(|q| !q.is_answerable()) {
            self.alpha
        } else {
            0.0
        }
    }
}

/// Gold snippets, NULL, and up to `k` uniformly drawn other snippets.
pub fn downsample_negatives<R: Rng>(
    doc: &Document,
    gold: &BTreeSet<SnippetId>,
    k: usize,
    rng: &mut R,
) -> BTreeSet<SnippetId> {
    let mut keep: BTreeSet<SnippetId> = gold.clone();
    keep.insert(doc.null_id());
    let negatives: Vec<SnippetId> = doc
        .real_snippets()
        .iter()
        .map(|s| s.id)
        .filter(|id| !gold.contains(id))
        .collect();
    keep.extend(negatives.choose_multiple(rng, k).copied());
    keep
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Joint,
    Retrieval,
    Reader,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    pub epoch: usize,
    pub phase: Phase,
    /// Per-question mean of the losses seen before each update.
    pub loss: LossReport,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub params: ModelParams<T>,
    pub history: Vec<EpochReport>,
}

struct Stage {
    phase: Phase,
    terms: LossTerms,
    mask: GroupMask,
}

fn stages(cfg: &TrainConfig) -> Vec<Stage> {
    let extra = LossTerms {
        marginal: cfg.marginalization,
        invalid: cfg.invalid_loss,
        ..LossTerms::SUPERVISED
    };
    if cfg.joint {
        return vec![Stage {
            phase: Phase::Joint,
            terms: extra,
            mask: GroupMask::ALL,
        }];
    }
    vec![
        Stage {
            phase: Phase::Retrieval,
            terms: LossTerms {
                doc: true,
                evidence: true,
                ..LossTerms::NONE
            },
            mask: GroupMask {
                embedding: true,
                doc_head: true,
                evidence_head: true,
                reader_head: false,
            },
        },
        Stage {
            phase: Phase::Reader,
            terms: LossTerms {
                doc: false,
                evidence: false,
                ..extra
            },
            mask: GroupMask {
                embedding: false,
                doc_head: false,
                evidence_head: false,
                reader_head: true,
            },
        },
    ]
}

fn gold_by_doc(q: &Question) -> BTreeMap<DocId, BTreeSet<SnippetId>> {
    let mut out: BTreeMap<DocId, BTreeSet<SnippetId>> = BTreeMap::new();
    for &(d, s) in &q.gold_evidence {
        out.entry(d).or_default().insert(s);
    }
    out
}

pub fn train<T: Scalar>(config: &TrainConfig, corpus: &Corpus) -> Result<TrainOutcome<T>> {
    train_with(config, corpus, |_, _, _| Ok(()))
}

/// Trains and writes `epoch-NNN.json` after every epoch plus `params.json`
/// and `history.json` at the end.
pub fn train_to_dir<T: Scalar>(config: &TrainConfig, corpus: &Corpus, dir: &Path) -> Result<TrainOutcome<T>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let hash = config.hash();
    let outcome = train_with(config, corpus, |epoch, params, _| {
        let meta = CheckpointMeta {
            epoch: Some(epoch),
            config_hash: Some(hash.clone()),
        };
        params.save(&checkpoint_path(dir, epoch), &meta)
    })?;
    let meta = CheckpointMeta {
        epoch: outcome.history.last().map(|r| r.epoch),
        config_hash: Some(hash),
    };
    outcome.params.save(&dir.join("params.json"), &meta)?;
    let history = dir.join("history.json");
    fs::write(&history, serde_json::to_string_pretty(&outcome.history)?).map_err(|e| Error::io(&history, e))?;
    Ok(outcome)
}

pub fn checkpoint_path(dir: &Path, epoch: usize) -> PathBuf {
    dir.join(format!("epoch-{epoch:03}.json"))
}

/// Core loop. `on_epoch` sees the global epoch index, parameters after the
/// epoch, and the epoch report.
pub fn train_with<T: Scalar, F>(config: &TrainConfig, corpus: &Corpus, mut on_epoch: F) -> Result<TrainOutcome<T>>
where
    F: FnMut(usize, &ModelParams<T>, &EpochReport) -> Result<()>,
{
    config.validate()?;
    if corpus.questions.is_empty() {
        return Err(Error::Contract("cannot train on an empty corpus".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = ModelParams::<T>::init(config.feature_dim, config.hidden_dim, &mut rng);
    let views = corpus
        .questions
        .iter()
        .map(|q| QuestionView::build(corpus, q, config.feature_dim))
        .collect::<Result<Vec<_>>>()?;
    let golds: Vec<_> = corpus.questions.iter().map(gold_by_doc).collect();
    let lr = T::of(config.learning_rate);
    let alpha = config.effective_alpha(corpus);

    let mut history = Vec::new();
    let mut order: Vec<usize> = (0..corpus.questions.len()).collect();
    let mut epoch = 0;
    for stage in stages(config) {
        let objective = ObjectiveConfig {
            m: config.m,
            alpha,
            terms: stage.terms,
        };
        for _ in 0..config.epochs {
            order.shuffle(&mut rng);
            let mut sum = LossReport::default();
            for &qi in &order {
                let q = &corpus.questions[qi];
                let mut keep = BTreeMap::new();
                for &d in &q.candidate_doc_ids {
                    let empty = BTreeSet::new();
                    let gold = golds[qi].get(&d).unwrap_or(&empty);
                    let doc = corpus.document(d)?;
                    keep.insert(d, downsample_negatives(doc, gold, config.negative_downsample_k, &mut rng));
                }
                let view = views[qi].restrict(&keep);
                let mut grads = params.zeros_like();
                let report = evaluate_loss(&params, &view, corpus, &objective, Some(&mut grads))
                    .map_err(|e| diverged(epoch, q, e))?;
                params.add_scaled(&grads, -lr, stage.mask);
                if !params.is_finite() {
                    return Err(Error::Divergence {
                        epoch,
                        question: q.id.clone(),
                        detail: "parameters became non-finite".into(),
                    });
                }
                sum.add(&report);
            }
            sum.scale(1.0 / order.len() as f64);
            let report = EpochReport {
                epoch,
                phase: stage.phase,
                loss: sum,
            };
            on_epoch(epoch, &params, &report)?;
            history.push(report);
            epoch += 1;
        }
    }
    Ok(TrainOutcome { params, history })
}

fn diverged(epoch: usize, q: &Question, e: Error) -> Error {
    match e {
        Error::NonFinite(what) => Error::Divergence {
            epoch,
            question: q.id.clone(),
            detail: format!("non-finite {what}"),
        },
        other => other,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction<T> {
    pub selection: DocSelection<T>,
    pub context: ContextSet,
    pub answer: Answer,
}

/// Thresholded documents, argmax snippet per document, argmax answer.
/// Ties go to the lowest snippet id and the earliest answer candidate.
pub fn predict<T: Scalar>(params: &ModelParams<T>, q: &Question, corpus: &Corpus) -> Result<Prediction<T>> {
    let view = QuestionView::build(corpus, q, params.feature_dim())?;
    let pass = RetrievalPass::forward(params, &view)?;
    let selection = pass.selection();
    let evidence = pass.evidence(&selection.selected)?;
    let mut context = ContextSet::new();
    for (&d, dist) in &evidence.log_probs {
        let mut best: Option<(SnippetId, T)> = None;
        for &(s, lp) in dist {
            if best.is_none_or(|(bs, blp)| lp > blp || (lp == blp && s < bs)) {
                best = Some((s, lp));
            }
        }
        if let Some((s, _)) = best {
            context.insert(d, s)?;
        }
    }
    let tokens = concatenate_context(corpus, q, &context)?;
    let reader = ReaderPass::forward(params, &q.tokens, &tokens)?;
    let answer = reader.distribution().argmax().answer.clone();
    Ok(Prediction {
        selection,
        context,
        answer,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tokenize;

    fn fixture() -> Corpus {
        let mut corpus = Corpus::default();
        let facts = [
            ("who shot hamilton", "hamilton", "burr shot hamilton in a duel", "burr"),
            ("who founded rome", "rome", "romulus founded rome long ago", "romulus"),
            ("who painted guernica", "guernica", "picasso painted guernica in paris", "picasso"),
            ("who wrote hamlet", "hamlet", "shakespeare wrote hamlet for the stage", "shakespeare"),
            ("who discovered penicillin", "penicillin", "fleming discovered penicillin by chance", "fleming"),
        ];
        for (i, (question, title, fact, answer)) in facts.iter().enumerate() {
            let gold = 2 * i as DocId;
            let other = gold + 1;
            corpus.documents.insert(
                gold,
                Document::new(gold, tokenize(title), vec![tokenize("some unrelated filler words"), tokenize(fact)]),
            );
            corpus.documents.insert(
                other,
                Document::new(other, tokenize("weather"), vec![tokenize("rain fell over the valley"), tokenize("clouds drifted east")]),
            );
            corpus.questions.push(Question {
                id: format!("q{i}"),
                tokens: tokenize(question),
                candidate_doc_ids: vec![gold, other],
                gold_answer: Answer::span(answer),
                gold_doc_ids: [gold].into(),
                gold_evidence: [(gold, 1)].into(),
                hidden_alternatives: BTreeSet::new(),
            });
        }
        corpus.validate().unwrap();
        corpus
    }

    fn doc_with(n: usize) -> Document {
        Document::new(0, vec![], (0..n).map(|i| vec![format!("w{i}")]).collect())
    }

    #[test]
    fn downsampling_keeps_gold_and_null() {
        let doc = doc_with(20);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let kept = downsample_negatives(&doc, &[3].into(), 7, &mut rng);
        assert_eq!(kept.len(), 9);
        assert!(kept.contains(&3) && kept.contains(&doc.null_id()));
        let mut again = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(kept, downsample_negatives(&doc, &[3].into(), 7, &mut again));
    }

    #[test]
    fn downsampling_small_document_is_identity() {
        let doc = doc_with(4);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let kept = downsample_negatives(&doc, &BTreeSet::new(), 7, &mut rng);
        assert_eq!(kept, (0..=4).collect());
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        for bad in [
            TrainConfig { epochs: 0, ..Default::default() },
            TrainConfig { m: 0, ..Default::default() },
            TrainConfig { negative_downsample_k: 0, ..Default::default() },
            TrainConfig { learning_rate: f64::NAN, ..Default::default() },
            TrainConfig { feature_dim: 4, ..Default::default() },
        ] {
            assert!(matches!(bad.validate(), Err(Error::Config(_))));
        }
        let a = TrainConfig::default();
        let b = TrainConfig { seed: 1, ..Default::default() };
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn zero_learning_rate_leaves_params_unchanged() {
        let corpus = fixture();
        let cfg = TrainConfig { epochs: 2, learning_rate: 0.0, ..Default::default() };
        let out = train::<f64>(&cfg, &corpus).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let init = ModelParams::<f64>::init(cfg.feature_dim, cfg.hidden_dim, &mut rng);
        assert_eq!(out.params, init);
    }

    #[test]
    fn separable_fixture_converges() {
        let corpus = fixture();
        let cfg = TrainConfig {
            epochs: 200,
            learning_rate: 0.1,
            marginalization: false,
            invalid_loss: false,
            ..Default::default()
        };
        let out = train::<f64>(&cfg, &corpus).unwrap();
        let last = &out.history.last().unwrap().loss;
        assert!(last.g_d < 0.05, "g_d = {}", last.g_d);
        for r in &out.history {
            assert_eq!(r.loss.g_m, 0.0);
            assert_eq!(r.loss.g_an, 0.0);
        }
        for w in out.history.windows(2) {
            assert!(w[1].loss.total <= w[0].loss.total + 1e-9, "{} -> {}", w[0].loss.total, w[1].loss.total);
        }
        for q in &corpus.questions {
            let p = predict(&out.params, q, &corpus).unwrap();
            assert_eq!(p.answer, q.gold_answer);
            assert_eq!(p.context, q.gold_context().unwrap());
        }
    }

    #[test]
    fn training_is_deterministic() {
        let corpus = fixture();
        let cfg = TrainConfig { epochs: 3, ..Default::default() };
        let a = train::<f64>(&cfg, &corpus).unwrap();
        let b = train::<f64>(&cfg, &corpus).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.history, b.history);
    }

    #[test]
    fn pipeline_runs_two_phases() {
        let corpus = fixture();
        let cfg = TrainConfig {
            epochs: 2,
            marginalization: false,
            invalid_loss: false,
            joint: false,
            ..Default::default()
        };
        let out = train::<f64>(&cfg, &corpus).unwrap();
        let phases: Vec<Phase> = out.history.iter().map(|r| r.phase).collect();
        assert_eq!(phases, [Phase::Retrieval, Phase::Retrieval, Phase::Reader, Phase::Reader]);
        assert_eq!(out.history[0].loss.g_a, 0.0);
        assert_eq!(out.history[3].loss.g_d, 0.0);
    }

    #[test]
    fn checkpoints_are_written_per_epoch() {
        let corpus = fixture();
        let dir = tempfile::tempdir().unwrap();
        let cfg = TrainConfig { epochs: 2, ..Default::default() };
        let out = train_to_dir::<f64>(&cfg, &corpus, dir.path()).unwrap();
        let (p, meta) = ModelParams::<f64>::load(&checkpoint_path(dir.path(), 1)).unwrap();
        assert_eq!(meta.epoch, Some(1));
        assert_eq!(meta.config_hash, Some(cfg.hash()));
        assert_eq!(p, out.params);
        assert!(dir.path().join("params.json").exists());
    }

    #[test]
    fn empty_selection_answers_from_fixed_candidates() {
        let corpus = fixture();
        let mut params = ModelParams::<f64>::zeros(DEFAULT_FEATURE_DIM, DEFAULT_HIDDEN_DIM);
        params.doc_head.bias = -5.0;
        let p = predict(&params, &corpus.questions[0], &corpus).unwrap();
        assert!(p.selection.selected.is_empty());
        assert!(p.context.is_empty());
        assert!(matches!(p.answer, Answer::Boolean(_) | Answer::None));
    }
}
