//! Joint training of set-valued evidence retrieval and answer prediction for
//! multi-document question answering.
//!
//! A question comes with candidate documents split into snippets. The model
//! selects a set of documents, one snippet (or NULL) per selected document,
//! and an answer read off the concatenated snippets. Training maximizes the
//! marginal likelihood of the answer over the top-m retrieved contexts that
//! can support it, so unannotated evidence is not punished.
//!
//! Numeric code is generic over [`Scalar`]; the aliases below fix `f64`,
//! which is what training and evaluation use.

pub mod config;
pub mod corpus;
pub mod error;
pub mod harness;
pub mod io;
pub mod objective;
pub mod reader;
pub mod retrieval;
pub mod scalar;
pub mod scorer;
pub mod training;

pub use corpus::{Answer, AnswerKind, ContextSet, Corpus, DocId, Document, Question, Selection, Snippet, SnippetId};
pub use error::{Error, Result};
pub use harness::ablation::{run_ablation, run_generated_ablation, AblationReport, Mode};
pub use harness::generate::{generate_corpus, GenConfig};
pub use harness::metrics::{evaluate, evaluate_predictions, MetricsReport, PredictionRecord};
pub use objective::{is_valid_context, partition_contexts, LossReport};
pub use scalar::Scalar;
pub use training::{predict, train, TrainConfig};

pub type Params = scorer::ModelParams<f64>;
pub type Params32 = scorer::ModelParams<f32>;
pub type View<'a> = retrieval::QuestionView<'a, f64>;
pub type ScoredContext = retrieval::ScoredContext<f64>;
pub type DocSelection = retrieval::DocSelection<f64>;
pub type EvidenceDistribution = retrieval::EvidenceDistribution<f64>;
pub type AnswerDistribution = reader::AnswerDistribution<f64>;
pub type Prediction = training::Prediction<f64>;
