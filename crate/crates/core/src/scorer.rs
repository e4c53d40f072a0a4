//! Featurized relevance scorers with hand-written gradients.
//!
//! Every head reads the same hidden layer `tanh(Wᵀx)`, so the embedding `W`
//! is shared (tied) between document selection, evidence retrieval and the
//! reader. Heads stay separate.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{is_year, parse_number, Document, Snippet};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const DEFAULT_FEATURE_DIM: usize = 16;
pub const DEFAULT_HIDDEN_DIM: usize = 16;
/// Reader features occupy the first 16 slots, so models need at least that many.
pub const MIN_FEATURE_DIM: usize = 16;
pub const INIT_SCALE: f64 = 0.1;

/// Slots of the retrieval feature vector.
pub mod slot {
    pub const UNIGRAM_OVERLAP: usize = 0;
    pub const QUESTION_COVERAGE: usize = 1;
    pub const TEXT_COVERAGE: usize = 2;
    pub const BIGRAM_OVERLAP: usize = 3;
    pub const IDF_OVERLAP: usize = 4;
    pub const LENGTH: usize = 5;
    pub const POSITION: usize = 6;
    pub const HAS_NUMBER: usize = 7;
    pub const HAS_YEAR: usize = 8;
    pub const TITLE_COVERAGE: usize = 9;
    pub const TITLE_IDF: usize = 10;
    pub const IS_NULL: usize = 11;
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector<T>(Vec<T>);

impl<T: Scalar> FeatureVector<T> {
    pub fn zeros(dim: usize) -> Self {
        FeatureVector(vec![T::zero(); dim])
    }

    pub fn from_f64(values: &[f64]) -> Self {
        FeatureVector(values.iter().map(|&v| T::of(v)).collect())
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn set(&mut self, i: usize, v: f64) {
        self.0[i] = T::of(v);
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

impl<T> std::ops::Index<usize> for FeatureVector<T> {
    type Output = T;
    fn index(&self, i: usize) -> &T {
        &self.0[i]
    }
}

/// What a reader candidate is; each kind has its own output head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CandidateKind {
    Span,
    Number,
    Yes,
    No,
    Unanswerable,
}

impl CandidateKind {
    pub const ALL: [CandidateKind; 5] = [
        CandidateKind::Span,
        CandidateKind::Number,
        CandidateKind::Yes,
        CandidateKind::No,
        CandidateKind::Unanswerable,
    ];

    fn index(self) -> usize {
        self as usize
    }

    fn name(self) -> &'static str {
        match self {
            CandidateKind::Span => "reader_span",
            CandidateKind::Number => "reader_number",
            CandidateKind::Yes => "reader_yes",
            CandidateKind::No => "reader_no",
            CandidateKind::Unanswerable => "reader_unanswerable",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Head {
    Document,
    Evidence,
    Reader(CandidateKind),
}

/// Parameter groups, used to mask updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamGroup {
    Embedding,
    DocHead,
    EvidenceHead,
    ReaderHead,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GroupMask {
    pub embedding: bool,
    pub doc_head: bool,
    pub evidence_head: bool,
    pub reader_head: bool,
}

impl GroupMask {
    pub const ALL: GroupMask = GroupMask {
        embedding: true,
        doc_head: true,
        evidence_head: true,
        reader_head: true,
    };

    pub fn allows(self, g: ParamGroup) -> bool {
        match g {
            ParamGroup::Embedding => self.embedding,
            ParamGroup::DocHead => self.doc_head,
            ParamGroup::EvidenceHead => self.evidence_head,
            ParamGroup::ReaderHead => self.reader_head,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearHead<T> {
    pub weights: Vec<T>,
    pub bias: T,
}

impl<T: Scalar> LinearHead<T> {
    fn zeros(hidden: usize) -> Self {
        LinearHead {
            weights: vec![T::zero(); hidden],
            bias: T::zero(),
        }
    }
}

/// Shared embedding plus per-head weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    feature_dim: usize,
    hidden_dim: usize,
    /// Row-major `feature_dim × hidden_dim`.
    pub embedding: Vec<T>,
    pub doc_head: LinearHead<T>,
    pub evidence_head: LinearHead<T>,
    pub reader_heads: Vec<LinearHead<T>>,
}

impl<T: Scalar> ModelParams<T> {
    pub fn zeros(feature_dim: usize, hidden_dim: usize) -> Self {
        ModelParams {
            feature_dim,
            hidden_dim,
            embedding: vec![T::zero(); feature_dim * hidden_dim],
            doc_head: LinearHead::zeros(hidden_dim),
            evidence_head: LinearHead::zeros(hidden_dim),
            reader_heads: CandidateKind::ALL
                .iter()
                .map(|_| LinearHead::zeros(hidden_dim))
                .collect(),
        }
    }

    /// Weights uniform in `[-0.1, 0.1]`, biases zero.
    pub fn init<R: Rng>(feature_dim: usize, hidden_dim: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(feature_dim, hidden_dim);
        p.visit_mut(|_, is_bias, v| {
            if !is_bias {
                *v = T::of(rng.gen_range(-INIT_SCALE..=INIT_SCALE));
            }
        });
        p
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.feature_dim, self.hidden_dim)
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    pub fn head(&self, h: Head) -> &LinearHead<T> {
        match h {
            Head::Document => &self.doc_head,
            Head::Evidence => &self.evidence_head,
            Head::Reader(k) => &self.reader_heads[k.index()],
        }
    }

    pub fn head_mut(&mut self, h: Head) -> &mut LinearHead<T> {
        match h {
            Head::Document => &mut self.doc_head,
            Head::Evidence => &mut self.evidence_head,
            Head::Reader(k) => &mut self.reader_heads[k.index()],
        }
    }

    /// Visits every parameter in a fixed order: embedding, document head,
    /// evidence head, reader heads. Within a head, weights precede the bias.
    pub fn visit<F: FnMut(ParamGroup, bool, T)>(&self, mut f: F) {
        for &v in &self.embedding {
            f(ParamGroup::Embedding, false, v);
        }
        let heads = [(&self.doc_head, ParamGroup::DocHead), (&self.evidence_head, ParamGroup::EvidenceHead)];
        for (head, g) in heads {
            head.weights.iter().for_each(|&w| f(g, false, w));
            f(g, true, head.bias);
        }
        for head in &self.reader_heads {
            head.weights.iter().for_each(|&w| f(ParamGroup::ReaderHead, false, w));
            f(ParamGroup::ReaderHead, true, head.bias);
        }
    }

    pub fn visit_mut<F: FnMut(ParamGroup, bool, &mut T)>(&mut self, mut f: F) {
        for v in &mut self.embedding {
            f(ParamGroup::Embedding, false, v);
        }
        let heads = [
            (&mut self.doc_head, ParamGroup::DocHead),
            (&mut self.evidence_head, ParamGroup::EvidenceHead),
        ];
        for (head, g) in heads {
            head.weights.iter_mut().for_each(|w| f(g, false, w));
            f(g, true, &mut head.bias);
        }
        for head in &mut self.reader_heads {
            head.weights
                .iter_mut()
                .for_each(|w| f(ParamGroup::ReaderHead, false, w));
            f(ParamGroup::ReaderHead, true, &mut head.bias);
        }
    }

    pub fn len(&self) -> usize {
        self.feature_dim * self.hidden_dim + (2 + CandidateKind::ALL.len()) * (self.hidden_dim + 1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn flatten(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.len());
        self.visit(|_, _, v| out.push(v));
        out
    }

    /// Group of each flattened parameter.
    pub fn groups(&self) -> Vec<ParamGroup> {
        let mut out = Vec::with_capacity(self.len());
        self.visit(|g, _, _| out.push(g));
        out
    }

    pub fn with_values(&self, values: &[T]) -> Result<Self> {
        if values.len() != self.len() {
            return Err(Error::Shape(format!(
                "expected {} values, got {}",
                self.len(),
                values.len()
            )));
        }
        let mut p = self.clone();
        let mut it = values.iter();
        p.visit_mut(|_, _, v| *v = *it.next().expect("length checked"));
        Ok(p)
    }

    /// `self += scale · other` on the groups allowed by `mask`.
    pub fn add_scaled(&mut self, other: &Self, scale: T, mask: GroupMask) {
        let deltas = other.flatten();
        let mut it = deltas.into_iter();
        self.visit_mut(|g, _, v| {
            let d = it.next().expect("same shape");
            if mask.allows(g) {
                *v = *v + scale * d;
            }
        });
    }

    pub fn is_finite(&self) -> bool {
        let mut ok = true;
        self.visit(|_, _, v| ok &= v.is_finite());
        ok
    }

    pub fn check_shapes(&self) -> Result<()> {
        if self.embedding.len() != self.feature_dim * self.hidden_dim {
            return Err(Error::Shape(format!(
                "embedding has {} values for {}x{}",
                self.embedding.len(),
                self.feature_dim,
                self.hidden_dim
            )));
        }
        if self.feature_dim < MIN_FEATURE_DIM {
            return Err(Error::Shape(format!(
                "feature dimension {} is below {MIN_FEATURE_DIM}",
                self.feature_dim
            )));
        }
        if self.reader_heads.len() != CandidateKind::ALL.len() {
            return Err(Error::Shape("wrong number of reader heads".into()));
        }
        let heads = [&self.doc_head, &self.evidence_head]
            .into_iter()
            .chain(self.reader_heads.iter());
        for head in heads {
            if head.weights.len() != self.hidden_dim {
                return Err(Error::Shape(format!(
                    "head has {} weights, hidden dimension is {}",
                    head.weights.len(),
                    self.hidden_dim
                )));
            }
        }
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        let mut out = ModelParams::<U>::zeros(self.feature_dim, self.hidden_dim);
        let values = self.flatten();
        let mut it = values.into_iter();
        out.visit_mut(|_, _, v| *v = U::of(it.next().expect("same shape").as_f64()));
        out
    }
}

/// Activations of one forward pass. Consumed by [`backward_score`].
#[derive(Debug)]
pub struct Tape<T> {
    head: Head,
    input: Vec<T>,
    hidden: Vec<T>,
}

impl<T> Tape<T> {
    pub fn head(&self) -> Head {
        self.head
    }
}

fn hidden_layer<T: Scalar>(params: &ModelParams<T>, x: &[T]) -> Vec<T> {
    let h = params.hidden_dim;
    let mut pre = vec![T::zero(); h];
    for (i, &xi) in x.iter().enumerate() {
        if xi == T::zero() {
            continue;
        }
        let row = &params.embedding[i * h..(i + 1) * h];
        for (p, &w) in pre.iter_mut().zip(row) {
            *p = *p + xi * w;
        }
    }
    pre.into_iter().map(T::tanh).collect()
}

/// `logit = w_headᵀ · tanh(Wᵀx) + b_head`.
pub fn forward_score<T: Scalar>(
    params: &ModelParams<T>,
    head: Head,
    x: &FeatureVector<T>,
) -> Result<(T, Tape<T>)> {
    if x.dim() != params.feature_dim {
        return Err(Error::Shape(format!(
            "feature vector has dimension {}, model expects {}",
            x.dim(),
            params.feature_dim
        )));
    }
    let hidden = hidden_layer(params, x.as_slice());
    let lin = params.head(head);
    let logit = lin
        .weights
        .iter()
        .zip(&hidden)
        .fold(lin.bias, |acc, (&w, &a)| acc + w * a);
    if !logit.is_finite() {
        return Err(Error::NonFinite("score logit"));
    }
    Ok((
        logit,
        Tape {
            head,
            input: x.as_slice().to_vec(),
            hidden,
        },
    ))
}

/// Adds `upstream · ∂logit/∂θ` into `grads`.
pub fn backward_score<T: Scalar>(
    tape: Tape<T>,
    upstream: T,
    params: &ModelParams<T>,
    grads: &mut ModelParams<T>,
) {
    if upstream == T::zero() {
        return;
    }
    let hd = params.hidden_dim;
    let weights = &params.head(tape.head).weights;
    let gh = grads.head_mut(tape.head);
    gh.bias = gh.bias + upstream;
    let mut dpre = Vec::with_capacity(hd);
    for ((g, &w), &a) in gh.weights.iter_mut().zip(weights).zip(&tape.hidden) {
        *g = *g + upstream * a;
        dpre.push(upstream * w * (T::one() - a * a));
    }
    for (i, &xi) in tape.input.iter().enumerate() {
        if xi == T::zero() {
            continue;
        }
        let row = &mut grads.embedding[i * hd..(i + 1) * hd];
        for (g, &d) in row.iter_mut().zip(&dpre) {
            *g = *g + xi * d;
        }
    }
}

/// Question-specific featurizer; IDF statistics come from the candidate documents.
#[derive(Debug, Clone)]
pub struct Featurizer {
    feature_dim: usize,
    question: BTreeSet<String>,
    bigrams: BTreeSet<(String, String)>,
    idf: BTreeMap<String, f64>,
    question_idf_mass: f64,
}

impl Featurizer {
    pub fn new(question: &[String], candidates: &[&Document], feature_dim: usize) -> Self {
        let n = candidates.len() as f64;
        let mut df: BTreeMap<&str, usize> = BTreeMap::new();
        for doc in candidates {
            let mut seen: BTreeSet<&str> = doc.title.iter().map(String::as_str).collect();
            for s in &doc.snippets {
                seen.extend(s.tokens.iter().map(String::as_str));
            }
            for t in seen {
                *df.entry(t).or_default() += 1;
            }
        }
        let qset: BTreeSet<String> = question.iter().cloned().collect();
        let idf: BTreeMap<String, f64> = qset
            .iter()
            .map(|t| {
                let d = df.get(t.as_str()).copied().unwrap_or(0) as f64;
                (t.clone(), ((1.0 + n) / (1.0 + d)).ln() + 1.0)
            })
            .collect();
        let question_idf_mass = idf.values().sum();
        Featurizer {
            feature_dim,
            bigrams: question
                .windows(2)
                .map(|w| (w[0].clone(), w[1].clone()))
                .collect(),
            question: qset,
            idf,
            question_idf_mass,
        }
    }

    fn idf_share<'a>(&self, shared: impl Iterator<Item = &'a String>) -> f64 {
        if self.question_idf_mass == 0.0 {
            return 0.0;
        }
        shared.map(|t| self.idf[t]).sum::<f64>() / self.question_idf_mass
    }

    /// Features of `text` (with document `title`) at `position` of `count`.
    pub fn featurize<T: Scalar>(
        &self,
        text: &[String],
        title: &[String],
        position: usize,
        count: usize,
    ) -> FeatureVector<T> {
        let mut x = FeatureVector::zeros(self.feature_dim);
        let text_set: BTreeSet<&String> = text.iter().collect();
        let shared: Vec<&String> = self
            .question
            .iter()
            .filter(|t| text_set.contains(t))
            .collect();
        let overlap = shared.len() as f64;
        let bigram_overlap = text
            .windows(2)
            .map(|w| (w[0].clone(), w[1].clone()))
            .collect::<BTreeSet<_>>()
            .intersection(&self.bigrams)
            .count() as f64;

        x.set(slot::UNIGRAM_OVERLAP, overlap.ln_1p());
        if !self.question.is_empty() {
            x.set(slot::QUESTION_COVERAGE, overlap / self.question.len() as f64);
        }
        if !text_set.is_empty() {
            x.set(slot::TEXT_COVERAGE, overlap / text_set.len() as f64);
        }
        x.set(slot::BIGRAM_OVERLAP, bigram_overlap.ln_1p());
        x.set(slot::IDF_OVERLAP, self.idf_share(shared.into_iter()));
        x.set(slot::LENGTH, (text.len() as f64).ln_1p() / 4.0);
        if count > 1 {
            x.set(slot::POSITION, position as f64 / (count - 1) as f64);
        }
        if text.iter().any(|t| parse_number(t).is_some()) {
            x.set(slot::HAS_NUMBER, 1.0);
        }
        if text.iter().any(|t| is_year(t)) {
            x.set(slot::HAS_YEAR, 1.0);
        }
        let title_set: BTreeSet<&String> = title.iter().collect();
        let title_shared: Vec<&String> = self
            .question
            .iter()
            .filter(|t| title_set.contains(t))
            .collect();
        if !self.question.is_empty() {
            x.set(
                slot::TITLE_COVERAGE,
                title_shared.len() as f64 / self.question.len() as f64,
            );
        }
        x.set(slot::TITLE_IDF, self.idf_share(title_shared.into_iter()));
        x
    }

    /// Document features over its title and full text.
    pub fn document<T: Scalar>(&self, doc: &Document, position: usize, count: usize) -> FeatureVector<T> {
        let text: Vec<String> = doc
            .snippets
            .iter()
            .flat_map(|s| s.tokens.iter().cloned())
            .collect();
        self.featurize(&text, &doc.title, position, count)
    }

    /// Snippet features; NULL gets the zero vector with only the is-null slot set.
    pub fn snippet<T: Scalar>(&self, doc: &Document, snippet: &Snippet) -> FeatureVector<T> {
        if snippet.is_null {
            let mut x = FeatureVector::zeros(self.feature_dim);
            x.set(slot::IS_NULL, 1.0);
            return x;
        }
        self.featurize(
            &snippet.tokens,
            &doc.title,
            snippet.id as usize,
            doc.real_snippets().len(),
        )
    }
}

pub const PARAMS_FORMAT: &str = "margqa-params";
pub const PARAMS_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HeadRecord {
    name: String,
    weights: Vec<f64>,
    bias: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MatrixRecord {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

/// Extra information stored next to the weights in a checkpoint.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub epoch: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub config_hash: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamsRecord {
    format: String,
    version: u32,
    embedding: MatrixRecord,
    heads: Vec<HeadRecord>,
    #[serde(default)]
    meta: CheckpointMeta,
}

const HEAD_NAMES: [&str; 2] = ["document", "evidence"];

impl<T: Scalar> ModelParams<T> {
    pub fn to_json(&self, meta: &CheckpointMeta) -> Result<String> {
        let head = |name: &str, h: &LinearHead<T>| HeadRecord {
            name: name.into(),
            weights: h.weights.iter().map(|w| w.as_f64()).collect(),
            bias: h.bias.as_f64(),
        };
        let mut heads = vec![
            head(HEAD_NAMES[0], &self.doc_head),
            head(HEAD_NAMES[1], &self.evidence_head),
        ];
        for k in CandidateKind::ALL {
            heads.push(head(k.name(), &self.reader_heads[k.index()]));
        }
        let rec = ParamsRecord {
            format: PARAMS_FORMAT.into(),
            version: PARAMS_VERSION,
            embedding: MatrixRecord {
                rows: self.feature_dim,
                cols: self.hidden_dim,
                values: self.embedding.iter().map(|v| v.as_f64()).collect(),
            },
            heads,
            meta: meta.clone(),
        };
        Ok(serde_json::to_string_pretty(&rec)?)
    }

    pub fn from_json(text: &str) -> Result<(Self, CheckpointMeta)> {
        let rec: ParamsRecord = serde_json::from_str(text)?;
        if rec.format != PARAMS_FORMAT || rec.version != PARAMS_VERSION {
            return Err(Error::Shape(format!(
                "unsupported parameter file {} v{}",
                rec.format, rec.version
            )));
        }
        let MatrixRecord { rows, cols, values } = rec.embedding;
        if values.len() != rows * cols {
            return Err(Error::Shape(format!(
                "embedding declares {rows}x{cols} but has {} values",
                values.len()
            )));
        }
        let mut p = Self::zeros(rows, cols);
        p.embedding = values.into_iter().map(T::of).collect();
        let mut names: Vec<&str> = HEAD_NAMES.to_vec();
        names.extend(CandidateKind::ALL.iter().map(|k| k.name()));
        if rec.heads.len() != names.len() {
            return Err(Error::Shape(format!("expected {} heads", names.len())));
        }
        for (r, &name) in rec.heads.into_iter().zip(&names) {
            if r.name != name {
                return Err(Error::Shape(format!("expected head {name}, found {}", r.name)));
            }
            if r.weights.len() != cols {
                return Err(Error::Shape(format!(
                    "head {name} has {} weights, hidden dimension is {cols}",
                    r.weights.len()
                )));
            }
            let head = LinearHead {
                weights: r.weights.into_iter().map(T::of).collect(),
                bias: T::of(r.bias),
            };
            let slot = match name {
                "document" => Head::Document,
                "evidence" => Head::Evidence,
                _ => Head::Reader(
                    *CandidateKind::ALL
                        .iter()
                        .find(|k| k.name() == name)
                        .expect("name list built from kinds"),
                ),
            };
            *p.head_mut(slot) = head;
        }
        p.check_shapes()?;
        if !p.is_finite() {
            return Err(Error::NonFinite("parameter file"));
        }
        Ok((p, rec.meta))
    }

    pub fn save(&self, path: &Path, meta: &CheckpointMeta) -> Result<()> {
        fs::write(path, self.to_json(meta)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<(Self, CheckpointMeta)> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tokenize;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_params(seed: u64) -> ModelParams<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ModelParams::init(16, 16, &mut rng);
        p.visit_mut(|_, _, v| *v = *v * 5.0 + rng.gen_range(-0.3..0.3));
        p
    }

    fn random_x(seed: u64) -> FeatureVector<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v: Vec<f64> = (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect();
        FeatureVector::from_f64(&v)
    }

    #[test]
    fn zero_params_score_is_bias() {
        let mut p = ModelParams::<f64>::zeros(16, 16);
        p.doc_head.bias = 0.7;
        let (logit, _) = forward_score(&p, Head::Document, &random_x(1)).unwrap();
        assert_eq!(logit, 0.7);
    }

    #[test]
    fn zero_input_score_is_bias() {
        let mut p = random_params(3);
        p.evidence_head.bias = -1.25;
        let (logit, _) = forward_score(&p, Head::Evidence, &FeatureVector::zeros(16)).unwrap();
        assert_eq!(logit, -1.25);
    }

    #[test]
    fn forward_matches_direct_formula() {
        let p = random_params(5);
        for seed in 0..10 {
            let x = random_x(100 + seed);
            let (logit, _) = forward_score(&p, Head::Reader(CandidateKind::No), &x).unwrap();
            let head = p.head(Head::Reader(CandidateKind::No));
            let mut expected = head.bias;
            for j in 0..16 {
                let mut pre = 0.0;
                for i in 0..16 {
                    pre += p.embedding[i * 16 + j] * x[i];
                }
                expected += head.weights[j] * pre.tanh();
            }
            assert!((logit - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn forward_rejects_wrong_dimension_and_non_finite() {
        let p = random_params(1);
        assert!(matches!(
            forward_score(&p, Head::Document, &FeatureVector::zeros(3)),
            Err(Error::Shape(_))
        ));
        let mut q = p.clone();
        q.doc_head.bias = f64::NAN;
        assert!(matches!(
            forward_score(&q, Head::Document, &random_x(2)),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn backward_zero_upstream_contributes_nothing() {
        let p = random_params(7);
        let (_, tape) = forward_score(&p, Head::Document, &random_x(8)).unwrap();
        let mut g = p.zeros_like();
        backward_score(tape, 0.0, &p, &mut g);
        assert!(g.flatten().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn bias_gradient_is_one() {
        let p = random_params(9);
        let (_, tape) = forward_score(&p, Head::Evidence, &random_x(10)).unwrap();
        let mut g = p.zeros_like();
        backward_score(tape, 1.0, &p, &mut g);
        assert_eq!(g.evidence_head.bias, 1.0);
        assert_eq!(g.doc_head.bias, 0.0);
    }

    #[test]
    fn backward_matches_central_differences() {
        let h = 1e-5;
        for (seed, head) in [
            (11u64, Head::Document),
            (12, Head::Evidence),
            (13, Head::Reader(CandidateKind::Span)),
        ] {
            let p = random_params(seed);
            let x = random_x(seed + 50);
            let (_, tape) = forward_score(&p, head, &x).unwrap();
            let mut g = p.zeros_like();
            backward_score(tape, 1.7, &p, &mut g);
            let analytic = g.flatten();
            let base = p.flatten();
            for i in 0..base.len() {
                let mut plus = base.clone();
                plus[i] += h;
                let mut minus = base.clone();
                minus[i] -= h;
                let f = |v: &[f64]| {
                    1.7 * forward_score(&p.with_values(v).unwrap(), head, &x).unwrap().0
                };
                let numeric = (f(&plus) - f(&minus)) / (2.0 * h);
                let err = (analytic[i] - numeric).abs();
                let scale = analytic[i].abs().max(numeric.abs());
                assert!(
                    err < 1e-7 || err / scale < 1e-4,
                    "param {i}: analytic {} numeric {numeric}",
                    analytic[i]
                );
            }
        }
    }

    #[test]
    fn f32_forward_agrees_with_f64() {
        let p = random_params(21);
        let x = random_x(22);
        let (l64, _) = forward_score(&p, Head::Document, &x).unwrap();
        let p32: ModelParams<f32> = p.cast();
        let x32 = FeatureVector::<f32>::from_f64(x.as_slice());
        let (l32, _) = forward_score(&p32, Head::Document, &x32).unwrap();
        assert!((l32 as f64 - l64).abs() < 1e-4);
    }

    fn doc(id: u32, title: &str, snippets: &[&str]) -> Document {
        Document::new(id, tokenize(title), snippets.iter().map(|s| tokenize(s)).collect())
    }

    #[test]
    fn identical_text_has_full_coverage() {
        let q = tokenize("who shot alexander hamilton");
        let d = doc(0, "", &["who shot alexander hamilton"]);
        let f = Featurizer::new(&q, &[&d], 16);
        let x: FeatureVector<f64> = f.featurize(&q, &[], 0, 1);
        assert_eq!(x[slot::QUESTION_COVERAGE], 1.0);
        assert_eq!(x[slot::TEXT_COVERAGE], 1.0);
        assert!((x[slot::IDF_OVERLAP] - 1.0).abs() < 1e-12);
        assert_eq!(x[slot::BIGRAM_OVERLAP], 3f64.ln_1p());
    }

    #[test]
    fn disjoint_text_has_no_overlap() {
        let q = tokenize("who shot hamilton");
        let d = doc(0, "", &["the river froze in 1804"]);
        let f = Featurizer::new(&q, &[&d], 16);
        let x: FeatureVector<f64> = f.snippet(&d, &d.snippets[0]);
        for s in [
            slot::UNIGRAM_OVERLAP,
            slot::QUESTION_COVERAGE,
            slot::TEXT_COVERAGE,
            slot::BIGRAM_OVERLAP,
            slot::IDF_OVERLAP,
            slot::TITLE_COVERAGE,
            slot::TITLE_IDF,
        ] {
            assert_eq!(x[s], 0.0, "slot {s}");
        }
        assert_eq!(x[slot::HAS_NUMBER], 1.0);
        assert_eq!(x[slot::HAS_YEAR], 1.0);
    }

    #[test]
    fn null_snippet_is_indicator_only() {
        let q = tokenize("who shot hamilton");
        let d = doc(0, "hamilton", &["burr shot hamilton"]);
        let f = Featurizer::new(&q, &[&d], 16);
        let x: FeatureVector<f64> = f.snippet(&d, &d.snippets[1]);
        for i in 0..16 {
            assert_eq!(x[i], if i == slot::IS_NULL { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn featurize_is_pure() {
        let q = tokenize("how many years after 1757 did hamilton die");
        let d = doc(0, "hamilton", &["hamilton died in 1804", "he was born in 1757"]);
        let f = Featurizer::new(&q, &[&d], 16);
        let a: FeatureVector<f64> = f.snippet(&d, &d.snippets[0]);
        let b: FeatureVector<f64> = f.snippet(&d, &d.snippets[0]);
        let bits = |x: &FeatureVector<f64>| x.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        assert!(a.is_finite());
    }

    #[test]
    fn parameter_file_round_trips_exactly() {
        let p = random_params(31);
        let meta = CheckpointMeta {
            epoch: Some(4),
            config_hash: Some("abc".into()),
        };
        let (back, m) = ModelParams::<f64>::from_json(&p.to_json(&meta).unwrap()).unwrap();
        assert_eq!(back, p);
        assert_eq!(m, meta);
    }

    #[test]
    fn parameter_file_rejects_bad_shapes() {
        let p = random_params(32);
        let text = p.to_json(&CheckpointMeta::default()).unwrap();
        let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
        v["embedding"]["rows"] = 15.into();
        assert!(matches!(
            ModelParams::<f64>::from_json(&v.to_string()),
            Err(Error::Shape(_))
        ));
        let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
        v["heads"][2]["weights"].as_array_mut().unwrap().pop();
        assert!(ModelParams::<f64>::from_json(&v.to_string()).is_err());
    }
}
