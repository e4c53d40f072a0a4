#![allow(dead_code)]

use std::collections::BTreeSet;

use margqa::scorer::DEFAULT_FEATURE_DIM;
use margqa::{Answer, Corpus, Document, Params, Question};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const WORDS: [&str; 14] = [
    "river", "mill", "tower", "north", "lake", "stone", "market", "bridge", "guild", "harbor", "valley", "orchard",
    "canal", "forge",
];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn sentence<R: Rng>(rng: &mut R) -> Vec<String> {
    let n = rng.gen_range(3..=7);
    (0..n)
        .map(|_| {
            if rng.gen_bool(0.15) {
                rng.gen_range(2..60).to_string()
            } else {
                WORDS.choose(rng).unwrap().to_string()
            }
        })
        .collect()
}

/// A corpus of one question over at most `max_docs` documents of at most
/// `max_snippets` real snippets each.
pub fn random_corpus<R: Rng>(rng: &mut R, max_docs: usize, max_snippets: usize) -> Corpus {
    let mut corpus = Corpus::default();
    let n_docs = rng.gen_range(1..=max_docs);
    for d in 0..n_docs as u32 {
        let n_snip = rng.gen_range(1..=max_snippets);
        let snippets = (0..n_snip).map(|_| sentence(rng)).collect();
        let title = vec![WORDS.choose(rng).unwrap().to_string()];
        corpus.documents.insert(d, Document::new(d, title, snippets));
    }
    let gold_doc = rng.gen_range(0..n_docs as u32);
    let doc = &corpus.documents[&gold_doc];
    let gold_snip = rng.gen_range(0..doc.real_snippets().len()) as u32;
    let tokens = &doc.snippets[gold_snip as usize].tokens;
    let gold_answer = match rng.gen_range(0..4) {
        0 => Answer::None,
        1 => Answer::Boolean(rng.gen()),
        _ => {
            let start = rng.gen_range(0..tokens.len());
            let len = rng.gen_range(1..=2).min(tokens.len() - start);
            Answer::Span(tokens[start..start + len].to_vec())
        }
    };
    let (gold_doc_ids, gold_evidence) = if gold_answer == Answer::None {
        (BTreeSet::from([gold_doc]), BTreeSet::new())
    } else {
        (BTreeSet::from([gold_doc]), BTreeSet::from([(gold_doc, gold_snip)]))
    };
    let mut question_tokens = sentence(rng);
    question_tokens.insert(0, "what".into());
    corpus.questions.push(Question {
        id: "q0".into(),
        tokens: question_tokens,
        candidate_doc_ids: (0..n_docs as u32).collect(),
        gold_answer,
        gold_doc_ids,
        gold_evidence,
        hidden_alternatives: BTreeSet::new(),
    });
    corpus.validate().unwrap();
    corpus
}

/// Parameters uniform in `[-scale, scale]`, biases included.
pub fn random_params<R: Rng>(rng: &mut R, hidden: usize, scale: f64) -> Params {
    let base = Params::zeros(DEFAULT_FEATURE_DIM, hidden);
    let values: Vec<f64> = (0..base.len()).map(|_| rng.gen_range(-scale..=scale)).collect();
    base.with_values(&values).unwrap()
}

/// Every context over `docs`: one snippet, NULL included, per document.
pub fn all_contexts(corpus: &Corpus, docs: &BTreeSet<margqa::DocId>) -> Vec<margqa::ContextSet> {
    let mut out = vec![Vec::new()];
    for &d in docs {
        let doc = corpus.document(d).unwrap();
        out = out
            .into_iter()
            .flat_map(|prefix: Vec<(u32, u32)>| {
                doc.snippets.iter().map(move |s| {
                    let mut p = prefix.clone();
                    p.push((d, s.id));
                    p
                })
            })
            .collect();
    }
    out.into_iter()
        .map(|p| margqa::ContextSet::from_pairs(p).unwrap())
        .collect()
}

/// Every subset of the candidate documents of the first question.
pub fn all_doc_sets(corpus: &Corpus) -> Vec<BTreeSet<margqa::DocId>> {
    let ids = &corpus.questions[0].candidate_doc_ids;
    (0..1u32 << ids.len())
        .map(|mask| {
            ids.iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) != 0)
                .map(|(_, &d)| d)
                .collect()
        })
        .collect()
}
