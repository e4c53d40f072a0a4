//! Synthetic multi-document QA corpora with planted false-negative evidence.
//!
//! Every question is about a made-up entity such as "the kelmora guild".
//! Its annotated evidence uses a canonical sentence; hidden alternatives
//! state the same fact in other words, either in the same document or in a
//! separate candidate document. Unanswerable questions ask for a fact that
//! no candidate document states about that entity.

use std::collections::{BTreeSet, HashSet};

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{concatenate_context, tokenize, Answer, ContextSet, Corpus, DocId, Document, Question, Selection};
use crate::error::{Error, Result};
use crate::objective::is_valid_context;
use crate::reader::{answer_equal, candidate_answers};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnswerMix {
    pub none: f64,
    pub yes_no: f64,
    pub span: f64,
    pub number: f64,
}

impl Default for AnswerMix {
    fn default() -> Self {
        AnswerMix {
            none: 0.267,
            yes_no: 0.098,
            span: 0.456,
            number: 0.179,
        }
    }
}

impl AnswerMix {
    fn weights(&self) -> [f64; 4] {
        [self.none, self.yes_no, self.span, self.number]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    pub n_questions: usize,
    pub answer_type_mix: AnswerMix,
    pub docs_per_question: usize,
    pub snippets_per_doc: usize,
    /// Fraction of answerable questions that receive hidden alternatives.
    pub alternative_rate: f64,
    pub alternatives_per_question: usize,
    /// Fraction of alternatives placed in a separate candidate document.
    pub cross_document_alternative_rate: f64,
    pub distractor_vocab_size: usize,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            n_questions: 500,
            answer_type_mix: AnswerMix::default(),
            docs_per_question: 4,
            snippets_per_doc: 6,
            alternative_rate: 0.5,
            alternatives_per_question: 1,
            cross_document_alternative_rate: 0.3,
            distractor_vocab_size: 200,
            seed: 0,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        let w = self.answer_type_mix.weights();
        if w.iter().any(|p| !(p.is_finite() && *p >= 0.0)) || (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return fail("answer_type_mix must be non-negative and sum to 1".into());
        }
        for (name, r) in [
            ("alternative_rate", self.alternative_rate),
            ("cross_document_alternative_rate", self.cross_document_alternative_rate),
        ] {
            if !(0.0..=1.0).contains(&r) {
                return fail(format!("{name} must lie in [0, 1]"));
            }
        }
        if self.n_questions == 0 {
            return fail("n_questions must be at least 1".into());
        }
        if self.docs_per_question < 2 {
            return fail("docs_per_question must be at least 2".into());
        }
        if self.alternatives_per_question + 1 > self.snippets_per_doc {
            return fail(format!(
                "alternatives_per_question {} leaves no room for gold evidence in {} snippets",
                self.alternatives_per_question, self.snippets_per_doc
            ));
        }
        if self.alternatives_per_question > PARAPHRASES {
            return fail(format!("at most {PARAPHRASES} alternatives per question are supported"));
        }
        if self.distractor_vocab_size < 8 {
            return fail("distractor_vocab_size must be at least 8".into());
        }
        Ok(())
    }
}

const SYLLABLES: &[&str] = &[
    "ka", "lo", "mer", "dun", "vi", "sa", "tor", "ren", "bel", "mi", "ga", "zu", "pha", "dri", "os", "ek", "lan",
    "qui", "ro", "sel", "tha", "ny", "bor", "fen",
];
const KINDS: &[&str] = &[
    "guild", "bridge", "abbey", "fortress", "academy", "canal", "market", "harbor", "library", "observatory",
];
const UNITS: &[&str] = &["members", "towers", "ships", "workers", "bells", "gates"];
const PARAPHRASES: usize = 3;
const WORDINGS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Rel {
    Founded,
    Designed,
    Led,
}

impl Rel {
    const ALL: [Rel; 3] = [Rel::Founded, Rel::Designed, Rel::Led];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Fact {
    Person(Rel),
    Year,
    Count(usize),
    Renamed,
    Location,
}

struct Entity {
    name: String,
    kind: &'static str,
    people: [String; 3],
    year: u32,
    renamed: u32,
    river: String,
    counts: Vec<u32>,
}

impl Entity {
    fn label(&self) -> String {
        format!("the {} {}", self.name, self.kind)
    }

    fn person(&self, rel: Rel) -> &str {
        &self.people[rel as usize]
    }

    fn facts(&self) -> Vec<Fact> {
        let mut out: Vec<Fact> = Rel::ALL.iter().map(|&r| Fact::Person(r)).collect();
        out.extend((0..UNITS.len()).map(Fact::Count));
        out.push(Fact::Renamed);
        out.push(Fact::Location);
        out
    }

    fn canonical(&self, fact: Fact) -> String {
        let e = self.label();
        match fact {
            Fact::Person(Rel::Founded) | Fact::Year => {
                format!("{e} was founded by {} in {}", self.person(Rel::Founded), self.year)
            }
            Fact::Person(Rel::Designed) => format!("{e} was designed by {}", self.person(Rel::Designed)),
            Fact::Person(Rel::Led) => format!("{e} was led by {} for many years", self.person(Rel::Led)),
            Fact::Count(u) => format!("{e} had {} {}", self.counts[u], UNITS[u]),
            Fact::Renamed => format!("{e} was renamed in {}", self.renamed),
            Fact::Location => format!("{e} stands beside the {} river", self.river),
        }
    }

    fn paraphrase(&self, fact: Fact, variant: usize) -> String {
        let e = self.label();
        let variant = variant % PARAPHRASES;
        match fact {
            Fact::Person(rel) => {
                let p = self.person(rel);
                match (rel, variant) {
                    (Rel::Founded, 0) => format!("{p} started and ran {e}"),
                    (Rel::Founded, 1) => format!("{e} owes its beginning to {p}"),
                    (Rel::Founded, _) => format!("it was {p} who first opened {e}"),
                    (Rel::Designed, 0) => format!("{p} drew up every plan of {e}"),
                    (Rel::Designed, 1) => format!("the plans for {e} came from {p}"),
                    (Rel::Designed, _) => format!("it was {p} who shaped {e}"),
                    (Rel::Led, 0) => format!("{p} headed {e} through hard times"),
                    (Rel::Led, 1) => format!("under {p} {e} grew quickly"),
                    (Rel::Led, _) => format!("the chief of {e} was {p}"),
                }
            }
            Fact::Year => match variant {
                0 => format!("{e} opened its doors in {}", self.year),
                1 => format!("in {} work began on {e}", self.year),
                _ => format!("{e} dates back to {}", self.year),
            },
            Fact::Count(u) => {
                let (n, unit) = (self.counts[u], UNITS[u]);
                match variant {
                    0 => format!("some {n} {unit} belonged to {e}"),
                    1 => format!("at its height {e} counted {n} {unit}"),
                    _ => format!("{n} {unit} were kept by {e}"),
                }
            }
            Fact::Renamed | Fact::Location => self.canonical(fact),
        }
    }

    /// Question text for `fact`; wording 0 follows the canonical sentence,
    /// the others follow a paraphrase.
    fn ask(&self, fact: Fact, wording: usize) -> String {
        let e = self.label();
        match (fact, wording % WORDINGS) {
            (Fact::Person(Rel::Founded), 0) => format!("who founded {e}"),
            (Fact::Person(Rel::Founded), 1) => format!("who started {e}"),
            (Fact::Person(Rel::Founded), _) => format!("who first opened {e}"),
            (Fact::Person(Rel::Designed), 0) => format!("who designed {e}"),
            (Fact::Person(Rel::Designed), 1) => format!("who drew up the plans of {e}"),
            (Fact::Person(Rel::Designed), _) => format!("who shaped {e}"),
            (Fact::Person(Rel::Led), 0) => format!("who led {e}"),
            (Fact::Person(Rel::Led), 1) => format!("who headed {e}"),
            (Fact::Person(Rel::Led), _) => format!("who was the chief of {e}"),
            (Fact::Year, 0) => format!("in what year was {e} founded"),
            (Fact::Year, 1) => format!("in what year did {e} open its doors"),
            (Fact::Year, _) => format!("in what year did work begin on {e}"),
            (Fact::Count(u), 0) => format!("how many {} did {e} have", UNITS[u]),
            (Fact::Count(u), 1) => format!("how many {} belonged to {e}", UNITS[u]),
            (Fact::Count(u), _) => format!("how many {} did {e} count at its height", UNITS[u]),
            (Fact::Renamed | Fact::Location, _) => unreachable!("never asked"),
        }
    }

    fn ask_boolean(&self, rel: Rel, person: &str, wording: usize) -> String {
        let e = self.label();
        match (rel, wording % WORDINGS) {
            (Rel::Founded, 0) => format!("was {e} founded by {person}"),
            (Rel::Founded, 1) => format!("did {person} start {e}"),
            (Rel::Founded, _) => format!("did {person} first open {e}"),
            (Rel::Designed, 0) => format!("was {e} designed by {person}"),
            (Rel::Designed, 1) => format!("did {person} draw up the plans of {e}"),
            (Rel::Designed, _) => format!("did {person} shape {e}"),
            (Rel::Led, 0) => format!("was {e} led by {person}"),
            (Rel::Led, 1) => format!("did {person} head {e}"),
            (Rel::Led, _) => format!("was {person} the chief of {e}"),
        }
    }

    /// Title and sentence of a separate document restating `fact`.
    fn cross(&self, fact: Fact) -> (String, String) {
        let e = self.label();
        match fact {
            Fact::Person(rel) => {
                let p = self.person(rel);
                let s = match rel {
                    Rel::Founded => format!("{p} is remembered for starting {e}"),
                    Rel::Designed => format!("{p} is remembered for the plans of {e}"),
                    Rel::Led => format!("{p} is remembered as the chief of {e}"),
                };
                (p.to_string(), s)
            }
            Fact::Year => (format!("{} records", self.name), format!("records date {e} to {}", self.year)),
            Fact::Count(u) => (
                format!("{} records", self.name),
                format!("records list {} {} for {e}", self.counts[u], UNITS[u]),
            ),
            Fact::Renamed | Fact::Location => (self.name.clone(), self.canonical(fact)),
        }
    }
}

/// The paraphrase whose wording a question wording borrows.
fn matching_paraphrase(fact: Fact, wording: usize) -> Option<usize> {
    match (fact, wording % WORDINGS) {
        (_, 0) => None,
        (_, 1) => Some(0),
        (Fact::Person(_), _) => Some(2),
        _ => Some(1),
    }
}

/// Facts whose sentences reveal the answer of a question about `fact`.
fn conflicts(asked: Fact, other: Fact) -> bool {
    matches!(
        (asked, other),
        (Fact::Year, Fact::Person(Rel::Founded)) | (Fact::Person(Rel::Founded), Fact::Year)
    ) || asked == other
}

#[derive(Debug, Clone, Copy)]
enum Plan {
    Span(Rel),
    Year,
    Count(usize),
    Difference(usize),
    Boolean(Rel, bool),
    Unanswerable(Fact),
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Tag {
    Gold(usize),
    Alt,
    Other,
}

struct Generator<'a> {
    cfg: &'a GenConfig,
    rng: ChaCha8Rng,
    used: HashSet<String>,
    filler: Vec<String>,
    next_doc: DocId,
    corpus: Corpus,
}

impl Generator<'_> {
    fn word(&mut self) -> String {
        loop {
            let n = self.rng.gen_range(2..=4);
            let w: String = (0..n).map(|_| *SYLLABLES.choose(&mut self.rng).expect("syllables")).collect();
            if self.used.insert(w.clone()) {
                return w;
            }
        }
    }

    fn person(&mut self) -> String {
        format!("{} {}", self.word(), self.word())
    }

    fn entity(&mut self, kind: &'static str) -> Entity {
        Entity {
            name: self.word(),
            kind,
            people: [self.person(), self.person(), self.person()],
            year: self.rng.gen_range(1200..1950),
            renamed: self.rng.gen_range(1200..1950),
            river: self.word(),
            counts: UNITS.iter().map(|_| self.rng.gen_range(2..400)).collect(),
        }
    }

    fn filler_sentence(&mut self) -> String {
        let mut pick = || self.filler.choose(&mut self.rng).expect("filler").clone();
        let (a, b, c, d) = (pick(), pick(), pick(), pick());
        match self.rng.gen_range(0..3) {
            0 => format!("the {a} {b} was {c} near the {d}"),
            1 => format!("many {a} came to the {b} {c}"),
            _ => format!("a {a} of {b} and {c} {d}"),
        }
    }

    /// Builds a document from tagged sentences in shuffled order, padding
    /// with `pad` sentences and then filler up to the configured size.
    fn document(
        &mut self,
        title: &str,
        mut sentences: Vec<(String, Tag)>,
        pad: Vec<String>,
    ) -> (Document, Vec<(Tag, Selection)>) {
        let n = self.cfg.snippets_per_doc;
        for s in pad {
            if sentences.len() >= n {
                break;
            }
            sentences.push((s, Tag::Other));
        }
        while sentences.len() < n {
            let s = self.filler_sentence();
            sentences.push((s, Tag::Other));
        }
        sentences.shuffle(&mut self.rng);
        // Annotators mark the first supporting sentence in reading order.
        if let Some(first_alt) = sentences.iter().position(|(_, t)| *t == Tag::Alt) {
            if let Some(gold) = sentences.iter().position(|(_, t)| matches!(t, Tag::Gold(_))) {
                if gold > first_alt {
                    sentences.swap(gold, first_alt);
                }
            }
        }
        let id = self.next_doc;
        self.next_doc += 1;
        let tags = sentences
            .iter()
            .enumerate()
            .filter(|(_, (_, t))| *t != Tag::Other)
            .map(|(i, (_, t))| (*t, (id, i as u32)))
            .collect();
        let doc = Document::new(id, tokenize(title), sentences.into_iter().map(|(s, _)| tokenize(&s)).collect());
        (doc, tags)
    }

    fn entity_pad(&mut self, e: &Entity, excluded: &[Fact]) -> Vec<String> {
        let mut facts: Vec<Fact> = e
            .facts()
            .into_iter()
            .filter(|f| !excluded.iter().any(|&x| conflicts(x, *f)))
            .collect();
        facts.shuffle(&mut self.rng);
        facts.into_iter().map(|f| e.canonical(f)).collect()
    }

    fn plan(&mut self, kind_index: usize) -> Plan {
        match kind_index {
            0 => {
                let asked = match self.rng.gen_range(0..5) {
                    0 => Fact::Year,
                    1 => Fact::Count(self.rng.gen_range(0..UNITS.len())),
                    _ => Fact::Person(*Rel::ALL.choose(&mut self.rng).expect("relations")),
                };
                Plan::Unanswerable(asked)
            }
            1 => Plan::Boolean(*Rel::ALL.choose(&mut self.rng).expect("relations"), self.rng.gen_bool(0.5)),
            2 => Plan::Span(*Rel::ALL.choose(&mut self.rng).expect("relations")),
            _ => {
                let unit = self.rng.gen_range(0..UNITS.len());
                match self.rng.gen_range(0..10) {
                    0..=3 => Plan::Year,
                    4..=6 => Plan::Count(unit),
                    _ => Plan::Difference(unit),
                }
            }
        }
    }

    fn question(&mut self, index: usize, plan: Plan) -> Result<()> {
        let kind = *KINDS.choose(&mut self.rng).expect("kinds");
        let main = self.entity(kind);
        let second = self.entity(kind);
        let e = main.label();
        let wording = self.rng.gen_range(0..WORDINGS);

        let (tokens, answer, gold_facts): (String, Answer, Vec<(usize, Fact)>) = match plan {
            Plan::Span(rel) => (
                main.ask(Fact::Person(rel), wording),
                Answer::span(main.person(rel)),
                vec![(0, Fact::Person(rel))],
            ),
            Plan::Year => (
                main.ask(Fact::Year, wording),
                Answer::Number(main.year as f64),
                vec![(0, Fact::Year)],
            ),
            Plan::Count(u) => (
                main.ask(Fact::Count(u), wording),
                Answer::Number(main.counts[u] as f64),
                vec![(0, Fact::Count(u))],
            ),
            Plan::Difference(u) => {
                let (a, b) = (main.counts[u], second.counts[u]);
                let (hi, lo) = if a >= b { (0, 1) } else { (1, 0) };
                let labels = [e.clone(), second.label()];
                let text = if wording == 0 {
                    format!("how many more {} did {} have than {}", UNITS[u], labels[hi], labels[lo])
                } else {
                    format!("how many more {} belonged to {} than to {}", UNITS[u], labels[hi], labels[lo])
                };
                (
                    text,
                    Answer::Number(a.abs_diff(b) as f64),
                    vec![(0, Fact::Count(u)), (1, Fact::Count(u))],
                )
            }
            Plan::Boolean(rel, truth) => {
                let asked = if truth {
                    main.person(rel).to_string()
                } else if self.rng.gen_bool(0.5) {
                    let other = *Rel::ALL.iter().filter(|&&r| r != rel).collect::<Vec<_>>().choose(&mut self.rng).expect("relations");
                    main.person(*other).to_string()
                } else {
                    self.person()
                };
                (
                    main.ask_boolean(rel, &asked, wording),
                    Answer::Boolean(truth),
                    vec![(0, Fact::Person(rel))],
                )
            }
            Plan::Unanswerable(fact) => {
                let text = main.ask(fact, wording);
                (text, Answer::None, Vec::new())
            }
        };

        let answerable = answer != Answer::None;
        let entities = [&main, &second];
        let plant = answerable && self.rng.gen_bool(self.cfg.alternative_rate);
        let n_alt = if plant { self.cfg.alternatives_per_question } else { 0 };
        let target = if gold_facts.is_empty() { 0 } else { self.rng.gen_range(0..gold_facts.len()) };

        // Sentences per entity document.
        let mut per_entity: [Vec<(String, Tag)>; 2] = [Vec::new(), Vec::new()];
        for (slot, &(ent, fact)) in gold_facts.iter().enumerate() {
            per_entity[ent].push((entities[ent].canonical(fact), Tag::Gold(slot)));
        }
        let mut cross_docs: Vec<(String, String)> = Vec::new();
        let mut variants: Vec<usize> = (0..PARAPHRASES).collect();
        variants.shuffle(&mut self.rng);
        if let Some(&(_, fact)) = gold_facts.get(target) {
            if let Some(v) = matching_paraphrase(fact, wording) {
                variants.retain(|&x| x != v);
                variants.insert(0, v);
            }
        }
        let room = self.cfg.docs_per_question - gold_facts.iter().map(|g| g.0).collect::<BTreeSet<_>>().len().max(1);
        for &variant in variants.iter().take(n_alt) {
            let (ent, fact) = gold_facts[target];
            if cross_docs.len() < room && self.rng.gen_bool(self.cfg.cross_document_alternative_rate) {
                cross_docs.push(entities[ent].cross(fact));
            } else {
                per_entity[ent].push((entities[ent].paraphrase(fact, variant), Tag::Alt));
            }
        }

        let mut docs: Vec<(Document, Vec<(Tag, Selection)>)> = Vec::new();
        let main_excluded: Vec<Fact> = match plan {
            Plan::Unanswerable(f) => vec![f],
            _ => gold_facts.iter().filter(|g| g.0 == 0).map(|g| g.1).collect(),
        };
        let pad = self.entity_pad(&main, &main_excluded);
        let sentences = std::mem::take(&mut per_entity[0]);
        docs.push(self.document(&format!("{} {}", main.name, kind), sentences, pad));
        let mut gold_docs: BTreeSet<DocId> = [docs[0].0.id].into();
        if gold_facts.iter().any(|g| g.0 == 1) {
            let excluded: Vec<Fact> = gold_facts.iter().filter(|g| g.0 == 1).map(|g| g.1).collect();
            let pad = self.entity_pad(&second, &excluded);
            let sentences = std::mem::take(&mut per_entity[1]);
            let built = self.document(&format!("{} {}", second.name, kind), sentences, pad);
            gold_docs.insert(built.0.id);
            docs.push(built);
        }
        for (title, sentence) in cross_docs {
            let subject = title.clone();
            let pad: Vec<String> = vec![
                format!("{subject} was often mentioned near the {} river", self.word()),
                format!("later accounts of {subject} are few"),
            ];
            docs.push(self.document(&title, vec![(sentence, Tag::Alt)], pad));
        }
        let mut spare = (gold_docs.len() == 1).then_some(second);
        while docs.len() < self.cfg.docs_per_question {
            let ent = match spare.take() {
                Some(e) => e,
                None => self.entity(kind),
            };
            let pad = self.entity_pad(&ent, &[]);
            docs.push(self.document(&format!("{} {}", ent.name, kind), Vec::new(), pad));
        }

        let mut gold_evidence = BTreeSet::new();
        let mut hidden = BTreeSet::new();
        for (_, tags) in &docs {
            for &(tag, sel) in tags {
                match tag {
                    Tag::Gold(_) => {
                        gold_evidence.insert(sel);
                    }
                    Tag::Alt => {
                        hidden.insert(sel);
                    }
                    Tag::Other => {}
                }
            }
        }
        let mut candidate_doc_ids: Vec<DocId> = docs.iter().map(|(d, _)| d.id).collect();
        candidate_doc_ids.shuffle(&mut self.rng);
        for (doc, _) in docs {
            self.corpus.documents.insert(doc.id, doc);
        }
        self.corpus.questions.push(Question {
            id: format!("q{index:05}"),
            tokens: tokenize(&tokens),
            candidate_doc_ids,
            gold_answer: answer,
            gold_doc_ids: gold_docs,
            gold_evidence,
            hidden_alternatives: hidden,
        });
        Ok(())
    }

}

pub fn generate_corpus(cfg: &GenConfig) -> Result<Corpus> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut used: HashSet<String> = HashSet::new();
    let mut filler = Vec::with_capacity(cfg.distractor_vocab_size);
    while filler.len() < cfg.distractor_vocab_size {
        let n = rng.gen_range(2..=3);
        let w: String = (0..n).map(|_| *SYLLABLES.choose(&mut rng).expect("syllables")).collect();
        if used.insert(w.clone()) {
            filler.push(w);
        }
    }
    let mut g = Generator {
        cfg,
        rng,
        used,
        filler,
        next_doc: 0,
        corpus: Corpus::default(),
    };
    let mix = WeightedIndex::new(cfg.answer_type_mix.weights())
        .map_err(|e| Error::Config(format!("answer_type_mix: {e}")))?;
    for i in 0..cfg.n_questions {
        let kind = mix.sample(&mut g.rng);
        let plan = g.plan(kind);
        g.question(i, plan)?;
    }
    let corpus = g.corpus;
    corpus.validate()?;
    self_check(&corpus)?;
    Ok(corpus)
}

/// Every answerable gold answer is a reader candidate on its gold context,
/// and every hidden alternative yields a valid context when it stands in
/// for one gold snippet.
pub fn self_check(corpus: &Corpus) -> Result<()> {
    for q in &corpus.questions {
        let fail = |what: &str| Error::Contract(format!("question {}: {what}", q.id));
        if q.is_answerable() {
            let gold = concatenate_context(corpus, q, &q.gold_context()?)?;
            if !candidate_answers(&gold).iter().any(|c| answer_equal(&c.answer, &q.gold_answer)) {
                return Err(fail("gold answer is not a candidate of the gold context"));
            }
        }
        for &alt in &q.hidden_alternatives {
            let valid = q.gold_evidence.iter().any(|&replaced| {
                let mut ctx = ContextSet::new();
                let pairs = q.gold_evidence.iter().filter(|&&p| p != replaced).copied().chain([alt]);
                for (d, s) in pairs {
                    if ctx.insert(d, s).is_err() {
                        return false;
                    }
                }
                concatenate_context(corpus, q, &ctx).is_ok_and(|t| is_valid_context(&q.gold_answer, &t))
            });
            if !valid {
                return Err(fail("hidden alternative does not support the gold answer"));
            }
        }
    }
    Ok(())
}
