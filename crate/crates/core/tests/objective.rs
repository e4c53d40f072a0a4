use margqa::corpus::concatenate_context;
use margqa::objective::{evaluate_loss, supervised_losses, total_loss, LossTerms, ObjectiveConfig};
use margqa::reader::answer_distribution;
use margqa::retrieval::{enumerate_topm_contexts, RetrievalPass};
use margqa::scorer::{LinearHead, DEFAULT_FEATURE_DIM};
use margqa::{is_valid_context, partition_contexts, Answer, Params, View};

mod common;
use common::{random_corpus, random_params, rng};

fn logit(params: &Params, head: &LinearHead<f64>, x: &[f64]) -> f64 {
    let hidden = params.hidden_dim();
    let mut out = head.bias;
    for j in 0..hidden {
        let pre: f64 = x.iter().enumerate().map(|(i, xi)| xi * params.embedding[i * hidden + j]).sum();
        out += head.weights[j] * pre.tanh();
    }
    out
}

#[test]
fn supervised_losses_match_a_direct_recomputation() {
    let mut r = rng(71);
    let mut checked = 0;
    while checked < 25 {
        let corpus = random_corpus(&mut r, 2, 3);
        let params = random_params(&mut r, 4, 1.0);
        let q = &corpus.questions[0];
        let view = View::build(&corpus, q, DEFAULT_FEATURE_DIM).unwrap();

        let mut g_d = 0.0;
        let mut g_c = 0.0;
        for d in &view.docs {
            let p = 1.0 / (1.0 + (-logit(&params, &params.doc_head, d.features.as_slice())).exp());
            g_d -= if q.gold_doc_ids.contains(&d.id) { p.ln() } else { (1.0 - p).ln() };
            if let Some(&(_, s)) = q.gold_evidence.iter().find(|(doc, _)| *doc == d.id) {
                let logits: Vec<f64> = d
                    .snippets
                    .iter()
                    .map(|sv| logit(&params, &params.evidence_head, sv.features.as_slice()))
                    .collect();
                let norm: f64 = logits.iter().map(|z| z.exp()).sum();
                let gold = d.snippets.iter().position(|sv| sv.id == s).unwrap();
                g_c -= (logits[gold].exp() / norm).ln();
            }
        }
        let context = concatenate_context(&corpus, q, &q.gold_context().unwrap()).unwrap();
        let g_a = -answer_distribution(&params, &q.tokens, &context).unwrap().prob_of(&q.gold_answer).ln();

        let (d, c, a) = supervised_losses(&params, &view, &corpus).unwrap();
        assert!((d - g_d).abs() < 1e-9, "{d} vs {g_d}");
        assert!((c - g_c).abs() < 1e-9, "{c} vs {g_c}");
        assert!((a - g_a).abs() < 1e-9, "{a} vs {g_a}");
        checked += 1;
    }
}

#[test]
fn partition_agrees_with_elementwise_validity() {
    let mut r = rng(72);
    for _ in 0..40 {
        let corpus = random_corpus(&mut r, 3, 4);
        let params = random_params(&mut r, 4, 2.0);
        let q = &corpus.questions[0];
        let view = View::build(&corpus, q, DEFAULT_FEATURE_DIM).unwrap();
        let top = enumerate_topm_contexts(&params, &view, 6).unwrap();
        let (valid, invalid) = partition_contexts(&q.gold_answer, top.clone(), &corpus, &view).unwrap();
        let check = |c: &margqa::ContextSet| {
            is_valid_context(&q.gold_answer, &concatenate_context(&corpus, q, c).unwrap())
        };
        let expect_valid: Vec<_> = top.iter().filter(|s| check(&s.context)).cloned().collect();
        let expect_invalid: Vec<_> = top.iter().filter(|s| !check(&s.context)).cloned().collect();
        assert_eq!(valid, expect_valid);
        assert_eq!(invalid, expect_invalid);
    }
}

#[test]
fn adding_alternatives_never_hurts_the_marginal() {
    let mut r = rng(73);
    let mut checked = 0;
    for _ in 0..400 {
        let corpus = random_corpus(&mut r, 3, 3);
        let params = random_params(&mut r, 4, 1.0);
        let q = &corpus.questions[0];
        let view = View::build(&corpus, q, DEFAULT_FEATURE_DIM).unwrap();
        let pass = RetrievalPass::forward(&params, &view).unwrap();
        let gold = q.gold_context().unwrap();
        if pass.selection().selected != q.gold_doc_ids || !gold.docs().eq(q.gold_doc_ids.iter().copied()) {
            continue;
        }
        let top = pass.top_contexts(64).unwrap();
        let Some(gold_scored) = top.iter().find(|s| s.context == gold) else { continue };
        let report = total_loss(&params, &view, &corpus, 64, 0.5).unwrap();
        assert!(report.g_m <= report.g_a - gold_scored.log_joint + 1e-12);
        checked += 1;
    }
    assert!(checked >= 10, "only {checked} fixtures selected the gold documents");
}

#[test]
fn total_is_the_weighted_sum_of_terms() {
    let mut r = rng(74);
    for _ in 0..20 {
        let corpus = random_corpus(&mut r, 3, 4);
        let params = random_params(&mut r, 4, 1.5);
        let view = View::build(&corpus, &corpus.questions[0], DEFAULT_FEATURE_DIM).unwrap();
        let full = total_loss(&params, &view, &corpus, 4, 0.5).unwrap();
        let mut sum = 0.0;
        for terms in [
            LossTerms { doc: true, ..LossTerms::NONE },
            LossTerms { evidence: true, ..LossTerms::NONE },
            LossTerms { answer: true, ..LossTerms::NONE },
            LossTerms { marginal: true, ..LossTerms::NONE },
            LossTerms { invalid: true, ..LossTerms::NONE },
        ] {
            let cfg = ObjectiveConfig { m: 4, alpha: 0.5, terms };
            sum += evaluate_loss(&params, &view, &corpus, &cfg, None).unwrap().total;
        }
        assert!((full.total - sum).abs() < 1e-12);
        assert!(full.g_m >= 0.0 && full.g_an >= 0.0);
        if corpus.questions[0].gold_answer == Answer::None {
            assert_eq!(full.g_c, 0.0);
        }
    }
}
