//! The accumulative ablation grid over training modes.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::harness::generate::{generate_corpus, GenConfig};
use crate::harness::metrics::{evaluate, MetricsReport};
use crate::training::{train, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Full,
    NoInvalidLoss,
    NoMarginalization,
    NoJoint,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::Full, Mode::NoInvalidLoss, Mode::NoMarginalization, Mode::NoJoint];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Full => "full",
            Mode::NoInvalidLoss => "-invalid_loss",
            Mode::NoMarginalization => "-marginalization",
            Mode::NoJoint => "-joint",
        }
    }

    /// Each mode also drops everything the modes before it dropped.
    pub fn apply(self, base: &TrainConfig) -> TrainConfig {
        let mut cfg = base.clone();
        cfg.marginalization = true;
        cfg.invalid_loss = true;
        cfg.joint = true;
        if self >= Mode::NoInvalidLoss {
            cfg.invalid_loss = false;
        }
        if self >= Mode::NoMarginalization {
            cfg.marginalization = false;
        }
        if self >= Mode::NoJoint {
            cfg.joint = false;
        }
        cfg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRun {
    pub mode: Mode,
    pub seed: u64,
    pub metrics: MetricsReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
}

impl Summary {
    /// Mean and sample standard deviation; the deviation of one value is 0.
    pub fn of(values: &[f64]) -> Summary {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Summary { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub runs: Vec<AblationRun>,
    /// Per mode, per metric name.
    pub summary: BTreeMap<Mode, BTreeMap<String, Summary>>,
}

fn metric_values(m: &MetricsReport) -> Vec<(String, f64)> {
    let mut out = vec![
        ("doc_f1".to_string(), m.doc_f1),
        ("rt_recall".to_string(), m.rt_recall),
        ("qa_em".to_string(), m.qa_em),
        ("qa_f1".to_string(), m.qa_f1),
        ("alternative_hit_rate".to_string(), m.alternative_hit_rate),
    ];
    out.extend(m.per_type_qa_f1.iter().map(|(k, v)| (format!("qa_f1_{k}"), *v)));
    out
}

impl AblationReport {
    pub fn mean(&self, mode: Mode, metric: &str) -> Option<f64> {
        self.summary.get(&mode)?.get(metric).map(|s| s.mean)
    }

    /// One row per mode, `mean` and `std` columns per metric.
    pub fn to_csv(&self) -> String {
        let metrics: Vec<String> = self
            .summary
            .values()
            .next()
            .map(|m| m.keys().cloned().collect())
            .unwrap_or_default();
        let mut out = String::from("mode,seeds");
        for m in &metrics {
            let _ = write!(out, ",{m}_mean,{m}_std");
        }
        out.push('\n');
        for (mode, by_metric) in &self.summary {
            let seeds = self.runs.iter().filter(|r| r.mode == *mode).count();
            let _ = write!(out, "{},{seeds}", mode.name());
            for m in &metrics {
                let s = by_metric.get(m).copied().unwrap_or(Summary { mean: f64::NAN, std: f64::NAN });
                let _ = write!(out, ",{:.4},{:.4}", s.mean, s.std);
            }
            out.push('\n');
        }
        out
    }
}

/// One seed of the grid: training seed plus the corpora it trains and
/// evaluates on.
#[derive(Debug, Clone, Copy)]
pub struct Trial<'a> {
    pub seed: u64,
    pub train: &'a Corpus,
    pub eval: &'a Corpus,
}

/// Trains every mode on `train_corpus` for each seed and evaluates on
/// `eval_corpus`.
pub fn run_ablation(
    modes: &[Mode],
    base: &TrainConfig,
    seeds: &[u64],
    train_corpus: &Corpus,
    eval_corpus: &Corpus,
) -> Result<AblationReport> {
    let trials: Vec<Trial> = seeds
        .iter()
        .map(|&seed| Trial {
            seed,
            train: train_corpus,
            eval: eval_corpus,
        })
        .collect();
    run_trials(modes, base, &trials)
}

/// Generates a training and an evaluation corpus per seed, then runs the grid.
pub fn run_generated_ablation(
    modes: &[Mode],
    base: &TrainConfig,
    seeds: &[u64],
    gen: &GenConfig,
    eval_questions: usize,
) -> Result<AblationReport> {
    let corpora = seeds
        .iter()
        .map(|&seed| {
            let train = generate_corpus(&GenConfig { seed, ..gen.clone() })?;
            let eval = generate_corpus(&GenConfig {
                seed: seed ^ EVAL_SEED_SALT,
                n_questions: eval_questions,
                ..gen.clone()
            })?;
            Ok((seed, train, eval))
        })
        .collect::<Result<Vec<_>>>()?;
    let trials: Vec<Trial> = corpora
        .iter()
        .map(|(seed, train, eval)| Trial {
            seed: *seed,
            train,
            eval,
        })
        .collect();
    run_trials(modes, base, &trials)
}

/// Keeps evaluation corpora disjoint from the training corpora of the grid.
pub const EVAL_SEED_SALT: u64 = 0x5eed_e7a1;

pub fn run_trials(modes: &[Mode], base: &TrainConfig, trials: &[Trial<'_>]) -> Result<AblationReport> {
    if trials.is_empty() {
        return Err(Error::Config("at least one seed is required".into()));
    }
    let mut runs = Vec::new();
    for &mode in modes {
        for trial in trials {
            let cfg = TrainConfig {
                seed: trial.seed,
                ..mode.apply(base)
            };
            let params = train::<f64>(&cfg, trial.train)?.params;
            let metrics = evaluate(&params, trial.eval)?;
            runs.push(AblationRun {
                mode,
                seed: trial.seed,
                metrics,
            });
        }
    }
    let mut summary = BTreeMap::new();
    for &mode in modes {
        let mut by_metric: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for run in runs.iter().filter(|r| r.mode == mode) {
            for (k, v) in metric_values(&run.metrics) {
                by_metric.entry(k).or_default().push(v);
            }
        }
        summary.insert(mode, by_metric.into_iter().map(|(k, v)| (k, Summary::of(&v))).collect());
    }
    Ok(AblationReport { runs, summary })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_accumulate() {
        let base = TrainConfig::default();
        let flags = |m: Mode| {
            let c = m.apply(&base);
            (c.marginalization, c.invalid_loss, c.joint)
        };
        assert_eq!(flags(Mode::Full), (true, true, true));
        assert_eq!(flags(Mode::NoInvalidLoss), (true, false, true));
        assert_eq!(flags(Mode::NoMarginalization), (false, false, true));
        assert_eq!(flags(Mode::NoJoint), (false, false, false));
    }

    #[test]
    fn summary_statistics() {
        let s = Summary::of(&[1.0, 3.0]);
        assert_eq!(s.mean, 2.0);
        assert_eq!(s.std, 2f64.sqrt());
        assert_eq!(Summary::of(&[0.5]).std, 0.0);
    }

    #[test]
    fn single_seed_single_mode_gives_one_row() {
        let corpus = generate_corpus(&GenConfig { n_questions: 10, ..Default::default() }).unwrap();
        let cfg = TrainConfig { epochs: 1, ..Default::default() };
        let report = run_ablation(&[Mode::Full], &cfg, &[0], &corpus, &corpus).unwrap();
        assert_eq!(report.runs.len(), 1);
        let csv = report.to_csv();
        assert_eq!(csv.lines().count(), 2);
        assert!(csv.lines().nth(1).unwrap().starts_with("full,1,"));
        assert!(run_ablation(&[Mode::Full], &cfg, &[], &corpus, &corpus).is_err());
    }
}
