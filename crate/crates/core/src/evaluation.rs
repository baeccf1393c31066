//! Ranking metrics and the multi-run experiment driver.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baselines::{fit_counts, BayesRanker, MarkovRanker, DEFAULT_ALPHA};
use crate::error::{MpeError, Result};
use crate::model::{
    ComponentMask, ExclusionMode, Hyperparams, MpeModel, NegativePool, TrainOptions,
};
use crate::predictor::{Backoff, MpePredictor, NextLocationRanker, Query, Support};
use crate::trajectory::{split, SplitRatios, TokenQuadruple};

fn check_aligned(n_lists: usize, n_truths: usize, k: usize) -> Result<()> {
    if n_lists != n_truths {
        return Err(MpeError::Data(format!(
            "{n_lists} ranked lists but {n_truths} ground-truth locations"
        )));
    }
    if k == 0 {
        return Err(MpeError::Config("k must be at least 1".into()));
    }
    Ok(())
}

/// Fraction of items whose truth appears among the first `k` entries.
pub fn accuracy_at_k<L, T>(ranked: &[L], truths: &[T], k: usize) -> Result<f64>
where
    L: AsRef<[T]>,
    T: PartialEq,
{
    check_aligned(ranked.len(), truths.len(), k)?;
    if truths.is_empty() {
        return Ok(0.0);
    }
    let hits = ranked
        .iter()
        .zip(truths)
        .filter(|(list, truth)| list.as_ref().iter().take(k).any(|x| x == *truth))
        .count();
    Ok(hits as f64 / truths.len() as f64)
}

/// Mean over items of `1/w`, where `w` is the 1-based rank of the truth if
/// it is within the first `k` entries, and 0 otherwise.
pub fn average_precision_at_k<L, T>(ranked: &[L], truths: &[T], k: usize) -> Result<f64>
where
    L: AsRef<[T]>,
    T: PartialEq,
{
    check_aligned(ranked.len(), truths.len(), k)?;
    if truths.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = ranked
        .iter()
        .zip(truths)
        .map(|(list, truth)| {
            list.as_ref()
                .iter()
                .take(k)
                .position(|x| x == truth)
                .map_or(0.0, |p| 1.0 / (p + 1) as f64)
        })
        .sum();
    Ok(total / truths.len() as f64)
}

/// Accuracy and average precision for k = 1..=max_k (index k-1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: Vec<f64>,
    pub average_precision: Vec<f64>,
}

impl Metrics {
    pub fn compute(ranked: &[Vec<String>], truths: &[String], max_k: usize) -> Result<Self> {
        let mut m = Metrics {
            accuracy: Vec::with_capacity(max_k),
            average_precision: Vec::with_capacity(max_k),
        };
        for k in 1..=max_k {
            m.accuracy.push(accuracy_at_k(ranked, truths, k)?);
            m.average_precision
                .push(average_precision_at_k(ranked, truths, k)?);
        }
        Ok(m)
    }

    fn mean(all: &[&Metrics]) -> Metrics {
        let n = all.len() as f64;
        let avg = |f: &dyn Fn(&Metrics) -> &Vec<f64>| -> Vec<f64> {
            let len = f(all[0]).len();
            (0..len)
                .map(|i| all.iter().map(|m| f(m)[i]).sum::<f64>() / n)
                .collect()
        };
        Metrics {
            accuracy: avg(&|m| &m.accuracy),
            average_precision: avg(&|m| &m.average_precision),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    /// Training seed; `None` for deterministic models.
    pub seed: Option<u64>,
    pub metrics: Metrics,
    /// Number of test queries answered through each kind of backoff.
    pub backoff: BTreeMap<String, usize>,
}

/// Ranks every test quadruple once with `max_k` entries and scores the
/// prefixes. Backoff-flagged queries are included in the metrics.
pub fn evaluate_ranker<R: NextLocationRanker + ?Sized>(
    ranker: &R,
    test: &[TokenQuadruple],
    max_k: usize,
    seed: Option<u64>,
) -> Result<RunMetrics> {
    let mut lists = Vec::with_capacity(test.len());
    let mut backoff = BTreeMap::new();
    for q in test {
        let pred = ranker.rank(&Query::with_slot(&q.object, q.slot, &q.current), max_k)?;
        if pred.backoff != Backoff::None {
            *backoff.entry(pred.backoff.name().to_string()).or_default() += 1;
        }
        lists.push(pred.entries.into_iter().map(|(t, _)| t).collect::<Vec<_>>());
    }
    let truths: Vec<String> = test.iter().map(|q| q.next.clone()).collect();
    Ok(RunMetrics {
        seed,
        metrics: Metrics::compute(&lists, &truths, max_k)?,
        backoff,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelSpec {
    Mpe {
        mask: ComponentMask,
        shared_locations: bool,
    },
    Markov,
    Bayes,
}

impl ModelSpec {
    pub fn mpe(mask: ComponentMask) -> Self {
        ModelSpec::Mpe {
            mask,
            shared_locations: false,
        }
    }

    pub fn name(&self) -> String {
        match self {
            ModelSpec::Mpe {
                mask,
                shared_locations,
            } => {
                let base = match *mask {
                    ComponentMask::FULL => "mpe".to_string(),
                    m => format!("mpe-{}", m.name()),
                };
                if *shared_locations {
                    format!("{base}-shared")
                } else {
                    base
                }
            }
            ModelSpec::Markov => "mm".into(),
            ModelSpec::Bayes => "bayes".into(),
        }
    }

    pub fn is_stochastic(&self) -> bool {
        matches!(self, ModelSpec::Mpe { .. })
    }
}

impl FromStr for ModelSpec {
    type Err = MpeError;

    /// `mpe`, `mpe-plain`, `mpe-object`, `mpe-time`, any of these with a
    /// `-shared` suffix, `mm` (or `markov`), `bayes`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mm" | "markov" => return Ok(ModelSpec::Markov),
            "bayes" => return Ok(ModelSpec::Bayes),
            _ => {}
        }
        let (base, shared_locations) = match s.strip_suffix("-shared") {
            Some(b) => (b, true),
            None => (s, false),
        };
        let mask = match base {
            "mpe" => ComponentMask::FULL,
            other => match other.strip_prefix("mpe-") {
                Some(m) => m.parse()?,
                None => return Err(MpeError::Config(format!("unknown model '{s}'"))),
            },
        };
        Ok(ModelSpec::Mpe {
            mask,
            shared_locations,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub split: SplitRatios,
    pub split_seed: u64,
    /// The `seed` field is ignored; run `r` trains with `base_seed + r`.
    pub hyperparams: Hyperparams,
    pub models: Vec<ModelSpec>,
    pub runs: usize,
    pub base_seed: u64,
    pub max_k: usize,
    pub exclusion: ExclusionMode,
    pub negative_pool: NegativePool,
    pub support: Support,
    pub alpha: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            split: SplitRatios::default(),
            split_seed: 0,
            hyperparams: Hyperparams::default(),
            models: vec![ModelSpec::mpe(ComponentMask::FULL)],
            runs: 10,
            base_seed: 0,
            max_k: 3,
            exclusion: ExclusionMode::Context,
            negative_pool: NegativePool::Vocabulary,
            support: Support::Candidates,
            alpha: DEFAULT_ALPHA,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub n_test: usize,
    pub runs: Vec<RunMetrics>,
    pub mean: Metrics,
}

impl EvalReport {
    fn from_runs(model: String, n_test: usize, runs: Vec<RunMetrics>) -> Self {
        let mean = Metrics::mean(&runs.iter().map(|r| &r.metrics).collect::<Vec<_>>());
        Self {
            model,
            n_test,
            runs,
            mean,
        }
    }

    pub fn backoff_queries(&self) -> usize {
        self.runs.first().map_or(0, |r| r.backoff.values().sum())
    }
}

/// Splits once with `split_seed`, then trains and evaluates every model.
/// Embedding models are retrained `runs` times with seeds
/// `base_seed + 1 ..= base_seed + runs`; count models are fitted once.
pub fn run_experiment(
    quads: Vec<TokenQuadruple>,
    config: &ExperimentConfig,
) -> Result<Vec<EvalReport>> {
    if config.runs == 0 {
        return Err(MpeError::Config("runs must be at least 1".into()));
    }
    if config.models.is_empty() {
        return Err(MpeError::Config("no models selected".into()));
    }
    let parts = split(quads, config.split, config.split_seed)?;
    let n_test = parts.test.len();
    let mut reports = Vec::with_capacity(config.models.len());
    for spec in &config.models {
        let runs = match *spec {
            ModelSpec::Mpe {
                mask,
                shared_locations,
            } => (1..=config.runs as u64)
                .map(|r| {
                    let seed = config.base_seed.wrapping_add(r);
                    let hp = Hyperparams {
                        seed,
                        ..config.hyperparams
                    };
                    let opts = TrainOptions {
                        mask,
                        shared_locations,
                        exclusion: config.exclusion,
                        negative_pool: config.negative_pool,
                    };
                    let (model, _, _) = MpeModel::fit(&parts.train, &hp, opts, None, |_| {})?;
                    let predictor = MpePredictor {
                        model: &model,
                        support: config.support,
                    };
                    evaluate_ranker(&predictor, &parts.test, config.max_k, Some(seed))
                })
                .collect::<Result<Vec<_>>>()?,
            ModelSpec::Markov => {
                let counts = fit_counts(&parts.train, config.alpha)?;
                vec![evaluate_ranker(
                    &MarkovRanker(&counts),
                    &parts.test,
                    config.max_k,
                    None,
                )?]
            }
            ModelSpec::Bayes => {
                let counts = fit_counts(&parts.train, config.alpha)?;
                vec![evaluate_ranker(
                    &BayesRanker(&counts),
                    &parts.test,
                    config.max_k,
                    None,
                )?]
            }
        };
        reports.push(EvalReport::from_runs(spec.name(), n_test, runs));
    }
    Ok(reports)
}

/// One row per model with mean metrics.
pub fn write_report_tsv<W: Write>(mut w: W, reports: &[EvalReport]) -> Result<()> {
    let max_k = reports.first().map_or(0, |r| r.mean.accuracy.len());
    write!(w, "model\truns\tn_test")?;
    for k in 1..=max_k {
        write!(w, "\tacc@{k}")?;
    }
    for k in 1..=max_k {
        write!(w, "\tap@{k}")?;
    }
    writeln!(w, "\tbackoff_queries")?;
    for r in reports {
        write!(w, "{}\t{}\t{}", r.model, r.runs.len(), r.n_test)?;
        for v in r.mean.accuracy.iter().chain(&r.mean.average_precision) {
            write!(w, "\t{v:.6}")?;
        }
        writeln!(w, "\t{}", r.backoff_queries())?;
    }
    w.flush()?;
    Ok(())
}

/// One row per (model, run).
pub fn write_runs_tsv<W: Write>(mut w: W, reports: &[EvalReport]) -> Result<()> {
    let max_k = reports.first().map_or(0, |r| r.mean.accuracy.len());
    write!(w, "model\tseed")?;
    for k in 1..=max_k {
        write!(w, "\tacc@{k}")?;
    }
    for k in 1..=max_k {
        write!(w, "\tap@{k}")?;
    }
    writeln!(w)?;
    for r in reports {
        for run in &r.runs {
            let seed = run.seed.map_or_else(|| "-".to_string(), |s| s.to_string());
            write!(w, "{}\t{seed}", r.model)?;
            for v in run
                .metrics
                .accuracy
                .iter()
                .chain(&run.metrics.average_precision)
            {
                write!(w, "\t{v:.6}")?;
            }
            writeln!(w)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Aligned plain-text table in the shape of the usual accuracy / average
/// precision comparison.
pub fn format_table(reports: &[EvalReport]) -> String {
    let max_k = reports.first().map_or(0, |r| r.mean.accuracy.len());
    let width = reports
        .iter()
        .map(|r| r.model.len())
        .max()
        .unwrap_or(5)
        .max(6);
    let mut out = String::new();
    let _ = write!(out, "{:width$} |", "method");
    for k in 1..=max_k {
        let _ = write!(out, " {:>7}", format!("acc@{k}"));
    }
    let _ = write!(out, " |");
    for k in 1..=max_k {
        let _ = write!(out, " {:>7}", format!("ap@{k}"));
    }
    out.push('\n');
    out.push_str(&"-".repeat(width + 4 + 16 * max_k + 2));
    out.push('\n');
    for r in reports {
        let _ = write!(out, "{:width$} |", r.model);
        for v in &r.mean.accuracy {
            let _ = write!(out, " {v:>7.3}");
        }
        let _ = write!(out, " |");
        for v in &r.mean.average_precision {
            let _ = write!(out, " {v:>7.3}");
        }
        out.push('\n');
    }
    out
}
