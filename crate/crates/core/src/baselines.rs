//! Count-based comparison models: a per-object first-order Markov chain and
//! an independent-factor Bayes ranker.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use crate::error::{MpeError, Result};
use crate::predictor::{check_k, top_k, Backoff, NextLocationRanker, Query, RankedPrediction};
use crate::trajectory::TokenQuadruple;

/// Transition and factor counts from training quadruples, plus the additive
/// smoothing constant used when ranking.
#[derive(Debug, Clone, PartialEq)]
pub struct CountsModel {
    pub alpha: f64,
    /// n(o, l_i → l_j), keyed by (object, current).
    pub object_transitions: BTreeMap<(String, String), BTreeMap<String, u64>>,
    /// n(l_i → l_j), keyed by current; doubles as the candidate index.
    pub transitions: BTreeMap<String, BTreeMap<String, u64>>,
    /// n(o, l_j)
    pub object_next: BTreeMap<(String, String), u64>,
    /// n(t, l_j)
    pub slot_next: BTreeMap<(u32, String), u64>,
    /// n(l_j)
    pub next: BTreeMap<String, u64>,
    pub n_objects: usize,
    pub n_slots: usize,
    pub n_current: usize,
    pub n_quadruples: u64,
}

pub const DEFAULT_ALPHA: f64 = 1.0;

/// Accumulates every count table in one pass.
pub fn fit_counts(train: &[TokenQuadruple], alpha: f64) -> Result<CountsModel> {
    if train.is_empty() {
        return Err(MpeError::Data("empty training set".into()));
    }
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(MpeError::Config(format!(
            "smoothing must be non-negative, got {alpha}"
        )));
    }
    let mut m = CountsModel {
        alpha,
        object_transitions: BTreeMap::new(),
        transitions: BTreeMap::new(),
        object_next: BTreeMap::new(),
        slot_next: BTreeMap::new(),
        next: BTreeMap::new(),
        n_objects: 0,
        n_slots: 0,
        n_current: 0,
        n_quadruples: train.len() as u64,
    };
    let mut objects = std::collections::BTreeSet::new();
    let mut slots = std::collections::BTreeSet::new();
    for q in train {
        *m.object_transitions
            .entry((q.object.clone(), q.current.clone()))
            .or_default()
            .entry(q.next.clone())
            .or_default() += 1;
        *m.transitions
            .entry(q.current.clone())
            .or_default()
            .entry(q.next.clone())
            .or_default() += 1;
        *m.object_next
            .entry((q.object.clone(), q.next.clone()))
            .or_default() += 1;
        *m.slot_next.entry((q.slot, q.next.clone())).or_default() += 1;
        *m.next.entry(q.next.clone()).or_default() += 1;
        objects.insert(q.object.as_str());
        slots.insert(q.slot);
    }
    m.n_objects = objects.len();
    m.n_slots = slots.len();
    m.n_current = m.transitions.len();
    Ok(m)
}

impl CountsModel {
    pub fn n_next(&self) -> usize {
        self.next.len()
    }

    fn popularity(&self, k: usize) -> RankedPrediction {
        let scored = self
            .next
            .iter()
            .map(|(t, &c)| (t.clone(), c as f64))
            .collect();
        RankedPrediction {
            entries: top_k(scored, k),
            backoff: Backoff::UnseenCurrent,
        }
    }
}

/// Smoothed per-object transition MLE over the current location's
/// candidates, backing off to global transition counts when the object has
/// never left this location.
pub fn markov_rank(model: &CountsModel, query: &Query, k: usize) -> Result<RankedPrediction> {
    check_k(k)?;
    let Some(global) = model.transitions.get(&query.current) else {
        return Ok(model.popularity(k));
    };
    let personal = model
        .object_transitions
        .get(&(query.object.clone(), query.current.clone()))
        .filter(|row| row.values().any(|&c| c > 0));
    let (row, backoff) = match personal {
        Some(row) => (row, Backoff::None),
        None => (global, Backoff::UnseenObject),
    };
    let total: u64 = row.values().sum();
    let denom = total as f64 + model.alpha * global.len() as f64;
    let scored = global
        .keys()
        .map(|j| {
            let n = row.get(j).copied().unwrap_or(0) as f64;
            (j.clone(), (n + model.alpha) / denom)
        })
        .collect();
    Ok(RankedPrediction {
        entries: top_k(scored, k),
        backoff,
    })
}

/// `ln P(o|l_j) + ln P(l_i|l_j) + ln P(t|l_j) + ln P(l_j)` over the
/// candidates of `l_i`, each factor additively smoothed over its own support.
pub fn bayes_rank(model: &CountsModel, query: &Query, k: usize) -> Result<RankedPrediction> {
    check_k(k)?;
    let Some(candidates) = model.transitions.get(&query.current) else {
        return Ok(model.popularity(k));
    };
    let slot = query.slot(None);
    let seen_object = model
        .object_next
        .range((query.object.clone(), String::new())..)
        .next()
        .is_some_and(|((o, _), _)| *o == query.object);
    let seen_slot = slot.is_some_and(|s| {
        model
            .slot_next
            .range((s, String::new())..)
            .next()
            .is_some_and(|((t, _), _)| *t == s)
    });
    let backoff = if !seen_object {
        Backoff::UnseenObject
    } else if !seen_slot {
        Backoff::UnseenTime
    } else {
        Backoff::None
    };
    let a = model.alpha;
    // Each factor is formed as a single quotient before the logarithm so
    // that scaling all counts by a constant leaves it bit-identical at α = 0.
    let factor = |count: u64, n_j: u64, support: usize| {
        ((count as f64 + a) / (n_j as f64 + a * support as f64)).ln()
    };
    let scored = candidates
        .iter()
        .map(|(j, &n_ij)| {
            let n_j = model.next[j];
            let n_oj = model
                .object_next
                .get(&(query.object.clone(), j.clone()))
                .copied()
                .unwrap_or(0);
            let n_tj = slot
                .and_then(|s| model.slot_next.get(&(s, j.clone())).copied())
                .unwrap_or(0);
            let score = factor(n_oj, n_j, model.n_objects)
                + factor(n_ij, n_j, model.n_current)
                + factor(n_tj, n_j, model.n_slots)
                + ((n_j as f64 + a) / (model.n_quadruples as f64 + a * model.n_next() as f64)).ln();
            (j.clone(), score)
        })
        .collect();
    Ok(RankedPrediction {
        entries: top_k(scored, k),
        backoff,
    })
}

pub struct MarkovRanker<'a>(pub &'a CountsModel);
pub struct BayesRanker<'a>(pub &'a CountsModel);

impl NextLocationRanker for MarkovRanker<'_> {
    fn rank(&self, query: &Query, k: usize) -> Result<RankedPrediction> {
        markov_rank(self.0, query, k)
    }
}

impl NextLocationRanker for BayesRanker<'_> {
    fn rank(&self, query: &Query, k: usize) -> Result<RankedPrediction> {
        bayes_rank(self.0, query, k)
    }
}

const COUNTS_HEADER: &str = "#mpe-counts\tv1";

fn check_token(t: &str) -> Result<&str> {
    if t.contains(['\t', '\n', '\r']) {
        return Err(MpeError::Data(format!(
            "token {t:?} cannot be stored in TSV"
        )));
    }
    Ok(t)
}

/// Writes all count tables as TSV, one tagged row per entry.
pub fn write_counts<W: Write>(mut w: W, m: &CountsModel) -> Result<()> {
    writeln!(w, "{COUNTS_HEADER}")?;
    writeln!(w, "alpha\t{}", m.alpha)?;
    writeln!(
        w,
        "sizes\t{}\t{}\t{}\t{}",
        m.n_objects, m.n_slots, m.n_current, m.n_quadruples
    )?;
    for ((o, c), row) in &m.object_transitions {
        for (n, count) in row {
            writeln!(
                w,
                "object_transition\t{}\t{}\t{}\t{count}",
                check_token(o)?,
                check_token(c)?,
                check_token(n)?
            )?;
        }
    }
    for (c, row) in &m.transitions {
        for (n, count) in row {
            writeln!(
                w,
                "transition\t{}\t{}\t{count}",
                check_token(c)?,
                check_token(n)?
            )?;
        }
    }
    for ((o, n), count) in &m.object_next {
        writeln!(
            w,
            "object_next\t{}\t{}\t{count}",
            check_token(o)?,
            check_token(n)?
        )?;
    }
    for ((t, n), count) in &m.slot_next {
        writeln!(w, "slot_next\t{t}\t{}\t{count}", check_token(n)?)?;
    }
    for (n, count) in &m.next {
        writeln!(w, "next\t{}\t{count}", check_token(n)?)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_counts<R: BufRead>(r: R) -> Result<CountsModel> {
    let mut m = CountsModel {
        alpha: DEFAULT_ALPHA,
        object_transitions: BTreeMap::new(),
        transitions: BTreeMap::new(),
        object_next: BTreeMap::new(),
        slot_next: BTreeMap::new(),
        next: BTreeMap::new(),
        n_objects: 0,
        n_slots: 0,
        n_current: 0,
        n_quadruples: 0,
    };
    let mut lines = r.lines();
    match lines.next() {
        Some(Ok(h)) if h == COUNTS_HEADER => {}
        _ => return Err(MpeError::Format("missing counts header".into())),
    }
    for (i, line) in lines.enumerate() {
        let line = line?;
        let lineno = i as u64 + 2;
        let err = |message: &str| MpeError::Parse {
            line: lineno,
            message: message.to_string(),
        };
        let f: Vec<&str> = line.split('\t').collect();
        let num = |s: &str| s.parse::<u64>().map_err(|_| err("invalid count"));
        match (f[0], f.len()) {
            ("alpha", 2) => m.alpha = f[1].parse().map_err(|_| err("invalid alpha"))?,
            ("sizes", 5) => {
                m.n_objects = num(f[1])? as usize;
                m.n_slots = num(f[2])? as usize;
                m.n_current = num(f[3])? as usize;
                m.n_quadruples = num(f[4])?;
            }
            ("object_transition", 5) => {
                m.object_transitions
                    .entry((f[1].into(), f[2].into()))
                    .or_default()
                    .insert(f[3].into(), num(f[4])?);
            }
            ("transition", 4) => {
                m.transitions
                    .entry(f[1].into())
                    .or_default()
                    .insert(f[2].into(), num(f[3])?);
            }
            ("object_next", 4) => {
                m.object_next.insert((f[1].into(), f[2].into()), num(f[3])?);
            }
            ("slot_next", 4) => {
                let t = f[1].parse::<u32>().map_err(|_| err("invalid slot"))?;
                m.slot_next.insert((t, f[2].into()), num(f[3])?);
            }
            ("next", 3) => {
                m.next.insert(f[1].into(), num(f[2])?);
            }
            _ => return Err(err("unrecognised row")),
        }
    }
    Ok(m)
}
