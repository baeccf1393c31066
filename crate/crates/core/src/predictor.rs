//! Top-k next-location ranking with deterministic tie-breaking and explicit
//! backoff for entities that were not seen in training.

use std::cmp::Ordering;
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{MpeError, Result};
use crate::model::{score, MpeModel, TimeContext};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum QueryTime {
    Slot(u32),
    Timestamp(i64),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub object: String,
    pub time: QueryTime,
    pub current: String,
}

impl Query {
    pub fn with_slot(object: impl Into<String>, slot: u32, current: impl Into<String>) -> Self {
        Self {
            object: object.into(),
            time: QueryTime::Slot(slot),
            current: current.into(),
        }
    }

    /// Slot index of the query; `None` if it is a timestamp that cannot be
    /// placed (no time context, or outside the daily window).
    pub fn slot(&self, time: Option<&TimeContext>) -> Option<u32> {
        match self.time {
            QueryTime::Slot(s) => Some(s),
            QueryTime::Timestamp(ts) => {
                time.and_then(|tc| tc.slotting.slot_of(ts, tc.tz_offset_minutes))
            }
        }
    }
}

/// Which fallback, if any, produced a ranking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Backoff {
    None,
    UnseenObject,
    UnseenTime,
    UnseenCurrent,
    EmptyCandidates,
}

impl Backoff {
    pub fn name(&self) -> &'static str {
        match self {
            Backoff::None => "none",
            Backoff::UnseenObject => "unseen_object",
            Backoff::UnseenTime => "unseen_time",
            Backoff::UnseenCurrent => "unseen_current",
            Backoff::EmptyCandidates => "empty_candidates",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedPrediction {
    /// `(next location, score)`, best first.
    pub entries: Vec<(String, f64)>,
    pub backoff: Backoff,
}

impl RankedPrediction {
    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(t, _)| t.as_str())
    }

    pub fn rank_of(&self, token: &str) -> Option<usize> {
        self.tokens().position(|t| t == token).map(|p| p + 1)
    }
}

/// Orders by score descending, then token ascending, and keeps the first `k`.
pub fn top_k(mut scored: Vec<(String, f64)>, k: usize) -> Vec<(String, f64)> {
    scored.sort_by(|a, b| match b.1.total_cmp(&a.1) {
        Ordering::Equal => a.0.cmp(&b.0),
        other => other,
    });
    scored.truncate(k);
    scored
}

pub(crate) fn check_k(k: usize) -> Result<()> {
    if k == 0 {
        return Err(MpeError::Config("k must be at least 1".into()));
    }
    Ok(())
}

/// Anything that ranks next locations for a query.
pub trait NextLocationRanker {
    fn rank(&self, query: &Query, k: usize) -> Result<RankedPrediction>;
}

/// Where an embedding model looks for next locations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Support {
    /// Observed successors of the current location only.
    #[default]
    Candidates,
    /// Every next-role location (ablation).
    FullVocabulary,
}

/// Popularity ranking over all next locations seen in training.
pub fn popularity_ranking(model: &MpeModel, k: usize, backoff: Backoff) -> RankedPrediction {
    let scored = model
        .vocab
        .next
        .tokens()
        .iter()
        .zip(&model.next_popularity)
        .map(|(t, &c)| (t.clone(), c as f64))
        .collect();
    RankedPrediction {
        entries: top_k(scored, k),
        backoff,
    }
}

/// Ranks the candidates of the query's current location by their score
/// against the conditional vector.
///
/// An unseen object or slot contributes the zero vector and is flagged.
/// An unseen current location, or one without candidates, falls back to
/// global next-location popularity.
pub fn rank_next(
    model: &MpeModel,
    query: &Query,
    k: usize,
    support: Support,
) -> Result<RankedPrediction> {
    check_k(k)?;
    let Some(current) = model.vocab.current.index_of(&query.current) else {
        return Ok(popularity_ranking(model, k, Backoff::UnseenCurrent));
    };
    let next_ids: Vec<u32> = match support {
        Support::Candidates => model.candidates.candidates(current).to_vec(),
        Support::FullVocabulary => (0..model.vocab.next.len() as u32).collect(),
    };
    if next_ids.is_empty() {
        return Ok(popularity_ranking(model, k, Backoff::EmptyCandidates));
    }
    let object = model.vocab.objects.index_of(&query.object);
    let slot = query
        .slot(model.time.as_ref())
        .and_then(|s| model.vocab.slots.index_of(&s.to_string()));
    let backoff = if model.mask.use_object && object.is_none() {
        Backoff::UnseenObject
    } else if model.mask.use_time && slot.is_none() {
        Backoff::UnseenTime
    } else {
        Backoff::None
    };
    let cond = model
        .store
        .conditional_vector_partial(model.mask, object, slot, current)?;
    let scored = next_ids
        .into_iter()
        .map(|j| {
            let token = model
                .vocab
                .next
                .token(j)
                .expect("index within vocabulary")
                .to_string();
            (token, score(&model.store, &cond, j))
        })
        .collect();
    Ok(RankedPrediction {
        entries: top_k(scored, k),
        backoff,
    })
}

/// An [`MpeModel`] bound to a prediction support.
#[derive(Debug, Clone, Copy)]
pub struct MpePredictor<'a> {
    pub model: &'a MpeModel,
    pub support: Support,
}

impl NextLocationRanker for MpePredictor<'_> {
    fn rank(&self, query: &Query, k: usize) -> Result<RankedPrediction> {
        rank_next(self.model, query, k, self.support)
    }
}

/// Ranks every query in order. Failures are collected with their positions.
pub fn predict_batch<R: NextLocationRanker + ?Sized>(
    ranker: &R,
    queries: &[Query],
    k: usize,
) -> Result<Vec<RankedPrediction>> {
    let mut out = Vec::with_capacity(queries.len());
    let mut failures = Vec::new();
    for (i, q) in queries.iter().enumerate() {
        match ranker.rank(q, k) {
            Ok(p) => out.push(p),
            Err(e) => failures.push(format!("query {i}: {e}")),
        }
    }
    if failures.is_empty() {
        Ok(out)
    } else {
        Err(MpeError::Data(failures.join("; ")))
    }
}

/// Reads `object,time,current[,next]` rows; a trailing column is ignored so
/// quadruple files can be fed back in. With `timestamps` the time column is
/// epoch seconds, otherwise a slot index. A first row starting with `object`
/// is a header.
pub fn read_queries<R: Read>(reader: R, timestamps: bool) -> Result<Vec<Query>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row.map_err(|e| MpeError::Parse {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = row.position().map(|p| p.line()).unwrap_or(i as u64 + 1);
        if i == 0 && row.get(0) == Some("object") {
            continue;
        }
        let err = |message: String| MpeError::Parse { line, message };
        if !(3..=4).contains(&row.len()) {
            return Err(err(format!("expected 3 or 4 fields, found {}", row.len())));
        }
        if row[0].is_empty() || row[2].is_empty() {
            return Err(err("empty token".into()));
        }
        let time = if timestamps {
            match row[1].parse::<i64>() {
                Ok(ts) if ts >= 0 => QueryTime::Timestamp(ts),
                _ => return Err(err(format!("invalid timestamp '{}'", &row[1]))),
            }
        } else {
            QueryTime::Slot(
                row[1]
                    .parse()
                    .map_err(|_| err(format!("invalid slot '{}'", &row[1])))?,
            )
        };
        out.push(Query {
            object: row[0].to_string(),
            time,
            current: row[2].to_string(),
        });
    }
    Ok(out)
}
