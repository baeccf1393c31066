use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::parse::Record;
use super::time::TimeSlotting;
use crate::error::{MpeError, Result};
use crate::rng::{derived_rng, Purpose};

/// A record joined with the location its object visits next. The slot is
/// that of the earlier record.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TokenQuadruple {
    pub object: String,
    pub slot: u32,
    pub current: String,
    pub next: String,
}

impl TokenQuadruple {
    pub fn new(
        object: impl Into<String>,
        slot: u32,
        current: impl Into<String>,
        next: impl Into<String>,
    ) -> Self {
        Self {
            object: object.into(),
            slot,
            current: current.into(),
            next: next.into(),
        }
    }
}

/// Groups records per object, orders them by `(timestamp, location)` and
/// emits one quadruple per consecutive pair whose gap is at most
/// `max_gap_seconds` (unbounded when `None`) and whose earlier record lies
/// inside the slotting window. Output is ordered by object token, then time.
pub fn build_quadruples(
    records: &[Record],
    slotting: &TimeSlotting,
    tz_offset_minutes: i32,
    max_gap_seconds: Option<i64>,
) -> Vec<TokenQuadruple> {
    let mut by_object: BTreeMap<&str, Vec<&Record>> = BTreeMap::new();
    for r in records {
        by_object.entry(r.object_id.as_str()).or_default().push(r);
    }
    let mut out = Vec::new();
    for (object, mut recs) in by_object {
        recs.sort_by(|a, b| {
            a.timestamp
                .cmp(&b.timestamp)
                .then_with(|| a.location_id.cmp(&b.location_id))
        });
        for pair in recs.windows(2) {
            let (from, to) = (pair[0], pair[1]);
            if max_gap_seconds.is_some_and(|g| to.timestamp - from.timestamp > g) {
                continue;
            }
            if let Some(slot) = slotting.slot_of(from.timestamp, tz_offset_minutes) {
                out.push(TokenQuadruple::new(
                    object,
                    slot,
                    &from.location_id,
                    &to.location_id,
                ));
            }
        }
    }
    out
}

pub fn drop_self_loops(quads: Vec<TokenQuadruple>) -> Vec<TokenQuadruple> {
    quads.into_iter().filter(|q| q.current != q.next).collect()
}

/// Keeps quadruples whose `(current, next)` transition occurs at least
/// `threshold` times in the corpus.
pub fn filter_by_transition_frequency(
    quads: Vec<TokenQuadruple>,
    threshold: usize,
) -> Vec<TokenQuadruple> {
    if threshold <= 1 {
        return quads;
    }
    let mut counts: HashMap<(&str, &str), usize> = HashMap::new();
    for q in &quads {
        *counts
            .entry((q.current.as_str(), q.next.as_str()))
            .or_default() += 1;
    }
    let keep: Vec<bool> = quads
        .iter()
        .map(|q| counts[&(q.current.as_str(), q.next.as_str())] >= threshold)
        .collect();
    quads
        .into_iter()
        .zip(keep)
        .filter_map(|(q, k)| k.then_some(q))
        .collect()
}

/// Train/validation/test proportions, e.g. `8:1:1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: u32,
    pub validation: u32,
    pub test: u32,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 8,
            validation: 1,
            test: 1,
        }
    }
}

impl FromStr for SplitRatios {
    type Err = MpeError;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<u32> = s
            .split(':')
            .map(|p| p.trim().parse::<u32>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| MpeError::Config(format!("invalid split '{s}', expected a:b:c")))?;
        match parts[..] {
            [train, validation, test] if train > 0 && validation > 0 && test > 0 => Ok(Self {
                train,
                validation,
                test,
            }),
            _ => Err(MpeError::Config(format!(
                "invalid split '{s}', expected three positive integers a:b:c"
            ))),
        }
    }
}

impl std::fmt::Display for SplitRatios {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}:{}", self.train, self.validation, self.test)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<TokenQuadruple>,
    pub validation: Vec<TokenQuadruple>,
    pub test: Vec<TokenQuadruple>,
}

/// Seeded shuffle then partition. Validation and test sizes are floored;
/// the remainder goes to training.
pub fn split(mut quads: Vec<TokenQuadruple>, ratios: SplitRatios, seed: u64) -> Result<Split> {
    if quads.len() < 3 {
        return Err(MpeError::Data(format!(
            "need at least 3 quadruples to split, got {}",
            quads.len()
        )));
    }
    let mut rng = derived_rng(seed, Purpose::Split);
    quads.shuffle(&mut rng);
    let n = quads.len() as u64;
    let total = u64::from(ratios.train + ratios.validation + ratios.test);
    let n_val = (n * u64::from(ratios.validation) / total) as usize;
    let n_test = (n * u64::from(ratios.test) / total) as usize;
    let n_train = quads.len() - n_val - n_test;
    let test = quads.split_off(n_train + n_val);
    let validation = quads.split_off(n_train);
    Ok(Split {
        train: quads,
        validation,
        test,
    })
}

const QUAD_HEADER: [&str; 4] = ["object", "slot", "current", "next"];

/// Writes the intermediate quadruple file: a header row, then
/// `object,slot,current,next` rows.
pub fn write_quadruples<W: Write>(writer: W, quads: &[TokenQuadruple]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(writer);
    let io = |e: csv::Error| MpeError::Io(e.into());
    w.write_record(QUAD_HEADER).map_err(io)?;
    for q in quads {
        w.write_record([
            q.object.as_str(),
            &q.slot.to_string(),
            q.current.as_str(),
            q.next.as_str(),
        ])
        .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_quadruples<R: Read>(reader: R) -> Result<Vec<TokenQuadruple>> {
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
        if i == 0 && row.get(1) == Some("slot") {
            continue;
        }
        let err = |message: String| MpeError::Parse { line, message };
        if row.len() != 4 {
            return Err(err(format!("expected 4 fields, found {}", row.len())));
        }
        let slot = row[1]
            .parse::<u32>()
            .map_err(|_| err(format!("invalid slot '{}'", &row[1])))?;
        if row[0].is_empty() || row[2].is_empty() || row[3].is_empty() {
            return Err(err("empty token".into()));
        }
        out.push(TokenQuadruple::new(&row[0], slot, &row[2], &row[3]));
    }
    Ok(out)
}
