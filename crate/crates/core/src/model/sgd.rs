use std::collections::{HashMap, HashSet};
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::scoring::{log_sigmoid, sigmoid, squared_distance};
use super::store::{ComponentMask, EmbeddingStore};
use crate::error::{MpeError, Result};
use crate::trajectory::IndexedQuadruple;

/// One positive next location paired with one sampled negative.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrainingInstance {
    pub object: u32,
    pub slot: u32,
    pub current: u32,
    pub next: u32,
    pub negative: u32,
}

impl TrainingInstance {
    pub fn new(q: &IndexedQuadruple, negative: u32) -> Self {
        Self {
            object: q.object,
            slot: q.slot,
            current: q.current,
            next: q.next,
            negative,
        }
    }
}

/// Uniform draw over `0..n_next`, rejection-resampled until it falls outside
/// `excluded`, which must be sorted and duplicate-free.
pub fn sample_negative<R: Rng + ?Sized>(
    rng: &mut R,
    n_next: usize,
    excluded: &[u32],
) -> Result<u32> {
    let in_range = excluded.iter().filter(|&&e| (e as usize) < n_next).count();
    if in_range >= n_next {
        return Err(MpeError::Data(format!(
            "no negative next location available: all {n_next} are observed for this context"
        )));
    }
    loop {
        let m = rng.random_range(0..n_next as u32);
        if excluded.binary_search(&m).is_err() {
            return Ok(m);
        }
    }
}

/// What counts as an "observed" next location when drawing negatives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ExclusionMode {
    /// Every next location seen with the exact `(object, slot, current)` context.
    #[default]
    Context,
    /// Only the positive next location of the instance.
    TrueNext,
}

impl FromStr for ExclusionMode {
    type Err = MpeError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "context" => Ok(Self::Context),
            "true-next" => Ok(Self::TrueNext),
            other => Err(MpeError::Config(format!(
                "unknown negative mode '{other}' (expected context or true-next)"
            ))),
        }
    }
}

/// Where negatives are drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum NegativePool {
    /// The whole next-location vocabulary.
    #[default]
    Vocabulary,
    /// Next locations observed after the instance's current location in
    /// training. Falls back to the vocabulary when every candidate is
    /// excluded.
    Candidates,
}

impl NegativePool {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Vocabulary => "vocabulary",
            Self::Candidates => "candidates",
        }
    }
}

impl FromStr for NegativePool {
    type Err = MpeError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vocabulary" => Ok(Self::Vocabulary),
            "candidates" => Ok(Self::Candidates),
            other => Err(MpeError::Config(format!(
                "unknown negative pool '{other}' (expected vocabulary or candidates)"
            ))),
        }
    }
}

impl ExclusionMode {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Context => "context",
            Self::TrueNext => "true-next",
        }
    }
}

/// Draws negatives for training quadruples.
#[derive(Debug, Clone)]
pub struct NegativeSampler {
    n_next: usize,
    mode: ExclusionMode,
    observed: HashMap<(u32, u32, u32), Vec<u32>>,
    candidates: Option<HashMap<u32, Vec<u32>>>,
}

impl NegativeSampler {
    pub fn new(n_next: usize, quads: &[IndexedQuadruple], mode: ExclusionMode) -> Self {
        Self::with_pool(n_next, quads, mode, NegativePool::Vocabulary)
    }

    pub fn with_pool(
        n_next: usize,
        quads: &[IndexedQuadruple],
        mode: ExclusionMode,
        pool: NegativePool,
    ) -> Self {
        let candidates = (pool == NegativePool::Candidates).then(|| {
            let mut map: HashMap<u32, Vec<u32>> = HashMap::new();
            for q in quads {
                map.entry(q.current).or_default().push(q.next);
            }
            for list in map.values_mut() {
                list.sort_unstable();
                list.dedup();
            }
            map
        });
        let mut observed: HashMap<(u32, u32, u32), Vec<u32>> = HashMap::new();
        if mode == ExclusionMode::Context {
            for q in quads {
                observed
                    .entry((q.object, q.slot, q.current))
                    .or_default()
                    .push(q.next);
            }
            for list in observed.values_mut() {
                list.sort_unstable();
                list.dedup();
            }
        }
        Self {
            n_next,
            mode,
            observed,
            candidates,
        }
    }

    pub fn excluded<'a>(&'a self, q: &'a IndexedQuadruple) -> &'a [u32] {
        match self.mode {
            ExclusionMode::Context => self
                .observed
                .get(&(q.object, q.slot, q.current))
                .map(Vec::as_slice)
                .unwrap_or(std::slice::from_ref(&q.next)),
            ExclusionMode::TrueNext => std::slice::from_ref(&q.next),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, q: &IndexedQuadruple) -> Result<u32> {
        let excluded = self.excluded(q);
        if let Some(list) = self.candidates.as_ref().and_then(|m| m.get(&q.current)) {
            let allowed = || list.iter().filter(|c| excluded.binary_search(c).is_err());
            let n = allowed().count();
            if n > 0 {
                let pick = rng.random_range(0..n);
                return Ok(*allowed().nth(pick).expect("pick below count"));
            }
        }
        sample_negative(rng, self.n_next, excluded)
    }
}

fn finite_or(values: &[f64], parameter: &'static str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(MpeError::NonFinite { parameter })
    }
}

fn add_into(target: &mut [f64], delta: &[f64]) {
    for (t, d) in target.iter_mut().zip(delta) {
        *t += d;
    }
}

/// One stochastic gradient ascent step on
/// `ln σ(z) − λ Σ ‖touched row‖²` with
/// `z = ‖Ln_neg − V‖² − ‖Ln_pos − V‖²`.
///
/// All deltas are computed from the pre-step parameters and then applied, so
/// rows that alias (shared-location stores) receive the sum of their
/// per-role gradients. Masked-off components are neither read nor updated.
/// Returns `z`.
pub fn sgd_step(
    store: &mut EmbeddingStore,
    mask: ComponentMask,
    inst: &TrainingInstance,
    learning_rate: f64,
    regularization: f64,
) -> Result<f64> {
    let o = store.check_index("object", inst.object, store.objects.rows())?;
    let t = store.check_index("time slot", inst.slot, store.slots.rows())?;
    let c = store.check_index("current location", inst.current, store.n_current())?;
    let j = store.check_index("next location", inst.next, store.next.rows())?;
    let m = store.check_index("negative next location", inst.negative, store.next.rows())?;

    let dim = store.dim;
    let mut cond = vec![0.0; dim];
    store.context_into(mask, o, t, c, &mut cond);
    let pos = store.next.row(j);
    let neg = store.next.row(m);

    let z = squared_distance(neg, &cond) - squared_distance(pos, &cond);
    if !z.is_finite() {
        return Err(MpeError::NonFinite { parameter: "z" });
    }
    let g = sigmoid(-z); // 1 - σ(z)
    let step = 2.0 * learning_rate;

    // Shared direction for the three context rows.
    let toward: Vec<f64> = pos.iter().zip(neg).map(|(p, n)| g * (p - n)).collect();
    let context_delta = |row: &[f64]| -> Vec<f64> {
        toward
            .iter()
            .zip(row)
            .map(|(d, x)| step * (d - regularization * x))
            .collect()
    };

    let d_object = mask.use_object.then(|| context_delta(store.objects.row(o)));
    let d_slot = mask.use_time.then(|| context_delta(store.slots.row(t)));
    let d_current = context_delta(store.current_row(c));
    let d_pos: Vec<f64> = cond
        .iter()
        .zip(pos)
        .map(|(v, p)| step * (g * (v - p) - regularization * p))
        .collect();
    let d_neg: Vec<f64> = cond
        .iter()
        .zip(neg)
        .map(|(v, n)| step * (g * (n - v) - regularization * n))
        .collect();

    if let Some(d) = &d_object {
        finite_or(d, "object embedding")?;
    }
    if let Some(d) = &d_slot {
        finite_or(d, "time-slot embedding")?;
    }
    finite_or(&d_current, "current-location embedding")?;
    finite_or(&d_pos, "positive next-location embedding")?;
    finite_or(&d_neg, "negative next-location embedding")?;

    if let Some(d) = &d_object {
        add_into(store.objects.row_mut(o), d);
    }
    if let Some(d) = &d_slot {
        add_into(store.slots.row_mut(t), d);
    }
    add_into(store.current_row_mut(c), &d_current);
    add_into(store.next.row_mut(j), &d_pos);
    add_into(store.next.row_mut(m), &d_neg);
    Ok(z)
}

/// Per-instance objective `ln σ(z) − λ Σ ‖touched row‖²`, the function whose
/// gradient (times the learning rate) [`sgd_step`] applies.
pub fn instance_objective(
    store: &EmbeddingStore,
    mask: ComponentMask,
    inst: &TrainingInstance,
    regularization: f64,
) -> Result<f64> {
    let cond =
        super::scoring::conditional_vector(store, mask, inst.object, inst.slot, inst.current)?;
    let pos = store
        .next
        .row(store.check_index("next location", inst.next, store.next.rows())?);
    let neg = store.next.row(store.check_index(
        "negative next location",
        inst.negative,
        store.next.rows(),
    )?);
    let z = squared_distance(neg, &cond) - squared_distance(pos, &cond);
    let norm = |r: &[f64]| r.iter().map(|x| x * x).sum::<f64>();
    let mut penalty = norm(store.current_row(inst.current as usize)) + norm(pos) + norm(neg);
    if mask.use_object {
        penalty += norm(store.objects.row(inst.object as usize));
    }
    if mask.use_time {
        penalty += norm(store.slots.row(inst.slot as usize));
    }
    Ok(log_sigmoid(z) - regularization * penalty)
}

/// Training objective used for convergence monitoring: for each quadruple
/// `negatives` fresh negatives contribute `ln σ(z)`, and `λ‖row‖²` is
/// subtracted once for every parameter row touched along the way.
pub fn objective<R: Rng + ?Sized>(
    store: &EmbeddingStore,
    mask: ComponentMask,
    quads: &[IndexedQuadruple],
    negatives: usize,
    regularization: f64,
    sampler: &NegativeSampler,
    rng: &mut R,
) -> Result<f64> {
    #[derive(Hash, PartialEq, Eq)]
    enum Row {
        Object(u32),
        Slot(u32),
        Current(u32),
        Next(u32),
    }
    let mut touched: HashSet<Row> = HashSet::new();
    let mut total = 0.0;
    let mut cond = vec![0.0; store.dim];
    for q in quads {
        let o = store.check_index("object", q.object, store.objects.rows())?;
        let t = store.check_index("time slot", q.slot, store.slots.rows())?;
        let c = store.check_index("current location", q.current, store.n_current())?;
        let j = store.check_index("next location", q.next, store.next.rows())?;
        store.context_into(mask, o, t, c, &mut cond);
        let pos_dist = squared_distance(store.next.row(j), &cond);
        for _ in 0..negatives {
            let m = sampler.sample(rng, q)?;
            total += log_sigmoid(squared_distance(store.next.row(m as usize), &cond) - pos_dist);
            touched.insert(Row::Next(m));
        }
        if mask.use_object {
            touched.insert(Row::Object(q.object));
        }
        if mask.use_time {
            touched.insert(Row::Slot(q.slot));
        }
        if store.shared_locations {
            touched.insert(Row::Next(q.current));
        } else {
            touched.insert(Row::Current(q.current));
        }
        touched.insert(Row::Next(q.next));
    }
    if regularization > 0.0 {
        let norm = |r: &[f64]| r.iter().map(|x| x * x).sum::<f64>();
        let penalty: f64 = touched
            .iter()
            .map(|row| match *row {
                Row::Object(i) => norm(store.objects.row(i as usize)),
                Row::Slot(i) => norm(store.slots.row(i as usize)),
                Row::Current(i) => norm(store.current.row(i as usize)),
                Row::Next(i) => norm(store.next.row(i as usize)),
            })
            .sum();
        total -= regularization * penalty;
    }
    Ok(total)
}
