use super::store::{ComponentMask, EmbeddingStore};
use crate::error::{MpeError, Result};

/// Numerically stable logistic function.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln σ(z)` without overflow for large |z|.
pub fn log_sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        -(-z).exp().ln_1p()
    } else {
        z - z.exp().ln_1p()
    }
}

pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

impl EmbeddingStore {
    /// Writes the conditional vector into `out` without bounds checks on the
    /// indices beyond slice indexing.
    pub(crate) fn context_into(
        &self,
        mask: ComponentMask,
        object: usize,
        slot: usize,
        current: usize,
        out: &mut [f64],
    ) {
        out.copy_from_slice(self.current_row(current));
        if mask.use_object {
            for (o, v) in out.iter_mut().zip(self.objects.row(object)) {
                *o += v;
            }
        }
        if mask.use_time {
            for (o, v) in out.iter_mut().zip(self.slots.row(slot)) {
                *o += v;
            }
        }
    }

    /// Conditional vector with optional (unseen) object and slot; a missing
    /// component contributes the zero vector.
    pub fn conditional_vector_partial(
        &self,
        mask: ComponentMask,
        object: Option<u32>,
        slot: Option<u32>,
        current: u32,
    ) -> Result<Vec<f64>> {
        let c = self.check_index("current location", current, self.n_current())?;
        let mut v = self.current_row(c).to_vec();
        if let (true, Some(o)) = (mask.use_object, object) {
            let o = self.check_index("object", o, self.objects.rows())?;
            for (x, y) in v.iter_mut().zip(self.objects.row(o)) {
                *x += y;
            }
        }
        if let (true, Some(t)) = (mask.use_time, slot) {
            let t = self.check_index("time slot", t, self.slots.rows())?;
            for (x, y) in v.iter_mut().zip(self.slots.row(t)) {
                *x += y;
            }
        }
        Ok(v)
    }
}

/// Sum of the enabled context rows: object + slot + current location.
pub fn conditional_vector(
    store: &EmbeddingStore,
    mask: ComponentMask,
    object: u32,
    slot: u32,
    current: u32,
) -> Result<Vec<f64>> {
    // Validate masked-off indices too so that callers catch bad data early.
    store.check_index("object", object, store.objects.rows())?;
    store.check_index("time slot", slot, store.slots.rows())?;
    store.conditional_vector_partial(mask, Some(object), Some(slot), current)
}

/// Negative squared distance between a next-location embedding and a
/// conditional vector; larger means more probable.
///
/// Panics if `next` is out of range.
pub fn score(store: &EmbeddingStore, cond: &[f64], next: u32) -> f64 {
    -squared_distance(store.next.row(next as usize), cond)
}

/// Softmax of [`score`] over `candidates`.
pub fn probability(
    store: &EmbeddingStore,
    mask: ComponentMask,
    object: u32,
    slot: u32,
    current: u32,
    candidates: &[u32],
) -> Result<Vec<f64>> {
    if candidates.is_empty() {
        return Err(MpeError::Data("empty candidate set".into()));
    }
    let v = conditional_vector(store, mask, object, slot, current)?;
    let mut scores = Vec::with_capacity(candidates.len());
    for &c in candidates {
        store.check_index("next location", c, store.next.rows())?;
        scores.push(score(store, &v, c));
    }
    Ok(softmax(&scores))
}

pub(crate) fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}
