use std::str::FromStr;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{MpeError, Result};
use crate::rng::{derived_rng, Purpose};

/// Dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(MpeError::Data(format!(
                "matrix data has {} values, expected {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Which context components enter the conditional vector. The current
/// location is always used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ComponentMask {
    pub use_object: bool,
    pub use_time: bool,
}

impl ComponentMask {
    pub const FULL: Self = Self {
        use_object: true,
        use_time: true,
    };
    pub const PLAIN: Self = Self {
        use_object: false,
        use_time: false,
    };
    pub const OBJECT: Self = Self {
        use_object: true,
        use_time: false,
    };
    pub const TIME: Self = Self {
        use_object: false,
        use_time: true,
    };

    pub fn name(&self) -> &'static str {
        match (self.use_object, self.use_time) {
            (true, true) => "full",
            (false, false) => "plain",
            (true, false) => "object",
            (false, true) => "time",
        }
    }
}

impl Default for ComponentMask {
    fn default() -> Self {
        Self::FULL
    }
}

impl FromStr for ComponentMask {
    type Err = MpeError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" | "mpe" => Ok(Self::FULL),
            "plain" => Ok(Self::PLAIN),
            "object" => Ok(Self::OBJECT),
            "time" => Ok(Self::TIME),
            other => Err(MpeError::Config(format!(
                "unknown mask '{other}' (expected full, plain, object or time)"
            ))),
        }
    }
}

/// Row counts of the four embedding matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreShape {
    pub objects: usize,
    pub slots: usize,
    pub current: usize,
    pub next: usize,
}

/// Object, time-slot, current-location and next-location embeddings.
///
/// With `shared_locations` the current-location role reads and writes the
/// next-location matrix (one vector per location regardless of role) and
/// `current` has zero rows. This exists only as an ablation.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    pub dim: usize,
    pub objects: Matrix,
    pub slots: Matrix,
    pub current: Matrix,
    pub next: Matrix,
    pub shared_locations: bool,
}

impl EmbeddingStore {
    pub fn zeros(shape: StoreShape, dim: usize, shared_locations: bool) -> Self {
        let current_rows = if shared_locations { 0 } else { shape.current };
        Self {
            dim,
            objects: Matrix::zeros(shape.objects, dim),
            slots: Matrix::zeros(shape.slots, dim),
            current: Matrix::zeros(current_rows, dim),
            next: Matrix::zeros(shape.next, dim),
            shared_locations,
        }
    }

    pub fn shape(&self) -> StoreShape {
        StoreShape {
            objects: self.objects.rows(),
            slots: self.slots.rows(),
            current: self.n_current(),
            next: self.next.rows(),
        }
    }

    pub fn n_current(&self) -> usize {
        if self.shared_locations {
            self.next.rows()
        } else {
            self.current.rows()
        }
    }

    pub fn current_row(&self, i: usize) -> &[f64] {
        if self.shared_locations {
            self.next.row(i)
        } else {
            self.current.row(i)
        }
    }

    pub fn current_row_mut(&mut self, i: usize) -> &mut [f64] {
        if self.shared_locations {
            self.next.row_mut(i)
        } else {
            self.current.row_mut(i)
        }
    }

    pub fn check_finite(&self) -> Result<()> {
        for (name, m) in [
            ("object embeddings", &self.objects),
            ("time-slot embeddings", &self.slots),
            ("current-location embeddings", &self.current),
            ("next-location embeddings", &self.next),
        ] {
            if !m.is_finite() {
                return Err(MpeError::NonFinite { parameter: name });
            }
        }
        Ok(())
    }

    pub(crate) fn check_index(&self, what: &'static str, index: u32, size: usize) -> Result<usize> {
        let i = index as usize;
        if i >= size {
            return Err(MpeError::IndexOutOfRange {
                what,
                index: i,
                size,
            });
        }
        Ok(i)
    }
}

/// Standard deviation of the initial Gaussian, i.e. variance 0.01.
pub const INIT_STD: f64 = 0.1;

/// Draws every entry i.i.d. from N(0, 0.01) with a seed-derived stream, in
/// the fixed order objects, slots, current, next.
pub fn init_store(
    shape: StoreShape,
    dim: usize,
    seed: u64,
    shared_locations: bool,
) -> Result<EmbeddingStore> {
    if dim == 0 {
        return Err(MpeError::Config(
            "embedding dimensionality must be at least 1".into(),
        ));
    }
    if shape.objects == 0 || shape.slots == 0 || shape.current == 0 || shape.next == 0 {
        return Err(MpeError::Data(format!("empty vocabulary in {shape:?}")));
    }
    if shared_locations && shape.current != shape.next {
        return Err(MpeError::Data(
            "shared location embeddings need identical current/next vocabularies".into(),
        ));
    }
    let mut store = EmbeddingStore::zeros(shape, dim, shared_locations);
    let normal = Normal::new(0.0, INIT_STD).expect("valid normal parameters");
    let mut rng = derived_rng(seed, Purpose::Init);
    for m in [
        &mut store.objects,
        &mut store.slots,
        &mut store.current,
        &mut store.next,
    ] {
        for v in m.data.iter_mut() {
            *v = normal.sample(&mut rng);
        }
    }
    Ok(store)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shape(n: usize) -> StoreShape {
        StoreShape {
            objects: n,
            slots: n,
            current: n,
            next: n,
        }
    }

    #[test]
    fn same_seed_same_store() {
        let a = init_store(shape(7), 5, 42, false).unwrap();
        let b = init_store(shape(7), 5, 42, false).unwrap();
        let c = init_store(shape(7), 5, 43, false).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn minimal_shape() {
        let s = init_store(shape(1), 1, 0, false).unwrap();
        for m in [&s.objects, &s.slots, &s.current, &s.next] {
            assert_eq!((m.rows(), m.cols()), (1, 1));
        }
    }

    #[test]
    fn rejects_empty_vocabularies() {
        let mut sh = shape(3);
        sh.slots = 0;
        assert!(init_store(sh, 4, 0, false).is_err());
        assert!(init_store(shape(3), 0, 0, false).is_err());
    }

    #[test]
    fn moments_match_initial_distribution() {
        // 4 * 2500 * 100 = 10^6 entries.
        let s = init_store(shape(2500), 100, 11, false).unwrap();
        let all: Vec<f64> = [&s.objects, &s.slots, &s.current, &s.next]
            .iter()
            .flat_map(|m| m.as_slice().iter().copied())
            .collect();
        assert_eq!(all.len(), 1_000_000);
        let n = all.len() as f64;
        let mean = all.iter().sum::<f64>() / n;
        let var = all.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() < 1e-3, "mean {mean}");
        assert!((var - 0.01).abs() < 0.001, "variance {var}");
    }

    #[test]
    fn shared_store_aliases_current_role() {
        let mut s = init_store(shape(3), 2, 0, true).unwrap();
        assert_eq!(s.current.rows(), 0);
        assert_eq!(s.n_current(), 3);
        s.current_row_mut(1)[0] = 9.0;
        assert_eq!(s.next.row(1)[0], 9.0);
    }

    #[test]
    fn mask_names_round_trip() {
        for m in [
            ComponentMask::FULL,
            ComponentMask::PLAIN,
            ComponentMask::OBJECT,
            ComponentMask::TIME,
        ] {
            assert_eq!(m.name().parse::<ComponentMask>().unwrap(), m);
        }
    }
}
