use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::sgd::{
    objective, sgd_step, ExclusionMode, NegativePool, NegativeSampler, TrainingInstance,
};
use super::store::{init_store, ComponentMask, EmbeddingStore, StoreShape};
use crate::error::{MpeError, Result};
use crate::rng::{derived_rng, Purpose};
use crate::trajectory::IndexedQuadruple;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    /// Embedding dimensionality `D`.
    pub dim: usize,
    /// Negatives sampled per quadruple visit, `M`.
    pub negatives: usize,
    pub learning_rate: f64,
    pub regularization: f64,
    /// Number of passes over the training quadruples, `I`.
    pub epochs: usize,
    pub seed: u64,
    /// Stop once the relative change of the objective drops below this
    /// value; 0 disables early stopping.
    pub early_stop_rel_tol: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            dim: 100,
            negatives: 1,
            learning_rate: 1e-3,
            regularization: 1e-3,
            epochs: 10,
            seed: 0,
            early_stop_rel_tol: 0.0,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(MpeError::Config(msg.to_string()));
        if self.dim == 0 {
            return bad("dimensionality must be at least 1");
        }
        if self.negatives == 0 {
            return bad("number of negatives must be at least 1");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning rate must be positive");
        }
        if !(self.regularization.is_finite() && self.regularization >= 0.0) {
            return bad("regularization must be non-negative");
        }
        if self.epochs == 0 {
            return bad("number of epochs must be at least 1");
        }
        if !(self.early_stop_rel_tol.is_finite() && self.early_stop_rel_tol >= 0.0) {
            return bad("early-stop tolerance must be non-negative");
        }
        Ok(())
    }
}

/// Model variant choices that sit outside the numeric hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TrainOptions {
    pub mask: ComponentMask,
    pub shared_locations: bool,
    pub exclusion: ExclusionMode,
    pub negative_pool: NegativePool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    /// 1-based epoch number.
    pub epoch: usize,
    /// Objective after the epoch, evaluated on the training set.
    pub objective: f64,
    /// SGD steps performed during this epoch.
    pub sgd_steps: u64,
    /// Wall-clock seconds spent on the updates of this epoch.
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub store: EmbeddingStore,
    pub epochs: Vec<EpochStats>,
    pub sgd_steps: u64,
    pub stopped_early: bool,
}

/// Stochastic gradient training.
///
/// Per epoch the quadruples are reshuffled; every quadruple draws
/// `negatives` negatives one after another, each followed by an
/// [`sgd_step`]. Initialisation, shuffling, negative draws and objective
/// evaluation use independent streams derived from `hp.seed`, so the result
/// is bit-identical for identical inputs.
pub fn train<F>(
    quads: &[IndexedQuadruple],
    shape: StoreShape,
    hp: &Hyperparams,
    opts: TrainOptions,
    mut on_epoch: F,
) -> Result<TrainOutcome>
where
    F: FnMut(&EpochStats),
{
    hp.validate()?;
    if quads.is_empty() {
        return Err(MpeError::Data("empty training set".into()));
    }
    let mut store = init_store(shape, hp.dim, hp.seed, opts.shared_locations)?;
    let sampler = NegativeSampler::with_pool(shape.next, quads, opts.exclusion, opts.negative_pool);
    let mut shuffle_rng = derived_rng(hp.seed, Purpose::Shuffle);
    let mut negative_rng = derived_rng(hp.seed, Purpose::Negatives);

    let mut order: Vec<usize> = (0..quads.len()).collect();
    let mut epochs = Vec::with_capacity(hp.epochs);
    let mut total_steps = 0u64;
    let mut stopped_early = false;
    for epoch in 1..=hp.epochs {
        let started = Instant::now();
        order.shuffle(&mut shuffle_rng);
        let mut steps = 0u64;
        for &qi in &order {
            let q = &quads[qi];
            for _ in 0..hp.negatives {
                let negative = sampler.sample(&mut negative_rng, q)?;
                sgd_step(
                    &mut store,
                    opts.mask,
                    &TrainingInstance::new(q, negative),
                    hp.learning_rate,
                    hp.regularization,
                )?;
                steps += 1;
            }
        }
        let seconds = started.elapsed().as_secs_f64();
        store.check_finite()?;
        total_steps += steps;

        // The same negatives every epoch, so differences between epochs
        // reflect the parameters and not the draw.
        let value = objective(
            &store,
            opts.mask,
            quads,
            hp.negatives,
            hp.regularization,
            &sampler,
            &mut derived_rng(hp.seed, Purpose::Objective),
        )?;
        let stats = EpochStats {
            epoch,
            objective: value,
            sgd_steps: steps,
            seconds,
        };
        on_epoch(&stats);
        let previous = epochs.last().map(|s: &EpochStats| s.objective);
        epochs.push(stats);
        if let Some(prev) = previous {
            if hp.early_stop_rel_tol > 0.0
                && prev != 0.0
                && ((value - prev) / prev).abs() < hp.early_stop_rel_tol
            {
                stopped_early = epoch < hp.epochs;
                break;
            }
        }
    }
    Ok(TrainOutcome {
        store,
        epochs,
        sgd_steps: total_steps,
        stopped_early,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> (Vec<IndexedQuadruple>, StoreShape) {
        let quads: Vec<IndexedQuadruple> = (0..40)
            .map(|i| IndexedQuadruple {
                object: i % 3,
                slot: i % 2,
                current: i % 4,
                next: (i + 1) % 5,
            })
            .collect();
        let shape = StoreShape {
            objects: 3,
            slots: 2,
            current: 4,
            next: 5,
        };
        (quads, shape)
    }

    fn hp(epochs: usize, negatives: usize) -> Hyperparams {
        Hyperparams {
            dim: 6,
            negatives,
            epochs,
            learning_rate: 0.01,
            ..Default::default()
        }
    }

    #[test]
    fn documented_defaults() {
        let d = Hyperparams::default();
        assert_eq!((d.dim, d.negatives, d.epochs), (100, 1, 10));
        assert_eq!((d.learning_rate, d.regularization), (1e-3, 1e-3));
    }

    #[test]
    fn zero_epochs_rejected() {
        let (q, s) = toy();
        assert!(train(&q, s, &hp(0, 1), TrainOptions::default(), |_| {}).is_err());
        assert!(train(&[], s, &hp(1, 1), TrainOptions::default(), |_| {}).is_err());
    }

    #[test]
    fn step_count_is_epochs_times_negatives_times_quads() {
        let (q, s) = toy();
        let out = train(&q, s, &hp(1, 1), TrainOptions::default(), |_| {}).unwrap();
        assert_eq!(out.sgd_steps, 40);
        let out = train(&q, s, &hp(3, 4), TrainOptions::default(), |_| {}).unwrap();
        assert_eq!(out.sgd_steps, 3 * 4 * 40);
        assert!(out.epochs.iter().all(|e| e.sgd_steps == 160));
    }

    #[test]
    fn deterministic_per_seed() {
        let (q, s) = toy();
        let a = train(&q, s, &hp(2, 2), TrainOptions::default(), |_| {}).unwrap();
        let b = train(&q, s, &hp(2, 2), TrainOptions::default(), |_| {}).unwrap();
        assert_eq!(a.store, b.store);
        let objectives = |o: &TrainOutcome| {
            o.epochs
                .iter()
                .map(|e| e.objective.to_bits())
                .collect::<Vec<_>>()
        };
        assert_eq!(objectives(&a), objectives(&b));
    }

    #[test]
    fn callback_sees_every_epoch() {
        let (q, s) = toy();
        let mut seen = Vec::new();
        train(&q, s, &hp(4, 1), TrainOptions::default(), |e| {
            seen.push(e.epoch)
        })
        .unwrap();
        assert_eq!(seen, vec![1, 2, 3, 4]);
    }

    #[test]
    fn early_stop_with_loose_tolerance() {
        let (q, s) = toy();
        let mut h = hp(10, 1);
        h.early_stop_rel_tol = 10.0;
        let out = train(&q, s, &h, TrainOptions::default(), |_| {}).unwrap();
        assert_eq!(out.epochs.len(), 2);
        assert!(out.stopped_early);
    }

    #[test]
    fn untouched_rows_keep_their_initial_values() {
        let (q, mut s) = toy();
        s.objects = 5; // objects 3 and 4 never appear
        let out = train(&q, s, &hp(2, 1), TrainOptions::default(), |_| {}).unwrap();
        let init = init_store(s, 6, 0, false).unwrap();
        assert_eq!(out.store.objects.row(3), init.objects.row(3));
        assert_eq!(out.store.objects.row(4), init.objects.row(4));
        assert_ne!(out.store.objects.row(0), init.objects.row(0));
    }

    #[test]
    fn divergence_surfaces_as_error() {
        let (q, s) = toy();
        let mut h = hp(50, 1);
        h.learning_rate = 1e6;
        h.regularization = 0.0;
        assert!(matches!(
            train(&q, s, &h, TrainOptions::default(), |_| {}),
            Err(MpeError::NonFinite { .. })
        ));
    }
}
