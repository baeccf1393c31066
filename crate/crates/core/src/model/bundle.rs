use serde::{Deserialize, Serialize};

use super::store::{ComponentMask, EmbeddingStore, StoreShape};
use super::train::{train, EpochStats, Hyperparams, TrainOptions, TrainOutcome};
use crate::error::Result;
use crate::trajectory::{
    build_vocab_and_index, CandidateIndex, TimeSlotting, TokenQuadruple, Vocabulary,
};

/// How raw timestamps in queries map to the slots the model was trained on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeContext {
    pub slotting: TimeSlotting,
    pub tz_offset_minutes: i32,
}

/// A trained model together with everything needed to answer queries.
#[derive(Debug, Clone, PartialEq)]
pub struct MpeModel {
    pub vocab: Vocabulary,
    pub store: EmbeddingStore,
    pub mask: ComponentMask,
    pub candidates: CandidateIndex,
    /// Training frequency of each next location, by next-role index.
    pub next_popularity: Vec<u64>,
    pub time: Option<TimeContext>,
}

impl MpeModel {
    /// Builds vocabularies from `train_quads`, trains, and bundles the result.
    pub fn fit<F>(
        train_quads: &[TokenQuadruple],
        hp: &Hyperparams,
        opts: TrainOptions,
        time: Option<TimeContext>,
        on_epoch: F,
    ) -> Result<(Self, Vec<EpochStats>, u64)>
    where
        F: FnMut(&EpochStats),
    {
        let (vocab, candidates, indexed) =
            build_vocab_and_index(train_quads, opts.shared_locations)?;
        let shape = StoreShape {
            objects: vocab.objects.len(),
            slots: vocab.slots.len(),
            current: vocab.current.len(),
            next: vocab.next.len(),
        };
        let mut next_popularity = vec![0u64; shape.next];
        for q in &indexed {
            next_popularity[q.next as usize] += 1;
        }
        let TrainOutcome {
            store,
            epochs,
            sgd_steps,
            ..
        } = train(&indexed, shape, hp, opts, on_epoch)?;
        let model = MpeModel {
            vocab,
            store,
            mask: opts.mask,
            candidates,
            next_popularity,
            time,
        };
        Ok((model, epochs, sgd_steps))
    }
}
