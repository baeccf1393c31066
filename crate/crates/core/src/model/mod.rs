//! The embedding model: parameter store, scoring, SGD and training.

mod bundle;
mod file;
mod scoring;
mod sgd;
mod store;
mod train;

pub use bundle::{MpeModel, TimeContext};
pub use file::{
    read_model, write_embeddings_tsv, write_model, write_params_sidecar, EmbeddingKind,
    MODEL_MAGIC, MODEL_VERSION,
};
pub use scoring::{conditional_vector, log_sigmoid, probability, score, sigmoid};
pub use sgd::{
    instance_objective, objective, sample_negative, sgd_step, ExclusionMode, NegativePool,
    NegativeSampler, TrainingInstance,
};
pub use store::{init_store, ComponentMask, EmbeddingStore, Matrix, StoreShape, INIT_STD};
pub use train::{train, EpochStats, Hyperparams, TrainOptions, TrainOutcome};
