//! The three-stage recipe: train teachers, distill students, evaluate.

mod config;
mod eval;
mod sweep;
mod train;

pub use config::{corpus_config_from_toml, LossSection, LrCompare, SweepConfig, TrainConfig};
pub use eval::{decode_all, decode_utterance, dev_per, evaluate, model_name, onset_error, write_stats, Decoded, Evaluation};
pub use sweep::reproduce_tradeoff;
pub use train::{
    distill, logit_gradient, train, train_from, utterance_objective, EpochRecord, LrSchedule, RunLog, TeacherCache,
};
