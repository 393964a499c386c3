//! Training and evaluation orchestration on top of the environment, network
//! and PPO layers.

mod config;
mod evaluate;
mod train;


pub use config::{
    EvalSettings, LessonSpec, RunConfig, DEFAULT_ADVANCE_THRESHOLD, LESSON_LEARNING_RATES, LESSON_STEP_BUDGETS,
};
pub use evaluate::*;
pub use train::{
    train, LessonOutcome, Manifest, TrainSummary, CONFIG_FILE, EVAL_FILE, MANIFEST_FILE, METRICS_FILE,
};
