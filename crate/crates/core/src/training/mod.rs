//! Base training curriculum and ensemble self-training rounds.

mod ensemble;
mod examples;
mod phase;

pub use ensemble::{
    generate_pseudo_parallel, run_algorithm1, run_matched_single_baseline, run_round, select_best, select_best_model,
    train_on_pseudo, DirectionScores, Member, ModelPool, PseudoPair, PseudoParallelSet, RoundMetrics, RoundReport,
    RoundsConfig, Validation,
};
pub use examples::{
    make_bt_example, make_mono_example, make_pair_example, make_random_pair_example, Provenance, TrainingExample,
};
pub use phase::{run_phase, DirectionSchedule, DirectionSet, Phase, PhaseConfig, PhaseReport, TokenCorpora};
