//! Self-play between a questioner policy, an oracle and a guesser, plus gold
//! dialogue synthesis and the modulo-n training schedule.

mod gold;
mod play;
mod schedule;

pub use gold::{consistent_candidates, gold_examples, synthesize_gold};
pub use play::{
    evaluate_gameplay, expected_information_gain, play_game, read_archive, select_question,
    write_archive, Answerer, ArchiveRecord, ArchiveTurn, BeliefSource, GameConfig, GameResult,
    GameplayEval, PolicyKind, QuestionerPolicy,
};
pub use schedule::{modulo_n_schedule, modulo_n_train, Objective, ScheduleEntry};
