//! Question classification, per-type accuracy, dialogue statistics, the
//! attribute probe and report aggregation.

mod classify;
mod probe;
mod report;
mod stats;

pub use classify::{class_label, tokenize, Lexicon, LEXICON_VERSION};
pub use probe::{
    attribute_probe, macro_f1, per_class_f1, probe_labels, probe_loss, train_probe, GroupResult,
    LinearProbe, ProbeConfig, ProbeExample, ProbeGroup, ProbeScores,
};
pub use report::{compare_reports, deltas_csv, grolla, MetricsReport};
pub use stats::{
    annotation_table, dialogue_stats, parse_annotations, per_type_accuracy, DialogueStats, TypeRow,
};

#[cfg(test)]
mod tests;
