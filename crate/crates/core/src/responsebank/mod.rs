//! Response classes, the manual merge session over clusters, and labeled
//! example extraction.

mod bank;
mod labeled;
mod session;

pub use bank::{auto_bank, class_id_mapping, ClassId, ResponseBank, ResponseClass};
pub use labeled::{
    extract_labeled_examples, load_examples, read_examples, save_examples, write_examples, Extraction,
    LabeledExample,
};
pub use session::{
    load_decision_log, read_decision_log, DecisionSink, FileDecisionLog, MergeAction, MergeDecision,
    MergeSession, QueuedCluster, SessionSummary,
};
