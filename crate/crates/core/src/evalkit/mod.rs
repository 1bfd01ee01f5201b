//! Rollouts, attention probing and report emission.

pub mod plot;
pub mod probe;
pub mod report;
pub mod rollout;

pub use probe::{probe_attention, support_overlap, AttentionDiffMap, SUPPORT_FRACTION};
pub use report::{emit_report, load_metrics, mae_table, DecompositionPanel, ErrorMap, MetricsDocument, ProbeRecord, Report, ReportError, RolloutRecord};
pub use rollout::{rollout, RolloutResult, BLOW_UP};
