//! Report tables, relevance-ranking statistics and attention export.

mod attention;
mod relevance;
mod table;

pub use attention::{export_attention, AttentionExport};
pub use relevance::{evidence_ranked_first, relevance_rank_metric, RelevanceStats};
pub use table::{make_report, Comparison, EvalReport, ReportRow, ReportSet};
