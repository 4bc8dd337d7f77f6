//! Validation and evaluation protocols: real/fake classification,
//! correlation with per-session scores, group statistics and attention
//! export.

pub mod attention;
pub mod realfake;
pub mod stats;

pub use attention::{column_mass, export_attention, render_heatmap, AttentionDescriptor};
pub use realfake::{mean_and_stddev, real_fake_experiment, RealFakeReport};
pub use stats::{correlate_scores, group_stats, pearson, AgeBand, CorrelationOutcome, CorrelationReport, GroupReport, GroupStat};
