//! Rankings, correlations, clusters, diversity and recipe proposals built
//! from trial metrics.

mod cluster;
mod correlation;
mod diversity;
mod improvement;
mod propose;
mod rank;

pub use cluster::{ward_cluster, ward_exhaustive, ward_objective, ClusterAssignment, ClusterInput, Merge};
pub use correlation::{pearson, pearson_matrix, stat_correlations, CorrelationMatrix};
pub use diversity::{diversity_report, entropy_of_counts, word_entropy, DiversityReport, TokenCount};
pub use improvement::{changes_against_baseline, relative_improvement, relative_improvement_with, MetricNormalizer, TrialResult};
pub use propose::{cluster_representatives, propose_recipes, ProposalStrategy};
pub use rank::{rank_ops, OpRankRow};
