//! Benchmark scoring, pass@k, token cost and centroid similarity.

pub mod cost;
pub mod passk;
pub mod score;
pub mod similarity;
pub mod suite;

pub use cost::{token_cost_report, CostReport, CostRow};
pub use passk::{pass_at_k, CellError, ScoreCell};
pub use score::{run_label, score_run, PassAtKReport, ProblemScore, ScoreError, REPORTED_K};
pub use similarity::{centroid_similarity, cosine, EmbeddingLine, EmbeddingSet, SimilarityError};
pub use suite::{BenchmarkItem, Family, Suite, SuiteError, SuiteManifest};
