//! Evaluation battery: K-means clustering accuracy over repeated seeds,
//! reconstruction metrics, class-centroid distances and a 2-D projection.

mod centroid;
mod fold;
mod kmeans;
mod metrics;
mod project;
mod report;

pub use centroid::{centroid_matrix, CentroidMatrix};
pub use fold::{evaluate_fold, EvalCase, FoldEvaluation};
pub use kmeans::{kmeans, KMEANS_MAX_ITER};
pub use metrics::{rmse_percent, ssim, SSIM_WINDOW};
pub use project::project_2d;
pub use report::{
    clustering_accuracy, evaluate_with_seeds, format_mean_std, write_centroid_csv,
    write_projection_csv, write_report_csv, write_seed_csv, EvalReport, FoldReport, SeedScores,
};
