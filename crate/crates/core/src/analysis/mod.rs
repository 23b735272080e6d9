//! Metrics, curve alignment, slope statistics, Procrustes shape analysis,
//! parameter embeddings and gradient-norm tables.

pub mod curves;
pub mod embed;
pub mod gradnorm;
pub mod metrics;
pub mod plot;
pub mod procrustes;
pub mod stats;

pub use curves::{relative_curve, relative_to_first, CurvePoint, MetricCurve, RelativeMode, ANCHOR_OBJECTS};
pub use embed::{embed_adapted_params, pca, silhouette, tsne, Embedding, TsneConfig};
pub use gradnorm::{gradient_norm_table, GradNormRow, GradNormTable, NormTrace};
pub use metrics::{mpcpe, mpjpe};
pub use procrustes::{
    aligned_distance, distance_heatmap, gpa, gpa_mean_shapes, group_separation, kabsch, normalize, procrustes_distance,
    svd3, DistanceMatrix, Shape,
};
pub use stats::{ols, slope_difference_test, t_cdf, t_two_sided_p, RegressionFit, SlopeTest};
