//! Classical clustering, a brute-force K-means oracle, and evaluation metrics.

mod fcm;
mod hungarian;
mod kmeans;
pub mod metrics;

pub use fcm::{fcm_fit, fcm_objective, update_fcm_centroids, update_membership, FcmConfig, FcmFit};
pub use hungarian::{hungarian_match, matching_cost};
pub use kmeans::{
    assign_nearest, hartigan_refine, kmeans_bruteforce, kmeans_fit, kmeans_plus_plus, lloyd,
    nearest_centroid, objective_of, reseed_empty_clusters, squared_distance, update_centroids,
    KMeansConfig, KMeansFit, KMeansInit, BRUTEFORCE_MAX_K, BRUTEFORCE_MAX_N,
};
pub use metrics::{cohen_kappa, kappa, nmi};
