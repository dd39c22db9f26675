use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::kmeans::{kmeans_plus_plus, squared_distance};
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FcmConfig {
    pub k: usize,
    pub fuzzifier: f64,
    pub max_iter: usize,
    pub tol: f64,
    pub seed: u64,
}

impl FcmConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            fuzzifier: 2.0,
            max_iter: 300,
            tol: 1e-9,
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FcmFit {
    pub centroids: Array2<f64>,
    /// `n × k`, rows sum to one.
    pub membership: Array2<f64>,
    /// `sum_ij u_ij^m ||x_i - c_j||^2`
    pub objective: f64,
    pub history: Vec<f64>,
}

impl FcmFit {
    /// Highest-membership cluster per row.
    pub fn harden(&self) -> Vec<usize> {
        self.membership
            .rows()
            .into_iter()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |best, (j, &u)| {
                        if u > best.1 {
                            (j, u)
                        } else {
                            best
                        }
                    })
                    .0
            })
            .collect()
    }
}

/// Optimal memberships for fixed centroids. A row that coincides with a
/// centroid gets full membership in the first such centroid.
pub fn update_membership(
    data: ArrayView2<f64>,
    centroids: ArrayView2<f64>,
    fuzzifier: f64,
) -> Array2<f64> {
    let k = centroids.nrows();
    let exponent = 1.0 / (fuzzifier - 1.0);
    let mut u = Array2::zeros((data.nrows(), k));
    let mut dist = vec![0.0; k];
    for (x, mut row) in data.rows().into_iter().zip(u.rows_mut()) {
        for (j, c) in centroids.rows().into_iter().enumerate() {
            dist[j] = squared_distance(x, c);
        }
        if let Some(hit) = dist.iter().position(|&d| d == 0.0) {
            row[hit] = 1.0;
            continue;
        }
        // u_j = d_j^{-1/(m-1)} / sum_l d_l^{-1/(m-1)}, scaled by the minimum
        // distance for stability.
        let dmin = dist.iter().copied().fold(f64::INFINITY, f64::min);
        let mut total = 0.0;
        for j in 0..k {
            let w = (dmin / dist[j]).powf(exponent);
            row[j] = w;
            total += w;
        }
        row /= total;
    }
    u
}

pub fn update_fcm_centroids(
    data: ArrayView2<f64>,
    membership: ArrayView2<f64>,
    fuzzifier: f64,
) -> Array2<f64> {
    let weights = membership.mapv(|u| u.powf(fuzzifier));
    let totals = weights.sum_axis(Axis(0));
    let mut centroids = weights.t().dot(&data);
    for (mut row, &t) in centroids.rows_mut().into_iter().zip(totals.iter()) {
        if t > 0.0 {
            row /= t;
        }
    }
    centroids
}

pub fn fcm_objective(
    data: ArrayView2<f64>,
    centroids: ArrayView2<f64>,
    membership: ArrayView2<f64>,
    fuzzifier: f64,
) -> f64 {
    let mut total = 0.0;
    for (x, u) in data.rows().into_iter().zip(membership.rows()) {
        for (c, &uj) in centroids.rows().into_iter().zip(u.iter()) {
            if uj > 0.0 {
                total += uj.powf(fuzzifier) * squared_distance(x, c);
            }
        }
    }
    total
}

/// Fuzzy c-means by alternating membership and centroid updates from a
/// k-means++ seeding.
pub fn fcm_fit(data: ArrayView2<f64>, config: &FcmConfig) -> Result<FcmFit> {
    let FcmConfig {
        k,
        fuzzifier: m,
        max_iter,
        tol,
        seed,
    } = *config;
    if k == 0 || data.nrows() < k {
        return Err(Error::Config(format!(
            "{} samples cannot form {k} clusters",
            data.nrows()
        )));
    }
    if !(m > 1.0) {
        return Err(Error::Config(format!("fuzzifier must exceed 1, got {m}")));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("data contains non-finite values".into()));
    }
    let mut rng = rng_from_seed(seed);
    let mut centroids = kmeans_plus_plus(data, k, &mut rng);
    let mut membership = update_membership(data, centroids.view(), m);
    let mut objective = fcm_objective(data, centroids.view(), membership.view(), m);
    let mut history = vec![objective];
    for _ in 0..max_iter {
        centroids = update_fcm_centroids(data, membership.view(), m);
        membership = update_membership(data, centroids.view(), m);
        let next = fcm_objective(data, centroids.view(), membership.view(), m);
        let decrease = objective - next;
        objective = next;
        history.push(objective);
        if decrease <= tol * objective.abs() {
            break;
        }
    }
    Ok(FcmFit {
        centroids,
        membership,
        objective,
        history,
    })
}
