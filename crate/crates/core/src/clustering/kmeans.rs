use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::index::sample;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed, Rng};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KMeansInit {
    #[default]
    KMeansPlusPlus,
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KMeansConfig {
    pub k: usize,
    #[serde(default)]
    pub init: KMeansInit,
    pub max_iter: usize,
    /// Relative objective decrease below which iteration stops.
    pub tol: f64,
    pub restarts: usize,
    pub seed: u64,
}

impl KMeansConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            init: KMeansInit::KMeansPlusPlus,
            max_iter: 300,
            tol: 1e-10,
            restarts: 10,
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KMeansFit {
    /// `k × d`
    pub centroids: Array2<f64>,
    pub assignment: Vec<usize>,
    /// Sum of squared distances to the assigned centroid.
    pub objective: f64,
    /// Objective after every assignment step of the winning restart.
    pub history: Vec<f64>,
}

#[inline]
pub fn squared_distance(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of and squared distance to the closest centroid; ties go to the
/// lowest index.
#[inline]
pub fn nearest_centroid(point: ArrayView1<f64>, centroids: ArrayView2<f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.rows().into_iter().enumerate() {
        let d = squared_distance(point, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// Nearest-centroid labels for every row plus the resulting objective.
pub fn assign_nearest(data: ArrayView2<f64>, centroids: ArrayView2<f64>) -> (Vec<usize>, f64) {
    let mut objective = 0.0;
    let labels = data
        .rows()
        .into_iter()
        .map(|x| {
            let (j, d) = nearest_centroid(x, centroids);
            objective += d;
            j
        })
        .collect();
    (labels, objective)
}

/// Sum of squared distances of each row to its assigned centroid.
pub fn objective_of(
    data: ArrayView2<f64>,
    centroids: ArrayView2<f64>,
    assignment: &[usize],
) -> f64 {
    data.rows()
        .into_iter()
        .zip(assignment)
        .map(|(x, &j)| squared_distance(x, centroids.row(j)))
        .sum()
}

/// Cluster means. Empty clusters are moved onto the row farthest from its
/// current centroid, and that row is relabelled.
pub fn update_centroids(
    data: ArrayView2<f64>,
    assignment: &mut [usize],
    centroids: &mut Array2<f64>,
) {
    let k = centroids.nrows();
    let mut sums = Array2::<f64>::zeros(centroids.dim());
    let mut counts = vec![0usize; k];
    for (x, &j) in data.rows().into_iter().zip(assignment.iter()) {
        sums.row_mut(j).scaled_add(1.0, &x);
        counts[j] += 1;
    }
    for j in 0..k {
        if counts[j] > 0 {
            let mean = &sums.row(j) / counts[j] as f64;
            centroids.row_mut(j).assign(&mean);
        }
    }
    reseed_empty_clusters(data, assignment, centroids);
}

/// Moves every centroid with no assigned row onto the row farthest from its
/// own centroid (taken only from clusters with more than one member) and
/// relabels that row.
pub fn reseed_empty_clusters(
    data: ArrayView2<f64>,
    assignment: &mut [usize],
    centroids: &mut Array2<f64>,
) {
    let k = centroids.nrows();
    let mut counts = vec![0usize; k];
    for &j in assignment.iter() {
        counts[j] += 1;
    }
    for j in 0..k {
        if counts[j] > 0 {
            continue;
        }
        let mut far = (usize::MAX, -1.0);
        for (i, x) in data.rows().into_iter().enumerate() {
            let owner = assignment[i];
            if counts[owner] <= 1 {
                continue;
            }
            let d = squared_distance(x, centroids.row(owner));
            if d > far.1 {
                far = (i, d);
            }
        }
        if far.0 == usize::MAX {
            continue;
        }
        let i = far.0;
        counts[assignment[i]] -= 1;
        assignment[i] = j;
        counts[j] = 1;
        centroids.row_mut(j).assign(&data.row(i));
    }
}

/// Greedy k-means++ seeding: each new centroid is the best of
/// `2 + ln k` candidates drawn with probability proportional to the squared
/// distance to the nearest chosen centroid.
pub fn kmeans_plus_plus(data: ArrayView2<f64>, k: usize, rng: &mut Rng) -> Array2<f64> {
    let n = data.nrows();
    let trials = 2 + (k as f64).ln().floor() as usize;
    let mut centroids = Array2::zeros((k, data.ncols()));
    let first = rng.random_range(0..n);
    centroids.row_mut(0).assign(&data.row(first));
    let mut dist: Vec<f64> = data
        .rows()
        .into_iter()
        .map(|x| squared_distance(x, data.row(first)))
        .collect();
    for c in 1..k {
        let total: f64 = dist.iter().sum();
        let mut best: Option<(f64, usize, Vec<f64>)> = None;
        for _ in 0..trials {
            let pick = if total > 0.0 {
                let mut target = rng.random::<f64>() * total;
                let mut chosen = n - 1;
                for (i, &d) in dist.iter().enumerate() {
                    if target < d {
                        chosen = i;
                        break;
                    }
                    target -= d;
                }
                chosen
            } else {
                rng.random_range(0..n)
            };
            let candidate: Vec<f64> = data
                .rows()
                .into_iter()
                .zip(&dist)
                .map(|(x, &d)| d.min(squared_distance(x, data.row(pick))))
                .collect();
            let potential: f64 = candidate.iter().sum();
            if best.as_ref().is_none_or(|b| potential < b.0) {
                best = Some((potential, pick, candidate));
            }
        }
        let (_, pick, candidate) = best.expect("at least one trial");
        centroids.row_mut(c).assign(&data.row(pick));
        dist = candidate;
    }
    centroids
}

fn random_init(data: ArrayView2<f64>, k: usize, rng: &mut Rng) -> Array2<f64> {
    let picks = sample(rng, data.nrows(), k);
    data.select(Axis(0), &picks.into_vec())
}

fn validate(data: &ArrayView2<f64>, k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::Config("k must be positive".into()));
    }
    if data.nrows() < k {
        return Err(Error::Config(format!(
            "{} samples cannot form {k} clusters",
            data.nrows()
        )));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("data contains non-finite values".into()));
    }
    Ok(())
}

/// Lloyd iterations from given initial centroids. Stops at an assignment
/// fixpoint, when the relative objective decrease drops to `tol`, or after
/// `max_iter` centroid updates.
pub fn lloyd(
    data: ArrayView2<f64>,
    mut centroids: Array2<f64>,
    max_iter: usize,
    tol: f64,
) -> KMeansFit {
    let (mut assignment, mut objective) = assign_nearest(data, centroids.view());
    let mut history = vec![objective];
    for _ in 0..max_iter {
        update_centroids(data, &mut assignment, &mut centroids);
        let (next, next_objective) = assign_nearest(data, centroids.view());
        let converged = next == assignment;
        let decrease = objective - next_objective;
        assignment = next;
        objective = next_objective;
        history.push(objective);
        if converged || decrease <= tol * objective.abs() {
            break;
        }
    }
    KMeansFit {
        centroids,
        assignment,
        objective,
        history,
    }
}

/// Single-point transfers (Hartigan's rule) until no move lowers the
/// objective: a point leaves cluster `a` for `b` when
/// `n_b / (n_b + 1) * |x - c_b|^2 < n_a / (n_a - 1) * |x - c_a|^2`.
/// Every fixpoint is also a Lloyd fixpoint, but not conversely.
pub fn hartigan_refine(data: ArrayView2<f64>, fit: KMeansFit, max_passes: usize) -> KMeansFit {
    let KMeansFit {
        mut centroids,
        mut assignment,
        mut history,
        ..
    } = fit;
    let k = centroids.nrows();
    let mut counts = vec![0usize; k];
    for &a in &assignment {
        counts[a] += 1;
    }
    for _ in 0..max_passes {
        let mut moved = false;
        for (i, x) in data.rows().into_iter().enumerate() {
            let a = assignment[i];
            if counts[a] <= 1 {
                continue;
            }
            let na = counts[a] as f64;
            let leave = na / (na - 1.0) * squared_distance(x, centroids.row(a));
            let mut best = (leave * (1.0 - 1e-12), a);
            for b in (0..k).filter(|&b| b != a) {
                let nb = counts[b] as f64;
                let join = nb / (nb + 1.0) * squared_distance(x, centroids.row(b));
                if join < best.0 {
                    best = (join, b);
                }
            }
            let b = best.1;
            if b == a {
                continue;
            }
            let nb = counts[b] as f64;
            for (c, &v) in centroids.row_mut(a).iter_mut().zip(x) {
                *c = (na * *c - v) / (na - 1.0);
            }
            for (c, &v) in centroids.row_mut(b).iter_mut().zip(x) {
                *c = (nb * *c + v) / (nb + 1.0);
            }
            counts[a] -= 1;
            counts[b] += 1;
            assignment[i] = b;
            moved = true;
        }
        if !moved {
            break;
        }
    }
    // Recompute means exactly to shed incremental rounding.
    for c in 0..k {
        let members: Vec<usize> = (0..assignment.len())
            .filter(|&i| assignment[i] == c)
            .collect();
        if !members.is_empty() {
            centroids.row_mut(c).assign(
                &data
                    .select(Axis(0), &members)
                    .mean_axis(Axis(0))
                    .expect("non-empty"),
            );
        }
    }
    let objective = objective_of(data, centroids.view(), &assignment);
    history.push(objective);
    KMeansFit {
        centroids,
        assignment,
        objective,
        history,
    }
}

/// Best-of-`restarts` Lloyd K-means, each restart finished with
/// [`hartigan_refine`].
pub fn kmeans_fit(data: ArrayView2<f64>, config: &KMeansConfig) -> Result<KMeansFit> {
    validate(&data, config.k)?;
    let mut best: Option<KMeansFit> = None;
    for restart in 0..config.restarts.max(1) {
        let mut rng = rng_from_seed(derive_seed(config.seed, restart as u64));
        let init = match config.init {
            KMeansInit::KMeansPlusPlus => kmeans_plus_plus(data, config.k, &mut rng),
            KMeansInit::Random => random_init(data, config.k, &mut rng),
        };
        let fit = hartigan_refine(
            data,
            lloyd(data, init, config.max_iter, config.tol),
            config.max_iter,
        );
        if best.as_ref().is_none_or(|b| fit.objective < b.objective) {
            best = Some(fit);
        }
    }
    Ok(best.expect("at least one restart"))
}

pub const BRUTEFORCE_MAX_N: usize = 14;
pub const BRUTEFORCE_MAX_K: usize = 3;

/// Globally optimal K-means partition by enumerating every partition of the
/// rows into exactly `k` non-empty blocks (restricted-growth strings).
pub fn kmeans_bruteforce(data: ArrayView2<f64>, k: usize) -> Result<KMeansFit> {
    validate(&data, k)?;
    let n = data.nrows();
    if n > BRUTEFORCE_MAX_N || k > BRUTEFORCE_MAX_K {
        return Err(Error::Config(format!(
            "brute force limited to n <= {BRUTEFORCE_MAX_N}, k <= {BRUTEFORCE_MAX_K} (got n = {n}, k = {k})"
        )));
    }
    let d = data.ncols();
    let norms: Vec<f64> = data.rows().into_iter().map(|x| x.dot(&x)).collect();

    struct Search<'a> {
        data: ArrayView2<'a, f64>,
        norms: &'a [f64],
        k: usize,
        labels: Vec<usize>,
        sums: Vec<Vec<f64>>,
        sq: Vec<f64>,
        counts: Vec<usize>,
        best: (f64, Vec<usize>),
    }

    impl Search<'_> {
        fn walk(&mut self, i: usize, used: usize) {
            let n = self.labels.len();
            if n - i < self.k - used {
                return;
            }
            if i == n {
                let mut obj = 0.0;
                for c in 0..self.k {
                    let s2: f64 = self.sums[c].iter().map(|v| v * v).sum();
                    obj += self.sq[c] - s2 / self.counts[c] as f64;
                }
                if obj < self.best.0 {
                    self.best = (obj, self.labels.clone());
                }
                return;
            }
            let limit = (used + 1).min(self.k);
            for c in 0..limit {
                self.labels[i] = c;
                for (s, v) in self.sums[c].iter_mut().zip(self.data.row(i)) {
                    *s += v;
                }
                self.sq[c] += self.norms[i];
                self.counts[c] += 1;
                self.walk(i + 1, used.max(c + 1));
                for (s, v) in self.sums[c].iter_mut().zip(self.data.row(i)) {
                    *s -= v;
                }
                self.sq[c] -= self.norms[i];
                self.counts[c] -= 1;
            }
        }
    }

    let mut search = Search {
        data,
        norms: &norms,
        k,
        labels: vec![0; n],
        sums: vec![vec![0.0; d]; k],
        sq: vec![0.0; k],
        counts: vec![0; k],
        best: (f64::INFINITY, Vec::new()),
    };
    search.walk(0, 0);
    let assignment = search.best.1;
    let mut centroids = Array2::zeros((k, d));
    let mut counts = vec![0usize; k];
    for (x, &j) in data.rows().into_iter().zip(&assignment) {
        centroids.row_mut(j).scaled_add(1.0, &x);
        counts[j] += 1;
    }
    for (mut row, &c) in centroids.rows_mut().into_iter().zip(&counts) {
        row /= c as f64;
    }
    let objective = objective_of(data, centroids.view(), &assignment);
    Ok(KMeansFit {
        centroids,
        assignment,
        objective,
        history: vec![objective],
    })
}
