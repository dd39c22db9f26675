//! Federated simulation: non-IID partitioning, device failures, the one-round
//! GAN-synthesis pipeline and the centroid-upload baselines.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use ndarray::{concatenate, Array2, ArrayView2, Axis};
use rand::seq::index::sample;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::clustering::{assign_nearest, fcm_fit, kappa, kmeans_fit, nmi, FcmConfig, KMeansConfig};
use crate::data::LabeledDataset;
use crate::dcn::{DcnConfig, DcnModel};
use crate::error::{Error, Result};
use crate::gan::{GanConfig, GanModel};
use crate::parallel::{default_workers, parallel_map};
use crate::privacy::{privacy_report, ClientSampleStats, PrivacyReport, DEFAULT_RATIO_CEILING};
use crate::rng::{derive_seed, derive_seed_str, rng_from_seed};
use crate::DataMatrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FederatedPartition {
    /// Dataset row indices held by each client, ascending.
    pub clients: Vec<Vec<usize>>,
    /// Non-IID level; `None` for hand-built splits.
    pub p: Option<f64>,
    pub seed: u64,
}

impl FederatedPartition {
    pub fn m(&self) -> usize {
        self.clients.len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.clients.iter().map(Vec::len).collect()
    }

    /// True when the client lists are disjoint and cover `0..n`.
    pub fn is_exact_cover(&self, n: usize) -> bool {
        let mut seen = vec![false; n];
        for &i in self.clients.iter().flatten() {
            if i >= n || seen[i] {
                return false;
            }
            seen[i] = true;
        }
        seen.into_iter().all(|s| s)
    }
}

/// Splits the dataset over `m` clients. Client `i` owns cluster `i mod k`:
/// it receives `floor(p * s_i)` rows drawn from that cluster and the rest
/// from the shuffled pool of rows left over after every client has drawn.
///
/// With `m == k`, `s_i` is the size of cluster `i`, so `p = 1` gives every
/// client exactly one cluster. Otherwise sizes are balanced, `n / m` each.
pub fn partition(
    dataset: &LabeledDataset,
    m: usize,
    p: f64,
    seed: u64,
) -> Result<FederatedPartition> {
    let n = dataset.len();
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Config(format!(
            "non-IID level p must lie in [0, 1], got {p}"
        )));
    }
    if m == 0 || m > n {
        return Err(Error::Config(format!(
            "client count must lie in 1..={n}, got {m}"
        )));
    }
    let k = dataset.k;
    let mut rng = rng_from_seed(seed);
    let mut members = dataset.class_members();
    for class in &mut members {
        class.shuffle(&mut rng);
    }
    let sizes: Vec<usize> = if m == k {
        members.iter().map(Vec::len).collect()
    } else {
        (0..m).map(|i| n / m + usize::from(i < n % m)).collect()
    };
    let mut cursor = vec![0usize; k];
    let mut clients: Vec<Vec<usize>> = Vec::with_capacity(m);
    for (i, &size) in sizes.iter().enumerate() {
        let own = i % k;
        let take = (p * size as f64).floor() as usize;
        let available = members[own].len() - cursor[own];
        if take > available {
            return Err(Error::PartitionInfeasible(format!(
                "client {i} needs {take} rows of cluster {own}, only {available} remain"
            )));
        }
        clients.push(members[own][cursor[own]..cursor[own] + take].to_vec());
        cursor[own] += take;
    }
    let mut pool: Vec<usize> = members
        .iter()
        .zip(&cursor)
        .flat_map(|(c, &used)| c[used..].iter().copied())
        .collect();
    pool.shuffle(&mut rng);
    let mut pool = pool.into_iter();
    for (client, &size) in clients.iter_mut().zip(&sizes) {
        let missing = size - client.len();
        client.extend(pool.by_ref().take(missing));
        client.sort_unstable();
    }
    debug_assert!(pool.next().is_none());
    Ok(FederatedPartition {
        clients,
        p: Some(p),
        seed,
    })
}

/// Two-client split in which each client's local 2-means prefers to cut
/// along the long axis of the clusters. Client 0 receives every row whose
/// first feature lies more than one class standard deviation from its class
/// mean (the tails of each class); client 1 receives the cores.
pub fn toy_partition(dataset: &LabeledDataset) -> Result<FederatedPartition> {
    let mut clients = vec![Vec::new(), Vec::new()];
    for class in dataset.class_members() {
        let values: Vec<f64> = class.iter().map(|&i| dataset.features[[i, 0]]).collect();
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let sd =
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / values.len() as f64).sqrt();
        for (&i, v) in class.iter().zip(&values) {
            clients[usize::from((v - mean).abs() <= sd)].push(i);
        }
    }
    if clients.iter().any(Vec::is_empty) {
        return Err(Error::PartitionInfeasible(
            "adversarial split left a client empty".into(),
        ));
    }
    for c in &mut clients {
        c.sort_unstable();
    }
    Ok(FederatedPartition {
        clients,
        p: None,
        seed: 0,
    })
}

/// Marks `floor(rate * m)` clients, chosen uniformly, as failed and returns
/// the surviving client ids in ascending order.
pub fn apply_disconnection(
    partition: &FederatedPartition,
    rate: f64,
    seed: u64,
) -> Result<Vec<usize>> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Config(format!(
            "disconnection rate must lie in [0, 1), got {rate}"
        )));
    }
    let m = partition.m();
    let failed_count = (rate * m as f64).floor() as usize;
    let mut rng = rng_from_seed(seed);
    let failed: HashSet<usize> = sample(&mut rng, m, failed_count).into_iter().collect();
    let survivors: Vec<usize> = (0..m).filter(|i| !failed.contains(i)).collect();
    if survivors.is_empty() {
        return Err(Error::InfeasibleRun("every client failed".into()));
    }
    Ok(survivors)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Kmeans,
    Fcm,
    Dcn,
    Kfed,
    Ffcm,
    Ppfcgan,
    PpfcganSeq,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Kmeans,
        Method::Fcm,
        Method::Dcn,
        Method::Kfed,
        Method::Ffcm,
        Method::Ppfcgan,
        Method::PpfcganSeq,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Kmeans => "kmeans",
            Method::Fcm => "fcm",
            Method::Dcn => "dcn",
            Method::Kfed => "kfed",
            Method::Ffcm => "ffcm",
            Method::Ppfcgan => "ppfcgan",
            Method::PpfcganSeq => "ppfcgan_seq",
        }
    }

    /// Runs on the pooled data and ignores partitions and failures.
    pub fn is_centralized(self) -> bool {
        matches!(self, Method::Kmeans | Method::Fcm | Method::Dcn)
    }

    /// Produces an encoder whose codes can be exported.
    pub fn has_encoder(self) -> bool {
        matches!(self, Method::Dcn | Method::Ppfcgan | Method::PpfcganSeq)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::UnsupportedMethod(s.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub gan: GanConfig,
    pub dcn: DcnConfig,
    pub kmeans_restarts: usize,
    /// Local centroid count for the centroid-upload baselines; `k` if unset.
    pub local_k: Option<usize>,
    pub fuzzifier: f64,
    /// Synthetic rows generated per local row.
    pub synthetic_ratio: f64,
    pub ratio_ceiling: f64,
    /// Threads for the client phase; 0 reads the environment.
    pub workers: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            gan: GanConfig::default(),
            dcn: DcnConfig::default(),
            kmeans_restarts: 10,
            local_k: None,
            fuzzifier: 2.0,
            synthetic_ratio: 1.0,
            ratio_ceiling: DEFAULT_RATIO_CEILING,
            workers: 1,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.gan.validate()?;
        self.dcn.validate()?;
        if self.kmeans_restarts == 0 {
            return Err(Error::Config("kmeans_restarts must be positive".into()));
        }
        if self.local_k == Some(0) {
            return Err(Error::Config("local_k must be positive".into()));
        }
        if !(self.fuzzifier > 1.0) {
            return Err(Error::Config(format!(
                "fuzzifier must exceed 1, got {}",
                self.fuzzifier
            )));
        }
        if !(self.synthetic_ratio >= 0.0 && self.synthetic_ratio.is_finite()) {
            return Err(Error::Config(format!(
                "synthetic_ratio must be non-negative, got {}",
                self.synthetic_ratio
            )));
        }
        if !(self.ratio_ceiling >= 0.0) {
            return Err(Error::Config(format!(
                "ratio_ceiling must be non-negative, got {}",
                self.ratio_ceiling
            )));
        }
        Ok(())
    }

    fn client_workers(&self) -> usize {
        if self.workers == 0 {
            default_workers()
        } else {
            self.workers
        }
    }

    fn kmeans(&self, k: usize, seed: u64) -> KMeansConfig {
        KMeansConfig {
            restarts: self.kmeans_restarts,
            ..KMeansConfig::new(k, seed)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClientStatus {
    Trained,
    /// Disconnected before the round.
    Failed,
    /// Local training diverged.
    Aborted,
    /// Shard unusable for the local method.
    Skipped,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClientReport {
    pub client_id: usize,
    pub status: ClientStatus,
    pub local_count: usize,
    /// Rows sent to the server: synthetic samples or centroids.
    pub uploaded_rows: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Data-flow record of one federated round.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ProtocolAudit {
    /// Client-to-server transfers per client.
    pub uploads: Vec<usize>,
    /// Server-to-client transfers per client.
    pub downloads: Vec<usize>,
    /// Rows in the server's training buffer.
    pub server_rows: usize,
    /// Server rows bit-identical to some real dataset row.
    pub leaked_rows: usize,
}

impl ProtocolAudit {
    fn one_round(
        m: usize,
        clients: &[ClientReport],
        server: ArrayView2<f64>,
        real: ArrayView2<f64>,
    ) -> Self {
        let mut uploads = vec![0; m];
        for c in clients.iter().filter(|c| c.status == ClientStatus::Trained) {
            uploads[c.client_id] += 1;
        }
        Self {
            uploads,
            downloads: vec![1; m],
            server_rows: server.nrows(),
            leaked_rows: count_leaks(server, real),
        }
    }
}

fn fingerprint(row: ndarray::ArrayView1<f64>) -> Vec<u64> {
    row.iter().map(|v| v.to_bits()).collect()
}

/// Number of rows of `server` that appear verbatim in `real`.
pub fn count_leaks(server: ArrayView2<f64>, real: ArrayView2<f64>) -> usize {
    let tagged: HashSet<Vec<u64>> = real.rows().into_iter().map(fingerprint).collect();
    server
        .rows()
        .into_iter()
        .filter(|r| tagged.contains(&fingerprint(*r)))
        .count()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FederatedRunResult {
    pub method: Method,
    pub seed: u64,
    pub predicted: Vec<usize>,
    pub nmi: f64,
    pub kappa: f64,
    pub clients: Vec<ClientReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub privacy: Option<PrivacyReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audit: Option<ProtocolAudit>,
    pub seconds: f64,
    /// Trained encoder and centroids for DCN-bearing methods.
    #[serde(skip)]
    pub model: Option<DcnModel>,
    /// Server training buffer of the synthesis pipeline.
    #[serde(skip)]
    pub synthetic: Option<DataMatrix>,
}

impl FederatedRunResult {
    fn scored(
        method: Method,
        seed: u64,
        dataset: &LabeledDataset,
        predicted: Vec<usize>,
        start: Instant,
    ) -> Result<Self> {
        Ok(Self {
            method,
            seed,
            nmi: nmi(&predicted, &dataset.labels)?,
            kappa: kappa(&predicted, &dataset.labels, dataset.k)?,
            predicted,
            clients: Vec::new(),
            privacy: None,
            audit: None,
            seconds: start.elapsed().as_secs_f64(),
            model: None,
            synthetic: None,
        })
    }
}

fn failed_reports(partition: &FederatedPartition, survivors: &[usize]) -> Vec<ClientReport> {
    let alive: HashSet<usize> = survivors.iter().copied().collect();
    (0..partition.m())
        .filter(|i| !alive.contains(i))
        .map(|i| ClientReport {
            client_id: i,
            status: ClientStatus::Failed,
            local_count: partition.clients[i].len(),
            uploaded_rows: 0,
            note: None,
        })
        .collect()
}

fn check_survivors(partition: &FederatedPartition, survivors: &[usize]) -> Result<()> {
    if survivors.is_empty() {
        return Err(Error::InfeasibleRun("no surviving clients".into()));
    }
    if let Some(&bad) = survivors.iter().find(|&&i| i >= partition.m()) {
        return Err(Error::Config(format!(
            "survivor {bad} is not a client of the partition"
        )));
    }
    Ok(())
}

/// Output of the client phase of the synthesis pipeline.
#[derive(Clone, Debug, PartialEq)]
pub struct Synthesis {
    /// Generated rows merged in client-id order.
    pub pool: DataMatrix,
    /// Survivors only, in client-id order.
    pub clients: Vec<ClientReport>,
}

/// Each surviving client trains a GAN on its shard and generates
/// `synthetic_ratio * n_i` rows; the server concatenates them.
pub fn synthesize(
    dataset: &LabeledDataset,
    partition: &FederatedPartition,
    survivors: &[usize],
    config: &PipelineConfig,
    seed: u64,
) -> Result<Synthesis> {
    check_survivors(partition, survivors)?;
    let base = derive_seed_str(seed, "gan");
    let outcomes = parallel_map(survivors, config.client_workers(), |_, &client| {
        let shard = dataset.rows(&partition.clients[client]);
        let client_seed = derive_seed(base, client as u64);
        let count = (config.synthetic_ratio * shard.nrows() as f64).round() as usize;
        let generated = GanModel::new(
            dataset.dim(),
            dataset.k,
            config.gan.clone(),
            derive_seed(client_seed, 0),
        )
        .and_then(|mut gan| {
            gan.train(shard.view(), derive_seed(client_seed, 1))?;
            gan.generate(count, derive_seed(client_seed, 2))
        })
        .and_then(|rows| {
            if rows.iter().all(|v| v.is_finite()) {
                Ok(rows)
            } else {
                Err(Error::Divergence {
                    epoch: config.gan.epochs,
                    what: "non-finite synthetic rows".into(),
                })
            }
        });
        (client, shard.nrows(), generated)
    });
    let mut pieces = Vec::new();
    let mut clients = Vec::new();
    for (client, local_count, generated) in outcomes {
        let (status, uploaded_rows, note) = match generated {
            Ok(rows) => {
                let uploaded = rows.nrows();
                pieces.push(rows);
                (ClientStatus::Trained, uploaded, None)
            }
            Err(e @ Error::Divergence { .. }) => {
                log::warn!("client {client}: {e}");
                (ClientStatus::Aborted, 0, Some(e.to_string()))
            }
            Err(e) => {
                log::warn!("client {client} skipped: {e}");
                (ClientStatus::Skipped, 0, Some(e.to_string()))
            }
        };
        clients.push(ClientReport {
            client_id: client,
            status,
            local_count,
            uploaded_rows,
            note,
        });
    }
    if pieces.iter().map(|p| p.nrows()).sum::<usize>() == 0 {
        return Err(Error::InfeasibleRun(
            "no client produced synthetic data".into(),
        ));
    }
    let views: Vec<_> = pieces.iter().map(|p| p.view()).collect();
    let pool = concatenate(Axis(0), &views).map_err(|e| Error::Internal(e.to_string()))?;
    Ok(Synthesis { pool, clients })
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum ServerPhase {
    Joint,
    Sequential,
}

fn run_synthesis_pipeline(
    method: Method,
    phase: ServerPhase,
    dataset: &LabeledDataset,
    partition: &FederatedPartition,
    survivors: &[usize],
    config: &PipelineConfig,
    seed: u64,
) -> Result<FederatedRunResult> {
    config.validate()?;
    let start = Instant::now();
    let synthesis = synthesize(dataset, partition, survivors, config, seed)?;
    let pool = synthesis.pool;
    if pool.nrows() < dataset.k.max(2) {
        return Err(Error::InfeasibleRun(format!(
            "only {} synthetic rows reached the server",
            pool.nrows()
        )));
    }

    let server_seed = derive_seed_str(seed, "server");
    let mut model = DcnModel::new(
        dataset.dim(),
        dataset.k,
        config.dcn.clone(),
        derive_seed(server_seed, 0),
    )?;
    match phase {
        ServerPhase::Joint => {
            model.fit(pool.view(), derive_seed(server_seed, 1))?;
        }
        ServerPhase::Sequential => {
            model.pretrain(pool.view(), derive_seed(derive_seed(server_seed, 1), 0))?;
            let codes = model.encode(pool.view())?;
            let fit = kmeans_fit(
                codes.view(),
                &config.kmeans(dataset.k, derive_seed(server_seed, 2)),
            )?;
            model.centroids = fit.centroids;
        }
    }

    // Broadcast: every client labels its own rows with the encoder and centroids.
    let mut predicted = vec![0usize; dataset.len()];
    for rows in &partition.clients {
        let labels = model.assign(dataset.rows(rows).view())?;
        for (&i, l) in rows.iter().zip(labels) {
            predicted[i] = l;
        }
    }

    let mut clients = synthesis.clients;
    clients.extend(failed_reports(partition, survivors));
    clients.sort_by_key(|c| c.client_id);
    let stats: Vec<ClientSampleStats> = clients
        .iter()
        .filter(|c| c.status == ClientStatus::Trained)
        .map(|c| ClientSampleStats {
            client_id: c.client_id,
            local_count: c.local_count,
            shared_count: c.uploaded_rows,
        })
        .collect();
    let audit = ProtocolAudit::one_round(
        partition.m(),
        &clients,
        pool.view(),
        dataset.features.view(),
    );
    let mut result = FederatedRunResult::scored(method, seed, dataset, predicted, start)?;
    result.privacy = Some(privacy_report(&stats, config.ratio_ceiling)?);
    result.audit = Some(audit);
    result.clients = clients;
    result.model = Some(model);
    result.synthetic = Some(pool);
    result.seconds = start.elapsed().as_secs_f64();
    Ok(result)
}

/// Local GANs, pooled synthetic data, server-side deep clustering network,
/// broadcast encoder and centroids.
pub fn run_ppfc_gan(
    dataset: &LabeledDataset,
    partition: &FederatedPartition,
    survivors: &[usize],
    config: &PipelineConfig,
    seed: u64,
) -> Result<FederatedRunResult> {
    run_synthesis_pipeline(
        Method::Ppfcgan,
        ServerPhase::Joint,
        dataset,
        partition,
        survivors,
        config,
        seed,
    )
}

/// As [`run_ppfc_gan`], but the server pretrains the autoencoder only and
/// runs K-means once on the codes of the synthetic data.
pub fn run_ppfc_gan_seq(
    dataset: &LabeledDataset,
    partition: &FederatedPartition,
    survivors: &[usize],
    config: &PipelineConfig,
    seed: u64,
) -> Result<FederatedRunResult> {
    run_synthesis_pipeline(
        Method::PpfcganSeq,
        ServerPhase::Sequential,
        dataset,
        partition,
        survivors,
        config,
        seed,
    )
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum LocalClustering {
    KMeans,
    FuzzyCMeans,
}

fn run_centroid_upload(
    method: Method,
    local: LocalClustering,
    dataset: &LabeledDataset,
    partition: &FederatedPartition,
    survivors: &[usize],
    config: &PipelineConfig,
    seed: u64,
) -> Result<FederatedRunResult> {
    config.validate()?;
    check_survivors(partition, survivors)?;
    let start = Instant::now();
    let local_k = config.local_k.unwrap_or(dataset.k);
    let base = derive_seed_str(seed, method.as_str());
    let outcomes = parallel_map(survivors, config.client_workers(), |_, &client| {
        let shard = dataset.rows(&partition.clients[client]);
        if shard.nrows() < local_k {
            return (
                client,
                shard.nrows(),
                Err(Error::Config(format!(
                    "{} rows < k' = {local_k}",
                    shard.nrows()
                ))),
            );
        }
        let client_seed = derive_seed(base, client as u64);
        let centroids = match local {
            LocalClustering::KMeans => {
                kmeans_fit(shard.view(), &config.kmeans(local_k, client_seed)).map(|f| f.centroids)
            }
            LocalClustering::FuzzyCMeans => {
                let fcm = FcmConfig {
                    fuzzifier: config.fuzzifier,
                    ..FcmConfig::new(local_k, client_seed)
                };
                fcm_fit(shard.view(), &fcm).map(|f| f.centroids)
            }
        };
        (client, shard.nrows(), centroids)
    });
    let mut uploads = Vec::new();
    let mut clients = Vec::new();
    for (client, local_count, centroids) in outcomes {
        let report = match centroids {
            Ok(c) => {
                let rows = c.nrows();
                uploads.push(c);
                ClientReport {
                    client_id: client,
                    status: ClientStatus::Trained,
                    local_count,
                    uploaded_rows: rows,
                    note: None,
                }
            }
            Err(e) => {
                log::warn!("client {client} skipped: {e}");
                ClientReport {
                    client_id: client,
                    status: ClientStatus::Skipped,
                    local_count,
                    uploaded_rows: 0,
                    note: Some(e.to_string()),
                }
            }
        };
        clients.push(report);
    }
    let views: Vec<_> = uploads.iter().map(|u| u.view()).collect();
    let pooled = if views.is_empty() {
        Array2::zeros((0, dataset.dim()))
    } else {
        concatenate(Axis(0), &views).map_err(|e| Error::Internal(e.to_string()))?
    };
    if pooled.nrows() < dataset.k {
        return Err(Error::InfeasibleRun(format!(
            "{} uploaded centroids cannot form {} clusters",
            pooled.nrows(),
            dataset.k
        )));
    }
    let global = kmeans_fit(
        pooled.view(),
        &config.kmeans(dataset.k, derive_seed_str(seed, "server")),
    )?;
    let (predicted, _) = assign_nearest(dataset.features.view(), global.centroids.view());

    clients.extend(failed_reports(partition, survivors));
    clients.sort_by_key(|c| c.client_id);
    let audit = ProtocolAudit::one_round(
        partition.m(),
        &clients,
        pooled.view(),
        dataset.features.view(),
    );
    let mut result = FederatedRunResult::scored(method, seed, dataset, predicted, start)?;
    result.clients = clients;
    result.audit = Some(audit);
    Ok(result)
}

/// Local K-means with `k'` centroids per client; the server clusters the
/// uploaded centroids and every row takes its nearest global centroid.
pub fn run_kfed(
    dataset: &LabeledDataset,
    partition: &FederatedPartition,
    survivors: &[usize],
    config: &PipelineConfig,
    seed: u64,
) -> Result<FederatedRunResult> {
    run_centroid_upload(
        Method::Kfed,
        LocalClustering::KMeans,
        dataset,
        partition,
        survivors,
        config,
        seed,
    )
}

/// As [`run_kfed`] with local fuzzy c-means.
pub fn run_ffcm(
    dataset: &LabeledDataset,
    partition: &FederatedPartition,
    survivors: &[usize],
    config: &PipelineConfig,
    seed: u64,
) -> Result<FederatedRunResult> {
    run_centroid_upload(
        Method::Ffcm,
        LocalClustering::FuzzyCMeans,
        dataset,
        partition,
        survivors,
        config,
        seed,
    )
}

pub fn run_centralized(
    method: Method,
    dataset: &LabeledDataset,
    config: &PipelineConfig,
    seed: u64,
) -> Result<FederatedRunResult> {
    config.validate()?;
    let start = Instant::now();
    let x = dataset.features.view();
    let k = dataset.k;
    let mut model = None;
    let predicted = match method {
        Method::Kmeans => {
            kmeans_fit(x, &config.kmeans(k, derive_seed_str(seed, "kmeans")))?.assignment
        }
        Method::Fcm => {
            let fcm = FcmConfig {
                fuzzifier: config.fuzzifier,
                ..FcmConfig::new(k, derive_seed_str(seed, "fcm"))
            };
            fcm_fit(x, &fcm)?.harden()
        }
        Method::Dcn => {
            let server_seed = derive_seed_str(seed, "server");
            let mut dcn = DcnModel::new(
                dataset.dim(),
                k,
                config.dcn.clone(),
                derive_seed(server_seed, 0),
            )?;
            dcn.fit(x, derive_seed(server_seed, 1))?;
            let labels = dcn.assign(x)?;
            model = Some(dcn);
            labels
        }
        other => {
            return Err(Error::UnsupportedMethod(format!(
                "{other} is not a centralized method"
            )))
        }
    };
    let mut result = FederatedRunResult::scored(method, seed, dataset, predicted, start)?;
    result.model = model;
    Ok(result)
}

/// Runs any method; centralized ones ignore `partition` and `survivors`.
pub fn run_method(
    method: Method,
    dataset: &LabeledDataset,
    partition: &FederatedPartition,
    survivors: &[usize],
    config: &PipelineConfig,
    seed: u64,
) -> Result<FederatedRunResult> {
    match method {
        Method::Kmeans | Method::Fcm | Method::Dcn => {
            run_centralized(method, dataset, config, seed)
        }
        Method::Kfed => run_kfed(dataset, partition, survivors, config, seed),
        Method::Ffcm => run_ffcm(dataset, partition, survivors, config, seed),
        Method::Ppfcgan => run_ppfc_gan(dataset, partition, survivors, config, seed),
        Method::PpfcganSeq => run_ppfc_gan_seq(dataset, partition, survivors, config, seed),
    }
}
