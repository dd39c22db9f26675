//! Sweep execution over (method, p, rate, seed) cells and result export.
//!
//! Output layout under the configured directory:
//! `metrics.csv`, `runs/<id>.json`, `models/<id>.json` and, on request,
//! `embeddings/<id>.csv`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, PartitionScheme};
use crate::data::{load_dataset, LabeledDataset};
use crate::dcn::DcnCheckpoint;
use crate::error::{Error, Result};
use crate::federation::{
    apply_disconnection, partition, run_method, toy_partition, FederatedRunResult, Method,
};
use crate::nn::checkpoint::{load_json, save_json};
use crate::parallel::{default_workers, parallel_map};
use crate::rng::{derive_seed, derive_seed_str};

/// One point of the sweep. Centralized methods carry no `p` or `rate`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cell {
    pub method: Method,
    pub p: Option<f64>,
    pub rate: Option<f64>,
    pub seed: u64,
}

impl Cell {
    pub fn id(&self) -> String {
        match (self.p, self.rate) {
            (Some(p), Some(rate)) => format!("{}-p{p}-r{rate}-s{}", self.method, self.seed),
            (None, Some(rate)) => format!("{}-r{rate}-s{}", self.method, self.seed),
            _ => format!("{}-s{}", self.method, self.seed),
        }
    }
}

/// Cross product in config order; centralized methods get one cell per seed.
pub fn sweep_cells(config: &ExperimentConfig) -> Vec<Cell> {
    let mut cells = Vec::new();
    for &method in &config.methods {
        if method.is_centralized() {
            cells.extend(config.seeds.iter().map(|&seed| Cell {
                method,
                p: None,
                rate: None,
                seed,
            }));
            continue;
        }
        let ps: Vec<Option<f64>> = match config.partition {
            PartitionScheme::NonIid => config.p.iter().copied().map(Some).collect(),
            PartitionScheme::ToyAdversarial => vec![None],
        };
        for &p in &ps {
            for &rate in &config.rates {
                for &seed in &config.seeds {
                    cells.push(Cell {
                        method,
                        p,
                        rate: Some(rate),
                        seed,
                    });
                }
            }
        }
    }
    cells
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub run_id: String,
    pub dataset: String,
    pub method: Method,
    pub p: Option<f64>,
    pub rate: Option<f64>,
    pub seed: u64,
    pub status: RunStatus,
    pub nmi: Option<f64>,
    pub kappa: Option<f64>,
    pub runtime_s: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricsTable {
    pub rows: Vec<MetricsRow>,
}

impl MetricsTable {
    pub fn all_failed(&self) -> bool {
        self.rows.iter().all(|r| r.status == RunStatus::Failed)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let mut w = csv::Writer::from_path(path)?;
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let rows = r
            .deserialize()
            .collect::<std::result::Result<Vec<MetricsRow>, _>>()?;
        Ok(Self { rows })
    }
}

/// Everything recorded about one cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub id: String,
    pub method: Method,
    pub p: Option<f64>,
    pub rate: Option<f64>,
    pub seed: u64,
    pub status: RunStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub survivors: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<FederatedRunResult>,
    pub config: ExperimentConfig,
}

pub fn runs_dir(output: &Path) -> PathBuf {
    output.join("runs")
}

pub fn models_dir(output: &Path) -> PathBuf {
    output.join("models")
}

pub fn embeddings_dir(output: &Path) -> PathBuf {
    output.join("embeddings")
}

fn load_checked(config: &ExperimentConfig) -> Result<LabeledDataset> {
    let dataset = load_dataset(&config.dataset_source())?;
    if let Some(k) = config.k {
        if k != dataset.k {
            return Err(Error::Config(format!(
                "config says k = {k}, dataset has {} classes",
                dataset.k
            )));
        }
    }
    Ok(dataset)
}

fn run_cell(
    config: &ExperimentConfig,
    dataset: &LabeledDataset,
    cell: &Cell,
) -> (Result<FederatedRunResult>, Option<Vec<usize>>) {
    let m = config.m.unwrap_or(dataset.k);
    let split = match (config.partition, cell.p) {
        _ if cell.method.is_centralized() => partition(dataset, 1, 0.0, 0),
        (PartitionScheme::ToyAdversarial, _) => toy_partition(dataset),
        (PartitionScheme::NonIid, p) => partition(
            dataset,
            m,
            p.unwrap_or(0.0),
            derive_seed_str(cell.seed, "partition"),
        ),
    };
    let split = match split {
        Ok(s) => s,
        Err(e) => return (Err(e), None),
    };
    let survivors = if cell.method.is_centralized() {
        vec![0]
    } else {
        let rate = cell.rate.unwrap_or(0.0);
        match apply_disconnection(
            &split,
            rate,
            derive_seed(derive_seed_str(cell.seed, "failures"), rate.to_bits()),
        ) {
            Ok(s) => s,
            Err(e) => return (Err(e), None),
        }
    };
    let result = run_method(
        cell.method,
        dataset,
        &split,
        &survivors,
        &config.pipeline,
        cell.seed,
    );
    let survivors = (!cell.method.is_centralized()).then_some(survivors);
    (result, survivors)
}

/// Runs every cell, writing per-run records, model checkpoints and the
/// metrics table. Individual failures are recorded, never propagated.
pub fn run_experiment(config: &ExperimentConfig) -> Result<MetricsTable> {
    run_experiment_with_workers(config, default_workers())
}

pub fn run_experiment_with_workers(
    config: &ExperimentConfig,
    workers: usize,
) -> Result<MetricsTable> {
    config.validate()?;
    let dataset = load_checked(config)?;
    let cells = sweep_cells(config);
    if cells.is_empty() {
        return Err(Error::Config("the sweep is empty".into()));
    }
    let out = &config.output;
    for dir in [runs_dir(out), models_dir(out)] {
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    log::info!(
        "{}: {} runs on {} ({} rows)",
        config.name,
        cells.len(),
        dataset.name,
        dataset.len()
    );

    let rows = parallel_map(&cells, workers, |_, cell| -> Result<MetricsRow> {
        let id = cell.id();
        let (result, survivors) = run_cell(config, &dataset, cell);
        let (status, error, result) = match result {
            Ok(r) => (RunStatus::Ok, None, Some(r)),
            Err(e) => {
                log::warn!("run {id} failed: {e}");
                (RunStatus::Failed, Some(e.to_string()), None)
            }
        };
        if let Some(model) = result.as_ref().and_then(|r| r.model.as_ref()) {
            model
                .checkpoint()
                .save(&models_dir(out).join(format!("{id}.json")))?;
        }
        let row = MetricsRow {
            run_id: id.clone(),
            dataset: dataset.name.clone(),
            method: cell.method,
            p: cell.p,
            rate: cell.rate,
            seed: cell.seed,
            status,
            nmi: result.as_ref().map(|r| r.nmi),
            kappa: result.as_ref().map(|r| r.kappa),
            runtime_s: result.as_ref().map_or(0.0, |r| r.seconds),
        };
        if let Some(r) = &result {
            log::info!(
                "{id}: NMI {:.4}, kappa {:.4}, {:.1}s",
                r.nmi,
                r.kappa,
                r.seconds
            );
        }
        let record = RunRecord {
            id: id.clone(),
            method: cell.method,
            p: cell.p,
            rate: cell.rate,
            seed: cell.seed,
            status,
            error,
            survivors,
            result,
            config: config.clone(),
        };
        save_json(&record, &runs_dir(out).join(format!("{id}.json")))?;
        Ok(row)
    });
    let table = MetricsTable {
        rows: rows.into_iter().collect::<Result<Vec<_>>>()?,
    };
    table.write_csv(&out.join("metrics.csv"))?;
    Ok(table)
}

pub fn load_run(results_dir: &Path, run_id: &str) -> Result<RunRecord> {
    let path = runs_dir(results_dir).join(format!("{run_id}.json"));
    if !path.exists() {
        return Err(Error::Config(format!(
            "no run {run_id:?} under {}",
            results_dir.display()
        )));
    }
    load_json(&path)
}

/// Writes `embeddings/<id>.csv` with one row per sample: id, latent
/// coordinates, predicted label, true label. Returns the file path.
pub fn export_embeddings(results_dir: &Path, run_id: &str) -> Result<PathBuf> {
    let record = load_run(results_dir, run_id)?;
    if !record.method.has_encoder() {
        return Err(Error::UnsupportedMethod(format!(
            "{} has no encoder to export",
            record.method
        )));
    }
    let Some(result) = record.result else {
        return Err(Error::InfeasibleRun(format!(
            "run {run_id} failed; nothing to export"
        )));
    };
    let model =
        DcnCheckpoint::load(&models_dir(results_dir).join(format!("{run_id}.json")))?.to_model()?;
    let dataset = load_checked(&record.config)?;
    let codes = model.encode(dataset.features.view())?;
    if result.predicted.len() != dataset.len() {
        return Err(Error::Dimension(
            "stored predictions do not match the dataset".into(),
        ));
    }
    let path = embeddings_dir(results_dir).join(format!("{run_id}.csv"));
    fs::create_dir_all(embeddings_dir(results_dir)).map_err(|e| Error::io(&path, e))?;
    let mut w = csv::Writer::from_path(&path)?;
    let mut header = vec!["id".to_string()];
    header.extend((0..codes.ncols()).map(|j| format!("z{j}")));
    header.extend(["predicted".to_string(), "true".to_string()]);
    w.write_record(&header)?;
    for (i, z) in codes.rows().into_iter().enumerate() {
        let mut record = vec![i.to_string()];
        record.extend(z.iter().map(|v| v.to_string()));
        record.push(result.predicted[i].to_string());
        record.push(dataset.labels[i].to_string());
        w.write_record(&record)?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn fmt_setting(p: Option<f64>, rate: Option<f64>) -> String {
    match (p, rate) {
        (None, None) => "centralized".to_string(),
        (Some(p), Some(r)) => format!("p={p} rate={r}"),
        (None, Some(r)) => format!("toy rate={r}"),
        (Some(p), None) => format!("p={p}"),
    }
}

/// Method-by-setting matrices of mean ± sd NMI and kappa over seeds.
pub fn report(results_dir: &Path) -> Result<String> {
    let table = MetricsTable::read_csv(&results_dir.join("metrics.csv"))?;
    type Key = (String, u64, u64);
    let mut settings: Vec<(Option<f64>, Option<f64>)> = Vec::new();
    let mut cells: BTreeMap<(Method, Key), (Vec<f64>, Vec<f64>, usize)> = BTreeMap::new();
    let key_of = |p: Option<f64>, r: Option<f64>| -> Key {
        (
            fmt_setting(p, r),
            p.map_or(0, f64::to_bits),
            r.map_or(0, f64::to_bits),
        )
    };
    for row in &table.rows {
        if !settings.contains(&(row.p, row.rate)) {
            settings.push((row.p, row.rate));
        }
        let entry = cells
            .entry((row.method, key_of(row.p, row.rate)))
            .or_default();
        match (row.status, row.nmi, row.kappa) {
            (RunStatus::Ok, Some(n), Some(k)) => {
                entry.0.push(n);
                entry.1.push(k);
            }
            _ => entry.2 += 1,
        }
    }
    settings.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let methods: Vec<Method> = Method::ALL
        .into_iter()
        .filter(|m| table.rows.iter().any(|r| r.method == *m))
        .collect();

    let mut out = String::new();
    for (title, pick) in [("NMI", 0usize), ("kappa", 1usize)] {
        let _ = writeln!(out, "{title} (mean ± sd over seeds)");
        let _ = write!(out, "{:<14}", "method");
        for &(p, r) in &settings {
            let _ = write!(out, " | {:>22}", fmt_setting(p, r));
        }
        out.push('\n');
        for &method in &methods {
            let _ = write!(out, "{:<14}", method.as_str());
            for &(p, r) in &settings {
                let text = match cells.get(&(method, key_of(p, r))) {
                    None => "-".to_string(),
                    Some((nmis, kappas, failed)) => {
                        let values = if pick == 0 { nmis } else { kappas };
                        let mut t = if values.is_empty() {
                            "failed".to_string()
                        } else {
                            let (m, s) = mean_sd(values);
                            format!("{m:.4} ± {s:.4}")
                        };
                        if *failed > 0 && !values.is_empty() {
                            t.push_str(&format!(" ({failed}x)"));
                        }
                        t
                    }
                };
                let _ = write!(out, " | {text:>22}");
            }
            out.push('\n');
        }
        out.push('\n');
    }
    let failed = table
        .rows
        .iter()
        .filter(|r| r.status == RunStatus::Failed)
        .count();
    let _ = writeln!(out, "{} runs, {failed} failed", table.rows.len());
    Ok(out)
}
