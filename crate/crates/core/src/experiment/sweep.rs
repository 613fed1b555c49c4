use std::collections::HashMap;
use std::fs;
use std::path::PathBuf;

use rayon::prelude::*;

use super::config::{ExperimentConfig, SeedTuple, Stage};
use super::plot::emit_plots;
use super::report::{sort_rows, write_csv, CsvRow, SUMMARY_LAYER};
use super::snapshot::{save_snapshot, SnapshotMeta};
use crate::analysis::{layerwise_report, RunKey, WdReport};
use crate::data::{DataPaths, Dataset};
use crate::error::{Error, Result};
use crate::nn::{Architecture, ArchitectureName, Network};
use crate::pruning::{prune, Mask, Method};
use crate::train::{train_masked, TrainConfig};
use crate::treatments::{apply_treatment, Treatment, TreatmentConfig};

/// One unmodified control and every treatment compared against it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cell {
    pub method: Method,
    pub sparsity: f64,
    pub seeds: SeedTuple,
}

/// Everything a sweep wrote.
#[derive(Debug)]
pub struct SweepOutcome {
    pub rows: Vec<CsvRow>,
    pub csv_path: PathBuf,
    pub plot_files: Vec<PathBuf>,
    /// Runs whose summary row carries an error.
    pub failed_runs: usize,
}

pub struct Datasets {
    pub train: Option<Dataset>,
    pub test: Option<Dataset>,
}

impl Datasets {
    /// Loads only what the config needs: training data for data-driven
    /// scores or training, test data for training.
    pub fn for_config(config: &ExperimentConfig) -> Result<Self> {
        let paths = DataPaths::new(&config.data_dir);
        let needs_train = config.train || config.methods.iter().any(|m| matches!(m, Method::Snip | Method::Graspabs));
        let (train, test) = match config.network {
            ArchitectureName::Lenet300_100 => (
                needs_train.then(|| paths.mnist_train()).transpose()?,
                config.train.then(|| paths.mnist_test()).transpose()?,
            ),
            ArchitectureName::SmallCnn => (
                needs_train.then(|| paths.cifar10_train()).transpose()?,
                config.train.then(|| paths.cifar10_test()).transpose()?,
            ),
            ArchitectureName::Custom => return Err(Error::InvalidArgument("sweeps need a named network".into())),
        };
        Ok(Self { train, test })
    }
}

pub fn cells(config: &ExperimentConfig) -> Vec<Cell> {
    let mut out = Vec::new();
    for &method in &config.methods {
        for &sparsity in &config.sparsities {
            for seeds in config.seed_tuples() {
                out.push(Cell { method, sparsity, seeds });
            }
        }
    }
    out
}

fn key(config: &ExperimentConfig, cell: &Cell, treatment: Treatment) -> RunKey {
    RunKey {
        network: config.network.to_string(),
        method: cell.method,
        treatment,
        sparsity_ppm: RunKey::sparsity_to_ppm(cell.sparsity),
        init_seed: cell.seeds.init,
        treat_seed: cell.seeds.treat,
        score_seed: cell.seeds.score,
    }
}

fn base_row(config: &ExperimentConfig, cell: &Cell, treatment: Treatment, layer: String) -> CsvRow {
    CsvRow {
        network: config.network.to_string(),
        method: cell.method,
        treatment,
        sparsity: cell.sparsity,
        init_seed: cell.seeds.init,
        treat_seed: cell.seeds.treat,
        score_seed: cell.seeds.score,
        layer,
        wd: None,
        kept_count: None,
        avg_wd: None,
        test_acc: None,
        error: String::new(),
    }
}

fn report_rows(config: &ExperimentConfig, cell: &Cell, treatment: Treatment, report: &WdReport, test_acc: Option<f64>) -> Vec<CsvRow> {
    let mut rows: Vec<CsvRow> = report
        .layers
        .iter()
        .map(|l| CsvRow {
            wd: l.wd,
            kept_count: Some(l.treated_kept),
            error: if l.wd.is_none() { "empty-sample".into() } else { String::new() },
            ..base_row(config, cell, treatment, l.layer.to_string())
        })
        .collect();
    rows.push(CsvRow {
        kept_count: Some(report.layers.iter().map(|l| l.treated_kept).sum()),
        avg_wd: report.mean,
        test_acc,
        ..base_row(config, cell, treatment, SUMMARY_LAYER.into())
    });
    rows
}

fn error_row(config: &ExperimentConfig, cell: &Cell, treatment: Treatment, err: &Error) -> CsvRow {
    CsvRow {
        error: err.to_string(),
        ..base_row(config, cell, treatment, SUMMARY_LAYER.into())
    }
}

struct Trained {
    net: Network,
    acc: Option<f64>,
}

fn train_pair(
    config: &ExperimentConfig,
    data: &Datasets,
    train_set: Option<&Dataset>,
    cell: &Cell,
    net: &Network,
    mask: &Mask,
) -> Result<Trained> {
    let train_set = train_set.ok_or(Error::EmptyDataset)?;
    let tc = TrainConfig {
        data_seed: cell.seeds.data,
        ..config.training.clone()
    };
    let (net, curve) = train_masked(net, mask, train_set, data.test.as_ref(), &tc)?;
    Ok(Trained {
        net,
        acc: curve.final_accuracy(),
    })
}

fn snapshot(config: &ExperimentConfig, cell: &Cell, treatment: Treatment, net: &Network, mask: &Mask) -> Result<()> {
    let k = key(config, cell, treatment);
    let dir = config.out.join("snapshots").join(format!(
        "{}-{}-{}-s{}-i{}-t{}-c{}",
        k.network, k.method, k.treatment, k.sparsity_ppm, k.init_seed, k.treat_seed, k.score_seed
    ));
    let meta = SnapshotMeta {
        method: Some(cell.method),
        treatment: Some(treatment),
        sparsity: Some(cell.sparsity),
        seeds: Some(cell.seeds),
        stage: Some(config.stage),
    };
    save_snapshot(net, mask, &meta, dir)
}

/// Runs one cell: the control is pruned (and trained) once, then every
/// treatment is applied to it and compared.
pub fn run_cell(config: &ExperimentConfig, arch: &Architecture, data: &Datasets, cell: &Cell) -> Vec<CsvRow> {
    log::info!("cell {} s={} seeds={:?}", cell.method, cell.sparsity, cell.seeds);
    let train_set = data.train.as_ref().map(|d| match config.subset {
        Some(n) => d.subset(n, cell.seeds.data),
        None => d.clone(),
    });
    let control = Network::initialize(arch, config.init, cell.seeds.init).and_then(|net| {
        let pc = config.scoring.prune_config(cell.method, cell.sparsity, cell.seeds.score);
        let mask = prune(&net, train_set.as_ref(), &pc)?;
        Ok((net, mask))
    });
    let (net, mask) = match control {
        Ok(pair) => pair,
        Err(e) => return config.treatments.iter().map(|&t| error_row(config, cell, t, &e)).collect(),
    };
    let need_control_training =
        config.train && (config.stage == Stage::PostTrain || config.treatments.contains(&Treatment::Unmodified));
    let control_trained = need_control_training.then(|| train_pair(config, data, train_set.as_ref(), cell, &net, &mask));
    let control_result = || -> Result<&Trained> {
        match &control_trained {
            Some(Ok(c)) => Ok(c),
            Some(Err(e)) => Err(Error::InvalidArgument(format!("control training failed: {e}"))),
            None => Err(Error::InvalidArgument("control was not trained".into())),
        }
    };
    if config.snapshots {
        if let Err(e) = snapshot(config, cell, Treatment::Unmodified, &net, &mask) {
            log::warn!("snapshot failed: {e}");
        }
    }

    let mut rows = Vec::new();
    for &treatment in &config.treatments {
        let result = (|| -> Result<Vec<CsvRow>> {
            let tcfg = TreatmentConfig {
                seed: cell.seeds.treat,
                sparsity: cell.sparsity,
            };
            let (tnet, tmask) = apply_treatment(treatment, &net, &mask, &tcfg)?;
            if config.snapshots && treatment != Treatment::Unmodified {
                snapshot(config, cell, treatment, &tnet, &tmask)?;
            }
            let trained = match (config.train, treatment) {
                (false, _) => None,
                (true, Treatment::Unmodified) => {
                    let c = control_result()?;
                    Some(Trained { net: c.net.clone(), acc: c.acc })
                }
                (true, _) => Some(train_pair(config, data, train_set.as_ref(), cell, &tnet, &tmask)?),
            };
            let report = match (config.stage, &trained) {
                (Stage::PostTrain, Some(t)) => layerwise_report((&control_result()?.net, &mask), (&t.net, &tmask), config.report)?,
                _ => layerwise_report((&net, &mask), (&tnet, &tmask), config.report)?,
            };
            Ok(report_rows(config, cell, treatment, &report, trained.and_then(|t| t.acc)))
        })();
        match result {
            Ok(r) => rows.extend(r),
            Err(e) => rows.push(error_row(config, cell, treatment, &e)),
        }
    }
    rows
}

/// Runs every cell (up to `config.jobs` at a time), writes `results.csv`
/// sorted by run key, the resolved config and, if enabled, plots.
pub fn run_sweep(config: &ExperimentConfig) -> Result<SweepOutcome> {
    config.validate()?;
    let arch = config.network.build()?;
    let data = Datasets::for_config(config)?;
    run_sweep_with(config, &arch, &data)
}

/// [`run_sweep`] with the architecture and data supplied by the caller.
pub fn run_sweep_with(config: &ExperimentConfig, arch: &Architecture, data: &Datasets) -> Result<SweepOutcome> {
    config.validate()?;
    fs::create_dir_all(&config.out)?;
    let cells = cells(config);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    let per_cell: Vec<Vec<CsvRow>> = pool.install(|| cells.par_iter().map(|c| run_cell(config, arch, data, c)).collect());
    let mut rows: Vec<CsvRow> = per_cell.into_iter().flatten().collect();
    sort_rows(&mut rows);

    let csv_path = config.out.join("results.csv");
    write_csv(&rows, &csv_path)?;
    fs::write(config.out.join("config.json"), config.to_json()?)?;
    let failed_runs = rows.iter().filter(|r| r.is_summary() && !r.error.is_empty()).count();
    let plot_files = if config.plots {
        emit_plots(&csv_path, config.out.join("plots"))?.files
    } else {
        Vec::new()
    };
    Ok(SweepOutcome {
        rows,
        csv_path,
        plot_files,
        failed_runs,
    })
}

/// Mean `avg_wd` of the summary rows per `(method, treatment, sparsity)`,
/// over seeds. Rows with errors or no mean are skipped.
pub fn mean_avg_wd(rows: &[CsvRow]) -> HashMap<(Method, Treatment, u32), f64> {
    let mut acc: HashMap<(Method, Treatment, u32), (f64, usize)> = HashMap::new();
    for r in rows.iter().filter(|r| r.is_summary() && r.error.is_empty()) {
        if let Some(v) = r.avg_wd {
            let e = acc.entry((r.method, r.treatment, RunKey::sparsity_to_ppm(r.sparsity))).or_default();
            e.0 += v;
            e.1 += 1;
        }
    }
    acc.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect()
}
